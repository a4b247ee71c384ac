use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use fedsim::aggregation::{aggregate, predicted_limit};
use fedsim::algorithms::{
    gen_max_local_step, mvr_momentum_update, run, theorem1_max_step, theorem2_hyperparams, GenConfig, MomentumMode,
    Preset, StepSchedule,
};
use fedsim::harness::{csv_string, emit_csv, preset_configs, random_schemes, ExperimentPreset};
use fedsim::local::{make_permutations, mvr_direction, run_local, run_local_mvr, LocalWorkSpec, MomentumState};
use fedsim::problems::{basis, estimate_constants, probe_points, HeterogeneityConstants, Problem, Vector};
use fedsim::rng;
use fedsim::sampling::{
    expected_contribution, general_variance_check, importance_scheme, normalizer_stats, swr_variance_check,
    variance_bound_check, NormalizerRule, SamplingScheme,
};
use fedsim::Result;
use rand::Rng;

/// Global step used where a limit must be hit to 1e-6: the fixed-point bias of
/// local steps is O(η_l) and the admissible η_l scales as 1/η_g.
const LARGE_ETA_G: f64 = 1e6;

fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

fn dup123() -> Problem {
    Problem::duplicated_quadratic(vec![basis(3, 0), basis(3, 1), basis(3, 2)], vec![1, 2, 3]).unwrap()
}

fn constants(p: &Problem) -> Result<HeterogeneityConstants> {
    estimate_constants(p, &probe_points(p.dim(), 16, 1.0, 7), 1.0)
}

fn at_admissible_step(mut c: GenConfig, p: &Problem) -> Result<GenConfig> {
    c.eta_g = LARGE_ETA_G;
    let bound = gen_max_local_step(&c, p, &constants(p)?)?;
    c.eta_l = StepSchedule::Constant { value: bound };
    Ok(c)
}

fn first_round_within(log: &fedsim::RunLog, tol: f64) -> Option<usize> {
    log.rows.iter().find(|r| r.dist_sq.sqrt() <= tol).map(|r| r.round)
}

fn c1_objective_inconsistency() -> Result<(bool, String)> {
    let p = dup123();
    let eta = theorem1_max_step(&constants(&p)?, 0.0, LARGE_ETA_G, 1);
    let mut c = GenConfig::preset(
        Preset::FedAvgRr,
        &p,
        SamplingScheme::full(3)?,
        vec![1; 3],
        StepSchedule::Constant { value: eta },
        2000,
        0,
    )?;
    c.eta_g = LARGE_ETA_G;
    let start = Instant::now();
    let log = run(&c, &p)?;
    let secs = start.elapsed().as_secs_f64();
    let x_tilde = v(&[1.0 / 14.0, 4.0 / 14.0, 9.0 / 14.0]);
    let x_star = v(&[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]);
    let to_tilde = (&log.final_iterate - &x_tilde).norm();
    let to_star = (&log.final_iterate - &x_star).norm();
    let gap = (&x_tilde - &x_star).norm();
    Ok((
        to_tilde <= 1e-6 && to_star >= 0.9 * gap && secs < 1.0,
        format!("||x−x̃|| = {to_tilde:.2e}, ||x−x*|| = {to_star:.4} vs 0.9·{gap:.4}, {secs:.3}s"),
    ))
}

fn c2_consistency_fix() -> Result<(bool, String)> {
    let p = dup123();
    let x_star = v(&[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]);
    let mut detail = Vec::new();
    let mut ok = true;
    let mut hit = Vec::new();
    for preset in [Preset::FedShuffle, Preset::FedNovaRr] {
        let c = GenConfig::preset(
            preset,
            &p,
            SamplingScheme::full(3)?,
            vec![1; 3],
            StepSchedule::Constant { value: 0.0 },
            2000,
            0,
        )?;
        let c = at_admissible_step(c, &p)?;
        let log = run(&c, &p)?;
        let d = (&log.final_iterate - &x_star).norm();
        let first = first_round_within(&log, 1e-6);
        ok &= d <= 1e-6 && first.is_some();
        detail.push(format!("{} ||x−x*|| = {d:.2e}, first ≤1e-6 at round {first:?}", c.name));
        hit.push(first.unwrap_or(usize::MAX));
    }
    ok &= hit[0] <= hit[1];
    Ok((ok, detail.join("; ")))
}

fn c3_sum_one_bias() -> Result<(bool, String)> {
    let scheme = SamplingScheme::uniform(3, 2)?;
    let w = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
    let got = expected_contribution(&scheme, &NormalizerRule::sum_one(), &w)?;
    let expected = [7.0 / 36.0, 16.0 / 45.0, 9.0 / 20.0];
    let err = got
        .iter()
        .zip(&expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let total: f64 = got.iter().sum();
    let expected_total: f64 = expected.iter().sum();
    Ok((
        err <= 1e-15 && (total - 1.0).abs() <= 1e-15 && (expected_total - 1.0).abs() <= 1e-15,
        format!("contributions {got:?}, max error {err:.1e}, sum {total}"),
    ))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn c4_unbiased_aggregation() -> Result<(bool, String)> {
    let mut rng = rng::stream(4, 0, 0, 0);
    let mut worst = 0.0_f64;
    for trial in 0..100 {
        let n = 2 + trial % 5;
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let deltas: Vec<Vector> = (0..n)
            .map(|_| Vector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let mut target = Vector::zeros(3);
        for i in 0..n {
            target += &deltas[i] * w[i];
        }
        let b = rng.gen_range(1..=n);
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        for scheme in [SamplingScheme::uniform(n, b)?, SamplingScheme::independent(p.clone())?] {
            let mut mean = Vector::zeros(3);
            for mask in 1u32..(1 << n) {
                let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                let prob = if scheme == SamplingScheme::uniform(n, b)? {
                    if members.len() == b {
                        1.0 / binomial(n, b)
                    } else {
                        0.0
                    }
                } else {
                    (0..n)
                        .map(|i| if mask >> i & 1 == 1 { p[i] } else { 1.0 - p[i] })
                        .product()
                };
                if prob == 0.0 {
                    continue;
                }
                let d: BTreeMap<usize, Vector> = members.iter().map(|&i| (i, deltas[i].clone())).collect();
                mean += aggregate(&w, &NormalizerRule::Unbiased, &scheme, &w, &members, &d)? * prob;
            }
            worst = worst.max((mean - &target).amax());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max deviation {worst:.2e} over 200 enumerations"),
    ))
}

fn c5_sum_one_limit() -> Result<(bool, String)> {
    let p = ExperimentPreset::Fig1SumOne.problem();
    let seeds = 10;
    let mut finals: BTreeMap<String, Vector> = BTreeMap::new();
    for seed in 0..seeds {
        for c in preset_configs(ExperimentPreset::Fig1SumOne, seed)? {
            assert_eq!(c.rounds, 5000);
            let x = run(&c, &p)?.final_iterate / seeds as f64;
            *finals.entry(c.name.clone()).or_insert_with(|| Vector::zeros(6)) += x;
        }
    }
    let x_star = Vector::from_element(6, 1.0 / 6.0);
    let b = [7.0 / 36.0, 16.0 / 45.0, 9.0 / 20.0];
    let means = [
        basis(6, 0),
        (basis(6, 1) + basis(6, 2)) / 2.0,
        (basis(6, 3) + basis(6, 4) + basis(6, 5)) / 3.0,
    ];
    let mut biased = Vector::zeros(6);
    for i in 0..3 {
        biased += &means[i] * b[i];
    }
    let d_so = (&finals["FedShuffleSO"] - &biased).norm();
    let d_fs = (&finals["FedShuffle"] - &x_star).norm();
    let separation = (&biased - &x_star).norm();
    Ok((
        d_so <= 0.05 && d_fs <= 0.05,
        format!("SO to Σb_iē_i {d_so:.4}, unbiased to x* {d_fs:.4} (limits {separation:.4} apart)"),
    ))
}

fn c6_without_replacement() -> Result<(bool, String)> {
    let mut rng = rng::stream(6, 0, 0, 0);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for n in 2..=8usize {
        for _ in 0..50 {
            let z: Vec<Vector> = (0..n)
                .map(|_| Vector::from_fn(3, |_, _| rng.gen_range(-3.0..3.0)))
                .collect();
            let mean = z.iter().fold(Vector::zeros(3), |a, b| a + b) / n as f64;
            let sigma_sq = z.iter().map(|x| (x - &mean).norm_squared()).sum::<f64>() / n as f64;
            for k in 1..=n {
                let mut acc = 0.0;
                let mut count = 0.0;
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize != k {
                        continue;
                    }
                    let avg = (0..n)
                        .filter(|i| mask >> i & 1 == 1)
                        .fold(Vector::zeros(3), |a, i| a + &z[i])
                        / k as f64;
                    acc += (avg - &mean).norm_squared();
                    count += 1.0;
                }
                let formula = (n - k) as f64 / (k as f64 * (n - 1) as f64) * sigma_sq;
                let (lib_emp, lib_formula) = swr_variance_check(&z, k)?;
                worst = worst
                    .max((acc / count - formula).abs())
                    .max((lib_emp - formula).abs())
                    .max((lib_formula - formula).abs());
                cases += 1;
            }
        }
    }
    Ok((
        worst <= 1e-10,
        format!("max |empirical − formula| {worst:.2e} over {cases} (n,k,set) cases"),
    ))
}

fn random_explicit<R: Rng>(rng: &mut R, n: usize) -> Result<SamplingScheme> {
    let mut subsets: Vec<Vec<usize>> = (0..4)
        .map(|_| {
            let m: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
            if m.is_empty() {
                vec![rng.gen_range(0..n)]
            } else {
                m
            }
        })
        .collect();
    for i in 0..n {
        if !subsets.iter().any(|s| s.contains(&i)) {
            subsets.push(vec![i]);
        }
    }
    let raw: Vec<f64> = subsets.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    SamplingScheme::explicit(n, subsets, raw.into_iter().map(|x| x / total).collect())
}

fn c7_variance_bounds() -> Result<(bool, String)> {
    let mut rng = rng::stream(7, 0, 0, 0);
    let (mut worst_gap, mut worst_psd, mut checks) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0usize);
    for trial in 0..100 {
        let n = 2 + trial % 7;
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let z: Vec<Vector> = (0..n)
            .map(|_| Vector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)))
            .collect();
        let mut schemes = random_schemes(&mut rng, n)?;
        schemes.push(random_explicit(&mut rng, n)?);
        schemes.push(importance_scheme(&w, 1.0)?);
        for s in &schemes {
            let (lhs, rhs) = variance_bound_check(&z, &w, s)?;
            worst_gap = worst_gap.max((lhs - rhs) / (1.0 + rhs));
            worst_psd = worst_psd.max(s.psd_slack());
            checks += 1;
            let fixed = NormalizerRule::Fixed {
                q: (0..n).map(|_| rng.gen_range(0.2..1.0)).collect(),
            };
            for rule in [
                NormalizerRule::Unbiased,
                NormalizerRule::sum_one(),
                NormalizerRule::fedavg(s),
                fixed,
            ] {
                let (lhs, rhs) = general_variance_check(&z, &w, s, &rule)?;
                worst_gap = worst_gap.max((lhs - rhs) / (1.0 + rhs));
                worst_psd = worst_psd.max(normalizer_stats(s, &rule, &w)?.psd_slack());
                checks += 1;
            }
        }
    }
    Ok((
        worst_gap <= 1e-12 && worst_psd <= 1e-10,
        format!("{checks} checks, max (lhs−rhs)/(1+rhs) {worst_gap:.2e}, max PSD slack {worst_psd:.2e}"),
    ))
}

fn c8_effective_weights() -> Result<(bool, String)> {
    let mut rng = rng::stream(8, 0, 0, 0);
    let mut worst = 0.0_f64;
    for trial in 0..100 {
        let n = 2 + trial % 7;
        let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=10)).collect();
        let epochs: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
        let anchors = (0..n)
            .map(|_| Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let p = Problem::duplicated_quadratic(anchors, sizes.clone())?;
        let total: usize = sizes.iter().sum();
        let w: Vec<f64> = sizes.iter().map(|&s| s as f64 / total as f64).collect();
        let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        for scheme in [SamplingScheme::full(n)?, SamplingScheme::independent(probs)?] {
            for preset in [Preset::FedShuffle, Preset::FedNovaRr] {
                let c = GenConfig::preset(
                    preset,
                    &p,
                    scheme.clone(),
                    epochs.clone(),
                    StepSchedule::Constant { value: 0.1 },
                    1,
                    0,
                )?;
                let eff = c.effective_objective(&p)?;
                worst = worst.max(eff.w_hat.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        let e = rng.gen_range(1..=5);
        let c = GenConfig::preset(
            Preset::FedAvgRr,
            &p,
            SamplingScheme::full(n)?,
            vec![e; n],
            StepSchedule::Constant { value: 0.1 },
            1,
            0,
        )?;
        let eff = c.effective_objective(&p)?;
        let sq: f64 = sizes.iter().map(|&s| (s * s) as f64).sum();
        for (wh, &s) in eff.w_hat.iter().zip(&sizes) {
            worst = worst.max((wh - (s * s) as f64 / sq).abs());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("max |ŵ − target| {worst:.2e} over 100 random instances"),
    ))
}

fn c9_importance_sampling() -> Result<(bool, String)> {
    let w = [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0];
    let m_is = importance_scheme(&w, 1.0)?.m_constant(&w);
    let m_uni = SamplingScheme::uniform(3, 1)?.m_constant(&w);
    let m_ok = (m_is - 5.0 / 6.0).abs() <= 1e-15 && m_is <= m_uni;
    let p = ExperimentPreset::Fig1Importance.problem();
    let seeds = 10;
    let mut gaps: BTreeMap<String, f64> = BTreeMap::new();
    for seed in 0..seeds {
        for c in preset_configs(ExperimentPreset::Fig1Importance, seed)? {
            assert_eq!(c.rounds, 2000);
            let gap = run(&c, &p)?.rows.last().map_or(f64::NAN, |r| r.f_gap);
            *gaps.entry(c.name.clone()).or_default() += gap / seeds as f64;
        }
    }
    let (is, uni) = (gaps["FedShuffleIS"], gaps["FedShuffleUniform"]);
    Ok((
        m_ok && is <= uni,
        format!("M_IS = {m_is}, M_uniform = {m_uni}; mean final f_gap IS {is:.3e} vs uniform {uni:.3e}"),
    ))
}

fn c10_mvr_identities() -> Result<(bool, String)> {
    let p = Problem::quad_obj();
    let mut rng = rng::stream(10, 0, 0, 0);
    let x = Vector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
    let x_prev = Vector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
    let m = Vector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
    let mut ok = true;

    for client in 0..3 {
        let size = p.size(client);
        let spec = LocalWorkSpec::new(1, size as f64, 0.05);
        let plan = make_permutations(3, 1, client as u64, 1, size);
        let plain = run_local(&p, client, &x, &spec, &plan)?;
        let state = MomentumState::new(m.clone(), 1.0)?;
        let mvr = run_local_mvr(&p, client, &x, &spec, Some(&state), &x_prev, &plan)?;
        ok &= plain
            .y
            .as_slice()
            .iter()
            .zip(mvr.y.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }

    let scheme = SamplingScheme::uniform(3, 2)?;
    let sampled = [0, 2];
    let state = MomentumState::new(m.clone(), 1.0)?;
    let next = mvr_momentum_update(Some(&state), &sampled, &p, &x, &x_prev, &scheme)?;
    let mut oracle = Vector::zeros(6);
    for &i in &sampled {
        oracle += p.client_gradient(i, &x)? * (p.weights()[i] / scheme.probabilities()[i]);
    }
    ok &= next.m == oracle;

    let g = p.gradient(2, 1, &x)?;
    let anchored = mvr_direction(&g, &g, &MomentumState::new(m.clone(), 0.0)?);
    ok &= anchored == m;

    let mk = |preset| {
        GenConfig::preset(
            preset,
            &p,
            SamplingScheme::uniform(3, 2).unwrap(),
            vec![1; 3],
            StepSchedule::Constant { value: 0.05 },
            50,
            11,
        )
        .unwrap()
    };
    let mut mvr = mk(Preset::FedShuffleMvr);
    mvr.momentum = MomentumMode::Mvr { a: 1.0 };
    ok &= run(&mvr, &p)?.rows == run(&mk(Preset::FedShuffle), &p)?.rows;

    let consts = HeterogeneityConstants {
        l: 2.0,
        mu: 0.0,
        g_sq: 1.0,
        b: 1.0,
        sigma_sq: vec![0.0],
        p_sq: vec![0.0],
        delta: 1.0,
        sizes: vec![1],
    };
    let t2 = theorem2_hyperparams(&consts, 1.0, 1, 1)?;
    ok &= (t2.eta_l - 0.025).abs() <= 1e-15 && t2.a == 1.0;
    Ok((
        ok,
        format!(
            "a=1 local/momentum/run reductions and anchor identity bitwise; η_l = {}, a = {}",
            t2.eta_l, t2.a
        ),
    ))
}

fn c11_hybrid() -> Result<(bool, String)> {
    let p = dup123();
    let x_star = p.true_minimizer()?;
    let truncation = vec![0, 1, 1];
    let plain = GenConfig::preset(
        Preset::FedShuffle,
        &p,
        SamplingScheme::full(3)?,
        vec![1; 3],
        StepSchedule::Constant { value: 0.0 },
        2000,
        0,
    )?
    .with_truncation(truncation.clone());
    let plain = at_admissible_step(plain, &p)?;
    let mut gen = GenConfig::preset(
        Preset::FedShuffleGen,
        &p,
        SamplingScheme::full(3)?,
        vec![1; 3],
        StepSchedule::Constant { value: 0.0 },
        2000,
        0,
    )?
    .with_truncation(truncation);
    gen.restore_consistency(&p)?;
    let gen = at_admissible_step(gen, &p)?;
    let d_plain = (run(&plain, &p)?.final_iterate - &x_star).norm();
    let d_gen = (run(&gen, &p)?.final_iterate - &x_star).norm();
    // completed steps (1,1,2) against c = (1,2,3): ŵ ∝ (1/6, 1/6, 1/3)
    let predicted = predicted_limit(&p, &[0.25, 0.25, 0.5])?;
    let d_pred = (&predicted - &x_star).norm();
    Ok((
        d_plain > 10.0 * 1e-4 && d_gen <= 1e-4,
        format!("plain FedShuffle ||x−x*|| = {d_plain:.3e} (predicted {d_pred:.3e}), FedShuffleGen {d_gen:.2e}"),
    ))
}

fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector) -> Vector {
    let h = 1e-6;
    Vector::from_fn(x.len(), |k, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

fn c12_gradient_oracle() -> Result<(bool, String)> {
    let mut rng = rng::stream(12, 0, 0, 0);
    let problems = [Problem::quad_obj(), Problem::logistic(&[5, 7], 4, 0.01, 3)?];
    let mut worst = 0.0_f64;
    for p in &problems {
        for _ in 0..100 {
            let x = Vector::from_fn(p.dim(), |_, _| rng.gen_range(-2.0..2.0));
            let i = rng.gen_range(0..p.n_clients());
            let j = rng.gen_range(0..p.size(i));
            let g = p.gradient(i, j, &x)?;
            let fd = fd_gradient(|y| p.value(i, j, y).unwrap(), &x);
            worst = worst.max((fd - &g).norm() / g.norm().max(1e-6));
            let g = p.full_gradient(&x)?;
            let fd = fd_gradient(|y| p.full_value(y).unwrap(), &x);
            worst = worst.max((fd - &g).norm() / g.norm().max(1e-6));
        }
    }
    Ok((
        worst <= 1e-5,
        format!("max relative error {worst:.2e} (quadratic and logistic, 100 points each)"),
    ))
}

fn c13_determinism() -> Result<(bool, String)> {
    let dir = tempfile::tempdir().map_err(|e| fedsim::FedError::State(e.to_string()))?;
    let p = Problem::quad_obj();
    let mut ok = true;
    let mut files = 0;
    for preset in [Preset::FedShuffle, Preset::FedAvgMean, Preset::FedShuffleMvr] {
        let mut c = GenConfig::preset(
            preset,
            &p,
            SamplingScheme::uniform(3, 2)?,
            vec![2, 1, 1],
            StepSchedule::Constant { value: 0.02 },
            300,
            42,
        )?;
        if preset == Preset::FedShuffleMvr {
            c.momentum = MomentumMode::Mvr { a: 0.3 };
        }
        let mut texts = Vec::new();
        for (k, parallel) in [false, false, true, true].into_iter().enumerate() {
            c.parallel = parallel;
            let path = dir.path().join(format!("{}_{k}.csv", c.name));
            emit_csv(&run(&c, &p)?, &path)?;
            texts.push(std::fs::read(&path).map_err(|e| fedsim::FedError::State(e.to_string()))?);
            files += 1;
        }
        ok &= texts.windows(2).all(|w| w[0] == w[1]);
        ok &= csv_string(&run(&c, &p)?).as_bytes() == texts[0].as_slice();
    }
    Ok((
        ok,
        format!("{files} CSV files byte-identical per configuration, serial and parallel"),
    ))
}

fn main() -> ExitCode {
    type Criterion = fn() -> Result<(bool, String)>;
    let criteria: [(&str, Criterion); 13] = [
        ("objective inconsistency of FedAvgRR", c1_objective_inconsistency),
        ("consistency fix and step-size advantage", c2_consistency_fix),
        ("sum-one expected contributions", c3_sum_one_bias),
        ("unbiased aggregation by enumeration", c4_unbiased_aggregation),
        ("sum-one limit under partial participation", c5_sum_one_limit),
        ("without-replacement variance identity", c6_without_replacement),
        ("variance bounds and PSD certificates", c7_variance_bounds),
        ("effective weights", c8_effective_weights),
        ("importance sampling", c9_importance_sampling),
        ("momentum variance reduction identities", c10_mvr_identities),
        ("hybrid consistency restoration", c11_hybrid),
        ("gradient oracle against finite differences", c12_gradient_oracle),
        ("determinism of CSV output", c13_determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.2}s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
