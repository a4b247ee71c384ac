//! Round-level orchestration of the general shuffling method and its named
//! specializations.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, effective_weights, EffectiveObjective};
use crate::error::{arg, FedError, Result};
use crate::local::{make_permutations, run_local, run_local_mvr, LocalOutcome, LocalWorkSpec, MomentumState};
use crate::problems::{HeterogeneityConstants, Problem, Vector};
use crate::rng;
use crate::sampling::{normalizer_stats, NormalizerRule, SamplingScheme};

/// Iterates with a norm above this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[serde(rename = "fedshuffle")]
    FedShuffle,
    #[serde(rename = "fedavg_rr")]
    FedAvgRr,
    #[serde(rename = "fedavg_min")]
    FedAvgMin,
    #[serde(rename = "fedavg_mean")]
    FedAvgMean,
    #[serde(rename = "fednova_rr")]
    FedNovaRr,
    #[serde(rename = "fedshuffle_mvr")]
    FedShuffleMvr,
    /// FedShuffle with sampled weights renormalised to sum to one.
    #[serde(rename = "fedshuffle_so")]
    FedShuffleSumOne,
    /// FedShuffle with aggregation weights recomputed from the steps clients
    /// actually complete.
    #[serde(rename = "fedshuffle_gen")]
    FedShuffleGen,
}

impl Preset {
    pub fn label(self) -> &'static str {
        match self {
            Self::FedShuffle => "FedShuffle",
            Self::FedAvgRr => "FedAvgRR",
            Self::FedAvgMin => "FedAvgMin",
            Self::FedAvgMean => "FedAvgMean",
            Self::FedNovaRr => "FedNovaRR",
            Self::FedShuffleMvr => "FedShuffleMVR",
            Self::FedShuffleSumOne => "FedShuffleSO",
            Self::FedShuffleGen => "FedShuffleGen",
        }
    }
}

/// Local step-size schedule over rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        value: f64,
    },
    /// `initial · decay^r`
    Geometric {
        initial: f64,
        decay: f64,
    },
    /// `initial / (1 + r/tau)`
    InverseTime {
        initial: f64,
        tau: f64,
    },
}

impl StepSchedule {
    pub fn at(&self, round: usize) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Geometric { initial, decay } => initial * decay.powi(round as i32),
            Self::InverseTime { initial, tau } => initial / (1.0 + round as f64 / tau),
        }
    }

    pub fn initial(&self) -> f64 {
        self.at(0)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { value } => value >= 0.0 && value.is_finite(),
            Self::Geometric { initial, decay } => initial >= 0.0 && initial.is_finite() && decay > 0.0 && decay <= 1.0,
            Self::InverseTime { initial, tau } => initial >= 0.0 && initial.is_finite() && tau > 0.0,
        };
        if ok {
            Ok(())
        } else {
            arg(format!("invalid step schedule {self:?}"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MomentumMode {
    None,
    /// Heavy-ball buffer `v ← β v + (1−β) ĝ` over an unbiased server gradient
    /// estimate. With `practical` the client gradients are recovered from the
    /// updates; otherwise sampled clients report `∇f_i(x^r)` exactly.
    Global {
        coeff: f64,
        practical: bool,
    },
    /// Momentum variance reduction with parameter `a`.
    Mvr {
        a: f64,
    },
}

/// How many local steps each sampled client performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `E_i` full epochs (minus truncation).
    Epochs,
    /// `K = min_{i∈S} E_i|D_i|` steps for every sampled client.
    FixedMin,
    /// `K = round(mean_{i∈S} E_i|D_i|)` steps, ties rounded up.
    FixedMean,
}

/// One fully specified algorithm instance.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub name: String,
    pub rounds: usize,
    pub eta_g: f64,
    pub eta_l: StepSchedule,
    pub epochs: Vec<usize>,
    pub step_normalizers: Vec<f64>,
    pub agg_weights: Vec<f64>,
    pub normalizer: NormalizerRule,
    pub scheme: SamplingScheme,
    pub momentum: MomentumMode,
    pub truncation: Vec<usize>,
    pub step_rule: StepRule,
    pub seed: u64,
    pub x0: Option<Vector>,
    pub parallel: bool,
    pub keep_iterates: bool,
}

impl GenConfig {
    /// Builds the parameter tuple of a named method.
    pub fn preset(
        preset: Preset,
        problem: &Problem,
        scheme: SamplingScheme,
        epochs: Vec<usize>,
        eta_l: StepSchedule,
        rounds: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = problem.n_clients();
        if scheme.n() != n || epochs.len() != n {
            return arg("scheme and epochs must match the client count");
        }
        let w = problem.weights().to_vec();
        let work: Vec<f64> = (0..n).map(|i| (epochs[i] * problem.size(i)) as f64).collect();
        let shuffle_c = work.clone();
        let (c, agg, normalizer, momentum, step_rule) = match preset {
            Preset::FedShuffle | Preset::FedShuffleGen => (
                shuffle_c,
                w.clone(),
                NormalizerRule::Unbiased,
                MomentumMode::None,
                StepRule::Epochs,
            ),
            Preset::FedShuffleSumOne => (
                shuffle_c,
                w.clone(),
                NormalizerRule::sum_one(),
                MomentumMode::None,
                StepRule::Epochs,
            ),
            Preset::FedShuffleMvr => (
                shuffle_c,
                w.clone(),
                NormalizerRule::Unbiased,
                MomentumMode::Mvr { a: 1.0 },
                StepRule::Epochs,
            ),
            Preset::FedAvgRr | Preset::FedAvgMin | Preset::FedAvgMean => {
                let rule = match preset {
                    Preset::FedAvgMin => StepRule::FixedMin,
                    Preset::FedAvgMean => StepRule::FixedMean,
                    _ => StepRule::Epochs,
                };
                (
                    vec![1.0; n],
                    w.clone(),
                    NormalizerRule::fedavg(&scheme),
                    MomentumMode::None,
                    rule,
                )
            }
            Preset::FedNovaRr => {
                let tau: f64 = w.iter().zip(&work).map(|(a, b)| a * b).sum();
                let agg = (0..n).map(|i| w[i] * tau / work[i]).collect();
                (
                    vec![1.0; n],
                    agg,
                    NormalizerRule::Unbiased,
                    MomentumMode::None,
                    StepRule::Epochs,
                )
            }
        };
        Ok(Self {
            name: preset.label().to_string(),
            rounds,
            eta_g: 1.0,
            eta_l,
            epochs,
            step_normalizers: c,
            agg_weights: agg,
            normalizer,
            scheme,
            momentum,
            truncation: vec![0; n],
            step_rule,
            seed,
            x0: None,
            parallel: false,
            keep_iterates: false,
        })
    }

    pub fn with_truncation(mut self, truncation: Vec<usize>) -> Self {
        self.truncation = truncation;
        self
    }

    /// Recomputes aggregation weights as `w̃_i = W w_i q_i c_i / K_i`, where
    /// `K_i` counts the steps client `i` actually completes and `W` is the
    /// normalizer of the untruncated configuration, so that `ŵ = w`.
    pub fn restore_consistency(&mut self, problem: &Problem) -> Result<()> {
        let w = problem.weights();
        let n = problem.n_clients();
        let nominal: Vec<f64> = (0..n).map(|i| (self.epochs[i] * problem.size(i)) as f64).collect();
        let scale = effective_weights(
            &self.agg_weights,
            &self.step_normalizers,
            &nominal,
            &self.normalizer,
            &self.scheme,
            w,
        )?
        .total;
        let stats = normalizer_stats(&self.scheme, &self.normalizer, w)?;
        let steps = self.completed_steps(problem);
        if steps.iter().any(|&k| k <= 0.0) {
            return arg("every client must complete at least one step");
        }
        self.agg_weights = (0..n)
            .map(|i| scale * w[i] * stats.q[i] * self.step_normalizers[i] / steps[i])
            .collect();
        Ok(())
    }

    /// Steps completed per client in a round under the epoch rule.
    pub fn completed_steps(&self, problem: &Problem) -> Vec<f64> {
        (0..problem.n_clients())
            .map(|i| (self.epochs[i] * problem.size(i) - self.truncation[i]) as f64)
            .collect()
    }

    /// `ŵ` for this configuration, using completed steps.
    pub fn effective_objective(&self, problem: &Problem) -> Result<EffectiveObjective> {
        effective_weights(
            &self.agg_weights,
            &self.step_normalizers,
            &self.completed_steps(problem),
            &self.normalizer,
            &self.scheme,
            problem.weights(),
        )
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let n = problem.n_clients();
        let lens = [
            self.epochs.len(),
            self.step_normalizers.len(),
            self.agg_weights.len(),
            self.truncation.len(),
            self.scheme.n(),
        ];
        if lens.iter().any(|&l| l != n) {
            return arg(format!("per-client parameters must have length {n}"));
        }
        if !(self.eta_g > 0.0 && self.eta_g.is_finite()) {
            return arg("global step size must be positive");
        }
        self.eta_l.validate()?;
        self.normalizer.validate(n)?;
        for i in 0..n {
            LocalWorkSpec {
                epochs: self.epochs[i],
                step_normalizer: self.step_normalizers[i],
                eta_l: self.eta_l.initial(),
                truncation: self.truncation[i],
            }
            .validate(problem.size(i))?;
            if !(self.agg_weights[i] >= 0.0 && self.agg_weights[i].is_finite()) {
                return arg("aggregation weights must be nonnegative");
            }
        }
        match self.momentum {
            MomentumMode::Global { coeff, .. } if !(0.0..1.0).contains(&coeff) => {
                arg("global momentum coefficient must lie in [0, 1)")
            }
            MomentumMode::Mvr { a } if !(0.0..=1.0).contains(&a) => arg("mvr parameter a must lie in [0, 1]"),
            _ => Ok(()),
        }?;
        if let Some(x0) = &self.x0 {
            if x0.len() != problem.dim() {
                return arg("x0 has the wrong dimension");
            }
        }
        Ok(())
    }

    /// True when the run falls outside the one-client setting of the momentum
    /// guarantee.
    pub fn outside_theory(&self) -> bool {
        matches!(self.momentum, MomentumMode::Mvr { .. }) && !self.scheme.is_one_client()
    }
}

/// Metrics of the iterate produced by one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub f_gap: f64,
    pub dist_sq: f64,
    pub grad_norm_sq: f64,
    pub sampled: Vec<usize>,
    pub steps_total: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunLog {
    pub method: String,
    pub rows: Vec<RoundRecord>,
    pub final_iterate: Vector,
    /// `x^0, …, x^{R−1}` when requested.
    pub iterates: Vec<Vector>,
    pub outside_theory: bool,
}

impl RunLog {
    pub fn final_dist(&self, target: &Vector) -> f64 {
        (&self.final_iterate - target).norm()
    }
}

/// Surrogate `−Δ_i / (K_i · η_{l,i})` for `∇f_i(x^r)`, where `K_i` is the
/// number of local steps (`E_i|D_i|` for full epochs) and `η_{l,i}` the
/// per-step size.
pub fn practical_global_momentum(delta: &Vector, local_steps: usize, step_size: f64) -> Result<Vector> {
    if !(step_size > 0.0) || local_steps == 0 {
        return arg("practical gradient estimate needs a positive step size and step count");
    }
    Ok(delta * (-1.0 / (local_steps as f64 * step_size)))
}

fn sampled_gradient(problem: &Problem, sampled: &[usize], scheme: &SamplingScheme, x: &Vector) -> Result<Vector> {
    let w = problem.weights();
    let p = scheme.probabilities();
    let mut acc = Vector::zeros(problem.dim());
    for &i in sampled {
        acc += problem.client_gradient(i, x)? * (w[i] / p[i]);
    }
    Ok(acc)
}

/// `m^r = aĝ(x^r) + (1−a)m^{r−1} + (1−a)(ĝ(x^r) − ĝ(x^{r−1}))` with
/// `ĝ(x) = Σ_{i∈S} (w_i/p_i) ∇f_i(x)`.
pub fn mvr_momentum_update(
    state: Option<&MomentumState>,
    sampled: &[usize],
    problem: &Problem,
    x_current: &Vector,
    x_previous: &Vector,
    scheme: &SamplingScheme,
) -> Result<MomentumState> {
    let state = state.ok_or_else(|| FedError::State("momentum used before initialisation".into()))?;
    let a = state.a;
    let g_now = sampled_gradient(problem, sampled, scheme, x_current)?;
    if a == 1.0 {
        return MomentumState::new(g_now, a);
    }
    let g_prev = sampled_gradient(problem, sampled, scheme, x_previous)?;
    let m = &g_now * a + &state.m * (1.0 - a) + (&g_now - g_prev) * (1.0 - a);
    MomentumState::new(m, a)
}

/// `m^0 = (1/R) Σ_t ĝ_t(x^0)` over `draws` independent sampled sets, which for
/// one-client sampling with `π = w` is the average of sampled client gradients.
pub fn mvr_init(problem: &Problem, scheme: &SamplingScheme, x0: &Vector, draws: usize, seed: u64) -> Result<Vector> {
    if draws == 0 {
        return arg("momentum initialisation needs at least one draw");
    }
    let mut r = rng::stream(seed, 0, rng::AUX_TAG, 2);
    let mut acc = Vector::zeros(problem.dim());
    for _ in 0..draws {
        let s = scheme.draw(&mut r);
        acc += sampled_gradient(problem, &s, scheme, x0)?;
    }
    Ok(acc / draws as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem2Params {
    pub eta_l: f64,
    pub a: f64,
    /// Set when the prescribed `a` exceeded 1 and was clamped.
    pub clamped: bool,
}

/// Step size and momentum parameter prescribed for the momentum method:
/// `η_l = (1/(40E)) min{1/δ, (F/(Rδ²(G²+σ²)))^{1/3}}`,
/// `a = max(1152 E² δ² η_l², 1/R)`.
pub fn theorem2_hyperparams(
    constants: &HeterogeneityConstants,
    f_gap: f64,
    rounds: usize,
    epochs: usize,
) -> Result<Theorem2Params> {
    let delta = constants.delta;
    if !(delta > 0.0) {
        return arg("the momentum prescription requires δ > 0");
    }
    if rounds == 0 || epochs == 0 {
        return arg("R and E must be at least 1");
    }
    let (r, e) = (rounds as f64, epochs as f64);
    let noise = constants.g_sq + constants.sigma_agg_sq();
    let second = if noise > 0.0 {
        (f_gap / (r * delta * delta * noise)).cbrt()
    } else {
        f64::INFINITY
    };
    let eta_l = (1.0 / (40.0 * e)) * (1.0 / delta).min(second);
    let a = (1152.0 * e * e * delta * delta * eta_l * eta_l).max(1.0 / r);
    if a > 1.0 {
        log::warn!("prescribed momentum parameter a = {a} exceeds 1; clamping");
        return Ok(Theorem2Params {
            eta_l,
            a: 1.0,
            clamped: true,
        });
    }
    Ok(Theorem2Params {
        eta_l,
        a,
        clamped: false,
    })
}

/// Largest admissible local step size `1/(4βLEη_g)` with `β = 1 + (1+P)B + MB²`.
pub fn theorem1_max_step(constants: &HeterogeneityConstants, m: f64, eta_g: f64, epochs: usize) -> f64 {
    1.0 / (4.0 * constants.beta(m) * constants.l * epochs as f64 * eta_g)
}

/// Admissible `η_l` (in the configuration's own units) for a general
/// parametrization: `η_l ≤ 1/(4βLη_g)` with
/// `β = 1 + M₂ + (1+P)B + M₁B²`, after the smallest uniform rescaling of
/// `c` that satisfies `c_i ≥ E_i|D_i|`.
pub fn gen_max_local_step(config: &GenConfig, problem: &Problem, constants: &HeterogeneityConstants) -> Result<f64> {
    let n = problem.n_clients();
    let w = problem.weights();
    let work: Vec<f64> = (0..n).map(|i| (config.epochs[i] * problem.size(i)) as f64).collect();
    let stats = normalizer_stats(&config.scheme, &config.normalizer, w)?;
    let eff = effective_weights(
        &config.agg_weights,
        &config.step_normalizers,
        &work,
        &config.normalizer,
        &config.scheme,
        w,
    )?;
    let kappa = (0..n)
        .map(|i| work[i] / config.step_normalizers[i])
        .fold(1.0_f64, f64::max);
    let m1 = (0..n)
        .map(|i| stats.h[i] * stats.s[i] * eff.w_hat[i])
        .fold(0.0, f64::max);
    let total_work: f64 = work.iter().sum();
    let m2 = total_work
        * (0..n)
            .map(|i| config.agg_weights[i] / (eff.total * stats.q[i] * config.step_normalizers[i]))
            .fold(0.0, f64::max);
    let p_sq = (0..n)
        .map(|i| constants.p_sq[i] / (3.0 * problem.size(i) as f64 * (config.epochs[i] * config.epochs[i]) as f64))
        .fold(0.0, f64::max);
    let b = constants.b;
    let beta = 1.0 + m2 + (1.0 + p_sq.sqrt()) * b + m1 * b * b;
    Ok(1.0 / (4.0 * beta * constants.l * config.eta_g * kappa))
}

/// Output-selection weights `v_r = (1 − μη̃/2)^{1−r}`, normalised.
pub fn output_weights(rounds: usize, mu: f64, eta_tilde: f64) -> Result<Vec<f64>> {
    if rounds == 0 {
        return arg("no iterates to select from");
    }
    let base = 1.0 - mu * eta_tilde / 2.0;
    if !(mu >= 0.0) || !(base > 0.0) {
        return arg("need μ ≥ 0 and μη̃ < 2");
    }
    let logs: Vec<f64> = (0..rounds).map(|r| (1.0 - r as f64) * base.ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Samples one stored iterate with the output-selection weights.
pub fn select_output(iterates: &[Vector], mu: f64, eta_tilde: f64, seed: u64) -> Result<(usize, Vector)> {
    let weights = output_weights(iterates.len(), mu, eta_tilde)?;
    let dist = WeightedIndex::new(&weights).map_err(|e| FedError::Argument(e.to_string()))?;
    let idx = dist.sample(&mut rng::stream(seed, 0, rng::AUX_TAG, 3));
    Ok((idx, iterates[idx].clone()))
}

fn fixed_step_count(rule: StepRule, work: &[usize]) -> Option<usize> {
    match rule {
        StepRule::Epochs => None,
        StepRule::FixedMin => work.iter().copied().min(),
        StepRule::FixedMean => {
            let total: usize = work.iter().sum();
            let k = work.len();
            // nearest integer, ties up: floor((2·total + k) / (2k))
            Some((2 * total + k) / (2 * k))
        }
    }
}

/// Runs `R` rounds of the general method.
pub fn run(config: &GenConfig, problem: &Problem) -> Result<RunLog> {
    execute(config, problem, None)
}

/// Runs with every sampled client performing exactly `K` steps, `K` chosen
/// from the sampled clients' epoch workloads.
pub fn run_fixed_steps(config: &GenConfig, problem: &Problem, rule: StepRule) -> Result<RunLog> {
    if rule == StepRule::Epochs {
        return arg("fixed-step runs need the min or mean rule");
    }
    execute(config, problem, Some(rule))
}

struct ClientJob {
    client: usize,
    spec: LocalWorkSpec,
}

fn execute(config: &GenConfig, problem: &Problem, rule_override: Option<StepRule>) -> Result<RunLog> {
    config.validate(problem)?;
    let step_rule = rule_override.unwrap_or(config.step_rule);
    let n = problem.n_clients();
    let w = problem.weights();
    let (x_star, f_star) = problem.reference_optimum()?;
    let mut x = config.x0.clone().unwrap_or_else(|| Vector::zeros(problem.dim()));
    let mut x_prev = x.clone();
    let mut rows = Vec::with_capacity(config.rounds);
    let mut iterates = Vec::new();
    let mut mvr_state: Option<MomentumState> = None;
    let mut heavy_ball = Vector::zeros(problem.dim());
    let outside_theory = config.outside_theory();
    if outside_theory {
        log::info!(
            "{}: momentum variance reduction with multi-client sampling is outside the one-client guarantee",
            config.name
        );
    }

    for r in 0..config.rounds {
        if config.keep_iterates {
            iterates.push(x.clone());
        }
        let eta_l = config.eta_l.at(r);
        let sampled = config
            .scheme
            .draw(&mut rng::stream(config.seed, r as u64, rng::SERVER_TAG, 0));

        let work: Vec<usize> = sampled.iter().map(|&i| config.epochs[i] * problem.size(i)).collect();
        let fixed_k = fixed_step_count(step_rule, &work);
        if fixed_k == Some(0) {
            return arg("fixed step count K = 0");
        }
        let jobs: Vec<ClientJob> = sampled
            .iter()
            .map(|&i| {
                let size = problem.size(i);
                let (epochs, truncation) = match fixed_k {
                    Some(k) => {
                        let e = k.div_ceil(size);
                        (e, e * size - k)
                    }
                    None => (config.epochs[i], config.truncation[i]),
                };
                ClientJob {
                    client: i,
                    spec: LocalWorkSpec {
                        epochs,
                        step_normalizer: config.step_normalizers[i],
                        eta_l,
                        truncation,
                    },
                }
            })
            .collect();

        if let MomentumMode::Mvr { a } = config.momentum {
            mvr_state = Some(match mvr_state {
                None => MomentumState::new(mvr_init(problem, &config.scheme, &x, config.rounds, config.seed)?, a)?,
                Some(ref s) => mvr_momentum_update(Some(s), &sampled, problem, &x, &x_prev, &config.scheme)?,
            });
        }

        let local = |job: &ClientJob| -> Result<(usize, LocalOutcome)> {
            let plan = make_permutations(
                config.seed,
                r as u64,
                job.client as u64,
                job.spec.epochs,
                problem.size(job.client),
            );
            let out = match config.momentum {
                MomentumMode::Mvr { .. } => {
                    run_local_mvr(problem, job.client, &x, &job.spec, mvr_state.as_ref(), &x, &plan)?
                }
                _ => run_local(problem, job.client, &x, &job.spec, &plan)?,
            };
            Ok((job.client, out))
        };
        let outcomes: Vec<(usize, LocalOutcome)> = if config.parallel {
            jobs.par_iter().map(local).collect::<Result<_>>()?
        } else {
            jobs.iter().map(local).collect::<Result<_>>()?
        };
        let steps_total = outcomes.iter().map(|(_, o)| o.steps_taken).sum();
        let deltas: BTreeMap<usize, Vector> = outcomes.iter().map(|(i, o)| (*i, o.delta.clone())).collect();
        let delta = aggregate(
            &config.agg_weights,
            &config.normalizer,
            &config.scheme,
            w,
            &sampled,
            &deltas,
        )?;

        let x_next = match config.momentum {
            MomentumMode::Global { coeff, practical } => {
                let p = config.scheme.probabilities();
                let mut estimate = Vector::zeros(problem.dim());
                for (job, (i, out)) in jobs.iter().zip(&outcomes) {
                    let g = if practical {
                        practical_global_momentum(&out.delta, out.steps_taken, job.spec.step_size())?
                    } else {
                        problem.client_gradient(*i, &x)?
                    };
                    estimate += g * (w[*i] / p[*i]);
                }
                heavy_ball = &heavy_ball * coeff + estimate * (1.0 - coeff);
                // scale gradient units back to update units: Σ_i w_i K_i η_l/c_i
                let path: f64 = (0..n)
                    .map(|i| {
                        let k = fixed_k.unwrap_or(config.epochs[i] * problem.size(i) - config.truncation[i]);
                        w[i] * k as f64 * eta_l / config.step_normalizers[i]
                    })
                    .sum();
                &x - &heavy_ball * (config.eta_g * path)
            }
            _ => &x + delta * config.eta_g,
        };

        let norm = x_next.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(FedError::Divergence { round: r, norm });
        }
        x_prev = std::mem::replace(&mut x, x_next);
        rows.push(RoundRecord {
            round: r,
            f_gap: problem.full_value(&x)? - f_star,
            dist_sq: (&x - &x_star).norm_squared(),
            grad_norm_sq: problem.full_gradient(&x)?.norm_squared(),
            sampled,
            steps_total,
        });
    }
    Ok(RunLog {
        method: config.name.clone(),
        rows,
        final_iterate: x,
        iterates,
        outside_theory,
    })
}
