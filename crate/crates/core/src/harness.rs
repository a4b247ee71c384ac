//! Configuration files, CSV output, experiment presets and run comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{gen_max_local_step, run, GenConfig, MomentumMode, Preset, RunLog, StepRule, StepSchedule};
use crate::error::{FedError, Result};
use crate::problems::{estimate_constants, probe_points, HeterogeneityConstants, Problem, Vector};
use crate::rng;
use crate::sampling::{
    general_variance_check, swr_variance_check, variance_bound_check, NormalizerRule, SamplingScheme,
};

pub const CSV_HEADER: &str = "round,f_gap,dist_sq,grad_norm_sq,n_sampled,steps_total";

/// Seed used when neither the command line nor the config provides one.
pub const DEFAULT_SEED: u64 = 0;

/// `FEDSIM_SEED` if set and parseable, otherwise [`DEFAULT_SEED`].
pub fn default_seed() -> u64 {
    std::env::var("FEDSIM_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Explicit anchors per client, `f_ij(x) = ||x − anchor||²`.
    Quadratic {
        anchors: Vec<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// One anchor per client, repeated `sizes[i]` times.
    DuplicatedQuadratic {
        anchors: Vec<Vec<f64>>,
        sizes: Vec<usize>,
    },
    /// Basis anchors of `R^dim` dealt out according to `sizes`.
    SplitBasis {
        dim: usize,
        sizes: Vec<usize>,
    },
    QuadObj,
    ImportanceQuadratic,
    Logistic {
        sizes: Vec<usize>,
        dim: usize,
        ridge: f64,
        seed: u64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        let vec = |v: &Vec<f64>| Vector::from_row_slice(v);
        match self {
            Self::Quadratic { anchors, weights } => Problem::quadratic(
                anchors.iter().map(|c| c.iter().map(vec).collect()).collect(),
                weights.clone(),
            ),
            Self::DuplicatedQuadratic { anchors, sizes } => {
                Problem::duplicated_quadratic(anchors.iter().map(vec).collect(), sizes.clone())
            }
            Self::SplitBasis { dim, sizes } => Problem::split_basis(*dim, sizes),
            Self::QuadObj => Ok(Problem::quad_obj()),
            Self::ImportanceQuadratic => Ok(Problem::importance_quadratic()),
            Self::Logistic {
                sizes,
                dim,
                ridge,
                seed,
            } => Problem::logistic(sizes, *dim, *ridge, *seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSpec {
    Full,
    Uniform {
        b: usize,
    },
    Independent {
        p: Vec<f64>,
    },
    /// Independent participation with `p_i = b·w_i`.
    Importance {
        b: f64,
    },
    OneClient {
        pi: Vec<f64>,
    },
    /// One client per round drawn with probability `w_i`.
    OneClientWeighted,
    Explicit {
        subsets: Vec<Vec<usize>>,
        probs: Vec<f64>,
    },
}

impl SamplingSpec {
    pub fn build(&self, problem: &Problem) -> Result<SamplingScheme> {
        let n = problem.n_clients();
        match self {
            Self::Full => SamplingScheme::full(n),
            Self::Uniform { b } => SamplingScheme::uniform(n, *b),
            Self::Independent { p } => SamplingScheme::independent(p.clone()),
            Self::Importance { b } => crate::sampling::importance_scheme(problem.weights(), *b),
            Self::OneClient { pi } => SamplingScheme::one_client(pi.clone()),
            Self::OneClientWeighted => SamplingScheme::one_client(problem.weights().to_vec()),
            Self::Explicit { subsets, probs } => SamplingScheme::explicit(n, subsets.clone(), probs.clone()),
        }
    }
}

/// Named method plus optional overrides of its parameter tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub preset: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Local epochs per client; defaults to one each.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_normalizers: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agg_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<NormalizerRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rule: Option<StepRule>,
    /// Recompute aggregation weights from completed steps; defaults to true
    /// for `fedshuffle_gen`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restore_consistency: Option<bool>,
}

impl AlgorithmSpec {
    pub fn preset(preset: Preset) -> Self {
        Self {
            preset,
            name: None,
            epochs: None,
            step_normalizers: None,
            agg_weights: None,
            normalizer: None,
            step_rule: None,
            restore_consistency: None,
        }
    }
}

/// Contents of a `run --config` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub problem: ProblemSpec,
    pub algorithm: AlgorithmSpec,
    pub sampling: SamplingSpec,
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    pub eta_l: StepSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum: Option<MomentumMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parallel: bool,
}

/// A validated configuration ready to run.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub problem: Problem,
    pub configs: Vec<GenConfig>,
    pub output_path: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FedError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| FedError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| FedError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the problem and one [`GenConfig`] per seed, validating
    /// everything. Argument errors are reported as configuration errors.
    pub fn prepare(&self, seed_override: Option<u64>) -> Result<PreparedRun> {
        self.prepare_inner(seed_override).map_err(|e| match e {
            FedError::Argument(m) | FedError::Unsupported(m) => FedError::Config(m),
            other => other,
        })
    }

    fn prepare_inner(&self, seed_override: Option<u64>) -> Result<PreparedRun> {
        let problem = self.problem.build()?;
        let n = problem.n_clients();
        let scheme = self.sampling.build(&problem)?;
        let seeds = match seed_override {
            Some(s) => vec![s],
            None if self.seeds.is_empty() => vec![default_seed()],
            None => self.seeds.clone(),
        };
        let epochs = self.algorithm.epochs.clone().unwrap_or_else(|| vec![1; n]);
        let mut base = GenConfig::preset(
            self.algorithm.preset,
            &problem,
            scheme,
            epochs,
            self.eta_l.clone(),
            self.rounds,
            0,
        )?;
        if let Some(name) = &self.algorithm.name {
            base.name = name.clone();
        }
        if let Some(c) = &self.algorithm.step_normalizers {
            base.step_normalizers = c.clone();
        }
        if let Some(a) = &self.algorithm.agg_weights {
            base.agg_weights = a.clone();
        }
        if let Some(r) = &self.algorithm.normalizer {
            base.normalizer = r.clone();
        }
        if let Some(r) = self.algorithm.step_rule {
            base.step_rule = r;
        }
        if let Some(g) = self.eta_g {
            base.eta_g = g;
        }
        if let Some(m) = &self.momentum {
            base.momentum = m.clone();
        }
        if let Some(t) = &self.truncation {
            base.truncation = t.clone();
        }
        if let Some(x0) = &self.x0 {
            base.x0 = Some(Vector::from_row_slice(x0));
        }
        base.parallel = self.parallel;
        base.validate(&problem)?;
        let restore = self
            .algorithm
            .restore_consistency
            .unwrap_or(self.algorithm.preset == Preset::FedShuffleGen);
        if restore {
            base.restore_consistency(&problem)?;
        }
        let configs = seeds
            .into_iter()
            .map(|seed| GenConfig { seed, ..base.clone() })
            .collect();
        Ok(PreparedRun {
            problem,
            configs,
            output_path: self.output_path.clone(),
        })
    }
}

/// Output file for one seed: the configured path for single-seed runs,
/// otherwise `<stem>__seed<k>.<ext>`.
pub fn seed_path(base: &Path, seed: u64, multiple: bool) -> PathBuf {
    if !multiple {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    base.with_file_name(format!("{stem}__seed{seed}.{ext}"))
}

/// Renders a run log as CSV text.
pub fn csv_string(log: &RunLog) -> String {
    let mut out = String::with_capacity(64 * (log.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &log.rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{},{}\n",
            r.round,
            r.f_gap,
            r.dist_sq,
            r.grad_norm_sq,
            r.sampled.len(),
            r.steps_total
        ));
    }
    out
}

pub fn emit_csv(log: &RunLog, path: &Path) -> Result<()> {
    let io = |source| FedError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(csv_string(log).as_bytes()).map_err(io)
}

/// One parsed CSV row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsvRow {
    pub round: usize,
    pub f_gap: f64,
    pub dist_sq: f64,
    pub grad_norm_sq: f64,
    pub n_sampled: usize,
    pub steps_total: usize,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).map_err(|source| FedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text).map_err(|e| FedError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(FedError::Config(format!("unexpected header {other:?}"))),
    }
    let bad = |line: &str| FedError::Config(format!("malformed row {line:?}"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(line));
            }
            Ok(CsvRow {
                round: f[0].parse().map_err(|_| bad(line))?,
                f_gap: f[1].parse().map_err(|_| bad(line))?,
                dist_sq: f[2].parse().map_err(|_| bad(line))?,
                grad_norm_sq: f[3].parse().map_err(|_| bad(line))?,
                n_sampled: f[4].parse().map_err(|_| bad(line))?,
                steps_total: f[5].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentPreset {
    Fig1Left,
    Fig1Momentum,
    Fig1SumOne,
    Fig1Importance,
    AppFHybrid,
}

impl ExperimentPreset {
    pub const ALL: [Self; 5] = [
        Self::Fig1Left,
        Self::Fig1Momentum,
        Self::Fig1SumOne,
        Self::Fig1Importance,
        Self::AppFHybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fig1Left => "fig1_left",
            Self::Fig1Momentum => "fig1_momentum",
            Self::Fig1SumOne => "fig1_sum_one",
            Self::Fig1Importance => "fig1_importance",
            Self::AppFHybrid => "appF_hybrid",
        }
    }

    pub fn rounds(self) -> usize {
        match self {
            Self::Fig1Left | Self::Fig1Momentum | Self::AppFHybrid => 1000,
            Self::Fig1SumOne => 5000,
            Self::Fig1Importance => 2000,
        }
    }

    pub fn problem(self) -> Problem {
        match self {
            Self::Fig1Importance => Problem::importance_quadratic(),
            _ => Problem::quad_obj(),
        }
    }
}

impl fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentPreset {
    type Err = FedError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| FedError::Config(format!("unknown preset {s:?}")))
    }
}

/// Per-client truncation dropping the last scheduled step wherever a client
/// has more than one.
pub fn hybrid_truncation(problem: &Problem, epochs: &[usize]) -> Vec<usize> {
    (0..problem.n_clients())
        .map(|i| usize::from(epochs[i] * problem.size(i) > 1))
        .collect()
}

/// Constants used for theorem-derived step sizes: `B = 1` and a fixed probe set.
pub fn preset_constants(problem: &Problem) -> Result<HeterogeneityConstants> {
    estimate_constants(problem, &probe_points(problem.dim(), 16, 1.0, 7), 1.0)
}

/// Starts at the largest admissible local step and decays so that the
/// effective server step follows `η̃_r = η̃_0 / (1 + μ η̃_0 r)`.
fn with_max_step(mut config: GenConfig, problem: &Problem, constants: &HeterogeneityConstants) -> Result<GenConfig> {
    let bound = gen_max_local_step(&config, problem, constants)?;
    let effective = config.eta_g * config.effective_objective(problem)?.total * bound;
    config.eta_l = StepSchedule::InverseTime {
        initial: bound,
        tau: 1.0 / (constants.mu * effective),
    };
    Ok(config)
}

/// Expands a preset into one configuration per method for one seed.
pub fn preset_configs(preset: ExperimentPreset, seed: u64) -> Result<Vec<GenConfig>> {
    let problem = preset.problem();
    let n = problem.n_clients();
    let constants = preset_constants(&problem)?;
    let rounds = preset.rounds();
    let epochs = vec![1; n];
    let placeholder = StepSchedule::Constant { value: 0.0 };
    let base = |p: Preset, scheme: SamplingScheme| {
        GenConfig::preset(p, &problem, scheme, epochs.clone(), placeholder.clone(), rounds, seed)
    };
    let full = SamplingScheme::full(n)?;
    let baselines = [
        Preset::FedAvgRr,
        Preset::FedAvgMin,
        Preset::FedAvgMean,
        Preset::FedNovaRr,
        Preset::FedShuffle,
    ];
    let configs = match preset {
        ExperimentPreset::Fig1Left => baselines
            .iter()
            .map(|&p| base(p, full.clone()))
            .collect::<Result<Vec<_>>>()?,
        ExperimentPreset::Fig1Momentum => baselines
            .iter()
            .map(|&p| {
                let mut c = base(p, full.clone())?;
                c.momentum = MomentumMode::Global {
                    coeff: 0.9,
                    practical: true,
                };
                Ok(c)
            })
            .collect::<Result<Vec<_>>>()?,
        ExperimentPreset::Fig1SumOne => {
            let uniform = SamplingScheme::uniform(n, 2)?;
            vec![
                base(Preset::FedShuffle, uniform.clone())?,
                base(Preset::FedShuffleSumOne, uniform)?,
            ]
        }
        ExperimentPreset::Fig1Importance => {
            let mut is = base(
                Preset::FedShuffle,
                SamplingScheme::one_client(problem.weights().to_vec())?,
            )?;
            let mut un = base(Preset::FedShuffle, SamplingScheme::one_client(vec![1.0 / n as f64; n])?)?;
            is.name = "FedShuffleIS".into();
            un.name = "FedShuffleUniform".into();
            vec![is, un]
        }
        ExperimentPreset::AppFHybrid => {
            let truncation = hybrid_truncation(&problem, &epochs);
            let mut out = Vec::new();
            for p in [Preset::FedNovaRr, Preset::FedShuffle, Preset::FedShuffleGen] {
                let mut c = base(p, full.clone())?.with_truncation(truncation.clone());
                if p != Preset::FedShuffle {
                    c.restore_consistency(&problem)?;
                }
                out.push(c);
            }
            out
        }
    };
    configs
        .into_iter()
        .map(|c| with_max_step(c, &problem, &constants))
        .collect()
}

pub fn experiment_file_name(preset: ExperimentPreset, method: &str, seed: u64) -> String {
    format!("{}__{}__seed{}.csv", preset.name(), method, seed)
}

/// Runs every method of a preset for each seed, in parallel across runs, and
/// writes one CSV per run into `out_dir`.
pub fn run_experiment(preset: ExperimentPreset, out_dir: &Path, seeds: &[u64]) -> Result<Vec<PathBuf>> {
    let problem = preset.problem();
    let jobs: Vec<GenConfig> = seeds
        .iter()
        .map(|&s| preset_configs(preset, s))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    fs::create_dir_all(out_dir).map_err(|source| FedError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    jobs.par_iter()
        .map(|c| {
            let log = run(c, &problem)?;
            let path = out_dir.join(experiment_file_name(preset, &c.name, c.seed));
            emit_csv(&log, &path)?;
            Ok(path)
        })
        .collect()
}

/// Aggregated outcome of one method across its CSV files.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub files: usize,
    pub final_f_gap: f64,
    pub best_f_gap: f64,
    pub final_dist_sq: f64,
}

type Metric = fn(&MethodSummary) -> f64;

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rounds: usize,
    pub methods: Vec<MethodSummary>,
}

impl Comparison {
    pub fn get(&self, method: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("method,files,final_f_gap,best_f_gap,final_dist_sq\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{:.6e},{:.6e},{:.6e}\n",
                m.method, m.files, m.final_f_gap, m.best_f_gap, m.final_dist_sq
            ));
        }
        out
    }

    /// Checks the ordering a preset is expected to produce.
    pub fn check(&self, preset: ExperimentPreset) -> Result<()> {
        let need = |m: &str| {
            self.get(m)
                .ok_or_else(|| FedError::Config(format!("comparison is missing method {m}")))
        };
        let chain: Vec<(&str, &str, Metric)> = match preset {
            ExperimentPreset::Fig1Left => vec![
                ("FedShuffle", "FedNovaRR", |m| m.final_f_gap),
                ("FedNovaRR", "FedAvgRR", |m| m.final_f_gap),
            ],
            ExperimentPreset::Fig1Momentum => vec![
                ("FedShuffle", "FedNovaRR", |m| m.final_f_gap),
                ("FedShuffle", "FedAvgRR", |m| m.final_f_gap),
            ],
            ExperimentPreset::Fig1SumOne => vec![("FedShuffle", "FedShuffleSO", |m| m.final_dist_sq)],
            ExperimentPreset::Fig1Importance => vec![("FedShuffleIS", "FedShuffleUniform", |m| m.final_f_gap)],
            ExperimentPreset::AppFHybrid => vec![("FedShuffleGen", "FedShuffle", |m| m.final_f_gap)],
        };
        for (better, worse, metric) in chain {
            let (a, b) = (metric(need(better)?), metric(need(worse)?));
            if a > b {
                return Err(FedError::Protocol(format!(
                    "{preset}: expected {better} ({a:.6e}) ≤ {worse} ({b:.6e})"
                )));
            }
        }
        Ok(())
    }
}

/// Method label from an experiment file name `<preset>__<method>__seed<k>.csv`,
/// falling back to the file stem.
pub fn method_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let parts: Vec<&str> = stem.split("__").collect();
    if parts.len() == 3 && parts[2].starts_with("seed") {
        parts[1].to_string()
    } else {
        stem.to_string()
    }
}

/// Summarizes CSV files per method, averaging over files of the same method.
pub fn compare_runs(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.len() < 2 {
        return Err(FedError::Config("compare needs at least two CSV files".into()));
    }
    let mut rounds = None;
    let mut groups: BTreeMap<String, Vec<Vec<CsvRow>>> = BTreeMap::new();
    for p in paths {
        let rows = read_csv(p)?;
        match rounds {
            None => rounds = Some(rows.len()),
            Some(r) if r != rows.len() => {
                return Err(FedError::Config(format!(
                    "{} has {} rows, expected {r}",
                    p.display(),
                    rows.len()
                )))
            }
            _ => {}
        }
        groups.entry(method_label(p)).or_default().push(rows);
    }
    let rounds = rounds.unwrap_or(0);
    if rounds == 0 {
        return Err(FedError::Config("runs have no rounds".into()));
    }
    let methods = groups
        .into_iter()
        .map(|(method, runs)| {
            let k = runs.len() as f64;
            let last = |f: fn(&CsvRow) -> f64| runs.iter().map(|r| f(&r[rounds - 1])).sum::<f64>() / k;
            let best = runs
                .iter()
                .map(|r| r.iter().map(|x| x.f_gap).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / k;
            MethodSummary {
                files: runs.len(),
                final_f_gap: last(|r| r.f_gap),
                best_f_gap: best,
                final_dist_sq: last(|r| r.dist_sq),
                method,
            }
        })
        .collect();
    Ok(Comparison { rounds, methods })
}

/// Outcome of one family of exact-enumeration checks.
#[derive(Clone, Debug, PartialEq)]
pub struct LemmaReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Largest `lhs − rhs` (bounds) or `|lhs − rhs|` (identities) observed.
    pub worst: f64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

fn random_vectors<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<Vector> {
    (0..n)
        .map(|_| Vector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0)))
        .collect()
}

/// Every shipped scheme family on `n` clients with random parameters.
pub fn random_schemes<R: Rng>(rng: &mut R, n: usize) -> Result<Vec<SamplingScheme>> {
    let mut out = vec![SamplingScheme::full(n)?];
    for b in 1..=n {
        out.push(SamplingScheme::uniform(n, b)?);
    }
    out.push(SamplingScheme::independent(
        (0..n).map(|_| rng.gen_range(0.1..1.0)).collect(),
    )?);
    out.push(SamplingScheme::one_client(random_simplex(rng, n))?);
    Ok(out)
}

const BOUND_SLACK: f64 = 1e-12;
const PSD_SLACK: f64 = 1e-10;
const SWR_TOL: f64 = 1e-10;

/// Exact-enumeration checks of the variance bounds for arbitrary sampling,
/// sampling without replacement and general normalizers.
pub fn check_lemmas(n: usize, trials: usize, seed: u64) -> Result<Vec<LemmaReport>> {
    if !(2..=crate::sampling::MAX_ENUMERABLE).contains(&n) {
        return Err(FedError::Config(format!(
            "n must lie in 2..={}",
            crate::sampling::MAX_ENUMERABLE
        )));
    }
    let mut rng = rng::stream(seed, 0, rng::AUX_TAG, 4);
    let mut reports = [
        LemmaReport {
            name: "var_arbitrary",
            cases: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
        },
        LemmaReport {
            name: "sampling_wo_replacement",
            cases: 0,
            failures: 0,
            worst: 0.0,
        },
        LemmaReport {
            name: "general_bound",
            cases: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
        },
    ];
    for _ in 0..trials {
        let w = random_simplex(&mut rng, n);
        let zetas = random_vectors(&mut rng, n, 3);
        for scheme in random_schemes(&mut rng, n)? {
            let (lhs, rhs) = variance_bound_check(&zetas, &w, &scheme)?;
            let gap = lhs - rhs;
            let r = &mut reports[0];
            r.cases += 1;
            r.worst = r.worst.max(gap);
            if gap > BOUND_SLACK * (1.0 + rhs) || scheme.psd_slack() > PSD_SLACK {
                r.failures += 1;
            }
            for rule in [
                NormalizerRule::Unbiased,
                NormalizerRule::sum_one(),
                NormalizerRule::fedavg(&scheme),
            ] {
                let (lhs, rhs) = general_variance_check(&zetas, &w, &scheme, &rule)?;
                let stats = crate::sampling::normalizer_stats(&scheme, &rule, &w)?;
                let gap = lhs - rhs;
                let r = &mut reports[2];
                r.cases += 1;
                r.worst = r.worst.max(gap);
                if gap > BOUND_SLACK * (1.0 + rhs) || stats.psd_slack() > PSD_SLACK {
                    r.failures += 1;
                }
            }
        }
        for k in 1..=n {
            let (emp, formula) = swr_variance_check(&zetas, k)?;
            let err = (emp - formula).abs();
            let r = &mut reports[1];
            r.cases += 1;
            r.worst = r.worst.max(err);
            if err > SWR_TOL {
                r.failures += 1;
            }
        }
    }
    Ok(reports.to_vec())
}

/// `(client, w_i, ŵ_i)` for the first seed of a configuration.
pub fn diagnose_weights(prepared: &PreparedRun) -> Result<Vec<(usize, f64, f64)>> {
    let config = prepared
        .configs
        .first()
        .ok_or_else(|| FedError::Config("no seeds configured".into()))?;
    let eff = config.effective_objective(&prepared.problem)?;
    Ok(prepared
        .problem
        .weights()
        .iter()
        .zip(&eff.w_hat)
        .enumerate()
        .map(|(i, (w, wh))| (i, *w, *wh))
        .collect())
}
