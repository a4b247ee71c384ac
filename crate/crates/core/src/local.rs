//! One client's local work in one round: random-reshuffling epochs with a
//! per-client step normalizer, optionally with the momentum-variance-reduced
//! direction.

use rand::seq::SliceRandom;

use crate::error::{arg, FedError, Result};
use crate::problems::{Problem, Vector};
use crate::rng;

/// Per-epoch permutations of a client's sample indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationPlan {
    pub epochs: Vec<Vec<usize>>,
}

/// Fisher–Yates shuffles, one per epoch, each from its own derived stream.
pub fn make_permutations(master_seed: u64, round: u64, client: u64, epochs: usize, size: usize) -> PermutationPlan {
    let epochs = (0..epochs)
        .map(|e| {
            let mut perm: Vec<usize> = (0..size).collect();
            let mut r = rng::stream(master_seed, round, client, e as u64);
            perm.shuffle(&mut r);
            perm
        })
        .collect();
    PermutationPlan { epochs }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalWorkSpec {
    pub epochs: usize,
    /// Step normalizer `c_i`; the per-step size is `eta_l / c_i`.
    pub step_normalizer: f64,
    pub eta_l: f64,
    /// Trailing steps skipped at the end of the last epoch.
    pub truncation: usize,
}

impl LocalWorkSpec {
    pub fn new(epochs: usize, step_normalizer: f64, eta_l: f64) -> Self {
        Self {
            epochs,
            step_normalizer,
            eta_l,
            truncation: 0,
        }
    }

    pub fn with_truncation(mut self, truncation: usize) -> Self {
        self.truncation = truncation;
        self
    }

    /// Per-step size `eta_l / c_i`.
    pub fn step_size(&self) -> f64 {
        self.eta_l / self.step_normalizer
    }

    pub fn total_steps(&self, size: usize) -> usize {
        self.epochs * size - self.truncation
    }

    pub fn validate(&self, size: usize) -> Result<()> {
        if self.epochs == 0 {
            return arg("epochs must be positive");
        }
        if !(self.step_normalizer > 0.0 && self.step_normalizer.is_finite()) {
            return arg("step normalizer must be positive");
        }
        if !(self.eta_l >= 0.0 && self.eta_l.is_finite()) {
            return arg("local step size must be nonnegative");
        }
        if self.truncation >= self.epochs * size {
            return arg(format!(
                "truncation {} must be below the {} scheduled steps",
                self.truncation,
                self.epochs * size
            ));
        }
        Ok(())
    }
}

/// Server momentum and the anchor point used by the corrected direction.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumState {
    pub m: Vector,
    pub a: f64,
}

impl MomentumState {
    pub fn new(m: Vector, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return arg(format!("momentum parameter a = {a} outside [0, 1]"));
        }
        Ok(Self { m, a })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOutcome {
    pub y: Vector,
    pub delta: Vector,
    pub steps_taken: usize,
}

fn check_plan(plan: &PermutationPlan, epochs: usize, size: usize) -> Result<()> {
    if plan.epochs.len() < epochs || plan.epochs.iter().take(epochs).any(|p| p.len() != size) {
        return arg("permutation plan does not cover the scheduled epochs");
    }
    Ok(())
}

/// The sample order of all scheduled steps after truncation.
fn schedule<'a>(plan: &'a PermutationPlan, spec: &LocalWorkSpec, size: usize) -> impl Iterator<Item = usize> + 'a {
    plan.epochs
        .iter()
        .take(spec.epochs)
        .flatten()
        .copied()
        .take(spec.total_steps(size))
}

/// Plain local RR steps `y ← y − (eta_l/c_i) ∇f_{iΠ(j)}(y)`.
pub fn run_local(
    problem: &Problem,
    client: usize,
    x_start: &Vector,
    spec: &LocalWorkSpec,
    plan: &PermutationPlan,
) -> Result<LocalOutcome> {
    if client >= problem.n_clients() {
        return arg(format!("client {client} out of range"));
    }
    let size = problem.size(client);
    spec.validate(size)?;
    check_plan(plan, spec.epochs, size)?;
    if x_start.len() != problem.dim() {
        return arg("start point has the wrong dimension");
    }
    let step = spec.step_size();
    let mut y = x_start.clone();
    let mut steps = 0;
    for j in schedule(plan, spec, size) {
        let g = problem.gradient_unchecked(client, j, &y);
        y -= g * step;
        steps += 1;
    }
    let delta = &y - x_start;
    Ok(LocalOutcome {
        y,
        delta,
        steps_taken: steps,
    })
}

/// Corrected direction `a∇f(y) + (1−a)m + (1−a)(∇f(y) − ∇f(x))` for one sample.
pub fn mvr_direction(grad_y: &Vector, grad_anchor: &Vector, momentum: &MomentumState) -> Vector {
    let a = momentum.a;
    if a == 1.0 {
        return grad_y.clone();
    }
    grad_y * a + &momentum.m * (1.0 - a) + (grad_y - grad_anchor) * (1.0 - a)
}

/// Local RR steps along the corrected direction, with per-step size
/// `eta_l/|D_i|` and the round's anchor `x_anchor`.
pub fn run_local_mvr(
    problem: &Problem,
    client: usize,
    x_start: &Vector,
    spec: &LocalWorkSpec,
    momentum: Option<&MomentumState>,
    x_anchor: &Vector,
    plan: &PermutationPlan,
) -> Result<LocalOutcome> {
    let momentum = momentum.ok_or_else(|| FedError::Argument("mvr mode requires a momentum state".into()))?;
    if client >= problem.n_clients() {
        return arg(format!("client {client} out of range"));
    }
    let size = problem.size(client);
    let spec = LocalWorkSpec {
        step_normalizer: size as f64,
        ..spec.clone()
    };
    spec.validate(size)?;
    check_plan(plan, spec.epochs, size)?;
    if x_start.len() != problem.dim() || x_anchor.len() != problem.dim() || momentum.m.len() != problem.dim() {
        return arg("dimension mismatch in mvr inputs");
    }
    let step = spec.step_size();
    let mut y = x_start.clone();
    let mut steps = 0;
    for j in schedule(plan, &spec, size) {
        let gy = problem.gradient_unchecked(client, j, &y);
        let gx = problem.gradient_unchecked(client, j, x_anchor);
        y -= mvr_direction(&gy, &gx, momentum) * step;
        steps += 1;
    }
    let delta = &y - x_start;
    Ok(LocalOutcome {
        y,
        delta,
        steps_taken: steps,
    })
}
