//! Server-side combination of client updates and the objective each
//! parametrization actually minimizes.

use std::collections::BTreeMap;

use crate::error::{arg, FedError, Result};
use crate::problems::{Problem, Vector};
use crate::sampling::{normalizer_stats, NormalizerRule, SamplingScheme};

/// `Δ = Σ_{i∈S} (w̃_i / q_i^S) Δ_i`, summed in ascending client order.
pub fn aggregate(
    agg_weights: &[f64],
    rule: &NormalizerRule,
    scheme: &SamplingScheme,
    w: &[f64],
    sampled: &[usize],
    deltas: &BTreeMap<usize, Vector>,
) -> Result<Vector> {
    let mut order = sampled.to_vec();
    order.sort_unstable();
    let first = order
        .first()
        .ok_or_else(|| FedError::Protocol("empty sampled set".into()))?;
    let dim = deltas
        .get(first)
        .map(|d| d.len())
        .ok_or_else(|| FedError::Protocol(format!("missing update from client {first}")))?;
    let mut acc = Vector::zeros(dim);
    for &i in &order {
        let d = deltas
            .get(&i)
            .ok_or_else(|| FedError::Protocol(format!("missing update from client {i}")))?;
        let coef = agg_weights[i] / rule.evaluate(i, &order, scheme, w);
        acc += d * coef;
    }
    Ok(acc)
}

/// Weights `ŵ` of the objective `Σ ŵ_i f_i` a parametrization converges to.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveObjective {
    pub w_hat: Vec<f64>,
    /// Normalizer `W` making `Σ ŵ_i = 1`.
    pub total: f64,
    pub q: Vec<f64>,
    pub c: Vec<f64>,
}

/// `ŵ_i = w̃_i K_i / (W q_i c_i)` where `K_i` is the number of local steps
/// (`E_i |D_i|` for full epochs) and `1/q_i = E[1_{i∈S}/q_i^S]`.
pub fn effective_weights(
    agg_weights: &[f64],
    step_normalizers: &[f64],
    local_steps: &[f64],
    rule: &NormalizerRule,
    scheme: &SamplingScheme,
    w: &[f64],
) -> Result<EffectiveObjective> {
    let n = scheme.n();
    if [agg_weights.len(), step_normalizers.len(), local_steps.len(), w.len()]
        .iter()
        .any(|&l| l != n)
    {
        return arg(format!("all per-client vectors must have length {n}"));
    }
    let stats = normalizer_stats(scheme, rule, w)?;
    let raw: Vec<f64> = (0..n)
        .map(|i| agg_weights[i] * local_steps[i] / (stats.q[i] * step_normalizers[i]))
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return arg("effective weights vanish");
    }
    Ok(EffectiveObjective {
        w_hat: raw.iter().map(|r| r / total).collect(),
        total,
        q: stats.q,
        c: step_normalizers.to_vec(),
    })
}

/// Stationary point `Σ ŵ_i ē_i` of `Σ ŵ_i f_i` for quadratic problems.
pub fn predicted_limit(problem: &Problem, w_hat: &[f64]) -> Result<Vector> {
    problem.weighted_minimizer(w_hat)
}
