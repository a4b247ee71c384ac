//! Finite-sum objectives `f(x) = Σ_i w_i f_i(x)` with `f_i = mean_j f_ij`.
//!
//! Indices are zero-based throughout: client `i ∈ 0..n`, sample `j ∈ 0..|D_i|`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{arg, FedError, Result};
use crate::rng;

pub type Vector = DVector<f64>;

/// Tolerance on `Σ w_i = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    /// `f(x) = ||x - anchor||²`
    Anchor(Vector),
    /// `f(x) = ln(1 + exp(-label·<features, x>)) + (ridge/2)||x||²`
    Logistic { features: Vector, label: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Quadratic,
    DuplicatedQuadratic,
    Logistic,
}

impl ProblemKind {
    pub fn is_quadratic(self) -> bool {
        matches!(self, Self::Quadratic | Self::DuplicatedQuadratic)
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    kind: ProblemKind,
    dim: usize,
    clients: Vec<Vec<Sample>>,
    weights: Vec<f64>,
    ridge: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn size_weights(sizes: &[usize]) -> Vec<f64> {
    let total: usize = sizes.iter().sum();
    sizes.iter().map(|&s| s as f64 / total as f64).collect()
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return arg(format!("expected {n} weights, got {}", weights.len()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return arg("weights must be finite and nonnegative");
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return arg(format!("weights sum to {sum}, not 1"));
    }
    Ok(())
}

/// Canonical basis vector `e_k` in `R^dim`.
pub fn basis(dim: usize, k: usize) -> Vector {
    let mut v = Vector::zeros(dim);
    v[k] = 1.0;
    v
}

impl Problem {
    /// Quadratic problem with per-sample anchors. Weights default to `|D_i|/|D|`.
    pub fn quadratic(anchors: Vec<Vec<Vector>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let dim = anchors
            .first()
            .and_then(|c| c.first())
            .map(|a| a.len())
            .ok_or_else(|| FedError::Argument("at least one client with one sample required".into()))?;
        if anchors.iter().any(|c| c.is_empty()) {
            return arg("every client needs at least one sample");
        }
        if anchors.iter().flatten().any(|a| a.len() != dim) {
            return arg("anchor dimensions differ");
        }
        let sizes: Vec<usize> = anchors.iter().map(Vec::len).collect();
        let weights = weights.unwrap_or_else(|| size_weights(&sizes));
        check_weights(&weights, anchors.len())?;
        let clients = anchors
            .into_iter()
            .map(|c| c.into_iter().map(Sample::Anchor).collect())
            .collect();
        Ok(Self {
            kind: ProblemKind::Quadratic,
            dim,
            clients,
            weights,
            ridge: 0.0,
        })
    }

    /// Client `i` holds `sizes[i]` identical copies of `anchors[i]`; `w_i = |D_i|/|D|`.
    pub fn duplicated_quadratic(anchors: Vec<Vector>, sizes: Vec<usize>) -> Result<Self> {
        if anchors.len() != sizes.len() {
            return arg("anchors and sizes differ in length");
        }
        if sizes.contains(&0) {
            return arg("client sizes must be positive");
        }
        let per_client = anchors.into_iter().zip(&sizes).map(|(a, &s)| vec![a; s]).collect();
        let mut p = Self::quadratic(per_client, None)?;
        p.kind = ProblemKind::DuplicatedQuadratic;
        Ok(p)
    }

    /// Six basis anchors in `R^6`, split over three clients as 1/2/3 samples.
    pub fn quad_obj() -> Self {
        Self::split_basis(6, &[1, 2, 3]).expect("static instance")
    }

    /// Basis anchors in `R^10` split 8/1/1, used for the importance-sampling study.
    pub fn importance_quadratic() -> Self {
        Self::split_basis(10, &[8, 1, 1]).expect("static instance")
    }

    /// Distinct basis anchors `e_0..e_{dim-1}` dealt out to clients in order.
    pub fn split_basis(dim: usize, sizes: &[usize]) -> Result<Self> {
        if sizes.iter().sum::<usize>() != dim {
            return arg("sizes must sum to the dimension");
        }
        let mut next = 0;
        let anchors = sizes
            .iter()
            .map(|&s| {
                let c = (next..next + s).map(|k| basis(dim, k)).collect();
                next += s;
                c
            })
            .collect();
        Self::quadratic(anchors, None)
    }

    /// Two-client logistic regression with Gaussian features and labels from a
    /// planted separator. Only used for gradient-oracle coverage.
    pub fn logistic(sizes: &[usize], dim: usize, ridge: f64, seed: u64) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) || dim == 0 {
            return arg("logistic problem needs positive sizes and dimension");
        }
        let mut rng = rng::stream(seed, 0, 0, 0);
        let planted = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let clients = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                // shift each client's feature mean so the data are heterogeneous
                let shift = i as f64 * 0.5;
                (0..s)
                    .map(|_| {
                        let features = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal) + shift);
                        let label = if planted.dot(&features) >= 0.0 { 1.0 } else { -1.0 };
                        Sample::Logistic { features, label }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            kind: ProblemKind::Logistic,
            dim,
            clients,
            weights: size_weights(sizes),
            ridge,
        })
    }

    /// Replaces the objective weights.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights, self.clients.len())?;
        self.weights = weights;
        Ok(self)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn size(&self, i: usize) -> usize {
        self.clients[i].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(Vec::len).collect()
    }

    pub fn total_size(&self) -> usize {
        self.clients.iter().map(Vec::len).sum()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn samples(&self, i: usize) -> &[Sample] {
        &self.clients[i]
    }

    fn sample(&self, i: usize, j: usize) -> Result<&Sample> {
        let client = self
            .clients
            .get(i)
            .ok_or_else(|| FedError::Argument(format!("client {i} out of range")))?;
        client
            .get(j)
            .ok_or_else(|| FedError::Argument(format!("sample {j} out of range for client {i}")))
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return arg(format!("point has dimension {}, expected {}", x.len(), self.dim));
        }
        Ok(())
    }

    /// `f_ij(x)`.
    pub fn value(&self, i: usize, j: usize, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self.sample(i, j)? {
            Sample::Anchor(e) => (x - e).norm_squared(),
            Sample::Logistic { features, label } => {
                softplus(-label * features.dot(x)) + 0.5 * self.ridge * x.norm_squared()
            }
        })
    }

    /// `∇f_ij(x)`.
    pub fn gradient(&self, i: usize, j: usize, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        Ok(self.sample_gradient(self.sample(i, j)?, x))
    }

    pub(crate) fn sample_gradient(&self, s: &Sample, x: &Vector) -> Vector {
        match s {
            Sample::Anchor(e) => (x - e) * 2.0,
            Sample::Logistic { features, label } => {
                let z = label * features.dot(x);
                features * (-label * sigmoid(-z)) + x * self.ridge
            }
        }
    }

    /// Gradient of sample `j` of client `i` without bounds or dimension checks.
    pub(crate) fn gradient_unchecked(&self, i: usize, j: usize, x: &Vector) -> Vector {
        self.sample_gradient(&self.clients[i][j], x)
    }

    /// `∇²f_ij(x)`.
    pub fn hessian(&self, i: usize, j: usize, x: &Vector) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let d = self.dim;
        Ok(match self.sample(i, j)? {
            Sample::Anchor(_) => DMatrix::identity(d, d) * 2.0,
            Sample::Logistic { features, label } => {
                let s = sigmoid(label * features.dot(x));
                features * features.transpose() * (s * (1.0 - s)) + DMatrix::identity(d, d) * self.ridge
            }
        })
    }

    pub fn client_value(&self, i: usize, x: &Vector) -> Result<f64> {
        let m = self.size(i);
        let mut acc = 0.0;
        for j in 0..m {
            acc += self.value(i, j, x)?;
        }
        Ok(acc / m as f64)
    }

    pub fn client_gradient(&self, i: usize, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        if i >= self.n_clients() {
            return arg(format!("client {i} out of range"));
        }
        let mut acc = Vector::zeros(self.dim);
        for s in &self.clients[i] {
            acc += self.sample_gradient(s, x);
        }
        Ok(acc / self.size(i) as f64)
    }

    pub fn client_hessian(&self, i: usize, x: &Vector) -> Result<DMatrix<f64>> {
        let mut acc = DMatrix::zeros(self.dim, self.dim);
        for j in 0..self.size(i) {
            acc += self.hessian(i, j, x)?;
        }
        Ok(acc / self.size(i) as f64)
    }

    pub fn full_value(&self, x: &Vector) -> Result<f64> {
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w * self.client_value(i, x)?;
        }
        Ok(acc)
    }

    pub fn full_gradient(&self, x: &Vector) -> Result<Vector> {
        self.weighted_gradient(&self.weights, x)
    }

    /// `Σ_i v_i ∇f_i(x)` for arbitrary client weights `v`.
    pub fn weighted_gradient(&self, v: &[f64], x: &Vector) -> Result<Vector> {
        if v.len() != self.n_clients() {
            return arg("weight vector length differs from client count");
        }
        let mut acc = Vector::zeros(self.dim);
        for (i, vi) in v.iter().enumerate() {
            acc += self.client_gradient(i, x)? * *vi;
        }
        Ok(acc)
    }

    /// Mean anchor of client `i` (quadratics only).
    pub fn anchor_mean(&self, i: usize) -> Result<Vector> {
        if !self.kind.is_quadratic() {
            return Err(FedError::Unsupported("anchor mean requires a quadratic problem".into()));
        }
        let mut acc = Vector::zeros(self.dim);
        for s in &self.clients[i] {
            if let Sample::Anchor(e) = s {
                acc += e;
            }
        }
        Ok(acc / self.size(i) as f64)
    }

    /// Stationary point of `Σ v_i f_i` for a quadratic, i.e. `Σ v_i ē_i / Σ v_i`.
    pub fn weighted_minimizer(&self, v: &[f64]) -> Result<Vector> {
        if !self.kind.is_quadratic() {
            return Err(FedError::Unsupported(
                "closed-form minimizer requires a quadratic problem".into(),
            ));
        }
        if v.len() != self.n_clients() {
            return arg("weight vector length differs from client count");
        }
        let total: f64 = v.iter().sum();
        if total <= 0.0 {
            return arg("weights must have positive sum");
        }
        let mut acc = Vector::zeros(self.dim);
        for (i, vi) in v.iter().enumerate() {
            acc += self.anchor_mean(i)? * (*vi / total);
        }
        Ok(acc)
    }

    /// `x*`: the w-weighted mean of client anchor means.
    pub fn true_minimizer(&self) -> Result<Vector> {
        self.weighted_minimizer(&self.weights)
    }

    /// `x̃ = Σ|D_i|² e_i / Σ|D_i|²`, the limit of FedAvg with unbalanced epochs.
    pub fn inconsistent_fixed_point(&self) -> Result<Vector> {
        if self.kind != ProblemKind::DuplicatedQuadratic {
            return Err(FedError::Unsupported(
                "inconsistent fixed point is defined for duplicated quadratics".into(),
            ));
        }
        let sizes = self.sizes();
        let expected = size_weights(&sizes);
        if expected
            .iter()
            .zip(&self.weights)
            .any(|(a, b)| (a - b).abs() > WEIGHT_SUM_TOL)
        {
            return arg("inconsistent fixed point assumes w_i = |D_i|/|D|");
        }
        let sq: Vec<f64> = sizes.iter().map(|&s| (s * s) as f64).collect();
        self.weighted_minimizer(&sq)
    }

    /// Minimizer and optimal value: closed form for quadratics, Newton's method
    /// otherwise.
    pub fn reference_optimum(&self) -> Result<(Vector, f64)> {
        let x = if self.kind.is_quadratic() {
            self.true_minimizer()?
        } else {
            let mut x = Vector::zeros(self.dim);
            for _ in 0..100 {
                let g = self.full_gradient(&x)?;
                if g.norm() < 1e-14 {
                    break;
                }
                let mut h = DMatrix::zeros(self.dim, self.dim);
                for (i, w) in self.weights.iter().enumerate() {
                    h += self.client_hessian(i, &x)? * *w;
                }
                let step = h
                    .cholesky()
                    .ok_or_else(|| FedError::Unsupported("Hessian not positive definite".into()))?
                    .solve(&g);
                x -= step;
            }
            x
        };
        let f = self.full_value(&x)?;
        Ok((x, f))
    }

    /// Smoothness constant of every sample loss.
    pub fn smoothness(&self) -> f64 {
        match self.kind {
            ProblemKind::Quadratic | ProblemKind::DuplicatedQuadratic => 2.0,
            ProblemKind::Logistic => {
                let max_sq = self
                    .clients
                    .iter()
                    .flatten()
                    .map(|s| match s {
                        Sample::Logistic { features, .. } => features.norm_squared(),
                        Sample::Anchor(_) => 0.0,
                    })
                    .fold(0.0, f64::max);
                0.25 * max_sq + self.ridge
            }
        }
    }

    /// Strong-convexity constant shared by every sample loss.
    pub fn strong_convexity(&self) -> f64 {
        match self.kind {
            ProblemKind::Quadratic | ProblemKind::DuplicatedQuadratic => 2.0,
            ProblemKind::Logistic => self.ridge,
        }
    }
}

/// Measured problem constants; see [`estimate_constants`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeterogeneityConstants {
    pub l: f64,
    pub mu: f64,
    pub g_sq: f64,
    pub b: f64,
    /// Per-client `σ_i²`.
    pub sigma_sq: Vec<f64>,
    /// Per-client `P_i²`.
    pub p_sq: Vec<f64>,
    pub delta: f64,
    pub sizes: Vec<usize>,
}

impl HeterogeneityConstants {
    /// `P² = max_i P_i²/|D_i|`.
    pub fn p_agg_sq(&self) -> f64 {
        self.p_sq
            .iter()
            .zip(&self.sizes)
            .map(|(p, &s)| p / s as f64)
            .fold(0.0, f64::max)
    }

    /// `σ² = (1/|D|) Σ σ_i²`.
    pub fn sigma_agg_sq(&self) -> f64 {
        let total: usize = self.sizes.iter().sum();
        self.sigma_sq.iter().sum::<f64>() / total as f64
    }

    /// `β = 1 + (1+P)B + M B²` for a sampling constant `M`.
    pub fn beta(&self, m: f64) -> f64 {
        1.0 + (1.0 + self.p_agg_sq().sqrt()) * self.b + m * self.b * self.b
    }
}

/// `count` Gaussian probe points scaled by `radius`.
pub fn probe_points(dim: usize, count: usize, radius: f64, seed: u64) -> Vec<Vector> {
    let mut rng = rng::stream(seed, 0, rng::AUX_TAG, 1);
    (0..count)
        .map(|_| Vector::from_fn(dim, |_, _| radius * rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Empirical constants over a probe set.
///
/// `G²` is the smallest value satisfying the gradient-similarity bound at every
/// probe for the given `B`; `σ_i²` is fitted with `P_i = 0`; `δ` is the largest
/// spectral gap between a client Hessian and the global one.
pub fn estimate_constants(problem: &Problem, probes: &[Vector], b: f64) -> Result<HeterogeneityConstants> {
    if probes.is_empty() {
        return arg("at least one probe point required");
    }
    let n = problem.n_clients();
    let w = problem.weights();
    let mut g_sq: f64 = 0.0;
    let mut sigma_sq = vec![0.0_f64; n];
    let mut delta: f64 = 0.0;
    for x in probes {
        let client_grads: Vec<Vector> = (0..n).map(|i| problem.client_gradient(i, x)).collect::<Result<_>>()?;
        let full = problem.full_gradient(x)?;
        let lhs: f64 = client_grads.iter().zip(w).map(|(g, wi)| wi * g.norm_squared()).sum();
        g_sq = g_sq.max(lhs - b * b * full.norm_squared());
        for i in 0..n {
            let m = problem.size(i);
            let mut var = 0.0;
            for j in 0..m {
                var += (problem.gradient(i, j, x)? - &client_grads[i]).norm_squared();
            }
            sigma_sq[i] = sigma_sq[i].max(var / m as f64);
        }
        if !problem.kind().is_quadratic() {
            let hessians: Vec<DMatrix<f64>> = (0..n).map(|i| problem.client_hessian(i, x)).collect::<Result<_>>()?;
            let mut global = DMatrix::zeros(problem.dim(), problem.dim());
            for (h, wi) in hessians.iter().zip(w) {
                global += h * *wi;
            }
            for h in &hessians {
                delta = delta.max(spectral_norm(&(h - &global)));
            }
        }
    }
    Ok(HeterogeneityConstants {
        l: problem.smoothness(),
        mu: problem.strong_convexity(),
        g_sq: g_sq.max(0.0),
        b,
        sigma_sq,
        p_sq: vec![0.0; n],
        delta,
        sizes: problem.sizes(),
    })
}
