//! Client-participation distributions, their probability matrices and the
//! exact-enumeration oracles for the estimator-variance bounds.

use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, FedError, Result};
use crate::problems::Vector;

/// Largest client count handled by the subset-enumeration oracles.
pub const MAX_ENUMERABLE: usize = 12;
/// Largest population for the without-replacement oracle.
pub const MAX_SWR: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum SchemeKind {
    Full,
    /// `b` clients drawn uniformly without replacement.
    UniformB {
        b: usize,
    },
    /// Client `i` joins independently with probability `p[i]`.
    Independent {
        p: Vec<f64>,
    },
    /// Exactly one client, drawn with probabilities `pi`.
    OneClient {
        pi: Vec<f64>,
    },
    /// Enumerated subsets with their probabilities.
    Explicit {
        subsets: Vec<Vec<usize>>,
        probs: Vec<f64>,
    },
}

/// One atom of a sampling distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub members: Vec<usize>,
    pub prob: f64,
}

/// A proper client sampling with its probability vector `p`, probability
/// matrix `P_ij = Pr[{i,j} ⊆ S]` and diagonal certificate `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingScheme {
    n: usize,
    kind: SchemeKind,
    p: Vec<f64>,
    pmat: DMatrix<f64>,
    s: Vec<f64>,
}

fn mask_members(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Row-wise Gershgorin certificate: the smallest `s_i ≥ 0` with
/// `scale_i·s_i ≥ A_ii + Σ_{j≠i} |A_ij|`.
fn gershgorin(a: &DMatrix<f64>, scale: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| {
            let radius: f64 = (0..a.ncols()).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            ((a[(i, i)] + radius) / scale[i]).max(0.0)
        })
        .collect()
}

fn check_probability_vector(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return arg(format!("{what}: empty probability vector"));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
        return arg(format!("{what}: probabilities must lie in [0, 1]"));
    }
    if v.contains(&0.0) {
        return arg(format!(
            "{what}: improper sampling, some client has zero inclusion probability"
        ));
    }
    Ok(())
}

impl SamplingScheme {
    pub fn full(n: usize) -> Result<Self> {
        if n == 0 {
            return arg("need at least one client");
        }
        Self::build(n, SchemeKind::Full)
    }

    pub fn uniform(n: usize, b: usize) -> Result<Self> {
        if b == 0 || b > n {
            return arg(format!("uniform sampling needs 1 ≤ b ≤ n, got b = {b}, n = {n}"));
        }
        Self::build(n, SchemeKind::UniformB { b })
    }

    pub fn independent(p: Vec<f64>) -> Result<Self> {
        check_probability_vector(&p, "independent")?;
        Self::build(p.len(), SchemeKind::Independent { p })
    }

    pub fn one_client(pi: Vec<f64>) -> Result<Self> {
        check_probability_vector(&pi, "one_client")?;
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return arg(format!("one_client: probabilities sum to {total}"));
        }
        Self::build(pi.len(), SchemeKind::OneClient { pi })
    }

    pub fn explicit(n: usize, subsets: Vec<Vec<usize>>, probs: Vec<f64>) -> Result<Self> {
        if subsets.len() != probs.len() || subsets.is_empty() {
            return arg("explicit: subsets and probabilities must be nonempty and equal in length");
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return arg("explicit: probabilities must be nonnegative");
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return arg(format!("explicit: probabilities sum to {total}"));
        }
        let mut canonical = Vec::with_capacity(subsets.len());
        for s in subsets {
            let mut s = s;
            s.sort_unstable();
            s.dedup();
            if s.iter().any(|&i| i >= n) {
                return arg("explicit: subset member out of range");
            }
            canonical.push(s);
        }
        Self::build(
            n,
            SchemeKind::Explicit {
                subsets: canonical,
                probs,
            },
        )
    }

    fn build(n: usize, kind: SchemeKind) -> Result<Self> {
        let pmat = match &kind {
            SchemeKind::Full => DMatrix::from_element(n, n, 1.0),
            SchemeKind::UniformB { b } => {
                let (nf, bf) = (n as f64, *b as f64);
                let off = if n > 1 {
                    bf * (bf - 1.0) / (nf * (nf - 1.0))
                } else {
                    0.0
                };
                DMatrix::from_fn(n, n, |i, j| if i == j { bf / nf } else { off })
            }
            SchemeKind::Independent { p } => DMatrix::from_fn(n, n, |i, j| if i == j { p[i] } else { p[i] * p[j] }),
            SchemeKind::OneClient { pi } => DMatrix::from_diagonal(&Vector::from_row_slice(pi)),
            SchemeKind::Explicit { subsets, probs } => {
                let mut m = DMatrix::zeros(n, n);
                for (s, pr) in subsets.iter().zip(probs) {
                    for &i in s {
                        for &j in s {
                            m[(i, j)] += pr;
                        }
                    }
                }
                m
            }
        };
        let p: Vec<f64> = (0..n).map(|i| pmat[(i, i)]).collect();
        if p.iter().any(|&x| x <= 0.0) {
            return arg("improper sampling: some client is never selected");
        }
        let s = match &kind {
            SchemeKind::Full => vec![0.0; n],
            SchemeKind::UniformB { b } => {
                let v = if n > 1 { (n - b) as f64 / (n - 1) as f64 } else { 0.0 };
                vec![v; n]
            }
            SchemeKind::Independent { p } => p.iter().map(|x| 1.0 - x).collect(),
            SchemeKind::OneClient { .. } => vec![1.0; n],
            SchemeKind::Explicit { .. } => {
                let pp = Vector::from_row_slice(&p);
                gershgorin(&(&pmat - &pp * pp.transpose()), &p)
            }
        };
        Ok(Self { n, kind, p, pmat, s })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &SchemeKind {
        &self.kind
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn probability_matrix(&self) -> &DMatrix<f64> {
        &self.pmat
    }

    /// Expected cohort size `b = trace(P)`.
    pub fn expected_cohort(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Diagonal certificate `s` with `P − pp^⊤ ⪯ Diag(p∘s)`.
    pub fn s_vector(&self) -> &[f64] {
        &self.s
    }

    pub fn is_one_client(&self) -> bool {
        matches!(self.kind, SchemeKind::OneClient { .. })
            || matches!(self.kind, SchemeKind::UniformB { b: 1 })
            || (self.n == 1 && matches!(self.kind, SchemeKind::Full))
    }

    /// `max_i s_i w_i / p_i`.
    pub fn m_constant(&self, w: &[f64]) -> f64 {
        self.s
            .iter()
            .zip(&self.p)
            .zip(w)
            .map(|((s, p), wi)| s * wi / p)
            .fold(0.0, f64::max)
    }

    /// Largest eigenvalue of `P − pp^⊤ − Diag(p∘s)`; nonpositive when `s` is valid.
    pub fn psd_slack(&self) -> f64 {
        let pp = Vector::from_row_slice(&self.p);
        let diag = Vector::from_iterator(self.n, self.p.iter().zip(&self.s).map(|(p, s)| p * s));
        max_eigenvalue(&(&self.pmat - &pp * pp.transpose() - DMatrix::from_diagonal(&diag)))
    }

    /// Every subset with its probability. The unconditioned distribution is
    /// listed, so independent sampling includes the empty set.
    pub fn outcomes(&self) -> Result<Vec<Outcome>> {
        let n = self.n;
        if let SchemeKind::Explicit { subsets, probs } = &self.kind {
            return Ok(subsets
                .iter()
                .zip(probs)
                .map(|(s, &prob)| Outcome {
                    members: s.clone(),
                    prob,
                })
                .collect());
        }
        if n > MAX_ENUMERABLE {
            return Err(FedError::Unsupported(format!(
                "enumeration limited to n ≤ {MAX_ENUMERABLE}, got {n}"
            )));
        }
        Ok(match &self.kind {
            SchemeKind::Full => vec![Outcome {
                members: (0..n).collect(),
                prob: 1.0,
            }],
            SchemeKind::UniformB { b } => {
                let subsets: Vec<Vec<usize>> = (0u64..1 << n)
                    .filter(|m| m.count_ones() as usize == *b)
                    .map(|m| mask_members(m, n))
                    .collect();
                let prob = 1.0 / subsets.len() as f64;
                subsets.into_iter().map(|members| Outcome { members, prob }).collect()
            }
            SchemeKind::Independent { p } => (0u64..1 << n)
                .map(|m| {
                    let prob = (0..n)
                        .map(|i| if m >> i & 1 == 1 { p[i] } else { 1.0 - p[i] })
                        .product();
                    Outcome {
                        members: mask_members(m, n),
                        prob,
                    }
                })
                .collect(),
            SchemeKind::OneClient { pi } => pi
                .iter()
                .enumerate()
                .map(|(i, &prob)| Outcome { members: vec![i], prob })
                .collect(),
            SchemeKind::Explicit { .. } => unreachable!(),
        })
    }

    /// Draws a client subset in ascending order. Independent sampling redraws
    /// until the subset is nonempty.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match &self.kind {
            SchemeKind::Full => (0..self.n).collect(),
            SchemeKind::UniformB { b } => {
                let mut v = rand::seq::index::sample(rng, self.n, *b).into_vec();
                v.sort_unstable();
                v
            }
            SchemeKind::Independent { p } => loop {
                let v: Vec<usize> = (0..self.n).filter(|&i| rng.gen::<f64>() < p[i]).collect();
                if !v.is_empty() {
                    return v;
                }
            },
            SchemeKind::OneClient { pi } => {
                let dist = WeightedIndex::new(pi).expect("validated at construction");
                vec![dist.sample(rng)]
            }
            SchemeKind::Explicit { subsets, probs } => {
                let dist = WeightedIndex::new(probs).expect("validated at construction");
                loop {
                    let s = &subsets[dist.sample(rng)];
                    if !s.is_empty() {
                        return s.clone();
                    }
                }
            }
        }
    }
}

/// Importance sampling: client `i` joins independently with probability `b·w_i`.
pub fn importance_scheme(w: &[f64], b: f64) -> Result<SamplingScheme> {
    if !(b > 0.0) {
        return arg("expected cohort size must be positive");
    }
    let mut p = Vec::with_capacity(w.len());
    for (i, wi) in w.iter().enumerate() {
        let pi = b * wi;
        if pi > 1.0 + 1e-12 {
            return arg(format!("b·w_{i} = {pi} exceeds 1"));
        }
        p.push(pi.min(1.0));
    }
    SamplingScheme::independent(p)
}

/// Aggregation normalizer `q_i^S` applied to a sampled client's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormalizerRule {
    /// `q_i^S = p_i`.
    Unbiased,
    /// `q_i^S = scale · Σ_{j∈S} w_j`.
    SumOne { scale: f64 },
    /// `q_i^S = q[i]` regardless of `S`.
    Fixed { q: Vec<f64> },
}

impl NormalizerRule {
    /// Sampled weights renormalised to sum to one.
    pub fn sum_one() -> Self {
        Self::SumOne { scale: 1.0 }
    }

    /// FedAvg's practical normalisation `(b/n)·Σ_{j∈S} w_j`.
    pub fn fedavg(scheme: &SamplingScheme) -> Self {
        Self::SumOne {
            scale: scheme.expected_cohort() / scheme.n() as f64,
        }
    }

    /// `q_i^S` for client `i` in subset `subset`.
    pub fn evaluate(&self, i: usize, subset: &[usize], scheme: &SamplingScheme, w: &[f64]) -> f64 {
        match self {
            Self::Unbiased => scheme.probabilities()[i],
            Self::SumOne { scale } => scale * subset.iter().map(|&j| w[j]).sum::<f64>(),
            Self::Fixed { q } => q[i],
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::Unbiased => Ok(()),
            Self::SumOne { scale } if *scale > 0.0 && scale.is_finite() => Ok(()),
            Self::SumOne { .. } => arg("sum_one scale must be positive"),
            Self::Fixed { q } if q.len() == n && q.iter().all(|x| *x > 0.0 && x.is_finite()) => Ok(()),
            Self::Fixed { .. } => arg("fixed normalizer needs n positive entries"),
        }
    }
}

/// Derived quantities of a normalizer under a sampling: `1/q_i = E[1_{i∈S}/q_i^S]`,
/// `H_ij = E[q_i q_j/(q_i^S q_j^S) 1_{i,j∈S}]`, its diagonal `h` and a
/// certificate `s` with `H − 𝟙𝟙^⊤ ⪯ Diag(h∘s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizerStats {
    pub q: Vec<f64>,
    pub h_mat: DMatrix<f64>,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
}

impl NormalizerStats {
    /// Largest eigenvalue of `H − 𝟙𝟙^⊤ − Diag(h∘s)`.
    pub fn psd_slack(&self) -> f64 {
        let n = self.q.len();
        let diag = Vector::from_iterator(n, self.h.iter().zip(&self.s).map(|(h, s)| h * s));
        max_eigenvalue(&(&self.h_mat - DMatrix::from_element(n, n, 1.0) - DMatrix::from_diagonal(&diag)))
    }
}

/// Computes [`NormalizerStats`]; closed form for state-independent rules,
/// exact enumeration otherwise.
pub fn normalizer_stats(scheme: &SamplingScheme, rule: &NormalizerRule, w: &[f64]) -> Result<NormalizerStats> {
    let n = scheme.n();
    rule.validate(n)?;
    if w.len() != n {
        return arg("weight vector length differs from client count");
    }
    let p = scheme.probabilities();
    match rule {
        NormalizerRule::Unbiased | NormalizerRule::Fixed { .. } => {
            // q_i^S = c_i gives q_i = c_i/p_i and H_ij = P_ij/(p_i p_j); the
            // scheme's own certificate carries over.
            let q: Vec<f64> = match rule {
                NormalizerRule::Fixed { q } => q.iter().zip(p).map(|(c, pi)| c / pi).collect(),
                _ => vec![1.0; n],
            };
            let pm = scheme.probability_matrix();
            let h_mat = DMatrix::from_fn(n, n, |i, j| pm[(i, j)] / (p[i] * p[j]));
            let h = (0..n).map(|i| 1.0 / p[i]).collect();
            Ok(NormalizerStats {
                q,
                h_mat,
                h,
                s: scheme.s_vector().to_vec(),
            })
        }
        NormalizerRule::SumOne { .. } => {
            let outcomes = scheme.outcomes()?;
            let mut inv_q = vec![0.0; n];
            for o in &outcomes {
                for &i in &o.members {
                    inv_q[i] += o.prob / rule.evaluate(i, &o.members, scheme, w);
                }
            }
            let q: Vec<f64> = inv_q.iter().map(|v| 1.0 / v).collect();
            let mut h_mat = DMatrix::zeros(n, n);
            for o in &outcomes {
                for &i in &o.members {
                    let qi = rule.evaluate(i, &o.members, scheme, w);
                    for &j in &o.members {
                        let qj = rule.evaluate(j, &o.members, scheme, w);
                        h_mat[(i, j)] += o.prob * q[i] * q[j] / (qi * qj);
                    }
                }
            }
            let h: Vec<f64> = (0..n).map(|i| h_mat[(i, i)]).collect();
            let s = gershgorin(&(&h_mat - DMatrix::from_element(n, n, 1.0)), &h);
            Ok(NormalizerStats { q, h_mat, h, s })
        }
    }
}

/// `E[(w_i/q_i^S) 1_{i∈S}] = w_i/q_i` for every client.
pub fn expected_contribution(scheme: &SamplingScheme, rule: &NormalizerRule, w: &[f64]) -> Result<Vec<f64>> {
    let stats = normalizer_stats(scheme, rule, w)?;
    Ok(w.iter().zip(&stats.q).map(|(wi, qi)| wi / qi).collect())
}

fn check_vectors(zetas: &[Vector], w: &[f64], n: usize) -> Result<usize> {
    if zetas.len() != n || w.len() != n {
        return arg(format!("expected {n} vectors and weights"));
    }
    let d = zetas[0].len();
    if zetas.iter().any(|z| z.len() != d) {
        return arg("vectors differ in dimension");
    }
    Ok(d)
}

/// Exact mean of `Σ_{i∈S} (w_i/q_i^S) ζ_i` by enumeration.
pub fn estimator_mean(zetas: &[Vector], w: &[f64], scheme: &SamplingScheme, rule: &NormalizerRule) -> Result<Vector> {
    let d = check_vectors(zetas, w, scheme.n())?;
    let mut mean = Vector::zeros(d);
    for o in scheme.outcomes()? {
        for &i in &o.members {
            mean += &zetas[i] * (o.prob * w[i] / rule.evaluate(i, &o.members, scheme, w));
        }
    }
    Ok(mean)
}

/// Exact `E||Σ_{i∈S} w_i ζ_i/p_i − Σ w_i ζ_i||²` and the bound `Σ w_i² (s_i/p_i) ||ζ_i||²`.
pub fn variance_bound_check(zetas: &[Vector], w: &[f64], scheme: &SamplingScheme) -> Result<(f64, f64)> {
    let d = check_vectors(zetas, w, scheme.n())?;
    let p = scheme.probabilities();
    let s = scheme.s_vector();
    let mut target = Vector::zeros(d);
    for (z, wi) in zetas.iter().zip(w) {
        target += z * *wi;
    }
    let mut lhs = 0.0;
    for o in scheme.outcomes()? {
        let mut est = Vector::zeros(d);
        for &i in &o.members {
            est += &zetas[i] * (w[i] / p[i]);
        }
        lhs += o.prob * (est - &target).norm_squared();
    }
    let rhs = (0..scheme.n())
        .map(|i| w[i] * w[i] * s[i] / p[i] * zetas[i].norm_squared())
        .sum();
    Ok((lhs, rhs))
}

/// Generalised bound for arbitrary normalizers: exact
/// `E||Σ_{i∈S} w_i ζ_i/q_i^S − Σ (w_i/q_i) ζ_i||²` against `Σ h_i s_i ||w_i ζ_i/q_i||²`.
pub fn general_variance_check(
    zetas: &[Vector],
    w: &[f64],
    scheme: &SamplingScheme,
    rule: &NormalizerRule,
) -> Result<(f64, f64)> {
    let d = check_vectors(zetas, w, scheme.n())?;
    let stats = normalizer_stats(scheme, rule, w)?;
    let mut target = Vector::zeros(d);
    for i in 0..scheme.n() {
        target += &zetas[i] * (w[i] / stats.q[i]);
    }
    let mut lhs = 0.0;
    for o in scheme.outcomes()? {
        let mut est = Vector::zeros(d);
        for &i in &o.members {
            est += &zetas[i] * (w[i] / rule.evaluate(i, &o.members, scheme, w));
        }
        lhs += o.prob * (est - &target).norm_squared();
    }
    let rhs = (0..scheme.n())
        .map(|i| stats.h[i] * stats.s[i] * (&zetas[i] * (w[i] / stats.q[i])).norm_squared())
        .sum();
    Ok((lhs, rhs))
}

/// Exact variance of the mean of `k` vectors drawn without replacement,
/// against `(n−k)/(k(n−1)) σ²`.
pub fn swr_variance_check(zetas: &[Vector], k: usize) -> Result<(f64, f64)> {
    let n = zetas.len();
    if k == 0 || k > n {
        return arg(format!("need 1 ≤ k ≤ n, got k = {k}, n = {n}"));
    }
    if n > MAX_SWR {
        return Err(FedError::Unsupported(format!("enumeration limited to n ≤ {MAX_SWR}")));
    }
    let d = zetas[0].len();
    if zetas.iter().any(|z| z.len() != d) {
        return arg("vectors differ in dimension");
    }
    let mut mean = Vector::zeros(d);
    for z in zetas {
        mean += z;
    }
    mean /= n as f64;
    let sigma_sq = zetas.iter().map(|z| (z - &mean).norm_squared()).sum::<f64>() / n as f64;
    let mut acc = 0.0;
    let mut count = 0usize;
    for m in (0u64..1 << n).filter(|m| m.count_ones() as usize == k) {
        let mut avg = Vector::zeros(d);
        for i in mask_members(m, n) {
            avg += &zetas[i];
        }
        avg /= k as f64;
        acc += (avg - &mean).norm_squared();
        count += 1;
    }
    let empirical = acc / count as f64;
    let formula = if n == 1 {
        0.0
    } else {
        (n - k) as f64 / (k as f64 * (n - 1) as f64) * sigma_sq
    };
    Ok((empirical, formula))
}
