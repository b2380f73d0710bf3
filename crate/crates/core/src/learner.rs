//! Pseudo-likelihood estimation for pairwise spin models.
//!
//! Each node u is fit separately by logistic regression of σ_u on the
//! remaining spins: with features x_j = σ_j (j ≠ u) and x_u = 1, the
//! parameter vector θ_u stacks the couplings of u and (in slot u) its
//! field, and the node loss is the negative log conditional likelihood
//!
//! ```text
//! L_u(θ) = (1/M) Σ_t log(1 + exp(−2 σ_u^t ⟨θ, x^t⟩)).
//! ```
//!
//! Minimization runs projected gradient descent over the ℓ1 ball of a
//! given radius (the model class with bounded interaction width). The
//! module also provides closed-form grid scans of the exact likelihood
//! and of the pseudo-likelihood for the two-parameter fully-connected
//! model, where the magnetization class is a sufficient statistic.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::chains::SampleSet;
use crate::math::{ln_binomial, log1p_exp, log_sum_exp, sigmoid};
use crate::spin::{DenseDistribution, IsingModel, SpinConfiguration};
use crate::{Error, Result};

/// Samples collapsed to unique configurations with normalized weights.
/// Collapsing makes loss and gradient evaluation O(unique · n) instead of
/// O(M · n); population distributions fit the same interface with weights
/// equal to probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedConfigs {
    n: usize,
    configs: Vec<SpinConfiguration>,
    weights: Vec<f64>,
}

impl WeightedConfigs {
    pub fn new(configs: Vec<SpinConfiguration>, weights: Vec<f64>) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::InvalidSamples("no configurations".into()));
        }
        if configs.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} configurations, {} weights",
                configs.len(),
                weights.len()
            )));
        }
        let n = configs[0].n();
        if configs.iter().any(|c| c.n() != n) {
            return Err(Error::InvalidSamples("mixed configuration sizes".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidSamples("weights must be finite and ≥ 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidSamples("weights sum to zero".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { n, configs, weights })
    }

    /// Collapse a sample set to unique configurations with frequency
    /// weights.
    pub fn from_samples(samples: &SampleSet) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSamples("empty sample set".into()));
        }
        let mut counts: HashMap<&[i8], f64> = HashMap::new();
        for c in samples.configs() {
            *counts.entry(c.spins()).or_insert(0.0) += 1.0;
        }
        let mut configs = Vec::with_capacity(counts.len());
        let mut weights = Vec::with_capacity(counts.len());
        for (spins, count) in counts {
            configs.push(SpinConfiguration::new(spins.to_vec())?);
            weights.push(count);
        }
        Self::new(configs, weights)
    }

    /// The population itself: every configuration, weighted by its
    /// probability. Zero-probability states are dropped.
    pub fn from_distribution(dist: &DenseDistribution) -> Result<Self> {
        let n = dist.n();
        let mut configs = Vec::new();
        let mut weights = Vec::new();
        for s in 0..(1usize << n) {
            let p = dist.prob(s);
            if p > 0.0 {
                configs.push(SpinConfiguration::from_index(s, n));
                weights.push(p);
            }
        }
        Self::new(configs, weights)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[SpinConfiguration] {
        &self.configs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ⟨θ, x^t⟩ for node u on configuration t: couplings dotted with the
    /// other spins, plus the field slot.
    fn margin(&self, t: usize, u: usize, theta: &[f64]) -> f64 {
        let spins = self.configs[t].spins();
        let mut acc = theta[u]; // field feature ≡ 1
        for (j, s) in spins.iter().enumerate() {
            if j != u {
                acc += theta[j] * *s as f64;
            }
        }
        acc
    }
}

/// Node loss L_u(θ) under the weighted configurations.
pub fn node_loss(data: &WeightedConfigs, u: usize, theta: &[f64]) -> Result<f64> {
    check_node(data, u, theta)?;
    let mut acc = 0.0;
    for t in 0..data.len() {
        let sigma_u = data.configs[t].spin(u) as f64;
        acc += data.weights[t] * log1p_exp(-2.0 * sigma_u * data.margin(t, u, theta));
    }
    Ok(acc)
}

/// Gradient of [`node_loss`] in θ.
pub fn node_gradient(data: &WeightedConfigs, u: usize, theta: &[f64]) -> Result<Vec<f64>> {
    check_node(data, u, theta)?;
    let n = data.n();
    let mut grad = vec![0.0; n];
    for t in 0..data.len() {
        let spins = data.configs[t].spins();
        let sigma_u = spins[u] as f64;
        let coef =
            data.weights[t] * -2.0 * sigma_u * sigmoid(-2.0 * sigma_u * data.margin(t, u, theta));
        for (j, g) in grad.iter_mut().enumerate() {
            let x = if j == u { 1.0 } else { spins[j] as f64 };
            *g += coef * x;
        }
    }
    Ok(grad)
}

fn check_node(data: &WeightedConfigs, u: usize, theta: &[f64]) -> Result<()> {
    if u >= data.n() {
        return Err(Error::SiteOutOfRange { site: u, n: data.n() });
    }
    if theta.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "θ has {} entries for {} spins",
            theta.len(),
            data.n()
        )));
    }
    Ok(())
}

/// Euclidean projection onto the ℓ1 ball of the given radius
/// (sort-and-threshold).
pub fn project_l1(v: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius > 0.0, "projection radius must be positive");
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - radius) / (i + 1) as f64;
        if i + 1 == mags.len() || mags[i + 1] <= candidate {
            tau = candidate;
            break;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - tau).max(0.0))
        .collect()
}

/// Settings for the projected-gradient fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// ℓ1 radius of the parameter ball (interaction-width bound).
    pub radius: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Stop when the unit-step projected gradient has ℓ∞ norm below this.
    pub tol: f64,
}

impl FitOptions {
    pub fn new(radius: f64) -> Self {
        Self { radius, max_iters: 50_000, tol: 1e-7 }
    }
}

/// Result of one node's fit. `theta[j]` (j ≠ u) estimates the coupling
/// θ_uj and `theta[u]` the field θ_u.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    pub node: usize,
    pub theta: Vec<f64>,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize the node loss over the ℓ1 ball by projected gradient descent
/// with backtracking (Armijo) line search.
pub fn fit_node(data: &WeightedConfigs, u: usize, options: &FitOptions) -> Result<NodeFit> {
    if options.radius <= 0.0 || !options.radius.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ℓ1 radius must be positive and finite, got {}",
            options.radius
        )));
    }
    if options.tol <= 0.0 {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n = data.n();
    let mut theta = vec![0.0; n];
    let mut loss = node_loss(data, u, &theta)?;
    let mut step = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    const ARMIJO: f64 = 1e-4;

    while iterations < options.max_iters {
        iterations += 1;
        let grad = node_gradient(data, u, &theta)?;
        // Unit-step projected gradient mapping as the stationarity measure.
        let reference: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - g).collect();
        let projected_ref = project_l1(&reference, options.radius);
        let stat = theta
            .iter()
            .zip(&projected_ref)
            .map(|(t, p)| (t - p).abs())
            .fold(0.0f64, f64::max);
        if stat <= options.tol {
            converged = true;
            break;
        }
        step = (step * 2.0).min(1e6);
        // Loss comparisons below a few ulps certify nothing.
        let guard = 4.0 * f64::EPSILON * loss.abs().max(1.0);
        let mut advanced = false;
        while step >= 1e-18 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t - step * g)
                .collect();
            let candidate = project_l1(&trial, options.radius);
            let trial_loss = node_loss(data, u, &candidate)?;
            let decrease: f64 = grad
                .iter()
                .zip(candidate.iter().zip(&theta))
                .map(|(g, (c, t))| g * (c - t))
                .sum();
            if trial_loss <= loss + ARMIJO * decrease + guard {
                theta = candidate;
                loss = trial_loss;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            // Line search exhausted: no representable descent remains, so
            // a near-stationary point counts as converged.
            converged = stat <= options.tol.max(1e-6);
            break;
        }
    }

    let l1: f64 = theta.iter().map(|x| x.abs()).sum();
    debug_assert!(l1 <= options.radius + 1e-9, "fit escaped the ℓ1 ball: {l1}");
    Ok(NodeFit { node: u, theta, loss, iterations, converged })
}

/// All node fits for one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct PLEstimate {
    n: usize,
    nodes: Vec<NodeFit>,
}

impl PLEstimate {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[NodeFit] {
        &self.nodes
    }

    pub fn node(&self, u: usize) -> &NodeFit {
        &self.nodes[u]
    }

    /// Estimated coupling θ_uv as seen from node u (not symmetrized).
    pub fn coupling(&self, u: usize, v: usize) -> f64 {
        self.nodes[u].theta[v]
    }

    pub fn field(&self, u: usize) -> f64 {
        self.nodes[u].theta[u]
    }

    /// Largest deviation from a reference model over all fields and both
    /// orientations of every coupling.
    pub fn max_deviation(&self, model: &IsingModel) -> Result<f64> {
        if model.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "estimate over {} spins, model has {}",
                self.n,
                model.n()
            )));
        }
        let mut worst = 0.0f64;
        for u in 0..self.n {
            worst = worst.max((self.field(u) - model.field(u)).abs());
            for v in 0..self.n {
                if v != u {
                    worst = worst.max((self.coupling(u, v) - model.coupling(u, v)).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Build a pairwise model by averaging the two orientations of each
    /// coupling estimate (fields taken as-is). Entries that average to an
    /// exact zero are dropped.
    pub fn symmetrized_model(&self) -> Result<IsingModel> {
        let mut couplings = Vec::new();
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                let w = 0.5 * (self.coupling(u, v) + self.coupling(v, u));
                if w != 0.0 {
                    couplings.push((u, v, w));
                }
            }
        }
        let fields = (0..self.n).map(|u| self.field(u)).collect();
        IsingModel::new(self.n, fields, couplings)
    }
}

/// Fit every node independently (in parallel when a thread pool is
/// available).
pub fn fit_all(data: &WeightedConfigs, options: &FitOptions) -> Result<PLEstimate> {
    let nodes: Result<Vec<NodeFit>> = (0..data.n())
        .into_par_iter()
        .map(|u| fit_node(data, u, options))
        .collect();
    Ok(PLEstimate { n: data.n(), nodes: nodes? })
}

/// Re-fit only the field of each node with its couplings frozen at the
/// reference model's values, by golden-section search on [−h_max, h_max].
pub fn fit_fields(
    data: &WeightedConfigs,
    couplings_from: &IsingModel,
    h_max: f64,
) -> Result<Vec<f64>> {
    if couplings_from.n() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "model over {} spins, data over {}",
            couplings_from.n(),
            data.n()
        )));
    }
    if h_max <= 0.0 || !h_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "field bound must be positive and finite, got {h_max}"
        )));
    }
    let mut fields = Vec::with_capacity(data.n());
    for u in 0..data.n() {
        // Per-sample coupling contribution, fixed during the 1D search.
        let bases: Vec<f64> = data
            .configs()
            .iter()
            .map(|c| {
                couplings_from
                    .neighbors(u)
                    .iter()
                    .map(|(v, w)| w * c.spin(*v) as f64)
                    .sum::<f64>()
            })
            .collect();
        let objective = |b: f64| -> f64 {
            let mut acc = 0.0;
            for t in 0..data.len() {
                let sigma_u = data.configs()[t].spin(u) as f64;
                acc += data.weights()[t] * log1p_exp(-2.0 * sigma_u * (bases[t] + b));
            }
            acc
        };
        fields.push(golden_section(&objective, -h_max, h_max, 1e-10));
    }
    Ok(fields)
}

/// Golden-section minimization of a unimodal function on [lo, hi].
fn golden_section(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (lo, hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Edges whose estimated coupling exceeds α/2 in either orientation.
pub fn structure_threshold(estimate: &PLEstimate, alpha: f64) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for u in 0..estimate.n() {
        for v in (u + 1)..estimate.n() {
            let strength = estimate
                .coupling(u, v)
                .abs()
                .max(estimate.coupling(v, u).abs());
            if strength > alpha / 2.0 {
                edges.insert((u, v));
            }
        }
    }
    edges
}

/// Result of a two-parameter grid scan for the fully-connected model.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFit {
    pub j_hat: f64,
    pub h_hat: f64,
    pub j_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    /// Objective value at (j_grid[i], h_grid[j]), row-major in J.
    pub values: Vec<Vec<f64>>,
}

fn check_grid_inputs(n: usize, class_weights: &[f64], js: &[f64], hs: &[f64]) -> Result<f64> {
    if class_weights.len() != n + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} class weights for {} levels",
            class_weights.len(),
            n + 1
        )));
    }
    if js.is_empty() || hs.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    if class_weights.iter().any(|c| *c < 0.0 || !c.is_finite()) {
        return Err(Error::InvalidSamples("class weights must be finite and ≥ 0".into()));
    }
    let total: f64 = class_weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidSamples("class weights sum to zero".into()));
    }
    Ok(total)
}

/// Exact negative log-likelihood scan for the fully-connected model over a
/// (J, h) grid. The data enter only through the magnetization histogram
/// (counts or arbitrary nonnegative weights per class k = 0..n): with
/// S_k = 2k − n,
///
/// ```text
/// NLL(J, h) = −(J/(2n))·E[S²] + J/2 + h·E[S] + ln Σ_k C(n,k) e^{E(J,h,k)}.
/// ```
pub fn mle_grid_cw(
    n: usize,
    class_weights: &[f64],
    js: &[f64],
    hs: &[f64],
) -> Result<GridFit> {
    let total = check_grid_inputs(n, class_weights, js, hs)?;
    let nf = n as f64;
    let spin_sum = |k: usize| 2.0 * k as f64 - nf;
    let mean_s: f64 = class_weights
        .iter()
        .enumerate()
        .map(|(k, c)| c * spin_sum(k))
        .sum::<f64>()
        / total;
    let mean_s2: f64 = class_weights
        .iter()
        .enumerate()
        .map(|(k, c)| c * spin_sum(k) * spin_sum(k))
        .sum::<f64>()
        / total;
    let ln_counts: Vec<f64> = (0..=n).map(|k| ln_binomial(n, k)).collect();

    scan_grid(js, hs, |j, h| {
        let log_terms: Vec<f64> = (0..=n)
            .map(|k| {
                let s = spin_sum(k);
                ln_counts[k] + j / (2.0 * nf) * (s * s - nf) - h * s
            })
            .collect();
        let ln_z = log_sum_exp(&log_terms);
        -(j / (2.0 * nf)) * mean_s2 + j / 2.0 + h * mean_s + ln_z
    })
}

/// Pseudo-likelihood scan for the fully-connected model over a (J, h)
/// grid, from the magnetization histogram. A sample in class k
/// contributes k up-spin terms and n−k down-spin terms:
///
/// ```text
/// k·log1p_exp(−2z⁺) + (n−k)·log1p_exp(−2z⁻),
/// z⁺ = (J/n)(S_k − 1) − h,   z⁻ = (J/n)(−S_k − 1) + h.
/// ```
pub fn pl_grid_cw(
    n: usize,
    class_weights: &[f64],
    js: &[f64],
    hs: &[f64],
) -> Result<GridFit> {
    let total = check_grid_inputs(n, class_weights, js, hs)?;
    let nf = n as f64;
    scan_grid(js, hs, |j, h| {
        let mut acc = 0.0;
        for (k, c) in class_weights.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let s = 2.0 * k as f64 - nf;
            let z_up = j / nf * (s - 1.0) - h;
            let z_down = j / nf * (-s - 1.0) + h;
            acc += c
                * (k as f64 * log1p_exp(-2.0 * z_up)
                    + (nf - k as f64) * log1p_exp(-2.0 * z_down));
        }
        acc / total
    })
}

fn scan_grid(js: &[f64], hs: &[f64], objective: impl Fn(f64, f64) -> f64) -> Result<GridFit> {
    let mut values = Vec::with_capacity(js.len());
    let mut best = (f64::INFINITY, 0usize, 0usize);
    for (i, &j) in js.iter().enumerate() {
        let mut row = Vec::with_capacity(hs.len());
        for (l, &h) in hs.iter().enumerate() {
            let v = objective(j, h);
            if v < best.0 {
                best = (v, i, l);
            }
            row.push(v);
        }
        values.push(row);
    }
    if !best.0.is_finite() {
        return Err(Error::InvalidParameter(
            "grid objective never evaluated to a finite value".into(),
        ));
    }
    Ok(GridFit {
        j_hat: js[best.1],
        h_hat: hs[best.2],
        j_grid: js.to_vec(),
        h_grid: hs.to_vec(),
        values,
    })
}

/// Evenly spaced grid from `lo` to `hi` inclusive with the given step.
pub fn grid_points(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if step <= 0.0 || hi < lo {
        return Err(Error::InvalidParameter(format!(
            "bad grid spec [{lo}, {hi}] step {step}"
        )));
    }
    let count = ((hi - lo) / step).round() as usize;
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

/// Up-spin-count histogram of a sample set (levels k = 0..n).
pub fn magnetization_histogram(samples: &SampleSet) -> Vec<f64> {
    let mut counts = vec![0.0; samples.n() + 1];
    for c in samples.configs() {
        let k = c.spins().iter().filter(|s| **s == 1).count();
        counts[k] += 1.0;
    }
    counts
}
