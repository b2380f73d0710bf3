//! Numeric audits of the bounds connecting metastability to parameter
//! recovery.
//!
//! Each `check_*` function takes a concrete instance — a pairwise model
//! `μ`, a single-flip kernel `P`, a probe distribution `ν` — and
//! evaluates both sides of one inequality by exhaustive sums over the
//! dense state space. The sole exception is [`check_pl_gap`], which is
//! inherently statistical and works on repeated sampled fits.
//!
//! Every verified inequality is oriented as `lhs ≤ rhs` and recorded with
//! its slack `rhs − lhs`; a check passes when no slack falls below
//! [`SLACK_TOLERANCE`]. Reports are serializable so the command-line
//! `verify` run can emit them as JSON.

use std::collections::HashMap;

use serde::Serialize;

use crate::chains::{restricted_distribution, StateSet, TransitionKernel};
use crate::learner::{self, FitOptions, WeightedConfigs};
use crate::math::log1p_exp;
use crate::rng;
use crate::spin::{DenseDistribution, IsingModel, SpinConfiguration};
use crate::{Error, Result};

/// Slack below this fails a check. The allowance absorbs floating-point
/// accumulation over at most `2¹⁰ · n` terms; a genuine violation of any
/// of the audited bounds would land orders of magnitude below it.
pub const SLACK_TOLERANCE: f64 = -1e-9;

/// One verified inequality instance, oriented so `lhs ≤ rhs` is the claim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRecord {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; negative means the claim failed by that much.
    pub slack: f64,
}

impl OracleRecord {
    fn new(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            label: label.into(),
            lhs,
            rhs,
            slack: rhs - lhs,
        }
    }
}

/// Outcome of one check run: every instance's slack, the worst of them,
/// and an overall verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub check: String,
    pub instances: usize,
    /// Smallest `rhs − lhs` over all instances, never clamped.
    pub worst_slack: f64,
    /// True when every instance clears [`SLACK_TOLERANCE`]. The sampled
    /// loss-gap check instead applies its confidence rule: the fraction
    /// of passing trials must reach `1 − δ` minus two binomial standard
    /// deviations (see [`check_pl_gap`]).
    pub pass: bool,
    /// Free-form diagnostics: skipped states, seeds, pass fractions.
    pub notes: Vec<String>,
    pub records: Vec<OracleRecord>,
}

impl OracleReport {
    fn from_records(check: &str, records: Vec<OracleRecord>) -> Self {
        let worst_slack = records
            .iter()
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min);
        let pass = records.iter().all(|r| r.slack >= SLACK_TOLERANCE);
        Self {
            check: check.to_string(),
            instances: records.len(),
            worst_slack,
            pass,
            notes: Vec::new(),
            records,
        }
    }

    /// Combine reports of the same check (e.g. a scan over probe
    /// distributions) into one. Each constituent's own pass verdict is
    /// respected, so merging sampled checks keeps their confidence rule.
    pub fn merge(reports: impl IntoIterator<Item = OracleReport>) -> Result<OracleReport> {
        let mut iter = reports.into_iter();
        let mut merged = iter
            .next()
            .ok_or_else(|| Error::InvalidParameter("no reports to merge".into()))?;
        for report in iter {
            if report.check != merged.check {
                return Err(Error::InvalidParameter(format!(
                    "cannot merge check '{}' into '{}'",
                    report.check, merged.check
                )));
            }
            merged.instances += report.instances;
            merged.worst_slack = merged.worst_slack.min(report.worst_slack);
            merged.pass &= report.pass;
            merged.notes.extend(report.notes);
            merged.records.extend(report.records);
        }
        Ok(merged)
    }

    /// Prefix every record label, typically with the instance that
    /// produced the report, before merging a scan.
    pub fn with_label_prefix(mut self, prefix: &str) -> Self {
        for record in &mut self.records {
            record.label = format!("{prefix}: {}", record.label);
        }
        self
    }

    /// Keep only the `keep` smallest-slack records (the interesting ones)
    /// to bound report size; the verdict and counters are unchanged.
    pub fn truncated(mut self, keep: usize) -> Self {
        if self.records.len() > keep {
            self.records
                .sort_by(|a, b| a.slack.partial_cmp(&b.slack).unwrap());
            let dropped = self.records.len() - keep;
            self.records.truncate(keep);
            self.notes
                .push(format!("{dropped} records with larger slack omitted"));
        }
        self
    }
}

fn check_dimensions(
    model: &IsingModel,
    kernel: &TransitionKernel,
    nu: &DenseDistribution,
) -> Result<()> {
    if model.n() != kernel.n() || model.n() != nu.n() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} spins, kernel {}, distribution {}",
            model.n(),
            kernel.n(),
            nu.n()
        )));
    }
    Ok(())
}

/// Strong defect of ν under the kernel, and the ratio η/ω_P that every
/// bound here is phrased in.
fn eta_and_ratio(kernel: &TransitionKernel, nu: &DenseDistribution) -> Result<(f64, f64)> {
    let eta = kernel.strong_metastability(nu)?;
    Ok((eta, eta / kernel.omega_p()))
}

/// ν(σ_u = +1 | σ_∖u), or `None` when both completions have zero mass.
fn nu_plus_given_rest(nu: &DenseDistribution, state: usize, u: usize) -> Option<f64> {
    let up = state | (1usize << u);
    let down = up ^ (1usize << u);
    let mass = nu.prob(up) + nu.prob(down);
    (mass > 0.0).then(|| nu.prob(up) / mass)
}

/// The true parameter vector seen from node u: couplings in the other
/// slots, the field in slot u.
fn theta_star(model: &IsingModel, u: usize) -> Vec<f64> {
    let n = model.n();
    let mut theta = vec![0.0; n];
    for j in 0..n {
        if j != u {
            theta[j] = model.coupling(u, j);
        }
    }
    theta[u] = model.field(u);
    theta
}

fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Verifies that a distribution with small strong defect has conditionals
/// close to the model's in expectation:
///
/// Σ_u E_ν |ν(·|σ_∖u) − μ(·|σ_∖u)|_TV ≤ η/ω_P.
///
/// For two-point conditionals the total variation is the absolute
/// difference of the two `+1` probabilities. States of zero ν-mass don't
/// contribute to the expectation.
pub fn check_conditional_closeness(
    model: &IsingModel,
    kernel: &TransitionKernel,
    nu: &DenseDistribution,
) -> Result<OracleReport> {
    check_dimensions(model, kernel, nu)?;
    let n = model.n();
    let (_, ratio) = eta_and_ratio(kernel, nu)?;
    let mut lhs = 0.0;
    for state in 0..nu.num_states() {
        let weight = nu.prob(state);
        if weight == 0.0 {
            continue;
        }
        for u in 0..n {
            let nu_plus = nu_plus_given_rest(nu, state, u)
                .expect("a positive-probability state has positive pair mass");
            let mu_plus = model.conditional_bits(state | (1usize << u), u);
            lhs += weight * (nu_plus - mu_plus).abs();
        }
    }
    Ok(OracleReport::from_records(
        "conditional_closeness",
        vec![OracleRecord::new(format!("sum over {n} sites"), lhs, ratio)],
    ))
}

/// KL(p‖q) for two-point distributions given the `+1` probabilities, with
/// the usual 0·log 0 = 0 convention. `q` must be interior, which model
/// conditionals always are.
fn binary_kl(p: f64, q: f64) -> f64 {
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    kl
}

/// Verifies the Kullback–Leibler form of conditional closeness:
///
/// Σ_u E_ν D_KL(ν(·|σ_∖u) ‖ μ(·|σ_∖u)) ≤ 2η / (ω_P · min_{u,σ} μ(σ_u|σ_∖u)).
///
/// States with zero ν-mass are skipped and counted in the notes; callers
/// probing boundary-supported ν (such as conditioned restrictions) should
/// smooth first, e.g. with [`smooth`] at 10⁻⁶.
pub fn check_conditional_kl(
    model: &IsingModel,
    kernel: &TransitionKernel,
    nu: &DenseDistribution,
) -> Result<OracleReport> {
    check_dimensions(model, kernel, nu)?;
    let n = model.n();
    let (eta, _) = eta_and_ratio(kernel, nu)?;

    let mut min_conditional = f64::INFINITY;
    for state in 0..nu.num_states() {
        for u in 0..n {
            min_conditional = min_conditional.min(model.conditional_bits(state, u));
        }
    }
    let bound = 2.0 * eta / (kernel.omega_p() * min_conditional);

    let mut lhs = 0.0;
    let mut skipped = 0usize;
    for state in 0..nu.num_states() {
        let weight = nu.prob(state);
        if weight == 0.0 {
            skipped += 1;
            continue;
        }
        for u in 0..n {
            let p = nu_plus_given_rest(nu, state, u)
                .expect("a positive-probability state has positive pair mass");
            let q = model.conditional_bits(state | (1usize << u), u);
            lhs += weight * binary_kl(p, q);
        }
    }

    let mut report = OracleReport::from_records(
        "conditional_kl",
        vec![OracleRecord::new(
            format!("sum over {n} sites, min conditional {min_conditional:.3e}"),
            lhs,
            bound,
        )],
    );
    if skipped > 0 {
        report
            .notes
            .push(format!("{skipped} zero-probability states skipped"));
    }
    Ok(report)
}

/// Verifies that the population pseudolikelihood gradient taken under ν
/// but evaluated at the true parameters is small at every node:
///
/// ‖∇L_u(θ*_u)‖∞ ≤ 4η/ω_P.
///
/// At ν = μ the gradient vanishes identically (the estimator is
/// population-consistent), so the bound degrades continuously from zero.
pub fn check_gradient_bound(
    model: &IsingModel,
    kernel: &TransitionKernel,
    nu: &DenseDistribution,
) -> Result<OracleReport> {
    check_dimensions(model, kernel, nu)?;
    let (_, ratio) = eta_and_ratio(kernel, nu)?;
    let bound = 4.0 * ratio;
    let data = WeightedConfigs::from_distribution(nu)?;
    let mut records = Vec::with_capacity(model.n());
    for u in 0..model.n() {
        let theta = theta_star(model, u);
        let grad = learner::node_gradient(&data, u, &theta)?;
        let sup = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        records.push(OracleRecord::new(format!("node {u}"), sup, bound));
    }
    Ok(OracleReport::from_records("gradient_bound", records))
}

/// Verifies two-sided curvature of the logistic primitive
/// `f(x) = log(1 + e^{−2x})` on the interval [−γ, γ]:
///
/// ε²/2 ≥ f(x+ε) − f(x) − ε·f′(x) ≥ e^{−2γ}·ε²/2
///
/// for every probe (x, ε) with max(|x|, |x+ε|) ≤ γ. Each probe yields two
/// records, one per side.
pub fn check_f_convexity(gamma: f64, probes: &[(f64, f64)]) -> Result<OracleReport> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "interval half-width must be positive and finite, got {gamma}"
        )));
    }
    let f = |x: f64| log1p_exp(-2.0 * x);
    // f′(x) = −2 e^{−2x} / (1 + e^{−2x}) = −2 σ(−2x)
    let fprime = |x: f64| -2.0 * crate::math::sigmoid(-2.0 * x);
    let floor = (-2.0 * gamma).exp();

    let mut records = Vec::with_capacity(2 * probes.len());
    for &(x, eps) in probes {
        if x.abs().max((x + eps).abs()) > gamma + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "probe (x={x}, eps={eps}) leaves the interval of half-width {gamma}"
            )));
        }
        let bregman = f(x + eps) - f(x) - eps * fprime(x);
        let half_sq = 0.5 * eps * eps;
        records.push(OracleRecord::new(
            format!("x={x:.4}, eps={eps:.4}, upper"),
            bregman,
            half_sq,
        ));
        records.push(OracleRecord::new(
            format!("x={x:.4}, eps={eps:.4}, lower"),
            floor * half_sq,
            bregman,
        ));
    }
    Ok(OracleReport::from_records("f_convexity", records))
}

/// Verifies restricted strong convexity of the population node loss under
/// ν around the true parameters: for a perturbation Δ that keeps every
/// node inside the ℓ1 ball of radius γ,
///
/// L_u(θ*+Δ) − L_u(θ*) − ⟨∇L_u(θ*), Δ⟩ ≥ (e^{−4γ}/2)·‖Δ_∖u‖∞² − 4e^{−2γ}·η/ω_P,
///
/// where ‖Δ_∖u‖∞ ranges over the coupling slots only. A Δ that leaves the
/// ball at any node is rejected, since the curvature floor relies on the
/// width bound.
pub fn check_curvature(
    model: &IsingModel,
    kernel: &TransitionKernel,
    nu: &DenseDistribution,
    delta: &[f64],
) -> Result<OracleReport> {
    check_dimensions(model, kernel, nu)?;
    let n = model.n();
    if delta.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "perturbation has {} entries for {n} spins",
            delta.len()
        )));
    }
    let gamma = model.interaction_width();
    let (_, ratio) = eta_and_ratio(kernel, nu)?;
    let data = WeightedConfigs::from_distribution(nu)?;
    let floor_coeff = 0.5 * (-4.0 * gamma).exp();
    let defect_term = 4.0 * (-2.0 * gamma).exp() * ratio;

    let mut records = Vec::with_capacity(n);
    for u in 0..n {
        let theta = theta_star(model, u);
        let perturbed: Vec<f64> = theta.iter().zip(delta).map(|(t, d)| t + d).collect();
        let norm = l1_norm(&perturbed);
        if norm > gamma + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "perturbed parameters at node {u} have ℓ1 norm {norm:.6} > width {gamma:.6}"
            )));
        }
        let loss0 = learner::node_loss(&data, u, &theta)?;
        let loss1 = learner::node_loss(&data, u, &perturbed)?;
        let grad = learner::node_gradient(&data, u, &theta)?;
        let linear: f64 = grad.iter().zip(delta).map(|(g, d)| g * d).sum();
        let excess = loss1 - loss0 - linear;
        let sup = delta
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != u)
            .fold(0.0f64, |m, (_, d)| m.max(d.abs()));
        let lower = floor_coeff * sup * sup - defect_term;
        records.push(OracleRecord::new(format!("node {u}"), lower, excess));
    }
    Ok(OracleReport::from_records("loss_curvature", records))
}

/// Verifies that conditional variances under ν track the model's in
/// expectation, uniformly against any bounded weighting of the
/// conditioning environment:
///
/// E_ν |F(σ_∖i) · (Var_μ[σ_i|σ_∖i] − Var_ν[σ_i|σ_∖i])| ≤ (4η/ω_P)·max|F|.
///
/// `weight` is evaluated on the configuration with spin i forced to −1
/// and must not depend on spin i. Two-point variances are 4p(1−p) in the
/// ±1 convention.
pub fn check_variance_closeness(
    model: &IsingModel,
    kernel: &TransitionKernel,
    nu: &DenseDistribution,
    weight: impl Fn(&SpinConfiguration, usize) -> f64,
) -> Result<OracleReport> {
    check_dimensions(model, kernel, nu)?;
    let n = model.n();
    let (_, ratio) = eta_and_ratio(kernel, nu)?;

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let bit = 1usize << i;
        let mut f_max = 0.0f64;
        let mut f_values: HashMap<usize, f64> = HashMap::new();
        for state in 0..nu.num_states() {
            if state & bit != 0 {
                continue; // enumerate each environment once, spin i down
            }
            let value = weight(&SpinConfiguration::from_index(state, n), i);
            if !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "weight function is not finite on environment {state:#x} at site {i}"
                )));
            }
            f_max = f_max.max(value.abs());
            f_values.insert(state, value);
        }

        let mut lhs = 0.0;
        for state in 0..nu.num_states() {
            let w = nu.prob(state);
            if w == 0.0 {
                continue;
            }
            let environment = state & !bit;
            let p_mu = model.conditional_bits(state | bit, i);
            let p_nu = nu_plus_given_rest(nu, state, i)
                .expect("a positive-probability state has positive pair mass");
            let var_mu = 4.0 * p_mu * (1.0 - p_mu);
            let var_nu = 4.0 * p_nu * (1.0 - p_nu);
            lhs += w * (f_values[&environment] * (var_mu - var_nu)).abs();
        }
        records.push(OracleRecord::new(
            format!("site {i}, max|F| = {f_max:.3}"),
            lhs,
            4.0 * ratio * f_max,
        ));
    }
    Ok(OracleReport::from_records("variance_closeness", records))
}

/// Verifies the sampled loss-gap bound: over `trials` repetitions, draw
/// `m` configurations from ν, fit every node over the ℓ1 ball of radius
/// γ, and check
///
/// Σ_u [L̂_u(θ*) − L̂_u(θ̂_u)] ≤ 2(1 + e^{2γ})·η/ω_P + 2γ·√(ln(1/δ) / 2m),
///
/// which holds with probability at least 1 − δ per trial. The report
/// passes when the fraction of passing trials reaches 1 − δ minus two
/// binomial standard deviations, so `worst_slack` may legitimately be
/// negative on a passing report.
pub fn check_pl_gap(
    model: &IsingModel,
    kernel: &TransitionKernel,
    nu: &DenseDistribution,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<OracleReport> {
    check_dimensions(model, kernel, nu)?;
    if m == 0 || trials == 0 {
        return Err(Error::InvalidParameter(
            "need at least one sample and one trial".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level must be in (0, 1), got {delta}"
        )));
    }
    let n = model.n();
    let gamma = model.interaction_width();
    let (_, ratio) = eta_and_ratio(kernel, nu)?;
    let bound = 2.0 * (1.0 + (2.0 * gamma).exp()) * ratio
        + 2.0 * gamma * ((1.0 / delta).ln() / (2.0 * m as f64)).sqrt();
    let options = FitOptions::new(gamma.max(1e-9));
    let stars: Vec<Vec<f64>> = (0..n).map(|u| theta_star(model, u)).collect();

    let mut records = Vec::with_capacity(trials);
    for trial in 0..trials {
        let mut trial_rng = rng::from_seed(rng::child_seed(seed, trial as u64));
        let indices = nu.sample_indices(m, &mut trial_rng);
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for index in indices {
            *counts.entry(index).or_insert(0.0) += 1.0;
        }
        let mut configs = Vec::with_capacity(counts.len());
        let mut weights = Vec::with_capacity(counts.len());
        for (index, count) in counts {
            configs.push(SpinConfiguration::from_index(index, n));
            weights.push(count);
        }
        let data = WeightedConfigs::new(configs, weights)?;
        let fit = learner::fit_all(&data, &options)?;
        let mut gap = 0.0;
        for u in 0..n {
            gap += learner::node_loss(&data, u, &stars[u])? - fit.node(u).loss;
        }
        records.push(OracleRecord::new(format!("trial {trial}"), gap, bound));
    }

    let passing = records
        .iter()
        .filter(|r| r.slack >= SLACK_TOLERANCE)
        .count();
    let fraction = passing as f64 / trials as f64;
    let required = 1.0 - delta - 2.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
    let mut report = OracleReport::from_records("pl_gap", records);
    report.pass = fraction >= required;
    report.notes.push(format!(
        "seed {seed}, {m} samples/trial: {passing}/{trials} trials passed \
         (fraction {fraction:.4}, required {required:.4})"
    ));
    Ok(report)
}

/// A perturbation that provably keeps every node inside the width-γ ball:
/// shrink the saturating node's parameter vector toward zero, scaled so
/// that the other nodes' slack absorbs the spillover. Per-coordinate
/// `factor` values in [0, 1] jitter the direction without breaking
/// feasibility (the saturating node shrinks coordinate-wise; every other
/// node pays at most ‖Δ‖₁ against its slack).
pub fn feasible_perturbation(
    model: &IsingModel,
    scale: f64,
    mut factor: impl FnMut(usize) -> f64,
) -> Vec<f64> {
    let n = model.n();
    let gamma = model.interaction_width();
    let norms: Vec<f64> = (0..n).map(|u| l1_norm(&theta_star(model, u))).collect();
    let saturating = (0..n)
        .max_by(|a, b| norms[*a].partial_cmp(&norms[*b]).unwrap())
        .unwrap_or(0);
    let base = theta_star(model, saturating);
    if norms[saturating] == 0.0 {
        return vec![0.0; n];
    }
    let mut t = 1.0f64;
    for u in 0..n {
        if u != saturating {
            t = t.min((gamma - norms[u]) / norms[saturating]);
        }
    }
    let t = scale.clamp(0.0, 1.0) * t.clamp(0.0, 1.0);
    (0..n)
        .map(|j| -t * factor(j).clamp(0.0, 1.0) * base[j])
        .collect()
}

/// Mix a distribution with an independent random simplex point:
/// (1−t)·base + t·(normalized exponentials).
pub fn dirichlet_perturbation(
    base: &DenseDistribution,
    t: f64,
    rng: &mut impl rand::Rng,
) -> Result<DenseDistribution> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "mixing weight must lie in [0, 1], got {t}"
        )));
    }
    let noise: Vec<f64> = (0..base.num_states())
        .map(|_| -(rng.random::<f64>().max(f64::MIN_POSITIVE)).ln())
        .collect();
    let total: f64 = noise.iter().sum();
    let probs: Vec<f64> = base
        .probs()
        .iter()
        .zip(&noise)
        .map(|(p, e)| (1.0 - t) * p + t * e / total)
        .collect();
    DenseDistribution::new(base.n(), probs)
}

/// Mix with the uniform distribution so every state carries mass; used to
/// probe the KL bound on boundary-supported restrictions.
pub fn smooth(nu: &DenseDistribution, epsilon: f64) -> Result<DenseDistribution> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "smoothing weight must lie in [0, 1], got {epsilon}"
        )));
    }
    let states = nu.num_states() as f64;
    let probs: Vec<f64> = nu
        .probs()
        .iter()
        .map(|p| (1.0 - epsilon) * p + epsilon / states)
        .collect();
    DenseDistribution::new(nu.n(), probs)
}

/// Uniform probes (x, ε) with both endpoints inside [−γ, γ].
pub fn convexity_probes(count: usize, gamma: f64, rng: &mut impl rand::Rng) -> Vec<(f64, f64)> {
    let mut probes = Vec::with_capacity(count);
    while probes.len() < count {
        let x = rng.random_range(-gamma..gamma);
        let e = rng.random_range(-gamma..gamma);
        if (x + e).abs() <= gamma {
            probes.push((x, e));
        }
    }
    probes
}

/// Every conditioned restriction μ_A over proper nonempty subsets A of
/// the state space. Exhaustive, so only sensible for tiny models.
fn conditioned_restrictions(model: &IsingModel) -> Result<Vec<(String, DenseDistribution)>> {
    let mu = model.gibbs_distribution()?;
    let states = mu.num_states();
    assert!(states <= 16, "exhaustive subset scan needs ≤ 16 states");
    let masks = 1u64 << states;
    let mut out = Vec::with_capacity(masks as usize - 2);
    for bits in 1..masks - 1 {
        let set = StateSet::from_predicate(states, |s| bits >> s & 1 == 1);
        out.push((format!("A={bits:#x}"), restricted_distribution(&mu, &set)?));
    }
    Ok(out)
}

fn conditional_closeness_battery(
    model: &IsingModel,
    rng: &mut impl rand::Rng,
) -> Result<OracleReport> {
    let kernel = TransitionKernel::glauber(model);
    let mu = model.gibbs_distribution()?;
    let mut parts =
        vec![check_conditional_closeness(model, &kernel, &mu)?.with_label_prefix("nu=mu")];
    for (label, nu) in conditioned_restrictions(model)? {
        parts.push(check_conditional_closeness(model, &kernel, &nu)?.with_label_prefix(&label));
    }
    for i in 0..100 {
        let nu = dirichlet_perturbation(&mu, 0.1, rng)?;
        parts.push(
            check_conditional_closeness(model, &kernel, &nu)?
                .with_label_prefix(&format!("perturbed {i}")),
        );
    }
    Ok(OracleReport::merge(parts)?.truncated(100))
}

fn conditional_kl_battery(model: &IsingModel) -> Result<OracleReport> {
    let kernel = TransitionKernel::glauber(model);
    let mu = model.gibbs_distribution()?;
    let mut parts = vec![check_conditional_kl(model, &kernel, &mu)?.with_label_prefix("nu=mu")];
    for (label, nu) in conditioned_restrictions(model)? {
        let smoothed = smooth(&nu, 1e-6)?;
        parts.push(check_conditional_kl(model, &kernel, &smoothed)?.with_label_prefix(&label));
    }
    let mut merged = OracleReport::merge(parts)?.truncated(100);
    merged
        .notes
        .push("restrictions smoothed with 1e-6 uniform mass".into());
    Ok(merged)
}

fn gradient_battery(model: &IsingModel) -> Result<OracleReport> {
    let kernel = TransitionKernel::glauber(model);
    let mu = model.gibbs_distribution()?;
    let mut parts = vec![check_gradient_bound(model, &kernel, &mu)?.with_label_prefix("nu=mu")];
    // Nested threshold sets of shrinking mass.
    for threshold in 0..model.n() {
        let set =
            StateSet::from_predicate(mu.num_states(), |s| s.count_ones() as usize > threshold);
        if set.is_empty() || set.is_full() {
            continue;
        }
        let nu = restricted_distribution(&mu, &set)?;
        parts.push(
            check_gradient_bound(model, &kernel, &nu)?
                .with_label_prefix(&format!("up-count>{threshold}")),
        );
    }
    OracleReport::merge(parts)
}

fn curvature_battery(model: &IsingModel, rng: &mut impl rand::Rng) -> Result<OracleReport> {
    let kernel = TransitionKernel::glauber(model);
    let mu = model.gibbs_distribution()?;
    let n = model.n();
    let zero = vec![0.0; n];
    let mut parts =
        vec![check_curvature(model, &kernel, &mu, &zero)?.with_label_prefix("nu=mu, delta=0")];
    for t in [0.1, 0.5, 1.0] {
        let delta = feasible_perturbation(model, t, |_| 1.0);
        parts.push(
            check_curvature(model, &kernel, &mu, &delta)?
                .with_label_prefix(&format!("nu=mu, shrink {t}")),
        );
    }
    let majority =
        StateSet::from_predicate(mu.num_states(), |s| 2 * (s.count_ones() as usize) > n);
    let nu = restricted_distribution(&mu, &majority)?;
    for i in 0..5 {
        let delta = feasible_perturbation(model, 1.0, |_| rng.random_range(0.0..1.0));
        parts.push(
            check_curvature(model, &kernel, &nu, &delta)?
                .with_label_prefix(&format!("majority, random shrink {i}")),
        );
    }
    OracleReport::merge(parts)
}

fn variance_battery(model: &IsingModel, rng: &mut impl rand::Rng) -> Result<OracleReport> {
    let kernel = TransitionKernel::glauber(model);
    let mu = model.gibbs_distribution()?;
    let n = model.n();
    let mut parts = vec![
        check_variance_closeness(model, &kernel, &mu, |_, _| 1.0)?.with_label_prefix("nu=mu, F=1"),
    ];
    let majority =
        StateSet::from_predicate(mu.num_states(), |s| 2 * (s.count_ones() as usize) > n);
    let nu = restricted_distribution(&mu, &majority)?;
    parts.push(
        check_variance_closeness(model, &kernel, &nu, |_, _| 1.0)?
            .with_label_prefix("majority, F=1"),
    );
    for i in 0..3 {
        let signs: Vec<f64> = (0..(1usize << n))
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        parts.push(
            check_variance_closeness(model, &kernel, &nu, move |c, site| {
                signs[c.index() & !(1usize << site)]
            })?
            .with_label_prefix(&format!("majority, random signs {i}")),
        );
    }
    OracleReport::merge(parts)
}

/// The canonical audit battery run by the command-line `verify`: every
/// check above, exercised at equilibrium, on conditioned restrictions,
/// and on perturbed equilibria of small random models. Deterministic in
/// `seed`.
pub fn standard_suite(seed: u64) -> Result<Vec<OracleReport>> {
    standard_suite_capped(seed, 8)
}

/// [`standard_suite`] with a model-size cap: batteries whose models exceed
/// `max_n` spins are skipped (the probe-based convexity check always runs).
/// The full suite needs `max_n` ≥ 8; the exhaustive restriction scans need
/// at least 4.
pub fn standard_suite_capped(seed: u64, max_n: usize) -> Result<Vec<OracleReport>> {
    if max_n < 4 {
        return Err(Error::InvalidParameter(format!(
            "the audit suite needs a size cap of at least 4 spins, got {max_n}"
        )));
    }
    let mut rng = rng::from_seed(seed);
    let mut reports = Vec::new();

    // A 4-spin model for the exhaustive restriction scans, a 6-spin model
    // for the per-node checks.
    let small = IsingModel::random(4, 2, (0.3, 0.8), 0.2, &mut rng)?;
    let medium = IsingModel::random(6, 3, (0.2, 0.7), 0.3, &mut rng)?;

    reports.push(conditional_closeness_battery(&small, &mut rng)?);
    reports.push(conditional_kl_battery(&small)?);
    if max_n >= 6 {
        reports.push(gradient_battery(&medium)?);
    }

    let probes = convexity_probes(10_000, 2.0, &mut rng);
    let mut convexity = Vec::new();
    for gamma in [0.5, 1.0, 2.0] {
        let scaled: Vec<(f64, f64)> = probes
            .iter()
            .map(|(x, e)| (x * gamma / 2.0, e * gamma / 2.0))
            .collect();
        convexity.push(
            check_f_convexity(gamma, &scaled)?.with_label_prefix(&format!("gamma={gamma}")),
        );
    }
    reports.push(OracleReport::merge(convexity)?.truncated(100));

    if max_n >= 6 {
        reports.push(curvature_battery(&medium, &mut rng)?);
        reports.push(variance_battery(&medium, &mut rng)?);
    }

    if max_n >= 8 {
        // Sampled loss-gap check on an 8-spin conditioned restriction.
        let large = IsingModel::random(8, 3, (0.2, 0.6), 0.2, &mut rng)?;
        let kernel = TransitionKernel::glauber(&large);
        let mu = large.gibbs_distribution()?;
        let majority = StateSet::from_predicate(mu.num_states(), |s| {
            2 * (s.count_ones() as usize) > large.n()
        });
        let nu = restricted_distribution(&mu, &majority)?;
        reports.push(check_pl_gap(
            &large,
            &kernel,
            &nu,
            10_000,
            0.05,
            200,
            rng::child_seed(seed, 0xB0),
        )?);
    }

    Ok(reports)
}
