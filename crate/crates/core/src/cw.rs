//! Fully-connected (mean-field) ferromagnet machinery.
//!
//! For the model with energy E(σ) = (J/n)Σ_{u<v}σ_uσ_v − hΣ_uσ_u every
//! permutation-invariant quantity reduces to the magnetization
//! m = Σσ/n ∈ {−1, −1+2/n, …, 1}. The free energy per spin of a
//! magnetization class,
//!
//! ```text
//! Ψ(m) = −(J/2)m² + hm − S(m),    S(m) = (1/n)·ln C(n, n(1+m)/2)
//! ```
//!
//! controls class probabilities: P(class m) ∝ e^{−nΨ(m)}. For J > 1 and
//! small h > 0 the landscape has a suppressed local minimum at positive m;
//! distributions concentrated there drift only weakly under single-site
//! resampling. This module constructs such states (Taylor expansions of Ψ
//! around the minimum, and hard truncations of Ψ to a window), evaluates
//! their stationarity defects in O(n) class space, and samples from them
//! exactly or by an O(1)-per-step magnetization-tracking Glauber run.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::chains::SampleSet;
use crate::math::{ln_binomial, log_sum_exp, sigmoid};
use crate::rng::from_seed;
use crate::spin::{DenseDistribution, IsingModel, SpinConfiguration};
use crate::{Error, Result, DENSE_SPIN_CAP};

/// Magnetization level m_k = −1 + 2k/n for k up-spins out of n.
pub fn level(n: usize, k: usize) -> f64 {
    debug_assert!(k <= n);
    -1.0 + 2.0 * k as f64 / n as f64
}

/// Inverse of [`level`]: errors if `m` is not (within 1e-9) a grid value.
pub fn level_index(n: usize, m: f64) -> Result<usize> {
    if !(-1.0..=1.0).contains(&m) {
        return Err(Error::OffGrid { m, n });
    }
    let k = ((m + 1.0) * n as f64 / 2.0).round();
    let k = k as usize;
    if k > n || (level(n, k) - m).abs() > 1e-9 {
        return Err(Error::OffGrid { m, n });
    }
    Ok(k)
}

/// Per-spin entropy of a magnetization class: S(m) = (1/n)·ln C(n, k).
pub fn class_entropy(n: usize, m: f64) -> Result<f64> {
    let k = level_index(n, m)?;
    Ok(ln_binomial(n, k) / n as f64)
}

/// The fully-connected model: n spins, coupling J (on each pair, scaled by
/// 1/n), field h entering the energy as −hΣσ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurieWeiss {
    n: usize,
    j: f64,
    h: f64,
}

/// A grid-aligned local minimum of the free energy at positive
/// magnetization, with the continuous stationary point kept alongside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveMinimum {
    /// Up-spin count of the grid minimum.
    pub index: usize,
    /// Grid magnetization −1 + 2·index/n.
    pub m0: f64,
    /// Root of the continuous gradient −Jm + h + artanh(m) near the grid
    /// minimum (used for window placement).
    pub continuous: f64,
}

impl CurieWeiss {
    pub fn new(n: usize, j: f64, h: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidModel("need at least two spins".into()));
        }
        if !j.is_finite() || !h.is_finite() {
            return Err(Error::InvalidModel(format!("non-finite parameters J={j} h={h}")));
        }
        Ok(Self { n, j, h })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coupling(&self) -> f64 {
        self.j
    }

    pub fn field(&self) -> f64 {
        self.h
    }

    /// Free energy per spin of a magnetization class:
    /// Ψ(m) = −(J/2)m² + hm − S(m).
    pub fn free_energy(&self, m: f64) -> Result<f64> {
        let k = level_index(self.n, m)?;
        Ok(self.free_energy_at(k))
    }

    /// Ψ at grid index k (no validation).
    pub fn free_energy_at(&self, k: usize) -> f64 {
        let m = level(self.n, k);
        -0.5 * self.j * m * m + self.h * m - self.entropy_at(k)
    }

    fn entropy_at(&self, k: usize) -> f64 {
        ln_binomial(self.n, k) / self.n as f64
    }

    /// Discrete forward-difference gradient of Ψ on segment [m_k, m_{k+1}]:
    /// −J·m_k + h − (n/2)(S(m_{k+1}) − S(m_k)).
    fn gradient_at(&self, k: usize) -> f64 {
        let m = level(self.n, k);
        -self.j * m + self.h
            - 0.5 * self.n as f64 * (self.entropy_at(k + 1) - self.entropy_at(k))
    }

    /// Locate the free-energy local minimum at positive magnetization.
    ///
    /// Scans the discrete gradient over m ≥ 0 for the descending region and
    /// its −→+ sign change (the first +→− change, when present, is the
    /// barrier top and is skipped). Errors when no positive-side descent
    /// exists — the landscape has no suppressed positive mode (e.g. J ≤ 1,
    /// or h beyond the spinodal).
    pub fn positive_minimum(&self) -> Result<PositiveMinimum> {
        let n = self.n;
        let k_start = n.div_ceil(2); // first grid index with m ≥ 0
        let mut descent = None;
        for k in k_start..n {
            if self.gradient_at(k) < 0.0 {
                descent = Some(k);
                break;
            }
        }
        let Some(first_down) = descent else {
            return Err(Error::NoPositiveMinimum(format!(
                "free energy has no descending region at positive magnetization (J={}, h={}, n={})",
                self.j, self.h, n
            )));
        };
        let mut index = None;
        for k in first_down + 1..n {
            if self.gradient_at(k) >= 0.0 {
                index = Some(k);
                break;
            }
        }
        let Some(crossing) = index else {
            return Err(Error::NoPositiveMinimum(
                "free-energy descent does not turn around before m = 1".into(),
            ));
        };
        // The forward difference evaluates −Jm at the segment's left end,
        // so the sign change can land one step beside the discrete
        // minimizer; settle by walking downhill.
        let mut index = crossing;
        while index > 0 && self.free_energy_at(index - 1) < self.free_energy_at(index) {
            index -= 1;
        }
        while index < n && self.free_energy_at(index + 1) < self.free_energy_at(index) {
            index += 1;
        }
        let m0 = level(n, index);
        let continuous = self.continuous_root(index).unwrap_or(m0);
        Ok(PositiveMinimum { index, m0, continuous })
    }

    /// Bisect −Jm + h + artanh(m) = 0 near grid index k.
    fn continuous_root(&self, k: usize) -> Option<f64> {
        let g = |m: f64| -self.j * m + self.h + m.atanh();
        let step = 2.0 / self.n as f64;
        let m = level(self.n, k);
        // The continuous root lies within O(1/n) of the discrete one;
        // expand the bracket a few steps if needed.
        for half_width in [1.0, 2.0, 4.0] {
            let lo = (m - half_width * step).max(-1.0 + 1e-12);
            let hi = (m + half_width * step).min(1.0 - 1e-12);
            if g(lo) < 0.0 && g(hi) >= 0.0 {
                let (mut lo, mut hi) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-14 {
                        break;
                    }
                }
                return Some(0.5 * (lo + hi));
            }
        }
        None
    }

    /// Curvature of the free energy at the minimum:
    /// a = −J − S″(m₀) by central second difference. Errors when a ≤ 0,
    /// i.e. the supplied point is not a minimum.
    pub fn quadratic_coefficient(&self, min: &PositiveMinimum) -> Result<f64> {
        let k = min.index;
        if k == 0 || k >= self.n {
            return Err(Error::InvalidParameter(format!(
                "curvature stencil does not fit at grid index {k}"
            )));
        }
        let a = self.curvature_at(k);
        if a <= 0.0 {
            return Err(Error::NotAMinimum(a));
        }
        Ok(a)
    }

    /// Ψ″ at grid index k by central second difference; computed from the
    /// entropy alone (the quadratic and linear parts differentiate
    /// exactly), which keeps it consistent with [`Self::taylor_profile`].
    fn curvature_at(&self, k: usize) -> f64 {
        let d = 2.0 / self.n as f64;
        let s2 = (self.entropy_at(k + 1) - 2.0 * self.entropy_at(k) + self.entropy_at(k - 1))
            / (d * d);
        -self.j - s2
    }

    /// Polynomial landscape: the Taylor expansion of Ψ around the minimum,
    /// Φ(m) = Σ_{j=2}^{order} Ψ^{(j)}(m₀)(m−m₀)^j/j!, with derivatives by
    /// central finite differences at the grid spacing. Orders 2–4.
    pub fn taylor_profile(
        &self,
        min: &PositiveMinimum,
        order: usize,
    ) -> Result<MagnetizationProfile> {
        if !(2..=4).contains(&order) {
            return Err(Error::InvalidParameter(format!(
                "expansion order must be 2, 3, or 4, got {order}"
            )));
        }
        let k = min.index;
        let reach = if order >= 3 { 2 } else { 1 };
        if k < reach || k + reach > self.n {
            return Err(Error::InvalidParameter(format!(
                "difference stencil of half-width {reach} does not fit at grid index {k}"
            )));
        }
        let d = 2.0 / self.n as f64;
        let psi = |i: isize| self.free_energy_at((k as isize + i) as usize);
        let mut derivs = [0.0; 5]; // derivs[j] = Ψ^{(j)}(m0), j = 2..=order
        derivs[2] = self.curvature_at(k);
        if order >= 3 {
            derivs[3] = (psi(2) - 2.0 * psi(1) + 2.0 * psi(-1) - psi(-2)) / (2.0 * d * d * d);
        }
        if order >= 4 {
            derivs[4] = (psi(2) - 4.0 * psi(1) + 6.0 * psi(0) - 4.0 * psi(-1) + psi(-2))
                / (d * d * d * d);
        }
        let m0 = min.m0;
        let values = (0..=self.n)
            .map(|i| {
                let x = level(self.n, i) - m0;
                let mut acc = 0.0;
                let mut pow = x * x;
                let mut fact = 2.0;
                for j in 2..=order {
                    acc += derivs[j] * pow / fact;
                    pow *= x;
                    fact *= (j + 1) as f64;
                }
                acc
            })
            .collect();
        MagnetizationProfile::new(self.n, values)
    }

    /// Hard-window landscape: Φ(m) = Ψ(m) inside |m − m₀| < m₀/(4√a),
    /// +∞ outside. The window is centered on the continuous stationary
    /// point. Errors when fewer than 3 grid levels survive.
    pub fn truncated_profile(
        &self,
        min: &PositiveMinimum,
        a: f64,
    ) -> Result<MagnetizationProfile> {
        if a <= 0.0 {
            return Err(Error::NotAMinimum(a));
        }
        let center = min.continuous;
        let width = center / (4.0 * a.sqrt());
        let values: Vec<f64> = (0..=self.n)
            .map(|k| {
                let m = level(self.n, k);
                if (m - center).abs() < width {
                    self.free_energy_at(k)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let finite = values.iter().filter(|v| v.is_finite()).count();
        if finite < 3 {
            return Err(Error::DegenerateWindow(finite));
        }
        MagnetizationProfile::new(self.n, values)
    }

    /// Φ = Ψ on the whole grid: the profile whose state is the exact Gibbs
    /// distribution.
    pub fn gibbs_profile(&self) -> MagnetizationProfile {
        let values = (0..=self.n).map(|k| self.free_energy_at(k)).collect();
        MagnetizationProfile::new(self.n, values).expect("full landscape is always valid")
    }

    /// Exact Gibbs distribution projected to magnetization classes.
    pub fn class_distribution(&self) -> MagnetizationDistribution {
        MagnetizationDistribution::from_profile(self, &self.gibbs_profile())
            .expect("Gibbs class weights are always normalizable")
    }

    /// Gibbs conditional of a single spin taking value `q`, given all
    /// others, expressed through the magnetization `m` of the FULL
    /// configuration in which that spin equals `q`:
    ///
    /// ```text
    /// f(q, m) = ½(1 + tanh(q(Jm − h) − J/n))
    /// ```
    ///
    /// The −J/n inside the argument removes the self-interaction of the
    /// conditioned spin; with this convention the pair normalization is
    /// f(+1, m) + f(−1, m − 2/n) = 1 (the two m's describe the same
    /// environment).
    pub fn site_conditional(&self, q: i8, m: f64) -> Result<f64> {
        if q != 1 && q != -1 {
            return Err(Error::InvalidParameter(format!("spin value {q} is not ±1")));
        }
        level_index(self.n, m)?;
        let qf = q as f64;
        let nf = self.n as f64;
        Ok(sigmoid(2.0 * (qf * (self.j * m - self.h) - self.j / nf)))
    }

    /// The equivalent pairwise model: coupling J/n on every pair, field −h
    /// on every site. Exact for all n; dense work requires small n.
    pub fn embedded_ising(&self) -> Result<IsingModel> {
        let n = self.n;
        let mut couplings = Vec::with_capacity(n * (n - 1) / 2);
        for u in 0..n {
            for v in (u + 1)..n {
                couplings.push((u, v, self.j / n as f64));
            }
        }
        IsingModel::new(n, vec![-self.h; n], couplings)
    }
}

/// A free-energy landscape over the magnetization grid; +∞ marks excluded
/// levels. Values are per-spin (multiplied by n when exponentiated).
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationProfile {
    n: usize,
    values: Vec<f64>,
}

impl MagnetizationProfile {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} profile values for {} levels",
                values.len(),
                n + 1
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidParameter(
                "profile values must be finite or +∞".into(),
            ));
        }
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn finite_levels(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }
}

/// A permutation-invariant distribution, stored as log class weights over
/// the n+1 magnetization levels. Within a class all C(n,k) configurations
/// share the probability e^{−nΦ(m_k)} / (Z·C(n,k)).
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationDistribution {
    n: usize,
    log_weights: Vec<f64>,
    log_z: f64,
}

impl MagnetizationDistribution {
    /// Class weights ∝ e^{−nΦ(m)}; errors when every level is excluded.
    pub fn from_profile(model: &CurieWeiss, profile: &MagnetizationProfile) -> Result<Self> {
        if profile.n() != model.n() {
            return Err(Error::DimensionMismatch(format!(
                "profile over {} levels, model has {} spins",
                profile.n(),
                model.n()
            )));
        }
        Self::from_log_weights(
            model.n(),
            profile
                .values()
                .iter()
                .map(|v| -(model.n() as f64) * v)
                .collect(),
        )
    }

    /// Direct construction from unnormalized log class weights
    /// (−∞ excludes a level).
    pub fn from_log_weights(n: usize, log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} levels",
                log_weights.len(),
                n + 1
            )));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidDistribution(
                "log weights must be finite or −∞".into(),
            ));
        }
        let log_z = log_sum_exp(&log_weights);
        if log_z == f64::NEG_INFINITY {
            return Err(Error::InvalidDistribution(
                "every magnetization level has zero weight".into(),
            ));
        }
        Ok(Self { n, log_weights, log_z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Probability of the whole class at level k.
    pub fn class_prob(&self, k: usize) -> f64 {
        (self.log_weights[k] - self.log_z).exp()
    }

    pub fn class_probs(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.class_prob(k)).collect()
    }

    /// Log probability of one configuration in class k.
    pub fn config_log_prob(&self, k: usize) -> f64 {
        self.log_weights[k] - self.log_z - ln_binomial(self.n, k)
    }

    /// E[m] under the class weights.
    pub fn mean_magnetization(&self) -> f64 {
        (0..=self.n)
            .map(|k| self.class_prob(k) * level(self.n, k))
            .sum()
    }

    /// Expand to an explicit distribution over all 2ⁿ configurations.
    pub fn to_dense(&self) -> Result<DenseDistribution> {
        if self.n > DENSE_SPIN_CAP {
            return Err(Error::DenseCapExceeded { n: self.n, cap: DENSE_SPIN_CAP });
        }
        let probs: Vec<f64> = (0..(1usize << self.n))
            .map(|s| {
                let k = (s as u64).count_ones() as usize;
                self.config_log_prob(k).exp()
            })
            .collect();
        DenseDistribution::new(self.n, probs)
    }

    /// Draw M i.i.d. configurations: a class by its weight, then a uniform
    /// arrangement of up-spins within the class.
    pub fn sample(&self, m: usize, seed: u64, label: &str) -> Result<SampleSet> {
        let mut rng = from_seed(seed);
        let probs = self.class_probs();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;
        let mut data = Vec::with_capacity(m);
        let mut scratch: Vec<i8> = vec![0; self.n];
        for _ in 0..m {
            let r: f64 = rng.random();
            let k = cdf.partition_point(|c| *c <= r).min(last);
            for (i, s) in scratch.iter_mut().enumerate() {
                *s = if i < k { 1 } else { -1 };
            }
            scratch.shuffle(&mut rng);
            data.push(SpinConfiguration::new(scratch.clone())?);
        }
        SampleSet::new(self.n, seed, label, data)
    }
}

/// Total detailed-balance defect of a permutation-invariant state against
/// single-site resampling, computed classwise in O(n).
///
/// Every adjacent configuration pair lies across some level boundary
/// (k−1, k); grouping the 2ⁿ-space sum by boundary gives
///
/// ```text
/// η = Σ_{k=1}^{n} | f(+1, m_k)·(n−k+1)/n·W(k−1) − f(−1, m_{k−1})·k/n·W(k) |
/// ```
///
/// with W the class weights and f the model conditional
/// ([`CurieWeiss::site_conditional`]). Agrees with the dense-space defect
/// for every permutation-invariant ν.
pub fn strong_eta(model: &CurieWeiss, nu: &MagnetizationDistribution) -> Result<f64> {
    if nu.n() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "distribution over {} spins, model has {}",
            nu.n(),
            model.n()
        )));
    }
    let n = model.n();
    let nf = n as f64;
    let mut total = 0.0;
    for k in 1..=n {
        let w_hi = nu.class_prob(k);
        let w_lo = nu.class_prob(k - 1);
        if w_hi == 0.0 && w_lo == 0.0 {
            continue;
        }
        let up = model.site_conditional(1, level(n, k))?;
        let down = model.site_conditional(-1, level(n, k - 1))?;
        let upward_flow = up * (nf - k as f64 + 1.0) / nf * w_lo;
        let downward_flow = down * k as f64 / nf * w_hi;
        total += (upward_flow - downward_flow).abs();
    }
    Ok(total)
}

/// One-step TV drift of a permutation-invariant state, via the induced
/// birth–death walk on magnetization levels (level moves up when a down
/// spin is selected and resampled to +1, and symmetrically down).
pub fn weak_eta(model: &CurieWeiss, nu: &MagnetizationDistribution) -> Result<f64> {
    if nu.n() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "distribution over {} spins, model has {}",
            nu.n(),
            model.n()
        )));
    }
    let n = model.n();
    let nf = n as f64;
    let w = nu.class_probs();
    let mut pushed = vec![0.0; n + 1];
    for (k, &mass) in w.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let up = if k < n {
            (nf - k as f64) / nf * model.site_conditional(1, level(n, k + 1))?
        } else {
            0.0
        };
        let down = if k > 0 {
            k as f64 / nf * model.site_conditional(-1, level(n, k - 1))?
        } else {
            0.0
        };
        if k < n {
            pushed[k + 1] += up * mass;
        }
        if k > 0 {
            pushed[k - 1] += down * mass;
        }
        pushed[k] += (1.0 - up - down) * mass;
    }
    Ok(crate::math::tv_distance(&w, &pushed))
}

/// Outcome of a magnetization-tracking Glauber run.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetizationRun {
    /// Recorded-sample counts per level k = 0..n.
    pub counts: Vec<u64>,
    /// Minimum magnetization seen at any update step, burn-in included.
    pub min_magnetization: f64,
    /// Level at the end of the run.
    pub final_k: usize,
}

impl MagnetizationRun {
    pub fn samples(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn mean_magnetization(&self, n: usize) -> f64 {
        let m_total = self.samples();
        if m_total == 0 {
            return 0.0;
        }
        self.counts
            .iter()
            .enumerate()
            .map(|(k, c)| *c as f64 * level(n, k))
            .sum::<f64>()
            / m_total as f64
    }
}

/// Glauber dynamics using the up-spin count as sufficient statistic: O(1)
/// per update, no configuration storage. Records a magnetization histogram
/// of the thinned post-burn-in samples.
pub fn glauber_class_run(
    model: &CurieWeiss,
    start_k: usize,
    steps: u64,
    burn_in: u64,
    thinning: u64,
    seed: u64,
) -> Result<MagnetizationRun> {
    let n = model.n();
    if start_k > n {
        return Err(Error::InvalidParameter(format!(
            "start level {start_k} exceeds {n}"
        )));
    }
    if thinning == 0 {
        return Err(Error::InvalidParameter("thinning must be ≥ 1".into()));
    }
    if burn_in > steps {
        return Err(Error::InvalidParameter(format!(
            "burn_in {burn_in} exceeds steps {steps}"
        )));
    }
    let mut rng = from_seed(seed);
    let mut k = start_k;
    let mut counts = vec![0u64; n + 1];
    let mut min_m = level(n, k);
    for step in 1..=steps {
        let site = rng.random_range(0..n);
        let site_is_up = site < k;
        // Level if the chosen site is resampled to +1.
        let k_plus = if site_is_up { k } else { k + 1 };
        let p_plus = model.site_conditional(1, level(n, k_plus))?;
        let r: f64 = rng.random();
        k = if r < p_plus { k_plus } else { k_plus - 1 };
        let m = level(n, k);
        if m < min_m {
            min_m = m;
        }
        if step > burn_in && (step - burn_in) % thinning == 0 {
            counts[k] += 1;
        }
    }
    Ok(MagnetizationRun {
        counts,
        min_magnetization: min_m,
        final_k: k,
    })
}

/// Same dynamics, keeping full configurations: O(1) conditional evaluation
/// per step via the running spin sum, identical in distribution to
/// simulating the embedded pairwise model.
pub fn glauber_run(
    model: &CurieWeiss,
    start: &SpinConfiguration,
    steps: u64,
    burn_in: u64,
    thinning: u64,
    seed: u64,
) -> Result<SampleSet> {
    let n = model.n();
    if start.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "start has {} spins, model has {n}",
            start.n()
        )));
    }
    if thinning == 0 {
        return Err(Error::InvalidParameter("thinning must be ≥ 1".into()));
    }
    if burn_in > steps {
        return Err(Error::InvalidParameter(format!(
            "burn_in {burn_in} exceeds steps {steps}"
        )));
    }
    let mut rng = from_seed(seed);
    let mut spins: Vec<i8> = start.spins().to_vec();
    let mut sum: i64 = spins.iter().map(|s| *s as i64).sum();
    let jn = model.j / n as f64;
    let mut data = Vec::with_capacity(((steps - burn_in) / thinning) as usize);
    for step in 1..=steps {
        let u = rng.random_range(0..n);
        let l = jn * (sum - spins[u] as i64) as f64 - model.h;
        let r: f64 = rng.random();
        let new = if r < sigmoid(2.0 * l) { 1i8 } else { -1i8 };
        sum += (new - spins[u]) as i64;
        spins[u] = new;
        if step > burn_in && (step - burn_in) % thinning == 0 {
            data.push(SpinConfiguration::new(spins.clone())?);
        }
    }
    SampleSet::new(
        n,
        seed,
        format!("cw-glauber burn_in={burn_in} thinning={thinning}"),
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{strong_metastability, weak_metastability, TransitionKernel};

    #[test]
    fn entropy_hand_values() {
        // n = 4: C(4,3) = 4 at m = 0.5, C(4,2) = 6 at m = 0.
        assert!((class_entropy(4, 0.5).unwrap() - 0.25 * 4.0_f64.ln()).abs() < 1e-12);
        assert!((class_entropy(4, 0.0).unwrap() - 0.25 * 6.0_f64.ln()).abs() < 1e-12);
        assert_eq!(class_entropy(4, 1.0).unwrap(), 0.0);
        assert_eq!(class_entropy(4, -1.0).unwrap(), 0.0);
        assert!(class_entropy(4, 0.3).is_err());
        assert!(class_entropy(4, 1.5).is_err());
    }

    #[test]
    fn level_round_trip() {
        for n in [2usize, 7, 10, 513] {
            for k in 0..=n {
                assert_eq!(level_index(n, level(n, k)).unwrap(), k);
            }
        }
    }

    #[test]
    fn pure_entropy_landscape_is_minimized_at_zero() {
        let model = CurieWeiss::new(10, 0.0, 0.0).unwrap();
        let argmin = (0..=10)
            .min_by(|a, b| {
                model
                    .free_energy_at(*a)
                    .partial_cmp(&model.free_energy_at(*b))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(argmin, 5);
    }

    #[test]
    fn class_weights_match_dense_enumeration() {
        for (j, h) in [(1.2, 0.04), (0.5, 0.0), (0.8, -0.3)] {
            let model = CurieWeiss::new(10, j, h).unwrap();
            let dense_direct = model
                .embedded_ising()
                .unwrap()
                .gibbs_distribution()
                .unwrap();
            let via_classes = model.class_distribution().to_dense().unwrap();
            for s in 0..(1usize << 10) {
                assert!(
                    (dense_direct.prob(s) - via_classes.prob(s)).abs() < 1e-13,
                    "J={j} h={h} state {s}"
                );
            }
        }
    }

    #[test]
    fn site_conditional_matches_embedded_model_everywhere() {
        for n in [2usize, 3, 6, 8] {
            for (j, h) in [(1.0, 0.0), (1.2, 0.04), (0.6, -0.2)] {
                let model = CurieWeiss::new(n, j, h).unwrap();
                let ising = model.embedded_ising().unwrap();
                for s in 0..(1usize << n) {
                    let sigma = SpinConfiguration::from_index(s, n);
                    let m = sigma.spin_sum() as f64 / n as f64;
                    for u in 0..n {
                        let expected = ising.conditional(&sigma, u).unwrap();
                        let got = model.site_conditional(sigma.spin(u), m).unwrap();
                        assert!(
                            (got - expected).abs() < 1e-12,
                            "n={n} J={j} h={h} s={s} u={u}: {got} vs {expected}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn site_conditional_pair_normalization() {
        let model = CurieWeiss::new(7, 1.3, 0.1).unwrap();
        for k in 1..=7 {
            let up = model.site_conditional(1, level(7, k)).unwrap();
            let down = model.site_conditional(-1, level(7, k - 1)).unwrap();
            assert!((up + down - 1.0).abs() < 1e-15);
        }
        assert!(model.site_conditional(0, 1.0).is_err());
        assert!(model.site_conditional(1, 0.71).is_err());
    }

    #[test]
    fn positive_minimum_agrees_with_fixed_point() {
        // h = 0: the stationary condition is m = tanh(Jm). The discrete
        // minimizer carries an O(1/n) entropy correction on top of grid
        // rounding, so allow two grid steps.
        for (n, j) in [(1000usize, 1.5), (500, 1.2), (256, 2.0)] {
            let model = CurieWeiss::new(n, j, 0.0).unwrap();
            let min = model.positive_minimum().unwrap();
            let mut m = 0.9f64;
            for _ in 0..10_000 {
                m = (j * m).tanh();
            }
            assert!(
                (min.m0 - m).abs() <= 4.0 / n as f64 + 1e-9,
                "n={n} J={j}: grid {} vs fixed point {m}",
                min.m0
            );
            assert!((min.continuous - m).abs() < 1e-6, "continuous root off: {} vs {m}", min.continuous);
        }
    }

    #[test]
    fn positive_minimum_with_opposing_field() {
        let model = CurieWeiss::new(512, 1.2, 0.04).unwrap();
        let min = model.positive_minimum().unwrap();
        // Independent fixed-point solve of m = tanh(Jm − h).
        let mut m = 0.9f64;
        for _ in 0..10_000 {
            m = (1.2 * m - 0.04).tanh();
        }
        assert!((min.continuous - m).abs() < 1e-6);
        assert!(min.m0 > 0.5 && min.m0 < 0.6);
        // The grid point is a discrete local minimum.
        let psi = |k: usize| model.free_energy_at(k);
        assert!(psi(min.index) <= psi(min.index - 1));
        assert!(psi(min.index) <= psi(min.index + 1));
    }

    #[test]
    fn no_positive_minimum_when_subcritical_or_past_spinodal() {
        assert!(matches!(
            CurieWeiss::new(200, 0.5, 0.0).unwrap().positive_minimum(),
            Err(Error::NoPositiveMinimum(_))
        ));
        // Strong opposing field destroys the positive well.
        assert!(CurieWeiss::new(200, 1.1, 0.5)
            .unwrap()
            .positive_minimum()
            .is_err());
    }

    #[test]
    fn curvature_positive_at_minimum_negative_at_barrier() {
        let model = CurieWeiss::new(512, 1.2, 0.04).unwrap();
        let min = model.positive_minimum().unwrap();
        let a = model.quadratic_coefficient(&min).unwrap();
        assert!(a > 0.0 && a < 1.0, "a = {a}");
        // The barrier top between 0 and m0: grid argmax of Ψ.
        let barrier = (256..min.index)
            .max_by(|x, y| {
                model
                    .free_energy_at(*x)
                    .partial_cmp(&model.free_energy_at(*y))
                    .unwrap()
            })
            .unwrap();
        let fake = PositiveMinimum {
            index: barrier,
            m0: level(512, barrier),
            continuous: level(512, barrier),
        };
        assert!(matches!(
            model.quadratic_coefficient(&fake),
            Err(Error::NotAMinimum(_))
        ));
    }

    #[test]
    fn taylor_profile_shape() {
        let model = CurieWeiss::new(256, 1.2, 0.02).unwrap();
        let min = model.positive_minimum().unwrap();
        let a = model.quadratic_coefficient(&min).unwrap();

        let quad = model.taylor_profile(&min, 2).unwrap();
        assert_eq!(quad.value(min.index), 0.0);
        // Pure quadratic: Φ(m) = a(m−m₀)²/2 exactly, and its discrete
        // second difference recovers +a.
        for k in [0usize, 100, 200, 256] {
            let x = level(256, k) - min.m0;
            assert!((quad.value(k) - 0.5 * a * x * x).abs() < 1e-12);
        }
        let d = 2.0 / 256.0;
        let second = (quad.value(min.index + 1) - 2.0 * quad.value(min.index)
            + quad.value(min.index - 1))
            / (d * d);
        assert!((second - a).abs() < 1e-9);

        // Higher orders keep the minimum flat and match Ψ locally better.
        let quartic = model.taylor_profile(&min, 4).unwrap();
        assert_eq!(quartic.value(min.index), 0.0);
        let psi0 = model.free_energy_at(min.index);
        let err2: f64 = (quad.value(min.index + 8)
            - (model.free_energy_at(min.index + 8) - psi0))
            .abs();
        let err4: f64 = (quartic.value(min.index + 8)
            - (model.free_energy_at(min.index + 8) - psi0))
            .abs();
        assert!(err4 < err2, "quartic {err4} vs quadratic {err2}");

        assert!(model.taylor_profile(&min, 1).is_err());
        assert!(model.taylor_profile(&min, 5).is_err());
    }

    #[test]
    fn truncated_profile_window() {
        let model = CurieWeiss::new(200, 1.2, 0.02).unwrap();
        let min = model.positive_minimum().unwrap();
        let a = model.quadratic_coefficient(&min).unwrap();
        let truncated = model.truncated_profile(&min, a).unwrap();
        let width = min.continuous / (4.0 * a.sqrt());
        for k in 0..=200 {
            let m = level(200, k);
            if (m - min.continuous).abs() < width {
                assert_eq!(truncated.value(k), model.free_energy_at(k));
            } else {
                assert!(truncated.value(k).is_infinite());
            }
        }
        assert!(truncated.finite_levels() >= 3);
        // An enormous curvature shrinks the window below the grid spacing.
        assert!(matches!(
            model.truncated_profile(&min, 1e8),
            Err(Error::DegenerateWindow(_))
        ));
    }

    #[test]
    fn truncated_state_is_conditioned_gibbs() {
        let model = CurieWeiss::new(64, 1.4, 0.05).unwrap();
        let min = model.positive_minimum().unwrap();
        let a = model.quadratic_coefficient(&min).unwrap();
        let nu =
            MagnetizationDistribution::from_profile(&model, &model.truncated_profile(&min, a).unwrap())
                .unwrap();
        let gibbs = model.class_distribution();
        // Inside the window the ratio to the Gibbs class weights is the
        // constant 1/μ(window).
        let mut ratio = None;
        for k in 0..=64 {
            let p = nu.class_prob(k);
            if p > 0.0 {
                let r = p / gibbs.class_prob(k);
                match ratio {
                    None => ratio = Some(r),
                    Some(r0) => assert!((r - r0).abs() / r0 < 1e-10),
                }
            }
        }
    }

    #[test]
    fn class_distribution_normalizes() {
        let model = CurieWeiss::new(100, 1.2, 0.04).unwrap();
        let nu = model.class_distribution();
        let total: f64 = nu.class_probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(
            MagnetizationDistribution::from_log_weights(4, vec![f64::NEG_INFINITY; 5]).is_err()
        );
    }

    #[test]
    fn class_space_etas_match_dense_space() {
        // The module's central oracle: for permutation-invariant states the
        // classwise O(n) formulas must reproduce the full 2ⁿ-space values.
        let mut seed = 40u64;
        for n in [4usize, 6, 8] {
            for (j, h) in [(1.4, 0.0), (1.2, 0.04), (0.7, 0.1)] {
                let model = CurieWeiss::new(n, j, h).unwrap();
                let kernel = TransitionKernel::glauber(&model.embedded_ising().unwrap());
                let table = kernel.table().unwrap();

                let mut profiles = vec![model.gibbs_profile()];
                if let Ok(min) = model.positive_minimum() {
                    if let Ok(p) = model.taylor_profile(&min, 2) {
                        profiles.push(p);
                    }
                    if let Ok(p) = model.taylor_profile(&min, 4) {
                        profiles.push(p);
                    }
                }
                // Arbitrary random landscapes exercise the identity away
                // from any stationarity structure.
                for _ in 0..3 {
                    seed += 1;
                    let mut rng = from_seed(seed);
                    let values: Vec<f64> =
                        (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    profiles.push(MagnetizationProfile::new(n, values).unwrap());
                }

                for profile in &profiles {
                    let nu = MagnetizationDistribution::from_profile(&model, profile).unwrap();
                    let dense = nu.to_dense().unwrap();
                    let fast_strong = strong_eta(&model, &nu).unwrap();
                    let slow_strong = strong_metastability(dense.probs(), table).unwrap();
                    assert!(
                        (fast_strong - slow_strong).abs() < 1e-12,
                        "strong n={n} J={j} h={h}: {fast_strong} vs {slow_strong}"
                    );
                    let fast_weak = weak_eta(&model, &nu).unwrap();
                    let slow_weak = weak_metastability(dense.probs(), table).unwrap();
                    assert!(
                        (fast_weak - slow_weak).abs() < 1e-12,
                        "weak n={n} J={j} h={h}: {fast_weak} vs {slow_weak}"
                    );
                }
            }
        }
    }

    #[test]
    fn gibbs_state_has_zero_defect() {
        for n in [16usize, 64] {
            let model = CurieWeiss::new(n, 1.2, 0.04).unwrap();
            let nu = model.class_distribution();
            assert!(strong_eta(&model, &nu).unwrap() < 1e-13, "n={n}");
            assert!(weak_eta(&model, &nu).unwrap() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn exact_sampler_statistics() {
        let model = CurieWeiss::new(30, 1.3, 0.05).unwrap();
        let min = model.positive_minimum().unwrap();
        let nu = MagnetizationDistribution::from_profile(
            &model,
            &model.taylor_profile(&min, 4).unwrap(),
        )
        .unwrap();
        let m_count = 20_000;
        let set = nu.sample(m_count, 77, "exact").unwrap();
        assert_eq!(set.len(), m_count);
        // Class histogram within multinomial tolerance.
        let mut counts = vec![0usize; 31];
        for c in set.configs() {
            let k = c.spins().iter().filter(|s| **s == 1).count();
            counts[k] += 1;
        }
        for k in 0..=30 {
            let p = nu.class_prob(k);
            let freq = counts[k] as f64 / m_count as f64;
            let sd = (p * (1.0 - p) / m_count as f64).sqrt();
            assert!(
                (freq - p).abs() <= 5.0 * sd + 1e-3,
                "class {k}: {freq} vs {p}"
            );
        }
        // Determinism.
        let again = nu.sample(m_count, 77, "exact").unwrap();
        assert_eq!(set, again);
        // Within-class arrangements vary (not all identical).
        let distinct: std::collections::HashSet<usize> =
            set.configs().iter().map(|c| c.index()).collect();
        assert!(distinct.len() > 100);
    }

    #[test]
    fn truncated_sampler_stays_in_window() {
        let model = CurieWeiss::new(80, 1.4, 0.05).unwrap();
        let min = model.positive_minimum().unwrap();
        let a = model.quadratic_coefficient(&min).unwrap();
        let nu = MagnetizationDistribution::from_profile(
            &model,
            &model.truncated_profile(&min, a).unwrap(),
        )
        .unwrap();
        let set = nu.sample(2_000, 5, "exact").unwrap();
        let width = min.continuous / (4.0 * a.sqrt());
        for m in set.magnetizations() {
            assert!((m - min.continuous).abs() < width + 1e-12);
        }
    }

    #[test]
    fn class_run_equilibrates_to_class_weights() {
        // Subcritical: fast mixing, histogram ≈ Gibbs class weights.
        let model = CurieWeiss::new(8, 0.8, 0.1).unwrap();
        let run = glauber_class_run(&model, 4, 400_000, 50_000, 8, 13).unwrap();
        let nu = model.class_distribution();
        let total = run.samples() as f64;
        for k in 0..=8 {
            let freq = run.counts[k] as f64 / total;
            let p = nu.class_prob(k);
            assert!(
                (freq - p).abs() < 0.02,
                "class {k}: {freq} vs {p}"
            );
        }
    }

    #[test]
    fn class_run_and_config_run_agree_in_distribution() {
        // Same model, same kind of dynamics: the sufficient-statistic walk
        // and the full-configuration walk must produce matching class
        // histograms (up to Monte-Carlo noise).
        let model = CurieWeiss::new(8, 0.9, -0.05).unwrap();
        let run = glauber_class_run(&model, 8, 300_000, 30_000, 8, 99).unwrap();
        let set = glauber_run(
            &model,
            &SpinConfiguration::all_up(8),
            300_000,
            30_000,
            8,
            99,
        )
        .unwrap();
        let total = run.samples() as f64;
        let mut counts = vec![0usize; 9];
        for c in set.configs() {
            counts[c.spins().iter().filter(|s| **s == 1).count()] += 1;
        }
        for k in 0..=8 {
            let a = run.counts[k] as f64 / total;
            let b = counts[k] as f64 / set.len() as f64;
            assert!((a - b).abs() < 0.02, "class {k}: {a} vs {b}");
        }
    }

    #[test]
    fn supercritical_run_started_up_stays_up() {
        // Deep positive well at J=1.6: the barrier is ~24 nats at n=200,
        // unreachable within this run.
        let model = CurieWeiss::new(200, 1.6, 0.04).unwrap();
        let run = glauber_class_run(&model, 200, 2_000_000, 200_000, 200, 3).unwrap();
        assert!(run.min_magnetization > 0.0);
        let mean = run.mean_magnetization(200);
        assert!(mean > 0.8, "mean magnetization {mean}");
    }

    #[test]
    fn run_parameter_validation() {
        let model = CurieWeiss::new(8, 1.0, 0.0).unwrap();
        assert!(glauber_class_run(&model, 9, 10, 0, 1, 0).is_err());
        assert!(glauber_class_run(&model, 4, 10, 20, 1, 0).is_err());
        assert!(glauber_class_run(&model, 4, 10, 0, 0, 0).is_err());
        let start = SpinConfiguration::all_up(7);
        assert!(glauber_run(&model, &start, 10, 0, 1, 0).is_err());
    }
}
