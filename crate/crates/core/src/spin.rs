//! Binary spin models and their exact distributions.
//!
//! A model over `n` spins σ ∈ {−1, +1}ⁿ assigns the energy
//!
//! ```text
//! E(σ) = Σ_{u<v} θ_uv σ_u σ_v + Σ_u θ_u σ_u
//! ```
//!
//! and the Gibbs distribution μ(σ) ∝ exp(E(σ)). Note the sign convention:
//! *higher* energy means *more* probable. The single-spin conditionals are
//! logistic in the local field, which is what both the dynamics (Glauber
//! flips) and the learner (pseudo-likelihood regression) consume.
//!
//! Dense objects (2ⁿ-length probability vectors) are only constructed up to
//! [`crate::DENSE_SPIN_CAP`] spins.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{log_sum_exp, sigmoid};
use crate::{Error, Result, DENSE_SPIN_CAP};

/// One assignment of ±1 values to `n` spins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    /// Wrap a ±1 vector. Any other entry value is rejected.
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::InvalidParameter("empty spin vector".into()));
        }
        if let Some(bad) = spins.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::InvalidParameter(format!(
                "spin value {bad} is not ±1"
            )));
        }
        Ok(Self { spins })
    }

    /// All spins +1.
    pub fn all_up(n: usize) -> Self {
        Self { spins: vec![1; n] }
    }

    /// All spins −1.
    pub fn all_down(n: usize) -> Self {
        Self { spins: vec![-1; n] }
    }

    /// Independent uniform ±1 spins.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self {
            spins: (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        }
    }

    /// Decode a state index: bit `i` of `index` holds spin `i`, with bit
    /// value 1 ↔ spin +1. This is the canonical enumeration order used by
    /// every dense vector in the crate.
    pub fn from_index(index: usize, n: usize) -> Self {
        debug_assert!(n == 0 || index < (1usize << n));
        Self {
            spins: (0..n)
                .map(|i| if index >> i & 1 == 1 { 1 } else { -1 })
                .collect(),
        }
    }

    /// Encode to the canonical state index (inverse of [`from_index`]).
    ///
    /// [`from_index`]: SpinConfiguration::from_index
    pub fn index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .map(|(i, s)| if *s == 1 { 1usize << i } else { 0 })
            .sum()
    }

    pub fn n(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, u: usize) -> i8 {
        self.spins[u]
    }

    /// The configuration with spin `u` negated.
    pub fn flipped(&self, u: usize) -> Self {
        let mut s = self.clone();
        s.spins[u] = -s.spins[u];
        s
    }

    pub fn flip_in_place(&mut self, u: usize) {
        self.spins[u] = -self.spins[u];
    }

    /// Σ_i σ_i as an integer.
    pub fn spin_sum(&self) -> i64 {
        self.spins.iter().map(|s| *s as i64).sum()
    }
}

impl fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.spins {
            write!(f, "{}", if *s == 1 { '+' } else { '-' })?;
        }
        Ok(())
    }
}

/// Pairwise binary model: fields θ_u and couplings θ_uv (keyed u < v).
#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    n: usize,
    fields: Vec<f64>,
    couplings: BTreeMap<(usize, usize), f64>,
    /// Adjacency lists derived from `couplings`: neighbors[u] = [(v, θ_uv)].
    neighbors: Vec<Vec<(usize, f64)>>,
    gamma: f64,
}

impl IsingModel {
    /// Build a model from per-site fields and a list of couplings.
    /// Couplings may be given in either orientation but self-couplings and
    /// duplicate pairs are rejected; all values must be finite.
    pub fn new(
        n: usize,
        fields: Vec<f64>,
        couplings: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("a model needs at least one spin".into()));
        }
        if fields.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} fields for {} spins",
                fields.len(),
                n
            )));
        }
        if let Some(bad) = fields.iter().find(|f| !f.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite field {bad}")));
        }
        let mut map = BTreeMap::new();
        for (a, b, value) in couplings {
            if a == b {
                return Err(Error::InvalidModel(format!("self-coupling on site {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::SiteOutOfRange { site: a.max(b), n });
            }
            if !value.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "non-finite coupling on ({a},{b})"
                )));
            }
            let key = (a.min(b), a.max(b));
            if map.insert(key, value).is_some() {
                return Err(Error::InvalidModel(format!(
                    "duplicate coupling on pair ({},{})",
                    key.0, key.1
                )));
            }
        }
        let mut neighbors = vec![Vec::new(); n];
        for (&(u, v), &w) in &map {
            neighbors[u].push((v, w));
            neighbors[v].push((u, w));
        }
        let gamma = (0..n)
            .map(|u| {
                fields[u].abs()
                    + neighbors[u].iter().map(|(_, w)| w.abs()).sum::<f64>()
            })
            .fold(0.0_f64, f64::max);
        Ok(Self {
            n,
            fields,
            couplings: map,
            neighbors,
            gamma,
        })
    }

    /// The model with no fields and no couplings (independent fair spins).
    pub fn zero(n: usize) -> Self {
        Self::new(n, vec![0.0; n], []).expect("zero model is always valid")
    }

    /// Random graph model: a degree-≤`degree` graph built by greedily
    /// accepting a shuffled list of candidate pairs, coupling magnitudes
    /// uniform in `[magnitude.0, magnitude.1]` with independent random signs,
    /// fields uniform in `[-field_max, field_max]`.
    pub fn random(
        n: usize,
        degree: usize,
        magnitude: (f64, f64),
        field_max: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if degree >= n {
            return Err(Error::InfeasibleDegree { degree, n });
        }
        let (lo, hi) = magnitude;
        if !(0.0 <= lo && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "coupling magnitude range [{lo}, {hi}] is not ordered and non-negative"
            )));
        }
        if field_max < 0.0 {
            return Err(Error::InvalidParameter("negative field_max".into()));
        }
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for u in 0..n {
            for v in (u + 1)..n {
                pairs.push((u, v));
            }
        }
        pairs.shuffle(rng);
        let target = n * degree / 2;
        let mut deg = vec![0usize; n];
        let mut couplings = Vec::new();
        for (u, v) in pairs {
            if couplings.len() == target {
                break;
            }
            if deg[u] < degree && deg[v] < degree {
                let mag = if lo == hi { lo } else { rng.random_range(lo..hi) };
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                couplings.push((u, v, sign * mag));
                deg[u] += 1;
                deg[v] += 1;
            }
        }
        let fields = (0..n)
            .map(|_| {
                if field_max == 0.0 {
                    0.0
                } else {
                    rng.random_range(-field_max..field_max)
                }
            })
            .collect();
        Self::new(n, fields, couplings)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn field(&self, u: usize) -> f64 {
        self.fields[u]
    }

    pub fn couplings(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.couplings
    }

    /// θ_uv regardless of argument order; 0 for absent pairs.
    pub fn coupling(&self, u: usize, v: usize) -> f64 {
        if u == v {
            return 0.0;
        }
        let key = (u.min(v), u.max(v));
        self.couplings.get(&key).copied().unwrap_or(0.0)
    }

    pub fn neighbors(&self, u: usize) -> &[(usize, f64)] {
        &self.neighbors[u]
    }

    /// Width bound γ = max_u (|θ_u| + Σ_v |θ_uv|). Every local field the
    /// model can produce lies in [−γ, γ], so each conditional lies in
    /// [1/(1+e^{2γ}), 1/(1+e^{−2γ})].
    pub fn interaction_width(&self) -> f64 {
        self.gamma
    }

    /// E(σ) = Σ_{u<v} θ_uv σ_u σ_v + Σ_u θ_u σ_u.
    pub fn energy(&self, sigma: &SpinConfiguration) -> Result<f64> {
        if sigma.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "configuration has {} spins, model has {}",
                sigma.n(),
                self.n
            )));
        }
        let s = sigma.spins();
        let mut e = 0.0;
        for (&(u, v), &w) in &self.couplings {
            e += w * (s[u] as f64) * (s[v] as f64);
        }
        for (u, f) in self.fields.iter().enumerate() {
            e += f * (s[u] as f64);
        }
        Ok(e)
    }

    /// Local field at site `u`: ℓ_u(σ) = Σ_{v≠u} θ_uv σ_v + θ_u
    /// (does not involve σ_u).
    pub fn local_field(&self, sigma: &SpinConfiguration, u: usize) -> Result<f64> {
        if u >= self.n {
            return Err(Error::SiteOutOfRange { site: u, n: self.n });
        }
        if sigma.n() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "configuration has {} spins, model has {}",
                sigma.n(),
                self.n
            )));
        }
        Ok(self.local_field_bits(sigma.index(), u))
    }

    /// Local field computed from a state index (hot path; no validation).
    #[inline]
    pub(crate) fn local_field_bits(&self, state: usize, u: usize) -> f64 {
        let mut l = self.fields[u];
        for &(v, w) in &self.neighbors[u] {
            let sv = if state >> v & 1 == 1 { w } else { -w };
            l += sv;
        }
        l
    }

    /// μ(σ_u | σ_∖u) = 1 / (1 + exp(−2 σ_u ℓ_u(σ))): the probability that
    /// spin `u` takes the value it has in `sigma`, given all other spins.
    pub fn conditional(&self, sigma: &SpinConfiguration, u: usize) -> Result<f64> {
        let l = self.local_field(sigma, u)?;
        Ok(sigmoid(2.0 * (sigma.spin(u) as f64) * l))
    }

    /// Same conditional from a state index (hot path; no validation).
    #[inline]
    pub(crate) fn conditional_bits(&self, state: usize, u: usize) -> f64 {
        let su = if state >> u & 1 == 1 { 1.0 } else { -1.0 };
        sigmoid(2.0 * su * self.local_field_bits(state, u))
    }

    /// Exact Gibbs distribution μ(σ) ∝ exp(E(σ)) by dense enumeration.
    /// Errors above [`DENSE_SPIN_CAP`] spins.
    pub fn gibbs_distribution(&self) -> Result<DenseDistribution> {
        if self.n > DENSE_SPIN_CAP {
            return Err(Error::DenseCapExceeded {
                n: self.n,
                cap: DENSE_SPIN_CAP,
            });
        }
        let size = 1usize << self.n;
        let mut logw = vec![0.0_f64; size];
        for (s, w) in logw.iter_mut().enumerate() {
            *w = self.energy_bits(s);
        }
        let lz = log_sum_exp(&logw);
        let probs = logw.iter().map(|w| (w - lz).exp()).collect();
        DenseDistribution::new(self.n, probs)
    }

    /// Energy from a state index (hot path; no validation).
    pub(crate) fn energy_bits(&self, state: usize) -> f64 {
        let mut e = 0.0;
        for (&(u, v), &w) in &self.couplings {
            let su = if state >> u & 1 == 1 { 1.0 } else { -1.0 };
            let sv = if state >> v & 1 == 1 { 1.0 } else { -1.0 };
            e += w * su * sv;
        }
        for (u, f) in self.fields.iter().enumerate() {
            let su = if state >> u & 1 == 1 { 1.0 } else { -1.0 };
            e += f * su;
        }
        e
    }
}

/// A probability vector over all 2ⁿ spin configurations in canonical index
/// order (see [`SpinConfiguration::from_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDistribution {
    n: usize,
    probs: Vec<f64>,
}

impl DenseDistribution {
    /// Wrap a probability vector; it must have length 2ⁿ, non-negative
    /// entries, and sum to 1 within 1e−12.
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        if n > DENSE_SPIN_CAP {
            return Err(Error::DenseCapExceeded { n, cap: DENSE_SPIN_CAP });
        }
        if probs.len() != (1usize << n) {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for n = {n} (expecting {})",
                probs.len(),
                1usize << n
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(
                "entries must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(Self { n, probs })
    }

    /// Normalize an arbitrary non-negative weight vector.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        Self::new(n, probs)
    }

    /// Uniform distribution over 2ⁿ states.
    pub fn uniform(n: usize) -> Result<Self> {
        let size = 1usize
            .checked_shl(n as u32)
            .ok_or(Error::DenseCapExceeded { n, cap: DENSE_SPIN_CAP })?;
        Self::new(n, vec![1.0 / size as f64; size])
    }

    /// A point mass on one configuration.
    pub fn point_mass(sigma: &SpinConfiguration) -> Result<Self> {
        let mut probs = vec![0.0; 1usize << sigma.n()];
        probs[sigma.index()] = 1.0;
        Self::new(sigma.n(), probs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    /// Total-variation distance ½‖p − q‖₁ to another distribution on the
    /// same space.
    pub fn tv_distance(&self, other: &DenseDistribution) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "distributions over {} and {} spins",
                self.n, other.n
            )));
        }
        Ok(crate::math::tv_distance(&self.probs, &other.probs))
    }

    /// Draw `count` i.i.d. state indices by inverse-CDF sampling.
    pub fn sample_indices(&self, count: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;
        (0..count)
            .map(|_| {
                let r: f64 = rng.random();
                cdf.partition_point(|c| *c <= r).min(last)
            })
            .collect()
    }

    /// Mean of Σ_i σ_i under this distribution.
    pub fn mean_spin_sum(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(s, p)| {
                let ones = (s as u64).count_ones() as i64;
                let sum = 2 * ones - self.n as i64;
                p * sum as f64
            })
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Model interchange format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    fields: Vec<f64>,
    couplings: Vec<(usize, usize, f64)>,
}

/// Serialize a model to the JSON interchange format:
/// `{"n": .., "fields": [..], "couplings": [[u, v, value], ..]}` with pairs
/// listed as u < v in sorted order.
pub fn model_to_json(model: &IsingModel) -> String {
    let file = ModelFile {
        n: model.n(),
        fields: model.fields().to_vec(),
        couplings: model
            .couplings()
            .iter()
            .map(|(&(u, v), &w)| (u, v, w))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

/// Parse a model from the JSON interchange format. Pairs may appear in
/// either orientation; duplicates (after normalization) and self-loops are
/// rejected.
pub fn model_from_json(text: &str) -> Result<IsingModel> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("model JSON: {e}")))?;
    IsingModel::new(file.n, file.fields, file.couplings)
}

pub fn write_model(model: &IsingModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<IsingModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn three_spin_example() -> IsingModel {
        // θ_01 = 0.5, θ_12 = -0.25, fields (0.1, -0.2, 0.3)
        IsingModel::new(
            3,
            vec![0.1, -0.2, 0.3],
            [(0, 1, 0.5), (1, 2, -0.25)],
        )
        .unwrap()
    }

    #[test]
    fn energy_zero_model_is_zero() {
        let m = IsingModel::zero(4);
        let mut rng = from_seed(1);
        for _ in 0..10 {
            let s = SpinConfiguration::random(4, &mut rng);
            assert_eq!(m.energy(&s).unwrap(), 0.0);
        }
    }

    #[test]
    fn energy_hand_computed() {
        let m = three_spin_example();
        // σ = (+1, +1, -1): 0.5·1·1 + (-0.25)·1·(-1) + 0.1 - 0.2 - 0.3 = 0.35
        let s = SpinConfiguration::new(vec![1, 1, -1]).unwrap();
        assert!((m.energy(&s).unwrap() - 0.35).abs() < 1e-15);
        // σ = all +1: 0.5 - 0.25 + 0.1 - 0.2 + 0.3 = 0.45
        let s = SpinConfiguration::all_up(3);
        assert!((m.energy(&s).unwrap() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn energy_matches_independent_full_matrix_sum() {
        // Independent route: E = ½ Σ_{u≠v} θ_uv σ_u σ_v + Σ_u θ_u σ_u.
        let mut rng = from_seed(2);
        for _ in 0..5 {
            let m = IsingModel::random(6, 3, (0.2, 0.8), 0.5, &mut rng).unwrap();
            for s in 0..(1usize << 6) {
                let sigma = SpinConfiguration::from_index(s, 6);
                let sp = sigma.spins();
                let mut e = 0.0;
                for u in 0..6 {
                    for v in 0..6 {
                        if u != v {
                            e += 0.5 * m.coupling(u, v) * sp[u] as f64 * sp[v] as f64;
                        }
                    }
                    e += m.fields()[u] * sp[u] as f64;
                }
                assert!((m.energy(&sigma).unwrap() - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_zero_model_is_half() {
        let m = IsingModel::zero(3);
        let s = SpinConfiguration::all_up(3);
        for u in 0..3 {
            assert_eq!(m.conditional(&s, u).unwrap(), 0.5);
        }
    }

    #[test]
    fn conditional_single_spin_closed_form() {
        // One spin, field 0.5: P(+1) = 1/(1+e^{-1}).
        let m = IsingModel::new(1, vec![0.5], []).unwrap();
        let up = SpinConfiguration::all_up(1);
        let expected = 1.0 / (1.0 + (-1.0_f64).exp());
        assert!((m.conditional(&up, 0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.731_058_578_630_005).abs() < 1e-12);
    }

    #[test]
    fn conditional_pair_sums_to_one() {
        let m = three_spin_example();
        for s in 0..8 {
            let sigma = SpinConfiguration::from_index(s, 3);
            for u in 0..3 {
                let p = m.conditional(&sigma, u).unwrap();
                let q = m.conditional(&sigma.flipped(u), u).unwrap();
                assert!((p + q - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn conditional_consistent_with_gibbs_ratios() {
        let mut rng = from_seed(3);
        for n in 2..=6 {
            let m = IsingModel::random(n, 3.min(n - 1), (0.1, 1.0), 0.6, &mut rng).unwrap();
            let mu = m.gibbs_distribution().unwrap();
            for s in 0..(1usize << n) {
                let sigma = SpinConfiguration::from_index(s, n);
                for u in 0..n {
                    let t = sigma.flipped(u).index();
                    let expected = mu.prob(s) / (mu.prob(s) + mu.prob(t));
                    let got = m.conditional(&sigma, u).unwrap();
                    assert!(
                        (got - expected).abs() < 1e-12,
                        "n={n} s={s} u={u}: {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn conditional_respects_width_bounds() {
        let mut rng = from_seed(4);
        for _ in 0..20 {
            let m = IsingModel::random(5, 3, (0.05, 0.9), 0.4, &mut rng).unwrap();
            let g = m.interaction_width();
            let lo = 1.0 / (1.0 + (2.0 * g).exp());
            let hi = 1.0 / (1.0 + (-2.0 * g).exp());
            for s in 0..(1usize << 5) {
                let sigma = SpinConfiguration::from_index(s, 5);
                for u in 0..5 {
                    let p = m.conditional(&sigma, u).unwrap();
                    assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn gibbs_uniform_for_zero_model() {
        let mu = IsingModel::zero(3).gibbs_distribution().unwrap();
        for s in 0..8 {
            assert!((mu.prob(s) - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn gibbs_single_spin() {
        let m = IsingModel::new(1, vec![0.7], []).unwrap();
        let mu = m.gibbs_distribution().unwrap();
        let z = (0.7_f64).exp() + (-0.7_f64).exp();
        assert!((mu.prob(1) - (0.7_f64).exp() / z).abs() < 1e-15);
        assert!((mu.prob(0) - (-0.7_f64).exp() / z).abs() < 1e-15);
    }

    #[test]
    fn gibbs_ratio_identity() {
        let m = three_spin_example();
        let mu = m.gibbs_distribution().unwrap();
        for s in 0..8 {
            for t in 0..8 {
                let sa = SpinConfiguration::from_index(s, 3);
                let sb = SpinConfiguration::from_index(t, 3);
                let expected = (m.energy(&sa).unwrap() - m.energy(&sb).unwrap()).exp();
                assert!((mu.prob(s) / mu.prob(t) - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gibbs_rejects_above_cap() {
        let m = IsingModel::zero(DENSE_SPIN_CAP + 1);
        assert!(matches!(
            m.gibbs_distribution(),
            Err(Error::DenseCapExceeded { .. })
        ));
    }

    #[test]
    fn interaction_width_examples() {
        assert_eq!(IsingModel::zero(5).interaction_width(), 0.0);
        // max over u of |θ_u| + Σ|θ_uv|: site 1 carries 0.5 + 0.25 + 0.2.
        let m = three_spin_example();
        assert!((m.interaction_width() - 0.95).abs() < 1e-15);
        // Fully-connected embedding with coupling j/n and field -h.
        let n = 7;
        let (j, h) = (1.2, 0.04);
        let mut coup = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                coup.push((u, v, j / n as f64));
            }
        }
        let m = IsingModel::new(n, vec![-h; n], coup).unwrap();
        let expected = j * (n as f64 - 1.0) / n as f64 + h;
        assert!((m.interaction_width() - expected).abs() < 1e-12);
    }

    #[test]
    fn random_model_respects_degree_and_magnitude() {
        let mut rng = from_seed(5);
        let m = IsingModel::random(12, 3, (0.3, 0.6), 0.2, &mut rng).unwrap();
        let mut deg = vec![0usize; 12];
        for (&(u, v), &w) in m.couplings() {
            deg[u] += 1;
            deg[v] += 1;
            assert!(w.abs() >= 0.3 && w.abs() <= 0.6);
            assert!(u < v);
        }
        assert!(deg.iter().all(|d| *d <= 3));
        assert!(m.fields().iter().all(|f| f.abs() <= 0.2));
    }

    #[test]
    fn random_model_zero_degree_is_independent() {
        let mut rng = from_seed(6);
        let m = IsingModel::random(8, 0, (0.1, 0.2), 0.5, &mut rng).unwrap();
        assert!(m.couplings().is_empty());
    }

    #[test]
    fn random_model_infeasible_degree() {
        let mut rng = from_seed(7);
        assert!(matches!(
            IsingModel::random(4, 4, (0.1, 0.2), 0.0, &mut rng),
            Err(Error::InfeasibleDegree { .. })
        ));
    }

    #[test]
    fn random_model_deterministic_under_seed() {
        let a = IsingModel::random(10, 3, (0.2, 0.7), 0.3, &mut from_seed(99)).unwrap();
        let b = IsingModel::random(10, 3, (0.2, 0.7), 0.3, &mut from_seed(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn index_round_trip_exhaustive_small() {
        for n in 1..=6 {
            for s in 0..(1usize << n) {
                assert_eq!(SpinConfiguration::from_index(s, n).index(), s);
            }
        }
    }

    #[test]
    fn index_encoding_convention() {
        // Bit 0 holds spin 0; +1 ↔ bit set.
        let s = SpinConfiguration::new(vec![1, -1, -1, 1]).unwrap();
        assert_eq!(s.index(), 0b1001);
    }

    #[test]
    fn model_json_round_trip() {
        let m = three_spin_example();
        let text = model_to_json(&m);
        let back = model_from_json(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn model_json_rejects_duplicates_and_self_loops() {
        let dup = r#"{"n":3,"fields":[0,0,0],"couplings":[[0,1,0.5],[1,0,0.2]]}"#;
        assert!(model_from_json(dup).is_err());
        let selfloop = r#"{"n":3,"fields":[0,0,0],"couplings":[[2,2,0.5]]}"#;
        assert!(model_from_json(selfloop).is_err());
        let range = r#"{"n":3,"fields":[0,0,0],"couplings":[[0,3,0.5]]}"#;
        assert!(model_from_json(range).is_err());
    }

    #[test]
    fn dense_distribution_validation() {
        assert!(DenseDistribution::new(2, vec![0.5, 0.5]).is_err()); // wrong length
        assert!(DenseDistribution::new(1, vec![0.7, 0.7]).is_err()); // wrong sum
        assert!(DenseDistribution::new(1, vec![-0.1, 1.1]).is_err()); // negative
        assert!(DenseDistribution::new(1, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn sampling_is_deterministic_and_matches_distribution() {
        let m = three_spin_example();
        let mu = m.gibbs_distribution().unwrap();
        let idx = mu.sample_indices(20_000, &mut from_seed(11));
        let idx2 = mu.sample_indices(20_000, &mut from_seed(11));
        assert_eq!(idx, idx2);
        let mut counts = [0usize; 8];
        for i in &idx {
            counts[*i] += 1;
        }
        for s in 0..8 {
            let freq = counts[s] as f64 / 20_000.0;
            let sd = (mu.prob(s) * (1.0 - mu.prob(s)) / 20_000.0).sqrt();
            assert!(
                (freq - mu.prob(s)).abs() < 4.0 * sd + 1e-3,
                "state {s}: {freq} vs {}",
                mu.prob(s)
            );
        }
    }

    #[test]
    fn point_mass_and_mean_spin_sum() {
        let s = SpinConfiguration::new(vec![1, -1, 1]).unwrap();
        let d = DenseDistribution::point_mass(&s).unwrap();
        assert_eq!(d.prob(s.index()), 1.0);
        assert!((d.mean_spin_sum() - 1.0).abs() < 1e-15);
    }
}
