//! Reversible single-site Markov chains over spin configurations, plus a
//! small dense-matrix chain type for arbitrary finite state spaces.
//!
//! The central abstraction is the [`Kernel`] trait: anything that can
//! enumerate its outgoing transitions and answer point queries `P(to|from)`.
//! The analysis routines in [`metastability`] (stationarity drift, detailed
//! balance defect, conductance, spectral gap) are generic over it, so the
//! same code serves both the spin-flip chains built here and hand-made
//! [`GenericChain`] matrices.
//!
//! Spin chains come in two flavors:
//! * **dense** — an explicit per-state flip table (`n` flip probabilities
//!   plus a holding probability per state), available up to
//!   [`crate::DENSE_SPIN_CAP`] spins. All exact analysis runs here.
//! * **implicit** — no table, just the model; only simulation
//!   ([`run_chain`]) is possible.

mod metastability;
mod samples;

pub use metastability::{
    chain_conductance, detailed_balance_residual, mixing_lower_bound, push_forward,
    restrict_vector, restricted_distribution, set_conductance, spectral_gap,
    strong_metastability, tent_example, weak_metastability, TentExample,
};
pub use samples::{run_chain, SampleSet};

use std::fmt;

use rand::Rng;

use crate::spin::{DenseDistribution, IsingModel};
use crate::{Error, Result, DENSE_SPIN_CAP};

/// Which single-site update rule a [`TransitionKernel`] implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    /// Resample the chosen spin from its conditional given the rest.
    Glauber,
    /// Propose flipping the chosen spin, accept with min(1, e^{ΔE}).
    Metropolis,
}

impl fmt::Display for ChainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainKind::Glauber => write!(f, "glauber"),
            ChainKind::Metropolis => write!(f, "metropolis"),
        }
    }
}

/// A finite Markov kernel: enumerate transitions out of a state and answer
/// point probability queries. `prob(from, to)` must agree with what
/// `for_each_transition` visits, and rows must sum to 1.
pub trait Kernel {
    fn num_states(&self) -> usize;

    /// Visit every (target, probability) pair with nonzero mass out of
    /// `from`, including the self-loop when present.
    fn for_each_transition(&self, from: usize, visit: &mut dyn FnMut(usize, f64));

    /// P(to | from); 0 for impossible moves.
    fn prob(&self, from: usize, to: usize) -> f64;
}

/// Explicit single-flip transition table over all 2ⁿ states.
///
/// Row `s` holds the n flip probabilities P(s with spin u negated | s); the
/// remaining mass is the holding probability. Only single-spin moves exist.
#[derive(Debug, Clone)]
pub struct FlipTable {
    n: usize,
    /// `flip[s * n + u]` = probability of flipping spin `u` from state `s`.
    flip: Vec<f64>,
    hold: Vec<f64>,
}

impl FlipTable {
    fn build(model: &IsingModel, kind: ChainKind) -> Result<Self> {
        let n = model.n();
        if n > DENSE_SPIN_CAP {
            return Err(Error::DenseCapExceeded { n, cap: DENSE_SPIN_CAP });
        }
        let size = 1usize << n;
        let nf = n as f64;
        let mut flip = vec![0.0; size * n];
        let mut hold = vec![0.0; size];
        for s in 0..size {
            let mut total = 0.0;
            for u in 0..n {
                let p = match kind {
                    ChainKind::Glauber => model.conditional_bits(s ^ (1 << u), u) / nf,
                    ChainKind::Metropolis => {
                        let su = if s >> u & 1 == 1 { 1.0 } else { -1.0 };
                        // ΔE of the proposed flip; min(1, e^ΔE) = e^{min(0,ΔE)}.
                        let de = -2.0 * su * model.local_field_bits(s, u);
                        de.min(0.0).exp() / nf
                    }
                };
                flip[s * n + u] = p;
                total += p;
            }
            hold[s] = (1.0 - total).max(0.0);
        }
        Ok(Self { n, flip, hold })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn flip_prob(&self, state: usize, u: usize) -> f64 {
        self.flip[state * self.n + u]
    }

    pub fn hold_prob(&self, state: usize) -> f64 {
        self.hold[state]
    }
}

impl Kernel for FlipTable {
    fn num_states(&self) -> usize {
        1usize << self.n
    }

    fn for_each_transition(&self, from: usize, visit: &mut dyn FnMut(usize, f64)) {
        for u in 0..self.n {
            let p = self.flip[from * self.n + u];
            if p > 0.0 {
                visit(from ^ (1 << u), p);
            }
        }
        if self.hold[from] > 0.0 {
            visit(from, self.hold[from]);
        }
    }

    fn prob(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return self.hold[from];
        }
        let d = from ^ to;
        if d.count_ones() == 1 {
            self.flip[from * self.n + d.trailing_zeros() as usize]
        } else {
            0.0
        }
    }
}

/// A single-site chain for an Ising model: dense (with a [`FlipTable`]) up
/// to [`DENSE_SPIN_CAP`] spins, implicit (simulation only) beyond.
///
/// `min_update_ratio` is the certified lower bound on
/// P(flip to value q at site u | σ) / μ(q | σ_∖u): exactly 1/n for Glauber;
/// for Metropolis it is measured by a full scan in dense mode and set to the
/// analytic bound (1+e^{−2γ})/n in implicit mode.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    model: IsingModel,
    kind: ChainKind,
    table: Option<FlipTable>,
    omega_p: f64,
    omega_p_analytic: bool,
}

impl TransitionKernel {
    pub fn glauber(model: &IsingModel) -> Self {
        Self::new(model, ChainKind::Glauber)
    }

    pub fn metropolis(model: &IsingModel) -> Self {
        Self::new(model, ChainKind::Metropolis)
    }

    pub fn new(model: &IsingModel, kind: ChainKind) -> Self {
        let n = model.n();
        let table = FlipTable::build(model, kind).ok();
        let (omega_p, analytic) = match (kind, &table) {
            // For Glauber every flip has P = μ(new value | rest)/n, so the
            // ratio is identically 1/n.
            (ChainKind::Glauber, _) => (1.0 / n as f64, false),
            (ChainKind::Metropolis, Some(t)) => (min_update_ratio(model, t), false),
            (ChainKind::Metropolis, None) => {
                let g = model.interaction_width();
                ((1.0 + (-2.0 * g).exp()) / n as f64, true)
            }
        };
        Self {
            model: model.clone(),
            kind,
            table,
            omega_p,
            omega_p_analytic: analytic,
        }
    }

    pub fn model(&self) -> &IsingModel {
        &self.model
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn omega_p(&self) -> f64 {
        self.omega_p
    }

    /// True when `omega_p` came from the analytic fallback rather than a
    /// dense scan (only possible for implicit Metropolis kernels).
    pub fn omega_p_is_analytic(&self) -> bool {
        self.omega_p_analytic
    }

    pub fn is_dense(&self) -> bool {
        self.table.is_some()
    }

    /// The explicit flip table; errors for implicit (large-n) kernels.
    pub fn table(&self) -> Result<&FlipTable> {
        self.table.as_ref().ok_or(Error::DenseCapExceeded {
            n: self.model.n(),
            cap: DENSE_SPIN_CAP,
        })
    }

    /// ½‖ν − νP‖₁ for a distribution over this kernel's state space.
    pub fn weak_metastability(&self, nu: &DenseDistribution) -> Result<f64> {
        weak_metastability(nu.probs(), self.table()?)
    }

    /// ½ Σ_{i,j} |P(i|j)ν(j) − P(j|i)ν(i)|: total detailed-balance defect.
    pub fn strong_metastability(&self, nu: &DenseDistribution) -> Result<f64> {
        strong_metastability(nu.probs(), self.table()?)
    }
}

/// Minimum over all states and sites of
/// P(single-site move u → q | σ) / μ(q | σ_∖u), scanning flips only (the
/// self-value ratio is never the minimizer for these update rules).
fn min_update_ratio(model: &IsingModel, table: &FlipTable) -> f64 {
    let n = table.n();
    let mut min = f64::INFINITY;
    for s in 0..(1usize << n) {
        for u in 0..n {
            let flipped = s ^ (1 << u);
            let ratio = table.flip_prob(s, u) / model.conditional_bits(flipped, u);
            if ratio < min {
                min = ratio;
            }
        }
    }
    min
}

/// Dense row-stochastic chain over an arbitrary finite state space with its
/// stationary distribution attached. Used for hand-built examples (cycles,
/// two-state chains) and random reversible test instances.
#[derive(Debug, Clone)]
pub struct GenericChain {
    l: usize,
    /// Row-major: `matrix[from * l + to]` = P(to|from).
    matrix: Vec<f64>,
    stationary: Vec<f64>,
}

impl GenericChain {
    /// Validates: square shape, rows sum to 1 within 1e-12, stationary is a
    /// distribution and satisfies μP = μ within 1e-10.
    pub fn new(rows: Vec<Vec<f64>>, stationary: Vec<f64>) -> Result<Self> {
        let l = rows.len();
        if l < 2 {
            return Err(Error::InvalidChain("need at least two states".into()));
        }
        if stationary.len() != l {
            return Err(Error::DimensionMismatch(format!(
                "{} stationary entries for {l} states",
                stationary.len()
            )));
        }
        let mut matrix = Vec::with_capacity(l * l);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != l {
                return Err(Error::InvalidChain(format!("row {i} has {} entries", row.len())));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidChain(format!(
                    "row {i} is not a probability vector (sum {sum})"
                )));
            }
            matrix.extend_from_slice(row);
        }
        let total: f64 = stationary.iter().sum();
        if (total - 1.0).abs() > 1e-10 || stationary.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "stationary sums to {total}"
            )));
        }
        // μP = μ.
        for j in 0..l {
            let pushed: f64 = (0..l).map(|i| stationary[i] * matrix[i * l + j]).sum();
            if (pushed - stationary[j]).abs() > 1e-10 {
                return Err(Error::InvalidChain(format!(
                    "claimed stationary distribution is not stationary at state {j}: {} vs {}",
                    pushed, stationary[j]
                )));
            }
        }
        Ok(Self { l, matrix, stationary })
    }

    /// Two states swapping with probability `p`; uniform stationary.
    pub fn two_state(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("swap probability {p}")));
        }
        Self::new(
            vec![vec![1.0 - p, p], vec![p, 1.0 - p]],
            vec![0.5, 0.5],
        )
    }

    /// Simple random walk on the cycle with `l` states (½ to each
    /// neighbor); uniform stationary.
    pub fn cycle_walk(l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidChain("cycle needs at least two states".into()));
        }
        let mut rows = vec![vec![0.0; l]; l];
        for (i, row) in rows.iter_mut().enumerate() {
            row[(i + 1) % l] += 0.5;
            row[(i + l - 1) % l] += 0.5;
        }
        let stationary = vec![1.0 / l as f64; l];
        Self::new(rows, stationary)
    }

    /// Random reversible chain: a random walk on a complete weighted graph
    /// with self-loops. Symmetric weights w_ij make the walk reversible with
    /// stationary mass proportional to row weight.
    pub fn random_reversible(l: usize, rng: &mut impl Rng) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidChain("need at least two states".into()));
        }
        let mut w = vec![0.0; l * l];
        for i in 0..l {
            for j in i..l {
                let v = rng.random_range(0.05..1.0);
                w[i * l + j] = v;
                w[j * l + i] = v;
            }
        }
        let row_sums: Vec<f64> = (0..l)
            .map(|i| (0..l).map(|j| w[i * l + j]).sum())
            .collect();
        let total: f64 = row_sums.iter().sum();
        let rows: Vec<Vec<f64>> = (0..l)
            .map(|i| (0..l).map(|j| w[i * l + j] / row_sums[i]).collect())
            .collect();
        let stationary: Vec<f64> = row_sums.iter().map(|r| r / total).collect();
        Self::new(rows, stationary)
    }

    pub fn num_states(&self) -> usize {
        self.l
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.matrix[from * self.l..(from + 1) * self.l]
    }

    /// Minimum conductance over subsets with at most half the stationary
    /// mass (exhaustive enumeration; state count ≤ 20).
    pub fn conductance(&self) -> Result<f64> {
        chain_conductance(self, &self.stationary)
    }
}

impl Kernel for GenericChain {
    fn num_states(&self) -> usize {
        self.l
    }

    fn for_each_transition(&self, from: usize, visit: &mut dyn FnMut(usize, f64)) {
        for (to, p) in self.row(from).iter().enumerate() {
            if *p > 0.0 {
                visit(to, *p);
            }
        }
    }

    fn prob(&self, from: usize, to: usize) -> f64 {
        self.matrix[from * self.l + to]
    }
}

/// A subset of a finite state space, stored as a bitset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSet {
    universe: usize,
    blocks: Vec<u64>,
    count: usize,
}

impl StateSet {
    pub fn empty(universe: usize) -> Self {
        Self {
            universe,
            blocks: vec![0; universe.div_ceil(64)],
            count: 0,
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut s = Self::empty(universe);
        for i in 0..universe {
            s.insert(i);
        }
        s
    }

    pub fn from_indices(universe: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut s = Self::empty(universe);
        for i in indices {
            if i >= universe {
                return Err(Error::InvalidSubset(format!(
                    "state {i} outside universe of {universe}"
                )));
            }
            s.insert(i);
        }
        Ok(s)
    }

    pub fn from_predicate(universe: usize, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(universe);
        for i in 0..universe {
            if keep(i) {
                s.insert(i);
            }
        }
        s
    }

    /// Returns true if the state was newly inserted.
    pub fn insert(&mut self, i: usize) -> bool {
        debug_assert!(i < self.universe);
        let (b, m) = (i / 64, 1u64 << (i % 64));
        if self.blocks[b] & m == 0 {
            self.blocks[b] |= m;
            self.count += 1;
            true
        } else {
            false
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.universe && self.blocks[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_full(&self) -> bool {
        self.count == self.universe
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn complement(&self) -> Self {
        Self::from_predicate(self.universe, |i| !self.contains(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.universe).filter(|i| self.contains(*i))
    }

    /// Σ_{i ∈ A} weights[i].
    pub fn mass(&self, weights: &[f64]) -> f64 {
        self.iter().map(|i| weights[i]).sum()
    }
}
