//! Stationarity and detailed-balance diagnostics for finite reversible
//! chains: single-step drift, total balance defect, conductance, spectral
//! gap, and the explicit slow-mixing constructions built from them.

use rand::Rng;

use crate::chains::{GenericChain, Kernel, StateSet};
use crate::math::tv_distance;
use crate::rng::from_seed;
use crate::spin::DenseDistribution;
use crate::{Error, Result};

fn check_len<K: Kernel + ?Sized>(nu: &[f64], kernel: &K) -> Result<()> {
    if nu.len() != kernel.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "distribution over {} states, kernel over {}",
            nu.len(),
            kernel.num_states()
        )));
    }
    Ok(())
}

/// One step of the chain applied to a distribution: (νP)(i) = Σ_j P(i|j)ν(j).
pub fn push_forward<K: Kernel + ?Sized>(nu: &[f64], kernel: &K) -> Result<Vec<f64>> {
    check_len(nu, kernel)?;
    let mut out = vec![0.0; nu.len()];
    for (j, &mass) in nu.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        kernel.for_each_transition(j, &mut |i, p| {
            out[i] += p * mass;
        });
    }
    Ok(out)
}

/// Single-step total-variation drift |ν − νP|_TV = ½‖ν − νP‖₁.
/// Zero exactly when ν is stationary.
pub fn weak_metastability<K: Kernel + ?Sized>(nu: &[f64], kernel: &K) -> Result<f64> {
    let pushed = push_forward(nu, kernel)?;
    Ok(tv_distance(nu, &pushed))
}

/// Total detailed-balance defect ½ Σ_{i,j} |P(i|j)ν(j) − P(j|i)ν(i)|.
///
/// Each unordered pair contributes its net-flow imbalance once. This
/// dominates the TV drift of [`weak_metastability`] for every ν, and is zero
/// exactly when ν satisfies detailed balance with P.
pub fn strong_metastability<K: Kernel + ?Sized>(nu: &[f64], kernel: &K) -> Result<f64> {
    check_len(nu, kernel)?;
    let mut total = 0.0;
    for j in 0..nu.len() {
        kernel.for_each_transition(j, &mut |i, p| {
            if i == j {
                return;
            }
            let q = kernel.prob(i, j);
            let term = (p * nu[j] - q * nu[i]).abs();
            // Pairs with two-sided support are visited from both ends;
            // one-sided pairs only from here.
            total += if q > 0.0 { 0.5 * term } else { term };
        });
    }
    Ok(total)
}

/// max_{i,j} |P(j|i)μ(i) − P(i|j)μ(j)|: the worst single-pair reversibility
/// violation of μ against the kernel.
pub fn detailed_balance_residual<K: Kernel + ?Sized>(mu: &[f64], kernel: &K) -> Result<f64> {
    check_len(mu, kernel)?;
    let mut worst = 0.0_f64;
    for i in 0..mu.len() {
        kernel.for_each_transition(i, &mut |j, p| {
            let r = (p * mu[i] - kernel.prob(j, i) * mu[j]).abs();
            if r > worst {
                worst = r;
            }
        });
    }
    Ok(worst)
}

/// Conductance of a subset: Γ(A) = Σ_{j∈A, i∉A} P(i|j)μ(j) / μ(A).
pub fn set_conductance<K: Kernel + ?Sized>(kernel: &K, mu: &[f64], a: &StateSet) -> Result<f64> {
    check_len(mu, kernel)?;
    if a.universe() != kernel.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "subset over {} states, kernel over {}",
            a.universe(),
            kernel.num_states()
        )));
    }
    if a.is_empty() || a.is_full() {
        return Err(Error::InvalidSubset(
            "conductance needs a nonempty proper subset".into(),
        ));
    }
    let mass = a.mass(mu);
    if mass <= 0.0 {
        return Err(Error::InvalidSubset("subset has zero stationary mass".into()));
    }
    let mut flow = 0.0;
    for j in a.iter() {
        if mu[j] == 0.0 {
            continue;
        }
        kernel.for_each_transition(j, &mut |i, p| {
            if !a.contains(i) {
                flow += p * mu[j];
            }
        });
    }
    Ok(flow / mass)
}

/// Minimum conductance over all subsets holding at most half the stationary
/// mass. Exhaustive over 2^L subsets; errors beyond 20 states.
pub fn chain_conductance<K: Kernel + ?Sized>(kernel: &K, mu: &[f64]) -> Result<f64> {
    check_len(mu, kernel)?;
    let l = kernel.num_states();
    if l > 20 {
        return Err(Error::InvalidChain(format!(
            "subset enumeration over {l} states is out of reach (max 20)"
        )));
    }
    let mut best = f64::INFINITY;
    for mask in 1u32..((1u32 << l) - 1) {
        let mut mass = 0.0;
        for j in 0..l {
            if mask >> j & 1 == 1 {
                mass += mu[j];
            }
        }
        if mass <= 0.0 || mass > 0.5 + 1e-12 {
            continue;
        }
        let mut flow = 0.0;
        for j in 0..l {
            if mask >> j & 1 == 0 || mu[j] == 0.0 {
                continue;
            }
            kernel.for_each_transition(j, &mut |i, p| {
                if mask >> i & 1 == 0 {
                    flow += p * mu[j];
                }
            });
        }
        let gamma = flow / mass;
        if gamma < best {
            best = gamma;
        }
    }
    if best.is_infinite() {
        return Err(Error::InvalidChain(
            "no subset with at most half the stationary mass".into(),
        ));
    }
    Ok(best)
}

/// Spectral gap 1 − λ₂ of a reversible kernel.
///
/// Works on the symmetrization S with S_ij = √(P(j|i)·P(i|j)) (similar to P
/// when detailed balance holds, so same spectrum), using power iteration on
/// (I+S)/2 with deflation against the known top eigenvector √μ. Stops when
/// the eigenpair residual drops below 1e-10; errors on non-reversible input
/// or if 10⁶ iterations do not converge.
pub fn spectral_gap<K: Kernel + ?Sized>(kernel: &K, mu: &[f64]) -> Result<f64> {
    check_len(mu, kernel)?;
    let residual = detailed_balance_residual(mu, kernel)?;
    if residual > 1e-8 {
        return Err(Error::NotReversible(residual));
    }
    let l = kernel.num_states();

    let mut top: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
    let top_norm = norm(&top);
    top.iter_mut().for_each(|x| *x /= top_norm);

    let deflate = |v: &mut Vec<f64>| {
        let c = dot(v, &top);
        for (x, w) in v.iter_mut().zip(&top) {
            *x -= c * w;
        }
    };
    // (I + S)/2 shifts the spectrum into [0, 1] so the power iteration
    // converges to the algebraically largest remaining eigenvalue.
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; l];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            kernel.for_each_transition(i, &mut |j, p| {
                acc += (p * kernel.prob(j, i)).sqrt() * v[j];
            });
            *o = 0.5 * (v[i] + acc);
        }
        out
    };

    let mut rng = from_seed(0x5eed_5a11);
    let mut v = vec![0.0; l];
    loop {
        for x in v.iter_mut() {
            *x = rng.random::<f64>() * 2.0 - 1.0;
        }
        deflate(&mut v);
        let nv = norm(&v);
        if nv > 1e-6 {
            v.iter_mut().for_each(|x| *x /= nv);
            break;
        }
    }

    for _ in 0..1_000_000 {
        let mut bv = apply(&v);
        deflate(&mut bv);
        let rho = dot(&v, &bv);
        let resid_sq: f64 = bv
            .iter()
            .zip(&v)
            .map(|(b, x)| (b - rho * x) * (b - rho * x))
            .sum();
        if resid_sq.sqrt() <= 1e-10 {
            // λ₂ = 2ρ − 1, gap = 1 − λ₂.
            return Ok((2.0 * (1.0 - rho)).max(0.0));
        }
        let nv = norm(&bv);
        if nv < 1e-300 {
            // The orthogonal complement is annihilated: λ₂ = −1.
            return Ok(2.0);
        }
        bv.iter_mut().for_each(|x| *x /= nv);
        v = bv;
    }
    Err(Error::InvalidChain(
        "power iteration for the spectral gap did not converge".into(),
    ))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// μ conditioned on a subset: μ_A(i) = μ(i)/μ(A) on A, 0 elsewhere.
pub fn restrict_vector(mu: &[f64], a: &StateSet) -> Result<Vec<f64>> {
    if a.universe() != mu.len() {
        return Err(Error::DimensionMismatch(format!(
            "subset over {} states, distribution over {}",
            a.universe(),
            mu.len()
        )));
    }
    let mass = a.mass(mu);
    if mass <= 0.0 {
        return Err(Error::InvalidSubset("subset has zero mass".into()));
    }
    Ok((0..mu.len())
        .map(|i| if a.contains(i) { mu[i] / mass } else { 0.0 })
        .collect())
}

/// [`restrict_vector`] specialized to spin-space distributions.
pub fn restricted_distribution(mu: &DenseDistribution, a: &StateSet) -> Result<DenseDistribution> {
    let probs = restrict_vector(mu.probs(), a)?;
    DenseDistribution::new(mu.n(), probs)
}

/// Minimum number of chain steps before a ν with single-step drift ≤ `eta`
/// can come within `epsilon` of a target at TV distance `tv_gap`:
/// ⌈(tv_gap − ε)/η⌉, or 0 when the bound is vacuous (ε ≥ tv_gap).
pub fn mixing_lower_bound(tv_gap: f64, eta: f64, epsilon: f64) -> Result<u64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(0.0..=1.0).contains(&tv_gap) || epsilon < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tv_gap {tv_gap} / epsilon {epsilon} out of range"
        )));
    }
    if epsilon >= tv_gap {
        return Ok(0);
    }
    Ok(((tv_gap - epsilon) / eta).ceil() as u64)
}

/// The cycle walk with a tent-shaped distribution: a state whose TV drift is
/// tiny (two kink states) while its balance defect is paid on every edge.
pub struct TentExample {
    pub chain: GenericChain,
    pub nu: Vec<f64>,
    /// Measured one-step ℓ1 drift ‖ν − νP‖₁. Note this is twice the
    /// TV-convention value returned by [`weak_metastability`]; at the kinks
    /// the drift concentrates on two states of imbalance L/Z each, giving
    /// 2L/Z here vs L/Z in TV.
    pub eta_weak: f64,
    /// Measured balance defect ½Σ|P(i|j)ν(j) − P(j|i)ν(i)| = L²/(2Z).
    pub eta_strong: f64,
}

/// Build the tent distribution ν(i) ∝ iL (i ≤ L/2), L² − iL (i > L/2) on
/// the L-cycle random walk and measure both metastability values.
/// The normalizer is Z = L³/4. Requires even L ≥ 4.
pub fn tent_example(l: usize) -> Result<TentExample> {
    if l < 4 || l % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "tent construction needs even L ≥ 4, got {l}"
        )));
    }
    let chain = GenericChain::cycle_walk(l)?;
    let lf = l as f64;
    let z = lf * lf * lf / 4.0;
    // States are indexed 0..L-1 for i = 1..L.
    let nu: Vec<f64> = (1..=l)
        .map(|i| {
            let i = i as f64;
            let w = if i <= lf / 2.0 { i * lf } else { lf * lf - i * lf };
            w / z
        })
        .collect();
    let eta_weak = 2.0 * weak_metastability(&nu, &chain)?;
    let eta_strong = strong_metastability(&nu, &chain)?;
    Ok(TentExample {
        chain,
        nu,
        eta_weak,
        eta_strong,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{ChainKind, TransitionKernel};
    use crate::rng::from_seed;
    use crate::spin::IsingModel;
    use proptest::prelude::*;

    #[test]
    fn stationary_distribution_has_zero_drift_and_defect() {
        let mut rng = from_seed(31);
        for n in 2..=5 {
            let model = IsingModel::random(n, (n - 1).min(3), (0.2, 1.0), 0.5, &mut rng).unwrap();
            let mu = model.gibbs_distribution().unwrap();
            for kind in [ChainKind::Glauber, ChainKind::Metropolis] {
                let kernel = TransitionKernel::new(&model, kind);
                let t = kernel.table().unwrap();
                assert!(weak_metastability(mu.probs(), t).unwrap() < 1e-13);
                assert!(strong_metastability(mu.probs(), t).unwrap() < 1e-13);
            }
        }
    }

    #[test]
    fn point_mass_drift_on_zero_model() {
        // From any state of the zero model, half the mass leaves; TV = ½.
        let model = IsingModel::zero(3);
        let kernel = TransitionKernel::glauber(&model);
        let mut nu = vec![0.0; 8];
        nu[5] = 1.0;
        let eta = weak_metastability(&nu, kernel.table().unwrap()).unwrap();
        assert!((eta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tent_values_are_exact_dyadics() {
        // L = 4: Z = 16, ν = (4, 8, 4, 0)/16.
        let t = tent_example(4).unwrap();
        assert_eq!(t.nu, vec![0.25, 0.5, 0.25, 0.0]);
        assert!((t.eta_weak - 2.0 * 4.0 / 16.0).abs() < 1e-15);
        assert!((t.eta_strong - 16.0 / 32.0).abs() < 1e-15);
        // The TV-convention drift is half the reported ℓ1 value.
        let tv = weak_metastability(&t.nu, &t.chain).unwrap();
        assert!((tv - 4.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn tent_formulas_hold_for_general_even_l() {
        for l in [6usize, 10, 12, 20] {
            let t = tent_example(l).unwrap();
            let lf = l as f64;
            let z = lf.powi(3) / 4.0;
            assert!((t.eta_weak - 2.0 * lf / z).abs() < 1e-14, "L={l}");
            assert!((t.eta_strong - lf * lf / (2.0 * z)).abs() < 1e-14, "L={l}");
            // Θ(L) separation between the two measures.
            assert!((t.eta_strong / t.eta_weak - lf / 4.0).abs() < 1e-10);
            let total: f64 = t.nu.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!(tent_example(5).is_err());
        assert!(tent_example(2).is_err());
    }

    #[test]
    fn conductance_hand_examples() {
        let chain = GenericChain::two_state(0.3).unwrap();
        let a = StateSet::from_indices(2, [0]).unwrap();
        let g = set_conductance(&chain, chain.stationary(), &a).unwrap();
        assert!((g - 0.3).abs() < 1e-15);
        assert!((chain.conductance().unwrap() - 0.3).abs() < 1e-15);

        // Zero model, n = 2, A = {(−,−)} = state 0: both flips leave A with
        // probability ¼ each under Glauber ⇒ Γ = ½.
        let model = IsingModel::zero(2);
        let kernel = TransitionKernel::glauber(&model);
        let mu = model.gibbs_distribution().unwrap();
        let a = StateSet::from_indices(4, [0]).unwrap();
        let g = set_conductance(kernel.table().unwrap(), mu.probs(), &a).unwrap();
        assert!((g - 0.5).abs() < 1e-15);

        assert!(set_conductance(&chain, chain.stationary(), &StateSet::empty(2)).is_err());
        assert!(set_conductance(&chain, chain.stationary(), &StateSet::full(2)).is_err());
    }

    #[test]
    fn cycle_conductance_minimized_by_contiguous_arc() {
        let chain = GenericChain::cycle_walk(4).unwrap();
        // Arc {0,1}: flow out = 2·(½·¼) = ¼, mass ½ ⇒ Γ = ½. The split pair
        // {0,2} pays both boundaries of both states ⇒ Γ = 1.
        let arc = StateSet::from_indices(4, [0, 1]).unwrap();
        let split = StateSet::from_indices(4, [0, 2]).unwrap();
        let g_arc = set_conductance(&chain, chain.stationary(), &arc).unwrap();
        let g_split = set_conductance(&chain, chain.stationary(), &split).unwrap();
        assert!((g_arc - 0.5).abs() < 1e-15);
        assert!((g_split - 1.0).abs() < 1e-15);
        assert!((chain.conductance().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn restricted_state_matches_set_conductance_exactly() {
        let mut rng = from_seed(32);
        for _ in 0..5 {
            let model = IsingModel::random(3, 2, (0.2, 1.2), 0.6, &mut rng).unwrap();
            let mu = model.gibbs_distribution().unwrap();
            let kernel = TransitionKernel::glauber(&model);
            let table = kernel.table().unwrap();
            for mask in 1usize..7 {
                let a = StateSet::from_predicate(8, |i| mask >> (i % 3) & 1 == 1);
                if a.is_empty() || a.is_full() {
                    continue;
                }
                let mu_a = restrict_vector(mu.probs(), &a).unwrap();
                let eta = strong_metastability(&mu_a, table).unwrap();
                let gamma = set_conductance(table, mu.probs(), &a).unwrap();
                assert!(
                    (eta - gamma).abs() < 1e-13,
                    "mask {mask}: η = {eta}, Γ = {gamma}"
                );
            }
        }
    }

    #[test]
    fn restriction_tv_distance_is_one_minus_mass() {
        let mut rng = from_seed(33);
        let model = IsingModel::random(4, 2, (0.2, 0.8), 0.4, &mut rng).unwrap();
        let mu = model.gibbs_distribution().unwrap();
        let a = StateSet::from_predicate(16, |s| s.count_ones() >= 2);
        let mu_a = restricted_distribution(&mu, &a).unwrap();
        let tv = mu_a.tv_distance(&mu).unwrap();
        let mass = a.mass(mu.probs());
        assert!((tv - (1.0 - mass)).abs() < 1e-13);
        // Full set: identity.
        let full = restricted_distribution(&mu, &StateSet::full(16)).unwrap();
        assert!(full.tv_distance(&mu).unwrap() < 1e-15);
    }

    #[test]
    fn spectral_gap_two_state() {
        for p in [0.1, 0.3, 0.5, 0.9] {
            let chain = GenericChain::two_state(p).unwrap();
            let gap = spectral_gap(&chain, chain.stationary()).unwrap();
            assert!((gap - 2.0 * p).abs() < 1e-9, "p={p}: gap {gap}");
        }
    }

    #[test]
    fn spectral_gap_zero_model_glauber() {
        // Site updates are independent; λ₂ = 1 − 1/n.
        for n in [2usize, 3, 4] {
            let model = IsingModel::zero(n);
            let kernel = TransitionKernel::glauber(&model);
            let mu = model.gibbs_distribution().unwrap();
            let gap = spectral_gap(kernel.table().unwrap(), mu.probs()).unwrap();
            assert!((gap - 1.0 / n as f64).abs() < 1e-9, "n={n}: gap {gap}");
        }
    }

    #[test]
    fn spectral_gap_rejects_irreversible_chain() {
        // Uniform stationary but pure rotation: no detailed balance.
        let rot = GenericChain::new(
            vec![
                vec![0.1, 0.9, 0.0],
                vec![0.0, 0.1, 0.9],
                vec![0.9, 0.0, 0.1],
            ],
            vec![1.0 / 3.0; 3],
        )
        .unwrap();
        assert!(matches!(
            spectral_gap(&rot, rot.stationary()),
            Err(Error::NotReversible(_))
        ));
    }

    #[test]
    fn cheeger_sandwich_on_random_chains() {
        let mut rng = from_seed(34);
        for l in [4usize, 6, 8, 12] {
            for _ in 0..3 {
                let chain = GenericChain::random_reversible(l, &mut rng).unwrap();
                let gamma = chain.conductance().unwrap();
                let gap = spectral_gap(&chain, chain.stationary()).unwrap();
                assert!(2.0 * gamma >= gap - 1e-9, "L={l}: 2Γ={} gap={gap}", 2.0 * gamma);
                assert!(gap >= gamma * gamma / 2.0 - 1e-9, "L={l}");
            }
        }
    }

    #[test]
    fn mixing_bound_arithmetic() {
        assert_eq!(mixing_lower_bound(0.5, 0.01, 0.1).unwrap(), 40);
        assert_eq!(mixing_lower_bound(0.5, 0.01, 0.5).unwrap(), 0);
        assert_eq!(mixing_lower_bound(0.5, 0.01, 0.7).unwrap(), 0);
        assert!(mixing_lower_bound(0.5, 0.0, 0.1).is_err());
        assert!(mixing_lower_bound(1.5, 0.1, 0.1).is_err());
    }

    #[test]
    fn drift_bound_respected_during_iteration() {
        // TV to stationarity cannot shrink faster than η per step.
        let mut rng = from_seed(35);
        let model = IsingModel::random(3, 2, (0.4, 1.0), 0.3, &mut rng).unwrap();
        let mu = model.gibbs_distribution().unwrap();
        let kernel = TransitionKernel::glauber(&model);
        let table = kernel.table().unwrap();
        let a = StateSet::from_predicate(8, |s| (s as u32).count_ones() >= 2);
        let mut nu = restrict_vector(mu.probs(), &a).unwrap();
        let eta = weak_metastability(&nu, table).unwrap();
        let tv0 = tv_distance(&nu, mu.probs());
        for eps in [0.05, 0.1] {
            let bound = mixing_lower_bound(tv0, eta, eps).unwrap();
            assert!(bound >= 1, "instance too quickly mixing to be informative");
        }
        let bound = mixing_lower_bound(tv0, eta, 0.05).unwrap();
        for _step in 0..bound {
            assert!(tv_distance(&nu, mu.probs()) > 0.05);
            nu = push_forward(&nu, table).unwrap();
        }
    }

    fn fixed_kernel() -> (TransitionKernel, DenseDistribution) {
        let mut rng = from_seed(36);
        let model = IsingModel::random(3, 2, (0.3, 0.9), 0.5, &mut rng).unwrap();
        let mu = model.gibbs_distribution().unwrap();
        (TransitionKernel::glauber(&model), mu)
    }

    proptest! {
        #[test]
        fn defect_dominates_drift(weights in proptest::collection::vec(1e-3..1.0f64, 8)) {
            let total: f64 = weights.iter().sum();
            let nu: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let (kernel, _) = fixed_kernel();
            let table = kernel.table().unwrap();
            let weak = weak_metastability(&nu, table).unwrap();
            let strong = strong_metastability(&nu, table).unwrap();
            prop_assert!(strong >= weak - 1e-12);
        }

        #[test]
        fn push_forward_preserves_mass(weights in proptest::collection::vec(1e-3..1.0f64, 8)) {
            let total: f64 = weights.iter().sum();
            let nu: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let (kernel, _) = fixed_kernel();
            let pushed = push_forward(&nu, kernel.table().unwrap()).unwrap();
            let sum: f64 = pushed.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(pushed.iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn conductance_lies_in_unit_interval(mask in 1usize..255) {
            let (kernel, mu) = fixed_kernel();
            let a = StateSet::from_predicate(8, |i| mask >> i & 1 == 1);
            if !a.is_empty() && !a.is_full() {
                let g = set_conductance(kernel.table().unwrap(), mu.probs(), &a).unwrap();
                prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
            }
        }
    }
}
