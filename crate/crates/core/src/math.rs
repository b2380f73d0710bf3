//! Small numeric helpers shared across the crate. Every exponential in the
//! crate funnels through these so that nothing overflows: probabilities are
//! built in the log domain and collapsed with [`log_sum_exp`], and logistic
//! terms go through [`sigmoid`] / [`log1p_exp`].

/// Numerically stable logistic function 1 / (1 + e^{-t}).
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^t).
#[inline]
pub fn log1p_exp(t: f64) -> f64 {
    if t <= 0.0 {
        t.exp().ln_1p()
    } else {
        t + (-t).exp().ln_1p()
    }
}

/// log(Σ exp(v_i)) without overflow. Entries equal to -∞ are allowed and
/// contribute nothing; the result is -∞ only if every entry is -∞.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// ln C(n, k) via the log-gamma function.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    assert!(k <= n, "ln_binomial: k = {k} > n = {n}");
    if k == 0 || k == n {
        return 0.0;
    }
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Total-variation distance ½‖p − q‖₁ between two probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "tv_distance: length mismatch");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Ordinary least-squares slope of y against x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_matches_naive_in_safe_range() {
        for i in -40..=40 {
            let t = i as f64 * 0.5;
            let naive = 1.0 / (1.0 + (-t).exp());
            assert!((sigmoid(t) - naive).abs() < 1e-15, "t = {t}");
        }
    }

    #[test]
    fn sigmoid_extremes_do_not_overflow() {
        assert_eq!(sigmoid(1e4), 1.0);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn log1p_exp_matches_naive() {
        for i in -30..=30 {
            let t = i as f64;
            let naive = (1.0 + t.exp()).ln();
            assert!((log1p_exp(t) - naive).abs() < 1e-12, "t = {t}");
        }
        // Far positive: ln(1+e^t) ≈ t.
        assert!((log1p_exp(900.0) - 900.0).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_basic() {
        let v = [0.0_f64, 0.0];
        assert!((log_sum_exp(&v) - 2.0_f64.ln()).abs() < 1e-15);
        let w = [f64::NEG_INFINITY, 3.0];
        assert!((log_sum_exp(&w) - 3.0).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 4]), f64::NEG_INFINITY);
        // Large offsets cancel.
        let z = [1000.0, 1000.0 + (2.0_f64).ln()];
        assert!((log_sum_exp(&z) - (1000.0 + 3.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn ln_binomial_small_values_exact() {
        assert!((ln_binomial(6, 3) - 20.0_f64.ln()).abs() < 1e-12);
        assert!((ln_binomial(10, 0) - 0.0).abs() < 1e-12);
        assert!((ln_binomial(10, 10) - 0.0).abs() < 1e-12);
        assert!((ln_binomial(52, 5) - 2_598_960.0_f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn tv_distance_basic() {
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }

    #[test]
    fn ols_slope_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        assert!((ols_slope(&x, &y) + 2.0).abs() < 1e-12);
    }
}
