//! Closed-form generalization, approximation and statistical error bounds.
//! All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gumbel_crf::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Feature dimension.
    pub d: usize,
    /// Sparsity.
    pub s: usize,
    /// Samples.
    pub m: usize,
    /// Candidates per sample.
    pub n: usize,
    /// Maximum number of outputs per input.
    pub r: usize,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        check_counts(self.d, self.s, self.m, self.r, self.delta)?;
        if self.n == 0 {
            return Err(Error::Domain("n must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_counts(d: usize, s: usize, m: usize, r: usize, delta: f64) -> Result<()> {
    if d == 0 || s == 0 || m == 0 || r == 0 {
        return Err(Error::Domain("d, s, m and r must be >= 1".into()));
    }
    if s > d {
        return Err(Error::Domain(format!("sparsity s = {s} exceeds d = {d}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must be in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Complexity radical `√(s (ln d + 2 ln(count · r)) / m)`.
fn complexity(d: usize, s: usize, count: usize, r: usize, m: usize) -> f64 {
    let s = s as f64;
    (s * ((d as f64).ln() + 2.0 * (count as f64 * r as f64).ln()) / m as f64).sqrt()
}

/// Uniform-convergence term `ε(d, s, m, r, δ)` for the exact CRF loss.
pub fn gen_bound_eps(d: usize, s: usize, m: usize, r: usize, delta: f64) -> Result<f64> {
    check_counts(d, s, m, r, delta)?;
    let mf = m as f64;
    Ok(2.0 * complexity(d, s, m, r, m) + 3.0 * ((2.0 / delta).ln() / (2.0 * mf)).sqrt())
}

/// Approximation error `ε₁ = ‖w‖₁/√m + 1/(1 + √m)`.
pub fn approx_error_eps1(m: usize, w: &WeightVector) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("m must be >= 1".into()));
    }
    let root = (m as f64).sqrt();
    Ok(w.l1_norm() / root + 1.0 / (1.0 + root))
}

/// The tighter per-case value `‖w‖₁/√m + 1/(1 + n√m)` that the displayed
/// `ε₁` relaxes (diagnostic only).
pub fn approx_error_eps1_with_n(m: usize, n: usize, w: &WeightVector) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::Domain("m and n must be >= 1".into()));
    }
    let root = (m as f64).sqrt();
    Ok(w.l1_norm() / root + 1.0 / (1.0 + n as f64 * root))
}

/// `β ≤ min(‖w‖₁ / ln m, w_min / ln((r − 1)(√m − 1)))`; vacuous for `w = 0`.
/// A non-positive logarithm leaves its side unconstrained.
pub fn beta_condition_holds(beta: f64, w: &WeightVector, m: usize, r: usize) -> bool {
    let Some(w_min) = w.w_min() else {
        return true;
    };
    let cap = |num: f64, log: f64| if log > 0.0 { num / log } else { f64::INFINITY };
    let first = cap(w.l1_norm(), (m as f64).ln());
    let second = cap(w_min, ((r as f64 - 1.0) * ((m as f64).sqrt() - 1.0)).ln());
    beta <= first.min(second)
}

/// `n ≥ m^(0.5 − c)`.
pub fn sample_count_condition_holds(n: usize, m: usize, c: f64) -> bool {
    n as f64 >= (m as f64).powf(0.5 - c)
}

/// Statistical error `ε₂(d, s, n, r, m, δ)`.
pub fn stat_error_eps2(d: usize, s: usize, n: usize, r: usize, m: usize, delta: f64) -> Result<f64> {
    BoundInputs { d, s, m, n, r, delta }.validate()?;
    let mf = m as f64;
    let log_inv_delta = (1.0 / delta).ln();
    let sf = s as f64;
    let union = sf * ((d as f64).ln() + 2.0 * (mf * r as f64).ln()) + log_inv_delta;
    Ok(2.0 * complexity(d, s, n, r, m) + (log_inv_delta / (2.0 * mf)).sqrt() + (union / (2.0 * mf)).sqrt())
}

/// `ε₁ + ε₂`, the slack on top of the randomized training loss.
pub fn total_bound(w: &WeightVector, inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(approx_error_eps1(inputs.m, w)?
        + stat_error_eps2(inputs.d, inputs.s, inputs.n, inputs.r, inputs.m, inputs.delta)?)
}

/// One row of the CLI bound table (`w = 0`, so `ε₁ = 1/(1 + √m)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub d: usize,
    pub s: usize,
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub delta: f64,
    pub eps: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub total: f64,
}

impl BoundRow {
    pub fn compute(inputs: BoundInputs, w: &WeightVector) -> Result<Self> {
        let BoundInputs { d, s, m, n, r, delta } = inputs;
        let eps1 = approx_error_eps1(m, w)?;
        let eps2 = stat_error_eps2(d, s, n, r, m, delta)?;
        Ok(Self { d, s, m, n, r, delta, eps: gen_bound_eps(d, s, m, r, delta)?, eps1, eps2, total: eps1 + eps2 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_value_of_eps() {
        let eps = gen_bound_eps(100, 10, 100, 1365, 0.05).unwrap();
        assert!((eps - 3.769).abs() < 1e-3, "{eps}");
    }

    #[test]
    fn domain_errors() {
        assert!(gen_bound_eps(100, 10, 100, 1365, 2.0).is_err());
        assert!(gen_bound_eps(100, 10, 100, 1365, 0.0).is_err());
        assert!(gen_bound_eps(10, 11, 100, 1365, 0.1).is_err());
        assert!(stat_error_eps2(100, 10, 0, 1365, 100, 0.1).is_err());
        assert!(approx_error_eps1(0, &WeightVector::zeros(1)).is_err());
    }

    #[test]
    fn eps1_examples() {
        let zero = WeightVector::zeros(4);
        assert!((approx_error_eps1(100, &zero).unwrap() - 1.0 / 11.0).abs() < 1e-15);
        let w = WeightVector::new(vec![1.0, -1.0, 0.0]);
        assert!((approx_error_eps1(100, &w).unwrap() - (0.2 + 1.0 / 11.0)).abs() < 1e-15);
        assert!(approx_error_eps1(1 << 40, &w).unwrap() < 1e-5);
        assert!(approx_error_eps1_with_n(100, 10, &w).unwrap() < approx_error_eps1(100, &w).unwrap());
    }

    #[test]
    fn eps2_first_term_matches_eps_when_n_equals_m() {
        let (d, s, m, r) = (100, 10, 100, 1365);
        let eps = gen_bound_eps(d, s, m, r, 0.05).unwrap();
        let eps_first = eps - 3.0 * ((2.0f64 / 0.05).ln() / 200.0).sqrt();
        let eps2 = stat_error_eps2(d, s, m, r, m, 0.05).unwrap();
        let inv = (1.0f64 / 0.05).ln();
        let tail = (inv / 200.0).sqrt()
            + ((10.0 * (100f64.ln() + 2.0 * (100.0f64 * 1365.0).ln()) + inv) / 200.0).sqrt();
        assert!(((eps2 - tail) - eps_first).abs() < 1e-12);
    }

    #[test]
    fn total_is_sum_and_collapses_at_zero_weights() {
        let inputs = BoundInputs { d: 100, s: 10, m: 100, n: 10, r: 1365, delta: 0.05 };
        let w = WeightVector::new(vec![0.5; 4]);
        let total = total_bound(&w, &inputs).unwrap();
        let e1 = approx_error_eps1(100, &w).unwrap();
        let e2 = stat_error_eps2(100, 10, 10, 1365, 100, 0.05).unwrap();
        assert_eq!(total, e1 + e2);
        let t0 = total_bound(&WeightVector::zeros(4), &inputs).unwrap();
        assert!((t0 - (1.0 / 11.0 + e2)).abs() < 1e-15);
    }

    #[test]
    fn side_conditions() {
        assert!(sample_count_condition_holds(10, 100, 0.0));
        assert!(!sample_count_condition_holds(9, 100, 0.0));
        assert!(sample_count_condition_holds(1, 100, 0.5));
        assert!(beta_condition_holds(123.0, &WeightVector::zeros(3), 100, 1365));
        let w = WeightVector::new(vec![2.0, 0.0, 1.0]);
        // min(3 / ln 100, 1 / ln(1364 * 9))
        let cap = (3.0 / 100f64.ln()).min(1.0 / (1364.0f64 * 9.0).ln());
        assert!(beta_condition_holds(cap, &w, 100, 1365));
        assert!(!beta_condition_holds(cap * 1.01, &w, 100, 1365));
    }
}
