//! Probabilistic zero testing by sampling on a chart.

use super::chart::{Chart, ChartError};
use super::expr::Expr;
use super::normalize::normalize;
use crate::DEFAULT_SEED;

/// How many points to draw, with what relative tolerance and seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampling {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            trials: 64,
            tol: 1e-9,
            seed: DEFAULT_SEED,
        }
    }
}

impl Sampling {
    pub fn with_trials(self, trials: usize) -> Self {
        Sampling { trials, ..self }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Sampling { tol, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Sampling { seed, ..self }
    }
}

/// `|a - b| <= tol * (1 + max(|a|, |b|))`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// True iff `a` and `b` agree at every sampled point of `chart`.
///
/// Structurally equal normal forms short-circuit to true without sampling.
pub fn probably_equal(
    a: &Expr,
    b: &Expr,
    chart: &Chart,
    sampling: &Sampling,
) -> Result<bool, ChartError> {
    let na = chart.simplify(a)?;
    let nb = chart.simplify(b)?;
    if na == nb {
        return Ok(true);
    }
    let points = chart.sample(sampling.trials, sampling.seed)?;
    for p in &points {
        let env = chart.env_at(p);
        let va = na.eval(&env)?;
        let vb = nb.eval(&env)?;
        if !close(va, vb, sampling.tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Shorthand for `probably_equal(e, 0)`.
pub fn probably_zero(e: &Expr, chart: &Chart, sampling: &Sampling) -> Result<bool, ChartError> {
    let n = normalize(e);
    if n.is_zero() {
        return Ok(true);
    }
    probably_equal(&n, &Expr::zero(), chart, sampling)
}

/// Largest absolute value of `e` over the sample set.
pub fn max_abs(e: &Expr, chart: &Chart, points: &[Vec<f64>]) -> Result<f64, ChartError> {
    let n = chart.simplify(e)?;
    if n.is_zero() {
        return Ok(0.0);
    }
    let mut m: f64 = 0.0;
    for p in points {
        let v = chart.eval(&n, p)?;
        if v.is_nan() {
            return Ok(f64::NAN);
        }
        m = m.max(v.abs());
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> Chart {
        Chart::new("R2", &[("x", -1.0, 1.0), ("y", -1.0, 1.0)]).unwrap()
    }

    #[test]
    fn exp_of_sum() {
        let x = Expr::sym("x");
        let y = Expr::sym("y");
        let s = Sampling::default();
        let lhs = (x.clone() + y.clone()).exp();
        let rhs = x.clone().exp() * y.exp();
        assert!(probably_equal(&lhs, &rhs, &plane(), &s).unwrap());
        assert!(!probably_equal(&x, &(x.clone() + Expr::one()), &plane(), &s).unwrap());
    }

    #[test]
    fn beyond_normal_form() {
        // tan is not rewritten to sin/cos by normalization.
        let x = Expr::sym("x");
        let lhs = x.clone().tan() * x.clone().cos();
        let rhs = x.sin();
        assert_ne!(normalize(&lhs), normalize(&rhs));
        assert!(probably_equal(&lhs, &rhs, &plane(), &Sampling::default()).unwrap());
    }
}
