use alloc::vec::Vec;

use crate::math::abs;

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-4;

/// Below this magnitude the comparison is effectively absolute.
const SCALE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter index with the largest error.
    pub worst_index: Option<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub errors: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - n| / max(|a|, |n|, 1e-4)`, and exactly 0 when both agree bit-for-bit.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    if analytic == numeric {
        return 0.0;
    }
    abs(analytic - numeric) / abs(analytic).max(abs(numeric)).max(SCALE_FLOOR)
}

/// Compares the analytic gradient returned by `loss` at `params` against
/// central finite differences with step [`GRADCHECK_STEP`].
pub fn gradient_check<F>(mut loss: F, params: &[f64], tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss(params);
    assert_eq!(analytic.len(), params.len(), "gradient length mismatch");
    let mut work = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + GRADCHECK_STEP;
        let (plus, _) = loss(&work);
        work[i] = orig - GRADCHECK_STEP;
        let (minus, _) = loss(&work);
        work[i] = orig;
        numeric.push((plus - minus) / (2.0 * GRADCHECK_STEP));
    }
    let errors: Vec<f64> = analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).collect();
    let (worst_index, max_rel_error) =
        errors
            .iter()
            .copied()
            .enumerate()
            .fold((None, 0.0), |(wi, m), (i, e)| if e > m || e.is_nan() { (Some(i), e) } else { (wi, m) });
    GradCheckReport {
        passed: max_rel_error <= tolerance,
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        errors,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_is_exact_up_to_rounding() {
        let q = |p: &[f64]| {
            let v = 3.0 * p[0] * p[0] + p[0] * p[1] - 2.0 * p[1] * p[1] + 5.0 * p[1];
            (v, vec![6.0 * p[0] + p[1], p[0] - 4.0 * p[1] + 5.0])
        };
        let r = gradient_check(q, &[0.7, -1.3], 1e-5);
        assert!(r.passed && r.max_rel_error < 1e-5, "{}", r.max_rel_error);
    }

    #[test]
    fn constant_direction_reports_zero() {
        let f = |p: &[f64]| (p[0] * p[0], vec![2.0 * p[0], 0.0]);
        let r = gradient_check(f, &[0.4, 9.0], 1e-5);
        assert_eq!(r.errors[1], 0.0);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let f = |p: &[f64]| (p[0] * p[0], vec![3.0 * p[0]]);
        let r = gradient_check(f, &[1.0], 1e-3);
        assert!(!r.passed);
        assert_eq!(r.worst_index, Some(0));
    }
}
