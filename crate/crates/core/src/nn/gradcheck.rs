/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error seen in each parameter block.
    pub block_max_rel_err: Vec<f64>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Denominator floor for relative errors; below it the comparison is
/// effectively absolute.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Checks every coordinate of `params` with central differences of step `h`.
///
/// `f` maps a full set of parameter blocks to `(loss, gradient blocks)`; the
/// gradient is taken once at `params` and the loss at each perturbed point.
pub fn finite_diff_check<F>(mut f: F, params: &[Vec<f64>], h: f64, tol: f64) -> GradCheckReport
where
    F: FnMut(&[Vec<f64>]) -> (f64, Vec<Vec<f64>>),
{
    assert!((1e-7..=1e-3).contains(&h), "step {h} outside [1e-7, 1e-3]");
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient block count");
    let mut theta = params.to_vec();
    let mut block_max_rel_err = Vec::with_capacity(params.len());
    for b in 0..params.len() {
        assert_eq!(analytic[b].len(), params[b].len(), "gradient block {b} length");
        let mut worst = 0.0_f64;
        for i in 0..params[b].len() {
            let orig = theta[b][i];
            theta[b][i] = orig + h;
            let plus = f(&theta).0;
            theta[b][i] = orig - h;
            let minus = f(&theta).0;
            theta[b][i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[b][i], numeric));
        }
        block_max_rel_err.push(worst);
    }
    let max_rel_err = block_max_rel_err.iter().copied().fold(0.0, f64::max);
    GradCheckReport {
        block_max_rel_err,
        max_rel_err,
        tol,
        passed: max_rel_err < tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let theta = vec![vec![1.0, -2.0, 0.5], vec![3.0]];
        let report = finite_diff_check(
            |p: &[Vec<f64>]| {
                let loss = p.iter().flatten().map(|x| 0.5 * x * x).sum();
                (loss, p.to_vec())
            },
            &theta,
            1e-4,
            1e-9,
        );
        assert!(report.max_rel_err < 1e-9, "{report:?}");
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let theta = vec![vec![0.3, 0.4]];
        let report = finite_diff_check(|_| (7.0, vec![vec![0.0, 0.0]]), &theta, 1e-5, 1e-12);
        assert_eq!(report.max_rel_err, 0.0);
        assert!(report.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let theta = vec![vec![1.0]];
        let report = finite_diff_check(|p| (p[0][0].powi(3), vec![vec![1.0]]), &theta, 1e-5, 1e-4);
        assert!(!report.passed);
    }
}
