//! Finite-difference verification of analytic gradients.
//!
//! The loss closure evaluates an `f64` shadow of the computation, so the
//! numerical side is not limited by `f32` rounding. The analytic side may come
//! from either precision.

use crate::error::{invalid, Error, Result};

/// Options for [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Central-difference half step.
    pub step: f64,
    /// Threshold used by [`GradCheckReport::passed`].
    pub tolerance: f64,
    /// Restrict probing to these coordinates; all coordinates when `None`.
    pub indices: Option<Vec<usize>>,
    /// When positive, the error denominator is at least this fraction of the
    /// largest analytic partial.
    pub scale_floor: f64,
    /// Skip coordinates where the loss is not smooth (a ReLU kink at or near
    /// the point): central estimates at the full and quarter step disagree,
    /// or the one-sided slopes differ by more than curvature explains.
    pub skip_kinks: bool,
}

impl GradCheck {
    pub fn new(tolerance: f64) -> Self {
        Self {
            step: 1e-5,
            tolerance,
            indices: None,
            scale_floor: 0.0,
            skip_kinks: false,
        }
    }

    pub fn step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn indices(mut self, indices: Vec<usize>) -> Self {
        self.indices = Some(indices);
        self
    }

    pub fn scale_floor(mut self, fraction: f64) -> Self {
        self.scale_floor = fraction;
        self
    }

    pub fn skip_kinks(mut self, skip: bool) -> Self {
        self.skip_kinks = skip;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
    /// Coordinates left out as non-smooth.
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    floored_error(analytic, numeric, 0.0)
}

fn floored_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8).max(floor)
}

/// Compares `analytic` against central differences of `loss` around `point`.
pub fn grad_check<F>(mut loss: F, point: &[f64], analytic: &[f64], opts: &GradCheck) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if point.len() != analytic.len() {
        return Err(invalid!(
            "{} coordinates but {} analytic partials",
            point.len(),
            analytic.len()
        ));
    }
    if !(opts.step > 0.0) {
        return Err(invalid!("finite-difference step must be positive"));
    }
    let floor = opts.scale_floor * analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if point.iter().chain(analytic).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("grad_check inputs".into()));
    }
    let all: Vec<usize>;
    let indices: &[usize] = match &opts.indices {
        Some(ix) => ix,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut x = point.to_vec();
    let center = loss(&x)?;
    let mut numeric = Vec::with_capacity(indices.len());
    for &i in indices {
        if i >= x.len() {
            return Err(invalid!("probe index {i} out of range"));
        }
        let mut probe = |h: f64| -> Result<(f64, f64)> {
            let orig = x[i];
            x[i] = orig + h;
            let plus = loss(&x)?;
            x[i] = orig - h;
            let minus = loss(&x)?;
            x[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while probing coordinate {i}")));
            }
            Ok((plus, minus))
        };
        let h = opts.step;
        let (plus, minus) = probe(h)?;
        let n = (plus - minus) / (2.0 * h);
        let smooth = !opts.skip_kinks || {
            let (fine_plus, fine_minus) = probe(h / 4.0)?;
            let fine = (fine_plus - fine_minus) / (h / 2.0);
            let (right, left) = ((plus - center) / h, (center - minus) / h);
            floored_error(fine, n, floor) < opts.tolerance && floored_error(right, left, floor) < 100.0 * h
        };
        numeric.push(smooth.then_some(n));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
        skipped: 0,
        tolerance: opts.tolerance,
    };
    for (&i, &n) in indices.iter().zip(&numeric) {
        let Some(n) = n else {
            report.skipped += 1;
            continue;
        };
        let err = floored_error(analytic[i], n, floor);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = n;
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = [0.5, -2.0, 3.25];
        let loss = |x: &[f64]| Ok(x.iter().zip(&w).map(|(a, b)| a * b).sum());
        let r = grad_check(loss, &[1.0, 2.0, -3.0], &w, &GradCheck::new(1e-8)).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn doubled_backward_is_flagged() {
        // f = sum x^3, true grad 3x^2; planted bug reports twice that.
        let point = [0.7, -1.1];
        let wrong: Vec<f64> = point.iter().map(|x| 2.0 * 3.0 * x * x).collect();
        let loss = |x: &[f64]| Ok(x.iter().map(|v| v * v * v).sum());
        let r = grad_check(loss, &point, &wrong, &GradCheck::new(1e-3)).unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-6, "{r:?}");
        assert!(!r.passed());
    }

    #[test]
    fn kink_is_skipped_not_failed() {
        let loss = |x: &[f64]| Ok(x[0].abs() + 2.0 * x[1]);
        let opts = GradCheck::new(1e-6).skip_kinks(true);
        // Kink inside the step, then exactly at the point.
        for x0 in [1e-6, 0.0] {
            let r = grad_check(loss, &[x0, 0.5], &[1.0, 2.0], &opts).unwrap();
            assert_eq!((r.checked, r.skipped), (1, 1));
            assert!(r.passed());
            let strict = grad_check(loss, &[x0, 0.5], &[1.0, 2.0], &GradCheck::new(1e-6)).unwrap();
            assert!(!strict.passed());
        }
    }

    #[test]
    fn scale_floor_absorbs_rounding_at_structural_zeros() {
        let loss = |x: &[f64]| Ok(3.0 * x[0]);
        let analytic = [3.0, 1e-7];
        assert!(!grad_check(loss, &[0.2, 0.4], &analytic, &GradCheck::new(1e-3)).unwrap().passed());
        let floored = GradCheck::new(1e-3).scale_floor(1e-3);
        assert!(grad_check(loss, &[0.2, 0.4], &analytic, &floored).unwrap().passed());
    }

    #[test]
    fn non_finite_rejected() {
        let loss = |_: &[f64]| Ok(f64::NAN);
        assert!(grad_check(loss, &[1.0], &[1.0], &GradCheck::new(1e-3)).is_err());
        let ok = |x: &[f64]| Ok(x[0]);
        assert!(grad_check(ok, &[f64::INFINITY], &[1.0], &GradCheck::new(1e-3)).is_err());
    }
}
