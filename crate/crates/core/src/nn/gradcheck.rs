//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use super::layers::Trainable;
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Denominator floor so that near-zero partials are judged on absolute error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `point`.
pub fn grad_check(
    name: &str,
    point: &[f64],
    mut f: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    tolerance: f64,
) -> Result<GradCheckReport> {
    if point.len() != analytic.len() {
        return Err(Error::shape("grad_check", point.len(), analytic.len()));
    }
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        name: name.to_string(),
        checked: point.len(),
        max_rel_error: 0.0,
        worst_index: 0,
        tolerance,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + DEFAULT_STEP;
        let up = f(&x);
        x[i] = orig - DEFAULT_STEP;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * DEFAULT_STEP);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFinite(format!("{name}[{i}]")));
        }
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}

/// Gradient check over every parameter of a model.
///
/// `eval(model, backward)` must return the loss; when `backward` is true it
/// must also accumulate parameter gradients.
pub fn grad_check_params<M: Trainable>(
    name: &str,
    model: &mut M,
    mut eval: impl FnMut(&mut M, bool) -> Result<f64>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    model.zero_grad();
    eval(model, true)?;
    let analytic = model.flat_grads();
    let point = model.flat_params();
    model.zero_grad();

    let mut failure = None;
    let report = grad_check(
        name,
        &point,
        |x| {
            set_flat_params(model, x);
            match eval(model, false) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &analytic,
        tolerance,
    );
    set_flat_params(model, &point);
    if let Some(e) = failure {
        return Err(e);
    }
    report
}

pub fn set_flat_params<M: Trainable + ?Sized>(model: &mut M, flat: &[f64]) {
    let mut offset = 0;
    for p in model.params_mut() {
        let n = p.value.len();
        p.value.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_corrupted_gradient() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let good = grad_check("quad", &[1.5, 2.0], f, &[3.0, 3.0], 1e-4).unwrap();
        assert!(good.passed(), "{good:?}");
        let bad = grad_check("quad", &[1.5, 2.0], f, &[3.3, 3.0], 1e-4).unwrap();
        assert!(!bad.passed());
        assert_eq!(bad.worst_index, 0);
    }

    #[test]
    fn non_finite_is_an_error() {
        let r = grad_check("nan", &[1.0], |_| f64::NAN, &[0.0], 1e-4);
        assert!(r.is_err());
    }
}
