//! Central-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use super::params::{Grads, ParamStore};
use crate::error::{CoreError, Result};

/// Minimum number of coordinates compared in one check.
pub const MIN_COORDINATES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub groups_checked: usize,
    /// `(parameter, index, analytic, numeric)` of the largest error.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compare `analytic` against central differences of `loss` on a random
/// subset of coordinates drawn from every parameter tensor. Half of each
/// tensor's sample comes from coordinates with a non-zero analytic
/// gradient, when there are any.
pub fn check_gradients<R, F>(
    params: &ParamStore,
    analytic: &Grads,
    loss: F,
    epsilon: f64,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    R: Rng + ?Sized,
    F: Fn(&ParamStore) -> f64,
{
    if params.is_empty() {
        return Err(CoreError::InvalidArgument("no parameters to check".into()));
    }
    let per_group = MIN_COORDINATES.div_ceil(params.len()).max(2);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        groups_checked: 0,
        worst: None,
    };
    for p in 0..params.len() {
        let size = params.by_index(p).value.len();
        let grad = &analytic.0[p].data;
        let coords: Vec<usize> = if size <= per_group {
            (0..size).collect()
        } else {
            let live: Vec<usize> = (0..size).filter(|&i| grad[i] != 0.0).collect();
            let n_live = (per_group / 2).min(live.len());
            let mut picked: Vec<usize> = sample(rng, live.len(), n_live).into_iter().map(|i| live[i]).collect();
            picked.extend(sample(rng, size, per_group - n_live));
            picked
        };
        if coords.is_empty() {
            return Err(CoreError::InvalidArgument(format!(
                "parameter `{}` has no coordinates to check",
                params.by_index(p).name
            )));
        }
        for i in coords {
            let orig = work.by_index(p).value.data[i];
            work.by_index_mut(p).value.data[i] = orig + epsilon;
            let up = loss(&work);
            work.by_index_mut(p).value.data[i] = orig - epsilon;
            let down = loss(&work);
            work.by_index_mut(p).value.data[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let err = relative_error(grad[i], numeric);
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.by_index(p).name.clone(), i, grad[i], numeric));
            }
            report.checked += 1;
        }
        report.groups_checked += 1;
    }
    if report.groups_checked != params.len() {
        return Err(CoreError::InvalidArgument("gradient check did not cover every parameter".into()));
    }
    Ok(report)
}
