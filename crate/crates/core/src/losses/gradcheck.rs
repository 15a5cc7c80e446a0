//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::PolicyParams;

/// Default number of coordinates probed per check.
pub const DEFAULT_COORDINATES: usize = 200;
/// Denominator floor so near-zero gradients are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub coordinates_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` with central differences of `value` at `params` over
/// `coordinates` randomly chosen entries (all entries if there are fewer).
pub fn grad_check<F>(
    params: &PolicyParams,
    analytic: &[f64],
    epsilon: f64,
    coordinates: usize,
    seed: u64,
    mut value: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&PolicyParams) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    if analytic.len() != params.len() {
        return Err(Error::InvalidInput("gradient length differs from parameter count".into()));
    }
    let n = params.len();
    let mut idx: Vec<usize> = if coordinates >= n {
        (0..n).collect()
    } else {
        sample(&mut ChaCha8Rng::seed_from_u64(seed), n, coordinates).into_vec()
    };
    idx.sort_unstable();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_coordinate: 0,
        coordinates_checked: idx.len(),
    };
    for &i in &idx {
        let orig = probe.theta[i];
        probe.theta[i] = orig + epsilon;
        let up = value(&probe)?;
        probe.theta[i] = orig - epsilon;
        let down = value(&probe)?;
        probe.theta[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error || err.is_nan() {
            report.max_relative_error = err;
            report.worst_coordinate = i;
        }
    }
    Ok(report)
}
