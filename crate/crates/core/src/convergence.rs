//! Convergence of normalized returns toward the standard normal, quantified
//! by the moment distance `D = sqrt(mean_k (M_data(k) - M_gauss(k))^2)` and
//! its difference quotient `v` across consecutive horizons.

use serde::{Deserialize, Serialize};

use crate::density::{gaussian_moments, sample_moments, MomentSet};
use crate::error::{Error, Result};
use crate::returns::ReturnSeries;

/// Moment distance to the standard normal per horizon, plus the convergence
/// speed between consecutive horizons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    /// Horizons in minutes, ascending.
    pub dts: Vec<f64>,
    pub distances: Vec<f64>,
    /// `(D_{i+1} - D_i) / (dt_{i+1} - dt_i)`, one entry per consecutive pair.
    pub speeds: Vec<f64>,
    /// Interval midpoints the speeds are reported at.
    pub speed_midpoints: Vec<f64>,
}

/// RMS difference between two moment sets over the shared order grid.
pub fn moment_distance(data: &MomentSet, reference: &MomentSet) -> Result<f64> {
    if data.orders != reference.orders {
        return Err(Error::InvalidArgument(
            "moment sets use different order grids".into(),
        ));
    }
    if data.mu.iter().chain(&reference.mu).any(|m| !m.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite moment in distance computation".into(),
        ));
    }
    let n = data.mu.len() as f64;
    let sum: f64 = data
        .mu
        .iter()
        .zip(&reference.mu)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / n).sqrt())
}

/// Forward difference quotient of a distance curve, reported at interval
/// midpoints.
pub fn convergence_speed(curve: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument(
            "convergence speed needs >= 2 points".into(),
        ));
    }
    for w in curve.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidArgument(format!(
                "dt values not strictly increasing at {}",
                w[1].0
            )));
        }
    }
    Ok(curve
        .windows(2)
        .map(|w| {
            let (dt0, d0) = w[0];
            let (dt1, d1) = w[1];
            (0.5 * (dt0 + dt1), (d1 - d0) / (dt1 - dt0))
        })
        .collect())
}

/// Compose moments, the Gaussian reference, distances, and speeds over a set
/// of normalized return series.
pub fn convergence_curve<'a, I>(series_by_dt: I, orders: &[f64]) -> Result<ConvergenceCurve>
where
    I: IntoIterator<Item = &'a ReturnSeries>,
{
    let reference = gaussian_moments(orders)?;
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for r in series_by_dt {
        let m = sample_moments(r, orders)?;
        rows.push((f64::from(r.dt_minutes), moment_distance(&m, &reference)?));
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no series given".into()));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite dt"));

    let (speed_midpoints, speeds) = if rows.len() >= 2 {
        let sp = convergence_speed(&rows)?;
        (
            sp.iter().map(|s| s.0).collect(),
            sp.iter().map(|s| s.1).collect(),
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(ConvergenceCurve {
        dts: rows.iter().map(|r| r.0).collect(),
        distances: rows.iter().map(|r| r.1).collect(),
        speeds,
        speed_midpoints,
    })
}
