//! Log returns at arbitrary horizons, normalization, self-similar rescaling,
//! and distribution-shape significance tests.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::market_data::PriceSeries;
use crate::stats;

/// Provenance of the values in a [`ReturnSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    Raw,
    Normalized,
    Rescaled,
}

/// Log returns at a fixed horizon on the stitched minute axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    /// Horizon in stitched minutes.
    pub dt_minutes: u32,
    pub values: Vec<f64>,
    pub kind: ReturnKind,
    /// Full-sample mean of `values`.
    pub mean_t: f64,
    /// Population standard deviation of `values` — the volatility V.
    pub volatility: f64,
    /// Minutes between consecutive window starts. Overlapping windows share
    /// `dt_minutes / stride` increments, which inflates counting errors by
    /// that factor; independent samples have `stride = dt_minutes`.
    pub window_stride_minutes: u32,
}

impl ReturnSeries {
    /// Wrap precomputed values (synthetic data, tests); mean and volatility
    /// are cached from the values themselves, and the values are treated as
    /// independent draws.
    pub fn from_values(dt_minutes: u32, kind: ReturnKind, values: Vec<f64>) -> Self {
        let mean_t = stats::mean(&values);
        let volatility = stats::pop_std(&values);
        Self {
            dt_minutes,
            values,
            kind,
            mean_t,
            volatility,
            window_stride_minutes: dt_minutes,
        }
    }

    /// Windows per independent block: the error inflation factor for
    /// counting statistics on overlapping windows.
    pub fn overlap_factor(&self) -> f64 {
        f64::from(self.dt_minutes) / f64::from(self.window_stride_minutes.max(1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Windowing choices for [`log_returns_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnOptions {
    /// Compute a return at every tick (true) or on a dt-spaced grid (false).
    pub overlapping: bool,
    /// Keep windows that cross a session stitch (lunch, overnight, weekend).
    pub include_stitch_spanning: bool,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        Self {
            overlapping: true,
            include_stitch_spanning: true,
        }
    }
}

/// `values[i] = ln(price[i+dt] / price[i])` at every tick of the stitched axis.
///
/// Returns are differences of cached log prices, so horizon additivity
/// `R_{a+b}(t) = R_a(t-b) + R_b(t)` telescopes exactly.
pub fn log_returns(s: &PriceSeries, dt: usize) -> Result<ReturnSeries> {
    log_returns_with(s, dt, ReturnOptions::default())
}

/// [`log_returns`] with explicit windowing options.
pub fn log_returns_with(s: &PriceSeries, dt: usize, opts: ReturnOptions) -> Result<ReturnSeries> {
    if dt == 0 {
        return Err(Error::InvalidArgument("horizon dt must be >= 1".into()));
    }
    if dt >= s.len() {
        return Err(Error::InvalidArgument(format!(
            "horizon dt {dt} >= series length {}",
            s.len()
        )));
    }
    let dt_minutes = u32::try_from(dt)
        .ok()
        .and_then(|d| d.checked_mul(s.tick_minutes()))
        .ok_or_else(|| Error::InvalidArgument(format!("horizon dt {dt} overflows minutes")))?;

    let records = s.records();
    let ln_prices: Vec<f64> = records.iter().map(|r| r.price.ln()).collect();
    let span = chrono::Duration::minutes(i64::from(dt_minutes));

    let step = if opts.overlapping { 1 } else { dt };
    let mut values = Vec::with_capacity((s.len() - dt) / step + 1);
    let mut i = 0;
    while i + dt < s.len() {
        let keep = opts.include_stitch_spanning
            || records[i + dt].timestamp - records[i].timestamp == span;
        if keep {
            values.push(ln_prices[i + dt] - ln_prices[i]);
        }
        i += step;
    }
    if values.is_empty() {
        return Err(Error::DegenerateInput(
            "no return windows left after stitch filtering".into(),
        ));
    }
    let mut r = ReturnSeries::from_values(dt_minutes, ReturnKind::Raw, values);
    r.window_stride_minutes = u32::try_from(step)
        .unwrap_or(u32::MAX)
        .saturating_mul(s.tick_minutes());
    Ok(r)
}

/// Center by the full-sample mean and divide by the volatility V.
///
/// Accepts raw input (the normal case) and normalized input, on which it is
/// the identity up to rounding.
pub fn normalize(r: &ReturnSeries) -> Result<ReturnSeries> {
    if r.kind == ReturnKind::Rescaled {
        return Err(Error::InvalidArgument(
            "rescaled returns cannot be normalized".into(),
        ));
    }
    if r.volatility <= 0.0 || !r.volatility.is_finite() {
        return Err(Error::DegenerateInput(
            "zero volatility; constant return series".into(),
        ));
    }
    let values = r
        .values
        .iter()
        .map(|v| (v - r.mean_t) / r.volatility)
        .collect();
    let mut out = ReturnSeries::from_values(r.dt_minutes, ReturnKind::Normalized, values);
    out.window_stride_minutes = r.window_stride_minutes;
    Ok(out)
}

/// Self-similar rescaling: multiply every return by `dt^{-1/alpha}`.
///
/// `dt` is the dimensionless minute count and must match the series horizon.
pub fn rescale(r: &ReturnSeries, alpha: f64, dt: u32) -> Result<ReturnSeries> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (0, 2]"
        )));
    }
    if r.kind != ReturnKind::Raw {
        return Err(Error::InvalidArgument(format!(
            "rescale expects raw returns, got {:?}",
            r.kind
        )));
    }
    if dt != r.dt_minutes {
        return Err(Error::InvalidArgument(format!(
            "dt {dt} does not match series horizon {}",
            r.dt_minutes
        )));
    }
    let factor = f64::from(dt).powf(-1.0 / alpha);
    let values = r.values.iter().map(|v| v * factor).collect();
    let mut out = ReturnSeries::from_values(r.dt_minutes, ReturnKind::Rescaled, values);
    out.window_stride_minutes = r.window_stride_minutes;
    Ok(out)
}

/// Outcome of a skewness or kurtosis significance test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTestResult {
    /// Approximately standard-normal test statistic under the null.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub sample_skewness: f64,
    pub sample_excess_kurtosis: f64,
}

fn sample_shape(values: &[f64]) -> (f64, f64) {
    let m = stats::mean(values);
    let m2 = stats::central_moment(values, m, 2);
    let m3 = stats::central_moment(values, m, 3);
    let m4 = stats::central_moment(values, m, 4);
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// D'Agostino (1970) transformed-skewness test. Needs n >= 8.
pub fn skewness_test(r: &ReturnSeries) -> Result<ShapeTestResult> {
    let n = r.values.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "skewness test needs n >= 8, got {n}"
        )));
    }
    let (g1, g2) = sample_shape(&r.values);
    let nf = n as f64;

    let y = g1 * (((nf + 1.0) * (nf + 3.0)) / (6.0 * (nf - 2.0))).sqrt();
    let beta2 = 3.0 * (nf * nf + 27.0 * nf - 70.0) * (nf + 1.0) * (nf + 3.0)
        / ((nf - 2.0) * (nf + 5.0) * (nf + 7.0) * (nf + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let a = (2.0 / (w2 - 1.0)).sqrt();
    let z = delta * (y / a).asinh();

    Ok(ShapeTestResult {
        statistic: z,
        p_value: two_sided_p(z),
        sample_skewness: g1,
        sample_excess_kurtosis: g2,
    })
}

/// Anscombe-Glynn (1983) excess-kurtosis test. Needs n >= 20.
pub fn kurtosis_test(r: &ReturnSeries) -> Result<ShapeTestResult> {
    let n = r.values.len();
    if n < 20 {
        return Err(Error::InvalidArgument(format!(
            "kurtosis test needs n >= 20, got {n}"
        )));
    }
    let (g1, g2) = sample_shape(&r.values);
    let nf = n as f64;

    let b2 = g2 + 3.0;
    let e_b2 = 3.0 * (nf - 1.0) / (nf + 1.0);
    let var_b2 =
        24.0 * nf * (nf - 2.0) * (nf - 3.0) / ((nf + 1.0) * (nf + 1.0) * (nf + 3.0) * (nf + 5.0));
    let x = (b2 - e_b2) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (nf * nf - 5.0 * nf + 2.0) / ((nf + 7.0) * (nf + 9.0))
        * (6.0 * (nf + 3.0) * (nf + 5.0) / (nf * (nf - 2.0) * (nf - 3.0))).sqrt();
    let a = 6.0
        + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());

    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let z = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    Ok(ShapeTestResult {
        statistic: z,
        p_value: two_sided_p(z),
        sample_skewness: g1,
        sample_excess_kurtosis: g2,
    })
}
