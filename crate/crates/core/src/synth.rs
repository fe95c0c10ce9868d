//! Seed-deterministic random generators used as ground truth for the estimators.
//!
//! The stable family realizes the symmetric law with characteristic function
//! `exp(-gamma * dt * |q|^alpha)` through the Chambers-Mallows-Stuck construction,
//! so sampled variates and the quadrature PDF in [`crate::stable`] describe the
//! same distribution and can be cross-checked against each other.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal, Pareto, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{PriceRecord, PriceSeries, TradingCalendar};

/// Name of the pseudo-random source, recorded in sample metadata.
pub const RNG_ALGORITHM: &str = "chacha12";

/// Distribution family plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian {
        mean: f64,
        std: f64,
    },
    /// Symmetric alpha-stable with characteristic function `exp(-gamma*dt*|q|^alpha)`.
    Stable {
        alpha: f64,
        gamma: f64,
        dt: f64,
    },
    StudentT {
        nu: f64,
        scale: f64,
        location: f64,
    },
    Exponential {
        rate: f64,
    },
    Pareto {
        xmin: f64,
        exponent: f64,
    },
    Laplace {
        location: f64,
        scale: f64,
    },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            Family::Gaussian { std, .. } if std <= 0.0 => bad(format!("gaussian std {std} <= 0")),
            Family::Stable { alpha, gamma, dt } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return bad(format!("stable alpha {alpha} outside (0, 2]"));
                }
                if gamma <= 0.0 || dt <= 0.0 {
                    return bad(format!("stable gamma {gamma} / dt {dt} must be positive"));
                }
                Ok(())
            }
            Family::StudentT { nu, scale, .. } if nu <= 0.0 || scale <= 0.0 => bad(format!(
                "student_t nu {nu} / scale {scale} must be positive"
            )),
            Family::Exponential { rate } if rate <= 0.0 => {
                bad(format!("exponential rate {rate} <= 0"))
            }
            Family::Pareto { xmin, exponent } if xmin <= 0.0 || exponent <= 0.0 => bad(format!(
                "pareto xmin {xmin} / exponent {exponent} must be positive"
            )),
            Family::Laplace { scale, .. } if scale <= 0.0 => {
                bad(format!("laplace scale {scale} <= 0"))
            }
            _ => Ok(()),
        }
    }

    /// Short label for export headers, e.g. `stable(alpha=1.5, gamma=1, dt=1)`.
    pub fn label(&self) -> String {
        match self {
            Family::Gaussian { mean, std } => format!("gaussian(mean={mean}, std={std})"),
            Family::Stable { alpha, gamma, dt } => {
                format!("stable(alpha={alpha}, gamma={gamma}, dt={dt})")
            }
            Family::StudentT {
                nu,
                scale,
                location,
            } => format!("student_t(nu={nu}, scale={scale}, location={location})"),
            Family::Exponential { rate } => format!("exponential(rate={rate})"),
            Family::Pareto { xmin, exponent } => {
                format!("pareto(xmin={xmin}, exponent={exponent})")
            }
            Family::Laplace { location, scale } => {
                format!("laplace(location={location}, scale={scale})")
            }
        }
    }
}

/// A fully specified, reproducible sample request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub seed: u64,
    pub n: usize,
}

impl GeneratorSpec {
    pub fn new(family: Family, seed: u64, n: usize) -> Self {
        Self { family, seed, n }
    }
}

/// Draw `spec.n` variates. Identical spec gives an identical sequence,
/// independent of platform and thread count.
pub fn sample(spec: &GeneratorSpec) -> Result<Vec<f64>> {
    spec.family.validate()?;
    if spec.n == 0 {
        return Err(Error::InvalidArgument("sample size must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n);
    match spec.family {
        Family::Gaussian { mean, std } => {
            let d = Normal::new(mean, std).expect("validated");
            out.extend((0..spec.n).map(|_| d.sample(&mut rng)));
        }
        Family::Stable { alpha, gamma, dt } => {
            let scale = (gamma * dt).powf(1.0 / alpha);
            out.extend((0..spec.n).map(|_| scale * stable_standard(alpha, &mut rng)));
        }
        Family::StudentT {
            nu,
            scale,
            location,
        } => {
            let d = StudentT::new(nu).expect("validated");
            out.extend((0..spec.n).map(|_| location + scale * d.sample(&mut rng)));
        }
        Family::Exponential { rate } => {
            let d = Exp::new(rate).expect("validated");
            out.extend((0..spec.n).map(|_| d.sample(&mut rng)));
        }
        Family::Pareto { xmin, exponent } => {
            let d = Pareto::new(xmin, exponent).expect("validated");
            out.extend((0..spec.n).map(|_| d.sample(&mut rng)));
        }
        Family::Laplace { location, scale } => {
            out.extend((0..spec.n).map(|_| {
                let u: f64 = rng.gen::<f64>() - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }));
        }
    }
    Ok(out)
}

/// One standard symmetric stable variate (unit scale, characteristic function
/// `exp(-|q|^alpha)`) via the Chambers-Mallows-Stuck formula with beta = 0.
///
/// `X = sin(alpha V) / cos(V)^{1/alpha} * (cos(V - alpha V)/W)^{(1-alpha)/alpha}`
/// with `V ~ U(-pi/2, pi/2)` and `W ~ Exp(1)`. At alpha = 1 the exponent
/// vanishes and the formula degenerates to `tan(V)`, the standard Cauchy.
fn stable_standard<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    // Keep V strictly inside (-pi/2, pi/2) and W strictly positive.
    let u: f64 = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
    let e: f64 = rng.gen::<f64>().clamp(1e-16, 1.0 - 1e-16);
    let v = PI * (u - 0.5);
    let w = -(1.0 - e).ln();
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    let av = alpha * v;
    let base = av.sin() / v.cos().powf(1.0 / alpha);
    base * ((v - av).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Exponentiate cumulative returns into a price path on the stitched minute axis
/// of `cal`, starting at the first in-session minute on or after `start`.
///
/// `S(t) = s0 * exp(sum of returns up to t)`; the output has `returns.len() + 1`
/// records and `log_returns(price_path(x), 1)` recovers `x` up to rounding in
/// the exp/ln round trip.
pub fn price_path_on(
    returns: &[f64],
    s0: f64,
    cal: &TradingCalendar,
    start: chrono::NaiveDate,
) -> Result<PriceSeries> {
    if s0 <= 0.0 {
        return Err(Error::InvalidArgument(format!("s0 {s0} must be positive")));
    }
    // Guard against exp overflow/underflow: |ln s0 + cumsum| must stay well
    // inside f64's exponent range.
    const LOG_LIMIT: f64 = 700.0;
    let ln_s0 = s0.ln();
    let mut cum = 0.0f64;
    let mut records = Vec::with_capacity(returns.len() + 1);
    let mut minutes = cal.minutes_from(start);
    let mut next_ts = || {
        minutes
            .next()
            .ok_or_else(|| Error::InvalidArgument("calendar has no sessions".into()))
    };
    records.push(PriceRecord::new(next_ts()?, s0)?);
    for (i, r) in returns.iter().enumerate() {
        cum += r;
        if !cum.is_finite() || (ln_s0 + cum).abs() > LOG_LIMIT {
            return Err(Error::Overflow(format!(
                "cumulative log price {:.3} at step {i} leaves the representable range",
                ln_s0 + cum
            )));
        }
        records.push(PriceRecord::new(next_ts()?, s0 * cum.exp())?);
    }
    Ok(PriceSeries::from_stitched(records, 1))
}

/// [`price_path_on`] with the default SSE/SZSE calendar starting 2005-01-04.
pub fn price_path(returns: &[f64], s0: f64) -> Result<PriceSeries> {
    let cal = TradingCalendar::sse_default();
    let start = chrono::NaiveDate::from_ymd_opt(2005, 1, 4).expect("valid date");
    price_path_on(returns, s0, &cal, start)
}

/// Non-overlapping aggregation: horizon-`dt` returns are sums of `dt`
/// consecutive base returns, in fixed left-to-right order.
pub fn aggregate_ladder(base: &[f64], dts: &[u32]) -> Result<BTreeMap<u32, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for &dt in dts {
        if dt == 0 {
            return Err(Error::InvalidArgument("ladder dt must be >= 1".into()));
        }
        if dt as usize > base.len() {
            return Err(Error::InvalidArgument(format!(
                "ladder dt {dt} exceeds base length {}",
                base.len()
            )));
        }
        let sums: Vec<f64> = base
            .chunks_exact(dt as usize)
            .map(|c| c.iter().sum())
            .collect();
        out.insert(dt, sums);
    }
    Ok(out)
}

/// A fresh deterministic stream derived from `seed`; `stream` selects an
/// independent substream so parallel consumers stay reproducible.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
