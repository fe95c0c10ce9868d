//! Numerics for the symmetric Lévy alpha-stable law with characteristic
//! function `exp(-gamma * dt * |q|^alpha)`.
//!
//! The density is the cosine transform
//! `P(R, dt) = (1/pi) * integral_0^inf exp(-gamma dt q^alpha) cos(q R) dq`,
//! evaluated in the standardized coordinate `x = R / (gamma dt)^{1/alpha}`
//! so that every `(gamma, dt)` reduces to the unit-scale density. Panels are
//! cut at every half period of the cosine and at envelope decay marks, each
//! integrated with fixed-order Gauss-Legendre and combined with compensated
//! summation; the remaining error is dominated by f64 rounding of the
//! alternating panel sums.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use statrs::function::gamma::gamma as gamma_fn;

use crate::density::EmpiricalDensity;
use crate::error::{Error, Result};

/// Stability index and scale of the symmetric stable law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    gamma: f64,
}

/// A density value plus a flag for evaluations outside the accuracy-guaranteed
/// region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfEval {
    pub density: f64,
    /// Set when `|R|` exceeds the guaranteed range; the value is a best-effort
    /// estimate whose relative accuracy degrades with the tail cancellation.
    pub degraded: bool,
}

/// Tuning knobs for the PDF quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Truncate the integral where the envelope drops below this value.
    pub envelope_cutoff: f64,
    /// Above this alpha the Gaussian closed form replaces quadrature; the
    /// power-law tail coefficient vanishes like (2 - alpha) there and the
    /// oscillatory integral loses relative accuracy.
    pub gaussian_switch_alpha: f64,
    /// Relative accuracy of 1e-8 is guaranteed for |R| up to this many
    /// standardized scale units.
    pub guaranteed_scaled_r: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            envelope_cutoff: 1e-18,
            gaussian_switch_alpha: 1.95,
            guaranteed_scaled_r: 50.0,
        }
    }
}

impl StableParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha {alpha} outside (0, 2]"
            )));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma {gamma} must be positive"
            )));
        }
        Ok(Self { alpha, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Density at return `r` for dimensionless horizon `dt`, with the
    /// degraded-accuracy flag.
    pub fn pdf_eval(&self, dt: f64, r: f64) -> Result<PdfEval> {
        self.pdf_eval_with(dt, r, &QuadratureConfig::default())
    }

    pub fn pdf_eval_with(&self, dt: f64, r: f64, cfg: &QuadratureConfig) -> Result<PdfEval> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
        }
        let scale = (self.gamma * dt).powf(1.0 / self.alpha);
        let x = r / scale;
        Ok(PdfEval {
            density: standard_pdf(self.alpha, x, cfg) / scale,
            degraded: x.abs() > cfg.guaranteed_scaled_r,
        })
    }

    /// Density at return `r`, ignoring the degraded flag.
    pub fn pdf(&self, dt: f64, r: f64) -> Result<f64> {
        Ok(self.pdf_eval(dt, r)?.density)
    }

    /// Densities over a grid of returns, in input order.
    pub fn pdf_curve(&self, dt: f64, rs: &[f64]) -> Result<Vec<PdfEval>> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
        }
        let cfg = QuadratureConfig::default();
        Ok(rs
            .par_iter()
            .map(|&r| self.pdf_eval_with(dt, r, &cfg).expect("dt validated"))
            .collect())
    }

    /// Closed-form zero-return density:
    /// `P(0, dt) = Gamma(1/alpha) / (pi alpha (gamma dt)^{1/alpha})`.
    pub fn p0(&self, dt: f64) -> Result<f64> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
        }
        Ok(gamma_fn(1.0 / self.alpha)
            / (PI * self.alpha * (self.gamma * dt).powf(1.0 / self.alpha)))
    }
}

/// Invert the zero-return closed form for the scale parameter:
/// `gamma = (Gamma(1/alpha) / (pi alpha p0))^alpha / dt`.
pub fn gamma_from_p0(alpha: f64, dt: f64, p0: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (0, 2]"
        )));
    }
    if !(dt > 0.0) || !(p0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dt {dt} and p0 {p0} must be positive"
        )));
    }
    Ok((gamma_fn(1.0 / alpha) / (PI * alpha * p0)).powf(alpha) / dt)
}

/// Rescale an empirical density of horizon-`dt` returns onto the dt = 1 axis:
/// centers shrink by `dt^{-1/alpha}`, densities grow by `dt^{1/alpha}`, and
/// the integral is preserved.
pub fn collapse_density(d: &EmpiricalDensity, alpha: f64, dt: f64) -> Result<EmpiricalDensity> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside (0, 2]"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    Ok(d.rescaled(dt.powf(-1.0 / alpha)))
}

/// Unit-scale symmetric stable density `(1/pi) int_0^inf exp(-u^alpha) cos(xu) du`.
pub(crate) fn standard_pdf(alpha: f64, x: f64, cfg: &QuadratureConfig) -> f64 {
    let x = x.abs();
    if alpha >= cfg.gaussian_switch_alpha {
        // cf exp(-q^2) is N(0, 2).
        return (-0.25 * x * x).exp() / (2.0 * PI.sqrt());
    }

    let log_cut = -cfg.envelope_cutoff.ln();
    let u_max = log_cut.powf(1.0 / alpha);

    // Panel boundaries: half periods of cos(xu), envelope decay marks, and a
    // geometric ladder toward 0 that resolves the u^alpha cusp for alpha < 1.
    let mut marks: Vec<f64> = Vec::new();
    if x > 0.0 {
        let half_period = PI / x;
        let count = (u_max / half_period) as usize;
        if count > 200_000 {
            // Far beyond the guaranteed range; fall back to the leading tail
            // term of the asymptotic series.
            return gamma_fn(alpha + 1.0) * (0.5 * PI * alpha).sin() / (PI * x.powf(alpha + 1.0));
        }
        marks.extend((1..=count).map(|k| k as f64 * half_period));
    }
    let mut j = 1usize;
    loop {
        let u = (0.5 * j as f64).powf(1.0 / alpha);
        if u >= u_max {
            break;
        }
        marks.push(u);
        j += 1;
    }
    for k in 1..=30 {
        marks.push(u_max * 0.25f64.powi(k));
    }
    marks.push(u_max);
    marks.retain(|&u| u > 0.0);
    marks.sort_by(|a, b| a.partial_cmp(b).expect("finite marks"));
    marks.dedup();

    let nodes = gauss_legendre_24();
    let mut sum = crate::stats::NeumaierSum::default();
    let mut lo = 0.0;
    for &hi in &marks {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut panel = 0.0;
        for &(z, w) in nodes {
            let u = mid + half * z;
            panel += w * (-u.powf(alpha)).exp() * (x * u).cos();
        }
        sum.add(panel * half);
        lo = hi;
    }
    (sum.total() / PI).max(0.0)
}

/// 24-point Gauss-Legendre nodes and weights on [-1, 1], computed once by
/// Newton iteration on the Legendre recurrence.
fn gauss_legendre_24() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = 24usize;
        let mut out = Vec::with_capacity(n);
        for i in 0..n / 2 {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            loop {
                let (mut p0, mut p1) = (1.0f64, 0.0f64);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let z1 = z;
                z -= p0 / dp;
                if (z - z1).abs() < 1e-15 {
                    let w = 2.0 / ((1.0 - z * z) * dp * dp);
                    out.push((z, w));
                    out.push((-z, w));
                    break;
                }
            }
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    /// Gaussian closed form for cf exp(-c q^2): N(0, 2c).
    fn gaussian_pdf(c: f64, r: f64) -> f64 {
        (-r * r / (4.0 * c)).exp() / (2.0 * (PI * c).sqrt())
    }

    fn cauchy_pdf(c: f64, r: f64) -> f64 {
        c / (PI * (c * c + r * r))
    }

    #[test]
    fn cauchy_closed_form_on_grid() {
        let p = StableParams::new(1.0, 1.0).unwrap();
        for i in 0..=200 {
            let r = -10.0 + 0.1 * i as f64;
            let got = p.pdf(1.0, r).unwrap();
            assert!(
                rel_err(got, cauchy_pdf(1.0, r)) < 1e-8,
                "r = {r}: {got} vs {}",
                cauchy_pdf(1.0, r)
            );
        }
    }

    #[test]
    fn gaussian_closed_form_on_grid() {
        let p = StableParams::new(2.0, 0.5).unwrap();
        for i in 0..=200 {
            let r = -10.0 + 0.1 * i as f64;
            let got = p.pdf(1.0, r).unwrap();
            assert!(rel_err(got, gaussian_pdf(0.5, r)) < 1e-8, "r = {r}");
        }
        // Standard normal values at the origin and at one sigma.
        assert!(rel_err(p.pdf(1.0, 0.0).unwrap(), 0.3989422804014327) < 1e-12);
    }

    #[test]
    fn quadrature_agrees_with_gaussian_below_switch() {
        // Force the oscillatory path through alpha = 2 by lifting the switch:
        // a strong end-to-end check of the panel machinery.
        let cfg = QuadratureConfig {
            gaussian_switch_alpha: 2.1,
            ..QuadratureConfig::default()
        };
        for i in 0..=60 {
            let x = -6.0 + 0.2 * i as f64;
            let got = standard_pdf(2.0, x, &cfg);
            let want = (-0.25 * x * x).exp() / (2.0 * PI.sqrt());
            assert!(rel_err(got, want) < 1e-10, "x = {x}: {got} vs {want}");
        }
    }

    #[test]
    fn cauchy_special_value() {
        let p = StableParams::new(1.0, 1.0).unwrap();
        let got = p.pdf(1.0, 1.0).unwrap();
        assert!(rel_err(got, 1.0 / (2.0 * PI)) < 1e-10);
    }

    #[test]
    fn pdf_zero_matches_closed_form_across_alpha() {
        for i in 0..=6 {
            let alpha = 0.8 + 0.2 * i as f64;
            let p = StableParams::new(alpha, 1.3).unwrap();
            for dt in [1.0, 7.0] {
                let got = p.pdf(dt, 0.0).unwrap();
                let want = p.p0(dt).unwrap();
                assert!(
                    rel_err(got, want) < 1e-8,
                    "alpha {alpha} dt {dt}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn p0_trivial_cases() {
        let gauss = StableParams::new(2.0, 0.5).unwrap();
        assert!(rel_err(gauss.p0(1.0).unwrap(), 1.0 / (2.0 * PI).sqrt()) < 1e-14);

        let cauchy = StableParams::new(1.0, 1.0).unwrap();
        assert!(rel_err(cauchy.p0(1.0).unwrap(), 1.0 / PI) < 1e-14);

        // Gamma(2/3) / (1.5 pi 8^{2/3}) for alpha=1.5, gamma=2, dt=4.
        let p = StableParams::new(1.5, 2.0).unwrap();
        let want = gamma_fn(2.0 / 3.0) / (1.5 * PI * 8f64.powf(2.0 / 3.0));
        assert!(rel_err(p.p0(4.0).unwrap(), want) < 1e-14);
    }

    #[test]
    fn p0_against_brute_force_trapezoid() {
        // Independent slow oracle: 1e7-node trapezoid of exp(-u^1.5) on
        // [0, u_max], compared against both the closed form and the panel
        // quadrature at R = 0.
        let alpha = 1.5f64;
        let u_max = (-(1e-18f64).ln()).powf(1.0 / alpha);
        let n = 10_000_000usize;
        let h = u_max / n as f64;
        let mut acc = 0.5 * (1.0 + (-u_max.powf(alpha)).exp());
        for k in 1..n {
            acc += (-(k as f64 * h).powf(alpha)).exp();
        }
        let oracle = acc * h / PI;

        let p = StableParams::new(alpha, 1.0).unwrap();
        assert!(rel_err(p.p0(1.0).unwrap(), oracle) < 1e-9);
        assert!(rel_err(p.pdf(1.0, 0.0).unwrap(), oracle) < 1e-9);
        // Same number in closed form: Gamma(2/3)/(1.5 pi).
        assert!(rel_err(gamma_fn(2.0 / 3.0) / (1.5 * PI), oracle) < 1e-9);
    }

    #[test]
    fn pdf_is_symmetric_and_nonnegative() {
        for &alpha in &[0.8, 1.0, 1.3, 1.7, 2.0] {
            let p = StableParams::new(alpha, 0.7).unwrap();
            for i in 0..=40 {
                let r = 0.25 * i as f64;
                let plus = p.pdf(2.0, r).unwrap();
                let minus = p.pdf(2.0, -r).unwrap();
                assert!(plus >= 0.0);
                assert_eq!(plus, minus, "alpha {alpha} r {r}");
            }
        }
    }

    #[test]
    fn central_mass_is_captured() {
        // Simpson integral of the pdf over |R| <= 50 (gamma dt)^{1/alpha}.
        // At alpha = 1 the exact truncated Cauchy mass is
        // 1 - 2 atan(1/50)/pi ~ 0.98727; above alpha ~ 1.2 the spec's 0.99
        // bound holds.
        for &(alpha, lo_bound) in &[(1.0, 0.987), (1.2, 0.99), (1.6, 0.99), (2.0, 0.99)] {
            let p = StableParams::new(alpha, 1.0).unwrap();
            let lim = 50.0f64;
            let n = 600usize;
            let h = lim / n as f64;
            let mut acc = p.pdf(1.0, 0.0).unwrap() + p.pdf(1.0, lim).unwrap();
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * p.pdf(1.0, k as f64 * h).unwrap();
            }
            let integral = 2.0 * acc * h / 3.0;
            assert!(
                integral >= lo_bound && integral <= 1.0 + 1e-9,
                "alpha {alpha}: integral {integral}"
            );
        }
    }

    #[test]
    fn self_similarity_identity() {
        let p = StableParams::new(1.5, 0.8).unwrap();
        let a = 16.0f64;
        for &r in &[0.0, 0.3, 1.0, 4.0, 12.0] {
            let lhs = p.pdf(a * 2.0, r).unwrap();
            let rhs = a.powf(-1.0 / 1.5) * p.pdf(2.0, a.powf(-1.0 / 1.5) * r).unwrap();
            assert!(rel_err(lhs, rhs) < 1e-8, "r = {r}");
        }
    }

    #[test]
    fn degraded_flag_beyond_guaranteed_range() {
        let p = StableParams::new(1.5, 1.0).unwrap();
        assert!(!p.pdf_eval(1.0, 49.0).unwrap().degraded);
        assert!(p.pdf_eval(1.0, 51.0).unwrap().degraded);
    }

    #[test]
    fn gamma_from_p0_inverts_the_closed_form() {
        let g = gamma_from_p0(2.0, 1.0, 1.0 / (2.0 * PI).sqrt()).unwrap();
        assert!(rel_err(g, 0.5) < 1e-12);

        let g = gamma_from_p0(1.0, 1.0, 1.0 / PI).unwrap();
        assert!(rel_err(g, 1.0) < 1e-12);

        let g = gamma_from_p0(1.5, 16.0, 0.02).unwrap();
        let p = StableParams::new(1.5, g).unwrap();
        assert!(rel_err(p.p0(16.0).unwrap(), 0.02) < 1e-12);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(StableParams::new(0.0, 1.0).is_err());
        assert!(StableParams::new(2.3, 1.0).is_err());
        assert!(StableParams::new(1.5, -1.0).is_err());
        let p = StableParams::new(1.5, 1.0).unwrap();
        assert!(p.pdf(0.0, 1.0).is_err());
        assert!(p.p0(-1.0).is_err());
        assert!(gamma_from_p0(1.5, 1.0, 0.0).is_err());
    }

    #[test]
    fn collapse_preserves_integral_and_identity() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64 / 999.0 - 0.5) * 4.0).collect();
        let r =
            crate::returns::ReturnSeries::from_values(4, crate::returns::ReturnKind::Raw, values);
        let spec = crate::density::BinningSpec::linear(20, Some((-2.0, 2.0))).unwrap();
        let d = crate::density::estimate_pdf(&r, &spec).unwrap();

        let same = collapse_density(&d, 1.5, 1.0).unwrap();
        assert_eq!(same, d);

        let collapsed = collapse_density(&d, 1.5, 4.0).unwrap();
        assert!((collapsed.integral() - d.integral()).abs() < 1e-12);
        let k = 4f64.powf(-1.0 / 1.5);
        assert!((collapsed.centers[3] - d.centers[3] * k).abs() < 1e-15);

        assert!(collapse_density(&d, 2.5, 4.0).is_err());
    }
}
