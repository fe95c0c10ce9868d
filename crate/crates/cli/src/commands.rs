//! The five pipeline commands. Each one writes plot-ready tab-separated
//! tables plus a JSON report and a run manifest into the output directory.

use std::collections::BTreeMap;

use levyscale::convergence::convergence_curve;
use levyscale::density::{
    ccdf_tail, estimate_pdf, gaussian_moments, p0_curve, sample_moments, BinMode, BinningSpec,
    EmpiricalCcdf, TailSign,
};
use levyscale::error::{Error, Result};
use levyscale::export;
use levyscale::fitting::{
    alpha_from_p0_scaling, detect_crossover, exponential_tail_fit, powerlaw_fit_ccdf,
    powerlaw_fit_pdf, student_t_fit, weighted_average, CrossoverReport, FitResult, StudentTFit,
    TailConvention,
};
use levyscale::returns::{normalize, rescale, ReturnSeries};
use levyscale::stable::{gamma_from_p0, StableParams};
use levyscale::synth::{sample, GeneratorSpec};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::config::AnalysisConfig;
use crate::pipeline::{prepare_series, returns_ladder, OutDir};

fn meta(pairs: &[(&'static str, String)]) -> Vec<(&'static str, String)> {
    pairs.to_vec()
}

/// Ingest a price file (or synthetic spec) and persist the stitched series.
pub fn run_ingest(cfg: &AnalysisConfig) -> Result<()> {
    let input = prepare_series(cfg)?;
    let mut out = OutDir::new(&cfg.output.dir)?;
    out.write("price_series.tsv", |w| {
        export::write_price_series(w, &input.series)
    })?;

    #[derive(Serialize)]
    struct IngestReport<'a> {
        ticks: usize,
        tick_minutes: u32,
        load: &'a Option<levyscale::market_data::LoadReport>,
        stitch: &'a Option<levyscale::market_data::StitchReport>,
    }
    out.write_json(
        "ingest_report.json",
        &IngestReport {
            ticks: input.series.len(),
            tick_minutes: input.series.tick_minutes(),
            load: &input.load,
            stitch: &input.stitch,
        },
    )?;
    out.finish("ingest", cfg, &input.source)?;
    println!(
        "ingest: {} ticks from {} -> {}",
        input.series.len(),
        input.source,
        cfg.output.dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct AlphaFitRow {
    range: (f64, f64),
    alpha: f64,
    stderr: f64,
    formatted: String,
    n_points: usize,
    residual_rms: f64,
}

#[derive(Serialize)]
struct CrossoverRow {
    breakpoint: f64,
    improvement: f64,
    threshold: f64,
    detected: bool,
    left_slope: f64,
    right_slope: f64,
}

#[derive(Serialize)]
struct ShapeRow {
    dt: u32,
    skewness: f64,
    skew_statistic: f64,
    skew_p_value: f64,
    excess_kurtosis: f64,
    kurtosis_statistic: f64,
    kurtosis_p_value: f64,
}

#[derive(Serialize)]
struct AnalysisReport {
    alpha_fits: Vec<AlphaFitRow>,
    crossover: Option<CrossoverRow>,
    collapse_alpha: Option<f64>,
    student_t: Option<StudentTFit>,
    shape_tests: Vec<ShapeRow>,
    notes: Vec<String>,
}

fn alpha_row(range: (f64, f64), fit: &FitResult) -> AlphaFitRow {
    AlphaFitRow {
        range,
        alpha: fit.estimate,
        stderr: fit.stderr,
        formatted: fit.format_pm(),
        n_points: fit.n_points,
        residual_rms: fit.residual_rms,
    }
}

/// Zero-return density scaling, two-regime fits, crossover report, collapsed
/// densities with stable/Gaussian/t overlays, and shape tests.
pub fn run_analyze(cfg: &AnalysisConfig) -> Result<()> {
    let input = prepare_series(cfg)?;
    let ladder = returns_ladder(&input.series, cfg)?;
    let mut out = OutDir::new(&cfg.output.dir)?;
    let mut notes: Vec<String> = Vec::new();

    // Central PDF tables, one per horizon.
    for (dt, r) in &ladder {
        let half = cfg.analysis.central_halfwidth_sigmas * r.volatility;
        let spec = BinningSpec::linear(cfg.analysis.central_bins, Some((-half, half)))?;
        let d = estimate_pdf(r, &spec)?;
        out.write(&format!("pdf_dt{dt}.tsv"), |w| {
            export::write_density(w, &d, &meta(&[("dt_minutes", dt.to_string())]))
        })?;
    }

    // P(0) versus horizon.
    let curve = p0_curve(ladder.values(), cfg.analysis.p0_rel_width)?;
    out.write("p0.tsv", |w| {
        export::write_xyz(
            w,
            "p0_scaling",
            ("dt", "p0", "stderr"),
            &curve,
            &meta(&[("p0_rel_width", cfg.analysis.p0_rel_width.to_string())]),
        )
    })?;

    // Regime fits over the configured dt ranges.
    let mut alpha_fits: Vec<(usize, (f64, f64), FitResult)> = Vec::new();
    for (i, &range) in cfg.analysis.scaling_ranges.iter().enumerate() {
        match alpha_from_p0_scaling(&curve, range) {
            Ok(fit) => alpha_fits.push((i, range, fit)),
            Err(e) => notes.push(format!(
                "alpha fit over ({}, {}) skipped: {e}",
                range.0, range.1
            )),
        }
    }

    let crossover = match detect_crossover(&curve) {
        Ok(rep) => Some(rep),
        Err(e) => {
            notes.push(format!("crossover detection skipped: {e}"));
            None
        }
    };

    // The collapse exponent: configured override, else the first regime fit,
    // else a global fit across the whole ladder.
    let global_range = (curve[0].0, curve[curve.len() - 1].0);
    let collapse_alpha = cfg
        .analysis
        .collapse_alpha
        .or_else(|| alpha_fits.first().map(|(_, _, f)| f.estimate))
        .or_else(|| {
            alpha_from_p0_scaling(&curve, global_range)
                .map(|f| f.estimate)
                .map_err(|e| notes.push(format!("global alpha fit failed: {e}")))
                .ok()
        })
        .filter(|&a| {
            let ok = a > 0.0 && a <= 2.0;
            if !ok {
                notes.push(format!("fitted alpha {a} outside (0, 2]; collapse skipped"));
            }
            ok
        });

    let mut student_t = None;
    if let Some(alpha) = collapse_alpha {
        write_collapse_tables(
            cfg,
            &mut out,
            &ladder,
            &curve,
            alpha,
            &alpha_fits,
            &mut notes,
            &mut student_t,
        )?;
    }

    // Skewness/kurtosis significance tests per horizon.
    let mut shape_rows = Vec::new();
    for (dt, r) in &ladder {
        match (
            levyscale::returns::skewness_test(r),
            levyscale::returns::kurtosis_test(r),
        ) {
            (Ok(s), Ok(k)) => shape_rows.push(ShapeRow {
                dt: *dt,
                skewness: s.sample_skewness,
                skew_statistic: s.statistic,
                skew_p_value: s.p_value,
                excess_kurtosis: k.sample_excess_kurtosis,
                kurtosis_statistic: k.statistic,
                kurtosis_p_value: k.p_value,
            }),
            (Err(e), _) | (_, Err(e)) => notes.push(format!("shape tests at dt {dt} skipped: {e}")),
        }
    }
    out.write("shape_tests.tsv", |w| {
        use std::io::Write;
        writeln!(w, "# table: shape_tests")?;
        writeln!(
            w,
            "dt\tskewness\tskew_z\tskew_p\texcess_kurtosis\tkurtosis_z\tkurtosis_p"
        )?;
        for r in &shape_rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.dt,
                r.skewness,
                r.skew_statistic,
                r.skew_p_value,
                r.excess_kurtosis,
                r.kurtosis_statistic,
                r.kurtosis_p_value
            )?;
        }
        Ok(())
    })?;

    // Structured fit report.
    let fit_records: Vec<export::FitRecord> = alpha_fits
        .iter()
        .map(|(i, range, fit)| export::FitRecord {
            label: format!("alpha_regime{}[{}..{}]", i + 1, range.0, range.1),
            fit: fit.clone(),
            convention: None,
        })
        .collect();
    out.write("fits.tsv", |w| {
        export::write_fit_report(w, &fit_records, &meta(&[]))
    })?;

    let report = AnalysisReport {
        alpha_fits: alpha_fits
            .iter()
            .map(|(_, range, fit)| alpha_row(*range, fit))
            .collect(),
        crossover: crossover
            .as_ref()
            .map(|rep: &CrossoverReport| CrossoverRow {
                breakpoint: rep.breakpoint,
                improvement: rep.improvement,
                threshold: cfg.analysis.crossover_threshold,
                detected: rep.improvement > cfg.analysis.crossover_threshold,
                left_slope: rep.left.estimate,
                right_slope: rep.right.estimate,
            }),
        collapse_alpha,
        student_t,
        shape_tests: shape_rows,
        notes,
    };
    out.write_json("analysis_report.json", &report)?;
    out.finish("analyze", cfg, &input.source)?;

    for row in &report.alpha_fits {
        println!(
            "analyze: alpha over dt in [{}, {}] = {}",
            row.range.0, row.range.1, row.formatted
        );
    }
    if let Some(c) = &report.crossover {
        println!(
            "analyze: crossover breakpoint {:.1} improvement {:.2} (threshold {:.2}) detected={}",
            c.breakpoint, c.improvement, c.threshold, c.detected
        );
    }
    for note in &report.notes {
        println!("analyze: note: {note}");
    }
    Ok(())
}

/// Collapsed density tables for every horizon plus the three theoretical
/// overlays on the dt = 1 axis.
#[allow(clippy::too_many_arguments)]
fn write_collapse_tables(
    cfg: &AnalysisConfig,
    out: &mut OutDir,
    ladder: &BTreeMap<u32, ReturnSeries>,
    curve: &[(f64, f64, f64)],
    alpha: f64,
    alpha_fits: &[(usize, (f64, f64), FitResult)],
    notes: &mut Vec<String>,
    student_t: &mut Option<StudentTFit>,
) -> Result<()> {
    let (&dt_min, base) = ladder.iter().next().expect("ladder is non-empty");
    // Half width of the common collapsed axis, in dt = 1 units.
    let base_half = cfg.analysis.central_halfwidth_sigmas
        * base.volatility
        * f64::from(dt_min).powf(-1.0 / alpha);

    // The second configured range (above the crossover) is extrapolated from
    // its straight-line fit; below it the measured P(0) is used directly.
    let right = alpha_fits
        .iter()
        .find(|(i, _, _)| *i == 1)
        .map(|(_, range, fit)| (*range, fit.clone()));

    let mut centers_dt1: Option<Vec<f64>> = None;
    for (dt, r) in ladder {
        let scale = f64::from(*dt).powf(1.0 / alpha);
        let spec = BinningSpec::linear(
            cfg.analysis.central_bins,
            Some((-base_half * scale, base_half * scale)),
        )?;
        let d = estimate_pdf(r, &spec)?;
        let collapsed = levyscale::stable::collapse_density(&d, alpha, f64::from(*dt))?;
        out.write(&format!("collapsed_pdf_dt{dt}.tsv"), |w| {
            export::write_density(
                w,
                &collapsed,
                &meta(&[
                    ("dt_minutes", dt.to_string()),
                    ("collapse_alpha", alpha.to_string()),
                ]),
            )
        })?;
        if *dt == dt_min {
            centers_dt1 = Some(collapsed.centers.clone());
        }

        // Stable overlay: gamma from the measured or extrapolated P(0).
        let dtf = f64::from(*dt);
        let measured = curve
            .iter()
            .find(|(d0, _, _)| *d0 == dtf)
            .map(|&(_, p0, _)| p0);
        let (p0_used, p0_source) = match (&right, measured) {
            (Some((range, fit)), _) if dtf >= range.0 => {
                // Above the crossover the paper extrapolates the straight-line
                // fit; the fit lives in (ln dt, ln p0) space but stores the
                // alpha transform, so rebuild the slope as -1/alpha.
                let slope = -1.0 / fit.estimate;
                (
                    Some((fit.intercept + slope * dtf.ln()).exp()),
                    "extrapolated",
                )
            }
            (_, Some(p0)) => (Some(p0), "measured"),
            _ => (None, "none"),
        };
        match p0_used {
            Some(p0) => {
                let gamma = gamma_from_p0(alpha, dtf, p0)?;
                let params = StableParams::new(alpha, gamma)?;
                let grid = &collapsed.centers;
                let evals = params.pdf_curve(1.0, grid)?;
                let rows: Vec<(f64, f64)> = grid
                    .iter()
                    .zip(&evals)
                    .map(|(&x, e)| (x, e.density))
                    .collect();
                out.write(&format!("theory_stable_dt{dt}.tsv"), |w| {
                    export::write_xy(
                        w,
                        "stable_pdf",
                        ("r_s", "density"),
                        &rows,
                        &meta(&[
                            ("alpha", alpha.to_string()),
                            ("gamma", gamma.to_string()),
                            ("dt_minutes", dt.to_string()),
                            ("p0_source", p0_source.to_string()),
                        ]),
                    )
                })?;
            }
            None => notes.push(format!(
                "no P(0) available at dt {dt}; stable overlay skipped"
            )),
        }
    }

    let grid = centers_dt1.expect("smallest horizon always binned");

    // Gaussian reference with the standard deviation of the collapsed
    // smallest-horizon data.
    let sigma1 = base.volatility * f64::from(dt_min).powf(-1.0 / alpha);
    let rows: Vec<(f64, f64)> = grid
        .iter()
        .map(|&x| {
            let z = x / sigma1;
            (
                x,
                (-0.5 * z * z).exp() / (sigma1 * (2.0 * std::f64::consts::PI).sqrt()),
            )
        })
        .collect();
    out.write("theory_gaussian.tsv", |w| {
        export::write_xy(
            w,
            "gaussian_pdf",
            ("r_s", "density"),
            &rows,
            &meta(&[("sigma", sigma1.to_string())]),
        )
    })?;

    // Student's t fit to the collapsed smallest-horizon returns.
    let collapsed_base = rescale(base, alpha, dt_min)?;
    match student_t_fit(&collapsed_base) {
        Ok(fit) => {
            let rows: Vec<(f64, f64)> = grid.iter().map(|&x| (x, fit.pdf(x))).collect();
            out.write("theory_student_t.tsv", |w| {
                export::write_xy(
                    w,
                    "student_t_pdf",
                    ("r_s", "density"),
                    &rows,
                    &meta(&[
                        ("nu", fit.nu.to_string()),
                        ("scale", fit.scale.to_string()),
                        ("location", fit.location.to_string()),
                    ]),
                )
            })?;
            *student_t = Some(fit);
        }
        Err(e) => notes.push(format!("student t fit skipped: {e}")),
    }
    Ok(())
}

#[derive(Serialize)]
struct TailFitRow {
    dt: u32,
    sign: TailSign,
    convention: TailConvention,
    alpha: f64,
    stderr: f64,
    n_points: usize,
}

#[derive(Serialize)]
struct CombinedTailRow {
    dt: u32,
    sign: TailSign,
    alpha: f64,
    stderr: f64,
    formatted: String,
}

#[derive(Serialize)]
struct ExponentialRow {
    dt: u32,
    sign: TailSign,
    beta: f64,
    stderr: f64,
    formatted: String,
}

#[derive(Serialize)]
struct TailsReport {
    powerlaw_fits: Vec<TailFitRow>,
    combined: Vec<CombinedTailRow>,
    exponential: Vec<ExponentialRow>,
    notes: Vec<String>,
}

fn sign_label(sign: TailSign) -> &'static str {
    match sign {
        TailSign::Positive => "pos",
        TailSign::Negative => "neg",
    }
}

/// Fit range covering the top `tail_fraction` of a tail, widened to at least
/// `tail_min_points` samples.
fn tail_range(tail: &EmpiricalCcdf, fraction: f64, min_points: usize) -> Option<(f64, f64)> {
    let n = tail.values.len();
    let want = ((n as f64 * fraction).ceil() as usize)
        .max(min_points)
        .min(n);
    if n < min_points {
        return None;
    }
    let lo = tail.values[n - want];
    let hi = tail.values[n - 1];
    (lo > 0.0 && lo < hi).then_some((lo, hi))
}

/// Normalized-tail PDFs/CCDFs with power-law fits per sign, exponential fits
/// of the raw tails at long horizons, and the Gaussian/t reference curves.
pub fn run_tails(cfg: &AnalysisConfig) -> Result<()> {
    let input = prepare_series(cfg)?;
    let ladder = returns_ladder(&input.series, cfg)?;
    let mut out = OutDir::new(&cfg.output.dir)?;
    let mut notes = Vec::new();
    let mut powerlaw_fits = Vec::new();
    let mut combined = Vec::new();
    let mut exponential = Vec::new();
    let mut fit_records = Vec::new();

    for (dt, raw) in &ladder {
        let norm = normalize(raw)?;
        for sign in [TailSign::Positive, TailSign::Negative] {
            let tail = match ccdf_tail(&norm, sign) {
                Ok(t) => t,
                Err(e) => {
                    notes.push(format!("dt {dt} {sign:?}: tail skipped: {e}"));
                    continue;
                }
            };
            out.write(&format!("ccdf_norm_dt{dt}_{}.tsv", sign_label(sign)), |w| {
                export::write_ccdf(w, &tail, &meta(&[("dt_minutes", dt.to_string())]))
            })?;
            if tail.thin {
                notes.push(format!(
                    "dt {dt} {sign:?}: only {} tail samples; thin-tail warning",
                    tail.n_tail
                ));
            }

            let Some(range) = tail_range(
                &tail,
                cfg.analysis.tail_fraction,
                cfg.analysis.tail_min_points,
            ) else {
                notes.push(format!(
                    "dt {dt} {sign:?}: fewer than {} tail samples; power-law fit skipped",
                    cfg.analysis.tail_min_points
                ));
                continue;
            };

            let spec = BinningSpec {
                mode: BinMode::Logarithmic,
                bin_count: cfg.analysis.tail_bins,
                range: Some(range),
            };
            let tail_series = ReturnSeries::from_values(*dt, norm.kind, tail.values.clone());
            let dens = estimate_pdf(&tail_series, &spec)?;
            out.write(&format!("tail_pdf_dt{dt}_{}.tsv", sign_label(sign)), |w| {
                export::write_density(w, &dens, &meta(&[("dt_minutes", dt.to_string())]))
            })?;

            let mut estimates = Vec::new();
            match powerlaw_fit_ccdf(&tail, range) {
                Ok(f) => {
                    estimates.push((f.fit.estimate, f.fit.stderr));
                    fit_records.push(export::FitRecord {
                        label: format!("powerlaw_dt{dt}_{}_ccdf", sign_label(sign)),
                        fit: f.fit.clone(),
                        convention: Some(f.convention),
                    });
                    powerlaw_fits.push(TailFitRow {
                        dt: *dt,
                        sign,
                        convention: f.convention,
                        alpha: f.fit.estimate,
                        stderr: f.fit.stderr,
                        n_points: f.fit.n_points,
                    });
                }
                Err(e) => notes.push(format!("dt {dt} {sign:?}: ccdf fit skipped: {e}")),
            }
            match powerlaw_fit_pdf(&dens, range) {
                Ok(f) => {
                    estimates.push((f.fit.estimate, f.fit.stderr));
                    fit_records.push(export::FitRecord {
                        label: format!("powerlaw_dt{dt}_{}_pdf", sign_label(sign)),
                        fit: f.fit.clone(),
                        convention: Some(f.convention),
                    });
                    powerlaw_fits.push(TailFitRow {
                        dt: *dt,
                        sign,
                        convention: f.convention,
                        alpha: f.fit.estimate,
                        stderr: f.fit.stderr,
                        n_points: f.fit.n_points,
                    });
                }
                Err(e) => notes.push(format!("dt {dt} {sign:?}: pdf fit skipped: {e}")),
            }
            if !estimates.is_empty() {
                let (alpha, stderr) = weighted_average(&estimates)?;
                let formatted = FitResult {
                    estimate: alpha,
                    stderr,
                    intercept: 0.0,
                    range,
                    n_points: estimates.len(),
                    residual_rms: 0.0,
                    n_downweighted: 0,
                }
                .format_pm();
                combined.push(CombinedTailRow {
                    dt: *dt,
                    sign,
                    alpha,
                    stderr,
                    formatted,
                });
            }
        }

        // Raw-return tails decay exponentially at long horizons; normalization
        // would squeeze them into the center, so these run on raw values.
        if *dt >= cfg.analysis.exp_dt_min {
            for sign in [TailSign::Positive, TailSign::Negative] {
                let tail = match ccdf_tail(raw, sign) {
                    Ok(t) => t,
                    Err(e) => {
                        notes.push(format!("dt {dt} {sign:?}: raw tail skipped: {e}"));
                        continue;
                    }
                };
                out.write(&format!("ccdf_raw_dt{dt}_{}.tsv", sign_label(sign)), |w| {
                    export::write_ccdf(w, &tail, &meta(&[("dt_minutes", dt.to_string())]))
                })?;
                let Some(range) = tail_range(
                    &tail,
                    cfg.analysis.tail_fraction,
                    cfg.analysis.tail_min_points,
                ) else {
                    notes.push(format!(
                        "dt {dt} {sign:?}: thin raw tail; exponential fit skipped"
                    ));
                    continue;
                };
                match exponential_tail_fit(&tail, range) {
                    Ok(fit) => {
                        fit_records.push(export::FitRecord {
                            label: format!("exponential_dt{dt}_{}", sign_label(sign)),
                            fit: fit.clone(),
                            convention: None,
                        });
                        exponential.push(ExponentialRow {
                            dt: *dt,
                            sign,
                            beta: fit.estimate,
                            stderr: fit.stderr,
                            formatted: fit.format_pm(),
                        });
                    }
                    Err(e) => notes.push(format!("dt {dt} {sign:?}: exponential fit skipped: {e}")),
                }
            }
        }
    }

    // Reference CCDFs on the normalized axis: standard normal, and the t fit
    // to the smallest-horizon normalized returns.
    let (&dt_min, raw_min) = ladder.iter().next().expect("ladder is non-empty");
    let norm_min = normalize(raw_min)?;
    let grid: Vec<f64> = (0..=120)
        .map(|i| 0.1 * (100.0f64 / 0.1).powf(i as f64 / 120.0))
        .collect();
    let rows: Vec<(f64, f64)> = grid
        .iter()
        .map(|&x| (x, 0.5 * erfc(x / std::f64::consts::SQRT_2)))
        .collect();
    out.write("theory_ccdf_gaussian.tsv", |w| {
        export::write_xy(w, "gaussian_ccdf", ("value", "ccdf"), &rows, &meta(&[]))
    })?;
    match student_t_fit(&norm_min) {
        Ok(fit) => {
            let rows: Vec<(f64, f64)> = grid.iter().map(|&x| (x, fit.sf(x))).collect();
            out.write("theory_ccdf_student_t.tsv", |w| {
                export::write_xy(
                    w,
                    "student_t_ccdf",
                    ("value", "ccdf"),
                    &rows,
                    &meta(&[
                        ("nu", fit.nu.to_string()),
                        ("scale", fit.scale.to_string()),
                        ("location", fit.location.to_string()),
                        ("fit_dt", dt_min.to_string()),
                    ]),
                )
            })?;
        }
        Err(e) => notes.push(format!("reference t fit skipped: {e}")),
    }

    out.write("fits.tsv", |w| {
        export::write_fit_report(w, &fit_records, &meta(&[]))
    })?;
    let report = TailsReport {
        powerlaw_fits,
        combined,
        exponential,
        notes,
    };
    out.write_json("tails_report.json", &report)?;
    out.finish("tails", cfg, &input.source)?;

    for row in &report.combined {
        println!(
            "tails: dt {} {:?} combined alpha = {}",
            row.dt, row.sign, row.formatted
        );
    }
    for row in &report.exponential {
        println!(
            "tails: dt {} {:?} beta = {}",
            row.dt, row.sign, row.formatted
        );
    }
    for note in &report.notes {
        println!("tails: note: {note}");
    }
    Ok(())
}

/// Moment tables per horizon, the Gaussian reference, and the distance/speed
/// convergence curves.
pub fn run_converge(cfg: &AnalysisConfig) -> Result<()> {
    let input = prepare_series(cfg)?;
    let ladder = returns_ladder(&input.series, cfg)?;
    let mut out = OutDir::new(&cfg.output.dir)?;
    let orders = &cfg.analysis.orders;

    let mut normalized = Vec::new();
    for (dt, raw) in &ladder {
        let norm = normalize(raw)?;
        let m = sample_moments(&norm, orders)?;
        out.write(&format!("moments_dt{dt}.tsv"), |w| {
            export::write_moments(w, &m, &meta(&[("dt_minutes", dt.to_string())]))
        })?;
        normalized.push(norm);
    }
    let reference = gaussian_moments(orders)?;
    out.write("moments_gaussian.tsv", |w| {
        export::write_moments(w, &reference, &meta(&[]))
    })?;

    let curve = convergence_curve(normalized.iter(), orders)?;
    let d_rows: Vec<(f64, f64)> = curve
        .dts
        .iter()
        .copied()
        .zip(curve.distances.iter().copied())
        .collect();
    out.write("distance.tsv", |w| {
        export::write_xy(w, "moment_distance", ("dt", "D"), &d_rows, &meta(&[]))
    })?;
    let v_rows: Vec<(f64, f64)> = curve
        .speed_midpoints
        .iter()
        .copied()
        .zip(curve.speeds.iter().copied())
        .collect();
    out.write("speed.tsv", |w| {
        export::write_xy(w, "convergence_speed", ("dt_mid", "v"), &v_rows, &meta(&[]))
    })?;
    out.finish("converge", cfg, &input.source)?;
    println!(
        "converge: D spans {:.4} -> {:.4} over {} horizons",
        curve.distances.first().copied().unwrap_or(f64::NAN),
        curve.distances.last().copied().unwrap_or(f64::NAN),
        curve.dts.len()
    );
    Ok(())
}

/// Draw a reproducible sample and persist it with its metadata header.
pub fn run_synth(cfg: &AnalysisConfig) -> Result<()> {
    let synth = cfg.input.synth.as_ref().ok_or_else(|| {
        Error::InvalidArgument("synth command needs an [input.synth] block".into())
    })?;
    let spec = GeneratorSpec::new(synth.family.clone(), cfg.seed, synth.n);
    let values = sample(&spec)?;
    let mut out = OutDir::new(&cfg.output.dir)?;
    out.write("samples.txt", |w| export::write_samples(w, &values, &spec))?;
    out.finish("synth", cfg, &format!("synth:{}", synth.family.label()))?;
    println!(
        "synth: {} draws from {} -> {}",
        values.len(),
        synth.family.label(),
        cfg.output.dir.display()
    );
    Ok(())
}
