//! Tab-separated plot tables with `#` metadata headers.
//!
//! Every writer is deterministic: floats use the shortest round-trip
//! representation and no timestamps or environment state leak into the
//! output, so identical inputs produce identical bytes.

use std::io::{self, Write};

use crate::density::{EmpiricalCcdf, EmpiricalDensity, MomentSet, TailSign};
use crate::fitting::{FitResult, TailConvention};
use crate::market_data::PriceSeries;
use crate::returns::ReturnSeries;
use crate::synth::GeneratorSpec;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M";

fn write_meta<W: Write>(w: &mut W, table: &str, meta: &[(&str, String)]) -> io::Result<()> {
    writeln!(w, "# table: {table}")?;
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

/// `tick_index \t timestamp \t price` rows; reloadable with the default
/// schema plus a tab delimiter.
pub fn write_price_series<W: Write>(w: &mut W, s: &PriceSeries) -> io::Result<()> {
    write_meta(
        w,
        "price_series",
        &[
            ("tick_minutes", s.tick_minutes().to_string()),
            ("ticks", s.len().to_string()),
        ],
    )?;
    writeln!(w, "tick_index\ttimestamp\tprice")?;
    for (i, r) in s.records().iter().enumerate() {
        writeln!(
            w,
            "{i}\t{}\t{}",
            r.timestamp.format(TIMESTAMP_FORMAT),
            r.price
        )?;
    }
    Ok(())
}

/// `tick_index \t value` rows with dt, kind, mean, and volatility recorded.
pub fn write_return_series<W: Write>(w: &mut W, r: &ReturnSeries) -> io::Result<()> {
    write_meta(
        w,
        "returns",
        &[
            ("dt_minutes", r.dt_minutes.to_string()),
            ("kind", format!("{:?}", r.kind).to_lowercase()),
            ("mean_T", r.mean_t.to_string()),
            ("volatility", r.volatility.to_string()),
            ("n", r.len().to_string()),
        ],
    )?;
    writeln!(w, "tick_index\tvalue")?;
    for (i, v) in r.values.iter().enumerate() {
        writeln!(w, "{i}\t{v}")?;
    }
    Ok(())
}

/// `center \t width \t density \t count` rows.
pub fn write_density<W: Write>(
    w: &mut W,
    d: &EmpiricalDensity,
    meta: &[(&str, String)],
) -> io::Result<()> {
    let mut all = vec![("n_total", d.n_total.to_string())];
    all.extend(meta.iter().cloned());
    write_meta(w, "density", &all)?;
    writeln!(w, "center\twidth\tdensity\tcount")?;
    for i in 0..d.centers.len() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            d.centers[i], d.widths[i], d.density[i], d.counts[i]
        )?;
    }
    Ok(())
}

/// `value \t ccdf` rows for one tail.
pub fn write_ccdf<W: Write>(
    w: &mut W,
    c: &EmpiricalCcdf,
    meta: &[(&str, String)],
) -> io::Result<()> {
    let sign = match c.tail_sign {
        TailSign::Positive => "positive",
        TailSign::Negative => "negative",
    };
    let mut all = vec![
        ("sign", sign.to_string()),
        ("n_tail", c.n_tail.to_string()),
        ("thin", c.thin.to_string()),
    ];
    all.extend(meta.iter().cloned());
    write_meta(w, "ccdf", &all)?;
    writeln!(w, "value\tccdf")?;
    for (v, p) in c.values.iter().zip(&c.ccdf) {
        writeln!(w, "{v}\t{p}")?;
    }
    Ok(())
}

/// `order \t mu` rows.
pub fn write_moments<W: Write>(
    w: &mut W,
    m: &MomentSet,
    meta: &[(&str, String)],
) -> io::Result<()> {
    write_meta(w, "moments", meta)?;
    writeln!(w, "order\tmu")?;
    for (k, mu) in m.orders.iter().zip(&m.mu) {
        writeln!(w, "{k}\t{mu}")?;
    }
    Ok(())
}

/// Generic two-column table.
pub fn write_xy<W: Write>(
    w: &mut W,
    table: &str,
    columns: (&str, &str),
    rows: &[(f64, f64)],
    meta: &[(&str, String)],
) -> io::Result<()> {
    write_meta(w, table, meta)?;
    writeln!(w, "{}\t{}", columns.0, columns.1)?;
    for (x, y) in rows {
        writeln!(w, "{x}\t{y}")?;
    }
    Ok(())
}

/// Generic three-column table.
pub fn write_xyz<W: Write>(
    w: &mut W,
    table: &str,
    columns: (&str, &str, &str),
    rows: &[(f64, f64, f64)],
    meta: &[(&str, String)],
) -> io::Result<()> {
    write_meta(w, table, meta)?;
    writeln!(w, "{}\t{}\t{}", columns.0, columns.1, columns.2)?;
    for (x, y, z) in rows {
        writeln!(w, "{x}\t{y}\t{z}")?;
    }
    Ok(())
}

/// One value per line with the generator recorded in the header.
pub fn write_samples<W: Write>(w: &mut W, values: &[f64], spec: &GeneratorSpec) -> io::Result<()> {
    write_meta(
        w,
        "samples",
        &[
            ("family", spec.family.label()),
            ("seed", spec.seed.to_string()),
            ("n", spec.n.to_string()),
            ("rng", crate::synth::RNG_ALGORITHM.to_string()),
        ],
    )?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

/// A labelled fit for the structured fit report.
#[derive(Debug, Clone)]
pub struct FitRecord {
    pub label: String,
    pub fit: FitResult,
    pub convention: Option<TailConvention>,
}

/// One record per fit: label, estimate, stderr, range, diagnostics,
/// convention tag.
pub fn write_fit_report<W: Write>(
    w: &mut W,
    records: &[FitRecord],
    meta: &[(&str, String)],
) -> io::Result<()> {
    write_meta(w, "fits", meta)?;
    writeln!(
        w,
        "label\testimate\tstderr\trange_lo\trange_hi\tn_points\tresidual_rms\tconvention"
    )?;
    for r in records {
        let conv = match r.convention {
            Some(TailConvention::Pdf) => "pdf",
            Some(TailConvention::Ccdf) => "ccdf",
            None => "-",
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{conv}",
            r.label,
            r.fit.estimate,
            r.fit.stderr,
            r.fit.range.0,
            r.fit.range.1,
            r.fit.n_points,
            r.fit.residual_rms
        )?;
    }
    Ok(())
}
