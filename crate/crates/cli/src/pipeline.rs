//! Shared plumbing: input preparation, the per-horizon return ladder, and
//! deterministic output writing.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::PathBuf;

use levyscale::error::{Error, Result};
use levyscale::market_data::{
    load_csv, stitch_sessions_with, LoadReport, PriceSeries, StitchReport,
};
use levyscale::returns::{log_returns_with, ReturnOptions, ReturnSeries};
use levyscale::synth::{price_path_on, sample, GeneratorSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::AnalysisConfig;

/// A stitched price series ready for analysis, plus ingestion accounting.
pub struct PreparedInput {
    pub series: PriceSeries,
    pub load: Option<LoadReport>,
    pub stitch: Option<StitchReport>,
    /// Human-readable provenance for the manifest.
    pub source: String,
}

/// Load-and-stitch a price file, or realize a synthetic price path.
pub fn prepare_series(cfg: &AnalysisConfig) -> Result<PreparedInput> {
    match (&cfg.input.file, &cfg.input.synth) {
        (Some(path), None) => {
            let schema = cfg.input.csv.to_schema()?;
            let file = fs::File::open(path)
                .map_err(|e| Error::Ingestion(format!("cannot open input {path:?}: {e}")))?;
            let (raw, load) = load_csv(io::BufReader::new(file), &schema)?;
            let cal = cfg.calendar.build()?;
            let (series, stitch) = stitch_sessions_with(&raw, &cal, cfg.analysis.missing_policy)?;
            Ok(PreparedInput {
                series,
                load: Some(load),
                stitch: Some(stitch),
                source: format!("file:{}", path.display()),
            })
        }
        (None, Some(synth)) => {
            let spec = GeneratorSpec::new(synth.family.clone(), cfg.seed, synth.n);
            let returns = sample(&spec)?;
            let cal = cfg.calendar.build()?;
            let series = price_path_on(&returns, 100.0, &cal, cfg.calendar.start_date)?;
            Ok(PreparedInput {
                series,
                load: None,
                stitch: None,
                source: format!("synth:{}", synth.family.label()),
            })
        }
        (None, None) => Err(Error::InvalidArgument(
            "no input configured: set input.file or input.synth (or pass --input)".into(),
        )),
        (Some(_), Some(_)) => Err(Error::InvalidArgument(
            "input.file and input.synth are mutually exclusive".into(),
        )),
    }
}

/// Raw log returns for every horizon of the ladder, computed in parallel.
pub fn returns_ladder(
    series: &PriceSeries,
    cfg: &AnalysisConfig,
) -> Result<BTreeMap<u32, ReturnSeries>> {
    let opts = ReturnOptions {
        overlapping: cfg.analysis.overlapping,
        include_stitch_spanning: !cfg.analysis.exclude_stitch_spanning,
    };
    let rows: Vec<(u32, ReturnSeries)> = cfg
        .analysis
        .dt_ladder
        .par_iter()
        .map(|&dt| Ok((dt, log_returns_with(series, dt as usize, opts)?)))
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().collect())
}

/// Deterministic output directory writer; remembers what it wrote for the
/// manifest.
pub struct OutDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn new(dir: &PathBuf) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.clone(),
            files: Vec::new(),
        })
    }

    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        fs::write(self.dir.join(name), buf)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
        fs::write(self.dir.join(name), text.as_bytes())?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Run manifest: command, crate version, RNG identity, seed, the file
    /// list, and the fully resolved configuration. No timestamps, so reruns
    /// are byte-identical.
    pub fn finish(mut self, command: &str, cfg: &AnalysisConfig, source: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            version: &'a str,
            rng: &'a str,
            seed: u64,
            source: &'a str,
            outputs: &'a [String],
            config: &'a AnalysisConfig,
        }
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            rng: levyscale::synth::RNG_ALGORITHM,
            seed: cfg.seed,
            source,
            outputs: &self.files,
            config: cfg,
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
        fs::write(self.dir.join("manifest.json"), text.as_bytes())?;
        self.files.push("manifest.json".to_string());
        Ok(())
    }
}
