//! Declarative run configuration: a TOML file whose every setting can be
//! overridden by a command-line flag.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use levyscale::error::{Error, Result};
use levyscale::fitting::DEFAULT_CROSSOVER_THRESHOLD;
use levyscale::market_data::{ColumnSelector, CsvSchema, MissingPolicy, TradingCalendar};
use levyscale::synth::Family;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Seed for synthetic inputs; recorded in every manifest.
    pub seed: u64,
    /// Worker threads for the per-horizon analyses; 0 keeps the rayon default.
    pub threads: usize,
    pub input: InputConfig,
    pub calendar: CalendarConfig,
    pub analysis: AnalysisParams,
    pub output: OutputConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            threads: 0,
            input: InputConfig::default(),
            calendar: CalendarConfig::default(),
            analysis: AnalysisParams::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Delimited price file; mutually exclusive with `synth`.
    pub file: Option<PathBuf>,
    pub synth: Option<SynthInput>,
    pub csv: CsvOptions,
}

/// Generator request: the distribution family plus the sample length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthInput {
    #[serde(flatten)]
    pub family: Family,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvOptions {
    pub delimiter: String,
    pub has_headers: bool,
    pub timestamp_column: ColumnSelector,
    pub price_column: ColumnSelector,
    pub datetime_format: String,
    pub malformed_tolerance: f64,
}

impl Default for CsvOptions {
    fn default() -> Self {
        let d = CsvSchema::default();
        Self {
            delimiter: ",".into(),
            has_headers: d.has_headers,
            timestamp_column: d.timestamp,
            price_column: d.price,
            datetime_format: d.datetime_format,
            malformed_tolerance: d.malformed_tolerance,
        }
    }
}

impl CsvOptions {
    pub fn to_schema(&self) -> Result<CsvSchema> {
        let bytes = self.delimiter.as_bytes();
        if bytes.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "delimiter '{}' must be a single byte",
                self.delimiter
            )));
        }
        Ok(CsvSchema {
            delimiter: bytes[0],
            has_headers: self.has_headers,
            timestamp: self.timestamp_column.clone(),
            price: self.price_column.clone(),
            datetime_format: self.datetime_format.clone(),
            malformed_tolerance: self.malformed_tolerance,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarConfig {
    /// One `hh:mm-hh:mm` session per line; defaults to 09:30-11:30, 13:00-15:00.
    pub sessions_file: Option<PathBuf>,
    /// One ISO date per line.
    pub holidays_file: Option<PathBuf>,
    /// First calendar day of synthetic price paths.
    pub start_date: NaiveDate,
}

impl Default for CalendarConfig {
    fn default() -> Self {
        Self {
            sessions_file: None,
            holidays_file: None,
            start_date: NaiveDate::from_ymd_opt(2005, 1, 4).expect("valid date"),
        }
    }
}

impl CalendarConfig {
    pub fn build(&self) -> Result<TradingCalendar> {
        let cal = match &self.sessions_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Ingestion(format!("cannot read sessions file {path:?}: {e}"))
                })?;
                TradingCalendar::new(TradingCalendar::parse_sessions(&text)?, BTreeSet::new())?
            }
            None => TradingCalendar::sse_default(),
        };
        match &self.holidays_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Ingestion(format!("cannot read holidays file {path:?}: {e}"))
                })?;
                Ok(cal.with_holidays(TradingCalendar::parse_holidays(&text)?))
            }
            None => Ok(cal),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisParams {
    /// Horizons in stitched minutes, ascending.
    pub dt_ladder: Vec<u32>,
    /// Return windows at every tick (true) or on a dt-spaced grid.
    pub overlapping: bool,
    /// Drop windows that cross a lunch/overnight stitch.
    pub exclude_stitch_spanning: bool,
    /// Treatment of in-session minutes without a record.
    pub missing_policy: MissingPolicy,
    /// Central-bin width for P(0), in sample standard deviations.
    pub p0_rel_width: f64,
    /// Bin count of the central PDF tables.
    pub central_bins: usize,
    /// Half width of the central PDF range, in standard deviations.
    pub central_halfwidth_sigmas: f64,
    /// Tail fraction entering power-law fits.
    pub tail_fraction: f64,
    /// Minimum tail points for a fit; the range widens to reach it.
    pub tail_min_points: usize,
    /// Logarithmic bin count for tail PDFs.
    pub tail_bins: usize,
    /// Exponential tail fits run for horizons at or above this.
    pub exp_dt_min: u32,
    /// Moment order grid.
    pub orders: Vec<f64>,
    /// dt ranges of the two scaling fits.
    pub scaling_ranges: Vec<(f64, f64)>,
    pub crossover_threshold: f64,
    /// Force the collapse exponent instead of the fitted one.
    pub collapse_alpha: Option<f64>,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            dt_ladder: vec![1, 2, 4, 8, 15, 30, 60, 120, 240, 480, 960, 1920, 3840],
            overlapping: true,
            exclude_stitch_spanning: false,
            missing_policy: MissingPolicy::ForwardFill,
            p0_rel_width: 0.1,
            central_bins: 201,
            central_halfwidth_sigmas: 10.0,
            tail_fraction: 0.01,
            tail_min_points: 200,
            tail_bins: 40,
            exp_dt_min: 240,
            orders: levyscale::density::default_order_grid(),
            scaling_ranges: vec![(1.0, 15.0), (60.0, 3840.0)],
            crossover_threshold: DEFAULT_CROSSOVER_THRESHOLD,
            collapse_alpha: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read config {path:?}: {e}")))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("bad config {path:?}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ladder = &self.analysis.dt_ladder;
        if ladder.is_empty() {
            return Err(Error::InvalidArgument("dt_ladder is empty".into()));
        }
        if ladder[0] < 1 || ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "dt_ladder must be strictly increasing with entries >= 1".into(),
            ));
        }
        if !(self.analysis.p0_rel_width > 0.0) {
            return Err(Error::InvalidArgument("p0_rel_width must be > 0".into()));
        }
        if !(0.0 < self.analysis.tail_fraction && self.analysis.tail_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "tail_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.analysis.central_bins < 4 || self.analysis.tail_bins < 4 {
            return Err(Error::InvalidArgument("bin counts must be >= 4".into()));
        }
        if let Some(a) = self.analysis.collapse_alpha {
            if !(a > 0.0 && a <= 2.0) {
                return Err(Error::InvalidArgument(format!(
                    "collapse_alpha {a} outside (0, 2]"
                )));
            }
        }
        for &(lo, hi) in &self.analysis.scaling_ranges {
            if !(lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "bad scaling range ({lo}, {hi})"
                )));
            }
        }
        self.input.csv.to_schema()?;
        if self.input.file.is_some() && self.input.synth.is_some() {
            return Err(Error::InvalidArgument(
                "input.file and input.synth are mutually exclusive".into(),
            ));
        }
        Ok(())
    }
}

/// Flag overrides shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt_ladder: Option<Vec<u32>>,
    pub exclude_stitch_spanning: bool,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut AnalysisConfig) {
        if let Some(input) = &self.input {
            cfg.input.file = Some(input.clone());
            cfg.input.synth = None;
        }
        if let Some(cal) = &self.calendar {
            cfg.calendar.sessions_file = Some(cal.clone());
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(ladder) = &self.dt_ladder {
            cfg.analysis.dt_ladder = ladder.clone();
        }
        if self.exclude_stitch_spanning {
            cfg.analysis.exclude_stitch_spanning = true;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
    }
}
