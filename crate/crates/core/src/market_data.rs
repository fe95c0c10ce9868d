//! Price ingestion and session stitching.
//!
//! Raw minute records are parsed from delimited text, restricted to calendar
//! sessions, and concatenated onto a gap-free trading-minute axis: the minute
//! after a session close is the first minute of the next session, whether the
//! gap is a lunch break, a night, a weekend, or a holiday.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed price at minute resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRecord {
    pub timestamp: NaiveDateTime,
    pub price: f64,
}

impl PriceRecord {
    /// Seconds and sub-seconds are truncated; the price must be finite and positive.
    pub fn new(timestamp: NaiveDateTime, price: f64) -> Result<Self> {
        if !price.is_finite() || price <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "price {price} must be finite and positive"
            )));
        }
        let timestamp = timestamp
            .with_second(0)
            .and_then(|t| t.with_nanosecond(0))
            .expect("0 is a valid second");
        Ok(Self { timestamp, price })
    }
}

/// Intraday sessions plus a holiday list. Weekends are always non-trading.
///
/// A session `(open, close)` contributes the minutes `open+1 ..= close`: the
/// record stamped 09:31 is the first bar of a 09:30 session open, and the bar
/// stamped at the close belongs to the session. The default schedule
/// (09:30-11:30 and 13:00-15:00) therefore yields 240 minutes per day.
#[derive(Debug, Clone)]
pub struct TradingCalendar {
    /// Ordered, disjoint (open, close) pairs in minutes of day.
    sessions: Vec<(u16, u16)>,
    holidays: BTreeSet<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(sessions: Vec<(u16, u16)>, holidays: BTreeSet<NaiveDate>) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::InvalidArgument("no sessions given".into()));
        }
        let mut prev_close = 0u16;
        for &(open, close) in &sessions {
            if open >= close || close > 24 * 60 {
                return Err(Error::InvalidArgument(format!(
                    "bad session {}-{}",
                    fmt_minute(open),
                    fmt_minute(close)
                )));
            }
            if open < prev_close {
                return Err(Error::InvalidArgument(
                    "sessions must be ordered and disjoint".into(),
                ));
            }
            prev_close = close;
        }
        Ok(Self { sessions, holidays })
    }

    /// The SSE/SZSE schedule: 09:30-11:30 and 13:00-15:00, no holidays.
    pub fn sse_default() -> Self {
        Self {
            sessions: vec![(9 * 60 + 30, 11 * 60 + 30), (13 * 60, 15 * 60)],
            holidays: BTreeSet::new(),
        }
    }

    /// Parse session lines of the form `hh:mm-hh:mm`, one per line.
    pub fn parse_sessions(text: &str) -> Result<Vec<(u16, u16)>> {
        let mut sessions = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (a, b) = line
                .split_once('-')
                .ok_or_else(|| Error::InvalidArgument(format!("bad session line '{line}'")))?;
            sessions.push((parse_minute(a.trim())?, parse_minute(b.trim())?));
        }
        Ok(sessions)
    }

    /// Parse holiday lines, one ISO date (`YYYY-MM-DD`) per line.
    pub fn parse_holidays(text: &str) -> Result<BTreeSet<NaiveDate>> {
        let mut holidays = BTreeSet::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let d = NaiveDate::parse_from_str(line, "%Y-%m-%d")
                .map_err(|e| Error::InvalidArgument(format!("bad holiday '{line}': {e}")))?;
            holidays.insert(d);
        }
        Ok(holidays)
    }

    pub fn with_holidays(mut self, holidays: BTreeSet<NaiveDate>) -> Self {
        self.holidays = holidays;
        self
    }

    pub fn is_trading_day(&self, date: NaiveDate) -> bool {
        !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) && !self.holidays.contains(&date)
    }

    /// True when `ts` falls on an in-session minute of a trading day.
    pub fn in_session(&self, ts: NaiveDateTime) -> bool {
        if !self.is_trading_day(ts.date()) {
            return false;
        }
        let m = (ts.time().hour() * 60 + ts.time().minute()) as u16;
        self.sessions
            .iter()
            .any(|&(open, close)| open < m && m <= close)
    }

    /// In-session minutes per trading day.
    pub fn minutes_per_day(&self) -> usize {
        self.sessions
            .iter()
            .map(|&(open, close)| (close - open) as usize)
            .sum()
    }

    /// Minutes of day, ascending, that belong to a session.
    fn day_minutes(&self) -> Vec<u16> {
        self.sessions
            .iter()
            .flat_map(|&(open, close)| (open + 1)..=close)
            .collect()
    }

    /// Endless stream of in-session minutes starting on the first trading day
    /// on or after `start`.
    pub fn minutes_from(&self, start: NaiveDate) -> MinuteIter<'_> {
        MinuteIter {
            cal: self,
            minutes: self.day_minutes(),
            date: start,
            idx: 0,
            aligned: false,
        }
    }
}

/// Iterator over the stitched minute axis of a calendar.
pub struct MinuteIter<'a> {
    cal: &'a TradingCalendar,
    minutes: Vec<u16>,
    date: NaiveDate,
    idx: usize,
    aligned: bool,
}

impl Iterator for MinuteIter<'_> {
    type Item = NaiveDateTime;

    fn next(&mut self) -> Option<NaiveDateTime> {
        if !self.aligned {
            while !self.cal.is_trading_day(self.date) {
                self.date = self.date.succ_opt()?;
            }
            self.aligned = true;
        }
        if self.idx == self.minutes.len() {
            self.idx = 0;
            self.date = self.date.succ_opt()?;
            while !self.cal.is_trading_day(self.date) {
                self.date = self.date.succ_opt()?;
            }
        }
        let m = self.minutes[self.idx];
        self.idx += 1;
        let t = NaiveTime::from_hms_opt(u32::from(m) / 60, u32::from(m) % 60, 0)?;
        Some(self.date.and_time(t))
    }
}

fn parse_minute(s: &str) -> Result<u16> {
    let (h, m) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("bad time '{s}'")))?;
    let h: u16 = h
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad time '{s}'")))?;
    let m: u16 = m
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad time '{s}'")))?;
    if h > 24 || m >= 60 {
        return Err(Error::InvalidArgument(format!("bad time '{s}'")));
    }
    Ok(h * 60 + m)
}

fn fmt_minute(m: u16) -> String {
    format!("{:02}:{:02}", m / 60, m % 60)
}

/// An ordered price series; after stitching, record position is the tick index
/// on the gap-free trading-minute axis.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    records: Vec<PriceRecord>,
    /// In-session minutes represented by one tick (1 for raw minute data,
    /// `step` after [`resample`]).
    tick_minutes: u32,
}

impl PriceSeries {
    /// Wrap records that are already on a stitched axis (strictly increasing
    /// timestamps, one per trading minute).
    pub fn from_stitched(records: Vec<PriceRecord>, tick_minutes: u32) -> Self {
        Self {
            records,
            tick_minutes,
        }
    }

    /// Build from unordered records, sorting and rejecting duplicates.
    pub fn from_records(mut records: Vec<PriceRecord>) -> Result<Self> {
        records.sort_by_key(|r| r.timestamp);
        for w in records.windows(2) {
            if w[0].timestamp >= w[1].timestamp {
                return Err(Error::InvalidArgument(format!(
                    "duplicate timestamp {}",
                    w[1].timestamp
                )));
            }
        }
        Ok(Self {
            records,
            tick_minutes: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PriceRecord] {
        &self.records
    }

    pub fn prices(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.price).collect()
    }

    pub fn tick_minutes(&self) -> u32 {
        self.tick_minutes
    }
}

/// Which column holds a field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl ColumnSelector {
    fn resolve(&self, headers: Option<&csv::StringRecord>) -> Result<usize> {
        match self {
            ColumnSelector::Index(i) => Ok(*i),
            ColumnSelector::Name(name) => {
                let headers = headers.ok_or_else(|| {
                    Error::Ingestion(format!(
                        "column '{name}' selected by name but the file has no header row"
                    ))
                })?;
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| Error::Ingestion(format!("no column named '{name}'")))
            }
        }
    }
}

/// Column mapping and parse options for delimited price files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub delimiter: u8,
    pub has_headers: bool,
    pub timestamp: ColumnSelector,
    pub price: ColumnSelector,
    /// strftime-style format for the timestamp column.
    pub datetime_format: String,
    /// Fraction of unparseable rows tolerated before ingestion fails.
    pub malformed_tolerance: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_headers: true,
            timestamp: ColumnSelector::Name("timestamp".into()),
            price: ColumnSelector::Name("price".into()),
            datetime_format: "%Y-%m-%d %H:%M".into(),
            malformed_tolerance: 0.0,
        }
    }
}

/// Row accounting from [`load_csv`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub malformed: usize,
    /// Rows dropped because the price was non-positive or non-finite.
    pub rejected_nonpositive: usize,
    /// Rows overwritten by a later record with the same minute.
    pub collapsed_duplicates: usize,
}

/// Parse a delimited byte stream into a timestamp-sorted series.
///
/// Duplicate minutes collapse to the last occurrence in file order; rows with
/// non-positive prices are rejected and counted. Unparseable rows are counted
/// and ingestion fails when they exceed `schema.malformed_tolerance`.
pub fn load_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<(PriceSeries, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_headers)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(source);

    let headers = if schema.has_headers {
        Some(
            reader
                .headers()
                .map_err(|e| Error::Ingestion(format!("cannot read header row: {e}")))?
                .clone(),
        )
    } else {
        None
    };
    let ts_col = schema.timestamp.resolve(headers.as_ref())?;
    let price_col = schema.price.resolve(headers.as_ref())?;

    let mut report = LoadReport::default();
    let mut rows: Vec<(NaiveDateTime, f64, usize)> = Vec::new();
    let mut first_error: Option<String> = None;

    for (row_no, record) in reader.records().enumerate() {
        report.rows_read += 1;
        let mut malformed = |err: String, first_error: &mut Option<String>| {
            report.malformed += 1;
            first_error.get_or_insert(format!("row {}: {err}", row_no + 1));
        };
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                malformed(e.to_string(), &mut first_error);
                continue;
            }
        };
        let (ts_field, price_field) = match (record.get(ts_col), record.get(price_col)) {
            (Some(t), Some(p)) => (t, p),
            _ => {
                malformed("missing column".into(), &mut first_error);
                continue;
            }
        };
        let ts = match NaiveDateTime::parse_from_str(ts_field.trim(), &schema.datetime_format) {
            Ok(t) => t,
            Err(e) => {
                malformed(format!("bad timestamp '{ts_field}': {e}"), &mut first_error);
                continue;
            }
        };
        let price: f64 = match price_field.trim().parse() {
            Ok(p) => p,
            Err(e) => {
                malformed(format!("bad price '{price_field}': {e}"), &mut first_error);
                continue;
            }
        };
        if !price.is_finite() || price <= 0.0 {
            report.rejected_nonpositive += 1;
            continue;
        }
        let ts = PriceRecord::new(ts, price)?.timestamp;
        rows.push((ts, price, row_no));
    }

    if report.rows_read > 0 {
        let frac = report.malformed as f64 / report.rows_read as f64;
        if report.malformed > 0 && frac > schema.malformed_tolerance {
            return Err(Error::Ingestion(format!(
                "{} of {} rows malformed (tolerance {}); first: {}",
                report.malformed,
                report.rows_read,
                schema.malformed_tolerance,
                first_error.unwrap_or_default()
            )));
        }
    }

    // Sort by timestamp, then keep the record that appeared last in the file
    // for each minute (exchange snapshots overwrite).
    rows.sort_by_key(|&(ts, _, row_no)| (ts, row_no));
    let mut records: Vec<PriceRecord> = Vec::with_capacity(rows.len());
    for (ts, price, _) in rows {
        if records.last().map(|r| r.timestamp) == Some(ts) {
            records.pop();
            report.collapsed_duplicates += 1;
        }
        records.push(PriceRecord {
            timestamp: ts,
            price,
        });
    }

    if records.is_empty() {
        return Err(Error::Ingestion("no valid rows in input".into()));
    }
    Ok((
        PriceSeries {
            records,
            tick_minutes: 1,
        },
        report,
    ))
}

/// What to do with in-session minutes that have no record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Carry the previous price forward, keeping the axis gap-free.
    ForwardFill,
    /// Drop the minute from the axis.
    Drop,
}

/// Minute accounting from [`stitch_sessions`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchReport {
    /// Records outside any calendar session (including non-trading days).
    pub excluded_off_session: usize,
    /// Minutes synthesized by forward fill.
    pub filled_minutes: usize,
    /// Minutes dropped under [`MissingPolicy::Drop`].
    pub dropped_minutes: usize,
    /// Calendar trading days inside the data span with no in-session record;
    /// treated as non-trading and skipped.
    pub skipped_days: usize,
    /// Leading minutes on the first day before any price was seen.
    pub leading_dropped: usize,
}

/// Stitch raw records onto the gap-free trading-minute axis with forward fill.
pub fn stitch_sessions(
    raw: &PriceSeries,
    cal: &TradingCalendar,
) -> Result<(PriceSeries, StitchReport)> {
    stitch_sessions_with(raw, cal, MissingPolicy::ForwardFill)
}

/// [`stitch_sessions`] with an explicit missing-minute policy.
pub fn stitch_sessions_with(
    raw: &PriceSeries,
    cal: &TradingCalendar,
    policy: MissingPolicy,
) -> Result<(PriceSeries, StitchReport)> {
    for w in raw.records.windows(2) {
        if w[0].timestamp >= w[1].timestamp {
            return Err(Error::InvalidArgument(format!(
                "records not strictly increasing at {}",
                w[1].timestamp
            )));
        }
    }

    let mut report = StitchReport::default();
    let mut by_day: BTreeMap<NaiveDate, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in &raw.records {
        if cal.in_session(r.timestamp) {
            let m = r.timestamp.time().hour() * 60 + r.timestamp.time().minute();
            by_day
                .entry(r.timestamp.date())
                .or_default()
                .insert(m, r.price);
        } else {
            report.excluded_off_session += 1;
        }
    }
    if by_day.is_empty() {
        return Err(Error::Ingestion(
            "no records fall inside a calendar session".into(),
        ));
    }

    // Trading days inside the span but absent from the data are skipped, not
    // fabricated: a weekday missing from the holiday file would otherwise
    // inject a full day of flat forward-filled prices.
    let first = *by_day.keys().next().expect("non-empty");
    let last = *by_day.keys().next_back().expect("non-empty");
    let mut day = first;
    while day <= last {
        if cal.is_trading_day(day) && !by_day.contains_key(&day) {
            report.skipped_days += 1;
        }
        day = day.succ_opt().expect("date range is sane");
    }

    // The stitched axis runs from the first to the last observed in-session
    // minute; trailing minutes are not fabricated.
    let (last_day, last_day_minutes) = by_day.iter().next_back().expect("non-empty");
    let end_ts = last_day.and_time(
        NaiveTime::from_hms_opt(
            last_day_minutes.keys().next_back().expect("non-empty") / 60,
            last_day_minutes.keys().next_back().expect("non-empty") % 60,
            0,
        )
        .expect("valid session minute"),
    );

    let day_minutes = cal.day_minutes();
    let mut records = Vec::new();
    let mut last_price: Option<f64> = None;
    for (day, minutes) in &by_day {
        for &m in &day_minutes {
            let ts = day.and_time(
                NaiveTime::from_hms_opt(u32::from(m) / 60, u32::from(m) % 60, 0)
                    .expect("valid session minute"),
            );
            if ts > end_ts {
                break;
            }
            match minutes.get(&u32::from(m)) {
                Some(&price) => {
                    records.push(PriceRecord {
                        timestamp: ts,
                        price,
                    });
                    last_price = Some(price);
                }
                None => match (policy, last_price) {
                    (MissingPolicy::ForwardFill, Some(price)) => {
                        records.push(PriceRecord {
                            timestamp: ts,
                            price,
                        });
                        report.filled_minutes += 1;
                    }
                    (MissingPolicy::ForwardFill, None) => report.leading_dropped += 1,
                    (MissingPolicy::Drop, _) => report.dropped_minutes += 1,
                },
            }
        }
    }

    Ok((
        PriceSeries {
            records,
            tick_minutes: raw.tick_minutes,
        },
        report,
    ))
}

/// Keep every `step`-th tick starting from the first; the result has
/// `ceil(len / step)` ticks, each spanning `step` times as many minutes.
pub fn resample(s: &PriceSeries, step: u32) -> Result<PriceSeries> {
    if step < 1 {
        return Err(Error::InvalidArgument("resample step must be >= 1".into()));
    }
    let records = s.records.iter().step_by(step as usize).copied().collect();
    Ok(PriceSeries {
        records,
        tick_minutes: s.tick_minutes * step,
    })
}
