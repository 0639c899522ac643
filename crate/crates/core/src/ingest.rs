//! Trend CSV ingestion onto a uniform grid.
//!
//! Input rows are `timestamp,point_id,value` (long layout). Timestamps are
//! ISO-8601: with an explicit offset they denote that instant, without one
//! they are read as wall-clock time in the configured timezone. Every
//! instant is converted to local wall-clock time before being snapped to the
//! nearest grid instant, so daily and weekly periods follow local days.
//!
//! Gap handling, per point: a gap is the time between two consecutive
//! observed grid instants. Gaps no longer than `max_gap_hours` are filled
//! (`hold_last` repeats the earlier value, `linear` interpolates, `fail`
//! holds the earlier value). Longer gaps, and grid instants before the
//! point's first or after its last observation, are unfillable: under
//! `fail` the point is rejected, otherwise the point is truncated to its
//! longest gap-free run.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveDateTime, NaiveTime, TimeZone, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formats::{format_timestamp, TREND_HEADER};
use crate::rules::TrendSeries;
use crate::spectral::Sampling;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("trend file is empty")]
    Empty,
    #[error("trend header must be 'timestamp,point_id,value', found '{0}'")]
    Header(String),
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("line {line}: cannot parse timestamp '{value}'")]
    Timestamp { line: u64, value: String },
    #[error("invalid ingest config: {0}")]
    Config(String),
    #[error("point '{point}': gap of {hours}h from {from} to {to} exceeds max_gap_hours")]
    Gap {
        point: String,
        from: String,
        to: String,
        hours: f64,
    },
    #[error("point '{point}': {message}")]
    Coverage { point: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    HoldLast,
    Linear,
    Fail,
}

impl std::str::FromStr for GapPolicy {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hold_last" => Ok(GapPolicy::HoldLast),
            "linear" => Ok(GapPolicy::Linear),
            "fail" => Ok(GapPolicy::Fail),
            other => Err(IngestError::Config(format!(
                "unknown gap policy '{other}' (expected hold_last, linear or fail)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub interval_hours: f64,
    pub gap_policy: GapPolicy,
    pub max_gap_hours: f64,
    /// IANA timezone name.
    pub timezone: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            interval_hours: 1.0,
            gap_policy: GapPolicy::HoldLast,
            max_gap_hours: 4.0,
            timezone: "UTC".into(),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<Tz, IngestError> {
        if !(self.interval_hours.is_finite() && self.interval_hours > 0.0) {
            return Err(IngestError::Config(format!(
                "interval_hours must be > 0, got {}",
                self.interval_hours
            )));
        }
        if !(self.max_gap_hours >= self.interval_hours) {
            return Err(IngestError::Config(format!(
                "max_gap_hours ({}) must be >= interval_hours ({})",
                self.max_gap_hours, self.interval_hours
            )));
        }
        self.timezone
            .parse::<Tz>()
            .map_err(|_| IngestError::Config(format!("unknown timezone '{}'", self.timezone)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointError {
    pub point_id: String,
    pub error: IngestError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestOutcome {
    /// One series per accepted point, sorted by point id.
    pub series: Vec<TrendSeries>,
    pub warnings: Vec<String>,
    pub point_errors: Vec<PointError>,
}

const NAIVE_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Parses an ISO-8601 timestamp to local wall-clock time in `tz`.
fn parse_local(value: &str, tz: &Tz) -> Option<NaiveDateTime> {
    let value = value.trim();
    if let Ok(dt) = DateTime::<FixedOffset>::parse_from_rfc3339(value) {
        return Some(dt.with_timezone(tz).naive_local());
    }
    let naive = NAIVE_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(value, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(value, "%Y-%m-%d")
                .ok()
                .map(|d| d.and_time(NaiveTime::MIN))
        })?;
    // reject wall-clock times skipped by a DST transition
    tz.from_local_datetime(&naive).earliest()?;
    Some(naive)
}

struct Observation {
    local: NaiveDateTime,
    point: String,
    value: Option<f64>,
}

fn read_rows<R: Read>(reader: R, tz: &Tz) -> Result<Vec<Observation>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(IngestError::Empty),
        Some(r) => r.map_err(|e| IngestError::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?,
    };
    let header_fields: Vec<&str> = header.iter().collect();
    if header_fields != TREND_HEADER {
        return Err(IngestError::Header(header_fields.join(",")));
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| IngestError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 3 {
            return Err(IngestError::MalformedRow {
                line,
                message: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let local = parse_local(&rec[0], tz).ok_or_else(|| IngestError::Timestamp {
            line,
            value: rec[0].to_string(),
        })?;
        if rec[1].is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                message: "empty point_id".into(),
            });
        }
        let raw = &rec[2];
        let value = if raw.is_empty() {
            None
        } else {
            let v: f64 = raw.parse().map_err(|_| IngestError::MalformedRow {
                line,
                message: format!("cannot parse value '{raw}'"),
            })?;
            v.is_finite().then_some(v)
        };
        out.push(Observation {
            local,
            point: rec[1].to_string(),
            value,
        });
    }
    if out.is_empty() {
        return Err(IngestError::Empty);
    }
    Ok(out)
}

fn hours_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    (b - a).num_milliseconds() as f64 / 3_600_000.0
}

/// Grid origin: the earliest local instant floored to a whole number of
/// intervals after its local midnight.
fn grid_origin(earliest: NaiveDateTime, interval_hours: f64) -> NaiveDateTime {
    let midnight = earliest.date().and_time(NaiveTime::MIN);
    let steps = (hours_between(midnight, earliest) / interval_hours + 1e-9).floor();
    midnight + chrono::Duration::milliseconds((steps * interval_hours * 3_600_000.0).round() as i64)
}

struct Grid {
    tz: Tz,
    origin: NaiveDateTime,
    interval_hours: f64,
}

impl Grid {
    fn local_at(&self, index: usize) -> NaiveDateTime {
        self.origin
            + chrono::Duration::milliseconds(
                (index as f64 * self.interval_hours * 3_600_000.0).round() as i64,
            )
    }

    fn utc_at(&self, index: usize) -> DateTime<Utc> {
        let local = self.local_at(index);
        match self.tz.from_local_datetime(&local).earliest() {
            Some(t) => t.with_timezone(&Utc),
            // grid instant inside a DST gap: take the wall clock as UTC offset-free
            None => Utc.from_utc_datetime(&local),
        }
    }

    fn label(&self, index: usize) -> String {
        format_timestamp(&self.utc_at(index))
    }
}

fn fill_point(
    point: &str,
    slots: &mut [Option<f64>],
    grid: &Grid,
    config: &IngestConfig,
    warnings: &mut Vec<String>,
) -> Result<(), IngestError> {
    let observed: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].is_some()).collect();
    for w in observed.windows(2) {
        let (i0, i1) = (w[0], w[1]);
        if i1 - i0 < 2 {
            continue;
        }
        let hours = (i1 - i0) as f64 * config.interval_hours;
        if hours > config.max_gap_hours + 1e-9 {
            if config.gap_policy == GapPolicy::Fail {
                return Err(IngestError::Gap {
                    point: point.to_string(),
                    from: grid.label(i0),
                    to: grid.label(i1),
                    hours,
                });
            }
            continue;
        }
        let (v0, v1) = (slots[i0].unwrap(), slots[i1].unwrap());
        for i in (i0 + 1)..i1 {
            slots[i] = Some(match config.gap_policy {
                GapPolicy::Linear => v0 + (v1 - v0) * (i - i0) as f64 / (i1 - i0) as f64,
                GapPolicy::HoldLast | GapPolicy::Fail => v0,
            });
        }
        warnings.push(format!(
            "point '{point}': filled {} missing sample(s) between {} and {} ({:?})",
            i1 - i0 - 1,
            grid.label(i0),
            grid.label(i1),
            config.gap_policy
        ));
    }
    if config.gap_policy == GapPolicy::Fail && slots.iter().any(Option::is_none) {
        let first = observed.first().copied().unwrap_or(0);
        let last = observed.last().copied().unwrap_or(0);
        return Err(IngestError::Coverage {
            point: point.to_string(),
            message: format!(
                "observed only from {} to {}, grid spans {} to {}",
                grid.label(first),
                grid.label(last),
                grid.label(0),
                grid.label(slots.len() - 1)
            ),
        });
    }
    Ok(())
}

/// Longest run of present samples; earliest wins ties.
fn longest_run(slots: &[Option<f64>]) -> (usize, usize) {
    let (mut best, mut start) = ((0, 0), None);
    for i in 0..=slots.len() {
        match (slots.get(i).is_some_and(Option::is_some), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 {
                    best = (s, i - s);
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

pub fn ingest_trend_reader<R: Read>(reader: R, config: &IngestConfig) -> Result<IngestOutcome, IngestError> {
    let tz = config.validate()?;
    let rows = read_rows(reader, &tz)?;
    let earliest = rows.iter().map(|r| r.local).min().expect("non-empty rows");
    let grid = Grid {
        tz,
        origin: grid_origin(earliest, config.interval_hours),
        interval_hours: config.interval_hours,
    };

    let mut per_point: BTreeMap<String, BTreeMap<usize, Option<f64>>> = BTreeMap::new();
    let mut duplicates: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut n = 0;
    for r in &rows {
        let index = (hours_between(grid.origin, r.local) / config.interval_hours).round() as usize;
        n = n.max(index + 1);
        let slots = per_point.entry(r.point.clone()).or_default();
        if slots.insert(index, r.value).is_some() {
            let d = duplicates.entry(r.point.clone()).or_insert((0, index));
            d.0 += 1;
        }
    }

    let mut out = IngestOutcome::default();
    for (point, (count, first)) in &duplicates {
        out.warnings.push(format!(
            "point '{point}': {count} duplicate sample(s) on the grid (first at {}); last value kept",
            grid.label(*first)
        ));
    }
    for (point, observed) in per_point {
        let mut slots = vec![None; n];
        for (i, v) in observed {
            slots[i] = v;
        }
        if let Err(error) = fill_point(&point, &mut slots, &grid, config, &mut out.warnings) {
            out.point_errors.push(PointError {
                point_id: point,
                error,
            });
            continue;
        }
        let (start, len) = longest_run(&slots);
        if len < 2 {
            out.point_errors.push(PointError {
                point_id: point.clone(),
                error: IngestError::Coverage {
                    point,
                    message: "fewer than 2 consecutive grid samples".into(),
                },
            });
            continue;
        }
        if len < n {
            out.warnings.push(format!(
                "point '{point}': truncated to its longest gap-free run, {} to {} ({len} of {n} samples)",
                grid.label(start),
                grid.label(start + len - 1)
            ));
        }
        let sampling = Sampling::new(config.interval_hours, len, grid.utc_at(start))
            .expect("validated interval and len >= 2");
        let values = slots[start..start + len].iter().map(|v| v.unwrap()).collect();
        out.series.push(TrendSeries::new(point, sampling, values).expect("length matches sampling"));
    }
    Ok(out)
}

pub fn ingest_trend_csv(path: &Path, config: &IngestConfig) -> Result<IngestOutcome, IngestError> {
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ingest_trend_reader(std::io::BufReader::new(file), config)
}
