//! CSV layouts shared by the CLI stages.
//!
//! Trend CSV: `timestamp,point_id,value`. Rule-signal CSV:
//! `timestamp,rule_id,zone_id,value` with values `0` or `1`. Timestamps are
//! written as RFC 3339 UTC (`2024-01-01T00:00:00Z`) and values with Rust's
//! shortest round-trip float formatting, so a written series reads back
//! bit-exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::rules::{RuleSignal, TrendSeries};
use crate::spectral::{SampledSignal, Sampling};

pub const TREND_HEADER: [&str; 3] = ["timestamp", "point_id", "value"];
pub const RULE_SIGNAL_HEADER: [&str; 4] = ["timestamp", "rule_id", "zone_id", "value"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("rule-signal header must be 'timestamp,rule_id,zone_id,value', found '{0}'")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("signal '{id}': {message}")]
    Signal { id: String, message: String },
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn write_trend_csv<W: Write>(series: &[TrendSeries], writer: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TREND_HEADER)?;
    for s in series {
        for (j, v) in s.values().iter().enumerate() {
            let value = if v.is_nan() { String::new() } else { v.to_string() };
            w.write_record([
                format_timestamp(&s.sampling().time_at(j)),
                s.point_id().to_string(),
                value,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rule_signals_csv<W: Write>(signals: &[RuleSignal], writer: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RULE_SIGNAL_HEADER)?;
    for s in signals {
        for (j, v) in s.values().iter().enumerate() {
            w.write_record([
                format_timestamp(&s.sampling().time_at(j)),
                s.rule_id().to_string(),
                s.zone_id().to_string(),
                if *v == 1.0 { "1".into() } else { "0".into() },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rule signals back, in order of first appearance. Each signal's
/// timestamps must be strictly increasing with a constant step.
pub fn read_rule_signals_csv<R: Read>(reader: R) -> Result<Vec<RuleSignal>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RULE_SIGNAL_HEADER {
        return Err(FormatError::Header(header.join(",")));
    }
    struct Acc {
        zone: String,
        times: Vec<DateTime<Utc>>,
        values: Vec<f64>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row_err = |message: String| FormatError::Row { line, message };
        let t = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|_| row_err(format!("cannot parse timestamp '{}'", &rec[0])))?
            .with_timezone(&Utc);
        let value = match &rec[3] {
            "0" => 0.0,
            "1" => 1.0,
            other => return Err(row_err(format!("rule-signal value must be 0 or 1, got '{other}'"))),
        };
        let id = rec[1].to_string();
        let entry = acc.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Acc {
                zone: rec[2].to_string(),
                times: Vec::new(),
                values: Vec::new(),
            }
        });
        if entry.zone != rec[2] {
            return Err(row_err(format!("signal '{id}' changes zone to '{}'", &rec[2])));
        }
        entry.times.push(t);
        entry.values.push(value);
    }
    order
        .into_iter()
        .map(|id| {
            let a = acc.remove(&id).expect("accumulated");
            let sig_err = |message: String| FormatError::Signal {
                id: id.clone(),
                message,
            };
            if a.times.len() < 2 {
                return Err(sig_err("needs at least 2 samples".into()));
            }
            let step = a.times[1] - a.times[0];
            if step <= chrono::Duration::zero() {
                return Err(sig_err("timestamps must increase".into()));
            }
            if let Some(w) = a.times.windows(2).find(|w| w[1] - w[0] != step) {
                return Err(sig_err(format!(
                    "non-uniform sampling at {}",
                    format_timestamp(&w[1])
                )));
            }
            let interval = step.num_milliseconds() as f64 / 3_600_000.0;
            let sampling = Sampling::new(interval, a.values.len(), a.times[0])
                .map_err(|e| sig_err(e.to_string()))?;
            RuleSignal::new(id.clone(), a.zone, sampling, a.values).map_err(|e| sig_err(e.to_string()))
        })
        .collect()
}
