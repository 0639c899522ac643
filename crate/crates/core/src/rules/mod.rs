//! Diagnostic rules over trend data and the binary rule signals they produce.

mod expr;

pub use expr::{parse_expression, CmpOp, Expr, Operand, ParseError, ParseErrorKind};

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{SampledSignal, Sampling};

pub const DEFAULT_EQ_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("rule '{rule_id}': {source}")]
    Parse {
        rule_id: String,
        #[source]
        source: ParseError,
    },
    #[error("duplicate rule id '{0}'")]
    DuplicateRuleId(String),
    #[error("rule '{rule_id}': {message}")]
    InvalidRule { rule_id: String, message: String },
    #[error("rule '{rule_id}' references missing point '{point}'")]
    MissingPoint { rule_id: String, point: String },
    #[error("rule '{rule_id}': point '{point}' is sampled differently from '{reference}'")]
    SamplingMismatch {
        rule_id: String,
        point: String,
        reference: String,
    },
    #[error("rule file: {0}")]
    File(String),
    #[error("invalid series '{id}': {message}")]
    InvalidSeries { id: String, message: String },
}

/// Uniformly sampled real-valued point history.
///
/// `NaN` marks a missing sample. Ingested series never contain one; series
/// built in code may, and rule evaluation treats those samples as gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendSeries {
    point_id: String,
    sampling: Sampling,
    values: Vec<f64>,
    unit: Option<String>,
}

impl TrendSeries {
    pub fn new(
        point_id: impl Into<String>,
        sampling: Sampling,
        values: Vec<f64>,
    ) -> Result<Self, RuleError> {
        let point_id = point_id.into();
        if values.len() != sampling.n_samples() {
            return Err(RuleError::InvalidSeries {
                id: point_id,
                message: format!(
                    "{} values for a sampling of {}",
                    values.len(),
                    sampling.n_samples()
                ),
            });
        }
        Ok(Self {
            point_id,
            sampling,
            values,
            unit: None,
        })
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn point_id(&self) -> &str {
        &self.point_id
    }

    pub fn unit(&self) -> Option<&str> {
        self.unit.as_deref()
    }
}

impl SampledSignal for TrendSeries {
    fn signal_id(&self) -> &str {
        &self.point_id
    }
    fn sampling(&self) -> &Sampling {
        &self.sampling
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Binary output of one rule, 1.0 where the condition holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSignal {
    rule_id: String,
    zone_id: String,
    sampling: Sampling,
    values: Vec<f64>,
}

impl RuleSignal {
    pub fn new(
        rule_id: impl Into<String>,
        zone_id: impl Into<String>,
        sampling: Sampling,
        values: Vec<f64>,
    ) -> Result<Self, RuleError> {
        let rule_id = rule_id.into();
        if values.len() != sampling.n_samples() {
            return Err(RuleError::InvalidSeries {
                id: rule_id,
                message: format!(
                    "{} values for a sampling of {}",
                    values.len(),
                    sampling.n_samples()
                ),
            });
        }
        if let Some(bad) = values.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(RuleError::InvalidSeries {
                id: rule_id,
                message: format!("rule signal values must be 0 or 1, found {bad}"),
            });
        }
        Ok(Self {
            rule_id,
            zone_id: zone_id.into(),
            sampling,
            values,
        })
    }

    pub(crate) fn from_bools(
        rule_id: &str,
        zone_id: &str,
        sampling: Sampling,
        bits: impl IntoIterator<Item = bool>,
    ) -> Self {
        Self {
            rule_id: rule_id.to_string(),
            zone_id: zone_id.to_string(),
            sampling,
            values: bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn rule_id(&self) -> &str {
        &self.rule_id
    }

    pub fn zone_id(&self) -> &str {
        &self.zone_id
    }

    /// Same samples under different identifiers.
    pub fn relabeled(&self, rule_id: impl Into<String>, zone_id: impl Into<String>) -> Self {
        Self {
            rule_id: rule_id.into(),
            zone_id: zone_id.into(),
            ..self.clone()
        }
    }

    /// Number of samples at 1.
    pub fn true_count(&self) -> usize {
        self.values.iter().filter(|v| **v == 1.0).count()
    }
}

impl SampledSignal for RuleSignal {
    fn signal_id(&self) -> &str {
        &self.rule_id
    }
    fn sampling(&self) -> &Sampling {
        &self.sampling
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One record of the JSON rule file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleRecord {
    pub rule_id: String,
    pub zone_id: String,
    pub expression: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_duration_samples: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eq_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRule {
    pub rule_id: String,
    pub zone_id: String,
    pub expression: Expr,
    /// True runs shorter than this many samples are suppressed.
    pub min_duration_samples: Option<usize>,
    pub eq_tolerance: f64,
}

impl DiagnosticRule {
    pub fn points(&self) -> BTreeSet<String> {
        self.expression.points()
    }
}

pub fn parse_rule(record: &RuleRecord) -> Result<DiagnosticRule, RuleError> {
    let invalid = |message: String| RuleError::InvalidRule {
        rule_id: record.rule_id.clone(),
        message,
    };
    if record.rule_id.trim().is_empty() {
        return Err(invalid("rule_id must not be empty".into()));
    }
    let expression = parse_expression(&record.expression).map_err(|source| RuleError::Parse {
        rule_id: record.rule_id.clone(),
        source,
    })?;
    if expression.points().is_empty() {
        return Err(invalid("expression references no points".into()));
    }
    let min_duration_samples = match record.min_duration_samples {
        None => None,
        Some(d) if d >= 1 => Some(d as usize),
        Some(d) => return Err(invalid(format!("min_duration_samples must be >= 1, got {d}"))),
    };
    let eq_tolerance = match record.eq_tolerance {
        None => DEFAULT_EQ_TOLERANCE,
        Some(t) if t.is_finite() && t >= 0.0 => t,
        Some(t) => return Err(invalid(format!("eq_tolerance must be >= 0, got {t}"))),
    };
    Ok(DiagnosticRule {
        rule_id: record.rule_id.clone(),
        zone_id: record.zone_id.clone(),
        expression,
        min_duration_samples,
        eq_tolerance,
    })
}

/// Parses every record, rejecting duplicate rule ids.
pub fn parse_rules(records: &[RuleRecord]) -> Result<Vec<DiagnosticRule>, RuleError> {
    let mut seen = HashSet::new();
    records
        .iter()
        .map(|r| {
            if !seen.insert(r.rule_id.as_str()) {
                return Err(RuleError::DuplicateRuleId(r.rule_id.clone()));
            }
            parse_rule(r)
        })
        .collect()
}

pub fn parse_rule_file(json: &str) -> Result<Vec<DiagnosticRule>, RuleError> {
    let records: Vec<RuleRecord> =
        serde_json::from_str(json).map_err(|e| RuleError::File(e.to_string()))?;
    parse_rules(&records)
}

pub fn load_rule_file(path: &Path) -> Result<Vec<DiagnosticRule>, RuleError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RuleError::File(format!("{}: {e}", path.display())))?;
    parse_rule_file(&text)
}

struct Evaluated {
    signal: RuleSignal,
    gap_samples: usize,
}

fn lookup<'a>(
    rule: &DiagnosticRule,
    index: &HashMap<&str, &'a TrendSeries>,
) -> Result<Vec<&'a TrendSeries>, RuleError> {
    let series = rule
        .points()
        .iter()
        .map(|p| {
            index.get(p.as_str()).copied().ok_or_else(|| RuleError::MissingPoint {
                rule_id: rule.rule_id.clone(),
                point: p.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some((first, rest)) = series.split_first() {
        for s in rest {
            if s.sampling != first.sampling {
                return Err(RuleError::SamplingMismatch {
                    rule_id: rule.rule_id.clone(),
                    point: s.point_id.clone(),
                    reference: first.point_id.clone(),
                });
            }
        }
    }
    Ok(series)
}

fn eval_node(expr: &Expr, index: &HashMap<&str, &TrendSeries>, j: usize, tol: f64) -> bool {
    let value = |o: &Operand| match o {
        Operand::Point(p) => index[p.as_str()].values[j],
        Operand::Constant(c) => *c,
    };
    match expr {
        Expr::Literal(b) => *b,
        Expr::Compare { lhs, op, rhs } => op.apply(value(lhs), value(rhs), tol),
        Expr::Not(e) => !eval_node(e, index, j, tol),
        Expr::And(a, b) => eval_node(a, index, j, tol) && eval_node(b, index, j, tol),
        Expr::Or(a, b) => eval_node(a, index, j, tol) || eval_node(b, index, j, tol),
    }
}

/// Zeroes every run of ones shorter than `min_len`.
pub fn suppress_short_runs(bits: &mut [bool], min_len: usize) {
    let mut j = 0;
    while j < bits.len() {
        if !bits[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j < bits.len() && bits[j] {
            j += 1;
        }
        if j - start < min_len {
            bits[start..j].iter_mut().for_each(|b| *b = false);
        }
    }
}

fn evaluate_indexed(
    rule: &DiagnosticRule,
    index: &HashMap<&str, &TrendSeries>,
) -> Result<Evaluated, RuleError> {
    let series = lookup(rule, index)?;
    let sampling = series[0].sampling;
    let mut gap_samples = 0;
    let mut bits: Vec<bool> = (0..sampling.n_samples())
        .map(|j| {
            if series.iter().any(|s| s.values[j].is_nan()) {
                gap_samples += 1;
                false
            } else {
                eval_node(&rule.expression, index, j, rule.eq_tolerance)
            }
        })
        .collect();
    if let Some(d) = rule.min_duration_samples {
        suppress_short_runs(&mut bits, d);
    }
    Ok(Evaluated {
        signal: RuleSignal::from_bools(&rule.rule_id, &rule.zone_id, sampling, bits),
        gap_samples,
    })
}

fn index_points(points: &[TrendSeries]) -> HashMap<&str, &TrendSeries> {
    points.iter().map(|p| (p.point_id.as_str(), p)).collect()
}

/// Evaluates one rule sample by sample. Samples where any referenced point is
/// missing evaluate to 0.
pub fn evaluate_rule(rule: &DiagnosticRule, points: &[TrendSeries]) -> Result<RuleSignal, RuleError> {
    evaluate_indexed(rule, &index_points(points)).map(|e| e.signal)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub rule_id: String,
    pub gap_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleFailure {
    pub rule_id: String,
    pub error: RuleError,
}

/// Signals of the rules that evaluated, in input order, plus the rules that
/// could not be evaluated against the data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSetEvaluation {
    pub signals: Vec<RuleSignal>,
    pub failures: Vec<RuleFailure>,
    pub gaps: Vec<GapReport>,
}

/// Evaluates a rule batch. Duplicate rule ids fail the batch; data problems
/// of a single rule (missing points, mismatched sampling) are collected in
/// `failures` and the remaining rules are still evaluated.
pub fn evaluate_rule_set(
    rules: &[DiagnosticRule],
    points: &[TrendSeries],
) -> Result<RuleSetEvaluation, RuleError> {
    let mut seen = HashSet::new();
    for r in rules {
        if !seen.insert(r.rule_id.as_str()) {
            return Err(RuleError::DuplicateRuleId(r.rule_id.clone()));
        }
    }
    let index = index_points(points);
    let mut out = RuleSetEvaluation::default();
    for rule in rules {
        match evaluate_indexed(rule, &index) {
            Ok(e) => {
                if e.gap_samples > 0 {
                    out.gaps.push(GapReport {
                        rule_id: rule.rule_id.clone(),
                        gap_samples: e.gap_samples,
                    });
                }
                out.signals.push(e.signal);
            }
            Err(error) => out.failures.push(RuleFailure {
                rule_id: rule.rule_id.clone(),
                error,
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn sampling(n: usize) -> Sampling {
        Sampling::new(1.0, n, Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()).unwrap()
    }

    fn series(id: &str, values: &[f64]) -> TrendSeries {
        TrendSeries::new(id, sampling(values.len()), values.to_vec()).unwrap()
    }

    fn rule(id: &str, expr: &str, min_duration: Option<i64>) -> DiagnosticRule {
        parse_rule(&RuleRecord {
            rule_id: id.into(),
            zone_id: "z1".into(),
            expression: expr.into(),
            min_duration_samples: min_duration,
            eq_tolerance: None,
        })
        .unwrap()
    }

    #[test]
    fn constant_positive_is_all_ones() {
        let sig = evaluate_rule(&rule("r", "x > 0", None), &[series("x", &[1.0; 8])]).unwrap();
        assert_eq!(sig.values(), &[1.0; 8]);
        assert_eq!(sig.zone_id(), "z1");
    }

    #[test]
    fn alternating_input() {
        let x = series("x", &[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let sig = evaluate_rule(&rule("r", "x > 0", None), &[x]).unwrap();
        assert_eq!(sig.values(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn duration_qualifier_drops_short_runs() {
        let x = series("x", &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let sig = evaluate_rule(&rule("r", "x > 0", Some(3)), &[x]).unwrap();
        assert_eq!(sig.values(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn gap_samples_evaluate_to_zero() {
        let x = series("x", &[1.0, f64::NAN, 1.0]);
        let y = series("y", &[-1.0, -1.0, f64::NAN]);
        let r = rule("r", "x > 0 OR NOT y > 0", None);
        let out = evaluate_rule_set(&[r], &[x, y]).unwrap();
        assert_eq!(out.signals[0].values(), &[1.0, 0.0, 0.0]);
        assert_eq!(
            out.gaps,
            vec![GapReport {
                rule_id: "r".into(),
                gap_samples: 2
            }]
        );
    }

    #[test]
    fn point_to_point_comparison() {
        let t = series("zone_temp", &[70.0, 76.0, 75.0]);
        let sp = series("cooling_sp", &[75.0, 75.0, 75.0]);
        let sig = evaluate_rule(&rule("r", "zone_temp >= cooling_sp", None), &[t, sp]).unwrap();
        assert_eq!(sig.values(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn missing_point_isolated_in_batch() {
        let x = series("x", &[1.0, -1.0]);
        let rules = vec![
            rule("ok1", "x > 0", None),
            rule("bad", "nope > 0", None),
            rule("ok2", "x < 0", None),
        ];
        let out = evaluate_rule_set(&rules, &[x]).unwrap();
        let ids: Vec<_> = out.signals.iter().map(|s| s.rule_id()).collect();
        assert_eq!(ids, vec!["ok1", "ok2"]);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].rule_id, "bad");
        assert!(matches!(out.failures[0].error, RuleError::MissingPoint { .. }));
    }

    #[test]
    fn sampling_mismatch_reported() {
        let x = series("x", &[1.0, 2.0, 3.0]);
        let y = series("y", &[1.0, 2.0]);
        let err = evaluate_rule(&rule("r", "x > y", None), &[x, y]).unwrap_err();
        assert!(matches!(err, RuleError::SamplingMismatch { .. }));
    }

    #[test]
    fn empty_rule_list() {
        let out = evaluate_rule_set(&[], &[]).unwrap();
        assert!(out.signals.is_empty() && out.failures.is_empty());
    }

    #[test]
    fn rule_file_parsing_and_errors() {
        let ok = r#"[
            {"rule_id": "a", "zone_id": "z", "expression": "x > 1", "min_duration_samples": 2},
            {"rule_id": "b", "zone_id": "z", "expression": "x = 1", "eq_tolerance": 0.5}
        ]"#;
        let rules = parse_rule_file(ok).unwrap();
        assert_eq!(rules[0].min_duration_samples, Some(2));
        assert_eq!(rules[1].eq_tolerance, 0.5);
        assert_eq!(rules[0].eq_tolerance, DEFAULT_EQ_TOLERANCE);

        let dup = r#"[{"rule_id": "a", "zone_id": "z", "expression": "x > 1"},
                      {"rule_id": "a", "zone_id": "z", "expression": "x > 2"}]"#;
        assert_eq!(
            parse_rule_file(dup).unwrap_err(),
            RuleError::DuplicateRuleId("a".into())
        );
        let zero = r#"[{"rule_id": "a", "zone_id": "z", "expression": "x > 1", "min_duration_samples": 0}]"#;
        assert!(matches!(parse_rule_file(zero), Err(RuleError::InvalidRule { .. })));
        let syntax = r#"[{"rule_id": "a", "zone_id": "z", "expression": "x >"}]"#;
        match parse_rule_file(syntax).unwrap_err() {
            RuleError::Parse { rule_id, source } => {
                assert_eq!(rule_id, "a");
                assert_eq!(source.token, 3);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_rule_file("{"), Err(RuleError::File(_))));
        let no_points = r#"[{"rule_id": "a", "zone_id": "z", "expression": "1 > 0"}]"#;
        assert!(parse_rule_file(no_points).is_err());
    }

    #[test]
    fn rule_signal_rejects_non_binary() {
        assert!(RuleSignal::new("r", "z", sampling(3), vec![0.0, 0.5, 1.0]).is_err());
        assert!(RuleSignal::new("r", "z", sampling(3), vec![0.0, 1.0]).is_err());
    }
}
