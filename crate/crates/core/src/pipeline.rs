//! End-to-end analysis: trend CSV and rules to rule signals, modes, spectra,
//! coincidence, groups and per-zone spatial maps, plus a run manifest.
//!
//! Every output is rendered in memory before anything is written, and no
//! output depends on wall-clock time or on the output location, so two runs
//! over the same inputs and config produce byte-identical directories.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coincidence::{coincidence_matrix_from_modes, group_by_coincidence, CoincidenceGroup, CoincidenceMatrix};
use crate::formats::write_rule_signals_csv;
use crate::ingest::{ingest_trend_reader, IngestConfig};
use crate::rules::{evaluate_rule_set, parse_rule_file, RuleSignal};
use crate::spatial::{
    aggregate_by_tag, project_modes, systemic_extent, zone_mode_table, BuildingTopology, TagAggregate, ZoneModeMap,
};
use crate::spectral::{
    compute_mode_set, dominant_period, energy_spectrum, Frequency, FrequencySet, ModeSet, Sampling,
};

pub const TOOL_NAME: &str = "kmfdd";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output files of a full run, in write order. The manifest comes last.
pub const OUTPUT_FILES: [&str; 8] = [
    "rule_signals.csv",
    "mode_sets.json",
    "spectra.csv",
    "coincidence.csv",
    "groups.json",
    "zone_modes.csv",
    "extent.json",
    "run_manifest.json",
];

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &'static str, message: impl ToString) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

fn stage<T, E: ToString>(name: &'static str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::new(name, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Frequencies decomposed and reported in spectra.
    pub frequency_set: FrequencySet,
    /// Frequencies entering pairwise coincidence.
    pub coincidence_frequencies: FrequencySet,
    /// Frequency of the per-zone spatial map.
    pub spatial_frequency: Frequency,
    /// Single-linkage threshold, in `(0, 1]`.
    pub coincidence_threshold: f64,
    /// Minimum zone magnitude counted in the systemic extent, `>= 0`.
    pub magnitude_threshold: f64,
    pub ingest: IngestConfig,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            frequency_set: FrequencySet::analysis_default(),
            coincidence_frequencies: FrequencySet::comparison_default(),
            spatial_frequency: Frequency::Period(24.0),
            coincidence_threshold: 0.8,
            magnitude_threshold: 0.05,
            ingest: IngestConfig::default(),
            output_dir: PathBuf::from("kmfdd-out"),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.coincidence_threshold > 0.0 && self.coincidence_threshold <= 1.0) {
            return Err(PipelineError::new(
                "config",
                format!("coincidence_threshold must be in (0, 1], got {}", self.coincidence_threshold),
            ));
        }
        if !(self.magnitude_threshold >= 0.0 && self.magnitude_threshold.is_finite()) {
            return Err(PipelineError::new(
                "config",
                format!("magnitude_threshold must be >= 0, got {}", self.magnitude_threshold),
            ));
        }
        stage("config", self.ingest.validate().map(|_| ()))
    }
}

/// Serialized view of one mode value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRecord {
    pub frequency: Frequency,
    /// `None` for the mean.
    pub period_hours: Option<f64>,
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
    pub phase_radians: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSetRecord {
    pub signal_id: String,
    pub zone_id: String,
    pub sampling: Sampling,
    /// `None` for an all-zero signal.
    pub dominant_period: Option<Frequency>,
    pub modes: Vec<ModeRecord>,
}

fn finite_period(f: &Frequency) -> Option<f64> {
    (!f.is_mean()).then(|| f.period_hours())
}

/// Highest-energy period, ignoring the mean unless it is the only frequency.
/// `None` for an all-zero mode set.
pub fn dominant(mode_set: &ModeSet) -> Option<Frequency> {
    if mode_set.is_zero() {
        return None;
    }
    dominant_period(mode_set, true)
        .or_else(|_| dominant_period(mode_set, false))
        .ok()
}

pub fn mode_set_record(mode_set: &ModeSet, zone_id: &str) -> ModeSetRecord {
    ModeSetRecord {
        signal_id: mode_set.signal_id.clone(),
        zone_id: zone_id.to_string(),
        sampling: mode_set.sampling,
        dominant_period: dominant(mode_set),
        modes: mode_set
            .modes
            .iter()
            .map(|m| ModeRecord {
                frequency: m.frequency,
                period_hours: finite_period(&m.frequency),
                re: m.value.re,
                im: m.value.im,
                magnitude: m.magnitude(),
                phase_radians: m.phase(),
            })
            .collect(),
    }
}

pub fn decompose_signals(signals: &[RuleSignal], frequencies: &FrequencySet) -> Result<Vec<ModeSet>, PipelineError> {
    signals
        .iter()
        .map(|s| stage("decompose", compute_mode_set(s, frequencies)))
        .collect()
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable output");
    out.push(b'\n');
    out
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `signal_id,frequency,period_hours,magnitude,energy,is_dominant`.
pub fn spectra_csv(mode_sets: &[ModeSet]) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::new("spectrum", e);
    w.write_record(["signal_id", "frequency", "period_hours", "magnitude", "energy", "is_dominant"])
        .map_err(csv_err)?;
    for ms in mode_sets {
        let dom = dominant(ms);
        for (m, e) in ms.modes.iter().zip(stage("spectrum", energy_spectrum(ms))?) {
            w.write_record([
                ms.signal_id.clone(),
                m.frequency.to_string(),
                opt_cell(finite_period(&m.frequency)),
                m.magnitude().to_string(),
                e.energy.to_string(),
                (dom == Some(m.frequency)).to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| PipelineError::new("spectrum", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupsReport {
    pub threshold: f64,
    pub frequencies: FrequencySet,
    pub groups: Vec<CoincidenceGroup>,
}

pub fn coincidence_stage(
    signals: &[RuleSignal],
    frequencies: &FrequencySet,
    threshold: f64,
) -> Result<(CoincidenceMatrix, GroupsReport), PipelineError> {
    let modes = decompose_signals(signals, frequencies)?;
    let matrix = stage("coincidence", coincidence_matrix_from_modes(&modes, frequencies))?;
    let groups = stage("coincidence", group_by_coincidence(&matrix, threshold))?;
    Ok((
        matrix,
        GroupsReport {
            threshold,
            frequencies: frequencies.clone(),
            groups,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtentReport {
    pub frequency: Frequency,
    pub magnitude_threshold: f64,
    /// Connected zones at or above the threshold, largest first.
    pub components: Vec<Vec<String>>,
    /// One aggregate per tag with at least one mapped zone, sorted by tag.
    pub tags: Vec<TagAggregate>,
}

pub fn spatial_stage(
    signals: &[RuleSignal],
    topology: &BuildingTopology,
    frequency: Frequency,
    magnitude_threshold: f64,
) -> Result<(ZoneModeMap, ExtentReport), PipelineError> {
    let map = stage("spatial", project_modes(signals, topology, frequency))?;
    let components = stage("spatial", systemic_extent(&map, topology, magnitude_threshold))?;
    let tags: BTreeSet<&str> = topology
        .zones()
        .iter()
        .flat_map(|z| z.group_tags.iter().map(String::as_str))
        .collect();
    let tags = tags
        .into_iter()
        .filter_map(|t| aggregate_by_tag(&map, topology, t).ok())
        .collect();
    Ok((
        map,
        ExtentReport {
            frequency,
            magnitude_threshold,
            components,
            tags,
        },
    ))
}

/// `zone_id,x,y,magnitude,phase_radians`; undefined cells are empty.
pub fn zone_modes_csv(map: &ZoneModeMap, topology: &BuildingTopology) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::new("spatial", e);
    w.write_record(["zone_id", "x", "y", "magnitude", "phase_radians"])
        .map_err(csv_err)?;
    for row in zone_mode_table(map, topology) {
        w.write_record([
            row.zone_id,
            opt_cell(row.x),
            opt_cell(row.y),
            row.magnitude.to_string(),
            opt_cell(row.phase_radians),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| PipelineError::new("spatial", e.to_string()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub role: String,
    /// File name without directories.
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub inputs: Vec<FileDigest>,
    pub config: AnalysisConfig,
    pub signal_count: usize,
    pub skipped_stages: Vec<String>,
    pub warnings: Vec<String>,
    pub outputs: Vec<FileDigest>,
}

/// What a run wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub output_dir: PathBuf,
    /// Written file names, in write order.
    pub files: Vec<String>,
    pub manifest: RunManifest,
}

struct Input {
    role: &'static str,
    path: PathBuf,
    bytes: Vec<u8>,
}

impl Input {
    fn read(role: &'static str, path: &Path) -> Result<Self, PipelineError> {
        let bytes = fs::read(path).map_err(|e| PipelineError::new("input", format!("{}: {e}", path.display())))?;
        Ok(Self {
            role,
            path: path.to_path_buf(),
            bytes,
        })
    }

    fn text(&self, stage_name: &'static str) -> Result<&str, PipelineError> {
        std::str::from_utf8(&self.bytes)
            .map_err(|e| PipelineError::new(stage_name, format!("{}: {e}", self.path.display())))
    }

    fn digest(&self) -> FileDigest {
        FileDigest {
            role: self.role.to_string(),
            file: self
                .path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            bytes: self.bytes.len(),
            sha256: sha256_hex(&self.bytes),
        }
    }
}

/// Ingests, evaluates and analyzes, then writes every output under
/// `config.output_dir`. Without a topology the spatial stage is skipped and
/// `zone_modes.csv` and `extent.json` are not written.
pub fn run_pipeline(
    trend_path: &Path,
    rules_path: &Path,
    topology_path: Option<&Path>,
    config: &AnalysisConfig,
) -> Result<PipelineReport, PipelineError> {
    config.validate()?;
    let mut inputs = vec![Input::read("trend", trend_path)?, Input::read("rules", rules_path)?];
    if let Some(p) = topology_path {
        inputs.push(Input::read("topology", p)?);
    }
    let mut warnings = Vec::new();
    let mut skipped = Vec::new();

    let ingested = stage("ingest", ingest_trend_reader(inputs[0].bytes.as_slice(), &config.ingest))?;
    warnings.extend(ingested.warnings.iter().map(|w| format!("ingest: {w}")));
    for pe in &ingested.point_errors {
        warnings.push(format!("ingest: point '{}' dropped: {}", pe.point_id, pe.error));
    }

    let rules = stage("rules", parse_rule_file(inputs[1].text("rules")?))?;
    if rules.is_empty() {
        warnings.push("rules: rules file defines no rules; outputs are empty".into());
    }
    let evaluation = stage("rules", evaluate_rule_set(&rules, &ingested.series))?;
    for f in &evaluation.failures {
        warnings.push(format!("rules: rule '{}' skipped: {}", f.rule_id, f.error));
    }
    for g in &evaluation.gaps {
        warnings.push(format!(
            "rules: rule '{}' evaluated to 0 over {} sample(s) with missing data",
            g.rule_id, g.gap_samples
        ));
    }
    let signals = evaluation.signals;

    let topology = match inputs.get(2) {
        Some(input) => Some(stage("spatial", BuildingTopology::from_json(input.text("spatial")?))?),
        None => {
            skipped.push("spatial".to_string());
            warnings.push("spatial: no topology given; stage skipped".into());
            None
        }
    };

    let mut outputs: Vec<(&str, Vec<u8>)> = Vec::new();
    let mut buf = Vec::new();
    stage("rules", write_rule_signals_csv(&signals, &mut buf))?;
    outputs.push(("rule_signals.csv", buf));

    let mode_sets = decompose_signals(&signals, &config.frequency_set)?;
    let records: Vec<ModeSetRecord> = mode_sets
        .iter()
        .zip(&signals)
        .map(|(m, s)| mode_set_record(m, s.zone_id()))
        .collect();
    outputs.push(("mode_sets.json", to_json(&records)));
    outputs.push(("spectra.csv", spectra_csv(&mode_sets)?));

    let (matrix, groups) = coincidence_stage(&signals, &config.coincidence_frequencies, config.coincidence_threshold)?;
    if !matrix.undefined_pairs.is_empty() {
        warnings.push(format!(
            "coincidence: {} pair(s) involve an all-zero mode set and are reported as 0",
            matrix.undefined_pairs.len()
        ));
    }
    outputs.push(("coincidence.csv", matrix.to_csv().into_bytes()));
    outputs.push(("groups.json", to_json(&groups)));

    if let Some(topology) = &topology {
        let (map, extent) = spatial_stage(&signals, topology, config.spatial_frequency, config.magnitude_threshold)?;
        outputs.push(("zone_modes.csv", zone_modes_csv(&map, topology)?));
        outputs.push(("extent.json", to_json(&extent)));
    }

    let manifest = RunManifest {
        tool: TOOL_NAME.to_string(),
        version: TOOL_VERSION.to_string(),
        inputs: inputs.iter().map(Input::digest).collect(),
        config: config.clone(),
        signal_count: signals.len(),
        skipped_stages: skipped,
        warnings,
        outputs: outputs
            .iter()
            .map(|(name, bytes)| FileDigest {
                role: "output".into(),
                file: name.to_string(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
    };
    outputs.push(("run_manifest.json", to_json(&manifest)));

    let dir = &config.output_dir;
    let io_err = |e: std::io::Error| PipelineError::new("output", format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io_err)?;
    for (name, bytes) in &outputs {
        fs::write(dir.join(name), bytes).map_err(io_err)?;
    }
    Ok(PipelineReport {
        output_dir: dir.clone(),
        files: outputs.iter().map(|(n, _)| n.to_string()).collect(),
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::write_trend_csv;
    use crate::synth::figure_bundle;

    fn write_bundle(dir: &Path, with_topology: bool) -> (PathBuf, PathBuf, Option<PathBuf>) {
        let b = figure_bundle().unwrap();
        let trend = dir.join("trend.csv");
        let mut buf = Vec::new();
        write_trend_csv(&b.trend, &mut buf).unwrap();
        fs::write(&trend, buf).unwrap();
        let rules = dir.join("rules.json");
        fs::write(&rules, serde_json::to_vec(&b.rules).unwrap()).unwrap();
        let topo = with_topology.then(|| {
            let p = dir.join("topology.json");
            fs::write(&p, serde_json::to_vec(&b.topology).unwrap()).unwrap();
            p
        });
        (trend, rules, topo)
    }

    fn config(out: PathBuf) -> AnalysisConfig {
        AnalysisConfig {
            output_dir: out,
            ..AnalysisConfig::default()
        }
    }

    #[test]
    fn figure_bundle_spectra_recover_planted_periods() {
        let tmp = tempfile::tempdir().unwrap();
        let (trend, rules, topo) = write_bundle(tmp.path(), true);
        let report = run_pipeline(&trend, &rules, topo.as_deref(), &config(tmp.path().join("out"))).unwrap();
        assert_eq!(report.files, OUTPUT_FILES);
        let spectra = fs::read_to_string(tmp.path().join("out/spectra.csv")).unwrap();
        for (id, period) in [("signal_1", "2h"), ("signal_2", "24h"), ("signal_3", "168h")] {
            let dominant: Vec<&str> = spectra
                .lines()
                .filter(|l| l.starts_with(&format!("{id},")) && l.ends_with(",true"))
                .collect();
            assert_eq!(dominant.len(), 1, "{id}");
            assert_eq!(dominant[0].split(',').nth(1), Some(period), "{id}");
        }
    }

    #[test]
    fn empty_rules_give_empty_outputs_and_warning() {
        let tmp = tempfile::tempdir().unwrap();
        let (trend, _, topo) = write_bundle(tmp.path(), true);
        let rules = tmp.path().join("empty.json");
        fs::write(&rules, "[]").unwrap();
        let out = tmp.path().join("out");
        let report = run_pipeline(&trend, &rules, topo.as_deref(), &config(out.clone())).unwrap();
        assert_eq!(report.manifest.signal_count, 0);
        assert!(report.manifest.warnings.iter().any(|w| w.contains("no rules")));
        assert_eq!(
            fs::read_to_string(out.join("rule_signals.csv")).unwrap(),
            "timestamp,rule_id,zone_id,value\n"
        );
        assert_eq!(fs::read_to_string(out.join("mode_sets.json")).unwrap(), "[]\n");
    }

    #[test]
    fn missing_topology_skips_spatial_stage() {
        let tmp = tempfile::tempdir().unwrap();
        let (trend, rules, _) = write_bundle(tmp.path(), false);
        let out = tmp.path().join("out");
        let report = run_pipeline(&trend, &rules, None, &config(out.clone())).unwrap();
        assert_eq!(report.manifest.skipped_stages, vec!["spatial".to_string()]);
        assert!(report.manifest.warnings.iter().any(|w| w.starts_with("spatial:")));
        assert!(!out.join("zone_modes.csv").exists());
        assert!(out.join("groups.json").exists());
    }

    #[test]
    fn errors_name_their_stage() {
        let tmp = tempfile::tempdir().unwrap();
        let (trend, rules, _) = write_bundle(tmp.path(), false);
        let mut cfg = config(tmp.path().join("out"));
        cfg.frequency_set = FrequencySet::parse_list("mean,1.5h").unwrap();
        let err = run_pipeline(&trend, &rules, None, &cfg).unwrap_err();
        assert_eq!(err.stage, "decompose");
        assert!(err.message.contains("Nyquist"), "{}", err.message);

        fs::write(&rules, "{not json").unwrap();
        assert_eq!(run_pipeline(&trend, &rules, None, &config(tmp.path().join("o"))).unwrap_err().stage, "rules");

        cfg = config(tmp.path().join("o"));
        cfg.coincidence_threshold = 0.0;
        assert_eq!(run_pipeline(&trend, &rules, None, &cfg).unwrap_err().stage, "config");
    }

    #[test]
    fn manifest_omits_output_dir_and_tracks_inputs() {
        let tmp = tempfile::tempdir().unwrap();
        let (trend, rules, topo) = write_bundle(tmp.path(), true);
        let a = run_pipeline(&trend, &rules, topo.as_deref(), &config(tmp.path().join("a"))).unwrap();
        let b = run_pipeline(&trend, &rules, topo.as_deref(), &config(tmp.path().join("b"))).unwrap();
        for f in OUTPUT_FILES {
            assert_eq!(
                fs::read(tmp.path().join("a").join(f)).unwrap(),
                fs::read(tmp.path().join("b").join(f)).unwrap(),
                "{f}"
            );
        }
        let text = fs::read_to_string(tmp.path().join("a/run_manifest.json")).unwrap();
        assert!(!text.contains("output_dir"));
        let mut bytes = fs::read(&rules).unwrap();
        bytes.push(b' ');
        fs::write(&rules, bytes).unwrap();
        let c = run_pipeline(&trend, &rules, topo.as_deref(), &config(tmp.path().join("c"))).unwrap();
        assert_eq!(a.manifest.inputs[0], c.manifest.inputs[0]);
        assert_ne!(a.manifest.inputs[1].sha256, c.manifest.inputs[1].sha256);
        assert_eq!(b.manifest.outputs, c.manifest.outputs);
    }

    #[test]
    fn config_round_trips_through_json() {
        let json = r#"{"frequency_set":["mean","24h"],"coincidence_threshold":0.7,"ingest":{"timezone":"America/New_York"}}"#;
        let cfg: AnalysisConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.frequency_set.to_string(), "mean,24h");
        assert_eq!(cfg.coincidence_threshold, 0.7);
        assert_eq!(cfg.ingest.interval_hours, 1.0);
        assert!(serde_json::from_str::<AnalysisConfig>(r#"{"bogus":1}"#).is_err());
        assert!(serde_json::from_str::<AnalysisConfig>(r#"{"frequency_set":["24h","24h"]}"#).is_err());
    }
}
