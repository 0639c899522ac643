//! `kmfdd` command line.
//!
//! Exit codes: 0 success, 1 analysis error (JSON report on stderr), 2 usage
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use kmfdd::formats::{read_rule_signals_csv, write_rule_signals_csv, write_trend_csv};
use kmfdd::ingest::{ingest_trend_csv, GapPolicy};
use kmfdd::pipeline::{
    coincidence_stage, decompose_signals, mode_set_record, run_pipeline, spatial_stage, spectra_csv, to_json,
    zone_modes_csv, AnalysisConfig, PipelineError,
};
use kmfdd::rules::{evaluate_rule_set, load_rule_file};
use kmfdd::spatial::BuildingTopology;
use kmfdd::spectral::{compression_report, energy_spectrum, Frequency, FrequencySet, SampledSignal};
use kmfdd::synth::{example_building_seeded, figure_bundle_seeded, SyntheticBundle, EXAMPLE_SEED, FIGURE_SEED};
use kmfdd::RuleSignal;

#[derive(Debug, Parser)]
#[command(
    name = "kmfdd",
    version,
    about = "Spectral analysis of rule-based HVAC fault detection signals",
    long_about = "Evaluates diagnostic rules over building trend data into binary rule signals, \
decomposes them into mode values at chosen periods, and reports spectra, compressed \
reconstructions, pairwise coincidence and per-zone spatial maps.\n\n\
Exit codes: 0 success, 1 analysis error (JSON report on stderr), 2 usage error."
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run config: {"seed": int, "format": "csv"|"json", "analysis": {...}}. Flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory [default: kmfdd-out]
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Comma-separated frequencies, e.g. `mean,24h,12h`
    #[arg(long, global = true, value_name = "LIST")]
    frequencies: Option<FrequencySet>,
    /// Format of tabular outputs [default: json for decompose, csv otherwise]
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Jitter seed base for `synth`
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bundle {
    /// Time-scale, compression and coincidence-family signals (2016 hourly samples)
    Figures,
    /// Two-floor building, two weeks hourly, three rule families
    Example,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Trend CSV with header `timestamp,point_id,value`
    #[arg(long, value_name = "PATH")]
    trend: PathBuf,
    /// Grid interval in hours
    #[arg(long, value_name = "HOURS")]
    interval_hours: Option<f64>,
    /// Gap filling: hold_last, linear or fail
    #[arg(long, value_name = "POLICY", value_parser = parse_gap_policy)]
    gap_policy: Option<GapPolicy>,
    /// Longest fillable gap in hours
    #[arg(long, value_name = "HOURS")]
    max_gap_hours: Option<f64>,
    /// IANA timezone for naive timestamps and grid alignment
    #[arg(long, value_name = "TZ")]
    timezone: Option<String>,
}

fn parse_gap_policy(s: &str) -> Result<GapPolicy, String> {
    s.parse().map_err(|e: kmfdd::ingest::IngestError| e.to_string())
}

#[derive(Debug, Args)]
struct SignalsArg {
    /// Rule-signal CSV with header `timestamp,rule_id,zone_id,value`
    #[arg(long, value_name = "PATH")]
    signals: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resample a trend CSV onto a uniform grid (trend.csv | trend.json)
    Ingest(IngestArgs),
    /// Evaluate a rule file over trend data (rule_signals.csv | rule_signals.json)
    Rules {
        #[command(flatten)]
        ingest: IngestArgs,
        /// Rule JSON file
        #[arg(long, value_name = "PATH")]
        rules: PathBuf,
    },
    /// Mode values of each rule signal (mode_sets.json | mode_sets.csv)
    Decompose(SignalsArg),
    /// Spectral energy per frequency and dominant period (spectra.csv | spectra.json)
    Spectrum(SignalsArg),
    /// Reconstruct signals from their modes (reconstruction.* and compression.*)
    Reconstruct(SignalsArg),
    /// Pairwise coincidence matrix and single-linkage groups (coincidence.*, groups.json)
    Coincidence {
        #[command(flatten)]
        signals: SignalsArg,
        /// Grouping threshold in (0, 1]
        #[arg(long, value_name = "C")]
        threshold: Option<f64>,
    },
    /// Per-zone magnitude and phase at one frequency (zone_modes.*, extent.json)
    Spatial {
        #[command(flatten)]
        signals: SignalsArg,
        /// Topology JSON file
        #[arg(long, value_name = "PATH")]
        topology: PathBuf,
        /// Minimum zone magnitude counted in the systemic extent
        #[arg(long, value_name = "M")]
        magnitude_threshold: Option<f64>,
    },
    /// Write a synthetic bundle (trend.csv, rules.json, topology.json, rule_signals.*)
    Synth {
        #[arg(long, value_enum, default_value = "example")]
        bundle: Bundle,
    },
    /// Full analysis with a run manifest
    Pipeline {
        #[command(flatten)]
        ingest: IngestArgs,
        /// Rule JSON file
        #[arg(long, value_name = "PATH")]
        rules: PathBuf,
        /// Topology JSON file; the spatial stage is skipped without one
        #[arg(long, value_name = "PATH")]
        topology: Option<PathBuf>,
        /// Grouping threshold in (0, 1]
        #[arg(long, value_name = "C")]
        coincidence_threshold: Option<f64>,
        /// Minimum zone magnitude counted in the systemic extent
        #[arg(long, value_name = "M")]
        magnitude_threshold: Option<f64>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    format: Option<Format>,
    analysis: AnalysisConfig,
}

/// Effective settings after merging the config file and flags.
struct Settings {
    analysis: AnalysisConfig,
    format: Option<Format>,
    seed: Option<u64>,
    frequencies: Option<FrequencySet>,
}

impl Settings {
    fn resolve(common: &Common) -> Result<Self, PipelineError> {
        let file = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| PipelineError::new("config", format!("{}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| PipelineError::new("config", format!("{}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let mut analysis = file.analysis;
        if let Some(out) = &common.output {
            analysis.output_dir = out.clone();
        }
        Ok(Self {
            analysis,
            format: common.format.or(file.format),
            seed: common.seed.or(file.seed),
            frequencies: common.frequencies.clone(),
        })
    }

    fn apply_ingest(&mut self, args: &IngestArgs) {
        let c = &mut self.analysis.ingest;
        if let Some(v) = args.interval_hours {
            c.interval_hours = v;
        }
        if let Some(v) = args.gap_policy {
            c.gap_policy = v;
        }
        if let Some(v) = args.max_gap_hours {
            c.max_gap_hours = v;
        }
        if let Some(v) = &args.timezone {
            c.timezone = v.clone();
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.analysis.output_dir.join(name)
    }
}

struct Run {
    settings: Settings,
    written: Vec<PathBuf>,
    warnings: Vec<String>,
}

impl Run {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let dir = &self.settings.analysis.output_dir;
        fs::create_dir_all(dir).map_err(|e| PipelineError::new("output", format!("{}: {e}", dir.display())))?;
        let path = self.settings.out(name);
        fs::write(&path, bytes).map_err(|e| PipelineError::new("output", format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn format(&self, default: Format) -> Format {
        self.settings.format.unwrap_or(default)
    }
}

fn err<E: ToString>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

fn load_signals(path: &Path) -> Result<Vec<RuleSignal>, PipelineError> {
    let file = fs::File::open(path).map_err(|e| PipelineError::new("input", format!("{}: {e}", path.display())))?;
    read_rule_signals_csv(std::io::BufReader::new(file)).map_err(err("input"))
}

fn ingest(run: &mut Run, args: &IngestArgs) -> Result<Vec<kmfdd::TrendSeries>, PipelineError> {
    run.settings.apply_ingest(args);
    let outcome = ingest_trend_csv(&args.trend, &run.settings.analysis.ingest).map_err(err("ingest"))?;
    run.warnings.extend(outcome.warnings);
    for pe in outcome.point_errors {
        run.warnings.push(format!("point '{}' dropped: {}", pe.point_id, pe.error));
    }
    Ok(outcome.series)
}

#[derive(Serialize)]
struct SeriesRecord<'a> {
    point_id: &'a str,
    unit: Option<&'a str>,
    sampling: &'a kmfdd::Sampling,
    values: &'a [f64],
}

#[derive(Serialize)]
struct SignalRecord<'a> {
    rule_id: &'a str,
    zone_id: &'a str,
    sampling: &'a kmfdd::Sampling,
    values: &'a [f64],
}

fn signals_json(signals: &[RuleSignal]) -> Vec<u8> {
    let records: Vec<SignalRecord> = signals
        .iter()
        .map(|s| SignalRecord {
            rule_id: s.rule_id(),
            zone_id: s.zone_id(),
            sampling: s.sampling(),
            values: s.values(),
        })
        .collect();
    to_json(&records)
}

fn write_signals(run: &mut Run, signals: &[RuleSignal]) -> Result<(), PipelineError> {
    match run.format(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_rule_signals_csv(signals, &mut buf).map_err(err("output"))?;
            run.write("rule_signals.csv", &buf)
        }
        Format::Json => run.write("rule_signals.json", &signals_json(signals)),
    }
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, PipelineError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err("output"))?;
    for r in rows {
        w.write_record(r).map_err(err("output"))?;
    }
    w.into_inner().map_err(|e| PipelineError::new("output", e.to_string()))
}

fn execute(cli: Cli) -> Result<Run, PipelineError> {
    let mut run = Run {
        settings: Settings::resolve(&cli.common)?,
        written: Vec::new(),
        warnings: Vec::new(),
    };
    let analysis_freqs = run
        .settings
        .frequencies
        .clone()
        .unwrap_or_else(|| run.settings.analysis.frequency_set.clone());
    let comparison_freqs = run
        .settings
        .frequencies
        .clone()
        .unwrap_or_else(|| run.settings.analysis.coincidence_frequencies.clone());

    match cli.command {
        Command::Ingest(args) => {
            let series = ingest(&mut run, &args)?;
            match run.format(Format::Csv) {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_trend_csv(&series, &mut buf).map_err(err("output"))?;
                    run.write("trend.csv", &buf)?;
                }
                Format::Json => {
                    let records: Vec<SeriesRecord> = series
                        .iter()
                        .map(|s| SeriesRecord {
                            point_id: s.point_id(),
                            unit: s.unit(),
                            sampling: s.sampling(),
                            values: s.values(),
                        })
                        .collect();
                    run.write("trend.json", &to_json(&records))?;
                }
            }
        }
        Command::Rules { ingest: args, rules } => {
            let series = ingest(&mut run, &args)?;
            let rules = load_rule_file(&rules).map_err(err("rules"))?;
            let eval = evaluate_rule_set(&rules, &series).map_err(err("rules"))?;
            if let Some(f) = eval.failures.first() {
                return Err(PipelineError::new("rules", &f.error));
            }
            for g in &eval.gaps {
                run.warnings.push(format!(
                    "rule '{}' evaluated to 0 over {} sample(s) with missing data",
                    g.rule_id, g.gap_samples
                ));
            }
            write_signals(&mut run, &eval.signals)?;
        }
        Command::Decompose(a) => {
            let signals = load_signals(&a.signals)?;
            let modes = decompose_signals(&signals, &analysis_freqs)?;
            match run.format(Format::Json) {
                Format::Json => {
                    let records: Vec<_> = modes
                        .iter()
                        .zip(&signals)
                        .map(|(m, s)| mode_set_record(m, s.zone_id()))
                        .collect();
                    run.write("mode_sets.json", &to_json(&records))?;
                }
                Format::Csv => {
                    let rows = modes.iter().flat_map(|ms| {
                        ms.modes.iter().map(|m| {
                            vec![
                                ms.signal_id.clone(),
                                m.frequency.to_string(),
                                m.value.re.to_string(),
                                m.value.im.to_string(),
                                m.magnitude().to_string(),
                                m.phase().to_string(),
                            ]
                        })
                    });
                    let bytes = csv_bytes(
                        &["signal_id", "frequency", "re", "im", "magnitude", "phase_radians"],
                        rows,
                    )?;
                    run.write("mode_sets.csv", &bytes)?;
                }
            }
        }
        Command::Spectrum(a) => {
            let signals = load_signals(&a.signals)?;
            let modes = decompose_signals(&signals, &analysis_freqs)?;
            match run.format(Format::Csv) {
                Format::Csv => run.write("spectra.csv", &spectra_csv(&modes)?)?,
                Format::Json => {
                    #[derive(Serialize)]
                    struct Spectrum {
                        signal_id: String,
                        dominant_period: Option<Frequency>,
                        energies: Vec<(Frequency, f64)>,
                    }
                    let records = modes
                        .iter()
                        .map(|ms| {
                            Ok(Spectrum {
                                signal_id: ms.signal_id.clone(),
                                dominant_period: kmfdd::pipeline::dominant(ms),
                                energies: energy_spectrum(ms)
                                    .map_err(err("spectrum"))?
                                    .into_iter()
                                    .map(|e| (e.frequency, e.energy))
                                    .collect(),
                            })
                        })
                        .collect::<Result<Vec<_>, PipelineError>>()?;
                    run.write("spectra.json", &to_json(&records))?;
                }
            }
        }
        Command::Reconstruct(a) => {
            let signals = load_signals(&a.signals)?;
            let mut reports = Vec::new();
            let mut rows = Vec::new();
            for s in &signals {
                let (_, approx, report) = compression_report(s, &comparison_freqs).map_err(err("reconstruct"))?;
                for (j, (g, h)) in s.values().iter().zip(&approx).enumerate() {
                    rows.push(vec![
                        kmfdd::formats::format_timestamp(&s.sampling().time_at(j)),
                        s.rule_id().to_string(),
                        g.to_string(),
                        h.to_string(),
                    ]);
                }
                reports.push(report);
            }
            match run.format(Format::Csv) {
                Format::Csv => {
                    let bytes = csv_bytes(&["timestamp", "rule_id", "original", "reconstructed"], rows)?;
                    run.write("reconstruction.csv", &bytes)?;
                    let summary = reports.iter().map(|r| {
                        vec![
                            r.signal_id.clone(),
                            r.n_samples.to_string(),
                            r.real_parameters.to_string(),
                            r.residual_sum_squares.to_string(),
                            r.rms_error.to_string(),
                        ]
                    });
                    let bytes = csv_bytes(
                        &["signal_id", "n_samples", "real_parameters", "residual_sum_squares", "rms_error"],
                        summary,
                    )?;
                    run.write("compression.csv", &bytes)?;
                }
                Format::Json => {
                    #[derive(Serialize)]
                    struct Reconstruction<'a> {
                        frequencies: &'a FrequencySet,
                        reports: &'a [kmfdd::spectral::CompressionReport],
                    }
                    run.write(
                        "compression.json",
                        &to_json(&Reconstruction {
                            frequencies: &comparison_freqs,
                            reports: &reports,
                        }),
                    )?;
                }
            }
        }
        Command::Coincidence { signals, threshold } => {
            let signals = load_signals(&signals.signals)?;
            let threshold = threshold.unwrap_or(run.settings.analysis.coincidence_threshold);
            let (matrix, groups) = coincidence_stage(&signals, &comparison_freqs, threshold)?;
            match run.format(Format::Csv) {
                Format::Csv => run.write("coincidence.csv", matrix.to_csv().as_bytes())?,
                Format::Json => run.write("coincidence.json", &to_json(&matrix))?,
            }
            run.write("groups.json", &to_json(&groups))?;
        }
        Command::Spatial {
            signals,
            topology,
            magnitude_threshold,
        } => {
            let signals = load_signals(&signals.signals)?;
            let topo = BuildingTopology::load(&topology).map_err(err("spatial"))?;
            let frequency = match &run.settings.frequencies {
                None => run.settings.analysis.spatial_frequency,
                Some(set) if set.len() == 1 => set.as_slice()[0],
                Some(set) => {
                    return Err(PipelineError::new(
                        "spatial",
                        format!("spatial maps take exactly one frequency, got '{set}'"),
                    ))
                }
            };
            let threshold = magnitude_threshold.unwrap_or(run.settings.analysis.magnitude_threshold);
            let (map, extent) = spatial_stage(&signals, &topo, frequency, threshold)?;
            match run.format(Format::Csv) {
                Format::Csv => run.write("zone_modes.csv", &zone_modes_csv(&map, &topo)?)?,
                Format::Json => run.write(
                    "zone_modes.json",
                    &to_json(&kmfdd::spatial::zone_mode_table(&map, &topo)),
                )?,
            }
            run.write("extent.json", &to_json(&extent))?;
        }
        Command::Synth { bundle } => {
            let b: SyntheticBundle = match bundle {
                Bundle::Figures => figure_bundle_seeded(run.settings.seed.unwrap_or(FIGURE_SEED)),
                Bundle::Example => example_building_seeded(run.settings.seed.unwrap_or(EXAMPLE_SEED)),
            }
            .map_err(err("synth"))?;
            let mut buf = Vec::new();
            write_trend_csv(&b.trend, &mut buf).map_err(err("output"))?;
            run.write("trend.csv", &buf)?;
            run.write("rules.json", &to_json(&b.rules))?;
            run.write("topology.json", &to_json(&b.topology))?;
            write_signals(&mut run, &b.signals)?;
        }
        Command::Pipeline {
            ingest: args,
            rules,
            topology,
            coincidence_threshold,
            magnitude_threshold,
        } => {
            run.settings.apply_ingest(&args);
            let a = &mut run.settings.analysis;
            if let Some(f) = &run.settings.frequencies {
                a.frequency_set = f.clone();
            }
            if let Some(c) = coincidence_threshold {
                a.coincidence_threshold = c;
            }
            if let Some(m) = magnitude_threshold {
                a.magnitude_threshold = m;
            }
            let report = run_pipeline(&args.trend, &rules, topology.as_deref(), &run.settings.analysis)?;
            run.warnings.extend(report.manifest.warnings.iter().cloned());
            run.written = report.files.iter().map(|f| report.output_dir.join(f)).collect();
        }
    }
    Ok(run)
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    stage: &'a str,
    message: &'a str,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(run) => {
            for w in &run.warnings {
                eprintln!("warning: {w}");
            }
            for p in &run.written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = ErrorReport {
                error: ErrorBody {
                    stage: e.stage,
                    message: &e.message,
                },
            };
            eprintln!("{}", serde_json::to_string(&report).expect("serializable report"));
            ExitCode::from(1)
        }
    }
}
