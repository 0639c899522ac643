//! Deterministic synthetic rule signals and trend bundles with planted
//! time-scales, phases, duty cycles and spatial fault clusters.
//!
//! Jitter uses SplitMix64 seeded with `SyntheticSpec::seed`. For every sample, in
//! order, one 64-bit output `x` is drawn and mapped to `u = (x >> 11) * 2^-53`;
//! the sample is flipped when `u < jitter_probability`. This mapping is part
//! of the output contract so other implementations can reproduce it.

use chrono::{DateTime, TimeZone, Utc};
use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{evaluate_rule_set, parse_rules, RuleError, RuleRecord, RuleSignal, TrendSeries};
use crate::spatial::{BuildingTopology, Edge, Relation, SpatialError, Zone};
use crate::spectral::{SampledSignal, Sampling, SpectralError};

/// Start of every synthetic record: Monday 2024-01-01 00:00 UTC.
pub fn synthetic_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// Samples in the figure reproductions: twelve weeks of hourly data.
pub const FIGURE_SAMPLES: usize = 2016;

const EDGE_EPS_HOURS: f64 = 1e-9;
const WEEK_HOURS: f64 = 168.0;
const WORKWEEK_HOURS: f64 = 120.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// On for the first `duty * period` hours after `phase_offset` in each period.
    SquareWave,
    /// Same as `SquareWave`; named for the contiguous-violation pattern.
    Sustained,
    /// The same on-time per period as `Sustained`, split into one-sample
    /// bursts at every other sample over a window twice as long, centred on
    /// the sustained block.
    Bursty,
    /// `SquareWave` restricted to the first 120 hours of each 168-hour week
    /// counted from the epoch (weekday occupancy).
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SignalKind,
    pub period_hours: f64,
    pub duty: f64,
    pub phase_offset_hours: f64,
    pub n_samples: usize,
    pub interval_hours: f64,
    pub seed: u64,
    pub jitter_probability: f64,
}

impl SyntheticSpec {
    /// Hourly square wave without offset or jitter.
    pub fn square(period_hours: f64, duty: f64, n_samples: usize) -> Self {
        Self {
            kind: SignalKind::SquareWave,
            period_hours,
            duty,
            phase_offset_hours: 0.0,
            n_samples,
            interval_hours: 1.0,
            seed: 0,
            jitter_probability: 0.0,
        }
    }

    pub fn kind(mut self, kind: SignalKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn offset(mut self, hours: f64) -> Self {
        self.phase_offset_hours = hours;
        self
    }

    pub fn jitter(mut self, probability: f64, seed: u64) -> Self {
        self.jitter_probability = probability;
        self.seed = seed;
        self
    }

    pub fn interval(mut self, hours: f64) -> Self {
        self.interval_hours = hours;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.interval_hours.is_finite() && self.interval_hours > 0.0) {
            return bad(format!("interval_hours must be > 0, got {}", self.interval_hours));
        }
        if !(self.period_hours.is_finite() && self.period_hours >= 2.0 * self.interval_hours) {
            return bad(format!(
                "period_hours must be at least twice the interval, got {}",
                self.period_hours
            ));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            return bad(format!("duty must lie in [0, 1], got {}", self.duty));
        }
        if !(0.0..1.0).contains(&self.jitter_probability) {
            return bad(format!(
                "jitter_probability must lie in [0, 1), got {}",
                self.jitter_probability
            ));
        }
        if !self.phase_offset_hours.is_finite() {
            return bad("phase_offset_hours must be finite".into());
        }
        if self.n_samples < 2 {
            return bad(format!("n_samples must be >= 2, got {}", self.n_samples));
        }
        Ok(())
    }

    pub fn sampling(&self) -> Result<Sampling, SynthError> {
        Ok(Sampling::new(
            self.interval_hours,
            self.n_samples,
            synthetic_epoch(),
        )?)
    }

    fn is_on(&self, j: usize) -> bool {
        let t = j as f64 * self.interval_hours;
        let on_hours = self.duty * self.period_hours;
        match self.kind {
            SignalKind::SquareWave | SignalKind::Sustained => {
                (t - self.phase_offset_hours).rem_euclid(self.period_hours) < on_hours - EDGE_EPS_HOURS
            }
            SignalKind::Composite => {
                t.rem_euclid(WEEK_HOURS) < WORKWEEK_HOURS - EDGE_EPS_HOURS
                    && (t - self.phase_offset_hours).rem_euclid(self.period_hours)
                        < on_hours - EDGE_EPS_HOURS
            }
            SignalKind::Bursty => {
                let window = (2.0 * on_hours).min(self.period_hours);
                let start = self.phase_offset_hours - on_hours / 2.0;
                let u = (t - start).rem_euclid(self.period_hours);
                let slot = ((u + EDGE_EPS_HOURS) / self.interval_hours).floor() as u64;
                u < window - EDGE_EPS_HOURS && slot.is_multiple_of(2)
            }
        }
    }

    /// Sample values in `{0.0, 1.0}`.
    pub fn generate(&self) -> Result<Vec<f64>, SynthError> {
        self.validate()?;
        let mut bits: Vec<bool> = (0..self.n_samples).map(|j| self.is_on(j)).collect();
        if self.jitter_probability > 0.0 {
            let mut rng = SplitMix64::seed_from_u64(self.seed);
            for b in &mut bits {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                if u < self.jitter_probability {
                    *b = !*b;
                }
            }
        }
        Ok(bits.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
    }
}

pub fn synthesize(rule_id: &str, zone_id: &str, spec: &SyntheticSpec) -> Result<RuleSignal, SynthError> {
    let values = spec.generate()?;
    Ok(RuleSignal::new(rule_id, zone_id, spec.sampling()?, values)?)
}

/// A rule signal generated from `spec` under the id `synthetic`.
pub fn square_wave(spec: &SyntheticSpec) -> Result<RuleSignal, SynthError> {
    synthesize("synthetic", "synthetic", spec)
}

/// Signals reproducing the figure-level claims.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureSuite {
    /// Periods 2h, 24h, 168h with means in [0.40, 0.55].
    pub time_scales: Vec<RuleSignal>,
    /// Contiguous daily violation.
    pub sustained: RuleSignal,
    /// Same daily on-time as `sustained`, in bursts.
    pub bursty: RuleSignal,
    /// 25 signals in three planted coincidence families.
    pub families: Vec<RuleSignal>,
    /// Family index of each entry of `families`.
    pub family_of: Vec<usize>,
}

/// Planted period of each time-scale signal, in hours.
pub const TIME_SCALE_PERIODS: [f64; 3] = [2.0, 24.0, 168.0];

pub const FAMILY_COUNT: usize = 3;
pub const FAMILY_SIGNALS: usize = 25;

impl FigureSuite {
    pub fn all_signals(&self) -> Vec<RuleSignal> {
        let mut out = self.time_scales.clone();
        out.push(self.sustained.clone());
        out.push(self.bursty.clone());
        out.extend(self.families.iter().cloned());
        out
    }

    /// Indices into `families` of the members of family `f`.
    pub fn family_members(&self, f: usize) -> Vec<usize> {
        (0..self.families.len()).filter(|&i| self.family_of[i] == f).collect()
    }
}

fn family_spec(family: usize, member: usize, index: usize, seed: u64) -> SyntheticSpec {
    // families centred 8h apart so their 24h and 12h phasors sit 120 degrees apart
    let center = 4.0 + 8.0 * family as f64;
    let on_hours = [3.0, 4.0, 5.0][member % 3];
    SyntheticSpec::square(24.0, on_hours / 24.0, FIGURE_SAMPLES)
        .offset(center - on_hours / 2.0)
        .jitter(0.02, seed.wrapping_add(index as u64))
}

/// Jitter seed base of the canonical figure suite.
pub const FIGURE_SEED: u64 = 1000;
/// Jitter seed base of the canonical example building.
pub const EXAMPLE_SEED: u64 = 0;

pub fn figure_suite() -> FigureSuite {
    figure_suite_seeded(FIGURE_SEED)
}

/// Figure suite whose family member `i` jitters with seed `seed + i`.
pub fn figure_suite_seeded(seed: u64) -> FigureSuite {
    let n = FIGURE_SAMPLES;
    let build = |id: &str, spec: SyntheticSpec| {
        synthesize(id, &format!("zone_{id}"), &spec).expect("figure suite specs are valid")
    };
    let time_scales = vec![
        build("signal_1", SyntheticSpec::square(2.0, 0.5, n)),
        build("signal_2", SyntheticSpec::square(24.0, 13.0 / 24.0, n).offset(7.0)),
        build("signal_3", SyntheticSpec::square(168.0, 72.0 / 168.0, n).offset(24.0)),
    ];
    let sustained = build(
        "sustained",
        SyntheticSpec::square(24.0, 0.25, n).kind(SignalKind::Sustained).offset(8.0),
    );
    let bursty = build(
        "bursty",
        SyntheticSpec::square(24.0, 0.25, n).kind(SignalKind::Bursty).offset(8.0),
    );
    let mut families = Vec::with_capacity(FAMILY_SIGNALS);
    let mut family_of = Vec::with_capacity(FAMILY_SIGNALS);
    for index in 0..FAMILY_SIGNALS {
        let family = index % FAMILY_COUNT;
        let member = index / FAMILY_COUNT;
        families.push(build(
            &format!("fam{family}_{member:02}"),
            family_spec(family, member, index, seed),
        ));
        family_of.push(family);
    }
    FigureSuite {
        time_scales,
        sustained,
        bursty,
        families,
        family_of,
    }
}

/// Trend data, rules and topology that together reproduce a set of rule
/// signals through the full pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBundle {
    pub trend: Vec<TrendSeries>,
    pub rules: Vec<RuleRecord>,
    pub topology: BuildingTopology,
    /// Rule signals obtained by evaluating `rules` on `trend`.
    pub signals: Vec<RuleSignal>,
}

fn finish_bundle(
    trend: Vec<TrendSeries>,
    rules: Vec<RuleRecord>,
    topology: BuildingTopology,
) -> Result<SyntheticBundle, SynthError> {
    let parsed = parse_rules(&rules)?;
    let eval = evaluate_rule_set(&parsed, &trend)?;
    if let Some(f) = eval.failures.first() {
        return Err(f.error.clone().into());
    }
    Ok(SyntheticBundle {
        trend,
        rules,
        topology,
        signals: eval.signals,
    })
}

fn zone(id: &str, label: &str, tags: &[&str], xy: [f64; 2]) -> Zone {
    Zone {
        zone_id: id.to_string(),
        label: label.to_string(),
        group_tags: tags.iter().map(|t| t.to_string()).collect(),
        plan_xy: Some(xy),
    }
}

fn flags_to_temps(flags: &[f64], normal: f64, fault: f64) -> Vec<f64> {
    flags.iter().map(|f| if *f == 1.0 { fault } else { normal }).collect()
}

/// The figure suite encoded as zone temperatures (70 normally, 78 while the
/// planted condition holds) with one `<id>.zone_temp > 75` rule per signal.
pub fn figure_bundle() -> Result<SyntheticBundle, SynthError> {
    figure_bundle_seeded(FIGURE_SEED)
}

pub fn figure_bundle_seeded(seed: u64) -> Result<SyntheticBundle, SynthError> {
    let suite = figure_suite_seeded(seed);
    let mut trend = Vec::new();
    let mut rules = Vec::new();
    let mut zones = Vec::new();
    let mut edges = Vec::new();
    for (i, s) in suite.all_signals().iter().enumerate() {
        let point = format!("{}.zone_temp", s.rule_id());
        trend.push(
            TrendSeries::new(&point, *s.sampling(), flags_to_temps(s.values(), 70.0, 78.0))?
                .with_unit("degF"),
        );
        rules.push(RuleRecord {
            rule_id: s.rule_id().to_string(),
            zone_id: s.zone_id().to_string(),
            expression: format!("{point} > 75"),
            min_duration_samples: None,
            eq_tolerance: None,
        });
        let tag = if i < 3 {
            "time-scales".to_string()
        } else if i < 5 {
            "compression".to_string()
        } else {
            format!("family-{}", suite.family_of[i - 5])
        };
        zones.push(zone(
            s.zone_id(),
            s.rule_id(),
            &[tag.as_str()],
            [(i % 6) as f64 * 5.0, (i / 6) as f64 * 5.0],
        ));
    }
    // chain the zones of each family so each family is one connected extent
    for f in 0..FAMILY_COUNT {
        let members = suite.family_members(f);
        for w in members.windows(2) {
            edges.push(Edge(
                suite.families[w[0]].zone_id().to_string(),
                suite.families[w[1]].zone_id().to_string(),
                Relation::Adjacent,
            ));
        }
    }
    let topology = BuildingTopology::new(zones, edges)?;
    finish_bundle(trend, rules, topology)
}

/// A small two-floor building over two weeks of hourly data with three
/// illustrative rule families (setpoint deviation, simultaneous heating and
/// cooling, supply-air temperature deviation). The planted faults are:
/// the south zones of floor 2 overheat every afternoon, zone 101 overheats
/// every early morning (opposite phase), zone 102 heats and cools at once on
/// weekday mornings, and the AHU supply air runs warm for the first day of
/// each week.
pub fn example_building() -> Result<SyntheticBundle, SynthError> {
    example_building_seeded(EXAMPLE_SEED)
}

pub fn example_building_seeded(seed: u64) -> Result<SyntheticBundle, SynthError> {
    let n = 336;
    let sampling = Sampling::new(1.0, n, synthetic_epoch())?;
    let flags = |spec: SyntheticSpec| spec.generate();
    let quiet = vec![0.0; n];

    let afternoon = flags(SyntheticSpec::square(24.0, 5.0 / 24.0, n).offset(13.0).jitter(0.01, seed.wrapping_add(7)))?;
    let early = flags(SyntheticSpec::square(24.0, 4.0 / 24.0, n).offset(1.0).jitter(0.01, seed.wrapping_add(11)))?;
    let mornings = flags(
        SyntheticSpec::square(24.0, 3.0 / 24.0, n)
            .kind(SignalKind::Composite)
            .offset(7.0),
    )?;
    let warm_supply = flags(SyntheticSpec::square(168.0, 24.0 / 168.0, n))?;

    let zone_ids = ["z101", "z102", "z103", "z104", "z201", "z202", "z203", "z204"];
    let mut trend = Vec::new();
    let mut rules = Vec::new();
    let mut zones = Vec::new();
    let mut edges = Vec::new();
    for (i, z) in zone_ids.iter().enumerate() {
        let floor = if i < 4 { "floor-1" } else { "floor-2" };
        let face = if i % 4 < 2 { "north" } else { "south" };
        let overheat = match *z {
            "z101" => &early,
            "z203" | "z204" => &afternoon,
            _ => &quiet,
        };
        let simultaneous = if *z == "z102" { &mornings } else { &quiet };
        trend.push(
            TrendSeries::new(format!("{z}.zone_temp"), sampling, flags_to_temps(overheat, 72.0, 77.5))?
                .with_unit("degF"),
        );
        trend.push(
            TrendSeries::new(format!("{z}.cooling_sp"), sampling, vec![75.0; n])?.with_unit("degF"),
        );
        trend.push(
            TrendSeries::new(
                format!("{z}.heating_cmd"),
                sampling,
                flags_to_temps(simultaneous, 0.0, 40.0),
            )?
            .with_unit("%"),
        );
        trend.push(
            TrendSeries::new(
                format!("{z}.cooling_cmd"),
                sampling,
                flags_to_temps(overheat, 30.0, 100.0)
                    .into_iter()
                    .zip(simultaneous)
                    .map(|(c, s)| if *s == 1.0 { 55.0 } else { c })
                    .collect(),
            )?
            .with_unit("%"),
        );
        rules.push(RuleRecord {
            rule_id: format!("{z}.setpoint_deviation"),
            zone_id: z.to_string(),
            expression: format!("{z}.zone_temp > {z}.cooling_sp"),
            min_duration_samples: Some(2),
            eq_tolerance: None,
        });
        rules.push(RuleRecord {
            rule_id: format!("{z}.simultaneous_heat_cool"),
            zone_id: z.to_string(),
            expression: format!("({z}.heating_cmd > 10) AND ({z}.cooling_cmd > 10)"),
            min_duration_samples: None,
            eq_tolerance: None,
        });
        let col = (i % 4) as f64;
        let row = (i / 4) as f64;
        zones.push(zone(z, &format!("Zone {}", &z[1..]), &[floor, face], [col * 6.0, row * 10.0]));
        if i % 4 != 3 {
            edges.push(Edge(z.to_string(), zone_ids[i + 1].to_string(), Relation::Adjacent));
        }
        edges.push(Edge("ahu1".into(), z.to_string(), Relation::Feeds));
    }
    trend.push(
        TrendSeries::new("ahu1.sat", sampling, flags_to_temps(&warm_supply, 55.0, 61.5))?
            .with_unit("degF"),
    );
    trend.push(TrendSeries::new("ahu1.sat_sp", sampling, vec![55.0; n])?.with_unit("degF"));
    trend.push(
        TrendSeries::new("ahu1.cooling_valve", sampling, flags_to_temps(&warm_supply, 60.0, 100.0))?
            .with_unit("%"),
    );
    rules.push(RuleRecord {
        rule_id: "ahu1.supply_temp_deviation".into(),
        zone_id: "ahu1".into(),
        expression: "(ahu1.sat > 58) AND (ahu1.cooling_valve >= 95)".into(),
        min_duration_samples: None,
        eq_tolerance: None,
    });
    zones.push(zone("ahu1", "AHU 1", &["ahu"], [-6.0, 5.0]));
    let topology = BuildingTopology::new(zones, edges)?;
    finish_bundle(trend, rules, topology)
}
