//! Zone-level views of mode values: magnitude/phase maps, phase gaps,
//! aggregation over tagged zone groups and connected fault extents.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::RuleSignal;
use crate::spectral::{compute_modes, Frequency, FrequencySet, SampledSignal, SpectralError};

/// Magnitudes at or below this carry no meaningful phase.
pub const PHASE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("zone '{0}' is not in the topology")]
    UnknownZone(String),
    #[error("zone '{0}' has no entry in the mode map")]
    ZoneNotMapped(String),
    #[error("phase of zone '{0}' is undefined (magnitude below floor)")]
    PhaseUndefined(String),
    #[error("tag '{0}' matches no mapped zone")]
    TagNotFound(String),
    #[error("signals '{0}' and '{1}' use different sampling")]
    SamplingMismatch(String, String),
    #[error("magnitude threshold must be >= 0, got {0}")]
    NegativeThreshold(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Adjacent,
    Feeds,
    Contains,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub zone_id: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub group_tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_xy: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge(pub String, pub String, pub Relation);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    zones: Vec<Zone>,
    #[serde(default)]
    edges: Vec<Edge>,
}

/// Zones with group tags and the relations between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology")]
pub struct BuildingTopology {
    zones: Vec<Zone>,
    edges: Vec<Edge>,
}

impl TryFrom<RawTopology> for BuildingTopology {
    type Error = SpatialError;

    fn try_from(raw: RawTopology) -> Result<Self, Self::Error> {
        BuildingTopology::new(raw.zones, raw.edges)
    }
}

impl BuildingTopology {
    pub fn new(zones: Vec<Zone>, edges: Vec<Edge>) -> Result<Self, SpatialError> {
        let invalid = |m: String| SpatialError::InvalidTopology(m);
        let mut index = HashMap::new();
        for (i, z) in zones.iter().enumerate() {
            if z.zone_id.is_empty() {
                return Err(invalid("empty zone id".into()));
            }
            if index.insert(z.zone_id.as_str(), i).is_some() {
                return Err(invalid(format!("duplicate zone id '{}'", z.zone_id)));
            }
            if z.group_tags.iter().any(|t| t.is_empty()) {
                return Err(invalid(format!("zone '{}' has an empty tag", z.zone_id)));
            }
        }
        let mut containment = UnionFind::<usize>::new(zones.len());
        let mut has_parent = vec![false; zones.len()];
        for Edge(a, b, rel) in &edges {
            let ia = *index
                .get(a.as_str())
                .ok_or_else(|| invalid(format!("edge references unknown zone '{a}'")))?;
            let ib = *index
                .get(b.as_str())
                .ok_or_else(|| invalid(format!("edge references unknown zone '{b}'")))?;
            if *rel == Relation::Contains {
                if has_parent[ib] {
                    return Err(invalid(format!("zone '{b}' is contained by more than one zone")));
                }
                has_parent[ib] = true;
                if !containment.union(ia, ib) {
                    return Err(invalid(format!("'contains' edges form a cycle through '{a}' and '{b}'")));
                }
            }
        }
        Ok(Self { zones, edges })
    }

    pub fn from_json(json: &str) -> Result<Self, SpatialError> {
        serde_json::from_str(json).map_err(|e| SpatialError::InvalidTopology(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SpatialError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SpatialError::InvalidTopology(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.zone_id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZoneMode {
    pub magnitude: f64,
    /// In `(-pi, pi]`; `None` when the magnitude is at or below [`PHASE_FLOOR`].
    pub phase: Option<f64>,
}

impl ZoneMode {
    fn from_value(v: Complex64) -> Self {
        let magnitude = v.norm();
        let phase = (magnitude > PHASE_FLOOR).then(|| {
            let p = v.arg();
            if p <= -PI {
                PI
            } else {
                p
            }
        });
        Self { magnitude, phase }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneModeMap {
    pub frequency: Frequency,
    pub entries: BTreeMap<String, ZoneMode>,
}

impl ZoneModeMap {
    pub fn get(&self, zone_id: &str) -> Option<&ZoneMode> {
        self.entries.get(zone_id)
    }
}

/// Per-zone magnitude and phase of the mode at `frequency`. Signals sharing a
/// zone are combined by the complex sum of their modes.
pub fn project_modes(
    signals: &[RuleSignal],
    topology: &BuildingTopology,
    frequency: Frequency,
) -> Result<ZoneModeMap, SpatialError> {
    if let Some((first, rest)) = signals.split_first() {
        for s in rest {
            if s.sampling() != first.sampling() {
                return Err(SpatialError::SamplingMismatch(
                    first.rule_id().to_string(),
                    s.rule_id().to_string(),
                ));
            }
        }
    }
    let freqs = FrequencySet::new(vec![frequency])?;
    let mut sums: BTreeMap<String, Complex64> = BTreeMap::new();
    for s in signals {
        if topology.zone(s.zone_id()).is_none() {
            return Err(SpatialError::UnknownZone(s.zone_id().to_string()));
        }
        let value = compute_modes(s.signal_id(), s.values(), s.sampling(), &freqs)?.modes[0].value;
        sums.entry(s.zone_id().to_string())
            .and_modify(|acc| *acc += value)
            .or_insert(value);
    }
    Ok(ZoneModeMap {
        frequency,
        entries: sums
            .into_iter()
            .map(|(z, v)| (z, ZoneMode::from_value(v)))
            .collect(),
    })
}

/// Absolute phase gap wrapped into `[0, pi]`.
pub fn wrapped_phase_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(2.0 * PI);
    if d > PI {
        2.0 * PI - d
    } else {
        d
    }
}

fn defined_phase(map: &ZoneModeMap, zone: &str) -> Result<f64, SpatialError> {
    map.get(zone)
        .ok_or_else(|| SpatialError::ZoneNotMapped(zone.to_string()))?
        .phase
        .ok_or_else(|| SpatialError::PhaseUndefined(zone.to_string()))
}

pub fn phase_difference(map: &ZoneModeMap, zone_a: &str, zone_b: &str) -> Result<f64, SpatialError> {
    Ok(wrapped_phase_gap(
        defined_phase(map, zone_a)?,
        defined_phase(map, zone_b)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagAggregate {
    pub tag: String,
    pub zone_count: usize,
    pub mean_magnitude: f64,
    /// `|mean unit phasor|` over members with a defined phase; 0 if none.
    pub phase_coherence: f64,
    /// Argument of the mean unit phasor; `None` when the phasors cancel.
    pub circular_mean_phase: Option<f64>,
}

pub fn aggregate_by_tag(
    map: &ZoneModeMap,
    topology: &BuildingTopology,
    tag: &str,
) -> Result<TagAggregate, SpatialError> {
    let members: Vec<&ZoneMode> = topology
        .zones()
        .iter()
        .filter(|z| z.group_tags.contains(tag))
        .filter_map(|z| map.get(&z.zone_id))
        .collect();
    if members.is_empty() {
        return Err(SpatialError::TagNotFound(tag.to_string()));
    }
    let mean_magnitude = members.iter().map(|m| m.magnitude).sum::<f64>() / members.len() as f64;
    let phases: Vec<f64> = members.iter().filter_map(|m| m.phase).collect();
    let (coherence, mean_phase) = if phases.is_empty() {
        (0.0, None)
    } else {
        let sum: Complex64 = phases.iter().map(|p| Complex64::from_polar(1.0, *p)).sum();
        let mean = sum / phases.len() as f64;
        let r = mean.norm();
        (r.min(1.0), (r > PHASE_FLOOR).then(|| mean.arg()))
    };
    Ok(TagAggregate {
        tag: tag.to_string(),
        zone_count: members.len(),
        mean_magnitude,
        phase_coherence: coherence,
        circular_mean_phase: mean_phase,
    })
}

/// Connected groups (over `adjacent` and `feeds` edges) of mapped zones whose
/// magnitude reaches `threshold`, largest first. Members are sorted; equal
/// sized components are ordered by their first member.
pub fn systemic_extent(
    map: &ZoneModeMap,
    topology: &BuildingTopology,
    threshold: f64,
) -> Result<Vec<Vec<String>>, SpatialError> {
    if !(threshold >= 0.0) {
        return Err(SpatialError::NegativeThreshold(threshold));
    }
    let active: Vec<&str> = map
        .entries
        .iter()
        .filter(|(_, m)| m.magnitude >= threshold)
        .map(|(z, _)| z.as_str())
        .collect();
    let slot: HashMap<&str, usize> = active.iter().enumerate().map(|(i, z)| (*z, i)).collect();
    let mut uf = UnionFind::<usize>::new(active.len());
    for Edge(a, b, rel) in topology.edges() {
        if *rel == Relation::Contains {
            continue;
        }
        if let (Some(&i), Some(&j)) = (slot.get(a.as_str()), slot.get(b.as_str())) {
            uf.union(i, j);
        }
    }
    let mut by_root: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, z) in active.iter().enumerate() {
        by_root.entry(uf.find(i)).or_default().push(z.to_string());
    }
    let mut components: Vec<Vec<String>> = by_root.into_values().collect();
    for c in &mut components {
        c.sort();
    }
    components.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    Ok(components)
}

/// One plot-ready row of a zone mode map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneModeRow {
    pub zone_id: String,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub magnitude: f64,
    pub phase_radians: Option<f64>,
}

/// Rows in topology order for every mapped zone.
pub fn zone_mode_table(map: &ZoneModeMap, topology: &BuildingTopology) -> Vec<ZoneModeRow> {
    topology
        .zones()
        .iter()
        .filter_map(|z| {
            map.get(&z.zone_id).map(|m| ZoneModeRow {
                zone_id: z.zone_id.clone(),
                x: z.plan_xy.map(|p| p[0]),
                y: z.plan_xy.map(|p| p[1]),
                magnitude: m.magnitude,
                phase_radians: m.phase,
            })
        })
        .collect()
}
