//! Frequency-domain coincidence between rule signals.
//!
//! For mode sets `x` and `y` over the same frequencies,
//!
//! ```text
//! c(x, y) = Re( sum_k y_k * conj(x_k) ) / sum_k |y_k| |x_k|
//! ```
//!
//! which lies in `[-1, 1]`: 1 when the signals share magnitude ratios and
//! phases at every frequency, -1 when they are in anti-phase everywhere.

use petgraph::unionfind::UnionFind;
use serde::Serialize;
use thiserror::Error;

use crate::spectral::{compute_mode_set, FrequencySet, ModeSet, SampledSignal, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoincidenceError {
    #[error("mode sets '{x}' and '{y}' use different frequency sets")]
    FrequencyMismatch { x: String, y: String },
    #[error("mode sets '{x}' and '{y}' use different sampling")]
    SamplingMismatch { x: String, y: String },
    #[error("coincidence of '{x}' and '{y}' is undefined: a signal has no nonzero mode")]
    Undefined { x: String, y: String },
    #[error("duplicate signal id '{0}'")]
    DuplicateSignal(String),
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

fn check_compatible(x: &ModeSet, y: &ModeSet) -> Result<(), CoincidenceError> {
    let same_freqs = x.modes.len() == y.modes.len()
        && x.modes.iter().zip(&y.modes).all(|(a, b)| a.frequency == b.frequency);
    if !same_freqs {
        return Err(CoincidenceError::FrequencyMismatch {
            x: x.signal_id.clone(),
            y: y.signal_id.clone(),
        });
    }
    if x.sampling != y.sampling {
        return Err(CoincidenceError::SamplingMismatch {
            x: x.signal_id.clone(),
            y: y.signal_id.clone(),
        });
    }
    Ok(())
}

pub fn coincidence(x: &ModeSet, y: &ModeSet) -> Result<f64, CoincidenceError> {
    check_compatible(x, y)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in x.modes.iter().zip(&y.modes) {
        let (xv, yv) = (a.value, b.value);
        // Re(y * conj(x)); written symmetrically so c(x, y) == c(y, x) bit for bit
        num += yv.re * xv.re + yv.im * xv.im;
        den += yv.norm() * xv.norm();
    }
    if den == 0.0 {
        return Err(CoincidenceError::Undefined {
            x: x.signal_id.clone(),
            y: y.signal_id.clone(),
        });
    }
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Symmetric pairwise coincidence over a signal set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceMatrix {
    pub signal_ids: Vec<String>,
    pub frequencies: FrequencySet,
    pub values: Vec<Vec<f64>>,
    /// Index pairs `(i, j)`, `i <= j`, whose coincidence was undefined and
    /// reported as 0.
    pub undefined_pairs: Vec<(usize, usize)>,
}

impl CoincidenceMatrix {
    pub fn len(&self) -> usize {
        self.signal_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.signal_ids.iter().position(|s| s == id)
    }

    /// CSV with a header row and first column of signal ids and six
    /// fractional digits per cell.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        let header = std::iter::once("signal_id").chain(self.signal_ids.iter().map(String::as_str));
        w.write_record(header).expect("in-memory csv write");
        for (id, row) in self.signal_ids.iter().zip(&self.values) {
            let cells = std::iter::once(id.clone()).chain(row.iter().map(|v| format_cell(*v)));
            w.write_record(cells).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
    }
}

fn format_cell(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Matrix over precomputed mode sets; each pair is evaluated once.
pub fn coincidence_matrix_from_modes(
    modes: &[ModeSet],
    frequencies: &FrequencySet,
) -> Result<CoincidenceMatrix, CoincidenceError> {
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].iter().any(|o| o.signal_id == m.signal_id) {
            return Err(CoincidenceError::DuplicateSignal(m.signal_id.clone()));
        }
    }
    let n = modes.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut undefined_pairs = Vec::new();
    for i in 0..n {
        for j in i..n {
            let c = match coincidence(&modes[i], &modes[j]) {
                Ok(_) if i == j => 1.0,
                Ok(c) => c,
                Err(CoincidenceError::Undefined { .. }) => {
                    undefined_pairs.push((i, j));
                    0.0
                }
                Err(e) => return Err(e),
            };
            values[i][j] = c;
            values[j][i] = c;
        }
    }
    Ok(CoincidenceMatrix {
        signal_ids: modes.iter().map(|m| m.signal_id.clone()).collect(),
        frequencies: frequencies.clone(),
        values,
        undefined_pairs,
    })
}

pub fn coincidence_matrix<S: SampledSignal>(
    signals: &[S],
    frequencies: &FrequencySet,
) -> Result<CoincidenceMatrix, CoincidenceError> {
    let modes = signals
        .iter()
        .map(|s| compute_mode_set(s, frequencies))
        .collect::<Result<Vec<_>, _>>()?;
    coincidence_matrix_from_modes(&modes, frequencies)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceGroup {
    pub members: Vec<String>,
    pub threshold: f64,
}

/// Single-linkage groups: connected components of the graph joining every
/// pair with coincidence `>= threshold`. Members are sorted by id and groups
/// by their first member.
pub fn group_by_coincidence(
    matrix: &CoincidenceMatrix,
    threshold: f64,
) -> Result<Vec<CoincidenceGroup>, CoincidenceError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CoincidenceError::InvalidThreshold(threshold));
    }
    let n = matrix.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if matrix.values[i][j] >= threshold {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut root_slot = std::collections::HashMap::new();
    for (i, root) in labels.iter().enumerate() {
        let slot = *root_slot.entry(*root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(matrix.signal_ids[i].clone());
    }
    for g in &mut groups {
        g.sort();
    }
    groups.sort();
    Ok(groups
        .into_iter()
        .map(|members| CoincidenceGroup { members, threshold })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{compute_modes, Frequency, ModeValue, Sampling};
    use chrono::{TimeZone, Utc};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn hourly(n: usize) -> Sampling {
        Sampling::new(1.0, n, Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()).unwrap()
    }

    fn square(n: usize, period: usize, on: usize, shift: usize) -> Vec<f64> {
        (0..n)
            .map(|j| if (j + period - shift % period) % period < on { 1.0 } else { 0.0 })
            .collect()
    }

    fn modes_of(id: &str, g: &[f64], freqs: &str) -> ModeSet {
        compute_modes(id, g, &hourly(g.len()), &FrequencySet::parse_list(freqs).unwrap()).unwrap()
    }

    fn matrix(values: Vec<Vec<f64>>) -> CoincidenceMatrix {
        let n = values.len();
        CoincidenceMatrix {
            signal_ids: (0..n).map(|i| format!("s{i}")).collect(),
            frequencies: FrequencySet::comparison_default(),
            values,
            undefined_pairs: vec![],
        }
    }

    #[test]
    fn self_coincidence_is_one() {
        let m = modes_of("a", &square(240, 24, 7, 3), "mean,24h,12h");
        assert!((coincidence(&m, &m).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_period_shift_is_anti_phase_at_24h() {
        let a = modes_of("a", &square(2016, 24, 12, 0), "24h");
        let b = modes_of("b", &square(2016, 24, 12, 12), "24h");
        assert!((coincidence(&a, &b).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn mean_term_pulls_anti_phase_pair_inward() {
        let a = modes_of("a", &square(2016, 24, 12, 0), "mean,24h");
        let b = modes_of("b", &square(2016, 24, 12, 12), "mean,24h");
        let c = coincidence(&a, &b).unwrap();
        // closed form: (0.25 - A^2) / (0.25 + A^2), A = 1 / (24 sin(pi/24))
        let amp = 1.0 / (24.0 * (PI / 24.0).sin());
        let expected = (0.25 - amp * amp) / (0.25 + amp * amp);
        assert!(c > -1.0 && c < 1.0);
        assert!((c - expected).abs() < 1e-9, "{c} vs {expected}");
    }

    #[test]
    fn zero_signal_is_undefined_and_matrix_flags_it() {
        let z = modes_of("z", &[0.0; 48], "mean,24h");
        let a = modes_of("a", &square(48, 24, 5, 0), "mean,24h");
        assert!(matches!(
            coincidence(&z, &z),
            Err(CoincidenceError::Undefined { .. })
        ));
        let freqs = FrequencySet::parse_list("mean,24h").unwrap();
        let m = coincidence_matrix_from_modes(&[a, z], &freqs).unwrap();
        assert_eq!(m.values[1][1], 0.0);
        assert_eq!(m.values[0][1], 0.0);
        assert_eq!(m.undefined_pairs, vec![(0, 1), (1, 1)]);
        assert_eq!(m.values[0][0], 1.0);
    }

    #[test]
    fn mismatched_frequencies_rejected() {
        let a = modes_of("a", &square(48, 24, 5, 0), "mean,24h");
        let b = modes_of("b", &square(48, 24, 5, 0), "mean,12h");
        assert!(matches!(
            coincidence(&a, &b),
            Err(CoincidenceError::FrequencyMismatch { .. })
        ));
        let c = modes_of("c", &square(72, 24, 5, 0), "mean,24h");
        assert!(matches!(
            coincidence(&a, &c),
            Err(CoincidenceError::SamplingMismatch { .. })
        ));
    }

    #[test]
    fn single_frequency_is_cosine_of_phase_gap() {
        let mk = |id: &str, r: f64, phi: f64| ModeSet {
            signal_id: id.into(),
            sampling: hourly(24),
            modes: vec![ModeValue {
                frequency: Frequency::Period(24.0),
                value: Complex64::from_polar(r, phi),
            }],
        };
        let c = coincidence(&mk("a", 0.3, 0.4), &mk("b", 2.0, 2.1)).unwrap();
        assert!((c - (1.7f64).cos()).abs() < 1e-12);
    }

    #[test]
    fn single_signal_matrix() {
        let a = modes_of("a", &square(48, 24, 5, 0), "mean,24h,12h");
        let m = coincidence_matrix_from_modes(&[a], &FrequencySet::comparison_default()).unwrap();
        assert_eq!(m.values, vec![vec![1.0]]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = modes_of("a", &square(48, 24, 5, 0), "mean");
        assert!(matches!(
            coincidence_matrix_from_modes(&[a.clone(), a], &FrequencySet::parse_list("mean").unwrap()),
            Err(CoincidenceError::DuplicateSignal(_))
        ));
    }

    #[test]
    fn grouping_examples() {
        let eps = 1.0 - 1e-9;
        let m = matrix(vec![
            vec![1.0, eps, eps],
            vec![eps, 1.0, eps],
            vec![eps, eps, 1.0],
        ]);
        let singles = group_by_coincidence(&m, 1.0).unwrap();
        assert_eq!(singles.len(), 3);
        let all = group_by_coincidence(&m, 0.5).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].members, vec!["s0", "s1", "s2"]);
        assert!(group_by_coincidence(&m, 0.0).is_err());
        assert!(group_by_coincidence(&m, 1.5).is_err());
    }

    #[test]
    fn grouping_is_single_linkage() {
        // s0 - s1 - s2 chain, s3 isolated
        let m = matrix(vec![
            vec![1.0, 0.9, 0.1, 0.0],
            vec![0.9, 1.0, 0.85, 0.0],
            vec![0.1, 0.85, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ]);
        let groups = group_by_coincidence(&m, 0.8).unwrap();
        let members: Vec<_> = groups.iter().map(|g| g.members.clone()).collect();
        assert_eq!(members, vec![vec!["s0", "s1", "s2"], vec!["s3"]]);
    }

    #[test]
    fn csv_export_layout() {
        let m = matrix(vec![vec![1.0, -1e-9], vec![-1e-9, 1.0]]);
        assert_eq!(
            m.to_csv(),
            "signal_id,s0,s1\ns0,1.000000,0.000000\ns1,0.000000,1.000000\n"
        );
    }
}
