//! Finite-sample Fourier averages and the operations built on them.
//!
//! A mode value at normalized frequency `nu` is the average
//! `(1/n) * sum_j exp(+i 2 pi j nu) * g(j)` over the available samples. For
//! signals observed over whole periods of `1/nu` samples this is exact; for
//! frequencies off the DFT grid of the record the estimate carries an
//! `O(1/n)` leakage term. No windowing is applied.
//!
//! Reconstruction pairs the averaging exponent with `exp(-i 2 pi nu j)`, so
//! `arg(mode) / (2 pi nu)` is the sample index of the peak of a cosine-like
//! component. Only non-negative frequencies are stored; for real signals the
//! negative-frequency partner is the complex conjugate and reconstruction
//! doubles the real part for `0 < nu < 0.5`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Slack allowed when checking a normalized frequency against Nyquist.
const NYQUIST_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("frequency out of range: {0}")]
    FrequencyOutOfRange(String),
}

/// Uniform sampling grid of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sampling {
    interval_hours: f64,
    n_samples: usize,
    start_time: DateTime<Utc>,
}

impl Sampling {
    pub fn new(
        interval_hours: f64,
        n_samples: usize,
        start_time: DateTime<Utc>,
    ) -> Result<Self, SpectralError> {
        if !(interval_hours.is_finite() && interval_hours > 0.0) {
            return Err(SpectralError::InvalidInput(format!(
                "sampling interval must be a positive number of hours, got {interval_hours}"
            )));
        }
        if n_samples < 2 {
            return Err(SpectralError::InvalidInput(format!(
                "at least 2 samples are required, got {n_samples}"
            )));
        }
        Ok(Self {
            interval_hours,
            n_samples,
            start_time,
        })
    }

    pub fn interval_hours(&self) -> f64 {
        self.interval_hours
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    /// Total covered time, `n * interval`.
    pub fn span_hours(&self) -> f64 {
        self.n_samples as f64 * self.interval_hours
    }

    /// Timestamp of sample `index`, rounded to the millisecond.
    pub fn time_at(&self, index: usize) -> DateTime<Utc> {
        let millis = (index as f64 * self.interval_hours * 3_600_000.0).round() as i64;
        self.start_time + Duration::milliseconds(millis)
    }

    /// The sub-grid `[offset, offset + len)` of this sampling.
    pub fn window(&self, offset: usize, len: usize) -> Result<Self, SpectralError> {
        if offset + len > self.n_samples {
            return Err(SpectralError::InvalidInput(format!(
                "window {offset}..{} exceeds {} samples",
                offset + len,
                self.n_samples
            )));
        }
        Self::new(self.interval_hours, len, self.time_at(offset))
    }
}

/// A frequency identified by its period in hours, or the zero-frequency mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frequency {
    Mean,
    Period(f64),
}

impl Frequency {
    pub fn period(hours: f64) -> Result<Self, SpectralError> {
        if hours.is_finite() && hours > 0.0 {
            Ok(Frequency::Period(hours))
        } else {
            Err(SpectralError::InvalidInput(format!(
                "period must be a positive number of hours, got {hours}"
            )))
        }
    }

    /// Period in hours; `f64::INFINITY` for the mean.
    pub fn period_hours(&self) -> f64 {
        match self {
            Frequency::Mean => f64::INFINITY,
            Frequency::Period(p) => *p,
        }
    }

    pub fn is_mean(&self) -> bool {
        matches!(self, Frequency::Mean)
    }

    /// Normalized frequency `interval / period` checked against Nyquist.
    pub fn normalized(&self, interval_hours: f64) -> Result<f64, SpectralError> {
        match *self {
            Frequency::Mean => Ok(0.0),
            Frequency::Period(p) => {
                if !(p.is_finite() && p > 0.0) {
                    return Err(SpectralError::InvalidInput(format!(
                        "period must be a positive number of hours, got {p}"
                    )));
                }
                let nu = interval_hours / p;
                if nu > 0.5 + NYQUIST_SLACK {
                    return Err(SpectralError::FrequencyOutOfRange(format!(
                        "period {p}h is shorter than the Nyquist limit of {}h for {interval_hours}h sampling",
                        2.0 * interval_hours
                    )));
                }
                Ok(nu.min(0.5))
            }
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Mean => f.write_str("mean"),
            Frequency::Period(p) => write!(f, "{p}h"),
        }
    }
}

impl FromStr for Frequency {
    type Err = SpectralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = s.trim().to_ascii_lowercase();
        if token == "mean" {
            return Ok(Frequency::Mean);
        }
        let hours = token
            .strip_suffix('h')
            .and_then(|num| num.trim().parse::<f64>().ok())
            .ok_or_else(|| {
                SpectralError::InvalidInput(format!(
                    "cannot parse frequency '{}'; expected 'mean' or '<hours>h'",
                    s.trim()
                ))
            })?;
        Frequency::period(hours)
    }
}

impl Serialize for Frequency {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Frequency {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered list of distinct frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct FrequencySet(Vec<Frequency>);

impl FrequencySet {
    pub fn new(frequencies: Vec<Frequency>) -> Result<Self, SpectralError> {
        for (i, f) in frequencies.iter().enumerate() {
            if frequencies[..i].contains(f) {
                return Err(SpectralError::InvalidInput(format!(
                    "frequency {f} listed more than once"
                )));
            }
        }
        Ok(Self(frequencies))
    }

    /// `{mean, 168h, 24h, 12h, 8h, 2h}`.
    pub fn analysis_default() -> Self {
        Self(vec![
            Frequency::Mean,
            Frequency::Period(168.0),
            Frequency::Period(24.0),
            Frequency::Period(12.0),
            Frequency::Period(8.0),
            Frequency::Period(2.0),
        ])
    }

    /// `{mean, 24h, 12h}`, the set used for signal comparison and compression.
    pub fn comparison_default() -> Self {
        Self(vec![
            Frequency::Mean,
            Frequency::Period(24.0),
            Frequency::Period(12.0),
        ])
    }

    /// Every non-negative DFT frequency `k/n`, `0 <= k <= n/2`, of a sampling.
    pub fn dft_grid(sampling: &Sampling) -> Self {
        let n = sampling.n_samples();
        let span = sampling.span_hours();
        let mut out = vec![Frequency::Mean];
        out.extend((1..=n / 2).map(|k| Frequency::Period(span / k as f64)));
        Self(out)
    }

    /// Parses a comma-separated list such as `mean,24h,12h`.
    pub fn parse_list(list: &str) -> Result<Self, SpectralError> {
        let freqs = list
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Frequency>, _>>()?;
        if freqs.is_empty() {
            return Err(SpectralError::InvalidInput("empty frequency list".into()));
        }
        Self::new(freqs)
    }

    pub fn as_slice(&self) -> &[Frequency] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Frequency> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, f: &Frequency) -> bool {
        self.0.contains(f)
    }

    /// Checks every entry against the Nyquist limit of `interval_hours`.
    pub fn check_nyquist(&self, interval_hours: f64) -> Result<(), SpectralError> {
        for f in &self.0 {
            f.normalized(interval_hours)?;
        }
        Ok(())
    }

    /// Returns a copy with `f` appended, or an error if already present.
    pub fn with(&self, f: Frequency) -> Result<Self, SpectralError> {
        let mut v = self.0.clone();
        v.push(f);
        Self::new(v)
    }
}

impl fmt::Display for FrequencySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, freq) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{freq}")?;
        }
        Ok(())
    }
}

impl FromStr for FrequencySet {
    type Err = SpectralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_list(s)
    }
}

impl<'de> Deserialize<'de> for FrequencySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Vec::<Frequency>::deserialize(deserializer)?;
        FrequencySet::new(v).map_err(serde::de::Error::custom)
    }
}

impl<'a> IntoIterator for &'a FrequencySet {
    type Item = &'a Frequency;
    type IntoIter = std::slice::Iter<'a, Frequency>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Complex amplitude of one signal at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeValue {
    pub frequency: Frequency,
    pub value: Complex64,
}

impl ModeValue {
    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    pub fn phase(&self) -> f64 {
        self.value.arg()
    }

    pub fn energy(&self) -> f64 {
        self.value.norm_sqr()
    }
}

/// Mode values of a single signal over a frequency set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub signal_id: String,
    pub sampling: Sampling,
    pub modes: Vec<ModeValue>,
}

impl ModeSet {
    pub fn get(&self, frequency: &Frequency) -> Option<Complex64> {
        self.modes
            .iter()
            .find(|m| m.frequency == *frequency)
            .map(|m| m.value)
    }

    pub fn frequencies(&self) -> FrequencySet {
        FrequencySet(self.modes.iter().map(|m| m.frequency).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// True when every mode value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.value == Complex64::new(0.0, 0.0))
    }

    /// Number of real numbers needed to store the modes: one for the mean and
    /// for a Nyquist entry, two for every other frequency.
    pub fn real_parameter_count(&self) -> usize {
        self.modes
            .iter()
            .map(|m| match m.frequency.normalized(self.sampling.interval_hours()) {
                Ok(nu) if is_self_paired(nu) => 1,
                _ => 2,
            })
            .sum()
    }
}

/// Anything with an id, a uniform sampling and real sample values.
pub trait SampledSignal {
    fn signal_id(&self) -> &str;
    fn sampling(&self) -> &Sampling;
    fn values(&self) -> &[f64];
}

fn is_self_paired(nu: f64) -> bool {
    nu == 0.0 || nu == 0.5
}

/// Finite-sample Fourier average of `signal` at normalized frequency `nu`.
///
/// At `nu = 0` this is the arithmetic mean and at `nu = 0.5` the alternating
/// mean; both have an exactly zero imaginary part.
pub fn fourier_average(signal: &[f64], nu: f64) -> Result<Complex64, SpectralError> {
    if signal.len() < 2 {
        return Err(SpectralError::InvalidInput(format!(
            "Fourier average needs at least 2 samples, got {}",
            signal.len()
        )));
    }
    if !(0.0..=0.5).contains(&nu) {
        return Err(SpectralError::FrequencyOutOfRange(format!(
            "normalized frequency {nu} outside [0, 0.5]; higher frequencies alias"
        )));
    }
    let n = signal.len() as f64;
    if nu == 0.0 {
        return Ok(Complex64::new(signal.iter().sum::<f64>() / n, 0.0));
    }
    if nu == 0.5 {
        let alt: f64 = signal
            .iter()
            .enumerate()
            .map(|(j, g)| if j % 2 == 0 { *g } else { -*g })
            .sum();
        return Ok(Complex64::new(alt / n, 0.0));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, g) in signal.iter().enumerate() {
        // reduce to [0, 1) turns before scaling to keep the argument small
        let theta = 2.0 * PI * (j as f64 * nu).fract();
        let (s, c) = theta.sin_cos();
        acc += Complex64::new(c * g, s * g);
    }
    Ok(acc / n)
}

/// Mode values of raw samples over `frequencies`.
pub fn compute_modes(
    signal_id: &str,
    values: &[f64],
    sampling: &Sampling,
    frequencies: &FrequencySet,
) -> Result<ModeSet, SpectralError> {
    if values.len() != sampling.n_samples() {
        return Err(SpectralError::InvalidInput(format!(
            "signal '{signal_id}' has {} values but its sampling declares {}",
            values.len(),
            sampling.n_samples()
        )));
    }
    let modes = frequencies
        .iter()
        .map(|f| {
            let nu = f.normalized(sampling.interval_hours())?;
            Ok(ModeValue {
                frequency: *f,
                value: fourier_average(values, nu)?,
            })
        })
        .collect::<Result<Vec<_>, SpectralError>>()?;
    Ok(ModeSet {
        signal_id: signal_id.to_string(),
        sampling: *sampling,
        modes,
    })
}

pub fn compute_mode_set<S: SampledSignal + ?Sized>(
    signal: &S,
    frequencies: &FrequencySet,
) -> Result<ModeSet, SpectralError> {
    compute_modes(
        signal.signal_id(),
        signal.values(),
        signal.sampling(),
        frequencies,
    )
}

/// Energy `|value|^2` at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralEnergy {
    pub frequency: Frequency,
    pub period_hours: f64,
    pub energy: f64,
}

pub fn energy_spectrum(mode_set: &ModeSet) -> Result<Vec<SpectralEnergy>, SpectralError> {
    if mode_set.is_empty() {
        return Err(SpectralError::InvalidInput(format!(
            "mode set of '{}' is empty",
            mode_set.signal_id
        )));
    }
    Ok(mode_set
        .modes
        .iter()
        .map(|m| SpectralEnergy {
            frequency: m.frequency,
            period_hours: m.frequency.period_hours(),
            energy: m.energy(),
        })
        .collect())
}

/// Frequency of maximal energy. Exact ties go to the longest period.
pub fn dominant_period(mode_set: &ModeSet, exclude_mean: bool) -> Result<Frequency, SpectralError> {
    let mut best: Option<(Frequency, f64)> = None;
    for m in &mode_set.modes {
        if exclude_mean && m.frequency.is_mean() {
            continue;
        }
        let energy = m.energy();
        best = match best {
            None => Some((m.frequency, energy)),
            Some((f, e)) if energy > e || (energy == e && m.frequency.period_hours() > f.period_hours()) => {
                Some((m.frequency, energy))
            }
            keep => keep,
        };
    }
    best.map(|(f, _)| f).ok_or_else(|| {
        SpectralError::InvalidInput(format!(
            "mode set of '{}' has no eligible frequency",
            mode_set.signal_id
        ))
    })
}

/// Real-valued series synthesized from the modes on `sampling`'s grid.
pub fn reconstruct(mode_set: &ModeSet, sampling: &Sampling) -> Result<Vec<f64>, SpectralError> {
    let terms = mode_set
        .modes
        .iter()
        .map(|m| Ok((m.frequency.normalized(sampling.interval_hours())?, m.value)))
        .collect::<Result<Vec<_>, SpectralError>>()?;
    let out = (0..sampling.n_samples())
        .map(|j| {
            terms
                .iter()
                .map(|&(nu, a)| {
                    if nu == 0.0 {
                        a.re
                    } else if nu == 0.5 {
                        if j % 2 == 0 {
                            a.re
                        } else {
                            -a.re
                        }
                    } else {
                        let theta = 2.0 * PI * (j as f64 * nu).fract();
                        let (s, c) = theta.sin_cos();
                        // Re(a * exp(-i theta))
                        2.0 * (a.re * c + a.im * s)
                    }
                })
                .sum()
        })
        .collect();
    Ok(out)
}

/// Size and fidelity of a reduced-frequency representation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub signal_id: String,
    pub n_samples: usize,
    pub real_parameters: usize,
    pub residual_sum_squares: f64,
    pub rms_error: f64,
}

pub fn compression_report<S: SampledSignal + ?Sized>(
    signal: &S,
    frequencies: &FrequencySet,
) -> Result<(ModeSet, Vec<f64>, CompressionReport), SpectralError> {
    let modes = compute_mode_set(signal, frequencies)?;
    let approx = reconstruct(&modes, signal.sampling())?;
    let rss: f64 = signal
        .values()
        .iter()
        .zip(&approx)
        .map(|(g, h)| (g - h).powi(2))
        .sum();
    let n = signal.values().len();
    let report = CompressionReport {
        signal_id: signal.signal_id().to_string(),
        n_samples: n,
        real_parameters: modes.real_parameter_count(),
        residual_sum_squares: rss,
        rms_error: (rss / n as f64).sqrt(),
    };
    Ok((modes, approx, report))
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignalStatistics {
    pub mean: f64,
    pub std_dev: f64,
}

pub fn signal_statistics(signal: &[f64]) -> Result<SignalStatistics, SpectralError> {
    if signal.is_empty() {
        return Err(SpectralError::InvalidInput(
            "statistics of an empty signal".into(),
        ));
    }
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let var = signal.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    Ok(SignalStatistics {
        mean,
        std_dev: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn hourly(n: usize) -> Sampling {
        Sampling::new(1.0, n, Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()).unwrap()
    }

    fn square(n: usize, period: usize, on: usize, shift: usize) -> Vec<f64> {
        (0..n)
            .map(|j| if (j + period - shift % period) % period < on { 1.0 } else { 0.0 })
            .collect()
    }

    /// Direct DFT coefficient `X_k / n` with exact integer phase reduction.
    fn dft_oracle(g: &[f64], k: usize) -> Complex64 {
        let n = g.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in g.iter().enumerate() {
            let angle = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
            acc += Complex64::from_polar(*v, angle);
        }
        acc / n as f64
    }

    fn modes(pairs: &[(Frequency, Complex64)]) -> ModeSet {
        ModeSet {
            signal_id: "t".into(),
            sampling: hourly(24),
            modes: pairs
                .iter()
                .map(|&(frequency, value)| ModeValue { frequency, value })
                .collect(),
        }
    }

    #[test]
    fn constant_average_is_exact_mean() {
        let a = fourier_average(&[1.0; 37], 0.0).unwrap();
        assert_eq!(a, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn resonant_cosine_gives_half() {
        let nu0 = 1.0 / 24.0;
        let g: Vec<f64> = (0..2400).map(|j| (2.0 * PI * nu0 * j as f64).cos()).collect();
        let a = fourier_average(&g, nu0).unwrap();
        assert!((a - Complex64::new(0.5, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn shifted_cosine_phase_marks_peak_sample() {
        let nu0 = 1.0 / 24.0;
        let g: Vec<f64> = (0..2400)
            .map(|j| (2.0 * PI * nu0 * (j as f64 - 6.0)).cos())
            .collect();
        let a = fourier_average(&g, nu0).unwrap();
        let expected = Complex64::from_polar(0.5, PI / 2.0);
        assert!((a - expected).norm() < 1e-9);
        assert!((a.arg() / (2.0 * PI * nu0) - 6.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_empty_and_aliased() {
        assert!(matches!(
            fourier_average(&[], 0.1),
            Err(SpectralError::InvalidInput(_))
        ));
        assert!(matches!(
            fourier_average(&[1.0, 2.0], 0.6),
            Err(SpectralError::FrequencyOutOfRange(_))
        ));
        assert!(matches!(
            fourier_average(&[1.0, 2.0], -0.1),
            Err(SpectralError::FrequencyOutOfRange(_))
        ));
    }

    #[test]
    fn nyquist_message_names_limit() {
        let err = "0.5h".parse::<Frequency>().unwrap().normalized(1.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Nyquist") && msg.contains("2h"), "{msg}");
    }

    #[test]
    fn frequency_parsing() {
        assert_eq!("mean".parse::<Frequency>().unwrap(), Frequency::Mean);
        assert_eq!(" 24h".parse::<Frequency>().unwrap(), Frequency::Period(24.0));
        assert_eq!("0.5H".parse::<Frequency>().unwrap(), Frequency::Period(0.5));
        assert!("24".parse::<Frequency>().is_err());
        assert!("-3h".parse::<Frequency>().is_err());
        let set = FrequencySet::parse_list("168h,24h,12h").unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.to_string(), "168h,24h,12h");
        assert!(FrequencySet::parse_list("mean,24h,mean").is_err());
    }

    #[test]
    fn zero_signal_has_zero_modes() {
        let s = hourly(48);
        let m = compute_modes("z", &[0.0; 48], &s, &FrequencySet::analysis_default()).unwrap();
        assert!(m.modes.iter().all(|v| v.value == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn sampling_mismatch_is_invalid() {
        let err = compute_modes("x", &[0.0; 10], &hourly(12), &FrequencySet::comparison_default());
        assert!(matches!(err, Err(SpectralError::InvalidInput(_))));
    }

    #[test]
    fn daily_square_wave_spectrum() {
        let g = square(2016, 24, 12, 0);
        let freqs = FrequencySet::parse_list("mean,168h,24h,2h").unwrap();
        let m = compute_modes("sq", &g, &hourly(2016), &freqs).unwrap();
        let mean = m.get(&Frequency::Mean).unwrap();
        assert!((mean.re - 0.5).abs() < 1e-12 && mean.im == 0.0);
        let a24 = m.get(&Frequency::Period(24.0)).unwrap().norm();
        let a168 = m.get(&Frequency::Period(168.0)).unwrap().norm();
        let a2 = m.get(&Frequency::Period(2.0)).unwrap().norm();
        assert!(a168 < 0.05 * a24 && a2 < 0.05 * a24);
        // closed form |A_1| = sin(pi m/N) / (N sin(pi/N))
        let closed = (PI * 12.0 / 24.0).sin() / (24.0 * (PI / 24.0).sin());
        assert!((a24 - closed).abs() < 1e-12);
        // the 24h entry is the k = 84 DFT bin of 2016 samples
        let oracle = dft_oracle(&g, 84);
        assert!((m.get(&Frequency::Period(24.0)).unwrap() - oracle).norm() < 1e-9);
        assert_eq!(dominant_period(&m, true).unwrap(), Frequency::Period(24.0));
    }

    #[test]
    fn weekly_square_wave_concentrates_at_168h() {
        let g = square(2016, 168, 84, 0);
        let m = compute_modes("wk", &g, &hourly(2016), &FrequencySet::analysis_default()).unwrap();
        assert_eq!(dominant_period(&m, true).unwrap(), Frequency::Period(168.0));
    }

    #[test]
    fn energy_spectrum_examples() {
        let m = modes(&[
            (Frequency::Mean, Complex64::new(0.5, 0.0)),
            (Frequency::Period(24.0), Complex64::new(0.3, 0.4)),
        ]);
        let e = energy_spectrum(&m).unwrap();
        assert_eq!(e[0].period_hours, f64::INFINITY);
        assert!((e[0].energy - 0.25).abs() < 1e-15);
        assert_eq!(e[1].period_hours, 24.0);
        assert!((e[1].energy - 0.25).abs() < 1e-15);

        let empty = modes(&[]);
        assert!(energy_spectrum(&empty).is_err());
    }

    #[test]
    fn dominant_period_strict_and_tie() {
        let strict = modes(&[
            (Frequency::Period(24.0), Complex64::new(0.4, 0.0)),
            (Frequency::Period(168.0), Complex64::new(0.1, 0.0)),
        ]);
        assert_eq!(dominant_period(&strict, true).unwrap(), Frequency::Period(24.0));
        let tie = modes(&[
            (Frequency::Period(24.0), Complex64::new(0.3, 0.0)),
            (Frequency::Period(168.0), Complex64::new(0.3, 0.0)),
        ]);
        assert_eq!(dominant_period(&tie, true).unwrap(), Frequency::Period(168.0));
        let only_mean = modes(&[(Frequency::Mean, Complex64::new(0.3, 0.0))]);
        assert!(dominant_period(&only_mean, true).is_err());
        assert_eq!(dominant_period(&only_mean, false).unwrap(), Frequency::Mean);
    }

    #[test]
    fn reconstruct_mean_only() {
        let m = modes(&[(Frequency::Mean, Complex64::new(0.5, 0.0))]);
        let r = reconstruct(&m, &hourly(10)).unwrap();
        assert!(r.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn reconstruct_cosine_from_two_modes() {
        let g: Vec<f64> = (0..240).map(|j| (2.0 * PI * j as f64 / 24.0).cos()).collect();
        let s = hourly(240);
        let m = compute_modes("c", &g, &s, &FrequencySet::parse_list("mean,24h").unwrap()).unwrap();
        let r = reconstruct(&m, &s).unwrap();
        for (a, b) in g.iter().zip(&r) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn full_grid_reconstruction_is_identity_odd_and_even() {
        for n in [15usize, 16] {
            let g: Vec<f64> = (0..n).map(|j| ((j * 7 + 3) % 5) as f64 - 1.3).collect();
            let s = hourly(n);
            let m = compute_modes("g", &g, &s, &FrequencySet::dft_grid(&s)).unwrap();
            let r = reconstruct(&m, &s).unwrap();
            for (a, b) in g.iter().zip(&r) {
                assert!((a - b).abs() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn compression_counts_real_parameters() {
        struct Raw(Vec<f64>, Sampling);
        impl SampledSignal for Raw {
            fn signal_id(&self) -> &str {
                "raw"
            }
            fn sampling(&self) -> &Sampling {
                &self.1
            }
            fn values(&self) -> &[f64] {
                &self.0
            }
        }
        let sig = Raw(square(2016, 24, 6, 8), hourly(2016));
        let (_, approx, rep) = compression_report(&sig, &FrequencySet::comparison_default()).unwrap();
        assert_eq!(rep.real_parameters, 5);
        assert_eq!(rep.n_samples, 2016);
        assert_eq!(approx.len(), 2016);
        let with_nyquist = FrequencySet::parse_list("mean,24h,2h").unwrap();
        let m = compute_mode_set(&sig, &with_nyquist).unwrap();
        assert_eq!(m.real_parameter_count(), 4);
    }

    #[test]
    fn statistics_examples() {
        let s = signal_statistics(&[1.0; 9]).unwrap();
        assert_eq!((s.mean, s.std_dev), (1.0, 0.0));
        let s = signal_statistics(&square(96, 24, 12, 0)).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-15 && (s.std_dev - 0.5).abs() < 1e-15);
        assert!(signal_statistics(&[]).is_err());
    }

    #[test]
    fn sampling_validation_and_window() {
        let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        assert!(Sampling::new(0.0, 10, t0).is_err());
        assert!(Sampling::new(1.0, 1, t0).is_err());
        let s = Sampling::new(0.25, 100, t0).unwrap();
        assert_eq!(s.time_at(4), t0 + Duration::hours(1));
        let w = s.window(8, 20).unwrap();
        assert_eq!(w.start_time(), t0 + Duration::hours(2));
        assert!(s.window(90, 20).is_err());
    }
}
