//! Heart-rate estimation from displacement signals.
//!
//! Two estimators operate on a band-limited displacement signal: `fft_peak`
//! reads the tallest spectral line in the heart band, `peak_rr` detects
//! individual beats and averages the inter-beat intervals. An authorized
//! observer first cancels the decoy track its key implies (the actuation
//! waveform is a deterministic, public function of the key, so the key
//! holder can rebuild it and subtract a least-squares fit) and then runs a
//! cascade of narrow notch filters centered at the key frequencies as a
//! backstop; without the key the decoys are spectrally indistinguishable
//! from the real heartbeat.
//!
//! All filtering is zero-phase (forward-backward), so beat timing survives.
//! High-rate signals are internally decimated to roughly 32 Hz before IIR
//! filtering: the heart band sits below 2 Hz, and biquads with normalized
//! center frequencies of 1e-4 would be numerically fragile.

use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::obfuscation::ObfuscationKey;
use crate::signal::{
    actuate, generate_pulse_train, ActuatorKernel, DisplacementSignal, PulseTrainSpec, SignalLabel,
};

/// Pass band for heart-rate content, with a Butterworth order descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeartBandFilter {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Butterworth order per edge; 2 and 4 are supported.
    pub order: usize,
}

impl Default for HeartBandFilter {
    fn default() -> Self {
        HeartBandFilter {
            low_hz: 0.8,
            high_hz: 2.0,
            order: 4,
        }
    }
}

impl HeartBandFilter {
    pub fn low_bpm(&self) -> f64 {
        self.low_hz * 60.0
    }

    pub fn high_bpm(&self) -> f64 {
        self.high_hz * 60.0
    }

    fn validate(&self, rate_hz: f64) -> Result<()> {
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz) {
            return Err(Error::parameter("need 0 < low_hz < high_hz"));
        }
        if self.high_hz >= rate_hz / 2.0 {
            return Err(Error::parameter(format!(
                "band edge {} Hz is at or beyond the Nyquist rate {} Hz",
                self.high_hz,
                rate_hz / 2.0
            )));
        }
        if self.order != 2 && self.order != 4 {
            return Err(Error::parameter("supported Butterworth orders are 2 and 4"));
        }
        Ok(())
    }
}

/// Cascade of narrow band-stop filters, the authorized decryption mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotchBank {
    pub centers_bpm: Vec<f64>,
    /// Half stop-band width. Must be at least 2 BPM, the spectral
    /// resolution of a 30 s window, so each notch removes exactly one
    /// resolvable component.
    pub half_bandwidth_bpm: f64,
}

impl NotchBank {
    pub fn new(centers_bpm: Vec<f64>) -> Self {
        NotchBank {
            centers_bpm,
            half_bandwidth_bpm: 2.0,
        }
    }

    /// Bank with one notch per key frequency.
    pub fn from_key(key: &ObfuscationKey) -> Self {
        NotchBank::new(key.frequencies_bpm.clone())
    }

    pub fn is_empty(&self) -> bool {
        self.centers_bpm.is_empty()
    }

    fn validate(&self, rate_hz: f64) -> Result<()> {
        if self.half_bandwidth_bpm < 2.0 {
            return Err(Error::parameter(
                "notch half-bandwidth below 2 BPM cannot remove a resolvable component",
            ));
        }
        for &c in &self.centers_bpm {
            if !(c.is_finite() && c > self.half_bandwidth_bpm) {
                return Err(Error::parameter(format!("bad notch center {c} BPM")));
            }
            if c / 60.0 >= rate_hz / 2.0 {
                return Err(Error::parameter(format!(
                    "notch center {c} BPM is beyond the Nyquist rate"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverMode {
    Authorized,
    Unauthorized,
}

impl std::fmt::Display for ObserverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ObserverMode::Authorized => write!(f, "authorized"),
            ObserverMode::Unauthorized => write!(f, "unauthorized"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    FftPeak,
    PeakRr,
}

impl std::fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorMethod::FftPeak => write!(f, "fft_peak"),
            EstimatorMethod::PeakRr => write!(f, "peak_rr"),
        }
    }
}

/// One heart-rate reading. `bpm` is `None` when the estimator could not
/// produce a value inside the physiological range of 30-240 BPM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeartRateEstimate {
    pub bpm: Option<f64>,
    pub method: EstimatorMethod,
    pub mode: ObserverMode,
    /// In [0, 1]. For `fft_peak`: one minus the runner-up-to-top peak
    /// magnitude ratio. For `peak_rr`: one minus the coefficient of
    /// variation of the inter-beat intervals.
    pub confidence: f64,
}

impl HeartRateEstimate {
    fn invalid(method: EstimatorMethod, mode: ObserverMode) -> Self {
        HeartRateEstimate {
            bpm: None,
            method,
            mode,
            confidence: 0.0,
        }
    }
}

const PHYSIOLOGICAL_BPM: (f64, f64) = (30.0, 240.0);
/// Target analysis rate after decimation; chosen so the heart band sits at
/// comfortable normalized frequencies while two octaves of headroom remain.
const ANALYSIS_RATE_HZ: f64 = 32.0;

fn decimation_factor(rate_hz: f64) -> usize {
    if rate_hz <= 2.0 * ANALYSIS_RATE_HZ {
        1
    } else {
        (rate_hz / ANALYSIS_RATE_HZ).round() as usize
    }
}

/// Bring a high-rate signal down to the analysis rate (anti-aliased FIR
/// decimation, delay compensated). Signals at or below 64 Hz pass through.
pub fn to_analysis_rate(sig: &DisplacementSignal) -> DisplacementSignal {
    let m = decimation_factor(sig.sample_rate_hz);
    if m == 1 {
        return sig.clone();
    }
    let samples = dsp::decimate(&sig.samples_mm, sig.sample_rate_hz, m);
    DisplacementSignal::new(samples, sig.sample_rate_hz / m as f64, sig.label)
        .expect("decimation preserves validity")
}

fn ring_pad(rate_hz: f64, low_hz: f64, len: usize) -> usize {
    let pad = (3.0 * rate_hz / low_hz).ceil() as usize;
    pad.min(len.saturating_sub(1))
}

/// Zero-phase Butterworth band-pass restricted to the heart band.
///
/// The signal must be longer than the filter transient (four periods of the
/// low edge). Output is at the analysis rate when the input was high-rate.
pub fn bandpass(sig: &DisplacementSignal, band: &HeartBandFilter) -> Result<DisplacementSignal> {
    band.validate(sig.sample_rate_hz)?;
    if sig.duration_s() < 4.0 / band.low_hz {
        return Err(Error::parameter(format!(
            "signal of {:.1} s is shorter than the filter transient ({:.1} s)",
            sig.duration_s(),
            4.0 / band.low_hz
        )));
    }
    let work = to_analysis_rate(sig);
    let rate = work.sample_rate_hz;
    let sos = match band.order {
        4 => dsp::butterworth_bandpass(band.low_hz, band.high_hz, rate),
        2 => vec![
            dsp::highpass_biquad(band.low_hz, rate, std::f64::consts::FRAC_1_SQRT_2),
            dsp::lowpass_biquad(band.high_hz, rate, std::f64::consts::FRAC_1_SQRT_2),
        ],
        _ => unreachable!("validated above"),
    };
    let pad = ring_pad(rate, band.low_hz, work.len());
    let samples = dsp::filtfilt(&sos, &work.samples_mm, pad);
    DisplacementSignal::new(samples, rate, work.label)
}

/// Apply every notch of `bank` zero-phase. An empty bank returns the signal
/// unchanged, bit for bit.
pub fn notch_filter(sig: &DisplacementSignal, bank: &NotchBank) -> Result<DisplacementSignal> {
    if bank.is_empty() {
        return Ok(sig.clone());
    }
    let work = to_analysis_rate(sig);
    let rate = work.sample_rate_hz;
    bank.validate(rate)?;
    let sos: Vec<dsp::Biquad> = bank
        .centers_bpm
        .iter()
        .map(|&c| dsp::notch_biquad(c / 60.0, rate, bank.half_bandwidth_bpm / 60.0))
        .collect();
    // Notches ring for about Q periods of the center frequency.
    let min_center = bank.centers_bpm.iter().cloned().fold(f64::MAX, f64::min);
    let q = min_center / (2.0 * bank.half_bandwidth_bpm);
    let pad = ((3.0 * q * 60.0 / min_center * rate).ceil() as usize).min(work.len() - 1);
    let samples = dsp::filtfilt(&sos, &work.samples_mm, pad);
    DisplacementSignal::new(samples, rate, work.label)
}

/// Authorized decryption: notch out every key frequency.
pub fn authorized_filter(
    sig: &DisplacementSignal,
    key: &ObfuscationKey,
) -> Result<DisplacementSignal> {
    notch_filter(sig, &NotchBank::from_key(key))
}

/// Linear interpolation of `sig` at time `t_s`, clamped at the ends. This is
/// how the sensor samples chest motion at frame instants, so the rebuilt
/// decoy track lands on the observation clock the same way the real one did.
fn sample_at(sig: &DisplacementSignal, t_s: f64) -> f64 {
    let pos = t_s * sig.sample_rate_hz;
    let i = pos.floor() as isize;
    if i < 0 {
        return sig.samples_mm[0];
    }
    let i = i as usize;
    if i + 1 >= sig.len() {
        return sig.samples_mm[sig.len() - 1];
    }
    let frac = pos - i as f64;
    sig.samples_mm[i] * (1.0 - frac) + sig.samples_mm[i + 1] * frac
}

/// The actuated decoy track a key implies, sampled on the given clock.
///
/// Pulse-train and kernel parameters are the public defaults and the train
/// is a deterministic function of the key frequencies, so any key holder
/// can reproduce the track exactly, up to the actuator's drive level.
fn decoy_template(key: &ObfuscationKey, len: usize, rate_hz: f64) -> Result<DisplacementSignal> {
    let duration_s = len as f64 / rate_hz;
    let base = PulseTrainSpec::default().base_duration_s;
    let spec = PulseTrainSpec {
        repetitions: (duration_s / base).ceil().max(1.0) as usize,
        ..PulseTrainSpec::for_frequencies(key.frequencies_bpm.clone())
    };
    let train = generate_pulse_train(&spec)?;
    let track = actuate(&train, &ActuatorKernel::default())?;
    let samples = (0..len)
        .map(|i| sample_at(&track, i as f64 / rate_hz))
        .collect();
    DisplacementSignal::new(samples, rate_hz, SignalLabel::Decoy)
}

/// Band-pass the signal and cancel the decoy track its key implies.
///
/// The track is rebuilt from the key, sampled on the signal's clock, passed
/// through the same band-pass, and removed by a least-squares amplitude fit;
/// the drive level is the only unknown. This runs before notching in the
/// authorized chain because the pulse train is not a sum of pure tones: its
/// zero-crossing structure spreads energy across the whole heart band, where
/// band-stop filters at the key frequencies cannot reach it. A track actuated
/// with non-default hardware parameters matches only partially; the residue
/// is left for the notch bank, so mismatch degrades gracefully.
pub fn cancel_decoys(
    sig: &DisplacementSignal,
    key: &ObfuscationKey,
) -> Result<DisplacementSignal> {
    let band = HeartBandFilter::default();
    let banded = bandpass(sig, &band)?;
    if key.frequencies_bpm.is_empty() {
        return Ok(banded);
    }
    let template = decoy_template(key, sig.len(), sig.sample_rate_hz)?;
    let t_banded = bandpass(&template, &band)?;
    let n = banded.len().min(t_banded.len());
    let num: f64 = (0..n)
        .map(|i| banded.samples_mm[i] * t_banded.samples_mm[i])
        .sum();
    let den: f64 = t_banded.samples_mm[..n].iter().map(|t| t * t).sum();
    if den <= f64::EPSILON {
        return Ok(banded);
    }
    let alpha = num / den;
    let samples = (0..banded.len())
        .map(|i| banded.samples_mm[i] - alpha * t_banded.samples_mm.get(i).copied().unwrap_or(0.0))
        .collect();
    DisplacementSignal::new(samples, banded.sample_rate_hz, banded.label)
}

fn require_duration(sig: &DisplacementSignal, method: EstimatorMethod) -> Result<()> {
    if sig.duration_s() < 10.0 {
        return Err(Error::parameter(format!(
            "{method} needs at least 10 s of signal, got {:.1} s",
            sig.duration_s()
        )));
    }
    Ok(())
}

/// Beat detection estimator: find prominent maxima, average the inter-beat
/// intervals, and report `60 / mean RR`.
pub fn estimate_hr_peaks(sig: &DisplacementSignal) -> Result<HeartRateEstimate> {
    require_duration(sig, EstimatorMethod::PeakRr)?;
    let method = EstimatorMethod::PeakRr;
    let mode = ObserverMode::Unauthorized;
    let xs = &sig.samples_mm;
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return Ok(HeartRateEstimate::invalid(method, mode));
    }
    let min_distance = (0.25 * sig.sample_rate_hz).round() as usize;
    let peaks = dsp::select_peaks(xs, 0.3 * std, min_distance.max(1));
    if peaks.len() < 2 {
        return Ok(HeartRateEstimate::invalid(method, mode));
    }
    let rr: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / sig.sample_rate_hz)
        .collect();
    let mean_rr = rr.iter().sum::<f64>() / rr.len() as f64;
    let bpm = 60.0 / mean_rr;
    if !(PHYSIOLOGICAL_BPM.0..=PHYSIOLOGICAL_BPM.1).contains(&bpm) {
        return Ok(HeartRateEstimate::invalid(method, mode));
    }
    let var_rr = rr.iter().map(|r| (r - mean_rr) * (r - mean_rr)).sum::<f64>() / rr.len() as f64;
    let confidence = (1.0 - var_rr.sqrt() / mean_rr).clamp(0.0, 1.0);
    Ok(HeartRateEstimate {
        bpm: Some(bpm),
        method,
        mode,
        confidence,
    })
}

/// Spectral estimator: the tallest magnitude peak inside the default heart
/// band, refined by parabolic interpolation.
pub fn estimate_hr_fft(sig: &DisplacementSignal) -> Result<HeartRateEstimate> {
    require_duration(sig, EstimatorMethod::FftPeak)?;
    let method = EstimatorMethod::FftPeak;
    let mode = ObserverMode::Unauthorized;
    let band = HeartBandFilter::default();
    let spec = dsp::magnitude_spectrum(&sig.samples_mm, sig.sample_rate_hz);
    let top = match dsp::band_peak(&spec, band.low_hz, band.high_hz) {
        Some(p) if p.magnitude > 0.0 => p,
        _ => return Ok(HeartRateEstimate::invalid(method, mode)),
    };
    let bpm = top.freq_hz * 60.0;
    if !(PHYSIOLOGICAL_BPM.0..=PHYSIOLOGICAL_BPM.1).contains(&bpm) {
        return Ok(HeartRateEstimate::invalid(method, mode));
    }
    // Runner-up outside a 4 BPM guard band around the winner.
    let guard = 4.0 / 60.0;
    let second = dsp::band_peak_excluding(&spec, band.low_hz, band.high_hz, top.freq_hz, guard)
        .map(|p| p.magnitude)
        .unwrap_or(0.0);
    let confidence = (1.0 - second / top.magnitude).clamp(0.0, 1.0);
    Ok(HeartRateEstimate {
        bpm: Some(bpm),
        method,
        mode,
        confidence,
    })
}

fn with_mode(est: HeartRateEstimate, mode: ObserverMode) -> HeartRateEstimate {
    HeartRateEstimate { mode, ..est }
}

/// Octave-error guard. A pulse-shaped beat has strong overtones, and a
/// narrow pulse can put more energy into its second harmonic than into the
/// fundamental, so the tallest line is sometimes double the true rate. When
/// the spectrum carries a comparable line at half the winning frequency,
/// that line is the fundamental and wins instead. Returns the subharmonic
/// reading and its magnitude relative to the original winner.
fn subharmonic_peak(sig: &DisplacementSignal, top_bpm: f64) -> Option<(f64, f64)> {
    let band = HeartBandFilter::default();
    let spec = dsp::magnitude_spectrum(&sig.samples_mm, sig.sample_rate_hz);
    let top = dsp::band_peak(&spec, band.low_hz, band.high_hz)?;
    let lo = ((top_bpm / 2.0 - 3.0) / 60.0).max(band.low_hz);
    let hi = ((top_bpm / 2.0 + 3.0) / 60.0).min(band.high_hz);
    if lo >= hi {
        return None;
    }
    let sub = dsp::band_peak(&spec, lo, hi)?;
    let bpm = sub.freq_hz * 60.0;
    if sub.magnitude < 0.6 * top.magnitude
        || (bpm - top_bpm / 2.0).abs() > 2.5
        || !(PHYSIOLOGICAL_BPM.0..=PHYSIOLOGICAL_BPM.1).contains(&bpm)
    {
        return None;
    }
    Some((bpm, (sub.magnitude / top.magnitude).min(1.0)))
}

/// Samples to drop from each end after zero-phase filtering. Reflection
/// padding cannot know the signal's future, so each edge carries a filter
/// ring proportional to the local curvature; with centimeter-scale breathing
/// the ring can out-shout a sub-millimeter heart line in the spectrum. The
/// guard never eats into the 10 s the estimators need.
fn settle_guard(rate_hz: f64, low_hz: f64, duration_s: f64) -> usize {
    let guard_s = (3.0 / low_hz).min(((duration_s - 10.0) / 2.0).max(0.0));
    (guard_s * rate_hz).floor() as usize
}

fn trim_settled(sig: DisplacementSignal, low_hz: f64) -> DisplacementSignal {
    let guard = settle_guard(sig.sample_rate_hz, low_hz, sig.duration_s());
    if guard == 0 || sig.len() <= 2 * guard {
        return sig;
    }
    DisplacementSignal::new(
        sig.samples_mm[guard..sig.len() - guard].to_vec(),
        sig.sample_rate_hz,
        sig.label,
    )
    .expect("trimmed signal stays valid")
}

/// Prepare the signal an estimator sees: band-pass, then (authorized only)
/// decoy-track cancellation followed by the key's notch cascade, then trim
/// the filter settle regions at both ends.
pub fn prepare(
    sig: &DisplacementSignal,
    mode: ObserverMode,
    key: Option<&ObfuscationKey>,
) -> Result<DisplacementSignal> {
    let band = HeartBandFilter::default();
    let filtered = match mode {
        ObserverMode::Unauthorized => bandpass(sig, &band)?,
        ObserverMode::Authorized => {
            let key = key.ok_or_else(|| Error::parameter("authorized mode requires a key"))?;
            let cancelled = cancel_decoys(sig, key)?;
            authorized_filter(&cancelled, key)?
        }
    };
    Ok(trim_settled(filtered, band.low_hz))
}

/// Full estimation pipeline: band-pass, decoy cancellation and notching when
/// authorized, `fft_peak` headline with an octave guard and a `peak_rr`
/// cross-check. A winning line whose subharmonic carries comparable energy
/// is read at the subharmonic; when the methods still disagree by more than
/// 10 BPM the reading is kept but its confidence collapses.
pub fn estimate(
    sig: &DisplacementSignal,
    mode: ObserverMode,
    key: Option<&ObfuscationKey>,
) -> Result<HeartRateEstimate> {
    let prepared = prepare(sig, mode, key)?;
    let mut headline = with_mode(estimate_hr_fft(&prepared)?, mode);
    if let Some(a) = headline.bpm {
        if let Some((bpm, support)) = subharmonic_peak(&prepared, a) {
            headline.bpm = Some(bpm);
            headline.confidence = headline.confidence.min(support);
        }
    }
    let cross = estimate_hr_peaks(&prepared)?;
    if let (Some(a), Some(b)) = (headline.bpm, cross.bpm) {
        if (a - b).abs() > 10.0 {
            headline.confidence = headline.confidence.min(0.1);
        }
    }
    Ok(headline)
}

/// Both estimators on the same prepared signal, for side-by-side reporting.
pub fn estimate_methods(
    sig: &DisplacementSignal,
    mode: ObserverMode,
    key: Option<&ObfuscationKey>,
) -> Result<Vec<HeartRateEstimate>> {
    let prepared = prepare(sig, mode, key)?;
    Ok(vec![
        with_mode(estimate_hr_fft(&prepared)?, mode),
        with_mode(estimate_hr_peaks(&prepared)?, mode),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{
        actuate, generate_pulse_train, superimpose, synthesize_heartbeat, ActuatorKernel,
        PulseTrainSpec, SignalLabel, VitalSignSource,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn tone(bpm: f64, amp: f64, duration_s: f64, rate_hz: f64) -> DisplacementSignal {
        let n = (duration_s * rate_hz) as usize;
        let samples = (0..n)
            .map(|i| amp * (TAU * bpm / 60.0 * i as f64 / rate_hz).sin())
            .collect();
        DisplacementSignal::new(samples, rate_hz, SignalLabel::True).unwrap()
    }

    fn rms(xs: &[f64]) -> f64 {
        (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
    }

    fn composite_with_decoys(
        hr_bpm: f64,
        decoys: &[f64],
        duration_s: f64,
        seed: u64,
    ) -> (DisplacementSignal, ObfuscationKey) {
        composite_with_decoys_at(hr_bpm, decoys, duration_s, seed, 1.0)
    }

    fn composite_with_decoys_at(
        hr_bpm: f64,
        decoys: &[f64],
        duration_s: f64,
        seed: u64,
        amplitude_scale: f64,
    ) -> (DisplacementSignal, ObfuscationKey) {
        let source = VitalSignSource {
            heart_rate_bpm: hr_bpm,
            breathing: None,
            jitter_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = synthesize_heartbeat(&source, duration_s, 2000.0, &mut rng).unwrap();
        let reps = (duration_s / 10.0).ceil() as usize;
        let spec = PulseTrainSpec {
            decoy_frequencies_bpm: decoys.to_vec(),
            repetitions: reps,
            ..Default::default()
        };
        let train = generate_pulse_train(&spec).unwrap();
        let kernel = ActuatorKernel {
            peak_displacement_mm: ActuatorKernel::default().peak_displacement_mm * amplitude_scale,
            ..Default::default()
        };
        let decoy = actuate(&train, &kernel).unwrap();
        // Trim both to the requested duration before mixing.
        let n = (duration_s * 2000.0) as usize;
        let truth = DisplacementSignal::new(
            truth.samples_mm[..n].to_vec(),
            2000.0,
            SignalLabel::True,
        )
        .unwrap();
        let decoy = DisplacementSignal::new(
            decoy.samples_mm[..n].to_vec(),
            2000.0,
            SignalLabel::Decoy,
        )
        .unwrap();
        let composite = superimpose(&truth, &decoy).unwrap();

        let space = crate::obfuscation::FrequencySpace::new(45.0, 180.0, 1.0).unwrap();
        let mut key = ObfuscationKey::generate(decoys.len(), &space, seed).unwrap();
        key.frequencies_bpm = decoys.to_vec();
        (composite, key)
    }

    #[test]
    fn inband_tone_passes_outband_tone_dies() {
        let band = HeartBandFilter::default();
        let in_tone = tone(72.0, 1.0, 30.0, 200.0); // 1.2 Hz
        let out = bandpass(&in_tone, &band).unwrap();
        let gain = rms(&out.samples_mm) / rms(&in_tone.samples_mm);
        let gain_db = 20.0 * gain.log10();
        assert!(gain_db.abs() <= 1.0, "in-band gain {gain_db} dB");

        // Stop-band rejection is judged on the settled region; the edges
        // carry the reflection-padding ring that prepare() trims away.
        let breath = tone(15.0, 1.0, 30.0, 200.0); // 0.25 Hz
        let out = bandpass(&breath, &band).unwrap();
        let guard = (3.0 / band.low_hz * out.sample_rate_hz) as usize;
        let mid = guard..out.len() - guard;
        let att_db =
            20.0 * (rms(&out.samples_mm[mid]) / rms(&breath.samples_mm)).log10();
        assert!(att_db <= -40.0, "out-of-band attenuation {att_db} dB");
    }

    #[test]
    fn breathing_does_not_corrupt_the_estimate() {
        // Breathing is ~8x the heartbeat amplitude; after band-pass its
        // steady-state residue is negligible, and the settle-guard trim
        // keeps its edge ring away from the estimators.
        let source = VitalSignSource {
            breathing: Some(crate::signal::Breathing::default()),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sig = synthesize_heartbeat(&source, 30.0, 2000.0, &mut rng).unwrap();
        let est = estimate(&sig, ObserverMode::Unauthorized, None).unwrap();
        let bpm = est.bpm.unwrap();
        assert!((bpm - 66.0).abs() <= 2.0, "got {bpm}");
    }

    #[test]
    fn mixture_correlates_with_pure_component() {
        let rate = 200.0;
        let n = (30.0 * rate) as usize;
        let mixed: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                (TAU * 1.2 * t).sin() + 2.0 * (TAU * 0.25 * t).sin()
            })
            .collect();
        let mixed = DisplacementSignal::new(mixed, rate, SignalLabel::Composite).unwrap();
        let out = bandpass(&mixed, &HeartBandFilter::default()).unwrap();
        // Reference sampled at the decimated instants.
        let m = (rate / out.sample_rate_hz).round();
        let reference: Vec<f64> = (0..out.len())
            .map(|k| (TAU * 1.2 * (k as f64 * m) / rate).sin())
            .collect();
        let r = dsp::pearson(&out.samples_mm, &reference);
        assert!(r >= 0.99, "correlation {r}");
    }

    #[test]
    fn bandpass_rejects_bad_setups() {
        let sig = tone(66.0, 1.0, 30.0, 10.0);
        let mut band = HeartBandFilter::default();
        band.high_hz = 6.0;
        assert!(bandpass(&sig, &band).is_err(), "edge beyond Nyquist");
        band = HeartBandFilter {
            low_hz: 2.0,
            high_hz: 0.8,
            order: 4,
        };
        assert!(bandpass(&sig, &band).is_err());
        band = HeartBandFilter {
            order: 3,
            ..Default::default()
        };
        assert!(bandpass(&sig, &band).is_err());
        let short = tone(66.0, 1.0, 3.0, 100.0);
        assert!(bandpass(&short, &HeartBandFilter::default()).is_err());
    }

    #[test]
    fn empty_notch_bank_is_identity() {
        let sig = tone(66.0, 0.5, 12.0, 100.0);
        let bank = NotchBank::new(vec![]);
        let out = notch_filter(&sig, &bank).unwrap();
        assert_eq!(out.samples_mm, sig.samples_mm);
        assert_eq!(out.sample_rate_hz, sig.sample_rate_hz);
    }

    #[test]
    fn notch_bank_validation() {
        let sig = tone(66.0, 0.5, 12.0, 32.0);
        let mut bank = NotchBank::new(vec![79.0]);
        bank.half_bandwidth_bpm = 1.0;
        assert!(notch_filter(&sig, &bank).is_err(), "half bandwidth too narrow");
        let bank = NotchBank::new(vec![1200.0]);
        assert!(notch_filter(&sig, &bank).is_err(), "center beyond Nyquist");
        let bank = NotchBank::new(vec![-5.0]);
        assert!(notch_filter(&sig, &bank).is_err());
    }

    #[test]
    fn notch_attenuates_center_but_spares_six_bpm_neighbor() {
        let space = crate::obfuscation::FrequencySpace::new(45.0, 180.0, 1.0).unwrap();
        let mut key = ObfuscationKey::generate(1, &space, 1).unwrap();
        key.frequencies_bpm = vec![79.0];

        let center = tone(79.0, 1.0, 40.0, 32.0);
        let out = authorized_filter(&center, &key).unwrap();
        // Judge attenuation over the middle to exclude edge transients.
        let mid = out.len() / 4..3 * out.len() / 4;
        let att = 20.0
            * (rms(&out.samples_mm[mid.clone()]) / rms(&center.samples_mm[mid.clone()])).log10();
        assert!(att <= -30.0, "center attenuation {att} dB");

        let neighbor = tone(85.0, 1.0, 40.0, 32.0);
        let out = authorized_filter(&neighbor, &key).unwrap();
        let loss =
            20.0 * (rms(&out.samples_mm[mid.clone()]) / rms(&neighbor.samples_mm[mid])).log10();
        assert!(loss >= -3.0, "neighbor loss {loss} dB");
    }

    #[test]
    fn peak_rr_reads_synthetic_heartbeat() {
        let source = VitalSignSource {
            heart_rate_bpm: 66.0,
            breathing: None,
            jitter_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sig = synthesize_heartbeat(&source, 30.0, 200.0, &mut rng).unwrap();
        let est = estimate_hr_peaks(&sig).unwrap();
        let bpm = est.bpm.expect("valid estimate");
        assert!((bpm - 66.0).abs() <= 1.0, "got {bpm}");
        assert!(est.confidence > 0.9, "confidence {}", est.confidence);
    }

    #[test]
    fn exact_one_second_intervals_give_sixty_bpm() {
        // Triangular bumps spaced exactly 1 s apart.
        let rate = 100.0;
        let n = (15.0 * rate) as usize;
        let mut xs = vec![0.0; n];
        for beat in 0..15 {
            let c = (beat as f64 * rate) as usize;
            for (off, w) in [(0usize, 1.0), (1, 0.5), (2, 0.1)] {
                if c + off < n {
                    xs[c + off] += w;
                }
                if c >= off && off > 0 {
                    xs[c - off] += w;
                }
            }
        }
        let sig = DisplacementSignal::new(xs, rate, SignalLabel::True).unwrap();
        let est = estimate_hr_peaks(&sig).unwrap();
        let bpm = est.bpm.unwrap();
        assert!((bpm - 60.0).abs() < 1e-9, "got {bpm}");
    }

    #[test]
    fn fft_peak_reads_clean_tone_within_resolution() {
        let sig = tone(66.0, 0.5, 30.0, 100.0);
        let est = estimate_hr_fft(&sig).unwrap();
        let bpm = est.bpm.unwrap();
        assert!((bpm - 66.0).abs() <= 2.0, "got {bpm}");
        assert!(est.confidence > 0.5, "confidence {}", est.confidence);
    }

    #[test]
    fn estimators_agree_on_clean_signals() {
        let source = VitalSignSource {
            heart_rate_bpm: 72.0,
            breathing: None,
            jitter_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sig = synthesize_heartbeat(&source, 30.0, 200.0, &mut rng).unwrap();
        let ests = estimate_methods(&sig, ObserverMode::Unauthorized, None).unwrap();
        let fft = ests[0].bpm.unwrap();
        let rr = ests[1].bpm.unwrap();
        assert!((fft - rr).abs() <= 2.0, "fft {fft} vs rr {rr}");
    }

    #[test]
    fn flat_or_degenerate_inputs_are_flagged_invalid() {
        let flat = DisplacementSignal::new(vec![0.0; 1500], 100.0, SignalLabel::True).unwrap();
        assert!(estimate_hr_peaks(&flat).unwrap().bpm.is_none());
        assert!(estimate_hr_fft(&flat).unwrap().bpm.is_none());
        let short = tone(66.0, 1.0, 5.0, 100.0);
        assert!(estimate_hr_fft(&short).is_err(), "below 10 s precondition");
        assert!(estimate_hr_peaks(&short).is_err());
    }

    #[test]
    fn authorized_estimate_requires_key() {
        let sig = tone(66.0, 1.0, 30.0, 100.0);
        assert!(estimate(&sig, ObserverMode::Authorized, None).is_err());
    }

    #[test]
    fn no_decoys_means_modes_agree_exactly() {
        let source = VitalSignSource::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sig = synthesize_heartbeat(&source, 30.0, 2000.0, &mut rng).unwrap();
        let space = crate::obfuscation::FrequencySpace::heart_rate_default();
        let mut key = ObfuscationKey::generate(1, &space, 5).unwrap();
        key.frequencies_bpm = vec![]; // empty bank
        let unauth = estimate(&sig, ObserverMode::Unauthorized, None).unwrap();
        let auth = estimate(&sig, ObserverMode::Authorized, Some(&key)).unwrap();
        let (a, b) = (auth.bpm.unwrap(), unauth.bpm.unwrap());
        assert!((a - b).abs() < 1e-9, "auth {a} vs unauth {b}");
    }

    #[test]
    fn authorized_recovers_truth_from_composite() {
        let (composite, key) = composite_with_decoys(66.0, &[53.0, 79.0, 101.0], 30.0, 7);

        // The authorized spectrum has a single dominant peak at the truth.
        let prepared = prepare(&composite, ObserverMode::Authorized, Some(&key)).unwrap();
        let spec = dsp::magnitude_spectrum(&prepared.samples_mm, prepared.sample_rate_hz);
        let top = dsp::band_peak(&spec, 0.8, 2.0).unwrap();
        assert!(
            (top.freq_hz * 60.0 - 66.0).abs() <= 2.0,
            "top at {} BPM",
            top.freq_hz * 60.0
        );

        let auth = estimate(&composite, ObserverMode::Authorized, Some(&key)).unwrap();
        let bpm = auth.bpm.unwrap();
        assert!((bpm - 66.0).abs() <= 2.0, "authorized got {bpm}");
    }

    #[test]
    fn collision_with_notch_attenuates_the_truth() {
        // m sits on a key frequency: the authorized filter eats it too.
        let (composite, key) = composite_with_decoys(79.0, &[53.0, 79.0, 101.0], 30.0, 8);
        let banded = bandpass(&composite, &HeartBandFilter::default()).unwrap();
        let notched = authorized_filter(&banded, &key).unwrap();
        let spec_before = dsp::magnitude_spectrum(&banded.samples_mm, banded.sample_rate_hz);
        let spec_after = dsp::magnitude_spectrum(&notched.samples_mm, notched.sample_rate_hz);
        let before = dsp::band_peak(&spec_before, 79.0 / 60.0 - 0.02, 79.0 / 60.0 + 0.02)
            .map(|p| p.magnitude)
            .unwrap_or(0.0);
        let after = dsp::band_peak(&spec_after, 79.0 / 60.0 - 0.02, 79.0 / 60.0 + 0.02)
            .map(|p| p.magnitude)
            .unwrap_or(0.0);
        assert!(
            after < 0.2 * before,
            "truth not attenuated: {after} vs {before}"
        );
    }

    #[test]
    fn end_to_end_through_the_acoustic_sensor() {
        let (composite, key) = composite_with_decoys(66.0, &[53.0, 79.0, 101.0], 20.0, 9);
        let profile = crate::fmcw::SensorProfile::acoustic();
        let scene = crate::fmcw::Scene::new(0.30, composite).with_snr(20.0);
        let obs = crate::fmcw::observe(&profile, &scene, 11).unwrap();
        let auth = estimate(&obs.displacement, ObserverMode::Authorized, Some(&key)).unwrap();
        let bpm = auth.bpm.unwrap();
        assert!((bpm - 66.0).abs() <= 3.0, "through-sensor estimate {bpm}");
    }

    #[test]
    fn cancel_decoys_attenuates_the_whole_track() {
        // A decoy-only track: not just the key lines but everything the
        // actuation put into the heart band must go, which notches alone
        // cannot do (the pulse train is not a sum of pure tones).
        let spec = PulseTrainSpec {
            repetitions: 3,
            ..PulseTrainSpec::for_frequencies(vec![53.0, 79.0, 101.0])
        };
        let train = generate_pulse_train(&spec).unwrap();
        let kernel = ActuatorKernel {
            peak_displacement_mm: 1.5,
            ..Default::default()
        };
        let track = actuate(&train, &kernel).unwrap();
        let space = crate::obfuscation::FrequencySpace::new(50.0, 110.0, 0.5).unwrap();
        let mut key = ObfuscationKey::generate(3, &space, 3).unwrap();
        key.frequencies_bpm = vec![53.0, 79.0, 101.0];

        let banded = bandpass(&track, &HeartBandFilter::default()).unwrap();
        let cancelled = cancel_decoys(&track, &key).unwrap();
        let guard = (3.0 / HeartBandFilter::default().low_hz * banded.sample_rate_hz) as usize;
        let mid = guard..banded.len() - guard;
        let att_db = 20.0
            * (rms(&cancelled.samples_mm[mid.clone()]) / rms(&banded.samples_mm[mid])).log10();
        assert!(att_db <= -30.0, "residue only {att_db:.1} dB down");
    }

    #[test]
    fn cancel_decoys_without_key_frequencies_is_bandpass() {
        let (composite, mut key) = composite_with_decoys(66.0, &[53.0], 20.0, 21);
        key.frequencies_bpm = vec![];
        let banded = bandpass(&composite, &HeartBandFilter::default()).unwrap();
        let cancelled = cancel_decoys(&composite, &key).unwrap();
        assert_eq!(banded.samples_mm, cancelled.samples_mm);
    }

    #[test]
    fn authorized_survives_strong_decoys() {
        // Actuator driven at three times the chest pulse: the unauthorized
        // spectrum is owned by the decoys, the authorized one is not.
        let (composite, key) =
            composite_with_decoys_at(66.0, &[53.0, 79.0, 101.0], 30.0, 17, 3.0);
        let auth = estimate(&composite, ObserverMode::Authorized, Some(&key)).unwrap();
        let unauth = estimate(&composite, ObserverMode::Unauthorized, None).unwrap();
        let a = auth.bpm.unwrap();
        let u = unauth.bpm.unwrap();
        assert!((a - 66.0).abs() <= 2.0, "authorized got {a}");
        assert!((u - 66.0).abs() >= 5.0, "unauthorized still read the truth: {u}");
    }

    #[test]
    fn template_mismatch_degrades_gracefully() {
        // Actuation with a non-default kernel: the rebuilt template only
        // partially matches, and the notch bank still removes the key lines.
        let source = VitalSignSource {
            heart_rate_bpm: 66.0,
            breathing: None,
            jitter_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let truth = synthesize_heartbeat(&source, 30.0, 2000.0, &mut rng).unwrap();
        let spec = PulseTrainSpec {
            repetitions: 3,
            ..PulseTrainSpec::for_frequencies(vec![53.0, 79.0, 101.0])
        };
        let train = generate_pulse_train(&spec).unwrap();
        let kernel = ActuatorKernel {
            rise_time_s: 0.04,
            fall_time_s: 0.08,
            ..Default::default()
        };
        let decoy = actuate(&train, &kernel).unwrap();
        let n = truth.len().min(decoy.len());
        let truth =
            DisplacementSignal::new(truth.samples_mm[..n].to_vec(), 2000.0, SignalLabel::True)
                .unwrap();
        let decoy =
            DisplacementSignal::new(decoy.samples_mm[..n].to_vec(), 2000.0, SignalLabel::Decoy)
                .unwrap();
        let composite = superimpose(&truth, &decoy).unwrap();
        let space = crate::obfuscation::FrequencySpace::new(50.0, 110.0, 0.5).unwrap();
        let mut key = ObfuscationKey::generate(3, &space, 3).unwrap();
        key.frequencies_bpm = vec![53.0, 79.0, 101.0];
        let auth = estimate(&composite, ObserverMode::Authorized, Some(&key)).unwrap();
        let bpm = auth.bpm.unwrap();
        assert!((bpm - 66.0).abs() <= 3.0, "authorized got {bpm}");
    }

    #[test]
    fn octave_guard_prefers_a_supported_fundamental() {
        // Second harmonic slightly stronger than the fundamental: the raw
        // argmax reads 104, the guard reads 52.
        let rate = 32.0;
        let n = (30.0 * rate) as usize;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                (TAU * 52.0 / 60.0 * t).sin() + 1.15 * (TAU * 104.0 / 60.0 * t).sin()
            })
            .collect();
        let sig = DisplacementSignal::new(samples, rate, SignalLabel::True).unwrap();
        let est = estimate(&sig, ObserverMode::Unauthorized, None).unwrap();
        let bpm = est.bpm.unwrap();
        assert!((bpm - 52.0).abs() <= 1.0, "guard read {bpm}");

        // A lone line at 104 BPM has no support at 52 and stays put.
        let alone = tone(104.0, 1.0, 30.0, rate);
        let est = estimate(&alone, ObserverMode::Unauthorized, None).unwrap();
        let bpm = est.bpm.unwrap();
        assert!((bpm - 104.0).abs() <= 1.0, "lone line read {bpm}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn cancel_decoys_is_linear(scale in 0.1f64..10.0, seed in 0u64..1000) {
            let space = crate::obfuscation::FrequencySpace::new(50.0, 110.0, 0.5).unwrap();
            let key = ObfuscationKey::generate(2, &space, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 640;
            let xs: Vec<f64> = (0..n).map(|_| {
                use rand::Rng;
                rng.gen_range(-1.0..1.0)
            }).collect();
            let sig = DisplacementSignal::new(xs.clone(), 32.0, SignalLabel::Composite).unwrap();
            let scaled = DisplacementSignal::new(
                xs.iter().map(|x| x * scale).collect(),
                32.0,
                SignalLabel::Composite,
            ).unwrap();
            let a = cancel_decoys(&sig, &key).unwrap();
            let b = cancel_decoys(&scaled, &key).unwrap();
            for (x, y) in a.samples_mm.iter().zip(&b.samples_mm) {
                prop_assert!((x * scale - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn authorized_filter_is_linear(scale in 0.1f64..10.0, seed in 0u64..1000) {
            let space = crate::obfuscation::FrequencySpace::new(50.0, 110.0, 0.5).unwrap();
            let key = ObfuscationKey::generate(2, &space, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 640;
            let xs: Vec<f64> = (0..n).map(|_| {
                use rand::Rng;
                rng.gen_range(-1.0..1.0)
            }).collect();
            let sig = DisplacementSignal::new(xs.clone(), 32.0, SignalLabel::Composite).unwrap();
            let scaled = DisplacementSignal::new(
                xs.iter().map(|x| x * scale).collect(),
                32.0,
                SignalLabel::Composite,
            ).unwrap();
            let a = authorized_filter(&sig, &key).unwrap();
            let b = authorized_filter(&scaled, &key).unwrap();
            for (x, y) in a.samples_mm.iter().zip(&b.samples_mm) {
                prop_assert!((x * scale - y).abs() <= 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
