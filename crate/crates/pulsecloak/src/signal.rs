//! Chest-displacement signal model.
//!
//! Three generators feed the rest of the crate:
//!
//! * [`synthesize_heartbeat`] builds the true vital-sign displacement as a
//!   train of Gaussian pulses with optional breathing and RR jitter.
//! * [`generate_pulse_train`] converts a set of decoy frequencies into the
//!   binary drive waveform for an actuator: a sum of sinusoids is scanned for
//!   positive-going zero crossings and each crossing emits a fixed-width
//!   pulse.
//! * [`actuate`] turns that drive waveform into physical displacement through
//!   a rise/decay kernel with overlap saturation.
//!
//! [`superimpose`] then mixes true and decoy motion into the composite signal
//! a sensor actually observes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Provenance of a displacement signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalLabel {
    /// Genuine vital-sign motion.
    True,
    /// Actuated decoy motion.
    Decoy,
    /// Mixture of true and decoy motion (or a sensed observation of one).
    Composite,
}

/// A uniformly sampled displacement trace in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementSignal {
    pub samples_mm: Vec<f64>,
    pub sample_rate_hz: f64,
    pub label: SignalLabel,
}

impl DisplacementSignal {
    /// Validates that the rate is positive and every sample is finite.
    pub fn new(samples_mm: Vec<f64>, sample_rate_hz: f64, label: SignalLabel) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::parameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples_mm.iter().any(|x| !x.is_finite()) {
            return Err(Error::parameter("displacement samples must be finite"));
        }
        Ok(DisplacementSignal {
            samples_mm,
            sample_rate_hz,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.samples_mm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples_mm.is_empty()
    }

    /// Length over rate; `duration_s() * sample_rate_hz` always equals the
    /// sample count exactly, which keeps the two representations consistent.
    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    /// Largest absolute displacement, 0 for an empty signal.
    pub fn peak_mm(&self) -> f64 {
        self.samples_mm.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Breathing component added on top of the heartbeat pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breathing {
    pub rate_bpm: f64,
    pub amplitude_mm: f64,
}

impl Default for Breathing {
    fn default() -> Self {
        Breathing {
            rate_bpm: 15.0,
            amplitude_mm: 4.0,
        }
    }
}

/// Parameters of the simulated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VitalSignSource {
    pub heart_rate_bpm: f64,
    pub heartbeat_amplitude_mm: f64,
    /// Width of one heartbeat pulse; the Gaussian sigma is a sixth of this,
    /// so the pulse has essentially decayed at the nominal width.
    pub pulse_width_s: f64,
    pub breathing: Option<Breathing>,
    /// Multiplicative RR-interval jitter (standard deviation as a fraction of
    /// the mean interval). Must lie in [0, 0.1].
    pub jitter_std: f64,
}

impl Default for VitalSignSource {
    fn default() -> Self {
        VitalSignSource {
            heart_rate_bpm: 66.0,
            heartbeat_amplitude_mm: 0.5,
            pulse_width_s: 0.08,
            breathing: None,
            jitter_std: 0.02,
        }
    }
}

impl VitalSignSource {
    pub fn validate(&self) -> Result<()> {
        if !(self.heart_rate_bpm.is_finite() && self.heart_rate_bpm > 0.0) {
            return Err(Error::parameter("heart rate must be positive"));
        }
        if !(self.heartbeat_amplitude_mm.is_finite() && self.heartbeat_amplitude_mm > 0.0) {
            return Err(Error::parameter("heartbeat amplitude must be positive"));
        }
        if !(0.0..=0.1).contains(&self.jitter_std) {
            return Err(Error::parameter(format!(
                "jitter_std must lie in [0, 0.1], got {}",
                self.jitter_std
            )));
        }
        let beat_period = 60.0 / self.heart_rate_bpm;
        if !(self.pulse_width_s > 0.0 && self.pulse_width_s < beat_period) {
            return Err(Error::parameter(format!(
                "pulse width {} s must be positive and below the beat period {beat_period} s",
                self.pulse_width_s
            )));
        }
        if let Some(b) = &self.breathing {
            if !(b.rate_bpm > 0.0 && b.amplitude_mm >= 0.0) {
                return Err(Error::parameter("breathing parameters must be positive"));
            }
        }
        Ok(())
    }
}

/// Synthesize the true heartbeat displacement.
///
/// One Gaussian bump per beat; beat intervals are `60 / heart_rate` scaled by
/// `1 + jitter_std * N(0,1)` per beat. The sample rate must oversample the
/// heart rate by at least a factor of forty so the pulse shape is resolved.
pub fn synthesize_heartbeat<R: Rng + ?Sized>(
    source: &VitalSignSource,
    duration_s: f64,
    sample_rate_hz: f64,
    rng: &mut R,
) -> Result<DisplacementSignal> {
    source.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::parameter("duration must be positive"));
    }
    let min_rate = 4.0 * source.heart_rate_bpm / 60.0 * 10.0;
    if sample_rate_hz < min_rate {
        return Err(Error::parameter(format!(
            "sample rate {sample_rate_hz} Hz too low for {} BPM (need >= {min_rate} Hz)",
            source.heart_rate_bpm
        )));
    }

    let n = (duration_s * sample_rate_hz).round() as usize;
    let mut samples = vec![0.0; n];
    let sigma = source.pulse_width_s / 6.0;
    let base_rr = 60.0 / source.heart_rate_bpm;
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");

    let mut t_beat = 0.5 * base_rr;
    while t_beat < duration_s + 4.0 * sigma {
        let lo = (((t_beat - 4.0 * sigma) * sample_rate_hz).floor() as isize).max(0) as usize;
        let hi = ((((t_beat + 4.0 * sigma) * sample_rate_hz).ceil() as isize) as usize).min(n);
        for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
            let dt = i as f64 / sample_rate_hz - t_beat;
            *s += source.heartbeat_amplitude_mm * (-dt * dt / (2.0 * sigma * sigma)).exp();
        }
        let scale = if source.jitter_std > 0.0 {
            (1.0 + source.jitter_std * jitter.sample(rng)).clamp(0.2, 5.0)
        } else {
            1.0
        };
        t_beat += base_rr * scale;
    }

    if let Some(b) = &source.breathing {
        let w = std::f64::consts::TAU * b.rate_bpm / 60.0;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += b.amplitude_mm * (w * i as f64 / sample_rate_hz).sin();
        }
    }

    DisplacementSignal::new(samples, sample_rate_hz, SignalLabel::True)
}

/// Recipe for the binary decoy drive waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseTrainSpec {
    pub base_duration_s: f64,
    pub base_sample_rate_hz: f64,
    pub decoy_frequencies_bpm: Vec<f64>,
    pub pulse_width_s: f64,
    /// How many copies of the base segment are concatenated.
    pub repetitions: usize,
}

impl Default for PulseTrainSpec {
    fn default() -> Self {
        PulseTrainSpec {
            base_duration_s: 10.0,
            base_sample_rate_hz: 2000.0,
            decoy_frequencies_bpm: Vec::new(),
            pulse_width_s: 0.025,
            repetitions: 3,
        }
    }
}

impl PulseTrainSpec {
    /// Default spec driving the given decoy frequencies.
    pub fn for_frequencies(decoy_frequencies_bpm: Vec<f64>) -> Self {
        PulseTrainSpec {
            decoy_frequencies_bpm,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.decoy_frequencies_bpm.is_empty() {
            return Err(Error::parameter("pulse train needs at least one frequency"));
        }
        if self
            .decoy_frequencies_bpm
            .iter()
            .any(|f| !f.is_finite() || *f <= 0.0)
        {
            return Err(Error::parameter("decoy frequencies must be positive"));
        }
        if !(self.base_duration_s > 0.0 && self.base_sample_rate_hz > 0.0) {
            return Err(Error::parameter("base duration and rate must be positive"));
        }
        if self.repetitions == 0 {
            return Err(Error::parameter("repetitions must be at least 1"));
        }
        if self.pulse_width_s * self.base_sample_rate_hz < 1.0 {
            return Err(Error::parameter("pulse width shorter than one sample"));
        }
        let max_f = self
            .decoy_frequencies_bpm
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        if self.pulse_width_s * max_f / 60.0 >= 1.0 {
            return Err(Error::parameter(format!(
                "pulse width {} s overlaps adjacent beats at {max_f} BPM",
                self.pulse_width_s
            )));
        }
        Ok(())
    }
}

/// Binary actuator drive waveform.
///
/// `onsets` lists the sample index of every detected zero crossing; `samples`
/// is the widened binary trace. When crossings land closer together than the
/// pulse width their high regions merge in `samples`, but each crossing still
/// triggers the actuator once, so `onsets` is the authoritative event list.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrain {
    pub samples: Vec<bool>,
    pub sample_rate_hz: f64,
    pub onsets: Vec<usize>,
}

impl PulseTrain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn pulse_count(&self) -> usize {
        self.onsets.len()
    }

    /// The binary trace as 0.0/1.0 values.
    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Build the decoy pulse train.
///
/// A base segment of `sum_j sin(2 pi f_j / 60 * t)` is sampled for
/// `base_duration_s`, concatenated `repetitions` times, and scanned for
/// positive-going zero crossings (a virtual sample at `t = -1/rate` lets a
/// crossing at `t = 0` count). Each crossing raises the output for
/// `pulse_width_s`.
pub fn generate_pulse_train(spec: &PulseTrainSpec) -> Result<PulseTrain> {
    spec.validate()?;
    let rate = spec.base_sample_rate_hz;
    let n_base = (spec.base_duration_s * rate).round() as usize;
    let base_value = |i: isize| -> f64 {
        let t = i as f64 / rate;
        spec.decoy_frequencies_bpm
            .iter()
            .map(|f| (std::f64::consts::TAU * f / 60.0 * t).sin())
            .sum()
    };
    let base: Vec<f64> = (0..n_base as isize).map(base_value).collect();

    let n = n_base * spec.repetitions;
    let width = (spec.pulse_width_s * rate).round() as usize;
    let mut samples = vec![false; n];
    let mut onsets = Vec::new();
    let mut prev = base_value(-1);
    for i in 0..n {
        let cur = base[i % n_base];
        if prev < 0.0 && cur >= 0.0 {
            onsets.push(i);
            for s in samples.iter_mut().skip(i).take(width) {
                *s = true;
            }
        }
        prev = cur;
    }

    Ok(PulseTrain {
        samples,
        sample_rate_hz: rate,
        onsets,
    })
}

/// Pneumatic response to one drive pulse: linear inflation over `rise_time_s`
/// followed by exponential deflation with time constant `fall_time_s / 3`.
/// Overlapping responses add and clip at `saturation_factor` times the peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorKernel {
    pub rise_time_s: f64,
    pub fall_time_s: f64,
    pub peak_displacement_mm: f64,
    pub saturation_factor: f64,
}

impl Default for ActuatorKernel {
    fn default() -> Self {
        ActuatorKernel {
            rise_time_s: 0.025,
            fall_time_s: 0.050,
            peak_displacement_mm: 0.5,
            saturation_factor: 1.5,
        }
    }
}

impl ActuatorKernel {
    fn validate(&self) -> Result<()> {
        if !(self.rise_time_s > 0.0 && self.fall_time_s > 0.0) {
            return Err(Error::parameter("kernel rise and fall times must be positive"));
        }
        if !(self.peak_displacement_mm > 0.0) {
            return Err(Error::parameter("kernel peak displacement must be positive"));
        }
        if self.saturation_factor < 1.0 {
            return Err(Error::parameter("saturation factor must be at least 1"));
        }
        Ok(())
    }

    /// Kernel sampled at `rate_hz`. Nonnegative, peaks at
    /// `peak_displacement_mm`, and is truncated once the decay tail falls
    /// below a thousandth of the peak.
    pub fn sample(&self, rate_hz: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if self.rise_time_s * rate_hz < 1.0 || self.fall_time_s * rate_hz < 1.0 {
            return Err(Error::parameter(format!(
                "sample rate {rate_hz} Hz cannot resolve kernel times {}/{} s",
                self.rise_time_s, self.fall_time_s
            )));
        }
        let tau = self.fall_time_s / 3.0;
        let t_end = self.rise_time_s + tau * 1000.0_f64.ln();
        let n = (t_end * rate_hz).ceil() as usize + 1;
        Ok((0..n)
            .map(|i| {
                let t = i as f64 / rate_hz;
                if t < self.rise_time_s {
                    self.peak_displacement_mm * t / self.rise_time_s
                } else {
                    self.peak_displacement_mm * (-(t - self.rise_time_s) / tau).exp()
                }
            })
            .collect())
    }
}

/// Convolve the actuator kernel with the pulse-train onsets.
///
/// Every onset triggers one kernel response; overlapping responses sum and
/// the total is clipped at the saturation level.
pub fn actuate(pulses: &PulseTrain, kernel: &ActuatorKernel) -> Result<DisplacementSignal> {
    let k = kernel.sample(pulses.sample_rate_hz)?;
    let mut out = vec![0.0; pulses.len()];
    for &onset in &pulses.onsets {
        for (j, &kv) in k.iter().enumerate() {
            if let Some(slot) = out.get_mut(onset + j) {
                *slot += kv;
            }
        }
    }
    let cap = kernel.saturation_factor * kernel.peak_displacement_mm;
    for s in &mut out {
        if *s > cap {
            *s = cap;
        }
    }
    DisplacementSignal::new(out, pulses.sample_rate_hz, SignalLabel::Decoy)
}

/// Pointwise sum of two displacement signals.
///
/// Rates must match exactly and lengths within one sample (the shorter length
/// wins). The result is labeled composite.
pub fn superimpose(a: &DisplacementSignal, b: &DisplacementSignal) -> Result<DisplacementSignal> {
    if a.sample_rate_hz != b.sample_rate_hz {
        return Err(Error::RateMismatch {
            a: a.sample_rate_hz,
            b: b.sample_rate_hz,
        });
    }
    if a.len().abs_diff(b.len()) > 1 {
        return Err(Error::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let n = a.len().min(b.len());
    let samples = (0..n).map(|i| a.samples_mm[i] + b.samples_mm[i]).collect();
    DisplacementSignal::new(samples, a.sample_rate_hz, SignalLabel::Composite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Hann-windowed direct DFT magnitude at one frequency; an oracle kept
    /// independent of the FFT-based paths in `dsp`.
    fn windowed_dft_mag(samples: &[f64], rate: f64, f_hz: f64) -> f64 {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            let w = 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos());
            let ang = std::f64::consts::TAU * f_hz * i as f64 / rate;
            re += w * (x - mean) * ang.cos();
            im -= w * (x - mean) * ang.sin();
        }
        (re * re + im * im).sqrt()
    }

    fn scan_peak_hz(samples: &[f64], rate: f64, lo: f64, hi: f64, step: f64) -> f64 {
        let mut best = (lo, f64::MIN);
        let mut f = lo;
        while f <= hi {
            let m = windowed_dft_mag(samples, rate, f);
            if m > best.1 {
                best = (f, m);
            }
            f += step;
        }
        best.0
    }

    #[test]
    fn heartbeat_rr_interval_matches_rate() {
        let src = VitalSignSource {
            heart_rate_bpm: 66.0,
            jitter_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sig = synthesize_heartbeat(&src, 30.0, 200.0, &mut rng).unwrap();
        // Naive peak scan: local maxima above 80% of the pulse amplitude.
        let xs = &sig.samples_mm;
        let mut peaks = Vec::new();
        for i in 1..xs.len() - 1 {
            if xs[i] > xs[i - 1] && xs[i] >= xs[i + 1] && xs[i] > 0.4 {
                peaks.push(i as f64 / 200.0);
            }
        }
        assert!(peaks.len() > 25);
        let mean_rr = peaks.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / (peaks.len() - 1) as f64;
        assert!(
            (mean_rr - 60.0 / 66.0).abs() < 2.0 / 200.0,
            "mean RR {mean_rr}, expected {}",
            60.0 / 66.0
        );
    }

    #[test]
    fn heartbeat_with_breathing_shows_both_spectral_peaks() {
        let src = VitalSignSource {
            heart_rate_bpm: 75.0,
            breathing: Some(Breathing {
                rate_bpm: 15.0,
                amplitude_mm: 4.0,
            }),
            jitter_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sig = synthesize_heartbeat(&src, 60.0, 100.0, &mut rng).unwrap();
        let breath = scan_peak_hz(&sig.samples_mm, 100.0, 0.1, 0.5, 0.01);
        assert!((breath - 0.25).abs() <= 0.02, "breathing peak at {breath} Hz");
        let heart = scan_peak_hz(&sig.samples_mm, 100.0, 0.8, 2.0, 0.01);
        assert!((heart - 1.25).abs() <= 0.02, "heart peak at {heart} Hz");
    }

    #[test]
    fn zero_jitter_is_periodic_by_autocorrelation() {
        let src = VitalSignSource {
            heart_rate_bpm: 66.0,
            jitter_std: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rate = 200.0;
        let sig = synthesize_heartbeat(&src, 30.0, rate, &mut rng).unwrap();
        let mut xs = sig.samples_mm.clone();
        dsp::mean_remove(&mut xs);
        let lags = (0.3 * rate) as usize..(2.0 * rate) as usize;
        let mut best = (0usize, f64::MIN);
        for lag in lags {
            let r: f64 = xs[..xs.len() - lag]
                .iter()
                .zip(&xs[lag..])
                .map(|(a, b)| a * b)
                .sum();
            if r > best.1 {
                best = (lag, r);
            }
        }
        let expected = (rate * 60.0 / 66.0).round() as usize;
        assert!(
            best.0.abs_diff(expected) <= 1,
            "autocorrelation peak at lag {} expected {expected}",
            best.0
        );
    }

    #[test]
    fn synthesis_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bad_jitter = VitalSignSource {
            jitter_std: 0.2,
            ..Default::default()
        };
        assert!(synthesize_heartbeat(&bad_jitter, 10.0, 200.0, &mut rng).is_err());
        let ok = VitalSignSource::default();
        // 66 BPM requires at least 44 Hz.
        assert!(synthesize_heartbeat(&ok, 10.0, 30.0, &mut rng).is_err());
        let wide = VitalSignSource {
            heart_rate_bpm: 120.0,
            pulse_width_s: 0.6,
            ..Default::default()
        };
        assert!(synthesize_heartbeat(&wide, 10.0, 400.0, &mut rng).is_err());
        assert!(synthesize_heartbeat(&ok, 0.0, 200.0, &mut rng).is_err());
    }

    #[test]
    fn duration_times_rate_matches_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sig = synthesize_heartbeat(&VitalSignSource::default(), 12.34, 173.0, &mut rng).unwrap();
        let implied = sig.duration_s() * sig.sample_rate_hz;
        assert!((implied - sig.len() as f64).abs() <= 1.0);
    }

    #[test]
    fn single_frequency_train_pulses_once_per_period() {
        let spec = PulseTrainSpec::for_frequencies(vec![60.0]);
        let train = generate_pulse_train(&spec).unwrap();
        assert_eq!(train.duration_s(), 30.0);
        assert_eq!(train.pulse_count(), 30, "one pulse per second over 30 s");
        // 25 ms pulses at 2 kHz: 50 high samples per pulse, no overlap.
        let high = train.samples.iter().filter(|&&b| b).count();
        assert_eq!(high, 30 * 50);
    }

    #[test]
    fn zero_crossing_count_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for case in 0..100 {
            let k = rng.gen_range(1..=5);
            let freqs: Vec<f64> = (0..k).map(|_| rng.gen_range(45.0..180.0)).collect();
            let reps = 1 + case % 3;
            let spec = PulseTrainSpec {
                decoy_frequencies_bpm: freqs.clone(),
                base_sample_rate_hz: 500.0,
                repetitions: reps,
                ..Default::default()
            };
            let train = generate_pulse_train(&spec).unwrap();

            // Independent sign-change scan over the tiled sum of sinusoids.
            let rate = 500.0_f64;
            let n_base = (10.0 * rate).round() as usize;
            let value = |i: isize| -> f64 {
                let t = i as f64 / rate;
                freqs
                    .iter()
                    .map(|f| (std::f64::consts::TAU * f / 60.0 * t).sin())
                    .sum()
            };
            let mut count = 0;
            let mut prev = value(-1);
            for i in 0..n_base * reps {
                let cur = value((i % n_base) as isize);
                if prev < 0.0 && cur >= 0.0 {
                    count += 1;
                }
                prev = cur;
            }
            assert_eq!(train.pulse_count(), count, "set {freqs:?} reps {reps}");
        }
    }

    #[test]
    fn pulse_width_invariant_is_enforced() {
        let spec = PulseTrainSpec {
            decoy_frequencies_bpm: vec![180.0],
            pulse_width_s: 0.4,
            ..Default::default()
        };
        assert!(generate_pulse_train(&spec).is_err());
        assert!(generate_pulse_train(&PulseTrainSpec::default()).is_err());
    }

    #[test]
    fn single_pulse_produces_single_bump() {
        let kernel = ActuatorKernel::default();
        let rate = 2000.0;
        let pulses = PulseTrain {
            samples: {
                let mut s = vec![false; 2000];
                for b in s.iter_mut().skip(100).take(50) {
                    *b = true;
                }
                s
            },
            sample_rate_hz: rate,
            onsets: vec![100],
        };
        let out = actuate(&pulses, &kernel).unwrap();
        assert_eq!(out.label, SignalLabel::Decoy);
        assert!(out.samples_mm.iter().all(|&x| x >= 0.0));
        let max = out.peak_mm();
        assert!((max - 0.5).abs() < 1e-9, "bump peak {max}");
        // Support above 5% of the peak spans roughly rise + fall.
        let above: Vec<usize> = out
            .samples_mm
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.05 * 0.5)
            .map(|(i, _)| i)
            .collect();
        let span_s = (above[above.len() - 1] - above[0]) as f64 / rate;
        assert!(
            (span_s - 0.075).abs() < 0.02,
            "support {span_s} s, expected about 0.075 s"
        );
    }

    #[test]
    fn overlapping_pulses_saturate() {
        let kernel = ActuatorKernel::default();
        let pulses = PulseTrain {
            samples: vec![true; 400],
            sample_rate_hz: 2000.0,
            onsets: vec![100, 110, 120],
        };
        let out = actuate(&pulses, &kernel).unwrap();
        let cap = 1.5 * 0.5;
        assert!(out.peak_mm() <= cap + 1e-12);
        assert!((out.peak_mm() - cap).abs() < 1e-9, "overlap should hit saturation");
    }

    #[test]
    fn kernel_needs_resolvable_rate() {
        let kernel = ActuatorKernel::default();
        let pulses = PulseTrain {
            samples: vec![true; 10],
            sample_rate_hz: 10.0,
            onsets: vec![0],
        };
        assert!(actuate(&pulses, &kernel).is_err());
    }

    #[test]
    fn actuated_train_keeps_decoy_ridges() {
        let spec = PulseTrainSpec::for_frequencies(vec![53.0, 79.0, 101.0]);
        let train = generate_pulse_train(&spec).unwrap();
        let decoy = actuate(&train, &ActuatorKernel::default()).unwrap();
        let res = 6.0 / 60.0;
        let sg_train = dsp::spectrogram(&train.to_f64(), 2000.0, res, 40.0 / 60.0, 190.0 / 60.0);
        let sg_decoy = dsp::spectrogram(&decoy.samples_mm, 2000.0, res, 40.0 / 60.0, 190.0 / 60.0);
        for f_bpm in [53.0, 79.0, 101.0] {
            for (name, sg) in [("train", &sg_train), ("decoy", &sg_decoy)] {
                let hit = sg
                    .ridge_freqs_hz()
                    .iter()
                    .any(|f| (f * 60.0 - f_bpm).abs() <= 6.0);
                assert!(hit, "{name} spectrogram missing ridge at {f_bpm} BPM");
            }
        }
    }

    #[test]
    fn superimpose_is_commutative_and_cancels() {
        let a = DisplacementSignal::new(vec![1.0, -2.0, 3.0], 100.0, SignalLabel::True).unwrap();
        let b = DisplacementSignal::new(vec![0.5, 0.5, -1.0], 100.0, SignalLabel::Decoy).unwrap();
        let ab = superimpose(&a, &b).unwrap();
        let ba = superimpose(&b, &a).unwrap();
        assert_eq!(ab.samples_mm, ba.samples_mm);
        assert_eq!(ab.label, SignalLabel::Composite);

        let neg = DisplacementSignal::new(
            a.samples_mm.iter().map(|x| -x).collect(),
            100.0,
            SignalLabel::Decoy,
        )
        .unwrap();
        let zero = superimpose(&a, &neg).unwrap();
        assert!(zero.samples_mm.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn superimpose_rejects_mismatches() {
        let a = DisplacementSignal::new(vec![0.0; 10], 100.0, SignalLabel::True).unwrap();
        let b = DisplacementSignal::new(vec![0.0; 10], 50.0, SignalLabel::Decoy).unwrap();
        assert!(matches!(
            superimpose(&a, &b),
            Err(Error::RateMismatch { .. })
        ));
        let c = DisplacementSignal::new(vec![0.0; 14], 100.0, SignalLabel::Decoy).unwrap();
        assert!(matches!(
            superimpose(&a, &c),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn composite_spectrum_shows_true_and_decoy_peaks() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let src = VitalSignSource {
            heart_rate_bpm: 66.0,
            jitter_std: 0.0,
            ..Default::default()
        };
        let truth = synthesize_heartbeat(&src, 30.0, 2000.0, &mut rng).unwrap();
        let train = generate_pulse_train(&PulseTrainSpec::for_frequencies(vec![
            53.0, 79.0, 101.0,
        ]))
        .unwrap();
        let decoy = actuate(&train, &ActuatorKernel::default()).unwrap();
        let comp = superimpose(&truth, &decoy).unwrap();
        for bpm in [53.0, 66.0, 79.0, 101.0] {
            let f = bpm / 60.0;
            let here = windowed_dft_mag(&comp.samples_mm, 2000.0, f);
            let below = windowed_dft_mag(&comp.samples_mm, 2000.0, f - 4.5 / 60.0);
            let above = windowed_dft_mag(&comp.samples_mm, 2000.0, f + 4.5 / 60.0);
            assert!(
                here > below && here > above,
                "no local spectral peak at {bpm} BPM ({below:.4} {here:.4} {above:.4})"
            );
        }
    }
}
