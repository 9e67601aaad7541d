//! FMCW sensor simulation and phase-based displacement recovery.
//!
//! A frequency-modulated continuous-wave sensor transmits linear chirps and
//! mixes the echo with the transmitted signal. A reflector at distance `d`
//! produces an intermediate-frequency (IF) tone at `f_b = 2 * slope * d / c`
//! whose phase is `4 pi d / lambda`. Range is coarse (centimeters per FFT
//! bin) but phase is exquisitely sensitive: sub-millimeter chest motion moves
//! the phase of the occupied range bin by whole radians.
//!
//! The simulation models one chirp per frame. [`simulate_frames`] produces
//! the IF sample matrix, [`range_fft`] turns it into a range profile per
//! frame, [`select_bin`] finds the bin animated by motion, and
//! [`extract_phase`] / [`displacement_from_phase`] recover the chest
//! displacement waveform. [`observe`] runs the whole chain in a streaming
//! fashion so long captures do not hold the IF matrix in memory.

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use crate::dsp;
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{DisplacementSignal, SignalLabel};

/// Chirp and sampling parameters of one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorProfile {
    pub name: String,
    /// Carrier (chirp start) frequency in Hz; sets the phase sensitivity.
    pub carrier_hz: f64,
    /// Chirp slope in Hz per second.
    pub slope_hz_per_s: f64,
    /// ADC sample rate for the IF signal, Hz.
    pub adc_rate_hz: f64,
    /// IF samples captured per chirp.
    pub n_adc: usize,
    /// Range FFT length (>= `n_adc`, power of two).
    pub n_fft: usize,
    pub chirp_duration_s: f64,
    /// Frame repetition period; its inverse is the slow-time sample rate.
    pub frame_period_s: f64,
    /// Propagation speed of the carrier medium, m/s.
    pub propagation_speed_m_s: f64,
}

impl SensorProfile {
    /// 77 GHz millimeter-wave radar profile.
    pub fn mmwave() -> Self {
        SensorProfile {
            name: "mmwave".into(),
            carrier_hz: 77.0e9,
            slope_hz_per_s: 60.012e12,
            adc_rate_hz: 5.0e6,
            n_adc: 256,
            n_fft: 256,
            chirp_duration_s: 98.0e-6,
            frame_period_s: 0.5e-3,
            propagation_speed_m_s: 2.99792458e8,
        }
    }

    /// Near-ultrasonic acoustic sonar profile (18-22 kHz sweep through air).
    pub fn acoustic() -> Self {
        SensorProfile {
            name: "acoustic".into(),
            carrier_hz: 18.0e3,
            slope_hz_per_s: 375.0e3,
            adc_rate_hz: 48.0e3,
            n_adc: 512,
            n_fft: 512,
            chirp_duration_s: 512.0 / 48.0e3,
            frame_period_s: 512.0 / 48.0e3,
            propagation_speed_m_s: 343.0,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "mmwave" => Ok(SensorProfile::mmwave()),
            "acoustic" => Ok(SensorProfile::acoustic()),
            other => Err(Error::parameter(format!(
                "unknown sensor profile '{other}' (expected 'mmwave' or 'acoustic')"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("slope_hz_per_s", self.slope_hz_per_s),
            ("adc_rate_hz", self.adc_rate_hz),
            ("chirp_duration_s", self.chirp_duration_s),
            ("frame_period_s", self.frame_period_s),
            ("propagation_speed_m_s", self.propagation_speed_m_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_adc == 0 || self.n_fft < self.n_adc || !self.n_fft.is_power_of_two() {
            return Err(Error::parameter(
                "need 0 < n_adc <= n_fft with n_fft a power of two",
            ));
        }
        let sampling_time = self.n_adc as f64 / self.adc_rate_hz;
        if sampling_time > self.chirp_duration_s * (1.0 + 1e-9) {
            return Err(Error::parameter(
                "ADC capture window exceeds the chirp duration",
            ));
        }
        if self.chirp_duration_s > self.frame_period_s * (1.0 + 1e-9) {
            return Err(Error::parameter("chirp duration exceeds the frame period"));
        }
        Ok(())
    }

    /// Bandwidth actually swept while the ADC captures.
    pub fn swept_bandwidth_hz(&self) -> f64 {
        self.slope_hz_per_s * self.n_adc as f64 / self.adc_rate_hz
    }

    /// Range resolution `c / (2 B)` in meters.
    pub fn range_resolution_m(&self) -> f64 {
        self.propagation_speed_m_s / (2.0 * self.swept_bandwidth_hz())
    }

    pub fn wavelength_m(&self) -> f64 {
        self.propagation_speed_m_s / self.carrier_hz
    }

    /// Slow-time sample rate, frames per second.
    pub fn frame_rate_hz(&self) -> f64 {
        1.0 / self.frame_period_s
    }

    /// Farthest distance whose beat frequency stays below half the ADC rate.
    pub fn unambiguous_range_m(&self) -> f64 {
        self.propagation_speed_m_s * self.adc_rate_hz / (4.0 * self.slope_hz_per_s)
    }

    /// IF beat frequency of a static reflector at `distance_m`.
    pub fn beat_frequency_hz(&self, distance_m: f64) -> f64 {
        2.0 * self.slope_hz_per_s * distance_m / self.propagation_speed_m_s
    }

    /// Carrier phase of the echo from `distance_m`, radians.
    pub fn phase_at(&self, distance_m: f64) -> f64 {
        4.0 * PI * distance_m / self.wavelength_m()
    }

    /// Fractional range-FFT bin occupied by a reflector at `distance_m`.
    pub fn range_bin(&self, distance_m: f64) -> f64 {
        self.beat_frequency_hz(distance_m) / self.adc_rate_hz * self.n_fft as f64
    }

    /// Phase change per millimeter of displacement, radians.
    pub fn phase_per_mm(&self) -> f64 {
        4.0 * PI * 1.0e-3 / self.wavelength_m()
    }
}

/// A single reflector in front of the sensor.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Rest distance of the chest surface, meters.
    pub base_distance_m: f64,
    /// Chest displacement around the rest distance.
    pub displacement: DisplacementSignal,
    /// Echo amplitude at the ADC (arbitrary linear units).
    pub amplitude_scale: f64,
    /// Per-sample IF signal-to-noise ratio in dB; `None` disables noise.
    pub snr_db: Option<f64>,
}

impl Scene {
    pub fn new(base_distance_m: f64, displacement: DisplacementSignal) -> Self {
        Scene {
            base_distance_m,
            displacement,
            amplitude_scale: 1.0,
            snr_db: None,
        }
    }

    pub fn with_snr(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    fn validate(&self, profile: &SensorProfile) -> Result<()> {
        if !(self.base_distance_m.is_finite() && self.base_distance_m > 0.0) {
            return Err(Error::parameter("base distance must be positive"));
        }
        if self.base_distance_m >= profile.unambiguous_range_m() {
            return Err(Error::parameter(format!(
                "base distance {} m is beyond the unambiguous range {:.3} m",
                self.base_distance_m,
                profile.unambiguous_range_m()
            )));
        }
        if !(self.amplitude_scale.is_finite() && self.amplitude_scale > 0.0) {
            return Err(Error::parameter("amplitude scale must be positive"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::parameter("SNR must be finite"));
            }
        }
        Ok(())
    }

    fn n_frames(&self, profile: &SensorProfile) -> Result<usize> {
        let n = (self.displacement.duration_s() * profile.frame_rate_hz() + 1e-9).floor() as usize;
        if n < 2 {
            return Err(Error::parameter(
                "displacement is shorter than two sensor frames",
            ));
        }
        Ok(n)
    }
}

/// Linear interpolation of the displacement at time `t_s`, clamped at the ends.
fn displacement_at(sig: &DisplacementSignal, t_s: f64) -> f64 {
    let pos = t_s * sig.sample_rate_hz;
    if pos <= 0.0 {
        return sig.samples_mm[0];
    }
    let i = pos.floor() as usize;
    if i + 1 >= sig.len() {
        return sig.samples_mm[sig.len() - 1];
    }
    let frac = pos - i as f64;
    sig.samples_mm[i] * (1.0 - frac) + sig.samples_mm[i + 1] * frac
}

/// Synthesize the IF samples of one frame with the reflector at `distance_m`.
fn synth_frame(
    profile: &SensorProfile,
    distance_m: f64,
    amplitude: f64,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
    out: &mut [Complex64],
) {
    let f_b = profile.beat_frequency_hz(distance_m);
    let phi = profile.phase_at(distance_m);
    let step = TAU * f_b / profile.adc_rate_hz;
    for (n, slot) in out.iter_mut().enumerate() {
        let theta = step * n as f64 + phi;
        *slot = Complex64::from_polar(amplitude, theta);
    }
    if noise_sigma > 0.0 {
        let comp = noise_sigma / 2.0_f64.sqrt();
        for slot in out.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *slot += Complex64::new(re * comp, im * comp);
        }
    }
}

fn noise_sigma(scene: &Scene) -> f64 {
    match scene.snr_db {
        Some(snr) => scene.amplitude_scale * 10f64.powf(-snr / 20.0),
        None => 0.0,
    }
}

fn frame_rng(seed_val: u64, frame: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed::derive(seed_val, 0, frame as u64))
}

/// Simulate the full IF matrix, one row per frame, `n_adc` columns.
///
/// Noise draws are seeded per frame, so any prefix of the capture is
/// bit-identical to a longer capture with the same seed.
pub fn simulate_frames(
    profile: &SensorProfile,
    scene: &Scene,
    seed_val: u64,
) -> Result<Array2<Complex64>> {
    profile.validate()?;
    scene.validate(profile)?;
    let n_frames = scene.n_frames(profile)?;
    let sigma = noise_sigma(scene);
    let mut out = Array2::zeros((n_frames, profile.n_adc));
    let mut row = vec![Complex64::new(0.0, 0.0); profile.n_adc];
    for k in 0..n_frames {
        let t = k as f64 * profile.frame_period_s;
        let d = scene.base_distance_m + displacement_at(&scene.displacement, t) * 1e-3;
        let mut rng = frame_rng(seed_val, k);
        synth_frame(profile, d, scene.amplitude_scale, sigma, &mut rng, &mut row);
        for (n, &v) in row.iter().enumerate() {
            out[(k, n)] = v;
        }
    }
    Ok(out)
}

struct RangeFft {
    window: Vec<f64>,
    fft: Arc<dyn rustfft::Fft<f64>>,
    scratch: Vec<Complex64>,
    n_fft: usize,
}

impl RangeFft {
    fn new(profile: &SensorProfile) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(profile.n_fft);
        let scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        RangeFft {
            window: dsp::hann(profile.n_adc),
            fft,
            scratch,
            n_fft: profile.n_fft,
        }
    }

    /// Window `row`, zero-pad, and FFT into `spectrum`.
    fn run(&mut self, row: &[Complex64], spectrum: &mut Vec<Complex64>) {
        spectrum.clear();
        spectrum.extend(row.iter().zip(&self.window).map(|(&x, &w)| x * w));
        spectrum.resize(self.n_fft, Complex64::new(0.0, 0.0));
        self.fft.process_with_scratch(spectrum, &mut self.scratch);
    }
}

/// Range FFT of every frame: Hann window over the `n_adc` samples, zero-pad
/// to `n_fft`, unnormalized forward FFT.
pub fn range_fft(frames: &Array2<Complex64>, profile: &SensorProfile) -> Result<Array2<Complex64>> {
    profile.validate()?;
    if frames.ncols() != profile.n_adc {
        return Err(Error::LengthMismatch {
            a: frames.ncols(),
            b: profile.n_adc,
        });
    }
    let mut engine = RangeFft::new(profile);
    let mut out = Array2::zeros((frames.nrows(), profile.n_fft));
    let mut spectrum = Vec::with_capacity(profile.n_fft);
    let mut row_buf = vec![Complex64::new(0.0, 0.0); profile.n_adc];
    for k in 0..frames.nrows() {
        for (n, slot) in row_buf.iter_mut().enumerate() {
            *slot = frames[(k, n)];
        }
        engine.run(&row_buf, &mut spectrum);
        for (b, &v) in spectrum.iter().enumerate() {
            out[(k, b)] = v;
        }
    }
    Ok(out)
}

/// Streaming per-bin statistics for bin selection.
struct BinStats {
    sum: Vec<Complex64>,
    sum_sq: Vec<f64>,
    sum_mag: Vec<f64>,
    count: usize,
}

impl BinStats {
    fn new(n_bins: usize) -> Self {
        BinStats {
            sum: vec![Complex64::new(0.0, 0.0); n_bins],
            sum_sq: vec![0.0; n_bins],
            sum_mag: vec![0.0; n_bins],
            count: 0,
        }
    }

    fn update(&mut self, spectrum: &[Complex64]) {
        for (b, &x) in spectrum.iter().enumerate() {
            self.sum[b] += x;
            self.sum_sq[b] += x.norm_sqr();
            self.sum_mag[b] += x.norm();
        }
        self.count += 1;
    }

    /// Pick the motion bin: among bins whose mean magnitude is at least a
    /// quarter of the strongest, take the one with the largest complex
    /// variance. Falls back to the strongest bin when nothing varies
    /// (static, noiseless scene). Bin 0 and the upper half are excluded.
    fn select(&self) -> usize {
        let n = self.sum.len();
        let hi = (n / 2).max(2);
        let k = self.count as f64;
        let mean_mag: Vec<f64> = self.sum_mag.iter().map(|&s| s / k).collect();
        let max_mag = mean_mag[1..hi]
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        let mut best = 1;
        let mut best_var = -1.0;
        for b in 1..hi {
            if mean_mag[b] < 0.25 * max_mag {
                continue;
            }
            let var = self.sum_sq[b] / k - (self.sum[b] / k).norm_sqr();
            if var > best_var {
                best_var = var;
                best = b;
            }
        }
        if best_var <= 0.0 {
            for b in 2..hi {
                if mean_mag[b] > mean_mag[best] {
                    best = b;
                }
            }
        }
        best
    }
}

/// Pick the range bin whose phasor is animated by motion.
pub fn select_bin(range_matrix: &Array2<Complex64>) -> usize {
    let mut stats = BinStats::new(range_matrix.ncols());
    for row in range_matrix.rows() {
        stats.update(row.as_slice().expect("contiguous row"));
    }
    stats.select()
}

/// Unwrapped, mean-removed phase of one range bin across frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    pub phase_rad: Vec<f64>,
    pub sample_rate_hz: f64,
}

/// Extract the phase track of `bin` from a range matrix.
pub fn extract_phase(
    range_matrix: &Array2<Complex64>,
    bin: usize,
    frame_rate_hz: f64,
) -> Result<PhaseSeries> {
    if bin >= range_matrix.ncols() {
        return Err(Error::parameter(format!(
            "bin {bin} out of range for {} FFT bins",
            range_matrix.ncols()
        )));
    }
    let mut phase: Vec<f64> = (0..range_matrix.nrows())
        .map(|k| range_matrix[(k, bin)].arg())
        .collect();
    dsp::unwrap_phase(&mut phase);
    dsp::mean_remove(&mut phase);
    Ok(PhaseSeries {
        phase_rad: phase,
        sample_rate_hz: frame_rate_hz,
    })
}

/// Convert a phase track to millimeters of displacement:
/// `x = lambda / (4 pi) * phase`.
pub fn displacement_from_phase(
    series: &PhaseSeries,
    profile: &SensorProfile,
    label: SignalLabel,
) -> Result<DisplacementSignal> {
    let scale = profile.wavelength_m() / (4.0 * PI) * 1e3;
    DisplacementSignal::new(
        series.phase_rad.iter().map(|&p| p * scale).collect(),
        series.sample_rate_hz,
        label,
    )
}

/// What [`observe`] recovered from a capture.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Displacement as the sensor sees it, sampled at the frame rate.
    pub displacement: DisplacementSignal,
    /// Range bin the phase was read from.
    pub bin: usize,
}

/// Run the full sensing chain without materializing the IF matrix.
///
/// Two streaming passes over the frames: the first gathers per-bin
/// statistics to select the motion bin, the second re-synthesizes each frame
/// (identical per-frame seeds, so bit-identical samples) and keeps only the
/// selected bin's phasor. Peak memory is one frame plus one f64 per frame.
pub fn observe(profile: &SensorProfile, scene: &Scene, seed_val: u64) -> Result<Observation> {
    profile.validate()?;
    scene.validate(profile)?;
    let n_frames = scene.n_frames(profile)?;
    let sigma = noise_sigma(scene);
    let mut engine = RangeFft::new(profile);
    let mut row = vec![Complex64::new(0.0, 0.0); profile.n_adc];
    let mut spectrum = Vec::with_capacity(profile.n_fft);

    let mut stats = BinStats::new(profile.n_fft);
    for k in 0..n_frames {
        let t = k as f64 * profile.frame_period_s;
        let d = scene.base_distance_m + displacement_at(&scene.displacement, t) * 1e-3;
        let mut rng = frame_rng(seed_val, k);
        synth_frame(profile, d, scene.amplitude_scale, sigma, &mut rng, &mut row);
        engine.run(&row, &mut spectrum);
        stats.update(&spectrum);
    }
    let bin = stats.select();

    let mut phase = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = k as f64 * profile.frame_period_s;
        let d = scene.base_distance_m + displacement_at(&scene.displacement, t) * 1e-3;
        let mut rng = frame_rng(seed_val, k);
        synth_frame(profile, d, scene.amplitude_scale, sigma, &mut rng, &mut row);
        engine.run(&row, &mut spectrum);
        phase.push(spectrum[bin].arg());
    }
    dsp::unwrap_phase(&mut phase);
    dsp::mean_remove(&mut phase);
    let series = PhaseSeries {
        phase_rad: phase,
        sample_rate_hz: profile.frame_rate_hz(),
    };
    let displacement = displacement_from_phase(&series, profile, scene.displacement.label)?;
    Ok(Observation { displacement, bin })
}

/// Recover displacement from an already-computed range matrix (the offline
/// counterpart of [`observe`], used when the IF matrix came from a file).
pub fn recover_displacement(
    range_matrix: &Array2<Complex64>,
    profile: &SensorProfile,
    label: SignalLabel,
) -> Result<Observation> {
    let bin = select_bin(range_matrix);
    let series = extract_phase(range_matrix, bin, profile.frame_rate_hz())?;
    let displacement = displacement_from_phase(&series, profile, label)?;
    Ok(Observation { displacement, bin })
}
