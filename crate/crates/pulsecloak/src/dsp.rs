//! Shared signal-processing primitives: windows, spectra, spectrograms,
//! FIR decimation, and zero-phase IIR filtering.
//!
//! Everything here is deterministic: the same input slice always produces the
//! same output bytes, which the reproducibility guarantees of the higher
//! layers rely on.

use num_complex::Complex64;
use rustfft::FftPlanner;

// ---- windows and basic helpers ----

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let x = std::f64::consts::TAU * i as f64 / n as f64;
            0.5 * (1.0 - x.cos())
        })
        .collect()
}

/// Subtract the mean in place.
pub fn mean_remove(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    for x in xs.iter_mut() {
        *x -= mean;
    }
}

/// Pearson correlation of two equal-length slices.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson needs equal lengths");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Remove 2-pi jumps so successive differences stay within (-pi, pi].
pub fn unwrap_phase(phase: &mut [f64]) {
    use std::f64::consts::{PI, TAU};
    for i in 1..phase.len() {
        let mut d = phase[i] - phase[i - 1];
        if d > PI || d <= -PI {
            d -= TAU * (d / TAU).round();
        }
        phase[i] = phase[i - 1] + d;
    }
}

/// In-place forward FFT.
pub fn fft_in_place(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

// ---- spectra ----

/// One-sided magnitude spectrum with its bin spacing.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub bin_hz: f64,
    pub mags: Vec<f64>,
}

impl Spectrum {
    pub fn freq_at(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    fn bin_range(&self, low_hz: f64, high_hz: f64) -> std::ops::Range<usize> {
        let lo = (low_hz / self.bin_hz).ceil() as usize;
        let hi = ((high_hz / self.bin_hz).floor() as usize + 1).min(self.mags.len());
        lo.min(self.mags.len())..hi
    }
}

/// Hann-windowed, mean-removed, 4x zero-padded magnitude spectrum.
pub fn magnitude_spectrum(samples: &[f64], rate_hz: f64) -> Spectrum {
    let n = samples.len();
    let nfft = (4 * n.max(1)).next_power_of_two();
    let w = hann(n);
    let mut xs: Vec<f64> = samples.to_vec();
    mean_remove(&mut xs);
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for i in 0..n {
        buf[i] = Complex64::new(xs[i] * w[i], 0.0);
    }
    fft_in_place(&mut buf);
    let half = nfft / 2 + 1;
    Spectrum {
        bin_hz: rate_hz / nfft as f64,
        mags: buf[..half].iter().map(|z| z.norm()).collect(),
    }
}

/// A spectral peak refined by parabolic interpolation.
#[derive(Debug, Clone, Copy)]
pub struct BandPeak {
    pub freq_hz: f64,
    pub magnitude: f64,
    pub bin: usize,
}

/// Strongest bin inside [low_hz, high_hz], interpolated between neighbors.
/// Returns `None` when the band is empty or carries no energy.
pub fn band_peak(spec: &Spectrum, low_hz: f64, high_hz: f64) -> Option<BandPeak> {
    let range = spec.bin_range(low_hz, high_hz);
    if range.is_empty() {
        return None;
    }
    let start = range.start;
    let (off, &mag) = spec.mags[range]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if mag <= 0.0 {
        return None;
    }
    let bin = start + off;
    let mut freq = spec.freq_at(bin);
    if bin > 0 && bin + 1 < spec.mags.len() {
        let (ym, y0, yp) = (spec.mags[bin - 1], spec.mags[bin], spec.mags[bin + 1]);
        let denom = ym - 2.0 * y0 + yp;
        if denom < 0.0 {
            let delta = 0.5 * (ym - yp) / denom;
            if delta.abs() <= 0.5 {
                freq += delta * spec.bin_hz;
            }
        }
    }
    Some(BandPeak {
        freq_hz: freq,
        magnitude: mag,
        bin,
    })
}

/// Strongest bin inside the band at least `exclude_hz` away from `around_hz`.
pub fn band_peak_excluding(
    spec: &Spectrum,
    low_hz: f64,
    high_hz: f64,
    around_hz: f64,
    exclude_hz: f64,
) -> Option<BandPeak> {
    let range = spec.bin_range(low_hz, high_hz);
    let mut best: Option<(usize, f64)> = None;
    for bin in range {
        if (spec.freq_at(bin) - around_hz).abs() < exclude_hz {
            continue;
        }
        let mag = spec.mags[bin];
        if best.map_or(true, |(_, m)| mag > m) {
            best = Some((bin, mag));
        }
    }
    best.map(|(bin, magnitude)| BandPeak {
        freq_hz: spec.freq_at(bin),
        magnitude,
        bin,
    })
}

// ---- spectrogram ----

/// Short-time magnitude spectrogram on a fixed frequency grid.
///
/// Rows are frequencies, columns are analysis windows. Window length is
/// chosen as `rate / resolution_hz`, so one bin spans one resolution step.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub freqs_hz: Vec<f64>,
    pub times_s: Vec<f64>,
    /// `magnitudes[f][t]`, row-major per frequency.
    pub magnitudes: Vec<Vec<f64>>,
    pub window_s: f64,
    pub hop_s: f64,
}

impl Spectrogram {
    /// Magnitude averaged over time, one value per frequency row.
    pub fn mean_profile(&self) -> Vec<f64> {
        self.magnitudes
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len().max(1) as f64)
            .collect()
    }

    /// Frequencies of local maxima of the mean profile.
    pub fn ridge_freqs_hz(&self) -> Vec<f64> {
        let profile = self.mean_profile();
        local_maxima(&profile)
            .into_iter()
            .map(|i| self.freqs_hz[i])
            .collect()
    }
}

/// Compute a spectrogram with half-window hops, keeping bins in
/// [min_freq_hz, max_freq_hz]. Each window is mean-removed and Hann weighted.
pub fn spectrogram(
    samples: &[f64],
    rate_hz: f64,
    resolution_hz: f64,
    min_freq_hz: f64,
    max_freq_hz: f64,
) -> Spectrogram {
    assert!(resolution_hz > 0.0 && rate_hz > 0.0);
    let win = ((rate_hz / resolution_hz).round() as usize).max(2);
    let win = win.min(samples.len());
    let hop = (win / 2).max(1);
    let w = hann(win);
    let bin_hz = rate_hz / win as f64;
    let lo_bin = (min_freq_hz / bin_hz).ceil() as usize;
    let hi_bin = ((max_freq_hz / bin_hz).floor() as usize).min(win / 2);
    let freqs_hz: Vec<f64> = (lo_bin..=hi_bin).map(|b| b as f64 * bin_hz).collect();

    let mut times_s = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut start = 0;
    while start + win <= samples.len() {
        let mut seg: Vec<f64> = samples[start..start + win].to_vec();
        mean_remove(&mut seg);
        let mut buf: Vec<Complex64> = seg
            .iter()
            .zip(&w)
            .map(|(&x, &wi)| Complex64::new(x * wi, 0.0))
            .collect();
        fft_in_place(&mut buf);
        cols.push((lo_bin..=hi_bin).map(|b| buf[b].norm()).collect());
        times_s.push(start as f64 / rate_hz);
        start += hop;
    }

    let magnitudes = (0..freqs_hz.len())
        .map(|f| cols.iter().map(|c| c[f]).collect())
        .collect();
    Spectrogram {
        freqs_hz,
        times_s,
        magnitudes,
        window_s: win as f64 / rate_hz,
        hop_s: hop as f64 / rate_hz,
    }
}

// ---- peaks ----

/// Indices of strict local maxima (first sample of a plateau counts).
pub fn local_maxima(xs: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    for i in 1..xs.len().saturating_sub(1) {
        if xs[i] > xs[i - 1] && xs[i] >= xs[i + 1] {
            peaks.push(i);
        }
    }
    peaks
}

/// Topographic prominence of each listed peak.
pub fn peak_prominences(xs: &[f64], peaks: &[usize]) -> Vec<f64> {
    peaks
        .iter()
        .map(|&p| {
            let h = xs[p];
            let mut left_min = h;
            for i in (0..p).rev() {
                if xs[i] > h {
                    break;
                }
                left_min = left_min.min(xs[i]);
            }
            let mut right_min = h;
            for &x in &xs[p + 1..] {
                if x > h {
                    break;
                }
                right_min = right_min.min(x);
            }
            h - left_min.max(right_min)
        })
        .collect()
}

/// Local maxima filtered by prominence and a minimum spacing. Peaks are
/// admitted tallest-first; survivors are returned in ascending index order.
pub fn select_peaks(xs: &[f64], min_prominence: f64, min_distance: usize) -> Vec<usize> {
    let candidates = local_maxima(xs);
    let proms = peak_prominences(xs, &candidates);
    let mut order: Vec<usize> = (0..candidates.len())
        .filter(|&i| proms[i] >= min_prominence)
        .collect();
    order.sort_by(|&a, &b| xs[candidates[b]].total_cmp(&xs[candidates[a]]));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let p = candidates[i];
        if kept
            .iter()
            .all(|&q| (p as isize - q as isize).unsigned_abs() >= min_distance)
        {
            kept.push(p);
        }
    }
    kept.sort_unstable();
    kept
}

// ---- FIR decimation ----

/// Odd-length Hamming-windowed sinc low-pass.
pub fn design_lowpass_fir(cutoff_hz: f64, transition_hz: f64, rate_hz: f64) -> Vec<f64> {
    assert!(cutoff_hz > 0.0 && transition_hz > 0.0 && cutoff_hz + transition_hz / 2.0 < rate_hz / 2.0);
    let mut len = (3.3 * rate_hz / transition_hz).ceil() as usize;
    if len % 2 == 0 {
        len += 1;
    }
    let mid = (len / 2) as isize;
    let fc = cutoff_hz / rate_hz;
    let mut taps: Vec<f64> = (0..len as isize)
        .map(|i| {
            let k = (i - mid) as f64;
            let sinc = if k == 0.0 {
                2.0 * fc
            } else {
                (std::f64::consts::TAU * fc * k).sin() / (std::f64::consts::PI * k)
            };
            let w = 0.54 - 0.46 * (std::f64::consts::TAU * i as f64 / (len - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Anti-aliased decimation by an integer factor with exact group-delay
/// compensation (the FIR is symmetric with odd length). Out-of-range indices
/// are odd-reflected about the end samples, the same convention as
/// [`filtfilt`], so smooth signals continue coherently across the edges
/// instead of turning into boundary clicks.
pub fn decimate(samples: &[f64], rate_hz: f64, factor: usize) -> Vec<f64> {
    assert!(factor >= 1);
    if factor == 1 {
        return samples.to_vec();
    }
    let out_rate = rate_hz / factor as f64;
    let taps = design_lowpass_fir(0.4 * out_rate, 0.2 * out_rate, rate_hz);
    let delay = (taps.len() / 2) as isize;
    let n = samples.len() as isize;
    let at = |idx: isize| -> f64 {
        if idx < 0 {
            2.0 * samples[0] - samples[(-idx).min(n - 1) as usize]
        } else if idx >= n {
            2.0 * samples[(n - 1) as usize] - samples[(2 * (n - 1) - idx).max(0) as usize]
        } else {
            samples[idx as usize]
        }
    };
    let out_len = samples.len().div_ceil(factor);
    (0..out_len)
        .map(|m| {
            let center = (m * factor) as isize + delay;
            taps.iter()
                .enumerate()
                .map(|(k, &t)| t * at(center - k as isize))
                .sum()
        })
        .collect()
}

// ---- IIR biquads and zero-phase filtering ----

/// Normalized second-order section (a0 = 1).
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn normalized(b0: f64, b1: f64, b2: f64, a0: f64, a1: f64, a2: f64) -> Self {
        Biquad {
            b0: b0 / a0,
            b1: b1 / a0,
            b2: b2 / a0,
            a1: a1 / a0,
            a2: a2 / a0,
        }
    }

    /// Direct-form II transposed pass over `xs`.
    pub fn filter(&self, xs: &[f64]) -> Vec<f64> {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        xs.iter()
            .map(|&x| {
                let y = self.b0 * x + s1;
                s1 = self.b1 * x - self.a1 * y + s2;
                s2 = self.b2 * x - self.a2 * y;
                y
            })
            .collect()
    }
}

fn butter_q(order4_section: usize) -> f64 {
    // Pole quality factors of a 4th-order Butterworth split into two biquads.
    match order4_section {
        0 => 1.0 / (2.0 * (std::f64::consts::PI / 8.0).cos()),
        _ => 1.0 / (2.0 * (3.0 * std::f64::consts::PI / 8.0).cos()),
    }
}

/// Second-order high-pass section (RBJ form).
pub fn highpass_biquad(f0_hz: f64, rate_hz: f64, q: f64) -> Biquad {
    let w0 = std::f64::consts::TAU * f0_hz / rate_hz;
    let (sw, cw) = w0.sin_cos();
    let alpha = sw / (2.0 * q);
    Biquad::normalized(
        (1.0 + cw) / 2.0,
        -(1.0 + cw),
        (1.0 + cw) / 2.0,
        1.0 + alpha,
        -2.0 * cw,
        1.0 - alpha,
    )
}

/// Second-order low-pass section (RBJ form).
pub fn lowpass_biquad(f0_hz: f64, rate_hz: f64, q: f64) -> Biquad {
    let w0 = std::f64::consts::TAU * f0_hz / rate_hz;
    let (sw, cw) = w0.sin_cos();
    let alpha = sw / (2.0 * q);
    Biquad::normalized(
        (1.0 - cw) / 2.0,
        1.0 - cw,
        (1.0 - cw) / 2.0,
        1.0 + alpha,
        -2.0 * cw,
        1.0 - alpha,
    )
}

/// Second-order notch whose -3 dB points sit `half_bandwidth_hz` either side
/// of `f0_hz` (single pass; a forward-backward pass deepens and narrows it).
pub fn notch_biquad(f0_hz: f64, rate_hz: f64, half_bandwidth_hz: f64) -> Biquad {
    let q = f0_hz / (2.0 * half_bandwidth_hz);
    let w0 = std::f64::consts::TAU * f0_hz / rate_hz;
    let (sw, cw) = w0.sin_cos();
    let alpha = sw / (2.0 * q);
    Biquad::normalized(1.0, -2.0 * cw, 1.0, 1.0 + alpha, -2.0 * cw, 1.0 - alpha)
}

/// 4th-order Butterworth band-pass as a high-pass/low-pass biquad cascade.
pub fn butterworth_bandpass(low_hz: f64, high_hz: f64, rate_hz: f64) -> Vec<Biquad> {
    vec![
        highpass_biquad(low_hz, rate_hz, butter_q(0)),
        highpass_biquad(low_hz, rate_hz, butter_q(1)),
        lowpass_biquad(high_hz, rate_hz, butter_q(0)),
        lowpass_biquad(high_hz, rate_hz, butter_q(1)),
    ]
}

fn run_cascade(sos: &[Biquad], xs: &[f64]) -> Vec<f64> {
    let mut ys = xs.to_vec();
    for bq in sos {
        ys = bq.filter(&ys);
    }
    ys
}

/// Zero-phase (forward-backward) filtering with odd-reflection padding.
///
/// The squared magnitude response doubles every attenuation in dB and cancels
/// phase distortion, so peak positions are preserved. `pad` samples of
/// odd-symmetric extension absorb the filter transient at both ends.
pub fn filtfilt(sos: &[Biquad], xs: &[f64], pad: usize) -> Vec<f64> {
    let n = xs.len();
    if n == 0 || sos.is_empty() {
        return xs.to_vec();
    }
    let pad = pad.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * xs[0] - xs[i]);
    }
    ext.extend_from_slice(xs);
    for i in (1..=pad).rev() {
        ext.push(2.0 * xs[n - 1] - xs[n - 1 - i]);
    }
    let mut ys = run_cascade(sos, &ext);
    ys.reverse();
    let mut ys = run_cascade(sos, &ys);
    ys.reverse();
    ys[pad..pad + n].to_vec()
}

/// Steady-state amplitude gain of a forward-backward cascade at `f_hz`,
/// measured on a long probe tone (used in tests and calibration).
pub fn filtfilt_gain(sos: &[Biquad], f_hz: f64, rate_hz: f64, seconds: f64) -> f64 {
    let n = (seconds * rate_hz) as usize;
    let tone: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::TAU * f_hz * i as f64 / rate_hz).sin())
        .collect();
    let pad = (n - 1).min((3.0 * rate_hz / f_hz.max(0.05)) as usize);
    let out = filtfilt(sos, &tone, pad);
    // Compare RMS over the central half to dodge residual edge effects.
    let lo = n / 4;
    let hi = 3 * n / 4;
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    rms(&out[lo..hi]) / rms(&tone[lo..hi])
}
