//! File formats for signals, keys, and reports.
//!
//! Everything is plain text or a small self-describing binary so external
//! tools (numpy, gnuplot, a spreadsheet) can pick the artifacts up without
//! linking this crate. All writers are deterministic: identical inputs
//! produce byte-identical files, which is what makes reruns diffable.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::eval::{PrivacyReport, TrialRecord};
use crate::obfuscation::{FrequencySpace, ObfuscationKey};
use crate::signal::{DisplacementSignal, SignalLabel};

/// Magic bytes opening the IF-matrix container (`read_if_matrix`).
pub const IF_MAGIC: [u8; 8] = *b"PCIQMTX1";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f64(field: &str, context: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("{context}: expected a number, got {field:?}")))
}

fn parse_opt_f64(field: &str, context: &str) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(field, context).map(Some)
    }
}

// ---------------------------------------------------------------------------
// Displacement traces
// ---------------------------------------------------------------------------

/// Write a displacement trace as CSV: header `t_s,displacement_mm`, then one
/// row per sample with `t = i / sample_rate`.
pub fn write_displacement_csv(path: &Path, sig: &DisplacementSignal) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_s", "displacement_mm"])?;
    for (i, &x) in sig.samples_mm.iter().enumerate() {
        let t = i as f64 / sig.sample_rate_hz;
        w.write_record([t.to_string(), x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a displacement CSV back. The sample rate is inferred from the time
/// column, so the file needs at least two rows.
pub fn read_displacement_csv(path: &Path, label: SignalLabel) -> Result<DisplacementSignal> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t_s" || &headers[1] != "displacement_mm" {
        return Err(Error::Format(format!(
            "displacement CSV header must be `t_s,displacement_mm`, got {headers:?}"
        )));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Format(format!(
                "displacement CSV row {row}: expected 2 fields, got {}",
                rec.len()
            )));
        }
        times.push(parse_f64(&rec[0], "t_s")?);
        samples.push(parse_f64(&rec[1], "displacement_mm")?);
    }
    if samples.len() < 2 {
        return Err(Error::Format(
            "displacement CSV needs at least 2 samples to infer the rate".into(),
        ));
    }
    let span = times[times.len() - 1] - times[0];
    if !(span.is_finite() && span > 0.0) {
        return Err(Error::Format(
            "displacement CSV time column must be strictly increasing".into(),
        ));
    }
    let rate = (samples.len() - 1) as f64 / span;
    DisplacementSignal::new(samples, rate, label)
}

// ---------------------------------------------------------------------------
// Heart-rate estimates
// ---------------------------------------------------------------------------

/// One row of the estimates table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub trial_id: u64,
    /// `authorized` or `unauthorized`.
    pub mode: String,
    /// `fft_peak` or `peak_rr`.
    pub method: String,
    /// Empty cell when the estimator flagged the trial invalid.
    pub bpm: Option<f64>,
    pub confidence: f64,
    pub ground_truth_bpm: f64,
}

impl EstimateRow {
    pub fn abs_error(&self) -> Option<f64> {
        self.bpm.map(|b| (b - self.ground_truth_bpm).abs())
    }
}

/// Write estimates as CSV with the schema
/// `trial_id,mode,method,bpm,confidence,ground_truth_bpm,abs_error`.
pub fn write_estimates_csv(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "trial_id",
        "mode",
        "method",
        "bpm",
        "confidence",
        "ground_truth_bpm",
        "abs_error",
    ])?;
    for row in rows {
        w.write_record([
            row.trial_id.to_string(),
            row.mode.clone(),
            row.method.clone(),
            fmt_opt(row.bpm),
            row.confidence.to_string(),
            row.ground_truth_bpm.to_string(),
            fmt_opt(row.abs_error()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Raw IF matrices
// ---------------------------------------------------------------------------

/// Write an IF matrix as little-endian complex64 (f32 re, f32 im) pairs in
/// row-major order behind a 16-byte header: 8 magic bytes, then `rows` and
/// `cols` as u32.
pub fn write_if_matrix(path: &Path, frames: &Array2<Complex64>) -> Result<()> {
    let (rows, cols) = frames.dim();
    if rows > u32::MAX as usize || cols > u32::MAX as usize {
        return Err(Error::parameter(format!(
            "IF matrix {rows}x{cols} exceeds the u32 header fields"
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IF_MAGIC)?;
    w.write_all(&(rows as u32).to_le_bytes())?;
    w.write_all(&(cols as u32).to_le_bytes())?;
    for z in frames.iter() {
        w.write_all(&(z.re as f32).to_le_bytes())?;
        w.write_all(&(z.im as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read an IF matrix container. Rejects bad magic and size mismatches.
pub fn read_if_matrix(path: &Path) -> Result<Array2<Complex64>> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 16 {
        return Err(Error::Format(format!(
            "IF file is {} bytes, shorter than the 16-byte header",
            buf.len()
        )));
    }
    if buf[..8] != IF_MAGIC {
        return Err(Error::Format(format!(
            "IF file magic {:?} does not match {IF_MAGIC:?}",
            &buf[..8]
        )));
    }
    let rows = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| Error::Format("IF header dimensions overflow".into()))?;
    if buf.len() != expected {
        return Err(Error::Format(format!(
            "IF file is {} bytes but the {rows}x{cols} header implies {expected}",
            buf.len()
        )));
    }
    let mut out = Array2::zeros((rows, cols));
    for (i, z) in out.iter_mut().enumerate() {
        let off = 16 + i * 8;
        let re = f32::from_le_bytes(buf[off..off + 4].try_into().unwrap());
        let im = f32::from_le_bytes(buf[off + 4..off + 8].try_into().unwrap());
        *z = Complex64::new(re as f64, im as f64);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Spectrograms
// ---------------------------------------------------------------------------

/// Write a spectrogram as a dense numeric matrix: one row per frequency bin,
/// one whitespace-separated column per time frame. The axes ride along in
/// `#` comment lines, which `numpy.loadtxt` and gnuplot skip.
pub fn write_spectrogram_text(path: &Path, spec: &Spectrogram) -> Result<()> {
    if spec.magnitudes.len() != spec.freqs_hz.len()
        || spec.magnitudes.iter().any(|r| r.len() != spec.times_s.len())
    {
        return Err(Error::parameter(
            "spectrogram axes do not match the magnitude matrix",
        ));
    }
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "# spectrogram magnitudes: rows = frequency bins, cols = time frames"
    )?;
    writeln!(w, "# window_s: {}", spec.window_s)?;
    writeln!(w, "# hop_s: {}", spec.hop_s)?;
    writeln!(w, "# freqs_hz: {}", join(&spec.freqs_hz))?;
    writeln!(w, "# times_s: {}", join(&spec.times_s))?;
    for row in &spec.magnitudes {
        writeln!(w, "{}", join(row))?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Key files
// ---------------------------------------------------------------------------

/// On-disk layout of a key: JSON with the decoy count spelled out so a
/// truncated frequency list is caught on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    pub p: usize,
    pub space: FrequencySpace,
    pub frequencies_bpm: Vec<f64>,
    pub seed: u64,
}

impl KeyFile {
    pub fn from_key(key: &ObfuscationKey) -> Self {
        KeyFile {
            p: key.frequencies_bpm.len(),
            space: key.space,
            frequencies_bpm: key.frequencies_bpm.clone(),
            seed: key.seed,
        }
    }

    pub fn into_key(self) -> Result<ObfuscationKey> {
        if self.p != self.frequencies_bpm.len() {
            return Err(Error::Format(format!(
                "key file claims p = {} but lists {} frequencies",
                self.p,
                self.frequencies_bpm.len()
            )));
        }
        let key = ObfuscationKey {
            frequencies_bpm: self.frequencies_bpm,
            space: self.space,
            seed: self.seed,
        };
        key.validate()?;
        Ok(key)
    }
}

pub fn write_key(path: &Path, key: &ObfuscationKey) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&KeyFile::from_key(key))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_key(path: &Path) -> Result<ObfuscationKey> {
    let text = fs::read_to_string(path)?;
    let file: KeyFile = serde_json::from_str(&text)?;
    file.into_key()
}

// ---------------------------------------------------------------------------
// Privacy reports
// ---------------------------------------------------------------------------

const TRIALS_HEADER: [&str; 9] = [
    "trial",
    "m_bpm",
    "collision",
    "success",
    "guess_bpm",
    "authorized_bpm",
    "unauthorized_bpm",
    "abs_error_authorized",
    "abs_error_unauthorized",
];

/// Write `summary.json` (the aggregate `PrivacyReport` fields) and
/// `trials.csv` (one row per game) into `dir`, creating it if needed.
/// Returns the two paths.
pub fn write_report(dir: &Path, report: &PrivacyReport) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let summary_path = dir.join("summary.json");
    let trials_path = dir.join("trials.csv");

    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(&summary_path, text)?;

    let mut w = csv::Writer::from_path(&trials_path)?;
    w.write_record(TRIALS_HEADER)?;
    for rec in &report.records {
        let err = |est: Option<f64>| est.map(|b| (b - rec.m_bpm).abs());
        w.write_record([
            rec.trial.to_string(),
            rec.m_bpm.to_string(),
            rec.collision.to_string(),
            rec.success.to_string(),
            fmt_opt(rec.guess_bpm),
            fmt_opt(rec.authorized_bpm),
            fmt_opt(rec.unauthorized_bpm),
            fmt_opt(err(rec.authorized_bpm)),
            fmt_opt(err(rec.unauthorized_bpm)),
        ])?;
    }
    w.flush()?;
    Ok((summary_path, trials_path))
}

/// Read `trials.csv` back into records (the derived error columns are
/// recomputed on demand, not stored).
pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let expected: Vec<&str> = TRIALS_HEADER.to_vec();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Format(format!(
            "trials CSV header mismatch: got {headers:?}"
        )));
    }
    let parse_bool = |field: &str, context: &str| match field.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Format(format!(
            "{context}: expected true/false, got {other:?}"
        ))),
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != TRIALS_HEADER.len() {
            return Err(Error::Format(format!(
                "trials CSV row has {} fields, expected {}",
                rec.len(),
                TRIALS_HEADER.len()
            )));
        }
        out.push(TrialRecord {
            trial: rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("trial id {:?} is not an integer", &rec[0])))?,
            m_bpm: parse_f64(&rec[1], "m_bpm")?,
            collision: parse_bool(&rec[2], "collision")?,
            success: parse_bool(&rec[3], "success")?,
            guess_bpm: parse_opt_f64(&rec[4], "guess_bpm")?,
            authorized_bpm: parse_opt_f64(&rec[5], "authorized_bpm")?,
            unauthorized_bpm: parse_opt_f64(&rec[6], "unauthorized_bpm")?,
        });
    }
    Ok(out)
}
