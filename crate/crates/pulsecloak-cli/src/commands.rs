//! Implementations behind the subcommands. Each takes a resolved
//! `ScenarioConfig` (file values already overridden by global flags) and
//! writes its artifacts under `config.out_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pulsecloak::dsp;
use pulsecloak::eval::{run_game, GameMode, TrialConfig};
use pulsecloak::extract::{estimate_methods, ObserverMode};
use pulsecloak::fmcw::{observe, simulate_frames, Scene, SensorProfile};
use pulsecloak::io;
use pulsecloak::obfuscation::{
    collision_bound, guess_probability, FrequencySpace, ObfuscationKey,
};
use pulsecloak::seed;
use pulsecloak::signal::{
    actuate, generate_pulse_train, superimpose, synthesize_heartbeat, DisplacementSignal,
    PulseTrainSpec, SignalLabel,
};

use crate::config::ScenarioConfig;

// Seed streams used by the commands. The library's game runner owns streams
// 0..=5 (derived from the same master seed), so command-level streams start
// higher.
const STREAM_SIM_HEART: u64 = 10;
const STREAM_SIM_OBSERVE: u64 = 11;
const STREAM_BENCH_POINT: u64 = 20;

fn ensure_out_dir(config: &ScenarioConfig) -> Result<PathBuf> {
    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating output directory {}", config.out_dir.display()))?;
    Ok(config.out_dir.clone())
}

fn load_key(path: &Path) -> Result<ObfuscationKey> {
    io::read_key(path).with_context(|| format!("reading key file {}", path.display()))
}

// ---------------------------------------------------------------------------
// keygen
// ---------------------------------------------------------------------------

pub fn keygen(config: &ScenarioConfig, p: usize, space: Option<FrequencySpace>) -> Result<()> {
    let space = space.unwrap_or(config.space);
    let key = ObfuscationKey::generate(p, &space, config.seed)?;
    let out = ensure_out_dir(config)?;
    let path = out.join("key.json");
    io::write_key(&path, &key)?;
    println!("wrote {}", path.display());
    println!(
        "key frequencies (BPM): {}",
        key.frequencies_bpm
            .iter()
            .map(|f| format!("{f:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("random-guess success = {}", guess_probability(p));
    println!("collision bound = {}", collision_bound(p, space.grid_len()));
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Build the composite chest displacement: synthesized heartbeat plus, when
/// decoy frequencies are configured, the actuated pulse train.
pub fn build_chest(
    config: &ScenarioConfig,
    decoy_frequencies_bpm: &[f64],
) -> Result<DisplacementSignal> {
    let rate = config.pulse_train.base_sample_rate_hz;
    let duration = config.scene.duration_s;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, STREAM_SIM_HEART, 0));
    let truth = synthesize_heartbeat(&config.vital, duration, rate, &mut rng)?;
    if decoy_frequencies_bpm.is_empty() {
        return Ok(truth);
    }

    let spec = PulseTrainSpec {
        decoy_frequencies_bpm: decoy_frequencies_bpm.to_vec(),
        ..config.pulse_train.clone()
    };
    let train = generate_pulse_train(&spec)?;
    let decoy = actuate(&train, &config.actuator)?;
    if decoy.samples_mm.len() < truth.samples_mm.len() {
        bail!(
            "pulse train covers {:.1} s but the scene lasts {:.1} s; raise \
             pulse_train.repetitions or base_duration_s",
            decoy.duration_s(),
            duration
        );
    }
    let decoy = DisplacementSignal::new(
        decoy.samples_mm[..truth.samples_mm.len()].to_vec(),
        rate,
        SignalLabel::Decoy,
    )?;
    Ok(superimpose(&truth, &decoy)?)
}

pub fn simulate(config: &ScenarioConfig, key_path: Option<&Path>) -> Result<()> {
    let profile = config.sensor.resolve()?;
    let key = key_path.map(load_key).transpose()?;
    let decoys: Vec<f64> = key
        .map(|k| k.frequencies_bpm)
        .unwrap_or_else(|| config.pulse_train.decoy_frequencies_bpm.clone());

    let chest = build_chest(config, &decoys)?;
    let mut scene = Scene::new(config.scene.base_distance_m, chest);
    scene.amplitude_scale = config.scene.amplitude_scale;
    scene.snr_db = config.scene.snr();
    let obs_seed = seed::derive(config.seed, STREAM_SIM_OBSERVE, 0);

    let out = ensure_out_dir(config)?;
    fs::write(out.join("scenario.toml"), config.to_toml_string()?)?;

    let chest_path = out.join("chest.csv");
    io::write_displacement_csv(&chest_path, &scene.displacement)?;

    // The IF matrix is written first and dropped before the rest of the
    // pipeline runs; at 2000 frames/s it is by far the largest artifact.
    let if_path = out.join("if_matrix.bin");
    {
        let frames = simulate_frames(&profile, &scene, obs_seed)?;
        io::write_if_matrix(&if_path, &frames)?;
    }

    let observation = observe(&profile, &scene, obs_seed)?;
    let observed_path = out.join("observed.csv");
    io::write_displacement_csv(&observed_path, &observation.displacement)?;

    let spec = dsp::spectrogram(
        &observation.displacement.samples_mm,
        observation.displacement.sample_rate_hz,
        0.1,
        0.4,
        4.0,
    );
    let spec_path = out.join("spectrogram.txt");
    io::write_spectrogram_text(&spec_path, &spec)?;

    println!(
        "sensor {}: {} frames at {} Hz, range bin {}",
        profile.name,
        observation.displacement.samples_mm.len(),
        observation.displacement.sample_rate_hz,
        observation.bin
    );
    if !decoys.is_empty() {
        let ridges: Vec<String> = spec
            .ridge_freqs_hz()
            .iter()
            .map(|hz| format!("{:.0}", hz * 60.0))
            .collect();
        println!("spectrogram ridges (BPM): {}", ridges.join(", "));
    }
    for path in [&chest_path, &if_path, &observed_path, &spec_path] {
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

pub fn extract(
    config: &ScenarioConfig,
    input: Option<&Path>,
    key_path: Option<&Path>,
) -> Result<()> {
    let default_input = config.out_dir.join("observed.csv");
    let input = input.unwrap_or(&default_input);
    let sig = io::read_displacement_csv(input, SignalLabel::Composite)
        .with_context(|| format!("reading displacement CSV {}", input.display()))?;
    let key = key_path.map(load_key).transpose()?;

    let mut rows = Vec::new();
    let truth = config.vital.heart_rate_bpm;
    let mut push = |ests: Vec<pulsecloak::extract::HeartRateEstimate>| {
        for est in ests {
            rows.push(io::EstimateRow {
                trial_id: 0,
                mode: est.mode.to_string(),
                method: est.method.to_string(),
                bpm: est.bpm,
                confidence: est.confidence,
                ground_truth_bpm: truth,
            });
        }
    };
    push(estimate_methods(&sig, ObserverMode::Unauthorized, None)?);
    if let Some(key) = &key {
        push(estimate_methods(&sig, ObserverMode::Authorized, Some(key))?);
    }

    let out = ensure_out_dir(config)?;
    let path = out.join("estimates.csv");
    io::write_estimates_csv(&path, &rows)?;
    for row in &rows {
        match row.bpm {
            Some(bpm) => println!(
                "{} {}: {:.1} BPM (confidence {:.2})",
                row.mode, row.method, bpm, row.confidence
            ),
            None => println!("{} {}: no valid estimate", row.mode, row.method),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub fn eval(config: &ScenarioConfig, key_path: Option<&Path>) -> Result<()> {
    let mut tc = config.trial_config()?;
    if let Some(path) = key_path {
        let key = load_key(path)?;
        tc.p = key.frequencies_bpm.len();
        tc.space = key.space;
        tc.fixed_key_bpm = Some(key.frequencies_bpm);
    }
    let report = run_game(&tc)?;
    let out = ensure_out_dir(config)?;
    let (summary_path, trials_path) = io::write_report(&out, &report)?;

    println!(
        "{:?} game, {} trials: success {:.4} (baseline {:.4}, advantage {:+.2e}, bound {:.2e})",
        tc.mode, tc.trials, report.empirical_success, report.guess_baseline, report.advantage,
        report.analytic_bound
    );
    println!("collision rate {:.2e}", report.collision_rate);
    if let (Some(auth), Some(unauth)) = (report.mae_authorized, report.mae_unauthorized) {
        println!(
            "MAE authorized {auth:.2} BPM, unauthorized {unauth:.2} BPM, protection ratio {}",
            report
                .protection_ratio
                .map(|r| format!("{r:.2}"))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    if let Some(p) = report.paired_p_value {
        println!("paired t-test p = {p:.2e}");
    }
    for path in [&summary_path, &trials_path] {
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    /// IF SNR in {0, 10, 20, 30} dB, pipeline game.
    Snr,
    /// Actuator strength multiplier in {0.25, 0.5, 1, 2, 4}, pipeline game.
    Amplitude,
    /// Decoy count in {1, 2, 3, 5}, configured game mode.
    P,
    /// Sensing distance in {0.3, 0.5, 0.9, 1.5} m, pipeline game; echo
    /// power falls with the fourth power of distance, so the per-sample
    /// SNR drops by 40 log10(d/0.3) dB.
    DistanceProxy,
}

struct BenchRow {
    axis: &'static str,
    value: f64,
    report: pulsecloak::eval::PrivacyReport,
}

fn pipeline_base(config: &ScenarioConfig) -> Result<TrialConfig> {
    let mut tc = config.trial_config()?;
    if tc.mode != GameMode::Pipeline {
        let profile = config.sensor.resolve()?;
        if config.sensor.preset.is_none() {
            bail!("bench pipeline sweeps need a sensor preset, not an inline profile");
        }
        tc.mode = GameMode::Pipeline;
        tc.sensor = Some(profile.name);
    }
    Ok(tc)
}

pub fn bench(config: &ScenarioConfig, sweep: SweepAxis, trials: usize) -> Result<()> {
    if trials == 0 {
        bail!("--trials must be at least 1");
    }
    let mut rows = Vec::new();
    let mut run_point = |axis: &'static str, value: f64, mut tc: TrialConfig, idx: u64| {
        tc.trials = trials;
        tc.seed = seed::derive(config.seed, STREAM_BENCH_POINT, idx);
        run_game(&tc).map(|report| rows.push(BenchRow { axis, value, report }))
    };

    match sweep {
        SweepAxis::Snr => {
            for (i, snr) in [0.0, 10.0, 20.0, 30.0].into_iter().enumerate() {
                let mut tc = pipeline_base(config)?;
                tc.snr_db = Some(snr);
                run_point("snr_db", snr, tc, i as u64)?;
            }
        }
        SweepAxis::Amplitude => {
            for (i, scale) in [0.25, 0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
                let mut tc = pipeline_base(config)?;
                tc.decoy_amplitude_scale = scale;
                run_point("decoy_amplitude_scale", scale, tc, i as u64)?;
            }
        }
        SweepAxis::P => {
            for (i, p) in [1usize, 2, 3, 5].into_iter().enumerate() {
                let mut tc = config.trial_config()?;
                tc.p = p;
                run_point("p", p as f64, tc, i as u64)?;
            }
        }
        SweepAxis::DistanceProxy => {
            let base_snr = config.scene.snr();
            for (i, d) in [0.3, 0.5, 0.9, 1.5].into_iter().enumerate() {
                let mut tc = pipeline_base(config)?;
                tc.scene_distance_m = d;
                tc.snr_db = base_snr.map(|s| s - 40.0 * (d / 0.3).log10());
                run_point("distance_m", d, tc, i as u64)?;
            }
        }
    }

    let out = ensure_out_dir(config)?;
    let path = out.join("bench.csv");
    write_bench_csv(&path, &rows)?;
    println!(
        "{:<22} {:>8} {:>9} {:>9} {:>10} {:>10} {:>8}",
        "axis", "value", "success", "baseline", "mae_auth", "mae_unauth", "ratio"
    );
    for row in &rows {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<22} {:>8} {:>9.4} {:>9.4} {:>10} {:>10} {:>8}",
            row.axis,
            row.value,
            row.report.empirical_success,
            row.report.guess_baseline,
            fmt(row.report.mae_authorized),
            fmt(row.report.mae_unauthorized),
            fmt(row.report.protection_ratio),
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "axis",
        "value",
        "p",
        "trials",
        "snr_db",
        "empirical_success",
        "guess_baseline",
        "advantage",
        "collision_rate",
        "mae_authorized",
        "mae_unauthorized",
        "protection_ratio",
        "paired_p_value",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.axis.to_string(),
            row.value.to_string(),
            r.config.p.to_string(),
            r.config.trials.to_string(),
            opt(r.config.snr_db),
            r.empirical_success.to_string(),
            r.guess_baseline.to_string(),
            r.advantage.to_string(),
            r.collision_rate.to_string(),
            opt(r.mae_authorized),
            opt(r.mae_unauthorized),
            opt(r.protection_ratio),
            opt(r.paired_p_value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// --check: fast invariant suite
// ---------------------------------------------------------------------------

type CheckResult = std::result::Result<(), String>;

fn check(name: &str, body: impl FnOnce() -> CheckResult) -> Result<()> {
    match body() {
        Ok(()) => {
            println!("self-check: {name} ... ok");
            Ok(())
        }
        Err(msg) => bail!("self-check failed: {name}: {msg}"),
    }
}

/// Quick invariant suite behind `--check`. Failures abort the command with
/// a nonzero exit code.
pub fn run_self_checks(config: &ScenarioConfig) -> Result<()> {
    use pulsecloak::obfuscation::{dec, enc_model};

    check("scheme round-trip", || {
        let space = FrequencySpace::new(45.0, 180.0, 0.5).unwrap();
        let mut failures = 0;
        for t in 0..200u64 {
            let p = 1 + (t % 5) as usize;
            let key = ObfuscationKey::generate(p, &space, seed::derive(config.seed, 30, t))
                .map_err(|e| e.to_string())?;
            // Every tenth message is forced onto a key frequency.
            let m = if t % 10 == 0 {
                key.frequencies_bpm[0]
            } else {
                space.value_at((t as usize * 37) % space.grid_len())
            };
            let c = enc_model(&key, m).map_err(|e| e.to_string())?;
            if dec(&key, &c).map_err(|e| e.to_string())? != m {
                failures += 1;
            }
        }
        if failures == 0 {
            Ok(())
        } else {
            Err(format!("{failures} of 200 round-trips failed"))
        }
    })?;

    check("abstract-game advantage bound", || {
        let space = FrequencySpace::with_grid_len(45.0, 180.0, 1 << 16).map_err(|e| e.to_string())?;
        let mut tc = TrialConfig::abstract_game(3, 20_000, seed::derive(config.seed, 31, 0));
        tc.space = space;
        let report = run_game(&tc).map_err(|e| e.to_string())?;
        let sigma = (0.25 * 0.75 / tc.trials as f64).sqrt();
        if report.advantage <= report.analytic_bound + 3.0 * sigma
            && (report.empirical_success - report.guess_baseline).abs() <= 4.0 * sigma
        {
            Ok(())
        } else {
            Err(format!(
                "success {:.4}, advantage {:+.2e} vs bound {:.2e}",
                report.empirical_success, report.advantage, report.analytic_bound
            ))
        }
    })?;

    check("sensor presets", || {
        let mm = SensorProfile::mmwave();
        let ac = SensorProfile::acoustic();
        let mm_res_cm = mm.range_resolution_m() * 100.0;
        let ac_res_cm = ac.range_resolution_m() * 100.0;
        let mm_phase = mm.phase_per_mm();
        if (mm_res_cm - 4.8785).abs() < 0.01
            && (ac_res_cm - 4.2875).abs() < 0.01
            && (mm_phase - 3.2276).abs() / 3.2276 < 0.05
        {
            Ok(())
        } else {
            Err(format!(
                "resolutions {mm_res_cm:.4} / {ac_res_cm:.4} cm, phase {mm_phase:.4} rad/mm"
            ))
        }
    })?;

    check("observation determinism", || {
        let config_small = {
            let mut c = config.clone();
            c.scene.duration_s = 2.0;
            c
        };
        let chest = build_chest(&config_small, &[53.0, 79.0, 101.0]).map_err(|e| e.to_string())?;
        let mut scene = Scene::new(0.30, chest);
        scene.snr_db = Some(20.0);
        let profile = SensorProfile::mmwave();
        let a = observe(&profile, &scene, seed::derive(config.seed, 32, 0))
            .map_err(|e| e.to_string())?;
        let b = observe(&profile, &scene, seed::derive(config.seed, 32, 0))
            .map_err(|e| e.to_string())?;
        if a.displacement.samples_mm == b.displacement.samples_mm && a.bin == b.bin {
            Ok(())
        } else {
            Err("two observations with the same seed differ".into())
        }
    })?;

    check("config round-trip identity", || {
        let text = config.to_toml_string().map_err(|e| e.to_string())?;
        let reparsed: ScenarioConfig = toml::from_str(&text).map_err(|e| e.to_string())?;
        if reparsed == *config {
            Ok(())
        } else {
            Err("serialize -> parse changed the scenario".into())
        }
    })?;

    Ok(())
}
