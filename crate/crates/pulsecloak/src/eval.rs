//! Privacy games: what can an adversary actually learn?
//!
//! Three games of increasing physical fidelity, all Monte Carlo over a
//! per-trial seeded RNG so every number is reproducible:
//!
//! * **Abstract**: the adversary sees the ciphertext multiset `{m} U k` and
//!   nothing else. The optimal (Bayes) guess reduces to picking a value with
//!   maximal multiplicity, so on collision-free draws every choice is
//!   equally good and success is exactly `1/(p+1)`.
//! * **Spectral**: the adversary sees a synthetic displacement built from
//!   `p + 1` equal-amplitude sinusoids (random phases) and runs the spectral
//!   estimator. Exchangeability of the components keeps success at
//!   `1/(p+1)`; an amplitude mismatch between the true component and the
//!   decoys breaks it, which is measurable with
//!   [`TrialConfig::true_amplitude_scale`].
//! * **Pipeline**: the full chain. Heartbeat synthesis, actuated decoy
//!   pulse trains, superposition, the FMCW sensor, displacement recovery,
//!   and both the unauthorized and authorized estimators. Reports mean
//!   absolute error for both observers, their ratio, and a paired t-test.
//!
//! A guess is "correct" when it lands within 3 BPM of the true rate. The
//! synthesis games redraw `(m, k)` until all components are pairwise
//! separated by [`TrialConfig::min_separation_bpm`]; without that, a decoy
//! inside the correctness radius would make success ill-defined. The
//! redraw rejects on a symmetric region, so component exchangeability (and
//! with it the `1/(p+1)` law) survives. The abstract game never rejects:
//! its collision statistics are the point.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::extract::{self, ObserverMode};
use crate::fmcw::{observe, Scene, SensorProfile};
use crate::obfuscation::{
    collision_bound, guess_probability, FrequencyMultiset, FrequencySpace, ObfuscationKey,
};
use crate::seed;
use crate::signal::{
    actuate, generate_pulse_train, superimpose, synthesize_heartbeat, ActuatorKernel,
    DisplacementSignal, PulseTrainSpec, SignalLabel, VitalSignSource,
};

/// Correctness radius: a guess within this many BPM of the truth counts.
pub const CORRECT_RADIUS_BPM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameMode {
    Abstract,
    Spectral,
    Pipeline,
}

/// Everything a game run depends on. Serialized into the report so results
/// are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub mode: GameMode,
    /// Number of decoy frequencies. Zero means no obfuscation (baseline).
    pub p: usize,
    pub space: FrequencySpace,
    pub trials: usize,
    pub seed: u64,
    /// Length of each synthesized capture (spectral and pipeline games).
    pub duration_s: f64,
    /// Minimum pairwise spacing of `{m} U k` in the synthesis games.
    pub min_separation_bpm: f64,
    /// Amplitude of the true component relative to the decoys (spectral
    /// game). 1.0 is the matched, indistinguishable case.
    pub true_amplitude_scale: f64,
    /// Actuator peak displacement relative to its default (pipeline game).
    pub decoy_amplitude_scale: f64,
    /// Per-sample IF SNR for the sensor; `None` simulates a noiseless link.
    pub snr_db: Option<f64>,
    /// Sensor profile name for the pipeline game; `None` feeds the chest
    /// displacement directly to the estimators (perfect sensor).
    pub sensor: Option<String>,
    pub scene_distance_m: f64,
    pub vital: VitalSignSource,
    /// Use this key in every trial instead of sampling a fresh one. Must
    /// have exactly `p` on-grid frequencies. The zero-advantage guarantee
    /// is an average over random keys, so a fixed key only measures that
    /// one key's behavior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_key_bpm: Option<Vec<f64>>,
}

impl TrialConfig {
    fn base(mode: GameMode, p: usize, trials: usize, seed: u64) -> Self {
        TrialConfig {
            mode,
            p,
            space: FrequencySpace::new(50.0, 110.0, 0.5).expect("valid space"),
            trials,
            seed,
            duration_s: 30.0,
            min_separation_bpm: 8.0,
            true_amplitude_scale: 1.0,
            decoy_amplitude_scale: 1.0,
            snr_db: Some(20.0),
            sensor: None,
            scene_distance_m: 0.30,
            vital: VitalSignSource {
                breathing: None,
                ..Default::default()
            },
            fixed_key_bpm: None,
        }
    }

    /// Multiset-only game over the default high-resolution space.
    pub fn abstract_game(p: usize, trials: usize, seed: u64) -> Self {
        TrialConfig {
            space: FrequencySpace::heart_rate_default(),
            ..TrialConfig::base(GameMode::Abstract, p, trials, seed)
        }
    }

    /// Equal-amplitude sinusoid game.
    pub fn spectral(p: usize, trials: usize, seed: u64) -> Self {
        TrialConfig::base(GameMode::Spectral, p, trials, seed)
    }

    /// Full-chain game through the named sensor.
    pub fn pipeline(sensor: &str, p: usize, trials: usize, seed: u64) -> Self {
        TrialConfig {
            sensor: Some(sensor.to_string()),
            ..TrialConfig::base(GameMode::Pipeline, p, trials, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.vital.validate()?;
        if self.trials == 0 {
            return Err(Error::parameter("need at least one trial"));
        }
        if self.duration_s <= 0.0 || self.min_separation_bpm < 0.0 {
            return Err(Error::parameter("bad duration or separation"));
        }
        if self.true_amplitude_scale <= 0.0 || self.decoy_amplitude_scale < 0.0 {
            return Err(Error::parameter("bad amplitude scale"));
        }
        if matches!(self.mode, GameMode::Spectral | GameMode::Pipeline) {
            // The rejection sampler must be able to place p + 1 separated
            // components in the space.
            let needed = self.min_separation_bpm * self.p as f64;
            let width = self.space.high_bpm - self.space.low_bpm;
            if needed >= width {
                return Err(Error::parameter(format!(
                    "cannot fit {} components spaced {} BPM into a {width} BPM space",
                    self.p + 1,
                    self.min_separation_bpm
                )));
            }
            if self.mode == GameMode::Pipeline && self.duration_s < 12.0 {
                return Err(Error::parameter(
                    "pipeline game needs at least 12 s per trial",
                ));
            }
        }
        if let Some(name) = &self.sensor {
            SensorProfile::by_name(name)?;
        }
        if let Some(ks) = &self.fixed_key_bpm {
            if ks.len() != self.p {
                return Err(Error::parameter(format!(
                    "fixed key has {} frequencies but p = {}",
                    ks.len(),
                    self.p
                )));
            }
            for &bpm in ks {
                self.space.index_of(bpm)?;
            }
            if matches!(self.mode, GameMode::Spectral | GameMode::Pipeline)
                && self.min_separation_bpm > 0.0
            {
                let mut sorted = ks.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if sorted
                    .windows(2)
                    .any(|w| w[1] - w[0] < self.min_separation_bpm)
                {
                    return Err(Error::parameter(
                        "fixed key violates min_separation_bpm, so no message can be drawn",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Grid indices of the fixed key, if one is set. Assumes `validate`
    /// already checked the frequencies are on-grid.
    fn fixed_key_indices(&self) -> Option<Vec<usize>> {
        self.fixed_key_bpm.as_ref().map(|ks| {
            ks.iter()
                .map(|&bpm| self.space.index_of(bpm).expect("validated on-grid"))
                .collect()
        })
    }
}

/// One row of the per-trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub m_bpm: f64,
    /// Two elements of the transmitted multiset coincided (abstract game).
    pub collision: bool,
    /// The adversary's guess (unauthorized estimate in the pipeline game).
    pub guess_bpm: Option<f64>,
    pub success: bool,
    pub authorized_bpm: Option<f64>,
    pub unauthorized_bpm: Option<f64>,
}

/// Aggregated result of a game run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub config: TrialConfig,
    /// Fraction of trials where the adversary guessed within the
    /// correctness radius.
    pub empirical_success: f64,
    /// Blind-guessing baseline `1/(p+1)`.
    pub guess_baseline: f64,
    /// `empirical_success - guess_baseline`.
    pub advantage: f64,
    /// Analytic collision bound `p(p+1)/(2N)` on the advantage.
    pub analytic_bound: f64,
    pub collision_rate: f64,
    pub mae_unauthorized: Option<f64>,
    pub mae_authorized: Option<f64>,
    /// `mae_unauthorized / mae_authorized`; how much worse the keyless
    /// observer reads the heart rate.
    pub protection_ratio: Option<f64>,
    /// Two-sided paired t-test p-value on per-trial absolute errors
    /// (unauthorized vs authorized).
    pub paired_p_value: Option<f64>,
    pub invalid_unauthorized: usize,
    pub invalid_authorized: usize,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

// ---- Bayes-optimal multiset adversary ----

/// Posterior probability that each distinct ciphertext value is the true
/// message, for keys drawn i.i.d. from `space` and a message with the same
/// prior. Returned as `(grid_index, probability)` pairs.
///
/// The likelihood of "value v is m" is `pmf(v)` times the probability of
/// the key multiset `c` minus one `v`, which carries a permutation count
/// `p! / prod(multiplicities!)`. The pmf product is identical for every
/// candidate (it is the product over all of `c`), so it cancels: the
/// posterior depends only on multiplicities. On collision-free ciphertexts
/// it is uniform, for any sampling distribution; that is the zero-advantage
/// property made computational.
pub fn bayesian_posterior(c: &FrequencyMultiset, space: &FrequencySpace) -> Vec<(usize, f64)> {
    let indices = c.indices();
    let mut distinct: Vec<usize> = indices.to_vec();
    distinct.dedup();
    let log_weights: Vec<f64> = distinct
        .iter()
        .map(|&v| {
            // log pmf(v) + sum of log pmf over c \ v + log perm(c \ v)
            let mut lw = 0.0;
            for &w in indices {
                lw += space.pmf(w).ln();
            }
            let mut perm = ln_gamma((indices.len() - 1) as f64 + 1.0);
            let mut i = 0;
            while i < indices.len() {
                let mut mult = 1;
                while i + mult < indices.len() && indices[i + mult] == indices[i] {
                    mult += 1;
                }
                let adjusted = if indices[i] == v { mult - 1 } else { mult };
                perm -= ln_gamma(adjusted as f64 + 1.0);
                i += mult;
            }
            lw + perm
        })
        .collect();
    let max_lw = log_weights.iter().cloned().fold(f64::MIN, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max_lw).exp()).collect();
    let total: f64 = weights.iter().sum();
    distinct
        .into_iter()
        .zip(weights)
        .map(|(v, w)| (v, w / total))
        .collect()
}

/// Bayes-optimal guess: a maximum-posterior value, ties broken uniformly.
pub fn bayesian_adversary<R: Rng + ?Sized>(
    c: &FrequencyMultiset,
    space: &FrequencySpace,
    rng: &mut R,
) -> usize {
    let posterior = bayesian_posterior(c, space);
    let best = posterior
        .iter()
        .map(|&(_, w)| w)
        .fold(f64::MIN, f64::max);
    let candidates: Vec<usize> = posterior
        .iter()
        .filter(|(_, w)| *w >= best * (1.0 - 1e-12))
        .map(|&(v, _)| v)
        .collect();
    candidates[rng.gen_range(0..candidates.len())]
}

// ---- trial machinery ----

struct TrialOutcome {
    record: TrialRecord,
    abs_err_unauth: Option<f64>,
    abs_err_auth: Option<f64>,
}

fn trial_rng(cfg: &TrialConfig, stream: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, stream, trial))
}

/// Draw `(m, k)` i.i.d., redrawing the whole tuple until every pair is at
/// least `min_sep` apart (symmetric region, so exchangeability holds).
fn draw_separated(
    cfg: &TrialConfig,
    rng: &mut ChaCha8Rng,
) -> (usize, Vec<usize>) {
    let fixed = cfg.fixed_key_indices();
    loop {
        let m = cfg.space.sample_index(rng);
        let key: Vec<usize> = match &fixed {
            Some(k) => k.clone(),
            None => (0..cfg.p).map(|_| cfg.space.sample_index(rng)).collect(),
        };
        if cfg.min_separation_bpm <= 0.0 {
            return (m, key);
        }
        let mut vals: Vec<f64> = key.iter().map(|&i| cfg.space.value_at(i)).collect();
        vals.push(cfg.space.value_at(m));
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ok = vals
            .windows(2)
            .all(|w| w[1] - w[0] >= cfg.min_separation_bpm);
        if ok {
            return (m, key);
        }
    }
}

fn abstract_trial(cfg: &TrialConfig, t: u64) -> TrialOutcome {
    let mut draw_rng = trial_rng(cfg, 0, t);
    let m_idx = cfg.space.sample_index(&mut draw_rng);
    let key_idx: Vec<usize> = match cfg.fixed_key_indices() {
        Some(k) => k,
        None => (0..cfg.p)
            .map(|_| cfg.space.sample_index(&mut draw_rng))
            .collect(),
    };
    let mut all = key_idx.clone();
    all.push(m_idx);
    let c = FrequencyMultiset::from_indices(all);
    let mut adv_rng = trial_rng(cfg, 4, t);
    let guess = bayesian_adversary(&c, &cfg.space, &mut adv_rng);
    let success = guess == m_idx;
    TrialOutcome {
        record: TrialRecord {
            trial: t,
            m_bpm: cfg.space.value_at(m_idx),
            collision: c.has_collision(),
            guess_bpm: Some(cfg.space.value_at(guess)),
            success,
            authorized_bpm: None,
            unauthorized_bpm: None,
        },
        abs_err_unauth: None,
        abs_err_auth: None,
    }
}

fn spectral_trial(cfg: &TrialConfig, t: u64) -> Result<TrialOutcome> {
    let mut draw_rng = trial_rng(cfg, 0, t);
    let (m_idx, key_idx) = draw_separated(cfg, &mut draw_rng);
    let m_bpm = cfg.space.value_at(m_idx);

    let rate = 32.0;
    let n = (cfg.duration_s * rate) as usize;
    let mut phase_rng = trial_rng(cfg, 5, t);
    let mut samples = vec![0.0; n];
    let mut add_tone = |bpm: f64, amp: f64, rng: &mut ChaCha8Rng| {
        let phi: f64 = rng.gen_range(0.0..TAU);
        for (i, s) in samples.iter_mut().enumerate() {
            *s += amp * (TAU * bpm / 60.0 * i as f64 / rate + phi).sin();
        }
    };
    add_tone(m_bpm, cfg.true_amplitude_scale, &mut phase_rng);
    for &k in &key_idx {
        add_tone(cfg.space.value_at(k), 1.0, &mut phase_rng);
    }
    let sig = DisplacementSignal::new(samples, rate, SignalLabel::Composite)?;
    let est = extract::estimate_hr_fft(&sig)?;
    let success = est
        .bpm
        .map(|g| (g - m_bpm).abs() <= CORRECT_RADIUS_BPM)
        .unwrap_or(false);
    Ok(TrialOutcome {
        record: TrialRecord {
            trial: t,
            m_bpm,
            collision: false,
            guess_bpm: est.bpm,
            success,
            authorized_bpm: None,
            unauthorized_bpm: None,
        },
        abs_err_unauth: est.bpm.map(|g| (g - m_bpm).abs()),
        abs_err_auth: None,
    })
}

fn pipeline_trial(cfg: &TrialConfig, t: u64) -> Result<TrialOutcome> {
    let mut draw_rng = trial_rng(cfg, 0, t);
    let (m_idx, key_idx) = draw_separated(cfg, &mut draw_rng);
    let m_bpm = cfg.space.value_at(m_idx);
    let key = ObfuscationKey {
        frequencies_bpm: key_idx.iter().map(|&i| cfg.space.value_at(i)).collect(),
        space: cfg.space,
        seed: seed::derive(cfg.seed, 0, t),
    };

    let rate = 2000.0;
    let n = (cfg.duration_s * rate) as usize;
    let vital = VitalSignSource {
        heart_rate_bpm: m_bpm,
        ..cfg.vital.clone()
    };
    let mut synth_rng = trial_rng(cfg, 2, t);
    let truth = synthesize_heartbeat(&vital, cfg.duration_s, rate, &mut synth_rng)?;
    let truth = DisplacementSignal::new(
        truth.samples_mm[..n].to_vec(),
        rate,
        SignalLabel::True,
    )?;

    let chest = if key.frequencies_bpm.is_empty() || cfg.decoy_amplitude_scale == 0.0 {
        truth
    } else {
        let spec = PulseTrainSpec {
            repetitions: (cfg.duration_s / 10.0).ceil() as usize,
            ..PulseTrainSpec::for_frequencies(key.frequencies_bpm.clone())
        };
        let train = generate_pulse_train(&spec)?;
        let kernel = ActuatorKernel {
            peak_displacement_mm: ActuatorKernel::default().peak_displacement_mm
                * cfg.decoy_amplitude_scale,
            ..Default::default()
        };
        let decoy = actuate(&train, &kernel)?;
        let decoy =
            DisplacementSignal::new(decoy.samples_mm[..n].to_vec(), rate, SignalLabel::Decoy)?;
        superimpose(&truth, &decoy)?
    };

    let observed = match &cfg.sensor {
        Some(name) => {
            let profile = SensorProfile::by_name(name)?;
            let mut scene = Scene::new(cfg.scene_distance_m, chest);
            scene.snr_db = cfg.snr_db;
            observe(&profile, &scene, seed::derive(cfg.seed, 3, t))?.displacement
        }
        None => chest,
    };

    let unauth = extract::estimate(&observed, ObserverMode::Unauthorized, None)?;
    let auth = extract::estimate(&observed, ObserverMode::Authorized, Some(&key))?;
    let success = unauth
        .bpm
        .map(|g| (g - m_bpm).abs() <= CORRECT_RADIUS_BPM)
        .unwrap_or(false);
    Ok(TrialOutcome {
        record: TrialRecord {
            trial: t,
            m_bpm,
            collision: false,
            guess_bpm: unauth.bpm,
            success,
            authorized_bpm: auth.bpm,
            unauthorized_bpm: unauth.bpm,
        },
        abs_err_unauth: unauth.bpm.map(|g| (g - m_bpm).abs()),
        abs_err_auth: auth.bpm.map(|g| (g - m_bpm).abs()),
    })
}

/// Two-sided paired t-test on per-trial differences. `None` when fewer than
/// two pairs exist.
pub fn paired_t_test(diffs: &[f64]) -> Option<f64> {
    let n = diffs.len();
    if n < 2 {
        return None;
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Some(if mean == 0.0 { 1.0 } else { 0.0 });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
    Some(2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Run the configured game. Trials execute in parallel; every trial derives
/// its own seeds from `config.seed` and the trial index, so reports are
/// identical across runs and across thread counts.
pub fn run_game(cfg: &TrialConfig) -> Result<PrivacyReport> {
    cfg.validate()?;
    let outcomes: Vec<TrialOutcome> = match cfg.mode {
        GameMode::Abstract => (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| Ok(abstract_trial(cfg, t)))
            .collect::<Result<_>>()?,
        GameMode::Spectral => (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| spectral_trial(cfg, t))
            .collect::<Result<_>>()?,
        GameMode::Pipeline => (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| pipeline_trial(cfg, t))
            .collect::<Result<_>>()?,
    };

    let trials = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.record.success).count();
    let collisions = outcomes.iter().filter(|o| o.record.collision).count();
    let empirical_success = successes as f64 / trials as f64;
    let guess_baseline = guess_probability(cfg.p);

    let mean_of = |xs: &[f64]| -> Option<f64> {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    let unauth_errs: Vec<f64> = outcomes.iter().filter_map(|o| o.abs_err_unauth).collect();
    let auth_errs: Vec<f64> = outcomes.iter().filter_map(|o| o.abs_err_auth).collect();
    let mae_unauthorized = mean_of(&unauth_errs);
    let mae_authorized = mean_of(&auth_errs);
    let protection_ratio = match (mae_unauthorized, mae_authorized) {
        (Some(u), Some(a)) if a > 0.0 => Some(u / a),
        _ => None,
    };
    let paired: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| match (o.abs_err_unauth, o.abs_err_auth) {
            (Some(u), Some(a)) => Some(u - a),
            _ => None,
        })
        .collect();
    let paired_p_value = paired_t_test(&paired);

    let invalid_unauthorized = match cfg.mode {
        GameMode::Abstract => 0,
        _ => trials - unauth_errs.len(),
    };
    let invalid_authorized = match cfg.mode {
        GameMode::Pipeline => trials - auth_errs.len(),
        _ => 0,
    };

    Ok(PrivacyReport {
        config: cfg.clone(),
        empirical_success,
        guess_baseline,
        advantage: empirical_success - guess_baseline,
        analytic_bound: collision_bound(cfg.p, cfg.space.grid_len()),
        collision_rate: collisions as f64 / trials as f64,
        mae_unauthorized,
        mae_authorized,
        protection_ratio,
        paired_p_value,
        invalid_unauthorized,
        invalid_authorized,
        records: outcomes.into_iter().map(|o| o.record).collect(),
    })
}
