//! Scenario files: one TOML document describing the sensor, the simulated
//! person, the decoy actuator, and the evaluation plan.
//!
//! Every field has a default, so an empty file is a valid scenario and a
//! partial file only overrides what it mentions. Unknown keys are rejected
//! to catch typos.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pulsecloak::eval::{GameMode, TrialConfig};
use pulsecloak::fmcw::SensorProfile;
use pulsecloak::obfuscation::FrequencySpace;
use pulsecloak::signal::{ActuatorKernel, PulseTrainSpec, VitalSignSource};

fn default_space() -> FrequencySpace {
    FrequencySpace::heart_rate_default()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Root of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Master seed; every artifact derives from it.
    pub seed: u64,
    /// Where artifacts land unless `--out` overrides it.
    pub out_dir: PathBuf,
    pub sensor: SensorConfig,
    /// The person being sensed.
    pub vital: VitalSignSource,
    /// Decoy drive waveform. An empty frequency list means the decoys come
    /// from a key file (or are absent).
    pub pulse_train: PulseTrainSpec,
    pub actuator: ActuatorKernel,
    pub scene: SceneConfig,
    /// Frequency grid shared by key generation and evaluation.
    pub space: FrequencySpace,
    pub trial: TrialPlan,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            out_dir: default_out_dir(),
            sensor: SensorConfig::default(),
            vital: VitalSignSource::default(),
            pulse_train: PulseTrainSpec::default(),
            actuator: ActuatorKernel::default(),
            scene: SceneConfig::default(),
            space: default_space(),
            trial: TrialPlan::default(),
        }
    }
}

/// Either a named preset or a full inline profile, never both.
///
/// Field-level defaults, not struct-level: a `[sensor]` section that sets
/// only `profile` must not inherit the default preset alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// `mmwave` or `acoustic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SensorProfile>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            preset: Some("mmwave".into()),
            profile: None,
        }
    }
}

impl SensorConfig {
    pub fn resolve(&self) -> Result<SensorProfile> {
        match (&self.preset, &self.profile) {
            (Some(name), None) => Ok(SensorProfile::by_name(name)?),
            (None, Some(profile)) => {
                profile.validate()?;
                Ok(profile.clone())
            }
            (Some(_), Some(_)) => bail!("sensor: set either `preset` or `profile`, not both"),
            (None, None) => bail!("sensor: set `preset` or an inline `profile`"),
        }
    }
}

/// Capture geometry and link quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Rest distance of the chest, meters.
    pub base_distance_m: f64,
    /// Per-sample IF SNR in dB. Ignored when `noiseless` is set.
    pub snr_db: f64,
    /// Disables receiver noise entirely (TOML has no null, so this is the
    /// explicit off switch).
    pub noiseless: bool,
    /// Echo amplitude at the ADC, relative units.
    pub amplitude_scale: f64,
    /// Capture length in seconds.
    pub duration_s: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            base_distance_m: 0.30,
            snr_db: 20.0,
            noiseless: false,
            amplitude_scale: 1.0,
            duration_s: 30.0,
        }
    }
}

impl SceneConfig {
    pub fn snr(&self) -> Option<f64> {
        if self.noiseless {
            None
        } else {
            Some(self.snr_db)
        }
    }
}

/// Evaluation plan for `eval` (and the per-point plan for `bench`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialPlan {
    pub mode: GameMode,
    /// Decoy count per key.
    pub p: usize,
    pub trials: usize,
    /// Capture length per trial (spectral and pipeline games), seconds.
    pub duration_s: f64,
    /// Minimum pairwise spacing of the true and decoy frequencies in the
    /// synthesis games.
    pub min_separation_bpm: f64,
    /// Amplitude of the true tone relative to the decoys (spectral game).
    pub true_amplitude_scale: f64,
    /// Actuator peak displacement multiplier (pipeline game). The default
    /// drives the actuator at three times the chest pulse, strong enough
    /// that a keyless spectrum is owned by the decoys.
    pub decoy_amplitude_scale: f64,
}

impl Default for TrialPlan {
    fn default() -> Self {
        TrialPlan {
            mode: GameMode::Abstract,
            p: 3,
            trials: 10_000,
            duration_s: 30.0,
            min_separation_bpm: 8.0,
            true_amplitude_scale: 1.0,
            decoy_amplitude_scale: 3.0,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading scenario file {}", path.display()))?;
        let config: ScenarioConfig = toml::from_str(&text)
            .with_context(|| format!("parsing scenario file {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.resolve()?;
        self.space.validate()?;
        self.vital.validate()?;
        if !(self.scene.duration_s.is_finite() && self.scene.duration_s > 0.0) {
            bail!("scene.duration_s must be positive");
        }
        if !(self.scene.amplitude_scale.is_finite() && self.scene.amplitude_scale > 0.0) {
            bail!("scene.amplitude_scale must be positive");
        }
        if !(self.scene.base_distance_m.is_finite() && self.scene.base_distance_m > 0.0) {
            bail!("scene.base_distance_m must be positive");
        }
        self.trial_config()?.validate()?;
        Ok(())
    }

    /// Assemble the library-level game configuration from the scenario.
    pub fn trial_config(&self) -> Result<TrialConfig> {
        let sensor = match self.trial.mode {
            GameMode::Pipeline => {
                let profile = self.sensor.resolve()?;
                if self.sensor.preset.is_none() {
                    bail!("trial.mode = \"pipeline\" needs a sensor preset, not an inline profile");
                }
                Some(profile.name)
            }
            _ => None,
        };
        Ok(TrialConfig {
            mode: self.trial.mode,
            p: self.trial.p,
            space: self.space,
            trials: self.trial.trials,
            seed: self.seed,
            duration_s: self.trial.duration_s,
            min_separation_bpm: self.trial.min_separation_bpm,
            true_amplitude_scale: self.trial.true_amplitude_scale,
            decoy_amplitude_scale: self.trial.decoy_amplitude_scale,
            snr_db: self.scene.snr(),
            sensor,
            scene_distance_m: self.scene.base_distance_m,
            vital: self.vital.clone(),
            fixed_key_bpm: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pulsecloak::obfuscation::GridDistribution;

    #[test]
    fn empty_file_is_the_documented_default() {
        let config: ScenarioConfig = toml::from_str("").unwrap();
        assert_eq!(config, ScenarioConfig::default());
        config.validate().unwrap();
        assert_eq!(config.sensor.preset.as_deref(), Some("mmwave"));
        assert_eq!(config.scene.snr(), Some(20.0));
        assert_eq!(config.trial.mode, GameMode::Abstract);
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"
            seed = 99
            out_dir = "artifacts"

            [sensor]
            preset = "acoustic"

            [vital]
            heart_rate_bpm = 72.0
            breathing = { rate_bpm = 12.0, amplitude_mm = 3.0 }

            [pulse_train]
            decoy_frequencies_bpm = [53.0, 79.0, 101.0]

            [scene]
            snr_db = 10.0
            noiseless = true

            [space]
            low_bpm = 45.0
            high_bpm = 180.0
            resolution_bpm = 0.5
            distribution = "triangular"

            [trial]
            mode = "spectral"
            trials = 250
        "#;
        let parsed: ScenarioConfig = toml::from_str(text).unwrap();
        let serialized = parsed.to_toml_string().unwrap();
        let reparsed: ScenarioConfig = toml::from_str(&serialized).unwrap();
        assert_eq!(parsed, reparsed);
        assert_eq!(parsed.space.distribution, GridDistribution::Triangular);
        assert_eq!(parsed.scene.snr(), None, "noiseless wins over snr_db");
    }

    #[test]
    fn inline_profile_round_trips() {
        let mut config = ScenarioConfig::default();
        config.sensor = SensorConfig {
            preset: None,
            profile: Some(pulsecloak::fmcw::SensorProfile::acoustic()),
        };
        let serialized = config.to_toml_string().unwrap();
        let reparsed: ScenarioConfig = toml::from_str(&serialized).unwrap();
        assert_eq!(config, reparsed);
        assert_eq!(reparsed.sensor.resolve().unwrap().name, "acoustic");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ScenarioConfig>("snr = 3").is_err());
        assert!(toml::from_str::<ScenarioConfig>("[scene]\nsnr = 3").is_err());
        assert!(toml::from_str::<ScenarioConfig>("[vital]\nheart_bpm = 66").is_err());
    }

    #[test]
    fn sensor_config_needs_exactly_one_source() {
        let both = SensorConfig {
            preset: Some("mmwave".into()),
            profile: Some(pulsecloak::fmcw::SensorProfile::mmwave()),
        };
        assert!(both.resolve().is_err());
        let neither = SensorConfig {
            preset: None,
            profile: None,
        };
        assert!(neither.resolve().is_err());
        assert!(SensorConfig::default().resolve().is_ok());
    }

    #[test]
    fn validation_rejects_bad_scenes_and_plans() {
        let mut config = ScenarioConfig::default();
        config.scene.duration_s = 0.0;
        assert!(config.validate().is_err());

        let mut config = ScenarioConfig::default();
        config.trial.trials = 0;
        assert!(config.validate().is_err(), "empty trial plan is rejected");

        let mut config = ScenarioConfig::default();
        config.trial.mode = GameMode::Pipeline;
        config.sensor = SensorConfig {
            preset: None,
            profile: Some(pulsecloak::fmcw::SensorProfile::mmwave()),
        };
        assert!(config.validate().is_err(), "pipeline eval wants a preset");
    }

    #[test]
    fn trial_config_inherits_scene_and_seed() {
        let mut config = ScenarioConfig::default();
        config.seed = 41;
        config.scene.snr_db = 14.0;
        config.trial.mode = GameMode::Pipeline;
        let tc = config.trial_config().unwrap();
        assert_eq!(tc.seed, 41);
        assert_eq!(tc.snr_db, Some(14.0));
        assert_eq!(tc.sensor.as_deref(), Some("mmwave"));
        assert_eq!(tc.scene_distance_m, 0.30);
    }
}
