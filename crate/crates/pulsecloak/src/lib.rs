//! Physical-layer obfuscation of wirelessly sensed vital signs.
//!
//! Radar-like sensors (millimeter-wave FMCW, acoustic sonar) can recover a
//! person's heartbeat from sub-millimeter chest motion. That is useful when
//! you consent to it and a privacy problem when you don't. This crate
//! simulates both sides of a defense that works at the physical layer: a
//! wearable actuator superimposes key-selected decoy pulse trains onto the
//! chest motion, so any observer measures a mixture of frequencies. Holders
//! of the key can subtract the decoys and read the true heart rate; everyone
//! else faces a multiple-choice question whose options are statistically
//! indistinguishable.
//!
//! The crate is organized as a pipeline plus an evaluation harness:
//!
//! * [`obfuscation`]: the key scheme. Frequency grids, key generation,
//!   multiset encrypt/decrypt, and the analytic collision/guessing bounds.
//! * [`signal`]: chest-displacement models. Synthetic heartbeats, decoy
//!   pulse trains, the actuator response that turns binary pulses into
//!   motion, and superposition of the two.
//! * [`fmcw`]: sensor simulation. Chirp parameters for the two bundled
//!   sensor profiles, IF-signal synthesis, range FFT, bin selection, and
//!   phase-based displacement recovery.
//! * [`extract`]: heart-rate estimation from displacement, with and without
//!   the key (notch-filter bank vs. plain band-pass).
//! * [`eval`]: privacy games that measure what an adversary can actually do,
//!   from abstract multiset guessing to the full sensing pipeline.
//! * [`io`]: file formats for displacement traces, IF matrices, keys, and
//!   evaluation reports.
//!
//! Everything is deterministic given a seed: the same inputs produce
//! byte-identical outputs, which the test suite relies on heavily.
//!
//! # Example
//!
//! Hide a 66 BPM heartbeat among three decoys, then recover it with the key:
//!
//! ```
//! use pulsecloak::obfuscation::{enc_model, dec, FrequencySpace, ObfuscationKey};
//!
//! let space = FrequencySpace::heart_rate_default();
//! let key = ObfuscationKey::generate(3, &space, 0xC0FFEE).unwrap();
//!
//! let m = 66.0;
//! let ciphertext = enc_model(&key, m).unwrap();
//! assert_eq!(ciphertext.len(), 4); // m plus three decoys
//! assert_eq!(dec(&key, &ciphertext).unwrap(), m);
//! ```

#[cfg(doctest)]
mod book;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod extract;
pub mod fmcw;
pub mod io;
pub mod obfuscation;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
pub use eval::{
    paired_t_test, run_game, GameMode, PrivacyReport, TrialConfig, TrialRecord,
    CORRECT_RADIUS_BPM,
};
pub use extract::{
    estimate, EstimatorMethod, HeartBandFilter, HeartRateEstimate, NotchBank, ObserverMode,
};
pub use fmcw::{observe, Observation, Scene, SensorProfile};
pub use obfuscation::{
    collision_bound, dec, enc_model, guess_probability, FrequencyMultiset, FrequencySpace,
    GridDistribution, ObfuscationKey,
};
pub use signal::{
    actuate, generate_pulse_train, superimpose, synthesize_heartbeat, ActuatorKernel, Breathing,
    DisplacementSignal, PulseTrain, PulseTrainSpec, SignalLabel, VitalSignSource,
};
