//! Key-based frequency obfuscation.
//!
//! The scheme hides a true vital-sign frequency `m` among `p` decoy
//! frequencies drawn from a discrete space `S`:
//!
//! * `gen`: sample `p` grid frequencies i.i.d. (with replacement) to form the
//!   key `k`.
//! * `enc`: the ciphertext is the multiset `c = {m} U k`; physically, the
//!   decoys are superimposed as actuated motion, so a keyless observer sees
//!   `p + 1` candidate frequencies with no way to tell which is real.
//! * `dec`: an authorized receiver removes one instance of every key
//!   frequency from `c`; the single remaining element is `m`.
//!
//! Security degrades only on the rare draws where two of the `p + 1` values
//! collide; [`collision_bound`] bounds that probability and thereby the best
//! possible adversary advantage over random guessing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the sampling distribution over grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridDistribution {
    #[default]
    Uniform,
    /// Symmetric triangular density peaking at the middle of the range.
    Triangular,
}

/// Discrete frequency space: `N` grid points spaced `resolution_bpm` apart
/// starting at `low_bpm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpace {
    pub low_bpm: f64,
    pub high_bpm: f64,
    pub resolution_bpm: f64,
    #[serde(default)]
    pub distribution: GridDistribution,
}

impl FrequencySpace {
    pub fn new(low_bpm: f64, high_bpm: f64, resolution_bpm: f64) -> Result<Self> {
        let space = FrequencySpace {
            low_bpm,
            high_bpm,
            resolution_bpm,
            distribution: GridDistribution::Uniform,
        };
        space.validate()?;
        Ok(space)
    }

    /// Space whose grid has exactly `n` points; the resolution is derived.
    pub fn with_grid_len(low_bpm: f64, high_bpm: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::parameter("grid needs at least 2 points"));
        }
        let resolution = (high_bpm - low_bpm) / (n - 1) as f64;
        let space = FrequencySpace::new(low_bpm, high_bpm, resolution)?;
        debug_assert_eq!(space.grid_len(), n);
        Ok(space)
    }

    /// Default heart-rate space: 45..180 BPM on a 0.002 BPM grid
    /// (67 501 points, comfortably above 2^16).
    pub fn heart_rate_default() -> Self {
        FrequencySpace::new(45.0, 180.0, 0.002).expect("default space is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low_bpm.is_finite() && self.high_bpm.is_finite() && self.resolution_bpm.is_finite())
        {
            return Err(Error::parameter("frequency space bounds must be finite"));
        }
        if !(self.low_bpm > 0.0 && self.high_bpm > self.low_bpm && self.resolution_bpm > 0.0) {
            return Err(Error::parameter(format!(
                "need 0 < low < high and resolution > 0, got [{}, {}] at {}",
                self.low_bpm, self.high_bpm, self.resolution_bpm
            )));
        }
        if self.grid_len() < 2 {
            return Err(Error::parameter("frequency grid needs at least 2 points"));
        }
        Ok(())
    }

    /// Number of grid points `N = floor((high - low) / resolution) + 1`.
    /// A small relative guard keeps exact divisions from landing one short.
    pub fn grid_len(&self) -> usize {
        let steps = (self.high_bpm - self.low_bpm) / self.resolution_bpm;
        (steps + steps * 1e-12 + 1e-9).floor() as usize + 1
    }

    /// Frequency of grid index `i`.
    pub fn value_at(&self, index: usize) -> f64 {
        self.low_bpm + index as f64 * self.resolution_bpm
    }

    /// Grid index of `bpm`, or an error when it is off the grid.
    pub fn index_of(&self, bpm: f64) -> Result<usize> {
        let off_grid = || Error::OffGridFrequency {
            bpm,
            low: self.low_bpm,
            high: self.high_bpm,
            resolution: self.resolution_bpm,
        };
        if !bpm.is_finite() {
            return Err(off_grid());
        }
        let rel = (bpm - self.low_bpm) / self.resolution_bpm;
        let idx = rel.round();
        if idx < 0.0 || idx >= self.grid_len() as f64 {
            return Err(off_grid());
        }
        let idx = idx as usize;
        if (self.value_at(idx) - bpm).abs() > self.resolution_bpm * 1e-6 {
            return Err(off_grid());
        }
        Ok(idx)
    }

    /// CDF of the continuous envelope of the sampling distribution on [0, 1].
    fn envelope_cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self.distribution {
            GridDistribution::Uniform => x,
            GridDistribution::Triangular => {
                if x <= 0.5 {
                    2.0 * x * x
                } else {
                    1.0 - 2.0 * (1.0 - x) * (1.0 - x)
                }
            }
        }
    }

    /// Probability mass of grid index `i` under the sampling distribution.
    pub fn pmf(&self, index: usize) -> f64 {
        let n = self.grid_len() as f64;
        self.envelope_cdf((index as f64 + 1.0) / n) - self.envelope_cdf(index as f64 / n)
    }

    /// Draw one grid index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.grid_len();
        match self.distribution {
            GridDistribution::Uniform => rng.gen_range(0..n),
            GridDistribution::Triangular => {
                // Inverse CDF of the triangular envelope, then snap to grid.
                let u: f64 = rng.gen();
                let x = if u < 0.5 {
                    (u / 2.0).sqrt()
                } else {
                    1.0 - ((1.0 - u) / 2.0).sqrt()
                };
                ((x * n as f64) as usize).min(n - 1)
            }
        }
    }

    /// Draw one grid frequency in BPM.
    pub fn sample_bpm<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.value_at(self.sample_index(rng))
    }
}

/// Secret key: the `p` decoy frequencies plus everything needed to
/// regenerate them bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationKey {
    pub frequencies_bpm: Vec<f64>,
    pub space: FrequencySpace,
    pub seed: u64,
}

impl ObfuscationKey {
    /// Sample `p >= 1` decoy frequencies i.i.d. with replacement.
    ///
    /// The same `(p, space, seed)` always reproduces the same key.
    pub fn generate(p: usize, space: &FrequencySpace, seed: u64) -> Result<Self> {
        space.validate()?;
        if p == 0 {
            return Err(Error::parameter("key needs at least one decoy frequency"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frequencies_bpm = (0..p)
            .map(|_| space.value_at(space.sample_index(&mut rng)))
            .collect();
        Ok(ObfuscationKey {
            frequencies_bpm,
            space: *space,
            seed,
        })
    }

    /// Like [`ObfuscationKey::generate`] but resamples any duplicate decoy.
    /// Non-default: with-replacement sampling is what the analytic collision
    /// bound models, so this variant exists only for experiments.
    pub fn generate_distinct(p: usize, space: &FrequencySpace, seed: u64) -> Result<Self> {
        if p > space.grid_len() {
            return Err(Error::parameter("p exceeds the number of grid points"));
        }
        let mut key = ObfuscationKey::generate(p, space, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Burn the draws consumed by `generate` so extra draws continue the stream.
        for _ in 0..p {
            space.sample_index(&mut rng);
        }
        let mut indices = key.indices()?;
        loop {
            indices.sort_unstable();
            if indices.windows(2).all(|w| w[0] != w[1]) {
                break;
            }
            indices = (0..p).map(|_| space.sample_index(&mut rng)).collect();
        }
        indices.sort_unstable();
        key.frequencies_bpm = indices.iter().map(|&i| space.value_at(i)).collect();
        Ok(key)
    }

    pub fn p(&self) -> usize {
        self.frequencies_bpm.len()
    }

    /// Grid indices of the key frequencies.
    pub fn indices(&self) -> Result<Vec<usize>> {
        self.frequencies_bpm
            .iter()
            .map(|&f| self.space.index_of(f))
            .collect()
    }

    /// Checks that every stored frequency lies on the grid of the stored
    /// space (useful after deserializing a hand-edited key file).
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.frequencies_bpm.is_empty() {
            return Err(Error::parameter("key holds no frequencies"));
        }
        self.indices().map(|_| ())
    }
}

/// Multiset of grid frequencies, the ciphertext of the scheme.
///
/// Elements are stored as sorted grid indices, so multiset arithmetic is
/// exact integer work with no floating-point equality anywhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyMultiset {
    indices: Vec<usize>,
}

impl FrequencyMultiset {
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        FrequencyMultiset { indices }
    }

    /// Map BPM values onto the grid of `space`; errors on off-grid values.
    pub fn from_bpm(values: &[f64], space: &FrequencySpace) -> Result<Self> {
        let indices = values
            .iter()
            .map(|&v| space.index_of(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(FrequencyMultiset::from_indices(indices))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Sorted grid indices of all elements, duplicates included.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values_bpm(&self, space: &FrequencySpace) -> Vec<f64> {
        self.indices.iter().map(|&i| space.value_at(i)).collect()
    }

    /// True when any two elements coincide.
    pub fn has_collision(&self) -> bool {
        self.indices.windows(2).any(|w| w[0] == w[1])
    }

    /// Multiplicity of `index` in the multiset.
    pub fn multiplicity(&self, index: usize) -> usize {
        self.indices.iter().filter(|&&i| i == index).count()
    }

    fn remove_one(&mut self, index: usize) -> bool {
        match self.indices.iter().position(|&i| i == index) {
            Some(pos) => {
                self.indices.remove(pos);
                true
            }
            None => false,
        }
    }
}

/// Encrypt: form the ciphertext multiset `{m} U k`.
///
/// `m_bpm` must be a grid frequency of the key's space. The result always has
/// `p + 1` elements; when `m` equals a decoy the multiset simply carries that
/// value twice.
pub fn enc_model(key: &ObfuscationKey, m_bpm: f64) -> Result<FrequencyMultiset> {
    key.validate()?;
    let mut indices = key.indices()?;
    indices.push(key.space.index_of(m_bpm)?);
    Ok(FrequencyMultiset::from_indices(indices))
}

/// Decrypt: remove one instance of every key frequency from `c` and return
/// the single remaining element.
///
/// Errors when a key frequency is missing from `c` or when the difference
/// does not have exactly one element. On a collision (`m` equal to a decoy)
/// one instance of the duplicated value is removed and the other is returned,
/// so round trips still recover `m`.
pub fn dec(key: &ObfuscationKey, c: &FrequencyMultiset) -> Result<f64> {
    key.validate()?;
    let mut rest = c.clone();
    for (&f, &idx) in key.frequencies_bpm.iter().zip(key.indices()?.iter()) {
        if !rest.remove_one(idx) {
            return Err(Error::MissingKeyElement { bpm: f });
        }
    }
    if rest.len() != 1 {
        return Err(Error::AmbiguousCiphertext {
            remaining: rest.len(),
        });
    }
    Ok(key.space.value_at(rest.indices[0]))
}

/// Union bound on the probability that any two of the `p + 1` transmitted
/// frequencies collide: `p (p + 1) / (2 N)` for a uniform grid of `N` points.
///
/// The value is returned exactly as the formula gives it; for very small `N`
/// it may exceed 1, in which case the bound is vacuous.
pub fn collision_bound(p: usize, n: usize) -> f64 {
    (p as f64) * (p as f64 + 1.0) / (2.0 * n as f64)
}

/// Success probability of blind guessing among `p + 1` candidates.
pub fn guess_probability(p: usize) -> f64 {
    1.0 / (p as f64 + 1.0)
}
