//! Gumbel perturbations, MAP and perturbed decoding, and CRF distributions
//! over full or restricted supports.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{OutputSpace, StructuredInput, StructuredOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    beta: f64,
    pub seed: u64,
}

impl PerturbationConfig {
    pub fn new(beta: f64, seed: u64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self { beta, seed })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive and finite, got {beta}")));
    }
    Ok(())
}

/// Inverse CDF of the Gumbel(0, β) distribution.
#[inline]
pub fn gumbel_from_uniform(u: f64, beta: f64) -> f64 {
    -beta * (-u.ln()).ln()
}

/// Draws `n` iid Gumbel(0, β) values from `rng`.
pub fn sample_gumbel_with<R: Rng + ?Sized>(rng: &mut R, beta: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| gumbel_from_uniform(rng.sample(Open01), beta)).collect()
}

/// `n` iid draws, reproducible from `cfg.seed` within one build of the RNG.
pub fn sample_gumbel(cfg: &PerturbationConfig, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_gumbel_with(&mut rng, cfg.beta, n)
}

/// A real weight vector with sparsity bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector {
    values: Vec<f64>,
}

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(d: usize) -> Self {
        Self { values: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    /// Number of nonzero coordinates `s`.
    pub fn support_size(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    /// Smallest nonzero magnitude, `None` for the zero vector.
    pub fn w_min(&self) -> Option<f64> {
        self.values
            .iter()
            .filter(|&&v| v != 0.0)
            .map(|v| v.abs())
            .min_by(|a, b| a.total_cmp(b))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * factor).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FullSpace,
    Sampled,
    SampledAugmented,
}

/// An ordered, duplicate-free set of structures, held as indices into an
/// [`OutputSpace`]. Indices are kept ascending, which is canonical-key order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    members: Vec<u32>,
    provenance: Provenance,
}

impl CandidateSet {
    pub fn full(space: &OutputSpace) -> Self {
        Self { members: (0..space.len() as u32).collect(), provenance: Provenance::FullSpace }
    }

    /// Sorts and deduplicates `members`.
    pub fn sampled(mut members: Vec<u32>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members, provenance: Provenance::Sampled }
    }

    /// Builds a set from explicit members, rejecting duplicates.
    pub fn from_members(mut members: Vec<u32>, provenance: Provenance) -> Result<Self> {
        members.sort_unstable();
        if let Some(w) = members.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateCandidate(w[0] as usize));
        }
        Ok(Self { members, provenance })
    }

    /// Builds a set from structures, rejecting duplicates and structures
    /// outside the space.
    pub fn from_outputs(space: &OutputSpace, outputs: &[StructuredOutput], provenance: Provenance) -> Result<Self> {
        let members = outputs
            .iter()
            .map(|y| space.require_index(y).map(|i| i as u32))
            .collect::<Result<Vec<_>>>()?;
        Self::from_members(members, provenance)
    }

    /// `T ∪ {y}`, marked as augmented.
    pub fn augmented_with(&self, y: usize) -> Self {
        let mut members = self.members.clone();
        if let Err(pos) = members.binary_search(&(y as u32)) {
            members.insert(pos, y as u32);
        }
        Self { members, provenance: Provenance::SampledAugmented }
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&(i as u32)).is_ok()
    }

    pub fn position(&self, i: usize) -> Option<usize> {
        self.members.binary_search(&(i as u32)).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().map(|&i| i as usize)
    }

    pub fn outputs<'a>(&'a self, space: &'a OutputSpace) -> impl Iterator<Item = &'a StructuredOutput> + 'a {
        self.iter().map(move |i| space.output(i))
    }
}

/// Normalized pmf over a candidate set at temperature β.
#[derive(Debug, Clone)]
pub struct CrfDistribution {
    pub support: CandidateSet,
    pub probs: Vec<f64>,
    pub log_partition: f64,
    pub beta: f64,
}

impl CrfDistribution {
    /// Probability of space output `i` (zero outside the support).
    pub fn prob_of(&self, i: usize) -> f64 {
        self.support.position(i).map_or(0.0, |p| self.probs[p])
    }
}

/// `log Σ exp(v)` with max subtraction.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of `scores / beta`; returns `(probs, log_partition)` where the
/// partition is `Σ exp(score / beta)`.
pub fn softmax(scores: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let scaled: Vec<f64> = scores.iter().map(|s| s / beta).collect();
    let log_z = log_sum_exp(&scaled);
    let probs = scaled.iter().map(|s| (s - log_z).exp()).collect();
    (probs, log_z)
}

/// Index of the maximum, ties to the lowest position.
#[inline]
pub(crate) fn argmax_first(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

fn check_dims(space: &OutputSpace, x: &StructuredInput, w: &WeightVector) -> Result<Vec<f64>> {
    x.check_len(space.family())?;
    x.masked_weights(w.values())
}

/// `argmax_y ⟨φ(x, y), w⟩` over the whole space, as a space index.
pub fn map_decode_index(space: &OutputSpace, x: &StructuredInput, w: &WeightVector) -> Result<usize> {
    let xw = check_dims(space, x, w)?;
    argmax_first((0..space.len()).map(|i| space.score(i, &xw))).ok_or(Error::EmptySupport)
}

/// MAP decoder; ties go to the smallest canonical key.
pub fn map_decode(space: &OutputSpace, x: &StructuredInput, w: &WeightVector) -> Result<StructuredOutput> {
    map_decode_index(space, x, w).map(|i| space.output(i).clone())
}

/// `argmax_{y ∈ support} ⟨φ(x, y), w⟩ + γ_y`, with `gamma` aligned to the
/// support's order. Returns a space index.
pub fn perturbed_decode(
    space: &OutputSpace,
    x: &StructuredInput,
    w: &WeightVector,
    support: &CandidateSet,
    gamma: &[f64],
) -> Result<usize> {
    if gamma.len() != support.len() {
        return Err(Error::DimensionMismatch { expected: support.len(), actual: gamma.len() });
    }
    let xw = check_dims(space, x, w)?;
    let pos = argmax_first(support.iter().zip(gamma).map(|(i, g)| space.score(i, &xw) + g))
        .ok_or(Error::EmptySupport)?;
    Ok(support.members()[pos] as usize)
}

/// CRF pmf `exp(⟨φ, w⟩ / β) / Z` restricted to `support`.
pub fn crf_pmf(
    space: &OutputSpace,
    x: &StructuredInput,
    w: &WeightVector,
    support: &CandidateSet,
    beta: f64,
) -> Result<CrfDistribution> {
    check_beta(beta)?;
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let xw = check_dims(space, x, w)?;
    let scores: Vec<f64> = support.iter().map(|i| space.score(i, &xw)).collect();
    let (probs, log_partition) = softmax(&scores, beta);
    Ok(CrfDistribution { support: support.clone(), probs, log_partition, beta })
}
