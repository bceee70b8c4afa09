//! Weight-dependent proposal distribution and candidate-set construction.
//!
//! A proposal starts either at a uniformly random structure (probability
//! `alpha`) or at the observed `y_i`, then makes one greedy pass over the
//! `k`-neighborhood of that start, accepting any neighbor whose score is at
//! least the running candidate's. The neighborhood is the one of the start
//! point, scanned once in canonical order. Only score comparisons are used,
//! so two weight vectors inducing the same ordering over `Y(x)` propose the
//! same structure from the same random stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gumbel_crf::{CandidateSet, WeightVector};
use crate::losses::Dataset;
use crate::spaces::{NeighborTable, OutputSpace, StructuredInput, StructuredOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    pub alpha: f64,
    pub k: usize,
    pub n_target: usize,
}

impl ProposalConfig {
    pub fn new(alpha: f64, k: usize, n_target: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha must be in [0, 1], got {alpha}")));
        }
        if k == 0 || n_target == 0 {
            return Err(Error::Domain("k and n_target must be >= 1".into()));
        }
        Ok(Self { alpha, k, n_target })
    }

    /// `k = 2` (one component swap) and `n_target = ⌈√m⌉`.
    pub fn for_sample_count(m: usize) -> Self {
        Self { alpha: 0.0, k: 2, n_target: (m as f64).sqrt().ceil().max(1.0) as usize }
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.k, self.n_target)
    }
}

/// `min(1, ‖w‖₁ / √m)`.
pub fn alpha_schedule(w: &WeightVector, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("m must be >= 1".into()));
    }
    Ok((w.l1_norm() / (m as f64).sqrt()).min(1.0))
}

/// Runs the proposal over a space with precomputed neighborhoods.
#[derive(Debug, Clone, Copy)]
pub struct Proposer<'a> {
    space: &'a OutputSpace,
    neighbors: &'a NeighborTable,
}

impl<'a> Proposer<'a> {
    pub fn new(space: &'a OutputSpace, neighbors: &'a NeighborTable) -> Result<Self> {
        if neighbors.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), actual: neighbors.len() });
        }
        Ok(Self { space, neighbors })
    }

    pub fn space(&self) -> &'a OutputSpace {
        self.space
    }

    fn check_k(&self, cfg: &ProposalConfig) -> Result<()> {
        if cfg.k != self.neighbors.k() {
            return Err(Error::Domain(format!(
                "proposal radius k = {} but neighborhoods were built for k = {}",
                cfg.k,
                self.neighbors.k()
            )));
        }
        Ok(())
    }

    /// Draws one structure for `(x, y)`.
    pub fn propose<R: Rng + ?Sized>(
        &self,
        x: &StructuredInput,
        y: &StructuredOutput,
        w: &WeightVector,
        cfg: &ProposalConfig,
        rng: &mut R,
    ) -> Result<StructuredOutput> {
        self.check_k(cfg)?;
        x.check_len(self.space.family())?;
        let xw = x.masked_weights(w.values())?;
        let y = self.space.require_index(y)?;
        let start = self.start(y, cfg.alpha, rng);
        Ok(self.space.output(self.greedy(start, &xw)).clone())
    }

    #[inline]
    fn start<R: Rng + ?Sized>(&self, y: usize, alpha: f64, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        if u < alpha {
            rng.random_range(0..self.space.len())
        } else {
            y
        }
    }

    fn greedy(&self, start: usize, xw: &[f64]) -> usize {
        let mut best = start;
        let mut best_score = self.space.score(start, xw);
        for &n in self.neighbors.neighbors(start) {
            let s = self.space.score(n as usize, xw);
            if s >= best_score {
                best = n as usize;
                best_score = s;
            }
        }
        best
    }

    /// Sampled set `T_i` from `n_target` proposals, using `rng`.
    fn sample_set<R: Rng + ?Sized>(&self, xw: &[f64], y: usize, cfg: &ProposalConfig, rng: &mut R) -> CandidateSet {
        let mut from_observed = None;
        let mut members = Vec::with_capacity(cfg.n_target);
        for _ in 0..cfg.n_target {
            let start = self.start(y, cfg.alpha, rng);
            let pick = if start == y {
                // deterministic given w: compute once per set
                *from_observed.get_or_insert_with(|| self.greedy(y, xw))
            } else {
                self.greedy(start, xw)
            };
            members.push(pick as u32);
        }
        CandidateSet::sampled(members)
    }

    /// One sampled set per sample; sample `i` draws from ChaCha stream `i`
    /// of `seed`, so the result is independent of thread scheduling.
    pub fn build_candidate_sets(
        &self,
        data: &Dataset,
        w: &WeightVector,
        cfg: &ProposalConfig,
        seed: u64,
    ) -> Result<Vec<CandidateSet>> {
        self.check_k(cfg)?;
        let observed = data.observed_indices(self.space)?;
        data.samples()
            .par_iter()
            .zip(&observed)
            .enumerate()
            .map(|(i, (s, &y))| {
                let xw = s.x.masked_weights(w.values())?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                Ok(self.sample_set(&xw, y, cfg, &mut rng))
            })
            .collect()
    }
}

/// `T̄_i = T_i ∪ {y_i}`.
pub fn augment(sets: &[CandidateSet], data: &Dataset, space: &OutputSpace) -> Result<Vec<CandidateSet>> {
    if sets.len() != data.m() {
        return Err(Error::DimensionMismatch { expected: data.m(), actual: sets.len() });
    }
    let observed = data.observed_indices(space)?;
    Ok(sets.iter().zip(observed).map(|(t, y)| t.augmented_with(y)).collect())
}

/// Whether `(x, y, T)` meets the proposal assumption's event for constant
/// `c`: `T = {y}` when `y` strictly beats every other structure, otherwise
/// the mean score over `T` is at least `score(y) + c‖w‖₁`.
pub fn assumption_holds(
    space: &OutputSpace,
    x: &StructuredInput,
    y: usize,
    set: &CandidateSet,
    w: &WeightVector,
    c: f64,
) -> Result<bool> {
    let xw = x.masked_weights(w.values())?;
    let sy = space.score(y, &xw);
    let strict_max = (0..space.len()).all(|j| j == y || space.score(j, &xw) < sy);
    if strict_max {
        return Ok(set.len() == 1 && set.contains(y));
    }
    if set.is_empty() {
        return Ok(false);
    }
    let mean = set.iter().map(|j| space.score(j, &xw)).sum::<f64>() / set.len() as f64;
    Ok(mean >= sy + c * w.l1_norm())
}

/// Fraction of samples whose sampled set meets [`assumption_holds`].
pub fn assumption_satisfaction_rate(
    space: &OutputSpace,
    data: &Dataset,
    sets: &[CandidateSet],
    w: &WeightVector,
    c: f64,
) -> Result<f64> {
    let observed = data.observed_indices(space)?;
    let mut hits = 0usize;
    for ((s, &y), t) in data.samples().iter().zip(&observed).zip(sets) {
        if assumption_holds(space, &s.x, y, t, w, c)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.m() as f64)
}
