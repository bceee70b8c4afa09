//! Exact and randomized CRF losses, the closed-form gap between them,
//! Monte-Carlo zero-one estimates, and Hamming loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gumbel_crf::{argmax_first, check_beta, log_sum_exp, sample_gumbel_with, CandidateSet, WeightVector};
use crate::spaces::{OutputSpace, StructureFamily, StructuredInput, StructuredOutput};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub x: StructuredInput,
    pub y: StructuredOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    family: StructureFamily,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(family: StructureFamily, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("dataset needs at least one sample".into()));
        }
        for s in &samples {
            s.x.check_len(&family)?;
            if !family.is_valid(s.y.components()) {
                return Err(Error::InvalidStructure(s.y.to_string()));
            }
        }
        Ok(Self { family, samples })
    }

    pub fn family(&self) -> &StructureFamily {
        &self.family
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn m(&self) -> usize {
        self.samples.len()
    }

    /// Space index of every `y_i`.
    pub fn observed_indices(&self, space: &OutputSpace) -> Result<Vec<usize>> {
        if space.family() != &self.family {
            return Err(Error::InvalidFamily(format!(
                "dataset is {} but the space is {}",
                self.family,
                space.family()
            )));
        }
        self.samples.iter().map(|s| space.require_index(&s.y)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ExactCrf,
    RandomizedAugmented,
    MonteCarloZeroOne,
    Hamming,
    Hinge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub kind: LossKind,
    pub value: f64,
    pub per_sample: Vec<f64>,
    pub stderr: Option<f64>,
}

impl LossReport {
    pub fn from_per_sample(kind: LossKind, per_sample: Vec<f64>) -> Self {
        // fixed left-to-right order for reproducible sums
        let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
        Self { kind, value, per_sample, stderr: None }
    }

    pub fn csv_row(&self, run_id: &str, method: &str) -> LossRow {
        LossRow {
            run_id: run_id.to_string(),
            method: method.to_string(),
            kind: self.kind,
            value: self.value,
            stderr: self.stderr,
        }
    }
}

/// CSV row for a [`LossReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub run_id: String,
    pub method: String,
    pub kind: LossKind,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// `Pr[f_{w,γ}(x) = y]` restricted to `support`, for `y` at space index `target`.
pub(crate) fn restricted_prob(space: &OutputSpace, xw: &[f64], support: &CandidateSet, target: usize, beta: f64) -> f64 {
    let scaled: Vec<f64> = support.iter().map(|j| space.score(j, xw) / beta).collect();
    let log_z = log_sum_exp(&scaled);
    (space.score(target, xw) / beta - log_z).exp()
}

/// Same, over the whole space, without materializing a candidate set.
pub(crate) fn full_prob(space: &OutputSpace, xw: &[f64], target: usize, beta: f64) -> f64 {
    let scaled: Vec<f64> = (0..space.len()).map(|j| space.score(j, xw) / beta).collect();
    let log_z = log_sum_exp(&scaled);
    (scaled[target] - log_z).exp()
}

fn check_sets(observed: &[usize], sets: &[CandidateSet]) -> Result<()> {
    if sets.len() != observed.len() {
        return Err(Error::DimensionMismatch { expected: observed.len(), actual: sets.len() });
    }
    for (i, (&y, t)) in observed.iter().zip(sets).enumerate() {
        if !t.contains(y) {
            return Err(Error::MissingObserved { sample: i });
        }
    }
    Ok(())
}

fn masked(space: &OutputSpace, x: &StructuredInput, w: &WeightVector) -> Result<Vec<f64>> {
    x.check_len(space.family())?;
    x.masked_weights(w.values())
}

/// CRF loss `(1/m) Σ (1 − q(y_i; x_i, w))` over the full space.
pub fn exact_crf_loss(space: &OutputSpace, w: &WeightVector, data: &Dataset, beta: f64) -> Result<LossReport> {
    check_beta(beta)?;
    let observed = data.observed_indices(space)?;
    let per_sample = data
        .samples()
        .par_iter()
        .zip(&observed)
        .map(|(s, &y)| Ok(1.0 - full_prob(space, &masked(space, &s.x, w)?, y, beta)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(LossReport::from_per_sample(LossKind::ExactCrf, per_sample))
}

/// Augmented randomized loss `(1/m) Σ (1 − q(y_i; x_i, w, T̄_i))`.
pub fn randomized_loss(
    space: &OutputSpace,
    w: &WeightVector,
    data: &Dataset,
    tbar: &[CandidateSet],
    beta: f64,
) -> Result<LossReport> {
    check_beta(beta)?;
    let observed = data.observed_indices(space)?;
    check_sets(&observed, tbar)?;
    let per_sample = data
        .samples()
        .iter()
        .zip(&observed)
        .zip(tbar)
        .map(|((s, &y), t)| Ok(1.0 - restricted_prob(space, &masked(space, &s.x, w)?, t, y, beta)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(LossReport::from_per_sample(LossKind::RandomizedAugmented, per_sample))
}

/// Closed form of `L(w, S, T̄) − L(w, S)`:
/// `−(1/m) Σ q(y_i; T̄_i) · Pr_full[f(x_i) ∉ T̄_i]`.
pub fn loss_gap(space: &OutputSpace, w: &WeightVector, data: &Dataset, tbar: &[CandidateSet], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let observed = data.observed_indices(space)?;
    check_sets(&observed, tbar)?;
    let mut total = 0.0;
    for ((s, &y), t) in data.samples().iter().zip(&observed).zip(tbar) {
        let xw = masked(space, &s.x, w)?;
        let q_restricted = restricted_prob(space, &xw, t, y, beta);
        let scaled: Vec<f64> = (0..space.len()).map(|j| space.score(j, &xw) / beta).collect();
        let log_z = log_sum_exp(&scaled);
        let outside: f64 = (0..space.len())
            .filter(|&j| !t.contains(j))
            .map(|j| (scaled[j] - log_z).exp())
            .sum();
        total += q_restricted * outside;
    }
    Ok(-total / data.m() as f64)
}

/// Monte-Carlo estimate of the zero-one perturbed loss with fresh Gumbel
/// noise per draw. Sample `i` uses the ChaCha stream `i` of `seed`.
pub fn monte_carlo_loss(
    space: &OutputSpace,
    w: &WeightVector,
    data: &Dataset,
    beta: f64,
    draws: usize,
    seed: u64,
) -> Result<LossReport> {
    check_beta(beta)?;
    if draws == 0 {
        return Err(Error::Domain("draws must be >= 1".into()));
    }
    let observed = data.observed_indices(space)?;
    let results = data
        .samples()
        .par_iter()
        .zip(&observed)
        .enumerate()
        .map(|(i, (s, &y))| {
            let xw = masked(space, &s.x, w)?;
            let scores = space.scores(&xw);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut misses = 0usize;
            let mut gamma = Vec::with_capacity(scores.len());
            for _ in 0..draws {
                gamma.clear();
                gamma.extend(sample_gumbel_with(&mut rng, beta, scores.len()));
                let pick = argmax_first(scores.iter().zip(&gamma).map(|(a, g)| a + g)).expect("nonempty space");
                if pick != y {
                    misses += 1;
                }
            }
            let p = misses as f64 / draws as f64;
            Ok((p, p * (1.0 - p) / draws as f64))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let per_sample: Vec<f64> = results.iter().map(|r| r.0).collect();
    let var_sum: f64 = results.iter().map(|r| r.1).sum();
    let mut report = LossReport::from_per_sample(LossKind::MonteCarloZeroOne, per_sample);
    report.stderr = Some(var_sum.sqrt() / data.m() as f64);
    Ok(report)
}

/// Mean normalized Hamming distance between the MAP decode and the truth.
pub fn hamming_loss(space: &OutputSpace, w: &WeightVector, data: &Dataset) -> Result<LossReport> {
    let observed = data.observed_indices(space)?;
    let per_sample = data
        .samples()
        .par_iter()
        .zip(&observed)
        .map(|(s, &y)| {
            let xw = masked(space, &s.x, w)?;
            let pred = argmax_first((0..space.len()).map(|j| space.score(j, &xw))).ok_or(Error::EmptySupport)?;
            Ok(space.hamming(pred, y))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(LossReport::from_per_sample(LossKind::Hamming, per_sample))
}
