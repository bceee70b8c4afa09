//! Learning `w`: proximal ascent on the log CRF gain (exact or over sampled
//! candidate sets) and proximal subgradient descent on the structured hinge.
//!
//! Every method starts at `w = 0`, uses step `step0 / √t` at iteration `t`,
//! and follows each gradient step with soft-thresholding at `step · λ`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gumbel_crf::{check_beta, softmax, CandidateSet, WeightVector};
use crate::losses::{Dataset, LossKind, LossReport};
use crate::proposal::{alpha_schedule, augment, ProposalConfig, Proposer};
use crate::seeding::derive_seed;
use crate::spaces::{FeatureVector, NeighborTable, OutputSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CrfAll,
    CrfRand,
    SvmAll,
    SvmRand,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CrfAll, Method::CrfRand, Method::SvmAll, Method::SvmRand];

    pub fn is_randomized(self) -> bool {
        matches!(self, Method::CrfRand | Method::SvmRand)
    }

    pub fn is_crf(self) -> bool {
        matches!(self, Method::CrfAll | Method::CrfRand)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CrfAll => "crf_all",
            Method::CrfRand => "crf_rand",
            Method::SvmAll => "svm_all",
            Method::SvmRand => "svm_rand",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "crf_all" => Ok(Method::CrfAll),
            "crf_rand" => Ok(Method::CrfRand),
            "svm_all" | "svm" => Ok(Method::SvmAll),
            "svm_rand" => Ok(Method::SvmRand),
            _ => Err(Error::Parse(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPolicy {
    Fixed(f64),
    /// `1 / ln((r − 1)(√m − 1))`.
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPolicy {
    Fixed(f64),
    /// `min(1, ‖w‖₁ / √m)`, recomputed from the current iterate.
    Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: Method,
    pub l1_lambda: f64,
    pub iterations: usize,
    pub step0: f64,
    pub beta_policy: BetaPolicy,
    pub alpha_policy: AlphaPolicy,
    /// Rebuild candidate sets from the current `w` every iteration.
    pub resample_each_iter: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::CrfRand,
            l1_lambda: 0.01,
            iterations: 20,
            step0: 1.0,
            beta_policy: BetaPolicy::Schedule,
            alpha_policy: AlphaPolicy::Schedule,
            resample_each_iter: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Domain("iterations must be >= 1".into()));
        }
        if !(self.step0 > 0.0) || !(self.l1_lambda >= 0.0) {
            return Err(Error::Domain("step0 must be > 0 and l1_lambda >= 0".into()));
        }
        if let BetaPolicy::Fixed(b) = self.beta_policy {
            check_beta(b)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    /// Cumulative wall-clock seconds since the optimizer loop started.
    pub seconds: f64,
    pub set_size_mean: f64,
    pub set_size_max: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub iterations: Vec<IterationRecord>,
}

/// CSV row of a [`TrainTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run_id: String,
    pub method: Method,
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

impl TrainTrace {
    pub fn rows(&self, run_id: &str, method: Method) -> Vec<TraceRow> {
        self.iterations
            .iter()
            .map(|r| TraceRow {
                run_id: run_id.to_string(),
                method,
                iter: r.iteration,
                objective: r.objective,
                grad_norm: r.grad_norm,
                seconds: r.seconds,
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W, run_id: &str, method: Method) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows(run_id, method) {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightVector,
    pub trace: TrainTrace,
    pub beta: f64,
    /// Seconds spent in the optimizer loop, candidate-set construction included.
    pub train_seconds: f64,
    /// Candidate sets of the last iteration (randomized methods only).
    pub final_sets: Option<Vec<CandidateSet>>,
    /// Method-native training loss of the final weights; randomized methods
    /// evaluate it on `final_sets`.
    pub train_loss: f64,
}

/// `1 / ln((r − 1)(√m − 1))`.
pub fn beta_schedule(m: usize, r: usize) -> Result<f64> {
    beta_schedule_real(m as f64, r as f64)
}

/// [`beta_schedule`] for real-valued `m` and `r`.
pub fn beta_schedule_real(m: f64, r: f64) -> Result<f64> {
    let arg = (r - 1.0) * (m.sqrt() - 1.0);
    if !(arg > 1.0) {
        return Err(Error::Domain(format!(
            "beta schedule needs (r - 1)(sqrt(m) - 1) > 1, got {arg} for m = {m}, r = {r}"
        )));
    }
    Ok(1.0 / arg.ln())
}

pub fn resolve_beta(policy: BetaPolicy, m: usize, r: usize) -> Result<f64> {
    match policy {
        BetaPolicy::Fixed(b) => check_beta(b).map(|_| b),
        BetaPolicy::Schedule => beta_schedule(m, r),
    }
}

/// `sign(v) · max(|v| − τ, 0)`.
#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

pub fn prox_l1(w: &mut WeightVector, tau: f64) {
    for v in w.values_mut() {
        *v = soft_threshold(*v, tau);
    }
}

fn check_sets(space: &OutputSpace, data: &Dataset, sets: &[CandidateSet]) -> Result<Vec<usize>> {
    let observed = data.observed_indices(space)?;
    if sets.len() != observed.len() {
        return Err(Error::DimensionMismatch { expected: observed.len(), actual: sets.len() });
    }
    for (i, t) in sets.iter().enumerate() {
        if t.is_empty() {
            return Err(Error::EmptySupport);
        }
        if !t.contains(observed[i]) {
            return Err(Error::MissingObserved { sample: i });
        }
    }
    Ok(observed)
}

/// `(U, ∇ log U)` with `U = (1/m) Σ q_i` and
/// `∇ log U = Σ q_i (φ(x_i, y_i) − E_{Q_i}[φ]) / (β Σ q_i)`.
fn gain_and_grad(
    space: &OutputSpace,
    w: &WeightVector,
    data: &Dataset,
    sets: &[CandidateSet],
    beta: f64,
) -> Result<(f64, FeatureVector)> {
    check_beta(beta)?;
    let observed = check_sets(space, data, sets)?;
    let d = space.family().feature_dim();
    let terms = data
        .samples()
        .par_iter()
        .zip(&observed)
        .zip(sets)
        .map(|((s, &y), t)| {
            let xw = s.x.masked_weights(w.values())?;
            let scores: Vec<f64> = t.iter().map(|j| space.score(j, &xw)).collect();
            let (probs, _) = softmax(&scores, beta);
            let q = probs[t.position(y).expect("checked")];
            // q · (φ(y) − Σ_j p_j φ(j))
            let mut term = vec![0.0; d];
            space.accumulate_features(y, &s.x, q, &mut term);
            for (j, p) in t.iter().zip(&probs) {
                space.accumulate_features(j, &s.x, -q * p, &mut term);
            }
            Ok((q, term))
        })
        .collect::<Result<Vec<(f64, Vec<f64>)>>>()?;

    let mut q_sum = 0.0;
    let mut grad = vec![0.0; d];
    for (q, term) in &terms {
        q_sum += q;
        for (g, v) in grad.iter_mut().zip(term) {
            *g += v;
        }
    }
    let scale = 1.0 / (beta * q_sum);
    for g in &mut grad {
        *g *= scale;
    }
    Ok((q_sum / data.m() as f64, FeatureVector(grad)))
}

/// `log U(w, S, T̄)`, the log of the mean restricted CRF probability of the
/// observed outputs.
pub fn log_gain(space: &OutputSpace, w: &WeightVector, data: &Dataset, sets: &[CandidateSet], beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let observed = check_sets(space, data, sets)?;
    let mut total = 0.0;
    for ((s, &y), t) in data.samples().iter().zip(&observed).zip(sets) {
        let xw = s.x.masked_weights(w.values())?;
        total += crate::losses::restricted_prob(space, &xw, t, y, beta);
    }
    Ok((total / data.m() as f64).ln())
}

/// Gradient of [`log_gain`] in `w`, with β held fixed.
pub fn grad_log_gain(
    space: &OutputSpace,
    w: &WeightVector,
    data: &Dataset,
    sets: &[CandidateSet],
    beta: f64,
) -> Result<FeatureVector> {
    gain_and_grad(space, w, data, sets, beta).map(|(_, g)| g)
}

/// Margin-rescaled structured hinge with normalized-Hamming distortion and
/// one subgradient `(1/m) Σ (φ(x_i, ŷ_i) − φ(x_i, y_i))`.
fn hinge_and_subgradient(
    space: &OutputSpace,
    w: &WeightVector,
    data: &Dataset,
    candidates: &[CandidateSet],
) -> Result<(LossReport, FeatureVector)> {
    let observed = check_sets(space, data, candidates)?;
    let d = space.family().feature_dim();
    let terms = data
        .samples()
        .par_iter()
        .zip(&observed)
        .zip(candidates)
        .map(|((s, &y), c)| {
            let xw = s.x.masked_weights(w.values())?;
            let truth = space.score(y, &xw);
            let mut best = y;
            let mut best_val = f64::NEG_INFINITY;
            for j in c.iter() {
                let v = space.score(j, &xw) + space.hamming(j, y);
                if v > best_val {
                    best = j;
                    best_val = v;
                }
            }
            Ok((best_val - truth, best))
        })
        .collect::<Result<Vec<(f64, usize)>>>()?;
    let mut grad = vec![0.0; d];
    let inv_m = 1.0 / data.m() as f64;
    for ((s, &y), &(_, best)) in data.samples().iter().zip(&observed).zip(&terms) {
        if best != y {
            space.accumulate_features(best, &s.x, inv_m, &mut grad);
            space.accumulate_features(y, &s.x, -inv_m, &mut grad);
        }
    }
    let report = LossReport::from_per_sample(LossKind::Hinge, terms.into_iter().map(|t| t.0).collect());
    Ok((report, FeatureVector(grad)))
}

/// `(1/m) Σ [max_{y ∈ C_i} (⟨φ(x_i, y), w⟩ + Ĥ(y, y_i)) − ⟨φ(x_i, y_i), w⟩]`.
pub fn hinge_loss(space: &OutputSpace, w: &WeightVector, data: &Dataset, candidates: &[CandidateSet]) -> Result<LossReport> {
    hinge_and_subgradient(space, w, data, candidates).map(|(r, _)| r)
}

/// Trains with any method; randomized methods need neighborhoods of radius
/// `proposal.k` (built here when `neighbors` is `None`, before timing starts).
pub fn train(
    space: &OutputSpace,
    neighbors: Option<&NeighborTable>,
    data: &Dataset,
    cfg: &TrainConfig,
    proposal: &ProposalConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let m = data.m();
    let beta = resolve_beta(cfg.beta_policy, m, space.len())?;
    let observed = data.observed_indices(space)?;

    let built;
    let proposer = if cfg.method.is_randomized() {
        let table = match neighbors {
            Some(t) if t.k() == proposal.k => t,
            _ => {
                built = NeighborTable::build(space, proposal.k);
                &built
            }
        };
        Some(Proposer::new(space, table)?)
    } else {
        None
    };
    let full_sets = if cfg.method.is_randomized() { Vec::new() } else { vec![CandidateSet::full(space); m] };

    let mut w = WeightVector::zeros(space.family().feature_dim());
    let mut trace = TrainTrace::default();
    let mut sampled: Option<Vec<CandidateSet>> = None;
    let started = Instant::now();

    for t in 1..=cfg.iterations {
        if let Some(proposer) = &proposer {
            if sampled.is_none() || cfg.resample_each_iter {
                let alpha = match cfg.alpha_policy {
                    AlphaPolicy::Fixed(a) => a,
                    AlphaPolicy::Schedule => alpha_schedule(&w, m)?,
                };
                let pcfg = proposal.with_alpha(alpha)?;
                let sets = proposer.build_candidate_sets(data, &w, &pcfg, derive_seed(cfg.seed, t as u64))?;
                sampled = Some(augment(&sets, data, space)?);
            }
        }
        let sets: &[CandidateSet] = sampled.as_deref().unwrap_or(&full_sets);

        let (objective, grad, ascent) = if cfg.method.is_crf() {
            let (gain, grad) = gain_and_grad(space, &w, data, sets, beta)?;
            (1.0 - gain, grad, true)
        } else {
            let (report, grad) = hinge_and_subgradient(space, &w, data, sets)?;
            (report.value, grad, false)
        };
        if !objective.is_finite() || !grad.values().iter().all(|g| g.is_finite()) {
            return Err(Error::Diverged { iteration: t, objective });
        }

        let eta = cfg.step0 / (t as f64).sqrt();
        let direction = if ascent { eta } else { -eta };
        for (wj, g) in w.values_mut().iter_mut().zip(grad.values()) {
            *wj += direction * g;
        }
        prox_l1(&mut w, eta * cfg.l1_lambda);

        let sizes = sets.iter().map(|s| s.len());
        trace.iterations.push(IterationRecord {
            iteration: t,
            objective,
            grad_norm: grad.max_abs(),
            seconds: started.elapsed().as_secs_f64(),
            set_size_mean: sizes.clone().sum::<usize>() as f64 / m as f64,
            set_size_max: sizes.max().unwrap_or(0),
        });
    }
    let train_seconds = started.elapsed().as_secs_f64();

    let sets: &[CandidateSet] = sampled.as_deref().unwrap_or(&full_sets);
    let train_loss = if cfg.method.is_crf() {
        let (gain, _) = gain_and_grad(space, &w, data, sets, beta)?;
        1.0 - gain
    } else {
        hinge_loss(space, &w, data, sets)?.value
    };
    debug_assert_eq!(observed.len(), m);

    Ok(TrainOutcome { weights: w, trace, beta, train_seconds, final_sets: sampled, train_loss })
}

/// CRF training: `method` must be `CrfAll` or `CrfRand`.
pub fn train_crf(
    space: &OutputSpace,
    neighbors: Option<&NeighborTable>,
    data: &Dataset,
    cfg: &TrainConfig,
    proposal: &ProposalConfig,
) -> Result<TrainOutcome> {
    if !cfg.method.is_crf() {
        return Err(Error::Domain(format!("train_crf called with {}", cfg.method)));
    }
    train(space, neighbors, data, cfg, proposal)
}

/// Max-margin training: `method` must be `SvmAll` or `SvmRand`.
pub fn train_svm(
    space: &OutputSpace,
    neighbors: Option<&NeighborTable>,
    data: &Dataset,
    cfg: &TrainConfig,
    proposal: &ProposalConfig,
) -> Result<TrainOutcome> {
    if cfg.method.is_crf() {
        return Err(Error::Domain(format!("train_svm called with {}", cfg.method)));
    }
    train(space, neighbors, data, cfg, proposal)
}
