//! Synthetic experiment protocol: ground truth, data, training of every
//! method per repetition, evaluation and summaries with 95% t-intervals.
//!
//! Seeds flow master → repetition → named stream, so all methods of a
//! repetition see identical data, and repetitions can run in any order.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bounds::{total_bound, BoundInputs};
use crate::error::{Error, Result};
use crate::gumbel_crf::{map_decode_index, CandidateSet, WeightVector};
use crate::losses::{exact_crf_loss, hamming_loss, Dataset, Sample};
use crate::proposal::ProposalConfig;
use crate::seeding::{derive_seed, stream_seed, Stream};
use crate::spaces::{NeighborTable, OutputSpace, StructureFamily, StructuredInput, DEFAULT_ENUMERATION_BUDGET};
use crate::trainer::{hinge_loss, train, AlphaPolicy, BetaPolicy, Method, TrainConfig};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "RANDCRF_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub family: StructureFamily,
    pub m_train: usize,
    pub m_test: usize,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub l1_lambda: f64,
    pub iterations: usize,
    pub step0: f64,
    pub beta_policy: BetaPolicy,
    /// Proposal neighborhood radius (unnormalized Hamming).
    pub k: usize,
    /// Candidate proposals per sample; `None` means `⌈√m_train⌉`.
    pub n_target: Option<usize>,
    pub resample_each_iter: bool,
    pub master_seed: u64,
    /// Worker threads; `None` defers to `RANDCRF_THREADS`, then rayon's default.
    pub threads: Option<usize>,
    pub enumeration_budget: usize,
    /// Confidence for the reported `ε₁ + ε₂` column.
    pub bound_delta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: StructureFamily::Subset { k: 4, universe: 15 },
            m_train: 100,
            m_test: 100,
            repetitions: 30,
            methods: Method::ALL.to_vec(),
            l1_lambda: 0.01,
            iterations: 20,
            step0: 1.0,
            beta_policy: BetaPolicy::Schedule,
            k: 2,
            n_target: None,
            resample_each_iter: true,
            master_seed: 0,
            threads: None,
            enumeration_budget: DEFAULT_ENUMERATION_BUDGET,
            bound_delta: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 || self.m_train == 0 || self.m_test == 0 || self.methods.is_empty() {
            return Err(Error::Domain("repetitions, sample counts and methods must be nonempty".into()));
        }
        self.train_config(Method::CrfAll, 0).validate()?;
        self.proposal_config()?;
        Ok(())
    }

    pub fn train_config(&self, method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            l1_lambda: self.l1_lambda,
            iterations: self.iterations,
            step0: self.step0,
            beta_policy: self.beta_policy,
            alpha_policy: AlphaPolicy::Schedule,
            resample_each_iter: self.resample_each_iter,
            seed,
        }
    }

    pub fn proposal_config(&self) -> Result<ProposalConfig> {
        let default = ProposalConfig::for_sample_count(self.m_train);
        ProposalConfig::new(0.0, self.k, self.n_target.unwrap_or(default.n_target))
    }

    fn thread_count(&self) -> Option<usize> {
        self.threads
            .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
            .filter(|&n| n > 0)
    }
}

/// One (repetition, method) outcome. `train_seconds` is the only
/// non-deterministic column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub repetition: usize,
    pub method: Method,
    pub family: StructureFamily,
    pub beta: f64,
    /// Method-native: randomized methods report the loss on their final
    /// candidate sets, SVMs report the hinge.
    pub train_loss: f64,
    /// The same loss recomputed over the full output space.
    pub train_loss_exact: f64,
    pub test_crf_loss: f64,
    pub test_hamming: f64,
    pub train_seconds: f64,
    pub set_size_mean: f64,
    pub set_size_max: usize,
    pub w_nnz: usize,
    pub w_l1: f64,
    pub bound_total: f64,
    pub status: String,
}

impl MetricsRecord {
    /// Numeric columns that [`summarize`] aggregates.
    pub const METRICS: [&'static str; 12] = [
        "beta",
        "train_loss",
        "train_loss_exact",
        "test_crf_loss",
        "test_hamming",
        "train_seconds",
        "set_size_mean",
        "set_size_max",
        "w_nnz",
        "w_l1",
        "bound_total",
        "repetition",
    ];

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "beta" => self.beta,
            "train_loss" => self.train_loss,
            "train_loss_exact" => self.train_loss_exact,
            "test_crf_loss" => self.test_crf_loss,
            "test_hamming" => self.test_hamming,
            "train_seconds" => self.train_seconds,
            "set_size_mean" => self.set_size_mean,
            "set_size_max" => self.set_size_max as f64,
            "w_nnz" => self.w_nnz as f64,
            "w_l1" => self.w_l1,
            "bound_total" => self.bound_total,
            "repetition" => self.repetition as f64,
            _ => return None,
        })
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(run_id: String, repetition: usize, method: Method, family: StructureFamily, err: &Error) -> Self {
        Self {
            run_id,
            repetition,
            method,
            family,
            beta: f64::NAN,
            train_loss: f64::NAN,
            train_loss_exact: f64::NAN,
            test_crf_loss: f64::NAN,
            test_hamming: f64::NAN,
            train_seconds: 0.0,
            set_size_mean: f64::NAN,
            set_size_max: 0,
            w_nnz: 0,
            w_l1: f64::NAN,
            bound_total: f64::NAN,
            status: format!("error: {err}"),
        }
    }
}

/// `w*` with `N(0, 100)` entries of which `⌈√d⌉` uniformly chosen survive.
pub fn generate_ground_truth(family: &StructureFamily, seed: u64) -> WeightVector {
    let d = family.feature_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 10.0).expect("valid normal");
    let dense: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
    let s = ((d as f64).sqrt().ceil() as usize).min(d);
    let mut values = vec![0.0; d];
    for j in sample_indices(&mut rng, d, s) {
        values[j] = dense[j];
    }
    WeightVector::new(values)
}

/// `m` samples with `x ~ Bernoulli(1/2)^d` and `y = f_{w*}(x)`.
pub fn generate_dataset(space: &OutputSpace, w_star: &WeightVector, m: usize, seed: u64) -> Result<Dataset> {
    let family = *space.family();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..m)
        .map(|_| {
            let x = StructuredInput::new((0..family.input_len()).map(|_| rng.random_bool(0.5)).collect());
            let y = space.output(map_decode_index(space, &x, w_star)?).clone();
            Ok(Sample { x, y })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(family, samples)
}

/// Precomputed family-level structures shared by every repetition.
pub struct FamilyContext {
    pub space: OutputSpace,
    pub neighbors: NeighborTable,
}

impl FamilyContext {
    pub fn new(family: StructureFamily, k: usize, budget: usize) -> Result<Self> {
        let space = OutputSpace::with_budget(family, budget)?;
        let neighbors = NeighborTable::build(&space, k);
        Ok(Self { space, neighbors })
    }
}

fn run_id(family: &StructureFamily, repetition: usize) -> String {
    format!("{family}/rep{repetition:03}")
}

fn run_method(
    cfg: &ExperimentConfig,
    ctx: &FamilyContext,
    proposal: &ProposalConfig,
    repetition: usize,
    rep_seed: u64,
    method: Method,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<MetricsRecord> {
    let space = &ctx.space;
    let train_cfg = cfg.train_config(method, stream_seed(rep_seed, Stream::Proposal));
    let outcome = train(space, Some(&ctx.neighbors), train_set, &train_cfg, proposal)?;
    let w = &outcome.weights;
    let beta = outcome.beta;

    let full = vec![CandidateSet::full(space); train_set.m()];
    let train_loss_exact = if method.is_crf() {
        exact_crf_loss(space, w, train_set, beta)?.value
    } else {
        hinge_loss(space, w, train_set, &full)?.value
    };
    let (set_size_mean, set_size_max) = match &outcome.final_sets {
        Some(sets) => (
            sets.iter().map(|s| s.len()).sum::<usize>() as f64 / sets.len() as f64,
            sets.iter().map(|s| s.len()).max().unwrap_or(0),
        ),
        None => (space.len() as f64, space.len()),
    };
    let bound_inputs = BoundInputs {
        d: space.family().feature_dim(),
        s: w.support_size().max(1),
        m: train_set.m(),
        n: set_size_max.max(1),
        r: space.len(),
        delta: cfg.bound_delta,
    };
    Ok(MetricsRecord {
        run_id: run_id(space.family(), repetition),
        repetition,
        method,
        family: *space.family(),
        beta,
        train_loss: outcome.train_loss,
        train_loss_exact,
        test_crf_loss: exact_crf_loss(space, w, test_set, beta)?.value,
        test_hamming: hamming_loss(space, w, test_set)?.value,
        train_seconds: outcome.train_seconds,
        set_size_mean,
        set_size_max,
        w_nnz: w.support_size(),
        w_l1: w.l1_norm(),
        bound_total: total_bound(w, &bound_inputs)?,
        status: "ok".into(),
    })
}

fn run_repetition(
    cfg: &ExperimentConfig,
    ctx: &FamilyContext,
    proposal: &ProposalConfig,
    repetition: usize,
) -> Vec<MetricsRecord> {
    let family = *ctx.space.family();
    let rep_seed = derive_seed(cfg.master_seed, repetition as u64);
    let data = (|| {
        let w_star = generate_ground_truth(&family, stream_seed(rep_seed, Stream::GroundTruth));
        let train_set = generate_dataset(&ctx.space, &w_star, cfg.m_train, stream_seed(rep_seed, Stream::TrainInputs))?;
        let test_set = generate_dataset(&ctx.space, &w_star, cfg.m_test, stream_seed(rep_seed, Stream::TestInputs))?;
        Ok::<_, Error>((train_set, test_set))
    })();
    cfg.methods
        .iter()
        .map(|&method| {
            let result = data.as_ref().map_err(|e| Error::Domain(e.to_string())).and_then(|(tr, te)| {
                run_method(cfg, ctx, proposal, repetition, rep_seed, method, tr, te)
            });
            result.unwrap_or_else(|e| MetricsRecord::failed(run_id(&family, repetition), repetition, method, family, &e))
        })
        .collect()
}

/// Runs every repetition of `cfg`; records come back sorted by
/// `(repetition, method)`. Per-repetition failures are recorded in the
/// `status` column and do not stop the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let ctx = FamilyContext::new(cfg.family, cfg.k, cfg.enumeration_budget)?;
    run_experiment_with(cfg, &ctx)
}

/// [`run_experiment`] with a prebuilt family context.
pub fn run_experiment_with(cfg: &ExperimentConfig, ctx: &FamilyContext) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if ctx.space.family() != &cfg.family || ctx.neighbors.k() != cfg.k {
        return Err(Error::Domain("family context does not match the experiment config".into()));
    }
    let proposal = cfg.proposal_config()?;
    let work = || {
        (0..cfg.repetitions)
            .into_par_iter()
            .flat_map_iter(|rep| run_repetition(cfg, ctx, &proposal, rep))
            .collect::<Vec<_>>()
    };
    let mut records = match cfg.thread_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    records.sort_by(|a, b| (a.repetition, a.method).cmp(&(b.repetition, b.method)));
    Ok(records)
}

/// Mean and 95% t-interval of one metric for one (family, method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub family: StructureFamily,
    pub method: Method,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SummaryRow {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

/// Mean and half-width of a 95% Student-t interval (`NaN` width for n < 2).
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return (mean, 0.0);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df > 0").inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

/// Per (family, method, metric) summary over successful records, in
/// family, method, then [`MetricsRecord::METRICS`] order.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, Method), (StructureFamily, Vec<&MetricsRecord>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        groups.entry((r.family.to_string(), r.method)).or_insert_with(|| (r.family, Vec::new())).1.push(r);
    }
    let mut rows = Vec::new();
    for ((_, method), (family, recs)) in groups {
        for metric in MetricsRecord::METRICS {
            let values: Vec<f64> = recs.iter().filter_map(|r| r.metric(metric)).collect();
            let (mean, half) = mean_ci95(&values);
            rows.push(SummaryRow {
                family,
                method,
                metric: metric.to_string(),
                n: values.len(),
                mean,
                ci_low: mean - half,
                ci_high: mean + half,
            });
        }
    }
    rows
}

/// Looks up a summary row.
pub fn find_summary<'a>(rows: &'a [SummaryRow], family: &StructureFamily, method: Method, metric: &str) -> Option<&'a SummaryRow> {
    rows.iter().find(|r| &r.family == family && r.method == method && r.metric == metric)
}
