//! One cell of the comparison matrix: generate, inject, build, rank, score.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{missing_pocs, score_ranking, truth_labels, EvalError, Matching, Scorecard};
use crate::baselines::{LinearizedBp, Method};
use crate::detector::{ConvergenceTrace, PriorParams};
use crate::graph::{build_graph, BipartiteGraph, GraphStats, LocationBucket, DEFAULT_MIN_FRAUD_CARDS};
use crate::synth::{generate_corpus, inject_pocs, GeneratorConfig, GroundTruth, InjectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub injection: InjectionConfig,
    pub min_fraud_cards: usize,
    pub prior: PriorParams,
    pub bp: LinearizedBp,
    pub methods: Vec<Method>,
    pub matching: Matching,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            injection: InjectionConfig::default(),
            min_fraud_cards: DEFAULT_MIN_FRAUD_CARDS,
            prior: PriorParams::default(),
            bp: LinearizedBp::default(),
            methods: Method::ALL.to_vec(),
            matching: Matching::Strict,
        }
    }
}

/// Injection traffic floor used by [`ExperimentConfig::benchmark`]. At the
/// default steal probability a bucket needs several dozen visitors before it
/// reliably yields the five fraud-cards that keep it a candidate.
pub const BENCHMARK_MIN_POC_CARDS: usize = 60;

impl ExperimentConfig {
    /// The standard comparison setting: default generator, 20 injected
    /// buckets at steal probability 0.1, no noise.
    pub fn benchmark() -> Self {
        let mut config = Self::default();
        config.injection.min_poc_cards = BENCHMARK_MIN_POC_CARDS;
        config
    }

    /// Same experiment with generator and injection seeded by `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generator.seed = seed;
        self.injection.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub scorecard: Scorecard,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub stats: GraphStats,
    pub truth: GroundTruth,
    /// Injected buckets that did not survive candidate filtering; they are
    /// excluded from recall.
    pub missing_pocs: Vec<LocationBucket>,
    /// Detector residuals, present when the detector was among the methods.
    pub trace: Option<ConvergenceTrace>,
    pub results: Vec<MethodResult>,
}

impl ExperimentOutcome {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

/// File stem for one `(method, p, noise, seed)` cell.
pub fn result_stem(method: Method, steal_probability: f64, noise: f64, seed: u64) -> String {
    format!("{method}_p{steal_probability}_noise{noise}_seed{seed}")
}

/// Runs every configured method on one synthetic instance.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, EvalError> {
    let corpus = generate_corpus(&config.generator)?;
    let injected = inject_pocs(&corpus, &config.injection)?;
    drop(corpus);
    let graph = build_graph(&injected.corpus, config.min_fraud_cards)?;
    score_methods(&graph, injected.truth, config)
}

fn score_methods(
    graph: &BipartiteGraph,
    truth: GroundTruth,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome, EvalError> {
    let labels = truth_labels(graph, &truth, config.matching);
    let mut trace = None;
    let mut results = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let start = Instant::now();
        let ranking = if method == Method::BreachRadar {
            let detection = crate::detector::run(graph, &config.prior)?;
            trace = Some(detection.trace.clone());
            detection.ranking()
        } else {
            method.rank(graph, &config.prior, config.bp)?
        };
        let seconds = start.elapsed().as_secs_f64();
        results.push(MethodResult {
            method,
            scorecard: score_ranking(&ranking, &labels)?,
            seconds,
        });
    }
    Ok(ExperimentOutcome {
        stats: graph.stats(),
        missing_pocs: missing_pocs(graph, &truth),
        truth,
        trace,
        results,
    })
}
