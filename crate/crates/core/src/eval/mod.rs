//! Scoring rankings against ground truth, convergence diagnostics and the
//! card-reissue savings simulation.

mod experiment;
mod savings;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{BaselineError, RankedLocations};
use crate::detector::{ConvergenceTrace, DetectorError};
use crate::graph::{BipartiteGraph, GraphError, LocationBucket};
use crate::synth::{GroundTruth, SynthError};

pub use experiment::{result_stem, BENCHMARK_MIN_POC_CARDS, run_experiment, ExperimentConfig, ExperimentOutcome, MethodResult};
pub use savings::{savings_simulation, weekly_snapshots, SavingsPolicy, SavingsReport, WeekSavings, WeeklySnapshot};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth has no positive candidates; curves are undefined")]
    NoPositives,
    #[error("every candidate is positive; false-positive rate is undefined")]
    NoNegatives,
    #[error("{labels} labels for {locations} locations")]
    LengthMismatch { labels: usize, locations: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// How candidate buckets are matched against injected ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Matching {
    /// Exact terminal-week key.
    #[default]
    Strict,
    /// Same terminal, week within one of an injected bucket.
    AdjacentWeek,
}

/// Per-location positive labels for `graph`.
pub fn truth_labels(graph: &BipartiteGraph, truth: &GroundTruth, matching: Matching) -> Vec<bool> {
    graph
        .location_keys()
        .iter()
        .map(|key| match matching {
            Matching::Strict => truth.is_poc(key),
            Matching::AdjacentWeek => (-1..=1).any(|d| {
                truth.is_poc(&LocationBucket::new(key.terminal_id.clone(), key.week_index + d))
            }),
        })
        .collect()
}

/// Injected buckets that did not survive candidate filtering.
pub fn missing_pocs(graph: &BipartiteGraph, truth: &GroundTruth) -> Vec<LocationBucket> {
    truth
        .pocs
        .iter()
        .filter(|b| graph.find_location(b).is_none())
        .cloned()
        .collect()
}

/// One threshold of the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
}

/// ROC and precision-recall summary of one ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    /// Ordered by descending threshold; the ROC curve is `(fpr, recall)` and
    /// the PR curve is `(recall, precision)`.
    pub curve: Vec<CurvePoint>,
    pub auc: f64,
    pub average_precision: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl Scorecard {
    /// Whether some threshold reaches both targets.
    pub fn reaches(&self, precision: f64, recall: f64) -> bool {
        self.curve.iter().any(|p| p.precision >= precision && p.recall >= recall)
    }

    /// Highest-recall point with at least `precision`.
    pub fn operating_point(&self, precision: f64) -> Option<CurvePoint> {
        self.curve.iter().rev().find(|p| p.precision >= precision).copied()
    }
}

/// Sweeps `ranking` at every distinct score against per-location `labels`.
pub fn score_ranking(ranking: &RankedLocations, labels: &[bool]) -> Result<Scorecard, EvalError> {
    if labels.len() != ranking.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            locations: ranking.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    if negatives == 0 {
        return Err(EvalError::NoNegatives);
    }

    let entries = ranking.entries();
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (k, entry) in entries.iter().enumerate() {
        if labels[entry.location] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = entries.get(k + 1).is_none_or(|next| next.score != entry.score);
        if last_of_tie {
            curve.push(CurvePoint {
                threshold: entry.score,
                tp,
                fp,
                precision: if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 },
                recall: tp as f64 / positives as f64,
                fpr: fp as f64 / negatives as f64,
            });
        }
    }

    let (mut auc, mut ap) = (0.0, 0.0);
    let (mut prev_fpr, mut prev_recall) = (0.0, 0.0);
    for p in &curve {
        auc += (p.fpr - prev_fpr) * (p.recall + prev_recall) / 2.0;
        ap += p.precision * (p.recall - prev_recall);
        prev_fpr = p.fpr;
        prev_recall = p.recall;
    }
    Ok(Scorecard {
        curve,
        auc,
        average_precision: ap,
        positives,
        negatives,
    })
}

/// CSV of the sweep.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("threshold,tp,fp,precision,recall,fpr\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.threshold, p.tp, p.fp, p.precision, p.recall, p.fpr
        ));
    }
    out
}

/// CSV of `(iteration, l1_residual)`, iterations numbered from 1.
pub fn convergence_report(trace: &ConvergenceTrace) -> String {
    let mut out = String::from("iteration,l1_residual\n");
    for (k, r) in trace.residuals.iter().enumerate() {
        out.push_str(&format!("{},{:e}\n", k + 1, r));
    }
    out
}

/// Least-squares line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`. `None` with fewer than two
/// points or constant `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Fits `ln(residual)` against iteration number for iterations after `skip`.
/// Zero residuals are dropped.
pub fn log_linear_fit(trace: &ConvergenceTrace, skip: usize) -> Option<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = trace
        .residuals
        .iter()
        .enumerate()
        .map(|(k, &r)| (k + 1, r))
        .filter(|&(it, r)| it > skip && r > 0.0)
        .map(|(it, r)| (it as f64, r.ln()))
        .unzip();
    linear_fit(&xs, &ys)
}
