//! Comparison rankers and the common [`RankedLocations`] output.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{self, DetectorError, PriorParams};
use crate::graph::BipartiteGraph;

/// Default coupling for linearized belief propagation.
pub const DEFAULT_COUPLING: f64 = 0.05;
/// Prior beliefs: fraud-cards, clean cards, locations.
pub const FRAUD_CARD_PRIOR: f64 = 0.5;
pub const CLEAN_CARD_PRIOR: f64 = -0.1;
pub const LOCATION_PRIOR: f64 = 0.0;

const BP_TOLERANCE: f64 = 1e-8;
const BP_MAX_SWEEPS: usize = 10_000;
const BP_DIVERGENCE_STREAK: usize = 10;
/// Spectral-bound target used when the coupling is clamped.
const BP_SAFE_RADIUS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("coupling must lie in (0, 1), got {0}")]
    InvalidCoupling(f64),
    #[error("belief propagation diverged after {sweeps} sweeps (residual {residual:e}); use a smaller coupling")]
    Diverged { sweeps: usize, residual: f64 },
    #[error("belief propagation did not reach tolerance within {0} sweeps")]
    NotConverged(usize),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// One ranked candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub location: usize,
    pub score: f64,
}

/// Locations ordered by score descending, location index ascending on ties.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedLocations {
    entries: Vec<RankedEntry>,
}

impl RankedLocations {
    /// Ranks every location by its score.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut entries: Vec<RankedEntry> = scores
            .iter()
            .enumerate()
            .map(|(location, &score)| RankedEntry { location, score })
            .collect();
        entries.sort_by(rank_order);
        Self { entries }
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn locations(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.location)
    }

    /// Scores indexed by location.
    pub fn scores_by_location(&self) -> Vec<f64> {
        let mut scores = vec![0.0; self.entries.len()];
        for e in &self.entries {
            scores[e.location] = e.score;
        }
        scores
    }
}

fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.location.cmp(&b.location))
}

/// `F_j / |N_j|`.
pub fn ratio_score(graph: &BipartiteGraph) -> RankedLocations {
    let scores: Vec<f64> = (0..graph.num_locations())
        .map(|j| graph.fraud_neighbor_count(j) as f64 / graph.location_degree(j) as f64)
        .collect();
    RankedLocations::from_scores(&scores)
}

/// `(F_j + alpha) / (|N_j| + alpha + beta)`; no blame sharing.
pub fn ratio_prior_score(graph: &BipartiteGraph, alpha: f64, beta: f64) -> RankedLocations {
    let scores: Vec<f64> = (0..graph.num_locations())
        .map(|j| {
            (graph.fraud_neighbor_count(j) as f64 + alpha)
                / (graph.location_degree(j) as f64 + alpha + beta)
        })
        .collect();
    RankedLocations::from_scores(&scores)
}

#[derive(PartialEq, Eq)]
struct Candidate {
    coverage: usize,
    location: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.coverage
            .cmp(&other.coverage)
            .then(other.location.cmp(&self.location))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy cover of the fraud-cards: repeatedly take the location adjacent to
/// the most still-uncovered fraud-cards (lowest index on ties). Selected
/// locations score their coverage at selection time; the rest score 0.
pub fn greedy_vertex_cover(graph: &BipartiteGraph) -> RankedLocations {
    let mut covered = vec![false; graph.num_cards()];
    let mut coverage: Vec<usize> = (0..graph.num_locations())
        .map(|j| graph.fraud_neighbor_count(j))
        .collect();
    let mut heap: BinaryHeap<Candidate> = coverage
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(location, &coverage)| Candidate { coverage, location })
        .collect();
    let mut scores = vec![0.0; graph.num_locations()];
    let mut selected = vec![false; graph.num_locations()];

    // Coverage only shrinks, so a popped entry is current iff it matches.
    while let Some(top) = heap.pop() {
        let j = top.location;
        if selected[j] || top.coverage != coverage[j] {
            continue;
        }
        if coverage[j] == 0 {
            break;
        }
        selected[j] = true;
        scores[j] = coverage[j] as f64;
        for &c in graph.cards_of(j) {
            let c = c as usize;
            if !graph.is_fraud(c) || covered[c] {
                continue;
            }
            covered[c] = true;
            for &l in graph.locations_of(c) {
                let l = l as usize;
                if !selected[l] {
                    coverage[l] -= 1;
                    if coverage[l] > 0 {
                        heap.push(Candidate {
                            coverage: coverage[l],
                            location: l,
                        });
                    }
                }
            }
        }
        coverage[j] = 0;
    }
    RankedLocations::from_scores(&scores)
}

/// Largest coupling `c` with `c * sqrt(dc * dl) + c^2 * dmax <= target`, a
/// sufficient condition for the Jacobi sweep to contract.
pub fn safe_coupling(graph: &BipartiteGraph, target: f64) -> f64 {
    let max_card = (0..graph.num_cards()).map(|c| graph.card_degree(c)).max().unwrap_or(0) as f64;
    let max_loc = (0..graph.num_locations())
        .map(|j| graph.location_degree(j))
        .max()
        .unwrap_or(0) as f64;
    let spectral = (max_card * max_loc).sqrt();
    let dmax = max_card.max(max_loc);
    if dmax == 0.0 {
        return f64::INFINITY;
    }
    // positive root of dmax c^2 + spectral c - target = 0
    (-spectral + (spectral * spectral + 4.0 * dmax * target).sqrt()) / (2.0 * dmax)
}

/// Linearized belief propagation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedBp {
    /// Requested coupling `c` (homophily-derived).
    pub coupling: f64,
    /// Lower the coupling to [`safe_coupling`] when it exceeds it.
    pub clamp: bool,
}

impl Default for LinearizedBp {
    fn default() -> Self {
        Self {
            coupling: DEFAULT_COUPLING,
            clamp: true,
        }
    }
}

/// Beliefs and the coupling actually used.
#[derive(Debug, Clone, PartialEq)]
pub struct BpOutcome {
    pub ranking: RankedLocations,
    pub coupling: f64,
    pub sweeps: usize,
}

/// Solves `b = phi + c A b - c^2 D b` by Jacobi sweeps to `1e-8` and ranks
/// locations by final belief.
pub fn linearized_bp_score(graph: &BipartiteGraph, settings: LinearizedBp) -> Result<BpOutcome, BaselineError> {
    let requested = settings.coupling;
    if !(requested > 0.0 && requested < 1.0) {
        return Err(BaselineError::InvalidCoupling(requested));
    }
    let c = if settings.clamp {
        requested.min(safe_coupling(graph, BP_SAFE_RADIUS))
    } else {
        requested
    };
    let n_cards = graph.num_cards();
    let n_locs = graph.num_locations();
    let card_prior: Vec<f64> = (0..n_cards)
        .map(|i| if graph.is_fraud(i) { FRAUD_CARD_PRIOR } else { CLEAN_CARD_PRIOR })
        .collect();
    let mut cards = card_prior.clone();
    let mut locs = vec![LOCATION_PRIOR; n_locs];
    let mut next_cards = vec![0.0; n_cards];
    let mut next_locs = vec![0.0; n_locs];
    let c2 = c * c;

    let mut previous_residual = f64::INFINITY;
    let mut growth = 0;
    for sweep in 1..=BP_MAX_SWEEPS {
        for i in 0..n_cards {
            let neigh: f64 = graph.locations_of(i).iter().map(|&l| locs[l as usize]).sum();
            next_cards[i] = card_prior[i] + c * neigh - c2 * graph.card_degree(i) as f64 * cards[i];
        }
        for j in 0..n_locs {
            let neigh: f64 = graph.cards_of(j).iter().map(|&i| cards[i as usize]).sum();
            next_locs[j] = LOCATION_PRIOR + c * neigh - c2 * graph.location_degree(j) as f64 * locs[j];
        }
        let residual = next_cards
            .iter()
            .zip(&cards)
            .chain(next_locs.iter().zip(&locs))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut cards, &mut next_cards);
        std::mem::swap(&mut locs, &mut next_locs);
        if !residual.is_finite() {
            return Err(BaselineError::Diverged { sweeps: sweep, residual });
        }
        if residual < BP_TOLERANCE {
            return Ok(BpOutcome {
                ranking: RankedLocations::from_scores(&locs),
                coupling: c,
                sweeps: sweep,
            });
        }
        growth = if residual > previous_residual { growth + 1 } else { 0 };
        if growth >= BP_DIVERGENCE_STREAK {
            return Err(BaselineError::Diverged { sweeps: sweep, residual });
        }
        previous_residual = residual;
    }
    Err(BaselineError::NotConverged(BP_MAX_SWEEPS))
}

/// Every ranking method the evaluator knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    BreachRadar,
    Ratio,
    RatioPrior,
    VertexCover,
    LinearizedBp,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::BreachRadar,
        Method::Ratio,
        Method::RatioPrior,
        Method::VertexCover,
        Method::LinearizedBp,
    ];

    pub const BASELINES: [Method; 4] = [
        Method::Ratio,
        Method::RatioPrior,
        Method::VertexCover,
        Method::LinearizedBp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BreachRadar => "breachradar",
            Method::Ratio => "ratio",
            Method::RatioPrior => "ratio-prior",
            Method::VertexCover => "vertex-cover",
            Method::LinearizedBp => "fabp",
        }
    }

    /// Ranks the graph's locations with default parameters except the prior
    /// (shared by the detector and ratio-with-prior) and the BP coupling.
    pub fn rank(
        self,
        graph: &BipartiteGraph,
        prior: &PriorParams,
        bp: LinearizedBp,
    ) -> Result<RankedLocations, BaselineError> {
        Ok(match self {
            Method::BreachRadar => detector::run(graph, prior)?.ranking(),
            Method::Ratio => ratio_score(graph),
            Method::RatioPrior => ratio_prior_score(graph, prior.alpha, prior.beta),
            Method::VertexCover => greedy_vertex_cover(graph),
            Method::LinearizedBp => linearized_bp_score(graph, bp)?.ranking,
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "breachradar" | "alternating" => Method::BreachRadar,
            "ratio" => Method::Ratio,
            "ratio-prior" | "ratio+prior" => Method::RatioPrior,
            "vertex-cover" | "greedy-cover" => Method::VertexCover,
            "fabp" | "linearized-bp" | "bp" => Method::LinearizedBp,
            other => {
                return Err(format!(
                    "unknown method {other:?} (expected breachradar, ratio, ratio-prior, vertex-cover or fabp)"
                ))
            }
        })
    }
}
