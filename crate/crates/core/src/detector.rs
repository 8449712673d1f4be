//! Alternating blame / compromise-probability solver.
//!
//! Every fraud-card starts by blaming its locations uniformly. Each location's
//! probability is then the posterior mean `(z_j + alpha) / (|N_j| + alpha + beta)`
//! of the blame `z_j` it received, and each fraud-card re-splits its unit of
//! blame proportionally to those probabilities. The loop stops once the l1
//! change of the probability vector drops below `epsilon`.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::RankedLocations;
use crate::graph::BipartiteGraph;
use crate::par::*;

const NO_ROW: u32 = u32::MAX;
/// Target edge count per parallel row block.
const BLOCK_EDGES: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("invalid prior parameters: {0}")]
    InvalidPrior(String),
    #[error("fraud-card {card} has no neighbouring location")]
    EmptyFraudRow { card: usize },
}

/// Beta prior pseudo-counts plus the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    /// Virtual fraud-cards seen at every location.
    pub alpha: f64,
    /// Virtual non-fraud cards seen at every location.
    pub beta: f64,
    /// l1 threshold on successive probability vectors.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            beta: 15.0,
            epsilon: 1e-6,
            max_iterations: 100,
        }
    }
}

impl PriorParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ..Self::default()
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(DetectorError::InvalidPrior(format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("epsilon", self.epsilon)?;
        if self.max_iterations == 0 {
            return Err(DetectorError::InvalidPrior("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Posterior mean of a location with blame mass `z` and `n` neighbours.
    #[inline]
    pub fn posterior_mean(&self, z: f64, n: usize) -> f64 {
        (z + self.alpha) / (n as f64 + self.alpha + self.beta)
    }
}

/// Per-location compromise probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        l1_distance(&self.0, &other.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn ranking(&self) -> RankedLocations {
        RankedLocations::from_scores(&self.0)
    }
}

impl std::ops::Index<usize> for ThetaVector {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Sparse storage plan for blames: only fraud-card rows exist.
///
/// Blame edges are the fraud-cards' edges in global (card-major) edge order.
/// `location_edges` lists, for each location, the blame edges pointing at it
/// ordered by card index, which fixes the summation order of `z_j`.
#[derive(Debug, Clone)]
pub struct BlameLayout {
    card_row: Vec<u32>,
    row_cards: Vec<u32>,
    row_offsets: Vec<usize>,
    edge_locations: Vec<u32>,
    location_offsets: Vec<usize>,
    location_edges: Vec<u32>,
    neighbor_counts: Vec<u32>,
    blame_before_card: Vec<usize>,
    row_blocks: Vec<Range<usize>>,
}

impl BlameLayout {
    pub fn new(graph: &BipartiteGraph) -> Result<Self, DetectorError> {
        let num_cards = graph.num_cards();
        let num_locations = graph.num_locations();
        let mut card_row = vec![NO_ROW; num_cards];
        let mut row_cards = Vec::new();
        let mut row_offsets = vec![0usize];
        let mut edge_locations = Vec::new();
        let mut blame_before_card = Vec::with_capacity(num_cards + 1);
        for (card, slot) in card_row.iter_mut().enumerate() {
            blame_before_card.push(edge_locations.len());
            if !graph.is_fraud(card) {
                continue;
            }
            let locations = graph.locations_of(card);
            if locations.is_empty() {
                return Err(DetectorError::EmptyFraudRow { card });
            }
            *slot = row_cards.len() as u32;
            row_cards.push(card as u32);
            edge_locations.extend_from_slice(locations);
            row_offsets.push(edge_locations.len());
        }
        blame_before_card.push(edge_locations.len());

        let mut location_offsets = vec![0usize; num_locations + 1];
        for &l in &edge_locations {
            location_offsets[l as usize + 1] += 1;
        }
        for j in 0..num_locations {
            location_offsets[j + 1] += location_offsets[j];
        }
        let mut cursor = location_offsets.clone();
        let mut location_edges = vec![0u32; edge_locations.len()];
        for (e, &l) in edge_locations.iter().enumerate() {
            let slot = &mut cursor[l as usize];
            location_edges[*slot] = e as u32;
            *slot += 1;
        }
        let neighbor_counts = (0..num_locations)
            .map(|j| graph.location_degree(j) as u32)
            .collect();

        let mut row_blocks = Vec::new();
        let mut start = 0;
        for row in 0..row_cards.len() {
            if row_offsets[row + 1] - row_offsets[start] >= BLOCK_EDGES {
                row_blocks.push(start..row + 1);
                start = row + 1;
            }
        }
        if start < row_cards.len() {
            row_blocks.push(start..row_cards.len());
        }

        Ok(Self {
            card_row,
            row_cards,
            row_offsets,
            edge_locations,
            location_offsets,
            location_edges,
            neighbor_counts,
            blame_before_card,
            row_blocks,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.row_cards.len()
    }

    pub fn num_blame_edges(&self) -> usize {
        self.edge_locations.len()
    }

    pub fn num_locations(&self) -> usize {
        self.neighbor_counts.len()
    }

    /// Row index of a fraud-card, `None` for non-fraud cards.
    pub fn row_of(&self, card: usize) -> Option<usize> {
        match self.card_row[card] {
            NO_ROW => None,
            r => Some(r as usize),
        }
    }

    pub fn row_card(&self, row: usize) -> usize {
        self.row_cards[row] as usize
    }

    pub fn row_range(&self, row: usize) -> Range<usize> {
        self.row_offsets[row]..self.row_offsets[row + 1]
    }

    /// Location endpoint of each blame edge.
    pub fn edge_locations(&self) -> &[u32] {
        &self.edge_locations
    }

    /// Blame edges into `location`, in card order.
    pub fn location_edges(&self, location: usize) -> &[u32] {
        &self.location_edges[self.location_offsets[location]..self.location_offsets[location + 1]]
    }

    /// `|N_j|`, counting non-fraud neighbours too.
    pub fn neighbor_count(&self, location: usize) -> usize {
        self.neighbor_counts[location] as usize
    }

    /// Number of blame edges belonging to cards `< card`.
    pub fn blame_edges_before(&self, card: usize) -> usize {
        self.blame_before_card[card]
    }
}

/// Blame values for every fraud-card edge; non-fraud rows are implicit zeros.
#[derive(Debug, Clone)]
pub struct BlameMatrix {
    layout: Arc<BlameLayout>,
    values: Vec<f64>,
}

impl PartialEq for BlameMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values && self.layout.row_offsets == other.layout.row_offsets
    }
}

impl BlameMatrix {
    pub fn from_values(layout: Arc<BlameLayout>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), layout.num_blame_edges());
        Self { layout, values }
    }

    pub fn layout(&self) -> &Arc<BlameLayout> {
        &self.layout
    }

    /// Flat blame values in blame-edge order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Blames of `card` aligned with `graph.locations_of(card)`; `None` for
    /// non-fraud cards.
    pub fn row(&self, card: usize) -> Option<&[f64]> {
        self.layout
            .row_of(card)
            .map(|r| &self.values[self.layout.row_range(r)])
    }

    /// `b_ij`, zero when `i` is not a fraud-card or `(i, j)` is not an edge.
    pub fn get(&self, card: usize, location: usize) -> f64 {
        let Some(r) = self.layout.row_of(card) else {
            return 0.0;
        };
        let range = self.layout.row_range(r);
        self.layout.edge_locations[range.clone()]
            .binary_search(&(location as u32))
            .map_or(0.0, |k| self.values[range.start + k])
    }

    /// `(card, location, blame)` over all stored entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.layout.num_rows()).flat_map(move |r| {
            let card = self.layout.row_card(r);
            self.layout
                .row_range(r)
                .map(move |e| (card, self.layout.edge_locations[e] as usize, self.values[e]))
        })
    }

    /// `z_j` for every location, summed in card order.
    pub fn location_sums(&self) -> Vec<f64> {
        (0..self.layout.num_locations())
            .map(|j| {
                self.layout
                    .location_edges(j)
                    .iter()
                    .fold(0.0, |acc, &e| acc + self.values[e as usize])
            })
            .collect()
    }
}

/// l1 residual of every iteration, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub residuals: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.residuals.last().copied()
    }
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub theta: ThetaVector,
    pub blames: BlameMatrix,
    pub trace: ConvergenceTrace,
    /// False when `max_iterations` ran out first; `theta` is the last iterate.
    pub converged: bool,
}

impl Detection {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn ranking(&self) -> RankedLocations {
        self.theta.ranking()
    }
}

/// How the row and location loops are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rows / locations spread over the rayon pool (sequential without the
    /// `parallel` feature). Each output is still reduced in a fixed order, so
    /// results are bitwise identical to `Sequential`.
    #[default]
    Parallel,
}

/// One half-step of the alternation each, writing into caller buffers.
pub trait UpdateBackend {
    /// Row-normalise `theta` over each fraud-card's locations.
    fn update_blames(&mut self, theta: &[f64], blames: &mut [f64]);
    /// Posterior means from the blame mass each location receives.
    fn update_theta(&mut self, blames: &[f64], prior: &PriorParams, theta: &mut [f64]);
}

/// Straightforward row/location loops over a [`BlameLayout`].
#[derive(Debug, Clone)]
pub struct RowKernels {
    layout: Arc<BlameLayout>,
    execution: Execution,
}

impl RowKernels {
    pub fn new(layout: Arc<BlameLayout>, execution: Execution) -> Self {
        Self { layout, execution }
    }
}

fn normalise_rows(layout: &BlameLayout, rows: Range<usize>, theta: &[f64], out: &mut [f64]) {
    let base = layout.row_offsets[rows.start];
    for row in rows {
        let range = layout.row_range(row);
        let locations = &layout.edge_locations[range.clone()];
        let sum = locations.iter().fold(0.0, |acc, &l| acc + theta[l as usize]);
        let dst = &mut out[range.start - base..range.end - base];
        for (b, &l) in dst.iter_mut().zip(locations) {
            *b = theta[l as usize] / sum;
        }
    }
}

fn location_theta(layout: &BlameLayout, j: usize, blames: &[f64], prior: &PriorParams) -> f64 {
    let z = layout
        .location_edges(j)
        .iter()
        .fold(0.0, |acc, &e| acc + blames[e as usize]);
    prior.posterior_mean(z, layout.neighbor_count(j))
}

impl UpdateBackend for RowKernels {
    fn update_blames(&mut self, theta: &[f64], blames: &mut [f64]) {
        let layout = &*self.layout;
        match self.execution {
            Execution::Sequential => normalise_rows(layout, 0..layout.num_rows(), theta, blames),
            Execution::Parallel => {
                let mut blocks = Vec::with_capacity(layout.row_blocks.len());
                let mut rest = blames;
                for rows in &layout.row_blocks {
                    let len = layout.row_offsets[rows.end] - layout.row_offsets[rows.start];
                    let (head, tail) = rest.split_at_mut(len);
                    blocks.push((rows.clone(), head));
                    rest = tail;
                }
                blocks
                    .into_par_iter()
                    .for_each(|(rows, out)| normalise_rows(layout, rows, theta, out));
            }
        }
    }

    fn update_theta(&mut self, blames: &[f64], prior: &PriorParams, theta: &mut [f64]) {
        let layout = &*self.layout;
        match self.execution {
            Execution::Sequential => {
                for (j, t) in theta.iter_mut().enumerate() {
                    *t = location_theta(layout, j, blames, prior);
                }
            }
            Execution::Parallel => {
                theta
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(j, t)| *t = location_theta(layout, j, blames, prior));
            }
        }
    }
}

/// Alternating solver bound to one graph.
#[derive(Debug, Clone)]
pub struct Detector<'g> {
    graph: &'g BipartiteGraph,
    layout: Arc<BlameLayout>,
    execution: Execution,
}

impl<'g> Detector<'g> {
    pub fn new(graph: &'g BipartiteGraph) -> Result<Self, DetectorError> {
        Ok(Self {
            graph,
            layout: Arc::new(BlameLayout::new(graph)?),
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn graph(&self) -> &'g BipartiteGraph {
        self.graph
    }

    pub fn layout(&self) -> &Arc<BlameLayout> {
        &self.layout
    }

    pub fn kernels(&self) -> RowKernels {
        RowKernels::new(self.layout.clone(), self.execution)
    }

    /// `b_ij = 1 / |L_i|` on fraud-card edges.
    pub fn init_uniform_blames(&self) -> BlameMatrix {
        let layout = &self.layout;
        let mut values = vec![0.0; layout.num_blame_edges()];
        for row in 0..layout.num_rows() {
            let range = layout.row_range(row);
            let share = 1.0 / range.len() as f64;
            values[range].fill(share);
        }
        BlameMatrix::from_values(layout.clone(), values)
    }

    pub fn update_poc_probabilities(&self, blames: &BlameMatrix, prior: &PriorParams) -> ThetaVector {
        let mut theta = vec![0.0; self.graph.num_locations()];
        self.kernels().update_theta(&blames.values, prior, &mut theta);
        ThetaVector(theta)
    }

    pub fn update_blames(&self, theta: &ThetaVector) -> BlameMatrix {
        let mut values = vec![0.0; self.layout.num_blame_edges()];
        self.kernels().update_blames(&theta.0, &mut values);
        BlameMatrix::from_values(self.layout.clone(), values)
    }

    pub fn run(&self, prior: &PriorParams) -> Result<Detection, DetectorError> {
        self.run_with(prior, &mut self.kernels(), |_, _| {})
    }

    /// Runs the alternation on `backend`, calling `observe(iteration, theta)`
    /// after the initial estimate (iteration 0) and after every update.
    pub fn run_with<B, F>(
        &self,
        prior: &PriorParams,
        backend: &mut B,
        mut observe: F,
    ) -> Result<Detection, DetectorError>
    where
        B: UpdateBackend + ?Sized,
        F: FnMut(usize, &[f64]),
    {
        prior.validate()?;
        let mut blames = self.init_uniform_blames();
        let mut theta = vec![0.0; self.graph.num_locations()];
        backend.update_theta(&blames.values, prior, &mut theta);
        observe(0, &theta);

        let mut previous = vec![0.0; theta.len()];
        let mut trace = ConvergenceTrace::default();
        let mut converged = false;
        for iteration in 1..=prior.max_iterations {
            backend.update_blames(&theta, &mut blames.values);
            std::mem::swap(&mut previous, &mut theta);
            backend.update_theta(&blames.values, prior, &mut theta);
            let residual = l1_distance(&theta, &previous);
            trace.residuals.push(residual);
            observe(iteration, &theta);
            if residual < prior.epsilon {
                converged = true;
                break;
            }
        }
        Ok(Detection {
            theta: ThetaVector(theta),
            blames,
            trace,
            converged,
        })
    }
}

/// Convenience wrapper: default execution, one call.
pub fn run(graph: &BipartiteGraph, prior: &PriorParams) -> Result<Detection, DetectorError> {
    Detector::new(graph)?.run(prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LocationBucket;
    use crate::synth::fixtures::{random_graph, worked_example, RandomGraphConfig};
    use proptest::prelude::*;

    const WORKED: PriorParams = PriorParams {
        alpha: 1.0,
        beta: 1.0,
        epsilon: 1e-9,
        max_iterations: 100,
    };

    fn star(fraud: bool, degree: usize) -> BipartiteGraph {
        BipartiteGraph::from_edges(
            vec!["c".into()],
            (0..degree).map(|j| LocationBucket::new(format!("t{j}"), 0)).collect(),
            vec![fraud],
            (0..degree as u32).map(|j| (0, j)),
        )
        .unwrap()
    }

    #[test]
    fn uniform_blames() {
        let g = star(true, 2);
        let d = Detector::new(&g).unwrap();
        assert_eq!(d.init_uniform_blames().row(0).unwrap(), &[0.5, 0.5]);

        let g = star(false, 2);
        let b = Detector::new(&g).unwrap().init_uniform_blames();
        assert!(b.row(0).is_none());
        assert_eq!(b.get(0, 0), 0.0);
        assert_eq!(b.get(0, 1), 0.0);

        let g = star(true, 4);
        let b = Detector::new(&g).unwrap().init_uniform_blames();
        assert_eq!(b.row(0).unwrap(), &[0.25; 4]);
        assert_eq!(b.row(0).unwrap().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn isolated_fraud_card_is_structural_error() {
        let g = BipartiteGraph::from_edges(
            vec!["a".into(), "b".into()],
            vec![LocationBucket::new("t", 0)],
            vec![true, true],
            [(0, 0)],
        )
        .unwrap();
        assert_eq!(
            Detector::new(&g).unwrap_err(),
            DetectorError::EmptyFraudRow { card: 1 }
        );
    }

    #[test]
    fn posterior_substitutions() {
        let prior = PriorParams::default();
        assert!((prior.posterior_mean(0.0, 3) - 0.2 / 18.2).abs() < 1e-15);
        assert!((prior.posterior_mean(0.0, 3) - 0.010989).abs() < 1e-6);

        let g = star(true, 1);
        let d = Detector::new(&g).unwrap();
        let theta = d.update_poc_probabilities(&d.init_uniform_blames(), &prior);
        assert!((theta[0] - 1.2 / 16.2).abs() < 1e-15);
        assert!((theta[0] - 0.074074).abs() < 1e-6);
    }

    #[test]
    fn worked_example_first_round() {
        let g = worked_example();
        let d = Detector::new(&g).unwrap();
        let theta = d.update_poc_probabilities(&d.init_uniform_blames(), &WORKED);
        assert_eq!(theta.as_slice(), &[0.625, 0.375]);
        let blames = d.update_blames(&theta);
        assert_eq!(blames.row(0).unwrap(), &[0.625, 0.375]);
        assert_eq!(blames.row(1).unwrap(), &[1.0]);
        assert!(blames.row(2).is_none());
    }

    #[test]
    fn blames_with_equal_theta_are_uniform() {
        let g = star(true, 3);
        let d = Detector::new(&g).unwrap();
        let b = d.update_blames(&ThetaVector::new(vec![0.3; 3]));
        for &v in b.row(0).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let g = star(true, 1);
        let d = Detector::new(&g).unwrap();
        assert_eq!(d.update_blames(&ThetaVector::new(vec![0.01])).row(0).unwrap(), &[1.0]);
    }

    /// Plain iteration of the two coupled closed-form equations of the worked
    /// example, independent of the graph machinery.
    fn worked_oracle(iterations: usize) -> Vec<(f64, f64)> {
        let (mut t1, mut t2) = ((1.0 + 0.5 + 1.0) / 4.0, (0.5 + 1.0) / 4.0);
        let mut out = vec![(t1, t2)];
        for _ in 0..iterations {
            let b = t1 / (t1 + t2);
            (t1, t2) = ((1.0 + b + 1.0) / 4.0, ((1.0 - b) + 1.0) / 4.0);
            out.push((t1, t2));
        }
        out
    }

    #[test]
    fn worked_example_fixed_point() {
        let g = worked_example();
        let d = Detector::new(&g).unwrap();
        let mut seen = Vec::new();
        let det = d
            .run_with(&WORKED, &mut d.kernels(), |_, t| seen.push((t[0], t[1])))
            .unwrap();
        assert!(det.converged);
        assert!(det.iterations() < 60);
        assert!((det.theta[0] - 2.0 / 3.0).abs() < 1e-8);
        assert!((det.theta[1] - 1.0 / 3.0).abs() < 1e-8);
        let row = det.blames.row(0).unwrap();
        assert!((row[0] - 2.0 / 3.0).abs() < 1e-8);
        assert!((row[1] - 1.0 / 3.0).abs() < 1e-8);

        let oracle = worked_oracle(seen.len() - 1);
        for (a, b) in seen.iter().zip(&oracle) {
            assert!((a.0 - b.0).abs() < 1e-15 && (a.1 - b.1).abs() < 1e-15);
        }
        for w in seen.windows(2) {
            assert!(w[1].0 >= w[0].0, "theta_1 must not decrease");
            assert!(w[1].1 <= w[0].1, "theta_2 must not increase");
        }
        for w in det.trace.residuals.windows(2) {
            assert!(w[1] < w[0], "residuals must strictly decrease");
        }
    }

    #[test]
    fn zero_fraud_cards_converge_immediately() {
        let g = BipartiteGraph::from_edges(
            vec!["a".into(), "b".into()],
            vec![LocationBucket::new("t", 0), LocationBucket::new("u", 0)],
            vec![false, false],
            [(0, 0), (1, 0), (1, 1)],
        )
        .unwrap();
        let prior = PriorParams::default();
        let det = run(&g, &prior).unwrap();
        assert!(det.converged);
        assert_eq!(det.iterations(), 1);
        assert_eq!(det.theta[0], 0.2 / (2.0 + 15.2));
        assert_eq!(det.theta[1], 0.2 / (1.0 + 15.2));
    }

    #[test]
    fn exhausting_iterations_is_flagged_not_fatal() {
        let g = worked_example();
        let prior = WORKED.with_max_iterations(3);
        let det = run(&g, &prior).unwrap();
        assert!(!det.converged);
        assert_eq!(det.iterations(), 3);
    }

    #[test]
    fn invalid_prior_is_rejected() {
        let g = worked_example();
        for bad in [
            PriorParams::new(0.0, 1.0),
            PriorParams::new(1.0, -1.0),
            PriorParams::new(1.0, 1.0).with_epsilon(0.0),
            PriorParams::new(1.0, 1.0).with_max_iterations(0),
            PriorParams::new(f64::NAN, 1.0),
        ] {
            assert!(matches!(run(&g, &bad), Err(DetectorError::InvalidPrior(_))));
        }
    }

    #[test]
    fn sequential_and_parallel_execution_agree_bitwise() {
        let g = random_graph(&RandomGraphConfig::with_edges(40_000, 3));
        let prior = PriorParams::default();
        let a = Detector::new(&g).unwrap().with_execution(Execution::Sequential).run(&prior).unwrap();
        let b = Detector::new(&g).unwrap().with_execution(Execution::Parallel).run(&prior).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.blames, b.blames);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn location_sums_match_blame_entries() {
        let g = random_graph(&RandomGraphConfig::with_edges(2_000, 5));
        let det = run(&g, &PriorParams::default()).unwrap();
        let mut z = vec![0.0; g.num_locations()];
        for (_, j, b) in det.blames.iter() {
            z[j] += b;
        }
        for (a, b) in z.iter().zip(det.blames.location_sums()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn permutation_equivariance() {
        let g = random_graph(&RandomGraphConfig::with_edges(3_000, 11));
        let n_c = g.num_cards();
        let n_l = g.num_locations();
        // deterministic shuffles
        let card_perm: Vec<usize> = (0..n_c).map(|i| (i * 7919 + 13) % n_c).collect();
        let mut seen = vec![false; n_c];
        assert!(card_perm.iter().all(|&p| !std::mem::replace(&mut seen[p], true)), "not a permutation");
        let loc_perm: Vec<usize> = (0..n_l).rev().collect();

        let mut card_ids = vec![String::new(); n_c];
        let mut fraud = vec![false; n_c];
        for c in 0..n_c {
            card_ids[card_perm[c]] = g.card_id(c).to_string();
            fraud[card_perm[c]] = g.is_fraud(c);
        }
        let mut keys = vec![LocationBucket::new("", 0); n_l];
        for j in 0..n_l {
            keys[loc_perm[j]] = g.location_key(j).clone();
        }
        let edges = g.edges().map(|(c, l)| (card_perm[c as usize] as u32, loc_perm[l as usize] as u32));
        let h = BipartiteGraph::from_edges(card_ids, keys, fraud, edges).unwrap();

        let prior = PriorParams::default();
        let a = run(&g, &prior).unwrap();
        let b = run(&h, &prior).unwrap();
        assert_eq!(a.iterations(), b.iterations());
        for j in 0..n_l {
            assert!((a.theta[j] - b.theta[loc_perm[j]]).abs() < 1e-12);
        }
        for (c, j, v) in a.blames.iter() {
            assert!((v - b.blames.get(card_perm[c], loc_perm[j])).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn posterior_formula(z in 0.0f64..1e4, n in 1usize..100_000, alpha in 1e-3f64..50.0, beta in 1e-3f64..500.0) {
            let prior = PriorParams::new(alpha, beta);
            let expected = (z + alpha) / (n as f64 + alpha + beta);
            prop_assert!((prior.posterior_mean(z, n) - expected).abs() <= 1e-12);
        }
    }
}
