//! Partitioned superstep execution of the alternating updates.
//!
//! The global edge array is cut into contiguous, edge-balanced partitions,
//! one per worker. Each update is a barrier-synchronised superstep:
//!
//! 1. every partition walks its edge slice and emits a [`MessageBatch`]
//!    (probabilities towards cards, or blames towards locations), combining
//!    messages for the same destination in edge order;
//! 2. after the barrier, each destination owner reduces the partials of all
//!    partitions in partition-id order.
//!
//! The reduction order is fixed by edge and partition order only, never by
//! thread timing, so results are reproducible. With one worker they are
//! bitwise identical to [`crate::detector`]; with more workers only the
//! association of floating point sums changes.

use std::ops::Range;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detector::{
    BlameLayout, BlameMatrix, Detection, Detector, DetectorError, PriorParams, ThetaVector,
    UpdateBackend,
};
use crate::graph::BipartiteGraph;
use crate::par::*;

/// A worker's share of the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub partition_id: usize,
    /// Contiguous segment of the global (card-major) edge array.
    pub edge_slice: Range<usize>,
    /// Cards whose first edge falls in `edge_slice`.
    pub owned_cards: Range<usize>,
    /// Locations whose reduction this partition performs.
    pub owned_locations: Range<usize>,
}

/// Messages produced by one partition in one superstep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageBatch {
    /// Destination vertex indices, strictly ascending.
    pub destinations: Vec<u32>,
    pub payloads: Vec<f64>,
}

impl MessageBatch {
    fn clear(&mut self) {
        self.destinations.clear();
        self.payloads.clear();
    }

    fn push(&mut self, destination: u32, payload: f64) {
        debug_assert!(payload.is_finite());
        self.destinations.push(destination);
        self.payloads.push(payload);
    }

    pub fn len(&self) -> usize {
        self.destinations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.destinations.is_empty()
    }

    /// Entries whose destination lies in `range`.
    fn window(&self, range: &Range<usize>) -> Range<usize> {
        let lo = self.destinations.partition_point(|&d| (d as usize) < range.start);
        let hi = self.destinations.partition_point(|&d| (d as usize) < range.end);
        lo..hi
    }
}

/// Splits the edges into `num_workers` contiguous segments whose sizes differ
/// by at most one. Workers beyond the edge count receive empty slices.
pub fn plan_partitions(graph: &BipartiteGraph, num_workers: usize) -> Vec<Partition> {
    let workers = num_workers.max(1);
    let num_edges = graph.num_edges();
    let num_cards = graph.num_cards();
    let num_locations = graph.num_locations();
    let offsets = graph.card_offsets();

    let edge_bound = |k: usize| k * num_edges / workers;
    // First card whose edges start at or after `edge`.
    let card_bound = |k: usize| {
        if k == workers {
            num_cards
        } else {
            offsets[..num_cards].partition_point(|&o| o < edge_bound(k))
        }
    };
    // Locations are split by cumulative degree so reductions balance too.
    let loc_offsets = graph.location_offsets();
    let location_bound = |k: usize| {
        if k == workers {
            num_locations
        } else {
            loc_offsets[..num_locations].partition_point(|&o| o < edge_bound(k))
        }
    };

    (0..workers)
        .map(|k| Partition {
            partition_id: k,
            edge_slice: edge_bound(k)..edge_bound(k + 1),
            owned_cards: card_bound(k)..card_bound(k + 1),
            owned_locations: location_bound(k)..location_bound(k + 1),
        })
        .collect()
}

/// Wall time of one superstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperstepTiming {
    pub iteration: usize,
    pub superstep: String,
    pub worker_count: usize,
    pub millis: f64,
}

/// Renders timings as `iteration,superstep,worker_count,millis` CSV.
pub fn timings_csv(timings: &[SuperstepTiming]) -> String {
    let mut out = String::from("iteration,superstep,worker_count,millis\n");
    for t in timings {
        out.push_str(&format!(
            "{},{},{},{:.6}\n",
            t.iteration, t.superstep, t.worker_count, t.millis
        ));
    }
    out
}

/// Per-partition state reused across supersteps.
#[derive(Debug, Default)]
struct Worker {
    /// Blame-edge range covered by this partition's edge slice.
    blame_slice: Range<usize>,
    /// Fraud rows whose card this partition owns.
    owned_rows: Range<usize>,
    /// First card touched by the edge slice.
    first_card: usize,
    outbox: MessageBatch,
    /// Dense per-location scratch for combining blame messages.
    scratch: Vec<f64>,
    touched: Vec<u32>,
}

/// Thread pool sized to the worker count; inline execution without rayon.
struct Pool {
    #[cfg(feature = "parallel")]
    inner: rayon::ThreadPool,
}

impl Pool {
    fn new(_threads: usize) -> Self {
        Self {
            #[cfg(feature = "parallel")]
            inner: rayon::ThreadPoolBuilder::new()
                .num_threads(_threads)
                .build()
                .expect("failed to start engine worker threads"),
        }
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        {
            self.inner.install(f)
        }
        #[cfg(not(feature = "parallel"))]
        {
            f()
        }
    }
}

/// Multi-worker in-process executor for one graph.
pub struct PartitionedEngine<'g> {
    graph: &'g BipartiteGraph,
    layout: Arc<BlameLayout>,
    partitions: Vec<Partition>,
    workers: Vec<Worker>,
    card_sums: Vec<f64>,
    timings: Vec<SuperstepTiming>,
    iteration: usize,
    pool: Pool,
}

impl<'g> PartitionedEngine<'g> {
    pub fn new(graph: &'g BipartiteGraph, layout: Arc<BlameLayout>, num_workers: usize) -> Self {
        let partitions = plan_partitions(graph, num_workers);
        let offsets = graph.card_offsets();
        let num_edges = graph.num_edges();
        let mut rows_before = Vec::with_capacity(graph.num_cards() + 1);
        let mut rows = 0;
        for card in 0..graph.num_cards() {
            rows_before.push(rows);
            rows += graph.is_fraud(card) as usize;
        }
        rows_before.push(rows);
        // Card holding global edge `edge` (edge < num_edges).
        let card_at = |edge: usize| offsets.partition_point(|&o| o <= edge) - 1;
        // Blame edges strictly before global edge `edge`.
        let blame_index = |edge: usize| -> usize {
            if edge >= num_edges {
                return layout.num_blame_edges();
            }
            let card = card_at(edge);
            let before = layout.blame_edges_before(card);
            if graph.is_fraud(card) {
                before + (edge - offsets[card])
            } else {
                before
            }
        };
        let workers = partitions
            .iter()
            .map(|p| Worker {
                blame_slice: blame_index(p.edge_slice.start)..blame_index(p.edge_slice.end),
                owned_rows: rows_before[p.owned_cards.start]..rows_before[p.owned_cards.end],
                first_card: if p.edge_slice.is_empty() { 0 } else { card_at(p.edge_slice.start) },
                scratch: vec![0.0; graph.num_locations()],
                ..Worker::default()
            })
            .collect();
        Self {
            graph,
            card_sums: vec![0.0; layout.num_rows()],
            layout,
            pool: Pool::new(partitions.len()),
            partitions,
            workers,
            timings: Vec::new(),
            iteration: 0,
        }
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn worker_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn timings(&self) -> &[SuperstepTiming] {
        &self.timings
    }

    pub fn take_timings(&mut self) -> Vec<SuperstepTiming> {
        std::mem::take(&mut self.timings)
    }

    fn record(&mut self, superstep: &str, started: Instant) {
        self.timings.push(SuperstepTiming {
            iteration: self.iteration,
            superstep: superstep.to_string(),
            worker_count: self.partitions.len(),
            millis: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    /// Locations send their probability to every adjacent fraud-card; each
    /// card sums what it receives; every edge then takes `theta_j / sum`.
    pub fn superstep_update_blames(&mut self, theta: &ThetaVector) -> BlameMatrix {
        let mut values = vec![0.0; self.layout.num_blame_edges()];
        self.blames_into(theta.as_slice(), &mut values);
        BlameMatrix::from_values(self.layout.clone(), values)
    }

    /// Edges send their blame to their location; each location owner reduces
    /// the per-partition partials and applies the posterior mean.
    pub fn superstep_update_theta(&mut self, blames: &BlameMatrix, prior: &PriorParams) -> ThetaVector {
        let mut theta = vec![0.0; self.graph.num_locations()];
        self.theta_into(blames.values(), prior, &mut theta);
        ThetaVector::new(theta)
    }

    fn blames_into(&mut self, theta: &[f64], blames: &mut [f64]) {
        let started = Instant::now();
        let Self {
            graph,
            layout,
            partitions,
            workers,
            card_sums,
            pool,
            ..
        } = self;
        let (graph, layout) = (&**graph, &**layout);

        pool.install(|| {
            // Phase 1: theta messages towards fraud-cards, combined per card.
            workers
                .par_iter_mut()
                .zip(partitions.par_iter())
                .for_each(|(w, p)| {
                    w.outbox.clear();
                    let offsets = graph.card_offsets();
                    let locations = graph.edge_locations();
                    let mut card = w.first_card;
                    let mut e = p.edge_slice.start;
                    while e < p.edge_slice.end {
                        while offsets[card + 1] <= e {
                            card += 1;
                        }
                        let end = offsets[card + 1].min(p.edge_slice.end);
                        if let Some(row) = layout.row_of(card) {
                            let sum = locations[e..end]
                                .iter()
                                .fold(0.0, |acc, &l| acc + theta[l as usize]);
                            w.outbox.push(row as u32, sum);
                        }
                        e = end;
                    }
                });

            // Barrier. Phase 2: owners reduce card partials in partition order.
            // A card's edges are contiguous, so only later partitions can hold
            // partials for rows owned here.
            let workers: &[Worker] = workers;
            let mut sum_slices = Vec::with_capacity(workers.len());
            let mut rest = &mut card_sums[..];
            for w in workers {
                let (head, tail) = rest.split_at_mut(w.owned_rows.len());
                sum_slices.push(head);
                rest = tail;
            }
            sum_slices
                .into_par_iter()
                .enumerate()
                .for_each(|(k, sums)| {
                    let rows = workers[k].owned_rows.clone();
                    sums.fill(0.0);
                    for w in &workers[k..] {
                        if w.outbox.destinations.first().is_some_and(|&d| d as usize >= rows.end) {
                            break;
                        }
                        for m in w.outbox.window(&rows) {
                            sums[w.outbox.destinations[m] as usize - rows.start] += w.outbox.payloads[m];
                        }
                    }
                });

            // Barrier. Phase 3: every edge divides by its card's total.
            let card_sums: &[f64] = card_sums;
            let mut blame_slices = Vec::with_capacity(workers.len());
            let mut rest = blames;
            for w in workers {
                let (head, tail) = rest.split_at_mut(w.blame_slice.len());
                blame_slices.push(head);
                rest = tail;
            }
            blame_slices
                .into_par_iter()
                .zip(workers.par_iter())
                .for_each(|(out, w)| {
                    if out.is_empty() {
                        return;
                    }
                    let locations = layout.edge_locations();
                    let mut row = row_containing(layout, w.blame_slice.start);
                    for (k, b) in out.iter_mut().enumerate() {
                        let e = w.blame_slice.start + k;
                        while layout.row_range(row).end <= e {
                            row += 1;
                        }
                        *b = theta[locations[e] as usize] / card_sums[row];
                    }
                });
        });
        self.record("update_blames", started);
    }

    fn theta_into(&mut self, blames: &[f64], prior: &PriorParams, theta: &mut [f64]) {
        let started = Instant::now();
        let Self {
            layout,
            partitions,
            workers,
            pool,
            ..
        } = self;
        let layout = &**layout;

        pool.install(|| {
            // Phase 1: blame messages towards locations, combined per location
            // in edge order within the partition.
            workers.par_iter_mut().for_each(|w| {
                w.outbox.clear();
                w.touched.clear();
                let locations = layout.edge_locations();
                for e in w.blame_slice.clone() {
                    let l = locations[e];
                    let slot = &mut w.scratch[l as usize];
                    if *slot == 0.0 {
                        w.touched.push(l);
                    }
                    *slot += blames[e];
                }
                w.touched.sort_unstable();
                w.touched.dedup();
                for &l in &w.touched {
                    let slot = &mut w.scratch[l as usize];
                    w.outbox.push(l, *slot);
                    *slot = 0.0;
                }
            });

            // Barrier. Phase 2: each location owner sums partials in partition order.
            let workers: &[Worker] = workers;
            let mut theta_slices = Vec::with_capacity(partitions.len());
            let mut rest = theta;
            for p in partitions.iter() {
                let (head, tail) = rest.split_at_mut(p.owned_locations.len());
                theta_slices.push((p.owned_locations.clone(), head));
                rest = tail;
            }
            theta_slices.into_par_iter().for_each(|(owned, out)| {
                out.fill(0.0);
                for w in workers {
                    for m in w.outbox.window(&owned) {
                        out[w.outbox.destinations[m] as usize - owned.start] += w.outbox.payloads[m];
                    }
                }
                for (k, t) in out.iter_mut().enumerate() {
                    *t = prior.posterior_mean(*t, layout.neighbor_count(owned.start + k));
                }
            });
        });
        self.record("update_theta", started);
    }
}

/// Row whose blame-edge range contains `blame_edge`.
fn row_containing(layout: &BlameLayout, blame_edge: usize) -> usize {
    let (mut lo, mut hi) = (0, layout.num_rows());
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if layout.row_range(mid).start <= blame_edge {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

impl UpdateBackend for PartitionedEngine<'_> {
    fn update_blames(&mut self, theta: &[f64], blames: &mut [f64]) {
        self.iteration += 1;
        self.blames_into(theta, blames);
    }

    fn update_theta(&mut self, blames: &[f64], prior: &PriorParams, theta: &mut [f64]) {
        self.theta_into(blames, prior, theta);
    }
}

/// Full alternating run on `num_workers` partitions.
pub fn run(
    graph: &BipartiteGraph,
    prior: &PriorParams,
    num_workers: usize,
) -> Result<(Detection, Vec<SuperstepTiming>), DetectorError> {
    run_observed(graph, prior, num_workers, |_, _| {})
}

/// Like [`run`], calling `observe(iteration, theta)` after each update.
pub fn run_observed<F>(
    graph: &BipartiteGraph,
    prior: &PriorParams,
    num_workers: usize,
    observe: F,
) -> Result<(Detection, Vec<SuperstepTiming>), DetectorError>
where
    F: FnMut(usize, &[f64]),
{
    let detector = Detector::new(graph)?;
    let mut engine = PartitionedEngine::new(graph, detector.layout().clone(), num_workers);
    let detection = detector.run_with(prior, &mut engine, observe)?;
    Ok((detection, engine.take_timings()))
}

/// Mean milliseconds per full iteration (both supersteps) over exactly
/// `iterations` rounds, ignoring convergence.
pub fn time_per_iteration(
    graph: &BipartiteGraph,
    num_workers: usize,
    iterations: usize,
) -> Result<(f64, Vec<SuperstepTiming>), DetectorError> {
    let prior = PriorParams::default()
        .with_epsilon(f64::MIN_POSITIVE)
        .with_max_iterations(iterations.max(1));
    let (detection, timings) = run(graph, &prior, num_workers)?;
    let total: f64 = timings.iter().filter(|t| t.iteration > 0).map(|t| t.millis).sum();
    Ok((total / detection.iterations() as f64, timings))
}
