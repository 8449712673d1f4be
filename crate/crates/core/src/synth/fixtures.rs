//! Small hand-built and random graphs for tests, benches and examples.

use rand::Rng;

use super::{stream_rng, Stream};
use crate::graph::{week_start, BipartiteGraph, LocationBucket, TransactionRecord, SECONDS_PER_WEEK};

/// Three cards, two locations: `c1` (fraud) visited `j1` and `j2`, `c2`
/// (fraud) visited `j1`, `c3` (clean) visited `j2`.
pub fn worked_example() -> BipartiteGraph {
    BipartiteGraph::from_edges(
        vec!["c1".into(), "c2".into(), "c3".into()],
        vec![LocationBucket::new("j1", 0), LocationBucket::new("j2", 0)],
        vec![true, true, false],
        [(0, 0), (0, 1), (1, 0), (2, 1)],
    )
    .expect("static fixture")
}

/// Shape of a random bipartite graph.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomGraphConfig {
    /// Edges drawn before deduplication.
    pub num_edges: usize,
    pub seed: u64,
    pub fraud_rate: f64,
    pub mean_card_degree: usize,
    pub mean_location_degree: usize,
}

impl RandomGraphConfig {
    pub fn with_edges(num_edges: usize, seed: u64) -> Self {
        Self {
            num_edges,
            seed,
            fraud_rate: 0.3,
            mean_card_degree: 4,
            mean_location_degree: 20,
        }
    }
}

/// Random graph in which every card and every location has at least one edge.
pub fn random_graph(config: &RandomGraphConfig) -> BipartiteGraph {
    let e = config.num_edges.max(1);
    let cards = (e / config.mean_card_degree.max(1)).max(1);
    let locations = (e / config.mean_location_degree.max(1)).max(1);
    let mut rng = stream_rng(config.seed, Stream::Graph, 0);
    let fraud: Vec<bool> = (0..cards).map(|_| rng.random_bool(config.fraud_rate)).collect();
    let edges: Vec<(u32, u32)> = (0..e)
        .map(|k| {
            let j = if k < locations { k } else { rng.random_range(0..locations) };
            ((k % cards) as u32, j as u32)
        })
        .collect();
    BipartiteGraph::from_edges(
        (0..cards).map(|i| format!("c{i}")).collect(),
        (0..locations).map(|j| LocationBucket::new(format!("t{j}"), 0)).collect(),
        fraud,
        edges,
    )
    .expect("edges are in range")
}

/// Week of the compromised bucket in [`savings_example`].
pub const SAVINGS_POC_WEEK: i64 = 2_300;

/// Transactions for the reissue accounting example: three cards shop at
/// `poc` in one week and each suffers 5000 of fraud two weeks later; a fourth
/// card only shops at `bakery`.
pub fn savings_example() -> Vec<TransactionRecord> {
    let poc_week = week_start(SAVINGS_POC_WEEK);
    let later = poc_week + 2 * SECONDS_PER_WEEK;
    let mut out = Vec::new();
    for (i, card) in ["c1", "c2", "c3"].into_iter().enumerate() {
        let offset = 3_600 * i as i64;
        out.push(TransactionRecord::new(card, "poc", poc_week + offset, 1_200, false));
        out.push(TransactionRecord::new(card, "elsewhere", later + offset, 5_000, true));
    }
    out.push(TransactionRecord::new("c4", "bakery", poc_week + 86_400, 800, false));
    out.push(TransactionRecord::new("c4", "bakery", later + 86_400, 900, false));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_shape() {
        let g = worked_example();
        assert_eq!(g.stats().edges, 4);
        assert_eq!(g.num_fraud_cards(), 2);
        assert_eq!(g.cards_of(0), &[0, 1]);
    }

    #[test]
    fn random_graph_covers_vertices() {
        for seed in 0..5 {
            let g = random_graph(&RandomGraphConfig::with_edges(1_000, seed));
            assert!(g.num_edges() <= 1_000 && g.num_edges() > 900);
            assert!((0..g.num_cards()).all(|i| g.card_degree(i) > 0));
            assert!((0..g.num_locations()).all(|j| g.location_degree(j) > 0));
        }
        let a = random_graph(&RandomGraphConfig::with_edges(500, 7));
        let b = random_graph(&RandomGraphConfig::with_edges(500, 7));
        assert_eq!(a, b);
    }
}
