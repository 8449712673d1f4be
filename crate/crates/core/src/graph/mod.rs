//! Card/location bipartite graph construction.
//!
//! Raw transactions are bucketed into terminal-week locations, multi-edges are
//! collapsed, and locations seen by fewer than `min_fraud_cards` distinct
//! fraud-cards are dropped together with the cards left without neighbours.

mod ingest;
mod snapshot;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    ingest_transactions, read_transactions, write_transactions, ErrorPolicy, IngestError,
    IngestOutcome, RowError, Schema, TransactionReader,
};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotError};

/// Seconds between the Unix epoch and Monday 1970-01-05T00:00:00Z.
pub const WEEK_ANCHOR: i64 = 4 * 86_400;
pub const SECONDS_PER_WEEK: i64 = 7 * 86_400;

/// Minimum distinct fraud-card neighbours a location needs to stay a candidate.
pub const DEFAULT_MIN_FRAUD_CARDS: usize = 5;

/// One card-present event at a terminal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub card_id: String,
    pub terminal_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    /// Minor currency units.
    pub amount: u64,
    pub is_fraud: bool,
}

impl TransactionRecord {
    pub fn new(
        card_id: impl Into<String>,
        terminal_id: impl Into<String>,
        timestamp: i64,
        amount: u64,
        is_fraud: bool,
    ) -> Self {
        Self {
            card_id: card_id.into(),
            terminal_id: terminal_id.into(),
            timestamp,
            amount,
            is_fraud,
        }
    }

    pub fn bucket(&self) -> LocationBucket {
        bucketize(self)
    }
}

/// A terminal-week pair: the unit treated as a possible point of compromise.
///
/// Serialized as its `<terminal>@w<week>` key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LocationBucket {
    pub terminal_id: String,
    pub week_index: i64,
}

impl LocationBucket {
    pub fn new(terminal_id: impl Into<String>, week_index: i64) -> Self {
        Self {
            terminal_id: terminal_id.into(),
            week_index,
        }
    }

    /// First second of this bucket's week.
    pub fn week_start(&self) -> i64 {
        week_start(self.week_index)
    }
}

impl fmt::Display for LocationBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@w{}", self.terminal_id, self.week_index)
    }
}

impl From<LocationBucket> for String {
    fn from(bucket: LocationBucket) -> String {
        bucket.to_string()
    }
}

impl TryFrom<String> for LocationBucket {
    type Error = GraphError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for LocationBucket {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::BadLocationKey(s.to_string());
        let (terminal, week) = s.rsplit_once("@w").ok_or_else(bad)?;
        if terminal.is_empty() {
            return Err(bad());
        }
        let week_index = week.parse().map_err(|_| bad())?;
        Ok(Self::new(terminal, week_index))
    }
}

/// Monday-start UTC week counter anchored at 1970-01-05.
pub fn week_index(timestamp: i64) -> i64 {
    (timestamp - WEEK_ANCHOR).div_euclid(SECONDS_PER_WEEK)
}

pub fn week_start(week_index: i64) -> i64 {
    WEEK_ANCHOR + week_index * SECONDS_PER_WEEK
}

pub fn bucketize(record: &TransactionRecord) -> LocationBucket {
    LocationBucket::new(record.terminal_id.clone(), week_index(record.timestamp))
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no candidate points of compromise survive filtering (min_fraud_cards = {min_fraud_cards})")]
    NoCandidates { min_fraud_cards: usize },
    #[error("min_fraud_cards must be at least 1")]
    ZeroMinFraudCards,
    #[error("edge ({card}, {location}) is out of bounds for {num_cards} cards and {num_locations} locations")]
    EdgeOutOfBounds {
        card: u32,
        location: u32,
        num_cards: usize,
        num_locations: usize,
    },
    #[error("fraud flag vector has length {got}, expected {expected}")]
    FraudFlagLength { got: usize, expected: usize },
    #[error("invalid location key {0:?}, expected <terminal>@w<week>")]
    BadLocationKey(String),
}

/// Deduplicated card/location adjacency stored in both directions.
///
/// Edges are kept card-major: the edge index of `(i, j)` is its position in
/// the concatenation of all `L_i` lists. Each `N_j` list is sorted by card
/// index, which is also the global edge order restricted to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    card_offsets: Vec<usize>,
    card_locations: Vec<u32>,
    location_offsets: Vec<usize>,
    location_cards: Vec<u32>,
    fraud: Vec<bool>,
    card_ids: Vec<String>,
    location_keys: Vec<LocationBucket>,
}

impl BipartiteGraph {
    /// Builds a graph from an arbitrary edge list. Duplicate edges collapse.
    pub fn from_edges(
        card_ids: Vec<String>,
        location_keys: Vec<LocationBucket>,
        fraud: Vec<bool>,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, GraphError> {
        let num_cards = card_ids.len();
        let num_locations = location_keys.len();
        if fraud.len() != num_cards {
            return Err(GraphError::FraudFlagLength {
                got: fraud.len(),
                expected: num_cards,
            });
        }
        let mut edges: Vec<(u32, u32)> = edges.into_iter().collect();
        if let Some(&(card, location)) = edges
            .iter()
            .find(|&&(c, l)| c as usize >= num_cards || l as usize >= num_locations)
        {
            return Err(GraphError::EdgeOutOfBounds {
                card,
                location,
                num_cards,
                num_locations,
            });
        }
        edges.sort_unstable();
        edges.dedup();

        let mut card_offsets = vec![0usize; num_cards + 1];
        for &(c, _) in &edges {
            card_offsets[c as usize + 1] += 1;
        }
        for i in 0..num_cards {
            card_offsets[i + 1] += card_offsets[i];
        }
        let card_locations: Vec<u32> = edges.iter().map(|&(_, l)| l).collect();

        let (location_offsets, location_cards) =
            transpose(&card_offsets, &card_locations, num_locations);

        Ok(Self {
            card_offsets,
            card_locations,
            location_offsets,
            location_cards,
            fraud,
            card_ids,
            location_keys,
        })
    }

    pub fn num_cards(&self) -> usize {
        self.card_ids.len()
    }

    pub fn num_locations(&self) -> usize {
        self.location_keys.len()
    }

    pub fn num_edges(&self) -> usize {
        self.card_locations.len()
    }

    pub fn num_fraud_cards(&self) -> usize {
        self.fraud.iter().filter(|&&f| f).count()
    }

    /// `L_i`: locations visited by card `i`, ascending.
    pub fn locations_of(&self, card: usize) -> &[u32] {
        &self.card_locations[self.card_offsets[card]..self.card_offsets[card + 1]]
    }

    /// `N_j`: cards seen at location `j`, ascending.
    pub fn cards_of(&self, location: usize) -> &[u32] {
        &self.location_cards[self.location_offsets[location]..self.location_offsets[location + 1]]
    }

    pub fn location_degree(&self, location: usize) -> usize {
        self.location_offsets[location + 1] - self.location_offsets[location]
    }

    pub fn card_degree(&self, card: usize) -> usize {
        self.card_offsets[card + 1] - self.card_offsets[card]
    }

    pub fn is_fraud(&self, card: usize) -> bool {
        self.fraud[card]
    }

    pub fn fraud_flags(&self) -> &[bool] {
        &self.fraud
    }

    /// `F_j`: number of fraud-cards adjacent to location `j`.
    pub fn fraud_neighbor_count(&self, location: usize) -> usize {
        self.cards_of(location)
            .iter()
            .filter(|&&c| self.fraud[c as usize])
            .count()
    }

    pub fn card_id(&self, card: usize) -> &str {
        &self.card_ids[card]
    }

    pub fn card_ids(&self) -> &[String] {
        &self.card_ids
    }

    pub fn location_key(&self, location: usize) -> &LocationBucket {
        &self.location_keys[location]
    }

    pub fn location_keys(&self) -> &[LocationBucket] {
        &self.location_keys
    }

    /// Prefix offsets of the card-major edge array (`num_cards + 1` entries).
    pub fn card_offsets(&self) -> &[usize] {
        &self.card_offsets
    }

    /// Location endpoint of every edge, card-major.
    pub fn edge_locations(&self) -> &[u32] {
        &self.card_locations
    }

    pub fn location_offsets(&self) -> &[usize] {
        &self.location_offsets
    }

    /// Iterates `(card, location)` over all edges in global edge order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_cards()).flat_map(move |c| {
            self.locations_of(c).iter().map(move |&l| (c as u32, l))
        })
    }

    /// Drops locations with fewer than `min_fraud_cards` fraud neighbours, then
    /// cards left without any location. Surviving vertices keep their relative
    /// order. Applied once, without cascading.
    pub fn retain_candidates(&self, min_fraud_cards: usize) -> Result<Self, GraphError> {
        if min_fraud_cards == 0 {
            return Err(GraphError::ZeroMinFraudCards);
        }
        let keep_location: Vec<bool> = (0..self.num_locations())
            .map(|j| self.fraud_neighbor_count(j) >= min_fraud_cards)
            .collect();
        if !keep_location.iter().any(|&k| k) {
            return Err(GraphError::NoCandidates { min_fraud_cards });
        }
        let location_map = dense_map(&keep_location);
        let keep_card: Vec<bool> = (0..self.num_cards())
            .map(|c| {
                self.locations_of(c)
                    .iter()
                    .any(|&l| keep_location[l as usize])
            })
            .collect();
        let card_map = dense_map(&keep_card);

        let card_ids = select(&self.card_ids, &keep_card);
        let fraud = select(&self.fraud, &keep_card);
        let location_keys = select(&self.location_keys, &keep_location);
        let edges = self.edges().filter_map(|(c, l)| {
            Some((card_map[c as usize]?, location_map[l as usize]?))
        });
        Self::from_edges(card_ids, location_keys, fraud, edges)
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            cards: self.num_cards(),
            locations: self.num_locations(),
            edges: self.num_edges(),
            fraud_cards: self.num_fraud_cards(),
        }
    }

    /// Index of a location by key, by linear scan.
    pub fn find_location(&self, key: &LocationBucket) -> Option<usize> {
        self.location_keys.iter().position(|k| k == key)
    }
}

fn transpose(
    card_offsets: &[usize],
    card_locations: &[u32],
    num_locations: usize,
) -> (Vec<usize>, Vec<u32>) {
    let mut location_offsets = vec![0usize; num_locations + 1];
    for &l in card_locations {
        location_offsets[l as usize + 1] += 1;
    }
    for j in 0..num_locations {
        location_offsets[j + 1] += location_offsets[j];
    }
    let mut cursor = location_offsets.clone();
    let mut location_cards = vec![0u32; card_locations.len()];
    for card in 0..card_offsets.len() - 1 {
        for &l in &card_locations[card_offsets[card]..card_offsets[card + 1]] {
            let slot = &mut cursor[l as usize];
            location_cards[*slot] = card as u32;
            *slot += 1;
        }
    }
    (location_offsets, location_cards)
}

fn dense_map(keep: &[bool]) -> Vec<Option<u32>> {
    let mut next = 0u32;
    keep.iter()
        .map(|&k| {
            k.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

fn select<T: Clone>(items: &[T], keep: &[bool]) -> Vec<T> {
    items
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(t, _)| t.clone())
        .collect()
}

/// Summary counts written next to a graph snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub cards: usize,
    pub locations: usize,
    pub edges: usize,
    pub fraud_cards: usize,
}

/// Builds the candidate graph from transactions.
///
/// A card is a fraud-card iff any of its transactions is flagged. Indices are
/// assigned in first-appearance order of the surviving tokens.
pub fn build_graph<I>(records: I, min_fraud_cards: usize) -> Result<BipartiteGraph, GraphError>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<TransactionRecord>,
{
    use std::borrow::Borrow;

    if min_fraud_cards == 0 {
        return Err(GraphError::ZeroMinFraudCards);
    }
    let mut card_index: HashMap<String, u32> = HashMap::new();
    let mut card_ids = Vec::new();
    let mut fraud = Vec::new();
    let mut bucket_index: HashMap<LocationBucket, u32> = HashMap::new();
    let mut location_keys = Vec::new();
    let mut edges = Vec::new();

    for record in records {
        let record = record.borrow();
        let card = *card_index.entry(record.card_id.clone()).or_insert_with(|| {
            card_ids.push(record.card_id.clone());
            fraud.push(false);
            (card_ids.len() - 1) as u32
        });
        fraud[card as usize] |= record.is_fraud;
        let bucket = bucketize(record);
        let location = match bucket_index.get(&bucket) {
            Some(&l) => l,
            None => {
                let l = location_keys.len() as u32;
                location_keys.push(bucket.clone());
                bucket_index.insert(bucket, l);
                l
            }
        };
        edges.push((card, location));
    }
    if location_keys.is_empty() {
        return Err(GraphError::NoCandidates { min_fraud_cards });
    }
    BipartiteGraph::from_edges(card_ids, location_keys, fraud, edges)?
        .retain_candidates(min_fraud_cards)
}
