//! Ground-truth point-of-compromise injection.
//!
//! Chosen terminal-week buckets "steal" each card transacting there with
//! probability `p` per transaction. A stolen card is labelled by flagging one
//! of its later transactions elsewhere. Optional noise then marks extra,
//! never-stolen cards as fraud-cards with no culprit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{entity_key, stream_rng, Stream, SynthError};
use crate::graph::{LocationBucket, TransactionRecord, SECONDS_PER_WEEK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub num_pocs: usize,
    /// Per-transaction probability that a compromised bucket steals the card.
    pub steal_probability: f64,
    /// Extra noise fraud-cards as a multiple of the fraud-card count.
    pub noise_multiplier: f64,
    pub seed: u64,
    /// Buckets need this many distinct cards to be eligible for injection.
    pub min_poc_cards: usize,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            num_pocs: 20,
            steal_probability: 0.1,
            noise_multiplier: 0.0,
            seed: 0,
            min_poc_cards: 20,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::InvalidInjection(m));
        if !(0.0..=1.0).contains(&self.steal_probability) {
            return fail(format!("steal probability must lie in [0, 1], got {}", self.steal_probability));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return fail(format!("noise multiplier must be >= 0, got {}", self.noise_multiplier));
        }
        Ok(())
    }
}

/// Why a fraud-card is a fraud-card.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Culprit {
    Poc(LocationBucket),
    Noise,
}

impl fmt::Display for Culprit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Culprit::Poc(bucket) => bucket.fmt(f),
            Culprit::Noise => f.write_str("noise"),
        }
    }
}

impl From<Culprit> for String {
    fn from(c: Culprit) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Culprit {
    type Error = crate::graph::GraphError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "noise" {
            Ok(Culprit::Noise)
        } else {
            s.parse().map(Culprit::Poc)
        }
    }
}

/// Injected buckets and the realised culprit of every labelled card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub injection: InjectionConfig,
    /// Sorted.
    pub pocs: Vec<LocationBucket>,
    /// Keyed by card id.
    pub culprits: BTreeMap<String, Culprit>,
}

impl GroundTruth {
    pub fn is_poc(&self, bucket: &LocationBucket) -> bool {
        self.pocs.binary_search(bucket).is_ok()
    }

    pub fn stolen_cards(&self) -> usize {
        self.culprits.values().filter(|c| matches!(c, Culprit::Poc(_))).count()
    }

    pub fn noise_cards(&self) -> usize {
        self.culprits.values().filter(|c| matches!(c, Culprit::Noise)).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub corpus: Vec<TransactionRecord>,
    pub truth: GroundTruth,
}

fn record_key(r: &TransactionRecord) -> u64 {
    entity_key(&[
        r.card_id.as_bytes(),
        r.terminal_id.as_bytes(),
        &r.timestamp.to_le_bytes(),
        &r.amount.to_le_bytes(),
    ])
}

/// Injects compromised buckets into `corpus`.
pub fn inject_pocs(corpus: &[TransactionRecord], config: &InjectionConfig) -> Result<Injection, SynthError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(SynthError::EmptyCorpus);
    }
    let buckets: Vec<LocationBucket> = corpus.iter().map(TransactionRecord::bucket).collect();

    // Distinct cards per bucket decide eligibility.
    let mut bucket_cards: HashMap<&LocationBucket, HashSet<&str>> = HashMap::new();
    for (r, b) in corpus.iter().zip(&buckets) {
        bucket_cards.entry(b).or_default().insert(&r.card_id);
    }
    let mut eligible: Vec<&LocationBucket> = bucket_cards
        .iter()
        .filter(|(_, cards)| cards.len() >= config.min_poc_cards)
        .map(|(&b, _)| b)
        .collect();
    eligible.sort_unstable();
    if eligible.len() < config.num_pocs {
        return Err(SynthError::NotEnoughBuckets {
            requested: config.num_pocs,
            eligible: eligible.len(),
            min_cards: config.min_poc_cards,
        });
    }
    let mut rng = stream_rng(config.seed, Stream::PocSelection, 0);
    let (chosen, _) = eligible.partial_shuffle(&mut rng, config.num_pocs);
    let mut pocs: Vec<LocationBucket> = chosen.iter().map(|&b| b.clone()).collect();
    pocs.sort_unstable();
    let poc_set: HashSet<&LocationBucket> = pocs.iter().collect();

    // Earliest stealing transaction per card; ties broken by terminal.
    let mut stolen: HashMap<&str, (i64, &LocationBucket)> = HashMap::new();
    for (r, b) in corpus.iter().zip(&buckets) {
        if !poc_set.contains(b) {
            continue;
        }
        let u: f64 = stream_rng(config.seed, Stream::Steal, record_key(r)).random();
        if u >= config.steal_probability {
            continue;
        }
        let candidate = (r.timestamp, b);
        stolen
            .entry(&r.card_id)
            .and_modify(|cur| {
                if candidate < *cur {
                    *cur = candidate;
                }
            })
            .or_insert(candidate);
    }

    let mut by_card: HashMap<&str, Vec<usize>> = HashMap::new();
    for (k, r) in corpus.iter().enumerate() {
        by_card.entry(&r.card_id).or_default().push(k);
    }

    let mut out: Vec<TransactionRecord> = corpus.to_vec();
    let mut culprits = BTreeMap::new();
    let mut stolen_cards: Vec<(&str, (i64, &LocationBucket))> = stolen.into_iter().collect();
    stolen_cards.sort_unstable();
    for &(card, (when, culprit)) in &stolen_cards {
        let mut rng = stream_rng(config.seed, Stream::Flag, entity_key(&[card.as_bytes()]));
        let txs = &by_card[card];
        let later: Vec<usize> = txs
            .iter()
            .copied()
            .filter(|&k| corpus[k].timestamp > when && &buckets[k] != culprit)
            .collect();
        if let Some(&k) = later.get(rng.random_range(0..later.len().max(1))) {
            out[k].is_fraud = true;
        } else {
            // No later activity: the card is used fraudulently one to two
            // weeks after being stolen, at one of its usual terminals.
            let mut terminals: Vec<&str> = txs.iter().map(|&k| corpus[k].terminal_id.as_str()).collect();
            terminals.sort_unstable();
            terminals.dedup();
            let source = &corpus[txs[rng.random_range(0..txs.len())]];
            out.push(TransactionRecord {
                card_id: card.to_string(),
                terminal_id: terminals[rng.random_range(0..terminals.len())].to_string(),
                timestamp: when + SECONDS_PER_WEEK + rng.random_range(0..SECONDS_PER_WEEK),
                amount: source.amount,
                is_fraud: true,
            });
        }
        culprits.insert(card.to_string(), Culprit::Poc(culprit.clone()));
    }

    // Noise: clean cards drawn uniformly, each getting one flagged transaction.
    let fraud_now: HashSet<&str> = out
        .iter()
        .filter(|r| r.is_fraud)
        .map(|r| r.card_id.as_str())
        .collect();
    let needed = (config.noise_multiplier * fraud_now.len() as f64).ceil() as usize;
    if needed > 0 {
        let mut clean: Vec<&str> = by_card
            .keys()
            .copied()
            .filter(|c| !fraud_now.contains(c) && !culprits.contains_key(*c))
            .collect();
        if clean.len() < needed {
            return Err(SynthError::NotEnoughCleanCards {
                needed,
                available: clean.len(),
            });
        }
        clean.sort_unstable();
        let mut rng = stream_rng(config.seed, Stream::NoiseSelection, 0);
        let (chosen, _) = clean.partial_shuffle(&mut rng, needed);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for card in chosen {
            let txs = &by_card[card];
            let mut rng = stream_rng(config.seed, Stream::NoiseFlag, entity_key(&[card.as_bytes()]));
            out[txs[rng.random_range(0..txs.len())]].is_fraud = true;
            culprits.insert(card.to_string(), Culprit::Noise);
        }
    }

    // Appended records go to their chronological place.
    if out.len() > corpus.len() {
        out.sort_by_key(|r| r.timestamp);
    }
    Ok(Injection {
        corpus: out,
        truth: GroundTruth {
            injection: config.clone(),
            pocs,
            culprits,
        },
    })
}
