//! Card-centric transaction generator.
//!
//! Terminals have Zipf popularity and are spread over regions. Each card lives
//! in one region, keeps a handful of favourite terminals drawn from its
//! region, and spends most of its transactions there; the rest go to any
//! terminal by global popularity.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use super::{stream_rng, Stream, SynthError};
use crate::graph::{week_start, TransactionRecord, SECONDS_PER_WEEK};
use crate::par::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_cards: usize,
    pub num_terminals: usize,
    pub weeks: usize,
    /// Poisson mean of transactions per card over the whole period.
    pub transactions_per_card: f64,
    /// Zipf exponent of terminal popularity.
    pub terminal_popularity: f64,
    pub seed: u64,
    /// Log-normal amount median, minor units.
    pub amount_median: f64,
    pub amount_sigma: f64,
    pub favorites_per_card: usize,
    /// Probability a transaction goes to one of the card's favourites.
    pub favorite_share: f64,
    pub regions: usize,
    /// Week index of the first generated week.
    pub start_week: i64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_cards: 20_000,
            num_terminals: 2_000,
            weeks: 26,
            transactions_per_card: 60.0,
            terminal_popularity: 1.0,
            seed: 0,
            amount_median: 2_500.0,
            amount_sigma: 0.9,
            favorites_per_card: 8,
            favorite_share: 0.6,
            regions: 20,
            // Monday 2014-01-06
            start_week: 2_296,
        }
    }
}

impl GeneratorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::InvalidGenerator(m.to_string()));
        if self.num_cards == 0 || self.num_terminals == 0 || self.weeks == 0 {
            return fail("num_cards, num_terminals and weeks must be at least 1");
        }
        if self.regions == 0 || self.regions > self.num_terminals {
            return fail("regions must be between 1 and num_terminals");
        }
        if self.favorites_per_card == 0 {
            return fail("favorites_per_card must be at least 1");
        }
        if !(self.transactions_per_card >= 0.0 && self.transactions_per_card.is_finite()) {
            return fail("transactions_per_card must be a finite non-negative mean");
        }
        if !(self.terminal_popularity >= 0.0 && self.terminal_popularity.is_finite()) {
            return fail("terminal_popularity must be a finite non-negative exponent");
        }
        if !(self.favorite_share >= 0.0 && self.favorite_share <= 1.0) {
            return fail("favorite_share must lie in [0, 1]");
        }
        if !(self.amount_median >= 1.0 && self.amount_sigma >= 0.0 && self.amount_sigma.is_finite()) {
            return fail("amount median must be >= 1 and sigma >= 0");
        }
        Ok(())
    }

    pub fn card_id(index: usize) -> String {
        format!("c{index:07}")
    }

    pub fn terminal_id(index: usize) -> String {
        format!("t{index:05}")
    }
}

struct Popularity {
    global: WeightedIndex<f64>,
    regional: Vec<(Vec<usize>, WeightedIndex<f64>)>,
}

impl Popularity {
    fn new(config: &GeneratorConfig) -> Self {
        let weights: Vec<f64> = (0..config.num_terminals)
            .map(|t| ((t + 1) as f64).powf(-config.terminal_popularity))
            .collect();
        let global = WeightedIndex::new(&weights).expect("positive weights");
        let regional = (0..config.regions)
            .map(|r| {
                let members: Vec<usize> = (r..config.num_terminals).step_by(config.regions).collect();
                let w: Vec<f64> = members.iter().map(|&t| weights[t]).collect();
                (members, WeightedIndex::new(&w).expect("positive weights"))
            })
            .collect();
        Self { global, regional }
    }
}

/// Generates a reproducible corpus with every `is_fraud` flag cleared, sorted
/// by timestamp (then card, then terminal).
pub fn generate_corpus(config: &GeneratorConfig) -> Result<Vec<TransactionRecord>, SynthError> {
    config.validate()?;
    let popularity = Popularity::new(config);
    let amounts = LogNormal::new(config.amount_median.ln(), config.amount_sigma)
        .map_err(|e| SynthError::InvalidGenerator(e.to_string()))?;
    let first_second = week_start(config.start_week);
    let terminal_ids: Vec<String> = (0..config.num_terminals).map(GeneratorConfig::terminal_id).collect();

    let per_card: Vec<Vec<(i64, usize, usize, u64)>> = (0..config.num_cards)
        .into_par_iter()
        .map(|card| {
            let mut rng = stream_rng(config.seed, Stream::Card, card as u64);
            let count = if config.transactions_per_card > 0.0 {
                let poisson = Poisson::new(config.transactions_per_card).expect("positive mean");
                poisson.sample(&mut rng) as usize
            } else {
                0
            };
            let (members, regional) = &popularity.regional[card % config.regions];
            let mut favorites: Vec<usize> = (0..config.favorites_per_card)
                .map(|_| members[regional.sample(&mut rng)])
                .collect();
            favorites.sort_unstable();
            favorites.dedup();
            (0..count)
                .map(|_| {
                    let week = rng.random_range(0..config.weeks) as i64;
                    let offset = rng.random_range(0..SECONDS_PER_WEEK);
                    let terminal = if rng.random_bool(config.favorite_share) {
                        favorites[rng.random_range(0..favorites.len())]
                    } else {
                        popularity.global.sample(&mut rng)
                    };
                    let amount = amounts.sample(&mut rng).round().max(1.0) as u64;
                    (first_second + week * SECONDS_PER_WEEK + offset, card, terminal, amount)
                })
                .collect()
        })
        .collect();

    let mut rows: Vec<(i64, usize, usize, u64)> = per_card.into_iter().flatten().collect();
    rows.sort_unstable();
    Ok(rows
        .into_iter()
        .map(|(timestamp, card, terminal, amount)| TransactionRecord {
            card_id: GeneratorConfig::card_id(card),
            terminal_id: terminal_ids[terminal].clone(),
            timestamp,
            amount,
            is_fraud: false,
        })
        .collect())
}
