//! Weekly card-reissue policy replay.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::detector::{self, PriorParams};
use crate::graph::{build_graph, week_start, GraphError, LocationBucket, TransactionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsPolicy {
    /// Buckets with θ strictly above this trigger reissue.
    pub theta_threshold: f64,
    /// Minor units per reissued card.
    pub reissue_cost: u64,
}

impl Default for SavingsPolicy {
    fn default() -> Self {
        Self {
            theta_threshold: 0.1,
            reissue_cost: 1_000,
        }
    }
}

/// θ estimates available at the start of `week`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeeklySnapshot {
    pub week: i64,
    pub theta: BTreeMap<LocationBucket, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeekSavings {
    pub week: i64,
    pub cards_reissued: usize,
    /// Reissued cards that go on to have fraud.
    pub victims: usize,
    pub reissue_cost: u64,
    pub fraud_prevented: u64,
    pub net_savings: i64,
    pub cumulative_net: i64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SavingsReport {
    pub weeks: Vec<WeekSavings>,
}

impl SavingsReport {
    pub fn cards_reissued(&self) -> usize {
        self.weeks.iter().map(|w| w.cards_reissued).sum()
    }

    pub fn reissue_cost(&self) -> u64 {
        self.weeks.iter().map(|w| w.reissue_cost).sum()
    }

    pub fn fraud_prevented(&self) -> u64 {
        self.weeks.iter().map(|w| w.fraud_prevented).sum()
    }

    pub fn net_savings(&self) -> i64 {
        self.weeks.last().map_or(0, |w| w.cumulative_net)
    }

    /// Share of reissued cards that later had fraud; `None` without reissues.
    pub fn victim_share(&self) -> Option<f64> {
        let reissued = self.cards_reissued();
        (reissued > 0).then(|| self.weeks.iter().map(|w| w.victims).sum::<usize>() as f64 / reissued as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("week,cards_reissued,victims,reissue_cost,fraud_prevented,net_savings,cumulative_net\n");
        for w in &self.weeks {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                w.week, w.cards_reissued, w.victims, w.reissue_cost, w.fraud_prevented, w.net_savings, w.cumulative_net
            ));
        }
        out
    }
}

/// Replays the reissue policy over `snapshots` in week order.
///
/// At the start of each snapshot week every card not yet reissued that
/// transacted before that moment at a bucket with θ above the threshold is
/// reissued; its fraudulent transactions from then on count as prevented.
pub fn savings_simulation(
    snapshots: &[WeeklySnapshot],
    transactions: &[TransactionRecord],
    policy: &SavingsPolicy,
) -> SavingsReport {
    let mut order: Vec<&WeeklySnapshot> = snapshots.iter().collect();
    order.sort_by_key(|s| s.week);

    let mut by_card: HashMap<&str, Vec<&TransactionRecord>> = HashMap::new();
    for r in transactions {
        by_card.entry(&r.card_id).or_default().push(r);
    }
    let mut cards: Vec<&str> = by_card.keys().copied().collect();
    cards.sort_unstable();

    let mut reissued: HashSet<&str> = HashSet::new();
    let mut report = SavingsReport::default();
    let mut cumulative = 0i64;
    for snapshot in order {
        let decision = week_start(snapshot.week);
        let flagged = |r: &TransactionRecord| {
            r.timestamp < decision
                && snapshot
                    .theta
                    .get(&r.bucket())
                    .is_some_and(|&t| t > policy.theta_threshold)
        };
        let mut week = WeekSavings {
            week: snapshot.week,
            cards_reissued: 0,
            victims: 0,
            reissue_cost: 0,
            fraud_prevented: 0,
            net_savings: 0,
            cumulative_net: 0,
        };
        for &card in &cards {
            if reissued.contains(card) || !by_card[card].iter().any(|r| flagged(r)) {
                continue;
            }
            reissued.insert(card);
            let prevented: u64 = by_card[card]
                .iter()
                .filter(|r| r.is_fraud && r.timestamp >= decision)
                .map(|r| r.amount)
                .sum();
            week.cards_reissued += 1;
            week.victims += usize::from(prevented > 0);
            week.fraud_prevented += prevented;
            week.reissue_cost += policy.reissue_cost;
        }
        week.net_savings = week.fraud_prevented as i64 - week.reissue_cost as i64;
        cumulative += week.net_savings;
        week.cumulative_net = cumulative;
        report.weeks.push(week);
    }
    report
}

/// Runs the detector for each week in `weeks` on transactions strictly
/// before that week starts. Weeks without candidates get an empty snapshot.
pub fn weekly_snapshots(
    transactions: &[TransactionRecord],
    weeks: Range<i64>,
    prior: &PriorParams,
    min_fraud_cards: usize,
) -> Result<Vec<WeeklySnapshot>, EvalError> {
    let mut out = Vec::new();
    for week in weeks {
        let cutoff = week_start(week);
        let visible = transactions.iter().filter(|r| r.timestamp < cutoff);
        let theta = match build_graph(visible, min_fraud_cards) {
            Ok(graph) => {
                let detection = detector::run(&graph, prior)?;
                graph
                    .location_keys()
                    .iter()
                    .cloned()
                    .zip(detection.theta.into_inner())
                    .collect()
            }
            Err(GraphError::NoCandidates { .. }) => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        out.push(WeeklySnapshot { week, theta });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SECONDS_PER_WEEK;
    use crate::synth::fixtures::{savings_example, SAVINGS_POC_WEEK};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snapshot(week: i64, entries: &[(&str, i64, f64)]) -> WeeklySnapshot {
        WeeklySnapshot {
            week,
            theta: entries
                .iter()
                .map(|&(t, w, th)| (LocationBucket::new(t, w), th))
                .collect(),
        }
    }

    #[test]
    fn three_card_accounting() {
        let snaps = [snapshot(
            SAVINGS_POC_WEEK + 1,
            &[("poc", SAVINGS_POC_WEEK, 0.2), ("bakery", SAVINGS_POC_WEEK, 0.05)],
        )];
        let report = savings_simulation(&snaps, &savings_example(), &SavingsPolicy::default());
        assert_eq!(report.cards_reissued(), 3);
        assert_eq!(report.fraud_prevented(), 15_000);
        assert_eq!(report.reissue_cost(), 3_000);
        assert_eq!(report.net_savings(), 12_000);
        assert_eq!(report.victim_share(), Some(1.0));
    }

    #[test]
    fn vacuous_threshold() {
        let snaps = [snapshot(SAVINGS_POC_WEEK + 1, &[("poc", SAVINGS_POC_WEEK, 0.2)])];
        let policy = SavingsPolicy {
            theta_threshold: 1.0,
            reissue_cost: 1_000,
        };
        let report = savings_simulation(&snaps, &savings_example(), &policy);
        assert_eq!((report.cards_reissued(), report.reissue_cost(), report.net_savings()), (0, 0, 0));
        assert_eq!(report.victim_share(), None);
    }

    #[test]
    fn late_decision_prevents_nothing() {
        // decided after the fraud already happened
        let snaps = [snapshot(SAVINGS_POC_WEEK + 4, &[("poc", SAVINGS_POC_WEEK, 0.2)])];
        let report = savings_simulation(&snaps, &savings_example(), &SavingsPolicy::default());
        assert_eq!(report.net_savings(), -3_000);
    }

    #[test]
    fn cards_are_reissued_once() {
        let snaps = [
            snapshot(SAVINGS_POC_WEEK + 2, &[("poc", SAVINGS_POC_WEEK, 0.3)]),
            snapshot(SAVINGS_POC_WEEK + 1, &[("poc", SAVINGS_POC_WEEK, 0.2)]),
        ];
        let report = savings_simulation(&snaps, &savings_example(), &SavingsPolicy::default());
        assert_eq!(report.weeks[0].cards_reissued, 3);
        assert_eq!(report.weeks[1].cards_reissued, 0);
        assert_eq!(report.net_savings(), 12_000);
        assert_eq!(report.to_csv().lines().count(), 3);
    }

    /// Walks every transaction in time order with an explicit reissue log.
    fn replay(snaps: &[WeeklySnapshot], txs: &[TransactionRecord], policy: &SavingsPolicy) -> i64 {
        let mut snaps: Vec<_> = snaps.iter().collect();
        snaps.sort_by_key(|s| s.week);
        let mut reissued_at: HashMap<String, i64> = HashMap::new();
        for s in &snaps {
            let at = week_start(s.week);
            for r in txs {
                if r.timestamp < at
                    && s.theta.get(&r.bucket()).is_some_and(|&t| t > policy.theta_threshold)
                {
                    reissued_at.entry(r.card_id.clone()).or_insert(at);
                }
            }
        }
        let mut net = -(reissued_at.len() as i64 * policy.reissue_cost as i64);
        for r in txs {
            if r.is_fraud && reissued_at.get(&r.card_id).is_some_and(|&at| r.timestamp >= at) {
                net += r.amount as i64;
            }
        }
        net
    }

    #[test]
    fn matches_transaction_replay() {
        let base = week_start(2_400);
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let txs: Vec<TransactionRecord> = (0..60)
                .map(|_| {
                    TransactionRecord::new(
                        format!("c{}", rng.random_range(0..12)),
                        format!("t{}", rng.random_range(0..4)),
                        base + rng.random_range(0..6 * SECONDS_PER_WEEK),
                        rng.random_range(1..10_000),
                        rng.random_bool(0.2),
                    )
                })
                .collect();
            let snaps: Vec<WeeklySnapshot> = (1..6)
                .map(|k| WeeklySnapshot {
                    week: 2_400 + k,
                    theta: (0..4)
                        .flat_map(|t| (0..k).map(move |w| (t, 2_400 + w)))
                        .map(|(t, w)| (LocationBucket::new(format!("t{t}"), w), rng.random::<f64>() * 0.3))
                        .collect(),
                })
                .collect();
            let policy = SavingsPolicy {
                theta_threshold: 0.2,
                reissue_cost: 700,
            };
            let report = savings_simulation(&snaps, &txs, &policy);
            assert_eq!(report.net_savings(), replay(&snaps, &txs, &policy), "seed {seed}");
            for w in &report.weeks {
                assert_eq!(w.net_savings, w.fraud_prevented as i64 - w.reissue_cost as i64);
            }
        }
    }

    #[test]
    fn snapshots_never_look_ahead() {
        let txs = savings_example();
        let prior = PriorParams::default();
        let snaps = weekly_snapshots(&txs, SAVINGS_POC_WEEK..SAVINGS_POC_WEEK + 4, &prior, 1).unwrap();
        assert_eq!(snaps.len(), 4);
        // no fraud is visible until the week after it happens
        assert!(snaps[0].theta.is_empty() && snaps[1].theta.is_empty() && snaps[2].theta.is_empty());
        for bucket in snaps[3].theta.keys() {
            assert!(bucket.week_index < SAVINGS_POC_WEEK + 3);
        }
        assert!(!snaps[3].theta.is_empty());
    }
}
