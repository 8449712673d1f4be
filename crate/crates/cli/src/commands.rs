//! One function per subcommand.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use poc_core::baselines::{linearized_bp_score, LinearizedBp};
use poc_core::detector::PriorParams;
use poc_core::engine::{self, time_per_iteration, timings_csv};
use poc_core::eval::{
    convergence_report, curve_csv, linear_fit, missing_pocs, result_stem, savings_simulation, score_ranking,
    truth_labels, weekly_snapshots, SavingsPolicy,
};
use poc_core::graph::{
    build_graph, read_snapshot, read_transactions, week_index, write_snapshot, write_transactions, ErrorPolicy,
    GraphError,
};
use poc_core::synth::fixtures::{random_graph, RandomGraphConfig};
use poc_core::synth::{generate_corpus, inject_pocs, GeneratorConfig, GroundTruth, InjectionConfig};
use poc_core::{BipartiteGraph, Method, RankedLocations, TransactionRecord};
use serde_json::{json, Value};

use crate::args::*;
use crate::output::{read_input, OutputDir};
use crate::CliError;

type Inputs = BTreeMap<String, String>;

fn settings<T: serde::Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn prior(args: &PriorArgs) -> Result<PriorParams, CliError> {
    let p = PriorParams::new(args.alpha, args.beta)
        .with_epsilon(args.epsilon)
        .with_max_iterations(args.max_iter);
    p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(p)
}

fn bp(args: &BpArgs) -> LinearizedBp {
    LinearizedBp {
        coupling: args.coupling,
        clamp: !args.no_clamp,
    }
}

fn load_graph(path: &std::path::Path, inputs: &mut Inputs) -> Result<BipartiteGraph, CliError> {
    let bytes = read_input(path, inputs)?;
    read_snapshot(bytes.as_slice()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_transactions(
    path: &std::path::Path,
    schema: &SchemaArgs,
    policy: ErrorPolicy,
    inputs: &mut Inputs,
) -> Result<(Vec<TransactionRecord>, usize), CliError> {
    let bytes = read_input(path, inputs)?;
    let outcome = read_transactions(bytes.as_slice(), &schema.schema(), policy)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for skipped in &outcome.skipped {
        eprintln!("warning: {}: skipped {skipped}", path.display());
    }
    Ok((outcome.records, outcome.skipped.len()))
}

fn transactions_csv(records: &[TransactionRecord]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_transactions(&mut buf, records).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(buf)
}

/// `location_key,theta,z,n_neighbors,n_fraud_neighbors` in ranking order;
/// `z` is left empty when the method has none.
fn locations_csv(graph: &BipartiteGraph, ranking: &RankedLocations, z: Option<&[f64]>) -> String {
    let mut out = String::from("location_key,theta,z,n_neighbors,n_fraud_neighbors\n");
    for e in ranking.entries() {
        let j = e.location;
        let z = z.map(|z| z[j].to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            graph.location_key(j),
            e.score,
            z,
            graph.location_degree(j),
            graph.fraud_neighbor_count(j)
        );
    }
    out
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let config = GeneratorConfig {
        num_cards: args.cards,
        num_terminals: args.terminals,
        weeks: args.weeks,
        transactions_per_card: args.tx_per_card,
        terminal_popularity: args.popularity,
        seed: args.seed,
        favorites_per_card: args.favorites,
        favorite_share: args.favorite_share,
        regions: args.regions,
        start_week: args.start_week,
        ..GeneratorConfig::default()
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let corpus = generate_corpus(&config).map_err(|e| CliError::Data(e.to_string()))?;
    let mut out = OutputDir::create(&args.output.out)?;
    out.write("transactions.csv", &transactions_csv(&corpus)?)?;
    out.commit(
        "generate",
        settings(args),
        Inputs::new(),
        json!({ "transactions": corpus.len() }),
    )
}

pub fn inject(args: &InjectArgs) -> Result<(), CliError> {
    let config = InjectionConfig {
        num_pocs: args.pocs,
        steal_probability: args.steal_probability,
        noise_multiplier: args.noise,
        seed: args.seed,
        min_poc_cards: args.min_poc_cards,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut inputs = Inputs::new();
    let (corpus, _) = load_transactions(&args.input, &args.schema, ErrorPolicy::Abort, &mut inputs)?;
    let injected = inject_pocs(&corpus, &config).map_err(|e| CliError::Data(e.to_string()))?;
    let mut out = OutputDir::create(&args.output.out)?;
    out.write("transactions.csv", &transactions_csv(&injected.corpus)?)?;
    out.write_json("ground_truth.json", &injected.truth)?;
    out.commit(
        "inject",
        settings(args),
        inputs,
        json!({
            "pocs": injected.truth.pocs.len(),
            "stolen_cards": injected.truth.stolen_cards(),
            "noise_cards": injected.truth.noise_cards(),
        }),
    )
}

pub fn ingest(args: &IngestArgs) -> Result<(), CliError> {
    if args.min_fraud_cards == 0 {
        return Err(CliError::Usage(GraphError::ZeroMinFraudCards.to_string()));
    }
    let policy = if args.skip_bad_rows { ErrorPolicy::Skip } else { ErrorPolicy::Abort };
    let mut inputs = Inputs::new();
    let (records, skipped) = load_transactions(&args.input, &args.schema, policy, &mut inputs)?;
    let graph = build_graph(&records, args.min_fraud_cards).map_err(|e| CliError::Data(e.to_string()))?;
    let mut snapshot = Vec::new();
    write_snapshot(&graph, &mut snapshot).map_err(|e| CliError::Data(e.to_string()))?;
    let mut out = OutputDir::create(&args.output.out)?;
    out.write("graph.bin", &snapshot)?;
    out.write_json("stats.json", &graph.stats())?;
    out.commit(
        "ingest",
        settings(args),
        inputs,
        json!({ "transactions": records.len(), "skipped_rows": skipped, "graph": graph.stats() }),
    )
}

pub fn detect(args: &DetectArgs) -> Result<(), CliError> {
    let prior = prior(&args.prior)?;
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let mut inputs = Inputs::new();
    let graph = load_graph(&args.graph, &mut inputs)?;
    let (detection, timings) =
        engine::run(&graph, &prior, args.workers).map_err(|e| CliError::Data(e.to_string()))?;
    let z = detection.blames.location_sums();

    let mut out = OutputDir::create(&args.output.out)?;
    out.write("locations.csv", locations_csv(&graph, &detection.ranking(), Some(&z)).as_bytes())?;
    out.write("convergence.csv", convergence_report(&detection.trace).as_bytes())?;
    if args.blames {
        let mut csv = String::from("card_id,location_key,blame\n");
        for (i, j, b) in detection.blames.iter() {
            if b >= args.min_blame {
                let _ = writeln!(csv, "{},{},{}", graph.card_id(i), graph.location_key(j), b);
            }
        }
        out.write("blames.csv", csv.as_bytes())?;
    }
    out.write_timing("timings.csv", timings_csv(&timings).as_bytes())?;
    let residual = detection.trace.last().unwrap_or(0.0);
    out.commit(
        "detect",
        settings(args),
        inputs,
        json!({
            "converged": detection.converged,
            "iterations": detection.iterations(),
            "final_residual": residual,
            "graph": graph.stats(),
        }),
    )?;
    if !detection.converged {
        eprintln!(
            "warning: no convergence within {} iterations (last l1 residual {residual:e}); results are the last iterate",
            detection.iterations()
        );
        if args.strict {
            return Err(CliError::NotConverged {
                iterations: detection.iterations(),
                residual,
            });
        }
    }
    Ok(())
}

pub fn baseline(args: &BaselineArgs) -> Result<(), CliError> {
    if args.method == Method::BreachRadar {
        return Err(CliError::Usage("breachradar is not a baseline; use `detect`".into()));
    }
    let mut inputs = Inputs::new();
    let graph = load_graph(&args.graph, &mut inputs)?;
    let mut summary = json!({ "graph": graph.stats() });
    let ranking = if args.method == Method::LinearizedBp {
        let outcome = linearized_bp_score(&graph, bp(&args.bp)).map_err(|e| CliError::Data(e.to_string()))?;
        summary["coupling"] = json!(outcome.coupling);
        summary["sweeps"] = json!(outcome.sweeps);
        outcome.ranking
    } else {
        let prior = PriorParams::new(args.alpha, args.beta);
        prior.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        args.method
            .rank(&graph, &prior, bp(&args.bp))
            .map_err(|e| CliError::Data(e.to_string()))?
    };
    let mut out = OutputDir::create(&args.output.out)?;
    out.write("locations.csv", locations_csv(&graph, &ranking, None).as_bytes())?;
    out.commit("baseline", settings(args), inputs, summary)
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let prior = prior(&args.prior)?;
    let methods = if args.method.is_empty() { Method::ALL.to_vec() } else { args.method.clone() };
    let mut inputs = Inputs::new();
    let graph = load_graph(&args.graph, &mut inputs)?;
    let truth_bytes = read_input(&args.truth, &mut inputs)?;
    let truth: GroundTruth = serde_json::from_slice(&truth_bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.truth.display())))?;
    let labels = truth_labels(&graph, &truth, args.matching.into());
    let cfg = &truth.injection;

    let mut out = OutputDir::create(&args.output.out)?;
    let mut rows = Vec::new();
    let mut table = String::from("method,auc,average_precision,positives,negatives\n");
    for method in methods {
        let stem = result_stem(method, cfg.steal_probability, cfg.noise_multiplier, cfg.seed);
        let ranking = if method == Method::BreachRadar {
            let detection =
                poc_core::detector::run(&graph, &prior).map_err(|e| CliError::Data(e.to_string()))?;
            out.write(&format!("{stem}_convergence.csv"), convergence_report(&detection.trace).as_bytes())?;
            detection.ranking()
        } else {
            method
                .rank(&graph, &prior, bp(&args.bp))
                .map_err(|e| CliError::Data(e.to_string()))?
        };
        let card = score_ranking(&ranking, &labels).map_err(|e| CliError::Data(e.to_string()))?;
        out.write(&format!("{stem}_curve.csv"), curve_csv(&card.curve).as_bytes())?;
        let _ = writeln!(
            table,
            "{method},{},{},{},{}",
            card.auc, card.average_precision, card.positives, card.negatives
        );
        rows.push(json!({
            "method": method.name(),
            "file_stem": stem,
            "auc": card.auc,
            "average_precision": card.average_precision,
            "positives": card.positives,
            "negatives": card.negatives,
            "operating_point_p90": card.operating_point(0.9),
        }));
    }
    let missing = missing_pocs(&graph, &truth);
    let summary = json!({
        "steal_probability": cfg.steal_probability,
        "noise_multiplier": cfg.noise_multiplier,
        "seed": cfg.seed,
        "injected": truth.pocs.len(),
        "missing_from_candidates": missing.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "methods": rows,
    });
    out.write("summary.csv", table.as_bytes())?;
    out.write_json("summary.json", &summary)?;
    out.commit("eval", settings(args), inputs, json!({ "methods": summary["methods"].clone() }))
}

pub fn savings(args: &SavingsArgs) -> Result<(), CliError> {
    let prior = prior(&args.prior)?;
    if args.min_fraud_cards == 0 {
        return Err(CliError::Usage(GraphError::ZeroMinFraudCards.to_string()));
    }
    let mut inputs = Inputs::new();
    let (records, _) = load_transactions(&args.input, &args.schema, ErrorPolicy::Abort, &mut inputs)?;
    let (Some(first), Some(last)) = (
        records.iter().map(|r| r.timestamp).min(),
        records.iter().map(|r| r.timestamp).max(),
    ) else {
        return Err(CliError::Data(format!("{} has no transactions", args.input.display())));
    };
    let from = args.from_week.unwrap_or(week_index(first) + 1);
    let to = args.to_week.unwrap_or(week_index(last) + 1);
    if from > to {
        return Err(CliError::Usage(format!("--from-week {from} is after --to-week {to}")));
    }
    let snapshots = weekly_snapshots(&records, from..to + 1, &prior, args.min_fraud_cards)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let policy = SavingsPolicy {
        theta_threshold: args.threshold,
        reissue_cost: args.cost,
    };
    let report = savings_simulation(&snapshots, &records, &policy);
    let totals = json!({
        "cards_reissued": report.cards_reissued(),
        "reissue_cost": report.reissue_cost(),
        "fraud_prevented": report.fraud_prevented(),
        "net_savings": report.net_savings(),
        "victim_share": report.victim_share(),
    });
    let mut out = OutputDir::create(&args.output.out)?;
    out.write("savings.csv", report.to_csv().as_bytes())?;
    out.write_json("savings.json", &json!({ "weeks": report.weeks, "totals": totals }))?;
    out.commit("savings", settings(args), inputs, totals)
}

pub fn bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.edges.is_empty() || args.workers.is_empty() || args.workers.contains(&0) || args.iterations == 0 {
        return Err(CliError::Usage(
            "bench needs at least one edge count, positive worker counts and --iterations >= 1".into(),
        ));
    }
    let mut out = OutputDir::create(&args.output.out)?;
    let mut scaling = String::from("edges,worker_count,millis_per_iteration\n");
    let mut series: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for &edges in &args.edges {
        let graph = random_graph(&RandomGraphConfig::with_edges(edges, args.seed));
        for &workers in &args.workers {
            let mut best = f64::INFINITY;
            let mut best_timings = Vec::new();
            for _ in 0..args.repeats.max(1) {
                let (millis, timings) = time_per_iteration(&graph, workers, args.iterations)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                if millis < best {
                    best = millis;
                    best_timings = timings;
                }
            }
            let e = graph.num_edges();
            eprintln!("edges {e} workers {workers}: {best:.3} ms/iteration");
            let _ = writeln!(scaling, "{e},{workers},{best}");
            out.write_timing(&format!("timings_e{edges}_w{workers}.csv"), timings_csv(&best_timings).as_bytes())?;
            let s = series.entry(workers).or_default();
            s.0.push((e as f64).ln());
            s.1.push(best.ln());
        }
    }
    let fits: Vec<Value> = series
        .iter()
        .map(|(w, (x, y))| {
            let fit = linear_fit(x, y);
            json!({
                "worker_count": w,
                "log_log_slope": fit.map(|f| f.slope),
                "r_squared": fit.map(|f| f.r_squared),
            })
        })
        .collect();
    out.write_timing("scaling.csv", scaling.as_bytes())?;
    out.write_timing("scaling.json", serde_json::to_string_pretty(&fits).unwrap_or_default().as_bytes())?;
    out.commit("bench", settings(args), Inputs::new(), json!({ "fits": fits }))
}
