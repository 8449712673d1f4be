use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use poc_core::detector::{Detector, Execution, PriorParams};
use poc_core::engine;
use poc_core::synth::fixtures::{random_graph, RandomGraphConfig};

const ITERATIONS: usize = 5;

fn fixed_rounds() -> PriorParams {
    PriorParams::default()
        .with_epsilon(f64::MIN_POSITIVE)
        .with_max_iterations(ITERATIONS)
}

fn execution_modes(c: &mut Criterion) {
    let mut group = c.benchmark_group("detector_5_iterations");
    group.sample_size(10);
    let prior = fixed_rounds();
    for edges in [100_000usize, 1_000_000] {
        let g = random_graph(&RandomGraphConfig::with_edges(edges, 1));
        for (name, execution) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            let det = Detector::new(&g).unwrap().with_execution(execution);
            group.bench_with_input(BenchmarkId::new(name, edges), &det, |b, det| {
                b.iter(|| det.run(&prior).unwrap())
            });
        }
        for workers in [1usize, 2, 4] {
            group.bench_with_input(BenchmarkId::new(format!("engine_w{workers}"), edges), &g, |b, g| {
                b.iter(|| engine::run(g, &prior, workers).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, execution_modes);
criterion_main!(benches);
