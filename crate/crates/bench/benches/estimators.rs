use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use homodyne_core::{
    covariance, covariance_two_pass, difference_variance, sample_trace_pair, PairMoments,
    SimulationConfig,
};

fn estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimators");
    for n in [10_000usize, 1_000_000] {
        let traces = sample_trace_pair(&SimulationConfig {
            n_samples: n,
            ..SimulationConfig::default()
        })
        .unwrap();
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(
            BenchmarkId::new("covariance_one_pass", n),
            &traces,
            |b, t| b.iter(|| covariance(t).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("covariance_two_pass", n),
            &traces,
            |b, t| b.iter(|| covariance_two_pass(t).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("difference_variance", n),
            &traces,
            |b, t| b.iter(|| difference_variance(t).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("moments_sequential", n),
            &traces,
            |b, t| b.iter(|| PairMoments::from_samples(t.samples())),
        );
    }
    group.finish();
}

criterion_group!(benches, estimators);
criterion_main!(benches);
