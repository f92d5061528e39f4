use criterion::{criterion_group, criterion_main, Criterion};
use tvbma::crossval::PreparedEnsemble;
use tvbma::{generate_synthetic_ensemble, ExperimentConfig, SyntheticEnsembleSpec};

fn weighting(c: &mut Criterion) {
    let ens = generate_synthetic_ensemble(&SyntheticEnsembleSpec::default()).unwrap();
    let config = ExperimentConfig {
        trend_mc: 10_000,
        var_mc: 10_000,
        ..Default::default()
    };
    let prepared = PreparedEnsemble::new(&ens.dataset, &config).unwrap();
    let observed = &prepared.calibration[0];

    let mut g = c.benchmark_group("weights_k12_n56");
    g.sample_size(10);
    g.bench_function("trend_10k", |b| {
        b.iter(|| prepared.trend_log_weights(observed, &config, 1.0, 1).unwrap())
    });
    g.bench_function("variability_10k", |b| {
        b.iter(|| prepared.var_log_weights(observed, &config, 1.0, 1).unwrap())
    });
    g.finish();
}

criterion_group!(benches, weighting);
criterion_main!(benches);
