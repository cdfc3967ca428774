//! Compares the rayon and sequential implementations of the data-parallel
//! inner loops: per-point audit evidence and per-item batch gradients.
//! Both paths produce identical results; only throughput differs.

use capify_core::audit::{is_capi_unfair, SearchBudget};
use capify_core::classifier::{ClassifierModel, ModelSpec};
use capify_core::data::gen_dataset;
use capify_core::metric::MetricConfig;
use capify_core::par;
use capify_core::scm::builtin;
use capify_core::train::{train, TrainConfig, TrainerKind};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn audit_search(c: &mut Criterion) {
    let scm = builtin::by_name("nlm").unwrap();
    let mcfg = MetricConfig::default();
    let (_, ds) = gen_dataset("nlm", 128, 7).unwrap();
    let model =
        ClassifierModel::init(ModelSpec::Mlp { input_dim: 3, hidden: vec![32, 32] }, 3).unwrap();
    let budget = SearchBudget { restarts: 1, pgd_steps: 10 };

    let run = |v: &capify_core::scm::Instance| {
        is_capi_unfair(&model, &scm, &mcfg, v, 0.05, budget, 11).unwrap()
    };

    let mut group = c.benchmark_group("audit_search_128pts");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", "rayon"), |b| {
        b.iter(|| par::map_collect_par(&ds.instances, run))
    });
    group.bench_function(BenchmarkId::new("sequential", "iter"), |b| {
        b.iter(|| par::map_collect_seq(&ds.instances, run))
    });
    group.finish();
}

fn batch_gradients(c: &mut Criterion) {
    let (_, ds) = gen_dataset("loan", 256, 5).unwrap();
    let model = ClassifierModel::init(ModelSpec::default_mlp(7), 9).unwrap();
    let items: Vec<(Vec<f64>, f64)> = ds
        .instances
        .iter()
        .zip(&ds.labels)
        .map(|(v, y)| (v.values.clone(), *y))
        .collect();
    let grad = |item: &(Vec<f64>, f64)| model.loss_and_param_grad(&item.0, item.1).1;

    let mut group = c.benchmark_group("batch_gradients_256x7_mlp100");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", "rayon"), |b| {
        b.iter(|| par::map_collect_par(&items, grad))
    });
    group.bench_function(BenchmarkId::new("sequential", "iter"), |b| {
        b.iter(|| par::map_collect_seq(&items, grad))
    });
    group.finish();
}

fn capify_epoch(c: &mut Criterion) {
    let (scm, ds) = gen_dataset("nlm", 200, 3).unwrap();
    let mcfg = MetricConfig::default();
    let mut cfg = TrainConfig::new(TrainerKind::Capify);
    cfg.epochs = 1;
    let spec = ModelSpec::Mlp { input_dim: 3, hidden: vec![32, 32] };

    let mut group = c.benchmark_group("capify_one_epoch_200pts");
    group.sample_size(10);
    // The training loop dispatches through the feature-selected map, so
    // this target reflects whichever implementation the build enables.
    group.bench_function("train", |b| {
        b.iter(|| train(&ds, &scm, &mcfg, spec.clone(), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, audit_search, batch_gradients, capify_epoch);
criterion_main!(benches);
