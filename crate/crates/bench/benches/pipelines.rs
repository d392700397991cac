use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use fbg_tpe::{
    align_streams, assemble, reconstruct, simulate, train, BendingScenario, ConventionalOptions, Interpolation,
    NodeSelection, Preprocessing, SensorGeometry,
};

fn conventional(c: &mut Criterion) {
    let sim = fbg_tpe_bench::simulation(2.0);
    let frame = &sim.fbg[100];
    let mut group = c.benchmark_group("reconstruct");
    for segments in [100, 1000] {
        let opts = ConventionalOptions {
            n_segments: segments,
            ..ConventionalOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(segments), &opts, |b, opts| {
            b.iter(|| reconstruct(frame, &sim.estimator_geometry, opts).unwrap().tip())
        });
    }
    group.finish();
}

fn regression(c: &mut Criterion) {
    let ds = fbg_tpe_bench::dataset(60.0);
    let selection = NodeSelection::all(&ds.geometry);
    let mut group = c.benchmark_group("train");
    group.throughput(Throughput::Elements(ds.len() as u64));
    group.bench_function("assemble+solve", |b| {
        b.iter(|| train(&assemble(&ds.pairs, &selection, true, &Preprocessing::Raw).unwrap()).unwrap())
    });
    group.finish();
}

fn simulator(c: &mut Criterion) {
    let geom = SensorGeometry::nominal();
    let mut sc = BendingScenario::default();
    sc.duration = 5.0;
    c.bench_function("simulate 5s", |b| b.iter(|| simulate(&sc, &geom).unwrap()));
}

fn alignment(c: &mut Criterion) {
    let sim = fbg_tpe_bench::simulation(60.0);
    let tips = sim.registration.to_base(&sim.tracker, &sim.true_geometry).unwrap();
    c.bench_function("align 60s", |b| {
        b.iter_batched(
            || tips.clone(),
            |t| align_streams(&sim.fbg, &t, Interpolation::Linear).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, conventional, regression, simulator, alignment);
criterion_main!(benches);
