use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use diachron_core::analysis::{build_atlas, Params};
use diachron_core::concepts::reference_concepts;
use diachron_core::diachronic::{feature_drifts_with, view};
use diachron_core::store::{corpora, load_store_with, write_store, RecordFilter};
use diachron_core::synth::{generate, SynthSpec};
use diachron_core::Exec;

fn strategies() -> Vec<(&'static str, Exec)> {
    let mut out = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    out.push(("parallel", Exec::Parallel));
    out
}

fn engine(c: &mut Criterion) {
    let spec = SynthSpec::new(7, 262_144, 64, 20_000, reference_concepts());
    let records = generate(&spec);
    let years: Vec<i32> = (spec.year_min..=spec.year_max).collect();
    let refs = view(&records);
    let cs = corpora(&records);
    let concepts = reference_concepts();
    let params = Params::default();
    let dir = tempfile::tempdir().expect("tempdir");
    write_store(dir.path(), &spec.manifest("bench"), &records).expect("write store");

    let mut group = c.benchmark_group("engine");
    group.sample_size(10);
    for (name, exec) in strategies() {
        group.bench_with_input(BenchmarkId::new("feature_drifts", name), &exec, |b, &exec| {
            b.iter(|| feature_drifts_with(&refs, &years, exec))
        });
        group.bench_with_input(BenchmarkId::new("atlas", name), &exec, |b, &exec| {
            b.iter(|| build_atlas(&refs, &concepts, &cs, &years, &params, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("load_store", name), &exec, |b, &exec| {
            b.iter(|| load_store_with(dir.path(), &RecordFilter::all(), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);
