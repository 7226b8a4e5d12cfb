//! Sequential vs parallel runs of the heavier stages on a synthetic corpus.
//! Build with `--no-default-features` to measure the rayon-free build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use firmpanel::articulate::articulate;
use firmpanel::config::PipelineConfig;
use firmpanel::model::HarmonizedStatement;
use firmpanel::pipeline::{Pipeline, Stage};
use firmpanel::synth::{self, CorpusPlan};
use firmpanel::{store, Workers};

fn stages(c: &mut Criterion) {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth::generate(
        &CorpusPlan {
            n_firms: 2000,
            seed: 1,
            ..CorpusPlan::default()
        },
        tmp.path(),
    )
    .unwrap();
    let threads = std::thread::available_parallelism()
        .map_or(4, |n| n.get())
        .max(2);

    let mut group = c.benchmark_group("stages");
    group.sample_size(10);
    for workers in [1, threads] {
        let mut cfg = PipelineConfig::load(&corpus.config).unwrap();
        cfg.output_dir = tmp.path().join(format!("out_{workers}"));
        cfg.workers = workers;
        let p = Pipeline::new(cfg).unwrap();
        p.run_all().unwrap();
        for stage in [
            Stage::Ingest,
            Stage::Impute,
            Stage::Articulate,
            Stage::Assemble,
        ] {
            group.bench_with_input(BenchmarkId::new(stage.name(), workers), &stage, |b, s| {
                b.iter(|| p.run(*s).unwrap())
            });
        }
    }
    group.finish();

    let work = tmp.path().join("out_1/work");
    let statements: Vec<HarmonizedStatement> = store::read_statements(
        &work.join("statements.csv"),
        &work.join("statement_lines.csv"),
    )
    .unwrap();
    let mut group = c.benchmark_group("articulate_in_memory");
    for workers in [1, threads] {
        let pool = Workers::new(workers).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(workers), &statements, |b, s| {
            b.iter(|| pool.map_owned(s.clone(), articulate))
        });
    }
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
