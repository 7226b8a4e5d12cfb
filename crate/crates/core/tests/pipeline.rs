//! End-to-end behaviour of the stage runner on a small synthetic corpus.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use firmpanel::config::PipelineConfig;
use firmpanel::pipeline::{Pipeline, Stage};
use firmpanel::synth::{self, CorpusPlan};
use firmpanel::Error;

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn config(corpus: &synth::Corpus, out: &Path, workers: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&corpus.config).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg.workers = workers;
    cfg
}

fn small_corpus(dir: &Path) -> synth::Corpus {
    synth::generate(
        &CorpusPlan {
            n_firms: 150,
            seed: 7,
            ..CorpusPlan::default()
        },
        dir,
    )
    .unwrap()
}

#[test]
fn output_is_identical_for_any_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let mut trees = Vec::new();
    for workers in [1, 3] {
        let out = tmp.path().join(format!("out_{workers}"));
        Pipeline::new(config(&corpus, &out, workers))
            .unwrap()
            .run_all()
            .unwrap();
        trees.push(tree(&out));
    }
    assert!(!trees[0].is_empty());
    assert_eq!(trees[0], trees[1]);
}

#[test]
fn rerunning_a_stage_rewrites_the_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let out = tmp.path().join("out");
    let p = Pipeline::new(config(&corpus, &out, 1)).unwrap();
    p.run_all().unwrap();
    let first = tree(&out);
    for stage in [
        Stage::Impute,
        Stage::Articulate,
        Stage::Assemble,
        Stage::Report,
    ] {
        p.run(stage).unwrap();
    }
    assert_eq!(first, tree(&out));
}

#[test]
fn stage_without_its_inputs_reports_a_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let p = Pipeline::new(config(&corpus, &tmp.path().join("empty"), 1)).unwrap();
    let err = p.run(Stage::Impute).unwrap_err();
    assert!(matches!(err, Error::MissingInput(_)), "{err:?}");
}

#[test]
fn zero_workers_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let err = Pipeline::new(config(&corpus, &tmp.path().join("out"), 0)).unwrap_err();
    assert_eq!(err.code(), "CONFIG_INVALID");
}
