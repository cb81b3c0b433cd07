use std::path::Path;

use llm4ng::embed::EmbedderConfig;
use llm4ng::graph::{synth_dataset, write_dataset, SynthParams};
use llm4ng::pipeline::{
    emit_report, mean_std, read_json_report, sweep, DatasetConfig, ExperimentConfig, Method, ReportFormat, Runner,
    SweepGrid,
};
use llm4ng::Error;

fn write_synth(dir: &Path, nodes_per_class: usize) {
    let d = synth_dataset(&SynthParams {
        num_classes: 3,
        nodes_per_class,
        vocab_per_class: 30,
        intra_edge_prob: 0.05,
        inter_edge_prob: 0.002,
        seed: 5,
    })
    .unwrap();
    write_dataset(dir, &d.graph, &d.labels).unwrap();
    std::fs::write(dir.join("vocab.json"), serde_json::to_vec(&d.class_vocab).unwrap()).unwrap();
}

fn config(dir: &Path, k: usize, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetConfig::in_dir("toy", dir), k);
    cfg.embedder = EmbedderConfig::fallback(256, 0);
    cfg.val_size = 30;
    cfg.test_size = 60;
    cfg.seeds = seeds;
    cfg.edge_predictor.epochs = 60;
    cfg.train.max_epochs = 200;
    cfg
}

#[test]
fn zero_shot_supervision_is_generated_nodes_only() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let r = Runner::new().run_llm4ng(&config(dir.path(), 0, vec![1, 2])).unwrap();
    assert_eq!(r.method, Method::Llm4ng);
    for run in &r.runs {
        assert_eq!(run.labeled_nodes, 30);
        assert_eq!(run.generated_nodes, 30);
        assert_eq!(run.inserted_edges, 300.min(run.candidates));
    }
}

#[test]
fn labeled_set_is_k_plus_m_per_class() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let mut cfg = config(dir.path(), 2, vec![3]);
    cfg.m_per_class = 4;
    let r = Runner::new().run_llm4ng(&cfg).unwrap();
    assert_eq!(r.runs[0].labeled_nodes, (2 + 4) * 3);
}

#[test]
fn without_edges_shares_everything_but_edges() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let mut runner = Runner::new();
    let cfg = config(dir.path(), 1, vec![1, 2]);
    let with = runner.run_llm4ng(&cfg).unwrap();
    let without = runner.run_llm4ng(&ExperimentConfig { without_edges: true, ..cfg }).unwrap();
    assert_eq!(without.method, Method::Llm4ngWithoutEdges);
    assert_eq!(without.method.label(), "LLM4NG w/o A");
    for (a, b) in with.runs.iter().zip(&without.runs) {
        assert_eq!(a.hashes.split, b.hashes.split);
        assert_eq!(a.hashes.samples, b.hashes.samples);
        assert_eq!(a.hashes.embeddings, b.hashes.embeddings);
        assert_ne!(a.hashes.edges, b.hashes.edges);
        assert_eq!(b.inserted_edges, 0);
        assert!(a.inserted_edges > 0);
    }
}

#[test]
fn five_seeds_give_five_runs_and_consistent_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let r = Runner::new().run_llm4ng(&config(dir.path(), 1, (1..=5).collect())).unwrap();
    assert_eq!(r.runs.len(), 5);
    let (mean, std) = mean_std(&r.accuracies());
    assert!((mean - r.mean).abs() < 1e-12 && (std - r.std).abs() < 1e-12);
}

#[test]
fn baseline_needs_shots_and_learns_separable_graph() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let err = Runner::new().run_baseline(&config(dir.path(), 0, vec![1])).unwrap_err();
    assert!(matches!(err, Error::NoLabeledNodes));
    let r = Runner::new().run_baseline(&config(dir.path(), 5, (1..=3).collect())).unwrap();
    assert_eq!(r.method, Method::Baseline);
    assert!(r.runs.iter().all(|s| s.generated_nodes == 0 && s.labeled_nodes == 15));
    assert!(r.mean >= 0.9, "baseline accuracy {}", r.mean);
}

#[test]
fn identical_runs_serialize_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let cfg = config(dir.path(), 1, vec![1, 2]);
    let a = serde_json::to_vec(&Runner::new().run_llm4ng(&cfg).unwrap()).unwrap();
    let b = serde_json::to_vec(&Runner::new().run_llm4ng(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_dataset_names_the_stage() {
    let cfg = config(Path::new("/nonexistent/dataset"), 1, vec![1]);
    let err = Runner::new().run_llm4ng(&cfg).unwrap_err();
    assert!(err.to_string().starts_with("stage `load` failed"), "{err}");
}

#[test]
fn reports_round_trip_and_aggregate_correctly() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let r = Runner::new().run_llm4ng(&config(dir.path(), 1, (1..=5).collect())).unwrap();
    let results = vec![r];

    let json = dir.path().join("report.json");
    emit_report(&results, ReportFormat::Json, &json).unwrap();
    let parsed = read_json_report(&json).unwrap();
    assert_eq!(parsed.results, results);

    let csv_path = dir.path().join("report.csv");
    emit_report(&results, ReportFormat::Csv, &csv_path).unwrap();
    let body = std::fs::read_to_string(&csv_path).unwrap();
    let sections: Vec<&str> = body.split("\n\n").collect();
    assert_eq!(sections.len(), 2);
    let detail: Vec<&str> = sections[0].lines().collect();
    let aggregate: Vec<&str> = sections[1].lines().collect();
    assert_eq!(detail[0], "dataset,arch,K,M,delta,k_mult,template,without_edges,seed,accuracy");
    assert_eq!(detail.len(), 1 + 5);
    assert_eq!(aggregate[0], "dataset,arch,K,M,delta,k_mult,template,without_edges,mean,std,runs");
    assert_eq!(aggregate.len(), 1 + 1);
    let accs: Vec<f64> = detail[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let stored_mean: f64 = aggregate[1].split(',').nth(8).unwrap().parse().unwrap();
    let recomputed = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((recomputed - stored_mean).abs() < 1e-12);

    assert!(emit_report(&[], ReportFormat::Csv, &csv_path).is_err());
}

#[test]
fn finished_sweep_resumes_without_executing() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let mut base = config(dir.path(), 1, vec![1, 2]);
    base.artifacts_dir = Some(dir.path().join("artifacts"));
    let grid = SweepGrid { delta: Some(vec![0.1, 0.2, 0.3]), ..Default::default() };

    let mut runner = Runner::new();
    let first = sweep(&mut runner, &grid, &base).unwrap();
    assert_eq!((first.executed, first.skipped, first.results.len()), (3, 0, 3));
    assert!(first.failures.is_empty());

    let mut fresh = Runner::new();
    let again = sweep(&mut fresh, &grid, &base).unwrap();
    assert_eq!((again.executed, again.skipped), (0, 3));
    assert_eq!(fresh.executions, 0);
    assert_eq!(again.results, first.results);
}

#[test]
fn failing_cell_does_not_abort_sweep() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), 60);
    let base = config(dir.path(), 1, vec![1]);
    // 60 shots per class leaves nothing for val and test.
    let grid = SweepGrid { k_shot: Some(vec![1, 60, 2]), ..Default::default() };
    let out = sweep(&mut Runner::new(), &grid, &base).unwrap();
    assert_eq!(out.executed, 2);
    assert_eq!(out.failures.len(), 1);
    assert!(out.failures[0].error.contains("split"), "{}", out.failures[0].error);
}
