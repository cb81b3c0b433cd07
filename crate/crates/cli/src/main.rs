use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use llm4ng::embed::{
    assemble_representations, embed_texts, read_embeddings, write_embeddings, EmbedderConfig, EmbeddingMatrix,
    EmbeddingProvenance, Provider, DEFAULT_FALLBACK_DIM,
};
use llm4ng::generate::{
    generate_for_all_classes, parse_all_completions, ChatBackend, GeneratedSample, GenerationCache, HttpBackend,
    MockBackend, Provenance, SamplingParams, TemplateId,
};
use llm4ng::gnn::{save_model, train_gnn, Arch, TrainConfig};
use llm4ng::graph::{
    load_graph, merge_generated_nodes, sample_few_shot_split, sample_from_fixed_split, synth_dataset, write_dataset,
    DatasetPaths, FixedSplit, LoadedDataset, SynthParams,
};
use llm4ng::link::{link_generated_nodes, EdgePredictorConfig};
use llm4ng::pipeline::{emit_report, load_vocab, sweep, write_edges, ExperimentConfig, ReportFormat, Runner, SweepGrid};

#[derive(Parser)]
#[command(name = "llm4ng", version, about = "Node classification with generated labeled nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stochastic-block-model dataset.
    Synth(SynthArgs),
    /// Generate M samples per class and write them as JSON lines.
    Generate(GenerateArgs),
    /// Embed raw node texts, optionally followed by generated samples.
    Embed(EmbedArgs),
    /// Score and select edges between generated and raw nodes.
    Link(LinkArgs),
    /// Train a GNN for one seed and print test accuracy.
    Train(TrainArgs),
    /// Run the full pipeline over every seed of a config.
    Run(RunArgs),
    /// Run a config over a grid of settings.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 200)]
    nodes_per_class: usize,
    #[arg(long, default_value_t = 40)]
    vocab: usize,
    #[arg(long, default_value_t = 0.02)]
    intra: f64,
    #[arg(long, default_value_t = 0.001)]
    inter: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct DatasetArg {
    /// Dataset directory (nodes.jsonl, edges.tsv, labels.jsonl).
    #[arg(long, alias = "graph")]
    dataset: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    data: DatasetArg,
    #[arg(long, default_value = "P1")]
    template: TemplateId,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, value_enum, default_value = "mock")]
    backend: Backend,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    model: String,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    dedup: bool,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Samples as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedProvider {
    Fallback,
    Http,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    data: DatasetArg,
    #[arg(long, value_enum, default_value = "fallback")]
    provider: EmbedProvider,
    #[arg(long, default_value_t = DEFAULT_FALLBACK_DIM)]
    dim: usize,
    /// Hashing salt of the fallback provider.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Generated samples (JSON lines) appended after the raw rows.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SamplesArg {
    /// Generation cache; every cached sample is used, in file order.
    #[arg(long, conflicts_with = "samples")]
    gen_cache: Option<PathBuf>,
    /// Samples written by `generate --out`.
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Args)]
struct LinkArgs {
    #[command(flatten)]
    data: DatasetArg,
    /// Embeddings from `embed`: raw rows, optionally followed by generated rows.
    #[arg(long)]
    emb: PathBuf,
    #[command(flatten)]
    gen: SamplesArg,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    #[arg(long, default_value_t = 10)]
    top_k_mult: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TSV output: gen_index, raw_id, score.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DatasetArg,
    #[arg(long)]
    emb: PathBuf,
    #[command(flatten)]
    gen: SamplesArg,
    /// Edges from `link`.
    #[arg(long, conflicts_with = "without_edges")]
    edges: Option<PathBuf>,
    /// Add generated nodes as isolated nodes.
    #[arg(long)]
    without_edges: bool,
    #[arg(long, default_value = "gcn")]
    arch: Arch,
    #[arg(long)]
    k_shot: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    val_size: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    /// Training settings as JSON (TrainConfig fields); defaults otherwise.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArg,
    /// Add generated nodes without edges.
    #[arg(long)]
    without_edges: bool,
    /// Run on the raw graph only.
    #[arg(long, conflicts_with = "without_edges")]
    baseline: bool,
    /// Report path; JSON to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArg,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
}

fn staged<T>(stage: &'static str, r: llm4ng::Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage).into())
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    staged("config", ExperimentConfig::load(path))
}

fn load_dataset(dir: &Path) -> Result<(LoadedDataset, DatasetPaths)> {
    let paths = DatasetPaths::in_dir(dir);
    let data = staged("load", load_graph(&paths.nodes, &paths.edges, &paths.labels))?;
    Ok((data, paths))
}

fn read_samples(path: &Path) -> Result<Vec<GeneratedSample>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// Every sample stored in a generation cache, in record order.
fn samples_from_cache(path: &Path, num_classes: usize) -> Result<Vec<GeneratedSample>> {
    let cache = staged("generate", GenerationCache::open(path))?;
    let mut out = Vec::new();
    for rec in cache.records() {
        let blocks = parse_all_completions(&rec.completion);
        let class_of = |i: usize| match rec.template_id {
            TemplateId::P4 => Some(i),
            _ => rec.class_id,
        };
        for (i, (title, abstract_text)) in blocks.into_iter().enumerate() {
            let Some(class_id) = class_of(i).filter(|&c| c < num_classes) else { continue };
            out.push(GeneratedSample {
                class_id,
                title,
                abstract_text,
                provenance: Provenance {
                    template_id: rec.template_id,
                    model: rec.model.clone(),
                    temperature: rec.params.temperature,
                    seed: rec.params.seed,
                    replicate: rec.replicate,
                    cache_key: rec.key.clone(),
                },
            });
        }
    }
    Ok(out)
}

fn load_samples(arg: &SamplesArg, num_classes: usize) -> Result<Vec<GeneratedSample>> {
    match (&arg.gen_cache, &arg.samples) {
        (Some(c), _) => samples_from_cache(c, num_classes),
        (None, Some(s)) => read_samples(s),
        (None, None) => Ok(Vec::new()),
    }
}

/// Raw rows of `emb` plus generated rows, taken from the file when present
/// and otherwise computed with the embedder recorded in its sidecar.
fn split_embeddings(
    emb: &Path,
    n_raw: usize,
    samples: &[GeneratedSample],
) -> Result<(EmbeddingMatrix<f64>, EmbeddingMatrix<f64>)> {
    let (all, prov) = staged("embed", read_embeddings::<f64>(emb))?;
    let g = samples.len();
    if all.rows() == n_raw + g {
        return Ok((all.slice_rows(0, n_raw), all.slice_rows(n_raw, n_raw + g)));
    }
    if all.rows() != n_raw {
        bail!("{} has {} rows; expected {n_raw} or {}", emb.display(), all.rows(), n_raw + g);
    }
    if g == 0 {
        return Ok((all, EmbeddingMatrix::empty(0)));
    }
    let Some(prov) = prov else {
        bail!("{} has no generated rows and no sidecar naming its embedder", emb.display());
    };
    let texts: Vec<String> = samples.iter().map(GeneratedSample::node_text).collect();
    let gen = staged("embed", embed_texts::<f64>(&texts, &prov.embedder))?;
    Ok((all, gen))
}

fn synth(a: SynthArgs) -> Result<()> {
    let params = SynthParams {
        num_classes: a.classes,
        nodes_per_class: a.nodes_per_class,
        vocab_per_class: a.vocab,
        intra_edge_prob: a.intra,
        inter_edge_prob: a.inter,
        seed: a.seed,
    };
    let d = staged("synth", synth_dataset(&params))?;
    staged("synth", write_dataset(&a.out, &d.graph, &d.labels))?;
    fs::write(a.out.join("vocab.json"), serde_json::to_vec(&d.class_vocab)?)?;
    println!("wrote {} nodes, {} edges to {}", d.graph.num_nodes(), d.graph.num_edges(), a.out.display());
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let (data, paths) = load_dataset(&a.data.dataset)?;
    let backend: Arc<dyn ChatBackend> = match a.backend {
        Backend::Mock => {
            let vocab = staged("load", paths.vocab.as_deref().map(load_vocab).transpose())?;
            Arc::new(staged(
                "generate",
                match vocab {
                    Some(v) => MockBackend::new(v),
                    None => MockBackend::from_label_texts(data.labels.texts()),
                },
            )?)
        }
        Backend::Http => Arc::new(HttpBackend::from_env(a.model.clone())),
    };
    let mut cache = staged(
        "generate",
        match &a.cache {
            Some(p) => GenerationCache::open(p),
            None => Ok(GenerationCache::in_memory()),
        },
    )?;
    let params = SamplingParams { temperature: a.temperature, seed: a.seed };
    let samples = staged(
        "generate",
        generate_for_all_classes(&data.labels, a.m, a.template, &params, &[], a.dedup, backend.as_ref(), &mut cache),
    )?;
    if let Some(out) = &a.out {
        let mut w = std::io::BufWriter::new(fs::File::create(out).with_context(|| format!("creating {}", out.display()))?);
        for s in &samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    let stats = cache.stats();
    eprintln!("{} samples; cache hits {}, misses {}", samples.len(), stats.hits, stats.misses);
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let (data, _) = load_dataset(&a.data.dataset)?;
    let config = EmbedderConfig {
        provider: match a.provider {
            EmbedProvider::Fallback => Provider::Fallback,
            EmbedProvider::Http => Provider::Http,
        },
        dim: a.dim,
        seed: a.seed,
        endpoint: a.endpoint,
        model: a.model,
    };
    let raw = staged("embed", embed_texts::<f64>(data.graph.texts(), &config))?;
    let all = match &a.samples {
        Some(p) => {
            let texts: Vec<String> = read_samples(p)?.iter().map(GeneratedSample::node_text).collect();
            let gen = staged("embed", embed_texts::<f64>(&texts, &config))?;
            staged("embed", assemble_representations(&raw, &gen))?
        }
        None => raw,
    };
    let prov = EmbeddingProvenance {
        embedder: config,
        num_raw_rows: data.graph.num_raw_nodes(),
        source: Some(a.data.dataset.display().to_string()),
    };
    staged("embed", write_embeddings(&a.out, &all, &prov))?;
    Ok(())
}

fn link(a: LinkArgs) -> Result<()> {
    let (data, _) = load_dataset(&a.data.dataset)?;
    let samples = load_samples(&a.gen, data.labels.len())?;
    let (raw, gen) = split_embeddings(&a.emb, data.graph.num_raw_nodes(), &samples)?;
    let config = EdgePredictorConfig {
        delta: a.delta,
        top_k_multiplier: a.top_k_mult,
        epochs: a.epochs,
        seed: a.seed,
        ..EdgePredictorConfig::default()
    };
    let out = staged("link", link_generated_nodes(&data.graph, &raw, &gen, &config))?;
    staged("link", write_edges(&a.out, &out.edges))?;
    eprintln!("{} candidates, {} edges", out.num_candidates, out.edges.len());
    Ok(())
}

fn read_edge_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let body = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    body.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut f = l.split('\t');
            match (f.next().map(str::parse), f.next().map(str::parse)) {
                (Some(Ok(g)), Some(Ok(v))) => Ok((g, v)),
                _ => bail!("malformed edge line `{l}` in {}", path.display()),
            }
        })
        .collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let (data, paths) = load_dataset(&a.data.dataset)?;
    let num_classes = data.labels.len();
    let fixed = staged("load", paths.split.as_deref().map(FixedSplit::load).transpose())?;
    let split = staged(
        "split",
        match &fixed {
            Some(f) => sample_from_fixed_split(&data.graph, num_classes, f, a.k_shot, a.seed),
            None => sample_few_shot_split(&data.graph, num_classes, a.k_shot, a.val_size, a.test_size, a.seed),
        },
    )?;
    let samples = load_samples(&a.gen, num_classes)?;
    let pairs = match &a.edges {
        Some(p) if !a.without_edges => read_edge_pairs(p)?,
        _ => Vec::new(),
    };
    let merged = staged("merge", merge_generated_nodes(&data.graph, &samples, &pairs, &data.labels))?;
    let n_raw = data.graph.num_raw_nodes();
    let (raw, gen) = split_embeddings(&a.emb, n_raw, &samples)?;
    let features = if samples.is_empty() { raw } else { staged("merge", assemble_representations(&raw, &gen))? };
    let split = split.with_generated(n_raw..n_raw + samples.len());
    let base: TrainConfig = match &a.train_config {
        Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => TrainConfig::default(),
    };
    let train_cfg = TrainConfig { seed: a.seed, ..base };
    let labeled = split.labeled_ids();
    let (model, pred, log) = staged(
        "train",
        train_gnn(&merged, features.matrix(), num_classes, &labeled, &split.val_ids, &train_cfg, a.arch),
    )?;
    let accuracy = staged("evaluate", pred.accuracy(&split.test_ids, merged.labels()))?;
    if let Some(dir) = &a.model_out {
        staged("train", save_model(dir, &model, &train_cfg))?;
    }
    let summary = serde_json::json!({
        "arch": a.arch,
        "seed": a.seed,
        "k_shot": a.k_shot,
        "generated_nodes": samples.len(),
        "inserted_edges": pairs.len(),
        "labeled_nodes": labeled.len(),
        "best_epoch": log.best_epoch,
        "accuracy": accuracy,
    });
    println!("{summary}");
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = load_config(&a.cfg.config)?;
    cfg.without_edges |= a.without_edges;
    let mut runner = Runner::new();
    let result = if a.baseline { runner.run_baseline(&cfg) } else { runner.run_llm4ng(&cfg) }?;
    match &a.out {
        Some(path) => staged("report", emit_report(std::slice::from_ref(&result), a.format, path))?,
        None => {
            let report = llm4ng::pipeline::Report::from_results(std::slice::from_ref(&result));
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    eprintln!("{}: mean {:.4} std {:.4} over {} seeds", result.method.label(), result.mean, result.std, result.runs.len());
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let cfg = load_config(&a.cfg.config)?;
    let grid = staged("config", SweepGrid::load(&a.grid))?;
    let mut runner = Runner::new();
    let outcome = staged("sweep", sweep(&mut runner, &grid, &cfg))?;
    eprintln!("{} executed, {} resumed, {} failed", outcome.executed, outcome.skipped, outcome.failures.len());
    for f in &outcome.failures {
        eprintln!("cell {}: {}", f.config_hash, f.error);
    }
    if !outcome.results.is_empty() {
        staged("report", emit_report(&outcome.results, a.format, &a.out))?;
    }
    if !outcome.failures.is_empty() {
        bail!("{} sweep cell(s) failed", outcome.failures.len());
    }
    Ok(())
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    let mut last = msg.clone();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !last.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
        last = c;
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let r = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Generate(a) => generate(a),
        Command::Embed(a) => embed(a),
        Command::Link(a) => link(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => run_sweep(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
