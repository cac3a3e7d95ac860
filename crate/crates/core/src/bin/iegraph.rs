use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use iegraph::checkpoint;
use iegraph::corpus::{
    corpus_stats, load_corpus, save_corpus, select_span_variant, split_corpus, to_json_string, Corpus, Lang, SpanVariant,
    SplitTag, DEFAULT_SPLIT_RATIOS, SCHEMA_VERSION,
};
use iegraph::embed::{provider_from_provenance, provider_from_spec, EmbeddingProvider, ProviderProvenance};
use iegraph::graph::{corpus_to_graphs, graphs_to_corpus, GraphDocument, GraphError};
use iegraph::io::write_atomic;
use iegraph::nesting::{count_nesting, partition_nested};
use iegraph::score::{score, score_partitioned, ScoreReport};
use iegraph::synth::synthetic_corpus;
use iegraph::train::{predict_corpus, train, OutputDir, TrainConfig};

type Error = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "iegraph", version, about = "Joint entity, relation and event extraction as graph parsing")]
struct Cli {
    /// Where to write the run manifest (defaults next to the main output, or stderr).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    NoEntRel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    /// Annotated corpus to graph file.
    Graphs,
    /// Graph file to annotated corpus.
    Annotations,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Entity span variant to resolve to.
    #[arg(long, value_parser = parse_variant)]
    span_variant: Option<SpanVariant>,
    /// Keep only sentences in these languages, e.g. `en,zh`.
    #[arg(long, value_delimiter = ',', value_parser = parse_lang)]
    langs: Vec<Lang>,
}

#[derive(Args, Clone)]
struct EmbeddingArgs {
    /// `hash` or `file:<path>` (a JSONL file of precomputed embeddings).
    #[arg(long)]
    embedding_provider: Option<String>,
    /// Layers of the hash provider.
    #[arg(long, default_value_t = 4)]
    embedding_layers: usize,
    /// Width of the hash provider.
    #[arg(long, default_value_t = 64)]
    embedding_dim: usize,
    /// Seed of the hash provider.
    #[arg(long, default_value_t = 0)]
    embedding_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between annotated corpora and graph files.
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// Target format; inferred from the input when omitted.
        #[arg(long, value_enum)]
        to: Option<Direction>,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Corpus statistics.
    Stats {
        input: PathBuf,
        /// JSON report path; the table goes to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Nested-annotation counts.
    Nesting {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Document-level train/dev/test split.
    Split {
        input: PathBuf,
        /// Directory receiving train.json, dev.json and test.json.
        output_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train, dev and test proportions.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Train a model.
    Train {
        /// Training corpora (several files train one multilingual model).
        #[arg(long = "train", required = true, num_args = 1..)]
        train: Vec<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Directory for checkpoints and the epoch log.
        #[arg(long)]
        output_dir: PathBuf,
        /// JSON training config; fields left out keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        ablation: Option<Ablation>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        embedding: EmbeddingArgs,
    },
    /// Parse a corpus with a trained model.
    Predict {
        /// Checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
        /// Overrides the provider recorded in the checkpoint.
        #[arg(long)]
        embedding_provider: Option<String>,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Score predictions against a reference corpus.
    Score {
        pred: PathBuf,
        gold: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also score the nested and non-nested reference sentences separately.
        #[arg(long)]
        nested_split: bool,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Generate a synthetic trilingual corpus.
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 50)]
        sentences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', value_parser = parse_lang)]
        langs: Vec<Lang>,
    },
}

fn parse_variant(s: &str) -> Result<SpanVariant, String> {
    s.parse()
}

fn parse_lang(s: &str) -> Result<Lang, String> {
    s.parse()
}

#[derive(Serialize)]
struct Artifact {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    inputs: Vec<Artifact>,
    outputs: Vec<Artifact>,
    started: String,
    finished: String,
    crate_version: String,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Files a run read and wrote, for the manifest.
#[derive(Default)]
struct Run {
    config: Option<PathBuf>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest_near: Option<PathBuf>,
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Every regular file under `path`, sorted.
fn files_under(path: &Path) -> Vec<PathBuf> {
    if path.is_file() {
        return vec![path.to_path_buf()];
    }
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(path) {
        for e in entries.flatten() {
            out.extend(files_under(&e.path()));
        }
    }
    out.sort();
    out
}

fn artifacts(paths: &[PathBuf]) -> Vec<Artifact> {
    paths
        .iter()
        .flat_map(|p| files_under(p))
        .filter(|p| p.file_name().is_none_or(|n| n != "manifest.json"))
        .filter_map(|p| sha256_file(&p).ok().map(|sha256| Artifact { path: p, sha256 }))
        .collect()
}

fn filter_langs(corpus: Corpus, langs: &[Lang]) -> Corpus {
    if langs.is_empty() {
        return corpus;
    }
    let kept = corpus.sentences.iter().filter(|s| langs.contains(&s.lang)).cloned().collect();
    corpus.with_sentences(kept)
}

fn read_corpus(path: &Path, args: &CorpusArgs, run: &mut Run) -> Result<Corpus, Error> {
    run.inputs.push(path.to_path_buf());
    let mut corpus = load_corpus(path, SCHEMA_VERSION).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(v) = args.span_variant {
        corpus = select_span_variant(corpus, v);
    }
    Ok(filter_langs(corpus, &args.langs))
}

fn write_output(path: &Path, bytes: &[u8], run: &mut Run) -> Result<(), Error> {
    write_atomic(path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    run.outputs.push(path.to_path_buf());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, run: &mut Run) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_output(path, text.as_bytes(), run)
}

fn is_graph_file(path: &Path) -> Result<bool, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(value.get("graphs").is_some())
}

fn convert(input: &Path, output: &Path, to: Option<Direction>, args: &CorpusArgs, run: &mut Run) -> Result<(), Error> {
    let to = match to {
        Some(d) => d,
        None if is_graph_file(input)? => Direction::Annotations,
        None => Direction::Graphs,
    };
    run.manifest_near = Some(output.to_path_buf());
    match to {
        Direction::Graphs => {
            let corpus = read_corpus(input, args, run)?;
            let doc = corpus_to_graphs(&corpus)?;
            write_json(output, &doc, run)
        }
        Direction::Annotations => {
            run.inputs.push(input.to_path_buf());
            let text = std::fs::read_to_string(input)?;
            let doc: GraphDocument = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", input.display()))?;
            let corpus = graphs_to_corpus(&doc).map_err(|e| match e {
                GraphError::Invalid { sentence, violations } => {
                    let list: Vec<String> = violations.iter().map(|v| format!("  {sentence}: {v}")).collect();
                    format!("invalid graph in sentence {sentence}:\n{}", list.join("\n"))
                }
                other => other.to_string(),
            })?;
            let corpus = filter_langs(corpus, &args.langs);
            write_output(output, to_json_string(&corpus).as_bytes(), run)
        }
    }
}

fn provider_for_checkpoint(meta: &checkpoint::Meta, spec: Option<&str>, layers: usize, dim: usize) -> Result<Box<dyn EmbeddingProvider>, Error> {
    let provider: Box<dyn EmbeddingProvider> = match (spec, &meta.embedding_provider) {
        (Some(spec), ProviderProvenance::Hash { seed, .. }) => provider_from_spec(spec, *seed, layers, dim)?,
        (Some(spec), _) => provider_from_spec(spec, 0, layers, dim)?,
        (None, recorded) => provider_from_provenance(recorded)?,
    };
    if provider.layers() != layers || provider.dim() != dim {
        return Err(format!(
            "embedding provider gives {}×{} vectors, the model expects {layers}×{dim}",
            provider.layers(),
            provider.dim()
        )
        .into());
    }
    Ok(provider)
}

fn report_json(full: &ScoreReport, split: Option<(ScoreReport, ScoreReport)>) -> serde_json::Value {
    match split {
        None => serde_json::to_value(full).expect("report serializes"),
        Some((nested, plain)) => serde_json::json!({ "all": full, "nested": nested, "non_nested": plain }),
    }
}

fn execute(command: &Command, run: &mut Run) -> Result<(), Error> {
    match command {
        Command::Convert { input, output, to, corpus } => convert(input, output, *to, corpus, run),
        Command::Stats { input, output, corpus } => {
            let c = read_corpus(input, corpus, run)?;
            let stats = corpus_stats(&c);
            print!("{}", stats.to_table());
            if let Some(out) = output {
                run.manifest_near = Some(out.clone());
                write_json(out, &stats, run)?;
            }
            Ok(())
        }
        Command::Nesting { input, output, corpus } => {
            let c = read_corpus(input, corpus, run)?;
            let report = count_nesting(&c);
            print!("{}", report.to_table());
            if let Some(out) = output {
                run.manifest_near = Some(out.clone());
                write_json(out, &report, run)?;
            }
            Ok(())
        }
        Command::Split { input, output_dir, seed, ratios } => {
            run.seed = Some(*seed);
            run.manifest_near = Some(output_dir.join("manifest.json"));
            let c = read_corpus(input, &CorpusArgs { span_variant: None, langs: Vec::new() }, run)?;
            let ratios = match ratios.as_deref() {
                Some(&[a, b, c]) => [a, b, c],
                Some(other) => return Err(format!("--ratios needs three values, got {}", other.len()).into()),
                None => DEFAULT_SPLIT_RATIOS,
            };
            let (tr, dv, te) = split_corpus(&c, ratios, *seed)?;
            for (mut part, tag, name) in [(tr, SplitTag::Train, "train.json"), (dv, SplitTag::Dev, "dev.json"), (te, SplitTag::Test, "test.json")] {
                part.split = Some(tag);
                let path = output_dir.join(name);
                save_corpus(&part, &path)?;
                run.outputs.push(path);
            }
            Ok(())
        }
        Command::Train { train: files, dev, output_dir, config, seed, ablation, epochs, corpus, embedding } => {
            let mut cfg = match config {
                Some(path) => {
                    run.config = Some(path.clone());
                    run.inputs.push(path.clone());
                    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                    serde_json::from_str::<TrainConfig>(&text).map_err(|e| format!("{}: {e}", path.display()))?
                }
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
            if matches!(ablation, Some(Ablation::NoEntRel)) {
                cfg.ablation_no_ent_rel = true;
            }
            run.seed = Some(cfg.seed);
            run.manifest_near = Some(output_dir.join("manifest.json"));
            let corpora = files.iter().map(|f| read_corpus(f, corpus, run)).collect::<Result<Vec<_>, _>>()?;
            let dev = dev.as_ref().map(|d| read_corpus(d, corpus, run)).transpose()?;
            let spec = embedding.embedding_provider.as_deref().unwrap_or("hash");
            let provider = provider_from_spec(spec, embedding.embedding_seed, embedding.embedding_layers, embedding.embedding_dim)?;
            let out = OutputDir { root: output_dir.clone() };
            let outcome = train(&cfg, &corpora, dev.as_ref(), provider.as_ref(), Some(&out))?;
            log::info!("best epoch {}", outcome.best_epoch);
            run.outputs.push(output_dir.clone());
            Ok(())
        }
        Command::Predict { checkpoint: dir, input, output, embedding_provider, corpus } => {
            run.inputs.push(dir.clone());
            run.manifest_near = Some(output.clone());
            let (model, meta) = checkpoint::load(dir)?;
            let provider = provider_for_checkpoint(&meta, embedding_provider.as_deref(), model.embedding_layers, model.embedding_dim)?;
            let c = read_corpus(input, corpus, run)?;
            let pred = predict_corpus(&model, &c, provider.as_ref())?;
            write_output(output, to_json_string(&pred).as_bytes(), run)
        }
        Command::Score { pred, gold, output, nested_split, corpus } => {
            let p = read_corpus(pred, corpus, run)?;
            let g = read_corpus(gold, corpus, run)?;
            let full = score(&p, &g)?;
            print!("{}", full.to_table());
            let split = if *nested_split {
                let (nested, plain) = partition_nested(&g);
                let (a, b) = score_partitioned(&p, &nested, &plain)?;
                print!("nested ({} sentences)\n{}", nested.len(), a.to_table());
                print!("non-nested ({} sentences)\n{}", plain.len(), b.to_table());
                Some((a, b))
            } else {
                None
            };
            if let Some(out) = output {
                run.manifest_near = Some(out.clone());
                write_json(out, &report_json(&full, split), run)?;
            }
            Ok(())
        }
        Command::Synth { output, sentences, seed, langs } => {
            run.seed = Some(*seed);
            run.manifest_near = Some(output.clone());
            let c = synthetic_corpus(*sentences, langs, *seed);
            write_output(output, to_json_string(&c).as_bytes(), run)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Convert { .. } => "convert",
        Command::Stats { .. } => "stats",
        Command::Nesting { .. } => "nesting",
        Command::Split { .. } => "split",
        Command::Train { .. } => "train",
        Command::Predict { .. } => "predict",
        Command::Score { .. } => "score",
        Command::Synth { .. } => "synth",
    }
}

/// `out.json` → `out.json.manifest.json`; a path already named
/// `manifest.json` is used as is.
fn manifest_path(near: &Path) -> PathBuf {
    if near.file_name().is_some_and(|n| n == "manifest.json") {
        return near.to_path_buf();
    }
    let mut name = near.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    near.with_file_name(name)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("JSEE_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let started = chrono::Utc::now().to_rfc3339();
    let mut run = Run::default();
    let result = execute(&cli.command, &mut run);
    let manifest = RunManifest {
        command: command_name(&cli.command).to_string(),
        argv: std::env::args().collect(),
        config: run.config.clone(),
        seed: run.seed,
        inputs: artifacts(&run.inputs),
        outputs: if result.is_ok() { artifacts(&run.outputs) } else { Vec::new() },
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        status: if result.is_ok() { "ok" } else { "error" }.to_string(),
        error: result.as_ref().err().map(|e| e.to_string()),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let target = cli.manifest.clone().or_else(|| run.manifest_near.as_deref().map(manifest_path));
    match target {
        Some(path) => {
            if let Err(e) = write_atomic(&path, text.as_bytes()) {
                eprintln!("error: cannot write manifest {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        }
        None => eprint!("{text}"),
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
