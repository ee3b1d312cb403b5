use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperpersona::corpus::write_corpus;
use hyperpersona::embedding::write_bundle_dir;
use hyperpersona::hiergraph::LevelConfig;
use hyperpersona::hypergraph::build_hypergraph;
use hyperpersona::model::EdgeWeightMode;
use hyperpersona::pipeline::{
    build_graphs, dataset_stats, evaluate_stage, ingest, prepare, run_ablation, run_pipeline,
    train_stage, write_json, EmbeddingMode, PipelineError, RunConfig, Stage, StageExt,
};
use hyperpersona::segment::segment_corpus;
use hyperpersona::synth::{make_synthetic_corpus, SynthSpec};
use serde_json::json;

/// Hypergraph text representations and attention graph encoding for Big
/// Five trait prediction.
#[derive(Parser, Debug)]
#[command(name = "hyperpersona", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Directory for caches, checkpoints and reports.
    #[arg(long, global = true, default_value = "work")]
    workdir: PathBuf,
    /// JSON run config; defaults to `<workdir>/config.json` when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Essay CSV.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Use the planted-signal synthetic corpus instead of a CSV.
    #[arg(long, global = true)]
    synthetic: bool,
    /// Seed for the split, hash embedding and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override `dotted.key=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load the corpus and write `records.json` plus label counts.
    Ingest,
    /// Split essays into sentences and words; writes `segments.json`.
    Segment,
    /// Produce or import embedding bundles.
    Embed {
        #[arg(long, value_parser = ["hash", "import"], default_value = "hash")]
        mode: String,
        /// Hash-embedding dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Bundle directory to import.
        #[arg(long)]
        bundles: Option<PathBuf>,
    },
    #[command(subcommand)]
    Graphs(GraphsCommand),
    /// Train one model per trait and write checkpoints and histories.
    Train {
        #[arg(long)]
        level: Option<LevelConfig>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long = "edge-weights")]
        edge_weights: Option<EdgeWeightMode>,
    },
    /// Score saved checkpoints on the test split.
    Evaluate {
        #[arg(long)]
        level: Option<LevelConfig>,
    },
    /// Train and evaluate each level on one shared split.
    Ablate {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "full,doc-sent,doc-word,sent,word"
        )]
        levels: Vec<LevelConfig>,
    },
    /// Write a synthetic corpus as CSV.
    Synth {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        docs: Option<usize>,
        /// Seed of the generated corpus.
        #[arg(long = "corpus-seed")]
        corpus_seed: Option<u64>,
    },
    /// Dataset statistics plus any saved result tables.
    Report,
    /// Every stage end to end.
    Run {
        #[arg(long)]
        level: Option<LevelConfig>,
    },
}

#[derive(Subcommand, Debug)]
enum GraphsCommand {
    /// Build hierarchical graphs for the given levels.
    Build {
        #[arg(long, value_delimiter = ',', default_value = "full")]
        levels: Vec<LevelConfig>,
    },
    /// Dump one document's hypergraph and incidence matrix as JSON.
    ExportHypergraph {
        #[arg(long)]
        doc: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve_config(g: &Global) -> Result<RunConfig, PipelineError> {
    let saved = g.workdir.join("config.json");
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None if saved.exists() => RunConfig::load(&saved)?,
        None => RunConfig::default(),
    };
    cfg.workdir = g.workdir.clone();
    if let Some(c) = &g.corpus {
        cfg.corpus = Some(c.clone());
    }
    if g.synthetic {
        cfg.corpus = None;
        cfg.synthetic.get_or_insert_with(SynthSpec::default);
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.with_overrides(&g.sets)
}

fn save_config(cfg: &RunConfig) -> Result<(), PipelineError> {
    write_json(&cfg.workdir.join("config.json"), cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).stage(Stage::Report)?;
    }
    fs::write(path, text).stage(Stage::Report)
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Ingest => {
            save_config(&cfg)?;
            let records = ingest(&cfg)?;
            write_json(&cfg.workdir.join("records.json"), &records)?;
            let stats = dataset_stats(&records, &cfg.segmenter);
            println!("{} records", records.len());
            for (t, c) in &stats.labels {
                println!(
                    "{:<18} true {:>5}  false {:>5}",
                    t.name(),
                    c.positive,
                    c.negative
                );
            }
        }
        Command::Segment => {
            save_config(&cfg)?;
            let records = ingest(&cfg)?;
            let (docs, report) = segment_corpus(&records, &cfg.segmenter);
            write_json(
                &cfg.workdir.join("segments.json"),
                &json!({ "documents": docs, "skipped": report.skipped }),
            )?;
            println!("{} segmented, {} skipped", docs.len(), report.skipped.len());
            for s in &report.skipped {
                println!("skipped {}: {}", s.id, s.reason);
            }
        }
        Command::Embed { mode, dim, bundles } => {
            cfg.embedding = if mode == "import" {
                EmbeddingMode::Import
            } else {
                EmbeddingMode::Hash
            };
            if let Some(d) = dim {
                cfg.dim = d;
            }
            if bundles.is_some() {
                cfg.bundles = bundles;
            }
            save_config(&cfg)?;
            let prep = prepare(&cfg)?;
            match cfg.embedding {
                EmbeddingMode::Hash => {
                    let dir = cfg.workdir.join("bundles");
                    let manifest = write_bundle_dir(&prep.bundles, &dir).stage(Stage::Embed)?;
                    println!(
                        "wrote {} bundles (dim {}) to {}",
                        manifest.doc_count,
                        manifest.dim,
                        dir.display()
                    );
                }
                EmbeddingMode::Import => {
                    println!(
                        "imported {} bundles, all consistent with their segmentations",
                        prep.bundles.len()
                    );
                }
            }
        }
        Command::Graphs(GraphsCommand::Build { levels }) => {
            save_config(&cfg)?;
            let prep = prepare(&cfg)?;
            for level in levels {
                let graphs = build_graphs(&prep, level)?;
                let path = cfg
                    .workdir
                    .join("graphs")
                    .join(format!("{}.json", level.name()));
                write_json(&path, &graphs)?;
                let nodes: usize = graphs.iter().map(|g| g.node_count()).sum();
                let edges: usize = graphs.iter().map(|g| g.edges.len()).sum();
                println!(
                    "{level}: {} graphs, {nodes} nodes, {edges} edges -> {}",
                    graphs.len(),
                    path.display()
                );
            }
        }
        Command::Graphs(GraphsCommand::ExportHypergraph { doc, out }) => {
            let prep = prepare(&cfg)?;
            let i = prep
                .docs
                .iter()
                .position(|d| d.doc_id == doc)
                .ok_or_else(|| PipelineError::new(Stage::Graphs, format!("no document `{doc}`")))?;
            let h = build_hypergraph(&prep.docs[i], &prep.bundles[i]).stage(Stage::Graphs)?;
            let incidence = h.incidence_matrix();
            let value = json!({ "hypergraph": h, "incidence": incidence });
            let path =
                out.unwrap_or_else(|| cfg.workdir.join("hypergraphs").join(format!("{doc}.json")));
            write_json(&path, &value)?;
            println!(
                "{doc}: {} word nodes, {} hyperedges -> {}",
                incidence.rows,
                incidence.cols,
                path.display()
            );
        }
        Command::Train {
            level,
            epochs,
            edge_weights,
        } => {
            if let Some(l) = level {
                cfg.train.level = l;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(m) = edge_weights {
                cfg.train.edge_weight_mode = m;
            }
            save_config(&cfg)?;
            let outcome = train_stage(&cfg)?;
            for (t, h) in &outcome.histories {
                let last = h.epochs.last();
                println!(
                    "{:<18} final loss {:.4}  held-out {}",
                    t.name(),
                    last.map_or(f64::NAN, |e| e.mean_loss),
                    last.and_then(|e| e.heldout_accuracy)
                        .map_or("-".into(), |a| format!("{a:.3}"))
                );
            }
            println!("{}", outcome.report.to_markdown());
        }
        Command::Evaluate { level } => {
            if let Some(l) = level {
                cfg.train.level = l;
            }
            let report = evaluate_stage(&cfg)?;
            println!("{}", report.to_markdown());
        }
        Command::Ablate { levels } => {
            save_config(&cfg)?;
            let out = run_ablation(&cfg, &levels)?;
            println!("{}", out.table.to_markdown());
        }
        Command::Synth {
            out,
            docs,
            corpus_seed,
        } => {
            let mut spec = cfg.synthetic.clone().unwrap_or_default();
            if let Some(d) = docs {
                spec.docs = d;
            }
            if let Some(s) = corpus_seed {
                spec.seed = s;
            }
            let corpus = make_synthetic_corpus(&spec).stage(Stage::Ingest)?;
            let path = out.unwrap_or_else(|| cfg.workdir.join("synthetic.csv"));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).stage(Stage::Report)?;
            }
            let file = fs::File::create(&path).stage(Stage::Report)?;
            write_corpus(file, &corpus.records, &cfg.column_map).stage(Stage::Report)?;
            write_json(
                &path.with_extension("markers.json"),
                &json!({ "spec": spec, "markers": corpus.markers }),
            )?;
            println!(
                "wrote {} essays to {}",
                corpus.records.len(),
                path.display()
            );
        }
        Command::Report => {
            let records = ingest(&cfg)?;
            let mut text = dataset_stats(&records, &cfg.segmenter).to_markdown();
            for name in ["report.md", "ablation.md"] {
                if let Ok(saved) = fs::read_to_string(cfg.workdir.join(name)) {
                    text.push('\n');
                    text.push_str(&saved);
                }
            }
            write_text(&cfg.workdir.join("summary.md"), &text)?;
            println!("{text}");
        }
        Command::Run { level } => {
            if let Some(l) = level {
                cfg.train.level = l;
            }
            save_config(&cfg)?;
            let report = run_pipeline(&cfg)?;
            println!("{}", report.to_markdown());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
