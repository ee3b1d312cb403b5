//! End-to-end orchestration: ingest, segment, embed, build graphs, train
//! one model per trait, evaluate, and the level ablation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::corpus::{
    label_distribution, load_corpus, split_train_test, ColumnMap, EssayRecord, LabelCounts,
    SplitSpec, Trait,
};
use crate::embedding::{
    hash_embed, read_bundle_dir, validate_bundle, write_bundle_dir, EmbeddingBundle,
};
use crate::hiergraph::{to_hiergraph, HierGraph, LevelConfig};
use crate::hypergraph::build_hypergraph;
use crate::metrics::{evaluate_traits, AblationReport, AblationRow, TraitReport};
use crate::model::{predict_many, ModelParams};
use crate::segment::{
    segment_corpus, SegmentReport, SegmentedDocument, SegmenterConfig, SkippedRecord,
};
use crate::synth::{make_synthetic_corpus, SynthSpec};
use crate::train::{train_trait, HeldOut, TrainConfig, TrainHistory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Segment,
    Embed,
    Graphs,
    Train,
    Evaluate,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Embed => "embed",
            Stage::Graphs => "graphs",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Process exit code for a failure in this stage.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 10,
            Stage::Segment => 11,
            Stage::Embed => 12,
            Stage::Graphs => 13,
            Stage::Train => 14,
            Stage::Evaluate => 15,
            Stage::Report => 16,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("[{stage}] {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError {
            stage,
            message: message.to_string(),
        }
    }
}

/// Attach a stage to any displayable error.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: fmt::Display> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    #[default]
    Hash,
    Import,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// CSV corpus; when absent, `synthetic` must be set.
    pub corpus: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
    /// Directory of `.hpeb` bundles for import mode.
    pub bundles: Option<PathBuf>,
    pub workdir: PathBuf,
    pub column_map: ColumnMap,
    pub segmenter: SegmenterConfig,
    pub embedding: EmbeddingMode,
    /// Hash-embedding dimension.
    pub dim: usize,
    /// Drives the split, hash embedding and training streams.
    pub seed: u64,
    pub train_fraction: f64,
    pub stratify: Option<Trait>,
    pub train: TrainConfig,
    /// Record held-out accuracy after every epoch.
    pub heldout_history: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            synthetic: None,
            bundles: None,
            workdir: PathBuf::from("work"),
            column_map: ColumnMap::default(),
            segmenter: SegmenterConfig::default(),
            embedding: EmbeddingMode::Hash,
            dim: 64,
            seed: 0,
            train_fraction: 0.8,
            stratify: None,
            train: TrainConfig::default(),
            heldout_history: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).stage(Stage::Config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    /// Apply `key.path=value` overrides; values parse as JSON when they can
    /// and fall back to plain strings.
    pub fn with_overrides(&self, sets: &[String]) -> Result<Self, PipelineError> {
        let mut root = serde_json::to_value(self).stage(Stage::Config)?;
        for s in sets {
            let (key, raw) = s.split_once('=').ok_or_else(|| {
                PipelineError::new(Stage::Config, format!("override `{s}` is not key=value"))
            })?;
            let value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut root;
            for part in key.split('.') {
                if slot.is_null() {
                    *slot = Value::Object(Default::default());
                }
                let obj = slot.as_object_mut().ok_or_else(|| {
                    PipelineError::new(
                        Stage::Config,
                        format!("`{key}` does not name an object field"),
                    )
                })?;
                slot = obj.entry(part.to_string()).or_insert(Value::Null);
            }
            *slot = value;
        }
        serde_json::from_value(root).stage(Stage::Config)
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratify: self.stratify,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.workdir.join("cache")
    }
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

/// Records, their segmentations and embeddings, aligned by index.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedCorpus {
    pub records: Vec<EssayRecord>,
    pub docs: Vec<SegmentedDocument>,
    pub bundles: Vec<EmbeddingBundle>,
    pub skipped: Vec<SkippedRecord>,
    /// Content hash of the embeddings; keys downstream caches.
    pub key: String,
    /// Where graphs are cached, if anywhere.
    pub cache: Option<PathBuf>,
}

pub fn ingest(config: &RunConfig) -> Result<Vec<EssayRecord>, PipelineError> {
    match (&config.corpus, &config.synthetic) {
        (Some(path), _) => {
            if !path.exists() {
                return Err(PipelineError::new(
                    Stage::Ingest,
                    format!("corpus {} does not exist", path.display()),
                ));
            }
            load_corpus(path, &config.column_map).stage(Stage::Ingest)
        }
        (None, Some(spec)) => Ok(make_synthetic_corpus(spec).stage(Stage::Ingest)?.records),
        (None, None) => Err(PipelineError::new(
            Stage::Ingest,
            "no corpus path or synthetic spec configured",
        )),
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentCache {
    docs: Vec<SegmentedDocument>,
    report: SegmentReport,
}

fn segment_cached(
    records: &[EssayRecord],
    config: &RunConfig,
    cache: Option<&Path>,
) -> Result<(Vec<SegmentedDocument>, SegmentReport, String), PipelineError> {
    let rec_json = serde_json::to_vec(records).stage(Stage::Segment)?;
    let cfg_json = serde_json::to_vec(&config.segmenter).stage(Stage::Segment)?;
    let key = digest(&[b"segments", &rec_json, &cfg_json]);
    let file = cache.map(|c| c.join(format!("segments-{key}.json")));
    if let Some(f) = file.as_ref().filter(|f| f.exists()) {
        let bytes = fs::read(f).stage(Stage::Segment)?;
        if let Ok(c) = serde_json::from_slice::<SegmentCache>(&bytes) {
            log::info!("segments from cache {}", f.display());
            return Ok((c.docs, c.report, key));
        }
        log::warn!("unreadable segment cache {}, rebuilding", f.display());
    }
    let (docs, report) = segment_corpus(records, &config.segmenter);
    if let Some(f) = &file {
        fs::create_dir_all(f.parent().expect("cache file has a parent")).stage(Stage::Segment)?;
        let c = SegmentCache { docs, report };
        fs::write(f, serde_json::to_vec(&c).stage(Stage::Segment)?).stage(Stage::Segment)?;
        return Ok((c.docs, c.report, key));
    }
    Ok((docs, report, key))
}

fn bundles_valid(bundles: &[EmbeddingBundle], docs: &[SegmentedDocument]) -> bool {
    bundles.len() == docs.len()
        && bundles
            .iter()
            .zip(docs)
            .all(|(b, d)| validate_bundle(b, d).is_clean())
}

fn embed(
    docs: &[SegmentedDocument],
    seg_key: &str,
    config: &RunConfig,
    cache: Option<&Path>,
) -> Result<(Vec<EmbeddingBundle>, String), PipelineError> {
    match config.embedding {
        EmbeddingMode::Hash => {
            let key = digest(&[
                b"hash",
                seg_key.as_bytes(),
                &config.dim.to_le_bytes(),
                &config.seed.to_le_bytes(),
            ]);
            let dir = cache.map(|c| c.join(format!("bundles-{key}")));
            if let Some(d) = dir.as_ref().filter(|d| d.join("manifest.json").exists()) {
                match read_bundle_dir(d) {
                    Ok(found) => {
                        let by_id: BTreeMap<&str, &EmbeddingBundle> =
                            found.iter().map(|b| (b.doc_id.as_str(), b)).collect();
                        let ordered: Vec<EmbeddingBundle> = docs
                            .iter()
                            .filter_map(|doc| by_id.get(doc.doc_id.as_str()).map(|b| (*b).clone()))
                            .collect();
                        if bundles_valid(&ordered, docs) {
                            log::info!("bundles from cache {}", d.display());
                            return Ok((ordered, key));
                        }
                        log::warn!("stale bundle cache {}, rebuilding", d.display());
                    }
                    Err(e) => {
                        log::warn!("bundle cache {} unreadable ({e}), rebuilding", d.display())
                    }
                }
                fs::remove_dir_all(d).stage(Stage::Embed)?;
            }
            let bundles = docs
                .iter()
                .map(|d| hash_embed(d, config.dim, config.seed))
                .collect::<Result<Vec<_>, _>>()
                .stage(Stage::Embed)?;
            if let Some(d) = &dir {
                write_bundle_dir(&bundles, d).stage(Stage::Embed)?;
            }
            Ok((bundles, key))
        }
        EmbeddingMode::Import => {
            let dir = config.bundles.as_ref().ok_or_else(|| {
                PipelineError::new(Stage::Embed, "import mode needs a bundles directory")
            })?;
            let found = read_bundle_dir(dir).stage(Stage::Embed)?;
            let mut by_id: BTreeMap<String, EmbeddingBundle> =
                found.into_iter().map(|b| (b.doc_id.clone(), b)).collect();
            let bundles = docs
                .iter()
                .map(|d| {
                    let b = by_id.remove(&d.doc_id).ok_or_else(|| {
                        PipelineError::new(Stage::Embed, format!("no bundle for `{}`", d.doc_id))
                    })?;
                    let report = validate_bundle(&b, d);
                    if !report.is_clean() {
                        return Err(PipelineError::new(
                            Stage::Embed,
                            format!(
                                "bundle for `{}` does not match its segmentation: {:?}",
                                d.doc_id, report.violations
                            ),
                        ));
                    }
                    Ok(b)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let key = digest(&[
                b"import",
                seg_key.as_bytes(),
                &serde_json::to_vec(&bundles).stage(Stage::Embed)?,
            ]);
            Ok((bundles, key))
        }
    }
}

/// Segment and embed `records`, caching under `cache` when given.
pub fn prepare_records(
    records: Vec<EssayRecord>,
    config: &RunConfig,
    cache: Option<&Path>,
) -> Result<PreparedCorpus, PipelineError> {
    let (docs, report, seg_key) = segment_cached(&records, config, cache)?;
    if docs.is_empty() {
        return Err(PipelineError::new(
            Stage::Segment,
            "no document survived segmentation",
        ));
    }
    let (bundles, key) = embed(&docs, &seg_key, config, cache)?;
    let kept: BTreeMap<&str, ()> = docs.iter().map(|d| (d.doc_id.as_str(), ())).collect();
    let records = records
        .into_iter()
        .filter(|r| kept.contains_key(r.id.as_str()))
        .collect();
    Ok(PreparedCorpus {
        records,
        docs,
        bundles,
        skipped: report.skipped,
        key,
        cache: cache.map(Path::to_path_buf),
    })
}

pub fn prepare(config: &RunConfig) -> Result<PreparedCorpus, PipelineError> {
    let records = ingest(config)?;
    prepare_records(records, config, Some(&config.cache_dir()))
}

/// Hierarchical graphs at `level`, cached next to the embeddings they were
/// built from.
pub fn build_graphs(
    prep: &PreparedCorpus,
    level: LevelConfig,
) -> Result<Vec<HierGraph>, PipelineError> {
    let file = prep.cache.as_ref().map(|c| {
        c.join(format!(
            "graphs-{}.json",
            digest(&[b"graphs", prep.key.as_bytes(), level.name().as_bytes()])
        ))
    });
    if let Some(f) = file.as_ref().filter(|f| f.exists()) {
        let cached = fs::read(f)
            .ok()
            .and_then(|b| serde_json::from_slice::<Vec<HierGraph>>(&b).ok());
        match cached {
            Some(g)
                if g.len() == prep.docs.len()
                    && g.iter().zip(&prep.docs).all(|(g, d)| g.doc_id == d.doc_id) =>
            {
                log::info!("graphs from cache {}", f.display());
                return Ok(g);
            }
            _ => log::warn!("stale graph cache {}, rebuilding", f.display()),
        }
    }
    let graphs = prep
        .docs
        .iter()
        .zip(&prep.bundles)
        .map(|(d, b)| {
            let h = build_hypergraph(d, b).stage(Stage::Graphs)?;
            to_hiergraph(&h, level).stage(Stage::Graphs)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(f) = &file {
        fs::create_dir_all(f.parent().expect("cache file has a parent")).stage(Stage::Graphs)?;
        fs::write(f, serde_json::to_vec(&graphs).stage(Stage::Graphs)?).stage(Stage::Graphs)?;
    }
    Ok(graphs)
}

/// Index sets of the shared train/test split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(
    prep: &PreparedCorpus,
    spec: &SplitSpec,
) -> Result<SplitIndices, PipelineError> {
    let (train, test) = split_train_test(&prep.records, spec).stage(Stage::Train)?;
    let pos: BTreeMap<&str, usize> = prep
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let idx = |rs: &[EssayRecord]| rs.iter().map(|r| pos[r.id.as_str()]).collect();
    Ok(SplitIndices {
        train: idx(&train),
        test: idx(&test),
    })
}

/// Trained models, histories and test metrics for one graph level.
#[derive(Clone, Debug)]
pub struct LevelOutcome {
    pub level: LevelConfig,
    pub models: BTreeMap<Trait, ModelParams>,
    pub histories: BTreeMap<Trait, TrainHistory>,
    pub report: TraitReport,
}

pub fn train_and_evaluate(
    prep: &PreparedCorpus,
    graphs: &[HierGraph],
    split: &SplitIndices,
    train: &TrainConfig,
    heldout_history: bool,
) -> Result<LevelOutcome, PipelineError> {
    let level = graphs.first().map_or(train.level, |g| g.level);
    let cfg = TrainConfig {
        level,
        ..train.clone()
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    let (train_g, test_g) = (pick(&split.train), pick(&split.test));
    let mut models = BTreeMap::new();
    let mut histories = BTreeMap::new();
    let mut results = BTreeMap::new();
    for t in Trait::ALL {
        let labels = |idx: &[usize]| {
            idx.iter()
                .map(|&i| prep.records[i].labels.get(t))
                .collect::<Vec<bool>>()
        };
        let (y_train, y_test) = (labels(&split.train), labels(&split.test));
        let held = heldout_history.then_some(HeldOut {
            graphs: &test_g,
            labels: &y_test,
        });
        log::info!("training {t} at level {level}");
        let (params, history) =
            train_trait(&train_g, &y_train, &cfg, t, held).stage(Stage::Train)?;
        let preds: Vec<bool> = predict_many(&params, &test_g, 32)
            .stage(Stage::Evaluate)?
            .into_iter()
            .map(|p| p.label)
            .collect();
        results.insert(t, (preds, y_test));
        models.insert(t, params);
        histories.insert(t, history);
    }
    let report = evaluate_traits(&results).stage(Stage::Evaluate)?;
    Ok(LevelOutcome {
        level,
        models,
        histories,
        report,
    })
}

/// Everything in a run report is a pure function of config and inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub documents: usize,
    pub skipped: Vec<SkippedRecord>,
    pub train_size: usize,
    pub test_size: usize,
    pub level: LevelConfig,
    pub metrics: TraitReport,
}

impl RunReport {
    pub fn to_markdown(&self) -> String {
        format!(
            "# Run report\n\nlevel: {}, edge weights: {}, documents: {} ({} train / {} test), skipped: {}\n\n{}",
            self.level,
            self.config.train.edge_weight_mode,
            self.documents,
            self.train_size,
            self.test_size,
            self.skipped.len(),
            self.metrics.to_markdown()
        )
    }
}

pub fn checkpoint_path(workdir: &Path, level: LevelConfig, t: Trait) -> PathBuf {
    workdir
        .join("checkpoints")
        .join(level.name())
        .join(format!("{}.hpck", t.letter()))
}

/// Write one checkpoint and one history file per trait.
pub fn write_outcome(workdir: &Path, outcome: &LevelOutcome) -> Result<(), PipelineError> {
    let hist = workdir.join("history").join(outcome.level.name());
    fs::create_dir_all(&hist).stage(Stage::Report)?;
    for (t, p) in &outcome.models {
        let path = checkpoint_path(workdir, outcome.level, *t);
        fs::create_dir_all(path.parent().expect("checkpoint has a parent")).stage(Stage::Report)?;
        write_checkpoint(p, &path).stage(Stage::Report)?;
    }
    for (t, h) in &outcome.histories {
        fs::write(hist.join(format!("{}.jsonl", t.letter())), h.to_jsonl()).stage(Stage::Report)?;
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).stage(Stage::Report)?;
    }
    let text = serde_json::to_string_pretty(value).stage(Stage::Report)?;
    fs::write(path, text + "\n").stage(Stage::Report)
}

fn write_report(config: &RunConfig, report: &RunReport) -> Result<(), PipelineError> {
    write_json(&config.workdir.join("report.json"), report)?;
    fs::write(config.workdir.join("report.md"), report.to_markdown()).stage(Stage::Report)
}

fn run_report(
    config: &RunConfig,
    prep: &PreparedCorpus,
    split: &SplitIndices,
    metrics: TraitReport,
) -> RunReport {
    RunReport {
        config: config.clone(),
        documents: prep.docs.len(),
        skipped: prep.skipped.clone(),
        train_size: split.train.len(),
        test_size: split.test.len(),
        level: config.train.level,
        metrics,
    }
}

/// Train one model per trait at the configured level and write
/// checkpoints and histories.
pub fn train_stage(config: &RunConfig) -> Result<LevelOutcome, PipelineError> {
    let prep = prepare(config)?;
    let graphs = build_graphs(&prep, config.train.level)?;
    let split = split_indices(&prep, &config.split_spec())?;
    let outcome = train_and_evaluate(
        &prep,
        &graphs,
        &split,
        &config.train_config(),
        config.heldout_history,
    )?;
    write_outcome(&config.workdir, &outcome)?;
    Ok(outcome)
}

/// Score saved checkpoints on the test split and write the report.
pub fn evaluate_stage(config: &RunConfig) -> Result<RunReport, PipelineError> {
    let prep = prepare(config)?;
    let level = config.train.level;
    let graphs = build_graphs(&prep, level)?;
    let split = split_indices(&prep, &config.split_spec())?;
    let test: Vec<HierGraph> = split.test.iter().map(|&i| graphs[i].clone()).collect();
    let mut results = BTreeMap::new();
    for t in Trait::ALL {
        let path = checkpoint_path(&config.workdir, level, t);
        let params = read_checkpoint(&path)
            .map_err(|e| PipelineError::new(Stage::Evaluate, format!("{}: {e}", path.display())))?;
        let preds = predict_many(&params, &test, 32).stage(Stage::Evaluate)?;
        let labels = split
            .test
            .iter()
            .map(|&i| prep.records[i].labels.get(t))
            .collect();
        results.insert(t, (preds.into_iter().map(|p| p.label).collect(), labels));
    }
    let metrics = evaluate_traits(&results).stage(Stage::Evaluate)?;
    let report = run_report(config, &prep, &split, metrics);
    write_report(config, &report)?;
    Ok(report)
}

/// Run every stage for the configured level and write checkpoints,
/// histories and `report.json` / `report.md` under the workdir.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, PipelineError> {
    let prep = prepare(config)?;
    let graphs = build_graphs(&prep, config.train.level)?;
    let split = split_indices(&prep, &config.split_spec())?;
    let outcome = train_and_evaluate(
        &prep,
        &graphs,
        &split,
        &config.train_config(),
        config.heldout_history,
    )?;
    write_outcome(&config.workdir, &outcome)?;
    let report = run_report(config, &prep, &split, outcome.report);
    write_report(config, &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub table: AblationReport,
    pub per_level: BTreeMap<LevelConfig, TraitReport>,
}

/// Train and evaluate every level in `levels` on one shared split and
/// seed; writes `ablation.json` / `ablation.md` under the workdir.
pub fn run_ablation(
    config: &RunConfig,
    levels: &[LevelConfig],
) -> Result<AblationOutcome, PipelineError> {
    let prep = prepare(config)?;
    let split = split_indices(&prep, &config.split_spec())?;
    let mut table = AblationReport::default();
    let mut per_level = BTreeMap::new();
    for &level in levels {
        let graphs = build_graphs(&prep, level)?;
        let outcome = train_and_evaluate(
            &prep,
            &graphs,
            &split,
            &config.train_config(),
            config.heldout_history,
        )?;
        write_outcome(&config.workdir, &outcome)?;
        let acc = outcome
            .report
            .rows
            .iter()
            .map(|(&t, r)| (t, r.accuracy))
            .collect();
        table.rows.push(AblationRow::new(level, acc));
        per_level.insert(level, outcome.report);
    }
    let out = AblationOutcome { table, per_level };
    write_json(&config.workdir.join("ablation.json"), &out)?;
    fs::write(config.workdir.join("ablation.md"), out.table.to_markdown()).stage(Stage::Report)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub mean: f64,
    pub median: f64,
    pub min: usize,
    pub max: usize,
}

fn summarize(mut v: Vec<usize>) -> CountSummary {
    if v.is_empty() {
        return CountSummary::default();
    }
    v.sort_unstable();
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    };
    CountSummary {
        mean: v.iter().sum::<usize>() as f64 / n as f64,
        median,
        min: v[0],
        max: v[n - 1],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub segmented: usize,
    pub skipped: usize,
    pub labels: BTreeMap<Trait, LabelCounts>,
    pub sentences_per_doc: CountSummary,
    pub words_per_doc: CountSummary,
    pub words_per_sentence: CountSummary,
}

pub fn dataset_stats(records: &[EssayRecord], segmenter: &SegmenterConfig) -> DatasetStats {
    let (docs, report) = segment_corpus(records, segmenter);
    DatasetStats {
        records: records.len(),
        segmented: docs.len(),
        skipped: report.skipped.len(),
        labels: label_distribution(records),
        sentences_per_doc: summarize(docs.iter().map(|d| d.sentence_count()).collect()),
        words_per_doc: summarize(docs.iter().map(|d| d.word_count()).collect()),
        words_per_sentence: summarize(
            docs.iter()
                .flat_map(|d| d.sentences.iter().map(|s| s.words.len()))
                .collect(),
        ),
    }
}

impl DatasetStats {
    pub fn to_markdown(&self) -> String {
        let mut s = format!(
            "# Dataset\n\nrecords: {}, segmented: {}, skipped: {}\n\n| Trait | true | false |\n|---|---|---|\n",
            self.records, self.segmented, self.skipped
        );
        for (t, c) in &self.labels {
            s.push_str(&format!(
                "| {} | {} | {} |\n",
                t.name(),
                c.positive,
                c.negative
            ));
        }
        s.push_str("\n| Count | mean | median | min | max |\n|---|---|---|---|---|\n");
        for (name, c) in [
            ("sentences per document", &self.sentences_per_doc),
            ("words per document", &self.words_per_doc),
            ("words per sentence", &self.words_per_sentence),
        ] {
            s.push_str(&format!(
                "| {name} | {:.2} | {:.1} | {} | {} |\n",
                c.mean, c.median, c.min, c.max
            ));
        }
        s
    }
}
