//! The pipeline as file-to-file steps over one working directory.
//!
//! Every step reads its inputs from the workdir, writes its outputs there
//! together with a provenance sidecar, and is deterministic in the seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

use lwr_core::clicksim::{generate_world, sample_eval_pairs, seeded_rng, simulate_logs, ImpressionEvent, World};
use lwr_core::corpus::{build_vocab, encode, AnnotatedPair, TextSequence, Vocabulary};
use lwr_core::eval::{evaluate, score_pairs, EvalReport};
use lwr_core::masm::{MasmParameters, Tower};
use lwr_core::pipeline::{build_click_pairs, build_lwr, estimate_bias, LwrExample, PositionBiasTable, RelevanceType, StatsReport};
use lwr_core::serving::{build_store, FastScorer};
use lwr_core::training::{finetune, train_click, train_lwr, ClickExample, TrainOutcome};

use crate::bench::{run_bench, BenchPair, BenchReport};
use crate::container::{load_checkpoint, load_store, save_checkpoint, save_store, Checkpoint};
use crate::config::{split_eval, split_heldout, RunConfig};
use crate::error::{LwrError, Result};
use crate::formats::{
    read_json, read_jsonl, read_vocab, write_bytes, write_json, write_jsonl, write_sidecar, write_vocab, AnnotatedRow,
    ClickRow, ItemRow, LwrRow, Provenance,
};

/// Artifact locations inside one working directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workdir {
    root: PathBuf,
}

impl Workdir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn world(&self) -> PathBuf {
        self.path("world.json")
    }
    pub fn logs(&self) -> PathBuf {
        self.path("logs.jsonl")
    }
    pub fn vocab(&self) -> PathBuf {
        self.path("vocab.txt")
    }
    pub fn queries(&self) -> PathBuf {
        self.path("queries.jsonl")
    }
    pub fn products(&self) -> PathBuf {
        self.path("products.jsonl")
    }
    pub fn annotated(&self, split: &str) -> PathBuf {
        self.path(&format!("annotated_{split}.jsonl"))
    }
    pub fn bias(&self) -> PathBuf {
        self.path("bias.json")
    }
    pub fn lwr(&self) -> PathBuf {
        self.path("lwr.jsonl")
    }
    pub fn lwr_split(&self, split: &str) -> PathBuf {
        self.path(&format!("lwr_{split}.jsonl"))
    }
    pub fn lwr_stats(&self) -> PathBuf {
        self.path("lwr_stats.json")
    }
    pub fn click_pairs(&self) -> PathBuf {
        self.path("click_pairs.jsonl")
    }
    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.path(&format!("model_{model}.masm"))
    }
    pub fn train_log(&self, model: &str) -> PathBuf {
        self.path(&format!("train_log_{model}.jsonl"))
    }
    pub fn report(&self, model: &str) -> PathBuf {
        self.path(&format!("report_{model}.json"))
    }
    pub fn histogram(&self, model: &str) -> PathBuf {
        self.path(&format!("histogram_{model}.csv"))
    }
    pub fn ablation(&self) -> PathBuf {
        self.path("ablation.json")
    }
    pub fn store(&self, side: Tower) -> PathBuf {
        self.path(match side {
            Tower::Query => "store_query.mavs",
            Tower::Product => "store_product.mavs",
        })
    }
    pub fn bench(&self) -> PathBuf {
        self.path("bench.json")
    }
    pub fn summary(&self) -> PathBuf {
        self.path("summary.json")
    }
}

pub const MODEL_LWR: &str = "lwr";
pub const MODEL_CLICK: &str = "click";
pub const MODEL_FINETUNE: &str = "lwr_finetune";
pub const EVAL_SPLITS: [&str; 3] = ["finetune", "val", "test"];

fn provenance(config: &RunConfig) -> Provenance {
    Provenance::new(config.seed, config)
}

fn write_jsonl_with_meta<'a, T: Serialize + 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = &'a T>,
    config: &RunConfig,
) -> Result<()> {
    write_jsonl(path, rows)?;
    write_sidecar(path, &provenance(config))
}

fn write_json_with_meta<T: Serialize>(path: &Path, value: &T, config: &RunConfig) -> Result<()> {
    write_json(path, value)?;
    write_sidecar(path, &provenance(config))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(LwrError::format(path, "required input is missing; run the producing step first"))
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n_queries: usize,
    pub n_products: usize,
    pub n_rewrites: usize,
    pub n_events: usize,
    pub skipped_sessions: usize,
    pub vocab_size: usize,
    pub n_annotated: BTreeMap<String, usize>,
}

/// World, logs, vocabulary, exportable items and the labelled eval splits.
pub fn simulate(config: &RunConfig, wd: &Workdir) -> Result<SimulateSummary> {
    let world = generate_world(&config.world)?;
    let sim = simulate_logs(&world, config.n_sessions, &config.world)?;
    info!("simulated {} impressions ({} sessions skipped)", sim.events.len(), sim.skipped_sessions);
    let streams = world.token_streams().map(|s| s.iter().map(String::as_str));
    let vocab = build_vocab(streams, config.vocab_min_freq, config.max_vocab)?;

    write_json_with_meta(&wd.world(), &world, config)?;
    write_jsonl_with_meta(&wd.logs(), &sim.events, config)?;
    write_vocab(&wd.vocab(), &vocab)?;
    write_sidecar(&wd.vocab(), &provenance(config))?;

    let queries: Vec<ItemRow> = world
        .queries
        .iter()
        .map(|q| ItemRow {
            id: q.id.to_string(),
            tokens: Some(q.tokens.clone()),
            text: None,
        })
        .collect();
    let products: Vec<ItemRow> = world
        .products
        .iter()
        .map(|p| ItemRow {
            id: p.id.to_string(),
            tokens: Some(p.tokens.clone()),
            text: None,
        })
        .collect();
    write_jsonl_with_meta(&wd.queries(), &queries, config)?;
    write_jsonl_with_meta(&wd.products(), &products, config)?;

    let pairs = sample_eval_pairs(
        &world,
        config.eval.n_pairs,
        config.eval.positive_share,
        config.eval.pool_depth,
        config.seed,
    )?;
    let (ft, val, test) = split_eval(&pairs, &config.eval);
    let mut n_annotated = BTreeMap::new();
    for (split, rows) in EVAL_SPLITS.iter().zip([ft, val, test]) {
        let rows = rows
            .iter()
            .map(|p| {
                Ok(AnnotatedRow {
                    query_id: Some(p.query_id),
                    product_id: Some(p.product_id),
                    query_tokens: world.query(p.query_id)?.tokens.clone(),
                    title_tokens: world.product(p.product_id)?.tokens.clone(),
                    label: p.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        n_annotated.insert(split.to_string(), rows.len());
        write_jsonl_with_meta(&wd.annotated(split), &rows, config)?;
    }

    Ok(SimulateSummary {
        n_queries: world.queries.len(),
        n_products: world.products.len(),
        n_rewrites: world.rewrite_table.len(),
        n_events: sim.events.len(),
        skipped_sessions: sim.skipped_sessions,
        vocab_size: vocab.size(),
        n_annotated,
    })
}

// ------------------------------------------------------------ estimate-bias

pub fn estimate_bias_step(config: &RunConfig, wd: &Workdir) -> Result<PositionBiasTable> {
    require(&wd.logs())?;
    let events: Vec<ImpressionEvent> = read_jsonl(&wd.logs())?;
    let table = estimate_bias(&events, &config.bias)?;
    info!("relative bias {:?}", table.relative);
    write_json_with_meta(&wd.bias(), &table, config)?;
    Ok(table)
}

// ---------------------------------------------------------------- build-lwr

/// Level-wise dataset, its train/held-out split and the click-pair baseline data.
pub fn build_lwr_step(config: &RunConfig, wd: &Workdir) -> Result<StatsReport> {
    for p in [wd.logs(), wd.bias(), wd.world()] {
        require(&p)?;
    }
    let events: Vec<ImpressionEvent> = read_jsonl(&wd.logs())?;
    let bias: PositionBiasTable = read_json(&wd.bias())?;
    let world: World = read_json(&wd.world())?;
    let out = build_lwr(&events, &bias, &world, &config.lwr)?;
    info!("level-wise dataset: {} records", out.records.len());

    let to_row = |r: &lwr_core::pipeline::LwrRecord| -> Result<LwrRow> {
        Ok(LwrRow {
            query_id: r.query_id,
            product_id: r.product_id,
            query_tokens: world.query(r.query_id)?.tokens.clone(),
            title_tokens: world.product(r.product_id)?.tokens.clone(),
            rtype: r.rtype,
        })
    };
    let rows = out.records.iter().map(to_row).collect::<Result<Vec<_>>>()?;
    write_jsonl_with_meta(&wd.lwr(), &rows, config)?;
    write_json_with_meta(&wd.lwr_stats(), &out.stats, config)?;

    let (train, held) = split_heldout(&out.records, config.heldout_share, config.seed);
    let train = train.iter().map(to_row).collect::<Result<Vec<_>>>()?;
    let held = held.iter().map(to_row).collect::<Result<Vec<_>>>()?;
    write_jsonl_with_meta(&wd.lwr_split("train"), &train, config)?;
    write_jsonl_with_meta(&wd.lwr_split("heldout"), &held, config)?;

    let clicks = build_click_pairs(&events, config.max_click_pairs, config.seed);
    let clicks = clicks
        .iter()
        .map(|c| {
            Ok(ClickRow {
                query_tokens: world.query(c.query_id)?.tokens.clone(),
                clicked_tokens: world.product(c.clicked)?.tokens.clone(),
                unclicked_tokens: world.product(c.unclicked)?.tokens.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl_with_meta(&wd.click_pairs(), &clicks, config)?;
    Ok(out.stats)
}

// ----------------------------------------------------------------- datasets

/// Encoded datasets loaded from the workdir against its vocabulary.
pub struct Datasets {
    pub vocab: Vocabulary,
    pub model: lwr_core::masm::ModelConfig,
}

impl Datasets {
    pub fn load(config: &RunConfig, wd: &Workdir) -> Result<Self> {
        require(&wd.vocab())?;
        let vocab = read_vocab(&wd.vocab())?;
        let model = lwr_core::masm::ModelConfig {
            vocab_size: vocab.size(),
            ..config.model.clone()
        };
        Ok(Self { vocab, model })
    }

    fn query(&self, tokens: &[String]) -> TextSequence {
        encode(tokens, &self.vocab, self.model.query_max_len)
    }

    fn title(&self, tokens: &[String]) -> TextSequence {
        encode(tokens, &self.vocab, self.model.title_max_len)
    }

    pub fn lwr(&self, path: &Path) -> Result<Vec<LwrExample>> {
        require(path)?;
        let rows: Vec<LwrRow> = read_jsonl(path)?;
        Ok(rows
            .iter()
            .map(|r| LwrExample {
                query: self.query(&r.query_tokens),
                title: self.title(&r.title_tokens),
                rtype: r.rtype,
            })
            .collect())
    }

    pub fn annotated(&self, path: &Path) -> Result<Vec<AnnotatedPair>> {
        require(path)?;
        let rows: Vec<AnnotatedRow> = read_jsonl(path)?;
        rows.iter()
            .map(|r| {
                if r.label > 1 {
                    return Err(LwrError::format(path, format!("label {} is not 0 or 1", r.label)));
                }
                Ok(AnnotatedPair {
                    query: self.query(&r.query_tokens),
                    title: self.title(&r.title_tokens),
                    label: r.label,
                })
            })
            .collect()
    }

    pub fn clicks(&self, path: &Path) -> Result<Vec<ClickExample>> {
        require(path)?;
        let rows: Vec<ClickRow> = read_jsonl(path)?;
        Ok(rows
            .iter()
            .map(|r| ClickExample {
                query: self.query(&r.query_tokens),
                clicked: self.title(&r.clicked_tokens),
                unclicked: self.title(&r.unclicked_tokens),
            })
            .collect())
    }

    /// The shared starting point of every trained model.
    pub fn init_params(&self, config: &RunConfig) -> Result<MasmParameters> {
        Ok(MasmParameters::init(&self.model, config.seed)?)
    }
}

// -------------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: String,
    pub fingerprint: String,
    pub best_step: u64,
    pub best_val_roc_auc: f64,
    pub steps: u64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

fn save_trained(config: &RunConfig, wd: &Workdir, data: &Datasets, model: &str, outcome: &TrainOutcome) -> Result<TrainSummary> {
    let fingerprint = save_checkpoint(
        &wd.checkpoint(model),
        &outcome.best,
        data.vocab.content_hash(),
        Some(provenance(config)),
    )?;
    write_jsonl_with_meta(&wd.train_log(model), &outcome.log, config)?;
    info!(
        "{model}: best val roc_auc {:.4} at step {} of {}",
        outcome.best_val_roc_auc, outcome.best_step, outcome.steps
    );
    Ok(TrainSummary {
        model: model.into(),
        fingerprint,
        best_step: outcome.best_step,
        best_val_roc_auc: outcome.best_val_roc_auc,
        steps: outcome.steps,
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
    })
}

/// Trains the level-wise model from the training split.
pub fn train_step(config: &RunConfig, wd: &Workdir) -> Result<TrainSummary> {
    let data = Datasets::load(config, wd)?;
    let train = data.lwr(&wd.lwr_split("train"))?;
    let val = data.annotated(&wd.annotated("val"))?;
    let outcome = train_lwr(&train, &val, data.init_params(config)?, &config.train)?;
    save_trained(config, wd, &data, MODEL_LWR, &outcome)
}

/// Trains the pairwise click baseline from the same initialization.
pub fn train_click_step(config: &RunConfig, wd: &Workdir) -> Result<TrainSummary> {
    let data = Datasets::load(config, wd)?;
    let clicks = data.clicks(&wd.click_pairs())?;
    let val = data.annotated(&wd.annotated("val"))?;
    let outcome = train_click(&clicks, &val, data.init_params(config)?, &config.click)?;
    save_trained(config, wd, &data, MODEL_CLICK, &outcome)
}

pub fn load_model(wd: &Workdir, model: &str, vocab: &Vocabulary) -> Result<Checkpoint> {
    let path = wd.checkpoint(model);
    require(&path)?;
    let ckpt = load_checkpoint(&path)?;
    ckpt.check_vocab(vocab.content_hash())?;
    Ok(ckpt)
}

/// Fine-tunes the level-wise model on the annotated fine-tuning split.
pub fn finetune_step(config: &RunConfig, wd: &Workdir) -> Result<TrainSummary> {
    let data = Datasets::load(config, wd)?;
    let base = load_model(wd, MODEL_LWR, &data.vocab)?;
    let pairs = data.annotated(&wd.annotated("finetune"))?;
    let val = data.annotated(&wd.annotated("val"))?;
    let outcome = finetune(base.params, &pairs, &val, &config.finetune)?;
    save_trained(config, wd, &data, MODEL_FINETUNE, &outcome)
}

// ----------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub model: String,
    pub roc_auc: f64,
    pub neg_pr_auc: f64,
    /// Share of Good test pairs scored above 0.5.
    pub good_above_half: f64,
    pub per_type_medians: BTreeMap<String, f64>,
}

fn eval_params(params: &MasmParameters, test: &[AnnotatedPair], held: &[LwrExample], model: &str) -> Result<(EvalReport, ModelEval)> {
    let report = evaluate(params, test, held)?;
    let (scores, labels) = score_pairs(params, test)?;
    let eval = ModelEval {
        model: model.into(),
        roc_auc: report.roc_auc,
        neg_pr_auc: report.neg_pr_auc,
        good_above_half: EvalReport::good_share_above(&scores, &labels, 0.5),
        per_type_medians: report.per_type_medians.clone(),
    };
    Ok((report, eval))
}

/// Test-set report, histogram CSV and held-out per-type medians for one model.
pub fn evaluate_step(config: &RunConfig, wd: &Workdir, model: &str) -> Result<ModelEval> {
    let data = Datasets::load(config, wd)?;
    let ckpt = load_model(wd, model, &data.vocab)?;
    let test = data.annotated(&wd.annotated("test"))?;
    let held = data.lwr(&wd.lwr_split("heldout"))?;
    let (report, eval) = eval_params(&ckpt.params, &test, &held, model)?;
    write_json_with_meta(&wd.report(model), &report, config)?;
    write_bytes(&wd.histogram(model), report.histogram.to_csv().as_bytes())?;
    write_sidecar(&wd.histogram(model), &provenance(config))?;
    info!("{model}: test roc_auc {:.4}, neg_pr_auc {:.4}", eval.roc_auc, eval.neg_pr_auc);
    Ok(eval)
}

// ------------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dropped: RelevanceType,
    pub n_train: usize,
    pub roc_auc: f64,
    pub neg_pr_auc: f64,
    pub best_val_roc_auc: f64,
}

/// Retrains without one type and records the row in the ablation table,
/// replacing any earlier row for the same type.
pub fn ablate_step(config: &RunConfig, wd: &Workdir, drop: RelevanceType) -> Result<AblationRow> {
    let data = Datasets::load(config, wd)?;
    let train: Vec<LwrExample> = data
        .lwr(&wd.lwr_split("train"))?
        .into_iter()
        .filter(|e| e.rtype != drop)
        .collect();
    let val = data.annotated(&wd.annotated("val"))?;
    let test = data.annotated(&wd.annotated("test"))?;
    let outcome = train_lwr(&train, &val, data.init_params(config)?, &config.train)?;
    let (report, _) = eval_params(&outcome.best, &test, &[], &format!("without_{drop}"))?;
    write_jsonl_with_meta(&wd.train_log(&format!("without_{drop}")), &outcome.log, config)?;
    let row = AblationRow {
        dropped: drop,
        n_train: train.len(),
        roc_auc: report.roc_auc,
        neg_pr_auc: report.neg_pr_auc,
        best_val_roc_auc: outcome.best_val_roc_auc,
    };
    info!("without {drop}: test roc_auc {:.4}", row.roc_auc);

    let mut rows: Vec<AblationRow> = if wd.ablation().exists() {
        read_json(&wd.ablation())?
    } else {
        Vec::new()
    };
    rows.retain(|r| r.dropped != drop);
    rows.push(row.clone());
    rows.sort_by_key(|r| r.dropped);
    write_json_with_meta(&wd.ablation(), &rows, config)?;
    Ok(row)
}

// ------------------------------------------------------------ export/serve

fn read_items(path: &Path, data: &Datasets, side: Tower) -> Result<Vec<(String, TextSequence)>> {
    require(path)?;
    let rows: Vec<ItemRow> = read_jsonl(path)?;
    Ok(rows
        .iter()
        .map(|r| {
            let tokens = r.tokens();
            let seq = match side {
                Tower::Query => data.query(&tokens),
                Tower::Product => data.title(&tokens),
            };
            (r.id.clone(), seq)
        })
        .collect())
}

pub fn default_items(wd: &Workdir, side: Tower) -> PathBuf {
    match side {
        Tower::Query => wd.queries(),
        Tower::Product => wd.products(),
    }
}

/// Encodes every item through one tower into a 32-bit vector store.
pub fn export_vectors_step(
    config: &RunConfig,
    wd: &Workdir,
    model: &str,
    side: Tower,
    items: &Path,
    out: &Path,
) -> Result<usize> {
    let data = Datasets::load(config, wd)?;
    let ckpt = load_model(wd, model, &data.vocab)?;
    let items = read_items(items, &data, side)?;
    let store = build_store(&ckpt.params, items.iter().map(|(id, s)| (id.as_str(), s)), side, &ckpt.fingerprint)?;
    save_store(out, &store, Some(provenance(config)))?;
    info!("exported {} {side:?} vectors to {}", store.len(), out.display());
    Ok(store.len())
}

// -------------------------------------------------------------------- bench

/// Benchmarks `n_pairs` seeded random (query, product) pairs from the item files.
pub fn bench_step(config: &RunConfig, wd: &Workdir, model: &str, n_pairs: usize) -> Result<BenchReport> {
    let data = Datasets::load(config, wd)?;
    let ckpt = load_model(wd, model, &data.vocab)?;
    let qstore = load_store(&wd.store(Tower::Query))?;
    let pstore = load_store(&wd.store(Tower::Product))?;
    let scorer = FastScorer::new(&ckpt.params, &ckpt.fingerprint, &qstore, &pstore)?;
    let queries = read_items(&wd.queries(), &data, Tower::Query)?;
    let products = read_items(&wd.products(), &data, Tower::Product)?;
    if queries.is_empty() || products.is_empty() {
        return Err(LwrError::Usage("bench needs at least one query and one product".into()));
    }
    let mut rng = seeded_rng(config.seed, 40);
    let pairs: Vec<BenchPair<'_>> = (0..n_pairs)
        .map(|_| {
            let (qid, q) = &queries[rng.gen_range(0..queries.len())];
            let (pid, p) = &products[rng.gen_range(0..products.len())];
            BenchPair {
                query: q,
                title: p,
                query_id: qid,
                product_id: pid,
            }
        })
        .collect();
    let report = run_bench(&ckpt.params, &scorer, &pairs)?;
    info!(
        "full {:.0} ns/pair, precomputed {:.0} ns/pair, speedup {:.2}x",
        report.full_ns_per_pair, report.precomputed_ns_per_pair, report.speedup
    );
    write_json_with_meta(&wd.bench(), &report, config)?;
    Ok(report)
}

// ---------------------------------------------------------------------- e2e

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub config: RunConfig,
    pub simulate: SimulateSummary,
    pub relative_bias: Vec<f64>,
    pub lwr_stats: StatsReport,
    pub training: Vec<TrainSummary>,
    pub models: Vec<ModelEval>,
    pub ablations: Vec<AblationRow>,
    /// Largest |full − precomputed| over the test pairs with exported stores.
    pub path_equivalence_max_diff: f64,
}

impl Summary {
    pub fn model(&self, name: &str) -> Option<&ModelEval> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn ablation(&self, t: RelevanceType) -> Option<&AblationRow> {
        self.ablations.iter().find(|a| a.dropped == t)
    }
}

fn path_equivalence(config: &RunConfig, wd: &Workdir) -> Result<f64> {
    let data = Datasets::load(config, wd)?;
    let ckpt = load_model(wd, MODEL_LWR, &data.vocab)?;
    let qstore = load_store(&wd.store(Tower::Query))?;
    let pstore = load_store(&wd.store(Tower::Product))?;
    let scorer = FastScorer::new(&ckpt.params, &ckpt.fingerprint, &qstore, &pstore)?;
    let rows: Vec<AnnotatedRow> = read_jsonl(&wd.annotated("test"))?;
    let mut worst: f64 = 0.0;
    for r in &rows {
        let (Some(q), Some(p)) = (r.query_id, r.product_id) else {
            continue;
        };
        let full = lwr_core::masm::predict(&data.query(&r.query_tokens), &data.title(&r.title_tokens), &ckpt.params)?;
        let fast = scorer.score_ids(&q.to_string(), &p.to_string())?;
        worst = worst.max((full - fast).abs());
    }
    Ok(worst)
}

/// Runs every step on one seed and writes `summary.json`. With `bench_pairs`
/// set, also times the serving paths into `bench.json`, which is kept out of
/// the summary so the summary stays byte-reproducible.
pub fn e2e(config: &RunConfig, wd: &Workdir, bench_pairs: Option<usize>) -> Result<Summary> {
    let simulate = simulate(config, wd)?;
    let bias = estimate_bias_step(config, wd)?;
    let lwr_stats = build_lwr_step(config, wd)?;
    let training = vec![train_step(config, wd)?, train_click_step(config, wd)?, finetune_step(config, wd)?];
    let models = [MODEL_LWR, MODEL_CLICK, MODEL_FINETUNE]
        .iter()
        .map(|m| evaluate_step(config, wd, m))
        .collect::<Result<Vec<_>>>()?;
    if wd.ablation().exists() {
        std::fs::remove_file(wd.ablation()).map_err(|e| LwrError::io(wd.ablation(), e))?;
    }
    let ablations = RelevanceType::ALL
        .iter()
        .map(|&t| ablate_step(config, wd, t))
        .collect::<Result<Vec<_>>>()?;
    for side in [Tower::Query, Tower::Product] {
        export_vectors_step(config, wd, MODEL_LWR, side, &default_items(wd, side), &wd.store(side))?;
    }
    let path_equivalence_max_diff = path_equivalence(config, wd)?;
    if let Some(n) = bench_pairs {
        bench_step(config, wd, MODEL_LWR, n)?;
    }
    let summary = Summary {
        seed: config.seed,
        config: config.clone(),
        simulate,
        relative_bias: bias.relative,
        lwr_stats,
        training,
        models,
        ablations,
        path_equivalence_max_diff,
    };
    write_json(&wd.summary(), &summary)?;
    Ok(summary)
}
