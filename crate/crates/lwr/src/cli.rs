//! Command-line entry point: one subcommand per pipeline step.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};

use lwr_core::masm::Tower;
use lwr_core::pipeline::RelevanceType;

use crate::config::RunConfig;
use crate::container::load_store;
use crate::error::{LwrError, Result};
use crate::formats::{read_json, read_vocab};
use crate::server::{serve, ServiceState, DEFAULT_BATCH_LIMIT};
use crate::workflow::{self as wf, Workdir, MODEL_LWR};

#[derive(Debug, Parser)]
#[command(name = "lwr", version, about = "Level-wise relevance training and multi-aspect matching")]
pub struct Cli {
    /// JSON run configuration; missing keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic component; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory holding all artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Query,
    Product,
}

impl From<Side> for Tower {
    fn from(s: Side) -> Self {
        match s {
            Side::Query => Tower::Query,
            Side::Product => Tower::Product,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum DropType {
    StrongRelevant,
    Relevant,
    WeakRelevant,
    WeakIrrelevant,
    StrongIrrelevant,
}

impl From<DropType> for RelevanceType {
    fn from(d: DropType) -> Self {
        match d {
            DropType::StrongRelevant => RelevanceType::StrongRelevant,
            DropType::Relevant => RelevanceType::Relevant,
            DropType::WeakRelevant => RelevanceType::WeakRelevant,
            DropType::WeakIrrelevant => RelevanceType::WeakIrrelevant,
            DropType::StrongIrrelevant => RelevanceType::StrongIrrelevant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainData {
    /// Level-wise dataset with the threshold loss.
    Lwr,
    /// Clicked/unclicked pairs with the pairwise loss.
    Click,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the world, impression logs, vocabulary and annotated splits.
    Simulate,
    /// Estimate the position-bias table from the randomized bucket.
    EstimateBias,
    /// Build the level-wise dataset, its held-out split and click pairs.
    BuildLwr,
    /// Train a model from the shared initialization.
    Train {
        #[arg(long, value_enum, default_value = "lwr")]
        data: TrainData,
    },
    /// Fine-tune the level-wise model on annotated pairs.
    Finetune,
    /// Score the annotated test split and write report and histogram.
    Evaluate {
        /// Model name, e.g. lwr, click, lwr_finetune.
        #[arg(long, default_value = MODEL_LWR)]
        model: String,
    },
    /// Retrain without one relevance type and update the ablation table.
    Ablate {
        #[arg(long, value_enum)]
        drop: DropType,
    },
    /// Precompute aspect vectors for every item of one side.
    ExportVectors {
        #[arg(long, value_enum)]
        side: Side,
        #[arg(long, default_value = MODEL_LWR)]
        model: String,
        /// JSONL items with `id` and `tokens` or `text`; defaults to the simulated items.
        #[arg(long)]
        items: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve scores over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value = MODEL_LWR)]
        model: String,
        #[arg(long, default_value_t = DEFAULT_BATCH_LIMIT)]
        batch_limit: usize,
        /// Serve text requests only, without loading vector stores.
        #[arg(long)]
        no_stores: bool,
    },
    /// Time the full forward pass against the precomputed path.
    Bench {
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value = MODEL_LWR)]
        model: String,
    },
    /// Run the whole pipeline and write summary.json.
    E2e {
        /// Pairs for the serving benchmark; 0 skips it.
        #[arg(long, default_value_t = 10_000)]
        bench_pairs: usize,
    },
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => {
                let overlay: serde_json::Value = read_json(path)?;
                RunConfig::from_overlay(overlay).map_err(|e| LwrError::format(path, e.to_string()))?
            }
            None => RunConfig::default(),
        };
        let seed = self.seed.unwrap_or(base.seed);
        Ok(base.with_seed(seed))
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

pub fn execute(cli: &Cli) -> Result<()> {
    let config = cli.run_config()?;
    let wd = Workdir::new(&cli.workdir);
    info!("workdir {}, seed {}", wd.root().display(), config.seed);
    match &cli.command {
        Command::Simulate => print_json(&wf::simulate(&config, &wd)?),
        Command::EstimateBias => print_json(&wf::estimate_bias_step(&config, &wd)?),
        Command::BuildLwr => print_json(&wf::build_lwr_step(&config, &wd)?),
        Command::Train { data } => print_json(&match data {
            TrainData::Lwr => wf::train_step(&config, &wd)?,
            TrainData::Click => wf::train_click_step(&config, &wd)?,
        }),
        Command::Finetune => print_json(&wf::finetune_step(&config, &wd)?),
        Command::Evaluate { model } => print_json(&wf::evaluate_step(&config, &wd, model)?),
        Command::Ablate { drop } => print_json(&wf::ablate_step(&config, &wd, (*drop).into())?),
        Command::ExportVectors { side, model, items, out } => {
            let side: Tower = (*side).into();
            let items = items.clone().unwrap_or_else(|| wf::default_items(&wd, side));
            let out = out.clone().unwrap_or_else(|| wd.store(side));
            let n = wf::export_vectors_step(&config, &wd, model, side, &items, &out)?;
            print_json(&serde_json::json!({"exported": n, "store": out}));
        }
        Command::Serve {
            addr,
            model,
            batch_limit,
            no_stores,
        } => {
            let vocab = read_vocab(&wd.vocab())?;
            let ckpt = wf::load_model(&wd, model, &vocab)?;
            let stores = if *no_stores {
                None
            } else {
                Some((load_store(&wd.store(Tower::Query))?, load_store(&wd.store(Tower::Product))?))
            };
            let state = Arc::new(ServiceState::new(ckpt, vocab, stores, *batch_limit)?);
            let runtime = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()
                .map_err(|e| LwrError::Server(e.to_string()))?;
            runtime.block_on(serve(state, *addr))?;
        }
        Command::Bench { pairs, model } => print_json(&wf::bench_step(&config, &wd, model, *pairs)?),
        Command::E2e { bench_pairs } => {
            let bench = (*bench_pairs > 0).then_some(*bench_pairs);
            let summary = wf::e2e(&config, &wd, bench)?;
            for m in &summary.models {
                println!("{:<14} roc_auc {:.4}  neg_pr_auc {:.4}", m.model, m.roc_auc, m.neg_pr_auc);
            }
            for a in &summary.ablations {
                println!("without {:<18} roc_auc {:.4}", a.dropped.as_str(), a.roc_auc);
            }
            println!("summary written to {}", wd.summary().display());
        }
    }
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("LWR_LOG_LEVEL", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses arguments, runs the command and returns the process exit status:
/// 0 on success, 1 on usage errors, 2 on data or validation errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["lwr", "--no-such-flag", "simulate"]), 1);
        assert_eq!(run(["lwr", "frobnicate"]), 1);
        assert_eq!(run(["lwr", "ablate", "--drop", "nonsense"]), 1);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(["lwr", "--help"]), 0);
    }

    #[test]
    fn seed_flag_overrides_config() {
        let cli = Cli::try_parse_from(["lwr", "--seed", "5", "simulate"]).unwrap();
        let c = cli.run_config().unwrap();
        assert_eq!((c.seed, c.world.seed, c.train.shuffle_seed), (5, 5, 5));
    }

    #[test]
    fn drop_names_match_relevance_types() {
        for t in RelevanceType::ALL {
            let d = DropType::from_str(t.as_str(), false).unwrap();
            assert_eq!(RelevanceType::from(d), t);
        }
    }

    #[test]
    fn missing_inputs_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let wd = dir.path().to_str().unwrap();
        assert_eq!(run(["lwr", "--workdir", wd, "estimate-bias"]), 2);
        assert_eq!(run(["lwr", "--workdir", wd, "train"]), 2);
    }
}
