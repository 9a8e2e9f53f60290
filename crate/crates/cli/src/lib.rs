//! `cqr`: preference-data construction, inference rewriting, retrieval and evaluation.

pub mod config;
mod error;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cqr_core::preference::{MdpoInputs, PreferenceTag, DEFAULT_BETA};

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
use pipeline::Fusion;

#[derive(Debug, Parser)]
#[command(name = "cqr", version, about = "Multi-faceted self-consistency preference data for conversational query rewriting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Pipeline configuration (TOML); relative paths inside resolve against its directory.
    #[arg(short, long, default_value = "cqr.toml")]
    pub config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `workers` (turns processed concurrently).
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Common {
    pub fn load(&self) -> CliResult<PipelineConfig> {
        let mut config = PipelineConfig::load(&self.config)?;
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(w) = self.workers {
            config.workers = w;
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the BM25 index into <output_dir>/index.bin and print its fingerprint.
    Index {
        #[command(flatten)]
        common: Common,
    },
    /// Sample K candidates per turn, score them, and write candidates, scores and preference records.
    Construct {
        #[command(flatten)]
        common: Common,
        /// Candidates sampled per turn (K, default 16). Cost grows linearly with K.
        #[arg(short, long)]
        k: Option<usize>,
        /// Retrieval depth for the retrieval-consistency score (T, default 100).
        #[arg(short, long)]
        t: Option<usize>,
        /// Abort on the first failing turn instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Generate one prefix-guided rewrite per tag and turn into <output_dir>/rewrites.jsonl.
    Rewrite {
        #[command(flatten)]
        common: Common,
        /// Tags to generate, comma separated (e.g. rewrite,retrieval,response). Defaults to `tags` in the config.
        #[arg(long, value_delimiter = ',')]
        tags: Option<Vec<PreferenceTag>>,
        /// Also generate a pseudo response per rewrite for query expansion.
        #[arg(long)]
        expand: bool,
        #[arg(long)]
        strict: bool,
    },
    /// Retrieve with the tagged rewrites and write a six-column run file (depth 100).
    Retrieve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "concat")]
        fusion: Fusion,
        /// Tags whose rewrites are used, comma separated. Defaults to `tags` in the config.
        #[arg(long, value_delimiter = ',')]
        tags: Option<Vec<PreferenceTag>>,
        /// Defaults to <output_dir>/rewrites.jsonl.
        #[arg(long)]
        rewrites: Option<PathBuf>,
        /// Defaults to <output_dir>/run.txt; queries are logged next to it as <name>.queries.tsv.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "cqr")]
        run_tag: String,
    },
    /// Score a run file against qrels (MRR, NDCG@3, R@10, R@100).
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Qrels lines `qid 0 pid rel`.
        #[arg(long)]
        qrels: PathBuf,
        /// JSON report path; defaults to the run path with extension `eval.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Ignore run queries that have no judgments instead of failing.
        #[arg(long)]
        allow_unjudged: bool,
    },
    /// Kendall tau between score dimensions, rewrite statistics and retrieval overlap.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Also correlate each dimension with majority-vote counts.
        #[arg(long)]
        majority_vote: bool,
    },
    /// Loss for one preference pair from sequence log-probabilities.
    #[command(allow_negative_numbers = true)]
    MdpoLoss {
        logp_theta_pos: f64,
        logp_ref_pos: f64,
        logp_theta_neg: f64,
        logp_ref_neg: f64,
        #[arg(long, default_value_t = DEFAULT_BETA)]
        beta: f64,
    },
}

fn tags_or_default(tags: &Option<Vec<PreferenceTag>>, config: &PipelineConfig) -> CliResult<Vec<PreferenceTag>> {
    let tags = tags.clone().unwrap_or_else(|| config.tags.clone());
    if tags.is_empty() {
        return Err(error::usage("no tags requested"));
    }
    Ok(tags)
}

/// Executes one subcommand, printing its summary to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Index { common } => {
            let config = common.load()?;
            let out = pipeline::cmd_index(&config)?;
            println!("{}  {} ({} passages)", out.fingerprint, out.path.display(), out.doc_count);
        }
        Command::Construct { common, k, t, strict } => {
            let mut config = common.load()?;
            config.k = k.unwrap_or(config.k);
            config.t = t.unwrap_or(config.t);
            config.validate().map_err(error::usage)?;
            let s = pipeline::cmd_construct(&config, strict)?;
            println!(
                "{} records from {}/{} turns (skipped dimensions: {}; failed turns: {})",
                s.records,
                s.constructed,
                s.turns,
                s.skipped.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", "),
                s.failed_turns.len()
            );
        }
        Command::Rewrite { common, tags, expand, strict } => {
            let mut config = common.load()?;
            config.expand |= expand;
            let tags = tags_or_default(&tags, &config)?;
            let out = pipeline::cmd_rewrite(&config, &tags, strict)?;
            println!("rewrote {}/{} turns ({} failed)", out.rewritten, out.turns, out.failed_turns.len());
        }
        Command::Retrieve { common, fusion, tags, rewrites, output, run_tag } => {
            let config = common.load()?;
            let tags = tags_or_default(&tags, &config)?;
            let rewrites = rewrites.unwrap_or_else(|| config.output(config::REWRITES_FILE));
            let output = output.unwrap_or_else(|| config.output(config::RUN_FILE));
            let out = pipeline::cmd_retrieve(&config, &tags, fusion, &rewrites, &output, &run_tag)?;
            println!("{} queries -> {} (queries logged to {})", out.queries, out.run.display(), out.audit.display());
        }
        Command::Evaluate { run, qrels, report, allow_unjudged } => {
            let report = report.unwrap_or_else(|| run.with_extension("eval.json"));
            let r = report::cmd_evaluate(&run, &qrels, &report, allow_unjudged)?;
            print!("{}", r.summary_table());
        }
        Command::Analyze { common, majority_vote } => {
            let config = common.load()?;
            let r = report::cmd_analyze(&config, majority_vote)?;
            print!("{}", r.summary());
        }
        Command::MdpoLoss { logp_theta_pos, logp_ref_pos, logp_theta_neg, logp_ref_neg, beta } => {
            let out = report::cmd_mdpo_loss(MdpoInputs { logp_theta_pos, logp_ref_pos, logp_theta_neg, logp_ref_neg, beta })?;
            println!("loss {:.6}", out.loss);
            println!("margin {:.6}", out.margin);
            println!("grad {:.6}", out.grad);
        }
    }
    Ok(())
}
