//! Command-line front end: pipeline stages, evaluation and the review server.

pub mod server;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dataref::docparse::Corpus;
use dataref::extract::{self, CandidateSpan, DataReference, MatchMode, SpanRecord};
use dataref::linkage::LinkResult;
use dataref::pipeline::{self, Config, PipelineError, RunOptions, Stage, StageStatus};
use dataref::review::{self, ReviewService};
use dataref::{jsonl, Execution};

#[derive(Debug, Parser)]
#[command(name = "dataref", version, about = "Find, link and review dataset references in publications")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every stage, resuming where inputs are unchanged.
    Run(StageArgs),
    /// Run through the corpus search stage.
    Search(StageArgs),
    /// Run through full-text acquisition.
    Acquire(StageArgs),
    /// Run through parsing and sentence segmentation.
    Parse(StageArgs),
    /// Run through reference detection.
    Extract(StageArgs),
    /// Run through catalog linkage.
    Link(StageArgs),
    /// Run through the corpus report (same as `run`).
    Report(StageArgs),
    /// Score predicted spans against gold annotations.
    Eval(EvalArgs),
    /// Serve the review queue over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[arg(long, env = "DATAREF_CONFIG")]
    pub config: PathBuf,
    /// Disable worker threads.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Exact,
    Overlap,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold span records (JSON lines).
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted references (JSON lines), e.g. `refs.jsonl`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Parsed documents; when given, gold offsets are checked against them.
    #[arg(long)]
    pub docs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: ModeArg,
    /// Score only the held-out side of a train/eval split with this train ratio.
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub links: PathBuf,
    #[arg(long)]
    pub docs: PathBuf,
    /// Append-only verdict log; created if missing.
    #[arg(long)]
    pub log: PathBuf,
    /// Candidate spans; recomputed from the documents when omitted.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

impl Command {
    fn stage(&self) -> Option<(&StageArgs, Option<Stage>)> {
        match self {
            Command::Run(a) | Command::Report(a) => Some((a, None)),
            Command::Search(a) => Some((a, Some(Stage::Search))),
            Command::Acquire(a) => Some((a, Some(Stage::Acquire))),
            Command::Parse(a) => Some((a, Some(Stage::Parse))),
            Command::Extract(a) => Some((a, Some(Stage::Extract))),
            Command::Link(a) => Some((a, Some(Stage::Link))),
            Command::Eval(_) | Command::Serve(_) => None,
        }
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match &cli.command {
        c @ (Command::Run(_)
        | Command::Search(_)
        | Command::Acquire(_)
        | Command::Parse(_)
        | Command::Extract(_)
        | Command::Link(_)
        | Command::Report(_)) => {
            let (args, stop_after) = c.stage().expect("stage command");
            return match run_stages(args, stop_after) {
                Ok(out) => {
                    print!("{out}");
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            };
        }
        Command::Eval(a) => eval(a).map(|out| print!("{out}")),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn run_stages(args: &StageArgs, stop_after: Option<Stage>) -> Result<String, PipelineError> {
    let cfg = Config::load(&args.config, std::env::vars())?;
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let manifest = pipeline::run_pipeline(&cfg, &RunOptions { exec, stop_after })?;
    let mut out = String::new();
    for s in &manifest.stages {
        let status = match s.status {
            StageStatus::Pending => "pending",
            StageStatus::Complete => "complete",
            StageStatus::Resumed => "resumed",
            StageStatus::Failed => "failed",
        };
        out.push_str(&format!("{:<8} {:<9} {:>6} ms\n", s.name.as_str(), status, s.wall_ms));
    }
    out.push('\n');
    out.push_str(&pipeline::stage_counts(&manifest));
    Ok(out)
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<String> {
    let corpus = a.docs.as_deref().map(load_corpus).transpose()?;
    let records: Vec<SpanRecord> = read_lines(&a.gold)?;
    let mut gold = extract::gold_from_records(&records, corpus.as_ref())?;
    if let Some(ratio) = a.split_ratio {
        if !(0.0..=1.0).contains(&ratio) {
            bail!("--split-ratio {ratio} outside [0, 1]");
        }
        gold = extract::split_train_eval(&gold, ratio, a.seed).1;
    }
    let labeled: std::collections::HashSet<_> = gold.iter().map(|g| g.sentence.clone()).collect();
    let preds: Vec<DataReference> = read_lines(&a.predictions)?;
    let (scored, skipped): (Vec<_>, Vec<_>) = preds.into_iter().partition(|p| labeled.contains(&p.sentence));
    let mode = match a.mode {
        ModeArg::Exact => MatchMode::ExactSpan,
        ModeArg::Overlap => MatchMode::Overlap,
    };
    let report = extract::evaluate(&scored, &gold, mode)?;
    let m = &report.metrics;
    let r = &report.sentence_recall;
    Ok(format!(
        "gold sentences      {}\npredictions scored  {}\noutside gold        {}\ntp {}  fp {}  fn {}\nprecision {:.4}\nrecall    {:.4}\nf1        {:.4}\nsentence recall {}/{} = {:.4}\n",
        gold.len(),
        scored.len(),
        skipped.len(),
        m.tp,
        m.fp,
        m.fn_,
        m.precision,
        m.recall,
        m.f1,
        r.hit,
        r.total,
        r.recall
    ))
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    jsonl::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Corpus::load(path).with_context(|| format!("reading {}", path.display()))
}

/// Queue items for a link file against its parsed documents.
pub fn load_review_items(links: &Path, docs: &Path, candidates: Option<&Path>) -> anyhow::Result<Vec<review::ReviewItem>> {
    let links: Vec<LinkResult> = read_lines(links)?;
    let corpus = load_corpus(docs)?;
    let candidates: Vec<CandidateSpan> = match candidates {
        Some(p) => read_lines(p)?,
        None => pipeline::candidates_for(&corpus, Execution::default()),
    };
    Ok(review::build_queue(&links, &corpus, &candidates))
}

fn serve(a: &ServeArgs) -> anyhow::Result<()> {
    let items = load_review_items(&a.links, &a.docs, a.candidates.as_deref())?;
    let service = ReviewService::open(items, &a.log)?;
    let pending = service.read(|s| s.queue(None).len());
    let app = server::router(Arc::new(service));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        log::info!("serving {pending} queued items on {}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}
