use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use prefeval_core::analysis::render_tables;
use prefeval_core::metrics::Metric;
use prefeval_core::pipeline::{run_analysis, serving_order};
use prefeval_core::ranking::{rank_by_score, score_all, FamilyMode};
use prefeval_core::simulator::{
    generate_pairs, simulate_vote_log, AnnotatorModel, SyntheticExperiment, CALIBRATION_GAP_SCALE,
    DEFAULT_SEQ_LEN,
};
use prefeval_core::storage::{
    data_dir, load_pairs, save_pairs, write_vote_records, Experiment, ExperimentConfig, Snapshot,
    VoteLog, DATA_DIR_ENV,
};
use prefeval_service::{serve, AnnotationService};

#[derive(Parser)]
#[command(
    name = "prefeval",
    version,
    about = "Pairwise preference evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic experiment: pairs.jsonl, votes.jsonl and config.json.
    Simulate(SimulateArgs),
    /// Analyze a vote log and write the JSON report.
    Analyze(AnalyzeArgs),
    /// Rank pairs by dissimilarity and write the order as JSON.
    Rank(RankArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    n_prompts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean of the latent quality gap (positive favours model A).
    #[arg(long, default_value_t = 0.0)]
    gap_mean: f64,
    #[arg(long, default_value_t = CALIBRATION_GAP_SCALE)]
    gap_scale: f64,
    /// Standard deviation of per-token log-prob jitter.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    annotators: usize,
    #[arg(long, default_value_t = DEFAULT_SEQ_LEN)]
    seq_len: usize,
    #[arg(long, default_value = "sim")]
    experiment_id: String,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `<data dir>/<experiment id>/pairs.jsonl`.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Defaults to `<data dir>/<experiment id>/votes.jsonl`.
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also print the summary tables to stderr.
    #[arg(long)]
    table: bool,
}

#[derive(clap::Args)]
struct RankArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Supplies family mode, metric settings and the serving order.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rank by this metric instead of the config's serving order.
    #[arg(long, value_parser = parse_metric)]
    metric: Option<Metric>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    votes: Option<PathBuf>,
    /// Directory holding the built annotation UI.
    #[arg(long)]
    ui: Option<PathBuf>,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s.to_ascii_lowercase().as_str() {
        "kl" => Ok(Metric::Kl),
        "ce" => Ok(Metric::Ce),
        _ => Err(format!("unknown metric {s:?} (expected kl or ce)")),
    }
}

fn experiment_path(config: &ExperimentConfig, explicit: Option<PathBuf>, file: &str) -> PathBuf {
    explicit.unwrap_or_else(|| data_dir().join(&config.experiment_id).join(file))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut exp = SyntheticExperiment::sampled(
        args.n_prompts,
        args.gap_mean,
        args.gap_scale,
        args.noise,
        args.seed,
    )?;
    exp.seq_len = args.seq_len;
    let model = AnnotatorModel {
        n_annotators: args.annotators,
        ..AnnotatorModel::default()
    };
    let set = generate_pairs(&exp)?;
    let records = simulate_vote_log(&exp, &model)?;
    let mut config = ExperimentConfig::new(&args.experiment_id, FamilyMode::IntraFamily);
    config.model_a_name = set.model_a_name.clone();
    config.model_b_name = set.model_b_name.clone();
    config.master_seed = args.seed;
    config.target_votes_per_prompt = args.annotators;

    fs::create_dir_all(&args.out)?;
    save_pairs(&args.out.join("pairs.jsonl"), &set)?;
    write_vote_records(&args.out.join("votes.jsonl"), &records)?;
    config.save(&args.out.join("config.json"))?;
    log::info!(
        "wrote {} pairs and {} votes to {}",
        set.len(),
        records.len(),
        args.out.display()
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let pairs = experiment_path(&config, args.pairs, "pairs.jsonl");
    let votes = experiment_path(&config, args.votes, "votes.jsonl");
    if !votes.exists() {
        bail!("vote log {} does not exist", votes.display());
    }
    let set = load_pairs(&pairs, config.family_mode)
        .with_context(|| format!("loading {}", pairs.display()))?;
    let log = VoteLog::open(&votes).with_context(|| format!("opening {}", votes.display()))?;
    let snapshot: Snapshot = Experiment::new(config.clone(), set, log).snapshot();
    let report = run_analysis(&config, &snapshot)?;
    if args.table {
        eprint!("{}", render_tables(&report));
    }
    write_output(args.out.as_deref(), &report.to_json()?)
}

fn rank(args: RankArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new("adhoc", FamilyMode::IntraFamily),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let set = load_pairs(&args.pairs, config.family_mode)?;
    let order = match args.metric {
        Some(m) => rank_by_score(&score_all(&set, &config.metric.with_metric(m))?, m)?,
        None => serving_order(&set, &config)?,
    };
    let ids = set.prompt_ids();
    let ranked: Vec<serde_json::Value> = order
        .permutation
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            serde_json::json!({
                "rank": rank,
                "prompt_id": ids[i],
                "score": order.scores.get(i),
            })
        })
        .collect();
    let doc = serde_json::json!({ "metric": order.metric, "seed": order.seed, "order": ranked });
    write_output(
        args.out.as_deref(),
        &(serde_json::to_string_pretty(&doc)? + "\n"),
    )
}

fn serve_cmd(args: ServeArgs) -> Result<()> {
    let config = ExperimentConfig::load(&args.config)?;
    let pairs = experiment_path(&config, args.pairs, "pairs.jsonl");
    let votes = experiment_path(&config, args.votes, "votes.jsonl");
    log::info!(
        "serving {} from {} (votes in {}; override the data dir with {DATA_DIR_ENV})",
        config.experiment_id,
        pairs.display(),
        votes.display()
    );
    let service = AnnotationService::open(config, &pairs, &votes)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(args.addr, service, args.ui))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(args) => simulate(args),
        Command::Analyze(args) => analyze(args),
        Command::Rank(args) => rank(args),
        Command::Serve(args) => serve_cmd(args),
    }
}
