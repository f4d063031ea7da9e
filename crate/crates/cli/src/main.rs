//! `drbid` command-line front end.
//!
//! Every command writes into one run directory: the resolved `config.toml`,
//! a `manifest.json` with the config hash and seeds, and the command's
//! tables. Exit codes: 0 success, 1 configuration error, 2 runtime failure,
//! 3 grid search found no configuration meeting the threshold.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use drbid::config::{scenario_sigma, ConfigError, RunConfig};
use drbid::ddpg::{AgentError, BiddingAgents};
use drbid::pipeline::{
    self, compute_metrics, evaluate, fit_baseline_on, grid_search, run_offline, run_online, training_dataset,
    write_curve_csv, write_json, BiddingPolicy, Dataset, GreedyAgents, GridOutcome, HyperGrid, NeutralPolicy,
    OfflineOptions, PipelineError, RunMetrics, DATASET_VERSION, OUTCOME_SCHEMA_VERSION,
};
use drbid::sim::streams;

const CURVE_SCHEMA_VERSION: u32 = 1;
const PERIODS_SCHEMA_VERSION: u32 = 1;
const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "drbid", version, about = "Demand-bidding simulation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the pipeline seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Selects the clearing-price noise of reference scenario 1, 2 or 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    scenario: Option<u8>,
    /// Run directory; defaults to the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate the configuration and stop without writing anything.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Offline,
    Online,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PolicyTag {
    Proposed,
    Baseline,
    Neutral,
}

impl PolicyTag {
    fn label(self) -> &'static str {
        match self {
            PolicyTag::Proposed => "proposed",
            PolicyTag::Baseline => "baseline",
            PolicyTag::Neutral => "neutral",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a frozen dataset of event days.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of days; defaults to the configured offline days.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Train offline, or continue a pretrained checkpoint online.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "offline")]
        mode: Mode,
        /// Checkpoint directory from an offline run (required online).
        #[arg(long)]
        pretrained: Option<PathBuf>,
        /// Online only: act without learning.
        #[arg(long)]
        no_learn: bool,
    },
    /// Replay a frozen dataset with a fixed policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory of the agents (required for `proposed`).
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "proposed")]
        policy: PolicyTag,
        /// Dataset written by `simulate`; defaults to the training days.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train every grid point and gate it on validation success rate.
    GridSearch {
        #[command(flatten)]
        common: Common,
        /// TOML file of hyperparameter axes; omitted means the base point only.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Which success threshold gates the grid.
        #[arg(long, value_enum, default_value = "offline")]
        mode: Mode,
    },
    /// Collect metrics of finished runs into one table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directories; defaults to every subdirectory of --out holding metrics.
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(String),
    Threshold(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Threshold(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
            CliError::Threshold(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Agent(AgentError::BadCheckpoint(m)) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        PipelineError::from(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Reproduction record written next to every run's outputs.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    config_hash: String,
    seed: u64,
    streams: BTreeMap<String, u64>,
    scenario_sigma: f64,
    schemas: BTreeMap<String, u32>,
    pretrained: Option<String>,
    files: Vec<String>,
}

/// Contents of `metrics.json`.
#[derive(Debug, Serialize, Deserialize)]
struct MetricsFile {
    label: String,
    mode: String,
    scenario_sigma: f64,
    seed: u64,
    metrics: RunMetrics,
    baseline: Option<RunMetrics>,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(s) = common.scenario {
        cfg.scenario.mcp.noise_sigma = scenario_sigma(s).expect("range checked by clap");
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let probe = dir.join(".drbid-write-test");
    fs::write(&probe, b"").map_err(io(dir))?;
    fs::remove_file(&probe).map_err(io(dir))
}

fn write_run_header(cfg: &RunConfig, command: &str, pretrained: Option<&Path>, files: &[&str]) -> Result<()> {
    let dir = &cfg.output_dir;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, cfg.to_toml_string()).map_err(io(&config_path))?;
    let streams = [
        ("population", streams::POPULATION),
        ("dataset", streams::DATASET),
        ("agent_init", streams::AGENT_INIT),
        ("exploration", streams::EXPLORATION),
        ("replay", streams::REPLAY),
        ("baseline", streams::BASELINE),
        ("validation", streams::VALIDATION),
        ("online", streams::ONLINE),
        ("online_exploration", streams::ONLINE_EXPLORATION),
        ("online_replay", streams::ONLINE_REPLAY),
    ];
    let schemas = [
        ("dataset_json", DATASET_VERSION),
        ("outcomes_csv", OUTCOME_SCHEMA_VERSION),
        ("curve_csv", CURVE_SCHEMA_VERSION),
        ("periods_csv", PERIODS_SCHEMA_VERSION),
        ("report_csv", REPORT_SCHEMA_VERSION),
    ];
    let manifest = Manifest {
        tool: "drbid".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config_hash: cfg.hash(),
        seed: cfg.pipeline.seed,
        streams: streams.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        scenario_sigma: cfg.scenario.mcp.noise_sigma,
        schemas: schemas.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        pretrained: pretrained.map(|p| p.display().to_string()),
        files: std::iter::once("config.toml").chain(files.iter().copied()).map(String::from).collect(),
    };
    write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(())
}

fn dry_run(cfg: &RunConfig, what: &str) {
    println!(
        "configuration valid ({what}); config hash {}; seed {}; sigma {}; nothing written",
        cfg.hash(),
        cfg.pipeline.seed,
        cfg.scenario.mcp.noise_sigma
    );
}

fn cmd_simulate(common: &Common, days: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(d) = days {
        cfg.pipeline.offline_days = d;
    }
    if common.dry_run {
        dry_run(&cfg, "simulate");
        return Ok(());
    }
    if cfg.pipeline.offline_days == 0 {
        log::warn!("zero days requested: writing an empty dataset");
        eprintln!("warning: zero days requested, the dataset is empty");
    }
    prepare_dir(&cfg.output_dir)?;
    let population = cfg.scenario.population(cfg.pipeline.seed);
    let dataset = training_dataset(&cfg, &population);
    let dir = &cfg.output_dir;
    dataset.write_json(&dir.join("dataset.json"))?;
    dataset.write_periods_csv(&cfg.scenario, &dir.join("periods.csv"))?;
    write_run_header(&cfg, "simulate", None, &["dataset.json", "periods.csv", "manifest.json"])?;
    println!("{} days, {} periods written to {}", dataset.days.len(), dataset.periods(), dir.display());
    Ok(())
}

fn print_metrics(label: &str, m: &RunMetrics) {
    println!(
        "{label}: success {:.3}  0.8<=xi<=1.2 {:.3}  0.6<=xi<=1.5 {:.3}  win {:.3}  profit {:.2}  ({} periods)",
        m.success_rate, m.rate_tight, m.rate_loose, m.win_rate, m.total_profit, m.periods
    );
}

fn load_agents(cfg: &RunConfig, dir: &Path) -> Result<BiddingAgents> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("pretrained checkpoint {} does not exist", dir.display())));
    }
    Ok(BiddingAgents::load(dir, cfg.scenario.encoder(), &cfg.scenario.bounds, cfg.agent.clone())?)
}

fn cmd_train(common: &Common, mode: Mode, pretrained: Option<&Path>, no_learn: bool) -> Result<()> {
    let cfg = load_config(common)?;
    if mode == Mode::Online && pretrained.is_none() {
        return Err(CliError::Config("online training needs --pretrained <checkpoint dir>".into()));
    }
    if common.dry_run {
        dry_run(&cfg, if mode == Mode::Online { "train online" } else { "train offline" });
        return Ok(());
    }
    prepare_dir(&cfg.output_dir)?;
    let dir = cfg.output_dir.clone();
    match (mode, pretrained) {
        (Mode::Offline, _) => {
            let options = OfflineOptions {
                checkpoint_dir: Some(dir.join("checkpoints")),
                checkpoint_every: cfg.pipeline.checkpoint_every,
            };
            let run = run_offline(&cfg, &options)?;
            run.agents.save(&dir.join("checkpoint"))?;
            run.evaluation_log.write_csv(&dir.join("outcomes.csv"))?;
            run.training_log.write_csv(&dir.join("training_outcomes.csv"))?;
            write_curve_csv(&run.curve, &dir.join("curve.csv"))?;
            let file = MetricsFile {
                label: "proposed".into(),
                mode: "offline".into(),
                scenario_sigma: cfg.scenario.mcp.noise_sigma,
                seed: cfg.pipeline.seed,
                metrics: run.metrics.clone(),
                baseline: None,
            };
            write_json(&file, &dir.join("metrics.json"))?;
            write_run_header(
                &cfg,
                "train-offline",
                None,
                &["checkpoint/", "outcomes.csv", "training_outcomes.csv", "curve.csv", "metrics.json", "manifest.json"],
            )?;
            print_metrics("offline (frozen replay of training days)", &run.metrics);
        }
        (Mode::Online, Some(pre)) => {
            let mut agents = load_agents(&cfg, pre)?;
            let population = cfg.scenario.population(cfg.pipeline.seed);
            let history = training_dataset(&cfg, &population);
            let run = run_online(&cfg, &mut agents, &population, &history, !no_learn)?;
            agents.save(&dir.join("checkpoint"))?;
            run.online_log.write_csv(&dir.join("outcomes.csv"))?;
            run.baseline_log.write_csv(&dir.join("baseline_outcomes.csv"))?;
            let file = MetricsFile {
                label: "proposed".into(),
                mode: "online".into(),
                scenario_sigma: cfg.scenario.mcp.noise_sigma,
                seed: cfg.pipeline.seed,
                metrics: run.online_metrics.clone(),
                baseline: Some(run.baseline_metrics.clone()),
            };
            write_json(&file, &dir.join("metrics.json"))?;
            write_run_header(
                &cfg,
                "train-online",
                Some(pre),
                &["checkpoint/", "outcomes.csv", "baseline_outcomes.csv", "metrics.json", "manifest.json"],
            )?;
            print_metrics("online", &run.online_metrics);
            print_metrics("baseline", &run.baseline_metrics);
        }
        (Mode::Online, None) => unreachable!("checked above"),
    }
    Ok(())
}

fn cmd_evaluate(common: &Common, pretrained: Option<&Path>, tag: PolicyTag, dataset: Option<&Path>) -> Result<()> {
    let cfg = load_config(common)?;
    if tag == PolicyTag::Proposed && pretrained.is_none() {
        return Err(CliError::Config("evaluating the proposed policy needs --pretrained <checkpoint dir>".into()));
    }
    if common.dry_run {
        dry_run(&cfg, "evaluate");
        return Ok(());
    }
    let population = cfg.scenario.population(cfg.pipeline.seed);
    let history = training_dataset(&cfg, &population);
    let data = match dataset {
        Some(path) => Dataset::read_json(path)?,
        None => history.clone(),
    };
    if let Some(day) = data.days.first() {
        if day.plans.len() != population.len() {
            return Err(CliError::Config(format!(
                "dataset has {} customers, configuration has {}",
                day.plans.len(),
                population.len()
            )));
        }
    }
    let mut env = cfg.scenario.environment(population);
    let log = match tag {
        PolicyTag::Proposed => {
            let agents = load_agents(&cfg, pretrained.expect("checked above"))?;
            let mut policy = GreedyAgents(&agents);
            evaluate(&mut env, &data, &mut policy, 0)?
        }
        PolicyTag::Baseline => {
            let model = fit_baseline_on(&cfg, &mut env, &history)?;
            let mut policy = model.policy(cfg.scenario.bounds);
            evaluate(&mut env, &data, &mut policy, 0)?
        }
        PolicyTag::Neutral => {
            let mut policy = NeutralPolicy;
            debug_assert_eq!(policy.label(), "neutral");
            evaluate(&mut env, &data, &mut policy, 0)?
        }
    };
    let metrics = compute_metrics(&log)?;
    prepare_dir(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    log.write_csv(&dir.join("outcomes.csv"))?;
    let file = MetricsFile {
        label: tag.label().into(),
        mode: "evaluate".into(),
        scenario_sigma: cfg.scenario.mcp.noise_sigma,
        seed: cfg.pipeline.seed,
        metrics: metrics.clone(),
        baseline: None,
    };
    write_json(&file, &dir.join("metrics.json"))?;
    write_run_header(&cfg, "evaluate", pretrained, &["outcomes.csv", "metrics.json", "manifest.json"])?;
    print_metrics(tag.label(), &metrics);
    Ok(())
}

fn cmd_grid_search(common: &Common, grid_path: Option<&Path>, mode: Mode) -> Result<()> {
    let cfg = load_config(common)?;
    let grid = match grid_path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<HyperGrid>(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => HyperGrid::default(),
    };
    let points = grid.expand(&cfg);
    for (label, point) in &points {
        point.validate().map_err(|e| CliError::Config(format!("grid point {label}: {e}")))?;
    }
    let threshold = match mode {
        Mode::Offline => cfg.pipeline.offline_success_threshold,
        Mode::Online => cfg.pipeline.online_success_threshold,
    };
    if common.dry_run {
        dry_run(&cfg, &format!("grid search over {} points", points.len()));
        return Ok(());
    }
    prepare_dir(&cfg.output_dir)?;
    let outcome = grid_search(&points, threshold, pipeline::validation_metrics)?;
    let dir = &cfg.output_dir;
    #[derive(Serialize)]
    struct GridFile<'a> {
        threshold: f64,
        outcome: &'a GridOutcome,
    }
    write_json(&GridFile { threshold, outcome: &outcome }, &dir.join("grid.json"))?;
    for c in outcome.candidates() {
        println!(
            "{:>3} {:<40} success {:.3} profit {:.2} {}",
            c.index,
            c.label,
            c.metrics.success_rate,
            c.metrics.total_profit,
            if c.accepted { "accepted" } else { "rejected" }
        );
    }
    match outcome.best() {
        Some(best) => {
            let best_cfg = &points[best.index].1;
            let path = dir.join("best_config.toml");
            fs::write(&path, best_cfg.to_toml_string()).map_err(io(&path))?;
            write_run_header(&cfg, "grid-search", None, &["grid.json", "best_config.toml", "manifest.json"])?;
            println!("selected {} ({})", best.index, best.label);
            Ok(())
        }
        None => {
            write_run_header(&cfg, "grid-search", None, &["grid.json", "manifest.json"])?;
            Err(CliError::Threshold(format!(
                "no qualifying configuration: no grid point reached success rate {threshold}"
            )))
        }
    }
}

#[derive(Debug, Serialize)]
struct ReportRow {
    run: String,
    label: String,
    mode: String,
    scenario_sigma: f64,
    seed: u64,
    periods: usize,
    success_rate: f64,
    rate_tight: f64,
    rate_loose: f64,
    win_rate: f64,
    total_profit: f64,
}

fn report_rows(run: &Path) -> Result<Vec<ReportRow>> {
    let path = run.join("metrics.json");
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let file: MetricsFile =
        serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let row = |label: &str, m: &RunMetrics| ReportRow {
        run: run.display().to_string(),
        label: label.into(),
        mode: file.mode.clone(),
        scenario_sigma: file.scenario_sigma,
        seed: file.seed,
        periods: m.periods,
        success_rate: m.success_rate,
        rate_tight: m.rate_tight,
        rate_loose: m.rate_loose,
        win_rate: m.win_rate,
        total_profit: m.total_profit,
    };
    let mut rows = vec![row(&file.label, &file.metrics)];
    if let Some(b) = &file.baseline {
        rows.push(row("baseline", b));
    }
    Ok(rows)
}

fn cmd_report(common: &Common, runs: &[PathBuf]) -> Result<()> {
    let out = common.out.clone();
    let runs: Vec<PathBuf> = if runs.is_empty() {
        let root = out.clone().ok_or_else(|| CliError::Config("report needs run directories or --out".into()))?;
        let mut found: Vec<PathBuf> = fs::read_dir(&root)
            .map_err(io(&root))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("metrics.json").is_file())
            .collect();
        found.sort();
        found
    } else {
        runs.to_vec()
    };
    if runs.is_empty() {
        return Err(CliError::Config("no run directories with metrics.json found".into()));
    }
    if common.dry_run {
        println!("{} runs would be reported; nothing written", runs.len());
        return Ok(());
    }
    let mut rows = Vec::new();
    for run in &runs {
        rows.extend(report_rows(run)?);
    }
    println!("| run | policy | mode | sigma | success | 0.8<=xi<=1.2 | 0.6<=xi<=1.5 | win | profit |");
    println!("|---|---|---|---|---|---|---|---|---|");
    for r in &rows {
        println!(
            "| {} | {} | {} | {} | {:.1}% | {:.1}% | {:.1}% | {:.1}% | {:.2} |",
            r.run,
            r.label,
            r.mode,
            r.scenario_sigma,
            100.0 * r.success_rate,
            100.0 * r.rate_tight,
            100.0 * r.rate_loose,
            100.0 * r.win_rate,
            r.total_profit
        );
    }
    if let Some(dir) = out {
        prepare_dir(&dir)?;
        let path = dir.join("report.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.flush().map_err(io(&path))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { common, days } => cmd_simulate(common, *days),
        Command::Train { common, mode, pretrained, no_learn } => {
            cmd_train(common, *mode, pretrained.as_deref(), *no_learn)
        }
        Command::Evaluate { common, pretrained, policy, dataset } => {
            cmd_evaluate(common, pretrained.as_deref(), *policy, dataset.as_deref())
        }
        Command::GridSearch { common, grid, mode } => cmd_grid_search(common, grid.as_deref(), *mode),
        Command::Report { common, runs } => cmd_report(common, runs),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("drbid: {e}");
            ExitCode::from(e.code())
        }
    }
}
