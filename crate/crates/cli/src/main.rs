use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use trustmesh::config::ScenarioConfig;
use trustmesh::experiments::{self, SuiteConfig};
use trustmesh::metrics::{summarize_default, RunSummary};
use trustmesh::runlog::RunLog;
use trustmesh::sim::Simulation;
use trustmesh::Error;

#[derive(Parser)]
#[command(name = "trustmesh", version, about = "Sensor network trust simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its log and summary.
    Run(RunArgs),
    /// Run the evaluation suite and write one CSV row per run.
    Suite(BatchArgs),
    /// Sweep the flag threshold over the three routing attacks.
    SweepAlpha {
        #[command(flatten)]
        batch: BatchArgs,
        /// Comma-separated thresholds.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.75,0.8,0.9")]
        alphas: Vec<f64>,
    },
    /// Parse and check a configuration without running anything.
    ValidateConfig(ConfigArgs),
    /// Recompute the summary of an existing run log.
    ReplayLog {
        /// Path to a run.log.jsonl file.
        log: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Override one key; repeatable. Wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, env = "TRUSTMESH_OUT_DIR", default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, env = "TRUSTMESH_OUT_DIR", default_value = "results")]
    out: PathBuf,
    /// Seeds as a list (`1,2,5`) or a range (`1-10`).
    #[arg(long, default_value = "1-10")]
    seeds: String,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// Failure split by exit status.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn load_config(args: &ConfigArgs) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))
        .map_err(Failure::Config)?;
    let mut cfg = ScenarioConfig::parse(&text).map_err(|e| Failure::Config(e.into()))?;
    for o in &args.overrides {
        cfg.apply_override(o).map_err(|e| Failure::Config(e.into()))?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::Config(anyhow!("invalid --seeds `{s}`"));
    if let Some((a, b)) = s.split_once('-') {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect()
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::Runtime)
}

fn print_summary(s: &RunSummary) {
    let opt = |x: Option<f64>| x.map_or("n/a".to_string(), experiments::fmt_g);
    println!("data_loss            {}", experiments::fmt_g(s.data_loss));
    println!("avg_delay_s          {}", experiments::fmt_g(s.avg_delay));
    println!("overhead_pct         {}", experiments::fmt_g(s.overhead_pct));
    println!("tp_rate              {}", opt(s.tp_rate));
    println!("fp_rate              {}", experiments::fmt_g(s.fp_rate));
    println!("detect_latency_slots {}", opt(s.detect_latency_slots));
    println!("sent/delivered       {}/{}", s.sent, s.delivered);
}

fn write_rows(path: &Path, rows: &[experiments::SummaryRow]) -> Result<(), Failure> {
    let f = fs::File::create(path).map_err(runtime)?;
    experiments::write_csv(rows, f).map_err(runtime)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    let sim = Simulation::new(&cfg)?;
    let log = sim.run();
    let summary = summarize_default(&log)?;
    create_out(&args.out)?;
    let f = fs::File::create(args.out.join("run.log.jsonl")).map_err(runtime)?;
    log.write_jsonl(std::io::BufWriter::new(f)).map_err(runtime)?;
    let row = experiments::SummaryRow {
        scenario_id: "run".into(),
        seed: cfg.seed,
        node_count: cfg.node_count,
        attack_kind: cfg.attack_kind,
        attackers: log.meta().map_or(0, |m| m.attackers.len()),
        alpha: cfg.alpha,
        summary: summary.clone(),
    };
    write_rows(&args.out.join("summary.csv"), &[row])?;
    let json = serde_json::to_string_pretty(&summary).map_err(runtime)?;
    fs::write(args.out.join("summary.json"), json + "\n").map_err(runtime)?;
    println!("digest               {}", log.digest());
    print_summary(&summary);
    Ok(())
}

fn cmd_suite(args: &BatchArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    let mut suite = SuiteConfig::new(cfg);
    suite.seeds = parse_seeds(&args.seeds)?;
    let rows = experiments::run_suite(&suite, args.jobs)?;
    create_out(&args.out)?;
    let path = args.out.join("suite.csv");
    write_rows(&path, &rows)?;
    println!("{} runs written to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_sweep(args: &BatchArgs, alphas: &[f64]) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    let seeds = parse_seeds(&args.seeds)?;
    let (points, rows) = experiments::sweep_alpha(&cfg, alphas, &seeds, args.jobs)?;
    create_out(&args.out)?;
    let f = fs::File::create(args.out.join("alpha_sweep.csv")).map_err(runtime)?;
    experiments::write_alpha_csv(&points, f).map_err(runtime)?;
    write_rows(&args.out.join("alpha_runs.csv"), &rows)?;
    experiments::write_alpha_csv(&points, std::io::stdout()).map_err(runtime)?;
    Ok(())
}

fn cmd_validate(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    print!("{}", cfg.to_kv());
    println!("# configuration is valid");
    Ok(())
}

fn cmd_replay(path: &Path) -> Result<(), Failure> {
    let f = fs::File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::Runtime)?;
    let log = RunLog::read_jsonl(BufReader::new(f))?;
    let summary = summarize_default(&log)?;
    println!("digest               {}", log.digest());
    print_summary(&summary);
    println!("{}", serde_json::to_string_pretty(&summary).map_err(runtime)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Suite(a) => cmd_suite(a),
        Command::SweepAlpha { batch, alphas } => cmd_sweep(batch, alphas),
        Command::ValidateConfig(a) => cmd_validate(a),
        Command::ReplayLog { log } => cmd_replay(log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
