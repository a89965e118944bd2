//! `kvsched`: generate instances, run scheduler suites, compare results and
//! run the verification suites.

mod compare;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kvsched::model::Tokens;
use kvsched::selectors::SelectorKind;
use kvsched::sim::{Admission, ExecutionPolicy};
use kvsched::verify::{run_suite, Suite, VerifyConfig};
use kvsched::workloads::save_instance;

use crate::config::{ExperimentConfig, Horizon, SchedulerEntry, Source, SourceFlags};
use crate::run::{cmd_run, RunSettings};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Verification(String),
    Runtime(String),
}

impl Failure {
    /// Errors from reading or building inputs: IO problems are runtime
    /// failures, everything else is a configuration error.
    pub fn from_input(e: kvsched::Error) -> Self {
        match e {
            kvsched::Error::Io { .. } => Failure::Runtime(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "kvsched", version, about = "Memory-constrained LLM inference scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file.
    Generate(GenerateArgs),
    /// Run schedulers on an instance and write results.csv, series.csv and run.log.
    Run(RunArgs),
    /// Join result files and print TEL ratios against a baseline.
    Compare(CompareArgs),
    /// Run a verification suite and print a JSON report.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel (scheduler, size) cells.
    #[arg(long, env = "KVSCHED_JOBS")]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WorkloadFlags {
    /// uniform, normal, binomial, exponential, mixed, example1,
    /// adversarial_sf, adversarial_sf2, 3partition, partition, trace, instance
    #[arg(long)]
    workload: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    memory_limit: Option<Tokens>,
    /// Comma-separated integers for 3partition and partition.
    #[arg(long, value_delimiter = ',')]
    xs: Option<Vec<Tokens>>,
    #[arg(long)]
    t: Option<Tokens>,
    /// Trace or instance file.
    #[arg(long)]
    path: Option<PathBuf>,
}

impl WorkloadFlags {
    fn source(&self) -> Result<Option<Source>, Failure> {
        self.workload
            .as_deref()
            .map(|kind| {
                SourceFlags {
                    kind,
                    n: self.n,
                    memory_limit: self.memory_limit,
                    xs: self.xs.clone(),
                    t: self.t,
                    path: self.path.clone(),
                }
                .to_source()
            })
            .transpose()
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    workload: WorkloadFlags,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    workload: WorkloadFlags,
    /// Scheduler name, e.g. mc_sf or sorted_f(local_swap); repeatable.
    #[arg(long = "scheduler")]
    schedulers: Vec<String>,
    /// Selector for schedulers given as a bare sorted_f.
    #[arg(long)]
    selector: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// LP horizon in steps, or "makespan" for the shortest-first makespan.
    #[arg(long)]
    horizon: Option<Horizon>,
    /// Cap on n times the LP horizon.
    #[arg(long)]
    lp_budget: Option<u128>,
    /// Comma-separated subsample sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// prefix_blocking or skip_scan.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result files written by `run`.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Scheduler label the ratios are taken against.
    #[arg(long)]
    baseline: String,
    /// Directory for compare.md and compare.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// example1, lemma1, selectors, adversarial, np_reduction, cr_bound,
    /// lp_chain, separate_bound, synthetic or all
    suite: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Random instances per property suite.
    #[arg(long)]
    trials: Option<usize>,
    /// Seeds per distribution for the synthetic suite.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Directory for verify.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = common.seed.or(cfg.seed);
    cfg.jobs = common.jobs.or(cfg.jobs);
    cfg.out = common.out.clone().or(cfg.out);
    Ok(cfg)
}

fn create_dir(dir: &PathBuf) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common)?;
    if let Some(source) = args.workload.source()? {
        cfg.source = Some(source);
    }
    let source = cfg
        .source
        .ok_or_else(|| Failure::Config("no workload given (--workload or config source)".into()))?;
    let seed = cfg.seed.unwrap_or(0);
    let instance = source.build(seed)?;
    let dir = cfg.out.unwrap_or_else(|| PathBuf::from("."));
    create_dir(&dir)?;
    let path = dir.join(format!("{}.json", source.file_stem(seed)));
    save_instance(&instance, &path).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "wrote {} ({} requests, M = {})",
        path.display(),
        instance.len(),
        instance.memory_limit()
    );
    if let Some(note) = source.note() {
        println!("{note}");
    }
    Ok(())
}

fn cmd_run_args(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common)?;
    if let Some(source) = args.workload.source()? {
        cfg.source = Some(source);
    }
    if !args.schedulers.is_empty() {
        cfg.schedulers = args.schedulers.into_iter().map(SchedulerEntry::Name).collect();
    }
    if let Some(sel) = args.selector {
        cfg.selector = Some(sel.parse::<SelectorKind>().map_err(Failure::from_input)?);
    }
    cfg.epsilon = args.epsilon.or(cfg.epsilon);
    cfg.horizon = args.horizon.or(cfg.horizon);
    cfg.lp_budget = args.lp_budget.or(cfg.lp_budget);
    cfg.sizes = args.sizes.or(cfg.sizes);
    if let Some(policy) = args.policy {
        cfg.policy = Some(match policy.as_str() {
            "prefix_blocking" => Admission::PrefixBlocking,
            "skip_scan" => Admission::SkipScan,
            other => return Err(Failure::Config(format!("unknown policy {other:?}"))),
        });
    }

    let entries = cfg.entries()?;
    let source = cfg
        .source
        .as_ref()
        .ok_or_else(|| Failure::Config("no workload given (--workload or config source)".into()))?;
    let seed = cfg.seed.unwrap_or(0);
    let instance = source.build(seed)?;
    let sizes = cfg.sizes.clone().unwrap_or_else(|| vec![instance.len()]);
    if sizes.is_empty() {
        return Err(Failure::Config("sizes is empty".into()));
    }
    let jobs = cfg.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    let settings = RunSettings {
        entries,
        sizes,
        seed,
        jobs,
        policy: ExecutionPolicy {
            admission: cfg.policy.unwrap_or_default(),
        },
        horizon: cfg.horizon,
        out: cfg.out.clone().unwrap_or_else(|| PathBuf::from("results")),
    };
    let cells = cmd_run(&instance, &settings)?;
    println!("scheduler,n,tel,mean_latency,makespan");
    for c in &cells {
        match &c.outcome {
            Ok(m) => println!(
                "{},{},{},{:.4},{}",
                c.scheduler, c.n, m.tel, m.mean_latency, m.makespan
            ),
            Err(e) => println!("{},{},failed: {e}", c.scheduler, c.n),
        }
    }
    println!("wrote {}", settings.out.join("results.csv").display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let cmp = compare::compare(&args.files, &args.baseline)?;
    let md = cmp.to_markdown();
    print!("{md}");
    if let Some(dir) = args.out {
        create_dir(&dir)?;
        let path = dir.join("compare.md");
        std::fs::write(&path, &md)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
        cmp.write_csv(&dir.join("compare.csv"))?;
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse::<Suite>().map_err(Failure::from_input)?]
    };
    let config = VerifyConfig {
        seed: args.seed.unwrap_or(0),
        trials: args.trials,
        synthetic_seeds: args.seeds,
    };
    let mut reports = Vec::new();
    for suite in suites {
        let report = run_suite(suite, &config).map_err(|e| Failure::Runtime(e.to_string()))?;
        println!(
            "{}",
            serde_json::to_string(&report).map_err(|e| Failure::Runtime(e.to_string()))?
        );
        reports.push(report);
    }
    if let Some(dir) = args.out {
        create_dir(&dir)?;
        let path = dir.join("verify.json");
        let text = serde_json::to_string_pretty(&reports)
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.suite).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.join(", ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run_args(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
