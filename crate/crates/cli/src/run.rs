use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use kvsched::model::{Instance, Metrics};
use kvsched::schedulers::{execute, run_scheduler, shortest_first_makespan, SchedulerSpec};
use kvsched::sim::ExecutionPolicy;
use kvsched::workloads::second_class_first_order;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_pcg::Pcg32;
use rayon::prelude::*;

use crate::config::{Entry, Horizon};
use crate::Failure;

pub const RESULT_COLUMNS: [&str; 8] = [
    "scheduler",
    "n",
    "tel",
    "mean_latency",
    "makespan",
    "utilization",
    "wall_ms",
    "error",
];

pub struct RunSettings {
    pub entries: Vec<Entry>,
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub jobs: usize,
    pub policy: ExecutionPolicy,
    pub horizon: Option<Horizon>,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub scheduler: String,
    pub n: usize,
    pub outcome: Result<Metrics, String>,
    pub wall_ms: f64,
}

/// `n` requests drawn without replacement, kept in id order.
pub fn subsample(instance: &Instance, n: usize, seed: u64) -> Result<Instance, Failure> {
    if n > instance.len() || n == 0 {
        return Err(Failure::Config(format!(
            "size {n} is outside 1..={} requests",
            instance.len()
        )));
    }
    if n == instance.len() {
        return Ok(instance.clone());
    }
    let mut rng = Pcg32::seed_from_u64(seed ^ (n as u64).rotate_left(32));
    let mut picked = sample(&mut rng, instance.len(), n).into_vec();
    picked.sort_unstable();
    let requests = picked.into_iter().map(|i| instance.requests()[i]).collect();
    instance.with_requests(requests).map_err(Failure::from_input)
}

fn run_entry(
    instance: &Instance,
    entry: &Entry,
    horizon: Option<Horizon>,
    policy: ExecutionPolicy,
) -> Result<Metrics, String> {
    let outcome = match entry {
        Entry::SecondClassFirst => execute(instance, second_class_first_order(instance), None, policy),
        Entry::Spec(spec) => {
            let mut spec: SchedulerSpec = spec.clone();
            if spec.kind.uses_lp() && spec.horizon_override.is_none() {
                spec.horizon_override = match horizon {
                    Some(Horizon::Steps(t)) => Some(t),
                    Some(Horizon::Makespan) => {
                        Some(shortest_first_makespan(instance).map_err(|e| e.to_string())?)
                    }
                    None => None,
                };
            }
            run_scheduler(instance, &spec, policy)
        }
    };
    outcome.map(|o| o.metrics).map_err(|e| e.to_string())
}

/// Runs every (scheduler, size) cell, in parallel up to `jobs`, and returns
/// the cells sorted by scheduler label and size.
pub fn run_cells(instance: &Instance, settings: &RunSettings) -> Result<Vec<Cell>, Failure> {
    let mut instances = Vec::new();
    for &n in &settings.sizes {
        instances.push((n, subsample(instance, n, settings.seed)?));
    }
    let work: Vec<(&Entry, usize, &Instance)> = settings
        .entries
        .iter()
        .flat_map(|e| instances.iter().map(move |(n, inst)| (e, *n, inst)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs.max(1))
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let mut cells: Vec<Cell> = pool.install(|| {
        work.par_iter()
            .map(|&(entry, n, inst)| {
                let started = Instant::now();
                let outcome = run_entry(inst, entry, settings.horizon, settings.policy);
                Cell {
                    scheduler: entry.label(),
                    n,
                    outcome,
                    wall_ms: started.elapsed().as_secs_f64() * 1e3,
                }
            })
            .collect()
    });
    cells.sort_by(|a, b| (&a.scheduler, a.n).cmp(&(&b.scheduler, b.n)));
    Ok(cells)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

pub fn write_results(path: &Path, cells: &[Cell]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(RESULT_COLUMNS).map_err(|e| csv_error(path, e))?;
    for c in cells {
        let record = match &c.outcome {
            Ok(m) => vec![
                c.scheduler.clone(),
                c.n.to_string(),
                m.tel.to_string(),
                format!("{:.6}", m.mean_latency),
                m.makespan.to_string(),
                format!("{:.6}", m.mean_utilization),
                format!("{:.3}", c.wall_ms),
                String::new(),
            ],
            Err(e) => vec![
                c.scheduler.clone(),
                c.n.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("{:.3}", c.wall_ms),
                e.clone(),
            ],
        };
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| csv_error(path, e))
}

/// Mean latency per scheduler as one column per scheduler, one row per size.
pub fn write_series(path: &Path, cells: &[Cell]) -> Result<(), Failure> {
    let mut schedulers: Vec<&str> = cells.iter().map(|c| c.scheduler.as_str()).collect();
    schedulers.dedup();
    let mut sizes: Vec<usize> = cells.iter().map(|c| c.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["n"];
    header.extend(&schedulers);
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for n in sizes {
        let mut record = vec![n.to_string()];
        for s in &schedulers {
            let value = cells
                .iter()
                .find(|c| c.n == n && c.scheduler == *s)
                .and_then(|c| c.outcome.as_ref().ok())
                .map(|m| format!("{:.6}", m.mean_latency))
                .unwrap_or_default();
            record.push(value);
        }
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| csv_error(path, e))
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn cmd_run(instance: &Instance, settings: &RunSettings) -> Result<Vec<Cell>, Failure> {
    fs::create_dir_all(&settings.out)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", settings.out.display())))?;
    let started = unix_seconds();
    let cells = run_cells(instance, settings)?;
    let results = settings.out.join("results.csv");
    write_results(&results, &cells)?;
    write_series(&settings.out.join("series.csv"), &cells)?;

    let mut log = String::new();
    let _ = writeln!(log, "started_unix {started}");
    let _ = writeln!(log, "finished_unix {}", unix_seconds());
    let _ = writeln!(log, "seed {} jobs {}", settings.seed, settings.jobs);
    for c in &cells {
        match &c.outcome {
            Ok(_) => {
                let _ = writeln!(log, "{} n={} ok {:.3} ms", c.scheduler, c.n, c.wall_ms);
            }
            Err(e) => {
                let _ = writeln!(log, "{} n={} failed: {e}", c.scheduler, c.n);
            }
        }
    }
    write_file(&settings.out.join("run.log"), &log)?;
    Ok(cells)
}
