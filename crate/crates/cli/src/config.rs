use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kvsched::model::{Instance, Time, Tokens};
use kvsched::schedulers::{SchedulerKind, SchedulerSpec};
use kvsched::selectors::{SelectorConfig, SelectorKind};
use kvsched::sim::Admission;
use kvsched::workloads::{
    gen_3partition, gen_adversarial_sf, gen_adversarial_sf2, gen_partition_makespan,
    gen_synthetic, load_instance, load_trace, three_partition_tel, DistributionKind,
    DistributionSpec,
};
use serde::{Deserialize, Deserializer, Serialize};

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticArgs {
    pub n: usize,
    #[serde(default = "default_memory")]
    pub memory_limit: Tokens,
}

fn default_memory() -> Tokens {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetArgs {
    pub xs: Vec<Tokens>,
    pub t: Tokens,
}

/// Where a run's instance comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Uniform(SyntheticArgs),
    Normal(SyntheticArgs),
    Binomial(SyntheticArgs),
    Exponential(SyntheticArgs),
    Mixed(SyntheticArgs),
    /// One `(63, 1)` request and 21 `(1, 2)` requests, `M = 64`.
    Example1,
    AdversarialSf { memory_limit: Tokens },
    AdversarialSf2 { memory_limit: Tokens },
    ThreePartition(SubsetArgs),
    Partition(SubsetArgs),
    Trace {
        path: PathBuf,
        #[serde(default)]
        memory_limit: Option<Tokens>,
    },
    Instance { path: PathBuf },
}

impl Source {
    fn synthetic(&self) -> Option<(DistributionKind, &SyntheticArgs)> {
        match self {
            Source::Uniform(a) => Some((DistributionKind::Uniform, a)),
            Source::Normal(a) => Some((DistributionKind::Normal, a)),
            Source::Binomial(a) => Some((DistributionKind::Binomial, a)),
            Source::Exponential(a) => Some((DistributionKind::Exponential, a)),
            Source::Mixed(a) => Some((DistributionKind::Mixed, a)),
            _ => None,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Instance, Failure> {
        if let Some((kind, args)) = self.synthetic() {
            return gen_synthetic(&DistributionSpec::standard(kind, seed), args.n, args.memory_limit)
                .map_err(Failure::from_input);
        }
        let built = match self {
            Source::Example1 => {
                let mut pairs = vec![(63, 1)];
                pairs.extend(std::iter::repeat_n((1, 2), 21));
                Instance::from_pairs(64, &pairs)
            }
            Source::AdversarialSf { memory_limit } => gen_adversarial_sf(*memory_limit),
            Source::AdversarialSf2 { memory_limit } => gen_adversarial_sf2(*memory_limit),
            Source::ThreePartition(a) => gen_3partition(&a.xs, a.t),
            Source::Partition(a) => gen_partition_makespan(&a.xs, a.t),
            Source::Trace { path, memory_limit } => load_trace(path, *memory_limit),
            Source::Instance { path } => load_instance(path),
            _ => unreachable!("synthetic sources handled above"),
        };
        built.map_err(Failure::from_input)
    }

    /// File name for a generated instance.
    pub fn file_stem(&self, seed: u64) -> String {
        if let Some((kind, args)) = self.synthetic() {
            return format!("{}_n{}_m{}_seed{seed}", kind.name(), args.n, args.memory_limit);
        }
        match self {
            Source::Example1 => "example1".into(),
            Source::AdversarialSf { memory_limit } => format!("adversarial_sf_m{memory_limit}"),
            Source::AdversarialSf2 { memory_limit } => format!("adversarial_sf2_m{memory_limit}"),
            Source::ThreePartition(a) => format!("three_partition_t{}", a.t),
            Source::Partition(a) => format!("partition_t{}", a.t),
            Source::Trace { path, .. } | Source::Instance { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "instance".into()),
            _ => unreachable!("synthetic sources handled above"),
        }
    }

    /// A note printed after generation, if the source has a known optimum.
    pub fn note(&self) -> Option<String> {
        match self {
            Source::ThreePartition(a) => {
                let m = (a.xs.len() / 3) as u64;
                Some(format!(
                    "optimal TEL when a 3-partition exists: 3m(m+1)/2 = {} (m = {m})",
                    three_partition_tel(m)
                ))
            }
            Source::Partition(_) => Some("optimal makespan is 2 iff a partition exists".into()),
            _ => None,
        }
    }
}

/// Generator flags from the command line.
pub struct SourceFlags<'a> {
    pub kind: &'a str,
    pub n: Option<usize>,
    pub memory_limit: Option<Tokens>,
    pub xs: Option<Vec<Tokens>>,
    pub t: Option<Tokens>,
    pub path: Option<PathBuf>,
}

impl SourceFlags<'_> {
    pub fn to_source(&self) -> Result<Source, Failure> {
        let need = |what: &str| Failure::Config(format!("{} needs --{what}", self.kind));
        let synthetic = || -> Result<SyntheticArgs, Failure> {
            Ok(SyntheticArgs {
                n: self.n.ok_or_else(|| need("n"))?,
                memory_limit: self.memory_limit.unwrap_or_else(default_memory),
            })
        };
        let subset = || -> Result<SubsetArgs, Failure> {
            Ok(SubsetArgs {
                xs: self.xs.clone().ok_or_else(|| need("xs"))?,
                t: self.t.ok_or_else(|| need("t"))?,
            })
        };
        let memory = || self.memory_limit.ok_or_else(|| need("memory-limit"));
        let path = || self.path.clone().ok_or_else(|| need("path"));
        Ok(match self.kind {
            "uniform" => Source::Uniform(synthetic()?),
            "normal" => Source::Normal(synthetic()?),
            "binomial" => Source::Binomial(synthetic()?),
            "exponential" => Source::Exponential(synthetic()?),
            "mixed" => Source::Mixed(synthetic()?),
            "example1" => Source::Example1,
            "adversarial_sf" => Source::AdversarialSf { memory_limit: memory()? },
            "adversarial_sf2" => Source::AdversarialSf2 { memory_limit: memory()? },
            "3partition" | "three_partition" => Source::ThreePartition(subset()?),
            "partition" => Source::Partition(subset()?),
            "trace" => Source::Trace {
                path: path()?,
                memory_limit: self.memory_limit,
            },
            "instance" => Source::Instance { path: path()? },
            other => return Err(Failure::Config(format!("unknown workload {other:?}"))),
        })
    }
}

/// LP horizon: a fixed step count, or the shortest-first makespan of the
/// instance being scheduled.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Horizon {
    Steps(Time),
    Makespan,
}

impl FromStr for Horizon {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "makespan" {
            return Ok(Horizon::Makespan);
        }
        s.parse()
            .map(Horizon::Steps)
            .map_err(|_| format!("horizon must be a step count or \"makespan\", got {s:?}"))
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Steps(Time),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Steps(t) => Ok(Horizon::Steps(t)),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A scheduler to run: a [`SchedulerSpec`], or the second-class-first
/// reference order of the two-class adversarial instances.
#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Spec(SchedulerSpec),
    SecondClassFirst,
}

pub const SECOND_CLASS_FIRST: &str = "second_class_first";

impl Entry {
    pub fn label(&self) -> String {
        match self {
            Entry::Spec(spec) => spec.label(),
            Entry::SecondClassFirst => SECOND_CLASS_FIRST.into(),
        }
    }
}

/// Parses `fcfs`, `mc_sf`, `sorted_f`, `sorted_f(local_swap)`, `lp_swap`, ...
/// A bare `sorted_f` leaves its selector unset.
pub fn parse_scheduler(name: &str) -> Result<(SchedulerKind, Option<SelectorKind>), Failure> {
    let name = name.trim();
    let (head, selector) = match name.split_once('(') {
        Some((head, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Failure::Config(format!("unbalanced parentheses in {name:?}")))?;
            (head, Some(inner.parse::<SelectorKind>().map_err(Failure::from_input)?))
        }
        None => (name, None),
    };
    let kind = head.parse::<SchedulerKind>().map_err(Failure::from_input)?;
    Ok((kind, selector))
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SchedulerEntry {
    Name(String),
    Spec(SchedulerSpec),
}

/// Experiment description; every field can be overridden by the flag of
/// the same name.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Option<Source>,
    #[serde(default)]
    pub schedulers: Vec<SchedulerEntry>,
    pub sizes: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub selector: Option<SelectorKind>,
    pub epsilon: Option<f64>,
    pub horizon: Option<Horizon>,
    pub lp_budget: Option<u128>,
    pub policy: Option<Admission>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    /// Resolves the scheduler list into validated entries.
    pub fn entries(&self) -> Result<Vec<Entry>, Failure> {
        if self.schedulers.is_empty() {
            return Err(Failure::Config("no schedulers configured".into()));
        }
        let mut out = Vec::new();
        for entry in &self.schedulers {
            let mut spec = match entry {
                SchedulerEntry::Name(name) if name == SECOND_CLASS_FIRST => {
                    out.push(Entry::SecondClassFirst);
                    continue;
                }
                SchedulerEntry::Name(name) => {
                    let (kind, selector) = parse_scheduler(name)?;
                    let mut spec = SchedulerSpec::new(kind);
                    if kind == SchedulerKind::SortedF {
                        let kind = selector.or(self.selector).unwrap_or_default();
                        spec.selector = Some(SelectorConfig::of(kind));
                    } else if let Some(sel) = selector {
                        spec.selector = Some(SelectorConfig::of(sel));
                    }
                    spec
                }
                SchedulerEntry::Spec(spec) => spec.clone(),
            };
            if let Some(sel) = spec.selector.as_mut() {
                if let Some(eps) = self.epsilon {
                    sel.epsilon = eps;
                }
                sel.seed = self.seed.unwrap_or(0);
            }
            if spec.kind.uses_lp() {
                spec.lp_budget = spec.lp_budget.or(self.lp_budget);
            }
            spec.validate().map_err(Failure::from_input)?;
            out.push(Entry::Spec(spec));
        }
        Ok(out)
    }
}
