//! Instance generators and trace ingestion.
//!
//! Synthetic workloads draw from a `Pcg32` stream (PCG-XSH-RR, 64-bit state)
//! seeded with `Pcg32::seed_from_u64(seed)`. For every request the prompt
//! length is drawn before the output length. Continuous samples are clipped
//! to `[1, max_len]` and then rounded half-up (`floor(x + 0.5)`).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::{Binomial, Distribution as _, Exp, LogNormal, Normal};
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Request, RequestId, Tokens};

/// Largest memory limit accepted by the adversarial generators; keeps the
/// `M^1.5` second class at or below 125k requests.
pub const ADVERSARIAL_MAX_M: Tokens = 2500;

fn exact_sqrt(m: Tokens) -> Option<Tokens> {
    let r = (m as f64).sqrt().round() as Tokens;
    (r * r == m).then_some(r)
}

fn adversarial_root(m: Tokens) -> Result<Tokens> {
    let root = exact_sqrt(m)
        .ok_or_else(|| Error::Generator(format!("memory limit {m} is not a perfect square")))?;
    if root < 2 {
        return Err(Error::Generator(format!("memory limit {m} must be at least 4")));
    }
    if m > ADVERSARIAL_MAX_M {
        return Err(Error::Generator(format!(
            "memory limit {m} exceeds the cap of {ADVERSARIAL_MAX_M}"
        )));
    }
    Ok(root)
}

fn two_class(m: Tokens, first: (Tokens, Tokens), second: (Tokens, Tokens)) -> Result<Instance> {
    let root = adversarial_root(m)?;
    let second_count = m * root;
    let mut pairs = Vec::with_capacity((m + second_count) as usize);
    pairs.extend(std::iter::repeat_n(first, m as usize));
    pairs.extend(std::iter::repeat_n(second, second_count as usize));
    Instance::from_pairs(m, &pairs)
}

/// `M` requests `(√M − 1, 1)` followed by `M^1.5` requests `(1, 2)`.
///
/// Shortest-output-first runs the first class ahead of the second.
pub fn gen_adversarial_sf(m: Tokens) -> Result<Instance> {
    let root = adversarial_root(m)?;
    two_class(m, (root - 1, 1), (1, 2))
}

/// `M` requests `(1, √M − 1)` followed by `M^1.5` requests `(√M, 1)`.
///
/// Smallest-`s+o`-first runs the first class ahead of the second.
pub fn gen_adversarial_sf2(m: Tokens) -> Result<Instance> {
    let root = adversarial_root(m)?;
    two_class(m, (1, root - 1), (root, 1))
}

/// For the two-class adversarial instances: every second-class request (in
/// id order) ahead of the first class.
pub fn second_class_first_order(instance: &Instance) -> Vec<RequestId> {
    let first = instance.memory_limit() as usize;
    let ids: Vec<RequestId> = instance.ids().collect();
    let split = first.min(ids.len());
    ids[split..].iter().chain(&ids[..split]).copied().collect()
}

/// Requests `(x_i, 1)` from a 3-Partition instance.
///
/// Every request also holds its single output token, so a step running a
/// triple with `Σx = T` needs `T + 3` tokens; the limit is set to `T + 3`.
/// Any four requests need at least `T + 4` (each `x >= T/4`), so the optimal
/// total latency is `3m(m+1)/2` exactly when the triples exist.
pub fn gen_3partition(xs: &[Tokens], t: Tokens) -> Result<Instance> {
    if xs.is_empty() || !xs.len().is_multiple_of(3) {
        return Err(Error::Generator(format!(
            "3-partition needs 3m integers, got {}",
            xs.len()
        )));
    }
    let m = (xs.len() / 3) as u128;
    let sum: u128 = xs.iter().map(|&x| x as u128).sum();
    if sum != m * t as u128 {
        return Err(Error::Generator(format!("sum {sum} differs from mT = {}", m * t as u128)));
    }
    for &x in xs {
        if 4 * x < t {
            return Err(Error::Generator(format!("{x} is below T/4 = {t}/4")));
        }
        if 2 * x >= t {
            return Err(Error::Generator(format!("{x} is not below T/2 = {t}/2")));
        }
    }
    let pairs: Vec<(Tokens, Tokens)> = xs.iter().map(|&x| (x, 1)).collect();
    Instance::from_pairs(t + 3, &pairs)
}

/// Optimal total latency of a [`gen_3partition`] instance when a partition exists.
pub fn three_partition_tel(m: u64) -> u128 {
    3 * (m as u128) * (m as u128 + 1) / 2
}

/// Requests from a Partition instance (`Σx = 2T`); makespan 2 is reachable
/// iff the multiset splits into two halves of sum `T`.
///
/// A step running a set `S` holds `K·Σ_S x + |S|` tokens with `K = n + 1`
/// and `s_i = K·x_i`. With the limit `K·T + n` a set fits exactly when
/// `Σ_S x <= T`, since `|S| <= n < K`.
pub fn gen_partition_makespan(xs: &[Tokens], t: Tokens) -> Result<Instance> {
    if xs.is_empty() {
        return Err(Error::Generator("partition needs at least one integer".into()));
    }
    let sum: u128 = xs.iter().map(|&x| x as u128).sum();
    if sum != 2 * t as u128 {
        return Err(Error::Generator(format!("sum {sum} differs from 2T = {}", 2 * t as u128)));
    }
    if let Some(&x) = xs.iter().find(|&&x| x == 0 || x > t) {
        return Err(Error::Generator(format!("{x} is outside [1, T]")));
    }
    let n = xs.len() as Tokens;
    let scale = n + 1;
    let pairs: Vec<(Tokens, Tokens)> = xs.iter().map(|&x| (scale * x, 1)).collect();
    Instance::from_pairs(scale * t + n, &pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Integers drawn uniformly from `[lo, hi)`.
    Uniform { lo: Tokens, hi: Tokens },
    Normal { mean: f64, std_dev: f64 },
    /// `Binomial(trials, p) + 1`.
    Binomial { trials: u64, p: f64 },
    Exponential { scale: f64 },
    /// Prompts: exponential (scale 10) with probability 0.8, otherwise
    /// log-normal (`μ = ln 40`, `σ = 0.25`); prompts above `max_len` are
    /// redrawn uniformly from `[40, 50]`. Outputs: exponential, scale 5.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(flatten)]
    pub distribution: Distribution,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_len")]
    pub max_len: Tokens,
}

fn default_max_len() -> Tokens {
    50
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
    Normal,
    Binomial,
    Exponential,
    Mixed,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 5] = [
        DistributionKind::Uniform,
        DistributionKind::Normal,
        DistributionKind::Binomial,
        DistributionKind::Exponential,
        DistributionKind::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DistributionKind::Uniform => "uniform",
            DistributionKind::Normal => "normal",
            DistributionKind::Binomial => "binomial",
            DistributionKind::Exponential => "exponential",
            DistributionKind::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistributionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Generator(format!("unknown distribution {s:?}")))
    }
}

impl DistributionSpec {
    /// The synthetic benchmark parameters: `M = 100`, lengths in `[1, 50]`.
    pub fn standard(kind: DistributionKind, seed: u64) -> Self {
        let distribution = match kind {
            DistributionKind::Uniform => Distribution::Uniform { lo: 1, hi: 51 },
            DistributionKind::Normal => Distribution::Normal {
                mean: 25.0,
                std_dev: 8.33,
            },
            DistributionKind::Binomial => Distribution::Binomial { trials: 49, p: 0.5 },
            DistributionKind::Exponential => Distribution::Exponential { scale: 5.0 },
            DistributionKind::Mixed => Distribution::Mixed,
        };
        DistributionSpec {
            distribution,
            seed,
            max_len: 50,
        }
    }

    /// Request count used for this distribution in the synthetic comparison.
    pub fn standard_size(kind: DistributionKind) -> usize {
        match kind {
            DistributionKind::Mixed => 200,
            _ => 100,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Generator(msg));
        if self.max_len == 0 {
            return bad("max_len must be >= 1".into());
        }
        match self.distribution {
            Distribution::Uniform { lo, hi } if lo == 0 || hi <= lo => {
                bad(format!("uniform range [{lo}, {hi}) must be nonempty and start at >= 1"))
            }
            Distribution::Normal { std_dev, .. } if !(std_dev > 0.0) => {
                bad(format!("normal std_dev {std_dev} must be positive"))
            }
            Distribution::Binomial { p, .. } if !(0.0..=1.0).contains(&p) => {
                bad(format!("binomial p {p} outside [0, 1]"))
            }
            Distribution::Exponential { scale } if !(scale > 0.0) => {
                bad(format!("exponential scale {scale} must be positive"))
            }
            _ => Ok(()),
        }
    }
}

fn clip_round(x: f64, max_len: Tokens) -> Tokens {
    let clipped = x.clamp(1.0, max_len as f64);
    (clipped + 0.5).floor() as Tokens
}

struct Sampler<'a> {
    spec: &'a DistributionSpec,
    rng: Pcg32,
}

impl Sampler<'_> {
    fn draw(&mut self, prompt: bool) -> Tokens {
        let max = self.spec.max_len;
        let rng = &mut self.rng;
        match self.spec.distribution {
            Distribution::Uniform { lo, hi } => rng.random_range(lo..hi).min(max),
            Distribution::Normal { mean, std_dev } => {
                clip_round(Normal::new(mean, std_dev).unwrap().sample(rng), max)
            }
            Distribution::Binomial { trials, p } => {
                (Binomial::new(trials, p).unwrap().sample(rng) + 1).min(max)
            }
            Distribution::Exponential { scale } => {
                clip_round(Exp::new(1.0 / scale).unwrap().sample(rng), max)
            }
            Distribution::Mixed if prompt => {
                let x = if rng.random::<f64>() < 0.8 {
                    Exp::new(0.1).unwrap().sample(rng)
                } else {
                    LogNormal::new(40f64.ln(), 0.25).unwrap().sample(rng)
                };
                if x > max as f64 {
                    rng.random_range(40..=50).min(max)
                } else {
                    clip_round(x, max)
                }
            }
            Distribution::Mixed => clip_round(Exp::new(0.2).unwrap().sample(rng), max),
        }
    }
}

/// Draws `n` requests; ids are `0..n`.
pub fn gen_synthetic(spec: &DistributionSpec, n: usize, memory_limit: Tokens) -> Result<Instance> {
    spec.validate()?;
    let mut sampler = Sampler {
        spec,
        rng: Pcg32::seed_from_u64(spec.seed),
    };
    let pairs: Vec<(Tokens, Tokens)> = (0..n)
        .map(|_| {
            let s = sampler.draw(true);
            let o = sampler.draw(false);
            (s, o)
        })
        .collect();
    Instance::from_pairs(memory_limit, &pairs)
}

/// Reads a request trace.
///
/// `.json` files hold a full instance. Anything else is parsed as CSV with
/// header `s,o`; ids follow row order and `memory_limit` is required.
pub fn load_trace(path: &Path, memory_limit: Option<Tokens>) -> Result<Instance> {
    if path.extension().is_some_and(|e| e == "json") {
        return load_instance(path);
    }
    let memory_limit = memory_limit.ok_or_else(|| Error::Trace {
        path: path.to_path_buf(),
        line: 0,
        msg: "a CSV trace needs a memory limit".into(),
    })?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trace_err = |line: usize, msg: String| Error::Trace {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "s,o" => {}
        other => {
            return Err(trace_err(
                1,
                format!("expected header \"s,o\", found {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut requests = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(trace_err(line, format!("expected 2 fields, found {}", fields.len())));
        }
        let parse = |f: &str, name: &str| -> Result<Tokens> {
            let v: Tokens = f
                .parse()
                .map_err(|_| trace_err(line, format!("{name} is not an integer: {f:?}")))?;
            if v == 0 {
                return Err(trace_err(line, format!("{name} must be >= 1")));
            }
            Ok(v)
        };
        let s = parse(fields[0], "s")?;
        let o = parse(fields[1], "o")?;
        if s + o > memory_limit {
            return Err(trace_err(
                line,
                format!("s+o = {} exceeds the memory limit {memory_limit}", s + o),
            ));
        }
        requests.push(Request::new(requests.len() as u64, s, o));
    }
    Instance::new(memory_limit, requests)
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_instance(instance: &Instance, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, instance)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
