//! Requests, instances and schedules, together with the exact KV-cache
//! memory model and the latency metrics computed from a schedule.
//!
//! Time is discrete. A request started at `p` produces its `j`-th output
//! token at step `p + j` and holds `s + j` tokens of KV cache while doing so,
//! so it occupies memory during steps `p + 1 ..= p + o` and completes at
//! `c = p + o`. Nothing is held at step `p` itself: a request admitted at `p`
//! can reuse memory released by requests completing at `p`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token count.
pub type Tokens = u64;
/// Discrete time step.
pub type Time = u64;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// One inference job: `s` prompt tokens, `o` output tokens.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Request {
    pub id: RequestId,
    pub s: Tokens,
    pub o: Tokens,
}

impl Request {
    pub fn new(id: u64, s: Tokens, o: Tokens) -> Self {
        Request {
            id: RequestId(id),
            s,
            o,
        }
    }

    /// Memory held while producing the final token.
    pub fn peak_memory(&self) -> Tokens {
        self.s + self.o
    }

    /// Memory held at step `t` if started at `p`.
    #[inline]
    pub fn memory_at(&self, p: Time, t: Time) -> Tokens {
        if t > p && t - p <= self.o {
            self.s + (t - p)
        } else {
            0
        }
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    memory_limit: Tokens,
    requests: Vec<Request>,
}

/// A set of requests, all arriving at `t = 0`, and the KV-cache capacity.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct Instance {
    memory_limit: Tokens,
    requests: Vec<Request>,
    index: HashMap<RequestId, usize>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.memory_limit == other.memory_limit && self.requests == other.requests
    }
}

impl Eq for Instance {}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        Instance::new(file.memory_limit, file.requests)
    }
}

impl From<Instance> for InstanceFile {
    fn from(instance: Instance) -> Self {
        InstanceFile {
            memory_limit: instance.memory_limit,
            requests: instance.requests,
        }
    }
}

impl Instance {
    pub fn new(memory_limit: Tokens, requests: Vec<Request>) -> Result<Self> {
        if memory_limit == 0 {
            return Err(Error::ZeroMemoryLimit);
        }
        let mut index = HashMap::with_capacity(requests.len());
        for (pos, r) in requests.iter().enumerate() {
            if r.s == 0 || r.o == 0 {
                return Err(Error::InvalidRequest {
                    id: r.id,
                    s: r.s,
                    o: r.o,
                });
            }
            if r.peak_memory() > memory_limit {
                return Err(Error::ExceedsMemory {
                    id: r.id,
                    peak: r.peak_memory(),
                    memory_limit,
                });
            }
            if index.insert(r.id, pos).is_some() {
                return Err(Error::DuplicateId(r.id));
            }
        }
        Ok(Instance {
            memory_limit,
            requests,
            index,
        })
    }

    /// Builds an instance from `(s, o)` pairs; ids follow list position.
    pub fn from_pairs(memory_limit: Tokens, pairs: &[(Tokens, Tokens)]) -> Result<Self> {
        let requests = pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, o))| Request::new(i as u64, s, o))
            .collect();
        Instance::new(memory_limit, requests)
    }

    pub fn memory_limit(&self) -> Tokens {
        self.memory_limit
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.requests.iter().map(|r| r.id)
    }

    pub fn position(&self, id: RequestId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, id: RequestId) -> Option<&Request> {
        self.position(id).map(|i| &self.requests[i])
    }

    pub fn request(&self, id: RequestId) -> Result<&Request> {
        self.get(id).ok_or(Error::UnknownRequest(id))
    }

    pub fn total_output(&self) -> u128 {
        self.requests.iter().map(|r| r.o as u128).sum()
    }

    pub fn max_output(&self) -> Tokens {
        self.requests.iter().map(|r| r.o).max().unwrap_or(0)
    }

    /// Same memory limit, different request list.
    pub fn with_requests(&self, requests: Vec<Request>) -> Result<Self> {
        Instance::new(self.memory_limit, requests)
    }

    /// Resolves a list of ids into positions, requiring a permutation of all ids.
    pub fn permutation_positions(&self, order: &[RequestId]) -> Result<Vec<usize>> {
        if order.len() != self.len() {
            return Err(Error::NotAPermutation(format!(
                "{} ids given for {} requests",
                order.len(),
                self.len()
            )));
        }
        let mut seen = vec![false; self.len()];
        let mut out = Vec::with_capacity(order.len());
        for &id in order {
            let pos = self
                .position(id)
                .ok_or_else(|| Error::NotAPermutation(format!("unknown id {id}")))?;
            if std::mem::replace(&mut seen[pos], true) {
                return Err(Error::NotAPermutation(format!("id {id} repeats")));
            }
            out.push(pos);
        }
        Ok(out)
    }
}

/// Start time of every request. Completion is `start + o`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartSchedule {
    pub starts: BTreeMap<RequestId, Time>,
}

impl StartSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: RequestId, start: Time) -> Option<Time> {
        self.starts.insert(id, start)
    }

    pub fn start(&self, id: RequestId) -> Option<Time> {
        self.starts.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (RequestId, Time)> + '_ {
        self.starts.iter().map(|(&id, &p)| (id, p))
    }

    /// Start times aligned with `instance.requests()`.
    pub fn aligned(&self, instance: &Instance) -> Result<Vec<Time>> {
        for &id in self.starts.keys() {
            instance.request(id)?;
        }
        instance
            .requests()
            .iter()
            .map(|r| self.start(r.id).ok_or(Error::MissingStart(r.id)))
            .collect()
    }

    pub fn from_aligned(instance: &Instance, starts: &[Time]) -> Self {
        debug_assert_eq!(starts.len(), instance.len());
        StartSchedule {
            starts: instance
                .requests()
                .iter()
                .zip(starts)
                .map(|(r, &p)| (r.id, p))
                .collect(),
        }
    }

    pub fn completion(&self, request: &Request) -> Option<Time> {
        self.start(request.id).map(|p| p + request.o)
    }
}

impl FromIterator<(RequestId, Time)> for StartSchedule {
    fn from_iter<I: IntoIterator<Item = (RequestId, Time)>>(iter: I) -> Self {
        StartSchedule {
            starts: iter.into_iter().collect(),
        }
    }
}

/// Ordered batches of request ids; every batch is kept in ascending `o`
/// (ties by id), which is also the order the batch is fed to execution.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    batches: Vec<Vec<RequestId>>,
}

impl BatchPlan {
    /// Sorts each batch by ascending `o` then id and checks that no id repeats.
    pub fn new(instance: &Instance, batches: Vec<Vec<RequestId>>) -> Result<Self> {
        let mut seen = vec![false; instance.len()];
        let mut sorted = Vec::with_capacity(batches.len());
        for mut batch in batches {
            for &id in &batch {
                let pos = instance.position(id).ok_or(Error::UnknownRequest(id))?;
                if std::mem::replace(&mut seen[pos], true) {
                    return Err(Error::NotAPermutation(format!("id {id} appears in two batches")));
                }
            }
            batch.sort_by_key(|id| (instance.requests()[instance.position(*id).unwrap()].o, *id));
            sorted.push(batch);
        }
        Ok(BatchPlan { batches: sorted })
    }

    pub fn batches(&self) -> &[Vec<RequestId>] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Concatenation of all batches: the execution order.
    pub fn flatten(&self) -> Vec<RequestId> {
        self.batches.iter().flatten().copied().collect()
    }

    pub fn covers(&self, instance: &Instance) -> bool {
        self.batches.iter().map(Vec::len).sum::<usize>() == instance.len()
    }
}

/// One step of an execution trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: Time,
    /// Requests producing a token at this step.
    pub active: Vec<RequestId>,
    /// Requests whose start time is this step.
    pub admitted: Vec<RequestId>,
    pub memory_used: Tokens,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub memory_limit: Tokens,
    pub steps: Vec<TraceStep>,
}

impl SimTrace {
    /// Reconstructs the per-step view of a schedule, for steps `0 ..= makespan`.
    pub fn from_schedule(instance: &Instance, schedule: &StartSchedule) -> Result<Self> {
        let starts = schedule.aligned(instance)?;
        let makespan = makespan_of(instance, &starts);
        let len = makespan as usize + 1;
        let mut admitted: Vec<Vec<RequestId>> = vec![Vec::new(); len];
        let mut active: Vec<Vec<RequestId>> = vec![Vec::new(); len];
        let mut used = vec![0 as Tokens; len];
        for (r, &p) in instance.requests().iter().zip(&starts) {
            admitted[p as usize].push(r.id);
            for t in p + 1..=p + r.o {
                active[t as usize].push(r.id);
                used[t as usize] += r.s + (t - p);
            }
        }
        let steps = (0..len)
            .map(|t| {
                let mut a = std::mem::take(&mut active[t]);
                let mut u = std::mem::take(&mut admitted[t]);
                a.sort_unstable();
                u.sort_unstable();
                TraceStep {
                    step: t as Time,
                    active: a,
                    admitted: u,
                    memory_used: used[t],
                }
            })
            .collect();
        Ok(SimTrace {
            memory_limit: instance.memory_limit(),
            steps,
        })
    }

    pub fn peak_memory(&self) -> Tokens {
        self.steps.iter().map(|s| s.memory_used).max().unwrap_or(0)
    }

    /// True when no step exceeds the memory limit.
    pub fn within_limit(&self) -> bool {
        self.steps.iter().all(|s| s.memory_used <= self.memory_limit)
    }

    /// CSV with columns `step,active_count,admitted_ids,memory_used`;
    /// admitted ids are separated by `;`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "active_count", "admitted_ids", "memory_used"])?;
        for s in &self.steps {
            let ids = s
                .admitted
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                s.step.to_string(),
                s.active.len().to_string(),
                ids,
                s.memory_used.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Total end-to-end latency: sum of completion times.
    pub tel: u128,
    pub mean_latency: f64,
    pub makespan: Time,
    pub peak_memory: Tokens,
    /// Mean of `memory_used / M` over steps where at least one request is active.
    pub mean_utilization: f64,
}

/// First step at which a schedule exceeds the memory limit.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct MemoryViolation {
    pub time: Time,
    pub usage: Tokens,
    pub overflow: Tokens,
}

impl fmt::Display for MemoryViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "usage {} at t={} overflows the limit by {}",
            self.usage, self.time, self.overflow
        )
    }
}

/// The F-metric `Σo / k²` of a batch, kept as an exact fraction.
///
/// Comparisons cross-multiply in 128-bit integers, so equal fractions with
/// different representations compare equal.
#[derive(Copy, Clone, Debug)]
pub struct FMetric {
    output_sum: u128,
    size: u64,
}

impl FMetric {
    pub fn new(output_sum: u128, size: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(FMetric { output_sum, size })
    }

    pub fn numerator(&self) -> u128 {
        self.output_sum
    }

    pub fn denominator(&self) -> u128 {
        (self.size as u128) * (self.size as u128)
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn as_f64(&self) -> f64 {
        self.output_sum as f64 / self.denominator() as f64
    }
}

impl PartialEq for FMetric {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FMetric {}

impl PartialOrd for FMetric {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FMetric {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.output_sum * other.denominator()).cmp(&(other.output_sum * self.denominator()))
    }
}

impl fmt::Display for FMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.output_sum, self.denominator())
    }
}

pub fn f_metric(batch: &[Request]) -> Result<FMetric> {
    FMetric::new(
        batch.iter().map(|r| r.o as u128).sum(),
        batch.len() as u64,
    )
}

/// Memory held at step `t_star` by every request the schedule has started.
pub fn memory_usage_at(
    instance: &Instance,
    schedule: &StartSchedule,
    t_star: Time,
) -> Result<Tokens> {
    let mut total = 0;
    for (id, p) in schedule.iter() {
        total += instance.request(id)?.memory_at(p, t_star);
    }
    Ok(total)
}

fn makespan_of(instance: &Instance, starts: &[Time]) -> Time {
    instance
        .requests()
        .iter()
        .zip(starts)
        .map(|(r, &p)| p + r.o)
        .max()
        .unwrap_or(0)
}

/// Memory used at every step `0 ..= makespan`.
///
/// Built from difference arrays over `Σ (s - p)` and the active count, so the
/// cost is linear in `n + makespan`.
pub fn memory_profile(instance: &Instance, schedule: &StartSchedule) -> Result<Vec<Tokens>> {
    let starts = schedule.aligned(instance)?;
    let makespan = makespan_of(instance, &starts) as usize;
    let mut d_offset = vec![0i128; makespan + 2];
    let mut d_count = vec![0i128; makespan + 2];
    for (r, &p) in instance.requests().iter().zip(&starts) {
        let first = p as usize + 1;
        let last = (p + r.o) as usize;
        let offset = r.s as i128 - p as i128;
        d_offset[first] += offset;
        d_offset[last + 1] -= offset;
        d_count[first] += 1;
        d_count[last + 1] -= 1;
    }
    let mut profile = Vec::with_capacity(makespan + 1);
    let (mut offset, mut count) = (0i128, 0i128);
    for t in 0..=makespan {
        offset += d_offset[t];
        count += d_count[t];
        profile.push((offset + count * t as i128) as Tokens);
    }
    Ok(profile)
}

/// Checks the memory limit at every integer step of the schedule.
pub fn validate_schedule(instance: &Instance, schedule: &StartSchedule) -> Result<()> {
    let limit = instance.memory_limit();
    let profile = memory_profile(instance, schedule)?;
    match profile.iter().position(|&u| u > limit) {
        None => Ok(()),
        Some(t) => Err(Error::MemoryViolation(MemoryViolation {
            time: t as Time,
            usage: profile[t],
            overflow: profile[t] - limit,
        })),
    }
}

/// Memory check for a batch whose members all start together: at each
/// distinct completion offset `v`, members with `o >= v` hold `s + v`.
pub fn batch_feasible_exact(batch: &[Request], memory_limit: Tokens) -> bool {
    let mut sorted: Vec<&Request> = batch.iter().collect();
    sorted.sort_unstable_by(|a, b| b.o.cmp(&a.o));
    // Walk descending o, accumulating the members still running at each checkpoint.
    let (mut s_sum, mut count) = (0u128, 0u128);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].o;
        while i < sorted.len() && sorted[i].o == v {
            s_sum += sorted[i].s as u128;
            count += 1;
            i += 1;
        }
        if s_sum + count * v as u128 > memory_limit as u128 {
            return false;
        }
    }
    true
}

/// Knapsack-style bound `Σ (s + o) <= M`; implies [`batch_feasible_exact`].
pub fn batch_feasible_conservative(batch: &[Request], memory_limit: Tokens) -> bool {
    batch.iter().map(|r| r.peak_memory() as u128).sum::<u128>() <= memory_limit as u128
}

pub fn compute_metrics(instance: &Instance, schedule: &StartSchedule) -> Result<Metrics> {
    validate_schedule(instance, schedule)?;
    let starts = schedule.aligned(instance)?;
    let profile = memory_profile(instance, schedule)?;
    let tel: u128 = instance
        .requests()
        .iter()
        .zip(&starts)
        .map(|(r, &p)| (p + r.o) as u128)
        .sum();
    let makespan = makespan_of(instance, &starts);
    let busy: Vec<Tokens> = profile.iter().copied().filter(|&u| u > 0).collect();
    let mean_utilization = if busy.is_empty() {
        0.0
    } else {
        busy.iter().map(|&u| u as f64).sum::<f64>()
            / (busy.len() as f64 * instance.memory_limit() as f64)
    };
    Ok(Metrics {
        tel,
        mean_latency: if instance.is_empty() {
            0.0
        } else {
            tel as f64 / instance.len() as f64
        },
        makespan,
        peak_memory: profile.iter().copied().max().unwrap_or(0),
        mean_utilization,
    })
}
