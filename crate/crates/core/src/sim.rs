//! Discrete-time execution of a request ordering under the memory limit.
//!
//! At every step `t` the simulator retires requests that completed at or
//! before `t`, then scans the pending list in order. A candidate started at
//! `t` is admitted only if, together with every request still running, the
//! memory used at each future completion time stays within `M`. Between two
//! consecutive completions every running request grows by one token per step,
//! so those completion times are the only points that need checking.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    batch_feasible_exact, BatchPlan, Instance, Request, SimTrace, StartSchedule, Time, Tokens,
};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    /// Stop the scan at the first request that does not fit.
    #[default]
    PrefixBlocking,
    /// Keep scanning past requests that do not fit.
    SkipScan,
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPolicy {
    pub admission: Admission,
}

impl ExecutionPolicy {
    pub const PREFIX_BLOCKING: ExecutionPolicy = ExecutionPolicy {
        admission: Admission::PrefixBlocking,
    };
    pub const SKIP_SCAN: ExecutionPolicy = ExecutionPolicy {
        admission: Admission::SkipScan,
    };
}

#[derive(Default, Clone, Copy)]
struct Bucket {
    count: i128,
    /// Σ (s - p) over the bucket's requests.
    offset: i128,
}

/// Running requests grouped by completion time.
#[derive(Default)]
struct RunningSet {
    by_completion: BTreeMap<Time, Bucket>,
}

impl RunningSet {
    fn retire_through(&mut self, t: Time) {
        while let Some(entry) = self.by_completion.first_entry() {
            if *entry.key() > t {
                break;
            }
            entry.remove();
        }
    }

    fn is_empty(&self) -> bool {
        self.by_completion.is_empty()
    }

    /// Would `req`, started at `t`, keep memory within `limit` at every
    /// completion checkpoint of the running set plus itself?
    fn admits(&self, req: &Request, t: Time, limit: Tokens) -> bool {
        let limit = limit as i128;
        let c_new = t + req.o;
        let cand_offset = req.s as i128 - t as i128;
        let within = |count: i128, offset: i128, tau: Time| offset + count * tau as i128 <= limit;

        let (mut count, mut offset) = (0i128, 0i128);
        let mut added = false;
        for (&c, b) in self.by_completion.iter().rev() {
            if !added && c_new > c {
                count += 1;
                offset += cand_offset;
                added = true;
                if !within(count, offset, c_new) {
                    return false;
                }
            }
            count += b.count;
            offset += b.offset;
            if !added && c_new == c {
                count += 1;
                offset += cand_offset;
                added = true;
            }
            if !within(count, offset, c) {
                return false;
            }
        }
        if !added {
            count += 1;
            offset += cand_offset;
            return within(count, offset, c_new);
        }
        true
    }

    fn insert(&mut self, req: &Request, t: Time) {
        let b = self.by_completion.entry(t + req.o).or_default();
        b.count += 1;
        b.offset += req.s as i128 - t as i128;
    }
}

/// Runs the requests in `order` through the step-by-step admission loop.
pub fn execute_ordered(
    instance: &Instance,
    order: &[crate::model::RequestId],
    policy: ExecutionPolicy,
) -> Result<(StartSchedule, SimTrace)> {
    let positions = instance.permutation_positions(order)?;
    let requests = instance.requests();
    let limit = instance.memory_limit();

    let mut starts: Vec<Time> = vec![0; requests.len()];
    let mut pending: VecDeque<usize> = positions.into();
    let mut running = RunningSet::default();
    let mut t: Time = 0;

    while !pending.is_empty() {
        running.retire_through(t);
        let before = pending.len();
        match policy.admission {
            Admission::PrefixBlocking => {
                while let Some(&head) = pending.front() {
                    if !running.admits(&requests[head], t, limit) {
                        break;
                    }
                    running.insert(&requests[head], t);
                    starts[head] = t;
                    pending.pop_front();
                }
            }
            Admission::SkipScan => {
                let mut kept = VecDeque::with_capacity(pending.len());
                for idx in pending.drain(..) {
                    if running.admits(&requests[idx], t, limit) {
                        running.insert(&requests[idx], t);
                        starts[idx] = t;
                    } else {
                        kept.push_back(idx);
                    }
                }
                pending = kept;
            }
        }
        // Every request fits on its own, so an idle step always admits.
        debug_assert!(pending.len() < before || !running.is_empty());
        t += 1;
    }

    let schedule = StartSchedule::from_aligned(instance, &starts);
    let trace = SimTrace::from_schedule(instance, &schedule)?;
    assert!(trace.within_limit(), "simulator exceeded the memory limit");
    Ok((schedule, trace))
}

/// Runs a plan one batch at a time: a batch starts together once every
/// request of the previous batch has completed.
pub fn execute_sequential_batches(
    instance: &Instance,
    plan: &BatchPlan,
) -> Result<(StartSchedule, SimTrace)> {
    if !plan.covers(instance) {
        return Err(Error::NotAPermutation(format!(
            "plan covers {} of {} requests",
            plan.batches().iter().map(Vec::len).sum::<usize>(),
            instance.len()
        )));
    }
    let mut schedule = StartSchedule::new();
    let mut clock: Time = 0;
    for (index, batch) in plan.batches().iter().enumerate() {
        let members = batch
            .iter()
            .map(|&id| instance.request(id).copied())
            .collect::<Result<Vec<Request>>>()?;
        if !batch_feasible_exact(&members, instance.memory_limit()) {
            return Err(Error::InfeasibleBatch { index });
        }
        for r in &members {
            schedule.insert(r.id, clock);
        }
        clock += members.iter().map(|r| r.o).max().unwrap_or(0);
    }
    let trace = SimTrace::from_schedule(instance, &schedule)?;
    assert!(trace.within_limit(), "sequential batches exceeded the memory limit");
    Ok((schedule, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compute_metrics, RequestId};

    fn example_one() -> Instance {
        let mut pairs = vec![(63, 1)];
        pairs.extend(std::iter::repeat_n((1, 2), 21));
        Instance::from_pairs(64, &pairs).unwrap()
    }

    fn tel(instance: &Instance, schedule: &StartSchedule) -> u128 {
        compute_metrics(instance, schedule).unwrap().tel
    }

    #[test]
    fn example_one_orders() {
        let inst = example_one();
        let type1_first: Vec<RequestId> = inst.ids().collect();
        let (sched, _) = execute_ordered(&inst, &type1_first, ExecutionPolicy::default()).unwrap();
        assert_eq!(tel(&inst, &sched), 64);

        let mut type2_first: Vec<RequestId> = inst.ids().skip(1).collect();
        type2_first.push(RequestId(0));
        let (sched, trace) =
            execute_ordered(&inst, &type2_first, ExecutionPolicy::default()).unwrap();
        assert_eq!(tel(&inst, &sched), 45);
        assert_eq!(sched.start(RequestId(0)), Some(2));
        assert_eq!(trace.peak_memory(), 64);
    }

    #[test]
    fn single_request() {
        let inst = Instance::from_pairs(10, &[(3, 7)]).unwrap();
        let (sched, trace) =
            execute_ordered(&inst, &[RequestId(0)], ExecutionPolicy::default()).unwrap();
        assert_eq!(sched.start(RequestId(0)), Some(0));
        assert_eq!(tel(&inst, &sched), 7);
        assert_eq!(trace.steps.len(), 8);
    }

    #[test]
    fn rejects_non_permutation() {
        let inst = example_one();
        let err = execute_ordered(&inst, &[RequestId(0)], ExecutionPolicy::default());
        assert!(matches!(err, Err(Error::NotAPermutation(_))));
        let mut dup: Vec<RequestId> = inst.ids().collect();
        dup[3] = RequestId(2);
        assert!(execute_ordered(&inst, &dup, ExecutionPolicy::default()).is_err());
    }

    #[test]
    fn skip_scan_fills_behind_a_blocked_head() {
        // (5,5) runs; (6,4) cannot join, (1,1) can.
        let inst = Instance::from_pairs(12, &[(5, 5), (6, 4), (1, 1)]).unwrap();
        let order: Vec<RequestId> = inst.ids().collect();
        let (blocking, _) = execute_ordered(&inst, &order, ExecutionPolicy::PREFIX_BLOCKING).unwrap();
        let (skipping, _) = execute_ordered(&inst, &order, ExecutionPolicy::SKIP_SCAN).unwrap();
        assert_eq!(blocking.start(RequestId(2)), blocking.start(RequestId(1)));
        assert_eq!(skipping.start(RequestId(2)), Some(0));
        assert!(blocking.start(RequestId(1)).unwrap() > 0);
    }

    #[test]
    fn sequential_batches_example_one() {
        let inst = example_one();
        let type2: Vec<RequestId> = inst.ids().skip(1).collect();
        let plan = BatchPlan::new(&inst, vec![type2, vec![RequestId(0)]]).unwrap();
        let (sched, _) = execute_sequential_batches(&inst, &plan).unwrap();
        assert_eq!(sched.start(RequestId(0)), Some(2));
        assert_eq!(tel(&inst, &sched), 45);
    }

    #[test]
    fn sequential_batches_errors() {
        let inst = example_one();
        let partial = BatchPlan::new(&inst, vec![vec![RequestId(0)]]).unwrap();
        assert!(matches!(
            execute_sequential_batches(&inst, &partial),
            Err(Error::NotAPermutation(_))
        ));
        let all: Vec<RequestId> = inst.ids().collect();
        let plan = BatchPlan::new(&inst, vec![all]).unwrap();
        assert!(matches!(
            execute_sequential_batches(&inst, &plan),
            Err(Error::InfeasibleBatch { index: 0 })
        ));
    }

    #[test]
    fn single_batch_matches_ordered_run() {
        let inst = Instance::from_pairs(1000, &[(3, 4), (2, 9), (5, 1), (7, 7)]).unwrap();
        let plan = BatchPlan::new(&inst, vec![inst.ids().collect()]).unwrap();
        let (seq, _) = execute_sequential_batches(&inst, &plan).unwrap();
        let (ord, _) = execute_ordered(&inst, &plan.flatten(), ExecutionPolicy::default()).unwrap();
        assert_eq!(seq, ord);
    }
}
