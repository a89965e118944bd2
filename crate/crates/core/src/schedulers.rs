//! End-to-end policies: each produces a request order (and, for the batch
//! planners, the batch plan behind it) that the simulator then executes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{build_model, solve_lp_with, LpOptions, LpSolution, DEFAULT_LP_BUDGET};
use crate::model::{
    compute_metrics, BatchPlan, Instance, Metrics, Request, RequestId, SimTrace, StartSchedule,
    Time,
};
use crate::selectors::{greedy_fill, local_swap_from, select, SelectorConfig, SelectorKind};
use crate::sim::{execute_ordered, ExecutionPolicy};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Fcfs,
    McSf,
    McSfTotal,
    SortedF,
    SortedLp,
    LpSwap,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 6] = [
        SchedulerKind::Fcfs,
        SchedulerKind::McSf,
        SchedulerKind::McSfTotal,
        SchedulerKind::SortedF,
        SchedulerKind::SortedLp,
        SchedulerKind::LpSwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Fcfs => "fcfs",
            SchedulerKind::McSf => "mc_sf",
            SchedulerKind::McSfTotal => "mc_sf_total",
            SchedulerKind::SortedF => "sorted_f",
            SchedulerKind::SortedLp => "sorted_lp",
            SchedulerKind::LpSwap => "lp_swap",
        }
    }

    pub fn uses_selector(self) -> bool {
        matches!(self, SchedulerKind::SortedF | SchedulerKind::LpSwap)
    }

    pub fn uses_lp(self) -> bool {
        matches!(self, SchedulerKind::SortedLp | SchedulerKind::LpSwap)
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheduler {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerSpec {
    pub kind: SchedulerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<SelectorConfig>,
    /// LP horizon `T̄`; defaults to `Σ o`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_override: Option<Time>,
    /// Cap on `n · T̄` for the LP; defaults to [`DEFAULT_LP_BUDGET`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp_budget: Option<u128>,
}

impl SchedulerSpec {
    /// A spec for a kind that takes no selector, or takes the local swap
    /// selector (`lp_swap`).
    pub fn new(kind: SchedulerKind) -> Self {
        SchedulerSpec {
            kind,
            selector: (kind == SchedulerKind::LpSwap)
                .then(|| SelectorConfig::of(SelectorKind::LocalSwap)),
            horizon_override: None,
            lp_budget: None,
        }
    }

    pub fn sorted_f(selector: SelectorConfig) -> Self {
        SchedulerSpec {
            kind: SchedulerKind::SortedF,
            selector: Some(selector),
            horizon_override: None,
            lp_budget: None,
        }
    }

    pub fn with_horizon(mut self, horizon: Option<Time>) -> Self {
        self.horizon_override = horizon;
        self
    }

    pub fn with_lp_budget(mut self, budget: Option<u128>) -> Self {
        self.lp_budget = budget;
        self
    }

    /// Short label, e.g. `sorted_f(exact_dp)`.
    pub fn label(&self) -> String {
        match (&self.selector, self.kind) {
            (Some(sel), SchedulerKind::SortedF) => {
                format!("{}({})", self.kind.name(), sel.kind.name())
            }
            _ => self.kind.name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.uses_selector(), &self.selector) {
            (true, None) => {
                return Err(Error::Config(format!(
                    "scheduler {} needs a selector",
                    self.kind.name()
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!(
                    "scheduler {} takes no selector",
                    self.kind.name()
                )))
            }
            (true, Some(sel)) => {
                sel.validate()?;
                if self.kind == SchedulerKind::LpSwap && sel.kind != SelectorKind::LocalSwap {
                    return Err(Error::Config(
                        "lp_swap refines batches with the local_swap selector only".into(),
                    ));
                }
            }
            (false, None) => {}
        }
        if !self.kind.uses_lp() && (self.horizon_override.is_some() || self.lp_budget.is_some()) {
            return Err(Error::Config(format!(
                "scheduler {} has no LP horizon or budget",
                self.kind.name()
            )));
        }
        Ok(())
    }

    fn lp_options(&self) -> LpOptions {
        LpOptions {
            budget: self.lp_budget.unwrap_or(DEFAULT_LP_BUDGET),
        }
    }
}

pub fn order_fcfs(instance: &Instance) -> Vec<RequestId> {
    instance.ids().collect()
}

/// Ascending `o`, ties by id.
pub fn order_sf(instance: &Instance) -> Vec<RequestId> {
    let mut reqs: Vec<&Request> = instance.requests().iter().collect();
    reqs.sort_by_key(|r| (r.o, r.id));
    reqs.into_iter().map(|r| r.id).collect()
}

/// Ascending `s + o`, ties by `o` then id.
pub fn order_sf_total(instance: &Instance) -> Vec<RequestId> {
    let mut reqs: Vec<&Request> = instance.requests().iter().collect();
    reqs.sort_by_key(|r| (r.peak_memory(), r.o, r.id));
    reqs.into_iter().map(|r| r.id).collect()
}

/// Makespan of the shortest-first schedule; a feasible horizon for the LP.
pub fn shortest_first_makespan(instance: &Instance) -> Result<Time> {
    let (schedule, _) = execute_ordered(instance, &order_sf(instance), ExecutionPolicy::default())?;
    Ok(compute_metrics(instance, &schedule)?.makespan)
}

/// Drops the longest members of an over-full batch until `Σ (s + o) ≤ M`.
fn repair(batch: &mut Vec<Request>, memory_limit: u64) {
    batch.sort_by_key(|r| (r.o, r.peak_memory(), r.id));
    let mut mem: u128 = batch.iter().map(|r| r.peak_memory() as u128).sum();
    while mem > memory_limit as u128 && batch.len() > 1 {
        let r = batch.pop().expect("nonempty");
        mem -= r.peak_memory() as u128;
    }
}

/// Repeatedly takes the selector's batch from the remaining pool (kept in id
/// order) until every request is placed.
pub fn plan_sorted_f(instance: &Instance, selector: &SelectorConfig) -> Result<BatchPlan> {
    selector.validate()?;
    let limit = instance.memory_limit();
    let mut pool: Vec<Request> = instance.requests().to_vec();
    pool.sort_by_key(|r| r.id);
    let mut batches = Vec::new();
    let mut round = 0u64;
    while !pool.is_empty() {
        let ids = select(&pool, limit, selector, round)?;
        if ids.is_empty() {
            return Err(Error::EmptySelection(pool.len()));
        }
        let mut batch: Vec<Request> = pool.iter().filter(|r| ids.contains(&r.id)).copied().collect();
        repair(&mut batch, limit);
        pool.retain(|r| !batch.iter().any(|b| b.id == r.id));
        batches.push(batch.into_iter().map(|r| r.id).collect());
        round += 1;
    }
    BatchPlan::new(instance, batches)
}

pub fn solve_instance_lp(instance: &Instance, spec: &SchedulerSpec) -> Result<LpSolution> {
    let model = build_model(instance, spec.horizon_override)?;
    solve_lp_with(&model, &spec.lp_options())
}

/// Requests by ascending expected start `y`, ties by `o` then id. `y` is
/// compared at a resolution of `1e-6` so solver noise does not split ties.
fn y_order(instance: &Instance, solution: &LpSolution) -> Vec<Request> {
    let y = solution.expected_start_vec();
    let mut keyed: Vec<(i64, Request)> = instance
        .requests()
        .iter()
        .zip(&y)
        .map(|(r, &v)| ((v * 1e6).round() as i64, *r))
        .collect();
    keyed.sort_by_key(|(q, r)| (*q, r.o, r.id));
    keyed.into_iter().map(|(_, r)| r).collect()
}

pub fn plan_sorted_lp_from(instance: &Instance, solution: &LpSolution) -> Vec<RequestId> {
    y_order(instance, solution).into_iter().map(|r| r.id).collect()
}

/// Orders requests by the LP's expected start times.
pub fn plan_sorted_lp(instance: &Instance, spec: &SchedulerSpec) -> Result<Vec<RequestId>> {
    Ok(plan_sorted_lp_from(instance, &solve_instance_lp(instance, spec)?))
}

/// Seeds each batch greedily in `y` order and refines it by local swaps;
/// `y` comes from a single LP solve.
pub fn plan_lp_swap_from(instance: &Instance, solution: &LpSolution) -> Result<BatchPlan> {
    let limit = instance.memory_limit();
    let mut pool = y_order(instance, solution);
    let mut batches = Vec::new();
    while !pool.is_empty() {
        let order: Vec<usize> = (0..pool.len()).collect();
        let seed: Vec<RequestId> = greedy_fill(&pool, &order, limit)
            .into_iter()
            .map(|i| pool[i].id)
            .collect();
        let batch = local_swap_from(&pool, &seed, limit)?;
        if batch.is_empty() {
            return Err(Error::EmptySelection(pool.len()));
        }
        pool.retain(|r| !batch.contains(&r.id));
        batches.push(batch);
    }
    BatchPlan::new(instance, batches)
}

pub fn plan_lp_swap(instance: &Instance, spec: &SchedulerSpec) -> Result<BatchPlan> {
    plan_lp_swap_from(instance, &solve_instance_lp(instance, spec)?)
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub order: Vec<RequestId>,
    pub plan: Option<BatchPlan>,
    pub schedule: StartSchedule,
    pub trace: SimTrace,
    pub metrics: Metrics,
}

/// Executes an order and collects its metrics.
pub fn execute(
    instance: &Instance,
    order: Vec<RequestId>,
    plan: Option<BatchPlan>,
    policy: ExecutionPolicy,
) -> Result<Outcome> {
    let (schedule, trace) = execute_ordered(instance, &order, policy)?;
    let metrics = compute_metrics(instance, &schedule)?;
    Ok(Outcome {
        order,
        plan,
        schedule,
        trace,
        metrics,
    })
}

pub fn run_scheduler(
    instance: &Instance,
    spec: &SchedulerSpec,
    policy: ExecutionPolicy,
) -> Result<Outcome> {
    spec.validate()?;
    let (order, plan) = match spec.kind {
        SchedulerKind::Fcfs => (order_fcfs(instance), None),
        SchedulerKind::McSf => (order_sf(instance), None),
        SchedulerKind::McSfTotal => (order_sf_total(instance), None),
        SchedulerKind::SortedF => {
            let selector = spec.selector.as_ref().expect("validated");
            let plan = plan_sorted_f(instance, selector)?;
            (plan.flatten(), Some(plan))
        }
        SchedulerKind::SortedLp => (plan_sorted_lp(instance, spec)?, None),
        SchedulerKind::LpSwap => {
            let plan = plan_lp_swap(instance, spec)?;
            (plan.flatten(), Some(plan))
        }
    };
    execute(instance, order, plan, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_ip_exact, IpObjective};
    use crate::model::StartSchedule;
    use crate::model::batch_feasible_conservative;
    use crate::workloads::{gen_adversarial_sf, gen_adversarial_sf2, second_class_first_order};

    fn example_one() -> Instance {
        let mut pairs = vec![(63, 1)];
        pairs.extend(std::iter::repeat_n((1, 2), 21));
        Instance::from_pairs(64, &pairs).unwrap()
    }

    fn tel(inst: &Instance, order: &[RequestId]) -> u128 {
        let (s, _) = execute_ordered(inst, order, ExecutionPolicy::default()).unwrap();
        compute_metrics(inst, &s).unwrap().tel
    }

    #[test]
    fn simple_orders() {
        let inst = example_one();
        assert_eq!(order_fcfs(&inst), inst.ids().collect::<Vec<_>>());
        assert_eq!(tel(&inst, &order_fcfs(&inst)), 64);
        let sf = order_sf(&inst);
        assert_eq!(sf[0], RequestId(0));
        assert_eq!(tel(&inst, &sf), 64);

        let shuffled = Instance::from_pairs(10, &[(1, 3), (2, 1), (1, 1)]).unwrap();
        let shuffled = shuffled
            .with_requests(vec![
                Request::new(2, 1, 1),
                Request::new(0, 1, 3),
                Request::new(1, 2, 1),
            ])
            .unwrap();
        assert_eq!(
            order_fcfs(&shuffled),
            vec![RequestId(2), RequestId(0), RequestId(1)]
        );
        assert_eq!(
            order_sf(&shuffled),
            vec![RequestId(1), RequestId(2), RequestId(0)]
        );
        assert_eq!(
            order_sf_total(&shuffled),
            vec![RequestId(2), RequestId(1), RequestId(0)]
        );
    }

    #[test]
    fn uniform_prompt_orders_agree() {
        let inst = Instance::from_pairs(50, &[(3, 5), (3, 1), (3, 4), (3, 1), (3, 9)]).unwrap();
        assert_eq!(order_sf(&inst), order_sf_total(&inst));
    }

    #[test]
    fn scaling_outputs_keeps_orders() {
        let pairs = [(3, 5), (1, 2), (4, 1), (2, 3), (5, 2)];
        let inst = Instance::from_pairs(100, &pairs).unwrap();
        let scaled: Vec<(u64, u64)> = pairs.iter().map(|&(s, o)| (s, 3 * o)).collect();
        let big = Instance::from_pairs(100, &scaled).unwrap();
        assert_eq!(order_sf(&inst), order_sf(&big));
    }

    #[test]
    fn adversarial_shortest_first() {
        let inst = gen_adversarial_sf(100).unwrap();
        let sf = order_sf(&inst);
        assert!(sf[..100].iter().all(|id| id.0 < 100));
        let ratio = tel(&inst, &sf) as f64 / tel(&inst, &second_class_first_order(&inst)) as f64;
        assert!(ratio > 1.0, "ratio {ratio}");

        let inst = gen_adversarial_sf2(100).unwrap();
        let total = order_sf_total(&inst);
        assert!(total[..100].iter().all(|id| id.0 < 100));
    }

    #[test]
    fn sorted_f_example_one() {
        let inst = example_one();
        for kind in [SelectorKind::BruteForce, SelectorKind::ExactDp, SelectorKind::ScaledDp] {
            let plan = plan_sorted_f(&inst, &SelectorConfig::of(kind)).unwrap();
            assert_eq!(plan.len(), 2);
            assert_eq!(plan.batches()[0].len(), 21);
            assert_eq!(plan.batches()[1], vec![RequestId(0)]);
            assert_eq!(tel(&inst, &plan.flatten()), 45);
        }
    }

    #[test]
    fn sorted_f_single_request() {
        let inst = Instance::from_pairs(10, &[(2, 2)]).unwrap();
        let plan = plan_sorted_f(&inst, &SelectorConfig::default()).unwrap();
        assert_eq!(plan.batches(), &[vec![RequestId(0)]]);
    }

    #[test]
    fn sorted_f_batches_are_feasible() {
        let inst = Instance::from_pairs(
            20,
            &[(3, 5), (1, 2), (4, 1), (2, 3), (5, 2), (7, 7), (1, 1), (2, 9)],
        )
        .unwrap();
        for kind in SelectorKind::ALL {
            let plan = plan_sorted_f(&inst, &SelectorConfig::of(kind)).unwrap();
            assert!(plan.covers(&inst));
            for batch in plan.batches() {
                let reqs: Vec<Request> = batch.iter().map(|id| *inst.get(*id).unwrap()).collect();
                assert!(batch_feasible_conservative(&reqs, 20));
                assert!(reqs.windows(2).all(|w| w[0].o <= w[1].o));
            }
        }
    }

    #[test]
    fn sorted_f_within_oracle_bound() {
        let inst = Instance::from_pairs(10, &[(3, 2), (2, 4), (1, 1), (4, 3), (2, 2)]).unwrap();
        let plan = plan_sorted_f(&inst, &SelectorConfig::of(SelectorKind::BruteForce)).unwrap();
        let (_, opt) = solve_ip_exact(&inst, None, IpObjective::TotalLatency).unwrap();
        let got = tel(&inst, &plan.flatten());
        assert!(got >= opt && got <= 48 * opt);
    }

    #[test]
    fn sorted_lp_example_one() {
        let inst = example_one();
        let order = plan_sorted_lp(&inst, &SchedulerSpec::new(SchedulerKind::SortedLp)).unwrap();
        assert_eq!(*order.last().unwrap(), RequestId(0));
        let lp_tel = tel(&inst, &order);
        let plan = plan_lp_swap(&inst, &SchedulerSpec::new(SchedulerKind::LpSwap)).unwrap();
        assert!(tel(&inst, &plan.flatten()) <= lp_tel);
    }

    #[test]
    fn sorted_lp_integral_solution() {
        let inst = Instance::from_pairs(4, &[(2, 2), (1, 1), (1, 2)]).unwrap();
        let model = build_model(&inst, None).unwrap();
        let sched = StartSchedule::from_aligned(&inst, &[3, 0, 1]);
        let sol = LpSolution::from_schedule(&model, &sched).unwrap();
        assert_eq!(sol.to_schedule().unwrap(), sched);
        assert_eq!(
            plan_sorted_lp_from(&inst, &sol),
            vec![RequestId(1), RequestId(2), RequestId(0)]
        );
    }

    #[test]
    fn sorted_lp_is_bounded_by_lp() {
        let inst = Instance::from_pairs(6, &[(2, 2), (1, 1), (1, 3), (3, 1)]).unwrap();
        let spec = SchedulerSpec::new(SchedulerKind::SortedLp);
        let sol = solve_instance_lp(&inst, &spec).unwrap();
        let order = plan_sorted_lp_from(&inst, &sol);
        assert!(tel(&inst, &order) as f64 >= sol.objective() - 1e-6);
    }

    #[test]
    fn lp_swap_single_batch() {
        let inst = Instance::from_pairs(100, &[(3, 4), (2, 2), (5, 1)]).unwrap();
        let spec = SchedulerSpec::new(SchedulerKind::LpSwap);
        let plan = plan_lp_swap(&inst, &spec).unwrap();
        assert_eq!(plan.len(), 1);
        let lp = execute(&inst, plan_sorted_lp(&inst, &spec).unwrap(), None, ExecutionPolicy::default()).unwrap();
        let swap = execute(&inst, plan.flatten(), None, ExecutionPolicy::default()).unwrap();
        assert_eq!(lp.schedule, swap.schedule);
    }

    #[test]
    fn spec_validation() {
        assert!(SchedulerSpec::new(SchedulerKind::Fcfs).validate().is_ok());
        let mut spec = SchedulerSpec::new(SchedulerKind::SortedF);
        assert!(spec.validate().is_err());
        spec.selector = Some(SelectorConfig::default());
        assert!(spec.validate().is_ok());
        let mut spec = SchedulerSpec::new(SchedulerKind::LpSwap);
        assert!(spec.validate().is_ok());
        spec.selector = Some(SelectorConfig::of(SelectorKind::ExactDp));
        assert!(spec.validate().is_err());
        let spec = SchedulerSpec::new(SchedulerKind::McSf).with_horizon(Some(5));
        assert!(spec.validate().is_err());
        let spec: SchedulerSpec =
            serde_json::from_str(r#"{"kind":"sorted_f","selector":{"kind":"brute_force"}}"#).unwrap();
        assert_eq!(spec.label(), "sorted_f(brute_force)");
    }

    #[test]
    fn lp_horizon_errors() {
        let inst = example_one();
        let spec = SchedulerSpec::new(SchedulerKind::SortedLp).with_horizon(Some(1));
        assert!(matches!(
            run_scheduler(&inst, &spec, ExecutionPolicy::default()),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn run_all_kinds() {
        let inst = example_one();
        for kind in SchedulerKind::ALL {
            let spec = if kind == SchedulerKind::SortedF {
                SchedulerSpec::sorted_f(SelectorConfig::default())
            } else {
                SchedulerSpec::new(kind)
            };
            let out = run_scheduler(&inst, &spec, ExecutionPolicy::default()).unwrap();
            assert!(out.trace.within_limit());
            assert!(out.metrics.tel >= 45);
        }
    }
}
