//! Named verification suites with measured values and pass flags.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg32;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lp::{build_model, solve_ip_exact, solve_lp, IpObjective};
use crate::model::{
    compute_metrics, f_metric, memory_usage_at, Instance, Request, RequestId, Tokens,
};
use crate::schedulers::{
    execute, order_sf, order_sf_total, plan_lp_swap_from, plan_sorted_f, plan_sorted_lp_from,
    run_scheduler, shortest_first_makespan, solve_instance_lp, SchedulerKind, SchedulerSpec,
};
use crate::selectors::{
    select_brute_force, select_exact_dp, select_local_swap, select_quantile_greedy,
    select_scaled_dp, SelectorConfig, SelectorKind, DEFAULT_DP_BUDGET,
};
use crate::sim::{execute_ordered, execute_sequential_batches, ExecutionPolicy};
use crate::workloads::{
    gen_3partition, gen_adversarial_sf, gen_adversarial_sf2, gen_partition_makespan,
    gen_synthetic, second_class_first_order, three_partition_tel, DistributionKind,
    DistributionSpec,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Example1,
    Lemma1,
    Selectors,
    Adversarial,
    NpReduction,
    CrBound,
    LpChain,
    SeparateBound,
    Synthetic,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Example1,
        Suite::Lemma1,
        Suite::Selectors,
        Suite::Adversarial,
        Suite::NpReduction,
        Suite::CrBound,
        Suite::LpChain,
        Suite::SeparateBound,
        Suite::Synthetic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Example1 => "example1",
            Suite::Lemma1 => "lemma1",
            Suite::Selectors => "selectors",
            Suite::Adversarial => "adversarial",
            Suite::NpReduction => "np_reduction",
            Suite::CrBound => "cr_bound",
            Suite::LpChain => "lp_chain",
            Suite::SeparateBound => "separate_bound",
            Suite::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub passed: bool,
    pub measured: Value,
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random pools or instances per property suite.
    pub trials: Option<usize>,
    /// Seeds per distribution in the synthetic suite.
    pub synthetic_seeds: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            trials: None,
            synthetic_seeds: 10,
        }
    }
}

pub fn run_suite(suite: Suite, config: &VerifyConfig) -> Result<SuiteReport> {
    let trials = |default: usize| config.trials.unwrap_or(default);
    let (passed, measured) = match suite {
        Suite::Example1 => example1()?,
        Suite::Lemma1 => lemma1(config.seed, trials(1000))?,
        Suite::Selectors => selectors(config.seed, trials(500))?,
        Suite::Adversarial => adversarial()?,
        Suite::NpReduction => np_reduction()?,
        Suite::CrBound => cr_bound(config.seed, trials(200))?,
        Suite::LpChain => lp_chain(config.seed, trials(100))?,
        Suite::SeparateBound => separate_bound(config.seed, trials(1000))?,
        Suite::Synthetic => synthetic(config.synthetic_seeds)?,
    };
    Ok(SuiteReport {
        suite: suite.name(),
        passed,
        measured,
    })
}

/// One request (63, 1) followed by 21 requests (1, 2) with `M = 64`.
pub fn example_one() -> Instance {
    let mut pairs = vec![(63, 1)];
    pairs.extend(std::iter::repeat_n((1, 2), 21));
    Instance::from_pairs(64, &pairs).expect("valid instance")
}

/// Random instance with `n ∈ [1, max_n]`, `M ∈ [2, max_m]` and
/// `s, o ∈ [1, max_len]`, every request fitting on its own.
pub fn random_instance(rng: &mut Pcg32, max_n: usize, max_m: Tokens, max_len: Tokens) -> Instance {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(2..=max_m);
    let cap = max_len.min(m - 1);
    let pairs: Vec<(Tokens, Tokens)> = (0..n)
        .map(|_| loop {
            let s = rng.random_range(1..=cap);
            let o = rng.random_range(1..=cap);
            if s + o <= m {
                break (s, o);
            }
        })
        .collect();
    Instance::from_pairs(m, &pairs).expect("valid instance")
}

fn members(instance: &Instance, ids: &[RequestId]) -> Vec<Request> {
    ids.iter().map(|id| *instance.get(*id).expect("known id")).collect()
}

fn tel_of(instance: &Instance, order: &[RequestId]) -> Result<u128> {
    let (schedule, trace) = execute_ordered(instance, order, ExecutionPolicy::default())?;
    debug_assert!(trace.within_limit());
    Ok(compute_metrics(instance, &schedule)?.tel)
}

fn example1() -> Result<(bool, Value)> {
    let inst = example_one();
    let mc_sf = tel_of(&inst, &order_sf(&inst))?;
    let mut sorted_f = Vec::new();
    for kind in [SelectorKind::BruteForce, SelectorKind::ExactDp] {
        let plan = plan_sorted_f(&inst, &SelectorConfig::of(kind))?;
        sorted_f.push(tel_of(&inst, &plan.flatten())?);
    }
    let passed = mc_sf == 64 && sorted_f.iter().all(|&t| t == 45);
    Ok((passed, json!({"tel_mc_sf": mc_sf, "tel_sorted_f": sorted_f})))
}

/// `mean(o) > max(o) / 2`, i.e. `2 Σo > k · max o`.
pub fn is_balanced(batch: &[Request]) -> bool {
    let sum: u128 = batch.iter().map(|r| r.o as u128).sum();
    let max = batch.iter().map(|r| r.o).max().unwrap_or(0) as u128;
    2 * sum > batch.len() as u128 * max
}

fn lemma1(seed: u64, trials: usize) -> Result<(bool, Value)> {
    let mut rng = Pcg32::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..trials {
        let inst = random_instance(&mut rng, 12, 30, 10);
        let m = inst.memory_limit();
        for batch in [
            select_brute_force(inst.requests(), m)?,
            select_exact_dp(inst.requests(), m, DEFAULT_DP_BUDGET)?,
        ] {
            if !is_balanced(&members(&inst, &batch)) {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, json!({"pools": trials, "violations": violations})))
}

fn selectors(seed: u64, trials: usize) -> Result<(bool, Value)> {
    let mut rng = Pcg32::seed_from_u64(seed);
    let unit = SelectorConfig {
        kind: SelectorKind::ScaledDp,
        epsilon: 1e-9,
        ..SelectorConfig::default()
    };
    let quantile = SelectorConfig::of(SelectorKind::QuantileGreedy);
    let (mut dp_mismatch, mut scaled_mismatch, mut infeasible) = (0, 0, 0);
    for trial in 0..trials {
        let inst = random_instance(&mut rng, 12, 30, 10);
        let (pool, m) = (inst.requests(), inst.memory_limit());
        let bf = f_metric(&members(&inst, &select_brute_force(pool, m)?))?;
        let dp = f_metric(&members(&inst, &select_exact_dp(pool, m, DEFAULT_DP_BUDGET)?))?;
        let scaled = select_scaled_dp(pool, m, &unit)?;
        let scaled_f = f_metric(&members(&inst, &scaled.batch))?;
        dp_mismatch += usize::from(bf != dp);
        scaled_mismatch += usize::from(scaled_f != dp || scaled.lambda != 1.0);
        for batch in [
            select_local_swap(pool, m)?,
            select_quantile_greedy(pool, m, &quantile, seed.wrapping_add(trial as u64))?.batch,
        ] {
            let reqs = members(&inst, &batch);
            if reqs.is_empty() || !crate::model::batch_feasible_conservative(&reqs, m) {
                infeasible += 1;
            }
        }
    }
    Ok((
        dp_mismatch == 0 && scaled_mismatch == 0 && infeasible == 0,
        json!({
            "pools": trials,
            "exact_dp_mismatches": dp_mismatch,
            "scaled_dp_mismatches": scaled_mismatch,
            "heuristic_infeasible": infeasible,
        }),
    ))
}

/// TEL of shortest-first over TEL of the second-class-first order.
pub fn adversarial_ratio(instance: &Instance, first: &[RequestId]) -> Result<f64> {
    let bad = tel_of(instance, first)?;
    let good = tel_of(instance, &second_class_first_order(instance))?;
    Ok(bad as f64 / good as f64)
}

fn adversarial() -> Result<(bool, Value)> {
    let mut sf = Vec::new();
    for m in [100, 400, 2500] {
        let inst = gen_adversarial_sf(m)?;
        sf.push((m, adversarial_ratio(&inst, &order_sf(&inst))?));
    }
    let mut sf2 = Vec::new();
    for m in [100, 400] {
        let inst = gen_adversarial_sf2(m)?;
        sf2.push((m, adversarial_ratio(&inst, &order_sf_total(&inst))?));
    }
    let increasing = |v: &[(Tokens, f64)]| v.windows(2).all(|w| w[1].1 > w[0].1);
    let floor_ok = sf.iter().all(|&(m, r)| r >= 0.1 * (m as f64).sqrt());
    let passed = increasing(&sf) && floor_ok && increasing(&sf2);
    Ok((
        passed,
        json!({
            "mc_sf": sf.iter().map(|(m, r)| json!({"m": m, "ratio": r, "floor": 0.1 * (*m as f64).sqrt()})).collect::<Vec<_>>(),
            "mc_sf_total": sf2.iter().map(|(m, r)| json!({"m": m, "ratio": r})).collect::<Vec<_>>(),
        }),
    ))
}

fn np_reduction() -> Result<(bool, Value)> {
    let three = gen_3partition(&[7, 6, 7, 5, 7, 8], 20)?;
    let (_, tel) = solve_ip_exact(&three, None, IpObjective::TotalLatency)?;
    let expected = three_partition_tel(2);
    let yes = gen_partition_makespan(&[3, 7, 4, 6], 10)?;
    let (_, yes_makespan) = solve_ip_exact(&yes, None, IpObjective::Makespan)?;
    let no = gen_partition_makespan(&[2, 2, 2, 4], 5)?;
    let (_, no_makespan) = solve_ip_exact(&no, None, IpObjective::Makespan)?;
    let passed = tel == expected && yes_makespan == 2 && no_makespan >= 3;
    Ok((
        passed,
        json!({
            "three_partition_tel": tel,
            "three_partition_expected": expected,
            "partition_makespan": yes_makespan,
            "no_partition_makespan": no_makespan,
        }),
    ))
}

fn cr_bound(seed: u64, trials: usize) -> Result<(bool, Value)> {
    let mut rng = Pcg32::seed_from_u64(seed);
    let selector = SelectorConfig::of(SelectorKind::BruteForce);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let inst = random_instance(&mut rng, 6, 12, 4);
        let plan = plan_sorted_f(&inst, &selector)?;
        let tel = tel_of(&inst, &plan.flatten())?;
        let (_, opt) = solve_ip_exact(&inst, None, IpObjective::TotalLatency)?;
        worst = worst.max(tel as f64 / opt as f64);
    }
    Ok((worst <= 48.0, json!({"instances": trials, "max_ratio": worst})))
}

fn lp_chain(seed: u64, trials: usize) -> Result<(bool, Value)> {
    let mut rng = Pcg32::seed_from_u64(seed);
    let (mut lp_above_ip, mut ip_above_tel, mut row_mismatch) = (0, 0, 0);
    let mut max_gap: f64 = 0.0;
    for _ in 0..trials {
        let inst = random_instance(&mut rng, 5, 12, 4);
        let model = build_model(&inst, None)?;
        let lp = solve_lp(&model)?;
        let (opt_schedule, opt) = solve_ip_exact(&inst, None, IpObjective::TotalLatency)?;
        if lp.objective() > opt as f64 + 1e-6 {
            lp_above_ip += 1;
        }
        max_gap = max_gap.max(opt as f64 - lp.objective());
        let starts = opt_schedule.aligned(&inst)?;
        for t in 1..=model.horizon() {
            if model.memory_row_value(t, &starts) != memory_usage_at(&inst, &opt_schedule, t)? as u128 {
                row_mismatch += 1;
            }
        }
        for kind in [
            SchedulerKind::Fcfs,
            SchedulerKind::McSf,
            SchedulerKind::SortedF,
            SchedulerKind::SortedLp,
            SchedulerKind::LpSwap,
        ] {
            let tel = match kind {
                SchedulerKind::SortedF => run_scheduler(
                    &inst,
                    &SchedulerSpec::sorted_f(SelectorConfig::default()),
                    ExecutionPolicy::default(),
                )?,
                SchedulerKind::SortedLp => {
                    execute(&inst, plan_sorted_lp_from(&inst, &lp), None, ExecutionPolicy::default())?
                }
                SchedulerKind::LpSwap => {
                    let plan = plan_lp_swap_from(&inst, &lp)?;
                    execute(&inst, plan.flatten(), Some(plan), ExecutionPolicy::default())?
                }
                _ => run_scheduler(&inst, &SchedulerSpec::new(kind), ExecutionPolicy::default())?,
            }
            .metrics
            .tel;
            if opt > tel {
                ip_above_tel += 1;
            }
        }
    }
    Ok((
        lp_above_ip == 0 && ip_above_tel == 0 && row_mismatch == 0,
        json!({
            "instances": trials,
            "lp_above_ip": lp_above_ip,
            "ip_above_scheduler": ip_above_tel,
            "row_mismatches": row_mismatch,
            "max_ip_lp_gap": max_gap,
        }),
    ))
}

fn separate_bound(seed: u64, trials: usize) -> Result<(bool, Value)> {
    let mut rng = Pcg32::seed_from_u64(seed);
    let selector = SelectorConfig::of(SelectorKind::ExactDp);
    let mut violations = 0;
    for _ in 0..trials {
        let inst = random_instance(&mut rng, 12, 30, 10);
        let plan = plan_sorted_f(&inst, &selector)?;
        let phase2 = tel_of(&inst, &plan.flatten())?;
        let (seq, _) = execute_sequential_batches(&inst, &plan)?;
        let separate = compute_metrics(&inst, &seq)?.tel;
        if phase2 > separate {
            violations += 1;
        }
    }
    Ok((violations == 0, json!({"instances": trials, "violations": violations})))
}

/// Mean TEL of Sorted-LP, Sorted-F (local swap) and LP-Swap per
/// distribution. The LP horizon is the shortest-first makespan.
pub fn synthetic_means(kind: DistributionKind, seeds: u64) -> Result<[f64; 3]> {
    let mut sums = [0.0; 3];
    let sorted_f = SchedulerSpec::sorted_f(SelectorConfig::of(SelectorKind::LocalSwap));
    for seed in 0..seeds {
        let spec = DistributionSpec::standard(kind, seed);
        let inst = gen_synthetic(&spec, DistributionSpec::standard_size(kind), 100)?;
        let lp_spec = SchedulerSpec::new(SchedulerKind::SortedLp)
            .with_horizon(Some(shortest_first_makespan(&inst)?))
            .with_lp_budget(Some(u128::MAX));
        let lp = solve_instance_lp(&inst, &lp_spec)?;
        let policy = ExecutionPolicy::default();
        let plan = plan_lp_swap_from(&inst, &lp)?;
        let tels = [
            execute(&inst, plan_sorted_lp_from(&inst, &lp), None, policy)?.metrics.tel,
            run_scheduler(&inst, &sorted_f, policy)?.metrics.tel,
            execute(&inst, plan.flatten(), Some(plan), policy)?.metrics.tel,
        ];
        for (s, t) in sums.iter_mut().zip(tels) {
            *s += t as f64;
        }
    }
    Ok(sums.map(|s| s / seeds.max(1) as f64))
}

/// Largest mean over smallest mean.
pub fn spread(means: &[f64]) -> f64 {
    let max = means.iter().copied().fold(f64::MIN, f64::max);
    let min = means.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

fn synthetic(seeds: u64) -> Result<(bool, Value)> {
    let mut passed = true;
    let mut rows = Vec::new();
    for kind in DistributionKind::ALL {
        let means = synthetic_means(kind, seeds)?;
        let sp = spread(&means);
        passed &= sp <= 1.1;
        rows.push(json!({
            "distribution": kind.name(),
            "sorted_lp": means[0],
            "sorted_f_local_swap": means[1],
            "lp_swap": means[2],
            "spread": sp,
        }));
    }
    Ok((passed, json!({"seeds": seeds, "distributions": rows})))
}
