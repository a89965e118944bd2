use kvsched::lp::{build_model, solve_ip_exact, solve_lp, IpObjective, LpSolution};
use kvsched::model::{compute_metrics, Instance, Tokens};
use kvsched::schedulers::{
    execute, plan_lp_swap_from, plan_sorted_lp_from, run_scheduler, SchedulerKind, SchedulerSpec,
};
use kvsched::sim::ExecutionPolicy;
use proptest::prelude::*;

fn tiny_instance() -> impl Strategy<Value = Instance> {
    (3 as Tokens..=12).prop_flat_map(|m| {
        let cap = 4.min(m - 1);
        prop::collection::vec((1..=cap, 1..=cap), 1..=5).prop_map(move |pairs| {
            let pairs: Vec<(Tokens, Tokens)> = pairs
                .into_iter()
                .map(|(s, o)| if s + o > m { (m - o, o) } else { (s, o) })
                .collect();
            Instance::from_pairs(m, &pairs).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn lp_bounds_ip_bounds_schedulers(inst in tiny_instance()) {
        let model = build_model(&inst, None).unwrap();
        let lp = solve_lp(&model).unwrap();
        let (opt_schedule, opt) = solve_ip_exact(&inst, None, IpObjective::TotalLatency).unwrap();
        prop_assert_eq!(compute_metrics(&inst, &opt_schedule).unwrap().tel, opt);
        prop_assert!(lp.objective() <= opt as f64 + 1e-6);

        let integral = LpSolution::from_schedule(&model, &opt_schedule).unwrap();
        prop_assert!((integral.objective() - opt as f64).abs() < 1e-9);

        let policy = ExecutionPolicy::default();
        for kind in [SchedulerKind::Fcfs, SchedulerKind::McSf, SchedulerKind::McSfTotal] {
            let tel = run_scheduler(&inst, &SchedulerSpec::new(kind), policy).unwrap().metrics.tel;
            prop_assert!(opt <= tel);
        }
        let sorted_lp = execute(&inst, plan_sorted_lp_from(&inst, &lp), None, policy).unwrap();
        prop_assert!(opt <= sorted_lp.metrics.tel);
        let plan = plan_lp_swap_from(&inst, &lp).unwrap();
        let lp_swap = execute(&inst, plan.flatten(), Some(plan), policy).unwrap();
        prop_assert!(opt <= lp_swap.metrics.tel);
    }

    #[test]
    fn makespan_oracle_bounds_shortest_first(inst in tiny_instance()) {
        let (_, best) = solve_ip_exact(&inst, None, IpObjective::Makespan).unwrap();
        let sf = run_scheduler(&inst, &SchedulerSpec::new(SchedulerKind::McSf), ExecutionPolicy::default())
            .unwrap();
        prop_assert!(best <= sf.metrics.makespan as u128);
        let longest = inst.requests().iter().map(|r| r.o).max().unwrap() as u128;
        prop_assert!(best >= longest);
    }
}

#[test]
fn lp_file_lists_every_row() {
    let inst = Instance::from_pairs(8, &[(7, 1), (1, 2), (1, 2), (1, 2)]).unwrap();
    let model = build_model(&inst, None).unwrap();
    let text = model.to_lp_string();
    for id in 0..4 {
        assert!(text.contains(&format!("start_{id}:")), "{text}");
    }
    for t in 1..=model.horizon() {
        assert!(text.contains(&format!("mem_{t}:")), "{text}");
    }
}
