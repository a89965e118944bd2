use std::path::Path;
use std::process::{Command, Output};

use kvsched::workloads::{gen_synthetic, load_instance, DistributionKind, DistributionSpec};

fn kvsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kvsched"))
        .args(args)
        .env_remove("KVSCHED_JOBS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a results file as (scheduler, n, tel) with the other columns.
fn results(dir: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(dir.join("results.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["scheduler", "n", "tel", "mean_latency", "makespan", "utilization", "wall_ms", "error"]
    );
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_uniform_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvsched(&[
        "generate", "--workload", "uniform", "--n", "100", "--seed", "1", "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let file = dir.path().join("uniform_n100_m100_seed1.json");
    let loaded = load_instance(&file).unwrap();
    let spec = DistributionSpec::standard(DistributionKind::Uniform, 1);
    let expected = gen_synthetic(&spec, 100, 100).unwrap();
    assert_eq!(loaded.requests(), expected.requests());
    assert_eq!(loaded.memory_limit(), 100);
}

#[test]
fn generate_three_partition_prints_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvsched(&[
        "generate", "--workload", "3partition", "--xs", "7,6,7,5,7,8", "--t", "20", "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("3m(m+1)/2 = 9"), "{}", stdout(&out));
    assert!(dir.path().join("three_partition_t20.json").exists());
}

#[test]
fn generate_bad_spec_is_a_config_error() {
    let out = kvsched(&["generate", "--workload", "3partition", "--xs", "1,2", "--t", "20"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("3-partition"), "{}", stderr(&out));
    let out = kvsched(&["generate", "--workload", "zipf", "--n", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let out = kvsched(&["generate", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_example_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvsched(&[
        "run", "--workload", "example1", "--scheduler", "mc_sf", "--scheduler", "sorted_f",
        "--out", path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = results(dir.path());
    let tel: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[2].as_str())).collect();
    assert_eq!(tel, [("mc_sf", "64"), ("sorted_f(exact_dp)", "45")]);
    assert!(dir.path().join("series.csv").exists());
    assert!(dir.path().join("run.log").exists());
}

#[test]
fn run_without_schedulers_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvsched(&["run", "--workload", "example1", "--out", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no schedulers"), "{}", stderr(&out));
}

#[test]
fn run_records_failures_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvsched(&[
        "run", "--workload", "uniform", "--n", "50", "--scheduler", "sorted_lp", "--scheduler",
        "mc_sf", "--lp-budget", "10", "--out", path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = results(dir.path());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "mc_sf");
    assert!(rows[0][7].is_empty());
    assert_eq!(rows[1][0], "sorted_lp");
    assert!(rows[1][2].is_empty() && rows[1][7].contains("budget"), "{:?}", rows[1]);
}

#[test]
fn run_is_stable_across_reruns_and_job_counts() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (dir, jobs) in dirs.iter().zip(["1", "3"]) {
        let out = Command::new(env!("CARGO_BIN_EXE_kvsched"))
            .args([
                "run", "--workload", "mixed", "--n", "300", "--sizes", "100,200,300", "--seed",
                "7", "--scheduler", "fcfs", "--scheduler", "mc_sf", "--scheduler",
                "sorted_f(quantile_greedy)", "--scheduler", "sorted_f(local_swap)", "--out",
                path_str(dir.path()),
            ])
            .env("KVSCHED_JOBS", jobs)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let strip = |rows: Vec<Vec<String>>| -> Vec<Vec<String>> {
        rows.into_iter()
            .map(|mut r| {
                r.remove(6);
                r
            })
            .collect()
    };
    let a = strip(results(dirs[0].path()));
    assert_eq!(a.len(), 12);
    assert_eq!(a, strip(results(dirs[1].path())));
    let series = |d: &Path| std::fs::read(d.join("series.csv")).unwrap();
    assert_eq!(series(dirs[0].path()), series(dirs[1].path()));
    let order: Vec<(String, usize)> = a.iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect();
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(order, sorted);
}

#[test]
fn run_mixed_lp_schedulers_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvsched(&[
        "run", "--workload", "mixed", "--n", "200", "--memory-limit", "100", "--seed", "1",
        "--scheduler", "sorted_lp", "--scheduler", "sorted_f(local_swap)", "--scheduler",
        "lp_swap", "--horizon", "makespan", "--lp-budget", "100000000", "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let tels: Vec<f64> = results(dir.path())
        .iter()
        .map(|r| r[2].parse().unwrap_or_else(|_| panic!("failed row {r:?}")))
        .collect();
    assert_eq!(tels.len(), 3);
    let hi = tels.iter().copied().fold(f64::MIN, f64::max);
    let lo = tels.iter().copied().fold(f64::MAX, f64::min);
    assert!(hi <= 1.1 * lo, "{tels:?}");
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
            "source": {"kind": "example1"},
            "schedulers": ["fcfs", "sorted_f"],
            "selector": "brute_force",
            "out": "unused"
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = kvsched(&[
        "run", "--config", path_str(&cfg), "--out", path_str(&out_dir), "--selector", "exact_dp",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = results(&out_dir);
    assert_eq!(rows[1][0], "sorted_f(exact_dp)");
    assert_eq!(rows[1][2], "45");

    std::fs::write(&cfg, r#"{"schedulers": ["mc_sf"], "typo": 1}"#).unwrap();
    let out = kvsched(&["run", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

fn run_adversarial(dir: &Path, m: &str) -> std::path::PathBuf {
    let out_dir = dir.join(format!("m{m}"));
    let out = kvsched(&[
        "run", "--workload", "adversarial_sf", "--memory-limit", m, "--scheduler", "mc_sf",
        "--scheduler", "second_class_first", "--out", path_str(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    out_dir.join("results.csv")
}

#[test]
fn compare_adversarial_ratio_increases() {
    let dir = tempfile::tempdir().unwrap();
    let files = [run_adversarial(dir.path(), "100"), run_adversarial(dir.path(), "400")];
    let out_dir = dir.path().join("cmp");
    let out = kvsched(&[
        "compare", path_str(&files[0]), path_str(&files[1]), "--baseline", "second_class_first",
        "--out", path_str(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mc_sf/second_class_first"), "{text}");
    let mut reader = csv::Reader::from_path(out_dir.join("compare.csv")).unwrap();
    let ratios: Vec<f64> = reader.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(ratios.len(), 2);
    assert!(ratios[1] > ratios[0] && ratios[0] > 1.0, "{ratios:?}");

    let out = kvsched(&["compare", path_str(&files[0]), "--baseline", "fcfs"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("baseline"), "{}", stderr(&out));
}

#[test]
fn compare_two_single_row_files() {
    let dir = tempfile::tempdir().unwrap();
    let header = "scheduler,n,tel,mean_latency,makespan,utilization,wall_ms,error\n";
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, format!("{header}mc_sf,22,64,2.909091,4,0.5,0.1,\n")).unwrap();
    std::fs::write(&b, format!("{header}sorted_f(exact_dp),22,45,2.045455,3,0.5,0.1,\n")).unwrap();
    let out = kvsched(&["compare", path_str(&a), path_str(&b), "--baseline", "mc_sf"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("| 22 ")).collect();
    assert_eq!(rows, ["| 22 | 64 | 45 | 0.7031 |"]);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "scheduler,tel\nmc_sf,3\n").unwrap();
    let out = kvsched(&["compare", path_str(&bad), "--baseline", "mc_sf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema"), "{}", stderr(&out));
}

#[test]
fn verify_example1_reports_the_golden_pair() {
    let out = kvsched(&["verify", "example1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["measured"]["tel_mc_sf"], 64);
    assert_eq!(report["measured"]["tel_sorted_f"], serde_json::json!([45, 45]));
}

#[test]
fn verify_property_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvsched(&["verify", "lemma1", "--out", path_str(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(report["measured"]["pools"], 1000);
    assert_eq!(report["measured"]["violations"], 0);
    assert!(dir.path().join("verify.json").exists());

    let out = kvsched(&["verify", "cr_bound"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    let max = report["measured"]["max_ratio"].as_f64().unwrap();
    assert!((1.0..=48.0).contains(&max), "{max}");
}

#[test]
fn verify_unknown_suite_is_a_config_error() {
    let out = kvsched(&["verify", "theorem9"]);
    assert_eq!(out.status.code(), Some(1));
}
