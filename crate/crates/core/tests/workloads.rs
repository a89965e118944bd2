use kvsched::model::Instance;
use kvsched::workloads::{
    gen_synthetic, load_instance, load_trace, save_instance, DistributionKind, DistributionSpec,
};

#[test]
fn instances_round_trip_through_json() {
    let dir = tempfile::tempdir().unwrap();
    for kind in DistributionKind::ALL {
        let spec = DistributionSpec::standard(kind, 11);
        let inst = gen_synthetic(&spec, 60, 100).unwrap();
        let path = dir.path().join(format!("{}.json", kind.name()));
        save_instance(&inst, &path).unwrap();
        let back = load_instance(&path).unwrap();
        assert_eq!(back.requests(), inst.requests());
        assert_eq!(back.memory_limit(), inst.memory_limit());
    }
}

#[test]
fn instance_file_format() {
    let inst = Instance::from_pairs(10, &[(3, 2), (1, 4)]).unwrap();
    let json: serde_json::Value = serde_json::to_value(&inst).unwrap();
    assert_eq!(
        json,
        serde_json::json!({
            "memory_limit": 10,
            "requests": [{"id": 0, "s": 3, "o": 2}, {"id": 1, "s": 1, "o": 4}]
        })
    );
}

#[test]
fn csv_traces_load_with_a_memory_limit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    std::fs::write(&path, "s,o\n3,2\n\n1,4\n").unwrap();
    let inst = load_trace(&path, Some(10)).unwrap();
    assert_eq!(inst.len(), 2);
    assert_eq!((inst.requests()[1].s, inst.requests()[1].o), (1, 4));
    assert!(load_trace(&path, None).is_err());
    assert!(load_trace(&path, Some(4)).is_err());

    std::fs::write(&path, "s,o\n3,x\n").unwrap();
    let err = load_trace(&path, Some(10)).unwrap_err().to_string();
    assert!(err.contains(":2:"), "{err}");
}

#[test]
fn generation_is_deterministic_per_seed() {
    for kind in DistributionKind::ALL {
        let a = gen_synthetic(&DistributionSpec::standard(kind, 5), 40, 100).unwrap();
        let b = gen_synthetic(&DistributionSpec::standard(kind, 5), 40, 100).unwrap();
        let c = gen_synthetic(&DistributionSpec::standard(kind, 6), 40, 100).unwrap();
        assert_eq!(a.requests(), b.requests());
        assert_ne!(a.requests(), c.requests());
        assert!(a.requests().iter().all(|r| (1..=50).contains(&r.s) && (1..=50).contains(&r.o)));
    }
}
