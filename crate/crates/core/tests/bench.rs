use std::fs;
use std::path::Path;

use ndarray::array;
use sigbound::harness::{read_records_jsonl, run_benchmark, write_csv, write_records_jsonl, ExperimentSpec};
use sigbound::model::{ActivationKind, AffineLayer, Network};

/// Two inputs, two sigmoid units, two outputs. Output 0 wins clearly for positive inputs.
fn toy_net() -> Network {
    Network::new(vec![
        AffineLayer::new(
            array![[2.0, 0.0], [0.0, 2.0]],
            array![0.0, 0.0],
            ActivationKind::Sigmoid,
        )
        .unwrap(),
        AffineLayer::new(
            array![[3.0, 3.0], [-3.0, -3.0]],
            array![0.0, 0.0],
            ActivationKind::Identity,
        )
        .unwrap(),
    ])
    .unwrap()
}

fn write_experiment(dir: &Path, instances: &str, epsilons: &str) -> ExperimentSpec {
    fs::write(dir.join("net.json"), toy_net().to_json().to_string()).unwrap();
    fs::write(dir.join("inst.json"), instances).unwrap();
    let spec = format!(
        r#"{{"networks": [{{"tag": "toy", "dataset": "synthetic", "path": "net.json", "instances": "inst.json"}}],
            "epsilons": {epsilons}, "configured": {{"n_max": 15, "n_init": 5, "seed": 3}}}}"#
    );
    fs::write(dir.join("exp.json"), &spec).unwrap();
    ExperimentSpec::load(&dir.join("exp.json")).unwrap()
}

const TWO: &str = r#"[{"x0": [0.5, 0.5], "label": 0}, {"x0": [1.0, 0.2], "label": 0}]"#;

#[test]
fn empty_instance_list() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_experiment(dir.path(), "[]", "[]");
    let report = run_benchmark(&spec, dir.path(), 1).unwrap();
    assert!(report.rows.is_empty() && report.records.is_empty());
}

#[test]
fn toy_instances_certify_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_experiment(dir.path(), TWO, "[0.05]");
    let report = run_benchmark(&spec, dir.path(), 2).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!((row.certified_baseline, row.certified_configured), (2, 2));
    assert_eq!(row.improvement_pct, None);
    assert_eq!(row.activation, "sigmoid");
}

#[test]
fn averages_are_means_of_records() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_experiment(dir.path(), TWO, "[0.05, 2.0]");
    let report = run_benchmark(&spec, dir.path(), 2).unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        let recs: Vec<_> = report.records.iter().filter(|r| r.epsilon == row.epsilon).collect();
        assert_eq!(recs.len(), row.instances);
        let mean = |f: fn(&sigbound::harness::InstanceRecord) -> f64| {
            recs.iter().map(|r| f(r)).sum::<f64>() / recs.len() as f64
        };
        assert_eq!(row.avg_g_star_baseline, mean(|r| r.baseline.as_ref().unwrap().g_star));
        assert_eq!(
            row.avg_g_star_configured,
            mean(|r| r.configured.as_ref().unwrap().g_star)
        );
    }
    // Larger radius, weaker bounds.
    assert!(report.rows[1].avg_g_star_baseline < report.rows[0].avg_g_star_baseline);
}

#[test]
fn csv_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_experiment(dir.path(), TWO, "[0.1, 1.0]");
    let render = |jobs| {
        let mut out = Vec::new();
        write_csv(&run_benchmark(&spec, dir.path(), jobs).unwrap().rows, &mut out).unwrap();
        String::from_utf8(out).unwrap()
    };
    let a = render(1);
    assert_eq!(a, render(4));
    assert!(a.starts_with("dataset,network,activation,epsilon,"));
}

#[test]
fn per_instance_epsilons_and_records_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let insts = r#"[{"x0": [0.5, 0.5], "label": 0, "epsilon": 0.1},
                    {"x0": [0.2, 0.9], "label": 1, "epsilon": 0.2},
                    {"x0": [0.2, 0.9], "label": 0, "epsilon": 0.1}]"#;
    let spec = write_experiment(dir.path(), insts, "[]");
    let report = run_benchmark(&spec, dir.path(), 1).unwrap();
    assert_eq!(
        report.rows.iter().map(|r| (r.epsilon, r.instances)).collect::<Vec<_>>(),
        vec![(0.1, 2), (0.2, 1)]
    );

    let mut buf = Vec::new();
    write_records_jsonl(&report.records, &mut buf).unwrap();
    let back = read_records_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.len(), report.records.len());
    for (a, b) in back.iter().zip(&report.records) {
        assert_eq!(
            a.baseline.as_ref().map(|o| o.g_star),
            b.baseline.as_ref().map(|o| o.g_star)
        );
    }
}

#[test]
fn bad_instances_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let insts = r#"[{"x0": [0.5, 0.5], "label": 5}, {"x0": [0.5, 0.5], "label": 0}]"#;
    let spec = write_experiment(dir.path(), insts, "[0.1]");
    let report = run_benchmark(&spec, dir.path(), 1).unwrap();
    assert!(report.records[0].error.is_some());
    assert!(report.records[1].error.is_none());
    assert_eq!(report.rows[0].instances, 1);
}

#[test]
fn missing_network_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_experiment(dir.path(), TWO, "[0.1]");
    fs::remove_file(dir.path().join("net.json")).unwrap();
    assert!(run_benchmark(&spec, dir.path(), 1).is_err());
}
