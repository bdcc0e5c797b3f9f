//! End-to-end checks of the command-line surface through `run`.

use treemart_cli::run;

fn args(parts: &[&str]) -> Vec<String> {
    std::iter::once("treemart")
        .chain(parts.iter().copied())
        .map(String::from)
        .collect()
}

#[test]
fn usage_and_validation_exit_codes() {
    assert_eq!(run(args(&["exact", "--model", "nosuch", "--n", "3"])), 1);
    assert_eq!(run(args(&["frobnicate"])), 1);
    // Invalid parameter combination through the custom selector.
    assert_eq!(
        run(args(&["exact", "--model", "custom:-1,1", "--n", "3"])),
        1
    );
    // Proxy guard violation is a validation error.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(
        run(args(&[
            "clt",
            "--model",
            "rt",
            "--n",
            "200",
            "--horizon",
            "2000",
            "--replicas",
            "4",
            "--out",
            out.to_str().unwrap(),
        ])),
        1
    );
    // Help is a success.
    assert_eq!(run(args(&["--help"])), 0);
}

#[test]
fn exact_report_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exact.json");
    assert_eq!(
        run(args(&[
            "exact",
            "--model",
            "bst",
            "--n",
            "3",
            "--out",
            out.to_str().unwrap()
        ])),
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((v["path_mean"].as_f64().unwrap() - 8.0 / 3.0).abs() < 1e-10);
    assert!((v["path_var"].as_f64().unwrap() - 2.0 / 9.0).abs() < 1e-10);
    assert_eq!(v["a"].as_f64().unwrap(), 2.0);
    assert!((v["b"].as_f64().unwrap() + 2.845_568_670_196_935).abs() < 1e-9);
    assert_eq!(v["model"]["m"].as_u64().unwrap(), 2);
}

#[test]
fn grow_single_node_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        assert_eq!(
            run(args(&[
                "grow",
                "--model",
                "rt",
                "--n",
                "1",
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap()
            ])),
            0
        );
    }
    let text = std::fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,D,P,S,X"));
    assert_eq!(
        lines.next(),
        Some("1,0,0,0.0000000000000000e0,0.0000000000000000e0")
    );
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    // Different replica index, different bytes.
    let c = dir.path().join("c.csv");
    assert_eq!(
        run(args(&[
            "grow",
            "--model",
            "bst",
            "--n",
            "500",
            "--seed",
            "7",
            "--out",
            c.to_str().unwrap()
        ])),
        0
    );
    let d = dir.path().join("d.csv");
    assert_eq!(
        run(args(&[
            "grow",
            "--model",
            "bst",
            "--n",
            "500",
            "--seed",
            "7",
            "--replica",
            "1",
            "--out",
            d.to_str().unwrap()
        ])),
        0
    );
    assert_ne!(
        std::fs::read_to_string(&c).unwrap(),
        std::fs::read_to_string(&d).unwrap()
    );
}

#[test]
fn oracle_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle.json");
    assert_eq!(
        run(args(&[
            "oracle",
            "--model",
            "bst",
            "--n",
            "3",
            "--statistic",
            "path-length",
            "--out",
            out.to_str().unwrap()
        ])),
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["support"].as_array().unwrap().len(), 2);
    let probs: Vec<f64> = v["probs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let out2 = dir.path().join("profile_law.json");
    assert_eq!(
        run(args(&[
            "oracle",
            "--model",
            "rt",
            "--n",
            "4",
            "--statistic",
            "profile-vector",
            "--out",
            out2.to_str().unwrap()
        ])),
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out2).unwrap()).unwrap();
    assert!(v["support"][0].is_array());
    // Enumeration cap surfaces as a validation error.
    assert_eq!(
        run(args(&[
            "oracle",
            "--model",
            "rt",
            "--n",
            "12",
            "--statistic",
            "path-length"
        ])),
        1
    );
}

#[test]
fn ctbrw_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ct.json");
    assert_eq!(
        run(args(&[
            "ctbrw",
            "--model",
            "bst",
            "--deaths",
            "0",
            "--out",
            out.to_str().unwrap()
        ])),
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["occupancy"]["0"].as_u64().unwrap(), 2);
    assert_eq!(v["tau"].as_array().unwrap().len(), 0);
    // Non-integer beta rejected.
    assert_eq!(
        run(args(&["ctbrw", "--model", "custom:0.5,1", "--deaths", "3"])),
        1
    );
}

#[test]
fn clt_reports_reproduce_modulo_meta() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        assert_eq!(
            run(args(&[
                "clt",
                "--model",
                "bst",
                "--n",
                "300",
                "--horizon",
                "60000",
                "--replicas",
                "8",
                "--seed",
                "42",
                "--threads",
                "2",
                "--out",
                out.to_str().unwrap(),
            ])),
            0
        );
    }
    let mut va: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let mut vb: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap();
    // Timing lives in the isolated metadata block; everything else matches.
    assert!(va["meta"]["wall_time_secs"].as_f64().unwrap() >= 0.0);
    va["meta"] = serde_json::Value::Null;
    vb["meta"] = serde_json::Value::Null;
    assert_eq!(va, vb);
    assert!(va["ks_distance"].as_f64().unwrap() >= 0.0);
}

#[test]
fn moments_and_samples_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let csv = dir.path().join("z.csv");
    assert_eq!(
        run(args(&[
            "clt",
            "--model",
            "rt",
            "--n",
            "300",
            "--horizon",
            "60000",
            "--replicas",
            "6",
            "--seed",
            "1",
            "--samples-csv",
            csv.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])),
        0
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("z"));
    assert_eq!(text.lines().count(), 7);

    let outm = dir.path().join("moments.json");
    assert_eq!(
        run(args(&[
            "moments",
            "--model",
            "rt",
            "--n",
            "300",
            "--horizon",
            "60000",
            "--replicas",
            "6",
            "--seed",
            "1",
            "--orders",
            "2,4",
            "--out",
            outm.to_str().unwrap(),
        ])),
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&outm).unwrap()).unwrap();
    assert_eq!(v["kind"], "moments");
    assert!((v["moment_targets"]["4"].as_f64().unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn lil_report_window() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lil.json");
    assert_eq!(
        run(args(&[
            "lil",
            "--model",
            "rt",
            "--horizon",
            "200000",
            "--replicas",
            "4",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ])),
        0
    );
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["kind"], "lil");
    assert_eq!(v["lil"]["per_replica_max"].as_array().unwrap().len(), 4);
    assert_eq!(v["lil"]["checkpoints_from"].as_u64().unwrap(), 20);
    assert_eq!(v["lil"]["checkpoints_to"].as_u64().unwrap(), 2_000);
    // Window below e^e rejected.
    assert_eq!(
        run(args(&[
            "lil",
            "--model",
            "rt",
            "--horizon",
            "200000",
            "--replicas",
            "2",
            "--from",
            "10",
            "--to",
            "2000"
        ])),
        1
    );
}

#[test]
fn profile_csv_unit_normalization_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("profile.csv");
    assert_eq!(
        run(args(&[
            "profile",
            "--model",
            "port",
            "--n",
            "1000",
            "--seed",
            "5",
            "--z-re",
            "1.0",
            "--out",
            out.to_str().unwrap(),
        ])),
        0
    );
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,re_z,im_z,re_W,im_W,re_M,im_M"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 7);
        // M_n(1) = 1 up to the log-product rounding of the normalizer.
        let re_m: f64 = cols[5].parse().unwrap();
        assert!((re_m - 1.0).abs() < 1e-9, "{line}");
    }
}

#[test]
fn check_suite_passes() {
    assert_eq!(run(args(&["check", "--model", "rt"])), 0);
}

#[test]
fn auto_named_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(args(&[
            "exact",
            "--model",
            "mary:3",
            "--n",
            "5",
            "--out-dir",
            dir.path().to_str().unwrap()
        ])),
        0
    );
    assert!(dir.path().join("exact_mary3_n5.json").exists());
}
