use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(fixture("golden").join(name)).unwrap()
}

fn ivtrial(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivtrial"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(args: &[&str]) -> Value {
    let out = ivtrial(args);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn estimate_of(r: &Value, name: &str) -> f64 {
    r["estimates"][name]["estimate"].as_f64().unwrap()
}

#[test]
fn tiny8_report_matches_golden() {
    let data = fixture("tiny8.csv");
    let out = ivtrial(&["estimate", "--data", path_str(&data)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), golden("tiny8_report.json"));
}

#[test]
fn tiny8_report_agrees_with_hand_computation() {
    let data = fixture("tiny8.csv");
    let r = report(&["estimate", "--data", path_str(&data)]);
    // Arm means of y are 16/4 and 8/4; treatment uptake is 3/4 and 1/4.
    assert_eq!(estimate_of(&r, "policy"), 2.0);
    assert_eq!(estimate_of(&r, "p_t_given_r1"), 0.75);
    assert_eq!(estimate_of(&r, "p_t_given_r0"), 0.25);
    assert_eq!(estimate_of(&r, "pi_c"), 0.5);
    assert_eq!(estimate_of(&r, "pi_at"), 0.25);
    assert_eq!(estimate_of(&r, "pi_nt"), 0.25);
    assert_eq!(estimate_of(&r, "iv_ratio"), 4.0);
    let asm: Vec<&str> = r["estimates"]["iv_ratio"]["assumptions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(asm, ["IV1", "IV2", "IV3", "Monotonicity"]);
    for key in ["command", "config_hash", "seed", "version"] {
        assert!(!r["provenance"][key].is_null(), "{key}");
    }
}

#[test]
fn constant_treatment_warns_and_still_reports_policy() {
    let data = fixture("tiny8_constant_t.csv");
    let out = ivtrial(&["estimate", "--data", path_str(&data)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), golden("tiny8_constant_t_report.json"));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["estimates"]["iv_ratio"]["estimate"].is_null());
    let warning = r["estimates"]["iv_ratio"]["warnings"][0].as_str().unwrap();
    assert!(warning.starts_with("WeakInstrument"), "{warning}");
    assert_eq!(estimate_of(&r, "policy"), 2.0);
}

#[test]
fn all_estimators_failing_is_a_numerical_error() {
    let data = fixture("tiny8_constant_t.csv");
    let out = ivtrial(&[
        "estimate",
        "--data",
        path_str(&data),
        "--estimators",
        "iv_ratio",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn sensitivity_grid_matches_golden_and_formula() {
    let data = fixture("tiny8.csv");
    let out = ivtrial(&[
        "sensitivity",
        "--data",
        path_str(&data),
        "--dace-range",
        "-4:4",
        "--pi-d-range",
        "0:0.2",
        "--steps",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text, golden("tiny8_sensitivity.csv"));
    // With ITT 2 and first-stage difference 0.5, pi_c = 0.5 + pi_d and
    // CACE = (2 + pi_d * DACE) / pi_c.
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (dace, pi_d): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let expected = (2.0 + pi_d * dace) / (0.5 + pi_d);
        let got: f64 = f[2].parse().unwrap();
        assert!((got - expected).abs() < 1e-12, "{line}");
        assert_eq!(f[3], "true");
    }
}

#[test]
fn check_iv_cases_match_golden() {
    for case in [
        "case1",
        "case2",
        "case3",
        "case2_direct_effect",
        "case2_confounded_instrument",
    ] {
        let dag = fixture(&format!("{case}.dag"));
        let out = ivtrial(&[
            "check-iv",
            "--dag",
            path_str(&dag),
            "--instrument",
            "R",
            "--treatment",
            "T",
            "--outcome",
            "Y",
            "--confounders",
            "U",
        ]);
        assert_eq!(out.status.code(), Some(0), "{case}");
        assert_eq!(
            stdout(&out),
            golden(&format!("{case}_check_iv.txt")),
            "{case}"
        );
    }
    assert!(golden("case2_direct_effect_check_iv.txt").contains("  open path: R -> Y\n"));
    assert!(golden("case2_confounded_instrument_check_iv.txt").contains("  open path: R <- U\n"));
}

#[test]
fn check_iv_errors_name_the_offender() {
    let dag = fixture("case2.dag");
    let out = ivtrial(&[
        "check-iv",
        "--dag",
        path_str(&dag),
        "--instrument",
        "R",
        "--treatment",
        "T",
        "--outcome",
        "Q",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--outcome") && stderr(&out).contains("`Q`"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dag");
    std::fs::write(&bad, "R -> T\nT ->\n").unwrap();
    let out = ivtrial(&[
        "check-iv",
        "--dag",
        path_str(&bad),
        "--instrument",
        "R",
        "--treatment",
        "T",
        "--outcome",
        "Y",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn data_errors_exit_three_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "r,t,y\n1,1,2\n0,x,1\n").unwrap();
    let out = ivtrial(&["estimate", "--data", path_str(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    let msg = stderr(&out);
    assert!(msg.contains("row") && msg.contains('t'), "{msg}");

    let data = fixture("tiny8.csv");
    let out = ivtrial(&["estimate", "--data", path_str(&data), "--y-col", "outcome"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("outcome"), "{}", stderr(&out));

    let out = ivtrial(&[
        "estimate",
        "--data",
        path_str(&dir.path().join("absent.csv")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("--data"));
}

#[test]
fn usage_errors_exit_two() {
    let data = fixture("tiny8.csv");
    let d = path_str(&data);
    for args in [
        vec!["estimate", "--data", d, "--estimators", "nonsense"],
        vec!["estimate", "--data", d, "--estimators", "extended_tsls"],
        vec!["estimate", "--data", d, "--bootstrap", "10"],
        vec!["estimate", "--data", d, "--link", "probit"],
        vec![
            "sensitivity",
            "--data",
            d,
            "--dace-range",
            "3:1",
            "--pi-d-range",
            "0:0.1",
        ],
        vec!["simulate", "--model", "Z", "--out", "/dev/null"],
        vec![
            "simulate",
            "--model",
            "A",
            "--set",
            "bogus=1",
            "--out",
            "/dev/null",
        ],
        vec!["replicate", "--study", "nope", "--out", "/dev/null"],
    ] {
        let out = ivtrial(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(stderr(&out).contains("--"), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn column_role_flags_remap_headers() {
    let dir = tempfile::tempdir().unwrap();
    let renamed = dir.path().join("renamed.csv");
    let text = std::fs::read_to_string(fixture("tiny8.csv")).unwrap();
    std::fs::write(&renamed, text.replacen("r,t,y,s", "arm,took,score,s", 1)).unwrap();
    let r = report(&[
        "estimate",
        "--data",
        path_str(&renamed),
        "--r-col",
        "arm",
        "--t-col",
        "took",
        "--y-col",
        "score",
    ]);
    assert_eq!(estimate_of(&r, "iv_ratio"), 4.0);
}

#[test]
fn simulate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = ivtrial(&[
            "simulate",
            "--model",
            "A",
            "--n",
            "1000",
            "--seed",
            "1",
            "--out",
            path_str(p),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert!(String::from_utf8_lossy(&bytes).starts_with("r,t,y,s\n"));

    let r = report(&[
        "estimate",
        "--data",
        path_str(&a),
        "--estimators",
        "policy,iv_ratio,tsls,extended_tsls",
        "--interaction-covariate",
        "s",
    ]);
    for (name, entry) in r["estimates"].as_object().unwrap() {
        assert!(entry["warnings"].as_array().unwrap().is_empty(), "{name}");
        assert!(entry["estimate"].is_number(), "{name}");
    }
    assert!((estimate_of(&r, "psi_c") - estimate_of(&r, "iv_ratio")).abs() < 1e-6);
}

#[test]
fn emit_latent_adds_u_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    let out = ivtrial(&[
        "simulate",
        "--model",
        "C",
        "--n",
        "20",
        "--emit-latent",
        "--out",
        path_str(&p),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&p).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.ends_with(",u"), "{header}");
}

#[test]
fn adherence_proportions_at_large_n() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.csv");
    let out = ivtrial(&[
        "simulate",
        "--model",
        "C",
        "--n",
        "200000",
        "--seed",
        "7",
        "--out",
        path_str(&p),
    ]);
    assert!(out.status.success());
    let r = report(&[
        "estimate",
        "--data",
        path_str(&p),
        "--estimators",
        "",
        "--spec",
        "compliance exposure=a instrument=t",
    ]);
    assert!((estimate_of(&r, "p_t_given_r1") - 0.70).abs() < 0.01);
    assert!((estimate_of(&r, "p_t_given_r0") - 0.58).abs() < 0.01);
}

#[test]
fn bootstrap_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.csv");
    assert!(ivtrial(&[
        "simulate",
        "--model",
        "A",
        "--n",
        "300",
        "--out",
        path_str(&p)
    ])
    .status
    .success());
    let args = [
        "estimate",
        "--data",
        path_str(&p),
        "--bootstrap",
        "100",
        "--seed",
        "9",
    ];
    let first = ivtrial(&args);
    let second = ivtrial(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let r: Value = serde_json::from_slice(&first.stdout).unwrap();
    assert!(r["estimates"]["iv_ratio"]["se"].as_f64().unwrap() > 0.0);
}

#[test]
fn replicate_smoke_marks_insufficient_reps() {
    let dir = tempfile::tempdir().unwrap();
    let out = ivtrial(&[
        "replicate",
        "--study",
        "section_5_4",
        "--reps",
        "10",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let cmp = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(cmp.contains("insufficient reps"));
    for f in [
        "section_5_4_replications.csv",
        "section_5_4_summary.json",
        "section_5_4_1_summary.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("section_5_4_replications.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn campaign_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(
        &cfg,
        "model = pain_a\nn = 200\nreplications = 5\nmaster_seed = 3\nestimator.itt = policy\nestimator.iv = iv_ratio\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = ivtrial(&[
        "campaign",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("campaign_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["summary"]["iv"]["n_ok"], 5);
}

#[test]
fn shipped_configs_are_accepted() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let out_path = dir.path().join(&name);
        let out = if name.starts_with("campaign") {
            ivtrial(&[
                "campaign",
                "--config",
                path_str(&path),
                "--reps",
                "3",
                "--bootstrap",
                "0",
                "--out",
                path_str(&out_path),
            ])
        } else {
            ivtrial(&[
                "simulate",
                "--config",
                path_str(&path),
                "--n",
                "30",
                "--out",
                path_str(&out_path),
            ])
        };
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        seen += 1;
    }
    assert!(seen >= 3);
}
