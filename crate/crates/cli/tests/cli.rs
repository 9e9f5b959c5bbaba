use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fastfix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fastfix"))
        .args(args)
        .output()
        .unwrap()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> (PathBuf, Output) {
    let out = path(dir, name);
    let mut args = vec!["simulate", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = fastfix(&args);
    (out, o)
}

#[test]
fn simulate_is_deterministic_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--user-lla", "30,110,0", "--seed", "42"];
    let (a, oa) = simulate(dir.path(), "a.jsonl", &args);
    let (b, ob) = simulate(dir.path(), "b.jsonl", &args);
    assert!(oa.status.success() && ob.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (c, _) = simulate(
        dir.path(),
        "c.jsonl",
        &["--user-lla", "30,110,0", "--seed", "43"],
    );
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn noiseless_solve_reproduces_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (meas, o) = simulate(
        dir.path(),
        "m.jsonl",
        &[
            "--user-lla",
            "25,100,500",
            "--noise-sigma",
            "0",
            "--clock-bias",
            "0",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = path(dir.path(), "r.json");
    let o = fastfix(&["solve", "--meas", s(&meas), "--out", s(&res)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let truth = json(&path(dir.path(), "m.jsonl.truth.json"));
    let r = json(&res);
    assert_eq!(r["status"], "Converged");
    for k in 0..3 {
        let (got, want) = (
            r["position_ecef_m"][k].as_f64().unwrap(),
            truth["position_ecef_m"][k].as_f64().unwrap(),
        );
        assert!((got - want).abs() < 1e-6, "{k}: {got} vs {want}");
    }
    assert!(r["clock_bias_m"].as_f64().unwrap().abs() < 1e-6);
    assert!((r["position_lla"]["alt_m"].as_f64().unwrap() - 500.0).abs() < 1e-6);
}

#[test]
fn fixed_ambiguities_match_the_truth_file() {
    let dir = tempfile::tempdir().unwrap();
    let (meas, o) = simulate(
        dir.path(),
        "m.jsonl",
        &[
            "--user-lla",
            "35,120,0",
            "--seed",
            "5",
            "--frac-modulus",
            "20ms",
        ],
    );
    assert!(o.status.success());
    let res = path(dir.path(), "r.json");
    assert!(fastfix(&["solve", "--meas", s(&meas), "--out", s(&res)])
        .status
        .success());
    let truth = json(&path(dir.path(), "m.jsonl.truth.json"));
    let r = json(&res);
    assert!(!truth["ambiguities"].as_array().unwrap().is_empty());
    assert_eq!(r["ambiguities"], truth["ambiguities"]);
    let bias = r["clock_bias_s"].as_f64().unwrap();
    assert!((bias - 5.0).abs() < 1e-6);
}

#[test]
fn conventional_mode_takes_full_rows_only() {
    let dir = tempfile::tempdir().unwrap();
    let meas = path(dir.path(), "full.jsonl");
    let lines = [
        r#"{"epoch":"2015-05-19T04:00:00Z","sat":"G1","kind":"full","value_m":37000000.0}"#,
        r#"{"epoch":"2015-05-19T04:00:00Z","sat":"I1","kind":"fractional","modulus_ms":1,"value_m":1000.0}"#,
    ];
    std::fs::write(&meas, lines.join("\n")).unwrap();
    let res = path(dir.path(), "r.json");
    let o = fastfix(&[
        "solve",
        "--mode",
        "conventional",
        "--meas",
        s(&meas),
        "--out",
        s(&res),
    ]);
    assert_eq!(o.status.code(), Some(13));

    let (sim, _) = simulate(dir.path(), "m.jsonl", &["--user-lla", "30,110,0"]);
    // Rewrite fractional rows as full rows from the truth file's ambiguities.
    let truth = json(&path(dir.path(), "m.jsonl.truth.json"));
    let ambiguities = truth["ambiguities"].as_array().unwrap();
    let full: Vec<String> = std::fs::read_to_string(&sim)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            if v["kind"] == "fractional" {
                let n = ambiguities.iter().find(|a| a["sat"] == v["sat"]).unwrap()["N"]
                    .as_f64()
                    .unwrap();
                let ct = v["modulus_ms"].as_f64().unwrap() * 1e-3 * 299_792_458.0;
                v["value_m"] = (v["value_m"].as_f64().unwrap() + n * ct).into();
                v["kind"] = "full".into();
                v.as_object_mut().unwrap().remove("modulus_ms");
            }
            v.to_string()
        })
        .collect();
    std::fs::write(&meas, full.join("\n")).unwrap();
    let conv = path(dir.path(), "conv.json");
    let fast = path(dir.path(), "fast.json");
    assert!(fastfix(&[
        "solve",
        "--mode",
        "conventional",
        "--meas",
        s(&meas),
        "--out",
        s(&conv)
    ])
    .status
    .success());
    assert!(fastfix(&["solve", "--meas", s(&sim), "--out", s(&fast)])
        .status
        .success());
    let (c, f) = (json(&conv), json(&fast));
    for k in 0..3 {
        let d =
            c["position_ecef_m"][k].as_f64().unwrap() - f["position_ecef_m"][k].as_f64().unwrap();
        assert!(d.abs() < 1e-6);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let res = path(dir.path(), "r.json");

    let (weak, _) = simulate(dir.path(), "weak.jsonl", &["--user-lla", "-70,85,0"]);
    let o = fastfix(&[
        "solve",
        "--threshold",
        "100",
        "--meas",
        s(&weak),
        "--out",
        s(&res),
    ]);
    assert_eq!(o.status.code(), Some(10));
    assert_eq!(json(&res)["status"], "GdopGateFailed");
    assert!(json(&res).get("position_ecef_m").is_none());

    let (few, o) = simulate(dir.path(), "few.jsonl", &["--user-lla", "0,40,0"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let o = fastfix(&["solve", "--meas", s(&few), "--out", s(&res)]);
    assert_eq!(o.status.code(), Some(11));

    let missing = path(dir.path(), "absent.jsonl");
    assert_eq!(
        fastfix(&["solve", "--meas", s(&missing), "--out", s(&res)])
            .status
            .code(),
        Some(20)
    );

    let bad = path(dir.path(), "bad.jsonl");
    std::fs::write(&bad, "{\"epoch\":\"2015-05-19T04:00:00Z\",\"sat\":\"G1\"\n").unwrap();
    let o = fastfix(&["solve", "--meas", s(&bad), "--out", s(&res)]);
    assert_eq!(o.status.code(), Some(21));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    assert_eq!(
        fastfix(&["solve", "--mode", "sideways"]).status.code(),
        Some(2)
    );
}

#[test]
fn single_epoch_coverage_and_permissive_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "cov.csv");
    let o = fastfix(&[
        "coverage",
        "--duration",
        "0",
        "--grid",
        "10",
        "--threshold",
        "1e12",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = json(&path(dir.path(), "cov.csv.summary.json"));
    assert_eq!(summary["epochs"], 1);
    for alt in summary["per_altitude"].as_array().unwrap() {
        assert_eq!(alt["min"], 1.0);
        assert_eq!(alt["max"], 1.0);
        assert_eq!(alt["overall"], 1.0);
    }
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "epoch_utc",
            "lat_deg",
            "lon_deg",
            "alt_m",
            "n_geo",
            "gdop_geo",
            "gate_pass"
        ]
    );
    let rows = rdr.records().count();
    assert_eq!(rows, 2 * (2 + 17 * 36));
}

#[test]
fn coverage_footprint_in_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "cov.csv");
    assert!(fastfix(&["coverage", "--grid", "2", "--out", s(&out)])
        .status
        .success());
    let summary = json(&path(dir.path(), "cov.csv.summary.json"));
    let surface = &summary["per_altitude"][0]["footprint_at_start"];
    let west = surface["lon_west"].as_f64().unwrap();
    let east = surface["lon_east"].as_f64().unwrap();
    assert!((west - 59.0).abs() <= 3.0 && (east - 161.0).abs() <= 3.0);
}

#[test]
fn noiseless_compare_has_zero_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "cmp.csv");
    let o = fastfix(&[
        "compare",
        "--grid",
        "20",
        "--trials",
        "3",
        "--noise-sigma",
        "0",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "lat",
            "lon",
            "alt",
            "rmse_fast_m",
            "rmse_conv_m",
            "ambiguity_success_rate"
        ]
    );
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let f = |i: usize| rec[i].parse::<f64>().unwrap();
        assert!(f(3) < 1e-6 && f(4) < 1e-6);
        assert_eq!(f(5), 1.0);
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn compare_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = path(dir.path(), name);
        let o = fastfix(&[
            "compare",
            "--user-lla",
            "30,110,0",
            "--trials",
            "20",
            "--seed",
            "9",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}
