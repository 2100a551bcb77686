use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hamt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamt"))
        .args(args)
        .env_remove("HAMT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_stdout(o: &Output) -> Value {
    assert_eq!(code(o), 0, "{}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn three_units_with_everything_null_are_kept() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "x,sigma\n1,1\n2,1\n3,2\n").unwrap();
    let out = dir.path().join("out");
    let o = hamt(&["test", p(&input), "--region", "all", "--out", p(&out)]);
    let summary = json_stdout(&o);
    assert_eq!(summary["m"], 3);
    assert_eq!(summary["rejected"], 0);
    for r in rows(&out.join("decisions.csv")) {
        assert_eq!(r[3].parse::<f64>().unwrap(), 1.0);
        assert_eq!(&r[4], "0");
    }
}

#[test]
fn bad_input_exits_two_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let r = ["--region", "le:0"];

    fs::write(&input, "x,sigma\n1,1\n2,oops\n").unwrap();
    let o = hamt(&[&["test", p(&input)], &r[..]].concat());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    fs::write(&input, "x,sigma\n1,1\n2,0\n").unwrap();
    let o = hamt(&[&["test", p(&input)], &r[..]].concat());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("positive"));

    fs::write(&input, "id,value\na,4\na,4\na,4\na,4\nb,1\nb,2\n").unwrap();
    let o = hamt(&[&["test", p(&input)], &r[..]].concat());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unit `a`") && stderr(&o).contains("σ = 0"), "{}", stderr(&o));

    fs::write(&input, "x,sigma\n1,1\n").unwrap();
    let o = hamt(&["test", p(&input)]);
    assert_eq!(code(&o), 2, "region is required");

    let o = hamt(&["test", p(&input), "--region", "le:0", "--alpha", "1.5"]);
    assert_eq!(code(&o), 2);

    let o = hamt(&["test", p(&dir.path().join("missing.csv")), "--region", "le:0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_thread_count_exits_two() {
    let o = Command::new(env!("CARGO_BIN_EXE_hamt"))
        .args(["oracle", "example-1"])
        .env("HAMT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn dependence_demo_rejects_at_large_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demo.csv");
    assert_eq!(code(&hamt(&["generate", "dependence-demo", "--seed", "1", "--out", p(&data)])), 0);
    let out = dir.path().join("out");
    let o = hamt(&["test", p(&data), "--region", "(-inf,4]", "--alpha", "0.1", "--out", p(&out)]);
    let summary = json_stdout(&o);
    let rejected: Vec<f64> = rows(&out.join("decisions.csv"))
        .iter()
        .filter(|r| &r[4] == "1")
        .map(|r| r[2].parse().unwrap())
        .collect();
    assert_eq!(summary["rejected"], rejected.len());
    assert!(!rejected.is_empty());
    let large = rejected.iter().filter(|&&s| s > 4.0 / 3.0).count() as f64 / rejected.len() as f64;
    assert!(large > 0.95, "fraction of rejections with σ > 4/3 is {large}");
}

#[test]
fn oracle_constants() {
    let v = json_stdout(&hamt(&["oracle", "example-1"]));
    let get = |k: &str| v[k].as_f64().unwrap();
    assert!((get("t_z") - 3.273).abs() < 5e-3);
    assert!((get("t_star") - 0.177).abs() < 1e-3);
    assert!((get("power_zor") - 0.0432).abs() < 5e-4);
    assert!((get("power_or") - 0.0611).abs() < 5e-4);

    let loose = json_stdout(&hamt(&["oracle", "example-1", "--alpha", "0.5"]));
    assert!(loose["t_star"].as_f64().unwrap() > get("t_star"));

    let two = json_stdout(&hamt(&["oracle", "example-2"]));
    assert_eq!(two["power_or"].as_f64().unwrap(), 1.0);
}

#[test]
fn simulate_validation_and_rows() {
    let o = hamt(&["simulate", "onesided-5", "--reps", "0"]);
    assert_eq!(code(&o), 2);
    let o = hamt(&["simulate", "nosuch"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("onesided-1"), "lists valid names: {}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let args = [
        "simulate",
        "onesided-5",
        "--u",
        "1.0",
        "--m",
        "500",
        "--reps",
        "3",
        "--procedures",
        "or,zor",
        "--out",
        p(&out),
    ];
    let o = hamt(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("or ")));
    assert!(table.lines().any(|l| l.starts_with("zor ")));
    let agg = rows(&out.join("aggregate.csv"));
    assert_eq!(agg.len(), 2);
    assert_eq!(rows(&out.join("replicates.csv")).len(), 6);

    let again = dir.path().join("sim2");
    let mut args2 = args;
    args2[11] = p(&again);
    assert_eq!(code(&hamt(&args2)), 0);
    for f in ["aggregate.csv", "replicates.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f} is reproducible");
    }
}

#[test]
fn deconv_with_one_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "x,sigma\n0.1,1\n-0.3,0.8\n0.7,1.5\n1.2,2\n").unwrap();
    let out = dir.path().join("fit");
    let o = hamt(&["deconv", p(&input), "--grid-size", "1", "--num-basis", "2", "--out", p(&out)]);
    let summary = json_stdout(&o);
    assert_eq!(summary["S"], 1);
    let prior = rows(&out.join("prior.csv"));
    assert!(!prior.is_empty());
    for r in prior {
        assert!((r[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn saved_model_reproduces_decisions_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let g = hamt(&["generate", "onesided-5", "--u", "1.5", "--m", "400", "--seed", "7", "--out", p(&data)]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let g2 = hamt(&["generate", "onesided-5", "--u", "1.5", "--m", "400", "--seed", "7"]);
    assert_eq!(fs::read(&data).unwrap(), g2.stdout, "generation is byte-stable");

    let fit = dir.path().join("fit");
    let small = ["--grid-size", "20", "--num-basis", "4"];
    let o = hamt(&[&["deconv", p(&data), "--out", p(&fit)], &small[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["model.json", "density.csv", "prior.csv"] {
        assert!(fit.join(f).exists(), "{f}");
    }

    let direct = dir.path().join("direct");
    let reused = dir.path().join("reused");
    let region = ["--region", "(-inf,4]"];
    let o = hamt(&[&["test", p(&data), "--out", p(&direct)], &small[..], &region[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = fit.join("model.json");
    let o = hamt(&[&["test", p(&data), "--model", p(&model), "--out", p(&reused)], &region[..]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(direct.join("decisions.csv")).unwrap(),
        fs::read(reused.join("decisions.csv")).unwrap()
    );
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hamt.toml");
    fs::write(&cfg, "alpha = 0.2\nregion = \"all\"\n").unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "x,sigma\n1,1\n2,1\n3,2\n").unwrap();
    let o = hamt(&["test", p(&input), "--config", p(&cfg), "--alpha", "0.05", "--out", p(&dir.path().join("o"))]);
    let s = json_stdout(&o);
    assert_eq!(s["alpha"], 0.05);
    assert_eq!(s["config"]["alpha"]["source"], "flag");
    assert_eq!(s["config"]["region"]["source"], "file");

    fs::write(&cfg, "alpah = 0.2\n").unwrap();
    assert_eq!(code(&hamt(&["test", p(&input), "--config", p(&cfg)])), 2);
}
