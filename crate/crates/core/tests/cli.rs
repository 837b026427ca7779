use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hopfmargin"));
    c.env_remove("HOPFMARGIN_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn repeated_runs_are_byte_identical() {
    for args in [vec!["table1"], vec!["heatmap", "--line", "dynamic"], vec!["sens", "--param", "X", "--control", "K_VC_F", "--values", "0.98,0.95"]] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut outs = Vec::new();
        for (d, threads) in [(&a, "1"), (&b, "4")] {
            let o = bin()
                .args(&args)
                .arg("--out")
                .arg(d.path())
                .env("HOPFMARGIN_THREADS", threads)
                .output()
                .unwrap();
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            outs.push(o.stdout);
        }
        assert_eq!(outs[0], outs[1]);
        let (fa, fb) = (files(a.path()), files(b.path()));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{args:?}");
    }
}

#[test]
fn table1_layout() {
    let o = run(&["table1"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["parameter", "nominal", "hopf_static", "hopf_dynamic", "margin_static", "margin_dynamic"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 19);
    let row = |name: &str| rows.iter().find(|r| &r[0] == name).unwrap().clone();
    // excluded by policy and no-bifurcation rows are encoded differently
    assert_eq!(&row("omega0")[2], "-");
    assert_eq!(&row("omega_qc")[2], "");
    let x: f64 = row("X")[2].parse().unwrap();
    assert!(x > 0.0 && x < 0.2);
    // values re-parse to the 9 significant digits they were printed with
    let printed = &row("X")[4];
    let v: f64 = printed.parse().unwrap();
    assert_eq!(format!("{v:.8e}"), printed);
}

#[test]
fn heatmap_rows_are_normalized() {
    let o = run(&["heatmap", "--line", "static"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut seen = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        let vals: Vec<f64> = r.iter().skip(1).filter_map(|s| s.parse().ok()).collect();
        if vals.is_empty() {
            continue;
        }
        let m = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((m - 1.0).abs() < 1e-8, "{}: {m}", &r[0]);
        seen += 1;
    }
    assert!(seen >= 10);
}

#[test]
fn compare_lines_from_written_reports() {
    let d = tempfile::tempdir().unwrap();
    assert!(run(&["table1", "--out", d.path().to_str().unwrap()]).status.success());
    let s = d.path().join("margins_static.json");
    let y = d.path().join("margins_dynamic.json");
    let o = run(&["compare-lines", "--static-report", s.to_str().unwrap(), "--dynamic-report", y.to_str().unwrap()]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["uniform_reduction"], serde_json::Value::Bool(true));
    // two reports for the same line are rejected
    let o = run(&["compare-lines", "--static-report", s.to_str().unwrap(), "--dynamic-report", s.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_scenarios() {
    for (file, class) in [
        ("fig4_static.cfg", "oscillating"),
        ("fig4_static_mitigated.cfg", "converged"),
        ("fig4_dynamic.cfg", "oscillating"),
        ("fig4_dynamic_mitigated.cfg", "converged"),
    ] {
        let d = tempfile::tempdir().unwrap();
        let o = run(&["simulate", "--scenario", scenario(file).to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{file}: {}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["classification"]["class"], class, "{file}");
        let traj = fs::read_to_string(d.path().join(format!("trajectory_{}.csv", v["line"].as_str().unwrap()))).unwrap();
        assert!(traj.starts_with("time,"));
        assert!(traj.lines().count() > 10_000);
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["margin", "--param", "X"]).status.code(), Some(0));
    assert_eq!(run(&["scan", "--param", "R", "--direction", "up"]).status.code(), Some(3));
    assert_eq!(run(&["scan"]).status.code(), Some(2));
    assert_eq!(run(&["scan", "--param", "R"]).status.code(), Some(2));
    assert_eq!(run(&["scan", "--param", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.cfg");
    fs::write(&cfg, "[params]\nX = 0.1\nK_XX = 2\n").unwrap();
    let o = run(&["equilibrium", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains(":3:") && err.contains("K_XX"), "{err}");

    // nominal point already past the X boundary
    fs::write(&cfg, "[params]\nX = 0.05\n").unwrap();
    let o = run(&["scan", "--param", "K_P", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let blocker = d.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = run(&["equilibrium", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));

    let o = bin().args(["equilibrium"]).env("HOPFMARGIN_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));

    // scenario written for another task
    let o = run(&["equilibrium", "--config", scenario("fig4_static.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
