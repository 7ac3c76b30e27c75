use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn intervol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intervol")).args(args).env_remove("INTERVOL_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(path: &Path, text: &str) -> PathBuf {
    std::fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn read_dir_sorted(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(dir) {
        let bytes = std::fs::read(&e).unwrap();
        out.push((e.strip_prefix(dir).unwrap().to_path_buf(), bytes));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            v.extend(walk(&path));
        } else {
            v.push(path);
        }
    }
    v
}

const SKELLAM_SPEC: &str = r#"{"output":"changes","model":{"kind":"skellam"},
 "params":{"kind":"skellam","names":["theta","omega","alpha","phi"],"values":[-0.3,2.0,0.05,0.95]},
 "n":1500,"days":3,"seed":7}"#;

#[test]
fn simulate_fit_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write(&d.join("spec.json"), SKELLAM_SPEC);
    let sim = d.join("sim");
    let o = intervol(&["simulate", "--spec", p(&spec), "--out", p(&sim)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sim.join("changes_2024-01-04.csv").is_file());

    let fit = d.join("fit");
    let o =
        intervol(&["fit", "--input", p(&sim), "--models", "skellam,interval_t", "--diurnal", "none", "--out", p(&fit)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(fit.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "statistic,skellam,interval_t");
    let theta: Vec<&str> = lines.iter().find(|l| l.starts_with("theta,")).unwrap().split(',').collect();
    assert!((theta[1].parse::<f64>().unwrap() + 0.3).abs() < 0.1);
    let nu = lines.iter().find(|l| l.starts_with("nu,")).unwrap();
    assert!(nu.starts_with("nu,x,"), "{nu}");
    assert!(fit.join("fits/skellam/2024-01-02.json").is_file());
    assert!(fit.join("config.json").is_file());

    let ev = d.join("eval");
    let o = intervol(&["eval", "--fit-dir", p(&fit), "--input", p(&sim), "--out", p(&ev)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(ev.join("eval.csv")).unwrap();
    assert!(text.contains("evaluated_days,2,2") || text.contains("evaluated_days,2,2\n"), "{text}");

    let rep = d.join("report");
    let o = intervol(&["report", "--results", p(&fit), "--out", p(&rep)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["fig1_histogram.csv", "fig1_density.csv", "fig2_nu_scan.csv", "fig3_differences.csv"] {
        assert!(rep.join(f).is_file(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write(&d.join("spec.json"), SKELLAM_SPEC);
    let sim = d.join("sim");
    assert_eq!(code(&intervol(&["simulate", "--spec", p(&spec), "--out", p(&sim)])), 0);
    let out = d.join("fit");
    let run = |threads: &str| {
        let o = intervol(&["--threads", threads, "fit", "--input", p(&sim), "--models", "skellam", "--out", p(&out)]);
        assert_eq!(code(&o), 0);
        let mut files = read_dir_sorted(&out);
        // the echoed configuration records the thread count itself
        files.retain(|(name, _)| name != Path::new("config.json"));
        files
    };
    let a = run("1");
    let b = run("1");
    let c = run("3");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn seeds_change_simulations_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write(&d.join("spec.json"), SKELLAM_SPEC);
    let day = |out: &str, seed: &str| {
        let o = d.join(out);
        assert_eq!(code(&intervol(&["--seed", seed, "simulate", "--spec", p(&spec), "--out", p(&o)])), 0);
        std::fs::read(o.join("changes_2024-01-02.csv")).unwrap()
    };
    assert_eq!(day("a", "5"), day("b", "5"));
    assert_ne!(day("a", "5"), day("c", "6"));
}

#[test]
fn ticks_clean_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write(
        &d.join("ticks.json"),
        r#"{"output":"ticks","days":2,"ticks_per_day":4000,"seed":3,"start_price_cents":18754,"step_sd":1.0,
            "spike_prob":0.002,"off_hours_share":0.05,"start_date":"2024-03-04","timezone":"America/New_York"}"#,
    );
    let sim = d.join("sim");
    assert_eq!(code(&intervol(&["simulate", "--spec", p(&spec), "--out", p(&sim)])), 0);
    let cleaned = d.join("clean");
    let o = intervol(&["clean", "--input", p(&sim.join("ticks.csv")), "--out", p(&cleaned)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cleaned.join("cleaning_report.json")).unwrap()).unwrap();
    assert!(report["cleaning"]["outliers"].as_u64().unwrap() > 0);
    let agg = d.join("agg");
    let o = intervol(&[
        "aggregate",
        "--input",
        p(&cleaned.join("cleaned_ticks.csv")),
        "--frequency",
        "60",
        "--out",
        p(&agg),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let day = std::fs::read_to_string(agg.join("changes_2024-03-04.csv")).unwrap();
    assert!(day.starts_with("day,time_of_day_s,change_cents"));
    assert!(day.lines().count() <= 391);

    let scan = d.join("scan");
    let o =
        intervol(&["scan-nu", "--input", p(&agg), "--kind", "interval", "--nu-grid", "0.1,1,10", "--out", p(&scan)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(scan.join("nu_scan.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = write(&d.join("spec.json"), SKELLAM_SPEC);
    let sim = d.join("sim");
    assert_eq!(code(&intervol(&["simulate", "--spec", p(&spec), "--out", p(&sim)])), 0);
    let out = d.join("fit");
    let cfg = write(
        &d.join("run.conf"),
        &format!("# test run\ninput = {}\nmodels = interval_t\nregime = gas-like\nout = {}\n", p(&sim), p(&out)),
    );
    let o = intervol(&["--config", p(&cfg), "fit", "--models", "skellam"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["models"][0], "skellam");
    assert_eq!(echoed["regime"], "gas-like");
    assert!(out.join("fits/skellam").is_dir());
    assert!(!out.join("fits/interval_t").exists());
}

#[test]
fn input_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = d.join("o");
    let missing = d.join("nope.csv");
    assert_eq!(code(&intervol(&["fit", "--input", p(&missing), "--out", p(&out)])), 2);
    let empty = write(&d.join("empty.csv"), "");
    assert_eq!(code(&intervol(&["fit", "--input", p(&empty), "--out", p(&out)])), 2);
    let header_only = write(&d.join("h.csv"), "timestamp,price\n");
    assert_eq!(code(&intervol(&["clean", "--input", p(&header_only), "--out", p(&out)])), 2);
    let one = write(&d.join("changes_x.csv"), "day,time_of_day_s,change_cents\nx,1,0\n");
    assert_eq!(code(&intervol(&["fit", "--input", p(&one), "--models", "bogus", "--out", p(&out)])), 2);
    assert_eq!(code(&intervol(&["fit", "--input", p(&one), "--regime", "tight", "--out", p(&out)])), 2);
    assert_eq!(code(&intervol(&["no-such-command"])), 2);
    assert_eq!(code(&intervol(&["--help"])), 0);
}

#[test]
fn short_days_are_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let short = write(&d.join("changes_s.csv"), "day,time_of_day_s,change_cents\ns,1,0\ns,2,1\ns,3,-1\n");
    let out = d.join("o");
    let o = intervol(&["fit", "--input", p(&short), "--models", "skellam", "--diurnal", "none", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient data"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("theta,x"));
    assert!(summary.contains("excluded_days,1"));
}
