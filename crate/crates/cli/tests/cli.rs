use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn boro() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_boro"));
    c.env_remove("BORO_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Newsvendor-like data: temperature, weekend flag and demand.
fn newsvendor_csv(dir: &Path, n: usize) -> PathBuf {
    let mut text = String::from("# dims 2 1\nx1,x2,y1\n");
    for i in 0..n {
        let t = 14.0 + (i * 7 % 13) as f64 * 0.5;
        let w = (i % 7 >= 5) as u8;
        let y = 100.0 + (t - 20.0) + 20.0 * w as f64 + ((i * 37 % 17) as f64 - 8.0);
        text += &format!("{t},{w},{y}\n");
    }
    let path = dir.join("data.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn value(out: &str, key: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in output:\n{out}"))
        .to_string()
}

fn first_of(list: &str) -> f64 {
    list.trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .next()
        .unwrap()
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn malformed_row_exits_2_with_line_number() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "# dims 1 1\nx1,y1\n1,2\n3,abc\n").unwrap();
    let o = run(boro()
        .args(["prescribe", "--context", "1", "--data"])
        .arg(&path));
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 4") && err.contains("io"), "{err}");
}

#[test]
fn unknown_experiment_exits_2() {
    let o = run(boro().args(["experiment", "lottery"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lottery"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "experiment = \"newsvendor\"\nresamples = 10\n").unwrap();
    let o = run(boro().arg("experiment").arg("--config").arg(&cfg));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("resamples"), "{}", stderr(&o));
}

#[test]
fn bad_seed_variable_exits_2() {
    let dir = TempDir::new().unwrap();
    let data = newsvendor_csv(dir.path(), 20);
    let o = run(boro()
        .env("BORO_SEED", "abc")
        .args(["prescribe", "--context", "15,0", "--data"])
        .arg(&data));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn target_b_echoes_calibrated_radius() {
    let dir = TempDir::new().unwrap();
    let n = 40;
    let data = newsvendor_csv(dir.path(), n);
    let o = run(boro()
        .args([
            "prescribe",
            "--context",
            "17,0",
            "--target-b",
            "0.05",
            "--data",
        ])
        .arg(&data));
    assert!(o.status.success(), "{}", stderr(&o));
    let r: f64 = value(&stdout(&o), "radius").parse().unwrap();
    assert!((r - (1.0f64 / 0.05).ln() / n as f64).abs() < 1e-11, "{r}");
    assert!(stderr(&o).contains("resolved config"));
}

#[test]
fn zero_radius_decision_is_the_weighted_quantile() {
    let dir = TempDir::new().unwrap();
    let n = 30;
    let data = newsvendor_csv(dir.path(), n);
    // The naive smoother weighs all samples equally.
    let o = run(boro()
        .args([
            "prescribe",
            "--context",
            "17,0",
            "--smoother",
            "naive",
            "--radius",
            "0",
            "--data",
        ])
        .arg(&data));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&data).unwrap();
    let mut ys: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    ys.sort_by(f64::total_cmp);
    let quantile = ys[(10.0 * n as f64 / 11.0).ceil() as usize - 1];
    let out = stdout(&o);
    for key in ["decision", "nominal_decision"] {
        let z = first_of(&value(&out, key));
        assert!(
            (z - quantile).abs() < 1e-6 * quantile,
            "{key} {z} vs {quantile}"
        );
    }
}

fn bootstrap_csv(dir: &Path, seed: &str, threads: &str) -> String {
    let data = newsvendor_csv(dir, 40);
    let o = run(boro()
        .env("BORO_SEED", seed)
        .args([
            "bootstrap",
            "--context",
            "17,0",
            "--m",
            "300",
            "--threads",
            threads,
            "--r-grid",
            "0,0.05,0.2",
            "--n-grid",
            "20,40",
            "--data",
        ])
        .arg(&data));
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o)
}

#[test]
fn bootstrap_is_reproducible_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let a = bootstrap_csv(dir.path(), "11", "1");
    let b = bootstrap_csv(dir.path(), "11", "4");
    assert_eq!(a, b);
    let c = bootstrap_csv(dir.path(), "12", "2");
    assert_ne!(a, c);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "n,r,empirical_b,bound_b,m,seed");
    // Three radii per sample size.
    assert_eq!(lines.iter().filter(|l| l.starts_with("20,")).count(), 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("40,")).count(), 3);
    assert!(lines[1..].iter().all(|l| l.ends_with(",300,11")));
}

#[test]
fn single_resample_gives_zero_or_one() {
    let dir = TempDir::new().unwrap();
    let data = newsvendor_csv(dir.path(), 25);
    let o = run(boro()
        .args([
            "bootstrap",
            "--context",
            "17,0",
            "--m",
            "1",
            "--r-grid",
            "0,0.1",
            "--data",
        ])
        .arg(&data));
    assert!(o.status.success(), "{}", stderr(&o));
    for line in stdout(&o).lines().skip(1) {
        let b = line.split(',').nth(2).unwrap();
        assert!(b == "0" || b == "1", "{line}");
    }
}

#[test]
fn calibrate_radius_inverts_the_bound() {
    let o = run(boro().args(["calibrate-radius", "--target-b", "0.01", "--n", "50"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let r: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!((r - 100f64.ln() / 50.0).abs() < 1e-11);

    let dir = TempDir::new().unwrap();
    let data = newsvendor_csv(dir.path(), 30);
    let o = run(boro()
        .args([
            "calibrate-radius",
            "--formulation",
            "nn",
            "--target-b",
            "0.01",
            "--context",
            "17,0",
            "--data",
        ])
        .arg(&data));
    assert!(o.status.success(), "{}", stderr(&o));
    let r_nn: f64 = stdout(&o)
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(r_nn > 0.0);
    let o = run(boro().args([
        "calibrate-radius",
        "--formulation",
        "nn",
        "--target-b",
        "0.01",
    ]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn newsvendor_experiment_writes_four_tables_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("nv");
    let o = run(boro()
        .args([
            "experiment",
            "newsvendor",
            "--n-grid",
            "30",
            "--m",
            "50",
            "--seeds",
            "1",
            "--folds",
            "5",
            "--out",
        ])
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "manifest.toml",
            "newsvendor_nn_nominal.csv",
            "newsvendor_nn_robust.csv",
            "newsvendor_nw_nominal.csv",
            "newsvendor_nw_robust.csv"
        ]
    );
    let robust = std::fs::read_to_string(out.join("newsvendor_nw_robust.csv")).unwrap();
    assert!(robust.starts_with("n,r,target_b,empirical_b,bound_b,m,seed,empty_windows\n"));
    // Default targets 0.1 and 0.01, one seed.
    assert_eq!(robust.lines().count(), 3);
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(
        manifest.contains("columns") && manifest.contains("seeds = [0]"),
        "{manifest}"
    );
}

#[test]
fn portfolio_experiment_averages_over_seeds() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("pf");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "experiment = \"portfolio\"\nn_grid = [20]\nseeds = 2\ntest_sets = 5\ntest_size = 50\nfolds = 5\nformulation = \"nw\"\n").unwrap();
    let o = run(boro()
        .args(["experiment", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seeds = [4, 5]"), "{manifest}");
    for v in ["nominal", "robust"] {
        let t = std::fs::read_to_string(out.join(format!("portfolio_nw_{v}.csv"))).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "n,seeds,r_mean,train_cost_mean,oos_mean,oos_se");
        assert!(lines[1].starts_with("20,2,"), "{}", lines[1]);
    }
}
