use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dacel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dacel"))
        .args(args)
        .env_remove("DACEL_THREADS")
        .output()
        .expect("binary runs")
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = dacel(&[
            "--threads",
            threads,
            "simulate",
            "--example",
            "linear",
            "--case",
            "1",
            "--n",
            "10000",
            "--k-list",
            "20",
            "--methods",
            "dacel",
            "--reps",
            "10",
            "--seed",
            "1",
            "--out",
            path(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["report.csv", "report.md", "config.toml"] {
        let x = fs::read(a.join(file)).unwrap();
        let y = fs::read(b.join(file)).unwrap();
        if file == "config.toml" {
            continue;
        }
        assert_eq!(x, y, "{file} differs");
    }
    let csv = fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    let rows = dacel::harness::rows_from_csv(&csv).unwrap();
    assert!(rows.iter().all(|r| r.counted == 10 && r.method == "K=20"));
}

#[test]
fn simulate_with_config_and_timing() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    fs::write(
        &config,
        "example = \"logistic\"\ncase = 1\nn = 2000\nk_list = [10]\ngamma_list = [0.7]\n\
         methods = [\"dacel\", \"sdb\"]\nreplications = 3\nsdb_subsets = 20\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = dacel(&[
        "simulate",
        "--config",
        path(&config),
        "--timing",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let timing = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert!(timing.starts_with("method,total_secs,block_max_secs,block_sum_secs,el_secs"));
    assert!(timing.contains("K=10,") && timing.contains("SDB(n^0.7),"));
    assert!(fs::read_to_string(out.join("report.md"))
        .unwrap()
        .contains("| 1 | SDB(n^0.7) |"));
}

#[test]
fn invalid_case_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = dacel(&[
        "simulate",
        "--example",
        "linear",
        "--case",
        "5",
        "--out",
        path(&out),
    ]);
    assert!(!o.status.success());
    assert!(!out.exists());
}

#[test]
fn failed_run_removes_partial_output() {
    // Every rare-event block of 25 rows separates, so all replicates abort
    // after the output directory has been created.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("partial");
    let o = dacel(&[
        "simulate",
        "--example",
        "logistic",
        "--case",
        "6",
        "--n",
        "1000",
        "--k-list",
        "40",
        "--reps",
        "4",
        "--out",
        path(&out),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
    assert!(!out.exists());
}

fn toy_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    use dacel::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut r = rng::stream(99, &[]);
    let mut text = String::from("signal,noise,y\n");
    for _ in 0..20_000 {
        let (s, z, e): (f64, f64, f64) = (
            r.sample(StandardNormal),
            r.sample(StandardNormal),
            r.sample(StandardNormal),
        );
        text.push_str(&format!("{s},{z},{}\n", 0.3 * s + e));
    }
    let data = dir.join("toy.csv");
    fs::write(&data, text).unwrap();
    let schema = dir.join("toy.toml");
    fs::write(
        &schema,
        "covariates = [\"signal\", \"noise\"]\nresponse = \"y\"\nmodel = \"linear\"\n",
    )
    .unwrap();
    (data, schema)
}

#[test]
fn analyze_noise_covariate_rejects_near_level() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = toy_dataset(dir.path());
    let out = dir.path().join("analysis.csv");
    let o = dacel(&[
        "analyze",
        "--data",
        path(&data),
        "--schema",
        path(&schema),
        "--k",
        "50",
        "--reps",
        "40",
        "--seed",
        "3",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let share = |i: usize| rows[i][4].parse::<f64>().unwrap();
    assert_eq!(share(0), 1.0);
    // Re-partitions share the data, so shares are correlated; only "far from 1" is checked.
    assert!(
        share(1) < 0.3,
        "noise covariate rejected in {} of partitions",
        share(1)
    );
}

#[test]
fn profile_agrees_with_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = toy_dataset(dir.path());
    let out = dir.path().join("analysis.csv");
    let common = [
        "--data",
        path(&data),
        "--schema",
        path(&schema),
        "--k",
        "20",
        "--seed",
        "5",
    ];
    let mut args = vec!["analyze", "--reps", "1", "--out", path(&out)];
    args.extend(common);
    assert!(dacel(&args).status.success());
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let row = reader.records().next().unwrap().unwrap();
    let (mean, lo, hi): (f64, f64, f64) = (
        row[3].parse().unwrap(),
        row[5].parse().unwrap(),
        row[6].parse().unwrap(),
    );

    // A grid starting exactly at the DAC mean has a zero first row.
    let grid = format!("{mean}:{}:4", mean + 1.0);
    let mut args = vec!["profile", "--coordinate", "1", "--grid", &grid];
    args.extend(common);
    let o = dacel(&args);
    let text = String::from_utf8(o.stdout).unwrap();
    let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0].parse::<f64>().unwrap(), mean);
    assert!(first[1].parse::<f64>().unwrap() < 1e-12);

    // The chi-square line is crossed between the grid points around each endpoint.
    let steps = 400;
    let (glo, ghi) = (lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo));
    let grid = format!("{glo}:{ghi}:{steps}");
    let mut args = vec!["profile", "--coordinate", "1", "--grid", &grid];
    args.extend(common);
    let o = dacel(&args);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("c,statistic\n"));
    let prof: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (c, s) = l.split_once(',').unwrap();
            (c.parse().unwrap(), s.parse().unwrap())
        })
        .collect();
    let crit = 3.841458820694124;
    let step = (ghi - glo) / steps as f64;
    let mut crossings = 0;
    for w in prof.windows(2) {
        let crosses = (w[0].1 - crit) * (w[1].1 - crit) <= 0.0;
        if crosses {
            let inside = |e: f64| w[0].0 - 1e-9 * step <= e && e <= w[1].0 + 1e-9 * step;
            assert!(
                inside(lo) || inside(hi),
                "crossing in [{}, {}] misses {lo} and {hi}",
                w[0].0,
                w[1].0
            );
            crossings += 1;
        }
    }
    assert_eq!(crossings, 2);
}

#[test]
fn profile_writes_inf_outside_hull() {
    let o = dacel(&[
        "profile",
        "--example",
        "linear",
        "--case",
        "1",
        "--n",
        "2000",
        "--coordinate",
        "2",
        "--grid",
        "-5:5:2",
        "--k",
        "10",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "-5,inf");
    assert_eq!(text.lines().nth(3).unwrap(), "5,inf");
}

#[test]
fn census_pipeline() {
    let r = root();
    let o = dacel(&[
        "analyze",
        "--data",
        path(&r.join("data/census/adult.data")),
        "--data",
        path(&r.join("data/census/adult.test")),
        "--schema",
        path(&r.join("configs/census.toml")),
        "--k",
        "100",
        "--reps",
        "2",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("loaded 48842 rows"));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("intercept") && text.contains("hours-per-week"));
}

#[test]
fn usage_errors() {
    assert!(!dacel(&[
        "profile",
        "--example",
        "linear",
        "--coordinate",
        "9",
        "--grid",
        "0:1:3"
    ])
    .status
    .success());
    assert!(!dacel(&[
        "profile",
        "--example",
        "linear",
        "--coordinate",
        "1",
        "--grid",
        "1:0:3"
    ])
    .status
    .success());
    assert!(!dacel(&["simulate", "--out", "x"]).status.success());
}

#[test]
fn shipped_configs_are_valid() {
    let mut seen = 0;
    for dir in ["configs/full", "configs/desk"] {
        for entry in fs::read_dir(root().join(dir)).unwrap() {
            let path = entry.unwrap().path();
            let text = fs::read_to_string(&path).unwrap();
            dacel::harness::ExperimentConfig::from_toml(&text)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert_eq!(seen, 18);
    dacel::ingest::CsvSchema::from_file(&root().join("configs/census.toml")).unwrap();
}
