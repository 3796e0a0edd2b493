use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn portopt(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_portopt"));
    cmd.args(args)
        .env_remove("PORTOPT_SEED")
        .env("RUST_LOG", "warn");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        panic!("failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Deterministic pseudo-random walk, `rows` dates by `n` assets.
fn synthetic_prices(dir: &Path, rows: usize, n: usize) -> PathBuf {
    let mut text = String::from("date");
    for i in 0..n {
        text.push_str(&format!(",S{i:02}"));
    }
    text.push('\n');
    let start = chrono::NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
    let mut state: u64 = 0x2545_f491_4f6c_dd1d;
    let mut price: Vec<f64> = (0..n).map(|i| 100.0 + 10.0 * i as f64).collect();
    for t in 0..rows {
        text.push_str(&(start + chrono::Days::new(t as u64)).to_string());
        for p in price.iter_mut() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            *p *= 1.0 + (u - 0.49) * 0.04;
            text.push_str(&format!(",{:.4}", *p));
        }
        text.push('\n');
    }
    let path = dir.join("prices.csv");
    fs::write(&path, text).unwrap();
    path
}

fn core_fixture(name: &str) -> Vec<HashMap<String, String>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name);
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            headers
                .iter()
                .map(String::from)
                .zip(r.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

#[test]
fn estimate_writes_mean_and_covariance() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 30, 4);
    let out = dir.path().join("out");
    run(&mut portopt(&[
        "estimate",
        "--input",
        path_str(&input),
        "--out",
        path_str(&out),
    ]));
    let doc = read_json(out.join("estimate.json"));
    assert_eq!(doc["estimate"]["mu"].as_array().unwrap().len(), 4);
    let sigma = doc["estimate"]["sigma"].as_array().unwrap();
    assert_eq!(sigma.len(), 4);
    assert!(sigma.iter().all(|r| r.as_array().unwrap().len() == 4));
    assert_eq!(doc["n_periods"], 29);
    assert_eq!(doc["config"]["command"], "estimate");
}

#[test]
fn estimate_at_full_scale() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 248, 45);
    run(&mut portopt(&[
        "estimate",
        "--input",
        path_str(&input),
        "--out",
        path_str(dir.path()),
    ]));
    let doc = read_json(dir.path().join("estimate.json"));
    assert_eq!(doc["estimate"]["mu"].as_array().unwrap().len(), 45);
    assert_eq!(doc["n_periods"], 247);
}

#[test]
fn missing_input_fails_with_message() {
    let dir = TempDir::new().unwrap();
    let out = portopt(&[
        "estimate",
        "--input",
        "/nonexistent/prices.csv",
        "--out",
        path_str(dir.path()),
    ])
    .output()
    .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("error") && err.contains("/nonexistent/prices.csv"),
        "{err}"
    );
}

#[test]
fn optimize_writes_one_solution_per_gamma() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 120, 6);
    for method in ["classical", "robust-mw", "robust-boot"] {
        run(&mut portopt(&[
            "optimize",
            "--input",
            path_str(&input),
            "--method",
            method,
            "--window",
            "30",
            "--nboot",
            "100",
            "--gamma",
            "5,50,100",
            "--out",
            path_str(dir.path()),
        ]));
        let f: Vec<f64> = ["5", "50", "100"]
            .iter()
            .map(|g| {
                let doc = read_json(dir.path().join(format!("solution_{method}_gamma{g}.json")));
                let s = &doc["solution"];
                assert!(s["kkt_residual"].as_f64().unwrap() <= 1e-9);
                let total: f64 = s["weights"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|w| w.as_f64().unwrap())
                    .sum();
                assert!((total - 1.0).abs() <= 1e-10);
                s["f_val"].as_f64().unwrap()
            })
            .collect();
        assert!(f[0] <= f[1] && f[1] <= f[2], "{method}: {f:?}");
    }
}

#[test]
fn single_asset_gets_everything() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 20, 1);
    run(&mut portopt(&[
        "optimize",
        "--input",
        path_str(&input),
        "--window",
        "5",
        "--gamma",
        "1,1000",
        "--out",
        path_str(dir.path()),
    ]));
    for g in ["1", "1000"] {
        let doc = read_json(dir.path().join(format!("solution_robust-mw_gamma{g}.json")));
        assert_eq!(doc["solution"]["weights"], serde_json::json!([1.0]));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 80, 5);
    let mut texts = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        run(&mut portopt(&[
            "optimize",
            "--input",
            path_str(&input),
            "--method",
            "robust-boot",
            "--nboot",
            "150",
            "--seed",
            "11",
            "--gamma",
            "50",
            "--out",
            path_str(&out),
        ]));
        let text = fs::read_to_string(out.join("solution_robust-boot_gamma50.json")).unwrap();
        texts.push(text.replace(path_str(&out), ""));
    }
    assert_eq!(texts[0], texts[1]);
    // keys are sorted
    let top: Vec<&str> = texts[0].lines().filter(|l| l.starts_with("  \"")).collect();
    let mut sorted = top.clone();
    sorted.sort();
    assert_eq!(top, sorted);
}

#[test]
fn seed_precedence() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 40, 3);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 3\nwindow = 5\ngamma = [2.0]\nmethod = \"robust-boot\"\nn_boot = 50\n",
    )
    .unwrap();
    let base = [
        "uncertainty",
        "--input",
        path_str(&input),
        "--config",
        path_str(&cfg),
        "--out",
    ];

    let seed_of = |extra: &[&str], env: Option<&str>| {
        let out = dir
            .path()
            .join(format!("o{}", extra.len() + env.map_or(0, |_| 10)));
        let mut cmd = portopt(&base);
        cmd.arg(&out).args(extra);
        if let Some(v) = env {
            cmd.env("PORTOPT_SEED", v);
        }
        run(&mut cmd);
        let doc = read_json(out.join("intervals.json"));
        assert_eq!(doc["config"]["window"], 5);
        assert_eq!(doc["config"]["gamma"], serde_json::json!([2.0]));
        doc["config"]["bootstrap"]["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None), 3);
    assert_eq!(seed_of(&[], Some("8")), 8);
    assert_eq!(seed_of(&["--seed", "9"], Some("8")), 9);
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 40, 3);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!("input = {:?}\nwindow = 5\n", path_str(&input)),
    )
    .unwrap();
    run(&mut portopt(&[
        "uncertainty",
        "--config",
        path_str(&cfg),
        "--window",
        "7",
        "--out",
        path_str(dir.path()),
    ]));
    let doc = read_json(dir.path().join("intervals.json"));
    assert_eq!(doc["config"]["window"], 7);
    assert_eq!(doc["intervals"]["params"]["windows"], 39 - 7 + 1);

    fs::write(&cfg, "windw = 5\n").unwrap();
    let out = portopt(&[
        "estimate",
        "--config",
        path_str(&cfg),
        "--input",
        path_str(&input),
    ])
    .output()
    .unwrap();
    assert!(!out.status.success(), "unknown keys are rejected");
}

/// Printed allocation table inputs: a weights CSV for one column and a price
/// file with the buy date and both sell dates.
fn table_inputs(dir: &Path, column: &str) -> (PathBuf, PathBuf) {
    let weights = core_fixture("weights.csv");
    let alloc = core_fixture("allocation_mw.csv");
    let good = core_fixture("gain_good.csv");
    let bad = core_fixture("gain_bad.csv");
    let codes: Vec<&str> = weights.iter().map(|r| r["code"].as_str()).collect();

    let mut w = String::from("code,weight\n");
    for row in &weights {
        w.push_str(&format!("{},{}\n", row["code"], row[column]));
    }
    let wpath = dir.join("weights.csv");
    fs::write(&wpath, w).unwrap();

    let mut p = format!("date,{}\n", codes.join(","));
    for (date, rows, key) in [
        ("2023-03-24", &alloc, "buy_price"),
        ("2023-03-30", &good, "sell_price"),
        ("2023-05-02", &bad, "sell_price"),
    ] {
        let prices: Vec<&str> = rows.iter().map(|r| r[key].as_str()).collect();
        p.push_str(&format!("{date},{}\n", prices.join(",")));
    }
    let ppath = dir.join("prices.csv");
    fs::write(&ppath, p).unwrap();
    (wpath, ppath)
}

#[test]
fn backtest_reproduces_the_printed_tables() {
    let dir = TempDir::new().unwrap();
    let (weights, prices) = table_inputs(dir.path(), "mw5");
    run(&mut portopt(&[
        "backtest",
        "--input",
        path_str(&prices),
        "--weights",
        path_str(&weights),
        "--capital",
        "100000",
        "--buy-date",
        "2023-03-24",
        "--sell-date",
        "2023-05-02",
        "--out",
        path_str(dir.path()),
    ]));
    let doc = read_json(dir.path().join("backtest_weights.json"));
    let alloc = core_fixture("allocation_mw.csv");
    let bad = core_fixture("gain_bad.csv");
    let rows = doc["allocation"]["rows"].as_array().unwrap();
    let gains = doc["gain"]["rows"].as_array().unwrap();
    for ((row, gain), (printed, printed_gain)) in rows.iter().zip(gains).zip(alloc.iter().zip(&bad))
    {
        assert_eq!(row["code"].as_str().unwrap(), printed["code"]);
        assert_eq!(
            row["shares"].as_f64().unwrap(),
            printed["shares_mw5"].parse::<f64>().unwrap()
        );
        assert_eq!(
            gain["gain"].as_f64().unwrap(),
            printed_gain["mw5"].parse::<f64>().unwrap()
        );
    }
    let total: f64 = gains.iter().map(|g| g["gain"].as_f64().unwrap()).sum();
    assert_eq!(doc["gain"]["total"].as_f64().unwrap(), total);
    assert_eq!(doc["series"]["values"].as_array().unwrap().len(), 3);
}

#[test]
fn selling_on_the_buy_date_gains_nothing() {
    let dir = TempDir::new().unwrap();
    let (weights, prices) = table_inputs(dir.path(), "boot50");
    run(&mut portopt(&[
        "backtest",
        "--input",
        path_str(&prices),
        "--weights",
        path_str(&weights),
        "--buy-date",
        "2023-03-30",
        "--sell-date",
        "2023-03-30",
        "--format",
        "csv",
        "--out",
        path_str(dir.path()),
    ]));
    let mut rdr = csv::Reader::from_path(dir.path().join("gain_weights.csv")).unwrap();
    for rec in rdr.records() {
        assert_eq!(rec.unwrap()[4].parse::<f64>().unwrap(), 0.0);
    }
    assert!(dir.path().join("config.json").exists());
    assert!(!dir.path().join("series_weights.csv").exists());
}

#[test]
fn two_day_series_matches_hand_computation() {
    let dir = TempDir::new().unwrap();
    let prices = dir.path().join("p.csv");
    fs::write(&prices, "date,A,B\n2024-01-02,50,20\n2024-01-03,55,19\n").unwrap();
    let weights = dir.path().join("w.csv");
    fs::write(&weights, "code,weight\nB,0.75\nA,0.25\n").unwrap();
    run(&mut portopt(&[
        "series",
        "--input",
        path_str(&prices),
        "--weights",
        path_str(&weights),
        "--buy-date",
        "2024-01-02",
        "--out",
        path_str(dir.path()),
    ]));
    let doc = read_json(dir.path().join("series_weights.json"));
    let v: Vec<f64> = doc["series"]["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    let expected = 0.25 * (55.0 - 50.0) / 50.0 + 0.75 * (19.0 - 20.0) / 20.0;
    assert_eq!(v[0], 0.0);
    assert!((v[1] - expected).abs() < 1e-15);
}

#[test]
fn allocate_from_optimized_weights() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 60, 4);
    run(&mut portopt(&[
        "allocate",
        "--input",
        path_str(&input),
        "--window",
        "20",
        "--gamma",
        "5,50",
        "--buy-date",
        "2022-02-01",
        "--capital",
        "1000000",
        "--out",
        path_str(dir.path()),
    ]));
    for g in ["5", "50"] {
        let doc = read_json(
            dir.path()
                .join(format!("allocation_robust-mw_gamma{g}.json")),
        );
        // estimation stops at the buy date: 2022-01-03 .. 2022-02-01 is 30 rows
        assert_eq!(doc["config"]["buy_date"], "2022-02-01");
        let rows = doc["allocation"]["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 4);
        for r in rows {
            let shares = r["shares"].as_f64().unwrap();
            assert_eq!(shares, shares.round());
        }
    }
}

#[test]
fn unknown_date_is_an_error() {
    let dir = TempDir::new().unwrap();
    let input = synthetic_prices(dir.path(), 20, 2);
    let out = portopt(&[
        "allocate",
        "--input",
        path_str(&input),
        "--window",
        "5",
        "--buy-date",
        "2030-01-01",
        "--out",
        path_str(dir.path()),
    ])
    .output()
    .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2030-01-01"));
}
