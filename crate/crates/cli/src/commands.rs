use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use chrono::NaiveDate;
use portopt::backtest::{
    allocate_funds, capital_gain, portfolio_return_series, FundAllocation, ShareRounding,
};
use portopt::estimation::estimate;
use portopt::market_data::{compute_returns, load_prices, FillPolicy, PriceTable, ReturnMatrix};
use portopt::pipeline::{Method, ModelInputs, PipelineConfig};
use portopt::solver::{solve_qp, PortfolioSolution};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Command, Format, RunConfig};
use crate::output::Output;

/// Runs one subcommand. `Ok(false)` means every artifact that could be
/// produced was written but at least one solve did not converge.
pub fn run(cfg: &RunConfig) -> anyhow::Result<bool> {
    let prices = load(cfg)?;
    let out = Output::new(cfg)?;
    if cfg.format == Format::Csv {
        out.config_sidecar()?;
    }
    match cfg.command {
        Command::Estimate => cmd_estimate(cfg, &prices, &out).map(|()| true),
        Command::Uncertainty => cmd_uncertainty(cfg, &prices, &out).map(|()| true),
        Command::Optimize => cmd_optimize(cfg, &prices, &out),
        Command::Allocate | Command::Backtest | Command::Series => {
            let (portfolios, converged) = portfolios(cfg, &prices)?;
            for p in &portfolios {
                match cfg.command {
                    Command::Allocate => cmd_allocate(cfg, &prices, p, &out)?,
                    Command::Backtest => cmd_backtest(cfg, &prices, p, &out)?,
                    _ => cmd_series(cfg, &prices, p, &out)?,
                }
            }
            Ok(converged)
        }
    }
}

fn load(cfg: &RunConfig) -> anyhow::Result<PriceTable> {
    let file =
        File::open(&cfg.input).with_context(|| format!("opening {}", cfg.input.display()))?;
    let fill = if cfg.fill_forward {
        FillPolicy::ForwardFill
    } else {
        FillPolicy::Reject
    };
    load_prices(file, fill).with_context(|| format!("loading {}", cfg.input.display()))
}

/// Returns used for estimation: every row up to and including the buy date
/// when one is given, otherwise the whole table.
fn estimation_returns(cfg: &RunConfig, prices: &PriceTable) -> anyhow::Result<ReturnMatrix> {
    let table = match cfg.buy_date {
        Some(d) => prices.up_to(d)?,
        None => prices.clone(),
    };
    Ok(compute_returns(&table)?)
}

fn pipeline(cfg: &RunConfig) -> PipelineConfig {
    PipelineConfig {
        method: cfg.method,
        window: cfg.window,
        bootstrap: cfg.bootstrap.clone(),
        solver: cfg.solver.clone(),
    }
}

fn cmd_estimate(cfg: &RunConfig, prices: &PriceTable, out: &Output) -> anyhow::Result<()> {
    let returns = estimation_returns(cfg, prices)?;
    let est = estimate(&returns)?;
    match cfg.format {
        Format::Json => out.json(
            "estimate.json",
            json!({
                "estimate": est,
                "n_periods": returns.n_periods(),
                "first_date": returns.dates().first(),
                "last_date": returns.dates().last(),
            }),
        ),
        Format::Csv => {
            out.csv("mu.csv", |w| {
                w.write_record(["code", "mu"])?;
                for (code, mu) in est.codes.iter().zip(est.mu.iter()) {
                    w.write_record([code.clone(), mu.to_string()])?;
                }
                Ok(())
            })?;
            out.matrix_csv("sigma.csv", &est.codes, &est.sigma)
        }
    }
}

fn cmd_uncertainty(cfg: &RunConfig, prices: &PriceTable, out: &Output) -> anyhow::Result<()> {
    if cfg.method == Method::Classical {
        bail!("uncertainty needs --method robust-mw or robust-boot");
    }
    let returns = estimation_returns(cfg, prices)?;
    let ModelInputs::Robust { intervals, params } = ModelInputs::build(&returns, &pipeline(cfg))?
    else {
        unreachable!("robust method yields robust inputs")
    };
    match cfg.format {
        Format::Json => out.json(
            "intervals.json",
            json!({ "intervals": intervals, "robust_params": params }),
        ),
        Format::Csv => {
            out.csv("mu_intervals.csv", |w| {
                w.write_record(["code", "mu_lo", "mu_hi", "mu0", "beta"])?;
                for i in 0..intervals.n_assets() {
                    w.write_record([
                        intervals.codes[i].clone(),
                        intervals.mu_lo[i].to_string(),
                        intervals.mu_hi[i].to_string(),
                        params.mu0[i].to_string(),
                        params.beta[i].to_string(),
                    ])?;
                }
                Ok(())
            })?;
            let codes = &intervals.codes;
            out.matrix_csv("sigma_lo.csv", codes, &intervals.sigma_lo)?;
            out.matrix_csv("sigma_hi.csv", codes, &intervals.sigma_hi)?;
            out.matrix_csv("sigma0.csv", codes, &params.sigma0)?;
            out.matrix_csv("delta.csv", codes, &params.delta)
        }
    }
}

/// Solves for every gamma. Failures are reported on stderr and skipped.
fn solve_all(
    cfg: &RunConfig,
    prices: &PriceTable,
) -> anyhow::Result<(Vec<PortfolioSolution>, bool)> {
    let returns = estimation_returns(cfg, prices)?;
    let inputs = ModelInputs::build(&returns, &pipeline(cfg))?;
    let mut solutions = Vec::new();
    let mut converged = true;
    for &gamma in &cfg.gamma {
        match solve_qp(&inputs.problem(gamma)?, &cfg.solver) {
            Ok(s) => {
                log::info!(
                    "{} gamma = {gamma}: f_val = {:.6e}, {} iterations, kkt = {:.2e}",
                    cfg.method,
                    s.f_val,
                    s.iterations,
                    s.kkt_residual
                );
                solutions.push(s);
            }
            Err(e) => {
                eprintln!("error: {} gamma = {gamma}: {e}", cfg.method);
                converged = false;
            }
        }
    }
    Ok((solutions, converged))
}

fn stem(method: Method, gamma: f64) -> String {
    format!("{method}_gamma{gamma}")
}

fn cmd_optimize(cfg: &RunConfig, prices: &PriceTable, out: &Output) -> anyhow::Result<bool> {
    let (solutions, converged) = solve_all(cfg, prices)?;
    for s in &solutions {
        let stem = stem(cfg.method, s.gamma);
        match cfg.format {
            Format::Json => out.json(&format!("solution_{stem}.json"), json!({ "solution": s }))?,
            Format::Csv => out.csv(&format!("weights_{stem}.csv"), |w| {
                w.write_record(["code", "weight"])?;
                for (code, x) in s.codes.iter().zip(s.weights.iter()) {
                    w.write_record([code.clone(), x.to_string()])?;
                }
                Ok(())
            })?,
        }
    }
    if cfg.format == Format::Csv && !solutions.is_empty() {
        out.csv(&format!("solutions_{}.csv", cfg.method), |w| {
            w.write_record([
                "gamma",
                "f_val",
                "iterations",
                "kkt_residual",
                "psd_shift",
                "lipschitz",
            ])?;
            for s in &solutions {
                w.write_record([
                    s.gamma.to_string(),
                    s.f_val.to_string(),
                    s.iterations.to_string(),
                    s.kkt_residual.to_string(),
                    s.psd_shift.to_string(),
                    s.lipschitz.to_string(),
                ])?;
            }
            Ok(())
        })?;
    }
    Ok(converged)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Portfolio {
    label: String,
    codes: Vec<String>,
    weights: Vec<f64>,
}

fn portfolios(cfg: &RunConfig, prices: &PriceTable) -> anyhow::Result<(Vec<Portfolio>, bool)> {
    if let Some(path) = &cfg.weights {
        return Ok((vec![read_weights(path)?], true));
    }
    let (solutions, converged) = solve_all(cfg, prices)?;
    let list = solutions
        .into_iter()
        .map(|s| Portfolio {
            label: stem(cfg.method, s.gamma),
            codes: s.codes,
            weights: s.weights.iter().copied().collect(),
        })
        .collect();
    Ok((list, converged))
}

/// A solution JSON written by `optimize`, or a CSV with `code` and `weight`
/// columns.
fn read_weights(path: &Path) -> anyhow::Result<Portfolio> {
    let context = || format!("reading weights from {}", path.display());
    let (codes, weights) = if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Weights {
            codes: Vec<String>,
            weights: Vec<f64>,
        }
        let text = std::fs::read_to_string(path).with_context(context)?;
        let mut doc: serde_json::Value = serde_json::from_str(&text).with_context(context)?;
        if let Some(inner) = doc.get_mut("solution") {
            doc = inner.take();
        }
        let w: Weights = serde_json::from_value(doc).with_context(context)?;
        (w.codes, w.weights)
    } else {
        #[derive(Deserialize)]
        struct Row {
            code: String,
            weight: f64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .with_context(context)?;
        let rows: Vec<Row> = rdr
            .deserialize()
            .collect::<Result<_, _>>()
            .with_context(context)?;
        rows.into_iter().map(|r| (r.code, r.weight)).unzip()
    };
    if codes.len() != weights.len() || codes.is_empty() {
        bail!("{}: need one weight per code", path.display());
    }
    Ok(Portfolio {
        label: "weights".into(),
        codes,
        weights,
    })
}

fn require(date: Option<NaiveDate>, flag: &str) -> anyhow::Result<NaiveDate> {
    date.ok_or_else(|| anyhow!("this command needs {flag}"))
}

fn allocation(
    cfg: &RunConfig,
    prices: &PriceTable,
    p: &Portfolio,
) -> anyhow::Result<FundAllocation> {
    let buy = require(cfg.buy_date, "--buy-date")?;
    let buy_prices = prices.select(&p.codes)?.row(buy)?;
    Ok(allocate_funds(
        &p.codes,
        &p.weights,
        &buy_prices,
        cfg.capital,
        ShareRounding::Nearest,
    )?)
}

fn cmd_allocate(
    cfg: &RunConfig,
    prices: &PriceTable,
    p: &Portfolio,
    out: &Output,
) -> anyhow::Result<()> {
    let alloc = allocation(cfg, prices, p)?;
    match cfg.format {
        Format::Json => out.json(
            &format!("allocation_{}.json", p.label),
            json!({ "portfolio": p, "allocation": alloc }),
        ),
        Format::Csv => out.raw(&format!("allocation_{}.csv", p.label), |w| {
            alloc.write_csv(w)
        }),
    }
}

fn cmd_backtest(
    cfg: &RunConfig,
    prices: &PriceTable,
    p: &Portfolio,
    out: &Output,
) -> anyhow::Result<()> {
    let buy = require(cfg.buy_date, "--buy-date")?;
    let sell = require(cfg.sell_date, "--sell-date")?;
    let alloc = allocation(cfg, prices, p)?;
    let sell_prices = prices.select(&p.codes)?.row(sell)?;
    let gain = capital_gain(&alloc, &p.codes, &sell_prices)?;
    let window = prices.slice_dates(buy, sell)?;
    let series = if window.n_rows() < 2 {
        log::warn!(
            "buy and sell dates coincide; no return series for {}",
            p.label
        );
        None
    } else {
        Some(portfolio_return_series(&p.codes, &p.weights, &window)?)
    };
    match cfg.format {
        Format::Json => out.json(
            &format!("backtest_{}.json", p.label),
            json!({ "portfolio": p, "allocation": alloc, "gain": gain, "series": series }),
        ),
        Format::Csv => {
            out.raw(&format!("allocation_{}.csv", p.label), |w| {
                alloc.write_csv(w)
            })?;
            out.raw(&format!("gain_{}.csv", p.label), |w| gain.write_csv(w))?;
            match &series {
                Some(s) => out.raw(&format!("series_{}.csv", p.label), |w| s.write_csv(w)),
                None => Ok(()),
            }
        }
    }
}

fn cmd_series(
    cfg: &RunConfig,
    prices: &PriceTable,
    p: &Portfolio,
    out: &Output,
) -> anyhow::Result<()> {
    let buy = require(cfg.buy_date, "--buy-date")?;
    let sell = match cfg.sell_date {
        Some(d) => d,
        None => *prices.dates().last().expect("price tables are never empty"),
    };
    let series = portfolio_return_series(&p.codes, &p.weights, &prices.slice_dates(buy, sell)?)?;
    match cfg.format {
        Format::Json => out.json(
            &format!("series_{}.json", p.label),
            json!({ "portfolio": p, "series": series }),
        ),
        Format::Csv => out.raw(&format!("series_{}.csv", p.label), |w| series.write_csv(w)),
    }
}
