//! Share allocation for a cash budget, capital gain between two dates, and
//! cumulative portfolio return series.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::PriceTable;

/// Slack on `Σw = 1` accepted by [`allocate_funds`]. Weights printed to five
/// decimals can be off by up to `n * 5e-6` in total.
pub const WEIGHT_SUM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareRounding {
    /// Whole shares, rounded to nearest with halves away from zero.
    #[default]
    Nearest,
    /// Exact fractional holdings `cash / price`.
    Fractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub code: String,
    pub weight: f64,
    pub cash: f64,
    pub buy_price: f64,
    pub shares: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundAllocation {
    pub capital: f64,
    pub rounding: ShareRounding,
    pub rows: Vec<AllocationRow>,
    /// `Σ shares * buy_price`.
    pub invested: f64,
    /// `capital - invested`; negative when rounding up overspends the budget.
    /// Not reinvested.
    pub residual_cash: f64,
}

impl FundAllocation {
    pub fn codes(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.code.clone()).collect()
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights
        .iter()
        .find(|&&w| !(-1e-12..=1.0 + 1e-12).contains(&w))
    {
        return Err(Error::Infeasible(format!("weight {w} outside [0, 1]")));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Infeasible(format!("weights sum to {s}")));
    }
    Ok(())
}

fn check_prices(codes: &[String], prices: &[f64]) -> Result<()> {
    for (code, &p) in codes.iter().zip(prices) {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "nonpositive price {p} for {code}"
            )));
        }
    }
    Ok(())
}

/// Split `capital` by weight and convert each slice into shares at
/// `buy_prices`.
pub fn allocate_funds(
    codes: &[String],
    weights: &[f64],
    buy_prices: &[f64],
    capital: f64,
    rounding: ShareRounding,
) -> Result<FundAllocation> {
    if codes.len() != weights.len() || codes.len() != buy_prices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} codes, {} weights, {} prices",
            codes.len(),
            weights.len(),
            buy_prices.len()
        )));
    }
    if codes.is_empty() {
        return Err(Error::Empty("allocation"));
    }
    if !(capital > 0.0 && capital.is_finite()) {
        return Err(Error::NonPositiveCapital(capital));
    }
    check_weights(weights)?;
    check_prices(codes, buy_prices)?;

    let rows: Vec<AllocationRow> = codes
        .iter()
        .zip(weights)
        .zip(buy_prices)
        .map(|((code, &w), &price)| {
            let weight = w.max(0.0);
            let cash = weight * capital;
            let exact = cash / price;
            let shares = match rounding {
                ShareRounding::Nearest => exact.round(),
                ShareRounding::Fractional => exact,
            };
            AllocationRow {
                code: code.clone(),
                weight,
                cash,
                buy_price: price,
                shares,
            }
        })
        .collect();
    let invested = rows.iter().map(|r| r.shares * r.buy_price).sum::<f64>();
    Ok(FundAllocation {
        capital,
        rounding,
        rows,
        invested,
        residual_cash: capital - invested,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub code: String,
    pub shares: f64,
    pub buy_price: f64,
    pub sell_price: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub rows: Vec<GainRow>,
    /// Sum of the row gains.
    pub total: f64,
}

/// `shares * (sell - buy)` per asset. `codes` must list the allocation's
/// assets in the same order.
pub fn capital_gain(
    alloc: &FundAllocation,
    codes: &[String],
    sell_prices: &[f64],
) -> Result<GainReport> {
    if codes.len() != alloc.rows.len() || sell_prices.len() != codes.len() {
        return Err(Error::CodeMismatch(format!(
            "allocation has {} assets, got {} codes and {} sell prices",
            alloc.rows.len(),
            codes.len(),
            sell_prices.len()
        )));
    }
    if let Some((row, code)) = alloc.rows.iter().zip(codes).find(|(r, c)| &r.code != *c) {
        return Err(Error::CodeMismatch(format!(
            "expected {}, found {code}",
            row.code
        )));
    }
    check_prices(codes, sell_prices)?;
    let rows: Vec<GainRow> = alloc
        .rows
        .iter()
        .zip(sell_prices)
        .map(|(r, &sell)| GainRow {
            code: r.code.clone(),
            shares: r.shares,
            buy_price: r.buy_price,
            sell_price: sell,
            gain: r.shares * (sell - r.buy_price),
        })
        .collect();
    let total = rows.iter().map(|r| r.gain).sum();
    Ok(GainReport { rows, total })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

/// Buy-and-hold cumulative return from the first row of `prices`:
/// `Σ_i w_i (P_{i,t} − P_{i,0}) / P_{i,0}`.
pub fn portfolio_return_series(
    codes: &[String],
    weights: &[f64],
    prices: &PriceTable,
) -> Result<ReturnSeries> {
    if codes.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} codes for {} weights",
            codes.len(),
            weights.len()
        )));
    }
    if prices.n_rows() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: prices.n_rows(),
        });
    }
    check_weights(weights)?;
    let window = prices.select(codes)?;
    let p = window.prices();
    let values = (0..window.n_rows())
        .map(|t| {
            weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * (p[(t, i)] - p[(0, i)]) / p[(0, i)])
                .sum()
        })
        .collect();
    Ok(ReturnSeries {
        dates: window.dates().to_vec(),
        values,
    })
}

impl FundAllocation {
    /// `code,weight,cash,buy_price,shares`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["code", "weight", "cash", "buy_price", "shares"])?;
        for r in &self.rows {
            w.write_record([
                r.code.clone(),
                r.weight.to_string(),
                r.cash.to_string(),
                r.buy_price.to_string(),
                r.shares.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl GainReport {
    /// `code,shares,buy,sell,gain`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["code", "shares", "buy", "sell", "gain"])?;
        for r in &self.rows {
            w.write_record([
                r.code.clone(),
                r.shares.to_string(),
                r.buy_price.to_string(),
                r.sell_price.to_string(),
                r.gain.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl ReturnSeries {
    /// `date,value`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "value"])?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            w.write_record([d.format("%Y-%m-%d").to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
