//! Price tables and daily simple returns.
//!
//! Prices come from a CSV file with a `date` column followed by one column
//! per asset code. Dates are carried along as labels only; rows are treated
//! as consecutive trading periods.

use std::collections::HashSet;
use std::io::Read;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How empty cells in a price file are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Any empty cell is an error.
    #[default]
    Reject,
    /// An empty cell takes the most recent value above it in the same column.
    ForwardFill,
}

/// Closing prices, one row per date and one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    dates: Vec<NaiveDate>,
    codes: Vec<String>,
    prices: DMatrix<f64>,
}

impl PriceTable {
    pub fn new(dates: Vec<NaiveDate>, codes: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != codes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dates x {} codes but price matrix is {}x{}",
                dates.len(),
                codes.len(),
                prices.nrows(),
                prices.ncols()
            )));
        }
        check_codes(&codes)?;
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::UnsortedDates {
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        for (t, date) in dates.iter().enumerate() {
            for (i, code) in codes.iter().enumerate() {
                let value = prices[(t, i)];
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonPositivePrice {
                        date: *date,
                        code: code.clone(),
                        value,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            codes,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.codes.len()
    }

    pub fn row_index(&self, date: NaiveDate) -> Result<usize> {
        self.dates
            .binary_search(&date)
            .map_err(|_| Error::UnknownDate(date))
    }

    /// Prices on `date`, in column order.
    pub fn row(&self, date: NaiveDate) -> Result<Vec<f64>> {
        let t = self.row_index(date)?;
        Ok(self.prices.row(t).iter().copied().collect())
    }

    /// Rows `start..=end`, both given by date.
    pub fn slice_dates(&self, start: NaiveDate, end: NaiveDate) -> Result<PriceTable> {
        let a = self.row_index(start)?;
        let b = self.row_index(end)?;
        if b < a {
            return Err(Error::UnsortedDates {
                prev: start,
                next: end,
            });
        }
        Ok(self.slice_rows(a, b + 1))
    }

    /// Rows `start..end` by position. Panics if the range is out of bounds.
    pub fn slice_rows(&self, start: usize, end: usize) -> PriceTable {
        PriceTable {
            dates: self.dates[start..end].to_vec(),
            codes: self.codes.clone(),
            prices: self.prices.rows(start, end - start).into_owned(),
        }
    }

    /// Rows dated on or before `date`.
    pub fn up_to(&self, date: NaiveDate) -> Result<PriceTable> {
        let b = self.row_index(date)?;
        Ok(self.slice_rows(0, b + 1))
    }

    /// Columns reordered and restricted to `codes`.
    pub fn select(&self, codes: &[String]) -> Result<PriceTable> {
        let idx = codes
            .iter()
            .map(|c| {
                self.codes
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| Error::CodeMismatch(format!("{c} not in price table")))
            })
            .collect::<Result<Vec<_>>>()?;
        let prices = DMatrix::from_fn(self.n_rows(), idx.len(), |t, j| self.prices[(t, idx[j])]);
        PriceTable::new(self.dates.clone(), codes.to_vec(), prices)
    }
}

fn check_codes(codes: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in codes {
        if c.is_empty() {
            return Err(Error::Csv("empty asset code in header".into()));
        }
        if !seen.insert(c.as_str()) {
            return Err(Error::Csv(format!("duplicate asset code {c}")));
        }
    }
    Ok(())
}

/// Daily simple returns, `m` rows by `n` assets.
///
/// Row `t` holds the return from price row `t` to price row `t + 1` and is
/// labelled with the later date.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    dates: Vec<NaiveDate>,
    codes: Vec<String>,
    returns: DMatrix<f64>,
}

impl ReturnMatrix {
    pub fn new(dates: Vec<NaiveDate>, codes: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != codes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dates x {} codes but return matrix is {}x{}",
                dates.len(),
                codes.len(),
                returns.nrows(),
                returns.ncols()
            )));
        }
        check_codes(&codes)?;
        if let Some(bad) = returns.iter().find(|r| !(**r > -1.0) || !r.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "return {bad} is not a finite value above -1"
            )));
        }
        Ok(Self {
            dates,
            codes,
            returns,
        })
    }

    /// Build from a bare matrix, labelling rows with consecutive days from
    /// 2000-01-01 and columns `A0, A1, ...`. Handy for synthetic data.
    pub fn from_matrix(returns: DMatrix<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        let dates = start.iter_days().take(returns.nrows()).collect();
        let codes = (0..returns.ncols()).map(|i| format!("A{i}")).collect();
        Self::new(dates, codes, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.returns
    }

    /// Number of return rows, `m`.
    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }
}

/// Parse a price CSV.
///
/// The header must be `date,<CODE1>,...,<CODEn>`. Dates are `YYYY-MM-DD`.
pub fn load_prices<R: Read>(source: R, fill: FillPolicy) -> Result<PriceTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let header = rdr.headers()?.clone();
    match header.get(0) {
        Some(h) if h.trim_start_matches('\u{feff}') == "date" => {}
        other => {
            return Err(Error::Csv(format!(
                "first header must be `date`, found {:?}",
                other.unwrap_or("")
            )))
        }
    }
    let codes: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    if codes.is_empty() {
        return Err(Error::Csv("no asset columns".into()));
    }
    check_codes(&codes)?;
    let n = codes.len();

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut flat: Vec<f64> = Vec::new();
    let mut last: Vec<Option<f64>> = vec![None; n];

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let raw_date = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| Error::Parse {
            line,
            msg: format!("bad date {raw_date:?}: {e}"),
        })?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::UnsortedDates {
                    prev: *prev,
                    next: date,
                });
            }
        }
        for (i, code) in codes.iter().enumerate() {
            let cell = record.get(i + 1).unwrap_or("");
            let value = if cell.is_empty() {
                match fill {
                    FillPolicy::Reject => {
                        return Err(Error::EmptyCell {
                            date,
                            code: code.clone(),
                        })
                    }
                    FillPolicy::ForwardFill => last[i].ok_or_else(|| Error::EmptyLeadingCell {
                        date,
                        code: code.clone(),
                    })?,
                }
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad number {cell:?} for {code}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("non-finite price {cell:?} for {code}"),
                    });
                }
                if v <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        date,
                        code: code.clone(),
                        value: v,
                    });
                }
                v
            };
            last[i] = Some(value);
            flat.push(value);
        }
        dates.push(date);
    }

    let prices = DMatrix::from_row_slice(dates.len(), n, &flat);
    PriceTable::new(dates, codes, prices)
}

/// Simple returns `(p[t+1] - p[t]) / p[t]`.
pub fn compute_returns(prices: &PriceTable) -> Result<ReturnMatrix> {
    let rows = prices.n_rows();
    if rows < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            got: rows,
        });
    }
    let p = prices.prices();
    let returns = DMatrix::from_fn(rows - 1, prices.n_assets(), |t, i| {
        (p[(t + 1, i)] - p[(t, i)]) / p[(t, i)]
    });
    ReturnMatrix::new(
        prices.dates()[1..].to_vec(),
        prices.codes().to_vec(),
        returns,
    )
}
