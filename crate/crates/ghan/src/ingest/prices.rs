//! Price file parsing and daily returns.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{GhanError, Result};

/// One OHLCV bar.
#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

/// Per-ticker chronological bars. Dates are strictly increasing, prices
/// strictly positive, volume non-negative.
#[derive(Clone, Debug)]
pub struct PriceSeries {
    ticker: String,
    bars: Vec<Bar>,
}

impl PriceSeries {
    /// Sorts the bars and validates the series invariants.
    pub fn new(ticker: impl Into<String>, mut bars: Vec<Bar>) -> Result<Self> {
        let ticker = ticker.into();
        bars.sort_by_key(|b| b.date);
        for pair in bars.windows(2) {
            if pair[0].date == pair[1].date {
                return Err(GhanError::DuplicateDate {
                    ticker,
                    date: pair[0].date,
                });
            }
        }
        for b in &bars {
            if !(b.open > 0.0 && b.high > 0.0 && b.low > 0.0 && b.close > 0.0) {
                return Err(GhanError::InvalidArgument(format!(
                    "non-positive price for {ticker} on {}",
                    b.date
                )));
            }
            if b.volume < 0.0 {
                return Err(GhanError::InvalidArgument(format!(
                    "negative volume for {ticker} on {}",
                    b.date
                )));
            }
        }
        Ok(PriceSeries { ticker, bars })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }
}

/// Loads a prices CSV with header `date,ticker,open,high,low,close,volume`.
///
/// Returns one sorted series per ticker. Tickers with fewer than `min_bars`
/// bars are dropped with a warning, mirroring the usual exclusion of stocks
/// with insufficient history.
pub fn load_prices(path: &Path, min_bars: usize) -> Result<Vec<PriceSeries>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let path_str = path.display().to_string();
    let mut by_ticker: BTreeMap<String, Vec<Bar>> = BTreeMap::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<&str> {
            record.get(i).ok_or_else(|| GhanError::MalformedRecord {
                path: path_str.clone(),
                line,
                message: format!("missing field `{name}`"),
            })
        };
        let parse_num = |i: usize, name: &str| -> Result<f64> {
            let raw = field(i, name)?;
            raw.trim().parse::<f64>().map_err(|_| GhanError::MalformedRecord {
                path: path_str.clone(),
                line,
                message: format!("invalid number `{raw}` in field `{name}`"),
            })
        };
        let date = NaiveDate::parse_from_str(field(0, "date")?.trim(), "%Y-%m-%d").map_err(|_| {
            GhanError::MalformedRecord {
                path: path_str.clone(),
                line,
                message: format!("invalid date `{}`", record.get(0).unwrap_or("")),
            }
        })?;
        let ticker = field(1, "ticker")?.trim().to_string();
        if ticker.is_empty() {
            return Err(GhanError::MalformedRecord {
                path: path_str.clone(),
                line,
                message: "empty ticker".into(),
            });
        }
        let bar = Bar {
            date,
            open: parse_num(2, "open")?,
            high: parse_num(3, "high")?,
            low: parse_num(4, "low")?,
            close: parse_num(5, "close")?,
            volume: parse_num(6, "volume")?,
        };
        if !(bar.open > 0.0 && bar.high > 0.0 && bar.low > 0.0 && bar.close > 0.0) {
            return Err(GhanError::MalformedRecord {
                path: path_str.clone(),
                line,
                message: format!("non-positive price for {ticker}"),
            });
        }
        by_ticker.entry(ticker).or_default().push(bar);
    }

    let mut out = Vec::new();
    for (ticker, bars) in by_ticker {
        if bars.len() < min_bars {
            log::warn!(
                "dropping {ticker}: {} bars, below the minimum of {min_bars}",
                bars.len()
            );
            continue;
        }
        out.push(PriceSeries::new(ticker, bars)?);
    }
    Ok(out)
}

/// Daily price change rate `(close_t - close_{t-1}) / close_{t-1}`.
///
/// The first date carries no return, so the output has `len - 1` entries.
pub fn compute_returns(series: &PriceSeries) -> Result<Vec<(NaiveDate, f64)>> {
    if series.len() < 2 {
        return Err(GhanError::EmptyInput(format!(
            "returns for {} need at least 2 bars, got {}",
            series.ticker(),
            series.len()
        )));
    }
    Ok(series
        .bars()
        .windows(2)
        .map(|w| (w[1].date, (w[1].close - w[0].close) / w[0].close))
        .collect())
}
