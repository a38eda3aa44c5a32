//! Portfolio accounting: weights, drift, costs, reward, and the ledger.
//!
//! Conventions shared engine-wide:
//!
//! * A portfolio vector has `m + 1` entries; index 0 is cash, indices
//!   `1..=m` are the risky assets.
//! * Price relatives `y` are gross per-day growth factors per entry; the
//!   cash entry is `1 + r` for the per-day risk-free rate `r`.
//! * Commission applies to the traded (non-cash) legs only.
//!
//! A backtest produces a [`Ledger`]: one row per day carrying the weights
//! actually held, the fills, the cost drag, and the compounded account
//! value. Ledger CSV files round-trip losslessly (shortest-representation
//! float formatting) so downstream reports can be rebuilt from disk alone.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::scalar::Real;
use crate::Scalar;

/// Tolerance for accepting an incoming weight vector as normalized.
const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Tolerance below zero for accepting a weight entry as non-negative.
const WEIGHT_NEG_TOL: f64 = 1e-12;

/// Errors from portfolio construction and accounting.
#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("weight vector invalid: {message}")]
    InvalidWeights { message: String },
    #[error("price relatives invalid: {message}")]
    InvalidRelatives { message: String },
    #[error("accounting breakdown on day {day}: net growth factor {factor} is not positive")]
    NonPositiveGrowth { day: usize, factor: f64 },
    #[error("ledger is empty")]
    EmptyLedger,
    #[error("cannot access ledger file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed ledger CSV {path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Non-negative portfolio weights over cash + `m` assets, summing to one.
///
/// Construction validates non-negativity and that the incoming sum is within
/// `1e-9` of one, then renormalizes exactly so downstream accounting never
/// compounds a stray epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<R> {
    w: Vec<R>,
}

impl<R: Real> WeightVector<R> {
    pub fn new(w: Vec<R>) -> Result<Self, PortfolioError> {
        if w.len() < 2 {
            return Err(PortfolioError::InvalidWeights {
                message: format!("need cash plus at least one asset, got {} entries", w.len()),
            });
        }
        let mut sum = R::zero();
        for (i, &v) in w.iter().enumerate() {
            if !v.is_finite() {
                return Err(PortfolioError::InvalidWeights {
                    message: format!("entry {i} is not finite"),
                });
            }
            if v < -R::of(WEIGHT_NEG_TOL) {
                return Err(PortfolioError::InvalidWeights {
                    message: format!("entry {i} is negative: {v}"),
                });
            }
            sum += v;
        }
        if (sum - R::one()).abs() > R::of(WEIGHT_SUM_TOL) {
            return Err(PortfolioError::InvalidWeights {
                message: format!("entries sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}"),
            });
        }
        let w = w.into_iter().map(|v| v.max(R::zero()) / sum).collect();
        Ok(Self { w })
    }

    /// All-cash portfolio: weight 1 on entry 0.
    pub fn all_cash(num_assets: usize) -> Self {
        let mut w = vec![R::zero(); num_assets + 1];
        w[0] = R::one();
        Self { w }
    }

    /// Uniform weights over cash and all assets.
    pub fn uniform(num_assets: usize) -> Self {
        let n = num_assets + 1;
        Self { w: vec![R::one() / R::of_usize(n); n] }
    }

    /// Everything on a single entry (0 = cash).
    pub fn one_hot(num_assets: usize, index: usize) -> Self {
        assert!(index <= num_assets, "one-hot index out of range");
        let mut w = vec![R::zero(); num_assets + 1];
        w[index] = R::one();
        Self { w }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn cash(&self) -> R {
        self.w[0]
    }

    pub fn as_slice(&self) -> &[R] {
        &self.w
    }
}

/// Gross per-day growth factors per portfolio entry (cash first).
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRelatives<R> {
    y: Vec<R>,
}

impl<R: Real> PriceRelatives<R> {
    pub fn new(y: Vec<R>) -> Result<Self, PortfolioError> {
        if y.len() < 2 {
            return Err(PortfolioError::InvalidRelatives {
                message: format!("need cash plus at least one asset, got {} entries", y.len()),
            });
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() || v <= R::zero() {
                return Err(PortfolioError::InvalidRelatives {
                    message: format!("entry {i} must be a positive finite growth factor, got {v}"),
                });
            }
        }
        Ok(Self { y })
    }

    /// All entries 1 (a perfectly flat day).
    pub fn ones(num_assets: usize) -> Self {
        Self { y: vec![R::one(); num_assets + 1] }
    }

    pub fn as_slice(&self) -> &[R] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Portfolio growth factor `w . y` for one day.
pub fn growth_factor<R: Real>(w: &WeightVector<R>, y: &PriceRelatives<R>) -> R {
    debug_assert_eq!(w.len(), y.len());
    crate::linalg::dot(w.as_slice(), y.as_slice())
}

/// Weights after a day of price motion, before any rebalancing:
/// `w'_i = y_i w_i / (y . w)`.
pub fn drift_weights<R: Real>(w: &WeightVector<R>, y: &PriceRelatives<R>) -> WeightVector<R> {
    let denom = growth_factor(w, y);
    let drifted: Vec<R> =
        w.as_slice().iter().zip(y.as_slice()).map(|(&wi, &yi)| wi * yi / denom).collect();
    // Positive relatives keep the simplex invariant; renormalization inside
    // `new` only mops up rounding.
    WeightVector::new(drifted).expect("drift preserves the simplex")
}

/// Per-entry rebalancing trade `target - drifted`.
pub fn trade_delta<R: Real>(target: &WeightVector<R>, drifted: &WeightVector<R>) -> Vec<R> {
    debug_assert_eq!(target.len(), drifted.len());
    target.as_slice().iter().zip(drifted.as_slice()).map(|(&t, &d)| t - d).collect()
}

/// Commission drag for one rebalance: `C * sum_i |delta_i|` over the asset
/// legs only (the cash leg trades for free).
pub fn transaction_cost<R: Real>(delta: &[R], commission: R) -> R {
    let turnover = delta[1..].iter().fold(R::zero(), |acc, &d| acc + d.abs());
    commission * turnover
}

/// Diversity bonus `1 - sum_i w_i^2` (zero for a one-hot portfolio, maximal
/// for the uniform one).
pub fn gini_diversity<R: Real>(w: &WeightVector<R>) -> R {
    R::one() - w.as_slice().iter().fold(R::zero(), |acc, &v| acc + v * v)
}

/// Per-day agent reward: log of net growth plus the weighted diversity bonus,
/// `ln((1 - mu) * (w . y)) + eta * gini`.
///
/// Fails if the net growth factor is non-positive (a broken account).
pub fn step_reward<R: Real>(
    mu: R,
    gross: R,
    eta: R,
    gini: R,
    day: usize,
) -> Result<R, PortfolioError> {
    let net = (R::one() - mu) * gross;
    if net <= R::zero() || !net.is_finite() {
        return Err(PortfolioError::NonPositiveGrowth { day, factor: net.widen() });
    }
    Ok(net.ln() + eta * gini)
}

/// One backtest day as recorded in the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    /// Day index within the frame.
    pub day: usize,
    pub date: NaiveDate,
    /// Weights after drift, before the rebalance.
    pub drifted: Vec<Scalar>,
    /// Weights actually held through the day (the rebalance target).
    pub target: Vec<Scalar>,
    /// Execution price per asset (no cash entry).
    pub exec_prices: Vec<Scalar>,
    /// Commission drag `mu` for the day.
    pub cost: Scalar,
    /// Gross growth factor `w . y` for the day.
    pub gross_return: Scalar,
    /// Account value after the day.
    pub value: Scalar,
    /// Risk signal active during the day (`S+`, `S-`, or `NA`).
    pub signal: String,
}

/// Full backtest record: the starting state plus one entry per traded day.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    /// Date on which the starting value is struck (day before first trade).
    pub start_date: NaiveDate,
    /// Day index of the starting state.
    pub start_day: usize,
    pub initial_value: Scalar,
    /// Initial holdings (all cash unless stated otherwise).
    pub initial_weights: Vec<Scalar>,
    /// Reference prices at the start (previous closes).
    pub initial_prices: Vec<Scalar>,
    pub rows: Vec<LedgerEntry>,
}

impl Ledger {
    /// Account value series including the starting value.
    pub fn value_series(&self) -> Vec<Scalar> {
        let mut v = Vec::with_capacity(self.rows.len() + 1);
        v.push(self.initial_value);
        v.extend(self.rows.iter().map(|r| r.value));
        v
    }

    /// Dates aligned with [`Self::value_series`].
    pub fn date_series(&self) -> Vec<NaiveDate> {
        let mut d = Vec::with_capacity(self.rows.len() + 1);
        d.push(self.start_date);
        d.extend(self.rows.iter().map(|r| r.date));
        d
    }

    pub fn final_value(&self) -> Scalar {
        self.rows.last().map_or(self.initial_value, |r| r.value)
    }

    /// Number of traded days.
    pub fn num_days(&self) -> usize {
        self.rows.len()
    }
}

/// Recomputes the cumulative growth `prod_t (1 - mu_t) * (w_t . y_t)` from
/// the per-day records, independent of the stored `value` column.
pub fn accumulate(ledger: &Ledger) -> Scalar {
    ledger.rows.iter().map(|r| (1.0 - r.cost) * r.gross_return).product()
}

/// Writes a ledger as CSV. Header:
/// `date,value,mu,gross_return,w_0..w_m,vE_1..vE_m,signal`; the first data
/// row is the starting state (day 0 of the record), then one row per day.
///
/// Floats use Rust's shortest round-trip formatting, so read-back is exact.
pub fn write_ledger_csv(ledger: &Ledger, path: &Path) -> Result<(), PortfolioError> {
    let io_err = |source| PortfolioError::Io { path: path.to_path_buf(), source };
    let n_entries = ledger.initial_weights.len();
    let m = n_entries - 1;
    let mut out = String::new();
    out.push_str("date,value,mu,gross_return");
    for i in 0..n_entries {
        out.push_str(&format!(",w_{i}"));
    }
    for i in 1..=m {
        out.push_str(&format!(",vE_{i}"));
    }
    out.push_str(",signal\n");

    let mut push_row = |date: NaiveDate,
                        value: Scalar,
                        mu: Scalar,
                        gross: Scalar,
                        w: &[Scalar],
                        ve: &[Scalar],
                        signal: &str| {
        out.push_str(&format!("{date},{value},{mu},{gross}"));
        for v in w {
            out.push_str(&format!(",{v}"));
        }
        for v in ve {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{signal}\n"));
    };

    push_row(
        ledger.start_date,
        ledger.initial_value,
        0.0,
        1.0,
        &ledger.initial_weights,
        &ledger.initial_prices,
        "NA",
    );
    for r in &ledger.rows {
        push_row(r.date, r.value, r.cost, r.gross_return, &r.target, &r.exec_prices, &r.signal);
    }
    std::fs::write(path, out).map_err(io_err)
}

/// Reads a ledger CSV written by [`write_ledger_csv`].
pub fn read_ledger_csv(path: &Path) -> Result<Ledger, PortfolioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| PortfolioError::Io { path: path.to_path_buf(), source })?;
    let fmt = |message: String| PortfolioError::Format { path: path.to_path_buf(), message };

    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| fmt("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let n_entries = cols.iter().filter(|c| c.starts_with("w_")).count();
    let m = cols.iter().filter(|c| c.starts_with("vE_")).count();
    if n_entries == 0 || n_entries != m + 1 {
        return Err(fmt(format!("header has {n_entries} weight and {m} price columns")));
    }
    let expect = 4 + n_entries + m + 1;

    let mut parsed: Vec<(NaiveDate, Scalar, Scalar, Scalar, Vec<Scalar>, Vec<Scalar>, String)> =
        Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expect {
            return Err(fmt(format!("row {}: expected {} fields, got {}", i + 1, expect, fields.len())));
        }
        let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
            .map_err(|e| fmt(format!("row {}: bad date: {e}", i + 1)))?;
        let num = |s: &str| {
            s.parse::<Scalar>().map_err(|e| fmt(format!("row {}: bad number '{s}': {e}", i + 1)))
        };
        let value = num(fields[1])?;
        let mu = num(fields[2])?;
        let gross = num(fields[3])?;
        let mut w = Vec::with_capacity(n_entries);
        for f in &fields[4..4 + n_entries] {
            w.push(num(f)?);
        }
        let mut ve = Vec::with_capacity(m);
        for f in &fields[4 + n_entries..4 + n_entries + m] {
            ve.push(num(f)?);
        }
        let signal = fields[expect - 1].to_string();
        parsed.push((date, value, mu, gross, w, ve, signal));
    }
    if parsed.is_empty() {
        return Err(fmt("no data rows".into()));
    }
    let (start_date, initial_value, _, _, initial_weights, initial_prices, _) = parsed.remove(0);
    let rows = parsed
        .into_iter()
        .enumerate()
        .map(|(i, (date, value, cost, gross_return, target, exec_prices, signal))| LedgerEntry {
            day: i + 1,
            date,
            drifted: Vec::new(), // not serialized; the CSV carries held weights
            target,
            exec_prices,
            cost,
            gross_return,
            value,
            signal,
        })
        .collect();
    Ok(Ledger { start_date, start_day: 0, initial_value, initial_weights, initial_prices, rows })
}
