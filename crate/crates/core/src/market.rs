//! Market data: OHLC ingestion, calendar alignment, and state construction.
//!
//! The engine consumes one daily OHLC CSV per product (`Date,Open,High,Low,
//! Close`, ISO-8601 dates, extra columns ignored). Series are aligned onto
//! the intersection of their calendars, producing a [`MarketFrame`] whose day
//! index is shared by every downstream module. Agent states are log-return
//! windows cut from the frame by [`window_state`], with a synthetic cash row
//! at index 0 so portfolio vectors and states share their asset indexing.
//!
//! Frames can be cached to disk as self-describing JSON with a content hash;
//! reloading verifies the hash so silently corrupted caches are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::Scalar;

/// Version tag written into frame caches; bump on breaking layout changes.
const FRAME_CACHE_VERSION: u32 = 1;

/// Errors produced by the market-data layer.
#[derive(Debug, Error)]
pub enum MarketError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path} is missing required column '{column}'")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{symbol} row {row}: {message}")]
    Parse { symbol: String, row: usize, message: String },
    #[error("{symbol} row {row}: invalid bar: {message}")]
    InvalidBar { symbol: String, row: usize, message: String },
    #[error("{symbol} row {row}: dates must be strictly increasing")]
    NonMonotonicDates { symbol: String, row: usize },
    #[error("{symbol}: first row has missing values; nothing to fill from")]
    MissingFirstRow { symbol: String },
    #[error("{symbol}: series is empty")]
    EmptySeries { symbol: String },
    #[error("alignment produced {days} common day(s); need at least {needed}")]
    InsufficientOverlap { days: usize, needed: usize },
    #[error("alignment requires at least one asset series")]
    NoAssets,
    #[error("frame cache {path} has version {found}, expected {expected}")]
    CacheVersion { path: PathBuf, found: u32, expected: u32 },
    #[error("frame cache {path} failed its content-hash check (corrupted file)")]
    HashMismatch { path: PathBuf },
    #[error("frame cache {path} is not valid JSON: {source}")]
    CacheFormat {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("state window needs day index >= {needed}, got {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("invalid state window: {message}")]
    InvalidWindow { message: String },
}

/// One daily OHLC observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: Scalar,
    pub high: Scalar,
    pub low: Scalar,
    pub close: Scalar,
}

impl Bar {
    /// Checks positivity, finiteness, and OHLC consistency.
    fn validate(&self) -> Result<(), String> {
        for (name, v) in
            [("open", self.open), ("high", self.high), ("low", self.low), ("close", self.close)]
        {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
            if v <= 0.0 {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.low > self.high {
            return Err(format!("low {} exceeds high {}", self.low, self.high));
        }
        for (name, v) in [("open", self.open), ("close", self.close)] {
            if v < self.low || v > self.high {
                return Err(format!("{name} {v} outside [low, high] = [{}, {}]", self.low, self.high));
            }
        }
        Ok(())
    }
}

/// A single product's validated daily series, dates strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSeries {
    pub symbol: String,
    pub bars: Vec<Bar>,
}

impl AssetSeries {
    /// Builds a series from raw bars, enforcing the per-bar and ordering
    /// invariants. Row numbers in errors are 1-based data rows.
    pub fn from_bars(symbol: impl Into<String>, bars: Vec<Bar>) -> Result<Self, MarketError> {
        let symbol = symbol.into();
        if bars.is_empty() {
            return Err(MarketError::EmptySeries { symbol });
        }
        for (i, bar) in bars.iter().enumerate() {
            bar.validate().map_err(|message| MarketError::InvalidBar {
                symbol: symbol.clone(),
                row: i + 1,
                message,
            })?;
            if i > 0 && bar.date <= bars[i - 1].date {
                return Err(MarketError::NonMonotonicDates { symbol, row: i + 1 });
            }
        }
        Ok(Self { symbol, bars })
    }
}

/// Column layout resolved from a CSV header.
struct HeaderMap {
    date: usize,
    open: usize,
    high: usize,
    low: usize,
    close: usize,
}

impl HeaderMap {
    fn resolve(path: &Path, headers: &csv::StringRecord) -> Result<Self, MarketError> {
        let find = |name: &str| -> Result<usize, MarketError> {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| MarketError::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
        };
        Ok(Self {
            date: find("Date")?,
            open: find("Open")?,
            high: find("High")?,
            low: find("Low")?,
            close: find("Close")?,
        })
    }
}

/// True when a CSV cell should be treated as absent.
fn cell_is_missing(cell: Option<&str>) -> bool {
    match cell {
        None => true,
        Some(s) => {
            let t = s.trim();
            t.is_empty()
                || t.eq_ignore_ascii_case("null")
                || t.eq_ignore_ascii_case("nan")
                || t.eq_ignore_ascii_case("na")
        }
    }
}

/// Loads and validates one product's OHLC CSV.
///
/// Rows with missing price cells become flat bars at the previous close
/// (no interpolation); a missing first row is an error. Extra columns are
/// ignored and the header is matched case-insensitively.
pub fn load_csv(path: &Path, symbol: &str) -> Result<AssetSeries, MarketError> {
    let file = std::fs::File::open(path)
        .map_err(|source| MarketError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| MarketError::Csv { path: path.to_path_buf(), source })?
        .clone();
    let cols = HeaderMap::resolve(path, &headers)?;

    let mut bars: Vec<Bar> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| MarketError::Csv { path: path.to_path_buf(), source })?;
        let parse_err = |message: String| MarketError::Parse {
            symbol: symbol.to_string(),
            row,
            message,
        };

        let date_cell = record.get(cols.date);
        if cell_is_missing(date_cell) {
            return Err(parse_err("missing date".into()));
        }
        let date = NaiveDate::parse_from_str(date_cell.unwrap().trim(), "%Y-%m-%d")
            .map_err(|e| parse_err(format!("bad date '{}': {e}", date_cell.unwrap().trim())))?;

        let price_cells =
            [record.get(cols.open), record.get(cols.high), record.get(cols.low), record.get(cols.close)];
        let bar = if price_cells.iter().any(|c| cell_is_missing(*c)) {
            // Forward-fill: a flat bar at the previous close.
            let prev = bars.last().ok_or(MarketError::MissingFirstRow {
                symbol: symbol.to_string(),
            })?;
            Bar { date, open: prev.close, high: prev.close, low: prev.close, close: prev.close }
        } else {
            let mut vals = [0.0; 4];
            for (k, cell) in price_cells.iter().enumerate() {
                let text = cell.unwrap().trim();
                vals[k] = text
                    .parse::<Scalar>()
                    .map_err(|e| parse_err(format!("bad number '{text}': {e}")))?;
            }
            Bar { date, open: vals[0], high: vals[1], low: vals[2], close: vals[3] }
        };
        bars.push(bar);
    }
    AssetSeries::from_bars(symbol, bars)
}

/// Aligned multi-asset market history: `m` assets over a shared calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketFrame {
    symbols: Vec<String>,
    dates: Vec<NaiveDate>,
    /// `bars[asset][day]`, with `asset` in `0..m` (no cash entry here; cash
    /// is synthesized where needed so portfolio index `i` maps to asset
    /// `i - 1`).
    bars: Vec<Vec<Bar>>,
}

impl MarketFrame {
    /// Number of risky assets `m`.
    pub fn num_assets(&self) -> usize {
        self.symbols.len()
    }

    /// Total number of aligned trading days.
    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.dates[day]
    }

    /// Bar of `asset` (0-based, cash excluded) on `day`.
    pub fn bar(&self, asset: usize, day: usize) -> &Bar {
        &self.bars[asset][day]
    }

    pub fn close(&self, asset: usize, day: usize) -> Scalar {
        self.bars[asset][day].close
    }

    /// Close prices of one asset over all days.
    pub fn closes(&self, asset: usize) -> Vec<Scalar> {
        self.bars[asset].iter().map(|b| b.close).collect()
    }
}

/// Aligns several validated series onto the intersection of their calendars.
///
/// Days absent from any series are dropped for every series. Requires at
/// least one asset and at least `min_days` common days (callers pass their
/// own floor; the engine itself needs `window + 2`).
pub fn align(series: Vec<AssetSeries>, min_days: usize) -> Result<MarketFrame, MarketError> {
    if series.is_empty() {
        return Err(MarketError::NoAssets);
    }
    let mut common: BTreeSet<NaiveDate> = series[0].bars.iter().map(|b| b.date).collect();
    for s in &series[1..] {
        let dates: BTreeSet<NaiveDate> = s.bars.iter().map(|b| b.date).collect();
        common = common.intersection(&dates).copied().collect();
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    if dates.len() < min_days.max(1) {
        return Err(MarketError::InsufficientOverlap { days: dates.len(), needed: min_days.max(1) });
    }

    let mut bars = Vec::with_capacity(series.len());
    let mut symbols = Vec::with_capacity(series.len());
    for s in series {
        let keep: Vec<Bar> = s.bars.iter().filter(|b| dates.binary_search(&b.date).is_ok()).copied().collect();
        debug_assert_eq!(keep.len(), dates.len());
        symbols.push(s.symbol);
        bars.push(keep);
    }
    Ok(MarketFrame { symbols, dates, bars })
}

/// Price series used to build return matrices.
pub enum PriceBasis<'a> {
    /// Daily close prices from the frame (the default basis for states).
    Close,
    /// Caller-provided positive price matrix, `m x num_days` (e.g. an
    /// execution-price series).
    Custom(&'a Matrix<Scalar>),
}

/// Builds the `(m + 1) x (num_days - 1)` log-return matrix.
///
/// Row 0 is the cash row, constant at `ln(1 + risk_free)` per day; row `i`
/// holds `ln(p[i-1, t+1] / p[i-1, t])`, so column `t` is the return realized
/// on day `t + 1`.
pub fn log_return_matrix(
    frame: &MarketFrame,
    basis: PriceBasis<'_>,
    risk_free: Scalar,
) -> Matrix<Scalar> {
    let m = frame.num_assets();
    let days = frame.num_days();
    assert!(days >= 2, "need at least two days for returns");
    let price = |asset: usize, day: usize| -> Scalar {
        match &basis {
            PriceBasis::Close => frame.close(asset, day),
            PriceBasis::Custom(p) => p.get(asset, day),
        }
    };
    let mut out = Matrix::zeros(m + 1, days - 1);
    let cash = (1.0 + risk_free).ln();
    for t in 0..days - 1 {
        out.set(0, t, cash);
        for a in 0..m {
            out.set(a + 1, t, (price(a, t + 1) / price(a, t)).ln());
        }
    }
    out
}

/// Log-return window handed to the agents: `(m + 1) x window`, column
/// `window - 1` being the return column at `as_of`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    pub values: Matrix<Scalar>,
    /// Return-column index of the newest column.
    pub as_of: usize,
}

/// Cuts the state window ending at return column `as_of` (inclusive).
///
/// Requires `window >= 1` and enough history: `as_of >= window - 1`.
pub fn window_state(
    returns: &Matrix<Scalar>,
    as_of: usize,
    window: usize,
) -> Result<StateTensor, MarketError> {
    if window == 0 {
        return Err(MarketError::InvalidWindow { message: "window must be >= 1".into() });
    }
    if as_of >= returns.cols() {
        return Err(MarketError::InvalidWindow {
            message: format!("as_of {} beyond last return column {}", as_of, returns.cols() - 1),
        });
    }
    if as_of + 1 < window {
        return Err(MarketError::InsufficientHistory { needed: window - 1, got: as_of });
    }
    let values = returns.col_block(as_of + 1 - window, as_of + 1);
    Ok(StateTensor { values, as_of })
}

/// On-disk frame cache: version, content hash, then the frame itself.
#[derive(Serialize, Deserialize)]
struct FrameCache {
    version: u32,
    content_hash: String,
    frame: MarketFrame,
}

/// Hex SHA-256 over the frame's canonical JSON encoding.
pub fn frame_content_hash(frame: &MarketFrame) -> String {
    let bytes = serde_json::to_vec(frame).expect("frame serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the frame cache (versioned JSON with content hash).
pub fn save_frame(frame: &MarketFrame, path: &Path) -> Result<(), MarketError> {
    let cache = FrameCache {
        version: FRAME_CACHE_VERSION,
        content_hash: frame_content_hash(frame),
        frame: frame.clone(),
    };
    let bytes = serde_json::to_vec(&cache).expect("cache serializes");
    std::fs::write(path, bytes)
        .map_err(|source| MarketError::Io { path: path.to_path_buf(), source })
}

/// Reads a frame cache back, verifying version and content hash.
pub fn load_frame(path: &Path) -> Result<MarketFrame, MarketError> {
    let bytes = std::fs::read(path)
        .map_err(|source| MarketError::Io { path: path.to_path_buf(), source })?;
    let cache: FrameCache = serde_json::from_slice(&bytes)
        .map_err(|source| MarketError::CacheFormat { path: path.to_path_buf(), source })?;
    if cache.version != FRAME_CACHE_VERSION {
        return Err(MarketError::CacheVersion {
            path: path.to_path_buf(),
            found: cache.version,
            expected: FRAME_CACHE_VERSION,
        });
    }
    if frame_content_hash(&cache.frame) != cache.content_hash {
        return Err(MarketError::HashMismatch { path: path.to_path_buf() });
    }
    Ok(cache.frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn flat_bar(d: &str, px: Scalar) -> Bar {
        Bar { date: date(d), open: px, high: px, low: px, close: px }
    }

    fn write_csv(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn load_csv_parses_and_ignores_extra_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            &dir,
            "fx.csv",
            "Date,Open,High,Low,Close,Adj Close,Volume\n\
             2020-01-01,1.0,1.2,0.9,1.1,9.9,123\n\
             2020-01-02,1.1,1.3,1.0,1.2,9.9,456\n",
        );
        let s = load_csv(&path, "FX").unwrap();
        assert_eq!(s.bars.len(), 2);
        assert_eq!(s.bars[1].close, 1.2);
        assert_eq!(s.bars[0].date, date("2020-01-01"));
    }

    #[test]
    fn load_csv_forward_fills_missing_rows_as_flat_bars() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(
            &dir,
            "fx.csv",
            "Date,Open,High,Low,Close\n\
             2020-01-01,1.0,1.2,0.9,1.1\n\
             2020-01-02,null,,null,\n\
             2020-01-03,1.2,1.4,1.1,1.3\n",
        );
        let s = load_csv(&path, "FX").unwrap();
        let filled = s.bars[1];
        assert_eq!((filled.open, filled.high, filled.low, filled.close), (1.1, 1.1, 1.1, 1.1));
    }

    #[test]
    fn load_csv_rejects_missing_first_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "fx.csv", "Date,Open,High,Low,Close\n2020-01-01,,,,\n");
        assert!(matches!(load_csv(&path, "FX"), Err(MarketError::MissingFirstRow { .. })));
    }

    #[test]
    fn load_csv_reports_bad_bars_with_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        // Row 2: high below low.
        let path = write_csv(
            &dir,
            "fx.csv",
            "Date,Open,High,Low,Close\n\
             2020-01-01,1.0,1.2,0.9,1.1\n\
             2020-01-02,1.0,0.8,0.9,0.85\n",
        );
        match load_csv(&path, "FX") {
            Err(MarketError::InvalidBar { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected InvalidBar, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_rejects_nonpositive_and_nonmonotonic() {
        let dir = tempfile::tempdir().unwrap();
        let bad_price = write_csv(
            &dir,
            "a.csv",
            "Date,Open,High,Low,Close\n2020-01-01,1.0,1.0,-1.0,1.0\n",
        );
        assert!(matches!(load_csv(&bad_price, "A"), Err(MarketError::InvalidBar { .. })));

        let bad_dates = write_csv(
            &dir,
            "b.csv",
            "Date,Open,High,Low,Close\n\
             2020-01-02,1.0,1.0,1.0,1.0\n\
             2020-01-01,1.0,1.0,1.0,1.0\n",
        );
        assert!(matches!(load_csv(&bad_dates, "B"), Err(MarketError::NonMonotonicDates { row: 2, .. })));
    }

    #[test]
    fn load_csv_requires_header_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_csv(&dir, "fx.csv", "Date,Open,High,Close\n2020-01-01,1,1,1\n");
        match load_csv(&path, "FX") {
            Err(MarketError::MissingColumn { column, .. }) => assert_eq!(column, "Low"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn align_keeps_only_common_dates() {
        let a = AssetSeries::from_bars(
            "A",
            vec![flat_bar("2020-01-01", 1.0), flat_bar("2020-01-02", 2.0), flat_bar("2020-01-03", 3.0)],
        )
        .unwrap();
        let b = AssetSeries::from_bars(
            "B",
            vec![flat_bar("2020-01-02", 5.0), flat_bar("2020-01-03", 6.0), flat_bar("2020-01-04", 7.0)],
        )
        .unwrap();
        let frame = align(vec![a, b], 2).unwrap();
        assert_eq!(frame.num_days(), 2);
        assert_eq!(frame.dates(), &[date("2020-01-02"), date("2020-01-03")]);
        assert_eq!(frame.close(0, 0), 2.0);
        assert_eq!(frame.close(1, 1), 6.0);
    }

    #[test]
    fn align_reports_insufficient_overlap() {
        let a = AssetSeries::from_bars("A", vec![flat_bar("2020-01-01", 1.0)]).unwrap();
        let b = AssetSeries::from_bars("B", vec![flat_bar("2020-02-01", 1.0)]).unwrap();
        assert!(matches!(
            align(vec![a, b], 1),
            Err(MarketError::InsufficientOverlap { days: 0, .. })
        ));
    }

    #[test]
    fn log_returns_have_constant_cash_row_and_zero_flat_rows() {
        let a = AssetSeries::from_bars(
            "A",
            vec![flat_bar("2020-01-01", 100.0), flat_bar("2020-01-02", 110.0), flat_bar("2020-01-03", 110.0)],
        )
        .unwrap();
        let frame = align(vec![a], 3).unwrap();
        let rf = 0.0001;
        let r = log_return_matrix(&frame, PriceBasis::Close, rf);
        assert_eq!((r.rows(), r.cols()), (2, 2));
        // Cash row: ln(1 + rf) everywhere.
        let cash = (1.0 + rf).ln();
        assert_eq!(r.get(0, 0), cash);
        assert_eq!(r.get(0, 1), cash);
        // Asset row: ln(1.1) then 0 for the flat day.
        assert!((r.get(1, 0) - (1.1f64).ln()).abs() < 1e-15);
        assert_eq!(r.get(1, 1), 0.0);
    }

    #[test]
    fn window_state_shape_and_alignment() {
        // 5 assets + cash over 6 return columns; window 3 ending at column 4.
        let m = 5;
        let mut returns = Matrix::zeros(m + 1, 6);
        for r in 0..m + 1 {
            for c in 0..6 {
                returns.set(r, c, (r * 10 + c) as Scalar);
            }
        }
        let st = window_state(&returns, 4, 3).unwrap();
        assert_eq!((st.values.rows(), st.values.cols()), (6, 3));
        // Newest column of the window is return column 4.
        assert_eq!(st.values.get(2, 2), returns.get(2, 4));
        assert_eq!(st.values.get(0, 0), returns.get(0, 2));
    }

    #[test]
    fn window_state_rejects_short_history() {
        let returns = Matrix::zeros(3, 5);
        assert!(matches!(
            window_state(&returns, 1, 3),
            Err(MarketError::InsufficientHistory { .. })
        ));
        assert!(window_state(&returns, 2, 3).is_ok());
        assert!(matches!(window_state(&returns, 9, 3), Err(MarketError::InvalidWindow { .. })));
    }

    #[test]
    fn frame_cache_round_trips_and_detects_corruption() {
        let a = AssetSeries::from_bars(
            "A",
            vec![flat_bar("2020-01-01", 1.0 / 3.0), flat_bar("2020-01-02", 2.0 / 7.0)],
        )
        .unwrap();
        let frame = align(vec![a], 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.json");
        save_frame(&frame, &path).unwrap();
        let loaded = load_frame(&path).unwrap();
        assert_eq!(loaded, frame);

        // Flip one digit inside a price and the hash check must fire.
        let text = std::fs::read_to_string(&path).unwrap();
        let corrupted = text.replacen("0.3333333333333333", "0.3333333333333334", 1);
        assert_ne!(text, corrupted, "corruption edit must apply");
        std::fs::write(&path, corrupted).unwrap();
        assert!(matches!(load_frame(&path), Err(MarketError::HashMismatch { .. })));
    }

    proptest! {
        /// Cache serialization round-trips bit-exactly for arbitrary frames.
        #[test]
        fn frame_cache_round_trip_is_bit_exact(
            seeds in proptest::collection::vec(1.0f64..1000.0, 2..5),
            days in 2usize..8,
        ) {
            let mut series = Vec::new();
            for (ai, s) in seeds.iter().enumerate() {
                let mut bars = Vec::new();
                for d in 0..days {
                    // Irregular but valid prices, exercising f64 round-trip.
                    let px = s * (1.0 + 0.01 * d as f64) / 3.0;
                    let dt = date("2020-01-01") + chrono::Days::new(d as u64);
                    bars.push(Bar { date: dt, open: px * 0.999, high: px * 1.002, low: px * 0.997, close: px });
                }
                series.push(AssetSeries::from_bars(format!("A{ai}"), bars).unwrap());
            }
            let frame = align(series, 2).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("frame.json");
            save_frame(&frame, &path).unwrap();
            let loaded = load_frame(&path).unwrap();
            // Bit-exact equality of every float.
            prop_assert_eq!(loaded, frame);
        }
    }
}
