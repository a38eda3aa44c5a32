//! Performance metrics and comparison reports.
//!
//! Three headline numbers summarize a value series: the annualized return
//! (in two conventions — a linear rate and an annualized growth factor,
//! labeled separately because they disagree away from zero), the annualized
//! Sharpe ratio over daily simple returns, and the maximum drawdown. On top
//! of those, [`report`] turns a set of named ledgers into a comparison table
//! (CSV + JSON) and self-contained SVG line plots, all with deterministic
//! byte output: stable row ordering and fixed 6-significant-digit number
//! formatting.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::portfolio::Ledger;
use crate::scalar::Real;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("value series has {len} points; need at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("value series must be positive; entry {index} is {value}")]
    NonPositive { index: usize, value: f64 },
    #[error("Sharpe ratio is undefined: daily excess returns have zero variance")]
    ZeroVariance,
    #[error("no ledgers to report on")]
    NoLedgers,
    #[error("ledgers share fewer than 2 common dates; nothing to compare")]
    NoOverlap,
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn check_series<R: Real>(values: &[R], need: usize) -> Result<(), MetricsError> {
    if values.len() < need {
        return Err(MetricsError::TooShort { len: values.len(), need });
    }
    for (i, v) in values.iter().enumerate() {
        if !(*v > R::zero()) || !v.is_finite() {
            return Err(MetricsError::NonPositive { index: i, value: v.widen() });
        }
    }
    Ok(())
}

/// Annualized return in both conventions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnualizedReturn<R> {
    /// Linear rate: `((V_f - V_i) / V_i) * (T_year / T_all)`.
    pub rate: R,
    /// Geometric: `(V_f / V_i)^(T_year / T_all)`.
    pub growth_factor: R,
}

/// Annualized return of a daily value series with `T_all = len - 1` elapsed
/// days and `t_year` trading days per year.
pub fn arr<R: Real>(values: &[R], t_year: R) -> Result<AnnualizedReturn<R>, MetricsError> {
    check_series(values, 2)?;
    let vi = values[0];
    let vf = values[values.len() - 1];
    let t_all = R::of_usize(values.len() - 1);
    let years_inv = t_year / t_all;
    Ok(AnnualizedReturn {
        rate: (vf - vi) / vi * years_inv,
        growth_factor: (vf / vi).powf(years_inv),
    })
}

/// Annualized Sharpe ratio over daily simple returns, with an annual
/// risk-free rate spread evenly across `t_year` days. Sample (n-1) standard
/// deviation; zero variance is an error, not a zero.
pub fn asr<R: Real>(values: &[R], rf_annual: R, t_year: R) -> Result<R, MetricsError> {
    check_series(values, 4)?; // at least 3 daily returns
    let rf_daily = rf_annual / t_year;
    let excess: Vec<R> = values
        .windows(2)
        .map(|w| w[1] / w[0] - R::one() - rf_daily)
        .collect();
    let n = R::of_usize(excess.len());
    let mean = excess.iter().fold(R::zero(), |a, &v| a + v) / n;
    let var = excess.iter().fold(R::zero(), |a, &v| a + (v - mean) * (v - mean))
        / (n - R::one());
    if var <= R::zero() || !var.is_finite() {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(mean / var.sqrt() * t_year.sqrt())
}

/// Maximum drawdown as a fraction of the running peak, in one pass.
pub fn mdd<R: Real>(values: &[R]) -> Result<R, MetricsError> {
    check_series(values, 1)?;
    let mut peak = values[0];
    let mut worst = R::zero();
    for &v in values {
        if v > peak {
            peak = v;
        }
        let dd = (peak - v) / peak;
        if dd > worst {
            worst = dd;
        }
    }
    Ok(worst)
}

/// Trailing-window annualized Sharpe per day, for plotting. Returns
/// `(day_index, sharpe)` pairs starting at `window`; windows whose returns
/// have zero variance are skipped.
pub fn rolling_sharpe<R: Real>(
    values: &[R],
    window: usize,
    rf_annual: R,
    t_year: R,
) -> Vec<(usize, R)> {
    let mut out = Vec::new();
    if window < 3 || values.len() < window + 1 {
        return out;
    }
    for end in window..values.len() {
        let slice = &values[end - window..=end];
        if let Ok(s) = asr(slice, rf_annual, t_year) {
            out.push((end, s));
        }
    }
    out
}

/// Everything the comparison table holds for one strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub mdd: Scalar,
    pub arr_rate: Scalar,
    pub arr_growth_factor: Scalar,
    /// `None` when the Sharpe ratio is undefined (zero return variance).
    pub asr: Option<Scalar>,
    pub final_value: Scalar,
    /// Number of elapsed days (series length minus one).
    pub days: usize,
}

/// Computes the full summary for one value series.
pub fn summarize(
    values: &[Scalar],
    rf_annual: Scalar,
    t_year: Scalar,
) -> Result<MetricsSummary, MetricsError> {
    let a = arr(values, t_year)?;
    let asr_value = match asr(values, rf_annual, t_year) {
        Ok(s) => Some(s),
        Err(MetricsError::ZeroVariance) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsSummary {
        mdd: mdd(values)?,
        arr_rate: a.rate,
        arr_growth_factor: a.growth_factor,
        asr: asr_value,
        final_value: *values.last().unwrap(),
        days: values.len() - 1,
    })
}

// ---------------------------------------------------------------------------
// Deterministic number formatting
// ---------------------------------------------------------------------------

/// Fixed-significant-digit decimal formatting (reports only; raw artifacts
/// keep full precision).
pub fn fmt_sig(x: Scalar, sig: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        // Treat zero as magnitude 1 so "0" carries the same decimal width.
        return format!("{:.*}", sig - 1, 0.0);
    }
    let exp10 = x.abs().log10().floor() as i32;
    let decimals = sig as i32 - 1 - exp10;
    if decimals >= 0 {
        format!("{:.*}", decimals.min(17) as usize, x)
    } else {
        let p = 10f64.powi(-decimals);
        format!("{:.0}", (x / p).round() * p)
    }
}

fn fmt_opt(x: Option<Scalar>, sig: usize) -> String {
    match x {
        Some(v) => fmt_sig(v, sig),
        None => "NA".to_string(),
    }
}

// ---------------------------------------------------------------------------
// SVG line plots
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(Scalar, Scalar)>,
}

#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a self-contained SVG document (no external assets, deterministic
/// bytes for identical input).
pub fn render_line_plot(plot: &LinePlot) -> String {
    let (w, h) = (800.0, 480.0);
    let (ml, mr, mt, mb) = (78.0, 24.0, 44.0, 56.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &plot.series {
        for &(x, y) in &s.points {
            xs.push(x);
            ys.push(y);
        }
    }
    let (x0, x1) = span(&xs);
    let (mut y0, mut y1) = span(&ys);
    let pad = (y1 - y0) * 0.05;
    y0 -= pad;
    y1 += pad;

    let px = |x: Scalar| ml + (x - x0) / (x1 - x0) * pw;
    let py = |y: Scalar| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        w / 2.0,
        xml_escape(&plot.title)
    ));

    // Grid and ticks.
    for i in 0..=4 {
        let f = i as Scalar / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let xp = px(xv);
        let yp = py(yv);
        out.push_str(&format!(
            "<line x1=\"{xp:.2}\" y1=\"{mt:.2}\" x2=\"{xp:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\"/>\n",
            mt + ph
        ));
        out.push_str(&format!(
            "<line x1=\"{ml:.2}\" y1=\"{yp:.2}\" x2=\"{:.2}\" y2=\"{yp:.2}\" \
             stroke=\"#dddddd\"/>\n",
            ml + pw
        ));
        out.push_str(&format!(
            "<text x=\"{xp:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            mt + ph + 18.0,
            fmt_sig(xv, 4)
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            ml - 8.0,
            yp + 4.0,
            fmt_sig(yv, 4)
        ));
    }
    // Axes.
    out.push_str(&format!(
        "<rect x=\"{ml:.2}\" y=\"{mt:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" \
         fill=\"none\" stroke=\"#333333\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 14.0,
        xml_escape(&plot.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(&plot.y_label)
    ));

    // Series lines + legend.
    for (i, s) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.points.is_empty() {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" \
                 stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        let ly = mt + 14.0 + 18.0 * i as Scalar;
        let lx = ml + pw - 150.0;
        out.push_str(&format!(
            "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            ly - 4.0,
            lx + 22.0,
            ly - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>\n",
            lx + 28.0,
            xml_escape(&s.name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn span(vals: &[Scalar]) -> (Scalar, Scalar) {
    let mut lo = Scalar::INFINITY;
    let mut hi = Scalar::NEG_INFINITY;
    for &v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

pub fn write_svg(path: &Path, plot: &LinePlot) -> Result<(), MetricsError> {
    let io = |source| MetricsError::Io { path: path.to_path_buf(), source };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(render_line_plot(plot).as_bytes())
        .map_err(|source| MetricsError::Io { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------------------
// Comparison report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub t_year: Scalar,
    pub rf_annual: Scalar,
    pub rolling_window: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { t_year: 252.0, rf_annual: 0.0, rolling_window: 63 }
    }
}

#[derive(Debug, Serialize)]
pub struct ReportRow {
    pub strategy: String,
    #[serde(flatten)]
    pub summary: MetricsSummary,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub t_year: Scalar,
    pub rf_annual: Scalar,
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

/// Display order: the agent first, then the fixed comparison strategies,
/// then anything else alphabetically.
fn strategy_rank(name: &str) -> (usize, String) {
    const ORDER: [&str; 7] = ["ours", "agent", "ddpg", "ons", "ucrp", "winner", "best_asset"];
    match ORDER.iter().position(|&k| k == name) {
        Some(i) => (i, String::new()),
        None => (ORDER.len(), name.to_string()),
    }
}

/// Lowercases and maps anything outside `[a-z0-9_-]` to `_` for file names.
pub fn sanitize_name(name: &str) -> String {
    name.to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Builds the comparison table and plots for a set of named ledgers and
/// writes `metrics.csv`, `metrics.json`, `cumulative_value.svg`, and
/// `rolling_sharpe.svg` into `out_dir`.
///
/// Ledgers with mismatched date ranges are aligned on the intersection of
/// their dates; that alignment is recorded as a warning, not an error.
pub fn report(
    ledgers: &[(String, Ledger)],
    out_dir: &Path,
    opts: &ReportOptions,
) -> Result<Report, MetricsError> {
    if ledgers.is_empty() {
        return Err(MetricsError::NoLedgers);
    }

    // Date alignment.
    let mut common: BTreeSet<NaiveDate> = ledgers[0].1.date_series().into_iter().collect();
    for (_, ledger) in &ledgers[1..] {
        let dates: BTreeSet<NaiveDate> = ledger.date_series().into_iter().collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.len() < 2 {
        return Err(MetricsError::NoOverlap);
    }
    let mut warnings = Vec::new();
    let mut aligned: Vec<(String, Vec<Scalar>)> = Vec::new();
    for (name, ledger) in ledgers {
        let dates = ledger.date_series();
        let values = ledger.value_series();
        if dates.len() != common.len() {
            warnings.push(format!(
                "{name}: {} dates trimmed to the common range of {}",
                dates.len(),
                common.len()
            ));
        }
        let series: Vec<Scalar> = dates
            .iter()
            .zip(&values)
            .filter(|(d, _)| common.contains(d))
            .map(|(_, &v)| v)
            .collect();
        aligned.push((name.clone(), series));
    }

    // Stable row order.
    aligned.sort_by(|a, b| strategy_rank(&a.0).cmp(&strategy_rank(&b.0)));

    let mut rows = Vec::new();
    for (name, series) in &aligned {
        rows.push(ReportRow {
            strategy: name.clone(),
            summary: summarize(series, opts.rf_annual, opts.t_year)?,
        });
    }

    std::fs::create_dir_all(out_dir)
        .map_err(|source| MetricsError::Io { path: out_dir.to_path_buf(), source })?;
    let mut files = Vec::new();

    // CSV table: columns follow MDD, ARR, ASR.
    let csv_path = out_dir.join("metrics.csv");
    {
        let mut text =
            String::from("strategy,mdd,arr_rate,arr_growth_factor,asr,final_value,days\n");
        for row in &rows {
            let s = &row.summary;
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.strategy,
                fmt_sig(s.mdd, 6),
                fmt_sig(s.arr_rate, 6),
                fmt_sig(s.arr_growth_factor, 6),
                fmt_opt(s.asr, 6),
                fmt_sig(s.final_value, 6),
                s.days
            ));
        }
        std::fs::write(&csv_path, text)
            .map_err(|source| MetricsError::Io { path: csv_path.clone(), source })?;
        files.push(csv_path);
    }

    // Plots.
    let cum_plot = LinePlot {
        title: "Cumulative portfolio value".to_string(),
        x_label: "trading day".to_string(),
        y_label: "value".to_string(),
        series: aligned
            .iter()
            .map(|(name, series)| Series {
                name: name.clone(),
                points: series
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (i as Scalar, v))
                    .collect(),
            })
            .collect(),
    };
    let cum_path = out_dir.join("cumulative_value.svg");
    write_svg(&cum_path, &cum_plot)?;
    files.push(cum_path);

    let sharpe_plot = LinePlot {
        title: format!("Rolling {}-day Sharpe (annualized)", opts.rolling_window),
        x_label: "trading day".to_string(),
        y_label: "sharpe".to_string(),
        series: aligned
            .iter()
            .map(|(name, series)| Series {
                name: name.clone(),
                points: rolling_sharpe(series, opts.rolling_window, opts.rf_annual, opts.t_year)
                    .into_iter()
                    .map(|(i, s)| (i as Scalar, s))
                    .collect(),
            })
            .collect(),
    };
    let sharpe_path = out_dir.join("rolling_sharpe.svg");
    write_svg(&sharpe_path, &sharpe_plot)?;
    files.push(sharpe_path);

    let report = Report {
        t_year: opts.t_year,
        rf_annual: opts.rf_annual,
        rows,
        warnings,
        files,
    };

    // JSON table (full precision, deterministic field order).
    let json_path = out_dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&json_path, json)
        .map_err(|source| MetricsError::Io { path: json_path.clone(), source })?;

    let mut report = report;
    report.files.push(json_path);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::LedgerEntry;
    use proptest::prelude::*;

    fn date(i: usize) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(i as u64)
    }

    fn ledger_from_values(values: &[Scalar]) -> Ledger {
        Ledger {
            start_date: date(0),
            start_day: 0,
            initial_value: values[0],
            initial_weights: vec![1.0, 0.0],
            initial_prices: vec![1.0],
            rows: values[1..]
                .iter()
                .enumerate()
                .map(|(i, &v)| LedgerEntry {
                    day: i + 1,
                    date: date(i + 1),
                    drifted: vec![1.0, 0.0],
                    target: vec![1.0, 0.0],
                    exec_prices: vec![1.0],
                    cost: 0.0,
                    gross_return: 1.0,
                    value: v,
                    signal: "NA".to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn arr_flat_series_is_zero_rate_unit_factor() {
        let v = vec![100.0; 10];
        let a = arr(&v, 252.0).unwrap();
        assert_eq!(a.rate, 0.0);
        assert_eq!(a.growth_factor, 1.0);
    }

    #[test]
    fn arr_one_year_ten_percent() {
        // 253 points = 252 elapsed days = exactly one year.
        let mut v = vec![100.0];
        for i in 1..=252 {
            v.push(100.0 + 10.0 * i as f64 / 252.0);
        }
        let a = arr(&v, 252.0).unwrap();
        assert!((a.rate - 0.10).abs() < 1e-12);
        assert!((a.growth_factor - 1.10).abs() < 1e-12);
    }

    #[test]
    fn arr_rate_is_linear_in_the_gain() {
        let base = 200.0f64;
        let small = arr(&[base, base + 3.0], 252.0).unwrap().rate;
        let big = arr(&[base, base + 6.0], 252.0).unwrap().rate;
        assert!((big - 2.0 * small).abs() < 1e-12);
    }

    #[test]
    fn asr_zero_variance_is_an_error() {
        // Constant positive daily return: every excess return identical.
        let mut v = vec![100.0];
        for _ in 0..20 {
            v.push(v.last().unwrap() * 1.01);
        }
        assert!(matches!(asr(&v, 0.0, 252.0), Err(MetricsError::ZeroVariance)));
    }

    #[test]
    fn asr_alternating_returns_near_zero() {
        // +1% then -1% compounded for 252 days: mean daily return is
        // slightly negative-of-nothing; the annualized ratio stays small.
        let mut v = vec![100.0f64];
        for i in 0..252 {
            let r = if i % 2 == 0 { 1.01 } else { 0.99 };
            v.push(v.last().unwrap() * r);
        }
        let s: f64 = asr(&v, 0.0, 252.0).unwrap();
        assert!(s.abs() < 0.05, "asr = {s}");
    }

    #[test]
    fn asr_sign_matches_mean_excess() {
        let gain = vec![100.0, 101.0, 100.5, 102.0, 103.0];
        let lose = vec![100.0, 99.0, 99.5, 98.0, 97.0];
        assert!(asr(&gain, 0.0, 252.0).unwrap() > 0.0);
        assert!(asr(&lose, 0.0, 252.0).unwrap() < 0.0);
    }

    #[test]
    fn mdd_known_values() {
        assert_eq!(mdd(&[100.0, 101.0, 102.0, 103.0]).unwrap(), 0.0);
        assert_eq!(mdd(&[100.0, 80.0, 120.0]).unwrap(), 0.20);
        assert_eq!(mdd(&[100.0, 120.0, 60.0, 90.0]).unwrap(), 0.50);
    }

    proptest! {
        #[test]
        fn mdd_is_scale_invariant(
            values in proptest::collection::vec(1.0f64..1000.0, 2..40),
            scale in 0.1f64..100.0,
        ) {
            let base = mdd(&values).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let m2 = mdd(&scaled).unwrap();
            prop_assert!((base - m2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }

    #[test]
    fn fmt_sig_six_significant_digits() {
        assert_eq!(fmt_sig(1.2104, 6), "1.21040");
        assert_eq!(fmt_sig(0.017695, 6), "0.0176950");
        assert_eq!(fmt_sig(0.0, 6), "0.00000");
        assert_eq!(fmt_sig(-2.5, 6), "-2.50000");
        assert_eq!(fmt_sig(123456789.0, 6), "123457000");
    }

    #[test]
    fn rolling_sharpe_skips_short_series() {
        assert!(rolling_sharpe(&[100.0, 101.0], 63, 0.0, 252.0).is_empty());
    }

    #[test]
    fn report_single_ledger_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let ledger = ledger_from_values(&[100.0, 102.0, 101.0, 104.0, 103.0]);
        let rep = report(
            &[("ours".to_string(), ledger)],
            dir.path(),
            &ReportOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].strategy, "ours");
        assert!(dir.path().join("metrics.csv").exists());
        assert!(dir.path().join("metrics.json").exists());
        assert!(dir.path().join("cumulative_value.svg").exists());
        assert!(dir.path().join("rolling_sharpe.svg").exists());
        // Both return conventions present and labeled.
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(csv.starts_with("strategy,mdd,arr_rate,arr_growth_factor,asr,"));
    }

    #[test]
    fn report_identical_ledgers_identical_rows() {
        let dir = tempfile::tempdir().unwrap();
        let values = [100.0, 102.0, 99.0, 105.0, 104.0];
        let rep = report(
            &[
                ("alpha".to_string(), ledger_from_values(&values)),
                ("beta".to_string(), ledger_from_values(&values)),
            ],
            dir.path(),
            &ReportOptions::default(),
        )
        .unwrap();
        let a = &rep.rows[0].summary;
        let b = &rep.rows[1].summary;
        assert_eq!(a.mdd, b.mdd);
        assert_eq!(a.arr_rate, b.arr_rate);
        assert_eq!(a.asr, b.asr);
    }

    #[test]
    fn report_orders_known_strategies_first() {
        let dir = tempfile::tempdir().unwrap();
        let values = [100.0, 101.0, 102.0, 101.5, 103.0];
        let names = ["zeta", "ucrp", "ours", "best_asset", "ddpg"];
        let ledgers: Vec<(String, Ledger)> = names
            .iter()
            .map(|n| (n.to_string(), ledger_from_values(&values)))
            .collect();
        let rep = report(&ledgers, dir.path(), &ReportOptions::default()).unwrap();
        let order: Vec<&str> = rep.rows.iter().map(|r| r.strategy.as_str()).collect();
        assert_eq!(order, vec!["ours", "ddpg", "ucrp", "best_asset", "zeta"]);
    }

    #[test]
    fn report_misaligned_dates_warn_and_intersect() {
        let dir = tempfile::tempdir().unwrap();
        let long = ledger_from_values(&[100.0, 101.0, 102.0, 103.0, 104.0, 105.0]);
        let short = ledger_from_values(&[100.0, 100.5, 101.5, 102.5]);
        let rep = report(
            &[("long".to_string(), long), ("short".to_string(), short)],
            dir.path(),
            &ReportOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.warnings.len(), 1);
        assert!(rep.warnings[0].contains("long"));
        assert_eq!(rep.rows[0].summary.days, 3);
        assert_eq!(rep.rows[1].summary.days, 3);
    }

    #[test]
    fn report_bytes_are_deterministic() {
        let values = [100.0, 103.0, 101.0, 106.0, 108.0];
        let render = || {
            let dir = tempfile::tempdir().unwrap();
            report(
                &[
                    ("ours".to_string(), ledger_from_values(&values)),
                    ("ucrp".to_string(), ledger_from_values(&values)),
                ],
                dir.path(),
                &ReportOptions::default(),
            )
            .unwrap();
            (
                std::fs::read(dir.path().join("metrics.csv")).unwrap(),
                std::fs::read(dir.path().join("metrics.json")).unwrap(),
                std::fs::read(dir.path().join("cumulative_value.svg")).unwrap(),
            )
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn svg_has_one_polyline_per_nonempty_series() {
        let plot = LinePlot {
            title: "t".to_string(),
            x_label: "x".to_string(),
            y_label: "y".to_string(),
            series: vec![
                Series { name: "a".to_string(), points: vec![(0.0, 1.0), (1.0, 2.0)] },
                Series { name: "b & c".to_string(), points: vec![(0.0, 2.0), (1.0, 1.0)] },
            ],
        };
        let svg = render_line_plot(&plot);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b &amp; c"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
