//! Command-line pipeline for the portfolio engine: ingest per-symbol OHLC
//! CSVs into a validated frame cache, compute price-level ladders, train the
//! trading and risk agents, backtest against baselines on the held-out
//! split, and render comparison reports.
//!
//! Conventions shared by every subcommand:
//!
//! - One flat TOML run configuration drives everything; repeated
//!   `--set key=value` flags override file values, and the fully-defaulted
//!   configuration actually used is echoed to `resolved_config.toml` in the
//!   output directory so any run is reproducible from its artifacts alone.
//! - All randomness flows from the single `seed` key, which is recorded in
//!   the run outputs.
//! - The `QUANTFOLIO_OUT_ROOT` environment variable, when set, re-roots the
//!   configured output directory.
//! - Exit codes: 0 success, 1 usage error, 2 data/validation error,
//!   3 runtime/numerical error.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use quantfolio_core::agents::{
    load_checkpoint, save_checkpoint, train_system, AgentError, EncoderSharing, Hyperparams,
    SystemPolicy,
};
use quantfolio_core::baselines::{run_baseline, BaselineConfig, BaselineError, BaselineKind};
use quantfolio_core::env::{run_backtest, train_test_split, EnvConfig, EnvError};
use quantfolio_core::market::{
    align, frame_content_hash, load_csv, load_frame, save_frame, MarketError, MarketFrame,
};
use quantfolio_core::metrics::{
    self, fmt_sig, sanitize_name, summarize, MetricsError, ReportOptions,
};
use quantfolio_core::portfolio::{
    accumulate, read_ledger_csv, write_ledger_csv, Ledger, PortfolioError,
};
use quantfolio_core::qpl::{QplConfig, QplEngine, QplError};
use quantfolio_core::tensor::TensorError;
use quantfolio_core::Scalar;

/// Environment variable that re-roots the configured output directory.
pub const OUT_ROOT_ENV: &str = "QUANTFOLIO_OUT_ROOT";

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

/// Top-level command error, classified by exit code: usage mistakes exit 1,
/// data/validation problems exit 2, runtime/numerical failures exit 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<MarketError> for CliError {
    fn from(e: MarketError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<QplError> for CliError {
    fn from(e: QplError) -> Self {
        match e {
            QplError::InsufficientHistory { .. }
            | QplError::InsufficientObservations { .. }
            | QplError::TooFewBins { .. }
            | QplError::Config { .. } => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PortfolioError> for CliError {
    fn from(e: PortfolioError) -> Self {
        match e {
            PortfolioError::Io { .. } | PortfolioError::Format { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Config { .. } => CliError::Data(e.to_string()),
            EnvError::Market(m) => m.into(),
            EnvError::Qpl(q) => q.into(),
            EnvError::Portfolio(p) => p.into(),
            EnvError::Policy { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::Io { .. } | TensorError::Checkpoint { .. } => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Config { .. } => CliError::Data(e.to_string()),
            AgentError::Tensor(t) => t.into(),
            AgentError::Env(env) => env.into(),
            AgentError::Portfolio(p) => p.into(),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Config { .. }
            | BaselineError::EmptyRange
            | BaselineError::InsufficientHistory { .. } => CliError::Data(e.to_string()),
            BaselineError::Market(m) => m.into(),
            BaselineError::Portfolio(p) => p.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::NoLedgers | MetricsError::NoOverlap => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Flat run configuration. Every key has a default, so an absent file (or an
/// empty one) is a valid configuration; unknown keys are rejected to catch
/// typos. Serialized back out verbatim as the resolved-config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // Data and protocol.
    pub data_dir: String,
    pub symbols: Vec<String>,
    pub split: f64,
    pub out_dir: String,
    pub seed: u64,
    // Trading environment.
    pub commission: Scalar,
    pub gini_eta: Scalar,
    pub risk_free_daily: Scalar,
    pub window: usize,
    pub initial_value: Scalar,
    pub qpl_enabled: bool,
    pub qpl_lookback: usize,
    // Training.
    pub episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_transitions: usize,
    pub noise_start: Scalar,
    pub noise_end: Scalar,
    pub gamma: Scalar,
    pub tau: Scalar,
    pub actor_lr: Scalar,
    pub critic_lr: Scalar,
    pub policy_lr: Scalar,
    pub gru_hidden: usize,
    pub fc_hidden: usize,
    pub standardize_pg: bool,
    pub sharing: EncoderSharing,
}

impl Default for RunConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        let env = EnvConfig::default();
        Self {
            data_dir: "data".into(),
            symbols: Vec::new(),
            split: 0.8,
            out_dir: "out".into(),
            seed: hp.seed,
            commission: env.commission,
            gini_eta: env.gini_eta,
            risk_free_daily: env.risk_free_daily,
            window: env.window,
            initial_value: env.initial_value,
            qpl_enabled: env.qpl_enabled,
            qpl_lookback: env.qpl.lookback,
            episodes: hp.episodes,
            batch_size: hp.batch_size,
            buffer_capacity: hp.buffer_capacity,
            warmup_transitions: hp.warmup_transitions,
            noise_start: hp.noise_start,
            noise_end: hp.noise_end,
            gamma: hp.gamma,
            tau: hp.tau,
            actor_lr: hp.actor_lr,
            critic_lr: hp.critic_lr,
            policy_lr: hp.policy_lr,
            gru_hidden: hp.gru_hidden,
            fc_hidden: hp.fc_hidden,
            standardize_pg: hp.standardize_pg,
            sharing: hp.sharing,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(CliError::Data(format!("split must be in (0, 1), got {}", self.split)));
        }
        Ok(())
    }

    /// Trading-environment view of this configuration.
    pub fn env_config(&self) -> EnvConfig {
        let mut env = EnvConfig::default();
        env.commission = self.commission;
        env.gini_eta = self.gini_eta;
        env.risk_free_daily = self.risk_free_daily;
        env.window = self.window;
        env.initial_value = self.initial_value;
        env.qpl_enabled = self.qpl_enabled;
        env.qpl.lookback = self.qpl_lookback;
        env
    }

    /// Training-hyperparameter view of this configuration.
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            episodes: self.episodes,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            warmup_transitions: self.warmup_transitions,
            noise_start: self.noise_start,
            noise_end: self.noise_end,
            gamma: self.gamma,
            tau: self.tau,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            policy_lr: self.policy_lr,
            gru_hidden: self.gru_hidden,
            fc_hidden: self.fc_hidden,
            standardize_pg: self.standardize_pg,
            sharing: self.sharing,
            seed: self.seed,
        }
    }

    /// Canonical TOML rendering (the resolved-config echo).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("flat config always serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering; recorded in summaries so
    /// artifacts can be traced back to the exact configuration.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Loads the configuration file (defaults when absent) and applies `--set`
/// overrides in order. Each override is `key=value` with a TOML value; bare
/// words are retried as strings so `--set sharing=separate` works unquoted.
pub fn load_run_config(config: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Data(format!("cannot read config {}: {e}", path.display()))
            })?;
            text.parse().map_err(|e| {
                CliError::Data(format!("malformed config {}: {e}", path.display()))
            })?
        }
        None => toml::Table::new(),
    };
    for item in sets {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects KEY=VALUE, got '{item}'"))
        })?;
        let fragment: toml::Table = format!("{key} = {value}")
            .parse()
            .or_else(|_| format!("{key} = \"{value}\"").parse())
            .map_err(|e| CliError::Usage(format!("cannot parse --set {item}: {e}")))?;
        for (k, v) in fragment {
            table.insert(k, v);
        }
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e| CliError::Data(format!("invalid configuration: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Output locations
// ---------------------------------------------------------------------------

fn out_dir_under_root(root: Option<&std::ffi::OsStr>, cfg: &RunConfig) -> PathBuf {
    match root {
        Some(r) if !r.is_empty() => Path::new(r).join(&cfg.out_dir),
        _ => PathBuf::from(&cfg.out_dir),
    }
}

/// Effective output directory: the configured `out_dir`, re-rooted under
/// `QUANTFOLIO_OUT_ROOT` when that variable is set.
pub fn resolve_out_dir(cfg: &RunConfig) -> PathBuf {
    out_dir_under_root(std::env::var_os(OUT_ROOT_ENV).as_deref(), cfg)
}

pub fn frame_cache_path(out: &Path) -> PathBuf {
    out.join("frame_cache.json")
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join("checkpoint.json")
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Creates the output directory and writes the resolved-config echo into it.
fn prepare_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = resolve_out_dir(cfg);
    fs::create_dir_all(&out).map_err(|e| {
        CliError::Runtime(format!("cannot create output directory {}: {e}", out.display()))
    })?;
    write_text(&out.join("resolved_config.toml"), &cfg.to_toml())?;
    Ok(out)
}

fn load_frame_cache(out: &Path) -> Result<MarketFrame, CliError> {
    let cache = frame_cache_path(out);
    if !cache.is_file() {
        return Err(CliError::Data(format!(
            "frame cache not found at {}; run `quantfolio ingest` first",
            cache.display()
        )));
    }
    Ok(load_frame(&cache)?)
}

fn annualized_risk_free(daily: Scalar) -> Scalar {
    (1.0 + daily).powf(252.0) - 1.0
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct IngestOutcome {
    pub cache: PathBuf,
    pub hash: String,
    pub symbols: usize,
    pub days: usize,
}

/// Loads one CSV per configured symbol, aligns them on the intersection of
/// their dates, and writes the hashed frame cache.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestOutcome, CliError> {
    if cfg.symbols.is_empty() {
        return Err(CliError::Data(
            "no symbols configured; pass --symbols or set `symbols` in the config".into(),
        ));
    }
    let out = prepare_out_dir(cfg)?;
    let data_dir = Path::new(&cfg.data_dir);
    let mut series = Vec::with_capacity(cfg.symbols.len());
    for symbol in &cfg.symbols {
        let path = data_dir.join(format!("{symbol}.csv"));
        if !path.is_file() {
            return Err(CliError::Data(format!(
                "missing data file for symbol {symbol}: {}",
                path.display()
            )));
        }
        series.push(load_csv(&path, symbol)?);
    }
    let frame = align(series, cfg.window + 2)?;
    let hash = frame_content_hash(&frame);
    let cache = frame_cache_path(&out);
    save_frame(&frame, &cache)?;
    Ok(IngestOutcome { cache, hash, symbols: frame.num_assets(), days: frame.num_days() })
}

// ---------------------------------------------------------------------------
// qpl
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct QplOutcome {
    pub csv: PathBuf,
    pub rows: usize,
}

/// Computes the price-level ladder for one symbol over an inclusive date
/// range and writes it as CSV. The `anchor` column is the previous close the
/// ladder is built around, kept as a causality audit: every level for day
/// `t` must derive from data strictly before `t`.
pub fn cmd_qpl(
    cfg: &RunConfig,
    symbol: &str,
    start: NaiveDate,
    end: Option<NaiveDate>,
    lookback: Option<usize>,
    levels: Option<usize>,
) -> Result<QplOutcome, CliError> {
    let out = prepare_out_dir(cfg)?;
    let frame = load_frame_cache(&out)?;
    let asset = frame.symbols().iter().position(|s| s == symbol).ok_or_else(|| {
        CliError::Data(format!(
            "symbol {symbol} is not in the frame cache (have: {})",
            frame.symbols().join(", ")
        ))
    })?;
    let end = end.unwrap_or(start);
    if end < start {
        return Err(CliError::Usage(format!("--end {end} is before --date {start}")));
    }
    let day_of = |d: NaiveDate| {
        frame.dates().iter().position(|&x| x == d).ok_or_else(|| {
            CliError::Data(format!("date {d} is not on the frame's date axis"))
        })
    };
    let first = day_of(start)?;
    let last = day_of(end)?;

    let mut qpl_config = QplConfig::default();
    qpl_config.lookback = lookback.unwrap_or(cfg.qpl_lookback);
    if let Some(levels) = levels {
        qpl_config.levels = levels;
    }
    let n_levels = qpl_config.levels;
    let mut engine = QplEngine::new(qpl_config)?;

    let mut csv = String::from("date,anchor");
    for k in 1..=n_levels {
        csv.push_str(&format!(",qpl_m{k}"));
    }
    for k in 1..=n_levels {
        csv.push_str(&format!(",qpl_p{k}"));
    }
    csv.push('\n');
    let mut rows = 0;
    for day in first..=last {
        let ladder = engine.ladder(&frame, asset, day)?;
        csv.push_str(&format!("{},{}", frame.date(day), ladder.anchor));
        for k in 0..n_levels {
            csv.push_str(&format!(",{}", ladder.down[k]));
        }
        for k in 0..n_levels {
            csv.push_str(&format!(",{}", ladder.up[k]));
        }
        csv.push('\n');
        rows += 1;
    }
    let path = out.join(format!("qpl_{}.csv", sanitize_name(symbol)));
    write_text(&path, &csv)?;
    Ok(QplOutcome { csv: path, rows })
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub summary: PathBuf,
    pub episodes: usize,
    /// Calendar days in the training slice (`floor(split * total)`).
    pub train_days: usize,
    /// Tradable training range after warmup.
    pub tradable: Range<usize>,
    pub final_value: Scalar,
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    config_hash: &'a str,
    seed: u64,
    days_total: usize,
    train_days_calendar: usize,
    train_days_tradable: usize,
    warmup: usize,
    episodes: usize,
    final_value: Scalar,
}

/// Trains the trading and risk agents on the first `split` fraction of the
/// cached frame, writing the checkpoint, a JSON-lines episode log, and a
/// summary next to the resolved config.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let out = prepare_out_dir(cfg)?;
    let frame = load_frame_cache(&out)?;
    let env_config = cfg.env_config();
    env_config.validate()?;
    let split = train_test_split(&frame, cfg.split, &env_config)?;
    let hp = cfg.hyperparams();
    let trained = train_system(&frame, &env_config, split.train.clone(), &hp)?;

    let checkpoint = checkpoint_path(&out);
    save_checkpoint(&checkpoint, &trained)?;

    let mut log_text = String::new();
    for record in &trained.log {
        let line = serde_json::to_string(record)
            .map_err(|e| CliError::Runtime(format!("cannot encode episode log: {e}")))?;
        log_text.push_str(&line);
        log_text.push('\n');
    }
    let log = out.join("training_log.jsonl");
    write_text(&log, &log_text)?;

    let final_value = trained.log.last().map(|r| r.final_value).unwrap_or(cfg.initial_value);
    let hash = cfg.hash();
    let summary_doc = TrainSummary {
        config_hash: &hash,
        seed: cfg.seed,
        days_total: frame.num_days(),
        train_days_calendar: split.train.end,
        train_days_tradable: split.train.len(),
        warmup: split.warmup,
        episodes: hp.episodes,
        final_value,
    };
    let summary = out.join("train_summary.json");
    let text = serde_json::to_string_pretty(&summary_doc)
        .map_err(|e| CliError::Runtime(format!("cannot encode train summary: {e}")))?;
    write_text(&summary, &text)?;

    Ok(TrainOutcome {
        checkpoint,
        log,
        summary,
        episodes: hp.episodes,
        train_days: split.train.end,
        tradable: split.train,
        final_value,
    })
}

// ---------------------------------------------------------------------------
// backtest
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct BacktestOutcome {
    /// Strategy name → ledger CSV path, in written order (agent first).
    pub ledgers: Vec<(String, PathBuf)>,
    pub test: Range<usize>,
    pub days: usize,
}

#[derive(Debug, Serialize)]
struct StrategySummary<'a> {
    strategy: &'a str,
    config_hash: &'a str,
    seed: u64,
    start_date: NaiveDate,
    end_date: NaiveDate,
    days: usize,
    initial_value: Scalar,
    final_value: Scalar,
    arr_rate: Scalar,
    arr_growth_factor: Scalar,
    asr: Option<Scalar>,
    mdd: Scalar,
    /// |final / (initial * Π (1-μ_t) g_t) - 1|: the compounding identity
    /// recomputed from the ledger's own rows.
    identity_residual: Scalar,
}

/// The strategies a backtest invocation resolves to.
enum BacktestJob {
    Agent(PathBuf),
    Baseline(BaselineKind),
}

fn agent_checkpoint(out: &Path, explicit: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let path = explicit.unwrap_or_else(|| checkpoint_path(out));
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "checkpoint not found at {}; run `quantfolio train` first",
            path.display()
        )));
    }
    Ok(path)
}

/// Runs the trained system and/or baselines over the held-out split,
/// writing one ledger CSV and one summary JSON per strategy. `--baseline
/// all` fans the four baselines out across worker threads (the frame is
/// immutable) and includes the agent's run.
pub fn cmd_backtest(
    cfg: &RunConfig,
    checkpoint: Option<PathBuf>,
    baseline: Option<&str>,
) -> Result<BacktestOutcome, CliError> {
    // Usage-level validation first, before any filesystem work.
    if let (Some(name), Some(_)) = (baseline, &checkpoint) {
        if name != "all" {
            return Err(CliError::Usage(
                "pass either --checkpoint or --baseline <name>, not both \
                 (--baseline all combines with --checkpoint)"
                    .into(),
            ));
        }
    }
    if let Some(name) = baseline {
        if name != "all" && BaselineKind::parse(name).is_none() {
            return Err(CliError::Usage(format!(
                "unknown baseline '{name}' (expected ucrp, ons, winner, best_asset, or all)"
            )));
        }
    }

    let out = prepare_out_dir(cfg)?;
    let frame = load_frame_cache(&out)?;
    let env_config = cfg.env_config();
    env_config.validate()?;
    let split = train_test_split(&frame, cfg.split, &env_config)?;
    let test = split.test.clone();

    let jobs: Vec<BacktestJob> = match baseline {
        None => vec![BacktestJob::Agent(agent_checkpoint(&out, checkpoint)?)],
        Some("all") => {
            let mut jobs = vec![BacktestJob::Agent(agent_checkpoint(&out, checkpoint)?)];
            jobs.extend(BaselineKind::ALL.iter().map(|&k| BacktestJob::Baseline(k)));
            jobs
        }
        Some(name) => {
            let kind = BaselineKind::parse(name).expect("validated above");
            vec![BacktestJob::Baseline(kind)]
        }
    };

    let baseline_config = BaselineConfig {
        commission: cfg.commission,
        risk_free_daily: cfg.risk_free_daily,
        initial_value: cfg.initial_value,
        ..BaselineConfig::default()
    };

    // The agent runs on this thread; baselines fan out when there are
    // several (each job shares only the immutable frame).
    let mut results: Vec<(String, Ledger)> = Vec::with_capacity(jobs.len());
    let mut baseline_kinds: Vec<BaselineKind> = Vec::new();
    for job in &jobs {
        if let BacktestJob::Baseline(kind) = job {
            baseline_kinds.push(*kind);
        }
    }
    let mut baseline_ledgers: Vec<(String, Result<Ledger, CliError>)> =
        if baseline_kinds.len() > 1 {
            std::thread::scope(|scope| {
                let handles: Vec<_> = baseline_kinds
                    .iter()
                    .map(|&kind| {
                        let frame = &frame;
                        let config = &baseline_config;
                        let days = test.clone();
                        (
                            kind.name().to_string(),
                            scope.spawn(move || {
                                run_baseline(kind, frame, days, config).map_err(CliError::from)
                            }),
                        )
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|(name, handle)| {
                        (name, handle.join().expect("baseline worker panicked"))
                    })
                    .collect()
            })
        } else {
            baseline_kinds
                .iter()
                .map(|&kind| {
                    (
                        kind.name().to_string(),
                        run_baseline(kind, &frame, test.clone(), &baseline_config)
                            .map_err(CliError::from),
                    )
                })
                .collect()
        };

    for job in &jobs {
        match job {
            BacktestJob::Agent(path) => {
                let (agent, risk) = load_checkpoint(path)?;
                let dd = agent.config();
                if dd.num_assets != frame.num_assets() || dd.window != cfg.window {
                    return Err(CliError::Data(format!(
                        "checkpoint {} was trained for {} assets with window {}, but the \
                         current run has {} assets with window {}",
                        path.display(),
                        dd.num_assets,
                        dd.window,
                        frame.num_assets(),
                        cfg.window
                    )));
                }
                let mut policy = SystemPolicy::new(&agent, &risk);
                let ledger =
                    run_backtest(&mut policy, &frame, env_config.clone(), test.clone())?;
                results.push(("ours".to_string(), ledger));
            }
            BacktestJob::Baseline(_) => {
                let (name, ledger) = baseline_ledgers.remove(0);
                results.push((name, ledger?));
            }
        }
    }

    let hash = cfg.hash();
    let rf_annual = annualized_risk_free(cfg.risk_free_daily);
    let mut ledger_paths = Vec::with_capacity(results.len());
    for (name, ledger) in &results {
        let file_tag = sanitize_name(name);
        let ledger_path = out.join(format!("ledger_{file_tag}.csv"));
        write_ledger_csv(ledger, &ledger_path)?;

        let values = ledger.value_series();
        let stats = summarize(&values, rf_annual, 252.0)?;
        let product = ledger.initial_value * accumulate(ledger);
        let summary = StrategySummary {
            strategy: name,
            config_hash: &hash,
            seed: cfg.seed,
            start_date: ledger.start_date,
            end_date: ledger.rows.last().map(|r| r.date).unwrap_or(ledger.start_date),
            days: ledger.num_days(),
            initial_value: ledger.initial_value,
            final_value: stats.final_value,
            arr_rate: stats.arr_rate,
            arr_growth_factor: stats.arr_growth_factor,
            asr: stats.asr,
            mdd: stats.mdd,
            identity_residual: (stats.final_value / product - 1.0).abs(),
        };
        let text = serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::Runtime(format!("cannot encode summary: {e}")))?;
        write_text(&out.join(format!("summary_{file_tag}.json")), &text)?;
        ledger_paths.push((name.clone(), ledger_path));
    }

    Ok(BacktestOutcome { ledgers: ledger_paths, days: test.len(), test })
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ReportOutcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub table: String,
}

/// Reads every `ledger_*.csv` in a directory and writes the comparison
/// table (`metrics.csv`, `metrics.json`) and plots to the output directory.
pub fn cmd_report(cfg: &RunConfig, ledgers_dir: Option<&Path>) -> Result<ReportOutcome, CliError> {
    let out = prepare_out_dir(cfg)?;
    let dir = ledgers_dir.map(Path::to_path_buf).unwrap_or_else(|| out.clone());
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "ledger directory {} does not exist",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("ledger_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no ledger files (ledger_*.csv) in {}",
            dir.display()
        )));
    }

    let mut ledgers = Vec::with_capacity(files.len());
    for path in &files {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .map(|n| n.trim_start_matches("ledger_").trim_end_matches(".csv").to_string())
            .expect("filtered on name shape");
        ledgers.push((name, read_ledger_csv(path)?));
    }

    let opts = ReportOptions {
        rf_annual: annualized_risk_free(cfg.risk_free_daily),
        ..ReportOptions::default()
    };
    let report = metrics::report(&ledgers, &out, &opts)?;

    let mut table = format!(
        "{:<12} {:>14} {:>10} {:>12} {:>10} {:>10}\n",
        "strategy", "final_value", "arr_rate", "arr_growth", "asr", "mdd"
    );
    for row in &report.rows {
        let s = &row.summary;
        table.push_str(&format!(
            "{:<12} {:>14} {:>10} {:>12} {:>10} {:>10}\n",
            row.strategy,
            fmt_sig(s.final_value, 6),
            fmt_sig(s.arr_rate, 6),
            fmt_sig(s.arr_growth_factor, 6),
            s.asr.map(|a| fmt_sig(a, 6)).unwrap_or_else(|| "undefined".into()),
            fmt_sig(s.mdd, 6),
        ));
    }

    Ok(ReportOutcome { files: report.files, warnings: report.warnings, table })
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Run configuration file (TOML); built-in defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a single config key (repeatable), e.g. --set seed=9.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        load_run_config(self.config.as_deref(), &self.set)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "quantfolio",
    version,
    about = "Dynamic portfolio engine: ingest data, compute price-level ladders, \
             train agents, backtest, and report"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load per-symbol OHLC CSVs, align them, and write the frame cache.
    Ingest {
        /// Directory holding `<SYMBOL>.csv` files (overrides the config).
        #[arg(long)]
        data_dir: Option<String>,
        /// Comma-separated symbols to ingest (overrides the config).
        #[arg(long, value_delimiter = ',')]
        symbols: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compute the price-level ladder for one symbol over a date range.
    Qpl {
        #[arg(long)]
        symbol: String,
        /// First date (YYYY-MM-DD) to compute the ladder for.
        #[arg(long)]
        date: NaiveDate,
        /// Last date of the range; defaults to --date.
        #[arg(long)]
        end: Option<NaiveDate>,
        /// Trailing days fed to the level solver (overrides the config).
        #[arg(long)]
        lookback: Option<usize>,
        /// Number of levels on each side of the anchor.
        #[arg(long)]
        levels: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the trading and risk agents on the first split of the frame.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the trained system and/or baselines on the held-out split.
    Backtest {
        /// Checkpoint to load; defaults to <out_dir>/checkpoint.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// ucrp, ons, winner, best_asset, or all (all includes the agent).
        #[arg(long)]
        baseline: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Build the comparison table and plots from a directory of ledgers.
    Report {
        /// Directory scanned for ledger_*.csv; defaults to the output dir.
        #[arg(long)]
        ledgers: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Dispatches a parsed command line, printing human-readable progress to
/// stdout. All artifact contents are deterministic given inputs and seed.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { data_dir, symbols, common } => {
            let mut cfg = common.load()?;
            if let Some(dir) = data_dir {
                cfg.data_dir = dir;
            }
            if !symbols.is_empty() {
                cfg.symbols = symbols;
            }
            let outcome = cmd_ingest(&cfg)?;
            println!("ingested {} symbols over {} days", outcome.symbols, outcome.days);
            println!("frame cache: {}", outcome.cache.display());
            println!("frame hash: {}", outcome.hash);
        }
        Command::Qpl { symbol, date, end, lookback, levels, common } => {
            let cfg = common.load()?;
            let outcome = cmd_qpl(&cfg, &symbol, date, end, lookback, levels)?;
            println!("wrote {} ladder rows: {}", outcome.rows, outcome.csv.display());
        }
        Command::Train { common } => {
            let cfg = common.load()?;
            let outcome = cmd_train(&cfg)?;
            println!(
                "trained {} episodes on {} calendar days (tradable {}..{})",
                outcome.episodes,
                outcome.train_days,
                outcome.tradable.start,
                outcome.tradable.end
            );
            println!("final training value: {}", fmt_sig(outcome.final_value, 6));
            println!("checkpoint: {}", outcome.checkpoint.display());
            println!("episode log: {}", outcome.log.display());
        }
        Command::Backtest { checkpoint, baseline, common } => {
            let cfg = common.load()?;
            let outcome = cmd_backtest(&cfg, checkpoint, baseline.as_deref())?;
            println!(
                "backtested days {}..{} ({} trading days)",
                outcome.test.start, outcome.test.end, outcome.days
            );
            for (name, path) in &outcome.ledgers {
                println!("{name}: {}", path.display());
            }
        }
        Command::Report { ledgers, common } => {
            let cfg = common.load()?;
            let outcome = cmd_report(&cfg, ledgers.as_deref())?;
            print!("{}", outcome.table);
            for warning in &outcome.warnings {
                println!("note: {warning}");
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
        }
    }
    Ok(())
}
