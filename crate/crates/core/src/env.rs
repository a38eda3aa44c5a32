//! Daily trading environment: weight execution, signal-gated level fills,
//! rewards, and backtest runs.
//!
//! Each day the agent hands over a target weight vector and the risk agent a
//! market-wide bullish/bearish signal. Per asset, the day resolves to an
//! execution price: a dip through the first lower level fills there when the
//! signal and trade direction agree, a breakout through the first upper
//! level (without the dip) fills there under the same agreement, and
//! everything else fills at the close — with the chosen price clamped into
//! the day's range. Rewards are the log of net growth plus the diversity
//! bonus, and a separate signal-quality reward that is zero whenever every
//! asset fills at close. Decisions for day `t` see only data strictly before
//! `t`; day-`t` prices enter only through execution.

use std::ops::Range;

use thiserror::Error;

use crate::market::{
    log_return_matrix, Bar, MarketError, MarketFrame, PriceBasis, StateTensor, window_state,
};
use crate::portfolio::{
    drift_weights, gini_diversity, growth_factor, step_reward, trade_delta, transaction_cost,
    Ledger, LedgerEntry, PortfolioError, PriceRelatives, WeightVector,
};
use crate::qpl::{QplConfig, QplEngine, QplError, QplLadder};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {message}")]
    Config { message: String },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Qpl(#[from] QplError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error("policy failure: {message}")]
    Policy { message: String },
}

/// Market-wide daily risk signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalType {
    /// `S+`: expecting upward movement.
    Bullish,
    /// `S-`: expecting downward movement.
    Bearish,
}

impl SignalType {
    pub fn label(self) -> &'static str {
        match self {
            SignalType::Bullish => "S+",
            SignalType::Bearish => "S-",
        }
    }
}

impl std::fmt::Display for SignalType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// How one asset's execution price was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    /// Dip filled at the first lower level.
    EarlyAtLower,
    /// Breakout filled at the first upper level.
    EarlyAtUpper,
    /// Default close fill.
    AtClose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionDecision {
    pub price: Scalar,
    pub trigger: Trigger,
}

/// Resolves one asset's execution price for the day.
///
/// With `wants_early` meaning the signal agrees with the trade direction
/// (bullish buy or bearish sell):
/// (a) `low < lower level` and `wants_early` fills at the lower level;
/// (b) otherwise `low >= lower level`, `high > upper level`, and
///     `wants_early` fills at the upper level;
/// (c) everything else fills at close. The price is then clamped into
/// `[low, high]`, since a level can sit marginally outside the day's range.
pub fn execution_price(
    bar: &Bar,
    ladder: &QplLadder<Scalar>,
    signal: SignalType,
    dw: Scalar,
) -> ExecutionDecision {
    let wants_early = match signal {
        SignalType::Bullish => dw > 0.0,
        SignalType::Bearish => dw < 0.0,
    };
    let lower = ladder.down1();
    let upper = ladder.up1();
    let (price, trigger) = if wants_early && bar.low < lower {
        (lower, Trigger::EarlyAtLower)
    } else if wants_early && bar.low >= lower && bar.high > upper {
        (upper, Trigger::EarlyAtUpper)
    } else {
        (bar.close, Trigger::AtClose)
    };
    ExecutionDecision { price: price.clamp(bar.low, bar.high), trigger }
}

/// Signal-quality reward: how much better than close each rebalancing leg
/// filled, `sum_i dw_i (close_i / exec_i - 1)`. Zero when nothing traded or
/// everything filled at close.
pub fn signal_reward(delta: &[Scalar], closes: &[Scalar], exec: &[Scalar]) -> Scalar {
    debug_assert_eq!(delta.len(), closes.len() + 1);
    debug_assert_eq!(closes.len(), exec.len());
    closes
        .iter()
        .zip(exec)
        .zip(&delta[1..])
        .map(|((&c, &e), &dw)| dw * (c / e - 1.0))
        .sum()
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    /// Commission rate per unit of rebalanced weight.
    pub commission: Scalar,
    /// Diversity bonus coefficient in the reward.
    pub gini_eta: Scalar,
    /// Daily risk-free growth of the cash entry.
    pub risk_free_daily: Scalar,
    /// Days per state window.
    pub window: usize,
    /// Starting account value.
    pub initial_value: Scalar,
    pub qpl: QplConfig,
    /// With levels disabled every asset fills at close.
    pub qpl_enabled: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            commission: 0.001,
            gini_eta: 0.0,
            risk_free_daily: 0.0,
            window: 3,
            initial_value: 100_000.0,
            qpl: QplConfig::default(),
            qpl_enabled: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.initial_value > 0.0) {
            return Err(EnvError::Config {
                message: format!("initial_value must be positive, got {}", self.initial_value),
            });
        }
        if self.commission < 0.0 || self.commission >= 1.0 {
            return Err(EnvError::Config {
                message: format!("commission must be in [0, 1), got {}", self.commission),
            });
        }
        if self.window == 0 {
            return Err(EnvError::Config { message: "window must be >= 1".into() });
        }
        if self.qpl_enabled {
            self.qpl.validate()?;
        }
        Ok(())
    }

    /// First day index on which a decision can be made: the state window
    /// needs `window` return columns ending two days back, and the level
    /// engine (when enabled) needs its trailing lookback.
    pub fn first_tradable_day(&self) -> usize {
        let state_floor = self.window + 1;
        if self.qpl_enabled {
            state_floor.max(self.qpl.lookback + 1)
        } else {
            state_floor
        }
    }
}

/// Train/test day ranges under a fractional split of the frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    /// Tradable training days.
    pub train: Range<usize>,
    /// Tradable held-out days.
    pub test: Range<usize>,
    /// Days at the head of the frame consumed by history requirements.
    pub warmup: usize,
}

/// Splits the frame: the first `floor(split * num_days)` days are the
/// training region; trading starts after the warmup within it.
pub fn train_test_split(
    frame: &MarketFrame,
    split: f64,
    config: &EnvConfig,
) -> Result<Split, EnvError> {
    if !(split > 0.0 && split < 1.0) {
        return Err(EnvError::Config { message: format!("split must be in (0, 1), got {split}") });
    }
    let days = frame.num_days();
    let n_train = (split * days as f64).floor() as usize;
    let warmup = config.first_tradable_day();
    if warmup >= n_train {
        return Err(EnvError::Config {
            message: format!(
                "warmup ({warmup} days) swallows the whole training region ({n_train} days); \
                 shrink the window/lookback or extend the data"
            ),
        });
    }
    if n_train >= days {
        return Err(EnvError::Config {
            message: format!("training region ({n_train}) leaves no test days out of {days}"),
        });
    }
    Ok(Split { train: warmup..n_train, test: n_train..days, warmup })
}

/// One resolved trading day.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// Log net growth plus the diversity bonus.
    pub reward: Scalar,
    /// Signal-quality reward.
    pub pg_reward: Scalar,
    pub entry: LedgerEntry,
    /// No further days remain after this one.
    pub done: bool,
}

/// The environment for one run (an episode of training or one backtest).
///
/// States for day `t` are built from return columns up to `t - 2` — the
/// newest fully known return when the day-`t` decision is made — and level
/// ladders are anchored at the prior close, so nothing reads day-`t` data
/// except execution itself.
pub struct TradingEnv<'f> {
    frame: &'f MarketFrame,
    config: EnvConfig,
    days: Range<usize>,
    returns: crate::linalg::Matrix<Scalar>,
    engine: Option<QplEngine>,
    cursor: usize,
    value: Scalar,
    w_prev: WeightVector<Scalar>,
    y_prev: PriceRelatives<Scalar>,
    prev_exec: Vec<Scalar>,
}

impl<'f> TradingEnv<'f> {
    pub fn new(
        frame: &'f MarketFrame,
        config: EnvConfig,
        days: Range<usize>,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        if days.is_empty() || days.end > frame.num_days() {
            return Err(EnvError::Config {
                message: format!(
                    "day range {}..{} empty or beyond the {}-day frame",
                    days.start,
                    days.end,
                    frame.num_days()
                ),
            });
        }
        if days.start < config.first_tradable_day() {
            return Err(EnvError::Config {
                message: format!(
                    "day range starts at {} but history requirements allow {} at the earliest",
                    days.start,
                    config.first_tradable_day()
                ),
            });
        }
        let returns = log_return_matrix(frame, PriceBasis::Close, config.risk_free_daily);
        let engine = if config.qpl_enabled {
            Some(QplEngine::new(config.qpl.clone())?)
        } else {
            None
        };
        let m = frame.num_assets();
        let start = days.start;
        Ok(Self {
            frame,
            config,
            days: days.clone(),
            returns,
            engine,
            cursor: start,
            value: 0.0,
            w_prev: WeightVector::all_cash(m),
            y_prev: PriceRelatives::ones(m),
            prev_exec: (0..m).map(|a| frame.close(a, start - 1)).collect(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_assets(&self) -> usize {
        self.frame.num_assets()
    }

    pub fn days(&self) -> Range<usize> {
        self.days.clone()
    }

    pub fn value(&self) -> Scalar {
        self.value
    }

    pub fn current_day(&self) -> usize {
        self.cursor
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.days.end
    }

    /// Rewinds to the first day with a fresh all-cash account.
    pub fn reset(&mut self) {
        let m = self.frame.num_assets();
        self.cursor = self.days.start;
        self.value = self.config.initial_value;
        self.w_prev = WeightVector::all_cash(m);
        self.y_prev = PriceRelatives::ones(m);
        self.prev_exec = (0..m).map(|a| self.frame.close(a, self.days.start - 1)).collect();
    }

    /// The state observed before trading `day`.
    pub fn state_for(&self, day: usize) -> Result<StateTensor, EnvError> {
        Ok(window_state(&self.returns, day - 2, self.config.window)?)
    }

    /// The state for the current day.
    pub fn state(&self) -> Result<StateTensor, EnvError> {
        self.state_for(self.cursor)
    }

    /// A ledger pre-filled with this run's starting conditions.
    pub fn empty_ledger(&self) -> Ledger {
        let m = self.frame.num_assets();
        let start = self.days.start - 1;
        Ledger {
            start_date: self.frame.date(start),
            start_day: start,
            initial_value: self.config.initial_value,
            initial_weights: WeightVector::all_cash(m).as_slice().to_vec(),
            initial_prices: (0..m).map(|a| self.frame.close(a, start)).collect(),
            rows: Vec::with_capacity(self.days.len()),
        }
    }

    /// Executes the current day with the given rebalance target and signal.
    pub fn step(
        &mut self,
        target: &WeightVector<Scalar>,
        signal: SignalType,
    ) -> Result<StepOutcome, EnvError> {
        assert!(!self.is_done(), "step past the end of the run");
        let day = self.cursor;
        let m = self.frame.num_assets();

        let drifted = drift_weights(&self.w_prev, &self.y_prev);
        let delta = trade_delta(target, &drifted);

        let mut exec = Vec::with_capacity(m);
        let mut closes = Vec::with_capacity(m);
        for asset in 0..m {
            let bar = self.frame.bar(asset, day);
            closes.push(bar.close);
            let decision = match &mut self.engine {
                Some(engine) => {
                    let ladder = engine.ladder(self.frame, asset, day)?;
                    execution_price(bar, ladder, signal, delta[asset + 1])
                }
                None => ExecutionDecision { price: bar.close, trigger: Trigger::AtClose },
            };
            exec.push(decision.price);
        }

        let mut rel = Vec::with_capacity(m + 1);
        rel.push(1.0 + self.config.risk_free_daily);
        for asset in 0..m {
            rel.push(exec[asset] / self.prev_exec[asset]);
        }
        let y = PriceRelatives::new(rel)?;

        let mu = transaction_cost(&delta, self.config.commission);
        let gross = growth_factor(target, &y);
        let gini = gini_diversity(target);
        let reward = step_reward(mu, gross, self.config.gini_eta, gini, day)?;
        let pg_reward = signal_reward(&delta, &closes, &exec);

        self.value *= (1.0 - mu) * gross;
        let entry = LedgerEntry {
            day,
            date: self.frame.date(day),
            drifted: drifted.as_slice().to_vec(),
            target: target.as_slice().to_vec(),
            exec_prices: exec.clone(),
            cost: mu,
            gross_return: gross,
            value: self.value,
            signal: signal.label().to_string(),
        };

        self.w_prev = target.clone();
        self.y_prev = y;
        self.prev_exec = exec;
        self.cursor += 1;

        Ok(StepOutcome { reward, pg_reward, entry, done: self.is_done() })
    }
}

/// A daily decision rule: weights plus signal from the observed state.
pub trait TradingPolicy {
    fn decide(
        &mut self,
        state: &StateTensor,
    ) -> Result<(WeightVector<Scalar>, SignalType), EnvError>;
}

/// Runs a frozen policy over `days`, producing the full ledger.
pub fn run_backtest(
    policy: &mut dyn TradingPolicy,
    frame: &MarketFrame,
    config: EnvConfig,
    days: Range<usize>,
) -> Result<Ledger, EnvError> {
    let mut env = TradingEnv::new(frame, config, days)?;
    env.reset();
    let mut ledger = env.empty_ledger();
    while !env.is_done() {
        let state = env.state()?;
        let (weights, signal) = policy.decide(&state)?;
        let outcome = env.step(&weights, signal)?;
        ledger.rows.push(outcome.entry);
    }
    Ok(ledger)
}
