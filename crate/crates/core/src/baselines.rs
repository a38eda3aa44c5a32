//! Comparison strategies: uniform rebalancing, Online Newton Step,
//! follow-the-winner, and the hindsight best asset.
//!
//! All four trade at daily close prices and, by default, pay the same
//! commission as the learned agent so the comparison is made under identical
//! frictions (a flag turns the charge off). Each run emits the standard
//! ledger, so every downstream metric and report treats baselines and the
//! agent identically. Everything here is deterministic: the same frame and
//! configuration reproduce a ledger bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve, LinalgError, Matrix};
use crate::market::{MarketError, MarketFrame};
use crate::portfolio::{
    drift_weights, growth_factor, trade_delta, transaction_cost, Ledger, LedgerEntry,
    PortfolioError, PriceRelatives, WeightVector,
};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("simplex projection did not converge after {iterations} active-set iterations")]
    Projection { iterations: usize },
    #[error("baseline needs day >= {needed} for its trailing window, got {day}")]
    InsufficientHistory { day: usize, needed: usize },
    #[error("empty day range")]
    EmptyRange,
    #[error("invalid baseline configuration: {message}")]
    Config { message: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Uniform weights over cash plus `m` assets, rebalanced every day.
pub fn ucrp_weights(m: usize) -> WeightVector<Scalar> {
    WeightVector::uniform(m)
}

// ---------------------------------------------------------------------------
// Online Newton Step
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OnsParams {
    /// Mixing weight toward uniform after projection.
    pub eta: Scalar,
    /// Gradient scaling: the accumulator adds `(1 + 1/beta) g` per day.
    pub beta: Scalar,
    /// Shrinkage applied to the Newton candidate before projection.
    pub delta: Scalar,
}

impl Default for OnsParams {
    fn default() -> Self {
        Self { eta: 0.0, beta: 1.0, delta: 0.125 }
    }
}

/// Second-order online state: a gradient accumulator and a Hessian proxy
/// that starts at the identity and stays symmetric positive definite.
#[derive(Debug, Clone)]
pub struct OnsState {
    a: Matrix<Scalar>,
    b: Vec<Scalar>,
    params: OnsParams,
}

impl OnsState {
    /// `n` counts every portfolio component, cash included.
    pub fn new(n: usize, params: OnsParams) -> Self {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            a.set(i, i, 1.0);
        }
        Self { a, b: vec![0.0; n], params }
    }

    pub fn matrix(&self) -> &Matrix<Scalar> {
        &self.a
    }

    /// One online update after holding `w` through relatives `y`: rank-one
    /// update of the Hessian proxy, gradient accumulation, Newton candidate,
    /// then projection onto the simplex in the norm induced by the proxy.
    pub fn step(
        &mut self,
        y: &PriceRelatives<Scalar>,
        w: &WeightVector<Scalar>,
    ) -> Result<WeightVector<Scalar>, BaselineError> {
        let n = self.b.len();
        let wy: Scalar = w
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(&wi, &yi)| wi * yi)
            .sum();
        let g: Vec<Scalar> = y.as_slice().iter().map(|&yi| yi / wy).collect();
        for i in 0..n {
            for j in 0..n {
                let v = self.a.get(i, j) + g[i] * g[j];
                self.a.set(i, j, v);
            }
        }
        let scale = 1.0 + 1.0 / self.params.beta;
        for i in 0..n {
            self.b[i] += scale * g[i];
        }

        let candidate: Vec<Scalar> = solve_regularized(&self.a, &self.b)?
            .into_iter()
            .map(|v| v * self.params.delta)
            .collect();
        let projected = project_simplex_in_norm(&self.a, &candidate)?;
        let uniform = 1.0 / n as Scalar;
        let mixed: Vec<Scalar> = projected
            .iter()
            .map(|&p| (1.0 - self.params.eta) * p + self.params.eta * uniform)
            .collect();
        Ok(WeightVector::new(mixed)?)
    }
}

/// Linear solve with the documented fallback: if the matrix reports as
/// numerically singular, add 1e-10 to the diagonal and retry once.
fn solve_regularized(a: &Matrix<Scalar>, b: &[Scalar]) -> Result<Vec<Scalar>, BaselineError> {
    match solve(a.clone(), b.to_vec()) {
        Ok(x) => Ok(x),
        Err(LinalgError::Singular { .. }) => {
            let mut reg = a.clone();
            for i in 0..reg.rows() {
                let v = reg.get(i, i) + 1e-10;
                reg.set(i, i, v);
            }
            Ok(solve(reg, b.to_vec())?)
        }
        Err(e) => Err(e.into()),
    }
}

/// Projects `c` onto the probability simplex, minimizing
/// `(x - c)' A (x - c)` for symmetric positive definite `A`, by primal
/// active-set iteration: repeatedly solve the equality-constrained problem
/// on the free coordinates, step to the first blocking bound, and release
/// bound coordinates whose KKT multipliers are negative.
pub fn project_simplex_in_norm(
    a: &Matrix<Scalar>,
    c: &[Scalar],
) -> Result<Vec<Scalar>, BaselineError> {
    let n = c.len();
    let max_iter = 3 * n + 10;
    let mut x = vec![1.0 / n as Scalar; n];
    let mut active = vec![false; n];

    for _ in 0..max_iter {
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        if free.is_empty() {
            return Err(BaselineError::Projection { iterations: max_iter });
        }
        // Equality-constrained minimizer on the free set: with x_S = 0, the
        // stationarity condition is A_FF x_F = (A c)_F - (lambda / 2) 1,
        // and the budget fixes lambda.
        let k = free.len();
        let mut aff = Matrix::zeros(k, k);
        let mut rhs = vec![0.0; k];
        for (p, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate() {
                aff.set(p, q, a.get(i, j));
            }
            rhs[p] = (0..n).map(|j| a.get(i, j) * c[j]).sum();
        }
        let u = solve_regularized(&aff, &rhs)?;
        let z = solve_regularized(&aff, &vec![1.0; k])?;
        let sum_u: Scalar = u.iter().sum();
        let sum_z: Scalar = z.iter().sum();
        let lambda_half = (sum_u - 1.0) / sum_z;
        let mut target = vec![0.0; n];
        for (p, &i) in free.iter().enumerate() {
            target[i] = u[p] - lambda_half * z[p];
        }

        let min_free = free.iter().map(|&i| target[i]).fold(Scalar::INFINITY, Scalar::min);
        if min_free >= -1e-10 {
            // Feasible minimizer for this active set; check whether any
            // bound should be released (multiplier nu_i = grad_i + lambda).
            for &i in &free {
                x[i] = target[i].max(0.0);
            }
            let grad: Vec<Scalar> = (0..n)
                .map(|i| 2.0 * (0..n).map(|j| a.get(i, j) * (x[j] - c[j])).sum::<Scalar>())
                .collect();
            let lambda: Scalar =
                free.iter().map(|&i| -grad[i]).sum::<Scalar>() / free.len() as Scalar;
            let mut worst: Option<(usize, Scalar)> = None;
            for i in 0..n {
                if active[i] {
                    let nu = grad[i] + lambda;
                    if nu < -1e-9 && worst.map_or(true, |(_, w)| nu < w) {
                        worst = Some((i, nu));
                    }
                }
            }
            match worst {
                None => {
                    let total: Scalar = x.iter().sum();
                    return Ok(x.iter().map(|&v| v / total).collect());
                }
                Some((i, _)) => {
                    active[i] = false;
                }
            }
        } else {
            // Step toward the target until the first coordinate hits zero.
            let mut alpha = 1.0;
            let mut blocker = None;
            for &i in &free {
                if target[i] < -1e-15 && x[i] - target[i] > 0.0 {
                    let step = x[i] / (x[i] - target[i]);
                    if step < alpha {
                        alpha = step;
                        blocker = Some(i);
                    }
                }
            }
            for &i in &free {
                x[i] += alpha * (target[i] - x[i]);
                x[i] = x[i].max(0.0);
            }
            if let Some(i) = blocker {
                x[i] = 0.0;
                active[i] = true;
            }
        }
    }
    Err(BaselineError::Projection { iterations: max_iter })
}

// ---------------------------------------------------------------------------
// Follow the winner / best asset
// ---------------------------------------------------------------------------

/// One-hot on the component with the greatest trailing cumulative return.
/// `cum_returns[0]` is cash; assets are scanned before cash and win ties,
/// lowest asset index first — cash takes the portfolio only when it strictly
/// beats every asset.
pub fn winner_weights(cum_returns: &[Scalar]) -> WeightVector<Scalar> {
    let n = cum_returns.len();
    debug_assert!(n >= 2);
    let mut best = 1;
    for i in 2..n {
        if cum_returns[i] > cum_returns[best] {
            best = i;
        }
    }
    if cum_returns[0] > cum_returns[best] {
        best = 0;
    }
    WeightVector::one_hot(n - 1, best)
}

/// Cumulative gross returns over the `lookback` days ending at `day - 1`
/// (close-to-close, strictly causal for a day-`day` decision), cash first.
pub fn trailing_cum_returns(
    frame: &MarketFrame,
    day: usize,
    lookback: usize,
    risk_free_daily: Scalar,
) -> Result<Vec<Scalar>, BaselineError> {
    if day < lookback + 1 {
        return Err(BaselineError::InsufficientHistory { day, needed: lookback + 1 });
    }
    let mut out = vec![(1.0 + risk_free_daily).powi(lookback as i32)];
    for asset in 0..frame.num_assets() {
        out.push(frame.close(asset, day - 1) / frame.close(asset, day - 1 - lookback));
    }
    Ok(out)
}

/// Hindsight argmax of accumulated close-to-close return over the traded
/// range (portfolio index, so asset `k` is `k + 1`; cash is not eligible —
/// this benchmark names the best traded product). Ties break to the lowest
/// index.
pub fn best_asset(
    frame: &MarketFrame,
    days: std::ops::Range<usize>,
) -> Result<usize, BaselineError> {
    if days.is_empty() || days.start == 0 {
        return Err(BaselineError::EmptyRange);
    }
    let mut best = 0usize;
    let mut best_ratio = Scalar::NEG_INFINITY;
    for asset in 0..frame.num_assets() {
        let ratio = frame.close(asset, days.end - 1) / frame.close(asset, days.start - 1);
        if ratio > best_ratio {
            best_ratio = ratio;
            best = asset;
        }
    }
    Ok(best + 1)
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Ucrp,
    Ons,
    Winner,
    BestAsset,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] =
        [BaselineKind::Ucrp, BaselineKind::Ons, BaselineKind::Winner, BaselineKind::BestAsset];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ucrp" => Some(Self::Ucrp),
            "ons" => Some(Self::Ons),
            "winner" => Some(Self::Winner),
            "best_asset" => Some(Self::BestAsset),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ucrp => "ucrp",
            Self::Ons => "ons",
            Self::Winner => "winner",
            Self::BestAsset => "best_asset",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub commission: Scalar,
    pub risk_free_daily: Scalar,
    pub initial_value: Scalar,
    pub winner_lookback: usize,
    pub ons: OnsParams,
    /// Baselines pay the agent's commission by default, for parity under
    /// identical frictions; turn off to study frictionless behavior.
    pub pay_commission: bool,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            commission: 0.001,
            risk_free_daily: 0.0,
            initial_value: 100_000.0,
            winner_lookback: 5,
            ons: OnsParams::default(),
            pay_commission: true,
        }
    }
}

/// Runs one baseline over `days` (each `t` reads closes of `t` and `t - 1`,
/// so `days.start >= 1`), producing the standard ledger.
pub fn run_baseline(
    kind: BaselineKind,
    frame: &MarketFrame,
    days: std::ops::Range<usize>,
    config: &BaselineConfig,
) -> Result<Ledger, BaselineError> {
    if days.is_empty() {
        return Err(BaselineError::EmptyRange);
    }
    if days.start == 0 || days.end > frame.num_days() {
        return Err(BaselineError::Config {
            message: format!(
                "day range {}..{} must sit inside 1..{}",
                days.start,
                days.end,
                frame.num_days()
            ),
        });
    }
    let m = frame.num_assets();
    let n = m + 1;

    let best = match kind {
        BaselineKind::BestAsset => Some(best_asset(frame, days.clone())?),
        _ => None,
    };
    let mut ons_state = OnsState::new(n, config.ons);
    let mut ons_weights = WeightVector::uniform(m);

    let start_day = days.start - 1;
    let mut ledger = Ledger {
        start_date: frame.date(start_day),
        start_day,
        initial_value: config.initial_value,
        initial_weights: WeightVector::all_cash(m).as_slice().to_vec(),
        initial_prices: (0..m).map(|a| frame.close(a, start_day)).collect(),
        rows: Vec::with_capacity(days.len()),
    };

    let mut value = config.initial_value;
    let mut w_prev = WeightVector::all_cash(m);
    let mut y_prev = PriceRelatives::ones(m);

    for t in days {
        let target = match kind {
            BaselineKind::Ucrp => ucrp_weights(m),
            BaselineKind::Ons => ons_weights.clone(),
            BaselineKind::Winner => {
                let cum =
                    trailing_cum_returns(frame, t, config.winner_lookback, config.risk_free_daily)?;
                winner_weights(&cum)
            }
            BaselineKind::BestAsset => WeightVector::one_hot(m, best.unwrap()),
        };

        let mut rel = vec![1.0 + config.risk_free_daily];
        for asset in 0..m {
            rel.push(frame.close(asset, t) / frame.close(asset, t - 1));
        }
        let y = PriceRelatives::new(rel)?;

        let drifted = drift_weights(&w_prev, &y_prev);
        let delta = trade_delta(&target, &drifted);
        let cost =
            if config.pay_commission { transaction_cost(&delta, config.commission) } else { 0.0 };
        let gross = growth_factor(&target, &y);
        let growth = (1.0 - cost) * gross;
        if !(growth > 0.0) || !growth.is_finite() {
            return Err(PortfolioError::NonPositiveGrowth { day: t, factor: growth }.into());
        }
        value *= growth;

        ledger.rows.push(LedgerEntry {
            day: t,
            date: frame.date(t),
            drifted: drifted.as_slice().to_vec(),
            target: target.as_slice().to_vec(),
            exec_prices: (0..m).map(|a| frame.close(a, t)).collect(),
            cost,
            gross_return: gross,
            value,
            signal: "NA".to_string(),
        });

        if kind == BaselineKind::Ons {
            ons_weights = ons_state.step(&y, &target)?;
        }
        w_prev = target;
        y_prev = y;
    }
    Ok(ledger)
}
