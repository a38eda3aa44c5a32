//! Quantum price levels: spectral support/resistance ladders.
//!
//! The mechanism models the daily return of a product as a particle in an
//! anharmonic potential well. The recent return distribution is fitted to
//! the stationary form of that well, the resulting Schrödinger-type operator
//!
//! ```text
//!   H = -(hbar / 2 mass) d^2/dr^2 + (gamma eta delta / 2) r^2
//!                                 - (gamma eta v / 4) r^4
//! ```
//!
//! is discretized on `[-R, R]` with zero boundary conditions, and its lowest
//! eigenvalues `E_0 < E_1 < ...` are turned into relative level spacings
//! `lambda_n = (E_n - E_0) / E_0`. Anchored at the previous close `c`, the
//! price ladder is then
//!
//! ```text
//!   up_n   = c * (1 + lambda_n)
//!   down_n = c * max(1 - lambda_n, 0.01)
//! ```
//!
//! Everything a session needs (the ladder for day `t`) depends only on data
//! strictly before `t`, so levels are known before the market opens.

pub mod solver;

use std::collections::HashMap;

use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};
use crate::market::MarketFrame;
use crate::scalar::Real;
use crate::Scalar;
use solver::{SolverError, SymTridiagonal};

/// Floor applied to downward levels: a level never drops below 1% of the
/// anchor price.
const DOWN_LEVEL_FLOOR: f64 = 0.01;
/// Quadratic coefficients at or below this (relative) size mean the fit
/// found no confining well.
const MIN_QUADRATIC_COEF: f64 = 1e-10;

/// Errors from the price-level pipeline.
#[derive(Debug, Error)]
pub enum QplError {
    #[error("density estimation needs at least {needed} observations, got {got}")]
    InsufficientObservations { needed: usize, got: usize },
    #[error("density estimation needs at least {needed} bins, got {got}")]
    TooFewBins { needed: usize, got: usize },
    #[error("level ladder for day {day} needs {needed} prior days of history")]
    InsufficientHistory { day: usize, needed: usize },
    #[error("potential fit failed: {message}")]
    Fit { message: String },
    #[error("potential is not confining on the domain: V(R) = {v_edge} < V(0) = 0")]
    Domain { v_edge: f64 },
    #[error("eigensolve produced unusable spectrum: {message}")]
    Numerical { message: String },
    #[error("bad configuration: {message}")]
    Config { message: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Physical constants of the oscillator model. All default to 1, which makes
/// the harmonic limit come out in natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QplPhysics<R> {
    pub hbar: R,
    pub mass: R,
    /// Damping-scale factor multiplying both potential terms.
    pub gamma: R,
    /// Market-excitation factor multiplying both potential terms (distinct
    /// from the diversity-bonus weight used by the reward).
    pub eta: R,
}

impl<R: Real> Default for QplPhysics<R> {
    fn default() -> Self {
        Self { hbar: R::one(), mass: R::one(), gamma: R::one(), eta: R::one() }
    }
}

/// Fitted (or fallback) potential parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams<R> {
    /// Quadratic (restoring) strength `delta`.
    pub delta_q: R,
    /// Quartic (anharmonic) strength `v`.
    pub v_q: R,
}

impl<R: Real> PotentialParams<R> {
    /// Harmonic fallback used when the quartic fit fails: `delta = 1, v = 0`.
    pub fn fallback() -> Self {
        Self { delta_q: R::one(), v_q: R::zero() }
    }
}

/// Histogram of recent daily returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDensity<R> {
    /// Bin centers (return space).
    pub centers: Vec<R>,
    /// Normalized bin masses (sum to 1).
    pub mass: Vec<R>,
    /// Sample standard deviation of the observations.
    pub std_dev: R,
    /// True when the sample had no usable spread (all returns identical).
    pub degenerate: bool,
}

/// Histogram density of `returns` over `bins` equal-width cells.
///
/// Requires at least 32 observations and 8 bins. A sample with no spread
/// yields a single-spike density flagged `degenerate`; downstream code falls
/// back to harmonic defaults instead of fitting it.
pub fn estimate_density<R: Real>(returns: &[R], bins: usize) -> Result<ReturnDensity<R>, QplError> {
    const MIN_OBS: usize = 32;
    const MIN_BINS: usize = 8;
    if returns.len() < MIN_OBS {
        return Err(QplError::InsufficientObservations { needed: MIN_OBS, got: returns.len() });
    }
    if bins < MIN_BINS {
        return Err(QplError::TooFewBins { needed: MIN_BINS, got: bins });
    }

    let mut lo = R::infinity();
    let mut hi = R::neg_infinity();
    let mut sum = R::zero();
    for &r in returns {
        lo = lo.min(r);
        hi = hi.max(r);
        sum += r;
    }
    let n = R::of_usize(returns.len());
    let mean = sum / n;
    let var = returns.iter().fold(R::zero(), |acc, &r| acc + (r - mean) * (r - mean))
        / (n - R::one());
    let std_dev = var.max(R::zero()).sqrt();

    let span = hi - lo;
    let degenerate = span <= lo.abs().max(hi.abs()).max(R::one()) * R::of(1e-12);
    let (lo, hi) = if degenerate {
        // Synthetic span around the constant value so bin geometry exists.
        let v = lo;
        let hw = (v.abs() * R::of(1e-6)).max(R::of(1e-9));
        (v - hw, v + hw)
    } else {
        (lo, hi)
    };

    let width = (hi - lo) / R::of_usize(bins);
    let mut counts = vec![R::zero(); bins];
    for &r in returns {
        let mut idx = ((r - lo) / width).to_usize().unwrap_or(0);
        if idx >= bins {
            idx = bins - 1; // the max lands in the last bin
        }
        counts[idx] += R::one();
    }
    let centers =
        (0..bins).map(|i| lo + width * (R::of_usize(i) + R::of(0.5))).collect();
    let mass = counts.into_iter().map(|c| c / n).collect();
    Ok(ReturnDensity { centers, mass, std_dev, degenerate })
}

/// Least-squares fit of the potential shape to a return density.
///
/// Writes `-ln(mass)` at occupied bin centers as `a0 + c2 r^2 - c4 r^4`
/// (the intercept absorbs the normalization constant), then maps the curve
/// coefficients back through the physical prefactors:
/// `c2 = gamma eta delta / 2` and `c4 = gamma eta v / 4`.
///
/// A Gaussian density of standard deviation `sigma` therefore recovers
/// `delta_q ~ 1 / (gamma eta sigma^2)` and `v_q ~ 0`.
pub fn fit_potential<R: Real>(
    density: &ReturnDensity<R>,
    physics: &QplPhysics<R>,
) -> Result<PotentialParams<R>, QplError> {
    if density.degenerate {
        return Err(QplError::Fit { message: "degenerate density (no spread)".into() });
    }
    // Rows: occupied cells only (log of zero mass is meaningless).
    let rows: Vec<(R, R)> = density
        .centers
        .iter()
        .zip(&density.mass)
        .filter(|(_, &m)| m > R::zero())
        .map(|(&r, &m)| (r, -(m.ln())))
        .collect();
    if rows.len() < 3 {
        return Err(QplError::Fit {
            message: format!("need at least 3 occupied bins, got {}", rows.len()),
        });
    }

    // Normal equations for the design [1, r^2, -r^4].
    let mut ata = Matrix::zeros(3, 3);
    let mut atb = vec![R::zero(); 3];
    for &(r, y) in &rows {
        let x = [R::one(), r * r, -(r * r * r * r)];
        for i in 0..3 {
            for j in 0..3 {
                let v = ata.get(i, j) + x[i] * x[j];
                ata.set(i, j, v);
            }
            atb[i] += x[i] * y;
        }
    }
    let beta = linalg::solve(ata, atb).map_err(|e| QplError::Fit {
        message: format!("normal equations unsolvable: {e}"),
    })?;
    let (c2, c4) = (beta[1], beta[2]);

    let scale = rows.iter().fold(R::one(), |m, &(_, y)| m.max(y.abs()));
    if c2 <= R::of(MIN_QUADRATIC_COEF) * scale {
        return Err(QplError::Fit {
            message: format!("no confining quadratic term (coefficient {c2})"),
        });
    }
    let pre = physics.gamma * physics.eta;
    Ok(PotentialParams { delta_q: R::of(2.0) * c2 / pre, v_q: R::of(4.0) * c4 / pre })
}

/// Lowest `levels + 1` eigenvalues of the oscillator operator on
/// `[-domain_r, domain_r]` with zero boundary conditions, via central
/// second differences on `grid_points` interior points.
///
/// In the harmonic limit (`v_q = 0`) the spectrum converges to
/// `E_n = 2 sqrt(c1 c2) (n + 1/2)` with `c1 = hbar / (2 mass)` and
/// `c2 = gamma eta delta / 2`.
pub fn solve_qfse<R: Real>(
    params: &PotentialParams<R>,
    physics: &QplPhysics<R>,
    domain_r: R,
    grid_points: usize,
    levels: usize,
) -> Result<Vec<R>, QplError> {
    if grid_points < 16 {
        return Err(QplError::Config {
            message: format!("grid_points must be >= 16, got {grid_points}"),
        });
    }
    if levels == 0 {
        return Err(QplError::Config { message: "levels must be >= 1".into() });
    }
    if levels + 1 > grid_points / 4 {
        return Err(QplError::Config {
            message: format!("{levels} levels need a finer grid than {grid_points} points"),
        });
    }
    if !(domain_r > R::zero()) || !domain_r.is_finite() {
        return Err(QplError::Config { message: format!("bad domain radius {domain_r}") });
    }

    let c1 = physics.hbar / (R::of(2.0) * physics.mass);
    let pre = physics.gamma * physics.eta;
    let quad = pre * params.delta_q / R::of(2.0);
    let quart = pre * params.v_q / R::of(4.0);
    let potential = |r: R| quad * r * r - quart * r * r * r * r;

    // The well must keep the particle inside the box.
    let v_edge = potential(domain_r);
    if v_edge < R::zero() {
        return Err(QplError::Domain { v_edge: v_edge.widen() });
    }

    let n = grid_points;
    let h = R::of(2.0) * domain_r / R::of_usize(n + 1);
    let kinetic = c1 / (h * h);
    let mut d = Vec::with_capacity(n);
    for j in 0..n {
        let r = -domain_r + h * R::of_usize(j + 1);
        d.push(R::of(2.0) * kinetic + potential(r));
    }
    let e = vec![-kinetic; n - 1];
    let tri = SymTridiagonal::new(d, e)?;
    let eigs = tri.lowest_eigenvalues(levels + 1)?;

    if !(eigs[0] > R::zero()) {
        return Err(QplError::Numerical {
            message: format!("ground level must be positive, got {}", eigs[0]),
        });
    }
    for pair in eigs.windows(2) {
        if !(pair[1] > pair[0]) {
            return Err(QplError::Numerical { message: "spectrum not strictly increasing".into() });
        }
    }
    Ok(eigs)
}

/// The intraday price ladder for one product and one day.
#[derive(Debug, Clone, PartialEq)]
pub struct QplLadder<R> {
    /// Previous close the ladder is anchored at.
    pub anchor: R,
    /// Relative spacings `lambda_n`, `n = 1..=levels`.
    pub lambdas: Vec<R>,
    /// Upward levels `anchor * (1 + lambda_n)`.
    pub up: Vec<R>,
    /// Downward levels `anchor * max(1 - lambda_n, 0.01)`.
    pub down: Vec<R>,
}

impl<R: Real> QplLadder<R> {
    /// First level below the anchor.
    pub fn down1(&self) -> R {
        self.down[0]
    }

    /// First level above the anchor.
    pub fn up1(&self) -> R {
        self.up[0]
    }
}

/// Maps an eigenvalue spectrum and an anchor price onto the ladder.
pub fn qpl_ladder<R: Real>(eigenvalues: &[R], anchor: R) -> Result<QplLadder<R>, QplError> {
    if eigenvalues.len() < 2 {
        return Err(QplError::Numerical {
            message: format!("need E_0 and at least one excited level, got {}", eigenvalues.len()),
        });
    }
    let e0 = eigenvalues[0];
    if !(e0 > R::zero()) {
        return Err(QplError::Numerical { message: format!("E_0 must be positive, got {e0}") });
    }
    let mut lambdas = Vec::with_capacity(eigenvalues.len() - 1);
    let mut up = Vec::new();
    let mut down = Vec::new();
    for &en in &eigenvalues[1..] {
        let lambda = (en - e0) / e0;
        lambdas.push(lambda);
        up.push(anchor * (R::one() + lambda));
        down.push(anchor * (R::one() - lambda).max(R::of(DOWN_LEVEL_FLOOR)));
    }
    Ok(QplLadder { anchor, lambdas, up, down })
}

/// Configuration of the per-day ladder engine.
#[derive(Debug, Clone, PartialEq)]
pub struct QplConfig {
    /// Trailing days of returns fed into the density estimate.
    pub lookback: usize,
    /// Histogram bins.
    pub bins: usize,
    /// Interior grid points of the eigensolve.
    pub grid_points: usize,
    /// Ladder depth (levels per side).
    pub levels: usize,
    /// Domain half-width as a multiple of the return std.
    pub domain_sigmas: Scalar,
    pub physics: QplPhysics<Scalar>,
}

impl Default for QplConfig {
    fn default() -> Self {
        Self {
            lookback: 504,
            bins: 32,
            grid_points: 2048,
            levels: 1,
            domain_sigmas: 3.0,
            physics: QplPhysics::default(),
        }
    }
}

impl QplConfig {
    pub fn validate(&self) -> Result<(), QplError> {
        if self.lookback < 32 {
            return Err(QplError::Config {
                message: format!("lookback must be >= 32 (density minimum), got {}", self.lookback),
            });
        }
        if self.bins < 8 {
            return Err(QplError::Config { message: format!("bins must be >= 8, got {}", self.bins) });
        }
        if self.levels == 0 {
            return Err(QplError::Config { message: "levels must be >= 1".into() });
        }
        if !(self.domain_sigmas > 0.0) {
            return Err(QplError::Config {
                message: format!("domain_sigmas must be positive, got {}", self.domain_sigmas),
            });
        }
        Ok(())
    }
}

/// Per-day ladder engine with an (asset, day) cache.
///
/// `ladder(frame, asset, day)` uses closes of days `day - lookback - 1 ..=
/// day - 1` only: the trailing `lookback` daily returns plus the anchor.
/// When the quartic fit fails (degenerate or non-confining sample) the
/// engine falls back to harmonic defaults rather than failing the day.
pub struct QplEngine {
    config: QplConfig,
    cache: HashMap<(usize, usize), QplLadder<Scalar>>,
}

impl QplEngine {
    pub fn new(config: QplConfig) -> Result<Self, QplError> {
        config.validate()?;
        Ok(Self { config, cache: HashMap::new() })
    }

    pub fn config(&self) -> &QplConfig {
        &self.config
    }

    /// First day index for which a ladder can be built.
    pub fn first_valid_day(&self) -> usize {
        self.config.lookback + 1
    }

    /// The ladder for `(asset, day)`, computed on first use and cached.
    pub fn ladder(
        &mut self,
        frame: &MarketFrame,
        asset: usize,
        day: usize,
    ) -> Result<&QplLadder<Scalar>, QplError> {
        if !self.cache.contains_key(&(asset, day)) {
            let ladder = self.compute(frame, asset, day)?;
            self.cache.insert((asset, day), ladder);
        }
        Ok(&self.cache[&(asset, day)])
    }

    fn compute(
        &self,
        frame: &MarketFrame,
        asset: usize,
        day: usize,
    ) -> Result<QplLadder<Scalar>, QplError> {
        let lookback = self.config.lookback;
        if day < lookback + 1 {
            return Err(QplError::InsufficientHistory { day, needed: lookback + 1 });
        }
        // Daily simple returns for days day-lookback ..= day-1.
        let mut returns = Vec::with_capacity(lookback);
        for s in (day - lookback)..day {
            let prev = frame.close(asset, s - 1);
            let cur = frame.close(asset, s);
            returns.push(cur / prev - 1.0);
        }

        let density = estimate_density(&returns, self.config.bins)?;
        let physics = self.config.physics;
        let params = if density.degenerate {
            PotentialParams::fallback()
        } else {
            fit_potential(&density, &physics).unwrap_or_else(|_| PotentialParams::fallback())
        };

        let anchor = frame.close(asset, day - 1);
        let eigs = self
            .solve_with_domain(&params, &density)
            // Non-confining fitted well: harmonic defaults instead.
            .or_else(|_| self.solve_with_domain(&PotentialParams::fallback(), &density))?;
        qpl_ladder(&eigs, anchor)
    }

    fn solve_with_domain(
        &self,
        params: &PotentialParams<Scalar>,
        density: &ReturnDensity<Scalar>,
    ) -> Result<Vec<Scalar>, QplError> {
        let physics = self.config.physics;
        // Domain half-width: a multiple of the observed return std. With no
        // usable spread, use the fallback oscillator's ground-state width
        // sqrt(hbar / (2 m omega)) as the length scale instead.
        let spread = if density.degenerate || density.std_dev <= 1e-12 {
            let omega =
                (physics.gamma * physics.eta * PotentialParams::<Scalar>::fallback().delta_q
                    / physics.mass)
                    .sqrt();
            (physics.hbar / (2.0 * physics.mass * omega)).sqrt()
        } else {
            density.std_dev
        };
        let domain_r = self.config.domain_sigmas * spread;
        solve_qfse(params, &physics, domain_r, self.config.grid_points, self.config.levels)
    }
}
