//! Dynamic portfolio optimization engine.
//!
//! The crate combines four ingredients into one backtestable trading system:
//!
//! * an **allocation agent** — a deterministic-policy actor–critic learner
//!   whose actor and critic share a convolutional state encoder
//!   ([`agents`]),
//! * a **risk-control agent** — a recurrent policy-gradient classifier that
//!   emits a daily bullish/bearish signal ([`agents::policy`]),
//! * a **quantum price level ladder** — intraday support/resistance levels
//!   derived from the spectrum of an anharmonic-oscillator operator fitted to
//!   the recent return distribution ([`qpl`]),
//! * an **execution and accounting layer** that turns target weights, the
//!   daily signal, and the price ladder into fills, costs, and a wealth curve
//!   ([`env`], [`portfolio`]).
//!
//! Classic online portfolio-selection baselines ([`baselines`]) and a metrics
//! module ([`metrics`]) round out the engine so that agent runs can be
//! compared against references on equal accounting terms.
//!
//! Numeric kernels are generic over the [`scalar::Real`] trait so they can be
//! instantiated at `f32` or `f64`; the engine itself runs in double precision
//! via the [`Scalar`] alias.

pub mod agents;
pub mod baselines;
pub mod env;
pub mod linalg;
pub mod market;
pub mod metrics;
pub mod portfolio;
pub mod qpl;
pub mod scalar;
pub mod tensor;

/// Production floating-point precision for the whole engine.
///
/// Kernels are generic over [`scalar::Real`]; everything orchestration-level
/// (market data, agents, the environment, reports) is instantiated here.
pub type Scalar = f64;

/// Matrix of the production scalar type.
pub type Mat = linalg::Matrix<Scalar>;
