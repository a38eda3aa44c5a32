//! The two learning agents and their joint training loop.
//!
//! [`ddpg::TradingAgent`] is an actor–critic pair over a convolutional
//! encoding of the windowed return state: the actor emits portfolio weights
//! (softmax, so always on the simplex), the critic scores state–action
//! pairs, and target copies of both are trailed by Polyak averaging. The
//! encoder can be shared between the two heads or duplicated for the
//! ablation.
//!
//! [`policy::RiskAgent`] is an independent recurrent policy over the same
//! state that emits the daily bullish/bearish signal gating early fills at
//! price levels; it is trained by episodic policy gradient on the
//! execution-quality reward.
//!
//! [`train::train_system`] runs both against a
//! [`crate::env::TradingEnv`], and [`train::SystemPolicy`] adapts the
//! frozen pair for backtests.

pub mod ddpg;
pub mod policy;
pub mod replay;
pub mod train;

pub use ddpg::{DdpgConfig, EncoderSharing, TradingAgent};
pub use policy::{pg_returns, PolicyConfig, RiskAgent};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    load_checkpoint, save_checkpoint, train_system, EpisodeLog, Hyperparams, SystemPolicy,
    TrainedSystem,
};

use thiserror::Error;

use crate::env::EnvError;
use crate::portfolio::PortfolioError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {message}")]
    Config { message: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}
