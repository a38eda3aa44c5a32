//! Joint training of the trading agent and the risk-signal policy against
//! the trading environment, plus checkpoints and the frozen-system policy
//! adapter for backtests.
//!
//! Every episode replays the same training days: the trading agent acts
//! with logit noise that decays linearly across episodes and learns from a
//! replay buffer after every step; the signal policy samples its action
//! and takes one episodic policy-gradient step at episode end. A single
//! seeded generator drives initialization, exploration, and sampling, so
//! identical inputs reproduce identical parameters bit for bit.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::env::{EnvConfig, EnvError, SignalType, TradingEnv, TradingPolicy};
use crate::market::{MarketFrame, StateTensor};
use crate::portfolio::{gini_diversity, WeightVector};
use crate::tensor::{ParamSet, TensorError};
use crate::Scalar;

use super::ddpg::{DdpgConfig, EncoderSharing, TradingAgent};
use super::policy::{EpisodeStep, PolicyConfig, RiskAgent};
use super::replay::{ReplayBuffer, Transition};
use super::AgentError;

/// Knobs of the joint training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub episodes: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Replay updates start once the buffer holds this many transitions
    /// (at least one batch).
    pub warmup_transitions: usize,
    /// Logit-noise std on the first episode...
    pub noise_start: Scalar,
    /// ...decaying linearly to this on the last.
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
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            episodes: 50,
            batch_size: 64,
            buffer_capacity: 10_000,
            warmup_transitions: 64,
            noise_start: 0.3,
            noise_end: 0.01,
            gamma: 0.99,
            tau: 0.01,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            policy_lr: 1e-4,
            gru_hidden: 64,
            fc_hidden: 32,
            standardize_pg: false,
            sharing: EncoderSharing::Shared,
            seed: 7,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.episodes == 0 {
            return Err(AgentError::Config { message: "episodes must be >= 1".into() });
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(AgentError::Config {
                message: "batch_size and buffer_capacity must be >= 1".into(),
            });
        }
        if self.noise_start < 0.0 || self.noise_end < 0.0 {
            return Err(AgentError::Config {
                message: format!(
                    "noise stds must be non-negative, got {} -> {}",
                    self.noise_start, self.noise_end
                ),
            });
        }
        Ok(())
    }

    /// Exploration noise for a 1-based episode index, linear in the index.
    pub fn noise_for_episode(&self, episode: usize) -> Scalar {
        if self.episodes <= 1 {
            return self.noise_start;
        }
        let frac = (episode - 1) as Scalar / (self.episodes - 1) as Scalar;
        self.noise_start + (self.noise_end - self.noise_start) * frac
    }
}

/// Per-episode training diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// 1-based episode index.
    pub episode: usize,
    pub noise_std: Scalar,
    pub steps: usize,
    /// Summed trading reward (log net growth plus diversity bonus).
    pub cum_reward: Scalar,
    /// Summed execution-quality reward.
    pub cum_pg_reward: Scalar,
    /// Mean diversity of the played allocations.
    pub mean_gini: Scalar,
    /// Mean played weight per component, cash first.
    pub mean_weights: Vec<Scalar>,
    /// Mean critic regression loss; absent before replay warmup completes.
    pub critic_loss_mean: Option<Scalar>,
    /// Episode loss of the signal policy.
    pub policy_loss: Scalar,
    /// Account value when the episode ended.
    pub final_value: Scalar,
}

/// The result of a training run.
pub struct TrainedSystem {
    pub agent: TradingAgent,
    pub risk: RiskAgent,
    pub log: Vec<EpisodeLog>,
}

/// Trains both agents over `days` of `frame`.
pub fn train_system(
    frame: &MarketFrame,
    env_config: &EnvConfig,
    days: Range<usize>,
    hp: &Hyperparams,
) -> Result<TrainedSystem, AgentError> {
    hp.validate()?;
    let mut env = TradingEnv::new(frame, env_config.clone(), days)?;
    let m = frame.num_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let ddpg_config = DdpgConfig {
        num_assets: m,
        window: env_config.window,
        gamma: hp.gamma,
        tau: hp.tau,
        actor_lr: hp.actor_lr,
        critic_lr: hp.critic_lr,
        sharing: hp.sharing,
    };
    let mut agent = TradingAgent::new(ddpg_config, &mut rng)?;
    let policy_config = PolicyConfig {
        num_assets: m,
        window: env_config.window,
        hidden: hp.gru_hidden,
        fc_hidden: hp.fc_hidden,
        gamma: hp.gamma,
        lr: hp.policy_lr,
        standardize: hp.standardize_pg,
    };
    let mut risk = RiskAgent::new(policy_config, &mut rng)?;
    let mut buffer = ReplayBuffer::new(hp.buffer_capacity);
    let update_floor = hp.warmup_transitions.max(hp.batch_size);
    let mut log = Vec::with_capacity(hp.episodes);

    for episode in 1..=hp.episodes {
        let noise = hp.noise_for_episode(episode);
        env.reset();
        let mut episode_steps: Vec<EpisodeStep> = Vec::new();
        let mut cum_reward = 0.0;
        let mut cum_pg = 0.0;
        let mut gini_sum = 0.0;
        let mut weight_sums = vec![0.0; m + 1];
        let mut critic_losses: Vec<Scalar> = Vec::new();

        while !env.is_done() {
            let day = env.current_day();
            let state = env.state()?;
            let weights = agent.act_noisy(&state, noise, &mut rng)?;
            let signal = risk.decide_stochastic(&state, &mut rng)?;
            let outcome = env.step(&weights, signal)?;
            let next_state = env.state_for(day + 1)?;

            cum_reward += outcome.reward;
            cum_pg += outcome.pg_reward;
            gini_sum += gini_diversity(&weights);
            for (acc, w) in weight_sums.iter_mut().zip(weights.as_slice()) {
                *acc += *w;
            }

            buffer.push(Transition {
                state: state.clone(),
                action: weights.as_slice().to_vec(),
                reward: outcome.reward,
                next_state,
                done: outcome.done,
            });
            episode_steps.push(EpisodeStep { state, signal, pg_reward: outcome.pg_reward });

            if buffer.len() >= update_floor {
                let batch = buffer.sample(hp.batch_size, &mut rng);
                let targets = agent.critic_targets(&batch)?;
                let loss = agent.update_critic(&batch, &targets)?;
                agent.update_actor(&batch)?;
                agent.soft_update_target()?;
                critic_losses.push(loss);
            }
        }

        let policy_loss = risk.update_policy(&episode_steps)?;
        let steps = episode_steps.len();
        let n = steps as Scalar;
        log.push(EpisodeLog {
            episode,
            noise_std: noise,
            steps,
            cum_reward,
            cum_pg_reward: cum_pg,
            mean_gini: gini_sum / n,
            mean_weights: weight_sums.iter().map(|w| w / n).collect(),
            critic_loss_mean: if critic_losses.is_empty() {
                None
            } else {
                Some(critic_losses.iter().sum::<Scalar>() / critic_losses.len() as Scalar)
            },
            policy_loss,
            final_value: env.value(),
        });
    }

    Ok(TrainedSystem { agent, risk, log })
}

/// The frozen pair as a backtest policy: deterministic weights, argmax
/// signal.
pub struct SystemPolicy<'a> {
    agent: &'a TradingAgent,
    risk: &'a RiskAgent,
}

impl<'a> SystemPolicy<'a> {
    pub fn new(agent: &'a TradingAgent, risk: &'a RiskAgent) -> Self {
        Self { agent, risk }
    }
}

fn to_env_error(e: AgentError) -> EnvError {
    EnvError::Policy { message: e.to_string() }
}

impl TradingPolicy for SystemPolicy<'_> {
    fn decide(
        &mut self,
        state: &StateTensor,
    ) -> Result<(WeightVector<Scalar>, SignalType), EnvError> {
        let weights = self.agent.act(state).map_err(to_env_error)?;
        let signal = self.risk.decide_greedy(state).map_err(to_env_error)?;
        Ok((weights, signal))
    }
}

/// Schema version of the combined-system checkpoint file.
pub const SYSTEM_CHECKPOINT_VERSION: u32 = 1;

fn ck_err(e: serde_json::Error) -> TensorError {
    TensorError::Checkpoint { message: e.to_string() }
}

fn missing(field: &str) -> TensorError {
    TensorError::Checkpoint { message: format!("checkpoint lacks the {field} field") }
}

/// Writes both agents (configs and parameters, online and target) as one
/// JSON document. Values round-trip bit-exactly.
pub fn save_checkpoint(path: &Path, system: &TrainedSystem) -> Result<(), AgentError> {
    let doc = json!({
        "version": SYSTEM_CHECKPOINT_VERSION,
        "trading": {
            "config": serde_json::to_value(system.agent.config()).map_err(ck_err)?,
            "online": system.agent.online().to_json_records(),
            "target": system.agent.target().to_json_records(),
        },
        "risk": {
            "config": serde_json::to_value(system.risk.config()).map_err(ck_err)?,
            "params": system.risk.params().to_json_records(),
        },
    });
    let text = serde_json::to_string_pretty(&doc).map_err(ck_err)?;
    fs::write(path, text.as_bytes())
        .map_err(|source| TensorError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

/// Restores both agents from [`save_checkpoint`] output.
pub fn load_checkpoint(path: &Path) -> Result<(TradingAgent, RiskAgent), AgentError> {
    let text = fs::read_to_string(path)
        .map_err(|source| TensorError::Io { path: path.to_path_buf(), source })?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(ck_err)?;
    let version = doc.get("version").and_then(|v| v.as_u64());
    if version != Some(SYSTEM_CHECKPOINT_VERSION as u64) {
        return Err(TensorError::Checkpoint {
            message: format!(
                "unsupported checkpoint version {version:?} (expected {SYSTEM_CHECKPOINT_VERSION})"
            ),
        }
        .into());
    }

    let trading = doc.get("trading").ok_or_else(|| missing("trading"))?;
    let ddpg_config: DdpgConfig = serde_json::from_value(
        trading.get("config").ok_or_else(|| missing("trading.config"))?.clone(),
    )
    .map_err(ck_err)?;
    let online = ParamSet::from_json_records(
        trading.get("online").ok_or_else(|| missing("trading.online"))?.clone(),
    )?;
    let target = ParamSet::from_json_records(
        trading.get("target").ok_or_else(|| missing("trading.target"))?.clone(),
    )?;
    let agent = TradingAgent::from_params(ddpg_config, online, target)?;

    let risk_doc = doc.get("risk").ok_or_else(|| missing("risk"))?;
    let policy_config: PolicyConfig = serde_json::from_value(
        risk_doc.get("config").ok_or_else(|| missing("risk.config"))?.clone(),
    )
    .map_err(ck_err)?;
    let params = ParamSet::from_json_records(
        risk_doc.get("params").ok_or_else(|| missing("risk.params"))?.clone(),
    )?;
    let risk = RiskAgent::from_params(policy_config, params)?;

    Ok((agent, risk))
}
