//! Acceptance gate for the whole engine: one test per shipped guarantee,
//! tolerances pinned next to each assertion. Every test prints a
//! `[PASS] <criterion>: <measured values>` line on success (visible with
//! `cargo test -p quantfolio-cli --test acceptance -- --nocapture`); a
//! failure panics with the measured numbers in the message.
//!
//! The oracles here are deliberately independent of the library code they
//! check: finite differences for gradients, a dense `nalgebra` eigensolver
//! and closed-form spectra for the level engine, raw-`f64` accounting
//! replays and closed-form products for the backtest ledgers, brute-force
//! grid searches for the online-Newton projection, and a literal
//! hand-written truth table for execution fills. End-to-end determinism is
//! checked from outside the process by running the real binary twice.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use quantfolio_cli::OUT_ROOT_ENV;
use quantfolio_core::agents::policy::EpisodeStep;
use quantfolio_core::agents::{
    train_system, DdpgConfig, EncoderSharing, Hyperparams, RiskAgent, PolicyConfig, SystemPolicy,
    TradingAgent, Transition,
};
use quantfolio_core::baselines::{
    best_asset, run_baseline, trailing_cum_returns, winner_weights, BaselineConfig, BaselineKind,
    OnsParams, OnsState,
};
use quantfolio_core::env::{
    execution_price, run_backtest, train_test_split, EnvConfig, SignalType, Trigger,
};
use quantfolio_core::linalg::Matrix;
use quantfolio_core::market::{align, AssetSeries, Bar, MarketFrame, StateTensor};
use quantfolio_core::metrics::{arr, mdd, report, ReportOptions};
use quantfolio_core::portfolio::{Ledger, PriceRelatives, WeightVector};
use quantfolio_core::qpl::{qpl_ladder, solve_qfse, PotentialParams, QplConfig, QplPhysics};
use quantfolio_core::tensor::graph::{affine, backward, gru_cell, GruCellVars, Tape, Var};
use quantfolio_core::tensor::{ParamSet, Tensor};
use quantfolio_core::Scalar;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Relative gap with a unit floor, so tiny gradients are compared absolutely.
fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Plain relative error against a nonzero reference.
fn rel_err(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs()
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2019, 1, 1).unwrap()
}

fn date_on(day: usize) -> NaiveDate {
    day0() + chrono::Duration::days(day as i64)
}

/// Random-walk frame: independent per-asset streams, ±1.5% steps.
fn walk_frame(num_assets: usize, days: usize, seed: u64) -> MarketFrame {
    let mut series = Vec::with_capacity(num_assets);
    for a in 0..num_assets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(977).wrapping_add(a as u64));
        let mut px = 100.0 * (a + 1) as f64;
        let mut bars = Vec::with_capacity(days);
        for d in 0..days {
            let step: f64 = rng.gen_range(-0.015..0.015);
            px *= 1.0 + step;
            let spread = px * rng.gen_range(0.001..0.01);
            bars.push(Bar {
                date: date_on(d),
                open: px,
                high: px + spread,
                low: px - spread,
                close: px,
            });
        }
        series.push(AssetSeries::from_bars(format!("A{a}"), bars).unwrap());
    }
    align(series, 1).unwrap()
}

/// One asset drifts up `drift` per day, the rest are flat noise. Ranges are
/// kept tight so the learnability signal comes from the closes.
fn drift_frame(num_assets: usize, days: usize, star: usize, drift: f64, seed: u64) -> MarketFrame {
    let mut series = Vec::with_capacity(num_assets);
    for a in 0..num_assets {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(a as u64));
        let mut px = 100.0;
        let mut bars = Vec::with_capacity(days);
        for d in 0..days {
            let noise: f64 = rng.gen_range(-0.002..0.002);
            let step = if a == star { drift + noise } else { noise };
            px *= 1.0 + step;
            let spread = px * 0.004;
            bars.push(Bar {
                date: date_on(d),
                open: px,
                high: px + spread,
                low: px - spread,
                close: px,
            });
        }
        series.push(AssetSeries::from_bars(format!("A{a}"), bars).unwrap());
    }
    align(series, 1).unwrap()
}

/// Deterministic per-asset geometric growth: `close_a(t) = c0_a * g_a^t`.
fn geometric_frame(growth: &[f64], days: usize) -> MarketFrame {
    let mut series = Vec::with_capacity(growth.len());
    for (a, &g) in growth.iter().enumerate() {
        let mut px = 100.0 * (a + 1) as f64;
        let mut bars = Vec::with_capacity(days);
        for d in 0..days {
            if d > 0 {
                px *= g;
            }
            bars.push(Bar {
                date: date_on(d),
                open: px,
                high: px * 1.0005,
                low: px * 0.9995,
                close: px,
            });
        }
        series.push(AssetSeries::from_bars(format!("G{a}"), bars).unwrap());
    }
    align(series, 1).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// `final_value / (initial * prod_t (1 - mu_t) * (w_t . y_t))`, off by one.
fn identity_residual(ledger: &Ledger) -> f64 {
    let mut acc = ledger.initial_value;
    for row in &ledger.rows {
        acc *= (1.0 - row.cost) * row.gross_return;
    }
    let last = ledger.rows.last().map_or(ledger.initial_value, |r| r.value);
    (last / acc - 1.0).abs()
}

fn final_value(ledger: &Ledger) -> f64 {
    ledger.rows.last().map_or(ledger.initial_value, |r| r.value)
}

// ---------------------------------------------------------------------------
// 1. Gradients: every primitive and every full network vs finite differences
// ---------------------------------------------------------------------------

const FD_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_INSTANCES: usize = 20;

/// Weighted sum of all outputs: a scalar loss whose per-element gradient
/// probes the full Jacobian with distinct, nonzero weights.
fn probe(tape: &Tape<Scalar>, v: &Var<Scalar>) -> Var<Scalar> {
    let shape = v.shape();
    let n: usize = shape.iter().product();
    let data: Vec<Scalar> = (0..n).map(|k| 0.25 + 0.1 * (k % 7) as Scalar).collect();
    let c = tape.constant(Tensor::new(shape, data));
    v.mul(&c).unwrap().sum().unwrap()
}

struct PrimSpec {
    name: &'static str,
    leaves: Vec<(&'static str, Vec<usize>)>,
    /// Draw strictly positive leaves (for `ln`).
    positive: bool,
    build: Box<dyn Fn(&Tape<Scalar>, &[Var<Scalar>]) -> Var<Scalar>>,
}

fn primitive_specs() -> Vec<PrimSpec> {
    fn spec(
        name: &'static str,
        leaves: Vec<(&'static str, Vec<usize>)>,
        positive: bool,
        build: impl Fn(&Tape<Scalar>, &[Var<Scalar>]) -> Var<Scalar> + 'static,
    ) -> PrimSpec {
        PrimSpec { name, leaves, positive, build: Box::new(build) }
    }
    vec![
        spec("add", vec![("a", vec![2, 3]), ("b", vec![2, 3])], false, |t, l| {
            probe(t, &l[0].add(&l[1]).unwrap())
        }),
        spec("sub", vec![("a", vec![2, 3]), ("b", vec![2, 3])], false, |t, l| {
            probe(t, &l[0].sub(&l[1]).unwrap())
        }),
        spec("mul", vec![("a", vec![2, 3]), ("b", vec![2, 3])], false, |t, l| {
            probe(t, &l[0].mul(&l[1]).unwrap())
        }),
        spec("scale", vec![("a", vec![2, 3])], false, |t, l| {
            probe(t, &l[0].scale(1.7).unwrap())
        }),
        spec("add_row_bias", vec![("x", vec![4, 3]), ("b", vec![3])], false, |t, l| {
            probe(t, &l[0].add_row_bias(&l[1]).unwrap())
        }),
        spec(
            "add_channel_bias",
            vec![("x", vec![2, 3, 2, 2]), ("b", vec![3])],
            false,
            |t, l| probe(t, &l[0].add_channel_bias(&l[1]).unwrap()),
        ),
        spec("matmul", vec![("a", vec![3, 4]), ("b", vec![4, 2])], false, |t, l| {
            probe(t, &l[0].matmul(&l[1]).unwrap())
        }),
        spec("conv2d", vec![("x", vec![2, 2, 3, 4]), ("k", vec![3, 2, 1, 2])], false, |t, l| {
            probe(t, &l[0].conv2d(&l[1]).unwrap())
        }),
        // Leaf magnitudes are drawn in [0.2, 1.0), so inputs sit far from the
        // kink relative to the finite-difference step.
        spec("relu", vec![("x", vec![3, 4])], false, |t, l| probe(t, &l[0].relu().unwrap())),
        spec("sigmoid", vec![("x", vec![3, 4])], false, |t, l| {
            probe(t, &l[0].sigmoid().unwrap())
        }),
        spec("tanh", vec![("x", vec![3, 4])], false, |t, l| probe(t, &l[0].tanh().unwrap())),
        spec("ln", vec![("x", vec![3, 4])], true, |t, l| probe(t, &l[0].ln().unwrap())),
        spec("softmax", vec![("x", vec![2, 4])], false, |t, l| {
            probe(t, &l[0].softmax().unwrap())
        }),
        spec("sum", vec![("x", vec![2, 5])], false, |_, l| l[0].sum().unwrap()),
        spec("mean", vec![("x", vec![2, 5])], false, |_, l| l[0].mean().unwrap()),
        spec("reshape", vec![("x", vec![2, 6])], false, |t, l| {
            probe(t, &l[0].reshape(vec![3, 4]).unwrap())
        }),
        spec(
            "affine",
            vec![("x", vec![2, 3]), ("w", vec![3, 4]), ("b", vec![4])],
            false,
            |t, l| probe(t, &affine(&l[0], &l[1], &l[2]).unwrap()),
        ),
        spec(
            "gru_cell",
            vec![
                ("x", vec![1, 3]),
                ("h", vec![1, 4]),
                ("w_z", vec![3, 4]),
                ("u_z", vec![4, 4]),
                ("b_z", vec![4]),
                ("w_r", vec![3, 4]),
                ("u_r", vec![4, 4]),
                ("b_r", vec![4]),
                ("w_n", vec![3, 4]),
                ("u_n", vec![4, 4]),
                ("b_n", vec![4]),
            ],
            false,
            |t, l| {
                let vars = GruCellVars {
                    w_z: l[2].clone(),
                    u_z: l[3].clone(),
                    b_z: l[4].clone(),
                    w_r: l[5].clone(),
                    u_r: l[6].clone(),
                    b_r: l[7].clone(),
                    w_n: l[8].clone(),
                    u_n: l[9].clone(),
                    b_n: l[10].clone(),
                };
                probe(t, &gru_cell(&l[0], &l[1], &vars).unwrap())
            },
        ),
    ]
}

/// Central-difference check of one primitive over every leaf element.
fn check_primitive(spec: &PrimSpec, seed0: u64) -> f64 {
    let mut worst = 0.0f64;
    for inst in 0..GRAD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed0 + inst as u64);
        let mut set = ParamSet::new();
        let mut ids = Vec::with_capacity(spec.leaves.len());
        for (name, shape) in &spec.leaves {
            let n: usize = shape.iter().product();
            let data: Vec<Scalar> = (0..n)
                .map(|_| {
                    let mag = rng.gen_range(0.2..1.0);
                    if spec.positive || rng.gen_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            ids.push(set.add(*name, Tensor::new(shape.clone(), data)));
        }
        {
            let tape = Tape::new();
            let leaves: Vec<Var<Scalar>> = ids.iter().map(|&id| tape.param(&set, id)).collect();
            let loss = (spec.build)(&tape, &leaves);
            backward(&loss, &mut set).unwrap();
        }
        let grads: Vec<Vec<Scalar>> = ids.iter().map(|&id| set.grad(id).data().to_vec()).collect();
        let eval = |set: &ParamSet<Scalar>| -> Scalar {
            let tape = Tape::new();
            let leaves: Vec<Var<Scalar>> = ids.iter().map(|&id| tape.param(set, id)).collect();
            (spec.build)(&tape, &leaves).value().item()
        };
        for (p, &id) in ids.iter().enumerate() {
            for k in 0..grads[p].len() {
                let base = set.value(id).data()[k];
                set.value_mut(id).data_mut()[k] = base + FD_H;
                let up = eval(&set);
                set.value_mut(id).data_mut()[k] = base - FD_H;
                let down = eval(&set);
                set.value_mut(id).data_mut()[k] = base;
                let fd = (up - down) / (2.0 * FD_H);
                let gap = rel_gap(grads[p][k], fd);
                assert!(
                    gap < GRAD_TOL,
                    "{}: instance {inst}, leaf '{}' element {k}: autodiff {} vs \
                     finite difference {fd} (gap {gap:.3e} >= {GRAD_TOL:.0e})",
                    spec.name,
                    spec.leaves[p].0,
                    grads[p][k],
                );
                worst = worst.max(gap);
            }
        }
    }
    worst
}

fn random_state(m: usize, window: usize, rng: &mut ChaCha8Rng) -> StateTensor {
    let mut values = Matrix::zeros(m + 1, window);
    for r in 0..=m {
        for c in 0..window {
            values.set(r, c, rng.gen_range(-0.5..0.5));
        }
    }
    StateTensor { values, as_of: window - 1 }
}

fn random_simplex(n: usize, rng: &mut ChaCha8Rng) -> Vec<Scalar> {
    let raw: Vec<Scalar> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: Scalar = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn random_transitions(m: usize, window: usize, count: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| Transition {
            state: random_state(m, window, &mut rng),
            action: random_simplex(m + 1, &mut rng),
            reward: rng.gen_range(-0.02..0.02),
            next_state: random_state(m, window, &mut rng),
            done: i == count - 1,
        })
        .collect()
}

/// Representative elements of a flat tensor: first, middle, last.
fn probe_elements(len: usize) -> Vec<usize> {
    let mut els = vec![0, len / 2, len.saturating_sub(1)];
    els.sort_unstable();
    els.dedup();
    els
}

fn ddpg_config(sharing: EncoderSharing) -> DdpgConfig {
    DdpgConfig {
        num_assets: 2,
        window: 4,
        gamma: 0.99,
        tau: 0.01,
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        sharing,
    }
}

/// Critic loss gradients (shared encoder) vs central differences.
fn check_critic_network() -> f64 {
    let names = [
        "encoder.conv1.weight",
        "encoder.conv2.bias",
        "critic.state.weight",
        "critic.action.weight",
        "critic.out.bias",
    ];
    let mut worst = 0.0f64;
    for inst in 0..GRAD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(11_000 + inst as u64);
        let mut agent = TradingAgent::new(ddpg_config(EncoderSharing::Shared), &mut rng).unwrap();
        let owned = random_transitions(2, 4, 4, 12_000 + inst as u64);
        let batch: Vec<&Transition> = owned.iter().collect();
        let targets = agent.critic_targets(&batch).unwrap();
        agent.backprop_critic(&batch, &targets).unwrap();
        let mut probes = Vec::new();
        for name in names {
            let id = agent.online().id(name).unwrap();
            let grad = agent.online().grad(id).data().to_vec();
            for k in probe_elements(grad.len()) {
                probes.push((name, id, k, grad[k]));
            }
        }
        for (name, id, k, analytic) in probes {
            let base = agent.online().value(id).data()[k];
            agent.online_mut().value_mut(id).data_mut()[k] = base + FD_H;
            let up = agent.critic_loss(&batch, &targets).unwrap();
            agent.online_mut().value_mut(id).data_mut()[k] = base - FD_H;
            let down = agent.critic_loss(&batch, &targets).unwrap();
            agent.online_mut().value_mut(id).data_mut()[k] = base;
            let fd = (up - down) / (2.0 * FD_H);
            let gap = rel_gap(analytic, fd);
            assert!(
                gap < GRAD_TOL,
                "critic (shared): instance {inst}, '{name}'[{k}]: autodiff {analytic} vs \
                 finite difference {fd} (gap {gap:.3e} >= {GRAD_TOL:.0e})",
            );
            worst = worst.max(gap);
        }
    }
    worst
}

/// Actor objective gradients vs central differences. The stored gradients
/// descend the negated objective, so the analytic value is their negation.
/// With a separate actor encoder every layer, encoder included, is covered;
/// the shared configuration is checked on the actor head (its encoder branch
/// into the critic's state input is deliberately detached).
fn check_actor_network(sharing: EncoderSharing, names: &[&str], seed0: u64) -> f64 {
    let mut worst = 0.0f64;
    for inst in 0..GRAD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed0 + inst as u64);
        let mut agent = TradingAgent::new(ddpg_config(sharing), &mut rng).unwrap();
        let owned = random_transitions(2, 4, 4, seed0 + 500 + inst as u64);
        let batch: Vec<&Transition> = owned.iter().collect();
        agent.backprop_actor(&batch).unwrap();
        let mut probes = Vec::new();
        for &name in names {
            let id = agent.online().id(name).unwrap();
            let grad = agent.online().grad(id).data().to_vec();
            for k in probe_elements(grad.len()) {
                probes.push((name, id, k, -grad[k]));
            }
        }
        for (name, id, k, analytic) in probes {
            let base = agent.online().value(id).data()[k];
            agent.online_mut().value_mut(id).data_mut()[k] = base + FD_H;
            let up = agent.actor_objective(&batch).unwrap();
            agent.online_mut().value_mut(id).data_mut()[k] = base - FD_H;
            let down = agent.actor_objective(&batch).unwrap();
            agent.online_mut().value_mut(id).data_mut()[k] = base;
            let fd = (up - down) / (2.0 * FD_H);
            let gap = rel_gap(analytic, fd);
            assert!(
                gap < GRAD_TOL,
                "actor ({sharing:?}): instance {inst}, '{name}'[{k}]: autodiff {analytic} vs \
                 finite difference {fd} (gap {gap:.3e} >= {GRAD_TOL:.0e})",
            );
            worst = worst.max(gap);
        }
    }
    worst
}

/// Signal-policy episode loss gradients vs central differences.
fn check_policy_network() -> f64 {
    let names =
        ["policy.gru.w_z", "policy.gru.u_n", "policy.gru.b_r", "policy.fc1.weight", "policy.out.bias"];
    let mut worst = 0.0f64;
    for inst in 0..GRAD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(31_000 + inst as u64);
        let mut config = PolicyConfig::new(1);
        config.window = 2;
        config.hidden = 3;
        config.fc_hidden = 2;
        let mut risk = RiskAgent::new(config, &mut rng).unwrap();
        let steps: Vec<EpisodeStep> = (0..3)
            .map(|i| {
                let mut values = Matrix::zeros(2, 2);
                for r in 0..2 {
                    for c in 0..2 {
                        let mag = rng.gen_range(0.1..0.5);
                        values.set(r, c, if rng.gen_bool(0.5) { mag } else { -mag });
                    }
                }
                EpisodeStep {
                    state: StateTensor { values, as_of: 1 },
                    signal: if i % 2 == 0 { SignalType::Bullish } else { SignalType::Bearish },
                    pg_reward: rng.gen_range(-0.05..0.05),
                }
            })
            .collect();
        risk.backprop_episode(&steps).unwrap();
        let mut probes = Vec::new();
        for name in names {
            let id = risk.params().id(name).unwrap();
            let grad = risk.params().grad(id).data().to_vec();
            for k in probe_elements(grad.len()) {
                probes.push((name, id, k, grad[k]));
            }
        }
        for (name, id, k, analytic) in probes {
            let base = risk.params().value(id).data()[k];
            risk.params_mut().value_mut(id).data_mut()[k] = base + FD_H;
            let up = risk.episode_loss(&steps).unwrap();
            risk.params_mut().value_mut(id).data_mut()[k] = base - FD_H;
            let down = risk.episode_loss(&steps).unwrap();
            risk.params_mut().value_mut(id).data_mut()[k] = base;
            let fd = (up - down) / (2.0 * FD_H);
            let gap = rel_gap(analytic, fd);
            assert!(
                gap < GRAD_TOL,
                "policy: instance {inst}, '{name}'[{k}]: autodiff {analytic} vs \
                 finite difference {fd} (gap {gap:.3e} >= {GRAD_TOL:.0e})",
            );
            worst = worst.max(gap);
        }
    }
    worst
}

#[test]
fn a01_gradients_match_central_differences() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, spec) in primitive_specs().iter().enumerate() {
        worst = worst.max(check_primitive(spec, 0xA001_0000 + 1000 * i as u64));
    }
    let worst_primitives = worst;
    let worst_critic = check_critic_network();
    let worst_actor_separate = check_actor_network(
        EncoderSharing::Separate,
        &["encoder_actor.conv1.weight", "encoder_actor.conv2.bias", "actor.fc1.weight", "actor.out.bias"],
        21_000,
    );
    let worst_actor_shared =
        check_actor_network(EncoderSharing::Shared, &["actor.fc1.weight", "actor.out.bias"], 26_000);
    let worst_policy = check_policy_network();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient suite took {elapsed:.1}s (budget 60s)");
    println!(
        "[PASS] gradients: central differences (h = {FD_H:.0e}, {GRAD_INSTANCES} instances each) \
         agree within {GRAD_TOL:.0e}; worst gaps: primitives {worst_primitives:.2e}, critic \
         {worst_critic:.2e}, actor separate {worst_actor_separate:.2e}, actor shared head \
         {worst_actor_shared:.2e}, policy {worst_policy:.2e}; {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// 2. Level-engine eigensolver vs closed-form and dense oracles
// ---------------------------------------------------------------------------

/// Dense symmetric matrix for the same discretization the solver documents:
/// interior grid of `n` points over `[-r, r]`, `h = 2r/(n+1)`, kinetic
/// coefficient `(hbar/2m)/h^2`, potential `(ge*d/2) x^2 - (ge*v/4) x^4`.
fn dense_oscillator_eigenvalues(
    n: usize,
    r: f64,
    delta_q: f64,
    v_q: f64,
    k_lowest: usize,
) -> Vec<f64> {
    let h = 2.0 * r / (n as f64 + 1.0);
    let kin = 0.5 / (h * h); // hbar = mass = 1
    let mut mat = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let x = -r + h * (j as f64 + 1.0);
        let v = 0.5 * delta_q * x * x - 0.25 * v_q * x.powi(4); // gamma * eta = 1
        mat[(j, j)] = 2.0 * kin + v;
        if j + 1 < n {
            mat[(j, j + 1)] = -kin;
            mat[(j + 1, j)] = -kin;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(mat);
    let mut evs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    evs.truncate(k_lowest);
    evs
}

#[test]
fn a02_eigensolver_matches_oracles() {
    let start = Instant::now();
    let physics = QplPhysics::default();

    // Pure quadratic well: spectrum must be n + 1/2 in natural units.
    let harmonic =
        solve_qfse(&PotentialParams { delta_q: 1.0, v_q: 0.0 }, &physics, 12.0, 2048, 4).unwrap();
    let mut worst_harmonic = 0.0f64;
    for (n, &e) in harmonic.iter().enumerate().take(5) {
        let exact = n as f64 + 0.5;
        let rel = rel_err(e, exact);
        assert!(
            rel < 1e-3,
            "harmonic level {n}: solver {e} vs exact {exact} (rel {rel:.3e} >= 1e-3)"
        );
        worst_harmonic = worst_harmonic.max(rel);
    }

    // Anharmonic well: same matrix, independent dense eigensolver.
    let (delta_q, v_q, domain, grid) = (1.0, 0.01, 4.5, 256);
    let ours =
        solve_qfse(&PotentialParams { delta_q, v_q }, &physics, domain, grid, 4).unwrap();
    let dense = dense_oscillator_eigenvalues(grid, domain, delta_q, v_q, 5);
    let mut worst_dense = 0.0f64;
    for (k, (&a, &b)) in ours.iter().zip(&dense).enumerate() {
        let rel = rel_err(a, b);
        assert!(
            rel < 1e-9,
            "anharmonic level {k}: bisection {a} vs dense oracle {b} (rel {rel:.3e} >= 1e-9)"
        );
        worst_dense = worst_dense.max(rel);
    }

    // Grid-refinement stability: doubling 2048 -> 4096 points must leave the
    // ground level unchanged to 1e-6 relative.
    let coarse =
        solve_qfse(&PotentialParams { delta_q, v_q }, &physics, 4.0, 2048, 1).unwrap()[0];
    let fine = solve_qfse(&PotentialParams { delta_q, v_q }, &physics, 4.0, 4096, 1).unwrap()[0];
    let doubling = rel_err(coarse, fine);
    assert!(
        doubling < 1e-6,
        "ground level moved {doubling:.3e} (>= 1e-6) when doubling the grid: {coarse} -> {fine}"
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "eigensolver suite took {elapsed:.1}s (budget 30s)");
    println!(
        "[PASS] eigensolver: harmonic spectrum within {worst_harmonic:.2e} of n+1/2 (tol 1e-3); \
         anharmonic within {worst_dense:.2e} of dense oracle (tol 1e-9); grid doubling moved \
         E0 by {doubling:.2e} (tol 1e-6); {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// 3. Accounting identity on every backtest ledger
// ---------------------------------------------------------------------------

#[test]
fn a03_ledger_accounting_identity_holds() {
    let frame = walk_frame(3, 100, 31);
    let env_cfg = EnvConfig {
        commission: 0.001,
        gini_eta: 0.05,
        risk_free_daily: 1e-4,
        window: 3,
        initial_value: 50_000.0,
        qpl: QplConfig {
            lookback: 32,
            bins: 16,
            grid_points: 256,
            levels: 1,
            domain_sigmas: 3.0,
            physics: QplPhysics::default(),
        },
        qpl_enabled: true,
    };
    let split = train_test_split(&frame, 0.6, &env_cfg).unwrap();
    let hp = Hyperparams {
        episodes: 2,
        batch_size: 8,
        buffer_capacity: 256,
        warmup_transitions: 8,
        gru_hidden: 8,
        fc_hidden: 8,
        seed: 17,
        ..Default::default()
    };
    let system = train_system(&frame, &env_cfg, split.train.clone(), &hp).unwrap();
    let mut policy = SystemPolicy::new(&system.agent, &system.risk);
    let agent_ledger =
        run_backtest(&mut policy, &frame, env_cfg.clone(), split.test.clone()).unwrap();

    let bl_cfg = BaselineConfig {
        commission: env_cfg.commission,
        risk_free_daily: env_cfg.risk_free_daily,
        initial_value: env_cfg.initial_value,
        winner_lookback: 5,
        ons: OnsParams::default(),
        pay_commission: true,
    };
    let mut ledgers = vec![("ours".to_string(), agent_ledger)];
    for kind in BaselineKind::ALL {
        let ledger = run_baseline(kind, &frame, split.test.clone(), &bl_cfg).unwrap();
        ledgers.push((kind.name().to_string(), ledger));
    }

    let mut worst = 0.0f64;
    for (name, ledger) in &ledgers {
        assert!(!ledger.rows.is_empty(), "{name}: empty ledger");
        let res = identity_residual(ledger);
        assert!(
            res < 1e-10,
            "{name}: final value deviates from initial * prod (1-mu)(w.y) by {res:.3e} (>= 1e-10)"
        );
        worst = worst.max(res);
    }
    println!(
        "[PASS] accounting identity: {} ledgers (levels enabled), worst residual {worst:.2e} \
         (tol 1e-10)",
        ledgers.len()
    );
}

// ---------------------------------------------------------------------------
// 4. Execution fill truth table: 18 literal cases, exact
// ---------------------------------------------------------------------------

#[test]
fn a04_execution_truth_table_is_exact() {
    let ladder = qpl_ladder(&[1.0, 1.03], 100.0).unwrap();
    let lower = ladder.down1(); // 100 * (1 - 0.03) = 97
    let upper = ladder.up1(); // 100 * (1 + 0.03) = 103
    let date = day0();
    // Three price patterns against the (97, 103) band, close always 101:
    // a dip through the lower level, a breakout above the upper level with
    // the low held inside, and a day fully inside the band.
    let dip = Bar { date, open: 100.0, high: 102.0, low: 96.0, close: 101.0 };
    let breakout = Bar { date, open: 100.0, high: 104.0, low: 98.0, close: 101.0 };
    let inside = Bar { date, open: 100.0, high: 102.0, low: 98.0, close: 101.0 };

    #[derive(Clone, Copy, Debug, PartialEq)]
    enum Expect {
        Lower,
        Upper,
        Close,
    }
    use Expect::*;
    use SignalType::{Bearish, Bullish};

    // Hand-enumerated: an early fill happens only when the signal agrees
    // with the trade direction AND the day's path reaches the level; a dip
    // fills at the lower level, a breakout (low holding) at the upper one.
    let table: [(SignalType, f64, &Bar, &str, Expect); 18] = [
        (Bullish, 0.75, &dip, "dip", Lower),
        (Bullish, 0.75, &breakout, "breakout", Upper),
        (Bullish, 0.75, &inside, "inside", Close),
        (Bullish, 0.0, &dip, "dip", Close),
        (Bullish, 0.0, &breakout, "breakout", Close),
        (Bullish, 0.0, &inside, "inside", Close),
        (Bullish, -0.75, &dip, "dip", Close),
        (Bullish, -0.75, &breakout, "breakout", Close),
        (Bullish, -0.75, &inside, "inside", Close),
        (Bearish, 0.75, &dip, "dip", Close),
        (Bearish, 0.75, &breakout, "breakout", Close),
        (Bearish, 0.75, &inside, "inside", Close),
        (Bearish, 0.0, &dip, "dip", Close),
        (Bearish, 0.0, &breakout, "breakout", Close),
        (Bearish, 0.0, &inside, "inside", Close),
        (Bearish, -0.75, &dip, "dip", Lower),
        (Bearish, -0.75, &breakout, "breakout", Upper),
        (Bearish, -0.75, &inside, "inside", Close),
    ];

    for (signal, dw, bar, pattern, expect) in table {
        let decision = execution_price(bar, &ladder, signal, dw);
        let (want_price, want_trigger) = match expect {
            Lower => (lower, Trigger::EarlyAtLower),
            Upper => (upper, Trigger::EarlyAtUpper),
            Close => (bar.close, Trigger::AtClose),
        };
        assert!(
            decision.price == want_price && decision.trigger == want_trigger,
            "({signal}, dw {dw:+}, {pattern}): got {:?}, expected {expect:?} at {want_price}",
            decision,
        );
    }
    println!(
        "[PASS] execution truth table: all 18 signal x direction x pattern fills exact \
         (levels {lower}/{upper}, close 101)"
    );
}

// ---------------------------------------------------------------------------
// 5. Baseline oracles: closed-form UCRP, brute-force ONS, direct argmaxes
// ---------------------------------------------------------------------------

#[test]
fn a05_baselines_match_independent_oracles() {
    // --- UCRP on a geometric market: raw-f64 replay plus closed form. ---
    let g = [1.01, 0.99, 1.005];
    let frame = geometric_frame(&g, 30);
    let cfg = BaselineConfig {
        commission: 0.002,
        risk_free_daily: 0.0,
        initial_value: 10_000.0,
        winner_lookback: 5,
        ons: OnsParams::default(),
        pay_commission: true,
    };
    let days = 5..30;
    let ledger = run_baseline(BaselineKind::Ucrp, &frame, days.clone(), &cfg).unwrap();

    // Replay: uniform target, drift by the previous day's relatives, asset
    // turnover only, all in locally computed f64 arithmetic.
    let n = 4usize;
    let u = 1.0 / n as f64;
    let mut value = cfg.initial_value;
    let mut w_prev = vec![1.0, 0.0, 0.0, 0.0]; // all cash
    let mut y_prev = vec![1.0; n];
    let mut worst_row = 0.0f64;
    for (row, t) in ledger.rows.iter().zip(days.clone()) {
        let mut y = vec![1.0];
        for a in 0..3 {
            y.push(frame.close(a, t) / frame.close(a, t - 1));
        }
        let wy_prev: f64 = w_prev.iter().zip(&y_prev).map(|(w, yy)| w * yy).sum();
        let drifted: Vec<f64> =
            w_prev.iter().zip(&y_prev).map(|(w, yy)| w * yy / wy_prev).collect();
        let turnover: f64 = (1..n).map(|i| (u - drifted[i]).abs()).sum();
        let mu = cfg.commission * turnover;
        let gross: f64 = y.iter().map(|yy| u * yy).sum();
        value *= (1.0 - mu) * gross;
        worst_row = worst_row.max(rel_err(row.value, value));
        w_prev = vec![u; n];
        y_prev = y;
    }
    assert!(
        worst_row < 1e-10,
        "UCRP replay diverged from the ledger by {worst_row:.3e} (>= 1e-10)"
    );

    // Closed form: V_T = V0 (1-mu_1) S ((1-mu*) S)^(T-1) with S = u . y.
    let s = 0.25 * (1.0 + g[0] + g[1] + g[2]);
    let mu_first = cfg.commission * 3.0 * u; // all cash -> uniform
    let turnover_steady: f64 = g.iter().map(|&gi| (u - u * gi / s).abs()).sum();
    let mu_steady = cfg.commission * turnover_steady;
    let t_steps = days.len() as i32;
    let closed_form =
        cfg.initial_value * (1.0 - mu_first) * s * ((1.0 - mu_steady) * s).powi(t_steps - 1);
    let ucrp_rel = rel_err(final_value(&ledger), closed_form);
    assert!(
        ucrp_rel < 1e-10,
        "UCRP final {} vs closed form {closed_form} (rel {ucrp_rel:.3e} >= 1e-10)",
        final_value(&ledger),
    );

    // --- Online-Newton step vs a brute-force projection oracle (2 comps). ---
    let params = OnsParams::default();
    let mut state = OnsState::new(2, params);
    let mut a_or = [[1.0f64, 0.0], [0.0, 1.0]];
    let mut b_or = [0.0f64; 2];
    let relatives = [1.04, 0.97, 1.01, 0.95, 1.06];
    let mut w = vec![0.5, 0.5];
    let mut worst_ons = 0.0f64;
    for (step_idx, &ga) in relatives.iter().enumerate() {
        let y = vec![1.0, ga];
        let lib_next = state
            .step(&PriceRelatives::new(y.clone()).unwrap(), &WeightVector::new(w.clone()).unwrap())
            .unwrap();

        // Oracle: rank-one accumulators, exact 2x2 Newton solve, then a
        // two-stage grid search of the norm-A projection onto the simplex.
        let wy: f64 = w[0] * y[0] + w[1] * y[1];
        let grad = [y[0] / wy, y[1] / wy];
        for i in 0..2 {
            for j in 0..2 {
                a_or[i][j] += grad[i] * grad[j];
            }
            b_or[i] += (1.0 + 1.0 / params.beta) * grad[i];
        }
        let det = a_or[0][0] * a_or[1][1] - a_or[0][1] * a_or[1][0];
        let cand = [
            params.delta * (a_or[1][1] * b_or[0] - a_or[0][1] * b_or[1]) / det,
            params.delta * (a_or[0][0] * b_or[1] - a_or[1][0] * b_or[0]) / det,
        ];
        let objective = |x0: f64| -> f64 {
            let d = [x0 - cand[0], 1.0 - x0 - cand[1]];
            d[0] * a_or[0][0] * d[0]
                + 2.0 * d[0] * a_or[0][1] * d[1]
                + d[1] * a_or[1][1] * d[1]
        };
        let mut best_x = 0.0;
        let mut best_f = f64::INFINITY;
        for k in 0..=10_000 {
            let x0 = k as f64 * 1e-4;
            let f = objective(x0);
            if f < best_f {
                best_f = f;
                best_x = x0;
            }
        }
        let lo = (best_x - 2e-4).max(0.0);
        let hi = (best_x + 2e-4).min(1.0);
        let mut fine_x = best_x;
        let mut fine_f = best_f;
        let steps = ((hi - lo) / 1e-8).round() as usize;
        for k in 0..=steps {
            let x0 = lo + k as f64 * 1e-8;
            let f = objective(x0);
            if f < fine_f {
                fine_f = f;
                fine_x = x0;
            }
        }
        let oracle = [fine_x, 1.0 - fine_x]; // eta = 0: no uniform mixing
        for i in 0..2 {
            let diff = (lib_next.as_slice()[i] - oracle[i]).abs();
            assert!(
                diff < 1e-6,
                "ONS step {step_idx} component {i}: library {} vs grid oracle {} \
                 (diff {diff:.3e} >= 1e-6)",
                lib_next.as_slice()[i],
                oracle[i],
            );
            worst_ons = worst_ons.max(diff);
        }
        w = lib_next.as_slice().to_vec();
    }

    // --- Winner: trailing returns and the strict-argmax rule, directly. ---
    let wframe = walk_frame(4, 40, 77);
    let lookback = 6;
    let rf = 2e-4;
    let mut winner_days = 0;
    for day in 8..20 {
        let cum = trailing_cum_returns(&wframe, day, lookback, rf).unwrap();
        let mut cash = 1.0;
        for _ in 0..lookback {
            cash *= 1.0 + rf;
        }
        let mut oracle_cum = vec![cash];
        for a in 0..4 {
            oracle_cum.push(wframe.close(a, day - 1) / wframe.close(a, day - 1 - lookback));
        }
        for (k, (&lib, &orc)) in cum.iter().zip(&oracle_cum).enumerate() {
            assert!(
                rel_err(lib, orc) < 1e-12,
                "day {day}: trailing return {k}: {lib} vs oracle {orc}"
            );
        }
        // Assets win ties; cash only on a strictly better return.
        let mut best = 1;
        for j in 2..oracle_cum.len() {
            if oracle_cum[j] > oracle_cum[best] {
                best = j;
            }
        }
        if oracle_cum[0] > oracle_cum[best] {
            best = 0;
        }
        let lib_w = winner_weights(&cum);
        let oracle_w: WeightVector<Scalar> = WeightVector::one_hot(4, best);
        assert_eq!(
            lib_w.as_slice(),
            oracle_w.as_slice(),
            "day {day}: winner chose a different component than the argmax oracle"
        );
        winner_days += 1;
    }

    // --- Best asset in hindsight: direct ratio argmax over the range. ---
    let range = 10..35;
    let lib_best = best_asset(&wframe, range.clone()).unwrap();
    let mut oracle_best = 0;
    let mut oracle_ratio = f64::NEG_INFINITY;
    for a in 0..4 {
        let ratio = wframe.close(a, range.end - 1) / wframe.close(a, range.start - 1);
        if ratio > oracle_ratio {
            oracle_ratio = ratio;
            oracle_best = a + 1; // portfolio index, cash first
        }
    }
    assert_eq!(lib_best, oracle_best, "best-asset argmax mismatch");

    println!(
        "[PASS] baselines: UCRP within {ucrp_rel:.2e} of the closed form (tol 1e-10, replay \
         worst {worst_row:.2e}); ONS within {worst_ons:.2e} of the grid projection oracle \
         (tol 1e-6, 5 steps); winner matches the argmax oracle on {winner_days} days; \
         best-asset matches (component {lib_best})"
    );
}

// ---------------------------------------------------------------------------
// 6. Metric oracles: exact drawdowns, both annualization conventions
// ---------------------------------------------------------------------------

#[test]
fn a06_metric_values_and_labels_are_exact() {
    let m1 = mdd(&[100.0, 80.0, 120.0]).unwrap();
    assert_eq!(m1, 0.20, "mdd(100, 80, 120) must be exactly 0.20, got {m1}");
    let m2 = mdd(&[100.0, 120.0, 60.0, 90.0]).unwrap();
    assert_eq!(m2, 0.50, "mdd(100, 120, 60, 90) must be exactly 0.50, got {m2}");

    let values = [100.0, 110.0, 121.0];
    let a = arr(&values, 252.0).unwrap();
    let lin = ((121.0 - 100.0) / 100.0) * (252.0 / 2.0);
    let geo = (121.0f64 / 100.0).powf(252.0 / 2.0);
    assert!(
        rel_err(a.rate, lin) < 1e-12,
        "linear annualized rate {} vs oracle {lin}",
        a.rate
    );
    assert!(
        rel_err(a.growth_factor, geo) < 1e-12,
        "geometric annualized factor {} vs oracle {geo}",
        a.growth_factor
    );

    // Both conventions must reach the artifacts, labeled.
    let frame = walk_frame(2, 20, 5);
    let cfg = BaselineConfig::default();
    let ledger = run_baseline(BaselineKind::Ucrp, &frame, 5..20, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report(
        &[("demo".to_string(), ledger)],
        dir.path(),
        &ReportOptions { rf_annual: 0.0, ..Default::default() },
    )
    .unwrap();
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(
        header.contains("arr_rate") && header.contains("arr_growth_factor"),
        "metrics.csv header must label both annualization conventions: {header}"
    );
    let json = fs::read_to_string(dir.path().join("metrics.json")).unwrap();
    assert!(
        json.contains("arr_rate") && json.contains("arr_growth_factor"),
        "metrics.json must label both annualization conventions"
    );

    println!(
        "[PASS] metrics: drawdowns exactly 0.20 and 0.50; annualized return {lin:.4} (linear) \
         and {geo:.4} (geometric) both emitted and labeled"
    );
}

// ---------------------------------------------------------------------------
// 7. Learnability smoke test: one drifting asset must be found
// ---------------------------------------------------------------------------

#[test]
fn a07_agent_learns_the_drifting_asset() {
    let start = Instant::now();
    let star = 2usize;
    let frame = drift_frame(5, 220, star, 0.003, 424_242);
    let env_cfg = EnvConfig {
        commission: 0.001,
        gini_eta: 0.0,
        risk_free_daily: 0.0,
        window: 3,
        initial_value: 100_000.0,
        qpl: QplConfig::default(),
        qpl_enabled: false,
    };
    let split = train_test_split(&frame, 0.8, &env_cfg).unwrap();
    let hp = Hyperparams {
        episodes: 50,
        batch_size: 64,
        buffer_capacity: 10_000,
        warmup_transitions: 64,
        noise_start: 0.3,
        noise_end: 0.01,
        gamma: 0.99,
        tau: 0.01,
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        policy_lr: 1e-4,
        gru_hidden: 16,
        fc_hidden: 16,
        standardize_pg: false,
        sharing: EncoderSharing::Shared,
        seed: 7,
    };
    let system = train_system(&frame, &env_cfg, split.train.clone(), &hp).unwrap();
    let last = system.log.last().unwrap();
    let star_weight = last.mean_weights[star + 1];

    let mut policy = SystemPolicy::new(&system.agent, &system.risk);
    let ours = run_backtest(&mut policy, &frame, env_cfg.clone(), split.test.clone()).unwrap();
    let bl_cfg = BaselineConfig {
        commission: env_cfg.commission,
        risk_free_daily: 0.0,
        initial_value: env_cfg.initial_value,
        ..Default::default()
    };
    let ucrp = run_baseline(BaselineKind::Ucrp, &frame, split.test.clone(), &bl_cfg).unwrap();
    let (ours_final, ucrp_final) = (final_value(&ours), final_value(&ucrp));

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "learnability run took {elapsed:.1}s (budget 600s)");
    assert!(
        star_weight > 0.6,
        "final-episode mean weight on the drifting asset is {star_weight:.3} (needs > 0.6); \
         mean weights {:?}",
        last.mean_weights,
    );
    assert!(
        ours_final > ucrp_final,
        "held-out final value {ours_final:.2} does not beat uniform rebalancing {ucrp_final:.2}"
    );
    println!(
        "[PASS] learnability: mean weight on the drifting asset {star_weight:.3} (> 0.6) after \
         {} episodes; held-out final {ours_final:.0} vs uniform {ucrp_final:.0}; {elapsed:.0}s",
        hp.episodes
    );
}

// ---------------------------------------------------------------------------
// 8. Diversity bonus sweep: stronger bonus, no less diverse play
// ---------------------------------------------------------------------------

#[test]
fn a08_diversity_bonus_sweep_is_monotone() {
    let etas = [0.0, 0.01, 0.05, 0.1];
    let seeds = [21u64, 22, 23];
    let frame = drift_frame(5, 140, 1, 0.003, 90_910);
    let base_env = EnvConfig {
        commission: 0.001,
        gini_eta: 0.0,
        risk_free_daily: 0.0,
        window: 3,
        initial_value: 100_000.0,
        qpl: QplConfig::default(),
        qpl_enabled: false,
    };

    // The diversity actually played once training has settled: the mean
    // Gini of the allocations over the second half of the episodes,
    // averaged across seeds (the same seeds for every eta, so the
    // comparison is paired). A single greedy snapshot would be far noisier
    // than this integrated measurement.
    let mut means = Vec::new();
    for &eta in &etas {
        let mut env_cfg = base_env.clone();
        env_cfg.gini_eta = eta;
        let split = train_test_split(&frame, 0.8, &env_cfg).unwrap();
        let mut total = 0.0;
        for &seed in &seeds {
            let hp = Hyperparams {
                episodes: 20,
                batch_size: 32,
                buffer_capacity: 4_096,
                warmup_transitions: 32,
                noise_start: 0.3,
                noise_end: 0.02,
                // A short value horizon keeps the critic's target scale
                // comparable across bonus strengths.
                gamma: 0.9,
                actor_lr: 1e-3,
                critic_lr: 1e-3,
                gru_hidden: 8,
                fc_hidden: 8,
                seed,
                ..Default::default()
            };
            let system = train_system(&frame, &env_cfg, split.train.clone(), &hp).unwrap();
            let late = &system.log[hp.episodes / 2..];
            total += late.iter().map(|e| e.mean_gini).sum::<f64>() / late.len() as f64;
        }
        means.push(total / seeds.len() as f64);
    }

    for k in 0..means.len() - 1 {
        assert!(
            means[k + 1] >= means[k] - 1e-9,
            "mean played diversity dropped from {:.4} (eta {}) to {:.4} (eta {}); \
             full sweep {means:?}",
            means[k],
            etas[k],
            means[k + 1],
            etas[k + 1],
        );
    }
    println!(
        "[PASS] diversity sweep: mean played Gini diversity {:?} (late episodes) is \
         non-decreasing over eta {etas:?} ({} seeds averaged)",
        means.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>(),
        seeds.len()
    );
}

// ---------------------------------------------------------------------------
// 9. Shared encoder reaches its plateau at least as fast as separate
// ---------------------------------------------------------------------------

/// First episode (1-based) whose cumulative reward reaches 90% of the final
/// episode's cumulative reward.
fn episodes_to_plateau(cum_rewards: &[f64]) -> usize {
    let target = 0.9 * cum_rewards.last().copied().unwrap();
    for (i, &r) in cum_rewards.iter().enumerate() {
        if r >= target {
            return i + 1;
        }
    }
    cum_rewards.len()
}

#[test]
fn a09_shared_encoder_is_no_slower_to_plateau() {
    let seeds = [31u64, 32, 33, 34, 35];
    let frame = drift_frame(5, 200, 3, 0.003, 5_150);
    let env_cfg = EnvConfig {
        commission: 0.001,
        gini_eta: 0.0,
        risk_free_daily: 0.0,
        window: 3,
        initial_value: 100_000.0,
        qpl: QplConfig::default(),
        qpl_enabled: false,
    };
    let split = train_test_split(&frame, 0.8, &env_cfg).unwrap();

    let mut results: BTreeMap<&str, Vec<(u64, usize)>> = BTreeMap::new();
    for (label, sharing) in
        [("shared", EncoderSharing::Shared), ("separate", EncoderSharing::Separate)]
    {
        for &seed in &seeds {
            let hp = Hyperparams {
                episodes: 15,
                batch_size: 48,
                buffer_capacity: 10_000,
                warmup_transitions: 48,
                noise_start: 0.3,
                noise_end: 0.02,
                actor_lr: 1e-3,
                critic_lr: 1e-3,
                gru_hidden: 8,
                fc_hidden: 16,
                sharing,
                seed,
                ..Default::default()
            };
            let system = train_system(&frame, &env_cfg, split.train.clone(), &hp).unwrap();
            let curve: Vec<f64> = system.log.iter().map(|e| e.cum_reward).collect();
            results.entry(label).or_default().push((seed, episodes_to_plateau(&curve)));
        }
    }

    let med = |label: &str| -> f64 {
        median(results[label].iter().map(|&(_, e)| e as f64).collect())
    };
    let (med_shared, med_separate) = (med("shared"), med("separate"));

    // The comparison report is written before the direction is asserted, so
    // a failed run still leaves the full evidence on disk.
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("encoder_efficiency.json");
    let passed = med_shared <= med_separate;
    let payload = serde_json::json!({
        "metric": "episodes to reach 90% of final cumulative reward",
        "seeds": seeds,
        "episodes_to_plateau": {
            "shared": results["shared"].iter().map(|&(s, e)| serde_json::json!({"seed": s, "episodes": e})).collect::<Vec<_>>(),
            "separate": results["separate"].iter().map(|&(s, e)| serde_json::json!({"seed": s, "episodes": e})).collect::<Vec<_>>(),
        },
        "median_shared": med_shared,
        "median_separate": med_separate,
        "shared_no_slower": passed,
    });
    fs::create_dir_all(out.parent().unwrap()).unwrap();
    fs::write(&out, serde_json::to_string_pretty(&payload).unwrap()).unwrap();

    assert!(
        passed,
        "shared-encoder median plateau {med_shared} episodes is slower than separate \
         {med_separate}; evidence at {}",
        out.display(),
    );
    println!(
        "[PASS] encoder sharing: median episodes to 90% plateau {med_shared} (shared) vs \
         {med_separate} (separate) over {} seeds; comparison written to {}",
        seeds.len(),
        out.display(),
    );
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism of the real binary
// ---------------------------------------------------------------------------

fn write_symbol_csv(dir: &Path, symbol: &str, days: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut close: f64 = 100.0 * (1.0 + 0.3 * rng.gen::<f64>());
    let mut text = String::from("Date,Open,High,Low,Close\n");
    for d in 0..days {
        let date = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(d as i64);
        let open = close;
        let step = 0.01 * (rng.gen::<f64>() - 0.5);
        close = open * (1.0 + step);
        let high = open.max(close) * (1.0 + 0.002 * rng.gen::<f64>());
        let low = open.min(close) * (1.0 - 0.002 * rng.gen::<f64>());
        text.push_str(&format!("{date},{open},{high},{low},{close}\n"));
    }
    fs::write(dir.join(format!("{symbol}.csv")), text).unwrap();
}

fn run_quantfolio(root: &Path, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_quantfolio"))
        .env(OUT_ROOT_ENV, root)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.code() == Some(0),
        "`quantfolio {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&output.stderr),
    );
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                map.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    map
}

fn assert_snapshots_equal(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>, what: &str) {
    let names_a: Vec<&String> = a.keys().collect();
    let names_b: Vec<&String> = b.keys().collect();
    assert_eq!(names_a, names_b, "{what}: artifact sets differ");
    for (name, bytes) in a {
        assert!(
            bytes == &b[name],
            "{what}: artifact '{name}' differs between runs ({} vs {} bytes)",
            bytes.len(),
            b[name].len(),
        );
    }
}

#[test]
fn a10_pipeline_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    fs::create_dir(&data_dir).unwrap();
    for (i, sym) in ["AAA", "BBB", "CCC"].iter().enumerate() {
        write_symbol_csv(&data_dir, sym, 60, 4_000 + i as u64);
    }
    let config = tmp.path().join("run.toml");
    fs::write(
        &config,
        format!(
            concat!(
                "data_dir = \"{}\"\n",
                "symbols = [\"AAA\", \"BBB\", \"CCC\"]\n",
                "out_dir = \"run\"\n",
                "split = 0.5\n",
                "seed = 11\n",
                "qpl_enabled = false\n",
                "episodes = 2\n",
                "batch_size = 8\n",
                "buffer_capacity = 64\n",
                "warmup_transitions = 8\n",
                "gru_hidden = 8\n",
                "fc_hidden = 4\n",
            ),
            data_dir.display()
        ),
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    let pipeline = |root: &Path| {
        run_quantfolio(root, &["ingest", "--config", cfg]);
        run_quantfolio(root, &["train", "--config", cfg]);
        run_quantfolio(root, &["backtest", "--config", cfg, "--baseline", "all"]);
        run_quantfolio(root, &["report", "--config", cfg]);
    };

    // Same inputs and seed, two separate output roots.
    let root_a = tmp.path().join("a");
    let root_b = tmp.path().join("b");
    pipeline(&root_a);
    pipeline(&root_b);
    let snap_a = snapshot(&root_a.join("run"));
    let snap_b = snapshot(&root_b.join("run"));
    assert!(
        snap_a.len() >= 15,
        "expected the full artifact set, found only {:?}",
        snap_a.keys().collect::<Vec<_>>()
    );
    for required in [
        "checkpoint.json",
        "training_log.jsonl",
        "ledger_ours.csv",
        "ledger_ucrp.csv",
        "metrics.csv",
        "metrics.json",
        "cumulative_value.svg",
        "rolling_sharpe.svg",
    ] {
        assert!(snap_a.contains_key(required), "missing artifact {required}");
    }
    assert_snapshots_equal(&snap_a, &snap_b, "fresh roots");

    // Re-running every command over the existing root must be a no-op.
    pipeline(&root_a);
    let snap_a2 = snapshot(&root_a.join("run"));
    assert_snapshots_equal(&snap_a, &snap_a2, "idempotent re-run");

    println!(
        "[PASS] determinism: {} artifacts byte-identical across fresh roots and across a \
         re-run (checkpoint, ledgers, reports included)",
        snap_a.len()
    );
}
