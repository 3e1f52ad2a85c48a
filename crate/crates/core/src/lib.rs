//! Reward-poisoning attacks on stochastic multi-armed bandits.
//!
//! An attacker sits between the environment and a bandit algorithm,
//! nudging each observed reward before the learner sees it. The library
//! covers both settings studied here:
//!
//! - **offline**: a full interaction log exists; a convex program finds the
//!   cheapest per-arm shifts that make the learner's next pull land on a
//!   chosen target arm (for epsilon-greedy, UCB, and Gaussian Thompson
//!   sampling), and
//! - **online**: rewards are perturbed on the fly, either with knowledge of
//!   the true means or adaptively from observed data alone, forcing the
//!   learner to pull the target arm almost always at logarithmic cost.
//!
//! [`harness`] runs batched experiments over both settings and writes CSV
//! and SVG reports; the `poison` binary wraps it in a CLI.

pub mod agents;
pub mod error;
pub mod gauss;
pub mod harness;
pub mod model;
pub mod offline;
pub mod online;
pub mod rng;
pub mod solver;
pub mod svg;

pub use agents::{
    AgentParams, AgentState, Algorithm, ExplorationRate, PullDistribution, TsPosterior,
};
pub use error::{Error, Result};
pub use harness::{
    collect_history, emit_offline_outputs, emit_online_outputs, run_offline_experiment,
    run_online_experiment, AttackName, GapGrid, MeanRule, OfflineConfig, OfflineReport,
    OnlineConfig, OnlineReport,
};
pub use model::{
    draw_reward, effort_ratio, norm_cost, regret, BanditInstance, CostLedger, CostNorm, History,
};
pub use offline::{
    attack_eps_greedy, attack_ts, attack_ucb, verify_offline, OfflineAttackPlan, TsRelaxation,
    VerificationRecord,
};
pub use online::{
    beta, constant_attack, oracle_attack, run_online_trial, AttackStrategy, OnlineAttackerState,
    OnlineTrialResult,
};
pub use rng::{master, trial_stream, Stream};
pub use solver::{
    brute_force_oracle, solve_chance, solve_linear, staged_oracle, ts_union_bound, ConstraintKind,
    GridSpec, ReducedProblem, SolverResult,
};
