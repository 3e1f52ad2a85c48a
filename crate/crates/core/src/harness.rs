//! Experiment harness: config structs, parallel trial runners, aggregate
//! statistics, and CSV/SVG emission.
//!
//! Determinism contract: every trial draws from a stream derived from
//! (seed, global trial index), and results are merged in trial order, so a
//! (config, seed) pair produces identical reports and byte-identical output
//! files no matter how many workers run.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentParams, AgentState, Algorithm, TsPosterior};
use crate::error::{Error, Result};
use crate::model::{draw_reward, BanditInstance, History};
use crate::offline::{
    attack_eps_greedy, attack_ts, attack_ucb, verify_offline, OfflineAttackPlan, TsRelaxation,
};
use crate::online::{run_online_trial, AttackStrategy, OnlineTrialResult};
use crate::rng::{trial_stream, Stream};
use crate::svg::{histogram_svg, line_chart_svg, Series};

/// How each trial's ground-truth means are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanRule {
    /// Fresh draw per trial: target mean 0, every rival uniform on [0, 1].
    UniformUnit,
    /// The same explicit means for every trial.
    Explicit { means: Vec<f64> },
}

impl MeanRule {
    fn instance(
        &self,
        k: usize,
        sigma: f64,
        target: usize,
        rng: &mut Stream,
    ) -> Result<BanditInstance> {
        match self {
            MeanRule::UniformUnit => {
                use rand::Rng;
                // redraw on the (measure-zero) chance every rival ties 0
                for _ in 0..100 {
                    let means: Vec<f64> = (0..k)
                        .map(|a| if a == target { 0.0 } else { rng.random() })
                        .collect();
                    if let Ok(inst) = BanditInstance::new(means, sigma, target) {
                        return Ok(inst);
                    }
                }
                Err(Error::Degenerate(
                    "could not draw a valid instance in 100 tries".into(),
                ))
            }
            MeanRule::Explicit { means } => {
                if means.len() != k {
                    return Err(Error::Mismatch(format!(
                        "{} explicit means for k = {k}",
                        means.len()
                    )));
                }
                BanditInstance::new(means.clone(), sigma, target)
            }
        }
    }
}

/// Offline experiment: record a clean run, solve the attack, verify.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct OfflineConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub sigma: f64,
    /// Rounds of recorded (clean) play per trial.
    pub horizon: u64,
    pub trials: u64,
    pub xi: f64,
    pub delta: f64,
    /// Attack target; defaults to the last arm (the one pinned at mean 0
    /// under the uniform-unit rule).
    pub target: Option<usize>,
    pub means: MeanRule,
    pub seed: u64,
    pub mc_samples: usize,
    pub ts_posterior: TsPosterior,
    pub ts_relaxation: TsRelaxation,
    /// Histogram bin override; defaults to ceil(sqrt(trials)).
    pub bins: Option<usize>,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ucb,
            k: 5,
            sigma: 0.1,
            horizon: 1000,
            trials: 200,
            xi: 0.001,
            delta: 0.05,
            target: None,
            means: MeanRule::UniformUnit,
            seed: 42,
            mc_samples: 100_000,
            ts_posterior: TsPosterior::default(),
            ts_relaxation: TsRelaxation::default(),
            bins: None,
        }
    }
}

impl OfflineConfig {
    #[must_use]
    pub fn target_arm(&self) -> usize {
        self.target.unwrap_or(self.k - 1)
    }

    /// # Errors
    /// Usage errors describing the first invalid field.
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Usage(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Usage(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.horizon < self.k as u64 {
            return Err(Error::Usage(format!(
                "horizon {} cannot initialize {} arms",
                self.horizon, self.k
            )));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::Usage(format!("xi must be > 0, got {}", self.xi)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Usage(format!(
                "delta must be in (0,1), got {}",
                self.delta
            )));
        }
        if self.target_arm() >= self.k {
            return Err(Error::Usage(format!(
                "target {} out of range for k = {}",
                self.target_arm(),
                self.k
            )));
        }
        if self.algorithm == Algorithm::Ts && self.mc_samples < 1000 {
            return Err(Error::Usage(format!(
                "TS verification needs mc-samples >= 1000, got {}",
                self.mc_samples
            )));
        }
        if let MeanRule::Explicit { means } = &self.means {
            if means.len() != self.k {
                return Err(Error::Usage(format!(
                    "{} explicit means for k = {}",
                    means.len(),
                    self.k
                )));
            }
        }
        if let Some(0) = self.bins {
            return Err(Error::Usage("bins must be >= 1".into()));
        }
        Ok(())
    }

    /// # Errors
    /// Parse errors on malformed JSON or unknown keys.
    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        serde_json::from_reader(reader).map_err(|e| Error::Parse(format!("offline config: {e}")))
    }
}

/// Inclusive arithmetic grid over the two-arm reward gap, written
/// start:stop:step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct GapGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GapGrid {
    /// # Errors
    /// Usage errors on non-positive gaps or a malformed range.
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::Usage("grid bounds must be finite".into()));
        }
        if start <= 0.0 {
            return Err(Error::Usage(format!(
                "gap grid must start above 0, got {start}"
            )));
        }
        if stop < start {
            return Err(Error::Usage(format!("grid stop {stop} below start {start}")));
        }
        if step <= 0.0 {
            return Err(Error::Usage(format!("grid step must be > 0, got {step}")));
        }
        Ok(Self { start, stop, step })
    }

    /// Grid points, rounded to 1e-9 to keep labels and CSV values tidy.
    #[must_use]
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                (v * 1e9).round() / 1e9
            })
            .collect()
    }
}

impl FromStr for GapGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "gap grid must be start:stop:step, got '{s}'"
            )));
        }
        let num = |p: &str| -> Result<f64> {
            p.trim()
                .parse()
                .map_err(|e| Error::Parse(format!("bad grid number '{p}': {e}")))
        };
        GapGrid::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

/// Attacker choice by name; parameters come from the surrounding config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AttackName {
    None,
    Oracle,
    Constant,
    #[default]
    Ace,
}

impl AttackName {
    #[must_use]
    pub fn label(self) -> &'static str {
        match self {
            AttackName::None => "none",
            AttackName::Oracle => "oracle",
            AttackName::Constant => "constant",
            AttackName::Ace => "ace",
        }
    }
}

impl FromStr for AttackName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AttackName::None),
            "oracle" => Ok(AttackName::Oracle),
            "constant" => Ok(AttackName::Constant),
            "ace" => Ok(AttackName::Ace),
            other => Err(Error::Parse(format!(
                "unknown attack '{other}' (expected none|oracle|constant|ace)"
            ))),
        }
    }
}

/// Online experiment: two arms with means (gap, 0), target the second, one
/// batch of trials per grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct OnlineConfig {
    pub algorithm: Algorithm,
    pub attack: AttackName,
    pub sigma: f64,
    pub horizon: u64,
    pub trials: u64,
    /// Attacker tolerance (confidence radii and the concentration event).
    pub delta: f64,
    /// Oracle attack margin.
    pub xi: f64,
    /// Constant attack amounts: one value broadcast to both arms, or one
    /// per arm.
    pub constant_c: Vec<f64>,
    pub gap_grid: GapGrid,
    pub seed: u64,
    /// Measurement rounds; defaults to a log-spaced ladder ending at the
    /// horizon.
    pub checkpoints: Option<Vec<u64>>,
    pub ts_posterior: TsPosterior,
    /// Record every n-th perturbation of trial 0 into an epsilon log.
    pub eps_stride: Option<u64>,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ucb,
            attack: AttackName::Ace,
            sigma: 0.1,
            horizon: 10_000,
            trials: 20,
            delta: 0.05,
            xi: 0.001,
            constant_c: vec![0.5],
            gap_grid: GapGrid {
                start: 0.1,
                stop: 1.0,
                step: 0.1,
            },
            seed: 7,
            checkpoints: None,
            ts_posterior: TsPosterior::default(),
            eps_stride: None,
        }
    }
}

const ONLINE_K: usize = 2;
const ONLINE_TARGET: usize = 1;

impl OnlineConfig {
    /// # Errors
    /// Usage errors describing the first invalid field.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::Usage(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.horizon < ONLINE_K as u64 {
            return Err(Error::Usage(format!("horizon {} too short", self.horizon)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Usage(format!(
                "delta must be in (0, 0.5), got {}",
                self.delta
            )));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::Usage(format!("xi must be > 0, got {}", self.xi)));
        }
        GapGrid::new(self.gap_grid.start, self.gap_grid.stop, self.gap_grid.step)?;
        if self.attack == AttackName::Constant {
            self.constants()?;
        }
        if let Some(cps) = &self.checkpoints {
            if cps.is_empty() || cps.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Usage(
                    "checkpoints must be nonempty, sorted, distinct".into(),
                ));
            }
            if *cps.last().expect("nonempty") > self.horizon {
                return Err(Error::Usage("checkpoint beyond the horizon".into()));
            }
        }
        if let Some(0) = self.eps_stride {
            return Err(Error::Usage("eps-stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Per-arm constants after broadcasting a single value.
    ///
    /// # Errors
    /// Usage error when the list is neither 1 nor K long or holds negatives.
    pub fn constants(&self) -> Result<Vec<f64>> {
        let cs = match self.constant_c.len() {
            1 => vec![self.constant_c[0]; ONLINE_K],
            n if n == ONLINE_K => self.constant_c.clone(),
            n => {
                return Err(Error::Usage(format!(
                    "constant-c needs 1 or {ONLINE_K} values, got {n}"
                )))
            }
        };
        if cs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Usage("constant-c values must be >= 0".into()));
        }
        Ok(cs)
    }

    /// # Errors
    /// As [`OnlineConfig::constants`].
    pub fn strategy(&self) -> Result<AttackStrategy> {
        Ok(match self.attack {
            AttackName::None => AttackStrategy::None,
            AttackName::Oracle => AttackStrategy::Oracle { xi: self.xi },
            AttackName::Constant => AttackStrategy::Constant {
                constants: self.constants()?,
            },
            AttackName::Ace => AttackStrategy::Ace,
        })
    }

    /// Configured checkpoints, or the default log-spaced ladder.
    #[must_use]
    pub fn checkpoint_rounds(&self) -> Vec<u64> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| log_checkpoints(self.horizon, 24))
    }

    /// # Errors
    /// Parse errors on malformed JSON or unknown keys.
    pub fn from_json<R: Read>(reader: R) -> Result<Self> {
        serde_json::from_reader(reader).map_err(|e| Error::Parse(format!("online config: {e}")))
    }
}

/// Roughly `count` log-spaced rounds from 10 (or earlier for tiny horizons)
/// up to and including the horizon.
#[must_use]
pub fn log_checkpoints(horizon: u64, count: usize) -> Vec<u64> {
    assert!(horizon >= 1 && count >= 1);
    let start = 10f64.min(horizon as f64);
    let lo = start.ln();
    let hi = (horizon as f64).ln();
    let mut rounds: Vec<u64> = (0..count)
        .map(|i| {
            let f = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            (lo + (hi - lo) * f).exp().round().max(1.0) as u64
        })
        .collect();
    rounds.push(horizon);
    rounds.sort_unstable();
    rounds.dedup();
    rounds
}

/// One offline trial's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineTrialRow {
    pub trial: u64,
    pub success: bool,
    pub target_probability: f64,
    pub threshold: f64,
    pub effort_ratio: f64,
    pub objective: f64,
    pub cost: f64,
    pub feasibility_margin: f64,
    pub kkt_residual: f64,
    pub suboptimal: bool,
}

/// Offline experiment results, in trial order.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineReport {
    pub config: OfflineConfig,
    pub rows: Vec<OfflineTrialRow>,
    /// Trial 0's recorded history and solved plan, kept for plan/history
    /// CSV emission.
    pub exemplar: Option<(History, OfflineAttackPlan)>,
}

impl OfflineReport {
    #[must_use]
    pub fn success_rate(&self) -> f64 {
        let wins = self.rows.iter().filter(|r| r.success).count();
        wins as f64 / self.rows.len() as f64
    }

    #[must_use]
    pub fn effort_ratios(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.effort_ratio).collect()
    }
}

/// Percentile with linear interpolation between order statistics.
///
/// # Panics
/// On an empty slice or p outside [0, 100].
#[must_use]
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of nothing");
    assert!((0.0..=100.0).contains(&p), "p out of range: {p}");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("comparable values"));
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    } else {
        sorted[lo]
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean (sample standard deviation over sqrt n);
/// zero for a single observation.
fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Least-squares fit of y = a + b ln(x); returns (a, b, r_squared).
///
/// # Panics
/// On fewer than two points or non-positive x.
#[must_use]
pub fn fit_log_linear(xs: &[u64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need two points to fit a line");
    assert!(xs.iter().all(|&x| x > 0), "log fit needs positive x");
    let lx: Vec<f64> = xs.iter().map(|&x| (x as f64).ln()).collect();
    let mx = mean(&lx);
    let my = mean(ys);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (a + b * x)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot <= 1e-300 {
        if ss_res <= 1e-300 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    (a, b, r2)
}

/// Plays the configured algorithm for `horizon` clean rounds and records
/// everything.
pub fn collect_history(
    instance: &BanditInstance,
    params: AgentParams,
    horizon: u64,
    rng: &mut Stream,
) -> History {
    let mut agent = AgentState::new(instance.k(), params);
    let mut history = History::new(instance.k());
    for _ in 0..horizon {
        let arm = agent.select(rng);
        let reward = draw_reward(instance, arm, rng);
        agent.observe(arm, reward);
        history.push(arm, reward);
    }
    history
}

fn offline_params(config: &OfflineConfig) -> AgentParams {
    AgentParams::new(config.algorithm, config.sigma).with_ts_posterior(config.ts_posterior)
}

fn offline_attack(
    config: &OfflineConfig,
    history: &History,
    target: usize,
) -> Result<OfflineAttackPlan> {
    match config.algorithm {
        Algorithm::EpsGreedy => attack_eps_greedy(history, target, config.xi),
        Algorithm::Ucb => attack_ucb(history, target, config.xi, config.sigma),
        Algorithm::Ts => attack_ts(
            history,
            target,
            config.delta,
            config.sigma,
            config.ts_relaxation,
        ),
    }
}

/// Runs all offline trials in parallel and merges rows in trial order.
///
/// # Errors
/// Config validation problems, or the first trial-level failure.
pub fn run_offline_experiment(config: &OfflineConfig) -> Result<OfflineReport> {
    config.validate()?;
    let target = config.target_arm();
    let params = offline_params(config);

    let mut outcomes: Vec<(OfflineTrialRow, Option<(History, OfflineAttackPlan)>)> = (0..config
        .trials)
        .into_par_iter()
        .map(|trial| -> Result<_> {
            let mut rng = trial_stream(config.seed, trial);
            let instance = config.means.instance(config.k, config.sigma, target, &mut rng)?;
            let history = collect_history(&instance, params, config.horizon, &mut rng);
            let plan = offline_attack(config, &history, target)?;
            let record = verify_offline(
                &plan,
                &history,
                &params,
                config.delta,
                config.mc_samples,
                &mut rng,
            )?;
            let row = OfflineTrialRow {
                trial,
                success: record.success,
                target_probability: record.target_probability,
                threshold: record.threshold,
                effort_ratio: plan.effort_ratio,
                objective: plan.objective,
                cost: plan.cost,
                feasibility_margin: plan.feasibility_margin,
                kkt_residual: plan.kkt_residual,
                suboptimal: plan.suboptimal,
            };
            let exemplar = (trial == 0).then(|| (history, plan.with_verification(record)));
            Ok((row, exemplar))
        })
        .collect::<Result<_>>()?;

    outcomes.sort_by_key(|(row, _)| row.trial);
    let exemplar = outcomes
        .first_mut()
        .and_then(|(_, e)| e.take());
    let rows = outcomes.into_iter().map(|(row, _)| row).collect();
    Ok(OfflineReport {
        config: config.clone(),
        rows,
        exemplar,
    })
}

/// One online trial's outcome at one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineTrialRow {
    pub gap: f64,
    pub trial: u64,
    pub target_fraction: f64,
    pub target_pulls: u64,
    pub cost: f64,
    pub regret: f64,
    pub event_e_held: bool,
    pub bound_violations: u64,
    pub checkpoints: Vec<crate::online::CheckpointRow>,
}

/// Online experiment results, ordered by (grid point, trial).
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineReport {
    pub config: OnlineConfig,
    pub checkpoint_rounds: Vec<u64>,
    pub rows: Vec<OnlineTrialRow>,
    /// (round, epsilon) log of the first trial of the first grid point,
    /// when the config requested one.
    pub eps_log: Option<Vec<(u64, f64)>>,
}

/// Aggregates for one grid point at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointSummary {
    pub gap: f64,
    pub t: u64,
    pub mean_target_fraction: f64,
    pub se_target_fraction: f64,
    pub mean_cost: f64,
    pub se_cost: f64,
}

impl OnlineReport {
    /// Rows for one grid point, in trial order.
    #[must_use]
    pub fn rows_at(&self, gap: f64) -> Vec<&OnlineTrialRow> {
        self.rows.iter().filter(|r| r.gap == gap).collect()
    }

    /// Per-(gap, checkpoint) means and standard errors, grid order.
    #[must_use]
    pub fn checkpoint_summaries(&self) -> Vec<CheckpointSummary> {
        let mut out = Vec::new();
        for gap in self.config.gap_grid.values() {
            let rows = self.rows_at(gap);
            if rows.is_empty() {
                continue;
            }
            for (i, &t) in self.checkpoint_rounds.iter().enumerate() {
                let fractions: Vec<f64> =
                    rows.iter().map(|r| r.checkpoints[i].target_fraction).collect();
                let costs: Vec<f64> = rows.iter().map(|r| r.checkpoints[i].cost).collect();
                out.push(CheckpointSummary {
                    gap,
                    t,
                    mean_target_fraction: mean(&fractions),
                    se_target_fraction: standard_error(&fractions),
                    mean_cost: mean(&costs),
                    se_cost: standard_error(&costs),
                });
            }
        }
        out
    }
}

/// Runs trials for every grid point in parallel; trial streams are indexed
/// by (grid position * trials + trial).
///
/// # Errors
/// Config validation problems, or the first trial-level failure.
pub fn run_online_experiment(config: &OnlineConfig) -> Result<OnlineReport> {
    config.validate()?;
    let strategy = config.strategy()?;
    let checkpoint_rounds = config.checkpoint_rounds();
    let gaps = config.gap_grid.values();
    let params = AgentParams::new(config.algorithm, config.sigma)
        .with_ts_posterior(config.ts_posterior);

    let jobs: Vec<(usize, u64)> = (0..gaps.len())
        .flat_map(|g| (0..config.trials).map(move |t| (g, t)))
        .collect();
    let mut outcomes: Vec<(usize, u64, OnlineTrialResult)> = jobs
        .into_par_iter()
        .map(|(g, trial)| -> Result<_> {
            let stream_index = g as u64 * config.trials + trial;
            let mut rng = trial_stream(config.seed, stream_index);
            let instance =
                BanditInstance::new(vec![gaps[g], 0.0], config.sigma, ONLINE_TARGET)?;
            let eps_stride = if stream_index == 0 { config.eps_stride } else { None };
            let result = run_online_trial(
                &instance,
                params,
                &strategy,
                config.delta,
                config.horizon,
                &checkpoint_rounds,
                eps_stride,
                &mut rng,
            )?;
            Ok((g, trial, result))
        })
        .collect::<Result<_>>()?;

    outcomes.sort_by_key(|(g, trial, _)| (*g, *trial));
    let mut eps_log = None;
    let rows = outcomes
        .into_iter()
        .map(|(g, trial, mut result)| {
            if let Some(log) = result.eps_log.take() {
                eps_log = Some(log);
            }
            OnlineTrialRow {
                gap: gaps[g],
                trial,
                target_fraction: result.target_pulls as f64 / result.horizon as f64,
                target_pulls: result.target_pulls,
                cost: result.cost,
                regret: result.regret,
                event_e_held: result.event_e_held,
                bound_violations: result.bound_violations,
                checkpoints: result.checkpoints,
            }
        })
        .collect();
    Ok(OnlineReport {
        config: config.clone(),
        checkpoint_rounds,
        rows,
        eps_log,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)
        .map_err(|e| Error::Usage(format!("writing {}: {e}", path.display())))
}

/// Shortest float text that round-trips; integers stay integral.
fn cell(v: f64) -> String {
    format!("{v}")
}

/// Writes trials.csv, summary.csv, the effort-ratio histogram, and trial
/// 0's history/plan CSVs. Returns the created paths.
///
/// # Errors
/// I/O failures with path context.
pub fn emit_offline_outputs(report: &OfflineReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("creating {}: {e}", dir.display())))?;
    let mut written = Vec::new();

    let mut trials = String::from(
        "trial,success,target_probability,threshold,effort_ratio,objective,cost,feasibility_margin,kkt_residual,suboptimal\n",
    );
    for r in &report.rows {
        trials.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.trial,
            r.success,
            cell(r.target_probability),
            cell(r.threshold),
            cell(r.effort_ratio),
            cell(r.objective),
            cell(r.cost),
            cell(r.feasibility_margin),
            cell(r.kkt_residual),
            r.suboptimal,
        ));
    }
    let trials_path = dir.join("trials.csv");
    write_file(&trials_path, &trials)?;
    written.push(trials_path);

    let mut summary = String::from("metric,value\n");
    if !report.rows.is_empty() {
        let ratios = report.effort_ratios();
        let objectives: Vec<f64> = report.rows.iter().map(|r| r.objective).collect();
        let costs: Vec<f64> = report.rows.iter().map(|r| r.cost).collect();
        let suboptimal = report.rows.iter().filter(|r| r.suboptimal).count();
        summary.push_str(&format!("trials,{}\n", report.rows.len()));
        summary.push_str(&format!("success_rate,{}\n", cell(report.success_rate())));
        summary.push_str(&format!("effort_ratio_p50,{}\n", cell(percentile(&ratios, 50.0))));
        summary.push_str(&format!("effort_ratio_p90,{}\n", cell(percentile(&ratios, 90.0))));
        summary.push_str(&format!("effort_ratio_p95,{}\n", cell(percentile(&ratios, 95.0))));
        summary.push_str(&format!("effort_ratio_max,{}\n", cell(percentile(&ratios, 100.0))));
        summary.push_str(&format!("mean_objective,{}\n", cell(mean(&objectives))));
        summary.push_str(&format!("mean_cost,{}\n", cell(mean(&costs))));
        summary.push_str(&format!("suboptimal_count,{suboptimal}\n"));
    }
    let summary_path = dir.join("summary.csv");
    write_file(&summary_path, &summary)?;
    written.push(summary_path);

    if !report.rows.is_empty() {
        let bins = report
            .config
            .bins
            .unwrap_or_else(|| (report.rows.len() as f64).sqrt().ceil() as usize);
        let svg = histogram_svg(
            &report.effort_ratios(),
            bins.max(1),
            &format!(
                "effort ratio, {} over {} trials",
                report.config.algorithm.name(),
                report.rows.len()
            ),
            "effort ratio",
        );
        let svg_path = dir.join("effort_ratio.svg");
        write_file(&svg_path, &svg)?;
        written.push(svg_path);
    }

    if let Some((history, plan)) = &report.exemplar {
        let hist_path = dir.join("hist.csv");
        let mut buf = Vec::new();
        history.write_csv(&mut buf)?;
        write_file(&hist_path, std::str::from_utf8(&buf).expect("CSV is UTF-8"))?;
        written.push(hist_path);

        let plan_path = dir.join("plan.csv");
        let mut buf = Vec::new();
        plan.write_csv(history, &mut buf)?;
        write_file(&plan_path, std::str::from_utf8(&buf).expect("CSV is UTF-8"))?;
        written.push(plan_path);
    }
    Ok(written)
}

/// Writes trials.csv, summary.csv, checkpoints.csv, the two line charts,
/// and the epsilon log when present. Returns the created paths.
///
/// # Errors
/// I/O failures with path context.
pub fn emit_online_outputs(report: &OnlineReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Usage(format!("creating {}: {e}", dir.display())))?;
    let mut written = Vec::new();

    let mut trials = String::from(
        "gap,trial,target_fraction,target_pulls,cost,regret,event_e_held,bound_violations\n",
    );
    for r in &report.rows {
        trials.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            cell(r.gap),
            r.trial,
            cell(r.target_fraction),
            r.target_pulls,
            cell(r.cost),
            cell(r.regret),
            r.event_e_held,
            r.bound_violations,
        ));
    }
    let trials_path = dir.join("trials.csv");
    write_file(&trials_path, &trials)?;
    written.push(trials_path);

    let mut summary = String::from(
        "gap,trials,mean_target_fraction,se_target_fraction,mean_cost,se_cost,event_e_frequency\n",
    );
    let mut by_gap: Vec<(f64, Vec<&OnlineTrialRow>)> = Vec::new();
    for gap in report.config.gap_grid.values() {
        let rows = report.rows_at(gap);
        if !rows.is_empty() {
            by_gap.push((gap, rows));
        }
    }
    for (gap, rows) in &by_gap {
        let fractions: Vec<f64> = rows.iter().map(|r| r.target_fraction).collect();
        let costs: Vec<f64> = rows.iter().map(|r| r.cost).collect();
        let e_freq =
            rows.iter().filter(|r| r.event_e_held).count() as f64 / rows.len() as f64;
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell(*gap),
            rows.len(),
            cell(mean(&fractions)),
            cell(standard_error(&fractions)),
            cell(mean(&costs)),
            cell(standard_error(&costs)),
            cell(e_freq),
        ));
    }
    let summary_path = dir.join("summary.csv");
    write_file(&summary_path, &summary)?;
    written.push(summary_path);

    let mut checkpoints = String::from(
        "gap,t,mean_target_fraction,se_target_fraction,mean_cost,se_cost\n",
    );
    let summaries = report.checkpoint_summaries();
    for s in &summaries {
        checkpoints.push_str(&format!(
            "{},{},{},{},{},{}\n",
            cell(s.gap),
            s.t,
            cell(s.mean_target_fraction),
            cell(s.se_target_fraction),
            cell(s.mean_cost),
            cell(s.se_cost),
        ));
    }
    let checkpoints_path = dir.join("checkpoints.csv");
    write_file(&checkpoints_path, &checkpoints)?;
    written.push(checkpoints_path);

    if !summaries.is_empty() {
        let series_of = |value: &dyn Fn(&CheckpointSummary) -> (f64, f64)| -> Vec<Series> {
            by_gap
                .iter()
                .map(|(gap, _)| {
                    let pts: Vec<&CheckpointSummary> =
                        summaries.iter().filter(|s| s.gap == *gap).collect();
                    Series {
                        label: format!("gap {}", cell(*gap)),
                        points: pts.iter().map(|s| (s.t as f64, value(s).0)).collect(),
                        errors: Some(pts.iter().map(|s| value(s).1).collect()),
                    }
                })
                .collect()
        };
        let fraction_series =
            series_of(&|s| (s.mean_target_fraction, s.se_target_fraction));
        let attack = report.config.attack.label();
        let algo = report.config.algorithm.name();
        let fr_svg = line_chart_svg(
            &fraction_series,
            &format!("target-pull fraction, {algo} under {attack}"),
            "round",
            "fraction",
            true,
        );
        let fr_path = dir.join("target_fraction.svg");
        write_file(&fr_path, &fr_svg)?;
        written.push(fr_path);

        let cost_series = series_of(&|s| (s.mean_cost, s.se_cost));
        let cost_svg = line_chart_svg(
            &cost_series,
            &format!("cumulative attack cost, {algo} under {attack}"),
            "round",
            "cost",
            true,
        );
        let cost_path = dir.join("cost.svg");
        write_file(&cost_path, &cost_svg)?;
        written.push(cost_path);
    }

    if let Some(log) = &report.eps_log {
        let mut eps = String::from("t,epsilon\n");
        for (t, e) in log {
            eps.push_str(&format!("{t},{}\n", cell(*e)));
        }
        let eps_path = dir.join("epsilons.csv");
        write_file(&eps_path, &eps)?;
        written.push(eps_path);
    }
    Ok(written)
}





#[cfg(test)]
mod output_tests {
    use super::*;

    fn tmpdir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("poison-harness-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn offline_outputs_are_byte_stable_and_consistent() {
        let config = OfflineConfig {
            algorithm: Algorithm::Ucb,
            k: 3,
            horizon: 150,
            trials: 9,
            seed: 21,
            ..OfflineConfig::default()
        };
        let report = run_offline_experiment(&config).unwrap();
        let dir_a = tmpdir("offa");
        let dir_b = tmpdir("offb");
        let files_a = emit_offline_outputs(&report, &dir_a).unwrap();
        emit_offline_outputs(&report, &dir_b).unwrap();
        for file in &files_a {
            let twin = dir_b.join(file.file_name().unwrap());
            assert_eq!(
                fs::read(file).unwrap(),
                fs::read(&twin).unwrap(),
                "{} not byte-stable",
                file.display()
            );
        }

        // aggregate consistency: summary values recompute from trials.csv
        let trials_text = fs::read_to_string(dir_a.join("trials.csv")).unwrap();
        let ratios: Vec<f64> = trials_text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
            .collect();
        let successes = trials_text
            .lines()
            .skip(1)
            .filter(|l| l.split(',').nth(1).unwrap() == "true")
            .count();
        let summary_text = fs::read_to_string(dir_a.join("summary.csv")).unwrap();
        let lookup = |key: &str| -> f64 {
            summary_text
                .lines()
                .find(|l| l.starts_with(key))
                .unwrap_or_else(|| panic!("{key} missing"))
                .split(',')
                .nth(1)
                .unwrap()
                .parse()
                .unwrap()
        };
        assert!((lookup("success_rate") - successes as f64 / 9.0).abs() < 1e-10);
        assert!((lookup("effort_ratio_p95") - percentile(&ratios, 95.0)).abs() < 1e-10);

        // the histogram uses the square-root rule: ceil(sqrt(9)) = 3 bars
        let svg = fs::read_to_string(dir_a.join("effort_ratio.svg")).unwrap();
        assert_eq!(svg.matches("<rect").count(), 3);

        // exemplar round-trips
        let hist = fs::read_to_string(dir_a.join("hist.csv")).unwrap();
        assert!(hist.starts_with("t,arm,reward_pre,reward_post\n"));
        let plan = fs::read_to_string(dir_a.join("plan.csv")).unwrap();
        assert!(plan.starts_with("arm,index_within_arm,y,epsilon\n"));

        let _ = fs::remove_dir_all(&dir_a);
        let _ = fs::remove_dir_all(&dir_b);
    }

    #[test]
    fn empty_offline_report_writes_headers_only() {
        let config = OfflineConfig {
            trials: 0,
            k: 2,
            horizon: 50,
            ..OfflineConfig::default()
        };
        let report = run_offline_experiment(&config).unwrap();
        let dir = tmpdir("empty");
        let files = emit_offline_outputs(&report, &dir).unwrap();
        assert_eq!(files.len(), 2, "only the two CSVs");
        let trials = fs::read_to_string(dir.join("trials.csv")).unwrap();
        assert_eq!(trials.lines().count(), 1);
        let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1);
        assert!(!dir.join("effort_ratio.svg").exists());
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn online_outputs_cover_all_files() {
        let config = OnlineConfig {
            algorithm: Algorithm::Ucb,
            horizon: 500,
            trials: 2,
            gap_grid: GapGrid {
                start: 0.5,
                stop: 1.0,
                step: 0.5,
            },
            checkpoints: Some(vec![100, 500]),
            eps_stride: Some(50),
            seed: 31,
            ..OnlineConfig::default()
        };
        let report = run_online_experiment(&config).unwrap();
        let dir = tmpdir("online");
        let files = emit_online_outputs(&report, &dir).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|f| f.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for expect in [
            "trials.csv",
            "summary.csv",
            "checkpoints.csv",
            "target_fraction.svg",
            "cost.svg",
            "epsilons.csv",
        ] {
            assert!(names.contains(&expect.to_string()), "missing {expect}");
        }
        let checkpoints = fs::read_to_string(dir.join("checkpoints.csv")).unwrap();
        assert_eq!(checkpoints.lines().count(), 1 + 2 * 2); // 2 gaps x 2 rounds
        let _ = fs::remove_dir_all(&dir);
    }
}
