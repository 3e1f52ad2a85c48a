//! Offline attacks: poison a recorded reward history so the learner's next
//! pull lands on the target arm.
//!
//! Each attack builds a [`ReducedProblem`](crate::solver::ReducedProblem)
//! over per-arm mean shifts, solves it, and expands each shift uniformly
//! across the arm's recorded pulls (the l2-cheapest expansion). Verification
//! rebuilds the learner from the poisoned history and checks the probability
//! that it picks the target next round.

use std::io::{Read, Write};
use std::str::FromStr;

use crate::agents::{AgentParams, AgentState, Algorithm};
use crate::error::{Error, Result};
use crate::model::{effort_ratio, norm_cost, CostNorm, History};
use crate::rng::Stream;
use crate::solver::{solve_chance, solve_linear, ConstraintKind, ReducedProblem, SolverResult};

/// Which relaxation the TS attack solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TsRelaxation {
    /// Full chance constraint via the interior-point solver.
    #[default]
    Chance,
    /// Per-rival linear caps (cheaper, never cheaper in objective).
    Linear,
}

impl FromStr for TsRelaxation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chance" => Ok(TsRelaxation::Chance),
            "linear" => Ok(TsRelaxation::Linear),
            other => Err(Error::Parse(format!(
                "unknown TS relaxation '{other}' (expected chance|linear)"
            ))),
        }
    }
}

/// Outcome of re-running the learner's next-round decision on poisoned data.
#[derive(Clone, Debug, PartialEq)]
pub struct VerificationRecord {
    pub algorithm: Algorithm,
    pub target: usize,
    /// Probability the learner's next pull is the target (exact for
    /// eps-greedy/UCB, Monte Carlo estimate for TS).
    pub target_probability: f64,
    /// Bar the probability must clear for success.
    pub threshold: f64,
    /// Monte Carlo standard error (TS only).
    pub std_err: Option<f64>,
    pub success: bool,
}

/// A solved offline attack: one shift per arm, expanded to per-pull epsilons.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineAttackPlan {
    pub target: usize,
    pub kind: ConstraintKind,
    /// Per-arm mean shifts.
    pub shifts: Vec<f64>,
    /// Per-arm poison vectors, entry j applying to the arm's j-th pull.
    pub epsilons: Vec<Vec<f64>>,
    /// sum_a m_a shift_a^2 (= squared l2 cost of the expansion).
    pub objective: f64,
    /// l2 norm of all epsilons.
    pub cost: f64,
    pub effort_ratio: f64,
    pub feasibility_margin: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// True when the chance solver failed and the plan fell back to the
    /// linearized relaxation (feasible, possibly not optimal).
    pub suboptimal: bool,
    pub verification: Option<VerificationRecord>,
}

impl OfflineAttackPlan {
    fn from_solution(
        history: &History,
        target: usize,
        kind: ConstraintKind,
        sol: SolverResult,
        suboptimal: bool,
    ) -> Result<Self> {
        let epsilons: Vec<Vec<f64>> = (0..history.k())
            .map(|a| vec![sol.shifts[a]; history.count(a) as usize])
            .collect();
        let flat: Vec<f64> = epsilons.iter().flatten().copied().collect();
        let cost = norm_cost(&flat, CostNorm::P(2.0));
        let ratio = effort_ratio(&epsilons, history.rewards_pre_by_arm())?;
        Ok(Self {
            target,
            kind,
            shifts: sol.shifts,
            epsilons,
            objective: sol.objective,
            cost,
            effort_ratio: ratio,
            feasibility_margin: sol.feasibility_margin,
            kkt_residual: sol.kkt_residual,
            iterations: sol.iterations,
            suboptimal,
            verification: None,
        })
    }

    /// Wraps externally supplied poison (a plan CSV read back from disk,
    /// say) so it can be applied and verified like a solved plan. `kind`
    /// states the constraint family the plan claims to satisfy; the
    /// feasibility margin is evaluated against it at the plan's per-arm
    /// mean shifts. No optimality is claimed, so the KKT residual is NaN.
    ///
    /// # Errors
    /// Mismatch when the poison does not line up with the history;
    /// domain errors on non-finite entries or bad constraint parameters.
    pub fn from_epsilons(
        history: &History,
        target: usize,
        kind: ConstraintKind,
        epsilons: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if epsilons.len() != history.k() {
            return Err(Error::Mismatch(format!(
                "poison covers {} arms, history has {}",
                epsilons.len(),
                history.k()
            )));
        }
        for (arm, eps) in epsilons.iter().enumerate() {
            if eps.len() as u64 != history.count(arm) {
                return Err(Error::Mismatch(format!(
                    "arm {arm}: {} poison entries for {} recorded pulls",
                    eps.len(),
                    history.count(arm)
                )));
            }
            if eps.iter().any(|e| !e.is_finite()) {
                return Err(Error::Domain(format!("non-finite poison on arm {arm}")));
            }
        }
        let (weights, base) = reduction_inputs(history, target)?;
        let shifts: Vec<f64> = epsilons
            .iter()
            .map(|eps| eps.iter().sum::<f64>() / eps.len() as f64)
            .collect();
        let problem = ReducedProblem::new(weights.clone(), base, target, kind)?;
        let margin = problem.feasibility_margin(&shifts);
        let objective: f64 = weights
            .iter()
            .zip(&shifts)
            .map(|(m, d)| m * d * d)
            .sum();
        let flat: Vec<f64> = epsilons.iter().flatten().copied().collect();
        let cost = norm_cost(&flat, CostNorm::P(2.0));
        let ratio = effort_ratio(&epsilons, history.rewards_pre_by_arm())?;
        Ok(Self {
            target,
            kind,
            shifts,
            epsilons,
            objective,
            cost,
            effort_ratio: ratio,
            feasibility_margin: margin,
            kkt_residual: f64::NAN,
            iterations: 0,
            suboptimal: false,
            verification: None,
        })
    }

    /// The poisoned history this plan produces.
    ///
    /// # Errors
    /// Mismatch if the plan was built for a different history shape.
    pub fn apply(&self, history: &History) -> Result<History> {
        history.with_attack(&self.epsilons)
    }

    #[must_use]
    pub fn with_verification(mut self, record: VerificationRecord) -> Self {
        self.verification = Some(record);
        self
    }

    /// Writes the plan as CSV rows (arm, index-within-arm, y, epsilon),
    /// pairing each poison entry with the recorded reward it perturbs.
    ///
    /// # Errors
    /// I/O failures; mismatch if `history` does not fit the plan.
    pub fn write_csv<W: Write>(&self, history: &History, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["arm", "index_within_arm", "y", "epsilon"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for arm in 0..self.epsilons.len() {
            let rewards = history.rewards_pre(arm);
            if rewards.len() != self.epsilons[arm].len() {
                return Err(Error::Mismatch(format!(
                    "plan has {} entries for arm {arm}, history has {} pulls",
                    self.epsilons[arm].len(),
                    rewards.len()
                )));
            }
            for (idx, (y, eps)) in rewards.iter().zip(&self.epsilons[arm]).enumerate() {
                w.write_record([
                    arm.to_string(),
                    idx.to_string(),
                    y.to_string(),
                    eps.to_string(),
                ])
                .map_err(|e| Error::Parse(e.to_string()))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a plan CSV back into per-arm (recorded reward, epsilon) pairs.
    /// The y column lets callers check the plan against an independently
    /// loaded history before trusting it.
    ///
    /// # Errors
    /// Parse errors on malformed rows or non-contiguous within-arm indices.
    pub fn read_csv_pairs<R: Read>(input: R) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut reader = csv::ReaderBuilder::new().from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .clone();
        let expect = ["arm", "index_within_arm", "y", "epsilon"];
        if headers.iter().collect::<Vec<_>>() != expect {
            return Err(Error::Parse(format!(
                "plan CSV must have columns {expect:?}, got {headers:?}"
            )));
        }
        let mut ys_by_arm: Vec<Vec<f64>> = Vec::new();
        let mut eps_by_arm: Vec<Vec<f64>> = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |i: usize| -> Result<&str> {
                row.get(i)
                    .ok_or_else(|| Error::Parse(format!("short row: {row:?}")))
            };
            let arm: usize = field(0)?
                .parse()
                .map_err(|e| Error::Parse(format!("bad arm: {e}")))?;
            let idx: usize = field(1)?
                .parse()
                .map_err(|e| Error::Parse(format!("bad index: {e}")))?;
            let y: f64 = field(2)?
                .parse()
                .map_err(|e| Error::Parse(format!("bad y: {e}")))?;
            let eps: f64 = field(3)?
                .parse()
                .map_err(|e| Error::Parse(format!("bad epsilon: {e}")))?;
            while eps_by_arm.len() <= arm {
                ys_by_arm.push(Vec::new());
                eps_by_arm.push(Vec::new());
            }
            if idx != eps_by_arm[arm].len() {
                return Err(Error::Parse(format!(
                    "arm {arm} indices must be contiguous from 0; got {idx} after {}",
                    eps_by_arm[arm].len()
                )));
            }
            ys_by_arm[arm].push(y);
            eps_by_arm[arm].push(eps);
        }
        Ok((ys_by_arm, eps_by_arm))
    }

    /// Reads a plan CSV back into per-arm epsilon vectors (the solver fields
    /// are not stored in the CSV; only the poison itself round-trips).
    ///
    /// # Errors
    /// As [`OfflineAttackPlan::read_csv_pairs`].
    pub fn read_csv_epsilons<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
        Self::read_csv_pairs(input).map(|(_, eps)| eps)
    }
}

/// Sanity-checks shared by all offline attacks, and the reduced weights.
fn reduction_inputs(history: &History, target: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if target >= history.k() {
        return Err(Error::Domain(format!(
            "target {target} out of range for {} arms",
            history.k()
        )));
    }
    for arm in 0..history.k() {
        if history.count(arm) == 0 {
            return Err(Error::IllPosed(format!(
                "arm {arm} has no recorded pulls; every arm needs at least one"
            )));
        }
    }
    let weights: Vec<f64> = history.counts().iter().map(|&c| c as f64).collect();
    let base: Vec<f64> = (0..history.k()).map(|a| history.pre_mean(a)).collect();
    Ok((weights, base))
}

/// Cheapest poisoning making the target's empirical mean beat every rival
/// by `xi`, which pins the greedy branch of an eps-greedy learner on the
/// target.
///
/// # Errors
/// Ill-posed when some arm has no pulls; domain errors on bad parameters.
pub fn attack_eps_greedy(history: &History, target: usize, xi: f64) -> Result<OfflineAttackPlan> {
    let (weights, base) = reduction_inputs(history, target)?;
    let kind = ConstraintKind::MeanMargin { xi };
    let problem = ReducedProblem::new(weights, base, target, kind)?;
    let sol = solve_linear(&problem)?;
    OfflineAttackPlan::from_solution(history, target, kind, sol, false)
}

/// Cheapest poisoning making the target's UCB index at the next round beat
/// every rival's by `xi`. The learner's horizon is read from the history.
///
/// # Errors
/// As [`attack_eps_greedy`].
pub fn attack_ucb(history: &History, target: usize, xi: f64, sigma: f64) -> Result<OfflineAttackPlan> {
    let (weights, base) = reduction_inputs(history, target)?;
    let kind = ConstraintKind::UcbMargin {
        xi,
        sigma,
        horizon: history.horizon(),
    };
    let problem = ReducedProblem::new(weights, base, target, kind)?;
    let sol = solve_linear(&problem)?;
    OfflineAttackPlan::from_solution(history, target, kind, sol, false)
}

/// Cheapest poisoning driving the union bound on "some rival's posterior
/// sample beats the target's" below `delta`.
///
/// With [`TsRelaxation::Chance`] the full constraint is solved; if the
/// barrier stalls the plan silently falls back to the linearized relaxation
/// and is flagged `suboptimal`. [`TsRelaxation::Linear`] solves the
/// relaxation directly.
///
/// # Errors
/// As [`attack_eps_greedy`], plus domain errors for delta outside
/// (0, (K-1)/2).
pub fn attack_ts(
    history: &History,
    target: usize,
    delta: f64,
    sigma: f64,
    relaxation: TsRelaxation,
) -> Result<OfflineAttackPlan> {
    let (weights, base) = reduction_inputs(history, target)?;
    match relaxation {
        TsRelaxation::Linear => {
            let kind = ConstraintKind::TsChanceLinear { delta, sigma };
            let problem = ReducedProblem::new(weights, base, target, kind)?;
            let sol = solve_linear(&problem)?;
            OfflineAttackPlan::from_solution(history, target, kind, sol, false)
        }
        TsRelaxation::Chance => {
            let kind = ConstraintKind::TsChance { delta, sigma };
            let problem = ReducedProblem::new(weights, base, target, kind)?;
            match solve_chance(&problem, 1e-6) {
                Ok(sol) => OfflineAttackPlan::from_solution(history, target, kind, sol, false),
                Err(Error::Barrier { fallback, .. }) => {
                    OfflineAttackPlan::from_solution(history, target, kind, *fallback, true)
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Applies a plan to its history, rebuilds the learner, and checks that the
/// next pull lands on the plan's target with high enough probability.
///
/// Success bars: eps-greedy must reach its ceiling 1 - (K-1)/(K(T+1)) (the
/// uniform branch is uncontrollable); UCB must be a point mass; TS is judged
/// by Monte Carlo against 1 - delta minus three standard errors.
///
/// # Errors
/// Mismatched plan/history shapes; TS with `mc_samples` < 1000.
pub fn verify_offline(
    plan: &OfflineAttackPlan,
    history: &History,
    params: &AgentParams,
    delta: f64,
    mc_samples: usize,
    rng: &mut Stream,
) -> Result<VerificationRecord> {
    let poisoned = plan.apply(history)?;
    let state = AgentState::from_history(&poisoned, *params);
    let dist = state.next_pull_distribution(mc_samples, rng)?;
    let p = dist.probs[plan.target];
    let (threshold, bar, std_err) = match params.algorithm {
        Algorithm::EpsGreedy => {
            let k = history.k() as f64;
            let t = history.horizon() as f64;
            let ceiling = 1.0 - (k - 1.0) / (k * (t + 1.0));
            (ceiling, ceiling - 1e-12, None)
        }
        Algorithm::Ucb => (1.0, 1.0 - 1e-12, None),
        Algorithm::Ts => {
            if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
                return Err(Error::Domain(format!(
                    "TS verification needs delta in (0,1), got {delta}"
                )));
            }
            let se = dist.std_err.as_ref().expect("TS reports standard errors")[plan.target];
            (1.0 - delta, 1.0 - delta - 3.0 * se, Some(se))
        }
    };
    Ok(VerificationRecord {
        algorithm: params.algorithm,
        target: plan.target,
        target_probability: p,
        threshold,
        std_err,
        success: p >= bar,
    })
}
