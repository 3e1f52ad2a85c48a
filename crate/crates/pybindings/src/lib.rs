//! Python bindings for the bandit reward-poisoning library.
//!
//! Exposes the core types and operations as the `banditpoison` module:
//! build or simulate a reward history, solve an offline attack against
//! eps-greedy/UCB/Thompson sampling, verify the learner's next pull, and
//! run attacked online trials. Thin wrappers only; all semantics live in
//! the core crate.
//!
//! Usage from Python:
//!
//!     import banditpoison as bp
//!     inst = bp.BanditInstance([0.9, 0.5, 0.0], sigma=0.1, target=2)
//!     hist = bp.simulate(inst, algo="ucb", horizon=1000, seed=42)
//!     plan = bp.attack_ucb(hist, target=2, xi=0.001, sigma=0.1)
//!     record = bp.verify(plan, hist, algo="ucb")
//!     assert record.success

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use poison_core::{
    attack_eps_greedy as core_attack_eps_greedy, attack_ts as core_attack_ts,
    attack_ucb as core_attack_ucb, beta as core_beta, collect_history,
    run_online_trial as core_run_online_trial, trial_stream, verify_offline, AgentParams,
    Algorithm, AttackName, AttackStrategy, Error, TsPosterior, TsRelaxation,
};

/// Usage-shaped core errors become ValueError; solver and internal
/// failures become RuntimeError.
fn err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Usage(_) | Error::Parse(_) | Error::Mismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn agent_params(algo: &str, sigma: f64, ts_posterior: &str) -> PyResult<AgentParams> {
    let algorithm: Algorithm = parse(algo)?;
    let posterior: TsPosterior = parse(ts_posterior)?;
    Ok(AgentParams::new(algorithm, sigma).with_ts_posterior(posterior))
}

/// A K-armed Gaussian bandit: true means, shared noise sigma, and the
/// attacker's target arm (0-based, strictly suboptimal).
#[pyclass(frozen)]
struct BanditInstance {
    inner: poison_core::BanditInstance,
}

#[pymethods]
impl BanditInstance {
    #[new]
    fn new(means: Vec<f64>, sigma: f64, target: usize) -> PyResult<Self> {
        let inner = poison_core::BanditInstance::new(means, sigma, target).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn means(&self) -> Vec<f64> {
        self.inner.means().to_vec()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn target(&self) -> usize {
        self.inner.target()
    }

    fn __repr__(&self) -> String {
        format!(
            "BanditInstance(means={:?}, sigma={}, target={})",
            self.inner.means(),
            self.inner.sigma(),
            self.inner.target()
        )
    }
}

/// A recorded pull-by-pull interaction log, pre- and post-attack.
#[pyclass]
struct History {
    inner: poison_core::History,
}

#[pymethods]
impl History {
    #[new]
    fn new(k: usize) -> Self {
        Self {
            inner: poison_core::History::new(k),
        }
    }

    /// Appends one clean observation (reward seen as-is).
    fn push(&mut self, arm: usize, reward: f64) {
        self.inner.push(arm, reward);
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.horizon()
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts().to_vec()
    }

    fn count(&self, arm: usize) -> PyResult<u64> {
        self.check_arm(arm)?;
        Ok(self.inner.count(arm))
    }

    /// Mean of the recorded (pre-attack) rewards for one arm.
    fn pre_mean(&self, arm: usize) -> PyResult<f64> {
        self.check_arm(arm)?;
        Ok(self.inner.pre_mean(arm))
    }

    /// Mean of the rewards the learner actually observed.
    fn post_mean(&self, arm: usize) -> PyResult<f64> {
        self.check_arm(arm)?;
        Ok(self.inner.post_mean(arm))
    }

    fn rewards_pre(&self, arm: usize) -> PyResult<Vec<f64>> {
        self.check_arm(arm)?;
        Ok(self.inner.rewards_pre(arm).to_vec())
    }

    fn rewards_post(&self, arm: usize) -> PyResult<Vec<f64>> {
        self.check_arm(arm)?;
        Ok(self.inner.rewards_post(arm).to_vec())
    }

    /// Serializes to the round,arm,reward_pre,reward_post CSV format.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        let inner = poison_core::History::read_csv(text.as_bytes()).map_err(err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.horizon() as usize
    }

    fn __repr__(&self) -> String {
        format!(
            "History(k={}, horizon={}, counts={:?})",
            self.inner.k(),
            self.inner.horizon(),
            self.inner.counts()
        )
    }
}

impl History {
    fn check_arm(&self, arm: usize) -> PyResult<()> {
        if arm >= self.inner.k() {
            return Err(PyValueError::new_err(format!(
                "arm {arm} out of range for {} arms",
                self.inner.k()
            )));
        }
        Ok(())
    }
}

/// A solved offline attack: per-arm mean shifts expanded to per-pull
/// poison, plus the solver's certificates.
#[pyclass(frozen)]
struct AttackPlan {
    inner: poison_core::OfflineAttackPlan,
}

#[pymethods]
impl AttackPlan {
    #[getter]
    fn target(&self) -> usize {
        self.inner.target
    }

    #[getter]
    fn shifts(&self) -> Vec<f64> {
        self.inner.shifts.clone()
    }

    #[getter]
    fn epsilons(&self) -> Vec<Vec<f64>> {
        self.inner.epsilons.clone()
    }

    /// Reduced objective sum_a m_a shift_a^2.
    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    /// l2 norm of the full poison vector.
    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost
    }

    #[getter]
    fn effort_ratio(&self) -> f64 {
        self.inner.effort_ratio
    }

    #[getter]
    fn feasibility_margin(&self) -> f64 {
        self.inner.feasibility_margin
    }

    #[getter]
    fn suboptimal(&self) -> bool {
        self.inner.suboptimal
    }

    /// Constraint family the plan satisfies, for display.
    #[getter]
    fn constraint(&self) -> String {
        format!("{:?}", self.inner.kind)
    }

    /// The poisoned history this plan produces from its source history.
    fn apply(&self, history: &History) -> PyResult<History> {
        let inner = self.inner.apply(&history.inner).map_err(err)?;
        Ok(History { inner })
    }

    /// Serializes to the arm,index_within_arm,y,epsilon CSV format.
    fn to_csv(&self, history: &History) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&history.inner, &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "AttackPlan(target={}, cost={:.6}, effort_ratio={:.6}, margin={:.3e})",
            self.inner.target, self.inner.cost, self.inner.effort_ratio,
            self.inner.feasibility_margin
        )
    }
}

/// Outcome of re-running the learner's next-round decision on poisoned
/// data. Truthy iff the verification succeeded.
#[pyclass(frozen)]
struct VerificationRecord {
    inner: poison_core::VerificationRecord,
}

#[pymethods]
impl VerificationRecord {
    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm.name()
    }

    #[getter]
    fn target(&self) -> usize {
        self.inner.target
    }

    /// Probability the learner's next pull is the target (exact for
    /// eps-greedy/UCB, Monte Carlo estimate for TS).
    #[getter]
    fn target_probability(&self) -> f64 {
        self.inner.target_probability
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    /// Monte Carlo standard error (None outside TS).
    #[getter]
    fn std_err(&self) -> Option<f64> {
        self.inner.std_err
    }

    #[getter]
    fn success(&self) -> bool {
        self.inner.success
    }

    fn __bool__(&self) -> bool {
        self.inner.success
    }

    fn __repr__(&self) -> String {
        format!(
            "VerificationRecord(algorithm='{}', p={:.6}, threshold={:.6}, success={})",
            self.inner.algorithm.name(),
            self.inner.target_probability,
            self.inner.threshold,
            if self.inner.success { "True" } else { "False" }
        )
    }
}

/// Everything measured over one attacked (or control) online run.
#[pyclass(frozen)]
struct OnlineResult {
    inner: poison_core::OnlineTrialResult,
}

#[pymethods]
impl OnlineResult {
    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.horizon
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts.clone()
    }

    #[getter]
    fn target_pulls(&self) -> u64 {
        self.inner.target_pulls
    }

    #[getter]
    fn target_fraction(&self) -> f64 {
        self.inner.target_pulls as f64 / self.inner.horizon as f64
    }

    /// Cumulative l1 attack cost.
    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost
    }

    #[getter]
    fn regret(&self) -> f64 {
        self.inner.regret
    }

    /// Whether every empirical mean stayed inside its confidence radius
    /// at every round.
    #[getter]
    fn event_e_held(&self) -> bool {
        self.inner.event_e_held
    }

    #[getter]
    fn bound_violations(&self) -> u64 {
        self.inner.bound_violations
    }

    fn __repr__(&self) -> String {
        format!(
            "OnlineResult(target_fraction={:.4}, cost={:.4}, regret={:.4})",
            self.inner.target_pulls as f64 / self.inner.horizon as f64,
            self.inner.cost,
            self.inner.regret
        )
    }
}

/// Plays the algorithm for `horizon` clean rounds and records everything.
#[pyfunction]
#[pyo3(signature = (instance, algo, horizon, seed, ts_posterior="scaled"))]
fn simulate(
    instance: &BanditInstance,
    algo: &str,
    horizon: u64,
    seed: u64,
    ts_posterior: &str,
) -> PyResult<History> {
    let params = agent_params(algo, instance.inner.sigma(), ts_posterior)?;
    if horizon < instance.inner.k() as u64 {
        return Err(PyValueError::new_err(format!(
            "horizon {horizon} cannot initialize {} arms",
            instance.inner.k()
        )));
    }
    let mut rng = trial_stream(seed, 0);
    let inner = collect_history(&instance.inner, params, horizon, &mut rng);
    Ok(History { inner })
}

/// Cheapest poisoning pinning an eps-greedy learner's greedy branch on
/// the target: the target's post-attack mean beats every rival by xi.
#[pyfunction]
#[pyo3(signature = (history, target, xi=0.001))]
fn attack_eps_greedy(history: &History, target: usize, xi: f64) -> PyResult<AttackPlan> {
    let inner = core_attack_eps_greedy(&history.inner, target, xi).map_err(err)?;
    Ok(AttackPlan { inner })
}

/// Cheapest poisoning making the target's UCB index at the next round
/// beat every rival's by xi.
#[pyfunction]
#[pyo3(signature = (history, target, xi=0.001, sigma=0.1))]
fn attack_ucb(history: &History, target: usize, xi: f64, sigma: f64) -> PyResult<AttackPlan> {
    let inner = core_attack_ucb(&history.inner, target, xi, sigma).map_err(err)?;
    Ok(AttackPlan { inner })
}

/// Cheapest poisoning making Thompson sampling pick the target next round
/// with probability at least 1 - delta ("chance" solves the union-bound
/// constraint, "linear" its per-rival relaxation).
#[pyfunction]
#[pyo3(signature = (history, target, delta=0.05, sigma=0.1, relaxation="chance"))]
fn attack_ts(
    history: &History,
    target: usize,
    delta: f64,
    sigma: f64,
    relaxation: &str,
) -> PyResult<AttackPlan> {
    let relaxation: TsRelaxation = parse(relaxation)?;
    let inner = core_attack_ts(&history.inner, target, delta, sigma, relaxation).map_err(err)?;
    Ok(AttackPlan { inner })
}

/// Applies the plan to its history, rebuilds the learner, and checks the
/// probability that the next pull lands on the target.
#[pyfunction]
#[pyo3(signature = (plan, history, algo, sigma=0.1, delta=0.05, mc_samples=100_000,
                    seed=0, ts_posterior="scaled"))]
#[allow(clippy::too_many_arguments)]
fn verify(
    plan: &AttackPlan,
    history: &History,
    algo: &str,
    sigma: f64,
    delta: f64,
    mc_samples: usize,
    seed: u64,
    ts_posterior: &str,
) -> PyResult<VerificationRecord> {
    let params = agent_params(algo, sigma, ts_posterior)?;
    let mut rng = trial_stream(seed, 0);
    let inner = verify_offline(
        &plan.inner,
        &history.inner,
        &params,
        delta,
        mc_samples,
        &mut rng,
    )
    .map_err(err)?;
    Ok(VerificationRecord { inner })
}

/// Runs one live round-by-round trial: the learner selects, the
/// environment draws, the attacker perturbs, the learner observes.
/// Attackers: "none", "oracle" (knows true means, margin xi), "constant"
/// (subtracts constant_c from non-target pulls), "ace" (adaptive,
/// estimates means online with tolerance delta).
#[pyfunction]
#[pyo3(signature = (instance, algo, horizon, seed, attack="ace", delta=0.05, xi=0.001,
                    constant_c=0.5, ts_posterior="scaled"))]
#[allow(clippy::too_many_arguments)]
fn run_online_trial(
    instance: &BanditInstance,
    algo: &str,
    horizon: u64,
    seed: u64,
    attack: &str,
    delta: f64,
    xi: f64,
    constant_c: f64,
    ts_posterior: &str,
) -> PyResult<OnlineResult> {
    let params = agent_params(algo, instance.inner.sigma(), ts_posterior)?;
    let name: AttackName = parse(attack)?;
    let strategy = match name {
        AttackName::None => AttackStrategy::None,
        AttackName::Oracle => AttackStrategy::Oracle { xi },
        AttackName::Constant => AttackStrategy::Constant {
            constants: vec![constant_c; instance.inner.k()],
        },
        AttackName::Ace => AttackStrategy::Ace,
    };
    let mut rng = trial_stream(seed, 0);
    let inner = core_run_online_trial(
        &instance.inner,
        params,
        &strategy,
        delta,
        horizon,
        &[],
        None,
        &mut rng,
    )
    .map_err(err)?;
    Ok(OnlineResult { inner })
}

/// Confidence radius beta(n): with probability at least 1 - delta, every
/// arm's empirical mean stays within beta of its true mean at all rounds.
#[pyfunction]
#[pyo3(signature = (n, sigma, k, delta=0.05))]
fn beta(n: u64, sigma: f64, k: usize, delta: f64) -> PyResult<f64> {
    core_beta(n, sigma, k, delta).map_err(err)
}

/// Standard normal CDF.
#[pyfunction]
fn phi(x: f64) -> f64 {
    poison_core::gauss::phi(x)
}

/// Inverse standard normal CDF; p must lie strictly inside (0, 1).
#[pyfunction]
fn phi_inv(p: f64) -> PyResult<f64> {
    poison_core::gauss::phi_inv(p).map_err(err)
}

#[pymodule]
fn banditpoison(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<BanditInstance>()?;
    m.add_class::<History>()?;
    m.add_class::<AttackPlan>()?;
    m.add_class::<VerificationRecord>()?;
    m.add_class::<OnlineResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(attack_eps_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(attack_ucb, m)?)?;
    m.add_function(wrap_pyfunction!(attack_ts, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_online_trial, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(phi_inv, m)?)?;
    Ok(())
}
