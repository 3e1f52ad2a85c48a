//! The three learners the attacks target: epsilon-greedy, UCB, and Gaussian
//! Thompson sampling.
//!
//! All three keep the same sufficient statistics (post-attack counts and
//! empirical means), pull every arm once in rounds 1..K, break ties toward
//! the lowest arm index, and then apply their rule:
//!
//!   eps-greedy  explore uniformly w.p. alpha_t, otherwise argmax mean
//!   UCB         argmax  mean_a + 3 sigma sqrt(ln t / N_a)
//!   TS          argmax of one posterior sample per arm
//!
//! The default TS posterior for arm a is N(mean_a / sigma^2, sigma^2 / N_a)
//! (the variance-scaled form the attack's union bound is built on); a
//! textbook N(mean_a, sigma^2 / N_a) variant is available as
//! [`TsPosterior::Standard`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::phi;
use crate::model::History;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    EpsGreedy,
    Ucb,
    Ts,
}

impl Algorithm {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::EpsGreedy => "eps-greedy",
            Algorithm::Ucb => "ucb",
            Algorithm::Ts => "ts",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps-greedy" | "epsgreedy" | "eps" => Ok(Algorithm::EpsGreedy),
            "ucb" => Ok(Algorithm::Ucb),
            "ts" => Ok(Algorithm::Ts),
            other => Err(Error::Usage(format!(
                "unknown algorithm {other:?} (expected eps-greedy, ucb, or ts)"
            ))),
        }
    }
}

/// Which Gaussian posterior TS samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TsPosterior {
    /// N(mean / sigma^2, sigma^2 / N) - the variance-scaled mean the
    /// offline TS attack certifies against. Default. Also accepted under
    /// its historical config spelling "paper".
    #[serde(alias = "paper")]
    Scaled,
    /// N(mean, sigma^2 / N).
    Standard,
}

impl Default for TsPosterior {
    fn default() -> Self {
        TsPosterior::Scaled
    }
}

impl std::str::FromStr for TsPosterior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled" | "paper" => Ok(TsPosterior::Scaled),
            "standard" => Ok(TsPosterior::Standard),
            other => Err(Error::Usage(format!(
                "unknown ts-posterior {other:?} (expected scaled or standard)"
            ))),
        }
    }
}

/// Exploration schedule alpha_t for eps-greedy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationRate {
    /// alpha_t = 1/t, the schedule every experiment here uses.
    OneOverT,
    /// Fixed alpha in [0, 1]; mainly for pinning behavior in tests.
    Constant(f64),
}

impl ExplorationRate {
    /// # Panics
    /// If `t` is zero (rounds are 1-based) or a constant rate is outside [0, 1].
    #[must_use]
    pub fn alpha(self, t: u64) -> f64 {
        assert!(t >= 1, "rounds are 1-based");
        match self {
            ExplorationRate::OneOverT => 1.0 / t as f64,
            ExplorationRate::Constant(a) => {
                assert!((0.0..=1.0).contains(&a), "alpha must lie in [0, 1]");
                a
            }
        }
    }
}

/// Everything fixed about a learner across a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub algorithm: Algorithm,
    pub rate: ExplorationRate,
    pub sigma: f64,
    pub ts_posterior: TsPosterior,
}

impl AgentParams {
    #[must_use]
    pub fn new(algorithm: Algorithm, sigma: f64) -> Self {
        Self {
            algorithm,
            rate: ExplorationRate::OneOverT,
            sigma,
            ts_posterior: TsPosterior::default(),
        }
    }

    #[must_use]
    pub fn with_rate(mut self, rate: ExplorationRate) -> Self {
        self.rate = rate;
        self
    }

    #[must_use]
    pub fn with_ts_posterior(mut self, p: TsPosterior) -> Self {
        self.ts_posterior = p;
        self
    }
}

/// Learner state after t completed rounds: post-attack counts and means.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    params: AgentParams,
    counts: Vec<u64>,
    means: Vec<f64>,
    t: u64,
}

/// Where the next pull lands: exact for eps-greedy and UCB, Monte Carlo
/// (with per-arm standard errors) for TS.
#[derive(Clone, Debug, PartialEq)]
pub struct PullDistribution {
    pub probs: Vec<f64>,
    pub std_err: Option<Vec<f64>>,
}

impl AgentState {
    /// # Panics
    /// If `k < 2`.
    #[must_use]
    pub fn new(k: usize, params: AgentParams) -> Self {
        assert!(k >= 2, "need at least 2 arms");
        Self {
            params,
            counts: vec![0; k],
            means: vec![0.0; k],
            t: 0,
        }
    }

    /// Rebuilds the state a learner would hold after observing `history`'s
    /// post-attack rewards.
    #[must_use]
    pub fn from_history(history: &History, params: AgentParams) -> Self {
        let k = history.k();
        let mut state = AgentState::new(k, params);
        for arm in 0..k {
            state.counts[arm] = history.count(arm);
            if history.count(arm) > 0 {
                state.means[arm] = history.post_mean(arm);
            }
        }
        state.t = history.horizon();
        state
    }

    #[must_use]
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    #[must_use]
    pub fn t(&self) -> u64 {
        self.t
    }

    #[must_use]
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[must_use]
    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    #[must_use]
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    #[must_use]
    pub fn mean(&self, arm: usize) -> f64 {
        self.means[arm]
    }

    #[must_use]
    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    /// Incorporates the (possibly poisoned) reward for a pulled arm.
    ///
    /// # Panics
    /// If `arm` is out of range.
    pub fn observe(&mut self, arm: usize, reward: f64) {
        assert!(arm < self.k(), "arm {arm} out of range");
        self.counts[arm] += 1;
        let n = self.counts[arm] as f64;
        self.means[arm] += (reward - self.means[arm]) / n;
        self.t += 1;
    }

    /// Chooses the arm for round t+1. Unpulled arms are drained first
    /// (lowest index first), which realizes the forced initialization
    /// rounds 1..K; afterwards the algorithm's rule applies.
    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if let Some(arm) = self.counts.iter().position(|&c| c == 0) {
            return arm;
        }
        match self.params.algorithm {
            Algorithm::EpsGreedy => self.select_eps_greedy(rng),
            Algorithm::Ucb => self.select_ucb(),
            Algorithm::Ts => self.select_ts(rng),
        }
    }

    /// Eps-greedy rule: explore uniformly w.p. alpha_{t+1}, else argmax mean.
    pub fn select_eps_greedy<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let alpha = self.params.rate.alpha(self.t + 1);
        if alpha > 0.0 && rng.random::<f64>() < alpha {
            rng.random_range(0..self.k())
        } else {
            argmax_lowest(&self.means)
        }
    }

    /// UCB indices for round t+1; unpulled arms are +inf.
    #[must_use]
    pub fn ucb_indices(&self) -> Vec<f64> {
        let t_next = (self.t + 1) as f64;
        let log_t = t_next.ln();
        self.means
            .iter()
            .zip(&self.counts)
            .map(|(&mean, &n)| {
                if n == 0 {
                    f64::INFINITY
                } else {
                    mean + 3.0 * self.params.sigma * (log_t / n as f64).sqrt()
                }
            })
            .collect()
    }

    /// UCB rule: argmax of [`AgentState::ucb_indices`]. Deterministic.
    #[must_use]
    pub fn select_ucb(&self) -> usize {
        argmax_lowest(&self.ucb_indices())
    }

    /// Posterior (mean, variance) TS samples for `arm`.
    ///
    /// # Panics
    /// If the arm is unpulled, or sigma is 0 under the scaled posterior.
    #[must_use]
    pub fn ts_posterior_params(&self, arm: usize) -> (f64, f64) {
        let n = self.counts[arm];
        assert!(n >= 1, "TS posterior needs at least one pull of arm {arm}");
        let sigma = self.params.sigma;
        let var = sigma * sigma / n as f64;
        match self.params.ts_posterior {
            TsPosterior::Scaled => {
                assert!(sigma > 0.0, "scaled TS posterior needs sigma > 0");
                (self.means[arm] / (sigma * sigma), var)
            }
            TsPosterior::Standard => (self.means[arm], var),
        }
    }

    /// One posterior draw for `arm`.
    pub fn sample_ts<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> f64 {
        let (mean, var) = self.ts_posterior_params(arm);
        let z: f64 = rng.sample(StandardNormal);
        mean + var.sqrt() * z
    }

    /// TS rule: sample every arm's posterior (in arm order), take the argmax.
    pub fn select_ts<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let samples: Vec<f64> = (0..self.k()).map(|a| self.sample_ts(a, rng)).collect();
        argmax_lowest(&samples)
    }

    /// Distribution of the round-(t+1) pull. Exact for eps-greedy and UCB;
    /// for TS a conditional Monte Carlo estimate over `mc_samples` joint
    /// posterior draws with per-arm standard errors: each sample scores arm
    /// `a` by the exact probability that a fresh draw of `a` beats the best
    /// rival draw, instead of a 0/1 argmax count. Same estimand, and the
    /// per-sample values are continuous, so the variance is far below the
    /// binomial one whenever one posterior is much wider than the rest (the
    /// usual shape: a rarely pulled arm against well-sampled ones).
    ///
    /// # Errors
    /// Usage error if TS is asked for fewer than 1000 samples.
    pub fn next_pull_distribution<R: Rng + ?Sized>(
        &self,
        mc_samples: usize,
        rng: &mut R,
    ) -> Result<PullDistribution> {
        let k = self.k();
        match self.params.algorithm {
            Algorithm::EpsGreedy => {
                let alpha = self.params.rate.alpha(self.t + 1);
                let greedy = argmax_lowest(&self.means);
                let mut probs = vec![alpha / k as f64; k];
                probs[greedy] += 1.0 - alpha;
                Ok(PullDistribution {
                    probs,
                    std_err: None,
                })
            }
            Algorithm::Ucb => {
                let mut probs = vec![0.0; k];
                probs[self.select_ucb()] = 1.0;
                Ok(PullDistribution {
                    probs,
                    std_err: None,
                })
            }
            Algorithm::Ts => {
                if mc_samples < 1000 {
                    return Err(Error::Usage(format!(
                        "TS pull distribution needs mc_samples >= 1000, got {mc_samples}"
                    )));
                }
                let moments: Vec<(f64, f64)> =
                    (0..k).map(|a| self.ts_posterior_params(a)).collect();
                let sds: Vec<f64> = moments.iter().map(|&(_, v)| v.sqrt()).collect();
                let mut sum = vec![0.0; k];
                let mut sum_sq = vec![0.0; k];
                for _ in 0..mc_samples {
                    let draws: Vec<f64> = (0..k).map(|a| self.sample_ts(a, rng)).collect();
                    // Top two draws, so every arm can exclude itself.
                    let (mut i1, mut i2) = if draws[0] >= draws[1] { (0, 1) } else { (1, 0) };
                    for j in 2..k {
                        if draws[j] > draws[i1] {
                            i2 = i1;
                            i1 = j;
                        } else if draws[j] > draws[i2] {
                            i2 = j;
                        }
                    }
                    for i in 0..k {
                        let rival = if i == i1 { i2 } else { i1 };
                        let field = draws[rival];
                        let v = if sds[i] > 0.0 {
                            phi((moments[i].0 - field) / sds[i])
                        } else if moments[i].0 > field
                            || (moments[i].0 == field && i < rival)
                        {
                            // Point-mass posterior: strict win, or the tie
                            // that argmax breaks toward the lower index.
                            1.0
                        } else {
                            0.0
                        };
                        sum[i] += v;
                        sum_sq[i] += v * v;
                    }
                }
                let n = mc_samples as f64;
                let probs: Vec<f64> = sum.iter().map(|s| s / n).collect();
                let se = probs
                    .iter()
                    .zip(&sum_sq)
                    .map(|(&p, &sq)| ((sq / n - p * p).max(0.0) / n).sqrt())
                    .collect();
                Ok(PullDistribution {
                    probs,
                    std_err: Some(se),
                })
            }
        }
    }
}

/// Argmax with ties broken toward the lowest index.
#[must_use]
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}


#[cfg(test)]
mod distribution_tests {
    use super::*;
    use crate::rng;

    fn state_with(means: &[f64], counts: &[u64], t: u64, params: AgentParams) -> AgentState {
        let mut s = AgentState::new(means.len(), params);
        s.means = means.to_vec();
        s.counts = counts.to_vec();
        s.t = t;
        s
    }

    #[test]
    fn eps_greedy_distribution_hand_value() {
        // K = 5, alpha = 0.01, leader: P(leader) = 1 - 4/5 * 0.01 = 0.992
        let params =
            AgentParams::new(Algorithm::EpsGreedy, 0.1).with_rate(ExplorationRate::Constant(0.01));
        let state = state_with(&[0.1, 0.2, 0.9, 0.3, 0.4], &[2; 5], 10, params);
        let dist = state
            .next_pull_distribution(0, &mut rng::master(1))
            .unwrap();
        assert!((dist.probs[2] - 0.992).abs() < 1e-15);
        assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dist.std_err.is_none());
    }

    #[test]
    fn ucb_distribution_is_point_mass() {
        let params = AgentParams::new(Algorithm::Ucb, 0.1);
        let state = state_with(&[0.9, 0.1], &[50, 50], 100, params);
        let dist = state
            .next_pull_distribution(0, &mut rng::master(2))
            .unwrap();
        assert_eq!(dist.probs, vec![1.0, 0.0]);
    }

    #[test]
    fn ts_distribution_needs_enough_samples() {
        let params = AgentParams::new(Algorithm::Ts, 0.1);
        let state = state_with(&[0.5, 0.4], &[5, 5], 10, params);
        let err = state
            .next_pull_distribution(999, &mut rng::master(3))
            .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn ts_distribution_symmetric_case() {
        let params = AgentParams::new(Algorithm::Ts, 0.1);
        let state = state_with(&[0.5, 0.5], &[10, 10], 20, params);
        let dist = state
            .next_pull_distribution(100_000, &mut rng::master(4))
            .unwrap();
        let se = dist.std_err.as_ref().unwrap()[0].max(1e-12);
        assert!(
            (dist.probs[0] - 0.5).abs() < 4.0 * se,
            "p = {}, se = {se}",
            dist.probs[0]
        );
    }
}
