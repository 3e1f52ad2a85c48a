//! Bandit environment, pull histories, and attack bookkeeping.
//!
//! Rewards are Gaussian: pulling arm a at round t yields mu_a plus
//! N(0, sigma^2) noise. An attacker perturbs the reward the learner sees to
//! r + eps and pays |eps|; totals are aggregated through [`CostLedger`]
//! p-norms. Rounds are 1-based (t = 1..T); arms are 0-based everywhere,
//! including serialized output.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A stochastic Gaussian bandit plus the arm the attacker wants pulled.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditInstance {
    means: Vec<f64>,
    sigma: f64,
    target: usize,
}

impl BanditInstance {
    /// # Errors
    /// Rejects fewer than two arms, non-finite parameters, negative sigma,
    /// an out-of-range target, or a target that is already a best arm.
    pub fn new(means: Vec<f64>, sigma: f64, target: usize) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 arms, got {}",
                means.len()
            )));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("arm means must be finite".into()));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::Domain(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if target >= means.len() {
            return Err(Error::Domain(format!(
                "target arm {target} out of range for k={}",
                means.len()
            )));
        }
        let best = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if means[target] >= best {
            return Err(Error::Domain(format!(
                "target arm {target} must be suboptimal (mean {} vs best {best})",
                means[target]
            )));
        }
        Ok(Self {
            means,
            sigma,
            target,
        })
    }

    #[must_use]
    pub fn k(&self) -> usize {
        self.means.len()
    }

    #[must_use]
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// # Panics
    /// If `arm` is out of range.
    #[must_use]
    pub fn mean(&self, arm: usize) -> f64 {
        self.means[arm]
    }

    #[must_use]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    #[must_use]
    pub fn target(&self) -> usize {
        self.target
    }

    #[must_use]
    pub fn best_mean(&self) -> f64 {
        self.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draws one pre-attack reward for `arm`.
///
/// # Panics
/// If `arm` is out of range.
#[must_use]
pub fn draw_reward<R: Rng + ?Sized>(instance: &BanditInstance, arm: usize, rng: &mut R) -> f64 {
    assert!(
        arm < instance.k(),
        "arm {arm} out of range for k={}",
        instance.k()
    );
    let noise: f64 = rng.sample(StandardNormal);
    instance.means[arm] + instance.sigma * noise
}

/// One pulled round. `reward_post` is what the learner saw; it equals
/// `reward_pre` until an attack touches the round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PullRecord {
    pub round: u64,
    pub arm: usize,
    pub reward_pre: f64,
    pub reward_post: f64,
}

/// Full pull log for one run, with cached per-arm views.
///
/// Invariants kept by construction: rounds are contiguous 1..T, the per-arm
/// counts sum to T, and cached sums recompute exactly from the records.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    k: usize,
    records: Vec<PullRecord>,
    counts: Vec<u64>,
    sums_pre: Vec<f64>,
    sums_post: Vec<f64>,
    rewards_pre: Vec<Vec<f64>>,
    rewards_post: Vec<Vec<f64>>,
}

impl History {
    /// # Panics
    /// If `k` is zero.
    #[must_use]
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "history needs at least one arm");
        Self {
            k,
            records: Vec::new(),
            counts: vec![0; k],
            sums_pre: vec![0.0; k],
            sums_post: vec![0.0; k],
            rewards_pre: vec![Vec::new(); k],
            rewards_post: vec![Vec::new(); k],
        }
    }

    /// Appends an untouched round (`reward_post == reward_pre`).
    ///
    /// # Panics
    /// If `arm` is out of range.
    pub fn push(&mut self, arm: usize, reward: f64) {
        self.push_poisoned(arm, reward, reward);
    }

    /// Appends a round whose observed reward was already perturbed.
    ///
    /// # Panics
    /// If `arm` is out of range.
    pub fn push_poisoned(&mut self, arm: usize, reward_pre: f64, reward_post: f64) {
        assert!(arm < self.k, "arm {arm} out of range for k={}", self.k);
        let round = self.records.len() as u64 + 1;
        self.records.push(PullRecord {
            round,
            arm,
            reward_pre,
            reward_post,
        });
        self.counts[arm] += 1;
        self.sums_pre[arm] += reward_pre;
        self.sums_post[arm] += reward_post;
        self.rewards_pre[arm].push(reward_pre);
        self.rewards_post[arm].push(reward_post);
    }

    #[must_use]
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of completed rounds T.
    #[must_use]
    pub fn horizon(&self) -> u64 {
        self.records.len() as u64
    }

    #[must_use]
    pub fn records(&self) -> &[PullRecord] {
        &self.records
    }

    #[must_use]
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[must_use]
    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    /// Pre-attack empirical mean of `arm`.
    ///
    /// # Panics
    /// If the arm was never pulled.
    #[must_use]
    pub fn pre_mean(&self, arm: usize) -> f64 {
        assert!(self.counts[arm] > 0, "arm {arm} has no pulls");
        self.sums_pre[arm] / self.counts[arm] as f64
    }

    /// Post-attack empirical mean of `arm`.
    ///
    /// # Panics
    /// If the arm was never pulled.
    #[must_use]
    pub fn post_mean(&self, arm: usize) -> f64 {
        assert!(self.counts[arm] > 0, "arm {arm} has no pulls");
        self.sums_post[arm] / self.counts[arm] as f64
    }

    /// Rewards of `arm` in pull order, before any attack.
    #[must_use]
    pub fn rewards_pre(&self, arm: usize) -> &[f64] {
        &self.rewards_pre[arm]
    }

    /// Rewards of `arm` in pull order, as the learner saw them.
    #[must_use]
    pub fn rewards_post(&self, arm: usize) -> &[f64] {
        &self.rewards_post[arm]
    }

    /// All pre-attack per-arm reward vectors.
    #[must_use]
    pub fn rewards_pre_by_arm(&self) -> &[Vec<f64>] {
        &self.rewards_pre
    }

    /// Applies a per-arm perturbation (indexed by pull order within each arm)
    /// on top of the pre-attack rewards, producing the poisoned history.
    ///
    /// # Errors
    /// Mismatch unless `eps_by_arm` has exactly one entry per pull per arm.
    pub fn with_attack(&self, eps_by_arm: &[Vec<f64>]) -> Result<History> {
        if eps_by_arm.len() != self.k {
            return Err(Error::Mismatch(format!(
                "attack covers {} arms, history has {}",
                eps_by_arm.len(),
                self.k
            )));
        }
        for (arm, eps) in eps_by_arm.iter().enumerate() {
            if eps.len() as u64 != self.counts[arm] {
                return Err(Error::Mismatch(format!(
                    "arm {arm}: {} perturbations for {} pulls",
                    eps.len(),
                    self.counts[arm]
                )));
            }
        }
        let mut out = History::new(self.k);
        let mut cursor = vec![0usize; self.k];
        for rec in &self.records {
            let i = cursor[rec.arm];
            cursor[rec.arm] += 1;
            out.push_poisoned(rec.arm, rec.reward_pre, rec.reward_pre + eps_by_arm[rec.arm][i]);
        }
        Ok(out)
    }

    /// Recomputes cached counts and sums from the raw records; true when the
    /// cache matches exactly (bit-for-bit, same summation order).
    #[must_use]
    pub fn cache_consistent(&self) -> bool {
        let mut counts = vec![0u64; self.k];
        let mut sums_pre = vec![0.0f64; self.k];
        let mut sums_post = vec![0.0f64; self.k];
        for (i, rec) in self.records.iter().enumerate() {
            if rec.round != i as u64 + 1 || rec.arm >= self.k {
                return false;
            }
            counts[rec.arm] += 1;
            sums_pre[rec.arm] += rec.reward_pre;
            sums_post[rec.arm] += rec.reward_post;
        }
        counts == self.counts && sums_pre == self.sums_pre && sums_post == self.sums_post
    }

    /// Writes `t,arm,reward_pre,reward_post` rows.
    ///
    /// # Errors
    /// On I/O failure.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "arm", "reward_pre", "reward_post"])
            .map_err(csv_err)?;
        for rec in &self.records {
            w.write_record(&[
                rec.round.to_string(),
                rec.arm.to_string(),
                rec.reward_pre.to_string(),
                rec.reward_post.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a history written by [`History::write_csv`]. A three-column
    /// `t,arm,reward` file is accepted as an unattacked log.
    ///
    /// # Errors
    /// Parse error on malformed rows, wrong headers, or non-contiguous rounds.
    pub fn read_csv<R: Read>(input: R) -> Result<History> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers().map_err(csv_err)?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let attacked = match cols.as_slice() {
            ["t", "arm", "reward_pre", "reward_post"] => true,
            ["t", "arm", "reward"] => false,
            other => {
                return Err(Error::Parse(format!(
                    "unexpected history columns {other:?}"
                )))
            }
        };
        let mut rows: Vec<(u64, usize, f64, f64)> = Vec::new();
        let mut max_arm = 0usize;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let t: u64 = parse_field(rec.get(0), "t")?;
            let arm: usize = parse_field(rec.get(1), "arm")?;
            let pre: f64 = parse_field(rec.get(2), "reward")?;
            let post: f64 = if attacked {
                parse_field(rec.get(3), "reward_post")?
            } else {
                pre
            };
            max_arm = max_arm.max(arm);
            rows.push((t, arm, pre, post));
        }
        if rows.is_empty() {
            return Err(Error::Parse("history file has no rows".into()));
        }
        let mut h = History::new(max_arm + 1);
        for (i, (t, arm, pre, post)) in rows.into_iter().enumerate() {
            if t != i as u64 + 1 {
                return Err(Error::Parse(format!(
                    "rounds must be contiguous from 1; row {} has t={t}",
                    i + 1
                )));
            }
            h.push_poisoned(arm, pre, post);
        }
        Ok(h)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse(format!("missing column {name}")))?;
    raw.parse()
        .map_err(|_| Error::Parse(format!("bad {name} value: {raw:?}")))
}

/// Which norm a [`CostLedger`] reports.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostNorm {
    /// (sum |eps|^p)^(1/p), p >= 1.
    P(f64),
    /// max |eps|.
    Max,
}

/// Accumulates per-round perturbations and reports their norm.
#[derive(Clone, Debug, PartialEq)]
pub struct CostLedger {
    norm: CostNorm,
    epsilons: Vec<f64>,
}

impl CostLedger {
    /// # Errors
    /// Domain error for p < 1 or non-finite p.
    pub fn new(norm: CostNorm) -> Result<Self> {
        if let CostNorm::P(p) = norm {
            if !(p.is_finite() && p >= 1.0) {
                return Err(Error::Domain(format!("norm order must be >= 1, got {p}")));
            }
        }
        Ok(Self {
            norm,
            epsilons: Vec::new(),
        })
    }

    pub fn push(&mut self, eps: f64) {
        self.epsilons.push(eps);
    }

    #[must_use]
    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    #[must_use]
    pub fn norm(&self) -> CostNorm {
        self.norm
    }

    /// Attack cost under the ledger's norm. Empty ledger costs 0.
    #[must_use]
    pub fn cost(&self) -> f64 {
        norm_cost(&self.epsilons, self.norm)
    }
}

/// p-norm (or max-norm) of a perturbation sequence.
#[must_use]
pub fn norm_cost(eps: &[f64], norm: CostNorm) -> f64 {
    match norm {
        CostNorm::Max => eps.iter().fold(0.0, |m, e| m.max(e.abs())),
        CostNorm::P(p) if p == 1.0 => eps.iter().map(|e| e.abs()).sum(),
        CostNorm::P(p) if p == 2.0 => eps.iter().map(|e| e * e).sum::<f64>().sqrt(),
        CostNorm::P(p) => eps
            .iter()
            .map(|e| e.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p),
    }
}

/// Attacker effort relative to the data it poisons:
/// sqrt(sum_a ||eps_a||^2 / sum_a ||y_a||^2).
///
/// # Errors
/// Mismatch on ragged inputs; degenerate when all rewards are zero.
pub fn effort_ratio(eps_by_arm: &[Vec<f64>], rewards_by_arm: &[Vec<f64>]) -> Result<f64> {
    if eps_by_arm.len() != rewards_by_arm.len() {
        return Err(Error::Mismatch(format!(
            "{} eps arms vs {} reward arms",
            eps_by_arm.len(),
            rewards_by_arm.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (arm, (eps, y)) in eps_by_arm.iter().zip(rewards_by_arm).enumerate() {
        if eps.len() != y.len() {
            return Err(Error::Mismatch(format!(
                "arm {arm}: {} perturbations vs {} rewards",
                eps.len(),
                y.len()
            )));
        }
        num += eps.iter().map(|e| e * e).sum::<f64>();
        den += y.iter().map(|v| v * v).sum::<f64>();
    }
    if den == 0.0 {
        return Err(Error::Degenerate(
            "effort ratio undefined: all rewards are zero".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// Expected-regret functional sum_a (max_i mu_i - mu_a) * N_a.
///
/// # Panics
/// If `counts` does not have one entry per arm.
#[must_use]
pub fn regret(instance: &BanditInstance, counts: &[u64]) -> f64 {
    assert_eq!(counts.len(), instance.k(), "one count per arm");
    let best = instance.best_mean();
    instance
        .means()
        .iter()
        .zip(counts)
        .map(|(&mu, &n)| (best - mu) * n as f64)
        .sum()
}

#[cfg(test)]
mod instance_tests {
    use super::*;

    #[test]
    fn rejects_bad_instances() {
        assert!(BanditInstance::new(vec![1.0], 0.1, 0).is_err());
        assert!(BanditInstance::new(vec![1.0, 0.0], -0.1, 1).is_err());
        assert!(BanditInstance::new(vec![1.0, 0.0], 0.1, 2).is_err());
        // target must be strictly suboptimal
        assert!(BanditInstance::new(vec![1.0, 1.0], 0.1, 1).is_err());
        assert!(BanditInstance::new(vec![0.3, 1.0], 0.1, 1).is_err());
        assert!(BanditInstance::new(vec![f64::NAN, 0.0], 0.1, 1).is_err());
    }

    #[test]
    fn zero_noise_draw_returns_the_mean() {
        let inst = BanditInstance::new(vec![0.5, 0.0], 0.0, 1).unwrap();
        let mut rng = crate::rng::master(1);
        assert_eq!(draw_reward(&inst, 0, &mut rng), 0.5);
        assert_eq!(draw_reward(&inst, 1, &mut rng), 0.0);
    }

    #[test]
    fn draw_matches_mean_and_variance() {
        let inst = BanditInstance::new(vec![0.7, 0.0], 0.1, 1).unwrap();
        let mut rng = crate::rng::master(11);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let r = draw_reward(&inst, 0, &mut rng);
            sum += r;
            sumsq += r * r;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        // 3.5 sigma band on the mean: 3.5 * 0.1 / sqrt(n)
        assert!((mean - 0.7).abs() < 3.5e-4, "mean {mean}");
        assert!((var - 0.01).abs() < 0.0005, "variance {var}");
    }
}



#[cfg(test)]
mod effort_and_regret_tests {
    use super::*;

    #[test]
    fn zero_attack_has_zero_effort() {
        let y = vec![vec![1.0, 2.0], vec![0.5]];
        let e = vec![vec![0.0, 0.0], vec![0.0]];
        assert_eq!(effort_ratio(&e, &y).unwrap(), 0.0);
    }

    #[test]
    fn effort_one_when_norms_match() {
        // ||eps|| = ||y|| = 5 even though the vectors differ
        let y = vec![vec![3.0, 4.0]];
        let e = vec![vec![0.0, 5.0]];
        assert_eq!(effort_ratio(&e, &y).unwrap(), 1.0);
    }

    #[test]
    fn effort_errors_on_zero_rewards() {
        let y = vec![vec![0.0, 0.0]];
        let e = vec![vec![0.1, 0.2]];
        assert!(matches!(
            effort_ratio(&e, &y),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn effort_is_permutation_invariant() {
        // Reordering pulls within an arm cannot change either norm.
        let y1 = vec![vec![1.0, 2.0, 3.0], vec![4.0]];
        let y2 = vec![vec![3.0, 1.0, 2.0], vec![4.0]];
        let e1 = vec![vec![0.3, 0.1, 0.2], vec![0.5]];
        let e2 = vec![vec![0.2, 0.3, 0.1], vec![0.5]];
        let a = effort_ratio(&e1, &y1).unwrap();
        let b = effort_ratio(&e2, &y2).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn regret_hand_values() {
        let inst = BanditInstance::new(vec![1.0, 0.0], 0.1, 1).unwrap();
        assert_eq!(regret(&inst, &[90, 10]), 10.0);

        let inst = BanditInstance::new(vec![1.0, 0.5, 0.0], 0.1, 2).unwrap();
        assert_eq!(regret(&inst, &[0, 10, 10]), 15.0);
    }

    #[test]
    fn regret_zero_when_only_best_pulled() {
        let inst = BanditInstance::new(vec![1.0, 0.0], 0.1, 1).unwrap();
        assert_eq!(regret(&inst, &[100, 0]), 0.0);
    }
}
