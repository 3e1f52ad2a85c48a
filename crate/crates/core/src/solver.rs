//! Mean-shift reduction and its solvers.
//!
//! Every offline attack reduces to choosing one per-arm shift delta_a of the
//! recorded empirical means, minimizing sum_a m_a delta_a^2 subject to a
//! constraint that the target arm wins. The quadratic weights come from the
//! optimal expansion eps_a = delta_a * 1 (spreading a shift uniformly across
//! an arm's m_a samples is l2-cheapest by Cauchy-Schwarz).
//!
//! Constraint families:
//! - mean margin: target mean beats every rival mean by xi (eps-greedy);
//! - UCB margin: target UCB index at round T+1 beats every rival index by xi;
//! - TS chance: a union bound on the probability that any rival's posterior
//!   sample beats the target stays below delta, plus rival mean <= target
//!   mean (the region where that bound is convex);
//! - TS chance, linearized: per-rival mean-gap caps that imply the union
//!   bound by splitting delta evenly across rivals.
//!
//! The margin and linearized families have linear constraints and are solved
//! exactly by a one-dimensional piecewise-quadratic scan ([`solve_linear`]);
//! the chance family is solved by a log-barrier interior-point loop
//! ([`solve_chance`]) warm-started from its linearization. A deliberately
//! dumb grid scanner ([`brute_force_oracle`]) cross-checks both.

use crate::error::{Error, Result};
use crate::gauss::{normal_pdf, phi, phi_inv};

/// Constraint family of a reduced problem, with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstraintKind {
    /// post_mean[target] >= post_mean[a] + xi for every rival a.
    MeanMargin { xi: f64 },
    /// UCB index of target at round horizon+1 beats every rival's by xi.
    UcbMargin { xi: f64, sigma: f64, horizon: u64 },
    /// sum_a Phi((post_mean[a] - post_mean[target]) / c_a) <= delta together
    /// with post_mean[a] <= post_mean[target];
    /// c_a = sigma^3 sqrt(1/m_a + 1/m_target).
    TsChance { delta: f64, sigma: f64 },
    /// post_mean[a] - post_mean[target] <= c_a * Phi^-1(delta / (K-1)).
    TsChanceLinear { delta: f64, sigma: f64 },
}

/// Shift-space optimization problem over one recorded history.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedProblem {
    weights: Vec<f64>,
    base_means: Vec<f64>,
    target: usize,
    kind: ConstraintKind,
}

impl ReducedProblem {
    /// # Errors
    /// Domain error on malformed dimensions, weights below 1, non-finite
    /// inputs, or parameters outside each family's range (xi > 0;
    /// 0 < delta < (K-1)/2 with sigma > 0 for the TS families).
    pub fn new(
        weights: Vec<f64>,
        base_means: Vec<f64>,
        target: usize,
        kind: ConstraintKind,
    ) -> Result<Self> {
        let k = weights.len();
        if k < 2 {
            return Err(Error::Domain(format!("need at least 2 arms, got {k}")));
        }
        if base_means.len() != k {
            return Err(Error::Mismatch(format!(
                "{} means for {k} weights",
                base_means.len()
            )));
        }
        if target >= k {
            return Err(Error::Domain(format!("target {target} out of range")));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 1.0) {
            return Err(Error::Domain("weights must be finite and >= 1".into()));
        }
        if base_means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain("base means must be finite".into()));
        }
        match kind {
            ConstraintKind::MeanMargin { xi } => {
                if !(xi.is_finite() && xi > 0.0) {
                    return Err(Error::Domain(format!("margin xi must be > 0, got {xi}")));
                }
            }
            ConstraintKind::UcbMargin { xi, sigma, horizon } => {
                if !(xi.is_finite() && xi > 0.0) {
                    return Err(Error::Domain(format!("margin xi must be > 0, got {xi}")));
                }
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(Error::Domain(format!("sigma must be >= 0, got {sigma}")));
                }
                if horizon == 0 {
                    return Err(Error::Domain("horizon must be >= 1".into()));
                }
            }
            ConstraintKind::TsChance { delta, sigma }
            | ConstraintKind::TsChanceLinear { delta, sigma } => {
                let cap = (k as f64 - 1.0) / 2.0;
                if !(delta.is_finite() && delta > 0.0 && delta < cap) {
                    return Err(Error::Domain(format!(
                        "delta must lie in (0, {cap}), got {delta}"
                    )));
                }
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::Domain(format!(
                        "TS constraints need sigma > 0, got {sigma}"
                    )));
                }
            }
        }
        Ok(Self {
            weights,
            base_means,
            target,
            kind,
        })
    }

    #[must_use]
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    #[must_use]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[must_use]
    pub fn base_means(&self) -> &[f64] {
        &self.base_means
    }

    #[must_use]
    pub fn target(&self) -> usize {
        self.target
    }

    #[must_use]
    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    /// sum_a m_a shift_a^2.
    ///
    /// # Panics
    /// If `shifts` has the wrong length.
    #[must_use]
    pub fn objective(&self, shifts: &[f64]) -> f64 {
        assert_eq!(shifts.len(), self.k());
        self.weights
            .iter()
            .zip(shifts)
            .map(|(w, d)| w * d * d)
            .sum()
    }

    /// Post-attack means implied by a shift vector.
    #[must_use]
    pub fn post_means(&self, shifts: &[f64]) -> Vec<f64> {
        self.base_means
            .iter()
            .zip(shifts)
            .map(|(b, d)| b + d)
            .collect()
    }

    /// Rival constraint offsets b_a for the linear families, in
    /// shift_a <= shift_target + b_a form (entry at the target unused).
    ///
    /// # Errors
    /// Usage error for the chance-constrained family.
    pub fn linear_offsets(&self) -> Result<Vec<f64>> {
        let t = self.target;
        let base_t = self.base_means[t];
        let mut b = vec![0.0; self.k()];
        match self.kind {
            ConstraintKind::MeanMargin { xi } => {
                for a in 0..self.k() {
                    if a != t {
                        b[a] = base_t - self.base_means[a] - xi;
                    }
                }
            }
            ConstraintKind::UcbMargin { xi, sigma, horizon } => {
                let log_next = ((horizon + 1) as f64).ln();
                let bonus =
                    |m: f64| 3.0 * sigma * (log_next / m).sqrt();
                let bonus_t = bonus(self.weights[t]);
                for a in 0..self.k() {
                    if a != t {
                        b[a] = base_t - self.base_means[a] - xi + bonus_t
                            - bonus(self.weights[a]);
                    }
                }
            }
            ConstraintKind::TsChanceLinear { delta, sigma } => {
                let quantile = phi_inv(delta / (self.k() as f64 - 1.0))?;
                for a in 0..self.k() {
                    if a != t {
                        b[a] = base_t - self.base_means[a]
                            + self.coupling(a, sigma) * quantile;
                    }
                }
            }
            ConstraintKind::TsChance { .. } => {
                return Err(Error::Usage(
                    "chance constraint has no linear offsets; solve it with solve_chance"
                        .into(),
                ))
            }
        }
        Ok(b)
    }

    /// c_a = sigma^3 sqrt(1/m_a + 1/m_target).
    fn coupling(&self, arm: usize, sigma: f64) -> f64 {
        let s3 = sigma * sigma * sigma;
        s3 * (1.0 / self.weights[arm] + 1.0 / self.weights[self.target]).sqrt()
    }

    /// Feasibility slack of a shift vector: the least constraint margin
    /// (negative = infeasible). For the chance family this is
    /// min(delta - union, min rival mean gap).
    #[must_use]
    pub fn feasibility_margin(&self, shifts: &[f64]) -> f64 {
        match self.kind {
            ConstraintKind::TsChance { delta, sigma } => {
                let post = self.post_means(shifts);
                let union = ts_union_bound(&post, &self.weights, sigma, self.target);
                let mut margin = delta - union;
                for a in 0..self.k() {
                    if a != self.target {
                        margin = margin.min(post[self.target] - post[a]);
                    }
                }
                margin
            }
            _ => {
                let b = self.linear_offsets().expect("linear family");
                let mut margin = f64::INFINITY;
                for a in 0..self.k() {
                    if a != self.target {
                        margin = margin.min(shifts[self.target] + b[a] - shifts[a]);
                    }
                }
                margin
            }
        }
    }
}

/// Solution of a reduced problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub shifts: Vec<f64>,
    pub objective: f64,
    /// Least constraint slack at the solution (>= -1e-9 for a valid result).
    pub feasibility_margin: f64,
    /// Normalized stationarity residual of the KKT system (NaN for grid
    /// oracles, which certify by exhaustion instead).
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Exact minimizer for the linear families.
///
/// With s = shift of the target, every rival's optimal response is
/// min(0, s + b_a), so the objective along the response path,
/// h(s) = m_t s^2 + sum_a m_a min(0, s + b_a)^2, is a convex piecewise
/// quadratic. Each piece is minimized in closed form over its interval and
/// the best candidate wins - no iteration, no tolerance.
///
/// # Errors
/// Usage error for the chance family.
pub fn solve_linear(problem: &ReducedProblem) -> Result<SolverResult> {
    let b = problem.linear_offsets()?;
    let k = problem.k();
    let t = problem.target;
    let w = &problem.weights;

    // Rivals sorted by breakpoint -b_a: piece j keeps rivals[j..] active.
    let mut rivals: Vec<usize> = (0..k).filter(|&a| a != t).collect();
    rivals.sort_by(|&x, &y| (-b[x]).partial_cmp(&(-b[y])).expect("finite offsets"));
    let n = rivals.len();

    // Suffix sums over active rivals: M = sum m, B = sum m*b.
    let mut suffix_m = vec![0.0; n + 1];
    let mut suffix_mb = vec![0.0; n + 1];
    for j in (0..n).rev() {
        let a = rivals[j];
        suffix_m[j] = suffix_m[j + 1] + w[a];
        suffix_mb[j] = suffix_mb[j + 1] + w[a] * b[a];
    }

    let h = |s: f64| -> f64 {
        let mut v = w[t] * s * s;
        for &a in &rivals {
            let d = (s + b[a]).min(0.0);
            v += w[a] * d * d;
        }
        v
    };

    let mut best_s = 0.0;
    let mut best_h = f64::INFINITY;
    for j in 0..=n {
        let lo = if j == 0 { f64::NEG_INFINITY } else { -b[rivals[j - 1]] };
        let hi = if j == n { f64::INFINITY } else { -b[rivals[j]] };
        if lo > hi {
            continue; // duplicate breakpoints create empty pieces
        }
        // minimizer of (w_t + M_j) s^2 + 2 B_j s + const on this piece
        let s = (-suffix_mb[j] / (w[t] + suffix_m[j])).clamp(lo, hi);
        let v = h(s);
        if v < best_h {
            best_h = v;
            best_s = s;
        }
    }

    let mut shifts = vec![0.0; k];
    shifts[t] = best_s;
    for &a in &rivals {
        shifts[a] = (best_s + b[a]).min(0.0);
    }

    // KKT: rival stationarity 2 m_a d_a + lambda_a = 0 holds exactly by
    // construction; only the target component can carry residual. Rivals
    // sitting exactly on a kink (d_a = 0 = slack) have free multipliers and
    // may absorb any positive remainder.
    let mut lambda_sum = 0.0;
    let mut kink = false;
    for &a in &rivals {
        lambda_sum += -2.0 * w[a] * shifts[a];
        if shifts[a] == 0.0 && best_s + b[a] == 0.0 {
            kink = true;
        }
    }
    let mut resid = 2.0 * w[t] * best_s - lambda_sum;
    if kink && resid > 0.0 {
        resid = 0.0;
    }
    let grad_scale = (2.0 * w[t] * best_s).abs().max(1.0);

    Ok(SolverResult {
        objective: problem.objective(&shifts),
        feasibility_margin: problem.feasibility_margin(&shifts),
        kkt_residual: resid.abs() / grad_scale,
        iterations: n + 1,
        shifts,
    })
}

/// Union bound on the probability that any rival's posterior sample beats
/// the target's: sum over rivals of
/// Phi((mean_a - mean_target) / (sigma^3 sqrt(1/m_a + 1/m_target))).
///
/// # Panics
/// On mismatched lengths, non-positive weights, sigma <= 0, or a bad target.
#[must_use]
pub fn ts_union_bound(means: &[f64], weights: &[f64], sigma: f64, target: usize) -> f64 {
    assert_eq!(means.len(), weights.len(), "one weight per arm");
    assert!(target < means.len(), "target out of range");
    assert!(sigma > 0.0, "sigma must be positive");
    assert!(weights.iter().all(|&m| m > 0.0), "weights must be positive");
    let s3 = sigma * sigma * sigma;
    let mut sum = 0.0;
    for a in 0..means.len() {
        if a != target {
            let c = s3 * (1.0 / weights[a] + 1.0 / weights[target]).sqrt();
            sum += phi((means[a] - means[target]) / c);
        }
    }
    sum
}

const BARRIER_INNER_CAP: usize = 100;

/// Log-barrier interior-point solve of the chance-constrained family.
///
/// Minimizes the objective plus mu * (-ln(delta - union) - sum_a ln(gap_a)),
/// shrinking mu geometrically from 1 to a floor derived from `tol` (the
/// suboptimality of the final center is about mu * K). Each stage Newton-
/// centers with backtracking; the stage ends when the Newton decrement is
/// small on the scale of mu or progress falls below f64 resolution.
///
/// Warm start: the linearized problem's solution, lifted along the target
/// axis until the union has healthy slack (the linear solution binds the
/// union almost exactly, where barrier gradients explode). The centering
/// path walks back toward the boundary as mu shrinks, so overshooting the
/// lift costs nothing.
///
/// # Errors
/// Usage error on a non-chance problem; `Error::Barrier` (carrying the
/// feasible linearized solution) if the finished run cannot certify itself
/// against that warm start.
pub fn solve_chance(problem: &ReducedProblem, tol: f64) -> Result<SolverResult> {
    let ConstraintKind::TsChance { delta, sigma } = problem.kind else {
        return Err(Error::Usage(
            "solve_chance expects the chance-constrained family".into(),
        ));
    };
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Usage(format!("tol must be > 0, got {tol}")));
    }
    let k = problem.k();
    let t = problem.target;
    let geom = ChanceGeometry::new(problem, delta, sigma);

    // Zero shifts already feasible: nothing to do.
    let zero = vec![0.0; k];
    if geom.margin(&zero) >= 0.0 {
        return Ok(SolverResult {
            shifts: zero.clone(),
            objective: 0.0,
            feasibility_margin: geom.margin(&zero),
            kkt_residual: 0.0,
            iterations: 0,
        });
    }

    // Warm start from the linearized family; feasible for the chance
    // constraint because each linearized rival keeps its own tail below
    // delta / (K - 1).
    let linearized = ReducedProblem::new(
        problem.weights.clone(),
        problem.base_means.clone(),
        t,
        ConstraintKind::TsChanceLinear { delta, sigma },
    )?;
    let warm = solve_linear(&linearized)?;

    let mut shifts = warm.shifts.clone();
    let interior = 0.75 * delta;
    if geom.union(&shifts) > interior {
        // Raising the target shift widens every gap, so the union falls
        // monotonically along this ray; bisect to a healthy interior point.
        let lifted = |l: f64| {
            let mut s = warm.shifts.clone();
            s[t] += l;
            s
        };
        let mut hi = 1e-3 * shifts[t].abs().max(1.0);
        let mut grow = 0;
        while geom.union(&lifted(hi)) > interior {
            hi *= 2.0;
            grow += 1;
            if grow > 200 {
                return Err(Error::IllPosed(
                    "could not find a strictly feasible start".into(),
                ));
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if geom.union(&lifted(mid)) > interior {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        shifts = lifted(hi);
    }

    // Suboptimality of the final center is about mu * K, so stopping near
    // 1e-9 already leaves a gap orders below every tolerance in use; pushing
    // mu further only destroys the Hessian's conditioning (~ 1/mu near the
    // boundary) without measurable gain.
    let mu_floor = (1e-3 * tol).clamp(1e-10, 1e-9);
    let mut mu = 1.0f64;
    let mut total_iters = 0usize;
    loop {
        for _ in 0..BARRIER_INNER_CAP {
            total_iters += 1;
            let (grad, mut hess) = geom.grad_hess(&shifts, mu);
            let mut step: Vec<f64> = grad.iter().map(|g| -g).collect();
            if !cholesky_solve(&mut hess, &mut step) {
                // fall back to a plain gradient step
                step = grad.iter().map(|g| -g).collect();
            }
            let descent: f64 = grad.iter().zip(&step).map(|(g, p)| g * p).sum();
            if descent >= 0.0 {
                break; // numerically flat
            }
            // Approximate centering suffices while mu still shrinks.
            if -descent / 2.0 <= (1e-4 * mu).max(1e-15) {
                break;
            }
            let value = geom.barrier_value(&shifts, mu);
            let mut scale = 1.0f64;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = shifts
                    .iter()
                    .zip(&step)
                    .map(|(x, p)| x + scale * p)
                    .collect();
                if geom.strictly_inside(&trial)
                    && geom.barrier_value(&trial, mu) <= value + 0.25 * scale * descent
                {
                    shifts = trial;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                break; // progress below f64 resolution at this mu
            }
        }
        if mu <= mu_floor {
            break;
        }
        mu = (mu * 0.25).max(mu_floor);
    }

    // KKT certificate at the returned point. The barrier cannot center
    // exactly along its stiff direction at tiny mu, so instead of reading
    // the raw barrier gradient, fit the multipliers directly: nonnegative
    // least squares on ||grad f + lambda_u grad U + sum_a lambda_a grad
    // (-gap_a)||, then report stationarity plus complementarity.
    let kkt = geom.kkt_residual(&shifts);
    let objective = problem.objective(&shifts);

    // The chance-feasible set contains the linearized one, so a sound run
    // never loses to its own warm start beyond the barrier's duality gap
    // (about mu per constraint; exact when the two problems coincide, as
    // they do at K = 2). A run that loses more, or whose residual exceeds
    // the requested tolerance, reports a stall carrying that fallback.
    let gap_allowance = 10.0 * k as f64 * mu_floor;
    if objective > warm.objective * (1.0 + 1e-9) + gap_allowance || !(kkt <= tol) {
        return Err(Error::Barrier {
            iterations: total_iters,
            message: format!(
                "barrier finished uncertified: objective {objective:.6e} vs warm start \
                 {:.6e}, kkt residual {kkt:.3e}",
                warm.objective
            ),
            fallback: Box::new(SolverResult {
                shifts: warm.shifts.clone(),
                objective: warm.objective,
                feasibility_margin: geom.margin(&warm.shifts),
                kkt_residual: f64::NAN,
                iterations: warm.iterations,
            }),
        });
    }

    Ok(SolverResult {
        objective,
        feasibility_margin: geom.margin(&shifts),
        kkt_residual: kkt,
        iterations: total_iters,
        shifts,
    })
}

/// Geometry of the chance constraint in shift space.
struct ChanceGeometry<'a> {
    problem: &'a ReducedProblem,
    delta: f64,
    coupling: Vec<f64>,
}

impl<'a> ChanceGeometry<'a> {
    fn new(problem: &'a ReducedProblem, delta: f64, sigma: f64) -> Self {
        let coupling = (0..problem.k())
            .map(|a| {
                if a == problem.target {
                    f64::NAN
                } else {
                    problem.coupling(a, sigma)
                }
            })
            .collect();
        Self {
            problem,
            delta,
            coupling,
        }
    }

    fn target(&self) -> usize {
        self.problem.target
    }

    /// Rival mean gaps g_a = post_target - post_a.
    fn gaps(&self, shifts: &[f64]) -> Vec<f64> {
        let base = &self.problem.base_means;
        let t = self.target();
        (0..self.problem.k())
            .map(|a| {
                if a == t {
                    f64::NAN
                } else {
                    (base[t] + shifts[t]) - (base[a] + shifts[a])
                }
            })
            .collect()
    }

    fn union(&self, shifts: &[f64]) -> f64 {
        let gaps = self.gaps(shifts);
        let mut sum = 0.0;
        for a in 0..self.problem.k() {
            if a != self.target() {
                sum += phi(-gaps[a] / self.coupling[a]);
            }
        }
        sum
    }

    fn margin(&self, shifts: &[f64]) -> f64 {
        let mut m = self.delta - self.union(shifts);
        for (a, g) in self.gaps(shifts).iter().enumerate() {
            if a != self.target() {
                m = m.min(*g);
            }
        }
        m
    }

    fn strictly_inside(&self, shifts: &[f64]) -> bool {
        let gaps = self.gaps(shifts);
        for (a, g) in gaps.iter().enumerate() {
            if a != self.target() && *g <= 0.0 {
                return false;
            }
        }
        self.union(shifts) < self.delta
    }

    /// Normalized KKT residual with best-fit nonnegative multipliers:
    /// projected Gauss-Seidel on min ||grad f + A lambda||^2 over lambda
    /// >= 0, where A's columns are the constraint gradients (union, then
    /// -gap_a per rival); the complementarity defects lambda_i * slack_i
    /// join the stationarity norm so slack constraints cannot buy cheap
    /// stationarity with huge multipliers.
    fn kkt_residual(&self, shifts: &[f64]) -> f64 {
        let k = self.problem.k();
        let t = self.target();
        let w = &self.problem.weights;
        let gaps = self.gaps(shifts);
        let union = self.union(shifts);

        let grad_f: Vec<f64> = (0..k).map(|a| 2.0 * w[a] * shifts[a]).collect();

        // Column 0: gradient of (union - delta). Columns 1..: gradient of
        // (post_a - post_target) = e_a - e_t for each rival a.
        let rivals: Vec<usize> = (0..k).filter(|&a| a != t).collect();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut slacks: Vec<f64> = Vec::with_capacity(k);
        let mut du = vec![0.0; k];
        for &a in &rivals {
            let c = self.coupling[a];
            let p = normal_pdf(-gaps[a] / c);
            du[a] = p / c;
            du[t] -= p / c;
        }
        cols.push(du);
        slacks.push(self.delta - union);
        for &a in &rivals {
            let mut col = vec![0.0; k];
            col[a] = 1.0;
            col[t] = -1.0;
            cols.push(col);
            slacks.push(gaps[a]);
        }

        let mut lambda = vec![0.0; cols.len()];
        let mut resid = grad_f.clone();
        let norms: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .collect();
        for _ in 0..200 {
            for (i, col) in cols.iter().enumerate() {
                if norms[i] <= 0.0 {
                    continue;
                }
                let dot: f64 = resid.iter().zip(col).map(|(r, c)| r * c).sum();
                let new = (lambda[i] - dot / norms[i]).max(0.0);
                let delta_l = new - lambda[i];
                if delta_l != 0.0 {
                    for (r, c) in resid.iter_mut().zip(col) {
                        *r += delta_l * c;
                    }
                    lambda[i] = new;
                }
            }
        }

        let scale = grad_f.iter().map(|g| g * g).sum::<f64>().sqrt().max(1.0);
        let stationarity = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
        let complementarity = lambda
            .iter()
            .zip(&slacks)
            .map(|(l, s)| (l * s).abs())
            .fold(0.0f64, f64::max);
        (stationarity + complementarity) / scale
    }

    fn barrier_value(&self, shifts: &[f64], mu: f64) -> f64 {
        let mut v = self.problem.objective(shifts);
        v -= mu * (self.delta - self.union(shifts)).ln();
        for (a, g) in self.gaps(shifts).iter().enumerate() {
            if a != self.target() {
                v -= mu * g.ln();
            }
        }
        v
    }

    /// Gradient and Hessian of the barrier. Both are finite everywhere
    /// strictly inside the domain; the Hessian is positive definite there
    /// (convex objective, convex constraint set on gaps >= 0).
    fn grad_hess(&self, shifts: &[f64], mu: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let k = self.problem.k();
        let t = self.target();
        let w = &self.problem.weights;
        let gaps = self.gaps(shifts);
        let union = self.union(shifts);
        let slack = self.delta - union;

        let mut grad: Vec<f64> = (0..k).map(|a| 2.0 * w[a] * shifts[a]).collect();
        let mut hess = vec![vec![0.0; k]; k];
        for a in 0..k {
            hess[a][a] = 2.0 * w[a];
        }

        // d union / d shift_a = pdf(z_a)/c_a, z_a = -gap_a/c_a; target gets
        // the negated sum.
        let mut du = vec![0.0; k];
        for a in 0..k {
            if a == t {
                continue;
            }
            let c = self.coupling[a];
            let z = -gaps[a] / c;
            let p = normal_pdf(z);
            du[a] = p / c;
            du[t] -= p / c;

            // union curvature: (-z pdf(z))/c^2 on the (a, t) pair
            let curv = (-z) * p / (c * c);
            let s = mu * curv / slack;
            hess[a][a] += s;
            hess[a][t] -= s;
            hess[t][a] -= s;
            hess[t][t] += s;

            // rival-gap barrier -ln(gap_a)
            grad[a] += mu / gaps[a];
            grad[t] -= mu / gaps[a];
            let g2 = mu / (gaps[a] * gaps[a]);
            hess[a][a] += g2;
            hess[a][t] -= g2;
            hess[t][a] -= g2;
            hess[t][t] += g2;
        }
        for a in 0..k {
            grad[a] += mu * du[a] / slack;
        }
        let s2 = mu / (slack * slack);
        for a in 0..k {
            for b in 0..k {
                hess[a][b] += s2 * du[a] * du[b];
            }
        }
        (grad, hess)
    }
}

/// In-place Cholesky solve of A x = b for symmetric positive definite A;
/// false when A is not numerically PD (caller falls back to gradient).
fn cholesky_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> bool {
    let n = b.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d.is_finite() && d > 0.0) {
            return false;
        }
        let l = d.sqrt();
        a[j][j] = l;
        for i in j + 1..n {
            let mut v = a[i][j];
            for k in 0..j {
                v -= a[i][k] * a[j][k];
            }
            a[i][j] = v / l;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i][k] * b[k];
        }
        b[i] = v / a[i][i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[k][i] * b[k];
        }
        b[i] = v / a[i][i];
    }
    true
}

/// Axis-aligned search box with a common step.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub step: f64,
}

impl GridSpec {
    /// Same [lo, hi] range on every axis.
    #[must_use]
    pub fn cube(k: usize, lo: f64, hi: f64, step: f64) -> Self {
        Self {
            lo: vec![lo; k],
            hi: vec![hi; k],
            step,
        }
    }
}

const ORACLE_POINT_CAP: u128 = 400_000_000;

/// Exhaustive grid minimizer among feasible points. Test oracle - shares no
/// logic with the real solvers beyond the constraint definitions.
///
/// For the linear families the scan runs over the target shift alone, with
/// every rival taking its exact best response min(0, s + b_a); the grid
/// discretization error is then second order (<= step^2 * sum of weights).
/// For the chance family the scan is a full K-dimensional sweep of the box.
///
/// # Errors
/// Usage error if K > 4 or the grid is malformed/oversized; `OracleEmpty`
/// when no grid point is feasible.
pub fn brute_force_oracle(problem: &ReducedProblem, grid: &GridSpec) -> Result<SolverResult> {
    let k = problem.k();
    if k > 4 {
        return Err(Error::Usage(format!(
            "brute-force oracle is for K <= 4, got K={k}"
        )));
    }
    if grid.lo.len() != k || grid.hi.len() != k {
        return Err(Error::Mismatch("grid box must have one range per arm".into()));
    }
    if !(grid.step.is_finite() && grid.step > 0.0) {
        return Err(Error::Usage("grid step must be positive".into()));
    }
    for a in 0..k {
        if grid.lo[a] > grid.hi[a] {
            return Err(Error::Usage(format!("empty grid range on arm {a}")));
        }
    }

    match problem.kind {
        ConstraintKind::TsChance { delta, sigma } => {
            oracle_chance_scan(problem, grid, delta, sigma)
        }
        _ => oracle_linear_scan(problem, grid),
    }
}

fn axis_points(lo: f64, hi: f64, step: f64) -> usize {
    (((hi - lo) / step + 1e-9).floor() as usize) + 1
}

fn oracle_linear_scan(problem: &ReducedProblem, grid: &GridSpec) -> Result<SolverResult> {
    let b = problem.linear_offsets()?;
    let k = problem.k();
    let t = problem.target;
    let w = &problem.weights;
    let n = axis_points(grid.lo[t], grid.hi[t], grid.step);

    let mut best_s = f64::NAN;
    let mut best_v = f64::INFINITY;
    for i in 0..n {
        let s = grid.lo[t] + i as f64 * grid.step;
        let mut v = w[t] * s * s;
        for a in 0..k {
            if a != t {
                let d = (s + b[a]).min(0.0);
                v += w[a] * d * d;
            }
        }
        if v < best_v {
            best_v = v;
            best_s = s;
        }
    }

    let mut shifts = vec![0.0; k];
    shifts[t] = best_s;
    for a in 0..k {
        if a != t {
            shifts[a] = (best_s + b[a]).min(0.0);
        }
    }
    Ok(SolverResult {
        objective: problem.objective(&shifts),
        feasibility_margin: problem.feasibility_margin(&shifts),
        kkt_residual: f64::NAN,
        iterations: n,
        shifts,
    })
}

fn oracle_chance_scan(
    problem: &ReducedProblem,
    grid: &GridSpec,
    delta: f64,
    sigma: f64,
) -> Result<SolverResult> {
    let k = problem.k();
    let geom = ChanceGeometry::new(problem, delta, sigma);

    let counts: Vec<usize> = (0..k)
        .map(|a| axis_points(grid.lo[a], grid.hi[a], grid.step))
        .collect();
    let total: u128 = counts.iter().map(|&c| c as u128).product();
    if total > ORACLE_POINT_CAP {
        return Err(Error::Usage(format!(
            "grid has {total} points; refine in stages instead"
        )));
    }

    let mut idx = vec![0usize; k];
    let mut shifts: Vec<f64> = grid.lo.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut visited: u128 = 0;
    loop {
        visited += 1;
        // cheap bound first: objective must beat the incumbent
        let obj = problem.objective(&shifts);
        let candidate = match &best {
            Some((v, _)) => obj < *v,
            None => true,
        };
        if candidate && geom.margin(&shifts) >= 0.0 {
            best = Some((obj, shifts.clone()));
        }

        // odometer increment
        let mut axis = 0;
        loop {
            if axis == k {
                break;
            }
            idx[axis] += 1;
            if idx[axis] < counts[axis] {
                shifts[axis] = grid.lo[axis] + idx[axis] as f64 * grid.step;
                break;
            }
            idx[axis] = 0;
            shifts[axis] = grid.lo[axis];
            axis += 1;
        }
        if axis == k {
            break;
        }
    }
    debug_assert_eq!(visited, total);

    let (objective, shifts) = best.ok_or_else(|| {
        Error::OracleEmpty(format!(
            "no feasible point in a {k}-dim grid of {total} points (step {})",
            grid.step
        ))
    })?;
    Ok(SolverResult {
        feasibility_margin: problem.feasibility_margin(&shifts),
        kkt_residual: f64::NAN,
        iterations: total.min(usize::MAX as u128) as usize,
        objective,
        shifts,
    })
}

/// Staged grid refinement: exhaustive scan, re-center a 10x-smaller box on
/// the argmin, repeat until the step reaches `final_step`. Sound for the
/// convex problems solved here; keeps the oracle honest at tolerances a
/// single humane-sized grid cannot reach.
///
/// # Errors
/// Propagates grid-oracle errors from any stage.
pub fn staged_oracle(
    problem: &ReducedProblem,
    lo: f64,
    hi: f64,
    init_step: f64,
    final_step: f64,
) -> Result<SolverResult> {
    let k = problem.k();
    let mut grid = GridSpec::cube(k, lo, hi, init_step);
    let mut result = brute_force_oracle(problem, &grid)?;
    let mut step = init_step;
    while step > final_step {
        let next = (step / 5.0).max(final_step);
        grid = GridSpec {
            lo: result
                .shifts
                .iter()
                .map(|c| (c - 5.0 * step).max(lo))
                .collect(),
            hi: result
                .shifts
                .iter()
                .map(|c| (c + 5.0 * step).min(hi))
                .collect(),
            step: next,
        };
        result = brute_force_oracle(problem, &grid)?;
        step = next;
    }
    Ok(result)
}


#[cfg(test)]
mod union_bound_tests {
    use super::*;

    #[test]
    fn all_equal_means_give_half_per_rival() {
        for k in [2usize, 3, 5] {
            let means = vec![0.4; k];
            let weights = vec![10.0; k];
            let u = ts_union_bound(&means, &weights, 0.1, k - 1);
            assert!(((k as f64 - 1.0) / 2.0 - u).abs() < 1e-12);
        }
    }

    #[test]
    fn small_negative_gap_hand_value() {
        // gap -0.001 at sigma=0.1, m=(100,100): Phi(-7.0711) ~ 7.8e-13
        let u = ts_union_bound(&[-0.001, 0.0], &[100.0, 100.0], 0.1, 1);
        assert!(
            (u - 7.8e-13).abs() < 0.2e-13,
            "union bound {u}"
        );
    }

    #[test]
    fn monotone_in_target_mean() {
        let weights = [50.0, 10.0, 40.0];
        let mut prev = f64::INFINITY;
        for lift in 0..20 {
            let target_mean = -0.01 + 0.002 * lift as f64;
            let means = [0.0, -0.004, target_mean];
            let u = ts_union_bound(&means, &weights, 0.1, 2);
            assert!(u <= prev + 1e-15);
            prev = u;
        }
    }
}



#[cfg(test)]
mod convexity_tests {
    use super::*;
    use rand::Rng;

    /// Midpoint convexity of f(x) = sum_i Phi(C_i (x_i - x_K)) on the region
    /// x_i <= x_K - the geometric fact the chance solver leans on.
    #[test]
    fn union_bound_is_midpoint_convex_on_domain() {
        let mut rng = crate::rng::master(41);
        let n = 3;
        for _ in 0..2000 {
            let c: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>() * 30.0).collect();
            let draw = |rng: &mut crate::rng::Stream| -> Vec<f64> {
                let xk = rng.random::<f64>() * 2.0 - 1.0;
                let mut x: Vec<f64> = (0..n)
                    .map(|_| xk - rng.random::<f64>() * 2.0)
                    .collect();
                x.push(xk);
                x
            };
            let f = |x: &[f64]| -> f64 {
                (0..n).map(|i| phi(c[i] * (x[i] - x[n]))).sum()
            };
            let x = draw(&mut rng);
            let y = draw(&mut rng);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            assert!(
                f(&mid) <= 0.5 * (f(&x) + f(&y)) + 1e-12,
                "midpoint convexity violated"
            );
        }
    }
}
