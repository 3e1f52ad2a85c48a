//! poison: batch experiments and plan checks for bandit reward poisoning.
//!
//! Three modes. `offline` records clean bandit runs, solves the cheapest
//! poisoning of each recorded history, and verifies the learner's next pull;
//! `online` perturbs rewards on the fly across a reward-gap grid; `verify`
//! re-checks a saved plan CSV against the history it poisons.
//!
//! Every run is reproducible from (config, seed). Config values resolve in
//! order: built-in defaults, then `--config` JSON, then `--paper-scale`,
//! then explicit flags.
//!
//! Exit codes: 0 success, 1 any failed verification (or a failed run),
//! 2 usage error.

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poison_core::harness::percentile;
use poison_core::{
    emit_offline_outputs, emit_online_outputs, run_offline_experiment, run_online_experiment,
    trial_stream, verify_offline, AgentParams, Algorithm, AttackName, ConstraintKind, Error,
    GapGrid, History, MeanRule, OfflineAttackPlan, OfflineConfig, OnlineConfig, Result,
    TsPosterior, TsRelaxation,
};

#[derive(Parser)]
#[command(
    name = "poison",
    version,
    about = "Reward-poisoning attacks on stochastic bandits",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record clean runs, solve the offline attack, verify each trial
    Offline(OfflineArgs),
    /// Attack a live learner across a reward-gap grid
    Online(OnlineArgs),
    /// Re-check a saved plan CSV against its history CSV
    Verify(VerifyArgs),
}

#[derive(Args)]
struct OfflineArgs {
    /// JSON config file; explicit flags override its fields
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Full-scale run (1000 trials)
    #[arg(long)]
    paper_scale: bool,
    /// Learner: eps-greedy | ucb | ts
    #[arg(long)]
    algo: Option<Algorithm>,
    /// Number of arms
    #[arg(long)]
    k: Option<usize>,
    /// Reward noise standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// Recorded rounds per trial
    #[arg(long = "t", visible_alias = "horizon")]
    horizon: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Margin the target must win by (eps-greedy/UCB constraints)
    #[arg(long)]
    xi: Option<f64>,
    /// Allowed failure probability of the TS attack
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target arm, 0-based (default: last arm)
    #[arg(long)]
    target: Option<usize>,
    /// Fixed true means, comma-separated (default: target 0, rivals
    /// uniform on [0,1], redrawn each trial)
    #[arg(long, value_delimiter = ',', value_name = "MU,..")]
    means: Option<Vec<f64>>,
    /// Monte Carlo samples for TS verification
    #[arg(long)]
    mc_samples: Option<usize>,
    /// TS sampling model: scaled | standard
    #[arg(long)]
    ts_posterior: Option<TsPosterior>,
    /// TS attack constraint: chance | linear
    #[arg(long)]
    ts_relaxation: Option<TsRelaxation>,
    /// Histogram bins (default: ceil(sqrt(trials)))
    #[arg(long)]
    bins: Option<usize>,
    /// Directory for trials.csv, summary.csv, SVGs, exemplar hist/plan CSVs
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl OfflineArgs {
    fn into_config(self) -> Result<OfflineConfig> {
        let mut c = match &self.config {
            Some(path) => OfflineConfig::from_json(open(path)?)?,
            None => OfflineConfig::default(),
        };
        if self.paper_scale {
            c.trials = 1000;
        }
        set(&mut c.algorithm, self.algo);
        set(&mut c.k, self.k);
        set(&mut c.sigma, self.sigma);
        set(&mut c.horizon, self.horizon);
        set(&mut c.trials, self.trials);
        set(&mut c.xi, self.xi);
        set(&mut c.delta, self.delta);
        set(&mut c.seed, self.seed);
        set(&mut c.ts_posterior, self.ts_posterior);
        set(&mut c.ts_relaxation, self.ts_relaxation);
        set(&mut c.mc_samples, self.mc_samples);
        if self.target.is_some() {
            c.target = self.target;
        }
        if let Some(means) = self.means {
            if self.k.is_none() && self.config.is_none() {
                c.k = means.len();
            }
            c.means = MeanRule::Explicit { means };
        }
        if self.bins.is_some() {
            c.bins = self.bins;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct OnlineArgs {
    /// JSON config file; explicit flags override its fields
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Full-scale run (T = 100000, 100 trials)
    #[arg(long)]
    paper_scale: bool,
    /// Learner: eps-greedy | ucb | ts
    #[arg(long)]
    algo: Option<Algorithm>,
    /// Attacker: none | oracle | constant | ace
    #[arg(long)]
    attack: Option<AttackName>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Rounds per trial
    #[arg(long = "t", visible_alias = "horizon")]
    horizon: Option<u64>,
    /// Trials per grid point
    #[arg(long)]
    trials: Option<u64>,
    /// Attacker tolerance (confidence radii, concentration event)
    #[arg(long)]
    delta: Option<f64>,
    /// Oracle attack margin
    #[arg(long)]
    xi: Option<f64>,
    /// Constant attack amounts: one value for both arms, or one per arm
    #[arg(long, value_delimiter = ',', value_name = "C,..")]
    constant_c: Option<Vec<f64>>,
    /// Reward-gap grid start:stop:step
    #[arg(long, value_name = "A:B:STEP")]
    delta_grid: Option<GapGrid>,
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement rounds, comma-separated (default: log-spaced ladder)
    #[arg(long, value_delimiter = ',', value_name = "T,..")]
    checkpoints: Option<Vec<u64>>,
    /// Record every n-th perturbation of the first trial
    #[arg(long)]
    eps_stride: Option<u64>,
    /// TS sampling model: scaled | standard
    #[arg(long)]
    ts_posterior: Option<TsPosterior>,
    /// Directory for trials.csv, summary.csv, checkpoints.csv, SVGs
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl OnlineArgs {
    fn into_config(self) -> Result<OnlineConfig> {
        let mut c = match &self.config {
            Some(path) => OnlineConfig::from_json(open(path)?)?,
            None => OnlineConfig::default(),
        };
        if self.paper_scale {
            c.horizon = 100_000;
            c.trials = 100;
        }
        set(&mut c.algorithm, self.algo);
        set(&mut c.attack, self.attack);
        set(&mut c.sigma, self.sigma);
        set(&mut c.horizon, self.horizon);
        set(&mut c.trials, self.trials);
        set(&mut c.delta, self.delta);
        set(&mut c.xi, self.xi);
        set(&mut c.gap_grid, self.delta_grid);
        set(&mut c.seed, self.seed);
        set(&mut c.ts_posterior, self.ts_posterior);
        if let Some(cs) = self.constant_c {
            c.constant_c = cs;
        }
        if self.checkpoints.is_some() {
            c.checkpoints = self.checkpoints;
        }
        if self.eps_stride.is_some() {
            c.eps_stride = self.eps_stride;
        }
        Ok(c)
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Plan CSV (arm,index_within_arm,y,epsilon)
    #[arg(long, value_name = "FILE")]
    plan: PathBuf,
    /// History CSV the plan poisons
    #[arg(long, value_name = "FILE")]
    history: PathBuf,
    /// Learner the plan targets: eps-greedy | ucb | ts
    #[arg(long)]
    algo: Algorithm,
    /// Target arm, 0-based (default: last arm)
    #[arg(long)]
    target: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Margin claimed by eps-greedy/UCB plans
    #[arg(long, default_value_t = 0.001)]
    xi: f64,
    /// Failure probability claimed by TS plans
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Monte Carlo samples for TS verification
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// TS sampling model: scaled | standard
    #[arg(long)]
    ts_posterior: Option<TsPosterior>,
}

/// Flag-over-config merge: only an explicitly given flag replaces the value.
fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn open(path: &PathBuf) -> Result<File> {
    File::open(path).map_err(|e| Error::Usage(format!("opening {}: {e}", path.display())))
}

fn run_offline(args: OfflineArgs) -> Result<ExitCode> {
    let out = args.out.clone();
    let config = args.into_config()?;
    config.validate()?;
    let report = run_offline_experiment(&config)?;

    let ratios = report.effort_ratios();
    let failures = report.rows.iter().filter(|r| !r.success).count();
    println!(
        "offline {} | k={} sigma={} T={} trials={} seed={}",
        config.algorithm.name(),
        config.k,
        config.sigma,
        config.horizon,
        config.trials,
        config.seed
    );
    println!(
        "success rate {:.4} ({} failed) | effort ratio p50 {:.4} p95 {:.4} max {:.4}",
        report.success_rate(),
        failures,
        percentile(&ratios, 50.0),
        percentile(&ratios, 95.0),
        percentile(&ratios, 100.0),
    );
    if let Some(dir) = out {
        for path in emit_offline_outputs(&report, &dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run_online(args: OnlineArgs) -> Result<ExitCode> {
    let out = args.out.clone();
    let config = args.into_config()?;
    config.validate()?;
    let report = run_online_experiment(&config)?;

    println!(
        "online {} under {} | T={} trials={} grid={}:{}:{} seed={}",
        config.algorithm.name(),
        config.attack.label(),
        config.horizon,
        config.trials,
        config.gap_grid.start,
        config.gap_grid.stop,
        config.gap_grid.step,
        config.seed
    );
    for gap in config.gap_grid.values() {
        let rows = report.rows_at(gap);
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let fraction = rows.iter().map(|r| r.target_fraction).sum::<f64>() / n;
        let cost = rows.iter().map(|r| r.cost).sum::<f64>() / n;
        let e_freq = rows.iter().filter(|r| r.event_e_held).count() as f64 / n;
        println!(
            "gap {gap:.3}: target fraction {fraction:.4}, cost {cost:.3}, event E freq {e_freq:.3}"
        );
    }
    if let Some(dir) = out {
        for path in emit_online_outputs(&report, &dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_verify(args: VerifyArgs) -> Result<ExitCode> {
    let history = History::read_csv(open(&args.history)?)?;
    let (ys, eps) = OfflineAttackPlan::read_csv_pairs(open(&args.plan)?)?;

    // The plan CSV carries the rewards it was built against; refuse to
    // judge it against a different history.
    if ys.len() != history.k() {
        return Err(Error::Mismatch(format!(
            "plan covers {} arms, history has {}",
            ys.len(),
            history.k()
        )));
    }
    for (arm, plan_ys) in ys.iter().enumerate() {
        let hist_ys = history.rewards_pre(arm);
        if plan_ys.len() != hist_ys.len() {
            return Err(Error::Mismatch(format!(
                "arm {arm}: plan lists {} rewards, history has {}",
                plan_ys.len(),
                hist_ys.len()
            )));
        }
        for (i, (p, h)) in plan_ys.iter().zip(hist_ys).enumerate() {
            if (p - h).abs() > 1e-9 {
                return Err(Error::Mismatch(format!(
                    "arm {arm} pull {i}: plan reward {p} != history reward {h}"
                )));
            }
        }
    }

    let target = args.target.unwrap_or(history.k() - 1);
    let kind = match args.algo {
        Algorithm::EpsGreedy => ConstraintKind::MeanMargin { xi: args.xi },
        Algorithm::Ucb => ConstraintKind::UcbMargin {
            xi: args.xi,
            sigma: args.sigma,
            horizon: history.horizon(),
        },
        Algorithm::Ts => ConstraintKind::TsChance {
            delta: args.delta,
            sigma: args.sigma,
        },
    };
    let plan = OfflineAttackPlan::from_epsilons(&history, target, kind, eps)?;

    let mut params = AgentParams::new(args.algo, args.sigma);
    if let Some(p) = args.ts_posterior {
        params = params.with_ts_posterior(p);
    }
    let mut rng = trial_stream(args.seed, 0);
    let record = verify_offline(
        &plan,
        &history,
        &params,
        args.delta,
        args.mc_samples,
        &mut rng,
    )?;

    println!(
        "plan: {} arms, {} rounds, target {}, cost {:.6}, effort ratio {:.6}",
        history.k(),
        history.horizon(),
        target,
        plan.cost,
        plan.effort_ratio
    );
    println!("constraint margin {:+.3e} against {:?}", plan.feasibility_margin, kind);
    match record.std_err {
        Some(se) => println!(
            "P(next pull = target) = {:.6} +- {:.1e} (needs >= {:.6} - 3 se)",
            record.target_probability, se, record.threshold
        ),
        None => println!(
            "P(next pull = target) = {:.6} (needs >= {:.6})",
            record.target_probability, record.threshold
        ),
    }
    if record.success {
        println!("verification PASSED");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("verification FAILED");
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Offline(args) => run_offline(args),
        Command::Online(args) => run_online(args),
        Command::Verify(args) => run_verify(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
