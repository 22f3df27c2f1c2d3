//! Monte Carlo regret experiments.
//!
//! Each trial draws θ once, then for every round asks the policy for an
//! action, draws a reward from the true θ and updates the posterior. Trial i
//! uses the ChaCha stream i of the master seed, so results do not depend on
//! how trials are scheduled, and different policies see the same θ draws.

use std::sync::Arc;

use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::benefit_table::{regularizer_mbar, BenefitTable, TableError};
use crate::numerics::{pearson_correlation, NumericsError};
use crate::policies::{
    fix_policy_from, fix_regularizer_from, greedy_from, one_armed_q1, one_armed_regularizer,
    r2_two_arm_from, ts_lambda_from, ts_sampling, ActionDist, PolicyError, UcbAgent,
};
use crate::posterior::{
    credible_interval, gap_stats, interval_overlap, Arm, ArmBelief, BeliefState, Family, GapStats,
    PosteriorError,
};

/// Credible mass of the diagnostic intervals.
pub const DIAGNOSTIC_MASS: f64 = 0.8;
/// Trials simulated per parallel block before folding into the aggregate.
const BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("policy {policy} cannot run on prior {prior}: {reason}")]
    Incompatible {
        policy: String,
        prior: String,
        reason: String,
    },
    #[error("no traces to aggregate")]
    Empty,
    #[error("traces have different horizons")]
    HorizonMismatch,
    #[error("horizon and trial count must be at least 1")]
    InvalidSize,
    #[error("invalid environment: {0}")]
    Environment(String),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Decision rule driven by the simulator.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Thompson Sampling, sampling form.
    ThompsonSampling,
    /// Thompson Sampling with regularizer λ ν̃.
    TsLambda(f64),
    /// Squared-regret optimal policy against a known arm 2.
    R2OneArm,
    /// Truncated squared-regret optimal policy for Beta × Beta.
    R2TwoArm(Arc<BenefitTable>),
    /// Thompson Sampling with the shutdown fix.
    Fix,
    Ucb,
    Greedy,
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::ThompsonSampling => "ts".into(),
            Policy::TsLambda(l) => format!("ts_lambda_{l}"),
            Policy::R2OneArm => "r2".into(),
            Policy::R2TwoArm(t) => format!("r2_m{}", t.m_bar()),
            Policy::Fix => "fix".into(),
            Policy::Ucb => "ucb".into(),
            Policy::Greedy => "greedy".into(),
        }
    }

    /// Reject combinations the policy is not defined for.
    pub fn check(&self, prior: &BeliefState, horizon: usize) -> Result<(), SimError> {
        let fail = |reason: &str| {
            Err(SimError::Incompatible {
                policy: self.name(),
                prior: prior.to_string(),
                reason: reason.into(),
            })
        };
        match self {
            Policy::R2OneArm if !prior.arm2().is_known() => fail("arm 2 must be known"),
            Policy::R2TwoArm(table) => {
                let key = match table.key_of(prior) {
                    Ok(k) => k,
                    Err(_) => return fail("prior is not on the table's lattice"),
                };
                let [l1, l2] = table.limits();
                let room = (l1 - key[0] - key[1]).min(l2 - key[2] - key[3]) as usize;
                if horizon > room + 1 {
                    return fail("table is too shallow for the horizon");
                }
                Ok(())
            }
            Policy::TsLambda(l) if !(l.is_finite() && *l >= 0.0) => fail("lambda must be >= 0"),
            _ => Ok(()),
        }
    }
}

/// Where the true means come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaSource {
    /// θ ~ prior, once per trial.
    Prior,
    /// A fixed instance.
    Fixed([f64; 2]),
}

/// True means and reward model of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    pub theta: [f64; 2],
    pub family: Family,
}

impl Environment {
    pub fn new(theta: [f64; 2], family: Family) -> Result<Self, SimError> {
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(SimError::Environment(format!("non-finite theta {theta:?}")));
        }
        if family == Family::Bernoulli && !theta.iter().all(|t| (0.0..=1.0).contains(t)) {
            return Err(SimError::Environment(format!(
                "Bernoulli theta {theta:?} outside [0, 1]"
            )));
        }
        Ok(Self { theta, family })
    }

    pub fn sample<R: Rng + ?Sized>(prior: &BeliefState, rng: &mut R) -> Self {
        let theta = [prior.arm1().sample_mean(rng), prior.arm2().sample_mean(rng)];
        Self {
            theta,
            family: prior.family(),
        }
    }

    pub fn reward<R: Rng + ?Sized>(&self, arm: Arm, rng: &mut R) -> f64 {
        let mean = self.theta[usize::from(arm.number() - 1)];
        match self.family {
            Family::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Gaussian { reward_variance } => {
                if reward_variance == 0.0 {
                    mean
                } else {
                    Normal::new(mean, reward_variance.sqrt())
                        .expect("finite")
                        .sample(rng)
                }
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.theta[0].max(self.theta[1])
    }

    /// Arm with the lower true mean (arm 2 on ties).
    pub fn suboptimal_arm(&self) -> Arm {
        if self.theta[0] < self.theta[1] {
            Arm::One
        } else {
            Arm::Two
        }
    }
}

/// Memoized gap statistics for Beta × Beta states, which need quadrature.
#[derive(Debug, Default)]
pub struct StatsCache {
    map: DashMap<[u64; 4], GapStats>,
}

impl StatsCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, state: &BeliefState) -> GapStats {
        let (
            ArmBelief::Beta {
                alpha: a1,
                beta: b1,
            },
            ArmBelief::Beta {
                alpha: a2,
                beta: b2,
            },
        ) = (*state.arm1(), *state.arm2())
        else {
            return gap_stats(state);
        };
        let key = [a1.to_bits(), b1.to_bits(), a2.to_bits(), b2.to_bits()];
        if let Some(g) = self.map.get(&key) {
            return *g;
        }
        let g = gap_stats(state);
        self.map.insert(key, g);
        g
    }
}

/// Per-round diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagRow {
    pub t: usize,
    pub q1: f64,
    /// Overlap of the two arms' intervals before the round.
    pub overlap: f64,
    /// The policy's regularizer, when defined.
    pub regularizer: Option<f64>,
    /// Pulls of the truly suboptimal arm divided by t, after the round.
    pub pull_rate: f64,
    /// (lower, center, upper) per arm: credible intervals around posterior
    /// means, or for UCB confidence intervals around empirical means.
    pub intervals: [(f64, f64, f64); 2],
}

/// Record of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub theta: [f64; 2],
    pub arms: Vec<Arm>,
    pub rewards: Vec<f64>,
    /// max(θ) − θ_A per round.
    pub instant: Vec<f64>,
    /// r(q; π) = E max − q·E θ per round.
    pub conditional: Vec<f64>,
    pub q1: Vec<f64>,
    pub diagnostics: Option<Vec<DiagRow>>,
}

impl RegretTrace {
    pub fn horizon(&self) -> usize {
        self.arms.len()
    }

    pub fn squared(&self) -> impl Iterator<Item = f64> + '_ {
        self.conditional.iter().map(|r| r * r)
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.instant.iter().sum()
    }
}

/// One policy decision: the action distribution and the regularizer that
/// produced it.
fn decide(
    policy: &Policy,
    state: &BeliefState,
    g: &GapStats,
    ucb: &UcbAgent,
) -> Result<(ActionDist, Option<f64>), SimError> {
    Ok(match policy {
        Policy::ThompsonSampling => (ActionDist::new(g.p_gt)?, Some(g.cov_biserial)),
        Policy::TsLambda(l) => (ts_lambda_from(g, *l)?, Some(l * g.cov_biserial)),
        Policy::Greedy => (greedy_from(g), Some(0.0)),
        Policy::Fix => (fix_policy_from(g), Some(fix_regularizer_from(g))),
        Policy::R2OneArm => (
            ActionDist::new(one_armed_q1(g.e_gap_plus, g.e_gap))?,
            one_armed_regularizer(g.e_gap_plus, g.e_gap).ok(),
        ),
        Policy::R2TwoArm(table) => {
            let (b1, b2) = table.query(state)?;
            (
                r2_two_arm_from(g, b1, b2),
                regularizer_mbar(table, state).ok(),
            )
        }
        Policy::Ucb => (ActionDist::pure(ucb.choose()), None),
    })
}

fn ucb_intervals(ucb: &UcbAgent) -> [(f64, f64, f64); 2] {
    let counts = ucb.counts();
    let means = ucb.means();
    let t = (counts[0] + counts[1]).max(1) as f64;
    [0, 1].map(|k| {
        if counts[k] == 0 {
            (f64::NEG_INFINITY, means[k], f64::INFINITY)
        } else {
            let width = (2.0 * t.ln() / counts[k] as f64).sqrt();
            (means[k] - width, means[k], means[k] + width)
        }
    })
}

fn credible_intervals(state: &BeliefState) -> Result<[(f64, f64, f64); 2], SimError> {
    let mut out = [(0.0, 0.0, 0.0); 2];
    for (slot, arm) in out.iter_mut().zip([Arm::One, Arm::Two]) {
        let belief = state.arm(arm);
        let (lo, hi) = credible_interval(belief, DIAGNOSTIC_MASS)?;
        *slot = (lo, belief.mean(), hi);
    }
    Ok(out)
}

/// Simulate one trial. `theta` fixes the environment; otherwise θ is drawn
/// from `prior` with the trial's first random numbers.
pub fn run_trial<R: Rng + ?Sized>(
    prior: &BeliefState,
    policy: &Policy,
    horizon: usize,
    theta: ThetaSource,
    rng: &mut R,
    cache: &StatsCache,
    with_diagnostics: bool,
) -> Result<RegretTrace, SimError> {
    let env = match theta {
        ThetaSource::Prior => Environment::sample(prior, rng),
        ThetaSource::Fixed(theta) => Environment::new(theta, prior.family())?,
    };
    let mut state = *prior;
    let mut ucb = UcbAgent::new();
    let mut trace = RegretTrace {
        theta: env.theta,
        arms: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        instant: Vec::with_capacity(horizon),
        conditional: Vec::with_capacity(horizon),
        q1: Vec::with_capacity(horizon),
        diagnostics: with_diagnostics.then(|| Vec::with_capacity(horizon)),
    };
    let suboptimal = env.suboptimal_arm();
    let mut suboptimal_pulls = 0usize;
    for t in 1..=horizon {
        let g = cache.get(&state);
        let (action, regularizer) = decide(policy, &state, &g, &ucb)?;
        let intervals = match (&trace.diagnostics, policy) {
            (None, _) => None,
            (Some(_), Policy::Ucb) => Some(ucb_intervals(&ucb)),
            (Some(_), _) => Some(credible_intervals(&state)?),
        };
        let arm = match policy {
            Policy::ThompsonSampling => ts_sampling(&state, rng),
            _ => action.sample(rng),
        };
        let reward = env.reward(arm, rng);
        let conditional = (g.e_max - action.mix(g.mean1, g.mean2)).max(0.0);
        trace.arms.push(arm);
        trace.rewards.push(reward);
        trace
            .instant
            .push(env.best() - env.theta[usize::from(arm.number() - 1)]);
        trace.conditional.push(conditional);
        trace.q1.push(action.q1());
        state = state.observe(arm, reward)?;
        ucb.observe(arm, reward);
        if arm == suboptimal {
            suboptimal_pulls += 1;
        }
        if let (Some(rows), Some(intervals)) = (trace.diagnostics.as_mut(), intervals) {
            let a = (intervals[0].0, intervals[0].2);
            let b = (intervals[1].0, intervals[1].2);
            rows.push(DiagRow {
                t,
                q1: action.q1(),
                overlap: interval_overlap(a, b),
                regularizer,
                pull_rate: suboptimal_pulls as f64 / t as f64,
                intervals,
            });
        }
    }
    Ok(trace)
}

/// Cross-trial mean and standard error of a per-round cumulative quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl AggregateCurve {
    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("nonempty curve")
    }

    pub fn final_stderr(&self) -> f64 {
        *self.stderr.last().expect("nonempty curve")
    }

    /// 95% normal interval at round t (1-based).
    pub fn ci95(&self, t: usize) -> (f64, f64) {
        let half = 1.96 * self.stderr[t - 1];
        (self.mean[t - 1] - half, self.mean[t - 1] + half)
    }
}

/// Streaming Welford accumulator over per-round values.
#[derive(Debug, Clone)]
struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(horizon: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; horizon],
            m2: vec![0.0; horizon],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for (i, &x) in values.iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }

    fn finish(self, seed: u64) -> AggregateCurve {
        let n = self.count as f64;
        let stderr = self
            .m2
            .iter()
            .map(|m2| {
                if self.count > 1 {
                    (m2 / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        AggregateCurve {
            mean: self.mean,
            stderr,
            trials: self.count,
            seed,
        }
    }
}

fn running_sum(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Per-round mean and stderr of cumulative realized regret.
pub fn aggregate(traces: &[RegretTrace], seed: u64) -> Result<AggregateCurve, SimError> {
    Ok(Summary::from_traces(traces, seed)?.realized)
}

/// The three cumulative curves of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Σ (max θ − θ_A)
    pub realized: AggregateCurve,
    /// Σ r(q; π)
    pub conditional: AggregateCurve,
    /// Σ r(q; π)²
    pub squared: AggregateCurve,
}

struct Accumulator {
    realized: Welford,
    conditional: Welford,
    squared: Welford,
}

impl Accumulator {
    fn new(horizon: usize) -> Self {
        Self {
            realized: Welford::new(horizon),
            conditional: Welford::new(horizon),
            squared: Welford::new(horizon),
        }
    }

    fn push(&mut self, trace: &RegretTrace) {
        self.realized
            .push(&running_sum(trace.instant.iter().copied()));
        self.conditional
            .push(&running_sum(trace.conditional.iter().copied()));
        self.squared.push(&running_sum(trace.squared()));
    }

    fn finish(self, seed: u64) -> Summary {
        Summary {
            realized: self.realized.finish(seed),
            conditional: self.conditional.finish(seed),
            squared: self.squared.finish(seed),
        }
    }
}

impl Summary {
    pub fn from_traces(traces: &[RegretTrace], seed: u64) -> Result<Self, SimError> {
        let first = traces.first().ok_or(SimError::Empty)?;
        let horizon = first.horizon();
        if traces.iter().any(|t| t.horizon() != horizon) {
            return Err(SimError::HorizonMismatch);
        }
        let mut acc = Accumulator::new(horizon);
        for trace in traces {
            acc.push(trace);
        }
        Ok(acc.finish(seed))
    }
}

/// Estimate of E Σ_{t ≤ T} r².
pub fn squared_regret_estimate(summary: &Summary) -> f64 {
    summary.squared.final_mean()
}

/// Outcome of the finite-horizon Cauchy–Schwarz check R_T ≤ √(T Σ r²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub regret: f64,
    pub bound: f64,
    /// Four combined standard errors of the two estimates.
    pub slack: f64,
    pub holds: bool,
}

pub fn bound_check(summary: &Summary) -> BoundCheck {
    let horizon = summary.realized.horizon() as f64;
    let regret = summary.realized.final_mean();
    let squares = summary.squared.final_mean();
    let bound = (horizon * squares).sqrt();
    // delta method for the square root
    let bound_se = if squares > 0.0 {
        horizon * summary.squared.final_stderr() / (2.0 * bound)
    } else {
        0.0
    };
    let slack = 4.0 * (summary.realized.final_stderr().powi(2) + bound_se.powi(2)).sqrt();
    BoundCheck {
        regret,
        bound,
        slack,
        holds: regret <= bound + slack,
    }
}

/// Diagnostic rows of a trace recorded with diagnostics on.
pub fn diagnostics_trace(trace: &RegretTrace) -> Option<&[DiagRow]> {
    trace.diagnostics.as_deref()
}

/// Pearson correlation between the regularizer and the interval overlap over
/// rounds where the overlap is positive.
pub fn overlap_correlation(rows: &[DiagRow]) -> Result<f64, SimError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.overlap > 0.0)
        .filter_map(|r| r.regularizer.map(|nu| (nu, r.overlap)))
        .unzip();
    Ok(pearson_correlation(&xs, &ys)?)
}

/// Everything that defines a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub prior: BeliefState,
    pub theta: ThetaSource,
    pub policy: Policy,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
}

/// Generator of trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Run all trials on the current rayon pool and fold them in trial order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Summary, SimError> {
    run_experiment_with(spec, &StatsCache::new())
}

pub fn run_experiment_with(spec: &ExperimentSpec, cache: &StatsCache) -> Result<Summary, SimError> {
    if spec.horizon == 0 || spec.trials == 0 {
        return Err(SimError::InvalidSize);
    }
    spec.policy.check(&spec.prior, spec.horizon)?;
    let mut acc = Accumulator::new(spec.horizon);
    for start in (0..spec.trials).step_by(BLOCK) {
        let end = (start + BLOCK).min(spec.trials);
        let traces: Vec<RegretTrace> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = trial_rng(spec.seed, i as u64);
                run_trial(
                    &spec.prior,
                    &spec.policy,
                    spec.horizon,
                    spec.theta,
                    &mut rng,
                    cache,
                    false,
                )
            })
            .collect::<Result<_, _>>()?;
        for trace in &traces {
            acc.push(trace);
        }
    }
    Ok(acc.finish(spec.seed))
}

/// A single trial with diagnostics, using trial stream 0 of `seed`.
pub fn run_diagnostics(
    prior: &BeliefState,
    policy: &Policy,
    horizon: usize,
    theta: ThetaSource,
    seed: u64,
) -> Result<RegretTrace, SimError> {
    policy.check(prior, horizon)?;
    let mut rng = trial_rng(seed, 0);
    run_trial(
        prior,
        policy,
        horizon,
        theta,
        &mut rng,
        &StatsCache::new(),
        true,
    )
}
