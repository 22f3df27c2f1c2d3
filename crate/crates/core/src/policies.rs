//! Decision rules. Every Bayesian policy here is the same online problem
//!
//! ```text
//! x* = argmin_x [(E max(θ₁, θ₂) − x)² + ν x],   x ∈ [min Eθₖ, max Eθₖ]
//! ```
//!
//! with its own regularizer ν; the pull probability follows from
//! x = q₁ Eθ₁ + (1 − q₁) Eθ₂.

use rand::Rng;
use thiserror::Error;

use crate::benefit_table::{BenefitTable, TableError};
use crate::numerics::{find_root_increasing, normal_cdf, normal_pdf, NumericsError};
use crate::posterior::{gap_stats, Arm, BeliefState, GapStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("the one-armed policy needs arm 2 to be known")]
    ArmNotKnown,
    #[error(
        "regularizer undefined: the unknown arm's mean equals the known arm (infinite tension)"
    )]
    UndefinedRegularizer,
    #[error("regularizer undefined for equal posterior means")]
    EqualMeans,
    #[error("lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error("the two-armed policy needs a Beta x Beta state")]
    NotBetaPair,
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Distribution of the next action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDist {
    q1: f64,
}

impl ActionDist {
    pub fn new(q1: f64) -> Result<Self, PolicyError> {
        if (0.0..=1.0).contains(&q1) {
            Ok(Self { q1 })
        } else {
            Err(PolicyError::InvalidProbability(q1))
        }
    }

    /// Always pull `arm`.
    pub fn pure(arm: Arm) -> Self {
        match arm {
            Arm::One => Self { q1: 1.0 },
            Arm::Two => Self { q1: 0.0 },
        }
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn q2(&self) -> f64 {
        1.0 - self.q1
    }

    /// Expected mean reward q₁ m₁ + q₂ m₂.
    pub fn mix(&self, mean1: f64, mean2: f64) -> f64 {
        self.q1 * mean1 + (1.0 - self.q1) * mean2
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Arm {
        if self.q1 >= 1.0 || rng.random::<f64>() < self.q1 {
            Arm::One
        } else {
            Arm::Two
        }
    }
}

/// (E max − x)² + ν x over x between the two posterior means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedObjective {
    pub e_max: f64,
    pub nu: f64,
    pub mean1: f64,
    pub mean2: f64,
}

impl RegularizedObjective {
    pub fn new(e_max: f64, nu: f64, mean1: f64, mean2: f64) -> Self {
        Self {
            e_max,
            nu,
            mean1,
            mean2,
        }
    }

    /// Feasible interval (lo, hi) for the expected reward x.
    pub fn interval(&self) -> (f64, f64) {
        (self.mean1.min(self.mean2), self.mean1.max(self.mean2))
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.e_max - x).powi(2) + self.nu * x
    }
}

/// Solution of the online problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OnlineSolution {
    Action {
        x_star: f64,
        action: ActionDist,
    },
    /// Equal posterior means: every q gives the same x, so the caller's tie
    /// rule decides.
    Tie {
        x_star: f64,
    },
}

impl OnlineSolution {
    pub fn x_star(&self) -> f64 {
        match *self {
            OnlineSolution::Action { x_star, .. } | OnlineSolution::Tie { x_star } => x_star,
        }
    }
}

pub fn solve_online(obj: &RegularizedObjective) -> OnlineSolution {
    let (lo, hi) = obj.interval();
    let x_star = (obj.e_max - 0.5 * obj.nu).clamp(lo, hi);
    if lo == hi {
        return OnlineSolution::Tie { x_star };
    }
    let q1 = ((x_star - obj.mean2) / (obj.mean1 - obj.mean2)).clamp(0.0, 1.0);
    OnlineSolution::Action {
        x_star,
        action: ActionDist { q1 },
    }
}

/// Online form with the Thompson-family tie rule q₁ = P(Δ > 0).
fn online_with_ts_tie(g: &GapStats, nu: f64) -> ActionDist {
    match solve_online(&RegularizedObjective::new(g.e_max, nu, g.mean1, g.mean2)) {
        OnlineSolution::Action { action, .. } => action,
        OnlineSolution::Tie { .. } => ActionDist { q1: g.p_gt },
    }
}

/// Thompson Sampling in sampling form: draw θ′ from the posterior and pull
/// its argmax. Ties go to arm 2.
pub fn ts_sampling<R: Rng + ?Sized>(state: &BeliefState, rng: &mut R) -> Arm {
    let t1 = state.arm1().sample_mean(rng);
    let t2 = state.arm2().sample_mean(rng);
    if t1 > t2 {
        Arm::One
    } else {
        Arm::Two
    }
}

/// Thompson Sampling in online form, ν = Cov(Δ, sign Δ).
pub fn ts_online(state: &BeliefState) -> ActionDist {
    ts_online_from(&gap_stats(state))
}

pub fn ts_online_from(g: &GapStats) -> ActionDist {
    online_with_ts_tie(g, g.cov_biserial)
}

/// Thompson Sampling with its regularizer scaled by `lambda`.
pub fn ts_lambda(state: &BeliefState, lambda: f64) -> Result<ActionDist, PolicyError> {
    ts_lambda_from(&gap_stats(state), lambda)
}

pub fn ts_lambda_from(g: &GapStats, lambda: f64) -> Result<ActionDist, PolicyError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(PolicyError::InvalidLambda(lambda));
    }
    Ok(online_with_ts_tie(g, lambda * g.cov_biserial))
}

/// Pull the arm with the higher posterior mean (ν = 0).
pub fn greedy(state: &BeliefState) -> ActionDist {
    greedy_from(&gap_stats(state))
}

pub fn greedy_from(g: &GapStats) -> ActionDist {
    online_with_ts_tie(g, 0.0)
}

/// (E[(θ₁ − c)₊], E θ₁ − c) for a state whose arm 2 is known at c.
fn one_armed_moments(state: &BeliefState) -> Result<(f64, f64), PolicyError> {
    if !state.arm2().is_known() {
        return Err(PolicyError::ArmNotKnown);
    }
    let g = gap_stats(state);
    Ok((g.e_gap_plus, g.e_gap))
}

/// Squared-regret optimal policy against a known arm 2:
/// q₁ = min(E[(θ₁ − c)₊] / |E θ₁ − c|, 1), and q₁ = 1 at E θ₁ = c.
pub fn r2_one_arm(state: &BeliefState) -> Result<ActionDist, PolicyError> {
    let (plus, gap) = one_armed_moments(state)?;
    Ok(ActionDist {
        q1: one_armed_q1(plus, gap),
    })
}

pub fn one_armed_q1(plus: f64, gap: f64) -> f64 {
    // E₊ ≥ E, so the ratio is at least 1 whenever E > 0; deciding by sign
    // keeps rounding from pulling q₁ just below 1.
    if gap >= 0.0 {
        1.0
    } else {
        (plus / -gap).min(1.0)
    }
}

/// Regularizer of [`r2_one_arm`]: 4 E₊ − (E₊ + E)₊² / E.
pub fn r2_one_arm_regularizer(state: &BeliefState) -> Result<f64, PolicyError> {
    let (plus, gap) = one_armed_moments(state)?;
    one_armed_regularizer(plus, gap)
}

pub fn one_armed_regularizer(plus: f64, gap: f64) -> Result<f64, PolicyError> {
    if gap == 0.0 {
        return Err(PolicyError::UndefinedRegularizer);
    }
    Ok(4.0 * plus - (plus + gap).max(0.0).powi(2) / gap)
}

/// Benefit of pulling the unknown arm when the other is known: the minimum
/// over q of (E₊ − q E)² / q, which is (E₊ − E)² when E₊ ≥ |E| and
/// −4 E₊ E otherwise. Since E₊ ≥ E, the first case is E₊ + E ≥ 0.
pub fn one_armed_benefit(plus: f64, gap: f64) -> f64 {
    if plus + gap >= 0.0 {
        (plus - gap).powi(2)
    } else {
        -4.0 * plus * gap
    }
}

/// The root x̄ ≈ −0.276 of x Φ(x) + φ(x) + x: against a known arm at 0, the
/// one-armed policy pulls a N(μ, σ²) arm with probability 1 iff μ/σ ≥ x̄.
pub fn phase_change_root() -> f64 {
    find_root_increasing(|x| x * normal_cdf(x) + normal_pdf(x) + x, -1.0, 0.0)
        .expect("x Φ(x) + φ(x) + x changes sign on [-1, 0]")
}

/// Squared-regret optimal policy for a Beta × Beta state, driven by the
/// benefits of pulling each arm. Ties in the means put all mass on the arm
/// with the larger benefit (split evenly when the benefits also tie).
pub fn r2_two_arm(state: &BeliefState, table: &BenefitTable) -> Result<ActionDist, PolicyError> {
    let (b1, b2) = table.query(state)?;
    Ok(r2_two_arm_from(&gap_stats(state), b1, b2))
}

pub fn r2_two_arm_from(g: &GapStats, benefit1: f64, benefit2: f64) -> ActionDist {
    let gap = g.mean1 - g.mean2;
    if gap == 0.0 {
        let q1 = if benefit1 > benefit2 {
            1.0
        } else if benefit2 > benefit1 {
            0.0
        } else {
            0.5
        };
        return ActionDist { q1 };
    }
    let nu = (benefit2 - benefit1) / gap;
    match solve_online(&RegularizedObjective::new(g.e_max, nu, g.mean1, g.mean2)) {
        OnlineSolution::Action { action, .. } => action,
        OnlineSolution::Tie { .. } => unreachable!("means differ"),
    }
}

/// Shutdown criterion: 1 when the strictly better-looking arm also carries
/// strictly more information.
pub fn shutdown(state: &BeliefState) -> u8 {
    shutdown_from(&gap_stats(state))
}

pub fn shutdown_from(g: &GapStats) -> u8 {
    let one_leads = g.mean1 > g.mean2 && g.info_gain_1 > g.info_gain_2;
    let two_leads = g.mean2 > g.mean1 && g.info_gain_2 > g.info_gain_1;
    u8::from(one_leads || two_leads)
}

/// (1 − s) ν̃: Thompson Sampling's regularizer, switched off when there is no
/// tension between exploring and exploiting.
pub fn fix_regularizer(state: &BeliefState) -> f64 {
    fix_regularizer_from(&gap_stats(state))
}

pub fn fix_regularizer_from(g: &GapStats) -> f64 {
    if shutdown_from(g) == 1 {
        0.0
    } else {
        g.cov_biserial
    }
}

pub fn fix_policy(state: &BeliefState) -> ActionDist {
    fix_policy_from(&gap_stats(state))
}

pub fn fix_policy_from(g: &GapStats) -> ActionDist {
    online_with_ts_tie(g, fix_regularizer_from(g))
}

/// Arm maximizing μ̂ₖ + √(2 ln t / Nₖ); ties go to arm 1.
pub fn ucb_choice(counts: [u64; 2], means: [f64; 2], t: u64) -> Arm {
    let log_t = (t.max(1) as f64).ln();
    let index = |k: usize| means[k] + (2.0 * log_t / counts[k] as f64).sqrt();
    if index(0) >= index(1) {
        Arm::One
    } else {
        Arm::Two
    }
}

/// UCB with its own frequentist statistics. Each arm is pulled once before
/// the index is used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UcbAgent {
    counts: [u64; 2],
    sums: [f64; 2],
}

impl UcbAgent {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counts(&self) -> [u64; 2] {
        self.counts
    }

    pub fn means(&self) -> [f64; 2] {
        [0, 1].map(|k| {
            if self.counts[k] == 0 {
                0.0
            } else {
                self.sums[k] / self.counts[k] as f64
            }
        })
    }

    pub fn choose(&self) -> Arm {
        if self.counts[0] == 0 {
            Arm::One
        } else if self.counts[1] == 0 {
            Arm::Two
        } else {
            ucb_choice(self.counts, self.means(), self.counts[0] + self.counts[1])
        }
    }

    pub fn observe(&mut self, arm: Arm, reward: f64) {
        let k = usize::from(arm.number() - 1);
        self.counts[k] += 1;
        self.sums[k] += reward;
    }
}
