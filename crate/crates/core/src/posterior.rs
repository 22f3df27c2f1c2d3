//! Belief states, conjugate updates and the distributional statistics of the
//! reward gap Δ = θ₁ − θ₂ that every policy consumes.
//!
//! Gaussian (and known/point) pairs use closed forms. Beta pairs reduce every
//! two-dimensional expectation to a one-dimensional integral over [0, 1]:
//!
//! ```text
//! P(Δ > 0)        = ∫ F₂ f₁
//! E[Δ₊]           = ∫ F₂ (1 − F₁)
//! E[max(θ₁, θ₂)]  = ∫ (1 − F₁ F₂)
//! E[θ₁ 1{Δ > 0}]  = ∫ t f₁ F₂
//! E[θ₂ 1{Δ > 0}]  = ∫ t f₂ (1 − F₁)
//! ```

use std::fmt;

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, Normal};
use thiserror::Error;

use crate::numerics::{
    integrate_adaptive_unchecked, normal_cdf, normal_pdf, normal_quantile, BetaDist, NumericsError,
};

/// Absolute tolerance for the adaptive Beta-pair quadrature.
const BETA_PAIR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosteriorError {
    #[error("invalid belief parameter: {0}")]
    InvalidParameter(String),
    #[error("Bernoulli reward must be 0 or 1, got {0}")]
    NonBinaryReward(f64),
    #[error("Gaussian update needs a positive reward variance")]
    ZeroRewardVariance,
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("cannot pair a Gaussian belief with a Beta belief")]
    MixedFamilies,
    #[error("credible mass must lie in (0, 1), got {0}")]
    InvalidMass(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Arm index in a two-armed bandit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    One,
    Two,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::One => Arm::Two,
            Arm::Two => Arm::One,
        }
    }

    /// 1 or 2
    pub fn number(self) -> u8 {
        match self {
            Arm::One => 1,
            Arm::Two => 2,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Reward model of the bandit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Gaussian rewards with the given observation variance τ².
    Gaussian {
        reward_variance: f64,
    },
    Bernoulli,
}

/// Posterior over one arm's mean reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmBelief {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// A known arm. Stands for both N(c, 0) and a Beta with α + β = ∞.
    Point {
        value: f64,
    },
}

impl ArmBelief {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self, PosteriorError> {
        let b = ArmBelief::Gaussian { mean, variance };
        b.validate()?;
        Ok(b)
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self, PosteriorError> {
        let b = ArmBelief::Beta { alpha, beta };
        b.validate()?;
        Ok(b)
    }

    pub fn point(value: f64) -> Result<Self, PosteriorError> {
        let b = ArmBelief::Point { value };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), PosteriorError> {
        let ok = match *self {
            ArmBelief::Gaussian { mean, variance } => {
                mean.is_finite() && variance.is_finite() && variance >= 0.0
            }
            ArmBelief::Beta { alpha, beta } => {
                alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0
            }
            ArmBelief::Point { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(PosteriorError::InvalidParameter(format!("{self}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ArmBelief::Gaussian { mean, .. } => mean,
            ArmBelief::Beta { alpha, beta } => alpha / (alpha + beta),
            ArmBelief::Point { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ArmBelief::Gaussian { variance, .. } => variance,
            ArmBelief::Beta { alpha, beta } => {
                let n = alpha + beta;
                alpha * beta / (n * n * (n + 1.0))
            }
            ArmBelief::Point { .. } => 0.0,
        }
    }

    /// True when the arm's mean is known exactly.
    pub fn is_known(&self) -> bool {
        match *self {
            ArmBelief::Point { .. } => true,
            ArmBelief::Gaussian { variance, .. } => variance == 0.0,
            ArmBelief::Beta { .. } => false,
        }
    }

    /// Draw a mean reward θ from this belief.
    pub fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArmBelief::Gaussian { mean, variance } => {
                if variance == 0.0 {
                    mean
                } else {
                    Normal::new(mean, variance.sqrt())
                        .expect("validated belief")
                        .sample(rng)
                }
            }
            ArmBelief::Beta { alpha, beta } => BetaSampler::new(alpha, beta)
                .expect("validated belief")
                .sample(rng),
            ArmBelief::Point { value } => value,
        }
    }
}

impl fmt::Display for ArmBelief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ArmBelief::Gaussian { mean, variance } => write!(f, "N({mean},{variance})"),
            ArmBelief::Beta { alpha, beta } => write!(f, "Beta({alpha},{beta})"),
            ArmBelief::Point { value } => write!(f, "Point({value})"),
        }
    }
}

/// Conjugate posterior update of one arm after observing `reward`.
///
/// Known arms are returned unchanged: pulling them carries no information.
pub fn update(
    belief: &ArmBelief,
    reward: f64,
    reward_variance: f64,
) -> Result<ArmBelief, PosteriorError> {
    match *belief {
        ArmBelief::Point { .. } => Ok(*belief),
        ArmBelief::Gaussian { variance, .. } if variance == 0.0 => Ok(*belief),
        ArmBelief::Gaussian { mean, variance } => {
            if !reward.is_finite() {
                return Err(PosteriorError::NonFiniteReward(reward));
            }
            if !(reward_variance > 0.0) {
                return Err(PosteriorError::ZeroRewardVariance);
            }
            let precision = 1.0 / variance + 1.0 / reward_variance;
            let mean = (mean / variance + reward / reward_variance) / precision;
            Ok(ArmBelief::Gaussian {
                mean,
                variance: 1.0 / precision,
            })
        }
        ArmBelief::Beta { alpha, beta } => {
            if reward == 1.0 {
                Ok(ArmBelief::Beta {
                    alpha: alpha + 1.0,
                    beta,
                })
            } else if reward == 0.0 {
                Ok(ArmBelief::Beta {
                    alpha,
                    beta: beta + 1.0,
                })
            } else {
                Err(PosteriorError::NonBinaryReward(reward))
            }
        }
    }
}

/// Product posterior over the two arms: the state of the bandit MDP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefState {
    arm1: ArmBelief,
    arm2: ArmBelief,
    reward_variance: f64,
}

impl BeliefState {
    /// Both arms must come from the same family unless one of them is a
    /// [`ArmBelief::Point`]. `reward_variance` (τ²) is ignored for Beta pairs.
    pub fn new(
        arm1: ArmBelief,
        arm2: ArmBelief,
        reward_variance: f64,
    ) -> Result<Self, PosteriorError> {
        arm1.validate()?;
        arm2.validate()?;
        if !(reward_variance.is_finite() && reward_variance >= 0.0) {
            return Err(PosteriorError::InvalidParameter(format!(
                "reward variance {reward_variance}"
            )));
        }
        let mixed = matches!(
            (arm1, arm2),
            (ArmBelief::Gaussian { .. }, ArmBelief::Beta { .. })
                | (ArmBelief::Beta { .. }, ArmBelief::Gaussian { .. })
        );
        if mixed {
            return Err(PosteriorError::MixedFamilies);
        }
        let state = Self {
            arm1,
            arm2,
            reward_variance,
        };
        if state.family() == Family::Bernoulli {
            for arm in [arm1, arm2] {
                if let ArmBelief::Point { value } = arm {
                    if !(0.0..=1.0).contains(&value) {
                        return Err(PosteriorError::InvalidParameter(format!(
                            "known Bernoulli arm mean {value} outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(state)
    }

    /// Convenience constructor for a Beta × Beta state.
    pub fn beta_pair(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<Self, PosteriorError> {
        Self::new(ArmBelief::beta(a1, b1)?, ArmBelief::beta(a2, b2)?, 0.0)
    }

    pub fn arm1(&self) -> &ArmBelief {
        &self.arm1
    }

    pub fn arm2(&self) -> &ArmBelief {
        &self.arm2
    }

    pub fn arm(&self, arm: Arm) -> &ArmBelief {
        match arm {
            Arm::One => &self.arm1,
            Arm::Two => &self.arm2,
        }
    }

    pub fn reward_variance(&self) -> f64 {
        self.reward_variance
    }

    /// Bernoulli when either arm is a Beta belief, Gaussian otherwise.
    pub fn family(&self) -> Family {
        let beta = |b: &ArmBelief| matches!(b, ArmBelief::Beta { .. });
        if beta(&self.arm1) || beta(&self.arm2) {
            Family::Bernoulli
        } else {
            Family::Gaussian {
                reward_variance: self.reward_variance,
            }
        }
    }

    pub fn means(&self) -> (f64, f64) {
        (self.arm1.mean(), self.arm2.mean())
    }

    /// The posterior after observing `reward` from `arm`.
    pub fn observe(&self, arm: Arm, reward: f64) -> Result<Self, PosteriorError> {
        let mut next = *self;
        match arm {
            Arm::One => next.arm1 = update(&self.arm1, reward, self.reward_variance)?,
            Arm::Two => next.arm2 = update(&self.arm2, reward, self.reward_variance)?,
        }
        Ok(next)
    }

    /// Relabel the arms.
    pub fn swapped(&self) -> Self {
        Self {
            arm1: self.arm2,
            arm2: self.arm1,
            reward_variance: self.reward_variance,
        }
    }

    /// Both arms' beliefs translated by `shift`. Only defined for Gaussian and
    /// known arms.
    pub fn shifted(&self, shift: f64) -> Result<Self, PosteriorError> {
        let move_arm = |b: ArmBelief| match b {
            ArmBelief::Gaussian { mean, variance } => Ok(ArmBelief::Gaussian {
                mean: mean + shift,
                variance,
            }),
            ArmBelief::Point { value } => Ok(ArmBelief::Point {
                value: value + shift,
            }),
            ArmBelief::Beta { .. } => Err(PosteriorError::InvalidParameter(
                "Beta beliefs cannot be translated".into(),
            )),
        };
        Self::new(
            move_arm(self.arm1)?,
            move_arm(self.arm2)?,
            self.reward_variance,
        )
    }
}

impl fmt::Display for BeliefState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.arm1, self.arm2)
    }
}

/// Statistics of Δ = θ₁ − θ₂ and Λ = sign(Δ) under a belief state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStats {
    /// P(Δ > 0)
    pub p_gt: f64,
    /// P(Δ ≤ 0), kept separately so that a tiny tail keeps its precision.
    pub p_le: f64,
    /// E Δ
    pub e_gap: f64,
    /// E Δ₊
    pub e_gap_plus: f64,
    /// E max(θ₁, θ₂)
    pub e_max: f64,
    /// Cov(Δ, sign Δ): Thompson Sampling's regularizer.
    pub cov_biserial: f64,
    /// Var E[θ₁ | Λ]
    pub info_gain_1: f64,
    /// Var E[θ₂ | Λ]
    pub info_gain_2: f64,
    pub mean1: f64,
    pub mean2: f64,
}

impl GapStats {
    /// Var Λ = 4 P(Δ>0) P(Δ≤0)
    pub fn var_sign(&self) -> f64 {
        4.0 * self.p_gt * self.p_le
    }

    pub fn info_gain(&self, arm: Arm) -> f64 {
        match arm {
            Arm::One => self.info_gain_1,
            Arm::Two => self.info_gain_2,
        }
    }

    /// Statistics of the relabelled state, valid whenever P(Δ = 0) = 0.
    fn swapped(&self) -> Self {
        Self {
            p_gt: self.p_le,
            p_le: self.p_gt,
            e_gap: -self.e_gap,
            e_gap_plus: self.e_gap_plus - self.e_gap,
            e_max: self.e_max,
            cov_biserial: self.cov_biserial,
            info_gain_1: self.info_gain_2,
            info_gain_2: self.info_gain_1,
            mean1: self.mean2,
            mean2: self.mean1,
        }
    }

    /// Assemble from tail moments. Every term of the covariance and the
    /// information gains is a product of tail quantities, so nothing cancels
    /// when one tail is tiny. Degenerate sign variance zeroes all three.
    fn from_tails(tails: Tails, means: [f64; 2]) -> Self {
        let tails = tails.reconciled(means);
        let e_max = tails.e_max(means);
        let Tails {
            p_gt,
            p_le,
            plus,
            minus,
            upper,
            lower,
        } = tails;
        let [mean1, mean2] = means;
        let (p_gt, p_le) = (p_gt.clamp(0.0, 1.0), p_le.clamp(0.0, 1.0));
        let e_gap = mean1 - mean2;
        let spread = p_gt * p_le;
        let (cov_biserial, info_gain_1, info_gain_2) = if spread > 0.0 {
            // E[θₖ|Λ=1] − E[θₖ|Λ=−1] = (P≤ E[θₖ 1{Δ>0}] − P> E[θₖ 1{Δ≤0}]) / (P> P≤)
            let info = |k: usize| (p_le * upper[k] - p_gt * lower[k]).powi(2) / spread;
            (
                2.0 * (p_le * plus.max(0.0) + p_gt * minus.max(0.0)),
                info(0),
                info(1),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        Self {
            p_gt,
            p_le,
            e_gap,
            e_gap_plus: plus.max(e_gap).max(0.0),
            e_max,
            cov_biserial,
            info_gain_1,
            info_gain_2,
            mean1,
            mean2,
        }
    }
}

/// Tail moments of Δ: probabilities, E Δ₊ and E Δ₋ (both nonnegative), and
/// E[θₖ 1{Δ>0}], E[θₖ 1{Δ≤0}].
struct Tails {
    p_gt: f64,
    p_le: f64,
    plus: f64,
    minus: f64,
    upper: [f64; 2],
    lower: [f64; 2],
}

impl Tails {
    /// Keep the lighter tail, which carries full relative precision, and
    /// rebuild the heavier one from P> + P≤ = 1, E Δ₊ − E Δ₋ = E Δ and
    /// E[θₖ 1{Δ>0}] + E[θₖ 1{Δ≤0}] = E θₖ.
    fn reconciled(self, means: [f64; 2]) -> Self {
        let gap = means[0] - means[1];
        if self.p_le <= self.p_gt {
            Self {
                p_gt: 1.0 - self.p_le,
                plus: self.minus + gap,
                upper: [means[0] - self.lower[0], means[1] - self.lower[1]],
                ..self
            }
        } else {
            Self {
                p_le: 1.0 - self.p_gt,
                minus: self.plus - gap,
                lower: [means[0] - self.upper[0], means[1] - self.upper[1]],
                ..self
            }
        }
    }

    /// E max(θ₁, θ₂) from the lighter tail.
    fn e_max(&self, [mean1, mean2]: [f64; 2]) -> f64 {
        let e_max = if self.p_le <= self.p_gt {
            mean1 + self.minus.max(0.0)
        } else {
            mean2 + self.plus.max(0.0)
        };
        e_max.max(mean1).max(mean2)
    }
}

/// Statistics of the gap between the two arms.
pub fn gap_stats(state: &BeliefState) -> GapStats {
    use ArmBelief::*;
    match (*state.arm1(), *state.arm2()) {
        (
            Beta {
                alpha: a1,
                beta: b1,
            },
            Beta {
                alpha: a2,
                beta: b2,
            },
        ) => beta_pair_stats(a1, b1, a2, b2),
        (Beta { alpha, beta }, Point { value }) => beta_vs_known(alpha, beta, value),
        (Point { value }, Beta { alpha, beta }) => beta_vs_known(alpha, beta, value).swapped(),
        (a, b) => gaussian_stats(a.mean(), a.variance(), b.mean(), b.variance()),
    }
}

fn known_pair_stats(mean1: f64, mean2: f64) -> GapStats {
    let gap = mean1 - mean2;
    GapStats {
        p_gt: if gap > 0.0 { 1.0 } else { 0.0 },
        p_le: if gap > 0.0 { 0.0 } else { 1.0 },
        e_gap: gap,
        e_gap_plus: gap.max(0.0),
        e_max: mean1.max(mean2),
        cov_biserial: 0.0,
        info_gain_1: 0.0,
        info_gain_2: 0.0,
        mean1,
        mean2,
    }
}

fn gaussian_stats(mean1: f64, var1: f64, mean2: f64, var2: f64) -> GapStats {
    let s2 = var1 + var2;
    if s2 == 0.0 {
        return known_pair_stats(mean1, mean2);
    }
    let s = s2.sqrt();
    let m = mean1 - mean2;
    let z = m / s;
    let p_gt = normal_cdf(z);
    let p_le = normal_cdf(-z);
    let density = normal_pdf(z);
    let e_gap_plus = (m * p_gt + s * density).max(m).max(0.0);
    let spread = p_gt * p_le;
    // E[θₖ | Λ] moves along the regression of θₖ on Δ, slope ±σₖ²/s².
    let (info_gain_1, info_gain_2) = if spread > 0.0 {
        let scale = density * density / (s2 * spread);
        (var1 * var1 * scale, var2 * var2 * scale)
    } else {
        (0.0, 0.0)
    };
    GapStats {
        p_gt,
        p_le,
        e_gap: m,
        e_gap_plus,
        e_max: (mean2 + e_gap_plus).max(mean1).max(mean2),
        cov_biserial: if spread > 0.0 { 2.0 * s * density } else { 0.0 },
        info_gain_1,
        info_gain_2,
        mean1,
        mean2,
    }
}

/// Beta(α, β) arm against a known arm at `c`, via incomplete beta identities:
/// E[θ 1{θ > c}] = E θ · (1 − I_c(α+1, β)).
fn beta_vs_known(alpha: f64, beta: f64, c: f64) -> GapStats {
    let mean1 = alpha / (alpha + beta);
    let tails = if c <= 0.0 {
        Tails {
            p_gt: 1.0,
            p_le: 0.0,
            plus: mean1 - c,
            minus: 0.0,
            upper: [mean1, c],
            lower: [0.0; 2],
        }
    } else if c >= 1.0 {
        Tails {
            p_gt: 0.0,
            p_le: 1.0,
            plus: 0.0,
            minus: c - mean1,
            upper: [0.0; 2],
            lower: [mean1, c],
        }
    } else {
        let (below, above) = BetaDist::new(alpha, beta)
            .expect("validated belief")
            .cdf_sf(c);
        let (s_below, s_above) = BetaDist::new(alpha + 1.0, beta)
            .expect("validated belief")
            .cdf_sf(c);
        let upper = [mean1 * s_above, c * above];
        let lower = [mean1 * s_below, c * below];
        Tails {
            p_gt: above,
            p_le: below,
            plus: upper[0] - upper[1],
            minus: lower[1] - lower[0],
            upper,
            lower,
        }
    };
    GapStats::from_tails(tails, [mean1, c])
}

/// Region outside which a Beta posterior's CDF is 0 or 1 and its density
/// vanishes, to well below the quadrature tolerance.
struct Support {
    dist: BetaDist,
    lo: f64,
    hi: f64,
}

impl Support {
    const WIDTH: f64 = 12.0;
    const NEGLIGIBLE: f64 = 1e-18;

    fn new(dist: BetaDist) -> Self {
        let (mut lo, mut hi) = (0.0, 1.0);
        // With both shapes at least 1 the density is unimodal, so a tiny
        // tail mass and density at the cut bound everything beyond it.
        if dist.alpha() >= 1.0 && dist.beta() >= 1.0 {
            let (m, sd) = (dist.mean(), dist.variance().sqrt());
            let left = m - Self::WIDTH * sd;
            if left > 0.0 && dist.cdf(left) < Self::NEGLIGIBLE && dist.pdf(left) < Self::NEGLIGIBLE
            {
                lo = left;
            }
            let right = m + Self::WIDTH * sd;
            if right < 1.0
                && dist.cdf_sf(right).1 < Self::NEGLIGIBLE
                && dist.pdf(right) < Self::NEGLIGIBLE
            {
                hi = right;
            }
        }
        Self { dist, lo, hi }
    }

    /// (CDF, survival, density) at `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= self.lo {
            (0.0, 1.0, 0.0)
        } else if t >= self.hi {
            (1.0, 0.0, 0.0)
        } else {
            let (cdf, sf) = self.dist.cdf_sf(t);
            (cdf, sf, self.dist.pdf(t))
        }
    }
}

fn beta_pair_stats(a1: f64, b1: f64, a2: f64, b2: f64) -> GapStats {
    let d1 = BetaDist::new(a1, b1).expect("validated belief");
    let d2 = BetaDist::new(a2, b2).expect("validated belief");
    let (s1, s2) = (Support::new(d1), Support::new(d2));
    let integrand = |t: f64| {
        // Nodes that round onto an endpoint carry no mass but may hit an
        // unbounded density there.
        if t <= 0.0 || t >= 1.0 {
            return [0.0; 8];
        }
        let ((lo1, hi1, f1), (lo2, hi2, f2)) = (s1.eval(t), s2.eval(t));
        [
            lo2 * f1,
            lo1 * f2,
            lo2 * hi1,
            lo1 * hi2,
            t * f1 * lo2,
            t * f2 * hi1,
            t * f1 * hi2,
            t * f2 * lo1,
        ]
    };
    // Seed the partition around each posterior's bulk so that narrow
    // posteriors are never stepped over.
    let mut breaks = vec![0.0, 1.0];
    for d in [&s1.dist, &s2.dist] {
        let (m, sd) = (d.mean(), d.variance().sqrt());
        for k in [0.0, 3.0, 10.0] {
            breaks.push((m - k * sd).clamp(0.0, 1.0));
            breaks.push((m + k * sd).clamp(0.0, 1.0));
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let singular = a1.min(b1).min(a2).min(b2) < 1.0;
    let [p_gt, p_le, plus, minus, hi1, hi2, lo1, lo2] = if singular {
        // t = 3u² − 2u³ flattens the unbounded endpoint densities.
        let breaks: Vec<f64> = breaks
            .iter()
            .map(|&t| 0.5 - ((1.0 - 2.0 * t).asin() / 3.0).sin())
            .collect();
        let smoothed = |u: f64| {
            let t = u * u * (3.0 - 2.0 * u);
            integrand(t).map(|v| v * 6.0 * u * (1.0 - u))
        };
        integrate_adaptive_unchecked(smoothed, &breaks, BETA_PAIR_TOL).0
    } else {
        integrate_adaptive_unchecked(integrand, &breaks, BETA_PAIR_TOL).0
    };
    GapStats::from_tails(
        Tails {
            p_gt,
            p_le,
            plus,
            minus,
            upper: [hi1, hi2],
            lower: [lo1, lo2],
        },
        [s1.dist.mean(), s2.dist.mean()],
    )
}

/// Equal-tail credible interval holding `mass` of the posterior.
///
/// Known arms give the zero-width interval at their value.
pub fn credible_interval(belief: &ArmBelief, mass: f64) -> Result<(f64, f64), PosteriorError> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(PosteriorError::InvalidMass(mass));
    }
    let lo_p = 0.5 * (1.0 - mass);
    let hi_p = 0.5 * (1.0 + mass);
    match *belief {
        ArmBelief::Point { value } => Ok((value, value)),
        ArmBelief::Gaussian { mean, variance } => {
            let sd = variance.sqrt();
            Ok((
                mean + sd * normal_quantile(lo_p)?,
                mean + sd * normal_quantile(hi_p)?,
            ))
        }
        ArmBelief::Beta { alpha, beta } => {
            let dist = BetaDist::new(alpha, beta)?;
            Ok((dist.quantile(lo_p)?, dist.quantile(hi_p)?))
        }
    }
}

/// Length of the intersection of two intervals.
pub fn interval_overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// A reward for `arm` drawn from the posterior predictive distribution.
pub fn posterior_predictive_draw<R: Rng + ?Sized>(
    state: &BeliefState,
    arm: Arm,
    rng: &mut R,
) -> f64 {
    let belief = state.arm(arm);
    match state.family() {
        Family::Bernoulli => {
            let p = belief.mean().clamp(0.0, 1.0);
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
        Family::Gaussian { reward_variance } => {
            let sd = (belief.variance() + reward_variance).sqrt();
            if sd == 0.0 {
                belief.mean()
            } else {
                Normal::new(belief.mean(), sd)
                    .expect("finite parameters")
                    .sample(rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gaussian_update_matches_precision_form() {
        let b = ArmBelief::gaussian(0.0, 1.0).unwrap();
        let post = update(&b, 1.0, 1.0).unwrap();
        assert_eq!(
            post,
            ArmBelief::Gaussian {
                mean: 0.5,
                variance: 0.5
            }
        );
    }

    #[test]
    fn beta_update_counts() {
        let b = ArmBelief::beta(1.0, 1.0).unwrap();
        assert_eq!(
            update(&b, 1.0, 0.0).unwrap(),
            ArmBelief::Beta {
                alpha: 2.0,
                beta: 1.0
            }
        );
        assert_eq!(
            update(&b, 0.0, 0.0).unwrap(),
            ArmBelief::Beta {
                alpha: 1.0,
                beta: 2.0
            }
        );
        assert_eq!(
            update(&b, 0.5, 0.0),
            Err(PosteriorError::NonBinaryReward(0.5))
        );
    }

    #[test]
    fn known_arm_is_unchanged() {
        let b = ArmBelief::point(0.0).unwrap();
        assert_eq!(update(&b, 3.7, 1.0).unwrap(), b);
        assert_eq!(update(&b, 3.7, 0.0).unwrap(), b);
    }

    #[test]
    fn gaussian_update_rejects_zero_noise() {
        let b = ArmBelief::gaussian(0.0, 1.0).unwrap();
        assert_eq!(
            update(&b, 1.0, 0.0),
            Err(PosteriorError::ZeroRewardVariance)
        );
    }

    #[test]
    fn invalid_beliefs_and_states() {
        assert!(ArmBelief::beta(0.0, 1.0).is_err());
        assert!(ArmBelief::gaussian(0.0, -1.0).is_err());
        assert!(ArmBelief::point(f64::NAN).is_err());
        let g = ArmBelief::gaussian(0.0, 1.0).unwrap();
        let b = ArmBelief::beta(1.0, 1.0).unwrap();
        assert_eq!(
            BeliefState::new(g, b, 1.0),
            Err(PosteriorError::MixedFamilies)
        );
        let p = ArmBelief::point(2.0).unwrap();
        assert!(BeliefState::new(b, p, 0.0).is_err());
        assert!(BeliefState::new(g, p, 1.0).is_ok());
    }

    #[test]
    fn gaussian_vs_known_zero() {
        let s = BeliefState::new(
            ArmBelief::gaussian(0.0, 1.0).unwrap(),
            ArmBelief::point(0.0).unwrap(),
            1.0,
        )
        .unwrap();
        let g = gap_stats(&s);
        assert!(close(g.p_gt, 0.5, 1e-15));
        assert!(close(g.e_gap_plus, 0.398_942_280_4, 1e-10));
        assert!(close(
            g.cov_biserial,
            (2.0 / std::f64::consts::PI).sqrt(),
            1e-12
        ));
        assert!(g.info_gain_2 == 0.0);
    }

    #[test]
    fn two_uniforms() {
        let g = gap_stats(&BeliefState::beta_pair(1.0, 1.0, 1.0, 1.0).unwrap());
        assert!(close(g.e_max, 2.0 / 3.0, 1e-12));
        assert!(close(g.p_gt, 0.5, 1e-12));
        assert_eq!(g.e_gap, 0.0);
        assert!(close(g.e_gap_plus, 1.0 / 6.0, 1e-12));
        assert!(close(g.cov_biserial, 1.0 / 3.0, 1e-12));
    }

    #[test]
    fn known_pair_has_no_uncertainty() {
        let s = BeliefState::new(
            ArmBelief::point(1.0).unwrap(),
            ArmBelief::point(0.0).unwrap(),
            1.0,
        )
        .unwrap();
        let g = gap_stats(&s);
        assert_eq!(g.p_gt, 1.0);
        assert_eq!(g.cov_biserial, 0.0);
        assert_eq!((g.info_gain_1, g.info_gain_2), (0.0, 0.0));
        assert_eq!(g.e_max, 1.0);
    }

    #[test]
    fn beta_against_known_matches_beta_pair_limit() {
        // Beta(600000, 400000) is numerically a point at 0.6.
        let exact = gap_stats(
            &BeliefState::new(
                ArmBelief::beta(3.0, 2.0).unwrap(),
                ArmBelief::point(0.6).unwrap(),
                0.0,
            )
            .unwrap(),
        );
        let near = gap_stats(&BeliefState::beta_pair(3.0, 2.0, 600_000.0, 400_000.0).unwrap());
        assert!(close(exact.p_gt, near.p_gt, 2e-3));
        assert!(close(exact.e_max, near.e_max, 1e-3));
        let flipped = gap_stats(
            &BeliefState::new(
                ArmBelief::point(0.6).unwrap(),
                ArmBelief::beta(3.0, 2.0).unwrap(),
                0.0,
            )
            .unwrap(),
        );
        assert!(close(flipped.p_gt, 1.0 - exact.p_gt, 1e-15));
        assert!(close(flipped.e_max, exact.e_max, 1e-15));
        assert!(close(flipped.info_gain_2, exact.info_gain_1, 1e-15));
    }

    #[test]
    fn credible_interval_examples() {
        let (lo, hi) = credible_interval(&ArmBelief::beta(1.0, 1.0).unwrap(), 0.8).unwrap();
        assert!(close(lo, 0.1, 1e-12) && close(hi, 0.9, 1e-12));
        let (lo, hi) = credible_interval(&ArmBelief::gaussian(0.0, 1.0).unwrap(), 0.8).unwrap();
        assert!(close(lo, -1.2816, 1e-4) && close(hi, 1.2816, 1e-4));
        assert_eq!(
            credible_interval(&ArmBelief::point(0.3).unwrap(), 0.8).unwrap(),
            (0.3, 0.3)
        );
        assert!(credible_interval(&ArmBelief::point(0.3).unwrap(), 1.0).is_err());
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(interval_overlap((0.0, 1.0), (0.5, 2.0)), 0.5);
        assert_eq!(interval_overlap((0.0, 1.0), (2.0, 3.0)), 0.0);
        assert_eq!(interval_overlap((0.0, 1.0), (0.0, 1.0)), 1.0);
    }

    #[test]
    fn predictive_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let uniform = BeliefState::beta_pair(1.0, 1.0, 2.0, 1.0).unwrap();
        let n = 1_000_000;
        let hits: f64 = (0..n)
            .map(|_| posterior_predictive_draw(&uniform, Arm::One, &mut rng))
            .sum();
        assert!(close(hits / n as f64, 0.5, 0.002));
        let n = 200_000;
        let hits: f64 = (0..n)
            .map(|_| posterior_predictive_draw(&uniform, Arm::Two, &mut rng))
            .sum();
        assert!(close(hits / n as f64, 2.0 / 3.0, 0.005));

        let known = BeliefState::new(
            ArmBelief::point(0.7).unwrap(),
            ArmBelief::point(0.0).unwrap(),
            1.0,
        )
        .unwrap();
        let draws: Vec<f64> = (0..n)
            .map(|_| posterior_predictive_draw(&known, Arm::One, &mut rng))
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(close(mean, 0.7, 0.01) && close(var, 1.0, 0.02));
    }
}
