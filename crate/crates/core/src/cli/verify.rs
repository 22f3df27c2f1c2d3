//! Quick invariant suite behind the `verify` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::benefit_table::BenefitTable;
use crate::numerics::normal_cdf;
use crate::policies::{
    fix_policy, phase_change_root, r2_one_arm, ts_online, ActionDist, PolicyError,
};
use crate::posterior::{gap_stats, update, ArmBelief, BeliefState};
use crate::sim::{
    run_experiment, run_trial, trial_rng, ExperimentSpec, Policy, StatsCache, ThetaSource,
};

/// Outcome of one invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

fn random_gaussian_state(rng: &mut ChaCha8Rng) -> BeliefState {
    let arm = |rng: &mut ChaCha8Rng| {
        ArmBelief::gaussian(rng.random_range(-2.0..2.0), rng.random_range(0.01..4.0))
            .expect("valid")
    };
    BeliefState::new(arm(rng), arm(rng), 1.0).expect("valid")
}

fn random_beta_state(rng: &mut ChaCha8Rng) -> BeliefState {
    let mut p = || rng.random_range(0.5..40.0);
    BeliefState::beta_pair(p(), p(), p(), p()).expect("valid")
}

fn ts_matches_sampling(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let s = random_gaussian_state(&mut rng);
        let (a, b) = (*s.arm1(), *s.arm2());
        let spread = (a.variance() + b.variance()).sqrt();
        let sampling = normal_cdf((a.mean() - b.mean()) / spread);
        worst = worst.max((ts_online(&s).q1() - sampling).abs());
    }
    let mut worst_beta = 0.0_f64;
    for _ in 0..50 {
        let s = random_beta_state(&mut rng);
        worst_beta = worst_beta.max((ts_online(&s).q1() - gap_stats(&s).p_gt).abs());
    }
    Check::new(
        "online-form Thompson Sampling equals its sampling probability",
        worst <= 1e-9 && worst_beta <= 1e-6,
        format!(
            "max error {worst:.2e} on 1000 Gaussian states, {worst_beta:.2e} on 50 Beta states"
        ),
    )
}

fn shift_invariance(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let s = random_gaussian_state(&mut rng);
        let c = rng.random_range(-5.0..5.0);
        let moved = s.shifted(c).expect("finite shift");
        worst = worst.max((ts_online(&s).q1() - ts_online(&moved).q1()).abs());
        worst = worst.max((fix_policy(&s).q1() - fix_policy(&moved).q1()).abs());
        let known =
            BeliefState::new(*s.arm1(), ArmBelief::point(0.0).expect("valid"), 1.0).expect("valid");
        let q = |st: &BeliefState| r2_one_arm(st).map(|d| d.q1());
        if let (Ok(a), Ok(b)) = (q(&known), q(&known.shifted(c).expect("finite shift"))) {
            worst = worst.max((a - b).abs());
        }
    }
    Check::new(
        "policies are invariant to a common shift of both arms",
        worst <= 1e-9,
        format!("max q1 change {worst:.2e}"),
    )
}

fn phase_change() -> Check {
    let root = phase_change_root();
    let mut ok = (root + 0.276).abs() <= 1e-3;
    for sigma in [0.1, 1.0, 7.0] {
        let at = |ratio: f64| -> Result<ActionDist, PolicyError> {
            let arm = ArmBelief::gaussian(ratio * sigma, sigma * sigma).expect("valid");
            r2_one_arm(
                &BeliefState::new(arm, ArmBelief::point(0.0).expect("valid"), 1.0).expect("valid"),
            )
        };
        ok &= at(root + 1e-6).is_ok_and(|d| d.q1() == 1.0);
        ok &= at(root - 1e-6).is_ok_and(|d| d.q1() < 1.0);
    }
    Check::new(
        "one-armed optimal policy changes phase at mean/sd = root",
        ok,
        format!("root {root:.6}"),
    )
}

/// Interior consistency, nonnegativity and symmetry of a small table, and a
/// byte-exact save/load round trip.
fn table_invariants() -> Check {
    let table = match BenefitTable::build([1.0, 1.0, 1.0, 1.0], 12) {
        Ok(t) => t,
        Err(e) => return Check::new("benefit table invariants", false, e.to_string()),
    };
    let [l1, l2] = table.limits();
    let mut worst = 0.0_f64;
    let mut negative = 0usize;
    for (key, (b1, b2)) in table.iter() {
        if b1 < 0.0 || b2 < 0.0 {
            negative += 1;
        }
        let swapped = table
            .get([key[2], key[3], key[0], key[1]])
            .expect("symmetric lattice");
        worst = worst
            .max((b1 - swapped.1).abs())
            .max((b2 - swapped.0).abs());
        if key[0] + key[1] == l1 || key[2] + key[3] == l2 {
            continue;
        }
        let p = |i: usize| 1.0 + f64::from(key[i]);
        let g = gap_stats(&BeliefState::beta_pair(p(0), p(1), p(2), p(3)).expect("valid"));
        let entry = |k: [u16; 4]| table.get(k).expect("child on lattice");
        let [s1, f1, s2, f2] = key;
        let d = (g.mean2 * entry([s1, f1, s2 + 1, f2]).0
            + (1.0 - g.mean2) * entry([s1, f1, s2, f2 + 1]).0)
            - (g.mean1 * entry([s1 + 1, f1, s2, f2]).1
                + (1.0 - g.mean1) * entry([s1, f1 + 1, s2, f2]).1);
        // benefit_1 from its own min-form, arm 2 in the "pulled" role
        let h = |q: f64| (g.e_max - q * g.mean2 - (1.0 - q) * g.mean1).powi(2) + q * d;
        let gap = g.mean2 - g.mean1;
        let q_star = if gap == 0.0 {
            if d < 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            ((g.e_max - g.mean1) / gap - d / (2.0 * gap * gap)).clamp(0.0, 1.0)
        };
        worst = worst.max((b1 - h(q_star)).abs());
    }
    let bytes = table.to_bytes();
    let round_trip = BenefitTable::from_bytes(&bytes)
        .map(|t| t.to_bytes() == bytes)
        .unwrap_or(false);
    Check::new(
        "benefit table is consistent, symmetric and nonnegative",
        worst <= 1e-9 && negative == 0 && round_trip,
        format!("max residual {worst:.2e}, {negative} negative entries, round trip {round_trip}"),
    )
}

/// Same seed, different thread counts: identical summaries.
fn determinism(seed: u64) -> Check {
    let spec = ExperimentSpec {
        prior: BeliefState::beta_pair(1.0, 1.0, 1.0, 1.0).expect("valid"),
        theta: ThetaSource::Prior,
        policy: Policy::Fix,
        horizon: 30,
        trials: 600,
        seed,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())
            .and_then(|pool| {
                pool.install(|| run_experiment(&spec))
                    .map_err(|e| e.to_string())
            })
    };
    let (one, four) = (run(1), run(4));
    Check::new(
        "experiments are reproducible across thread counts",
        one.is_ok() && one == four,
        match &one {
            Ok(s) => format!("final regret {:.6}", s.realized.final_mean()),
            Err(e) => e.clone(),
        },
    )
}

/// Replaying the recorded rewards through the conjugate update reproduces
/// every recorded decision, and realized regret tracks conditional regret.
fn tracking_and_tower(seed: u64) -> Check {
    let prior = BeliefState::beta_pair(2.0, 3.0, 1.0, 1.0).expect("valid");
    let cache = StatsCache::new();
    let mut mismatches = 0usize;
    let (mut realized, mut conditional) = (Vec::new(), Vec::new());
    for i in 0..400 {
        let mut rng = trial_rng(seed, i);
        let trace = match run_trial(
            &prior,
            &Policy::Fix,
            25,
            ThetaSource::Prior,
            &mut rng,
            &cache,
            false,
        ) {
            Ok(t) => t,
            Err(e) => return Check::new("posterior tracking", false, e.to_string()),
        };
        let mut state = prior;
        for t in 0..trace.horizon() {
            if (fix_policy(&state).q1() - trace.q1[t]).abs() > 1e-12 {
                mismatches += 1;
            }
            let arm = trace.arms[t];
            let next = update(state.arm(arm), trace.rewards[t], state.reward_variance())
                .expect("valid update");
            state = match arm {
                crate::posterior::Arm::One => BeliefState::new(next, *state.arm2(), 0.0),
                crate::posterior::Arm::Two => BeliefState::new(*state.arm1(), next, 0.0),
            }
            .expect("valid state");
        }
        realized.push(trace.instant.iter().sum::<f64>());
        conditional.push(trace.conditional.iter().sum::<f64>());
    }
    let diffs: Vec<f64> = realized
        .iter()
        .zip(&conditional)
        .map(|(a, b)| a - b)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let se = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    Check::new(
        "simulator tracks the posterior and regret matches its conditional form",
        mismatches == 0 && mean.abs() <= 4.0 * se,
        format!("{mismatches} decision mismatches, realized - conditional = {mean:.4} ± {se:.4}"),
    )
}

/// Run every check.
pub fn run_checks(seed: u64) -> Vec<Check> {
    vec![
        ts_matches_sampling(seed),
        shift_invariance(seed),
        phase_change(),
        table_invariants(),
        determinism(seed),
        tracking_and_tower(seed),
    ]
}
