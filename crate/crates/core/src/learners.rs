//! Single-parameter sigmoid learners for two-action games.
//!
//! A learner cooperates with probability `σ(θ)` and climbs the gradient of
//! its expected total reward, either computed exactly from the payoff table
//! or estimated from the sampled action with a likelihood-ratio rule.

use crate::error::{Error, Result};
use crate::games::{Action, GamePayoffs, MatrixGame};
use crate::planner::{PlannerPolicy, Trajectory};

/// Logistic function `exp(θ) / (1 + exp(θ))`.
pub fn coop_prob(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`coop_prob`].
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `∇_θ log π(a)` for the sigmoid policy: `1 - p` for C and `-p` for D.
pub fn log_prob_grad(p: f64, action: Action) -> f64 {
    match action {
        Action::Cooperate => 1.0 - p,
        Action::Defect => -p,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmoidLearner {
    pub theta: f64,
    /// Step size `η`.
    pub eta: f64,
}

impl SigmoidLearner {
    pub fn new(theta: f64, eta: f64) -> Self {
        SigmoidLearner { theta, eta }
    }

    /// Learner whose initial cooperation probability is `p`.
    pub fn with_coop_prob(p: f64, eta: f64) -> Self {
        SigmoidLearner::new(logit(p), eta)
    }

    pub fn coop_prob(&self) -> f64 {
        coop_prob(self.theta)
    }

    /// `θ ← θ + η · grad`.
    pub fn apply_update(&mut self, grad: f64) {
        self.theta += self.eta * grad;
    }
}

/// Running mean of a player's total reward, used as the critic baseline of
/// sampled updates. In a single-state game the expected total reward is the
/// exact critic target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunningMeanCritic {
    pub value: f64,
    pub decay: f64,
}

impl RunningMeanCritic {
    pub fn new(decay: f64) -> Self {
        RunningMeanCritic { value: 0.0, decay }
    }

    pub fn observe(&mut self, total_reward: f64) {
        self.value = self.decay * self.value + (1.0 - self.decay) * total_reward;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearnerMode {
    /// Closed-form gradient of the expected total reward.
    ExactValue,
    /// Likelihood-ratio estimate from the sampled action with a per-player
    /// running-mean critic as baseline.
    Sampled(RunningMeanCritic),
}

/// Exact `d/dθ_i [V_i + V_i^p]` in a two-player game.
///
/// `V_i^p` uses the planner's deterministic per-outcome rewards; pass `None`
/// for a game without a planner.
pub fn exact_value_grad(
    g: &GamePayoffs,
    player: usize,
    thetas: (f64, f64),
    planner: Option<&PlannerPolicy>,
) -> f64 {
    let coop = [coop_prob(thetas.0), coop_prob(thetas.1)];
    let table = planner.map(PlannerPolicy::reward_table);
    g.value_grad(player, &coop, table.as_deref())
}

/// Likelihood-ratio gradient `∇ log π_i(τ) · (R_i^tot - baseline)` for the
/// learner that acted as `player` in `traj`.
pub fn sampled_grad(
    learner: &SigmoidLearner,
    player: usize,
    traj: &Trajectory,
    baseline: f64,
) -> f64 {
    let p = learner.coop_prob();
    let score: f64 = traj
        .steps
        .iter()
        .map(|s| log_prob_grad(p, s.actions[player]))
        .sum();
    score * (traj.total_return(player) - baseline)
}

/// Half-count smoothing for [`mle_opponent_theta`].
pub const MLE_SMOOTHING: f64 = 0.5;

/// Maximum-likelihood policy parameter of an observed action sequence,
/// `ln(k / (n - k))` with the cooperation count `k` clamped to
/// `[0.5, n - 0.5]` so the estimate stays finite.
pub fn mle_opponent_theta(actions: &[Action]) -> Result<f64> {
    if actions.is_empty() {
        return Err(Error::Domain(
            "cannot estimate a policy from no actions".into(),
        ));
    }
    let n = actions.len() as f64;
    let k = actions.iter().filter(|a| a.is_cooperate()).count() as f64;
    let k = k.clamp(MLE_SMOOTHING, n - MLE_SMOOTHING);
    Ok((k / (n - k)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{C, D};
    use crate::planner::{PlannerConfig, Step};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn pd() -> GamePayoffs {
        GamePayoffs::prisoners_dilemma()
    }

    #[test]
    fn coop_prob_examples() {
        assert_eq!(coop_prob(0.0), 0.5);
        assert_abs_diff_eq!(coop_prob((1.0f64 / 3.0).ln()), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(coop_prob(30.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(coop_prob(-800.0), 0.0);
        assert!(coop_prob(-1.0) < coop_prob(-0.999));
    }

    #[test]
    fn exact_grad_at_even_odds() {
        let g = exact_value_grad(&pd(), 0, (0.0, 0.0), None);
        assert_abs_diff_eq!(g, -0.25, epsilon = 1e-15);
    }

    #[test]
    fn exact_grad_planner_paying_cooperation() {
        // r1 = 1 whenever player 1 cooperates: c * tanh(z) = 1.
        let mut pp = PlannerPolicy::new(2, PlannerConfig::default());
        let z = (1.0f64 / 3.0).atanh();
        // Player 1's row, outcomes CC and CD.
        pp.weights[0] = z;
        pp.weights[1] = z;
        let zero_game = GamePayoffs::new(0.0, 0.0, 0.0, 0.0);
        let g = exact_value_grad(&zero_game, 0, (0.0, 0.0), Some(&pp));
        assert_abs_diff_eq!(g, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn exact_grad_vanishes_when_saturated() {
        assert!(exact_value_grad(&pd(), 0, (30.0, 0.3), None).abs() < 1e-10);
    }

    #[test]
    fn exact_grad_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pp = PlannerPolicy::new(2, PlannerConfig::default());
        for w in pp.weights.iter_mut().chain(pp.bias.iter_mut()) {
            *w = rng.random_range(-1.0..1.0);
        }
        let h = 1e-5;
        for g in [
            GamePayoffs::prisoners_dilemma(),
            GamePayoffs::chicken(),
            GamePayoffs::stag_hunt(),
        ] {
            let table = pp.reward_table();
            // Oracle: total value evaluated by summing the four outcomes directly.
            let v_tot = |i: usize, t1: f64, t2: f64| {
                let (p, q) = (coop_prob(t1), coop_prob(t2));
                let w = [p * q, p * (1.0 - q), (1.0 - p) * q, (1.0 - p) * (1.0 - q)];
                let u = if i == 0 {
                    g.row_payoffs()
                } else {
                    [g.reward, g.temptation, g.sucker, g.punishment]
                };
                (0..4).map(|o| w[o] * (u[o] + table[o][i])).sum::<f64>()
            };
            for _ in 0..50 {
                let t1 = rng.random_range(-3.0..3.0);
                let t2 = rng.random_range(-3.0..3.0);
                for i in 0..2 {
                    let fd = if i == 0 {
                        (v_tot(0, t1 + h, t2) - v_tot(0, t1 - h, t2)) / (2.0 * h)
                    } else {
                        (v_tot(1, t1, t2 + h) - v_tot(1, t1, t2 - h)) / (2.0 * h)
                    };
                    let an = exact_value_grad(&g, i, (t1, t2), Some(&pp));
                    let rel = (an - fd).abs() / fd.abs().max(1e-8);
                    assert!(rel < 1e-6, "player {i} at ({t1}, {t2}): {an} vs {fd}");
                }
            }
        }
    }

    fn one_step(actions: [Action; 2], rewards: [f64; 2]) -> Trajectory {
        Trajectory::single(Step {
            actions: actions.to_vec(),
            coop_probs: vec![0.5, 0.5],
            rewards: rewards.to_vec(),
            planner_rewards: vec![0.0, 0.0],
            planner_noise: vec![],
            outcome: crate::games::outcome_index(&actions),
        })
    }

    #[test]
    fn sampled_grad_examples() {
        let half = SigmoidLearner::new(0.0, 0.01);
        assert_abs_diff_eq!(
            sampled_grad(&half, 0, &one_step([C, D], [2.0, 0.0]), 0.0),
            1.0
        );
        assert_eq!(
            sampled_grad(&half, 0, &one_step([C, D], [2.0, 0.0]), 2.0),
            0.0
        );
        let quarter = SigmoidLearner::with_coop_prob(0.25, 0.01);
        let g = sampled_grad(&quarter, 1, &one_step([C, D], [0.0, 1.0]), 0.0);
        assert_abs_diff_eq!(g, -0.25, epsilon = 1e-15);
    }

    #[test]
    fn sampled_grad_is_unbiased() {
        let g = pd();
        let (t1, t2) = (0.4, -0.7);
        let learner = SigmoidLearner::new(t1, 0.01);
        let (p, q) = (coop_prob(t1), coop_prob(t2));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let a1 = if rng.random::<f64>() < p { C } else { D };
                let a2 = if rng.random::<f64>() < q { C } else { D };
                let (u1, u2) = g.payoff(a1, a2);
                sampled_grad(&learner, 0, &one_step([a1, a2], [u1, u2]), 0.0)
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let exact = exact_value_grad(&g, 0, (t1, t2), None);
        assert!(
            (mean - exact).abs() < 3.0 * se,
            "{mean} vs {exact} (se {se})"
        );
    }

    #[test]
    fn apply_update_examples() {
        let mut l = SigmoidLearner::new(0.0, 0.01);
        l.apply_update(-0.25);
        assert_abs_diff_eq!(l.theta, -0.0025, epsilon = 1e-18);
        let before = l;
        l.apply_update(0.0);
        l.apply_update(0.0);
        assert_eq!(l, before);
    }

    #[test]
    fn mle_examples() {
        assert_eq!(mle_opponent_theta(&[C, D, C, D]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            mle_opponent_theta(&[C, C, C, D]).unwrap(),
            3f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            mle_opponent_theta(&[D, D]).unwrap(),
            (0.5f64 / 1.5).ln(),
            epsilon = 1e-15
        );
        assert!(matches!(mle_opponent_theta(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn plain_gradient_ascent_defects_in_pd() {
        let g = pd();
        let mut l1 = SigmoidLearner::with_coop_prob(0.25, 0.01);
        let mut l2 = l1;
        for _ in 0..4000 {
            let thetas = (l1.theta, l2.theta);
            let g1 = exact_value_grad(&g, 0, thetas, None);
            let g2 = exact_value_grad(&g, 1, thetas, None);
            l1.apply_update(g1);
            l2.apply_update(g2);
        }
        assert!(l1.coop_prob() * l2.coop_prob() < 1e-3);
    }

    proptest! {
        #[test]
        fn coop_prob_in_open_interval(theta in -30.0f64..30.0) {
            let p = coop_prob(theta);
            prop_assert!(p > 0.0 && p < 1.0);
        }

        #[test]
        fn mle_reproduces_clamped_frequency(k in 0usize..40, extra in 1usize..40) {
            let n = k + extra;
            let mut actions = vec![C; k];
            actions.extend(std::iter::repeat_n(D, n - k));
            let theta = mle_opponent_theta(&actions).unwrap();
            let kc = (k as f64).clamp(0.5, n as f64 - 0.5);
            prop_assert!((coop_prob(theta) - kc / n as f64).abs() < 1e-12);
        }
    }
}
