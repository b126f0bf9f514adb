//! The planning agent: bounded extra rewards per joint outcome, trained to
//! raise social welfare after the learners' next update.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::games::{action_in, n_outcomes, outcome_probs, Action, MatrixGame};
use crate::learners::{coop_prob, log_prob_grad, SigmoidLearner};

/// Largest player count the one-hot planner supports (2^12 outcomes).
pub const MAX_PLANNER_PLAYERS: usize = 12;

/// Below this norm the cost gradient is taken to be zero.
const COST_NORM_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PlannerMode {
    /// Closed-form gradient through the learners' anticipated update.
    #[default]
    Exact,
    /// Likelihood-ratio estimate from sampled trajectories.
    Estimated,
}

impl FromStr for PlannerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(PlannerMode::Exact),
            "estimated" | "estimate" => Ok(PlannerMode::Estimated),
            other => Err(Error::Config(format!(
                "unknown planner mode '{other}' (expected exact or estimated)"
            ))),
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerMode::Exact => "exact",
            PlannerMode::Estimated => "estimated",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Bound `c` on every extra reward.
    pub reward_cap: f64,
    pub eta: f64,
    /// Weight of the `‖V^p‖` penalty.
    pub cost_alpha: f64,
    pub revenue_neutral: bool,
    pub mode: PlannerMode,
    /// Standard deviation of the Gaussian exploration noise on the
    /// pre-activation (estimated mode).
    pub sigma: f64,
    /// Trajectories per estimated-mode update.
    pub batch_size: usize,
    /// Optional max-norm clip applied to the raw gradient.
    pub max_grad_norm: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            reward_cap: 3.0,
            eta: 0.01,
            cost_alpha: 0.0002,
            revenue_neutral: false,
            mode: PlannerMode::Exact,
            sigma: 0.1,
            batch_size: 1,
            max_grad_norm: None,
        }
    }
}

/// Single-layer planner over one-hot joint outcomes.
///
/// The pre-activation for player `k` in outcome `o` is `W[k, o] + b[k]`; the
/// emitted reward is `c · tanh` of it, followed by mean subtraction across
/// players when revenue neutrality is on.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerPolicy {
    pub n_players: usize,
    pub n_outcomes: usize,
    /// Row-major `n_players × n_outcomes`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub config: PlannerConfig,
}

impl PlannerPolicy {
    /// Zero-initialized planner.
    ///
    /// Panics if `n_players` is 0 or above [`MAX_PLANNER_PLAYERS`].
    pub fn new(n_players: usize, config: PlannerConfig) -> Self {
        assert!(
            (1..=MAX_PLANNER_PLAYERS).contains(&n_players),
            "planner supports 1..={MAX_PLANNER_PLAYERS} players, got {n_players}"
        );
        let k = n_outcomes(n_players);
        PlannerPolicy {
            n_players,
            n_outcomes: k,
            weights: vec![0.0; n_players * k],
            bias: vec![0.0; n_players],
            config,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn weight(&self, player: usize, outcome: usize) -> f64 {
        self.weights[player * self.n_outcomes + outcome]
    }

    pub fn pre_activation(&self, outcome: usize) -> Vec<f64> {
        (0..self.n_players)
            .map(|k| self.weight(k, outcome) + self.bias[k])
            .collect()
    }

    /// Deterministic extra rewards for `outcome`.
    pub fn rewards(&self, outcome: usize) -> Vec<f64> {
        rewards_from_preactivation(
            &self.pre_activation(outcome),
            self.config.reward_cap,
            self.config.revenue_neutral,
        )
    }

    /// Extra rewards with Gaussian noise on the pre-activation. Returns the
    /// rewards and the noise that was added.
    pub fn sample_rewards<R: Rng + ?Sized>(
        &self,
        outcome: usize,
        rng: &mut R,
    ) -> (Vec<f64>, Vec<f64>) {
        let noise: Vec<f64> = (0..self.n_players)
            .map(|_| self.config.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let pre: Vec<f64> = self
            .pre_activation(outcome)
            .iter()
            .zip(&noise)
            .map(|(m, z)| m + z)
            .collect();
        let r =
            rewards_from_preactivation(&pre, self.config.reward_cap, self.config.revenue_neutral);
        (r, noise)
    }

    /// Extra rewards of every outcome, indexed `[outcome][player]`.
    pub fn reward_table(&self) -> Vec<Vec<f64>> {
        (0..self.n_outcomes).map(|o| self.rewards(o)).collect()
    }

    /// Two-player reward table as `(r1, r2)` pairs in CC, CD, DC, DD order.
    pub fn reward_pairs(&self) -> Result<[(f64, f64); 4]> {
        if self.n_players != 2 {
            return Err(Error::Contract(format!(
                "reward pairs need a two-player planner, this one has {} players",
                self.n_players
            )));
        }
        let t = self.reward_table();
        Ok([
            (t[0][0], t[0][1]),
            (t[1][0], t[1][1]),
            (t[2][0], t[2][1]),
            (t[3][0], t[3][1]),
        ])
    }

    /// Expected extra reward `V_i^p` of every player.
    pub fn expected_rewards(&self, coop: &[f64]) -> Vec<f64> {
        let probs = outcome_probs(coop);
        let mut v = vec![0.0; self.n_players];
        for (o, pr) in probs.iter().enumerate() {
            for (vi, r) in v.iter_mut().zip(self.rewards(o)) {
                *vi += pr * r;
            }
        }
        v
    }
}

/// `c · tanh(pre)` componentwise, then the revenue-neutral projection if asked.
pub fn rewards_from_preactivation(pre: &[f64], cap: f64, revenue_neutral: bool) -> Vec<f64> {
    let mut r: Vec<f64> = pre.iter().map(|z| cap * z.tanh()).collect();
    if revenue_neutral {
        revenue_neutral_projection(&mut r);
    }
    r
}

/// Subtracts the mean so the rewards sum to zero.
pub fn revenue_neutral_projection(r: &mut [f64]) {
    if r.is_empty() {
        return;
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    for x in r.iter_mut() {
        *x -= mean;
    }
}

pub fn planner_rewards(pp: &PlannerPolicy, outcome: usize) -> Vec<f64> {
    pp.rewards(outcome)
}

/// Gradient (or step direction) with the planner's parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PlannerGrad {
    pub fn zeros_like(pp: &PlannerPolicy) -> Self {
        PlannerGrad {
            weights: vec![0.0; pp.weights.len()],
            bias: vec![0.0; pp.bias.len()],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    /// Inverse of [`PlannerGrad::flat`] for a planner shaped like `pp`.
    pub fn from_flat(pp: &PlannerPolicy, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), pp.n_params());
        let (w, b) = flat.split_at(pp.weights.len());
        PlannerGrad {
            weights: w.to_vec(),
            bias: b.to_vec(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &PlannerGrad) -> f64 {
        self.flat()
            .iter()
            .zip(other.flat())
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn cosine(&self, other: &PlannerGrad) -> f64 {
        self.dot(other) / (self.norm() * other.norm())
    }

    pub fn scale(&mut self, s: f64) {
        for x in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            *x *= s;
        }
    }

    /// Rescales to norm `max` if the norm exceeds it.
    pub fn clip_norm(&mut self, max: f64) {
        let n = self.norm();
        if n > max && n > 0.0 {
            self.scale(max / n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }
}

fn check_players<G: MatrixGame + ?Sized>(
    g: &G,
    learners: &[SigmoidLearner],
    pp: &PlannerPolicy,
) -> Result<()> {
    if learners.len() != pp.n_players || g.n_players() != pp.n_players {
        return Err(Error::Contract(format!(
            "game has {} players, planner {} and {} learners were given",
            g.n_players(),
            pp.n_players,
            learners.len()
        )));
    }
    Ok(())
}

/// Back-propagates per-outcome, per-player reward sensitivities
/// `sens[o][i] = ∂objective/∂r_i^p(o)` through the projection and the tanh
/// into the planner parameters.
fn backprop_reward_sensitivities(pp: &PlannerPolicy, sens: &[Vec<f64>]) -> PlannerGrad {
    let n = pp.n_players;
    let cap = pp.config.reward_cap;
    let mut grad = PlannerGrad::zeros_like(pp);
    for (o, s) in sens.iter().enumerate() {
        // The projection matrix is symmetric, so its transpose is itself.
        let mut through = s.clone();
        if pp.config.revenue_neutral {
            revenue_neutral_projection(&mut through);
        }
        for (k, t) in through.iter().enumerate().take(n) {
            let th = (pp.weight(k, o) + pp.bias[k]).tanh();
            let d = t * cap * (1.0 - th * th);
            grad.weights[k * pp.n_outcomes + o] += d;
            grad.bias[k] += d;
        }
    }
    grad
}

/// `∇_p ‖V^p‖₂`, zero when the norm is below `1e-12`.
pub fn cost_grad<G: MatrixGame + ?Sized>(
    pp: &PlannerPolicy,
    learners: &[SigmoidLearner],
    g: &G,
) -> Result<PlannerGrad> {
    check_players(g, learners, pp)?;
    let coop: Vec<f64> = learners.iter().map(SigmoidLearner::coop_prob).collect();
    let vp = pp.expected_rewards(&coop);
    let norm = vp.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < COST_NORM_GUARD {
        return Ok(PlannerGrad::zeros_like(pp));
    }
    let probs = outcome_probs(&coop);
    let sens: Vec<Vec<f64>> = probs
        .iter()
        .map(|pr| vp.iter().map(|v| pr * v / norm).collect())
        .collect();
    Ok(backprop_reward_sensitivities(pp, &sens))
}

/// Gradient of the first-order look-ahead welfare
/// `V(θ) + Σ_i η_i ∇_i V · ∇_i (V_i + V_i^p)` with respect to the planner
/// parameters, minus `α ∇_p ‖V^p‖` when the cost weight is positive.
pub fn exact_planner_grad<G: MatrixGame + ?Sized>(
    g: &G,
    learners: &[SigmoidLearner],
    pp: &PlannerPolicy,
) -> Result<PlannerGrad> {
    if pp.config.mode != PlannerMode::Exact {
        return Err(Error::Contract(
            "exact planner gradient requested for an estimated-mode planner".into(),
        ));
    }
    check_players(g, learners, pp)?;
    let n = pp.n_players;
    let coop: Vec<f64> = learners.iter().map(SigmoidLearner::coop_prob).collect();
    let probs = outcome_probs(&coop);
    let lookahead: Vec<f64> = (0..n)
        .map(|i| learners[i].eta * g.welfare_grad(i, &coop))
        .collect();
    // ∂/∂r_i^p(o) of Σ_i η_i ∇_i V · ∇_i V_i^p is η_i ∇_i V · Pr(o) · score_i(o).
    let sens: Vec<Vec<f64>> = probs
        .iter()
        .enumerate()
        .map(|(o, pr)| {
            (0..n)
                .map(|i| {
                    let score = log_prob_grad(coop[i], action_in(o, i, n));
                    lookahead[i] * pr * score
                })
                .collect()
        })
        .collect();
    let mut grad = backprop_reward_sensitivities(pp, &sens);
    let alpha = pp.config.cost_alpha;
    if alpha > 0.0 {
        let cost = cost_grad(pp, learners, g)?;
        for (a, c) in grad.flat_mut().zip(cost.flat()) {
            *a -= alpha * c;
        }
    }
    Ok(grad)
}

impl PlannerGrad {
    fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Likelihood-ratio planner gradient
/// `Σ_i η_i Ê[∇_p log π_p · ∇_i log π_i · R_{i,p}] · Ê[∇_i log π_i · R]`
/// over a batch of trajectories sampled with planner noise.
///
/// The planner score of one step is `noise / σ²` on the pre-activation of
/// the realized outcome.
pub fn pg_planner_grad(
    batch: &[Trajectory],
    learners: &[SigmoidLearner],
    pp: &PlannerPolicy,
) -> Result<PlannerGrad> {
    if pp.config.mode != PlannerMode::Estimated {
        return Err(Error::Contract(
            "policy-gradient planner update requested for an exact-mode planner".into(),
        ));
    }
    let sigma = pp.config.sigma;
    if !(sigma > 0.0) {
        return Err(Error::Contract(format!(
            "estimated mode needs a positive exploration spread, got {sigma}"
        )));
    }
    if batch.is_empty() {
        return Err(Error::Contract("empty trajectory batch".into()));
    }
    if learners.len() != pp.n_players {
        return Err(Error::Contract(format!(
            "planner has {} players but {} learners were given",
            pp.n_players,
            learners.len()
        )));
    }
    let n = pp.n_players;
    for traj in batch {
        for s in &traj.steps {
            if s.planner_noise.len() != n || s.actions.len() != n || s.coop_probs.len() != n {
                return Err(Error::Contract(
                    "trajectory step lacks planner noise or per-player data".into(),
                ));
            }
        }
    }
    let b = batch.len() as f64;
    let scores: Vec<Vec<f64>> = batch
        .iter()
        .map(|t| (0..n).map(|i| t.learner_score(i)).collect())
        .collect();
    // Ê[∇_i log π_i · R] for each player.
    let value_side: Vec<f64> = (0..n)
        .map(|i| {
            batch
                .iter()
                .zip(&scores)
                .map(|(t, s)| s[i] * t.welfare_return())
                .sum::<f64>()
                / b
        })
        .collect();
    let inv_var = 1.0 / (sigma * sigma);
    let mut grad = PlannerGrad::zeros_like(pp);
    for (traj, s) in batch.iter().zip(&scores) {
        let coeff: f64 = (0..n)
            .map(|i| learners[i].eta * value_side[i] * s[i] * traj.planner_return(i))
            .sum::<f64>()
            / b;
        if coeff == 0.0 {
            continue;
        }
        for step in &traj.steps {
            for k in 0..n {
                let d = coeff * step.planner_noise[k] * inv_var;
                grad.weights[k * pp.n_outcomes + step.outcome] += d;
                grad.bias[k] += d;
            }
        }
    }
    Ok(grad)
}

/// `(W, b) ← (W, b) + η_p · direction`.
pub fn planner_step(pp: &mut PlannerPolicy, direction: &PlannerGrad) {
    let eta = pp.config.eta;
    for (w, d) in pp.weights.iter_mut().zip(&direction.weights) {
        *w += eta * d;
    }
    for (b, d) in pp.bias.iter_mut().zip(&direction.bias) {
        *b += eta * d;
    }
}

/// Average over episodes of the summed absolute extra reward. Zero for an
/// empty history.
pub fn aar(trajectories: &[Trajectory]) -> f64 {
    if trajectories.is_empty() {
        return 0.0;
    }
    trajectories
        .iter()
        .map(Trajectory::extra_magnitude)
        .sum::<f64>()
        / trajectories.len() as f64
}

/// What happened in one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub actions: Vec<Action>,
    /// Cooperation probability of each player when the actions were drawn.
    pub coop_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub planner_rewards: Vec<f64>,
    /// Exploration noise added to the planner pre-activation; empty when the
    /// planner acted deterministically or was absent.
    pub planner_noise: Vec<f64>,
    pub outcome: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub gamma: f64,
}

impl Trajectory {
    /// One-step episode, as in a matrix game.
    pub fn single(step: Step) -> Self {
        Trajectory {
            steps: vec![step],
            gamma: 1.0,
        }
    }

    fn discounted(&self, f: impl Fn(&Step) -> f64) -> f64 {
        let mut disc = 1.0;
        let mut total = 0.0;
        for s in &self.steps {
            total += disc * f(s);
            disc *= self.gamma;
        }
        total
    }

    /// Discounted base return of `player`.
    pub fn base_return(&self, player: usize) -> f64 {
        self.discounted(|s| s.rewards[player])
    }

    /// Discounted extra-reward return of `player`.
    pub fn planner_return(&self, player: usize) -> f64 {
        self.discounted(|s| s.planner_rewards.get(player).copied().unwrap_or(0.0))
    }

    pub fn total_return(&self, player: usize) -> f64 {
        self.base_return(player) + self.planner_return(player)
    }

    /// Discounted social welfare, the sum of all base returns.
    pub fn welfare_return(&self) -> f64 {
        self.discounted(|s| s.rewards.iter().sum())
    }

    /// `∇_θ log π_i(τ)` for a sigmoid learner.
    pub fn learner_score(&self, player: usize) -> f64 {
        self.steps
            .iter()
            .map(|s| log_prob_grad(s.coop_probs[player], s.actions[player]))
            .sum()
    }

    /// Summed `|r_i^p|` over players and steps.
    pub fn extra_magnitude(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.planner_rewards.iter().map(|r| r.abs()).sum::<f64>())
            .sum()
    }
}

/// Samples one action per learner from its current policy.
pub fn sample_actions<R: Rng + ?Sized>(learners: &[SigmoidLearner], rng: &mut R) -> Vec<Action> {
    learners
        .iter()
        .map(|l| {
            if rng.random::<f64>() < coop_prob(l.theta) {
                Action::Cooperate
            } else {
                Action::Defect
            }
        })
        .collect()
}
