//! Gradual tit-for-tat: agents that weigh the opponent's payoff by a
//! cooperativeness level, estimate the opponent's level and mirror it.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::games::{Action, GamePayoffs};
use crate::learners::{coop_prob, log_prob_grad, RunningMeanCritic, SigmoidLearner};

/// Default temperature of the acting policy.
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_CAP: usize = 10_000;
const FIXED_POINT_DAMPING: f64 = 0.5;
/// Iterations before the damping of [`value_of_coop_levels`] is raised.
pub const ITERATIONS_PER_DAMPING: usize = 500;
const BISECTION_TOL: f64 = 1e-6;

/// `V₁(p, q) + α · V₂(p, q)`.
pub fn weighted_value(g: &GamePayoffs, alpha: f64, p: f64, q: f64) -> Result<f64> {
    let (v1, v2) = g.expected_values(p, q)?;
    Ok(v1 + alpha * v2)
}

/// Softmax response of a player weighting the opponent's payoff by `alpha`
/// against an opponent cooperating with probability `opp_coop_prob`.
pub fn induced_policy(g: &GamePayoffs, alpha: f64, opp_coop_prob: f64, temperature: f64) -> f64 {
    let q = opp_coop_prob;
    // Own payoff plus α times the opponent's payoff, for each own action.
    let q_c = q * (g.reward + alpha * g.reward) + (1.0 - q) * (g.sucker + alpha * g.temptation);
    let q_d =
        q * (g.temptation + alpha * g.sucker) + (1.0 - q) * (g.punishment + alpha * g.punishment);
    coop_prob((q_c - q_d) / temperature)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoopLevelValues {
    pub v1: f64,
    pub v2: f64,
    /// Cooperation probabilities at the last iterate.
    pub p: f64,
    pub q: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Values of the policy pair that two players with cooperativeness `alpha`
/// and `beta` settle into, found by damped iteration of their responses from
/// `(0.5, 0.5)`.
///
/// Iteration starts with damping 0.5. Steep responses at low temperature can
/// still make it cycle (Chicken near its mixed equilibrium), so every
/// [`ITERATIONS_PER_DAMPING`] iterations without convergence the step toward
/// the response is halved.
pub fn value_of_coop_levels(
    g: &GamePayoffs,
    alpha: f64,
    beta: f64,
    temperature: f64,
) -> Result<CoopLevelValues> {
    for (name, x) in [("alpha", alpha), ("beta", beta)] {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("{name} must lie in [0, 1], got {x}")));
        }
    }
    let (mut p, mut q) = (0.5, 0.5);
    let mut damping = FIXED_POINT_DAMPING;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < FIXED_POINT_CAP {
        iterations += 1;
        let p_new = induced_policy(g, alpha, q, temperature);
        let q_new = induced_policy(g, beta, p, temperature);
        let p_next = damping * p + (1.0 - damping) * p_new;
        let q_next = damping * q + (1.0 - damping) * q_new;
        let delta = (p_next - p).abs().max((q_next - q).abs());
        p = p_next;
        q = q_next;
        if delta < FIXED_POINT_TOL {
            converged = true;
            break;
        }
        if iterations % ITERATIONS_PER_DAMPING == 0 {
            damping = 1.0 - 0.5 * (1.0 - damping);
        }
    }
    let (v1, v2) = g.expected_values(p, q)?;
    Ok(CoopLevelValues {
        v1,
        v2,
        p,
        q,
        converged,
        iterations,
    })
}

/// Discretized belief over the opponent's cooperativeness.
#[derive(Clone, Debug, PartialEq)]
pub struct CoopBelief {
    pub grid: Vec<f64>,
    pub mass: Vec<f64>,
}

/// Result of a Bayesian update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateStatus {
    Updated,
    /// The likelihood vanished on the whole grid and the belief was reset
    /// to uniform.
    ResetToUniform,
}

impl CoopBelief {
    /// Uniform belief over `intervals + 1` evenly spaced points of `[0, 1]`.
    pub fn uniform(intervals: usize) -> Self {
        let intervals = intervals.max(1);
        let grid = (0..=intervals)
            .map(|j| j as f64 / intervals as f64)
            .collect();
        let mass = vec![1.0 / (intervals + 1) as f64; intervals + 1];
        CoopBelief { grid, mass }
    }

    /// Multiplies by `likelihood(β)` pointwise and renormalizes.
    pub fn bayes_update(&mut self, likelihood: impl Fn(f64) -> f64) -> UpdateStatus {
        let mut total = 0.0;
        for (m, &b) in self.mass.iter_mut().zip(&self.grid) {
            *m *= likelihood(b).max(0.0);
            total += *m;
        }
        if !(total > 0.0) || !total.is_finite() {
            warn!("belief update produced zero posterior mass; resetting to uniform");
            let k = self.mass.len() as f64;
            self.mass.iter_mut().for_each(|m| *m = 1.0 / k);
            return UpdateStatus::ResetToUniform;
        }
        self.mass.iter_mut().for_each(|m| *m /= total);
        UpdateStatus::Updated
    }

    /// Posterior mean.
    pub fn point_estimate(&self) -> f64 {
        self.grid.iter().zip(&self.mass).map(|(b, m)| b * m).sum()
    }

    /// Grid point with the largest mass (first one on ties).
    pub fn map_estimate(&self) -> f64 {
        let mut best = 0;
        for (j, m) in self.mass.iter().enumerate() {
            if *m > self.mass[best] {
                best = j;
            }
        }
        self.grid[best]
    }

    pub fn std_dev(&self) -> f64 {
        let mean = self.point_estimate();
        self.grid
            .iter()
            .zip(&self.mass)
            .map(|(b, m)| m * (b - mean).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `Σ_β P(β) · f(β)`.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.mass)
            .map(|(&b, m)| m * f(b))
            .sum()
    }
}

/// Likelihood of the opponent's `observed` action when the opponent has
/// cooperativeness `beta` and responds to us cooperating with probability
/// `own_coop_prob`. The opponent is modeled with our own response map.
pub fn action_likelihood(
    g: &GamePayoffs,
    beta: f64,
    observed: Action,
    own_coop_prob: f64,
    temperature: f64,
) -> f64 {
    let pc = induced_policy(g, beta, own_coop_prob, temperature);
    if observed.is_cooperate() {
        pc
    } else {
        1.0 - pc
    }
}

/// Bayesian belief update on one observed opponent action.
pub fn bayes_update(
    belief: &mut CoopBelief,
    observed: Action,
    g: &GamePayoffs,
    own_coop_prob: f64,
    temperature: f64,
) -> UpdateStatus {
    belief.bayes_update(|b| action_likelihood(g, b, observed, own_coop_prob, temperature))
}

pub fn point_estimate(belief: &CoopBelief) -> f64 {
    belief.point_estimate()
}

/// `τ · r + (1 - τ) · G_prev`, or `r` for the first observation.
pub fn ewma_return(prev: Option<f64>, r: f64, tau: f64) -> f64 {
    match prev {
        None => r,
        Some(g) => tau * r + (1.0 - tau) * g,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardEstimate {
    pub beta_hat: f64,
    /// False when `V₁(α, ·)` was seen to decrease during the search.
    pub monotone: bool,
}

/// The `β` for which `V₁(α, β)` equals the observed average reward, found by
/// bisection. Targets below (above) the whole range map to 0 (1).
pub fn reward_based_estimate(
    g: &GamePayoffs,
    alpha: f64,
    target: f64,
    temperature: f64,
) -> Result<RewardEstimate> {
    let v1 = |b: f64| value_of_coop_levels(g, alpha, b, temperature).map(|v| v.v1);
    let (lo_v, hi_v) = (v1(0.0)?, v1(1.0)?);
    let mut monotone = lo_v <= hi_v;
    if target <= lo_v {
        return Ok(RewardEstimate {
            beta_hat: 0.0,
            monotone,
        });
    }
    if target >= hi_v {
        return Ok(RewardEstimate {
            beta_hat: 1.0,
            monotone,
        });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut vl, mut vh) = (lo_v, hi_v);
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let vm = v1(mid)?;
        if vm < vl || vm > vh {
            monotone = false;
        }
        if vm < target {
            lo = mid;
            vl = vm;
        } else {
            hi = mid;
            vh = vm;
        }
    }
    if !monotone {
        warn!("value is not monotone in the opponent's cooperativeness (alpha = {alpha}); estimate may be off");
    }
    Ok(RewardEstimate {
        beta_hat: 0.5 * (lo + hi),
        monotone,
    })
}

/// `clamp(β̂ + ε, 0, 1)`.
pub fn mirror_alpha(beta_hat: f64, epsilon: f64) -> f64 {
    (beta_hat + epsilon).clamp(0.0, 1.0)
}

/// Welfare functions for diagnostics. Only the utilitarian sum drives
/// behavior; the others are logged for comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WelfareFn {
    Utilitarian,
    /// Product of gains over the mutual-defection payoff.
    Nash,
    /// Smallest gain relative to the best attainable payoff.
    KalaiSmorodinsky,
}

impl WelfareFn {
    pub fn evaluate(self, g: &GamePayoffs, v1: f64, v2: f64) -> f64 {
        let d = g.punishment;
        match self {
            WelfareFn::Utilitarian => v1 + v2,
            WelfareFn::Nash => (v1 - d).max(0.0) * (v2 - d).max(0.0),
            WelfareFn::KalaiSmorodinsky => {
                let ideal = g.reward.max(g.temptation) - d;
                ((v1 - d) / ideal).min((v2 - d) / ideal)
            }
        }
    }
}

impl FromStr for WelfareFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "utilitarian" | "sum" => Ok(WelfareFn::Utilitarian),
            "nash" => Ok(WelfareFn::Nash),
            "kalai-smorodinsky" | "ks" => Ok(WelfareFn::KalaiSmorodinsky),
            other => Err(Error::Config(format!("unknown welfare function '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonotonicityKind {
    OwnValueInAlpha,
    OwnValueInBeta,
    WelfareInAlpha,
    WelfareInBeta,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub kind: MonotonicityKind,
    pub alpha: f64,
    pub beta: f64,
    /// Size of the change in the wrong direction.
    pub amount: f64,
}

/// Checks on an `n × n` grid over `[0, 1]²` that `V₁(α, β)` does not increase
/// in `α` and does not decrease in `β`, and that `V₁ + V₂` does not decrease
/// in either, up to `tol`. Returns every violation found and whether all
/// fixed points converged.
pub fn monotonicity_violations(
    g: &GamePayoffs,
    temperature: f64,
    n: usize,
    tol: f64,
) -> Result<(Vec<Violation>, bool)> {
    let n = n.max(2);
    let axis: Vec<f64> = (0..n).map(|j| j as f64 / (n - 1) as f64).collect();
    let mut table = vec![vec![(0.0, 0.0); n]; n];
    let mut all_converged = true;
    for (a, &alpha) in axis.iter().enumerate() {
        for (b, &beta) in axis.iter().enumerate() {
            let v = value_of_coop_levels(g, alpha, beta, temperature)?;
            all_converged &= v.converged;
            table[a][b] = (v.v1, v.v1 + v.v2);
        }
    }
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let (v1, w) = table[a][b];
            if a + 1 < n {
                let (v1n, wn) = table[a + 1][b];
                if v1n - v1 > tol {
                    out.push(Violation {
                        kind: MonotonicityKind::OwnValueInAlpha,
                        alpha: axis[a],
                        beta: axis[b],
                        amount: v1n - v1,
                    });
                }
                if w - wn > tol {
                    out.push(Violation {
                        kind: MonotonicityKind::WelfareInAlpha,
                        alpha: axis[a],
                        beta: axis[b],
                        amount: w - wn,
                    });
                }
            }
            if b + 1 < n {
                let (v1n, wn) = table[a][b + 1];
                if v1 - v1n > tol {
                    out.push(Violation {
                        kind: MonotonicityKind::OwnValueInBeta,
                        alpha: axis[a],
                        beta: axis[b],
                        amount: v1 - v1n,
                    });
                }
                if w - wn > tol {
                    out.push(Violation {
                        kind: MonotonicityKind::WelfareInBeta,
                        alpha: axis[a],
                        beta: axis[b],
                        amount: w - wn,
                    });
                }
            }
        }
    }
    Ok((out, all_converged))
}

/// How a GTFT agent estimates the opponent's cooperativeness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Estimator {
    /// Bayesian update on each observed action.
    ActionBayes,
    /// Invert the value map at a moving average of own rewards.
    RewardEwma { tau: f64, average: Option<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtftConfig {
    pub epsilon: f64,
    /// Temperature of the agent's own acting policy.
    pub temperature: f64,
    /// Temperature of the opponent model used in the likelihood. A model as
    /// sharp as the acting policy makes each observation almost a hard cut
    /// on `β`, so the posterior mean stalls in the interior.
    pub model_temperature: f64,
    pub grid_intervals: usize,
    pub tau: f64,
    pub rounds: usize,
    /// Step size of the naive sigmoid learner opponent.
    pub naive_eta: f64,
    pub mirroring: bool,
    pub welfare: WelfareFn,
}

impl Default for GtftConfig {
    fn default() -> Self {
        GtftConfig {
            epsilon: 0.05,
            temperature: DEFAULT_TEMPERATURE,
            model_temperature: 1.0,
            grid_intervals: 100,
            tau: 0.05,
            rounds: 1000,
            naive_eta: 0.01,
            mirroring: true,
            welfare: WelfareFn::Utilitarian,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GtftAgent {
    pub alpha: f64,
    pub epsilon: f64,
    pub belief: CoopBelief,
    pub temperature: f64,
    pub model_temperature: f64,
    pub estimator: Estimator,
    pub mirroring: bool,
    beta_hat: f64,
    last_coop_prob: f64,
}

impl GtftAgent {
    pub fn new(cfg: &GtftConfig, estimator: Estimator) -> Self {
        let belief = CoopBelief::uniform(cfg.grid_intervals);
        let beta_hat = belief.point_estimate();
        GtftAgent {
            alpha: if cfg.mirroring {
                mirror_alpha(beta_hat, cfg.epsilon)
            } else {
                1.0
            },
            epsilon: cfg.epsilon,
            belief,
            temperature: cfg.temperature,
            model_temperature: cfg.model_temperature,
            estimator,
            mirroring: cfg.mirroring,
            beta_hat,
            last_coop_prob: 0.5,
        }
    }

    pub fn beta_hat(&self) -> f64 {
        self.beta_hat
    }

    /// Predicted probability that the opponent cooperates next.
    pub fn predicted_opponent(&self, g: &GamePayoffs) -> f64 {
        let own = self.last_coop_prob;
        match self.estimator {
            Estimator::ActionBayes => self
                .belief
                .expect(|b| induced_policy(g, b, own, self.model_temperature)),
            Estimator::RewardEwma { .. } => {
                induced_policy(g, self.beta_hat, own, self.model_temperature)
            }
        }
    }

    pub fn coop_prob(&self, g: &GamePayoffs) -> f64 {
        induced_policy(g, self.alpha, self.predicted_opponent(g), self.temperature)
    }

    /// Updates the estimate of the opponent and, when mirroring, the own
    /// cooperativeness. `own_coop_prob` is the probability the agent acted with.
    pub fn observe(
        &mut self,
        g: &GamePayoffs,
        own_coop_prob: f64,
        opp_action: Action,
        reward: f64,
    ) -> Result<UpdateStatus> {
        let mut status = UpdateStatus::Updated;
        match &mut self.estimator {
            Estimator::ActionBayes => {
                status = bayes_update(
                    &mut self.belief,
                    opp_action,
                    g,
                    own_coop_prob,
                    self.model_temperature,
                );
                self.beta_hat = self.belief.point_estimate();
            }
            Estimator::RewardEwma { tau, average } => {
                let avg = ewma_return(*average, reward, *tau);
                *average = Some(avg);
                self.beta_hat =
                    reward_based_estimate(g, self.alpha, avg, self.temperature)?.beta_hat;
            }
        }
        self.last_coop_prob = own_coop_prob;
        if self.mirroring {
            self.alpha = mirror_alpha(self.beta_hat, self.epsilon);
        }
        Ok(status)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AgentKind {
    GtftBayes,
    GtftReward,
    AlwaysCooperate,
    AlwaysDefect,
    NaiveLearner,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::GtftBayes,
        AgentKind::GtftReward,
        AgentKind::AlwaysCooperate,
        AgentKind::AlwaysDefect,
        AgentKind::NaiveLearner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::GtftBayes => "gtft-bayes",
            AgentKind::GtftReward => "gtft-reward",
            AgentKind::AlwaysCooperate => "always-c",
            AgentKind::AlwaysDefect => "always-d",
            AgentKind::NaiveLearner => "naive",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown agent kind '{s}'")))
    }
}

/// A participant in an iterated game.
#[derive(Clone, Debug)]
pub enum Agent {
    Gtft(GtftAgent),
    AlwaysCooperate,
    AlwaysDefect,
    Naive {
        learner: SigmoidLearner,
        critic: RunningMeanCritic,
    },
}

impl Agent {
    pub fn new(kind: AgentKind, cfg: &GtftConfig) -> Self {
        match kind {
            AgentKind::GtftBayes => Agent::Gtft(GtftAgent::new(cfg, Estimator::ActionBayes)),
            AgentKind::GtftReward => Agent::Gtft(GtftAgent::new(
                cfg,
                Estimator::RewardEwma {
                    tau: cfg.tau,
                    average: None,
                },
            )),
            AgentKind::AlwaysCooperate => Agent::AlwaysCooperate,
            AgentKind::AlwaysDefect => Agent::AlwaysDefect,
            AgentKind::NaiveLearner => Agent::Naive {
                learner: SigmoidLearner::new(0.0, cfg.naive_eta),
                critic: RunningMeanCritic::new(0.99),
            },
        }
    }

    pub fn coop_prob(&self, g: &GamePayoffs) -> f64 {
        match self {
            Agent::Gtft(a) => a.coop_prob(g),
            Agent::AlwaysCooperate => 1.0,
            Agent::AlwaysDefect => 0.0,
            Agent::Naive { learner, .. } => learner.coop_prob(),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            Agent::Gtft(a) => Some(a.alpha),
            _ => None,
        }
    }

    pub fn beta_hat(&self) -> Option<f64> {
        match self {
            Agent::Gtft(a) => Some(a.beta_hat()),
            _ => None,
        }
    }

    fn observe(
        &mut self,
        g: &GamePayoffs,
        own_p: f64,
        own: Action,
        opp: Action,
        reward: f64,
    ) -> Result<()> {
        match self {
            Agent::Gtft(a) => {
                a.observe(g, own_p, opp, reward)?;
            }
            Agent::Naive { learner, critic } => {
                let grad = log_prob_grad(own_p, own) * (reward - critic.value);
                critic.observe(reward);
                learner.apply_update(grad);
            }
            Agent::AlwaysCooperate | Agent::AlwaysDefect => {}
        }
        Ok(())
    }
}

/// One round of an iterated match.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub actions: [Action; 2],
    pub alpha: [Option<f64>; 2],
    pub beta_hat: [Option<f64>; 2],
    pub rewards: [f64; 2],
    /// Diagnostic welfare of the round's expected values.
    pub welfare: f64,
}

/// Plays `rounds` rounds of the symmetric game between two agents.
pub fn play_match<R: Rng + ?Sized>(
    g: &GamePayoffs,
    a: &mut Agent,
    b: &mut Agent,
    rounds: usize,
    welfare: WelfareFn,
    rng: &mut R,
) -> Result<Vec<RoundRecord>> {
    let mut out = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let (pa, pb) = (a.coop_prob(g), b.coop_prob(g));
        let act = |p: f64, rng: &mut R| {
            if rng.random::<f64>() < p {
                Action::Cooperate
            } else {
                Action::Defect
            }
        };
        let (xa, xb) = (act(pa, rng), act(pb, rng));
        let (ra, rb) = g.payoff(xa, xb);
        a.observe(g, pa, xa, xb, ra)?;
        b.observe(g, pb, xb, xa, rb)?;
        let (v1, v2) = g.expected_values(pa, pb)?;
        out.push(RoundRecord {
            round,
            actions: [xa, xb],
            alpha: [a.alpha(), b.alpha()],
            beta_hat: [a.beta_hat(), b.beta_hat()],
            rewards: [ra, rb],
            welfare: welfare.evaluate(g, v1, v2),
        });
    }
    Ok(out)
}

/// Match results of a round-robin tournament.
#[derive(Clone, Debug)]
pub struct MatchResult {
    pub first: AgentKind,
    pub second: AgentKind,
    pub rounds: Vec<RoundRecord>,
}

impl MatchResult {
    pub fn mean_rewards(&self) -> [f64; 2] {
        let n = self.rounds.len().max(1) as f64;
        let mut s = [0.0; 2];
        for r in &self.rounds {
            s[0] += r.rewards[0];
            s[1] += r.rewards[1];
        }
        [s[0] / n, s[1] / n]
    }
}

/// Every unordered pair of `kinds` (including each kind against itself)
/// plays one match with fresh agents.
pub fn round_robin<R: Rng + ?Sized>(
    g: &GamePayoffs,
    kinds: &[AgentKind],
    cfg: &GtftConfig,
    rng: &mut R,
) -> Result<Vec<MatchResult>> {
    let mut out = Vec::new();
    for (i, &first) in kinds.iter().enumerate() {
        for &second in &kinds[i..] {
            let mut a = Agent::new(first, cfg);
            let mut b = Agent::new(second, cfg);
            let rounds = play_match(g, &mut a, &mut b, cfg.rounds, cfg.welfare, rng)?;
            out.push(MatchResult {
                first,
                second,
                rounds,
            });
        }
    }
    Ok(out)
}
