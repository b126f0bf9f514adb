//! The Coin Game on a 3×3 grid and a small actor-critic learner pair.
//!
//! Two agents (red and blue) move simultaneously. Stepping onto the coin
//! picks it up for +1; picking up a coin of the other agent's colour costs
//! that other agent 2. If both agents land on the coin, both pick it up.
//! A new coin appears at a random cell not occupied by an agent.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::{StepRule, Stepper};
use crate::rng::{stream, Stream};

pub const GRID: usize = 3;
pub const EPISODE_LEN: usize = 100;
/// Size of the state encoding: four stacked binary planes.
pub const STATE_DIM: usize = 4 * GRID * GRID;
pub const N_MOVES: usize = 4;
pub const DEFAULT_LR: f64 = 0.000083333;
pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; N_MOVES] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Move::ALL[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CoinColor {
    Red,
    Blue,
}

impl CoinColor {
    /// Colour owned by player 0 (red) or 1 (blue).
    pub fn of_player(player: usize) -> Self {
        if player == 0 {
            CoinColor::Red
        } else {
            CoinColor::Blue
        }
    }
}

impl fmt::Display for CoinColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoinColor::Red => "red",
            CoinColor::Blue => "blue",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }

    fn cell(self) -> usize {
        self.row * GRID + self.col
    }

    fn from_cell(c: usize) -> Self {
        Pos::new(c / GRID, c % GRID)
    }

    /// Moves one cell, staying put at the border.
    pub fn moved(self, m: Move) -> Self {
        match m {
            Move::Up => Pos::new(self.row.saturating_sub(1), self.col),
            Move::Down => Pos::new((self.row + 1).min(GRID - 1), self.col),
            Move::Left => Pos::new(self.row, self.col.saturating_sub(1)),
            Move::Right => Pos::new(self.row, (self.col + 1).min(GRID - 1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoinGameState {
    pub red_pos: Pos,
    pub blue_pos: Pos,
    pub coin_pos: Pos,
    pub coin_color: CoinColor,
    pub step: usize,
}

/// What changed in one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub moves: [Move; 2],
    pub rewards: [f64; 2],
    /// Colour of the coin each player picked up, if any.
    pub pickups: [Option<CoinColor>; 2],
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> CoinColor {
    if rng.random::<bool>() {
        CoinColor::Red
    } else {
        CoinColor::Blue
    }
}

fn spawn_coin<R: Rng + ?Sized>(red: Pos, blue: Pos, rng: &mut R) -> Pos {
    let free: Vec<usize> = (0..GRID * GRID)
        .filter(|&c| c != red.cell() && c != blue.cell())
        .collect();
    Pos::from_cell(free[rng.random_range(0..free.len())])
}

impl CoinGameState {
    /// Distinct random agent cells, a coin on a third cell, step 0.
    pub fn reset<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let red = rng.random_range(0..GRID * GRID);
        let mut blue = rng.random_range(0..GRID * GRID - 1);
        if blue >= red {
            blue += 1;
        }
        let (red_pos, blue_pos) = (Pos::from_cell(red), Pos::from_cell(blue));
        let coin_pos = spawn_coin(red_pos, blue_pos, rng);
        CoinGameState {
            red_pos,
            blue_pos,
            coin_pos,
            coin_color: random_color(rng),
            step: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.step >= EPISODE_LEN
    }

    pub fn position(&self, player: usize) -> Pos {
        if player == 0 {
            self.red_pos
        } else {
            self.blue_pos
        }
    }

    /// Advances one step with simultaneous moves.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        red: Move,
        blue: Move,
        rng: &mut R,
    ) -> Result<StepRecord> {
        if self.is_done() {
            return Err(Error::Contract(format!(
                "episode already ended after {EPISODE_LEN} steps"
            )));
        }
        self.red_pos = self.red_pos.moved(red);
        self.blue_pos = self.blue_pos.moved(blue);
        let mut rewards = [0.0; 2];
        let mut pickups = [None; 2];
        for player in 0..2 {
            if self.position(player) == self.coin_pos {
                pickups[player] = Some(self.coin_color);
                rewards[player] += 1.0;
                if self.coin_color != CoinColor::of_player(player) {
                    rewards[1 - player] -= 2.0;
                }
            }
        }
        if pickups.iter().any(Option::is_some) {
            self.coin_pos = spawn_coin(self.red_pos, self.blue_pos, rng);
            self.coin_color = random_color(rng);
        }
        self.step += 1;
        Ok(StepRecord {
            moves: [red, blue],
            rewards,
            pickups,
        })
    }

    /// Four flattened 3×3 planes: red agent, blue agent, red coin, blue coin.
    pub fn encode(&self) -> [f64; STATE_DIM] {
        let mut x = [0.0; STATE_DIM];
        let cells = GRID * GRID;
        x[self.red_pos.cell()] = 1.0;
        x[cells + self.blue_pos.cell()] = 1.0;
        let plane = match self.coin_color {
            CoinColor::Red => 2,
            CoinColor::Blue => 3,
        };
        x[plane * cells + self.coin_pos.cell()] = 1.0;
        x
    }
}

/// All steps of one episode.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeLog {
    pub steps: Vec<StepRecord>,
}

/// Pickup counts of one player: (own colour, total).
fn pickup_counts<'a>(steps: impl Iterator<Item = &'a StepRecord>, player: usize) -> (usize, usize) {
    let own = CoinColor::of_player(player);
    steps.fold((0, 0), |(o, t), s| match s.pickups[player] {
        Some(c) => (o + usize::from(c == own), t + 1),
        None => (o, t),
    })
}

impl EpisodeLog {
    pub fn total_rewards(&self) -> [f64; 2] {
        self.steps.iter().fold([0.0; 2], |acc, s| {
            [acc[0] + s.rewards[0], acc[1] + s.rewards[1]]
        })
    }

    pub fn pickups(&self, player: usize) -> usize {
        pickup_counts(self.steps.iter(), player).1
    }
}

/// Share of a player's pickups that had its own colour; `None` without pickups.
pub fn own_color_fraction(log: &EpisodeLog, player: usize) -> Option<f64> {
    let (own, total) = pickup_counts(log.steps.iter(), player);
    (total > 0).then(|| own as f64 / total as f64)
}

/// [`own_color_fraction`] pooled over several episodes.
pub fn pooled_own_color_fraction(logs: &[EpisodeLog], player: usize) -> Option<f64> {
    let (own, total) = pickup_counts(logs.iter().flat_map(|l| l.steps.iter()), player);
    (total > 0).then(|| own as f64 / total as f64)
}

/// One-hidden-layer rectifier network.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyNet {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    /// `n_hidden × n_in`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `n_out × n_hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

impl TinyNet {
    /// Uniform initialization in `±1/√fan_in`, zero biases.
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Self {
        let s1 = 1.0 / (n_in as f64).sqrt();
        let s2 = 1.0 / (n_hidden as f64).sqrt();
        TinyNet {
            n_in,
            n_hidden,
            n_out,
            w1: (0..n_hidden * n_in)
                .map(|_| rng.random_range(-s1..s1))
                .collect(),
            b1: vec![0.0; n_hidden],
            w2: (0..n_out * n_hidden)
                .map(|_| rng.random_range(-s2..s2))
                .collect(),
            b2: vec![0.0; n_out],
        }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        let pre: Vec<f64> = (0..self.n_hidden)
            .map(|j| {
                let row = &self.w1[j * self.n_in..(j + 1) * self.n_in];
                self.b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = pre.iter().map(|z| z.max(0.0)).collect();
        let out = (0..self.n_out)
            .map(|o| {
                let row = &self.w2[o * self.n_hidden..(o + 1) * self.n_hidden];
                self.b2[o] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        Forward { pre, hidden, out }
    }

    /// Adds `∂(dout · out)/∂params` into `grad` (same layout as [`TinyNet::params`]).
    pub fn accumulate_backward(&self, x: &[f64], fwd: &Forward, dout: &[f64], grad: &mut [f64]) {
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        let mut dh = vec![0.0; self.n_hidden];
        for o in 0..self.n_out {
            let d = dout[o];
            if d == 0.0 {
                continue;
            }
            gb2[o] += d;
            let row = o * self.n_hidden;
            for j in 0..self.n_hidden {
                gw2[row + j] += d * fwd.hidden[j];
                dh[j] += d * self.w2[row + j];
            }
        }
        for j in 0..self.n_hidden {
            if fwd.pre[j] <= 0.0 || dh[j] == 0.0 {
                continue;
            }
            gb1[j] += dh[j];
            let row = j * self.n_in;
            for (i, xi) in x.iter().enumerate() {
                if *xi != 0.0 {
                    gw1[row + i] += dh[j] * xi;
                }
            }
        }
    }

    /// Parameters flattened as w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    /// `params += scale · direction`.
    pub fn add_scaled(&mut self, direction: &[f64], scale: f64) {
        let mut p = self.params();
        for (x, d) in p.iter_mut().zip(direction) {
            *x += scale * d;
        }
        self.set_params(&p);
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Gradient of `Σ_t A_t log π(a_t | s_t)` for a softmax policy network.
pub fn policy_grad(
    net: &TinyNet,
    states: &[[f64; STATE_DIM]],
    actions: &[Move],
    advantages: &[f64],
) -> Vec<f64> {
    let mut grad = vec![0.0; net.n_params()];
    for ((x, a), adv) in states.iter().zip(actions).zip(advantages) {
        if *adv == 0.0 {
            continue;
        }
        let fwd = net.forward(x);
        let probs = softmax(&fwd.out);
        let dout: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(k, p)| adv * (f64::from(u8::from(k == a.index())) - p))
            .collect();
        net.accumulate_backward(x, &fwd, &dout, &mut grad);
    }
    grad
}

/// Gradient of `½ Σ_t (V(s_t) - G_t)²` for a scalar value network.
pub fn critic_grad(net: &TinyNet, states: &[[f64; STATE_DIM]], returns: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; net.n_params()];
    for (x, g) in states.iter().zip(returns) {
        let fwd = net.forward(x);
        net.accumulate_backward(x, &fwd, &[fwd.out[0] - g], &mut grad);
    }
    grad
}

/// `G_t = Σ_k γ^k r_{t+k}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// A policy network, its critic and their optimizer states.
#[derive(Clone, Debug)]
pub struct ActorCritic {
    pub policy: TinyNet,
    /// Value of the full joint state (both positions and the coin).
    pub critic: TinyNet,
    policy_opt: Stepper,
    critic_opt: Stepper,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rule: StepRule, rng: &mut R) -> Self {
        let policy = TinyNet::new(STATE_DIM, hidden, N_MOVES, rng);
        let critic = TinyNet::new(STATE_DIM, hidden, 1, rng);
        let policy_opt = Stepper::new(rule, policy.n_params());
        let critic_opt = Stepper::new(rule, critic.n_params());
        ActorCritic {
            policy,
            critic,
            policy_opt,
            critic_opt,
        }
    }

    pub fn action_probs(&self, state: &[f64; STATE_DIM]) -> Vec<f64> {
        softmax(&self.policy.forward(state).out)
    }

    pub fn value(&self, state: &[f64; STATE_DIM]) -> f64 {
        self.critic.forward(state).out[0]
    }
}

/// States, actions and own rewards of one agent over an episode.
#[derive(Clone, Debug, Default)]
pub struct Rollout {
    pub states: Vec<[f64; STATE_DIM]>,
    pub actions: Vec<Move>,
    pub rewards: Vec<f64>,
}

/// One actor-critic step on an episode: the policy ascends the
/// advantage-weighted log-likelihood, the critic regresses on discounted
/// returns. Advantages use the critic before its update.
pub fn actor_critic_update(ac: &mut ActorCritic, rollout: &Rollout, lr: f64, gamma: f64) {
    let returns = discounted_returns(&rollout.rewards, gamma);
    let advantages: Vec<f64> = rollout
        .states
        .iter()
        .zip(&returns)
        .map(|(s, g)| g - ac.value(s))
        .collect();
    let pg = policy_grad(&ac.policy, &rollout.states, &rollout.actions, &advantages);
    let dir = ac.policy_opt.direction(&pg);
    ac.policy.add_scaled(&dir, lr);
    let cg = critic_grad(&ac.critic, &rollout.states, &returns);
    let dir = ac.critic_opt.direction(&cg);
    ac.critic.add_scaled(&dir, -lr);
}

fn sample_move<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Move {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Move::from_index(k);
        }
    }
    Move::from_index(N_MOVES - 1)
}

/// A move chooser for one side of the game.
pub trait Controller {
    fn choose(&mut self, state: &CoinGameState, player: usize, rng: &mut ChaCha8Rng) -> Move;
}

/// Uniformly random moves.
pub struct RandomController;

impl Controller for RandomController {
    fn choose(&mut self, _: &CoinGameState, _: usize, rng: &mut ChaCha8Rng) -> Move {
        Move::from_index(rng.random_range(0..N_MOVES))
    }
}

/// Walks the shortest path to the coin regardless of its colour, closing
/// the row gap first.
pub struct GreedyController;

impl Controller for GreedyController {
    fn choose(&mut self, state: &CoinGameState, player: usize, _: &mut ChaCha8Rng) -> Move {
        greedy_move(state.position(player), state.coin_pos)
    }
}

pub fn greedy_move(from: Pos, to: Pos) -> Move {
    if from.row > to.row {
        Move::Up
    } else if from.row < to.row {
        Move::Down
    } else if from.col > to.col {
        Move::Left
    } else {
        Move::Right
    }
}

/// Plays one episode. Environment randomness comes from `env_rng`,
/// controller randomness from `act_rng`.
pub fn play_episode(
    red: &mut dyn Controller,
    blue: &mut dyn Controller,
    env_rng: &mut ChaCha8Rng,
    act_rng: &mut ChaCha8Rng,
) -> Result<EpisodeLog> {
    let mut state = CoinGameState::reset(env_rng);
    let mut log = EpisodeLog::default();
    while !state.is_done() {
        let a = red.choose(&state, 0, act_rng);
        let b = blue.choose(&state, 1, act_rng);
        log.steps.push(state.step(a, b, env_rng)?);
    }
    Ok(log)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoinGameConfig {
    pub episodes: usize,
    pub lr: f64,
    pub gamma: f64,
    pub hidden: usize,
    pub step_rule: StepRule,
}

impl Default for CoinGameConfig {
    fn default() -> Self {
        CoinGameConfig {
            episodes: 5000,
            lr: DEFAULT_LR,
            gamma: DEFAULT_GAMMA,
            hidden: DEFAULT_HIDDEN,
            step_rule: StepRule::Adam,
        }
    }
}

/// Per-episode metrics of a training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub rewards: [f64; 2],
    pub own_color: [Option<f64>; 2],
    pub pickups: [usize; 2],
}

impl EpisodeSummary {
    pub fn from_log(episode: usize, log: &EpisodeLog) -> Self {
        EpisodeSummary {
            episode,
            rewards: log.total_rewards(),
            own_color: [own_color_fraction(log, 0), own_color_fraction(log, 1)],
            pickups: [log.pickups(0), log.pickups(1)],
        }
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards[0] + self.rewards[1]
    }
}

/// Trains two selfish actor-critic agents and returns per-episode metrics.
pub fn train(cfg: &CoinGameConfig, seed: u64) -> Result<Vec<EpisodeSummary>> {
    let mut init_rng = stream(seed, Stream::NetInit);
    let mut env_rng = stream(seed, Stream::Environment);
    let mut act_rng = stream(seed, Stream::PolicySampling);
    let mut agents = [
        ActorCritic::new(cfg.hidden, cfg.step_rule, &mut init_rng),
        ActorCritic::new(cfg.hidden, cfg.step_rule, &mut init_rng),
    ];
    let mut out = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let mut state = CoinGameState::reset(&mut env_rng);
        let mut rollouts = [Rollout::default(), Rollout::default()];
        let mut log = EpisodeLog::default();
        while !state.is_done() {
            let x = state.encode();
            let moves = [
                sample_move(&agents[0].action_probs(&x), &mut act_rng),
                sample_move(&agents[1].action_probs(&x), &mut act_rng),
            ];
            let rec = state.step(moves[0], moves[1], &mut env_rng)?;
            for (i, r) in rollouts.iter_mut().enumerate() {
                r.states.push(x);
                r.actions.push(moves[i]);
                r.rewards.push(rec.rewards[i]);
            }
            log.steps.push(rec);
        }
        for (ac, r) in agents.iter_mut().zip(&rollouts) {
            actor_critic_update(ac, r, cfg.lr, cfg.gamma);
        }
        if agents
            .iter()
            .any(|a| !a.policy.params().iter().all(|p| p.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "coin game policy parameters after episode {episode}"
            )));
        }
        out.push(EpisodeSummary::from_log(episode, &log));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn state(
        red: (usize, usize),
        blue: (usize, usize),
        coin: (usize, usize),
        color: CoinColor,
    ) -> CoinGameState {
        CoinGameState {
            red_pos: Pos::new(red.0, red.1),
            blue_pos: Pos::new(blue.0, blue.1),
            coin_pos: Pos::new(coin.0, coin.1),
            coin_color: color,
            step: 0,
        }
    }

    #[test]
    fn reset_is_deterministic_and_valid() {
        let a = CoinGameState::reset(&mut stream(3, Stream::Environment));
        let b = CoinGameState::reset(&mut stream(3, Stream::Environment));
        assert_eq!(a, b);
        assert_eq!(a.step, 0);
        assert_ne!(a.red_pos, a.blue_pos);
        assert_ne!(a.coin_pos, a.red_pos);
        assert_ne!(a.coin_pos, a.blue_pos);
    }

    #[test]
    fn reset_colors_balanced() {
        let mut rng = stream(4, Stream::Environment);
        let red = (0..10_000)
            .filter(|_| CoinGameState::reset(&mut rng).coin_color == CoinColor::Red)
            .count();
        assert!((red as f64 / 10_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn pickup_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = state((0, 0), (2, 2), (0, 1), CoinColor::Red);
        let r = s.step(Move::Right, Move::Up, &mut rng).unwrap();
        assert_eq!(r.rewards, [1.0, 0.0]);
        assert_eq!(r.pickups, [Some(CoinColor::Red), None]);

        let mut s = state((0, 0), (2, 2), (0, 1), CoinColor::Blue);
        assert_eq!(
            s.step(Move::Right, Move::Up, &mut rng).unwrap().rewards,
            [1.0, -2.0]
        );

        let mut s = state((0, 0), (0, 2), (0, 1), CoinColor::Red);
        let r = s.step(Move::Right, Move::Left, &mut rng).unwrap();
        assert_eq!(r.rewards, [-1.0, 1.0]);
        assert_eq!(s.step, 1);
        assert_ne!(s.coin_pos, s.red_pos);
    }

    #[test]
    fn terminated_episode_is_contract_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = CoinGameState::reset(&mut rng);
        for _ in 0..EPISODE_LEN {
            s.step(Move::Up, Move::Down, &mut rng).unwrap();
        }
        assert!(s.is_done());
        assert!(matches!(
            s.step(Move::Up, Move::Up, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn own_color_examples() {
        let rec = |c: Option<CoinColor>| StepRecord {
            moves: [Move::Up; 2],
            rewards: [0.0; 2],
            pickups: [c, None],
        };
        let only_own = EpisodeLog {
            steps: vec![rec(Some(CoinColor::Red)); 3],
        };
        assert_eq!(own_color_fraction(&only_own, 0), Some(1.0));
        let mixed = EpisodeLog {
            steps: vec![
                rec(Some(CoinColor::Red)),
                rec(None),
                rec(Some(CoinColor::Red)),
                rec(Some(CoinColor::Blue)),
                rec(Some(CoinColor::Red)),
            ],
        };
        assert_eq!(own_color_fraction(&mixed, 0), Some(0.75));
        assert_eq!(own_color_fraction(&mixed, 1), None);
    }

    #[test]
    fn random_pair_own_color_half() {
        let mut env = stream(5, Stream::Environment);
        let mut act = stream(5, Stream::PolicySampling);
        let logs: Vec<_> = (0..1000)
            .map(|_| {
                play_episode(
                    &mut RandomController,
                    &mut RandomController,
                    &mut env,
                    &mut act,
                )
                .unwrap()
            })
            .collect();
        for p in 0..2 {
            let f = pooled_own_color_fraction(&logs, p).unwrap();
            assert!((f - 0.5).abs() < 0.03, "player {p}: {f}");
        }
    }

    #[test]
    fn reward_accounting_identity() {
        let mut env = stream(6, Stream::Environment);
        let mut act = stream(6, Stream::PolicySampling);
        for _ in 0..200 {
            let log = play_episode(
                &mut RandomController,
                &mut GreedyController,
                &mut env,
                &mut act,
            )
            .unwrap();
            let mut expect = 0.0;
            for s in &log.steps {
                for p in 0..2 {
                    if let Some(c) = s.pickups[p] {
                        expect += 1.0;
                        if c != CoinColor::of_player(p) {
                            expect -= 2.0;
                        }
                    }
                }
            }
            let [a, b] = log.total_rewards();
            assert_abs_diff_eq!(a + b, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_seeds_identical_logs() {
        let run = || {
            let mut env = stream(7, Stream::Environment);
            let mut act = stream(7, Stream::PolicySampling);
            format!(
                "{:?}",
                play_episode(
                    &mut RandomController,
                    &mut RandomController,
                    &mut env,
                    &mut act
                )
                .unwrap()
            )
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn greedy_pair_zero_sum_in_expectation() {
        let mut env = stream(8, Stream::Environment);
        let mut act = stream(8, Stream::PolicySampling);
        let n = 10_000;
        let total: f64 = (0..n)
            .map(|_| {
                let log = play_episode(
                    &mut GreedyController,
                    &mut GreedyController,
                    &mut env,
                    &mut act,
                )
                .unwrap();
                let [a, b] = log.total_rewards();
                a + b
            })
            .sum();
        assert!((total / n as f64).abs() < 3.0);
    }

    fn fd_check(net: &TinyNet, f: impl Fn(&TinyNet) -> f64, analytic: &[f64]) {
        let p0 = net.params();
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..p0.len() {
            let mut q = net.clone();
            let mut p = p0.clone();
            p[j] += h;
            q.set_params(&p);
            let up = f(&q);
            p[j] -= 2.0 * h;
            q.set_params(&p);
            let down = f(&q);
            let fd = (up - down) / (2.0 * h);
            num += (fd - analytic[j]).powi(2);
            den += fd * fd;
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-4, "relative error {rel}");
    }

    fn short_episode() -> (Vec<[f64; STATE_DIM]>, Vec<Move>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = CoinGameState::reset(&mut rng);
        let moves = [Move::Up, Move::Left, Move::Down];
        let mut xs = Vec::new();
        let mut rs = Vec::new();
        for m in moves {
            xs.push(s.encode());
            rs.push(s.step(m, Move::Right, &mut rng).unwrap().rewards[0] + 0.3);
        }
        (xs, moves.to_vec(), rs)
    }

    #[test]
    fn policy_grad_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = TinyNet::new(STATE_DIM, 16, N_MOVES, &mut rng);
        let (xs, moves, _) = short_episode();
        let adv = [0.7, -1.3, 2.1];
        let objective = |n: &TinyNet| -> f64 {
            xs.iter()
                .zip(&moves)
                .zip(adv)
                .map(|((x, m), a)| a * softmax(&n.forward(x).out)[m.index()].ln())
                .sum()
        };
        fd_check(&net, objective, &policy_grad(&net, &xs, &moves, &adv));
    }

    #[test]
    fn critic_grad_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = TinyNet::new(STATE_DIM, DEFAULT_HIDDEN, 1, &mut rng);
        let (xs, _, rs) = short_episode();
        let g = discounted_returns(&rs, 0.99);
        let loss = |n: &TinyNet| -> f64 {
            xs.iter()
                .zip(&g)
                .map(|(x, t)| 0.5 * (n.forward(x).out[0] - t).powi(2))
                .sum()
        };
        fd_check(&net, loss, &critic_grad(&net, &xs, &g));
    }

    #[test]
    fn zero_advantage_leaves_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut ac = ActorCritic::new(DEFAULT_HIDDEN, StepRule::Adam, &mut rng);
        let (xs, moves, _) = short_episode();
        // Rewards equal to the critic's own predictions give zero advantage
        // for the last step; make every step zero-advantage with γ = 0.
        let rewards: Vec<f64> = xs.iter().map(|x| ac.value(x)).collect();
        let before = ac.policy.clone();
        actor_critic_update(
            &mut ac,
            &Rollout {
                states: xs,
                actions: moves,
                rewards,
            },
            0.1,
            0.0,
        );
        for (a, b) in ac.policy.params().iter().zip(before.params()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn discounted_returns_example() {
        let g = discounted_returns(&[1.0, 0.0, 2.0], 0.5);
        assert_eq!(g, vec![1.5, 1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn positions_stay_on_grid(moves in proptest::collection::vec((0usize..4, 0usize..4), 1..100), seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = CoinGameState::reset(&mut rng);
            for (a, b) in moves {
                s.step(Move::from_index(a), Move::from_index(b), &mut rng).unwrap();
                for p in [s.red_pos, s.blue_pos, s.coin_pos] {
                    prop_assert!(p.row < GRID && p.col < GRID);
                }
                prop_assert!(s.coin_pos != s.red_pos && s.coin_pos != s.blue_pos);
            }
        }
    }
}
