//! The episode loop for matrix games with learners and an optional planner.

use crate::error::{Error, Result};
use crate::games::{effective_payoffs, outcome_index, outcome_probs, GamePayoffs, MatrixGame};
use crate::learners::{log_prob_grad, RunningMeanCritic, SigmoidLearner};
use crate::optim::Stepper;
use crate::planner::{
    exact_planner_grad, pg_planner_grad, planner_step, sample_actions, PlannerGrad, PlannerMode,
    PlannerPolicy, Step, Trajectory,
};
use crate::rng::{stream, Stream};

use super::config::{ExperimentConfig, LearnerKind};

/// Extra columns logged for two-player games.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDiagnostics {
    /// Deterministic extra reward of each outcome (CC, CD, DC, DD) for player 1.
    pub rp1_by_outcome: [f64; 4],
    /// Same for player 2.
    pub rp2_by_outcome: [f64; 4],
    /// Fear and greed of each player's view of the modified game.
    pub fear: [f64; 2],
    pub greed: [f64; 2],
}

/// State logged after one episode's updates.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub episode: usize,
    pub planner_active: bool,
    /// Outcome sampled in this episode.
    pub outcome: usize,
    /// Cooperation probability of every player after the updates.
    pub coop: Vec<f64>,
    /// Probability that everybody cooperates.
    pub p_all_c: f64,
    /// Expected base welfare at the logged probabilities.
    pub welfare: f64,
    /// Extra rewards paid in this episode.
    pub extra_rewards: Vec<f64>,
    pub abs_extra: f64,
    pub cum_abs_extra: f64,
    pub pair: Option<PairDiagnostics>,
}

impl EpisodeRow {
    pub fn mean_coop(&self) -> f64 {
        self.coop.iter().sum::<f64>() / self.coop.len() as f64
    }
}

/// Everything one seed produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
}

impl SeedRun {
    pub fn last(&self) -> &EpisodeRow {
        self.rows.last().expect("a run has at least one episode")
    }

    /// Mean over episodes of the summed absolute extra reward.
    pub fn aar(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_extra).sum::<f64>() / self.rows.len() as f64
    }
}

fn pair_diagnostics(
    base: Option<&GamePayoffs>,
    table: Option<&[Vec<f64>]>,
) -> Option<PairDiagnostics> {
    let g = base?;
    let mut extra = [(0.0, 0.0); 4];
    if let Some(t) = table {
        for (o, e) in extra.iter_mut().enumerate() {
            *e = (t[o][0], t[o][1]);
        }
    }
    let eff = effective_payoffs(g, &extra);
    Some(PairDiagnostics {
        rp1_by_outcome: extra.map(|e| e.0),
        rp2_by_outcome: extra.map(|e| e.1),
        fear: [eff.player1.fear(), eff.player2.fear()],
        greed: [eff.player1.greed(), eff.player2.greed()],
    })
}

fn non_finite(seed: u64, episode: usize, what: &str, values: &[f64]) -> Error {
    Error::NonFinite(format!(
        "seed {seed}, episode {episode}: {what} = {values:?}"
    ))
}

/// Runs one seed of the learning loop on `game`.
///
/// Per episode: sample the learners' actions, sample the planner's rewards,
/// compute learner and planner gradients at the episode's starting
/// parameters, then update learners and planner. `pair_game` enables the
/// two-player diagnostics columns.
pub fn run_seed<G: MatrixGame + ?Sized>(
    game: &G,
    pair_game: Option<&GamePayoffs>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<SeedRun> {
    let n = game.n_players();
    if n != cfg.n_players {
        return Err(Error::Config(format!(
            "game has {n} players, configuration says {}",
            cfg.n_players
        )));
    }
    let mut action_rng = stream(seed, Stream::Actions);
    let mut noise_rng = stream(seed, Stream::PlannerNoise);
    let mut learners = vec![SigmoidLearner::with_coop_prob(cfg.init_coop, cfg.learner_eta); n];
    let mut critics = vec![RunningMeanCritic::new(cfg.critic_decay); n];
    let mut learner_steps: Vec<Stepper> = (0..n).map(|_| Stepper::new(cfg.step_rule, 1)).collect();
    let mut pp = PlannerPolicy::new(n, cfg.planner.clone());
    let mut planner_stepper = Stepper::new(cfg.step_rule, pp.n_params());
    let mut batch: Vec<Trajectory> = Vec::with_capacity(cfg.planner.batch_size);
    let mut rows = Vec::with_capacity(cfg.episodes);
    let mut cum_abs = 0.0;

    for episode in 0..cfg.episodes {
        let active = cfg.planner_enabled && cfg.turn_off_at.is_none_or(|t| episode < t);
        let coop: Vec<f64> = learners.iter().map(SigmoidLearner::coop_prob).collect();
        let actions = sample_actions(&learners, &mut action_rng);
        let outcome = outcome_index(&actions);
        let rewards: Vec<f64> = (0..n).map(|i| game.outcome_payoff(i, outcome)).collect();
        let (extra, noise) = if !active {
            (vec![0.0; n], Vec::new())
        } else if pp.config.mode == PlannerMode::Estimated {
            pp.sample_rewards(outcome, &mut noise_rng)
        } else {
            (pp.rewards(outcome), Vec::new())
        };

        let learner_grads: Vec<f64> = match cfg.learner_mode {
            LearnerKind::ExactValue => {
                let table = active.then(|| pp.reward_table());
                (0..n)
                    .map(|i| game.value_grad(i, &coop, table.as_deref()))
                    .collect()
            }
            LearnerKind::Sampled => (0..n)
                .map(|i| {
                    let total = rewards[i] + extra[i];
                    let g = log_prob_grad(coop[i], actions[i]) * (total - critics[i].value);
                    critics[i].observe(total);
                    g
                })
                .collect(),
        };

        let planner_grad: Option<PlannerGrad> = if !active {
            None
        } else {
            match pp.config.mode {
                PlannerMode::Exact => Some(exact_planner_grad(game, &learners, &pp)?),
                PlannerMode::Estimated => {
                    batch.push(Trajectory::single(Step {
                        actions: actions.clone(),
                        coop_probs: coop.clone(),
                        rewards: rewards.clone(),
                        planner_rewards: extra.clone(),
                        planner_noise: noise,
                        outcome,
                    }));
                    if batch.len() >= pp.config.batch_size {
                        let g = pg_planner_grad(&batch, &learners, &pp)?;
                        batch.clear();
                        Some(g)
                    } else {
                        None
                    }
                }
            }
        };

        for ((l, s), g) in learners
            .iter_mut()
            .zip(&mut learner_steps)
            .zip(&learner_grads)
        {
            l.apply_update(s.direction(&[*g])[0]);
        }
        if let Some(mut g) = planner_grad {
            if let Some(max) = pp.config.max_grad_norm {
                g.clip_norm(max);
            }
            let dir = planner_stepper.direction(&g.flat());
            let step = PlannerGrad::from_flat(&pp, &dir);
            planner_step(&mut pp, &step);
        }

        let thetas: Vec<f64> = learners.iter().map(|l| l.theta).collect();
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(non_finite(seed, episode, "learner parameters", &thetas));
        }
        if pp.weights.iter().chain(&pp.bias).any(|w| !w.is_finite()) {
            return Err(non_finite(
                seed,
                episode,
                "planner parameters",
                &[pp.weights.clone(), pp.bias.clone()].concat(),
            ));
        }

        let coop_after: Vec<f64> = learners.iter().map(SigmoidLearner::coop_prob).collect();
        let abs_extra: f64 = extra.iter().map(|r| r.abs()).sum();
        cum_abs += abs_extra;
        let still_active = cfg.planner_enabled && cfg.turn_off_at.is_none_or(|t| episode + 1 < t);
        let table = (n == 2 && still_active).then(|| pp.reward_table());
        rows.push(EpisodeRow {
            episode,
            planner_active: active,
            outcome,
            p_all_c: outcome_probs(&coop_after)[0],
            welfare: game.welfare(&coop_after),
            coop: coop_after,
            extra_rewards: extra,
            abs_extra,
            cum_abs_extra: cum_abs,
            pair: pair_diagnostics(pair_game, table.as_deref()),
        });
    }
    Ok(SeedRun { seed, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::MultiPlayerPD;
    use crate::optim::StepRule;

    fn small(mode: LearnerKind) -> ExperimentConfig {
        ExperimentConfig {
            episodes: 300,
            learner_mode: mode,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_rows() {
        let cfg = small(LearnerKind::Sampled);
        let g = GamePayoffs::stag_hunt();
        assert_eq!(
            run_seed(&g, Some(&g), &cfg, 3).unwrap(),
            run_seed(&g, Some(&g), &cfg, 3).unwrap()
        );
        assert_ne!(
            run_seed(&g, Some(&g), &cfg, 3).unwrap(),
            run_seed(&g, Some(&g), &cfg, 4).unwrap()
        );
    }

    #[test]
    fn welfare_column_matches_expected_values() {
        let mut cfg = small(LearnerKind::ExactValue);
        cfg.planner.mode = PlannerMode::Estimated;
        let g = GamePayoffs::chicken();
        let run = run_seed(&g, Some(&g), &cfg, 1).unwrap();
        for r in &run.rows {
            let (v1, v2) = g.expected_values(r.coop[0], r.coop[1]).unwrap();
            assert!((r.welfare - (v1 + v2)).abs() <= 1e-12);
            assert!((r.p_all_c - r.coop[0] * r.coop[1]).abs() <= 1e-15);
        }
    }

    #[test]
    fn planner_off_pays_nothing() {
        let mut cfg = small(LearnerKind::Sampled);
        cfg.planner_enabled = false;
        let g = GamePayoffs::prisoners_dilemma();
        let run = run_seed(&g, Some(&g), &cfg, 0).unwrap();
        assert!(run
            .rows
            .iter()
            .all(|r| r.abs_extra == 0.0 && !r.planner_active));
        let d = run.last().pair.as_ref().unwrap();
        assert_eq!(d.fear, [g.fear(); 2]);
        assert_eq!(d.greed, [g.greed(); 2]);
    }

    #[test]
    fn turn_off_stops_rewards() {
        let mut cfg = small(LearnerKind::Sampled);
        cfg.turn_off_at = Some(100);
        let g = GamePayoffs::stag_hunt();
        let run = run_seed(&g, Some(&g), &cfg, 0).unwrap();
        assert!(run.rows[..100].iter().all(|r| r.planner_active));
        assert!(run.rows[100..]
            .iter()
            .all(|r| !r.planner_active && r.abs_extra == 0.0));
        assert_eq!(run.rows[99].pair.as_ref().unwrap().rp1_by_outcome, [0.0; 4]);
        assert!(run.rows[98]
            .pair
            .as_ref()
            .unwrap()
            .rp1_by_outcome
            .iter()
            .any(|r| *r != 0.0));
    }

    #[test]
    fn two_player_paths_agree() {
        for mode in [LearnerKind::ExactValue, LearnerKind::Sampled] {
            let cfg = small(mode);
            let pair = GamePayoffs::prisoners_dilemma();
            let multi = MultiPlayerPD::new(2).unwrap();
            let a = run_seed(&pair, None, &cfg, 5).unwrap();
            let b = run_seed(&multi, None, &cfg, 5).unwrap();
            for (x, y) in a.rows.iter().zip(&b.rows) {
                assert_eq!(x.outcome, y.outcome);
                for (p, q) in x.coop.iter().zip(&y.coop) {
                    assert!((p - q).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn nan_aborts_with_context() {
        let mut cfg = small(LearnerKind::ExactValue);
        cfg.step_rule = StepRule::Sgd;
        cfg.learner_eta = f64::NAN;
        let g = GamePayoffs::prisoners_dilemma();
        match run_seed(&g, Some(&g), &cfg, 0) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("seed 0, episode 0")),
            other => panic!("{other:?}"),
        }
    }
}
