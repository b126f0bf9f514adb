//! Experiment orchestration: seeded runs, summaries and CSV output.

mod config;
mod matrix;
mod output;

use std::path::Path;

use rayon::prelude::*;

use crate::coingame::{self, EpisodeSummary};
use crate::error::{Error, Result};
use crate::games::MultiPlayerPD;
use crate::gtft::{round_robin, MatchResult};
use crate::rng::{stream, Stream};

pub use config::{ExperimentConfig, LearnerKind};
pub use matrix::{run_seed, EpisodeRow, PairDiagnostics, SeedRun};
pub use output::{
    audit, read_summary_csv, seed_csv_header, write_coingame_csv, write_gtft_csv, write_seed_csv,
    write_summary_csv, AuditReport, SUMMARY_FILE,
};

/// Sample mean and standard deviation (`n - 1` denominator).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Absent for a single sample.
    pub std: Option<f64>,
}

/// Mean and sample standard deviation of `values`.
///
/// Panics on an empty slice.
pub fn summarize(values: &[f64]) -> Stat {
    assert!(!values.is_empty(), "cannot summarize zero samples");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    Stat { mean, std }
}

/// Final metrics of one seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    /// Probability that everybody cooperates, from the final parameters.
    pub p_all_c: f64,
    pub welfare: f64,
    pub aar: f64,
    pub mean_coop: f64,
}

impl SeedSummary {
    pub fn of(run: &SeedRun) -> Self {
        let last = run.last();
        SeedSummary {
            seed: run.seed,
            p_all_c: last.p_all_c,
            welfare: last.welfare,
            aar: run.aar(),
            mean_coop: last.mean_coop(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub per_seed: Vec<SeedSummary>,
    pub p_all_c: Stat,
    pub welfare: Stat,
    pub aar: Stat,
    pub mean_coop: Stat,
}

impl RunSummary {
    /// Aggregates per-seed rows, which must be non-empty.
    pub fn from_seeds(per_seed: Vec<SeedSummary>) -> Self {
        let col =
            |f: fn(&SeedSummary) -> f64| summarize(&per_seed.iter().map(f).collect::<Vec<_>>());
        RunSummary {
            p_all_c: col(|s| s.p_all_c),
            welfare: col(|s| s.welfare),
            aar: col(|s| s.aar),
            mean_coop: col(|s| s.mean_coop),
            per_seed,
        }
    }
}

/// Per-seed logs together with their summary.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub runs: Vec<SeedRun>,
}

fn collect_runs(
    cfg: &ExperimentConfig,
    run: impl Fn(u64) -> Result<SeedRun> + Sync + Send,
) -> Result<RunOutput> {
    let runs: Vec<SeedRun> = cfg
        .seed_list()
        .into_par_iter()
        .map(run)
        .collect::<Result<_>>()?;
    let summary = RunSummary::from_seeds(runs.iter().map(SeedSummary::of).collect());
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &runs, &summary)?;
    }
    Ok(RunOutput { summary, runs })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_outputs(dir: &Path, runs: &[SeedRun], summary: &RunSummary) -> Result<()> {
    ensure_dir(dir)?;
    for run in runs {
        write_seed_csv(&dir.join(format!("seed_{}.csv", run.seed)), run)?;
    }
    write_summary_csv(&dir.join(SUMMARY_FILE), summary)
}

/// Two-player matrix game experiment over all configured seeds.
pub fn run_matrix_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.n_players != 2 {
        return Err(Error::Config(format!(
            "matrix game runs have two players, configuration says {} (use the multi-player run)",
            cfg.n_players
        )));
    }
    log::info!(
        "{}: {} seeds x {} episodes, planner {} ({}), learners {}",
        cfg.game_name,
        cfg.seeds,
        cfg.episodes,
        if cfg.planner_enabled { "on" } else { "off" },
        cfg.planner.mode,
        cfg.learner_mode
    );
    collect_runs(cfg, |seed| run_seed(&cfg.game, Some(&cfg.game), cfg, seed))
}

/// Multi-player Prisoner's Dilemma experiment with `cfg.n_players` players.
pub fn run_multiplayer(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let game = MultiPlayerPD::new(cfg.n_players)?;
    log::info!(
        "multi-player PD with {} players, {} seeds",
        cfg.n_players,
        cfg.seeds
    );
    collect_runs(cfg, |seed| run_seed(&game, None, cfg, seed))
}

/// Round-robin GTFT tournaments, one per seed.
pub fn run_gtft(cfg: &ExperimentConfig) -> Result<Vec<(u64, Vec<MatchResult>)>> {
    cfg.validate()?;
    let results: Vec<(u64, Vec<MatchResult>)> = cfg
        .seed_list()
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(seed, Stream::Tournament);
            round_robin(&cfg.game, &cfg.gtft_agents, &cfg.gtft, &mut rng).map(|m| (seed, m))
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        for (seed, matches) in &results {
            write_gtft_csv(&dir.join(format!("gtft_seed_{seed}.csv")), matches)?;
        }
    }
    Ok(results)
}

/// Coin Game training runs, one per seed.
pub fn run_coingame(cfg: &ExperimentConfig) -> Result<Vec<(u64, Vec<EpisodeSummary>)>> {
    cfg.validate()?;
    let results: Vec<(u64, Vec<EpisodeSummary>)> = cfg
        .seed_list()
        .into_par_iter()
        .map(|seed| coingame::train(&cfg.coingame, seed).map(|e| (seed, e)))
        .collect::<Result<_>>()?;
    if let Some(dir) = &cfg.out {
        ensure_dir(dir)?;
        for (seed, episodes) in &results {
            write_coingame_csv(&dir.join(format!("coingame_seed_{seed}.csv")), episodes)?;
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn summarize_examples() {
        let s = summarize(&[0.7]);
        assert_eq!(s.mean, 0.7);
        assert_eq!(s.std, None);
        let s = summarize(&[0.98, 1.00]);
        assert_abs_diff_eq!(s.mean, 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!(s.std.unwrap(), 0.0141421356, epsilon = 1e-9);
        assert_eq!(summarize(&[0.3, 0.3, 0.3]).std, Some(0.0));
    }

    #[test]
    fn matrix_runs_need_two_players() {
        let cfg = ExperimentConfig {
            n_players: 3,
            ..Default::default()
        };
        assert!(matches!(run_matrix_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn results_ordered_by_seed() {
        let cfg = ExperimentConfig {
            episodes: 50,
            seeds: 4,
            first_seed: 7,
            ..Default::default()
        };
        let out = run_matrix_experiment(&cfg).unwrap();
        let seeds: Vec<u64> = out.summary.per_seed.iter().map(|s| s.seed).collect();
        assert_eq!(seeds, vec![7, 8, 9, 10]);
    }
}
