//! Command-line front end for the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use amd_core::harness::{self, ExperimentConfig, RunOutput, Stat};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amd", version, about = "Adaptive mechanism design experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Two-player matrix game with learners and an optional planner.
    Run(Common),
    /// N-player Prisoner's Dilemma.
    Multiplayer(Common),
    /// Round-robin tournament of GTFT and baseline agents.
    Gtft(Common),
    /// Coin Game actor-critic training.
    Coingame(Common),
    /// Recompute a summary from its per-seed CSV files.
    Audit {
        /// Output directory of an earlier run.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pd, chicken, staghunt, or fear:greed.
    #[arg(long)]
    game: Option<String>,
    /// Planner gradient mode: exact or estimated.
    #[arg(long)]
    mode: Option<String>,
    /// Constrain planner rewards to sum to zero.
    #[arg(long)]
    revenue_neutral: bool,
    /// Run without a planner.
    #[arg(long)]
    no_planner: bool,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    first_seed: Option<u64>,
    /// Episode at which the planner stops paying.
    #[arg(long)]
    turn_off_at: Option<usize>,
    #[arg(long)]
    players: Option<usize>,
    /// exact or sampled.
    #[arg(long)]
    learner_mode: Option<String>,
    /// Directory for CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any configuration key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| pairs.push((k.to_string(), v));
        if let Some(v) = &self.game {
            put("game", v.clone());
        }
        if let Some(v) = &self.mode {
            put("mode", v.clone());
        }
        if self.revenue_neutral {
            put("revenue_neutral", "true".into());
        }
        if self.no_planner {
            put("planner", "false".into());
        }
        if let Some(v) = self.episodes {
            put("episodes", v.to_string());
        }
        if let Some(v) = self.seeds {
            put("seeds", v.to_string());
        }
        if let Some(v) = self.first_seed {
            put("first_seed", v.to_string());
        }
        if let Some(v) = self.turn_off_at {
            put("turn_off_at", v.to_string());
        }
        if let Some(v) = self.players {
            put("players", v.to_string());
        }
        if let Some(v) = &self.learner_mode {
            put("learner_mode", v.clone());
        }
        if let Some(v) = &self.out {
            put("out", v.display().to_string());
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got '{o}'"))?;
            put(k.trim(), v.trim().to_string());
        }
        for (k, v) in pairs {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }
}

fn stat(s: Stat) -> String {
    match s.std {
        Some(sd) => format!("{:.4} ± {:.4}", s.mean, sd),
        None => format!("{:.4}", s.mean),
    }
}

fn print_matrix(out: &RunOutput) {
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "seed", "p_all_c", "welfare", "aar", "mean_p_c"
    );
    for s in &out.summary.per_seed {
        println!(
            "{:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            s.seed, s.p_all_c, s.welfare, s.aar, s.mean_coop
        );
    }
    let s = &out.summary;
    println!("p_all_c  {}", stat(s.p_all_c));
    println!("welfare  {}", stat(s.welfare));
    println!("aar      {}", stat(s.aar));
    println!("mean_p_c {}", stat(s.mean_coop));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => print_matrix(&harness::run_matrix_experiment(&c.resolve()?)?),
        Command::Multiplayer(c) => print_matrix(&harness::run_multiplayer(&c.resolve()?)?),
        Command::Gtft(c) => {
            let cfg = c.resolve()?;
            for (seed, matches) in harness::run_gtft(&cfg)? {
                println!("seed {seed}");
                for m in &matches {
                    let [r1, r2] = m.mean_rewards();
                    let cc = m
                        .rounds
                        .iter()
                        .filter(|r| r.actions.iter().all(|a| a.is_cooperate()))
                        .count();
                    println!(
                        "  {:>12} vs {:<12} reward {:.3} / {:.3}  mutual C {:.3}",
                        m.first.to_string(),
                        m.second.to_string(),
                        r1,
                        r2,
                        cc as f64 / m.rounds.len().max(1) as f64
                    );
                }
            }
        }
        Command::Coingame(c) => {
            let cfg = c.resolve()?;
            for (seed, eps) in harness::run_coingame(&cfg)? {
                let tail = &eps[eps.len().saturating_sub(500)..];
                let n = tail.len().max(1) as f64;
                let total = tail.iter().map(|e| e.total_reward()).sum::<f64>() / n;
                let own: Vec<f64> = tail.iter().flat_map(|e| e.own_color).flatten().collect();
                let own_mean = own.iter().sum::<f64>() / own.len().max(1) as f64;
                println!("seed {seed}: last {} episodes, mean total reward {total:.3}, own-colour fraction {own_mean:.3}", tail.len());
            }
        }
        Command::Audit { dir } => {
            let report = harness::audit(&dir)?;
            println!(
                "audit ok: {} seeds, {} values checked",
                report.seeds, report.checked_values
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
