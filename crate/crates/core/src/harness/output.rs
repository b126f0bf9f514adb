//! CSV files written by the harness and the audit that re-derives a
//! summary from them.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use crate::coingame::EpisodeSummary;
use crate::error::{Error, Result};
use crate::gtft::MatchResult;

use super::matrix::SeedRun;
use super::{RunSummary, SeedSummary, Stat};

pub const SUMMARY_FILE: &str = "summary.csv";

/// Largest relative difference the audit tolerates.
const AUDIT_TOL: f64 = 1e-12;

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

struct Sheet {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Sheet {
    fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut sheet = Sheet {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(file),
        };
        sheet.row(header)?;
        Ok(sheet)
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer
            .write_record(fields)
            .map_err(|e| csv_err(&self.path, e))
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

const OUTCOMES: [&str; 4] = ["cc", "cd", "dc", "dd"];

/// Column names of a per-seed file for `n` players.
pub fn seed_csv_header(n: usize, pair: bool) -> Vec<String> {
    let mut h: Vec<String> = vec!["episode".into(), "planner_active".into(), "outcome".into()];
    h.extend((1..=n).map(|i| format!("p_c_{i}")));
    h.extend(["mean_p_c", "p_all_c", "welfare"].map(String::from));
    h.extend((1..=n).map(|i| format!("rp_{i}")));
    h.extend(["abs_rp", "cum_abs_rp"].map(String::from));
    if pair {
        for p in 1..=2 {
            h.extend(OUTCOMES.iter().map(|o| format!("rp{p}_{o}")));
        }
        h.extend(["fear_1", "greed_1", "fear_2", "greed_2"].map(String::from));
    }
    h
}

pub fn write_seed_csv(path: &Path, run: &SeedRun) -> Result<()> {
    let first = run
        .rows
        .first()
        .ok_or_else(|| Error::Contract("cannot write an empty run".into()))?;
    let n = first.coop.len();
    let pair = first.pair.is_some();
    let mut sheet = Sheet::create(path, &seed_csv_header(n, pair))?;
    for r in &run.rows {
        let mut row = vec![
            r.episode.to_string(),
            u8::from(r.planner_active).to_string(),
            r.outcome.to_string(),
        ];
        row.extend(r.coop.iter().map(|x| f(*x)));
        row.extend([f(r.mean_coop()), f(r.p_all_c), f(r.welfare)]);
        row.extend(r.extra_rewards.iter().map(|x| f(*x)));
        row.extend([f(r.abs_extra), f(r.cum_abs_extra)]);
        if let Some(d) = &r.pair {
            row.extend(
                d.rp1_by_outcome
                    .iter()
                    .chain(&d.rp2_by_outcome)
                    .map(|x| f(*x)),
            );
            row.extend([f(d.fear[0]), f(d.greed[0]), f(d.fear[1]), f(d.greed[1])]);
        }
        sheet.row(&row)?;
    }
    sheet.finish()
}

const SUMMARY_HEADER: [&str; 5] = ["seed", "p_all_c", "welfare", "aar", "mean_p_c"];

/// Per-seed rows followed by a `mean` row and a `std` row (empty fields when
/// there is a single seed).
pub fn write_summary_csv(path: &Path, s: &RunSummary) -> Result<()> {
    let mut sheet = Sheet::create(path, &SUMMARY_HEADER.map(String::from))?;
    for r in &s.per_seed {
        sheet.row(&[
            r.seed.to_string(),
            f(r.p_all_c),
            f(r.welfare),
            f(r.aar),
            f(r.mean_coop),
        ])?;
    }
    let stats = [s.p_all_c, s.welfare, s.aar, s.mean_coop];
    let mut mean = vec!["mean".to_string()];
    mean.extend(stats.iter().map(|st| f(st.mean)));
    sheet.row(&mean)?;
    let mut std = vec!["std".to_string()];
    std.extend(stats.iter().map(|st| opt(st.std)));
    sheet.row(&std)?;
    sheet.finish()
}

struct Table {
    path: PathBuf,
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let columns = rdr
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let rows = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_err(path, e))?;
        Ok(Table {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    fn field(&self, row: usize, col: &str) -> Result<&str> {
        let parse_err = |msg: String| Error::Parse {
            path: self.path.clone(),
            line: row + 2,
            msg,
        };
        let idx = *self
            .columns
            .get(col)
            .ok_or_else(|| parse_err(format!("missing column '{col}'")))?;
        self.rows[row]
            .get(idx)
            .ok_or_else(|| parse_err(format!("short row, no '{col}'")))
    }

    fn num(&self, row: usize, col: &str) -> Result<f64> {
        let s = self.field(row, col)?;
        s.parse().map_err(|_| Error::Parse {
            path: self.path.clone(),
            line: row + 2,
            msg: format!("'{s}' in column '{col}' is not a number"),
        })
    }

    fn opt_num(&self, row: usize, col: &str) -> Result<Option<f64>> {
        if self.field(row, col)?.is_empty() {
            Ok(None)
        } else {
            self.num(row, col).map(Some)
        }
    }
}

/// Reads a summary written by [`write_summary_csv`].
pub fn read_summary_csv(path: &Path) -> Result<RunSummary> {
    let t = Table::read(path)?;
    let mut per_seed = Vec::new();
    let mut stats: HashMap<String, [Option<f64>; 4]> = HashMap::new();
    for r in 0..t.rows.len() {
        let label = t.field(r, "seed")?.to_string();
        let vals = [
            t.opt_num(r, "p_all_c")?,
            t.opt_num(r, "welfare")?,
            t.opt_num(r, "aar")?,
            t.opt_num(r, "mean_p_c")?,
        ];
        if label == "mean" || label == "std" {
            stats.insert(label, vals);
            continue;
        }
        let seed = label.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: r + 2,
            msg: format!("bad seed label '{label}'"),
        })?;
        let need = |v: Option<f64>| {
            v.ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: r + 2,
                msg: "empty metric in a seed row".into(),
            })
        };
        per_seed.push(SeedSummary {
            seed,
            p_all_c: need(vals[0])?,
            welfare: need(vals[1])?,
            aar: need(vals[2])?,
            mean_coop: need(vals[3])?,
        });
    }
    let missing = |what: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("no '{what}' row"),
    };
    let mean = stats.get("mean").ok_or_else(|| missing("mean"))?;
    let std = stats.get("std").ok_or_else(|| missing("std"))?;
    let stat = |k: usize| -> Result<Stat> {
        Ok(Stat {
            mean: mean[k].ok_or_else(|| missing("mean value"))?,
            std: std[k],
        })
    };
    if per_seed.is_empty() {
        return Err(missing("seed"));
    }
    Ok(RunSummary {
        p_all_c: stat(0)?,
        welfare: stat(1)?,
        aar: stat(2)?,
        mean_coop: stat(3)?,
        per_seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub seeds: usize,
    pub checked_values: usize,
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= AUDIT_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Recomputes every summary number in `dir` from the per-seed files and
/// compares it with `summary.csv`.
pub fn audit(dir: &Path) -> Result<AuditReport> {
    let summary_path = dir.join(SUMMARY_FILE);
    let stored = read_summary_csv(&summary_path)?;
    let mut recomputed = Vec::with_capacity(stored.per_seed.len());
    let mut checked = 0;
    for s in &stored.per_seed {
        let path = dir.join(format!("seed_{}.csv", s.seed));
        let t = Table::read(&path)?;
        if t.rows.is_empty() {
            return Err(Error::Audit(format!("{} has no episodes", path.display())));
        }
        let last = t.rows.len() - 1;
        let mut abs_sum = 0.0;
        for r in 0..t.rows.len() {
            abs_sum += t.num(r, "abs_rp")?;
        }
        let again = SeedSummary {
            seed: s.seed,
            p_all_c: t.num(last, "p_all_c")?,
            welfare: t.num(last, "welfare")?,
            aar: abs_sum / t.rows.len() as f64,
            mean_coop: t.num(last, "mean_p_c")?,
        };
        for (name, a, b) in [
            ("p_all_c", s.p_all_c, again.p_all_c),
            ("welfare", s.welfare, again.welfare),
            ("aar", s.aar, again.aar),
            ("mean_p_c", s.mean_coop, again.mean_coop),
        ] {
            checked += 1;
            if !close(a, b) {
                return Err(Error::Audit(format!(
                    "seed {}: {name} is {a} in the summary but {b} from {}",
                    s.seed,
                    path.display()
                )));
            }
        }
        recomputed.push(again);
    }
    let again = RunSummary::from_seeds(recomputed);
    for (name, a, b) in [
        ("p_all_c", stored.p_all_c, again.p_all_c),
        ("welfare", stored.welfare, again.welfare),
        ("aar", stored.aar, again.aar),
        ("mean_p_c", stored.mean_coop, again.mean_coop),
    ] {
        checked += 2;
        let std_ok = match (a.std, b.std) {
            (None, None) => true,
            (Some(x), Some(y)) => close(x, y),
            _ => false,
        };
        if !close(a.mean, b.mean) || !std_ok {
            return Err(Error::Audit(format!(
                "{name}: summary has {a:?}, per-seed files give {b:?}"
            )));
        }
    }
    Ok(AuditReport {
        seeds: stored.per_seed.len(),
        checked_values: checked,
    })
}

fn action_str(a: crate::games::Action) -> String {
    a.symbol().to_string()
}

/// One row per round of every match of a tournament.
pub fn write_gtft_csv(path: &Path, matches: &[MatchResult]) -> Result<()> {
    let header = [
        "match",
        "agent_1",
        "agent_2",
        "round",
        "action_1",
        "action_2",
        "alpha_1",
        "alpha_2",
        "beta_hat_1",
        "beta_hat_2",
        "reward_1",
        "reward_2",
        "welfare",
    ]
    .map(String::from);
    let mut sheet = Sheet::create(path, &header)?;
    for (m, res) in matches.iter().enumerate() {
        for r in &res.rounds {
            sheet.row(&[
                m.to_string(),
                res.first.to_string(),
                res.second.to_string(),
                r.round.to_string(),
                action_str(r.actions[0]),
                action_str(r.actions[1]),
                opt(r.alpha[0]),
                opt(r.alpha[1]),
                opt(r.beta_hat[0]),
                opt(r.beta_hat[1]),
                f(r.rewards[0]),
                f(r.rewards[1]),
                f(r.welfare),
            ])?;
        }
    }
    sheet.finish()
}

/// One row per Coin Game episode; own-colour fractions are empty when the
/// player picked up nothing.
pub fn write_coingame_csv(path: &Path, episodes: &[EpisodeSummary]) -> Result<()> {
    let header = [
        "episode",
        "total_reward",
        "reward_red",
        "reward_blue",
        "own_color_frac_red",
        "own_color_frac_blue",
    ]
    .map(String::from);
    let mut sheet = Sheet::create(path, &header)?;
    for e in episodes {
        sheet.row(&[
            e.episode.to_string(),
            f(e.total_reward()),
            f(e.rewards[0]),
            f(e.rewards[1]),
            opt(e.own_color[0]),
            opt(e.own_color[1]),
        ])?;
    }
    sheet.finish()
}
