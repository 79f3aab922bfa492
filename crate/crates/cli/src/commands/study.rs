//! Replicated simulation studies with per-replicate checkpoints.
//!
//! Each finished replicate is written to
//! `checkpoints/<cell>/rep_NNNN.json` before the next one starts, so an
//! interrupted study resumes where it stopped when rerun with the same
//! settings and output directory.

use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use torhsmm::evaluation::study::median;
use torhsmm::evaluation::{run_replicate, summarize, ReplicateResult, StudyCell, StudyFitOptions, SCENARIO_NAMES};

use crate::config::ConfigFile;
use crate::failure::{Classify, Failure, Kind, Outcome};
use crate::output::{num, RunDir, Table};

#[derive(Debug, Args)]
pub struct StudyCmd {
    /// Scenario names (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    /// Series lengths T (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub lengths: Option<Vec<usize>>,
    /// Truncation factors applied to the observed maximum dwell.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// Replicates N per cell.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replicates fitted concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub short_runs: Option<usize>,
    #[arg(long)]
    pub short_run_iters: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReplicateOutcome {
    Done(ReplicateResult),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub base_seed: u64,
    pub options: StudyFitOptions,
    pub cell: StudyCell,
    pub replicate: usize,
    pub outcome: ReplicateOutcome,
}

pub fn checkpoint_path(root: &Path, cell: &StudyCell, rep: usize) -> PathBuf {
    root.join("checkpoints").join(cell.key()).join(format!("rep_{rep:04}.json"))
}

fn load_checkpoint(path: &Path, base_seed: u64, options: &StudyFitOptions, cell: &StudyCell, rep: usize) -> Outcome<Option<Checkpoint>> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Ok(None);
    };
    let Ok(c) = serde_json::from_str::<Checkpoint>(&text) else {
        eprintln!("warning: ignoring unreadable checkpoint {}", path.display());
        return Ok(None);
    };
    if c.base_seed != base_seed || &c.options != options || &c.cell != cell || c.replicate != rep {
        return Err(Failure::usage(format!(
            "checkpoint {} was written with different settings; use a fresh --out directory",
            path.display()
        )));
    }
    Ok(Some(c))
}

fn store_checkpoint(path: &Path, c: &Checkpoint) -> Outcome<()> {
    let dir = path.parent().expect("checkpoints live in a directory");
    std::fs::create_dir_all(dir).or_fail(Kind::Usage, format!("cannot create {}", dir.display()))?;
    let bytes = serde_json::to_vec_pretty(c).or_fail(Kind::Numerical, "cannot encode checkpoint")?;
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes).or_fail(Kind::Usage, format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).or_fail(Kind::Usage, format!("cannot write {}", path.display()))
}

fn one(root: &Path, base_seed: u64, options: &StudyFitOptions, cell: &StudyCell, rep: usize) -> Outcome<Checkpoint> {
    let path = checkpoint_path(root, cell, rep);
    if let Some(c) = load_checkpoint(&path, base_seed, options, cell, rep)? {
        return Ok(c);
    }
    let outcome = match run_replicate(cell, rep, base_seed, options) {
        Ok(r) => ReplicateOutcome::Done(r),
        Err(torhsmm::Error::InvalidInput(msg)) => return Err(Failure::usage(msg)),
        Err(e) => ReplicateOutcome::Failed(e.to_string()),
    };
    let c = Checkpoint {
        base_seed,
        options: *options,
        cell: cell.clone(),
        replicate: rep,
        outcome,
    };
    store_checkpoint(&path, &c)?;
    eprintln!("{} replicate {rep} done", cell.key());
    Ok(c)
}

pub fn run(cmd: &StudyCmd, cfg: &ConfigFile) -> Outcome<()> {
    let scenarios: Vec<String> = cfg.require(cmd.scenarios.clone(), "scenarios")?;
    let lengths: Vec<usize> = cfg.require(cmd.lengths.clone(), "lengths")?;
    let deltas: Vec<f64> = cfg.resolve(cmd.deltas.clone(), "deltas", vec![1.0])?;
    let replicates = cfg.require(cmd.replicates, "replicates")?;
    let seed = cfg.seed(cmd.seed, "seed")?;
    let jobs = cfg.resolve(cmd.jobs, "jobs", 1usize)?;
    let d = StudyFitOptions::default();
    let options = StudyFitOptions {
        n_short_runs: cfg.resolve(cmd.short_runs, "short_runs", d.n_short_runs)?,
        short_run_iters: cfg.resolve(cmd.short_run_iters, "short_run_iters", d.short_run_iters)?,
        max_iters: cfg.resolve(cmd.max_iters, "max_iters", d.max_iters)?,
        rel_tol: cfg.resolve(cmd.tol, "tol", d.rel_tol)?,
    };
    let out_dir: PathBuf = cfg.require(cmd.out.clone(), "out")?;
    cfg.finish()?;

    if let Some(bad) = scenarios.iter().find(|s| !SCENARIO_NAMES.contains(&s.as_str())) {
        return Err(Failure::usage(format!("unknown scenario '{bad}' (known: {})", SCENARIO_NAMES.join(", "))));
    }
    if replicates == 0 || jobs == 0 || lengths.iter().any(|&t| t < 2) || deltas.iter().any(|&x| !(x > 0.0)) {
        return Err(Failure::usage("replicates, jobs, lengths (>= 2) and deltas must be positive"));
    }

    let mut out = RunDir::create(&out_dir, "study")?;
    out.record("scenarios", &scenarios);
    out.record("lengths", &lengths);
    out.record("deltas", &deltas);
    out.record("replicates", replicates);
    out.record("jobs", jobs);
    out.record("fit_options", options);
    out.seed("seed", seed);

    let mut cells = Vec::new();
    for s in &scenarios {
        for &t in &lengths {
            for &dl in &deltas {
                cells.push(StudyCell::new(s, t, dl));
            }
        }
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..replicates).map(move |r| (c, r))).collect();
    let root = out.path().to_path_buf();
    let work = |&(c, r): &(usize, usize)| one(&root, seed, &options, &cells[c], r);
    let results: Vec<Checkpoint> = if jobs == 1 {
        tasks.iter().map(work).collect::<Outcome<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .or_fail(Kind::Usage, "cannot start worker threads")?;
        pool.install(|| tasks.par_iter().map(work).collect::<Outcome<_>>())?
    };

    let mut ari = Table::new([
        "scenario", "length", "delta", "replicate", "ari", "loglik", "iterations", "converged", "spurious",
        "observed_max_dwell", "max_dwell", "status",
    ]);
    let mut rmse = Table::new(["scenario", "length", "delta", "parameter", "truth", "rmse"]);
    let mut summary = Table::new([
        "scenario", "length", "delta", "replicates", "failed", "spurious", "median_ari", "min_ari", "max_ari",
    ]);
    for cell in &cells {
        let key = |extra: Vec<String>| {
            let mut v = vec![cell.scenario.clone(), cell.len.to_string(), num(cell.delta)];
            v.extend(extra);
            v
        };
        let mine: Vec<&Checkpoint> = results.iter().filter(|c| &c.cell == cell).collect();
        let mut done = Vec::new();
        for c in &mine {
            match &c.outcome {
                ReplicateOutcome::Done(r) => {
                    ari.push(key(vec![
                        r.replicate.to_string(),
                        num(r.ari),
                        num(r.loglik),
                        r.iterations.to_string(),
                        r.converged.to_string(),
                        r.spurious.to_string(),
                        r.observed_max_dwell.to_string(),
                        r.max_dwell.to_string(),
                        "ok".into(),
                    ]));
                    done.push(r.clone());
                }
                ReplicateOutcome::Failed(msg) => {
                    eprintln!("warning: {} replicate {} failed: {msg}", cell.key(), c.replicate);
                    let mut row = vec![c.replicate.to_string()];
                    row.extend(std::iter::repeat_n(String::new(), 7));
                    row.push(format!("failed: {msg}"));
                    ari.push(key(row));
                }
            }
        }
        let failed = mine.len() - done.len();
        let spurious = done.iter().filter(|r| r.spurious).count();
        if done.is_empty() {
            summary.push(key(vec!["0".into(), failed.to_string(), "0".into(), String::new(), String::new(), String::new()]));
            continue;
        }
        let s = summarize(cell, &done)?;
        let lo = s.ari.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = s.ari.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.push(key(vec![
            s.replicates.to_string(),
            failed.to_string(),
            spurious.to_string(),
            num(median(&s.ari)),
            num(lo),
            num(hi),
        ]));
        for p in &s.rmse {
            rmse.push(key(vec![p.name.clone(), num(p.truth), num(p.rmse)]));
        }
    }
    out.write_table("ari.csv", &ari)?;
    out.write_table("rmse.csv", &rmse)?;
    out.write_table("summary.csv", &summary)?;
    out.finish()
}
