//! Replicated simulation studies over (scenario, length, truncation) cells.

use serde::{Deserialize, Serialize};

use super::params::{align_model, flatten, rmse_from_values, ParamRmse};
use super::scenario::{scenario, truncation_level};
use super::segment::{ari, segment};
use crate::error::{Error, Result};
use crate::inference::{fit, FitConfig};
use crate::seeds::derive_seed;
use crate::semi_markov::HsmmModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub scenario: String,
    pub len: usize,
    /// Truncation factor applied to the observed maximum dwell.
    pub delta: f64,
}

impl StudyCell {
    pub fn new(scenario: &str, len: usize, delta: f64) -> Self {
        StudyCell {
            scenario: scenario.to_string(),
            len,
            delta,
        }
    }

    /// Directory-safe identifier, e.g. `table1-k2_T2000_d1`.
    pub fn key(&self) -> String {
        format!("{}_T{}_d{}", self.scenario, self.len, self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyFitOptions {
    pub n_short_runs: usize,
    pub short_run_iters: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for StudyFitOptions {
    fn default() -> Self {
        StudyFitOptions {
            n_short_runs: 20,
            short_run_iters: 30,
            max_iters: 1000,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub cell: StudyCell,
    pub replicate: usize,
    pub data_seed: u64,
    pub fit_seed: u64,
    pub observed_max_dwell: usize,
    pub max_dwell: usize,
    pub ari: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub spurious: bool,
    /// Estimate relabelled to match the generating model.
    pub model: HsmmModel,
}

fn name_tag(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seeds of replicate `rep`. They do not depend on `delta`, so cells that
/// differ only in truncation see the same data and the same starts.
pub fn replicate_seeds(base: u64, cell: &StudyCell, rep: usize) -> (u64, u64) {
    let tags = [name_tag(&cell.scenario), cell.len as u64, rep as u64];
    (
        derive_seed(base, &[tags[0], tags[1], tags[2], 0xDA7A]),
        derive_seed(base, &[tags[0], tags[1], tags[2], 0xF17]),
    )
}

/// Simulates and fits one replicate of `cell`.
pub fn run_replicate(cell: &StudyCell, rep: usize, base_seed: u64, options: &StudyFitOptions) -> Result<ReplicateResult> {
    let sc = scenario(&cell.scenario)?;
    if !(cell.delta > 0.0) {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    let (data_seed, fit_seed) = replicate_seeds(base_seed, cell, rep);
    let data = sc.simulate(cell.len, data_seed)?;
    let observed_max_dwell = data.path.max_dwell();
    let max_dwell = truncation_level(observed_max_dwell, cell.delta);
    let mut config = FitConfig::new(sc.n_states(), max_dwell, fit_seed);
    config.n_short_runs = options.n_short_runs;
    config.short_run_iters = options.short_run_iters;
    config.max_iters = options.max_iters;
    config.rel_tol = options.rel_tol;
    let fitted = fit(&data.y, &data.x, &config)?;
    let truth = sc.model(max_dwell)?;
    let labels = segment(&fitted.posteriors);
    Ok(ReplicateResult {
        cell: cell.clone(),
        replicate: rep,
        data_seed,
        fit_seed,
        observed_max_dwell,
        max_dwell,
        ari: ari(&labels, data.path.states())?,
        loglik: fitted.loglik(),
        iterations: fitted.n_iterations,
        converged: fitted.converged,
        spurious: fitted.diagnostics.spurious,
        model: align_model(&truth, &fitted.model)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: StudyCell,
    pub replicates: usize,
    pub ari: Vec<f64>,
    pub median_ari: f64,
    pub rmse: Vec<ParamRmse>,
}

impl CellSummary {
    pub fn rmse_of(&self, name: &str) -> Option<f64> {
        self.rmse.iter().find(|r| r.name == name).map(|r| r.rmse)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// ARI distribution and RMSE table of a cell. Results are ordered by
/// replicate index before aggregation.
pub fn summarize(cell: &StudyCell, results: &[ReplicateResult]) -> Result<CellSummary> {
    let sc = scenario(&cell.scenario)?;
    let mut ordered: Vec<&ReplicateResult> = results.iter().filter(|r| &r.cell == cell).collect();
    ordered.sort_by_key(|r| r.replicate);
    if ordered.is_empty() {
        return Err(Error::InvalidInput(format!("no replicates for cell {}", cell.key())));
    }
    let reference = flatten(&sc.model(2)?);
    let draws: Vec<Vec<f64>> = ordered
        .iter()
        .map(|r| flatten(&r.model).into_iter().map(|v| v.value).collect())
        .collect();
    let ari: Vec<f64> = ordered.iter().map(|r| r.ari).collect();
    Ok(CellSummary {
        cell: cell.clone(),
        replicates: ordered.len(),
        median_ari: median(&ari),
        ari,
        rmse: rmse_from_values(&reference, &draws)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_ignore_delta() {
        let a = StudyCell::new("table1-k2", 1000, 1.0);
        let b = StudyCell::new("table1-k2", 1000, 0.5);
        assert_eq!(replicate_seeds(3, &a, 4), replicate_seeds(3, &b, 4));
        assert_ne!(replicate_seeds(3, &a, 4), replicate_seeds(3, &a, 5));
        assert_eq!(a.key(), "table1-k2_T1000_d1");
        assert_eq!(b.key(), "table1-k2_T1000_d0.5");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
