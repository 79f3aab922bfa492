//! Parametric bootstrap standard errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{align_model, flatten, parameter_error};
use crate::circular::TorusPoint;
use crate::dwell_hazard::Covariates;
use crate::error::{Error, Result};
use crate::inference::{fit, FitConfig, InitStrategy};
use crate::semi_markov::HsmmModel;
use crate::seeds::derive_seed;

/// Share of dropped replicates above which the report carries a warning.
pub const DROP_WARNING_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub jobs: usize,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapOptions {
            replicates,
            seed,
            max_iters: 1000,
            rel_tol: 1e-8,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSe {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub params: Vec<ParamSe>,
    pub requested: usize,
    pub used: usize,
    /// Replicates that failed or did not converge, with the reason.
    pub dropped: Vec<(usize, String)>,
    pub warning: Option<String>,
}

impl BootstrapReport {
    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.se)
    }
}

/// Simulates `options.replicates` series from the fitted model on the observed
/// covariate path, refits each from the point estimate, aligns labels to the
/// point estimate and reports the standard deviation of every parameter.
pub fn bootstrap_se(point: &HsmmModel, y: &[TorusPoint], x: &Covariates, options: &BootstrapOptions) -> Result<BootstrapReport> {
    let seeds: Vec<u64> = (0..options.replicates as u64).map(|b| derive_seed(options.seed, &[0xB0, b])).collect();
    bootstrap_se_with_seeds(point, y, x, &seeds, options)
}

/// As [`bootstrap_se`] with one explicit simulation seed per replicate.
pub fn bootstrap_se_with_seeds(
    point: &HsmmModel,
    y: &[TorusPoint],
    x: &Covariates,
    seeds: &[u64],
    options: &BootstrapOptions,
) -> Result<BootstrapReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidInput("the bootstrap needs at least 2 replicates".into()));
    }
    let len = y.len();
    if x.len() != len {
        return Err(Error::InvalidInput("covariate rows do not match the series".into()));
    }
    let mut config = FitConfig::new(point.n_states(), point.spec.max_dwell(), 0);
    config.init = InitStrategy::From(point.clone());
    config.max_iters = options.max_iters;
    config.rel_tol = options.rel_tol;

    let work = |(b, &seed): (usize, &u64)| -> std::result::Result<Vec<f64>, String> {
        let (_, yb) = point.simulate(x, len, seed).map_err(|e| e.to_string())?;
        let refit = fit(&yb, x, &config).map_err(|e| e.to_string())?;
        if !refit.converged {
            return Err(format!("replicate {b} did not converge in {} iterations", refit.n_iterations));
        }
        let aligned = align_model(point, &refit.model).map_err(|e| e.to_string())?;
        Ok(flatten(&aligned).into_iter().map(|v| v.value).collect())
    };
    let outcomes: Vec<std::result::Result<Vec<f64>, String>> = if options.jobs <= 1 {
        seeds.iter().enumerate().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| seeds.par_iter().enumerate().map(work).collect())
    };

    let reference = flatten(point);
    let mut draws = Vec::new();
    let mut dropped = Vec::new();
    for (b, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => draws.push(v),
            Err(reason) => dropped.push((b, reason)),
        }
    }
    let used = draws.len();
    let params = reference
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let errs: Vec<f64> = draws.iter().map(|d| parameter_error(r.kind, d[j], r.value)).collect();
            ParamSe {
                name: r.name.clone(),
                estimate: r.value,
                se: sample_sd(&errs),
            }
        })
        .collect();
    let warning = (dropped.len() as f64 > DROP_WARNING_SHARE * seeds.len() as f64).then(|| {
        format!("{} of {} bootstrap replicates were dropped", dropped.len(), seeds.len())
    });
    Ok(BootstrapReport {
        params,
        requested: seeds.len(),
        used,
        dropped,
        warning,
    })
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
