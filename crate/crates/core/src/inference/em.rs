//! Multi-start EM driver.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward_backward::{e_step, Posteriors};
use super::mstep::{m_step_beta_limited, m_step_omega, m_step_pi, m_step_theta_warm, TrigCache};
use crate::circular::{circular_mean, ToroidalParams, TorusPoint, TWO_PI};
use crate::dwell_hazard::{Covariates, HazardRegression, Standardization, MAX_NEWTON_ITERS};
use crate::error::{Error, Result};
use crate::seeds::rng_from;
use crate::semi_markov::{HsmmModel, SemiMarkovSpec, TransitionMatrix};

const KMEANS_ITERS: usize = 25;
const INIT_RATE_BOUNDS: (f64, f64) = (0.01, 0.5);

/// Where EM starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// `n_short_runs` random starts, the best one continued to convergence.
    Random,
    /// A single run from the given parameters (its `M` is replaced by the config's).
    From(HsmmModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_states: usize,
    pub max_dwell: usize,
    pub n_short_runs: usize,
    pub short_run_iters: usize,
    /// Cap on EM iterations of the continued run, short-run iterations included.
    pub max_iters: usize,
    /// Stop once `(ℓ_{s+1} - ℓ_s) / |ℓ_s|` falls below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub init: InitStrategy,
    /// Worker threads for the short runs; 1 runs them in order on the caller's thread.
    pub jobs: usize,
    /// Newton iterations per hazard update during the short runs.
    pub short_run_newton_iters: usize,
}

impl FitConfig {
    pub fn new(n_states: usize, max_dwell: usize, seed: u64) -> Self {
        FitConfig {
            n_states,
            max_dwell,
            n_short_runs: 20,
            short_run_iters: 30,
            max_iters: 1000,
            rel_tol: 1e-8,
            seed,
            init: InitStrategy::Random,
            jobs: 1,
            short_run_newton_iters: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(Error::InvalidInput(format!("K must be at least 2, got {}", self.n_states)));
        }
        if self.max_dwell < 2 {
            return Err(Error::InvalidInput(format!("M must be at least 2, got {}", self.max_dwell)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidInput("rel_tol must be positive".into()));
        }
        if self.n_short_runs == 0 || self.max_iters == 0 {
            return Err(Error::InvalidInput("run and iteration counts must be positive".into()));
        }
        if self.short_run_newton_iters == 0 {
            return Err(Error::InvalidInput("short_run_newton_iters must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::InvalidInput("jobs must be at least 1".into()));
        }
        if let InitStrategy::From(model) = &self.init {
            if model.n_states() != self.n_states {
                return Err(Error::InvalidInput(format!(
                    "initial model has {} states, config asks for {}",
                    model.n_states(),
                    self.n_states
                )));
            }
        }
        Ok(())
    }
}

/// How one short run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortRunSummary {
    pub run: usize,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub spurious: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub short_runs: Vec<ShortRunSummary>,
    /// Index of the short run that was continued.
    pub selected_run: usize,
    /// Some state's posterior mass fell below the guard threshold.
    pub spurious: bool,
    pub state_mass: Vec<f64>,
    /// Rows of the switch matrix kept at their previous value in the last M-step.
    pub frozen_omega_rows: Vec<usize>,
    /// States whose hazard regression was separated in the last M-step.
    pub separated_hazards: Vec<usize>,
    /// States whose emission optimizer stopped early in the last M-step.
    pub unconverged_emissions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: HsmmModel,
    /// Log-likelihood before each M-step; the last entry belongs to `model`.
    pub loglik_trace: Vec<f64>,
    /// Posteriors under `model`.
    pub posteriors: Posteriors,
    pub n_iterations: usize,
    pub converged: bool,
    pub standardization: Standardization,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }

    pub fn thetas(&self) -> &[ToroidalParams] {
        &self.model.thetas
    }

    pub fn spec(&self) -> &SemiMarkovSpec {
        &self.model.spec
    }

    pub fn n_observations(&self) -> usize {
        self.posteriors.len()
    }
}

/// Minimum posterior mass a state needs before the fit is called spurious:
/// `2(p + 3)` with `p` the number of covariates.
pub fn spurious_threshold(n_covariates: usize) -> f64 {
    2.0 * (n_covariates as f64 + 3.0)
}

/// Running EM state.
#[derive(Debug, Clone)]
struct Run {
    model: HsmmModel,
    trace: Vec<f64>,
    posteriors: Option<Posteriors>,
    converged: bool,
    diagnostics: FitDiagnostics,
    theta_curvature: Vec<Option<Vec<f64>>>,
}

/// Data shared by every run of one fit.
struct Workspace<'a> {
    y: &'a [TorusPoint],
    x: &'a Covariates,
    trig: TrigCache,
}

impl Run {
    fn new(model: HsmmModel) -> Self {
        Run {
            theta_curvature: vec![None; model.thetas.len()],
            model,
            trace: Vec::new(),
            posteriors: None,
            converged: false,
            diagnostics: FitDiagnostics::default(),
        }
    }

    fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    /// Advances until convergence or until the trace holds `limit + 1` entries.
    /// A resumed run first takes the M-step its last E-step was waiting for.
    fn advance(&mut self, ws: &Workspace<'_>, limit: usize, rel_tol: f64, newton_iters: usize) -> Result<()> {
        if self.posteriors.is_some() && self.iterations() < limit {
            self.m_step(ws, newton_iters)?;
        }
        loop {
            let (post, ll) = e_step(&self.model.spec, &self.model.thetas, ws.y, ws.x)?;
            if !ll.is_finite() {
                return Err(Error::Domain("log-likelihood is not finite".into()));
            }
            let prev = self.trace.last().copied();
            self.trace.push(ll);
            self.posteriors = Some(post);
            if let Some(prev) = prev {
                if (ll - prev) / prev.abs() < rel_tol {
                    self.converged = true;
                    return Ok(());
                }
            }
            if self.iterations() >= limit {
                return Ok(());
            }
            self.m_step(ws, newton_iters)?;
        }
    }

    fn m_step(&mut self, ws: &Workspace<'_>, newton_iters: usize) -> Result<()> {
        let post = self.posteriors.as_ref().expect("E-step precedes M-step");
        let spec = &self.model.spec;
        let pi = m_step_pi(post);
        let omega = m_step_omega(post, spec.omega());
        let betas = m_step_beta_limited(post, ws.x, spec.hazards(), newton_iters)?;
        let thetas = m_step_theta_warm(post, &ws.trig, &self.model.thetas, &self.theta_curvature)?;
        self.theta_curvature = thetas.iter().map(|f| f.inverse_hessian.clone()).collect();

        let diag = &mut self.diagnostics;
        diag.frozen_omega_rows = omega.frozen_rows;
        diag.separated_hazards = betas
            .iter()
            .enumerate()
            .filter(|(_, b)| b.as_ref().is_some_and(|f| f.separated()))
            .map(|(k, _)| k)
            .collect();
        diag.unconverged_emissions = thetas
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.converged)
            .map(|(k, _)| k)
            .collect();

        let hazards: Vec<HazardRegression> = betas
            .into_iter()
            .zip(spec.hazards())
            .map(|(fit, old)| fit.map_or_else(|| old.clone(), |f| f.coefficients))
            .collect();
        let spec = SemiMarkovSpec::new(pi, omega.omega, hazards, spec.max_dwell())?;
        self.model = HsmmModel::new(spec, thetas.into_iter().map(|f| f.params).collect())?;
        Ok(())
    }

    fn flag_spurious(&mut self, n_covariates: usize) {
        if let Some(post) = &self.posteriors {
            let mass = post.state_mass();
            let threshold = spurious_threshold(n_covariates);
            self.diagnostics.spurious = mass.iter().any(|&m| m < threshold);
            self.diagnostics.state_mass = mass;
        }
    }
}

/// Fits a hidden semi-Markov model by EM.
///
/// With [`InitStrategy::Random`] every short run is seeded from
/// `(config.seed, run index)`; the run with the highest log-likelihood among
/// those not flagged spurious (or among all, if every run is) is continued
/// under the relative-increase stopping rule.
pub fn fit(y: &[TorusPoint], x: &Covariates, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let len = y.len();
    if len < 2 * config.n_states {
        return Err(Error::InvalidInput(format!(
            "series of length {len} is too short for {} states",
            config.n_states
        )));
    }
    if x.len() != len {
        return Err(Error::InvalidInput(format!(
            "series has {len} observations but {} covariate rows",
            x.len()
        )));
    }
    let p = x.dim();
    let ws = Workspace {
        y,
        x,
        trig: TrigCache::new(y),
    };

    let (mut best, short_runs) = match &config.init {
        InitStrategy::From(model) => {
            let spec = model.spec.with_max_dwell(config.max_dwell)?;
            let run = Run::new(HsmmModel::new(spec, model.thetas.clone())?);
            (run, Vec::new())
        }
        InitStrategy::Random => {
            let work = |r: usize| -> (ShortRunSummary, Option<Run>) {
                let outcome = random_init(y, x, config, r).and_then(|model| {
                    let mut run = Run::new(model);
                    run.advance(&ws, config.short_run_iters, config.rel_tol, config.short_run_newton_iters)?;
                    run.flag_spurious(p);
                    Ok(run)
                });
                match outcome {
                    Ok(run) => (
                        ShortRunSummary {
                            run: r,
                            loglik: run.trace.last().copied(),
                            iterations: run.iterations(),
                            spurious: run.diagnostics.spurious,
                            failure: None,
                        },
                        Some(run),
                    ),
                    Err(e) => (
                        ShortRunSummary {
                            run: r,
                            loglik: None,
                            iterations: 0,
                            spurious: false,
                            failure: Some(e.to_string()),
                        },
                        None,
                    ),
                }
            };
            let results: Vec<(ShortRunSummary, Option<Run>)> = if config.jobs <= 1 {
                (0..config.n_short_runs).map(work).collect()
            } else {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(config.jobs)
                    .build()
                    .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
                pool.install(|| (0..config.n_short_runs).into_par_iter().map(work).collect())
            };
            let summaries: Vec<ShortRunSummary> = results.iter().map(|(s, _)| s.clone()).collect();
            let chosen = results
                .into_iter()
                .filter_map(|(s, run)| run.map(|r| (s, r)))
                .max_by(|(a, _), (b, _)| {
                    (!a.spurious)
                        .cmp(&!b.spurious)
                        .then(a.loglik.partial_cmp(&b.loglik).unwrap_or(std::cmp::Ordering::Equal))
                        .then(b.run.cmp(&a.run))
                });
            match chosen {
                Some((s, mut run)) => {
                    run.diagnostics.selected_run = s.run;
                    (run, summaries)
                }
                None => {
                    let summary = summaries
                        .iter()
                        .filter_map(|s| s.failure.as_ref().map(|f| format!("run {}: {f}", s.run)))
                        .collect::<Vec<_>>()
                        .join("; ");
                    return Err(Error::AllRunsDegenerate {
                        runs: config.n_short_runs,
                        summary,
                    });
                }
            }
        }
    };

    if !best.converged {
        best.advance(&ws, config.max_iters, config.rel_tol, MAX_NEWTON_ITERS)?;
    }
    best.flag_spurious(p);
    best.diagnostics.short_runs = short_runs;
    let n_iterations = best.iterations();
    Ok(FitResult {
        model: best.model,
        loglik_trace: best.trace,
        posteriors: best.posteriors.expect("at least one E-step ran"),
        n_iterations,
        converged: best.converged,
        standardization: x.standardization(),
        diagnostics: best.diagnostics,
    })
}

/// Random starting model for short run `run`.
///
/// Means come from a circular k-means whose centres start uniformly on the
/// torus; concentrations are uniform on (0.2, 0.8) with zero correlation.
/// Hazards start time-constant at each cluster's empirical switch rate.
pub fn random_init(y: &[TorusPoint], x: &Covariates, config: &FitConfig, run: usize) -> Result<HsmmModel> {
    let kn = config.n_states;
    let mut rng = rng_from(config.seed, &[0x1A17, run as u64]);
    let centres: Vec<(f64, f64)> = (0..kn)
        .map(|_| (rng.random::<f64>() * TWO_PI, rng.random::<f64>() * TWO_PI))
        .collect();
    let (centres, labels) = circular_kmeans(y, centres);
    let rates = switch_rates(&labels, kn);

    let thetas = centres
        .iter()
        .map(|&(m1, m2)| {
            let k1 = rng.random_range(0.2..0.8);
            let k2 = rng.random_range(0.2..0.8);
            ToroidalParams::new(m1, m2, k1, k2, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let hazards = rates
        .iter()
        .map(|&r| HazardRegression::constant(r, x.dim()))
        .collect();
    let spec = SemiMarkovSpec::new(
        vec![1.0 / kn as f64; kn],
        TransitionMatrix::uniform(kn),
        hazards,
        config.max_dwell,
    )?;
    HsmmModel::new(spec, thetas)
}

fn chord_distance(p: &(f64, f64, f64, f64), c: &(f64, f64)) -> f64 {
    // 2 - 2cos(Δ) per coordinate
    let (s1, c1, s2, c2) = *p;
    let (ms1, mc1) = c.0.sin_cos();
    let (ms2, mc2) = c.1.sin_cos();
    4.0 - 2.0 * (c1 * mc1 + s1 * ms1) - 2.0 * (c2 * mc2 + s2 * ms2)
}

/// Lloyd iterations on the torus with chordal distance; empty clusters keep their centre.
fn circular_kmeans(y: &[TorusPoint], mut centres: Vec<(f64, f64)>) -> (Vec<(f64, f64)>, Vec<usize>) {
    let trig: Vec<(f64, f64, f64, f64)> = y
        .iter()
        .map(|p| {
            let (s1, c1) = p.y1.radians().sin_cos();
            let (s2, c2) = p.y2.radians().sin_cos();
            (s1, c1, s2, c2)
        })
        .collect();
    let mut labels = vec![usize::MAX; y.len()];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (i, p) in trig.iter().enumerate() {
            let best = centres
                .iter()
                .enumerate()
                .map(|(k, c)| (k, chord_distance(p, c)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(0, |(k, _)| k);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (k, c) in centres.iter_mut().enumerate() {
            let members = || y.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(p, _)| p);
            if let (Some(m1), Some(m2)) = (
                circular_mean(members().map(|p| p.y1.radians())),
                circular_mean(members().map(|p| p.y2.radians())),
            ) {
                *c = (m1.radians(), m2.radians());
            }
        }
    }
    (centres, labels)
}

/// Fraction of steps spent in each cluster that end with a label change.
fn switch_rates(labels: &[usize], kn: usize) -> Vec<f64> {
    let mut exits = vec![0.0; kn];
    let mut visits = vec![0.0; kn];
    for w in labels.windows(2) {
        visits[w[0]] += 1.0;
        if w[0] != w[1] {
            exits[w[0]] += 1.0;
        }
    }
    exits
        .iter()
        .zip(&visits)
        .map(|(&e, &v)| {
            let r = if v > 0.0 { e / v } else { INIT_RATE_BOUNDS.1 };
            r.clamp(INIT_RATE_BOUNDS.0, INIT_RATE_BOUNDS.1)
        })
        .collect()
}
