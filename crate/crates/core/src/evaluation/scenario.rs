//! Simulation scenarios with two to four regimes and one Gaussian covariate.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circular::{ToroidalParams, TorusPoint};
use crate::dwell_hazard::{Covariates, HazardRegression};
use crate::error::{Error, Result};
use crate::seeds::rng_from;
use crate::semi_markov::{simulate_path_with, HsmmModel, LatentPath, SemiMarkovSpec, TransitionMatrix};

/// Names accepted by [`scenario`].
pub const SCENARIO_NAMES: [&str; 3] = ["table1-k2", "table1-k3", "table1-k4"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub thetas: Vec<ToroidalParams>,
    pub hazards: Vec<HazardRegression>,
    pub omega: TransitionMatrix,
    /// Standard deviation of the i.i.d. zero-mean Gaussian covariate.
    pub covariate_sd: f64,
}

/// A simulated series together with its latent path.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub y: Vec<TorusPoint>,
    pub x: Covariates,
    pub path: LatentPath,
}

fn theta(v: [f64; 5]) -> ToroidalParams {
    ToroidalParams::from_array(v).expect("scenario parameters are valid")
}

fn hazard(b: [f64; 3]) -> HazardRegression {
    HazardRegression::new(b[0], b[1], vec![b[2]]).expect("scenario coefficients are finite")
}

fn omega(rows: &[&[f64]]) -> TransitionMatrix {
    TransitionMatrix::new(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).expect("scenario rows are valid")
}

/// Looks up a scenario by name.
pub fn scenario(name: &str) -> Result<ScenarioSpec> {
    let (thetas, hazards, om) = match name {
        "table1-k2" => (
            vec![theta([0.5, 0.5, 0.2, 0.3, 0.6]), theta([2.0, 2.0, 0.2, 0.8, 0.1])],
            vec![hazard([-8.0, 0.35, -0.5]), hazard([-3.0, 0.075, 0.5])],
            omega(&[&[0.0, 1.0], &[1.0, 0.0]]),
        ),
        "table1-k3" => (
            vec![
                theta([0.5, 0.5, 0.2, 0.3, 0.6]),
                theta([2.0, 2.0, 0.2, 0.8, 0.1]),
                theta([2.0, -2.0, 0.5, 0.5, -0.6]),
            ],
            vec![hazard([-8.0, 0.4, -0.5]), hazard([-5.0, 0.15, 0.2]), hazard([-3.0, 0.05, 0.7])],
            omega(&[&[0.0, 0.5, 0.5], &[0.9, 0.0, 0.1], &[0.45, 0.55, 0.0]]),
        ),
        "table1-k4" => (
            vec![
                theta([0.5, 0.5, 0.2, 0.3, 0.6]),
                theta([2.0, 2.0, 0.2, 0.8, 0.1]),
                theta([-2.0, -2.0, 0.7, 0.9, -0.3]),
                theta([2.0, -2.0, 0.5, 0.5, -0.6]),
            ],
            vec![
                hazard([-8.0, 0.4, -0.5]),
                hazard([-6.0, 0.3, 0.2]),
                hazard([-4.0, 0.05, 0.7]),
                hazard([-2.0, 0.15, -0.1]),
            ],
            omega(&[
                &[0.0, 0.25, 0.25, 0.5],
                &[0.7, 0.0, 0.2, 0.1],
                &[0.15, 0.25, 0.0, 0.6],
                &[0.3, 0.2, 0.5, 0.0],
            ]),
        ),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown scenario '{other}' (known: {})",
                SCENARIO_NAMES.join(", ")
            )))
        }
    };
    Ok(ScenarioSpec {
        name: name.to_string(),
        thetas,
        hazards,
        omega: om,
        covariate_sd: 3.0,
    })
}

impl ScenarioSpec {
    pub fn n_states(&self) -> usize {
        self.thetas.len()
    }

    /// The generating model with uniform initial law and dwell truncation `max_dwell`.
    pub fn model(&self, max_dwell: usize) -> Result<HsmmModel> {
        let k = self.n_states();
        let spec = SemiMarkovSpec::new(vec![1.0 / k as f64; k], self.omega.clone(), self.hazards.clone(), max_dwell)?;
        HsmmModel::new(spec, self.thetas.clone())
    }

    pub fn draw_covariates(&self, len: usize, seed: u64) -> Covariates {
        gaussian_covariates(len, 1, self.covariate_sd, seed).expect("positive sd")
    }

    /// Simulates `len` steps with a fresh covariate series. The dwell counter
    /// is not truncated (`M = len`).
    pub fn simulate(&self, len: usize, seed: u64) -> Result<SimulatedData> {
        let x = self.draw_covariates(len, seed);
        let model = self.model(len.max(2))?;
        let mut rng = rng_from(seed, &[0x5A]);
        let path = simulate_path_with(&model.spec, &x, len, &mut rng)?;
        let y = path
            .states()
            .iter()
            .map(|&s| model.thetas[s].sample(&mut rng))
            .collect();
        Ok(SimulatedData { y, x, path })
    }
}

/// `len` rows of `dim` i.i.d. `N(0, sd²)` covariates, drawn row by row.
pub fn gaussian_covariates(len: usize, dim: usize, sd: f64, seed: u64) -> Result<Covariates> {
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::InvalidInput(format!("covariate sd must be positive, got {sd}")));
    }
    if dim == 0 {
        return Ok(Covariates::empty(len));
    }
    let mut rng = rng_from(seed, &[0xC0]);
    let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Covariates::new(dim, (0..len * dim).map(|_| normal.sample(&mut rng)).collect())
}

/// Dwell truncation `max(2, ⌈M_obs δ⌉)` for the observed maximum sojourn `M_obs`.
pub fn truncation_level(observed_max_dwell: usize, delta: f64) -> usize {
    ((observed_max_dwell as f64 * delta).ceil() as usize).max(2)
}
