pub mod bootstrap;
pub mod fit;
pub mod profiles;
pub mod segment;
pub mod simulate;
pub mod study;
pub mod sweep;

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use torhsmm::circular::{ToroidalParams, TorusPoint};
use torhsmm::dwell_hazard::{Covariates, HazardRegression};
use torhsmm::inference::{FitConfig, Posteriors};
use torhsmm::semi_markov::{HsmmModel, SemiMarkovSpec, TransitionMatrix};

use crate::config::ConfigFile;
use crate::failure::{Classify, Failure, Kind, Outcome};
use crate::output::{num, RunDir, Table};
use crate::series::SeriesFile;

/// A fitted model together with the covariate columns it was fitted on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub covariates: Vec<String>,
    pub model: HsmmModel,
}

impl ModelFile {
    /// Reads a model and rebuilds it through the validating constructors.
    pub fn read(path: &Path) -> Outcome<Self> {
        let text = std::fs::read_to_string(path).or_fail(Kind::Data, format!("cannot read {}", path.display()))?;
        let raw: ModelFile = serde_json::from_str(&text).or_fail(Kind::Data, format!("malformed model file {}", path.display()))?;
        let m = &raw.model;
        let rebuild = || -> torhsmm::Result<HsmmModel> {
            let hazards = m
                .spec
                .hazards()
                .iter()
                .map(|h| HazardRegression::new(h.beta0, h.beta1, h.betas.clone()))
                .collect::<torhsmm::Result<Vec<_>>>()?;
            let spec = SemiMarkovSpec::new(
                m.spec.pi().to_vec(),
                TransitionMatrix::new(&m.spec.omega().rows())?,
                hazards,
                m.spec.max_dwell(),
            )?;
            let thetas = m
                .thetas
                .iter()
                .map(|t| ToroidalParams::from_array(t.to_array()))
                .collect::<torhsmm::Result<Vec<_>>>()?;
            HsmmModel::new(spec, thetas)
        };
        let model = rebuild().or_fail(Kind::Data, format!("invalid model in {}", path.display()))?;
        if raw.covariates.len() != model.spec.n_covariates() {
            return Err(Failure::data(format!(
                "{}: {} covariate names for {} hazard coefficients",
                path.display(),
                raw.covariates.len(),
                model.spec.n_covariates()
            )));
        }
        Ok(ModelFile {
            covariates: raw.covariates,
            model,
        })
    }
}

/// A series with its selected covariate columns.
pub struct Loaded {
    pub series: SeriesFile,
    pub covariate_names: Vec<String>,
    pub y: Vec<TorusPoint>,
    pub x: Covariates,
}

pub fn load_series(path: &Path, covariates: Option<&[String]>, run: &mut RunDir) -> Outcome<Loaded> {
    let series = SeriesFile::read(path)?;
    run.input(path)?;
    let (covariate_names, x) = series.covariate_table(covariates)?;
    Ok(Loaded {
        y: series.y.clone(),
        series,
        covariate_names,
        x,
    })
}

/// Estimation settings shared by `fit` and `sweep`.
#[derive(Debug, Args, Default)]
pub struct FitArgs {
    /// Dwell truncation level M.
    #[arg(long)]
    pub max_dwell: Option<usize>,
    /// Random starts before the best one is continued.
    #[arg(long)]
    pub short_runs: Option<usize>,
    /// EM iterations of each random start.
    #[arg(long)]
    pub short_run_iters: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative log-likelihood tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 keeps the canonical sequential order.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl FitArgs {
    pub fn resolve(&self, cfg: &ConfigFile, n_states: usize, run: &mut RunDir) -> Outcome<FitConfig> {
        let max_dwell = cfg.require(self.max_dwell, "max_dwell")?;
        let seed = cfg.seed(self.seed, "seed")?;
        let mut c = FitConfig::new(n_states, max_dwell, seed);
        c.n_short_runs = cfg.resolve(self.short_runs, "short_runs", c.n_short_runs)?;
        c.short_run_iters = cfg.resolve(self.short_run_iters, "short_run_iters", c.short_run_iters)?;
        c.max_iters = cfg.resolve(self.max_iters, "max_iters", c.max_iters)?;
        c.rel_tol = cfg.resolve(self.tol, "tol", c.rel_tol)?;
        c.jobs = cfg.resolve(self.jobs, "jobs", c.jobs)?;
        c.validate().map_err(|e| Failure::usage(e.to_string()))?;
        run.record("max_dwell", c.max_dwell);
        run.record("short_runs", c.n_short_runs);
        run.record("short_run_iters", c.short_run_iters);
        run.record("max_iters", c.max_iters);
        run.record("tol", c.rel_tol);
        run.record("jobs", c.jobs);
        run.seed("seed", seed);
        Ok(c)
    }
}

/// Input, covariate selection and output directory.
#[derive(Debug, Args, Default)]
pub struct IoArgs {
    /// Series CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Covariate columns (comma separated); defaults to all, or the model's.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub struct Io {
    pub input: PathBuf,
    pub covariates: Option<Vec<String>>,
    pub out: PathBuf,
}

impl IoArgs {
    pub fn resolve(&self, cfg: &ConfigFile) -> Outcome<Io> {
        Ok(Io {
            input: cfg.require(self.input.clone(), "input")?,
            covariates: cfg.pick(self.covariates.clone(), "covariates")?,
            out: cfg.require(self.out.clone(), "out")?,
        })
    }
}

/// The model's covariates unless the user names others.
pub fn model_covariates(io: &Io, model: &ModelFile) -> Vec<String> {
    io.covariates.clone().unwrap_or_else(|| model.covariates.clone())
}

pub fn state_label(k: usize) -> String {
    (k + 1).to_string()
}

pub fn segmentation_table(series: &SeriesFile, post: &Posteriors, labels: &[usize]) -> Table {
    let mut t = Table::new([series.time_name.as_str(), "state", "probability"]);
    for (i, &l) in labels.iter().enumerate() {
        t.push(vec![series.time[i].clone(), state_label(l), num(post.state(i, l))]);
    }
    t
}

pub fn posterior_table(series: &SeriesFile, post: &Posteriors) -> Table {
    let mut header = vec![series.time_name.clone()];
    header.extend((0..post.n_states()).map(|k| format!("p{}", k + 1)));
    let mut t = Table::new(header);
    for i in 0..post.len() {
        let mut row = vec![series.time[i].clone()];
        row.extend(post.state_row(i).iter().map(|&p| num(p)));
        t.push(row);
    }
    t
}

pub fn write_model(run: &mut RunDir, name: &str, covariates: &[String], model: &HsmmModel) -> Outcome<()> {
    run.write_json(
        name,
        &ModelFile {
            covariates: covariates.to_vec(),
            model: model.clone(),
        },
    )
}
