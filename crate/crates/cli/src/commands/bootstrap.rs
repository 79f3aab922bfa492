use std::path::PathBuf;

use clap::Args;
use torhsmm::evaluation::{bootstrap_se, BootstrapOptions};

use super::fit::{omega_table, parameter_table};
use super::{load_series, model_covariates, IoArgs, ModelFile};
use crate::config::ConfigFile;
use crate::failure::{Failure, Outcome};
use crate::output::{num, RunDir, Table};

#[derive(Debug, Args)]
pub struct BootstrapCmd {
    #[command(flatten)]
    pub io: IoArgs,
    /// Fitted model used as the point estimate and the simulation law.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Number of bootstrap replicates B.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn run(cmd: &BootstrapCmd, cfg: &ConfigFile) -> Outcome<()> {
    let io = cmd.io.resolve(cfg)?;
    let model_path: PathBuf = cfg.require(cmd.model.clone(), "model")?;
    let replicates = cfg.require(cmd.replicates, "replicates")?;
    let seed = cfg.seed(cmd.seed, "seed")?;
    let mut options = BootstrapOptions::new(replicates, seed);
    options.max_iters = cfg.resolve(cmd.max_iters, "max_iters", options.max_iters)?;
    options.rel_tol = cfg.resolve(cmd.tol, "tol", options.rel_tol)?;
    options.jobs = cfg.resolve(cmd.jobs, "jobs", 1)?;
    cfg.finish()?;
    if replicates < 2 || options.jobs == 0 || options.max_iters == 0 || !(options.rel_tol > 0.0) {
        return Err(Failure::usage("need --replicates >= 2, --jobs >= 1, --max-iters >= 1 and a positive --tol"));
    }

    let mut out = RunDir::create(&io.out, "bootstrap")?;
    out.record("replicates", replicates);
    out.record("max_iters", options.max_iters);
    out.record("tol", options.rel_tol);
    out.record("jobs", options.jobs);
    out.seed("seed", seed);
    let file = ModelFile::read(&model_path)?;
    out.input(&model_path)?;
    let covariates = model_covariates(&io, &file);
    let data = load_series(&io.input, Some(&covariates), &mut out)?;
    if data.x.dim() != file.model.spec.n_covariates() {
        return Err(Failure::usage("the selected covariates do not match the model"));
    }
    out.record("covariates", &data.covariate_names);

    let report = bootstrap_se(&file.model, &data.y, &data.x, &options)?;
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    if report.used < 2 {
        return Err(Failure::numerical(format!(
            "only {} of {} bootstrap refits converged",
            report.used, report.requested
        )));
    }
    let mut se = Table::new(["parameter", "estimate", "se"]);
    for p in &report.params {
        se.push(vec![p.name.clone(), num(p.estimate), num(p.se)]);
    }
    out.write_table("standard_errors.csv", &se)?;
    out.write_table("parameters.csv", &parameter_table(&file.model, &data.covariate_names, Some(&report)))?;
    out.write_table("omega.csv", &omega_table(&file.model, Some(&report)))?;
    out.write_json("bootstrap.json", &report)?;
    out.finish()
}
