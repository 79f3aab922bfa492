use std::path::PathBuf;

use clap::Args;
use torhsmm::evaluation::{hazard_profiles, segment};
use torhsmm::inference::e_step;

use super::{load_series, model_covariates, state_label, IoArgs, ModelFile};
use crate::config::ConfigFile;
use crate::failure::{Failure, Outcome};
use crate::output::{num, RunDir, Table};

#[derive(Debug, Args)]
pub struct ProfilesCmd {
    #[command(flatten)]
    pub io: IoArgs,
    /// Fitted model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Longest dwell on the curves; defaults to twice the truncation level.
    #[arg(long)]
    pub horizon: Option<usize>,
}

pub fn run(cmd: &ProfilesCmd, cfg: &ConfigFile) -> Outcome<()> {
    let io = cmd.io.resolve(cfg)?;
    let model_path: PathBuf = cfg.require(cmd.model.clone(), "model")?;
    let horizon: Option<usize> = cfg.pick(cmd.horizon, "horizon")?;
    cfg.finish()?;
    let mut out = RunDir::create(&io.out, "profiles")?;
    let file = ModelFile::read(&model_path)?;
    out.input(&model_path)?;
    let horizon = horizon.unwrap_or(2 * file.model.spec.max_dwell());
    if horizon == 0 {
        return Err(Failure::usage("--horizon must be positive"));
    }
    out.record("horizon", horizon);
    let covariates = model_covariates(&io, &file);
    let data = load_series(&io.input, Some(&covariates), &mut out)?;
    if data.x.dim() != file.model.spec.n_covariates() {
        return Err(Failure::usage("the selected covariates do not match the model"));
    }
    out.record("covariates", &data.covariate_names);

    // covariate levels are taken within each state's decoded observations
    let (post, _) = e_step(&file.model.spec, &file.model.thetas, &data.y, &data.x)?;
    let labels = segment(&post);
    let profiles = hazard_profiles(&file.model.spec, &data.x, &labels, horizon)?;

    for k in 0..file.model.n_states() {
        let mut header = vec!["level".to_string()];
        header.extend(data.covariate_names.iter().cloned());
        header.extend(["dwell", "hazard", "pmf", "survival", "tail"].map(String::from));
        let mut table = Table::new(header);
        for p in profiles.iter().filter(|p| p.state == k) {
            for c in &p.curve {
                let mut row = vec![p.level.label().to_string()];
                row.extend(p.covariates.iter().map(|&v| num(v)));
                row.extend([c.dwell.to_string(), num(c.hazard), num(c.pmf), num(c.survival), c.tail.to_string()]);
                table.push(row);
            }
        }
        if profiles.iter().all(|p| p.state != k) {
            eprintln!("warning: state {} has no decoded observations; its profile file is empty", k + 1);
        }
        out.write_table(&format!("hazard_state{}.csv", state_label(k)), &table)?;
    }
    out.finish()
}
