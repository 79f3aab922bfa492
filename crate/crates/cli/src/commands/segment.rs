use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use torhsmm::evaluation::{classification_entropy, segment};
use torhsmm::inference::e_step;

use super::{load_series, model_covariates, posterior_table, segmentation_table, IoArgs, ModelFile};
use crate::config::ConfigFile;
use crate::failure::{Failure, Outcome};
use crate::output::RunDir;

#[derive(Debug, Args)]
pub struct SegmentCmd {
    #[command(flatten)]
    pub io: IoArgs,
    /// Fitted model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

pub fn run(cmd: &SegmentCmd, cfg: &ConfigFile) -> Outcome<()> {
    let io = cmd.io.resolve(cfg)?;
    let model_path: PathBuf = cfg.require(cmd.model.clone(), "model")?;
    cfg.finish()?;
    let mut out = RunDir::create(&io.out, "segment")?;
    let file = ModelFile::read(&model_path)?;
    out.input(&model_path)?;
    let covariates = model_covariates(&io, &file);
    let data = load_series(&io.input, Some(&covariates), &mut out)?;
    if data.x.dim() != file.model.spec.n_covariates() {
        return Err(Failure::usage(format!(
            "the model uses {} covariates, {} selected",
            file.model.spec.n_covariates(),
            data.x.dim()
        )));
    }
    out.record("covariates", &data.covariate_names);

    let (post, loglik) = e_step(&file.model.spec, &file.model.thetas, &data.y, &data.x)?;
    let labels = segment(&post);
    out.write_table("segmentation.csv", &segmentation_table(&data.series, &post, &labels))?;
    out.write_table("posteriors.csv", &posterior_table(&data.series, &post))?;
    out.write_json(
        "summary.json",
        &json!({
            "loglik": loglik,
            "classification_entropy": classification_entropy(&post),
            "state_mass": post.state_mass(),
        }),
    )?;
    out.finish()
}
