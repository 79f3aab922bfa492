use clap::Args;
use torhsmm::evaluation::icl;
use torhsmm::inference::fit;
use torhsmm::seeds::derive_seed;

use super::fit::{icl_row, warn_about, ICL_HEADER};
use super::{load_series, write_model, FitArgs, IoArgs};
use crate::config::ConfigFile;
use crate::failure::{Failure, Outcome};
use crate::output::{RunDir, Table};

#[derive(Debug, Args)]
pub struct SweepCmd {
    #[command(flatten)]
    pub io: IoArgs,
    /// Smallest number of regimes.
    #[arg(long)]
    pub k_min: Option<usize>,
    /// Largest number of regimes.
    #[arg(long)]
    pub k_max: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
}

/// Index of the smallest ICL; ties go to the fewer regimes.
pub fn optimal(icls: &[f64]) -> usize {
    icls.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < icls[best] { i } else { best })
}

pub fn run(cmd: &SweepCmd, cfg: &ConfigFile) -> Outcome<()> {
    let io = cmd.io.resolve(cfg)?;
    let k_min = cfg.require(cmd.k_min, "k_min")?;
    let k_max = cfg.resolve(cmd.k_max, "k_max", k_min)?;
    if k_min < 2 || k_max < k_min {
        return Err(Failure::usage(format!("invalid K range {k_min}..{k_max}; need 2 <= k-min <= k-max")));
    }
    let mut out = RunDir::create(&io.out, "sweep")?;
    out.record("k_min", k_min);
    out.record("k_max", k_max);
    let base = cmd.fit.resolve(cfg, k_min, &mut out)?;
    cfg.finish()?;
    let data = load_series(&io.input, io.covariates.as_deref(), &mut out)?;
    out.record("covariates", &data.covariate_names);

    let mut rows = Vec::new();
    let mut icls = Vec::new();
    for k in k_min..=k_max {
        let mut config = base.clone();
        config.n_states = k;
        config.seed = derive_seed(base.seed, &[k as u64]);
        let result = fit(&data.y, &data.x, &config)?;
        warn_about(&result);
        let report = icl(&result);
        icls.push(report.icl);
        rows.push(icl_row(k, &report, &result));
        write_model(&mut out, &format!("models/k{k}.json"), &data.covariate_names, &result.model)?;
    }
    let best = optimal(&icls);
    let mut header: Vec<&str> = ICL_HEADER.to_vec();
    header.push("optimal");
    let mut table = Table::new(header);
    for (i, mut row) in rows.into_iter().enumerate() {
        row.push((i == best).to_string());
        table.push(row);
    }
    out.write_table("icl.csv", &table)?;
    out.finish()
}
