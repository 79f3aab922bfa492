use std::path::PathBuf;

use clap::Args;
use torhsmm::evaluation::{gaussian_covariates, scenario, SCENARIO_NAMES};
use torhsmm::semi_markov::LatentPath;

use super::{state_label, write_model, ModelFile};
use crate::config::ConfigFile;
use crate::failure::{Failure, Outcome};
use crate::output::{RunDir, Table};
use crate::series::{AngleUnit, SeriesFile};

#[derive(Debug, Args)]
pub struct SimulateCmd {
    /// Built-in generator (table1-k2, table1-k3, table1-k4).
    #[arg(long, conflicts_with = "model")]
    pub scenario: Option<String>,
    /// Model file to simulate from instead of a scenario.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Series length T.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Standard deviation of the Gaussian covariates (model files only).
    #[arg(long)]
    pub covariate_sd: Option<f64>,
    /// Angle unit of the written series.
    #[arg(long)]
    pub unit: Option<AngleUnit>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cmd: &SimulateCmd, cfg: &ConfigFile) -> Outcome<()> {
    let scenario_name: Option<String> = cfg.pick(cmd.scenario.clone(), "scenario")?;
    let model_path: Option<PathBuf> = cfg.pick(cmd.model.clone(), "model")?;
    let len = cfg.require(cmd.length, "length")?;
    let seed = cfg.seed(cmd.seed, "seed")?;
    let sd: Option<f64> = cfg.pick(cmd.covariate_sd, "covariate_sd")?;
    let unit = cfg.resolve(cmd.unit, "unit", AngleUnit::Radians)?;
    let out_dir = cfg.require(cmd.out.clone(), "out")?;
    cfg.finish()?;
    if len < 2 {
        return Err(Failure::usage("--length must be at least 2"));
    }

    let mut out = RunDir::create(&out_dir, "simulate")?;
    out.record("length", len);
    out.record("unit", unit);
    out.seed("seed", seed);

    let (y, x, path, covariate_names, truth) = match (scenario_name, model_path) {
        (Some(name), None) => {
            if sd.is_some() {
                return Err(Failure::usage("--covariate-sd applies to model files; scenarios fix their own"));
            }
            let sc = scenario(&name).map_err(|_| {
                Failure::usage(format!("unknown scenario '{name}' (known: {})", SCENARIO_NAMES.join(", ")))
            })?;
            out.record("scenario", &name);
            let data = sc.simulate(len, seed)?;
            let truth = sc.model(data.path.max_dwell().max(2))?;
            (data.y, data.x, data.path, vec!["x1".to_string()], truth)
        }
        (None, Some(p)) => {
            let file = ModelFile::read(&p)?;
            out.input(&p)?;
            let sd = sd.unwrap_or(1.0);
            out.record("covariate_sd", sd);
            let x = gaussian_covariates(len, file.model.spec.n_covariates(), sd, seed).map_err(|e| Failure::usage(e.to_string()))?;
            let (path, y): (LatentPath, _) = file.model.simulate(&x, len, seed)?;
            (y, x, path, file.covariates, file.model)
        }
        _ => return Err(Failure::usage("give exactly one of --scenario or --model")),
    };

    let series = SeriesFile {
        unit,
        time_name: "time".into(),
        angle_names: ["angle1".into(), "angle2".into()],
        time: (1..=len).map(|t| t.to_string()).collect(),
        y,
        covariates: (0..len).map(|t| x.row(t).to_vec()).collect(),
        covariate_names: covariate_names.clone(),
    };
    series.write(&out.path().join("series.csv"))?;
    out.register("series.csv")?;

    let mut states = Table::new(["time", "state", "dwell"]);
    for (t, (&s, &d)) in path.states().iter().zip(path.dwell_counters()).enumerate() {
        states.push(vec![(t + 1).to_string(), state_label(s), d.to_string()]);
    }
    out.write_table("states.csv", &states)?;
    write_model(&mut out, "model.json", &covariate_names, &truth)?;
    out.finish()
}
