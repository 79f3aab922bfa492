use clap::Args;
use serde_json::json;
use torhsmm::evaluation::{bootstrap_se, icl, segment, BootstrapOptions, BootstrapReport, IclReport};
use torhsmm::inference::{fit, FitResult};
use torhsmm::seeds::derive_seed;
use torhsmm::semi_markov::HsmmModel;

use super::{load_series, posterior_table, segmentation_table, state_label, write_model, FitArgs, IoArgs};
use crate::config::ConfigFile;
use crate::failure::Outcome;
use crate::output::{num, RunDir, Table};

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub io: IoArgs,
    /// Number of regimes K.
    #[arg(long)]
    pub states: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Parametric bootstrap replicates for standard errors (0 skips).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Seed of the bootstrap simulations; derived from --seed when absent.
    #[arg(long)]
    pub bootstrap_seed: Option<u64>,
}

const EMISSION_COLUMNS: [&str; 5] = ["mu1", "mu2", "kappa1", "kappa2", "rho"];

/// Per-state parameter table; `se` adds a standard-error column after each
/// estimate.
pub fn parameter_table(model: &HsmmModel, covariates: &[String], se: Option<&BootstrapReport>) -> Table {
    let mut columns: Vec<(String, String)> = EMISSION_COLUMNS.iter().map(|c| (c.to_string(), c.to_string())).collect();
    columns.push(("beta0".into(), "beta0".into()));
    columns.push(("beta1".into(), "beta1".into()));
    for (j, name) in covariates.iter().enumerate() {
        columns.push((format!("beta_{name}"), format!("beta{}", j + 2)));
    }
    let mut header = vec!["state".to_string()];
    for (label, _) in &columns {
        header.push(label.clone());
        if se.is_some() {
            header.push(format!("se_{label}"));
        }
    }
    header.push("pi".into());
    let mut table = Table::new(header);
    for (k, (th, hz)) in model.thetas.iter().zip(model.spec.hazards()).enumerate() {
        let mut values = th.to_array().to_vec();
        values.push(hz.beta0);
        values.push(hz.beta1);
        values.extend(&hz.betas);
        let mut row = vec![state_label(k)];
        for ((_, key), v) in columns.iter().zip(values) {
            row.push(num(v));
            if let Some(report) = se {
                row.push(report.se_of(&format!("{key}[{}]", k + 1)).map_or(String::new(), num));
            }
        }
        row.push(num(model.spec.pi()[k]));
        table.push(row);
    }
    table
}

pub fn omega_table(model: &HsmmModel, se: Option<&BootstrapReport>) -> Table {
    let kn = model.n_states();
    let mut header = vec!["from".to_string()];
    header.extend((0..kn).map(|h| format!("to_{}", h + 1)));
    if se.is_some() {
        header.extend((0..kn).map(|h| format!("se_to_{}", h + 1)));
    }
    let mut table = Table::new(header);
    for k in 0..kn {
        let mut row = vec![state_label(k)];
        row.extend(model.spec.omega().row(k).iter().map(|&v| num(v)));
        if let Some(report) = se {
            row.extend((0..kn).map(|h| {
                if h == k {
                    String::new()
                } else {
                    // two-state switch rows are fixed at 1
                    num(report.se_of(&format!("omega[{},{}]", k + 1, h + 1)).unwrap_or(0.0))
                }
            }));
        }
        table.push(row);
    }
    table
}

pub fn icl_row(k: usize, report: &IclReport, result: &FitResult) -> Vec<String> {
    vec![
        k.to_string(),
        num(report.loglik),
        report.n_params.to_string(),
        num(report.bic),
        num(report.entropy),
        num(report.icl),
        result.n_iterations.to_string(),
        result.converged.to_string(),
    ]
}

pub const ICL_HEADER: [&str; 8] = ["states", "loglik", "n_params", "bic", "entropy", "icl", "iterations", "converged"];

pub fn diagnostics(result: &FitResult) -> serde_json::Value {
    json!({
        "loglik": result.loglik(),
        "iterations": result.n_iterations,
        "converged": result.converged,
        "state_mass": result.diagnostics.state_mass,
        "spurious": result.diagnostics.spurious,
        "selected_run": result.diagnostics.selected_run,
        "short_runs": result.diagnostics.short_runs,
        "frozen_omega_rows": result.diagnostics.frozen_omega_rows,
        "separated_hazards": result.diagnostics.separated_hazards,
        "unconverged_emissions": result.diagnostics.unconverged_emissions,
        "covariate_standardization": result.standardization,
    })
}

pub fn warn_about(result: &FitResult) {
    if !result.converged {
        eprintln!("warning: EM stopped after {} iterations without meeting the tolerance", result.n_iterations);
    }
    if result.diagnostics.spurious {
        eprintln!("warning: a regime holds almost no posterior mass (state masses {:?})", result.diagnostics.state_mass);
    }
    if !result.diagnostics.separated_hazards.is_empty() {
        eprintln!(
            "warning: hazard regressions of states {:?} look separated; their coefficients are unreliable",
            result.diagnostics.separated_hazards.iter().map(|k| k + 1).collect::<Vec<_>>()
        );
    }
}

pub fn run(cmd: &FitCmd, cfg: &ConfigFile) -> Outcome<()> {
    let io = cmd.io.resolve(cfg)?;
    let states = cfg.require(cmd.states, "states")?;
    let mut out = RunDir::create(&io.out, "fit")?;
    out.record("states", states);
    let config = cmd.fit.resolve(cfg, states, &mut out)?;
    let replicates = cfg.resolve(cmd.bootstrap, "bootstrap", 0usize)?;
    let boot_seed = cfg.resolve(cmd.bootstrap_seed, "bootstrap_seed", derive_seed(config.seed, &[0xB007]))?;
    cfg.finish()?;

    let data = load_series(&io.input, io.covariates.as_deref(), &mut out)?;
    out.record("covariates", &data.covariate_names);
    out.record("bootstrap", replicates);

    let result = fit(&data.y, &data.x, &config)?;
    warn_about(&result);
    let labels = segment(&result.posteriors);

    let report = if replicates > 0 {
        out.seed("bootstrap_seed", boot_seed);
        let mut options = BootstrapOptions::new(replicates, boot_seed);
        options.jobs = config.jobs;
        let report = bootstrap_se(&result.model, &data.y, &data.x, &options)?;
        if let Some(w) = &report.warning {
            eprintln!("warning: {w}");
        }
        out.write_json("bootstrap.json", &report)?;
        Some(report)
    } else {
        None
    };

    out.write_table("parameters.csv", &parameter_table(&result.model, &data.covariate_names, report.as_ref()))?;
    out.write_table("omega.csv", &omega_table(&result.model, report.as_ref()))?;
    write_model(&mut out, "model.json", &data.covariate_names, &result.model)?;
    out.write_table("segmentation.csv", &segmentation_table(&data.series, &result.posteriors, &labels))?;
    out.write_table("posteriors.csv", &posterior_table(&data.series, &result.posteriors))?;

    let mut trace = Table::new(["iteration", "loglik"]);
    for (i, l) in result.loglik_trace.iter().enumerate() {
        trace.push(vec![(i + 1).to_string(), num(*l)]);
    }
    out.write_table("loglik_trace.csv", &trace)?;

    let mut icl_table = Table::new(ICL_HEADER);
    icl_table.push(icl_row(states, &icl(&result), &result));
    out.write_table("icl.csv", &icl_table)?;
    out.write_json("diagnostics.json", &diagnostics(&result))?;
    out.finish()
}
