//! Parameter tables, label alignment and replicate RMSE.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::circular::{angular_deviation, ToroidalParams};
use crate::error::{Error, Result};
use crate::semi_markov::HsmmModel;

/// Largest state count aligned by exhaustive search.
pub const MAX_ALIGN_STATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Errors measured by angular deviation.
    Angle,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub name: String,
    pub kind: ParamKind,
    pub value: f64,
}

/// Free parameters of a model in a fixed order, with 1-based state indices:
/// per state `mu1 mu2 kappa1 kappa2 rho beta0 beta1 beta2..`, then the
/// off-diagonal switch probabilities `omega[k,h]` when there are at least
/// three states.
pub fn flatten(model: &HsmmModel) -> Vec<NamedValue> {
    let mut out = Vec::new();
    let mut push = |name: String, kind, value| out.push(NamedValue { name, kind, value });
    for (k, (th, hz)) in model.thetas.iter().zip(model.spec.hazards()).enumerate() {
        let s = k + 1;
        push(format!("mu1[{s}]"), ParamKind::Angle, th.mu1().radians());
        push(format!("mu2[{s}]"), ParamKind::Angle, th.mu2().radians());
        push(format!("kappa1[{s}]"), ParamKind::Real, th.kappa1());
        push(format!("kappa2[{s}]"), ParamKind::Real, th.kappa2());
        push(format!("rho[{s}]"), ParamKind::Real, th.rho());
        push(format!("beta0[{s}]"), ParamKind::Real, hz.beta0);
        push(format!("beta1[{s}]"), ParamKind::Real, hz.beta1);
        for (j, b) in hz.betas.iter().enumerate() {
            push(format!("beta{}[{s}]", j + 2), ParamKind::Real, *b);
        }
    }
    let kn = model.n_states();
    if kn >= 3 {
        for k in 0..kn {
            for h in (0..kn).filter(|&h| h != k) {
                push(format!("omega[{},{}]", k + 1, h + 1), ParamKind::Real, model.spec.omega().get(k, h));
            }
        }
    }
    out
}

/// Signed error of `estimate` relative to `truth` (wrapped for angles).
pub fn parameter_error(kind: ParamKind, estimate: f64, truth: f64) -> f64 {
    match kind {
        ParamKind::Angle => crate::circular::wrap_angle(estimate - truth),
        ParamKind::Real => estimate - truth,
    }
}

fn theta_distance(a: &ToroidalParams, b: &ToroidalParams) -> f64 {
    angular_deviation(a.mu1().radians(), b.mu1().radians())
        + angular_deviation(a.mu2().radians(), b.mu2().radians())
        + (a.kappa1() - b.kappa1()).abs()
        + (a.kappa2() - b.kappa2()).abs()
        + (a.rho() - b.rho()).abs()
}

/// Permutation `perm` minimizing `Σ_i dist(reference[i], candidate[perm[i]])`,
/// so that `candidate` relabelled by `perm` lines up with `reference`.
/// Among equal-cost permutations the lexicographically first wins.
pub fn align_labels(reference: &[ToroidalParams], candidate: &[ToroidalParams]) -> Result<Vec<usize>> {
    let k = reference.len();
    if candidate.len() != k {
        return Err(Error::InvalidInput(format!(
            "cannot align {} states against {k}",
            candidate.len()
        )));
    }
    if k > MAX_ALIGN_STATES {
        return Err(Error::InvalidInput(format!(
            "label alignment supports at most {MAX_ALIGN_STATES} states"
        )));
    }
    let cost: Vec<Vec<f64>> = reference
        .iter()
        .map(|r| candidate.iter().map(|c| theta_distance(r, c)).collect())
        .collect();
    let mut best = (f64::INFINITY, (0..k).collect::<Vec<_>>());
    for perm in (0..k).permutations(k) {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if total < best.0 {
            best = (total, perm);
        }
    }
    Ok(best.1)
}

/// `candidate` relabelled to match `reference`.
pub fn align_model(reference: &HsmmModel, candidate: &HsmmModel) -> Result<HsmmModel> {
    let perm = align_labels(&reference.thetas, &candidate.thetas)?;
    Ok(candidate.permuted(&perm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRmse {
    pub name: String,
    pub truth: f64,
    pub rmse: f64,
}

/// Root mean squared error per parameter over label-aligned estimates.
pub fn parameter_rmse(truth: &HsmmModel, estimates: &[HsmmModel]) -> Result<Vec<ParamRmse>> {
    let draws: Vec<Vec<f64>> = estimates
        .iter()
        .map(|e| flatten(e).into_iter().map(|v| v.value).collect())
        .collect();
    rmse_from_values(&flatten(truth), &draws)
}

/// RMSE of each column of `draws` against the matching reference value.
pub fn rmse_from_values(reference: &[NamedValue], draws: &[Vec<f64>]) -> Result<Vec<ParamRmse>> {
    if draws.is_empty() {
        return Err(Error::InvalidInput("no estimates".into()));
    }
    let mut sums = vec![0.0; reference.len()];
    for values in draws {
        if values.len() != reference.len() {
            return Err(Error::InvalidInput("estimate has a different parameter layout".into()));
        }
        for ((s, r), v) in sums.iter_mut().zip(reference).zip(values) {
            *s += parameter_error(r.kind, *v, r.value).powi(2);
        }
    }
    let n = draws.len() as f64;
    Ok(reference
        .iter()
        .zip(sums)
        .map(|(r, s)| ParamRmse {
            name: r.name.clone(),
            truth: r.value,
            rmse: (s / n).sqrt(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::scenario::scenario;

    #[test]
    fn names_follow_layout() {
        let m = scenario("table1-k3").unwrap().model(10).unwrap();
        let names: Vec<String> = flatten(&m).into_iter().map(|v| v.name).collect();
        assert_eq!(names.len(), 3 * 8 + 6);
        assert_eq!(names[0], "mu1[1]");
        assert_eq!(names[7], "beta2[1]");
        assert_eq!(names[24], "omega[1,2]");
        let m2 = scenario("table1-k2").unwrap().model(10).unwrap();
        assert_eq!(flatten(&m2).len(), 16);
    }

    #[test]
    fn alignment_examples() {
        let th = scenario("table1-k3").unwrap().thetas;
        assert_eq!(align_labels(&th, &th).unwrap(), vec![0, 1, 2]);
        let swapped = vec![th[1], th[0], th[2]];
        assert_eq!(align_labels(&th, &swapped).unwrap(), vec![1, 0, 2]);
        let rotated = vec![th[2], th[0], th[1]];
        let perm = align_labels(&th, &rotated).unwrap();
        let back: Vec<_> = perm.iter().map(|&i| rotated[i]).collect();
        assert_eq!(back, th);
    }

    #[test]
    fn rmse_of_truth_is_zero_and_wraps() {
        let m = scenario("table1-k2").unwrap().model(10).unwrap();
        let r = parameter_rmse(&m, &[m.clone(), m.clone()]).unwrap();
        assert!(r.iter().all(|p| p.rmse == 0.0));
        let e = parameter_error(ParamKind::Angle, std::f64::consts::PI - 0.1, -std::f64::consts::PI + 0.1);
        assert!((e.abs() - 0.2).abs() < 1e-12);
    }
}
