//! M-step updates. The expected complete-data log-likelihood splits into
//! independent pieces for the initial law, the switch matrix, the hazard
//! regressions and the emission laws; each is maximized on its own.

use serde::{Deserialize, Serialize};

use super::bfgs::{minimize_warm, BfgsOptions};
use super::forward_backward::Posteriors;
use super::reparam::Reparam;
use crate::circular::{BwcCoefficients, ToroidalParams, TorusPoint};
use crate::dwell_hazard::{fit_weighted_cloglog_limited, CloglogFit, Covariates, DwellEvents, HazardRegression, MAX_NEWTON_ITERS};
use crate::error::{Error, Result};
use crate::semi_markov::TransitionMatrix;

/// Events lighter than this are left out of the hazard regression.
const EVENT_WEIGHT_FLOOR: f64 = 1e-20;

/// Initial distribution: the smoothed state probabilities at the first step.
pub fn m_step_pi(post: &Posteriors) -> Vec<f64> {
    let row = post.state_row(0);
    let total: f64 = row.iter().sum();
    row.iter().map(|p| p / total).collect()
}

/// Result of the switch-matrix update.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaUpdate {
    pub omega: TransitionMatrix,
    /// States whose row was kept because they carry no switching mass.
    pub frozen_rows: Vec<usize>,
}

/// Expected number of `k → h` switches, summed over time and dwell.
pub fn switch_counts(post: &Posteriors) -> Vec<Vec<f64>> {
    let (kn, m) = (post.n_states(), post.max_dwell());
    let mut counts = vec![vec![0.0; kn]; kn];
    for t in 1..post.len() {
        for (k, row) in counts.iter_mut().enumerate() {
            for (h, c) in row.iter_mut().enumerate() {
                if h != k {
                    *c += (1..=m).map(|d| post.transition(t, k, h, d)).sum::<f64>();
                }
            }
        }
    }
    counts
}

/// Row-normalized expected switch counts.
pub fn m_step_omega(post: &Posteriors, previous: &TransitionMatrix) -> OmegaUpdate {
    let counts = switch_counts(post);
    let mut frozen_rows = Vec::new();
    let rows: Vec<Vec<f64>> = counts
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let total: f64 = row.iter().sum();
            if total > 0.0 && total.is_finite() {
                row.iter().map(|c| c / total).collect()
            } else {
                frozen_rows.push(k);
                previous.row(k).to_vec()
            }
        })
        .collect();
    let omega = TransitionMatrix::new(&rows).unwrap_or_else(|_| previous.clone());
    OmegaUpdate { omega, frozen_rows }
}

/// Weighted binomial events for the hazard regression of state `k`.
pub fn hazard_events(post: &Posteriors, x: &Covariates, k: usize) -> DwellEvents {
    let (kn, m) = (post.n_states(), post.max_dwell());
    let mut events = DwellEvents::with_capacity(x.dim(), post.len());
    for t in 1..post.len() {
        for d in 1..=m {
            let stay = post.transition(t, k, k, d);
            let switch: f64 = (0..kn).filter(|&h| h != k).map(|h| post.transition(t, k, h, d)).sum();
            if stay + switch > EVENT_WEIGHT_FLOOR {
                events.push(d, x.row(t), switch, stay);
            }
        }
    }
    events
}

/// Per-state weighted cloglog regressions, each started at the current coefficients.
/// A state without any usable events keeps its coefficients (`None`).
pub fn m_step_beta(
    post: &Posteriors,
    x: &Covariates,
    current: &[HazardRegression],
) -> Result<Vec<Option<CloglogFit>>> {
    m_step_beta_limited(post, x, current, MAX_NEWTON_ITERS)
}

/// [`m_step_beta`] with at most `max_newton` Newton iterations per state.
pub fn m_step_beta_limited(
    post: &Posteriors,
    x: &Covariates,
    current: &[HazardRegression],
    max_newton: usize,
) -> Result<Vec<Option<CloglogFit>>> {
    (0..post.n_states())
        .map(|k| {
            let events = hazard_events(post, x, k);
            if events.is_empty() || events.total_switch() + events.total_stay() <= 0.0 {
                return Ok(None);
            }
            fit_weighted_cloglog_limited(&events, &current[k], max_newton).map(Some)
        })
        .collect()
}

/// Sines and cosines of both coordinates of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigCache {
    cos1: Vec<f64>,
    sin1: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
}

impl TrigCache {
    pub fn new(y: &[TorusPoint]) -> Self {
        let (sin1, cos1) = y.iter().map(|p| p.y1.radians().sin_cos()).unzip();
        let (sin2, cos2) = y.iter().map(|p| p.y2.radians().sin_cos()).unzip();
        TrigCache { cos1, sin1, cos2, sin2 }
    }

    pub fn len(&self) -> usize {
        self.cos1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cos1.is_empty()
    }
}

/// Weighted emission log-likelihood `Σ_t w_t log f(y_t; θ)`.
pub struct EmissionObjective<'a> {
    trig: std::borrow::Cow<'a, TrigCache>,
    weights: &'a [f64],
    total_weight: f64,
}

impl<'a> EmissionObjective<'a> {
    pub fn new(y: &[TorusPoint], weights: &'a [f64]) -> Self {
        EmissionObjective {
            trig: std::borrow::Cow::Owned(TrigCache::new(y)),
            weights,
            total_weight: weights.iter().sum(),
        }
    }

    pub fn with_trig(trig: &'a TrigCache, weights: &'a [f64]) -> Self {
        EmissionObjective {
            trig: std::borrow::Cow::Borrowed(trig),
            weights,
            total_weight: weights.iter().sum(),
        }
    }

    pub fn value(&self, theta: &ToroidalParams) -> f64 {
        let mut grad = [0.0; 5];
        self.value_and_gradient(&theta.to_array(), &mut grad)
    }

    /// Objective and its gradient with respect to `[μ1, μ2, κ1, κ2, ρ]`.
    /// Returns `-∞` outside the parameter domain.
    pub fn value_and_gradient(&self, p: &[f64; 5], grad: &mut [f64; 5]) -> f64 {
        let [mu1, mu2, k1, k2, rho] = *p;
        if !(0.0..1.0).contains(&k1) || !(0.0..1.0).contains(&k2) || !(rho > -1.0 && rho < 1.0) {
            return f64::NEG_INFINITY;
        }
        let coef = BwcCoefficients::new(k1, k2, rho);
        let a = rho.abs();
        let sgn = if rho > 0.0 {
            1.0
        } else if rho < 0.0 {
            -1.0
        } else {
            0.0
        };
        let r2 = 1.0 + rho * rho;
        let (p1, p2) = (1.0 + k1 * k1, 1.0 + k2 * k2);
        let (n1, n2) = (1.0 - k1 * k1, 1.0 - k2 * k2);
        // ∂c_i/∂κ1, ∂c_i/∂κ2, ∂c_i/∂ρ for i = 0..4
        let dk1 = [
            2.0 * r2 * k1 * p2 - 8.0 * a * k2,
            2.0 * r2 * p2 - 8.0 * a * k1 * k2,
            4.0 * r2 * k1 * k2 - 4.0 * a * p2,
            -4.0 * r2 * k2 + 4.0 * a * k1 * p2,
            -4.0 * rho * k1 * n2,
        ];
        let dk2 = [
            2.0 * r2 * k2 * p1 - 8.0 * a * k1,
            4.0 * r2 * k1 * k2 - 4.0 * a * p1,
            2.0 * r2 * p1 - 8.0 * a * k1 * k2,
            -4.0 * r2 * k1 + 4.0 * a * k2 * p1,
            -4.0 * rho * k2 * n1,
        ];
        let drho = [
            2.0 * rho * p1 * p2 - 8.0 * sgn * k1 * k2,
            4.0 * rho * k1 * p2 - 4.0 * sgn * p1 * k2,
            4.0 * rho * p1 * k2 - 4.0 * sgn * k1 * p2,
            -8.0 * rho * k1 * k2 + 2.0 * sgn * p1 * p2,
            2.0 * n1 * n2,
        ];
        let (sm1, cm1) = mu1.sin_cos();
        let (sm2, cm2) = mu2.sin_cos();

        let mut sum_log_den = 0.0;
        let mut g = [0.0; 5];
        for t in 0..self.weights.len() {
            let w = self.weights[t];
            if w == 0.0 {
                continue;
            }
            let tr = &*self.trig;
            let (cy1, sy1, cy2, sy2) = (tr.cos1[t], tr.sin1[t], tr.cos2[t], tr.sin2[t]);
            let c1 = cy1 * cm1 + sy1 * sm1;
            let s1 = sy1 * cm1 - cy1 * sm1;
            let c2 = cy2 * cm2 + sy2 * sm2;
            let s2 = sy2 * cm2 - cy2 * sm2;
            let den = coef.denominator(c1, s1, c2, s2);
            if !(den > 0.0) {
                return f64::NEG_INFINITY;
            }
            sum_log_den += w * den.ln();
            let wd = w / den;
            // d cos(y-μ)/dμ = sin(y-μ), d sin(y-μ)/dμ = -cos(y-μ)
            let ddmu1 = -coef.c1 * s1 - coef.c3 * s1 * c2 + coef.c4 * c1 * s2;
            let ddmu2 = -coef.c2 * s2 - coef.c3 * c1 * s2 + coef.c4 * s1 * c2;
            let basis = [1.0, -c1, -c2, -c1 * c2, -s1 * s2];
            let ddk1: f64 = (0..5).map(|i| dk1[i] * basis[i]).sum();
            let ddk2: f64 = (0..5).map(|i| dk2[i] * basis[i]).sum();
            let ddrho: f64 = (0..5).map(|i| drho[i] * basis[i]).sum();
            g[0] += wd * ddmu1;
            g[1] += wd * ddmu2;
            g[2] += wd * ddk1;
            g[3] += wd * ddk2;
            g[4] += wd * ddrho;
        }
        let value = self.total_weight * coef.c.ln() - sum_log_den;
        grad[0] = -g[0];
        grad[1] = -g[1];
        grad[2] = self.total_weight * (-2.0 * k1 / n1) - g[2];
        grad[3] = self.total_weight * (-2.0 * k2 / n2) - g[3];
        grad[4] = self.total_weight * (-2.0 * rho / (1.0 - rho * rho)) - g[4];
        value
    }

    /// Negative objective and gradient in the unconstrained coordinates of `rp`.
    pub fn negated_unconstrained(&self, rp: &Reparam, u: &[f64], grad_u: &mut [f64]) -> f64 {
        let p = rp.to_constrained(u);
        let mut g = [0.0; 5];
        let v = self.value_and_gradient(&p, &mut g);
        if !v.is_finite() {
            return f64::INFINITY;
        }
        let jac = rp.jacobian_diag(u);
        for j in 0..5 {
            grad_u[j] = -g[j] * jac[j];
        }
        -v
    }
}

/// Result of maximizing one state's emission objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFit {
    pub params: ToroidalParams,
    pub objective: f64,
    pub iterations: usize,
    /// Largest gradient component in unconstrained coordinates.
    pub grad_max: f64,
    pub converged: bool,
    /// Quasi-Newton curvature at the solution, in unconstrained coordinates.
    #[serde(skip)]
    pub inverse_hessian: Option<Vec<f64>>,
}

/// Gradient tolerance for the emission quasi-Newton, in unconstrained coordinates.
pub const THETA_GRAD_TOL: f64 = 1e-8;
pub const THETA_MAX_ITERS: usize = 300;

/// Maximizes `Σ_t w_t log f(y_t; θ)` starting from `start` by BFGS in the
/// centred unconstrained coordinates. Never returns a worse point than `start`.
pub fn maximize_emission(y: &[TorusPoint], weights: &[f64], start: &ToroidalParams) -> Result<ThetaFit> {
    maximize_emission_warm(&EmissionObjective::new(y, weights), start, None)
}

/// [`maximize_emission`] for a prepared objective, optionally reusing the
/// curvature estimate of an earlier solve.
pub fn maximize_emission_warm(
    objective: &EmissionObjective<'_>,
    start: &ToroidalParams,
    inverse_hessian: Option<&[f64]>,
) -> Result<ThetaFit> {
    let rp = Reparam::centred_at(start);
    let u0 = rp.to_unconstrained(start);
    let start_value = objective.value(start);
    let out = minimize_warm(
        |u, g| objective.negated_unconstrained(&rp, u, g),
        &u0,
        BfgsOptions {
            max_iters: THETA_MAX_ITERS,
            grad_tol: THETA_GRAD_TOL,
        },
        inverse_hessian,
    );
    match rp.params(&out.x) {
        Some(params) if -out.value >= start_value => Ok(ThetaFit {
            params,
            objective: -out.value,
            iterations: out.iterations,
            grad_max: out.grad_max,
            converged: out.converged,
            inverse_hessian: Some(out.inverse_hessian),
        }),
        // The search ended within rounding of the start, or left the domain.
        _ if start_value.is_finite() => Ok(ThetaFit {
            params: *start,
            objective: start_value,
            iterations: out.iterations,
            grad_max: f64::NAN,
            converged: out.converged && start_value + out.value <= 1e-12 * start_value.abs(),
            inverse_hessian: None,
        }),
        _ => Err(Error::Domain("emission objective is not finite at the start point".into())),
    }
}

/// Emission update for every state, weighted by the smoothed state probabilities.
pub fn m_step_theta(post: &Posteriors, y: &[TorusPoint], current: &[ToroidalParams]) -> Result<Vec<ThetaFit>> {
    m_step_theta_warm(post, &TrigCache::new(y), current, &vec![None; current.len()])
}

/// [`m_step_theta`] with cached trigonometry and per-state warm starts.
pub fn m_step_theta_warm(
    post: &Posteriors,
    trig: &TrigCache,
    current: &[ToroidalParams],
    inverse_hessians: &[Option<Vec<f64>>],
) -> Result<Vec<ThetaFit>> {
    let mut weights = vec![0.0; post.len()];
    (0..post.n_states())
        .map(|k| {
            for (t, w) in weights.iter_mut().enumerate() {
                *w = post.state(t, k);
            }
            let objective = EmissionObjective::with_trig(trig, &weights);
            maximize_emission_warm(&objective, &current[k], inverse_hessians[k].as_deref())
        })
        .collect()
}

/// `Σ_k π̂_1k log π_k`.
pub fn q_pi(post: &Posteriors, pi: &[f64]) -> f64 {
    post.state_row(0)
        .iter()
        .zip(pi)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, p)| w * p.ln())
        .sum()
}

/// `Σ_t Σ_k Σ_{h≠k} Σ_d π̂_tkhd log ω_kh`.
pub fn q_omega(post: &Posteriors, omega: &TransitionMatrix) -> f64 {
    let counts = switch_counts(post);
    let mut total = 0.0;
    for (k, row) in counts.iter().enumerate() {
        for (h, &c) in row.iter().enumerate() {
            if h != k && c > 0.0 {
                total += c * omega.get(k, h).ln();
            }
        }
    }
    total
}

/// Hazard part of the expected complete-data log-likelihood, over `d = 1..M`.
pub fn q_beta(post: &Posteriors, x: &Covariates, hazards: &[HazardRegression]) -> f64 {
    (0..post.n_states())
        .map(|k| crate::dwell_hazard::weighted_cloglog_objective(&hazard_events(post, x, k), &hazards[k]))
        .sum()
}

/// `Σ_t Σ_k π̂_tk log f(y_t; θ_k)`.
pub fn q_theta(post: &Posteriors, y: &[TorusPoint], thetas: &[ToroidalParams]) -> f64 {
    (0..post.n_states())
        .map(|k| {
            let weights: Vec<f64> = (0..post.len()).map(|t| post.state(t, k)).collect();
            EmissionObjective::new(y, &weights).value(&thetas[k])
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn posteriors_from_rows(rows: &[Vec<f64>]) -> Posteriors {
        Posteriors::from_state_probabilities(rows, 3).unwrap()
    }

    #[test]
    fn pi_is_first_posterior_row() {
        let post = posteriors_from_rows(&[vec![0.3, 0.7], vec![0.5, 0.5]]);
        let pi = m_step_pi(&post);
        assert!((pi[0] - 0.3).abs() < 1e-15 && (pi[1] - 0.7).abs() < 1e-15);
        let post = posteriors_from_rows(&[vec![0.25; 4]]);
        assert!(m_step_pi(&post).iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn omega_without_switch_mass_is_frozen() {
        let post = posteriors_from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let prev = TransitionMatrix::uniform(2);
        let upd = m_step_omega(&post, &prev);
        assert_eq!(upd.frozen_rows, vec![0, 1]);
        assert_eq!(upd.omega, prev);
    }

    #[test]
    fn emission_gradient_matches_finite_differences() {
        let theta = ToroidalParams::new(0.5, 0.5, 0.2, 0.3, 0.6).unwrap();
        let y = theta.sample_n(300, 5);
        let weights: Vec<f64> = (0..300).map(|t| 0.2 + 0.8 * ((t * 7 % 13) as f64 / 13.0)).collect();
        let obj = EmissionObjective::new(&y, &weights);
        for p in [[0.3, 0.9, 0.4, 0.6, 0.3], [-2.0, 1.0, 0.1, 0.8, -0.5], [1.0, -1.0, 0.7, 0.2, 0.05]] {
            let mut g = [0.0; 5];
            obj.value_and_gradient(&p, &mut g);
            for j in 0..5 {
                let h = 1e-6;
                let (mut a, mut b) = (p, p);
                a[j] += h;
                b[j] -= h;
                let mut scratch = [0.0; 5];
                let fd = (obj.value_and_gradient(&a, &mut scratch) - obj.value_and_gradient(&b, &mut scratch)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * fd.abs().max(1.0), "component {j}: {fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn emission_maximizer_does_not_lose_ground() {
        let truth = ToroidalParams::new(2.0, 2.0, 0.2, 0.8, 0.1).unwrap();
        let y = truth.sample_n(400, 8);
        let w = vec![1.0; 400];
        let start = ToroidalParams::new(1.0, 1.5, 0.5, 0.5, 0.0).unwrap();
        let fit = maximize_emission(&y, &w, &start).unwrap();
        let obj = EmissionObjective::new(&y, &w);
        assert!(fit.objective >= obj.value(&start));
        assert!(fit.converged, "{fit:?}");
        assert!((obj.value(&fit.params) - fit.objective).abs() < 1e-9);
    }
}
