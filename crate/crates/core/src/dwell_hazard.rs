//! Discrete-time proportional-hazards model for regime dwell times.
//!
//! The probability of leaving a regime after `d` steps, given the covariate
//! row `x` observed at the step where the switch would happen, is
//!
//! ```text
//! q(d; x) = 1 - exp(-exp(β0 + β1 (d - 0.5) + xᵀβ))
//! ```
//!
//! i.e. a complementary log-log link on a linear predictor in the dwell time
//! and the covariates. Survival and dwell probabilities follow by products of
//! `1 - q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hazards are kept inside `[HAZARD_EPS, 1 - HAZARD_EPS]`.
pub const HAZARD_EPS: f64 = 1e-12;

/// Maximum Newton iterations for the weighted cloglog fit.
pub const MAX_NEWTON_ITERS: usize = 100;

/// Gradient-norm tolerance for the weighted cloglog fit.
pub const NEWTON_GRAD_TOL: f64 = 1e-8;

/// Relative rounding level of the summed objective. Gains below it are not
/// resolvable and the objective may move by this much on an accepted step.
const VALUE_RESOLUTION: f64 = 1e-13;

/// Standardized coefficients beyond this magnitude push every linear
/// predictor into the clamped region and are reported as diverging.
const DIVERGENCE_BOUND: f64 = 25.0;

/// Lower/upper bounds on the linear predictor matching the hazard clamp.
#[inline]
fn eta_bounds() -> (f64, f64) {
    // ln(-ln(1-ε)) and ln(-ln ε)
    ((-(-HAZARD_EPS).ln_1p()).ln(), (-(HAZARD_EPS.ln())).ln())
}

/// `log(-log(1 - q))`.
pub fn cloglog(q: f64) -> f64 {
    (-(-q).ln_1p()).ln()
}

/// Inverse of [`cloglog`], clamped into `[ε, 1 - ε]`.
#[inline]
pub fn inverse_cloglog(eta: f64) -> f64 {
    let (lo, hi) = eta_bounds();
    (-(-eta.clamp(lo, hi).exp()).exp_m1()).clamp(HAZARD_EPS, 1.0 - HAZARD_EPS)
}

/// A `T × p` table of time-varying covariates, one row per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    len: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Covariates {
    /// Builds a table from row-major data.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        let len = if dim == 0 {
            return Err(Error::InvalidInput(
                "use Covariates::empty for covariate-free series".into(),
            ));
        } else if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not fill rows of width {dim}",
                data.len()
            )));
        } else {
            data.len() / dim
        };
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
        Ok(Covariates { len, dim, data })
    }

    /// A series of `len` steps without covariates.
    pub fn empty(len: usize) -> Self {
        Covariates {
            len,
            dim: 0,
            data: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("covariate rows differ in width".into()));
        }
        if dim == 0 {
            return Ok(Covariates::empty(rows.len()));
        }
        Covariates::new(dim, rows.concat())
    }

    /// One covariate column.
    pub fn from_column(values: Vec<f64>) -> Result<Self> {
        Covariates::new(1, values)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |t| self.data[t * self.dim + j])
    }

    /// Column means and standard deviations (population form, 1 when degenerate).
    pub fn standardization(&self) -> Standardization {
        let n = self.len.max(1) as f64;
        let mut center = vec![0.0; self.dim];
        let mut scale = vec![1.0; self.dim];
        for j in 0..self.dim {
            let mean = self.column(j).sum::<f64>() / n;
            let var = self.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            center[j] = mean;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Standardization { center, scale }
    }
}

/// Centering and scaling constants of covariate columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Standardization {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Coefficients of one regime's cloglog hazard regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRegression {
    pub beta0: f64,
    pub beta1: f64,
    pub betas: Vec<f64>,
}

impl HazardRegression {
    pub fn new(beta0: f64, beta1: f64, betas: Vec<f64>) -> Result<Self> {
        if !beta0.is_finite() || !beta1.is_finite() || betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("hazard coefficients must be finite".into()));
        }
        Ok(HazardRegression { beta0, beta1, betas })
    }

    /// Time-constant hazard `q` with `n_covariates` zero slopes.
    pub fn constant(q: f64, n_covariates: usize) -> Self {
        HazardRegression {
            beta0: cloglog(q),
            beta1: 0.0,
            betas: vec![0.0; n_covariates],
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.betas.len()
    }

    /// Hazard is constant in the dwell time and covariates.
    pub fn is_time_constant(&self) -> bool {
        self.beta1 == 0.0 && self.betas.iter().all(|&b| b == 0.0)
    }

    #[inline]
    pub fn linear_predictor(&self, d: usize, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.betas.len());
        let mut eta = self.beta0 + self.beta1 * (d as f64 - 0.5);
        for (b, v) in self.betas.iter().zip(x) {
            eta += b * v;
        }
        eta
    }

    /// `q(d; x)`, saturated into `[1e-12, 1 - 1e-12]`.
    #[inline]
    pub fn hazard(&self, d: usize, x: &[f64]) -> f64 {
        inverse_cloglog(self.linear_predictor(d, x))
    }

    /// Fills `out[d - 1] = q(d; x)` for `d = 1..=out.len()`.
    pub fn hazard_curve(&self, x: &[f64], out: &mut [f64]) {
        let (lo, hi) = eta_bounds();
        let eta1 = self.linear_predictor(1, x);
        let ratio = self.beta1.exp();
        let mut lambda = eta1.exp();
        for (i, q) in out.iter_mut().enumerate() {
            let eta_ok = lambda.is_normal() && lambda >= lo.exp() && lambda <= hi.exp();
            *q = if eta_ok {
                (-(-lambda).exp_m1()).clamp(HAZARD_EPS, 1.0 - HAZARD_EPS)
            } else {
                inverse_cloglog(eta1 + self.beta1 * i as f64)
            };
            lambda *= ratio;
        }
    }

    /// `S(d) = ∏_{u=1..d} (1 - q(u; x_u))` where `x_u` is row `u - 1` of `x_path`.
    pub fn survival(&self, d: usize, x_path: &Covariates) -> f64 {
        assert!(x_path.len() >= d, "covariate path shorter than dwell time");
        (1..=d).map(|u| 1.0 - self.hazard(u, x_path.row(u - 1))).product()
    }

    /// `p(d) = q(d) ∏_{u<d} (1 - q(u))`.
    pub fn dwell_pmf(&self, d: usize, x_path: &Covariates) -> f64 {
        assert!(d >= 1, "dwell times start at 1");
        self.hazard(d, x_path.row(d - 1)) * self.survival(d - 1, x_path)
    }

    /// Survival with the covariate held fixed at `x`.
    pub fn survival_fixed(&self, d: usize, x: &[f64]) -> f64 {
        (1..=d).map(|u| 1.0 - self.hazard(u, x)).product()
    }

    /// Dwell pmf with the covariate held fixed at `x`.
    pub fn dwell_pmf_fixed(&self, d: usize, x: &[f64]) -> f64 {
        assert!(d >= 1, "dwell times start at 1");
        self.hazard(d, x) * self.survival_fixed(d - 1, x)
    }
}

/// Weighted binomial observations for the hazard regression, stored by column.
///
/// Each event is a dwell time `d`, the covariate row in force, the weight of
/// leaving at `d` and the weight of staying past `d`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DwellEvents {
    dim: usize,
    dwell: Vec<f64>,
    x: Vec<f64>,
    switch_w: Vec<f64>,
    stay_w: Vec<f64>,
}

impl DwellEvents {
    pub fn new(dim: usize) -> Self {
        DwellEvents {
            dim,
            ..Default::default()
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        DwellEvents {
            dim,
            dwell: Vec::with_capacity(n),
            x: Vec::with_capacity(n * dim),
            switch_w: Vec::with_capacity(n),
            stay_w: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, d: usize, x: &[f64], switch_weight: f64, stay_weight: f64) {
        assert_eq!(x.len(), self.dim, "covariate row width mismatch");
        self.dwell.push(d as f64);
        self.x.extend_from_slice(x);
        self.switch_w.push(switch_weight);
        self.stay_w.push(stay_weight);
    }

    pub fn len(&self) -> usize {
        self.dwell.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dwell.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_switch(&self) -> f64 {
        self.switch_w.iter().sum()
    }

    pub fn total_stay(&self) -> f64 {
        self.stay_w.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |w: &f64| !w.is_finite() || *w < 0.0;
        if self.switch_w.iter().any(bad) || self.stay_w.iter().any(bad) {
            return Err(Error::InvalidInput("event weights must be finite and non-negative".into()));
        }
        if self.total_switch() + self.total_stay() <= 0.0 {
            return Err(Error::InvalidInput("event weights are all zero".into()));
        }
        if self.dwell.iter().any(|&d| d < 1.0) {
            return Err(Error::InvalidInput("dwell times start at 1".into()));
        }
        Ok(())
    }

    /// Design row `(1, d - 0.5, x)` for event `i`.
    fn design_row(&self, i: usize, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = self.dwell[i] - 0.5;
        out[2..].copy_from_slice(&self.x[i * self.dim..(i + 1) * self.dim]);
    }
}

/// `(q, 1 - q, log q)` for `q = 1 - exp(-λ)`, each to full relative precision.
#[inline]
fn survival_parts(lambda: f64) -> (f64, f64, f64) {
    if lambda < 0.7 {
        let q = -(-lambda).exp_m1();
        (q, 1.0 - q, q.ln())
    } else {
        let r = (-lambda).exp();
        (1.0 - r, r, (-r).ln_1p())
    }
}

/// Per-event contribution to the objective and its first two η-derivatives,
/// for `λ = exp(η)` inside `[lam_lo, lam_hi]`; outside, the hazard is
/// saturated and the derivatives vanish.
#[inline]
fn event_terms(lambda: f64, switch_w: f64, stay_w: f64, lam_lo: f64, lam_hi: f64) -> (f64, f64, f64, bool) {
    if !(lambda >= lam_lo && lambda <= lam_hi) {
        return (saturated_value(lambda, switch_w, stay_w, lam_lo), 0.0, 0.0, true);
    }
    let (q, r, ln_q) = survival_parts(lambda);
    let value = switch_w * ln_q - stay_w * lambda;
    let grad = switch_w * lambda * r / q - stay_w * lambda;
    // λ - q = λ²/2 - λ³/6 + λ⁴/24 - ...
    let lambda_minus_q = if lambda < 1e-3 {
        lambda * lambda * (0.5 - lambda * (1.0 / 6.0 - lambda * (1.0 / 24.0 - lambda / 120.0)))
    } else {
        lambda - q
    };
    let hess = -switch_w * lambda * r * lambda_minus_q / (q * q) - stay_w * lambda;
    (value, grad, hess, false)
}

#[inline]
fn event_value(lambda: f64, switch_w: f64, stay_w: f64, lam_lo: f64, lam_hi: f64) -> f64 {
    if !(lambda >= lam_lo && lambda <= lam_hi) {
        return saturated_value(lambda, switch_w, stay_w, lam_lo);
    }
    let ln_q = if switch_w > 0.0 { survival_parts(lambda).2 } else { 0.0 };
    switch_w * ln_q - stay_w * lambda
}

#[cold]
fn saturated_value(lambda: f64, switch_w: f64, stay_w: f64, lam_lo: f64) -> f64 {
    let q = if lambda < lam_lo { HAZARD_EPS } else { 1.0 - HAZARD_EPS };
    switch_w * q.ln() + stay_w * (-q).ln_1p()
}

fn lambda_bounds() -> (f64, f64) {
    let (lo, hi) = eta_bounds();
    (lo.exp(), hi.exp())
}

/// Weighted binomial log-likelihood `Σ s log q + f log(1 - q)` at `h`.
pub fn weighted_cloglog_objective(events: &DwellEvents, h: &HazardRegression) -> f64 {
    let (lo, hi) = lambda_bounds();
    let p = events.dim + 2;
    let mut row = vec![0.0; p];
    let coef = coefficient_vector(h);
    (0..events.len())
        .map(|i| {
            events.design_row(i, &mut row);
            let eta = dot(&row, &coef);
            event_value(eta.exp(), events.switch_w[i], events.stay_w[i], lo, hi)
        })
        .sum()
}

/// Gradient of [`weighted_cloglog_objective`] with respect to `(β0, β1, β...)`.
pub fn weighted_cloglog_gradient(events: &DwellEvents, h: &HazardRegression) -> Vec<f64> {
    let (lo, hi) = lambda_bounds();
    let p = events.dim + 2;
    let mut row = vec![0.0; p];
    let coef = coefficient_vector(h);
    let mut grad = vec![0.0; p];
    for i in 0..events.len() {
        events.design_row(i, &mut row);
        let eta = dot(&row, &coef);
        let (_, g, _, _) = event_terms(eta.exp(), events.switch_w[i], events.stay_w[i], lo, hi);
        for j in 0..p {
            grad[j] += g * row[j];
        }
    }
    grad
}

fn coefficient_vector(h: &HazardRegression) -> Vec<f64> {
    let mut v = Vec::with_capacity(h.betas.len() + 2);
    v.push(h.beta0);
    v.push(h.beta1);
    v.extend_from_slice(&h.betas);
    v
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a weighted cloglog regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloglogFit {
    pub coefficients: HazardRegression,
    pub objective: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Events whose linear predictor sits in the saturated region at the solution.
    pub clamp_events: usize,
    /// Coefficient indices (0 = intercept, 1 = dwell slope, 2.. = covariates)
    /// running off to infinity.
    pub diverging: Vec<usize>,
    /// All weight sits on one outcome, so the optimum is at infinity.
    pub degenerate_outcome: bool,
}

impl CloglogFit {
    pub fn separated(&self) -> bool {
        self.degenerate_outcome || !self.diverging.is_empty()
    }
}

/// Standardized design held in memory for Newton iterations.
struct Design {
    p: usize,
    rows: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Event `i` shares its covariates with event `i - 1` and has the next dwell
    /// time, so its `exp(η)` is the previous one times a constant factor.
    chained: Vec<bool>,
}

impl Design {
    fn build(events: &DwellEvents) -> Self {
        let p = events.dim + 2;
        let n = events.len();
        let mut raw = vec![0.0; n * p];
        for i in 0..n {
            events.design_row(i, &mut raw[i * p..(i + 1) * p]);
        }
        let weights: Vec<f64> = (0..n).map(|i| events.switch_w[i] + events.stay_w[i]).collect();
        let total: f64 = weights.iter().sum();
        let dim = events.dim;
        let chained = (0..n)
            .map(|i| {
                i > 0
                    && events.dwell[i] == events.dwell[i - 1] + 1.0
                    && events.x[i * dim..(i + 1) * dim] == events.x[(i - 1) * dim..i * dim]
            })
            .collect();
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 1..p {
            let mean = (0..n).map(|i| weights[i] * raw[i * p + j]).sum::<f64>() / total;
            let var = (0..n)
                .map(|i| weights[i] * (raw[i * p + j] - mean).powi(2))
                .sum::<f64>()
                / total;
            center[j] = mean;
            if var > 1e-24 {
                scale[j] = var.sqrt();
            }
        }
        for i in 0..n {
            for j in 1..p {
                raw[i * p + j] = (raw[i * p + j] - center[j]) / scale[j];
            }
        }
        Design {
            p,
            rows: raw,
            center,
            scale,
            chained,
        }
    }

    fn to_standard(&self, h: &HazardRegression) -> Vec<f64> {
        let beta = coefficient_vector(h);
        let mut gamma = vec![0.0; self.p];
        gamma[0] = beta[0];
        for j in 1..self.p {
            gamma[j] = beta[j] * self.scale[j];
            gamma[0] += beta[j] * self.center[j];
        }
        gamma
    }

    /// Chain rule from standardized to original coefficients.
    fn original_gradient(&self, grad: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        out[0] = grad[0];
        for j in 1..self.p {
            out[j] = grad[0] * self.center[j] + grad[j] * self.scale[j];
        }
        out
    }

    fn to_original(&self, gamma: &[f64]) -> HazardRegression {
        let mut beta = vec![0.0; self.p];
        beta[0] = gamma[0];
        for j in 1..self.p {
            beta[j] = gamma[j] / self.scale[j];
            beta[0] -= beta[j] * self.center[j];
        }
        HazardRegression {
            beta0: beta[0],
            beta1: beta[1],
            betas: beta[2..].to_vec(),
        }
    }

    /// Objective, gradient and (negated) Hessian in standardized coordinates.
    fn evaluate(&self, events: &DwellEvents, gamma: &[f64], want_derivs: bool) -> (f64, Vec<f64>, Vec<f64>) {
        match self.p {
            2 => self.evaluate_fixed::<2>(events, gamma, want_derivs),
            3 => self.evaluate_fixed::<3>(events, gamma, want_derivs),
            4 => self.evaluate_fixed::<4>(events, gamma, want_derivs),
            5 => self.evaluate_fixed::<5>(events, gamma, want_derivs),
            _ => self.evaluate_dyn(events, gamma, want_derivs),
        }
    }

    /// `exp(η)` for every event, chaining along consecutive dwell times.
    #[inline]
    fn next_lambda(&self, i: usize, row: &[f64], gamma: &[f64], prev: f64, step_factor: f64) -> f64 {
        if self.chained[i] && prev.is_normal() {
            let l = prev * step_factor;
            if l.is_normal() {
                return l;
            }
        }
        dot(row, gamma).exp()
    }

    fn evaluate_fixed<const P: usize>(
        &self,
        events: &DwellEvents,
        gamma: &[f64],
        want_derivs: bool,
    ) -> (f64, Vec<f64>, Vec<f64>) {
        let (lo, hi) = lambda_bounds();
        let step_factor = (gamma[1] / self.scale[1]).exp();
        let mut value = 0.0;
        let mut grad = [0.0; P];
        let mut info = [[0.0; P]; P];
        let mut lambda = 0.0f64;
        for (i, row) in self.rows.chunks_exact(P).enumerate() {
            lambda = self.next_lambda(i, row, gamma, lambda, step_factor);
            let (sw, fw) = (events.switch_w[i], events.stay_w[i]);
            if !want_derivs {
                value += event_value(lambda, sw, fw, lo, hi);
                continue;
            }
            let (v, g, h, _) = event_terms(lambda, sw, fw, lo, hi);
            value += v;
            let row: &[f64; P] = row.try_into().expect("row width");
            for a in 0..P {
                grad[a] += g * row[a];
                let ha = -h * row[a];
                for b in a..P {
                    info[a][b] += ha * row[b];
                }
            }
        }
        if !want_derivs {
            return (value, Vec::new(), Vec::new());
        }
        let mut full = vec![0.0; P * P];
        for a in 0..P {
            for b in a..P {
                full[a * P + b] = info[a][b];
                full[b * P + a] = info[a][b];
            }
        }
        (value, grad.to_vec(), full)
    }

    fn evaluate_dyn(&self, events: &DwellEvents, gamma: &[f64], want_derivs: bool) -> (f64, Vec<f64>, Vec<f64>) {
        let (lo, hi) = lambda_bounds();
        let p = self.p;
        let step_factor = (gamma[1] / self.scale[1]).exp();
        let mut value = 0.0;
        let mut grad = vec![0.0; if want_derivs { p } else { 0 }];
        let mut info = vec![0.0; if want_derivs { p * p } else { 0 }];
        let mut lambda = 0.0f64;
        for (i, row) in self.rows.chunks_exact(p).enumerate() {
            lambda = self.next_lambda(i, row, gamma, lambda, step_factor);
            let (sw, fw) = (events.switch_w[i], events.stay_w[i]);
            if !want_derivs {
                value += event_value(lambda, sw, fw, lo, hi);
                continue;
            }
            let (v, g, h, _) = event_terms(lambda, sw, fw, lo, hi);
            value += v;
            for a in 0..p {
                grad[a] += g * row[a];
                let ha = -h * row[a];
                for b in a..p {
                    info[a * p + b] += ha * row[b];
                }
            }
        }
        if want_derivs {
            for a in 0..p {
                for b in 0..a {
                    info[a * p + b] = info[b * p + a];
                }
            }
        }
        (value, grad, info)
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major, `n × n`).
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

fn newton_direction(info: &[f64], grad: &[f64], p: usize) -> Result<Vec<f64>> {
    if let Some(step) = cholesky_solve(info, grad, p) {
        return Ok(step);
    }
    let trace: f64 = (0..p).map(|j| info[j * p + j].abs()).sum::<f64>() / p as f64;
    let mut ridge = 1e-10 * (trace + 1.0);
    for _ in 0..12 {
        let mut damped = info.to_vec();
        for j in 0..p {
            damped[j * p + j] += ridge;
        }
        if let Some(step) = cholesky_solve(&damped, grad, p) {
            if step.iter().all(|s| s.is_finite()) {
                return Ok(step);
            }
        }
        ridge *= 10.0;
    }
    Err(Error::Singular)
}

/// Maximizes `Σ s log q + f log(1 - q)` over the cloglog coefficients by
/// damped Newton with step halving, starting from `init`.
///
/// The objective never decreases along the iterations. Covariates and dwell
/// times are standardized internally and coefficients are reported on the
/// original scale.
pub fn fit_weighted_cloglog(events: &DwellEvents, init: &HazardRegression) -> Result<CloglogFit> {
    fit_weighted_cloglog_limited(events, init, MAX_NEWTON_ITERS)
}

/// [`fit_weighted_cloglog`] with at most `max_iters` Newton iterations. With
/// a small cap this is a safeguarded partial maximization: the objective
/// still does not decrease.
pub fn fit_weighted_cloglog_limited(events: &DwellEvents, init: &HazardRegression, max_iters: usize) -> Result<CloglogFit> {
    events.validate()?;
    if init.n_covariates() != events.dim() {
        return Err(Error::InvalidInput(format!(
            "initial coefficients have {} covariates, events have {}",
            init.n_covariates(),
            events.dim()
        )));
    }
    let degenerate_outcome = events.total_switch() <= 0.0 || events.total_stay() <= 0.0;
    let design = Design::build(events);
    let p = design.p;
    let mut gamma = design.to_standard(init);
    let (mut value, mut grad, mut info) = design.evaluate(events, &gamma, true);
    let mut iterations = 0;
    while iterations < max_iters {
        if norm(&grad) < NEWTON_GRAD_TOL * 1e-2 {
            break;
        }
        let step = newton_direction(&info, &grad, p)?;
        let noise = VALUE_RESOLUTION * (1.0 + value.abs());
        if 0.5 * dot(&grad, &step) < noise {
            // The predicted gain is below what the objective can resolve, so
            // the full step is judged by the gradient instead.
            let trial: Vec<f64> = gamma.iter().zip(&step).map(|(g, s)| g + s).collect();
            let evaluated = design.evaluate(events, &trial, true);
            iterations += 1;
            if !(evaluated.0 >= value - noise && norm(&evaluated.1) < norm(&grad)) {
                break;
            }
            gamma = trial;
            value = evaluated.0;
            grad = evaluated.1;
            info = evaluated.2;
            continue;
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-10 {
            let trial: Vec<f64> = gamma.iter().zip(&step).map(|(g, s)| g + alpha * s).collect();
            // Full steps are usually accepted, so their derivatives are computed up front.
            let evaluated = design.evaluate(events, &trial, alpha == 1.0);
            if evaluated.0.is_finite() && evaluated.0 >= value {
                accepted = Some((trial, evaluated));
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some((trial, evaluated)) = accepted else { break };
        let evaluated = if alpha == 1.0 { evaluated } else { design.evaluate(events, &trial, true) };
        gamma = trial;
        value = evaluated.0;
        grad = evaluated.1;
        info = evaluated.2;
    }
    let coefficients = design.to_original(&gamma);
    let gradient_norm = norm(&design.original_gradient(&grad));
    let (lo, hi) = eta_bounds();
    let clamp_events = (0..events.len())
        .filter(|&i| {
            let eta = dot(&design.rows[i * p..(i + 1) * p], &gamma);
            eta < lo || eta > hi
        })
        .count();
    let diverging: Vec<usize> = gamma
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() > DIVERGENCE_BOUND)
        .map(|(j, _)| j)
        .collect();
    Ok(CloglogFit {
        converged: gradient_norm < NEWTON_GRAD_TOL || norm(&grad) < NEWTON_GRAD_TOL,
        coefficients,
        objective: value,
        iterations,
        gradient_norm,
        clamp_events,
        diverging,
        degenerate_outcome,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k2_state1() -> HazardRegression {
        HazardRegression::new(-8.0, 0.35, vec![-0.5]).unwrap()
    }

    fn k2_state2() -> HazardRegression {
        HazardRegression::new(-3.0, 0.075, vec![0.5]).unwrap()
    }

    #[test]
    fn zero_predictor_hazard() {
        let h = HazardRegression::new(0.0, 0.0, vec![0.0]).unwrap();
        let expected = 1.0 - (-1.0f64).exp();
        for d in [1, 7, 100] {
            assert!((h.hazard(d, &[0.0]) - expected).abs() < 1e-15);
        }
        assert!((expected - 0.632121).abs() < 1e-6);
    }

    #[test]
    fn table_state_hazard_at_first_step() {
        let expected = 1.0 - (-(-2.9625f64).exp()).exp();
        assert!((k2_state2().hazard(1, &[0.0]) - expected).abs() < 1e-15);
        assert!((expected - 0.050376).abs() < 1e-6);
    }

    #[test]
    fn hazard_curve_matches_pointwise_hazard() {
        let x = [1.7];
        for h in [k2_state1(), k2_state2(), HazardRegression::new(2.0, 0.4, vec![1.0]).unwrap()] {
            let mut out = vec![0.0; 300];
            h.hazard_curve(&x, &mut out);
            for (i, q) in out.iter().enumerate() {
                let direct = h.hazard(i + 1, &x);
                assert!((q - direct).abs() <= 1e-13 * direct.max(1e-300), "d={} {q} vs {direct}", i + 1);
            }
        }
    }

    #[test]
    fn constant_hazard_ignores_dwell() {
        let h = HazardRegression::new(-1.3, 0.0, vec![0.0]).unwrap();
        assert_eq!(h.hazard(1, &[2.0]), h.hazard(100, &[2.0]));
        assert!(h.is_time_constant());
    }

    #[test]
    fn hazard_saturates() {
        let h = HazardRegression::new(500.0, 0.0, vec![]).unwrap();
        assert!((h.hazard(1, &[]) - (1.0 - HAZARD_EPS)).abs() < 1e-15);
        let h = HazardRegression::new(-500.0, 0.0, vec![]).unwrap();
        assert!((h.hazard(1, &[]) - HAZARD_EPS).abs() < 1e-20);
    }

    #[test]
    fn geometric_survival_and_pmf() {
        let h = HazardRegression::new(2.0f64.ln().ln(), 0.0, vec![]).unwrap();
        let path = Covariates::empty(10);
        assert!((h.survival(3, &path) - 0.125).abs() < 1e-15);
        assert_eq!(h.survival(0, &path), 1.0);
        for (d, p) in [(1, 0.5), (2, 0.25), (3, 0.125)] {
            assert!((h.dwell_pmf(d, &path) - p).abs() < 1e-15);
        }
    }

    #[test]
    fn survival_is_cumulative_product_of_hazards() {
        let h = k2_state1();
        let path = Covariates::from_column(vec![0.0; 5]).unwrap();
        let mut oracle = 1.0;
        for d in 1..=5 {
            oracle *= 1.0 - h.hazard(d, &[0.0]);
        }
        assert!((h.survival(5, &path) - oracle).abs() < 1e-15);
    }

    #[test]
    fn pmf_sums_to_one_for_table_rows() {
        // Partial sum plus the geometric bound on the tail mass S(200).
        let rows = [
            (-8.0, 0.35, -0.5),
            (-3.0, 0.075, 0.5),
            (-8.0, 0.4, -0.5),
            (-5.0, 0.15, 0.2),
            (-3.0, 0.05, 0.7),
            (-6.0, 0.3, 0.2),
            (-4.0, 0.05, 0.7),
            (-2.0, 0.15, -0.1),
        ];
        for (b0, b1, b2) in rows {
            let h = HazardRegression::new(b0, b1, vec![b2]).unwrap();
            let partial: f64 = (1..=200).map(|d| h.dwell_pmf_fixed(d, &[0.0])).sum();
            let tail = h.survival_fixed(200, &[0.0]);
            assert!(partial + tail >= 1.0 - 1e-10, "row {b0} {b1} {b2}");
            assert!(partial <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn increasing_hazard_crosses_constant() {
        let constant = HazardRegression::new(-2.0, 0.0, vec![]).unwrap();
        let rising = HazardRegression::new(-4.0, 0.3, vec![]).unwrap();
        let x: [f64; 0] = [];
        assert!(rising.dwell_pmf_fixed(1, &x) < constant.dwell_pmf_fixed(1, &x));
        let mut saw_above = false;
        let mut then_below = false;
        for d in 1..=80 {
            let (r, c) = (rising.dwell_pmf_fixed(d, &x), constant.dwell_pmf_fixed(d, &x));
            if r > c {
                saw_above = true;
            } else if saw_above {
                then_below = true;
            }
        }
        assert!(saw_above && then_below);
    }

    #[test]
    fn survival_difference_is_pmf() {
        let h = k2_state2();
        let path = Covariates::from_column((0..40).map(|t| (t as f64 * 0.7).sin() * 3.0).collect())
            .unwrap();
        for d in 0..39 {
            let lhs = h.survival(d, &path) - h.survival(d + 1, &path);
            assert!((lhs - h.dwell_pmf(d + 1, &path)).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_rate_mle_is_closed_form() {
        // Weighted event rate r gives beta0 = cloglog(r) when only an intercept varies.
        let mut events = DwellEvents::new(0);
        for d in 1..=30 {
            events.push(d, &[], 30.0, 70.0);
        }
        let fit = fit_weighted_cloglog(&events, &HazardRegression::constant(0.5, 0)).unwrap();
        assert!((fit.coefficients.beta0 - (-(0.7f64).ln()).ln()).abs() < 1e-3);
        assert!(fit.coefficients.beta1.abs() < 1e-3);
        assert!(fit.gradient_norm < NEWTON_GRAD_TOL);
        assert!(fit.converged && !fit.separated());
    }

    #[test]
    fn perfect_prediction_is_flagged() {
        let mut events = DwellEvents::new(0);
        events.push(1, &[], 5.0, 0.0);
        for d in 2..=10 {
            events.push(d, &[], 0.0, 5.0);
        }
        let fit = fit_weighted_cloglog(&events, &HazardRegression::constant(0.3, 0)).unwrap();
        assert!(fit.separated());
        assert!(fit.diverging.contains(&1));
    }

    #[test]
    fn no_switches_is_flagged() {
        let mut events = DwellEvents::new(1);
        for d in 1..=10 {
            events.push(d, &[d as f64 * 0.1], 0.0, 2.0);
        }
        let fit = fit_weighted_cloglog(&events, &HazardRegression::constant(0.3, 1)).unwrap();
        assert!(fit.degenerate_outcome && fit.separated());
    }

    #[test]
    fn rejects_bad_weights() {
        let mut events = DwellEvents::new(0);
        events.push(1, &[], -1.0, 1.0);
        assert!(fit_weighted_cloglog(&events, &HazardRegression::constant(0.3, 0)).is_err());
        let mut events = DwellEvents::new(0);
        events.push(1, &[], 0.0, 0.0);
        assert!(fit_weighted_cloglog(&events, &HazardRegression::constant(0.3, 0)).is_err());
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a = [4.0, 1.0, 1.0, 3.0];
        let x = cholesky_solve(&a, &[1.0, 2.0], 2).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0], 2).is_none());
    }
}
