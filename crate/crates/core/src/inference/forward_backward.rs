//! Scaled forward-backward recursions on the augmented `(state, dwell)` chain.
//!
//! Forward variables are renormalized at every step and the normalizers are
//! accumulated in log space, so the recursions do not underflow on long
//! series. Emission densities are divided by their per-step maximum before
//! entering the recursions; the maxima are added back to the log-likelihood.

use serde::{Deserialize, Serialize};

use crate::circular::{ToroidalParams, TorusPoint};
use crate::dwell_hazard::Covariates;
use crate::error::{Error, Result};
use crate::semi_markov::SemiMarkovSpec;

/// Smoothed posteriors produced by the E-step.
///
/// `trans_post(t, k, h, d)` is the probability that the augmented chain sits in
/// `(k, d)` at `t - 1` and in state `h` at `t` (for `h = k` the move to
/// `(k, min(d + 1, M))`, otherwise the move to `(h, 1)`). It is zero at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    n_states: usize,
    max_dwell: usize,
    len: usize,
    state_post: Vec<f64>,
    augmented_post: Vec<f64>,
    trans_post: Vec<f64>,
}

impl Posteriors {
    /// Builds posteriors from per-time state probabilities only (no dwell or
    /// transition information). Used for externally supplied classifications.
    pub fn from_state_probabilities(rows: &[Vec<f64>], max_dwell: usize) -> Result<Self> {
        let len = rows.len();
        let n_states = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_states) || n_states == 0 {
            return Err(Error::InvalidInput("posterior rows must share a positive width".into()));
        }
        let mut augmented_post = vec![0.0; len * n_states * max_dwell];
        for (t, r) in rows.iter().enumerate() {
            for (k, &p) in r.iter().enumerate() {
                augmented_post[(t * n_states + k) * max_dwell] = p;
            }
        }
        Ok(Posteriors {
            n_states,
            max_dwell,
            len,
            state_post: rows.concat(),
            augmented_post,
            trans_post: vec![0.0; len * n_states * n_states * max_dwell],
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn max_dwell(&self) -> usize {
        self.max_dwell
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn state(&self, t: usize, k: usize) -> f64 {
        self.state_post[t * self.n_states + k]
    }

    pub fn state_row(&self, t: usize) -> &[f64] {
        &self.state_post[t * self.n_states..(t + 1) * self.n_states]
    }

    /// `P(state k, dwell counter d at t | y)`, `d` starting at 1.
    #[inline]
    pub fn augmented(&self, t: usize, k: usize, d: usize) -> f64 {
        self.augmented_post[(t * self.n_states + k) * self.max_dwell + d - 1]
    }

    #[inline]
    pub fn transition(&self, t: usize, k: usize, h: usize, d: usize) -> f64 {
        self.trans_post[self.trans_index(t, k, h, d)]
    }

    #[inline]
    fn trans_index(&self, t: usize, k: usize, h: usize, d: usize) -> usize {
        ((t * self.n_states + k) * self.n_states + h) * self.max_dwell + d - 1
    }

    /// Expected occupancy `Σ_t P(state k at t | y)`.
    pub fn state_mass(&self) -> Vec<f64> {
        (0..self.n_states)
            .map(|k| (0..self.len).map(|t| self.state(t, k)).sum())
            .collect()
    }

    /// Relabels states so that new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let (kn, m) = (self.n_states, self.max_dwell);
        let mut out = self.clone();
        for t in 0..self.len {
            for (i, &pi) in perm.iter().enumerate() {
                out.state_post[t * kn + i] = self.state(t, pi);
                for d in 1..=m {
                    out.augmented_post[(t * kn + i) * m + d - 1] = self.augmented(t, pi, d);
                    for (j, &pj) in perm.iter().enumerate() {
                        let dst = out.trans_index(t, i, j, d);
                        out.trans_post[dst] = self.transition(t, pi, pj, d);
                    }
                }
            }
        }
        out
    }
}

/// Log-likelihood with the per-step log normalizers of the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    pub loglik: f64,
    /// `log c_t` including the emission rescaling at step `t`.
    pub log_scales: Vec<f64>,
}

/// Precomputed per-step quantities shared by the forward and backward passes.
struct Workspace {
    kn: usize,
    m: usize,
    len: usize,
    /// Emission densities divided by their per-step maximum, `T × K`.
    emission: Vec<f64>,
    emission_log_max: Vec<f64>,
    /// `q_k(d; x_t)` for the move into step `t`, `T × K × M` (row 0 unused).
    hazard: Vec<f64>,
    omega: Vec<f64>,
    pi: Vec<f64>,
}

impl Workspace {
    fn build(
        spec: &SemiMarkovSpec,
        thetas: &[ToroidalParams],
        y: &[TorusPoint],
        x: &Covariates,
    ) -> Result<Self> {
        let (kn, m, len) = (spec.n_states(), spec.max_dwell(), y.len());
        if thetas.len() != kn {
            return Err(Error::InvalidInput(format!("{} emission laws for {kn} states", thetas.len())));
        }
        if len == 0 {
            return Err(Error::InvalidInput("empty series".into()));
        }
        if x.len() != len {
            return Err(Error::InvalidInput(format!(
                "series has {len} observations but {} covariate rows",
                x.len()
            )));
        }
        if x.dim() != spec.n_covariates() {
            return Err(Error::InvalidInput(format!(
                "covariate width {} does not match hazard regressions ({})",
                x.dim(),
                spec.n_covariates()
            )));
        }
        let coefs: Vec<_> = thetas.iter().map(|th| th.coefficients()).collect();
        let means: Vec<_> = thetas
            .iter()
            .map(|th| (th.mu1().radians().sin_cos(), th.mu2().radians().sin_cos()))
            .collect();
        let mut emission = vec![0.0; len * kn];
        let mut emission_log_max = vec![0.0; len];
        for (t, obs) in y.iter().enumerate() {
            let (s1, c1) = obs.y1.radians().sin_cos();
            let (s2, c2) = obs.y2.radians().sin_cos();
            let row = &mut emission[t * kn..(t + 1) * kn];
            for k in 0..kn {
                let ((sm1, cm1), (sm2, cm2)) = means[k];
                let (cos1, sin1) = (c1 * cm1 + s1 * sm1, s1 * cm1 - c1 * sm1);
                let (cos2, sin2) = (c2 * cm2 + s2 * sm2, s2 * cm2 - c2 * sm2);
                row[k] = coefs[k].c / coefs[k].denominator(cos1, sin1, cos2, sin2);
            }
            let max = row.iter().copied().fold(0.0, f64::max);
            if !(max > 0.0 && max.is_finite()) {
                return Err(Error::ZeroLikelihood { t });
            }
            row.iter_mut().for_each(|v| *v /= max);
            emission_log_max[t] = max.ln();
        }

        let mut hazard = vec![0.0; len * kn * m];
        for t in 1..len {
            let xt = x.row(t);
            for (k, h) in spec.hazards().iter().enumerate() {
                let base = (t * kn + k) * m;
                h.hazard_curve(xt, &mut hazard[base..base + m]);
            }
        }
        let omega = (0..kn * kn).map(|i| spec.omega().get(i / kn, i % kn)).collect();
        Ok(Workspace {
            kn,
            m,
            len,
            emission,
            emission_log_max,
            hazard,
            omega,
            pi: spec.pi().to_vec(),
        })
    }

    /// Scaled forward variables (`T × K × M`) and `log c_t`.
    fn forward(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let (kn, m, len) = (self.kn, self.m, self.len);
        let width = kn * m;
        let mut alpha = vec![0.0; len * width];
        let mut scales = vec![0.0; len];
        let mut log_scales = vec![0.0; len];
        let mut out = vec![0.0; kn];

        for k in 0..kn {
            alpha[k * m] = self.pi[k] * self.emission[k];
        }
        self.normalize(&mut alpha[..width], 0, &mut scales, &mut log_scales)?;

        for t in 1..len {
            let (prev_all, cur_all) = alpha.split_at_mut(t * width);
            let prev = &prev_all[(t - 1) * width..];
            let cur = &mut cur_all[..width];
            let haz = &self.hazard[t * width..(t + 1) * width];
            for k in 0..kn {
                let base = k * m;
                let mut leave = 0.0;
                for d in 0..m {
                    let a = prev[base + d];
                    let q = haz[base + d];
                    leave += a * q;
                    let stay = a * (1.0 - q);
                    let next = if d + 1 < m { d + 1 } else { d };
                    cur[base + next] += stay;
                }
                out[k] = leave;
            }
            for h in 0..kn {
                let mut inflow = 0.0;
                for k in 0..kn {
                    inflow += out[k] * self.omega[k * kn + h];
                }
                cur[h * m] = inflow;
            }
            let em = &self.emission[t * kn..(t + 1) * kn];
            for k in 0..kn {
                for v in &mut cur[k * m..(k + 1) * m] {
                    *v *= em[k];
                }
            }
            self.normalize(cur, t, &mut scales, &mut log_scales)?;
        }
        Ok((alpha, scales, log_scales))
    }

    fn normalize(&self, row: &mut [f64], t: usize, scales: &mut [f64], log_scales: &mut [f64]) -> Result<()> {
        let c: f64 = row.iter().sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::ZeroLikelihood { t });
        }
        row.iter_mut().for_each(|v| *v /= c);
        scales[t] = c;
        log_scales[t] = c.ln() + self.emission_log_max[t];
        Ok(())
    }
}

/// Log-likelihood of the data under the truncated augmented chain.
pub fn forward_loglik(
    spec: &SemiMarkovSpec,
    thetas: &[ToroidalParams],
    y: &[TorusPoint],
    x: &Covariates,
) -> Result<ForwardRecord> {
    let ws = Workspace::build(spec, thetas, y, x)?;
    let (_, _, log_scales) = ws.forward()?;
    Ok(ForwardRecord {
        loglik: log_scales.iter().sum(),
        log_scales,
    })
}

/// Smoothed marginal and pairwise posteriors, and the log-likelihood.
pub fn e_step(
    spec: &SemiMarkovSpec,
    thetas: &[ToroidalParams],
    y: &[TorusPoint],
    x: &Covariates,
) -> Result<(Posteriors, f64)> {
    let ws = Workspace::build(spec, thetas, y, x)?;
    let (alpha, scales, log_scales) = ws.forward()?;
    let (kn, m, len) = (ws.kn, ws.m, ws.len);
    let width = kn * m;

    let mut augmented_post = vec![0.0; len * width];
    let mut trans_post = vec![0.0; len * kn * kn * m];
    let mut beta_next = vec![1.0; width];
    let mut beta_cur = vec![0.0; width];
    let mut entry = vec![0.0; kn];
    let mut cross = vec![0.0; kn];

    augmented_post[(len - 1) * width..].copy_from_slice(&alpha[(len - 1) * width..]);

    for t in (1..len).rev() {
        let em = &ws.emission[t * kn..(t + 1) * kn];
        let haz = &ws.hazard[t * width..(t + 1) * width];
        let prev = &alpha[(t - 1) * width..t * width];
        let inv_c = 1.0 / scales[t];
        for h in 0..kn {
            entry[h] = em[h] * beta_next[h * m];
        }
        for k in 0..kn {
            cross[k] = (0..kn).map(|h| ws.omega[k * kn + h] * entry[h]).sum();
        }
        for k in 0..kn {
            for d in 0..m {
                let i = k * m + d;
                let next = k * m + if d + 1 < m { d + 1 } else { d };
                let q = haz[i];
                let stay_term = (1.0 - q) * em[k] * beta_next[next];
                beta_cur[i] = (stay_term + q * cross[k]) * inv_c;

                let a = prev[i] * inv_c;
                let tbase = ((t * kn + k) * kn) * m + d;
                trans_post[tbase + k * m] = a * stay_term;
                let aq = a * q;
                for h in (0..kn).filter(|&h| h != k) {
                    trans_post[tbase + h * m] = aq * ws.omega[k * kn + h] * entry[h];
                }
            }
        }
        for i in 0..width {
            augmented_post[(t - 1) * width + i] = prev[i] * beta_cur[i];
        }
        std::mem::swap(&mut beta_next, &mut beta_cur);
    }

    let mut state_post = vec![0.0; len * kn];
    for t in 0..len {
        let row = &mut augmented_post[t * width..(t + 1) * width];
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        }
        for k in 0..kn {
            state_post[t * kn + k] = row[k * m..(k + 1) * m].iter().sum();
        }
    }

    Ok((
        Posteriors {
            n_states: kn,
            max_dwell: m,
            len,
            state_post,
            augmented_post,
            trans_post,
        },
        log_scales.iter().sum(),
    ))
}
