//! Reference implementations used as test oracles. They work on plain
//! numbers and share no code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small model in raw form.
#[derive(Debug, Clone)]
pub struct RawModel {
    pub pi: Vec<f64>,
    /// Off-diagonal switching probabilities, row-major `K × K`.
    pub omega: Vec<Vec<f64>>,
    /// `[β0, β1, β_cov...]` per state.
    pub beta: Vec<Vec<f64>>,
    /// `[μ1, μ2, κ1, κ2, ρ]` per state.
    pub theta: Vec<[f64; 5]>,
    pub max_dwell: usize,
}

pub fn bwc_density(theta: &[f64; 5], y1: f64, y2: f64) -> f64 {
    let [m1, m2, k1, k2, rho] = *theta;
    let (s1, s2) = (k1 * k1, k2 * k2);
    let norm = (1.0 - rho * rho) * (1.0 - s1) * (1.0 - s2) / (4.0 * PI * PI);
    let (a1, a2) = (y1 - m1, y2 - m2);
    let c0 = (1.0 + rho * rho) * (1.0 + s1) * (1.0 + s2) - 8.0 * rho.abs() * k1 * k2;
    let c1 = 2.0 * (1.0 + rho * rho) * k1 * (1.0 + s2) - 4.0 * rho.abs() * (1.0 + s1) * k2;
    let c2 = 2.0 * (1.0 + rho * rho) * (1.0 + s1) * k2 - 4.0 * rho.abs() * k1 * (1.0 + s2);
    let c3 = -4.0 * (1.0 + rho * rho) * k1 * k2 + 2.0 * rho.abs() * (1.0 + s1) * (1.0 + s2);
    let c4 = 2.0 * rho * (1.0 - s1) * (1.0 - s2);
    norm / (c0 - c1 * a1.cos() - c2 * a2.cos() - c3 * a1.cos() * a2.cos() - c4 * a1.sin() * a2.sin())
}

pub fn wrapped_cauchy(mu: f64, kappa: f64, y: f64) -> f64 {
    (1.0 - kappa * kappa) / (2.0 * PI * (1.0 + kappa * kappa - 2.0 * kappa * (y - mu).cos()))
}

pub fn cloglog_hazard(beta: &[f64], d: usize, x: &[f64]) -> f64 {
    let eta = beta[0] + beta[1] * (d as f64 - 0.5) + beta[2..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    (1.0 - (-eta.exp()).exp()).clamp(1e-12, 1.0 - 1e-12)
}

/// Exact data likelihood by summing over all `K^T` state paths.
pub fn brute_force_loglik(m: &RawModel, y: &[(f64, f64)], x: &[Vec<f64>]) -> f64 {
    let k = m.pi.len();
    let t_len = y.len();
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    for code in 0..k.pow(t_len as u32) {
        let mut c = code;
        for s in path.iter_mut() {
            *s = c % k;
            c /= k;
        }
        let mut p = m.pi[path[0]] * bwc_density(&m.theta[path[0]], y[0].0, y[0].1);
        let mut dwell = 1;
        for t in 1..t_len {
            let (from, to) = (path[t - 1], path[t]);
            let q = cloglog_hazard(&m.beta[from], dwell.min(m.max_dwell), &x[t]);
            if from == to {
                p *= 1.0 - q;
                dwell += 1;
            } else {
                p *= q * m.omega[from][to];
                dwell = 1;
            }
            p *= bwc_density(&m.theta[to], y[t].0, y[t].1);
        }
        total += p;
    }
    total.ln()
}

/// Smoothed state probabilities by path enumeration.
pub fn brute_force_state_posteriors(m: &RawModel, y: &[(f64, f64)], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = m.pi.len();
    let t_len = y.len();
    let mut post = vec![vec![0.0; k]; t_len];
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    for code in 0..k.pow(t_len as u32) {
        let mut c = code;
        for s in path.iter_mut() {
            *s = c % k;
            c /= k;
        }
        let mut p = m.pi[path[0]] * bwc_density(&m.theta[path[0]], y[0].0, y[0].1);
        let mut dwell = 1;
        for t in 1..t_len {
            let (from, to) = (path[t - 1], path[t]);
            let q = cloglog_hazard(&m.beta[from], dwell.min(m.max_dwell), &x[t]);
            if from == to {
                p *= 1.0 - q;
                dwell += 1;
            } else {
                p *= q * m.omega[from][to];
                dwell = 1;
            }
            p *= bwc_density(&m.theta[to], y[t].0, y[t].1);
        }
        total += p;
        for (t, &s) in path.iter().enumerate() {
            post[t][s] += p;
        }
    }
    for row in &mut post {
        row.iter_mut().for_each(|v| *v /= total);
    }
    post
}

/// Scaled forward recursion of an ordinary hidden Markov chain whose
/// transition matrix may change with time.
pub fn hmm_loglik<F>(pi: &[f64], mut transition: F, emission: &[Vec<f64>]) -> f64
where
    F: FnMut(usize) -> Vec<Vec<f64>>,
{
    let k = pi.len();
    let mut alpha: Vec<f64> = (0..k).map(|i| pi[i] * emission[0][i]).collect();
    let mut ll = 0.0;
    for t in 0..emission.len() {
        if t > 0 {
            let a = transition(t);
            alpha = (0..k)
                .map(|j| (0..k).map(|i| alpha[i] * a[i][j]).sum::<f64>() * emission[t][j])
                .collect();
        }
        let c: f64 = alpha.iter().sum();
        ll += c.ln();
        alpha.iter_mut().for_each(|v| *v /= c);
    }
    ll
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-3).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// A random model with one covariate.
pub fn random_model<R: Rng>(rng: &mut R, k: usize, max_dwell: usize) -> RawModel {
    let omega = (0..k)
        .map(|i| {
            let w = simplex(rng, k - 1);
            let mut row = vec![0.0; k];
            let mut it = w.into_iter();
            for (j, v) in row.iter_mut().enumerate() {
                if j != i {
                    *v = it.next().unwrap();
                }
            }
            row
        })
        .collect();
    RawModel {
        pi: simplex(rng, k),
        omega,
        beta: (0..k)
            .map(|_| {
                vec![
                    rng.random_range(-3.0..0.5),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.8..0.8),
                ]
            })
            .collect(),
        theta: (0..k)
            .map(|_| {
                [
                    rng.random_range(-PI..PI),
                    rng.random_range(-PI..PI),
                    rng.random_range(0.0..0.9),
                    rng.random_range(0.0..0.9),
                    rng.random_range(-0.9..0.9),
                ]
            })
            .collect(),
        max_dwell,
    }
}

pub fn random_series<R: Rng>(rng: &mut R, len: usize) -> (Vec<(f64, f64)>, Vec<Vec<f64>>) {
    let y = (0..len)
        .map(|_| (rng.random_range(-PI..PI), rng.random_range(-PI..PI)))
        .collect();
    let x = (0..len).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
    (y, x)
}

/// All rows of the simulation-design table, in the order they are printed.
pub const DESIGN_THETAS: [[f64; 5]; 9] = [
    [0.5, 0.5, 0.2, 0.3, 0.6],
    [2.0, 2.0, 0.2, 0.8, 0.1],
    [0.5, 0.5, 0.2, 0.3, 0.6],
    [2.0, 2.0, 0.2, 0.8, 0.1],
    [2.0, -2.0, 0.5, 0.5, -0.6],
    [0.5, 0.5, 0.2, 0.3, 0.6],
    [2.0, 2.0, 0.2, 0.8, 0.1],
    [-2.0, -2.0, 0.7, 0.9, -0.3],
    [2.0, -2.0, 0.5, 0.5, -0.6],
];

/// Trapezoid rule on an `n × n` periodic grid over the torus.
pub fn torus_integral(theta: &[f64; 5], n: usize) -> f64 {
    let h = 2.0 * PI / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let a = -PI + i as f64 * h;
        for j in 0..n {
            let b = -PI + j as f64 * h;
            s += bwc_density(theta, a, b);
        }
    }
    s * h * h
}
