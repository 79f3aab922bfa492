//! The latent nonhomogeneous semi-Markov chain and its augmented Markov
//! representation.
//!
//! The chain is embedded into a Markov chain on pairs `(state k, dwell
//! counter d)`, `d = 1..M`. From `(k, d)` at time `t - 1` it moves to
//! `(k, d + 1)` (or stays at `(k, M)`) with probability `1 - q_k(d; x_t)`
//! and to `(h, 1)` with probability `ω_kh q_k(d; x_t)`. The counter
//! saturates at `M`, which gives a geometric tail to dwell times longer
//! than `M`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circular::{ToroidalParams, TorusPoint};
use crate::dwell_hazard::{Covariates, HazardRegression};
use crate::error::{Error, Result};
use crate::seeds::rng_from;

/// Longest series accepted by [`brute_force_data_loglik`].
pub const BRUTE_FORCE_MAX_LEN: usize = 12;

/// Conditional switch probabilities `ω_kh` with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Domain("transition matrix needs at least 2 states".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Domain(format!("row {k} has {} entries, want {n}", row.len())));
            }
            if row[k] != 0.0 {
                return Err(Error::Domain(format!("diagonal entry {k} must be zero")));
            }
            if row.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
                return Err(Error::Domain(format!("row {k} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("row {k} sums to {sum}, want 1")));
            }
            data.extend_from_slice(row);
        }
        Ok(TransitionMatrix { n, data })
    }

    /// Equal switch probabilities to every other state.
    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / (n as f64 - 1.0);
        let data = (0..n * n)
            .map(|i| if i / n == i % n { 0.0 } else { w })
            .collect();
        TransitionMatrix { n, data }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.data[from * self.n..(from + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|k| self.row(k).to_vec()).collect()
    }

    /// Relabels states so that new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        TransitionMatrix { n, data }
    }
}

/// Everything that drives the latent chain: initial law, switch matrix,
/// per-state hazard regressions and the dwell truncation `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiMarkovSpec {
    pi: Vec<f64>,
    omega: TransitionMatrix,
    hazards: Vec<HazardRegression>,
    max_dwell: usize,
}

impl SemiMarkovSpec {
    pub fn new(
        pi: Vec<f64>,
        omega: TransitionMatrix,
        hazards: Vec<HazardRegression>,
        max_dwell: usize,
    ) -> Result<Self> {
        let k = pi.len();
        if k < 2 {
            return Err(Error::Domain("at least 2 states are required".into()));
        }
        if omega.n_states() != k || hazards.len() != k {
            return Err(Error::Domain(format!(
                "state count mismatch: pi {k}, omega {}, hazards {}",
                omega.n_states(),
                hazards.len()
            )));
        }
        if max_dwell < 2 {
            return Err(Error::Domain(format!("dwell truncation must be at least 2, got {max_dwell}")));
        }
        if pi.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("initial distribution must be a probability vector".into()));
        }
        let p = hazards[0].n_covariates();
        if hazards.iter().any(|h| h.n_covariates() != p) {
            return Err(Error::Domain("hazards disagree on covariate count".into()));
        }
        Ok(SemiMarkovSpec {
            pi,
            omega,
            hazards,
            max_dwell,
        })
    }

    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn max_dwell(&self) -> usize {
        self.max_dwell
    }

    pub fn n_covariates(&self) -> usize {
        self.hazards[0].n_covariates()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn omega(&self) -> &TransitionMatrix {
        &self.omega
    }

    pub fn hazards(&self) -> &[HazardRegression] {
        &self.hazards
    }

    /// Same chain with a different truncation level.
    pub fn with_max_dwell(&self, max_dwell: usize) -> Result<Self> {
        SemiMarkovSpec::new(self.pi.clone(), self.omega.clone(), self.hazards.clone(), max_dwell)
    }

    /// Hazard of state `k` at counter `d` with the counter capped at `M`.
    #[inline]
    pub fn hazard(&self, k: usize, d: usize, x: &[f64]) -> f64 {
        self.hazards[k].hazard(d.min(self.max_dwell), x)
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        SemiMarkovSpec {
            pi: perm.iter().map(|&i| self.pi[i]).collect(),
            omega: self.omega.permuted(perm),
            hazards: perm.iter().map(|&i| self.hazards[i].clone()).collect(),
            max_dwell: self.max_dwell,
        }
    }

    fn check_covariates(&self, x: &Covariates) -> Result<()> {
        if x.dim() != self.n_covariates() {
            return Err(Error::InvalidInput(format!(
                "covariate width {} does not match hazard regressions ({})",
                x.dim(),
                self.n_covariates()
            )));
        }
        Ok(())
    }
}

/// One-step transition matrix of the augmented chain at a given time, held
/// sparsely: each augmented state `(k, d)` has one within-state successor and
/// `K - 1` cross-state successors `(h, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedKernel {
    n_states: usize,
    max_dwell: usize,
    hazard: Vec<f64>,
    omega: Vec<f64>,
}

impl AugmentedKernel {
    pub fn size(&self) -> usize {
        self.n_states * self.max_dwell
    }

    /// Flat index of augmented state `(k, d)`, `d` starting at 1.
    #[inline]
    pub fn index(&self, k: usize, d: usize) -> usize {
        k * self.max_dwell + d - 1
    }

    pub fn hazard(&self, k: usize, d: usize) -> f64 {
        self.hazard[self.index(k, d)]
    }

    /// Nonzero entries of one row as `(column, probability)`.
    pub fn row_entries(&self, row: usize) -> Vec<(usize, f64)> {
        let (k, d) = (row / self.max_dwell, row % self.max_dwell + 1);
        let q = self.hazard[row];
        let next = self.index(k, (d + 1).min(self.max_dwell));
        let mut out = vec![(next, 1.0 - q)];
        for h in (0..self.n_states).filter(|&h| h != k) {
            let w = self.omega[k * self.n_states + h];
            if w > 0.0 {
                out.push((self.index(h, 1), w * q));
            }
        }
        out
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.row_entries(row).iter().map(|(_, v)| v).sum()
    }

    /// Dense row-major copy, for inspection and tests.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.size();
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for (c, v) in self.row_entries(r) {
                out[r * n + c] += v;
            }
        }
        out
    }
}

/// Builds the augmented kernel for the transition into a step with covariates `x`.
pub fn build_kernel(spec: &SemiMarkovSpec, x: &[f64]) -> AugmentedKernel {
    let (k_n, m) = (spec.n_states(), spec.max_dwell());
    let mut hazard = Vec::with_capacity(k_n * m);
    for k in 0..k_n {
        for d in 1..=m {
            hazard.push(spec.hazards[k].hazard(d, x));
        }
    }
    AugmentedKernel {
        n_states: k_n,
        max_dwell: m,
        hazard,
        omega: spec.omega.data.clone(),
    }
}

/// A realization of the latent chain with its dwell counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentPath {
    states: Vec<usize>,
    dwell_counters: Vec<usize>,
}

impl LatentPath {
    /// Derives dwell counters (time since the last switch plus one, uncapped).
    pub fn from_states(states: Vec<usize>) -> Self {
        let mut dwell_counters = Vec::with_capacity(states.len());
        for (t, &s) in states.iter().enumerate() {
            let c = if t > 0 && states[t - 1] == s {
                dwell_counters[t - 1] + 1
            } else {
                1
            };
            dwell_counters.push(c);
        }
        LatentPath {
            states,
            dwell_counters,
        }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn dwell_counters(&self) -> &[usize] {
        &self.dwell_counters
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Completed and final (possibly censored) sojourns as `(state, length)`.
    pub fn sojourns(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &s in &self.states {
            match out.last_mut() {
                Some((last, len)) if *last == s => *len += 1,
                _ => out.push((s, 1)),
            }
        }
        out
    }

    /// Longest realized sojourn.
    pub fn max_dwell(&self) -> usize {
        self.dwell_counters.iter().copied().max().unwrap_or(0)
    }
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Simulates the latent chain with an explicit random source.
pub fn simulate_path_with<R: Rng + ?Sized>(
    spec: &SemiMarkovSpec,
    x_series: &Covariates,
    len: usize,
    rng: &mut R,
) -> Result<LatentPath> {
    spec.check_covariates(x_series)?;
    if x_series.len() < len {
        return Err(Error::InvalidInput(format!(
            "covariate series has {} rows, need {len}",
            x_series.len()
        )));
    }
    let mut states = Vec::with_capacity(len);
    if len == 0 {
        return Ok(LatentPath::from_states(states));
    }
    let mut state = sample_index(rng, &spec.pi);
    let mut counter = 1usize;
    states.push(state);
    for t in 1..len {
        let q = spec.hazard(state, counter, x_series.row(t));
        if rng.random::<f64>() < q {
            state = sample_index(rng, spec.omega.row(state));
            counter = 1;
        } else {
            counter += 1;
        }
        states.push(state);
    }
    Ok(LatentPath::from_states(states))
}

/// Simulates `len` steps of the latent chain, starting from `π` with counter 1.
pub fn simulate_path(
    spec: &SemiMarkovSpec,
    x_series: &Covariates,
    len: usize,
    seed: u64,
) -> Result<LatentPath> {
    simulate_path_with(spec, x_series, len, &mut rng_from(seed, &[0x5041_5448]))
}

/// Log-probability of a latent path under the augmented chain (counters capped at `M`).
pub fn joint_log_prob(spec: &SemiMarkovSpec, path: &LatentPath, x_series: &Covariates) -> Result<f64> {
    spec.check_covariates(x_series)?;
    let states = path.states();
    if states.is_empty() {
        return Ok(0.0);
    }
    if x_series.len() < states.len() {
        return Err(Error::InvalidInput("covariate series shorter than path".into()));
    }
    if states.iter().any(|&s| s >= spec.n_states()) {
        return Err(Error::InvalidInput("path visits an unknown state".into()));
    }
    let counters = path.dwell_counters();
    let mut lp = spec.pi[states[0]].ln();
    for t in 1..states.len() {
        let (k, h) = (states[t - 1], states[t]);
        let q = spec.hazard(k, counters[t - 1], x_series.row(t));
        lp += if k == h {
            (1.0 - q).ln()
        } else {
            (spec.omega.get(k, h) * q).ln()
        };
    }
    Ok(lp)
}

/// Full model: latent chain plus one emission law per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsmmModel {
    pub spec: SemiMarkovSpec,
    pub thetas: Vec<ToroidalParams>,
}

impl HsmmModel {
    pub fn new(spec: SemiMarkovSpec, thetas: Vec<ToroidalParams>) -> Result<Self> {
        if thetas.len() != spec.n_states() {
            return Err(Error::Domain(format!(
                "{} emission laws for {} states",
                thetas.len(),
                spec.n_states()
            )));
        }
        Ok(HsmmModel { spec, thetas })
    }

    pub fn n_states(&self) -> usize {
        self.spec.n_states()
    }

    /// Relabels states so that new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        HsmmModel {
            spec: self.spec.permuted(perm),
            thetas: perm.iter().map(|&i| self.thetas[i]).collect(),
        }
    }

    /// Simulates a latent path and conditionally independent observations.
    pub fn simulate(&self, x_series: &Covariates, len: usize, seed: u64) -> Result<(LatentPath, Vec<TorusPoint>)> {
        let mut rng = rng_from(seed, &[0x004F_4253]);
        let path = simulate_path_with(&self.spec, x_series, len, &mut rng)?;
        let obs = path
            .states()
            .iter()
            .map(|&s| self.thetas[s].sample(&mut rng))
            .collect();
        Ok((path, obs))
    }
}

/// Exact data log-likelihood by summing over every latent path. Only for
/// series of at most [`BRUTE_FORCE_MAX_LEN`] steps.
pub fn brute_force_data_loglik(
    spec: &SemiMarkovSpec,
    thetas: &[ToroidalParams],
    y: &[TorusPoint],
    x_series: &Covariates,
) -> Result<f64> {
    let len = y.len();
    if len > BRUTE_FORCE_MAX_LEN {
        return Err(Error::TooLarge {
            len,
            max: BRUTE_FORCE_MAX_LEN,
        });
    }
    if thetas.len() != spec.n_states() {
        return Err(Error::InvalidInput("one emission law per state is required".into()));
    }
    let log_terms: Vec<f64> = enumerate_paths(spec.n_states(), len)
        .map(|states| {
            let emission: f64 = states
                .iter()
                .zip(y)
                .map(|(&s, &obs)| thetas[s].ln_density(obs))
                .sum();
            let path = LatentPath::from_states(states);
            joint_log_prob(spec, &path, x_series).map(|lp| lp + emission)
        })
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&log_terms))
}

/// Every state sequence of length `len` over `n_states` labels.
pub fn enumerate_paths(n_states: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n_states.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut states = vec![0; len];
        for s in states.iter_mut().rev() {
            *s = code % n_states;
            code /= n_states;
        }
        states
    })
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_spec(q: f64, m: usize) -> SemiMarkovSpec {
        SemiMarkovSpec::new(
            vec![0.5, 0.5],
            TransitionMatrix::uniform(2),
            vec![HazardRegression::constant(q, 0), HazardRegression::constant(q, 0)],
            m,
        )
        .unwrap()
    }

    #[test]
    fn transition_matrix_validation() {
        assert!(TransitionMatrix::new(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
        assert!(TransitionMatrix::new(&[vec![0.5, 0.5], vec![1.0, 0.0]]).is_err());
        assert!(TransitionMatrix::new(&[vec![0.0, 0.9], vec![1.0, 0.0]]).is_err());
        assert!(TransitionMatrix::new(&[vec![0.0]]).is_err());
    }

    #[test]
    fn spec_validation() {
        let h = || HazardRegression::constant(0.3, 0);
        let omega = TransitionMatrix::uniform(2);
        assert!(SemiMarkovSpec::new(vec![0.5, 0.5], omega.clone(), vec![h(), h()], 1).is_err());
        assert!(SemiMarkovSpec::new(vec![0.6, 0.5], omega.clone(), vec![h(), h()], 3).is_err());
        assert!(SemiMarkovSpec::new(vec![0.5, 0.5], omega, vec![h()], 3).is_err());
    }

    #[test]
    fn small_kernel_rows() {
        let kernel = build_kernel(&constant_spec(0.5, 2), &[]);
        let row = kernel.row_entries(kernel.index(0, 1));
        assert_eq!(row, vec![(kernel.index(0, 2), 0.5), (kernel.index(1, 1), 0.5)]);
        let dense = kernel.dense();
        assert_eq!(dense[kernel.index(0, 2) * 4 + kernel.index(0, 2)], 0.5);
        for r in 0..kernel.size() {
            assert!((kernel.row_sum(r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_switching_alternates() {
        let spec = constant_spec(1.0 - 1e-15, 5);
        let path = simulate_path(&spec, &Covariates::empty(50), 50, 3).unwrap();
        assert!(path.states().windows(2).all(|w| w[0] != w[1]));
        assert!(path.dwell_counters().iter().all(|&c| c == 1));
    }

    #[test]
    fn paths_are_reproducible() {
        let spec = constant_spec(0.2, 5);
        let x = Covariates::empty(200);
        assert_eq!(simulate_path(&spec, &x, 200, 11).unwrap(), simulate_path(&spec, &x, 200, 11).unwrap());
    }

    #[test]
    fn counters_follow_states() {
        let p = LatentPath::from_states(vec![0, 0, 1, 1, 1, 0]);
        assert_eq!(p.dwell_counters(), &[1, 2, 1, 2, 3, 1]);
        assert_eq!(p.sojourns(), vec![(0, 2), (1, 3), (0, 1)]);
        assert_eq!(p.max_dwell(), 3);
    }

    #[test]
    fn single_step_log_prob_is_initial() {
        let spec = SemiMarkovSpec::new(
            vec![0.3, 0.7],
            TransitionMatrix::uniform(2),
            vec![HazardRegression::constant(0.4, 0), HazardRegression::constant(0.2, 0)],
            3,
        )
        .unwrap();
        let lp = joint_log_prob(&spec, &LatentPath::from_states(vec![1]), &Covariates::empty(1)).unwrap();
        assert!((lp - 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn brute_force_refuses_long_series() {
        let spec = constant_spec(0.3, 3);
        let theta = ToroidalParams::new(0.0, 0.0, 0.3, 0.3, 0.0).unwrap();
        let y = vec![TorusPoint::new(0.0, 0.0); 13];
        let err = brute_force_data_loglik(&spec, &[theta, theta], &y, &Covariates::empty(13));
        assert!(matches!(err, Err(Error::TooLarge { .. })));
    }

    #[test]
    fn single_step_brute_force_is_mixture() {
        let spec = SemiMarkovSpec::new(
            vec![0.3, 0.7],
            TransitionMatrix::uniform(2),
            vec![HazardRegression::constant(0.4, 0), HazardRegression::constant(0.2, 0)],
            3,
        )
        .unwrap();
        let th = [
            ToroidalParams::new(0.5, 0.5, 0.2, 0.3, 0.6).unwrap(),
            ToroidalParams::new(2.0, 2.0, 0.2, 0.8, 0.1).unwrap(),
        ];
        let y = [TorusPoint::new(1.0, -0.3)];
        let ll = brute_force_data_loglik(&spec, &th, &y, &Covariates::empty(1)).unwrap();
        let expected = (0.3 * th[0].density(y[0]) + 0.7 * th[1].density(y[0])).ln();
        assert!((ll - expected).abs() < 1e-14);
    }

    #[test]
    fn permutation_relabels_consistently() {
        let omega = TransitionMatrix::new(&[
            vec![0.0, 0.5, 0.5],
            vec![0.9, 0.0, 0.1],
            vec![0.45, 0.55, 0.0],
        ])
        .unwrap();
        let p = omega.permuted(&[2, 0, 1]);
        assert_eq!(p.get(0, 1), omega.get(2, 0));
        assert_eq!(p.get(1, 2), omega.get(0, 1));
        for k in 0..3 {
            assert_eq!(p.get(k, k), 0.0);
        }
    }
}
