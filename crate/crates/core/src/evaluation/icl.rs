//! Integrated complete likelihood.

use serde::{Deserialize, Serialize};

use crate::inference::{FitResult, Posteriors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IclReport {
    pub loglik: f64,
    pub n_params: usize,
    pub n_observations: usize,
    pub bic: f64,
    /// `-Σ_t Σ_k π̂_tk log π̂_tk`.
    pub entropy: f64,
    /// `bic + 2 · entropy`; smaller is better.
    pub icl: f64,
}

/// Free parameters: emissions, initial law, switch rows and hazard regressions.
pub fn n_free_params(n_states: usize, n_covariates: usize) -> usize {
    let k = n_states;
    5 * k + (k - 1) + k * (k - 2) + k * (2 + n_covariates)
}

pub fn classification_entropy(post: &Posteriors) -> f64 {
    (0..post.len())
        .flat_map(|t| post.state_row(t).iter().copied())
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

pub fn icl_from_parts(loglik: f64, n_params: usize, post: &Posteriors) -> IclReport {
    let n = post.len();
    let bic = -2.0 * loglik + n_params as f64 * (n as f64).ln();
    let entropy = classification_entropy(post);
    IclReport {
        loglik,
        n_params,
        n_observations: n,
        bic,
        entropy,
        icl: bic + 2.0 * entropy,
    }
}

pub fn icl(fit: &FitResult) -> IclReport {
    let p = n_free_params(fit.model.n_states(), fit.model.spec.n_covariates());
    icl_from_parts(fit.loglik(), p, &fit.posteriors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(n_free_params(2, 1), 10 + 1 + 0 + 6);
        assert_eq!(n_free_params(4, 1), 20 + 3 + 8 + 12);
    }

    #[test]
    fn separated_posteriors_give_bic() {
        let post = Posteriors::from_state_probabilities(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]], 2).unwrap();
        let r = icl_from_parts(-10.0, 4, &post);
        assert_eq!(r.entropy, 0.0);
        assert_eq!(r.icl, r.bic);
        assert!((r.bic - (20.0 + 4.0 * 3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn entropy_of_uniform_rows() {
        let post = Posteriors::from_state_probabilities(&vec![vec![0.5, 0.5]; 4], 2).unwrap();
        assert!((classification_entropy(&post) - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!(icl_from_parts(-1.0, 1, &post).icl > icl_from_parts(-1.0, 1, &post).bic);
    }
}
