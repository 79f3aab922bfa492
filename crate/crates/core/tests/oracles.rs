mod common;

use std::f64::consts::PI;

use common::*;
use rand::Rng;
use torhsmm::circular::{Coordinate, ToroidalParams, TorusPoint};
use torhsmm::dwell_hazard::{Covariates, HazardRegression};
use torhsmm::inference::{e_step, forward_loglik};
use torhsmm::semi_markov::{brute_force_data_loglik, SemiMarkovSpec, TransitionMatrix};

fn library_model(m: &RawModel) -> (SemiMarkovSpec, Vec<ToroidalParams>) {
    let hazards = m
        .beta
        .iter()
        .map(|b| HazardRegression::new(b[0], b[1], b[2..].to_vec()).unwrap())
        .collect();
    let spec = SemiMarkovSpec::new(m.pi.clone(), TransitionMatrix::new(&m.omega).unwrap(), hazards, m.max_dwell).unwrap();
    let thetas = m.theta.iter().map(|t| ToroidalParams::from_array(*t).unwrap()).collect();
    (spec, thetas)
}

fn library_series(y: &[(f64, f64)], x: &[Vec<f64>]) -> (Vec<TorusPoint>, Covariates) {
    (
        y.iter().map(|&(a, b)| TorusPoint::new(a, b)).collect(),
        Covariates::from_rows(x).unwrap(),
    )
}

#[test]
fn forward_matches_path_enumeration() {
    let mut rng = rng(11);
    let cases = std::iter::repeat((2, 3, 8)).take(20).chain(std::iter::repeat((3, 2, 6)).take(10));
    for (i, (k, m, len)) in cases.enumerate() {
        let raw = random_model(&mut rng, k, m);
        let (y, x) = random_series(&mut rng, len);
        let (spec, thetas) = library_model(&raw);
        let (ys, xs) = library_series(&y, &x);
        let expected = brute_force_loglik(&raw, &y, &x);
        let got = forward_loglik(&spec, &thetas, &ys, &xs).unwrap().loglik;
        assert!((got - expected).abs() < 1e-10, "case {i}: {got} vs {expected}");
        let lib_brute = brute_force_data_loglik(&spec, &thetas, &ys, &xs).unwrap();
        assert!((lib_brute - expected).abs() < 1e-10, "case {i}: {lib_brute} vs {expected}");
    }
}

#[test]
fn smoothed_states_match_path_enumeration() {
    let mut rng = rng(12);
    for _ in 0..10 {
        let mut raw = random_model(&mut rng, 2, 3);
        // shared emission law: posteriors come from the chain alone
        raw.theta[1] = raw.theta[0];
        let (y, x) = random_series(&mut rng, 6);
        let (spec, thetas) = library_model(&raw);
        let (ys, xs) = library_series(&y, &x);
        let expected = brute_force_state_posteriors(&raw, &y, &x);
        let (post, _) = e_step(&spec, &thetas, &ys, &xs).unwrap();
        for (t, row) in expected.iter().enumerate() {
            for (k, &p) in row.iter().enumerate() {
                assert!((post.state(t, k) - p).abs() < 1e-10);
            }
        }
    }
    let mut raw = random_model(&mut rng, 3, 2);
    raw.theta[0][2] = 0.8;
    let (y, x) = random_series(&mut rng, 6);
    let (spec, thetas) = library_model(&raw);
    let (ys, xs) = library_series(&y, &x);
    let expected = brute_force_state_posteriors(&raw, &y, &x);
    let (post, _) = e_step(&spec, &thetas, &ys, &xs).unwrap();
    for (t, row) in expected.iter().enumerate() {
        for (k, &p) in row.iter().enumerate() {
            assert!((post.state(t, k) - p).abs() < 1e-10);
        }
    }
}

#[test]
fn constant_hazards_reduce_to_markov_chain() {
    let mut rng = rng(13);
    for i in 0..20 {
        let k = 2 + i % 3;
        let mut raw = random_model(&mut rng, k, 2 + i % 6);
        for b in &mut raw.beta {
            b[1] = 0.0;
            b[2] = 0.0;
        }
        let (y, x) = random_series(&mut rng, 500);
        let q: Vec<f64> = raw.beta.iter().map(|b| cloglog_hazard(b, 1, &[0.0])).collect();
        let a: Vec<Vec<f64>> = (0..k)
            .map(|r| (0..k).map(|c| if r == c { 1.0 - q[r] } else { q[r] * raw.omega[r][c] }).collect())
            .collect();
        let emission: Vec<Vec<f64>> = y
            .iter()
            .map(|&(a, b)| raw.theta.iter().map(|t| bwc_density(t, a, b)).collect())
            .collect();
        let expected = hmm_loglik(&raw.pi, |_| a.clone(), &emission);
        let (spec, thetas) = library_model(&raw);
        let (ys, xs) = library_series(&y, &x);
        let got = forward_loglik(&spec, &thetas, &ys, &xs).unwrap().loglik;
        assert!((got - expected).abs() < 1e-10, "case {i}: {got} vs {expected}");
    }
}

#[test]
fn dwell_free_hazards_reduce_to_nonhomogeneous_markov_chain() {
    let mut rng = rng(14);
    for _ in 0..5 {
        let mut raw = random_model(&mut rng, 3, 4);
        for b in &mut raw.beta {
            b[1] = 0.0;
        }
        let (y, x) = random_series(&mut rng, 300);
        let emission: Vec<Vec<f64>> = y
            .iter()
            .map(|&(a, b)| raw.theta.iter().map(|t| bwc_density(t, a, b)).collect())
            .collect();
        let transition = |t: usize| -> Vec<Vec<f64>> {
            (0..3)
                .map(|r| {
                    let q = cloglog_hazard(&raw.beta[r], 1, &x[t]);
                    (0..3).map(|c| if r == c { 1.0 - q } else { q * raw.omega[r][c] }).collect()
                })
                .collect()
        };
        let expected = hmm_loglik(&raw.pi, transition, &emission);
        let (spec, thetas) = library_model(&raw);
        let (ys, xs) = library_series(&y, &x);
        let got = forward_loglik(&spec, &thetas, &ys, &xs).unwrap().loglik;
        assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0));
    }
}

#[test]
fn density_matches_reference_formula() {
    let mut rng = rng(15);
    for _ in 0..200 {
        let t = [
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(0.0..0.95),
            rng.random_range(0.0..0.95),
            rng.random_range(-0.95..0.95),
        ];
        let (a, b) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let lib = ToroidalParams::from_array(t).unwrap().density(TorusPoint::new(a, b));
        let r = bwc_density(&t, a, b);
        assert!((lib - r).abs() <= 1e-12 * r);
    }
}

#[test]
fn design_densities_integrate_to_one() {
    for t in DESIGN_THETAS {
        let total = torus_integral(&t, 512);
        assert!((total - 1.0).abs() < 1e-6, "{t:?}: {total}");
    }
}

#[test]
fn joint_factorizes_into_marginal_and_conditional() {
    let mut rng = rng(16);
    for t in DESIGN_THETAS.iter().cycle().take(1000) {
        let theta = ToroidalParams::from_array(*t).unwrap();
        let (a, b) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let y = TorusPoint::new(a, b);
        let first = theta.marginal(Coordinate::First);
        let cond = theta.conditional(y.y1);
        let product = first.density(a) * cond.density(b);
        assert!((product - theta.density(y)).abs() < 1e-10);
        assert!((first.density(a) - wrapped_cauchy(t[0], t[2], a)).abs() < 1e-12);
    }
}

#[test]
fn marginal_matches_one_dimensional_quadrature() {
    let t = [0.5, 0.5, 0.2, 0.3, 0.6];
    let theta = ToroidalParams::from_array(t).unwrap();
    let first = theta.marginal(Coordinate::First);
    let n = 512;
    let h = 2.0 * PI / n as f64;
    for i in 0..256 {
        let a = -PI + (i as f64 + 0.25) * 2.0 * PI / 256.0;
        let integral: f64 = (0..n).map(|j| bwc_density(&t, a, -PI + j as f64 * h)).sum::<f64>() * h;
        assert!((first.density(a) - integral).abs() < 1e-9);
    }
}

#[test]
fn conditional_is_density_ratio() {
    let t = [0.5, 0.5, 0.2, 0.3, 0.6];
    let theta = ToroidalParams::from_array(t).unwrap();
    let y1 = 1.2;
    let cond = theta.conditional(TorusPoint::new(y1, 0.0).y1);
    let mut rng = rng(17);
    for _ in 0..100 {
        let y2 = rng.random_range(-PI..PI);
        let ratio = bwc_density(&t, y1, y2) / wrapped_cauchy(t[0], t[2], y1);
        assert!((cond.density(y2) - ratio).abs() < 1e-10);
    }
}

#[test]
fn sampler_first_moment_matches_marginal() {
    let theta = ToroidalParams::from_array([0.5, 0.5, 0.2, 0.3, 0.6]).unwrap();
    let draws = theta.sample_n(100_000, 5);
    let n = draws.len() as f64;
    let c = draws.iter().map(|p| p.y1.radians().cos()).sum::<f64>() / n;
    let s = draws.iter().map(|p| p.y1.radians().sin()).sum::<f64>() / n;
    // E[e^{i y}] = κ e^{i μ} for the wrapped Cauchy law
    assert!((c - 0.2 * 0.5f64.cos()).abs() < 0.02);
    assert!((s - 0.2 * 0.5f64.sin()).abs() < 0.02);

    let uniform = ToroidalParams::from_array([0.0; 5]).unwrap().sample_n(100_000, 6);
    for coord in [0, 1] {
        let (c, s) = uniform.iter().fold((0.0, 0.0), |(c, s), p| {
            let a = if coord == 0 { p.y1 } else { p.y2 }.radians();
            (c + a.cos(), s + a.sin())
        });
        assert!((c * c + s * s).sqrt() / 100_000.0 < 0.01);
    }
}
