//! Hazard and dwell-time curves at reference covariate levels.

use serde::{Deserialize, Serialize};

use crate::dwell_hazard::{Covariates, HazardRegression};
use crate::error::{Error, Result};
use crate::semi_markov::SemiMarkovSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceLevel {
    FirstQuartile,
    Mean,
    ThirdQuartile,
}

impl ReferenceLevel {
    pub const ALL: [ReferenceLevel; 3] = [Self::FirstQuartile, Self::Mean, Self::ThirdQuartile];

    pub fn label(self) -> &'static str {
        match self {
            Self::FirstQuartile => "q1",
            Self::Mean => "mean",
            Self::ThirdQuartile => "q3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub dwell: usize,
    pub hazard: f64,
    pub pmf: f64,
    pub survival: f64,
    /// Beyond the truncation level, where the hazard is frozen at `q(M)`.
    pub tail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardProfile {
    pub state: usize,
    pub level: ReferenceLevel,
    pub covariates: Vec<f64>,
    pub curve: Vec<CurvePoint>,
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-column quartiles and mean of the covariate rows labelled `state`.
pub fn conditional_levels(x: &Covariates, labels: &[usize], state: usize) -> Option<[Vec<f64>; 3]> {
    let idx: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == state).collect();
    if idx.is_empty() {
        return None;
    }
    let mut q1 = Vec::new();
    let mut mean = Vec::new();
    let mut q3 = Vec::new();
    for j in 0..x.dim() {
        let mut vals: Vec<f64> = idx.iter().map(|&t| x.row(t)[j]).collect();
        vals.sort_by(f64::total_cmp);
        q1.push(quantile_sorted(&vals, 0.25));
        q3.push(quantile_sorted(&vals, 0.75));
        mean.push(vals.iter().sum::<f64>() / vals.len() as f64);
    }
    Some([q1, mean, q3])
}

/// Hazard, survival and pmf for `d = 1..=horizon` with the covariate fixed at
/// `x`; the hazard is held at `q(M)` for `d > M`.
pub fn curve(h: &HazardRegression, max_dwell: usize, x: &[f64], horizon: usize) -> Vec<CurvePoint> {
    let mut survival = 1.0;
    (1..=horizon)
        .map(|d| {
            let q = h.hazard(d.min(max_dwell), x);
            let pmf = q * survival;
            survival *= 1.0 - q;
            CurvePoint {
                dwell: d,
                hazard: q,
                pmf,
                survival,
                tail: d > max_dwell,
            }
        })
        .collect()
}

/// Curves for every state at the conditional covariate quartiles and mean
/// within that state's decoded observations. States without decoded
/// observations are skipped.
pub fn hazard_profiles(spec: &SemiMarkovSpec, x: &Covariates, labels: &[usize], horizon: usize) -> Result<Vec<HazardProfile>> {
    if labels.len() != x.len() {
        return Err(Error::InvalidInput("labels and covariates differ in length".into()));
    }
    if x.dim() != spec.n_covariates() {
        return Err(Error::InvalidInput("covariate width does not match the model".into()));
    }
    let mut out = Vec::new();
    for (k, h) in spec.hazards().iter().enumerate() {
        if let Some(levels) = conditional_levels(x, labels, k) {
            for (level, xs) in ReferenceLevel::ALL.into_iter().zip(levels) {
                out.push(HazardProfile {
                    state: k,
                    level,
                    curve: curve(h, spec.max_dwell(), &xs, horizon),
                    covariates: xs,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semi_markov::TransitionMatrix;

    fn spec(h: Vec<HazardRegression>) -> SemiMarkovSpec {
        SemiMarkovSpec::new(vec![0.5, 0.5], TransitionMatrix::uniform(2), h, 10).unwrap()
    }

    fn data() -> (Covariates, Vec<usize>) {
        let x = Covariates::from_column((0..40).map(|t| (t as f64 * 0.7).sin() * 3.0).collect()).unwrap();
        let labels = (0..40).map(|t| (t / 5) % 2).collect();
        (x, labels)
    }

    #[test]
    fn constant_hazard_is_flat() {
        let (x, labels) = data();
        let s = spec(vec![HazardRegression::constant(0.2, 1), HazardRegression::constant(0.4, 1)]);
        for p in hazard_profiles(&s, &x, &labels, 20).unwrap() {
            assert!(p.curve.iter().all(|c| (c.hazard - p.curve[0].hazard).abs() < 1e-15));
        }
    }

    #[test]
    fn negative_slope_lowers_upper_quartile_curve() {
        let (x, labels) = data();
        let s = spec(vec![
            HazardRegression::new(-2.0, 0.1, vec![-0.5]).unwrap(),
            HazardRegression::new(-2.0, 0.1, vec![-0.5]).unwrap(),
        ]);
        let profiles = hazard_profiles(&s, &x, &labels, 15).unwrap();
        let q1 = &profiles[0];
        let q3 = &profiles[2];
        assert_eq!(q1.level, ReferenceLevel::FirstQuartile);
        assert_eq!(q3.level, ReferenceLevel::ThirdQuartile);
        for (a, b) in q1.curve.iter().zip(&q3.curve) {
            assert!(b.hazard < a.hazard);
        }
    }

    #[test]
    fn tail_is_constant_beyond_truncation() {
        let h = HazardRegression::new(-2.0, 0.2, vec![0.1]).unwrap();
        let c = curve(&h, 10, &[0.5], 30);
        assert!(c[9..].iter().all(|p| p.hazard == c[9].hazard));
        assert!(c[10..].iter().all(|p| p.tail));
        let total: f64 = c.iter().map(|p| p.pmf).sum::<f64>() + c.last().unwrap().survival;
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.75), 3.25);
    }
}
