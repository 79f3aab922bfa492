//! Unconstrained coordinates for the emission parameters.
//!
//! Mean directions are measured relative to a centre angle and mapped with
//! `μ = centre + 2 atan(u)`, concentrations with `κ = (tanh v + 1) / 2` and the
//! correlation with `ρ = tanh w`. Each map is a smooth bijection from the real
//! line onto the open parameter range.

use crate::circular::{wrap_angle, ToroidalParams};

/// Magnitude cap on the tanh-based coordinates, where `tanh` saturates in f64.
const TANH_COORD_CAP: f64 = 18.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reparam {
    pub centre1: f64,
    pub centre2: f64,
}

impl Reparam {
    /// Coordinates centred at the means of `theta`.
    pub fn centred_at(theta: &ToroidalParams) -> Self {
        Reparam {
            centre1: theta.mu1().radians(),
            centre2: theta.mu2().radians(),
        }
    }

    pub fn to_unconstrained(&self, theta: &ToroidalParams) -> [f64; 5] {
        let v = theta.to_array();
        [
            (0.5 * wrap_angle(v[0] - self.centre1)).tan(),
            (0.5 * wrap_angle(v[1] - self.centre2)).tan(),
            (2.0 * v[2] - 1.0).atanh().clamp(-TANH_COORD_CAP, TANH_COORD_CAP),
            (2.0 * v[3] - 1.0).atanh().clamp(-TANH_COORD_CAP, TANH_COORD_CAP),
            v[4].atanh().clamp(-TANH_COORD_CAP, TANH_COORD_CAP),
        ]
    }

    /// `[μ1, μ2, κ1, κ2, ρ]` for unconstrained coordinates (means wrapped).
    #[inline]
    pub fn to_constrained(&self, u: &[f64]) -> [f64; 5] {
        [
            wrap_angle(self.centre1 + 2.0 * u[0].atan()),
            wrap_angle(self.centre2 + 2.0 * u[1].atan()),
            0.5 * (u[2].tanh() + 1.0),
            0.5 * (u[3].tanh() + 1.0),
            u[4].tanh(),
        ]
    }

    /// Derivatives of each constrained component with respect to its coordinate.
    #[inline]
    pub fn jacobian_diag(&self, u: &[f64]) -> [f64; 5] {
        let sech2 = |x: f64| {
            let t = x.tanh();
            1.0 - t * t
        };
        [
            2.0 / (1.0 + u[0] * u[0]),
            2.0 / (1.0 + u[1] * u[1]),
            0.5 * sech2(u[2]),
            0.5 * sech2(u[3]),
            sech2(u[4]),
        ]
    }

    pub fn params(&self, u: &[f64]) -> Option<ToroidalParams> {
        ToroidalParams::from_array(self.to_constrained(u)).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circular::angular_deviation;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_identity(
            mu1 in -3.14f64..3.14, mu2 in -3.14f64..3.14,
            k1 in 0.001f64..0.99, k2 in 0.001f64..0.99, rho in -0.99f64..0.99,
            c1 in -3.14f64..3.14, c2 in -3.14f64..3.14,
        ) {
            let theta = ToroidalParams::new(mu1, mu2, k1, k2, rho).unwrap();
            let rp = Reparam { centre1: c1, centre2: c2 };
            let back = rp.to_constrained(&rp.to_unconstrained(&theta));
            let v = theta.to_array();
            // Antipodal means are the one point the centred map cannot reach.
            prop_assume!(angular_deviation(mu1, c1) < 3.1 && angular_deviation(mu2, c2) < 3.1);
            prop_assert!(angular_deviation(back[0], v[0]) < 1e-12);
            prop_assert!(angular_deviation(back[1], v[1]) < 1e-12);
            for j in 2..5 {
                prop_assert!((back[j] - v[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centre_maps_to_origin() {
        let theta = ToroidalParams::new(2.0, -2.0, 0.5, 0.5, 0.0).unwrap();
        let u = Reparam::centred_at(&theta).to_unconstrained(&theta);
        assert_eq!(u[0], 0.0);
        assert_eq!(u[1], 0.0);
        assert!(u[2].abs() < 1e-15 && u[4] == 0.0);
    }
}
