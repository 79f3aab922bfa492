//! Maximum-likelihood estimation by EM on the augmented chain.

mod bfgs;
mod em;
mod forward_backward;
mod mstep;
mod reparam;

pub use bfgs::{minimize, minimize_warm, BfgsOptions, BfgsOutcome};
pub use em::{fit, random_init, spurious_threshold, FitConfig, FitDiagnostics, FitResult, InitStrategy, ShortRunSummary};
pub use forward_backward::{e_step, forward_loglik, ForwardRecord, Posteriors};
pub use mstep::{
    hazard_events, m_step_beta, m_step_beta_limited, m_step_omega, m_step_pi, m_step_theta, m_step_theta_warm,
    maximize_emission, maximize_emission_warm, q_beta, q_omega, q_pi,
    q_theta, switch_counts, EmissionObjective, OmegaUpdate, ThetaFit, TrigCache,
};
pub use reparam::Reparam;
