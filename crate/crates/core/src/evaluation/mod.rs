//! Model assessment: decoding, agreement and error metrics, model selection,
//! bootstrap standard errors, hazard profiles and simulation studies.

pub mod bootstrap;
pub mod icl;
pub mod params;
pub mod profiles;
pub mod scenario;
pub mod segment;
pub mod study;

pub use bootstrap::{bootstrap_se, bootstrap_se_with_seeds, BootstrapOptions, BootstrapReport, ParamSe};
pub use icl::{classification_entropy, icl, icl_from_parts, n_free_params, IclReport};
pub use params::{align_labels, align_model, flatten, parameter_rmse, NamedValue, ParamKind, ParamRmse};
pub use profiles::{hazard_profiles, HazardProfile, ReferenceLevel};
pub use scenario::{gaussian_covariates, scenario, truncation_level, ScenarioSpec, SimulatedData, SCENARIO_NAMES};
pub use segment::{ari, segment, segment_fit};
pub use study::{run_replicate, summarize, CellSummary, ReplicateResult, StudyCell, StudyFitOptions};
