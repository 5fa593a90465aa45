//! Estimands and estimators for randomized trials with intercurrent events.
//!
//! The crate covers instrumental-variable estimation of treatment-policy,
//! principal-stratum and hypothetical estimands ([`estimators`]), the
//! regression engine they share ([`regress`]), d-separation checks of the IV
//! conditions on a causal DAG ([`dag`]), seeded trial simulators ([`dgp`]) and
//! a Monte Carlo harness ([`montecarlo`], [`studies`]).

mod linalg;

pub mod config;
pub mod dag;
pub mod data;
pub mod dgp;
pub mod estimators;
pub mod montecarlo;
pub mod registry;
pub mod regress;
pub mod rng;
pub mod studies;

pub use dag::{Dag, DagError, IvReport};
pub use data::{read_csv, write_csv, ColumnRoles, DataError, Dataset, TrialRecord};
pub use dgp::{DgpConfig, DgpError, Model, Variant};
pub use estimators::{Assumption, Estimand, EstimandEstimate, EstimateError, Link};
pub use montecarlo::{run_campaign, CampaignResult, CampaignSpec, MonteCarloError};
pub use registry::{EstimatorKind, EstimatorSpec, Output};
pub use regress::{DesignMatrix, RegressError, RegressionFit};
pub use studies::Study;
