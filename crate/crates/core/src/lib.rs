//! Causal auditing of peer-review outcomes and fairness-regularized ranking.
//!
//! The crate covers the whole study loop:
//!
//! * [`scm`] simulates papers from a structural causal model with known
//!   counterfactual outcomes, so every estimator can be checked against truth.
//! * [`data`] holds the record schema and strict CSV ingestion.
//! * [`propensity`] and [`weighting`] fit the treatment model and build
//!   inverse-propensity weights with balance diagnostics.
//! * [`estimators`] computes average treatment effects with bootstrap
//!   intervals, plus stratified and intersectional breakdowns.
//! * [`fairrank`] trains a small network with a statistical-parity penalty.
//! * [`metrics`] scores rankings for utility and group gaps.
//!
//! ```
//! use causal_audit::{estimators, scm, data::{Attribute, TreatmentSpec}};
//!
//! let cfg = scm::ScmConfig { n_units: 2000, seed: 3, ..Default::default() };
//! let units = scm::generate(&cfg).unwrap();
//! let ds = scm::to_dataset(&units);
//! let spec = TreatmentSpec::standard(Attribute::Race);
//! let fit = estimators::ipw_pipeline(ds.records(), &spec, &Default::default()).unwrap();
//! assert!(fit.ate < 0.0);
//! ```

pub mod data;
pub mod error;
pub mod estimators;
pub mod fairrank;
pub mod linalg;
pub mod metrics;
pub mod propensity;
pub mod scm;
pub mod stats;
pub mod table;
pub mod weighting;

pub use error::{Error, Result};
