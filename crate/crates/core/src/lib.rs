//! Model selection with incomplete data by generalized EMS iterations.
//!
//! The crate alternates an expectation step over the missing cells with a
//! model-selection step that only has to decrease the expected criterion.
//! Two instantiations are provided:
//!
//! * Gaussian graphical model structure selection ([`ggm`]), with the
//!   MissGlasso and mGlasso baselines ([`baselines`]).
//! * Variable selection in logistic regression with mixed, partially missing
//!   predictors ([`glm`]), built on strong-decomposition forests over the
//!   predictors ([`mixed`]).
//!
//! [`bench`] holds the simulation generators, missingness mechanisms and
//! evaluation metrics used to benchmark the methods.

pub mod baselines;
pub mod bench;
pub mod data;
pub mod engine;
pub mod error;
pub mod gaussian;
pub mod ggm;
pub mod glasso;
pub mod glm;
pub mod graph;
pub mod io;
pub mod ips;
pub mod linalg;
pub mod mixed;
pub mod rng;

pub use data::{ColumnSpec, MixedDataset, ObservedMatrix, VarKind};
pub use engine::{run_gems, GemsConfig, GemsDriver, GemsTrace, PsiState, StopReason};
pub use error::{GemsError, Result};
pub use gaussian::{ExpectedStats, GaussianParams};
pub use graph::UndirectedGraph;
