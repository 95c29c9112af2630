//! Interactive 2.5D topology optimization engine.
//!
//! The crate is organised around the flow of a single generation:
//!
//! * [`domain`] holds the problem description ([`ProblemSpec`]) and the
//!   density field that every other stage consumes or produces.
//! * [`fea`] is a plane-stress finite element solver on the regular quad grid.
//! * [`simp`] is the deterministic SIMP optimizer (filter + optimality criteria).
//! * [`backends`] wraps the optimizer into deterministic, stochastic
//!   (noise-then-reoptimize) and remote generation backends.
//! * [`sketch`] turns a colour-coded raster sketch into a [`ProblemSpec`].
//! * [`export`] extracts contours, extrudes them and writes STL/OBJ/PNG.
//! * [`klm`] evaluates keystroke-level-model interaction costs.
//! * [`fixtures`] ships the reference problems used by tests and benchmarks.

pub mod backends;
pub mod domain;
pub mod export;
pub mod fea;
pub mod fixtures;
pub mod klm;
pub mod simp;
pub mod sketch;

pub use backends::{generate, BackendKind, GenerateOptions};
pub use domain::{
    validate_problem, DensityField, FeaSolution, GenerationResult, GridDims, Load, MaskMode,
    MaterialParams, ProblemSpec, Support, ValidationIssue,
};
pub use simp::{optimize, OcParams};
