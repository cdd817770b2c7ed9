//! Age-and-maturity structured model of blood cell production: exact flow
//! coordinates, attenuation kernels, a method-of-steps Picard solver for the
//! integrated delay formulation, and executable checks of its qualitative
//! theory (uniqueness from stem cells, extinction, invariance, positivity).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod flow;
pub mod functions;
pub mod interp;
pub mod io;
pub mod kernels;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use flow::{Flow, MaturityMap, VelocityModel};
pub use functions::RateFunction;
pub use kernels::{AgeDensity, DivisionKernel, ModelParams, ReintroductionLaw};
pub use solver::{Grid, InitialHistory, SolutionField, Solver, SolverOptions};
