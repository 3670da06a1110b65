//! Adaptive function estimation in reproducing kernel Hilbert spaces.
//!
//! The crate provides Sobolev–Matérn kernels, finite-dimensional RKHS
//! subspaces spanned by kernel sections at a set of centers, the coupled
//! plant/estimator dynamics with their Lyapunov certificate, and numerical
//! evaluation of persistence-of-excitation levels along trajectories.

// NaN-rejecting `!(x > 0.0)` guards and index loops over small matrices are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernel;
pub mod linsys;
pub mod ode;
pub mod pe;
pub mod rkhs;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use experiment::{run_scenario, RunArtifacts, Scenario};
pub use kernel::{embedding_constant, kernel_eval, KernelSpec, Matern};
pub use pe::{PEReport, PEWindow};
pub use rkhs::{CenterSet, Gramian, JitterPolicy, RkhsFunction};
