//! Dirichlet rounding for bipartite instances with strong negative
//! correlation.
//!
//! The crate is organised bottom up:
//!
//! * [`specialfn`]: log-gamma, Beta and incomplete Beta kernels.
//! * [`randomness`]: seeded, splittable generators and Gamma/Beta/Dirichlet
//!   samplers (batch and stick-breaking).
//! * [`copula`]: the Dirichlet copula and a Monte Carlo estimator of Ψ.
//! * [`rounding`]: dependent rounding on a bipartite graph and a statistics
//!   harness for its moment guarantees.
//! * [`psi`]: series coefficients and certified upper/lower bounds on Ψ.
//! * [`online`]: the online matching algorithm driven by an attenuation curve.
//! * [`scheduling`]: clustering for weighted completion time on unrelated
//!   machines and the associated constant calculator.
//! * [`certify`]: a branch-and-bound certifier for the correlation inequality
//!   used by the online analysis.
//!
//! Monte Carlo loops run on rayon when the `parallel` feature is enabled (the
//! default). Work is split into fixed blocks with their own random substreams,
//! so results are identical for every thread count, including the sequential
//! build.

#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision
)]

pub mod certify;
pub mod copula;
pub mod exec;
pub mod online;
pub mod psi;
pub mod randomness;
pub mod rounding;
pub mod scheduling;
pub mod specialfn;

pub use randomness::RngState;
