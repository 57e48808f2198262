//! Inner approximations of the maximal robust region of attraction of state-constrained,
//! perturbed discrete-time polynomial systems.
//!
//! The pipeline builds a sum-of-squares relaxation of a Bellman equation whose solution
//! `u` certifies that `{x : |x|² ≤ R, u(x) < 1}` is a robust region of attraction, compiles
//! it to a semidefinite program, solves it, and checks the result against trajectory
//! simulation and grid value iteration.
//!
//! * [`poly`]: polynomial arithmetic, monomial bases, moments.
//! * [`model`]: system definition, trajectories, assumption checks.
//! * [`soscomp`]: SOS program to SDP compiler and the conic solver adapter.
//! * [`roa`]: the relaxation for a given model, certificates and certification.
//! * [`oracle`]: value iteration and simulation-based ground truth.

pub mod error;
pub mod model;
pub mod oracle;
pub mod poly;
pub mod roa;
pub mod soscomp;

pub use error::{ModelError, PolyError, SosError};
pub use model::{Policy, SystemModel, Trajectory};
pub use oracle::GridField;
pub use poly::{Monomial, MonomialBasis, Polynomial};
pub use roa::{CertReport, RoaCertificate, RoaConfig};
pub use soscomp::{SdpProblem, SdpSolution, SosProgram};
