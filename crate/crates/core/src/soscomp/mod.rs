//! Sum-of-squares programs, their compilation to block SDPs by coefficient matching, the
//! conic solver adapter, and extraction of numeric certificates.

mod compile;
mod extract;
mod ipm;
mod program;
mod sdp;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use compile::{compile, prune_gram_bases, term_degrees};
pub use extract::{extract, gram_polynomial, identity_differences, identity_residual, Extracted};
pub use ipm::InteriorPoint;
pub use program::{
    gram_basis, DecisionId, DecisionPoly, MultiplierId, PolyIdentity, SosMultiplier, SosProgram, Term,
};
pub use sdp::{RowLabel, SdpProblem, SdpRow, SdpSolution, SolveStatus, SolverInfo};

use crate::error::SosError;

/// Environment variable naming the conic backend.
pub const SOLVER_ENV: &str = "ROA_SOLVER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative primal/dual infeasibility and gap for `optimal`.
    pub tolerance: f64,
    /// Relative primal/dual infeasibility for `near-optimal` when the iteration stops
    /// early. The iterate is still strictly inside the cone, so it is a valid certificate.
    pub near_tolerance: f64,
    /// Relative gap and complementarity accepted for `near-optimal`.
    pub near_gap: f64,
    /// Farkas-ratio threshold for declaring infeasibility or unboundedness.
    pub infeasibility_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-8,
            near_tolerance: 1e-6,
            near_gap: 1e-3,
            infeasibility_tolerance: 1e-8,
            max_iterations: 150,
        }
    }
}

/// A conic backend: loads a standard-form SDP, runs, returns blocks and a status.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, sdp: &SdpProblem, settings: &SolverSettings) -> SdpSolution;
}

/// Looks up a backend by name.
pub fn backend(name: &str) -> Result<Box<dyn ConicSolver>, SosError> {
    match name {
        "ipm" | "" => Ok(Box::new(InteriorPoint)),
        other => Err(SosError::UnknownBackend(other.to_string())),
    }
}

/// The backend selected by `ROA_SOLVER`, defaulting to the interior-point solver.
pub fn default_backend() -> Result<Box<dyn ConicSolver>, SosError> {
    backend(std::env::var(SOLVER_ENV).unwrap_or_default().trim())
}

/// Solves with the default backend.
pub fn solve(sdp: &SdpProblem, settings: &SolverSettings) -> Result<SdpSolution, SosError> {
    let b = default_backend()?;
    log::info!(
        "solving SDP: {} rows, {} free, blocks {:?} ({})",
        sdp.num_rows(),
        sdp.num_free,
        sdp.block_dims,
        b.name()
    );
    Ok(b.solve(sdp, settings))
}

/// JSON manifest mapping identities to row ranges and polynomials to variable ranges,
/// companion to [`SdpProblem::dump_sparse`].
pub fn sdp_manifest(prog: &SosProgram, sdp: &SdpProblem) -> serde_json::Value {
    let identities: Vec<_> = prog
        .identities
        .iter()
        .enumerate()
        .map(|(ii, id)| {
            let rows: Vec<usize> = sdp
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.identity == ii)
                .map(|(r, _)| r + 1)
                .collect();
            json!({
                "name": id.name,
                "first_row": rows.first(),
                "last_row": rows.last(),
                "rows": rows.len(),
            })
        })
        .collect();
    let mut offset = 0;
    let decision: Vec<_> = prog
        .decision
        .iter()
        .map(|d| {
            let v = json!({
                "name": d.name,
                "first_var": offset + 1,
                "last_var": offset + d.basis.len(),
                "basis": d.basis.elements(),
            });
            offset += d.basis.len();
            v
        })
        .collect();
    let multipliers: Vec<_> = prog
        .multipliers
        .iter()
        .enumerate()
        .map(|(k, m)| json!({ "name": m.name, "block": k + 1, "basis": m.basis }))
        .collect();
    json!({
        "identities": identities,
        "decision": decision,
        "multipliers": multipliers,
    })
}
