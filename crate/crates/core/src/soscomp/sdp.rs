use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::poly::Monomial;

/// One equality `Σ free_j z_j + Σ_k <A_k, X_k> = rhs`.
///
/// PSD entries `(block, p, q, a)` with `p <= q` stand for the symmetric pair
/// `A[p][q] = A[q][p] = a`, so an off-diagonal entry contributes `2 a X[p][q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpRow {
    pub free: Vec<(usize, f64)>,
    pub psd: Vec<(usize, usize, usize, f64)>,
    pub rhs: f64,
}

impl SdpRow {
    pub fn is_structurally_empty(&self) -> bool {
        self.free.is_empty() && self.psd.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.free
            .iter()
            .map(|e| e.1.abs())
            .chain(self.psd.iter().map(|e| e.3.abs()))
            .fold(0.0, f64::max)
    }
}

/// Which identity and monomial a row matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLabel {
    pub identity: usize,
    pub monomial: Monomial,
}

/// Standard-form SDP: minimize `c_free . z + Σ <C_k, X_k>` subject to the rows,
/// `X_k ⪰ 0`, `z` free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub num_free: usize,
    pub rows: Vec<SdpRow>,
    pub labels: Vec<RowLabel>,
    pub cost_free: Vec<f64>,
    /// Sparse symmetric cost per block, `(p, q, c)` with `p <= q`.
    pub cost_blocks: Vec<Vec<(usize, usize, f64)>>,
}

impl SdpProblem {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Residual `rhs - (A z + <A, X>)` per row.
    pub fn row_residuals(&self, free: &[f64], blocks: &[DMatrix<f64>]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let mut v: f64 = r.free.iter().map(|&(j, a)| a * free[j]).sum();
                for &(k, p, q, a) in &r.psd {
                    let w = if p == q { 1.0 } else { 2.0 };
                    v += w * a * blocks[k][(p, q)];
                }
                r.rhs - v
            })
            .collect()
    }

    pub fn objective_value(&self, free: &[f64], blocks: &[DMatrix<f64>]) -> f64 {
        let mut v: f64 = self.cost_free.iter().zip(free).map(|(c, z)| c * z).sum();
        for (k, entries) in self.cost_blocks.iter().enumerate() {
            for &(p, q, c) in entries {
                let w = if p == q { 1.0 } else { 2.0 };
                v += w * c * blocks[k][(p, q)];
            }
        }
        v
    }

    /// Sparse text dump, one nonzero per line: `constraint block row col value`.
    ///
    /// Constraint `0` is the objective and rows are numbered from `1`. Block `0` holds the
    /// free variables (`row` = variable index from `1`, `col` = 0) and the right-hand side
    /// (`row` = `col` = 0); PSD blocks are numbered from `1` with 1-based upper-triangle
    /// indices.
    pub fn dump_sparse(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# roa-sdp 1").unwrap();
        writeln!(out, "# rows {}", self.rows.len()).unwrap();
        writeln!(out, "# free {}", self.num_free).unwrap();
        let dims: Vec<String> = self.block_dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "# blocks {}", dims.join(" ")).unwrap();
        for (j, &c) in self.cost_free.iter().enumerate() {
            if c != 0.0 {
                writeln!(out, "0 0 {} 0 {:e}", j + 1, c).unwrap();
            }
        }
        for (k, entries) in self.cost_blocks.iter().enumerate() {
            for &(p, q, c) in entries {
                writeln!(out, "0 {} {} {} {:e}", k + 1, p + 1, q + 1, c).unwrap();
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.rhs != 0.0 {
                writeln!(out, "{} 0 0 0 {:e}", i + 1, r.rhs).unwrap();
            }
            for &(j, a) in &r.free {
                writeln!(out, "{} 0 {} 0 {:e}", i + 1, j + 1, a).unwrap();
            }
            for &(k, p, q, a) in &r.psd {
                writeln!(out, "{} {} {} {} {:e}", i + 1, k + 1, p + 1, q + 1, a).unwrap();
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unbounded,
    Unknown,
}

impl SolveStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NearOptimal => "near-optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Solver diagnostics at termination.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub backend: String,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub dual_objective: f64,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub free: Vec<f64>,
    pub blocks: Vec<DMatrix<f64>>,
    /// Equality multipliers.
    pub dual: Vec<f64>,
    pub objective: f64,
    /// Smallest eigenvalue of each returned block.
    pub min_eigenvalues: Vec<f64>,
    pub info: SolverInfo,
}

impl SdpSolution {
    /// A solution carrying only a status, e.g. from presolve.
    pub fn failed(status: SolveStatus, sdp: &SdpProblem, backend: &str) -> Self {
        SdpSolution {
            status,
            free: vec![0.0; sdp.num_free],
            blocks: sdp.block_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
            dual: vec![0.0; sdp.rows.len()],
            objective: f64::NAN,
            min_eigenvalues: vec![0.0; sdp.block_dims.len()],
            info: SolverInfo {
                backend: backend.to_string(),
                ..Default::default()
            },
        }
    }
}
