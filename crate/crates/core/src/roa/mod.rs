//! The relaxation of the Bellman equation for a given model: program construction, the
//! solve pipeline, the resulting certificate, and its a posteriori certification.

mod certify;
mod program;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::SosError;
use crate::model::SystemModel;
use crate::oracle::{Axis, GridField};
use crate::poly::{Monomial, Polynomial};
use crate::soscomp::{self, SolveStatus, SolverInfo, SolverSettings};

pub use certify::{certify, CertReport, ConstraintViolation, FamilyCheck, PolicyLabel, TrajectoryFailure};
pub use program::{build_program, disturbance_scale, objective_vector, FamilyDegrees};

/// Degree of `u`, multiplier degree override, solver settings and certification sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoaConfig {
    /// Degree of `u`.
    pub k: u32,
    /// Degree of every constraint multiplier. `None` sizes each multiplier from the
    /// matching degree of its identity.
    pub mult_degree: Option<u32>,
    pub solver: SolverSettings,
    /// Quasi-Monte Carlo points for seed-set moments when `h∞` is not a quadratic form.
    pub moment_points: usize,
    /// Certification: sampled initial states.
    pub samples: usize,
    /// Certification: random policies per state (constant extreme policies are added).
    pub policies: usize,
    /// Certification: trajectory horizon.
    pub horizon: usize,
    /// Tolerance of the sampled constraint checks.
    pub tolerance: f64,
    /// Nodes per state axis for the sampled constraint checks; by default 101 for
    /// `n <= 2` and 31 otherwise.
    pub check_grid: Option<usize>,
    pub seed: u64,
}

impl Default for RoaConfig {
    fn default() -> Self {
        RoaConfig {
            k: 6,
            mult_degree: None,
            solver: SolverSettings::default(),
            moment_points: 200_000,
            samples: 1000,
            policies: 50,
            horizon: 200,
            tolerance: 1e-6,
            check_grid: None,
            seed: 42,
        }
    }
}

impl RoaConfig {
    /// Configuration for degree `k` with the model's multiplier degree and solver
    /// defaults.
    pub fn for_model(model: &SystemModel, k: u32) -> Self {
        RoaConfig {
            k,
            mult_degree: model.settings.mult_degree.get(&k).copied(),
            solver: model.solver_settings(),
            ..RoaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SosError> {
        if self.k < 2 {
            return Err(SosError::InvalidConfig(format!("degree of u must be at least 2, got {}", self.k)));
        }
        if let Some(d) = self.mult_degree {
            if d % 2 != 0 {
                return Err(SosError::OddDegree(d));
            }
        }
        Ok(())
    }
}

/// Gram matrix of one multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramRecord {
    pub name: String,
    pub nvars: usize,
    pub basis: Vec<Monomial>,
    /// Rows of the symmetric Gram matrix.
    pub gram: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub identity: String,
    /// Largest absolute coefficient of `lhs - rhs`.
    pub max_abs: f64,
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build: f64,
    pub compile: f64,
    pub solve: f64,
    pub extract: f64,
}

/// The outcome of one solve: `u`, the multiplier Gram matrices, identity residuals and
/// provenance. Stored whatever the status; a failed solve carries `u ≡ 1`, whose
/// sub-level set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaCertificate {
    pub model: String,
    pub model_hash: String,
    pub state_names: Vec<String>,
    pub r2: f64,
    pub config: RoaConfig,
    pub status: SolveStatus,
    pub u: Polynomial,
    /// `∫_{B(0,R)} u - ∫_{X∞} u`, recomputed from the extracted `u`.
    pub objective: Option<f64>,
    /// Multipliers over `(x, d)` are expressed in `d / disturbance_scale`.
    pub multipliers: Vec<GramRecord>,
    pub disturbance_scale: Vec<f64>,
    pub residuals: Vec<IdentityResidual>,
    pub solver: SolverInfo,
    pub sdp_rows: usize,
    pub sdp_blocks: Vec<usize>,
    /// Not serialized, so that a certificate file depends only on its inputs.
    #[serde(skip)]
    pub timings: Timings,
}

impl RoaCertificate {
    pub fn n(&self) -> usize {
        self.u.nvars()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.max_abs).fold(0.0, f64::max)
    }

    pub fn is_solved(&self) -> bool {
        self.status.is_solved()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `|x|² <= R` and `u(x) < 1`.
    pub fn membership(&self, x: &[f64]) -> bool {
        x.len() == self.n() && x.iter().map(|v| v * v).sum::<f64>() <= self.r2 && self.u.eval(x) < 1.0
    }

    /// Membership mask on a grid over the bounding box of `B(0,R)`.
    ///
    /// `fixed` pins coordinates `(axis, value)`; the remaining axes span `±√R` with
    /// `resolution` nodes each. For `n = 3` a single pinned coordinate gives the planar
    /// slices of the figures.
    pub fn sign_grid(&self, resolution: usize, fixed: &[(usize, f64)]) -> GridField<bool> {
        sign_grid(self, resolution, fixed)
    }
}

/// See [`RoaCertificate::sign_grid`].
///
/// # Panics
/// If `resolution < 2` or a pinned axis is out of range.
pub fn sign_grid(cert: &RoaCertificate, resolution: usize, fixed: &[(usize, f64)]) -> GridField<bool> {
    let n = cert.n();
    assert!(fixed.iter().all(|&(i, _)| i < n), "pinned axis out of range");
    let r = cert.r2.sqrt();
    let free: Vec<usize> = (0..n).filter(|i| !fixed.iter().any(|&(j, _)| j == *i)).collect();
    let axes = free
        .iter()
        .map(|&i| {
            let name = cert.state_names.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
            Axis::new(name, -r, r, resolution)
        })
        .collect();
    let mut x = vec![0.0; n];
    for &(i, v) in fixed {
        x[i] = v;
    }
    GridField::from_fn(axes, |c| {
        for (&i, &v) in free.iter().zip(c) {
            x[i] = v;
        }
        cert.membership(&x)
    })
}

/// Builds, compiles and solves the program for `cfg.k`, then extracts `u` and checks the
/// identities. Solver failures are recorded in the certificate status.
pub fn compute_roa(model: &SystemModel, cfg: &RoaConfig) -> Result<RoaCertificate, SosError> {
    cfg.validate()?;
    let mut timings = Timings::default();
    let t = Instant::now();
    let mut prog = build_program(model, cfg)?;
    let removed = soscomp::prune_gram_bases(&mut prog)?;
    log::debug!("pruned {removed} gram monomials");
    timings.build = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let sdp = soscomp::compile(&prog)?;
    timings.compile = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let sol = soscomp::solve(&sdp, &cfg.solver)?;
    timings.solve = t.elapsed().as_secs_f64();
    log::info!(
        "degree {}: {} after {} iterations ({:.2} s)",
        cfg.k,
        sol.status,
        sol.info.iterations,
        timings.solve
    );

    let mut cert = RoaCertificate {
        model: model.name.clone(),
        model_hash: model.source_hash.clone(),
        state_names: model.state_names.clone(),
        r2: model.r2,
        config: cfg.clone(),
        status: sol.status,
        u: Polynomial::one(model.n),
        objective: None,
        multipliers: Vec::new(),
        disturbance_scale: program::disturbance_scale(model),
        residuals: Vec::new(),
        solver: sol.info.clone(),
        sdp_rows: sdp.num_rows(),
        sdp_blocks: sdp.block_dims.clone(),
        timings,
    };
    if !sol.status.is_solved() {
        return Ok(cert);
    }

    let t = Instant::now();
    let ext = soscomp::extract(&sol, &prog)?;
    let residuals = soscomp::identity_residual(&prog, &ext)?;
    let u = ext.decision[0].clone();
    let l = &prog.objective[0];
    cert.objective = Some(
        prog.decision[0]
            .basis
            .elements()
            .iter()
            .zip(l)
            .map(|(m, li)| u.coeff(m) * li)
            .sum(),
    );
    cert.u = u;
    cert.residuals = prog
        .identities
        .iter()
        .zip(residuals)
        .map(|(id, r)| IdentityResidual {
            identity: id.name.clone(),
            max_abs: r,
        })
        .collect();
    cert.multipliers = prog
        .multipliers
        .iter()
        .zip(&ext.grams)
        .zip(&sol.min_eigenvalues)
        .map(|((m, q), &ev)| GramRecord {
            name: m.name.clone(),
            nvars: m.nvars,
            basis: m.basis.clone(),
            gram: q.row_iter().map(|r| r.iter().copied().collect()).collect(),
            min_eigenvalue: ev,
        })
        .collect();
    cert.timings.extract = t.elapsed().as_secs_f64();
    Ok(cert)
}
