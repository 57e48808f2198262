//! The perturbed system `x(k+1) = f(x(k), d(k))` with its disturbance set `D`, state
//! constraints `X`, seed set `X∞`, bounding ball and cost; trajectories and policies; and
//! the checkable parts of the standing assumptions.

mod checks;
mod load;
mod sim;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::poly::Polynomial;
use crate::soscomp::SolverSettings;

pub use checks::{
    check_archimedean_d, check_exponential_stability, check_reach_bound, check_seed_lyapunov, putinar_margin,
    suggested_archimedean_radius, FeasibilityReport, MarginCheck, StabilityReport, Verdict,
};
pub use load::{load_model, load_model_file};
pub use sim::{run_until, simulate, stage_seed, Outcome, Policy, Trajectory};

/// Tolerance for membership in `D` when filtering grids.
pub const D_TOLERANCE: f64 = 1e-12;
/// `x` is in `X∞` when `h∞(x) < 1 - SEED_MARGIN`.
pub const SEED_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sense {
    /// `h(y) <= 0`
    NonPositive,
    /// `h(y) < 1`
    BelowOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub poly: Polynomial,
    pub sense: Sense,
}

impl Constraint {
    /// Signed violation: positive when the constraint fails.
    pub fn violation(&self, y: &[f64]) -> f64 {
        let v = self.poly.eval(y);
        match self.sense {
            Sense::NonPositive => v,
            Sense::BelowOne => v - 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiAlgebraicSet {
    pub nvars: usize,
    pub constraints: Vec<Constraint>,
}

impl SemiAlgebraicSet {
    pub fn new(nvars: usize, constraints: Vec<Constraint>) -> Result<Self, ModelError> {
        if let Some(c) = constraints.iter().find(|c| c.poly.nvars() != nvars) {
            return Err(ModelError::Dimension {
                expected: nvars,
                got: c.poly.nvars(),
            });
        }
        Ok(SemiAlgebraicSet { nvars, constraints })
    }

    /// Membership with slack `tol` on every constraint. Strict constraints are strict.
    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.constraints.iter().all(|c| match c.sense {
            Sense::NonPositive => c.violation(y) <= tol,
            Sense::BelowOne => c.violation(y) < tol,
        })
    }

    pub fn polys(&self) -> impl Iterator<Item = &Polynomial> {
        self.constraints.iter().map(|c| &c.poly)
    }
}

/// Solver-related defaults carried by a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    /// Default degree of `u`.
    pub degree: u32,
    /// Multiplier degree per degree of `u`.
    pub mult_degree: BTreeMap<u32, u32>,
    /// Matching degree for the assumption checks (default: smallest even degree that
    /// covers every term).
    pub check_degree: Option<u32>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Slack `ε` in the seed decrease condition.
    pub lyapunov_slack: f64,
    /// Disturbance grid points per dimension.
    pub d_grid: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            degree: 6,
            mult_degree: BTreeMap::new(),
            check_degree: None,
            tolerance: 1e-8,
            max_iterations: 150,
            lyapunov_slack: 1e-6,
            d_grid: 11,
        }
    }
}

/// Everything needed to pose the problem. Immutable after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub state_names: Vec<String>,
    pub disturbance_names: Vec<String>,
    /// Components of `f` over `(x, d)`.
    pub f: Vec<Polynomial>,
    /// `D = {d : h_i(d) <= 0}`.
    pub disturbance: SemiAlgebraicSet,
    /// Axis-aligned box containing `D`.
    pub disturbance_box: Vec<(f64, f64)>,
    /// `X = {x : h_j(x) < 1}`.
    pub constraint: SemiAlgebraicSet,
    /// `h∞`; the seed set is `{h∞ < 1}`.
    pub seed: Polynomial,
    /// `B(0,R) = {|x|² <= r2}`.
    pub r2: f64,
    pub cost: Polynomial,
    pub settings: ModelSettings,
    /// SHA-256 of the source text.
    pub source_hash: String,
}

impl SystemModel {
    /// `h0 = Σ x_i²`.
    pub fn h0(&self) -> Polynomial {
        let mut h = Polynomial::zero(self.n);
        for i in 0..self.n {
            let x = Polynomial::var(self.n, i);
            h = &h + &(&x * &x);
        }
        h
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            tolerance: self.settings.tolerance,
            max_iterations: self.settings.max_iterations,
            ..SolverSettings::default()
        }
    }

    /// `f(x, d)`.
    pub fn step(&self, x: &[f64], d: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.n {
            return Err(ModelError::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        if d.len() != self.m {
            return Err(ModelError::Dimension {
                expected: self.m,
                got: d.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        self.step_into(x, d, &mut out);
        Ok(out)
    }

    /// Unchecked [`SystemModel::step`] writing into `out`.
    pub fn step_into(&self, x: &[f64], d: &[f64], out: &mut [f64]) {
        let mut xd = [0.0f64; 16];
        let xd = if self.n + self.m <= 16 {
            xd[..self.n].copy_from_slice(x);
            xd[self.n..self.n + self.m].copy_from_slice(d);
            &xd[..self.n + self.m]
        } else {
            return self.step_into_slow(x, d, out);
        };
        for (o, fi) in out.iter_mut().zip(&self.f) {
            *o = fi.eval(xd);
        }
    }

    fn step_into_slow(&self, x: &[f64], d: &[f64], out: &mut [f64]) {
        let xd: Vec<f64> = x.iter().chain(d).copied().collect();
        for (o, fi) in out.iter_mut().zip(&self.f) {
            *o = fi.eval(&xd);
        }
    }

    pub fn in_constraint(&self, x: &[f64]) -> bool {
        self.constraint.contains(x, 0.0)
    }

    pub fn in_seed(&self, x: &[f64]) -> bool {
        self.seed.eval(x) < 1.0 - SEED_MARGIN
    }

    pub fn in_ball(&self, x: &[f64]) -> bool {
        x.iter().map(|v| v * v).sum::<f64>() <= self.r2
    }

    pub fn in_disturbance(&self, d: &[f64]) -> bool {
        self.disturbance.contains(d, D_TOLERANCE)
    }

    /// `max_j h_j(x)`; below one exactly on `X`.
    pub fn constraint_level(&self, x: &[f64]) -> f64 {
        self.constraint.polys().map(|h| h.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Uniform grid with `points` nodes per dimension over the disturbance box, filtered
    /// by the constraints of `D`. With `points == 1` the box centre is used.
    pub fn disturbance_grid(&self, points: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .disturbance_box
            .iter()
            .map(|&(lo, hi)| linspace(lo, hi, points))
            .collect();
        cartesian(&axes).into_iter().filter(|d| self.in_disturbance(d)).collect()
    }

    /// Corners of the disturbance box that lie in `D`, or the extreme grid points along
    /// each axis when no corner does (e.g. a ball).
    pub fn disturbance_extremes(&self, points: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self.disturbance_box.iter().map(|&(lo, hi)| vec![lo, hi]).collect();
        let corners: Vec<Vec<f64>> = cartesian(&axes).into_iter().filter(|d| self.in_disturbance(d)).collect();
        if !corners.is_empty() || self.m == 0 {
            return corners;
        }
        let grid = self.disturbance_grid(points);
        let mut out: Vec<Vec<f64>> = Vec::new();
        for i in 0..self.m {
            for pick_max in [false, true] {
                let best = grid.iter().max_by(|a, b| {
                    let (a, b) = if pick_max { (a[i], b[i]) } else { (-a[i], -b[i]) };
                    a.total_cmp(&b)
                });
                if let Some(b) = best {
                    if !out.contains(b) {
                        out.push(b.clone());
                    }
                }
            }
        }
        out
    }
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..points)
            .map(|i| {
                if i == points - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

/// All combinations, last axis varying fastest.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}
