use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SystemModel;
use crate::poly::{Monomial, Polynomial};
use crate::soscomp::{self, PolyIdentity, SolveStatus, SolverSettings, SosProgram, Term};

/// Spectral-radius heuristic for uniform local exponential stability of the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Disturbance sample and the spectral radius of `∂f/∂x(0, d)` there.
    pub samples: Vec<(Vec<f64>, f64)>,
    pub max_radius: f64,
    pub margin: f64,
    pub pass: bool,
    pub note: String,
}

/// Checks `ρ(∂f/∂x(0, d)) < 1 - 1e-6` on a grid of `d_samples` points per disturbance
/// dimension. Necessary, not sufficient.
pub fn check_exponential_stability(model: &SystemModel, d_samples: usize) -> StabilityReport {
    let n = model.n;
    let jac: Vec<Vec<Polynomial>> = model
        .f
        .iter()
        .map(|fi| (0..n).map(|j| fi.derivative(j)).collect())
        .collect();
    let margin = 1e-6;
    let mut samples = Vec::new();
    let mut max_radius: f64 = 0.0;
    for d in model.disturbance_grid(d_samples) {
        let point: Vec<f64> = std::iter::repeat_n(0.0, n).chain(d.iter().copied()).collect();
        let j = DMatrix::from_fn(n, n, |r, c| jac[r][c].eval(&point));
        let rho = j.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        max_radius = max_radius.max(rho);
        samples.push((d, rho));
    }
    StabilityReport {
        pass: !samples.is_empty() && max_radius < 1.0 - margin,
        samples,
        max_radius,
        margin,
        note: "spectral radius of the Jacobian at the origin over sampled disturbances; \
               a necessary condition for exponential stability, not a proof"
            .to_string(),
    }
}

/// `‖d‖² - R_D` among the disturbance constraints, returning `R_D`.
pub fn check_archimedean_d(model: &SystemModel) -> Option<f64> {
    let m = model.m;
    model.disturbance.polys().find_map(|h| {
        let rd = -h.constant_term();
        if rd < 0.0 {
            return None;
        }
        let mut ball = Polynomial::constant(m, -rd);
        for i in 0..m {
            ball = &ball + &Polynomial::monomial(Monomial::var(m, i).pow(2), 1.0);
        }
        let diff = h - &ball;
        let ok = diff.terms().all(|(_, c)| c.abs() <= 1e-12);
        ok.then_some(rd)
    })
}

/// A redundant ball radius containing the disturbance box.
pub fn suggested_archimedean_radius(model: &SystemModel) -> f64 {
    model
        .disturbance_box
        .iter()
        .map(|&(lo, hi)| (lo * lo).max(hi * hi))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Feasible => "feasible",
            Verdict::Infeasible => "infeasible",
            Verdict::Unknown => "unknown",
        })
    }
}

/// One certified inequality `p >= threshold` on a semi-algebraic set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginCheck {
    pub name: String,
    pub verdict: Verdict,
    /// Largest certified `t` with `p - t` in the quadratic module.
    pub margin: f64,
    pub threshold: f64,
    pub status: SolveStatus,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub verdict: Verdict,
    pub parts: Vec<MarginCheck>,
}

impl FeasibilityReport {
    fn from_parts(parts: Vec<MarginCheck>) -> Self {
        let verdict = if parts.iter().any(|p| p.verdict == Verdict::Infeasible) {
            Verdict::Infeasible
        } else if parts.iter().any(|p| p.verdict == Verdict::Unknown) {
            Verdict::Unknown
        } else {
            Verdict::Feasible
        };
        FeasibilityReport { verdict, parts }
    }
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

/// Maximizes `t` subject to `p - t = σ0 + Σ σ_i g_i` with SOS `σ`, a Putinar certificate
/// that `p >= t` on `{g_i >= 0}`. Verdict feasible iff `t* >= threshold`.
///
/// `degree` is the matching degree; by default the smallest even degree covering `p` and
/// every `g_i`. Each `σ_i` gets `degree - deg g_i` rounded down to even.
pub fn putinar_margin(
    name: &str,
    p: &Polynomial,
    nonneg: &[Polynomial],
    degree: Option<u32>,
    threshold: f64,
    settings: &SolverSettings,
) -> MarginCheck {
    let nv = p.nvars();
    let top = nonneg.iter().map(|g| g.degree()).chain([p.degree(), 2]).max().unwrap_or(2) as u32;
    let degree = degree.unwrap_or(even_ceil(top));
    let unknown = |status| MarginCheck {
        name: name.to_string(),
        verdict: Verdict::Unknown,
        margin: f64::NAN,
        threshold,
        status,
        residual: f64::NAN,
    };

    let mut prog = SosProgram::new();
    let t = prog.add_decision("t", nv, 0);
    let Ok(s0) = prog.add_sos("s0", nv, degree) else {
        return unknown(SolveStatus::Unknown);
    };
    let mut id = PolyIdentity::new(name, nv)
        .lhs(Term::Data(p.clone()))
        .rhs(prog.decision_term(t, nv, Polynomial::one(nv)))
        .rhs(prog.sos_term(s0, Polynomial::one(nv)));
    for (i, g) in nonneg.iter().enumerate() {
        let dg = g.degree().max(0) as u32;
        if dg > degree {
            return unknown(SolveStatus::Unknown);
        }
        let ds = (degree - dg) / 2 * 2;
        let s = prog.add_sos(format!("s{}", i + 1), nv, ds).expect("even degree");
        id = id.rhs(prog.sos_term(s, g.clone()));
    }
    prog.add_identity(id);
    prog.set_objective(t, vec![-1.0]);
    if soscomp::prune_gram_bases(&mut prog).is_err() {
        return unknown(SolveStatus::Unknown);
    }
    let Ok(sdp) = soscomp::compile(&prog) else {
        return unknown(SolveStatus::Unknown);
    };
    let sol = match soscomp::solve(&sdp, settings) {
        Ok(s) => s,
        Err(_) => return unknown(SolveStatus::Unknown),
    };
    let Ok(ext) = soscomp::extract(&sol, &prog) else {
        return unknown(sol.status);
    };
    let margin = ext.decision[0].constant_term();
    let residual = soscomp::identity_residual(&prog, &ext)
        .map(|r| r.into_iter().fold(0.0, f64::max))
        .unwrap_or(f64::NAN);
    let verdict = if margin >= threshold {
        Verdict::Feasible
    } else {
        Verdict::Infeasible
    };
    MarginCheck {
        name: name.to_string(),
        verdict,
        margin,
        threshold,
        status: sol.status,
        residual,
    }
}

fn state_constraints_in(model: &SystemModel, nv: usize) -> Vec<Polynomial> {
    let map: Vec<usize> = (0..model.n).collect();
    model
        .constraint
        .polys()
        .map(|h| &Polynomial::one(nv) - &h.embed(nv, &map))
        .collect()
}

fn disturbance_constraints_in(model: &SystemModel, nv: usize) -> Vec<Polynomial> {
    let map: Vec<usize> = (model.n..model.n + model.m).collect();
    model.disturbance.polys().map(|h| -&h.embed(nv, &map)).collect()
}

/// Certifies `R - |f(x,d)|² >= 0` on `X × D` and `R - |x|² > 0` on `X`.
pub fn check_reach_bound(model: &SystemModel, settings: &SolverSettings) -> FeasibilityReport {
    let n = model.n;
    let nv = n + model.m;
    let degree = model.settings.check_degree;
    let mut reach = Polynomial::constant(nv, model.r2);
    for fi in &model.f {
        reach = &reach - &(fi * fi);
    }
    let mut sets = state_constraints_in(model, nv);
    sets.extend(disturbance_constraints_in(model, nv));
    let one_step = putinar_margin("reach", &reach, &sets, degree, -1e-6, settings);

    let inside = &Polynomial::constant(n, model.r2) - &model.h0();
    let contain = putinar_margin(
        "constraint-in-ball",
        &inside,
        &state_constraints_in(model, n),
        degree,
        1e-6,
        settings,
    );
    FeasibilityReport::from_parts(vec![one_step, contain])
}

/// Certifies `h∞ - h∞∘f - ε|x|² >= 0` on `{h∞ <= 1} × D` and `X∞ ⊆ X`.
pub fn check_seed_lyapunov(model: &SystemModel, settings: &SolverSettings) -> FeasibilityReport {
    let n = model.n;
    let nv = n + model.m;
    let degree = model.settings.check_degree;
    let map: Vec<usize> = (0..n).collect();
    let Ok(seed_f) = model.seed.compose(&model.f) else {
        return FeasibilityReport::from_parts(Vec::new());
    };
    let decrease = &(&model.seed.embed(nv, &map) - &seed_f) - &model.h0().embed(nv, &map).scale(model.settings.lyapunov_slack);
    let mut sets = vec![&Polynomial::one(nv) - &model.seed.embed(nv, &map)];
    sets.extend(disturbance_constraints_in(model, nv));
    let mut parts = vec![putinar_margin("seed-decrease", &decrease, &sets, degree, -1e-6, settings)];

    let seed_set = vec![&Polynomial::one(n) - &model.seed];
    for (j, h) in model.constraint.polys().enumerate() {
        let gap = &Polynomial::one(n) - h;
        parts.push(putinar_margin(
            &format!("seed-in-constraint-{}", j + 1),
            &gap,
            &seed_set,
            degree,
            1e-6,
            settings,
        ));
    }
    FeasibilityReport::from_parts(parts)
}
