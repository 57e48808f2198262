use serde::{Deserialize, Serialize};

use super::RoaConfig;
use crate::error::SosError;
use crate::model::{check_archimedean_d, SystemModel};
use crate::poly::{ball_moment, sublevel_moments, Polynomial};
use crate::soscomp::{PolyIdentity, SosProgram, Term};

/// Degrees chosen for one identity family: the plain SOS term and each constraint
/// multiplier, in the order of their companions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyDegrees {
    pub sos: u32,
    pub multipliers: Vec<u32>,
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

fn even_floor(d: u32) -> u32 {
    d - d % 2
}

impl FamilyDegrees {
    /// `base` is the largest degree among the data and decision terms, `companions` the
    /// degrees of the polynomials multiplying each constraint multiplier.
    ///
    /// Without an override the matching degree is the smallest even degree covering
    /// `base` and every companion, and each multiplier fills it. With an override every
    /// multiplier takes that degree and the plain SOS term covers whatever results.
    pub fn choose(base: u32, companions: &[u32], mult_degree: Option<u32>) -> Self {
        match mult_degree {
            Some(d) => {
                let top = companions.iter().map(|c| c + d).chain([base]).max().unwrap_or(base);
                FamilyDegrees {
                    sos: even_ceil(top),
                    multipliers: vec![d; companions.len()],
                }
            }
            None => {
                let matching = even_ceil(companions.iter().copied().chain([base, 2]).max().unwrap_or(2));
                FamilyDegrees {
                    sos: matching,
                    multipliers: companions.iter().map(|c| even_floor(matching - c)).collect(),
                }
            }
        }
    }
}

fn deg(p: &Polynomial) -> u32 {
    p.degree().max(0) as u32
}

/// `l = ∫_{B(0,R)} b - ∫_{X∞} b` for each monomial `b` of `u`'s basis.
pub fn objective_vector(model: &SystemModel, prog: &SosProgram, moment_points: usize) -> Vec<f64> {
    let monomials = prog.decision[0].basis.elements();
    let seed = sublevel_moments(&model.seed, model.r2, monomials, moment_points);
    monomials
        .iter()
        .zip(seed)
        .map(|(m, s)| ball_moment(m, model.r2) - s)
        .collect()
}

/// Per-coordinate scale `s` of the disturbance box. The decrease identity is posed in
/// `d = s ⊙ e` with `e` in the unit box, so that high powers of a small disturbance do
/// not force huge Gram entries.
pub fn disturbance_scale(model: &SystemModel) -> Vec<f64> {
    model
        .disturbance_box
        .iter()
        .map(|&(lo, hi)| {
            let s = lo.abs().max(hi.abs());
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect()
}

/// The program: minimize `∫_{B(0,R)} u - ∫_{X∞} u` subject to, over `(x, d)`,
///
/// `u - u∘f - g(1 - u) = s0 + s1 (R - h0) + s2 (h∞ - 1) - Σ_i s3_i h_i^D`
///
/// and over `x`, for every state constraint `h_j`,
///
/// `u - 1 = s4_j + s5_j (R - h0) + s6_j (h_j - 1)`,
/// `u - h_j = s7_j + s8_j (R - h0) + Σ_l s9_l_j (1 - h_l)`.
///
/// `u` is decision polynomial 0. The decrease identity uses the scaled disturbance of
/// [`disturbance_scale`], with each `h_i^D` divided by its largest coefficient.
pub fn build_program(model: &SystemModel, cfg: &RoaConfig) -> Result<SosProgram, SosError> {
    cfg.validate()?;
    if check_archimedean_d(model).is_none() {
        log::warn!("no ball constraint |d|² - R_D among the disturbance constraints; the relaxation may be weak");
    }
    let (n, m) = (model.n, model.m);
    let nv = n + m;
    let xmap: Vec<usize> = (0..n).collect();
    let dmap: Vec<usize> = (n..nv).collect();
    let k = cfg.k;
    let over = cfg.mult_degree;

    let mut prog = SosProgram::new();
    let u = prog.add_decision("u", n, k);

    let h0 = model.h0();
    let ball = &Polynomial::constant(n, model.r2) - &h0;
    let ball_xd = ball.embed(nv, &xmap);
    let g_xd = model.cost.embed(nv, &xmap);
    let seed_xd = model.seed.embed(nv, &xmap);
    let scale = disturbance_scale(model);
    let d_subs: Vec<Polynomial> = (0..m).map(|i| Polynomial::var(m, i).scale(scale[i])).collect();
    let xd_subs: Vec<Polynomial> = (0..n)
        .map(|i| Polynomial::var(nv, i))
        .chain((0..m).map(|i| Polynomial::var(nv, n + i).scale(scale[i])))
        .collect();
    let f_scaled = model.f.iter().map(|fi| fi.compose(&xd_subs)).collect::<Result<Vec<_>, _>>()?;
    let hd = model
        .disturbance
        .polys()
        .map(|h| {
            let h = h.compose(&d_subs)?;
            let top = h.max_abs_coeff();
            Ok(h.scale(if top > 0.0 { 1.0 / top } else { 1.0 }).embed(nv, &dmap))
        })
        .collect::<Result<Vec<Polynomial>, crate::error::PolyError>>()?;
    let hx: Vec<&Polynomial> = model.constraint.polys().collect();

    // decrease along f outside the seed set
    let fdeg = f_scaled.iter().map(deg).max().unwrap_or(1);
    let mut comp = vec![2, deg(&model.seed)];
    comp.extend(hd.iter().map(deg));
    let fam = FamilyDegrees::choose((k * fdeg).max(k + deg(&model.cost)), &comp, over);
    log::debug!("decrease family degrees {fam:?}");
    let s0 = prog.add_sos("s0", nv, fam.sos)?;
    let s1 = prog.add_sos("s1", nv, fam.multipliers[0])?;
    let s2 = prog.add_sos("s2", nv, fam.multipliers[1])?;
    let mut id = PolyIdentity::new("decrease", nv)
        .lhs(prog.decision_term(u, nv, Polynomial::one(nv)))
        .lhs(prog.composed_term(u, Polynomial::constant(nv, -1.0), f_scaled))
        .lhs(Term::Data(-&g_xd))
        .lhs(prog.decision_term(u, nv, g_xd.clone()))
        .rhs(prog.sos_term(s0, Polynomial::one(nv)))
        .rhs(prog.sos_term(s1, ball_xd))
        .rhs(prog.sos_term(s2, &seed_xd - &Polynomial::one(nv)));
    for (i, h) in hd.iter().enumerate() {
        let s3 = prog.add_sos(format!("s3_{}", i + 1), nv, fam.multipliers[2 + i])?;
        id = id.rhs(prog.sos_term(s3, -h));
    }
    prog.add_identity(id);

    // u >= 1 on B(0,R) outside X
    for (j, h) in hx.iter().enumerate() {
        let fam = FamilyDegrees::choose(k, &[2, deg(h)], over);
        let s4 = prog.add_sos(format!("s4_{}", j + 1), n, fam.sos)?;
        let s5 = prog.add_sos(format!("s5_{}", j + 1), n, fam.multipliers[0])?;
        let s6 = prog.add_sos(format!("s6_{}", j + 1), n, fam.multipliers[1])?;
        prog.add_identity(
            PolyIdentity::new(format!("outside-{}", j + 1), n)
                .lhs(prog.decision_term(u, n, Polynomial::one(n)))
                .lhs(Term::Data(Polynomial::constant(n, -1.0)))
                .rhs(prog.sos_term(s4, Polynomial::one(n)))
                .rhs(prog.sos_term(s5, ball.clone()))
                .rhs(prog.sos_term(s6, *h - &Polynomial::one(n))),
        );
    }

    // u >= h_j on the closure of X
    for (j, h) in hx.iter().enumerate() {
        let mut comp = vec![2];
        comp.extend(hx.iter().map(|hl| deg(hl)));
        let fam = FamilyDegrees::choose(k.max(deg(h)), &comp, over);
        let s7 = prog.add_sos(format!("s7_{}", j + 1), n, fam.sos)?;
        let s8 = prog.add_sos(format!("s8_{}", j + 1), n, fam.multipliers[0])?;
        let mut id = PolyIdentity::new(format!("above-constraint-{}", j + 1), n)
            .lhs(prog.decision_term(u, n, Polynomial::one(n)))
            .lhs(Term::Data(-*h))
            .rhs(prog.sos_term(s7, Polynomial::one(n)))
            .rhs(prog.sos_term(s8, ball.clone()));
        for (l, hl) in hx.iter().enumerate() {
            let s9 = prog.add_sos(format!("s9_{}_{}", l + 1, j + 1), n, fam.multipliers[1 + l])?;
            id = id.rhs(prog.sos_term(s9, &Polynomial::one(n) - *hl));
        }
        prog.add_identity(id);
    }

    let l = objective_vector(model, &prog, cfg.moment_points);
    prog.set_objective(u, l);
    Ok(prog)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_degrees_fill_matching_degree() {
        let f = FamilyDegrees::choose(12, &[2, 2, 2], None);
        assert_eq!(f, FamilyDegrees { sos: 12, multipliers: vec![10, 10, 10] });
        let f = FamilyDegrees::choose(5, &[2, 3], None);
        assert_eq!(f, FamilyDegrees { sos: 6, multipliers: vec![4, 2] });
    }

    #[test]
    fn override_sets_every_multiplier() {
        let f = FamilyDegrees::choose(12, &[2, 2, 2], Some(8));
        assert_eq!(f, FamilyDegrees { sos: 12, multipliers: vec![8, 8, 8] });
        let f = FamilyDegrees::choose(10, &[2, 2], Some(12));
        assert_eq!(f, FamilyDegrees { sos: 14, multipliers: vec![12, 12] });
    }
}
