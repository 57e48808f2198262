use std::collections::{BTreeMap, BTreeSet, HashSet};

use log::debug;

use super::program::{PolyIdentity, SosProgram, Term};
use super::sdp::{RowLabel, SdpProblem, SdpRow};
use crate::error::SosError;
use crate::poly::{Monomial, Polynomial, Substitution};

#[derive(Default)]
struct RowAcc {
    free: BTreeMap<usize, f64>,
    psd: BTreeMap<(usize, usize, usize), f64>,
    constant: f64,
}

/// Images `factor * b(subst)` of each basis monomial of a decision polynomial.
pub(crate) fn decision_images(
    basis: &[Monomial],
    factor: &Polynomial,
    subst: &[Polynomial],
) -> Result<Vec<Polynomial>, SosError> {
    let mut cache = Substitution::new(subst)?;
    Ok(basis.iter().map(|b| factor * &cache.image(b)).collect())
}

fn malformed(id: &PolyIdentity, detail: String) -> SosError {
    SosError::MalformedIdentity {
        identity: id.name.clone(),
        detail,
    }
}

fn check_term(prog: &SosProgram, id: &PolyIdentity, term: &Term) -> Result<(), SosError> {
    let n = id.nvars;
    match term {
        Term::Data(p) if p.nvars() != n => Err(malformed(id, format!("data polynomial has {} variables", p.nvars()))),
        Term::Decision { index, factor, subst } => {
            let dp = prog
                .decision
                .get(*index)
                .ok_or_else(|| malformed(id, format!("no decision polynomial {index}")))?;
            if subst.len() != dp.basis.nvars() {
                return Err(malformed(id, format!("`{}` needs {} substitutes", dp.name, dp.basis.nvars())));
            }
            if factor.nvars() != n || subst.iter().any(|s| s.nvars() != n) {
                return Err(malformed(id, format!("`{}` term lives in the wrong variable space", dp.name)));
            }
            Ok(())
        }
        Term::Sos { index, factor } => {
            let m = prog
                .multipliers
                .get(*index)
                .ok_or_else(|| malformed(id, format!("no multiplier {index}")))?;
            if m.nvars != n || factor.nvars() != n {
                return Err(malformed(id, format!("multiplier `{}` lives in the wrong variable space", m.name)));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Compiles an SOS program to a standard-form SDP by coefficient matching.
///
/// Each multiplier becomes one PSD block over its Gram basis, each decision coefficient a
/// free scalar, and each identity one equality per monomial that carries a nonzero entry.
pub fn compile(prog: &SosProgram) -> Result<SdpProblem, SosError> {
    let mut offsets = Vec::with_capacity(prog.decision.len());
    let mut num_free = 0;
    for d in &prog.decision {
        offsets.push(num_free);
        num_free += d.basis.len();
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (ii, id) in prog.identities.iter().enumerate() {
        let mut acc: BTreeMap<Monomial, RowAcc> = BTreeMap::new();
        let mut max_degree = 0u32;
        for (sign, term) in id.signed_terms() {
            check_term(prog, id, term)?;
            match term {
                Term::Data(p) => {
                    for (m, c) in p.terms() {
                        max_degree = max_degree.max(m.degree());
                        acc.entry(m.clone()).or_default().constant += sign * c;
                    }
                }
                Term::Decision { index, factor, subst } => {
                    let basis = prog.decision[*index].basis.elements();
                    let images = decision_images(basis, factor, subst)?;
                    for (j, img) in images.iter().enumerate() {
                        let var = offsets[*index] + j;
                        for (m, c) in img.terms() {
                            max_degree = max_degree.max(m.degree());
                            *acc.entry(m.clone()).or_default().free.entry(var).or_insert(0.0) += sign * c;
                        }
                    }
                }
                Term::Sos { index, factor } => {
                    let basis = &prog.multipliers[*index].basis;
                    for p in 0..basis.len() {
                        for q in p..basis.len() {
                            let prod = basis[p].mul(&basis[q]);
                            for (fm, fc) in factor.terms() {
                                let m = prod.mul(fm);
                                max_degree = max_degree.max(m.degree());
                                *acc.entry(m).or_default().psd.entry((*index, p, q)).or_insert(0.0) += sign * fc;
                            }
                        }
                    }
                }
            }
        }
        if let Some(md) = id.matching_degree {
            if max_degree > md {
                return Err(SosError::DegreeBookkeeping {
                    identity: id.name.clone(),
                    term_degree: max_degree,
                    matching_degree: md,
                });
            }
        }
        for (m, r) in acc {
            let free: Vec<(usize, f64)> = r.free.into_iter().filter(|e| e.1 != 0.0).collect();
            let psd: Vec<(usize, usize, usize, f64)> = r
                .psd
                .into_iter()
                .filter(|e| e.1 != 0.0)
                .map(|((k, p, q), a)| (k, p, q, a))
                .collect();
            let rhs = -r.constant;
            if free.is_empty() && psd.is_empty() && rhs == 0.0 {
                continue;
            }
            rows.push(SdpRow { free, psd, rhs });
            labels.push(RowLabel {
                identity: ii,
                monomial: m,
            });
        }
    }

    let cost_free = prog.objective.iter().flatten().copied().collect();
    Ok(SdpProblem {
        block_dims: prog.multipliers.iter().map(|m| m.basis.len()).collect(),
        num_free,
        rows,
        labels,
        cost_free,
        cost_blocks: vec![Vec::new(); prog.multipliers.len()],
    })
}

/// Largest total degree of each term in the identity, in `signed_terms` order.
pub fn term_degrees(prog: &SosProgram, id: &PolyIdentity) -> Result<Vec<u32>, SosError> {
    id.signed_terms()
        .map(|(_, t)| {
            check_term(prog, id, t)?;
            Ok(match t {
                Term::Data(p) => p.degree().max(0) as u32,
                Term::Decision { index, factor, subst } => {
                    let imgs = decision_images(prog.decision[*index].basis.elements(), factor, subst)?;
                    imgs.iter().map(|p| p.degree().max(0) as u32).max().unwrap_or(0)
                }
                Term::Sos { index, factor } => prog.multipliers[*index].degree() + factor.degree().max(0) as u32,
            })
        })
        .collect()
}

fn structural_support(prog: &SosProgram, term: &Term) -> Result<BTreeSet<Monomial>, SosError> {
    let mut s = BTreeSet::new();
    match term {
        Term::Data(p) => s.extend(p.terms().map(|(m, _)| m.clone())),
        Term::Decision { index, factor, subst } => {
            for img in decision_images(prog.decision[*index].basis.elements(), factor, subst)? {
                s.extend(img.terms().map(|(m, _)| m.clone()));
            }
        }
        Term::Sos { index, factor } => {
            let b = &prog.multipliers[*index].basis;
            for p in 0..b.len() {
                for q in p..b.len() {
                    let prod = b[p].mul(&b[q]);
                    s.extend(factor.terms().map(|(fm, _)| prod.mul(fm)));
                }
            }
        }
    }
    Ok(s)
}

/// Shrinks the Gram basis of every multiplier that enters exactly one identity with a
/// constant factor, by diagonal consistency: a monomial `m` is dropped while `m²` lies
/// outside the support of every other term and cannot arise as `m_j m_k` with `j != k`.
/// The corresponding Gram diagonal entry would be forced to zero.
///
/// Returns the number of monomials removed.
pub fn prune_gram_bases(prog: &mut SosProgram) -> Result<usize, SosError> {
    let mut uses = vec![0usize; prog.multipliers.len()];
    for id in &prog.identities {
        for (_, t) in id.signed_terms() {
            if let Term::Sos { index, .. } = t {
                uses[*index] += 1;
            }
        }
    }
    let mut removed = 0;
    for ii in 0..prog.identities.len() {
        let id = &prog.identities[ii];
        let targets: Vec<usize> = id
            .signed_terms()
            .filter_map(|(_, t)| match t {
                Term::Sos { index, factor }
                    if uses[*index] == 1 && factor.degree() == 0 && !factor.is_zero() =>
                {
                    Some(*index)
                }
                _ => None,
            })
            .collect();
        for k in targets {
            let mut other: HashSet<Monomial> = HashSet::new();
            for (_, t) in prog.identities[ii].signed_terms() {
                if matches!(t, Term::Sos { index, .. } if *index == k) {
                    continue;
                }
                other.extend(structural_support(prog, t)?);
            }
            let before = prog.multipliers[k].basis.len();
            let kept = diagonal_consistency(&prog.multipliers[k].basis, &other);
            debug!(
                "gram basis `{}`: {} -> {} monomials",
                prog.multipliers[k].name,
                before,
                kept.len()
            );
            removed += before - kept.len();
            prog.multipliers[k].basis = kept;
        }
    }
    Ok(removed)
}

fn diagonal_consistency(basis: &[Monomial], other: &HashSet<Monomial>) -> Vec<Monomial> {
    let mut current: Vec<Monomial> = basis.to_vec();
    loop {
        let mut cross: HashSet<Monomial> = HashSet::new();
        for j in 0..current.len() {
            for k in j + 1..current.len() {
                cross.insert(current[j].mul(&current[k]));
            }
        }
        let next: Vec<Monomial> = current
            .iter()
            .filter(|m| {
                let sq = m.pow(2);
                other.contains(&sq) || cross.contains(&sq)
            })
            .cloned()
            .collect();
        if next.len() == current.len() {
            return current;
        }
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;

    /// sigma(x) = x^2 + c, sigma SOS of degree 2, c free.
    fn toy() -> SosProgram {
        let mut prog = SosProgram::new();
        let c = prog.add_decision("c", 1, 0);
        let s = prog.add_sos("sigma", 1, 2).unwrap();
        let x = Polynomial::var(1, 0);
        let id = PolyIdentity::new("toy", 1)
            .lhs(prog.sos_term(s, Polynomial::one(1)))
            .rhs(Term::Data(&x * &x))
            .rhs(prog.decision_term(c, 1, Polynomial::one(1)));
        prog.add_identity(id);
        prog.set_objective(c, vec![1.0]);
        prog
    }

    #[test]
    fn toy_program_shape() {
        let sdp = compile(&toy()).unwrap();
        assert_eq!(sdp.block_dims, vec![2]);
        assert_eq!(sdp.num_free, 1);
        assert_eq!(sdp.num_rows(), 3);
        // constant row: Q00 - c = 0
        assert_eq!(sdp.rows[0].psd, vec![(0, 0, 0, 1.0)]);
        assert_eq!(sdp.rows[0].free, vec![(0, -1.0)]);
        // x row: 2 Q01 = 0, x^2 row: Q11 = 1
        assert_eq!(sdp.rows[1].psd, vec![(0, 0, 1, 1.0)]);
        assert_eq!(sdp.rows[2].rhs, 1.0);
    }

    #[test]
    fn matching_degree_violation() {
        let mut prog = toy();
        prog.identities[0].matching_degree = Some(1);
        assert!(matches!(compile(&prog), Err(SosError::DegreeBookkeeping { term_degree: 2, .. })));
    }

    #[test]
    fn compile_is_deterministic() {
        let a = compile(&toy()).unwrap();
        let b = compile(&toy()).unwrap();
        assert_eq!(a.dump_sparse(), b.dump_sparse());
    }

    #[test]
    fn pruning_drops_unreachable_monomials() {
        // sigma = x^2 y^2 + 1 over a degree-4 Gram basis in (x, y)
        let mut prog = SosProgram::new();
        let s = prog.add_sos("s", 2, 4).unwrap();
        let x = Polynomial::var(2, 0);
        let y = Polynomial::var(2, 1);
        let target = &(&x * &x) * &(&y * &y) + Polynomial::one(2);
        prog.add_identity(
            PolyIdentity::new("t", 2)
                .lhs(prog.sos_term(s, Polynomial::one(2)))
                .rhs(Term::Data(target)),
        );
        prune_gram_bases(&mut prog).unwrap();
        let kept = &prog.multipliers[0].basis;
        assert!(kept.contains(&Monomial::new(vec![1, 1])));
        assert!(kept.contains(&Monomial::one(2)));
        assert!(!kept.contains(&Monomial::new(vec![2, 0])));
        assert!(!kept.contains(&Monomial::new(vec![0, 2])));
    }
}
