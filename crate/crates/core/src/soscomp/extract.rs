use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::program::{SosProgram, Term};
use super::sdp::SdpSolution;
use crate::error::SosError;
use crate::poly::{Monomial, Polynomial};

/// Numeric values of a solved program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extracted {
    /// One polynomial per decision polynomial, in program order.
    pub decision: Vec<Polynomial>,
    /// Gram matrix of each multiplier, in program order.
    pub grams: Vec<DMatrix<f64>>,
}

impl Extracted {
    /// `m(y)^T Q m(y)` for multiplier `k` of `prog`.
    pub fn multiplier(&self, prog: &SosProgram, k: usize) -> Polynomial {
        gram_polynomial(prog.multipliers[k].nvars, &prog.multipliers[k].basis, &self.grams[k])
    }
}

pub fn gram_polynomial(nvars: usize, basis: &[Monomial], q: &DMatrix<f64>) -> Polynomial {
    let mut terms = Vec::with_capacity(basis.len() * (basis.len() + 1) / 2);
    for p in 0..basis.len() {
        terms.push((basis[p].pow(2), q[(p, p)]));
        for r in p + 1..basis.len() {
            terms.push((basis[p].mul(&basis[r]), q[(p, r)] + q[(r, p)]));
        }
    }
    Polynomial::from_terms(nvars, terms)
}

/// Reassembles decision polynomials and Gram matrices from a solved SDP.
pub fn extract(sol: &SdpSolution, prog: &SosProgram) -> Result<Extracted, SosError> {
    if !sol.status.is_solved() {
        return Err(SosError::NoSolution(sol.status.to_string()));
    }
    let mut offset = 0;
    let mut decision = Vec::with_capacity(prog.decision.len());
    for d in &prog.decision {
        let n = d.basis.len();
        let coeffs = &sol.free[offset..offset + n];
        decision.push(Polynomial::from_terms(
            d.basis.nvars(),
            d.basis.elements().iter().cloned().zip(coeffs.iter().copied()),
        ));
        offset += n;
    }
    let grams = sol.blocks.iter().map(|b| (b + b.transpose()) * 0.5).collect();
    Ok(Extracted { decision, grams })
}

/// `lhs - rhs` of every identity expanded with the extracted values.
pub fn identity_differences(prog: &SosProgram, ext: &Extracted) -> Result<Vec<Polynomial>, SosError> {
    let multipliers: Vec<Polynomial> = (0..prog.multipliers.len()).map(|k| ext.multiplier(prog, k)).collect();
    prog.identities
        .iter()
        .map(|id| {
            let mut acc = Polynomial::zero(id.nvars);
            for (sign, t) in id.signed_terms() {
                let v = match t {
                    Term::Data(p) => p.clone(),
                    Term::Decision { index, factor, subst } => factor.checked_mul(&ext.decision[*index].compose(subst)?)?,
                    Term::Sos { index, factor } => factor.checked_mul(&multipliers[*index])?,
                };
                acc = acc.checked_add(&v.scale(sign))?;
            }
            Ok(acc)
        })
        .collect()
}

/// Largest absolute coefficient of `lhs - rhs` per identity.
pub fn identity_residual(prog: &SosProgram, ext: &Extracted) -> Result<Vec<f64>, SosError> {
    Ok(identity_differences(prog, ext)?.iter().map(Polynomial::max_abs_coeff).collect())
}
