use serde::{Deserialize, Serialize};

use crate::error::SosError;
use crate::poly::{basis, Monomial, MonomialBasis, Polynomial};

/// A polynomial with free coefficients over a full monomial basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionPoly {
    pub name: String,
    pub basis: MonomialBasis,
}

/// An SOS polynomial `m(y)^T Q m(y)` with `Q ⪰ 0` over the listed Gram monomials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SosMultiplier {
    pub name: String,
    pub nvars: usize,
    pub basis: Vec<Monomial>,
}

impl SosMultiplier {
    /// Largest total degree of `m^T Q m`.
    pub fn degree(&self) -> u32 {
        2 * self.basis.iter().map(Monomial::degree).max().unwrap_or(0)
    }
}

/// One summand of an identity side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Term {
    /// Fixed polynomial.
    Data(Polynomial),
    /// `factor * p(subst)` for decision polynomial `p`.
    Decision {
        index: usize,
        factor: Polynomial,
        subst: Vec<Polynomial>,
    },
    /// `factor * s` for SOS multiplier `s`.
    Sos { index: usize, factor: Polynomial },
}

/// `lhs = rhs` as polynomials in `nvars` variables, enforced by coefficient matching.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyIdentity {
    pub name: String,
    pub nvars: usize,
    pub lhs: Vec<Term>,
    pub rhs: Vec<Term>,
    /// Coefficients are matched for every monomial up to this degree. Defaults to the
    /// largest term degree.
    pub matching_degree: Option<u32>,
}

impl PolyIdentity {
    pub fn new(name: impl Into<String>, nvars: usize) -> Self {
        PolyIdentity {
            name: name.into(),
            nvars,
            lhs: Vec::new(),
            rhs: Vec::new(),
            matching_degree: None,
        }
    }

    pub fn lhs(mut self, t: Term) -> Self {
        self.lhs.push(t);
        self
    }

    pub fn rhs(mut self, t: Term) -> Self {
        self.rhs.push(t);
        self
    }

    /// Terms with their sign (`+1` on the left, `-1` on the right).
    pub fn signed_terms(&self) -> impl Iterator<Item = (f64, &Term)> {
        self.lhs
            .iter()
            .map(|t| (1.0, t))
            .chain(self.rhs.iter().map(|t| (-1.0, t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplierId(pub usize);

/// Decision polynomials, SOS multipliers, identities and a linear objective over the
/// decision coefficients (minimized).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SosProgram {
    pub decision: Vec<DecisionPoly>,
    pub multipliers: Vec<SosMultiplier>,
    pub identities: Vec<PolyIdentity>,
    /// One cost vector per decision polynomial, indexed like its basis.
    pub objective: Vec<Vec<f64>>,
}

impl SosProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_decision(&mut self, name: impl Into<String>, nvars: usize, degree: u32) -> DecisionId {
        let b = basis(nvars, degree);
        self.objective.push(vec![0.0; b.len()]);
        self.decision.push(DecisionPoly {
            name: name.into(),
            basis: b,
        });
        DecisionId(self.decision.len() - 1)
    }

    /// Adds an SOS multiplier of degree `degree` (even) in `nvars` variables with the full
    /// Gram basis.
    pub fn add_sos(&mut self, name: impl Into<String>, nvars: usize, degree: u32) -> Result<MultiplierId, SosError> {
        let b = gram_basis(nvars, degree)?;
        Ok(self.add_sos_with_basis(name, nvars, b.into_elements()))
    }

    pub fn add_sos_with_basis(&mut self, name: impl Into<String>, nvars: usize, basis: Vec<Monomial>) -> MultiplierId {
        self.multipliers.push(SosMultiplier {
            name: name.into(),
            nvars,
            basis,
        });
        MultiplierId(self.multipliers.len() - 1)
    }

    pub fn add_identity(&mut self, id: PolyIdentity) {
        self.identities.push(id);
    }

    pub fn set_objective(&mut self, id: DecisionId, cost: Vec<f64>) {
        assert_eq!(cost.len(), self.decision[id.0].basis.len());
        self.objective[id.0] = cost;
    }

    /// `factor * p(x_1..x_k)` where the decision polynomial's variables are the first `k`
    /// of the identity's `nvars` variables.
    pub fn decision_term(&self, id: DecisionId, nvars: usize, factor: Polynomial) -> Term {
        let k = self.decision[id.0].basis.nvars();
        Term::Decision {
            index: id.0,
            factor,
            subst: (0..k).map(|i| Polynomial::var(nvars, i)).collect(),
        }
    }

    pub fn composed_term(&self, id: DecisionId, factor: Polynomial, subst: Vec<Polynomial>) -> Term {
        Term::Decision {
            index: id.0,
            factor,
            subst,
        }
    }

    pub fn sos_term(&self, id: MultiplierId, factor: Polynomial) -> Term {
        Term::Sos { index: id.0, factor }
    }
}

/// Gram basis for an SOS polynomial of degree `target_degree`: every monomial of degree at
/// most `target_degree / 2`.
pub fn gram_basis(nvars: usize, target_degree: u32) -> Result<MonomialBasis, SosError> {
    if target_degree % 2 != 0 {
        return Err(SosError::OddDegree(target_degree));
    }
    Ok(basis(nvars, target_degree / 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_basis_sizes() {
        assert_eq!(gram_basis(2, 4).unwrap().len(), 6);
        assert_eq!(gram_basis(3, 8).unwrap().len(), 35);
        let b = gram_basis(2, 0).unwrap();
        assert_eq!(b.elements(), &[Monomial::one(2)]);
        assert_eq!(gram_basis(2, 3), Err(SosError::OddDegree(3)));
    }
}
