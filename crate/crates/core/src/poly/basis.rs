use serde::{Deserialize, Serialize};

use super::Monomial;

/// Every monomial in `nvars` variables of total degree at most `maxdeg`, in graded-lex order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    nvars: usize,
    maxdeg: u32,
    elements: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn new(nvars: usize, maxdeg: u32) -> Self {
        let mut elements = Vec::with_capacity(binomial(nvars as u64 + maxdeg as u64, maxdeg as u64) as usize);
        let mut current = vec![0u32; nvars];
        push_exponents(&mut current, 0, maxdeg, &mut elements);
        elements.sort();
        MonomialBasis {
            nvars,
            maxdeg,
            elements,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn maxdeg(&self) -> u32 {
        self.maxdeg
    }

    pub fn elements(&self) -> &[Monomial] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.elements.binary_search(m).ok()
    }

    pub fn into_elements(self) -> Vec<Monomial> {
        self.elements
    }
}

fn push_exponents(current: &mut Vec<u32>, var: usize, budget: u32, out: &mut Vec<Monomial>) {
    if var == current.len() {
        out.push(Monomial::new(current.clone()));
        return;
    }
    for e in 0..=budget {
        current[var] = e;
        push_exponents(current, var + 1, budget - e, out);
    }
    current[var] = 0;
}

/// `basis(nvars, maxdeg)`.
pub fn basis(nvars: usize, maxdeg: u32) -> MonomialBasis {
    MonomialBasis::new(nvars, maxdeg)
}

pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bases() {
        let b = basis(2, 2);
        let want: Vec<Monomial> = [[0, 0], [0, 1], [1, 0], [0, 2], [1, 1], [2, 0]]
            .iter()
            .map(|e| Monomial::new(e.to_vec()))
            .collect();
        assert_eq!(b.elements(), &want[..]);
        assert_eq!(basis(3, 4).len(), 35);
        assert_eq!(basis(1, 0).elements(), &[Monomial::one(1)]);
    }

    #[test]
    fn cardinality_matches_stars_and_bars() {
        for n in 1..=5usize {
            for d in 0..=10u32 {
                let b = basis(n, d);
                // independent count: number of exponent vectors of each exact degree
                let mut count = 0u64;
                for k in 0..=d as u64 {
                    count += binomial(k + n as u64 - 1, n as u64 - 1);
                }
                assert_eq!(b.len() as u64, count, "n={n} d={d}");
                assert_eq!(b.len() as u64, binomial(n as u64 + d as u64, d as u64));
                assert!(b.elements().windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
