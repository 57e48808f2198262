use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Monomial;
use crate::error::PolyError;

/// Coefficients below this magnitude are dropped after every operation.
pub const ZERO_THRESHOLD: f64 = 1e-14;

/// Sparse multivariate polynomial with `f64` coefficients.
///
/// Terms are kept in graded-lex order and canonically pruned, so two polynomials that
/// agree up to [`ZERO_THRESHOLD`] compare equal structurally.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, 1.0)
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        Self::monomial(Monomial::var(nvars, i), 1.0)
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let mut p = Self::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    /// Builds a polynomial from `(monomial, coefficient)` pairs, summing duplicates.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Self::zero(nvars);
        for (m, c) in terms {
            assert_eq!(m.nvars(), nvars, "monomial arity");
            *p.terms.entry(m).or_insert(0.0) += c;
        }
        p.prune();
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Total degree; `-1` for the zero polynomial.
    pub fn degree(&self) -> i32 {
        self.terms.keys().map(|m| m.degree() as i32).max().unwrap_or(-1)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one(self.nvars))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// True when every term has total degree exactly `d`.
    pub fn is_homogeneous(&self, d: u32) -> bool {
        self.terms.keys().all(|m| m.degree() == d)
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        let v = self.coeff(&m) + c;
        if v.abs() < ZERO_THRESHOLD {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, v);
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.abs() >= ZERO_THRESHOLD);
    }

    fn check_dims(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            *out.terms.entry(m.clone()).or_insert(0.0) += c;
        }
        out.prune();
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            *out.terms.entry(m.clone()).or_insert(0.0) -= c;
        }
        out.prune();
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                *acc.entry(a.mul(b)).or_insert(0.0) += ca * cb;
            }
        }
        let mut out = Polynomial {
            nvars: self.nvars,
            terms: acc,
        };
        out.prune();
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        let mut out = Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &v)| (m.clone(), v * c)).collect(),
        };
        out.prune();
        out
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut result = Polynomial::one(self.nvars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = &result * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Evaluates by summing terms directly.
    ///
    /// Panics if `point.len() != nvars`; see [`Polynomial::try_eval`].
    pub fn eval(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars, "evaluation point arity");
        self.terms.iter().map(|(m, &c)| c * m.eval(point)).sum()
    }

    pub fn try_eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: point.len(),
            });
        }
        Ok(self.eval(point))
    }

    /// Substitutes `subs[i]` for variable `i`.
    pub fn compose(&self, subs: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if subs.len() != self.nvars {
            return Err(PolyError::ArityMismatch {
                expected: self.nvars,
                got: subs.len(),
            });
        }
        let mut cache = Substitution::new(subs)?;
        let mut acc: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (m, &c) in &self.terms {
            for (mm, v) in cache.image(m).terms() {
                *acc.entry(mm.clone()).or_insert(0.0) += c * v;
            }
        }
        let mut out = Polynomial {
            nvars: cache.target_nvars(),
            terms: acc,
        };
        out.prune();
        Ok(out)
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let terms = self.terms.iter().filter_map(|(m, &c)| {
            let e = m.exponents()[i];
            (e > 0).then(|| {
                let mut ex = m.exponents().to_vec();
                ex[i] -= 1;
                (Monomial::new(ex), c * e as f64)
            })
        });
        Polynomial::from_terms(self.nvars, terms)
    }

    /// Moves the polynomial into a space of `nvars` variables, variable `i` becoming `map[i]`.
    pub fn embed(&self, nvars: usize, map: &[usize]) -> Polynomial {
        assert_eq!(map.len(), self.nvars);
        Polynomial::from_terms(nvars, self.terms.iter().map(|(m, &c)| (m.embed(nvars, map), c)))
    }

    /// Renders with the given variable names.
    pub fn to_string_with(&self, names: &[String]) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (m, &c) in self.terms.iter().rev() {
            if out.is_empty() {
                if c < 0.0 {
                    out.push('-');
                }
            } else {
                out.push_str(if c < 0.0 { " - " } else { " + " });
            }
            out.push_str(&format!("{:?}", c.abs()));
            for (i, &e) in m.exponents().iter().enumerate() {
                match e {
                    0 => {}
                    1 => out.push_str(&format!("*{}", names[i])),
                    _ => out.push_str(&format!("*{}^{}", names[i], e)),
                }
            }
        }
        out
    }
}

/// Cached images of monomials under a substitution `x_i -> F_i`.
pub struct Substitution<'a> {
    subs: &'a [Polynomial],
    target: usize,
    powers: Vec<Vec<Polynomial>>,
}

impl<'a> Substitution<'a> {
    pub fn new(subs: &'a [Polynomial]) -> Result<Self, PolyError> {
        let target = subs.first().map(|p| p.nvars()).unwrap_or(0);
        for p in subs {
            if p.nvars() != target {
                return Err(PolyError::DimensionMismatch {
                    left: target,
                    right: p.nvars(),
                });
            }
        }
        let powers = subs.iter().map(|p| vec![Polynomial::one(p.nvars())]).collect();
        Ok(Substitution {
            subs,
            target,
            powers,
        })
    }

    pub fn target_nvars(&self) -> usize {
        self.target
    }

    fn power(&mut self, i: usize, e: u32) -> &Polynomial {
        while self.powers[i].len() <= e as usize {
            let next = self.powers[i].last().unwrap() * &self.subs[i];
            self.powers[i].push(next);
        }
        &self.powers[i][e as usize]
    }

    /// `m(F_1, ..., F_n)`.
    pub fn image(&mut self, m: &Monomial) -> Polynomial {
        let mut out = Polynomial::one(self.target);
        for (i, &e) in m.exponents().iter().enumerate() {
            if e > 0 {
                out = &out * self.power(i, e);
            }
        }
        out
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (1..=self.nvars).map(|i| format!("z{i}")).collect();
        write!(f, "Polynomial({})", self.to_string_with(&names))
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl $tr<&Polynomial> for &Polynomial {
            type Output = Polynomial;
            /// Panics on a variable-count mismatch.
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                self.$checked(rhs).expect("polynomial dimension mismatch")
            }
        }
        impl $tr<Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: &Polynomial) -> Polynomial {
                (&self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, checked_add);
binop!(Sub, sub, checked_sub);
binop!(Mul, mul, checked_mul);

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    nvars: usize,
    terms: Vec<(Monomial, f64)>,
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolyRepr {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PolyRepr::deserialize(d)?;
        if let Some((m, _)) = repr.terms.iter().find(|(m, _)| m.nvars() != repr.nvars) {
            return Err(serde::de::Error::custom(format!(
                "monomial {m:?} does not have {} exponents",
                repr.nvars
            )));
        }
        Ok(Polynomial::from_terms(repr.nvars, repr.terms))
    }
}
