//! Sparse multivariate polynomials over `f64`, monomial bases and Lebesgue moments.

mod basis;
mod moments;
mod monomial;
mod parse;
mod polynomial;

pub use basis::{basis, binomial, MonomialBasis};
pub use moments::{
    ball_moment, ellipsoid_moment, qmc_sublevel_moments, quadratic_form_matrix, sublevel_moments,
    Halton,
};
pub use monomial::Monomial;
pub use parse::parse_polynomial;
pub use polynomial::{Polynomial, Substitution, ZERO_THRESHOLD};
