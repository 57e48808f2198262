//! Lebesgue moments of monomials over balls, ellipsoids and general sub-level sets.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{Monomial, Polynomial};
use crate::error::PolyError;

/// `Gamma(k / 2)` for a positive integer `k`.
fn gamma_half(k: u32) -> f64 {
    assert!(k > 0);
    let mut g = if k % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut j = 2 - (k % 2);
    while j < k {
        g *= j as f64 / 2.0;
        j += 2;
    }
    g
}

/// `∫_{|x|² ≤ r2} x^alpha dx` over the Euclidean ball of radius `sqrt(r2)`.
pub fn ball_moment(alpha: &Monomial, r2: f64) -> f64 {
    assert!(r2 > 0.0, "ball radius must be positive");
    if !alpha.is_even() {
        return 0.0;
    }
    let n = alpha.nvars() as u32;
    let deg = alpha.degree();
    // surface integral of theta^alpha over the unit sphere
    let sphere: f64 = 2.0 * alpha.exponents().iter().map(|&a| gamma_half(a + 1)).product::<f64>()
        / gamma_half(deg + n);
    let radial = r2.powf((deg + n) as f64 / 2.0) / (deg + n) as f64;
    sphere * radial
}

/// `∫_{x^T Q x < c} x^alpha dx` for symmetric positive definite `q` and `c > 0`.
pub fn ellipsoid_moment(alpha: &Monomial, q: &DMatrix<f64>, c: f64) -> Result<f64, PolyError> {
    let n = alpha.nvars();
    if q.nrows() != n || q.ncols() != n {
        return Err(PolyError::DimensionMismatch {
            left: n,
            right: q.nrows(),
        });
    }
    if c <= 0.0 || (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
        return Err(PolyError::NotPositiveDefinite);
    }
    let chol = q.clone().cholesky().ok_or(PolyError::NotPositiveDefinite)?;
    let l = chol.l();
    // x = sqrt(c) L^{-T} y maps the unit ball onto the ellipsoid
    let lt_inv = l
        .transpose()
        .try_inverse()
        .ok_or(PolyError::NotPositiveDefinite)?;
    let det_l: f64 = l.diagonal().iter().product();
    let jac = c.powf(n as f64 / 2.0) / det_l;
    let subs: Vec<Polynomial> = (0..n)
        .map(|i| {
            Polynomial::from_terms(
                n,
                (0..n).map(|j| (Monomial::var(n, j), c.sqrt() * lt_inv[(i, j)])),
            )
        })
        .collect();
    let image = Polynomial::monomial(alpha.clone(), 1.0).compose(&subs)?;
    let integral: f64 = image.terms().map(|(m, v)| v * ball_moment(m, 1.0)).sum();
    Ok(jac * integral)
}

/// If `h` is a homogeneous quadratic form `x^T Q x` with `Q` positive definite, returns `Q`.
pub fn quadratic_form_matrix(h: &Polynomial) -> Option<DMatrix<f64>> {
    if h.is_zero() || !h.is_homogeneous(2) {
        return None;
    }
    let n = h.nvars();
    let mut q = DMatrix::zeros(n, n);
    for (m, c) in h.terms() {
        let idx: Vec<usize> = m
            .exponents()
            .iter()
            .enumerate()
            .flat_map(|(i, &e)| std::iter::repeat_n(i, e as usize))
            .collect();
        let (i, j) = (idx[0], idx[1]);
        if i == j {
            q[(i, i)] = c;
        } else {
            q[(i, j)] = c / 2.0;
            q[(j, i)] = c / 2.0;
        }
    }
    q.clone().cholesky().map(|_| q)
}

/// Moments `∫_{h < 1} x^alpha dx` for each monomial in `monomials`.
///
/// Uses the closed form when `h` is a positive definite quadratic form; otherwise
/// integrates by quasi-Monte Carlo rejection over the ball `|x|² ≤ r2`, which must contain
/// the sub-level set.
pub fn sublevel_moments(h: &Polynomial, r2: f64, monomials: &[Monomial], qmc_points: usize) -> Vec<f64> {
    if let Some(q) = quadratic_form_matrix(h) {
        return monomials
            .iter()
            .map(|m| ellipsoid_moment(m, &q, 1.0).expect("checked positive definite"))
            .collect();
    }
    qmc_sublevel_moments(h, r2, monomials, qmc_points)
}

/// Quasi-Monte Carlo moments over `{h < 1} ∩ {|x|² ≤ r2}` using a Halton sequence on the
/// bounding cube of the ball. Deterministic.
pub fn qmc_sublevel_moments(h: &Polynomial, r2: f64, monomials: &[Monomial], points: usize) -> Vec<f64> {
    let n = h.nvars();
    let r = r2.sqrt();
    let mut sums = vec![0.0; monomials.len()];
    let mut x = vec![0.0; n];
    let mut halton = Halton::new(n);
    for _ in 0..points {
        let u = halton.next_point();
        for i in 0..n {
            x[i] = (2.0 * u[i] - 1.0) * r;
        }
        if x.iter().map(|v| v * v).sum::<f64>() > r2 || h.eval(&x) >= 1.0 {
            continue;
        }
        for (s, m) in sums.iter_mut().zip(monomials) {
            *s += m.eval(&x);
        }
    }
    let vol = (2.0 * r).powi(n as i32) / points as f64;
    sums.into_iter().map(|s| s * vol).collect()
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Radical-inverse Halton sequence, skipping the origin.
pub struct Halton {
    index: u64,
    dim: usize,
}

impl Halton {
    pub fn new(dim: usize) -> Self {
        assert!(dim <= PRIMES.len());
        Halton { index: 1, dim }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        PRIMES[..self.dim]
            .iter()
            .map(|&b| {
                let (mut f, mut r, mut k) = (1.0, 0.0, i);
                while k > 0 {
                    f /= b as f64;
                    r += f * (k % b) as f64;
                    k /= b;
                }
                r
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert!((gamma_half(3) - PI.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(gamma_half(8), 6.0);
    }

    #[test]
    fn disk_moments() {
        assert!((ball_moment(&mono(&[0, 0]), 1.0) - PI).abs() < 1e-14);
        assert!((ball_moment(&mono(&[2, 0]), 1.0) - PI / 4.0).abs() < 1e-14);
        assert_eq!(ball_moment(&mono(&[1, 0]), 3.0), 0.0);
        assert_eq!(ball_moment(&mono(&[2, 1, 0]), 1.6), 0.0);
        // volume of the unit 3-ball
        assert!((ball_moment(&mono(&[0, 0, 0]), 1.0) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn ellipsoid_reductions() {
        let q = DMatrix::identity(2, 2) * 100.0;
        let m0 = ellipsoid_moment(&mono(&[0, 0]), &q, 1.0).unwrap();
        assert!((m0 - PI / 100.0).abs() < 1e-15);
        let m2 = ellipsoid_moment(&mono(&[2, 0]), &q, 1.0).unwrap();
        assert!((m2 - PI / 4.0 * 1e-4).abs() < 1e-17);
        let id = DMatrix::identity(3, 3);
        for a in [[2u32, 2, 0], [4, 0, 2], [0, 0, 0]] {
            let e = ellipsoid_moment(&mono(&a), &id, 1.6).unwrap();
            let b = ball_moment(&mono(&a), 1.6);
            assert!((e - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn non_pd_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(
            ellipsoid_moment(&mono(&[0, 0]), &q, 1.0),
            Err(PolyError::NotPositiveDefinite)
        );
    }

    #[test]
    fn quadratic_form_detection() {
        let x = Polynomial::var(2, 0);
        let y = Polynomial::var(2, 1);
        let h = (&x * &x).scale(100.0) + (&y * &y).scale(100.0);
        let q = quadratic_form_matrix(&h).unwrap();
        assert_eq!(q, DMatrix::identity(2, 2) * 100.0);
        assert!(quadratic_form_matrix(&(&h + &x)).is_none());
        assert!(quadratic_form_matrix(&(&x * &y)).is_none());
    }
}
