//! Shared helpers: model paths, an independent quadrature oracle, and the property suites
//! run both by `properties` and by the acceptance harness.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use roa_core::model::{load_model_file, SystemModel};
use roa_core::oracle::{bellman_residual, value_iteration, ViSettings};
use roa_core::poly::{ball_moment, basis, binomial, ellipsoid_moment};
use roa_core::roa::{build_program, RoaConfig};
use roa_core::soscomp;
use roa_core::{Monomial, Polynomial};

pub fn example_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/examples").join(name)
}

pub fn predator_prey() -> SystemModel {
    load_model_file(example_path("predator_prey.toy")).expect("shipped model loads")
}

pub fn lotka_volterra() -> SystemModel {
    load_model_file(example_path("lotka_volterra3.toy")).expect("shipped model loads")
}

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Polynomials in `n` variables of degree at most `maxdeg` with up to `max_terms` terms.
pub fn poly_strategy(
    n: usize,
    maxdeg: u32,
    max_terms: usize,
    coeff: impl Strategy<Value = f64> + 'static,
) -> impl Strategy<Value = Polynomial> {
    let monos = basis(n, maxdeg).into_elements();
    let len = monos.len();
    proptest::collection::vec((0..len, coeff), 0..=max_terms)
        .prop_map(move |ts| Polynomial::from_terms(n, ts.into_iter().map(|(i, c)| (monos[i].clone(), c))))
}

/// Small integer coefficients keep every sum and product exact in `f64`.
pub fn int_coeff() -> impl Strategy<Value = f64> {
    (-5i32..=5).prop_map(f64::from)
}

/// Rank-1 lattice with generalized golden-ratio generators, an independent alternative
/// to the crate's Halton sampler.
pub struct Kronecker {
    alpha: Vec<f64>,
    k: u64,
}

impl Kronecker {
    pub fn new(dim: usize) -> Self {
        // phi_d solves x^(d+1) = x + 1
        let mut phi = 2.0f64;
        for _ in 0..64 {
            phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
        }
        let alpha = (1..=dim).map(|i| (1.0 / phi.powi(i as i32)).fract()).collect();
        Kronecker { alpha, k: 0 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.k += 1;
        self.alpha.iter().map(|a| (0.5 + self.k as f64 * a).fract()).collect()
    }
}

/// `∫ x^alpha` over `{x : x^T Q x < c}` by lattice quadrature on its bounding box.
pub fn lattice_ellipsoid_moments(q: &DMatrix<f64>, c: f64, monomials: &[Monomial], points: usize) -> Vec<f64> {
    let n = q.nrows();
    let qinv = q.clone().try_inverse().expect("invertible");
    let half: Vec<f64> = (0..n).map(|i| (c * qinv[(i, i)]).sqrt()).collect();
    let mut seq = Kronecker::new(n);
    let mut sums = vec![0.0; monomials.len()];
    let mut x = vec![0.0; n];
    for _ in 0..points {
        let u = seq.next_point();
        for i in 0..n {
            x[i] = (2.0 * u[i] - 1.0) * half[i];
        }
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += x[i] * q[(i, j)] * x[j];
            }
        }
        if quad >= c {
            continue;
        }
        for (s, m) in sums.iter_mut().zip(monomials) {
            *s += m.eval(&x);
        }
    }
    let vol: f64 = half.iter().map(|h| 2.0 * h).product::<f64>() / points as f64;
    sums.into_iter().map(|s| s * vol).collect()
}

/// Monomials with every exponent even and total degree at most `maxdeg`.
pub fn even_monomials(n: usize, maxdeg: u32) -> Vec<Monomial> {
    basis(n, maxdeg).into_elements().into_iter().filter(|m| m.is_even()).collect()
}

fn fail<E: std::fmt::Debug>(suite: &str, e: E) -> String {
    format!("{suite}: {e:?}")
}

/// Associativity, commutativity and distributivity, compared structurally.
pub fn ring_axioms(cases: u32) -> Result<String, String> {
    let strat = (1usize..=3).prop_flat_map(|n| {
        let p = || poly_strategy(n, 3, 6, int_coeff());
        (p(), p(), p())
    });
    runner(cases)
        .run(&strat, |(a, b, c)| {
            prop_assert_eq!(&(&a + &b) + &c, &a + &(&b + &c));
            prop_assert_eq!(&a + &b, &b + &a);
            prop_assert_eq!(&(&a * &b) * &c, &a * &(&b * &c));
            prop_assert_eq!(&a * &b, &b * &a);
            prop_assert_eq!(&a * &(&b + &c), &(&a * &b) + &(&a * &c));
            prop_assert_eq!(&a - &a, Polynomial::zero(a.nvars()));
            prop_assert_eq!(&a * &Polynomial::one(a.nvars()), a.clone());
            Ok(())
        })
        .map_err(|e| fail("ring axioms", e))?;
    Ok(format!("{cases} cases"))
}

/// `compose(u, F)(p) = u(F(p))` within 1e-10 relative for degrees up to 4.
pub fn compose_commutes_with_eval(cases: u32) -> Result<String, String> {
    let coeff = || -1.0f64..=1.0;
    let strat = (1usize..=3, 1usize..=3).prop_flat_map(move |(n, m)| {
        (
            poly_strategy(n, 4, 8, coeff()),
            proptest::collection::vec(poly_strategy(m, 4, 6, coeff()), n),
            proptest::collection::vec(-1.0f64..=1.0, m),
        )
    });
    let worst = std::cell::Cell::new(0.0f64);
    runner(cases)
        .run(&strat, |(u, f, p)| {
            let composed = u.compose(&f).expect("arity matches");
            let direct = u.eval(&f.iter().map(|fi| fi.eval(&p)).collect::<Vec<_>>());
            let err = (composed.eval(&p) - direct).abs() / direct.abs().max(1.0);
            prop_assert!(err <= 1e-10, "relative error {err:e}");
            worst.set(worst.get().max(err));
            Ok(())
        })
        .map_err(|e| fail("compose/eval", e))?;
    Ok(format!("{cases} cases, worst relative error {:.1e}", worst.get()))
}

/// Homogeneity of ball moments and the basis cardinality count.
pub fn ball_moment_scaling_and_basis_counts() -> Result<String, String> {
    for n in 1..=3 {
        for m in basis(n, 8).elements() {
            for r2 in [0.25, 1.6, 9.0] {
                let lhs = ball_moment(m, r2);
                let rhs = r2.powf((m.degree() as f64 + n as f64) / 2.0) * ball_moment(m, 1.0);
                if (lhs - rhs).abs() > 1e-12 * rhs.abs().max(1e-300) {
                    return Err(format!("ball moment scaling fails for {m:?}, R2 = {r2}: {lhs} vs {rhs}"));
                }
            }
        }
    }
    for n in 1..=5 {
        for d in 0..=10u32 {
            let got = basis(n, d).len() as u64;
            if got != binomial((n as u64) + d as u64, d as u64) {
                return Err(format!("basis({n}, {d}) has {got} elements"));
            }
        }
    }
    Ok("degrees <= 8, n <= 3; bases n <= 5, d <= 10".into())
}

/// Closed-form ball and ellipsoid moments against lattice quadrature: every even moment of
/// degree at most 8 in one to three variables, within 1e-2 relative.
pub fn moments_match_quadrature(points: usize) -> Result<String, String> {
    let mut worst = 0.0f64;
    let cases: Vec<(DMatrix<f64>, f64)> = vec![
        (DMatrix::identity(1, 1), 1.0),
        (DMatrix::from_row_slice(1, 1, &[4.0]), 1.0),
        (DMatrix::identity(2, 2), 1.6),
        (DMatrix::identity(2, 2) * 100.0, 1.0),
        (DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), 1.0),
        (DMatrix::identity(3, 3), 1.6),
        (DMatrix::from_row_slice(3, 3, &[3.0, 0.2, 0.0, 0.2, 1.0, -0.3, 0.0, -0.3, 2.0]), 2.0),
    ];
    for (q, c) in &cases {
        let n = q.nrows();
        let monos = even_monomials(n, 8);
        let oracle = lattice_ellipsoid_moments(q, *c, &monos, points);
        let is_ball = (q - DMatrix::<f64>::identity(n, n)).amax() == 0.0;
        for (m, want) in monos.iter().zip(&oracle) {
            let got = if is_ball {
                ball_moment(m, *c)
            } else {
                ellipsoid_moment(m, q, *c).map_err(|e| e.to_string())?
            };
            let rel = (got - want).abs() / want.abs();
            worst = worst.max(rel);
            if rel > 1e-2 {
                return Err(format!("moment {m:?} over x'Qx < {c} (Q = {q}): closed form {got}, quadrature {want}"));
            }
        }
    }
    Ok(format!("{} sets, worst relative error {worst:.1e}", cases.len()))
}

/// Value iteration on the predator-prey model: no node decreases in any sweep, and the
/// converged field satisfies the discrete Bellman equation up to `(1 + max g)` times the
/// last sweep's change.
pub fn value_iteration_properties(points: usize) -> Result<String, String> {
    let model = predator_prey();
    let settings = ViSettings {
        points: Some(points),
        ..ViSettings::default()
    };
    let vi = value_iteration(&model, &settings);
    if !vi.converged {
        return Err(format!("value iteration did not converge: delta {}", vi.delta));
    }
    if vi.max_decrease > 0.0 {
        return Err(format!("a sweep decreased some node by {}", vi.max_decrease));
    }
    let g_max = vi.field.values.iter().enumerate().map(|(i, _)| model.cost.eval(&vi.field.coords(i))).fold(0.0, f64::max);
    let res = bellman_residual(&model, &vi.field, settings.d_points);
    let bound = (1.0 + g_max) * vi.delta;
    if res.max_abs > bound {
        return Err(format!("Bellman residual {} exceeds {bound}", res.max_abs));
    }
    Ok(format!(
        "{points}x{points} grid, {} monotone sweeps, residual {:.1e} (2 x threshold = {:.0e}, bound {bound:.1e})",
        vi.iterations,
        res.max_abs,
        2.0 * settings.threshold
    ))
}

/// Two independent builds of the same program compile to byte-identical SDP dumps.
pub fn compile_is_byte_identical() -> Result<String, String> {
    let mut sizes = Vec::new();
    for (model, k) in [(predator_prey(), 6), (lotka_volterra(), 4)] {
        let dumps: Vec<String> = (0..2)
            .map(|_| {
                let cfg = RoaConfig::for_model(&model, k);
                let mut prog = build_program(&model, &cfg).expect("builds");
                soscomp::prune_gram_bases(&mut prog).expect("prunes");
                soscomp::compile(&prog).expect("compiles").dump_sparse()
            })
            .collect();
        if dumps[0] != dumps[1] {
            return Err(format!("{} k = {k}: compiled dumps differ", model.name));
        }
        sizes.push(dumps[0].len());
    }
    Ok(format!("dump sizes {sizes:?} bytes"))
}
