//! Frozen values from independent computations: hand evaluation of the shipped maps,
//! closed-form moments, degree accounting of the program, and direct sampling of the
//! certificate conditions.
mod support;

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use roa_core::model::{check_exponential_stability, check_reach_bound, load_model, Policy};
use roa_core::oracle::{compare_upper, grid_max_roa, hitting_time, value_iteration, Axis, SimSettings, ViSettings};
use roa_core::poly::{ball_moment, binomial, ellipsoid_moment, parse_polynomial};
use roa_core::roa::{build_program, certify, compute_roa, RoaConfig};
use roa_core::soscomp::{self, SolveStatus};
use roa_core::{GridField, Monomial, Polynomial, RoaCertificate, SystemModel};
use support::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn predator_prey_map_by_hand() {
    let model = predator_prey();
    // 0.5*0.2 - 0.2*0.1 = 0.08, -0.05 + 0.02 = -0.03
    let y = model.step(&[0.2, 0.1], &[0.0]).unwrap();
    assert!(close(y[0], 0.08, 1e-15) && close(y[1], -0.03, 1e-15), "{y:?}");
    // the predation term grows by the factor 1.1
    let y = model.step(&[0.2, 0.1], &[0.1]).unwrap();
    assert!(close(y[0], 0.08, 1e-15) && close(y[1], -0.028, 1e-15), "{y:?}");

    // u = |x|² composed with f, evaluated at (x, d) = (0.2, 0.1, 0.1)
    let names: Vec<String> = ["x1", "x2"].map(String::from).to_vec();
    let u = parse_polynomial("x1^2 + x2^2", &names).unwrap();
    let uf = u.compose(&model.f).unwrap();
    assert!(close(uf.eval(&[0.2, 0.1, 0.1]), 0.08 * 0.08 + 0.028 * 0.028, 1e-15));
}

#[test]
fn linearizations_have_spectral_radius_one_half() {
    // ∂f/∂x(0, d) = diag(0.5, -0.5) and 0.5·I for every d
    for model in [predator_prey(), lotka_volterra()] {
        let report = check_exponential_stability(&model, 11);
        assert!(report.pass, "{}", model.name);
        assert!(close(report.max_radius, 0.5, 1e-12), "{}: {}", model.name, report.max_radius);
    }
}

#[test]
fn closed_form_moments() {
    let x2 = Monomial::new(vec![2, 0]);
    assert!(close(ball_moment(&x2, 1.0), PI / 4.0, 1e-14));
    let seed = DMatrix::<f64>::identity(2, 2) * 100.0;
    assert!(close(ellipsoid_moment(&x2, &seed, 1.0).unwrap(), PI / 4.0 * 1e-4, 1e-18));
    // volume of B(0, sqrt 1.6) in R^3
    let one = Monomial::one(3);
    assert!(close(ball_moment(&one, 1.6), 4.0 / 3.0 * PI * 1.6f64.powf(1.5), 1e-12));
    // odd moments vanish
    assert_eq!(ball_moment(&Monomial::new(vec![1, 2]), 1.6), 0.0);
}

#[test]
fn hitting_time_from_a_hand_traced_state() {
    // 100·|(0.2, 0.1)|² = 5, 100·|(0.08, -0.03)|² = 0.73 < 1
    let model = predator_prey();
    assert_eq!(hitting_time(&model, &[0.2, 0.1], &Policy::Constant(vec![0.0]), 200), Some(1));
    assert_eq!(hitting_time(&model, &[0.05, 0.05], &Policy::Constant(vec![0.0]), 200), Some(0));
    assert_eq!(hitting_time(&model, &[0.2, 0.1], &Policy::Constant(vec![0.0]), 0), None);
}

#[test]
fn shipped_models_load() {
    let pp = predator_prey();
    assert_eq!((pp.n, pp.m, pp.r2), (2, 1, 1.6));
    assert_eq!(pp.state_names, ["x1", "x2"]);
    let names: Vec<String> = ["x1", "x2", "d1"].map(String::from).to_vec();
    assert_eq!(pp.f[1], parse_polynomial("-0.5*x2 + x1*x2 + d1*x1*x2", &names).unwrap());
    assert_eq!(pp.settings.mult_degree.get(&6), Some(&8));
    assert_eq!(pp.settings.mult_degree.get(&10), Some(&12));

    let lv = lotka_volterra();
    assert_eq!((lv.n, lv.m, lv.r2), (3, 1, 1.6));
    assert_eq!(lv.constraint.polys().count(), 1);
    assert_eq!(lv.disturbance_box, vec![(-0.1, 0.1)]);
}

/// Largest `|f(x, d)|²` over the closed unit ball and `|d| <= 0.1`, by a coarse grid
/// followed by pattern search from the best nodes.
fn max_reach(model: &SystemModel) -> f64 {
    let reach = |x: &[f64], d: f64| -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x: Vec<f64> = if r > 1.0 { x.iter().map(|v| v / r).collect() } else { x.to_vec() };
        model.step(&x, &[d]).unwrap().iter().map(|v| v * v).sum()
    };
    let axis: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
    let mut starts = Vec::new();
    for &a in &axis {
        for &b in &axis {
            for &c in &axis {
                for d in [-0.1, 0.1] {
                    starts.push((reach(&[a, b, c], d), vec![a, b, c], d));
                }
            }
        }
    }
    starts.sort_by(|p, q| q.0.total_cmp(&p.0));
    let mut best = 0.0f64;
    for (mut val, mut x, d) in starts.into_iter().take(20) {
        let mut step = 0.05;
        while step > 1e-9 {
            let mut moved = false;
            for i in 0..3 {
                for s in [-step, step] {
                    let mut y = x.clone();
                    y[i] += s;
                    let v = reach(&y, d);
                    if v > val {
                        (val, x, moved) = (v, y, true);
                    }
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        best = best.max(val);
    }
    best
}

#[test]
fn lotka_volterra_reach_margin_matches_direct_maximization() {
    let model = lotka_volterra();
    let direct = max_reach(&model);
    assert!(close(direct, 1.62154, 1e-5), "max |f|² = {direct}");
    let report = check_reach_bound(&model, &model.solver_settings());
    let margin = report.parts.iter().find(|p| p.name == "reach").unwrap().margin;
    assert!(close(margin, model.r2 - direct, 1e-5), "SOS margin {margin}, direct {}", model.r2 - direct);
}

fn multiplier_names(model: &SystemModel, k: u32) -> Vec<String> {
    let prog = build_program(model, &RoaConfig::for_model(model, k)).unwrap();
    prog.multipliers.iter().map(|m| m.name.clone()).collect()
}

#[test]
fn program_shape() {
    let expected = ["s0", "s1", "s2", "s3_1", "s4_1", "s5_1", "s6_1", "s7_1", "s8_1", "s9_1_1"];
    assert_eq!(multiplier_names(&predator_prey(), 6), expected);
    assert_eq!(multiplier_names(&lotka_volterra(), 4), expected);

    let pp = predator_prey();
    let prog = build_program(&pp, &RoaConfig::for_model(&pp, 6)).unwrap();
    let ids: Vec<&str> = prog.identities.iter().map(|i| i.name.as_str()).collect();
    assert_eq!(ids, ["decrease", "outside-1", "above-constraint-1"]);
    assert_eq!(prog.decision[0].basis.len(), binomial(8, 6) as usize);

    // two state constraints: families B and C twice, C with the double sum over l
    let text = std::fs::read_to_string(example_path("predator_prey.toy")).unwrap();
    let boxed = load_model(&text.replace("h = [\"x1^2 + x2^2\"]", "h = [\"x1^2\", \"x2^2\"]")).unwrap();
    let prog = build_program(&boxed, &RoaConfig::for_model(&boxed, 6)).unwrap();
    let ids: Vec<&str> = prog.identities.iter().map(|i| i.name.as_str()).collect();
    assert_eq!(ids, ["decrease", "outside-1", "outside-2", "above-constraint-1", "above-constraint-2"]);
    let s9: Vec<&str> = prog.multipliers.iter().map(|m| m.name.as_str()).filter(|n| n.starts_with("s9")).collect();
    assert_eq!(s9, ["s9_1_1", "s9_2_1", "s9_1_2", "s9_2_2"]);
}

#[test]
fn gram_block_sizes_for_predator_prey_degree_six() {
    let model = predator_prey();
    let mut prog = build_program(&model, &RoaConfig::for_model(&model, 6)).unwrap();
    let sizes = |p: &roa_core::SosProgram| p.multipliers.iter().map(|m| m.basis.len()).collect::<Vec<_>>();
    // f has degree 3 (the d1*x1*x2 term), so u∘f has degree 18 over (x, d) and s0 spans
    // monomials of degree <= 9 in three variables; the degree-8 multipliers span degree <= 4. The x-identities match at
    // degree 10: degree <= 5 and <= 4 in two variables.
    let full = |n: u64, d: u64| binomial(n + d, d) as usize;
    let (a, b, c, e) = (full(3, 9), full(3, 4), full(2, 5), full(2, 4));
    assert_eq!(sizes(&prog), [a, b, b, b, c, e, e, c, e, e]);
    soscomp::prune_gram_bases(&mut prog).unwrap();
    let sdp = soscomp::compile(&prog).unwrap();
    assert_eq!(sdp.block_dims, [73, 35, 35, 35, 21, 15, 15, 21, 15, 15]);
    assert_eq!(sdp.num_free, full(2, 6));
}

fn certificate_k4() -> &'static (SystemModel, RoaCertificate) {
    static CERT: OnceLock<(SystemModel, RoaCertificate)> = OnceLock::new();
    CERT.get_or_init(|| {
        let model = predator_prey();
        let cert = compute_roa(&model, &RoaConfig::for_model(&model, 4)).unwrap();
        (model, cert)
    })
}

/// Points of `[-√R, √R]^n` on a Kronecker lattice.
fn box_points(n: usize, r2: f64, count: usize) -> Vec<Vec<f64>> {
    let r = r2.sqrt();
    let mut seq = Kronecker::new(n);
    (0..count).map(|_| seq.next_point().iter().map(|u| (2.0 * u - 1.0) * r).collect()).collect()
}

#[test]
fn certificate_conditions_hold_at_sampled_points() {
    let (model, cert) = certificate_k4();
    assert_eq!(cert.status, SolveStatus::Optimal);
    assert!(cert.max_residual() <= 1e-5);
    assert!(cert.u.eval(&[0.0, 0.0]) <= 1.0 - 1e-6);
    assert!(cert.membership(&[0.0, 0.0]));
    assert!(!cert.membership(&[1.3, 0.0]));

    let (mut outside, mut inside) = (0, 0);
    for x in box_points(2, model.r2, 40_000) {
        if x.iter().map(|v| v * v).sum::<f64>() > model.r2 {
            assert!(!cert.membership(&x));
            continue;
        }
        let h = model.constraint_level(&x);
        let u = cert.u.eval(&x);
        if h >= 1.0 + 1e-9 {
            outside += 1;
            assert!(u >= 1.0 - 1e-6, "u({x:?}) = {u} outside X");
        } else if h <= 1.0 {
            inside += 1;
            assert!(u >= h - 1e-6, "u({x:?}) = {u} below h = {h}");
        }
    }
    assert!(outside >= 10_000 / 4 && inside >= 10_000, "{outside} outside, {inside} inside");

    // ∂X: u ≥ 1 on the unit circle
    for i in 0..720 {
        let t = i as f64 * PI / 360.0;
        let u = cert.u.eval(&[t.cos(), t.sin()]);
        assert!(u >= 1.0 - 1e-6, "u = {u} at angle {t}");
    }

    // one-step decrease on (B(0,R) ∖ X∞) × D where u < 1
    let mut tested = 0;
    for x in box_points(2, 1.0, 20_000) {
        let u = cert.u.eval(&x);
        if model.in_seed(&x) || !model.in_ball(&x) || u >= 1.0 {
            continue;
        }
        let g = model.cost.eval(&x);
        for d in model.disturbance_grid(11) {
            let y = model.step(&x, &d).unwrap();
            assert!(cert.u.eval(&y) <= u - g * (1.0 - u) + 1e-6, "decrease fails at {x:?}, {d:?}");
        }
        tested += 1;
    }
    assert!(tested > 1000, "{tested}");
}

#[test]
fn tampered_certificate_fails_sampling() {
    let (model, cert) = certificate_k4();
    let cfg = RoaConfig {
        samples: 20,
        policies: 2,
        horizon: 50,
        ..cert.config.clone()
    };
    let honest = certify(cert, model, &cfg);
    assert!(honest.pass, "{:?}", honest.families);
    assert_eq!(honest.constraint_violations(), 0);

    let mut bad = cert.clone();
    bad.u = &cert.u - &Polynomial::constant(2, 0.5);
    let report = certify(&bad, model, &cfg);
    assert!(!report.pass);
    assert!(report.constraint_violations() > 0);
    assert!(!report.violations.is_empty());
}

#[test]
fn failed_certificate_has_an_empty_mask() {
    let (_, cert) = certificate_k4();
    assert!(cert.sign_grid(41, &[]).count() > 0);
    let mut failed = cert.clone();
    failed.status = SolveStatus::Infeasible;
    failed.u = Polynomial::one(2);
    assert_eq!(failed.sign_grid(41, &[]).count(), 0);
}

#[test]
fn compare_upper_trivial_cases() {
    let axes = vec![Axis::new("x1", -1.0, 1.0, 5), Axis::new("x2", -1.0, 1.0, 5)];
    let v = GridField::from_fn(axes, |x| (x[0] * x[0] + x[1] * x[1]).min(1.0));
    let above = compare_upper(&Polynomial::one(2), &v, 1.6);
    assert_eq!(above.max_excess, 0.0);
    // the interior 3x3 nodes all lie in the ball
    assert_eq!(above.nodes, 9);
    let zero = compare_upper(&Polynomial::zero(2), &v, 1.6);
    assert!(close(zero.max_excess, 0.5, 1e-15), "{}", zero.max_excess);
}

#[test]
fn value_function_boundary_values() {
    let model = predator_prey();
    let vi = value_iteration(&model, &ViSettings { points: Some(41), ..ViSettings::default() });
    assert!(vi.converged);
    for i in 0..vi.field.len() {
        let x = vi.field.coords(i);
        let v = vi.field.values[i];
        assert!((0.0..=1.0).contains(&v));
        if x.iter().all(|&c| c == 0.0) {
            assert_eq!(v, 0.0);
        }
        if !model.in_constraint(&x) {
            assert_eq!(v, 1.0, "v({x:?})");
        }
    }
}

#[test]
fn simulated_region_structure() {
    let model = predator_prey();
    let settings = SimSettings {
        points: Some(41),
        random_policies: 10,
        ..SimSettings::default()
    };
    let vi = value_iteration(&model, &ViSettings { points: Some(41), ..ViSettings::default() });
    let mask = grid_max_roa(&model, Some(&vi.field), &settings);
    let finer_d = grid_max_roa(&model, Some(&vi.field), &SimSettings { d_points: 21, ..settings.clone() });
    for i in 0..mask.len() {
        let x = mask.coords(i);
        if model.in_seed(&x) {
            assert!(mask.values[i], "seed node {x:?}");
        }
        if !model.in_constraint(&x) {
            assert!(!mask.values[i], "node {x:?} outside X");
        }
        if vi.field.values[i] < 1.0 - 0.05 {
            assert!(mask.values[i], "v = {} at {x:?}", vi.field.values[i]);
        }
    }
    // a richer adversary can only shrink the estimate
    assert!(finer_d.excess(&mask).is_empty());

    // from a state in X but outside the estimate, some adversary leaves X
    let grid: Arc<[Vec<f64>]> = model.disturbance_grid(11).into();
    let outside: Vec<usize> = (0..mask.len()).filter(|&i| !mask.values[i] && model.in_constraint(&mask.coords(i))).collect();
    assert!(!outside.is_empty());
    let escapes = outside.iter().any(|&i| {
        let x0 = mask.coords(i);
        let mut policies: Vec<Policy> = model.disturbance_extremes(11).into_iter().map(Policy::Constant).collect();
        policies.extend((0..10).map(|s| Policy::random(s, grid.clone())));
        policies.iter().any(|p| roa_core::model::simulate(&model, &x0, p, 200).states.iter().any(|x| !model.in_constraint(x)))
    });
    assert!(escapes);
}
