//! Problem-definition files (TOML).
//!
//! ```toml
//! name = "predator-prey"
//!
//! [system]
//! n = 2
//! m = 1
//! f = ["0.5*x1 - x1*x2", "-0.5*x2 + (d1 + 1)*x1*x2"]
//!
//! [disturbance]
//! h = ["d1^2 - 0.01"]     # h_i(d) <= 0
//!
//! [constraint]
//! h = ["x1^2 + x2^2"]     # h_j(x) < 1
//!
//! [seed]
//! h = "100*x1^2 + 100*x2^2"
//!
//! [bound]
//! R2 = 1.6
//!
//! [cost]
//! g = "x1^2 + x2^2"
//!
//! [solver]
//! degree = 6
//! mult_degree = { "6" = 8, "10" = 12 }
//! ```
//!
//! Variables default to `x1..xn` and `d1..dm`; `[system] states` and `disturbances`
//! rename them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use toml::Spanned;

use super::{Constraint, ModelSettings, SemiAlgebraicSet, Sense, SystemModel, D_TOLERANCE};
use crate::error::{ModelError, PolyError};
use crate::poly::{parse_polynomial, Halton, Polynomial};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: Option<String>,
    system: RawSystem,
    disturbance: Option<RawDisturbance>,
    constraint: RawConstraint,
    seed: RawSeed,
    bound: RawBound,
    cost: RawCost,
    solver: Option<RawSolver>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n: usize,
    m: usize,
    states: Option<Vec<String>>,
    disturbances: Option<Vec<String>>,
    f: Vec<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    h: Vec<Spanned<String>>,
    #[serde(rename = "box")]
    bbox: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    h: Vec<Spanned<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeed {
    h: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBound {
    #[serde(rename = "R2")]
    r2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    g: Spanned<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    degree: Option<u32>,
    mult_degree: Option<BTreeMap<String, u32>>,
    check_degree: Option<u32>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
    lyapunov_slack: Option<f64>,
    d_grid: Option<usize>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |p| offset - p - 1) + 1;
    (line, col)
}

fn invariant(check: &'static str, detail: impl Into<String>) -> ModelError {
    ModelError::Invariant {
        check,
        detail: detail.into(),
    }
}

fn parse_spanned(text: &str, s: &Spanned<String>, names: &[String]) -> Result<Polynomial, ModelError> {
    parse_polynomial(s.get_ref(), names).map_err(|e| {
        let (line, col) = line_col(text, s.span().start);
        match e {
            // +1 for the opening quote
            PolyError::Parse { column, message } => ModelError::Parse {
                line,
                column: col + column,
                message,
            },
            other => ModelError::Parse {
                line,
                column: col,
                message: other.to_string(),
            },
        }
    })
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<SystemModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Parse {
        line: 0,
        column: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut model = load_model(&text)?;
    if model.name.is_empty() {
        model.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(model)
}

/// Parses and validates a problem definition.
pub fn load_model(text: &str) -> Result<SystemModel, ModelError> {
    let raw: RawModel = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ModelError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let RawSystem {
        n,
        m,
        states,
        disturbances,
        f,
    } = raw.system;
    if n == 0 {
        return Err(invariant("dimension", "state dimension n must be positive"));
    }
    let state_names = states.unwrap_or_else(|| (1..=n).map(|i| format!("x{i}")).collect());
    let disturbance_names = disturbances.unwrap_or_else(|| (1..=m).map(|i| format!("d{i}")).collect());
    if state_names.len() != n {
        return Err(ModelError::Dimension {
            expected: n,
            got: state_names.len(),
        });
    }
    if disturbance_names.len() != m {
        return Err(ModelError::Dimension {
            expected: m,
            got: disturbance_names.len(),
        });
    }
    let all_names: Vec<String> = state_names.iter().chain(&disturbance_names).cloned().collect();
    for (i, a) in all_names.iter().enumerate() {
        if all_names[..i].contains(a) {
            return Err(invariant("names", format!("variable `{a}` declared twice")));
        }
    }
    if f.len() != n {
        return Err(invariant("system.f", format!("expected {n} components, found {}", f.len())));
    }
    let f = f
        .iter()
        .map(|s| parse_spanned(text, s, &all_names))
        .collect::<Result<Vec<_>, _>>()?;

    let (d_polys, bbox) = match raw.disturbance {
        Some(d) => (
            d.h.iter()
                .map(|s| parse_spanned(text, s, &disturbance_names))
                .collect::<Result<Vec<_>, _>>()?,
            d.bbox,
        ),
        None => (Vec::new(), None),
    };
    let disturbance = SemiAlgebraicSet::new(
        m,
        d_polys
            .into_iter()
            .map(|poly| Constraint {
                poly,
                sense: Sense::NonPositive,
            })
            .collect(),
    )?;
    let disturbance_box = match bbox {
        Some(b) => {
            if b.len() != m {
                return Err(ModelError::Dimension { expected: m, got: b.len() });
            }
            if b.iter().any(|[lo, hi]| !(lo <= hi)) {
                return Err(invariant("disturbance.box", "each interval needs lo <= hi"));
            }
            b.into_iter().map(|[lo, hi]| (lo, hi)).collect()
        }
        None => derive_box(&disturbance)?,
    };

    let constraint = SemiAlgebraicSet::new(
        n,
        raw.constraint
            .h
            .iter()
            .map(|s| {
                Ok(Constraint {
                    poly: parse_spanned(text, s, &state_names)?,
                    sense: Sense::BelowOne,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?,
    )?;
    if constraint.constraints.is_empty() {
        return Err(invariant("constraint", "at least one state constraint is required"));
    }
    let seed = parse_spanned(text, &raw.seed.h, &state_names)?;
    let cost = parse_spanned(text, &raw.cost.g, &state_names)?;
    let r2 = raw.bound.r2;
    if !(r2 > 0.0 && r2.is_finite()) {
        return Err(invariant("bound", format!("R2 must be positive, got {r2}")));
    }

    let mut settings = ModelSettings::default();
    if let Some(s) = raw.solver {
        if let Some(k) = s.degree {
            settings.degree = k;
        }
        for (k, v) in s.mult_degree.unwrap_or_default() {
            let key: u32 = k
                .trim()
                .parse()
                .map_err(|_| invariant("solver.mult_degree", format!("key `{k}` is not a degree")))?;
            if v % 2 != 0 {
                return Err(invariant("solver.mult_degree", format!("degree {v} for k={key} is odd")));
            }
            settings.mult_degree.insert(key, v);
        }
        if let Some(d) = s.check_degree {
            if d % 2 != 0 {
                return Err(invariant("solver.check_degree", format!("degree {d} is odd")));
            }
            settings.check_degree = Some(d);
        }
        settings.tolerance = s.tolerance.unwrap_or(settings.tolerance);
        settings.max_iterations = s.max_iterations.unwrap_or(settings.max_iterations);
        settings.lyapunov_slack = s.lyapunov_slack.unwrap_or(settings.lyapunov_slack);
        settings.d_grid = s.d_grid.unwrap_or(settings.d_grid).max(1);
    }
    if settings.degree < 2 {
        return Err(invariant("solver.degree", "degree of u must be at least 2"));
    }

    let source_hash = hex::encode(Sha256::digest(text.as_bytes()));
    let model = SystemModel {
        name: raw.name.unwrap_or_default(),
        n,
        m,
        state_names,
        disturbance_names,
        f,
        disturbance,
        disturbance_box,
        constraint,
        seed,
        r2,
        cost,
        settings,
        source_hash,
    };
    validate(&model)?;
    Ok(model)
}

/// Tightest box implied by constraints whose shape gives an explicit bound: univariate
/// linear or quadratic constraints, and axis-aligned ellipsoids `Σ a_i d_i² + c <= 0`.
fn derive_box(set: &SemiAlgebraicSet) -> Result<Vec<(f64, f64)>, ModelError> {
    let m = set.nvars;
    let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); m];
    let mut tighten = |i: usize, lo: f64, hi: f64| {
        b[i].0 = b[i].0.max(lo);
        b[i].1 = b[i].1.min(hi);
    };
    for h in set.polys() {
        let mut vars = vec![false; m];
        for (mono, _) in h.terms() {
            for (i, &e) in mono.exponents().iter().enumerate() {
                if e > 0 {
                    vars[i] = true;
                }
            }
        }
        let used: Vec<usize> = (0..m).filter(|&i| vars[i]).collect();
        if h.degree() > 2 {
            continue;
        }
        let c0 = h.constant_term();
        if used.len() == 1 {
            let i = used[0];
            let a = h.coeff(&crate::poly::Monomial::var(m, i).pow(2));
            let l = h.coeff(&crate::poly::Monomial::var(m, i));
            if a > 0.0 {
                let disc = l * l - 4.0 * a * c0;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    tighten(i, (-l - r) / (2.0 * a), (-l + r) / (2.0 * a));
                }
            } else if a == 0.0 && l > 0.0 {
                tighten(i, f64::NEG_INFINITY, -c0 / l);
            } else if a == 0.0 && l < 0.0 {
                tighten(i, -c0 / l, f64::INFINITY);
            }
            continue;
        }
        // Σ a_i d_i² + c with every a_i > 0
        let pure_squares = h.terms().all(|(mono, _)| {
            mono.is_one() || (mono.degree() == 2 && mono.exponents().iter().any(|&e| e == 2))
        });
        if pure_squares && c0 < 0.0 {
            for &i in &used {
                let a = h.coeff(&crate::poly::Monomial::var(m, i).pow(2));
                if a > 0.0 {
                    let r = (-c0 / a).sqrt();
                    tighten(i, -r, r);
                }
            }
        }
    }
    if let Some(i) = b.iter().position(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
        return Err(invariant(
            "disturbance.box",
            format!("cannot bound disturbance {} from its constraints; add `box` to [disturbance]", i + 1),
        ));
    }
    if b.iter().any(|(lo, hi)| lo > hi) {
        return Err(invariant("disturbance", "disturbance set is empty"));
    }
    Ok(b)
}

/// Numerical checks of the model invariants.
fn validate(model: &SystemModel) -> Result<(), ModelError> {
    let n = model.n;
    let zero = vec![0.0; n];
    let grid = model.disturbance_grid(model.settings.d_grid);
    if grid.is_empty() {
        return Err(invariant("disturbance", "no disturbance grid point satisfies the constraints"));
    }
    for d in &grid {
        let x1 = model.step(&zero, d)?;
        if x1.iter().any(|v| v.abs() > 1e-9) {
            return Err(invariant(
                "equilibrium",
                format!("f(0, {d:?}) = {x1:?} is not the origin"),
            ));
        }
        for h in model.disturbance.polys() {
            debug_assert!(h.eval(d) <= D_TOLERANCE);
        }
    }
    let g0 = model.cost.eval(&zero);
    if g0.abs() > 1e-12 {
        return Err(invariant("cost", format!("g(0) = {g0}, expected 0")));
    }
    let r = model.r2.sqrt();
    let mut halton = Halton::new(n.min(10));
    let mut x = vec![0.0; n];
    for _ in 0..512 {
        let u = halton.next_point();
        for i in 0..n {
            x[i] = (2.0 * u[i % u.len()] - 1.0) * r;
        }
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6 {
            continue;
        }
        let g = model.cost.eval(&x);
        if g <= 0.0 {
            return Err(invariant("cost", format!("g({x:?}) = {g} is not positive")));
        }
    }
    for (j, h) in model.constraint.polys().enumerate() {
        let v = h.eval(&zero);
        if v.abs() > 1e-12 {
            return Err(invariant("constraint-origin", format!("h_{}(0) = {v}, expected 0", j + 1)));
        }
    }
    let s0 = model.seed.eval(&zero);
    if s0 >= 1.0 {
        return Err(invariant("seed-origin", format!("h∞(0) = {s0}; the origin must lie in the seed set")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PREDATOR_PREY: &str = r#"
name = "predator-prey"
[system]
n = 2
m = 1
f = ["0.5*x1 - x1*x2", "-0.5*x2 + (d1 + 1)*x1*x2"]
[disturbance]
h = ["d1^2 - 0.01"]
[constraint]
h = ["x1^2 + x2^2"]
[seed]
h = "100*x1^2 + 100*x2^2"
[bound]
R2 = 1.6
[cost]
g = "x1^2 + x2^2"
"#;

    #[test]
    fn loads_predator_prey() {
        let m = load_model(PREDATOR_PREY).unwrap();
        assert_eq!((m.n, m.m), (2, 1));
        assert_eq!(m.r2, 1.6);
        let b = m.disturbance_box[0];
        assert!((b.0 + 0.1).abs() < 1e-15 && (b.1 - 0.1).abs() < 1e-15);
        assert_eq!(m.disturbance_grid(11).len(), 11);
        assert_eq!(m.source_hash.len(), 64);
    }

    #[test]
    fn equilibrium_violation() {
        let text = PREDATOR_PREY.replace("0.5*x1 - x1*x2", "0.5*x1 - x1*x2 + 0.1*d1");
        match load_model(&text) {
            Err(ModelError::Invariant { check, .. }) => assert_eq!(check, "equilibrium"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn polynomial_error_location() {
        let text = PREDATOR_PREY.replace("\"x1^2 + x2^2\"]", "\"x1^2 + x3\"]");
        match load_model(&text) {
            Err(ModelError::Parse { line, column, .. }) => {
                assert_eq!(line, 10);
                // `h = ["x1^2 + x3"]`: x3 starts at column 14
                assert_eq!(column, 14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn toml_error_location() {
        let text = PREDATOR_PREY.replace("R2 = 1.6", "R2 = ");
        assert!(matches!(load_model(&text), Err(ModelError::Parse { line: 14, .. })));
    }

    #[test]
    fn box_from_linear_constraints() {
        let text = PREDATOR_PREY.replace("\"d1^2 - 0.01\"", "\"d1 - 0.1\", \"-d1 - 0.1\"");
        let m = load_model(&text).unwrap();
        assert!((m.disturbance_box[0].0 + 0.1).abs() < 1e-15);
    }

    #[test]
    fn cost_must_vanish_only_at_origin() {
        let text = PREDATOR_PREY.replace("g = \"x1^2 + x2^2\"", "g = \"x1^2\"");
        assert!(matches!(load_model(&text), Err(ModelError::Invariant { check: "cost", .. })));
    }
}
