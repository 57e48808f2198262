use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RoaCertificate, RoaConfig};
use crate::model::{cartesian, linspace, run_until, stage_seed, Policy, SystemModel};

/// Listed failures are capped at this many per kind; counts are always complete.
const MAX_LISTED: usize = 100;

/// Sampled check of one consequence of the identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCheck {
    pub family: String,
    pub samples: usize,
    pub violations: usize,
    /// Smallest value of the checked quantity; nonnegative up to the tolerance is a pass.
    pub worst: f64,
    pub worst_at: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub family: String,
    /// `x`, followed by `d` for the decrease family.
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyLabel {
    Random { seed: u64 },
    Constant { d: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub x0: Vec<f64>,
    pub policy: PolicyLabel,
    /// Step at which the state left `X` (or overflowed), if it did.
    pub exit: Option<usize>,
    pub overflow: bool,
    /// Step at which the state entered `X∞`, if it did.
    pub hit: Option<usize>,
}

/// Sampled evidence for a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub tolerance: f64,
    pub families: Vec<FamilyCheck>,
    pub violations: Vec<ConstraintViolation>,
    pub states_requested: usize,
    pub states_tested: usize,
    /// Uniform draws from the bounding box used to find the tested states.
    pub draws: usize,
    pub policies_per_state: usize,
    pub horizon: usize,
    pub trajectories: usize,
    pub stayed_in_x: usize,
    pub left_x: usize,
    pub hit_seed: usize,
    pub failures: Vec<TrajectoryFailure>,
    pub pass: bool,
}

impl CertReport {
    pub fn constraint_violations(&self) -> usize {
        self.families.iter().map(|f| f.violations).sum()
    }
}

struct Tally {
    check: FamilyCheck,
    listed: Vec<ConstraintViolation>,
    tol: f64,
}

impl Tally {
    fn new(family: &str, tol: f64) -> Self {
        Tally {
            check: FamilyCheck {
                family: family.to_string(),
                samples: 0,
                violations: 0,
                worst: f64::INFINITY,
                worst_at: Vec::new(),
            },
            listed: Vec::new(),
            tol,
        }
    }

    fn record(&mut self, value: f64, point: impl FnOnce() -> Vec<f64>) {
        self.check.samples += 1;
        let bad = !(value >= -self.tol);
        if !bad && value >= self.check.worst {
            return;
        }
        let p = point();
        if value < self.check.worst || self.check.worst_at.is_empty() {
            self.check.worst = value;
            self.check.worst_at = p.clone();
        }
        if bad {
            self.check.violations += 1;
            if self.listed.len() < MAX_LISTED {
                self.listed.push(ConstraintViolation {
                    family: self.check.family.clone(),
                    point: p,
                    value,
                });
            }
        }
    }
}

fn state_grid(model: &SystemModel, points: usize) -> Vec<Vec<f64>> {
    let r = model.r2.sqrt();
    let axes: Vec<Vec<f64>> = (0..model.n).map(|_| linspace(-r, r, points)).collect();
    cartesian(&axes).into_iter().filter(|x| model.in_ball(x)).collect()
}

fn constraint_checks(cert: &RoaCertificate, model: &SystemModel, cfg: &RoaConfig) -> Vec<Tally> {
    let points = cfg.check_grid.unwrap_or(if model.n <= 2 { 101 } else { 31 });
    let grid = state_grid(model, points);
    let dgrid = model.disturbance_grid(model.settings.d_grid);
    let u = &cert.u;
    let tol = cfg.tolerance;
    let chunks: Vec<[Tally; 3]> = grid
        .par_chunks(256)
        .map(|chunk| {
            let mut dec = Tally::new("decrease", tol);
            let mut out = Tally::new("outside", tol);
            let mut above = Tally::new("above-constraint", tol);
            let mut fx = vec![0.0; model.n];
            for x in chunk {
                let ux = u.eval(x);
                if model.seed.eval(x) >= 1.0 {
                    let g = model.cost.eval(x);
                    for d in &dgrid {
                        model.step_into(x, d, &mut fx);
                        let v = ux - u.eval(&fx) - g * (1.0 - ux);
                        dec.record(v, || x.iter().chain(d).copied().collect());
                    }
                }
                let level = model.constraint_level(x);
                if level >= 1.0 {
                    out.record(ux - 1.0, || x.clone());
                } else {
                    for h in model.constraint.polys() {
                        above.record(ux - h.eval(x), || x.clone());
                    }
                }
            }
            [dec, out, above]
        })
        .collect();
    let mut total = [
        Tally::new("decrease", tol),
        Tally::new("outside", tol),
        Tally::new("above-constraint", tol),
    ];
    for part in chunks {
        for (t, p) in total.iter_mut().zip(part) {
            t.check.samples += p.check.samples;
            t.check.violations += p.check.violations;
            if p.check.worst < t.check.worst {
                t.check.worst = p.check.worst;
                t.check.worst_at = p.check.worst_at;
            }
            let room = MAX_LISTED - t.listed.len().min(MAX_LISTED);
            t.listed.extend(p.listed.into_iter().take(room));
        }
    }
    total.into()
}

/// Draws up to `cfg.samples` states uniformly from `X ∩ {u < 1}` by rejection from the
/// bounding box of `B(0,R)`. Gives up after `samples * 10^5` draws.
fn sample_states(cert: &RoaCertificate, model: &SystemModel, cfg: &RoaConfig) -> (Vec<Vec<f64>>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, "certify-states"));
    let r = model.r2.sqrt();
    let cap = cfg.samples.saturating_mul(100_000);
    let mut states = Vec::with_capacity(cfg.samples);
    let mut draws = 0;
    while states.len() < cfg.samples && draws < cap {
        draws += 1;
        let x: Vec<f64> = (0..model.n).map(|_| rng.random_range(-r..=r)).collect();
        if model.in_constraint(&x) && cert.membership(&x) {
            states.push(x);
        }
    }
    (states, draws)
}

/// Checks a certificate by sampling: the identity consequences on a state grid (crossed
/// with the disturbance grid for the decrease condition), and trajectories from states
/// inside the certified set under random and constant extreme disturbance policies.
///
/// The verdict passes iff no sampled constraint is violated beyond `cfg.tolerance`, the
/// requested number of states was found, and every trajectory stays in `X` for
/// `cfg.horizon` steps and enters `X∞`.
pub fn certify(cert: &RoaCertificate, model: &SystemModel, cfg: &RoaConfig) -> CertReport {
    let tallies = constraint_checks(cert, model, cfg);
    let (states, draws) = sample_states(cert, model, cfg);
    let dgrid: Arc<[Vec<f64>]> = model.disturbance_grid(model.settings.d_grid).into();
    let extremes = model.disturbance_extremes(model.settings.d_grid);
    let per_state = cfg.policies + extremes.len();

    let outcomes: Vec<Vec<(PolicyLabel, crate::model::Outcome)>> = states
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let mut out = Vec::with_capacity(per_state);
            for j in 0..cfg.policies {
                let seed = stage_seed(cfg.seed, &format!("certify-policy-{i}-{j}"));
                let p = Policy::random(seed, dgrid.clone());
                let o = run_until(model, x0, cfg.horizon, false, |k, _| p.at(k));
                out.push((PolicyLabel::Random { seed }, o));
            }
            for d in &extremes {
                let o = run_until(model, x0, cfg.horizon, false, |_, _| d.as_slice());
                out.push((PolicyLabel::Constant { d: d.clone() }, o));
            }
            out
        })
        .collect();

    let (mut stayed, mut left, mut hit) = (0, 0, 0);
    let mut failures = Vec::new();
    for (x0, runs) in states.iter().zip(outcomes) {
        for (label, o) in runs {
            let exited = o.exit.is_some() || o.overflow;
            if exited {
                left += 1;
            } else {
                stayed += 1;
            }
            if o.hit.is_some() {
                hit += 1;
            }
            if (exited || o.hit.is_none()) && failures.len() < MAX_LISTED {
                failures.push(TrajectoryFailure {
                    x0: x0.clone(),
                    policy: label,
                    exit: o.exit,
                    overflow: o.overflow,
                    hit: o.hit,
                });
            }
        }
    }
    let trajectories = states.len() * per_state;
    let families: Vec<FamilyCheck> = tallies.iter().map(|t| t.check.clone()).collect();
    let violations: Vec<ConstraintViolation> = tallies.into_iter().flat_map(|t| t.listed).collect();
    let pass = families.iter().all(|f| f.violations == 0)
        && states.len() == cfg.samples
        && stayed == trajectories
        && hit == trajectories;
    CertReport {
        tolerance: cfg.tolerance,
        families,
        violations,
        states_requested: cfg.samples,
        states_tested: states.len(),
        draws,
        policies_per_state: per_state,
        horizon: cfg.horizon,
        trajectories,
        stayed_in_x: stayed,
        left_x: left,
        hit_seed: hit,
        failures,
        pass,
    }
}
