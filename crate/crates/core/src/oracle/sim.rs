use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{state_axes, GridField, Interpolator};
use crate::model::{run_until, simulate, stage_seed, Policy, SystemModel};
use crate::poly::Polynomial;

/// Adversary used by [`grid_max_roa`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    /// Nodes per free state axis; by default 101 for `n <= 2` and 61 otherwise.
    pub points: Option<usize>,
    /// Disturbance grid nodes per axis.
    pub d_points: usize,
    /// Steps allowed to reach `X∞`.
    pub horizon: usize,
    /// Seeded random policies per initial state.
    pub random_policies: usize,
    pub seed: u64,
    /// Pinned coordinates `(axis, value)`; the initial states form a slice.
    pub fixed: Vec<(usize, f64)>,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            points: None,
            d_points: 11,
            horizon: 200,
            random_policies: 50,
            seed: 42,
            fixed: Vec::new(),
        }
    }
}

/// Simulation estimate of the maximal robust region of attraction on a grid of initial
/// states. A node is a member iff it lies in `X` and every adversary drives it into `X∞`
/// within the horizon without leaving `X` first. The adversaries are the greedy policy
/// on `v` (each step picks the grid disturbance maximizing the interpolated `v(f(x,d))`)
/// when a value field is given, the seeded random policies over the disturbance grid, and
/// the constant policies at the extreme disturbances.
pub fn grid_max_roa(model: &SystemModel, v: Option<&GridField<f64>>, settings: &SimSettings) -> GridField<bool> {
    let n = model.n;
    let points = settings.points.unwrap_or(if n <= 2 { 101 } else { 61 });
    let free: Vec<usize> = (0..n).filter(|i| !settings.fixed.iter().any(|&(j, _)| j == *i)).collect();
    let all = state_axes(model, points);
    let axes = free.iter().map(|&i| all[i].clone()).collect();
    let mut base = vec![0.0; n];
    for &(i, val) in &settings.fixed {
        base[i] = val;
    }
    let starts = GridField::from_fn(axes, |c| {
        let mut x = base.clone();
        for (&i, &val) in free.iter().zip(c) {
            x[i] = val;
        }
        x
    });

    let dgrid: Arc<[Vec<f64>]> = model.disturbance_grid(settings.d_points).into();
    let extremes = model.disturbance_extremes(settings.d_points);
    let interp = v.map(|f| (Interpolator::new(f), &f.values));
    let values: Vec<bool> = (0..starts.len())
        .into_par_iter()
        .map(|flat| {
            let x0 = &starts.values[flat];
            if !model.in_constraint(x0) {
                return false;
            }
            if let Some((it, vals)) = &interp {
                let mut fx = vec![0.0; n];
                let o = run_until(model, x0, settings.horizon, true, |_, x| {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for (k, d) in dgrid.iter().enumerate() {
                        model.step_into(x, d, &mut fx);
                        let val = if fx.iter().all(|c| c.is_finite()) { it.eval(vals, &fx) } else { 1.0 };
                        if val > best.0 {
                            best = (val, k);
                        }
                    }
                    &dgrid[best.1]
                });
                if !o.reached() {
                    return false;
                }
            }
            for d in &extremes {
                if !run_until(model, x0, settings.horizon, true, |_, _| d.as_slice()).reached() {
                    return false;
                }
            }
            (0..settings.random_policies).all(|j| {
                let p = Policy::random(stage_seed(settings.seed, &format!("oracle-policy-{flat}-{j}")), dgrid.clone());
                run_until(model, x0, settings.horizon, true, |k, _| p.at(k)).reached()
            })
        })
        .collect();
    GridField {
        axes: starts.axes,
        values,
    }
}

/// Largest excess of `v` over `u` on the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpperReport {
    /// `max (v - u)₊` over the compared nodes.
    pub max_excess: f64,
    pub at: Vec<f64>,
    pub nodes: usize,
}

/// Compares `u` against `v` at every node inside `|x|² <= r2` that is off the outer face
/// of the grid box.
pub fn compare_upper(u: &Polynomial, v: &GridField<f64>, r2: f64) -> UpperReport {
    let (max_excess, idx, nodes) = (0..v.len())
        .into_par_iter()
        .filter_map(|i| {
            let x = v.coords(i);
            (!v.on_box_boundary(i) && x.iter().map(|c| c * c).sum::<f64>() <= r2).then(|| {
                let e = (v.values[i] - u.eval(&x)).max(0.0);
                (e, i, 1usize)
            })
        })
        .reduce(
            || (0.0, usize::MAX, 0),
            |a, b| {
                let pick = b.0 > a.0 || (b.0 == a.0 && b.1 < a.1);
                let (e, i) = if pick { (b.0, b.1) } else { (a.0, a.1) };
                (e, i, a.2 + b.2)
            },
        );
    UpperReport {
        max_excess,
        at: if idx == usize::MAX { Vec::new() } else { v.coords(idx) },
        nodes,
    }
}

/// First step `k <= horizon` at which the trajectory is in `X∞`.
pub fn hitting_time(model: &SystemModel, x0: &[f64], policy: &Policy, horizon: usize) -> Option<usize> {
    simulate(model, x0, policy, horizon).first_hit
}
