use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Axis, GridField};
use crate::model::SystemModel;

/// Resolution and stopping rule of the value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViSettings {
    /// Nodes per state axis; by default 101 for `n <= 2` and 61 otherwise.
    pub points: Option<usize>,
    /// Disturbance grid nodes per axis.
    pub d_points: usize,
    pub max_iterations: usize,
    /// Sup-norm change between sweeps at which the iteration stops.
    pub threshold: f64,
}

impl Default for ViSettings {
    fn default() -> Self {
        ViSettings {
            points: None,
            d_points: 11,
            max_iterations: 10_000,
            threshold: 1e-6,
        }
    }
}

impl ViSettings {
    pub fn points_for(&self, n: usize) -> usize {
        self.points.unwrap_or(if n <= 2 { 101 } else { 61 })
    }
}

/// The square grid over the bounding box of `B(0,R)`.
pub fn state_axes(model: &SystemModel, points: usize) -> Vec<Axis> {
    let r = model.r2.sqrt();
    (0..model.n)
        .map(|i| Axis::new(model.state_names[i].clone(), -r, r, points))
        .collect()
}

/// Multilinear interpolation on a rectangular grid; points outside the box read as 1.
#[derive(Debug, Clone)]
pub struct Interpolator {
    axes: Vec<Axis>,
    strides: Vec<usize>,
}

impl Interpolator {
    pub fn new<T>(field: &GridField<T>) -> Self {
        Interpolator {
            axes: field.axes.clone(),
            strides: field.strides(),
        }
    }

    fn locate(&self, x: &[f64], frac: &mut [f64]) -> Option<usize> {
        let mut base = 0;
        for (d, a) in self.axes.iter().enumerate() {
            let t = (x[d] - a.lo) / a.step();
            if !(t >= 0.0 && t <= (a.points - 1) as f64) {
                return None;
            }
            let i = (t.floor() as usize).min(a.points - 2);
            frac[d] = t - i as f64;
            base += i * self.strides[d];
        }
        Some(base)
    }

    fn blend(&self, values: &[f64], base: usize, frac: &[f64]) -> f64 {
        let n = self.axes.len();
        let mut acc = 0.0;
        for corner in 0..1usize << n {
            let mut w = 1.0;
            let mut idx = base;
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    idx += self.strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        acc
    }

    /// Interpolated value at `x`, or 1 outside the grid box.
    pub fn eval(&self, values: &[f64], x: &[f64]) -> f64 {
        let mut frac = [0.0; 8];
        assert!(self.axes.len() <= frac.len(), "interpolation supports up to 8 dimensions");
        match self.locate(x, &mut frac) {
            Some(base) => self.blend(values, base, &frac[..self.axes.len()]),
            None => 1.0,
        }
    }
}

/// `1 - min_j l(1 - h_j(x))` with `l(y) = max(y, 0)`: the lower branch of the Bellman
/// equation, 1 outside `X`.
pub fn lower_branch(model: &SystemModel, x: &[f64]) -> f64 {
    let m = model
        .constraint
        .polys()
        .map(|h| (1.0 - h.eval(x)).max(0.0))
        .fold(f64::INFINITY, f64::min);
    if m.is_finite() {
        1.0 - m
    } else {
        0.0
    }
}

/// Converged (or capped) value-iteration field with its convergence log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViResult {
    pub field: GridField<f64>,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub delta: f64,
    pub converged: bool,
    /// `(sweep, sup-norm change)` per sweep.
    pub log: Vec<(usize, f64)>,
    /// Largest decrease of any node in any sweep; zero for a monotone iteration.
    pub max_decrease: f64,
}

impl ViResult {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iteration,delta\n");
        for (i, d) in &self.log {
            s.push_str(&format!("{i},{d}\n"));
        }
        s
    }
}

/// Precomputed successors of every node under every grid disturbance.
struct Successors {
    n: usize,
    dcount: usize,
    /// `nodes * dcount` entries; `u32::MAX` marks a successor outside the box.
    base: Vec<u32>,
    /// `n` fractional offsets per entry.
    frac: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
}

impl Successors {
    fn new(model: &SystemModel, field: &GridField<f64>, dgrid: &[Vec<f64>]) -> Self {
        let n = model.n;
        let interp = Interpolator::new(field);
        let dcount = dgrid.len();
        let per_node: Vec<(Vec<u32>, Vec<f64>, f64, f64)> = (0..field.len())
            .into_par_iter()
            .map(|i| {
                let x = field.coords(i);
                let mut bases = Vec::with_capacity(dcount);
                let mut fracs = vec![0.0; dcount * n];
                let mut fx = vec![0.0; n];
                for (k, d) in dgrid.iter().enumerate() {
                    model.step_into(&x, d, &mut fx);
                    let slot = &mut fracs[k * n..(k + 1) * n];
                    let b = if fx.iter().all(|v| v.is_finite()) {
                        interp.locate(&fx, slot)
                    } else {
                        None
                    };
                    bases.push(b.map_or(u32::MAX, |b| b as u32));
                }
                (bases, fracs, model.cost.eval(&x), lower_branch(model, &x))
            })
            .collect();
        let mut s = Successors {
            n,
            dcount,
            base: Vec::with_capacity(field.len() * dcount),
            frac: Vec::with_capacity(field.len() * dcount * n),
            cost: Vec::with_capacity(field.len()),
            lower: Vec::with_capacity(field.len()),
        };
        for (b, f, c, l) in per_node {
            s.base.extend(b);
            s.frac.extend(f);
            s.cost.push(c);
            s.lower.push(l);
        }
        s
    }

    /// `max_d v(f(x_i, d))`.
    fn worst_next(&self, interp: &Interpolator, v: &[f64], i: usize) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..self.dcount {
            let e = i * self.dcount + k;
            let b = self.base[e];
            let next = if b == u32::MAX {
                1.0
            } else {
                interp.blend(v, b as usize, &self.frac[e * self.n..(e + 1) * self.n])
            };
            worst = worst.max(next);
        }
        worst
    }

    fn update(&self, interp: &Interpolator, v: &[f64], i: usize) -> f64 {
        let g = self.cost[i];
        let a = (self.worst_next(interp, v, i) + g) / (1.0 + g);
        a.max(self.lower[i]).clamp(0.0, 1.0)
    }
}

/// Fixed-point iteration of the Bellman equation on the grid:
///
/// `v'(x) = max( max_d (v(f(x,d)) + g(x)) / (1 + g(x)), 1 - min_j l(1 - h_j(x)) )`,
///
/// starting from the lower branch, with multilinear interpolation and `v = 1` outside the
/// grid box.
pub fn value_iteration(model: &SystemModel, settings: &ViSettings) -> ViResult {
    let points = settings.points_for(model.n);
    let axes = state_axes(model, points);
    let mut field = GridField::filled(axes, 0.0);
    let dgrid = model.disturbance_grid(settings.d_points);
    let succ = Successors::new(model, &field, &dgrid);
    let interp = Interpolator::new(&field);
    field.values.clone_from(&succ.lower);

    let mut next = field.values.clone();
    let mut log = Vec::new();
    let (mut delta, mut iterations, mut max_decrease) = (f64::INFINITY, 0, 0.0f64);
    while iterations < settings.max_iterations {
        let v = &field.values;
        next.par_iter_mut().enumerate().for_each(|(i, out)| {
            *out = succ.update(&interp, v, i);
        });
        let (d, dec) = v
            .par_iter()
            .zip(next.par_iter())
            .map(|(a, b)| ((b - a).abs(), a - b))
            .reduce(|| (0.0, f64::NEG_INFINITY), |x, y| (x.0.max(y.0), x.1.max(y.1)));
        max_decrease = max_decrease.max(dec);
        std::mem::swap(&mut field.values, &mut next);
        iterations += 1;
        delta = d;
        log.push((iterations, d));
        if iterations % 100 == 0 {
            log::debug!("value iteration sweep {iterations}: delta {d:.3e}");
        }
        if d < settings.threshold {
            break;
        }
    }
    ViResult {
        field,
        iterations,
        delta,
        converged: delta < settings.threshold,
        log,
        max_decrease,
    }
}

/// Bellman residual of a grid field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BellmanResidual {
    /// `max |min( min_d (v - v∘f - g(1 - v)), v - lower )|` over interior nodes.
    pub max_abs: f64,
    pub at: Vec<f64>,
}

/// Discrete Bellman residual of `v` over nodes off the outer face of the grid box, with
/// the same disturbance grid and interpolation as [`value_iteration`].
pub fn bellman_residual(model: &SystemModel, v: &GridField<f64>, d_points: usize) -> BellmanResidual {
    let dgrid = model.disturbance_grid(d_points);
    let succ = Successors::new(model, v, &dgrid);
    let interp = Interpolator::new(v);
    let (max_abs, idx) = (0..v.len())
        .into_par_iter()
        .filter(|&i| !v.on_box_boundary(i))
        .map(|i| {
            let g = succ.cost[i];
            let vi = v.values[i];
            let decrease = vi - succ.worst_next(&interp, &v.values, i) - g * (1.0 - vi);
            let r = decrease.min(vi - succ.lower[i]).abs();
            (r, i)
        })
        .reduce(|| (0.0, usize::MAX), |a, b| if b.0 > a.0 { b } else { a });
    BellmanResidual {
        max_abs,
        at: if idx == usize::MAX { Vec::new() } else { v.coords(idx) },
    }
}
