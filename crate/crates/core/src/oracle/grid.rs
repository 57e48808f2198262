use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One axis of a rectangular grid: `points` evenly spaced nodes on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, points: usize) -> Self {
        assert!(points >= 2, "an axis needs at least two nodes");
        assert!(hi > lo, "empty axis range");
        Axis {
            name: name.into(),
            lo,
            hi,
            points,
        }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + self.step() * i as f64
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }
}

/// Values on a rectangular grid, row-major with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField<T> {
    pub axes: Vec<Axis>,
    pub values: Vec<T>,
}

impl<T: Clone> GridField<T> {
    pub fn filled(axes: Vec<Axis>, value: T) -> Self {
        let len = axes.iter().map(|a| a.points).product();
        GridField {
            axes,
            values: vec![value; len],
        }
    }
}

impl<T> GridField<T> {
    /// Evaluates `f` at every node.
    pub fn from_fn(axes: Vec<Axis>, mut f: impl FnMut(&[f64]) -> T) -> Self {
        let len: usize = axes.iter().map(|a| a.points).product();
        let mut values = Vec::with_capacity(len);
        let mut x = vec![0.0; axes.len()];
        for flat in 0..len {
            let mut rem = flat;
            for (d, a) in axes.iter().enumerate().rev() {
                x[d] = a.coord(rem % a.points);
                rem /= a.points;
            }
            values.push(f(&x));
        }
        GridField { axes, values }
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.axes.len()];
        for d in (0..self.axes.len().saturating_sub(1)).rev() {
            s[d] = s[d + 1] * self.axes[d + 1].points;
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (d, a) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % a.points;
            flat /= a.points;
        }
        idx
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coord(i))
            .collect()
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::step).product()
    }

    /// Whether `flat` lies on the outer face of the grid box.
    pub fn on_box_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .any(|(&i, a)| i == 0 || i + 1 == a.points)
    }

    /// Flat indices of the nodes within Chebyshev distance one of `flat`, excluding itself.
    pub fn neighbours(&self, flat: usize) -> Vec<usize> {
        let idx = self.multi_index(flat);
        let strides = self.strides();
        let mut out = vec![flat as isize];
        for (d, a) in self.axes.iter().enumerate() {
            let s = strides[d] as isize;
            let mut next = Vec::with_capacity(out.len() * 3);
            for &base in &out {
                next.push(base);
                if idx[d] > 0 {
                    next.push(base - s);
                }
                if idx[d] + 1 < a.points {
                    next.push(base + s);
                }
            }
            out = next;
        }
        out.into_iter().map(|i| i as usize).filter(|&i| i != flat).collect()
    }

    fn same_shape<U>(&self, other: &GridField<U>) -> bool {
        self.axes.len() == other.axes.len()
            && self
                .axes
                .iter()
                .zip(&other.axes)
                .all(|(a, b)| a.points == b.points && a.lo == b.lo && a.hi == b.hi)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> GridField<U> {
        GridField {
            axes: self.axes.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

impl GridField<bool> {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&b| b).count()
    }

    /// Nodes whose Chebyshev neighbourhood contains both labels.
    pub fn boundary(&self) -> GridField<bool> {
        let values = (0..self.len())
            .map(|i| self.neighbours(i).iter().any(|&j| self.values[j] != self.values[i]))
            .collect();
        GridField {
            axes: self.axes.clone(),
            values,
        }
    }

    /// Nodes set here but not in `other` and not adjacent to any node of `other`: the
    /// violations of `self ⊆ other` beyond a one-cell band.
    ///
    /// # Panics
    /// If the grids differ in shape.
    pub fn excess_beyond_band(&self, other: &GridField<bool>) -> Vec<usize> {
        assert!(self.same_shape(other), "grid shapes differ");
        (0..self.len())
            .filter(|&i| self.values[i] && !other.values[i])
            .filter(|&i| !self.neighbours(i).iter().any(|&j| other.values[j]))
            .collect()
    }

    /// Nodes set here but not in `other`.
    pub fn excess(&self, other: &GridField<bool>) -> Vec<usize> {
        assert!(self.same_shape(other), "grid shapes differ");
        (0..self.len()).filter(|&i| self.values[i] && !other.values[i]).collect()
    }
}

/// Formatting of one CSV cell.
pub trait CsvCell {
    fn write_cell(&self, out: &mut String);
}

impl CsvCell for bool {
    fn write_cell(&self, out: &mut String) {
        out.push(if *self { '1' } else { '0' });
    }
}

impl CsvCell for f64 {
    fn write_cell(&self, out: &mut String) {
        write!(out, "{self}").unwrap();
    }
}

impl<T: CsvCell> GridField<T> {
    /// CSV export. A 2D field is written as a matrix: the header row holds the first-axis
    /// coordinates, then one row per second-axis coordinate, led by that coordinate.
    /// Other dimensions are written in long form, one node per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.dims() == 2 {
            let (ax, ay) = (&self.axes[0], &self.axes[1]);
            write!(out, "{}\\{}", ay.name, ax.name).unwrap();
            for x in ax.coords() {
                write!(out, ",{x}").unwrap();
            }
            out.push('\n');
            for j in 0..ay.points {
                write!(out, "{}", ay.coord(j)).unwrap();
                for i in 0..ax.points {
                    out.push(',');
                    self.values[i * ay.points + j].write_cell(&mut out);
                }
                out.push('\n');
            }
            return out;
        }
        let names: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        writeln!(out, "{},value", names.join(",")).unwrap();
        for (flat, v) in self.values.iter().enumerate() {
            for c in self.coords(flat) {
                write!(out, "{c},").unwrap();
            }
            v.write_cell(&mut out);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(points: usize) -> Vec<Axis> {
        vec![Axis::new("x", -1.0, 1.0, points), Axis::new("y", -1.0, 1.0, points)]
    }

    #[test]
    fn index_round_trip() {
        let g = GridField::filled(vec![Axis::new("a", 0.0, 1.0, 3), Axis::new("b", 0.0, 1.0, 4), Axis::new("c", 0.0, 1.0, 5)], 0.0);
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.coords(g.flat_index(&[2, 0, 4])), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn neighbourhood_sizes() {
        let g = GridField::filled(square(5), false);
        assert_eq!(g.neighbours(0).len(), 3);
        assert_eq!(g.neighbours(g.flat_index(&[2, 2])).len(), 8);
        assert_eq!(g.neighbours(g.flat_index(&[0, 2])).len(), 5);
    }

    #[test]
    fn csv_layout() {
        let g = GridField::from_fn(square(3), |x| x[0] > 0.5 && x[1] < -0.5);
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "y\\x,-1,0,1");
        assert_eq!(lines[1], "-1,0,0,1");
        assert_eq!(lines[3], "1,0,0,0");
    }

    #[test]
    fn band_tolerance() {
        let small = GridField::from_fn(square(11), |x| x[0] * x[0] + x[1] * x[1] < 0.5);
        let smaller = GridField::from_fn(square(11), |x| x[0] * x[0] + x[1] * x[1] < 0.4);
        assert!(small.excess_beyond_band(&smaller).is_empty());
        assert!(!small.excess(&smaller).is_empty());
        let tiny = GridField::from_fn(square(11), |x| x[0] * x[0] + x[1] * x[1] < 0.1);
        assert!(!small.excess_beyond_band(&tiny).is_empty());
    }
}
