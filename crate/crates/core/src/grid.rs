//! Uniform grids on the flat tori T¹ and T² and their wrap-around geometry.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Largest supported torus dimension.
pub const MAX_DIM: usize = 2;

/// A point or vector in R^d with d ≤ [`MAX_DIM`], stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coords {
    vals: [f64; MAX_DIM],
    dim: usize,
}

impl Coords {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { vals: [0.0; MAX_DIM], dim }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut c = Self::zeros(v.len());
        c.vals[..v.len()].copy_from_slice(v);
        c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// Elementwise `self + k * other`.
    pub fn axpy(&self, k: f64, other: &[f64]) -> Self {
        let mut out = *self;
        for (o, b) in out.iter_mut().zip(other) {
            *o += k * b;
        }
        out
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = *self;
        out.iter_mut().for_each(|x| *x *= k);
        out
    }
}

impl Deref for Coords {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.vals[..self.dim]
    }
}

impl DerefMut for Coords {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.vals[..self.dim]
    }
}

/// Reduce a coordinate to the fundamental domain [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Componentwise minimal-image displacement from `x` to `y` on T^d.
///
/// Components lie in [-1/2, 1/2); an exact half-cell tie goes to -1/2.
pub fn wrap_displacement(x: &[f64], y: &[f64]) -> Coords {
    let mut d = Coords::zeros(x.len());
    for ((di, xi), yi) in d.iter_mut().zip(x).zip(y) {
        let raw = yi - xi;
        *di = raw - (raw + 0.5).floor();
    }
    d
}

/// Flat torus distance.
pub fn torus_distance(x: &[f64], y: &[f64]) -> f64 {
    wrap_displacement(x, y).norm()
}

/// Uniform grid with `n` points per axis on T^`dim`.
///
/// Linear indices put axis 0 fastest: `index = i0 + n * i1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridTorus {
    dim: usize,
    n: usize,
}

impl GridTorus {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 4 {
            return Err(invalid(format!("need at least 4 points per axis, got {n}")));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn point_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Integer cell coordinates of a linear index.
    pub fn cells(&self, index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        let mut rest = index;
        for c in out.iter_mut().take(self.dim) {
            *c = rest % self.n;
            rest /= self.n;
        }
        out
    }

    /// Linear index of (possibly out-of-range) integer cells, wrapped.
    pub fn index_of_cells(&self, cells: &[i64]) -> usize {
        let n = self.n as i64;
        cells
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * self.n + c.rem_euclid(n) as usize)
    }

    pub fn coords(&self, index: usize) -> Coords {
        let cells = self.cells(index);
        let mut c = Coords::zeros(self.dim);
        for (a, x) in c.iter_mut().enumerate() {
            *x = cells[a] as f64 / self.n as f64;
        }
        c
    }

    /// Index of the grid point nearest to `x`.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let n = self.n as f64;
        let cells: Vec<i64> = x.iter().map(|&xi| (wrap_unit(xi) * n).round() as i64).collect();
        self.index_of_cells(&cells)
    }

    /// Minimal-image cell offset per axis, in [-n/2, n/2).
    pub fn wrap_cell_offset(&self, d: i64) -> i64 {
        let n = self.n as i64;
        (d + n / 2).rem_euclid(n) - n / 2
    }

    /// Minimal-image cell offsets from `a` to `b`.
    pub fn cell_offset(&self, a: usize, b: usize) -> [i64; MAX_DIM] {
        let (ca, cb) = (self.cells(a), self.cells(b));
        let mut out = [0; MAX_DIM];
        for ax in 0..self.dim {
            out[ax] = self.wrap_cell_offset(cb[ax] as i64 - ca[ax] as i64);
        }
        out
    }

    /// Torus distance between two grid points.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let off = self.cell_offset(a, b);
        let s = self.spacing();
        off[..self.dim]
            .iter()
            .map(|&o| (o as f64 * s).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn grid_examples() {
        let g = GridTorus::new(1, 8).unwrap();
        assert_eq!(g.point_count(), 8);
        assert_eq!(g.spacing(), 0.125);
        let g2 = GridTorus::new(2, 4).unwrap();
        assert_eq!(g2.point_count(), 16);
        assert_eq!(&*g2.coords(5), &[0.25, 0.25]);
        assert!(GridTorus::new(1, 3).is_err());
        assert!(GridTorus::new(3, 8).is_err());
    }

    #[test]
    fn displacement_examples() {
        assert_abs_diff_eq!(wrap_displacement(&[0.9], &[0.1])[0], 0.2, epsilon = 1e-15);
        assert_eq!(wrap_displacement(&[0.1], &[0.6])[0], -0.5);
        let d = wrap_displacement(&[0.1, 0.2], &[0.3, 0.9]);
        assert_abs_diff_eq!(d[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], -0.3, epsilon = 1e-15);
    }

    #[test]
    fn cell_offsets_wrap() {
        let g = GridTorus::new(1, 8).unwrap();
        assert_eq!(g.cell_offset(7, 1)[0], 2);
        assert_eq!(g.cell_offset(0, 4)[0], -4);
        assert_eq!(g.distance(0, 4), 0.5);
        let g2 = GridTorus::new(2, 8).unwrap();
        let a = g2.index_of_cells(&[7, 0]);
        let b = g2.index_of_cells(&[0, 1]);
        assert_abs_diff_eq!(g2.distance(a, b), (2.0f64).sqrt() / 8.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn displacement_in_half_open_box(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let d = wrap_displacement(&[x], &[y])[0];
            prop_assert!((-0.5..0.5).contains(&d));
            let back = wrap_unit(x + d);
            let target = wrap_unit(y);
            let gap = (back - target).abs();
            prop_assert!(gap < 1e-12 || (1.0 - gap) < 1e-12);
        }

        #[test]
        fn index_roundtrip(dim in 1usize..=2, n in 4usize..20, seed in 0usize..10_000) {
            let g = GridTorus::new(dim, n).unwrap();
            let idx = seed % g.point_count();
            let cells = g.cells(idx);
            let as_i64: Vec<i64> = cells[..dim].iter().map(|&c| c as i64).collect();
            prop_assert_eq!(g.index_of_cells(&as_i64), idx);
            prop_assert_eq!(g.nearest_index(&g.coords(idx)), idx);
        }

        #[test]
        fn grid_distance_matches_continuous(n in 4usize..40, a in 0usize..1600, b in 0usize..1600) {
            let g = GridTorus::new(2, n).unwrap();
            let (a, b) = (a % g.point_count(), b % g.point_count());
            let direct = torus_distance(&g.coords(a), &g.coords(b));
            prop_assert!((g.distance(a, b) - direct).abs() < 1e-12);
            prop_assert_eq!(g.distance(a, b), g.distance(b, a));
        }
    }
}
