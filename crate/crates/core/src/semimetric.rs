//! Dense pairwise value matrices over a list of grid indices.

use rayon::prelude::*;

use crate::error::{invalid, Result};

/// Marker for an unreachable pair. Saturates under addition with finite
/// values and compares above every finite cost.
pub const UNREACHABLE: f64 = f64::INFINITY;

/// Dense matrix `m[i][j]` indexed by positions in `point_ids`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemiMetric {
    point_ids: Vec<usize>,
    m: Vec<f64>,
    symmetric: bool,
}

impl SemiMetric {
    pub fn new(point_ids: Vec<usize>, m: Vec<f64>, symmetric: bool) -> Result<Self> {
        let n = point_ids.len();
        if m.len() != n * n {
            return Err(invalid(format!(
                "matrix has {} entries, expected {}",
                m.len(),
                n * n
            )));
        }
        if m.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(invalid("matrix contains NaN or -inf"));
        }
        Ok(Self {
            point_ids,
            m,
            symmetric,
        })
    }

    /// Build from a function of positions `(i, j)`.
    pub fn from_fn(
        point_ids: Vec<usize>,
        symmetric: bool,
        f: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Self {
        let n = point_ids.len();
        let mut m = vec![0.0; n * n];
        m.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(i, j);
            }
        });
        Self {
            point_ids,
            m,
            symmetric,
        }
    }

    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }

    pub fn point_ids(&self) -> &[usize] {
        &self.point_ids
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.m[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.m
    }

    /// Position of a grid index in `point_ids`.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.point_ids.iter().position(|&p| p == id)
    }

    /// `m[i][j] + m[j][i]`, flagged symmetric.
    pub fn symmetrized(&self) -> SemiMetric {
        SemiMetric::from_fn(self.point_ids.clone(), true, |i, j| {
            self.get(i, j) + self.get(j, i)
        })
    }

    /// Restriction to the given positions, in the given order.
    pub fn restrict(&self, positions: &[usize]) -> SemiMetric {
        let ids = positions.iter().map(|&p| self.point_ids[p]).collect();
        SemiMetric::from_fn(ids, self.symmetric, |i, j| {
            self.get(positions[i], positions[j])
        })
    }

    /// Largest `m[i][k] − m[i][j] − m[j][k]` over all triples with a finite
    /// right-hand side; 0 when the triangle inequality holds everywhere.
    pub fn triangle_violation(&self) -> f64 {
        let n = self.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let ri = self.row(i);
                let mut worst: f64 = 0.0;
                for (j, &mij) in ri.iter().enumerate() {
                    if !mij.is_finite() {
                        continue;
                    }
                    let rj = self.row(j);
                    for (k, &mjk) in rj.iter().enumerate() {
                        let excess = ri[k] - (mij + mjk);
                        if excess > worst {
                            worst = excess;
                        }
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest `|m[i][j] − m[j][i]|`.
    pub fn symmetry_violation(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (self.get(i, j), self.get(j, i));
                if a.is_finite() || b.is_finite() {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }

    pub fn min_entry(&self) -> f64 {
        self.m.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest finite entry, or 0 for an empty matrix.
    pub fn max_finite_entry(&self) -> f64 {
        self.m
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_violation_detects_shortcut() {
        let m = SemiMetric::new(vec![0, 1, 2], vec![0., 1., 5., 1., 0., 1., 5., 1., 0.], true)
            .unwrap();
        assert_eq!(m.triangle_violation(), 3.0);
        let ok = SemiMetric::new(vec![0, 1, 2], vec![0., 1., 2., 1., 0., 1., 2., 1., 0.], true)
            .unwrap();
        assert_eq!(ok.triangle_violation(), 0.0);
    }

    #[test]
    fn unreachable_entries_are_skipped_as_intermediates() {
        let m = SemiMetric::new(vec![0, 1], vec![0., UNREACHABLE, 1., 0.], false).unwrap();
        assert_eq!(m.triangle_violation(), 0.0);
        assert!(!m.all_finite());
        assert_eq!(m.max_finite_entry(), 1.0);
    }

    #[test]
    fn symmetrize_and_restrict() {
        let m = SemiMetric::new(vec![4, 7], vec![0., 2., 3., 0.], false).unwrap();
        let s = m.symmetrized();
        assert_eq!(s.get(0, 1), 5.0);
        assert_eq!(s.symmetry_violation(), 0.0);
        let r = m.restrict(&[1]);
        assert_eq!(r.point_ids(), &[7]);
        assert_eq!(r.get(0, 0), 0.0);
        assert!(SemiMetric::new(vec![0], vec![0., 1.], false).is_err());
    }
}
