//! One-step action kernels and the min-plus primitives shared by the solvers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{wrap_unit, Coords, GridTorus};
use crate::model::Lagrangian;
use crate::semimetric::{SemiMetric, UNREACHABLE};

/// Row-sparse min-plus matrix. Missing entries are unreachable.
///
/// Rows are stored twice: by source (`out_*`) and by target (`in_*`),
/// each sorted by the other endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    n: usize,
    out_ptr: Vec<usize>,
    out_idx: Vec<u32>,
    out_cost: Vec<f64>,
    in_ptr: Vec<usize>,
    in_idx: Vec<u32>,
    in_cost: Vec<f64>,
}

impl CostMatrix {
    /// `rows[x]` lists `(y, cost[x][y])`. Infinite costs are dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        if n > u32::MAX as usize {
            return Err(invalid("too many nodes"));
        }
        let mut out_ptr = Vec::with_capacity(n + 1);
        let mut out_idx = Vec::new();
        let mut out_cost = Vec::new();
        out_ptr.push(0);
        for (x, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(_, c)| c != UNREACHABLE);
            row.sort_by_key(|&(y, _)| y);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(invalid(format!("duplicate entry ({x}, {})", w[0].0)));
                }
            }
            for (y, c) in row {
                if y >= n {
                    return Err(invalid(format!("entry ({x}, {y}) outside {n} nodes")));
                }
                if !c.is_finite() {
                    return Err(Error::NonFinite(format!("cost[{x}][{y}] = {c}")));
                }
                out_idx.push(y as u32);
                out_cost.push(c);
            }
            out_ptr.push(out_idx.len());
        }

        let mut in_count = vec![0usize; n + 1];
        for &y in &out_idx {
            in_count[y as usize + 1] += 1;
        }
        for i in 0..n {
            in_count[i + 1] += in_count[i];
        }
        let in_ptr = in_count.clone();
        let mut fill = in_count;
        let mut in_idx = vec![0u32; out_idx.len()];
        let mut in_cost = vec![0.0; out_idx.len()];
        for x in 0..n {
            for e in out_ptr[x]..out_ptr[x + 1] {
                let y = out_idx[e] as usize;
                in_idx[fill[y]] = x as u32;
                in_cost[fill[y]] = out_cost[e];
                fill[y] += 1;
            }
        }
        Ok(Self {
            n,
            out_ptr,
            out_idx,
            out_cost,
            in_ptr,
            in_idx,
            in_cost,
        })
    }

    /// Dense input; `UNREACHABLE` marks missing entries.
    pub fn from_dense(m: &[Vec<f64>]) -> Result<Self> {
        let n = m.len();
        if m.iter().any(|r| r.len() != n) {
            return Err(invalid("dense cost matrix must be square"));
        }
        Self::from_rows(
            m.iter()
                .map(|r| r.iter().copied().enumerate().collect())
                .collect(),
        )
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out_idx.len()
    }

    /// `(y, cost[x][y])` for finite entries of row `x`.
    pub fn out_edges(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.out_ptr[x]..self.out_ptr[x + 1];
        self.out_idx[r.clone()]
            .iter()
            .zip(&self.out_cost[r])
            .map(|(&y, &c)| (y as usize, c))
    }

    /// `(x, cost[x][y])` for finite entries of column `y`.
    pub fn in_edges(&self, y: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.in_ptr[y]..self.in_ptr[y + 1];
        self.in_idx[r.clone()]
            .iter()
            .zip(&self.in_cost[r])
            .map(|(&x, &c)| (x as usize, c))
    }

    pub fn in_degree(&self, y: usize) -> usize {
        self.in_ptr[y + 1] - self.in_ptr[y]
    }

    pub fn out_degree(&self, x: usize) -> usize {
        self.out_ptr[x + 1] - self.out_ptr[x]
    }

    /// Raw in-edge slices of column `y`, used by hot loops.
    pub(crate) fn in_slices(&self, y: usize) -> (&[u32], &[f64]) {
        let r = self.in_ptr[y]..self.in_ptr[y + 1];
        (&self.in_idx[r.clone()], &self.in_cost[r])
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        let r = self.out_ptr[x]..self.out_ptr[x + 1];
        match self.out_idx[r.clone()].binary_search(&(y as u32)) {
            Ok(p) => self.out_cost[r.start + p],
            Err(_) => UNREACHABLE,
        }
    }

    /// Same sparsity with every finite cost increased by `s`.
    pub fn shifted(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.out_cost.iter_mut().for_each(|c| *c += s);
        out.in_cost.iter_mut().for_each(|c| *c += s);
        out
    }

    pub fn max_abs_cost(&self) -> f64 {
        self.out_cost.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// Nodes whose row has no finite entry.
    pub fn stranded_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&x| self.out_degree(x) == 0).collect()
    }

    /// `out(y) = min_x u(x) + cost[x][y] + shift`.
    pub fn apply_minus(&self, u: &[f64], shift: f64) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        (0..self.n)
            .into_par_iter()
            .map(|y| {
                let (idx, cost) = self.in_slices(y);
                let mut best = UNREACHABLE;
                for (&x, &c) in idx.iter().zip(cost) {
                    let v = u[x as usize] + c;
                    if v < best {
                        best = v;
                    }
                }
                best + shift
            })
            .collect()
    }

    /// `out(x) = max_y u(y) − cost[x][y] − shift`.
    pub fn apply_plus(&self, u: &[f64], shift: f64) -> Vec<f64> {
        assert_eq!(u.len(), self.n);
        (0..self.n)
            .into_par_iter()
            .map(|x| {
                let mut best = f64::NEG_INFINITY;
                for (y, c) in self.out_edges(x) {
                    let v = u[y] - c;
                    if v > best {
                        best = v;
                    }
                }
                best - shift
            })
            .collect()
    }

    /// Elementwise min over `n ∈ [n_min, n_max]` of the n-th min-plus power
    /// of `cost + shift`. Dense output over all nodes.
    pub fn power_min(&self, shift: f64, n_min: usize, n_max: usize) -> Result<SemiMetric> {
        if n_min < 1 || n_max < n_min {
            return Err(invalid(format!(
                "need 1 <= n_min <= n_max, got {n_min}..{n_max}"
            )));
        }
        let n = self.n;
        let shifted = self.shifted(shift);
        let mut m = vec![UNREACHABLE; n * n];
        m.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(x, out)| {
                let mut cur = vec![UNREACHABLE; n];
                for (y, c) in shifted.out_edges(x) {
                    cur[y] = c;
                }
                for k in 1..=n_max {
                    if k > 1 {
                        cur = shifted.relax_row(&cur);
                    }
                    if k >= n_min {
                        for (o, &c) in out.iter_mut().zip(&cur) {
                            if c < *o {
                                *o = c;
                            }
                        }
                    }
                }
            });
        SemiMetric::new((0..n).collect(), m, false)
    }

    /// `out(y) = min_x r(x) + cost[x][y]`, sequential.
    fn relax_row(&self, r: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|y| {
                let (idx, cost) = self.in_slices(y);
                idx.iter()
                    .zip(cost)
                    .map(|(&x, &c)| r[x as usize] + c)
                    .fold(UNREACHABLE, f64::min)
            })
            .collect()
    }
}

/// Discretized one-step action `cost[x][y] ≈ h_τ(x, y)` on a torus grid.
#[derive(Clone, Debug)]
pub struct ActionKernel {
    grid: GridTorus,
    tau: f64,
    stencil_radius: f64,
    costs: CostMatrix,
}

/// Sidecar metadata of a kernel dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub dim: usize,
    pub n_per_axis: usize,
    pub tau: f64,
    pub stencil_radius: f64,
}

impl ActionKernel {
    /// Straight-segment midpoint quadrature: for every `y` with
    /// `‖wrap(y − x)‖ ≤ stencil_radius`,
    /// `cost[x][y] = τ·L(x + Δ/2, Δ/τ)` with `Δ = wrap(y − x)`.
    pub fn build(l: &Lagrangian, grid: GridTorus, tau: f64, stencil_radius: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        if !(stencil_radius >= grid.spacing()) {
            return Err(invalid(format!(
                "stencil radius {stencil_radius} below spacing {}",
                grid.spacing()
            )));
        }
        if l.dim() != grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: l.dim(),
            });
        }
        let offsets = stencil_offsets(&grid, stencil_radius);
        let s = grid.spacing();
        let rows: Result<Vec<Vec<(usize, f64)>>> = (0..grid.point_count())
            .into_par_iter()
            .map(|x| {
                let cx = grid.cells(x);
                let px = grid.coords(x);
                let mut row = Vec::with_capacity(offsets.len());
                for off in &offsets {
                    let mut target = [0i64; 2];
                    let mut delta = Coords::zeros(grid.dim());
                    let mut mid = Coords::zeros(grid.dim());
                    for a in 0..grid.dim() {
                        target[a] = cx[a] as i64 + off[a];
                        delta[a] = off[a] as f64 * s;
                        mid[a] = wrap_unit(px[a] + 0.5 * delta[a]);
                    }
                    let y = grid.index_of_cells(&target[..grid.dim()]);
                    let v = delta.scale(1.0 / tau);
                    let c = tau * l.eval(&mid, &v);
                    if !c.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "L({:?}, {:?}) on edge {x} -> {y}",
                            &*mid, &*v
                        )));
                    }
                    row.push((y, c));
                }
                Ok(row)
            })
            .collect();
        Ok(Self {
            grid,
            tau,
            stencil_radius,
            costs: CostMatrix::from_rows(rows?)?,
        })
    }

    /// Wrap an existing cost matrix, e.g. one loaded from disk.
    pub fn from_parts(
        grid: GridTorus,
        tau: f64,
        stencil_radius: f64,
        costs: CostMatrix,
    ) -> Result<Self> {
        if costs.node_count() != grid.point_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.point_count(),
                got: costs.node_count(),
            });
        }
        if !(tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            grid,
            tau,
            stencil_radius,
            costs,
        })
    }

    pub fn grid(&self) -> &GridTorus {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn stencil_radius(&self) -> f64 {
        self.stencil_radius
    }

    pub fn costs(&self) -> &CostMatrix {
        &self.costs
    }

    pub fn meta(&self) -> KernelMeta {
        KernelMeta {
            dim: self.grid.dim(),
            n_per_axis: self.grid.n_per_axis(),
            tau: self.tau,
            stencil_radius: self.stencil_radius,
        }
    }

    /// Writes `<stem>.csv` (header `i,j,cost`, finite entries only) and the
    /// `<stem>.json` sidecar. Costs use shortest round-trip formatting.
    pub fn dump(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
        writeln!(w, "i,j,cost")?;
        for x in 0..self.costs.node_count() {
            for (y, c) in self.costs.out_edges(x) {
                writeln!(w, "{x},{y},{c:?}")?;
            }
        }
        w.flush()?;
        let meta = File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(meta, &self.meta())?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: KernelMeta =
            serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
        let grid = GridTorus::new(meta.dim, meta.n_per_axis)?;
        let mut rows = vec![Vec::new(); grid.point_count()];
        let mut rdr = csv::Reader::from_path(dir.join(format!("{stem}.csv")))?;
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["i", "j", "cost"] {
            return Err(Error::Parse("kernel csv header must be i,j,cost".into()));
        }
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Parse(format!("kernel csv row {}: bad {what}", line + 2));
            let i: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("i"))?;
            let j: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("j"))?;
            let c: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| parse_err("cost"))?;
            if i >= rows.len() {
                return Err(parse_err("i"));
            }
            rows[i].push((j, c));
        }
        Self::from_parts(grid, meta.tau, meta.stencil_radius, CostMatrix::from_rows(rows)?)
    }
}

/// Integer cell offsets with minimal-image components and Euclidean length
/// at most `radius`, in lexicographic order.
pub fn stencil_offsets(grid: &GridTorus, radius: f64) -> Vec<[i64; 2]> {
    let n = grid.n_per_axis() as i64;
    let s = grid.spacing();
    let reach = ((radius / s).floor() as i64).min(n / 2);
    let range: Vec<i64> = (-reach..=reach)
        .filter(|&o| grid.wrap_cell_offset(o) == o)
        .collect();
    let fits = |len2: i64| (len2 as f64).sqrt() * s <= radius * (1.0 + 1e-12);
    let mut out = Vec::new();
    if grid.dim() == 1 {
        for &a in &range {
            if fits(a * a) {
                out.push([a, 0]);
            }
        }
    } else {
        for &b in &range {
            for &a in &range {
                if fits(a * a + b * b) {
                    out.push([a, b]);
                }
            }
        }
    }
    out
}
