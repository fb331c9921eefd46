//! Flows of vector fields on the torus, ε-chain graphs and chain recurrence.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::grid::{torus_distance, wrap_unit, Coords, GridTorus};
use crate::model::VectorField;

/// Time-`dt` image of `x` under the flow of `field`, by `substeps` classical
/// Runge–Kutta steps, wrapped to `[0, 1)^d`.
pub fn integrate_flow(field: &VectorField, x: &[f64], dt: f64, substeps: usize) -> Result<Coords> {
    if !(dt > 0.0) || substeps == 0 {
        return Err(invalid(format!(
            "need dt > 0 and at least one substep, got dt {dt}, substeps {substeps}"
        )));
    }
    if x.len() != field.dim() {
        return Err(crate::Error::DimensionMismatch {
            expected: field.dim(),
            got: x.len(),
        });
    }
    let h = dt / substeps as f64;
    let mut y = Coords::from_slice(x);
    for _ in 0..substeps {
        let k1 = field.eval(&y);
        let k2 = field.eval(&y.axpy(0.5 * h, &k1));
        let k3 = field.eval(&y.axpy(0.5 * h, &k2));
        let k4 = field.eval(&y.axpy(h, &k3));
        for i in 0..y.dim() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(crate::Error::NonFinite(format!("flow image of {x:?}")));
    }
    y.iter_mut().for_each(|v| *v = wrap_unit(*v));
    Ok(y)
}

/// Edges `x → y` whenever the time-`dt` image of `x` lies within `eps` of `y`.
#[derive(Clone, Debug)]
pub struct ChainGraph {
    grid: GridTorus,
    dt: f64,
    eps: f64,
    images: Vec<Coords>,
    edges: Vec<Vec<usize>>,
}

impl ChainGraph {
    pub fn grid(&self) -> &GridTorus {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Sorted successors of `x`.
    pub fn successors(&self, x: usize) -> &[usize] {
        &self.edges[x]
    }

    pub fn image(&self, x: usize) -> &Coords {
        &self.images[x]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }
}

/// Grid points within `eps` of `p`.
fn cells_near(grid: &GridTorus, p: &[f64], eps: f64) -> Vec<usize> {
    let n = grid.n_per_axis() as i64;
    let s = grid.spacing();
    let reach = ((eps / s).ceil() as i64 + 1).min(n / 2);
    let centre = grid.cells(grid.nearest_index(p));
    let mut out = Vec::new();
    let mut visit = |cells: &[i64]| {
        let idx = grid.index_of_cells(cells);
        if torus_distance(&grid.coords(idx), p) <= eps {
            out.push(idx);
        }
    };
    match grid.dim() {
        1 => {
            for a in -reach..=reach {
                visit(&[centre[0] as i64 + a]);
            }
        }
        _ => {
            for b in -reach..=reach {
                for a in -reach..=reach {
                    visit(&[centre[0] as i64 + a, centre[1] as i64 + b]);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub fn chain_graph(
    field: &VectorField,
    grid: GridTorus,
    dt: f64,
    eps: f64,
    substeps: usize,
) -> Result<ChainGraph> {
    if field.dim() != grid.dim() {
        return Err(crate::Error::DimensionMismatch {
            expected: grid.dim(),
            got: field.dim(),
        });
    }
    let half_diagonal = 0.5 * grid.spacing() * (grid.dim() as f64).sqrt();
    if !(eps >= half_diagonal * (1.0 - 1e-12)) {
        return Err(invalid(format!(
            "eps {eps} is below the half-cell diagonal {half_diagonal}"
        )));
    }
    let images: Vec<Coords> = (0..grid.point_count())
        .into_par_iter()
        .map(|x| integrate_flow(field, &grid.coords(x), dt, substeps))
        .collect::<Result<_>>()?;
    let edges = images
        .par_iter()
        .map(|p| cells_near(&grid, p, eps))
        .collect();
    Ok(ChainGraph {
        grid,
        dt,
        eps,
        images,
        edges,
    })
}

/// Sorted nodes whose strongly connected component carries an edge.
pub fn chain_recurrent_set(g: &ChainGraph) -> Vec<usize> {
    let n = g.edges.len();
    let mut dg = DiGraph::<(), ()>::with_capacity(n, g.edge_count());
    let ids: Vec<_> = (0..n).map(|_| dg.add_node(())).collect();
    let mut self_loop = vec![false; n];
    for (x, succ) in g.edges.iter().enumerate() {
        for &y in succ {
            if x == y {
                self_loop[x] = true;
            } else {
                dg.add_edge(ids[x], ids[y], ());
            }
        }
    }
    let mut out: Vec<usize> = tarjan_scc(&dg)
        .into_iter()
        .filter(|c| c.len() > 1 || self_loop[c[0].index()])
        .flatten()
        .map(|i| i.index())
        .collect();
    out.sort_unstable();
    out
}

/// Nodes of `set` whose flow image is farther than `eps` from every node of
/// `set`; empty for a chain-recurrent set.
pub fn flow_invariance_violations(g: &ChainGraph, set: &[usize]) -> Vec<usize> {
    let mut member = vec![false; g.edges.len()];
    set.iter().for_each(|&x| member[x] = true);
    set.iter()
        .copied()
        .filter(|&x| !g.edges[x].iter().any(|&y| member[y]))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SetComparison {
    pub hausdorff_distance: f64,
    pub a_only: Vec<usize>,
    pub b_only: Vec<usize>,
}

/// Hausdorff distance in the torus metric between two sets of grid indices.
pub fn compare_sets(a: &[usize], b: &[usize], grid: &GridTorus) -> Result<SetComparison> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("set comparison needs two nonempty sets"));
    }
    let directed = |from: &[usize], to: &[usize]| {
        from.par_iter()
            .map(|&x| {
                to.iter()
                    .map(|&y| grid.distance(x, y))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    };
    let hausdorff_distance = directed(a, b).max(directed(b, a));
    let only = |from: &[usize], other: &[usize]| -> Vec<usize> {
        let mut out: Vec<usize> = from
            .iter()
            .copied()
            .filter(|x| !other.contains(x))
            .collect();
        out.sort_unstable();
        out
    };
    Ok(SetComparison {
        hausdorff_distance,
        a_only: only(a, b),
        b_only: only(b, a),
    })
}

/// Projected Aubry set against a chain-recurrent set.
pub fn compare_aubry_chain(
    aubry: &crate::aubry::AubrySet,
    chain: &[usize],
    grid: &GridTorus,
) -> Result<SetComparison> {
    compare_sets(&aubry.indices, chain, grid)
}

/// Largest oscillation `max(u − w) − min(u − w)` over pairs of solutions.
pub fn weak_kam_constancy_check(solutions: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = solutions.first() else {
        return Err(invalid("no solutions given"));
    };
    if let Some(bad) = solutions.iter().find(|u| u.len() != first.len()) {
        return Err(crate::Error::DimensionMismatch {
            expected: first.len(),
            got: bad.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for (i, u) in solutions.iter().enumerate() {
        for w in &solutions[i + 1..] {
            let (lo, hi) = u
                .iter()
                .zip(w)
                .map(|(a, b)| a - b)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
            worst = worst.max(hi - lo);
        }
    }
    Ok(worst)
}
