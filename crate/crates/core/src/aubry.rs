//! Peierls barrier, projected Aubry set, Mather semi-distance and quotient.
//!
//! With `A = cost + cτ` the minimum cycle mean of `A` is zero. Nodes on
//! zero-weight cycles are *critical*, and the limit inferior of the min-plus
//! powers of `A` is
//!
//! ```text
//! h(x, y) = min over critical k of A*(x, k) + A*(k, y)
//! ```
//!
//! where `A*` is the shortest-path closure with zeros on the diagonal.
//! Critical nodes joined by zero-weight cycles give identical terms, so one
//! representative per critical class suffices. The barrier is stored in this
//! factored form and expanded on demand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::Serialize;

use crate::critical::{check_dominated, CriticalValue};
use crate::error::{invalid, Error, Result};
use crate::kernel::{ActionKernel, CostMatrix};
use crate::semimetric::{SemiMetric, UNREACHABLE};

/// Reduced costs at or below this multiple of the cost scale count as zero
/// when tracing zero-weight cycles.
const TIGHT_RELATIVE: f64 = 1e-10;

/// Default Aubry threshold on `h(x, x)`.
pub const DEFAULT_ETA: f64 = 1e-9;

/// Shortest distances from a virtual source joined to every node at zero
/// cost, under `costs + shift`. Bellman–Ford sweeps stop once stable or
/// after one sweep per node.
pub fn potentials(costs: &CostMatrix, shift: f64) -> Vec<f64> {
    let n = costs.node_count();
    let scale = costs.max_abs_cost().max(shift.abs()).max(1.0);
    let mut pi = vec![0.0; n];
    for _ in 0..n {
        let next = costs.apply_minus(&pi, shift);
        let mut moved = false;
        for (p, q) in pi.iter_mut().zip(next) {
            if q < *p - 1e-15 * scale {
                *p = q;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    pi
}

/// Zero-weight cycle structure of `cost + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalGraph {
    /// Sorted nodes lying on zero-weight cycles.
    pub nodes: Vec<usize>,
    /// Strongly connected classes of those nodes, each sorted, ordered by
    /// smallest member.
    pub classes: Vec<Vec<usize>>,
    pub potentials: Vec<f64>,
}

pub fn critical_graph(costs: &CostMatrix, shift: f64) -> CriticalGraph {
    let n = costs.node_count();
    let pi = potentials(costs, shift);
    let tol = TIGHT_RELATIVE * costs.max_abs_cost().max(shift.abs()).max(1.0);
    let mut g = DiGraph::<(), ()>::with_capacity(n, n);
    let ids: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    let mut self_loop = vec![false; n];
    for x in 0..n {
        for (y, c) in costs.out_edges(x) {
            if c + shift + pi[x] - pi[y] <= tol {
                if x == y {
                    self_loop[x] = true;
                } else {
                    g.add_edge(ids[x], ids[y], ());
                }
            }
        }
    }
    let mut classes: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|comp| {
            let mut c: Vec<usize> = comp.into_iter().map(|i| i.index()).collect();
            c.sort_unstable();
            c
        })
        .filter(|c| c.len() > 1 || self_loop[c[0]])
        .collect();
    classes.sort_by_key(|c| c[0]);
    let mut nodes: Vec<usize> = classes.iter().flatten().copied().collect();
    nodes.sort_unstable();
    CriticalGraph {
        nodes,
        classes,
        potentials: pi,
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra on reduced costs `max(0, c + shift + π(u) − π(v))`, returning
/// true path weights under `c + shift`. `forward` follows out-edges from
/// `source`; otherwise in-edges, giving distances *to* `source`.
fn closure_from(costs: &CostMatrix, shift: f64, pi: &[f64], source: usize, forward: bool) -> Vec<f64> {
    let n = costs.node_count();
    let mut dist = vec![UNREACHABLE; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem(0.0, source));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        let mut relax = |v: usize, reduced: f64| {
            let nd = d + reduced.max(0.0);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem(nd, v));
            }
        };
        if forward {
            for (v, c) in costs.out_edges(u) {
                relax(v, c + shift + pi[u] - pi[v]);
            }
        } else {
            for (v, c) in costs.in_edges(u) {
                relax(v, c + shift + pi[v] - pi[u]);
            }
        }
    }
    for (v, d) in dist.iter_mut().enumerate() {
        if *d != UNREACHABLE {
            *d = if forward {
                *d - pi[source] + pi[v]
            } else {
                *d - pi[v] + pi[source]
            };
        }
    }
    dist
}

/// Peierls barrier in factored form.
#[derive(Clone, Debug)]
pub struct PeierlsBarrier {
    n: usize,
    critical: CriticalGraph,
    representatives: Vec<usize>,
    /// `to_rep[x * r + k] = A*(x, rep_k)`.
    to_rep: Vec<f64>,
    /// `from_rep[k * n + y] = A*(rep_k, y)`.
    from_rep: Vec<f64>,
    shift: f64,
}

impl PeierlsBarrier {
    pub fn point_count(&self) -> usize {
        self.n
    }

    pub fn critical(&self) -> &CriticalGraph {
        &self.critical
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    /// The per-step shift `cτ` the barrier was built with.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn value(&self, x: usize, y: usize) -> f64 {
        let r = self.representatives.len();
        let to = &self.to_rep[x * r..(x + 1) * r];
        to.iter()
            .enumerate()
            .map(|(k, a)| a + self.from_rep[k * self.n + y])
            .fold(UNREACHABLE, f64::min)
    }

    /// `y ↦ h(x, y)`.
    pub fn row(&self, x: usize) -> Vec<f64> {
        let r = self.representatives.len();
        let mut out = vec![UNREACHABLE; self.n];
        for k in 0..r {
            let a = self.to_rep[x * r + k];
            if a == UNREACHABLE {
                continue;
            }
            let from = &self.from_rep[k * self.n..(k + 1) * self.n];
            for (o, b) in out.iter_mut().zip(from) {
                let v = a + b;
                if v < *o {
                    *o = v;
                }
            }
        }
        out
    }

    /// `x ↦ h(x, y)`.
    pub fn column(&self, y: usize) -> Vec<f64> {
        (0..self.n).map(|x| self.value(x, y)).collect()
    }

    /// `x ↦ h(x, x)`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).into_par_iter().map(|x| self.value(x, x)).collect()
    }

    /// `h(x, y) + h(y, x)`.
    pub fn mather_delta(&self, x: usize, y: usize) -> f64 {
        self.value(x, y) + self.value(y, x)
    }

    /// Dense barrier restricted to `ids`.
    pub fn submatrix(&self, ids: &[usize]) -> SemiMetric {
        SemiMetric::from_fn(ids.to_vec(), false, |i, j| self.value(ids[i], ids[j]))
    }

    /// Dense barrier over all grid points.
    pub fn full(&self) -> SemiMetric {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        m.par_chunks_mut(n).enumerate().for_each(|(x, row)| {
            row.copy_from_slice(&self.row(x));
        });
        SemiMetric::new((0..n).collect(), m, false).expect("square by construction")
    }
}

/// Limit inferior of the min-plus powers of `cost + cτ`.
pub fn peierls_barrier(kernel: &ActionKernel, cv: &CriticalValue) -> Result<PeierlsBarrier> {
    barrier_from_costs(kernel.costs(), cv.shift())
}

/// As [`peierls_barrier`] for a bare cost matrix and per-step shift.
pub fn barrier_from_costs(costs: &CostMatrix, shift: f64) -> Result<PeierlsBarrier> {
    let n = costs.node_count();
    let critical = critical_graph(costs, shift);
    if critical.nodes.is_empty() {
        return Err(Error::Degenerate(
            "no zero-weight cycle: the shift is not the critical value".into(),
        ));
    }
    let representatives: Vec<usize> = critical.classes.iter().map(|c| c[0]).collect();
    let r = representatives.len();
    let pi = &critical.potentials;
    let forward: Vec<Vec<f64>> = representatives
        .par_iter()
        .map(|&k| closure_from(costs, shift, pi, k, true))
        .collect();
    let backward: Vec<Vec<f64>> = representatives
        .par_iter()
        .map(|&k| closure_from(costs, shift, pi, k, false))
        .collect();

    let mut unreachable: Vec<usize> = (0..n)
        .filter(|&x| {
            backward.iter().all(|b| b[x] == UNREACHABLE) || forward.iter().all(|f| f[x] == UNREACHABLE)
        })
        .collect();
    if !unreachable.is_empty() {
        unreachable.truncate(32);
        return Err(Error::Stranded(unreachable));
    }

    let mut to_rep = vec![UNREACHABLE; n * r];
    for (k, b) in backward.iter().enumerate() {
        for x in 0..n {
            to_rep[x * r + k] = b[x];
        }
    }
    let from_rep = forward.concat();
    Ok(PeierlsBarrier {
        n,
        critical,
        representatives,
        to_rep,
        from_rep,
        shift,
    })
}

/// Largest gap between the barrier and the elementwise minimum of the
/// min-plus powers `n ∈ [horizon, 2·horizon]` of `cost + cτ`. Dense; meant
/// for small grids.
pub fn power_window_gap(
    kernel: &ActionKernel,
    barrier: &PeierlsBarrier,
    horizon: usize,
) -> Result<f64> {
    let p = kernel
        .costs()
        .power_min(barrier.shift(), horizon, 2 * horizon)?;
    let n = barrier.point_count();
    let gap = (0..n)
        .into_par_iter()
        .map(|x| {
            barrier
                .row(x)
                .iter()
                .zip(p.row(x))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(gap)
}

/// Self-consistency measurements of a barrier.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierDiagnostics {
    /// Largest `h(x, z) − h(x, y) − h(y, z)` over the checked triples.
    pub triangle_violation: f64,
    /// Number of intermediate points `y` used in the triangle check.
    pub triangle_intermediates: usize,
    /// Largest domination defect over the functions `h(x, ·)`.
    pub column_domination: f64,
    /// Largest `|T⁻h(x, ·) + cτ − h(x, ·)|`.
    pub column_fixed_point: f64,
    pub min_diagonal: f64,
}

/// Checks every `h(x, ·)` for domination and the fixed-point property, and
/// the triangle inequality for all `x, z` with intermediates `y` drawn from
/// the critical representatives plus every `stride`-th point (all points
/// when `stride` is 1).
pub fn barrier_diagnostics(
    kernel: &ActionKernel,
    barrier: &PeierlsBarrier,
    c: f64,
    stride: usize,
) -> BarrierDiagnostics {
    let n = barrier.point_count();
    let mut mids: Vec<usize> = (0..n).step_by(stride.max(1)).collect();
    mids.extend_from_slice(barrier.representatives());
    mids.sort_unstable();
    mids.dedup();
    let mid_rows: Vec<Vec<f64>> = mids.par_iter().map(|&y| barrier.row(y)).collect();
    let shift = c * kernel.tau();

    let (tri, dom, fix) = (0..n)
        .into_par_iter()
        .map(|x| {
            let row = barrier.row(x);
            let mut tri: f64 = 0.0;
            for (yi, &y) in mids.iter().enumerate() {
                let hxy = row[y];
                for (z, &hyz) in mid_rows[yi].iter().enumerate() {
                    tri = tri.max(row[z] - hxy - hyz);
                }
            }
            let dom = check_dominated(&row, kernel, c).max_violation;
            let next = kernel.costs().apply_minus(&row, shift);
            let fix = next
                .iter()
                .zip(&row)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            (tri, dom, fix)
        })
        .reduce(
            || (0.0, f64::NEG_INFINITY, 0.0),
            |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)),
        );
    BarrierDiagnostics {
        triangle_violation: tri,
        triangle_intermediates: mids.len(),
        column_domination: dom,
        column_fixed_point: fix,
        min_diagonal: barrier.diagonal().into_iter().fold(f64::INFINITY, f64::min),
    }
}

/// Discrete surrogate for the classification of Aubry points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AubryLabel {
    Stationary,
    Periodic,
    Other,
}

impl AubryLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            AubryLabel::Stationary => "stationary",
            AubryLabel::Periodic => "periodic",
            AubryLabel::Other => "other",
        }
    }
}

/// Grid points whose self-barrier is at most `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AubrySet {
    pub indices: Vec<usize>,
    pub self_barrier: Vec<f64>,
    pub labels: Vec<AubryLabel>,
    /// Minimizing one-step successor of each index.
    pub successors: Vec<usize>,
    pub threshold: f64,
}

impl AubrySet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn aubry_set(kernel: &ActionKernel, barrier: &PeierlsBarrier, eta: f64) -> Result<AubrySet> {
    let diag = barrier.diagonal();
    let indices: Vec<usize> = (0..diag.len()).filter(|&x| diag[x] <= eta).collect();
    if indices.is_empty() {
        let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::Degenerate(format!(
            "empty Aubry set at eta {eta:e} (smallest self-barrier {min:e}); \
             review eta or the grid"
        )));
    }
    let (labels, successors) = classify_aubry(kernel, barrier, &indices);
    Ok(AubrySet {
        self_barrier: indices.iter().map(|&x| diag[x]).collect(),
        indices,
        labels,
        successors,
        threshold: eta,
    })
}

/// `argmin_y cost[x][y] + cτ + h(y, x)`, preferring `x` itself on ties and
/// then the smallest index.
pub fn minimizing_successor(kernel: &ActionKernel, barrier: &PeierlsBarrier, x: usize) -> usize {
    let shift = barrier.shift();
    let tie = 1e-12 * kernel.costs().max_abs_cost().max(1.0);
    let scores: Vec<(usize, f64)> = kernel
        .costs()
        .out_edges(x)
        .map(|(y, c)| (y, c + shift + barrier.value(y, x)))
        .collect();
    let best = scores.iter().map(|s| s.1).fold(UNREACHABLE, f64::min);
    if let Some(&(_, stay)) = scores.iter().find(|s| s.0 == x) {
        if stay <= best + tie {
            return x;
        }
    }
    scores
        .iter()
        .find(|s| s.1 <= best + tie)
        .map(|s| s.0)
        .unwrap_or(x)
}

/// Labels and successors for the given Aubry indices.
///
/// Stationary when the successor is the point itself; periodic when the
/// successor chain returns within `point_count` steps through distinct
/// Aubry points; other otherwise.
pub fn classify_aubry(
    kernel: &ActionKernel,
    barrier: &PeierlsBarrier,
    indices: &[usize],
) -> (Vec<AubryLabel>, Vec<usize>) {
    let n = barrier.point_count();
    let successors: Vec<usize> = indices
        .par_iter()
        .map(|&x| minimizing_successor(kernel, barrier, x))
        .collect();
    let mut succ_of = vec![usize::MAX; n];
    for (&x, &s) in indices.iter().zip(&successors) {
        succ_of[x] = s;
    }
    let labels = indices
        .iter()
        .zip(&successors)
        .map(|(&x, &s)| {
            if s == x {
                return AubryLabel::Stationary;
            }
            let mut visited = vec![false; n];
            visited[x] = true;
            let mut cur = s;
            for _ in 0..n {
                if cur == x {
                    return AubryLabel::Periodic;
                }
                if visited[cur] || succ_of[cur] == usize::MAX {
                    return AubryLabel::Other;
                }
                visited[cur] = true;
                cur = succ_of[cur];
            }
            AubryLabel::Other
        })
        .collect();
    (labels, successors)
}

/// `δ(x, y) = h(x, y) + h(y, x)`.
pub fn mather_delta(h: &SemiMetric) -> SemiMetric {
    h.symmetrized()
}

/// Aubry classes after merging pairs with `δ ≤ merge_threshold`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuotientPartition {
    /// Grid indices per class, each sorted, ordered by representative.
    pub classes: Vec<Vec<usize>>,
    /// Smallest index of each class.
    pub representatives: Vec<usize>,
    pub merge_threshold: f64,
}

impl QuotientPartition {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

/// Union-find merge over the points of a symmetric `delta`.
pub fn quotient(delta: &SemiMetric, merge_threshold: f64) -> Result<QuotientPartition> {
    if !delta.is_symmetric() {
        return Err(invalid("quotient needs a symmetric semi-metric"));
    }
    let n = delta.len();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if delta.get(i, j) <= merge_threshold {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, root) in labels.into_iter().enumerate() {
        groups.entry(root).or_default().push(delta.point_ids()[i]);
    }
    let mut classes: Vec<Vec<usize>> = groups
        .into_values()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    Ok(QuotientPartition {
        representatives: classes.iter().map(|c| c[0]).collect(),
        classes,
        merge_threshold,
    })
}

/// Largest δ between two members of one class, and smallest δ between
/// members of different classes (infinite with a single class).
pub fn class_spread(delta: &SemiMetric, q: &QuotientPartition) -> (f64, f64) {
    let mut class_of = std::collections::HashMap::new();
    for (ci, c) in q.classes.iter().enumerate() {
        for &x in c {
            class_of.insert(x, ci);
        }
    }
    let ids = delta.point_ids();
    let mut within: f64 = 0.0;
    let mut across = f64::INFINITY;
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            let d = delta.get(i, j);
            if class_of.get(&ids[i]) == class_of.get(&ids[j]) {
                within = within.max(d);
            } else {
                across = across.min(d);
            }
        }
    }
    (within, across)
}

/// Outcome of testing `δ(x, y) = max (u₁ − u₂)(y) − (u₁ − u₂)(x)` over
/// weak KAM pairs on Aubry points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepresentationReport {
    /// Largest `|δ(x, y) − [(u₁ − u₂)(y) − (u₁ − u₂)(x)]|` with
    /// `u₁ = h(x, ·)` and `u₂ = h(y, ·)`.
    pub max_residual: f64,
    /// Largest excess of `(u − w)(y) − (u − w)(x)` over `δ(x, y)` for pairs
    /// from `others`; at most rounding when the formula holds.
    pub max_excess_others: f64,
    pub pairs: usize,
}

pub fn representation_check(
    barrier: &PeierlsBarrier,
    aubry: &AubrySet,
    others: &[Vec<f64>],
) -> RepresentationReport {
    let ids = &aubry.indices;
    let rows: Vec<Vec<f64>> = ids.par_iter().map(|&x| barrier.row(x)).collect();
    let mut max_residual: f64 = 0.0;
    let mut max_excess = f64::NEG_INFINITY;
    for (i, &x) in ids.iter().enumerate() {
        for (j, &y) in ids.iter().enumerate() {
            let (u1, u2) = (&rows[i], &rows[j]);
            let delta = u1[y] + u2[x];
            let rep = (u1[y] - u2[y]) - (u1[x] - u2[x]);
            max_residual = max_residual.max((delta - rep).abs());
            for u in others {
                for w in others {
                    let e = (u[y] - w[y]) - (u[x] - w[x]) - delta;
                    max_excess = max_excess.max(e);
                }
            }
        }
    }
    RepresentationReport {
        max_residual,
        max_excess_others: if others.is_empty() { 0.0 } else { max_excess },
        pairs: ids.len() * ids.len(),
    }
}
