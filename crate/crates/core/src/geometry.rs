//! Covering numbers and dimension surrogates for the Mather quotient, the
//! quadratic bound on δ near the Aubry set, and the chain semi-metric δ_p.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aubry::{AubrySet, PeierlsBarrier};
use crate::error::{invalid, Result};
use crate::grid::{torus_distance, GridTorus};
use crate::semimetric::SemiMetric;

/// Greedy covering count of the points at `positions` by δ-balls of radius
/// `r`. Centres are taken in the given order.
pub fn covering_number(delta: &SemiMetric, positions: &[usize], r: f64) -> usize {
    let mut covered = vec![false; positions.len()];
    let mut count = 0;
    for i in 0..positions.len() {
        if covered[i] {
            continue;
        }
        count += 1;
        let row = delta.row(positions[i]);
        for (j, &pj) in positions.iter().enumerate() {
            if !covered[j] && row[pj] <= r {
                covered[j] = true;
            }
        }
    }
    count
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringReport {
    /// Radii, descending.
    pub scales: Vec<f64>,
    /// Smallest greedy count at this or any finer scale.
    pub covering_counts: Vec<usize>,
    /// `N(r)·r` per scale.
    pub h1_estimates: Vec<f64>,
    /// Least-squares slope of `log N` against `log 1/r` over scales with
    /// `1 < N(r) < point count`; absent with fewer than two such scales.
    pub dim_slope: Option<f64>,
    pub point_count: usize,
}

impl CoveringReport {
    /// `(r, N(r), h1)` at the given radius, if it is one of the scales.
    pub fn at_scale(&self, r: f64) -> Option<(f64, usize, f64)> {
        let tol = 1e-12 * r.abs().max(f64::MIN_POSITIVE);
        self.scales
            .iter()
            .position(|s| (s - r).abs() <= tol)
            .map(|i| (self.scales[i], self.covering_counts[i], self.h1_estimates[i]))
    }
}

/// `r₀·2^{-k}` for `k = 0..levels` with `r₀` the largest δ between the given
/// points, or 1 when all of them are at δ-distance zero.
pub fn default_scales(delta: &SemiMetric, positions: &[usize], levels: usize) -> Vec<f64> {
    let mut r0: f64 = 0.0;
    for &i in positions {
        for &j in positions {
            let d = delta.get(i, j);
            if d.is_finite() {
                r0 = r0.max(d);
            }
        }
    }
    if r0 <= 0.0 {
        r0 = 1.0;
    }
    (0..levels).map(|k| r0 * 0.5f64.powi(k as i32)).collect()
}

pub fn hausdorff1_report(
    delta: &SemiMetric,
    positions: &[usize],
    scales: &[f64],
) -> Result<CoveringReport> {
    if scales.iter().any(|r| !(*r > 0.0)) {
        return Err(invalid("scales must be positive"));
    }
    if scales.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("scales must be descending"));
    }
    let mut counts: Vec<usize> = scales
        .iter()
        .map(|&r| covering_number(delta, positions, r))
        .collect();
    // A cover at a finer radius also covers at every coarser one.
    for i in (0..counts.len().saturating_sub(1)).rev() {
        counts[i] = counts[i].min(counts[i + 1]);
    }
    let h1 = scales
        .iter()
        .zip(&counts)
        .map(|(r, &n)| n as f64 * r)
        .collect();
    let fit: Vec<(f64, f64)> = scales
        .iter()
        .zip(&counts)
        .filter(|(_, &n)| n > 1 && n < positions.len())
        .map(|(r, &n)| ((1.0 / r).ln(), (n as f64).ln()))
        .collect();
    Ok(CoveringReport {
        scales: scales.to_vec(),
        covering_counts: counts,
        h1_estimates: h1,
        dim_slope: ols_slope(&fit),
        point_count: positions.len(),
    })
}

fn ols_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Smallest radius present in every report.
pub fn finest_common_scale(reports: &[CoveringReport]) -> Option<f64> {
    let first = reports.first()?;
    first
        .scales
        .iter()
        .copied()
        .filter(|&r| reports.iter().all(|rep| rep.at_scale(r).is_some()))
        .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.min(r))))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticBoundReport {
    /// Largest `δ(x, y) / d(x, y)²`; zero when no pair qualifies.
    pub max_ratio: f64,
    /// Aubry point and grid point attaining it.
    pub argmax: Option<(usize, usize)>,
    pub pairs: usize,
    pub window: f64,
}

/// `δ(x, y) / d(x, y)²` for Aubry points `x` and grid points `y` with
/// `2·spacing ≤ d(x, y) ≤ window`.
pub fn quadratic_bound_check(
    barrier: &PeierlsBarrier,
    aubry: &AubrySet,
    grid: &GridTorus,
    window: f64,
) -> Result<QuadraticBoundReport> {
    if barrier.point_count() != grid.point_count() {
        return Err(crate::Error::DimensionMismatch {
            expected: grid.point_count(),
            got: barrier.point_count(),
        });
    }
    let floor = 2.0 * grid.spacing() * (1.0 - 1e-12);
    let per_x: Vec<(f64, Option<(usize, usize)>, usize)> = aubry
        .indices
        .par_iter()
        .map(|&x| {
            let out = barrier.row(x);
            let mut best = (0.0, None, 0);
            for y in 0..grid.point_count() {
                let d = grid.distance(x, y);
                if d < floor || d > window {
                    continue;
                }
                best.2 += 1;
                let ratio = (out[y] + barrier.value(y, x)) / (d * d);
                if best.1.is_none() || ratio > best.0 {
                    best.0 = ratio;
                    best.1 = Some((x, y));
                }
            }
            best
        })
        .collect();
    let mut report = QuadraticBoundReport {
        max_ratio: 0.0,
        argmax: None,
        pairs: 0,
        window,
    };
    for (ratio, arg, pairs) in per_x {
        report.pairs += pairs;
        if arg.is_some() && (report.argmax.is_none() || ratio > report.max_ratio) {
            report.max_ratio = ratio;
            report.argmax = arg;
        }
    }
    Ok(report)
}

/// Distance used between points in [`ferry_delta_p`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointMetric {
    Euclidean,
    /// Wrap-around distance on the unit torus of matching dimension.
    Torus,
}

impl PointMetric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            PointMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            PointMetric::Torus => torus_distance(a, b),
        }
    }
}

/// Infimum over finite chains `a = a₀, …, a_k = b` of `Σ d(a_{i+1}, a_i)^p`.
pub fn ferry_delta_p(points: &[Vec<f64>], metric: PointMetric, p: f64) -> Result<SemiMetric> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("exponent p must be finite and at least 1, got {p}")));
    }
    let n = points.len();
    if let Some(first) = points.first() {
        let dim = first.len();
        if points.iter().any(|q| q.len() != dim) {
            return Err(invalid("points have differing dimensions"));
        }
        if metric == PointMetric::Torus && !(1..=crate::grid::MAX_DIM).contains(&dim) {
            return Err(invalid(format!("torus metric needs dimension 1 or 2, got {dim}")));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(crate::Error::NonFinite("point coordinate".into()));
        }
    }
    let mut m = vec![0.0; n * n];
    m.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = metric.distance(&points[i], &points[j]).powf(p);
        }
    });
    for k in 0..n {
        let via: Vec<f64> = m[k * n..(k + 1) * n].to_vec();
        m.par_chunks_mut(n).for_each(|row| {
            let ik = row[k];
            for (v, kj) in row.iter_mut().zip(&via) {
                let cand = ik + kj;
                if cand < *v {
                    *v = cand;
                }
            }
        });
    }
    // Keep the smaller direction so the result is exactly symmetric.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = m[i * n + j].min(m[j * n + i]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    SemiMetric::new((0..n).collect(), m, true)
}

/// `count + 1` equally spaced points from `a` to `b`.
pub fn segment_points(a: &[f64], b: &[f64], count: usize) -> Vec<Vec<f64>> {
    (0..=count)
        .map(|i| {
            let t = i as f64 / count.max(1) as f64;
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        })
        .collect()
}

/// `δ_p` between the first and last points of each sample set.
pub fn endpoint_delta_p(samples: &[Vec<Vec<f64>>], metric: PointMetric, p: f64) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|pts| {
            let d = ferry_delta_p(pts, metric, p)?;
            Ok(if pts.is_empty() { 0.0 } else { d.get(0, pts.len() - 1) })
        })
        .collect()
}
