//! Alternating Lax–Oleinik smoothing of critical subsolutions and discrete
//! regularity measurements.

use rayon::prelude::*;
use serde::Serialize;

use crate::critical::{check_dominated, domination_lipschitz_bound, one_step_bound};
use crate::error::{invalid, Error, Result};
use crate::grid::GridTorus;
use crate::kernel::ActionKernel;
use crate::model::{HamiltonianProbe, Lagrangian};

/// Times `t⁺ₙ`, `t⁻ₙ` of the stages, as numbers of kernel steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothingSchedule {
    pub tau: f64,
    pub plus_steps: Vec<usize>,
    pub minus_steps: Vec<usize>,
}

impl SmoothingSchedule {
    /// `t⁺ₙ = τ·2^{max(0, 3 − n)}` and `t⁻ₙ = t⁺ₙ/2` for `n = 1..=stages`.
    ///
    /// Equal times would leave every weak KAM solution unchanged, since
    /// `T⁻T⁺T⁻ = T⁻`.
    pub fn halving(tau: f64, stages: usize) -> Result<Self> {
        let plus: Vec<f64> = (1..=stages)
            .map(|n| tau * 2f64.powi((3 - n.min(3) as i32).max(0)))
            .collect();
        let minus: Vec<f64> = plus.iter().map(|t| 0.5 * t).collect();
        Self::from_times(tau, &plus, &minus)
    }

    /// Rounds each time to a whole number of steps, at least one.
    pub fn from_times(tau: f64, t_plus: &[f64], t_minus: &[f64]) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {tau}")));
        }
        if t_plus.len() != t_minus.len() || t_plus.is_empty() {
            return Err(invalid("schedule needs equally many t⁺ and t⁻, at least one"));
        }
        let counts = |ts: &[f64]| -> Result<Vec<usize>> {
            ts.iter()
                .map(|&t| {
                    if !(t > 0.0) || !t.is_finite() {
                        return Err(invalid(format!("stage time must be positive, got {t}")));
                    }
                    Ok(((t / tau).round() as usize).max(1))
                })
                .collect()
        };
        Ok(Self {
            tau,
            plus_steps: counts(t_plus)?,
            minus_steps: counts(t_minus)?,
        })
    }

    pub fn stages(&self) -> usize {
        self.plus_steps.len()
    }

    pub fn total_steps(&self) -> usize {
        self.plus_steps.iter().sum::<usize>() + self.minus_steps.iter().sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothingOutcome {
    pub v: Vec<f64>,
    /// Domination defect after each single shifted step, in order.
    pub step_violations: Vec<f64>,
    /// `v` after each complete stage.
    pub stage_values: Vec<Vec<f64>>,
    pub sup_change: f64,
    /// Accumulated one-step bound on `sup |v − u|`.
    pub change_bound: f64,
}

impl SmoothingOutcome {
    pub fn max_step_violation(&self) -> f64 {
        self.step_violations
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Stage `n` applies `T⁺ − cτ` for `t⁺ₙ` and then `T⁻ + cτ` for `t⁻ₙ`,
/// starting from stage 1.
pub fn alternating_smooth(
    u: &[f64],
    kernel: &ActionKernel,
    c: f64,
    schedule: &SmoothingSchedule,
    tol: f64,
) -> Result<SmoothingOutcome> {
    let n = kernel.costs().node_count();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u.len(),
        });
    }
    if (schedule.tau - kernel.tau()).abs() > 1e-12 * kernel.tau() {
        return Err(invalid(format!(
            "schedule step {} differs from kernel step {}",
            schedule.tau,
            kernel.tau()
        )));
    }
    let start = check_dominated(u, kernel, c);
    if start.max_violation > tol {
        return Err(Error::NotDominated {
            violation: start.max_violation,
            from: start.edge.0,
            to: start.edge.1,
        });
    }
    let shift = c * kernel.tau();
    let costs = kernel.costs();
    let mut v = u.to_vec();
    let mut step_violations = Vec::with_capacity(schedule.total_steps());
    let mut stage_values = Vec::with_capacity(schedule.stages());
    for (&plus, &minus) in schedule.plus_steps.iter().zip(&schedule.minus_steps) {
        for _ in 0..plus {
            v = costs.apply_plus(&v, shift);
            step_violations.push(check_dominated(&v, kernel, c).max_violation);
        }
        for _ in 0..minus {
            v = costs.apply_minus(&v, shift);
            step_violations.push(check_dominated(&v, kernel, c).max_violation);
        }
        stage_values.push(v.clone());
    }
    let sup_change = v
        .iter()
        .zip(u)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let lipschitz = domination_lipschitz_bound(kernel, c);
    let change_bound = schedule.total_steps() as f64 * one_step_bound(kernel, c, lipschitz);
    Ok(SmoothingOutcome {
        v,
        step_violations,
        stage_values,
        sup_change,
        change_bound,
    })
}

/// Largest `±(u(x + e) + u(x − e) − 2u(x)) / (2·spacing²)` over points and
/// axis steps `e`, floored at zero.
fn second_difference_extreme(u: &[f64], grid: &GridTorus, sign: f64) -> Result<f64> {
    if u.len() != grid.point_count() {
        return Err(Error::DimensionMismatch {
            expected: grid.point_count(),
            got: u.len(),
        });
    }
    let s2 = grid.spacing() * grid.spacing();
    let worst = (0..u.len())
        .into_par_iter()
        .map(|x| {
            let cells = grid.cells(x);
            let mut worst: f64 = 0.0;
            for axis in 0..grid.dim() {
                let mut fwd = [cells[0] as i64, cells[1] as i64];
                let mut back = fwd;
                fwd[axis] += 1;
                back[axis] -= 1;
                let d = grid.dim();
                let d2 = u[grid.index_of_cells(&fwd[..d])] + u[grid.index_of_cells(&back[..d])]
                    - 2.0 * u[x];
                worst = worst.max(sign * d2 / (2.0 * s2));
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Smallest `K ≥ 0` with every axis second difference at least `−2K·spacing²`.
pub fn semiconvexity_constant(u: &[f64], grid: &GridTorus) -> Result<f64> {
    second_difference_extreme(u, grid, -1.0)
}

/// Smallest `K ≥ 0` with every axis second difference at most `2K·spacing²`.
pub fn semiconcavity_constant(u: &[f64], grid: &GridTorus) -> Result<f64> {
    second_difference_extreme(u, grid, 1.0)
}

/// `max_x H(x, Du(x)) − c` with centered differences. Uses the analytic
/// Hamiltonian when present, otherwise the probe.
pub fn subsolution_residual(
    u: &[f64],
    l: &Lagrangian,
    grid: &GridTorus,
    c: f64,
    probe: &HamiltonianProbe,
) -> Result<f64> {
    Ok(pointwise_hamiltonian(u, l, grid, probe)?
        .into_iter()
        .map(|h| h - c)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `H(x, Du(x))` at every grid point, with `Du` by centered differences.
pub fn pointwise_hamiltonian(
    u: &[f64],
    l: &Lagrangian,
    grid: &GridTorus,
    probe: &HamiltonianProbe,
) -> Result<Vec<f64>> {
    if u.len() != grid.point_count() {
        return Err(Error::DimensionMismatch {
            expected: grid.point_count(),
            got: u.len(),
        });
    }
    if l.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: l.dim(),
        });
    }
    let s = grid.spacing();
    let d = grid.dim();
    (0..u.len())
        .into_par_iter()
        .map(|x| {
            let cells = grid.cells(x);
            let mut p = [0.0; 2];
            for (axis, pa) in p.iter_mut().enumerate().take(d) {
                let mut fwd = [cells[0] as i64, cells[1] as i64];
                let mut back = fwd;
                fwd[axis] += 1;
                back[axis] -= 1;
                *pa = (u[grid.index_of_cells(&fwd[..d])] - u[grid.index_of_cells(&back[..d])]) / (2.0 * s);
            }
            l.hamiltonian(&grid.coords(x), &p[..d], probe)
        })
        .collect()
}
