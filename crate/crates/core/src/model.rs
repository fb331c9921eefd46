//! Lagrangians, Hamiltonians and vector fields on T^d.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::grid::{wrap_unit, Coords, GridTorus};

type DensityFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type FieldFn = dyn Fn(&[f64]) -> Coords + Send + Sync;
type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// A Lagrangian density `L(x, v)` on the tangent bundle of T^d.
#[derive(Clone)]
pub struct Lagrangian {
    label: String,
    dim: usize,
    density: Arc<DensityFn>,
    hamiltonian: Option<Arc<DensityFn>>,
}

impl fmt::Debug for Lagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lagrangian")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic_hamiltonian", &self.hamiltonian.is_some())
            .finish()
    }
}

impl Lagrangian {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        density: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            dim,
            density: Arc::new(density),
            hamiltonian: None,
        }
    }

    pub fn with_hamiltonian(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.hamiltonian = Some(Arc::new(h));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        (self.density)(x, v)
    }

    pub fn analytic_hamiltonian(&self, x: &[f64], p: &[f64]) -> Option<f64> {
        self.hamiltonian.as_ref().map(|h| h(x, p))
    }

    /// Hamiltonian at `(x, p)`, analytic when available and otherwise by
    /// Legendre transform with `probe`.
    pub fn hamiltonian(&self, x: &[f64], p: &[f64], probe: &HamiltonianProbe) -> Result<f64> {
        match self.analytic_hamiltonian(x, p) {
            Some(h) => Ok(h),
            None => legendre_hamiltonian(self, probe, x, p),
        }
    }
}

/// A vector field `X` on T^d.
#[derive(Clone)]
pub struct VectorField {
    label: String,
    dim: usize,
    f: Arc<FieldFn>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish()
    }
}

impl VectorField {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        f: impl Fn(&[f64]) -> Coords + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            dim,
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Coords {
        (self.f)(x)
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, move |_| Coords::zeros(dim))
    }

    pub fn constant(components: &[f64]) -> Result<Self> {
        check_dim(components.len())?;
        let c = Coords::from_slice(components);
        Ok(Self::new("constant", components.len(), move |_| c))
    }

    /// `X_i(x) = sin(2π k x_i)` on every axis.
    pub fn sin_gradient(dim: usize, k: f64) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::new("sin_gradient", dim, move |x| {
            let mut out = Coords::zeros(dim);
            for (o, xi) in out.iter_mut().zip(x) {
                *o = (TWO_PI * k * xi).sin();
            }
            out
        }))
    }

    /// `X = -∇V`.
    pub fn neg_grad(potential: Potential, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let label = format!("neg_grad[{}]", potential.name());
        Ok(Self::new(label, dim, move |x| potential.gradient(x).scale(-1.0)))
    }

    /// Field sampled at grid points, extended by periodic (bi)linear
    /// interpolation. `values[i]` is the vector at grid index `i`.
    pub fn from_table(grid: GridTorus, values: Vec<Coords>) -> Result<Self> {
        if values.len() != grid.point_count() {
            return Err(invalid(format!(
                "table has {} rows, grid has {} points",
                values.len(),
                grid.point_count()
            )));
        }
        if let Some(bad) = values.iter().position(|v| v.dim() != grid.dim()) {
            return Err(Error::DimensionMismatch {
                expected: grid.dim(),
                got: values[bad].dim(),
            });
        }
        if values.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite("vector field table".into()));
        }
        let dim = grid.dim();
        Ok(Self::new("table", dim, move |x| interpolate(&grid, &values, x)))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=crate::grid::MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(invalid(format!("dimension must be 1 or 2, got {dim}")))
    }
}

fn interpolate(grid: &GridTorus, values: &[Coords], x: &[f64]) -> Coords {
    let n = grid.n_per_axis() as f64;
    let dim = grid.dim();
    let mut base = [0i64; 2];
    let mut frac = [0.0; 2];
    for a in 0..dim {
        let t = wrap_unit(x[a]) * n;
        base[a] = t.floor() as i64;
        frac[a] = t - t.floor();
    }
    let mut out = Coords::zeros(dim);
    let corners = 1usize << dim;
    for corner in 0..corners {
        let mut w = 1.0;
        let mut cells = [0i64; 2];
        for a in 0..dim {
            let up = (corner >> a) & 1 == 1;
            cells[a] = base[a] + up as i64;
            w *= if up { frac[a] } else { 1.0 - frac[a] };
        }
        if w == 0.0 {
            continue;
        }
        let v = &values[grid.index_of_cells(&cells[..dim])];
        out = out.axpy(w, v);
    }
    out
}

/// Named periodic potentials.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    Zero,
    /// `amplitude * cos(2π k x_axis)`, or the sum over all axes when
    /// `axis` is `None`.
    Cosine {
        amplitude: f64,
        wavenumber: f64,
        axis: Option<usize>,
    },
}

impl Potential {
    pub fn cosine(amplitude: f64, wavenumber: f64, axis: Option<usize>) -> Self {
        Potential::Cosine {
            amplitude,
            wavenumber,
            axis,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Potential::Zero => "zero".into(),
            Potential::Cosine {
                amplitude,
                wavenumber,
                axis,
            } => match axis {
                Some(a) => format!("{amplitude}cos(2pi*{wavenumber}*x{a})"),
                None => format!("{amplitude}cos_sum(2pi*{wavenumber}*x)"),
            },
        }
    }

    fn axes(axis: Option<usize>, dim: usize) -> std::ops::Range<usize> {
        match axis {
            Some(a) => a.min(dim)..(a + 1).min(dim),
            None => 0..dim,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Cosine {
                amplitude,
                wavenumber,
                axis,
            } => Self::axes(axis, x.len())
                .map(|a| amplitude * (TWO_PI * wavenumber * x[a]).cos())
                .sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Coords {
        let mut g = Coords::zeros(x.len());
        if let Potential::Cosine {
            amplitude,
            wavenumber,
            axis,
        } = *self
        {
            for a in Self::axes(axis, x.len()) {
                g[a] = -amplitude * TWO_PI * wavenumber * (TWO_PI * wavenumber * x[a]).sin();
            }
        }
        g
    }

    /// Largest value over the torus.
    pub fn max_value(&self, dim: usize) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Cosine { amplitude, axis, .. } => {
                let terms = if axis.is_some() { 1.0 } else { dim as f64 };
                amplitude.abs() * terms
            }
        }
    }
}

/// `L_X(x, v) = ½‖v − X(x)‖²`, whose Hamiltonian is `½‖p‖² + p·X(x)`.
pub fn mane_lagrangian(field: &VectorField) -> Lagrangian {
    let lf = field.clone();
    let hf = field.clone();
    Lagrangian::new(format!("mane[{}]", field.label()), field.dim(), move |x, v| {
        let xv = lf.eval(x);
        0.5 * v.iter().zip(xv.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    })
    .with_hamiltonian(move |x, p| {
        let xv = hf.eval(x);
        0.5 * p.iter().map(|a| a * a).sum::<f64>() + xv.dot(p)
    })
}

/// `L(x, v) = ½‖v‖² − V(x)`, whose Hamiltonian is `½‖p‖² + V(x)`.
pub fn mechanical_lagrangian(
    label: impl Into<String>,
    dim: usize,
    potential: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
) -> Lagrangian {
    let v_l: Arc<ScalarFn> = Arc::new(potential);
    let v_h = v_l.clone();
    Lagrangian::new(label, dim, move |x, v| {
        0.5 * v.iter().map(|a| a * a).sum::<f64>() - v_l(x)
    })
    .with_hamiltonian(move |x, p| 0.5 * p.iter().map(|a| a * a).sum::<f64>() + v_h(x))
}

/// Mechanical Lagrangian for a named potential.
pub fn potential_lagrangian(potential: Potential, dim: usize) -> Lagrangian {
    let label = format!("mechanical[{}]", potential.name());
    mechanical_lagrangian(label, dim, move |x| potential.value(x))
}

/// `L(x, v) = ½‖v‖²`.
pub fn kinetic_lagrangian(dim: usize) -> Lagrangian {
    mechanical_lagrangian("kinetic", dim, |_| 0.0)
}

/// `-L(x, 0)`, the stationary energy level at `x`.
pub fn tilde_h(l: &Lagrangian, x: &[f64]) -> f64 {
    -l.eval(x, &Coords::zeros(x.len()))
}

/// Velocity box used for numerical Legendre transforms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianProbe {
    pub v_search_radius: f64,
    /// Samples per axis, endpoints included.
    pub v_search_samples: usize,
}

impl Default for HamiltonianProbe {
    fn default() -> Self {
        Self {
            v_search_radius: 4.0,
            v_search_samples: 129,
        }
    }
}

/// `sup_v p·v − L(x, v)` over the probe's velocity grid.
pub fn legendre_hamiltonian(
    l: &Lagrangian,
    probe: &HamiltonianProbe,
    x: &[f64],
    p: &[f64],
) -> Result<f64> {
    if probe.v_search_samples < 3 || !(probe.v_search_radius > 0.0) {
        return Err(invalid("probe needs radius > 0 and at least 3 samples"));
    }
    let dim = x.len();
    let m = probe.v_search_samples;
    let r = probe.v_search_radius;
    let step = 2.0 * r / (m - 1) as f64;
    let total = m.pow(dim as u32);
    let mut best = f64::NEG_INFINITY;
    let mut v = Coords::zeros(dim);
    for flat in 0..total {
        let mut rest = flat;
        for vi in v.iter_mut() {
            *vi = -r + (rest % m) as f64 * step;
            rest /= m;
        }
        let lv = l.eval(x, &v);
        if !lv.is_finite() {
            return Err(Error::NonFinite(format!("L({x:?}, {:?})", &*v)));
        }
        best = best.max(v.dot(p) - lv);
    }
    Ok(best)
}

/// Diagnostic of convexity, superlinearity and boundedness of `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct TonelliReport {
    /// Smallest second difference of `L` in `v` along the axes.
    pub min_second_difference: f64,
    /// `min_x L(x, v) − K‖v‖` at `‖v‖ = v_radius` for K = 1 and K = 2.
    pub superlinearity_margin: [f64; 2],
    /// `max_x L(x, v)` at `‖v‖ = v_radius`.
    pub max_at_radius: f64,
    pub violations: Vec<String>,
}

/// Samples `L` on grid points (strided to at most 256 of them) and a
/// 17-per-axis velocity box of half-width `v_radius`.
pub fn check_tonelli(l: &Lagrangian, grid: &GridTorus, v_radius: f64) -> Result<TonelliReport> {
    if l.dim() != grid.dim() {
        return Err(Error::DimensionMismatch {
            expected: grid.dim(),
            got: l.dim(),
        });
    }
    let dim = grid.dim();
    let per_axis = 17usize;
    let dv = 2.0 * v_radius / (per_axis - 1) as f64;
    let stride = (grid.point_count() / 256).max(1);
    let mut min_d2 = f64::INFINITY;
    let mut margin = [f64::INFINITY; 2];
    let mut max_r = f64::NEG_INFINITY;
    let mut scale: f64 = 1.0;

    let rim: Vec<Coords> = rim_directions(dim)
        .into_iter()
        .map(|d| d.scale(v_radius))
        .collect();

    for idx in (0..grid.point_count()).step_by(stride) {
        let x = grid.coords(idx);
        for flat in 0..per_axis.pow(dim as u32) {
            let mut rest = flat;
            let mut v = Coords::zeros(dim);
            for vi in v.iter_mut() {
                *vi = -v_radius + (rest % per_axis) as f64 * dv;
                rest /= per_axis;
            }
            let l0 = l.eval(&x, &v);
            if !l0.is_finite() {
                return Err(Error::NonFinite(format!("L({:?}, {:?})", &*x, &*v)));
            }
            scale = scale.max(l0.abs());
            for a in 0..dim {
                let mut vp = v;
                let mut vm = v;
                vp[a] += dv;
                vm[a] -= dv;
                let d2 = l.eval(&x, &vp) + l.eval(&x, &vm) - 2.0 * l0;
                min_d2 = min_d2.min(d2);
            }
        }
        for v in &rim {
            let lv = l.eval(&x, v);
            margin[0] = margin[0].min(lv - v_radius);
            margin[1] = margin[1].min(lv - 2.0 * v_radius);
            max_r = max_r.max(lv);
        }
    }

    let mut violations = Vec::new();
    if min_d2 <= 1e-12 * scale {
        violations.push(format!(
            "not strictly convex in v: min second difference {min_d2:e}"
        ));
    }
    if !max_r.is_finite() {
        violations.push("unbounded at the velocity rim".into());
    }
    Ok(TonelliReport {
        min_second_difference: min_d2,
        superlinearity_margin: margin,
        max_at_radius: max_r,
        violations,
    })
}

fn rim_directions(dim: usize) -> Vec<Coords> {
    if dim == 1 {
        vec![Coords::from_slice(&[1.0]), Coords::from_slice(&[-1.0])]
    } else {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        [
            [1.0, 0.0],
            [-1.0, 0.0],
            [0.0, 1.0],
            [0.0, -1.0],
            [h, h],
            [h, -h],
            [-h, h],
            [-h, -h],
        ]
        .iter()
        .map(|d| Coords::from_slice(d))
        .collect()
    }
}
