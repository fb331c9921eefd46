//! Stage runner: builds the model objects a stage needs, writes its
//! artifacts and records them in a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use weakkam::aubry::{
    aubry_set, barrier_diagnostics, class_spread, mather_delta, peierls_barrier,
    power_window_gap, quotient, representation_check, AubrySet, PeierlsBarrier, QuotientPartition,
};
use weakkam::critical::{check_dominated, critical_value, weak_kam_solution, CriticalValue, WeakKamSolution};
use weakkam::dynamics::{chain_graph, chain_recurrent_set, compare_aubry_chain, flow_invariance_violations, weak_kam_constancy_check};
use weakkam::geometry::{
    default_scales, endpoint_delta_p, ferry_delta_p, hausdorff1_report, quadratic_bound_check,
    segment_points,
};
use weakkam::grid::GridTorus;
use weakkam::kernel::ActionKernel;
use weakkam::model::{HamiltonianProbe, Lagrangian};
use weakkam::regularizer::{
    alternating_smooth, pointwise_hamiltonian, semiconcavity_constant, semiconvexity_constant,
    SmoothingSchedule,
};
use weakkam::semimetric::SemiMetric;

use crate::config::{CollapseCurve, ConfigError, ExperimentConfig};

/// Stage names, in pipeline order.
pub const STAGES: &[&str] = &[
    "critical",
    "weakkam",
    "barrier",
    "aubry",
    "quotient",
    "dimension",
    "chains",
    "mane-compare",
    "regularize",
    "ferry",
];

/// Fixed-width rendering with 12 significant digits.
pub fn fmt12(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.11e}")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: String,
    pub files: Vec<FileRecord>,
    pub wall_time_s: f64,
    pub summary: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub stages: Vec<StageRecord>,
    pub config: Value,
}

impl Manifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

pub struct Pipeline {
    cfg: ExperimentConfig,
    out: PathBuf,
    grid: GridTorus,
    lagrangian: Lagrangian,
    kernel: Option<ActionKernel>,
    critical: Option<CriticalValue>,
    solutions: Option<Vec<WeakKamSolution>>,
    barrier: Option<PeierlsBarrier>,
    aubry: Option<AubrySet>,
    delta: Option<SemiMetric>,
    quotient: Option<QuotientPartition>,
    chain: Option<Vec<usize>>,
    manifest: Manifest,
    pending_files: Vec<FileRecord>,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        let lagrangian = cfg.lagrangian()?;
        let out = cfg.outputs.directory.clone();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let config = serde_json::to_value(&cfg)?;
        Ok(Self {
            cfg,
            out,
            grid,
            lagrangian,
            kernel: None,
            critical: None,
            solutions: None,
            barrier: None,
            aubry: None,
            delta: None,
            quotient: None,
            chain: None,
            manifest: Manifest {
                stages: Vec::new(),
                config,
            },
            pending_files: Vec::new(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    /// Runs the stages and their prerequisites, then writes `manifest.json`.
    /// On failure the manifest records the error and is still written.
    pub fn run(&mut self, stages: &[String]) -> Result<&Manifest> {
        let mut result = Ok(());
        for s in stages {
            if let Err(e) = self.stage(s) {
                result = Err(e);
                break;
            }
        }
        self.write_manifest()?;
        result.map(|_| &self.manifest)
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    fn done(&self, name: &str) -> bool {
        self.manifest.stage(name).is_some_and(|s| s.status == "ok")
    }

    /// Runs one stage unless it already ran.
    pub fn stage(&mut self, name: &str) -> Result<()> {
        if self.done(name) {
            return Ok(());
        }
        match name {
            "critical" => {}
            "weakkam" | "barrier" => self.stage("critical")?,
            "aubry" => self.stage("barrier")?,
            "quotient" => self.stage("aubry")?,
            "dimension" => self.stage("quotient")?,
            "mane-compare" => {
                self.stage("aubry")?;
                self.stage("chains")?;
            }
            "regularize" => {
                self.stage("weakkam")?;
                self.stage("aubry")?;
            }
            "chains" | "ferry" => {}
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown stage {other:?}; expected one of {}",
                    STAGES.join(", ")
                ))
                .into())
            }
        }
        let start = Instant::now();
        self.pending_files.clear();
        let outcome = match name {
            "critical" => self.run_critical(),
            "weakkam" => self.run_weakkam(),
            "barrier" => self.run_barrier(),
            "aubry" => self.run_aubry(),
            "quotient" => self.run_quotient(),
            "dimension" => self.run_dimension(),
            "chains" => self.run_chains(),
            "mane-compare" => self.run_compare(),
            "regularize" => self.run_regularize(),
            "ferry" => self.run_ferry(),
            _ => unreachable!(),
        };
        let files = std::mem::take(&mut self.pending_files);
        let wall_time_s = start.elapsed().as_secs_f64();
        match outcome {
            Ok(summary) => {
                self.manifest.stages.push(StageRecord {
                    stage: name.into(),
                    status: "ok".into(),
                    files,
                    wall_time_s,
                    summary,
                    error: None,
                });
                Ok(())
            }
            Err(e) => {
                self.manifest.stages.push(StageRecord {
                    stage: name.into(),
                    status: "error".into(),
                    files,
                    wall_time_s,
                    summary: Value::Null,
                    error: Some(format!("{e:#}")),
                });
                Err(e.context(format!("stage {name} failed")))
            }
        }
    }

    fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading back {}", path.display()))?;
        let rel = path
            .strip_prefix(&self.out)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.pending_files.push(FileRecord {
            path: rel,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        if !self.cfg.outputs.csv() {
            return Ok(());
        }
        let path = self.out.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        drop(w);
        self.record(&path)
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        if !self.cfg.outputs.json() {
            return Ok(());
        }
        let path = self.out.join(name);
        fs::write(&path, serde_json::to_string_pretty(value)?)
            .with_context(|| format!("writing {}", path.display()))?;
        self.record(&path)
    }

    fn coords_header(&self) -> Vec<String> {
        (0..self.grid.dim()).map(|a| format!("x{a}")).collect()
    }

    fn coords_row(&self, i: usize) -> Vec<String> {
        self.grid.coords(i).iter().map(|&v| fmt12(v)).collect()
    }

    fn indexed_rows(&self, indices: &[usize], extra: impl Fn(usize, usize) -> Vec<String>) -> Vec<Vec<String>> {
        indices
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let mut row = vec![i.to_string()];
                row.extend(self.coords_row(i));
                row.extend(extra(k, i));
                row
            })
            .collect()
    }

    fn header_with_coords(&self, tail: &[&str]) -> Vec<String> {
        let mut h = vec!["index".to_string()];
        h.extend(self.coords_header());
        h.extend(tail.iter().map(|s| s.to_string()));
        h
    }

    pub fn kernel(&mut self) -> Result<&ActionKernel> {
        if self.kernel.is_none() {
            let k = ActionKernel::build(&self.lagrangian, self.grid, self.cfg.tau(), self.cfg.stencil_radius())?;
            self.kernel = Some(k);
        }
        Ok(self.kernel.as_ref().expect("built above"))
    }

    fn critical_value(&self) -> &CriticalValue {
        self.critical.as_ref().expect("critical stage ran")
    }

    fn run_critical(&mut self) -> Result<Value> {
        self.kernel()?;
        let k = self.kernel.as_ref().expect("built above");
        let cv = critical_value(k)?;
        let summary = json!({
            "model": self.lagrangian.label(),
            "c": cv.c,
            "tau": cv.tau,
            "stencil_radius": k.stencil_radius(),
            "spacing": self.grid.spacing(),
            "point_count": self.grid.point_count(),
            "edge_count": k.costs().edge_count(),
            "mean_cycle_weight": cv.mean_cycle_weight,
            "witness_cycle": cv.witness_cycle,
        });
        if self.cfg.outputs.dump_kernel {
            k.dump(&self.out, "kernel")?;
            let (csv_path, json_path) = (self.out.join("kernel.csv"), self.out.join("kernel.json"));
            self.record(&csv_path)?;
            self.record(&json_path)?;
        }
        self.critical = Some(cv);
        self.write_json("critical.json", &summary)?;
        Ok(summary)
    }

    fn run_weakkam(&mut self) -> Result<Value> {
        let c = self.critical_value().c;
        let n = self.grid.point_count();
        let mut starts = vec![vec![0.0; n]];
        for k in 0..self.cfg.solver.random_starts {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(k as u64));
            starts.push((0..n).map(|_| rng.random::<f64>()).collect());
        }
        let kernel = self.kernel.as_ref().expect("critical stage ran");
        let solutions: Vec<WeakKamSolution> = starts
            .iter()
            .map(|u0| weak_kam_solution(kernel, c, u0, self.cfg.solver.tol, self.cfg.solver.max_iter))
            .collect::<weakkam::Result<_>>()?;
        let us: Vec<Vec<f64>> = solutions.iter().map(|s| s.u.clone()).collect();
        let oscillation = weak_kam_constancy_check(&us)?;
        let domination = check_dominated(&us[0], kernel, c);
        let h = pointwise_hamiltonian(&us[0], &self.lagrangian, &self.grid, &HamiltonianProbe::default())?;
        let h_residual = h.iter().map(|v| v - c).fold(f64::NEG_INFINITY, f64::max);
        let summary = json!({
            "c": c,
            "starts": starts.len(),
            "seed": self.cfg.seed,
            "residuals": solutions.iter().map(|s| s.residual).collect::<Vec<_>>(),
            "iterations": solutions.iter().map(|s| s.iterations).collect::<Vec<_>>(),
            "constancy_oscillation": oscillation,
            "max_domination_violation": domination.max_violation,
            "max_hamiltonian_residual": h_residual,
        });
        let mut header = self.header_with_coords(&["u"]);
        header.extend((1..us.len()).map(|k| format!("u_start{k}")));
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let all: Vec<usize> = (0..n).collect();
        let rows = self.indexed_rows(&all, |_, i| us.iter().map(|u| fmt12(u[i])).collect());
        self.write_csv("weakkam.csv", &header_ref, rows)?;
        self.write_json("weakkam.json", &summary)?;
        self.solutions = Some(solutions);
        Ok(summary)
    }

    fn run_barrier(&mut self) -> Result<Value> {
        let cv = self.critical_value().clone();
        let kernel = self.kernel.as_ref().expect("critical stage ran");
        let barrier = peierls_barrier(kernel, &cv)?;
        let n = self.grid.point_count();
        let dense = n <= self.cfg.outputs.max_dense_points;
        let stride = if dense { 1 } else { n.div_ceil(64) };
        let diag = barrier_diagnostics(kernel, &barrier, cv.c, stride);
        let horizon = self.cfg.solver.horizon;
        let power_gap = if horizon > 0 && dense {
            Some(power_window_gap(kernel, &barrier, horizon)?)
        } else {
            None
        };
        let summary = json!({
            "critical_nodes": barrier.critical().nodes.len(),
            "critical_classes": barrier.critical().classes.len(),
            "representatives": barrier.representatives(),
            "diagnostics": diag,
            "power_window_horizon": if power_gap.is_some() { Some(horizon) } else { None },
            "power_window_gap": power_gap,
            "dense_written": dense,
        });
        let diagonal = barrier.diagonal();
        let all: Vec<usize> = (0..n).collect();
        let header = self.header_with_coords(&["h_xx"]);
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.indexed_rows(&all, |_, i| vec![fmt12(diagonal[i])]);
        self.write_csv("barrier_diagonal.csv", &header_ref, rows)?;
        if dense {
            let rows: Vec<Vec<String>> = (0..n)
                .flat_map(|i| {
                    let row = barrier.row(i);
                    (0..n).map(move |j| vec![i.to_string(), j.to_string(), fmt12(row[j])])
                })
                .collect();
            self.write_csv("barrier.csv", &["i", "j", "h"], rows)?;
        }
        self.write_json("barrier.json", &summary)?;
        self.barrier = Some(barrier);
        Ok(summary)
    }

    fn run_aubry(&mut self) -> Result<Value> {
        let eta = self.cfg.eta();
        let kernel = self.kernel.as_ref().expect("critical stage ran");
        let barrier = self.barrier.as_ref().expect("barrier stage ran");
        let a = aubry_set(kernel, barrier, eta)?;
        let mut counts = BTreeMap::new();
        for l in &a.labels {
            *counts.entry(l.as_str()).or_insert(0usize) += 1;
        }
        let summary = json!({
            "count": a.len(),
            "eta": eta,
            "labels": counts,
            "max_self_barrier": a.self_barrier.iter().copied().fold(0.0, f64::max),
        });
        let header = self.header_with_coords(&["self_barrier", "label", "successor"]);
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.indexed_rows(&a.indices, |k, _| {
            vec![fmt12(a.self_barrier[k]), a.labels[k].as_str().into(), a.successors[k].to_string()]
        });
        self.write_csv("aubry.csv", &header_ref, rows)?;
        self.write_json("aubry.json", &summary)?;
        self.aubry = Some(a);
        Ok(summary)
    }

    fn run_quotient(&mut self) -> Result<Value> {
        let barrier = self.barrier.as_ref().expect("barrier stage ran");
        let a = self.aubry.as_ref().expect("aubry stage ran");
        let delta = mather_delta(&barrier.submatrix(&a.indices));
        let threshold = self.cfg.merge_threshold();
        let q = quotient(&delta, threshold)?;
        let (within, across) = class_spread(&delta, &q);
        let rep = representation_check(barrier, a, &[]);
        let summary = json!({
            "class_count": q.class_count(),
            "representatives": q.representatives,
            "max_class_diameter_delta": within,
            "min_interclass_delta": if across.is_finite() { Some(across) } else { None },
            "eta": a.threshold,
            "merge_threshold": threshold,
            "representation_max_residual": rep.max_residual,
        });
        let rows: Vec<Vec<String>> = q
            .classes
            .iter()
            .enumerate()
            .flat_map(|(c, members)| members.iter().map(move |&i| vec![c.to_string(), i.to_string()]))
            .collect();
        self.write_csv("quotient.csv", &["class_id", "index"], rows)?;
        if delta.len() <= self.cfg.outputs.max_dense_points {
            let ids = delta.point_ids().to_vec();
            let rows: Vec<Vec<String>> = (0..ids.len())
                .flat_map(|i| {
                    let ids = &ids;
                    let delta = &delta;
                    (0..ids.len()).map(move |j| vec![ids[i].to_string(), ids[j].to_string(), fmt12(delta.get(i, j))])
                })
                .collect();
            self.write_csv("delta.csv", &["i", "j", "delta"], rows)?;
        }
        self.write_json("quotient.json", &summary)?;
        self.delta = Some(delta);
        self.quotient = Some(q);
        Ok(summary)
    }

    fn run_dimension(&mut self) -> Result<Value> {
        let delta = self.delta.as_ref().expect("quotient stage ran");
        let positions: Vec<usize> = (0..delta.len()).collect();
        let scales = match &self.cfg.dimension.scales {
            Some(s) => s.clone(),
            None => default_scales(delta, &positions, self.cfg.dimension.levels),
        };
        let report = hausdorff1_report(delta, &positions, &scales)?;
        let barrier = self.barrier.as_ref().expect("barrier stage ran");
        let a = self.aubry.as_ref().expect("aubry stage ran");
        let quad = quadratic_bound_check(barrier, a, &self.grid, self.cfg.dimension.window)?;
        let summary = json!({
            "dim_slope": report.dim_slope,
            "point_count": report.point_count,
            "class_count": self.quotient.as_ref().map(|q| q.class_count()),
            "finest_scale": scales.last(),
            "finest_h1": report.h1_estimates.last(),
            "quadratic_bound": quad,
        });
        let rows: Vec<Vec<String>> = (0..scales.len())
            .map(|i| {
                vec![
                    fmt12(report.scales[i]),
                    report.covering_counts[i].to_string(),
                    fmt12(report.h1_estimates[i]),
                ]
            })
            .collect();
        self.write_csv("covering.csv", &["r", "N", "h1"], rows)?;
        self.write_json("dimension.json", &summary)?;
        Ok(summary)
    }

    fn run_chains(&mut self) -> Result<Value> {
        let field = self.cfg.vector_field()?.ok_or_else(|| {
            ConfigError::Invalid(format!(
                "chain stages need model family \"mane\", got {:?}",
                self.cfg.model.family
            ))
        })?;
        let (dt, eps, substeps) = (self.cfg.chain_dt(), self.cfg.chain_eps(), self.cfg.chain_substeps());
        let g = chain_graph(&field, self.grid, dt, eps, substeps)?;
        let set = chain_recurrent_set(&g);
        let violations = flow_invariance_violations(&g, &set);
        let summary = json!({
            "count": set.len(),
            "dt": dt,
            "eps": eps,
            "substeps": substeps,
            "edge_count": g.edge_count(),
            "flow_invariance_violations": violations.len(),
        });
        let header = self.header_with_coords(&[]);
        let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.indexed_rows(&set, |_, _| Vec::new());
        self.write_csv("chain_set.csv", &header_ref, rows)?;
        self.write_json("chains.json", &summary)?;
        self.chain = Some(set);
        Ok(summary)
    }

    fn run_compare(&mut self) -> Result<Value> {
        let a = self.aubry.as_ref().expect("aubry stage ran");
        let chain = self.chain.as_ref().expect("chains stage ran");
        let cmp = compare_aubry_chain(a, chain, &self.grid)?;
        let s = self.grid.spacing();
        let summary = json!({
            "hausdorff_distance": cmp.hausdorff_distance,
            "distance_in_spacings": cmp.hausdorff_distance / s,
            "aubry_count": a.len(),
            "chain_count": chain.len(),
            "a_only": cmp.a_only.len(),
            "b_only": cmp.b_only.len(),
            "a_only_indices": cmp.a_only,
            "b_only_indices": cmp.b_only,
        });
        self.write_json("comparison.json", &summary)?;
        Ok(summary)
    }

    fn run_regularize(&mut self) -> Result<Value> {
        let c = self.critical_value().c;
        let kernel = self.kernel.as_ref().expect("critical stage ran");
        let u = self.solutions.as_ref().expect("weakkam stage ran")[0].u.clone();
        let a = self.aubry.as_ref().expect("aubry stage ran");
        let schedule = SmoothingSchedule::halving(kernel.tau(), self.cfg.regularizer.stages)?;
        let tol = self.cfg.regularizer.tol;
        let out = alternating_smooth(&u, kernel, c, &schedule, tol)?;
        let drift = a
            .indices
            .iter()
            .map(|&i| (out.v[i] - u[i]).abs())
            .fold(0.0, f64::max);
        let h = pointwise_hamiltonian(&out.v, &self.lagrangian, &self.grid, &HamiltonianProbe::default())?;
        let summary = json!({
            "stages": schedule.stages(),
            "plus_steps": schedule.plus_steps,
            "minus_steps": schedule.minus_steps,
            "semiconvexity_before": semiconvexity_constant(&u, &self.grid)?,
            "semiconvexity_after": semiconvexity_constant(&out.v, &self.grid)?,
            "semiconcavity_before": semiconcavity_constant(&u, &self.grid)?,
            "semiconcavity_after": semiconcavity_constant(&out.v, &self.grid)?,
            "max_aubry_drift": drift,
            "max_step_violation": out.max_step_violation(),
            "sup_change": out.sup_change,
            "change_bound": out.change_bound,
            "max_hamiltonian_residual": h.iter().map(|v| v - c).fold(f64::NEG_INFINITY, f64::max),
        });
        let all: Vec<usize> = (0..u.len()).collect();
        let rows: Vec<Vec<String>> = all
            .iter()
            .map(|&i| vec![i.to_string(), fmt12(u[i]), fmt12(out.v[i]), fmt12(h[i] - c)])
            .collect();
        self.write_csv("regularize.csv", &["index", "u_in", "u_out", "H_residual"], rows)?;
        self.write_json("regularize.json", &summary)?;
        Ok(summary)
    }

    fn run_ferry(&mut self) -> Result<Value> {
        let f = self
            .cfg
            .ferry
            .clone()
            .ok_or_else(|| ConfigError::Invalid("ferry stage needs a [ferry] section".into()))?;
        let mut summary = serde_json::Map::new();
        summary.insert("p".into(), json!(f.p));
        if let Some(path) = &f.points {
            let pts = read_points(path)?;
            let d = ferry_delta_p(&pts, f.metric, f.p)?;
            let n = pts.len();
            let rows: Vec<Vec<String>> = (0..n)
                .flat_map(|i| {
                    let d = &d;
                    (0..n).map(move |j| vec![i.to_string(), j.to_string(), fmt12(d.get(i, j))])
                })
                .collect();
            self.write_csv("ferry_delta.csv", &["i", "j", "delta"], rows)?;
            summary.insert("point_count".into(), json!(n));
            summary.insert(
                "endpoint_delta".into(),
                json!(if n > 0 { d.get(0, n - 1) } else { 0.0 }),
            );
        }
        if let Some(col) = &f.collapse {
            let samples: Vec<Vec<Vec<f64>>> = col.counts.iter().map(|&k| collapse_curve(col.curve, k)).collect();
            let values = endpoint_delta_p(&samples, f.metric, f.p)?;
            let rows: Vec<Vec<String>> = col
                .counts
                .iter()
                .zip(&values)
                .map(|(k, v)| vec![k.to_string(), fmt12(*v)])
                .collect();
            self.write_csv("ferry_collapse.csv", &["count", "delta_endpoints"], rows)?;
            let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
            summary.insert("collapse_counts".into(), json!(col.counts));
            summary.insert("collapse_values".into(), json!(values));
            summary.insert("collapse_ratios".into(), json!(ratios));
        }
        let summary = Value::Object(summary);
        self.write_json("ferry.json", &summary)?;
        Ok(summary)
    }
}

/// `count + 1` samples of a curve in the plane with distinct endpoints: the
/// unit segment along the first axis, or the upper unit half-circle.
pub fn collapse_curve(curve: CollapseCurve, count: usize) -> Vec<Vec<f64>> {
    match curve {
        CollapseCurve::Segment => segment_points(&[0.0, 0.0], &[1.0, 0.0], count),
        CollapseCurve::Circle => (0..=count)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
    }
}

/// One point per row, no header; blank lines and `#` comments are skipped.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening points file {}", path.display()))?;
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| anyhow!(weakkam::Error::Parse(format!("{}:{line}: bad number {s:?}", path.display()))))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = pts.first() {
            if first.len() != row.len() {
                bail!(weakkam::Error::Parse(format!(
                    "{}:{line}: expected {} coordinates, found {}",
                    path.display(),
                    first.len(),
                    row.len()
                )));
            }
        }
        pts.push(row);
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(-0.0), "0");
        assert_eq!(fmt12(0.125), "1.25000000000e-1");
        assert_eq!(fmt12(1.0 / 3.0).parse::<f64>().unwrap(), 0.333333333333);
        assert_eq!(fmt12(f64::INFINITY), "inf");
    }

    #[test]
    fn curves_have_requested_samples() {
        let seg = collapse_curve(CollapseCurve::Segment, 4);
        assert_eq!(seg.len(), 5);
        assert_eq!(seg[4], vec![1.0, 0.0]);
        let arc = collapse_curve(CollapseCurve::Circle, 8);
        assert!((arc[8][0] + 1.0).abs() < 1e-15 && arc[8][1].abs() < 1e-15);
    }

    #[test]
    fn points_file_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        fs::write(&p, "# x,y\n0,0\n0.5,0.5\n1,zz\n").unwrap();
        let err = read_points(&p).unwrap_err().to_string();
        assert!(err.contains(":4:"), "{err}");
        fs::write(&p, "0,0\n1\n").unwrap();
        assert!(read_points(&p).unwrap_err().to_string().contains(":2:"));
        fs::write(&p, "0,0\n1,1\n").unwrap();
        assert_eq!(read_points(&p).unwrap().len(), 2);
    }
}
