//! Experiment configs and the five commands behind the command-line tool.
//!
//! A config is one JSON document. Its SHA-256 (over the parsed config with
//! defaults filled in and the output directory removed) is stamped into
//! every file a command writes.

pub mod csv;

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::dec::harmonic::HarmonicBasis;
use crate::dec::Dec;
use crate::effective::{compare, run_effective, Comparison, EffectiveConfig, EffectiveTrajectory};
use crate::error::{GlError, Result};
use crate::flow::{prepare_initial, run, FlowConfig, FlowTrajectory};
use crate::geometry::builders::{load_or_build, SurfaceSource};
use crate::geometry::point::{exp_map, locate_global, normal_at};
use crate::geometry::{tangent_frame, SurfaceGeometry, SurfacePoint, V3};
use crate::renorm::psi::check_admissible;
use crate::renorm::{core_energy, evaluate, grad_w, start_periods, FluxSpec, RenormParams, SurfaceContext, VortexConfiguration};
use csv::{columns, write_json, Cell, Table};

/// A vortex given by an ambient position (projected to the nearest surface
/// point) or by face and barycentric coordinates on the mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VortexSpec {
    pub degree: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bary: Option<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta0 {
    /// The critical phase of the extrinsic functional at t = 0.
    #[default]
    Critical,
    Zero,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    /// Which vortex is moved over the grid.
    pub vortex: usize,
    /// Points per side.
    pub grid: usize,
    /// Half-width of the grid in surface length units.
    pub span: f64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig { vortex: 0, grid: 5, span: 0.3 }
    }
}

fn default_eps() -> Vec<f64> {
    vec![0.1]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub surface: SurfaceSource,
    /// One surface per ε for sweeps that refine the mesh with ε; the
    /// effective run always uses `surface`.
    #[serde(default)]
    pub eps_surfaces: Vec<SurfaceSource>,
    #[serde(default)]
    pub vortices: Vec<VortexSpec>,
    #[serde(default)]
    pub flux: FluxSpec,
    #[serde(default)]
    pub theta0: Theta0,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub effective: EffectiveConfig,
    #[serde(default)]
    pub renorm: RenormParams,
    #[serde(default)]
    pub energy: LandscapeConfig,
    /// Seed for the initial-position perturbation.
    #[serde(default)]
    pub seed: u64,
    /// Random displacement of each initial vortex, at most this many cells.
    #[serde(default)]
    pub perturbation_cells: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut c: ExperimentConfig = serde_json::from_str(text).map_err(|e| GlError::Config(format!("invalid config: {e}")))?;
        c.effective.renorm = c.renorm.clone();
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GlError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that need no geometry.
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(GlError::Config("the ε list is empty".into()));
        }
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(GlError::Config(format!("ε values must lie in (0, 1), got {:?}", self.eps)));
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(GlError::Config(format!("ε values must be strictly decreasing, got {:?}", self.eps)));
        }
        if !self.eps_surfaces.is_empty() && self.eps_surfaces.len() != self.eps.len() {
            return Err(GlError::Config(format!("{} eps_surfaces for {} ε values", self.eps_surfaces.len(), self.eps.len())));
        }
        let r = &self.renorm;
        if !(r.theta_tol > 0.0 && r.rho_cells > 0.0 && r.eta_cells > 0.0 && r.theta_max_iter > 0) {
            return Err(GlError::Config("renorm tolerances and radii must be positive".into()));
        }
        if !(self.perturbation_cells >= 0.0 && self.perturbation_cells.is_finite()) {
            return Err(GlError::Config("perturbation_cells must be non-negative".into()));
        }
        for (k, v) in self.vortices.iter().enumerate() {
            if v.position.is_none() == (v.face.is_none() || v.bary.is_none()) {
                return Err(GlError::Config(format!("vortex {k} needs either position or face and bary")));
            }
        }
        let mut f = self.flow.clone();
        f.eps = self.eps[0];
        f.validate()?;
        self.effective.validate()?;
        if self.energy.grid == 0 || !(self.energy.span > 0.0) {
            return Err(GlError::Config("energy grid must be non-empty with positive span".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn degrees(&self) -> Vec<i32> {
        self.vortices.iter().map(|v| v.degree).collect()
    }
}

/// Files written and a JSON summary for the terminal.
#[derive(Debug, Serialize)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Surface plus located initial vortices.
pub struct Setup {
    pub ctx: SurfaceContext,
    pub a: Vec<SurfacePoint>,
    pub d: Vec<i32>,
}

fn walk(g: &SurfaceGeometry, p: &SurfacePoint, v: &V3) -> Result<SurfacePoint> {
    let limit = 0.8 * g.trust_region * g.mean_edge;
    let n = (v.norm() / limit).ceil().max(1.0) as usize;
    let mut q = *p;
    let step = v / n as f64;
    for _ in 0..n {
        // keep the direction tangent as the base point moves
        let nq = normal_at(g, &q);
        let s = step - nq * nq.dot(&step);
        q = exp_map(g, &q, &(s * (step.norm() / s.norm().max(1e-300))))?;
    }
    Ok(q)
}

/// Ambient positions of the configured vortices (mesh-independent).
fn ambient_positions(cfg: &ExperimentConfig, base: &SurfaceGeometry) -> Result<Vec<V3>> {
    cfg.vortices
        .iter()
        .enumerate()
        .map(|(k, v)| match (v.position, v.face, v.bary) {
            (Some(x), _, _) => Ok(V3::new(x[0], x[1], x[2])),
            (None, Some(f), Some(b)) => {
                if f >= base.n_faces() {
                    return Err(GlError::Config(format!("vortex {k}: face {f} out of range")));
                }
                Ok(SurfacePoint::from_face_bary(base, f, b).pos())
            }
            _ => Err(GlError::Config(format!("vortex {k} has no position"))),
        })
        .collect()
}

pub fn build_setup(cfg: &ExperimentConfig, source: &SurfaceSource, positions: &[V3]) -> Result<Setup> {
    let g = load_or_build(source)?;
    let d = cfg.degrees();
    check_admissible(&g, &d)?;
    let a = positions.iter().map(|x| locate_global(&g, x)).collect();
    Ok(Setup { ctx: SurfaceContext::new(g)?, a, d })
}

/// The base surface, its vortices and (after the seeded perturbation) the
/// ambient initial positions shared by every job.
pub fn base_setup(cfg: &ExperimentConfig) -> Result<(Setup, Vec<V3>)> {
    let g = load_or_build(&cfg.surface)?;
    let d = cfg.degrees();
    check_admissible(&g, &d)?;
    let mut x = ambient_positions(cfg, &g)?;
    if cfg.perturbation_cells > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for xk in x.iter_mut() {
            let p = locate_global(&g, xk);
            let (e1, e2) = tangent_frame(&normal_at(&g, &p));
            let ang = rng.random::<f64>() * 2.0 * PI;
            let len = rng.random::<f64>() * cfg.perturbation_cells * g.mean_edge;
            *xk = walk(&g, &p, &((e1 * ang.cos() + e2 * ang.sin()) * len))?.pos();
        }
    }
    let a = x.iter().map(|p| locate_global(&g, p)).collect();
    Ok((Setup { ctx: SurfaceContext::new(g)?, a, d }, x))
}

fn run_jobs<T: Send>(jobs: usize, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| GlError::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

fn eps_dir(out: &Path, i: usize, eps: f64) -> PathBuf {
    out.join(format!("eps_{i}_{eps}"))
}

fn point_cells(p: &SurfacePoint) -> [Cell; 4] {
    let x = p.pos();
    [x.x.into(), x.y.into(), x.z.into(), p.face.into()]
}

// ---------------------------------------------------------------- info

pub fn cmd_info(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let g = &load_or_build(&cfg.surface)?;
    // the face solver is not needed here, and meshes with obtuse cotangent
    // weights can still report their topology
    let mut dec = Dec::new(g);
    dec.prepare_vertex_solver()?;
    let basis = HarmonicBasis::new(g, &dec)?;
    let chi = g.euler_characteristic();
    let total = g.total_curvature();
    let report = json!({
        "vertices": g.n_vertices(),
        "edges": g.n_edges(),
        "faces": g.n_faces(),
        "euler_characteristic": chi,
        "genus": g.genus(),
        "area": g.total_area(),
        "total_curvature": total,
        "curvature_defect": total - 2.0 * PI * chi as f64,
        "harmonic_dimension": basis.dim(),
        "mean_edge": g.mean_edge,
    });
    let f = write_json(&out.join("info.json"), "info", 1, &cfg.hash(), &report)?;
    Ok(Outcome { files: vec![f], summary: report })
}

// ------------------------------------------------------------ simulate

/// Well-prepared initial data on one surface.
pub fn initial_field(cfg: &ExperimentConfig, s: &Setup, eps: f64) -> Result<(crate::fields::TangentField, Vec<f64>)> {
    let p = cfg.renorm.pinned(&s.ctx, &s.a)?;
    let (_, xi) = start_periods(&s.ctx, &s.a, &s.d, &cfg.flux)?;
    let theta = match cfg.theta0 {
        Theta0::Zero => Vec::new(),
        Theta0::Critical => {
            let vc = VortexConfiguration { a: s.a.clone(), d: s.d.clone(), xi: xi.clone(), theta: Vec::new() };
            evaluate(&s.ctx, &vc, &p, true)?.theta
        }
    };
    let u0 = prepare_initial(&s.ctx, &s.a, &s.d, &xi, &theta, eps, p.b0.expect("pinned"))?;
    Ok((u0, xi))
}

pub fn flow_job(cfg: &ExperimentConfig, s: &Setup, eps: f64) -> Result<FlowTrajectory> {
    let (u0, _) = initial_field(cfg, s, eps)?;
    let fc = FlowConfig { eps, ..cfg.flow.clone() };
    log::info!("flow ε = {eps} on {} vertices, {} steps", s.ctx.g.n_vertices(), (fc.t_final / fc.dt).round());
    run(&s.ctx, &u0, &fc)
}

pub fn write_flow(dir: &Path, hash: &str, s: &Setup, tr: &FlowTrajectory) -> Result<Vec<PathBuf>> {
    let m = s.ctx.basis.dim();
    let mut cols = columns(&[
        "t", "step", "energy", "dirichlet", "extrinsic", "potential", "max_norm", "tracking_ok", "unresolved", "n_vortices", "degree_sum",
    ]);
    cols.extend((0..m).map(|k| format!("xi_{k}")));
    let mut traj = Table::new("flow_trajectory", 1, cols);
    let mut vort = Table::new("flow_vortices", 1, columns(&["t", "step", "index", "degree", "x", "y", "z", "face", "defect"]));
    for smp in &tr.samples {
        let tk = &smp.tracking;
        let e = smp.energy;
        let mut row: Vec<Cell> = vec![
            smp.t.into(),
            smp.step.into(),
            e.total.into(),
            e.dirichlet.into(),
            e.extrinsic.into(),
            e.potential.into(),
            smp.max_norm.into(),
            tk.ok.into(),
            tk.unresolved.into(),
            tk.vortices.len().into(),
            tk.vortices.iter().map(|v| v.degree).sum::<i32>().into(),
        ];
        row.extend(smp.xi.iter().map(|&x| Cell::F(x)));
        traj.row(&row);
        for (k, v) in tk.vortices.iter().enumerate() {
            let [x, y, z, f] = point_cells(&v.point);
            vort.row(&[smp.t.into(), smp.step.into(), k.into(), v.degree.into(), x, y, z, f, v.defect.into()]);
        }
    }
    let mut files = vec![dir.join("trajectory.csv"), dir.join("vortices.csv")];
    traj.write(&files[0], hash)?;
    vort.write(&files[1], hash)?;
    for (k, (t, u)) in tr.snapshots.iter().enumerate() {
        let amb = u.to_ambient(&s.ctx.g);
        let mut snap = Table::new("field_snapshot", 1, columns(&["vertex", "re", "im", "ux", "uy", "uz"]));
        for (v, (z, w)) in u.z.iter().zip(&amb).enumerate() {
            snap.row(&[v.into(), z.re.into(), z.im.into(), w.x.into(), w.y.into(), w.z.into()]);
        }
        let path = dir.join("snapshots").join(format!("field_{k:04}_t{t}.csv"));
        snap.write(&path, hash)?;
        files.push(path);
    }
    let e0 = tr.samples.first().map(|x| x.energy.total).unwrap_or(f64::NAN);
    let e1 = tr.samples.last().map(|x| x.energy.total).unwrap_or(f64::NAN);
    let summary = json!({
        "eps": tr.eps,
        "vertices": s.ctx.g.n_vertices(),
        "mean_edge": s.ctx.cell(),
        "steps": tr.steps,
        "tstar": tr.tstar,
        "max_energy_increase": tr.max_energy_increase,
        "max_norm": tr.max_norm,
        "energy_drop": e0 - e1,
        "dissipation": tr.dissipation,
        "tracking_ok_everywhere": tr.samples.iter().all(|x| x.tracking.ok),
    });
    files.push(write_json(&dir.join("summary.json"), "flow_summary", 1, hash, &summary)?);
    Ok(files)
}

fn flow_sweep(cfg: &ExperimentConfig, base: &Setup, x0: &[V3], out: &Path, jobs: usize) -> Result<(Vec<FlowTrajectory>, Vec<PathBuf>, Vec<(usize, f64)>)> {
    let hash = cfg.hash();
    let results = run_jobs(jobs, cfg.eps.len(), |i| {
        let eps = cfg.eps[i];
        let own;
        let s = if cfg.eps_surfaces.is_empty() {
            base
        } else {
            own = build_setup(cfg, &cfg.eps_surfaces[i], x0)?;
            &own
        };
        let tr = flow_job(cfg, s, eps)?;
        let files = write_flow(&eps_dir(out, i, eps), &hash, s, &tr)?;
        Ok((tr, files, (s.ctx.g.n_vertices(), s.ctx.cell())))
    })?;
    let mut trs = Vec::new();
    let mut files = Vec::new();
    let mut sizes = Vec::new();
    for (t, f, n) in results {
        trs.push(t);
        files.extend(f);
        sizes.push(n);
    }
    Ok((trs, files, sizes))
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Outcome> {
    let (base, x0) = base_setup(cfg)?;
    let (trs, files, _) = flow_sweep(cfg, &base, &x0, out, jobs)?;
    let summary = json!(trs
        .iter()
        .map(|t| json!({"eps": t.eps, "steps": t.steps, "tstar": t.tstar, "max_energy_increase": t.max_energy_increase, "max_norm": t.max_norm}))
        .collect::<Vec<_>>());
    Ok(Outcome { files, summary })
}

// ----------------------------------------------------------- effective

pub fn write_effective(dir: &Path, hash: &str, s: &Setup, tr: &EffectiveTrajectory) -> Result<Vec<PathBuf>> {
    let m = s.ctx.basis.dim();
    let n = tr.d.len();
    let mut cols = columns(&["t", "dt", "w", "w_intr", "g_extr", "grad_norm", "theta_residual", "rho_error"]);
    cols.extend((0..m).map(|k| format!("xi_{k}")));
    for k in 0..n {
        cols.extend([format!("x_{k}"), format!("y_{k}"), format!("z_{k}"), format!("face_{k}")]);
    }
    let mut table = Table::new("effective_trajectory", 1, cols);
    for smp in &tr.samples {
        let mut row: Vec<Cell> = vec![
            smp.t.into(),
            smp.dt.into(),
            smp.w.into(),
            smp.w_intr.into(),
            smp.g_extr.into(),
            smp.grad_norm.into(),
            smp.theta_residual.into(),
            smp.rho_error.into(),
        ];
        row.extend(smp.xi.iter().map(|&x| Cell::F(x)));
        for p in &smp.a {
            row.extend(point_cells(p));
        }
        table.row(&row);
    }
    let path = dir.join("trajectory.csv");
    table.write(&path, hash)?;
    let first = &tr.samples[0];
    let last = tr.samples.last().unwrap();
    let summary = json!({
        "degrees": tr.d,
        "termination": tr.termination,
        "tstar": tr.tstar,
        "ledger": tr.ledger,
        "rejected_steps": tr.rejected_steps,
        "reroutes": tr.reroutes,
        "steps": tr.samples.len() - 1,
        "w_initial": first.w,
        "w_final": last.w,
        "grad_norm_initial": first.grad_norm,
        "t_final": last.t,
    });
    let j = write_json(&dir.join("summary.json"), "effective_summary", 1, hash, &summary)?;
    Ok(vec![path, j])
}

fn effective_job(cfg: &ExperimentConfig, s: &Setup) -> Result<EffectiveTrajectory> {
    log::info!("effective run on {} vertices", s.ctx.g.n_vertices());
    run_effective(&s.ctx, &s.a, &s.d, &cfg.flux, &cfg.effective)
}

pub fn cmd_effective(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let (base, _) = base_setup(cfg)?;
    let tr = effective_job(cfg, &base)?;
    let files = write_effective(&out.join("effective"), &cfg.hash(), &base, &tr)?;
    let summary = json!({"termination": tr.termination, "tstar": tr.tstar, "ledger": tr.ledger, "steps": tr.samples.len() - 1});
    Ok(Outcome { files, summary })
}

// ------------------------------------------------------------- compare

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub vertices: usize,
    pub mean_edge: f64,
    pub max_deviation: f64,
    pub gap_t0: f64,
    pub min_gap: f64,
    pub w_range: f64,
    pub horizon: f64,
    pub flow_tstar: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub gamma: f64,
    pub rows: Vec<SweepRow>,
    /// Max deviation strictly decreasing along the ε list.
    pub deviation_decreasing: bool,
    /// F_ε − nπ|log ε| − nγ ≥ W − 5% of W's range, at every compared time.
    pub inequality_holds: bool,
    /// |gap at t = 0| strictly decreasing along the ε list.
    pub initial_gap_shrinks: bool,
    pub effective_termination: crate::effective::Termination,
}

pub fn write_comparison(path: &Path, hash: &str, c: &Comparison) -> Result<()> {
    let mut t = Table::new("comparison", 1, columns(&["t", "deviation", "xi_deviation", "renormalized_gl", "w", "gap"]));
    for r in &c.rows {
        t.row(&[r.t.into(), r.deviation.into(), r.xi_deviation.into(), r.renormalized_gl.into(), r.w.into(), (r.renormalized_gl - r.w).into()]);
    }
    t.write(path, hash)
}

pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Outcome> {
    let hash = cfg.hash();
    let (base, x0) = base_setup(cfg)?;
    let gamma = core_energy()?.gamma;
    // the effective run and the ε sweep are independent
    let (eff, sweep) = rayon::join(|| effective_job(cfg, &base), || flow_sweep(cfg, &base, &x0, out, jobs));
    let eff = eff?;
    let (trs, mut files, sizes) = sweep?;
    files.extend(write_effective(&out.join("effective"), &hash, &base, &eff)?);
    let mut rows = Vec::new();
    for (i, tr) in trs.iter().enumerate() {
        let c = compare(&base.ctx.g, tr, &eff, gamma)?;
        let path = eps_dir(out, i, tr.eps).join("comparison.csv");
        write_comparison(&path, &hash, &c)?;
        files.push(path);
        rows.push(SweepRow {
            eps: tr.eps,
            vertices: sizes[i].0,
            mean_edge: sizes[i].1,
            max_deviation: c.max_deviation,
            gap_t0: c.rows[0].renormalized_gl - c.rows[0].w,
            min_gap: c.min_energy_gap,
            w_range: c.w_range,
            horizon: c.horizon,
            flow_tstar: tr.tstar,
        });
    }
    let mut t = Table::new(
        "deviation_vs_eps",
        1,
        columns(&["eps", "vertices", "mean_edge", "max_deviation", "gap_t0", "min_gap", "w_range", "horizon", "flow_tstar"]),
    );
    for r in &rows {
        t.row(&[
            r.eps.into(),
            r.vertices.into(),
            r.mean_edge.into(),
            r.max_deviation.into(),
            r.gap_t0.into(),
            r.min_gap.into(),
            r.w_range.into(),
            r.horizon.into(),
            r.flow_tstar.map(Cell::F).unwrap_or(Cell::S(String::new())),
        ]);
    }
    let dev = out.join("deviation_vs_eps.csv");
    t.write(&dev, &hash)?;
    files.push(dev);
    let report = CompareReport {
        gamma,
        deviation_decreasing: rows.windows(2).all(|w| w[1].max_deviation < w[0].max_deviation),
        inequality_holds: rows.iter().all(|r| r.min_gap >= -0.05 * r.w_range),
        initial_gap_shrinks: rows.windows(2).all(|w| w[1].gap_t0.abs() < w[0].gap_t0.abs()),
        effective_termination: eff.termination.clone(),
        rows,
    };
    files.push(write_json(&out.join("report.json"), "compare_report", 1, &hash, &report)?);
    let summary = serde_json::to_value(&report).map_err(|e| GlError::Config(e.to_string()))?;
    Ok(Outcome { files, summary })
}

// -------------------------------------------------------------- energy

#[derive(Clone, Debug, Serialize)]
pub struct LandscapePoint {
    pub i: usize,
    pub j: usize,
    pub du: f64,
    pub dv: f64,
    pub point: SurfacePoint,
    pub w: f64,
    pub w_intr: f64,
    pub g_extr: f64,
    pub grad_norm: f64,
    /// ∇ W with respect to the moved vortex.
    pub grad: [f64; 3],
    pub theta_residual: f64,
}

pub fn landscape(cfg: &ExperimentConfig, s: &Setup, jobs: usize) -> Result<Vec<LandscapePoint>> {
    let lc = &cfg.energy;
    if lc.vortex >= s.a.len() {
        return Err(GlError::Config(format!("energy.vortex = {} but there are {} vortices", lc.vortex, s.a.len())));
    }
    let p = cfg.renorm.pinned(&s.ctx, &s.a)?;
    let centre = s.a[lc.vortex];
    let (e1, e2) = tangent_frame(&normal_at(&s.ctx.g, &centre));
    let n = lc.grid;
    let off = |k: usize| if n == 1 { 0.0 } else { lc.span * (2.0 * k as f64 / (n - 1) as f64 - 1.0) };
    run_jobs(jobs, n * n, |idx| {
        let (i, j) = (idx / n, idx % n);
        let (du, dv) = (off(i), off(j));
        let q = walk(&s.ctx.g, &centre, &(e1 * du + e2 * dv))?;
        let mut a = s.a.clone();
        a[lc.vortex] = q;
        let (_, xi) = start_periods(&s.ctx, &a, &s.d, &cfg.flux)?;
        let vc = VortexConfiguration { a, d: s.d.clone(), xi, theta: Vec::new() };
        let ev = evaluate(&s.ctx, &vc, &p, true)?;
        let gr = grad_w(&s.ctx, &vc, &ev, &p)?;
        let gk = gr.total[lc.vortex];
        Ok(LandscapePoint {
            i,
            j,
            du,
            dv,
            point: q,
            w: ev.value.total,
            w_intr: ev.value.w_intr,
            g_extr: ev.value.g_extr,
            grad_norm: gr.norm(),
            grad: [gk.x, gk.y, gk.z],
            theta_residual: ev.value.diagnostics.theta_residual,
        })
    })
}

pub fn cmd_energy(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Outcome> {
    let hash = cfg.hash();
    let (base, _) = base_setup(cfg)?;
    let pts = landscape(cfg, &base, jobs)?;
    let mut t = Table::new(
        "w_landscape",
        1,
        columns(&["i", "j", "du", "dv", "x", "y", "z", "face", "w", "w_intr", "g_extr", "grad_norm", "gx", "gy", "gz", "theta_residual"]),
    );
    for p in &pts {
        let [x, y, z, f] = point_cells(&p.point);
        t.row(&[
            p.i.into(),
            p.j.into(),
            p.du.into(),
            p.dv.into(),
            x,
            y,
            z,
            f,
            p.w.into(),
            p.w_intr.into(),
            p.g_extr.into(),
            p.grad_norm.into(),
            p.grad[0].into(),
            p.grad[1].into(),
            p.grad[2].into(),
            p.theta_residual.into(),
        ]);
    }
    let path = out.join("landscape.csv");
    t.write(&path, &hash)?;
    let finite = pts.iter().all(|p| p.w.is_finite() && p.grad_norm.is_finite());
    let wmin = pts.iter().map(|p| p.w).fold(f64::INFINITY, f64::min);
    let wmax = pts.iter().map(|p| p.w).fold(f64::NEG_INFINITY, f64::max);
    let summary = json!({"points": pts.len(), "all_finite": finite, "w_min": wmin, "w_max": wmax});
    let j = write_json(&out.join("summary.json"), "landscape_summary", 1, &hash, &summary)?;
    Ok(Outcome { files: vec![path, j], summary })
}
