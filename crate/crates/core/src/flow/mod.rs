//! The rescaled Ginzburg-Landau gradient flow, well-prepared initial data
//! and vortex tracking.
//!
//! Time is on the accelerated clock: one unit of flow time is |log ε|
//! units of the plain L² gradient flow, so the step enters the schemes as
//! τ = Δt·|log ε|.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GlError, Result};
use crate::fields::{current_j, current_linearized, mat_apply, mass_inner, vorticity_from_current, Connection, EnergyBreakdown, TangentField};
use crate::geometry::point::locate;
use crate::geometry::{SurfaceGeometry, SurfacePoint, V3};
use crate::linalg::{Csr, SpdSolver, C64};
use crate::renorm::psi::check_admissible;
use crate::renorm::{canonical_field, prescribed_current, CoreProfile, SurfaceContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Backward Euler solved by Newton iteration.
    Implicit,
    /// Potential split into an implicit |u^n|²u part and an explicit −u part.
    ConvexSplitting,
    Explicit,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    /// Seed faces have vorticity density at least threshold / max(ε, h)².
    /// A resolved unit-degree core peaks near 0.7 in these units.
    pub threshold: f64,
    /// Seeds closer than this many cells are one vortex.
    pub merge_cells: f64,
    /// Capture radius for the degree sum: the larger of this many cells...
    pub capture_cells: f64,
    /// ...and this many ε.
    pub capture_eps: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        TrackParams { threshold: 0.15, merge_cells: 3.0, capture_cells: 3.0, capture_eps: 4.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    /// Set per job by the harness from its ε list, never read from files.
    #[serde(skip_deserializing)]
    pub eps: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Record a sample every `stride` steps.
    pub stride: usize,
    pub track: TrackParams,
    /// Newton tolerance on the largest update component.
    pub newton_tol: f64,
    /// Step halvings allowed when Newton fails or the energy rises.
    pub max_halvings: usize,
    /// Safety factor c of the explicit bound τ ≤ c·2/λ_max.
    pub explicit_c: f64,
    /// Keep the field at every sample.
    pub snapshots: bool,
    /// Stop at the first T* event instead of running to t_final.
    pub stop_at_tstar: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            eps: 0.1,
            dt: 1e-3,
            t_final: 0.1,
            scheme: Scheme::Implicit,
            stride: 10,
            track: TrackParams::default(),
            newton_tol: 1e-11,
            max_halvings: 6,
            explicit_c: 0.5,
            snapshots: false,
            stop_at_tstar: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.eps, self.dt, self.t_final, self.explicit_c, self.newton_tol];
        if pos.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(GlError::Config("ε, dt, t_final, explicit_c and newton_tol must be positive".into()));
        }
        if self.eps >= 1.0 {
            return Err(GlError::Config(format!("ε = {} must be below 1 for |log ε| > 0", self.eps)));
        }
        if self.stride == 0 {
            return Err(GlError::Config("stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn log_eps(&self) -> f64 {
        self.eps.ln().abs()
    }

    /// τ = Δt·|log ε|.
    pub fn tau(&self) -> f64 {
        self.dt * self.log_eps()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrackedVortex {
    pub point: SurfacePoint,
    pub degree: i32,
    /// ω-sum / 2π minus the rounded degree.
    pub defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Tracking {
    pub vortices: Vec<TrackedVortex>,
    /// Degrees nonzero and summing to χ.
    pub ok: bool,
    /// ε is below the mesh resolution; results are unreliable.
    pub unresolved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub step: usize,
    pub energy: EnergyBreakdown,
    pub tracking: Tracking,
    pub xi: Vec<f64>,
    pub max_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowTrajectory {
    pub eps: f64,
    pub samples: Vec<FlowSample>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, TangentField)>,
    /// First sample time at which tracking failed or two vortices merged.
    pub tstar: Option<f64>,
    pub steps: usize,
    /// Largest single-step energy increase (≤ 0 means monotone).
    pub max_energy_increase: f64,
    pub max_norm: f64,
    /// Σ ‖u^{n+1} − u^n‖²_M / τ over all steps.
    pub dissipation: f64,
    #[serde(skip)]
    pub final_field: TangentField,
}

/// Well-prepared data: the core profile times e^{iθ}u*[a, d, ξ].
#[allow(clippy::too_many_arguments)]
pub fn prepare_initial(
    ctx: &SurfaceContext,
    a: &[SurfacePoint],
    d: &[i32],
    xi: &[f64],
    theta: &[f64],
    eps: f64,
    b0: usize,
) -> Result<TangentField> {
    if !(eps > 0.0) {
        return Err(GlError::Config(format!("ε must be positive, got {eps}")));
    }
    check_admissible(&ctx.g, d)?;
    if let Some(k) = d.iter().position(|x| x.abs() != 1) {
        return Err(GlError::Inadmissible(format!("vortex {k} has degree {}, only ±1 is supported", d[k])));
    }
    for i in 0..a.len() {
        for k in i + 1..a.len() {
            if (a[i].pos() - a[k].pos()).norm() < 1e-12 {
                return Err(GlError::Inadmissible(format!("vortices {i} and {k} coincide")));
            }
        }
    }
    let (current, _, _) = prescribed_current(ctx, a, d, xi)?;
    let field = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &current, b0)?;
    let prof = CoreProfile::shared()?;
    let mut u = if theta.len() == field.u.len() { field.u.rotate_by(theta) } else { field.u };
    for (v, z) in u.z.iter_mut().enumerate() {
        let x = ctx.g.vertices[v];
        let r = a.iter().map(|p| (x - p.pos()).norm()).fold(f64::INFINITY, f64::min);
        *z *= prof.cutoff(r / eps, 8.0);
    }
    Ok(u)
}

/// Time stepper for one run. The implicit scheme keeps its Cholesky factor
/// across steps and only refactors when the chord iteration slows down.
pub struct Stepper<'a> {
    ctx: &'a SurfaceContext,
    cfg: FlowConfig,
    k: Csr<C64>,
    /// Newton Jacobian factor and the τ it was built for.
    jac: Option<(SpdSolver<f64>, f64)>,
    /// Factorizations done so far, for diagnostics.
    pub factorizations: usize,
    /// Steps that had to be split.
    pub halvings: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(ctx: &'a SurfaceContext, cfg: &FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let k = ctx.conn.stiffness(&ctx.g, &ctx.model.weights);
        if cfg.scheme == Scheme::Explicit {
            let smax = ctx.model.s2.iter().map(|s| s.symmetric_eigenvalues().max()).fold(0.0, f64::max);
            let bound = Self::explicit_bound(ctx, cfg, smax);
            if cfg.tau() > bound {
                return Err(GlError::Stability { dt: cfg.dt, bound: bound / cfg.log_eps() });
            }
        }
        Ok(Stepper { ctx, cfg: cfg.clone(), k, jac: None, factorizations: 0, halvings: 0 })
    }

    /// c·2/λ with λ a Gershgorin bound on the linearized operator.
    fn explicit_bound(ctx: &SurfaceContext, cfg: &FlowConfig, smax: f64) -> f64 {
        let mut row = vec![0.0; ctx.g.n_vertices()];
        for (e, &[a, b]) in ctx.g.edges.iter().enumerate() {
            let w = ctx.model.weights[e].abs();
            row[a] += 2.0 * w;
            row[b] += 2.0 * w;
        }
        let lk = row.iter().zip(&ctx.model.mass).map(|(r, m)| r / m).fold(0.0, f64::max);
        cfg.explicit_c * 2.0 / (lk + smax + 2.0 / (cfg.eps * cfg.eps))
    }

    pub fn step(&mut self, u: &TangentField) -> Result<TangentField> {
        let tau = self.cfg.tau();
        match self.cfg.scheme {
            Scheme::Implicit => self.advance(u, tau, 0),
            Scheme::ConvexSplitting => self.splitting_step(u, tau),
            Scheme::Explicit => {
                let g = self.ctx.model.neg_gradient(&self.k, u, self.cfg.eps);
                Ok(TangentField { z: u.z.iter().zip(&g.z).map(|(a, b)| a + b * tau).collect() })
            }
        }
    }

    pub fn energy(&self, u: &TangentField) -> EnergyBreakdown {
        self.ctx.model.energy(&self.ctx.g, &self.ctx.conn, u, self.cfg.eps)
    }

    /// (M/τ + K + MS² + M|u^n|²/ε²) u^{n+1} = M u^n (1/τ + 1/ε²).
    fn splitting_step(&mut self, u: &TangentField, tau: f64) -> Result<TangentField> {
        let c = 1.0 / (self.cfg.eps * self.cfg.eps);
        let m = &self.ctx.model.mass;
        // S² is real, so only its isotropic part fits a complex matrix; the
        // rest goes to the right-hand side.
        let mut t = self.k.triplets();
        let mut rhs = Vec::with_capacity(u.len());
        for v in 0..u.len() {
            let z = u.z[v];
            let s = &self.ctx.model.s2[v];
            let iso = 0.5 * (s[(0, 0)] + s[(1, 1)]);
            t.push((v, v, C64::new(m[v] * (1.0 / tau + iso + c * z.norm_sqr()), 0.0)));
            rhs.push((z * (1.0 / tau + c) - (mat_apply(s, z) - z * iso)) * m[v]);
        }
        let n = u.len();
        let solver = SpdSolver::new(Csr::from_triplets(n, n, &t))?;
        self.factorizations += 1;
        Ok(TangentField { z: solver.solve(&rhs) })
    }

    /// One backward Euler step of length τ, split in halves on failure.
    fn advance(&mut self, u: &TangentField, tau: f64, depth: usize) -> Result<TangentField> {
        if let Some(w) = self.newton(u, tau)? {
            if self.energy(&w).total <= self.energy(u).total {
                return Ok(w);
            }
        }
        if depth >= self.cfg.max_halvings {
            return Err(GlError::Solver(format!("implicit step failed after {depth} halvings (τ = {tau:e})")));
        }
        self.halvings += 1;
        let mid = self.advance(u, 0.5 * tau, depth + 1)?;
        self.advance(&mid, 0.5 * tau, depth + 1)
    }

    /// Chord iteration on R(w) = M(w − u)/τ + ∇F(w), refactoring the
    /// Jacobian when the contraction drops below 1/4 per iteration.
    /// `None` means no convergence or an indefinite Jacobian.
    fn newton(&mut self, u: &TangentField, tau: f64) -> Result<Option<TangentField>> {
        let mut w = u.clone();
        if self.jac.as_ref().is_none_or(|j| j.1 != tau) && !self.refactor(&w, tau)? {
            return Ok(None);
        }
        let mut refactors = 0;
        let mut prev = f64::INFINITY;
        for _ in 0..60 {
            let r = self.residual(u, &w, tau);
            let d = self.jac.as_ref().expect("factored").0.solve(&r);
            let mut big = 0.0f64;
            for (v, z) in w.z.iter_mut().enumerate() {
                let dz = C64::new(d[2 * v], d[2 * v + 1]);
                *z -= dz;
                big = big.max(dz.norm());
            }
            if !big.is_finite() {
                return Ok(None);
            }
            if big < self.cfg.newton_tol {
                return Ok(Some(w));
            }
            if big > 0.25 * prev {
                if refactors == 4 || !self.refactor(&w, tau)? {
                    return Ok(None);
                }
                refactors += 1;
                prev = f64::INFINITY;
            } else {
                prev = big;
            }
        }
        Ok(None)
    }

    /// `false` when the Jacobian at w is not positive definite.
    fn refactor(&mut self, w: &TangentField, tau: f64) -> Result<bool> {
        let j = self.jacobian(w, tau);
        self.factorizations += 1;
        let res = match self.jac.take() {
            Some((mut s, _)) => s.refactor(j).map(|_| s),
            None => SpdSolver::new(j),
        };
        match res {
            Ok(mut s) => {
                // the outer iteration corrects solve errors already
                s.refine_steps = 0;
                self.jac = Some((s, tau));
                Ok(true)
            }
            Err(GlError::Solver(msg)) => {
                log::debug!("implicit Jacobian rejected: {msg}");
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }

    /// Residual in interleaved real coordinates (re, im per vertex).
    fn residual(&self, u: &TangentField, w: &TangentField, tau: f64) -> Vec<f64> {
        let c = 1.0 / (self.cfg.eps * self.cfg.eps);
        let kw = self.k.matvec(&w.z);
        let m = &self.ctx.model.mass;
        let mut r = Vec::with_capacity(2 * w.len());
        for v in 0..w.len() {
            let z = w.z[v];
            let g = (z - u.z[v]) / tau + mat_apply(&self.ctx.model.s2[v], z) + z * (c * (z.norm_sqr() - 1.0));
            let rv = kw[v] + g * m[v];
            r.push(rv.re);
            r.push(rv.im);
        }
        r
    }

    /// Real symmetric Jacobian. A complex entry kr + i·ki becomes the
    /// block [[kr, −ki], [ki, kr]], and every block is written in full so
    /// the pattern never changes between refactorizations.
    fn jacobian(&self, w: &TangentField, tau: f64) -> Csr<f64> {
        let n = w.len();
        let c = 1.0 / (self.cfg.eps * self.cfg.eps);
        let mut t = Vec::with_capacity(4 * (self.k.nnz() + n));
        for r in 0..n {
            for p in self.k.indptr[r]..self.k.indptr[r + 1] {
                let (col, kv) = (self.k.indices[p], self.k.values[p]);
                t.push((2 * r, 2 * col, kv.re));
                t.push((2 * r, 2 * col + 1, -kv.im));
                t.push((2 * r + 1, 2 * col, kv.im));
                t.push((2 * r + 1, 2 * col + 1, kv.re));
            }
        }
        for v in 0..n {
            let z = w.z[v];
            let s = &self.ctx.model.s2[v];
            let m = self.ctx.model.mass[v];
            let d = 1.0 / tau + c * (z.norm_sqr() - 1.0);
            let x = [z.re, z.im];
            for a in 0..2 {
                for b in 0..2 {
                    let id = if a == b { d } else { 0.0 };
                    t.push((2 * v + a, 2 * v + b, m * (id + s[(a, b)] + 2.0 * c * x[a] * x[b])));
                }
            }
        }
        Csr::from_triplets(2 * n, 2 * n, &t)
    }
}

/// Harmonic coefficients of j(u).
pub fn flux_coefficients(ctx: &SurfaceContext, u: &TangentField) -> Vec<f64> {
    if ctx.basis.dim() == 0 {
        return Vec::new();
    }
    let (j, _) = current_j(&ctx.g, &ctx.conn, u);
    ctx.basis.coefficients(&ctx.dec, &j)
}

pub fn flux_series(traj: &FlowTrajectory) -> Vec<(f64, Vec<f64>)> {
    traj.samples.iter().map(|s| (s.t, s.xi.clone())).collect()
}

/// Vortices from the vorticity of the linearized current, which spreads
/// smoothly over each core instead of sitting on single faces.
pub fn track_vortices(g: &SurfaceGeometry, conn: &Connection, u: &TangentField, p: &TrackParams, eps: f64) -> Tracking {
    let j = current_linearized(g, conn, u);
    let om = vorticity_from_current(g, conn, &j);
    let dens: Vec<f64> = om.iter().zip(&g.face_areas).map(|(w, a)| w.abs() / a).collect();
    let h = g.mean_edge;
    let unresolved = eps < h;
    let level = p.threshold / (eps * eps).max(h * h);
    let hot: Vec<bool> = dens.iter().map(|&x| x >= level).collect();
    // connected components among hot faces
    let mut comp = vec![usize::MAX; g.n_faces()];
    let mut seeds: Vec<(V3, f64, usize)> = Vec::new();
    for f0 in 0..g.n_faces() {
        if !hot[f0] || comp[f0] != usize::MAX {
            continue;
        }
        let id = seeds.len();
        let mut stack = vec![f0];
        comp[f0] = id;
        let (mut x, mut w, mut best) = (V3::zeros(), 0.0, (f0, 0.0));
        while let Some(f) = stack.pop() {
            let wf = om[f].abs();
            x += g.centroid(f) * wf;
            w += wf;
            if dens[f] > best.1 {
                best = (f, dens[f]);
            }
            for k in 0..3 {
                let nb = g.neighbor_across(f, k);
                if hot[nb] && comp[nb] == usize::MAX {
                    comp[nb] = id;
                    stack.push(nb);
                }
            }
        }
        seeds.push((x / w, w, best.0));
    }
    // merge seeds within the merge radius (heavier seed absorbs lighter)
    let merge = p.merge_cells * h;
    let mut alive = vec![true; seeds.len()];
    for i in 0..seeds.len() {
        for k in 0..seeds.len() {
            if i != k && alive[i] && alive[k] && (seeds[i].0 - seeds[k].0).norm() < merge {
                let (a, b) = if seeds[i].1 >= seeds[k].1 { (i, k) } else { (k, i) };
                let wsum = seeds[a].1 + seeds[b].1;
                seeds[a].0 = (seeds[a].0 * seeds[a].1 + seeds[b].0 * seeds[b].1) / wsum;
                seeds[a].1 = wsum;
                alive[b] = false;
            }
        }
    }
    let seeds: Vec<_> = seeds.into_iter().zip(alive).filter(|x| x.1).map(|x| x.0).collect();
    let cap = (p.capture_cells * h).max(p.capture_eps * eps);
    let mut sums = vec![0.0; seeds.len()];
    let mut bary = vec![(V3::zeros(), 0.0); seeds.len()];
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); seeds.len()];
    for f in 0..g.n_faces() {
        let c = g.centroid(f);
        let near = seeds
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (c - s.0).norm()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if let Some((i, dist)) = near {
            if dist < cap {
                sums[i] += om[f];
                members[i].push(f);
            }
        }
    }
    let mut vortices = Vec::new();
    for i in 0..seeds.len() {
        let q = sums[i] / (2.0 * PI);
        let degree = q.round() as i32;
        if degree == 0 {
            continue;
        }
        // the excess over the seed level fades continuously as faces cross
        // it, so the position moves smoothly with the core
        for &f in &members[i] {
            let w = (om[f] * degree.signum() as f64 - level * g.face_areas[f]).max(0.0);
            bary[i].0 += g.centroid(f) * w;
            bary[i].1 += w;
        }
        let x = bary[i].0 / bary[i].1;
        let point = locate(g, seeds[i].2, &x);
        vortices.push(TrackedVortex { point, degree, defect: q - degree as f64 });
    }
    let total: i64 = vortices.iter().map(|v| v.degree as i64).sum();
    Tracking { ok: total == g.euler_characteristic(), vortices, unresolved }
}

fn min_separation(t: &Tracking) -> f64 {
    let v = &t.vortices;
    let mut m = f64::INFINITY;
    for i in 0..v.len() {
        for k in i + 1..v.len() {
            m = m.min((v[i].point.pos() - v[k].point.pos()).norm());
        }
    }
    m
}

/// Integrate from u0 to t_final, sampling every `stride` steps.
pub fn run(ctx: &SurfaceContext, u0: &TangentField, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    let mut stepper = Stepper::new(ctx, cfg)?;
    let nsteps = (cfg.t_final / cfg.dt).round() as usize;
    let tau = cfg.tau();
    let mut u = u0.clone();
    let mut e = stepper.energy(&u);
    let mut traj = FlowTrajectory {
        eps: cfg.eps,
        samples: Vec::new(),
        snapshots: Vec::new(),
        tstar: None,
        steps: 0,
        max_energy_increase: f64::NEG_INFINITY,
        max_norm: u.max_norm(),
        dissipation: 0.0,
        final_field: TangentField::zeros(0),
    };
    let merge = cfg.track.merge_cells * ctx.cell();
    let record = |traj: &mut FlowTrajectory, step: usize, u: &TangentField, e: EnergyBreakdown| {
        let t = step as f64 * cfg.dt;
        let tracking = track_vortices(&ctx.g, &ctx.conn, u, &cfg.track, cfg.eps);
        if traj.tstar.is_none() && (!tracking.ok || min_separation(&tracking) < merge) {
            traj.tstar = Some(t);
        }
        if cfg.snapshots {
            traj.snapshots.push((t, u.clone()));
        }
        traj.samples.push(FlowSample { t, step, energy: e, tracking, xi: flux_coefficients(ctx, u), max_norm: u.max_norm() });
    };
    record(&mut traj, 0, &u, e);
    for n in 1..=nsteps {
        let next = stepper.step(&u)?;
        let en = stepper.energy(&next);
        if !en.total.is_finite() {
            return Err(GlError::Solver(format!("energy became non-finite at step {n}")));
        }
        traj.max_energy_increase = traj.max_energy_increase.max(en.total - e.total);
        let du = TangentField { z: next.z.iter().zip(&u.z).map(|(a, b)| a - b).collect() };
        traj.dissipation += mass_inner(&ctx.model.mass, &du, &du) / tau;
        traj.max_norm = traj.max_norm.max(next.max_norm());
        u = next;
        e = en;
        traj.steps = n;
        if n % cfg.stride == 0 || n == nsteps {
            record(&mut traj, n, &u, e);
            if cfg.stop_at_tstar && traj.tstar.is_some() {
                break;
            }
        }
    }
    traj.final_field = u;
    Ok(traj)
}
