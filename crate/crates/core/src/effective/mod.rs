//! The limiting vortex dynamics π ȧ_k = −∇_{a_k} W and its comparison
//! with tracked GL trajectories.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GlError, Result};
use crate::flow::FlowTrajectory;
use crate::geometry::analytic::Analytic;
use crate::geometry::point::{exp_map, log_map, project_tangent};
use crate::geometry::{SurfaceGeometry, SurfacePoint, V3};
use crate::renorm::intrinsic::min_separation;
use crate::renorm::{evaluate, grad_w, start_periods, xi_update, Evaluation, FluxSpec, Gradient, PeriodTracker, RenormParams, SurfaceContext, VortexConfiguration};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectiveConfig {
    /// Largest step; steps are halved on rejection and regrow afterwards.
    pub dt: f64,
    pub t_final: f64,
    /// A step is accepted when W rises by at most this much.
    pub energy_tol: f64,
    pub max_halvings: u32,
    /// Stop when two vortices come closer than this many cells.
    pub collision_cells: f64,
    /// Supplied by the harness from the experiment's shared settings.
    #[serde(skip_deserializing)]
    pub renorm: RenormParams,
}

impl Default for EffectiveConfig {
    fn default() -> Self {
        EffectiveConfig { dt: 5e-3, t_final: 0.1, energy_tol: 1e-8, max_halvings: 10, collision_cells: 4.0, renorm: RenormParams::default() }
    }
}

impl EffectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_final > 0.0 && self.energy_tol >= 0.0 && self.collision_cells > 0.0) {
            return Err(GlError::Config("dt and t_final must be positive, energy_tol non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    /// Two vortices approached the collision radius.
    Collision,
    /// The step could not be made acceptable by halving.
    StepFailure(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveSample {
    pub t: f64,
    pub a: Vec<SurfacePoint>,
    pub xi: Vec<f64>,
    pub w: f64,
    pub w_intr: f64,
    pub g_extr: f64,
    pub grad_norm: f64,
    /// Euler-Lagrange residual of the critical θ.
    pub theta_residual: f64,
    /// Spread of the excision-radius extrapolation for W^intr.
    pub rho_error: f64,
    /// Step that produced this sample (0 for the first).
    pub dt: f64,
}

/// W(0) − W(t) against Σ h(π/2·|a'|² + |∇W|²/(2π)) with a' the realized
/// displacement over each step. For a curve of maximal slope both halves
/// are equal and the sum matches the drop of W.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Ledger {
    pub w_drop: f64,
    pub dissipation: f64,
    /// |drop − dissipation| / max(drop, dissipation).
    pub imbalance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveTrajectory {
    pub d: Vec<i32>,
    pub samples: Vec<EffectiveSample>,
    pub termination: Termination,
    pub tstar: Option<f64>,
    pub ledger: Ledger,
    pub rejected_steps: usize,
    pub reroutes: usize,
}

struct State {
    a: Vec<SurfacePoint>,
    xi: Vec<f64>,
    ev: Evaluation,
    grad: Gradient,
}

fn velocity(grad: &Gradient, d: &[i32]) -> Vec<V3> {
    grad.total.iter().zip(d).map(|(g, &k)| -g / (PI * (k * k) as f64)).collect()
}

fn eval_at(ctx: &SurfaceContext, a: Vec<SurfacePoint>, d: &[i32], xi: Vec<f64>, theta: &[f64], p: &RenormParams) -> Result<State> {
    let cfg = VortexConfiguration { a, d: d.to_vec(), xi, theta: theta.to_vec() };
    let ev = evaluate(ctx, &cfg, p, true)?;
    let grad = grad_w(ctx, &cfg, &ev, p)?;
    Ok(State { a: cfg.a, xi: cfg.xi, ev, grad })
}

fn moved(g: &SurfaceGeometry, a: &[SurfacePoint], v: &[V3], h: f64) -> Result<Vec<SurfacePoint>> {
    a.iter().zip(v).map(|(p, w)| exp_map(g, p, &(w * h))).collect()
}

/// One Heun step of size h from `s`. The predictor's velocity is moved to
/// the base tangent plane by projection.
fn heun(ctx: &SurfaceContext, tracker: &PeriodTracker, s: &State, d: &[i32], p: &RenormParams, h: f64) -> Result<State> {
    let k1 = velocity(&s.grad, d);
    let a1 = moved(&ctx.g, &s.a, &k1, h)?;
    let xi1 = xi_update(ctx, tracker, &s.a, &a1, d)?;
    let s1 = eval_at(ctx, a1, d, xi1, &s.ev.theta, p)?;
    let k2 = velocity(&s1.grad, d);
    let avg: Vec<V3> = (0..k1.len()).map(|i| 0.5 * (k1[i] + project_tangent(&ctx.g, &s.a[i], &k2[i]))).collect();
    let a2 = moved(&ctx.g, &s.a, &avg, h)?;
    let xi2 = xi_update(ctx, tracker, &s.a, &a2, d)?;
    eval_at(ctx, a2, d, xi2, &s1.ev.theta, p)
}

fn sample(t: f64, s: &State, dt: f64) -> EffectiveSample {
    EffectiveSample {
        t,
        a: s.a.clone(),
        xi: s.xi.clone(),
        w: s.ev.value.total,
        w_intr: s.ev.value.w_intr,
        g_extr: s.ev.value.g_extr,
        grad_norm: s.grad.norm(),
        theta_residual: s.ev.value.diagnostics.theta_residual,
        rho_error: s.ev.value.diagnostics.rho_error,
        dt,
    }
}

/// Σ |∇_k W|² / (2π d_k²).
fn slope_rate(s: &State, d: &[i32]) -> f64 {
    s.grad.total.iter().zip(d).map(|(g, &k)| g.norm_squared() / (2.0 * PI * (k * k) as f64)).sum()
}

/// Σ π d_k²/2 · |Δa_k|²/h for one step.
fn metric_part(g: &SurfaceGeometry, from: &[SurfacePoint], to: &[SurfacePoint], d: &[i32], h: f64) -> f64 {
    from.iter().zip(to).zip(d).map(|((p, q), &k)| 0.5 * PI * (k * k) as f64 * log_map(g, p, q).norm_squared() / h).sum()
}

/// Integrate the vortex ODE from `a0` with ξ set by `flux`.
pub fn run_effective(ctx: &SurfaceContext, a0: &[SurfacePoint], d: &[i32], flux: &FluxSpec, cfg: &EffectiveConfig) -> Result<EffectiveTrajectory> {
    cfg.validate()?;
    let p = cfg.renorm.pinned(ctx, a0)?;
    let (mut tracker, xi0) = start_periods(ctx, a0, d, flux)?;
    let mut s = eval_at(ctx, a0.to_vec(), d, xi0, &[], &p)?;
    let mut traj = EffectiveTrajectory {
        d: d.to_vec(),
        samples: vec![sample(0.0, &s, 0.0)],
        termination: Termination::Completed,
        tstar: None,
        ledger: Ledger::default(),
        rejected_steps: 0,
        reroutes: 0,
    };
    let w0 = s.ev.value.total;
    let collide = cfg.collision_cells * ctx.cell();
    let mut t = 0.0;
    let mut h = cfg.dt;
    let mut rate = slope_rate(&s, d);
    'run: while t < cfg.t_final - 1e-12 {
        h = h.min(cfg.t_final - t);
        let mut halvings = 0;
        let next = loop {
            let trial = heun(ctx, &tracker, &s, d, &p, h);
            match trial {
                Ok(n) if n.ev.value.total <= s.ev.value.total + cfg.energy_tol => break n,
                Ok(_) | Err(GlError::TrustRegion { .. }) if halvings < cfg.max_halvings => {}
                Err(GlError::TooClose { .. }) => {
                    traj.termination = Termination::Collision;
                    traj.tstar = Some(t);
                    break 'run;
                }
                Ok(n) => {
                    traj.termination = Termination::StepFailure(format!(
                        "W rose by {:.3e} with dt = {h:.3e}",
                        n.ev.value.total - s.ev.value.total
                    ));
                    break 'run;
                }
                Err(e) => {
                    traj.termination = Termination::StepFailure(e.to_string());
                    break 'run;
                }
            }
            halvings += 1;
            traj.rejected_steps += 1;
            h *= 0.5;
        };
        tracker.advance(&ctx.g, &ctx.dec, &ctx.conn, &ctx.basis, &s.a, &next.a, &next.ev.tau)?;
        let r = slope_rate(&next, d);
        traj.ledger.dissipation += 0.5 * h * (rate + r) + metric_part(&ctx.g, &s.a, &next.a, d, h);
        rate = r;
        t += h;
        s = next;
        traj.samples.push(sample(t, &s, h));
        if halvings == 0 {
            h = (2.0 * h).min(cfg.dt);
        }
        if min_separation(&s.a) < collide {
            traj.termination = Termination::Collision;
            traj.tstar = Some(t);
            break;
        }
    }
    traj.reroutes = tracker.reroutes;
    traj.ledger.w_drop = w0 - s.ev.value.total;
    let scale = traj.ledger.w_drop.abs().max(traj.ledger.dissipation);
    traj.ledger.imbalance = if scale > 0.0 { (traj.ledger.w_drop - traj.ledger.dissipation).abs() / scale } else { 0.0 };
    Ok(traj)
}

/// Surface distance between ambient points: great-circle on a sphere,
/// chord elsewhere.
pub fn distance(g: &SurfaceGeometry, x: &V3, y: &V3) -> f64 {
    match g.analytic {
        Some(Analytic::Sphere { radius }) => {
            let (x, y) = (x.normalize(), y.normalize());
            radius * x.cross(&y).norm().atan2(x.dot(&y))
        }
        _ => (x - y).norm(),
    }
}

/// Minimum-cost perfect matching of a square cost matrix; returns the
/// column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // potentials formulation, 1-based with a sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let c = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if c < minv[j] {
                        minv[j] = c;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    /// Largest matched distance between GL and effective vortices.
    pub deviation: f64,
    pub xi_deviation: f64,
    /// F_ε − nπ|log ε| − nγ.
    pub renormalized_gl: f64,
    pub w: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub eps: f64,
    pub rows: Vec<ComparisonRow>,
    pub max_deviation: f64,
    /// Time range compared: up to the first T* of either run.
    pub horizon: f64,
    /// min over rows of (renormalized_gl − w).
    pub min_energy_gap: f64,
    pub w_range: f64,
}

fn effective_at(traj: &EffectiveTrajectory, t: f64) -> (Vec<V3>, Vec<f64>, f64) {
    let s = &traj.samples;
    let k = s.partition_point(|x| x.t <= t).clamp(1, s.len().max(2) - 1);
    if s.len() == 1 {
        return (s[0].a.iter().map(|p| p.pos()).collect(), s[0].xi.clone(), s[0].w);
    }
    let (l, r) = (&s[k - 1], &s[k]);
    let f = ((t - l.t) / (r.t - l.t)).clamp(0.0, 1.0);
    let a = l.a.iter().zip(&r.a).map(|(x, y)| x.pos() * (1.0 - f) + y.pos() * f).collect();
    let xi = l.xi.iter().zip(&r.xi).map(|(x, y)| x * (1.0 - f) + y * f).collect();
    (a, xi, l.w * (1.0 - f) + r.w * f)
}

/// Match tracked GL vortices to the effective ones at each GL sample.
pub fn compare(g: &SurfaceGeometry, flow: &FlowTrajectory, eff: &EffectiveTrajectory, gamma: f64) -> Result<Comparison> {
    let n = eff.d.len();
    let t_eff = eff.samples.last().map(|s| s.t).unwrap_or(0.0);
    let mut horizon = t_eff;
    if let Some(ts) = flow.tstar {
        horizon = horizon.min(ts);
    }
    if let Some(ts) = eff.tstar {
        horizon = horizon.min(ts);
    }
    let log_eps = flow.eps.ln().abs();
    let mut rows = Vec::new();
    for s in flow.samples.iter().filter(|s| s.t <= horizon + 1e-12) {
        let tv = &s.tracking.vortices;
        if !s.tracking.ok || tv.len() != n {
            break;
        }
        let (a, xi, w) = effective_at(eff, s.t);
        let cost: Vec<Vec<f64>> = tv
            .iter()
            .map(|v| {
                (0..n)
                    .map(|k| if v.degree == eff.d[k] { distance(g, &v.point.pos(), &a[k]) } else { 1e30 })
                    .collect()
            })
            .collect();
        let m = hungarian(&cost);
        let deviation = m.iter().enumerate().map(|(i, &k)| cost[i][k]).fold(0.0, f64::max);
        let xi_deviation = s.xi.iter().zip(&xi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let renormalized_gl = s.energy.total - n as f64 * (PI * log_eps + gamma);
        rows.push(ComparisonRow { t: s.t, deviation, xi_deviation, renormalized_gl, w });
    }
    if rows.is_empty() {
        return Err(GlError::Config("no GL sample with the effective vortex count to compare".into()));
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let min_energy_gap = rows.iter().map(|r| r.renormalized_gl - r.w).fold(f64::INFINITY, f64::min);
    let wmax = rows.iter().map(|r| r.w).fold(f64::NEG_INFINITY, f64::max);
    let wmin = rows.iter().map(|r| r.w).fold(f64::INFINITY, f64::min);
    Ok(Comparison { eps: flow.eps, horizon, max_deviation, min_energy_gap, w_range: wmax - wmin, rows })
}

#[cfg(test)]
mod tests;
