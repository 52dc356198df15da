//! Renormalized energy of vortex configurations.
//!
//! The pipeline for fixed (a, d, ξ) is: face Poisson solve for Ψ, the
//! prescribed current τ + ξ with τ = d*Ψ, the canonical unit field u* whose
//! current is that 1-form, the critical phase θ of 𝒢(u*, ·), and finally
//! W = W^intr + 𝒢. W^intr is read off τ + ξ directly, u* only enters 𝒢.

pub mod canonical;
pub mod extrinsic;
pub mod intrinsic;
pub mod periods;
pub mod profile;
pub mod psi;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dec::{Cochain0, Cochain1, Dec, HarmonicBasis};
use crate::error::{GlError, Result};
use crate::fields::{Connection, EnergyModel};
use crate::geometry::point::normal_at;
use crate::geometry::{SurfaceGeometry, SurfacePoint, V3};

pub use canonical::{canonical_field, CanonicalField};
pub use extrinsic::{Extrinsic, GValue, ThetaSolve};
pub use intrinsic::IntrinsicValue;
pub use periods::{FluxSpec, PeriodTracker};
pub use profile::{core_energy, CoreEnergy, CoreProfile};

/// Everything about a surface that does not depend on the vortices.
pub struct SurfaceContext {
    pub g: SurfaceGeometry,
    /// Carries both Poisson factorizations.
    pub dec: Dec,
    pub conn: Connection,
    pub basis: HarmonicBasis,
    pub model: EnergyModel,
}

impl SurfaceContext {
    pub fn new(g: SurfaceGeometry) -> Result<Self> {
        let dec = Dec::with_solvers(&g)?;
        let conn = Connection::levi_civita(&g);
        let basis = HarmonicBasis::new(&g, &dec)?;
        let model = EnergyModel::new(&g);
        Ok(SurfaceContext { g, dec, conn, basis, model })
    }

    /// The mesh cell size used for every "n cells" parameter.
    pub fn cell(&self) -> f64 {
        self.g.mean_edge
    }

    /// Vertex maximizing the distance to the nearest vortex.
    pub fn farthest_vertex(&self, a: &[SurfacePoint]) -> usize {
        let mut best = (0, -1.0);
        for (v, x) in self.g.vertices.iter().enumerate() {
            let d = a.iter().map(|p| (x - p.pos()).norm()).fold(f64::INFINITY, f64::min);
            if d > best.1 {
                best = (v, d);
            }
        }
        best.0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VortexConfiguration {
    pub a: Vec<SurfacePoint>,
    pub d: Vec<i32>,
    /// Harmonic flux coefficients in the surface's orthonormal basis.
    pub xi: Vec<f64>,
    #[serde(skip)]
    pub theta: Cochain0,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RenormParams {
    /// Outer excision radius ρ₀ in cells.
    pub rho_cells: f64,
    /// Stress-integral radius η₀ in cells.
    pub eta_cells: f64,
    pub theta_tol: f64,
    pub theta_max_iter: usize,
    /// Normalization vertex b⁰; defaults to the one farthest from the vortices.
    pub b0: Option<usize>,
    /// Absolute radii overriding the cell counts. Runs that move vortices
    /// pin these at the start so that W stays one smooth function.
    pub rho0: Option<f64>,
    pub eta0: Option<f64>,
}

impl Default for RenormParams {
    fn default() -> Self {
        RenormParams { rho_cells: 10.0, eta_cells: 8.0, theta_tol: 1e-8, theta_max_iter: 500, b0: None, rho0: None, eta0: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RenormDiagnostics {
    pub rho_table: Vec<(f64, f64)>,
    pub rho_error: f64,
    pub theta_residual: f64,
    pub theta_iterations: usize,
    pub psi_residual: f64,
    pub canonical_iterations: usize,
    /// ρ₀ actually used, after shrinking for close vortices.
    pub rho0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RenormalizedValue {
    pub w_intr: f64,
    pub g_extr: f64,
    pub total: f64,
    pub diagnostics: RenormDiagnostics,
}

/// Full evaluation state, kept so the gradient can reuse the solves.
pub struct Evaluation {
    pub value: RenormalizedValue,
    pub field: CanonicalField,
    pub theta: Cochain0,
    pub g_parts: GValue,
    /// τ + ξ on edges.
    pub current: Cochain1,
    pub tau: Cochain1,
}

/// The excision radius for a configuration: ρ_cells cells, halved until
/// the discs stay clear of each other. Halving in steps rather than shrinking
/// continuously keeps W a smooth function of the positions between switches.
pub fn rho_for(ctx: &SurfaceContext, a: &[SurfacePoint], p: &RenormParams) -> Result<f64> {
    shrunk_radius(ctx, a, p.rho0.unwrap_or(p.rho_cells * ctx.cell()))
}

pub fn eta_for(ctx: &SurfaceContext, a: &[SurfacePoint], p: &RenormParams) -> Result<f64> {
    shrunk_radius(ctx, a, p.eta0.unwrap_or(p.eta_cells * ctx.cell()))
}

impl RenormParams {
    /// Copy with b⁰ and both radii fixed from a starting configuration.
    pub fn pinned(&self, ctx: &SurfaceContext, a: &[SurfacePoint]) -> Result<RenormParams> {
        let mut q = self.clone();
        q.b0 = Some(self.b0.unwrap_or_else(|| ctx.farthest_vertex(a)));
        q.rho0 = Some(rho_for(ctx, a, self)?);
        q.eta0 = Some(eta_for(ctx, a, self)?);
        Ok(q)
    }
}

fn shrunk_radius(ctx: &SurfaceContext, a: &[SurfacePoint], start: f64) -> Result<f64> {
    let h = ctx.cell();
    let sep = intrinsic::min_separation(a);
    let mut r = start;
    while sep <= 2.5 * r {
        r *= 0.5;
    }
    if r < 4.0 * h {
        return Err(GlError::TooClose { sep, limit: 10.0 * h });
    }
    Ok(r)
}

pub fn prescribed_current(ctx: &SurfaceContext, a: &[SurfacePoint], d: &[i32], xi: &[f64]) -> Result<(Cochain1, Cochain1, f64)> {
    let sol = psi::solve_psi(&ctx.g, &ctx.dec, &ctx.conn, a, d)?;
    if xi.len() != ctx.basis.dim() {
        return Err(GlError::Config(format!("{} flux coefficients given, {} needed", xi.len(), ctx.basis.dim())));
    }
    let mut j = sol.tau.clone();
    if !xi.is_empty() {
        for (x, h) in j.iter_mut().zip(ctx.basis.combine(xi)) {
            *x += h;
        }
    }
    Ok((j, sol.tau, sol.residual))
}

/// W at a configuration. With `solve_theta` false, θ is taken as given.
pub fn evaluate(ctx: &SurfaceContext, cfg: &VortexConfiguration, p: &RenormParams, solve_theta: bool) -> Result<Evaluation> {
    let rho0 = rho_for(ctx, &cfg.a, p)?;
    let (current, tau, psi_residual) = prescribed_current(ctx, &cfg.a, &cfg.d, &cfg.xi)?;
    let fe = psi::face_energies(&ctx.g, &current);
    let wi = intrinsic::w_intrinsic(&ctx.g, &fe, &cfg.a, &cfg.d, rho0)?;
    let b0 = p.b0.unwrap_or_else(|| ctx.farthest_vertex(&cfg.a));
    let field = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &current, b0)?;
    let ext = Extrinsic::new(&ctx.dec, &ctx.model, &field.u);
    let theta_init = if cfg.theta.len() == ctx.g.n_vertices() { cfg.theta.clone() } else { vec![0.0; ctx.g.n_vertices()] };
    let (theta, solve) = if solve_theta {
        ext.theta_critical(&theta_init, p.theta_tol, p.theta_max_iter)?
    } else {
        let r = ext.residual(&theta_init);
        (theta_init, ThetaSolve { residual: r, descent_iterations: 0, newton_iterations: 0, history: Vec::new() })
    };
    let g_parts = ext.value(&theta);
    let value = RenormalizedValue {
        w_intr: wi.value,
        g_extr: g_parts.total,
        total: wi.value + g_parts.total,
        diagnostics: RenormDiagnostics {
            rho_table: wi.table,
            rho_error: wi.error,
            theta_residual: solve.residual,
            theta_iterations: solve.descent_iterations + solve.newton_iterations,
            psi_residual,
            canonical_iterations: field.iterations,
            rho0,
        },
    };
    Ok(Evaluation { value, field, theta, g_parts, current, tau })
}

pub fn renormalized_w(ctx: &SurfaceContext, cfg: &VortexConfiguration, p: &RenormParams) -> Result<RenormalizedValue> {
    Ok(evaluate(ctx, cfg, p, true)?.value)
}

#[derive(Clone, Debug)]
pub struct Gradient {
    /// ∇_{a_k} W as ambient tangent vectors.
    pub total: Vec<V3>,
    pub intrinsic: Vec<V3>,
    /// The 2π d_k i∇θ(a_k) terms.
    pub extrinsic: Vec<V3>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.total.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Surface gradient of a vertex function at a point, from its face.
pub fn point_gradient(g: &SurfaceGeometry, f: &[f64], p: &SurfacePoint) -> V3 {
    let t = g.faces[p.face];
    let gr = g.bary_gradients(p.face);
    gr[0] * f[t[0]] + gr[1] * f[t[1]] + gr[2] * f[t[2]]
}

/// ∇_a W from an evaluation whose θ is critical.
pub fn grad_w(ctx: &SurfaceContext, cfg: &VortexConfiguration, ev: &Evaluation, p: &RenormParams) -> Result<Gradient> {
    let eta = eta_for(ctx, &cfg.a, p)?;
    let jface = psi::face_vectors(&ctx.g, &ev.current);
    let mut out = Gradient { total: Vec::new(), intrinsic: Vec::new(), extrinsic: Vec::new() };
    for (pk, &dk) in cfg.a.iter().zip(&cfg.d) {
        let gi = intrinsic::stress_gradient(&ctx.g, &jface, &ctx.conn.omega, pk, eta);
        let n = normal_at(&ctx.g, pk);
        let gt = point_gradient(&ctx.g, &ev.theta, pk);
        let gt = gt - n * n.dot(&gt);
        let ge = n.cross(&gt) * (2.0 * PI * dk as f64);
        out.intrinsic.push(gi);
        out.extrinsic.push(ge);
        out.total.push(gi + ge);
    }
    Ok(out)
}

/// Period tracker and initial ξ for a starting configuration.
pub fn start_periods(ctx: &SurfaceContext, a: &[SurfacePoint], d: &[i32], flux: &FluxSpec) -> Result<(PeriodTracker, Vec<f64>)> {
    let sol = psi::solve_psi(&ctx.g, &ctx.dec, &ctx.conn, a, d)?;
    PeriodTracker::new(&ctx.g, &ctx.dec, &ctx.conn, &ctx.basis, a, &sol.tau, flux)
}

/// ξ at new positions with the tracker's integers, without committing.
pub fn xi_update(ctx: &SurfaceContext, tracker: &PeriodTracker, a_prev: &[SurfacePoint], a_new: &[SurfacePoint], d: &[i32]) -> Result<Vec<f64>> {
    let sol = psi::solve_psi(&ctx.g, &ctx.dec, &ctx.conn, a_new, d)?;
    Ok(tracker.peek(&ctx.g, &ctx.dec, &ctx.conn, &ctx.basis, a_prev, a_new, &sol.tau)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{current_j, vorticity};
    use crate::geometry::builders::{ellipsoid, icosphere, torus};
    use crate::geometry::point::{exp_map, locate_global};
    use crate::geometry::tangent_frame;
    use crate::linalg::C64;
    use nalgebra::{Rotation3, Unit};

    fn sphere_pair(ctx: &SurfaceContext, x1: V3, deg: f64) -> Vec<SurfacePoint> {
        let ax = Unit::new_normalize(V3::new(0.2, 1.0, -0.1));
        let x2 = Rotation3::from_axis_angle(&ax, deg.to_radians()) * x1;
        vec![locate_global(&ctx.g, &x1), locate_global(&ctx.g, &x2)]
    }

    fn config(a: Vec<SurfacePoint>, d: Vec<i32>, xi: Vec<f64>) -> VortexConfiguration {
        VortexConfiguration { a, d, xi, theta: vec![] }
    }

    fn sphere_w_exact(a: &[SurfacePoint], r: f64) -> f64 {
        let chord = (a[0].pos() - a[1].pos()).norm() / r;
        4.0 * PI * (2f64.ln() - 0.5) - 2.0 * PI * chord.ln() + 2.0 * PI * r.ln()
    }

    #[test]
    fn sphere_w_matches_closed_form() {
        let ctx = SurfaceContext::new(icosphere(4, 1.0).unwrap()).unwrap();
        let p = RenormParams { rho_cells: 8.0, ..Default::default() };
        let x1 = V3::new(0.3f64.sin(), 0.0, 0.3f64.cos());
        for deg in [180.0, 150.0, 120.0] {
            let a = sphere_pair(&ctx, x1, deg);
            let v = renormalized_w(&ctx, &config(a.clone(), vec![1, 1], vec![]), &p).unwrap();
            let exact = sphere_w_exact(&a, 1.0);
            assert!((v.w_intr - exact).abs() < 3e-2, "{deg}: {} vs {exact}", v.w_intr);
            assert_eq!(v.total, v.w_intr + v.g_extr);
        }
    }

    #[test]
    fn sphere_extrinsic_part_is_constant() {
        let r = 1.5;
        let ctx = SurfaceContext::new(icosphere(4, r).unwrap()).unwrap();
        let x1 = V3::new(0.0, 0.0, r);
        let p = RenormParams { rho_cells: 6.0, ..Default::default() };
        let want = ctx.g.total_area() / (2.0 * r * r);
        for deg in [180.0, 100.0] {
            let a = sphere_pair(&ctx, x1, deg);
            let cfg = config(a, vec![1, 1], vec![]);
            let ev = evaluate(&ctx, &cfg, &p, true).unwrap();
            assert!((ev.value.g_extr - want).abs() < 1e-10 * want);
            assert!(ev.theta.iter().all(|t| t.abs() < 1e-8));
            let gr = grad_w(&ctx, &cfg, &ev, &p).unwrap();
            assert!(gr.extrinsic.iter().all(|v| v.norm() < 1e-8));
        }
    }

    #[test]
    fn antipodal_pair_is_a_minimum_along_a_great_circle() {
        let ctx = SurfaceContext::new(icosphere(4, 1.0).unwrap()).unwrap();
        let x1 = V3::new(0.0, 0.0, 1.0);
        let a0 = vec![locate_global(&ctx.g, &x1)];
        let p = RenormParams::default().pinned(&ctx, &[a0[0], locate_global(&ctx.g, &-x1)]).unwrap();
        let scan: Vec<f64> = [-16.0, -8.0, 0.0, 8.0, 16.0]
            .iter()
            .map(|&deg: &f64| {
                let x2 = Rotation3::from_axis_angle(&V3::x_axis(), (180.0 + deg).to_radians()) * x1;
                let a = vec![a0[0], locate_global(&ctx.g, &x2)];
                renormalized_w(&ctx, &config(a, vec![1, 1], vec![]), &p).unwrap().total
            })
            .collect();
        assert!(scan[2] < scan[1] && scan[2] < scan[3], "{scan:?}");
        assert!(scan[1] < scan[0] && scan[3] < scan[4], "{scan:?}");
        // sphere antipodal gradient is small
        let a = vec![a0[0], locate_global(&ctx.g, &-x1)];
        let cfg = config(a, vec![1, 1], vec![]);
        let ev = evaluate(&ctx, &cfg, &p, true).unwrap();
        assert!(grad_w(&ctx, &cfg, &ev, &p).unwrap().norm() < 0.05);
    }

    #[test]
    fn isometry_invariance_and_covariance_on_the_sphere() {
        let ctx = SurfaceContext::new(icosphere(4, 1.0).unwrap()).unwrap();
        let p = RenormParams::default();
        let x = [V3::new(0.6, 0.0, 0.8), V3::new(-0.3, 0.9, -0.3).normalize()];
        let rot = Rotation3::from_axis_angle(&V3::z_axis(), PI / 2.0);
        let mk = |pts: [V3; 2]| config(pts.iter().map(|q| locate_global(&ctx.g, q)).collect(), vec![1, 1], vec![]);
        let c0 = mk(x);
        let c1 = mk([rot * x[0], rot * x[1]]);
        let e0 = evaluate(&ctx, &c0, &p, true).unwrap();
        let e1 = evaluate(&ctx, &c1, &p, true).unwrap();
        assert!((e0.value.total - e1.value.total).abs() < 2e-2);
        let g0 = grad_w(&ctx, &c0, &e0, &p).unwrap();
        let g1 = grad_w(&ctx, &c1, &e1, &p).unwrap();
        for k in 0..2 {
            let want = rot * g0.total[k];
            assert!((g1.total[k] - want).norm() < 0.05 * g0.total[k].norm().max(0.1), "{k}");
        }
    }

    #[test]
    fn shift_symmetry_of_g() {
        let ctx = SurfaceContext::new(ellipsoid(3, [1.0, 1.0, 1.5]).unwrap()).unwrap();
        let a = vec![locate_global(&ctx.g, &V3::new(0.0, 0.0, 1.5)), locate_global(&ctx.g, &V3::new(0.0, 0.0, -1.5))];
        let (cur, _, _) = prescribed_current(&ctx, &a, &[1, 1], &[]).unwrap();
        let u = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &cur, 0).unwrap().u;
        let theta: Vec<f64> = ctx.g.vertices.iter().map(|x| 0.3 * x.x + x.y * x.z).collect();
        let kappa = 0.7;
        let ur = u.rotate_by(&vec![kappa; u.len()]);
        let g0 = Extrinsic::new(&ctx.dec, &ctx.model, &u).value(&theta).total;
        let shifted: Vec<f64> = theta.iter().map(|t| t - kappa).collect();
        let g1 = Extrinsic::new(&ctx.dec, &ctx.model, &ur).value(&shifted).total;
        assert!((g0 - g1).abs() < 1e-12 * g0);
        assert!(g0 >= 0.0);
    }

    #[test]
    fn ellipsoid_theta_is_critical_and_descends() {
        let ctx = SurfaceContext::new(ellipsoid(4, [1.0, 1.0, 1.5]).unwrap()).unwrap();
        let a = vec![locate_global(&ctx.g, &V3::new(0.0, 0.0, 1.5)), locate_global(&ctx.g, &V3::new(0.0, 0.0, -1.5))];
        let (cur, _, _) = prescribed_current(&ctx, &a, &[1, 1], &[]).unwrap();
        let u = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &cur, ctx.farthest_vertex(&a)).unwrap().u;
        let ext = Extrinsic::new(&ctx.dec, &ctx.model, &u);
        let zero = vec![0.0; u.len()];
        let (theta, solve) = ext.theta_critical(&zero, 1e-8, 500).unwrap();
        assert!(solve.residual < 1e-8);
        assert!(ext.value(&theta).total <= ext.value(&zero).total);
        assert!(solve.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn canonical_field_properties() {
        let ctx = SurfaceContext::new(icosphere(4, 1.0).unwrap()).unwrap();
        let a = sphere_pair(&ctx, V3::new(0.0, 0.6, 0.8), 110.0);
        let d = [1, 1];
        let (cur, _, _) = prescribed_current(&ctx, &a, &d, &[]).unwrap();
        let f1 = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &cur, 5).unwrap();
        let f2 = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &cur, 900).unwrap();
        assert!(f1.u.z.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        assert_eq!(f1.u.z[5], C64::new(1.0, 0.0));
        // uniqueness up to one global rotation
        let rot = f1.u.z[900].conj();
        let mut worst: f64 = 0.0;
        for (x, y) in f1.u.z.iter().zip(&f2.u.z) {
            worst = worst.max((x * rot - y).norm());
        }
        assert!(worst < 1e-10, "{worst}");
        assert!(f1.iterations < 500);
        // vorticity of u* sits at the vortices with the right degree
        let om = vorticity(&ctx.g, &ctx.conn, &f1.u);
        for p in &a {
            let near: f64 = (0..ctx.g.n_faces()).filter(|&f| (ctx.g.centroid(f) - p.pos()).norm() < 0.3).map(|f| om[f]).sum();
            assert!((near - 2.0 * PI).abs() < 1e-6, "{near}");
        }
        let (j, _) = current_j(&ctx.g, &ctx.conn, &f1.u);
        assert_eq!(j.len(), ctx.g.n_edges());
    }

    #[test]
    fn canonical_current_residual_shrinks_under_refinement() {
        let mut res = Vec::new();
        for lvl in [3, 4] {
            let ctx = SurfaceContext::new(icosphere(lvl, 1.0).unwrap()).unwrap();
            let a = sphere_pair(&ctx, V3::new(0.0, 0.6, 0.8), 110.0);
            let (cur, _, _) = prescribed_current(&ctx, &a, &[1, 1], &[]).unwrap();
            let f = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &cur, 0).unwrap();
            let core: Vec<bool> = ctx.g.vertices.iter().map(|x| a.iter().any(|p| (x - p.pos()).norm() < 2.0 * ctx.cell())).collect();
            res.push(canonical::current_residual(&ctx.g, &ctx.conn, &ctx.model, &f.u, &cur, &core));
        }
        assert!(res[0] < 0.1 && res[1] < res[0], "{res:?}");
    }

    #[test]
    fn torus_flux_identity_and_round_trip() {
        let ctx = SurfaceContext::new(torus(2.0, 0.7, 64, 24).unwrap()).unwrap();
        assert_eq!(ctx.basis.dim(), 2);
        let at = |u: f64, v: f64| {
            let rr = 2.0 + 0.7 * v.cos();
            locate_global(&ctx.g, &V3::new(rr * u.cos(), rr * u.sin(), 0.7 * v.sin()))
        };
        let a = vec![at(0.0, 0.5), at(PI, 2.0)];
        let d = [1, -1];
        let (tracker, xi0) = start_periods(&ctx, &a, &d, &FluxSpec::Periods { periods: vec![0, 1] }).unwrap();
        let same = xi_update(&ctx, &tracker, &a, &a, &d).unwrap();
        for (x, y) in same.iter().zip(&xi0) {
            assert!((x - y).abs() < 1e-12);
        }
        // the canonical field exists for (a, d, ξ⁰): its vorticity is quantized
        let (cur, _, _) = prescribed_current(&ctx, &a, &d, &xi0).unwrap();
        let f = canonical_field(&ctx.g, &ctx.conn, &ctx.model, &cur, ctx.farthest_vertex(&a)).unwrap();
        let core: Vec<bool> = ctx.g.vertices.iter().map(|x| a.iter().any(|p| (x - p.pos()).norm() < 2.0 * ctx.cell())).collect();
        assert!(canonical::current_residual(&ctx.g, &ctx.conn, &ctx.model, &f.u, &cur, &core) < 0.1);

        // transport vortex 0 along v and back in small steps
        let mut tr = tracker.clone();
        let mut prev = a.clone();
        let steps: Vec<f64> = (1..=40).map(|k| 0.5 + 0.1 * k as f64).chain((0..40).rev().map(|k| 0.5 + 0.1 * k as f64)).collect();
        let mut xi = xi0.clone();
        for v in steps {
            let next = vec![at(0.0, v), a[1]];
            let sol = psi::solve_psi(&ctx.g, &ctx.dec, &ctx.conn, &next, &d).unwrap();
            xi = tr.advance(&ctx.g, &ctx.dec, &ctx.conn, &ctx.basis, &prev, &next, &sol.tau).unwrap();
            let defect = tr.defect(&ctx.dec, &ctx.conn, &sol.tau, &xi).unwrap();
            assert!(defect.iter().all(|x| x.abs() < 1e-10));
            prev = next;
        }
        assert!(tr.reroutes > 0);
        for (x, y) in xi.iter().zip(&xi0) {
            assert!((x - y).abs() < 1e-8, "{xi:?} vs {xi0:?}");
        }
    }

    #[test]
    fn grad_matches_finite_differences_on_a_coarse_ellipsoid() {
        let ctx = SurfaceContext::new(ellipsoid(4, [1.0, 1.0, 1.5]).unwrap()).unwrap();
        let an = ctx.g.analytic.unwrap();
        let a: Vec<SurfacePoint> = [V3::new(0.5, 0.2, 1.1), V3::new(-0.3, -0.8, -0.6)]
            .iter()
            .map(|x| locate_global(&ctx.g, &an.project(&(x * 3.0))))
            .collect();
        let p = RenormParams::default().pinned(&ctx, &a).unwrap();
        let cfg = config(a.clone(), vec![1, 1], vec![]);
        let ev = evaluate(&ctx, &cfg, &p, true).unwrap();
        let gr = grad_w(&ctx, &cfg, &ev, &p).unwrap();
        let h = 2.0 * ctx.cell();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..2 {
            let (e1, e2) = tangent_frame(&normal_at(&ctx.g, &a[k]));
            for e in [e1, e2] {
                let w = |s: f64| {
                    let mut b = a.clone();
                    b[k] = exp_map(&ctx.g, &a[k], &(e * s)).unwrap();
                    renormalized_w(&ctx, &config(b, vec![1, 1], vec![]), &p).unwrap().total
                };
                let fd = (w(h) - w(-h)) / (2.0 * h);
                num += (fd - gr.total[k].dot(&e)).powi(2);
                den += fd * fd;
            }
        }
        assert!((num / den).sqrt() < 0.2);
    }

    #[test]
    fn inadmissible_and_close_configurations_are_rejected() {
        let ctx = SurfaceContext::new(icosphere(3, 1.0).unwrap()).unwrap();
        let a = sphere_pair(&ctx, V3::new(0.0, 0.0, 1.0), 180.0);
        let r = renormalized_w(&ctx, &config(a.clone(), vec![1, 0], vec![]), &RenormParams::default());
        assert!(matches!(r, Err(GlError::Inadmissible(_))));
        let b = sphere_pair(&ctx, V3::new(0.0, 0.0, 1.0), 4.0);
        let r = renormalized_w(&ctx, &config(b, vec![1, 1], vec![]), &RenormParams::default());
        assert!(matches!(r, Err(GlError::TooClose { .. })));
    }
}
