//! The 2-form Ψ of a vortex configuration and the co-exact current d*Ψ.
//!
//! Vortex masses are split barycentrically onto the three vertices of the
//! carrying face and each vertex share is spread over its star by area
//! fraction, so the face right-hand side depends continuously on position.

use std::f64::consts::PI;

use crate::dec::{Cochain1, Dec};
use crate::error::{GlError, Result};
use crate::fields::Connection;
use crate::geometry::{SurfaceGeometry, SurfacePoint, V3};
use crate::linalg::neumaier_sum;

/// Per-face probability masses of one smeared point, as (face, weight).
pub fn smeared_delta(g: &SurfaceGeometry, p: &SurfacePoint) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (v, lam) in p.weights(g) {
        if lam == 0.0 {
            continue;
        }
        for &f in &g.vertex_faces[v] {
            let w = lam * (g.face_areas[f] / 3.0) / g.vertex_areas[v];
            match out.iter_mut().find(|(h, _)| *h == f) {
                Some(e) => e.1 += w,
                None => out.push((f, w)),
            }
        }
    }
    out
}

pub fn check_admissible(g: &SurfaceGeometry, d: &[i32]) -> Result<()> {
    let s: i64 = d.iter().map(|&x| x as i64).sum();
    if s != g.euler_characteristic() {
        return Err(GlError::Inadmissible(format!(
            "degrees sum to {s}, the surface has χ = {}",
            g.euler_characteristic()
        )));
    }
    Ok(())
}

/// Face right-hand side 2π Σ d_k μ_k − Ω.
pub fn psi_rhs(g: &SurfaceGeometry, conn: &Connection, a: &[SurfacePoint], d: &[i32]) -> Vec<f64> {
    let mut rho: Vec<f64> = conn.omega.iter().map(|o| -o).collect();
    for (p, &dk) in a.iter().zip(d) {
        for (f, w) in smeared_delta(g, p) {
            rho[f] += 2.0 * PI * dk as f64 * w;
        }
    }
    rho
}

pub struct PsiSolution {
    /// Face values ψ_f = ⋆Ψ (zero area-weighted mean).
    pub psi: Vec<f64>,
    /// d*Ψ on edges.
    pub tau: Cochain1,
    /// Relative residual of the face Poisson solve.
    pub residual: f64,
}

pub fn solve_psi(
    g: &SurfaceGeometry,
    dec: &Dec,
    conn: &Connection,
    a: &[SurfacePoint],
    d: &[i32],
) -> Result<PsiSolution> {
    check_admissible(g, d)?;
    if a.len() != d.len() {
        return Err(GlError::Config(format!("{} positions but {} degrees", a.len(), d.len())));
    }
    let rho = psi_rhs(g, conn, a, d);
    let psi = dec.poisson_solve_faces(&rho)?;
    let back = dec.face_laplacian().matvec(&psi);
    let num = neumaier_sum(back.iter().zip(&rho).map(|(x, y)| (x - y) * (x - y))).sqrt();
    let den = neumaier_sum(rho.iter().map(|x| x * x)).sqrt().max(1e-300);
    let tau = dec.d1.tmatvec(&psi).iter().zip(&dec.star1).map(|(x, s)| x / s).collect();
    Ok(PsiSolution { psi, tau, residual: num / den })
}

/// Constant per-face vector J with J·(x_b − x_a) = j_e on the three edges
/// whenever (d j)_f = 0.
pub fn face_vectors(g: &SurfaceGeometry, j: &[f64]) -> Vec<V3> {
    (0..g.n_faces())
        .map(|f| {
            // Whitney reconstruction: J = Σ_k j_k (λ_a ∇λ_b − λ_b ∇λ_a) at the
            // centroid, which for closed j equals the unique constant field
            let gr = g.bary_gradients(f);
            let mut v = V3::zeros();
            for k in 0..3 {
                let (ia, ib) = ((k + 1) % 3, (k + 2) % 3);
                let s = g.face_edge_signs[f][k];
                // edge k runs t[ia] → t[ib] when s > 0
                let jk = s * j[g.face_edges[f][k]];
                v += (gr[ib] - gr[ia]) * (jk / 3.0);
            }
            v
        })
        .collect()
}

/// ¼ Σ_k cot_k j_k² per face: its diagonal-star energy share.
pub fn face_energies(g: &SurfaceGeometry, j: &[f64]) -> Vec<f64> {
    (0..g.n_faces())
        .map(|f| {
            let mut s = 0.0;
            for k in 0..3 {
                let jk = j[g.face_edges[f][k]];
                s += 0.25 * g.corner_cot(f, k) * jk * jk;
            }
            s
        })
        .collect()
}
