//! W^intr as the finite part of the Dirichlet energy outside small discs,
//! and its gradient through the stress tensor on an annulus.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{GlError, Result};
use crate::geometry::point::{normal_at, project_tangent};
use crate::geometry::{tangent_frame, SurfaceGeometry, SurfacePoint, V3};
use crate::linalg::neumaier_sum;

/// Signed area of disc(0, r) ∩ triangle(0, p, q) in the plane.
fn wedge_area(p: [f64; 2], q: [f64; 2], r: f64) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let a = d[0] * d[0] + d[1] * d[1];
    if a == 0.0 {
        return 0.0;
    }
    let b = p[0] * d[0] + p[1] * d[1];
    let c = p[0] * p[0] + p[1] * p[1] - r * r;
    let mut ts = vec![0.0];
    let disc = b * b - a * c;
    if disc > 0.0 {
        let s = disc.sqrt();
        for t in [(-b - s) / a, (-b + s) / a] {
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.push(1.0);
    let at = |t: f64| [p[0] + t * d[0], p[1] + t * d[1]];
    let mut area = 0.0;
    for w in ts.windows(2) {
        let (u, v) = (at(w[0]), at(w[1]));
        let m = at(0.5 * (w[0] + w[1]));
        let cross = u[0] * v[1] - u[1] * v[0];
        if m[0] * m[0] + m[1] * m[1] <= r * r {
            area += 0.5 * cross;
        } else {
            let dot = u[0] * v[0] + u[1] * v[1];
            area += 0.5 * r * r * cross.atan2(dot);
        }
    }
    area
}

/// Area of face f inside the Euclidean ball B(c, r).
pub fn face_ball_area(g: &SurfaceGeometry, f: usize, c: &V3, r: f64) -> f64 {
    let t = g.faces[f];
    let n = g.face_normals[f];
    let h = n.dot(&(c - g.vertices[t[0]]));
    if h.abs() >= r {
        return 0.0;
    }
    let rr = (r * r - h * h).sqrt();
    let c0 = c - n * h;
    let (e1, e2) = tangent_frame(&n);
    let loc = |v: usize| {
        let w = g.vertices[v] - c0;
        [w.dot(&e1), w.dot(&e2)]
    };
    let p = [loc(t[0]), loc(t[1]), loc(t[2])];
    let s = wedge_area(p[0], p[1], rr) + wedge_area(p[1], p[2], rr) + wedge_area(p[2], p[0], rr);
    s.abs().min(g.face_areas[f])
}

/// Faces within distance `r` of the point, found by a breadth-first walk.
fn faces_near(g: &SurfaceGeometry, p: &SurfacePoint, r: f64) -> Vec<usize> {
    let c = p.pos();
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![p.face];
    let mut out = Vec::new();
    seen.insert(p.face);
    while let Some(f) = stack.pop() {
        let t = g.faces[f];
        let close = t.iter().any(|&v| (g.vertices[v] - c).norm() < r + g.mean_edge * 2.0)
            || (g.centroid(f) - c).norm() < r;
        if !close {
            continue;
        }
        out.push(f);
        for k in 0..3 {
            let h = g.neighbor_across(f, k);
            if seen.insert(h) {
                stack.push(h);
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct IntrinsicValue {
    pub value: f64,
    pub error: f64,
    /// (ρ, W(ρ)) evaluations.
    pub table: Vec<(f64, f64)>,
}

/// ½∫_{M∖∪B_ρ}|j|² − πΣd²|log ρ| from per-face energies.
pub fn w_at_radius(g: &SurfaceGeometry, face_energy: &[f64], a: &[SurfacePoint], d: &[i32], rho: f64) -> f64 {
    let mut clipped = face_energy.to_vec();
    for p in a {
        for f in faces_near(g, p, rho) {
            let inside = face_ball_area(g, f, &p.pos(), rho);
            clipped[f] -= face_energy[f] * inside / g.face_areas[f];
        }
    }
    let d2: f64 = d.iter().map(|&k| (k * k) as f64).sum();
    neumaier_sum(clipped.iter().copied()) + PI * d2 * rho.ln()
}

pub fn min_separation(a: &[SurfacePoint]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..a.len() {
        for k in i + 1..a.len() {
            m = m.min((a[i].pos() - a[k].pos()).norm());
        }
    }
    m
}

/// Evaluate at ρ₀, ρ₀/2, ρ₀/4 and fit W(ρ) = W + Aρ² + B/ρ².
///
/// The ρ² term is the smooth remainder of the limit, the 1/ρ² term the
/// near-core discretization error, which scales like (h/ρ)². The error
/// estimate is the distance to plain Richardson on the two outer radii.
pub fn w_intrinsic(g: &SurfaceGeometry, face_energy: &[f64], a: &[SurfacePoint], d: &[i32], rho0: f64) -> Result<IntrinsicValue> {
    let sep = min_separation(a);
    if sep <= 2.0 * rho0 {
        return Err(GlError::TooClose { sep, limit: 2.0 * rho0 });
    }
    if rho0 / 4.0 < g.mean_edge {
        return Err(GlError::Config(format!(
            "ρ₀/4 = {:.3e} is below the mesh resolution {:.3e}",
            rho0 / 4.0,
            g.mean_edge
        )));
    }
    let table: Vec<(f64, f64)> = [rho0, rho0 / 2.0, rho0 / 4.0].iter().map(|&r| (r, w_at_radius(g, face_energy, a, d, r))).collect();
    let rich = (4.0 * table[1].1 - table[0].1) / 3.0;
    // in units x = ρ²/ρ₀², the system for (W, A, B) has rows (1, x, 1/x)
    let m = Matrix3::from_fn(|i, k| {
        let x = (table[i].0 / rho0).powi(2);
        [1.0, x, 1.0 / x][k]
    });
    let rhs = Vector3::new(table[0].1, table[1].1, table[2].1);
    let value = m.lu().solve(&rhs).map(|s| s[0]).unwrap_or(rich);
    Ok(IntrinsicValue { value, error: (value - rich).abs(), table })
}

/// Smooth step: 1 on [0, ½η], 0 beyond η.
fn cutoff(r: f64, eta: f64) -> f64 {
    let s = (2.0 * r / eta - 1.0).clamp(0.0, 1.0);
    1.0 - s * s * (3.0 - 2.0 * s)
}

/// ∇_a W^intr at one vortex from the annulus form of the stress integral.
///
/// With T = J⊗J − ½|J|²g and a cutoff φ equal to 1 near the vortex, the
/// boundary integral at ρ → 0 equals −∫T(∇φ, e) − ∫φ div(T e). Away from
/// the cores div J = 0 and curl J = −κ, so div(T e) = −κ (n × J)·e; the
/// bulk term is evaluated with the face holonomies Ω_f ≈ κ·area.
pub fn stress_gradient(g: &SurfaceGeometry, jface: &[V3], omega: &[f64], p: &SurfacePoint, eta: f64) -> V3 {
    let c = p.pos();
    let n = normal_at(g, p);
    let (e1, e2) = tangent_frame(&n);
    let mut comp = [0.0f64; 2];
    for f in faces_near(g, p, eta) {
        let t = g.faces[f];
        let phi: Vec<f64> = t.iter().map(|&v| cutoff((g.vertices[v] - c).norm(), eta)).collect();
        let phi_c = (phi[0] + phi[1] + phi[2]) / 3.0;
        if phi_c == 0.0 {
            continue;
        }
        let gr = g.bary_gradients(f);
        let gphi = gr[0] * phi[0] + gr[1] * phi[1] + gr[2] * phi[2];
        let j = jface[f];
        let nf = g.face_normals[f];
        let jperp = nf.cross(&j);
        for (k, e) in [e1, e2].iter().enumerate() {
            let ef = e - nf * nf.dot(e);
            let s = j.dot(&ef) * j.dot(&gphi) - 0.5 * j.norm_squared() * ef.dot(&gphi);
            comp[k] -= g.face_areas[f] * s;
            comp[k] += phi_c * omega[f] * jperp.dot(&ef);
        }
    }
    project_tangent(g, p, &(e1 * comp[0] + e2 * comp[1]))
}
