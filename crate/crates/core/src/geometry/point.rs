//! Points on the surface and the exponential / log maps used to move vortices.

use serde::{Deserialize, Serialize};

use super::{Analytic, SurfaceGeometry, V3};
use crate::error::{GlError, Result};

/// A point of the mesh: face plus barycentric coordinates, with its world
/// position on the piecewise-flat surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub face: usize,
    pub bary: [f64; 3],
    pub position: [f64; 3],
}

impl SurfacePoint {
    pub fn from_face_bary(g: &SurfaceGeometry, face: usize, bary: [f64; 3]) -> Self {
        let mut b = bary.map(|x| x.max(0.0));
        let s: f64 = b.iter().sum();
        for x in b.iter_mut() {
            *x /= s;
        }
        let t = g.faces[face];
        let p = g.vertices[t[0]] * b[0] + g.vertices[t[1]] * b[1] + g.vertices[t[2]] * b[2];
        SurfacePoint { face, bary: b, position: [p.x, p.y, p.z] }
    }

    pub fn from_vertex(g: &SurfaceGeometry, v: usize) -> Self {
        let f = g.vertex_faces[v][0];
        let k = g.faces[f].iter().position(|&w| w == v).unwrap();
        let mut b = [0.0; 3];
        b[k] = 1.0;
        Self::from_face_bary(g, f, b)
    }

    pub fn pos(&self) -> V3 {
        V3::new(self.position[0], self.position[1], self.position[2])
    }

    pub fn nearest_vertex(&self, g: &SurfaceGeometry) -> usize {
        let k = (0..3)
            .max_by(|&a, &b| self.bary[a].partial_cmp(&self.bary[b]).unwrap())
            .unwrap();
        g.faces[self.face][k]
    }

    /// The mesh vertex this point sits on, if any.
    pub fn vertex_id(&self, g: &SurfaceGeometry) -> Option<usize> {
        (0..3).find(|&k| self.bary[k] == 1.0).map(|k| g.faces[self.face][k])
    }

    /// (vertex, weight) pairs of the barycentric splitting.
    pub fn weights(&self, g: &SurfaceGeometry) -> [(usize, f64); 3] {
        let t = g.faces[self.face];
        [(t[0], self.bary[0]), (t[1], self.bary[1]), (t[2], self.bary[2])]
    }
}

/// Barycentric coordinates of the point where the line x + s·dir meets the
/// plane of face f (dir = None means orthogonal projection).
pub fn bary_on_face(g: &SurfaceGeometry, f: usize, x: &V3, dir: Option<&V3>) -> [f64; 3] {
    let t = g.faces[f];
    let p0 = g.vertices[t[0]];
    let n = g.face_normals[f];
    let y = match dir {
        Some(d) => {
            let den = n.dot(d);
            if den.abs() < 1e-12 {
                x - n * n.dot(&(x - p0))
            } else {
                x + d * (n.dot(&(p0 - x)) / den)
            }
        }
        None => x - n * n.dot(&(x - p0)),
    };
    let two_a = 2.0 * g.face_areas[f];
    let mut b = [0.0; 3];
    for k in 0..3 {
        let a = g.vertices[t[(k + 1) % 3]];
        let c = g.vertices[t[(k + 2) % 3]];
        b[k] = n.dot(&(a - y).cross(&(c - y))) / two_a;
    }
    b
}

/// Walk from `start` toward the face containing the projection of x.
fn walk(g: &SurfaceGeometry, start: usize, x: &V3, dir: Option<&V3>) -> SurfacePoint {
    let mut f = start;
    let mut best = (f64::NEG_INFINITY, f, [1.0 / 3.0; 3]);
    let mut prev = usize::MAX;
    for _ in 0..(4 * g.n_faces()).min(100_000) {
        let b = bary_on_face(g, f, x, dir);
        let (kmin, bmin) = b
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
        if bmin > best.0 {
            best = (bmin, f, b);
        }
        if bmin >= -1e-12 {
            return SurfacePoint::from_face_bary(g, f, b);
        }
        let mut next = g.neighbor_across(f, kmin);
        if next == prev {
            // oscillating between two faces: try the other negative coordinate
            let alt = (0..3).filter(|&k| k != kmin && b[k] < 0.0).next();
            match alt {
                Some(k) => next = g.neighbor_across(f, k),
                None => break,
            }
        }
        prev = f;
        f = next;
    }
    SurfacePoint::from_face_bary(g, best.1, best.2)
}

/// Locate a point near the surface, starting the search at `start`.
pub fn locate(g: &SurfaceGeometry, start: usize, x: &V3) -> SurfacePoint {
    match g.analytic {
        Some(Analytic::Sphere { .. }) => walk(g, start, x, Some(x)),
        Some(an) => {
            let n = an.normal(x);
            walk(g, start, x, Some(&n))
        }
        None => walk(g, start, x, None),
    }
}

/// Locate without a hint: start from the face with the nearest centroid.
pub fn locate_global(g: &SurfaceGeometry, x: &V3) -> SurfacePoint {
    let f = (0..g.n_faces())
        .min_by(|&a, &b| {
            (g.centroid(a) - x)
                .norm_squared()
                .partial_cmp(&(g.centroid(b) - x).norm_squared())
                .unwrap()
        })
        .unwrap();
    locate(g, f, x)
}

/// Same location on the analytic surface, when there is one.
pub fn lift(g: &SurfaceGeometry, p: &SurfacePoint) -> V3 {
    match g.analytic {
        Some(an) => an.project(&p.pos()),
        None => p.pos(),
    }
}

/// Unit normal of the tangent plane used at p.
pub fn normal_at(g: &SurfaceGeometry, p: &SurfacePoint) -> V3 {
    match g.analytic {
        Some(an) => an.normal(&lift(g, p)),
        None => g.face_normals[p.face],
    }
}

pub fn project_tangent(g: &SurfaceGeometry, p: &SurfacePoint, v: &V3) -> V3 {
    let n = normal_at(g, p);
    v - n * n.dot(v)
}

/// Move from p along the tangent vector v. Analytic surfaces use the exact
/// great circle (sphere) or a projected step; meshes use a straightest walk
/// across faces.
pub fn exp_map(g: &SurfaceGeometry, p: &SurfacePoint, v: &V3) -> Result<SurfacePoint> {
    let limit = g.trust_region * g.mean_edge;
    let len = v.norm();
    if len > limit {
        return Err(GlError::TrustRegion { len, limit });
    }
    if len == 0.0 {
        return Ok(*p);
    }
    match g.analytic {
        Some(Analytic::Sphere { radius }) => {
            let x = p.pos().normalize();
            let vt = v - x * x.dot(v);
            let th = vt.norm() / radius;
            if th == 0.0 {
                return Ok(*p);
            }
            let q = (x * th.cos() + vt.normalize() * th.sin()) * radius;
            Ok(locate(g, p.face, &q))
        }
        Some(an) => {
            let x = an.project(&p.pos());
            let n = an.normal(&x);
            let vt = v - n * n.dot(v);
            let q = an.project(&(x + vt));
            Ok(locate(g, p.face, &q))
        }
        None => Ok(straightest_walk(g, p, v)),
    }
}

fn straightest_walk(g: &SurfaceGeometry, p: &SurfacePoint, v: &V3) -> SurfacePoint {
    let mut f = p.face;
    let mut x = p.pos();
    let n0 = g.face_normals[f];
    let mut d = v - n0 * n0.dot(v);
    let mut remaining = d.norm();
    if remaining == 0.0 {
        return *p;
    }
    d /= remaining;
    for _ in 0..10_000 {
        let b0 = bary_on_face(g, f, &x, None);
        let end = x + d * remaining;
        let b1 = bary_on_face(g, f, &end, None);
        if b1.iter().all(|&b| b >= 0.0) {
            return SurfacePoint::from_face_bary(g, f, b1);
        }
        let mut tstar = f64::INFINITY;
        let mut kstar = 0;
        for k in 0..3 {
            if b1[k] < 0.0 && b0[k] > b1[k] {
                let t = (b0[k].max(0.0)) / (b0[k].max(0.0) - b1[k]);
                if t < tstar {
                    tstar = t;
                    kstar = k;
                }
            }
        }
        if !tstar.is_finite() {
            return SurfacePoint::from_face_bary(g, f, b1);
        }
        x += d * (remaining * tstar);
        remaining *= 1.0 - tstar;
        let h = g.neighbor_across(f, kstar);
        let t = g.faces[f];
        let e = (g.vertices[t[(kstar + 2) % 3]] - g.vertices[t[(kstar + 1) % 3]]).normalize();
        let wf = g.face_normals[f].cross(&e);
        let wh = g.face_normals[h].cross(&e);
        d = e * d.dot(&e) + wh * d.dot(&wf);
        d -= g.face_normals[h] * g.face_normals[h].dot(&d);
        d = d.normalize();
        f = h;
        // step off the edge by a hair so the next face registers the crossing
        if remaining < 1e-15 {
            let b = bary_on_face(g, f, &x, None);
            return SurfacePoint::from_face_bary(g, f, b);
        }
    }
    SurfacePoint::from_face_bary(g, f, bary_on_face(g, f, &x, None))
}

/// Tangent vector at p pointing to q with length ≈ geodesic distance.
pub fn log_map(g: &SurfaceGeometry, p: &SurfacePoint, q: &SurfacePoint) -> V3 {
    if let Some(Analytic::Sphere { radius }) = g.analytic {
        let x = p.pos().normalize();
        let y = q.pos().normalize();
        let c = x.dot(&y);
        let w = y - x * c;
        let s = w.norm();
        if s == 0.0 {
            return V3::zeros();
        }
        return w / s * (radius * s.atan2(c));
    }
    let target = lift(g, q);
    let mut v = project_tangent(g, p, &(target - lift(g, p)));
    let saved = g.trust_region;
    let mut gg = None;
    if v.norm() > saved * g.mean_edge {
        // far-apart points: widen the trust region for the Newton iterates
        let mut c = g.clone();
        c.trust_region = 4.0 * v.norm() / g.mean_edge;
        gg = Some(c);
    }
    let geo = gg.as_ref().unwrap_or(g);
    for _ in 0..30 {
        let r = match exp_map(geo, p, &v) {
            Ok(r) => r,
            Err(_) => break,
        };
        let diff = project_tangent(g, p, &(target - lift(g, &r)));
        v += diff;
        if diff.norm() < 1e-13 * (1.0 + v.norm()) {
            break;
        }
    }
    v
}
