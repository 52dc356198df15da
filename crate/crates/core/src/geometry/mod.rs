//! Surface substrate: a validated closed oriented triangle mesh with normals,
//! tangent frames, shape operators, angle-defect curvature and dual areas.
//!
//! Analytic descriptors (sphere, torus, ellipsoid) supply exact normals and
//! shape operators at the vertices; raw meshes get estimates.

pub mod analytic;
pub mod builders;
pub mod geodesic;
pub mod io;
pub mod point;

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3};

pub use analytic::{tangent_frame, Analytic, V3};
pub use point::SurfacePoint;

use crate::error::{GlError, Result};
use crate::linalg::neumaier_sum;

#[derive(Clone, Debug)]
pub struct SurfaceGeometry {
    pub vertices: Vec<V3>,
    pub faces: Vec<[usize; 3]>,
    /// Canonical edges (min, max).
    pub edges: Vec<[usize; 2]>,
    /// Edge k of a face is opposite its vertex k: e0 = v1→v2, e1 = v2→v0, e2 = v0→v1.
    pub face_edges: Vec<[usize; 3]>,
    /// +1 when the face traverses the edge along its canonical direction.
    pub face_edge_signs: Vec<[f64; 3]>,
    /// [face traversing the edge positively, face traversing it negatively].
    pub edge_faces: Vec<[usize; 2]>,
    pub vertex_faces: Vec<Vec<usize>>,
    pub vertex_edges: Vec<Vec<usize>>,
    pub face_normals: Vec<V3>,
    pub face_areas: Vec<f64>,
    /// Interior angle at each face corner.
    pub corner_angles: Vec<[f64; 3]>,
    pub vertex_normals: Vec<V3>,
    /// (e1, e2) with e2 = N × e1.
    pub vertex_frames: Vec<(V3, V3)>,
    pub shape_ops: Vec<Matrix2<f64>>,
    pub vertex_areas: Vec<f64>,
    /// 2π minus the sum of incident corner angles.
    pub angle_defects: Vec<f64>,
    pub analytic: Option<Analytic>,
    pub mean_edge: f64,
    /// Largest allowed exp-map step, in mean edge lengths.
    pub trust_region: f64,
}

impl SurfaceGeometry {
    /// Validate and assemble. Faces are globally flipped if needed so that the
    /// enclosed signed volume is positive (outward normals).
    pub fn from_mesh(
        vertices: Vec<V3>,
        mut faces: Vec<[usize; 3]>,
        analytic: Option<Analytic>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (f, t) in faces.iter().enumerate() {
            if t.iter().any(|&v| v >= nv) {
                return Err(GlError::Parse(format!("face {f} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(GlError::DegenerateFace(f));
            }
            let a = vertices[t[0]];
            let n = (vertices[t[1]] - a).cross(&(vertices[t[2]] - a));
            if !(n.norm() > 0.0) {
                return Err(GlError::DegenerateFace(f));
            }
        }
        let (edges, face_edges, face_edge_signs, edge_faces) = build_edges(&faces)?;

        let vol: f64 = faces
            .iter()
            .map(|t| vertices[t[0]].dot(&vertices[t[1]].cross(&vertices[t[2]])))
            .sum();
        let (face_edges, face_edge_signs, edge_faces) = if vol < 0.0 {
            for t in faces.iter_mut() {
                t.swap(1, 2);
            }
            let (_, fe, fs, ef) = build_edges(&faces)?;
            (fe, fs, ef)
        } else {
            (face_edges, face_edge_signs, edge_faces)
        };

        let mut vertex_faces = vec![Vec::new(); nv];
        for (f, t) in faces.iter().enumerate() {
            for &v in t {
                vertex_faces[v].push(f);
            }
        }
        let mut vertex_edges = vec![Vec::new(); nv];
        for (e, &[a, b]) in edges.iter().enumerate() {
            vertex_edges[a].push(e);
            vertex_edges[b].push(e);
        }
        if let Some(v) = vertex_faces.iter().position(|fs| fs.is_empty()) {
            return Err(GlError::NonManifoldVertex(v));
        }
        check_vertex_links(&faces, &vertex_faces)?;
        let comps = count_components(nv, &edges);
        if comps != 1 {
            return Err(GlError::Disconnected(comps));
        }

        let mut face_normals = Vec::with_capacity(faces.len());
        let mut face_areas = Vec::with_capacity(faces.len());
        let mut corner_angles = Vec::with_capacity(faces.len());
        for t in &faces {
            let p = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let area = 0.5 * n.norm();
            face_areas.push(area);
            face_normals.push(n / (2.0 * area));
            let mut ang = [0.0; 3];
            for k in 0..3 {
                let u = p[(k + 1) % 3] - p[k];
                let w = p[(k + 2) % 3] - p[k];
                ang[k] = u.cross(&w).norm().atan2(u.dot(&w));
            }
            // Recompute the smallest angle as π − a − b. It has the finest
            // grid, so the result is representable and every face sums to π
            // exactly. Without this the rounding drifts by ~1e-11 in the
            // curvature total on 100k-face meshes.
            let m = (0..3).min_by(|&i, &j| ang[i].total_cmp(&ang[j])).unwrap();
            let (a, b) = (ang[(m + 1) % 3], ang[(m + 2) % 3]);
            let s = a + b;
            let bb = s - a;
            let t = (a - (s - bb)) + (b - bb);
            ang[m] = (PI - s) - t;
            corner_angles.push(ang);
        }

        let mut vertex_areas = vec![0.0; nv];
        let mut angle_sum = vec![Vec::new(); nv];
        for (f, t) in faces.iter().enumerate() {
            for k in 0..3 {
                vertex_areas[t[k]] += face_areas[f] / 3.0;
                angle_sum[t[k]].push(corner_angles[f][k]);
            }
        }
        let angle_defects: Vec<f64> = angle_sum
            .into_iter()
            .map(|a| 2.0 * PI - neumaier_sum(a))
            .collect();

        let mean_edge =
            edges.iter().map(|&[a, b]| (vertices[a] - vertices[b]).norm()).sum::<f64>() / edges.len() as f64;

        let vertex_normals: Vec<V3> = match analytic {
            Some(an) => vertices.iter().map(|x| an.normal(x)).collect(),
            None => (0..nv)
                .map(|v| {
                    // Max's weights: exact for vertices on a sphere
                    let mut n = V3::zeros();
                    for &f in &vertex_faces[v] {
                        let t = faces[f];
                        let k = t.iter().position(|&w| w == v).unwrap();
                        let u = vertices[t[(k + 1) % 3]] - vertices[v];
                        let w = vertices[t[(k + 2) % 3]] - vertices[v];
                        n += u.cross(&w) / (u.norm_squared() * w.norm_squared());
                    }
                    n.normalize()
                })
                .collect(),
        };
        let vertex_frames: Vec<(V3, V3)> = vertex_normals.iter().map(tangent_frame).collect();

        let mut geom = SurfaceGeometry {
            vertices,
            faces,
            edges,
            face_edges,
            face_edge_signs,
            edge_faces,
            vertex_faces,
            vertex_edges,
            face_normals,
            face_areas,
            corner_angles,
            vertex_normals,
            vertex_frames,
            shape_ops: Vec::new(),
            vertex_areas,
            angle_defects,
            analytic,
            mean_edge,
            trust_region: 5.0,
        };
        geom.shape_ops = match analytic {
            Some(an) => (0..nv)
                .map(|v| {
                    let (e1, e2) = geom.vertex_frames[v];
                    an.shape_operator(&geom.vertices[v], &e1, &e2)
                })
                .collect(),
            None => geom.estimate_shape_operators(),
        };
        Ok(geom)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_faces() as i64
    }

    pub fn genus(&self) -> i64 {
        (2 - self.euler_characteristic()) / 2
    }

    pub fn total_area(&self) -> f64 {
        neumaier_sum(self.vertex_areas.iter().copied())
    }

    /// Angle-defect total 2πV − Σ corner angles, summed from the raw terms
    /// so that it equals 2πχ up to the rounding of the result.
    pub fn total_curvature(&self) -> f64 {
        let corners = self.corner_angles.iter().flat_map(|a| a.iter().map(|x| -x));
        neumaier_sum(std::iter::repeat_n(2.0 * PI, self.n_vertices()).chain(corners))
    }

    /// Pointwise Gauss curvature at vertices: angle defect over dual area.
    pub fn gauss_curvature(&self) -> Vec<f64> {
        self.angle_defects
            .iter()
            .zip(&self.vertex_areas)
            .map(|(k, a)| k / a)
            .collect()
    }

    /// Analytic curvature sampled at vertices, when a descriptor is present.
    pub fn analytic_gauss_curvature(&self) -> Option<Vec<f64>> {
        self.analytic
            .map(|an| self.vertices.iter().map(|x| an.gauss_curvature(x)).collect())
    }

    /// Gradients of the barycentric coordinates on face f (in the face plane).
    pub fn bary_gradients(&self, f: usize) -> [V3; 3] {
        let t = self.faces[f];
        let n = self.face_normals[f];
        let two_a = 2.0 * self.face_areas[f];
        let mut g = [V3::zeros(); 3];
        for k in 0..3 {
            let e = self.vertices[t[(k + 2) % 3]] - self.vertices[t[(k + 1) % 3]];
            g[k] = n.cross(&e) / two_a;
        }
        g
    }

    /// Face-wise −∇N from linearly interpolated vertex normals, symmetrized in
    /// each vertex frame and area-averaged.
    fn estimate_shape_operators(&self) -> Vec<Matrix2<f64>> {
        let nv = self.n_vertices();
        let mut acc = vec![Matrix2::<f64>::zeros(); nv];
        let mut wsum = vec![0.0; nv];
        for (f, t) in self.faces.iter().enumerate() {
            let g = self.bary_gradients(f);
            // T v = −Σ n_i (∇λ_i · v)
            let mut tm = Matrix3::<f64>::zeros();
            for k in 0..3 {
                tm -= self.vertex_normals[t[k]] * g[k].transpose();
            }
            let w = self.face_areas[f] / 3.0;
            for &v in t {
                let (e1, e2) = self.vertex_frames[v];
                let e = [e1, e2];
                let mut s = Matrix2::zeros();
                for a in 0..2 {
                    for b in 0..2 {
                        s[(a, b)] = e[a].dot(&(tm * e[b]));
                    }
                }
                acc[v] += s * w;
                wsum[v] += w;
            }
        }
        acc.into_iter()
            .zip(wsum)
            .map(|(s, w)| {
                let s = s / w;
                let off = 0.5 * (s[(0, 1)] + s[(1, 0)]);
                Matrix2::new(s[(0, 0)], off, off, s[(1, 1)])
            })
            .collect()
    }

    /// Shape operator at a surface point in the frame of the nearest vertex of its face.
    pub fn shape_operator_at(&self, p: &SurfacePoint) -> (usize, Matrix2<f64>) {
        if let Some(an) = self.analytic {
            let x = an.project(&p.pos());
            let v = p.nearest_vertex(self);
            let n = an.normal(&x);
            let (e1, _) = self.vertex_frames[v];
            let e1 = (e1 - n * n.dot(&e1)).normalize();
            let e2 = n.cross(&e1);
            return (v, an.shape_operator(&x, &e1, &e2));
        }
        let v = p.nearest_vertex(self);
        (v, self.shape_ops[v])
    }

    /// Cotangent of the angle opposite each edge in each face.
    pub fn corner_cot(&self, f: usize, k: usize) -> f64 {
        let a = self.corner_angles[f][k];
        a.cos() / a.sin()
    }

    /// The face across edge k of face f.
    pub fn neighbor_across(&self, f: usize, k: usize) -> usize {
        let e = self.face_edges[f][k];
        let [a, b] = self.edge_faces[e];
        if a == f {
            b
        } else {
            a
        }
    }

    /// Copy with every face reversed; normals and 𝒮 change sign.
    pub fn flipped(&self) -> Self {
        let mut g = self.clone();
        for t in g.faces.iter_mut() {
            t.swap(1, 2);
        }
        let (edges, fe, fs, ef) = build_edges(&g.faces).expect("flip preserves validity");
        let mut vertex_edges = vec![Vec::new(); g.n_vertices()];
        for (e, &[a, b]) in edges.iter().enumerate() {
            vertex_edges[a].push(e);
            vertex_edges[b].push(e);
        }
        g.edges = edges;
        g.vertex_edges = vertex_edges;
        g.face_edges = fe;
        g.face_edge_signs = fs;
        g.edge_faces = ef;
        for (f, t) in g.faces.iter().enumerate() {
            let _ = t;
            g.face_normals[f] = -g.face_normals[f];
            let a = g.corner_angles[f];
            g.corner_angles[f] = [a[0], a[2], a[1]];
        }
        for v in 0..g.n_vertices() {
            g.vertex_normals[v] = -g.vertex_normals[v];
            let (e1, e2) = g.vertex_frames[v];
            // keep (e1, e2, N) right-handed
            g.vertex_frames[v] = (e2, e1);
            let s = g.shape_ops[v];
            g.shape_ops[v] = -Matrix2::new(s[(1, 1)], s[(1, 0)], s[(0, 1)], s[(0, 0)]);
        }
        g
    }

    pub fn centroid(&self, f: usize) -> V3 {
        let t = self.faces[f];
        (self.vertices[t[0]] + self.vertices[t[1]] + self.vertices[t[2]]) / 3.0
    }
}

type EdgeTables = (Vec<[usize; 2]>, Vec<[usize; 3]>, Vec<[f64; 3]>, Vec<[usize; 2]>);

fn build_edges(faces: &[[usize; 3]]) -> Result<EdgeTables> {
    let mut map: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
    let mut edges = Vec::new();
    let mut uses: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut face_edges = vec![[0usize; 3]; faces.len()];
    let mut face_signs = vec![[0.0f64; 3]; faces.len()];
    for (f, t) in faces.iter().enumerate() {
        for k in 0..3 {
            let a = t[(k + 1) % 3];
            let b = t[(k + 2) % 3];
            let key = (a.min(b), a.max(b));
            let sign = if a < b { 1.0 } else { -1.0 };
            let e = *map.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                uses.push(Vec::new());
                edges.len() - 1
            });
            uses[e].push((f, sign));
            face_edges[f][k] = e;
            face_signs[f][k] = sign;
        }
    }
    let mut edge_faces = vec![[0usize; 2]; edges.len()];
    for (e, u) in uses.iter().enumerate() {
        let [a, b] = edges[e];
        match u.len() {
            1 => return Err(GlError::OpenBoundary(a, b)),
            2 => {
                if u[0].1 == u[1].1 {
                    return Err(GlError::Orientation(a, b));
                }
                edge_faces[e] = if u[0].1 > 0.0 { [u[0].0, u[1].0] } else { [u[1].0, u[0].0] };
            }
            n => return Err(GlError::NonManifold(a, b, n)),
        }
    }
    Ok((edges, face_edges, face_signs, edge_faces))
}

/// Every vertex star must be a single fan (one cycle of faces).
fn check_vertex_links(faces: &[[usize; 3]], vertex_faces: &[Vec<usize>]) -> Result<()> {
    for (v, fs) in vertex_faces.iter().enumerate() {
        // link edges: for each face, the (next, prev) pair around v
        let mut next: HashMap<usize, usize> = HashMap::with_capacity(fs.len());
        for &f in fs {
            let t = faces[f];
            let k = t.iter().position(|&w| w == v).unwrap();
            next.insert(t[(k + 1) % 3], t[(k + 2) % 3]);
        }
        if next.len() != fs.len() {
            return Err(GlError::NonManifoldVertex(v));
        }
        let start = *next.keys().next().unwrap();
        let mut cur = start;
        let mut steps = 0;
        loop {
            cur = match next.get(&cur) {
                Some(&c) => c,
                None => return Err(GlError::NonManifoldVertex(v)),
            };
            steps += 1;
            if cur == start || steps > fs.len() {
                break;
            }
        }
        if steps != fs.len() {
            return Err(GlError::NonManifoldVertex(v));
        }
    }
    Ok(())
}

fn count_components(nv: usize, edges: &[[usize; 2]]) -> usize {
    let mut parent: Vec<usize> = (0..nv).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &[a, b] in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra] = rb;
        }
    }
    (0..nv).filter(|&v| find(&mut parent, v) == v).count()
}

#[cfg(test)]
mod tests {
    use super::builders::*;
    use super::*;

    #[test]
    fn icosphere_counts() {
        let g = icosphere(3, 1.0).unwrap();
        assert_eq!(g.n_vertices(), 642);
        assert_eq!(g.euler_characteristic(), 2);
        assert_eq!(g.genus(), 0);
        assert!((g.total_curvature() - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn torus_counts() {
        let g = torus(2.0, 0.5, 64, 32).unwrap();
        assert_eq!(g.euler_characteristic(), 0);
        assert_eq!(g.genus(), 1);
        assert!(g.total_curvature().abs() < 1e-12);
    }

    #[test]
    fn deleted_face_is_open_boundary() {
        let g = icosphere(1, 1.0).unwrap();
        let mut faces = g.faces.clone();
        faces.pop();
        let err = SurfaceGeometry::from_mesh(g.vertices.clone(), faces, None).unwrap_err();
        assert!(matches!(err, GlError::OpenBoundary(..)), "{err}");
    }

    #[test]
    fn flipped_face_is_inconsistent() {
        let g = icosphere(1, 1.0).unwrap();
        let mut faces = g.faces.clone();
        faces[3].swap(0, 1);
        let err = SurfaceGeometry::from_mesh(g.vertices.clone(), faces, None).unwrap_err();
        assert!(matches!(err, GlError::Orientation(..)), "{err}");
    }

    #[test]
    fn tripled_edge_is_non_manifold() {
        let g = icosphere(1, 1.0).unwrap();
        let mut faces = g.faces.clone();
        let t = faces[0];
        let extra = g.vertices.len();
        let mut verts = g.vertices.clone();
        verts.push(V3::new(5.0, 5.0, 5.0));
        faces.push([t[0], t[1], extra]);
        let err = SurfaceGeometry::from_mesh(verts, faces, None).unwrap_err();
        assert!(matches!(err, GlError::NonManifold(..) | GlError::OpenBoundary(..)), "{err}");
    }

    #[test]
    fn outward_orientation_after_reversal() {
        let g = icosphere(2, 1.0).unwrap();
        let faces: Vec<[usize; 3]> = g.faces.iter().map(|t| [t[0], t[2], t[1]]).collect();
        let h = SurfaceGeometry::from_mesh(g.vertices.clone(), faces, None).unwrap();
        for f in 0..h.n_faces() {
            assert!(h.face_normals[f].dot(&h.centroid(f)) > 0.0);
        }
    }

    #[test]
    fn sphere_shape_squared_is_scaled_identity() {
        let g = icosphere(2, 2.0).unwrap();
        for s in &g.shape_ops {
            assert!((s * s - Matrix2::identity() * 0.25).norm() < 1e-13);
        }
    }

    #[test]
    fn discrete_shape_estimate_converges() {
        let mut errs = Vec::new();
        for r in [2, 3, 4] {
            let g = icosphere(r, 1.0).unwrap();
            let raw = SurfaceGeometry::from_mesh(g.vertices.clone(), g.faces.clone(), None).unwrap();
            let worst = raw
                .shape_ops
                .iter()
                .map(|s| (s + Matrix2::identity()).norm() / 2f64.sqrt())
                .fold(0.0, f64::max);
            errs.push(worst);
        }
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    }

    #[test]
    fn theorema_egregium_discrete_trend() {
        // det 𝒮 vs angle-defect curvature on the ellipsoid, raw estimates
        let mut errs = Vec::new();
        for r in [2, 3, 4] {
            let g = ellipsoid(r, [1.0, 1.0, 1.5]).unwrap();
            let raw = SurfaceGeometry::from_mesh(g.vertices.clone(), g.faces.clone(), None).unwrap();
            let an = g.analytic_gauss_curvature().unwrap();
            let worst = raw
                .shape_ops
                .iter()
                .zip(&an)
                .map(|(s, k)| (s.determinant() - k).abs())
                .fold(0.0, f64::max);
            errs.push(worst);
        }
        assert!(errs[2] < errs[0], "{errs:?}");
    }

    #[test]
    fn flip_leaves_shape_squared() {
        let g = ellipsoid(2, [1.0, 1.2, 1.5]).unwrap();
        let h = g.flipped();
        for v in 0..g.n_vertices() {
            let (e1, e2) = g.vertex_frames[v];
            let (f1, f2) = h.vertex_frames[v];
            assert!((f1.cross(&f2) - h.vertex_normals[v]).norm() < 1e-14);
            let s = g.shape_ops[v];
            let t = h.shape_ops[v];
            // compare 𝒮² as 3x3 ambient tensors
            let amb = |m: Matrix2<f64>, a: V3, b: V3| {
                let m2 = m * m;
                a * a.transpose() * m2[(0, 0)]
                    + a * b.transpose() * m2[(0, 1)]
                    + b * a.transpose() * m2[(1, 0)]
                    + b * b.transpose() * m2[(1, 1)]
            };
            assert!((amb(s, e1, e2) - amb(t, f1, f2)).norm() < 1e-12);
        }
    }
}
