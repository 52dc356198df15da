//! Mesh generators for the standard test surfaces.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{io, Analytic, SurfaceGeometry, V3};
use crate::error::{GlError, Result};

/// Where a surface comes from: a generator with parameters, or a mesh file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceSource {
    Icosphere { radius: f64, refine: u32 },
    Ellipsoid { axes: [f64; 3], refine: u32 },
    Torus { major: f64, minor: f64, nu: usize, nv: usize },
    /// Smoothed voxel slab with two holes; topology tests only.
    Genus2 { subdiv: usize, smooth: usize },
    Mesh { path: PathBuf },
}

pub fn load_or_build(src: &SurfaceSource) -> Result<SurfaceGeometry> {
    match src {
        SurfaceSource::Icosphere { radius, refine } => icosphere(*refine, *radius),
        SurfaceSource::Ellipsoid { axes, refine } => ellipsoid(*refine, *axes),
        SurfaceSource::Torus { major, minor, nu, nv } => torus(*major, *minor, *nu, *nv),
        SurfaceSource::Genus2 { subdiv, smooth } => genus2(*subdiv, *smooth),
        SurfaceSource::Mesh { path } => io::load(path),
    }
}

fn check_positive(vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(GlError::Config(format!("surface parameters must be positive, got {vals:?}")))
    }
}

/// Unit-sphere icosahedron subdivided `refine` times: 10·4^refine + 2 vertices.
fn unit_icosphere(refine: u32) -> (Vec<V3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<V3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| V3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..refine {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<V3>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (verts, faces)
}

pub fn icosphere(refine: u32, radius: f64) -> Result<SurfaceGeometry> {
    check_positive(&[radius])?;
    let (v, f) = unit_icosphere(refine);
    let v = v.into_iter().map(|p| p * radius).collect();
    SurfaceGeometry::from_mesh(v, f, Some(Analytic::Sphere { radius }))
}

/// Icosphere scaled along the axes; vertices lie exactly on the ellipsoid.
pub fn ellipsoid(refine: u32, axes: [f64; 3]) -> Result<SurfaceGeometry> {
    check_positive(&axes)?;
    let (v, f) = unit_icosphere(refine);
    let v: Vec<V3> = v
        .into_iter()
        .map(|p| V3::new(p.x * axes[0], p.y * axes[1], p.z * axes[2]))
        .collect();
    let f = delaunay_flips(&v, f);
    SurfaceGeometry::from_mesh(v, f, Some(Analytic::Ellipsoid { axes }))
}

/// Flip edges whose two opposite angles sum past π until none remain. The
/// stretch of an ellipsoid makes some icosphere triangles obtuse enough to
/// give negative cotangent weights; the flipped mesh has the same vertices.
pub fn delaunay_flips(v: &[V3], mut faces: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    let angle = |o: usize, a: usize, b: usize| {
        let (p, q) = (v[a] - v[o], v[b] - v[o]);
        p.cross(&q).norm().atan2(p.dot(&q))
    };
    for _ in 0..100 {
        // directed edge (a, b) -> face containing it in that order
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (fi, t) in faces.iter().enumerate() {
            for k in 0..3 {
                owner.insert((t[k], t[(k + 1) % 3]), fi);
            }
        }
        let mut touched = vec![false; faces.len()];
        let mut flips = 0;
        for fi in 0..faces.len() {
            for k in 0..3 {
                if touched[fi] {
                    break;
                }
                let t = faces[fi];
                let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let Some(&gi) = owner.get(&(b, a)) else { continue };
                if touched[gi] || gi == fi {
                    continue;
                }
                let s = faces[gi];
                let d = s.iter().copied().find(|&x| x != a && x != b).unwrap();
                if angle(c, a, b) + angle(d, b, a) <= PI + 1e-12 || owner.contains_key(&(c, d)) || owner.contains_key(&(d, c)) {
                    continue;
                }
                faces[fi] = [a, d, c];
                faces[gi] = [d, b, c];
                touched[fi] = true;
                touched[gi] = true;
                flips += 1;
            }
        }
        if flips == 0 {
            break;
        }
    }
    faces
}

/// Torus of revolution about z on an nu × nv grid; odd rows are shifted by
/// half a cell so that no triangle has a right angle.
pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> Result<SurfaceGeometry> {
    check_positive(&[major, minor])?;
    if major <= minor {
        return Err(GlError::Config("torus needs major > minor".into()));
    }
    if nu < 3 || nv < 4 || nv % 2 != 0 {
        return Err(GlError::Config("torus grid needs nu >= 3 and even nv >= 4".into()));
    }
    let idx = |i: usize, j: usize| (j % nv) * nu + (i % nu);
    let mut verts = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let u = 2.0 * PI * (i as f64 + 0.5 * (j % 2) as f64) / nu as f64;
            let v = 2.0 * PI * j as f64 / nv as f64;
            let rr = major + minor * v.cos();
            verts.push(V3::new(rr * u.cos(), rr * u.sin(), minor * v.sin()));
        }
    }
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            if j % 2 == 0 {
                faces.push([idx(i, j), idx(i + 1, j), idx(i, j + 1)]);
                faces.push([idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            } else {
                faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
    }
    SurfaceGeometry::from_mesh(verts, faces, Some(Analytic::Torus { major, minor }))
}

/// Boundary of a 3×5×1 voxel slab with holes at cells (1,1) and (1,3),
/// each quad split into subdiv² squares, then umbrella-smoothed.
pub fn genus2(subdiv: usize, smooth: usize) -> Result<SurfaceGeometry> {
    let k = subdiv.max(1) as i64;
    let solid = |x: i64, y: i64, z: i64| -> bool {
        (0..3).contains(&x) && (0..5).contains(&y) && z == 0 && !(x == 1 && (y == 1 || y == 3))
    };
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut verts: Vec<V3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut vid = |p: [i64; 3], verts: &mut Vec<V3>| -> usize {
        *index.entry(p).or_insert_with(|| {
            verts.push(V3::new(p[0] as f64, p[1] as f64, p[2] as f64) / k as f64);
            verts.len() - 1
        })
    };
    for x in 0..3 {
        for y in 0..5 {
            let z = 0;
            if !solid(x, y, z) {
                continue;
            }
            let cell = [x, y, z];
            for a in 0..3 {
                for s in [-1i64, 1] {
                    let mut nb = cell;
                    nb[a] += s;
                    if solid(nb[0], nb[1], nb[2]) {
                        continue;
                    }
                    let b = (a + 1) % 3;
                    let c = (a + 2) % 3;
                    let mut origin = [cell[0] * k, cell[1] * k, cell[2] * k];
                    if s > 0 {
                        origin[a] += k;
                    }
                    let pt = |i: i64, j: i64| {
                        let mut p = origin;
                        p[b] += i;
                        p[c] += j;
                        p
                    };
                    for i in 0..k {
                        for j in 0..k {
                            let p00 = vid(pt(i, j), &mut verts);
                            let p10 = vid(pt(i + 1, j), &mut verts);
                            let p11 = vid(pt(i + 1, j + 1), &mut verts);
                            let p01 = vid(pt(i, j + 1), &mut verts);
                            // alternate diagonals to avoid a uniform grain
                            let diag = (i + j) % 2 == 0;
                            let tris = if diag {
                                [[p00, p10, p11], [p00, p11, p01]]
                            } else {
                                [[p00, p10, p01], [p10, p11, p01]]
                            };
                            for t in tris {
                                faces.push(if s > 0 { t } else { [t[0], t[2], t[1]] });
                            }
                        }
                    }
                }
            }
        }
    }
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); verts.len()];
    for t in &faces {
        for q in 0..3 {
            let (a, b) = (t[q], t[(q + 1) % 3]);
            if !nbrs[a].contains(&b) {
                nbrs[a].push(b);
            }
            if !nbrs[b].contains(&a) {
                nbrs[b].push(a);
            }
        }
    }
    for _ in 0..smooth {
        let old = verts.clone();
        for (v, nb) in nbrs.iter().enumerate() {
            let avg = nb.iter().fold(V3::zeros(), |acc, &w| acc + old[w]) / nb.len() as f64;
            verts[v] = old[v] * 0.5 + avg * 0.5;
        }
    }
    SurfaceGeometry::from_mesh(verts, faces, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_sizes() {
        for (r, n) in [(0, 12), (1, 42), (3, 642), (5, 10242)] {
            assert_eq!(icosphere(r, 1.0).unwrap().n_vertices(), n);
        }
    }

    #[test]
    fn genus_two_slab() {
        let g = genus2(2, 5).unwrap();
        assert_eq!(g.euler_characteristic(), -2);
        assert_eq!(g.genus(), 2);
        assert!((g.total_curvature() + 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn torus_vertices_on_surface() {
        let g = torus(2.0, 0.5, 32, 16).unwrap();
        let an = g.analytic.unwrap();
        assert!(g.vertices.iter().all(|x| an.level(x).abs() < 1e-12));
        let exact = 4.0 * PI * PI * 2.0 * 0.5;
        assert!((g.total_area() - exact).abs() / exact < 2e-2);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(icosphere(2, -1.0).is_err());
        assert!(torus(0.5, 2.0, 16, 8).is_err());
        assert!(torus(2.0, 0.5, 16, 7).is_err());
    }
}
