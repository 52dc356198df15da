//! Geodesic distances: closed form on the sphere, otherwise Dijkstra on the
//! edge graph augmented with one-level unfolding shortcuts.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::point::SurfacePoint;
use super::{Analytic, SurfaceGeometry, V3};

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal)
    }
}

/// Adjacency with unfolded shortcut edges, built once per mesh.
pub struct DistanceGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl DistanceGraph {
    pub fn new(g: &SurfaceGeometry) -> Self {
        let mut adj = vec![Vec::new(); g.n_vertices()];
        for &[a, b] in &g.edges {
            let l = (g.vertices[a] - g.vertices[b]).norm();
            adj[a].push((b, l));
            adj[b].push((a, l));
        }
        // unfold each adjacent face pair into a plane; connect the two apexes
        // when the straight segment crosses the shared edge
        for (e, &[a, b]) in g.edges.iter().enumerate() {
            let [f0, f1] = g.edge_faces[e];
            let apex = |f: usize| *g.faces[f].iter().find(|&&v| v != a && v != b).unwrap();
            let (c, d) = (apex(f0), apex(f1));
            let pa = g.vertices[a];
            let ab = g.vertices[b] - pa;
            let lab = ab.norm();
            let u = ab / lab;
            let coords = |p: V3| {
                let w = p - pa;
                let x = w.dot(&u);
                let y = (w - u * x).norm();
                (x, y)
            };
            let (cx, cy) = coords(g.vertices[c]);
            let (dx, dy) = coords(g.vertices[d]);
            // apexes on opposite sides: (cx, cy) and (dx, -dy)
            let t = cy / (cy + dy);
            let xc = cx + t * (dx - cx);
            if xc > 0.0 && xc < lab {
                let l = ((cx - dx).powi(2) + (cy + dy).powi(2)).sqrt();
                adj[c].push((d, l));
                adj[d].push((c, l));
            }
        }
        DistanceGraph { adj }
    }

    /// Single-source distances from a point to every vertex.
    pub fn from_point(&self, g: &SurfaceGeometry, p: &SurfacePoint) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; g.n_vertices()];
        let mut heap = BinaryHeap::new();
        for &v in &g.faces[p.face] {
            let l = (g.vertices[v] - p.pos()).norm();
            if l < dist[v] {
                dist[v] = l;
                heap.push(Item(l, v));
            }
        }
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(w, l) in &self.adj[v] {
                let nd = d + l;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Item(nd, w));
                }
            }
        }
        dist
    }

    pub fn between(&self, g: &SurfaceGeometry, p: &SurfacePoint, q: &SurfacePoint) -> f64 {
        if p.face == q.face {
            return (p.pos() - q.pos()).norm();
        }
        let d = self.from_point(g, p);
        let mut best = f64::INFINITY;
        for &v in &g.faces[q.face] {
            best = best.min(d[v] + (g.vertices[v] - q.pos()).norm());
        }
        best
    }
}

/// Geodesic distance, exact on the sphere.
pub fn geodesic_distance(g: &SurfaceGeometry, p: &SurfacePoint, q: &SurfacePoint) -> f64 {
    if let Some(Analytic::Sphere { radius }) = g.analytic {
        let x = p.pos().normalize();
        let y = q.pos().normalize();
        return radius * x.cross(&y).norm().atan2(x.dot(&y));
    }
    DistanceGraph::new(g).between(g, p, q)
}

#[cfg(test)]
mod tests {
    use super::super::builders::*;
    use super::*;
    use std::f64::consts::PI;

    fn pole(g: &SurfaceGeometry, s: f64) -> SurfacePoint {
        let v = (0..g.n_vertices())
            .max_by(|&a, &b| (s * g.vertices[a].z).partial_cmp(&(s * g.vertices[b].z)).unwrap())
            .unwrap();
        SurfacePoint::from_vertex(g, v)
    }

    #[test]
    fn sphere_pole_to_pole() {
        let g = icosphere(3, 1.0).unwrap();
        let (n, s) = (pole(&g, 1.0), pole(&g, -1.0));
        assert!((geodesic_distance(&g, &n, &s) - PI).abs() < 1e-2 * PI);
        // graph distance on the raw mesh converges too
        let raw = SurfaceGeometry::from_mesh(g.vertices.clone(), g.faces.clone(), None).unwrap();
        let d = geodesic_distance(&raw, &n, &s);
        assert!((d - PI).abs() < 0.03 * PI, "{d}");
    }

    #[test]
    fn self_distance_and_symmetry() {
        let g0 = ellipsoid(3, [1.0, 1.0, 1.5]).unwrap();
        let g = SurfaceGeometry::from_mesh(g0.vertices.clone(), g0.faces.clone(), None).unwrap();
        let p = SurfacePoint::from_face_bary(&g, 3, [0.2, 0.5, 0.3]);
        let q = SurfacePoint::from_face_bary(&g, 500, [0.6, 0.1, 0.3]);
        assert_eq!(geodesic_distance(&g, &p, &p), 0.0);
        let (a, b) = (geodesic_distance(&g, &p, &q), geodesic_distance(&g, &q, &p));
        assert!((a - b).abs() < 1e-2 * a);
    }
}
