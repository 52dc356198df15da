//! Tree-cotree decomposition, homology generator loops and period matrices.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use super::{Dec, HarmonicBasis};
use crate::error::{GlError, Result};
use crate::geometry::SurfaceGeometry;

#[derive(PartialEq)]
struct Item(f64, usize, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal).then(o.1.cmp(&self.1))
    }
}

const AVOID: f64 = 1e9;

pub struct TreeCotree {
    pub root: usize,
    /// (parent vertex, edge) in the primal spanning tree.
    pub parent: Vec<Option<(usize, usize)>>,
    /// (parent face, edge) in the dual spanning tree.
    pub face_parent: Vec<Option<(usize, usize)>>,
    pub in_tree: Vec<bool>,
    pub in_cotree: Vec<bool>,
    pub generators: Vec<usize>,
}

/// Primal shortest-path tree (edges touching excluded vertices are nearly
/// forbidden, so excluded vertices end up as leaves) and a dual minimum
/// spanning tree that prefers those same edges.
pub fn tree_cotree(g: &SurfaceGeometry, excluded: &[bool]) -> TreeCotree {
    let nv = g.n_vertices();
    let ne = g.n_edges();
    let nf = g.n_faces();
    let touches = |e: usize| excluded[g.edges[e][0]] || excluded[g.edges[e][1]];
    let root = (0..nv).find(|&v| !excluded[v]).unwrap_or(0);

    let mut dist = vec![f64::INFINITY; nv];
    let mut parent = vec![None; nv];
    let mut heap = BinaryHeap::new();
    dist[root] = 0.0;
    heap.push(Item(0.0, root, usize::MAX));
    let mut done = vec![false; nv];
    while let Some(Item(d, v, _)) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &e in &g.vertex_edges[v] {
            let [a, b] = g.edges[e];
            let w = if a == v { b } else { a };
            let len = (g.vertices[a] - g.vertices[b]).norm();
            let cost = d + len + if touches(e) { AVOID } else { 0.0 };
            if cost < dist[w] {
                dist[w] = cost;
                parent[w] = Some((v, e));
                heap.push(Item(cost, w, e));
            }
        }
    }
    let mut in_tree = vec![false; ne];
    for p in parent.iter().flatten() {
        in_tree[p.1] = true;
    }

    // Prim on the dual graph over non-tree edges
    let mut in_cotree = vec![false; ne];
    let mut face_parent = vec![None; nf];
    let mut visited = vec![false; nf];
    let mut heap = BinaryHeap::new();
    let push_face = |f: usize, heap: &mut BinaryHeap<Item>, visited: &[bool]| {
        for &e in &g.face_edges[f] {
            if in_tree[e] {
                continue;
            }
            let [f0, f1] = g.edge_faces[e];
            let h = if f0 == f { f1 } else { f0 };
            if !visited[h] {
                let c = if touches(e) { 0.0 } else { 1.0 };
                heap.push(Item(c, e, f));
            }
        }
    };
    visited[0] = true;
    push_face(0, &mut heap, &visited);
    while let Some(Item(_, e, from)) = heap.pop() {
        let [f0, f1] = g.edge_faces[e];
        let h = if f0 == from { f1 } else { f0 };
        if visited[h] {
            continue;
        }
        visited[h] = true;
        in_cotree[e] = true;
        face_parent[h] = Some((from, e));
        push_face(h, &mut heap, &visited);
    }
    let generators = (0..ne).filter(|&e| !in_tree[e] && !in_cotree[e]).collect();
    TreeCotree { root, parent, face_parent, in_tree, in_cotree, generators }
}

impl TreeCotree {
    fn path_to_root(&self, mut v: usize) -> Vec<usize> {
        let mut p = vec![v];
        while let Some((u, _)) = self.parent[v] {
            p.push(u);
            v = u;
        }
        p
    }

    /// Closed vertex loop: tree path a → b, closed by the generator edge b → a.
    pub fn primal_loop(&self, g: &SurfaceGeometry, gen: usize) -> Vec<usize> {
        let [a, b] = g.edges[gen];
        let pa = self.path_to_root(a);
        let pb = self.path_to_root(b);
        // strip the common tail
        let (mut i, mut j) = (pa.len(), pb.len());
        while i > 0 && j > 0 && pa[i - 1] == pb[j - 1] {
            i -= 1;
            j -= 1;
        }
        let mut lp: Vec<usize> = pa[..=i.min(pa.len() - 1)].to_vec();
        // pa[i] is the lowest common ancestor
        let mut tail: Vec<usize> = pb[..j].to_vec();
        tail.reverse();
        lp.extend(tail);
        lp
    }

    fn face_path_to_root(&self, mut f: usize) -> Vec<(usize, Option<usize>)> {
        let mut p = vec![(f, None)];
        while let Some((h, e)) = self.face_parent[f] {
            p.last_mut().unwrap().1 = Some(e);
            p.push((h, None));
            f = h;
        }
        p
    }

    /// Closed 1-cochain dual to the generator: ±1 on the edges its dual
    /// cycle crosses, signed as "leaving" each face along the cycle.
    pub fn dual_cochain(&self, g: &SurfaceGeometry, gen: usize) -> Vec<f64> {
        let [fl, fr] = g.edge_faces[gen];
        let pl = self.face_path_to_root(fl);
        let pr = self.face_path_to_root(fr);
        let (mut i, mut j) = (pl.len(), pr.len());
        while i > 0 && j > 0 && pl[i - 1].0 == pr[j - 1].0 {
            i -= 1;
            j -= 1;
        }
        // face cycle: fl → ... → lca → ... → fr → (gen) → fl
        let mut faces: Vec<usize> = pl[..=i].iter().map(|x| x.0).collect();
        let mut back: Vec<usize> = pr[..j].iter().map(|x| x.0).collect();
        back.reverse();
        faces.extend(back);
        let mut edges: Vec<usize> = pl[..i].iter().map(|x| x.1.unwrap()).collect();
        let mut back_e: Vec<usize> = pr[..j].iter().map(|x| x.1.unwrap()).collect();
        back_e.reverse();
        edges.extend(back_e);
        edges.push(gen);
        let mut h = vec![0.0; g.n_edges()];
        for (k, &e) in edges.iter().enumerate() {
            let f = faces[k];
            let slot = g.face_edges[f].iter().position(|&x| x == e).unwrap();
            h[e] += g.face_edge_signs[f][slot];
        }
        h
    }
}

/// 2·genus closed edge loops generating H₁(M; Z), avoiding excluded vertices.
#[derive(Clone, Debug, Default)]
pub struct HomologyLoops {
    pub loops: Vec<Vec<usize>>,
}

impl HomologyLoops {
    pub fn len(&self) -> usize {
        self.loops.len()
    }
    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }
}

pub fn homology_generators(g: &SurfaceGeometry, excluded: &[bool]) -> Result<HomologyLoops> {
    if g.genus() == 0 {
        return Ok(HomologyLoops::default());
    }
    let tc = tree_cotree(g, excluded);
    if tc.generators.len() as i64 != 2 * g.genus() {
        return Err(GlError::Homology(format!(
            "found {} generators, expected {}",
            tc.generators.len(),
            2 * g.genus()
        )));
    }
    let loops: Vec<Vec<usize>> = tc.generators.iter().map(|&e| tc.primal_loop(g, e)).collect();
    for (k, lp) in loops.iter().enumerate() {
        if let Some(&v) = lp.iter().find(|&&v| excluded[v]) {
            return Err(GlError::Homology(format!(
                "loop {k} cannot avoid excluded vertex {v}"
            )));
        }
    }
    Ok(HomologyLoops { loops })
}

/// P[h][m] = ∮_{γ_h} ζ_m.
pub fn period_matrix(dec: &Dec, basis: &HarmonicBasis, loops: &HomologyLoops) -> Result<DMatrix<f64>> {
    let n = basis.dim();
    let mut p = DMatrix::zeros(loops.len(), n);
    for (h, lp) in loops.loops.iter().enumerate() {
        for (m, z) in basis.forms.iter().enumerate() {
            p[(h, m)] = dec.loop_integral(z, lp)?;
        }
    }
    Ok(p)
}

pub fn condition_number(p: &DMatrix<f64>) -> f64 {
    if p.is_empty() {
        return 1.0;
    }
    let s = p.clone().svd(false, false).singular_values;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::*;

    #[test]
    fn sphere_has_no_loops() {
        let g = icosphere(2, 1.0).unwrap();
        assert!(homology_generators(&g, &vec![false; g.n_vertices()]).unwrap().is_empty());
    }

    #[test]
    fn torus_loops_and_period_matrix() {
        let g = torus(2.0, 0.5, 48, 16).unwrap();
        let dec = Dec::with_solvers(&g).unwrap();
        let basis = HarmonicBasis::new(&g, &dec).unwrap();
        let loops = homology_generators(&g, &vec![false; g.n_vertices()]).unwrap();
        assert_eq!(loops.len(), 2);
        let p = period_matrix(&dec, &basis, &loops).unwrap();
        let c = condition_number(&p);
        assert!(c.is_finite() && c < 1e6, "{c}");
        // exact forms have zero periods
        let a: Vec<f64> = g.vertices.iter().map(|x| x.x * x.z).collect();
        let da = dec.apply_d0(&a).unwrap();
        for lp in &loops.loops {
            assert!(dec.loop_integral(&da, lp).unwrap().abs() < 1e-13);
        }
    }

    #[test]
    fn loops_avoid_excluded_vertices() {
        let g = torus(2.0, 0.5, 48, 16).unwrap();
        let mut ex = vec![false; g.n_vertices()];
        // exclude a vertex with its one-ring
        let v0 = 200;
        ex[v0] = true;
        for &e in &g.vertex_edges[v0] {
            ex[g.edges[e][0]] = true;
            ex[g.edges[e][1]] = true;
        }
        let loops = homology_generators(&g, &ex).unwrap();
        for lp in &loops.loops {
            assert!(lp.iter().all(|&v| !ex[v]));
        }
    }

    #[test]
    fn loops_are_closed_edge_paths() {
        let g = genus2(2, 5).unwrap();
        let dec = Dec::new(&g);
        let loops = homology_generators(&g, &vec![false; g.n_vertices()]).unwrap();
        assert_eq!(loops.len(), 4);
        for lp in &loops.loops {
            let ones = vec![1.0; g.n_edges()];
            assert!(dec.loop_integral(&ones, lp).is_ok());
        }
    }
}
