//! Canonical harmonic fields: unit fields whose current is a prescribed
//! closed-away-from-vortices 1-form, normalized at one vertex.

use crate::error::{GlError, Result};
use crate::fields::{current_j, Connection, EnergyModel, TangentField};
use crate::geometry::SurfaceGeometry;
use crate::linalg::{SpdSolver, C64};

pub struct CanonicalField {
    pub u: TangentField,
    /// Normalization vertex; u(b0) = e1 of its frame.
    pub b0: usize,
    /// Smallest eigenvalue of the shifted connection Laplacian.
    pub eigenvalue: f64,
    pub iterations: usize,
}

/// Unit field u with j(u) ≈ `target`: the lowest eigenvector of the
/// connection Laplacian for ρ − target, normalized pointwise.
pub fn canonical_field(
    g: &SurfaceGeometry,
    conn: &Connection,
    model: &EnergyModel,
    target: &[f64],
    b0: usize,
) -> Result<CanonicalField> {
    let shifted = conn.shifted(g, target);
    let k = shifted.stiffness(g, &model.weights);
    let n = g.n_vertices();
    let shift = 1e-10;
    let mut t = k.triplets();
    for v in 0..n {
        t.push((v, v, C64::new(shift * model.mass[v], 0.0)));
    }
    let a = crate::linalg::Csr::from_triplets(n, n, &t);
    let solver = SpdSolver::new(a)?;

    let mut z = tree_start(g, &shifted, b0);
    let mnorm = |z: &[C64]| z.iter().zip(&model.mass).map(|(x, m)| m * x.norm_sqr()).sum::<f64>().sqrt();
    let mut lambda = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..500 {
        let rhs: Vec<C64> = z.iter().zip(&model.mass).map(|(x, m)| x * m).collect();
        let mut y = solver.solve(&rhs);
        let s = mnorm(&y);
        if !(s > 0.0) || !s.is_finite() {
            return Err(GlError::Solver("inverse iteration collapsed".into()));
        }
        // fix the global phase so successive iterates are comparable
        let ph = y[b0].conj() / y[b0].norm();
        y.iter_mut().for_each(|x| *x *= ph / s);
        let ky = k.matvec(&y);
        let lam: f64 = y.iter().zip(&ky).map(|(a, b)| (a.conj() * b).re).sum();
        let change = y.iter().zip(&z).zip(&model.mass).map(|((a, b), m)| m * (a - b).norm_sqr()).sum::<f64>().sqrt();
        z = y;
        iterations = it + 1;
        lambda = lam;
        if change < 1e-13 {
            break;
        }
    }
    // a vortex sitting exactly on a vertex zeroes the eigenvector there and
    // the neighbours wind around it, so there is no preferred direction: the
    // vertex copies its first neighbour, transported
    let scale = z.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let tiny = 1e-10 * scale;
    let mut z2 = z.clone();
    for v in 0..n {
        if z[v].norm() > tiny {
            continue;
        }
        let from = g.vertex_edges[v].iter().find_map(|&e| {
            let [a, b] = g.edges[e];
            let w = if a == v { b } else { a };
            (z[w].norm() > tiny).then(|| if a == v { C64::from_polar(1.0, shifted.rho[e]) * z[b] } else { C64::from_polar(1.0, -shifted.rho[e]) * z[a] })
        });
        match from {
            Some(x) => z2[v] = x,
            None => return Err(GlError::Solver(format!("canonical field vanishes around vertex {v}"))),
        }
    }
    let mut u = TangentField { z: z2 }.normalized();
    let ph = u.z[b0].conj();
    u.z.iter_mut().for_each(|x| *x *= ph);
    u.z[b0] = C64::new(1.0, 0.0);
    Ok(CanonicalField { u, b0, eigenvalue: lambda, iterations })
}

/// Parallel field along a breadth-first spanning tree of the shifted
/// connection, a good starting vector for inverse iteration.
fn tree_start(g: &SurfaceGeometry, conn: &Connection, root: usize) -> Vec<C64> {
    let n = g.n_vertices();
    let mut z = vec![C64::new(0.0, 0.0); n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    z[root] = C64::new(1.0, 0.0);
    seen[root] = true;
    queue.push_back(root);
    while let Some(v) = queue.pop_front() {
        for &e in &g.vertex_edges[v] {
            let [a, b] = g.edges[e];
            let w = if a == v { b } else { a };
            if seen[w] {
                continue;
            }
            seen[w] = true;
            // z_a = e^{iρ} z_b
            z[w] = if a == v { C64::from_polar(1.0, -conn.rho[e]) * z[v] } else { C64::from_polar(1.0, conn.rho[e]) * z[v] };
            queue.push_back(w);
        }
    }
    z
}

/// Relative ⋆1-norm mismatch of j(u) against the target on edges with both
/// endpoints outside `core`.
pub fn current_residual(
    g: &SurfaceGeometry,
    conn: &Connection,
    model: &EnergyModel,
    u: &TangentField,
    target: &[f64],
    core: &[bool],
) -> f64 {
    let (j, _) = current_j(g, conn, u);
    let (mut num, mut den) = (0.0, 0.0);
    for (e, &[a, b]) in g.edges.iter().enumerate() {
        if core[a] || core[b] {
            continue;
        }
        let w = model.weights[e].abs();
        num += w * crate::fields::wrap_angle(j[e] - target[e]).powi(2);
        den += w * target[e] * target[e];
    }
    (num / den.max(1e-300)).sqrt()
}
