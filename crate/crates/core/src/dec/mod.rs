//! Lowest-order discrete exterior calculus on a triangle mesh.
//!
//! 0-forms live on vertices, 1-forms on canonically oriented edges (min→max),
//! 2-forms on faces as integrated values. The Hodge stars are diagonal:
//! ⋆0 = barycentric dual areas, ⋆1 = cotangent weights, ⋆2 = 1/area.

pub mod harmonic;
pub mod homology;

use std::collections::HashMap;

use crate::error::{GlError, Result};
use crate::geometry::SurfaceGeometry;
use crate::linalg::{dot, neumaier_sum, Csr, SpdSolver};

pub use harmonic::HarmonicBasis;
pub use homology::HomologyLoops;

pub type Cochain0 = Vec<f64>;
pub type Cochain1 = Vec<f64>;
pub type Cochain2 = Vec<f64>;

pub struct Dec {
    pub d0: Csr<f64>,
    pub d1: Csr<f64>,
    pub star0: Vec<f64>,
    pub star1: Vec<f64>,
    pub star2: Vec<f64>,
    /// d0ᵀ ⋆1 d0, the cotangent stiffness matrix.
    pub l0: Csr<f64>,
    edge_index: HashMap<(usize, usize), usize>,
    vertex_poisson: Option<PinnedSolver>,
    face_poisson: Option<PinnedSolver>,
}

/// Cholesky of a Laplacian with one row/column removed (pinned to zero).
struct PinnedSolver {
    pin: usize,
    solver: SpdSolver<f64>,
}

impl PinnedSolver {
    fn new(lap: &Csr<f64>, pin: usize) -> Result<Self> {
        let n = lap.nrows;
        let map = |i: usize| if i < pin { i } else { i - 1 };
        let mut t = Vec::with_capacity(lap.nnz());
        for r in 0..n {
            if r == pin {
                continue;
            }
            for p in lap.indptr[r]..lap.indptr[r + 1] {
                let c = lap.indices[p];
                if c != pin {
                    t.push((map(r), map(c), lap.values[p]));
                }
            }
        }
        let reduced = Csr::from_triplets(n - 1, n - 1, &t);
        Ok(PinnedSolver { pin, solver: SpdSolver::new(reduced)? })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let pin = self.pin;
        let rb: Vec<f64> = b.iter().enumerate().filter(|(i, _)| *i != pin).map(|(_, &v)| v).collect();
        let x = self.solver.solve(&rb);
        let mut out = Vec::with_capacity(b.len());
        out.extend_from_slice(&x[..pin]);
        out.push(0.0);
        out.extend_from_slice(&x[pin..]);
        out
    }
}

impl Dec {
    pub fn new(g: &SurfaceGeometry) -> Self {
        let (nv, ne, nf) = (g.n_vertices(), g.n_edges(), g.n_faces());
        let mut t0 = Vec::with_capacity(2 * ne);
        for (e, &[a, b]) in g.edges.iter().enumerate() {
            t0.push((e, a, -1.0));
            t0.push((e, b, 1.0));
        }
        let d0 = Csr::from_triplets(ne, nv, &t0);
        let mut t1 = Vec::with_capacity(3 * nf);
        for f in 0..nf {
            for k in 0..3 {
                t1.push((f, g.face_edges[f][k], g.face_edge_signs[f][k]));
            }
        }
        let d1 = Csr::from_triplets(nf, ne, &t1);

        let mut star1 = vec![0.0; ne];
        for f in 0..nf {
            for k in 0..3 {
                star1[g.face_edges[f][k]] += 0.5 * g.corner_cot(f, k);
            }
        }
        let star0 = g.vertex_areas.clone();
        let star2: Vec<f64> = g.face_areas.iter().map(|a| 1.0 / a).collect();

        let mut tl = Vec::with_capacity(4 * ne);
        for (e, &[a, b]) in g.edges.iter().enumerate() {
            let w = star1[e];
            tl.push((a, a, w));
            tl.push((b, b, w));
            tl.push((a, b, -w));
            tl.push((b, a, -w));
        }
        let l0 = Csr::from_triplets(nv, nv, &tl);
        let edge_index = g
            .edges
            .iter()
            .enumerate()
            .map(|(e, &[a, b])| ((a, b), e))
            .collect();
        Dec {
            d0,
            d1,
            star0,
            star1,
            star2,
            l0,
            edge_index,
            vertex_poisson: None,
            face_poisson: None,
        }
    }

    /// Build and factor the solvers up front (both need positive definiteness
    /// after pinning; the face solver also needs positive cotangent weights).
    pub fn with_solvers(g: &SurfaceGeometry) -> Result<Self> {
        let mut d = Dec::new(g);
        d.prepare_vertex_solver()?;
        d.prepare_face_solver()?;
        Ok(d)
    }

    pub fn prepare_vertex_solver(&mut self) -> Result<()> {
        if self.vertex_poisson.is_none() {
            self.vertex_poisson = Some(PinnedSolver::new(&self.l0, 0)?);
        }
        Ok(())
    }

    pub fn prepare_face_solver(&mut self) -> Result<()> {
        if self.face_poisson.is_none() {
            if let Some(e) = self.star1.iter().position(|&w| !(w > 0.0)) {
                return Err(GlError::Solver(format!(
                    "dual Laplacian needs positive cotangent weights (edge {e} has {:.3e})",
                    self.star1[e]
                )));
            }
            self.face_poisson = Some(PinnedSolver::new(&self.face_laplacian(), 0)?);
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.d0.ncols
    }
    pub fn n_edges(&self) -> usize {
        self.d0.nrows
    }
    pub fn n_faces(&self) -> usize {
        self.d1.nrows
    }

    /// Edge id and the sign of a→b relative to its canonical orientation.
    pub fn edge(&self, a: usize, b: usize) -> Option<(usize, f64)> {
        if a < b {
            self.edge_index.get(&(a, b)).map(|&e| (e, 1.0))
        } else {
            self.edge_index.get(&(b, a)).map(|&e| (e, -1.0))
        }
    }

    pub fn apply_d0(&self, a: &[f64]) -> Result<Cochain1> {
        check_len(a, self.n_vertices(), "0-cochain")?;
        Ok(self.d0.matvec(a))
    }

    pub fn apply_d1(&self, a: &[f64]) -> Result<Cochain2> {
        check_len(a, self.n_edges(), "1-cochain")?;
        Ok(self.d1.matvec(a))
    }

    /// δ1 = ⋆0⁻¹ d0ᵀ ⋆1 (1-forms → 0-forms), adjoint of d0.
    pub fn codiff1(&self, b: &[f64]) -> Result<Cochain0> {
        check_len(b, self.n_edges(), "1-cochain")?;
        let w: Vec<f64> = b.iter().zip(&self.star1).map(|(x, s)| x * s).collect();
        Ok(self.d0.tmatvec(&w).iter().zip(&self.star0).map(|(x, a)| x / a).collect())
    }

    /// δ2 = ⋆1⁻¹ d1ᵀ ⋆2 (2-forms → 1-forms), adjoint of d1.
    pub fn codiff2(&self, c: &[f64]) -> Result<Cochain1> {
        check_len(c, self.n_faces(), "2-cochain")?;
        let w: Vec<f64> = c.iter().zip(&self.star2).map(|(x, s)| x * s).collect();
        Ok(self.d1.tmatvec(&w).iter().zip(&self.star1).map(|(x, s)| x / s).collect())
    }

    pub fn inner0(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.star0).map(|((x, y), w)| x * y * w).sum()
    }
    pub fn inner1(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.star1).map(|((x, y), w)| x * y * w).sum()
    }
    pub fn inner2(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.star2).map(|((x, y), w)| x * y * w).sum()
    }

    /// d1 ⋆1⁻¹ d1ᵀ acting on dual 0-forms (face values).
    pub fn face_laplacian(&self) -> Csr<f64> {
        let nf = self.n_faces();
        let mut t = Vec::new();
        let d1t = self.d1.transpose();
        for e in 0..self.n_edges() {
            let inv = 1.0 / self.star1[e];
            let row: Vec<(usize, f64)> = (d1t.indptr[e]..d1t.indptr[e + 1])
                .map(|p| (d1t.indices[p], d1t.values[p]))
                .collect();
            for &(f, s) in &row {
                for &(h, r) in &row {
                    t.push((f, h, s * r * inv));
                }
            }
        }
        Csr::from_triplets(nf, nf, &t)
    }

    /// Weighted mean of a 0-form.
    pub fn mean0(&self, a: &[f64]) -> f64 {
        let tot = neumaier_sum(self.star0.iter().copied());
        neumaier_sum(a.iter().zip(&self.star0).map(|(x, w)| x * w)) / tot
    }

    /// Solve L0 x = rhs where rhs is an integrated (dual-cell) density with
    /// zero total; returns the zero-mean solution.
    pub fn poisson_solve_0form(&self, rhs: &[f64]) -> Result<Cochain0> {
        check_len(rhs, self.n_vertices(), "dual 2-cochain")?;
        let total = neumaier_sum(rhs.iter().copied());
        let scale = rhs.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
        if total.abs() > 1e-10 * scale {
            return Err(GlError::Incompatible(total));
        }
        self.solve_0form_projected(rhs)
    }

    /// Same as [`Dec::poisson_solve_0form`] for right-hand sides that are
    /// compatible by construction (divergences), with the rounding defect
    /// projected out instead of checked.
    pub(crate) fn solve_0form_projected(&self, rhs: &[f64]) -> Result<Cochain0> {
        let total = neumaier_sum(rhs.iter().copied());
        let solver = self
            .vertex_poisson
            .as_ref()
            .ok_or_else(|| GlError::Solver("vertex Poisson solver not prepared".into()))?;
        // remove the rounding-level defect so the pinned solve is consistent
        let tot_area = neumaier_sum(self.star0.iter().copied());
        let b: Vec<f64> = rhs.iter().zip(&self.star0).map(|(x, a)| x - total * a / tot_area).collect();
        let mut x = solver.solve(&b);
        let m = self.mean0(&x);
        for v in x.iter_mut() {
            *v -= m;
        }
        Ok(x)
    }

    /// Green function column G(·, y): L0 G = e_y − A/Vol, zero mean.
    pub fn green_function(&self, y: usize) -> Result<Cochain0> {
        let vol = neumaier_sum(self.star0.iter().copied());
        let mut rhs: Vec<f64> = self.star0.iter().map(|a| -a / vol).collect();
        rhs[y] += 1.0;
        self.poisson_solve_0form(&rhs)
    }

    /// Solve (d1 ⋆1⁻¹ d1ᵀ) ψ = rho on faces, rho with zero total; ψ has zero
    /// area-weighted mean. This is the dual-cell Poisson problem.
    pub fn poisson_solve_faces(&self, rho: &[f64]) -> Result<Vec<f64>> {
        check_len(rho, self.n_faces(), "2-cochain")?;
        let total = neumaier_sum(rho.iter().copied());
        let scale = rho.iter().map(|x| x.abs()).sum::<f64>().max(1e-300);
        if total.abs() > 1e-10 * scale {
            return Err(GlError::Incompatible(total));
        }
        self.solve_faces_projected(rho)
    }

    pub(crate) fn solve_faces_projected(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let total = neumaier_sum(rho.iter().copied());
        let solver = self
            .face_poisson
            .as_ref()
            .ok_or_else(|| GlError::Solver("face Poisson solver not prepared".into()))?;
        let areas: Vec<f64> = self.star2.iter().map(|s| 1.0 / s).collect();
        let tot_area = neumaier_sum(areas.iter().copied());
        let b: Vec<f64> = rho.iter().zip(&areas).map(|(x, a)| x - total * a / tot_area).collect();
        let mut x = solver.solve(&b);
        let m = neumaier_sum(x.iter().zip(&areas).map(|(v, a)| v * a)) / tot_area;
        for v in x.iter_mut() {
            *v -= m;
        }
        Ok(x)
    }

    pub fn loop_integral(&self, form: &[f64], lp: &[usize]) -> Result<f64> {
        let mut acc = Vec::with_capacity(lp.len());
        for w in 0..lp.len() {
            let a = lp[w];
            let b = lp[(w + 1) % lp.len()];
            let (e, s) = self
                .edge(a, b)
                .ok_or_else(|| GlError::Homology(format!("loop step {a}→{b} is not an edge")))?;
            acc.push(s * form[e]);
        }
        Ok(neumaier_sum(acc))
    }

    /// Hodge decomposition j = dθ + δ2 β + ξ.
    pub fn hodge_decompose(&self, j: &[f64], basis: &HarmonicBasis) -> Result<HodgeParts> {
        check_len(j, self.n_edges(), "1-cochain")?;
        let wj: Vec<f64> = j.iter().zip(&self.star1).map(|(x, s)| x * s).collect();
        let div = self.d0.tmatvec(&wj);
        let theta = self.solve_0form_projected(&div)?;
        let dj = self.d1.matvec(j);
        let psi = self.solve_faces_projected(&dj)?;
        let beta: Vec<f64> = psi.iter().zip(&self.star2).map(|(p, s)| p / s).collect();
        let coexact = self.codiff2(&beta)?;
        let xi = basis.project(self, j);
        let exact = self.d0.matvec(&theta);
        let resid: Vec<f64> = (0..j.len()).map(|e| j[e] - exact[e] - coexact[e] - xi[e]).collect();
        let nj = self.inner1(j, j).sqrt();
        let rel = if nj > 0.0 { self.inner1(&resid, &resid).sqrt() / nj } else { 0.0 };
        Ok(HodgeParts { theta, beta, xi, exact, coexact, residual: rel })
    }
}

pub struct HodgeParts {
    pub theta: Cochain0,
    /// Integrated face values, zero total.
    pub beta: Cochain2,
    pub xi: Cochain1,
    pub exact: Cochain1,
    pub coexact: Cochain1,
    /// Relative reconstruction residual in the ⋆1 norm.
    pub residual: f64,
}

fn check_len(a: &[f64], n: usize, what: &str) -> Result<()> {
    if a.len() != n {
        Err(GlError::Size(format!("{what} has length {}, expected {n}", a.len())))
    } else {
        Ok(())
    }
}

/// Relative residual ‖L0 x − b‖/‖b‖ of a Poisson solve.
pub fn poisson_residual(dec: &Dec, x: &[f64], b: &[f64]) -> f64 {
    let r = dec.l0.matvec(x);
    let num: f64 = r.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    let den = dot(b, b);
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
