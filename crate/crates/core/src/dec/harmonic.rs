//! Discrete harmonic 1-forms: closed and co-closed, a 2g-dimensional space.

use super::homology::tree_cotree;
use super::{Cochain1, Dec};
use crate::error::{GlError, Result};
use crate::geometry::SurfaceGeometry;

#[derive(Clone, Debug, Default)]
pub struct HarmonicBasis {
    /// ⋆1-orthonormal basis.
    pub forms: Vec<Cochain1>,
}

impl HarmonicBasis {
    /// Tree-cotree closed generators, made co-closed by subtracting an exact
    /// part, then orthonormalized.
    pub fn new(g: &SurfaceGeometry, dec: &Dec) -> Result<Self> {
        if g.genus() == 0 {
            return Ok(HarmonicBasis::default());
        }
        let tc = tree_cotree(g, &vec![false; g.n_vertices()]);
        if tc.generators.len() as i64 != 2 * g.genus() {
            return Err(GlError::Homology(format!(
                "tree-cotree left {} generators, expected {}",
                tc.generators.len(),
                2 * g.genus()
            )));
        }
        let mut forms: Vec<Cochain1> = Vec::new();
        for &gen in &tc.generators {
            let h = tc.dual_cochain(g, gen);
            let wh: Vec<f64> = h.iter().zip(&dec.star1).map(|(x, s)| x * s).collect();
            let div = dec.d0.tmatvec(&wh);
            let alpha = dec.solve_0form_projected(&div)?;
            let da = dec.d0.matvec(&alpha);
            let mut z: Vec<f64> = h.iter().zip(&da).map(|(a, b)| a - b).collect();
            // two passes of Gram-Schmidt for stability
            for _ in 0..2 {
                for q in &forms {
                    let c = dec.inner1(&z, q);
                    for (zi, qi) in z.iter_mut().zip(q) {
                        *zi -= c * qi;
                    }
                }
            }
            let n = dec.inner1(&z, &z).sqrt();
            if n < 1e-10 {
                return Err(GlError::Homology("generator produced a dependent harmonic form".into()));
            }
            z.iter_mut().for_each(|x| *x /= n);
            forms.push(z);
        }
        Ok(HarmonicBasis { forms })
    }

    pub fn dim(&self) -> usize {
        self.forms.len()
    }

    pub fn coefficients(&self, dec: &Dec, j: &[f64]) -> Vec<f64> {
        self.forms.iter().map(|z| dec.inner1(j, z)).collect()
    }

    pub fn combine(&self, c: &[f64]) -> Cochain1 {
        let n = self.forms.first().map_or(0, |z| z.len());
        let mut out = vec![0.0; n];
        for (z, &ck) in self.forms.iter().zip(c) {
            for (o, zi) in out.iter_mut().zip(z) {
                *o += ck * zi;
            }
        }
        out
    }

    /// ⋆1-orthogonal projection onto the harmonic space.
    pub fn project(&self, dec: &Dec, j: &[f64]) -> Cochain1 {
        if self.forms.is_empty() {
            return vec![0.0; j.len()];
        }
        self.combine(&self.coefficients(dec, j))
    }

    /// Largest of max|dζ| and max|⋆0 δζ| over the basis.
    pub fn defect(&self, dec: &Dec) -> f64 {
        let mut worst: f64 = 0.0;
        for z in &self.forms {
            let dz = dec.d1.matvec(z);
            let wz: Vec<f64> = z.iter().zip(&dec.star1).map(|(x, s)| x * s).collect();
            let div = dec.d0.tmatvec(&wz);
            for v in dz.iter().chain(&div) {
                worst = worst.max(v.abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::*;

    fn build(g: &SurfaceGeometry) -> (Dec, HarmonicBasis) {
        let mut d = Dec::new(g);
        d.prepare_vertex_solver().unwrap();
        let b = HarmonicBasis::new(g, &d).unwrap();
        (d, b)
    }

    #[test]
    fn dimension_is_twice_genus() {
        let s = icosphere(2, 1.0).unwrap();
        assert_eq!(build(&s).1.dim(), 0);
        let t = torus(2.0, 0.5, 48, 16).unwrap();
        assert_eq!(build(&t).1.dim(), 2);
        let g2 = genus2(2, 5).unwrap();
        assert_eq!(build(&g2).1.dim(), 4);
    }

    #[test]
    fn forms_are_harmonic_and_orthonormal() {
        for g in [torus(2.0, 0.5, 48, 16).unwrap(), genus2(2, 5).unwrap()] {
            let (d, b) = build(&g);
            assert!(b.defect(&d) < 1e-10, "{}", b.defect(&d));
            for i in 0..b.dim() {
                for k in 0..b.dim() {
                    let ip = d.inner1(&b.forms[i], &b.forms[k]);
                    let want = if i == k { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn projection_kills_exact_forms_and_is_idempotent() {
        let g = torus(2.0, 0.5, 48, 16).unwrap();
        let (d, b) = build(&g);
        let a: Vec<f64> = g.vertices.iter().map(|p| p.x.sin() + p.y * p.z).collect();
        let da = d.d0.matvec(&a);
        let p = b.project(&d, &da);
        assert!(p.iter().all(|x| x.abs() < 1e-10));
        let j: Vec<f64> = (0..g.n_edges()).map(|e| (e as f64 * 0.13).cos()).collect();
        let p1 = b.project(&d, &j);
        let p2 = b.project(&d, &p1);
        let err = p1.iter().zip(&p2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}
