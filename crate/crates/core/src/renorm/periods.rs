//! Period quantization of the harmonic flux ξ.
//!
//! A unit field with current τ + ξ exists iff around every homology loop the
//! current plus the frame rotation integrates to a multiple of 2π. The
//! integers are fixed at initialization; ξ then follows the vortices.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::dec::homology::{condition_number, homology_generators, period_matrix};
use crate::dec::{Dec, HarmonicBasis, HomologyLoops};
use crate::error::{GlError, Result};
use crate::fields::Connection;
use crate::geometry::{SurfaceGeometry, SurfacePoint};

/// Initial flux data: integer periods, or basis coefficients to be checked.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum FluxSpec {
    Periods { periods: Vec<i64> },
    Coefficients(Vec<f64>),
}

impl Default for FluxSpec {
    fn default() -> Self {
        FluxSpec::Coefficients(Vec::new())
    }
}

/// Tolerance on |period/2π − nearest integer| when coefficients are given.
pub const PERIOD_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct PeriodTracker {
    pub loops: HomologyLoops,
    pub matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    pub integers: Vec<i64>,
    /// Vertices closer than this to a vortex may not carry a loop.
    pub exclusion: f64,
    prev_tau: Vec<f64>,
    prev_xi: Vec<f64>,
    /// How many times loops were re-routed.
    pub reroutes: usize,
}

fn excluded_mask(g: &SurfaceGeometry, pts: &[&SurfacePoint], radius: f64) -> Vec<bool> {
    g.vertices.iter().map(|x| pts.iter().any(|p| (x - p.pos()).norm() < radius)).collect()
}

/// ∮τ − ∮ρ for each loop: the part of the period not carried by ξ.
fn offsets(dec: &Dec, conn: &Connection, loops: &HomologyLoops, tau: &[f64]) -> Result<Vec<f64>> {
    loops
        .loops
        .iter()
        .map(|lp| Ok(dec.loop_integral(tau, lp)? - dec.loop_integral(&conn.rho, lp)?))
        .collect()
}

fn build(g: &SurfaceGeometry, dec: &Dec, basis: &HarmonicBasis, excl: &[bool]) -> Result<(HomologyLoops, DMatrix<f64>, DMatrix<f64>)> {
    let loops = homology_generators(g, excl)?;
    let p = period_matrix(dec, basis, &loops)?;
    let c = condition_number(&p);
    if !c.is_finite() || c > 1e8 {
        return Err(GlError::Homology(format!("period matrix is singular (condition {c:.3e})")));
    }
    let inv = p.clone().try_inverse().ok_or_else(|| GlError::Homology("period matrix not invertible".into()))?;
    Ok((loops, p, inv))
}

impl PeriodTracker {
    /// Set up loops and integers for the initial configuration and return
    /// the tracker with the initial ξ coefficients.
    pub fn new(
        g: &SurfaceGeometry,
        dec: &Dec,
        conn: &Connection,
        basis: &HarmonicBasis,
        a: &[SurfacePoint],
        tau: &[f64],
        flux: &FluxSpec,
    ) -> Result<(Self, Vec<f64>)> {
        let n = basis.dim();
        let exclusion = 4.0 * g.mean_edge;
        if n == 0 {
            let ok = match flux {
                FluxSpec::Periods { periods } => periods.is_empty(),
                FluxSpec::Coefficients(c) => c.iter().all(|&x| x == 0.0),
            };
            if !ok {
                return Err(GlError::Config("a genus-0 surface carries no harmonic flux".into()));
            }
            let t = PeriodTracker {
                loops: HomologyLoops::default(),
                matrix: DMatrix::zeros(0, 0),
                inverse: DMatrix::zeros(0, 0),
                integers: Vec::new(),
                exclusion,
                prev_tau: tau.to_vec(),
                prev_xi: Vec::new(),
                reroutes: 0,
            };
            return Ok((t, Vec::new()));
        }
        let pts: Vec<&SurfacePoint> = a.iter().collect();
        let (loops, matrix, inverse) = build(g, dec, basis, &excluded_mask(g, &pts, exclusion))?;
        let off = offsets(dec, conn, &loops, tau)?;
        let integers = match flux {
            FluxSpec::Periods { periods } => {
                if periods.len() != n {
                    return Err(GlError::Config(format!("{} periods given, {} needed", periods.len(), n)));
                }
                periods.clone()
            }
            FluxSpec::Coefficients(c) => {
                if c.len() != n {
                    return Err(GlError::Config(format!("{} flux coefficients given, {} needed", c.len(), n)));
                }
                let per = &matrix * DVector::from_column_slice(c);
                let mut ints = Vec::with_capacity(n);
                let mut defect = Vec::with_capacity(n);
                for h in 0..n {
                    let q = (per[h] + off[h]) / (2.0 * PI);
                    ints.push(q.round() as i64);
                    defect.push(q - q.round());
                }
                if defect.iter().any(|x| x.abs() > PERIOD_TOL) {
                    return Err(GlError::PeriodDefect(defect));
                }
                ints
            }
        };
        let mut t = PeriodTracker {
            loops,
            matrix,
            inverse,
            integers,
            exclusion,
            prev_tau: tau.to_vec(),
            prev_xi: Vec::new(),
            reroutes: 0,
        };
        let xi = t.solve(dec, conn, tau)?;
        t.prev_xi = xi.clone();
        Ok((t, xi))
    }

    fn solve(&self, dec: &Dec, conn: &Connection, tau: &[f64]) -> Result<Vec<f64>> {
        let off = offsets(dec, conn, &self.loops, tau)?;
        let rhs = DVector::from_iterator(off.len(), off.iter().zip(&self.integers).map(|(o, &k)| 2.0 * PI * k as f64 - o));
        Ok((&self.inverse * rhs).iter().copied().collect())
    }

    /// Period defect (in units of 2π) of given coefficients for τ.
    pub fn defect(&self, dec: &Dec, conn: &Connection, tau: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        if self.integers.is_empty() {
            return Ok(Vec::new());
        }
        let off = offsets(dec, conn, &self.loops, tau)?;
        let per = &self.matrix * DVector::from_column_slice(xi);
        Ok((0..off.len()).map(|h| (per[h] + off[h]) / (2.0 * PI) - self.integers[h] as f64).collect())
    }

    /// ξ for new positions without committing the move.
    pub fn peek(
        &self,
        g: &SurfaceGeometry,
        dec: &Dec,
        conn: &Connection,
        basis: &HarmonicBasis,
        a_prev: &[SurfacePoint],
        a_new: &[SurfacePoint],
        tau_new: &[f64],
    ) -> Result<(Vec<f64>, Option<(HomologyLoops, DMatrix<f64>, DMatrix<f64>, Vec<i64>)>)> {
        if self.integers.is_empty() {
            return Ok((Vec::new(), None));
        }
        let near = self.loops.loops.iter().flatten().any(|&v| {
            a_new.iter().any(|p| (g.vertices[v] - p.pos()).norm() < 0.5 * self.exclusion)
        });
        if !near {
            return Ok((self.solve(dec, conn, tau_new)?, None));
        }
        // re-route around both the old and the new positions; the previous
        // state is a valid field, so its periods on the new loops are integral
        let pts: Vec<&SurfacePoint> = a_prev.iter().chain(a_new.iter()).collect();
        let (loops, matrix, inverse) = build(g, dec, basis, &excluded_mask(g, &pts, self.exclusion))?;
        let off_prev = offsets(dec, conn, &loops, &self.prev_tau)?;
        let per = &matrix * DVector::from_column_slice(&self.prev_xi);
        let ints: Vec<i64> = (0..off_prev.len()).map(|h| ((per[h] + off_prev[h]) / (2.0 * PI)).round() as i64).collect();
        let off = offsets(dec, conn, &loops, tau_new)?;
        let rhs = DVector::from_iterator(off.len(), off.iter().zip(&ints).map(|(o, &k)| 2.0 * PI * k as f64 - o));
        let xi = (&inverse * rhs).iter().copied().collect();
        Ok((xi, Some((loops, matrix, inverse, ints))))
    }

    /// Move to new positions: returns the new ξ and commits it.
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &mut self,
        g: &SurfaceGeometry,
        dec: &Dec,
        conn: &Connection,
        basis: &HarmonicBasis,
        a_prev: &[SurfacePoint],
        a_new: &[SurfacePoint],
        tau_new: &[f64],
    ) -> Result<Vec<f64>> {
        let (xi, reroute) = self.peek(g, dec, conn, basis, a_prev, a_new, tau_new)?;
        if let Some((loops, matrix, inverse, ints)) = reroute {
            self.loops = loops;
            self.matrix = matrix;
            self.inverse = inverse;
            self.integers = ints;
            self.reroutes += 1;
        }
        self.prev_tau = tau_new.to_vec();
        self.prev_xi = xi.clone();
        Ok(xi)
    }
}
