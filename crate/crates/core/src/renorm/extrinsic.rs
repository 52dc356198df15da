//! The extrinsic functional 𝒢(u, θ) = ½∫|dθ|² + |𝒮(e^{iθ}u)|² and its
//! critical phase.
//!
//! With 𝒮² = α·Id + (traceless part acting as w ↦ β w̄), a unit field gives
//! |𝒮(e^{iθ}u)|² = α + Re(β ū² e^{−2iθ}), so only X = β ū² enters.

use serde::Serialize;

use crate::dec::Dec;
use crate::error::{GlError, Result};
use crate::fields::{EnergyModel, TangentField};
use crate::linalg::{neumaier_sum, Csr, SpdSolver, C64};

pub struct Extrinsic<'a> {
    dec: &'a Dec,
    mass: &'a [f64],
    alpha: Vec<f64>,
    x: Vec<C64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GValue {
    pub dirichlet: f64,
    pub shape: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThetaSolve {
    pub residual: f64,
    pub descent_iterations: usize,
    pub newton_iterations: usize,
    /// 𝒢 at every accepted iterate.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl<'a> Extrinsic<'a> {
    pub fn new(dec: &'a Dec, model: &'a EnergyModel, u: &TangentField) -> Self {
        let mut alpha = Vec::with_capacity(u.len());
        let mut x = Vec::with_capacity(u.len());
        for (s, z) in model.s2.iter().zip(&u.z) {
            alpha.push(0.5 * (s[(0, 0)] + s[(1, 1)]));
            let beta = C64::new(0.5 * (s[(0, 0)] - s[(1, 1)]), 0.5 * (s[(0, 1)] + s[(1, 0)]));
            x.push(beta * z.conj() * z.conj());
        }
        Extrinsic { dec, mass: &model.mass, alpha, x }
    }

    pub fn value(&self, theta: &[f64]) -> GValue {
        let lt = self.dec.l0.matvec(theta);
        let dirichlet = 0.5 * neumaier_sum(lt.iter().zip(theta).map(|(a, b)| a * b));
        let shape = 0.5
            * neumaier_sum((0..theta.len()).map(|v| {
                self.mass[v] * (self.alpha[v] + (self.x[v] * C64::from_polar(1.0, -2.0 * theta[v])).re)
            }));
        GValue { dirichlet, shape, total: dirichlet + shape }
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let lt = self.dec.l0.matvec(theta);
        (0..theta.len())
            .map(|v| lt[v] + self.mass[v] * (self.x[v] * C64::from_polar(1.0, -2.0 * theta[v])).im)
            .collect()
    }

    /// Discrete L² norm of the Euler-Lagrange residual density.
    pub fn residual(&self, theta: &[f64]) -> f64 {
        let g = self.gradient(theta);
        g.iter().zip(self.mass).map(|(r, m)| r * r / m).sum::<f64>().sqrt()
    }

    fn hessian(&self, theta: &[f64]) -> Csr<f64> {
        let mut t = self.dec.l0.triplets();
        for v in 0..theta.len() {
            let c = -2.0 * self.mass[v] * (self.x[v] * C64::from_polar(1.0, -2.0 * theta[v])).re;
            t.push((v, v, c));
        }
        Csr::from_triplets(theta.len(), theta.len(), &t)
    }

    /// Preconditioned descent with Armijo backtracking, switching to Newton
    /// once close and while the Hessian stays positive definite.
    pub fn theta_critical(&self, theta_init: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, ThetaSolve)> {
        let n = theta_init.len();
        let mut theta = theta_init.to_vec();
        let mut f = self.value(&theta).total;
        let mut history = vec![f];
        let mut res = self.residual(&theta);
        let mut descent_iterations = 0;
        let mut newton_iterations = 0;
        let bmax = self.x.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut pre: Option<SpdSolver<f64>> = None;
        let mut newton_ok = true;
        while res > tol && descent_iterations + newton_iterations < max_iter {
            if res < 1e-3 && newton_ok {
                newton_iterations += 1;
                match self.newton_step(&theta, f, res) {
                    Some((t, r, ft)) => {
                        theta = t;
                        res = r;
                        f = ft;
                        history.push(f);
                        continue;
                    }
                    None => newton_ok = false,
                }
            }
            if pre.is_none() {
                let mut t = self.dec.l0.triplets();
                for v in 0..n {
                    t.push((v, v, (2.0 * bmax + 1e-8) * self.mass[v]));
                }
                pre = Some(SpdSolver::new(Csr::from_triplets(n, n, &t))?);
            }
            let g = self.gradient(&theta);
            let dir: Vec<f64> = pre.as_ref().unwrap().solve(&g).iter().map(|x| -x).collect();
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
                let ft = self.value(&trial).total;
                if ft <= f + 1e-4 * step * slope {
                    theta = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            descent_iterations += 1;
            if !accepted {
                break;
            }
            history.push(f);
            res = self.residual(&theta);
        }
        if res > tol {
            return Err(GlError::NoConvergence(format!(
                "θ Euler-Lagrange residual {res:.3e} above {tol:.1e} after {descent_iterations} descent and {newton_iterations} Newton steps"
            )));
        }
        Ok((theta, ThetaSolve { residual: res, descent_iterations, newton_iterations, history }))
    }

    fn newton_step(&self, theta: &[f64], f: f64, res: f64) -> Option<(Vec<f64>, f64, f64)> {
        let solver = SpdSolver::new(self.hessian(theta)).ok()?;
        let g = self.gradient(theta);
        let dir: Vec<f64> = solver.solve(&g).iter().map(|x| -x).collect();
        let mut step = 1.0;
        for _ in 0..30 {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let rt = self.residual(&trial);
            let ft = self.value(&trial).total;
            if rt < res && ft <= f + 1e-12 * f.abs().max(1.0) {
                return Some((trial, rt, ft));
            }
            step *= 0.5;
        }
        None
    }
}
