//! Closed-form surfaces given as level sets F = 0 with ∇F pointing outward.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub type V3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analytic {
    Sphere { radius: f64 },
    /// Axis of revolution is z.
    Torus { major: f64, minor: f64 },
    Ellipsoid { axes: [f64; 3] },
}

impl Analytic {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Analytic::Sphere { radius } => radius > 0.0,
            Analytic::Torus { major, minor } => minor > 0.0 && major > minor,
            Analytic::Ellipsoid { axes } => axes.iter().all(|&a| a > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("non-positive or invalid surface parameters: {self:?}"))
        }
    }

    pub fn level(&self, x: &V3) -> f64 {
        match *self {
            Analytic::Sphere { radius } => x.norm_squared() - radius * radius,
            Analytic::Torus { major, minor } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                (rho - major).powi(2) + x.z * x.z - minor * minor
            }
            Analytic::Ellipsoid { axes } => {
                (x.x / axes[0]).powi(2) + (x.y / axes[1]).powi(2) + (x.z / axes[2]).powi(2) - 1.0
            }
        }
    }

    pub fn gradient(&self, x: &V3) -> V3 {
        match *self {
            Analytic::Sphere { .. } => 2.0 * x,
            Analytic::Torus { major, .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt().max(1e-300);
                let s = 2.0 * (rho - major) / rho;
                V3::new(s * x.x, s * x.y, 2.0 * x.z)
            }
            Analytic::Ellipsoid { axes } => V3::new(
                2.0 * x.x / (axes[0] * axes[0]),
                2.0 * x.y / (axes[1] * axes[1]),
                2.0 * x.z / (axes[2] * axes[2]),
            ),
        }
    }

    pub fn hessian(&self, x: &V3) -> Matrix3<f64> {
        match *self {
            Analytic::Sphere { .. } => Matrix3::identity() * 2.0,
            Analytic::Torus { major, .. } => {
                let rho = (x.x * x.x + x.y * x.y).sqrt().max(1e-300);
                let p = [x.x, x.y];
                let mut h = Matrix3::zeros();
                for i in 0..2 {
                    for j in 0..2 {
                        let dij = if i == j { 1.0 } else { 0.0 };
                        h[(i, j)] = 2.0 * p[i] * p[j] / (rho * rho)
                            + 2.0 * (rho - major) * (dij / rho - p[i] * p[j] / rho.powi(3));
                    }
                }
                h[(2, 2)] = 2.0;
                h
            }
            Analytic::Ellipsoid { axes } => Matrix3::from_diagonal(&V3::new(
                2.0 / (axes[0] * axes[0]),
                2.0 / (axes[1] * axes[1]),
                2.0 / (axes[2] * axes[2]),
            )),
        }
    }

    pub fn normal(&self, x: &V3) -> V3 {
        self.gradient(x).normalize()
    }

    /// Newton projection onto the level set along the gradient.
    pub fn project(&self, x: &V3) -> V3 {
        if let Analytic::Sphere { radius } = *self {
            return x * (radius / x.norm());
        }
        let mut y = *x;
        for _ in 0..50 {
            let f = self.level(&y);
            let g = self.gradient(&y);
            let step = g * (f / g.norm_squared());
            y -= step;
            if step.norm() < 1e-15 * (1.0 + y.norm()) {
                break;
            }
        }
        y
    }

    /// Shape operator 𝒮 = −∇N in the orthonormal tangent frame (e1, e2).
    pub fn shape_operator(&self, x: &V3, e1: &V3, e2: &V3) -> Matrix2<f64> {
        let g = self.gradient(x).norm();
        let h = self.hessian(x);
        let e = [e1, e2];
        let mut s = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                s[(a, b)] = -(e[a].transpose() * h * e[b])[(0, 0)] / g;
            }
        }
        // exact symmetry despite rounding
        let off = 0.5 * (s[(0, 1)] + s[(1, 0)]);
        s[(0, 1)] = off;
        s[(1, 0)] = off;
        s
    }

    pub fn gauss_curvature(&self, x: &V3) -> f64 {
        let n = self.normal(x);
        let (e1, e2) = tangent_frame(&n);
        self.shape_operator(x, &e1, &e2).determinant()
    }

    pub fn surface_area(&self) -> Option<f64> {
        match *self {
            Analytic::Sphere { radius } => Some(4.0 * std::f64::consts::PI * radius * radius),
            Analytic::Torus { major, minor } => {
                Some(4.0 * std::f64::consts::PI.powi(2) * major * minor)
            }
            Analytic::Ellipsoid { .. } => None,
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        match self {
            Analytic::Torus { .. } => 0,
            _ => 2,
        }
    }
}

/// Frame from a unit normal: e1 is the projection of the coordinate axis least
/// aligned with n, e2 = n × e1.
pub fn tangent_frame(n: &V3) -> (V3, V3) {
    let a = n.abs();
    let axis = if a.x <= a.y && a.x <= a.z {
        V3::x()
    } else if a.y <= a.z {
        V3::y()
    } else {
        V3::z()
    };
    let e1 = (axis - n * n.dot(&axis)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}
