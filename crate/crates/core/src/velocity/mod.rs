//! Velocity reconstruction by direct summation of the regularized
//! Biot–Savart law over the azimuthal nodes of every ring:
//!
//! ```text
//! u(x) = sum_j (w_j / n) sum_m f_a(|x - y_jm|) (x - y_jm)/|x - y_jm| x (y_jm,2, -y_jm,1, 0)
//! ```
//!
//! Sums run ring-major, node-minor, in a fixed order for every evaluation
//! point, so batch evaluation over any number of threads is bit-identical to
//! pointwise evaluation. A node coinciding with the evaluation point
//! contributes zero.

pub mod bounds;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{f_prime_raw, f_raw};
use crate::state::{unit_circle, ParticleCloud};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];
/// `hess[a][i][k] = d_k d_i u_a`
pub type Tensor3 = [[[f64; 3]; 3]; 3];

/// Flattened azimuthal nodes of a cloud, ready for summation.
#[derive(Clone, Debug)]
pub struct NodeSet {
    pos: Vec<Vec3>,
    /// `(w_j / n) * (y_2, -y_1)`; the third component is always zero.
    moment: Vec<[f64; 2]>,
    /// Index of node 0 of each ring.
    ring_start: Vec<usize>,
    alpha: f64,
}

impl NodeSet {
    pub fn new(cloud: &ParticleCloud) -> Result<Self> {
        let total: usize = cloud.rings.iter().map(|r| r.n_theta).sum();
        let mut pos = Vec::with_capacity(total);
        let mut moment = Vec::with_capacity(total);
        let mut ring_start = Vec::with_capacity(cloud.rings.len());
        let mut circle_n = 0;
        let (mut cos, mut sin) = (Vec::new(), Vec::new());
        for (j, ring) in cloud.rings.iter().enumerate() {
            if !(ring.r.is_finite()
                && ring.z.is_finite()
                && ring.g.is_finite()
                && ring.vol.is_finite())
            {
                return Err(Error::NonFinite { ring: j });
            }
            if ring.n_theta != circle_n {
                (cos, sin) = unit_circle(ring.n_theta);
                circle_n = ring.n_theta;
            }
            ring_start.push(pos.len());
            let wn = ring.weight() / ring.n_theta as f64;
            for (c, s) in cos.iter().zip(&sin) {
                let y = [ring.r * c, ring.r * s, ring.z];
                pos.push(y);
                moment.push([wn * y[1], -wn * y[0]]);
            }
        }
        Ok(NodeSet {
            pos,
            moment,
            ring_start,
            alpha: cloud.alpha.get(),
        })
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.pos
    }

    /// `u(x)`, skipping node index `skip` if given.
    #[inline]
    pub(crate) fn velocity(&self, x: Vec3, skip: Option<usize>) -> Vec3 {
        let a = self.alpha;
        let inv_a = 1.0 / a;
        let inv_a2 = inv_a * inv_a;
        let mut u = [0.0; 3];
        for (idx, (y, m)) in self.pos.iter().zip(&self.moment).enumerate() {
            if Some(idx) == skip {
                continue;
            }
            let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
            let s2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if s2 == 0.0 {
                continue;
            }
            let s = s2.sqrt();
            let phi = f_raw(s * inv_a) * inv_a2 / s;
            // d x (m0, m1, 0)
            u[0] += phi * (-d[2] * m[1]);
            u[1] += phi * (d[2] * m[0]);
            u[2] += phi * (d[0] * m[1] - d[1] * m[0]);
        }
        u
    }

    /// Analytic gradient `grad[a][i] = d u_a / d x_i`, optionally weighted by a
    /// radial cutoff `weight(|x - y|)` applied after differentiation.
    #[inline]
    pub(crate) fn gradient_weighted(&self, x: Vec3, weight: impl Fn(f64) -> f64) -> Mat3 {
        let a = self.alpha;
        let inv_a = 1.0 / a;
        let inv_a2 = inv_a * inv_a;
        let inv_a3 = inv_a2 * inv_a;
        let mut g = [[0.0; 3]; 3];
        for (y, m) in self.pos.iter().zip(&self.moment) {
            let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
            let s2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            if s2 == 0.0 {
                continue;
            }
            let s = s2.sqrt();
            let w = weight(s);
            if w == 0.0 {
                continue;
            }
            let z = s * inv_a;
            let phi = f_raw(z) * inv_a2 / s;
            let psi = (f_prime_raw(z) * inv_a3 - phi) / s2;
            let (phi, psi) = (w * phi, w * psi);
            // d K_b / d x_i = phi delta_ib + psi d_i d_b ; grad u = eps_abc dK_b/dx_i m_c
            let dxm = [-d[2] * m[1], d[2] * m[0], d[0] * m[1] - d[1] * m[0]];
            g[0][2] -= phi * m[1];
            g[1][2] += phi * m[0];
            g[2][0] += phi * m[1];
            g[2][1] -= phi * m[0];
            for (row, dxm_a) in g.iter_mut().zip(dxm) {
                let c = psi * dxm_a;
                row[0] += c * d[0];
                row[1] += c * d[1];
                row[2] += c * d[2];
            }
        }
        g
    }

    #[inline]
    pub(crate) fn gradient(&self, x: Vec3) -> Mat3 {
        self.gradient_weighted(x, |_| 1.0)
    }

    pub(crate) fn hessian(&self, x: Vec3) -> Tensor3 {
        let h = HESSIAN_STEP * self.alpha;
        let mut out = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += h;
            xm[k] -= h;
            let (gp, gm) = (self.gradient(xp), self.gradient(xm));
            for a in 0..3 {
                for i in 0..3 {
                    out[a][i][k] = (gp[a][i] - gm[a][i]) / (2.0 * h);
                }
            }
        }
        out
    }

    /// Meridional advection velocity `(u_r, u_z)` of ring `j` at its own node 0.
    pub(crate) fn ring_velocity(&self, r: f64, z: f64, self_ring: Option<usize>) -> [f64; 2] {
        let skip = self_ring.map(|j| self.ring_start[j]);
        let u = self.velocity([r, 0.0, z], skip);
        [u[0], u[2]]
    }
}

/// Finite-difference step of the Hessian, in units of alpha.
pub const HESSIAN_STEP: f64 = 1e-4;

fn check_point(x: Vec3) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "evaluation point {x:?} is not finite"
        )))
    }
}

/// Filtered velocity at `x`. An empty cloud gives the zero vector.
pub fn eval_velocity(x: Vec3, cloud: &ParticleCloud) -> Result<Vec3> {
    check_point(x)?;
    Ok(NodeSet::new(cloud)?.velocity(x, None))
}

/// Pointwise [`eval_velocity`] over many points, parallel over points.
pub fn eval_velocity_batch(points: &[Vec3], cloud: &ParticleCloud) -> Result<Vec<Vec3>> {
    points.iter().try_for_each(|&x| check_point(x))?;
    let nodes = NodeSet::new(cloud)?;
    Ok(points
        .par_iter()
        .map(|&x| nodes.velocity(x, None))
        .collect())
}

/// Velocity gradient `grad[a][i] = d u_a / d x_i`.
pub fn eval_grad(x: Vec3, cloud: &ParticleCloud) -> Result<Mat3> {
    check_point(x)?;
    Ok(NodeSet::new(cloud)?.gradient(x))
}

pub fn eval_grad_batch(points: &[Vec3], cloud: &ParticleCloud) -> Result<Vec<Mat3>> {
    points.iter().try_for_each(|&x| check_point(x))?;
    let nodes = NodeSet::new(cloud)?;
    Ok(points.par_iter().map(|&x| nodes.gradient(x)).collect())
}

/// Second derivatives by central differences of the analytic gradient, step
/// `1e-4 alpha`.
pub fn eval_hessian(x: Vec3, cloud: &ParticleCloud) -> Result<Tensor3> {
    check_point(x)?;
    Ok(NodeSet::new(cloud)?.hessian(x))
}

/// Smooth cutoff: 1 on `|s| < 1`, 0 on `|s| > 2`.
pub fn cutoff(s: f64) -> f64 {
    let s = s.abs();
    if s <= 1.0 {
        return 1.0;
    }
    if s >= 2.0 {
        return 0.0;
    }
    let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (a, b) = (bump(2.0 - s), bump(s - 1.0));
    a / (a + b)
}

/// Gradient split into the part from nodes within the cutoff (`near`,
/// weighted by `cutoff(|x - y|)`) and the complement (`far`). `near + far`
/// equals [`eval_grad`] up to rounding.
pub fn eval_grad_split(x: Vec3, cloud: &ParticleCloud) -> Result<(Mat3, Mat3)> {
    check_point(x)?;
    let nodes = NodeSet::new(cloud)?;
    let near = nodes.gradient_weighted(x, cutoff);
    let far = nodes.gradient_weighted(x, |s| 1.0 - cutoff(s));
    Ok((near, far))
}

/// Azimuthal unit vector `(x_2 / r, -x_1 / r, 0)`.
pub fn e_theta(x: Vec3) -> Result<Vec3> {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return Err(Error::Domain(
            "e_theta is undefined on the symmetry axis".into(),
        ));
    }
    Ok([x[1] / r, -x[0] / r, 0.0])
}

/// Swirl `u(x) . e_theta(x)`.
pub fn swirl_component(x: Vec3, cloud: &ParticleCloud) -> Result<f64> {
    let e = e_theta(x)?;
    let u = eval_velocity(x, cloud)?;
    Ok(dot(u, e))
}

/// Velocity, and optionally its gradient and Hessian, at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VelocitySample {
    pub u: Vec3,
    pub grad: Option<Mat3>,
    pub hess: Option<Tensor3>,
}

pub fn eval_samples(
    points: &[Vec3],
    cloud: &ParticleCloud,
    with_grad: bool,
    with_hess: bool,
) -> Result<Vec<VelocitySample>> {
    points.iter().try_for_each(|&x| check_point(x))?;
    let nodes = NodeSet::new(cloud)?;
    Ok(points
        .par_iter()
        .map(|&x| VelocitySample {
            u: nodes.velocity(x, None),
            grad: with_grad.then(|| nodes.gradient(x)),
            hess: with_hess.then(|| nodes.hessian(x)),
        })
        .collect())
}

/// Advection velocities `(u_r, u_z)` of every ring, evaluated at its node 0.
pub fn advection_velocities(cloud: &ParticleCloud) -> Result<Vec<[f64; 2]>> {
    let nodes = NodeSet::new(cloud)?;
    Ok(cloud
        .rings
        .par_iter()
        .enumerate()
        .map(|(j, ring)| nodes.ring_velocity(ring.r, ring.z, Some(j)))
        .collect())
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn frobenius(m: &Mat3) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn trace(m: &Mat3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

/// Spectral norm of a 3x3 matrix.
pub fn operator_norm(m: &Mat3) -> f64 {
    let mat = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
    mat.singular_values().max()
}
