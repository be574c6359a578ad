//! A priori bounds on the reconstructed velocity, assembled from the kernel
//! suprema of [`crate::kernel::bound_scan`].
//!
//! Splitting `(y_2, -y_1, 0) = (y_2 - x_2, x_1 - y_1, 0) + (x_2, -x_1, 0)` in
//! every summand gives, node by node,
//!
//! ```text
//! |u(x)| <= sum_j |w_j| (m1 / alpha + m0 |x_perp| / alpha^2)
//! ```
//!
//! where `|x_perp|` is the distance of `x` from the symmetry axis. The gradient
//! of each summand has spectral norm at most `|c| max(|f_a(s)| / s, |f_a'(s)|)`,
//! which yields a computable Lipschitz constant along any segment.

use rayon::prelude::*;
use serde::Serialize;

use super::{norm, NodeSet, Vec3};
use crate::error::{Error, Result};
use crate::kernel::KernelConstants;
use crate::state::ParticleCloud;

/// Relative slack for floating-point rounding in the summed bound.
const ROUNDING_SLACK: f64 = 1e-12;

/// Right-hand side of the pointwise velocity bound at `x`.
pub fn velocity_bound(x: Vec3, cloud: &ParticleCloud, k: &KernelConstants) -> f64 {
    let a = cloud.alpha.get();
    let x_perp = x[0].hypot(x[1]);
    cloud.abs_weight() * (k.m1 / a + k.m0 * x_perp / (a * a))
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub checked: usize,
    pub sup_u: f64,
    /// Largest `|u(x)| / bound(x)` over the points.
    pub max_ratio: f64,
    pub worst_point: Option<Vec3>,
}

/// Evaluates `|u|` at every point and asserts the pointwise bound.
pub fn velocity_bound_check(
    cloud: &ParticleCloud,
    points: &[Vec3],
    k: &KernelConstants,
) -> Result<BoundReport> {
    let u = super::eval_velocity_batch(points, cloud)?;
    let mut report = BoundReport {
        checked: points.len(),
        sup_u: 0.0,
        max_ratio: 0.0,
        worst_point: None,
    };
    for (x, u) in points.iter().zip(&u) {
        let value = norm(*u);
        let bound = velocity_bound(*x, cloud, k);
        report.sup_u = report.sup_u.max(value);
        if value > bound * (1.0 + ROUNDING_SLACK) {
            return Err(Error::BoundViolation {
                property: "velocity_bound",
                point: *x,
                value,
                bound,
            });
        }
        let ratio = if bound > 0.0 { value / bound } else { 0.0 };
        if ratio > report.max_ratio || report.worst_point.is_none() {
            report.max_ratio = ratio.max(report.max_ratio);
            report.worst_point = Some(*x);
        }
    }
    Ok(report)
}

/// Upper bound on the spectral norm of `grad u` at `x`.
pub fn gradient_bound(x: Vec3, cloud: &ParticleCloud, k: &KernelConstants) -> Result<f64> {
    let nodes = NodeSet::new(cloud)?;
    Ok(segment_lipschitz(&nodes, x, x, k))
}

/// Lipschitz constant of `u` on the segment `[x, xp]`, using the distance from
/// each node to the segment.
fn segment_lipschitz(nodes: &NodeSet, x: Vec3, xp: Vec3, k: &KernelConstants) -> f64 {
    let a = nodes.alpha;
    let far = k.mf1 / (a * a * a);
    nodes
        .pos
        .iter()
        .zip(&nodes.moment)
        .map(|(y, m)| {
            let c = m[0].hypot(m[1]);
            if c == 0.0 {
                return 0.0;
            }
            let s = point_segment_distance(*y, x, xp);
            let near = if s > 0.0 {
                k.m0 / (a * a * s)
            } else {
                f64::INFINITY
            };
            c * near.max(far)
        })
        .sum()
}

fn point_segment_distance(y: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ay = [y[0] - a[0], y[1] - a[1], y[2] - a[2]];
    let len2 = super::dot(ab, ab);
    let t = if len2 > 0.0 {
        (super::dot(ay, ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm([ay[0] - t * ab[0], ay[1] - t * ab[1], ay[2] - t * ab[2]])
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzProbe {
    pub pairs: usize,
    /// Largest `|u(x) - u(x')| / |x - x'|`.
    pub max_ratio: f64,
    /// Largest ratio divided by its segment bound; `<= 1` when the estimate holds.
    pub max_relative: f64,
}

/// Empirical difference quotients of `u` over point pairs against the
/// segment Lipschitz bound.
pub fn lipschitz_probe(
    cloud: &ParticleCloud,
    pairs: &[(Vec3, Vec3)],
    k: &KernelConstants,
) -> Result<LipschitzProbe> {
    let nodes = NodeSet::new(cloud)?;
    let stats: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(x, xp)| {
            let (u, up) = (nodes.velocity(x, None), nodes.velocity(xp, None));
            let du = norm([u[0] - up[0], u[1] - up[1], u[2] - up[2]]);
            let dx = norm([x[0] - xp[0], x[1] - xp[1], x[2] - xp[2]]);
            let ratio = if dx > 0.0 { du / dx } else { 0.0 };
            let bound = segment_lipschitz(&nodes, x, xp, k);
            let rel = if bound > 0.0 { ratio / bound } else { 0.0 };
            (ratio, rel)
        })
        .collect();
    Ok(LipschitzProbe {
        pairs: pairs.len(),
        max_ratio: stats.iter().map(|s| s.0).fold(0.0, f64::max),
        max_relative: stats.iter().map(|s| s.1).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{bound_scan, Alpha};
    use crate::state::VortexRing;

    #[test]
    fn empty_cloud_bound_holds() {
        let k = bound_scan().unwrap();
        let cloud = ParticleCloud::new(vec![], Alpha::new(0.5).unwrap());
        let rep = velocity_bound_check(&cloud, &[[1.0, 2.0, 3.0]], &k).unwrap();
        assert_eq!(rep.sup_u, 0.0);
    }

    #[test]
    fn gradient_bound_dominates_gradient() {
        let k = bound_scan().unwrap();
        let rings = vec![
            VortexRing::new(1.0, 0.0, 3.0, 0.1, 16).unwrap(),
            VortexRing::new(0.6, 0.2, -2.0, 0.1, 16).unwrap(),
        ];
        let cloud = ParticleCloud::new(rings, Alpha::new(0.25).unwrap());
        for x in [[0.9, 0.1, 0.05], [0.2, 0.0, 0.5], [2.0, 1.0, -1.0]] {
            let g = super::super::eval_grad(x, &cloud).unwrap();
            assert!(super::super::operator_norm(&g) <= gradient_bound(x, &cloud, &k).unwrap());
        }
    }

    #[test]
    fn segment_distance() {
        let d = point_segment_distance([0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        assert!((d - 1.0).abs() < 1e-15);
        let d = point_segment_distance([3.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        assert!((d - 2.0).abs() < 1e-15);
    }
}
