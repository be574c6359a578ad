//! Successive approximation of the flow map on one time window.
//!
//! Iterate 0 is the frozen map `y(t, x) = x`. Iterate `n` solves
//! `dy/dt = u^n(t, y)` where `u^n` is the kernel sum over the rings placed at
//! the previous iterate's positions, reconstructed between the `K + 1` stored
//! time nodes. Each sub-interval is integrated with one RK4 step whose stage
//! sources come from that reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    axpy, check_finite, clamp_axis, contraction_estimate, Point2, Provenance, TrajectoryHistory,
};
use crate::error::{Error, Result};
use crate::state::ParticleCloud;
use crate::velocity::NodeSet;

/// How the previous iterate's positions are reconstructed between time nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeInterpolation {
    Linear,
    /// Cubic Hermite using the stored node velocities.
    #[default]
    Hermite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub nodes_per_window: usize,
    pub interpolation: TimeInterpolation,
}

impl Default for PicardSettings {
    fn default() -> Self {
        PicardSettings {
            tol: 1e-10,
            max_iter: 50,
            nodes_per_window: 8,
            interpolation: TimeInterpolation::Hermite,
        }
    }
}

/// Convergence record of one Picard window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub t_start: f64,
    /// Window length `T1`.
    pub window: f64,
    /// Empirical contraction constant `k` at the window start (1/time).
    pub contraction: f64,
    pub iterations: usize,
    /// `g^N = max_{k, j} |y^N(t_k, x_j) - y^{N-1}(t_k, x_j)|`, one entry per iterate.
    pub monitor: Vec<f64>,
}

impl PicardReport {
    /// Largest ratio `g^{N+1} / g^N` after the first iterate.
    pub fn max_contraction_ratio(&self) -> Option<f64> {
        self.monitor
            .windows(2)
            .skip(1)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .reduce(f64::max)
    }
}

struct Iterate {
    positions: Vec<Vec<Point2>>,
    velocities: Vec<Vec<Point2>>,
    clamped: usize,
}

fn midpoint(
    interp: TimeInterpolation,
    h: f64,
    p0: &[Point2],
    p1: &[Point2],
    v0: &[Point2],
    v1: &[Point2],
) -> Vec<Point2> {
    (0..p0.len())
        .map(|j| {
            let mut m = [0.5 * (p0[j][0] + p1[j][0]), 0.5 * (p0[j][1] + p1[j][1])];
            if interp == TimeInterpolation::Hermite {
                for (i, mi) in m.iter_mut().enumerate() {
                    *mi += h / 8.0 * (v0[j][i] - v1[j][i]);
                }
            }
            m
        })
        .collect()
}

fn field(template: &ParticleCloud, sources: &[Point2]) -> Result<NodeSet> {
    NodeSet::new(&template.with_positions(sources, template.t))
}

fn eval(nodes: &NodeSet, at: &[Point2]) -> Vec<Point2> {
    at.par_iter()
        .enumerate()
        .map(|(j, p)| nodes.ring_velocity(p[0], p[1], Some(j)))
        .collect()
}

fn next_iterate(
    cloud: &ParticleCloud,
    prev: &Iterate,
    h: f64,
    interp: TimeInterpolation,
) -> Result<Iterate> {
    let k_nodes = prev.positions.len() - 1;
    let mut y = cloud.positions();
    let mut positions = Vec::with_capacity(k_nodes + 1);
    let mut velocities = Vec::with_capacity(k_nodes + 1);
    let mut clamped = 0;
    let mut start = field(cloud, &prev.positions[0])?;
    for k in 0..k_nodes {
        let (p0, p1) = (&prev.positions[k], &prev.positions[k + 1]);
        let mid = field(
            cloud,
            &midpoint(
                interp,
                h,
                p0,
                p1,
                &prev.velocities[k],
                &prev.velocities[k + 1],
            ),
        )?;
        let end = field(cloud, p1)?;
        let k1 = eval(&start, &y);
        let k2 = eval(&mid, &axpy(&y, 0.5 * h, &k1));
        let k3 = eval(&mid, &axpy(&y, 0.5 * h, &k2));
        let k4 = eval(&end, &axpy(&y, h, &k3));
        let mut next: Vec<Point2> = (0..y.len())
            .map(|j| {
                let mut p = y[j];
                for (i, pi) in p.iter_mut().enumerate() {
                    *pi += h / 6.0 * (k1[j][i] + 2.0 * k2[j][i] + 2.0 * k3[j][i] + k4[j][i]);
                }
                p
            })
            .collect();
        check_finite(&next)?;
        clamped += clamp_axis(&mut next);
        positions.push(std::mem::replace(&mut y, next));
        velocities.push(k1);
        start = end;
    }
    velocities.push(eval(&start, &y));
    positions.push(y);
    Ok(Iterate {
        positions,
        velocities,
        clamped,
    })
}

fn max_displacement(a: &Iterate, b: &Iterate) -> f64 {
    a.positions
        .iter()
        .zip(&b.positions)
        .flat_map(|(pa, pb)| pa.iter().zip(pb))
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .fold(0.0, f64::max)
}

/// Picard iteration on `[cloud.t, cloud.t + window]` with
/// `settings.nodes_per_window` sub-intervals.
pub fn picard_solve(
    cloud: &ParticleCloud,
    window: f64,
    settings: &PicardSettings,
) -> Result<(TrajectoryHistory, PicardReport)> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::Domain(format!(
            "Picard window must be positive (got {window})"
        )));
    }
    if settings.nodes_per_window == 0 || settings.max_iter == 0 {
        return Err(Error::Domain(
            "Picard needs nodes_per_window >= 1 and max_iter >= 1".into(),
        ));
    }
    if !(settings.tol > 0.0) {
        return Err(Error::Domain(format!(
            "Picard tol must be positive (got {})",
            settings.tol
        )));
    }
    let k_nodes = settings.nodes_per_window;
    let h = window / k_nodes as f64;
    let x = cloud.positions();
    check_finite(&x)?;
    let mut report = PicardReport {
        t_start: cloud.t,
        window,
        contraction: contraction_estimate(cloud)?,
        iterations: 0,
        monitor: Vec::new(),
    };
    let mut current = Iterate {
        positions: vec![x.clone(); k_nodes + 1],
        velocities: vec![vec![[0.0; 2]; x.len()]; k_nodes + 1],
        clamped: 0,
    };
    loop {
        let next = next_iterate(cloud, &current, h, settings.interpolation)?;
        let g = max_displacement(&next, &current);
        report.monitor.push(g);
        report.iterations += 1;
        current = next;
        if g < settings.tol {
            break;
        }
        if report.iterations >= settings.max_iter {
            return Err(Error::PicardNotConverged {
                monitor: report.monitor,
            });
        }
    }
    let mut history = TrajectoryHistory::new(Provenance::Picard);
    for (k, (p, v)) in current
        .positions
        .into_iter()
        .zip(current.velocities)
        .enumerate()
    {
        let t = if k == k_nodes {
            cloud.t + window
        } else {
            cloud.t + k as f64 * h
        };
        history.push(t, p, v);
    }
    history.clamp_count = current.clamped;
    Ok((history, report))
}
