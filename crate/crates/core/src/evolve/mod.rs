//! Time evolution of ring clouds.
//!
//! Rings move with the filtered velocity evaluated at their node 0; `g` and
//! `vol` are never touched, so every discrete Lp norm of `q^theta / r` is
//! conserved exactly. Two evolvers are provided: a coupled RK4 marcher and a
//! Picard iteration on the flow map ([`picard`]).

pub mod picard;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use picard::{picard_solve, PicardReport, PicardSettings, TimeInterpolation};

use crate::error::{Error, Result};
use crate::state::ParticleCloud;
use crate::velocity::{operator_norm, NodeSet};

/// Meridional position `(r, z)`.
pub type Point2 = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Rk4,
    Picard,
    /// Reassembled from stored snapshots.
    Snapshots,
}

/// Flow-map samples `y(t_k, x_j)` of every ring, with the advection velocity
/// at each sample.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryHistory {
    pub times: Vec<f64>,
    /// `positions[k][j]`
    pub positions: Vec<Vec<Point2>>,
    pub velocities: Vec<Vec<Point2>>,
    pub provenance: Provenance,
    /// Number of times a ring was clamped back onto the axis.
    pub clamp_count: usize,
}

impl TrajectoryHistory {
    pub fn new(provenance: Provenance) -> Self {
        TrajectoryHistory {
            times: Vec::new(),
            positions: Vec::new(),
            velocities: Vec::new(),
            provenance,
            clamp_count: 0,
        }
    }

    pub fn push(&mut self, t: f64, positions: Vec<Point2>, velocities: Vec<Point2>) {
        self.times.push(t);
        self.positions.push(positions);
        self.velocities.push(velocities);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_rings(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Appends `other`, dropping its first node when it repeats our last one.
    pub fn extend(&mut self, other: TrajectoryHistory) {
        let skip = usize::from(!self.times.is_empty() && other.times.first() == self.times.last());
        self.times.extend(other.times.into_iter().skip(skip));
        self.positions
            .extend(other.positions.into_iter().skip(skip));
        self.velocities
            .extend(other.velocities.into_iter().skip(skip));
        self.clamp_count += other.clamp_count;
    }

    /// Rebuilds a history from a sequence of clouds sharing ring order,
    /// recomputing velocities from each cloud.
    pub fn from_clouds(clouds: &[ParticleCloud]) -> Result<Self> {
        let mut h = TrajectoryHistory::new(Provenance::Snapshots);
        for c in clouds {
            h.push(c.t, c.positions(), ring_velocities(c, &c.positions())?);
        }
        Ok(h)
    }
}

/// Advection velocities of the cloud's rings placed at `positions`.
pub(crate) fn ring_velocities(
    template: &ParticleCloud,
    positions: &[Point2],
) -> Result<Vec<Point2>> {
    let cloud = template.with_positions(positions, template.t);
    let nodes = NodeSet::new(&cloud)?;
    Ok(positions
        .par_iter()
        .enumerate()
        .map(|(j, p)| nodes.ring_velocity(p[0], p[1], Some(j)))
        .collect())
}

fn passive_velocities(nodes: &NodeSet, tracers: &[Point2]) -> Vec<Point2> {
    tracers
        .par_iter()
        .map(|p| nodes.ring_velocity(p[0], p[1], None))
        .collect()
}

fn axpy(base: &[Point2], h: f64, k: &[Point2]) -> Vec<Point2> {
    base.iter()
        .zip(k)
        .map(|(p, v)| [p[0] + h * v[0], p[1] + h * v[1]])
        .collect()
}

pub(crate) fn check_finite(positions: &[Point2]) -> Result<()> {
    match positions
        .iter()
        .position(|p| !(p[0].is_finite() && p[1].is_finite()))
    {
        Some(ring) => Err(Error::NonFinite { ring }),
        None => Ok(()),
    }
}

/// Clamps negative radii to the axis; returns the number of clamps.
pub(crate) fn clamp_axis(positions: &mut [Point2]) -> usize {
    let mut count = 0;
    for p in positions.iter_mut() {
        if p[0] < 0.0 {
            p[0] = 0.0;
            count += 1;
        }
    }
    count
}

/// Result of one RK4 step.
#[derive(Clone, Debug)]
pub struct Step {
    pub cloud: ParticleCloud,
    /// First-stage velocities, i.e. `dy/dt` at the start of the step.
    pub start_velocities: Vec<Point2>,
    pub clamped: usize,
}

fn rk4_stages(cloud: &ParticleCloud, dt: f64, tracers: &mut [Point2]) -> Result<Step> {
    if !(dt.is_finite() && dt != 0.0) {
        return Err(Error::Domain(format!(
            "time step must be finite and nonzero (got {dt})"
        )));
    }
    let p0 = cloud.positions();
    let t0: Vec<Point2> = tracers.to_vec();
    let eval = |pos: &[Point2], trc: &[Point2]| -> Result<(Vec<Point2>, Vec<Point2>)> {
        let c = cloud.with_positions(pos, cloud.t);
        let nodes = NodeSet::new(&c)?;
        let v = pos
            .par_iter()
            .enumerate()
            .map(|(j, p)| nodes.ring_velocity(p[0], p[1], Some(j)))
            .collect();
        Ok((v, passive_velocities(&nodes, trc)))
    };
    let (k1, q1) = eval(&p0, &t0)?;
    let (k2, q2) = eval(&axpy(&p0, 0.5 * dt, &k1), &axpy(&t0, 0.5 * dt, &q1))?;
    let (k3, q3) = eval(&axpy(&p0, 0.5 * dt, &k2), &axpy(&t0, 0.5 * dt, &q2))?;
    let (k4, q4) = eval(&axpy(&p0, dt, &k3), &axpy(&t0, dt, &q3))?;
    let combine = |base: &[Point2], a: &[Point2], b: &[Point2], c: &[Point2], d: &[Point2]| {
        (0..base.len())
            .map(|j| {
                let mut p = base[j];
                for (i, pi) in p.iter_mut().enumerate() {
                    *pi += dt / 6.0 * (a[j][i] + 2.0 * b[j][i] + 2.0 * c[j][i] + d[j][i]);
                }
                p
            })
            .collect::<Vec<_>>()
    };
    let mut p = combine(&p0, &k1, &k2, &k3, &k4);
    check_finite(&p)?;
    let clamped = clamp_axis(&mut p);
    let moved = combine(&t0, &q1, &q2, &q3, &q4);
    tracers.copy_from_slice(&moved);
    Ok(Step {
        cloud: cloud.with_positions(&p, cloud.t + dt),
        start_velocities: k1,
        clamped,
    })
}

/// One classical RK4 step of the coupled ring system. Negative `dt` steps
/// backwards in time.
pub fn rk4_step(cloud: &ParticleCloud, dt: f64) -> Result<ParticleCloud> {
    Ok(rk4_stages(cloud, dt, &mut [])?.cloud)
}

/// RK4 step returning the start-of-step velocities and the axis clamp count.
pub fn rk4_step_detailed(cloud: &ParticleCloud, dt: f64) -> Result<Step> {
    rk4_stages(cloud, dt, &mut [])
}

/// RK4 step that also carries passive tracer points `(r, z)` through the
/// same stage velocities. Tracers do not induce velocity.
pub fn rk4_step_with_tracers(
    cloud: &ParticleCloud,
    tracers: &mut [Point2],
    dt: f64,
) -> Result<ParticleCloud> {
    Ok(rk4_stages(cloud, dt, tracers)?.cloud)
}

/// Empirical contraction constant: the largest spectral norm of `grad u` at
/// the ring centers.
pub fn contraction_estimate(cloud: &ParticleCloud) -> Result<f64> {
    let nodes = NodeSet::new(cloud)?;
    Ok(cloud
        .rings
        .par_iter()
        .map(|ring| operator_norm(&nodes.gradient([ring.r, 0.0, ring.z])))
        .reduce(|| 0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvolverKind {
    #[default]
    Rk4,
    Picard,
}

/// Time-stepping controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Controls {
    pub evolver: EvolverKind,
    /// RK4 step, or the upper bound on the Picard window length.
    pub dt: f64,
    /// Emit a snapshot every this many steps (RK4) or windows (Picard).
    pub snapshot_every: usize,
    pub picard: PicardSettings,
}

impl Controls {
    pub fn rk4(dt: f64) -> Self {
        Controls {
            evolver: EvolverKind::Rk4,
            dt,
            snapshot_every: 1,
            picard: PicardSettings::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Advance {
    pub cloud: ParticleCloud,
    pub history: TrajectoryHistory,
    pub picard_reports: Vec<PicardReport>,
}

/// Below this fraction of a step, a leftover interval is absorbed.
const STEP_SLACK: f64 = 1e-9;

/// Advances `cloud` by a duration `t_span`, calling `snapshot` on the initial
/// state, at the configured cadence, and on the final state.
pub fn advance(
    cloud: &ParticleCloud,
    t_span: f64,
    controls: &Controls,
    mut snapshot: impl FnMut(&ParticleCloud) -> Result<()>,
) -> Result<Advance> {
    if !(t_span >= 0.0 && t_span.is_finite()) {
        return Err(Error::Domain(format!(
            "advance needs T >= 0 (got {t_span})"
        )));
    }
    if !(controls.dt > 0.0 && controls.dt.is_finite()) {
        return Err(Error::Domain(format!(
            "dt must be positive (got {})",
            controls.dt
        )));
    }
    let every = controls.snapshot_every.max(1);
    let t_end = cloud.t + t_span;
    snapshot(cloud)?;
    let out = match controls.evolver {
        EvolverKind::Rk4 => advance_rk4(cloud, t_span, controls.dt, every, &mut snapshot)?,
        EvolverKind::Picard => advance_picard(cloud, t_span, controls, every, &mut snapshot)?,
    };
    let mut out = out;
    out.cloud.t = t_end;
    if let Some(last) = out.history.times.last_mut() {
        *last = t_end;
    }
    if t_span > 0.0 {
        snapshot(&out.cloud)?;
    }
    Ok(out)
}

fn advance_rk4(
    cloud: &ParticleCloud,
    t_span: f64,
    dt: f64,
    every: usize,
    snapshot: &mut impl FnMut(&ParticleCloud) -> Result<()>,
) -> Result<Advance> {
    let full = (t_span / dt + STEP_SLACK).floor() as usize;
    let rest = t_span - full as f64 * dt;
    let mut steps = vec![dt; full];
    if rest > STEP_SLACK * dt {
        steps.push(rest);
    }
    let mut history = TrajectoryHistory::new(Provenance::Rk4);
    let mut current = cloud.clone();
    for (n, &h) in steps.iter().enumerate() {
        let step = rk4_step_detailed(&current, h)?;
        history.push(current.t, current.positions(), step.start_velocities);
        history.clamp_count += step.clamped;
        current = step.cloud;
        if (n + 1) % every == 0 && n + 1 < steps.len() {
            snapshot(&current)?;
        }
    }
    let v = ring_velocities(&current, &current.positions())?;
    history.push(current.t, current.positions(), v);
    Ok(Advance {
        cloud: current,
        history,
        picard_reports: Vec::new(),
    })
}

fn advance_picard(
    cloud: &ParticleCloud,
    t_span: f64,
    controls: &Controls,
    every: usize,
    snapshot: &mut impl FnMut(&ParticleCloud) -> Result<()>,
) -> Result<Advance> {
    let mut history = TrajectoryHistory::new(Provenance::Picard);
    let mut reports = Vec::new();
    let mut current = cloud.clone();
    let mut elapsed = 0.0;
    let mut windows = 0;
    if t_span == 0.0 {
        history.push(
            current.t,
            current.positions(),
            ring_velocities(&current, &current.positions())?,
        );
    }
    while t_span - elapsed > STEP_SLACK * controls.dt {
        let k = contraction_estimate(&current)?;
        let mut window = if k > 0.0 {
            controls.dt.min(0.5 / k)
        } else {
            controls.dt
        };
        let remaining = t_span - elapsed;
        // a remainder within rounding of a full window keeps the full window
        if remaining < window * (1.0 - STEP_SLACK) {
            window = remaining;
        }
        let (h, report) = picard_solve(&current, window, &controls.picard)?;
        let last = h
            .positions
            .last()
            .expect("picard history is never empty")
            .clone();
        history.extend(h);
        reports.push(report);
        elapsed += window;
        current = current.with_positions(&last, current.t + window);
        windows += 1;
        if windows % every == 0 && t_span - elapsed > STEP_SLACK * controls.dt {
            snapshot(&current)?;
        }
    }
    Ok(Advance {
        cloud: current,
        history,
        picard_reports: reports,
    })
}
