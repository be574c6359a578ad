//! Residuals of the two weak formulations.
//!
//! The transport identity `int int (d_t phi + u . grad phi) (q^theta / r) dx dt = 0`
//! is evaluated in Lagrangian form: each ring node carries weight `w_j / n`
//! along its trajectory, and `d_t phi + u . grad phi` is the total derivative of
//! `phi` along it. With `phi` vanishing at both ends, the exact integral is zero
//! and the computed value is pure time-discretization error.
//!
//! The momentum identity pairs `u` with a divergence-free test field on a
//! tensor Gauss grid and integrates in time over the stored nodes. Near a
//! ring node `grad u` grows like the inverse distance, so quadrature points
//! that land close to a node spoil the sum; axisymmetric test fields avoid
//! this by sampling angles between the nodes. Every term
//! is written with at most first derivatives of `u`; the remaining derivatives
//! sit on the test field.

use rayon::prelude::*;
use serde::Serialize;

use super::quadrature::{gauss_legendre_4, simpson_weights};
use crate::error::{Error, Result};
use crate::evolve::TrajectoryHistory;
use crate::state::{unit_circle, ParticleCloud};
use crate::velocity::{dot, eval_samples, Mat3, Tensor3, Vec3};

/// Scalar space-time test function with analytic first derivatives.
pub trait SpaceTimeTest: Sync {
    fn value(&self, t: f64, x: Vec3) -> f64;
    fn time_derivative(&self, t: f64, x: Vec3) -> f64;
    fn gradient(&self, t: f64, x: Vec3) -> Vec3;
}

/// `chi(t) exp(-|x - c|^2 / l^2)`, where `chi` is the standard bump on `(t0, t1)`.
#[derive(Clone, Copy, Debug)]
pub struct SeparableBump {
    pub t0: f64,
    pub t1: f64,
    pub center: Vec3,
    pub width: f64,
}

impl SeparableBump {
    fn chi(&self, t: f64) -> (f64, f64) {
        let half = 0.5 * (self.t1 - self.t0);
        let tau = (t - 0.5 * (self.t0 + self.t1)) / half;
        if tau.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - tau * tau;
        let v = (-1.0 / q).exp();
        (v, v * (-2.0 * tau / (q * q)) / half)
    }

    fn eta(&self, x: Vec3) -> (f64, Vec3) {
        let d = [
            x[0] - self.center[0],
            x[1] - self.center[1],
            x[2] - self.center[2],
        ];
        let l2 = self.width * self.width;
        let v = (-dot(d, d) / l2).exp();
        let c = -2.0 * v / l2;
        (v, [c * d[0], c * d[1], c * d[2]])
    }
}

impl SpaceTimeTest for SeparableBump {
    fn value(&self, t: f64, x: Vec3) -> f64 {
        self.chi(t).0 * self.eta(x).0
    }

    fn time_derivative(&self, t: f64, x: Vec3) -> f64 {
        self.chi(t).1 * self.eta(x).0
    }

    fn gradient(&self, t: f64, x: Vec3) -> Vec3 {
        let c = self.chi(t).0;
        let g = self.eta(x).1;
        [c * g[0], c * g[1], c * g[2]]
    }
}

/// `(4 s (1 - s))^p exp(-|x - c|^2 / l^2)` with `s = (t - t0) / (t1 - t0)`,
/// zero outside `[t0, t1]`. Vanishes at both ends with `p - 1` derivatives.
#[derive(Clone, Copy, Debug)]
pub struct PolynomialBump {
    pub t0: f64,
    pub t1: f64,
    pub center: Vec3,
    pub width: f64,
    pub power: i32,
}

impl PolynomialBump {
    fn chi(&self, t: f64) -> (f64, f64) {
        let len = self.t1 - self.t0;
        let s = (t - self.t0) / len;
        if !(0.0..=1.0).contains(&s) {
            return (0.0, 0.0);
        }
        let b = 4.0 * s * (1.0 - s);
        let p = self.power;
        (
            b.powi(p),
            p as f64 * b.powi(p - 1) * 4.0 * (1.0 - 2.0 * s) / len,
        )
    }

    fn eta(&self, x: Vec3) -> (f64, Vec3) {
        SeparableBump {
            t0: self.t0,
            t1: self.t1,
            center: self.center,
            width: self.width,
        }
        .eta(x)
    }
}

impl SpaceTimeTest for PolynomialBump {
    fn value(&self, t: f64, x: Vec3) -> f64 {
        self.chi(t).0 * self.eta(x).0
    }

    fn time_derivative(&self, t: f64, x: Vec3) -> f64 {
        self.chi(t).1 * self.eta(x).0
    }

    fn gradient(&self, t: f64, x: Vec3) -> Vec3 {
        let c = self.chi(t).0;
        let g = self.eta(x).1;
        [c * g[0], c * g[1], c * g[2]]
    }
}

/// Absolute residual of the Lagrangian transport identity over the history.
pub fn weak_form_residual(
    history: &TrajectoryHistory,
    cloud0: &ParticleCloud,
    phi: &dyn SpaceTimeTest,
) -> Result<f64> {
    if history.len() < 3 {
        return Err(Error::Domain(
            "weak-form residual needs at least 3 history nodes".into(),
        ));
    }
    if history.n_rings() != cloud0.len() {
        return Err(Error::Domain(format!(
            "history has {} rings, cloud has {}",
            history.n_rings(),
            cloud0.len()
        )));
    }
    let (t_first, t_last) = (history.times[0], *history.times.last().unwrap());
    for (k, t) in [(0, t_first), (history.len() - 1, t_last)] {
        for (j, p) in history.positions[k].iter().enumerate() {
            let v = phi.value(t, [p[0], 0.0, p[1]]);
            if v != 0.0 {
                return Err(Error::TestFunction(format!(
                    "phi = {v:e} at t = {t} on ring {j}; it must vanish at both ends of the history"
                )));
            }
        }
    }
    let weights = simpson_weights(&history.times)?;
    let total: f64 = cloud0
        .rings
        .par_iter()
        .enumerate()
        .map(|(j, ring)| {
            let (cos, sin) = unit_circle(ring.n_theta);
            let wn = ring.weight() / ring.n_theta as f64;
            let mut acc = 0.0;
            for (k, &t) in history.times.iter().enumerate() {
                let [r, z] = history.positions[k][j];
                let [ur, uz] = history.velocities[k][j];
                let mut s = 0.0;
                for (c, sn) in cos.iter().zip(&sin) {
                    let x = [r * c, r * sn, z];
                    let u = [ur * c, ur * sn, uz];
                    s += phi.time_derivative(t, x) + dot(u, phi.gradient(t, x));
                }
                acc += weights[k] * s;
            }
            wn * acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total.abs())
}

/// Value, gradient `grad[k][i] = d_i phi_k`, second derivatives
/// `hess[k][i][j] = d_i d_j phi_k` and Laplacian of a vector test field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub phi: Vec3,
    pub grad: Mat3,
    pub hess: Tensor3,
    pub laplacian: Vec3,
}

/// Spatial part of a divergence-free test field.
pub trait DivergenceFreeField: Sync {
    fn sample(&self, x: Vec3) -> FieldSample;
    /// Cube `[lo, hi]` containing the support.
    fn support(&self) -> (Vec3, Vec3);
    /// Invariant under rotation about the `x_3` axis. Such fields are
    /// integrated in cylindrical coordinates between the ring nodes.
    fn axisymmetric(&self) -> bool {
        false
    }
}

/// `(d_2 psi, -d_1 psi, 0)` with `psi = ((rho^2 - |x - c|^2)_+ / rho^2)^k`,
/// divergence-free by construction and `C^{k-2}`.
#[derive(Clone, Copy, Debug)]
pub struct StreamBall {
    pub center: Vec3,
    pub radius: f64,
    pub power: i32,
}

impl StreamBall {
    pub fn new(center: Vec3, radius: f64) -> Self {
        StreamBall {
            center,
            radius,
            power: 6,
        }
    }
}

impl DivergenceFreeField for StreamBall {
    fn sample(&self, x: Vec3) -> FieldSample {
        let d = [
            x[0] - self.center[0],
            x[1] - self.center[1],
            x[2] - self.center[2],
        ];
        let rho2 = self.radius * self.radius;
        let d2 = dot(d, d);
        let q = rho2 - d2;
        if q <= 0.0 {
            return FieldSample {
                phi: [0.0; 3],
                grad: [[0.0; 3]; 3],
                hess: [[[0.0; 3]; 3]; 3],
                laplacian: [0.0; 3],
            };
        }
        let k = self.power;
        let kf = k as f64;
        let scale = rho2.powi(-k);
        // d_i psi, d_i d_j psi, d_i lap psi
        let dpsi = |i: usize| -2.0 * kf * d[i] * q.powi(k - 1) * scale;
        let ddpsi = |i: usize, j: usize| {
            let delta = if i == j { 1.0 } else { 0.0 };
            (-2.0 * kf * delta * q.powi(k - 1)
                + 4.0 * kf * (kf - 1.0) * d[i] * d[j] * q.powi(k - 2))
                * scale
        };
        let dddpsi = |i: usize, j: usize, l: usize| {
            let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            let g2 = kf * (kf - 1.0) * q.powi(k - 2);
            let g3 = kf * (kf - 1.0) * (kf - 2.0) * q.powi(k - 3);
            (-8.0 * g3 * d[i] * d[j] * d[l]
                + 4.0 * g2 * (delta(i, l) * d[j] + delta(j, l) * d[i] + delta(i, j) * d[l]))
                * scale
        };
        let dlap = |i: usize| {
            d[i] * kf * (kf - 1.0) * q.powi(k - 3) * (20.0 * q - 8.0 * (kf - 2.0) * d2) * scale
        };
        let mut grad = [[0.0; 3]; 3];
        let mut hess = [[[0.0; 3]; 3]; 3];
        for i in 0..3 {
            grad[0][i] = ddpsi(i, 1);
            grad[1][i] = -ddpsi(i, 0);
            for j in 0..3 {
                hess[0][i][j] = dddpsi(i, j, 1);
                hess[1][i][j] = -dddpsi(i, j, 0);
            }
        }
        FieldSample {
            phi: [dpsi(1), -dpsi(0), 0.0],
            grad,
            hess,
            laplacian: [dlap(1), -dlap(0), 0.0],
        }
    }

    fn support(&self) -> (Vec3, Vec3) {
        let r = self.radius;
        let c = self.center;
        (
            [c[0] - r, c[1] - r, c[2] - r],
            [c[0] + r, c[1] + r, c[2] + r],
        )
    }
}

/// `curl(h (e_3 x x))` with `h = ((rho^2 - |x - c|^2)_+ / rho^2)^k` and the
/// centre `c = (0, 0, z0)` on the axis: a swirl-free axisymmetric field.
#[derive(Clone, Copy, Debug)]
pub struct AxialBall {
    pub z0: f64,
    pub radius: f64,
    pub power: i32,
}

impl AxialBall {
    pub fn new(z0: f64, radius: f64) -> Self {
        AxialBall {
            z0,
            radius,
            power: 6,
        }
    }
}

/// `eps[a][b][c]`
fn levi(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

impl DivergenceFreeField for AxialBall {
    fn sample(&self, x: Vec3) -> FieldSample {
        let d = [x[0], x[1], x[2] - self.z0];
        let rho2 = self.radius * self.radius;
        let d2 = dot(d, d);
        let q = rho2 - d2;
        let mut out = FieldSample {
            phi: [0.0; 3],
            grad: [[0.0; 3]; 3],
            hess: [[[0.0; 3]; 3]; 3],
            laplacian: [0.0; 3],
        };
        if q <= 0.0 {
            return out;
        }
        let k = self.power;
        let kf = k as f64;
        let scale = rho2.powi(-k);
        let g0 = q.powi(k) * scale;
        let g1 = -kf * q.powi(k - 1) * scale;
        let g2 = kf * (kf - 1.0) * q.powi(k - 2) * scale;
        let g3 = -kf * (kf - 1.0) * (kf - 2.0) * q.powi(k - 3) * scale;
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let h1 = |i: usize| 2.0 * g1 * d[i];
        let h2 = |i: usize, j: usize| 4.0 * g2 * d[i] * d[j] + 2.0 * g1 * delta(i, j);
        let h3 = |i: usize, j: usize, l: usize| {
            8.0 * g3 * d[i] * d[j] * d[l]
                + 4.0 * g2 * (delta(i, l) * d[j] + delta(j, l) * d[i] + delta(i, j) * d[l])
        };
        let lap_h = 4.0 * g2 * d2 + 6.0 * g1;
        let lap_h1 = |b: usize| 8.0 * g3 * d[b] * d2 + 20.0 * g2 * d[b];
        // e_3 x x and its constant derivative d_i L_c = eps[c][2][i]
        let lin = [-x[1], x[0], 0.0];
        let dl = |c: usize, i: usize| levi(c, 2, i);
        for a in 0..3 {
            let axial = delta(a, 2);
            out.phi[a] = 2.0 * g0 * axial;
            out.laplacian[a] = 2.0 * lap_h * axial;
            for i in 0..3 {
                out.grad[a][i] = 2.0 * h1(i) * axial;
                for j in 0..3 {
                    out.hess[a][i][j] = 2.0 * h2(i, j) * axial;
                }
            }
            for b in 0..3 {
                for c in 0..3 {
                    let e = levi(a, b, c);
                    if e == 0.0 {
                        continue;
                    }
                    out.phi[a] += e * h1(b) * lin[c];
                    out.laplacian[a] += e * lap_h1(b) * lin[c];
                    for i in 0..3 {
                        out.laplacian[a] += 2.0 * e * h2(b, i) * dl(c, i);
                        out.grad[a][i] += e * (h2(b, i) * lin[c] + h1(b) * dl(c, i));
                        for j in 0..3 {
                            out.hess[a][i][j] += e
                                * (h3(b, i, j) * lin[c]
                                    + h2(b, i) * dl(c, j)
                                    + h2(b, j) * dl(c, i));
                        }
                    }
                }
            }
        }
        out
    }

    fn support(&self) -> (Vec3, Vec3) {
        let r = self.radius;
        ([-r, -r, self.z0 - r], [r, r, self.z0 + r])
    }

    fn axisymmetric(&self) -> bool {
        true
    }
}

/// Azimuthal samples per symmetry period of the node set.
pub const THETA_SAMPLES_PER_NODE: usize = 4;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Tensor Gauss points of `cells^3` cells over the support box.
fn cartesian_rule(lo: Vec3, hi: Vec3, cells: usize) -> (Vec<Vec3>, Vec<f64>) {
    let (nodes, gw) = gauss_legendre_4();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let h = [0, 1, 2].map(|i| (hi[i] - lo[i]) / cells as f64);
    for (ia, ib, ic) in
        (0..cells).flat_map(|a| (0..cells).flat_map(move |b| (0..cells).map(move |c| (a, b, c))))
    {
        for (qa, wa) in nodes.iter().zip(&gw) {
            for (qb, wb) in nodes.iter().zip(&gw) {
                for (qc, wc) in nodes.iter().zip(&gw) {
                    points.push([
                        lo[0] + h[0] * (ia as f64 + 0.5 * (1.0 + qa)),
                        lo[1] + h[1] * (ib as f64 + 0.5 * (1.0 + qb)),
                        lo[2] + h[2] * (ic as f64 + 0.5 * (1.0 + qc)),
                    ]);
                    weights.push(wa * wb * wc * 0.125 * h[0] * h[1] * h[2]);
                }
            }
        }
    }
    (points, weights)
}

/// Gauss points in `(r, z)` and equally spaced angles midway between ring
/// nodes. The integrand repeats with the node set's rotational period, so one
/// period is sampled and scaled up.
fn cylindrical_rule(
    lo: Vec3,
    hi: Vec3,
    cells: usize,
    cloud: &ParticleCloud,
) -> (Vec<Vec3>, Vec<f64>) {
    let (nodes, gw) = gauss_legendre_4();
    let r_max = [lo[0], hi[0], lo[1], hi[1]]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let period = cloud
        .rings
        .iter()
        .fold(0, |g, ring| gcd(g, ring.n_theta))
        .max(1);
    let n_max = cloud
        .rings
        .iter()
        .map(|ring| ring.n_theta)
        .max()
        .unwrap_or(1);
    let m = THETA_SAMPLES_PER_NODE * n_max / period;
    let step = 2.0 * std::f64::consts::PI / (period * m) as f64;
    let (hr, hz) = (r_max / cells as f64, (hi[2] - lo[2]) / cells as f64);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (ir, iz) in (0..cells).flat_map(|a| (0..cells).map(move |b| (a, b))) {
        for (qr, wr) in nodes.iter().zip(&gw) {
            for (qz, wz) in nodes.iter().zip(&gw) {
                let r = hr * (ir as f64 + 0.5 * (1.0 + qr));
                let z = lo[2] + hz * (iz as f64 + 0.5 * (1.0 + qz));
                let w = r * wr * wz * 0.25 * hr * hz * step * period as f64;
                for k in 0..m {
                    let th = step * (k as f64 + 0.5);
                    points.push([r * th.cos(), r * th.sin(), z]);
                    weights.push(w);
                }
            }
        }
    }
    (points, weights)
}

/// Time envelope `(1 - (t - t0) / T)^4`, vanishing at the end of the history.
fn envelope(t: f64, t0: f64, span: f64) -> (f64, f64) {
    let s = 1.0 - (t - t0) / span;
    (s.powi(4), -4.0 * s.powi(3) / span)
}

/// The four integrals of the momentum identity; `total` should vanish.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WeakSolutionResidual {
    /// `int int u . (1 - a^2 lap) d_t phi`
    pub time_term: f64,
    /// `int int (u . grad) phi . (1 - a^2 lap) u`, integrated by parts onto phi
    pub transport_term: f64,
    /// `-a^2 int int d_l u_j d_k u_j d_l phi_k`
    pub stretching_term: f64,
    /// `int u_0 . (1 - a^2 lap) phi(0)`
    pub initial_term: f64,
    pub total: f64,
}

impl WeakSolutionResidual {
    /// `|total|` relative to the largest term.
    pub fn relative(&self) -> f64 {
        let scale = [
            self.time_term,
            self.transport_term,
            self.stretching_term,
            self.initial_term,
        ]
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
        if scale > 0.0 {
            self.total.abs() / scale
        } else {
            0.0
        }
    }
}

fn check_divergence(field: &dyn DivergenceFreeField, points: &[Vec3]) -> Result<()> {
    for &x in points {
        let s = field.sample(x);
        let tr = s.grad[0][0] + s.grad[1][1] + s.grad[2][2];
        let scale = s.grad.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if tr.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::TestFunction(format!(
                "div phi = {tr:e} at {x:?}; the test field must be divergence-free"
            )));
        }
    }
    Ok(())
}

/// Assembles the momentum identity against `envelope(t) * field(x)` with
/// `cells` Gauss cells (4 points each) per axis covering the field's support;
/// axisymmetric fields use `cells^2` cells in `(r, z)` instead.
pub fn weak_solution_residual(
    history: &TrajectoryHistory,
    cloud0: &ParticleCloud,
    field: &dyn DivergenceFreeField,
    cells: usize,
) -> Result<WeakSolutionResidual> {
    if history.len() < 3 {
        return Err(Error::Domain(
            "weak-solution residual needs at least 3 history nodes".into(),
        ));
    }
    if cells == 0 {
        return Err(Error::Domain(
            "need at least one quadrature cell per axis".into(),
        ));
    }
    let (lo, hi) = field.support();
    let (points, weights) = if field.axisymmetric() {
        cylindrical_rule(lo, hi, cells, cloud0)
    } else {
        cartesian_rule(lo, hi, cells)
    };
    let fields: Vec<FieldSample> = points.iter().map(|&x| field.sample(x)).collect();
    let probe: Vec<Vec3> = points.iter().step_by(7).copied().collect();
    check_divergence(field, &probe)?;

    let a2 = cloud0.alpha.get().powi(2);
    let t0 = history.times[0];
    let span = history.times.last().unwrap() - t0;
    let tw = simpson_weights(&history.times)?;
    let mut out = WeakSolutionResidual {
        time_term: 0.0,
        transport_term: 0.0,
        stretching_term: 0.0,
        initial_term: 0.0,
        total: 0.0,
    };
    for (k, &t) in history.times.iter().enumerate() {
        let cloud = cloud0.with_positions(&history.positions[k], t);
        let samples = eval_samples(&points, &cloud, true, false)?;
        let (chi, dchi) = envelope(t, t0, span);
        let (mut s_time, mut s_trans, mut s_stretch, mut s_init) = (0.0, 0.0, 0.0, 0.0);
        for ((s, f), w) in samples.iter().zip(&fields).zip(&weights) {
            let g = s.grad.unwrap();
            let u = s.u;
            let op_phi = [0, 1, 2].map(|a| f.phi[a] - a2 * f.laplacian[a]);
            s_time += w * dchi * dot(u, op_phi);
            let mut trans = 0.0;
            let mut stretch = 0.0;
            for kk in 0..3 {
                for i in 0..3 {
                    trans += u[kk] * u[i] * f.grad[kk][i];
                    for j in 0..3 {
                        trans +=
                            a2 * g[kk][j] * (g[i][j] * f.grad[kk][i] + u[i] * f.hess[kk][i][j]);
                        // d_j u_i d_kk u_i d_j phi_kk
                        stretch -= a2 * g[i][j] * g[i][kk] * f.grad[kk][j];
                    }
                }
            }
            s_trans += w * chi * trans;
            s_stretch += w * chi * stretch;
            if k == 0 {
                s_init += w * dot(u, op_phi);
            }
        }
        out.time_term += tw[k] * s_time;
        out.transport_term += tw[k] * s_trans;
        out.stretching_term += tw[k] * s_stretch;
        if k == 0 {
            out.initial_term = s_init;
        }
    }
    out.total = out.time_term + out.transport_term + out.stretching_term + out.initial_term;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{advance, Controls};
    use crate::kernel::Alpha;
    use crate::state::VortexRing;

    fn check_derivatives(f: &dyn DivergenceFreeField, x: Vec3) {
        let s = f.sample(x);
        let h = 1e-5;
        let mut lap = [0.0; 3];
        for i in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[i] += h;
            xm[i] -= h;
            let (p, m) = (f.sample(xp), f.sample(xm));
            for k in 0..3 {
                let fd = (p.phi[k] - m.phi[k]) / (2.0 * h);
                assert!(
                    (fd - s.grad[k][i]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{k} {i}"
                );
                for j in 0..3 {
                    let fd2 = (p.grad[k][j] - m.grad[k][j]) / (2.0 * h);
                    assert!(
                        (fd2 - s.hess[k][i][j]).abs() < 1e-5 * (1.0 + fd2.abs()),
                        "{k} {i} {j}"
                    );
                }
                lap[k] += (p.phi[k] - 2.0 * s.phi[k] + m.phi[k]) / (h * h);
            }
        }
        for k in 0..3 {
            assert!(
                (lap[k] - s.laplacian[k]).abs() < 1e-3 * (1.0 + lap[k].abs()),
                "{lap:?} {:?}",
                s.laplacian
            );
            let hl: f64 = (0..3).map(|i| s.hess[k][i][i]).sum();
            assert!((hl - s.laplacian[k]).abs() < 1e-10 * (1.0 + hl.abs()));
        }
        let tr = s.grad[0][0] + s.grad[1][1] + s.grad[2][2];
        assert!(tr.abs() < 1e-12, "{tr}");
    }

    #[test]
    fn stream_ball_derivatives() {
        check_derivatives(&StreamBall::new([0.1, -0.2, 0.3], 0.8), [0.3, 0.1, 0.1]);
    }

    #[test]
    fn axial_ball_derivatives() {
        let f = AxialBall::new(0.2, 1.5);
        for x in [[0.3, 0.1, 0.1], [0.9, -0.4, 0.6], [-0.2, 0.7, -0.5]] {
            check_derivatives(&f, x);
        }
        // invariant under rotation about the axis, no swirl
        let (a, b) = (f.sample([1.0, 0.0, 0.4]), f.sample([0.0, 1.0, 0.4]));
        assert!((a.phi[0] - b.phi[1]).abs() < 1e-15 && (a.phi[2] - b.phi[2]).abs() < 1e-15);
        assert!(a.phi[1].abs() < 1e-15 && a.phi[0] != 0.0);
    }

    #[test]
    fn quadrature_rules_agree_on_smooth_integrand() {
        let ring = VortexRing::with_weight(1.0, 0.0, 1.0, 8).unwrap();
        let cloud = ParticleCloud::new(vec![ring], Alpha::new(0.2).unwrap());
        let f = AxialBall::new(0.2, 1.5);
        let (lo, hi) = f.support();
        let integral = |(p, w): (Vec<Vec3>, Vec<f64>)| -> f64 {
            p.iter()
                .zip(&w)
                .map(|(x, w)| w * dot(f.sample(*x).phi, f.sample(*x).phi))
                .sum()
        };
        let cyl = integral(cylindrical_rule(lo, hi, 8, &cloud));
        let cart = integral(cartesian_rule(lo, hi, 8));
        assert!((cyl - cart).abs() < 1e-6 * cyl, "{cyl} {cart}");
    }

    struct Sink;

    impl DivergenceFreeField for Sink {
        fn sample(&self, x: Vec3) -> FieldSample {
            FieldSample {
                phi: x,
                grad: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
                hess: [[[0.0; 3]; 3]; 3],
                laplacian: [0.0; 3],
            }
        }

        fn support(&self) -> (Vec3, Vec3) {
            ([-1.0; 3], [1.0; 3])
        }
    }

    fn frozen_history(n: usize) -> (ParticleCloud, TrajectoryHistory) {
        let rings = vec![VortexRing::new(1.0, 0.0, 0.0, 0.1, 8).unwrap()];
        let cloud = ParticleCloud::new(rings, Alpha::new(0.2).unwrap());
        let out = advance(&cloud, 1.0, &Controls::rk4(1.0 / n as f64), |_| Ok(())).unwrap();
        (cloud, out.history)
    }

    #[test]
    fn divergent_field_rejected() {
        let (cloud, h) = frozen_history(4);
        assert!(matches!(
            weak_solution_residual(&h, &cloud, &Sink, 1),
            Err(Error::TestFunction(_))
        ));
    }

    #[test]
    fn zero_weight_residuals_vanish() {
        let (cloud, h) = frozen_history(4);
        let phi = SeparableBump {
            t0: 0.0,
            t1: 1.0,
            center: [1.0, 0.0, 0.0],
            width: 0.5,
        };
        assert_eq!(weak_form_residual(&h, &cloud, &phi).unwrap(), 0.0);
        let r =
            weak_solution_residual(&h, &cloud, &StreamBall::new([1.0, 0.0, 0.0], 0.5), 1).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn endpoint_values_rejected() {
        let (cloud, h) = frozen_history(4);
        let phi = SeparableBump {
            t0: -0.5,
            t1: 1.5,
            center: [1.0, 0.0, 0.0],
            width: 0.5,
        };
        assert!(matches!(
            weak_form_residual(&h, &cloud, &phi),
            Err(Error::TestFunction(_))
        ));
    }
}
