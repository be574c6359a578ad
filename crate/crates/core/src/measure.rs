//! Measure-valued initial data and its mollification.
//!
//! A datum is a finite signed sum of Dirac rings `m_i delta_{(r_i, z_i)}` in
//! the meridional half-plane. Mollifying with a unit-integral bump `psi_eps`
//! gives the ring-mass density `sum_i m_i psi_eps(r - r_i, z - z_i)`; since
//! `integral (q^theta / r) dV = 2 pi integral q^theta dr dz = integral (q^theta / r) 2 pi r dr dz`,
//! the transported field is that density divided by `2 pi r`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{advance, Controls};
use crate::kernel::{Alpha, KernelConstants};
use crate::state::{
    init_from_profile, MeasureData, MeridionalBox, MeridionalGrid, ParticleCloud, Profile,
    VortexRing,
};
use crate::velocity::{eval_grad_split, eval_velocity_batch, frobenius, norm, Vec3};

/// Grid cells required across one mollifier radius.
pub const CELLS_PER_EPS: f64 = 6.0;

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// `integral_{-1}^{1} exp(-1 / (1 - s^2)) ds`. The integrand is flat to all
/// orders at the endpoints, so the trapezoid rule converges geometrically.
fn bump_integral() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        let n = 4096;
        let h = 2.0 / n as f64;
        (1..n).map(|i| bump(-1.0 + i as f64 * h)).sum::<f64>() * h
    })
}

/// Unit-integral 1D bump of half-width `eps`.
pub fn bump_1d(x: f64, eps: f64) -> f64 {
    bump(x / eps) / (eps * bump_integral())
}

/// Tensor-product 2D mollifier with support `[-eps, eps]^2` and unit integral.
pub fn mollifier(dr: f64, dz: f64, eps: f64) -> f64 {
    bump_1d(dr, eps) * bump_1d(dz, eps)
}

/// `q_0^eps / r` built from a measure datum.
pub struct MollifiedMeasure<'a> {
    data: &'a MeasureData,
    eps: f64,
}

impl<'a> MollifiedMeasure<'a> {
    pub fn new(data: &'a MeasureData, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Domain(format!("eps must be positive (got {eps})")));
        }
        Ok(MollifiedMeasure { data, eps })
    }
}

impl Profile for MollifiedMeasure<'_> {
    fn value(&self, r: f64, z: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let density: f64 = self
            .data
            .atoms()
            .iter()
            .map(|a| a.mass * mollifier(r - a.r, z - a.z, self.eps))
            .sum();
        density / (2.0 * PI * r)
    }

    fn support(&self) -> Option<MeridionalBox> {
        let e = self.eps;
        let mut it = self
            .data
            .atoms()
            .iter()
            .map(|a| [(a.r - e).max(0.0), a.r + e, a.z - e, a.z + e]);
        let first = it.next()?;
        let b = it.fold(first, |a, b| {
            [
                a[0].min(b[0]),
                a[1].max(b[1]),
                a[2].min(b[2]),
                a[3].max(b[3]),
            ]
        });
        MeridionalBox::new(b[0], b[1], b[2], b[3]).ok()
    }
}

/// Smallest `(nr, nz)` that puts [`CELLS_PER_EPS`] cells across `eps` on `bounds`.
pub fn required_resolution(bounds: &MeridionalBox, eps: f64) -> (usize, usize) {
    let n = |len: f64| (CELLS_PER_EPS * len / eps).ceil() as usize;
    (
        n(bounds.r_max - bounds.r_min),
        n(bounds.z_max - bounds.z_min),
    )
}

/// Samples the mollified datum onto `grid`.
pub fn mollify(
    data: &MeasureData,
    eps: f64,
    grid: &MeridionalGrid,
    alpha: Alpha,
) -> Result<ParticleCloud> {
    let profile = MollifiedMeasure::new(data, eps)?;
    let (nr, nz) = required_resolution(&grid.bounds, eps);
    if grid.nr < nr || grid.nz < nz {
        return Err(Error::UnderResolved {
            eps,
            required_nr: nr,
            required_nz: nz,
        });
    }
    init_from_profile(&profile, grid, alpha)
}

/// Direct thin-ring cloud of the datum: one ring of weight `m_i` per atom.
pub fn delta_rings(data: &MeasureData, alpha: Alpha, n_theta: usize) -> Result<ParticleCloud> {
    data.as_rings(alpha, n_theta)
}

/// `(sum_j w_j phi(r_j, z_j), sum_i m_i phi(r_i, z_i))` for a meridional test function.
pub fn weak_star_pairing(
    cloud: &ParticleCloud,
    data: &MeasureData,
    phi: impl Fn(f64, f64) -> f64,
) -> (f64, f64) {
    let discrete = cloud.rings.iter().map(|r| r.weight() * phi(r.r, r.z)).sum();
    let limit = data.atoms().iter().map(|a| a.mass * phi(a.r, a.z)).sum();
    (discrete, limit)
}

/// One record per (eps, snapshot).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub alpha: f64,
    pub t: f64,
    pub rings: usize,
    /// `sum_j |g_j| vol_j`
    pub l1_mass: f64,
    pub signed_mass: f64,
    pub sup_u: f64,
    /// Largest Frobenius norm of the near-field part of `grad u`.
    pub sup_grad_near: f64,
    pub sup_grad_far: f64,
    /// Largest `|u(x)| / envelope(x)` over the probes.
    pub envelope_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub eps: f64,
    pub sup_u: f64,
    pub l1_mass: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub alpha: f64,
    pub total_variation: f64,
    pub records: Vec<SweepRecord>,
    pub members: Vec<SweepMember>,
    /// `(max - min) / max` of the per-eps `sup |u|`.
    pub variation: f64,
    /// Every record satisfied `l1_mass <= 1.01 ||q_0||_M` and the velocity envelope.
    pub bounded: bool,
}

impl SweepReport {
    pub fn failed(&self) -> bool {
        self.members.iter().any(|m| m.error.is_some())
    }
}

/// Slack allowed on the mollifier L1 inequality.
pub const L1_SLACK: f64 = 1e-2;

/// Sweep settings shared by every member run.
#[derive(Clone, Debug)]
pub struct SweepSetup {
    pub grid: MeridionalGrid,
    pub controls: Controls,
    /// Duration of each member run; 0 inspects the initial data only.
    pub t_span: f64,
}

fn snapshot_record(
    cloud: &ParticleCloud,
    eps: f64,
    probes: &[Vec3],
    envelope: impl Fn(Vec3) -> f64,
) -> Result<SweepRecord> {
    let u = eval_velocity_batch(probes, cloud)?;
    let mut rec = SweepRecord {
        eps,
        alpha: cloud.alpha.get(),
        t: cloud.t,
        rings: cloud.len(),
        l1_mass: cloud.abs_weight(),
        signed_mass: cloud.total_weight(),
        sup_u: 0.0,
        sup_grad_near: 0.0,
        sup_grad_far: 0.0,
        envelope_ratio: 0.0,
    };
    for (x, u) in probes.iter().zip(&u) {
        let val = norm(*u);
        rec.sup_u = rec.sup_u.max(val);
        let env = envelope(*x);
        if env > 0.0 {
            rec.envelope_ratio = rec.envelope_ratio.max(val / env);
        }
        let (near, far) = eval_grad_split(*x, cloud)?;
        rec.sup_grad_near = rec.sup_grad_near.max(frobenius(&near));
        rec.sup_grad_far = rec.sup_grad_far.max(frobenius(&far));
    }
    Ok(rec)
}

/// Runs mollify + advance for every eps (independently, in parallel) and
/// records velocity statistics at the probes for every snapshot.
pub fn uniform_bound_sweep(
    data: &MeasureData,
    eps_list: &[f64],
    alpha: Alpha,
    probes: &[Vec3],
    setup: &SweepSetup,
    k: &KernelConstants,
) -> Result<SweepReport> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain(format!(
            "eps_list must be strictly decreasing (got {eps_list:?})"
        )));
    }
    let tv = data.total_variation();
    let a = alpha.get();
    let envelope = |x: Vec3| tv * (1.0 + L1_SLACK) * (k.m1 / a + k.m0 * x[0].hypot(x[1]) / (a * a));
    let runs: Vec<(f64, Result<Vec<SweepRecord>>)> = eps_list
        .par_iter()
        .map(|&eps| {
            let run = || -> Result<Vec<SweepRecord>> {
                let cloud = mollify(data, eps, &setup.grid, alpha)?;
                let mut records = Vec::new();
                advance(&cloud, setup.t_span, &setup.controls, |c| {
                    records.push(snapshot_record(c, eps, probes, envelope)?);
                    Ok(())
                })?;
                Ok(records)
            };
            (eps, run())
        })
        .collect();
    let mut report = SweepReport {
        alpha: a,
        total_variation: tv,
        records: Vec::new(),
        members: Vec::new(),
        variation: 0.0,
        bounded: true,
    };
    for (eps, run) in runs {
        match run {
            Ok(records) => {
                let sup_u = records.iter().map(|r| r.sup_u).fold(0.0, f64::max);
                let l1 = records.first().map_or(0.0, |r| r.l1_mass);
                report.bounded &= records
                    .iter()
                    .all(|r| r.l1_mass <= tv * (1.0 + L1_SLACK) && r.envelope_ratio <= 1.0);
                report.members.push(SweepMember {
                    eps,
                    sup_u,
                    l1_mass: l1,
                    error: None,
                });
                report.records.extend(records);
            }
            Err(e) => report.members.push(SweepMember {
                eps,
                sup_u: f64::NAN,
                l1_mass: f64::NAN,
                error: Some(e.to_string()),
            }),
        }
    }
    let sups: Vec<f64> = report
        .members
        .iter()
        .filter(|m| m.error.is_none())
        .map(|m| m.sup_u)
        .collect();
    let hi = sups.iter().copied().fold(0.0, f64::max);
    let lo = sups.iter().copied().fold(f64::INFINITY, f64::min);
    report.variation = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    Ok(report)
}

/// Probe points at `(r, 0, z)` for each meridional pair.
pub fn meridional_probes(points: &[[f64; 2]]) -> Vec<Vec3> {
    points.iter().map(|p| [p[0], 0.0, p[1]]).collect()
}

/// A single thin ring cloud carrying the whole datum's mass at one atom.
pub fn single_ring(
    r: f64,
    z: f64,
    mass: f64,
    alpha: Alpha,
    n_theta: usize,
) -> Result<ParticleCloud> {
    Ok(ParticleCloud::new(
        vec![VortexRing::with_weight(r, z, mass, n_theta)?],
        alpha,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Atom;

    fn datum(atoms: &[[f64; 3]]) -> MeasureData {
        let b = MeridionalBox::new(0.0, 2.0, -1.0, 1.0).unwrap();
        MeasureData::new(
            atoms.iter().map(|&a| Atom::try_from(a).unwrap()).collect(),
            b,
        )
        .unwrap()
    }

    fn grid(n: usize) -> MeridionalGrid {
        let b = MeridionalBox::new(0.5, 1.5, -0.5, 0.5).unwrap();
        MeridionalGrid::new(b, n, n, 8).unwrap()
    }

    #[test]
    fn bump_normalization() {
        // mpmath quadrature at 30 digits
        assert!((bump_integral() - 0.443_993_816_168_079_44).abs() < 1e-15);
        let h = 1e-3;
        let s: f64 = (0..2000)
            .map(|i| bump_1d(-1.0 + (i as f64 + 0.5) * h, 1.0))
            .sum::<f64>()
            * h;
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(mollifier(0.3, 0.0, 0.2), 0.0);
    }

    #[test]
    fn single_atom_preserves_mass() {
        let data = datum(&[[1.0, 0.0, 2.5]]);
        let cloud = mollify(&data, 0.1, &grid(64), Alpha::new(0.5).unwrap()).unwrap();
        assert!((cloud.total_weight() - 2.5).abs() <= 0.005 * 2.5);
        assert!(cloud.abs_weight() <= 2.5 * (1.0 + L1_SLACK));
    }

    #[test]
    fn dipole_signed_vs_total_mass() {
        let data = datum(&[[0.8, 0.0, 1.0], [1.2, 0.0, -1.0]]);
        let cloud = mollify(&data, 0.1, &grid(64), Alpha::new(0.5).unwrap()).unwrap();
        assert!(cloud.total_weight().abs() < 1e-3);
        assert!((cloud.abs_weight() - 2.0).abs() < 0.01);
    }

    #[test]
    fn under_resolved_names_grid() {
        let data = datum(&[[1.0, 0.0, 1.0]]);
        match mollify(&data, 0.05, &grid(64), Alpha::new(0.5).unwrap()) {
            Err(Error::UnderResolved {
                required_nr,
                required_nz,
                ..
            }) => assert_eq!((required_nr, required_nz), (120, 120)),
            other => panic!("expected UnderResolved, got {other:?}"),
        }
    }

    #[test]
    fn zero_mass_sweep_is_all_zero() {
        let data = datum(&[]);
        let setup = SweepSetup {
            grid: grid(32),
            controls: Controls::rk4(0.1),
            t_span: 0.0,
        };
        let k = crate::kernel::bound_scan().unwrap();
        let probes = meridional_probes(&[[2.0, 0.0], [1.0, 1.0]]);
        let rep = uniform_bound_sweep(
            &data,
            &[0.2, 0.1],
            Alpha::new(0.5).unwrap(),
            &probes,
            &setup,
            &k,
        )
        .unwrap();
        assert!(rep
            .records
            .iter()
            .all(|r| r.sup_u == 0.0 && r.sup_grad_near == 0.0 && r.l1_mass == 0.0));
        assert_eq!(rep.variation, 0.0);
        assert!(rep.bounded);
    }

    #[test]
    fn increasing_eps_list_rejected() {
        let data = datum(&[[1.0, 0.0, 1.0]]);
        let setup = SweepSetup {
            grid: grid(32),
            controls: Controls::rk4(0.1),
            t_span: 0.0,
        };
        let k = crate::kernel::bound_scan().unwrap();
        assert!(uniform_bound_sweep(
            &data,
            &[0.1, 0.2],
            Alpha::new(0.5).unwrap(),
            &[],
            &setup,
            &k
        )
        .is_err());
    }

    #[test]
    fn failing_member_is_attached() {
        let data = datum(&[[1.0, 0.0, 1.0]]);
        let setup = SweepSetup {
            grid: grid(32),
            controls: Controls::rk4(0.1),
            t_span: 0.0,
        };
        let k = crate::kernel::bound_scan().unwrap();
        let probes = meridional_probes(&[[2.0, 0.0]]);
        let rep = uniform_bound_sweep(
            &data,
            &[0.4, 0.01],
            Alpha::new(0.5).unwrap(),
            &probes,
            &setup,
            &k,
        )
        .unwrap();
        assert!(rep.failed());
        assert!(rep.members[0].error.is_none());
        assert!(rep.members[1]
            .error
            .as_ref()
            .unwrap()
            .contains("under-resolved"));
    }
}
