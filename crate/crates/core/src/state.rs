//! Discrete axisymmetric states: vortex rings in the meridional half-plane.
//!
//! A ring carries a sample `g` of the transported potential vorticity
//! `q^theta / r` and the 3D volume `vol = 2 pi r dr dz` of the meridional
//! cell it represents. Both are fixed for the lifetime of a run; evolvers only
//! move `(r, z)`. The derived weight `w = g * vol` is the ring's share of
//! `integral (q^theta / r) dV = 2 pi integral q^theta dr dz`, so a ring with
//! weight `w` has circulation `w / (2 pi)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Alpha;

/// Axis-aligned rectangle `[r_min, r_max] x [z_min, z_max]` in the meridional half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct MeridionalBox {
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl MeridionalBox {
    pub fn new(r_min: f64, r_max: f64, z_min: f64, z_max: f64) -> Result<Self> {
        let ok = [r_min, r_max, z_min, z_max].iter().all(|v| v.is_finite())
            && r_min >= 0.0
            && r_max > r_min
            && z_max > z_min;
        if !ok {
            return Err(Error::Domain(format!(
                "invalid box [{r_min}, {r_max}] x [{z_min}, {z_max}] (need 0 <= r_min < r_max, z_min < z_max)"
            )));
        }
        Ok(MeridionalBox {
            r_min,
            r_max,
            z_min,
            z_max,
        })
    }

    pub fn contains(&self, r: f64, z: f64) -> bool {
        r >= self.r_min && r <= self.r_max && z >= self.z_min && z <= self.z_max
    }

    pub fn contains_box(&self, other: &MeridionalBox) -> bool {
        other.r_min >= self.r_min
            && other.r_max <= self.r_max
            && other.z_min >= self.z_min
            && other.z_max <= self.z_max
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.r_min, self.r_max, self.z_min, self.z_max]
    }
}

impl TryFrom<[f64; 4]> for MeridionalBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        MeridionalBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<MeridionalBox> for [f64; 4] {
    fn from(b: MeridionalBox) -> [f64; 4] {
        b.as_array()
    }
}

/// One Lagrangian degree of freedom: a circular filament about the z-axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VortexRing {
    pub r: f64,
    pub z: f64,
    /// Sample of `q^theta / r`.
    pub g: f64,
    /// 3D volume of the meridional cell.
    pub vol: f64,
    /// Azimuthal quadrature nodes.
    pub n_theta: usize,
}

impl VortexRing {
    pub fn new(r: f64, z: f64, g: f64, vol: f64, n_theta: usize) -> Result<Self> {
        if !(r >= 0.0 && r.is_finite() && z.is_finite() && g.is_finite()) {
            return Err(Error::Domain(format!(
                "ring position/strength ({r}, {z}, {g}) invalid"
            )));
        }
        if !(vol > 0.0 && vol.is_finite()) {
            return Err(Error::Domain(format!(
                "ring volume must be positive (got {vol})"
            )));
        }
        check_n_theta(n_theta)?;
        Ok(VortexRing {
            r,
            z,
            g,
            vol,
            n_theta,
        })
    }

    /// A thin ring carrying total weight `w` in a nominal unit volume.
    pub fn with_weight(r: f64, z: f64, w: f64, n_theta: usize) -> Result<Self> {
        VortexRing::new(r, z, w, 1.0, n_theta)
    }

    #[inline]
    pub fn weight(&self) -> f64 {
        self.g * self.vol
    }

    /// Circulation of the ring, `w / (2 pi)`.
    pub fn circulation(&self) -> f64 {
        self.weight() / (2.0 * PI)
    }
}

pub(crate) fn check_n_theta(n_theta: usize) -> Result<()> {
    if n_theta >= 4 && n_theta % 2 == 0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "n_theta must be even and >= 4 (got {n_theta})"
        )))
    }
}

/// Azimuthal quadrature nodes of a ring: `(r cos t_m, r sin t_m, z)`, `t_m = 2 pi m / n`.
pub fn sample_points(ring: &VortexRing) -> Vec<[f64; 3]> {
    let (cos, sin) = unit_circle(ring.n_theta);
    cos.iter()
        .zip(&sin)
        .map(|(c, s)| [ring.r * c, ring.r * s, ring.z])
        .collect()
}

/// `cos` and `sin` of `2 pi m / n`, with exact values at the quarter turns.
pub(crate) fn unit_circle(n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..n)
        .map(|m| {
            // Snap multiples of pi/2 so that symmetric node sets are exactly symmetric.
            if (4 * m) % n == 0 {
                match (4 * m) / n {
                    0 => (1.0, 0.0),
                    1 => (0.0, 1.0),
                    2 => (-1.0, 0.0),
                    _ => (0.0, -1.0),
                }
            } else {
                let t = 2.0 * PI * m as f64 / n as f64;
                (t.cos(), t.sin())
            }
        })
        .unzip()
}

/// The full discrete state at one instant. Ring order is fixed for a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    pub rings: Vec<VortexRing>,
    pub alpha: Alpha,
    pub t: f64,
}

impl ParticleCloud {
    pub fn new(rings: Vec<VortexRing>, alpha: Alpha) -> Self {
        ParticleCloud {
            rings,
            alpha,
            t: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rings.len()
    }

    /// `sum_j g_j vol_j`
    pub fn total_weight(&self) -> f64 {
        self.rings.iter().map(VortexRing::weight).sum()
    }

    /// `sum_j |g_j| vol_j`, the discrete L1 norm of `q^theta / r`.
    pub fn abs_weight(&self) -> f64 {
        self.rings.iter().map(|r| r.weight().abs()).sum()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.rings.iter().map(|r| [r.r, r.z]).collect()
    }

    /// Copy of the cloud with ring centers moved; strengths and volumes untouched.
    pub fn with_positions(&self, positions: &[[f64; 2]], t: f64) -> ParticleCloud {
        debug_assert_eq!(positions.len(), self.rings.len());
        let rings = self
            .rings
            .iter()
            .zip(positions)
            .map(|(ring, p)| VortexRing {
                r: p[0],
                z: p[1],
                ..*ring
            })
            .collect();
        ParticleCloud {
            rings,
            alpha: self.alpha,
            t,
        }
    }

    /// Smallest box containing every ring center.
    pub fn bounding_box(&self) -> Option<[f64; 4]> {
        let first = self.rings.first()?;
        let init = [first.r, first.r, first.z, first.z];
        Some(self.rings.iter().fold(init, |b, ring| {
            [
                b[0].min(ring.r),
                b[1].max(ring.r),
                b[2].min(ring.z),
                b[3].max(ring.z),
            ]
        }))
    }
}

/// Exponent of an Lp norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

/// `(sum_j |g_j|^p vol_j)^{1/p}`, or `max_j |g_j|` for `p = inf`.
pub fn lp_norm(cloud: &ParticleCloud, p: Exponent) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::Domain("lp_norm of an empty cloud".into()));
    }
    match p {
        Exponent::Infinity => Ok(cloud.rings.iter().map(|r| r.g.abs()).fold(0.0, f64::max)),
        Exponent::Finite(p) if p >= 1.0 && p.is_finite() => {
            let sum: f64 = cloud.rings.iter().map(|r| r.g.abs().powf(p) * r.vol).sum();
            Ok(sum.powf(1.0 / p))
        }
        Exponent::Finite(p) => Err(Error::Domain(format!("Lp norm needs p >= 1 (got {p})"))),
    }
}

/// An analytic `q^theta / r` field on the meridional half-plane.
pub trait Profile {
    fn value(&self, r: f64, z: f64) -> f64;

    /// Rectangle outside which the profile vanishes identically.
    fn support(&self) -> Option<MeridionalBox>;
}

/// One Gaussian-core ring of a [`GaussianRings`] profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianCore {
    pub amplitude: f64,
    pub radius: f64,
    #[serde(default)]
    pub z: f64,
    pub core: f64,
}

/// Number of core radii at which each Gaussian is truncated to zero.
pub const GAUSSIAN_CUTOFF: f64 = 6.0;

/// Superposition of `A exp(-((r - R)^2 + (z - z0)^2) / sigma^2)` cores, each
/// truncated at distance `6 sigma` so the support is compact.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianRings {
    pub cores: Vec<GaussianCore>,
}

impl GaussianRings {
    pub fn single(amplitude: f64, radius: f64, core: f64) -> Self {
        GaussianRings {
            cores: vec![GaussianCore {
                amplitude,
                radius,
                z: 0.0,
                core,
            }],
        }
    }
}

impl Profile for GaussianRings {
    fn value(&self, r: f64, z: f64) -> f64 {
        self.cores
            .iter()
            .map(|c| {
                let d2 = ((r - c.radius).powi(2) + (z - c.z).powi(2)) / (c.core * c.core);
                if d2 < GAUSSIAN_CUTOFF * GAUSSIAN_CUTOFF {
                    c.amplitude * (-d2).exp()
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn support(&self) -> Option<MeridionalBox> {
        let mut it = self.cores.iter().map(|c| {
            let h = GAUSSIAN_CUTOFF * c.core;
            [(c.radius - h).max(0.0), c.radius + h, c.z - h, c.z + h]
        });
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

/// The zero field.
pub struct ZeroProfile;

impl Profile for ZeroProfile {
    fn value(&self, _r: f64, _z: f64) -> f64 {
        0.0
    }

    fn support(&self) -> Option<MeridionalBox> {
        None
    }
}

/// Cell-centered grid on a meridional box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeridionalGrid {
    #[serde(rename = "box")]
    pub bounds: MeridionalBox,
    pub nr: usize,
    pub nz: usize,
    pub n_theta: usize,
}

impl MeridionalGrid {
    pub fn new(bounds: MeridionalBox, nr: usize, nz: usize, n_theta: usize) -> Result<Self> {
        if nr == 0 || nz == 0 {
            return Err(Error::Domain(format!(
                "grid counts must be >= 1 (got {nr} x {nz})"
            )));
        }
        check_n_theta(n_theta)?;
        Ok(MeridionalGrid {
            bounds,
            nr,
            nz,
            n_theta,
        })
    }

    pub fn dr(&self) -> f64 {
        (self.bounds.r_max - self.bounds.r_min) / self.nr as f64
    }

    pub fn dz(&self) -> f64 {
        (self.bounds.z_max - self.bounds.z_min) / self.nz as f64
    }

    pub fn r_center(&self, i: usize) -> f64 {
        self.bounds.r_min + (i as f64 + 0.5) * self.dr()
    }

    pub fn z_center(&self, k: usize) -> f64 {
        self.bounds.z_min + (k as f64 + 0.5) * self.dz()
    }
}

/// Resolution of the quadrature used to measure how much of a profile's
/// support falls outside the sampling box.
const OVERFLOW_SAMPLES: usize = 400;

/// Samples `profile` at cell centers: one ring per cell with
/// `g = profile(r, z)` and `vol = 2 pi r dr dz`. Rings with zero weight are dropped.
pub fn init_from_profile(
    profile: &dyn Profile,
    grid: &MeridionalGrid,
    alpha: Alpha,
) -> Result<ParticleCloud> {
    if let Some(support) = profile.support() {
        if !grid.bounds.contains_box(&support) {
            let overflow = overflow_fraction(profile, &support, &grid.bounds);
            if overflow > 0.0 {
                return Err(Error::SupportOverflow {
                    overflow_fraction: overflow,
                });
            }
        }
    }
    let (dr, dz) = (grid.dr(), grid.dz());
    let mut rings = Vec::new();
    for i in 0..grid.nr {
        let r = grid.r_center(i);
        let vol = 2.0 * PI * r * dr * dz;
        for k in 0..grid.nz {
            let z = grid.z_center(k);
            let g = profile.value(r, z);
            if g * vol != 0.0 {
                rings.push(VortexRing::new(r, z, g, vol, grid.n_theta)?);
            }
        }
    }
    Ok(ParticleCloud::new(rings, alpha))
}

fn overflow_fraction(profile: &dyn Profile, support: &MeridionalBox, inner: &MeridionalBox) -> f64 {
    let n = OVERFLOW_SAMPLES;
    let dr = (support.r_max - support.r_min) / n as f64;
    let dz = (support.z_max - support.z_min) / n as f64;
    let (mut total, mut outside) = (0.0, 0.0);
    for i in 0..n {
        let r = support.r_min + (i as f64 + 0.5) * dr;
        for k in 0..n {
            let z = support.z_min + (k as f64 + 0.5) * dz;
            let m = profile.value(r, z).abs() * r;
            total += m;
            if !inner.contains(r, z) {
                outside += m;
            }
        }
    }
    if total > 0.0 {
        outside / total
    } else {
        0.0
    }
}

/// One Dirac ring `m * delta_{(r, z)}` of a measure-valued datum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Atom {
    pub r: f64,
    pub z: f64,
    pub mass: f64,
}

impl TryFrom<[f64; 3]> for Atom {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        if !(v[0] >= 0.0 && v.iter().all(|x| x.is_finite())) {
            return Err(Error::Domain(format!("invalid atom {v:?}")));
        }
        Ok(Atom {
            r: v[0],
            z: v[1],
            mass: v[2],
        })
    }
}

impl From<Atom> for [f64; 3] {
    fn from(a: Atom) -> [f64; 3] {
        [a.r, a.z, a.mass]
    }
}

/// A finite signed combination of Dirac rings representing `q_0^theta / r`
/// as a compactly supported Radon measure.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureData {
    atoms: Vec<Atom>,
    bounds: MeridionalBox,
}

impl MeasureData {
    pub fn new(atoms: Vec<Atom>, bounds: MeridionalBox) -> Result<Self> {
        if let Some(a) = atoms.iter().find(|a| !bounds.contains(a.r, a.z)) {
            return Err(Error::Domain(format!(
                "atom at ({}, {}) lies outside the declared support {:?}",
                a.r,
                a.z,
                bounds.as_array()
            )));
        }
        Ok(MeasureData { atoms, bounds })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bounds(&self) -> &MeridionalBox {
        &self.bounds
    }

    /// `sum_i |m_i|`, the total variation norm of the measure.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass.abs()).sum()
    }

    pub fn signed_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// Each atom as a thin ring with weight `m_i` (no smoothing).
    pub fn as_rings(&self, alpha: Alpha, n_theta: usize) -> Result<ParticleCloud> {
        let rings = self
            .atoms
            .iter()
            .map(|a| VortexRing::with_weight(a.r, a.z, a.mass, n_theta))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParticleCloud::new(rings, alpha))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha() -> Alpha {
        Alpha::new(0.1).unwrap()
    }

    #[test]
    fn zero_profile_gives_empty_cloud() {
        let b = MeridionalBox::new(0.0, 1.0, -1.0, 1.0).unwrap();
        let grid = MeridionalGrid::new(b, 8, 8, 8).unwrap();
        let cloud = init_from_profile(&ZeroProfile, &grid, alpha()).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn support_overflow_is_rejected() {
        let profile = GaussianRings::single(1.0, 1.0, 0.1);
        let b = MeridionalBox::new(0.0, 1.05, -1.0, 1.0).unwrap();
        let grid = MeridionalGrid::new(b, 16, 16, 8).unwrap();
        match init_from_profile(&profile, &grid, alpha()) {
            Err(Error::SupportOverflow { overflow_fraction }) => {
                assert!(overflow_fraction > 0.01 && overflow_fraction < 0.5)
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn cell_centers_and_volumes() {
        let profile = GaussianRings::single(2.0, 1.0, 0.1);
        let b = MeridionalBox::new(0.0, 2.0, -1.0, 1.0).unwrap();
        let grid = MeridionalGrid::new(b, 4, 4, 8).unwrap();
        let cloud = init_from_profile(&profile, &grid, alpha()).unwrap();
        for ring in &cloud.rings {
            assert!((ring.vol - 2.0 * PI * ring.r * 0.25).abs() < 1e-15);
            assert_eq!(ring.g, profile.value(ring.r, ring.z));
        }
    }

    #[test]
    fn lp_norm_cases() {
        let rings = (1..=4)
            .map(|i| VortexRing::new(i as f64, 0.0, 3.0, 0.5 * i as f64, 8).unwrap())
            .collect();
        let cloud = ParticleCloud::new(rings, alpha());
        let total_vol: f64 = 0.5 * 10.0;
        let l2 = lp_norm(&cloud, Exponent::Finite(2.0)).unwrap();
        assert!((l2 - 3.0 * total_vol.sqrt()).abs() < 1e-14);
        let l1 = lp_norm(&cloud, Exponent::Finite(1.0)).unwrap();
        assert!((l1 - 3.0 * total_vol).abs() < 1e-13);
        assert_eq!(lp_norm(&cloud, Exponent::Infinity).unwrap(), 3.0);
        assert!(lp_norm(&cloud, Exponent::Finite(0.5)).is_err());
        let empty = ParticleCloud::new(vec![], alpha());
        assert!(lp_norm(&empty, Exponent::Finite(1.0)).is_err());
    }

    #[test]
    fn sample_point_layout() {
        let ring = VortexRing::new(1.0, 0.0, 1.0, 1.0, 4).unwrap();
        assert_eq!(
            sample_points(&ring),
            vec![
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [-1.0, 0.0, 0.0],
                [0.0, -1.0, 0.0]
            ]
        );
        let axis = VortexRing::new(0.0, 2.5, 1.0, 1.0, 8).unwrap();
        assert!(sample_points(&axis)
            .iter()
            .all(|p| p[0] == 0.0 && p[1] == 0.0 && p[2] == 2.5));
        let ring = VortexRing::new(0.7, -0.3, 1.0, 1.0, 12).unwrap();
        let pts = sample_points(&ring);
        let cx: f64 = pts.iter().map(|p| p[0]).sum::<f64>() / 12.0;
        let cy: f64 = pts.iter().map(|p| p[1]).sum::<f64>() / 12.0;
        assert!(cx.abs() < 1e-15 && cy.abs() < 1e-15);
        assert!(pts.iter().all(|p| p[2] == -0.3));
    }

    #[test]
    fn invalid_rings_rejected() {
        assert!(VortexRing::new(-0.1, 0.0, 1.0, 1.0, 8).is_err());
        assert!(VortexRing::new(0.1, 0.0, 1.0, 0.0, 8).is_err());
        assert!(VortexRing::new(0.1, 0.0, 1.0, 1.0, 5).is_err());
        assert!(VortexRing::new(0.1, 0.0, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn measure_data_norms() {
        let b = MeridionalBox::new(0.0, 2.0, -1.0, 1.0).unwrap();
        let atoms = vec![
            Atom::try_from([1.0, 0.0, 2.0]).unwrap(),
            Atom::try_from([0.5, 0.5, -3.0]).unwrap(),
        ];
        let data = MeasureData::new(atoms.clone(), b).unwrap();
        assert_eq!(data.total_variation(), 5.0);
        assert_eq!(data.signed_mass(), -1.0);
        let small = MeridionalBox::new(0.0, 0.8, -1.0, 1.0).unwrap();
        assert!(MeasureData::new(atoms, small).is_err());
    }
}
