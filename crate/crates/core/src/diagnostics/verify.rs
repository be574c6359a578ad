//! Property checks over a sequence of stored snapshots.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelConstants;
use crate::state::{lp_norm, Exponent, ParticleCloud};
use crate::velocity::bounds::velocity_bound;
use crate::velocity::{dot, e_theta, frobenius, norm, trace, NodeSet, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub property: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl Check {
    fn le(property: &str, value: f64, bound: f64) -> Self {
        Check {
            property: property.to_string(),
            value,
            bound,
            pass: value <= bound,
            detail: None,
        }
    }

    fn failed(property: &str, detail: String) -> Self {
        Check {
            property: property.to_string(),
            value: f64::NAN,
            bound: 0.0,
            pass: false,
            detail: Some(detail),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub snapshots: usize,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    pub seed: u64,
    pub bound_points: usize,
    pub divergence_points: usize,
    pub divergence_tol: f64,
    pub swirl_tol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            seed: 0,
            bound_points: 1000,
            divergence_points: 100,
            divergence_tol: 1e-10,
            swirl_tol: 1e-8,
        }
    }
}

/// Uniform points in the solid of revolution `[0, r_max + pad] x [z_min - pad, z_max + pad]`.
pub fn random_points(cloud: &ParticleCloud, n: usize, pad: f64, rng: &mut impl Rng) -> Vec<Vec3> {
    let bb = cloud.bounding_box().unwrap_or([0.0, 1.0, -1.0, 1.0]);
    (0..n)
        .map(|_| {
            let r = rng.gen_range(0.0..bb[1] + pad);
            let th = rng.gen_range(0.0..2.0 * PI);
            let z = rng.gen_range(bb[2] - pad..bb[3] + pad);
            [r * th.cos(), r * th.sin(), z]
        })
        .collect()
}

/// Off-plane probes well outside the cloud, at `r = 2 r_max + 1` and `3 r_max + 1`.
pub fn swirl_probes(cloud: &ParticleCloud) -> Vec<Vec3> {
    let bb = cloud.bounding_box().unwrap_or([0.0, 1.0, -1.0, 1.0]);
    let mut out = Vec::new();
    for scale in [2.0, 3.0] {
        for z in [bb[2] - 1.0, 0.5 * (bb[2] + bb[3]), bb[3] + 1.0] {
            for th in [0.37f64, 1.91, 4.4] {
                let r = scale * bb[1] + 1.0;
                out.push([r * th.cos(), r * th.sin(), z]);
            }
        }
    }
    out
}

fn field_checks(
    cloud: &ParticleCloud,
    k: &KernelConstants,
    s: &VerifySettings,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64)> {
    let nodes = NodeSet::new(cloud)?;
    let mut div = 0.0f64;
    for x in random_points(cloud, s.divergence_points, 1.0, rng) {
        let g = nodes.gradient(x);
        let f = frobenius(&g);
        if f > 0.0 {
            div = div.max(trace(&g).abs() / f);
        }
    }
    let mut swirl = 0.0f64;
    for x in swirl_probes(cloud) {
        let u = nodes.velocity(x, None);
        let mag = norm(u);
        if mag > 0.0 {
            swirl = swirl.max(dot(u, e_theta(x)?).abs() / mag);
        }
    }
    let mut ratio = 0.0f64;
    for x in random_points(cloud, s.bound_points, 1.0, rng) {
        let b = velocity_bound(x, cloud, k);
        let u = norm(nodes.velocity(x, None));
        if b > 0.0 {
            ratio = ratio.max(u / b);
        } else if u > 0.0 {
            ratio = f64::INFINITY;
        }
    }
    Ok((div, swirl, ratio))
}

/// Runs every check over `snapshots`, which must share ring order.
pub fn verify_snapshots(
    snapshots: &[ParticleCloud],
    k: &KernelConstants,
    settings: &VerifySettings,
) -> Result<VerifyReport> {
    let Some(first) = snapshots.first() else {
        return Err(Error::Domain("no snapshots to verify".into()));
    };
    let mut checks = Vec::new();
    let count_drift = snapshots
        .iter()
        .map(|c| c.len().abs_diff(first.len()))
        .max()
        .unwrap_or(0);
    checks.push(Check::le("ring_count", count_drift as f64, 0.0));

    let mut mismatched = 0usize;
    for c in &snapshots[1..] {
        mismatched += c
            .rings
            .iter()
            .zip(&first.rings)
            .filter(|(a, b)| a.g.to_bits() != b.g.to_bits() || a.vol.to_bits() != b.vol.to_bits())
            .count();
    }
    checks.push(Check::le("strengths_invariant", mismatched as f64, 0.0));

    for (name, p) in [
        ("lp_norm_invariance_p1", Exponent::Finite(1.0)),
        ("lp_norm_invariance_p2", Exponent::Finite(2.0)),
        ("lp_norm_invariance_pinf", Exponent::Infinity),
    ] {
        if first.is_empty() {
            checks.push(Check::le(name, 0.0, 0.0));
            continue;
        }
        let base = lp_norm(first, p)?;
        let drift = snapshots
            .iter()
            .map(|c| lp_norm(c, p).map(|v| (v - base).abs()))
            .collect::<Result<Vec<_>>>()
            .map(|d| d.into_iter().fold(0.0, f64::max));
        match drift {
            Ok(d) => checks.push(Check::le(name, d, 0.0)),
            Err(e) => checks.push(Check::failed(name, e.to_string())),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let probe_set = if snapshots.len() > 1 {
        vec![first, snapshots.last().unwrap()]
    } else {
        vec![first]
    };
    let (mut div, mut swirl, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
    let mut failure = None;
    for c in probe_set {
        match field_checks(c, k, settings, &mut rng) {
            Ok((d, s, r)) => {
                div = div.max(d);
                swirl = swirl.max(s);
                ratio = ratio.max(r);
            }
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    match failure {
        None => {
            checks.push(Check::le("finite_state", 0.0, 0.0));
            checks.push(Check::le("divergence_free", div, settings.divergence_tol));
            checks.push(Check::le("swirl_free", swirl, settings.swirl_tol));
            checks.push(Check::le("velocity_bound", ratio, 1.0));
        }
        Some(msg) => checks.push(Check::failed("finite_state", msg)),
    }
    Ok(VerifyReport {
        snapshots: snapshots.len(),
        checks,
    })
}
