//! Verification layer: weak-form residuals, an energy drift monitor,
//! convergence-order fits and the `verify` pass over stored snapshots.
//! Everything here is a pure function of recorded data.

pub mod quadrature;
pub mod verify;
pub mod weak;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use verify::{
    random_points, swirl_probes, verify_snapshots, Check, VerifyReport, VerifySettings,
};
pub use weak::{
    weak_form_residual, weak_solution_residual, AxialBall, DivergenceFreeField, FieldSample,
    PolynomialBump, SeparableBump, SpaceTimeTest, StreamBall, WeakSolutionResidual,
};

use crate::error::{Error, Result};
use crate::state::{MeridionalBox, ParticleCloud};
use crate::velocity::{dot, frobenius, NodeSet};

/// Required clearance between the cloud and the energy grid edge, in units of alpha.
pub const ENERGY_MARGIN: f64 = 5.0;

/// Cell-centered meridional grid for the energy integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyGrid {
    #[serde(rename = "box")]
    pub bounds: MeridionalBox,
    pub nr: usize,
    pub nz: usize,
}

/// `E = 1/2 int (|u|^2 + alpha^2 |grad u|^2) dx` by the midpoint rule on the
/// meridional grid, sampled on the half-plane at angle `pi / n_theta`.
pub fn energy_monitor(cloud: &ParticleCloud, grid: &EnergyGrid) -> Result<f64> {
    if grid.nr == 0 || grid.nz == 0 {
        return Err(Error::Domain("energy grid needs nr, nz >= 1".into()));
    }
    let Some(bb) = cloud.bounding_box() else {
        return Ok(0.0);
    };
    let a = cloud.alpha.get();
    let m = ENERGY_MARGIN * a;
    let required = [(bb[0] - m).max(0.0), bb[1] + m, bb[2] - m, bb[3] + m];
    let b = &grid.bounds;
    if b.r_min > required[0]
        || b.r_max < required[1]
        || b.z_min > required[2]
        || b.z_max < required[3]
    {
        return Err(Error::GridTooSmall { required });
    }
    let n_theta = cloud.rings.iter().map(|r| r.n_theta).max().unwrap_or(4);
    let (c, s) = ((PI / n_theta as f64).cos(), (PI / n_theta as f64).sin());
    let dr = (b.r_max - b.r_min) / grid.nr as f64;
    let dz = (b.z_max - b.z_min) / grid.nz as f64;
    let nodes = NodeSet::new(cloud)?;
    let rows: Vec<f64> = (0..grid.nr)
        .into_par_iter()
        .map(|i| {
            let r = b.r_min + (i as f64 + 0.5) * dr;
            let vol = 2.0 * PI * r * dr * dz;
            (0..grid.nz)
                .map(|k| {
                    let z = b.z_min + (k as f64 + 0.5) * dz;
                    let x = [r * c, r * s, z];
                    let u = nodes.velocity(x, None);
                    let g = frobenius(&nodes.gradient(x));
                    (dot(u, u) + a * a * g * g) * vol
                })
                .sum()
        })
        .collect();
    Ok(0.5 * rows.iter().sum::<f64>())
}

/// How the error of each run is measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorReference {
    /// `|Q(h) - Q(h/2)|`, attributed to `h`.
    Successive,
    /// `|Q(h) - Q(h_min)|` for every run but the finest.
    Finest,
    /// `|Q(h) - value|`; use `0.0` when the observable is itself an error.
    Exact(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub order: f64,
    /// `(h, error)` pairs entering the fit, coarsest first.
    pub errors: Vec<(f64, f64)>,
    /// False when the errors do not decrease with `h`; the slope is still reported.
    pub monotone: bool,
}

/// Least-squares slope of `log error` against `log h` from successive differences.
pub fn order_estimate(runs: &[(f64, f64)]) -> Result<OrderEstimate> {
    order_estimate_with(runs, ErrorReference::Successive)
}

pub fn order_estimate_with(
    runs: &[(f64, f64)],
    reference: ErrorReference,
) -> Result<OrderEstimate> {
    if runs.len() < 3 {
        return Err(Error::Domain(format!(
            "order estimate needs >= 3 runs (got {})",
            runs.len()
        )));
    }
    let mut runs = runs.to_vec();
    runs.sort_by(|a, b| b.0.total_cmp(&a.0));
    for w in runs.windows(2) {
        if ((w[0].0 / w[1].0) - 2.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "resolutions must be dyadic (got h = {} then {})",
                w[0].0, w[1].0
            )));
        }
    }
    let errors: Vec<(f64, f64)> = match reference {
        ErrorReference::Successive => runs
            .windows(2)
            .map(|w| (w[0].0, (w[0].1 - w[1].1).abs()))
            .collect(),
        ErrorReference::Finest => {
            let fine = runs.last().unwrap().1;
            runs[..runs.len() - 1]
                .iter()
                .map(|r| (r.0, (r.1 - fine).abs()))
                .collect()
        }
        ErrorReference::Exact(v) => runs.iter().map(|r| (r.0, (r.1 - v).abs())).collect(),
    };
    if let Some(bad) = errors.iter().find(|e| !(e.1 > 0.0 && e.1.is_finite())) {
        return Err(Error::Domain(format!(
            "error {} at h = {} has no logarithm",
            bad.1, bad.0
        )));
    }
    let pts: Vec<(f64, f64)> = errors.iter().map(|e| (e.0.ln(), e.1.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let monotone = errors.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(OrderEstimate {
        order: sxy / sxx,
        errors,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Alpha;
    use crate::state::VortexRing;

    fn dyadic(p: i32) -> Vec<(f64, f64)> {
        (0..5)
            .map(|i| {
                let h = 0.5f64.powi(i);
                (h, h.powi(p))
            })
            .collect()
    }

    #[test]
    fn synthetic_orders() {
        assert!((order_estimate(&dyadic(4)).unwrap().order - 4.0).abs() < 1e-6);
        assert!((order_estimate(&dyadic(1)).unwrap().order - 1.0).abs() < 1e-6);
        let exact = order_estimate_with(&dyadic(2), ErrorReference::Exact(0.0)).unwrap();
        assert!((exact.order - 2.0).abs() < 1e-12 && exact.monotone);
    }

    #[test]
    fn non_monotone_still_reports() {
        let runs = [(1.0, 1.0), (0.5, 0.5), (0.25, 0.9), (0.125, 0.1)];
        let est = order_estimate(&runs).unwrap();
        assert!(!est.monotone);
        assert!(est.order.is_finite());
    }

    #[test]
    fn order_needs_dyadic_runs() {
        assert!(order_estimate(&[(1.0, 1.0), (0.3, 0.1), (0.1, 0.01)]).is_err());
        assert!(order_estimate(&[(1.0, 1.0), (0.5, 0.1)]).is_err());
    }

    fn grid(b: [f64; 4]) -> EnergyGrid {
        EnergyGrid {
            bounds: MeridionalBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            nr: 40,
            nz: 40,
        }
    }

    #[test]
    fn energy_cases() {
        let a = Alpha::new(0.2).unwrap();
        let zero = ParticleCloud::new(vec![VortexRing::new(1.0, 0.0, 0.0, 0.1, 8).unwrap()], a);
        assert_eq!(
            energy_monitor(&zero, &grid([0.0, 3.0, -2.0, 2.0])).unwrap(),
            0.0
        );
        let ring = ParticleCloud::new(vec![VortexRing::with_weight(1.0, 0.0, 1.0, 16).unwrap()], a);
        assert!(energy_monitor(&ring, &grid([0.0, 3.0, -2.0, 2.0])).unwrap() > 0.0);
        match energy_monitor(&ring, &grid([0.0, 1.5, -2.0, 2.0])) {
            Err(Error::GridTooSmall { required }) => assert!((required[1] - 2.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
