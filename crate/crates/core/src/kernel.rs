//! Scalar special functions of the regularized Biot–Savart law.
//!
//! The velocity kernel is built from
//!
//! ```text
//! f(z)      = ((1 + z) e^{-z} - 1) / (4 pi z^2)
//! f_a(s)    = f(s / a) / a^2
//! G_a(s)    = (1 - e^{-s/a}) / (4 pi s)
//! ```
//!
//! with `G_a' = f_a`, so that `curl (G_a q)` is the kernel sum evaluated in
//! [`crate::velocity`]. Near the origin every function switches to a Taylor
//! polynomial because the closed forms cancel catastrophically.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularization length. Always strictly positive and finite.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > 0.0 {
            Ok(Alpha(alpha))
        } else {
            Err(Error::Domain(format!(
                "alpha > 0 required (got {alpha}); the alpha = 0 Euler limit is not supported"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Alpha::new(value)
    }
}

impl From<Alpha> for f64 {
    fn from(alpha: Alpha) -> f64 {
        alpha.0
    }
}

/// Below this `f` is evaluated by its degree-8 Taylor polynomial.
pub const F_SERIES_SWITCH: f64 = 1e-2;
/// Below this `f'` is evaluated by its degree-16 Taylor polynomial.
pub const F_PRIME_SERIES_SWITCH: f64 = 0.5;
/// Below this `(1 - e^{-z}) / z` is evaluated by its degree-8 Taylor polynomial.
pub const GREEN_SERIES_SWITCH: f64 = 1e-2;

const INV_4PI: f64 = 1.0 / (4.0 * PI);

// 4 pi f(z) = sum_n (-1)^{n+1} (n+1)/(n+2)! z^n
const F_COEFFS: [f64; 9] = [
    -1.0 / 2.0,
    1.0 / 3.0,
    -1.0 / 8.0,
    1.0 / 30.0,
    -1.0 / 144.0,
    1.0 / 840.0,
    -1.0 / 5760.0,
    1.0 / 45360.0,
    -1.0 / 403200.0,
];

// 4 pi f'(z) = sum_{k>=3} (-1)^{k+1} (k-1)(k-2)/k! z^{k-3}
const F_PRIME_COEFFS: [f64; 17] = {
    let mut c = [0.0; 17];
    let mut k = 3;
    let mut fact = 6.0; // 3!
    while k < 20 {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        c[k - 3] = sign * ((k - 1) * (k - 2)) as f64 / fact;
        k += 1;
        fact *= k as f64;
    }
    c
};

// (1 - e^{-z}) / z = sum_n (-1)^n z^n / (n+1)!
const GREEN_COEFFS: [f64; 9] = [
    1.0,
    -1.0 / 2.0,
    1.0 / 6.0,
    -1.0 / 24.0,
    1.0 / 120.0,
    -1.0 / 720.0,
    1.0 / 5040.0,
    -1.0 / 40320.0,
    1.0 / 362880.0,
];

#[inline]
fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

fn check_nonneg(z: f64, what: &str) -> Result<()> {
    if z >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} requires a nonnegative argument (got {z})"
        )))
    }
}

/// `f(z)` without the domain check; `z` must be `>= 0`.
#[inline]
pub(crate) fn f_raw(z: f64) -> f64 {
    if z < F_SERIES_SWITCH {
        horner(&F_COEFFS, z) * INV_4PI
    } else {
        // (1+z)e^{-z} - 1 = (1+z) expm1(-z) + z keeps two more digits than the naive form.
        ((1.0 + z) * (-z).exp_m1() + z) * INV_4PI / (z * z)
    }
}

/// `f'(z)` without the domain check; `z` must be `>= 0`.
#[inline]
pub(crate) fn f_prime_raw(z: f64) -> f64 {
    if z < F_PRIME_SERIES_SWITCH {
        horner(&F_PRIME_COEFFS, z) * INV_4PI
    } else {
        (-2.0 * (-z).exp_m1() - z * (2.0 + z) * (-z).exp()) * INV_4PI / (z * z * z)
    }
}

/// The dimensionless kernel profile `f(z)`. `f(0) = -1/(8 pi)`.
pub fn f_scalar(z: f64) -> Result<f64> {
    check_nonneg(z, "f")?;
    Ok(f_raw(z))
}

/// `f'(z) = (2 - (2 + 2z + z^2) e^{-z}) / (4 pi z^3)`, with `f'(0) = 1/(12 pi)`.
pub fn f_prime(z: f64) -> Result<f64> {
    check_nonneg(z, "f'")?;
    Ok(f_prime_raw(z))
}

/// `f_alpha(s) = f(s/alpha) / alpha^2`.
pub fn f_alpha(s: f64, alpha: Alpha) -> Result<f64> {
    check_nonneg(s, "f_alpha")?;
    let a = alpha.get();
    Ok(f_raw(s / a) / (a * a))
}

/// Radial derivative of `f_alpha`: `f'(s/alpha) / alpha^3`.
pub fn f_alpha_prime(s: f64, alpha: Alpha) -> Result<f64> {
    check_nonneg(s, "f_alpha'")?;
    let a = alpha.get();
    Ok(f_prime_raw(s / a) / (a * a * a))
}

/// Green's function of `(1 - alpha^2 Laplacian) Laplacian`; finite at the origin
/// where it equals `1 / (4 pi alpha)`.
pub fn green_alpha(s: f64, alpha: Alpha) -> Result<f64> {
    check_nonneg(s, "G_alpha")?;
    let a = alpha.get();
    let z = s / a;
    let ratio = if z < GREEN_SERIES_SWITCH {
        horner(&GREEN_COEFFS, z)
    } else {
        -(-z).exp_m1() / z
    };
    Ok(ratio * INV_4PI / a)
}

/// Suprema of the kernel profile that enter the a priori velocity bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `sup |f|`
    pub m0: f64,
    /// `sup |z f(z)|`
    pub m1: f64,
    /// `sup |f'|`
    pub mf1: f64,
    pub m0_argmax: f64,
    pub m1_argmax: f64,
    pub mf1_argmax: f64,
    /// `f < 0` at every scanned point.
    pub f_negative: bool,
    /// Largest relative change of any constant between the scan and its 2x refinement.
    pub refinement_change: f64,
}

const SCAN_LO: f64 = 1e-8;
const SCAN_HI: f64 = 1e3;
const SCAN_PER_DECADE: usize = 400;
const SCAN_TOL: f64 = 1e-6;

struct Scan {
    sup: [f64; 3],
    argmax: [f64; 3],
    f_negative: bool,
}

fn scan_grid(per_decade: usize) -> Scan {
    let decades = (SCAN_HI / SCAN_LO).log10();
    let n = (decades * per_decade as f64).round() as usize;
    let profiles: [fn(f64) -> f64; 3] = [
        |z| f_raw(z).abs(),
        |z| (z * f_raw(z)).abs(),
        |z| f_prime_raw(z).abs(),
    ];
    // Analytic limits at the origin: |f(0)| = 1/(8 pi), z f -> 0, |f'(0)| = 1/(12 pi).
    let mut sup = [1.0 / (8.0 * PI), 0.0, 1.0 / (12.0 * PI)];
    let mut argmax = [0.0, 0.0, 0.0];
    // Tails beyond SCAN_HI are dominated by their monotone asymptotes
    // 1/(4 pi z^2), 1/(4 pi z), 1/(2 pi z^3), all largest at SCAN_HI.
    let tails = [
        INV_4PI / (SCAN_HI * SCAN_HI),
        INV_4PI / SCAN_HI,
        1.0 / (2.0 * PI * SCAN_HI.powi(3)),
    ];
    for (k, t) in tails.iter().enumerate() {
        if *t > sup[k] {
            sup[k] = *t;
            argmax[k] = SCAN_HI;
        }
    }
    let mut f_negative = true;
    for i in 0..=n {
        let z = SCAN_LO * 10f64.powf(decades * i as f64 / n as f64);
        if f_raw(z) >= 0.0 {
            f_negative = false;
        }
        for k in 0..3 {
            let v = profiles[k](z);
            if v > sup[k] {
                sup[k] = v;
                argmax[k] = z;
            }
        }
    }
    // Polish interior maxima with a golden-section search on the bracketing cell.
    let ratio = 10f64.powf(decades / n as f64);
    for k in 0..3 {
        let z0 = argmax[k];
        if z0 > SCAN_LO && z0 < SCAN_HI {
            let (z, v) = golden_max(profiles[k], z0 / ratio, z0 * ratio);
            if v > sup[k] {
                sup[k] = v;
                argmax[k] = z;
            }
        }
    }
    Scan {
        sup,
        argmax,
        f_negative,
    }
}

fn golden_max(g: fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * b.abs() {
            break;
        }
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - inv_phi * (b - a);
        d = a + inv_phi * (b - a);
    }
    let z = 0.5 * (a + b);
    (z, g(z))
}

/// Computes the kernel suprema on a logarithmic grid over `(0, 1e3]` joined
/// with the analytic limits at the origin and the asymptotic tails.
///
/// Fails if doubling the grid density moves any constant by more than `1e-6`
/// relative.
pub fn bound_scan() -> Result<KernelConstants> {
    let coarse = scan_grid(SCAN_PER_DECADE);
    let fine = scan_grid(2 * SCAN_PER_DECADE);
    let change = (0..3)
        .map(|k| (fine.sup[k] - coarse.sup[k]).abs() / fine.sup[k])
        .fold(0.0, f64::max);
    if !(change < SCAN_TOL) {
        return Err(Error::ScanNotConverged(format!(
            "relative change {change:e} under 2x refinement exceeds {SCAN_TOL:e}"
        )));
    }
    Ok(KernelConstants {
        m0: fine.sup[0],
        m1: fine.sup[1],
        mf1: fine.sup[2],
        m0_argmax: fine.argmax[0],
        m1_argmax: fine.argmax[1],
        mf1_argmax: fine.argmax[2],
        f_negative: coarse.f_negative && fine.f_negative,
        refinement_change: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    /// Independent series oracle: sums the full Taylor series term by term
    /// via the recurrence on 1/k!, far past the truncation used in `f_raw`.
    fn f_series_oracle(z: f64) -> f64 {
        let mut sum = 0.0;
        let mut inv_fact = 1.0; // 1/k!
        let mut zp = 1.0; // z^{k-2}
        for k in 0..60usize {
            if k >= 1 {
                inv_fact /= k as f64;
            }
            if k >= 2 {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * (1.0 - k as f64) * inv_fact * zp;
                zp *= z;
            }
        }
        sum / (4.0 * PI)
    }

    #[test]
    fn f_at_origin_matches_series() {
        assert!(rel(f_scalar(0.0).unwrap(), -1.0 / (8.0 * PI)) < 1e-15);
        assert!(rel(f_scalar(0.0).unwrap(), f_series_oracle(0.0)) < 1e-14);
    }

    #[test]
    fn f_reference_values() {
        // 40-digit references
        assert!(rel(f_scalar(1.0).unwrap(), -0.021_027_640_021_628_507) < 1e-14);
        assert!(rel(f_scalar(20.0).unwrap(), -1.989_436_702_537_46e-4) < 1e-13);
        let newton = -1.0 / (4.0 * PI * 400.0);
        let dev = rel(f_scalar(20.0).unwrap(), newton);
        assert!(dev <= 5e-8, "{dev}");
        assert!(rel(dev, 21.0 * (-20f64).exp()) < 1e-6);
    }

    #[test]
    fn series_matches_oracle_below_switch() {
        for &z in &[1e-8, 1e-5, 1e-3, 5e-3, 9.99e-3] {
            assert!(
                rel(f_scalar(z).unwrap(), f_series_oracle(z)) < 1e-14,
                "z = {z}"
            );
        }
    }

    #[test]
    fn series_closed_form_continuity() {
        let zs = F_SERIES_SWITCH;
        let series = horner(&F_COEFFS, zs) * INV_4PI;
        let closed = f_raw(zs);
        assert!(rel(series, closed) <= 1e-14, "{}", rel(series, closed));
        let zs = F_PRIME_SERIES_SWITCH;
        let series = horner(&F_PRIME_COEFFS, zs) * INV_4PI;
        assert!(rel(series, f_prime_raw(zs)) <= 1e-14);
    }

    #[test]
    fn exponential_deviation_identity() {
        // 4 pi z^2 f(z) + 1 = (1 + z) e^{-z}, checked relative to the Newtonian
        // part since e^{-z} drops below f64 resolution of f well before z = 50.
        for i in 0..=490 {
            let z = 1.0 + 0.1 * i as f64;
            let lhs = 4.0 * PI * z * z * f_raw(z) + 1.0;
            let rhs = (1.0 + z) * (-z).exp();
            assert!((lhs - rhs).abs() < 1e-12, "z = {z}");
            if z <= 8.0 {
                assert!(rel(lhs, rhs) < 1e-12, "z = {z}: {}", rel(lhs, rhs));
            }
        }
    }

    #[test]
    fn f_prime_values() {
        assert!(rel(f_prime(0.0).unwrap(), 1.0 / (12.0 * PI)) < 1e-15);
        assert!(rel(f_prime(1.5).unwrap(), 0.009_014_213_868_903_936) < 1e-14);
        assert!(rel(f_prime(30.0).unwrap(), 5.894_627_521_656_731e-6) < 1e-12);
        let h = 1e-5;
        let fd = (f_raw(1.5 + h) - f_raw(1.5 - h)) / (2.0 * h);
        assert!((fd - f_prime_raw(1.5)).abs() < 1e-8);
    }

    #[test]
    fn negative_arguments_are_domain_errors() {
        assert!(matches!(f_scalar(-1e-12), Err(Error::Domain(_))));
        assert!(matches!(f_prime(-1.0), Err(Error::Domain(_))));
        let a = Alpha::new(1.0).unwrap();
        assert!(f_alpha(-1.0, a).is_err());
        assert!(green_alpha(-1.0, a).is_err());
        assert!(Alpha::new(0.0).is_err());
        assert!(Alpha::new(f64::NAN).is_err());
    }

    #[test]
    fn f_alpha_scaling() {
        let a = Alpha::new(0.3).unwrap();
        assert!(rel(f_alpha(0.0, a).unwrap(), -1.0 / (8.0 * PI * 0.09)) < 1e-15);
        let half = Alpha::new(0.15).unwrap();
        for i in 0..50 {
            let s = 0.013 * i as f64;
            let lhs = f_alpha(s, a).unwrap();
            let rhs = f_alpha(s / 2.0, half).unwrap() / 4.0;
            assert!((lhs - rhs).abs() <= 1e-15 * lhs.abs());
            // alpha^2 f_alpha(alpha z) = f(z)
            let z = s / 0.3;
            assert!(rel(0.09 * f_alpha(0.3 * z, a).unwrap(), f_raw(z)) < 1e-13);
        }
        let s = 20.0 * 0.3;
        assert!(rel(f_alpha(s, a).unwrap(), -1.0 / (4.0 * PI * s * s)) <= 5e-8);
    }

    #[test]
    fn green_function_limits_and_derivative() {
        let a = Alpha::new(0.7).unwrap();
        assert!(rel(green_alpha(0.0, a).unwrap(), 1.0 / (4.0 * PI * 0.7)) < 1e-15);
        let s = 40.0 * 0.7;
        let newton = 1.0 / (4.0 * PI * s);
        assert!(rel(green_alpha(s, a).unwrap(), newton) <= (-40f64).exp() + 4.0 * f64::EPSILON);
        // G_alpha' = f_alpha, checked at s = alpha
        let h = 1e-5;
        let s = 0.7;
        let fd = (green_alpha(s + h, a).unwrap() - green_alpha(s - h, a).unwrap()) / (2.0 * h);
        assert!((fd - f_alpha(s, a).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn bound_scan_constants() {
        let k = bound_scan().unwrap();
        assert!(rel(k.m0, 1.0 / (8.0 * PI)) < 1e-15);
        assert_eq!(k.m0_argmax, 0.0);
        assert!(rel(k.mf1, 1.0 / (12.0 * PI)) < 1e-15);
        assert_eq!(k.mf1_argmax, 0.0);
        // sup |z f| from a 40-digit root find of d(zf)/dz = 0
        assert!(rel(k.m1, 0.023_747_955_291_453_693) < 1e-12, "{}", k.m1);
        assert!((k.m1_argmax - 1.793_282_132_900_761).abs() < 1e-6);
        assert!(k.f_negative);
        assert!(k.refinement_change < 1e-6);
    }
}
