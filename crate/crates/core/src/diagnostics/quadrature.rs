use crate::error::{Error, Result};

/// Composite Simpson weights on arbitrary increasing nodes. Interval pairs use
/// the unequal-spacing Simpson rule; an odd final interval gets the
/// three-point end correction, which is still exact for quadratics.
pub fn simpson_weights(t: &[f64]) -> Result<Vec<f64>> {
    if t.len() < 3 {
        return Err(Error::Domain(format!(
            "Simpson needs >= 3 nodes (got {})",
            t.len()
        )));
    }
    let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if h.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::Domain(
            "quadrature nodes must be strictly increasing".into(),
        ));
    }
    let n = h.len();
    let mut w = vec![0.0; t.len()];
    let paired = n - n % 2;
    for i in (0..paired).step_by(2) {
        let (h0, h1) = (h[i], h[i + 1]);
        let c = (h0 + h1) / 6.0;
        w[i] += c * (2.0 - h1 / h0);
        w[i + 1] += c * (h0 + h1) * (h0 + h1) / (h0 * h1);
        w[i + 2] += c * (2.0 - h0 / h1);
    }
    if n % 2 == 1 {
        let (h0, h1) = (h[n - 2], h[n - 1]);
        w[n] += (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        w[n - 1] += (h1 * h1 + 3.0 * h1 * h0) / (6.0 * h0);
        w[n - 2] -= h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
    }
    Ok(w)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, 4 points.
pub fn gauss_legendre_4() -> ([f64; 4], [f64; 4]) {
    let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let wa = (18.0 + 30.0f64.sqrt()) / 36.0;
    let wb = (18.0 - 30.0f64.sqrt()) / 36.0;
    ([-b, -a, a, b], [wb, wa, wa, wb])
}
