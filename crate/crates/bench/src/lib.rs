//! Criterion benchmarks for the kernel sums and the time stepper; see `benches/`.

use vortalpha::kernel::Alpha;
use vortalpha::state::{
    init_from_profile, GaussianRings, MeridionalBox, MeridionalGrid, ParticleCloud,
};

/// Gaussian-core ring sampled on an `n x n` meridional grid.
pub fn gaussian_cloud(n: usize, n_theta: usize) -> ParticleCloud {
    let bounds = MeridionalBox::new(0.4, 1.6, -0.6, 0.6).expect("valid box");
    let grid = MeridionalGrid::new(bounds, n, n, n_theta).expect("valid grid");
    init_from_profile(
        &GaussianRings::single(10.0, 1.0, 0.1),
        &grid,
        Alpha::new(0.1).expect("positive alpha"),
    )
    .expect("profile fits the box")
}
