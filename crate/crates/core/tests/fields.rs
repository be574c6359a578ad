use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vortalpha::diagnostics::{random_points, swirl_probes};
use vortalpha::evolve::rk4_step;
use vortalpha::kernel::{bound_scan, Alpha};
use vortalpha::state::{
    init_from_profile, GaussianRings, MeridionalBox, MeridionalGrid, ParticleCloud, VortexRing,
};
use vortalpha::velocity::bounds::{velocity_bound, velocity_bound_check};
use vortalpha::velocity::{
    advection_velocities, dot, e_theta, eval_grad, eval_velocity, eval_velocity_batch, frobenius,
    norm, trace,
};

fn gaussian(n: usize, a: f64) -> ParticleCloud {
    let bounds = MeridionalBox::new(0.0, 2.0, -1.0, 1.0).unwrap();
    let grid = MeridionalGrid::new(bounds, n, n, 16).unwrap();
    init_from_profile(
        &GaussianRings::single(1.0, 1.0, 0.1),
        &grid,
        Alpha::new(a).unwrap(),
    )
    .unwrap()
}

#[test]
fn gaussian_ring_mass() {
    let exact = 2.0 * PI * PI * 0.01;
    let coarse = gaussian(128, 0.1).total_weight();
    assert!((coarse - exact).abs() / exact < 5e-3, "{coarse} vs {exact}");
    let fine = gaussian(256, 0.1).total_weight();
    assert!((fine - coarse).abs() / coarse < 1e-3);
}

#[test]
fn on_axis_velocity_is_axial() {
    let ring = VortexRing::with_weight(1.0, 0.0, 1.0, 32).unwrap();
    let cloud = ParticleCloud::new(vec![ring], Alpha::new(0.1).unwrap());
    for zeta in [-1.0, 0.0, 0.3, 2.0] {
        let u = eval_velocity([0.0, 0.0, zeta], &cloud).unwrap();
        assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15, "{u:?}");
        assert!(u[2] < 0.0);
    }
}

#[test]
fn batch_is_pointwise_and_permutation_equivariant() {
    let cloud = gaussian(32, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts = random_points(&cloud, 40, 0.5, &mut rng);
    let u = eval_velocity_batch(&pts, &cloud).unwrap();
    let rev: Vec<_> = pts.iter().rev().copied().collect();
    let u_rev = eval_velocity_batch(&rev, &cloud).unwrap();
    for (a, b) in u.iter().zip(u_rev.iter().rev()) {
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }
    assert_eq!(
        u[7].map(f64::to_bits),
        eval_velocity(pts[7], &cloud).unwrap().map(f64::to_bits)
    );
}

#[test]
fn advection_velocity_is_node_velocity() {
    let rings = vec![
        VortexRing::with_weight(1.0, 0.0, 1.0, 16).unwrap(),
        VortexRing::with_weight(0.7, 0.2, -0.4, 16).unwrap(),
    ];
    let cloud = ParticleCloud::new(rings, Alpha::new(0.2).unwrap());
    let adv = advection_velocities(&cloud).unwrap();
    // full field at node 0
    for (ring, v) in cloud.rings.iter().zip(&adv) {
        let u = eval_velocity([ring.r, 0.0, ring.z], &cloud).unwrap();
        assert!(u[1].abs() < 1e-15);
        assert!((v[0] - u[0]).abs() <= 1e-14 * norm(u) && (v[1] - u[2]).abs() <= 1e-14 * norm(u));
    }
}

#[test]
fn worker_count_does_not_change_bits() {
    let cloud = gaussian(48, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts = random_points(&cloud, 64, 0.5, &mut rng);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                (
                    eval_velocity_batch(&pts, &cloud).unwrap(),
                    rk4_step(&cloud, 0.01).unwrap(),
                )
            })
    };
    let (u1, c1) = run(1);
    let (u4, c4) = run(4);
    assert_eq!(u1, u4);
    for (a, b) in c1.rings.iter().zip(&c4.rings) {
        assert_eq!(
            (a.r.to_bits(), a.z.to_bits()),
            (b.r.to_bits(), b.z.to_bits())
        );
    }
}

#[test]
fn perturbed_cloud_shows_swirl() {
    let ring = VortexRing::with_weight(1.0, 0.0, 1.0, 32).unwrap();
    let cloud = ParticleCloud::new(vec![ring], Alpha::new(0.1).unwrap());
    let probes = swirl_probes(&cloud);
    let swirl = |c: &ParticleCloud| {
        probes
            .iter()
            .map(|x| {
                let u = eval_velocity(*x, c).unwrap();
                dot(u, e_theta(*x).unwrap()).abs() / norm(u)
            })
            .fold(0.0, f64::max)
    };
    assert!(swirl(&cloud) < 1e-8);
    // coarsely sampled second ring
    let mut broken = cloud.clone();
    broken
        .rings
        .push(VortexRing::with_weight(1.0, 0.5, 1.0, 4).unwrap());
    assert!(swirl(&broken) > 1e-6, "{}", swirl(&broken));
}

#[test]
fn halving_alpha_grows_velocity_at_most_fourfold() {
    let k = bound_scan().unwrap();
    let base = gaussian(32, 0.2);
    let mut half = base.clone();
    half.alpha = Alpha::new(0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts = random_points(&base, 500, 2.0, &mut rng);
    let sup = |c: &ParticleCloud| {
        eval_velocity_batch(&pts, c)
            .unwrap()
            .iter()
            .map(|u| norm(*u))
            .fold(0.0, f64::max)
    };
    let sup_env = pts
        .iter()
        .map(|x| velocity_bound(*x, &base, &k))
        .fold(0.0, f64::max);
    assert!(sup(&half) <= 4.0 * sup_env);
    assert!(sup(&half) / sup(&base) <= 4.0);
}

#[test]
fn bound_holds_in_a_ball_of_radius_five() {
    let k = bound_scan().unwrap();
    let cloud = gaussian(64, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<_> = random_points(&cloud, 4000, 4.0, &mut rng)
        .into_iter()
        .filter(|x| norm([x[0] - 1.0, x[1], x[2]]) <= 5.0)
        .take(1000)
        .collect();
    assert_eq!(pts.len(), 1000);
    let rep = velocity_bound_check(&cloud, &pts, &k).unwrap();
    assert!(rep.max_ratio < 1.0, "{rep:?}");
}

fn arb_cloud() -> impl Strategy<Value = ParticleCloud> {
    (
        prop::collection::vec((0.05f64..2.0, -1.0f64..1.0, -2.0f64..2.0), 1..8),
        0.05f64..1.0,
        prop::sample::select(vec![4usize, 8, 16]),
    )
        .prop_map(|(rings, a, n)| {
            let rings = rings
                .into_iter()
                .map(|(r, z, w)| VortexRing::with_weight(r, z, w, n).unwrap())
                .collect();
            ParticleCloud::new(rings, Alpha::new(a).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_trace_free(cloud in arb_cloud(), x in prop::array::uniform3(-3.0f64..3.0)) {
        let g = eval_grad(x, &cloud).unwrap();
        let f = frobenius(&g);
        prop_assume!(f > 1e-300);
        prop_assert!(trace(&g).abs() <= 1e-10 * f);
    }

    #[test]
    fn velocity_bound_holds(cloud in arb_cloud(), x in prop::array::uniform3(-4.0f64..4.0)) {
        let k = bound_scan().unwrap();
        let u = norm(eval_velocity(x, &cloud).unwrap());
        prop_assert!(u <= velocity_bound(x, &cloud, &k) * (1.0 + 1e-12));
    }
}
