use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scantrack::model::TargetSpec;
use scantrack::scan_sim::{simulate_labeled, simulate_sequence, SensorConfig, TrajectorySpec};

fn curve() -> TrajectorySpec {
    TrajectorySpec::CircleArc {
        center: [5.0, 0.0, 0.3],
        radius: 1.0,
        angular_rate: 1.5,
        start_angle: 3.0,
        vertical_rate: 0.1,
        duration: 1.0,
    }
}

#[test]
fn target_returns_stay_near_truth_center() {
    let sensor = SensorConfig { noise_sigma: 0.02, ..SensorConfig::default() };
    let target = TargetSpec::new([0.16, 0.36, 0.12]).unwrap();
    let spec = curve();
    let (scans, _) = simulate_labeled(&sensor, &spec, &target, 1.0, 9).unwrap();
    // Returns sit on the box surface, so the bound is the half diagonal plus
    // three sigma on each of the three noisy axes.
    let bound = target.half_extents().norm() + 3.0 * sensor.noise_sigma * 3f64.sqrt();
    let mut n = 0;
    for s in &scans {
        for p in s.target_points() {
            let (c, _) = scantrack::scan_sim::eval_trajectory(&spec, p.t).unwrap();
            let d = (p.position() - c).norm();
            assert!(d <= bound, "return {d} m from center, bound {bound}");
            n += 1;
        }
    }
    assert!(n > 100, "only {n} target returns");
}

#[test]
fn pattern_does_not_repeat_across_scans() {
    let cfg = SensorConfig::default();
    let dt = 1.0 / cfg.points_per_second;
    let per_scan = cfg.rays_per_scan();
    let angle = |k: usize| cfg.pattern_angles(k as f64 * dt);
    let dist = |i: usize, j: usize| {
        let ((a0, e0), (a1, e1)) = (angle(i), angle(j));
        ((a1 - a0).powi(2) + (e1 - e0).powi(2)).sqrt()
    };
    let n = (1.0 / dt) as usize;
    let step = (0..n - 1).map(|k| dist(k, k + 1)).sum::<f64>() / (n - 1) as f64;
    let scans = n / per_scan;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        // Same ray slot in two different scans of the same second.
        let j = rng.random_range(0..per_scan);
        let a = rng.random_range(0..scans);
        let b = (a + rng.random_range(1..scans)) % scans;
        let d = dist(a * per_scan + j, b * per_scan + j);
        assert!(d >= step, "slot {j} of scans {a} and {b}: {d} < {step}");
    }
}

#[test]
fn scan_streams_are_bit_identical_per_seed() {
    let sensor = SensorConfig { noise_sigma: 0.01, ..SensorConfig::default() };
    let target = TargetSpec::cube(0.3);
    let a = simulate_sequence(&sensor, &curve(), &target, 0.3, 11).unwrap();
    let b = simulate_sequence(&sensor, &curve(), &target, 0.3, 11).unwrap();
    assert_eq!(a, b);
    let c = simulate_sequence(&sensor, &curve(), &target, 0.3, 12).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn inverse_square_point_count_over_many_scans() {
    let sensor = SensorConfig::default();
    let target = TargetSpec::cube(0.4);
    let count = |x: f64| {
        let spec = TrajectorySpec::Hover { position: [x, 0.2, 0.1], duration: 1.0 };
        let (scans, _) = simulate_labeled(&sensor, &spec, &target, 1.0, 5).unwrap();
        scans.iter().map(|s| s.target_count()).sum::<usize>() as f64
    };
    let ratio = count(4.0) / count(8.0);
    assert!((2.0..=6.0).contains(&ratio), "ratio {ratio}");
}
