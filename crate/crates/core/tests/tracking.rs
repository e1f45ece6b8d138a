use scantrack::eval::{initial_position, scenarios, simulate};
use scantrack::pipeline::{track, TrackMode};

fn straight_line() -> scantrack::eval::RunConfig {
    let mut cfg = scenarios::load("straight_line").unwrap();
    cfg.duration = Some(3.0);
    cfg
}

#[test]
fn fused_position_stays_near_a_tracker() {
    let cfg = straight_line();
    let (scans, truth) = simulate(&cfg).unwrap();
    let init = initial_position(&cfg, &truth).unwrap();
    let out = track(&scans, init, TrackMode::Dual, &cfg.pipeline, &cfg.target).unwrap();
    assert_eq!(out.len(), scans.len());
    let mut checked = 0;
    for o in out.iter().filter(|o| o.status.is_ok()) {
        let near = o.trackers.iter().any(|t| {
            let sigma = t.position_cov.symmetric_eigenvalues().max().sqrt();
            (o.position - t.position).norm() <= 3.0 * sigma + 1e-12
        });
        assert!(near, "step {}: fused position far from both trackers", o.seq);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn windows_stay_in_their_intervals() {
    let cfg = straight_line();
    let (scans, truth) = simulate(&cfg).unwrap();
    let init = initial_position(&cfg, &truth).unwrap();
    let out = track(&scans, init, TrackMode::Dual, &cfg.pipeline, &cfg.target).unwrap();
    let (a, d) = (cfg.pipeline.ast, cfg.pipeline.adt);
    for o in &out {
        assert!((a.i_min..=a.i_max).contains(&o.i_ast), "I_ast {}", o.i_ast);
        assert!((d.i_min..=d.i_max).contains(&o.i_adt), "I_adt {}", o.i_adt);
    }
}

#[test]
fn tracking_is_deterministic() {
    let cfg = straight_line();
    let (scans, truth) = simulate(&cfg).unwrap();
    let init = initial_position(&cfg, &truth).unwrap();
    for mode in [TrackMode::Dual, TrackMode::Fixed(5)] {
        let a = track(&scans, init, mode, &cfg.pipeline, &cfg.target).unwrap();
        let b = track(&scans, init, mode, &cfg.pipeline, &cfg.target).unwrap();
        assert_eq!(a, b);
    }
}
