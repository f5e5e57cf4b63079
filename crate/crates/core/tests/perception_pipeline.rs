use iea_core::perception::{nees, observer_update, spawn_track, Detection, ObjectClass, ObserverParams};
use iea_core::sim::{run_episode, FaultAssignment, ScenarioConfig, TraceEvent};
use iea_core::TrackId;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::path::Path;

fn det(position: f64, t: f64, variance: f64) -> Detection {
    Detection { sensor_id: 0, timestamp: t, position, lane: 0, class: ObjectClass::Vehicle, variance }
}

/// Final-step NEES of one run whose truth follows the filter's own
/// white-noise-acceleration model.
fn nees_run(seed: u64, params: &ObserverParams, sigma: f64, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accel = Normal::new(0.0, params.accel_std).unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let dt = 0.1;
    let (mut x, mut v) = (100.0, 20.0);
    let r = sigma * sigma;
    let mut track = spawn_track(TrackId(1), &det(x + noise.sample(&mut rng), 0.0, r), params);
    for k in 1..=steps {
        let a = accel.sample(&mut rng);
        x += v * dt + 0.5 * a * dt * dt;
        v += a * dt;
        let z = x + noise.sample(&mut rng);
        track = observer_update(&track, Some(&det(z, k as f64 * dt, r)), dt, params).unwrap();
    }
    nees(&track, x, v).unwrap()
}

#[test]
fn nees_is_consistent_with_two_degrees_of_freedom() {
    let params = ObserverParams::default();
    let runs = 1000;
    let mean = (0..runs).map(|s| nees_run(s, &params, 0.3, 50)).sum::<f64>() / runs as f64;
    assert!((1.5..=2.5).contains(&mean), "mean NEES {mean}");
}

#[test]
fn noiseless_target_is_locked_within_twenty_updates() {
    let params = ObserverParams::default();
    let (x0, v, dt, r) = (0.0, 30.0, 0.1, 0.09);
    let mut track = spawn_track(TrackId(1), &det(x0, 0.0, r), &params);
    for k in 1..=20 {
        let t = k as f64 * dt;
        track = observer_update(&track, Some(&det(x0 + v * t, t, r)), dt, &params).unwrap();
    }
    assert!((track.position - (x0 + v * 2.0)).abs() < 1e-3);
    assert!((track.velocity - v).abs() < 1e-2);
}

#[test]
fn published_track_count_follows_the_truth() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/benign.toml");
    let cfg = ScenarioConfig::load(&path).unwrap();
    let coverage: Vec<_> = cfg.mssp.iter().map(|m| (m.id, m.coverage)).collect();
    let tr = run_episode(&cfg, FaultAssignment::from_index(0), 3).unwrap();
    let mut truth: Vec<f64> = Vec::new();
    let (mut frames, mut matched) = (0, 0);
    for r in &tr.records {
        match &r.event {
            TraceEvent::Tick { vehicles } => truth = vehicles.iter().map(|v| v.pos).collect(),
            TraceEvent::Tracks { mssp, published, .. } if r.t > 1.0 => {
                let (_, (a, b)) = coverage.iter().find(|c| c.0 == *mssp).unwrap();
                // Objects right at the edge may be measured on either side.
                let inside = truth.iter().filter(|&&p| p > a + 1.0 && p < b - 1.0).count();
                let edge = truth.iter().filter(|&&p| (p - a).abs() <= 1.0 || (p - b).abs() <= 1.0).count();
                frames += 1;
                if *published >= inside && *published <= inside + edge {
                    matched += 1;
                }
            }
            _ => {}
        }
    }
    assert!(frames > 500, "{frames} frames");
    let rate = matched as f64 / frames as f64;
    assert!(rate >= 0.98, "track count matched in {matched}/{frames} frames");
}
