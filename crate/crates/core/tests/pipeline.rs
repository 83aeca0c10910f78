use tau_core::eval::{align_rigid, ate};
use tau_core::model::{Trajectory, TrajectoryKind};
use tau_core::observer::ObserverMode;
use tau_core::pipeline::{orientation_from_gyro, run_pipeline, track_foc, FocInput, PipelineConfig};
use tau_core::sim::presets::{approach_2m, oscillate, quiet_span};
use tau_core::sim::PatchRegionFrames;

#[test]
fn oracle_foc_run_reconstructs_trajectory() {
    let seq = oscillate(8.0, 4).simulate().unwrap();
    let cfg = PipelineConfig::default();
    let out = run_pipeline(FocInput::Samples(&seq.oracle.foc), &seq.gyro, &seq.accel, &cfg).unwrap();
    assert!(out.failure.is_none());
    assert!(out.warps.is_empty());
    // ticks start one window after the first sample
    let first = out.diagnostics.first().unwrap().t.secs();
    assert!((first - cfg.window.length_s).abs() < 0.02, "{first}");
    let measured = out
        .diagnostics
        .iter()
        .filter(|d| d.mode() == Some(ObserverMode::Measured))
        .count();
    assert!(measured * 10 > out.diagnostics.len() * 9);
    for d in out.diagnostics.iter().filter(|d| d.state.is_some()).skip(100) {
        let z = d.state.unwrap().z;
        let truth = seq.geometry().depth(d.t.secs());
        assert!((z - truth).abs() < 0.03 * truth, "t {} z {z} truth {truth}", d.t);
    }
    let est = Trajectory::new(TrajectoryKind::Estimate, out.estimate).unwrap();
    let report = ate(&align_rigid(&est, &seq.oracle.truth, None).unwrap()).unwrap();
    assert!(report.ate_cm < 2.0, "{}", report.ate_cm);
}

#[test]
fn tracked_scale_follows_the_approach() {
    let seq = approach_2m().simulate().unwrap();
    let cfg = PipelineConfig {
        patch_center_px: Some(seq.fixation_px()),
        ..Default::default()
    };
    let orientation = orientation_from_gyro(&seq.gyro, seq.frame_times[0], &cfg.gyro).unwrap();
    let frames = PatchRegionFrames {
        sequence: &seq,
        patch: 100.0,
        margin: 40.0,
    };
    let (_, warps, stats, failure) = track_foc(&frames, &seq.intrinsics, &orientation, &cfg).unwrap();
    assert!(failure.is_none());
    assert_eq!(stats.frames + 1, seq.frame_count());
    for (k, w) in warps.iter().enumerate() {
        let scale = (w.w[0] + w.w[4]) / 2.0;
        let truth = seq.oracle.warps[k];
        let expected = (truth.w[0] + truth.w[4]) / 2.0;
        assert!((scale / expected - 1.0).abs() < 5e-3, "frame {k}: {scale} vs {expected}");
    }
}

#[test]
fn decimation_tracks_every_sixth_frame() {
    let seq = approach_2m().simulate().unwrap();
    let cfg = PipelineConfig {
        decimate_hz: Some(15.0),
        patch_center_px: Some(seq.fixation_px()),
        ..Default::default()
    };
    let orientation = orientation_from_gyro(&seq.gyro, seq.frame_times[0], &cfg.gyro).unwrap();
    let frames = PatchRegionFrames {
        sequence: &seq,
        patch: 100.0,
        margin: 40.0,
    };
    let (foc, warps, _, failure) = track_foc(&frames, &seq.intrinsics, &orientation, &cfg).unwrap();
    assert!(failure.is_none());
    assert_eq!(warps.len(), 60);
    for (i, w) in warps.iter().enumerate() {
        assert_eq!(w.t, seq.frame_times[6 * i]);
    }
    // midpoint stamps between tracked frames
    let mid = foc[0].t.secs();
    assert!((mid - 0.5 * (seq.frame_times[0].secs() + seq.frame_times[6].secs())).abs() < 1e-6);

    let bad = PipelineConfig {
        decimate_hz: Some(20.0),
        ..cfg
    };
    assert!(track_foc(&frames, &seq.intrinsics, &orientation, &bad).is_err());
}

#[test]
fn quiet_span_switches_to_dead_reckoning() {
    let scenario = quiet_span();
    let quiet = scenario.trajectory.motion.quiet.unwrap();
    let seq = scenario.simulate().unwrap();
    let cfg = PipelineConfig::default();
    let out = run_pipeline(FocInput::Samples(&seq.oracle.foc), &seq.gyro, &seq.accel, &cfg).unwrap();
    let dr: Vec<f64> = out
        .diagnostics
        .iter()
        .filter(|d| d.mode() == Some(ObserverMode::DeadReckoning))
        .map(|d| d.t.secs())
        .collect();
    assert!(!dr.is_empty());
    let (t1, t2) = (quiet.start, quiet.start + quiet.duration);
    let tw = cfg.window.length_s;
    assert!(dr.iter().all(|t| (t1..=t2 + tw).contains(t)), "{:?}", (dr.first(), dr.last()));
    assert!(dr[0] <= t1 + tw && *dr.last().unwrap() >= t2);
    for d in out.diagnostics.iter().filter(|d| d.mode() == Some(ObserverMode::DeadReckoning)) {
        assert!(d.gated.iter().all(|g| !g));
    }
}
