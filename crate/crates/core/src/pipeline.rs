//! Derotation, tracking, window least squares and the observer chained over a
//! recording.

use std::time::{Duration, Instant};

use crate::derotation::{derotate_accel, integrate_gyro, GyroIntegration, OrientationTrack};
use crate::error::{input, Error, Result};
use crate::flow::{flow_to_foc, warp_midpoint_flow, AffineWarp, FlowMedianFilter};
use crate::image::GrayFrame;
use crate::model::{interp_linear, CameraIntrinsics, FocSample, ImuSample, StampedVec3, Timestamp, Vec2, Vec3};
use crate::observer::{reconstruct_xyz, DepthObserver, ObserverGain, ObserverMode, ObserverState};
use crate::tau::{solve_axes, WindowConfig, WindowGrid};
use crate::tracker::{AffineTracker, PatchTemplate, TrackerConfig};

/// Random access to the frames of a recording.
pub trait FrameSource {
    fn len(&self) -> usize;
    fn time(&self, k: usize) -> Timestamp;
    fn frame(&self, k: usize) -> Result<GrayFrame>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub gain: ObserverGain,
    pub tracker: TrackerConfig,
    pub gyro: GyroIntegration,
    /// Rate at which tracker output is used (Hz); must divide the frame rate.
    /// `None` keeps every frame.
    pub decimate_hz: Option<f64>,
    pub ratio_eps: f64,
    /// Median over the last three flows before recovering `F`.
    pub flow_median: bool,
    /// Patch center in first-frame pixels; the principal point if unset.
    pub patch_center_px: Option<Vec2>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: WindowConfig::default(),
            gain: ObserverGain::default(),
            tracker: TrackerConfig::default(),
            gyro: GyroIntegration::default(),
            decimate_hz: None,
            ratio_eps: 1e-6,
            flow_median: false,
            patch_center_px: None,
        }
    }
}

/// Per-tick record of what the solver and observer did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickDiagnostic {
    pub t: Timestamp,
    pub det_q: [f64; 3],
    pub posed: [bool; 3],
    pub valid: [bool; 3],
    pub gated: [bool; 3],
    pub accel_power: [f64; 3],
    pub z0: [f64; 3],
    pub g: [f64; 3],
    pub fz: f64,
    /// `None` before the observer has been seeded.
    pub state: Option<ObserverState>,
}

impl TickDiagnostic {
    pub fn mode(&self) -> Option<ObserverMode> {
        self.state.map(|s| s.mode)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrackingStats {
    pub frames: usize,
    pub elapsed: Duration,
}

impl TrackingStats {
    pub fn fps(&self) -> f64 {
        let s = self.elapsed.as_secs_f64();
        if s > 0.0 {
            self.frames as f64 / s
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Default)]
pub struct PipelineOutput {
    /// Camera position relative to the fixated point, start-of-service frame.
    pub estimate: Vec<StampedVec3>,
    pub diagnostics: Vec<TickDiagnostic>,
    pub foc: Vec<FocSample>,
    pub warps: Vec<AffineWarp>,
    pub tracking: TrackingStats,
    /// Set when processing stopped early; everything above covers the data
    /// before the failure.
    pub failure: Option<Error>,
}

/// Where frequency-of-contact comes from.
pub enum FocInput<'a> {
    Frames {
        source: &'a dyn FrameSource,
        intrinsics: CameraIntrinsics,
    },
    /// Precomputed samples, used as is.
    Samples(&'a [FocSample]),
}

fn frame_step(source: &dyn FrameSource, decimate_hz: Option<f64>) -> Result<usize> {
    let Some(hz) = decimate_hz else {
        return Ok(1);
    };
    if source.len() < 2 {
        return input("need at least two frames");
    }
    let span = source.time(source.len() - 1).secs_since(source.time(0));
    let rate = (source.len() - 1) as f64 / span;
    let step = rate / hz;
    if !(hz > 0.0) || (step - step.round()).abs() > 0.02 || step.round() < 1.0 {
        return input(format!("decimation to {hz} Hz does not divide the {rate:.2} Hz frame rate"));
    }
    Ok(step.round() as usize)
}

/// Constant-velocity extrapolation of the last two warps to `t`.
fn predict_warp(warps: &[AffineWarp], t: Timestamp) -> AffineWarp {
    let last = warps[warps.len() - 1];
    let Some(before) = warps.len().checked_sub(2).map(|i| warps[i]) else {
        return AffineWarp { t, ..last };
    };
    let ratio = t.secs_since(last.t) / last.t.secs_since(before.t);
    let mut w = last.w;
    for (p, b) in w.iter_mut().zip(&before.w) {
        *p += ratio * (*p - b);
    }
    AffineWarp { w, t }
}

/// Tracks the patch through `source` and turns consecutive warps into `F`.
/// On tracking loss the samples gathered so far are returned with the error.
pub fn track_foc(
    source: &dyn FrameSource,
    intrinsics: &CameraIntrinsics,
    orientation: &OrientationTrack,
    cfg: &PipelineConfig,
) -> Result<(Vec<FocSample>, Vec<AffineWarp>, TrackingStats, Option<Error>)> {
    let step = frame_step(source, cfg.decimate_hz)?;
    if source.len() < step + 1 {
        return input("too few frames to form a flow estimate");
    }
    let first = source.frame(0)?;
    let center = cfg.patch_center_px.unwrap_or_else(|| intrinsics.principal_point());
    let template = PatchTemplate::from_frame(&first, intrinsics, center, &cfg.tracker)?;
    let tracker = AffineTracker::new(template, cfg.tracker);

    let mut warps = vec![AffineWarp::identity(source.time(0))];
    let mut foc = Vec::new();
    let mut stats = TrackingStats::default();
    let mut median = FlowMedianFilter::new();
    let mut k = step;
    while k < source.len() {
        let t = source.time(k);
        let frame = source.frame(k)?;
        let rotation = orientation.at(t)?;
        let prev = *warps.last().expect("seeded");
        let guess = predict_warp(&warps, t);
        let started = Instant::now();
        let result = tracker.track_frame(&frame, t, &rotation, &guess);
        stats.elapsed += started.elapsed();
        stats.frames += 1;
        let warp = match result {
            Ok(r) => r.warp,
            Err(e) => return Ok((foc, warps, stats, Some(e))),
        };
        let baseline = t.secs_since(prev.t);
        let sample = warp_midpoint_flow(&warp, &prev, baseline).and_then(|(flow, mid)| {
            let flow = if cfg.flow_median { median.push(flow) } else { flow };
            flow_to_foc(&flow, tracker.template().fixation_point(&mid), cfg.ratio_eps)
        });
        warps.push(warp);
        match sample {
            Ok(s) => foc.push(s),
            Err(e) => return Ok((foc, warps, stats, Some(e))),
        }
        k += step;
    }
    Ok((foc, warps, stats, None))
}

/// Runs the fusion ticks over `F` and the fixed-frame accelerometer stream.
pub fn fuse(
    foc: &[FocSample],
    accel_fixed: &[StampedVec3],
    cfg: &PipelineConfig,
) -> Result<(Vec<StampedVec3>, Vec<TickDiagnostic>, Option<Error>)> {
    let (Some(f0), Some(f1)) = (foc.first(), foc.last()) else {
        return Ok((Vec::new(), Vec::new(), None));
    };
    let (Some(a0), Some(a1)) = (accel_fixed.first(), accel_fixed.last()) else {
        return input("accelerometer stream is empty");
    };
    let win = &cfg.window;
    let step_ns = (1e9 / win.rate_hz).round() as u64;
    let span_ns = (win.length_s * 1e9).round() as u64;
    let start_ns = f0.t.nanos().max(a0.t.nanos()) + span_ns;
    let end = f1.t.min(a1.t);
    // ticks on a grid aligned to multiples of the step
    let mut t = Timestamp::from_nanos(start_ns.div_ceil(step_ns) * step_ns);

    let mut observer = DepthObserver::new(cfg.gain);
    let mut estimate = Vec::new();
    let mut diagnostics = Vec::new();
    let mut last: Option<Timestamp> = None;
    while t <= end {
        let grid = WindowGrid::ending_at(t, win.length_s, win.rate_hz)?;
        let f: Vec<Vec3> = grid.resample(foc)?.iter().map(|s| s.foc).collect();
        let a: Vec<Vec3> = grid.resample(accel_fixed)?.iter().map(|s| s.v).collect();
        let now = interp_linear(foc, t)?;
        let report = solve_axes(t, &f, &a, grid.dt(), win)?;
        let dt = last.map(|l| t.secs_since(l)).unwrap_or(grid.dt());
        let state = match observer.update(&report, dt, *a.last().expect("window")) {
            Ok(s) => s,
            Err(e) => return Ok((estimate, diagnostics, Some(e))),
        };
        if let Some(s) = state {
            estimate.push(StampedVec3::new(t, -reconstruct_xyz(&s, now.point)));
        }
        diagnostics.push(TickDiagnostic {
            t,
            det_q: report.solutions.map(|s| s.det_q),
            posed: report.solutions.map(|s| s.posed),
            valid: report.solutions.map(|s| s.valid),
            gated: report.gated,
            accel_power: report.accel_power,
            z0: report.solutions.map(|s| s.z0),
            g: report.solutions.map(|s| s.g),
            fz: report.foc_now.z,
            state,
        });
        last = Some(t);
        t = t.add_nanos(step_ns);
    }
    Ok((estimate, diagnostics, None))
}

/// Orientation from the gyro, rebased so the first frame is the identity.
pub fn orientation_from_gyro(gyro: &[ImuSample], first_frame: Timestamp, cfg: &GyroIntegration) -> Result<OrientationTrack> {
    integrate_gyro(gyro, cfg)?.rebased_at(first_frame)
}

/// The full chain; errors before any output is possible are returned as
/// `Err`, later ones in [`PipelineOutput::failure`].
pub fn run_pipeline(
    input_foc: FocInput<'_>,
    gyro: &[ImuSample],
    accel: &[ImuSample],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let first = match &input_foc {
        FocInput::Frames { source, .. } => {
            if source.is_empty() {
                return input("recording has no frames");
            }
            source.time(0)
        }
        FocInput::Samples(s) => s.first().map(|s| s.t).ok_or_else(|| Error::Input("no F samples".into()))?,
    };
    let orientation = orientation_from_gyro(gyro, first, &cfg.gyro)?;
    let accel_fixed = derotate_accel(accel, &orientation)?;
    let mut out = PipelineOutput::default();
    match input_foc {
        FocInput::Frames { source, intrinsics } => {
            let (foc, warps, stats, failure) = track_foc(source, &intrinsics, &orientation, cfg)?;
            out.foc = foc;
            out.warps = warps;
            out.tracking = stats;
            out.failure = failure;
        }
        FocInput::Samples(s) => out.foc = s.to_vec(),
    }
    let (estimate, diagnostics, failure) = fuse(&out.foc, &accel_fixed, cfg)?;
    out.estimate = estimate;
    out.diagnostics = diagnostics;
    if out.failure.is_none() {
        out.failure = failure;
    }
    Ok(out)
}
