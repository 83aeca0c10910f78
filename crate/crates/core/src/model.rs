//! Value types shared by every stage of the pipeline.
//!
//! Time is carried as integer nanoseconds since the start of a sequence and
//! only converted to seconds where something is integrated. Image positions
//! are calibrated (unit focal length, principal point at the origin) everywhere
//! except at file and image boundaries.

use std::fmt;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
/// Body-to-fixed rotation.
pub type Rotation = UnitQuaternion<f64>;

pub const NANOS_PER_SEC: f64 = 1e9;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Timestamp(u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_nanos(ns: u64) -> Self {
        Timestamp(ns)
    }

    /// Rounds to the nearest nanosecond. Negative inputs clamp to zero.
    pub fn from_secs(s: f64) -> Self {
        Timestamp((s * NANOS_PER_SEC).round().max(0.0) as u64)
    }

    pub const fn nanos(self) -> u64 {
        self.0
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    /// Signed difference `self - earlier` in seconds.
    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        (self.0 as i128 - earlier.0 as i128) as f64 / NANOS_PER_SEC
    }

    pub fn saturating_sub_nanos(self, ns: u64) -> Self {
        Timestamp(self.0.saturating_sub(ns))
    }

    pub fn add_nanos(self, ns: u64) -> Self {
        Timestamp(self.0 + ns)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.secs())
    }
}

pub fn is_finite3(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return input(format!("focal lengths must be positive, got {} {}", self.fx, self.fy));
        }
        let inside = self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx <= self.width as f64
            && self.cy <= self.height as f64;
        if !inside {
            return input(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            ));
        }
        Ok(())
    }

    pub fn to_calibrated(&self, pixel: Vec2) -> Vec2 {
        Vec2::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy)
    }

    pub fn to_pixel(&self, x: Vec2) -> Vec2 {
        Vec2::new(x.x * self.fx + self.cx, x.y * self.fy + self.cy)
    }

    pub fn principal_point(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }
}

/// Anything carrying a timestamp.
pub trait Timed {
    fn t(&self) -> Timestamp;
}

/// Componentwise linear blend used by [`interp_linear`].
pub trait Interpolate: Sized {
    /// `alpha = 0` returns `self`, `alpha = 1` returns `other`; the result is
    /// stamped with `t`.
    fn lerp(&self, other: &Self, alpha: f64, t: Timestamp) -> Self;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StampedVec3 {
    pub t: Timestamp,
    pub v: Vec3,
}

impl StampedVec3 {
    pub fn new(t: Timestamp, v: Vec3) -> Self {
        StampedVec3 { t, v }
    }
}

impl Timed for StampedVec3 {
    fn t(&self) -> Timestamp {
        self.t
    }
}

impl Interpolate for StampedVec3 {
    fn lerp(&self, other: &Self, alpha: f64, t: Timestamp) -> Self {
        StampedVec3 {
            t,
            v: self.v.lerp(&other.v, alpha),
        }
    }
}

/// Raw IMU reading in the sensor frame. `accel` measures `-Ẍ + g` where `Ẍ` is
/// the acceleration of a static scene point relative to the camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: Timestamp,
    pub gyro: Vec3,
    pub accel: Vec3,
}

impl Timed for ImuSample {
    fn t(&self) -> Timestamp {
        self.t
    }
}

impl Interpolate for ImuSample {
    fn lerp(&self, other: &Self, alpha: f64, t: Timestamp) -> Self {
        ImuSample {
            t,
            gyro: self.gyro.lerp(&other.gyro, alpha),
            accel: self.accel.lerp(&other.accel, alpha),
        }
    }
}

/// Frequency-of-contact `Ẋ/Z` of the fixated scene point, expressed in the
/// start-of-service orientation, together with that point's calibrated image
/// location in the same frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocSample {
    pub t: Timestamp,
    pub foc: Vec3,
    pub point: Vec2,
}

impl FocSample {
    /// Time-to-contact `-1/F_z`. Infinite when the camera is not closing in.
    pub fn tau(&self) -> f64 {
        -1.0 / self.foc.z
    }
}

impl Timed for FocSample {
    fn t(&self) -> Timestamp {
        self.t
    }
}

impl Interpolate for FocSample {
    fn lerp(&self, other: &Self, alpha: f64, t: Timestamp) -> Self {
        FocSample {
            t,
            foc: self.foc.lerp(&other.foc, alpha),
            point: self.point.lerp(&other.point, alpha),
        }
    }
}

/// Linear interpolation into a time-ordered slice. Exact at sample times.
pub fn interp_linear<T>(samples: &[T], t: Timestamp) -> Result<T>
where
    T: Timed + Interpolate + Clone,
{
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f.t(), l.t()),
        _ => return input("cannot interpolate an empty stream"),
    };
    if t < first || t > last {
        return Err(Error::OutOfRange {
            t,
            start: first,
            end: last,
        });
    }
    // first index with sample time >= t
    let hi = samples.partition_point(|s| s.t() < t);
    let upper = &samples[hi];
    if upper.t() == t || hi == 0 {
        return Ok(upper.clone());
    }
    let lower = &samples[hi - 1];
    let span = (upper.t().nanos() - lower.t().nanos()) as f64;
    let alpha = (t.nanos() - lower.t().nanos()) as f64 / span;
    Ok(lower.lerp(upper, alpha, t))
}

fn check_monotone<T: Timed>(samples: &[T]) -> Result<()> {
    for (i, w) in samples.windows(2).enumerate() {
        if w[1].t() <= w[0].t() {
            return input(format!(
                "timestamps must be strictly increasing (sample {} at {} follows {})",
                i + 1,
                w[1].t(),
                w[0].t()
            ));
        }
    }
    Ok(())
}

/// A validated, strictly time-ordered stream.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    samples: Vec<T>,
}

impl<T: Timed> TimeSeries<T> {
    pub fn new(samples: Vec<T>) -> Result<Self> {
        check_monotone(&samples)?;
        Ok(TimeSeries { samples })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_inner(self) -> Vec<T> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start(&self) -> Option<Timestamp> {
        self.samples.first().map(Timed::t)
    }

    pub fn end(&self) -> Option<Timestamp> {
        self.samples.last().map(Timed::t)
    }

    pub fn covers(&self, t: Timestamp) -> bool {
        matches!((self.start(), self.end()), (Some(s), Some(e)) if s <= t && t <= e)
    }
}

impl<T: Timed + Interpolate + Clone> TimeSeries<T> {
    pub fn interp(&self, t: Timestamp) -> Result<T> {
        interp_linear(&self.samples, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    Estimate,
    GroundTruth,
}

/// Timestamped 3D positions in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    points: Vec<StampedVec3>,
}

impl Trajectory {
    pub fn new(kind: TrajectoryKind, points: Vec<StampedVec3>) -> Result<Self> {
        check_monotone(&points)?;
        if let Some(p) = points.iter().find(|p| !is_finite3(&p.v)) {
            return input(format!("non-finite position at {}", p.t));
        }
        Ok(Trajectory { kind, points })
    }

    pub fn points(&self) -> &[StampedVec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> Option<Timestamp> {
        self.points.first().map(|p| p.t)
    }

    pub fn end(&self) -> Option<Timestamp> {
        self.points.last().map(|p| p.t)
    }

    pub fn position_at(&self, t: Timestamp) -> Result<Vec3> {
        interp_linear(&self.points, t).map(|p| p.v)
    }

    /// Polyline length of the samples inside `[start, end]`.
    pub fn path_length(&self, start: Timestamp, end: Timestamp) -> f64 {
        self.points
            .iter()
            .filter(|p| p.t >= start && p.t <= end)
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| (w[1].v - w[0].v).norm())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn d455() -> CameraIntrinsics {
        CameraIntrinsics::new(400.0, 400.0, 424.0, 240.0, 848, 480).unwrap()
    }

    #[test]
    fn principal_point_maps_to_origin() {
        let k = d455();
        assert_eq!(k.to_calibrated(Vec2::new(424.0, 240.0)), Vec2::zeros());
        assert_eq!(k.to_calibrated(Vec2::new(824.0, 240.0)), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn calibrated_arithmetic() {
        let x = d455().to_calibrated(Vec2::new(100.0, 200.0));
        assert_abs_diff_eq!(x.x, -0.81, epsilon = 1e-15);
        assert_abs_diff_eq!(x.y, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 400.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(400.0, 400.0, 11.0, 1.0, 10, 10).is_err());
    }

    fn scalar(t_ns: u64, x: f64) -> StampedVec3 {
        StampedVec3::new(Timestamp::from_nanos(t_ns), Vec3::new(x, -x, 2.0 * x))
    }

    #[test]
    fn interp_exact_at_samples_and_midpoint() {
        let s = TimeSeries::new(vec![scalar(0, 0.0), scalar(1_000_000_000, 2.0)]).unwrap();
        assert_eq!(s.interp(Timestamp::ZERO).unwrap().v.x, 0.0);
        assert_eq!(s.interp(Timestamp::from_nanos(1_000_000_000)).unwrap().v.x, 2.0);
        let mid = s.interp(Timestamp::from_secs(0.5)).unwrap();
        assert_abs_diff_eq!(mid.v.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mid.v.y, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn interp_out_of_range() {
        let s = TimeSeries::new(vec![scalar(10, 0.0), scalar(20, 1.0)]).unwrap();
        assert!(matches!(
            s.interp(Timestamp::from_nanos(5)),
            Err(Error::OutOfRange { .. })
        ));
        assert!(s.interp(Timestamp::from_nanos(21)).is_err());
    }

    #[test]
    fn rejects_non_monotone() {
        assert!(TimeSeries::new(vec![scalar(10, 0.0), scalar(10, 1.0)]).is_err());
        assert!(TimeSeries::new(vec![scalar(10, 0.0), scalar(5, 1.0)]).is_err());
        assert!(Trajectory::new(TrajectoryKind::Estimate, vec![scalar(3, 0.0), scalar(1, 0.0)]).is_err());
    }

    #[test]
    fn resampled_sinusoid_within_bound() {
        // 250 Hz samples of sin(2π f t) queried on a 100 Hz grid.
        let f = 3.0;
        let dt = 1.0 / 250.0;
        let w = 2.0 * std::f64::consts::PI * f;
        let stream: Vec<_> = (0..=500)
            .map(|k| {
                let t = k as f64 * dt;
                StampedVec3::new(Timestamp::from_secs(t), Vec3::new((w * t).sin(), 0.0, 0.0))
            })
            .collect();
        let s = TimeSeries::new(stream).unwrap();
        let bound = (w * dt).powi(2) / 2.0;
        let mut worst: f64 = 0.0;
        for k in 0..=200 {
            let t = Timestamp::from_nanos(k * 10_000_000);
            let got = s.interp(t).unwrap().v.x;
            worst = worst.max((got - (w * t.secs()).sin()).abs());
        }
        assert!(worst < bound, "{worst} >= {bound}");
    }

    #[test]
    fn path_length_of_straight_line() {
        let pts = (0..=10)
            .map(|k| StampedVec3::new(Timestamp::from_nanos(k), Vec3::new(k as f64 * 0.1, 0.0, 0.0)))
            .collect();
        let traj = Trajectory::new(TrajectoryKind::GroundTruth, pts).unwrap();
        assert_abs_diff_eq!(
            traj.path_length(Timestamp::ZERO, Timestamp::from_nanos(10)),
            1.0,
            epsilon = 1e-12
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn calibration_round_trip(u in -500.0..1500.0f64, v in -500.0..1000.0f64,
                                      fx in 50.0..2000.0f64, fy in 50.0..2000.0f64) {
                let k = CameraIntrinsics::new(fx, fy, 320.0, 240.0, 640, 480).unwrap();
                let p = Vec2::new(u, v);
                let back = k.to_pixel(k.to_calibrated(p));
                prop_assert!((back - p).abs().max() <= 1e-12 * (1.0 + p.abs().max()));
            }

            #[test]
            fn interp_exact_for_affine_signals(a in -10.0..10.0f64, b in -10.0..10.0f64,
                                               q in 0u64..3_000_000_000) {
                let s = TimeSeries::new((0..=30u64)
                    .map(|k| {
                        let t = Timestamp::from_nanos(k * 100_000_000);
                        StampedVec3::new(t, Vec3::repeat(a + b * t.secs()))
                    })
                    .collect()).unwrap();
                let t = Timestamp::from_nanos(q);
                let got = s.interp(t).unwrap().v.x;
                prop_assert!((got - (a + b * t.secs())).abs() < 1e-12);
            }
        }
    }
}
