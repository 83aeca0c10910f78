//! Synthetic sequences: a textured plane seen by a moving pinhole camera with
//! an IMU, plus closed-form ground truth for everything downstream.

pub mod motion;
pub mod presets;
pub mod texture;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::flow::{AffineFlow, AffineWarp};
use crate::image::GrayFrame;
use crate::pipeline::FrameSource;
use crate::model::{
    CameraIntrinsics, FocSample, ImuSample, Rotation, StampedVec3, Timestamp, Trajectory, TrajectoryKind, Vec2, Vec3,
};

pub use presets::Scenario;
pub use motion::{AxisMotion, Kinematics, MotionSpec, QuietSpan, Sinusoid};
pub use texture::{Texture, TextureSpec};

/// Plane `1/Z = n·x` in start-of-service camera coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarScene {
    pub normal: [f64; 3],
    #[serde(default)]
    pub texture: TextureSpec,
    /// Pixel the tracked patch is centered on in the first frame; defaults to
    /// the principal point.
    #[serde(default)]
    pub fixation_px: Option<[f64; 2]>,
}

impl PlanarScene {
    pub fn fronto_parallel(depth: f64) -> Self {
        PlanarScene {
            normal: [0.0, 0.0, 1.0 / depth],
            texture: TextureSpec::default(),
            fixation_px: None,
        }
    }

    pub fn n(&self) -> Vec3 {
        Vec3::from(self.normal)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if !n.iter().all(|v| v.is_finite()) || n.z.abs() < 1e-9 {
            return input(format!("plane normal {n:?} needs n_z != 0"));
        }
        self.texture.validate()
    }
}

fn default_gravity() -> [f64; 3] {
    [0.0, -9.81, 0.0]
}

fn default_z_margin() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    #[serde(default)]
    pub motion: MotionSpec,
    pub duration: f64,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub accel_noise: f64,
    #[serde(default)]
    pub gyro_noise: f64,
    #[serde(default)]
    pub accel_bias: [f64; 3],
    #[serde(default)]
    pub gyro_bias: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_z_margin")]
    pub z_margin: f64,
}

impl TrajectorySpec {
    pub fn new(motion: MotionSpec, duration: f64) -> Self {
        TrajectorySpec {
            motion,
            duration,
            gravity: default_gravity(),
            accel_noise: 0.0,
            gyro_noise: 0.0,
            accel_bias: [0.0; 3],
            gyro_bias: [0.0; 3],
            seed: 0,
            z_margin: default_z_margin(),
        }
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return input(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.accel_noise >= 0.0 && self.gyro_noise >= 0.0) {
            return input("noise levels must be non-negative");
        }
        if !(self.z_margin > 0.0) {
            return input(format!("z_margin must be positive, got {}", self.z_margin));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRates {
    pub frame: f64,
    pub gyro: f64,
    pub accel: f64,
    /// Ground-truth trajectory sampling.
    #[serde(default = "default_truth_rate")]
    pub truth: f64,
}

fn default_truth_rate() -> f64 {
    200.0
}

impl Default for SimRates {
    fn default() -> Self {
        SimRates {
            frame: 90.0,
            gyro: 400.0,
            accel: 250.0,
            truth: default_truth_rate(),
        }
    }
}

impl SimRates {
    fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("frame", self.frame),
            ("gyro", self.gyro),
            ("accel", self.accel),
            ("truth", self.truth),
        ] {
            if !(r > 0.0 && r.is_finite()) {
                return input(format!("{name} rate must be positive, got {r}"));
            }
        }
        Ok(())
    }
}

/// Sample times `k/rate` covering `[0, duration]` (frames stop short of it).
fn sample_times(rate: f64, duration: f64, inclusive: bool) -> Vec<Timestamp> {
    let n = (duration * rate + 1e-9).floor() as usize + usize::from(inclusive);
    (0..n).map(|k| Timestamp::from_secs(k as f64 / rate)).collect()
}

/// Analytic scene geometry shared by the oracle and the renderer.
#[derive(Clone, Debug)]
pub struct SceneGeometry {
    motion: MotionSpec,
    n: Vec3,
    p0: Vec3,
    fixation: Vec3,
    x0: Vec2,
    intrinsics: CameraIntrinsics,
}

impl SceneGeometry {
    pub fn new(scene: &PlanarScene, motion: &MotionSpec, intrinsics: CameraIntrinsics) -> Result<Self> {
        scene.validate()?;
        intrinsics.validate()?;
        let n = scene.n();
        let p0 = motion.position_derivatives(0.0)[0];
        let px = scene.fixation_px.map(Vec2::from).unwrap_or_else(|| intrinsics.principal_point());
        let x0 = intrinsics.to_calibrated(px);
        let ray = Vec3::new(x0.x, x0.y, 1.0);
        let inv_z = n.dot(&ray);
        if !(inv_z > 0.0) {
            return Err(Error::Scenario(format!(
                "fixation ray at pixel ({}, {}) does not meet the plane in front of the camera",
                px.x, px.y
            )));
        }
        Ok(SceneGeometry {
            motion: motion.clone(),
            n,
            p0,
            fixation: p0 + ray / inv_z,
            x0,
            intrinsics,
        })
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        self.motion.kinematics(t)
    }

    /// Calibrated location of the fixation point in the first frame.
    pub fn fixation_origin(&self) -> Vec2 {
        self.x0
    }

    /// The fixation point relative to the camera, fixed orientation frame.
    pub fn relative_point(&self, t: f64) -> [Vec3; 3] {
        let [p, v, a, _] = self.motion.position_derivatives(t);
        [self.fixation - p, -v, -a]
    }

    pub fn depth(&self, t: f64) -> f64 {
        self.relative_point(t)[0].z
    }

    /// `F = Ẋ/Z` for the fixation point.
    pub fn foc(&self, t: f64) -> Vec3 {
        let [x, xdot, _] = self.relative_point(t);
        xdot / x.z
    }

    /// Fixation point in fixed-orientation calibrated coordinates.
    pub fn fixation_image(&self, t: f64) -> Vec2 {
        let x = self.relative_point(t)[0];
        Vec2::new(x.x / x.z, x.y / x.z)
    }

    /// Homography from first-frame to fixed-orientation frame-`t`
    /// calibrated coordinates for points on the plane.
    pub fn plane_homography(&self, t: f64) -> Matrix3<f64> {
        let dp = self.motion.position_derivatives(t)[0] - self.p0;
        Matrix3::identity() - dp * self.n.transpose()
    }

    /// Plane normal in the fixed-orientation frame at `t` (`1/Z = n_t·x`).
    pub fn normal_at(&self, t: f64) -> Vec3 {
        let dp = self.motion.position_derivatives(t)[0] - self.p0;
        self.n / (1.0 - self.n.dot(&dp))
    }

    /// First-order expansion of the plane homography about the fixation point.
    pub fn warp(&self, t: f64) -> AffineWarp {
        let h = self.plane_homography(t);
        let x0 = Vector3::new(self.x0.x, self.x0.y, 1.0);
        let num = h * x0;
        let den = num.z;
        let (hx, hy) = (num.x / den, num.y / den);
        let j = |r: usize, c: usize, hv: f64| (h[(r, c)] - hv * h[(2, c)]) / den;
        let (j11, j12, j21, j22) = (j(0, 0, hx), j(0, 1, hx), j(1, 0, hy), j(1, 1, hy));
        AffineWarp {
            w: [
                j11,
                j12,
                hx - j11 * self.x0.x - j12 * self.x0.y,
                j21,
                j22,
                hy - j21 * self.x0.x - j22 * self.x0.y,
            ],
            t: Timestamp::from_secs(t),
        }
    }

    /// Affine flow of the plane in the fixed-orientation frame.
    pub fn flow(&self, t: f64) -> AffineFlow {
        let [_, xdot, _] = self.relative_point(t);
        AffineFlow::from_motion(&xdot, &self.normal_at(t), Timestamp::from_secs(t))
    }
}

/// Everything the simulator knows exactly.
#[derive(Clone, Debug)]
pub struct OracleBundle {
    /// Per frame, at frame timestamps; `point` is the fixation image track.
    pub foc: Vec<FocSample>,
    pub tau: Vec<f64>,
    pub warps: Vec<AffineWarp>,
    pub truth: Trajectory,
    /// True `Ẍ` of the fixation point, fixed frame, at accelerometer times.
    pub accel_fixed: Vec<StampedVec3>,
    /// Orientation at gyro times.
    pub orientation: Vec<(Timestamp, Rotation)>,
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    fn clipped(self, w: usize, h: usize) -> PixelRect {
        PixelRect {
            x0: self.x0.min(w),
            y0: self.y0.min(h),
            x1: self.x1.min(w).max(self.x0.min(w)),
            y1: self.y1.min(h).max(self.y0.min(h)),
        }
    }
}

/// Sub-samples per pixel along each image axis.
const SUPERSAMPLE: usize = 2;

/// Renders frames on demand from closed-form poses.
#[derive(Clone, Debug)]
pub struct Renderer {
    geometry: SceneGeometry,
    texture: Texture,
    e1: Vec3,
    e2: Vec3,
}

impl Renderer {
    pub fn new(geometry: SceneGeometry, texture: &TextureSpec) -> Result<Self> {
        let n = geometry.n.normalize();
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = helper.cross(&n).normalize();
        let e2 = n.cross(&e1);
        Ok(Renderer {
            geometry,
            texture: Texture::bake(texture)?,
            e1,
            e2,
        })
    }

    pub fn geometry(&self) -> &SceneGeometry {
        &self.geometry
    }

    /// Frame at time `t`, box-filtered over `SUPERSAMPLE`² sub-samples and
/// quantized to 8 bits.
    pub fn render(&self, t: f64) -> GrayFrame {
        self.render_region(t, None)
    }

    /// Like [`Renderer::render`] but only pixels inside `region` are drawn;
    /// the rest stay black.
    pub fn render_region(&self, t: f64, region: Option<PixelRect>) -> GrayFrame {
        let g = &self.geometry;
        let k = g.kinematics(t);
        let cam = &g.intrinsics;
        let r = k.rotation.to_rotation_matrix().into_inner();
        let kinv = Matrix3::new(1.0 / cam.fx, 0.0, -cam.cx / cam.fx, 0.0, 1.0 / cam.fy, -cam.cy / cam.fy, 0.0, 0.0, 1.0);
        let nu = g.n.norm();
        let nhat = g.n / nu;
        // plane: n̂·P = c; ray P = p + s d
        let c = (1.0 + g.n.dot(&g.p0)) / nu;
        let k_ray = c - nhat.dot(&k.position);
        let rows = Matrix3::from_rows(&[self.e1.transpose(), self.e2.transpose(), nhat.transpose()]);
        let m = rows * r * kinv;
        let base = Vec2::new(self.e1.dot(&k.position), self.e2.dot(&k.position));
        let (w, h) = (cam.width as usize, cam.height as usize);
        let mut data = vec![0.0f32; w * h];
        let mm = [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]];
        let rect = region.map(|r| r.clipped(w, h)).unwrap_or(PixelRect {
            x0: 0,
            y0: 0,
            x1: w,
            y1: h,
        });
        data.par_chunks_mut(w).enumerate().for_each(|(row, line)| {
            if row < rect.y0 || row >= rect.y1 {
                return;
            }
            let out = &mut line[rect.x0..rect.x1];
            for sv in 0..SUPERSAMPLE {
                let v = row as f64 + (sv as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                let (r0, r1, r2) = (mm[1] * v + mm[2], mm[4] * v + mm[5], mm[7] * v + mm[8]);
                for su in 0..SUPERSAMPLE {
                    let du = (su as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5;
                    for (col, px) in out.iter_mut().enumerate() {
                        let u = (col + rect.x0) as f64 + du;
                        let qz = mm[6] * u + r2;
                        let s = k_ray / qz;
                        if s > 0.0 {
                            let qx = mm[0] * u + r0;
                            let qy = mm[3] * u + r1;
                            *px += self.texture.sample(base.x + s * qx, base.y + s * qy);
                        }
                    }
                }
            }
            let norm = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f32;
            for px in out.iter_mut() {
                *px *= norm;
            }
        });
        GrayFrame::new(cam.width, cam.height, data)
            .expect("buffer sized from intrinsics")
            .quantized()
    }
}

/// A simulated recording; frames are rendered lazily.
#[derive(Clone, Debug)]
pub struct SimulatedSequence {
    pub intrinsics: CameraIntrinsics,
    pub frame_times: Vec<Timestamp>,
    pub gyro: Vec<ImuSample>,
    pub accel: Vec<ImuSample>,
    pub oracle: OracleBundle,
    renderer: Renderer,
}

impl SimulatedSequence {
    pub fn geometry(&self) -> &SceneGeometry {
        self.renderer.geometry()
    }

    pub fn frame_count(&self) -> usize {
        self.frame_times.len()
    }

    pub fn frame(&self, k: usize) -> GrayFrame {
        self.renderer.render(self.frame_times[k].secs())
    }

    pub fn render_at(&self, t: f64) -> GrayFrame {
        self.renderer.render(t)
    }

    /// Frame `k` drawn only around the true image of a square patch of side
    /// `patch` px centered on the fixation point, padded by `margin` px.
    pub fn frame_around_patch(&self, k: usize, patch: f64, margin: f64) -> GrayFrame {
        let t = self.frame_times[k].secs();
        let c = self.fixation_px();
        let h = 0.5 * patch;
        let r = self.geometry().kinematics(t).rotation.inverse();
        let warp = &self.oracle.warps[k];
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for (dx, dy) in [(-h, -h), (h, -h), (-h, h), (h, h)] {
            let x = warp.apply(self.intrinsics.to_calibrated(c + Vec2::new(dx, dy)));
            let xc = r * Vec3::new(x.x, x.y, 1.0);
            if xc.z <= 0.0 {
                return self.frame(k);
            }
            let p = self.intrinsics.to_pixel(Vec2::new(xc.x / xc.z, xc.y / xc.z));
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
        let rect = PixelRect {
            x0: (lo.x - margin).floor().max(0.0) as usize,
            y0: (lo.y - margin).floor().max(0.0) as usize,
            x1: (hi.x + margin).ceil().max(0.0) as usize + 1,
            y1: (hi.y + margin).ceil().max(0.0) as usize + 1,
        };
        self.renderer.render_region(t, Some(rect))
    }

    /// Patch center in first-frame pixels.
    pub fn fixation_px(&self) -> Vec2 {
        self.intrinsics.to_pixel(self.geometry().fixation_origin())
    }
}

impl FrameSource for SimulatedSequence {
    fn len(&self) -> usize {
        self.frame_count()
    }

    fn time(&self, k: usize) -> Timestamp {
        self.frame_times[k]
    }

    fn frame(&self, k: usize) -> Result<GrayFrame> {
        Ok(SimulatedSequence::frame(self, k))
    }
}

/// Frames drawn only around the true patch location, see
/// [`SimulatedSequence::frame_around_patch`].
pub struct PatchRegionFrames<'a> {
    pub sequence: &'a SimulatedSequence,
    pub patch: f64,
    pub margin: f64,
}

impl FrameSource for PatchRegionFrames<'_> {
    fn len(&self) -> usize {
        self.sequence.frame_count()
    }

    fn time(&self, k: usize) -> Timestamp {
        self.sequence.frame_times[k]
    }

    fn frame(&self, k: usize) -> Result<GrayFrame> {
        Ok(self.sequence.frame_around_patch(k, self.patch, self.margin))
    }
}

/// Builds a sequence, checking the scenario stays valid over its duration.
pub fn simulate(
    scene: &PlanarScene,
    spec: &TrajectorySpec,
    rates: &SimRates,
    intrinsics: &CameraIntrinsics,
) -> Result<SimulatedSequence> {
    spec.validate()?;
    rates.validate()?;
    let geometry = SceneGeometry::new(scene, &spec.motion, *intrinsics)?;
    check_scenario(&geometry, spec)?;

    let frame_times = sample_times(rates.frame, spec.duration, false);
    if frame_times.len() < 2 {
        return input("scenario is too short for two frames");
    }
    let margin = 0.5 * intrinsics.width.min(intrinsics.height) as f64 * 0.1;
    for &t in &frame_times {
        let k = geometry.kinematics(t.secs());
        let xc = k.rotation.inverse() * geometry.relative_point(t.secs())[0];
        let px = intrinsics.to_pixel(Vec2::new(xc.x / xc.z, xc.y / xc.z));
        if !(xc.z > 0.0
            && px.x >= margin
            && px.y >= margin
            && px.x <= intrinsics.width as f64 - 1.0 - margin
            && px.y <= intrinsics.height as f64 - 1.0 - margin)
        {
            return Err(Error::Scenario(format!(
                "fixation point leaves the field of view at t = {t} (pixel {:.1}, {:.1})",
                px.x, px.y
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gyro_noise = Normal::new(0.0, spec.gyro_noise).map_err(|e| Error::Input(e.to_string()))?;
    let accel_noise = Normal::new(0.0, spec.accel_noise).map_err(|e| Error::Input(e.to_string()))?;
    let gyro_bias = Vec3::from(spec.gyro_bias);
    let accel_bias = Vec3::from(spec.accel_bias);
    let g = spec.gravity();

    let gyro_times = sample_times(rates.gyro, spec.duration, true);
    let mut gyro = Vec::with_capacity(gyro_times.len());
    let mut orientation = Vec::with_capacity(gyro_times.len());
    for &t in &gyro_times {
        let k = geometry.kinematics(t.secs());
        let noise = Vec3::from_fn(|_, _| gyro_noise.sample(&mut rng));
        gyro.push(ImuSample {
            t,
            gyro: k.omega + gyro_bias + noise,
            accel: Vec3::zeros(),
        });
        orientation.push((t, k.rotation));
    }

    let accel_times = sample_times(rates.accel, spec.duration, true);
    let mut accel = Vec::with_capacity(accel_times.len());
    let mut accel_fixed = Vec::with_capacity(accel_times.len());
    for &t in &accel_times {
        let k = geometry.kinematics(t.secs());
        let noise = Vec3::from_fn(|_, _| accel_noise.sample(&mut rng));
        accel.push(ImuSample {
            t,
            gyro: Vec3::zeros(),
            accel: k.rotation.inverse() * (k.acceleration + g) + accel_bias + noise,
        });
        accel_fixed.push(StampedVec3::new(t, -k.acceleration));
    }

    let truth_points = sample_times(rates.truth, spec.duration, true)
        .into_iter()
        .map(|t| StampedVec3::new(t, geometry.kinematics(t.secs()).position))
        .collect();
    let truth = Trajectory::new(TrajectoryKind::GroundTruth, truth_points)?;

    let foc: Vec<FocSample> = frame_times
        .iter()
        .map(|&t| FocSample {
            t,
            foc: geometry.foc(t.secs()),
            point: geometry.fixation_image(t.secs()),
        })
        .collect();
    let tau = foc.iter().map(FocSample::tau).collect();
    let warps = frame_times
        .iter()
        .map(|&t| AffineWarp {
            t,
            ..geometry.warp(t.secs())
        })
        .collect();

    let renderer = Renderer::new(geometry, &scene.texture)?;
    Ok(SimulatedSequence {
        intrinsics: *intrinsics,
        frame_times,
        gyro,
        accel,
        oracle: OracleBundle {
            foc,
            tau,
            warps,
            truth,
            accel_fixed,
            orientation,
        },
        renderer,
    })
}

/// Densely checks the fixation depth against the margin.
fn check_scenario(geometry: &SceneGeometry, spec: &TrajectorySpec) -> Result<()> {
    let n = (spec.duration * 1000.0).ceil() as usize;
    for i in 0..=n {
        let t = (i as f64 / 1000.0).min(spec.duration);
        let z = geometry.depth(t);
        if !(z >= spec.z_margin) {
            return Err(Error::Scenario(format!(
                "fixation depth {z:.3} m below margin {} m at t = {t:.3} s",
                spec.z_margin
            )));
        }
    }
    Ok(())
}

/// `F` at time `t` for a scene/trajectory pair.
pub fn oracle_foc(spec: &TrajectorySpec, scene: &PlanarScene, intrinsics: &CameraIntrinsics, t: f64) -> Result<Vec3> {
    if !(0.0..=spec.duration).contains(&t) {
        return input(format!("t = {t} outside [0, {}]", spec.duration));
    }
    Ok(SceneGeometry::new(scene, &spec.motion, *intrinsics)?.foc(t))
}
