//! Inverse-compositional Lucas-Kanade tracking of one planar patch with an
//! affine warp, on gyro-derotated coordinates.
//!
//! Warps act on calibrated coordinates of the start-of-service virtual camera.
//! Internally the optimization runs on pixel offsets from the patch center so
//! that translation and linear parameters are comparably scaled.

use nalgebra::{Matrix3, Matrix6, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::derotation::lookup_homography;
use crate::error::{Error, Result};
use crate::flow::AffineWarp;
use crate::image::GrayFrame;
use crate::model::{CameraIntrinsics, Rotation, Timestamp, Vec2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackerConfig {
    /// Side of the square template box in pixels.
    pub patch_size: u32,
    /// Template pixels kept after sub-sampling.
    pub samples: usize,
    pub max_iters: usize,
    /// Convergence threshold on the parameter update norm.
    pub update_tol: f64,
    /// Smallest admissible determinant of the warp's linear part.
    pub det_min: f64,
    /// Fraction of template pixels that must land inside the frame.
    pub min_visible: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            patch_size: 100,
            samples: 4000,
            max_iters: 50,
            update_tol: 1e-4,
            det_min: 1e-6,
            min_visible: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct TemplatePixel {
    /// Offset from the patch center (pixels of frame 0).
    u: Vec2,
    value: f64,
    /// Steepest-descent row `∇T · ∂W/∂p`.
    sd: Vector6<f64>,
}

const SAMPLE_SEED: u64 = 0x7a11;

/// Reference intensities and precomputed steepest-descent data from frame 0.
#[derive(Clone, Debug)]
pub struct PatchTemplate {
    intrinsics: CameraIntrinsics,
    /// Patch center, calibrated coordinates.
    center: Vec2,
    pixels: Vec<TemplatePixel>,
    hessian: Matrix6<f64>,
    hessian_inv: Matrix6<f64>,
}

impl PatchTemplate {
    /// Builds the template from the first frame. The first frame defines the
    /// fixed orientation, so no derotation is applied here.
    pub fn from_frame(
        frame: &GrayFrame,
        intrinsics: &CameraIntrinsics,
        center_px: Vec2,
        cfg: &TrackerConfig,
    ) -> Result<Self> {
        if frame.width() != intrinsics.width || frame.height() != intrinsics.height {
            return Err(Error::Input(format!(
                "frame is {}x{}, intrinsics say {}x{}",
                frame.width(),
                frame.height(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        if cfg.samples < 6 {
            return Err(Error::Input(format!("template needs at least 6 pixels, got {}", cfg.samples)));
        }
        let size = cfg.patch_size as i64;
        let x0 = (center_px.x - (size - 1) as f64 / 2.0).round() as i64;
        let y0 = (center_px.y - (size - 1) as f64 / 2.0).round() as i64;
        if x0 < 1
            || y0 < 1
            || x0 + size + 1 > frame.width() as i64
            || y0 + size + 1 > frame.height() as i64
        {
            return Err(Error::Input(format!(
                "{size}px patch at ({:.1}, {:.1}) does not fit inside the first frame",
                center_px.x, center_px.y
            )));
        }
        let total = (size * size) as usize;
        let keep = cfg.samples.min(total);
        let mut pixels = Vec::with_capacity(keep);
        let mut hessian = Matrix6::zeros();
        // Fixed-seed draw without replacement; a raster stride aliases with
        // periodic textures and can miss every edge.
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        let mut picks = rand::seq::index::sample(&mut rng, total, keep).into_vec();
        picks.sort_unstable();
        for idx in picks {
            let px = (x0 + (idx as i64 % size)) as u32;
            let py = (y0 + (idx as i64 / size)) as u32;
            let (gx, gy) = frame.gradient(px, py).expect("interior pixel");
            let u = Vec2::new(px as f64 - center_px.x, py as f64 - center_px.y);
            let sd = Vector6::new(gx * u.x, gx * u.y, gx, gy * u.x, gy * u.y, gy);
            hessian += sd * sd.transpose();
            pixels.push(TemplatePixel {
                u,
                value: frame.pixel(px, py) as f64,
                sd,
            });
        }
        let hessian_inv = hessian
            .try_inverse()
            .filter(|h| h.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Degenerate("template has no usable texture".into()))?;
        Ok(PatchTemplate {
            intrinsics: *intrinsics,
            center: intrinsics.to_calibrated(center_px),
            pixels,
            hessian,
            hessian_inv,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Patch center in calibrated coordinates of the fixed frame at `t = 0`.
    pub fn center(&self) -> Vec2 {
        self.center
    }

    /// Template pixel offsets (pixels) and their reference intensities.
    pub fn pixels(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        self.pixels.iter().map(|p| (p.u, p.value))
    }

    /// Maps pixel offsets to calibrated template coordinates.
    fn offset_to_calibrated(&self) -> Matrix3<f64> {
        let k = &self.intrinsics;
        Matrix3::new(
            1.0 / k.fx,
            0.0,
            self.center.x,
            0.0,
            1.0 / k.fy,
            self.center.y,
            0.0,
            0.0,
            1.0,
        )
    }

    fn to_local(&self, warp: &AffineWarp) -> Matrix3<f64> {
        let n = self.offset_to_calibrated();
        let n_inv = n.try_inverse().expect("diagonal scaling");
        n_inv * warp.matrix() * n
    }

    fn from_local(&self, local: &Matrix3<f64>, t: Timestamp) -> AffineWarp {
        let n = self.offset_to_calibrated();
        let n_inv = n.try_inverse().expect("diagonal scaling");
        AffineWarp::from_matrix(&(n * local * n_inv), t)
    }

    /// Fixation point: the patch center carried by `warp`.
    pub fn fixation_point(&self, warp: &AffineWarp) -> Vec2 {
        warp.apply(self.center)
    }
}

#[derive(Clone, Debug)]
pub struct TrackResult {
    pub warp: AffineWarp,
    pub iterations: usize,
    pub converged: bool,
    /// Mean squared residual after each accepted (improving) iterate,
    /// starting with the warm start.
    pub accepted_residuals: Vec<f64>,
}

impl TrackResult {
    pub fn rms(&self) -> f64 {
        self.accepted_residuals.last().copied().unwrap_or(0.0).sqrt()
    }
}

struct Evaluation {
    mse: f64,
    visible: usize,
    gradient: Vector6<f64>,
    hidden_hessian: Matrix6<f64>,
}

pub struct AffineTracker {
    template: PatchTemplate,
    cfg: TrackerConfig,
}

impl AffineTracker {
    pub fn new(template: PatchTemplate, cfg: TrackerConfig) -> Self {
        AffineTracker { template, cfg }
    }

    pub fn template(&self) -> &PatchTemplate {
        &self.template
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    fn evaluate(&self, frame: &GrayFrame, local: &Matrix3<f64>, lookup: &Matrix3<f64>) -> Evaluation {
        let k = &self.template.intrinsics;
        let kmat = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
        // offset -> calibrated template -> fixed frame -> current camera -> pixel
        let g = kmat * lookup * self.template.offset_to_calibrated() * local;
        let mut sse = 0.0;
        let mut visible = 0usize;
        let mut gradient = Vector6::zeros();
        let mut hidden_hessian = Matrix6::zeros();
        for p in &self.template.pixels {
            let hx = g[(0, 0)] * p.u.x + g[(0, 1)] * p.u.y + g[(0, 2)];
            let hy = g[(1, 0)] * p.u.x + g[(1, 1)] * p.u.y + g[(1, 2)];
            let hz = g[(2, 0)] * p.u.x + g[(2, 1)] * p.u.y + g[(2, 2)];
            let sample = if hz > 0.0 {
                frame.bilinear(hx / hz, hy / hz)
            } else {
                None
            };
            match sample {
                Some(v) => {
                    let e = v - p.value;
                    sse += e * e;
                    gradient += p.sd * e;
                    visible += 1;
                }
                None => hidden_hessian += p.sd * p.sd.transpose(),
            }
        }
        Evaluation {
            mse: if visible > 0 { sse / visible as f64 } else { f64::INFINITY },
            visible,
            gradient,
            hidden_hessian,
        }
    }

    /// Fits the warp for one frame, warm-started from `prev`. `rotation` is the
    /// body-to-fixed orientation at the frame time.
    pub fn track_frame(
        &self,
        frame: &GrayFrame,
        t: Timestamp,
        rotation: &Rotation,
        prev: &AffineWarp,
    ) -> Result<TrackResult> {
        let k = &self.template.intrinsics;
        if frame.width() != k.width || frame.height() != k.height {
            return Err(Error::Input(format!(
                "frame is {}x{}, expected {}x{}",
                frame.width(),
                frame.height(),
                k.width,
                k.height
            )));
        }
        let lost = |reason: String| Error::TrackingLost { t, reason };
        let lookup = lookup_homography(rotation);
        let min_visible = (self.cfg.min_visible * self.template.len() as f64).ceil() as usize;

        let mut local = self.template.to_local(prev);
        let mut best = (local, f64::INFINITY);
        let mut accepted = Vec::new();
        let mut last_mse = f64::INFINITY;
        let mut increases = 0usize;
        let mut iterations = 0usize;
        let mut converged = false;

        while iterations < self.cfg.max_iters {
            let eval = self.evaluate(frame, &local, &lookup);
            if eval.visible < min_visible {
                return Err(lost(format!(
                    "only {}/{} template pixels visible",
                    eval.visible,
                    self.template.len()
                )));
            }
            if eval.mse < best.1 {
                best = (local, eval.mse);
                accepted.push(eval.mse);
            }
            if iterations > 0 && eval.mse > last_mse {
                increases += 1;
            }
            last_mse = eval.mse;

            let hinv = if eval.visible == self.template.len() {
                self.template.hessian_inv
            } else {
                (self.template.hessian - eval.hidden_hessian)
                    .try_inverse()
                    .ok_or_else(|| lost("visible template pixels lost their texture".into()))?
            };
            let dp = hinv * eval.gradient;
            iterations += 1;
            let delta = Matrix3::new(
                1.0 + dp[0],
                dp[1],
                dp[2],
                dp[3],
                1.0 + dp[4],
                dp[5],
                0.0,
                0.0,
                1.0,
            );
            let delta_inv = delta
                .try_inverse()
                .ok_or_else(|| lost("singular incremental warp".into()))?;
            local *= delta_inv;
            if !local.iter().all(|v| v.is_finite()) {
                return Err(lost("warp parameters diverged".into()));
            }
            if dp.norm() < self.cfg.update_tol {
                converged = true;
                break;
            }
        }
        if converged {
            // residual of the final (tiny-step) iterate
            let eval = self.evaluate(frame, &local, &lookup);
            if eval.visible >= min_visible && eval.mse <= best.1 {
                best = (local, eval.mse);
                accepted.push(eval.mse);
            }
        } else if iterations > 1 && increases + 1 >= iterations {
            return Err(lost(format!("photometric residual increased over {iterations} iterations")));
        }

        let warp = self.template.from_local(&best.0, t);
        if warp.det() <= self.cfg.det_min {
            return Err(lost(format!("patch collapsed (det {:e})", warp.det())));
        }
        Ok(TrackResult {
            warp,
            iterations,
            converged,
            accepted_residuals: accepted,
        })
    }
}
