//! Affine warps, the affine flow they induce, and frequency-of-contact.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix3};

use crate::error::{Error, Result};
use crate::model::{FocSample, Timestamp, Vec2, Vec3};

/// 2x3 affine map on homogeneous calibrated coordinates, row-major
/// `[w1 w2 w3; w4 w5 w6]`, taking template locations to current locations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineWarp {
    pub w: [f64; 6],
    pub t: Timestamp,
}

impl AffineWarp {
    pub fn identity(t: Timestamp) -> Self {
        AffineWarp {
            w: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            t,
        }
    }

    pub fn from_matrix(m: &Matrix3<f64>, t: Timestamp) -> Self {
        AffineWarp {
            w: [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            t,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let w = &self.w;
        Matrix3::new(w[0], w[1], w[2], w[3], w[4], w[5], 0.0, 0.0, 1.0)
    }

    pub fn linear(&self) -> Matrix2<f64> {
        Matrix2::new(self.w[0], self.w[1], self.w[3], self.w[4])
    }

    pub fn det(&self) -> f64 {
        self.w[0] * self.w[4] - self.w[1] * self.w[3]
    }

    pub fn apply(&self, x: Vec2) -> Vec2 {
        let w = &self.w;
        Vec2::new(
            w[0] * x.x + w[1] * x.y + w[2],
            w[3] * x.x + w[4] * x.y + w[5],
        )
    }

    pub fn max_abs_diff(&self, other: &AffineWarp) -> f64 {
        self.w
            .iter()
            .zip(&other.w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Affine flow `u = A x` with `A = [a1 a2 a3; a4 a5 a6; 0 0 0]` (1/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineFlow {
    pub a: [f64; 6],
    pub t: Timestamp,
}

impl AffineFlow {
    pub fn zero(t: Timestamp) -> Self {
        AffineFlow { a: [0.0; 6], t }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &AffineFlow) -> f64 {
        self.a
            .iter()
            .zip(&other.a)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Flow induced by relative velocity `xdot` (scene point w.r.t. camera) on
    /// the plane `1/Z = n·x`, dropping the quadratic term.
    pub fn from_motion(xdot: &Vec3, n: &Vec3, t: Timestamp) -> Self {
        AffineFlow {
            a: [
                xdot.x * n.x - xdot.z * n.z,
                xdot.x * n.y,
                xdot.x * n.z,
                xdot.y * n.x,
                xdot.y * n.y - xdot.z * n.z,
                xdot.y * n.z,
            ],
            t,
        }
    }
}

/// Backward finite difference `A ≈ (W(t) - W(t-T)) W(t)^-1 / T`.
pub fn warp_to_flow(current: &AffineWarp, previous: &AffineWarp, baseline_s: f64) -> Result<AffineFlow> {
    if !(baseline_s > 0.0) {
        return Err(Error::Input(format!("flow baseline must be positive, got {baseline_s}")));
    }
    let det = current.det();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::Degenerate(format!("warp at {} is singular (det {det:e})", current.t)));
    }
    let inv = current
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("warp at {} is not invertible", current.t)))?;
    let a = (current.matrix() - previous.matrix()) * inv / baseline_s;
    Ok(AffineFlow {
        a: [a[(0, 0)], a[(0, 1)], a[(0, 2)], a[(1, 0)], a[(1, 1)], a[(1, 2)]],
        t: current.t,
    })
}

/// Central estimate of the flow halfway between two warps,
/// `A ≈ (W(t) - W(t-T)) W̄^-1 / T` with `W̄` their average. Returns the flow
/// stamped at the midpoint together with `W̄`.
pub fn warp_midpoint_flow(
    current: &AffineWarp,
    previous: &AffineWarp,
    baseline_s: f64,
) -> Result<(AffineFlow, AffineWarp)> {
    if !(baseline_s > 0.0) {
        return Err(Error::Input(format!("flow baseline must be positive, got {baseline_s}")));
    }
    let mid_t = Timestamp::from_nanos(previous.t.nanos() + current.t.nanos().saturating_sub(previous.t.nanos()) / 2);
    let mut w = [0.0; 6];
    for (m, (a, b)) in w.iter_mut().zip(current.w.iter().zip(&previous.w)) {
        *m = 0.5 * (a + b);
    }
    let mid = AffineWarp { w, t: mid_t };
    let det = mid.det();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::Degenerate(format!("mean warp at {mid_t} is singular (det {det:e})")));
    }
    let inv = mid
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("mean warp at {mid_t} is not invertible")))?;
    let a = (current.matrix() - previous.matrix()) * inv / baseline_s;
    Ok((
        AffineFlow {
            a: [a[(0, 0)], a[(0, 1)], a[(0, 2)], a[(1, 0)], a[(1, 1)], a[(1, 2)]],
            t: mid_t,
        },
        mid,
    ))
}

/// Recovers `F = Ẋ/Z` at the calibrated image location `point` from affine
/// flow parameters.
///
/// The ratio `a4 a3 / a6` and its twin `a2 a6 / a3` are taken from whichever
/// of `a3`, `a6` is larger in magnitude. When both vanish (below `ratio_eps`)
/// the motion is purely axial and `F_z` falls back to the divergence
/// `-(a1 + a5)/2`, with all ratio terms zeroed.
pub fn flow_to_foc(flow: &AffineFlow, point: Vec2, ratio_eps: f64) -> Result<FocSample> {
    if !flow.is_finite() {
        return Err(Error::Degenerate(format!("non-finite flow at {}", flow.t)));
    }
    let [a1, a2, a3, a4, a5, a6] = flow.a;
    let (x, y) = (point.x, point.y);
    // m11 = Ẋ n_x, m22 = Ẏ n_y, eta = Ż n_z, (nx, ny) = (n_x, n_y) / n_z
    let (m11, m22, eta, nx, ny) = if a3.abs().max(a6.abs()) < ratio_eps {
        if (a1 - a5).abs() > ratio_eps {
            return Err(Error::Degenerate(format!(
                "translational flow vanishes at {} but a1 - a5 = {:e}",
                flow.t,
                a1 - a5
            )));
        }
        (0.0, 0.0, -0.5 * (a1 + a5), 0.0, 0.0)
    } else if a6.abs() >= a3.abs() {
        let m11 = a4 * a3 / a6;
        let eta = m11 - a1;
        (m11, a5 + eta, eta, a4 / a6, (a5 + eta) / a6)
    } else {
        let m22 = a2 * a6 / a3;
        let eta = m22 - a5;
        (a1 + eta, m22, eta, (a1 + eta) / a3, a2 / a3)
    };
    let foc = Vec3::new(
        m11 * x + a2 * y + a3,
        a4 * x + m22 * y + a6,
        eta * (nx * x + ny * y + 1.0),
    );
    Ok(FocSample {
        t: flow.t,
        foc,
        point,
    })
}

/// Componentwise median over the last three flows.
#[derive(Clone, Debug, Default)]
pub struct FlowMedianFilter {
    history: VecDeque<AffineFlow>,
}

impl FlowMedianFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, flow: AffineFlow) -> AffineFlow {
        self.history.push_back(flow);
        if self.history.len() > 3 {
            self.history.pop_front();
        }
        if self.history.len() < 3 {
            return flow;
        }
        let mut out = flow;
        for (i, slot) in out.a.iter_mut().enumerate() {
            let mut v = [self.history[0].a[i], self.history[1].a[i], self.history[2].a[i]];
            v.sort_by(f64::total_cmp);
            *slot = v[1];
        }
        out
    }
}
