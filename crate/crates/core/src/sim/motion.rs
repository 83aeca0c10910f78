//! Closed-form camera motion: per-axis sinusoids plus linear drift.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::model::{Rotation, Vec3};

/// `amplitude · sin(2π freq t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub freq: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, freq: f64, phase: f64) -> Self {
        Sinusoid {
            amplitude,
            freq,
            phase,
        }
    }

    /// Value and first three time derivatives.
    pub fn derivatives(&self, t: f64) -> [f64; 4] {
        let w = 2.0 * PI * self.freq;
        let (s, c) = (w * t + self.phase).sin_cos();
        let a = self.amplitude;
        [a * s, a * w * c, -a * w * w * s, -a * w * w * w * c]
    }
}

/// One coordinate: `offset + drift t + Σ sinusoids`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisMotion {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub terms: Vec<Sinusoid>,
}

impl AxisMotion {
    pub fn still() -> Self {
        Self::default()
    }

    pub fn drift(rate: f64) -> Self {
        AxisMotion {
            drift: rate,
            ..Default::default()
        }
    }

    pub fn sinusoid(amplitude: f64, freq: f64, phase: f64) -> Self {
        AxisMotion {
            terms: vec![Sinusoid::new(amplitude, freq, phase)],
            ..Default::default()
        }
    }

    fn oscillation(&self, t: f64) -> [f64; 4] {
        self.terms.iter().fold([0.0; 4], |mut acc, s| {
            for (a, d) in acc.iter_mut().zip(s.derivatives(t)) {
                *a += d;
            }
            acc
        })
    }

    fn is_excited(&self) -> bool {
        self.terms.iter().any(|s| s.amplitude != 0.0 && s.freq != 0.0)
    }
}

/// Interval during which translational sinusoids are switched off, with
/// C²-smooth quintic ramps of length `ramp` on both sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuietSpan {
    pub start: f64,
    pub duration: f64,
    #[serde(default = "default_ramp")]
    pub ramp: f64,
}

fn default_ramp() -> f64 {
    0.5
}

/// Quintic smoothstep and its first two derivatives on `[0, 1]`.
fn smoothstep(x: f64) -> [f64; 3] {
    if x <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if x >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let x2 = x * x;
    [
        x2 * x * (10.0 - 15.0 * x + 6.0 * x2),
        30.0 * x2 * (1.0 - x) * (1.0 - x),
        60.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
    ]
}

impl QuietSpan {
    /// Envelope `m(t)` (1 outside, 0 inside) with `ṁ`, `m̈`.
    pub fn envelope(&self, t: f64) -> [f64; 3] {
        let r = self.ramp.max(1e-9);
        let end = self.start + self.duration;
        if t < self.start {
            let [s, ds, dds] = smoothstep((self.start - t) / r);
            [s, -ds / r, dds / (r * r)]
        } else if t > end {
            let [s, ds, dds] = smoothstep((t - end) / r);
            [s, ds / r, dds / (r * r)]
        } else {
            [0.0, 0.0, 0.0]
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.start + self.duration
    }
}

/// Camera position (world = start-of-service frame) and orientation as closed
/// functions of time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    #[serde(default)]
    pub position: [AxisMotion; 3],
    /// Rotation vector components; the value at `t = 0` is subtracted so the
    /// camera starts at identity orientation.
    #[serde(default)]
    pub rotation: [AxisMotion; 3],
    #[serde(default)]
    pub quiet: Option<QuietSpan>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub rotation: Rotation,
    /// Body-frame angular velocity.
    pub omega: Vec3,
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Right Jacobian of SO(3): `ω_body = J_r(θ) θ̇` for `R = exp(θ)`.
fn right_jacobian(theta: &Vec3) -> Matrix3<f64> {
    let a = theta.norm();
    let k = skew(theta);
    if a < 1e-6 {
        return Matrix3::identity() - 0.5 * k + k * k / 6.0;
    }
    Matrix3::identity() - (1.0 - a.cos()) / (a * a) * k + (a - a.sin()) / (a * a * a) * (k * k)
}

impl MotionSpec {
    pub fn position_derivatives(&self, t: f64) -> [Vec3; 4] {
        let env = self.quiet.map(|q| q.envelope(t)).unwrap_or([1.0, 0.0, 0.0]);
        let mut out = [Vec3::zeros(); 4];
        for (i, axis) in self.position.iter().enumerate() {
            let [s, ds, dds, ddds] = axis.oscillation(t);
            let [m, dm, ddm] = env;
            out[0][i] = axis.offset + axis.drift * t + m * s;
            out[1][i] = axis.drift + dm * s + m * ds;
            out[2][i] = ddm * s + 2.0 * dm * ds + m * dds;
            // jerk is only exact outside the ramps; used for diagnostics
            out[3][i] = m * ddds + 3.0 * dm * dds + 3.0 * ddm * ds;
        }
        out
    }

    fn rotation_vector(&self, t: f64) -> (Vec3, Vec3) {
        let mut theta = Vec3::zeros();
        let mut rate = Vec3::zeros();
        for (i, axis) in self.rotation.iter().enumerate() {
            let [s, ds, _, _] = axis.oscillation(t);
            let [s0, _, _, _] = axis.oscillation(0.0);
            theta[i] = axis.drift * t + s - s0;
            rate[i] = axis.drift + ds;
        }
        (theta, rate)
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        let [p, v, a, _] = self.position_derivatives(t);
        let (theta, rate) = self.rotation_vector(t);
        Kinematics {
            position: p,
            velocity: v,
            acceleration: a,
            rotation: Rotation::from_scaled_axis(theta),
            omega: right_jacobian(&theta) * rate,
        }
    }

    pub fn translation_excited(&self) -> [bool; 3] {
        [0, 1, 2].map(|i| self.position[i].is_excited())
    }
}
