//! Open-loop gyro integration into the start-of-service orientation.

use nalgebra::Matrix3;

use crate::error::{input, Error, Result};
use crate::model::{ImuSample, Rotation, StampedVec3, Timestamp, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GyroBias {
    None,
    Constant(Vec3),
    /// Mean gyro reading over the first `seconds` of the stream.
    Stationary { seconds: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GyroIntegration {
    pub bias: GyroBias,
    /// Largest plausible angular rate (rad/s); faster steps are rejected.
    pub max_rate: f64,
}

impl Default for GyroIntegration {
    fn default() -> Self {
        GyroIntegration {
            bias: GyroBias::None,
            max_rate: 10.0,
        }
    }
}

/// Body-to-fixed rotations at the gyro sample times, identity at the first.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationTrack {
    samples: Vec<(Timestamp, Rotation)>,
}

impl OrientationTrack {
    pub fn samples(&self) -> &[(Timestamp, Rotation)] {
        &self.samples
    }

    pub fn start(&self) -> Timestamp {
        self.samples[0].0
    }

    pub fn end(&self) -> Timestamp {
        self.samples[self.samples.len() - 1].0
    }

    /// Spherical interpolation between the bracketing samples.
    pub fn at(&self, t: Timestamp) -> Result<Rotation> {
        let (start, end) = (self.start(), self.end());
        if t < start || t > end {
            return Err(Error::OutOfRange { t, start, end });
        }
        let hi = self.samples.partition_point(|(ts, _)| *ts < t);
        let (t1, r1) = self.samples[hi];
        if t1 == t || hi == 0 {
            return Ok(r1);
        }
        let (t0, r0) = self.samples[hi - 1];
        let alpha = (t.nanos() - t0.nanos()) as f64 / (t1.nanos() - t0.nanos()) as f64;
        Ok(r0.slerp(&r1, alpha))
    }

    /// Re-expresses the track relative to the orientation at `t0`, so that
    /// `R(t0)` becomes identity.
    pub fn rebased_at(&self, t0: Timestamp) -> Result<OrientationTrack> {
        let inv = self.at(t0)?.inverse();
        Ok(OrientationTrack {
            samples: self
                .samples
                .iter()
                .map(|(t, r)| {
                    let mut q = inv * r;
                    q.renormalize();
                    (*t, q)
                })
                .collect(),
        })
    }
}

pub fn estimate_gyro_bias(gyro: &[ImuSample], seconds: f64) -> Result<Vec3> {
    let Some(first) = gyro.first() else {
        return input("empty gyro stream");
    };
    let horizon = first.t.add_nanos((seconds.max(0.0) * 1e9) as u64);
    let (sum, n) = gyro
        .iter()
        .take_while(|s| s.t <= horizon)
        .fold((Vec3::zeros(), 0usize), |(acc, n), s| (acc + s.gyro, n + 1));
    if n == 0 {
        return input("no gyro samples inside the stationary interval");
    }
    Ok(sum / n as f64)
}

/// `R(t_{k+1}) = R(t_k) · exp(ω̄ dt)` with `ω̄` the mean of consecutive rates.
pub fn integrate_gyro(gyro: &[ImuSample], opts: &GyroIntegration) -> Result<OrientationTrack> {
    if gyro.len() < 2 {
        return input(format!("gyro integration needs at least 2 samples, got {}", gyro.len()));
    }
    let bias = match opts.bias {
        GyroBias::None => Vec3::zeros(),
        GyroBias::Constant(b) => b,
        GyroBias::Stationary { seconds } => estimate_gyro_bias(gyro, seconds)?,
    };
    let mut samples = Vec::with_capacity(gyro.len());
    let mut r = Rotation::identity();
    samples.push((gyro[0].t, r));
    for w in gyro.windows(2) {
        if w[1].t <= w[0].t {
            return input(format!("gyro timestamps not increasing at {}", w[1].t));
        }
        let dt = w[1].t.secs_since(w[0].t);
        let omega = 0.5 * (w[0].gyro + w[1].gyro) - bias;
        if !omega.iter().all(|c| c.is_finite()) {
            return input(format!("non-finite gyro sample near {}", w[1].t));
        }
        if omega.norm() > opts.max_rate {
            return input(format!(
                "angular rate {:.3} rad/s at {} exceeds sanity bound {}",
                omega.norm(),
                w[1].t,
                opts.max_rate
            ));
        }
        r = r * Rotation::from_scaled_axis(omega * dt);
        r.renormalize();
        samples.push((w[1].t, r));
    }
    Ok(OrientationTrack { samples })
}

/// `a^m(t) = R(t) a^m_c(t)` for every accelerometer sample.
pub fn derotate_accel(accel: &[ImuSample], track: &OrientationTrack) -> Result<Vec<StampedVec3>> {
    accel
        .iter()
        .map(|s| Ok(StampedVec3::new(s.t, track.at(s.t)? * s.accel)))
        .collect()
}

/// Maps homogeneous calibrated coordinates of the current frame into the
/// fixed-orientation virtual camera (`x_fixed ∝ R x_current`).
pub fn derotation_homography(r: &Rotation) -> Matrix3<f64> {
    r.to_rotation_matrix().into_inner()
}

/// Inverse of [`derotation_homography`]: where to look in the current frame
/// for a fixed-frame coordinate.
pub fn lookup_homography(r: &Rotation) -> Matrix3<f64> {
    r.to_rotation_matrix().into_inner().transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn gyro_stream(rate_hz: f64, duration: f64, f: impl Fn(f64) -> Vec3) -> Vec<ImuSample> {
        let n = (duration * rate_hz).round() as usize;
        (0..=n)
            .map(|k| {
                let t = k as f64 / rate_hz;
                ImuSample {
                    t: Timestamp::from_secs(t),
                    gyro: f(t),
                    accel: Vec3::zeros(),
                }
            })
            .collect()
    }

    #[test]
    fn zero_rate_is_identity() {
        let track = integrate_gyro(&gyro_stream(400.0, 1.0, |_| Vec3::zeros()), &Default::default()).unwrap();
        for (_, r) in track.samples() {
            assert_eq!(r.angle(), 0.0);
        }
    }

    #[test]
    fn constant_yaw_half_turn() {
        let track = integrate_gyro(
            &gyro_stream(400.0, 1.0, |_| Vec3::new(0.0, 0.0, PI)),
            &Default::default(),
        )
        .unwrap();
        let end = track.at(Timestamp::from_secs(1.0)).unwrap();
        let expected = Rotation::from_scaled_axis(Vec3::new(0.0, 0.0, PI));
        assert!(end.angle_to(&expected) < 1e-6);
    }

    #[test]
    fn sinusoidal_rate_converges_second_order() {
        // ω_z = sin(2πt), angle(t) = (1 - cos 2πt)/(2π)
        let truth = |t: f64| (1.0 - (2.0 * PI * t).cos()) / (2.0 * PI);
        let err = |rate: f64| {
            let track = integrate_gyro(
                &gyro_stream(rate, 0.8, |t| Vec3::new(0.0, 0.0, (2.0 * PI * t).sin())),
                &Default::default(),
            )
            .unwrap();
            let (_, r) = *track.samples().last().unwrap();
            let got = r.scaled_axis().z;
            (got - truth(0.8)).abs()
        };
        let coarse = err(50.0);
        let fine = err(100.0);
        let ratio = coarse / fine;
        assert!(coarse < 1e-3, "{coarse}");
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn split_integration_composes() {
        let f = |t: f64| Vec3::new(0.3 * (3.0 * t).sin(), -0.2, 0.5 * (t * 7.0).cos());
        let whole = gyro_stream(400.0, 2.0, f);
        let mid = whole.len() / 2;
        let a = integrate_gyro(&whole[..=mid], &Default::default()).unwrap();
        let b = integrate_gyro(&whole[mid..], &Default::default()).unwrap();
        let full = integrate_gyro(&whole, &Default::default()).unwrap();
        let composed = a.samples().last().unwrap().1 * b.samples().last().unwrap().1;
        assert!(composed.angle_to(&full.samples().last().unwrap().1) < 1e-9);
    }

    #[test]
    fn single_sample_is_rejected() {
        let one = gyro_stream(400.0, 0.0, |_| Vec3::zeros());
        assert!(integrate_gyro(&one, &Default::default()).is_err());
        assert!(integrate_gyro(&[], &Default::default()).is_err());
    }

    #[test]
    fn rate_sanity_bound() {
        let fast = gyro_stream(400.0, 0.1, |_| Vec3::new(20.0, 0.0, 0.0));
        assert!(integrate_gyro(&fast, &Default::default()).is_err());
    }

    #[test]
    fn stationary_bias_removed() {
        let bias = Vec3::new(0.01, -0.02, 0.005);
        let stream = gyro_stream(400.0, 2.0, |_| bias);
        let opts = GyroIntegration {
            bias: GyroBias::Stationary { seconds: 0.5 },
            ..Default::default()
        };
        let track = integrate_gyro(&stream, &opts).unwrap();
        assert!(track.samples().last().unwrap().1.angle() < 1e-12);
        let raw = integrate_gyro(&stream, &Default::default()).unwrap();
        assert_abs_diff_eq!(raw.samples().last().unwrap().1.angle(), bias.norm() * 2.0, epsilon = 1e-9);
    }

    #[test]
    fn derotation_preserves_norm_and_identity() {
        let gyro = gyro_stream(400.0, 1.0, |t| Vec3::new(0.4, (2.0 * t).sin(), -0.3));
        let track = integrate_gyro(&gyro, &Default::default()).unwrap();
        let accel: Vec<_> = (0..=250)
            .map(|k| ImuSample {
                t: Timestamp::from_secs(k as f64 / 250.0),
                gyro: Vec3::zeros(),
                accel: Vec3::new(0.3, -9.81 + k as f64 * 0.01, 1.2),
            })
            .collect();
        let out = derotate_accel(&accel, &track).unwrap();
        for (a, b) in accel.iter().zip(&out) {
            assert!((a.accel.norm() - b.v.norm()).abs() <= 1e-9 * a.accel.norm());
        }
        let still = integrate_gyro(&gyro_stream(400.0, 1.0, |_| Vec3::zeros()), &Default::default()).unwrap();
        let same = derotate_accel(&accel, &still).unwrap();
        for (a, b) in accel.iter().zip(&same) {
            assert_eq!(a.accel, b.v);
        }
    }

    #[test]
    fn derotation_out_of_span() {
        let track = integrate_gyro(&gyro_stream(400.0, 1.0, |_| Vec3::zeros()), &Default::default()).unwrap();
        let late = [ImuSample {
            t: Timestamp::from_secs(1.5),
            gyro: Vec3::zeros(),
            accel: Vec3::x(),
        }];
        assert!(matches!(derotate_accel(&late, &track), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn homography_identity_and_roll() {
        assert_eq!(derotation_homography(&Rotation::identity()), Matrix3::identity());
        let theta = 0.3;
        let roll = Rotation::from_scaled_axis(Vec3::new(0.0, 0.0, theta));
        // A camera rolled by θ sees the world rotated by -θ; the derotation
        // homography rotates current-frame coordinates back by +θ and the
        // lookup homography reproduces the apparent -θ.
        let h = derotation_homography(&roll);
        let p = h * Vec3::new(1.0, 0.0, 1.0);
        assert_abs_diff_eq!(p.y.atan2(p.x), theta, epsilon = 1e-12);
        let l = lookup_homography(&roll);
        let q = l * Vec3::new(1.0, 0.0, 1.0);
        assert_abs_diff_eq!(q.y.atan2(q.x), -theta, epsilon = 1e-12);
        assert_abs_diff_eq!(h * l, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn rebase_makes_reference_identity() {
        let gyro = gyro_stream(400.0, 1.0, |_| Vec3::new(0.2, 0.1, 0.0));
        let track = integrate_gyro(&gyro, &Default::default()).unwrap();
        let t0 = Timestamp::from_secs(0.25);
        let rebased = track.rebased_at(t0).unwrap();
        assert!(rebased.at(t0).unwrap().angle() < 1e-12);
    }
}
