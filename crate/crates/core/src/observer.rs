//! Luenberger observer over depth and depth rate, fed by window solutions and
//! falling back to dead reckoning through `F_z` when no solution qualifies.

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::model::{Timestamp, Vec2, Vec3};
use crate::tau::{window_depth_now, DepthNow, WindowReport, WindowSolution};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObserverMode {
    Measured,
    DeadReckoning,
}

impl ObserverMode {
    pub fn label(self) -> &'static str {
        match self {
            ObserverMode::Measured => "measured",
            ObserverMode::DeadReckoning => "dead-reckoning",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverState {
    pub z: f64,
    pub zdot: f64,
    /// Latest per-axis gravity estimates, fixed frame.
    pub g: Vec3,
    pub t: Timestamp,
    pub mode: ObserverMode,
}

/// Diagonal injection gain `L = diag(l1, l2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverGain {
    l1: f64,
    l2: f64,
}

impl ObserverGain {
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        let gain = ObserverGain { l1, l2 };
        let m = gain.error_dynamics();
        let eig = m.complex_eigenvalues();
        if !eig.iter().all(|l| l.re < 0.0) {
            return Err(Error::Input(format!(
                "observer gain diag({l1}, {l2}) does not give a stable error system"
            )));
        }
        Ok(gain)
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// Error dynamics `ė = (A - L) e` with `A = [[0, 1], [0, 0]]` when both
    /// depth and depth rate are measured.
    pub fn error_dynamics(&self) -> Matrix2<f64> {
        Matrix2::new(-self.l1, 1.0, 0.0, -self.l2)
    }

    /// Decay rate (1/s) of the slowest error mode.
    pub fn slowest_rate(&self) -> f64 {
        self.error_dynamics()
            .complex_eigenvalues()
            .iter()
            .map(|l| -l.re)
            .fold(f64::INFINITY, f64::min)
    }
}

impl Default for ObserverGain {
    fn default() -> Self {
        ObserverGain { l1: 2.0, l2: 20.0 }
    }
}

/// One explicit-Euler step. `a_z` is the fixed-frame accelerometer reading,
/// so the predicted depth acceleration is `-(a_z - g_z)`.
pub fn observer_step(
    state: &ObserverState,
    dt: f64,
    a_z: f64,
    measurement: Option<DepthNow>,
    g_z: f64,
    gain: &ObserverGain,
) -> Result<ObserverState> {
    if !(dt > 0.0) {
        return Err(Error::Input(format!("observer step needs dt > 0, got {dt}")));
    }
    let (inj_z, inj_zdot) = match measurement {
        Some(m) => (gain.l1 * (m.z - state.z), gain.l2 * (m.zdot - state.zdot)),
        None => (0.0, 0.0),
    };
    let z_rate = state.zdot + inj_z;
    let zdot_rate = -(a_z - g_z) + inj_zdot;
    Ok(ObserverState {
        z: state.z + dt * z_rate,
        zdot: state.zdot + dt * zdot_rate,
        g: state.g,
        t: state.t.add_nanos((dt * 1e9).round() as u64),
        mode: if measurement.is_some() {
            ObserverMode::Measured
        } else {
            ObserverMode::DeadReckoning
        },
    })
}

/// `Ẑ ← Ẑ exp(F_z dt)`, `Ẑ̇ ← F_z Ẑ`.
pub fn dead_reckon(state: &ObserverState, fz: f64, dt: f64) -> ObserverState {
    let z = state.z * (fz * dt).exp();
    ObserverState {
        z,
        zdot: fz * z,
        g: state.g,
        t: state.t.add_nanos((dt * 1e9).round() as u64),
        mode: ObserverMode::DeadReckoning,
    }
}

/// Mean of the propagated depths over axes that are posed, valid and pass
/// the excitation gate.
pub fn fuse_axes(
    solutions: &[WindowSolution],
    gated: &[bool],
    phi_end: f64,
    fz_now: f64,
) -> Option<DepthNow> {
    let picks: Vec<DepthNow> = solutions
        .iter()
        .zip(gated)
        .filter(|(s, &g)| s.posed && s.valid && g)
        .filter_map(|(s, _)| window_depth_now(s, phi_end, fz_now).ok())
        .collect();
    if picks.is_empty() {
        return None;
    }
    let n = picks.len() as f64;
    Some(DepthNow {
        z: picks.iter().map(|d| d.z).sum::<f64>() / n,
        zdot: picks.iter().map(|d| d.zdot).sum::<f64>() / n,
    })
}

/// Scene point in the fixed frame from depth and its image location.
pub fn reconstruct_xyz(state: &ObserverState, point: Vec2) -> Vec3 {
    Vec3::new(point.x * state.z, point.y * state.z, state.z)
}

/// Stateful driver: seeds on the first usable window, then alternates between
/// corrected steps and dead reckoning.
#[derive(Clone, Debug)]
pub struct DepthObserver {
    gain: ObserverGain,
    state: Option<ObserverState>,
    gated_g: [Option<f64>; 3],
    posed_g: [Option<f64>; 3],
}

impl DepthObserver {
    pub fn new(gain: ObserverGain) -> Self {
        DepthObserver {
            gain,
            state: None,
            gated_g: [None; 3],
            posed_g: [None; 3],
        }
    }

    pub fn state(&self) -> Option<&ObserverState> {
        self.state.as_ref()
    }

    fn latched_g(&self) -> Vec3 {
        Vec3::from_fn(|i, _| self.gated_g[i].or(self.posed_g[i]).unwrap_or(0.0))
    }

    /// Advances to the end of `report`'s window. `a_now` is the fixed-frame
    /// accelerometer reading there; `dt` the time since the previous update.
    pub fn update(&mut self, report: &WindowReport, dt: f64, a_now: Vec3) -> Result<Option<ObserverState>> {
        for (i, s) in report.solutions.iter().enumerate() {
            if s.posed && s.valid {
                self.posed_g[i] = Some(s.g);
                if report.gated[i] {
                    self.gated_g[i] = Some(s.g);
                }
            }
        }
        let fz = report.foc_now.z;
        let measurement = fuse_axes(&report.solutions, &report.gated, report.effect.phi_end(), fz);
        let g = self.latched_g();
        let next = match (self.state, measurement) {
            (None, None) => return Ok(None),
            (None, Some(m)) => ObserverState {
                z: m.z,
                zdot: m.zdot,
                g,
                t: report.t,
                mode: ObserverMode::Measured,
            },
            (Some(s), Some(m)) => observer_step(&s, dt, a_now.z, Some(m), g.z, &self.gain)?,
            (Some(s), None) => dead_reckon(&s, fz, dt),
        };
        if !(next.z > 0.0) || !next.zdot.is_finite() {
            return Err(Error::Contract(format!(
                "depth estimate left the positive half-line at {} (z = {})",
                report.t, next.z
            )));
        }
        let next = ObserverState {
            g,
            t: report.t,
            ..next
        };
        self.state = Some(next);
        Ok(Some(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tau::Axis;
    use approx::assert_abs_diff_eq;

    fn state(z: f64, zdot: f64) -> ObserverState {
        ObserverState {
            z,
            zdot,
            g: Vec3::zeros(),
            t: Timestamp::ZERO,
            mode: ObserverMode::Measured,
        }
    }

    #[test]
    fn default_gain_and_stability_check() {
        let g = ObserverGain::default();
        assert_eq!((g.l1(), g.l2()), (2.0, 20.0));
        assert_abs_diff_eq!(g.slowest_rate(), 2.0, epsilon = 1e-12);
        assert!(ObserverGain::new(-1.0, 20.0).is_err());
        assert!(ObserverGain::new(2.0, 0.0).is_err());
    }

    #[test]
    fn matching_measurement_is_pure_prediction() {
        let s = state(2.0, 0.3);
        let m = DepthNow { z: 2.0, zdot: 0.3 };
        let gain = ObserverGain::default();
        let with = observer_step(&s, 0.01, 1.0, Some(m), 9.81, &gain).unwrap();
        let without = observer_step(&s, 0.01, 1.0, None, 9.81, &gain).unwrap();
        assert_eq!(with.z, without.z);
        assert_eq!(with.zdot, without.zdot);
        assert_eq!(with.mode, ObserverMode::Measured);
        assert_eq!(without.mode, ObserverMode::DeadReckoning);
        assert!(observer_step(&s, 0.0, 1.0, None, 0.0, &gain).is_err());
    }

    #[test]
    fn wrong_init_converges() {
        let gain = ObserverGain::default();
        let truth = DepthNow { z: 3.0, zdot: 0.0 };
        let mut s = state(1.0, 0.0);
        for _ in 0..500 {
            s = observer_step(&s, 0.01, 9.81, Some(truth), 9.81, &gain).unwrap();
        }
        assert!((s.z - 3.0).abs() < 0.01 * 2.0);
    }

    #[test]
    fn ramp_tracking_error_decays() {
        // Z(t) = 3 - 0.2 t, exact measurements, zero acceleration.
        let gain = ObserverGain::default();
        let mut s = state(2.5, 0.0);
        let mut errs = Vec::new();
        for k in 0..600 {
            let t = k as f64 * 0.01;
            let m = DepthNow { z: 3.0 - 0.2 * t, zdot: -0.2 };
            s = observer_step(&s, 0.01, 0.0, Some(m), 0.0, &gain).unwrap();
            errs.push((s.z - (3.0 - 0.2 * (t + 0.01))).abs());
        }
        assert!(errs[599] < 1e-3 * errs[0].max(1e-3) + 1e-6, "{}", errs[599]);
    }

    #[test]
    fn dead_reckoning() {
        let s = state(2.0, 0.0);
        assert_eq!(dead_reckon(&s, 0.0, 0.01).z, 2.0);
        let mut d = s;
        for _ in 0..200 {
            d = dead_reckon(&d, -0.5, 0.01);
        }
        assert_abs_diff_eq!(d.z, 2.0 * (-1f64).exp(), epsilon = 1e-12);
        assert_eq!(d.mode, ObserverMode::DeadReckoning);
        assert_abs_diff_eq!(d.zdot, -0.5 * d.z, epsilon = 1e-15);
    }

    fn sol(axis: Axis, z0: f64) -> WindowSolution {
        WindowSolution {
            axis,
            z0,
            g: 0.0,
            det_q: 1.0,
            cond: 1.0,
            residual: 0.0,
            posed: true,
            valid: true,
        }
    }

    #[test]
    fn fusion_averages_qualifying_axes() {
        let one = fuse_axes(&[sol(Axis::X, 1.9)], &[true], 1.0, 0.0).unwrap();
        assert_eq!(one.z, 1.9);
        let two = fuse_axes(&[sol(Axis::X, 1.9), sol(Axis::Y, 2.1)], &[true, true], 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(two.z, 2.0, epsilon = 1e-15);
        let gated_out = fuse_axes(&[sol(Axis::X, 1.9), sol(Axis::Y, 2.1)], &[true, false], 1.0, 0.0).unwrap();
        assert_eq!(gated_out.z, 1.9);
        let unposed = WindowSolution {
            posed: false,
            ..sol(Axis::Z, 2.0)
        };
        assert!(fuse_axes(&[unposed], &[true], 1.0, 0.0).is_none());
    }

    #[test]
    fn reconstruction() {
        let s = state(2.0, 0.0);
        assert_eq!(reconstruct_xyz(&s, Vec2::zeros()), Vec3::new(0.0, 0.0, 2.0));
        assert_eq!(reconstruct_xyz(&s, Vec2::new(0.5, -0.25)), Vec3::new(1.0, -0.5, 2.0));
    }
}
