//! Sliding-window least squares over the τ-constraint.
//!
//! For one axis the window problem is
//! `min ‖E Z(0) + Δ{a^m} + Δ{1} γ‖²` over `(Z(0), γ)`, whose normal equations
//! are a 2x2 system. Because the accelerometer measures `-Ẍ + g`, the second
//! unknown equals `-g`; [`solve_window`] reports `g` itself.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{interp_linear, Interpolate, Timed, Timestamp, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowConfig {
    /// Signal history length (s).
    pub length_s: f64,
    /// Resampling rate of the window grid (Hz).
    pub rate_hz: f64,
    /// Posedness threshold relative to `Q11 Q22`.
    pub det_rel_min: f64,
    /// Smallest admissible depth at the window start (m).
    pub z_min: f64,
    /// Mean-removed RMS acceleration an axis needs to be used (m/s²).
    pub gate_threshold: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            length_s: 2.0,
            rate_hz: 100.0,
            det_rel_min: 1e-8,
            z_min: 0.05,
            gate_threshold: 2.0,
        }
    }
}

/// Uniform grid covering `[t_now - T_w, t_now]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowGrid {
    times: Vec<Timestamp>,
    step_ns: u64,
}

impl WindowGrid {
    pub fn ending_at(t_now: Timestamp, length_s: f64, rate_hz: f64) -> Result<Self> {
        if !(length_s > 0.0 && rate_hz > 0.0) {
            return Err(Error::Input(format!(
                "window length {length_s} s and rate {rate_hz} Hz must be positive"
            )));
        }
        let step_ns = (1e9 / rate_hz).round() as u64;
        let steps = ((length_s * 1e9) / step_ns as f64).round() as u64;
        if steps < 2 {
            return Err(Error::Input("window must span at least two grid steps".into()));
        }
        let span = steps * step_ns;
        if t_now.nanos() < span {
            return Err(Error::Input(format!("window of {length_s} s does not fit before {t_now}")));
        }
        let start = t_now.nanos() - span;
        let times = (0..=steps)
            .map(|k| Timestamp::from_nanos(start + k * step_ns))
            .collect();
        Ok(WindowGrid { times, step_ns })
    }

    pub fn times(&self) -> &[Timestamp] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.step_ns as f64 * 1e-9
    }

    pub fn start(&self) -> Timestamp {
        self.times[0]
    }

    pub fn end(&self) -> Timestamp {
        self.times[self.times.len() - 1]
    }

    pub fn resample<T>(&self, stream: &[T]) -> Result<Vec<T>>
    where
        T: Timed + Interpolate + Clone,
    {
        self.times.iter().map(|&t| interp_linear(stream, t)).collect()
    }
}

/// Running trapezoidal integral, starting at zero.
pub fn cumulative_trapezoid(f: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    if let Some(&first) = f.first() {
        out.push(0.0);
        let mut prev = first;
        for &v in &f[1..] {
            acc += 0.5 * dt * (prev + v);
            out.push(acc);
            prev = v;
        }
    }
    out
}

/// `Δ{f}(t) = ∫₀ᵗ ∫₀^λ f`, trapezoid applied twice.
pub fn double_integral(f: &[f64], dt: f64) -> Vec<f64> {
    cumulative_trapezoid(&cumulative_trapezoid(f, dt), dt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionEffect {
    pub e: Vec<Vec3>,
    /// `Φ(t) = exp ∫ F_z`, equal to `Z(t)/Z(0)`.
    pub phi: Vec<f64>,
    pub f0: Vec3,
}

impl ActionEffect {
    pub fn axis(&self, axis: Axis) -> Vec<f64> {
        self.e.iter().map(|e| e[axis.index()]).collect()
    }

    pub fn phi_end(&self) -> f64 {
        *self.phi.last().expect("non-empty window")
    }
}

pub fn action_effect(foc: &[Vec3], dt: f64) -> Result<ActionEffect> {
    let Some(&f0) = foc.first() else {
        return Err(Error::Input("empty frequency-of-contact window".into()));
    };
    if foc.iter().any(|f| !f.iter().all(|c| c.is_finite())) {
        return Err(Error::Numeric("non-finite frequency-of-contact in window".into()));
    }
    let fz: Vec<f64> = foc.iter().map(|f| f.z).collect();
    let phi: Vec<f64> = cumulative_trapezoid(&fz, dt).into_iter().map(f64::exp).collect();
    if phi.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("exp of integrated F_z overflowed".into()));
    }
    let weighted = |c: usize| -> Vec<f64> {
        let v: Vec<f64> = foc.iter().zip(&phi).map(|(f, p)| f[c] * p).collect();
        cumulative_trapezoid(&v, dt)
    };
    let (ix, iy) = (weighted(0), weighted(1));
    let e = (0..foc.len())
        .map(|k| {
            let t = k as f64 * dt;
            Vec3::new(ix[k], iy[k], phi[k] - 1.0) - f0 * t
        })
        .collect();
    Ok(ActionEffect { e, phi, f0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Normal equations `min yᵀQy + cᵀy` with `y = (Z(0), γ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalSystem {
    pub q: Matrix2<f64>,
    pub c: Vector2<f64>,
    /// `‖Δ{a^m}‖²`, the constant term of the objective.
    pub constant: f64,
    pub duration: f64,
}

fn inner(a: &[f64], b: &[f64], dt: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dt
}

pub fn assemble_normal_system(e_axis: &[f64], accel_axis: &[f64], dt: f64) -> NormalSystem {
    let n = e_axis.len().min(accel_axis.len());
    let (e, a) = (&e_axis[..n], &accel_axis[..n]);
    let d_one = double_integral(&vec![1.0; n], dt);
    let d_acc = double_integral(a, dt);
    let e1 = inner(e, &d_one, dt);
    let q = Matrix2::new(inner(e, e, dt), e1, e1, inner(&d_one, &d_one, dt));
    let c = 2.0 * Vector2::new(inner(e, &d_acc, dt), inner(&d_one, &d_acc, dt));
    NormalSystem {
        q,
        c,
        constant: inner(&d_acc, &d_acc, dt),
        duration: n.saturating_sub(1) as f64 * dt,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSolution {
    pub axis: Axis,
    /// Depth at the window start (m); NaN when not posed.
    pub z0: f64,
    /// Gravity component along the axis in the fixed frame (m/s²).
    pub g: f64,
    pub det_q: f64,
    pub cond: f64,
    /// RMS of the τ-constraint residual over the window.
    pub residual: f64,
    pub posed: bool,
    /// Posed and `z0 > z_min`.
    pub valid: bool,
}

pub fn solve_window(sys: &NormalSystem, axis: Axis, cfg: &WindowConfig) -> WindowSolution {
    let q = &sys.q;
    let det = q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)];
    let det_min = cfg.det_rel_min * (q[(0, 0)] * q[(1, 1)]).max(1e-30);
    let trace = q[(0, 0)] + q[(1, 1)];
    let disc = ((q[(0, 0)] - q[(1, 1)]).powi(2) + 4.0 * q[(0, 1)] * q[(1, 0)]).max(0.0).sqrt();
    let (l_max, l_min) = (0.5 * (trace + disc), 0.5 * (trace - disc));
    let cond = if l_min > 0.0 { l_max / l_min } else { f64::INFINITY };
    let posed = det.is_finite() && det > det_min;
    if !posed {
        return WindowSolution {
            axis,
            z0: f64::NAN,
            g: f64::NAN,
            det_q: det,
            cond,
            residual: f64::NAN,
            posed: false,
            valid: false,
        };
    }
    let inv = Matrix2::new(q[(1, 1)], -q[(0, 1)], -q[(1, 0)], q[(0, 0)]) / det;
    let y = -0.5 * (inv * sys.c);
    let objective = (y.dot(&(q * y)) + sys.c.dot(&y) + sys.constant).max(0.0);
    let residual = if sys.duration > 0.0 {
        (objective / sys.duration).sqrt()
    } else {
        0.0
    };
    let z0 = y[0];
    WindowSolution {
        axis,
        z0,
        g: -y[1],
        det_q: det,
        cond,
        residual,
        posed: true,
        valid: z0.is_finite() && z0 > cfg.z_min,
    }
}

/// Mean-removed RMS of an acceleration series.
pub fn accel_power(accel_axis: &[f64]) -> f64 {
    if accel_axis.is_empty() {
        return 0.0;
    }
    let n = accel_axis.len() as f64;
    let mean = accel_axis.iter().sum::<f64>() / n;
    (accel_axis.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn gate_axis(accel_axis: &[f64], threshold: f64) -> bool {
    accel_power(accel_axis) >= threshold
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthNow {
    pub z: f64,
    pub zdot: f64,
}

/// Propagates a window-start depth to the window end: `Z(t) = Z(0) Φ(t)`,
/// `Ż(t) = F_z(t) Z(t)`.
pub fn window_depth_now(sol: &WindowSolution, phi_end: f64, fz_now: f64) -> Result<DepthNow> {
    if !sol.posed {
        return Err(Error::Contract(format!(
            "axis {} window is not posed; no depth to propagate",
            sol.axis.label()
        )));
    }
    let z = sol.z0 * phi_end;
    Ok(DepthNow { z, zdot: fz_now * z })
}

/// Everything computed for one window ending at `t_now`.
#[derive(Clone, Debug)]
pub struct WindowReport {
    pub t: Timestamp,
    pub effect: ActionEffect,
    pub solutions: [WindowSolution; 3],
    pub gated: [bool; 3],
    pub accel_power: [f64; 3],
    pub foc_now: Vec3,
}

/// Solves the three axes independently on resampled `F` and fixed-frame
/// accelerometer windows.
pub fn solve_axes(
    t: Timestamp,
    foc: &[Vec3],
    accel: &[Vec3],
    dt: f64,
    cfg: &WindowConfig,
) -> Result<WindowReport> {
    if foc.len() != accel.len() || foc.len() < 3 {
        return Err(Error::Input(format!(
            "window series must share a grid of >= 3 samples (got {} and {})",
            foc.len(),
            accel.len()
        )));
    }
    let effect = action_effect(foc, dt)?;
    let mut gated = [false; 3];
    let mut power = [0.0; 3];
    let solutions = Axis::ALL.map(|axis| {
        let a: Vec<f64> = accel.iter().map(|v| v[axis.index()]).collect();
        power[axis.index()] = accel_power(&a);
        gated[axis.index()] = power[axis.index()] >= cfg.gate_threshold;
        let sys = assemble_normal_system(&effect.axis(axis), &a, dt);
        solve_window(&sys, axis, cfg)
    });
    Ok(WindowReport {
        t,
        foc_now: *foc.last().expect("non-empty"),
        effect,
        solutions,
        gated,
        accel_power: power,
    })
}
