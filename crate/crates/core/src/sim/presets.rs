//! Named scenarios bundled with the simulator.

use serde::{Deserialize, Serialize};

use super::motion::{AxisMotion, MotionSpec, QuietSpan, Sinusoid};
use super::{simulate, PlanarScene, SimRates, SimulatedSequence, TrajectorySpec};
use crate::error::{input, Result};
use crate::model::CameraIntrinsics;

/// Everything needed to synthesize one recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub camera: CameraIntrinsics,
    #[serde(default)]
    pub rates: SimRates,
    pub scene: PlanarScene,
    pub trajectory: TrajectorySpec,
}

impl Scenario {
    pub fn simulate(&self) -> Result<SimulatedSequence> {
        simulate(&self.scene, &self.trajectory, &self.rates, &self.camera)
    }

    pub fn builtin(name: &str) -> Result<Scenario> {
        match name {
            "approach-2m" => Ok(approach_2m()),
            "oscillate-20s" => Ok(oscillate(20.0, 1)),
            "quiet-span" => Ok(quiet_span()),
            other => input(format!(
                "unknown scenario '{other}' (built-ins: {})",
                BUILTIN_NAMES.join(", ")
            )),
        }
    }
}

pub const BUILTIN_NAMES: [&str; 3] = ["approach-2m", "oscillate-20s", "quiet-span"];

/// 848x480 camera with a 400 px focal length.
pub fn wide_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 400.0,
        fy: 400.0,
        cx: 423.5,
        cy: 239.5,
        width: 848,
        height: 480,
    }
}

/// Constant-velocity approach toward a fronto-parallel plane, 2 m to 1 m in 4 s.
pub fn approach_2m() -> Scenario {
    Scenario {
        name: "approach-2m".into(),
        camera: wide_camera(),
        rates: SimRates::default(),
        scene: PlanarScene::fronto_parallel(2.0),
        trajectory: TrajectorySpec {
            gravity: [0.0, -9.81, 0.0],
            ..TrajectorySpec::new(
                MotionSpec {
                    position: [AxisMotion::still(), AxisMotion::still(), AxisMotion::drift(0.25)],
                    ..Default::default()
                },
                4.0,
            )
        },
    }
}

/// Lateral and axial oscillation in front of a plane 1.5 m away, small
/// rotations, noisy IMU.
pub fn oscillate(duration: f64, seed: u64) -> Scenario {
    let motion = MotionSpec {
        position: [
            AxisMotion {
                terms: vec![Sinusoid::new(0.25, 0.6, 0.0), Sinusoid::new(0.03, 1.3, 0.5)],
                ..Default::default()
            },
            AxisMotion::sinusoid(0.05, 0.45, 1.0),
            AxisMotion {
                terms: vec![Sinusoid::new(0.2, 0.7, 0.3), Sinusoid::new(0.02, 1.6, 2.0)],
                ..Default::default()
            },
        ],
        rotation: [
            AxisMotion::sinusoid(0.04, 0.35, 0.2),
            AxisMotion::sinusoid(0.05, 0.3, 0.0),
            AxisMotion::sinusoid(0.06, 0.25, 0.7),
        ],
        quiet: None,
    };
    Scenario {
        name: "oscillate-20s".into(),
        camera: wide_camera(),
        rates: SimRates::default(),
        scene: PlanarScene::fronto_parallel(1.5),
        trajectory: TrajectorySpec {
            accel_noise: 0.05,
            gyro_noise: 0.005,
            seed,
            ..TrajectorySpec::new(motion, duration)
        },
    }
}

/// Like [`oscillate`] with a slow axial drift, and all translational
/// oscillation switched off between 8 s and 11 s.
pub fn quiet_span() -> Scenario {
    let mut s = oscillate(16.0, 3);
    s.name = "quiet-span".into();
    s.trajectory.motion.position[2].drift = -0.02;
    s.trajectory.motion.quiet = Some(QuietSpan {
        start: 8.0,
        duration: 3.0,
        ramp: 0.4,
    });
    s
}
