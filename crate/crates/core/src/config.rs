//! Run configuration and scenario files (`key = value`, TOML syntax).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::derotation::{GyroBias, GyroIntegration};
use crate::error::{Error, Result};
use crate::model::Vec2;
use crate::observer::ObserverGain;
use crate::pipeline::PipelineConfig;
use crate::sim::Scenario;
use crate::tau::WindowConfig;
use crate::tracker::TrackerConfig;

/// Tunables of an estimation run. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Signal history per window (s).
    pub window_length: f64,
    /// Resampling and fusion rate (Hz).
    pub fusion_rate: f64,
    /// Axes whose window acceleration RMS falls below this (m/s²) are not
    /// fused.
    pub gate_threshold: f64,
    pub gain_l1: f64,
    pub gain_l2: f64,
    /// Template side (px).
    pub patch_size: u32,
    /// Template pixels kept after sub-sampling.
    pub samples: usize,
    pub max_iters: usize,
    /// Use tracker output at this rate (Hz); all frames when unset.
    pub decimate_hz: Option<f64>,
    /// Relative floor on `det Q` for a window to count as posed.
    pub det_q_min: f64,
    /// Below this, `a3` and `a6` count as zero in the flow inversion.
    pub ratio_eps: f64,
    /// Smallest accepted window depth (m).
    pub z_min: f64,
    pub flow_median: bool,
    /// Seconds at the start of the gyro stream averaged into a bias; 0 for
    /// none.
    pub gyro_bias_seconds: f64,
    pub patch_center_x: Option<f64>,
    pub patch_center_y: Option<f64>,
    /// Overrides the scenario's noise seed when simulating.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window_length: 2.0,
            fusion_rate: 100.0,
            gate_threshold: 2.0,
            gain_l1: 2.0,
            gain_l2: 20.0,
            patch_size: 100,
            samples: 4000,
            max_iters: 50,
            decimate_hz: None,
            det_q_min: 1e-8,
            ratio_eps: 1e-6,
            z_min: 0.05,
            flow_median: false,
            gyro_bias_seconds: 0.0,
            patch_center_x: None,
            patch_center_y: None,
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_length", self.window_length),
            ("fusion_rate", self.fusion_rate),
            ("gate_threshold", self.gate_threshold),
            ("gain_l1", self.gain_l1),
            ("gain_l2", self.gain_l2),
            ("det_q_min", self.det_q_min),
            ("ratio_eps", self.ratio_eps),
            ("z_min", self.z_min),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.patch_size < 8 || self.samples < 6 || self.max_iters == 0 {
            return Err(Error::Config(
                "patch_size >= 8, samples >= 6 and max_iters >= 1 are required".into(),
            ));
        }
        if let Some(hz) = self.decimate_hz {
            if !(hz > 0.0 && hz.is_finite()) {
                return Err(Error::Config(format!("decimate_hz must be positive, got {hz}")));
            }
        }
        if !(self.gyro_bias_seconds >= 0.0) {
            return Err(Error::Config("gyro_bias_seconds must be non-negative".into()));
        }
        if self.patch_center_x.is_some() != self.patch_center_y.is_some() {
            return Err(Error::Config("set both patch_center_x and patch_center_y or neither".into()));
        }
        ObserverGain::new(self.gain_l1, self.gain_l2).map(|_| ())
    }

    pub fn patch_center(&self) -> Option<Vec2> {
        Some(Vec2::new(self.patch_center_x?, self.patch_center_y?))
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        self.validate()?;
        Ok(PipelineConfig {
            window: WindowConfig {
                length_s: self.window_length,
                rate_hz: self.fusion_rate,
                det_rel_min: self.det_q_min,
                z_min: self.z_min,
                gate_threshold: self.gate_threshold,
            },
            gain: ObserverGain::new(self.gain_l1, self.gain_l2)?,
            tracker: TrackerConfig {
                patch_size: self.patch_size,
                samples: self.samples,
                max_iters: self.max_iters,
                ..TrackerConfig::default()
            },
            gyro: GyroIntegration {
                bias: if self.gyro_bias_seconds > 0.0 {
                    GyroBias::Stationary {
                        seconds: self.gyro_bias_seconds,
                    }
                } else {
                    GyroBias::None
                },
                ..GyroIntegration::default()
            },
            decimate_hz: self.decimate_hz,
            ratio_eps: self.ratio_eps,
            flow_median: self.flow_median,
            patch_center_px: self.patch_center(),
        })
    }
}

/// A built-in scenario name or the path of a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Scenario::builtin(name_or_path);
    }
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let scenario: Scenario =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    scenario.camera.validate()?;
    scenario.scene.validate()?;
    scenario.trajectory.validate()?;
    Ok(scenario)
}

pub fn scenario_to_toml(s: &Scenario) -> Result<String> {
    toml::to_string(s).map_err(|e| Error::Config(e.to_string()))
}
