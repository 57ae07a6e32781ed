//! Experiment configuration: one JSON file fully determines a run.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default. Every command writes the resolved configuration next to its
//! outputs together with a content hash, which makes reruns auditable.

use serde::{Deserialize, Serialize};

use epcal_core::mesh::{self, Mesh};
use epcal_core::model::ParamSet;
use epcal_core::optimizer::{GradientMethod, MinimizeConfig};
use epcal_core::solver::{LoadSchedule, Tolerances};
use epcal_core::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "lowercase")]
pub enum GeometryConfig {
    Bar {
        extents: [f64; 3],
        divisions: [usize; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        notch: Option<NotchConfig>,
    },
    Cruciform {
        arm_half_width: f64,
        arm_length: f64,
        thickness: f64,
        divisions: (usize, usize),
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotchConfig {
    pub y0: f64,
    pub y1: f64,
    pub depth_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    J2,
    Hill,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum LoadConfig {
    /// `h_y = scale * n` for `n = 1..=steps`.
    UniaxialRamp { steps: usize, scale: f64 },
    /// Pull in y over the first half, hold y and ramp x over the second.
    BiaxialNonProportional { steps: usize, scale: f64 },
    /// Explicit per-step traction magnitudes.
    Explicit {
        h_y: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_x: Option<Vec<f64>>,
    },
}

/// Noise level: a number, or `"floor"` for the camera-resolution estimate
/// derived from the specimen's y-extent.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseLevel {
    Value(f64),
    Named(NoiseName),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseName {
    Floor,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub eps: NoiseLevel,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Direction component applied to every active parameter.
    pub direction: f64,
    /// Decades swept: `eps = 1, 1e-1, ..., 10^-(decades-1)`.
    pub decades: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            direction: 0.1,
            decades: 13,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub model: ModelKind,
    /// Parameters the synthetic data is generated with.
    pub beta_true: Vec<f64>,
    /// Calibration starting point; defaults to `beta_true`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_init: Option<Vec<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub active: Vec<bool>,
    pub load: LoadConfig,
    #[serde(default = "default_tolerances")]
    pub tolerances: Tolerances,
    pub noise: NoiseConfig,
    #[serde(default = "default_method")]
    pub gradient_method: GradientMethod,
    /// Relative finite-difference step for the FD gradient engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_rel_step: Option<f64>,
    #[serde(default = "default_optimizer")]
    pub optimizer: MinimizeConfig,
    #[serde(default)]
    pub gradcheck: Option<GradcheckConfig>,
    /// Optional path to a data file written by `synth`; when absent,
    /// calibration synthesizes the data in-process from `beta_true` and
    /// `noise` (identical streams either way).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_path: Option<String>,
}

fn default_tolerances() -> Tolerances {
    Tolerances::default()
}

fn default_method() -> GradientMethod {
    GradientMethod::Adjoint
}

fn default_optimizer() -> MinimizeConfig {
    MinimizeConfig::default()
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = match self.model {
            ModelKind::J2 => 6,
            ModelKind::Hill => 10,
        };
        for (name, len) in [
            ("beta_true", self.beta_true.len()),
            ("lower", self.lower.len()),
            ("upper", self.upper.len()),
            ("active", self.active.len()),
        ] {
            if len != dim {
                return Err(Error::Config(format!(
                    "{name} must have {dim} entries for the {:?} model, got {len}",
                    self.model
                )));
            }
        }
        if let Some(init) = &self.beta_init {
            if init.len() != dim {
                return Err(Error::Config(format!(
                    "beta_init must have {dim} entries, got {}",
                    init.len()
                )));
            }
        }
        let nu = self.beta_true[1];
        if !(-1.0 < nu && nu < 0.5) {
            return Err(Error::Config(format!(
                "beta_true: Poisson ratio {nu} outside (-1, 1/2)"
            )));
        }
        for i in 0..dim {
            if self.active[i] {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                if !(lo < hi) {
                    return Err(Error::Config(format!(
                        "active parameter {i}: empty bound interval [{lo}, {hi}]"
                    )));
                }
            }
        }
        if let LoadConfig::Explicit { h_y, h_x } = &self.load {
            if h_y.is_empty() {
                return Err(Error::Config("load: h_y must not be empty".into()));
            }
            if let Some(h_x) = h_x {
                if h_x.len() != h_y.len() {
                    return Err(Error::Config(format!(
                        "load: h_x has {} steps but h_y has {}",
                        h_x.len(),
                        h_y.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        match &self.geometry {
            GeometryConfig::Bar {
                extents,
                divisions,
                notch,
            } => mesh::generate_bar(
                *extents,
                *divisions,
                notch.map(|n| mesh::Notch {
                    y0: n.y0,
                    y1: n.y1,
                    depth_fraction: n.depth_fraction,
                }),
            ),
            GeometryConfig::Cruciform {
                arm_half_width,
                arm_length,
                thickness,
                divisions,
            } => mesh::generate_cruciform(*arm_half_width, *arm_length, *thickness, *divisions),
        }
    }

    pub fn schedule(&self) -> LoadSchedule {
        match &self.load {
            LoadConfig::UniaxialRamp { steps, scale } => LoadSchedule::uniaxial_ramp(*steps, *scale),
            LoadConfig::BiaxialNonProportional { steps, scale } => {
                LoadSchedule::biaxial_non_proportional(*steps, *scale)
            }
            LoadConfig::Explicit { h_y, h_x } => LoadSchedule {
                h_y: h_y.clone(),
                h_x: h_x.clone().unwrap_or_else(|| vec![0.0; h_y.len()]),
            },
        }
    }

    /// The specimen extent in the pulling direction, which sets the noise
    /// floor.
    pub fn extent_y(&self) -> f64 {
        match &self.geometry {
            GeometryConfig::Bar { extents, .. } => extents[1],
            GeometryConfig::Cruciform { arm_length, .. } => 2.0 * arm_length,
        }
    }

    pub fn resolved_noise(&self) -> f64 {
        match self.noise.eps {
            NoiseLevel::Value(v) => v,
            NoiseLevel::Named(NoiseName::Floor) => {
                epcal_core::objective::noise_floor(self.extent_y())
            }
        }
    }

    pub fn params(&self) -> ParamSet {
        let values = self.beta_init.clone().unwrap_or_else(|| self.beta_true.clone());
        ParamSet::new(
            values,
            self.active.clone(),
            self.lower.clone(),
            self.upper.clone(),
        )
    }

    /// Canonical JSON of the resolved configuration.
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hash binding outputs to the exact configuration they came from.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.resolved_json().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
