//! File-backed configuration for the whole pipeline.
//!
//! The config is a single JSON document with one section per subsystem.
//! Every field has a default, `{}` is a valid config, and units are spelled
//! out in the key names. The document round-trips losslessly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::grammar::{Grammar, GrammarLimits, GrammarParams};
use crate::mechanism::PhysicalParams;
use crate::reward::{EvaluationSetup, NamedObject, RewardWeights};
use crate::search::SearchConfig;
use crate::sim::{Pose, Shape, SimConfig, SimObject};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarSection {
    pub params: GrammarParams,
    pub limits: GrammarLimits,
}

/// Reward weights: either a preset name (`"worked"` or `"text"`) or the six
/// explicit coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Preset(String),
    Explicit(RewardWeights),
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec::Preset("worked".into())
    }
}

impl WeightsSpec {
    pub fn resolve(&self) -> Result<RewardWeights, ConfigError> {
        match self {
            WeightsSpec::Explicit(w) => Ok(*w),
            WeightsSpec::Preset(name) => match name.as_str() {
                "worked" => Ok(RewardWeights::worked()),
                "text" => Ok(RewardWeights::text()),
                other => Err(ConfigError::Invalid(format!(
                    "unknown weights preset {other:?} (expected \"worked\" or \"text\")"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSection {
    pub weights: WeightsSpec,
    pub objects: Vec<NamedObject>,
    pub tension_levels_n: Vec<f64>,
    pub orientations_deg: Vec<f64>,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection {
            weights: WeightsSpec::default(),
            objects: default_objects(),
            tension_levels_n: vec![5.0, 10.0, 15.0],
            orientations_deg: vec![0.0, 45.0],
        }
    }
}

/// The default three-object evaluation set, centered in the workspace above
/// the palm.
pub fn default_objects() -> Vec<NamedObject> {
    let pose = Pose {
        x_m: 0.0,
        y_m: 0.06,
        theta_rad: 0.0,
    };
    vec![
        NamedObject {
            name: "disc".into(),
            object: SimObject {
                shape: Shape::Disc { radius_m: 0.03 },
                mass_kg: 0.1,
                initial_pose: pose,
            },
        },
        NamedObject {
            name: "box".into(),
            object: SimObject {
                shape: Shape::Rect {
                    width_m: 0.05,
                    height_m: 0.05,
                },
                mass_kg: 0.1,
                initial_pose: pose,
            },
        },
        NamedObject {
            name: "hex".into(),
            object: SimObject {
                shape: Shape::RegularPolygon {
                    sides: 6,
                    circumradius_m: 0.035,
                },
                mass_kg: 0.1,
                initial_pose: pose,
            },
        },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub grammar: GrammarSection,
    pub mechanism: PhysicalParams,
    pub sim: SimConfig,
    pub reward: RewardSection,
    pub search: SearchConfig,
    pub output_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            grammar: GrammarSection::default(),
            mechanism: PhysicalParams::default(),
            sim: SimConfig::default(),
            reward: RewardSection::default(),
            search: SearchConfig::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: Config = serde_json::from_str(&text).map_err(|e| {
            ConfigError::Parse(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_json_pretty() + "\n")?;
        Ok(())
    }

    /// Cross-section consistency checks.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.grammar_engine()?;
        if self.grammar.limits.max_fingers > 4 {
            return Err(ConfigError::Invalid(
                "max_fingers above 4 cannot be compiled into a mechanism".into(),
            ));
        }
        let half_width = self.mechanism.palm_width_m / 2.0;
        for offset in &self.grammar.params.mount_offsets_m {
            if offset.abs() > half_width + 1e-12 {
                return Err(ConfigError::Invalid(format!(
                    "mount offset {offset} m lies outside the palm (half-width {half_width} m)"
                )));
            }
        }
        if self.mechanism.palm_width_m <= 0.0
            || self.mechanism.palm_thickness_m <= 0.0
            || self.mechanism.phalanx_thickness_m <= 0.0
            || self.mechanism.pulley_radius_m <= 0.0
        {
            return Err(ConfigError::Invalid(
                "palm and phalanx dimensions must be positive".into(),
            ));
        }
        self.search
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let setup = self.evaluation_setup()?;
        setup
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// The grammar instance this config describes.
    pub fn grammar_engine(&self) -> Result<Grammar, ConfigError> {
        Grammar::new(self.grammar.params.clone(), self.grammar.limits.clone())
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// The resolved evaluation setup (weights preset applied).
    pub fn evaluation_setup(&self) -> Result<EvaluationSetup, ConfigError> {
        Ok(EvaluationSetup {
            objects: self.reward.objects.clone(),
            tension_levels_n: self.reward.tension_levels_n.clone(),
            orientations_deg: self.reward.orientations_deg.clone(),
            weights: self.reward.weights.resolve()?,
            sim: self.sim.clone(),
        })
    }

    /// Center of the workspace the object set occupies: the mean of the
    /// object initial positions. Used for reachability warnings.
    pub fn workspace_center(&self) -> Vec2 {
        if self.reward.objects.is_empty() {
            return Vec2::ZERO;
        }
        let sum = self
            .reward
            .objects
            .iter()
            .fold(Vec2::ZERO, |acc, o| acc + o.object.initial_pose.position());
        sum * (1.0 / self.reward.objects.len() as f64)
    }
}
