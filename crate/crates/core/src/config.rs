//! Run configuration: the single JSON document that pins an experiment.
//!
//! Everything a run needs — family source, fault and straggler budgets,
//! mode, filter, roles, delays, schedule, box, seeds — lives here so a
//! config plus a seed reproduces a trace byte for byte.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{CostFamily, NoiseModel, StochasticGradConfig};
use crate::faults::ByzantineStrategy;
use crate::filters::FilterKind;
use crate::simnet::DelayModel;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("unknown family preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid family: {0}")]
    Family(String),
    #[error("config n = {expected} but the family has {got} agents")]
    FamilySize { expected: usize, got: usize },
    #[error("roles list has {got} entries, need one per agent (n = {expected})")]
    RolesLength { expected: usize, got: usize },
    #[error("{got} agents are non-honest, above the fault budget f = {f}")]
    TooManyFaulty { got: usize, f: usize },
    #[error("straggler budget r = {r} must satisfy r < n = {n}")]
    BadStragglerBudget { r: usize, n: usize },
    #[error("stale mode requires the sum filter and all-honest roles")]
    StaleModeScope,
    #[error("stochastic mode requires a constant step size")]
    StochasticNeedsConstantStep,
    #[error("problem {problem:?} requires {requirement}")]
    ProblemShape {
        problem: StochasticProblem,
        requirement: &'static str,
    },
    #[error("box dimension {got} does not match family dimension {expected}")]
    BoxDimension { expected: usize, got: usize },
    #[error("x0 dimension {got} does not match family dimension {expected}")]
    X0Dimension { expected: usize, got: usize },
    #[error("x0 must lie inside the feasible box")]
    X0OutsideBox,
    #[error("step size must be nonnegative")]
    NegativeStep,
    #[error("noise sigma must be nonnegative, got {0}")]
    NegativeSigma(f64),
    #[error("n = {n} outside 1..=64 (trace bitmasks hold one bit per agent)")]
    BadAgentCount { n: usize },
    #[error(transparent)]
    Simnet(#[from] crate::simnet::SimnetError),
}

/// Largest supported agent count; arrival bitmasks in traces carry one
/// bit per agent.
pub const MAX_AGENTS: usize = 64;

/// What an agent sends: its gradient, or one of the corruption strategies.
///
/// Config form is a role string: `"honest" | "reverse" | "random:SCALE" |
/// "large:SCALE" | "centerflip"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentRole {
    Honest,
    Byzantine(ByzantineStrategy),
}

impl AgentRole {
    pub fn strategy(&self) -> Option<ByzantineStrategy> {
        match self {
            AgentRole::Honest => None,
            AgentRole::Byzantine(s) => Some(*s),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let lower = text.trim();
        if lower == "honest" {
            return Ok(AgentRole::Honest);
        }
        if lower == "reverse" {
            return Ok(AgentRole::Byzantine(ByzantineStrategy::ReverseGradient));
        }
        if lower == "centerflip" {
            return Ok(AgentRole::Byzantine(ByzantineStrategy::CenterFlip));
        }
        if let Some(scale) = lower.strip_prefix("random:") {
            let scale: f64 = scale
                .parse()
                .map_err(|_| format!("bad scale in {text:?}"))?;
            return Ok(AgentRole::Byzantine(ByzantineStrategy::RandomVector {
                scale,
            }));
        }
        if let Some(scale) = lower.strip_prefix("large:") {
            let scale: f64 = scale
                .parse()
                .map_err(|_| format!("bad scale in {text:?}"))?;
            return Ok(AgentRole::Byzantine(ByzantineStrategy::LargeNorm { scale }));
        }
        Err(format!("unknown role {text:?}"))
    }

    fn as_string(&self) -> String {
        match self {
            AgentRole::Honest => "honest".into(),
            AgentRole::Byzantine(ByzantineStrategy::ReverseGradient) => "reverse".into(),
            AgentRole::Byzantine(ByzantineStrategy::CenterFlip) => "centerflip".into(),
            AgentRole::Byzantine(ByzantineStrategy::RandomVector { scale }) => {
                format!("random:{scale}")
            }
            AgentRole::Byzantine(ByzantineStrategy::LargeNorm { scale }) => {
                format!("large:{scale}")
            }
        }
    }
}

impl Serialize for AgentRole {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.as_string())
    }
}

impl<'de> Deserialize<'de> for AgentRole {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        AgentRole::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Which update rule the run iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RunMode {
    /// Everyone answers every iteration; full gradients.
    Sync,
    /// First `n - r` timestamped gradients; full gradients.
    Async,
    /// Stale gradients up to age `tau`; honest-only, sum aggregation.
    Stale { tau: u64 },
    /// Stochastic gradients with a constant step.
    Stochastic { problem: StochasticProblem },
}

/// The stochastic problem shape, which picks the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StochasticProblem {
    /// Byzantine learning: faults, no stragglers.
    Bs,
    /// Asynchronous learning: stragglers, no faults.
    Cs,
    /// Asynchronous Byzantine learning.
    Ds,
}

/// Filter choice by name; the fault budget is injected from the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterName {
    Sum,
    Cge,
    Cwtm,
}

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScheduleConfig {
    Constant {
        eta: f64,
    },
    /// `eta_t = eta0 / (t + 1)`; `eta0 = None` defaults to `1 / (n mu)`.
    Harmonic {
        eta0: Option<f64>,
    },
}

/// Externally supplied delay model; mirrors [`DelayModel`].
pub type DelayModelConfig = DelayModel;

/// Where the cost family comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FamilySource {
    /// Load the JSON family document at `path`.
    Path { path: String },
    /// A named fixture; `"line3"` is the worked three-agent line.
    Preset { preset: String },
    /// Draw from the seeded generator.
    Generator {
        seed: u64,
        n: usize,
        d: usize,
        spread: f64,
        eig_lo: f64,
        eig_hi: f64,
    },
}

impl FamilySource {
    /// Materializes the family; `base` anchors relative paths.
    pub fn resolve(&self, base: Option<&Path>) -> Result<CostFamily, ConfigError> {
        match self {
            FamilySource::Path { path } => {
                let full = match base {
                    Some(dir) => dir.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                let text = std::fs::read_to_string(&full).map_err(|source| ConfigError::Io {
                    path: full.display().to_string(),
                    source,
                })?;
                CostFamily::from_json(&text).map_err(ConfigError::Family)
            }
            FamilySource::Preset { preset } => match preset.as_str() {
                "line3" => Ok(CostFamily::line3()),
                other => Err(ConfigError::UnknownPreset(other.to_string())),
            },
            FamilySource::Generator {
                seed,
                n,
                d,
                spread,
                eig_lo,
                eig_hi,
            } => crate::costs::generate_family(*seed, *n, *d, *spread, (*eig_lo, *eig_hi))
                .map_err(|e| ConfigError::Family(e.to_string())),
        }
    }
}

/// Axis-aligned feasible box in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// One experiment, fully pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: FamilySource,
    pub n: usize,
    pub f: usize,
    pub r: usize,
    pub mode: RunMode,
    pub filter: FilterName,
    pub roles: Vec<AgentRole>,
    pub delay: DelayModelConfig,
    pub schedule: ScheduleConfig,
    pub iterations: u64,
    /// Monte-Carlo replications; only stochastic runs look at values > 1.
    #[serde(default = "one")]
    pub replications: u32,
    #[serde(rename = "box")]
    pub box_w: BoxConfig,
    /// Stochastic-gradient noise; ignored by deterministic modes.
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    pub seed: u64,
    /// Initial estimate; defaults to the box center.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Evaluate agents with a thread pool. Traces are identical either way.
    #[serde(default)]
    pub parallel_agents: bool,
}

fn one() -> u32 {
    1
}

/// Noise settings in config form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma: f64,
    #[serde(default = "one_usize")]
    pub batch_size: usize,
    #[serde(default = "default_noise_model")]
    pub noise_model: NoiseModel,
}

fn one_usize() -> usize {
    1
}

fn default_noise_model() -> NoiseModel {
    NoiseModel::GaussianIsotropicTruncated
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn filter_kind(&self) -> FilterKind {
        match self.filter {
            FilterName::Sum => FilterKind::Sum,
            FilterName::Cge => FilterKind::Cge { f: self.f },
            FilterName::Cwtm => FilterKind::Cwtm { f: self.f },
        }
    }

    pub fn noise_config(&self) -> StochasticGradConfig {
        match self.noise {
            Some(NoiseConfig {
                sigma,
                batch_size,
                noise_model,
            }) => StochasticGradConfig {
                sigma,
                batch_size,
                noise_model,
            },
            None => StochasticGradConfig::noiseless(),
        }
    }

    /// Ids of agents whose role is honest.
    pub fn honest_agents(&self) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, role)| matches!(role, AgentRole::Honest))
            .map(|(i, _)| i)
            .collect()
    }

    /// Structural checks that do not need the family: budgets, lengths,
    /// mode/filter compatibility.
    pub fn validate_shape(&self) -> Result<(), ConfigError> {
        if self.n == 0 || self.n > MAX_AGENTS {
            return Err(ConfigError::BadAgentCount { n: self.n });
        }
        if self.r >= self.n {
            return Err(ConfigError::BadStragglerBudget {
                r: self.r,
                n: self.n,
            });
        }
        if self.roles.len() != self.n {
            return Err(ConfigError::RolesLength {
                expected: self.n,
                got: self.roles.len(),
            });
        }
        let faulty = self.n - self.honest_agents().len();
        if faulty > self.f {
            return Err(ConfigError::TooManyFaulty {
                got: faulty,
                f: self.f,
            });
        }
        if let DelayModel::FixedSlowSet { slow, .. } = &self.delay {
            let slow: &BTreeSet<usize> = slow;
            if slow.len() > self.r {
                return Err(crate::simnet::SimnetError::SlowSetTooLarge {
                    slow: slow.len(),
                    r: self.r,
                }
                .into());
            }
        }
        match self.mode {
            RunMode::Stale { .. } => {
                if self.filter != FilterName::Sum || faulty > 0 {
                    return Err(ConfigError::StaleModeScope);
                }
            }
            RunMode::Stochastic { problem } => {
                if !matches!(self.schedule, ScheduleConfig::Constant { .. }) {
                    return Err(ConfigError::StochasticNeedsConstantStep);
                }
                match problem {
                    StochasticProblem::Bs if self.r != 0 => {
                        return Err(ConfigError::ProblemShape {
                            problem,
                            requirement: "r = 0",
                        });
                    }
                    StochasticProblem::Cs if self.f != 0 => {
                        return Err(ConfigError::ProblemShape {
                            problem,
                            requirement: "f = 0",
                        });
                    }
                    _ => {}
                }
            }
            _ => {}
        }
        if let Some(noise) = self.noise {
            if noise.sigma < 0.0 {
                return Err(ConfigError::NegativeSigma(noise.sigma));
            }
        }
        match self.schedule {
            ScheduleConfig::Constant { eta } if eta < 0.0 => {
                return Err(ConfigError::NegativeStep);
            }
            ScheduleConfig::Harmonic { eta0: Some(eta0) } if eta0 < 0.0 => {
                return Err(ConfigError::NegativeStep);
            }
            _ => {}
        }
        Ok(())
    }
}
