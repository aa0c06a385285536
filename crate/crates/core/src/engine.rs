//! The server loop: projected gradient descent over agent messages, in
//! synchronous, asynchronous, stale-gradient, and stochastic variants.
//!
//! One `Simulation` is one logical thread of control. Agent messages within
//! an iteration are pure functions of the estimate and per-agent RNG
//! streams, so they may be computed in parallel and reduced in fixed
//! agent-id order; traces are identical either way.

use nalgebra::DVector;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, RunMode, ScheduleConfig};
use crate::costs::{max_symmetric_eigenvalue, CostError, CostFamily, StochasticGradConfig};
use crate::faults::{corrupt, ByzantineStrategy};
use crate::filters::{FilterError, FilterKind};
use crate::redundancy::{target_minimizer, RedundancyError};
use crate::rng::{substream, StreamPurpose};
use crate::simnet::{collect_fresh, DelayNetwork, SimnetError, StaleBuffer};
use crate::trace::{ArrivalInfo, StepInfo, Trace, TraceRecord};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("box is invalid: {0}")]
    BadBox(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Simnet(#[from] SimnetError),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
    #[error("step failed at iteration {t}: {source}")]
    StepFailed {
        t: u64,
        #[source]
        source: Box<EngineError>,
    },
    #[error("stale update needs the estimate of iteration {stamp}, history starts at {oldest}")]
    MissingHistory { stamp: u64, oldest: u64 },
}

/// The convex compact feasible set `W`: a product of closed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl FeasibleBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, EngineError> {
        if lower.len() != upper.len() {
            return Err(EngineError::BadBox(format!(
                "lower has {} coordinates, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for j in 0..lower.len() {
            if lower[j] > upper[j] {
                return Err(EngineError::BadBox(format!(
                    "lower[{j}] = {} exceeds upper[{j}] = {}",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-half_width, half_width]^d`.
    pub fn symmetric(d: usize, half_width: f64) -> Result<Self, EngineError> {
        Self::new(
            DVector::from_element(d, -half_width),
            DVector::from_element(d, half_width),
        )
    }

    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self, EngineError> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Euclidean projection: coordinatewise clamp. Non-expansive.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dimension(), |j, _| {
            x[j].clamp(self.lower[j], self.upper[j])
        })
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dimension()
            && (0..x.len()).all(|j| x[j] >= self.lower[j] && x[j] <= self.upper[j])
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    /// `max_{x in W} ||x - target||`: separable over coordinates, attained
    /// at the corner farthest from the target.
    pub fn max_distance_from(&self, target: &DVector<f64>) -> f64 {
        (0..self.dimension())
            .map(|j| {
                let lo = (self.lower[j] - target[j]).abs();
                let hi = (self.upper[j] - target[j]).abs();
                lo.max(hi).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Step-size schedule; harmonic satisfies the divergent-sum /
/// square-summable / nonincreasing hypotheses of the deterministic
/// guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    Constant(f64),
    /// `eta_t = eta0 / (t + 1)`.
    Harmonic(f64),
}

impl StepSchedule {
    pub fn eta(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::Harmonic(eta0) => eta0 / (t as f64 + 1.0),
        }
    }
}

struct AgentSlot {
    strategy: Option<ByzantineStrategy>,
    noise_rng: ChaCha12Rng,
    fault_rng: ChaCha12Rng,
}

/// A fully wired run: family, target, box, filter, schedule, network, and
/// per-agent RNG streams. Deterministic given `(config, seed)`.
pub struct Simulation {
    family: CostFamily,
    mode: RunMode,
    filter: FilterKind,
    schedule: StepSchedule,
    box_w: FeasibleBox,
    target: DVector<f64>,
    noise: StochasticGradConfig,
    n: usize,
    r: usize,
    agents: Vec<AgentSlot>,
    network: DelayNetwork,
    stale: Option<StaleBuffer>,
    /// Estimates `x^{t-i}` for `i <= tau`, newest last; stale mode only.
    history: Vec<DVector<f64>>,
    parallel: bool,
    t: u64,
    x: DVector<f64>,
    seed: u64,
}

impl Simulation {
    /// Builds a simulation for replication 0. See [`Simulation::for_replication`].
    pub fn new(config: &RunConfig, family: CostFamily) -> Result<Self, EngineError> {
        Self::for_replication(config, family, 0)
    }

    /// Wires up one replication. Replications differ only in the per-agent
    /// noise and fault streams; everything else is shared.
    pub fn for_replication(
        config: &RunConfig,
        family: CostFamily,
        replication: u64,
    ) -> Result<Self, EngineError> {
        config.validate_shape()?;
        if family.len() != config.n {
            return Err(ConfigError::FamilySize {
                expected: config.n,
                got: family.len(),
            }
            .into());
        }
        let d = family.dimension();
        if config.box_w.lower.len() != d || config.box_w.upper.len() != d {
            return Err(ConfigError::BoxDimension {
                expected: d,
                got: config.box_w.lower.len(),
            }
            .into());
        }
        let box_w = FeasibleBox::from_bounds(&config.box_w.lower, &config.box_w.upper)?;

        // The target is the minimizer of the actually-honest agents'
        // aggregate: x* when everyone is honest, x_H otherwise. It must lie
        // inside W; a violation is a configuration error, not something to
        // project away.
        let honest = config.honest_agents();
        let target = target_minimizer(&family, &honest, &box_w)?;

        let x0 = match &config.x0 {
            Some(values) => {
                if values.len() != d {
                    return Err(ConfigError::X0Dimension {
                        expected: d,
                        got: values.len(),
                    }
                    .into());
                }
                let x = DVector::from_column_slice(values);
                if !box_w.contains(&x) {
                    return Err(ConfigError::X0OutsideBox.into());
                }
                x
            }
            None => box_w.center(),
        };

        let schedule = match config.schedule {
            ScheduleConfig::Constant { eta } => StepSchedule::Constant(eta),
            ScheduleConfig::Harmonic { eta0 } => {
                let eta0 = eta0.unwrap_or_else(|| {
                    let mu = family
                        .iter()
                        .map(|cost| max_symmetric_eigenvalue(cost.matrix()))
                        .fold(f64::NEG_INFINITY, f64::max);
                    1.0 / (config.n as f64 * mu)
                });
                StepSchedule::Harmonic(eta0)
            }
        };

        let network = DelayNetwork::new(config.delay.clone(), config.n, config.seed)?;
        network.check_budget(config.r)?;

        let agents = config
            .roles
            .iter()
            .enumerate()
            .map(|(agent, role)| AgentSlot {
                strategy: role.strategy(),
                noise_rng: substream(config.seed, replication, agent as u64, StreamPurpose::Noise),
                fault_rng: substream(config.seed, replication, agent as u64, StreamPurpose::Fault),
            })
            .collect();

        let stale = match config.mode {
            RunMode::Stale { tau } => Some(StaleBuffer::new(config.n, tau)),
            _ => None,
        };

        Ok(Self {
            family,
            mode: config.mode,
            filter: config.filter_kind(),
            schedule,
            box_w,
            target,
            noise: match config.mode {
                RunMode::Stochastic { .. } => config.noise_config(),
                _ => StochasticGradConfig::noiseless(),
            },
            n: config.n,
            r: config.r,
            agents,
            network,
            stale,
            history: Vec::new(),
            parallel: config.parallel_agents,
            t: 0,
            x: x0,
            seed: config.seed,
        })
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn feasible_box(&self) -> &FeasibleBox {
        &self.box_w
    }

    pub fn schedule(&self) -> StepSchedule {
        self.schedule
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.x
    }

    /// Every agent's message at the current estimate: the (possibly
    /// stochastic) gradient for honest agents, the corruption for faulty
    /// ones. Per-agent streams make the result independent of evaluation
    /// order.
    fn messages(&mut self) -> Result<Vec<DVector<f64>>, EngineError> {
        let x = &self.x;
        let family = &self.family;
        let noise = &self.noise;
        let compute = |(agent, slot): (usize, &mut AgentSlot)| -> Result<DVector<f64>, CostError> {
            let cost = family.cost(agent);
            let true_gradient =
                crate::costs::stochastic_gradient(cost, x, noise, &mut slot.noise_rng)?;
            Ok(match slot.strategy {
                None => true_gradient,
                Some(strategy) => corrupt(strategy, &true_gradient, cost, x, &mut slot.fault_rng),
            })
        };
        let messages = if self.parallel {
            self.agents
                .par_iter_mut()
                .enumerate()
                .map(compute)
                .collect::<Result<Vec<_>, _>>()?
        } else {
            self.agents
                .iter_mut()
                .enumerate()
                .map(compute)
                .collect::<Result<Vec<_>, _>>()?
        };
        Ok(messages)
    }

    /// One iteration of the selected variant. Returns the step diagnostics;
    /// the estimate advances to `x^{t+1}`.
    pub fn step(&mut self) -> Result<StepInfo, EngineError> {
        let t = self.t;
        self.step_inner().map_err(|source| EngineError::StepFailed {
            t,
            source: Box::new(source),
        })
    }

    fn step_inner(&mut self) -> Result<StepInfo, EngineError> {
        let t = self.t;
        let eta = self.schedule.eta(t);

        let (aggregate, arrivals) = match self.mode {
            RunMode::Sync => {
                let messages = self.messages()?;
                let members: Vec<usize> = (0..self.n).collect();
                let entries: Vec<(usize, DVector<f64>)> =
                    members.iter().map(|&j| (j, messages[j].clone())).collect();
                (self.filter.apply(&entries)?, ArrivalInfo::Fresh { members })
            }
            RunMode::Async | RunMode::Stochastic { .. } => {
                let messages = self.messages()?;
                let delays = self.network.delays_for_timestamp(t);
                let arrival = collect_fresh(&delays, t, self.r)?;
                let entries: Vec<(usize, DVector<f64>)> = arrival
                    .members
                    .iter()
                    .map(|&j| (j, messages[j].clone()))
                    .collect();
                (
                    self.filter.apply(&entries)?,
                    ArrivalInfo::Fresh {
                        members: arrival.members,
                    },
                )
            }
            RunMode::Stale { tau } => {
                let messages = self.messages()?;
                let delays = self.network.delays_for_timestamp(t);
                let buffer = self.stale.as_mut().expect("stale mode owns a buffer");
                for (agent, gradient) in messages.into_iter().enumerate() {
                    buffer.submit(agent, t, delays[agent], gradient);
                }
                let partition = buffer.collect(t, self.n, self.r)?;

                // Ring of the last tau + 1 estimates; used to cross-check
                // every stored gradient against a fresh evaluation at its
                // stamp's estimate.
                self.history.push(self.x.clone());
                let keep = (tau + 1) as usize;
                if self.history.len() > keep {
                    let drop = self.history.len() - keep;
                    self.history.drain(..drop);
                }
                let oldest = t + 1 - self.history.len() as u64;

                let mut aggregate = DVector::zeros(self.family.dimension());
                for agent in 0..self.n {
                    if let Some((stamp, gradient)) = buffer.latest(agent) {
                        if stamp < oldest {
                            return Err(EngineError::MissingHistory { stamp, oldest });
                        }
                        let at = &self.history[(stamp - oldest) as usize];
                        debug_assert!(
                            (self.family.cost(agent).gradient(at)? - gradient).norm() == 0.0,
                            "stored gradient disagrees with its stamp's estimate"
                        );
                        aggregate += gradient;
                    }
                }
                (
                    aggregate,
                    ArrivalInfo::Stale {
                        cells: partition.cells,
                    },
                )
            }
        };

        let phi = (&self.x - &self.target).dot(&aggregate);
        let info = StepInfo {
            agg_norm: aggregate.norm(),
            phi,
            eta,
            arrivals,
            aggregate,
        };

        self.x = self.box_w.project(&(&self.x - &info.aggregate * eta));
        debug_assert!(self.box_w.contains(&self.x));
        self.t += 1;
        Ok(info)
    }

    /// Runs `iterations` steps and collects the trace: one record per
    /// iteration carrying its outgoing step, plus the terminal record.
    pub fn run(mut self, iterations: u64) -> Result<Trace, EngineError> {
        let mut records = Vec::with_capacity(iterations as usize + 1);
        for _ in 0..iterations {
            let x = self.x.clone();
            let dist = (&x - &self.target).norm();
            let t = self.t;
            let info = self.step()?;
            records.push(TraceRecord {
                t,
                x,
                dist_to_target: dist,
                step: Some(info),
            });
        }
        records.push(TraceRecord {
            t: self.t,
            x: self.x.clone(),
            dist_to_target: (&self.x - &self.target).norm(),
            step: None,
        });
        Ok(Trace {
            records,
            target: self.target.iter().copied().collect(),
            seed: self.seed,
        })
    }
}

/// Runs the config once (replication 0).
pub fn run(config: &RunConfig, family: CostFamily) -> Result<Trace, EngineError> {
    Simulation::new(config, family)?.run(config.iterations)
}

/// Runs all replications in parallel; traces come back in replication order.
pub fn run_replicated(config: &RunConfig, family: &CostFamily) -> Result<Vec<Trace>, EngineError> {
    (0..config.replications as u64)
        .into_par_iter()
        .map(|replication| {
            Simulation::for_replication(config, family.clone(), replication)?.run(config.iterations)
        })
        .collect()
}
