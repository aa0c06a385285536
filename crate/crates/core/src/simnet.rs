//! Simulated message passing: per-agent response delays, first-`(n - r)`
//! arrival sets, and stale-gradient bookkeeping.
//!
//! Time is discretized to iterations. An agent whose delay for timestamp `t`
//! is `delta` has that gradient available from iteration `t + delta` on;
//! arrival-time ties break by agent id. One `DelayNetwork` drives one run,
//! drawing per-agent delays from independent seeded streams so schedules
//! are reproducible.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{substream, StreamPurpose};

#[derive(Debug, Error)]
pub enum SimnetError {
    #[error("need n - r >= 1, got n = {n}, r = {r}")]
    EmptyQuorum { n: usize, r: usize },
    #[error("delay model yields only {available} finite responders at t = {t}, need {needed}")]
    NotEnoughResponders {
        t: u64,
        available: usize,
        needed: usize,
    },
    #[error("stale quorum violated at t = {t}: |T^t| = {got} < n - r = {needed}")]
    StaleQuorum { t: u64, got: usize, needed: usize },
    #[error("FixedSlowSet marks {slow} agents slow, above the straggler budget r = {r}")]
    SlowSetTooLarge { slow: usize, r: usize },
    #[error("geometric tail probability must lie in (0, 1], got {0}")]
    BadTailProbability(f64),
}

/// Per-agent response-delay model, in whole iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DelayModel {
    /// Every agent answers after exactly `iterations` iterations.
    Constant { iterations: u64 },
    /// Geometric delay: each iteration the reply lands with probability `p`.
    GeometricTail { p: f64 },
    /// Agents in `slow` answer after `extra` additional iterations
    /// (`None` = never); everyone else answers immediately.
    FixedSlowSet {
        slow: BTreeSet<usize>,
        extra: Option<u64>,
    },
    /// Deterministic rotation: for timestamp `t`, agent `t mod n` answers
    /// after `extra` iterations (`None` = never); everyone else immediately.
    RotatingSlow { extra: Option<u64> },
}

/// The first `n - r` responders for one timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalSet {
    pub iteration: u64,
    /// Members sorted by agent id; exactly `n - r` of them.
    pub members: Vec<usize>,
    /// Members sorted by `(arrival time, agent id)`.
    pub arrival_order: Vec<usize>,
}

/// Draws delays for a run. Owns one stream per agent so draws do not depend
/// on evaluation order.
pub struct DelayNetwork {
    model: DelayModel,
    n: usize,
    rngs: Vec<ChaCha12Rng>,
}

impl DelayNetwork {
    pub fn new(model: DelayModel, n: usize, master_seed: u64) -> Result<Self, SimnetError> {
        if let DelayModel::GeometricTail { p } = model {
            if !(p > 0.0 && p <= 1.0) {
                return Err(SimnetError::BadTailProbability(p));
            }
        }
        let rngs = (0..n)
            .map(|agent| substream(master_seed, 0, agent as u64, StreamPurpose::Delay))
            .collect();
        Ok(Self { model, n, rngs })
    }

    /// Validates the model against the straggler budget.
    pub fn check_budget(&self, r: usize) -> Result<(), SimnetError> {
        match &self.model {
            DelayModel::FixedSlowSet { slow, .. } => {
                if slow.len() > r {
                    return Err(SimnetError::SlowSetTooLarge {
                        slow: slow.len(),
                        r,
                    });
                }
            }
            DelayModel::RotatingSlow { extra: None } if r < 1 => {
                return Err(SimnetError::SlowSetTooLarge { slow: 1, r });
            }
            _ => {}
        }
        Ok(())
    }

    /// Delay of each agent's reply for timestamp `t`; `None` never arrives.
    ///
    /// Random models consume one draw per agent per timestamp, so the
    /// stream layout is independent of who ends up being used.
    pub fn delays_for_timestamp(&mut self, t: u64) -> Vec<Option<u64>> {
        match &self.model {
            DelayModel::Constant { iterations } => vec![Some(*iterations); self.n],
            DelayModel::GeometricTail { p } => {
                let p = *p;
                self.rngs
                    .iter_mut()
                    .map(|rng| {
                        let u: f64 = rng.gen();
                        Some(geometric_from_uniform(u, p))
                    })
                    .collect()
            }
            DelayModel::FixedSlowSet { slow, extra } => (0..self.n)
                .map(|agent| {
                    if slow.contains(&agent) {
                        *extra
                    } else {
                        Some(0)
                    }
                })
                .collect(),
            DelayModel::RotatingSlow { extra } => {
                let slow = (t % self.n as u64) as usize;
                (0..self.n)
                    .map(|agent| if agent == slow { *extra } else { Some(0) })
                    .collect()
            }
        }
    }
}

/// Inverse-CDF geometric sample: number of whole iterations before the
/// reply lands, success probability `p` per iteration.
fn geometric_from_uniform(u: f64, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64
}

/// First `n - r` responders for timestamp `t` under the given delays.
pub fn collect_fresh(delays: &[Option<u64>], t: u64, r: usize) -> Result<ArrivalSet, SimnetError> {
    let n = delays.len();
    if n == 0 || r >= n {
        return Err(SimnetError::EmptyQuorum { n, r });
    }
    let needed = n - r;
    let mut responders: Vec<(u64, usize)> = delays
        .iter()
        .enumerate()
        .filter_map(|(agent, d)| d.map(|delay| (delay, agent)))
        .collect();
    if responders.len() < needed {
        return Err(SimnetError::NotEnoughResponders {
            t,
            available: responders.len(),
            needed,
        });
    }
    responders.sort_unstable();
    let arrival_order: Vec<usize> = responders[..needed].iter().map(|&(_, a)| a).collect();
    let mut members = arrival_order.clone();
    members.sort_unstable();
    Ok(ArrivalSet {
        iteration: t,
        members,
        arrival_order,
    })
}

/// Stale-gradient bookkeeping: per agent, the latest timestamped gradient
/// that has arrived, no older than `tau` iterations.
#[derive(Debug, Clone)]
pub struct StaleBuffer {
    tau: u64,
    /// `latest[agent] = (stamp, gradient at the stamp's estimate)`.
    latest: Vec<Option<(u64, nalgebra::DVector<f64>)>>,
    /// Replies in flight: `(stamp, arrival iteration, gradient)`.
    pending: Vec<Vec<(u64, u64, nalgebra::DVector<f64>)>>,
}

/// The partition of used agents by staleness at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StalePartition {
    pub iteration: u64,
    /// `cells[i]` = agents whose freshest arrived gradient was computed at
    /// `t - i`, ids sorted; cells are pairwise disjoint by construction.
    pub cells: Vec<Vec<usize>>,
}

impl StalePartition {
    /// All used agents (the union of the cells), sorted by id.
    pub fn used_agents(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.cells.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }
}

impl StaleBuffer {
    pub fn new(n: usize, tau: u64) -> Self {
        Self {
            tau,
            latest: vec![None; n],
            pending: vec![Vec::new(); n],
        }
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    /// Records that `agent`'s gradient for timestamp `stamp` will arrive
    /// `delay` iterations later (`None` = never).
    pub fn submit(
        &mut self,
        agent: usize,
        stamp: u64,
        delay: Option<u64>,
        gradient: nalgebra::DVector<f64>,
    ) {
        if let Some(delay) = delay {
            self.pending[agent].push((stamp, stamp + delay, gradient));
        }
    }

    /// Delivers everything that has arrived by iteration `t`, drops entries
    /// older than `t - tau`, and returns the staleness partition.
    ///
    /// Fails when fewer than `n - r` agents have a usable gradient, which
    /// violates the stale-quorum hypothesis the convergence guarantee needs.
    pub fn collect(&mut self, t: u64, n: usize, r: usize) -> Result<StalePartition, SimnetError> {
        let horizon = t.saturating_sub(self.tau);
        for agent in 0..n {
            let latest = &mut self.latest[agent];
            self.pending[agent].retain(|(stamp, arrival, gradient)| {
                if *arrival <= t {
                    let fresher = latest
                        .as_ref()
                        .map(|(have, _)| stamp > have)
                        .unwrap_or(true);
                    if fresher {
                        *latest = Some((*stamp, gradient.clone()));
                    }
                    false
                } else {
                    *stamp >= horizon // still in flight and worth waiting for
                }
            });
            if let Some((stamp, _)) = latest {
                if *stamp < horizon {
                    *latest = None; // too stale to use
                }
            }
        }

        let mut cells: Vec<Vec<usize>> = vec![Vec::new(); self.tau as usize + 1];
        let mut used = 0usize;
        for (agent, slot) in self.latest.iter().enumerate() {
            if let Some((stamp, _)) = slot {
                let age = (t - stamp) as usize;
                cells[age].push(agent);
                used += 1;
            }
        }
        if used < n - r {
            return Err(SimnetError::StaleQuorum {
                t,
                got: used,
                needed: n - r,
            });
        }
        Ok(StalePartition {
            iteration: t,
            cells,
        })
    }

    /// The stored gradient for `agent`, with its stamp.
    pub fn latest(&self, agent: usize) -> Option<(u64, &nalgebra::DVector<f64>)> {
        self.latest[agent].as_ref().map(|(s, g)| (*s, g))
    }
}
