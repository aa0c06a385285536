//! Per-iteration run records and their CSV / JSON serializations.
//!
//! A trace holds one record per iteration plus the initial state. The record
//! for iteration `t` carries the estimate entering the iteration and the
//! diagnostics of the step taken from it; the final record holds only the
//! terminal estimate. Serialization is byte-stable: floats print in Rust's
//! shortest round-trip form, rows in iteration order.

use nalgebra::DVector;
use serde::Serialize;

/// Who contributed to one update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ArrivalInfo {
    /// Fresh modes: the members of `S^t`, sorted by id.
    Fresh { members: Vec<usize> },
    /// Stale mode: used agents by staleness; `cells[i]` answered for `t - i`.
    Stale { cells: Vec<Vec<usize>> },
}

impl ArrivalInfo {
    /// All contributing agents, sorted by id.
    pub fn used_agents(&self) -> Vec<usize> {
        match self {
            ArrivalInfo::Fresh { members } => members.clone(),
            ArrivalInfo::Stale { cells } => {
                let mut all: Vec<usize> = cells.iter().flatten().copied().collect();
                all.sort_unstable();
                all
            }
        }
    }

    /// Bitmask of contributing agents (bit `i` = agent `i`); traces are
    /// limited to `n <= 64` agents, which the enumeration caps enforce
    /// anyway.
    pub fn bitmask(&self) -> u64 {
        self.used_agents()
            .iter()
            .fold(0u64, |mask, &agent| mask | (1u64 << agent))
    }
}

/// Diagnostics of the step taken from one iteration's estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub aggregate: DVector<f64>,
    pub agg_norm: f64,
    /// `phi_t = <x^t - target, aggregate>`; logged, never used for control.
    pub phi: f64,
    pub eta: f64,
    pub arrivals: ArrivalInfo,
}

/// State at one iteration, with the outgoing step when one was taken.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub x: DVector<f64>,
    pub dist_to_target: f64,
    pub step: Option<StepInfo>,
}

/// A full run: records for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub target: Vec<f64>,
    pub seed: u64,
}

impl Trace {
    /// Maximum distance to target over the last `window` records.
    pub fn tail_max_distance(&self, window: usize) -> f64 {
        let start = self.records.len().saturating_sub(window);
        self.records[start..]
            .iter()
            .map(|rec| rec.dist_to_target)
            .fold(0.0, f64::max)
    }

    pub fn final_estimate(&self) -> &DVector<f64> {
        &self
            .records
            .last()
            .expect("a trace always has the initial record")
            .x
    }

    /// CSV with one row per record. `config_hash` goes into the provenance
    /// header comment alongside the master seed.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# seed={} config_hash={}\n",
            self.seed, config_hash
        ));
        out.push_str("t,dist,agg_norm,phi,eta,arrival_bitmask\n");
        for rec in &self.records {
            match &rec.step {
                Some(step) => out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    rec.t,
                    rec.dist_to_target,
                    step.agg_norm,
                    step.phi,
                    step.eta,
                    step.arrivals.bitmask()
                )),
                None => out.push_str(&format!("{},{},,,,\n", rec.t, rec.dist_to_target)),
            }
        }
        out
    }

    /// JSON document; `include_vectors` additionally embeds the estimate and
    /// aggregate vectors per record (they dominate the file size).
    pub fn to_json(&self, config_hash: &str, include_vectors: bool) -> String {
        #[derive(Serialize)]
        struct StepDoc<'a> {
            agg_norm: f64,
            phi: f64,
            eta: f64,
            arrivals: &'a ArrivalInfo,
            #[serde(skip_serializing_if = "Option::is_none")]
            aggregate: Option<Vec<f64>>,
        }
        #[derive(Serialize)]
        struct RecordDoc<'a> {
            t: u64,
            dist: f64,
            #[serde(skip_serializing_if = "Option::is_none")]
            x: Option<Vec<f64>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            step: Option<StepDoc<'a>>,
        }
        #[derive(Serialize)]
        struct TraceDoc<'a> {
            seed: u64,
            config_hash: &'a str,
            target: &'a [f64],
            records: Vec<RecordDoc<'a>>,
        }

        let records = self
            .records
            .iter()
            .map(|rec| RecordDoc {
                t: rec.t,
                dist: rec.dist_to_target,
                x: include_vectors.then(|| rec.x.iter().copied().collect()),
                step: rec.step.as_ref().map(|step| StepDoc {
                    agg_norm: step.agg_norm,
                    phi: step.phi,
                    eta: step.eta,
                    arrivals: &step.arrivals,
                    aggregate: include_vectors.then(|| step.aggregate.iter().copied().collect()),
                }),
            })
            .collect();
        serde_json::to_string_pretty(&TraceDoc {
            seed: self.seed,
            config_hash,
            target: &self.target,
            records,
        })
        .expect("trace serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trace() -> Trace {
        let step = StepInfo {
            aggregate: DVector::from_vec(vec![1.0, 0.0]),
            agg_norm: 1.0,
            phi: 0.5,
            eta: 0.1,
            arrivals: ArrivalInfo::Fresh {
                members: vec![0, 2],
            },
        };
        Trace {
            records: vec![
                TraceRecord {
                    t: 0,
                    x: DVector::from_vec(vec![0.0, 0.0]),
                    dist_to_target: 1.0,
                    step: Some(step),
                },
                TraceRecord {
                    t: 1,
                    x: DVector::from_vec(vec![0.1, 0.0]),
                    dist_to_target: 0.9,
                    step: None,
                },
            ],
            target: vec![1.0, 0.0],
            seed: 42,
        }
    }

    #[test]
    fn arrival_bitmask_sets_agent_bits() {
        let info = ArrivalInfo::Fresh {
            members: vec![0, 2, 5],
        };
        assert_eq!(info.bitmask(), 0b100101);
        let stale = ArrivalInfo::Stale {
            cells: vec![vec![1], vec![0]],
        };
        assert_eq!(stale.bitmask(), 0b11);
        assert_eq!(stale.used_agents(), vec![0, 1]);
    }

    #[test]
    fn csv_layout_is_stable() {
        let text = tiny_trace().to_csv("deadbeef");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed=42 config_hash=deadbeef");
        assert_eq!(lines[1], "t,dist,agg_norm,phi,eta,arrival_bitmask");
        assert_eq!(lines[2], "0,1,1,0.5,0.1,5");
        assert_eq!(lines[3], "1,0.9,,,,");
    }

    #[test]
    fn json_vector_gating() {
        let slim = tiny_trace().to_json("x", false);
        assert!(!slim.contains("\"aggregate\""));
        let full = tiny_trace().to_json("x", true);
        assert!(full.contains("\"aggregate\""));
        assert!(full.contains("\"x\""));
    }

    #[test]
    fn tail_max_distance_windows() {
        let trace = tiny_trace();
        assert_eq!(trace.tail_max_distance(1), 0.9);
        assert_eq!(trace.tail_max_distance(10), 1.0);
    }
}
