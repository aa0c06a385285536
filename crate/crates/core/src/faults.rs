//! Byzantine behavior: what a faulty agent sends instead of its gradient.
//!
//! The fault set is fixed for a whole run; strategies never mutate the cost
//! family or any other agent's state.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::costs::QuadraticCost;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ByzantineStrategy {
    /// Sends the negation of the gradient it would have sent.
    ReverseGradient,
    /// Sends `scale` times a vector of iid standard normals.
    RandomVector { scale: f64 },
    /// Sends its true message scaled so the norm is `scale` times the norm
    /// of its own true gradient (other agents' norms are not observable).
    LargeNorm { scale: f64 },
    /// Reports gradients of its cost with `b` negated; the quadratic analog
    /// of flipping training labels.
    CenterFlip,
}

/// The corrupted message for one agent at one iteration. Deterministic given
/// the agent's fault stream.
pub fn corrupt(
    strategy: ByzantineStrategy,
    true_gradient: &DVector<f64>,
    cost: &QuadraticCost,
    x: &DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> DVector<f64> {
    match strategy {
        ByzantineStrategy::ReverseGradient => -true_gradient,
        ByzantineStrategy::RandomVector { scale } => {
            let v = DVector::from_fn(true_gradient.len(), |_, _| standard_normal(rng));
            v * scale
        }
        ByzantineStrategy::LargeNorm { scale } => true_gradient * scale,
        ByzantineStrategy::CenterFlip => cost
            .center_flipped()
            .gradient(x)
            .expect("dimensions already checked by the caller"),
    }
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
