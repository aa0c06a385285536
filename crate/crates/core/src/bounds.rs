//! Closed-form convergence constants for every supported problem variant:
//! the resilience margin `alpha`, the deterministic error radii `D` and
//! `D*`, and the stochastic step ceiling `eta_bar`, rate `rho`, and noise
//! floor `M`.
//!
//! The Byzantine variants use the proof-consistent margin
//! `alpha = ((n - f) gamma - 2 (f + r) mu) / (m gamma)` with `m = n - r`,
//! equivalently `1 - (f - r)/m - (2 mu / gamma) (f + r)/m`: the identity
//! `(n - f) gamma - 2 (f + r) mu = m gamma alpha` is what the convergence
//! argument rests on, and it pins the minus sign on the last term. At
//! `r = 0` this margin reduces to `1 - (f / n) (gamma + 2 mu) / gamma`,
//! matching the synchronous Byzantine variant.

use serde::{Deserialize, Serialize};

use crate::config::StochasticProblem;

/// Which guarantee the constants belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundsVariant {
    /// Asynchronous, fault-free, sum aggregation; radius `D`.
    Thm1,
    /// Stale-gradient variant; identical constants to `Thm1`.
    Thm2,
    /// Asynchronous Byzantine with the CGE filter; radius `D*`, margin `xi`.
    Thm3Cge,
    /// Stochastic synchronous Byzantine (CGE).
    Thm4Bs,
    /// Stochastic asynchronous fault-free (sum).
    Thm4Cs,
    /// Stochastic asynchronous Byzantine (CGE).
    Thm4Ds,
}

/// Shared problem constants every bound is evaluated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: usize,
    pub f: usize,
    pub r: usize,
    /// Lipschitz constant of individual gradients.
    pub mu: f64,
    /// Strong-convexity constant of subset-average costs.
    pub gamma: f64,
    /// Redundancy parameter of the family.
    pub epsilon: f64,
}

/// Evaluated constants of one guarantee. Fields not defined by the variant
/// stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds {
    pub variant: BoundsVariant,
    /// Resilience margin; every guarantee requires `alpha > 0`.
    pub alpha: f64,
    /// `alpha > 0`, plus `2n >= 4f + r` for the DS variant.
    pub feasible: bool,
    /// Asymptotic radius: `D` (Thm1/2) or `D*` (Thm3).
    pub d_bound: Option<f64>,
    /// Thm3 inner-product floor.
    pub xi: Option<f64>,
    /// Thm3 slack added to the radius.
    pub delta: Option<f64>,
    /// Step ceiling for the stochastic variants.
    pub eta_bar: Option<f64>,
    /// Geometric rate; in `[0, 1)` whenever `0 < eta < eta_bar`.
    pub rho: Option<f64>,
    /// Per-step noise/redundancy floor.
    pub m_margin: Option<f64>,
    /// `max_{x in W} ||x - target||`, when a box was supplied.
    pub diameter: Option<f64>,
    /// `M / (1 - rho)`: the asymptotic mean-square radius.
    pub asymptotic_radius: Option<f64>,
}

impl TheoremBounds {
    fn bare(variant: BoundsVariant, alpha: f64, feasible: bool) -> Self {
        Self {
            variant,
            alpha,
            feasible,
            d_bound: None,
            xi: None,
            delta: None,
            eta_bar: None,
            rho: None,
            m_margin: None,
            diameter: None,
            asymptotic_radius: None,
        }
    }

    /// Mean-square bound at iteration `t`:
    /// `rho^{t+1} ||x0 - target||^2 + (1 - rho^{t+1}) / (1 - rho) * M`.
    pub fn expectation_curve(&self, initial_sq_dist: f64, t: u64) -> Option<f64> {
        let rho = self.rho?;
        let m = self.m_margin?;
        let decay = rho.powi((t + 1) as i32);
        Some(decay * initial_sq_dist + (1.0 - decay) / (1.0 - rho) * m)
    }
}

/// Fault-free asynchronous constants: `alpha = 1 - (r/n)(mu/gamma)` and
/// `D = (2 r mu / (alpha gamma)) epsilon`.
pub fn bounds_thm1(p: &ProblemParams) -> TheoremBounds {
    thm1_like(BoundsVariant::Thm1, p)
}

/// The stale-gradient variant carries exactly the same constants.
pub fn bounds_thm2(p: &ProblemParams) -> TheoremBounds {
    thm1_like(BoundsVariant::Thm2, p)
}

fn thm1_like(variant: BoundsVariant, p: &ProblemParams) -> TheoremBounds {
    let (n, r) = (p.n as f64, p.r as f64);
    let alpha = 1.0 - (r / n) * (p.mu / p.gamma);
    let feasible = alpha > 0.0;
    let mut out = TheoremBounds::bare(variant, alpha, feasible);
    if feasible {
        out.d_bound = Some(2.0 * r * p.mu / (alpha * p.gamma) * p.epsilon);
    }
    out
}

/// CGE constants for the asynchronous Byzantine guarantee:
/// `D* = 4 mu (f + r) epsilon / (alpha gamma) + delta` and
/// `xi = alpha m gamma delta D*`.
pub fn bounds_thm3_cge(p: &ProblemParams, delta: f64) -> TheoremBounds {
    let m = (p.n - p.r) as f64;
    let alpha = cge_alpha(p);
    let feasible = alpha > 0.0;
    let mut out = TheoremBounds::bare(BoundsVariant::Thm3Cge, alpha, feasible);
    out.delta = Some(delta);
    if feasible {
        let d_star = 4.0 * p.mu * (p.f + p.r) as f64 * p.epsilon / (alpha * p.gamma) + delta;
        out.d_bound = Some(d_star);
        out.xi = Some(alpha * m * p.gamma * delta * d_star);
    }
    out
}

/// Proof-consistent CGE margin, `((n - f) gamma - 2 (f + r) mu) / (m gamma)`.
fn cge_alpha(p: &ProblemParams) -> f64 {
    let m = (p.n - p.r) as f64;
    ((p.n - p.f) as f64 * p.gamma - 2.0 * (p.f + p.r) as f64 * p.mu) / (m * p.gamma)
}

/// Stochastic constants for the selected problem shape.
///
/// `Bs` reads only `f` (formulas have `r = 0`), `Cs` only `r` (`f = 0`),
/// `Ds` both; `diameter` is `Gamma = max_{x in W} ||x - target||`.
pub fn bounds_thm4(
    problem: StochasticProblem,
    p: &ProblemParams,
    sigma: f64,
    eta: f64,
    diameter: f64,
) -> TheoremBounds {
    let n = p.n as f64;
    let f = p.f as f64;
    let r = p.r as f64;
    let (variant, alpha, eta_bar, rho, m_margin, feasible) = match problem {
        StochasticProblem::Bs => {
            let alpha = 1.0 - (f / n) * ((p.gamma + 2.0 * p.mu) / p.gamma);
            let nf = n - f;
            let eta_bar = 2.0 * n * p.gamma * alpha / (nf * nf * p.mu * p.mu);
            let rho = 1.0 - 2.0 * nf * eta * p.gamma
                + 4.0 * f * eta * p.mu
                + nf * nf * eta * eta * p.mu * p.mu;
            let m = 4.0 * n * eta * p.mu * p.epsilon * (2.0 * f + nf * nf * eta * p.mu) * diameter
                + 4.0 * n * n * nf * nf * eta * eta * p.mu * p.mu * p.epsilon * p.epsilon
                + 2.0 * f * eta * sigma * diameter
                + nf * nf * eta * eta * sigma * sigma;
            (BoundsVariant::Thm4Bs, alpha, eta_bar, rho, m, alpha > 0.0)
        }
        StochasticProblem::Cs => {
            let alpha = 1.0 - (r / n) * (p.mu / p.gamma);
            let nr = n - r;
            let eta_bar = 2.0 * n * p.gamma * alpha / (nr * nr * p.mu * p.mu);
            let rho =
                1.0 - 2.0 * (n * p.gamma - r * p.mu) * eta + nr * nr * eta * eta * p.mu * p.mu;
            let m = 4.0 * n * eta * p.mu * p.epsilon * (r + nr * nr * eta * p.mu) * diameter
                + 4.0 * n * n * nr * nr * eta * eta * p.mu * p.mu * p.epsilon * p.epsilon
                + nr * nr * eta * eta * sigma * sigma;
            (BoundsVariant::Thm4Cs, alpha, eta_bar, rho, m, alpha > 0.0)
        }
        StochasticProblem::Ds => {
            let alpha = cge_alpha(p);
            let m_agents = n - r;
            let mf = m_agents - f;
            let eta_bar = 2.0 * m_agents * p.gamma * alpha / (mf * mf * p.mu * p.mu);
            let rho = 1.0 - 2.0 * (n - f) * eta * p.gamma
                + 4.0 * (f + r) * eta * p.mu
                + mf * mf * eta * eta * p.mu * p.mu;
            let m = 4.0
                * m_agents
                * eta
                * p.mu
                * p.epsilon
                * (2.0 * (f + r) + mf * mf * eta * p.mu)
                * diameter
                + 4.0
                    * m_agents
                    * m_agents
                    * mf
                    * mf
                    * eta
                    * eta
                    * p.mu
                    * p.mu
                    * p.epsilon
                    * p.epsilon
                + 2.0 * (f + r) * eta * sigma * diameter
                + mf * mf * eta * eta * sigma * sigma;
            // Keeping rho >= 0 additionally needs 2n >= 4f + r.
            let feasible = alpha > 0.0 && 2 * p.n >= 4 * p.f + p.r;
            (BoundsVariant::Thm4Ds, alpha, eta_bar, rho, m, feasible)
        }
    };
    let mut out = TheoremBounds::bare(variant, alpha, feasible);
    out.eta_bar = Some(eta_bar);
    out.rho = Some(rho);
    out.m_margin = Some(m_margin);
    out.diameter = Some(diameter);
    if rho < 1.0 {
        out.asymptotic_radius = Some(m_margin / (1.0 - rho));
    }
    out
}

/// `0 <= rho < 1`: the contraction condition the stochastic guarantees
/// assert under `0 < eta < eta_bar`.
pub fn check_rho_range(bounds: &TheoremBounds) -> bool {
    matches!(bounds.rho, Some(rho) if (0.0..1.0).contains(&rho))
}
