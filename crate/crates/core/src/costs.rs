//! Agent cost model: quadratics with exact gradients, stochastic gradients
//! with a strict variance bound, and certification of the smoothness and
//! strong-convexity constants.
//!
//! Each agent `i` owns `Q_i(x) = 1/2 x' A_i x - b_i' x` with `A_i` symmetric
//! positive semidefinite, so `grad Q_i(x) = A_i x - b_i` exactly. Restricting
//! to quadratics makes the Lipschitz constant `mu` and the subset-average
//! strong-convexity constant `gamma` exactly computable from spectra, and
//! gives every subset-aggregate minimizer a closed form.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Elementwise symmetry tolerance accepted at construction.
const SYMMETRY_TOL: f64 = 1e-12;
/// Most-negative eigenvalue accepted as "semidefinite up to roundoff".
const PSD_TOL: f64 = -1e-9;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("matrix must be square and match b: A is {rows}x{cols}, b has {blen}")]
    Shape {
        rows: usize,
        cols: usize,
        blen: usize,
    },
    #[error("matrix is not symmetric: |A[{i},{j}] - A[{j},{i}]| = {delta:e}")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("matrix is not positive semidefinite: smallest eigenvalue {lambda_min:e}")]
    NotPsd { lambda_min: f64 },
    #[error("dimension mismatch: cost has dimension {expected}, input has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("family must contain at least one cost")]
    EmptyFamily,
    #[error("family costs disagree on dimension: cost {index} has {got}, expected {expected}")]
    MixedDimensions {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("subset_floor {floor} out of range 1..={n}")]
    BadSubsetFloor { floor: usize, n: usize },
    #[error("subset enumeration over {n} agents exceeds the cap of {cap}; refusing to sample")]
    EnumerationCap { n: usize, cap: usize },
    #[error("sigma must be nonnegative, got {0}")]
    NegativeSigma(f64),
}

/// One agent's quadratic cost `1/2 x' A x - b' x`.
///
/// `A` is symmetrized (averaged with its transpose) at construction, after
/// checking the input was symmetric within `1e-12` elementwise and has no
/// eigenvalue below roundoff-level negative.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl QuadraticCost {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, CostError> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(CostError::Shape {
                rows: a.nrows(),
                cols: a.ncols(),
                blen: b.len(),
            });
        }
        for i in 0..a.nrows() {
            for j in (i + 1)..a.ncols() {
                let delta = (a[(i, j)] - a[(j, i)]).abs();
                if delta > SYMMETRY_TOL {
                    return Err(CostError::NotSymmetric { i, j, delta });
                }
            }
        }
        let a = (&a + a.transpose()) * 0.5;
        let lambda_min = min_symmetric_eigenvalue(&a);
        if lambda_min < PSD_TOL {
            return Err(CostError::NotPsd { lambda_min });
        }
        Ok(Self { a, b })
    }

    /// Scalar convenience: `1/2 a (x - c)^2` shifted so the minimizer is `c`.
    pub fn scalar(curvature: f64, center: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, curvature),
            DVector::from_element(1, curvature * center),
        )
        .expect("scalar quadratic with nonnegative curvature is valid")
    }

    /// Identity-curvature cost in dimension `d` with minimizer `center`.
    pub fn isotropic(center: DVector<f64>) -> Self {
        let d = center.len();
        Self::new(DMatrix::identity(d, d), center).expect("identity curvature is valid")
    }

    pub fn dimension(&self) -> usize {
        self.b.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    /// Cost value `1/2 x' A x - b' x`.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64, CostError> {
        self.check_dim(x)?;
        Ok(0.5 * (x.transpose() * &self.a * x)[(0, 0)] - self.b.dot(x))
    }

    /// Exact gradient `A x - b`.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, CostError> {
        self.check_dim(x)?;
        Ok(&self.a * x - &self.b)
    }

    /// The cost with `b` negated. A faulty agent reporting gradients of this
    /// cost is the quadratic analog of flipping its training labels.
    pub fn center_flipped(&self) -> Self {
        Self {
            a: self.a.clone(),
            b: -&self.b,
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), CostError> {
        if x.len() != self.dimension() {
            return Err(CostError::DimensionMismatch {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// The `n` agents' costs, all sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CostFamily {
    dimension: usize,
    agents: Vec<QuadraticCost>,
}

impl CostFamily {
    pub fn new(agents: Vec<QuadraticCost>) -> Result<Self, CostError> {
        let first = agents.first().ok_or(CostError::EmptyFamily)?;
        let dimension = first.dimension();
        for (index, cost) in agents.iter().enumerate() {
            if cost.dimension() != dimension {
                return Err(CostError::MixedDimensions {
                    index,
                    got: cost.dimension(),
                    expected: dimension,
                });
            }
        }
        Ok(Self { dimension, agents })
    }

    /// The worked one-dimensional family: unit curvature, centers 0, 1, 2.
    pub fn line3() -> Self {
        Self::new(vec![
            QuadraticCost::scalar(1.0, 0.0),
            QuadraticCost::scalar(1.0, 1.0),
            QuadraticCost::scalar(1.0, 2.0),
        ])
        .expect("line3 is a valid family")
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn cost(&self, agent: usize) -> &QuadraticCost {
        &self.agents[agent]
    }

    pub fn iter(&self) -> impl Iterator<Item = &QuadraticCost> {
        self.agents.iter()
    }

    /// Parses the on-disk JSON document
    /// `{"dimension": d, "agents": [{"A": [[..]], "b": [..]}, ..]}`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let doc: FamilyDocument = serde_json::from_str(text).map_err(|e| e.to_string())?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        let doc = FamilyDocument::from(self);
        serde_json::to_string_pretty(&doc).expect("family document serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct AgentDocument {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FamilyDocument {
    dimension: usize,
    agents: Vec<AgentDocument>,
}

impl From<&CostFamily> for FamilyDocument {
    fn from(family: &CostFamily) -> Self {
        let agents = family
            .agents
            .iter()
            .map(|cost| AgentDocument {
                a: (0..cost.a.nrows())
                    .map(|i| (0..cost.a.ncols()).map(|j| cost.a[(i, j)]).collect())
                    .collect(),
                b: cost.b.iter().copied().collect(),
            })
            .collect();
        FamilyDocument {
            dimension: family.dimension,
            agents,
        }
    }
}

impl TryFrom<FamilyDocument> for CostFamily {
    type Error = String;

    fn try_from(doc: FamilyDocument) -> Result<Self, String> {
        let mut agents = Vec::with_capacity(doc.agents.len());
        for (idx, agent) in doc.agents.into_iter().enumerate() {
            let d = agent.b.len();
            if d != doc.dimension || agent.a.len() != d || agent.a.iter().any(|row| row.len() != d)
            {
                return Err(format!("agent {idx}: A/b shapes disagree with dimension"));
            }
            let a = DMatrix::from_fn(d, d, |i, j| agent.a[i][j]);
            let cost = QuadraticCost::new(a, DVector::from_vec(agent.b))
                .map_err(|e| format!("agent {idx}: {e}"))?;
            agents.push(cost);
        }
        CostFamily::new(agents).map_err(|e| e.to_string())
    }
}

/// Exact `mu` and `gamma` for a family, certified by eigen-decomposition and
/// exhaustive subset enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCertificate {
    /// Lipschitz constant of every individual gradient:
    /// `max_i lambda_max(A_i)`.
    pub mu: f64,
    /// Strong-convexity constant of subset-average costs:
    /// `min over |S| >= subset_floor of lambda_min(avg_{i in S} A_i)`.
    pub gamma: f64,
    /// Smallest subset size over which `gamma` was certified.
    pub subset_floor: usize,
}

/// Default largest `n` for which subset enumeration is attempted.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Certifies `mu` and `gamma` over all subsets of size `>= subset_floor`.
///
/// Fails loudly when `n` exceeds the enumeration cap; there is no sampling
/// fallback.
pub fn certify_constants(
    family: &CostFamily,
    subset_floor: usize,
) -> Result<SmoothnessCertificate, CostError> {
    certify_constants_capped(family, subset_floor, DEFAULT_ENUMERATION_CAP)
}

pub fn certify_constants_capped(
    family: &CostFamily,
    subset_floor: usize,
    cap: usize,
) -> Result<SmoothnessCertificate, CostError> {
    let n = family.len();
    if subset_floor == 0 || subset_floor > n {
        return Err(CostError::BadSubsetFloor {
            floor: subset_floor,
            n,
        });
    }
    if n > cap {
        return Err(CostError::EnumerationCap { n, cap });
    }

    let mu = family
        .iter()
        .map(|cost| max_symmetric_eigenvalue(cost.matrix()))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut gamma = f64::INFINITY;
    for size in subset_floor..=n {
        for subset in (0..n).combinations(size) {
            let mut sum = DMatrix::zeros(family.dimension(), family.dimension());
            for &i in &subset {
                sum += family.cost(i).matrix();
            }
            let avg = sum / size as f64;
            gamma = gamma.min(min_symmetric_eigenvalue(&avg));
        }
    }
    // Averages of PSD matrices cannot out-curve the stiffest individual
    // direction, so gamma <= mu always holds here; clamp roundoff anyway.
    let gamma = gamma.max(0.0).min(mu);
    Ok(SmoothnessCertificate {
        mu,
        gamma,
        subset_floor,
    })
}

/// How stochastic-gradient noise is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Isotropic Gaussian with per-coordinate variance `sigma^2 / d`,
    /// rejection-truncated to the ball of radius `6 sigma`.
    GaussianIsotropicTruncated,
    /// Uniform direction with radius `sigma * sqrt(2 U)`, `U ~ U(0,1)`,
    /// so the second moment is exactly `sigma^2`.
    UniformSphere,
}

/// Stochastic gradient configuration: noise budget and shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticGradConfig {
    /// Standard-deviation bound: `E ||noise||^2 <= sigma^2`.
    pub sigma: f64,
    /// Nominal batch size; recorded in configs for provenance, the noise
    /// budget `sigma` is already the post-averaging bound.
    pub batch_size: usize,
    pub noise_model: NoiseModel,
}

impl StochasticGradConfig {
    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            batch_size: 1,
            noise_model: NoiseModel::GaussianIsotropicTruncated,
        }
    }
}

/// Exact gradient plus zero-mean noise with `E ||noise||^2 <= sigma^2`.
///
/// With `sigma == 0` this returns the exact gradient without touching the
/// stream, so noiseless stochastic runs are bit-identical to deterministic
/// ones.
pub fn stochastic_gradient(
    cost: &QuadraticCost,
    x: &DVector<f64>,
    cfg: &StochasticGradConfig,
    rng: &mut ChaCha12Rng,
) -> Result<DVector<f64>, CostError> {
    if cfg.sigma < 0.0 {
        return Err(CostError::NegativeSigma(cfg.sigma));
    }
    let mut gradient = cost.gradient(x)?;
    if cfg.sigma == 0.0 {
        return Ok(gradient);
    }
    gradient += noise_vector(cost.dimension(), cfg, rng);
    Ok(gradient)
}

/// Draws one noise vector per the configured model.
pub fn noise_vector(d: usize, cfg: &StochasticGradConfig, rng: &mut ChaCha12Rng) -> DVector<f64> {
    match cfg.noise_model {
        NoiseModel::GaussianIsotropicTruncated => {
            let per_coordinate = cfg.sigma / (d as f64).sqrt();
            let radius = 6.0 * cfg.sigma;
            loop {
                let v = DVector::from_fn(d, |_, _| standard_normal(rng) * per_coordinate);
                if v.norm() <= radius {
                    return v;
                }
            }
        }
        NoiseModel::UniformSphere => {
            let direction = loop {
                let v = DVector::from_fn(d, |_, _| standard_normal(rng));
                let norm = v.norm();
                if norm > 1e-12 {
                    break v / norm;
                }
            };
            let u: f64 = rng.gen();
            direction * (cfg.sigma * (2.0 * u).sqrt())
        }
    }
}

/// Box-Muller standard normal; two uniform draws per sample keeps the
/// stream layout independent of library internals.
fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Draws a random family of `n` SPD quadratics in dimension `d`.
///
/// Each `A_i` has eigenvalues uniform in `eig_range` under a random
/// orthogonal frame; each minimizer is uniform in `[-spread, spread]^d`
/// (`b_i = A_i * center_i`). Deterministic given the seed.
pub fn generate_family(
    seed: u64,
    n: usize,
    d: usize,
    spread: f64,
    eig_range: (f64, f64),
) -> Result<CostFamily, CostError> {
    let (lo, hi) = eig_range;
    let agents = (0..n)
        .map(|i| {
            let mut rng =
                crate::rng::substream(seed, 0, i as u64, crate::rng::StreamPurpose::Generator);
            let q = random_orthogonal(d, &mut rng);
            let lambdas =
                DVector::from_fn(d, |_, _| if hi > lo { rng.gen_range(lo..hi) } else { lo });
            let a = &q * DMatrix::from_diagonal(&lambdas) * q.transpose();
            let a = (&a + a.transpose()) * 0.5;
            let center = DVector::from_fn(d, |_, _| {
                if spread > 0.0 {
                    rng.gen_range(-spread..spread)
                } else {
                    0.0
                }
            });
            let b = &a * center;
            QuadraticCost::new(a, b)
        })
        .collect::<Result<Vec<_>, _>>()?;
    CostFamily::new(agents)
}

/// Q factor of a Gaussian matrix: Haar-ish orthogonal frame, deterministic
/// given the stream.
fn random_orthogonal(d: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| standard_normal(rng));
    m.qr().q()
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}
