//! The GARCH(r, s) volatility recursion, simulation, and filters.
//!
//! Model: y_n = σ_n·ε_n with i.i.d. standardized noise ε and
//!
//! ```text
//! σ²_n = α₀ + Σ_{i=1..r} α_i y²_{n−i} + Σ_{j=1..s} β_j σ²_{n−j},
//! ```
//!
//! parameters θ = (α₀, α₁, …, α_r, β₁, …, β_s), dimension p = r + s + 1,
//! α₀ > 0 and the remaining coefficients nonnegative. Under
//! Σα + Σβ < 1 the stationary solution has unconditional variance
//! γ = α₀ / (1 − Σα − Σβ).
//!
//! **Time indexing.** A data slice `y[0..n]` holds observations at times
//! 1..=n. Filters start from the deterministic pre-sample convention
//! y_m = 0 and σ²_m = γ(θ) for m ≤ 0, so `sigma2[0]` = α₀ + γΣβ = γ(1 − Σα)
//! and every later entry uses observed lags where available. The influence of
//! this initialization decays geometrically at rate Σα + Σβ; estimation code
//! discards a transient prefix accordingly.
//!
//! The sensitivity filters differentiate the *same* recursion (including the
//! θ-dependence of the pre-sample level γ) and therefore satisfy
//!
//! ```text
//! ∂σ²_n/∂θ = b_n + Σ_j β_j ∂σ²_{n−j}/∂θ,   b_n = (1, ỹ²_{n−1..n−r}, σ̃²_{n−1..n−s}),
//! ```
//!
//! with pre-sample rows ∂γ/∂θ, and analogously for second derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{NoiseError, NoiseModel};

/// Errors from model construction, simulation, and filtering.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GarchError {
    /// Coefficient signs or shapes violate the model domain.
    #[error("invalid GARCH parameters: {reason}")]
    InvalidParams { reason: String },
    /// Σα + Σβ ≥ 1: no stationary variance, simulation/filtering refused.
    #[error("non-stationary parameters: persistence {persistence} >= 1")]
    NonStationary { persistence: f64 },
    /// The recursion produced σ² ≤ 0 (possible only through invalid inputs).
    #[error("non-positive volatility at index {index}")]
    NonPositiveVolatility { index: usize },
    /// Input series contains NaN/inf, or the recursion overflowed.
    #[error("non-finite value encountered at index {index}")]
    NonFinite { index: usize },
    /// A parameter vector of the wrong length for the requested orders.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// Too few observations for the requested operation.
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    /// Noise-family error surfaced during simulation.
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

/// Validated GARCH(r, s) parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    alpha0: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl GarchParams {
    /// Construct with domain validation: α₀ > 0, α_i ≥ 0, β_j ≥ 0, all
    /// finite, and at least one ARCH lag (r ≥ 1).
    pub fn new(alpha0: f64, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self, GarchError> {
        let invalid = |reason: &str| GarchError::InvalidParams {
            reason: reason.to_string(),
        };
        if !(alpha0.is_finite() && alpha0 > 0.0) {
            return Err(invalid("alpha0 must be finite and > 0"));
        }
        if alpha.is_empty() {
            return Err(invalid("at least one ARCH coefficient is required (r >= 1)"));
        }
        if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("alpha coefficients must be finite and >= 0"));
        }
        if beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(invalid("beta coefficients must be finite and >= 0"));
        }
        Ok(GarchParams {
            alpha0,
            alpha,
            beta,
        })
    }

    /// Re-validate (e.g. after deserializing a configuration).
    pub fn validated(self) -> Result<Self, GarchError> {
        GarchParams::new(self.alpha0, self.alpha, self.beta)
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Number of ARCH lags r.
    pub fn r(&self) -> usize {
        self.alpha.len()
    }

    /// Number of GARCH lags s.
    pub fn s(&self) -> usize {
        self.beta.len()
    }

    /// Parameter dimension p = r + s + 1.
    pub fn p(&self) -> usize {
        self.alpha.len() + self.beta.len() + 1
    }

    /// Σα + Σβ.
    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    pub fn is_stationary(&self) -> bool {
        self.persistence() < 1.0
    }

    /// Unconditional variance γ = α₀ / (1 − Σα − Σβ) of the stationary
    /// solution.
    pub fn stationary_variance(&self) -> Result<f64, GarchError> {
        let s = self.persistence();
        if s < 1.0 {
            Ok(self.alpha0 / (1.0 - s))
        } else {
            Err(GarchError::NonStationary { persistence: s })
        }
    }

    /// Gradient ∂γ/∂θ = (1, γ, …, γ) / (1 − Σα − Σβ).
    pub fn stationary_variance_gradient(&self) -> Result<Vec<f64>, GarchError> {
        let gamma = self.stationary_variance()?;
        let inv = 1.0 / (1.0 - self.persistence());
        let mut g = vec![gamma * inv; self.p()];
        g[0] = inv;
        Ok(g)
    }

    /// Hessian ∂²γ/∂θ∂θᵀ, row-major p×p: zero at (α₀, α₀), 1/(1−S)² on the
    /// (α₀, ·) border, 2γ/(1−S)² in the coefficient block.
    pub fn stationary_variance_hessian(&self) -> Result<Vec<f64>, GarchError> {
        let gamma = self.stationary_variance()?;
        let inv = 1.0 / (1.0 - self.persistence());
        let p = self.p();
        let border = inv * inv;
        let inner = 2.0 * gamma * inv * inv;
        let mut h = vec![inner; p * p];
        for k in 0..p {
            h[k] = border; // row 0
            h[k * p] = border; // column 0
        }
        h[0] = 0.0;
        Ok(h)
    }

    /// Flatten to θ = (α₀, α₁, …, α_r, β₁, …, β_s).
    pub fn theta(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.p());
        t.push(self.alpha0);
        t.extend_from_slice(&self.alpha);
        t.extend_from_slice(&self.beta);
        t
    }

    /// Rebuild from a θ vector for given orders, with full validation.
    pub fn from_theta(r: usize, s: usize, theta: &[f64]) -> Result<Self, GarchError> {
        let p = r + s + 1;
        if theta.len() != p {
            return Err(GarchError::DimensionMismatch {
                expected: p,
                got: theta.len(),
            });
        }
        GarchParams::new(
            theta[0],
            theta[1..=r].to_vec(),
            theta[r + 1..].to_vec(),
        )
    }
}

/// Output of [`simulate`]: returns, conditional variances, and the driving
/// noise, all after burn-in removal.
#[derive(Debug, Clone)]
pub struct SimulatedSeries {
    pub y: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub eps: Vec<f64>,
}

/// Simulate `n` observations of the stationary model after discarding
/// `burn_in` warm-up steps. The recursion starts from σ² = γ with pre-sample
/// squared returns also at γ; `burn_in` of a few hundred steps removes any
/// trace of that choice for persistences of practical interest.
pub fn simulate(
    params: &GarchParams,
    noise: &NoiseModel,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SimulatedSeries, GarchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_rng(params, noise, n, burn_in, &mut rng)
}

/// [`simulate`] with a caller-managed RNG (used by the Monte Carlo harness to
/// run one ChaCha stream per replication).
pub fn simulate_with_rng<R: Rng + ?Sized>(
    params: &GarchParams,
    noise: &NoiseModel,
    n: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<SimulatedSeries, GarchError> {
    noise.validate()?;
    let gamma = params.stationary_variance()?;
    let total = n + burn_in;
    let mut eps = vec![0.0; total];
    noise.sample_into(rng, &mut eps);

    let (r, s) = (params.r(), params.s());
    let mut y = vec![0.0; total];
    let mut sigma2 = vec![0.0; total];
    for t in 0..total {
        let mut v = params.alpha0;
        for (i, &a) in params.alpha.iter().enumerate() {
            let lag = t as isize - (i + 1) as isize;
            let y2 = if lag >= 0 {
                let yl = y[lag as usize];
                yl * yl
            } else {
                gamma
            };
            v += a * y2;
        }
        for (j, &b) in params.beta.iter().enumerate() {
            let lag = t as isize - (j + 1) as isize;
            let s2 = if lag >= 0 { sigma2[lag as usize] } else { gamma };
            v += b * s2;
        }
        if !v.is_finite() {
            return Err(GarchError::NonFinite { index: t });
        }
        sigma2[t] = v;
        y[t] = v.sqrt() * eps[t];
    }
    let _ = (r, s);
    Ok(SimulatedSeries {
        y: y.split_off(burn_in),
        sigma2: sigma2.split_off(burn_in),
        eps: eps.split_off(burn_in),
    })
}

/// Recover conditional variances σ²_n from observed returns by running the
/// recursion forward from the pre-sample convention (y = 0, σ² = γ).
pub fn invert_volatility(params: &GarchParams, y: &[f64]) -> Result<Vec<f64>, GarchError> {
    let mut out = Vec::new();
    invert_volatility_into(params, y, &mut out)?;
    Ok(out)
}

pub(crate) fn invert_volatility_into(
    params: &GarchParams,
    y: &[f64],
    sigma2: &mut Vec<f64>,
) -> Result<(), GarchError> {
    let gamma = params.stationary_variance()?;
    sigma2.clear();
    sigma2.reserve(y.len());
    for t in 0..y.len() {
        let mut v = params.alpha0;
        for (i, &a) in params.alpha.iter().enumerate() {
            let lag = t as isize - (i + 1) as isize;
            if lag >= 0 {
                let yl = y[lag as usize];
                v += a * yl * yl;
            }
            // pre-sample squared returns are 0: no contribution
        }
        for (j, &b) in params.beta.iter().enumerate() {
            let lag = t as isize - (j + 1) as isize;
            let s2 = if lag >= 0 { sigma2[lag as usize] } else { gamma };
            v += b * s2;
        }
        if !v.is_finite() {
            return Err(GarchError::NonFinite { index: t });
        }
        if v <= 0.0 {
            return Err(GarchError::NonPositiveVolatility { index: t });
        }
        sigma2.push(v);
    }
    Ok(())
}

/// Standardized residuals ε̂_n = y_n / σ_n together with the filtered σ²_n.
pub fn residuals(params: &GarchParams, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), GarchError> {
    let sigma2 = invert_volatility(params, y)?;
    let eps = y
        .iter()
        .zip(&sigma2)
        .map(|(yi, s2)| yi / s2.sqrt())
        .collect();
    Ok((eps, sigma2))
}

/// Filtered variances together with first-order sensitivities ∂σ²_n/∂θ.
#[derive(Debug, Clone)]
pub struct Sensitivities {
    pub sigma2: Vec<f64>,
    /// Row-major n×p: row t is ∂σ²_t/∂θ.
    pub s1: Vec<f64>,
    p: usize,
}

impl Sensitivities {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.s1[t * self.p..(t + 1) * self.p]
    }
}

/// Adds second-order sensitivities ∂²σ²_n/∂θ∂θᵀ to [`Sensitivities`].
#[derive(Debug, Clone)]
pub struct SecondSensitivities {
    pub sigma2: Vec<f64>,
    pub s1: Vec<f64>,
    /// Row-major n×p²: row t is the (symmetric) Hessian of σ²_t, flattened.
    pub s2: Vec<f64>,
    p: usize,
}

impl SecondSensitivities {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn s1_row(&self, t: usize) -> &[f64] {
        &self.s1[t * self.p..(t + 1) * self.p]
    }

    pub fn s2_row(&self, t: usize) -> &[f64] {
        let pp = self.p * self.p;
        &self.s2[t * pp..(t + 1) * pp]
    }
}

/// Run the inversion filter and its first-order sensitivity recursion.
pub fn sensitivity_filter(params: &GarchParams, y: &[f64]) -> Result<Sensitivities, GarchError> {
    let mut sigma2 = Vec::new();
    let mut s1 = Vec::new();
    sensitivity_filter_into(params, y, &mut sigma2, &mut s1)?;
    Ok(Sensitivities {
        sigma2,
        s1,
        p: params.p(),
    })
}

pub(crate) fn sensitivity_filter_into(
    params: &GarchParams,
    y: &[f64],
    sigma2: &mut Vec<f64>,
    s1: &mut Vec<f64>,
) -> Result<(), GarchError> {
    invert_volatility_into(params, y, sigma2)?;
    let p = params.p();
    let r = params.r();
    let n = y.len();
    let dgamma = params.stationary_variance_gradient()?;
    let gamma = params.stationary_variance()?;

    s1.clear();
    s1.resize(n * p, 0.0);
    for t in 0..n {
        let (head, tail) = s1.split_at_mut(t * p);
        let row = &mut tail[..p];
        row[0] = 1.0;
        for i in 1..=r {
            let lag = t as isize - i as isize;
            row[i] = if lag >= 0 {
                let yl = y[lag as usize];
                yl * yl
            } else {
                0.0
            };
        }
        // Direct terms first: the recursion below accumulates into every
        // component, including the β slots of *other* lags.
        for j in 0..params.beta.len() {
            let lag = t as isize - (j + 1) as isize;
            row[r + 1 + j] = if lag >= 0 { sigma2[lag as usize] } else { gamma };
        }
        for (j, &b) in params.beta.iter().enumerate() {
            let lag = t as isize - (j + 1) as isize;
            if lag >= 0 {
                let src = &head[lag as usize * p..(lag as usize + 1) * p];
                for (dst, v) in row.iter_mut().zip(src) {
                    *dst += b * v;
                }
            } else {
                for (dst, v) in row.iter_mut().zip(&dgamma) {
                    *dst += b * v;
                }
            }
        }
    }
    Ok(())
}

/// Run the inversion filter with first- and second-order sensitivities.
pub fn second_sensitivity_filter(
    params: &GarchParams,
    y: &[f64],
) -> Result<SecondSensitivities, GarchError> {
    let mut sigma2 = Vec::new();
    let mut s1 = Vec::new();
    let mut s2 = Vec::new();
    second_sensitivity_filter_into(params, y, &mut sigma2, &mut s1, &mut s2)?;
    Ok(SecondSensitivities {
        sigma2,
        s1,
        s2,
        p: params.p(),
    })
}

pub(crate) fn second_sensitivity_filter_into(
    params: &GarchParams,
    y: &[f64],
    sigma2: &mut Vec<f64>,
    s1: &mut Vec<f64>,
    s2: &mut Vec<f64>,
) -> Result<(), GarchError> {
    sensitivity_filter_into(params, y, sigma2, s1)?;
    let p = params.p();
    let pp = p * p;
    let r = params.r();
    let n = y.len();
    let dgamma = params.stationary_variance_gradient()?;
    let d2gamma = params.stationary_variance_hessian()?;

    // ∂²σ²_t = Σ_j β_j ∂²σ²_{t−j} + e_{r+j}(∂σ²_{t−j})ᵀ + (∂σ²_{t−j})e_{r+j}ᵀ,
    // where e_{r+j} is the unit vector of coefficient β_j and pre-sample
    // derivatives are those of γ.
    s2.clear();
    s2.resize(n * pp, 0.0);
    for t in 0..n {
        let (head2, tail2) = s2.split_at_mut(t * pp);
        let row2 = &mut tail2[..pp];
        for (j, &b) in params.beta.iter().enumerate() {
            let lag = t as isize - (j + 1) as isize;
            let lag2: &[f64] = if lag >= 0 {
                &head2[lag as usize * pp..(lag as usize + 1) * pp]
            } else {
                &d2gamma
            };
            for (dst, v) in row2.iter_mut().zip(lag2) {
                *dst += b * v;
            }
            let lag1: &[f64] = if lag >= 0 {
                &s1[lag as usize * p..(lag as usize + 1) * p]
            } else {
                &dgamma
            };
            let kb = r + 1 + j;
            for (l, v) in lag1.iter().enumerate() {
                row2[kb * p + l] += v;
                row2[l * p + kb] += v;
            }
        }
    }
    Ok(())
}
