//! Gaussian (quasi-)maximum likelihood for the GARCH parameters.
//!
//! The mean negative log-likelihood of the inverted series is
//!
//! ```text
//! L_N(θ) = (1/N′) Σ_n [ ½ ln σ²_n(θ) − ln f(ε_n(θ)) ],   ε_n = y_n/σ_n(θ),
//! ```
//!
//! summed over the observations kept after the filter transient. Only the
//! Gaussian family exposes a density ([`NoiseModel::log_density_score`]), so
//! exact ML is Gaussian ML; run on non-Gaussian data it is the standard QMLE,
//! still consistent for any unit-variance noise, with asymptotic covariance
//! (m₄ − 1)·(4M*)⁻¹ estimated from the residual kurtosis.
//!
//! With the instrument w_n = σ²_θn/(2σ²_n), the gradient is
//! (1/N′) Σ w_n (1 + ε_n·(log f)′(ε_n)) and the Fisher-scoring curvature is
//! μ·M̂ (μ = 2 for the Gaussian), both assembled in the same filter pass —
//! this is what makes the projected Gauss–Newton iteration cheap. Besides
//! serving as a baseline estimator, the fit initializes the
//! characteristic-function estimator ([`crate::ecf::estimate`]), whose
//! objective is only locally identified; the likelihood surface has no such
//! problem, so a small deterministic multistart here resolves global
//! initialization for the whole pipeline.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::garch::{self, GarchError, GarchParams};
use crate::noise::{NoiseError, NoiseModel};
use crate::optim::{self, FeasibleRegion, SolveOptions};

/// Errors from likelihood estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlError {
    /// The noise family has no closed-form density (variance gamma).
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Garch(#[from] GarchError),
    /// No start reached the gradient tolerance.
    #[error("likelihood maximization did not converge: |grad| = {grad_norm} after {iterations} iterations")]
    NoConvergence { grad_norm: f64, iterations: usize },
}

/// Controls for [`ml_estimate`].
#[derive(Debug, Clone)]
pub struct MlOptions {
    /// Observations discarded before accumulating the likelihood; `None`
    /// uses min(100, n/4).
    pub transient: Option<usize>,
    /// Gradient-norm convergence tolerance.
    pub gtol: f64,
    pub max_iter: usize,
    /// Run the full deterministic multistart (5 starts) instead of only the
    /// moment-matched one.
    pub multistart: bool,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            transient: None,
            gtol: 1e-8,
            max_iter: 200,
            multistart: true,
        }
    }
}

/// A converged likelihood fit.
#[derive(Debug, Clone)]
pub struct MlFit {
    pub params: GarchParams,
    /// Mean negative log-likelihood at the optimum.
    pub nll: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evals: usize,
    /// Converged alternates at ∞-distance > 1e-3 from the best optimum
    /// (empty in regular problems; non-empty flags a multimodal surface).
    pub distinct_optima: Vec<GarchParams>,
    /// M̂ = (1/N′) Σ w w ᵀ at the optimum.
    pub m_hat: DMatrix<f64>,
    /// Covariance of √N(θ̂ − θ*): (m̂₄ − 1)·(4M̂)⁻¹ with m̂₄ the residual
    /// kurtosis (= M̂⁻¹/2 at Gaussian noise).
    pub asym_cov: DMatrix<f64>,
    /// Observations used after the transient.
    pub n_used: usize,
}

/// Observations discarded at the start of score/likelihood averages: the
/// filter initialization decays geometrically, and 100 steps removes it at
/// any persistence of statistical interest; very short series keep 3/4 of
/// their data.
pub fn default_transient(n: usize) -> usize {
    (n / 4).min(100)
}

pub(crate) fn check_series(y: &[f64], p: usize, transient: usize) -> Result<usize, GarchError> {
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(GarchError::NonFinite { index });
    }
    let needed = transient + 25 * p;
    if y.len() < needed {
        return Err(GarchError::InsufficientData {
            needed,
            got: y.len(),
        });
    }
    Ok(y.len() - transient)
}

/// Mean negative log-likelihood with gradient and Fisher-scoring curvature.
///
/// Returns `(nll, gradient, curvature, m_hat)`; the curvature is μ·M̂ with
/// μ = 2 for the Gaussian family.
pub fn neg_log_likelihood(
    params: &GarchParams,
    noise: &NoiseModel,
    y: &[f64],
    transient: usize,
) -> Result<(f64, DVector<f64>, DMatrix<f64>, DMatrix<f64>), MlError> {
    // Fails fast for families without a density.
    noise.log_density_score(0.0)?;
    let p = params.p();
    let sens = garch::sensitivity_filter(params, y)?;
    let n_used = y.len().saturating_sub(transient);
    assert!(n_used > 0, "transient leaves no observations");

    let mut nll = 0.0;
    let mut grad = vec![0.0; p];
    let mut m = vec![0.0; p * p];
    let mut w = vec![0.0; p];
    for t in transient..y.len() {
        let s2 = sens.sigma2[t];
        let sigma = s2.sqrt();
        let eps = y[t] / sigma;
        let inv2s2 = 0.5 / s2;
        let row = sens.row(t);
        for i in 0..p {
            w[i] = row[i] * inv2s2;
        }
        let (logf, score) = noise.log_density_score(eps)?;
        nll += 0.5 * s2.ln() - logf;
        let gscale = 1.0 + eps * score;
        for i in 0..p {
            grad[i] += gscale * w[i];
            for j in i..p {
                m[i * p + j] += w[i] * w[j];
            }
        }
    }
    let inv_n = 1.0 / n_used as f64;
    nll *= inv_n;
    let grad = DVector::from_iterator(p, grad.iter().map(|g| g * inv_n));
    let mut m_hat = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = m[i * p + j] * inv_n;
            m_hat[(i, j)] = v;
            m_hat[(j, i)] = v;
        }
    }
    let curvature = 2.0 * &m_hat;
    Ok((nll, grad, curvature, m_hat))
}

/// Deterministic multistart table: (persistence, ARCH share of persistence).
const STARTS: [(f64, f64); 5] = [
    (0.90, 1.0 / 6.0),
    (0.50, 0.50),
    (0.70, 0.25),
    (0.95, 0.10),
    (0.80, 0.40),
];

fn start_theta(r: usize, s: usize, variance: f64, persistence: f64, share: f64) -> DVector<f64> {
    let p = r + s + 1;
    let mut theta = DVector::zeros(p);
    theta[0] = (variance * (1.0 - persistence)).max(1e-6);
    let a_total = if s == 0 { persistence } else { persistence * share };
    for i in 0..r {
        theta[1 + i] = a_total / r as f64;
    }
    for j in 0..s {
        theta[1 + r + j] = persistence * (1.0 - share) / s as f64;
    }
    theta
}

/// Maximize the (quasi-)likelihood for a GARCH(r, s) model.
pub fn ml_estimate(
    y: &[f64],
    noise: &NoiseModel,
    r: usize,
    s: usize,
    opts: &MlOptions,
) -> Result<MlFit, MlError> {
    noise.log_density_score(0.0)?;
    let p = r + s + 1;
    let transient = opts.transient.unwrap_or_else(|| default_transient(y.len()));
    let n_used = check_series(y, p, transient)?;

    let region = FeasibleRegion::garch(p);
    let solve_opts = SolveOptions {
        gtol: opts.gtol,
        max_iter: opts.max_iter,
        step_cap: 0.25,
    };
    let eval = |theta: &DVector<f64>| {
        let params = match GarchParams::from_theta(r, s, theta.as_slice()) {
            Ok(p) => p,
            Err(_) => return (f64::INFINITY, DVector::zeros(p), DMatrix::identity(p, p)),
        };
        match neg_log_likelihood(&params, noise, y, transient) {
            Ok((f, g, h, _)) => (f, g, h),
            Err(_) => (f64::INFINITY, DVector::zeros(p), DMatrix::identity(p, p)),
        }
    };
    let eval_value = |theta: &DVector<f64>| eval(theta).0;

    let variance = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let n_starts = if opts.multistart { STARTS.len() } else { 1 };
    let mut outcomes = Vec::new();
    let mut evals = 0;
    for &(persistence, share) in STARTS.iter().take(n_starts) {
        let x0 = start_theta(r, s, variance, persistence, share);
        let out = optim::minimize(eval, eval_value, &x0, &region, &solve_opts);
        evals += out.evals;
        outcomes.push(out);
    }

    let best = outcomes
        .iter()
        .filter(|o| o.converged)
        .min_by(|a, b| a.objective.total_cmp(&b.objective));
    let Some(best) = best else {
        let nearest = outcomes
            .iter()
            .min_by(|a, b| a.grad_norm.total_cmp(&b.grad_norm))
            .expect("at least one start");
        return Err(MlError::NoConvergence {
            grad_norm: nearest.grad_norm,
            iterations: nearest.iterations,
        });
    };

    let mut distinct_optima = Vec::new();
    for o in outcomes.iter().filter(|o| o.converged) {
        let dist = (&o.x - &best.x).amax();
        if dist > 1e-3
            && !distinct_optima
                .iter()
                .any(|d: &DVector<f64>| (&o.x - d).amax() <= 1e-3)
        {
            distinct_optima.push(o.x.clone());
        }
    }

    let params = GarchParams::from_theta(r, s, best.x.as_slice())
        .expect("projected iterate stays in the domain");
    let (_, _, _, m_hat) = neg_log_likelihood(&params, noise, y, transient)?;
    let (eps, _) = garch::residuals(&params, y)?;
    let m4 = eps[transient..].iter().map(|e| e.powi(4)).sum::<f64>() / n_used as f64;
    let scale = (m4 - 1.0) / 4.0;
    let asym_cov = m_hat
        .clone()
        .try_inverse()
        .map(|inv| scale * inv)
        .unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));

    Ok(MlFit {
        params,
        nll: best.objective,
        grad_norm: best.grad_norm,
        iterations: best.iterations,
        evals,
        distinct_optima: distinct_optima
            .iter()
            .map(|t| {
                GarchParams::from_theta(r, s, t.as_slice())
                    .expect("projected iterate stays in the domain")
            })
            .collect(),
        m_hat,
        asym_cov,
        n_used,
    })
}

/// Gaussian identity diagnostics computed by quadrature: the Fisher scale
/// evaluated three equivalent ways.
#[derive(Debug, Clone)]
pub struct ScaleIdentityReport {
    /// μ from [`NoiseModel::fisher_scale`] (density quadrature).
    pub mu_quadrature: f64,
    /// E[(1 + X·(log f)′(X))²] via [`NoiseModel::log_density_score`].
    pub mu_score_form: f64,
    /// m₄ − 1 from the moment closed forms.
    pub mu_moment_form: f64,
    /// Largest pairwise discrepancy.
    pub max_gap: f64,
}

/// Check the scale-information identities μ = E[(1 + Xℓ′(X))²] = m₄ − 1 for
/// a family with a closed-form density. (The moment form is specific to
/// densities whose score is linear, i.e. the Gaussian.)
pub fn scale_fisher_identity_check(noise: &NoiseModel) -> Result<ScaleIdentityReport, MlError> {
    let (logf0, _) = noise.log_density_score(0.0)?;
    let mu_quadrature = noise.fisher_scale()?;
    let mu_score_form = crate::quad::integrate(
        |x| {
            let (logf, score) = noise.log_density_score(x).expect("density checked above");
            let t = 1.0 + x * score;
            t * t * logf.exp()
        },
        -12.0,
        12.0,
        1e-12,
    );
    let _ = logf0;
    let mu_moment_form = noise.moment(4) - 1.0;
    let gaps = [
        (mu_quadrature - mu_score_form).abs(),
        (mu_quadrature - mu_moment_form).abs(),
        (mu_score_form - mu_moment_form).abs(),
    ];
    Ok(ScaleIdentityReport {
        mu_quadrature,
        mu_score_form,
        mu_moment_form,
        max_gap: gaps.iter().fold(0.0_f64, |m, g| m.max(*g)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::garch::simulate;
    use approx::assert_abs_diff_eq;

    fn garch11(a0: f64, a1: f64, b1: f64) -> GarchParams {
        GarchParams::new(a0, vec![a1], vec![b1]).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = garch11(0.1, 0.2, 0.7);
        let sim = simulate(&p, &NoiseModel::Gaussian, 400, 100, 21).unwrap();
        let transient = 50;
        let (_, grad, _, _) =
            neg_log_likelihood(&p, &NoiseModel::Gaussian, &sim.y, transient).unwrap();
        let h = 1e-6;
        let theta = p.theta();
        for k in 0..3 {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[k] += h;
            tm[k] -= h;
            let fp = neg_log_likelihood(
                &GarchParams::from_theta(1, 1, &tp).unwrap(),
                &NoiseModel::Gaussian,
                &sim.y,
                transient,
            )
            .unwrap()
            .0;
            let fm = neg_log_likelihood(
                &GarchParams::from_theta(1, 1, &tm).unwrap(),
                &NoiseModel::Gaussian,
                &sim.y,
                transient,
            )
            .unwrap()
            .0;
            let fd = (fp - fm) / (2.0 * h);
            assert_abs_diff_eq!(grad[k], fd, epsilon = 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn recovers_parameters_from_gaussian_data() {
        let truth = garch11(0.1, 0.2, 0.7);
        let sim = simulate(&truth, &NoiseModel::Gaussian, 20_000, 1000, 5).unwrap();
        let fit = ml_estimate(&sim.y, &NoiseModel::Gaussian, 1, 1, &MlOptions::default()).unwrap();
        let theta = fit.params.theta();
        // Tolerances ≈ 4 asymptotic standard errors at N = 2·10⁴.
        assert_abs_diff_eq!(theta[0], 0.1, epsilon = 0.035);
        assert_abs_diff_eq!(theta[1], 0.2, epsilon = 0.07);
        assert_abs_diff_eq!(theta[2], 0.7, epsilon = 0.10);
        assert!(fit.grad_norm <= 1e-8);
        assert!(fit.distinct_optima.is_empty());
        assert!(fit.m_hat[(0, 0)] > 0.0);
    }

    #[test]
    fn qmle_is_consistent_under_vg_noise() {
        // Gaussian likelihood on variance gamma data: still consistent; only
        // the covariance scale changes (m₄ − 1 instead of 2).
        let truth = garch11(0.1, 0.2, 0.7);
        let vg = NoiseModel::variance_gamma(0.5).unwrap();
        let sim = simulate(&truth, &vg, 20_000, 1000, 17).unwrap();
        let fit = ml_estimate(&sim.y, &NoiseModel::Gaussian, 1, 1, &MlOptions::default()).unwrap();
        let theta = fit.params.theta();
        assert_abs_diff_eq!(theta[0], 0.1, epsilon = 0.05);
        assert_abs_diff_eq!(theta[1], 0.2, epsilon = 0.09);
        assert_abs_diff_eq!(theta[2], 0.7, epsilon = 0.12);
        // Residual kurtosis should reflect the heavy tails (population 4.5).
        let scale = 4.0 * (&fit.asym_cov * &fit.m_hat)[(0, 0)];
        assert!(scale > 2.3, "kurtosis-based scale {scale} too Gaussian");
    }

    #[test]
    fn vg_likelihood_is_unavailable() {
        let vg = NoiseModel::variance_gamma(0.5).unwrap();
        let y = vec![0.1; 500];
        assert!(matches!(
            ml_estimate(&y, &vg, 1, 1, &MlOptions::default()),
            Err(MlError::Noise(NoiseError::DensityUnavailable))
        ));
    }

    #[test]
    fn short_series_is_rejected() {
        let y = vec![0.1; 30];
        assert!(matches!(
            ml_estimate(&y, &NoiseModel::Gaussian, 1, 1, &MlOptions::default()),
            Err(MlError::Garch(GarchError::InsufficientData { .. }))
        ));
    }

    #[test]
    fn estimation_is_deterministic() {
        let truth = garch11(0.1, 0.2, 0.7);
        let sim = simulate(&truth, &NoiseModel::Gaussian, 4000, 500, 9).unwrap();
        let a = ml_estimate(&sim.y, &NoiseModel::Gaussian, 1, 1, &MlOptions::default()).unwrap();
        let b = ml_estimate(&sim.y, &NoiseModel::Gaussian, 1, 1, &MlOptions::default()).unwrap();
        assert_eq!(a.params.theta(), b.params.theta());
    }

    #[test]
    fn gaussian_scale_identities_agree() {
        let report = scale_fisher_identity_check(&NoiseModel::Gaussian).unwrap();
        assert_abs_diff_eq!(report.mu_quadrature, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(report.mu_score_form, 2.0, epsilon = 1e-8);
        assert_eq!(report.mu_moment_form, 2.0);
        assert!(report.max_gap < 1e-8);
    }

    #[test]
    fn identity_check_requires_a_density() {
        let vg = NoiseModel::variance_gamma(0.5).unwrap();
        assert!(matches!(
            scale_fisher_identity_check(&vg),
            Err(MlError::Noise(NoiseError::DensityUnavailable))
        ));
    }
}
