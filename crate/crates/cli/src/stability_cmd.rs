//! Stability diagnostics as a single report.

use levy_garch::stability::{
    block_triangular_radius_check, check_coprime, estimate_lambda_q, moment_radius,
};
use serde::Serialize;

use crate::config::StabilityConfig;
use crate::HarnessError;

#[derive(Debug, Clone, Serialize)]
pub struct BlockIdentityReport {
    pub rho_expanded: f64,
    pub rho_state: f64,
    pub rho_companion_pow: f64,
    pub relative_gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaMcReport {
    pub steps: usize,
    pub reps: usize,
    pub seed: u64,
    pub lambda_hat: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub q: u32,
    /// ρ(E[A^{⊗q}]): < 1 iff the 2q-th moment of the process is finite.
    pub rho: f64,
    /// λ_q = ln ρ.
    pub lambda_exact: f64,
    pub block_identity: BlockIdentityReport,
    pub lambda_mc: Option<LambdaMcReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub theta: Vec<f64>,
    pub r: usize,
    pub s: usize,
    pub noise: levy_garch::NoiseModel,
    pub persistence: f64,
    pub stationary: bool,
    pub coprime: bool,
    pub normalized_resultant: f64,
    pub orders: Vec<OrderReport>,
}

/// Monte Carlo sizes that keep the sample mean of ‖Π‖^q inside the moment
/// regime (see the estimator docs in the core crate).
fn default_mc_sizes(q: u32) -> (usize, usize) {
    if q >= 4 {
        (4, 1_000_000)
    } else {
        (16, 200_000)
    }
}

pub fn run(cfg: &StabilityConfig) -> Result<StabilityReport, HarnessError> {
    let params = cfg.params.to_params()?;
    cfg.noise.validate()?;
    let coprime = check_coprime(&params);

    let mut orders = Vec::new();
    for &q in &cfg.orders {
        let rho = moment_radius(&params, &cfg.noise, q)?;
        let block = block_triangular_radius_check(&params, &cfg.noise, q)?;
        let lambda_mc = match &cfg.lambda_mc {
            Some(mc) => {
                let (dsteps, dreps) = default_mc_sizes(q);
                let steps = mc.steps.unwrap_or(dsteps);
                let reps = mc.reps.unwrap_or(dreps);
                let est = estimate_lambda_q(&params, &cfg.noise, q, steps, reps, mc.seed)?;
                Some(LambdaMcReport {
                    steps,
                    reps,
                    seed: mc.seed,
                    lambda_hat: est.lambda_hat,
                })
            }
            None => None,
        };
        orders.push(OrderReport {
            q,
            rho,
            lambda_exact: rho.ln(),
            block_identity: BlockIdentityReport {
                rho_expanded: block.rho_expanded,
                rho_state: block.rho_state,
                rho_companion_pow: block.rho_companion_pow,
                relative_gap: block.relative_gap,
                holds: block.holds,
            },
            lambda_mc,
        });
    }

    Ok(StabilityReport {
        theta: params.theta(),
        r: params.r(),
        s: params.s(),
        noise: cfg.noise,
        persistence: params.persistence(),
        stationary: params.is_stationary(),
        coprime: coprime.coprime,
        normalized_resultant: coprime.normalized_resultant,
        orders,
    })
}
