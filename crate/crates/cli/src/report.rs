//! Serializable report shapes shared by the subcommands.
//!
//! Field order is the serialization order; keep structs (never maps) so the
//! emitted JSON is byte-stable across runs.

use levy_garch::ecf::{EstimationResult, RidgeEvent, RidgedMatrix};
use levy_garch::mle::MlFit;
use nalgebra::DMatrix;
use serde::Serialize;

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RidgeEventReport {
    pub matrix: String,
    pub cond_before: f64,
    pub lambda: f64,
}

impl From<&RidgeEvent> for RidgeEventReport {
    fn from(e: &RidgeEvent) -> Self {
        RidgeEventReport {
            matrix: match e.which {
                RidgedMatrix::C => "c".into(),
                RidgedMatrix::MHat => "m_hat".into(),
            },
            cond_before: e.cond_before,
            lambda: e.lambda,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MlReport {
    pub theta: Vec<f64>,
    pub nll: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub distinct_optima: Vec<Vec<f64>>,
}

impl From<&MlFit> for MlReport {
    fn from(fit: &MlFit) -> Self {
        MlReport {
            theta: fit.params.theta(),
            nll: fit.nll,
            grad_norm: fit.grad_norm,
            iterations: fit.iterations,
            distinct_optima: fit.distinct_optima.iter().map(|p| p.theta()).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub r: usize,
    pub s: usize,
    pub n: usize,
    pub n_used: usize,
    pub grid: Vec<f64>,
    pub theta: Vec<f64>,
    pub se: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub asym_cov: Vec<Vec<f64>>,
    pub m_hat: Vec<Vec<f64>>,
    pub objective: f64,
    pub half_grad_norm: f64,
    pub iterations: usize,
    pub evals: usize,
    pub efficiency: f64,
    pub efficiency_bound: Option<f64>,
    pub condition1_flag: bool,
    pub stage_a_fallback: bool,
    pub ridge_events: Vec<RidgeEventReport>,
    pub init_theta: Vec<f64>,
    pub ml: Option<MlReport>,
}

impl EstimateReport {
    pub fn new(fit: &EstimationResult, n: usize, grid: &[f64], bound: Option<f64>) -> Self {
        let p = fit.theta.len();
        EstimateReport {
            r: fit.params.r(),
            s: fit.params.s(),
            n,
            n_used: fit.n_used,
            grid: grid.to_vec(),
            theta: fit.theta.clone(),
            se: (0..p).map(|i| fit.cov[(i, i)].sqrt()).collect(),
            cov: matrix_rows(&fit.cov),
            asym_cov: matrix_rows(&fit.asym_cov),
            m_hat: matrix_rows(&fit.m_hat),
            objective: fit.objective,
            half_grad_norm: fit.half_grad_norm,
            iterations: fit.iterations,
            evals: fit.evals,
            efficiency: fit.efficiency,
            efficiency_bound: bound,
            condition1_flag: fit.condition1_flag,
            stage_a_fallback: fit.stage_a_fallback,
            ridge_events: fit.ridge_events.iter().map(Into::into).collect(),
            init_theta: fit.init_theta.clone(),
            ml: fit.ml.as_ref().map(Into::into),
        }
    }
}
