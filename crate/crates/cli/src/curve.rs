//! Efficiency of uniform grids as a function of grid size.

use std::path::Path;

use levy_garch::ecf::{efficiency_score, UGrid};
use levy_garch::NoiseModel;
use serde::Serialize;

use crate::config::CurveConfig;
use crate::io::format_float;
use crate::HarnessError;

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub m: usize,
    pub u_max: f64,
    pub score: f64,
    /// Fisher scale of the noise family: the supremum of the score.
    pub bound: f64,
    pub ratio: f64,
    pub ridged: bool,
    pub cond: f64,
}

/// Score of every prefix grid δ, 2δ, …, mδ for m = 1…m_max.
pub fn efficiency_curve(
    noise: &NoiseModel,
    delta: f64,
    m_max: usize,
) -> Result<Vec<CurvePoint>, HarnessError> {
    noise.validate()?;
    let bound = noise.fisher_scale()?;
    let mut out = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let grid = UGrid::uniform(delta, m).map_err(HarnessError::Ecf)?;
        let eff = efficiency_score(noise, &grid)?;
        out.push(CurvePoint {
            m,
            u_max: m as f64 * delta,
            score: eff.value,
            bound,
            ratio: eff.value / bound,
            ridged: eff.ridged,
            cond: eff.cond,
        });
    }
    Ok(out)
}

pub fn run(cfg: &CurveConfig, out_path: &Path) -> Result<Vec<CurvePoint>, HarnessError> {
    if !(cfg.delta.is_finite() && cfg.delta > 0.0) || cfg.m_max == 0 {
        return Err(HarnessError::Config(crate::config::ConfigError::Invalid {
            reason: format!(
                "efficiency curve needs delta > 0 and m_max >= 1 (got {} and {})",
                cfg.delta, cfg.m_max
            ),
        }));
    }
    let points = efficiency_curve(&cfg.noise, cfg.delta, cfg.m_max)?;
    let mut w = csv::Writer::from_path(out_path).map_err(|e| HarnessError::Io {
        path: out_path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    w.write_record(["m", "u_max", "score", "bound", "ratio", "ridged", "cond"])
        .and_then(|_| {
            for pt in &points {
                w.write_record([
                    pt.m.to_string(),
                    format_float(pt.u_max),
                    format_float(pt.score),
                    format_float(pt.bound),
                    format_float(pt.ratio),
                    pt.ridged.to_string(),
                    format_float(pt.cond),
                ])?;
            }
            Ok(())
        })
        .map_err(|e| HarnessError::Io {
            path: out_path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
    w.flush().map_err(|e| HarnessError::Io {
        path: out_path.display().to_string(),
        source: e,
    })?;
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_is_monotone_before_the_ridge() {
        let pts = efficiency_curve(&NoiseModel::Gaussian, 0.5, 10).unwrap();
        for w in pts.windows(2) {
            if !w[1].ridged {
                assert!(w[1].score >= w[0].score - 1e-10);
            }
        }
        assert!((pts[0].bound - 2.0).abs() < 1e-9);
        assert!(pts.iter().all(|p| p.score <= p.bound + 1e-6));
    }
}
