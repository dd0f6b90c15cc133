//! Two reconstruction paths from one Lagrangian σ, compared through
//! `‖u₁ − u₂‖₂` and the weighted-flow functional `α(t)`.

use crate::error::{Error, Result};
use crate::eulerian::{delta_continuation, ReconConfig};
use crate::flow::{alpha, weighted_flow, VelocityHistory};
use crate::grid::{ScalarField, ScalarHistory};
use crate::lagrangian::{run_lagrangian, LagrangianConfig};
use crate::pressure::PressureLaw;

#[derive(Debug, Clone)]
pub struct UniquenessConfig {
    pub ladder_a: Vec<f64>,
    pub ladder_b: Vec<f64>,
    pub s_values: Vec<f64>,
    /// Everything but the ladder is shared by both paths.
    pub recon: ReconConfig,
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        Self {
            ladder_a: vec![0.1, 0.05, 0.025],
            ladder_b: vec![0.1, 0.05, 0.025, 0.0125],
            s_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            recon: ReconConfig::default(),
        }
    }
}

impl UniquenessConfig {
    /// Both ladders extended by half their last width.
    pub fn refined(&self) -> Self {
        let ext = |l: &[f64]| {
            let mut v = l.to_vec();
            if let Some(last) = l.last() {
                v.push(last * 0.5);
            }
            v
        };
        Self {
            ladder_a: ext(&self.ladder_a),
            ladder_b: ext(&self.ladder_b),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    /// `‖u₁(t_k) − u₂(t_k)‖₂` (grid RMS).
    pub u_l2_gap: Vec<f64>,
    pub alpha: Vec<f64>,
    pub s_values: Vec<f64>,
    pub ladder_a: Vec<f64>,
    pub ladder_b: Vec<f64>,
}

impl UniquenessReport {
    pub fn sup_gap(&self) -> f64 {
        self.u_l2_gap.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn sup_alpha(&self) -> f64 {
        self.alpha.iter().fold(0.0, |m, v| m.max(*v))
    }
}

fn reconstruct(sigma: &ScalarHistory, recon: &ReconConfig, ladder: &[f64]) -> Result<VelocityHistory> {
    let cfg = ReconConfig {
        ladder: ladder.to_vec(),
        ..recon.clone()
    };
    let out = delta_continuation(sigma, &cfg)?;
    match (out.error, out.velocity) {
        (Some(e), _) => Err(e),
        (None, Some(u)) => Ok(u),
        (None, None) => Err(Error::invalid("empty reconstruction ladder")),
    }
}

pub fn uniqueness_from_sigma(sigma: &ScalarHistory, cfg: &UniquenessConfig) -> Result<UniquenessReport> {
    let u1 = reconstruct(sigma, &cfg.recon, &cfg.ladder_a)?;
    let u2 = if cfg.ladder_b == cfg.ladder_a {
        u1.clone()
    } else {
        reconstruct(sigma, &cfg.recon, &cfg.ladder_b)?
    };
    let grid = sigma.grid();
    let family = weighted_flow(&u1, &u2, &cfg.s_values, grid, cfg.recon.dt)?;
    let times = u1.times().to_vec();
    let alpha = (0..times.len())
        .map(|k| alpha(&family, k))
        .collect::<Result<Vec<_>>>()?;
    let u_l2_gap = u1
        .fields()
        .iter()
        .zip(u2.fields())
        .map(|(a, b)| a.l2_distance(b))
        .collect();
    Ok(UniquenessReport {
        times,
        u_l2_gap,
        alpha,
        s_values: cfg.s_values.clone(),
        ladder_a: cfg.ladder_a.clone(),
        ladder_b: cfg.ladder_b.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessExperiment {
    pub base: UniquenessReport,
    pub refined: UniquenessReport,
    /// `sup gap(base) / sup gap(refined)`.
    pub gap_ratio: f64,
    pub alpha_ratio: f64,
}

impl UniquenessExperiment {
    /// Both quantities shrink by at least `factor` under refinement.
    pub fn shrinks_by(&self, factor: f64) -> bool {
        self.gap_ratio >= factor && self.alpha_ratio >= factor
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Compare the two paths, then again with both ladders refined one level.
pub fn uniqueness_on_sigma(sigma: &ScalarHistory, cfg: &UniquenessConfig) -> Result<UniquenessExperiment> {
    let base = uniqueness_from_sigma(sigma, cfg)?;
    let refined = uniqueness_from_sigma(sigma, &cfg.refined())?;
    Ok(UniquenessExperiment {
        gap_ratio: ratio(base.sup_gap(), refined.sup_gap()),
        alpha_ratio: ratio(base.sup_alpha(), refined.sup_alpha()),
        base,
        refined,
    })
}

pub fn uniqueness_experiment(
    rho0: &ScalarField,
    law: &PressureLaw,
    lcfg: &LagrangianConfig,
    cfg: &UniquenessConfig,
) -> Result<UniquenessExperiment> {
    let (states, _) = run_lagrangian(rho0, law, lcfg)?;
    let sigma = ScalarHistory::new(
        states.iter().map(|s| s.time).collect(),
        states.iter().map(|s| s.sigma.clone()).collect(),
    )?;
    uniqueness_on_sigma(&sigma, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    fn two_value_sigma(n: usize) -> ScalarHistory {
        let g = TorusGrid::new(1, n).unwrap();
        let rho = ScalarField::from_fn(g, |x| if x[0] < 0.5 { 0.5 } else { 1.5 }).unwrap();
        let (states, _) = run_lagrangian(&rho, &PressureLaw::linear(), &LagrangianConfig::default()).unwrap();
        ScalarHistory::new(
            states.iter().map(|s| s.time).collect(),
            states.iter().map(|s| s.sigma.clone()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_paths_agree_bitwise() {
        let sigma = two_value_sigma(64);
        let cfg = UniquenessConfig {
            ladder_b: vec![0.1, 0.05, 0.025],
            ..Default::default()
        };
        let r = uniqueness_from_sigma(&sigma, &cfg).unwrap();
        assert!(r.u_l2_gap.iter().all(|g| *g == 0.0));
        assert!(r.alpha.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn zero_sigma_zero_gap() {
        let g = TorusGrid::new(1, 32).unwrap();
        let sigma = ScalarHistory::new(vec![0.0, 0.5, 1.0], vec![ScalarField::constant(g, 0.0); 3]).unwrap();
        let r = uniqueness_from_sigma(&sigma, &UniquenessConfig::default()).unwrap();
        assert_eq!(r.sup_gap(), 0.0);
        assert_eq!(r.sup_alpha(), 0.0);
    }

    #[test]
    fn alpha_starts_at_zero() {
        let sigma = two_value_sigma(64);
        let r = uniqueness_from_sigma(&sigma, &UniquenessConfig::default()).unwrap();
        assert_eq!(r.alpha[0], 0.0);
        assert!(r.sup_gap() > 0.0);
    }
}
