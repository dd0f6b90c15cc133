//! `E = mean P(ϱ)` and its discrete dissipation ledger.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::InverseFlow;
use crate::grid::{interp_values, ScalarField};
use crate::lagrangian::{LagrangianReport, LagrangianState};
use crate::pressure::PressureLaw;

/// Lagrangian form `mean_y P(η) e^{A}`.
pub fn energy_lagrangian(state: &LagrangianState, law: &PressureLaw, c: f64) -> Result<f64> {
    let sum = state
        .eta
        .values()
        .par_iter()
        .zip(state.accum.values().par_iter())
        .map(|(e, a)| Ok(law.eval_P(*e, c)? * a.exp()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(sum / state.eta.grid().len() as f64)
}

/// Eulerian form `mean_x P(ϱ)`.
pub fn energy_eulerian(rho: &ScalarField, law: &PressureLaw, c: f64) -> Result<f64> {
    let sum = rho
        .values()
        .par_iter()
        .map(|r| law.eval_P(*r, c))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum::<f64>();
    Ok(sum / rho.grid().len() as f64)
}

/// `ϱ(t, x) = η(t, y(t, x))` on the grid, given the inverse flow at `t`.
pub fn eulerian_density(eta: &ScalarField, inverse: &InverseFlow) -> Result<ScalarField> {
    let g = eta.grid();
    if inverse.labels.len() != g.len() {
        return Err(Error::invalid("inverse flow and density live on different grids"));
    }
    ScalarField::new(
        g,
        inverse
            .labels
            .iter()
            .map(|y| interp_values(eta.values(), g.d(), g.n(), *y))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBalance {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    /// `E(t_{k+1}) − E(t_k) + ∫ mean(σ² e^{A}) dt` per window.
    pub entries: Vec<f64>,
    /// Largest positive entry, zero when the ledger is nonpositive.
    pub max_violation: f64,
    /// Largest one-window increase of `E`.
    pub max_increase: f64,
}

impl EnergyBalance {
    /// Whether every entry and every increase of `E` stays below `tol·(1 + E(0))`.
    pub fn holds(&self, tol: f64) -> bool {
        let bound = tol * (1.0 + self.energies.first().copied().unwrap_or(0.0).abs());
        self.max_violation <= bound && self.max_increase <= bound
    }
}

pub fn energy_balance_report(
    states: &[LagrangianState],
    report: &LagrangianReport,
    law: &PressureLaw,
    c: f64,
) -> Result<EnergyBalance> {
    if states.len() != report.windows.len() + 1 {
        return Err(Error::invalid("trajectory and window records disagree in length"));
    }
    let energies = states
        .iter()
        .map(|s| energy_lagrangian(s, law, c))
        .collect::<Result<Vec<_>>>()?;
    let entries: Vec<f64> = energies
        .windows(2)
        .zip(&report.windows)
        .map(|(e, w)| {
            let v = e[1] - e[0] + c * w.dissipation;
            // a constant state yields exact cancellation up to rounding
            if v.abs() <= 4.0 * f64::EPSILON * e[0].abs() {
                0.0
            } else {
                v
            }
        })
        .collect();
    let max_violation = entries.iter().fold(0.0f64, |m, v| m.max(*v));
    let max_increase = energies.windows(2).fold(0.0f64, |m, e| m.max(e[1] - e[0]));
    Ok(EnergyBalance {
        times: states.iter().map(|s| s.time).collect(),
        energies,
        entries,
        max_violation,
        max_increase,
    })
}
