//! Lagrangian density solver for
//!
//! ```text
//! ∂ₜη + ησ = 0,    σ = p(η) − {p(η)}_σ,    {f}_σ = mean_y(f · e^{A}),  A = ∫₀ᵗ σ ds
//! ```
//!
//! on a label grid. Each window is solved by nested Picard iteration: the
//! inner loop finds σ for frozen η, the outer loop refreshes
//! `η = ϱ₀ e^{−A}` from the same trapezoid quadrature that defines `A`, so the
//! identity `η e^{A} = ϱ₀` holds to rounding.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::pressure::PressureLaw;

/// Largest admissible exponent before `e^A` is treated as divergent.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianState {
    pub rho0: Arc<ScalarField>,
    pub eta: ScalarField,
    pub sigma: ScalarField,
    pub accum: ScalarField,
    pub time: f64,
}

impl LagrangianState {
    /// State at `t = 0`: `η = ϱ₀`, `A = 0`, `σ = p(ϱ₀) − mean p(ϱ₀)`.
    pub fn initial(rho0: ScalarField, law: &PressureLaw) -> Result<Self> {
        if let Some(v) = rho0.values().iter().find(|v| **v < 0.0) {
            return Err(Error::invalid(format!("initial density must be nonnegative, found {v}")));
        }
        let g = rho0.grid();
        let accum = ScalarField::constant(g, 0.0);
        let m = weighted_mean_p(&rho0, &accum, law)?;
        let sigma = rho0.map(|r| law.p(r) - m);
        Ok(Self {
            eta: rho0.clone(),
            rho0: Arc::new(rho0),
            sigma,
            accum,
            time: 0.0,
        })
    }

    /// `max_y |η e^{A} − ϱ₀|`.
    pub fn conservation_defect(&self) -> f64 {
        self.eta
            .values()
            .iter()
            .zip(self.accum.values())
            .zip(self.rho0.values())
            .map(|((e, a), r)| (e * a.exp() - r).abs())
            .fold(0.0, f64::max)
    }

    /// `mean_y e^{A}`; stays one along exact solutions.
    pub fn jacobian_mean(&self) -> f64 {
        self.accum.values().iter().map(|a| a.exp()).sum::<f64>() / self.accum.values().len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct LagrangianConfig {
    /// Requested window length; the solver may shrink it.
    pub tau: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub quad_nodes_per_window: usize,
    pub t_final: f64,
    /// Re-estimate the window when sup η grows by a quarter.
    pub adaptive_window: bool,
    pub r_scan_step: f64,
}

impl Default for LagrangianConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            picard_tol: 1e-8,
            picard_max: 200,
            quad_nodes_per_window: 5,
            t_final: 1.0,
            adaptive_window: true,
            r_scan_step: 1e-3,
        }
    }
}

impl LagrangianConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str| Err(Error::InvalidConfig(format!("{k} must be positive and finite")));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau");
        }
        if !(self.picard_tol > 0.0 && self.picard_tol.is_finite()) {
            return bad("picard_tol");
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidConfig("T must be nonnegative and finite".into()));
        }
        if !(self.r_scan_step > 0.0 && self.r_scan_step.is_finite()) {
            return bad("r_scan_step");
        }
        if self.picard_max == 0 {
            return Err(Error::InvalidConfig("picard_max must be at least 1".into()));
        }
        if self.quad_nodes_per_window < 2 {
            return Err(Error::InvalidConfig("quad_nodes_per_window must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub residual: f64,
    /// `∫ mean(σ² e^{A}) dt` over the window.
    pub dissipation: f64,
    pub max_weighted_mean: f64,
    pub sup_eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianReport {
    /// Running supremum of `{p(η)}_σ`.
    pub m: f64,
    pub r: f64,
    pub sup_eta: f64,
    /// Sampled Lipschitz constant of `p` on `[0, r]`.
    pub lipschitz: f64,
    pub windows: Vec<WindowRecord>,
    pub max_conservation_defect: f64,
}

/// `{p(η)}_σ = mean_y p(η) e^{A}`.
pub fn weighted_mean_p(eta: &ScalarField, accum: &ScalarField, law: &PressureLaw) -> Result<f64> {
    if eta.grid() != accum.grid() {
        return Err(Error::invalid("eta and accum live on different grids"));
    }
    weighted_mean_values(eta.values(), accum.values(), law)
}

fn weighted_mean_values(eta: &[f64], accum: &[f64], law: &PressureLaw) -> Result<f64> {
    let mut s = 0.0;
    for (e, a) in eta.iter().zip(accum) {
        if *a > MAX_EXPONENT {
            return Err(Error::Divergence(format!(
                "accumulated divergence {a} overflows the Jacobian"
            )));
        }
        s += law.p(*e) * a.exp();
    }
    Ok(s / eta.len() as f64)
}

/// Window time-step heuristic `0.5 / (sup|p| + R·Lip p)` on `[0, R]`.
pub fn contraction_window(law: &PressureLaw, big_r: f64) -> f64 {
    let c = law.sup_abs_on(big_r) + big_r * law.lipschitz_on(big_r);
    if c > 0.0 {
        0.5 / c
    } else {
        f64::INFINITY
    }
}

/// Working arrays for one window on `q` equispaced time nodes.
struct Window<'a> {
    law: &'a PressureLaw,
    rho0: &'a [f64],
    h: f64,
    /// η, σ, A per time node, each of grid length.
    eta: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    accum: Vec<Vec<f64>>,
    means: Vec<f64>,
}

impl Window<'_> {
    fn rebuild_accum(&mut self) {
        for j in 1..self.accum.len() {
            let (prev, next) = self.accum.split_at_mut(j);
            let a0 = &prev[j - 1];
            let (s0, s1) = (&self.sigma[j - 1], &self.sigma[j]);
            for (i, a) in next[0].iter_mut().enumerate() {
                *a = a0[i] + 0.5 * self.h * (s0[i] + s1[i]);
            }
        }
    }

    /// One Ψ sweep; returns the sup change of σ.
    fn sigma_sweep(&mut self) -> Result<f64> {
        self.rebuild_accum();
        let mut change: f64 = 0.0;
        for j in 1..self.sigma.len() {
            let m = weighted_mean_values(&self.eta[j], &self.accum[j], self.law)?;
            self.means[j] = m;
            for (s, e) in self.sigma[j].iter_mut().zip(&self.eta[j]) {
                let new = self.law.p(*e) - m;
                change = change.max((new - *s).abs());
                *s = new;
            }
        }
        Ok(change)
    }

    /// η refresh from the converged σ; returns the sup change of η.
    fn eta_update(&mut self) -> f64 {
        self.rebuild_accum();
        let mut change: f64 = 0.0;
        for j in 1..self.eta.len() {
            for ((e, a), r) in self.eta[j].iter_mut().zip(&self.accum[j]).zip(self.rho0) {
                let new = r * (-a).exp();
                change = change.max((new - *e).abs());
                *e = new;
            }
        }
        change
    }
}

/// Solve σ on the window's time nodes for the η trajectory `eta_traj`
/// (first entry at the window start) and window start exponent `accum_start`.
pub fn sigma_fixed_point(
    eta_traj: &[ScalarField],
    accum_start: &ScalarField,
    law: &PressureLaw,
    dt: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<ScalarField>, usize)> {
    if eta_traj.len() < 2 {
        return Err(Error::invalid("window needs at least two time nodes"));
    }
    let g = accum_start.grid();
    let m0 = weighted_mean_p(&eta_traj[0], accum_start, law)?;
    let s0: Vec<f64> = eta_traj[0].values().iter().map(|e| law.p(*e) - m0).collect();
    let q = eta_traj.len();
    let dummy = vec![0.0; g.len()];
    let mut w = Window {
        law,
        rho0: &dummy,
        h: dt,
        eta: eta_traj.iter().map(|e| e.values().to_vec()).collect(),
        sigma: vec![s0; q],
        accum: vec![accum_start.values().to_vec(); q],
        means: vec![m0; q],
    };
    let (iters, res, trace) = inner_loop(&mut w, tol, max_iter)?;
    if res > tol {
        return Err(Error::NoContraction {
            context: "sigma fixed point".into(),
            iterations: iters,
            residual: res,
            trace,
        });
    }
    Ok((
        w.sigma.into_iter().map(|s| ScalarField::from_raw(g, s)).collect(),
        iters,
    ))
}

fn inner_loop(w: &mut Window<'_>, tol: f64, max_iter: usize) -> Result<(usize, f64, Vec<f64>)> {
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        let r = w.sigma_sweep()?;
        trace.push(r);
        if r <= tol {
            return Ok((it, r, trace));
        }
    }
    let res = *trace.last().unwrap_or(&f64::INFINITY);
    Ok((max_iter, res, trace))
}

/// Advance `state` by one window of length `tau` using `q` time nodes.
/// `r_bound` is the current density bound used for the blow-up check.
pub fn step_window(
    state: &LagrangianState,
    law: &PressureLaw,
    cfg: &LagrangianConfig,
    tau: f64,
    r_bound: f64,
) -> Result<(LagrangianState, WindowRecord)> {
    let g = state.eta.grid();
    let q = cfg.quad_nodes_per_window;
    let h = tau / (q - 1) as f64;
    let m0 = weighted_mean_p(&state.eta, &state.accum, law)?;
    let mut w = Window {
        law,
        rho0: state.rho0.values(),
        h,
        eta: vec![state.eta.values().to_vec(); q],
        sigma: vec![state.sigma.values().to_vec(); q],
        accum: vec![state.accum.values().to_vec(); q],
        means: vec![m0; q],
    };
    let mut inner_total = 0;
    let mut outer = 0;
    let mut residual = f64::INFINITY;
    let mut trace = Vec::new();
    while outer < cfg.picard_max {
        outer += 1;
        let (it, r_in, _) = inner_loop(&mut w, cfg.picard_tol, cfg.picard_max)?;
        inner_total += it;
        if r_in > cfg.picard_tol {
            return Err(Error::NoContraction {
                context: format!("inner sigma loop at t = {}", state.time),
                iterations: it,
                residual: r_in,
                trace: vec![r_in],
            });
        }
        let r_out = w.eta_update();
        let sup = w.eta.iter().flatten().fold(0.0_f64, |m, v| m.max(*v));
        if sup > 10.0 * r_bound {
            return Err(Error::BlowUp(format!(
                "eta reached {sup} > 10 r = {} in window starting at t = {}",
                10.0 * r_bound,
                state.time
            )));
        }
        // η moved; one more sweep tells whether σ is still consistent
        let r_sigma = w.sigma_sweep()?;
        inner_total += 1;
        residual = r_out.max(r_sigma);
        trace.push(residual);
        if residual <= cfg.picard_tol {
            w.eta_update();
            break;
        }
    }
    if residual > cfg.picard_tol {
        return Err(Error::NoContraction {
            context: format!("outer eta loop at t = {}", state.time),
            iterations: outer,
            residual,
            trace,
        });
    }

    let dissipation = {
        let d: Vec<f64> = (0..q)
            .map(|j| {
                w.sigma[j]
                    .iter()
                    .zip(&w.accum[j])
                    .map(|(s, a)| s * s * a.exp())
                    .sum::<f64>()
                    / g.len() as f64
            })
            .collect();
        h * (0.5 * d[0] + d[1..q - 1].iter().sum::<f64>() + 0.5 * d[q - 1])
    };
    let mut means = w.means.clone();
    means[0] = m0;
    let max_weighted_mean = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sup_eta = w.eta.iter().flatten().fold(0.0_f64, |m, v| m.max(*v));

    let last = q - 1;
    let next = LagrangianState {
        rho0: Arc::clone(&state.rho0),
        eta: ScalarField::from_raw(g, std::mem::take(&mut w.eta[last])),
        sigma: ScalarField::from_raw(g, std::mem::take(&mut w.sigma[last])),
        accum: ScalarField::from_raw(g, std::mem::take(&mut w.accum[last])),
        time: state.time + tau,
    };
    let rec = WindowRecord {
        t_start: state.time,
        t_end: next.time,
        outer_iterations: outer,
        inner_iterations: inner_total,
        residual,
        dissipation,
        max_weighted_mean,
        sup_eta,
    };
    Ok((next, rec))
}

/// Conservation tolerance for accepted states.
pub const CONSERVATION_TOL: f64 = 1e-10;

/// Integrate from `ϱ₀` to `cfg.t_final`. Returns the states at window
/// boundaries (starting with the initial state) and the run report.
pub fn run_lagrangian(
    rho0: &ScalarField,
    law: &PressureLaw,
    cfg: &LagrangianConfig,
) -> Result<(Vec<LagrangianState>, LagrangianReport)> {
    cfg.validate()?;
    let init = LagrangianState::initial(rho0.clone(), law)?;
    let rho_max = rho0.max();
    let mut m = weighted_mean_p(&init.eta, &init.accum, law)?;

    if rho0.values().iter().all(|v| *v == 0.0) {
        let r = law.find_r_with_step(m, 0.0, cfg.r_scan_step)?;
        let report = LagrangianReport {
            m,
            r,
            sup_eta: 0.0,
            lipschitz: law.lipschitz_on(r),
            windows: vec![WindowRecord {
                t_start: 0.0,
                t_end: cfg.t_final,
                outer_iterations: 0,
                inner_iterations: 0,
                residual: 0.0,
                dissipation: 0.0,
                max_weighted_mean: m,
                sup_eta: 0.0,
            }],
            max_conservation_defect: 0.0,
        };
        let g = rho0.grid();
        let mut fin = init.clone();
        fin.sigma = ScalarField::constant(g, 0.0);
        fin.time = cfg.t_final;
        let mut first = init;
        first.sigma = ScalarField::constant(g, 0.0);
        return Ok((vec![first, fin], report));
    }

    let mut r = law.find_r_with_step(m, rho_max, cfg.r_scan_step)?;
    let mut big_r = 2.0 * rho_max;
    let mut tau = cfg.tau.min(contraction_window(law, big_r));
    let mut reference_sup = rho_max;
    log::debug!("lagrangian window tau = {tau}, r = {r}");

    let mut states = vec![init];
    let mut windows = Vec::new();
    let mut sup_eta = rho_max;
    let mut max_defect: f64 = 0.0;
    let t_end = cfg.t_final;
    // windows closer than this to T are merged into the previous one
    let eps = 1e-12 * t_end.max(1.0);
    while states.last().expect("non-empty").time < t_end - eps {
        let cur = states.last().expect("non-empty");
        let step = tau.min(t_end - cur.time);
        let (mut next, rec) = step_window(cur, law, cfg, step, r)?;
        if (next.time - t_end).abs() <= eps {
            next.time = t_end;
        }
        let defect = next.conservation_defect();
        max_defect = max_defect.max(defect);
        if defect > CONSERVATION_TOL {
            return Err(Error::InvariantViolation(format!(
                "eta e^A differs from rho0 by {defect:e} at t = {}",
                next.time
            )));
        }
        sup_eta = sup_eta.max(rec.sup_eta);
        if rec.max_weighted_mean > m {
            m = rec.max_weighted_mean;
            r = r.max(law.find_r_with_step(m, rho_max, cfg.r_scan_step)?);
        }
        if cfg.adaptive_window && rec.sup_eta > 1.25 * reference_sup {
            reference_sup = rec.sup_eta;
            big_r = big_r.max(2.0 * rec.sup_eta);
            tau = cfg.tau.min(contraction_window(law, big_r));
            log::debug!("window re-estimated: tau = {tau} at t = {}", next.time);
        }
        windows.push(rec);
        states.push(next);
    }
    let report = LagrangianReport {
        m,
        r,
        sup_eta,
        lipschitz: law.lipschitz_on(r),
        windows,
        max_conservation_defect: max_defect,
    };
    if sup_eta > r * (1.0 + 1e-9) {
        return Err(Error::InvariantViolation(format!(
            "sup eta = {sup_eta} exceeds the density bound r = {r}"
        )));
    }
    Ok((states, report))
}
