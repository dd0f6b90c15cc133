//! Eulerian velocity reconstruction `u = ∇φ` from a Lagrangian divergence σ.
//!
//! For a mollified `σ_δ` the velocity solves the fixed point
//!
//! ```text
//! ū ↦ x(t, y) flow of ū ↦ y(t, x) inverse flow ↦ Δφ = σ_δ(t, y(t, x)) ↦ u = ∇φ
//! ```
//!
//! iterated on short time windows, then δ is driven down a ladder with
//! warm starts.

use std::f64::consts::PI;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{flow_distance_l1, integrate_flow, inverse_flow, FlowMap, Velocity, VelocityHistory};
use crate::grid::{ScalarField, ScalarHistory, TorusGrid, VectorField};
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Periodized Gaussian with standard deviation δ.
    Gaussian,
    /// `exp(1 − 1/(1 − |x|²/δ²))` supported in the ball of radius δ.
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub delta: f64,
    pub kernel: Kernel,
}

impl MollifierSpec {
    pub fn gaussian(delta: f64) -> Self {
        Self {
            delta,
            kernel: Kernel::Gaussian,
        }
    }

    /// Nodal kernel weights on `grid`, nonnegative and summing to one.
    pub fn weights(&self, grid: TorusGrid) -> Vec<f64> {
        let n = grid.n();
        let h = grid.h();
        let delta = self.delta;
        // 1D profile over periodic images; the 2D kernel is a product
        // (Gaussian) or radial (bump)
        let axis_dist = |i: usize| -> f64 {
            let x = i as f64 * h;
            x.min(1.0 - x)
        };
        let mut w: Vec<f64> = match self.kernel {
            Kernel::Gaussian => {
                let images = (6.0 * delta).ceil() as i64 + 1;
                let prof: Vec<f64> = (0..n)
                    .map(|i| {
                        let x = i as f64 * h;
                        (-images..=images)
                            .map(|m| {
                                let z = x + m as f64;
                                (-(z * z) / (2.0 * delta * delta)).exp()
                            })
                            .sum()
                    })
                    .collect();
                if grid.d() == 1 {
                    prof
                } else {
                    (0..grid.len()).map(|idx| prof[idx / n] * prof[idx % n]).collect()
                }
            }
            Kernel::Bump => (0..grid.len())
                .map(|idx| {
                    let r2 = if grid.d() == 1 {
                        axis_dist(idx).powi(2)
                    } else {
                        axis_dist(idx / n).powi(2) + axis_dist(idx % n).powi(2)
                    };
                    let q = r2 / (delta * delta);
                    if q >= 1.0 {
                        0.0
                    } else {
                        (1.0 - 1.0 / (1.0 - q)).exp()
                    }
                })
                .collect(),
        };
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        w
    }
}

/// Checks the width against the grid; `Ok(false)` means δ is sub-grid and
/// smoothing is skipped.
fn check_width(spec: &MollifierSpec, h: f64) -> Result<bool> {
    if !(spec.delta > 0.0 && spec.delta.is_finite()) {
        return Err(Error::invalid(format!("mollifier width must be positive, got {}", spec.delta)));
    }
    if spec.delta < h {
        log::warn!("mollifier width {} is below the grid spacing {h}; returning the field unchanged", spec.delta);
        return Ok(false);
    }
    if spec.delta < 2.0 * h {
        log::warn!("mollifier width {} is under two grid cells; smoothing is unresolved", spec.delta);
    }
    Ok(true)
}

fn convolve_clamped(f: &ScalarField, weights: &[f64]) -> Result<ScalarField> {
    let (lo, hi) = (f.min(), f.max());
    let mut out = spectral::convolve(f, weights)?;
    // a convex combination of nodal values; clamp FFT rounding back into range
    for v in out.values_mut() {
        *v = v.clamp(lo, hi);
    }
    Ok(out)
}

/// Periodic convolution `f * κ_δ`.
pub fn mollify(f: &ScalarField, spec: &MollifierSpec) -> Result<ScalarField> {
    if !check_width(spec, f.grid().h())? {
        return Ok(f.clone());
    }
    convolve_clamped(f, &spec.weights(f.grid()))
}

pub fn mollify_history(sigma: &ScalarHistory, spec: &MollifierSpec) -> Result<ScalarHistory> {
    let g = sigma.grid();
    if !check_width(spec, g.h())? {
        return Ok(sigma.clone());
    }
    let w = spec.weights(g);
    let fields = sigma
        .fields
        .par_iter()
        .map(|f| convolve_clamped(f, &w))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalarHistory {
        times: sigma.times.clone(),
        fields,
    })
}

/// Zero-mean `φ` with `Δφ = rhs − mean(rhs)`, plus the discarded mean.
pub fn solve_poisson_periodic(rhs: &ScalarField) -> (ScalarField, f64) {
    spectral::solve_poisson(rhs)
}

pub fn gradient_spectral(phi: &ScalarField) -> VectorField {
    spectral::gradient(phi)
}

/// `∇Δ⁻¹ rhs` and the discarded mean.
fn poisson_gradient(rhs: &ScalarField) -> (VectorField, f64) {
    let (phi, mean) = solve_poisson_periodic(rhs);
    (gradient_spectral(&phi), mean)
}

#[derive(Debug, Clone)]
pub struct ReconConfig {
    /// Flow integration substep.
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub ladder: Vec<f64>,
    pub kernel: Kernel,
    pub max_halvings: usize,
    /// Fixed window length instead of the contraction heuristic.
    pub window: Option<f64>,
    /// Check inverse-flow round trips and attach accuracy warnings.
    pub check_inverse: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            tol: 1e-8,
            max_iter: 100,
            ladder: vec![0.1, 0.05, 0.025, 0.0125],
            kernel: Kernel::Gaussian,
            max_halvings: 5,
            window: None,
            check_inverse: false,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig("dt must be positive and finite".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig("recon_tol must be positive and finite".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("recon_max_iter must be at least 1".into()));
        }
        if self.ladder.is_empty()
            || self.ladder.iter().any(|d| !(*d > 0.0 && d.is_finite()))
            || self.ladder.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidConfig(
                "delta_ladder must be positive and strictly decreasing".into(),
            ));
        }
        if let Some(w) = self.window {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig("recon_window must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One application of Φ on the nodes in `nodes`: for each `t_k`, compose
/// `σ_δ(t_k, ·)` with the inverse flow of `ubar` and return `∇Δ⁻¹` of it.
/// Also returns the discarded means.
pub fn phi_map(
    ubar: &VelocityHistory,
    sigma_delta: &ScalarHistory,
    nodes: Range<usize>,
    dt: f64,
    check_inverse: bool,
) -> Result<(Vec<VectorField>, Vec<f64>)> {
    let grid = sigma_delta.grid();
    if ubar.grid() != grid {
        return Err(Error::invalid("velocity and divergence histories use different grids"));
    }
    if nodes.end > sigma_delta.times.len() || nodes.end > ubar.times().len() {
        return Err(Error::invalid("node range exceeds the histories"));
    }
    let d = grid.d();
    let n = grid.n();
    let out = nodes
        .into_par_iter()
        .map(|k| {
            let t = sigma_delta.times[k];
            let sig = &sigma_delta.fields[k];
            let rhs = if k == 0 {
                sig.clone()
            } else {
                let inv = inverse_flow(ubar, grid, t, dt, check_inverse)?;
                ScalarField::from_raw(
                    grid,
                    inv.labels
                        .iter()
                        .map(|y| crate::grid::interp_values(sig.values(), d, n, *y))
                        .collect(),
                )
            };
            Ok(poisson_gradient(&rhs))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().unzip())
}

/// `T₁ = 0.5 / (C_e ‖∇σ_δ‖_∞)` with `C_e` the probed `∇Δ⁻¹` bound.
pub fn contraction_window(sigma_delta: &ScalarHistory) -> f64 {
    let c_e = spectral::gradient_inverse_laplacian_bound(sigma_delta.grid());
    let grad_sup = sigma_delta
        .fields
        .iter()
        .map(|f| spectral::gradient(f).sup_norm())
        .fold(0.0, f64::max);
    if grad_sup * c_e > 0.0 {
        0.5 / (c_e * grad_sup)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowTrace {
    pub t_start: f64,
    pub t_end: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub velocity: VelocityHistory,
    pub windows: Vec<WindowTrace>,
    pub max_discarded_mean: f64,
}

impl FixedPointOutcome {
    pub fn total_iterations(&self) -> usize {
        self.windows.iter().map(|w| w.iterations).sum()
    }

    pub fn final_residual(&self) -> f64 {
        self.windows
            .iter()
            .filter_map(|w| w.residuals.last().copied())
            .fold(0.0, f64::max)
    }
}

/// Fixed point of Φ over consecutive windows of length `window`, starting
/// from `init` (warm start) or from `∇Δ⁻¹σ_δ` (cold start).
pub fn phi_fixed_point(
    sigma_delta: &ScalarHistory,
    window: f64,
    init: Option<&VelocityHistory>,
    cfg: &ReconConfig,
) -> Result<FixedPointOutcome> {
    if !(window > 0.0) {
        return Err(Error::invalid("fixed-point window must be positive"));
    }
    let grid = sigma_delta.grid();
    let times = &sigma_delta.times;
    let nk = times.len();
    let mut max_mean: f64 = 0.0;
    let mut fields: Vec<VectorField> = match init {
        Some(h) => {
            if h.grid() != grid || h.times() != times.as_slice() {
                return Err(Error::invalid("warm start history does not match the divergence history"));
            }
            h.fields().to_vec()
        }
        None => sigma_delta
            .fields
            .par_iter()
            .map(|f| poisson_gradient(f).0)
            .collect(),
    };
    let (u0, m0) = poisson_gradient(&sigma_delta.fields[0]);
    fields[0] = u0;
    max_mean = max_mean.max(m0.abs());

    let mut traces = Vec::new();
    let mut a = 1;
    while a < nk {
        let t0 = times[a - 1];
        let mut b = a + 1;
        while b < nk && times[b] <= t0 + window * (1.0 + 1e-12) {
            b += 1;
        }
        let mut residuals = Vec::new();
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            let hist = VelocityHistory::new(times[..b].to_vec(), fields[..b].to_vec())?;
            let (new, means) = phi_map(&hist, sigma_delta, a..b, cfg.dt, cfg.check_inverse)?;
            let res = new
                .iter()
                .zip(&fields[a..b])
                .map(|(x, y)| x.max_abs_diff(y))
                .fold(0.0, f64::max);
            for (slot, v) in fields[a..b].iter_mut().zip(new) {
                *slot = v;
            }
            residuals.push(res);
            if res <= cfg.tol {
                max_mean = means.iter().fold(max_mean, |m, v| m.max(v.abs()));
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoContraction {
                context: format!("velocity fixed point on [{t0}, {}] with window {window}", times[b - 1]),
                iterations: cfg.max_iter,
                residual: *residuals.last().unwrap_or(&f64::INFINITY),
                trace: residuals,
            });
        }
        traces.push(WindowTrace {
            t_start: t0,
            t_end: times[b - 1],
            iterations: residuals.len(),
            residuals,
        });
        a = b;
    }
    if max_mean > 1e-3 {
        log::warn!("Poisson right-hand side had mean {max_mean:e}; the divergence data may be inconsistent");
    }
    Ok(FixedPointOutcome {
        velocity: VelocityHistory::new(times.clone(), fields)?,
        windows: traces,
        max_discarded_mean: max_mean,
    })
}

/// Grid `L²` norm of `div u(t_k, x(t_k, y)) − σ(t_k, y)` at every time node,
/// using the spectral divergence interpolated along the flow of `u`.
pub fn reconstruction_residuals(u: &VelocityHistory, sigma: &ScalarHistory, dt: f64) -> Result<Vec<f64>> {
    let flow = integrate_flow(u, u.grid(), dt)?;
    residuals_along(&flow, u, sigma)
}

fn residuals_along(flow: &FlowMap, u: &VelocityHistory, sigma: &ScalarHistory) -> Result<Vec<f64>> {
    if sigma.times != flow.times || sigma.grid() != flow.grid {
        return Err(Error::invalid("divergence history does not match the velocity nodes"));
    }
    Ok((0..flow.times.len())
        .map(|k| {
            let t = flow.times[k];
            let s = sigma.fields[k].values();
            let sum: f64 = flow.positions[k]
                .iter()
                .zip(s)
                .map(|(x, sv)| (u.divergence(t, *x) - sv).powi(2))
                .sum();
            (sum / s.len() as f64).sqrt()
        })
        .collect())
}

pub fn reconstruction_residual(u: &VelocityHistory, sigma: &ScalarHistory, dt: f64) -> Result<f64> {
    Ok(reconstruction_residuals(u, sigma, dt)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub delta: f64,
    pub window: f64,
    pub halvings: usize,
    pub iterations: usize,
    pub fixed_point_residual: f64,
    pub reconstruction_residual: f64,
    /// `flow_distance_l1` to the previous level's flow.
    pub flow_distance: Option<f64>,
    pub max_discarded_mean: f64,
    pub traces: Vec<WindowTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub c_e: f64,
    pub levels: Vec<LevelRecord>,
    /// Set when the ladder stopped early.
    pub failure: Option<String>,
}

/// Outcome of [`delta_continuation`]; `velocity` is the last completed level.
#[derive(Debug)]
pub struct Continuation {
    pub velocity: Option<VelocityHistory>,
    pub report: ReconstructionReport,
    /// The error that stopped the ladder, if any.
    pub error: Option<Error>,
}

/// Run the fixed point for each δ of the ladder with warm starts, halving
/// the window up to `max_halvings` times when a level fails to contract.
pub fn delta_continuation(sigma: &ScalarHistory, cfg: &ReconConfig) -> Result<Continuation> {
    cfg.validate()?;
    let grid = sigma.grid();
    let mut report = ReconstructionReport {
        c_e: spectral::gradient_inverse_laplacian_bound(grid),
        levels: Vec::new(),
        failure: None,
    };
    let mut current: Option<VelocityHistory> = None;
    let mut prev_flow: Option<FlowMap> = None;
    for &delta in &cfg.ladder {
        let sd = mollify_history(sigma, &MollifierSpec { delta, kernel: cfg.kernel })?;
        let base_window = cfg.window.unwrap_or_else(|| contraction_window(&sd));
        let mut window = base_window;
        let mut halvings = 0;
        let outcome = loop {
            match phi_fixed_point(&sd, window, current.as_ref(), cfg) {
                Ok(o) => break Ok(o),
                Err(Error::NoContraction { .. }) if halvings < cfg.max_halvings => {
                    halvings += 1;
                    window *= 0.5;
                    log::warn!("delta = {delta}: no contraction, halving window to {window}");
                }
                Err(e) => break Err(e),
            }
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(e @ Error::NoContraction { .. }) => {
                report.failure = Some(format!("delta = {delta}: {e}"));
                return Ok(Continuation {
                    velocity: current,
                    report,
                    error: Some(e),
                });
            }
            Err(e) => return Err(e),
        };
        let flow = integrate_flow(&outcome.velocity, grid, cfg.dt)?;
        let residual = residuals_along(&flow, &outcome.velocity, sigma)?
            .into_iter()
            .fold(0.0, f64::max);
        let flow_distance = match &prev_flow {
            Some(p) => Some(flow_distance_l1(p, &flow)?),
            None => None,
        };
        report.levels.push(LevelRecord {
            delta,
            window,
            halvings,
            iterations: outcome.total_iterations(),
            fixed_point_residual: outcome.final_residual(),
            reconstruction_residual: residual,
            flow_distance,
            max_discarded_mean: outcome.max_discarded_mean,
            traces: outcome.windows,
        });
        prev_flow = Some(flow);
        current = Some(outcome.velocity);
    }
    Ok(Continuation {
        velocity: current,
        report,
        error: None,
    })
}

/// Sup of the spectral curl over a history; zero in one dimension.
pub fn curl_sup(u: &VelocityHistory) -> f64 {
    u.fields()
        .iter()
        .map(|f| spectral::curl(f).sup_norm())
        .fold(0.0, f64::max)
}

/// Largest per-component grid mean over a history.
pub fn mean_sup(u: &VelocityHistory) -> f64 {
    u.fields()
        .iter()
        .flat_map(|f| f.component_means())
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// The Gaussian kernel's Fourier symbol at wavenumber `k`.
pub fn gaussian_symbol(delta: f64, k: f64) -> f64 {
    (-2.0 * PI * PI * delta * delta * k * k).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(n: usize) -> TorusGrid {
        TorusGrid::new(1, n).unwrap()
    }

    #[test]
    fn mollify_constant_unchanged() {
        let f = ScalarField::constant(g1(64), 2.5);
        let m = mollify(&f, &MollifierSpec::gaussian(0.05)).unwrap();
        assert!(m.values().iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn mollify_pure_mode_gaussian_symbol() {
        let g = g1(128);
        let delta = 0.05;
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin()).unwrap();
        let m = mollify(&f, &MollifierSpec::gaussian(delta)).unwrap();
        let a = gaussian_symbol(delta, 1.0);
        for (v, x) in m.values().iter().zip(g.nodes()) {
            assert!((v - a * (2.0 * PI * x[0]).sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn mollify_indicator_keeps_mean_and_sup() {
        let g = g1(256);
        let f = ScalarField::from_fn(g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        for kernel in [Kernel::Gaussian, Kernel::Bump] {
            let m = mollify(&f, &MollifierSpec { delta: 0.05, kernel }).unwrap();
            assert!(m.sup_norm() <= 1.0);
            assert!((m.mean() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mollify_rejects_nonpositive_width() {
        let f = ScalarField::constant(g1(16), 1.0);
        assert!(mollify(&f, &MollifierSpec::gaussian(0.0)).is_err());
        assert!(mollify(&f, &MollifierSpec::gaussian(-1.0)).is_err());
        let sub = mollify(&f, &MollifierSpec::gaussian(0.01)).unwrap();
        assert_eq!(sub, f);
    }

    #[test]
    fn phi_map_zero_and_constant_rhs() {
        let g = g1(32);
        let times = vec![0.0, 0.1, 0.2];
        let ubar = VelocityHistory::new(
            times.clone(),
            vec![VectorField::from_fn(g, |x| [0.1 * (2.0 * PI * x[0]).sin(), 0.0]).unwrap(); 3],
        )
        .unwrap();
        for c in [0.0, 3.0] {
            let s = ScalarHistory::new(times.clone(), vec![ScalarField::constant(g, c); 3]).unwrap();
            let (u, means) = phi_map(&ubar, &s, 0..3, 0.01, false).unwrap();
            assert!(u.iter().all(|f| f.sup_norm() < 1e-14));
            assert!((means[2] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_map_cosine_at_time_zero() {
        let g = g1(64);
        let times = vec![0.0, 0.1];
        let ubar = VelocityHistory::zeros(g, times.clone()).unwrap();
        let c = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let s = ScalarHistory::new(times, vec![c.clone(), c]).unwrap();
        let (u, _) = phi_map(&ubar, &s, 0..1, 0.01, false).unwrap();
        for (v, x) in u[0].component(0).iter().zip(g.nodes()) {
            assert!((v - (2.0 * PI * x[0]).sin() / (2.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_sigma_gives_zero_velocity() {
        let g = g1(32);
        let times = vec![0.0, 0.5, 1.0];
        let s = ScalarHistory::new(times, vec![ScalarField::constant(g, 0.0); 3]).unwrap();
        let out = phi_fixed_point(&s, 0.5, None, &ReconConfig::default()).unwrap();
        assert!(out.velocity.fields().iter().all(|f| f.sup_norm() == 0.0));
        assert!(out.windows.iter().all(|w| w.iterations == 1));
        let cont = delta_continuation(&s, &ReconConfig::default()).unwrap();
        assert!(cont.error.is_none());
        for lvl in &cont.report.levels {
            assert_eq!(lvl.reconstruction_residual, 0.0);
            assert!(lvl.flow_distance.unwrap_or(0.0) == 0.0);
        }
    }

    #[test]
    fn residual_of_zero_pair_is_zero() {
        let g = g1(16);
        let times = vec![0.0, 1.0];
        let u = VelocityHistory::zeros(g, times.clone()).unwrap();
        let s = ScalarHistory::new(times, vec![ScalarField::constant(g, 0.0); 2]).unwrap();
        assert_eq!(reconstruction_residual(&u, &s, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn bad_ladder_rejected() {
        let cfg = ReconConfig {
            ladder: vec![0.05, 0.1],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
