//! Characteristic flows `ẋ = u(t, x)`, `x(0, y) = y`, on the torus.
//!
//! Trajectories are integrated with classical RK4 on substeps aligned to the
//! velocity's time knots. Positions are kept unwrapped so that differences
//! between nearby flows never jump across the periodic seam.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    check_time_nodes, interp_values, time_weights, torus_distance, wrap_coord, Point, ScalarField,
    ScalarHistory, TorusGrid, VectorField,
};
use crate::spectral;

const ROUNDING_SLACK: f64 = 1.0 + 1e-12;

/// A time-dependent velocity field on `T^d`.
pub trait Velocity: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: Point) -> Point;
    fn divergence(&self, t: f64, x: Point) -> f64;
    /// Upper bound of `|div u(t, ·)|`.
    fn divergence_sup(&self, t: f64) -> f64;
    /// Time nodes; the flow is recorded there and substeps never straddle them.
    fn knots(&self) -> &[f64];
    /// Spatial Lipschitz estimate over the whole history.
    fn lipschitz(&self) -> f64;
    /// `sup |u|` over the whole history.
    fn speed(&self) -> f64;
}

/// Velocity fields on grid nodes at increasing times, linear in time.
#[derive(Debug, Clone)]
pub struct VelocityHistory {
    grid: TorusGrid,
    times: Vec<f64>,
    fields: Vec<VectorField>,
    divs: Vec<ScalarField>,
    div_sups: Vec<f64>,
    lipschitz: f64,
    speed: f64,
}

impl VelocityHistory {
    pub fn new(times: Vec<f64>, fields: Vec<VectorField>) -> Result<Self> {
        check_time_nodes(&times)?;
        if fields.len() != times.len() {
            return Err(Error::invalid("velocity history needs one field per time node"));
        }
        let grid = fields[0].grid();
        if fields.iter().any(|f| f.grid() != grid) {
            return Err(Error::invalid("velocity fields live on different grids"));
        }
        let divs: Vec<ScalarField> = fields.par_iter().map(spectral::divergence).collect();
        let div_sups = divs.iter().map(|d| d.sup_norm()).collect();
        let lipschitz = fields
            .par_iter()
            .map(|f| {
                let grads: Vec<VectorField> =
                    (0..grid.d()).map(|a| spectral::gradient(&f.component_field(a))).collect();
                (0..grid.len())
                    .map(|i| {
                        grads
                            .iter()
                            .map(|g| (0..grid.d()).map(|b| g.component(b)[i].powi(2)).sum::<f64>())
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max);
        let speed = fields.iter().map(|f| f.sup_norm()).fold(0.0, f64::max);
        Ok(Self {
            grid,
            times,
            fields,
            divs,
            div_sups,
            lipschitz,
            speed,
        })
    }

    /// Zero velocity on the given time nodes.
    pub fn zeros(grid: TorusGrid, times: Vec<f64>) -> Result<Self> {
        let fields = vec![VectorField::zeros(grid); times.len()];
        Self::new(times, fields)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub fn into_fields(self) -> Vec<VectorField> {
        self.fields
    }

    /// Spectral divergence at each time node.
    pub fn divergences(&self) -> &[ScalarField] {
        &self.divs
    }

    pub fn divergence_history(&self) -> ScalarHistory {
        ScalarHistory {
            times: self.times.clone(),
            fields: self.divs.clone(),
        }
    }

    /// `max_k max_i |u_k − v_k|` (componentwise).
    pub fn max_abs_diff(&self, other: &VelocityHistory) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max))
    }

    pub fn check_compatible(&self, other: &VelocityHistory) -> Result<()> {
        if self.grid != other.grid || self.times != other.times {
            return Err(Error::invalid("velocity histories have different grids or time nodes"));
        }
        Ok(())
    }
}

impl Velocity for VelocityHistory {
    fn dim(&self) -> usize {
        self.grid.d()
    }

    fn eval(&self, t: f64, x: Point) -> Point {
        let (k, w) = time_weights(&self.times, t);
        let a = self.fields[k].interpolate(x);
        if w == 0.0 {
            return a;
        }
        let b = self.fields[k + 1].interpolate(x);
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }

    fn divergence(&self, t: f64, x: Point) -> f64 {
        let (k, w) = time_weights(&self.times, t);
        let (d, n) = (self.grid.d(), self.grid.n());
        let a = interp_values(self.divs[k].values(), d, n, x);
        if w == 0.0 {
            return a;
        }
        let b = interp_values(self.divs[k + 1].values(), d, n, x);
        a + w * (b - a)
    }

    fn divergence_sup(&self, t: f64) -> f64 {
        let (k, w) = time_weights(&self.times, t);
        let s = if w == 0.0 {
            self.div_sups[k]
        } else {
            self.div_sups[k].max(self.div_sups[k + 1])
        };
        // interpolation is a convex combination up to rounding
        s * ROUNDING_SLACK
    }

    fn knots(&self) -> &[f64] {
        &self.times
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn speed(&self) -> f64 {
        self.speed
    }
}

pub type VelocityFn = Arc<dyn Fn(f64, Point) -> Point + Send + Sync>;
pub type DivergenceFn = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;

/// Velocity given by closures, with user-supplied bounds.
#[derive(Clone)]
pub struct AnalyticVelocity {
    pub d: usize,
    pub times: Vec<f64>,
    pub u: VelocityFn,
    pub div: DivergenceFn,
    pub div_sup: f64,
    pub lip: f64,
    pub speed: f64,
}

impl AnalyticVelocity {
    pub fn new(
        d: usize,
        times: Vec<f64>,
        u: impl Fn(f64, Point) -> Point + Send + Sync + 'static,
        div: impl Fn(f64, Point) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_time_nodes(&times)?;
        Ok(Self {
            d,
            times,
            u: Arc::new(u),
            div: Arc::new(div),
            div_sup: f64::INFINITY,
            lip: f64::INFINITY,
            speed: f64::INFINITY,
        })
    }

    pub fn with_bounds(mut self, div_sup: f64, lip: f64, speed: f64) -> Self {
        self.div_sup = div_sup;
        self.lip = lip;
        self.speed = speed;
        self
    }

    /// Constant translation `u ≡ c`.
    pub fn constant(d: usize, times: Vec<f64>, c: Point) -> Result<Self> {
        let speed = (c[0] * c[0] + c[1] * c[1]).sqrt();
        Ok(Self::new(d, times, move |_, _| c, |_, _| 0.0)?.with_bounds(0.0, 0.0, speed))
    }
}

impl Velocity for AnalyticVelocity {
    fn dim(&self) -> usize {
        self.d
    }
    fn eval(&self, t: f64, x: Point) -> Point {
        (self.u)(t, x)
    }
    fn divergence(&self, t: f64, x: Point) -> f64 {
        (self.div)(t, x)
    }
    fn divergence_sup(&self, _t: f64) -> f64 {
        self.div_sup
    }
    fn knots(&self) -> &[f64] {
        &self.times
    }
    fn lipschitz(&self) -> f64 {
        self.lip
    }
    fn speed(&self) -> f64 {
        self.speed
    }
}

/// The blend `s·u₁ + (1−s)·u₂`, evaluated as `u₂ + s(u₁ − u₂)` so that
/// identical inputs reproduce `u₂` bit for bit.
pub struct Blend<'a> {
    pub u1: &'a dyn Velocity,
    pub u2: &'a dyn Velocity,
    pub s: f64,
}

impl Velocity for Blend<'_> {
    fn dim(&self) -> usize {
        self.u2.dim()
    }
    fn eval(&self, t: f64, x: Point) -> Point {
        let a = self.u1.eval(t, x);
        let b = self.u2.eval(t, x);
        [b[0] + self.s * (a[0] - b[0]), b[1] + self.s * (a[1] - b[1])]
    }
    fn divergence(&self, t: f64, x: Point) -> f64 {
        let a = self.u1.divergence(t, x);
        let b = self.u2.divergence(t, x);
        b + self.s * (a - b)
    }
    fn divergence_sup(&self, t: f64) -> f64 {
        self.u1.divergence_sup(t).max(self.u2.divergence_sup(t)) * ROUNDING_SLACK
    }
    fn knots(&self) -> &[f64] {
        self.u2.knots()
    }
    fn lipschitz(&self) -> f64 {
        self.u1.lipschitz().max(self.u2.lipschitz())
    }
    fn speed(&self) -> f64 {
        self.u1.speed().max(self.u2.speed())
    }
}

/// Trajectories on a label grid, recorded at the velocity's time knots.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub grid: TorusGrid,
    pub times: Vec<f64>,
    /// Unwrapped positions `x(t_k, y)` per knot, per label.
    pub positions: Vec<Vec<Point>>,
    /// `log J(t_k, y)` per knot, per label.
    pub log_jac: Vec<Vec<f64>>,
    /// Compressibility bound `L(t_k) = ∫₀^{t_k} ‖div u‖_∞`, same quadrature as `log J`.
    pub l_bound: Vec<f64>,
    /// Substep times and positions when requested.
    pub fine: Option<(Vec<f64>, Vec<Vec<Point>>)>,
}

impl FlowMap {
    pub fn jac(&self, k: usize, i: usize) -> f64 {
        self.log_jac[k][i].exp()
    }

    pub fn wrapped(&self, k: usize, i: usize) -> Point {
        let p = self.positions[k][i];
        [wrap_coord(p[0]), wrap_coord(p[1])]
    }

    /// Integer winding counts `floor(x)` per axis.
    pub fn winding(&self, k: usize, i: usize) -> [i64; 2] {
        let p = self.positions[k][i];
        [p[0].floor() as i64, p[1].floor() as i64]
    }

    pub fn knot_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| Error::invalid(format!("time {t} is not a recorded flow node")))
    }

    /// Wrapped positions at knot `k` as a vector field over the labels.
    pub fn position_field(&self, k: usize) -> VectorField {
        let d = self.grid.d();
        let comps = (0..d)
            .map(|a| self.positions[k].iter().map(|p| wrap_coord(p[a])).collect())
            .collect();
        VectorField::from_raw(self.grid, comps)
    }

    pub fn winding_field(&self, k: usize, axis: usize) -> ScalarField {
        ScalarField::from_raw(
            self.grid,
            self.positions[k].iter().map(|p| p[axis].floor()).collect(),
        )
    }

    pub fn jacobian_field(&self, k: usize) -> ScalarField {
        ScalarField::from_raw(self.grid, self.log_jac[k].iter().map(|l| l.exp()).collect())
    }

    /// Largest `|log J| − L` over all knots and labels; nonpositive by construction.
    pub fn jacobian_bound_excess(&self) -> f64 {
        self.log_jac
            .iter()
            .zip(&self.l_bound)
            .flat_map(|(lj, l)| lj.iter().map(move |v| v.abs() - l))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[inline]
fn rk4_step(u: &dyn Velocity, t: f64, x: Point, h: f64) -> Point {
    let k1 = u.eval(t, x);
    let x2 = [x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]];
    let k2 = u.eval(t + 0.5 * h, x2);
    let x3 = [x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]];
    let k3 = u.eval(t + 0.5 * h, x3);
    let x4 = [x[0] + h * k3[0], x[1] + h * k3[1]];
    let k4 = u.eval(t + h, x4);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Substep layout between consecutive knots: `(count, length)` per interval.
fn substeps(knots: &[f64], dt: f64) -> Vec<(usize, f64)> {
    knots
        .windows(2)
        .map(|w| {
            let gap = w[1] - w[0];
            let m = ((gap / dt) - 1e-9).ceil().max(1.0) as usize;
            (m, gap / m as f64)
        })
        .collect()
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

/// Options for [`integrate_flow_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowOptions {
    /// Keep positions at every substep (for [`jacobian_liouville`]).
    pub keep_substeps: bool,
}

pub fn integrate_flow(u: &dyn Velocity, labels: TorusGrid, dt: f64) -> Result<FlowMap> {
    integrate_flow_with(u, labels, dt, FlowOptions::default())
}

/// RK4 flow of `u` from `t = knots[0]` through all knots. Knot gaps larger
/// than `dt` are subdivided into equal substeps.
pub fn integrate_flow_with(
    u: &dyn Velocity,
    labels: TorusGrid,
    dt: f64,
    opts: FlowOptions,
) -> Result<FlowMap> {
    check_dt(dt)?;
    if u.dim() != labels.d() {
        return Err(Error::invalid("velocity and label grid dimensions differ"));
    }
    let knots = u.knots().to_vec();
    let steps = substeps(&knots, dt);

    // bound and substep clock shared by every label
    let mut l_bound = vec![0.0; knots.len()];
    let mut fine_times = vec![knots[0]];
    {
        let mut l = 0.0;
        for (k, &(m, h)) in steps.iter().enumerate() {
            for j in 0..m {
                let t = knots[k] + j as f64 * h;
                let sa = u.divergence_sup(t);
                let sb = u.divergence_sup(t + h);
                l += (0.5 * h) * (sa + sb);
                if opts.keep_substeps {
                    fine_times.push(if j + 1 == m { knots[k + 1] } else { t + h });
                }
            }
            l_bound[k + 1] = l;
        }
    }

    struct Track {
        pos: Vec<Point>,
        logj: Vec<f64>,
        fine: Vec<Point>,
    }
    let tracks: Vec<Track> = (0..labels.len())
        .into_par_iter()
        .map(|i| {
            let mut x = labels.node(i);
            let mut lj = 0.0;
            let mut pos = Vec::with_capacity(knots.len());
            let mut logj = Vec::with_capacity(knots.len());
            let mut fine = Vec::new();
            pos.push(x);
            logj.push(0.0);
            if opts.keep_substeps {
                fine.push(x);
            }
            for (k, &(m, h)) in steps.iter().enumerate() {
                for j in 0..m {
                    let t = knots[k] + j as f64 * h;
                    let da = u.divergence(t, x);
                    let xn = rk4_step(u, t, x, h);
                    let db = u.divergence(t + h, xn);
                    lj += (0.5 * h) * (da + db);
                    x = xn;
                    if opts.keep_substeps {
                        fine.push(x);
                    }
                }
                pos.push(x);
                logj.push(lj);
            }
            Track { pos, logj, fine }
        })
        .collect();

    let nk = knots.len();
    let mut positions = vec![Vec::with_capacity(labels.len()); nk];
    let mut log_jac = vec![Vec::with_capacity(labels.len()); nk];
    let mut fine_pos = if opts.keep_substeps {
        vec![Vec::with_capacity(labels.len()); fine_times.len()]
    } else {
        Vec::new()
    };
    for tr in tracks {
        for k in 0..nk {
            positions[k].push(tr.pos[k]);
            log_jac[k].push(tr.logj[k]);
        }
        for (s, p) in tr.fine.into_iter().enumerate() {
            fine_pos[s].push(p);
        }
    }
    for k in 0..nk {
        let bound = l_bound[k];
        if let Some(v) = log_jac[k].iter().find(|v| v.abs() > bound) {
            // only reachable when a velocity under-reports its divergence bound
            return Err(Error::InvariantViolation(format!(
                "|log J| = {} exceeds L = {bound} at t = {}",
                v.abs(),
                knots[k]
            )));
        }
    }
    Ok(FlowMap {
        grid: labels,
        times: knots,
        positions,
        log_jac,
        l_bound,
        fine: opts.keep_substeps.then_some((fine_times, fine_pos)),
    })
}

/// Recompute `J = exp(∫ div u(s, x(s, y)) ds)` from a divergence history,
/// by trapezoid over the finest stored trajectory samples.
pub fn jacobian_liouville(flow: &FlowMap, divu: &ScalarHistory) -> Result<FlowMap> {
    if divu.grid().d() != flow.grid.d() {
        return Err(Error::invalid("divergence history dimension differs from the flow"));
    }
    let (times, samples): (Vec<f64>, &Vec<Vec<Point>>) = match &flow.fine {
        Some((t, p)) => (t.clone(), p),
        None => (flow.times.clone(), &flow.positions),
    };
    let n = flow.grid.len();
    let mut logj = vec![vec![0.0; n]; flow.times.len()];
    let mut lb = vec![0.0; flow.times.len()];
    let mut acc = vec![0.0; n];
    let mut l = 0.0;
    let mut knot = 1;
    for s in 1..times.len() {
        let h = times[s] - times[s - 1];
        for (i, a) in acc.iter_mut().enumerate() {
            let da = divu.eval(times[s - 1], samples[s - 1][i]);
            let db = divu.eval(times[s], samples[s][i]);
            *a += (0.5 * h) * (da + db);
        }
        l += (0.5 * h) * (divu.sup_at(times[s - 1]) + divu.sup_at(times[s]));
        if knot < flow.times.len() && (times[s] - flow.times[knot]).abs() <= 1e-12 {
            logj[knot].copy_from_slice(&acc);
            lb[knot] = l;
            knot += 1;
        }
    }
    let mut out = flow.clone();
    out.log_jac = logj;
    out.l_bound = lb;
    Ok(out)
}

/// `y(t, x)` for every grid node `x`, by backward integration.
#[derive(Debug, Clone)]
pub struct InverseFlow {
    pub time: f64,
    /// Wrapped label positions per grid node.
    pub labels: Vec<Point>,
    /// `max_x |x(t, y(t, x)) − x|` when the round trip was checked.
    pub defect: Option<f64>,
    pub warning: Option<String>,
}

/// Knot-aligned substeps covering `[knots[0], t]`.
fn steps_until(knots: &[f64], t: f64, dt: f64) -> Vec<(f64, usize, f64)> {
    let mut out = Vec::new();
    for w in knots.windows(2) {
        if w[0] >= t {
            break;
        }
        let end = w[1].min(t);
        let gap = end - w[0];
        if gap <= 0.0 {
            continue;
        }
        let m = ((gap / dt) - 1e-9).ceil().max(1.0) as usize;
        out.push((w[0], m, gap / m as f64));
    }
    out
}

pub fn inverse_flow(
    u: &dyn Velocity,
    grid: TorusGrid,
    t: f64,
    dt: f64,
    check: bool,
) -> Result<InverseFlow> {
    check_dt(dt)?;
    let knots = u.knots();
    if !(t >= knots[0] && t <= *knots.last().expect("non-empty") + 1e-12) {
        return Err(Error::invalid(format!("time {t} outside the velocity history")));
    }
    let steps = steps_until(knots, t, dt);
    let labels: Vec<Point> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut z = grid.node(i);
            for &(t0, m, h) in steps.iter().rev() {
                for j in (0..m).rev() {
                    let ts = t0 + (j + 1) as f64 * h;
                    z = rk4_step(u, ts, z, -h);
                }
            }
            [wrap_coord(z[0]), wrap_coord(z[1])]
        })
        .collect();
    let mut out = InverseFlow {
        time: t,
        labels,
        defect: None,
        warning: None,
    };
    if check {
        let d = grid.d();
        let defect = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let mut x = out.labels[i];
                for &(t0, m, h) in &steps {
                    for j in 0..m {
                        x = rk4_step(u, t0 + j as f64 * h, x, h);
                    }
                }
                torus_distance(x, grid.node(i), d)
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max);
        let limit = 10.0 * dt * dt * u.speed() * u.lipschitz();
        if defect > limit {
            let msg = format!(
                "inverse flow round-trip defect {defect:e} exceeds the estimate {limit:e} at t = {t}"
            );
            log::warn!("{msg}");
            out.warning = Some(msg);
        }
        out.defect = Some(defect);
    }
    Ok(out)
}

/// Flows of the blends `s·u₁ + (1−s)·u₂` for each `s`.
#[derive(Debug, Clone)]
pub struct WeightedFlowFamily {
    pub s_values: Vec<f64>,
    pub flows: Vec<FlowMap>,
}

pub fn weighted_flow(
    u1: &dyn Velocity,
    u2: &dyn Velocity,
    s_list: &[f64],
    labels: TorusGrid,
    dt: f64,
) -> Result<WeightedFlowFamily> {
    if u1.knots() != u2.knots() || u1.dim() != u2.dim() {
        return Err(Error::invalid("weighted flow needs velocities on shared time nodes"));
    }
    if s_list.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::invalid("blend parameters must lie in [0, 1]"));
    }
    if s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("blend parameters must be strictly increasing"));
    }
    let flows = s_list
        .iter()
        .map(|&s| integrate_flow(&Blend { u1, u2, s }, labels, dt))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightedFlowFamily {
        s_values: s_list.to_vec(),
        flows,
    })
}

fn rms_norm(a: &[Point], b: &[Point], scale: f64, d: usize) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (0..d).map(|k| ((q[k] - p[k]) * scale).powi(2)).sum::<f64>())
        .sum();
    (s / a.len() as f64).sqrt()
}

/// `‖(x_{s_{i+1}} − x_{s_i})/(s_{i+1} − s_i)‖₂` at knot `k` for each adjacent pair.
pub fn ds_derivative_norm(family: &WeightedFlowFamily, k: usize) -> Result<Vec<f64>> {
    let s = &family.s_values;
    if s.len() < 2 {
        return Err(Error::invalid("need at least two blend parameters"));
    }
    let d = family.flows[0].grid.d();
    Ok(s.windows(2)
        .zip(family.flows.windows(2))
        .map(|(sw, fw)| {
            rms_norm(&fw[0].positions[k], &fw[1].positions[k], 1.0 / (sw[1] - sw[0]), d)
        })
        .collect())
}

/// `α(t_k) = ∫₀¹ ‖∂ₛx_s‖₂² ds` with centered differences in `s`
/// (one-sided at the ends) and the trapezoid rule.
pub fn alpha(family: &WeightedFlowFamily, k: usize) -> Result<f64> {
    let s = &family.s_values;
    let m = s.len();
    if m < 2 {
        return Err(Error::invalid("need at least two blend parameters"));
    }
    let d = family.flows[0].grid.d();
    let sq: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == m - 1 {
                (m - 2, m - 1)
            } else {
                (i - 1, i + 1)
            };
            let pa = &family.flows[a].positions[k];
            let pb = &family.flows[b].positions[k];
            rms_norm(pa, pb, 1.0 / (s[b] - s[a]), d).powi(2)
        })
        .collect();
    Ok((1..m).map(|i| 0.5 * (s[i] - s[i - 1]) * (sq[i] + sq[i - 1])).sum())
}

/// `max_k mean_y |x₁(t_k, y) − x₂(t_k, y)|` with the geodesic torus distance.
pub fn flow_distance_l1(f1: &FlowMap, f2: &FlowMap) -> Result<f64> {
    if f1.grid != f2.grid || f1.times != f2.times {
        return Err(Error::invalid("flows have different label grids or time nodes"));
    }
    let d = f1.grid.d();
    Ok(f1
        .positions
        .iter()
        .zip(&f2.positions)
        .map(|(a, b)| {
            a.iter().zip(b).map(|(p, q)| torus_distance(*p, *q, d)).sum::<f64>() / a.len() as f64
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn times(n: usize, t: f64) -> Vec<f64> {
        (0..=n).map(|k| t * k as f64 / n as f64).collect()
    }

    fn sine_velocity(t_end: f64) -> AnalyticVelocity {
        AnalyticVelocity::new(
            1,
            times(10, t_end),
            |_, x| [(2.0 * PI * x[0]).sin() / (2.0 * PI), 0.0],
            |_, x| (2.0 * PI * x[0]).cos(),
        )
        .unwrap()
        .with_bounds(1.0, 1.0, 1.0 / (2.0 * PI))
    }

    #[test]
    fn translation_flow() {
        let g = TorusGrid::new(2, 8).unwrap();
        let u = AnalyticVelocity::constant(2, times(4, 1.0), [0.3, -0.2]).unwrap();
        let f = integrate_flow(&u, g, 0.01).unwrap();
        for i in 0..g.len() {
            let y = g.node(i);
            let x = f.positions[4][i];
            assert!((x[0] - (y[0] + 0.3)).abs() < 1e-13);
            assert!((x[1] - (y[1] - 0.2)).abs() < 1e-13);
            assert_eq!(f.jac(4, i), 1.0);
        }
    }

    #[test]
    fn zero_flow_is_identity() {
        let g = TorusGrid::new(1, 16).unwrap();
        let u = VelocityHistory::zeros(g, times(3, 1.0)).unwrap();
        let f = integrate_flow(&u, g, 0.1).unwrap();
        for k in 0..4 {
            for i in 0..16 {
                assert_eq!(f.positions[k][i], g.node(i));
                assert_eq!(f.jac(k, i), 1.0);
            }
        }
    }

    #[test]
    fn sine_flow_closed_form() {
        let g = TorusGrid::new(1, 64).unwrap();
        let f = integrate_flow(&sine_velocity(1.0), g, 1e-3).unwrap();
        let k = f.times.len() - 1;
        for i in 0..64 {
            let y = g.node(i)[0];
            if (y - 0.0).abs() < 0.05 || (y - 0.5).abs() < 0.05 || (y - 1.0).abs() < 0.05 {
                continue;
            }
            let x = f.positions[k][i][0];
            let lhs = (PI * x).tan();
            let rhs = (PI * y).tan() * 1f64.exp();
            // compare in angle space, tan is steep near ½
            assert!((lhs.atan() - rhs.atan()).abs() / PI < 1e-6);
        }
    }

    #[test]
    fn constant_divergence_jacobian() {
        let g = TorusGrid::new(1, 8).unwrap();
        // velocity is irrelevant for J when div is constant in space
        let u = AnalyticVelocity::new(1, times(5, 1.0), |_, _| [0.1, 0.0], |_, _| 0.7)
            .unwrap()
            .with_bounds(0.7, 0.0, 0.1);
        let f = integrate_flow(&u, g, 0.01).unwrap();
        for i in 0..8 {
            assert!((f.jac(5, i) - 0.7f64.exp()).abs() < 1e-13);
        }
        assert!(f.jacobian_bound_excess() <= 0.0);
    }

    #[test]
    fn inverse_of_translation() {
        let g = TorusGrid::new(1, 16).unwrap();
        let u = AnalyticVelocity::constant(1, times(2, 1.0), [0.3, 0.0]).unwrap();
        let inv = inverse_flow(&u, g, 0.5, 0.01, true).unwrap();
        for i in 0..16 {
            let expect = wrap_coord(g.node(i)[0] - 0.15);
            assert!(torus_distance(inv.labels[i], [expect, 0.0], 1) < 1e-13);
        }
        assert!(inv.defect.unwrap() < 1e-13);
    }

    #[test]
    fn blend_endpoints_and_identical_inputs() {
        let g = TorusGrid::new(1, 16).unwrap();
        let u = sine_velocity(0.5);
        let v = AnalyticVelocity::constant(1, times(10, 0.5), [0.2, 0.0]).unwrap();
        let fam = weighted_flow(&u, &v, &[0.0, 1.0], g, 0.01).unwrap();
        let fv = integrate_flow(&v, g, 0.01).unwrap();
        let fu = integrate_flow(&u, g, 0.01).unwrap();
        assert_eq!(fam.flows[0].positions, fv.positions);
        assert_eq!(fam.flows[0].log_jac, fv.log_jac);
        assert_eq!(fam.flows[1].positions, fu.positions);
        assert_eq!(fam.flows[1].log_jac, fu.log_jac);

        let same = weighted_flow(&u, &u, &[0.0, 0.5, 1.0], g, 0.01).unwrap();
        let k = same.flows[0].times.len() - 1;
        assert!(ds_derivative_norm(&same, k).unwrap().iter().all(|v| *v == 0.0));
        assert_eq!(alpha(&same, k).unwrap(), 0.0);
    }

    #[test]
    fn linear_blend_of_translations() {
        let g = TorusGrid::new(2, 8).unwrap();
        let u1 = AnalyticVelocity::constant(2, times(2, 1.0), [1.0, 0.0]).unwrap();
        let u2 = AnalyticVelocity::constant(2, times(2, 1.0), [0.0, 0.0]).unwrap();
        let fam = weighted_flow(&u1, &u2, &[0.0, 0.25, 0.5, 0.75, 1.0], g, 0.1).unwrap();
        let norms = ds_derivative_norm(&fam, 2).unwrap();
        for v in norms {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!((alpha(&fam, 1).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(alpha(&fam, 0).unwrap(), 0.0);
    }

    #[test]
    fn flow_distance_of_translations() {
        let g = TorusGrid::new(1, 32).unwrap();
        let a = AnalyticVelocity::constant(1, times(4, 1.0), [0.1, 0.0]).unwrap();
        let b = AnalyticVelocity::constant(1, times(4, 1.0), [0.3, 0.0]).unwrap();
        let fa = integrate_flow(&a, g, 0.05).unwrap();
        let fb = integrate_flow(&b, g, 0.05).unwrap();
        assert!((flow_distance_l1(&fa, &fb).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(flow_distance_l1(&fa, &fa).unwrap(), 0.0);
        let c = AnalyticVelocity::constant(1, times(2, 1.0), [0.3, 0.0]).unwrap();
        let fc = integrate_flow(&c, g, 0.05).unwrap();
        assert!(flow_distance_l1(&fa, &fc).is_err());
    }

    #[test]
    fn few_blend_values_rejected() {
        let g = TorusGrid::new(1, 8).unwrap();
        let u = AnalyticVelocity::constant(1, times(1, 1.0), [0.1, 0.0]).unwrap();
        let fam = weighted_flow(&u, &u, &[0.5], g, 0.1).unwrap();
        assert!(ds_derivative_norm(&fam, 0).is_err());
    }
}
