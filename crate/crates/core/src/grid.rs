//! Periodic grids and grid functions on the unit torus `[0,1)^d`, `d ∈ {1,2}`.
//!
//! Node `(i0, i1)` sits at `(i0·h, i1·h)` and is stored at flat index
//! `i0·n + i1` (first axis slowest). In one dimension the flat index is `i0`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A point of `R^d` padded to two components; the second is ignored when `d = 1`.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    d: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return Err(Error::invalid(format!("dimension must be 1 or 2, got {d}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "points per axis must be a power of two >= 8, got {n}"
            )));
        }
        Ok(Self { d, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of nodes, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of the torus; fixed to one.
    pub fn volume(&self) -> f64 {
        1.0
    }

    pub fn node(&self, idx: usize) -> Point {
        let h = self.h();
        if self.d == 1 {
            [idx as f64 * h, 0.0]
        } else {
            [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h]
        }
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        if self.d == 1 {
            i0
        } else {
            i0 * self.n + i1
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Levels of dyadic refinement available, `log2(n)`.
    pub fn levels(&self) -> usize {
        self.n.trailing_zeros() as usize
    }
}

/// Reduce `x` modulo one componentwise into `[0,1)`.
pub fn wrap(x: Point, d: usize) -> Result<Point> {
    let mut out = [0.0; 2];
    for a in 0..d {
        if !x[a].is_finite() {
            return Err(Error::invalid(format!("non-finite coordinate {}", x[a])));
        }
        out[a] = wrap_coord(x[a]);
    }
    Ok(out)
}

#[inline]
pub(crate) fn wrap_coord(x: f64) -> f64 {
    let r = x - x.floor();
    // x - floor(x) rounds to 1.0 for tiny negative x
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Geodesic distance between two points of the torus.
pub fn torus_distance(a: Point, b: Point, d: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..d {
        let mut diff = (a[k] - b[k]).abs();
        diff -= diff.floor();
        let m = diff.min(1.0 - diff);
        s += m * m;
    }
    s.sqrt()
}

/// Multilinear periodic interpolation of nodal `values` at `x`.
#[inline]
pub(crate) fn interp_values(values: &[f64], d: usize, n: usize, x: Point) -> f64 {
    let nf = n as f64;
    let s0 = wrap_coord(x[0]) * nf;
    let i0 = (s0.floor() as usize).min(n - 1);
    let f0 = s0 - i0 as f64;
    let j0 = if i0 + 1 == n { 0 } else { i0 + 1 };
    if d == 1 {
        let a = values[i0];
        let b = values[j0];
        if f0 == 0.0 {
            a
        } else {
            a + f0 * (b - a)
        }
    } else {
        let s1 = wrap_coord(x[1]) * nf;
        let i1 = (s1.floor() as usize).min(n - 1);
        let f1 = s1 - i1 as f64;
        let j1 = if i1 + 1 == n { 0 } else { i1 + 1 };
        let v00 = values[i0 * n + i1];
        let v01 = values[i0 * n + j1];
        let v10 = values[j0 * n + i1];
        let v11 = values[j0 * n + j1];
        let lo = if f1 == 0.0 { v00 } else { v00 + f1 * (v01 - v00) };
        let hi = if f1 == 0.0 { v10 } else { v10 + f1 * (v11 - v10) };
        if f0 == 0.0 {
            lo
        } else {
            lo + f0 * (hi - lo)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Construct without the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(Point) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interpolate(&self, x: Point) -> f64 {
        interp_values(&self.values, self.grid.d, self.grid.n, x)
    }

    /// Node average; equals the integral over the unit torus for trigonometric
    /// polynomials below the Nyquist frequency.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Root mean square over the nodes (the grid `L²` norm on the unit torus).
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn linear_combination(a: f64, f: &ScalarField, b: f64, g: &ScalarField) -> Result<Self> {
        if f.grid != g.grid {
            return Err(Error::invalid("fields live on different grids"));
        }
        Ok(Self::from_raw(
            f.grid,
            f.values
                .iter()
                .zip(&g.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    /// Cyclic shift by whole nodes along each axis.
    pub fn shifted(&self, s0: usize, s1: usize) -> Self {
        let n = self.grid.n;
        let mut out = vec![0.0; self.values.len()];
        if self.grid.d == 1 {
            for i in 0..n {
                out[(i + s0) % n] = self.values[i];
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    out[((i + s0) % n) * n + (j + s1) % n] = self.values[i * n + j];
                }
            }
        }
        Self::from_raw(self.grid, out)
    }

    pub fn write_snapshot(&self, path: &Path, time: f64, name: &str) -> Result<()> {
        fs::write(path, self.snapshot_string(time, name)).map_err(|e| Error::io(path, e))
    }

    /// Field snapshot text: header `d n time name`, then one value per line.
    pub fn snapshot_string(&self, time: f64, name: &str) -> String {
        let mut s = String::with_capacity(self.values.len() * 24 + 32);
        let _ = writeln!(s, "{} {} {} {}", self.grid.d, self.grid.n, time, name);
        for v in &self.values {
            let _ = writeln!(s, "{v}");
        }
        s
    }

    pub fn read_snapshot(path: &Path) -> Result<(Self, f64, String)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_snapshot(&text).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    }

    pub fn parse_snapshot(text: &str) -> std::result::Result<(Self, f64, String), (usize, String)> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or((1, "empty snapshot".to_string()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 {
            return Err((1, format!("expected header `d n time name`, got `{header}`")));
        }
        let d: usize = parts[0].parse().map_err(|_| (1, "bad dimension".to_string()))?;
        let n: usize = parts[1].parse().map_err(|_| (1, "bad size".to_string()))?;
        let time: f64 = parts[2].parse().map_err(|_| (1, "bad time".to_string()))?;
        let grid = TorusGrid::new(d, n).map_err(|e| (1, e.to_string()))?;
        let mut values = Vec::with_capacity(grid.len());
        for (no, line) in lines {
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| (no + 1, format!("bad value `{line}`")))?;
            values.push(v);
        }
        let field = ScalarField::new(grid, values).map_err(|e| (0, e.to_string()))?;
        Ok((field, time, parts[3].to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: TorusGrid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.d() || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::invalid("vector field shape does not match grid"));
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite vector component"));
        }
        Ok(Self { grid, comps })
    }

    pub(crate) fn from_raw(grid: TorusGrid, comps: Vec<Vec<f64>>) -> Self {
        Self { grid, comps }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::from_raw(grid, vec![vec![0.0; grid.len()]; grid.d()])
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(Point) -> Point) -> Result<Self> {
        let mut comps = vec![Vec::with_capacity(grid.len()); grid.d()];
        for x in grid.nodes() {
            let v = f(x);
            for (a, c) in comps.iter_mut().enumerate() {
                c.push(v[a]);
            }
        }
        Self::new(grid, comps)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn component(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    pub fn component_field(&self, a: usize) -> ScalarField {
        ScalarField::from_raw(self.grid, self.comps[a].clone())
    }

    pub fn interpolate(&self, x: Point) -> Point {
        let mut out = [0.0; 2];
        for (a, c) in self.comps.iter().enumerate() {
            out[a] = interp_values(c, self.grid.d, self.grid.n, x);
        }
        out
    }

    pub fn component_means(&self) -> Vec<f64> {
        self.comps
            .iter()
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// `max_i |v_i|` with `|·|` the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Componentwise maximum absolute difference.
    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Grid `L²` norm of the pointwise difference.
    pub fn l2_distance(&self, other: &VectorField) -> f64 {
        let n = self.grid.len();
        let mut s = 0.0;
        for i in 0..n {
            for (a, b) in self.comps.iter().zip(&other.comps) {
                let e = a[i] - b[i];
                s += e * e;
            }
        }
        (s / n as f64).sqrt()
    }
}

/// Scalar fields on a shared grid at increasing time nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarHistory {
    pub times: Vec<f64>,
    pub fields: Vec<ScalarField>,
}

impl ScalarHistory {
    pub fn new(times: Vec<f64>, fields: Vec<ScalarField>) -> Result<Self> {
        check_time_nodes(&times)?;
        if fields.len() != times.len() {
            return Err(Error::invalid("history needs one field per time node"));
        }
        let g = fields[0].grid();
        if fields.iter().any(|f| f.grid() != g) {
            return Err(Error::invalid("history fields live on different grids"));
        }
        Ok(Self { times, fields })
    }

    pub fn grid(&self) -> TorusGrid {
        self.fields[0].grid()
    }

    /// Linear-in-time, multilinear-in-space value at `(t, x)`.
    pub fn eval(&self, t: f64, x: Point) -> f64 {
        let (k, w) = time_weights(&self.times, t);
        let a = self.fields[k].interpolate(x);
        if w == 0.0 {
            a
        } else {
            a + w * (self.fields[k + 1].interpolate(x) - a)
        }
    }

    pub fn sup_at(&self, t: f64) -> f64 {
        let (k, w) = time_weights(&self.times, t);
        if w == 0.0 {
            return self.fields[k].sup_norm();
        }
        let a = self.fields[k].values();
        let b = self.fields[k + 1].values();
        a.iter()
            .zip(b)
            .map(|(x, y)| (x + w * (y - x)).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.fields.iter().map(|f| f.sup_norm()).fold(0.0, f64::max)
    }
}

pub(crate) fn check_time_nodes(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("history has no time nodes"));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("time nodes must be finite and strictly increasing"));
    }
    Ok(())
}

/// Interval index `k` and weight `w` so that `t ≈ (1-w)·times[k] + w·times[k+1]`,
/// clamped to the covered range. `w == 0` means the left node alone.
#[inline]
pub(crate) fn time_weights(times: &[f64], t: f64) -> (usize, f64) {
    let last = times.len() - 1;
    if last == 0 || t <= times[0] {
        return (0, 0.0);
    }
    if t >= times[last] {
        return (last, 0.0);
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    (k, w)
}
