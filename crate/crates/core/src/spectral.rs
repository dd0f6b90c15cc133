//! FFT-based operators on periodic grids: Poisson inversion, gradient,
//! divergence, curl and circular convolution.
//!
//! Derivatives drop the Nyquist mode (its derivative has no real
//! representative); the Laplacian keeps it.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid, VectorField};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Signed wavenumber of FFT bin `i` on `n` points; the Nyquist bin maps to `n/2`.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Unnormalized forward transform of nodal values.
pub fn forward(grid: TorusGrid, values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(grid, &mut buf, true);
    buf
}

/// Inverse of [`forward`], including the `1/n^d` normalization; returns the real part.
pub fn inverse(grid: TorusGrid, mut spec: Vec<Complex64>) -> Vec<f64> {
    transform(grid, &mut spec, false);
    let scale = 1.0 / grid.len() as f64;
    spec.iter().map(|c| c.re * scale).collect()
}

fn transform(grid: TorusGrid, buf: &mut [Complex64], fwd: bool) {
    let n = grid.n();
    let (f, i) = plans(n);
    let plan = if fwd { f } else { i };
    if grid.d() == 1 {
        plan.process(buf);
        return;
    }
    // rows (second axis contiguous), then columns through a scratch column
    for row in buf.chunks_exact_mut(n) {
        plan.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = buf[i * n + j];
        }
        plan.process(&mut col);
        for i in 0..n {
            buf[i * n + j] = col[i];
        }
    }
}

/// Wavenumber vector of flat spectral index `idx`.
#[inline]
fn k_of(grid: TorusGrid, idx: usize) -> [i64; 2] {
    let n = grid.n();
    if grid.d() == 1 {
        [wavenumber(idx, n), 0]
    } else {
        [wavenumber(idx / n, n), wavenumber(idx % n, n)]
    }
}

/// Multiply the spectrum of `f` by `symbol(k)` and transform back.
pub fn apply_symbol(f: &ScalarField, symbol: impl Fn([i64; 2]) -> Complex64) -> ScalarField {
    let g = f.grid();
    let mut spec = forward(g, f.values());
    for (idx, c) in spec.iter_mut().enumerate() {
        *c *= symbol(k_of(g, idx));
    }
    ScalarField::from_raw(g, inverse(g, spec))
}

fn derivative_symbol(n: usize, k: i64) -> Complex64 {
    if 2 * k.unsigned_abs() as usize == n {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, 2.0 * PI * k as f64)
    }
}

/// Zero-mean solution of `Δφ = rhs − mean(rhs)`; also returns the discarded mean.
pub fn solve_poisson(rhs: &ScalarField) -> (ScalarField, f64) {
    let g = rhs.grid();
    let mut spec = forward(g, rhs.values());
    let mean = spec[0].re / g.len() as f64;
    for (idx, c) in spec.iter_mut().enumerate() {
        let k = k_of(g, idx);
        let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
        if k2 == 0.0 {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= -4.0 * PI * PI * k2;
        }
    }
    (ScalarField::from_raw(g, inverse(g, spec)), mean)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    apply_symbol(f, |k| {
        Complex64::new(-4.0 * PI * PI * (k[0] * k[0] + k[1] * k[1]) as f64, 0.0)
    })
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid();
    let n = g.n();
    let spec = forward(g, f.values());
    let comps = (0..g.d())
        .map(|a| {
            let s: Vec<Complex64> = spec
                .iter()
                .enumerate()
                .map(|(idx, c)| c * derivative_symbol(n, k_of(g, idx)[a]))
                .collect();
            inverse(g, s)
        })
        .collect();
    VectorField::from_raw(g, comps)
}

pub fn divergence(u: &VectorField) -> ScalarField {
    let g = u.grid();
    let n = g.n();
    let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
    for a in 0..g.d() {
        let spec = forward(g, u.component(a));
        for (idx, (s, c)) in acc.iter_mut().zip(spec).enumerate() {
            *s += c * derivative_symbol(n, k_of(g, idx)[a]);
        }
    }
    ScalarField::from_raw(g, inverse(g, acc))
}

/// Scalar curl `∂₀u₁ − ∂₁u₀`; identically zero in one dimension.
pub fn curl(u: &VectorField) -> ScalarField {
    let g = u.grid();
    if g.d() == 1 {
        return ScalarField::constant(g, 0.0);
    }
    let n = g.n();
    let s0 = forward(g, u.component(0));
    let s1 = forward(g, u.component(1));
    let spec = (0..g.len())
        .map(|idx| {
            let k = k_of(g, idx);
            s1[idx] * derivative_symbol(n, k[0]) - s0[idx] * derivative_symbol(n, k[1])
        })
        .collect();
    ScalarField::from_raw(g, inverse(g, spec))
}

/// Circular convolution `(f * w)(x_i) = Σ_j f(x_j) w(x_i − x_j)` with nodal
/// weights `w` given on the same grid (already including the cell volume).
pub fn convolve(f: &ScalarField, weights: &[f64]) -> Result<ScalarField> {
    let g = f.grid();
    if weights.len() != g.len() {
        return Err(Error::invalid("kernel weights do not match the grid"));
    }
    let a = forward(g, f.values());
    let b = forward(g, weights);
    let spec = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    Ok(ScalarField::from_raw(g, inverse(g, spec)))
}

/// Operator norm estimate of `∇Δ⁻¹` from `L^∞` to `L^∞`, probed on single
/// cosine modes up to a quarter of the grid resolution.
pub fn gradient_inverse_laplacian_bound(grid: TorusGrid) -> f64 {
    let mut best: f64 = 0.0;
    let kmax = (grid.n() / 4).max(1);
    for k in 1..=kmax {
        let probe = ScalarField::from_fn(grid, |x| (2.0 * PI * k as f64 * x[0]).cos())
            .expect("probe is finite");
        let (phi, _) = solve_poisson(&probe);
        let ratio = gradient(&phi).sup_norm() / probe.sup_norm();
        best = best.max(ratio);
    }
    best
}
