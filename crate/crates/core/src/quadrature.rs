//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-13,
            max_intervals: 4000,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * hl;
    let err = ((kron - gauss) * hl).abs();
    (value, err)
}

/// Integrate `f` over `[a, b]` (either orientation), splitting first at
/// `breaks` that fall strictly inside the interval.
pub fn integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("quadrature bounds must be finite"));
    }
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, breaks, opts).map(|v| -v);
    }
    let mut pts: Vec<f64> = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in pts.windows(2) {
        let (v, e) = gk15(f, w[0], w[1]);
        total += v;
        total_err += e;
        heap.push(Piece { a: w[0], b: w[1], value: v, err: e });
    }
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::Divergence("integrand is not finite".into()));
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Divergence(format!(
                "quadrature did not reach tolerance on [{a}, {b}] (error estimate {total_err:e})"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // interval can no longer be split in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(f, worst.a, m);
        let (v2, e2) = gk15(f, m, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: worst.b, value: v2, err: e2 });
    }
    // resum to shed accumulated cancellation from the running updates
    Ok(heap.iter().map(|p| p.value).sum())
}

/// Integrate over `[a, b] ⊂ (0, ∞)`; wide ratios are mapped through `s = e^v`
/// so that power-law integrands are resolved uniformly across decades.
pub fn integrate_positive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 {
        return integrate(f, a, b, breaks, opts);
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi / lo <= 10.0 {
        return integrate(f, a, b, breaks, opts);
    }
    let g = |v: f64| {
        let s = v.exp();
        f(s) * s
    };
    let lb: Vec<f64> = breaks.iter().filter(|&&x| x > 0.0).map(|x| x.ln()).collect();
    integrate(&g, a.ln(), b.ln(), &lb, opts)
}
