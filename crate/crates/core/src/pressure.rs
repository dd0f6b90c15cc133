//! Pressure laws `p(ϱ)`, the energy potential
//! `P(ϱ) = C(ϱ ∫_{ϱ̄}^{ϱ} p(s)/s² ds + C₁ϱ + C₂)`, a sampled admissibility
//! check `−C ≤ p ≤ C·P`, and the density threshold search used by the
//! Lagrangian bound.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_positive, QuadOptions};

pub type PressureFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum LawKind {
    Gamma { gamma: f64 },
    Linear,
    /// Reduced van der Waals law `8Tϱ/(3−ϱ) − 3ϱ²`, continued past `cutoff`
    /// by the C¹ quadratic `aϱ² + b`.
    VanDerWaals { temperature: f64, cutoff: f64, a: f64, b: f64 },
    /// Truncated series `Σ_k B_k ϱ^k`, `coeffs[0] = B_1`.
    Virial { coeffs: Vec<f64> },
    /// `ϱ²(1 + cos ϱ^q)`.
    Oscillatory { q: f64 },
    /// `ϱ² η(2^k(ϱ − k))` on `|ϱ − k| ≤ 2^{−k}`, zero elsewhere.
    Bump,
    /// Bounded law `atan ϱ`.
    Atan,
    Custom(PressureFn),
}

impl fmt::Debug for LawKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawKind::Gamma { gamma } => write!(f, "Gamma({gamma})"),
            LawKind::Linear => write!(f, "Linear"),
            LawKind::VanDerWaals { temperature, .. } => write!(f, "VanDerWaals(T={temperature})"),
            LawKind::Virial { coeffs } => write!(f, "Virial({coeffs:?})"),
            LawKind::Oscillatory { q } => write!(f, "Oscillatory(q={q})"),
            LawKind::Bump => write!(f, "Bump"),
            LawKind::Atan => write!(f, "Atan"),
            LawKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PressureLaw {
    pub name: String,
    pub kind: LawKind,
    pub rho_bar: f64,
    pub c1: f64,
    pub c2: f64,
    /// Verdict the admissibility check is expected to return.
    pub expected: Option<Verdict>,
}

/// Smooth bump supported in `[-1, 1]` with peak 1 at the origin.
fn bump_profile(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// Largest `k` whose bump window is used; beyond it `2^{−k}` underflows the
/// spacing of doubles near `k`.
const BUMP_K_MAX: i64 = 40;

impl PressureLaw {
    fn make(name: &str, kind: LawKind, expected: Option<Verdict>) -> Self {
        Self {
            name: name.to_string(),
            kind,
            rho_bar: 1.0,
            c1: 1.0,
            c2: 1.0,
            expected,
        }
    }

    pub fn gamma(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self::make("gamma", LawKind::Gamma { gamma }, Some(Verdict::Pass)))
    }

    pub fn linear() -> Self {
        Self::make("linear", LawKind::Linear, Some(Verdict::Pass))
    }

    pub fn van_der_waals(temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "van der Waals temperature must be positive, got {temperature}"
            )));
        }
        let cutoff = 2.5;
        let v = 8.0 * temperature * cutoff / (3.0 - cutoff) - 3.0 * cutoff * cutoff;
        let dv = 24.0 * temperature / (3.0 - cutoff).powi(2) - 6.0 * cutoff;
        let a = dv / (2.0 * cutoff);
        let b = v - a * cutoff * cutoff;
        Ok(Self::make(
            "van-der-waals",
            LawKind::VanDerWaals { temperature, cutoff, a, b },
            Some(Verdict::Pass),
        ))
    }

    /// Default coefficients `B = (1, −1.5, 0.6)`.
    pub fn virial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("virial coefficients must be finite and non-empty".into()));
        }
        let lead = *coeffs.last().expect("non-empty");
        if lead < 0.0 {
            log::warn!("virial series has negative leading coefficient {lead}; tail is decreasing");
        }
        let expected = if lead > 0.0 { Some(Verdict::Pass) } else { None };
        Ok(Self::make("virial", LawKind::Virial { coeffs }, expected))
    }

    pub fn oscillatory(q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0) {
            return Err(Error::InvalidConfig(format!("oscillation power must be >= 1, got {q}")));
        }
        Ok(Self::make("oscillatory", LawKind::Oscillatory { q }, Some(Verdict::Pass)))
    }

    pub fn bump() -> Self {
        Self::make("bump", LawKind::Bump, Some(Verdict::Fail))
    }

    pub fn atan() -> Self {
        Self::make("atan", LawKind::Atan, None)
    }

    pub fn custom(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::make(name, LawKind::Custom(Arc::new(f)), None)
    }

    pub fn with_constants(mut self, rho_bar: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(rho_bar.is_finite() && rho_bar >= 0.0 && c1.is_finite() && c2.is_finite()) {
            return Err(Error::InvalidConfig(
                "rho_bar must be finite and nonnegative, c1 and c2 finite".into(),
            ));
        }
        self.rho_bar = rho_bar;
        self.c1 = c1;
        self.c2 = c2;
        Ok(self)
    }

    /// Raw evaluation without argument checks; `rho` is assumed nonnegative.
    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        match &self.kind {
            LawKind::Gamma { gamma } => rho.powf(*gamma),
            LawKind::Linear => rho,
            LawKind::VanDerWaals { temperature, cutoff, a, b } => {
                if rho <= *cutoff {
                    8.0 * temperature * rho / (3.0 - rho) - 3.0 * rho * rho
                } else {
                    a * rho * rho + b
                }
            }
            LawKind::Virial { coeffs } => {
                // Horner on Σ B_k ϱ^k = ϱ(B_1 + ϱ(B_2 + …))
                rho * coeffs.iter().rev().fold(0.0, |acc, c| acc * rho + c)
            }
            LawKind::Oscillatory { q } => rho * rho * (1.0 + rho.powf(*q).cos()),
            LawKind::Bump => {
                let k = rho.round();
                if k < 1.0 || k > BUMP_K_MAX as f64 {
                    return 0.0;
                }
                let w = (k as i32).min(1000);
                rho * rho * bump_profile(2f64.powi(w) * (rho - k))
            }
            LawKind::Atan => rho.atan(),
            LawKind::Custom(f) => f(rho),
        }
    }

    pub fn eval_p(&self, rho: f64) -> Result<f64> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::invalid(format!("density must be finite and >= 0, got {rho}")));
        }
        let v = self.p(rho);
        if !v.is_finite() {
            return Err(Error::invalid(format!("pressure law {} is not finite at {rho}", self.name)));
        }
        Ok(v)
    }

    /// Points where the law has kinks, narrow peaks or other features that
    /// sampling must not step over, restricted to `[lo, hi]`.
    pub fn feature_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = Vec::new();
        match &self.kind {
            LawKind::Bump => {
                let k0 = lo.ceil().max(1.0) as i64;
                let k1 = (hi.floor() as i64).min(BUMP_K_MAX);
                for k in k0..=k1 {
                    pts.push(k as f64);
                }
            }
            LawKind::VanDerWaals { cutoff, .. } => pts.push(*cutoff),
            LawKind::Oscillatory { q } => {
                // maxima of 1 + cos ϱ^q at ϱ = (2πm)^{1/q}
                let m0 = (lo.powf(*q) / (2.0 * PI)).ceil().max(0.0) as u64;
                let m1 = (hi.powf(*q) / (2.0 * PI)).floor() as u64;
                for m in m0..=m1.min(m0 + 100_000) {
                    pts.push((2.0 * PI * m as f64).powf(1.0 / q));
                }
            }
            _ => {}
        }
        pts.retain(|&x| x >= lo && x <= hi);
        pts
    }

    /// Quadrature breakpoints for `p(s)/s²`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            LawKind::Bump => (1..=BUMP_K_MAX)
                .flat_map(|k| {
                    let w = 2f64.powi(-(k as i32));
                    let k = k as f64;
                    [k - w, k, k + w]
                })
                .collect(),
            LawKind::VanDerWaals { cutoff, .. } => vec![*cutoff],
            _ => Vec::new(),
        }
    }

    /// `∫_{ϱ̄}^{ϱ} p(s)/s² ds`, signed when `ϱ < ϱ̄`.
    pub fn potential_integral(&self, rho: f64, opts: QuadOptions) -> Result<f64> {
        if rho == self.rho_bar {
            return Ok(0.0);
        }
        let f = |s: f64| self.p(s) / (s * s);
        if self.rho_bar == 0.0 {
            self.check_integrable_at_zero()?;
            // the integrand is O(s^{a−2}) with a > 1 near 0; start just off zero
            let eps = (rho * 1e-12).max(f64::MIN_POSITIVE.sqrt());
            return integrate_positive(&f, eps, rho, &self.breakpoints(), opts);
        }
        integrate_positive(&f, self.rho_bar, rho, &self.breakpoints(), opts)
    }

    fn check_integrable_at_zero(&self) -> Result<()> {
        let p0 = self.p(0.0);
        if p0 != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "p({}) = {p0} at zero with rho_bar = 0 makes p(s)/s^2 non-integrable; choose rho_bar > 0",
                self.name
            )));
        }
        let e = 1e-6;
        let (a, b) = (self.p(e).abs(), self.p(2.0 * e).abs());
        if a == 0.0 && b == 0.0 {
            return Ok(());
        }
        let exponent = (b / a).log2();
        if !(exponent > 1.05) {
            return Err(Error::InvalidConfig(format!(
                "p({}) ~ s^{exponent:.3} near zero; p(s)/s^2 is not integrable with rho_bar = 0",
                self.name
            )));
        }
        Ok(())
    }

    /// `P(ϱ)` at the default quadrature tolerance.
    #[allow(non_snake_case)]
    pub fn eval_P(&self, rho: f64, c: f64) -> Result<f64> {
        self.eval_P_with(rho, c, QuadOptions::default())
    }

    #[allow(non_snake_case)]
    pub fn eval_P_with(&self, rho: f64, c: f64, opts: QuadOptions) -> Result<f64> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::invalid(format!("density must be finite and >= 0, got {rho}")));
        }
        if rho == 0.0 {
            if self.rho_bar == 0.0 {
                self.check_integrable_at_zero()?;
                return Ok(c * self.c2);
            }
            // ϱ ∫_{ϱ̄}^{ϱ} p/s² → −p(0) as ϱ → 0
            return Ok(c * (self.c2 - self.p(0.0)));
        }
        let i = self.potential_integral(rho, opts)?;
        Ok(c * (rho * i + self.c1 * rho + self.c2))
    }

    /// `sup |p|` over `[0, r]` by sampling.
    pub fn sup_abs_on(&self, r: f64) -> f64 {
        self.samples_on(r).iter().map(|&s| self.p(s).abs()).fold(0.0, f64::max)
    }

    /// Lipschitz constant of `p` on `[0, r]` from sampled finite differences.
    pub fn lipschitz_on(&self, r: f64) -> f64 {
        let s = self.samples_on(r);
        s.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| ((self.p(w[1]) - self.p(w[0])) / (w[1] - w[0])).abs())
            .fold(0.0, f64::max)
    }

    fn samples_on(&self, r: f64) -> Vec<f64> {
        let m = 4096;
        let mut s: Vec<f64> = (0..=m).map(|i| r * i as f64 / m as f64).collect();
        for x in self.feature_points(0.0, r) {
            s.push(x);
            // narrow bumps need a local stencil around the peak
            let w = (r / m as f64).min(1e-3);
            s.push((x - w).max(0.0));
            s.push((x + w).min(r));
        }
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }

    /// Sampled admissibility check with the ratio `p/max(P, 10⁻¹²)` at `C = 1`.
    pub fn check_condition_p(&self, rho_max: f64, n_samples: usize) -> Result<ConditionPReport> {
        if n_samples < 16 {
            return Err(Error::invalid("condition check needs at least 16 samples"));
        }
        let start = if self.rho_bar > 0.0 { self.rho_bar } else { 1e-3 };
        if !(rho_max.is_finite() && rho_max > start) {
            return Err(Error::invalid(format!(
                "rho_max must exceed the reference density {start}, got {rho_max}"
            )));
        }
        let ladder: Vec<f64> = (0..n_samples)
            .map(|i| start * (rho_max / start).powf(i as f64 / (n_samples - 1) as f64))
            .collect();
        let mut rho: Vec<f64> = Vec::with_capacity(8 * n_samples);
        for w in ladder.windows(2) {
            for j in 0..8 {
                rho.push(w[0] * (w[1] / w[0]).powf(j as f64 / 8.0));
            }
        }
        rho.push(rho_max);
        let features = self.feature_points(start, rho_max);
        rho.extend(features.iter().copied());
        rho.sort_by(f64::total_cmp);
        rho.dedup();

        // cumulative ∫ p/s² from the first sample, then shifted to start at ϱ̄
        let f = |s: f64| self.p(s) / (s * s);
        let breaks = self.breakpoints();
        let opts = QuadOptions::default();
        let base = self.potential_integral(rho[0], opts)?;
        let mut acc = base;
        let mut ratio = Vec::with_capacity(rho.len());
        let mut c_lower: f64 = 0.0;
        for (i, &r) in rho.iter().enumerate() {
            if i > 0 {
                acc += integrate_positive(&f, rho[i - 1], r, &breaks, opts)?;
            }
            let p = self.eval_p(r)?;
            c_lower = c_lower.max(-p);
            let big_p = r * acc + self.c1 * r + self.c2;
            ratio.push(p / big_p.max(1e-12));
        }
        // values below ϱ̄ enter the lower bound only
        for i in 0..=64 {
            let r = start * i as f64 / 64.0;
            c_lower = c_lower.max(-self.p(r));
        }

        let quartile_max = |q: usize| -> f64 {
            let lo = start * (rho_max / start).powf(q as f64 / 4.0);
            let hi = start * (rho_max / start).powf((q + 1) as f64 / 4.0);
            rho.iter()
                .zip(&ratio)
                .filter(|(r, _)| **r >= lo && (**r < hi || (q == 3 && **r <= hi)))
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let q: Vec<f64> = (0..4).map(quartile_max).collect();
        let c_estimate = ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let verdict = if !c_estimate.is_finite() {
            Verdict::Fail
        } else if q[3] <= 1.1 * q[2] {
            Verdict::Pass
        } else if q.windows(2).all(|w| w[1] > w[0]) {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        Ok(ConditionPReport {
            law: self.name.clone(),
            rho_samples: rho,
            ratio,
            quartile_max: q,
            c_lower,
            c_estimate,
            verdict,
        })
    }

    /// Smallest scanned `r > ϱ0_max` with `p(r) > m`. The scan advances
    /// linearly by `Δ·ϱ0_max` for the first million steps and geometrically
    /// by `1 + Δ` afterwards; it stops at `r > 10⁶`.
    pub fn find_r(&self, m: f64, rho0_max: f64) -> Result<f64> {
        self.find_r_with_step(m, rho0_max, 1e-3)
    }

    pub fn find_r_with_step(&self, m: f64, rho0_max: f64, step: f64) -> Result<f64> {
        if !m.is_finite() {
            return Err(Error::invalid(format!("threshold M must be finite, got {m}")));
        }
        if !(rho0_max.is_finite() && rho0_max >= 0.0) {
            return Err(Error::invalid(format!("rho0_max must be finite and >= 0, got {rho0_max}")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid("scan step must be positive"));
        }
        const CAP: f64 = 1e6;
        const LINEAR_STEPS: u64 = 1_000_000;
        let base = if rho0_max > 0.0 { rho0_max } else { 1.0 };
        let offset = if rho0_max > 0.0 { 1.0 } else { 0.0 };
        let mut k: u64 = 1;
        let mut r;
        loop {
            r = base * (offset + k as f64 * step);
            if r > CAP || k >= LINEAR_STEPS {
                break;
            }
            if self.p(r) > m {
                return Ok(r);
            }
            k += 1;
        }
        while r <= CAP {
            if self.p(r) > m {
                return Ok(r);
            }
            r *= 1.0 + step;
        }
        Err(Error::UnboundedSearch(format!(
            "no density up to {CAP:e} has p > {m} for law {}",
            self.name
        )))
    }
}

/// Result of [`PressureLaw::check_condition_p`].
#[derive(Debug, Clone)]
pub struct ConditionPReport {
    pub law: String,
    pub rho_samples: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Maximum ratio over each quarter of the logarithmic sample range.
    pub quartile_max: Vec<f64>,
    pub c_lower: f64,
    pub c_estimate: f64,
    pub verdict: Verdict,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn eval_p_examples() {
        assert_eq!(PressureLaw::gamma(2.0).unwrap().eval_p(2.0).unwrap(), 4.0);
        let osc = PressureLaw::oscillatory(2.0).unwrap();
        assert!(osc.eval_p(PI.sqrt()).unwrap().abs() < 1e-14);
        assert_eq!(PressureLaw::linear().eval_p(0.0).unwrap(), 0.0);
        assert!(PressureLaw::linear().eval_p(-1.0).is_err());
    }

    #[test]
    fn eval_big_p_examples() {
        let lin = PressureLaw::linear().with_constants(1.0, 0.0, 0.0).unwrap();
        assert!((lin.eval_P(E, 1.0).unwrap() - E).abs() < 1e-10);
        let sq = PressureLaw::gamma(2.0).unwrap().with_constants(1.0, 0.0, 0.0).unwrap();
        assert!((sq.eval_P(2.0, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let osc = PressureLaw::oscillatory(2.0).unwrap().with_constants(1.5, 2.0, 3.0).unwrap();
        assert_eq!(osc.eval_P(1.5, 2.0).unwrap(), 2.0 * (2.0 * 1.5 + 3.0));
    }

    #[test]
    fn rho_bar_zero_requires_integrability() {
        let lin = PressureLaw::linear().with_constants(0.0, 1.0, 1.0).unwrap();
        assert!(matches!(lin.eval_P(1.0, 1.0), Err(Error::InvalidConfig(_))));
        let atan_shift = PressureLaw::custom("shifted", |r| r + 1.0).with_constants(0.0, 1.0, 1.0).unwrap();
        assert!(matches!(atan_shift.eval_P(1.0, 1.0), Err(Error::InvalidConfig(_))));
        let g = PressureLaw::gamma(2.0).unwrap().with_constants(0.0, 0.0, 0.0).unwrap();
        // ϱ ∫_0^ϱ 1 ds = ϱ²
        assert!((g.eval_P(3.0, 1.0).unwrap() - 9.0).abs() < 1e-8);
    }

    #[test]
    fn p_at_zero_limit() {
        let g = PressureLaw::custom("c", |r| 2.0 + r).with_constants(1.0, 1.0, 5.0).unwrap();
        assert_eq!(g.eval_P(0.0, 1.0).unwrap(), 3.0);
        let near = g.eval_P(1e-9, 1.0).unwrap();
        assert!((near - 3.0).abs() < 1e-6);
    }

    #[test]
    fn vdw_is_c1_at_cutoff() {
        let v = PressureLaw::van_der_waals(0.9).unwrap();
        let h = 1e-6;
        let left = (v.p(2.5) - v.p(2.5 - h)) / h;
        let right = (v.p(2.5 + h) - v.p(2.5)) / h;
        assert!((left - right).abs() < 1e-3);
        assert!((v.p(2.5 + 1e-12) - v.p(2.5)).abs() < 1e-9);
    }

    #[test]
    fn virial_horner() {
        let v = PressureLaw::virial(vec![1.0, -1.5, 0.6]).unwrap();
        let r: f64 = 1.7;
        assert!((v.p(r) - (r - 1.5 * r * r + 0.6 * r.powi(3))).abs() < 1e-14);
    }

    #[test]
    fn bump_peaks_at_integers() {
        let b = PressureLaw::bump();
        assert_eq!(b.p(3.0), 9.0);
        assert_eq!(b.p(3.2), 0.0);
        assert_eq!(b.p(0.3), 0.0);
        assert!(b.p(3.0 + 0.0625) > 0.0);
    }

    #[test]
    fn find_r_examples() {
        let r = PressureLaw::linear().find_r(3.0, 1.0).unwrap();
        assert!((r - 3.001).abs() < 1e-9);
        let osc = PressureLaw::oscillatory(2.0).unwrap();
        let r = osc.find_r(5.0, 1.0).unwrap();
        assert!(r > 1.0 && osc.p(r) > 5.0);
        assert!(matches!(
            PressureLaw::atan().find_r(2.0, 1.0),
            Err(Error::UnboundedSearch(_))
        ));
        let r0 = PressureLaw::linear().find_r(0.5, 0.0).unwrap();
        assert!(r0 > 0.5 && r0 < 0.5 + 2e-3);
    }

    #[test]
    fn builtin_verdicts() {
        let laws = [
            PressureLaw::oscillatory(2.0).unwrap(),
            PressureLaw::gamma(1.4).unwrap(),
            PressureLaw::linear(),
            PressureLaw::van_der_waals(0.9).unwrap(),
            PressureLaw::virial(vec![1.0, -1.5, 0.6]).unwrap(),
        ];
        for law in &laws {
            let rep = law.check_condition_p(100.0, 64).unwrap();
            assert_eq!(rep.verdict, Verdict::Pass, "{} {:?}", law.name, rep.quartile_max);
        }
        let rep = PressureLaw::bump().check_condition_p(20.0, 64).unwrap();
        assert_eq!(rep.verdict, Verdict::Fail, "{:?}", rep.quartile_max);
    }

    #[test]
    fn lipschitz_of_linear_is_one() {
        let l = PressureLaw::linear().lipschitz_on(5.0);
        assert!((l - 1.0).abs() < 1e-12);
        assert!((PressureLaw::linear().sup_abs_on(5.0) - 5.0).abs() < 1e-12);
    }
}
