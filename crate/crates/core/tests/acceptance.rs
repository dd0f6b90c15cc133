//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use torus_stokes::analysis::{
    bmo_seminorm, energy_balance_report, john_nirenberg_check, uniqueness_on_sigma, UniquenessConfig,
};
use torus_stokes::cli::{parse_config_str, run, strip_timings, Overrides};
use torus_stokes::eulerian::{curl_sup, delta_continuation, mean_sup, ReconConfig};
use torus_stokes::flow::{inverse_flow, AnalyticVelocity, Velocity};
use torus_stokes::lagrangian::{run_lagrangian, LagrangianConfig, LagrangianState, CONSERVATION_TOL};
use torus_stokes::pressure::{PressureLaw, Verdict};
use torus_stokes::spectral;
use torus_stokes::{Result, ScalarField, ScalarHistory, TorusGrid};

type Outcome = Result<(bool, String)>;

fn two_value(n: usize) -> ScalarField {
    ScalarField::from_fn(TorusGrid::new(1, n).unwrap(), |x| if x[0] < 0.5 { 0.5 } else { 1.5 }).unwrap()
}

fn logistic(eta0: f64, t: f64) -> f64 {
    1.0 / (1.0 + (1.0 / eta0 - 1.0) * (-t).exp())
}

fn sigma_history(states: &[LagrangianState]) -> ScalarHistory {
    ScalarHistory::new(
        states.iter().map(|s| s.time).collect(),
        states.iter().map(|s| s.sigma.clone()).collect(),
    )
    .unwrap()
}

fn max_defect(states: &[LagrangianState]) -> f64 {
    states.iter().map(|s| s.conservation_defect()).fold(0.0, f64::max)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Logistic closed form for p = id.
fn c1() -> Outcome {
    let rho0 = two_value(256);
    let start = Instant::now();
    let (states, _) = run_lagrangian(&rho0, &PressureLaw::linear(), &LagrangianConfig::default())?;
    let secs = start.elapsed().as_secs_f64();
    let last = states.last().unwrap();
    let err = last
        .eta
        .values()
        .iter()
        .zip(rho0.values())
        .map(|(e, r)| (e - logistic(*r, last.time)).abs())
        .fold(0.0, f64::max);
    Ok((
        err <= 1e-4 && secs < 10.0 && last.time == 1.0,
        format!("sup error {err:.3e} at t = {}, {secs:.2} s", last.time),
    ))
}

/// sup η ≤ r with r independent of T.
fn c2() -> Outcome {
    let g = TorusGrid::new(1, 64).unwrap();
    let rho0 = ScalarField::from_fn(g, |x| 1.0 + (2.0 * PI * x[0]).cos())?;
    let law = PressureLaw::oscillatory(2.0)?;
    let mut rs = Vec::new();
    let mut ok = true;
    let mut detail = Vec::new();
    for t_final in [1.0, 5.0, 10.0] {
        let cfg = LagrangianConfig {
            t_final,
            ..Default::default()
        };
        let (states, rep) = run_lagrangian(&rho0, &law, &cfg)?;
        let sup = states.iter().map(|s| s.eta.max()).fold(0.0, f64::max);
        ok &= sup <= rep.r && max_defect(&states) <= CONSERVATION_TOL;
        detail.push(format!("T={t_final}: sup eta {sup:.4} r {:.4}", rep.r));
        rs.push(rep.r);
    }
    ok &= rs.iter().all(|r| *r == rs[0]);
    Ok((ok, detail.join("; ")))
}

/// Builtin laws exercised by the conservation and energy criteria.
fn builtin_laws() -> Result<Vec<PressureLaw>> {
    Ok(vec![
        PressureLaw::linear(),
        PressureLaw::gamma(1.4)?,
        PressureLaw::van_der_waals(1.0)?,
        PressureLaw::virial(vec![1.0, 0.5])?,
        PressureLaw::oscillatory(2.0)?,
        PressureLaw::bump(),
        PressureLaw::atan(),
    ])
}

fn builtin_runs() -> Result<Vec<(PressureLaw, Vec<LagrangianState>, torus_stokes::lagrangian::LagrangianReport)>> {
    let g = TorusGrid::new(1, 64).unwrap();
    let rho0 = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos())?;
    let mut out = Vec::new();
    for law in builtin_laws()? {
        let (states, rep) = run_lagrangian(&rho0, &law, &LagrangianConfig::default())?;
        out.push((law, states, rep));
    }
    let (states, rep) = run_lagrangian(&two_value(256), &PressureLaw::linear(), &LagrangianConfig::default())?;
    out.push((PressureLaw::linear(), states, rep));
    Ok(out)
}

/// η e^{A} = ϱ₀ at every accepted state.
fn c3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, states, _) in builtin_runs()? {
        worst = worst.max(max_defect(&states));
        count += states.len();
    }
    Ok((worst <= 1e-10, format!("max defect {worst:.3e} over {count} states")))
}

/// Energy nonincreasing and ledger nonpositive within tolerance.
fn c4() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (law, states, rep) in builtin_runs()? {
        let bal = energy_balance_report(&states, &rep, &law, 1.0)?;
        let holds = bal.holds(1e-6);
        ok &= holds;
        detail.push(format!("{} {:.1e}/{:.1e}", law.name, bal.max_violation, bal.max_increase));
    }
    Ok((ok, detail.join(", ")))
}

/// Single-mode Poisson and gradient cases; reconstructed fields are mean
/// and curl free.
fn c5() -> Outcome {
    let g1 = TorusGrid::new(1, 64).unwrap();
    let g2 = TorusGrid::new(2, 64).unwrap();
    let mut err: f64 = 0.0;
    let rhs = ScalarField::from_fn(g1, |x| (2.0 * PI * x[0]).cos())?;
    let (phi, _) = spectral::solve_poisson(&rhs);
    let u = spectral::gradient(&phi);
    for (i, x) in g1.nodes().enumerate() {
        err = err.max((phi.values()[i] + (2.0 * PI * x[0]).cos() / (4.0 * PI * PI)).abs());
        err = err.max((u.component(0)[i] - (2.0 * PI * x[0]).sin() / (2.0 * PI)).abs());
    }
    let rhs2 = ScalarField::from_fn(g2, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin())?;
    let (phi2, _) = spectral::solve_poisson(&rhs2);
    for (a, b) in phi2.values().iter().zip(rhs2.values()) {
        err = err.max((a + b / (8.0 * PI * PI)).abs());
    }

    // reconstructed velocities, 1D and 2D
    let mut mean: f64 = 0.0;
    let mut curl: f64 = 0.0;
    let (s1, _) = run_lagrangian(&two_value(64), &PressureLaw::linear(), &LagrangianConfig::default())?;
    let r1 = delta_continuation(&sigma_history(&s1), &ReconConfig::default())?;
    let rho2 = ScalarField::from_fn(TorusGrid::new(2, 32).unwrap(), |x| {
        1.0 + 0.5 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin()
    })?;
    let (s2, _) = run_lagrangian(&rho2, &PressureLaw::gamma(1.4)?, &LagrangianConfig::default())?;
    let r2 = delta_continuation(
        &sigma_history(&s2),
        &ReconConfig {
            ladder: vec![0.1, 0.05],
            ..Default::default()
        },
    )?;
    let mut complete = true;
    for r in [&r1, &r2] {
        complete &= r.error.is_none();
        if let Some(u) = &r.velocity {
            mean = mean.max(mean_sup(u));
            curl = curl.max(curl_sup(u));
        }
    }
    Ok((
        complete && err <= 1e-10 && mean <= 1e-10 && curl <= 1e-10,
        format!("analytic error {err:.2e}, mean {mean:.2e}, curl {curl:.2e}"),
    ))
}

/// Residual along the δ ladder for the logistic run.
fn c6() -> Outcome {
    let (states, _) = run_lagrangian(&two_value(256), &PressureLaw::linear(), &LagrangianConfig::default())?;
    let cont = delta_continuation(&sigma_history(&states), &ReconConfig::default())?;
    let res: Vec<f64> = cont.report.levels.iter().map(|l| l.reconstruction_residual).collect();
    let dist: Vec<f64> = cont.report.levels.iter().filter_map(|l| l.flow_distance).collect();
    let last = *res.last().unwrap_or(&f64::INFINITY);
    let ok = cont.error.is_none()
        && res.len() == 4
        && strictly_decreasing(&res)
        && last <= 1e-2
        && strictly_decreasing(&dist);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ");
    Ok((ok, format!("residuals [{}], flow distances [{}]", fmt(&res), fmt(&dist))))
}

/// Both discrepancy measures shrink under ladder refinement.
fn c7() -> Outcome {
    let (states, _) = run_lagrangian(&two_value(256), &PressureLaw::linear(), &LagrangianConfig::default())?;
    let exp = uniqueness_on_sigma(&sigma_history(&states), &UniquenessConfig::default())?;
    let alpha0 = exp.base.alpha[0] == 0.0 && exp.refined.alpha[0] == 0.0;
    Ok((
        exp.shrinks_by(2.0) && alpha0,
        format!(
            "gap ratio {:.2}, alpha ratio {:.2}, alpha(0) = {}",
            exp.gap_ratio, exp.alpha_ratio, exp.base.alpha[0]
        ),
    ))
}

fn brute_force_bmo(f: &ScalarField) -> f64 {
    let v = f.values();
    let n = v.len();
    let mut best: f64 = 0.0;
    for start in 0..n {
        let mut w = Vec::with_capacity(n);
        for len in 1..=n {
            w.push(v[(start + len - 1) % n]);
            let avg = w.iter().sum::<f64>() / len as f64;
            best = best.max(w.iter().map(|x| (x - avg).abs()).sum::<f64>() / len as f64);
        }
    }
    best
}

fn c8() -> Outcome {
    let g = TorusGrid::new(1, 256).unwrap();
    let ind = ScalarField::from_fn(g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 })?;
    let rep = bmo_seminorm(&ind, 7)?;
    let brute = brute_force_bmo(&ind);
    let c = bmo_seminorm(&ScalarField::constant(g, 2.0), 7)?.seminorm
        + bmo_seminorm(&ScalarField::constant(TorusGrid::new(2, 32).unwrap(), -1.5), 4)?.seminorm;
    let jn_ind = john_nirenberg_check(&ind, &rep)?;
    let log = ScalarField::from_fn(g, |x| {
        // periodized log|x − ½|, offset half a cell off the singularity
        (((x[0] - 0.5 + 0.5 / 256.0).abs()).min(1.0 - (x[0] - 0.5 + 0.5 / 256.0).abs())).ln()
    })?;
    let rep_log = bmo_seminorm(&log, 7)?;
    let jn_log = john_nirenberg_check(&log, &rep_log)?;
    let ok = (rep.seminorm - 0.5).abs() <= 1e-3
        && (brute - 0.5).abs() <= 1e-3
        && c == 0.0
        && jn_ind.verdict == Verdict::Pass
        && jn_log.verdict == Verdict::Pass
        && rep_log.exp_integral.is_finite();
    Ok((
        ok,
        format!(
            "indicator {:.6} (brute force {brute:.6}), constants {c}, JN {} / {} (exp integral {:.3})",
            rep.seminorm, jn_ind.verdict, jn_log.verdict, rep_log.exp_integral
        ),
    ))
}

fn c9() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    let cases: Vec<(PressureLaw, f64, Verdict)> = vec![
        (PressureLaw::bump(), 20.0, Verdict::Fail),
        (PressureLaw::oscillatory(2.0)?, 100.0, Verdict::Pass),
        (PressureLaw::gamma(1.4)?, 100.0, Verdict::Pass),
        (PressureLaw::linear(), 100.0, Verdict::Pass),
        (PressureLaw::van_der_waals(1.0)?, 100.0, Verdict::Pass),
        (PressureLaw::virial(vec![1.0, 0.5])?, 100.0, Verdict::Pass),
    ];
    for (law, rho_max, want) in cases {
        let v = law.check_condition_p(rho_max, 64)?.verdict;
        ok &= v == want;
        detail.push(format!("{} {v}", law.name));
    }
    Ok((ok, detail.join(", ")))
}

/// Inverse-flow stability under a velocity perturbation.
fn c10() -> Outcome {
    let times: Vec<f64> = (0..=10).map(|k| 0.02 * k as f64).collect();
    let eps = 0.01;
    let u1 = AnalyticVelocity::new(
        1,
        times.clone(),
        |_, x| [(2.0 * PI * x[0]).sin() / (2.0 * PI), 0.0],
        |_, x| (2.0 * PI * x[0]).cos(),
    )?
    .with_bounds(1.0, 1.0, 1.0 / (2.0 * PI));
    let u2 = AnalyticVelocity::new(
        1,
        times.clone(),
        move |_, x| [(2.0 * PI * x[0]).sin() / (2.0 * PI) + eps * (2.0 * PI * x[0]).cos(), 0.0],
        move |_, x| (2.0 * PI * x[0]).cos() - 2.0 * PI * eps * (2.0 * PI * x[0]).sin(),
    )?
    .with_bounds(1.0 + 2.0 * PI * eps, 1.0 + 2.0 * PI * eps, 1.0 / (2.0 * PI) + eps);
    let m = u1.lipschitz().max(u2.lipschitz());
    let g = TorusGrid::new(1, 128).unwrap();
    let du = eps; // sup |u₁ − u₂|
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for &t in &times[1..] {
        let y1 = inverse_flow(&u1, g, t, 1e-3, false)?;
        let y2 = inverse_flow(&u2, g, t, 1e-3, false)?;
        let dy = y1
            .labels
            .iter()
            .zip(&y2.labels)
            .map(|(a, b)| torus_stokes::grid::torus_distance(*a, *b, 1))
            .fold(0.0, f64::max);
        let ratio = dy / (t * du);
        let bound = 2.0 * (m * t).exp();
        ok &= ratio <= bound;
        worst = worst.max(ratio / bound);
    }
    Ok((ok, format!("max ratio / bound {worst:.3}")))
}

/// Identical configs give identical manifests.
fn c11() -> Outcome {
    let text = "mode = full\nd = 1\nn = 64\npressure = linear\nrho0 = two-value\nT = 1\nworkers = 2\n";
    let dir = tempfile::tempdir().map_err(|e| torus_stokes::Error::InvalidInput(e.to_string()))?;
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let o = Overrides {
            out: Some(dir.path().join(name)),
            ..Default::default()
        };
        let cfg = parse_config_str(text, std::path::Path::new("determinism.conf"), &o)?;
        let out = run(&cfg)?;
        let m = std::fs::read_to_string(&out.manifest).map_err(|e| torus_stokes::Error::InvalidInput(e.to_string()))?;
        manifests.push((out.exit_code, m));
    }
    let same = strip_timings(&manifests[0].1) == strip_timings(&manifests[1].1);
    Ok((
        same && manifests[0].0 == 0,
        format!("exit {} / {}, manifests identical: {same}", manifests[0].0, manifests[1].0),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("logistic closed form", c1),
        ("sup eta <= r independent of T", c2),
        ("pointwise conservation", c3),
        ("energy decay and dissipation ledger", c4),
        ("Poisson, gradient, zero mean and curl", c5),
        ("reconstruction along the delta ladder", c6),
        ("uniqueness refinement trend", c7),
        ("BMO seminorm and John-Nirenberg", c8),
        ("pressure admissibility verdicts", c9),
        ("inverse flow stability ratio", c10),
        ("deterministic manifests", c11),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(f) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".to_string()),
        };
        println!(
            "criterion {:>2} {} {name}: {detail} ({:.1} s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
