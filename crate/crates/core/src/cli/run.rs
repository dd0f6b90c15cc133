//! Mode pipelines and output management.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::analysis::{
    bmo_seminorm, energy_balance_report, energy_eulerian, energy_lagrangian, eulerian_density,
    john_nirenberg_check, uniqueness_on_sigma, UniquenessConfig,
};
use crate::cli::config::{Mode, RunConfig};
use crate::cli::manifest::{sha256_hex, Manifest};
use crate::error::{Error, Result};
use crate::eulerian::{curl_sup, delta_continuation, mean_sup};
use crate::flow::{integrate_flow, inverse_flow};
use crate::grid::{ScalarField, ScalarHistory};
use crate::lagrangian::{run_lagrangian, LagrangianState};
use crate::pressure::{PressureLaw, Verdict};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: PathBuf,
    pub error: Option<String>,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    manifest: Manifest,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.manifest.files.push((name.to_string(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    fn snapshot(&mut self, name: &str, f: &ScalarField, t: f64) -> Result<()> {
        self.snapshot_as(name, name, f, t)
    }

    fn snapshot_as(&mut self, file: &str, name: &str, f: &ScalarField, t: f64) -> Result<()> {
        let text = f.snapshot_string(t, name);
        self.write(&format!("{file}.txt"), &text)
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.manifest.timings.push((phase.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    fn law(&self) -> &PressureLaw {
        self.cfg.pressure.as_ref().expect("mode requires a pressure law")
    }

    fn rho0(&self) -> Result<ScalarField> {
        let grid = self.cfg.grid.expect("mode requires a grid");
        self.cfg.rho0.as_ref().expect("mode requires rho0").build(grid)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Per-node series; columns stay empty when a phase did not run.
#[derive(Default)]
struct Series {
    t: Vec<f64>,
    energy: Vec<f64>,
    gap: Vec<f64>,
    alpha: Vec<f64>,
}

impl Series {
    fn csv(&self) -> String {
        let mut s = String::from("t,energy,u_l2_gap,alpha\n");
        let cell = |v: &[f64], k: usize| v.get(k).map(|x| x.to_string()).unwrap_or_default();
        for k in 0..self.t.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.t[k],
                cell(&self.energy, k),
                cell(&self.gap, k),
                cell(&self.alpha, k)
            );
        }
        s
    }
}

fn pressure_check(ctx: &mut Ctx) -> Result<()> {
    let law = ctx.law().clone();
    let rep = law.check_condition_p(ctx.cfg.rho_max, ctx.cfg.samples)?;
    let b = "pressure";
    ctx.manifest.put(b, "law", &rep.law);
    ctx.manifest.put(b, "rho_max", ctx.cfg.rho_max);
    ctx.manifest.put(b, "verdict", rep.verdict);
    if let Some(e) = law.expected {
        ctx.manifest.put(b, "expected", e);
    }
    ctx.manifest.put(b, "c_lower", rep.c_lower);
    ctx.manifest.put(b, "c_estimate", rep.c_estimate);
    ctx.manifest.put(b, "quartile_max", join(&rep.quartile_max));
    let mut csv = String::from("rho,ratio\n");
    for (r, q) in rep.rho_samples.iter().zip(&rep.ratio) {
        let _ = writeln!(csv, "{r},{q}");
    }
    ctx.write("pressure_ratio.csv", &csv)
}

fn lagrangian(ctx: &mut Ctx, series: &mut Series) -> Result<(ScalarField, Vec<LagrangianState>)> {
    let rho0 = ctx.rho0()?;
    ctx.snapshot("rho0", &rho0, 0.0)?;
    let law = ctx.law().clone();
    let (states, rep) = run_lagrangian(&rho0, &law, &ctx.cfg.lagrangian)?;
    let b = "lagrangian";
    ctx.manifest.put(b, "windows", rep.windows.len());
    ctx.manifest.put(b, "m", rep.m);
    ctx.manifest.put(b, "r", rep.r);
    ctx.manifest.put(b, "sup_eta", rep.sup_eta);
    ctx.manifest.put(b, "lipschitz", rep.lipschitz);
    ctx.manifest.put(b, "max_conservation_defect", rep.max_conservation_defect);
    ctx.manifest.put(
        b,
        "picard_iterations",
        rep.windows.iter().map(|w| w.inner_iterations).sum::<usize>(),
    );
    ctx.manifest.put(
        b,
        "max_window_residual",
        rep.windows.iter().fold(0.0f64, |m, w| m.max(w.residual)),
    );
    let last = states.last().expect("trajectory has a final state");
    ctx.snapshot("eta_final", &last.eta, last.time)?;
    ctx.snapshot("sigma_final", &last.sigma, last.time)?;

    let bal = energy_balance_report(&states, &rep, &law, ctx.cfg.energy_c)?;
    let b = "energy";
    ctx.manifest.put(b, "initial", bal.energies[0]);
    ctx.manifest.put(b, "final", bal.energies.last().copied().unwrap_or(f64::NAN));
    ctx.manifest.put(b, "max_ledger_entry", bal.max_violation);
    ctx.manifest.put(b, "max_increase", bal.max_increase);
    ctx.manifest.put(b, "nonincreasing", bal.holds(1e-6));
    series.t = bal.times.clone();
    series.energy = bal.energies;
    Ok((rho0, states))
}

fn sigma_history(states: &[LagrangianState]) -> Result<ScalarHistory> {
    ScalarHistory::new(
        states.iter().map(|s| s.time).collect(),
        states.iter().map(|s| s.sigma.clone()).collect(),
    )
}

fn eulerian(ctx: &mut Ctx, states: &[LagrangianState]) -> Result<()> {
    let sigma = sigma_history(states)?;
    let cont = delta_continuation(&sigma, &ctx.cfg.recon)?;
    let b = "reconstruction";
    ctx.manifest.put(b, "c_e", cont.report.c_e);
    ctx.manifest.put(b, "levels", cont.report.levels.len());
    for (i, l) in cont.report.levels.iter().enumerate() {
        let p = format!("level.{i}");
        ctx.manifest.put(b, &format!("{p}.delta"), l.delta);
        ctx.manifest.put(b, &format!("{p}.window"), l.window);
        ctx.manifest.put(b, &format!("{p}.halvings"), l.halvings);
        ctx.manifest.put(b, &format!("{p}.iterations"), l.iterations);
        ctx.manifest.put(b, &format!("{p}.fixed_point_residual"), l.fixed_point_residual);
        ctx.manifest.put(b, &format!("{p}.reconstruction_residual"), l.reconstruction_residual);
        ctx.manifest.put(
            b,
            &format!("{p}.flow_distance"),
            l.flow_distance.map(|d| d.to_string()).unwrap_or_else(|| "none".into()),
        );
        ctx.manifest.put(b, &format!("{p}.max_discarded_mean"), l.max_discarded_mean);
    }
    ctx.manifest.put(b, "failure", cont.report.failure.as_deref().unwrap_or("none"));
    if let Some(e) = cont.error {
        return Err(e);
    }
    let u = cont.velocity.expect("completed ladder has a velocity");
    ctx.manifest.put(b, "curl_sup", curl_sup(&u));
    ctx.manifest.put(b, "mean_sup", mean_sup(&u));

    // Eulerian energy at the final node through the reconstructed flow
    let last = states.last().expect("trajectory has a final state");
    let inv = inverse_flow(&u, u.grid(), last.time, ctx.cfg.recon.dt, false)?;
    let rho = eulerian_density(&last.eta, &inv)?;
    let law = ctx.law().clone();
    ctx.manifest.put(b, "energy_lagrangian_final", energy_lagrangian(last, &law, ctx.cfg.energy_c)?);
    ctx.manifest.put(b, "energy_eulerian_final", energy_eulerian(&rho, &law, ctx.cfg.energy_c)?);

    if ctx.cfg.dump_velocity {
        for (k, (t, f)) in u.times().iter().zip(u.fields()).enumerate() {
            for a in 0..f.grid().d() {
                ctx.snapshot_as(&format!("u{a}_k{k:03}"), &format!("u{a}"), &f.component_field(a), *t)?;
            }
        }
    }
    if ctx.cfg.dump_flow {
        let flow = integrate_flow(&u, u.grid(), ctx.cfg.recon.dt)?;
        for k in 0..flow.times.len() {
            let pos = flow.position_field(k);
            for a in 0..pos.grid().d() {
                ctx.snapshot_as(&format!("x{a}_k{k:03}"), &format!("x{a}"), &pos.component_field(a), flow.times[k])?;
            }
        }
    }
    Ok(())
}

fn uniqueness(ctx: &mut Ctx, states: &[LagrangianState], series: &mut Series) -> Result<()> {
    let sigma = sigma_history(states)?;
    let ucfg = UniquenessConfig {
        ladder_a: ctx.cfg.ladder_a.clone(),
        ladder_b: ctx.cfg.ladder_b.clone(),
        s_values: ctx.cfg.s_values.clone(),
        recon: ctx.cfg.recon.clone(),
    };
    let exp = uniqueness_on_sigma(&sigma, &ucfg)?;
    let b = "uniqueness";
    ctx.manifest.put(b, "ladder_a", join(&exp.base.ladder_a));
    ctx.manifest.put(b, "ladder_b", join(&exp.base.ladder_b));
    ctx.manifest.put(b, "s_values", join(&exp.base.s_values));
    ctx.manifest.put(b, "sup_gap", exp.base.sup_gap());
    ctx.manifest.put(b, "sup_alpha", exp.base.sup_alpha());
    ctx.manifest.put(b, "refined_sup_gap", exp.refined.sup_gap());
    ctx.manifest.put(b, "refined_sup_alpha", exp.refined.sup_alpha());
    ctx.manifest.put(b, "gap_ratio", exp.gap_ratio);
    ctx.manifest.put(b, "alpha_ratio", exp.alpha_ratio);
    ctx.manifest.put(b, "alpha_at_zero", exp.base.alpha[0]);
    ctx.manifest.put(b, "shrinks_by_two", exp.shrinks_by(2.0));
    series.gap = exp.base.u_l2_gap;
    series.alpha = exp.base.alpha;
    Ok(())
}

fn bmo(ctx: &mut Ctx, f: &ScalarField, name: &str) -> Result<()> {
    let level = ctx.cfg.bmo_level.unwrap_or(f.grid().levels() - 1);
    let rep = bmo_seminorm(f, level)?;
    let b = format!("bmo.{name}");
    ctx.manifest.put(&b, "seminorm", rep.seminorm);
    ctx.manifest.put(&b, "max_level", level);
    ctx.manifest.put(&b, "worst_cube_offset", format!("{},{}", rep.worst_cube.0[0], rep.worst_cube.0[1]));
    ctx.manifest.put(&b, "worst_cube_side", rep.worst_cube.1);
    ctx.manifest.put(&b, "exp_integral", rep.exp_integral);
    ctx.manifest.put(&b, "grid_lower_bound", rep.grid_lower_bound);
    if rep.seminorm > 0.0 {
        let jn = john_nirenberg_check(f, &rep)?;
        ctx.manifest.put(&b, "jn_c1", jn.c1);
        ctx.manifest.put(&b, "jn_c2", jn.c2);
        ctx.manifest.put(&b, "jn_verdict", jn.verdict);
    } else {
        ctx.manifest.put(&b, "jn_verdict", Verdict::Inconclusive);
    }
    Ok(())
}

fn pipeline(ctx: &mut Ctx) -> Result<()> {
    let mode = ctx.cfg.mode;
    let mut series = Series::default();
    if matches!(mode, Mode::PressureCheck | Mode::Full) {
        ctx.timed("pressure_check", pressure_check)?;
    }
    if mode == Mode::Bmo {
        let rho0 = ctx.rho0()?;
        ctx.snapshot("rho0", &rho0, 0.0)?;
        return ctx.timed("bmo", |c| bmo(c, &rho0, "rho0"));
    }
    if mode == Mode::PressureCheck {
        return Ok(());
    }
    let (rho0, states) = ctx.timed("lagrangian", |c| lagrangian(c, &mut series))?;
    let result = (|| {
        if matches!(mode, Mode::Eulerian | Mode::Full) {
            ctx.timed("eulerian", |c| eulerian(c, &states))?;
        }
        if matches!(mode, Mode::Uniqueness | Mode::Full) {
            ctx.timed("uniqueness", |c| uniqueness(c, &states, &mut series))?;
        }
        if mode == Mode::Full {
            let last = states.last().expect("trajectory has a final state").sigma.clone();
            ctx.timed("bmo", |c| {
                bmo(c, &rho0, "rho0")?;
                bmo(c, &last, "sigma_final")
            })?;
        }
        Ok(())
    })();
    // the series is written even when a later phase failed
    ctx.write("series.csv", &series.csv())?;
    result
}

/// Execute the configured mode under `cfg.out`. The manifest is written
/// in every case; the error only surfaces through the exit code.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut ctx = Ctx {
        cfg,
        dir: dir.clone(),
        manifest: Manifest::default(),
    };
    ctx.manifest.put("run", "program", env!("CARGO_PKG_NAME"));
    ctx.manifest.put("run", "version", env!("CARGO_PKG_VERSION"));
    ctx.manifest.put("run", "mode", cfg.mode);
    // the output directory is omitted so runs into different directories compare equal
    for (k, v) in &cfg.resolved {
        if k != "out" {
            ctx.manifest.put("config", k, v);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("workers: {e}")))?;
    let start = Instant::now();
    let result = pool.install(|| pipeline(&mut ctx));
    ctx.manifest.timings.push(("total".into(), start.elapsed().as_secs_f64()));
    let (code, error) = match result {
        Ok(()) => (0, None),
        Err(e) => {
            log::error!("{e}");
            (e.exit_code(), Some(e.to_string()))
        }
    };
    ctx.manifest.exit_code = code;
    ctx.manifest.error = error.clone();
    let manifest = ctx.manifest.write_atomic(&dir)?;
    Ok(RunOutcome {
        exit_code: code,
        manifest,
        error,
    })
}

/// Check that every file listed in a manifest exists with its digest.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(crate::cli::manifest::MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut bad = Vec::new();
    for (name, digest) in crate::cli::manifest::listed_files(&text) {
        match crate::cli::manifest::sha256_file(&dir.join(&name)) {
            Ok(d) if d == digest => {}
            _ => bad.push(name),
        }
    }
    Ok(bad)
}
