//! `key = value` run configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::eulerian::{Kernel, ReconConfig};
use crate::grid::{ScalarField, TorusGrid};
use crate::lagrangian::LagrangianConfig;
use crate::pressure::PressureLaw;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Lagrangian,
    Eulerian,
    Uniqueness,
    PressureCheck,
    Bmo,
    Full,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Lagrangian,
        Mode::Eulerian,
        Mode::Uniqueness,
        Mode::PressureCheck,
        Mode::Bmo,
        Mode::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Lagrangian => "lagrangian",
            Mode::Eulerian => "eulerian",
            Mode::Uniqueness => "uniqueness",
            Mode::PressureCheck => "pressure-check",
            Mode::Bmo => "bmo",
            Mode::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    fn needs_grid(self) -> bool {
        self != Mode::PressureCheck
    }

    fn needs_pressure(self) -> bool {
        self != Mode::Bmo
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Recognized keys with their defaults; `None` marks required or optional
/// keys without a default.
const KEYS: &[(&str, Option<&str>)] = &[
    ("mode", None),
    ("d", None),
    ("n", None),
    ("pressure", None),
    ("gamma", Some("1.4")),
    ("temperature", Some("1")),
    ("virial", Some("1,0.5")),
    ("q", Some("2")),
    ("rho_bar", Some("1")),
    ("c1", Some("1")),
    ("c2", Some("1")),
    ("energy_c", Some("1")),
    ("rho0", None),
    ("rho0_value", Some("1")),
    ("rho0_low", Some("0.5")),
    ("rho0_high", Some("1.5")),
    ("rho0_amplitude", Some("0.5")),
    ("rho0_file", None),
    ("T", Some("1")),
    ("tau", Some("0.05")),
    ("dt", Some("0.01")),
    ("picard_tol", Some("1e-8")),
    ("picard_max", Some("200")),
    ("quad_nodes", Some("5")),
    ("recon_tol", Some("1e-8")),
    ("recon_max_iter", Some("100")),
    ("delta_ladder", Some("0.1,0.05,0.025,0.0125")),
    ("ladder_a", Some("0.1,0.05,0.025")),
    ("ladder_b", Some("0.1,0.05,0.025,0.0125")),
    ("kernel", Some("gaussian")),
    ("s_values", Some("0,0.25,0.5,0.75,1")),
    ("bmo_level", None),
    ("rho_max", Some("100")),
    ("samples", Some("64")),
    ("out", Some("out")),
    ("workers", Some("1")),
    ("seed", Some("0")),
    ("dump_velocity", Some("false")),
    ("dump_flow", Some("false")),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Rho0 {
    Constant(f64),
    TwoValue { low: f64, high: f64 },
    Indicator,
    CosineBump { mean: f64, amplitude: f64 },
    File(PathBuf),
    Random { low: f64, high: f64, seed: u64 },
}

impl Rho0 {
    pub fn build(&self, grid: TorusGrid) -> Result<ScalarField> {
        use std::f64::consts::PI;
        let f = match self {
            Rho0::Constant(c) => ScalarField::constant(grid, *c),
            Rho0::TwoValue { low, high } => {
                ScalarField::from_fn(grid, |x| if x[0] < 0.5 { *low } else { *high })?
            }
            Rho0::Indicator => ScalarField::from_fn(grid, |x| {
                let inside = x[0] < 0.5 && (grid.d() == 1 || x[1] < 0.5);
                if inside {
                    1.0
                } else {
                    0.0
                }
            })?,
            Rho0::CosineBump { mean, amplitude } => ScalarField::from_fn(grid, |x| {
                let c: f64 = x[..grid.d()].iter().map(|v| (2.0 * PI * v).cos()).product();
                mean * (1.0 + amplitude * c)
            })?,
            Rho0::File(p) => {
                let (f, _, _) = ScalarField::read_snapshot(p)?;
                if f.grid() != grid {
                    return Err(Error::InvalidConfig(format!(
                        "rho0_file {} holds a d={} n={} field, config asks for d={} n={}",
                        p.display(),
                        f.grid().d(),
                        f.grid().n(),
                        grid.d(),
                        grid.n()
                    )));
                }
                f
            }
            Rho0::Random { low, high, seed } => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                let v = (0..grid.len()).map(|_| rng.gen_range(*low..=*high)).collect();
                ScalarField::new(grid, v)?
            }
        };
        if f.min() < 0.0 {
            return Err(Error::InvalidConfig("rho0 must be nonnegative".into()));
        }
        Ok(f)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: Option<TorusGrid>,
    pub pressure: Option<PressureLaw>,
    pub energy_c: f64,
    pub rho0: Option<Rho0>,
    pub lagrangian: LagrangianConfig,
    pub recon: ReconConfig,
    pub ladder_a: Vec<f64>,
    pub ladder_b: Vec<f64>,
    pub s_values: Vec<f64>,
    pub bmo_level: Option<usize>,
    pub rho_max: f64,
    pub samples: usize,
    pub out: PathBuf,
    pub workers: usize,
    pub seed: u64,
    pub dump_velocity: bool,
    pub dump_flow: bool,
    /// Resolved `key = value` pairs, echoed into the manifest.
    pub resolved: BTreeMap<String, String>,
}

/// Values supplied on the command line; each wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub dump_velocity: bool,
    pub dump_flow: bool,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if let Some(m) = &self.mode {
            v.push(("mode", m.clone()));
        }
        if let Some(o) = &self.out {
            v.push(("out", o.display().to_string()));
        }
        if let Some(w) = self.workers {
            v.push(("workers", w.to_string()));
        }
        if let Some(s) = self.seed {
            v.push(("seed", s.to_string()));
        }
        if self.dump_velocity {
            v.push(("dump_velocity", "true".into()));
        }
        if self.dump_flow {
            v.push(("dump_flow", "true".into()));
        }
        v
    }
}

fn suggest(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|(k, _)| (*k, strsim::levenshtein(key, k)))
        .filter(|(_, d)| *d <= 2)
        .min_by_key(|(_, d)| *d)
        .map(|(k, _)| k)
}

/// Split the text into `(line, key, value)` triples.
fn parse_lines(text: &str, path: &Path) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    let mut unknown = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _)| *name == k) {
            unknown.push(match suggest(k) {
                Some(s) => format!("`{k}` (line {}, did you mean `{s}`?)", i + 1),
                None => format!("`{k}` (line {})", i + 1),
            });
            continue;
        }
        if let Some(prev) = seen.insert(k.to_string(), i + 1) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("`{k}` already set on line {prev}"),
            });
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    if !unknown.is_empty() {
        return Err(Error::InvalidConfig(format!("unknown keys: {}", unknown.join(", "))));
    }
    Ok(out)
}

struct Values {
    map: BTreeMap<String, String>,
    lines: BTreeMap<String, usize>,
    path: PathBuf,
}

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn err(&self, key: &str, msg: String) -> Error {
        match self.lines.get(key) {
            Some(&line) => Error::Parse {
                path: self.path.clone(),
                line,
                message: format!("{key}: {msg}"),
            },
            None => Error::InvalidConfig(format!("{key}: {msg}")),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("cannot parse `{v}` as {}", std::any::type_name::<T>()))),
        }
    }

    fn req<T: std::str::FromStr>(&self, key: &str, mode: Mode) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::InvalidConfig(format!("mode {mode} requires key `{key}`")))
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v: f64 = self.get(key)?.expect("defaulted key");
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.err(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.raw(key).expect("defaulted key");
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| self.err(key, format!("cannot parse `{raw}` as a list of numbers")))
            })
            .collect()
    }
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, path, overrides)
}

pub fn parse_config_str(text: &str, path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut vals = Values {
        map: BTreeMap::new(),
        lines: BTreeMap::new(),
        path: path.to_path_buf(),
    };
    for (line, k, v) in parse_lines(text, path)? {
        vals.lines.insert(k.clone(), line);
        vals.map.insert(k, v);
    }
    for (k, v) in overrides.pairs() {
        if let Some(old) = vals.map.get(k) {
            if *old != v {
                log::warn!("--{} = {v} overrides `{k} = {old}` from {}", k.replace('_', "-"), path.display());
            }
        }
        vals.lines.remove(k);
        vals.map.insert(k.to_string(), v);
    }
    for (k, def) in KEYS {
        if let Some(d) = def {
            vals.map.entry(k.to_string()).or_insert_with(|| d.to_string());
        }
    }
    build(vals)
}

fn build(v: Values) -> Result<RunConfig> {
    let mode_raw: String = v
        .get("mode")?
        .ok_or_else(|| Error::InvalidConfig("missing required key `mode`".into()))?;
    let mode = Mode::parse(&mode_raw).ok_or_else(|| {
        let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
        v.err("mode", format!("unknown mode `{mode_raw}`; expected one of {}", names.join(", ")))
    })?;

    let grid = if mode.needs_grid() {
        let d: usize = v.req("d", mode)?;
        let n: usize = v.req("n", mode)?;
        Some(TorusGrid::new(d, n).map_err(|e| v.err("n", e.to_string()))?)
    } else {
        None
    };

    let pressure = if mode.needs_pressure() {
        let name: String = v.req("pressure", mode)?;
        let law = match name.as_str() {
            "linear" => PressureLaw::linear(),
            "gamma" => PressureLaw::gamma(v.positive("gamma")?)?,
            "van-der-waals" | "vdw" => PressureLaw::van_der_waals(v.positive("temperature")?)?,
            "virial" => PressureLaw::virial(v.list("virial")?)?,
            "oscillatory" => PressureLaw::oscillatory(v.positive("q")?)?,
            "bump" => PressureLaw::bump(),
            "atan" => PressureLaw::atan(),
            other => {
                return Err(v.err(
                    "pressure",
                    format!("unknown law `{other}`; expected linear, gamma, van-der-waals, virial, oscillatory, bump or atan"),
                ))
            }
        };
        let rho_bar: f64 = v.get("rho_bar")?.expect("defaulted key");
        let c1: f64 = v.get("c1")?.expect("defaulted key");
        let c2: f64 = v.get("c2")?.expect("defaulted key");
        Some(law.with_constants(rho_bar, c1, c2)?)
    } else {
        None
    };

    let seed: u64 = v.get("seed")?.expect("defaulted key");
    let rho0 = if mode.needs_grid() {
        let name: String = v.req("rho0", mode)?;
        let low: f64 = v.get("rho0_low")?.expect("defaulted key");
        let high: f64 = v.get("rho0_high")?.expect("defaulted key");
        Some(match name.as_str() {
            "constant" => Rho0::Constant(v.get("rho0_value")?.expect("defaulted key")),
            "two-value" => Rho0::TwoValue { low, high },
            "indicator" => Rho0::Indicator,
            "cosine-bump" => Rho0::CosineBump {
                mean: v.get("rho0_value")?.expect("defaulted key"),
                amplitude: v.get("rho0_amplitude")?.expect("defaulted key"),
            },
            "file" => Rho0::File(v.req::<String>("rho0_file", mode)?.into()),
            "random" => {
                if !(low <= high) {
                    return Err(v.err("rho0_low", "must not exceed rho0_high".into()));
                }
                Rho0::Random { low, high, seed }
            }
            other => {
                return Err(v.err(
                    "rho0",
                    format!("unknown profile `{other}`; expected constant, two-value, indicator, cosine-bump, file or random"),
                ))
            }
        })
    } else {
        None
    };

    let t_final: f64 = v.get("T")?.expect("defaulted key");
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(v.err("T", format!("must be nonnegative, got {t_final}")));
    }
    let lagrangian = LagrangianConfig {
        tau: v.positive("tau")?,
        picard_tol: v.positive("picard_tol")?,
        picard_max: v.get("picard_max")?.expect("defaulted key"),
        quad_nodes_per_window: v.get("quad_nodes")?.expect("defaulted key"),
        t_final,
        ..Default::default()
    };
    lagrangian.validate()?;

    let kernel = match v.raw("kernel").expect("defaulted key") {
        "gaussian" => Kernel::Gaussian,
        "bump" => Kernel::Bump,
        other => return Err(v.err("kernel", format!("unknown kernel `{other}`; expected gaussian or bump"))),
    };
    let recon = ReconConfig {
        dt: v.positive("dt")?,
        tol: v.positive("recon_tol")?,
        max_iter: v.get("recon_max_iter")?.expect("defaulted key"),
        ladder: v.list("delta_ladder")?,
        kernel,
        ..Default::default()
    };
    recon.validate().map_err(|e| v.err("delta_ladder", e.to_string()))?;
    let ladder_a = v.list("ladder_a")?;
    let ladder_b = v.list("ladder_b")?;
    for (k, l) in [("ladder_a", &ladder_a), ("ladder_b", &ladder_b)] {
        ReconConfig {
            ladder: l.clone(),
            ..recon.clone()
        }
        .validate()
        .map_err(|e| v.err(k, e.to_string()))?;
    }
    let s_values = v.list("s_values")?;
    if s_values.len() < 2 || s_values.iter().any(|s| !(0.0..=1.0).contains(s)) || s_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(v.err("s_values", "need at least two increasing values in [0, 1]".into()));
    }
    let bmo_level: Option<usize> = v.get("bmo_level")?;
    if let (Some(l), Some(g)) = (bmo_level, grid) {
        if l + 1 > g.levels() {
            return Err(v.err("bmo_level", format!("must be at most {}", g.levels() - 1)));
        }
    }
    let workers: usize = v.get("workers")?.expect("defaulted key");
    if workers == 0 {
        return Err(v.err("workers", "must be at least 1".into()));
    }
    let samples: usize = v.get("samples")?.expect("defaulted key");
    if samples < 8 {
        return Err(v.err("samples", "must be at least 8".into()));
    }
    let energy_c = v.positive("energy_c")?;
    let rho_max = v.positive("rho_max")?;

    Ok(RunConfig {
        mode,
        grid,
        pressure,
        energy_c,
        rho0,
        lagrangian,
        recon,
        ladder_a,
        ladder_b,
        s_values,
        bmo_level,
        rho_max,
        samples,
        out: v.raw("out").expect("defaulted key").into(),
        workers,
        seed,
        dump_velocity: v.get("dump_velocity")?.expect("defaulted key"),
        dump_flow: v.get("dump_flow")?.expect("defaulted key"),
        resolved: v.map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config_str(text, Path::new("test.conf"), &Overrides::default())
    }

    const MINIMAL: &str = "mode = lagrangian\nd = 1\nn = 256\npressure = linear\nrho0 = two-value\nT = 1\n";

    #[test]
    fn minimal_lagrangian() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Lagrangian);
        assert_eq!(c.grid.unwrap().n(), 256);
        assert_eq!(c.rho0, Some(Rho0::TwoValue { low: 0.5, high: 1.5 }));
        assert_eq!(c.lagrangian.t_final, 1.0);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# run\n\n{MINIMAL}tau = 0.025 # halved\n");
        assert_eq!(parse(&text).unwrap().lagrangian.tau, 0.025);
    }

    #[test]
    fn negative_tau_names_key() {
        let e = parse(&format!("{MINIMAL}tau = -0.1\n")).unwrap_err().to_string();
        assert!(e.contains("tau"), "{e}");
    }

    #[test]
    fn unknown_key_suggests() {
        let e = parse("mode = lagrangian\npresure = linear\n").unwrap_err().to_string();
        assert!(e.contains("presure") && e.contains("did you mean `pressure`"), "{e}");
    }

    #[test]
    fn missing_required_key() {
        let e = parse("mode = lagrangian\nd = 1\nn = 64\nrho0 = constant\n").unwrap_err().to_string();
        assert!(e.contains("pressure"), "{e}");
    }

    #[test]
    fn type_mismatch_reports_line() {
        match parse("mode = lagrangian\nd = one\n").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn flags_win() {
        let o = Overrides {
            mode: Some("eulerian".into()),
            seed: Some(7),
            ..Default::default()
        };
        let c = parse_config_str(MINIMAL, Path::new("x"), &o).unwrap();
        assert_eq!(c.mode, Mode::Eulerian);
        assert_eq!(c.seed, 7);
        assert_eq!(c.resolved["mode"], "eulerian");
    }

    #[test]
    fn pressure_check_needs_no_grid() {
        let c = parse("mode = pressure-check\npressure = bump\nrho_max = 20\n").unwrap();
        assert!(c.grid.is_none());
        assert_eq!(c.rho_max, 20.0);
    }

    #[test]
    fn random_profile_is_seeded() {
        let g = TorusGrid::new(1, 32).unwrap();
        let r = Rho0::Random { low: 0.5, high: 2.0, seed: 3 };
        assert_eq!(r.build(g).unwrap(), r.build(g).unwrap());
        let f = r.build(g).unwrap();
        assert!(f.min() >= 0.5 && f.max() <= 2.0);
    }
}
