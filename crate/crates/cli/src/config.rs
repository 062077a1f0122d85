//! Run configuration: an INI-style `key = value` file with `[section]`
//! headers. Unknown sections and keys are rejected with their line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use fv3_core::kernels::LimiterKernel;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Advection1d,
    Advection2dX,
    Advection2dDiag,
    Vortex,
    DoubleMach,
    Riemann2d,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Advection1d,
        Scenario::Advection2dX,
        Scenario::Advection2dDiag,
        Scenario::Vortex,
        Scenario::DoubleMach,
        Scenario::Riemann2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Advection1d => "advection1d",
            Scenario::Advection2dX => "advection2d-x",
            Scenario::Advection2dDiag => "advection2d-diag",
            Scenario::Vortex => "vortex",
            Scenario::DoubleMach => "double-mach",
            Scenario::Riemann2d => "riemann2d",
        }
    }

    pub fn is_1d(self) -> bool {
        self == Scenario::Advection1d
    }

    pub fn has_exact(self) -> bool {
        !matches!(self, Scenario::DoubleMach | Scenario::Riemann2d)
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            format!("unknown scenario '{s}', expected one of: {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridSpec {
    Uniform { n: usize },
    Perturbed { n: usize, c1: f64, c2: f64 },
    Random { n: usize, seed: u64, amplitude: f64 },
    Nonuniform { n: usize, delta_x: f64, c_x: f64, delta_y: f64, c_y: f64 },
    Amr { min_level: u32, max_level: u32, delta0: f64, block: (usize, usize), regrid_every: usize },
}

impl GridSpec {
    /// The same grid with `n` cells per direction (not for AMR).
    pub fn with_n(&self, n: usize) -> GridSpec {
        let mut g = self.clone();
        match &mut g {
            GridSpec::Uniform { n: m }
            | GridSpec::Perturbed { n: m, .. }
            | GridSpec::Random { n: m, .. }
            | GridSpec::Nonuniform { n: m, .. } => *m = n,
            GridSpec::Amr { .. } => {}
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(serialize_with = "kernel_name")]
    pub kernel: LimiterKernel,
    pub cfl: Option<f64>,
    pub t_end: Option<f64>,
    /// Overrides the scenario's switch parameter.
    pub alpha: Option<f64>,
    pub order_fix: bool,
    pub vortex_profile: Profile,
    pub grid: GridSpec,
    /// Grid sizes of a convergence study.
    pub sizes: Vec<usize>,
    pub out_dir: PathBuf,
    /// Snapshot every this many steps; 0 writes the final state only.
    pub every: usize,
    pub format: Format,
}

fn kernel_name<S: serde::Serializer>(k: &LimiterKernel, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(k.name())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Isentropic,
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Binary,
    Csv,
}

const KEYS: &[(&str, &[&str])] = &[
    ("run", &["scenario", "kernel", "cfl", "t_end", "alpha", "order_fix", "vortex_profile"]),
    (
        "grid",
        &[
            "kind",
            "n",
            "c1",
            "c2",
            "seed",
            "amplitude",
            "delta_x",
            "c_x",
            "delta_y",
            "c_y",
            "levels",
            "delta0",
            "block",
            "regrid_every",
        ],
    ),
    ("convergence", &["sizes"]),
    ("output", &["dir", "every", "format"]),
];

struct Entry {
    value: String,
    line: usize,
}

type Sections = BTreeMap<String, BTreeMap<String, Entry>>;

fn tokenize(text: &str) -> Result<Sections, ConfigError> {
    let mut out: Sections = BTreeMap::new();
    let mut section: Option<String> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return err(line, format!("malformed section header '{body}'"));
            };
            let name = name.trim().to_string();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                let names: Vec<_> = KEYS.iter().map(|(s, _)| *s).collect();
                return err(line, format!("unknown section [{name}], expected one of: {}", names.join(", ")));
            }
            out.entry(name.clone()).or_default();
            section = Some(name);
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return err(line, format!("expected 'key = value', got '{body}'"));
        };
        let Some(sec) = &section else {
            return err(line, "key outside of any section");
        };
        let key = key.trim().to_string();
        let allowed = KEYS.iter().find(|(s, _)| s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return err(line, format!("unknown key '{key}' in [{sec}], expected one of: {}", allowed.join(", ")));
        }
        let map = out.entry(sec.clone()).or_default();
        if map.contains_key(&key) {
            return err(line, format!("duplicate key '{key}' in [{sec}]"));
        }
        map.insert(key, Entry { value: value.trim().to_string(), line });
    }
    Ok(out)
}

struct Reader<'a> {
    sections: &'a Sections,
}

impl<'a> Reader<'a> {
    fn get(&self, sec: &str, key: &str) -> Option<&'a Entry> {
        self.sections.get(sec).and_then(|m| m.get(key))
    }

    fn parse<T: FromStr>(&self, sec: &str, key: &str, what: &str) -> Result<Option<(T, usize)>, ConfigError> {
        match self.get(sec, key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<T>() {
                Ok(v) => Ok(Some((v, e.line))),
                Err(_) => err(e.line, format!("{key}: expected {what}, got '{}'", e.value)),
            },
        }
    }

    fn real(&self, sec: &str, key: &str) -> Result<Option<(f64, usize)>, ConfigError> {
        let v = self.parse::<f64>(sec, key, "a number")?;
        if let Some((x, line)) = v {
            if !x.is_finite() {
                return err(line, format!("{key}: expected a finite number"));
            }
        }
        Ok(v)
    }

    fn required_real(&self, sec: &str, key: &str, kind: &str) -> Result<f64, ConfigError> {
        match self.real(sec, key)? {
            Some((v, _)) => Ok(v),
            None => err(0, format!("grid kind '{kind}' requires '{key}' in [{sec}]")),
        }
    }

    fn line_of(&self, sec: &str, key: &str) -> usize {
        self.get(sec, key).map_or(0, |e| e.line)
    }
}

fn parse_pair(s: &str, sep: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once(sep)?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_switch(s: &str) -> Option<bool> {
    match s {
        "on" | "true" | "yes" => Some(true),
        "off" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Default cells per direction when `n` is omitted.
pub const DEFAULT_N: usize = 50;

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let sections = tokenize(text)?;
    let r = Reader { sections: &sections };

    let scenario = match r.get("run", "scenario") {
        None => return err(0, "missing required key 'scenario' in [run]"),
        Some(e) => e.value.parse::<Scenario>().or_else(|m| err(e.line, m))?,
    };
    let kernel = match r.get("run", "kernel") {
        None => LimiterKernel::H3LC,
        Some(e) => e.value.parse::<LimiterKernel>().or_else(|m| err(e.line, m.to_string()))?,
    };
    let cfl = r.real("run", "cfl")?;
    if let Some((c, line)) = cfl {
        if c <= 0.0 || c > 1.0 {
            return err(line, format!("cfl must lie in (0, 1], got {c}"));
        }
    }
    let t_end = r.real("run", "t_end")?;
    if let Some((t, line)) = t_end {
        if t <= 0.0 {
            return err(line, format!("t_end must be positive, got {t}"));
        }
    }
    let alpha = r.real("run", "alpha")?;
    if let Some((a, line)) = alpha {
        if a < 0.0 {
            return err(line, format!("alpha must be non-negative, got {a}"));
        }
    }
    let vortex_profile = match r.get("run", "vortex_profile") {
        None => Profile::Isentropic,
        Some(e) => match e.value.as_str() {
            "isentropic" => Profile::Isentropic,
            "verbatim" => Profile::Verbatim,
            v => return err(e.line, format!("vortex_profile: expected isentropic or verbatim, got '{v}'")),
        },
    };
    let order_fix = match r.get("run", "order_fix") {
        None => true,
        Some(e) => match parse_switch(&e.value) {
            Some(v) => v,
            None => return err(e.line, format!("order_fix: expected on or off, got '{}'", e.value)),
        },
    };

    let kind = r.get("grid", "kind").map_or("uniform", |e| e.value.as_str());
    let kind_line = r.line_of("grid", "kind");
    let n = match r.parse::<usize>("grid", "n", "a positive integer")? {
        Some((0, line)) => return err(line, "n must be positive"),
        Some((n, _)) => n,
        None => DEFAULT_N,
    };
    let grid = match kind {
        "uniform" => GridSpec::Uniform { n },
        "perturbed" => GridSpec::Perturbed {
            n,
            c1: r.required_real("grid", "c1", kind)?,
            c2: r.required_real("grid", "c2", kind)?,
        },
        "random" => GridSpec::Random {
            n,
            seed: r.parse::<u64>("grid", "seed", "an unsigned integer")?.map_or(0, |v| v.0),
            amplitude: r.required_real("grid", "amplitude", kind)?,
        },
        "nonuniform" => GridSpec::Nonuniform {
            n,
            delta_x: r.required_real("grid", "delta_x", kind)?,
            c_x: r.required_real("grid", "c_x", kind)?,
            delta_y: r.required_real("grid", "delta_y", kind)?,
            c_y: r.required_real("grid", "c_y", kind)?,
        },
        "amr" => {
            let (min_level, max_level) = match r.get("grid", "levels") {
                None => return err(kind_line, "grid kind 'amr' requires 'levels = MIN..MAX'"),
                Some(e) => {
                    let Some((a, b)) = e.value.split_once("..") else {
                        return err(e.line, format!("levels: expected MIN..MAX, got '{}'", e.value));
                    };
                    match (a.trim().parse::<u32>(), b.trim().parse::<u32>()) {
                        (Ok(a), Ok(b)) if a <= b => (a, b),
                        _ => {
                            return err(e.line, format!("levels: expected MIN..MAX with MIN <= MAX, got '{}'", e.value))
                        }
                    }
                }
            };
            let block = match r.get("grid", "block") {
                None => (16, 16),
                Some(e) => match parse_pair(&e.value, "x") {
                    Some(b) => b,
                    None => return err(e.line, format!("block: expected NXxNY, got '{}'", e.value)),
                },
            };
            let delta0 = match r.real("grid", "delta0")? {
                Some((d, line)) if d <= 0.0 => return err(line, "delta0 must be positive"),
                Some((d, _)) => d,
                None => return err(kind_line, "grid kind 'amr' requires 'delta0'"),
            };
            let regrid_every = match r.parse::<usize>("grid", "regrid_every", "a positive integer")? {
                Some((0, line)) => return err(line, "regrid_every must be positive"),
                Some((v, _)) => v,
                None => 4,
            };
            let cfg = fv3_core::amr::AmrConfig {
                block,
                root_blocks: (1, 1),
                min_level,
                max_level,
                threshold: delta0,
                coarsen_factor: 4.0,
                regrid_every,
            };
            if let Err(e) = cfg.validate() {
                let key = if e.to_string().contains("block") { "block" } else { "levels" };
                return err(r.line_of("grid", key).max(kind_line), e.to_string());
            }
            GridSpec::Amr { min_level, max_level, delta0, block, regrid_every }
        }
        other => {
            return err(
                kind_line,
                format!("unknown grid kind '{other}', expected one of: uniform, perturbed, random, nonuniform, amr"),
            )
        }
    };
    let grid_1d = matches!(grid, GridSpec::Perturbed { .. } | GridSpec::Random { .. });
    let grid_2d = matches!(grid, GridSpec::Nonuniform { .. } | GridSpec::Amr { .. });
    if scenario.is_1d() && grid_2d {
        return err(kind_line, format!("grid kind '{kind}' needs a 2D scenario, got {}", scenario.name()));
    }
    if !scenario.is_1d() && grid_1d {
        return err(kind_line, format!("grid kind '{kind}' needs a 1D scenario, got {}", scenario.name()));
    }

    let sizes = match r.get("convergence", "sizes") {
        None => Vec::new(),
        Some(e) => {
            let v: Result<Vec<usize>, _> = e.value.split(',').map(|s| s.trim().parse::<usize>()).collect();
            match v {
                Ok(v) if v.len() >= 2 && v.iter().all(|&n| n > 0) => v,
                _ => return err(e.line, format!("sizes: expected at least two positive integers, got '{}'", e.value)),
            }
        }
    };
    if !sizes.is_empty() && matches!(grid, GridSpec::Amr { .. }) {
        return err(r.line_of("convergence", "sizes"), "convergence studies need a fixed grid kind, not amr");
    }

    let out_dir =
        r.get("output", "dir").map_or_else(|| PathBuf::from("out").join(scenario.name()), |e| PathBuf::from(&e.value));
    let every = r.parse::<usize>("output", "every", "a non-negative integer")?.map_or(0, |v| v.0);
    let format = match r.get("output", "format") {
        None => Format::Binary,
        Some(e) => match e.value.as_str() {
            "binary" => Format::Binary,
            "csv" => Format::Csv,
            v => return err(e.line, format!("format: expected binary or csv, got '{v}'")),
        },
    };

    Ok(RunConfig {
        scenario,
        kernel,
        cfl: cfl.map(|v| v.0),
        t_end: t_end.map(|v| v.0),
        alpha: alpha.map(|v| v.0),
        order_fix,
        vortex_profile,
        grid,
        sizes,
        out_dir,
        every,
        format,
    })
}
