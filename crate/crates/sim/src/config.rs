//! Device configuration files.
//!
//! Line-based `key = value` text with the sections `[domain]`, `[doping]`,
//! `[boundary]`, `[initial]` and `[solver]`. Piecewise-constant fields are a
//! background value plus repeated `rect = x0 x1 y0 y1 value` lines; a later
//! rectangle overrides an earlier one where they overlap.
//!
//! ```text
//! [domain]
//! length_x = 1.0
//! length_y = 1.0
//! nx = 32
//! ny = 32
//! lambda2 = 0.1
//!
//! [doping]
//! n_i = 1.0
//! background = 0.0
//! rect = 0.0 0.5 0.0 1.0 0.5
//!
//! [boundary]
//! n_bar = 1.0
//! p_bar = equilibrium
//!
//! [initial]
//! n = 1.0
//! p = 1.0
//! d = 0.2
//! d.rect = 0.0 0.3 0.0 1.0 2.0
//!
//! [solver]
//! gummel_tol = 1e-10
//! gummel_max_iter = 60
//! k_trunc = 50
//! dt = 0.01
//! t_end = 10
//! drive = SIN 1.0 0.1
//! ```

use std::path::Path;

use ini::{Ini, Properties};
use memristor_core::grid::{BoundaryLayout, BoundaryTag};
use memristor_core::waveform::Waveform;
use thiserror::Error;

use crate::netlist::parse_waveform_tokens;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("syntax error at {0}")]
    Syntax(String),
    #[error("[{section}] {key}: {message}")]
    Value {
        section: String,
        key: String,
        message: String,
    },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("[{section}] unknown key '{key}'")]
    UnknownKey { section: String, key: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub value: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseField {
    pub background: f64,
    pub rects: Vec<Rect>,
}

impl PiecewiseField {
    pub fn constant(v: f64) -> Self {
        Self {
            background: v,
            rects: Vec::new(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.rects
            .iter()
            .rev()
            .find(|r| r.contains(x, y))
            .map_or(self.background, |r| r.value)
    }

    fn min(&self) -> f64 {
        self.rects.iter().fold(self.background, |m, r| m.min(r.value))
    }
}

/// Dirichlet densities on the terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerminalData {
    Constant(f64),
    PerTerminal([f64; 2]),
    /// `n_i e^{V_bi}` for electrons, `n_i e^{-V_bi}` for holes.
    Equilibrium,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceConfig {
    pub length_x: f64,
    pub length_y: f64,
    pub nx: usize,
    pub ny: usize,
    pub lambda2: f64,
    pub layout: BoundaryLayout,
    pub doping: PiecewiseField,
    pub n_i: f64,
    pub n_bar: TerminalData,
    pub p_bar: TerminalData,
    pub n0: PiecewiseField,
    pub p0: PiecewiseField,
    pub d0: PiecewiseField,
    pub k_trunc: Option<f64>,
    pub gummel_tol: f64,
    pub gummel_max_iter: usize,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub drive: Option<Waveform>,
    pub fields_every: Option<usize>,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            length_x: 1.0,
            length_y: 1.0,
            nx: 16,
            ny: 16,
            lambda2: 1.0,
            layout: BoundaryLayout::default(),
            doping: PiecewiseField::constant(0.0),
            n_i: 1.0,
            n_bar: TerminalData::Equilibrium,
            p_bar: TerminalData::Equilibrium,
            n0: PiecewiseField::constant(1.0),
            p0: PiecewiseField::constant(1.0),
            d0: PiecewiseField::constant(1.0),
            k_trunc: None,
            gummel_tol: 1e-10,
            gummel_max_iter: 100,
            dt: None,
            t_end: None,
            drive: None,
            fields_every: None,
        }
    }
}

struct Section<'a> {
    name: &'a str,
    props: Option<&'a Properties>,
}

impl<'a> Section<'a> {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: self.name.into(),
            key: key.into(),
            message: message.into(),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        let Some(p) = self.props else { return Ok(()) };
        for (k, _) in p.iter() {
            if !allowed.contains(&k) {
                return Err(ConfigError::UnknownKey {
                    section: self.name.into(),
                    key: k.into(),
                });
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn all(&self, key: &str) -> Vec<&'a str> {
        self.props.map(|p| p.get_all(key).map(str::trim).collect()).unwrap_or_default()
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key)
            .map(|v| v.parse::<f64>().map_err(|_| self.err(key, format!("expected a number, got '{v}'"))))
            .transpose()
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.raw(key)
            .map(|v| v.parse::<usize>().map_err(|_| self.err(key, format!("expected a non-negative integer, got '{v}'"))))
            .transpose()
    }

    fn rects(&self, key: &str) -> Result<Vec<Rect>, ConfigError> {
        self.all(key)
            .into_iter()
            .map(|v| {
                let nums: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| self.err(key, format!("expected numbers, got '{v}'")))?;
                match nums[..] {
                    [x0, x1, y0, y1, value] if x0 <= x1 && y0 <= y1 => Ok(Rect { x0, x1, y0, y1, value }),
                    _ => Err(self.err(key, format!("expected 'x0 x1 y0 y1 value' with x0 <= x1, y0 <= y1, got '{v}'"))),
                }
            })
            .collect()
    }

    fn field(&self, key: &str, rect_key: &str, default: f64) -> Result<PiecewiseField, ConfigError> {
        Ok(PiecewiseField {
            background: self.float(key)?.unwrap_or(default),
            rects: self.rects(rect_key)?,
        })
    }

    fn terminal_data(&self, key: &str) -> Result<TerminalData, ConfigError> {
        let Some(v) = self.raw(key) else { return Ok(TerminalData::Equilibrium) };
        if v.eq_ignore_ascii_case("equilibrium") {
            return Ok(TerminalData::Equilibrium);
        }
        let nums: Vec<f64> = v
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| self.err(key, format!("expected 'equilibrium' or one or two numbers, got '{v}'")))?;
        let data = match nums[..] {
            [c] => TerminalData::Constant(c),
            [a, b] => TerminalData::PerTerminal([a, b]),
            _ => return Err(self.err(key, "expected one or two values")),
        };
        let positive = match data {
            TerminalData::Constant(c) => c > 0.0,
            TerminalData::PerTerminal([a, b]) => a > 0.0 && b > 0.0,
            TerminalData::Equilibrium => true,
        };
        if !positive {
            return Err(self.err(key, "boundary densities must be strictly positive"));
        }
        Ok(data)
    }

    fn tag(&self, key: &str, default: BoundaryTag) -> Result<BoundaryTag, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match v.to_ascii_uppercase().as_str() {
                "D1" => Ok(BoundaryTag::D1),
                "D2" => Ok(BoundaryTag::D2),
                "N" => Ok(BoundaryTag::N),
                _ => Err(self.err(key, format!("expected D1, D2 or N, got '{v}'"))),
            },
        }
    }
}

pub fn parse_device_config(text: &str) -> Result<DeviceConfig, ConfigError> {
    let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    const SECTIONS: [&str; 5] = ["domain", "doping", "boundary", "initial", "solver"];
    for s in ini.sections().flatten() {
        if !SECTIONS.contains(&s) {
            return Err(ConfigError::UnknownSection(s.into()));
        }
    }
    if ini.section(None::<String>).is_some_and(|p| !p.is_empty()) {
        return Err(ConfigError::Syntax("keys must appear inside a section".into()));
    }
    let sec = |name: &'static str| Section {
        name,
        props: ini.section(Some(name)),
    };
    let (domain, doping, boundary, initial, solver) = (sec("domain"), sec("doping"), sec("boundary"), sec("initial"), sec("solver"));
    domain.check_keys(&["length_x", "length_y", "nx", "ny", "lambda2", "left", "right", "bottom", "top"])?;
    doping.check_keys(&["n_i", "background", "rect"])?;
    boundary.check_keys(&["n_bar", "p_bar"])?;
    initial.check_keys(&["n", "p", "d", "n.rect", "p.rect", "d.rect"])?;
    solver.check_keys(&["gummel_tol", "gummel_max_iter", "k_trunc", "dt", "t_end", "drive", "fields_every"])?;

    let d = DeviceConfig::default();
    let cfg = DeviceConfig {
        length_x: domain.float("length_x")?.unwrap_or(d.length_x),
        length_y: domain.float("length_y")?.unwrap_or(d.length_y),
        nx: domain.count("nx")?.unwrap_or(d.nx),
        ny: domain.count("ny")?.unwrap_or(d.ny),
        lambda2: domain.float("lambda2")?.unwrap_or(d.lambda2),
        layout: BoundaryLayout::uniform(
            domain.tag("left", BoundaryTag::D1)?,
            domain.tag("right", BoundaryTag::D2)?,
            domain.tag("bottom", BoundaryTag::N)?,
            domain.tag("top", BoundaryTag::N)?,
        ),
        doping: doping.field("background", "rect", 0.0)?,
        n_i: doping.float("n_i")?.unwrap_or(d.n_i),
        n_bar: boundary.terminal_data("n_bar")?,
        p_bar: boundary.terminal_data("p_bar")?,
        n0: initial.field("n", "n.rect", 1.0)?,
        p0: initial.field("p", "p.rect", 1.0)?,
        d0: initial.field("d", "d.rect", 1.0)?,
        k_trunc: solver.float("k_trunc")?,
        gummel_tol: solver.float("gummel_tol")?.unwrap_or(d.gummel_tol),
        gummel_max_iter: solver.count("gummel_max_iter")?.unwrap_or(d.gummel_max_iter),
        dt: solver.float("dt")?,
        t_end: solver.float("t_end")?,
        drive: solver
            .raw("drive")
            .map(|v| {
                let tokens: Vec<&str> = v.split_whitespace().collect();
                parse_waveform_tokens(&tokens).map_err(|m| solver.err("drive", m))
            })
            .transpose()?,
        fields_every: solver.count("fields_every")?,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &DeviceConfig) -> Result<(), ConfigError> {
    let bad = |section: &str, key: &str, message: &str| {
        Err(ConfigError::Value {
            section: section.into(),
            key: key.into(),
            message: message.into(),
        })
    };
    if !(cfg.length_x > 0.0 && cfg.length_y > 0.0) {
        return bad("domain", "length_x", "domain extents must be positive");
    }
    if cfg.nx < 2 || cfg.ny < 2 {
        return bad("domain", "nx", "need at least 2 cells per direction");
    }
    if !(cfg.lambda2 > 0.0) {
        return bad("domain", "lambda2", "must be positive");
    }
    if !(cfg.n_i > 0.0) {
        return bad("doping", "n_i", "must be positive");
    }
    for (key, f) in [("n", &cfg.n0), ("p", &cfg.p0), ("d", &cfg.d0)] {
        if !(f.min() >= 0.0) {
            return bad("initial", key, "initial densities must be nonnegative");
        }
    }
    if cfg.k_trunc.is_some_and(|k| !(k > 0.0)) {
        return bad("solver", "k_trunc", "must be positive");
    }
    if !(cfg.gummel_tol > 0.0) || cfg.gummel_max_iter == 0 {
        return bad("solver", "gummel_tol", "need a positive tolerance and at least one iteration");
    }
    if cfg.dt.is_some_and(|v| !(v > 0.0)) {
        return bad("solver", "dt", "must be positive");
    }
    Ok(())
}

pub fn load_device_config(path: &Path) -> Result<DeviceConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_device_config(&text)
}
