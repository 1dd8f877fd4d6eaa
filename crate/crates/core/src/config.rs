//! Flat key=value experiment configuration.
//!
//! One key per line, `#` starts a comment, unknown and duplicate keys are
//! errors, and every parse or validation error carries file:line. The
//! resolved configuration (defaults filled in) is what the CLI writes as
//! the run manifest, and a manifest is itself a valid config file.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exponents::ProblemParams;
use crate::grid::{build_grid, WeightCase};
use crate::regimes::DataShape;
use crate::solver::SolveControls;

/// Initial data shape selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Zero,
    Gaussian,
    PowerTail,
}

impl std::fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeKind::Zero => write!(f, "zero"),
            ShapeKind::Gaussian => write!(f, "gaussian"),
            ShapeKind::PowerTail => write!(f, "powertail"),
        }
    }
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(ShapeKind::Zero),
            "gaussian" => Ok(ShapeKind::Gaussian),
            "powertail" => Ok(ShapeKind::PowerTail),
            other => Err(format!(
                "unknown shape `{other}` (expected zero, gaussian, or powertail)"
            )),
        }
    }
}

/// Every key the config format accepts, in manifest order.
const KNOWN_KEYS: &[&str] = &[
    // problem
    "p",
    "q",
    "r",
    "s",
    "alpha",
    "case",
    "dim",
    // grid
    "half_width",
    "cells",
    // solver
    "t_max",
    "dt_init",
    "dt_max",
    "dt_min_factor",
    "blowup_factor",
    "sample_ratio",
    "fixed_dt",
    "snapshots",
    "dump_fields",
    // data
    "shape",
    "shape_width",
    "shape_cap",
    "shape_cutoff",
    "scale",
    "scale_v",
    // kernel probe
    "probe_t_min",
    "probe_t_max",
    "probe_points",
    "probe_steps",
    // bounded-quantity series
    "series_steps",
    // picard
    "picard_t",
    "picard_slices",
    "picard_iters",
    "picard_tol",
    "approx_n",
    // smallness search
    "search_scale_init",
    "search_max_doublings",
    "search_bisections",
    // sweep
    "sweep_p",
    "sweep_q",
    "sweep_scales",
    "crit_margin",
    "curve_points",
];

/// Fully resolved experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub r: f64,
    pub s: f64,
    pub alpha: f64,
    pub case: WeightCase,
    pub dim: usize,

    pub half_width: f64,
    pub cells: usize,

    pub t_max: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub dt_min_factor: f64,
    pub blowup_factor: f64,
    pub sample_ratio: f64,
    pub fixed_dt: bool,
    pub snapshots: bool,
    pub dump_fields: bool,

    pub shape: ShapeKind,
    pub shape_width: f64,
    pub shape_cap: f64,
    pub shape_cutoff: f64,
    pub scale: f64,
    pub scale_v: f64,

    pub probe_t_min: f64,
    pub probe_t_max: f64,
    pub probe_points: usize,
    pub probe_steps: usize,

    pub series_steps: usize,

    pub picard_t: f64,
    pub picard_slices: usize,
    pub picard_iters: usize,
    pub picard_tol: f64,
    pub approx_n: u32,

    pub search_scale_init: f64,
    pub search_max_doublings: u32,
    pub search_bisections: u32,

    pub sweep_p: Vec<f64>,
    pub sweep_q: Vec<f64>,
    pub sweep_scales: Vec<f64>,
    pub crit_margin: f64,
    pub curve_points: usize,
}

struct RawConfig {
    path: String,
    /// (key, value, line), in file order.
    entries: Vec<(String, String, usize)>,
}

impl RawConfig {
    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn line_of(&self, key: &str) -> usize {
        self.get(key).map(|(_, l)| l).unwrap_or(0)
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<f64>()
                .map_err(|_| self.err(line, format!("key `{key}`: `{v}` is not a number"))),
        }
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| self.err(line, format!("key `{key}`: `{v}` is not a number"))),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<usize>()
                .map_err(|_| self.err(line, format!("key `{key}`: `{v}` is not a nonnegative integer"))),
        }
    }

    fn u32_or(&self, key: &str, default: u32) -> Result<u32> {
        match self.get(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<u32>()
                .map_err(|_| self.err(line, format!("key `{key}`: `{v}` is not a nonnegative integer"))),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(("true", _)) => Ok(true),
            Some(("false", _)) => Ok(false),
            Some((v, line)) => Err(self.err(line, format!("key `{key}`: `{v}` is not true/false"))),
        }
    }

    fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some((v, _)) if v.is_empty() => Ok(Vec::new()),
            Some((v, line)) => v
                .split(',')
                .map(|item| {
                    item.trim().parse::<f64>().map_err(|_| {
                        self.err(line, format!("key `{key}`: `{item}` is not a number"))
                    })
                })
                .collect(),
        }
    }
}

fn parse_raw(path_label: &str, text: &str) -> Result<RawConfig> {
    let mut raw = RawConfig {
        path: path_label.to_string(),
        entries: Vec::new(),
    };
    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match full_line.find('#') {
            Some(pos) => &full_line[..pos],
            None => full_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim().to_string(), v.trim().to_string()),
            None => {
                return Err(raw.err(line_no, format!("expected key=value, got `{line}`")));
            }
        };
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(raw.err(line_no, format!("unknown key `{key}`")));
        }
        if let Some((_, _, first)) = raw.entries.iter().find(|(k, _, _)| *k == key) {
            return Err(raw.err(
                line_no,
                format!("duplicate key `{key}` (first set at line {first})"),
            ));
        }
        raw.entries.push((key, value, line_no));
    }
    Ok(raw)
}

/// Parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    config_from_str(&path.display().to_string(), &text)
}

/// Same as `parse_config` from an in-memory string; `label` is used in
/// error messages in place of the file path.
pub fn config_from_str(label: &str, text: &str) -> Result<ExperimentConfig> {
    let raw = parse_raw(label, text)?;

    let case = match raw.get("case") {
        None => WeightCase::A,
        Some((v, line)) => v
            .parse::<WeightCase>()
            .map_err(|e| raw.err(line, e.to_string()))?,
    };
    let shape = match raw.get("shape") {
        None => ShapeKind::Gaussian,
        Some((v, line)) => v
            .parse::<ShapeKind>()
            .map_err(|e| raw.err(line, e))?,
    };

    let t_max = raw.f64_or("t_max", 10.0)?;
    let half_width = raw.f64_or("half_width", 20.0)?;
    let scale = raw.f64_or("scale", 1.0)?;
    let cfg = ExperimentConfig {
        p: raw.f64_opt("p")?,
        q: raw.f64_opt("q")?,
        r: raw.f64_or("r", 0.0)?,
        s: raw.f64_or("s", 0.0)?,
        alpha: raw.f64_or("alpha", 0.0)?,
        case,
        dim: raw.usize_or("dim", 1)?,
        half_width,
        cells: raw.usize_or("cells", 801)?,
        t_max,
        dt_init: raw.f64_or("dt_init", 1e-3)?,
        dt_max: raw.f64_or("dt_max", t_max / 100.0)?,
        dt_min_factor: raw.f64_or("dt_min_factor", 1e-12)?,
        blowup_factor: raw.f64_or("blowup_factor", 1e8)?,
        sample_ratio: raw.f64_or("sample_ratio", 10.0_f64.powf(1.0 / 16.0))?,
        fixed_dt: raw.bool_or("fixed_dt", false)?,
        snapshots: raw.bool_or("snapshots", false)?,
        dump_fields: raw.bool_or("dump_fields", false)?,
        shape,
        shape_width: raw.f64_or("shape_width", 1.0)?,
        shape_cap: raw.f64_or("shape_cap", 4.0)?,
        shape_cutoff: raw.f64_or("shape_cutoff", half_width / 2.0)?,
        scale,
        scale_v: raw.f64_or("scale_v", scale)?,
        probe_t_min: raw.f64_or("probe_t_min", 0.4)?,
        probe_t_max: raw.f64_or("probe_t_max", 4.0)?,
        probe_points: raw.usize_or("probe_points", 9)?,
        probe_steps: raw.usize_or("probe_steps", 256)?,
        series_steps: raw.usize_or("series_steps", 64)?,
        picard_t: raw.f64_or("picard_t", 0.25)?,
        picard_slices: raw.usize_or("picard_slices", 24)?,
        picard_iters: raw.usize_or("picard_iters", 30)?,
        picard_tol: raw.f64_or("picard_tol", 1e-9)?,
        approx_n: raw.u32_or("approx_n", 0)?,
        search_scale_init: raw.f64_or("search_scale_init", 1.0)?,
        search_max_doublings: raw.u32_or("search_max_doublings", 12)?,
        search_bisections: raw.u32_or("search_bisections", 4)?,
        sweep_p: raw.list_or("sweep_p", &[])?,
        sweep_q: raw.list_or("sweep_q", &[])?,
        sweep_scales: raw.list_or("sweep_scales", &[])?,
        crit_margin: raw.f64_or("crit_margin", 0.02)?,
        curve_points: raw.usize_or("curve_points", 200)?,
    };

    // Validate what is validatable at parse time, with line context.
    if let (Some(p), Some(q)) = (cfg.p, cfg.q) {
        if let Err(e) = ProblemParams::new(p, q, cfg.r, cfg.s, cfg.alpha, cfg.dim, cfg.case) {
            let msg = e.to_string();
            let culprit = ["alpha", "p", "q", "r", "s", "dim", "case"]
                .iter()
                .find(|k| msg.contains(*k))
                .copied()
                .unwrap_or("p");
            return Err(raw.err(raw.line_of(culprit), msg));
        }
    } else if cfg.alpha != 0.0 || raw.get("case").is_some() {
        // Weight admissibility can be checked even without p and q.
        if let Err(e) = crate::grid::validate_alpha(cfg.case, cfg.alpha, cfg.dim) {
            return Err(raw.err(raw.line_of("alpha"), e.to_string()));
        }
    }
    if let Err(e) = build_grid(cfg.dim, cfg.half_width, cfg.cells) {
        let culprit = if cfg.dim != 1 && cfg.dim != 2 {
            "dim"
        } else if !(cfg.half_width > 0.0) {
            "half_width"
        } else {
            "cells"
        };
        return Err(raw.err(raw.line_of(culprit), e.to_string()));
    }
    if !(cfg.t_max > 0.0 && cfg.t_max.is_finite()) {
        return Err(raw.err(raw.line_of("t_max"), "t_max must be positive and finite"));
    }
    if !(cfg.dt_init > 0.0 && cfg.dt_init < cfg.t_max) {
        return Err(raw.err(
            raw.line_of("dt_init"),
            format!("dt_init must lie in (0, t_max), got {}", cfg.dt_init),
        ));
    }
    if !(cfg.dt_max > 0.0) {
        return Err(raw.err(raw.line_of("dt_max"), "dt_max must be positive"));
    }
    if !(cfg.sample_ratio > 1.0) {
        return Err(raw.err(
            raw.line_of("sample_ratio"),
            "sample_ratio must exceed 1",
        ));
    }
    if !(cfg.probe_t_min > 0.0 && cfg.probe_t_max > cfg.probe_t_min) {
        return Err(raw.err(
            raw.line_of("probe_t_min"),
            "need 0 < probe_t_min < probe_t_max",
        ));
    }
    if cfg.scale < 0.0 || cfg.scale_v < 0.0 {
        return Err(raw.err(raw.line_of("scale"), "scales must be nonnegative"));
    }
    for (key, v) in [
        ("shape_width", cfg.shape_width),
        ("shape_cap", cfg.shape_cap),
        ("shape_cutoff", cfg.shape_cutoff),
    ] {
        if !(v > 0.0) {
            return Err(raw.err(raw.line_of(key), format!("{key} must be positive")));
        }
    }
    Ok(cfg)
}

fn fmt_value(v: f64) -> String {
    crate::output::fmt_f64(v)
}

impl ExperimentConfig {
    /// Problem parameters; errors when the config never set p and q.
    pub fn problem(&self) -> Result<ProblemParams> {
        match (self.p, self.q) {
            (Some(p), Some(q)) => {
                ProblemParams::new(p, q, self.r, self.s, self.alpha, self.dim, self.case)
            }
            _ => Err(Error::CliConfig(
                "this command needs the keys `p` and `q` in the config".into(),
            )),
        }
    }

    pub fn grid(&self) -> Result<std::sync::Arc<crate::grid::Grid>> {
        build_grid(self.dim, self.half_width, self.cells)
    }

    pub fn controls(&self) -> SolveControls {
        let mut c = SolveControls::new(self.t_max);
        c.dt_init = self.dt_init;
        c.dt_max = self.dt_max;
        c.dt_min_factor = self.dt_min_factor;
        c.blowup_factor = self.blowup_factor;
        c.sample_ratio = self.sample_ratio;
        c.fixed_dt = self.fixed_dt;
        c.store_snapshots = self.snapshots;
        c
    }

    pub fn data_shape(&self) -> DataShape {
        match self.shape {
            ShapeKind::Zero => DataShape::Zero,
            ShapeKind::Gaussian => DataShape::Gaussian {
                width: self.shape_width,
            },
            ShapeKind::PowerTail => DataShape::PowerTail {
                cap: self.shape_cap,
                cutoff: self.shape_cutoff,
            },
        }
    }

    /// All resolved key=value pairs in canonical order; this is the
    /// manifest body, and parsing it back reproduces this config.
    pub fn resolved_entries(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = Vec::new();
        if let Some(p) = self.p {
            out.push(("p", fmt_value(p)));
        }
        if let Some(q) = self.q {
            out.push(("q", fmt_value(q)));
        }
        out.push(("r", fmt_value(self.r)));
        out.push(("s", fmt_value(self.s)));
        out.push(("alpha", fmt_value(self.alpha)));
        out.push(("case", self.case.to_string()));
        out.push(("dim", self.dim.to_string()));
        out.push(("half_width", fmt_value(self.half_width)));
        out.push(("cells", self.cells.to_string()));
        out.push(("t_max", fmt_value(self.t_max)));
        out.push(("dt_init", fmt_value(self.dt_init)));
        out.push(("dt_max", fmt_value(self.dt_max)));
        out.push(("dt_min_factor", fmt_value(self.dt_min_factor)));
        out.push(("blowup_factor", fmt_value(self.blowup_factor)));
        out.push(("sample_ratio", fmt_value(self.sample_ratio)));
        out.push(("fixed_dt", self.fixed_dt.to_string()));
        out.push(("snapshots", self.snapshots.to_string()));
        out.push(("dump_fields", self.dump_fields.to_string()));
        out.push(("shape", self.shape.to_string()));
        out.push(("shape_width", fmt_value(self.shape_width)));
        out.push(("shape_cap", fmt_value(self.shape_cap)));
        out.push(("shape_cutoff", fmt_value(self.shape_cutoff)));
        out.push(("scale", fmt_value(self.scale)));
        out.push(("scale_v", fmt_value(self.scale_v)));
        out.push(("probe_t_min", fmt_value(self.probe_t_min)));
        out.push(("probe_t_max", fmt_value(self.probe_t_max)));
        out.push(("probe_points", self.probe_points.to_string()));
        out.push(("probe_steps", self.probe_steps.to_string()));
        out.push(("series_steps", self.series_steps.to_string()));
        out.push(("picard_t", fmt_value(self.picard_t)));
        out.push(("picard_slices", self.picard_slices.to_string()));
        out.push(("picard_iters", self.picard_iters.to_string()));
        out.push(("picard_tol", fmt_value(self.picard_tol)));
        out.push(("approx_n", self.approx_n.to_string()));
        out.push(("search_scale_init", fmt_value(self.search_scale_init)));
        out.push(("search_max_doublings", self.search_max_doublings.to_string()));
        out.push(("search_bisections", self.search_bisections.to_string()));
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| fmt_value(*x))
                .collect::<Vec<_>>()
                .join(",")
        };
        out.push(("sweep_p", list(&self.sweep_p)));
        out.push(("sweep_q", list(&self.sweep_q)));
        out.push(("sweep_scales", list(&self.sweep_scales)));
        out.push(("crit_margin", fmt_value(self.crit_margin)));
        out.push(("curve_points", self.curve_points.to_string()));
        out
    }
}
