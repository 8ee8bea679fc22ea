//! Scenario configuration and the flat key=value config format.
//!
//! Files are line-based: `[section]` headers, `key = value` pairs, `#`
//! comments. Values may carry a unit suffix (`30 dBm`, `8 W`, `3 ohm`);
//! units are validated but never rescaled. Parse errors carry the line
//! number and field.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::LedLayout;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

/// Which precoder design to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Cccp,
    CccpSdr,
    Zf,
    RandomZf,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algorithm::Cccp => "cccp",
            Algorithm::CccpSdr => "cccp_sdr",
            Algorithm::Zf => "zf",
            Algorithm::RandomZf => "random_zf",
        };
        f.write_str(s)
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cccp" => Ok(Algorithm::Cccp),
            "cccp_sdr" => Ok(Algorithm::CccpSdr),
            "zf" => Ok(Algorithm::Zf),
            "random_zf" => Ok(Algorithm::RandomZf),
            other => Err(format!(
                "unknown algorithm {other:?} (expected cccp, cccp_sdr, zf, random_zf)"
            )),
        }
    }
}

/// How the iterative designs are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitStrategy {
    Zf,
    Random,
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitStrategy::Zf => "zf",
            InitStrategy::Random => "random",
        })
    }
}

impl FromStr for InitStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zf" => Ok(InitStrategy::Zf),
            "random" => Ok(InitStrategy::Random),
            other => Err(format!("unknown init {other:?} (expected zf, random)")),
        }
    }
}

/// Iteration caps and tolerances of the nested loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub solver_tol: f64,
    pub lmax1: usize,
    pub lmax2: usize,
    pub lmax3: usize,
    pub lmax4: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps1: 1e-4,
            eps2: 1e-4,
            eps3: 1e-4,
            eps4: 1e-4,
            solver_tol: 1e-6,
            lmax1: 30,
            lmax2: 100,
            lmax3: 100,
            lmax4: 100,
        }
    }
}

/// Sweep axis for the experiment front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PowerDbm,
    Threshold,
    Circuitry,
    Layout,
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "power_dbm" | "power" => Ok(SweepAxis::PowerDbm),
            "threshold" => Ok(SweepAxis::Threshold),
            "circuitry" => Ok(SweepAxis::Circuitry),
            "layout" => Ok(SweepAxis::Layout),
            other => Err(format!(
                "unknown axis {other:?} (expected power_dbm, threshold, circuitry, layout)"
            )),
        }
    }
}

/// A sweep request: the axis and its grid. Layout sweeps carry
/// (layout, users) pairs instead of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub layouts: Vec<(LedLayout, usize)>,
}

/// Full experiment scenario; defaults reproduce the canonical room setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub layout: LedLayout,
    pub users: usize,
    pub room_dims: [f64; 3],
    pub receiver_height: f64,
    /// Average emitted optical power per luminary in dBm.
    pub power_dbm: f64,
    /// Per-user secrecy thresholds; a single entry broadcasts to all users.
    pub lambda: Vec<f64>,
    pub circuitry_power: f64,
    pub led_voltage: f64,
    pub equiv_resistance: f64,
    /// Maximum drive current; `None` means symmetric headroom 2·I^DC.
    pub i_max: Option<f64>,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub n_realizations: usize,
    pub random_zf_samples: usize,
    pub entropy_samples: usize,
    pub tolerances: Tolerances,
    pub sweep: Option<SweepSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            layout: LedLayout::Grid2x2,
            users: 3,
            room_dims: [5.0, 5.0, 3.0],
            receiver_height: 0.5,
            power_dbm: 30.0,
            lambda: vec![0.5],
            circuitry_power: 8.0,
            led_voltage: 3.0,
            equiv_resistance: 3.0,
            i_max: None,
            algorithm: Algorithm::CccpSdr,
            seed: 1,
            n_realizations: 200,
            random_zf_samples: 1000,
            entropy_samples: 1_000_000,
            tolerances: Tolerances::default(),
            sweep: None,
        }
    }
}

impl ScenarioConfig {
    /// Thresholds broadcast to `k` users.
    pub fn lambda_vector(&self, k: usize) -> nalgebra::DVector<f64> {
        if self.lambda.len() == 1 {
            nalgebra::DVector::from_element(k, self.lambda[0])
        } else {
            assert_eq!(self.lambda.len(), k, "threshold count must match users");
            nalgebra::DVector::from_iterator(k, self.lambda.iter().cloned())
        }
    }

    /// Parses the flat config text into a scenario.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut section = String::from("scenario");
        let mut sweep_axis: Option<SweepAxis> = None;
        let mut sweep_values: Option<String> = None;
        let mut sweep_line = 0usize;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(im_err(line_no, "unclosed section header"))?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(im_err(line_no, "expected key = value"))?;
            let key = key.trim();
            let value = value.trim();
            let field = if section == "scenario" {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            let f = |msg: String| ConfigError::Syntax {
                line: line_no,
                message: format!("field `{field}`: {msg}"),
            };

            match field.as_str() {
                "layout" => {
                    cfg.layout = parse_layout(value).map_err(f)?;
                }
                "users" => cfg.users = value.parse().map_err(|_| f("expected an integer".into()))?,
                "room" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(f("expected three dimensions".into()));
                    }
                    for (i, p) in parts.iter().enumerate() {
                        cfg.room_dims[i] =
                            p.parse().map_err(|_| f(format!("bad dimension {p:?}")))?;
                    }
                }
                "receiver_height" => {
                    cfg.receiver_height = quantity(value, &["m"]).map_err(f)?;
                }
                "power" | "power_dbm" => cfg.power_dbm = quantity(value, &["dBm"]).map_err(f)?,
                "threshold" | "lambda" => {
                    cfg.lambda = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| f("expected a number or comma list".into()))?;
                    if cfg.lambda.is_empty() {
                        return Err(f("needs at least one threshold".into()));
                    }
                }
                "circuitry" | "circuitry_power" => {
                    cfg.circuitry_power = quantity(value, &["W"]).map_err(f)?
                }
                "led_voltage" => cfg.led_voltage = quantity(value, &["V"]).map_err(f)?,
                "xi" | "equiv_resistance" => {
                    cfg.equiv_resistance = quantity(value, &["ohm", "Ohm"]).map_err(f)?
                }
                "i_max" => {
                    if value == "auto" {
                        cfg.i_max = None;
                    } else {
                        cfg.i_max = Some(quantity(value, &["A"]).map_err(f)?);
                    }
                }
                "algorithm" | "algo" => {
                    cfg.algorithm = value.parse().map_err(f)?;
                }
                "seed" => cfg.seed = value.parse().map_err(|_| f("expected an integer".into()))?,
                "realizations" | "n_realizations" => {
                    cfg.n_realizations =
                        value.parse().map_err(|_| f("expected an integer".into()))?
                }
                "random_zf_samples" => {
                    cfg.random_zf_samples =
                        value.parse().map_err(|_| f("expected an integer".into()))?
                }
                "entropy_samples" => {
                    cfg.entropy_samples =
                        value.parse().map_err(|_| f("expected an integer".into()))?
                }
                "tolerances.eps1" => cfg.tolerances.eps1 = num(value).map_err(f)?,
                "tolerances.eps2" => cfg.tolerances.eps2 = num(value).map_err(f)?,
                "tolerances.eps3" => cfg.tolerances.eps3 = num(value).map_err(f)?,
                "tolerances.eps4" => cfg.tolerances.eps4 = num(value).map_err(f)?,
                "tolerances.solver_tol" => cfg.tolerances.solver_tol = num(value).map_err(f)?,
                "tolerances.lmax1" => {
                    cfg.tolerances.lmax1 = value.parse().map_err(|_| f("expected integer".into()))?
                }
                "tolerances.lmax2" => {
                    cfg.tolerances.lmax2 = value.parse().map_err(|_| f("expected integer".into()))?
                }
                "tolerances.lmax3" => {
                    cfg.tolerances.lmax3 = value.parse().map_err(|_| f("expected integer".into()))?
                }
                "tolerances.lmax4" => {
                    cfg.tolerances.lmax4 = value.parse().map_err(|_| f("expected integer".into()))?
                }
                "sweep.axis" => {
                    sweep_axis = Some(value.parse().map_err(f)?);
                    sweep_line = line_no;
                }
                "sweep.values" => {
                    sweep_values = Some(value.to_string());
                    sweep_line = line_no;
                }
                other => {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        message: format!("unknown field `{other}`"),
                    })
                }
            }
        }

        match (sweep_axis, sweep_values) {
            (None, None) => {}
            (Some(axis), Some(values)) => {
                cfg.sweep = Some(parse_sweep(axis, &values).map_err(|m| ConfigError::Syntax {
                    line: sweep_line,
                    message: m,
                })?);
            }
            _ => {
                return Err(ConfigError::Syntax {
                    line: sweep_line,
                    message: "sweep needs both `axis` and `values`".into(),
                })
            }
        }

        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let field = |field: &str, message: &str| {
            Err(ConfigError::Field {
                field: field.into(),
                message: message.into(),
            })
        };
        if self.users == 0 {
            return field("users", "must be at least 1");
        }
        if self.users > self.layout.n_luminaries() {
            return field("users", "cannot exceed the luminary count of the layout");
        }
        if self.lambda.iter().any(|&l| l < 0.0) {
            return field("threshold", "thresholds must be nonnegative");
        }
        if self.lambda.len() != 1 && self.lambda.len() != self.users {
            return field("threshold", "give one value or one per user");
        }
        if self.n_realizations == 0 {
            return field("realizations", "must be at least 1");
        }
        if self.room_dims.iter().any(|&d| d <= 0.0) {
            return field("room", "dimensions must be positive");
        }
        Ok(())
    }

    /// Key/value echo of the parsed scenario for the run manifest.
    pub fn to_manifest_map(&self) -> BTreeMap<String, serde_json::Value> {
        use serde_json::{json, Value};
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("layout", json!(layout_name(self.layout)));
        put("users", json!(self.users));
        put("room", json!(self.room_dims.to_vec()));
        put("receiver_height", json!(self.receiver_height));
        put("power_dbm", json!(self.power_dbm));
        put("threshold", json!(self.lambda));
        put("circuitry_power", json!(self.circuitry_power));
        put("led_voltage", json!(self.led_voltage));
        put("equiv_resistance", json!(self.equiv_resistance));
        put("i_max", json!(self.i_max));
        put("algorithm", json!(self.algorithm.to_string()));
        put("seed", json!(self.seed));
        put("realizations", json!(self.n_realizations));
        put("random_zf_samples", json!(self.random_zf_samples));
        put("entropy_samples", json!(self.entropy_samples));
        put(
            "tolerances",
            json!({
                "eps1": self.tolerances.eps1,
                "eps2": self.tolerances.eps2,
                "eps3": self.tolerances.eps3,
                "eps4": self.tolerances.eps4,
                "solver_tol": self.tolerances.solver_tol,
                "lmax1": self.tolerances.lmax1,
                "lmax2": self.tolerances.lmax2,
                "lmax3": self.tolerances.lmax3,
                "lmax4": self.tolerances.lmax4,
            }),
        );
        m
    }
}

fn im_err(line: usize, message: &str) -> impl FnOnce() -> ConfigError + '_ {
    move || ConfigError::Syntax {
        line,
        message: message.to_string(),
    }
}

fn num(value: &str) -> Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got {value:?}"))
}

/// Number with an optional validated unit suffix.
fn quantity(value: &str, units: &[&str]) -> Result<f64, String> {
    let mut it = value.split_whitespace();
    let number = it.next().ok_or_else(|| "empty value".to_string())?;
    let parsed = number
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got {number:?}"))?;
    if let Some(unit) = it.next() {
        if !units.contains(&unit) {
            return Err(format!("unexpected unit {unit:?} (expected one of {units:?})"));
        }
    }
    if it.next().is_some() {
        return Err("trailing garbage after unit".into());
    }
    Ok(parsed)
}

pub fn parse_layout(value: &str) -> Result<LedLayout, String> {
    match value {
        "2x2" => Ok(LedLayout::Grid2x2),
        "2x3" => Ok(LedLayout::Grid2x3),
        "3x3" => Ok(LedLayout::Grid3x3),
        other => Err(format!("unknown layout {other:?} (expected 2x2, 2x3, 3x3)")),
    }
}

pub fn layout_name(layout: LedLayout) -> &'static str {
    match layout {
        LedLayout::Grid2x2 => "2x2",
        LedLayout::Grid2x3 => "2x3",
        LedLayout::Grid3x3 => "3x3",
    }
}

fn parse_sweep(axis: SweepAxis, values: &str) -> Result<SweepSpec, String> {
    let mut spec = SweepSpec {
        axis,
        values: Vec::new(),
        layouts: Vec::new(),
    };
    if axis == SweepAxis::Layout {
        // comma list of layout/users pairs, e.g. 2x2/3,2x3/4,3x3/6
        for part in values.split(',') {
            let (l, u) = part
                .trim()
                .split_once('/')
                .ok_or_else(|| format!("expected layout/users, got {part:?}"))?;
            let layout = parse_layout(l.trim())?;
            let users: usize = u
                .trim()
                .parse()
                .map_err(|_| format!("bad user count {u:?}"))?;
            spec.layouts.push((layout, users));
        }
        if spec.layouts.is_empty() {
            return Err("empty layout sweep".into());
        }
        return Ok(spec);
    }
    // range lo:hi:step or comma list
    if let Some((lo, rest)) = values.split_once(':') {
        let (hi, step) = rest
            .split_once(':')
            .ok_or_else(|| "range needs lo:hi:step".to_string())?;
        let lo: f64 = lo.trim().parse().map_err(|_| "bad range start".to_string())?;
        let hi: f64 = hi.trim().parse().map_err(|_| "bad range end".to_string())?;
        let step: f64 = step.trim().parse().map_err(|_| "bad range step".to_string())?;
        if step <= 0.0 || hi < lo {
            return Err("range must ascend with positive step".into());
        }
        let mut x = lo;
        while x <= hi + 1e-9 {
            spec.values.push(x);
            x += step;
        }
    } else {
        for part in values.split(',') {
            spec.values.push(
                part.trim()
                    .parse()
                    .map_err(|_| format!("bad value {part:?}"))?,
            );
        }
    }
    if spec.values.is_empty() {
        return Err("empty sweep".into());
    }
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
