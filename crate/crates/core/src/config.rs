//! Link configuration: a flat `key = value unit` text format.
//!
//! ```text
//! # transmitter
//! w_z           = 8 cm
//! sigma_theta_e = 50 urad
//! B_lambda      = 1e-5 W/m^2/sr/nm
//! mu_t          = 0.5
//! ```
//!
//! Keys are case-insensitive. Dimensioned fields require a unit suffix, and
//! unknown or repeated keys are rejected. Values are stored in SI units except
//! for the filter bandwidth (nm) and the spectral radiance (W/m^2/sr/nm).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::CaptureMode;
use crate::beam::{beam_radius, BeamGeometry};
use crate::channel::{fov_geometry, EnergyConvention};
use crate::error::{Error, Result};

/// Environment variable naming a default configuration file.
pub const CONFIG_ENV: &str = "QLINK_CONFIG";

/// Complete parameter set of a link evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub lz: f64,
    pub ra: f64,
    pub mu_t: f64,
    /// Direct atmospheric transmittance; wins over `alpha_a` when both are set.
    pub eta_atm: Option<f64>,
    pub alpha_a: Option<f64>,
    pub mu_d: f64,
    pub t_qs: f64,
    pub r_f: f64,
    pub l_f: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub delta_lambda_nm: f64,
    pub ng: usize,
    /// Beam radius at the receiver.
    pub wz: f64,
    /// Transmitter waist; only used to derive `wz` when `w_z` is absent.
    pub w0: Option<f64>,
    pub sigma_theta_e: f64,
    pub sigma_aoa: f64,
    /// FoV half-angle override; `atan(r_f / L_f)` otherwise.
    pub theta_fov: Option<f64>,
    pub b_lambda: f64,
    /// Frozen background mean; bypasses the radiance model when set.
    pub mu_b: Option<f64>,
    pub energy_convention: EnergyConvention,
    pub capture_mode: CaptureMode,
    pub quad_tol: f64,
    pub mc_slots: u64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            lz: 1000.0,
            ra: 0.15,
            mu_t: 0.5,
            eta_atm: Some(0.4),
            alpha_a: None,
            mu_d: 0.6,
            t_qs: 1e-8,
            r_f: 5e-6,
            l_f: 0.15,
            alpha: 2.1,
            beta: 1.8,
            lambda: 1.55e-6,
            delta_lambda_nm: 1.0,
            ng: 10,
            wz: 0.10,
            w0: None,
            sigma_theta_e: 50e-6,
            sigma_aoa: 50e-6,
            theta_fov: None,
            b_lambda: 1e-6,
            mu_b: None,
            energy_convention: EnergyConvention::PlanckH,
            capture_mode: CaptureMode::Grid,
            quad_tol: 1e-12,
            mc_slots: 1_000_000,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Scale {
    Mul(f64),
    Div(f64),
}

impl Scale {
    fn apply(self, v: f64) -> f64 {
        match self {
            Scale::Mul(s) => v * s,
            Scale::Div(s) => v / s,
        }
    }
}

type Units = &'static [(&'static str, Scale)];

const LENGTH: Units = &[
    ("m", Scale::Mul(1.0)),
    ("km", Scale::Mul(1e3)),
    ("cm", Scale::Div(1e2)),
    ("mm", Scale::Div(1e3)),
    ("um", Scale::Div(1e6)),
    ("µm", Scale::Div(1e6)),
    ("nm", Scale::Div(1e9)),
];
const ANGLE: Units = &[
    ("rad", Scale::Mul(1.0)),
    ("mrad", Scale::Div(1e3)),
    ("urad", Scale::Div(1e6)),
    ("µrad", Scale::Div(1e6)),
];
const TIME: Units = &[
    ("s", Scale::Mul(1.0)),
    ("ms", Scale::Div(1e3)),
    ("us", Scale::Div(1e6)),
    ("µs", Scale::Div(1e6)),
    ("ns", Scale::Div(1e9)),
    ("ps", Scale::Div(1e12)),
];
const BANDWIDTH: Units = &[("nm", Scale::Mul(1.0)), ("pm", Scale::Div(1e3)), ("um", Scale::Mul(1e3))];
const RADIANCE: Units = &[
    ("W/m^2/sr/nm", Scale::Mul(1.0)),
    ("W/m2/sr/nm", Scale::Mul(1.0)),
    ("W/m^2/sr/um", Scale::Div(1e3)),
];
const ATTENUATION: Units = &[
    ("1/m", Scale::Mul(1.0)),
    ("1/km", Scale::Div(1e3)),
    ("dB/km", Scale::Mul(std::f64::consts::LN_10 / 1e4)),
];

#[derive(Debug, Clone, Copy)]
enum Kind {
    Quantity(Units),
    Number,
    Integer,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
struct Field {
    key: &'static str,
    kind: Kind,
    min: f64,
    max: f64,
}

const fn q(key: &'static str, units: Units, min: f64, max: f64) -> Field {
    Field { key, kind: Kind::Quantity(units), min, max }
}
const fn n(key: &'static str, min: f64, max: f64) -> Field {
    Field { key, kind: Kind::Number, min, max }
}

const FIELDS: &[Field] = &[
    q("l_z", LENGTH, 100.0, 1e4),
    q("r_a", LENGTH, 0.015, 1.5),
    n("mu_t", 0.05, 5.0),
    n("eta_atm", 0.04, 1.0),
    q("alpha_a", ATTENUATION, 0.0, 1e-2),
    n("mu_d", 0.06, 1.0),
    q("t_qs", TIME, 1e-9, 1e-7),
    q("r_f", LENGTH, 5e-7, 5e-5),
    q("l_f", LENGTH, 0.015, 1.5),
    n("alpha", 0.21, 21.0),
    n("beta", 0.18, 18.0),
    q("lambda", LENGTH, 1.55e-7, 1.55e-5),
    q("delta_lambda", BANDWIDTH, 0.1, 10.0),
    Field { key: "n_g", kind: Kind::Integer, min: 2.0, max: 1000.0 },
    q("w_z", LENGTH, 5e-3, 10.0),
    q("w_0", LENGTH, 1e-4, 10.0),
    q("sigma_theta_e", ANGLE, 5e-6, 2e-2),
    q("sigma_aoa", ANGLE, 5e-6, 2e-3),
    q("theta_fov", ANGLE, 5e-7, 2e-3),
    q("b_lambda", RADIANCE, 0.0, 1e-3),
    n("mu_b", 0.0, 10.0),
    Field { key: "energy_convention", kind: Kind::Choice(&["planck_h", "planck_hbar"]), min: 0.0, max: 0.0 },
    Field { key: "capture_mode", kind: Kind::Choice(&["grid", "exact", "classical"]), min: 0.0, max: 0.0 },
    n("quad_tol", 1e-15, 1e-3),
    Field { key: "mc_slots", kind: Kind::Integer, min: 1.0, max: 1e10 },
    Field { key: "seed", kind: Kind::Integer, min: 0.0, max: u64::MAX as f64 },
];

fn field(key: &str) -> Option<&'static Field> {
    FIELDS.iter().find(|f| f.key == key)
}

/// Canonical (lower-case) names of all configuration keys.
pub fn keys() -> impl Iterator<Item = &'static str> {
    FIELDS.iter().map(|f| f.key)
}

fn parse_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse { line, key: key.to_string(), message: message.into() }
}

/// Splits `"5cm"` or `"5 cm"` into the number and the unit text.
fn split_number(text: &str) -> Option<(f64, &str)> {
    let text = text.trim();
    let mut cut = text.len();
    while cut > 0 {
        if text.is_char_boundary(cut) {
            if let Ok(v) = text[..cut].trim_end().parse::<f64>() {
                return Some((v, text[cut..].trim()));
            }
        }
        cut -= 1;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Value {
    Real(f64),
    Int(u64),
    Choice(usize),
}

impl Value {
    fn as_f64(self) -> f64 {
        match self {
            Value::Real(v) => v,
            Value::Int(v) => v as f64,
            Value::Choice(i) => i as f64,
        }
    }
}

/// Parses the value text of `key` into internal units, without range checks.
pub fn parse_quantity(key: &str, text: &str) -> Result<f64> {
    parse_value(0, &key.to_ascii_lowercase(), text).map(Value::as_f64)
}

fn parse_value(line: usize, key: &str, text: &str) -> Result<Value> {
    let f = field(key).ok_or_else(|| parse_err(line, key, "unknown key"))?;
    let text = text.trim();
    match f.kind {
        Kind::Choice(opts) => opts
            .iter()
            .position(|o| o.eq_ignore_ascii_case(text))
            .map(Value::Choice)
            .ok_or_else(|| parse_err(line, key, format!("expected one of {}", opts.join(", ")))),
        Kind::Integer => text
            .parse()
            .map(Value::Int)
            .map_err(|_| parse_err(line, key, format!("`{text}` is not a non-negative integer"))),
        Kind::Number => {
            let (v, unit) =
                split_number(text).ok_or_else(|| parse_err(line, key, format!("`{text}` is not a number")))?;
            if !unit.is_empty() {
                return Err(parse_err(line, key, format!("dimensionless value takes no unit (got `{unit}`)")));
            }
            finite(line, key, v).map(Value::Real)
        }
        Kind::Quantity(units) => {
            let (v, unit) =
                split_number(text).ok_or_else(|| parse_err(line, key, format!("`{text}` is not a number")))?;
            let allowed = || units.iter().map(|u| u.0).collect::<Vec<_>>().join(", ");
            if unit.is_empty() {
                return Err(parse_err(line, key, format!("a unit is required ({})", allowed())));
            }
            let scale = units
                .iter()
                .find(|u| u.0 == unit)
                .map(|u| u.1)
                .ok_or_else(|| parse_err(line, key, format!("unknown unit `{unit}` (expected {})", allowed())))?;
            finite(line, key, scale.apply(v)).map(Value::Real)
        }
    }
}

fn finite(line: usize, key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, key, "value must be finite"))
    }
}

fn check_range(key: &str, value: f64) -> Result<()> {
    let f = field(key).expect("known key");
    if matches!(f.kind, Kind::Choice(_)) || key == "seed" || (value >= f.min && value <= f.max) {
        Ok(())
    } else {
        Err(Error::Range { key: key.to_string(), value, min: f.min, max: f.max })
    }
}

impl LinkConfig {
    /// Parses configuration text on top of the defaults and validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = LinkConfig::default();
        let mut seen = Vec::<String>::new();
        let mut explicit_wz = false;
        let mut explicit_eta = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| parse_err(line, body, "expected `key = value`"))?;
            let key = key.trim().to_ascii_lowercase();
            if seen.contains(&key) {
                return Err(parse_err(line, &key, "key given twice"));
            }
            let v = parse_value(line, &key, value)?;
            cfg.set_value(&key, v)?;
            explicit_wz |= key == "w_z";
            explicit_eta |= key == "eta_atm";
            seen.push(key);
        }
        if seen.iter().any(|k| k == "alpha_a") && !explicit_eta {
            cfg.eta_atm = None;
        }
        if let (Some(w0), false) = (cfg.w0, explicit_wz) {
            cfg.wz = beam_radius(w0, cfg.lambda, cfg.lz)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Applies one `key = value` override given as text.
    pub fn apply(&mut self, key: &str, text: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        let v = parse_value(0, &key, text)?;
        check_range(&key, v.as_f64())?;
        self.set_value(&key, v)?;
        match key.as_str() {
            "alpha_a" => self.eta_atm = None,
            "w_0" => self.wz = beam_radius(v.as_f64(), self.lambda, self.lz)?,
            "w_z" => self.w0 = None,
            _ => {}
        }
        Ok(())
    }

    /// Sets a real-valued field from its internal-unit value.
    pub fn set(&mut self, key: &str, v: f64) -> Result<()> {
        match field(key).map(|f| f.kind) {
            Some(Kind::Quantity(_) | Kind::Number) => self.set_value(key, Value::Real(v)),
            Some(_) => Err(Error::domain(format!("`{key}` is not a real-valued field"))),
            None => Err(Error::Parse { line: 0, key: key.to_string(), message: "unknown key".into() }),
        }
    }

    fn set_value(&mut self, key: &str, value: Value) -> Result<()> {
        let v = value.as_f64();
        let int = match value {
            Value::Int(i) => i,
            _ => 0,
        };
        let choice = match value {
            Value::Choice(i) => i,
            _ => 0,
        };
        match key {
            "l_z" => self.lz = v,
            "r_a" => self.ra = v,
            "mu_t" => self.mu_t = v,
            "eta_atm" => self.eta_atm = Some(v),
            "alpha_a" => self.alpha_a = Some(v),
            "mu_d" => self.mu_d = v,
            "t_qs" => self.t_qs = v,
            "r_f" => self.r_f = v,
            "l_f" => self.l_f = v,
            "alpha" => self.alpha = v,
            "beta" => self.beta = v,
            "lambda" => self.lambda = v,
            "delta_lambda" => self.delta_lambda_nm = v,
            "n_g" => self.ng = int as usize,
            "w_z" => self.wz = v,
            "w_0" => self.w0 = Some(v),
            "sigma_theta_e" => self.sigma_theta_e = v,
            "sigma_aoa" => self.sigma_aoa = v,
            "theta_fov" => self.theta_fov = Some(v),
            "b_lambda" => self.b_lambda = v,
            "mu_b" => self.mu_b = Some(v),
            "energy_convention" => {
                self.energy_convention =
                    if choice == 0 { EnergyConvention::PlanckH } else { EnergyConvention::PlanckHbar }
            }
            "capture_mode" => {
                self.capture_mode = match choice {
                    0 => CaptureMode::Grid,
                    1 => CaptureMode::Exact,
                    _ => CaptureMode::Classical,
                }
            }
            "quad_tol" => self.quad_tol = v,
            "mc_slots" => self.mc_slots = int,
            "seed" => self.seed = int,
            _ => return Err(Error::Parse { line: 0, key: key.to_string(), message: "unknown key".into() }),
        }
        Ok(())
    }

    fn numeric_fields(&self) -> Vec<(&'static str, f64)> {
        let mut v = vec![
            ("l_z", self.lz),
            ("r_a", self.ra),
            ("mu_t", self.mu_t),
            ("mu_d", self.mu_d),
            ("t_qs", self.t_qs),
            ("r_f", self.r_f),
            ("l_f", self.l_f),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("delta_lambda", self.delta_lambda_nm),
            ("n_g", self.ng as f64),
            ("w_z", self.wz),
            ("sigma_theta_e", self.sigma_theta_e),
            ("sigma_aoa", self.sigma_aoa),
            ("b_lambda", self.b_lambda),
            ("quad_tol", self.quad_tol),
            ("mc_slots", self.mc_slots as f64),
        ];
        let optional = [
            ("eta_atm", self.eta_atm),
            ("alpha_a", self.alpha_a),
            ("w_0", self.w0),
            ("theta_fov", self.theta_fov),
            ("mu_b", self.mu_b),
        ];
        v.extend(optional.iter().filter_map(|&(k, x)| x.map(|x| (k, x))));
        v
    }

    /// Checks every field against its accepted interval.
    pub fn validate(&self) -> Result<()> {
        for (key, value) in self.numeric_fields() {
            check_range(key, value)?;
        }
        if self.eta_atm.is_none() && self.alpha_a.is_none() {
            return Err(Error::domain("one of eta_atm or alpha_a must be given"));
        }
        Ok(())
    }

    /// Atmospheric transmittance over the link.
    pub fn eta_atm(&self) -> Result<f64> {
        crate::channel::ChannelParams {
            eta_atm: self.eta_atm,
            alpha_a: self.alpha_a,
            turbulence: crate::channel::Turbulence::new(self.alpha, self.beta)?,
            b_lambda: self.b_lambda,
        }
        .transmittance(self.lz)
    }

    /// FoV half-angle, from the override or from the fibre optics.
    pub fn theta_fov(&self) -> f64 {
        self.theta_fov.unwrap_or_else(|| fov_geometry(self.r_f, self.l_f).0)
    }

    pub fn beam(&self) -> Result<BeamGeometry> {
        BeamGeometry::from_receiver_radius(self.wz, self.lambda, self.lz)
    }

    /// Serialises to the text format; `parse(dump())` restores every value.
    pub fn dump(&self) -> String {
        fn num(x: f64) -> String {
            format!("{x:e}")
        }
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k:<17} = {v}");
        };
        line("L_z", format!("{} m", num(self.lz)));
        line("r_a", format!("{} m", num(self.ra)));
        line("mu_t", num(self.mu_t));
        if let Some(e) = self.eta_atm {
            line("eta_atm", num(e));
        }
        if let Some(a) = self.alpha_a {
            line("alpha_a", format!("{} 1/m", num(a)));
        }
        line("mu_d", num(self.mu_d));
        line("T_qs", format!("{} s", num(self.t_qs)));
        line("r_f", format!("{} m", num(self.r_f)));
        line("L_f", format!("{} m", num(self.l_f)));
        line("alpha", num(self.alpha));
        line("beta", num(self.beta));
        line("lambda", format!("{} m", num(self.lambda)));
        line("delta_lambda", format!("{} nm", num(self.delta_lambda_nm)));
        line("N_g", self.ng.to_string());
        line("w_z", format!("{} m", num(self.wz)));
        if let Some(w0) = self.w0 {
            line("w_0", format!("{} m", num(w0)));
        }
        line("sigma_theta_e", format!("{} rad", num(self.sigma_theta_e)));
        line("sigma_aoa", format!("{} rad", num(self.sigma_aoa)));
        if let Some(t) = self.theta_fov {
            line("theta_fov", format!("{} rad", num(t)));
        }
        line("B_lambda", format!("{} W/m^2/sr/nm", num(self.b_lambda)));
        if let Some(m) = self.mu_b {
            line("mu_b", num(m));
        }
        line("energy_convention", self.energy_convention.as_str().to_string());
        line("capture_mode", self.capture_mode.as_str().to_string());
        line("quad_tol", num(self.quad_tol));
        line("mc_slots", self.mc_slots.to_string());
        line("seed", self.seed.to_string());
        s
    }
}
