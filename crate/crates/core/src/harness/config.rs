//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! code = gross
//! protocol = both
//! noise.p_read = 0.02
//! noise.p_id_l.flip = 0.006
//! sweep.axis1 = noise.p_back:0:0.05:5
//! sweep.axis2 = noise.p_id_l:0.005,0.006
//! sweep.mode = coupled
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::circuit::{parse_order, Protocol, ScheduleSpec};
use crate::code::{build_bb_code, gross_code, load_css_code, parse_polynomial, steane_code, CssCode};
use crate::decoder::{BpConfig, BpVariant};
use crate::sim::NoiseParams;

use super::HarnessError;

pub type RawConfig = BTreeMap<String, String>;

/// Parses `key = value` lines; later keys override earlier ones.
pub fn parse_config_text(text: &str) -> Result<RawConfig, HarnessError> {
    let mut out = RawConfig::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(HarnessError::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Applies a `key=value` override.
pub fn apply_override(raw: &mut RawConfig, kv: &str) -> Result<(), HarnessError> {
    let (k, v) = kv.split_once('=').ok_or_else(|| HarnessError::Config(format!("override `{kv}` is not key=value")))?;
    raw.insert(k.trim().to_string(), v.trim().to_string());
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolSelection {
    Plain,
    Flip,
    Both,
}

impl ProtocolSelection {
    pub fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolSelection::Plain => vec![Protocol::Plain],
            ProtocolSelection::Flip => vec![Protocol::Flip],
            ProtocolSelection::Both => vec![Protocol::Plain, Protocol::Flip],
        }
    }
}

impl fmt::Display for ProtocolSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolSelection::Plain => "plain",
            ProtocolSelection::Flip => "flip",
            ProtocolSelection::Both => "both",
        })
    }
}

impl FromStr for ProtocolSelection {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(Self::Plain),
            "flip" => Ok(Self::Flip),
            "both" => Ok(Self::Both),
            other => Err(HarnessError::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CodeSpec {
    Gross,
    Steane,
    Bb { l: usize, m: usize, a: String, b: String },
    File(PathBuf),
}

impl CodeSpec {
    pub fn build(&self) -> Result<CssCode, HarnessError> {
        Ok(match self {
            CodeSpec::Gross => gross_code(),
            CodeSpec::Steane => steane_code(),
            CodeSpec::Bb { l, m, a, b } => {
                let a = parse_polynomial(a).map_err(HarnessError::Config)?;
                let b = parse_polynomial(b).map_err(HarnessError::Config)?;
                build_bb_code(*l, *m, &a, &b)?
            }
            CodeSpec::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
                load_css_code(&text)?
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialLeak {
    /// Pilot estimate of the steady leaked fraction.
    Auto,
    Zero,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    Coupled,
    Crossed,
}

/// A swept parameter: `noise.<name>` or `n_cycles`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub param: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    /// `name:start:stop:count` (inclusive, evenly spaced) or `name:v1,v2,...`.
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        let bad = |msg: &str| HarnessError::Config(format!("sweep axis `{s}`: {msg}"));
        let (param, rest) = s.split_once(':').ok_or_else(|| bad("expected name:values"))?;
        let param = param.trim().to_string();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(&format!("bad number `{}`", t.trim())));
        let parts: Vec<&str> = rest.split(':').collect();
        let values = match parts.as_slice() {
            [list] => list.split(',').filter(|t| !t.trim().is_empty()).map(num).collect::<Result<Vec<_>, _>>()?,
            [start, stop, count] => {
                let (a, b) = (num(start)?, num(stop)?);
                let n: usize = count.trim().parse().map_err(|_| bad("bad count"))?;
                match n {
                    0 => return Err(bad("count must be positive")),
                    1 => vec![a],
                    // Rounded to 12 significant digits so grid values print cleanly.
                    _ => (0..n)
                        .map(|i| round_sig(a + (b - a) * i as f64 / (n - 1) as f64))
                        .collect(),
                }
            }
            _ => return Err(bad("expected name:start:stop:count or name:v1,v2,...")),
        };
        if values.is_empty() {
            return Err(bad("no values"));
        }
        let axis = Self { param, values };
        axis.column_name()?;
        Ok(axis)
    }

    /// CSV column header: the noise parameter name or `n_cycles`.
    pub fn column_name(&self) -> Result<&str, HarnessError> {
        if self.param == "n_cycles" {
            return Ok("n_cycles");
        }
        match self.param.strip_prefix("noise.") {
            Some(name) if NoiseParams::zero().get(name).is_some() => Ok(name),
            _ => Err(HarnessError::Config(format!("cannot sweep `{}`", self.param))),
        }
    }

    fn to_text(&self) -> String {
        let vals: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        format!("{}:{}", self.param, vals.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub code: CodeSpec,
    pub schedule: Option<ScheduleSpec>,
    pub protocol: ProtocolSelection,
    pub noise: NoiseParams,
    pub p_id_l_plain: Option<f64>,
    pub p_id_l_flip: Option<f64>,
    pub n_cycles: usize,
    pub shots: usize,
    pub seed: u64,
    pub axes: Vec<SweepAxis>,
    pub sweep_mode: SweepMode,
    pub initial_leak: InitialLeak,
    pub pilot_shots: usize,
    pub pilot_cycles: Option<usize>,
    pub decoder: BpConfig,
    pub windows: Vec<usize>,
    pub output: Option<PathBuf>,
    pub threads: usize,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            code: CodeSpec::Gross,
            schedule: None,
            protocol: ProtocolSelection::Both,
            noise: NoiseParams::reference(),
            p_id_l_plain: None,
            p_id_l_flip: None,
            n_cycles: 12,
            shots: 5000,
            seed: 1,
            axes: Vec::new(),
            sweep_mode: SweepMode::Crossed,
            initial_leak: InitialLeak::Auto,
            pilot_shots: 200,
            pilot_cycles: None,
            decoder: BpConfig::default(),
            windows: vec![4, 8, 12, 16, 20, 24],
            output: None,
            threads: 0,
            timing: false,
        }
    }
}

fn round_sig(v: f64) -> f64 {
    format!("{v:.11e}").parse().unwrap_or(v)
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, HarnessError> {
    v.parse().map_err(|_| HarnessError::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, HarnessError> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(HarnessError::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, HarnessError> {
        let mut c = Self::default();
        let get = |k: &str| raw.get(k).map(String::as_str);

        let kind = get("code").unwrap_or("gross");
        c.code = match kind {
            "gross" => CodeSpec::Gross,
            "steane" => CodeSpec::Steane,
            "bb" => CodeSpec::Bb {
                l: parse_num("code.l", get("code.l").unwrap_or("12"))?,
                m: parse_num("code.m", get("code.m").unwrap_or("6"))?,
                a: get("code.a").unwrap_or("x^3 + y + y^2").to_string(),
                b: get("code.b").unwrap_or("y^3 + x + x^2").to_string(),
            },
            "file" => CodeSpec::File(PathBuf::from(
                get("code.file").ok_or_else(|| HarnessError::Config("`code = file` needs `code.file`".into()))?,
            )),
            other => return Err(HarnessError::Config(format!("unknown code `{other}`"))),
        };

        c.schedule = match get("schedule") {
            None | Some("default") => None,
            Some("sequential") => Some(ScheduleSpec::Sequential),
            Some("bb") => {
                let ScheduleSpec::Bb { x_order, z_order, x_offset, z_offset } = ScheduleSpec::bb_default() else {
                    unreachable!()
                };
                Some(ScheduleSpec::Bb {
                    x_order: match get("schedule.x_order") {
                        Some(s) => parse_order(s)?,
                        None => x_order,
                    },
                    z_order: match get("schedule.z_order") {
                        Some(s) => parse_order(s)?,
                        None => z_order,
                    },
                    x_offset: get("schedule.x_offset").map(|v| parse_num("schedule.x_offset", v)).transpose()?.unwrap_or(x_offset),
                    z_offset: get("schedule.z_offset").map(|v| parse_num("schedule.z_offset", v)).transpose()?.unwrap_or(z_offset),
                })
            }
            Some(other) => return Err(HarnessError::Config(format!("unknown schedule `{other}`"))),
        };
        if c.schedule.is_none() && raw.keys().any(|k| k.starts_with("schedule.")) {
            return Err(HarnessError::Config("schedule.* keys need `schedule = bb`".into()));
        }

        if let Some(v) = get("protocol") {
            c.protocol = v.parse()?;
        }
        if let Some(v) = get("noise.preset") {
            c.noise = match v {
                "reference" => NoiseParams::reference(),
                "zero" => NoiseParams::zero(),
                other => return Err(HarnessError::Config(format!("unknown noise preset `{other}`"))),
            };
        }
        for name in NoiseParams::NAMES {
            if let Some(v) = get(&format!("noise.{name}")) {
                c.noise.set(name, parse_num(name, v)?)?;
            }
        }
        c.p_id_l_plain = get("noise.p_id_l.plain").map(|v| parse_num("noise.p_id_l.plain", v)).transpose()?;
        c.p_id_l_flip = get("noise.p_id_l.flip").map(|v| parse_num("noise.p_id_l.flip", v)).transpose()?;

        if let Some(v) = get("n_cycles") {
            c.n_cycles = parse_num("n_cycles", v)?;
        }
        if let Some(v) = get("shots") {
            c.shots = parse_num("shots", v)?;
        }
        if let Some(v) = get("seed") {
            c.seed = parse_num("seed", v)?;
        }
        for key in ["sweep.axis1", "sweep.axis2"] {
            if let Some(v) = get(key) {
                c.axes.push(SweepAxis::parse(v)?);
            }
        }
        if get("sweep.axis2").is_some() && get("sweep.axis1").is_none() {
            return Err(HarnessError::Config("`sweep.axis2` without `sweep.axis1`".into()));
        }
        c.sweep_mode = match get("sweep.mode").unwrap_or("crossed") {
            "crossed" => SweepMode::Crossed,
            "coupled" => SweepMode::Coupled,
            other => return Err(HarnessError::Config(format!("unknown sweep mode `{other}`"))),
        };
        c.initial_leak = match get("initial_leak").unwrap_or("auto") {
            "auto" => InitialLeak::Auto,
            "zero" => InitialLeak::Zero,
            v => InitialLeak::Fixed(parse_num("initial_leak", v)?),
        };
        if let Some(v) = get("pilot.shots") {
            c.pilot_shots = parse_num("pilot.shots", v)?;
        }
        c.pilot_cycles = match get("pilot.cycles") {
            None | Some("auto") => None,
            Some(v) => Some(parse_num("pilot.cycles", v)?),
        };
        if let Some(v) = get("decoder.max_iters") {
            c.decoder.max_iters = parse_num("decoder.max_iters", v)?;
        }
        if let Some(v) = get("decoder.variant") {
            c.decoder.variant = v.parse::<BpVariant>().map_err(HarnessError::Config)?;
        }
        if let Some(v) = get("decoder.min_sum_scale") {
            let scale = parse_num("decoder.min_sum_scale", v)?;
            match &mut c.decoder.variant {
                BpVariant::MinSum { scale: s } => *s = scale,
                BpVariant::ProductSum => return Err(HarnessError::Config("`decoder.min_sum_scale` needs `decoder.variant = min-sum`".into())),
            }
        }
        if let Some(v) = get("decoder.llr_clamp") {
            c.decoder.llr_clamp = parse_num("decoder.llr_clamp", v)?;
        }
        if let Some(v) = get("decoder.osd_order") {
            c.decoder.osd_order = parse_num("decoder.osd_order", v)?;
        }
        if let Some(v) = get("window_scan.windows") {
            c.windows = v.split(',').map(|t| parse_num("window_scan.windows", t.trim())).collect::<Result<_, _>>()?;
        }
        c.output = get("output").map(PathBuf::from);
        if let Some(v) = get("threads") {
            c.threads = parse_num("threads", v)?;
        }
        if let Some(v) = get("timing") {
            c.timing = parse_bool("timing", v)?;
        }

        let known = |k: &str| {
            KNOWN_KEYS.contains(&k)
                || k.starts_with("manifest.")
                || k.strip_prefix("noise.").is_some_and(|n| NoiseParams::NAMES.contains(&n))
        };
        if let Some(k) = raw.keys().find(|k| !known(k)) {
            return Err(HarnessError::Config(format!("unknown key `{k}`")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.shots == 0 {
            return Err(HarnessError::Config("shots must be at least 1".into()));
        }
        if self.n_cycles == 0 {
            return Err(HarnessError::Config("n_cycles must be at least 1".into()));
        }
        if self.axes.len() > 2 {
            return Err(HarnessError::Config("at most two sweep axes".into()));
        }
        if self.sweep_mode == SweepMode::Coupled && self.axes.len() == 2 && self.axes[0].values.len() != self.axes[1].values.len() {
            return Err(HarnessError::Config("coupled axes need equally many values".into()));
        }
        if let InitialLeak::Fixed(f) = self.initial_leak {
            if !(0.0..=1.0).contains(&f) {
                return Err(HarnessError::Config(format!("initial_leak = {f} is not a probability")));
            }
        }
        self.decoder.validate()?;
        for point in self.points() {
            for protocol in self.protocol.protocols() {
                self.noise_for(&point, protocol)?.validate()?;
            }
            self.cycles_for(&point)?;
        }
        Ok(())
    }

    /// Sweep points as `(param, value)` lists, in output order.
    pub fn points(&self) -> Vec<Vec<(String, f64)>> {
        match self.axes.as_slice() {
            [] => vec![Vec::new()],
            [a] => a.values.iter().map(|&v| vec![(a.param.clone(), v)]).collect(),
            [a, b] => match self.sweep_mode {
                SweepMode::Coupled => a
                    .values
                    .iter()
                    .zip(&b.values)
                    .map(|(&x, &y)| vec![(a.param.clone(), x), (b.param.clone(), y)])
                    .collect(),
                SweepMode::Crossed => a
                    .values
                    .iter()
                    .flat_map(|&x| b.values.iter().map(move |&y| vec![(a.param.clone(), x), (b.param.clone(), y)]))
                    .collect(),
            },
            _ => unreachable!("validated"),
        }
    }

    /// Noise at a sweep point for one protocol. A swept `p_id_l` overrides
    /// the protocol-specific values.
    pub fn noise_for(&self, point: &[(String, f64)], protocol: Protocol) -> Result<NoiseParams, HarnessError> {
        let mut n = self.noise;
        let specific = match protocol {
            Protocol::Plain => self.p_id_l_plain,
            Protocol::Flip => self.p_id_l_flip,
        };
        if let Some(v) = specific {
            n.p_id_l = v;
        }
        for (param, value) in point {
            if let Some(name) = param.strip_prefix("noise.") {
                n.set(name, *value)?;
            }
        }
        Ok(n)
    }

    pub fn cycles_for(&self, point: &[(String, f64)]) -> Result<usize, HarnessError> {
        match point.iter().find(|(p, _)| p == "n_cycles") {
            Some(&(_, v)) if v >= 1.0 && v.fract() == 0.0 => Ok(v as usize),
            Some(&(_, v)) => Err(HarnessError::Config(format!("n_cycles = {v} is not a positive integer"))),
            None => Ok(self.n_cycles),
        }
    }

    pub fn schedule_for(&self, code: &CssCode) -> ScheduleSpec {
        self.schedule.clone().unwrap_or_else(|| ScheduleSpec::default_for(code))
    }

    /// Fully resolved key/value form; parsing it back yields an equal config.
    pub fn to_raw(&self) -> RawConfig {
        let mut r = RawConfig::new();
        let mut put = |k: &str, v: String| {
            r.insert(k.to_string(), v);
        };
        match &self.code {
            CodeSpec::Gross => put("code", "gross".into()),
            CodeSpec::Steane => put("code", "steane".into()),
            CodeSpec::Bb { l, m, a, b } => {
                put("code", "bb".into());
                put("code.l", l.to_string());
                put("code.m", m.to_string());
                put("code.a", a.clone());
                put("code.b", b.clone());
            }
            CodeSpec::File(p) => {
                put("code", "file".into());
                put("code.file", p.display().to_string());
            }
        }
        match &self.schedule {
            None => put("schedule", "default".into()),
            Some(ScheduleSpec::Sequential) => put("schedule", "sequential".into()),
            Some(ScheduleSpec::Bb { x_order, z_order, x_offset, z_offset }) => {
                let join = |o: &[crate::circuit::NeighborLabel]| o.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(",");
                put("schedule", "bb".into());
                put("schedule.x_order", join(x_order));
                put("schedule.z_order", join(z_order));
                put("schedule.x_offset", x_offset.to_string());
                put("schedule.z_offset", z_offset.to_string());
            }
        }
        put("protocol", self.protocol.to_string());
        for name in NoiseParams::NAMES {
            put(&format!("noise.{name}"), self.noise.get(name).unwrap_or_default().to_string());
        }
        if let Some(v) = self.p_id_l_plain {
            put("noise.p_id_l.plain", v.to_string());
        }
        if let Some(v) = self.p_id_l_flip {
            put("noise.p_id_l.flip", v.to_string());
        }
        put("n_cycles", self.n_cycles.to_string());
        put("shots", self.shots.to_string());
        put("seed", self.seed.to_string());
        for (i, a) in self.axes.iter().enumerate() {
            put(&format!("sweep.axis{}", i + 1), a.to_text());
        }
        put(
            "sweep.mode",
            match self.sweep_mode {
                SweepMode::Coupled => "coupled",
                SweepMode::Crossed => "crossed",
            }
            .into(),
        );
        put(
            "initial_leak",
            match self.initial_leak {
                InitialLeak::Auto => "auto".into(),
                InitialLeak::Zero => "zero".into(),
                InitialLeak::Fixed(f) => f.to_string(),
            },
        );
        put("pilot.shots", self.pilot_shots.to_string());
        put("pilot.cycles", self.pilot_cycles.map_or("auto".into(), |c| c.to_string()));
        put("decoder.max_iters", self.decoder.max_iters.to_string());
        put("decoder.variant", self.decoder.variant.to_string());
        if let BpVariant::MinSum { scale } = self.decoder.variant {
            put("decoder.min_sum_scale", scale.to_string());
        }
        put("decoder.llr_clamp", self.decoder.llr_clamp.to_string());
        put("decoder.osd_order", self.decoder.osd_order.to_string());
        put("window_scan.windows", self.windows.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","));
        if let Some(p) = &self.output {
            put("output", p.display().to_string());
        }
        put("threads", self.threads.to_string());
        put("timing", self.timing.to_string());
        r
    }
}

const KNOWN_KEYS: &[&str] = &[
    "code",
    "code.l",
    "code.m",
    "code.a",
    "code.b",
    "code.file",
    "schedule",
    "schedule.x_order",
    "schedule.z_order",
    "schedule.x_offset",
    "schedule.z_offset",
    "protocol",
    "noise.preset",
    "noise.p_id_l.plain",
    "noise.p_id_l.flip",
    "n_cycles",
    "shots",
    "seed",
    "sweep.axis1",
    "sweep.axis2",
    "sweep.mode",
    "initial_leak",
    "pilot.shots",
    "pilot.cycles",
    "decoder.max_iters",
    "decoder.variant",
    "decoder.min_sum_scale",
    "decoder.llr_clamp",
    "decoder.osd_order",
    "window_scan.windows",
    "output",
    "threads",
    "timing",
];
