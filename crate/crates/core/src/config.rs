//! Scenario files: `[section]` headers and `key = value` lines.
//!
//! ```text
//! [grid]
//! xi_max = 30
//! n_points = 601
//! [wiener]
//! count = 1
//! sigma.1 = vasicek:0.02,0.1
//! [jumps]
//! count = 1
//! comp.1 = table:{-0.5:1.0, 0.5:0.5, 1.0:0.5}
//! gamma.1 = constant:0.01
//! ```
//!
//! Unknown sections and keys are rejected. Missing keys take the defaults
//! listed in [`Scenario`].

use std::collections::BTreeMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::curve::{CurveGrid, ForwardCurve};
use crate::error::{Error, Result};
use crate::levy::{DriverConfig, Jump, LevyComponentSpec};
use crate::model::{ModelSpec, VolSpec};
use crate::mpr::{default_y_samples, MprFamily, PsiKind, StateKind, StateProcessSpec, ThetaKind, Vartheta, XiMap};
use crate::qexp::QuasiExp;
use crate::sim::SimConfig;

const SECTIONS: &[&str] =
    &["grid", "time", "wiener", "jumps", "mpr", "state", "curve", "mc", "report", "invariance", "rank"];

fn key_allowed(section: &str, key: &str) -> bool {
    let indexed = |prefix: &str| {
        key.strip_prefix(prefix)
            .and_then(|rest| rest.strip_prefix('.'))
            .is_some_and(|k| k.parse::<usize>().is_ok_and(|k| k >= 1))
    };
    match section {
        "grid" => matches!(key, "xi_max" | "n_points" | "weight_alpha"),
        "time" => matches!(key, "t_max" | "dt" | "record_every"),
        "wiener" => key == "count" || indexed("sigma"),
        "jumps" => key == "count" || indexed("comp") || indexed("gamma"),
        "mpr" => matches!(key, "theta" | "psi" | "y_samples" | "y_star"),
        "state" => matches!(key, "kind" | "y0"),
        "curve" => key == "initial",
        "mc" => matches!(key, "paths" | "seed" | "times"),
        "report" => matches!(key, "maturities" | "store_curves"),
        "invariance" => matches!(key, "t_samples" | "v_samples" | "v_scale" | "compare_paths"),
        "rank" => matches!(key, "h_multiples" | "max_order" | "z_points" | "y_counts"),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// Source line, 0 for command-line overrides.
    line: usize,
}

/// Cap on each driver count.
pub const MAX_DRIVERS: usize = 64;

/// Raw validated key-value content of a scenario file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: BTreeMap<(String, String), Entry>,
}

/// A `section.key=value` override.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub section: String,
    pub key: String,
    pub value: String,
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config { line, msg: "unterminated section header".into() })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(Error::Config { line, msg: format!("unknown section [{name}]") });
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) =
            content.split_once('=').ok_or_else(|| Error::Config { line, msg: "expected `key = value`".into() })?;
        let key = key.trim();
        let value = unquote(value.trim());
        let sec =
            section.as_deref().ok_or_else(|| Error::Config { line, msg: format!("key `{key}` before any section") })?;
        if !key_allowed(sec, key) {
            return Err(Error::Config { line, msg: format!("unknown key `{key}` in [{sec}]") });
        }
        if value.is_empty() {
            return Err(Error::Config { line, msg: format!("empty value for `{key}`") });
        }
        let slot = (sec.to_string(), key.to_string());
        if cfg.entries.contains_key(&slot) {
            return Err(Error::Config { line, msg: format!("duplicate key `{key}` in [{sec}]") });
        }
        cfg.entries.insert(slot, Entry { value: value.to_string(), line });
    }
    Ok(cfg)
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

pub fn parse_override(text: &str) -> Result<Override> {
    let bad = |msg: &str| Error::ConfigKey { key: text.to_string(), msg: msg.to_string() };
    let (path, value) = text.split_once('=').ok_or_else(|| bad("expected section.key=value"))?;
    let (section, key) = path.trim().split_once('.').ok_or_else(|| bad("expected section.key=value"))?;
    let (section, key, value) = (section.trim(), key.trim(), unquote(value.trim()));
    if !SECTIONS.contains(&section) {
        return Err(bad("unknown section"));
    }
    if !key_allowed(section, key) {
        return Err(bad("unknown key"));
    }
    if value.is_empty() {
        return Err(bad("empty value"));
    }
    Ok(Override { section: section.into(), key: key.into(), value: value.into() })
}

impl Config {
    pub fn apply(&mut self, o: &Override) {
        self.entries.insert((o.section.clone(), o.key.clone()), Entry { value: o.value.clone(), line: 0 });
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(&(section.to_string(), key.to_string())).map(|e| e.value.as_str())
    }

    /// Canonical `section.key=value` lines, sorted. Each line reads back
    /// through [`parse_override`] to the same entry.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for ((s, k), e) in &self.entries {
            let v = &e.value;
            if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
                out.push_str(&format!("{s}.{k}=\"{v}\"\n"));
            } else {
                out.push_str(&format!("{s}.{k}={v}\n"));
            }
        }
        out
    }

    /// SHA-256 of [`Config::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn err(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        match self.entries.get(&(section.to_string(), key.to_string())) {
            Some(e) if e.line > 0 => Error::Config { line: e.line, msg: format!("{section}.{key}: {msg}") },
            _ => Error::ConfigKey { key: format!("{section}.{key}"), msg: msg.to_string() },
        }
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| self.err(section, key, format!("`{v}`: {e}"))),
        }
    }

    fn list(&self, section: &str, key: &str, default: Vec<f64>) -> Result<Vec<f64>> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => parse_list(v).map_err(|e| self.err(section, key, e)),
        }
    }

    fn with_key<T>(&self, section: &str, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Config { .. } | Error::ConfigKey { .. } => e,
            other => self.err(section, key, other),
        })
    }
}

pub fn parse_list(v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(s.trim())).collect()
}

fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::ConfigKey { key: s.to_string(), msg: "not a number".into() })?;
    if !v.is_finite() {
        return Err(Error::ConfigKey { key: s.to_string(), msg: "not finite".into() });
    }
    Ok(v)
}

fn spec_err(spec: &str, msg: &str) -> Error {
    Error::ConfigKey { key: spec.to_string(), msg: msg.to_string() }
}

/// `constant:c`, `vasicek:c,λ` or `scaled:s:<shape>` for `s·h(0)` times a shape.
pub fn parse_vol_spec(spec: &str) -> Result<VolSpec> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("scaled:") {
        let (s, shape) = rest.split_once(':').ok_or_else(|| spec_err(spec, "expected scaled:s:shape"))?;
        let shape = parse_shape(shape)?;
        return Ok(VolSpec::state_scaled(shape, parse_f64(s.trim())?));
    }
    Ok(VolSpec::fixed(parse_shape(spec)?))
}

fn parse_shape(spec: &str) -> Result<QuasiExp> {
    let (kind, args) = spec.split_once(':').ok_or_else(|| spec_err(spec, "expected kind:args"))?;
    let args = parse_list(args)?;
    match (kind.trim(), args.as_slice()) {
        ("constant", [c]) => Ok(QuasiExp::constant(*c)),
        ("vasicek", [c, l]) => {
            if *l < 0.0 {
                return Err(spec_err(spec, "negative decay"));
            }
            QuasiExp::vasicek(*c, *l)
        }
        _ => Err(spec_err(spec, "expected constant:c or vasicek:c,lambda")),
    }
}

/// `table:{x:ρ, ...}[:compensated]` or `bgamma:α⁺,λ⁺,α⁻,λ⁻[:compensated]`.
pub fn parse_jump_spec(spec: &str) -> Result<LevyComponentSpec> {
    let spec = spec.trim();
    let (body, compensated) = match spec.strip_suffix(":compensated") {
        Some(b) => (b, true),
        None => (spec, false),
    };
    if let Some(rest) = body.strip_prefix("table:") {
        let inner = rest
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| spec_err(spec, "expected table:{x:rho, ...}"))?;
        let mut jumps = Vec::new();
        for pair in inner.split(',') {
            let (x, rho) = pair.split_once(':').ok_or_else(|| spec_err(spec, "expected x:rho"))?;
            jumps.push(Jump { size: parse_f64(x.trim())?, intensity: parse_f64(rho.trim())? });
        }
        return LevyComponentSpec::jump_table(jumps, compensated);
    }
    if let Some(rest) = body.strip_prefix("bgamma:") {
        return match parse_list(rest)?.as_slice() {
            [ap, lp, am, lm] => LevyComponentSpec::bilateral_gamma(*ap, *lp, *am, *lm, compensated),
            _ => Err(spec_err(spec, "bgamma takes four parameters")),
        };
    }
    Err(spec_err(spec, "expected table:... or bgamma:..."))
}

pub fn parse_theta(spec: &str) -> Result<ThetaKind> {
    let spec = spec.trim();
    match spec {
        "zero" => Ok(ThetaKind::Zero),
        "bessel" => Ok(ThetaKind::BesselSqrt),
        _ => match spec.strip_prefix("const:") {
            Some(v) => Ok(ThetaKind::Constant(parse_list(v)?)),
            None => Err(spec_err(spec, "expected zero, const:v or bessel")),
        },
    }
}

pub fn parse_psi(spec: &str) -> Result<PsiKind> {
    let spec = spec.trim();
    let vartheta = |s: &str| -> Result<Vartheta> {
        let (kind, v) = s.split_once(':').ok_or_else(|| spec_err(spec, "expected const:c or linear:a"))?;
        let v = parse_f64(v.trim())?;
        match kind.trim() {
            "const" => Ok(Vartheta::Const(v)),
            "linear" => Ok(Vartheta::Linear(v)),
            _ => Err(spec_err(spec, "expected const:c or linear:a")),
        }
    };
    match spec {
        "zero" => return Ok(PsiKind::Zero),
        "const_y" => return Ok(PsiKind::ConstantInX),
        _ => {}
    }
    if let Some(rest) = spec.strip_prefix("exp:") {
        return Ok(PsiKind::ExpInX(vartheta(rest)?));
    }
    if let Some(rest) = spec.strip_prefix("product:") {
        let (head, map) = rest.rsplit_once(':').ok_or_else(|| spec_err(spec, "expected product:vartheta:map"))?;
        let (head, map) = match map.trim().parse::<f64>() {
            // `scale:c` ends in a number, so the split above cut it apart
            Ok(_) => {
                let (h, kind) = head.rsplit_once(':').ok_or_else(|| spec_err(spec, "bad map"))?;
                (h, format!("{kind}:{map}"))
            }
            Err(_) => (head, map.to_string()),
        };
        let xi = match map.trim() {
            "identity" => XiMap::Identity,
            "tanh" => XiMap::Tanh,
            m => match m.strip_prefix("scale:") {
                Some(c) => XiMap::Scale(parse_f64(c.trim())?),
                None => return Err(spec_err(spec, "map must be identity, tanh or scale:c")),
            },
        };
        return Ok(PsiKind::ProductForm(vartheta(head)?, xi));
    }
    Err(spec_err(spec, "expected zero, const_y, exp:... or product:..."))
}

/// `flat:r` or `rising:r0,spread,speed` for `r0 + spread(1 − e^{−speed ξ})`.
pub fn parse_initial_curve(spec: &str, grid: &Arc<CurveGrid>) -> Result<ForwardCurve> {
    let spec = spec.trim();
    if let Some(v) = spec.strip_prefix("flat:") {
        return ForwardCurve::constant(grid.clone(), parse_f64(v.trim())?);
    }
    if let Some(v) = spec.strip_prefix("rising:") {
        if let [r0, s, k] = parse_list(v)?.as_slice() {
            let (r0, s, k) = (*r0, *s, *k);
            return ForwardCurve::from_fn(grid.clone(), move |x| r0 + s * (1.0 - (-k * x).exp()));
        }
    }
    Err(spec_err(spec, "expected flat:r or rising:r0,spread,speed"))
}

/// Parameters of the `invariance` command.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceParams {
    pub t_samples: Vec<f64>,
    pub v_samples: usize,
    pub v_scale: f64,
    pub compare_paths: usize,
}

/// Parameters of the `rank` command.
#[derive(Debug, Clone, PartialEq)]
pub struct RankParams {
    pub h_multiples: usize,
    pub max_order: u32,
    pub z_points: usize,
    pub y_counts: usize,
}

/// A fully validated scenario.
///
/// Defaults: grid 30/601 with weight 0.1; `t_max = 1`, `dt = 1e−3`; one
/// Wiener driver with Vasicek volatility (0.02, 0.1); no jumps; zero market
/// price of risk with the standard eight state samples; frozen state at
/// `y0 = 0`; flat initial curve at 3%; 1000 paths with seed 42; maturities
/// 1, 2, 5 and 10.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelSpec,
    pub h0: ForwardCurve,
    pub sim: SimConfig,
    pub times: Vec<f64>,
    pub invariance: InvarianceParams,
    pub rank: RankParams,
    pub config_hash: String,
}

impl Scenario {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let xi_max = cfg.parsed("grid", "xi_max", 30.0)?;
        let n_points = cfg.parsed("grid", "n_points", 601usize)?;
        let weight_alpha = cfg.parsed("grid", "weight_alpha", 0.1)?;
        let grid = cfg.with_key("grid", "n_points", CurveGrid::uniform(xi_max, n_points, weight_alpha))?;

        let n_wiener = cfg.parsed("wiener", "count", 1usize)?;
        if n_wiener > MAX_DRIVERS {
            return Err(cfg.err("wiener", "count", format!("at most {MAX_DRIVERS} drivers")));
        }
        let mut sigma = Vec::with_capacity(n_wiener);
        for k in 1..=n_wiener {
            let key = format!("sigma.{k}");
            sigma.push(match cfg.get("wiener", &key) {
                Some(v) => cfg.with_key("wiener", &key, parse_vol_spec(v))?,
                None if n_wiener == 1 => VolSpec::fixed(QuasiExp::vasicek(0.02, 0.1)?),
                None => return Err(cfg.err("wiener", &key, "missing")),
            });
        }
        check_indices(cfg, "wiener", "sigma", n_wiener)?;

        let n_jump = cfg.parsed("jumps", "count", 0usize)?;
        if n_jump > MAX_DRIVERS {
            return Err(cfg.err("jumps", "count", format!("at most {MAX_DRIVERS} drivers")));
        }
        let mut comps = Vec::with_capacity(n_jump);
        let mut gamma = Vec::with_capacity(n_jump);
        for k in 1..=n_jump {
            let ck = format!("comp.{k}");
            let gk = format!("gamma.{k}");
            let c = cfg.get("jumps", &ck).ok_or_else(|| cfg.err("jumps", &ck, "missing"))?;
            comps.push(cfg.with_key("jumps", &ck, parse_jump_spec(c))?);
            let g = cfg.get("jumps", &gk).ok_or_else(|| cfg.err("jumps", &gk, "missing"))?;
            gamma.push(cfg.with_key("jumps", &gk, parse_vol_spec(g))?);
        }
        check_indices(cfg, "jumps", "comp", n_jump)?;
        check_indices(cfg, "jumps", "gamma", n_jump)?;
        let drivers = cfg.with_key("jumps", "count", DriverConfig::new(n_wiener, comps))?;

        let theta = match cfg.get("mpr", "theta") {
            Some(v) => cfg.with_key("mpr", "theta", parse_theta(v))?,
            None => ThetaKind::Zero,
        };
        let psi = match cfg.get("mpr", "psi") {
            Some(v) => cfg.with_key("mpr", "psi", parse_psi(v))?,
            None => PsiKind::Zero,
        };
        let y_samples = cfg.list("mpr", "y_samples", default_y_samples())?;
        let y_star = cfg.parsed("mpr", "y_star", 0.0)?;
        let mpr = cfg.with_key("mpr", "theta", MprFamily::new(theta, psi, y_star, y_samples, &drivers))?;
        let model = cfg.with_key("jumps", "count", ModelSpec::new(grid.clone(), sigma, gamma, drivers, mpr))?;

        let h0 = match cfg.get("curve", "initial") {
            Some(v) => cfg.with_key("curve", "initial", parse_initial_curve(v, &grid))?,
            None => ForwardCurve::constant(grid.clone(), 0.03)?,
        };

        let kind = match cfg.get("state", "kind").unwrap_or("frozen") {
            "frozen" => StateKind::Frozen,
            "bessel" => StateKind::BesselInverse,
            other => return Err(cfg.err("state", "kind", format!("`{other}` is not frozen or bessel"))),
        };
        let state = cfg.with_key("state", "y0", StateProcessSpec::new(kind, cfg.parsed("state", "y0", y_star)?))?;

        let store_curves = match cfg.get("report", "store_curves").unwrap_or("false") {
            "true" => true,
            "false" => false,
            other => return Err(cfg.err("report", "store_curves", format!("`{other}` is not true or false"))),
        };
        let sim = SimConfig {
            t_max: cfg.parsed("time", "t_max", 1.0)?,
            dt: cfg.parsed("time", "dt", 1e-3)?,
            n_paths: cfg.parsed("mc", "paths", 1000usize)?,
            seed: cfg.parsed("mc", "seed", 42u64)?,
            maturities: cfg.list("report", "maturities", vec![1.0, 2.0, 5.0, 10.0])?,
            state,
            record_every: cfg.parsed("time", "record_every", 1usize)?,
            store_curves,
        };
        cfg.with_key("time", "dt", sim.validate(&model))?;
        let times = cfg.list("mc", "times", vec![0.5 * sim.t_max, sim.t_max])?;

        let invariance = InvarianceParams {
            t_samples: cfg.list("invariance", "t_samples", vec![0.0, 0.5 * sim.t_max, sim.t_max])?,
            v_samples: cfg.parsed("invariance", "v_samples", 3usize)?,
            v_scale: cfg.parsed("invariance", "v_scale", 0.01)?,
            compare_paths: cfg.parsed("invariance", "compare_paths", 0usize)?,
        };
        if !(invariance.v_scale.is_finite() && invariance.v_scale >= 0.0) {
            return Err(cfg.err("invariance", "v_scale", "must be a nonnegative number"));
        }
        let rank = RankParams {
            h_multiples: cfg.parsed("rank", "h_multiples", 8usize)?,
            max_order: cfg.parsed("rank", "max_order", 8u32)?,
            z_points: cfg.parsed("rank", "z_points", 201usize)?,
            y_counts: cfg.parsed("rank", "y_counts", 8usize)?,
        };
        if rank.h_multiples == 0 || rank.z_points < 2 || rank.y_counts == 0 {
            return Err(cfg.err("rank", "h_multiples", "sample counts must be positive"));
        }
        Ok(Self { model, h0, sim, times, invariance, rank, config_hash: cfg.hash() })
    }

    /// Parses `text`, applies `overrides` in order and validates.
    pub fn load(text: &str, overrides: &[Override]) -> Result<Self> {
        let mut cfg = parse_config(text)?;
        for o in overrides {
            cfg.apply(o);
        }
        Self::from_config(&cfg)
    }
}

fn check_indices(cfg: &Config, section: &str, prefix: &str, count: usize) -> Result<()> {
    for (s, k) in cfg.entries.keys() {
        if s != section {
            continue;
        }
        if let Some(idx) = k.strip_prefix(prefix).and_then(|r| r.strip_prefix('.')) {
            if idx.parse::<usize>().map_or(true, |i| i > count) {
                return Err(cfg.err(section, k, format!("index beyond count {count}")));
            }
        }
    }
    Ok(())
}
