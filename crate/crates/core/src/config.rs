//! Line-oriented `key = value` run configuration.
//!
//! Keys are dotted (`chamber.lv.e_pass = 0.08`), `#` starts a comment, blank
//! lines are ignored. Physical values use mmHg, mL and s. Every model
//! parameter and initial-state component is required; solver, run, coupling
//! and output keys are optional. See `known_keys` for the full list.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingConfig, NonlinearParams};
use crate::error::{ConfigError, ParamError};
use crate::integrate::{Method, SolverConfig};
use crate::model::{
    Chamber, ChamberParams, CirculationState, Compartment, CompartmentParams, ExternalPressure,
    ModelParams, Valve, ValveParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Monolithic,
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamberKind {
    Elastance,
    Nonlinear,
}

impl std::str::FromStr for ChamberKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "elastance" => Ok(Self::Elastance),
            "nonlinear" => Ok(Self::Nonlinear),
            _ => Err(format!("unknown chamber `{s}` (expected elastance or nonlinear)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub params: ModelParams,
    pub initial: CirculationState,
    pub solver: SolverConfig,
    pub mode: RunMode,
    pub chamber: ChamberKind,
    pub coupling: CouplingConfig,
    pub nonlinear: NonlinearParams,
    /// Beats to simulate.
    pub beats: usize,
    /// Trailing beats to analyze.
    pub analyze_beats: usize,
    pub output: OutputConfig,
}

const CHAMBER_FIELDS: [&str; 6] = ["e_pass", "e_act_max", "v0", "onset", "t_contract", "t_relax"];
const VALVE_FIELDS: [&str; 2] = ["r_min", "r_max"];
const COMPARTMENT_FIELDS: [&str; 3] = ["r", "c", "l"];

const OPTIONAL_KEYS: [&str; 24] = [
    "name",
    "p_ex.amplitude",
    "p_ex.period",
    "solver.method",
    "solver.dt",
    "solver.atol",
    "solver.rtol",
    "solver.max_beats",
    "solver.periodicity_tol",
    "solver.sample_stride",
    "solver.locate_events",
    "run.mode",
    "run.chamber",
    "run.beats",
    "run.analyze_beats",
    "coupling.tol",
    "coupling.max_iter",
    "coupling.window",
    "coupling.p_min",
    "coupling.p_max",
    "nonlinear.alpha",
    "nonlinear.beta",
    "output.dir",
    "output.format",
];

/// Required keys in documented order.
pub fn required_keys() -> Vec<String> {
    let mut keys = vec!["t_beat".to_string()];
    for c in Chamber::ALL {
        keys.extend(CHAMBER_FIELDS.iter().map(|f| format!("chamber.{}.{f}", c.key())));
    }
    for v in Valve::ALL {
        keys.extend(VALVE_FIELDS.iter().map(|f| format!("valve.{}.{f}", v.key())));
    }
    for k in Compartment::ALL {
        keys.extend(COMPARTMENT_FIELDS.iter().map(|f| format!("compartment.{}.{f}", k.key())));
    }
    keys.push("p_ex.mean".into());
    keys.extend(CirculationState::NAMES.iter().map(|n| format!("initial.{n}")));
    keys
}

/// Every accepted key: the required ones, then the optional ones.
pub fn known_keys() -> Vec<String> {
    let mut keys = required_keys();
    keys.extend(OPTIONAL_KEYS.iter().map(|k| k.to_string()));
    keys
}

struct Entry {
    line: usize,
    value: String,
}

struct Document {
    entries: HashMap<String, Entry>,
}

impl Document {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let known = known_keys();
        let mut entries: HashMap<String, Entry> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    text: raw.trim().to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Malformed {
                    line,
                    text: raw.trim().to_string(),
                });
            }
            if !known.iter().any(|k| k == key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
            if let Some(prev) = entries.get(key) {
                return Err(ConfigError::DuplicateKey {
                    key: key.to_string(),
                    first: prev.line,
                    second: line,
                });
            }
            entries.insert(
                key.to_string(),
                Entry {
                    line,
                    value: value.to_string(),
                },
            );
        }
        Ok(Self { entries })
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn bad(&self, key: &str, expected: &'static str) -> ConfigError {
        let e = &self.entries[key];
        ConfigError::BadValue {
            line: e.line,
            key: key.to_string(),
            value: e.value.clone(),
            expected,
        }
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(self.bad(key, "a finite number")),
            },
        }
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => match e.value.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(Some(v)),
                _ => Err(self.bad(key, "a positive integer")),
            },
        }
    }

    fn flag(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.entries.get(key).map(|e| e.value.as_str()) {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(_) => Err(self.bad(key, "true or false")),
        }
    }

    fn word(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let doc = Document::parse(text)?;

    let missing: Vec<String> = required_keys()
        .into_iter()
        .filter(|k| !doc.entries.contains_key(k))
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::MissingKeys(missing));
    }
    // required keys are present and numeric from here on
    let req = |key: &str| -> Result<f64, ConfigError> { Ok(doc.number(key)?.expect("checked present")) };

    let chamber = |c: Chamber| -> Result<ChamberParams, ConfigError> {
        let k = |f: &str| format!("chamber.{}.{f}", c.key());
        Ok(ChamberParams {
            e_pass: req(&k("e_pass"))?,
            e_act_max: req(&k("e_act_max"))?,
            v0: req(&k("v0"))?,
            onset: req(&k("onset"))?,
            t_contract: req(&k("t_contract"))?,
            t_relax: req(&k("t_relax"))?,
        })
    };
    let valve = |v: Valve| -> Result<ValveParams, ConfigError> {
        Ok(ValveParams {
            r_min: req(&format!("valve.{}.r_min", v.key()))?,
            r_max: req(&format!("valve.{}.r_max", v.key()))?,
        })
    };
    let compartment = |k: Compartment| -> Result<CompartmentParams, ConfigError> {
        let key = |f: &str| format!("compartment.{}.{f}", k.key());
        Ok(CompartmentParams {
            r: req(&key("r"))?,
            c: req(&key("c"))?,
            l: req(&key("l"))?,
        })
    };

    let mean = req("p_ex.mean")?;
    let amplitude = doc.number("p_ex.amplitude")?.unwrap_or(0.0);
    let p_ex = if amplitude == 0.0 {
        ExternalPressure::Constant { value: mean }
    } else {
        match doc.number("p_ex.period")? {
            Some(period) => ExternalPressure::Sinusoid {
                mean,
                amplitude,
                period,
            },
            None => return Err(ConfigError::MissingKeys(vec!["p_ex.period".into()])),
        }
    };

    let params = ModelParams {
        la: chamber(Chamber::La)?,
        lv: chamber(Chamber::Lv)?,
        ra: chamber(Chamber::Ra)?,
        rv: chamber(Chamber::Rv)?,
        mv: valve(Valve::Mv)?,
        av: valve(Valve::Av)?,
        tv: valve(Valve::Tv)?,
        pv: valve(Valve::Pv)?,
        ar_sys: compartment(Compartment::ArSys)?,
        ven_sys: compartment(Compartment::VenSys)?,
        ar_pul: compartment(Compartment::ArPul)?,
        ven_pul: compartment(Compartment::VenPul)?,
        t_beat: req("t_beat")?,
        p_ex,
    };
    let invalid = |e: ParamError| ConfigError::Invalid {
        line: doc.line_of(&e.name),
        key: e.name.clone(),
        source: e,
    };
    params.validate().map_err(invalid)?;

    let mut initial = [0.0; CirculationState::LEN];
    for (slot, name) in initial.iter_mut().zip(CirculationState::NAMES) {
        *slot = req(&format!("initial.{name}"))?;
    }
    let initial = CirculationState::from_array(initial);
    for (name, v) in [
        ("initial.v_la", initial.v_la),
        ("initial.v_lv", initial.v_lv),
        ("initial.v_ra", initial.v_ra),
        ("initial.v_rv", initial.v_rv),
    ] {
        if v <= 0.0 {
            return Err(invalid(ParamError::new(name, v, "chamber volume must be > 0")));
        }
    }

    let d = SolverConfig::default();
    let method = match doc.word("solver.method") {
        None | Some("rk4") => Method::Rk4,
        Some("dopri5") => Method::Dopri5,
        Some(_) => return Err(doc.bad("solver.method", "rk4 or dopri5")),
    };
    let dt = doc.number("solver.dt")?.unwrap_or(d.dt);
    let solver = SolverConfig {
        dt,
        method,
        atol: doc.number("solver.atol")?.unwrap_or(d.atol),
        rtol: doc.number("solver.rtol")?.unwrap_or(d.rtol),
        max_beats: doc.count("solver.max_beats")?.unwrap_or(d.max_beats),
        periodicity_tol: doc.number("solver.periodicity_tol")?.unwrap_or(d.periodicity_tol),
        sample_stride: doc.number("solver.sample_stride")?.unwrap_or(dt.max(d.sample_stride)),
        locate_events: doc.flag("solver.locate_events")?.unwrap_or(d.locate_events),
    };
    solver.validate(params.t_beat).map_err(invalid)?;

    let mode = match doc.word("run.mode") {
        None | Some("monolithic") => RunMode::Monolithic,
        Some("coupled") => RunMode::Coupled,
        Some(_) => return Err(doc.bad("run.mode", "monolithic or coupled")),
    };
    let chamber = match doc.word("run.chamber") {
        None => ChamberKind::Elastance,
        Some(w) => w
            .parse()
            .map_err(|_| doc.bad("run.chamber", "elastance or nonlinear"))?,
    };

    let dc = CouplingConfig::default();
    let coupling = CouplingConfig {
        tol: doc.number("coupling.tol")?.unwrap_or(dc.tol),
        max_iter: doc.count("coupling.max_iter")?.unwrap_or(dc.max_iter),
        window: doc.number("coupling.window")?.unwrap_or(dc.window),
        p_min: doc.number("coupling.p_min")?.unwrap_or(dc.p_min),
        p_max: doc.number("coupling.p_max")?.unwrap_or(dc.p_max),
    };
    coupling.validate().map_err(invalid)?;

    let dn = NonlinearParams::default();
    let nonlinear = NonlinearParams {
        alpha: doc.number("nonlinear.alpha")?.unwrap_or(dn.alpha),
        beta: doc.number("nonlinear.beta")?.unwrap_or(dn.beta),
    };
    crate::coupling::nonlinear_test_chamber(&params, nonlinear, coupling.range()).map_err(invalid)?;

    let beats = doc.count("run.beats")?.unwrap_or(30);
    let analyze_beats = doc.count("run.analyze_beats")?.unwrap_or(1);
    if analyze_beats > beats {
        return Err(ConfigError::Inconsistent(format!(
            "run.analyze_beats = {analyze_beats} exceeds run.beats = {beats}"
        )));
    }
    if beats > solver.max_beats {
        return Err(ConfigError::Inconsistent(format!(
            "run.beats = {beats} exceeds solver.max_beats = {}",
            solver.max_beats
        )));
    }

    let format = match doc.word("output.format") {
        None | Some("text") => ReportFormat::Text,
        Some("json") => ReportFormat::Json,
        Some(_) => return Err(doc.bad("output.format", "text or json")),
    };

    Ok(RunConfig {
        name: doc.word("name").unwrap_or("unnamed").to_string(),
        params,
        initial,
        solver,
        mode,
        chamber,
        coupling,
        nonlinear,
        beats,
        analyze_beats,
        output: OutputConfig {
            dir: PathBuf::from(doc.word("output.dir").unwrap_or("out")),
            format,
        },
    })
}

/// The shipped reference configuration.
pub const PHYSIOLOGICAL_DEFAULT: &str = include_str!("../../../configs/physiological-default.conf");

pub fn physiological_default() -> RunConfig {
    parse_config(PHYSIOLOGICAL_DEFAULT).expect("shipped configuration parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Sets `key` in the shipped document, replacing an existing line.
    fn with(text: &str, key: &str, value: &str) -> String {
        let mut found = false;
        let mut out: Vec<String> = text
            .lines()
            .map(|l| match l.split_once('=') {
                Some((k, _)) if k.trim() == key => {
                    found = true;
                    format!("{key} = {value}")
                }
                _ => l.to_string(),
            })
            .collect();
        if !found {
            out.push(format!("{key} = {value}"));
        }
        out.join("\n")
    }

    #[test]
    fn empty_document_lists_every_required_key() {
        match parse_config("") {
            Err(ConfigError::MissingKeys(keys)) => assert_eq!(keys, required_keys()),
            other => panic!("expected MissingKeys, got {other:?}"),
        }
    }

    #[test]
    fn shipped_default_parses_and_matches_builtin() {
        let cfg = physiological_default();
        assert_eq!(cfg.name, "physiological-default");
        assert_eq!(cfg.params.lv.e_act_max, 2.75);
        assert_eq!(cfg.params.lv.e_pass, 0.08);
        assert_eq!(cfg.params, ModelParams::physiological_default());
        assert_eq!(cfg.initial, CirculationState::physiological_default());
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let text = format!("{PHYSIOLOGICAL_DEFAULT}\nt_beat = 0.8\n");
        let first = PHYSIOLOGICAL_DEFAULT
            .lines()
            .position(|l| l.trim_start().starts_with("t_beat"))
            .unwrap()
            + 1;
        match parse_config(&text) {
            Err(ConfigError::DuplicateKey { key, first: a, second }) => {
                assert_eq!(key, "t_beat");
                assert_eq!(a, first);
                assert_eq!(second, text.lines().count());
            }
            other => panic!("expected DuplicateKey, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_and_malformed_line() {
        let text = format!("{PHYSIOLOGICAL_DEFAULT}\nchamber.lv.stiffness = 1\n");
        assert!(matches!(parse_config(&text), Err(ConfigError::UnknownKey { .. })));
        let text = format!("{PHYSIOLOGICAL_DEFAULT}\njust words\n");
        assert!(matches!(parse_config(&text), Err(ConfigError::Malformed { .. })));
    }

    #[test]
    fn non_numeric_value_reports_key_and_line() {
        let text = PHYSIOLOGICAL_DEFAULT.replace("t_beat = 0.8", "t_beat = fast");
        match parse_config(&text) {
            Err(ConfigError::BadValue { key, line, .. }) => {
                assert_eq!(key, "t_beat");
                assert!(line > 0);
            }
            other => panic!("expected BadValue, got {other:?}"),
        }
    }

    #[test]
    fn valve_invariant_violation_is_a_config_error() {
        let text = PHYSIOLOGICAL_DEFAULT.replace("valve.av.r_max = 75006.2", "valve.av.r_max = 0.001");
        match parse_config(&text) {
            Err(ConfigError::Invalid { key, line, .. }) => {
                assert!(key.starts_with("valve.av"), "{key}");
                assert!(line > 0);
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn optional_sections() {
        let mut text = PHYSIOLOGICAL_DEFAULT.to_string();
        for (k, v) in [
            ("run.mode", "coupled"),
            ("run.chamber", "nonlinear"),
            ("solver.method", "dopri5"),
            ("output.format", "json"),
            ("p_ex.amplitude", "2"),
            ("p_ex.period", "0.8"),
        ] {
            text = with(&text, k, v);
        }
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.mode, RunMode::Coupled);
        assert_eq!(cfg.chamber, ChamberKind::Nonlinear);
        assert_eq!(cfg.solver.method, Method::Dopri5);
        assert_eq!(cfg.output.format, ReportFormat::Json);
        assert!(!cfg.params.p_ex.is_constant());
    }

    #[test]
    fn analyze_beats_cannot_exceed_beats() {
        let text = with(&with(PHYSIOLOGICAL_DEFAULT, "run.beats", "2"), "run.analyze_beats", "3");
        assert!(matches!(parse_config(&text), Err(ConfigError::Inconsistent(_))));
    }

    #[test]
    fn beats_cannot_exceed_max_beats() {
        let text = with(&with(PHYSIOLOGICAL_DEFAULT, "run.beats", "50"), "solver.max_beats", "40");
        assert!(matches!(parse_config(&text), Err(ConfigError::Inconsistent(_))));
    }
}
