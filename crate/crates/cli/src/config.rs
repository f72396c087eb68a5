//! Run configuration: loading, defaults, validation.

use std::path::{Path, PathBuf};

use fecap_core::calibration::SearchOptions;
use fecap_core::montecarlo::{Variability, DEFAULT_READ_DURATION, DEFAULT_TRIALS, WINDOW_READ_DURATION};
use fecap_core::security::{AttackScenario, DISTURB_DURATION};
use fecap_core::{CircuitParams, DeviceParams, MacroConfig, ProtocolParams, SimError};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HysteresisExperiment {
    /// Peak of the triangular sweep, V.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub periods: usize,
    pub points_per_period: usize,
    /// Probe voltage of the low-voltage capacitance window, V.
    pub window_probe_v: f64,
}

impl Default for HysteresisExperiment {
    fn default() -> Self {
        Self {
            amplitude: 1.8,
            frequency_hz: 1e3,
            periods: 2,
            points_per_period: 2000,
            window_probe_v: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadWindowExperiment {
    pub v_min: f64,
    pub v_max: f64,
    pub v_step: f64,
    /// s.
    pub duration: f64,
}

impl Default for ReadWindowExperiment {
    fn default() -> Self {
        Self {
            v_min: -1.0,
            v_max: 1.0,
            v_step: 0.025,
            duration: WINDOW_READ_DURATION,
        }
    }
}

impl ReadWindowExperiment {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.v_max - self.v_min) / self.v_step).round() as usize;
        // Rounded to the nanovolt so grid points print cleanly.
        (0..=n).map(|i| ((self.v_min + self.v_step * i as f64) * 1e9).round() / 1e9).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YieldExperiment {
    pub v_read: f64,
    pub n_trials: usize,
    pub duration: f64,
    pub variability: Variability,
}

impl Default for YieldExperiment {
    fn default() -> Self {
        Self {
            v_read: 0.1,
            n_trials: DEFAULT_TRIALS,
            duration: DEFAULT_READ_DURATION,
            variability: Variability::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepExperiment {
    pub v_reads: Vec<f64>,
    pub n_trials: usize,
    pub duration: f64,
    pub variability: Variability,
}

impl Default for SweepExperiment {
    fn default() -> Self {
        Self {
            v_reads: vec![0.05, 0.1, 0.15, 0.2, 0.25],
            n_trials: DEFAULT_TRIALS,
            duration: DEFAULT_READ_DURATION,
            variability: Variability::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbExperiment {
    pub v_reads: Vec<f64>,
    pub n_reads: usize,
    pub duration: f64,
}

impl Default for DisturbExperiment {
    fn default() -> Self {
        Self {
            v_reads: vec![0.1, 0.2, 0.25, 0.3, 0.35, 0.4],
            n_reads: 1000,
            duration: DISTURB_DURATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Hysteresis(HysteresisExperiment),
    ReadWindow(ReadWindowExperiment),
    Yield(YieldExperiment),
    Sweep(SweepExperiment),
    Disturb(DisturbExperiment),
    Attack(AttackScenario),
    Calibrate(SearchOptions),
}

impl Experiment {
    pub fn verb(&self) -> Verb {
        match self {
            Experiment::Hysteresis(_) => Verb::Hysteresis,
            Experiment::ReadWindow(_) => Verb::ReadWindow,
            Experiment::Yield(_) => Verb::Yield,
            Experiment::Sweep(_) => Verb::Sweep,
            Experiment::Disturb(_) => Verb::Disturb,
            Experiment::Attack(_) => Verb::Attack,
            Experiment::Calibrate(_) => Verb::Calibrate,
        }
    }

    pub fn default_for(verb: Verb) -> Self {
        match verb {
            Verb::Hysteresis => Experiment::Hysteresis(Default::default()),
            Verb::ReadWindow => Experiment::ReadWindow(Default::default()),
            Verb::Yield => Experiment::Yield(Default::default()),
            Verb::Sweep => Experiment::Sweep(Default::default()),
            Verb::Disturb => Experiment::Disturb(Default::default()),
            Verb::Attack => Experiment::Attack(Default::default()),
            Verb::Calibrate => Experiment::Calibrate(Default::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verb {
    Hysteresis,
    ReadWindow,
    Yield,
    Sweep,
    Disturb,
    Attack,
    Calibrate,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Hysteresis => "hysteresis",
            Verb::ReadWindow => "read-window",
            Verb::Yield => "yield",
            Verb::Sweep => "sweep",
            Verb::Disturb => "disturb",
            Verb::Attack => "attack",
            Verb::Calibrate => "calibrate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceParams,
    pub circuit: CircuitParams,
    pub protocol: ProtocolParams,
    pub experiment: Option<Experiment>,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Recorded with the results; the model has no temperature dependence.
    pub temperature_c: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            device: DeviceParams::default(),
            circuit: CircuitParams::default(),
            protocol: ProtocolParams::default(),
            experiment: None,
            master_seed: 1,
            output_dir: PathBuf::from("out"),
            temperature_c: 27.0,
        }
    }
}

impl RunConfig {
    pub fn macro_config(&self) -> MacroConfig {
        MacroConfig {
            device: self.device.clone(),
            circuit: self.circuit.clone(),
            protocol: self.protocol.clone(),
        }
    }

    /// Every violated invariant, including the experiment block.
    pub fn violations(&self) -> Vec<SimError> {
        let mut out = self.macro_config().violations();
        let vdd = self.circuit.vdd;
        let mut check = |ok: bool, field: &str, reason: String| {
            if !ok {
                out.push(SimError::invalid(format!("experiment.{field}"), reason));
            }
        };
        let in_supply = |v: f64| v.is_finite() && v.abs() <= vdd;
        match &self.experiment {
            None => {}
            Some(Experiment::Hysteresis(h)) => {
                check(h.amplitude.is_finite() && h.amplitude > 0.0, "amplitude", format!("must be > 0, got {}", h.amplitude));
                check(h.frequency_hz.is_finite() && h.frequency_hz > 0.0, "frequency_hz", format!("must be > 0, got {}", h.frequency_hz));
                check(h.periods >= 1, "periods", "must be >= 1".into());
                check(h.points_per_period >= 4, "points_per_period", format!("must be >= 4, got {}", h.points_per_period));
                check(h.window_probe_v.is_finite() && h.window_probe_v > 0.0, "window_probe_v", format!("must be > 0, got {}", h.window_probe_v));
            }
            Some(Experiment::ReadWindow(w)) => {
                check(in_supply(w.v_min), "v_min", format!("must lie within +-vdd, got {}", w.v_min));
                check(in_supply(w.v_max), "v_max", format!("must lie within +-vdd, got {}", w.v_max));
                check(w.v_min <= w.v_max, "v_max", format!("must be >= v_min, got {}", w.v_max));
                check(w.v_step.is_finite() && w.v_step > 0.0, "v_step", format!("must be > 0, got {}", w.v_step));
                check(w.duration.is_finite() && w.duration > 0.0, "duration", format!("must be > 0, got {}", w.duration));
            }
            Some(Experiment::Yield(y)) => {
                check(in_supply(y.v_read), "v_read", format!("must lie within +-vdd, got {}", y.v_read));
                check(y.n_trials >= 1, "n_trials", "must be >= 1".into());
                check(y.duration.is_finite() && y.duration > 0.0, "duration", format!("must be > 0, got {}", y.duration));
            }
            Some(Experiment::Sweep(s)) => {
                check(!s.v_reads.is_empty(), "v_reads", "must not be empty".into());
                for (i, v) in s.v_reads.iter().enumerate() {
                    check(in_supply(*v), &format!("v_reads[{i}]"), format!("must lie within +-vdd, got {v}"));
                }
                check(s.n_trials >= 1, "n_trials", "must be >= 1".into());
                check(s.duration.is_finite() && s.duration > 0.0, "duration", format!("must be > 0, got {}", s.duration));
            }
            Some(Experiment::Disturb(d)) => {
                check(!d.v_reads.is_empty(), "v_reads", "must not be empty".into());
                for (i, v) in d.v_reads.iter().enumerate() {
                    check(in_supply(*v), &format!("v_reads[{i}]"), format!("must lie within +-vdd, got {v}"));
                }
                check(d.n_reads >= 1, "n_reads", "must be >= 1".into());
                check(d.duration.is_finite() && d.duration > 0.0, "duration", format!("must be > 0, got {}", d.duration));
            }
            Some(Experiment::Attack(a)) => {
                out.extend(a.violations("experiment"));
                if !in_supply(a.attacker_v_read) {
                    out.push(SimError::invalid("experiment.attacker_v_read", "must lie within +-vdd"));
                }
            }
            Some(Experiment::Calibrate(c)) => {
                check(c.initial_step.is_finite() && c.initial_step > 0.0, "initial_step", format!("must be > 0, got {}", c.initial_step));
                check(c.min_step.is_finite() && c.min_step > 0.0, "min_step", format!("must be > 0, got {}", c.min_step));
            }
        }
        if !self.temperature_c.is_finite() {
            out.push(SimError::invalid("temperature_c", "must be finite"));
        }
        out
    }

    /// Fills in the experiment for `verb`, rejecting a block for a different verb.
    pub fn resolve_experiment(&mut self, verb: Verb) -> Result<(), CliError> {
        match &self.experiment {
            None => {
                self.experiment = Some(Experiment::default_for(verb));
                Ok(())
            }
            Some(e) if e.verb() == verb => Ok(()),
            Some(e) => Err(CliError::Config(format!(
                "config describes a `{}` experiment but the verb is `{}`",
                e.verb().name(),
                verb.name()
            ))),
        }
    }
}

/// Closest candidate by normalized Levenshtein similarity.
pub fn closest<'a>(unknown: &str, candidates: &[&'a str]) -> Option<&'a str> {
    candidates
        .iter()
        .map(|c| (strsim::normalized_levenshtein(unknown, c), *c))
        .filter(|(score, _)| *score >= 0.4)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

/// Splits serde's "unknown field `x`, expected one of `a`, `b`" message.
fn unknown_field(message: &str) -> Option<(String, Vec<String>)> {
    let rest = message.strip_prefix("unknown field `")?;
    let (name, rest) = rest.split_once('`')?;
    let expected = rest
        .split('`')
        .skip(1)
        .step_by(2)
        .map(str::to_string)
        .collect();
    Some((name.to_string(), expected))
}

fn describe_parse_error(err: serde_path_to_error::Error<serde_json::Error>) -> CliError {
    let path = err.path().to_string();
    let inner = err.inner();
    let location = format!("line {} column {}", inner.line(), inner.column());
    let message = inner.to_string();
    let message = message.split(" at line ").next().unwrap_or(&message).to_string();
    if let Some((name, expected)) = unknown_field(&message) {
        let parent = path.rsplit_once('.').map(|(p, _)| p.to_string()).unwrap_or_default();
        let field = if parent.is_empty() { name.clone() } else { format!("{parent}.{name}") };
        let candidates: Vec<&str> = expected.iter().map(String::as_str).collect();
        let hint = match closest(&name, &candidates) {
            Some(s) => format!("; did you mean `{s}`?"),
            None => String::new(),
        };
        return CliError::Config(format!("unknown key `{field}` ({location}){hint}"));
    }
    if path.is_empty() || path == "." {
        CliError::Config(format!("{message} ({location})"))
    } else {
        CliError::Config(format!("`{path}`: {message} ({location})"))
    }
}

/// Parses a JSON run configuration. Unknown keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(describe_parse_error)?;
    Ok(config)
}

/// Reads and parses a configuration file; validation is separate.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Fails with every violation listed.
pub fn validate(config: &RunConfig) -> Result<(), CliError> {
    let problems = config.violations();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(problems.iter().map(ToString::to_string).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let config = parse_config(r#"{"experiment": {"type": "yield"}}"#).unwrap();
        assert_eq!(config.device, DeviceParams::default());
        assert_eq!(config.experiment, Some(Experiment::Yield(YieldExperiment::default())));
        assert_eq!(config.temperature_c, 27.0);
        validate(&config).unwrap();
    }

    #[test]
    fn negative_p_s_names_the_field() {
        let config = parse_config(r#"{"device": {"p_s": -5}}"#).unwrap();
        let CliError::Validation(list) = validate(&config).unwrap_err() else {
            panic!("expected validation error");
        };
        assert!(list.iter().any(|m| m.contains("device.p_s")), "{list:?}");
    }

    #[test]
    fn every_violation_is_listed() {
        let config = parse_config(r#"{"device": {"p_s": -5, "area": 0}, "circuit": {"c_bl": -1}}"#).unwrap();
        let CliError::Validation(list) = validate(&config).unwrap_err() else {
            panic!("expected validation error");
        };
        assert_eq!(list.len(), 3, "{list:?}");
    }

    #[test]
    fn unknown_key_gets_a_suggestion() {
        let err = parse_config(r#"{"device": {"ps": 27}}"#).unwrap_err().to_string();
        assert!(err.contains("device.ps") && err.contains("`p_s`"), "{err}");
    }

    #[test]
    fn unknown_experiment_key_gets_a_suggestion() {
        let err = parse_config(r#"{"experiment": {"type": "yield", "n_trial": 3}}"#).unwrap_err().to_string();
        assert!(err.contains("n_trials"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let err = parse_config("{\n  \"device\": {\"p_s\": }\n}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn verb_must_match_experiment() {
        let mut config = parse_config(r#"{"experiment": {"type": "yield"}}"#).unwrap();
        assert!(config.resolve_experiment(Verb::Attack).is_err());
        let mut config = RunConfig::default();
        config.resolve_experiment(Verb::Disturb).unwrap();
        assert_eq!(config.experiment.unwrap().verb(), Verb::Disturb);
    }

    #[test]
    fn echo_round_trips() {
        let mut config = RunConfig::default();
        config.resolve_experiment(Verb::Attack).unwrap();
        config.device.v_bias = -0.0123456789;
        let text = serde_json::to_string_pretty(&config).unwrap();
        assert_eq!(parse_config(&text).unwrap(), config);
    }

    #[test]
    fn closest_prefers_small_edits() {
        assert_eq!(closest("ps", &["p_s", "area", "tau_0"]), Some("p_s"));
        assert_eq!(closest("zzzzzz", &["p_s", "area"]), None);
    }
}
