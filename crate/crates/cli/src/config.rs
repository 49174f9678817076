//! Flat `key = value` run configuration.
//!
//! Every key has a default equal to the published operating point. Keys
//! whose natural value depends on the scenario (`prep`, `n_trajectories`,
//! `duration_s`) resolve once the scenario is known.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use qnd_core::analysis::{PrepTarget, PreparationSpec};
use qnd_core::decoder::DecoderParams;
use qnd_core::detection::{ArrivalParams, DetectorParams};
use qnd_core::field::BathParams;
use qnd_core::probe::ProbeGeometry;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid<T>(key: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid { key: key.to_string(), msg: msg.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    Telegraph,
    FockDecay,
    LifetimeHistograms,
    Thermometry,
    PhaseCheck,
    AdiabaticityCheck,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Telegraph,
        Scenario::FockDecay,
        Scenario::LifetimeHistograms,
        Scenario::Thermometry,
        Scenario::PhaseCheck,
        Scenario::AdiabaticityCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Telegraph => "telegraph",
            Scenario::FockDecay => "fock_decay",
            Scenario::LifetimeHistograms => "lifetime_histograms",
            Scenario::Thermometry => "thermometry",
            Scenario::PhaseCheck => "phase_check",
            Scenario::AdiabaticityCheck => "adiabaticity_check",
        }
    }

    fn default_prep(self) -> PrepTarget {
        match self {
            Scenario::FockDecay => PrepTarget::FockOne,
            Scenario::Thermometry => PrepTarget::Thermal,
            _ => PrepTarget::VacuumReset,
        }
    }

    fn default_trajectories(self) -> u64 {
        match self {
            Scenario::FockDecay => 904,
            Scenario::Thermometry => 560,
            _ => 1,
        }
    }

    fn default_duration(self) -> f64 {
        match self {
            Scenario::FockDecay => 0.5,
            _ => 2.5,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`, expected one of {}", names(&Scenario::ALL.map(|x| x.name()))))
    }
}

fn names(list: &[&str]) -> String {
    list.join(", ")
}

fn prep_name(p: PrepTarget) -> &'static str {
    match p {
        PrepTarget::VacuumReset => "vacuum_reset",
        PrepTarget::FockOne => "fock_one",
        PrepTarget::Thermal => "thermal",
    }
}

fn parse_prep(s: &str) -> Result<PrepTarget, String> {
    match s {
        "vacuum_reset" => Ok(PrepTarget::VacuumReset),
        "fock_one" => Ok(PrepTarget::FockOne),
        "thermal" => Ok(PrepTarget::Thermal),
        _ => Err(format!("unknown preparation `{s}`, expected vacuum_reset, fock_one or thermal")),
    }
}

/// Raw values in configuration units. `None` marks a scenario-dependent default.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    pub scenario: Option<Scenario>,
    pub t_cavity_s: f64,
    pub n_therm: f64,
    pub n_max: u32,
    pub omega0_khz: f64,
    pub waist_mm: f64,
    pub velocity_m_s: f64,
    pub detuning_khz: f64,
    pub z_span: f64,
    pub slot_period_us: f64,
    pub occupancy: f64,
    pub atom_rate_hz: Option<f64>,
    pub p_g_given_1: f64,
    pub p_e_given_0: f64,
    pub emission_prob: f64,
    pub window: usize,
    pub prep: Option<PrepTarget>,
    pub residual_error: Option<f64>,
    pub n_trajectories: Option<u64>,
    pub duration_s: Option<f64>,
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub grid_points: usize,
    pub n_events_one: usize,
    pub n_events_zero: usize,
    pub trace_duration_one_s: f64,
    pub trace_duration_zero_s: f64,
    pub cavity_frequency_ghz: f64,
    pub mirror_temperature_k: f64,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            t_cavity_s: 0.129,
            n_therm: 0.063,
            n_max: 5,
            omega0_khz: 51.0,
            waist_mm: 6.0,
            velocity_m_s: 250.0,
            detuning_khz: 67.0,
            z_span: 5.0,
            slot_period_us: 70.0,
            occupancy: 0.063,
            atom_rate_hz: None,
            p_g_given_1: 0.13,
            p_e_given_0: 0.09,
            emission_prob: 0.0,
            window: 8,
            prep: None,
            residual_error: None,
            n_trajectories: None,
            duration_s: None,
            base_seed: 1,
            output_dir: None,
            grid_points: 20,
            n_events_one: 903,
            n_events_zero: 338,
            trace_duration_one_s: 1.5,
            trace_duration_zero_s: 20.0,
            cavity_frequency_ghz: 51.1,
            mirror_temperature_k: 0.80,
        }
    }
}

pub const KEYS: [&str; 29] = [
    "scenario",
    "t_cavity_s",
    "n_therm",
    "n_max",
    "omega0_khz",
    "waist_mm",
    "velocity_m_s",
    "detuning_khz",
    "z_span",
    "slot_period_us",
    "occupancy",
    "atom_rate_hz",
    "p_g_given_1",
    "p_e_given_0",
    "emission_prob",
    "window",
    "prep",
    "residual_error",
    "n_trajectories",
    "duration_s",
    "base_seed",
    "output_dir",
    "grid_points",
    "n_events_one",
    "n_events_zero",
    "trace_duration_one_s",
    "trace_duration_zero_s",
    "cavity_frequency_ghz",
    "mirror_temperature_k",
];

fn num<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse `{value}`: {e}"))
}

impl RawConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "scenario" => self.scenario = Some(value.parse()?),
            "t_cavity_s" => self.t_cavity_s = num(value)?,
            "n_therm" => self.n_therm = num(value)?,
            "n_max" => self.n_max = num(value)?,
            "omega0_khz" => self.omega0_khz = num(value)?,
            "waist_mm" => self.waist_mm = num(value)?,
            "velocity_m_s" => self.velocity_m_s = num(value)?,
            "detuning_khz" => self.detuning_khz = num(value)?,
            "z_span" => self.z_span = num(value)?,
            "slot_period_us" => self.slot_period_us = num(value)?,
            "occupancy" => self.occupancy = num(value)?,
            "atom_rate_hz" => self.atom_rate_hz = Some(num(value)?),
            "p_g_given_1" => self.p_g_given_1 = num(value)?,
            "p_e_given_0" => self.p_e_given_0 = num(value)?,
            "emission_prob" => self.emission_prob = num(value)?,
            "window" => self.window = num(value)?,
            "prep" => self.prep = Some(parse_prep(value)?),
            "residual_error" => self.residual_error = Some(num(value)?),
            "n_trajectories" => self.n_trajectories = Some(num(value)?),
            "duration_s" => self.duration_s = Some(num(value)?),
            "base_seed" => self.base_seed = num(value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "grid_points" => self.grid_points = num(value)?,
            "n_events_one" => self.n_events_one = num(value)?,
            "n_events_zero" => self.n_events_zero = num(value)?,
            "trace_duration_one_s" => self.trace_duration_one_s = num(value)?,
            "trace_duration_zero_s" => self.trace_duration_zero_s = num(value)?,
            "cavity_frequency_ghz" => self.cavity_frequency_ghz = num(value)?,
            "mirror_temperature_k" => self.mirror_temperature_k = num(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse { line, msg: format!("expected `key = value`, found `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(ConfigError::Parse { line, msg: format!("`{key}` has no value") });
            }
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(ConfigError::Parse { line, msg: format!("`{key}` already set on line {first}") });
            }
            self.set(key, value).map_err(|msg| ConfigError::Parse { line, msg })?;
        }
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return invalid(assignment, "override must have the form key=value");
        };
        let key = key.trim();
        self.set(key, value.trim()).map_err(|msg| ConfigError::Invalid { key: key.to_string(), msg })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Checks every invariant and fills scenario-dependent defaults.
    pub fn resolve(&self) -> Result<Config, ConfigError> {
        let scenario = self.scenario.ok_or_else(|| ConfigError::Invalid {
            key: "scenario".into(),
            msg: format!("no scenario given, expected one of {}", names(&Scenario::ALL.map(|x| x.name()))),
        })?;

        positive("t_cavity_s", self.t_cavity_s)?;
        if !(self.n_therm >= 0.0 && self.n_therm.is_finite()) {
            return invalid("n_therm", format!("must be non-negative, got {}", self.n_therm));
        }
        if self.n_max < 2 {
            return invalid("n_max", format!("must be at least 2, got {}", self.n_max));
        }
        let bath = BathParams { t_cavity: self.t_cavity_s, n_therm: self.n_therm, n_max: self.n_max };
        bath.validate().or_else(|e| invalid("n_max", e.to_string()))?;

        if !(self.omega0_khz >= 0.0 && self.omega0_khz.is_finite()) {
            return invalid("omega0_khz", format!("must be non-negative, got {}", self.omega0_khz));
        }
        positive("waist_mm", self.waist_mm)?;
        positive("velocity_m_s", self.velocity_m_s)?;
        positive("detuning_khz", self.detuning_khz)?;
        if self.detuning_khz < self.omega0_khz {
            return invalid(
                "detuning_khz",
                format!(
                    "dispersive regime requires detuning >= omega0, got {} kHz < {} kHz",
                    self.detuning_khz, self.omega0_khz
                ),
            );
        }
        if !(self.z_span >= 5.0) {
            return invalid("z_span", format!("must be at least 5 waists, got {}", self.z_span));
        }
        let geom = ProbeGeometry {
            omega0: self.omega0_khz * 1e3,
            waist: self.waist_mm * 1e-3,
            velocity: self.velocity_m_s,
            detuning: self.detuning_khz * 1e3,
            z_span: self.z_span,
        };
        geom.validate().or_else(|e| invalid("detuning_khz", e.to_string()))?;

        positive("slot_period_us", self.slot_period_us)?;
        if !(0.0..=1.0).contains(&self.occupancy) {
            return invalid("occupancy", format!("must lie in [0, 1], got {}", self.occupancy));
        }
        let arrivals = ArrivalParams { slot_period: self.slot_period_us * 1e-6, occupancy: self.occupancy };
        if let Some(rate) = self.atom_rate_hz {
            arrivals.check_rate(rate).or_else(|e| invalid("atom_rate_hz", e.to_string()))?;
        }

        probability("p_g_given_1", self.p_g_given_1)?;
        probability("p_e_given_0", self.p_e_given_0)?;
        let detector =
            DetectorParams { p_g_given_1: self.p_g_given_1, p_e_given_0: self.p_e_given_0, emission_prob: self.emission_prob };
        if !(self.p_g_given_1 + self.p_e_given_0 < 1.0) {
            return invalid("p_e_given_0", "p_g_given_1 + p_e_given_0 must be below 1");
        }
        detector.validate().or_else(|e| invalid("emission_prob", e.to_string()))?;

        if self.window == 0 || self.window > qnd_core::decoder::VoteChain::MAX_WINDOW {
            return invalid("window", format!("must lie in 1..=16, got {}", self.window));
        }
        let decoder = DecoderParams::with_window(self.window);

        let target = self.prep.unwrap_or(scenario.default_prep());
        let residual = self.residual_error.unwrap_or(match target {
            PrepTarget::VacuumReset => PreparationSpec::VACUUM_RESIDUAL,
            _ => 0.0,
        });
        let prep = PreparationSpec { target, residual_error: residual };
        prep.validate().or_else(|e| invalid("residual_error", e.to_string()))?;

        let n_trajectories = self.n_trajectories.unwrap_or(scenario.default_trajectories());
        if n_trajectories < 1 {
            return invalid("n_trajectories", "must be at least 1");
        }
        let duration_s = self.duration_s.unwrap_or(scenario.default_duration());
        positive("duration_s", duration_s)?;
        if self.grid_points < 1 {
            return invalid("grid_points", "must be at least 1");
        }
        if self.n_events_one < qnd_core::analysis::MIN_FIT_EVENTS {
            return invalid("n_events_one", "a lifetime fit needs at least 10 events");
        }
        if self.n_events_zero < qnd_core::analysis::MIN_FIT_EVENTS {
            return invalid("n_events_zero", "a lifetime fit needs at least 10 events");
        }
        positive("trace_duration_one_s", self.trace_duration_one_s)?;
        positive("trace_duration_zero_s", self.trace_duration_zero_s)?;
        positive("cavity_frequency_ghz", self.cavity_frequency_ghz)?;
        positive("mirror_temperature_k", self.mirror_temperature_k)?;

        Ok(Config {
            scenario,
            bath,
            geom,
            arrivals,
            detector,
            decoder,
            prep,
            n_trajectories,
            duration_s,
            base_seed: self.base_seed,
            output_dir: self.output_dir.clone(),
            grid_points: self.grid_points,
            n_events_one: self.n_events_one,
            n_events_zero: self.n_events_zero,
            trace_duration_one_s: self.trace_duration_one_s,
            trace_duration_zero_s: self.trace_duration_zero_s,
            cavity_frequency_ghz: self.cavity_frequency_ghz,
            mirror_temperature_k: self.mirror_temperature_k,
            atom_rate_hz: self.atom_rate_hz,
        })
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(key, format!("must be positive, got {v}"))
    }
}

fn probability(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        invalid(key, format!("must lie in [0, 1], got {v}"))
    }
}

/// Fully resolved, validated run configuration in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub scenario: Scenario,
    pub bath: BathParams,
    pub geom: ProbeGeometry,
    pub arrivals: ArrivalParams,
    pub detector: DetectorParams,
    pub decoder: DecoderParams,
    pub prep: PreparationSpec,
    pub n_trajectories: u64,
    pub duration_s: f64,
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
    pub grid_points: usize,
    pub n_events_one: usize,
    pub n_events_zero: usize,
    pub trace_duration_one_s: f64,
    pub trace_duration_zero_s: f64,
    pub cavity_frequency_ghz: f64,
    pub mirror_temperature_k: f64,
    pub atom_rate_hz: Option<f64>,
}

impl Config {
    /// Key/value pairs in configuration units, in `KEYS` order. The output
    /// directory is left out so that manifests do not depend on where a run
    /// was written.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("scenario", self.scenario.name().to_string()),
            ("t_cavity_s", fmt_f(self.bath.t_cavity)),
            ("n_therm", fmt_f(self.bath.n_therm)),
            ("n_max", self.bath.n_max.to_string()),
            ("omega0_khz", fmt_f(self.geom.omega0 / 1e3)),
            ("waist_mm", fmt_f(self.geom.waist * 1e3)),
            ("velocity_m_s", fmt_f(self.geom.velocity)),
            ("detuning_khz", fmt_f(self.geom.detuning / 1e3)),
            ("z_span", fmt_f(self.geom.z_span)),
            ("slot_period_us", fmt_f(self.arrivals.slot_period * 1e6)),
            ("occupancy", fmt_f(self.arrivals.occupancy)),
        ];
        if let Some(r) = self.atom_rate_hz {
            v.push(("atom_rate_hz", fmt_f(r)));
        }
        v.extend([
            ("p_g_given_1", fmt_f(self.detector.p_g_given_1)),
            ("p_e_given_0", fmt_f(self.detector.p_e_given_0)),
            ("emission_prob", fmt_f(self.detector.emission_prob)),
            ("window", self.decoder.window.to_string()),
            ("prep", prep_name(self.prep.target).to_string()),
            ("residual_error", fmt_f(self.prep.residual_error)),
            ("n_trajectories", self.n_trajectories.to_string()),
            ("duration_s", fmt_f(self.duration_s)),
            ("base_seed", self.base_seed.to_string()),
            ("grid_points", self.grid_points.to_string()),
            ("n_events_one", self.n_events_one.to_string()),
            ("n_events_zero", self.n_events_zero.to_string()),
            ("trace_duration_one_s", fmt_f(self.trace_duration_one_s)),
            ("trace_duration_zero_s", fmt_f(self.trace_duration_zero_s)),
            ("cavity_frequency_ghz", fmt_f(self.cavity_frequency_ghz)),
            ("mirror_temperature_k", fmt_f(self.mirror_temperature_k)),
        ]);
        v
    }

    /// The configuration as a file that `validate` and `run --config` accept.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Shortest text that parses back to the same `f64`.
fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_scenario(text: &str) -> Result<Config, ConfigError> {
        let mut raw = RawConfig::parse(text)?;
        raw.scenario.get_or_insert(Scenario::Telegraph);
        raw.resolve()
    }

    #[test]
    fn empty_file_gives_paper_defaults() {
        let c = with_scenario("").unwrap();
        assert_eq!(c.bath, BathParams::default());
        assert_eq!(c.geom, ProbeGeometry::default());
        assert_eq!(c.arrivals, ArrivalParams::default());
        assert_eq!(c.detector, DetectorParams::default());
        assert_eq!(c.decoder, DecoderParams::default());
    }

    #[test]
    fn dispersive_invariant_names_the_key() {
        let err = with_scenario("detuning_khz = 30").unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "detuning_khz"), "{err}");
        let err = with_scenario("n_max = 1").unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "n_max"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(
            RawConfig::parse("# header\nwindow = 8\nbogus = 1\n").unwrap_err(),
            ConfigError::Parse { line: 3, msg: "unknown key `bogus`".into() }
        );
        assert!(matches!(RawConfig::parse("window 8"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(RawConfig::parse("window = 8\nwindow = 9"), Err(ConfigError::Parse { line: 2, .. })));
        assert!(matches!(RawConfig::parse("\n\nwindow = eight"), Err(ConfigError::Parse { line: 3, .. })));
    }

    #[test]
    fn text_round_trip() {
        let mut raw = RawConfig::parse("scenario = fock_decay\nn_therm = 0.05 # colder\nbase_seed = 9").unwrap();
        raw.apply_override("detuning_khz=70").unwrap();
        let c = raw.resolve().unwrap();
        let again = RawConfig::parse(&c.to_text()).unwrap().resolve().unwrap();
        assert_eq!(c, again);
        assert_eq!(c.prep, PreparationSpec::fock_one());
        assert_eq!(c.n_trajectories, 904);
    }

    #[test]
    fn atom_rate_must_match_occupancy() {
        assert!(with_scenario("atom_rate_hz = 900").is_ok());
        let err = with_scenario("atom_rate_hz = 1200").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { key, .. } if key == "atom_rate_hz"));
    }
}
