//! Photon-number dynamics of a damped cavity coupled to a thermal bath.
//!
//! The field is a birth–death chain on the Fock levels `0..=n_max`. Level `n`
//! decays at `n (1 + n_th) / T_c` and is excited at `(n + 1) n_th / T_c`;
//! the top level is never excited. Both an exact jump sampler and the
//! equivalent rate (master) equation for the level populations are provided.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::rk::{integrate_on_grid, RkOptions};
use crate::seeds::SeedRecord;

const PLANCK: f64 = 6.626_070_15e-34;
const BOLTZMANN: f64 = 1.380_649e-23;

/// Largest thermal weight allowed above the truncated basis.
pub const TRUNCATION_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathParams {
    /// Field energy damping time, seconds.
    pub t_cavity: f64,
    /// Mean thermal photon number of the bath.
    pub n_therm: f64,
    /// Highest Fock level kept in the basis.
    pub n_max: u32,
}

impl Default for BathParams {
    fn default() -> Self {
        Self { t_cavity: 0.129, n_therm: 0.063, n_max: 5 }
    }
}

impl BathParams {
    pub fn new(t_cavity: f64, n_therm: f64, n_max: u32) -> Result<Self> {
        let bath = Self { t_cavity, n_therm, n_max };
        bath.validate()?;
        Ok(bath)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_cavity > 0.0 && self.t_cavity.is_finite()) {
            return domain(format!("t_cavity must be positive, got {}", self.t_cavity));
        }
        if !(self.n_therm >= 0.0 && self.n_therm.is_finite()) {
            return domain(format!("n_therm must be non-negative, got {}", self.n_therm));
        }
        if self.n_max < 2 {
            return domain(format!("n_max must be at least 2, got {}", self.n_max));
        }
        let tail = self.truncation_weight();
        if tail >= TRUNCATION_LIMIT {
            return domain(format!(
                "thermal weight above n_max = {} is {tail:e}, must stay below {TRUNCATION_LIMIT:e}",
                self.n_max
            ));
        }
        Ok(())
    }

    /// Thermal probability of finding more than `n_max` photons, `(n/(1+n))^(n_max+1)`.
    pub fn truncation_weight(&self) -> f64 {
        (self.n_therm / (1.0 + self.n_therm)).powi(self.n_max as i32 + 1)
    }

    pub fn levels(&self) -> usize {
        self.n_max as usize + 1
    }

    fn check_level(&self, n: FockLevel) -> Result<()> {
        if n.0 > self.n_max {
            return domain(format!("Fock level {} exceeds n_max = {}", n.0, self.n_max));
        }
        Ok(())
    }
}

/// Photon number of the cavity field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FockLevel(pub u32);

impl FockLevel {
    pub const VACUUM: FockLevel = FockLevel(0);
    pub const ONE: FockLevel = FockLevel(1);

    pub fn n(self) -> u32 {
        self.0
    }
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRates {
    pub up: f64,
    pub down: f64,
}

impl JumpRates {
    pub fn total(&self) -> f64 {
        self.up + self.down
    }
}

/// Creation and annihilation rates out of level `n`.
pub fn jump_rates(n: FockLevel, bath: &BathParams) -> Result<JumpRates> {
    bath.check_level(n)?;
    Ok(rates_unchecked(n.0, bath))
}

fn rates_unchecked(n: u32, bath: &BathParams) -> JumpRates {
    let nf = n as f64;
    let down = nf * (1.0 + bath.n_therm) / bath.t_cavity;
    let up = if n == bath.n_max { 0.0 } else { (nf + 1.0) * bath.n_therm / bath.t_cavity };
    JumpRates { up, down }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub from: FockLevel,
    pub to: FockLevel,
}

/// Piecewise-constant photon-number path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTrajectory {
    pub initial: FockLevel,
    pub duration: f64,
    pub events: Vec<JumpEvent>,
    pub seed: Option<SeedRecord>,
}

/// A maximal interval spent in one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sojourn {
    pub level: FockLevel,
    pub start: f64,
    pub end: f64,
    /// The interval was cut by the end of the trajectory rather than a jump.
    pub censored: bool,
}

impl Sojourn {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

impl FieldTrajectory {
    /// A trajectory that never leaves `level`.
    pub fn constant(level: FockLevel, duration: f64) -> Self {
        Self { initial: level, duration, events: Vec::new(), seed: None }
    }

    /// Checks chronological order, unit steps and chain consistency.
    pub fn validate(&self) -> Result<()> {
        let mut state = self.initial;
        let mut last = 0.0;
        for (i, ev) in self.events.iter().enumerate() {
            if ev.from != state {
                return Err(Error::Input(format!(
                    "event {i} starts from n = {} but the chain is in n = {}",
                    ev.from.0, state.0
                )));
            }
            if ev.from.0.abs_diff(ev.to.0) != 1 {
                return Err(Error::Input(format!("event {i} is not a single-photon jump")));
            }
            if !(ev.time > last || (i == 0 && ev.time >= 0.0)) || ev.time > self.duration {
                return Err(Error::Input(format!("event {i} at t = {} is out of order", ev.time)));
            }
            last = ev.time;
            state = ev.to;
        }
        Ok(())
    }

    /// Photon number at time `t`; a jump at exactly `t` has already happened.
    pub fn state_at(&self, t: f64) -> FockLevel {
        let k = self.events.partition_point(|e| e.time <= t);
        if k == 0 {
            self.initial
        } else {
            self.events[k - 1].to
        }
    }

    pub fn final_state(&self) -> FockLevel {
        self.events.last().map_or(self.initial, |e| e.to)
    }

    pub fn sojourns(&self) -> Vec<Sojourn> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut start = 0.0;
        let mut level = self.initial;
        for ev in &self.events {
            out.push(Sojourn { level, start, end: ev.time, censored: false });
            start = ev.time;
            level = ev.to;
        }
        out.push(Sojourn { level, start, end: self.duration, censored: true });
        out
    }

    /// Time average of the photon number over the whole trajectory.
    pub fn time_average_n(&self) -> f64 {
        if self.duration <= 0.0 {
            return self.initial.0 as f64;
        }
        self.sojourns().iter().map(|s| s.level.0 as f64 * s.length()).sum::<f64>() / self.duration
    }
}

/// Populations of the Fock levels `0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockDistribution {
    probabilities: Vec<f64>,
}

impl FockDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Input("empty Fock distribution".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::Input(format!("negative or NaN population {p}")));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Input(format!("populations sum to {sum}, not 1")));
        }
        Ok(Self { probabilities })
    }

    /// The pure Fock state `|n⟩` in a basis of `levels` entries.
    pub fn fock(n: FockLevel, levels: usize) -> Result<Self> {
        if n.index() >= levels {
            return domain(format!("level {} outside a basis of {levels} levels", n.0));
        }
        let mut p = vec![0.0; levels];
        p[n.index()] = 1.0;
        Ok(Self { probabilities: p })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn p(&self, n: u32) -> f64 {
        self.probabilities.get(n as usize).copied().unwrap_or(0.0)
    }

    pub fn levels(&self) -> usize {
        self.probabilities.len()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FockLevel {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (n, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return FockLevel(n as u32);
            }
        }
        // Round-off in the cumulative sum: fall back to the last populated level.
        let n = self.probabilities.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        FockLevel(n as u32)
    }
}

/// Where a sampled trajectory starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Level(FockLevel),
    Distribution(FockDistribution),
}

impl From<FockLevel> for InitialState {
    fn from(n: FockLevel) -> Self {
        InitialState::Level(n)
    }
}

impl From<FockDistribution> for InitialState {
    fn from(d: FockDistribution) -> Self {
        InitialState::Distribution(d)
    }
}

impl From<&FockDistribution> for InitialState {
    fn from(d: &FockDistribution) -> Self {
        InitialState::Distribution(d.clone())
    }
}

/// Birth–death generator on `0..=n_max`, optionally with an extra constant
/// excitation channel (photons deposited by the probe beam).
#[derive(Debug, Clone, PartialEq)]
pub struct BirthDeathGenerator {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl BirthDeathGenerator {
    pub fn thermal(bath: &BathParams) -> Self {
        let (up, down) = (0..=bath.n_max).map(|n| rates_unchecked(n, bath)).map(|r| (r.up, r.down)).unzip();
        Self { up, down }
    }

    /// Adds `rate` to every excitation rate below the top level.
    pub fn with_pumping(mut self, rate: f64) -> Self {
        let top = self.up.len() - 1;
        for u in &mut self.up[..top] {
            *u += rate;
        }
        self
    }

    pub fn levels(&self) -> usize {
        self.up.len()
    }

    fn derivative(&self, p: &[f64], dp: &mut [f64]) {
        let last = p.len() - 1;
        for n in 0..=last {
            let mut d = -(self.up[n] + self.down[n]) * p[n];
            if n > 0 {
                d += self.up[n - 1] * p[n - 1];
            }
            if n < last {
                d += self.down[n + 1] * p[n + 1];
            }
            dp[n] = d;
        }
    }

    /// Stationary populations from the detailed-balance recursion.
    pub fn stationary(&self) -> FockDistribution {
        let mut w = vec![1.0; self.levels()];
        for n in 1..self.levels() {
            w[n] = if self.down[n] > 0.0 { w[n - 1] * self.up[n - 1] / self.down[n] } else { 0.0 };
        }
        let norm: f64 = w.iter().sum();
        FockDistribution { probabilities: w.into_iter().map(|x| x / norm).collect() }
    }

    pub fn evolve(&self, p0: &FockDistribution, t_grid: &[f64]) -> Result<Vec<FockDistribution>> {
        if p0.levels() != self.levels() {
            return Err(Error::Input(format!(
                "initial distribution has {} levels, generator has {}",
                p0.levels(),
                self.levels()
            )));
        }
        if t_grid.first().is_some_and(|t| *t != 0.0) {
            return Err(Error::Input("time grid must start at 0".into()));
        }
        let (states, _) =
            integrate_on_grid(|_, p, dp| self.derivative(p, dp), &p0.probabilities, t_grid, RkOptions::default())?;
        states
            .into_iter()
            .zip(t_grid)
            .map(|(p, t)| {
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Numerical {
                        routine: "master equation",
                        detail: format!("normalisation drifted to {sum} at t = {t}"),
                    });
                }
                // Populations that should be zero can come out at -1e-20 or so.
                Ok(FockDistribution { probabilities: p.into_iter().map(|x| x.max(0.0)).collect() })
            })
            .collect()
    }
}

/// Evolves the level populations under the thermal rate equation.
pub fn master_equation_evolve(
    p0: &FockDistribution,
    bath: &BathParams,
    t_grid: &[f64],
) -> Result<Vec<FockDistribution>> {
    bath.validate()?;
    BirthDeathGenerator::thermal(bath).evolve(p0, t_grid)
}

/// Truncated thermal (geometric) law, `p_n ∝ n_th^n / (1 + n_th)^(n+1)`.
pub fn stationary_distribution(bath: &BathParams) -> FockDistribution {
    let ratio = bath.n_therm / (1.0 + bath.n_therm);
    let w: Vec<f64> = (0..=bath.n_max).map(|n| ratio.powi(n as i32) / (1.0 + bath.n_therm)).collect();
    let norm: f64 = w.iter().sum();
    FockDistribution { probabilities: w.into_iter().map(|x| x / norm).collect() }
}

/// Bose–Einstein occupation of a mode at `frequency` (Hz) and `temperature` (K).
pub fn planck_occupation(frequency: f64, temperature: f64) -> Result<f64> {
    if !(frequency > 0.0) || !(temperature > 0.0) {
        return domain(format!(
            "frequency and temperature must be positive, got {frequency} Hz and {temperature} K"
        ));
    }
    let x = PLANCK * frequency / (BOLTZMANN * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Exact jump sampling of the thermal chain over `[0, duration]`.
pub fn sample_trajectory(
    initial: impl Into<InitialState>,
    duration: f64,
    bath: &BathParams,
    seed: SeedRecord,
) -> Result<FieldTrajectory> {
    bath.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return domain(format!("duration must be positive, got {duration}"));
    }
    let mut rng = seed.rng();
    let start = match initial.into() {
        InitialState::Level(n) => {
            bath.check_level(n)?;
            n
        }
        InitialState::Distribution(d) => {
            if d.levels() != bath.levels() {
                return Err(Error::Input(format!(
                    "initial distribution has {} levels, bath basis has {}",
                    d.levels(),
                    bath.levels()
                )));
            }
            d.sample(&mut rng)
        }
    };
    let mut events = Vec::new();
    advance(start, 0.0, duration, &BirthDeathGenerator::thermal(bath), &mut rng, &mut events);
    Ok(FieldTrajectory { initial: start, duration, events, seed: Some(seed) })
}

/// Runs the chain from `state` at `t_from` until `t_to`, appending jumps, and
/// returns the state at `t_to`. Memorylessness makes restarting at arbitrary
/// times exact.
pub(crate) fn advance<R: Rng + ?Sized>(
    mut state: FockLevel,
    t_from: f64,
    t_to: f64,
    generator: &BirthDeathGenerator,
    rng: &mut R,
    events: &mut Vec<JumpEvent>,
) -> FockLevel {
    let mut t = t_from;
    loop {
        let up = generator.up[state.index()];
        let down = generator.down[state.index()];
        let total = up + down;
        if total <= 0.0 {
            return state;
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / total;
        if t + wait > t_to {
            return state;
        }
        t += wait;
        let to = if rng.random::<f64>() * total < up { FockLevel(state.0 + 1) } else { FockLevel(state.0 - 1) };
        events.push(JumpEvent { time: t, from: state, to });
        state = to;
    }
}
