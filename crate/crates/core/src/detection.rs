//! Probe-atom arrivals and imperfect e/g readout.
//!
//! Atoms are prepared in fixed time slots and a slot holds a detected atom
//! with probability `occupancy`. Each atom reads the photon number at its
//! slot time (its transit is short compared with every field time scale) and
//! is found in g with probability `p_g|1 + C · P_ideal(g|n)`, where
//! `C = 1 − p_g|1 − p_e|0` is the fringe contrast.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::field::{advance, BathParams, BirthDeathGenerator, FieldTrajectory, FockLevel, InitialState, JumpEvent};
use crate::probe::{ideal_detection_probability, PhaseTable};
use crate::seeds::SeedRecord;

/// Default upper bound on the per-atom photon emission probability.
pub const MAX_EMISSION_PROB: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalParams {
    /// Spacing of atomic sample preparations, s.
    pub slot_period: f64,
    /// Probability that a slot yields one detected atom.
    pub occupancy: f64,
}

impl Default for ArrivalParams {
    fn default() -> Self {
        Self { slot_period: 70e-6, occupancy: 0.063 }
    }
}

impl ArrivalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_period > 0.0 && self.slot_period.is_finite()) {
            return domain(format!("slot_period must be positive, got {}", self.slot_period));
        }
        if !(0.0..=1.0).contains(&self.occupancy) {
            return domain(format!("occupancy must lie in [0, 1], got {}", self.occupancy));
        }
        Ok(())
    }

    /// Mean detected-atom rate, 1/s.
    pub fn atom_rate(&self) -> f64 {
        self.occupancy / self.slot_period
    }

    /// Checks a separately quoted atom rate against `occupancy / slot_period` to 1%.
    pub fn check_rate(&self, atom_rate: f64) -> Result<()> {
        let derived = self.atom_rate();
        if (derived - atom_rate).abs() > 0.01 * atom_rate.abs() {
            return domain(format!(
                "atom rate {atom_rate} 1/s inconsistent with occupancy / slot_period = {derived} 1/s"
            ));
        }
        Ok(())
    }

    /// Number of slots in `[0, duration]`: slot `k` fires at `k · slot_period`, k ≥ 1.
    pub fn slots_in(&self, duration: f64) -> u64 {
        (duration / self.slot_period * (1.0 + 1e-12)).floor() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Probability of reading g although one photon is present.
    pub p_g_given_1: f64,
    /// Probability of reading e although the cavity is empty.
    pub p_e_given_0: f64,
    /// Probability per atom of leaving a photon behind.
    pub emission_prob: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self { p_g_given_1: 0.13, p_e_given_0: 0.09, emission_prob: 0.0 }
    }
}

impl DetectorParams {
    pub fn perfect() -> Self {
        Self { p_g_given_1: 0.0, p_e_given_0: 0.0, emission_prob: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_g_given_1", self.p_g_given_1), ("p_e_given_0", self.p_e_given_0)] {
            if !(0.0..=1.0).contains(&p) {
                return domain(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.p_g_given_1 + self.p_e_given_0 < 1.0) {
            return domain("p_g_given_1 + p_e_given_0 must be below 1 (positive contrast)");
        }
        if !(0.0..=MAX_EMISSION_PROB).contains(&self.emission_prob) {
            return domain(format!(
                "emission_prob must lie in [0, {MAX_EMISSION_PROB:e}], got {}",
                self.emission_prob
            ));
        }
        Ok(())
    }

    pub fn contrast(&self) -> f64 {
        1.0 - self.p_g_given_1 - self.p_e_given_0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detected {
    E,
    G,
}

impl Detected {
    /// Value of the one-photon projector this outcome codes for.
    pub fn bit(self) -> u8 {
        match self {
            Detected::E => 1,
            Detected::G => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    #[serde(rename = "time_s")]
    pub time: f64,
    pub true_n: FockLevel,
    pub detected: Detected,
}

/// Detection record of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomStream {
    pub duration: f64,
    pub atoms: Vec<AtomRecord>,
}

/// P(g | n) for the affine contrast model.
pub fn detection_probability_g(n: FockLevel, det: &DetectorParams, table: &PhaseTable) -> Result<f64> {
    Ok(det.p_g_given_1 + det.contrast() * ideal_detection_probability(n, table)?)
}

fn g_table(det: &DetectorParams, table: &PhaseTable, n_max: u32) -> Result<Vec<f64>> {
    (0..=n_max).map(|n| detection_probability_g(FockLevel(n), det, table)).collect()
}

/// Slot indices of occupied slots in `1..=slots`, via geometric gaps.
struct OccupiedSlots {
    next: u64,
    slots: u64,
    gaps: Option<Geometric>,
}

impl OccupiedSlots {
    fn new(arr: &ArrivalParams, duration: f64) -> Result<Self> {
        let gaps = if arr.occupancy > 0.0 {
            Some(Geometric::new(arr.occupancy).map_err(|e| Error::Domain(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { next: 0, slots: arr.slots_in(duration), gaps })
    }

    fn next_slot<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<u64> {
        let gaps = self.gaps.as_ref()?;
        let k = self.next.checked_add(gaps.sample(rng))?.checked_add(1)?;
        self.next = k;
        (k <= self.slots).then_some(k)
    }
}

/// Detection record of a given field trajectory. The field is only read.
pub fn sample_detection_stream(
    traj: &FieldTrajectory,
    arr: &ArrivalParams,
    det: &DetectorParams,
    table: &PhaseTable,
    seed: SeedRecord,
) -> Result<AtomStream> {
    arr.validate()?;
    det.validate()?;
    if det.emission_prob > 0.0 {
        return Err(Error::Input(
            "emission back-action requires coupled sampling (sample_coupled), not a fixed trajectory".into(),
        ));
    }
    let max_level = traj.events.iter().map(|e| e.to).chain([traj.initial]).max().unwrap_or(traj.initial);
    let pg = g_table(det, table, max_level.0.max(1))?;
    let mut rng = seed.rng();
    let mut slots = OccupiedSlots::new(arr, traj.duration)?;
    let mut atoms = Vec::with_capacity((slots.slots as f64 * arr.occupancy * 1.1) as usize + 8);
    let mut cursor = 0;
    let mut state = traj.initial;
    while let Some(k) = slots.next_slot(&mut rng) {
        let t = k as f64 * arr.slot_period;
        while cursor < traj.events.len() && traj.events[cursor].time <= t {
            state = traj.events[cursor].to;
            cursor += 1;
        }
        let detected = if rng.random::<f64>() < pg[state.index()] { Detected::G } else { Detected::E };
        atoms.push(AtomRecord { time: t, true_n: state, detected });
    }
    Ok(AtomStream { duration: traj.duration, atoms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionOutcome {
    Unchanged,
    Injected(FockLevel),
    /// The atom emitted but the field already sits at the top of the basis.
    Clamped,
}

/// Lets one atom deposit a photon with probability `emission_prob`.
pub fn apply_emission_backaction<R: Rng + ?Sized>(
    state: FockLevel,
    n_max: u32,
    det: &DetectorParams,
    rng: &mut R,
) -> EmissionOutcome {
    if det.emission_prob <= 0.0 || rng.random::<f64>() >= det.emission_prob {
        return EmissionOutcome::Unchanged;
    }
    if state.0 >= n_max {
        EmissionOutcome::Clamped
    } else {
        EmissionOutcome::Injected(FockLevel(state.0 + 1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub trajectory: FieldTrajectory,
    pub stream: AtomStream,
    pub injections: u64,
    pub clamped: u64,
}

/// Samples field and detections together so that atoms can add photons.
pub fn sample_coupled(
    initial: impl Into<InitialState>,
    duration: f64,
    bath: &BathParams,
    arr: &ArrivalParams,
    det: &DetectorParams,
    table: &PhaseTable,
    seed: SeedRecord,
) -> Result<CoupledRun> {
    bath.validate()?;
    arr.validate()?;
    det.validate()?;
    if !(duration > 0.0) {
        return domain(format!("duration must be positive, got {duration}"));
    }
    let pg = g_table(det, table, bath.n_max)?;
    let generator = BirthDeathGenerator::thermal(bath);
    let mut rng = seed.rng();
    let mut state = match initial.into() {
        InitialState::Level(n) if n.0 <= bath.n_max => n,
        InitialState::Level(n) => return domain(format!("initial level {} exceeds n_max", n.0)),
        InitialState::Distribution(d) => d.sample(&mut rng),
    };
    let start = state;
    let mut events = Vec::new();
    let mut atoms = Vec::new();
    let (mut injections, mut clamped) = (0, 0);
    let mut slots = OccupiedSlots::new(arr, duration)?;
    let mut t = 0.0;
    while let Some(k) = slots.next_slot(&mut rng) {
        let t_atom = k as f64 * arr.slot_period;
        state = advance(state, t, t_atom, &generator, &mut rng, &mut events);
        t = t_atom;
        let detected = if rng.random::<f64>() < pg[state.index()] { Detected::G } else { Detected::E };
        atoms.push(AtomRecord { time: t_atom, true_n: state, detected });
        match apply_emission_backaction(state, bath.n_max, det, &mut rng) {
            EmissionOutcome::Unchanged => {}
            EmissionOutcome::Injected(to) => {
                injections += 1;
                events.push(JumpEvent { time: t_atom, from: state, to });
                state = to;
            }
            EmissionOutcome::Clamped => clamped += 1,
        }
    }
    advance(state, t, duration, &generator, &mut rng, &mut events);
    Ok(CoupledRun {
        trajectory: FieldTrajectory { initial: start, duration, events, seed: Some(seed) },
        stream: AtomStream { duration, atoms },
        injections,
        clamped,
    })
}

/// Writes `time_s,true_n,detected` rows.
pub fn write_atoms_csv<W: Write>(writer: W, atoms: &[AtomRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for a in atoms {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_atoms_csv<R: Read>(reader: R) -> Result<Vec<AtomRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
