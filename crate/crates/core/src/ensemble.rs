//! End-to-end shots: field trajectory, detection record and decoded trace.
//!
//! Shot `i` of an ensemble draws from streams indexed by `i` under the base
//! seed, so ensembles are reproducible independently of thread count.

use rayon::prelude::*;

use crate::analysis::{first_jump, FirstJump, Timing};
use crate::decoder::{decode_stream, DecodedTrace, DecoderParams};
use crate::detection::{sample_coupled, sample_detection_stream, ArrivalParams, AtomStream, DetectorParams};
use crate::error::Result;
use crate::field::{sample_trajectory, BathParams, FieldTrajectory, InitialState};
use crate::probe::{PhaseTable, ProbeGeometry};
use crate::seeds::{SeedRecord, StreamDomain};

/// Everything needed to simulate one QND detection sequence.
#[derive(Debug, Clone)]
pub struct Apparatus {
    pub bath: BathParams,
    pub table: PhaseTable,
    pub arrivals: ArrivalParams,
    pub detector: DetectorParams,
    pub decoder: DecoderParams,
}

#[derive(Debug, Clone)]
pub struct Shot {
    pub index: u64,
    pub trajectory: FieldTrajectory,
    pub stream: AtomStream,
    pub decoded: DecodedTrace,
    /// Photons deposited by probe atoms (coupled sampling only).
    pub injections: u64,
    pub clamped: u64,
}

impl Apparatus {
    pub fn new(
        bath: BathParams,
        geom: &ProbeGeometry,
        arrivals: ArrivalParams,
        detector: DetectorParams,
        decoder: DecoderParams,
    ) -> Result<Self> {
        let table = PhaseTable::compute(geom, bath.n_max)?;
        Self::with_table(bath, table, arrivals, detector, decoder)
    }

    pub fn with_table(
        bath: BathParams,
        table: PhaseTable,
        arrivals: ArrivalParams,
        detector: DetectorParams,
        decoder: DecoderParams,
    ) -> Result<Self> {
        bath.validate()?;
        arrivals.validate()?;
        detector.validate()?;
        decoder.validate()?;
        Ok(Self { bath, table, arrivals, detector, decoder })
    }

    /// Apparatus at the published operating point.
    pub fn paper_defaults() -> Result<Self> {
        Self::new(
            BathParams::default(),
            &ProbeGeometry::default(),
            ArrivalParams::default(),
            DetectorParams::default(),
            DecoderParams::default(),
        )
    }

    pub fn seeds(base_seed: u64, index: u64) -> [SeedRecord; 2] {
        let field = SeedRecord::new(base_seed, StreamDomain::Field, index);
        [field, field.with_domain(StreamDomain::Detection)]
    }

    /// Streams consumed by shot `index`, as recorded in run manifests.
    pub fn shot_seeds(&self, base_seed: u64, index: u64) -> Vec<SeedRecord> {
        if self.detector.emission_prob > 0.0 {
            vec![SeedRecord::new(base_seed, StreamDomain::Coupled, index)]
        } else {
            Self::seeds(base_seed, index).to_vec()
        }
    }

    pub fn run_shot(&self, initial: &InitialState, duration: f64, base_seed: u64, index: u64) -> Result<Shot> {
        if self.detector.emission_prob > 0.0 {
            let seed = SeedRecord::new(base_seed, StreamDomain::Coupled, index);
            let run = sample_coupled(
                initial.clone(),
                duration,
                &self.bath,
                &self.arrivals,
                &self.detector,
                &self.table,
                seed,
            )?;
            let decoded = decode_stream(&run.stream, &self.decoder)?;
            return Ok(Shot {
                index,
                trajectory: run.trajectory,
                stream: run.stream,
                decoded,
                injections: run.injections,
                clamped: run.clamped,
            });
        }
        let [field_seed, detection_seed] = Self::seeds(base_seed, index);
        let trajectory = sample_trajectory(initial.clone(), duration, &self.bath, field_seed)?;
        let stream = sample_detection_stream(&trajectory, &self.arrivals, &self.detector, &self.table, detection_seed)?;
        let decoded = decode_stream(&stream, &self.decoder)?;
        Ok(Shot { index, trajectory, stream, decoded, injections: 0, clamped: 0 })
    }

    /// Shots `0..count`, simulated in parallel and returned in index order.
    pub fn run_ensemble(&self, initial: &InitialState, duration: f64, base_seed: u64, count: u64) -> Result<Vec<Shot>> {
        self.map_shots(initial, duration, base_seed, 0..count, Ok)
    }

    /// Runs the shots in `indices` and reduces each one with `f` before
    /// collecting, so large ensembles need not be held in memory.
    pub fn map_shots<T, F>(
        &self,
        initial: &InitialState,
        duration: f64,
        base_seed: u64,
        indices: std::ops::Range<u64>,
        f: F,
    ) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(Shot) -> Result<T> + Sync,
    {
        indices
            .into_par_iter()
            .map(|i| self.run_shot(initial, duration, base_seed, i).and_then(&f))
            .collect()
    }

    /// First decoded jumps of shots `0, 1, 2, ...` in index order, stopping
    /// at the shot that yields the `events`-th uncensored jump. Shots run in
    /// parallel batches of `batch`; the result does not depend on it.
    pub fn first_jumps_until(
        &self,
        initial: &InitialState,
        duration: f64,
        prepared: u8,
        events: usize,
        base_seed: u64,
        batch: u64,
    ) -> Result<FirstJumpCollection> {
        let skip = self.decoder.window - 1;
        let mut jumps = Vec::new();
        let mut found = 0;
        let mut start = 0;
        while found < events {
            let chunk = self.map_shots(initial, duration, base_seed, start..start + batch.max(1), |s| {
                Ok(first_jump(&s.decoded, prepared, skip, Timing::AsObserved))
            })?;
            for (offset, j) in chunk.into_iter().enumerate() {
                if found == events {
                    break;
                }
                if let Some(j) = j {
                    found += usize::from(!j.censored);
                    jumps.push(j);
                }
                if found == events {
                    return Ok(FirstJumpCollection { jumps, shots: start + offset as u64 + 1 });
                }
            }
            start += batch.max(1);
        }
        Ok(FirstJumpCollection { jumps, shots: start })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstJumpCollection {
    pub jumps: Vec<FirstJump>,
    /// Shots simulated, `0..shots`.
    pub shots: u64,
}
