//! Sliding majority vote over the detected atoms.
//!
//! At every atom the inferred value of the one-photon projector is the
//! majority of the last `window` detections (e → 1, g → 0). An exact tie
//! keeps the previous output. While fewer than `window` atoms have been seen
//! the vote runs over the available atoms and a tie reads as vacuum.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{ArrivalParams, AtomRecord, AtomStream};
use crate::error::{domain, Error, Result};
use crate::seeds::SeedRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    HoldPrevious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmupRule {
    MajorityOfAvailableTiesToZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub window: usize,
    pub tie_rule: TieRule,
    pub warmup_rule: WarmupRule,
}

impl Default for DecoderParams {
    fn default() -> Self {
        Self::with_window(8)
    }
}

impl DecoderParams {
    pub fn with_window(window: usize) -> Self {
        Self { window, tie_rule: TieRule::HoldPrevious, warmup_rule: WarmupRule::MajorityOfAvailableTiesToZero }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return domain("decoder window must be at least 1");
        }
        Ok(())
    }
}

/// Incremental form of the vote, one detection at a time.
#[derive(Debug, Clone)]
pub struct MajorityVote {
    window: usize,
    bits: VecDeque<u8>,
    ones: usize,
    output: Option<u8>,
}

impl MajorityVote {
    pub fn new(params: &DecoderParams) -> Self {
        Self { window: params.window, bits: VecDeque::with_capacity(params.window + 1), ones: 0, output: None }
    }

    pub fn output(&self) -> Option<u8> {
        self.output
    }

    pub fn is_warm(&self) -> bool {
        self.bits.len() == self.window
    }

    pub fn push(&mut self, bit: u8) -> u8 {
        self.bits.push_back(bit);
        self.ones += bit as usize;
        if self.bits.len() > self.window {
            self.ones -= self.bits.pop_front().unwrap_or(0) as usize;
        }
        let zeros = self.bits.len() - self.ones;
        let out = if self.ones > zeros {
            1
        } else if zeros > self.ones {
            0
        } else if self.bits.len() < self.window {
            0
        } else {
            self.output.unwrap_or(0)
        };
        self.output = Some(out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedSample {
    #[serde(rename = "time_s")]
    pub time: f64,
    pub inferred: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedJump {
    #[serde(rename = "time_s")]
    pub time: f64,
    pub from: u8,
    pub to: u8,
}

/// Inferred telegraph signal, one sample per detected atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedTrace {
    pub duration: f64,
    pub samples: Vec<DecodedSample>,
    pub jumps: Vec<DecodedJump>,
}

impl DecodedTrace {
    /// Inferred value in force at `t`; before the first atom the vacuum prior applies.
    pub fn value_at(&self, t: f64) -> u8 {
        let k = self.samples.partition_point(|s| s.time <= t);
        if k == 0 {
            0
        } else {
            self.samples[k - 1].inferred
        }
    }

    pub fn write_samples_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Decodes a chronologically ordered atom record.
pub fn decode(atoms: &[AtomRecord], params: &DecoderParams) -> Result<DecodedTrace> {
    let duration = atoms.last().map_or(0.0, |a| a.time);
    decode_with_duration(atoms, duration, params)
}

pub fn decode_stream(stream: &AtomStream, params: &DecoderParams) -> Result<DecodedTrace> {
    decode_with_duration(&stream.atoms, stream.duration, params)
}

fn decode_with_duration(atoms: &[AtomRecord], duration: f64, params: &DecoderParams) -> Result<DecodedTrace> {
    params.validate()?;
    if let Some(i) = atoms.windows(2).position(|w| w[1].time < w[0].time) {
        return Err(Error::Input(format!("atom {} at t = {} precedes its predecessor", i + 1, atoms[i + 1].time)));
    }
    let mut vote = MajorityVote::new(params);
    let mut samples = Vec::with_capacity(atoms.len());
    let mut jumps = Vec::new();
    let mut previous = None;
    for a in atoms {
        let out = vote.push(a.detected.bit());
        if let Some(p) = previous {
            if p != out {
                jumps.push(DecodedJump { time: a.time, from: p, to: out });
            }
        }
        previous = Some(out);
        samples.push(DecodedSample { time: a.time, inferred: out });
    }
    Ok(DecodedTrace { duration, samples, jumps })
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Fewest wrong atoms that outvote the right ones in a full window.
pub fn minimal_wrong_majority(window: usize) -> usize {
    window / 2 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteError {
    /// Probability of exactly the minimal wrong majority.
    pub leading_term: f64,
    /// Probability of any wrong majority.
    pub exact_tail: f64,
}

/// Binomial probability that a full window votes wrong when each atom is
/// misread with probability `p_flip`.
pub fn vote_error_probability(p_flip: f64, window: usize) -> Result<VoteError> {
    if !(0.0..=1.0).contains(&p_flip) {
        return domain(format!("p_flip must lie in [0, 1], got {p_flip}"));
    }
    if window == 0 {
        return domain("window must be at least 1");
    }
    let term = |k: usize| binomial(window, k) * p_flip.powi(k as i32) * (1.0 - p_flip).powi((window - k) as i32);
    let k_min = minimal_wrong_majority(window);
    Ok(VoteError { leading_term: term(k_min), exact_tail: (k_min..=window).map(term).sum() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FalseJumpMethod {
    /// Decode a long static-field stream and count departures from the right value.
    MonteCarlo { atoms: u64, seed: SeedRecord },
    /// First-order closed form: previous vote right with the minimal wrong
    /// count minus one, the oldest atom right, the new atom wrong.
    Conditional,
    /// Exact stationary flux of the vote treated as a Markov chain on the window contents.
    MarkovChain,
}

/// Rate (1/s) of spurious decoded jumps away from a static field value.
pub fn false_jump_rate(p_flip: f64, params: &DecoderParams, atom_rate: f64, method: FalseJumpMethod) -> Result<f64> {
    params.validate()?;
    if !(atom_rate > 0.0) {
        return domain(format!("atom_rate must be positive, got {atom_rate}"));
    }
    if !(0.0..=1.0).contains(&p_flip) {
        return domain(format!("p_flip must lie in [0, 1], got {p_flip}"));
    }
    match method {
        FalseJumpMethod::MonteCarlo { atoms, seed } => {
            if atoms == 0 {
                return domain("Monte Carlo needs at least one atom");
            }
            let departures = count_static_departures(p_flip, params, atoms, seed);
            Ok(departures as f64 * atom_rate / atoms as f64)
        }
        FalseJumpMethod::Conditional => {
            let w = params.window;
            let k = minimal_wrong_majority(w);
            let before = binomial(w - 1, k - 1) * p_flip.powi(k as i32 - 1) * (1.0 - p_flip).powi((w - k) as i32);
            Ok(atom_rate * before * p_flip * (1.0 - p_flip))
        }
        FalseJumpMethod::MarkovChain => Ok(atom_rate * VoteChain::solve(p_flip, params.window)?.departure_per_atom),
    }
}

/// Number of decoded departures from the right value (0) in a stream of
/// `atoms` detections, each wrong with probability `p_flip`.
fn count_static_departures(p_flip: f64, params: &DecoderParams, atoms: u64, seed: SeedRecord) -> u64 {
    let mut rng = seed.rng();
    let mut vote = MajorityVote::new(params);
    let mut last = 0u8;
    let mut departures = 0;
    for _ in 0..atoms {
        let bit = u8::from(rng.random::<f64>() < p_flip);
        let warm = vote.is_warm();
        let out = vote.push(bit);
        if warm && last == 0 && out == 1 {
            departures += 1;
        }
        last = out;
    }
    departures
}

/// Stationary behaviour of the vote in a static field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteChain {
    /// Long-run fraction of atoms at which the output is wrong.
    pub wrong_fraction: f64,
    /// Probability per atom that a right output turns wrong.
    pub departure_per_atom: f64,
}

impl VoteChain {
    pub const MAX_WINDOW: usize = 16;

    /// Power iteration over (window contents, held output). Bit 1 marks a wrong atom.
    pub fn solve(p_flip: f64, window: usize) -> Result<Self> {
        if window == 0 || window > Self::MAX_WINDOW {
            return domain(format!("window must lie in 1..={}, got {window}", Self::MAX_WINDOW));
        }
        if !(0.0..=1.0).contains(&p_flip) {
            return domain(format!("p_flip must lie in [0, 1], got {p_flip}"));
        }
        let masks = 1usize << window;
        let full = masks - 1;
        let decide = |mask: usize, held: usize| {
            let wrong = mask.count_ones() as usize;
            match (2 * wrong).cmp(&window) {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => 0,
                std::cmp::Ordering::Equal => held,
            }
        };
        // Window contents are i.i.d.; start from that law with a right output.
        let mut dist = vec![0.0; 2 * masks];
        for mask in 0..masks {
            let w = mask.count_ones() as i32;
            let prob = p_flip.powi(w) * (1.0 - p_flip).powi(window as i32 - w);
            dist[2 * mask + decide(mask, 0)] += prob;
        }
        let mut next = vec![0.0; 2 * masks];
        for iteration in 0.. {
            next.iter_mut().for_each(|x| *x = 0.0);
            for mask in 0..masks {
                for held in 0..2 {
                    let w = dist[2 * mask + held];
                    if w == 0.0 {
                        continue;
                    }
                    for (bit, pb) in [(0usize, 1.0 - p_flip), (1, p_flip)] {
                        let m = ((mask << 1) | bit) & full;
                        next[2 * m + decide(m, held)] += w * pb;
                    }
                }
            }
            let change: f64 = dist.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut dist, &mut next);
            if change < 1e-15 {
                break;
            }
            if iteration > 1_000_000 {
                return Err(Error::Numerical {
                    routine: "vote chain power iteration",
                    detail: format!("no convergence, last change {change:e}"),
                });
            }
        }
        let mut wrong_fraction = 0.0;
        let mut departure = 0.0;
        for mask in 0..masks {
            wrong_fraction += dist[2 * mask + 1];
            let w = dist[2 * mask];
            if w > 0.0 {
                for (bit, pb) in [(0usize, 1.0 - p_flip), (1, p_flip)] {
                    let m = ((mask << 1) | bit) & full;
                    if decide(m, 0) == 1 {
                        departure += w * pb;
                    }
                }
            }
        }
        Ok(Self { wrong_fraction, departure_per_atom: departure })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteLatency {
    /// Mean time spanned by one full window of atoms, s.
    pub duration: f64,
    /// Half of that span, the typical lag between a jump and its detection, s.
    pub delay: f64,
}

pub fn vote_latency(params: &DecoderParams, arr: &ArrivalParams) -> Result<VoteLatency> {
    params.validate()?;
    arr.validate()?;
    if !(arr.occupancy > 0.0) {
        return domain("vote latency needs a non-zero occupancy");
    }
    let duration = (params.window - 1) as f64 * arr.slot_period / arr.occupancy;
    Ok(VoteLatency { duration, delay: duration / 2.0 })
}
