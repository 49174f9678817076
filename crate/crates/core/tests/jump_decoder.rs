use proptest::prelude::*;
use qnd_core::analysis::jump_latencies;
use qnd_core::decoder::{
    decode, decode_stream, false_jump_rate, vote_error_probability, vote_latency, DecoderParams, FalseJumpMethod,
    MajorityVote, VoteChain,
};
use qnd_core::detection::{sample_detection_stream, ArrivalParams, AtomRecord, Detected, DetectorParams};
use qnd_core::ensemble::Apparatus;
use qnd_core::field::{FieldTrajectory, FockLevel, JumpEvent};
use qnd_core::probe::{PhaseTable, ProbeGeometry};
use qnd_core::seeds::{SeedRecord, StreamDomain};

fn atoms(bits: &[u8]) -> Vec<AtomRecord> {
    bits.iter()
        .enumerate()
        .map(|(i, &b)| AtomRecord {
            time: (i + 1) as f64 * 1e-3,
            true_n: FockLevel(0),
            detected: if b == 1 { Detected::E } else { Detected::G },
        })
        .collect()
}

fn table() -> PhaseTable {
    PhaseTable::compute(&ProbeGeometry::default(), 5).unwrap()
}

#[test]
fn hand_executed_flip() {
    let mut bits = vec![0u8; 8];
    bits.extend([1u8; 8]);
    let trace = decode(&atoms(&bits), &DecoderParams::default()).unwrap();
    let out: Vec<u8> = trace.samples.iter().map(|s| s.inferred).collect();
    // 1-based atom 12 is a 4/4 tie and holds 0; atom 13 is the first 5/8.
    assert_eq!(out[11], 0);
    assert_eq!(out[12], 1);
    assert_eq!(trace.jumps.len(), 1);
    assert!((trace.jumps[0].time - 13e-3).abs() < 1e-15);
}

#[test]
fn ties_hold_the_previous_output() {
    let p = DecoderParams::default();
    // Output 1 before the tie: 4/4 keeps 1.
    let trace = decode(&atoms(&[1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0]), &p).unwrap();
    assert_eq!(trace.samples[11].inferred, 1);
    // Output 0 before the tie: 4/4 keeps 0.
    let trace = decode(&atoms(&[0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1]), &p).unwrap();
    assert_eq!(trace.samples[11].inferred, 0);
    // Flip to 1 at atom 9, then zeros: the 4/4 tie at atom 13 keeps 1.
    let trace = decode(&atoms(&[0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]), &p).unwrap();
    let out: Vec<u8> = trace.samples.iter().map(|s| s.inferred).collect();
    assert_eq!(&out[7..], &[0, 1, 1, 1, 1, 1, 0]);
}

#[test]
fn warm_up_ties_resolve_to_zero() {
    let trace = decode(&atoms(&[1, 0, 1, 1]), &DecoderParams::default()).unwrap();
    let out: Vec<u8> = trace.samples.iter().map(|s| s.inferred).collect();
    assert_eq!(out, vec![1, 0, 1, 1]);
    let trace = decode(&atoms(&[0, 1]), &DecoderParams::default()).unwrap();
    assert_eq!(trace.samples[1].inferred, 0);
    assert!(decode(&[], &DecoderParams::default()).unwrap().samples.is_empty());
}

#[test]
fn rejects_unordered_streams() {
    let mut a = atoms(&[0, 0, 1]);
    a.swap(0, 2);
    assert!(decode(&a, &DecoderParams::default()).is_err());
    assert!(DecoderParams::with_window(0).validate().is_err());
}

#[test]
fn perfect_detector_on_pinned_field_never_jumps() {
    let arr = ArrivalParams::default();
    for n in [0, 1] {
        let traj = FieldTrajectory::constant(FockLevel(n), 50.0);
        let s = sample_detection_stream(&traj, &arr, &DetectorParams::perfect(), &table(), SeedRecord::new(1, StreamDomain::Detection, n as u64)).unwrap();
        let trace = decode_stream(&s, &DecoderParams::default()).unwrap();
        assert!(trace.jumps.is_empty());
        assert!(trace.samples.iter().all(|x| x.inferred == n as u8));
    }
}

/// A single 0→1 jump at 1.054 s, followed within 8 atom arrivals in most shots.
#[test]
fn figure_two_style_jump() {
    let (arr, det, dec, t) = (ArrivalParams::default(), DetectorParams::default(), DecoderParams::default(), table());
    let traj = FieldTrajectory {
        initial: FockLevel::VACUUM,
        duration: 2.5,
        events: vec![JumpEvent { time: 1.054, from: FockLevel::VACUUM, to: FockLevel::ONE }],
        seed: None,
    };
    let mut within = 0;
    let shots = 400;
    for i in 0..shots {
        let s = sample_detection_stream(&traj, &arr, &det, &t, SeedRecord::new(2, StreamDomain::Detection, i)).unwrap();
        let trace = decode_stream(&s, &dec).unwrap();
        let after: Vec<&AtomRecord> = s.atoms.iter().filter(|a| a.time >= 1.054).take(8).collect();
        let deadline = after.last().unwrap().time;
        if trace.jumps.iter().any(|j| j.to == 1 && j.time >= 1.054 && j.time <= deadline) {
            within += 1;
        }
    }
    // Five of eight right atoms is needed; with 13% misreads that fails in about 4% of shots.
    assert!(within as f64 / shots as f64 > 0.9, "{within}/{shots}");
}

#[test]
fn vote_error_paper_values() {
    let e = vote_error_probability(0.13, 8).unwrap();
    assert!((e.leading_term - 56.0 * 0.13f64.powi(5) * 0.87f64.powi(3)).abs() < 1e-15);
    assert!((e.leading_term - 1.4e-3).abs() < 0.05e-3);
    let e = vote_error_probability(0.09, 8).unwrap();
    assert!((e.leading_term - 2.5e-4).abs() < 0.1e-4);
    assert!(e.exact_tail > e.leading_term);
    assert_eq!(vote_error_probability(0.0, 8).unwrap().exact_tail, 0.0);
}

#[test]
fn vote_latency_values() {
    let l = vote_latency(&DecoderParams::default(), &ArrivalParams::default()).unwrap();
    assert!((l.duration - 7.78e-3).abs() < 0.01e-3);
    assert!((l.delay - 3.89e-3).abs() < 0.01e-3);
    assert_eq!(vote_latency(&DecoderParams::with_window(1), &ArrivalParams::default()).unwrap().duration, 0.0);
}

#[test]
fn false_jump_methods_agree() {
    let dec = DecoderParams::default();
    for (p, paper) in [(0.13, 0.61), (0.09, 0.12)] {
        let mc = false_jump_rate(p, &dec, 900.0, FalseJumpMethod::MonteCarlo {
            atoms: 10_000_000,
            seed: SeedRecord::new(3, StreamDomain::StaticDecoding, 0),
        })
        .unwrap();
        let cond = false_jump_rate(p, &dec, 900.0, FalseJumpMethod::Conditional).unwrap();
        let chain = false_jump_rate(p, &dec, 900.0, FalseJumpMethod::MarkovChain).unwrap();
        assert!((cond - mc).abs() < 0.3 * mc, "p = {p}: conditional {cond}, MC {mc}");
        // Counting noise on ~10⁴ events is ≤ 3%.
        assert!((chain - mc).abs() < 0.05 * mc, "p = {p}: chain {chain}, MC {mc}");
        assert!((mc - paper).abs() < 0.25 * paper);
    }
    assert_eq!(false_jump_rate(0.0, &dec, 900.0, FalseJumpMethod::Conditional).unwrap(), 0.0);
    assert_eq!(false_jump_rate(0.0, &dec, 900.0, FalseJumpMethod::MarkovChain).unwrap(), 0.0);
}

#[test]
fn vote_chain_wrong_fraction_matches_static_stream() {
    let p = 0.13;
    let chain = VoteChain::solve(p, 8).unwrap();
    let mut rng = SeedRecord::new(4, StreamDomain::StaticDecoding, 1).rng();
    let mut vote = MajorityVote::new(&DecoderParams::default());
    let (mut wrong, n) = (0u64, 4_000_000u64);
    for i in 0..n {
        let out = vote.push(u8::from(rand::Rng::random::<f64>(&mut rng) < p));
        if i >= 8 {
            wrong += out as u64;
        }
    }
    let f = wrong as f64 / (n - 8) as f64;
    assert!((f - chain.wrong_fraction).abs() < 0.1 * chain.wrong_fraction, "{f} vs {}", chain.wrong_fraction);
}

/// With error-free readout a flip needs exactly five new atoms. For a jump
/// at phase φ inside a slot the mean delay is `slot (5 / occupancy − φ)`.
#[test]
fn latency_with_perfect_readout_matches_closed_form() {
    let arr = ArrivalParams::default();
    let phi = 0.5;
    let events: Vec<JumpEvent> = (1..=2000u32)
        .map(|j| {
            let time = ((j as f64 * 0.25 / arr.slot_period).floor() + phi) * arr.slot_period;
            let (from, to) = if j % 2 == 1 { (FockLevel::VACUUM, FockLevel::ONE) } else { (FockLevel::ONE, FockLevel::VACUUM) };
            JumpEvent { time, from, to }
        })
        .collect();
    let traj = FieldTrajectory { initial: FockLevel::VACUUM, duration: 501.0, events, seed: None };
    let s = sample_detection_stream(&traj, &arr, &DetectorParams::perfect(), &table(), SeedRecord::new(6, StreamDomain::Detection, 0)).unwrap();
    let report = jump_latencies(&traj, &decode_stream(&s, &DecoderParams::default()).unwrap());
    assert_eq!((report.missed, report.untracked, report.latencies.len()), (0, 0, 2000));
    let m = report.latencies.len() as f64;
    let mean = report.latencies.iter().sum::<f64>() / m;
    let sd = (report.latencies.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let expected = arr.slot_period * (5.0 / arr.occupancy - phi);
    assert!((mean - expected).abs() < 3.0 * sd / m.sqrt(), "{mean} vs {expected}");
}

/// Mean delay between true P₁ changes and the decoded changes, at paper parameters.
/// The invariant band is 3.9 ms ± 1 ms. A flip needs at least five new atoms,
/// 5.5 ms on average, so this band is not reachable with the stated decoder.
#[test]
#[ignore = "unattainable invariant: measured mean is 5.6 ms, see README"]
fn decoded_jump_latency() {
    let app = Apparatus::paper_defaults().unwrap();
    let reports = app
        .map_shots(&FockLevel::ONE.into(), 20.0, 31, 0..200, |shot| Ok(jump_latencies(&shot.trajectory, &shot.decoded)))
        .unwrap();
    let all: Vec<f64> = reports.iter().flat_map(|r| r.latencies.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let missed: usize = reports.iter().map(|r| r.missed).sum();
    let untracked: usize = reports.iter().map(|r| r.untracked).sum();
    let mut sorted = all.clone();
    sorted.sort_by(f64::total_cmp);
    eprintln!(
        "latency: mean {:.3} ms, median {:.3} ms over {} jumps, {missed} missed, {untracked} untracked",
        mean * 1e3,
        sorted[sorted.len() / 2] * 1e3,
        all.len()
    );
    assert!(all.len() > 1000);
    assert!((mean - 3.9e-3).abs() < 1e-3, "mean decoded latency {:.3} ms", mean * 1e3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Output after any prefix depends only on the held value and the last window of bits.
    #[test]
    fn suffix_replay(bits in proptest::collection::vec(0u8..2, 9..200), cut in 0usize..190) {
        let p = DecoderParams::default();
        let cut = cut.min(bits.len() - 9) + 8;
        let full = decode(&atoms(&bits), &p).unwrap();
        let held = full.samples[cut - 1].inferred;
        // Seed the replay: window of the last 8 bits with the held output
        let mut vote = MajorityVote::new(&p);
        let prime: Vec<u8> = if held == 1 { vec![1; 8] } else { vec![0; 8] };
        for b in prime { vote.push(b); }
        for &b in &bits[cut - 8..cut] { vote.push(b); }
        prop_assert_eq!(vote.output(), Some(held));
        for (k, &b) in bits[cut..].iter().enumerate() {
            prop_assert_eq!(vote.push(b), full.samples[cut + k].inferred);
        }
    }

    #[test]
    fn jumps_are_consistent_with_samples(bits in proptest::collection::vec(0u8..2, 0..300)) {
        let trace = decode(&atoms(&bits), &DecoderParams::default()).unwrap();
        let changes = trace.samples.windows(2).filter(|w| w[0].inferred != w[1].inferred).count();
        prop_assert_eq!(changes, trace.jumps.len());
        for j in &trace.jumps { prop_assert_ne!(j.from, j.to); }
    }
}
