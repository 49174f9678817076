use qnd_core::detection::{
    apply_emission_backaction, detection_probability_g, read_atoms_csv, sample_coupled, sample_detection_stream,
    write_atoms_csv, ArrivalParams, Detected, DetectorParams, EmissionOutcome,
};
use qnd_core::field::{sample_trajectory, BathParams, BirthDeathGenerator, FieldTrajectory, FockLevel};
use qnd_core::probe::{PhaseTable, ProbeGeometry};
use qnd_core::seeds::{SeedRecord, StreamDomain};

fn table() -> PhaseTable {
    PhaseTable::compute(&ProbeGeometry::default(), 5).unwrap()
}

fn seed(index: u64) -> SeedRecord {
    SeedRecord::new(1_234, StreamDomain::Detection, index)
}

#[test]
fn affine_error_model() {
    let (det, t) = (DetectorParams::default(), table());
    let pg: Vec<f64> = (0..3).map(|n| detection_probability_g(FockLevel(n), &det, &t).unwrap()).collect();
    assert!((pg[0] - 0.91).abs() < 1e-6);
    assert!((pg[1] - 0.13).abs() < 1e-6);
    assert!((pg[2] - 0.884).abs() < 1e-3);
    // The computed increment is 0.99979π, so P_ideal(g|1) is 1e-7 rather than 0.
    assert!((pg[0] - pg[1] - det.contrast()).abs() < 1e-6);
    let ideal = PhaseTable::from_phases(vec![0.0, std::f64::consts::PI, 1.88 * std::f64::consts::PI]);
    let g = |n| detection_probability_g(FockLevel(n), &det, &ideal).unwrap();
    assert_eq!(g(0) - g(1), det.contrast());
}

#[test]
fn empirical_detection_probabilities() {
    let (det, t, arr) = (DetectorParams::default(), table(), ArrivalParams { slot_period: 70e-6, occupancy: 1.0 });
    for n in 0..3u32 {
        let traj = FieldTrajectory::constant(FockLevel(n), 7.0);
        let stream = sample_detection_stream(&traj, &arr, &det, &t, seed(n as u64)).unwrap();
        let m = stream.atoms.len() as f64;
        assert!(m >= 1e5);
        let g = stream.atoms.iter().filter(|a| a.detected == Detected::G).count() as f64 / m;
        let p = detection_probability_g(FockLevel(n), &det, &t).unwrap();
        assert!((g - p).abs() < 3.0 * (p * (1.0 - p) / m).sqrt(), "n = {n}: {g} vs {p}");
    }
}

#[test]
fn event_count_is_binomial_at_900_per_second() {
    let (det, t, arr) = (DetectorParams::default(), table(), ArrivalParams::default());
    assert!((arr.atom_rate() - 900.0).abs() < 1.0);
    let duration = 200.0;
    let traj = FieldTrajectory::constant(FockLevel::VACUUM, duration);
    let stream = sample_detection_stream(&traj, &arr, &det, &t, seed(10)).unwrap();
    let slots = arr.slots_in(duration) as f64;
    let (mean, sd) = (slots * 0.063, (slots * 0.063 * 0.937).sqrt());
    let count = stream.atoms.len() as f64;
    assert!((count - mean).abs() < 3.0 * sd, "{count} vs {mean} ± {sd}");
    assert!((count / duration - 900.0).abs() < 10.0);
    for w in stream.atoms.windows(2) {
        let k = w[1].time / arr.slot_period;
        assert!(w[1].time > w[0].time && (k - k.round()).abs() < 1e-6);
    }
}

#[test]
fn telegraph_length_stream() {
    let traj = FieldTrajectory::constant(FockLevel::VACUUM, 2.5);
    let stream = sample_detection_stream(&traj, &ArrivalParams::default(), &DetectorParams::default(), &table(), seed(0)).unwrap();
    // Expected 2,250 with binomial sd 46
    assert!((stream.atoms.len() as f64 - 2250.0).abs() < 150.0);
}

#[test]
fn trivial_streams() {
    let t = table();
    let empty = ArrivalParams { slot_period: 70e-6, occupancy: 0.0 };
    let traj = FieldTrajectory::constant(FockLevel::ONE, 1.0);
    assert!(sample_detection_stream(&traj, &empty, &DetectorParams::default(), &t, seed(1)).unwrap().atoms.is_empty());
    let s = sample_detection_stream(&traj, &ArrivalParams::default(), &DetectorParams::perfect(), &t, seed(1)).unwrap();
    assert!(!s.atoms.is_empty() && s.atoms.iter().all(|a| a.detected == Detected::E));
}

#[test]
fn records_follow_the_trajectory_and_leave_it_untouched() {
    let bath = BathParams::default();
    let traj = sample_trajectory(FockLevel::ONE, 20.0, &bath, SeedRecord::new(5, StreamDomain::Field, 0)).unwrap();
    let before = traj.clone();
    let s = sample_detection_stream(&traj, &ArrivalParams::default(), &DetectorParams::default(), &table(), seed(2)).unwrap();
    assert_eq!(traj, before);
    assert!(s.atoms.iter().all(|a| a.true_n == traj.state_at(a.time) && a.time <= traj.duration));
    let again = sample_detection_stream(&traj, &ArrivalParams::default(), &DetectorParams::default(), &table(), seed(2)).unwrap();
    assert_eq!(s, again);
}

#[test]
fn emission_injections_are_binomial() {
    let det = DetectorParams { emission_prob: 1e-4, ..DetectorParams::default() };
    let mut rng = seed(3).rng();
    let mut injected = 0;
    for _ in 0..100_000 {
        if let EmissionOutcome::Injected(n) = apply_emission_backaction(FockLevel::VACUUM, 5, &det, &mut rng) {
            assert_eq!(n, FockLevel::ONE);
            injected += 1;
        }
    }
    assert!((injected as f64 - 10.0).abs() <= 2.0 * 10f64.sqrt(), "{injected}");
    assert_eq!(apply_emission_backaction(FockLevel(5), 5, &DetectorParams { emission_prob: 1e-4, ..det }, &mut AlwaysEmit), EmissionOutcome::Clamped);
    let off = DetectorParams::default();
    assert_eq!(apply_emission_backaction(FockLevel(2), 5, &off, &mut rng), EmissionOutcome::Unchanged);
}

/// RNG yielding zeros, so every Bernoulli trial succeeds.
struct AlwaysEmit;

impl rand::RngCore for AlwaysEmit {
    fn next_u32(&mut self) -> u32 {
        0
    }
    fn next_u64(&mut self) -> u64 {
        0
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        dst.fill(0)
    }
}

#[test]
fn emission_pumping_raises_the_mean() {
    let bath = BathParams::default();
    let pumped = BirthDeathGenerator::thermal(&bath).with_pumping(1e-4 * 900.0).stationary();
    assert!(pumped.mean() > 0.07, "{}", pumped.mean());
    let det = DetectorParams { emission_prob: 1e-4, ..DetectorParams::default() };
    let run = sample_coupled(FockLevel::VACUUM, 2000.0, &bath, &ArrivalParams::default(), &det, &table(), SeedRecord::new(8, StreamDomain::Coupled, 0)).unwrap();
    let expected = 2000.0 * 900.0 * 1e-4;
    assert!((run.injections as f64 - expected).abs() < 4.0 * expected.sqrt(), "{} injections", run.injections);
    assert!(run.trajectory.time_average_n() > 0.063);
    assert!(run.trajectory.validate().is_ok());
    assert!(sample_detection_stream(&run.trajectory, &ArrivalParams::default(), &det, &table(), seed(0)).is_err());
}

#[test]
fn csv_round_trip() {
    let traj = FieldTrajectory::constant(FockLevel::ONE, 0.1);
    let s = sample_detection_stream(&traj, &ArrivalParams::default(), &DetectorParams::default(), &table(), seed(4)).unwrap();
    let mut buf = Vec::new();
    write_atoms_csv(&mut buf, &s.atoms).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("time_s,true_n,detected\n"));
    assert_eq!(read_atoms_csv(buf.as_slice()).unwrap(), s.atoms);
}

#[test]
fn rejects_invalid_detectors() {
    assert!(DetectorParams { p_g_given_1: 0.6, p_e_given_0: 0.4, emission_prob: 0.0 }.validate().is_err());
    assert!(DetectorParams { emission_prob: 2e-4, ..DetectorParams::default() }.validate().is_err());
    assert!(ArrivalParams { slot_period: 70e-6, occupancy: 1.5 }.validate().is_err());
    assert!(ArrivalParams::default().check_rate(900.0).is_ok());
    assert!(ArrivalParams::default().check_rate(1000.0).is_err());
}
