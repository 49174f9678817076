//! Scenario runners. Each returns its artifacts and the seeds it consumed.

use std::f64::consts::PI;

use qnd_core::analysis::{
    ensemble_p1_measured, ensemble_p1_true, equilibrium_thermometry, lifetime_analysis, prepare_initial,
    LifetimeAnalysis, PreparationSpec, ThermometryOptions, Timing,
};
use qnd_core::decoder::{vote_error_probability, vote_latency, VoteChain};
use qnd_core::detection::{detection_probability_g, write_atoms_csv};
use qnd_core::ensemble::Apparatus;
use qnd_core::field::{
    jump_rates, master_equation_evolve, planck_occupation, stationary_distribution, FockLevel, InitialState,
};
use qnd_core::probe::{adiabatic_transition_probability, ideal_detection_probability, PhaseTable};
use qnd_core::seeds::SeedRecord;
use serde::Serialize;
use serde_json::json;

use crate::config::{Config, Scenario};
use crate::output::{csv_bytes, Artifacts};
use crate::RunError;

/// Seeds behind one simulated shot.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ShotSeeds {
    pub shot: u64,
    pub streams: Vec<SeedRecord>,
}

pub struct Outcome {
    pub artifacts: Artifacts,
    pub seeds: Vec<ShotSeeds>,
}

/// Shots are run in parallel batches of this size when collecting events.
const EVENT_BATCH: u64 = 256;

pub fn run(cfg: &Config) -> Result<Outcome, RunError> {
    match cfg.scenario {
        Scenario::Telegraph => telegraph(cfg),
        Scenario::FockDecay => fock_decay(cfg),
        Scenario::LifetimeHistograms => lifetime_histograms(cfg),
        Scenario::Thermometry => thermometry(cfg),
        Scenario::PhaseCheck => phase_check(cfg),
        Scenario::AdiabaticityCheck => adiabaticity_check(cfg),
    }
}

fn apparatus(cfg: &Config) -> Result<Apparatus, RunError> {
    Ok(Apparatus::new(cfg.bath, &cfg.geom, cfg.arrivals, cfg.detector, cfg.decoder)?)
}

fn initial(cfg: &Config, prep: &PreparationSpec) -> Result<InitialState, RunError> {
    Ok(prepare_initial(prep, &cfg.bath)?.into())
}

fn seeds(app: &Apparatus, base: u64, shots: u64) -> Vec<ShotSeeds> {
    (0..shots).map(|shot| ShotSeeds { shot, streams: app.shot_seeds(base, shot) }).collect()
}

fn suffixed(stem: &str, ext: &str, i: u64, n: u64) -> String {
    if n == 1 {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_{i:04}.{ext}")
    }
}

fn telegraph(cfg: &Config) -> Result<Outcome, RunError> {
    let app = apparatus(cfg)?;
    let init = initial(cfg, &cfg.prep)?;
    let n = cfg.n_trajectories;
    let shots = app.run_ensemble(&init, cfg.duration_s, cfg.base_seed, n)?;
    let mut artifacts = Artifacts::default();
    let mut summary = Vec::new();
    for shot in &shots {
        let i = shot.index;
        let mut atoms = Vec::new();
        write_atoms_csv(&mut atoms, &shot.stream.atoms)?;
        artifacts.add(suffixed("atoms", "csv", i, n), atoms);
        let mut decoded = Vec::new();
        shot.decoded.write_samples_csv(&mut decoded)?;
        artifacts.add(suffixed("decoded", "csv", i, n), decoded);
        artifacts.add_json(suffixed("decoded_jumps", "json", i, n), &shot.decoded.jumps)?;
        let field = shot.trajectory.events.iter().map(|e| (e.time, e.from.n(), e.to.n()));
        artifacts.add(suffixed("field_jumps", "csv", i, n), csv_bytes(&["time_s", "from", "to"], field)?);
        let ones = shot.decoded.samples.iter().filter(|s| s.inferred == 1).count();
        summary.push(json!({
            "shot": i,
            "initial_n": shot.trajectory.initial.n(),
            "detection_events": shot.stream.atoms.len(),
            "field_jumps": shot.trajectory.events.len(),
            "decoded_jumps": shot.decoded.jumps.len(),
            "fraction_votes_one": ones as f64 / shot.decoded.samples.len().max(1) as f64,
            "photons_injected": shot.injections,
            "injections_clamped": shot.clamped,
        }));
    }
    artifacts.add_json("summary.json", &json!({ "scenario": "telegraph", "shots": summary }))?;
    Ok(Outcome { artifacts, seeds: seeds(&app, cfg.base_seed, n) })
}

fn fock_decay(cfg: &Config) -> Result<Outcome, RunError> {
    let app = apparatus(cfg)?;
    let init = initial(cfg, &cfg.prep)?;
    let lat = vote_latency(&cfg.decoder, &cfg.arrivals)?;
    let k = cfg.grid_points;
    let grid: Vec<f64> = (1..=k).map(|i| cfg.duration_s * i as f64 / k as f64).collect();
    // Extra vote delay so that latency-corrected lookups stay inside every trace.
    let span = cfg.duration_s + lat.delay;
    let shots = app.map_shots(&init, span, cfg.base_seed, 0..cfg.n_trajectories, |s| Ok((s.trajectory, s.decoded)))?;
    let (trajs, traces): (Vec<_>, Vec<_>) = shots.into_iter().unzip();
    let measured = ensemble_p1_measured(&traces, &grid, Timing::LatencyCorrected { delay: lat.delay })?;
    let observed = ensemble_p1_measured(&traces, &grid, Timing::AsObserved)?;
    let truth = ensemble_p1_true(&trajs, &grid)?;
    let mut full = vec![0.0];
    full.extend(&grid);
    let p0 = prepare_initial(&cfg.prep, &cfg.bath)?;
    let oracle: Vec<f64> = master_equation_evolve(&p0, &cfg.bath, &full)?.iter().skip(1).map(|p| p.p(1)).collect();

    let n = cfg.n_trajectories as f64;
    let z: Vec<f64> =
        oracle.iter().zip(&measured.mean).map(|(p, m)| (m - p) / (p * (1.0 - p) / n).sqrt().max(f64::MIN_POSITIVE)).collect();
    let rows = (0..k).map(|i| {
        (grid[i], measured.mean[i], measured.stderr[i], observed.mean[i], truth.mean[i], truth.stderr[i], oracle[i], z[i])
    });
    let header = [
        "t_s",
        "p1_decoded",
        "p1_decoded_stderr",
        "p1_decoded_as_observed",
        "p1_true",
        "p1_true_stderr",
        "p1_master_equation",
        "z_decoded_vs_master",
    ];
    let mut artifacts = Artifacts::default();
    artifacts.add("p1_curve.csv", csv_bytes(&header, rows)?);
    let tau_one = 1.0 / jump_rates(FockLevel::ONE, &cfg.bath)?.total();
    artifacts.add_json(
        "summary.json",
        &json!({
            "scenario": "fock_decay",
            "n_trajectories": cfg.n_trajectories,
            "grid_points": k,
            "vote_delay_s": lat.delay,
            "max_abs_z": z.iter().fold(0.0f64, |a, b| a.max(b.abs())),
            "one_photon_lifetime_s": tau_one,
        }),
    )?;
    Ok(Outcome { artifacts, seeds: seeds(&app, cfg.base_seed, cfg.n_trajectories) })
}

fn fit_json(a: &LifetimeAnalysis, shots: u64) -> serde_json::Value {
    json!({
        "shots": shots,
        "events": a.event_times.len(),
        "censored": a.censored,
        "censored_exposure_s": a.censored_exposure,
        "mle": a.mle,
        "binned_loglinear": a.binned,
    })
}

fn lifetime_histograms(cfg: &Config) -> Result<Outcome, RunError> {
    let app = apparatus(cfg)?;
    let one = PreparationSpec::fock_one();
    let zero = PreparationSpec::thermal();
    let c1 = app.first_jumps_until(
        &initial(cfg, &one)?,
        cfg.trace_duration_one_s,
        one.expected_reading(),
        cfg.n_events_one,
        cfg.base_seed,
        EVENT_BATCH,
    )?;
    // The |0⟩ ensemble draws from its own base seed.
    let zero_seed = cfg.base_seed.wrapping_add(1);
    let c0 = app.first_jumps_until(
        &initial(cfg, &zero)?,
        cfg.trace_duration_zero_s,
        zero.expected_reading(),
        cfg.n_events_zero,
        zero_seed,
        EVENT_BATCH,
    )?;
    let a1 = lifetime_analysis(&c1.jumps)?;
    let a0 = lifetime_analysis(&c0.jumps)?;
    let mut artifacts = Artifacts::default();
    for (label, a) in [("one", &a1), ("zero", &a0)] {
        let bins = a.histogram.iter().map(|b| (b.lo, b.hi, b.count));
        artifacts.add(format!("histogram_{label}.csv"), csv_bytes(&["bin_lo_s", "bin_hi_s", "count"], bins)?);
        artifacts.add(format!("events_{label}.csv"), csv_bytes(&["duration_s"], a.event_times.iter().map(|t| (t,)))?);
    }
    let rate = cfg.arrivals.atom_rate();
    artifacts.add_json(
        "summary.json",
        &json!({
            "scenario": "lifetime_histograms",
            "one": fit_json(&a1, c1.shots),
            "zero": fit_json(&a0, c0.shots),
            "field_lifetime_one_s": 1.0 / jump_rates(FockLevel::ONE, &cfg.bath)?.total(),
            "field_lifetime_zero_s": 1.0 / jump_rates(FockLevel::VACUUM, &cfg.bath)?.total(),
            "vote_departure_rate_one_per_s": rate * VoteChain::solve(cfg.detector.p_g_given_1, cfg.decoder.window)?.departure_per_atom,
            "vote_departure_rate_zero_per_s": rate * VoteChain::solve(cfg.detector.p_e_given_0, cfg.decoder.window)?.departure_per_atom,
        }),
    )?;
    let mut s = seeds(&app, cfg.base_seed, c1.shots);
    for mut z in seeds(&app, zero_seed, c0.shots) {
        z.shot += c1.shots;
        s.push(z);
    }
    Ok(Outcome { artifacts, seeds: s })
}

fn thermometry(cfg: &Config) -> Result<Outcome, RunError> {
    let app = apparatus(cfg)?;
    let init = initial(cfg, &cfg.prep)?;
    let traces = app.map_shots(&init, cfg.duration_s, cfg.base_seed, 0..cfg.n_trajectories, |s| Ok(s.decoded))?;
    let e = equilibrium_thermometry(&traces, &cfg.detector, &cfg.decoder, ThermometryOptions::default())?;
    let planck = planck_occupation(cfg.cavity_frequency_ghz * 1e9, cfg.mirror_temperature_k)?;
    let mut artifacts = Artifacts::default();
    artifacts.add_json(
        "summary.json",
        &json!({
            "scenario": "thermometry",
            "estimate": e,
            "configured_n_therm": cfg.bath.n_therm,
            "planck_occupation": planck,
            "stationary_p1": stationary_distribution(&cfg.bath).p(1),
        }),
    )?;
    Ok(Outcome { artifacts, seeds: seeds(&app, cfg.base_seed, cfg.n_trajectories) })
}

fn phase_check(cfg: &Config) -> Result<Outcome, RunError> {
    let table = PhaseTable::compute(&cfg.geom, cfg.bath.n_max)?;
    let levels = 0..=cfg.bath.n_max;
    let p_ideal: Vec<f64> = levels.clone().map(|n| ideal_detection_probability(FockLevel(n), &table)).collect::<Result<_, _>>()?;
    let p_g: Vec<f64> =
        levels.map(|n| detection_probability_g(FockLevel(n), &cfg.detector, &table)).collect::<Result<_, _>>()?;
    let mut artifacts = Artifacts::default();
    artifacts.add_json(
        "phases.json",
        &json!({
            "scenario": "phase_check",
            "phases_over_pi": table.phases.iter().map(|p| p / PI).collect::<Vec<_>>(),
            "increments_over_pi": table.increments().iter().map(|p| p / PI).collect::<Vec<_>>(),
            "p_ideal_g": p_ideal,
            "p_detect_g": p_g,
            "vote_error_one": vote_error_probability(cfg.detector.p_g_given_1, cfg.decoder.window)?,
            "vote_error_zero": vote_error_probability(cfg.detector.p_e_given_0, cfg.decoder.window)?,
        }),
    )?;
    Ok(Outcome { artifacts, seeds: Vec::new() })
}

fn adiabaticity_check(cfg: &Config) -> Result<Outcome, RunError> {
    let mut rows = Vec::new();
    for n in 0..cfg.bath.n_max.min(2) + 1 {
        let r = adiabatic_transition_probability(FockLevel(n), &cfg.geom)?;
        rows.push(json!({
            "n": n,
            "transition_probability": r.probability,
            "max_norm_deviation": r.max_norm_deviation,
            "steps": r.steps,
        }));
    }
    let mut artifacts = Artifacts::default();
    artifacts.add_json("adiabaticity.json", &json!({ "scenario": "adiabaticity_check", "levels": rows, "bound": 1e-5 }))?;
    Ok(Outcome { artifacts, seeds: Vec::new() })
}
