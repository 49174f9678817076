//! Ensemble estimators: state preparation, ⟨P₁(t)⟩ curves, first-jump
//! lifetimes and equilibrium thermometry.

use serde::{Deserialize, Serialize};

use crate::decoder::{DecodedTrace, DecoderParams, VoteChain};
use crate::detection::DetectorParams;
use crate::error::{domain, Error, Result};
use crate::field::{stationary_distribution, BathParams, FieldTrajectory, FockDistribution, FockLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepTarget {
    /// Thermal photons absorbed by resonant ground-state atoms.
    VacuumReset,
    /// One photon left behind by a resonant excited atom after half a Rabi period.
    FockOne,
    /// Field left at thermal equilibrium.
    Thermal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreparationSpec {
    pub target: PrepTarget,
    /// Weight of the wrong level in an imperfect preparation.
    pub residual_error: f64,
}

impl PreparationSpec {
    /// Residual photon number left by the vacuum reset.
    pub const VACUUM_RESIDUAL: f64 = 0.003;

    pub fn vacuum_reset() -> Self {
        Self { target: PrepTarget::VacuumReset, residual_error: Self::VACUUM_RESIDUAL }
    }
    pub fn fock_one() -> Self {
        Self { target: PrepTarget::FockOne, residual_error: 0.0 }
    }
    pub fn thermal() -> Self {
        Self { target: PrepTarget::Thermal, residual_error: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.residual_error) {
            return domain(format!("residual_error must lie in [0, 0.5), got {}", self.residual_error));
        }
        Ok(())
    }

    /// Decoded projector value the prepared state should show.
    pub fn expected_reading(&self) -> u8 {
        match self.target {
            PrepTarget::FockOne => 1,
            PrepTarget::VacuumReset | PrepTarget::Thermal => 0,
        }
    }
}

/// Level populations right after the preparation.
pub fn prepare_initial(spec: &PreparationSpec, bath: &BathParams) -> Result<FockDistribution> {
    spec.validate()?;
    bath.validate()?;
    let mut p = vec![0.0; bath.levels()];
    match spec.target {
        PrepTarget::VacuumReset => {
            p[0] = 1.0 - spec.residual_error;
            p[1] = spec.residual_error;
        }
        PrepTarget::FockOne => {
            p[1] = 1.0 - spec.residual_error;
            p[0] = spec.residual_error;
        }
        PrepTarget::Thermal => return Ok(stationary_distribution(bath)),
    }
    FockDistribution::new(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCurve {
    pub t_grid: Vec<f64>,
    pub mean: Vec<f64>,
    /// Binomial standard error `sqrt(p (1 − p) / N)` of each point.
    pub stderr: Vec<f64>,
    pub n_trajectories: usize,
}

/// How decoded samples are placed in time when building curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Each vote is dated by the atom that completed it.
    AsObserved,
    /// Each vote is dated `delay` seconds earlier, towards the middle of its window.
    LatencyCorrected { delay: f64 },
}

impl Timing {
    fn shift(self) -> f64 {
        match self {
            Timing::AsObserved => 0.0,
            Timing::LatencyCorrected { delay } => delay,
        }
    }
}

fn curve_from<F: Fn(usize, f64) -> u8>(count: usize, t_grid: &[f64], value: F) -> EnsembleCurve {
    let n = count as f64;
    let mean: Vec<f64> =
        t_grid.iter().map(|&t| (0..count).map(|i| value(i, t) as f64).sum::<f64>() / n).collect();
    let stderr = mean.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    EnsembleCurve { t_grid: t_grid.to_vec(), mean, stderr, n_trajectories: count }
}

fn check_durations(durations: impl Iterator<Item = f64>, t_grid: &[f64]) -> Result<usize> {
    let durations: Vec<f64> = durations.collect();
    let Some(&first) = durations.first() else {
        return Err(Error::Input("ensemble is empty".into()));
    };
    if durations.iter().any(|d| (d - first).abs() > 1e-9 * first.abs().max(1.0)) {
        return Err(Error::Input("ensemble members have mismatched durations".into()));
    }
    if t_grid.iter().any(|t| *t < 0.0 || *t > first) {
        return Err(Error::Input(format!("time grid leaves the common duration [0, {first}]")));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input("time grid must be strictly increasing".into()));
    }
    Ok(durations.len())
}

/// Fraction of field trajectories holding exactly one photon at each grid time.
pub fn ensemble_p1_true(trajectories: &[FieldTrajectory], t_grid: &[f64]) -> Result<EnsembleCurve> {
    let count = check_durations(trajectories.iter().map(|t| t.duration), t_grid)?;
    Ok(curve_from(count, t_grid, |i, t| u8::from(trajectories[i].state_at(t) == FockLevel::ONE)))
}

/// Fraction of decoded traces reading one photon at each grid time.
pub fn ensemble_p1_measured(traces: &[DecodedTrace], t_grid: &[f64], timing: Timing) -> Result<EnsembleCurve> {
    let count = check_durations(traces.iter().map(|t| t.duration), t_grid)?;
    let shift = timing.shift();
    Ok(curve_from(count, t_grid, |i, t| traces[i].value_at(t + shift)))
}

/// Lifetime of the prepared reading in one trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstJump {
    /// Time of the first sample showing the prepared value, s.
    pub start: f64,
    /// Time from `start` to the first jump away, or to the end of the trace.
    pub duration: f64,
    pub censored: bool,
}

/// First decoded jump away from `prepared`. Analysis starts at the first
/// sample with index at least `skip` reading `prepared`; traces that never
/// show it yield `None`. Passing `window − 1` as `skip` ignores warm-up votes.
pub fn first_jump(trace: &DecodedTrace, prepared: u8, skip: usize, timing: Timing) -> Option<FirstJump> {
    let start = trace.samples.iter().skip(skip).find(|s| s.inferred == prepared)?.time;
    match trace.jumps.iter().find(|j| j.time > start) {
        Some(j) => {
            let end = (j.time - timing.shift()).max(start);
            Some(FirstJump { start, duration: end - start, censored: false })
        }
        None => Some(FirstJump { start, duration: trace.duration - start, censored: true }),
    }
}

/// First exit of the true field from `level`, starting when it first holds `level`.
pub fn first_jump_true(traj: &FieldTrajectory, level: FockLevel) -> Option<FirstJump> {
    traj.sojourns().into_iter().find(|s| s.level == level).map(|s| FirstJump {
        start: s.start,
        duration: s.length(),
        censored: s.censored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    MleExponential,
    BinnedLoglinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub tau: f64,
    pub tau_stderr: f64,
    pub method: FitMethod,
    pub n_events: usize,
}

/// Smallest number of events for a reportable fit.
pub const MIN_FIT_EVENTS: usize = 10;

/// Exponential maximum likelihood with right censoring: `τ = exposure / events`.
pub fn fit_exponential_mle(events: &[f64], censored_exposure: f64) -> Result<LifetimeFit> {
    if events.len() < MIN_FIT_EVENTS {
        return Err(Error::Insufficient(format!("{} events, need at least {MIN_FIT_EVENTS}", events.len())));
    }
    let n = events.len() as f64;
    let tau = (events.iter().sum::<f64>() + censored_exposure) / n;
    if !(tau > 0.0) {
        return Err(Error::Insufficient("all event durations are zero".into()));
    }
    Ok(LifetimeFit { tau, tau_stderr: tau / n.sqrt(), method: FitMethod::MleExponential, n_events: events.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Equal-width histogram of `events` over `[0, range]`.
pub fn histogram(events: &[f64], range: f64, bins: usize) -> Vec<HistogramBin> {
    let width = range / bins as f64;
    let mut counts = vec![0usize; bins];
    for &e in events {
        if (0.0..range).contains(&e) {
            counts[((e / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin { lo: k as f64 * width, hi: (k + 1) as f64 * width, count })
        .collect()
}

/// Weighted straight-line fit of log counts over 20 bins spanning
/// `[0, 5 τ_hint]`, empty bins dropped. Weights are the counts, the inverse
/// Poisson variance of a log count.
pub fn fit_binned_loglinear(events: &[f64], tau_hint: f64) -> Result<LifetimeFit> {
    if events.len() < MIN_FIT_EVENTS {
        return Err(Error::Insufficient(format!("{} events, need at least {MIN_FIT_EVENTS}", events.len())));
    }
    if !(tau_hint > 0.0) {
        return domain(format!("tau_hint must be positive, got {tau_hint}"));
    }
    let bins: Vec<HistogramBin> =
        histogram(events, 5.0 * tau_hint, HISTOGRAM_BINS).into_iter().filter(|b| b.count > 0).collect();
    if bins.len() < 3 {
        return Err(Error::Insufficient(format!("only {} non-empty bins", bins.len())));
    }
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for b in &bins {
        let w = b.count as f64;
        sw += w;
        sx += w * 0.5 * (b.lo + b.hi);
        sy += w * (b.count as f64).ln();
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for b in &bins {
        let w = b.count as f64;
        let dx = 0.5 * (b.lo + b.hi) - mx;
        sxx += w * dx * dx;
        sxy += w * dx * ((b.count as f64).ln() - my);
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::Numerical { routine: "log-linear lifetime fit", detail: format!("non-negative slope {slope}") });
    }
    let slope_err = (1.0 / sxx).sqrt();
    Ok(LifetimeFit {
        tau: -1.0 / slope,
        tau_stderr: slope_err / (slope * slope),
        method: FitMethod::BinnedLoglinear,
        n_events: bins.iter().map(|b| b.count).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeAnalysis {
    /// Durations ending in a jump, s.
    pub event_times: Vec<f64>,
    pub censored: usize,
    pub censored_exposure: f64,
    pub mle: LifetimeFit,
    pub binned: LifetimeFit,
    pub histogram: Vec<HistogramBin>,
}

pub fn lifetime_analysis(first_jumps: &[FirstJump]) -> Result<LifetimeAnalysis> {
    let event_times: Vec<f64> = first_jumps.iter().filter(|f| !f.censored).map(|f| f.duration).collect();
    let censored: Vec<f64> = first_jumps.iter().filter(|f| f.censored).map(|f| f.duration).collect();
    let censored_exposure = censored.iter().fold(0.0, |a, b| a + b);
    let mle = fit_exponential_mle(&event_times, censored_exposure)?;
    let binned = fit_binned_loglinear(&event_times, mle.tau)?;
    let histogram = histogram(&event_times, 5.0 * mle.tau, HISTOGRAM_BINS);
    Ok(LifetimeAnalysis { event_times, censored: censored.len(), censored_exposure, mle, binned, histogram })
}

/// First-jump lifetimes of decoded traces that start in `prep`, counted
/// from the first full-window vote showing the prepared value.
pub fn first_jump_histogram(
    traces: &[DecodedTrace],
    prep: &PreparationSpec,
    decoder: &DecoderParams,
) -> Result<LifetimeAnalysis> {
    let (prepared, skip) = (prep.expected_reading(), decoder.window - 1);
    let jumps: Vec<FirstJump> =
        traces.iter().filter_map(|t| first_jump(t, prepared, skip, Timing::AsObserved)).collect();
    lifetime_analysis(&jumps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Delay from each true change of P₁ to the decoded change that follows it, s.
    pub latencies: Vec<f64>,
    /// True changes undone before the decoder followed them.
    pub missed: usize,
    /// True changes at which the decoded trace already showed the new value.
    pub untracked: usize,
}

impl LatencyReport {
    pub fn mean(&self) -> Option<f64> {
        (!self.latencies.is_empty()).then(|| self.latencies.iter().sum::<f64>() / self.latencies.len() as f64)
    }
}

/// Matches every change of the true projector P₁ to the first decoded jump
/// to the new value before P₁ changes again. Changes the decoded trace
/// already displays are counted apart.
pub fn jump_latencies(traj: &FieldTrajectory, trace: &DecodedTrace) -> LatencyReport {
    let p1 = |n: FockLevel| u8::from(n == FockLevel::ONE);
    let mut changes = Vec::new();
    let mut level = p1(traj.initial);
    for e in &traj.events {
        let v = p1(e.to);
        if v != level {
            changes.push((e.time, v));
            level = v;
        }
    }
    let mut report = LatencyReport { latencies: Vec::new(), missed: 0, untracked: 0 };
    let mut cursor = 0;
    for (k, &(t, v)) in changes.iter().enumerate() {
        let until = changes.get(k + 1).map_or(f64::INFINITY, |c| c.0);
        while cursor < trace.jumps.len() && trace.jumps[cursor].time < t {
            cursor += 1;
        }
        let shown = cursor.checked_sub(1).map_or(0, |c| trace.jumps[c].to);
        let shown = if cursor == 0 { trace.samples.first().map_or(0, |s| s.inferred) } else { shown };
        if shown == v {
            report.untracked += 1;
            continue;
        }
        match trace.jumps[cursor..].iter().take_while(|j| j.time < until).find(|j| j.to == v) {
            Some(j) => report.latencies.push(j.time - t),
            None if until.is_finite() => report.missed += 1,
            None => {}
        }
    }
    report
}

/// Inverts the thermal one-photon weight `p₁ = n (1 + n)⁻²` on its lower branch.
pub fn occupancy_from_p1(p1: f64) -> Result<f64> {
    if !(0.0..=0.25).contains(&p1) {
        return domain(format!("one-photon weight {p1} is outside the thermal range [0, 1/4]"));
    }
    if p1 == 0.0 {
        return Ok(0.0);
    }
    Ok(((1.0 - 2.0 * p1) - (1.0 - 4.0 * p1).sqrt()) / (2.0 * p1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermometryOptions {
    /// Shortest total analysed trace time accepted, s.
    pub min_total_duration: f64,
}

impl Default for ThermometryOptions {
    fn default() -> Self {
        Self { min_total_duration: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermometryEstimate {
    /// Time-averaged decoded ⟨P₁⟩.
    pub raw_p1: f64,
    /// ⟨P₁⟩ after removing the stationary decoder error fractions.
    pub corrected_p1: f64,
    pub raw_occupancy: f64,
    pub occupancy: f64,
    /// Standard error of `occupancy` from the spread between traces.
    pub occupancy_stderr: Option<f64>,
    /// Long-run fraction of votes reading 1 with an empty cavity.
    pub false_one_fraction: f64,
    /// Long-run fraction of votes reading 0 with one photon.
    pub false_zero_fraction: f64,
    pub total_duration: f64,
    pub n_traces: usize,
}

/// Thermal occupancy from decoded traces recorded at equilibrium.
///
/// Each trace is averaged from the vote that first fills the window to its
/// end. The measured weight mixes true readings with decoder errors,
/// `P₁,meas = f₀ + (1 − f₀ − f₁) P₁`, where `f₀` and `f₁` are the
/// stationary error fractions of the vote for the detector error rates.
pub fn equilibrium_thermometry(
    traces: &[DecodedTrace],
    detector: &DetectorParams,
    decoder: &DecoderParams,
    opts: ThermometryOptions,
) -> Result<ThermometryEstimate> {
    let mut per_trace = Vec::with_capacity(traces.len());
    for trace in traces {
        let Some(first) = trace.samples.get(decoder.window.saturating_sub(1)) else {
            continue;
        };
        let span = trace.duration - first.time;
        if span <= 0.0 {
            continue;
        }
        let mut on = 0.0;
        let from = decoder.window.saturating_sub(1);
        for (k, s) in trace.samples.iter().enumerate().skip(from) {
            let end = trace.samples.get(k + 1).map_or(trace.duration, |n| n.time);
            if s.inferred == 1 {
                on += end - s.time;
            }
        }
        per_trace.push((on, span));
    }
    let total: f64 = per_trace.iter().map(|(_, s)| s).sum();
    if total < opts.min_total_duration {
        return Err(Error::Insufficient(format!(
            "{total} s of usable trace, need at least {} s",
            opts.min_total_duration
        )));
    }
    let raw_p1 = per_trace.iter().map(|(o, _)| o).sum::<f64>() / total;
    let f0 = VoteChain::solve(detector.p_e_given_0, decoder.window)?.wrong_fraction;
    let f1 = VoteChain::solve(detector.p_g_given_1, decoder.window)?.wrong_fraction;
    let correct = |p: f64| ((p - f0) / (1.0 - f0 - f1)).max(0.0);
    let corrected_p1 = correct(raw_p1);
    let occupancy = occupancy_from_p1(corrected_p1)?;

    let occupancy_stderr = (per_trace.len() >= 2).then(|| {
        let m = per_trace.len() as f64;
        let var = per_trace
            .iter()
            .map(|(o, s)| {
                let d = o / s - raw_p1;
                (s / total).powi(2) * d * d
            })
            .sum::<f64>()
            * m
            / (m - 1.0);
        let p1_err = var.sqrt() / (1.0 - f0 - f1);
        // dn/dp₁ = (1 + n)³ / (1 − n)
        p1_err * (1.0 + occupancy).powi(3) / (1.0 - occupancy)
    });

    Ok(ThermometryEstimate {
        raw_p1,
        corrected_p1,
        raw_occupancy: occupancy_from_p1(raw_p1)?,
        occupancy,
        occupancy_stderr,
        false_one_fraction: f0,
        false_zero_fraction: f1,
        total_duration: total,
        n_traces: per_trace.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::DecodedSample;
    use crate::seeds::{SeedRecord, StreamDomain};
    use rand::Rng;
    use rand_distr::Exp1;

    #[test]
    fn preparations() {
        let bath = BathParams::default();
        let vac = prepare_initial(&PreparationSpec::vacuum_reset(), &bath).unwrap();
        assert!((vac.mean() - 0.003).abs() < 1e-15);
        let one = prepare_initial(&PreparationSpec::fock_one(), &bath).unwrap();
        assert_eq!(one.probabilities(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let th = prepare_initial(&PreparationSpec::thermal(), &bath).unwrap();
        assert!((th.mean() - 0.063).abs() < 1e-6);
        let bad = PreparationSpec { target: PrepTarget::FockOne, residual_error: 0.5 };
        assert!(prepare_initial(&bad, &bath).is_err());
    }

    #[test]
    fn mle_refuses_small_samples() {
        assert!(matches!(fit_exponential_mle(&[0.1; 9], 0.0), Err(Error::Insufficient(_))));
        let f = fit_exponential_mle(&[0.1; 10], 1.0).unwrap();
        assert!((f.tau - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fits_agree_on_synthetic_exponential() {
        let mut rng = SeedRecord::new(5, StreamDomain::Preparation, 0).rng();
        let events: Vec<f64> = (0..5000).map(|_| 0.1 * rng.sample::<f64, _>(Exp1)).collect();
        let mle = fit_exponential_mle(&events, 0.0).unwrap();
        let binned = fit_binned_loglinear(&events, mle.tau).unwrap();
        let combined = (mle.tau_stderr.powi(2) + binned.tau_stderr.powi(2)).sqrt();
        assert!((mle.tau - binned.tau).abs() < 2.0 * combined, "{mle:?} {binned:?}");
        assert!((mle.tau - 0.1).abs() < 3.0 * mle.tau_stderr);
    }

    #[test]
    fn thermal_law_inversion() {
        for n in [0.0, 0.01, 0.049, 0.063, 0.5] {
            let p1 = n / (1.0f64 + n).powi(2);
            assert!((occupancy_from_p1(p1).unwrap() - n).abs() < 1e-12);
        }
        assert!(occupancy_from_p1(0.3).is_err());
    }

    fn trace(points: &[(f64, u8)], duration: f64) -> DecodedTrace {
        let samples: Vec<DecodedSample> = points.iter().map(|&(time, inferred)| DecodedSample { time, inferred }).collect();
        let jumps = samples
            .windows(2)
            .filter(|w| w[0].inferred != w[1].inferred)
            .map(|w| crate::decoder::DecodedJump { time: w[1].time, from: w[0].inferred, to: w[1].inferred })
            .collect();
        DecodedTrace { duration, samples, jumps }
    }

    #[test]
    fn first_jump_starts_at_prepared_reading() {
        let t = trace(&[(0.1, 0), (0.2, 1), (0.3, 1), (0.5, 0), (0.6, 1)], 1.0);
        let j = first_jump(&t, 1, 0, Timing::AsObserved).unwrap();
        assert_eq!((j.start, j.censored), (0.2, false));
        assert!((j.duration - 0.3).abs() < 1e-12);
        let j = first_jump(&t, 1, 0, Timing::LatencyCorrected { delay: 0.05 }).unwrap();
        assert!((j.duration - 0.25).abs() < 1e-12);
        let j = first_jump(&t, 1, 2, Timing::AsObserved).unwrap();
        assert_eq!(j.start, 0.3);
        let j = first_jump(&t, 1, 3, Timing::AsObserved).unwrap();
        assert!(j.start == 0.6 && j.censored);
        let flat = trace(&[(0.1, 0), (0.2, 0)], 1.0);
        assert!(first_jump(&flat, 1, 0, Timing::AsObserved).is_none());
        let c = first_jump(&flat, 0, 0, Timing::AsObserved).unwrap();
        assert!(c.censored && (c.duration - 0.9).abs() < 1e-12);
    }

    #[test]
    fn measured_curve_checks_inputs() {
        let a = trace(&[(0.1, 1)], 1.0);
        let b = trace(&[(0.1, 1)], 2.0);
        assert!(ensemble_p1_measured(&[a.clone(), b], &[0.5], Timing::AsObserved).is_err());
        assert!(ensemble_p1_measured(&[], &[0.5], Timing::AsObserved).is_err());
        assert!(ensemble_p1_measured(&[a.clone()], &[1.5], Timing::AsObserved).is_err());
        let c = ensemble_p1_measured(&[a.clone(), trace(&[(0.1, 0)], 1.0)], &[0.05, 0.5], Timing::AsObserved).unwrap();
        assert_eq!(c.mean, vec![0.0, 0.5]);
        assert!((c.stderr[1] - 0.5 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn thermometry_refuses_short_records() {
        let t = trace(&(1..=100).map(|k| (k as f64 * 0.01, 0)).collect::<Vec<_>>(), 1.0);
        let err = equilibrium_thermometry(&[t], &DetectorParams::default(), &DecoderParams::default(), ThermometryOptions::default());
        assert!(matches!(err, Err(Error::Insufficient(_))));
    }
}
