//! Dispersive interaction of one probe atom with the cavity mode.
//!
//! Frequencies are stored as ordinary frequencies (Hz); the 2π factor is
//! applied only inside integrands. The atom crosses the Gaussian mode at
//! constant velocity, so position and time are related by `z = v t`.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::field::FockLevel;
use crate::numerics::quadrature::{integrate, QuadOptions};
use crate::numerics::unitary::{evolve_two_level, UnitaryOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGeometry {
    /// Peak vacuum Rabi frequency Ω₀/2π, Hz.
    pub omega0: f64,
    /// Mode waist, m.
    pub waist: f64,
    /// Atomic velocity, m/s.
    pub velocity: f64,
    /// Atom–cavity detuning δ/2π, Hz.
    pub detuning: f64,
    /// Half-width of the crossing window in waists.
    pub z_span: f64,
}

impl Default for ProbeGeometry {
    fn default() -> Self {
        Self { omega0: 51e3, waist: 6e-3, velocity: 250.0, detuning: 67e3, z_span: 5.0 }
    }
}

impl ProbeGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 >= 0.0 && self.omega0.is_finite()) {
            return domain(format!("omega0 must be non-negative, got {}", self.omega0));
        }
        if !(self.waist > 0.0) || !(self.velocity > 0.0) || !(self.detuning > 0.0) {
            return domain("waist, velocity and detuning must be positive");
        }
        if self.detuning.abs() < self.omega0 {
            return domain(format!(
                "dispersive regime requires |detuning| >= omega0, got {} Hz < {} Hz",
                self.detuning, self.omega0
            ));
        }
        if !(self.z_span >= 5.0) {
            return domain(format!("z_span must be at least 5 waists, got {}", self.z_span));
        }
        Ok(())
    }

    /// Transit time through the integration window, s.
    pub fn half_window_time(&self) -> f64 {
        self.z_span * self.waist / self.velocity
    }
}

/// Position-dependent vacuum Rabi frequency, Hz.
pub fn coupling_at(z: f64, geom: &ProbeGeometry) -> f64 {
    geom.omega0 * (-(z / geom.waist).powi(2)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DressedShifts {
    /// Shift of the `|e, n⟩` dressed level, Hz.
    pub e: f64,
    /// Shift of the `|g, n⟩` dressed level, Hz.
    pub g: f64,
}

impl DressedShifts {
    pub fn splitting(&self) -> f64 {
        self.e - self.g
    }
}

// √(δ² + x) − δ without cancellation for small x when δ > 0.
fn root_excess(detuning: f64, x: f64) -> f64 {
    let r = (detuning * detuning + x).sqrt();
    if detuning > 0.0 {
        x / (r + detuning)
    } else {
        r - detuning
    }
}

/// Light shifts of the e and g levels with `n` photons for coupling `omega` (Hz).
pub fn dressed_shifts(n: FockLevel, omega: f64, detuning: f64) -> DressedShifts {
    let o2 = omega * omega;
    let nf = n.0 as f64;
    DressedShifts {
        e: 0.5 * root_excess(detuning, (nf + 1.0) * o2),
        g: -0.5 * root_excess(detuning, nf * o2),
    }
}

/// Ramsey phase Φ(n, δ) accumulated across the mode at the default tolerance.
pub fn ramsey_phase(n: FockLevel, geom: &ProbeGeometry) -> Result<f64> {
    ramsey_phase_with(n, geom, QuadOptions::default())
}

pub fn ramsey_phase_with(n: FockLevel, geom: &ProbeGeometry, opts: QuadOptions) -> Result<f64> {
    geom.validate()?;
    let half = geom.z_span * geom.waist;
    let integrand = |z: f64| 2.0 * PI * dressed_shifts(n, coupling_at(z, geom), geom.detuning).splitting() / geom.velocity;
    Ok(integrate(integrand, -half, half, opts)?.value)
}

/// Phases Φ(n) for all retained levels plus the Ramsey reference phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTable {
    pub phases: Vec<f64>,
    /// Interferometer phase offset; zero puts an atom crossing the empty cavity in g.
    pub reference: f64,
}

impl PhaseTable {
    pub fn compute(geom: &ProbeGeometry, n_max: u32) -> Result<Self> {
        let phases = (0..=n_max).map(|n| ramsey_phase(FockLevel(n), geom)).collect::<Result<Vec<_>>>()?;
        Ok(Self { phases, reference: 0.0 })
    }

    /// A table with explicit phases, for idealised or synthetic set-ups.
    pub fn from_phases(phases: Vec<f64>) -> Self {
        Self { phases, reference: 0.0 }
    }

    pub fn phase(&self, n: FockLevel) -> Result<f64> {
        match self.phases.get(n.index()) {
            Some(p) => Ok(*p),
            None => domain(format!("phase table has no entry for n = {}", n.0)),
        }
    }

    /// Φ(n+1) − Φ(n) for every consecutive pair.
    pub fn increments(&self) -> Vec<f64> {
        self.phases.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_level(&self) -> u32 {
        self.phases.len().saturating_sub(1) as u32
    }
}

/// Probability that a perfectly read-out atom is found in g, given `n` photons.
pub fn ideal_detection_probability(n: FockLevel, table: &PhaseTable) -> Result<f64> {
    let phi = table.phase(n)? - table.phase(FockLevel::VACUUM)? + table.reference;
    Ok(0.5 * (1.0 + phi.cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticReport {
    /// Final population of `|g, n+1⟩` after starting in `|e, n⟩`.
    pub probability: f64,
    pub max_norm_deviation: f64,
    pub steps: usize,
}

/// Non-adiabatic leakage from `|e, n⟩` to `|g, n+1⟩` during one crossing,
/// from direct integration of the two-level Schrödinger equation.
pub fn adiabatic_transition_probability(n: FockLevel, geom: &ProbeGeometry) -> Result<AdiabaticReport> {
    adiabatic_transition_probability_with(n, geom, UnitaryOptions::default())
}

pub fn adiabatic_transition_probability_with(
    n: FockLevel,
    geom: &ProbeGeometry,
    opts: UnitaryOptions,
) -> Result<AdiabaticReport> {
    geom.validate()?;
    let t_half = geom.half_window_time();
    let sqrt_n1 = (n.0 as f64 + 1.0).sqrt();
    let field = |t: f64| {
        let omega = 2.0 * PI * coupling_at(geom.velocity * t, geom) * sqrt_n1;
        [0.5 * omega, 0.0, PI * geom.detuning]
    };
    let psi0 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let ev = evolve_two_level(field, psi0, -t_half, t_half, opts)?;
    Ok(AdiabaticReport {
        probability: ev.state[1].norm_sqr(),
        max_norm_deviation: ev.max_norm_deviation,
        steps: ev.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_coupling_profile() {
        let g = ProbeGeometry::default();
        assert_eq!(coupling_at(0.0, &g), 51e3);
        assert!((coupling_at(g.waist, &g) - 51e3 / std::f64::consts::E).abs() < 1e-9 && (coupling_at(g.waist, &g) - 18.76e3).abs() < 5.0);
        assert!(coupling_at(5.0 * g.waist, &g) < 1e-6);
        assert_eq!(coupling_at(-0.002, &g), coupling_at(0.002, &g));
    }

    #[test]
    fn shifts_closed_form() {
        let s = dressed_shifts(FockLevel(0), 51e3, 67e3);
        let expected = ((67e3f64).powi(2) + (51e3f64).powi(2)).sqrt() / 2.0 - 67e3 / 2.0;
        assert!((s.e - expected).abs() < 1e-9);
        assert!((s.e - 8.60e3).abs() < 5.0);
        assert_eq!(s.g, 0.0);
        let zero = dressed_shifts(FockLevel(3), 0.0, 67e3);
        assert_eq!((zero.e, zero.g), (0.0, 0.0));
    }

    #[test]
    fn shifts_match_perturbation_theory() {
        for n in 0..4 {
            for ratio in [0.1, 0.05, 0.01] {
                let delta = 67e3;
                let omega = ratio * delta;
                let second_order = (n as f64 + 0.5) * omega * omega / (2.0 * delta);
                let s = dressed_shifts(FockLevel(n), omega, delta).splitting();
                assert!((s / second_order - 1.0).abs() < 0.01, "n = {n}, ratio = {ratio}");
            }
        }
    }

    #[test]
    fn geometry_invariants() {
        let mut g = ProbeGeometry::default();
        g.detuning = 30e3;
        assert!(g.validate().is_err());
        let mut g = ProbeGeometry::default();
        g.z_span = 4.0;
        assert!(g.validate().is_err());
        let mut g = ProbeGeometry::default();
        g.velocity = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn weak_coupling_gives_vanishing_phase() {
        let g = ProbeGeometry { omega0: 1e-3, ..Default::default() };
        for n in 0..3 {
            assert!(ramsey_phase(FockLevel(n), &g).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn detection_probabilities_from_table() {
        let table = PhaseTable::from_phases(vec![0.3, 0.3 + PI, 0.3 + 1.88 * PI]);
        assert!((ideal_detection_probability(FockLevel(0), &table).unwrap() - 1.0).abs() < 1e-15);
        assert!(ideal_detection_probability(FockLevel(1), &table).unwrap().abs() < 1e-15);
        let p2 = ideal_detection_probability(FockLevel(2), &table).unwrap();
        assert!((p2 - 0.5 * (1.0 - (0.88 * PI).cos())).abs() < 1e-12);
        assert!(ideal_detection_probability(FockLevel(3), &table).is_err());
    }

    #[test]
    fn decoupled_atom_never_leaks() {
        let g = ProbeGeometry { omega0: 0.0, ..Default::default() };
        let r = adiabatic_transition_probability(FockLevel(0), &g).unwrap();
        assert_eq!(r.probability, 0.0);
    }
}
