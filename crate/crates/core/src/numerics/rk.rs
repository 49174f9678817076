//! Adaptive Dormand–Prince 5(4) integrator for small real ODE systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RkOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub min_step: f64,
}

impl Default for RkOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-12, max_steps: 2_000_000, min_step: 1e-300 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` from `grid[0]` and returns the state at every
/// grid point. Steps are clipped so that grid points are hit exactly.
pub fn integrate_on_grid<F>(
    mut f: F,
    y0: &[f64],
    grid: &[f64],
    opts: RkOptions,
) -> Result<(Vec<Vec<f64>>, RkStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let dim = y0.len();
    let mut out = Vec::with_capacity(grid.len());
    let mut stats = RkStats::default();
    if grid.is_empty() {
        return Ok((out, stats));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Input("integration grid must be strictly increasing".into()));
    }
    let mut t = grid[0];
    let mut y = y0.to_vec();
    out.push(y.clone());

    let span = grid[grid.len() - 1] - grid[0];
    let mut h = (1e-3 * span).max(opts.min_step);
    let mut k = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];

    for &target in &grid[1..] {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::Numerical {
                    routine: "dormand-prince",
                    detail: format!("step budget {} exhausted at t = {t:e}, h = {h:e}", opts.max_steps),
                });
            }
            let last = t + h >= target;
            let step = if last { target - t } else { h };

            f(t, &y, &mut k[0]);
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += step * A[s][j] * k[j][i];
                    }
                    stage[i] = acc;
                }
                let (_, rest) = k.split_at_mut(s);
                f(t + C[s] * step, &stage, &mut rest[0]);
            }
            // The last stage is evaluated at the fifth-order solution itself.
            y5.copy_from_slice(&stage);
            let mut err_sq = 0.0;
            for i in 0..dim {
                let lo = y[i] + step * (0..7).map(|s| B4[s] * k[s][i]).sum::<f64>();
                let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y5[i].abs());
                err_sq += ((y5[i] - lo) / scale).powi(2);
            }
            let err = (err_sq / dim.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Numerical {
                    routine: "dormand-prince",
                    detail: format!("non-finite error estimate at t = {t:e}, h = {step:e}"),
                });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                stats.accepted += 1;
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y5);
                if !last {
                    h = step * factor;
                }
            } else {
                stats.rejected += 1;
                h = step * factor;
                if h < opts.min_step {
                    return Err(Error::Numerical {
                        routine: "dormand-prince",
                        detail: format!("step size underflow at t = {t:e}: h = {h:e}, error ratio {err:e}"),
                    });
                }
            }
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        let (ys, stats) =
            integrate_on_grid(|_, y, dy| dy[0] = -2.0 * y[0], &[1.0], &grid, RkOptions::default()).unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            assert!((y[0] - (-2.0 * t).exp()).abs() < 1e-9 * (-2.0 * t).exp() + 1e-12);
        }
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_phase() {
        let grid = [0.0, std::f64::consts::PI];
        let (ys, _) = integrate_on_grid(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            &grid,
            RkOptions { rel_tol: 1e-11, abs_tol: 1e-13, ..Default::default() },
        )
        .unwrap();
        assert!((ys[1][0] + 1.0).abs() < 1e-9);
        assert!(ys[1][1].abs() < 1e-9);
    }

    #[test]
    fn rejects_unordered_grid() {
        let err = integrate_on_grid(|_, _, _| {}, &[0.0], &[0.0, 1.0, 0.5], RkOptions::default());
        assert!(matches!(err, Err(Error::Input(_))));
    }
}
