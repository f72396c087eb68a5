//! Committed default parameters and the search that produced them.
//!
//! The search scores a nominal device on a handful of single reads and runs
//! coordinate descent over the four kinetics parameters. Every target is a
//! band, so any point inside all bands scores zero.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::circuit::CircuitParams;
use crate::device::DeviceParams;
use crate::error::Result;
use crate::protocol::{cell_read_capacitance, MacroConfig};

pub const CALIBRATED_DEVICE: DeviceParams = DeviceParams {
    p_s: 27.0,
    area: 25.0,
    v_c_mean: 0.8,
    v_c_sigma_intra: 0.11,
    v_c_sigma_inter: 0.03,
    v_bias: -0.02,
    tau_0: 1e-20,
    v_a: 0.887,
    merz_alpha: 4.0,
    c_bg: 20.0,
    c_sw_peak: 40.0,
    sigma_prox: 0.6,
    n_hysterons: 256,
};

pub fn calibrated_circuit() -> CircuitParams {
    CircuitParams {
        vdd: 1.8,
        vcm: 0.9,
        c_bl: 200.0,
        sa_offset_sigma: 7.0,
        sa_threshold_mean: 0.9,
        solver_tol: 1e-4,
        solver_max_iter: 100,
    }
}

/// Bit-1 error rate the 100 mV read is tuned to.
pub const TARGET_ERROR_RATE: f64 = 0.25;

/// Single-read observables of the nominal device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationMetrics {
    /// Worst polarization change of one 100 mV / 4 µs read, fraction of p_s.
    pub stable_read_loss: f64,
    /// Relative bit-1 capacitance change of one 40 ns read.
    pub drift_200mv: f64,
    pub drift_300mv: f64,
    pub drift_400mv: f64,
    /// Bit-1 bit-line margin at 100 mV / 40 ns, mV.
    pub margin_100mv: f64,
}

fn read_once(config: &MacroConfig, bit: u8, v_read: f64, duration: f64) -> Result<(f64, f64, f64)> {
    let mut state = config.nominal_macro()?;
    state.program_reference(v_read)?;
    state.write_bit(0, bit)?;
    let p0 = state.cell(0)?.polarization();
    let c0 = cell_read_capacitance(state.cell(0)?, v_read);
    let read = state.read_bit(0, v_read, duration)?;
    let cell = state.cell(0)?;
    Ok((
        cell.polarization() - p0,
        (c0 - cell_read_capacitance(cell, v_read)) / c0,
        read.v_bl - config.circuit.vcm,
    ))
}

pub fn calibration_metrics(config: &MacroConfig) -> Result<CalibrationMetrics> {
    let p_s = config.device.p_s;
    let (dp0, _, _) = read_once(config, 0, 0.1, 4e-6)?;
    let (dp1, _, _) = read_once(config, 1, 0.1, 4e-6)?;
    let (_, _, margin) = read_once(config, 1, 0.1, 40e-9)?;
    Ok(CalibrationMetrics {
        stable_read_loss: dp0.abs().max(dp1.abs()) / p_s,
        drift_200mv: read_once(config, 1, 0.2, 40e-9)?.1,
        drift_300mv: read_once(config, 1, 0.3, 40e-9)?.1,
        drift_400mv: read_once(config, 1, 0.4, 40e-9)?.1,
        margin_100mv: margin * 1e3,
    })
}

/// Squared distance of `log10(x)` above `hi` (decades).
fn log_ceiling(x: f64, hi: f64) -> f64 {
    if x > hi {
        (x.log10() - hi.log10()).powi(2)
    } else {
        0.0
    }
}

/// Squared distance of `log10(x)` outside `[lo, hi]` (decades).
fn log_band(x: f64, lo: f64, hi: f64) -> f64 {
    let l = x.max(1e-300).log10();
    if l < lo.log10() {
        (lo.log10() - l).powi(2)
    } else if l > hi.log10() {
        (l - hi.log10()).powi(2)
    } else {
        0.0
    }
}

/// Zero inside every target band, growing quadratically outside.
pub fn calibration_objective(m: &CalibrationMetrics, sa_offset_sigma_mv: f64) -> f64 {
    let target_margin = sa_offset_sigma_mv * Normal::standard().inverse_cdf(1.0 - TARGET_ERROR_RATE);
    let margin_miss = ((m.margin_100mv - target_margin).abs() - 0.5).max(0.0);
    log_ceiling(m.stable_read_loss, 1e-3)
        + log_ceiling(m.drift_200mv, 1e-6)
        + log_band(m.drift_300mv, 3e-3, 5e-2)
        + log_band(m.drift_400mv, 0.1, 1.0)
        + margin_miss * margin_miss
}

fn score(config: &MacroConfig) -> (f64, Option<CalibrationMetrics>) {
    if !config.device.violations().is_empty() {
        return (f64::INFINITY, None);
    }
    match calibration_metrics(config) {
        Ok(m) => (calibration_objective(&m, config.circuit.sa_offset_sigma), Some(m)),
        Err(_) => (f64::INFINITY, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub max_rounds: usize,
    /// Initial relative step.
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_rounds: 20,
            initial_step: 0.1,
            min_step: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub device: DeviceParams,
    pub objective: f64,
    pub metrics: Option<CalibrationMetrics>,
    pub evaluations: usize,
    /// Objective after each round.
    pub history: Vec<f64>,
}

const KINETICS: [&str; 4] = ["tau_0", "v_a", "merz_alpha", "v_c_mean"];

fn moved(device: &DeviceParams, name: &str, step: f64) -> DeviceParams {
    let mut d = device.clone();
    match name {
        // tau_0 moves in decades, the others relatively.
        "tau_0" => d.tau_0 *= 10f64.powf(10.0 * step),
        "v_a" => d.v_a *= 1.0 + step,
        "merz_alpha" => d.merz_alpha *= 1.0 + step,
        _ => d.v_c_mean *= 1.0 + step,
    }
    d
}

/// Coordinate descent over `tau_0`, `v_a`, `merz_alpha` and `v_c_mean`
/// starting from `config.device`. Stops at zero objective, when the step
/// falls below `min_step` or after `max_rounds`.
pub fn calibrate(config: &MacroConfig, options: &SearchOptions) -> Result<CalibrationResult> {
    config.validate()?;
    let mut current = config.clone();
    let (mut best, mut metrics) = score(&current);
    let mut evaluations = 1;
    let mut step = options.initial_step;
    let mut history = Vec::new();
    for _ in 0..options.max_rounds {
        if best == 0.0 || step < options.min_step {
            break;
        }
        let mut improved = false;
        for name in KINETICS {
            for sign in [1.0, -1.0] {
                let candidate = MacroConfig {
                    device: moved(&current.device, name, sign * step),
                    ..current.clone()
                };
                let (value, m) = score(&candidate);
                evaluations += 1;
                if value < best {
                    best = value;
                    metrics = m;
                    current = candidate;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
        history.push(best);
    }
    Ok(CalibrationResult {
        device: current.device,
        objective: best,
        metrics,
        evaluations,
        history,
    })
}
