//! Fine-step explicit transient of the read, kept independent of the
//! charge-balance solver so the two can be checked against each other.
//!
//! The word-line ramps are cut into `n_steps` equal steps. Each step takes a
//! capacitive predictor for the bit-line voltage, switches both devices at
//! the predicted midpoint voltages and then closes the node charge balance
//! with the midpoint capacitances.

use crate::circuit::{CircuitParams, ReferenceCell};
use crate::device::{HysteronEnsemble, PulseSpec};
use crate::error::{Result, SimError};

/// Step count used by the acceptance checks.
pub const ORACLE_STEPS: usize = 1000;

fn orientation(ens: &HysteronEnsemble) -> f64 {
    if ens.is_flipped() {
        -1.0
    } else {
        1.0
    }
}

fn switch(ens: &mut HysteronEnsemble, v: f64, dt: f64) -> Result<f64> {
    let o = orientation(ens);
    Ok(o * ens.apply_pulse(&PulseSpec::new(v, dt).with_substeps(1))?)
}

/// Bit-line voltage at the end of a read, V.
pub fn transient_read(
    cell: &HysteronEnsemble,
    reference: &ReferenceCell,
    v_read: f64,
    duration: f64,
    params: &CircuitParams,
    n_steps: usize,
) -> Result<f64> {
    if n_steps == 0 {
        return Err(SimError::invalid("n_steps", "must be >= 1"));
    }
    let mut cell = cell.clone();
    let mut reference = reference.clone();
    let dt = duration / n_steps as f64;
    let dvr = v_read / n_steps as f64;
    let mut delta = 0.0;
    for k in 0..n_steps {
        let vr0 = dvr * k as f64;
        let c_cell = cell.small_signal_capacitance(delta - vr0);
        let c_ref = reference.small_signal_capacitance(delta + vr0);
        let predictor = dvr * (c_cell - c_ref) / (params.c_bl + c_cell + c_ref);
        let mid = delta + 0.5 * predictor;
        let vr_mid = vr0 + 0.5 * dvr;
        let c_cell = cell.small_signal_capacitance(mid - vr_mid);
        let c_ref = reference.small_signal_capacitance(mid + vr_mid);
        let q_cell = switch(&mut cell, mid - vr_mid, dt)?;
        let q_ref = match &mut reference {
            ReferenceCell::FeCap(ens) => switch(ens, mid + vr_mid, dt)?,
            ReferenceCell::Linear { .. } => 0.0,
        };
        delta += (dvr * (c_cell - c_ref) - q_cell - q_ref) / (params.c_bl + c_cell + c_ref);
    }
    Ok(params.vcm + delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_pair_matches_closed_form() {
        let params = CircuitParams::default();
        let mut device = crate::device::DeviceParams::default();
        device.c_sw_peak = 0.0;
        let cell = HysteronEnsemble::nominal(&device).unwrap();
        let reference = ReferenceCell::Linear { capacitance_ff: 300.0 };
        let v = transient_read(&cell, &reference, 0.1, 40e-9, &params, 100).unwrap();
        let c = cell.small_signal_capacitance(0.0);
        let expected = params.vcm + 0.1 * (c - 300.0) / (params.c_bl + c + 300.0);
        assert!((v - expected).abs() < 1e-12);
    }
}
