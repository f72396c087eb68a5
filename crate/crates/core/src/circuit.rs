//! Bit-line charge sharing and the behavioral sense amplifier.
//!
//! Device voltages are measured from the bit-line electrode to the word-line
//! electrode, so a positive word-line read pulse puts a negative voltage
//! across the storage cell. The charges returned by the device model are the
//! charges on the bit-line plate, and the floating bit line obeys
//!
//! ```text
//! c_bl * dV_bl + dQ_cell + dQ_ref = 0
//! ```
//!
//! where the cell sees `dV_bl - v_read` and the reference, driven with the
//! complementary pulse, sees `dV_bl + v_read`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::device::{HysteronEnsemble, DEFAULT_RAMP_SUBSTEPS, MIN_RAMP_SUBSTEPS};
use crate::error::{Result, SimError};
use crate::seeds::rng_from_seed;
use crate::units::mv_to_volts;

/// Required per-iteration residual reduction before the solver falls back to
/// bisection.
pub const SOLVER_DAMPING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitParams {
    /// Supply, V.
    pub vdd: f64,
    /// Precharge / common-mode voltage, V.
    pub vcm: f64,
    /// Bit-line parasitic capacitance, fF.
    pub c_bl: f64,
    /// Input-referred offset spread of the sense amplifier, mV.
    pub sa_offset_sigma: f64,
    /// Latch decision threshold, V.
    pub sa_threshold_mean: f64,
    /// Charge-balance residual tolerance, fC.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for CircuitParams {
    fn default() -> Self {
        crate::calibration::calibrated_circuit()
    }
}

impl CircuitParams {
    pub fn violations(&self) -> Vec<SimError> {
        let mut out = Vec::new();
        if !(self.vdd.is_finite() && self.vdd > 0.0) {
            out.push(SimError::invalid("circuit.vdd", format!("must be > 0, got {}", self.vdd)));
        }
        if !(self.vcm.is_finite() && self.vcm > 0.0 && self.vcm < self.vdd) {
            out.push(SimError::invalid(
                "circuit.vcm",
                format!("must satisfy 0 < vcm < vdd, got {}", self.vcm),
            ));
        }
        if !(self.c_bl.is_finite() && self.c_bl > 0.0) {
            out.push(SimError::invalid("circuit.c_bl", format!("must be > 0, got {}", self.c_bl)));
        }
        if !(self.sa_offset_sigma.is_finite() && self.sa_offset_sigma >= 0.0) {
            out.push(SimError::invalid(
                "circuit.sa_offset_sigma",
                format!("must be >= 0, got {}", self.sa_offset_sigma),
            ));
        }
        if !self.sa_threshold_mean.is_finite() {
            out.push(SimError::invalid("circuit.sa_threshold_mean", "must be finite"));
        }
        if !(self.solver_tol.is_finite() && self.solver_tol > 0.0) {
            out.push(SimError::invalid(
                "circuit.solver_tol",
                format!("must be > 0, got {}", self.solver_tol),
            ));
        }
        if self.solver_max_iter == 0 {
            out.push(SimError::invalid("circuit.solver_max_iter", "must be >= 1"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SenseAmpInstance {
    /// Input-referred offset, V.
    pub offset: f64,
    /// Effective decision threshold, V.
    pub threshold: f64,
}

impl SenseAmpInstance {
    pub fn ideal(params: &CircuitParams) -> Self {
        Self {
            offset: 0.0,
            threshold: params.sa_threshold_mean,
        }
    }

    pub fn with_offset(params: &CircuitParams, offset: f64) -> Self {
        Self {
            offset,
            threshold: params.sa_threshold_mean + offset,
        }
    }

    /// Samples one instance with a Gaussian input-referred offset.
    pub fn sample(params: &CircuitParams, rng_seed: u64) -> Self {
        let sigma = mv_to_volts(params.sa_offset_sigma);
        let offset = if sigma > 0.0 {
            let mut rng = rng_from_seed(rng_seed);
            Normal::new(0.0, sigma).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
        } else {
            0.0
        };
        Self::with_offset(params, offset)
    }

    /// Latch decision: 1 when the bit line is strictly above threshold.
    pub fn latch(&self, v_bl: f64) -> u8 {
        sa_latch(v_bl, self)
    }
}

pub fn sa_latch(v_bl: f64, sa: &SenseAmpInstance) -> u8 {
    u8::from(v_bl > sa.threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BitLineState {
    pub v_bl: f64,
    pub precharged: bool,
}

impl BitLineState {
    pub fn new(params: &CircuitParams) -> Self {
        Self {
            v_bl: params.vcm,
            precharged: false,
        }
    }

    pub fn precharge(self, params: &CircuitParams) -> Self {
        Self {
            v_bl: params.vcm,
            precharged: true,
        }
    }
}

/// The reference element on `WL_ref`.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceCell {
    /// A flipped ferroelectric capacitor.
    FeCap(HysteronEnsemble),
    /// A linear capacitor, fF.
    Linear { capacitance_ff: f64 },
}

impl ReferenceCell {
    /// Charge delivered to the bit-line plate for a ramp of the device
    /// voltage, fC.
    pub fn charge_response(&mut self, v_from: f64, v_to: f64, duration: f64, n_substeps: usize) -> Result<f64> {
        match self {
            ReferenceCell::FeCap(ens) => ens.charge_response(v_from, v_to, duration, n_substeps),
            ReferenceCell::Linear { capacitance_ff } => Ok(*capacitance_ff * (v_to - v_from)),
        }
    }

    fn try_segment(&self, v0: f64, v1: f64, dt: f64, c_start: f64) -> (f64, f64, Option<Self>) {
        match self {
            ReferenceCell::FeCap(ens) => {
                let (q, c1, next) = ens.try_segment(v0, v1, dt, c_start);
                (q, c1, next.map(ReferenceCell::FeCap))
            }
            ReferenceCell::Linear { capacitance_ff } => (*capacitance_ff * (v1 - v0), *capacitance_ff, None),
        }
    }

    pub fn small_signal_capacitance(&self, v_applied: f64) -> f64 {
        match self {
            ReferenceCell::FeCap(ens) => ens.small_signal_capacitance(v_applied),
            ReferenceCell::Linear { capacitance_ff } => *capacitance_ff,
        }
    }

    pub fn as_fecap(&self) -> Option<&HysteronEnsemble> {
        match self {
            ReferenceCell::FeCap(ens) => Some(ens),
            ReferenceCell::Linear { .. } => None,
        }
    }
}

/// Converged state of one read.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeShare {
    pub v_bl: f64,
    pub cell: HysteronEnsemble,
    pub reference: ReferenceCell,
    /// Node charge residual at convergence, fC.
    pub residual_fc: f64,
    pub iterations: usize,
}

/// Solves the floating bit-line node for one read.
///
/// The word-line ramps are marched in `n_substeps` implicit steps. Each step
/// finds the bit-line voltage at its end that balances the total node charge
/// since precharge,
/// with both devices switching at the step's midpoint voltages. The step
/// equation is strictly increasing in the bit-line voltage; it is solved by
/// secant steps inside a shrinking sign bracket, falling back to bisection
/// when a step leaves the bracket or an iteration fails to halve the
/// residual.
pub fn read_charge_share(
    cell: &HysteronEnsemble,
    reference: &ReferenceCell,
    v_read: f64,
    duration: f64,
    params: &CircuitParams,
) -> Result<ChargeShare> {
    read_charge_share_with(cell, reference, v_read, duration, params, DEFAULT_RAMP_SUBSTEPS)
}

pub fn read_charge_share_with(
    cell: &HysteronEnsemble,
    reference: &ReferenceCell,
    v_read: f64,
    duration: f64,
    params: &CircuitParams,
    n_substeps: usize,
) -> Result<ChargeShare> {
    params.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SimError::invalid("duration", format!("must be > 0, got {duration}")));
    }
    let n = n_substeps.max(MIN_RAMP_SUBSTEPS);
    let dt = duration / n as f64;
    let mut cell = cell.clone();
    let mut reference = reference.clone();
    let mut delta = 0.0;
    let mut increment = None;
    // Charge delivered by both devices so far, fC.
    let mut device_charge = 0.0;
    let mut residual = 0.0;
    let mut iterations = 0;
    let mut c_start = (cell.small_signal_capacitance(0.0), reference.small_signal_capacitance(0.0));
    for k in 0..n {
        let vr0 = v_read * k as f64 / n as f64;
        let vr1 = if k + 1 == n { v_read } else { v_read * (k + 1) as f64 / n as f64 };
        let step = solve_step(&cell, &reference, c_start, delta, device_charge, increment, vr0, vr1, dt, params)?;
        c_start = step.c_end;
        increment = Some(step.delta - delta);
        iterations = iterations.max(step.iterations);
        device_charge += step.device_charge;
        residual = step.residual;
        delta = step.delta;
        if let Some(next) = step.cell {
            cell = next;
        }
        if let Some(next) = step.reference {
            reference = next;
        }
    }
    Ok(ChargeShare {
        v_bl: params.vcm + delta,
        cell,
        reference,
        residual_fc: residual,
        iterations,
    })
}

struct Step {
    delta: f64,
    residual: f64,
    device_charge: f64,
    iterations: usize,
    /// Cell and reference capacitances at the end of the step, fF.
    c_end: (f64, f64),
    /// Advanced device states, `None` where the step did not switch.
    cell: Option<HysteronEnsemble>,
    reference: Option<ReferenceCell>,
}

#[allow(clippy::too_many_arguments)]
fn solve_step(
    cell: &HysteronEnsemble,
    reference: &ReferenceCell,
    (c_cell, c_ref): (f64, f64),
    delta0: f64,
    charge0: f64,
    previous_increment: Option<f64>,
    vr0: f64,
    vr1: f64,
    dt: f64,
    params: &CircuitParams,
) -> Result<Step> {
    let c_bl = params.c_bl;
    let linear_slope = c_bl + c_cell + c_ref;
    // The previous step's increment is the better predictor once the ramp
    // is under way.
    let mut delta = delta0 + previous_increment.unwrap_or((vr1 - vr0) * (c_cell - c_ref) / linear_slope);
    let mut lo = -params.vdd;
    let mut hi = params.vdd;
    let mut previous: Option<(f64, f64)> = None;
    let mut residual = f64::INFINITY;
    for iteration in 1..=params.solver_max_iter {
        let (q_cell, c_cell_end, cell_next) = cell.try_segment(delta0 - vr0, delta - vr1, dt, c_cell);
        let (q_ref, c_ref_end, ref_next) = reference.try_segment(delta0 + vr0, delta + vr1, dt, c_ref);
        residual = c_bl * delta + charge0 + q_cell + q_ref;
        if residual.abs() < params.solver_tol {
            return Ok(Step {
                delta,
                residual,
                device_charge: q_cell + q_ref,
                iterations: iteration,
                c_end: (c_cell_end, c_ref_end),
                cell: cell_next,
                reference: ref_next,
            });
        }
        if residual < 0.0 {
            lo = lo.max(delta);
        } else {
            hi = hi.min(delta);
        }
        let slope = match previous {
            Some((d_prev, r_prev)) if delta != d_prev && (residual - r_prev) / (delta - d_prev) > 0.0 => {
                (residual - r_prev) / (delta - d_prev)
            }
            _ => linear_slope,
        };
        let slow = previous.is_some_and(|(_, r_prev)| residual.abs() > SOLVER_DAMPING * r_prev.abs());
        previous = Some((delta, residual));
        let next = delta - residual / slope;
        delta = if !slow && next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(SimError::SolverDivergence {
        iterations: params.solver_max_iter,
        residual_fc: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceParams;

    fn linear_device(c_bg: f64) -> HysteronEnsemble {
        let p = DeviceParams {
            c_sw_peak: 0.0,
            c_bg,
            v_bias: 0.0,
            ..DeviceParams::default()
        };
        HysteronEnsemble::nominal(&p).unwrap()
    }

    #[test]
    fn precharge_sets_vcm() {
        let params = CircuitParams::default();
        let bl = BitLineState { v_bl: 0.3, precharged: false }.precharge(&params);
        assert_eq!(bl.v_bl, 0.9);
        assert!(bl.precharged);
        assert_eq!(bl.precharge(&params), bl);
    }

    #[test]
    fn precharge_to_zero() {
        let params = CircuitParams {
            vcm: 0.0,
            ..CircuitParams::default()
        };
        let bl = BitLineState::new(&params).precharge(&params);
        assert_eq!(bl.v_bl, 0.0);
    }

    #[test]
    fn ideal_sense_amp() {
        let params = CircuitParams {
            sa_offset_sigma: 0.0,
            ..CircuitParams::default()
        };
        let sa = SenseAmpInstance::sample(&params, 17);
        assert_eq!(sa.threshold, 0.9);
        let sampled = CircuitParams::default();
        assert_eq!(SenseAmpInstance::sample(&sampled, 4), SenseAmpInstance::sample(&sampled, 4));
    }

    #[test]
    fn latch_decisions() {
        let p = CircuitParams::default();
        let sa = SenseAmpInstance::ideal(&p);
        assert_eq!(sa_latch(0.95, &sa), 1);
        assert_eq!(sa_latch(0.85, &sa), 0);
        assert_eq!(sa_latch(0.9, &sa), 0);
        let shifted = SenseAmpInstance::with_offset(&p, 0.005);
        assert_eq!(sa_latch(0.903, &shifted), 0);
    }

    #[test]
    fn identical_linear_devices_cancel() {
        let params = CircuitParams::default();
        let cell = linear_device(20.0);
        let reference = ReferenceCell::FeCap(linear_device(20.0).into_flipped());
        let out = read_charge_share(&cell, &reference, 0.1, 40e-9, &params).unwrap();
        assert!((out.v_bl - params.vcm).abs() < 1e-12);
    }

    #[test]
    fn linear_devices_match_closed_form() {
        let params = CircuitParams::default();
        let cell = linear_device(24.0);
        let reference = ReferenceCell::Linear { capacitance_ff: 450.0 };
        let out = read_charge_share(&cell, &reference, 0.1, 40e-9, &params).unwrap();
        let c_cell = 24.0 * 25.0;
        let expected = 0.1 * (c_cell - 450.0) / (params.c_bl + c_cell + 450.0);
        assert!((out.v_bl - params.vcm - expected).abs() < 1e-6);
        assert!(out.residual_fc.abs() < params.solver_tol);
    }

    #[test]
    fn swapped_linear_capacitors_reflect() {
        let params = CircuitParams::default();
        let big = linear_device(24.0);
        let small = linear_device(16.0);
        let a = read_charge_share(&big, &ReferenceCell::FeCap(small.clone().into_flipped()), 0.1, 40e-9, &params).unwrap();
        let b = read_charge_share(&small, &ReferenceCell::FeCap(big.into_flipped()), 0.1, 40e-9, &params).unwrap();
        let tol = params.solver_tol / params.c_bl;
        assert!(((a.v_bl - params.vcm) + (b.v_bl - params.vcm)).abs() < 2.0 * tol);
    }

    #[test]
    fn iteration_cap_reports_divergence() {
        let params = CircuitParams {
            solver_max_iter: 1,
            solver_tol: 1e-30,
            ..CircuitParams::default()
        };
        let mut cell = HysteronEnsemble::nominal(&DeviceParams::default()).unwrap();
        cell.set_uniform_state(0.5);
        let reference = ReferenceCell::Linear { capacitance_ff: 300.0 };
        let err = read_charge_share(&cell, &reference, 0.4, 40e-9, &params).unwrap_err();
        assert!(matches!(err, SimError::SolverDivergence { iterations: 1, .. }));
    }
}
