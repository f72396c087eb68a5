//! Write and read sequencing of the memory macro.
//!
//! Programming pulses are given as device voltages (bit-line electrode minus
//! word-line electrode) while the bit line is clamped to VCM. Bit 0 is the
//! negatively saturated state. Bit 1 is the net-zero state reached from
//! negative saturation with a partial positive pulse whose amplitude is found
//! by bisection.
//!
//! The reference FeCap is flipped. It is saturated in its own positive
//! direction and then partially switched back until its capacitance at the
//! read voltage sits halfway between the two programmed cell states of the
//! nominal device.

use serde::{Deserialize, Serialize};

use crate::circuit::{read_charge_share_with, BitLineState, CircuitParams, ReferenceCell, SenseAmpInstance};
use crate::device::{DeviceParams, HysteronEnsemble, PulseSpec, DEFAULT_RAMP_SUBSTEPS};
use crate::error::{Result, SimError};

/// Programming pulse width, s.
pub const PROGRAM_WIDTH: f64 = 1e-6;
/// Saturating programming amplitude, V.
pub const PROGRAM_AMPLITUDE: f64 = 1.8;
/// Residual polarization accepted for bit 1, µC/cm².
pub const BIT1_POLARIZATION_TOL: f64 = 0.1;
/// Reference capacitance accuracy as a fraction of the cell window.
pub const REFERENCE_TOL: f64 = 0.001;

const BISECTION_STEPS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    #[default]
    Fecap,
    Linear,
}

/// Read options shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub reference: ReferenceKind,
    /// Sub-steps of the read ramp.
    pub read_substeps: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            reference: ReferenceKind::Fecap,
            read_substeps: DEFAULT_RAMP_SUBSTEPS,
        }
    }
}

impl ProtocolParams {
    pub fn violations(&self) -> Vec<SimError> {
        let mut out = Vec::new();
        if self.read_substeps < crate::device::MIN_RAMP_SUBSTEPS {
            out.push(SimError::invalid(
                "protocol.read_substeps",
                format!("must be >= {}, got {}", crate::device::MIN_RAMP_SUBSTEPS, self.read_substeps),
            ));
        }
        out
    }
}

/// Capacitance of a storage cell while its word line sits at `v_read`, fF.
pub fn cell_read_capacitance(cell: &HysteronEnsemble, v_read: f64) -> f64 {
    cell.small_signal_capacitance(-v_read)
}

/// Capacitance of the reference while `WL_ref` sits at `-v_read`, fF.
pub fn reference_read_capacitance(reference: &ReferenceCell, v_read: f64) -> f64 {
    reference.small_signal_capacitance(v_read)
}

/// Programs a storage cell to `bit`.
pub fn program_cell(cell: &mut HysteronEnsemble, bit: u8) -> Result<()> {
    match bit {
        0 => {
            saturate(cell, -1.0)?;
            Ok(())
        }
        1 => {
            saturate(cell, -1.0)?;
            let start = cell.clone();
            let amplitude = bisect(0.0, PROGRAM_AMPLITUDE, |a| {
                let mut trial = start.clone();
                trial.apply_pulse(&PulseSpec::new(a, PROGRAM_WIDTH))?;
                Ok(trial.polarization())
            }, 0.0, BIT1_POLARIZATION_TOL)?;
            cell.apply_pulse(&PulseSpec::new(amplitude, PROGRAM_WIDTH))?;
            Ok(())
        }
        other => Err(SimError::invalid("bit", format!("must be 0 or 1, got {other}"))),
    }
}

/// Saturating pulse in the device's own polarity `sign`.
fn saturate(ens: &mut HysteronEnsemble, sign: f64) -> Result<()> {
    let orient = if ens.is_flipped() { -1.0 } else { 1.0 };
    ens.apply_pulse(&PulseSpec::new(orient * sign * PROGRAM_AMPLITUDE, PROGRAM_WIDTH))?;
    Ok(())
}

/// Bisection on an increasing function for `f(x) = target` within `tol`.
fn bisect(
    mut lo: f64,
    mut hi: f64,
    f: impl Fn(f64) -> Result<f64>,
    target: f64,
    tol: f64,
) -> Result<f64> {
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if !(f_lo <= target && target <= f_hi) {
        return Err(SimError::Calibration(format!(
            "target {target} not bracketed by [{f_lo}, {f_hi}]"
        )));
    }
    if (f_lo - target).abs() < tol {
        return Ok(lo);
    }
    if (f_hi - target).abs() < tol {
        return Ok(hi);
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let value = f(mid)?;
        if (value - target).abs() < tol {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SimError::Calibration(format!(
        "bisection did not reach tolerance {tol} for target {target}"
    )))
}

/// Read-voltage capacitances of the nominal device programmed to bit 0 and
/// bit 1, fF.
pub fn nominal_read_capacitances(device: &DeviceParams, v_read: f64) -> Result<(f64, f64)> {
    let nominal = HysteronEnsemble::nominal(device)?;
    let mut bit0 = nominal.clone();
    let mut bit1 = nominal;
    program_cell(&mut bit0, 0)?;
    program_cell(&mut bit1, 1)?;
    Ok((cell_read_capacitance(&bit0, v_read), cell_read_capacitance(&bit1, v_read)))
}

/// Programs a flipped FeCap reference so that its read capacitance equals
/// `target` within `tol` (fF).
pub fn program_reference_device(reference: &mut HysteronEnsemble, v_read: f64, target: f64, tol: f64) -> Result<()> {
    if !reference.is_flipped() {
        return Err(SimError::Calibration("reference device must be flipped".into()));
    }
    saturate(reference, 1.0)?;
    let start = reference.clone();
    // Applied +a drives a flipped device towards its negative saturation,
    // which lowers its capacitance at the read voltage.
    let capacitance_after = |a: f64| -> Result<f64> {
        let mut trial = start.clone();
        trial.apply_pulse(&PulseSpec::new(a, PROGRAM_WIDTH))?;
        Ok(-trial.small_signal_capacitance(v_read))
    };
    let amplitude = bisect(0.0, PROGRAM_AMPLITUDE, capacitance_after, -target, tol)?;
    reference.apply_pulse(&PulseSpec::new(amplitude, PROGRAM_WIDTH))?;
    Ok(())
}

/// Outcome of one read cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadOutcome {
    pub bit: u8,
    pub v_bl: f64,
    /// Set when the read pulse is zero, so the decision is the tie-break.
    pub degenerate: bool,
    pub iterations: usize,
    pub residual_fc: f64,
}

/// Bit line, storage cells and reference of one macro column.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub cells: Vec<HysteronEnsemble>,
    pub reference: ReferenceCell,
    pub bitline: BitLineState,
    pub sense_amp: SenseAmpInstance,
    pub circuit: CircuitParams,
    /// Design-nominal device parameters the reference is trimmed against.
    pub device: DeviceParams,
    pub protocol: ProtocolParams,
}

impl MacroState {
    pub fn new(
        cells: Vec<HysteronEnsemble>,
        reference: HysteronEnsemble,
        sense_amp: SenseAmpInstance,
        circuit: CircuitParams,
        device: DeviceParams,
        protocol: ProtocolParams,
    ) -> Result<Self> {
        if cells.is_empty() {
            return Err(SimError::invalid("cells", "macro needs at least one word line"));
        }
        let reference = if reference.is_flipped() { reference } else { reference.into_flipped() };
        Ok(Self {
            cells,
            reference: ReferenceCell::FeCap(reference),
            bitline: BitLineState::new(&circuit),
            sense_amp,
            circuit,
            device,
            protocol,
        })
    }

    fn check_wl(&self, wl: usize) -> Result<()> {
        if wl >= self.cells.len() {
            return Err(SimError::WordLineOutOfRange {
                index: wl,
                len: self.cells.len(),
            });
        }
        Ok(())
    }

    /// Trims the reference for reads at `v_read`.
    ///
    /// With a FeCap reference the device is programmed by bisection; with a
    /// linear reference the capacitor takes the midpoint value directly.
    pub fn program_reference(&mut self, v_read: f64) -> Result<()> {
        let (c0, c1) = nominal_read_capacitances(&self.device, v_read)?;
        let window = (c1 - c0).abs();
        if !(window > 1e-9 * c0.abs().max(1.0)) {
            return Err(SimError::Calibration(format!(
                "no capacitive window at {v_read} V (bit 0: {c0} fF, bit 1: {c1} fF)"
            )));
        }
        let target = 0.5 * (c0 + c1);
        match self.protocol.reference {
            ReferenceKind::Linear => {
                self.reference = ReferenceCell::Linear { capacitance_ff: target };
            }
            ReferenceKind::Fecap => {
                let mut device = match &self.reference {
                    ReferenceCell::FeCap(ens) => ens.clone(),
                    ReferenceCell::Linear { .. } => HysteronEnsemble::nominal(&self.device)?.into_flipped(),
                };
                program_reference_device(&mut device, v_read, target, REFERENCE_TOL * window)?;
                self.reference = ReferenceCell::FeCap(device);
            }
        }
        Ok(())
    }

    /// Programs word line `wl`. The bit line is held at VCM.
    pub fn write_bit(&mut self, wl: usize, bit: u8) -> Result<()> {
        self.check_wl(wl)?;
        self.bitline = BitLineState {
            v_bl: self.circuit.vcm,
            precharged: false,
        };
        program_cell(&mut self.cells[wl], bit)
    }

    /// Precharge, complementary read pulses, latch.
    pub fn read_bit(&mut self, wl: usize, v_read: f64, duration: f64) -> Result<ReadOutcome> {
        self.check_wl(wl)?;
        self.bitline = self.bitline.precharge(&self.circuit);
        let share = read_charge_share_with(
            &self.cells[wl],
            &self.reference,
            v_read,
            duration,
            &self.circuit,
            self.protocol.read_substeps,
        )?;
        self.cells[wl] = share.cell;
        self.reference = share.reference;
        self.bitline = BitLineState {
            v_bl: share.v_bl,
            precharged: false,
        };
        Ok(ReadOutcome {
            bit: self.sense_amp.latch(share.v_bl),
            v_bl: share.v_bl,
            degenerate: v_read == 0.0,
            iterations: share.iterations,
            residual_fc: share.residual_fc,
        })
    }

    pub fn cell(&self, wl: usize) -> Result<&HysteronEnsemble> {
        self.check_wl(wl)?;
        Ok(&self.cells[wl])
    }
}

/// Parameters of one macro column as loaded from a run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroConfig {
    pub device: DeviceParams,
    pub circuit: CircuitParams,
    pub protocol: ProtocolParams,
}

impl MacroConfig {
    /// Every violated parameter invariant.
    pub fn violations(&self) -> Vec<SimError> {
        let mut out = self.device.violations();
        out.extend(self.circuit.violations());
        out.extend(self.protocol.violations());
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }

    /// Single-cell macro from the given instances.
    pub fn build(&self, cell: HysteronEnsemble, reference: HysteronEnsemble, sense_amp: SenseAmpInstance) -> Result<MacroState> {
        MacroState::new(
            vec![cell],
            reference,
            sense_amp,
            self.circuit.clone(),
            self.device.clone(),
            self.protocol.clone(),
        )
    }

    /// Single-cell macro of nominal devices and an ideal sense amplifier.
    pub fn nominal_macro(&self) -> Result<MacroState> {
        let nominal = HysteronEnsemble::nominal(&self.device)?;
        self.build(nominal.clone(), nominal, SenseAmpInstance::ideal(&self.circuit))
    }
}
