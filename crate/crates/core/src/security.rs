//! Read-disturb trajectories and the read-voltage fault-injection attack.
//!
//! A bit flip is a decision-level event: the sense amplifier returns a value
//! different from the written bit. The attack statistic is taken on the
//! median device of a small population.

use serde::{Deserialize, Serialize};

use crate::circuit::SenseAmpInstance;
use crate::device::HysteronEnsemble;
use crate::error::{Result, SimError};
use crate::montecarlo::{map_trials, Variability};
use crate::protocol::{cell_read_capacitance, reference_read_capacitance, MacroConfig, MacroState};
use crate::seeds::{derive_seed2, Stream};

/// Read pulse width of the disturb experiments, s.
pub const DISTURB_DURATION: f64 = 40e-9;
/// Devices simulated per attack.
pub const DEFAULT_POPULATION: usize = 50;
/// Amplitude grid of the onset search, V.
pub const ONSET_GRID_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonitorAction {
    /// Record the anomaly and let the pulse through.
    Log,
    /// Replace the pulse by a nominal read.
    Block,
}

/// Ideal comparator on the applied read amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorPolicy {
    /// Accepted amplitudes `(min, max)`, V.
    pub v_read_band: (f64, f64),
    pub action: MonitorAction,
}

impl MonitorPolicy {
    pub fn violations(&self, path: &str) -> Vec<SimError> {
        let (lo, hi) = self.v_read_band;
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Vec::new()
        } else {
            vec![SimError::invalid(
                format!("{path}.v_read_band"),
                format!("needs finite min < max, got ({lo}, {hi})"),
            )]
        }
    }

    pub fn admits(&self, v_read: f64) -> bool {
        v_read >= self.v_read_band.0 && v_read <= self.v_read_band.1
    }
}

/// Repeated reads of bit-1 cells at a manipulated amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackScenario {
    /// Amplitude the reference is trimmed for, V.
    pub nominal_v_read: f64,
    pub attacker_v_read: f64,
    /// s.
    pub pulse_duration: f64,
    pub max_reads: usize,
    pub monitor: Option<MonitorPolicy>,
    pub population: usize,
    pub variability: Variability,
}

impl Default for AttackScenario {
    fn default() -> Self {
        Self {
            nominal_v_read: 0.1,
            attacker_v_read: 0.3,
            pulse_duration: DISTURB_DURATION,
            max_reads: 1000,
            monitor: None,
            population: DEFAULT_POPULATION,
            variability: Variability::default(),
        }
    }
}

impl AttackScenario {
    pub fn violations(&self, path: &str) -> Vec<SimError> {
        let mut out = Vec::new();
        if self.max_reads == 0 {
            out.push(SimError::invalid(format!("{path}.max_reads"), "must be >= 1"));
        }
        if self.population == 0 {
            out.push(SimError::invalid(format!("{path}.population"), "must be >= 1"));
        }
        if !(self.pulse_duration.is_finite() && self.pulse_duration > 0.0) {
            out.push(SimError::invalid(
                format!("{path}.pulse_duration"),
                format!("must be > 0, got {}", self.pulse_duration),
            ));
        }
        for (name, v) in [("nominal_v_read", self.nominal_v_read), ("attacker_v_read", self.attacker_v_read)] {
            if !v.is_finite() {
                out.push(SimError::invalid(format!("{path}.{name}"), "must be finite"));
            }
        }
        if let Some(monitor) = &self.monitor {
            out.extend(monitor.violations(&format!("{path}.monitor")));
        }
        out
    }

    /// Amplitude that reaches the word lines after the monitor.
    pub fn effective_v_read(&self) -> f64 {
        match &self.monitor {
            Some(m) if m.action == MonitorAction::Block && !m.admits(self.attacker_v_read) => self.nominal_v_read,
            _ => self.attacker_v_read,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisturbRecord {
    /// 1-based.
    pub read_index: usize,
    pub v_read: f64,
    /// Cell capacitance at the read voltage after this read, fF.
    pub c_cell: f64,
    /// µC/cm².
    pub p: f64,
    pub v_bl: f64,
    pub decided_bit: u8,
    pub flip_detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisturbTrace {
    pub v_read: f64,
    /// Reference capacitance at the read voltage when it was trimmed, fF.
    pub reference_capacitance: f64,
    /// Fresh bit-1 capacitance before the first read, fF.
    pub initial_capacitance: f64,
    pub records: Vec<DisturbRecord>,
}

impl DisturbTrace {
    /// First read after which the cell capacitance is below the reference value.
    pub fn crossing_read(&self) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.c_cell < self.reference_capacitance)
            .map(|r| r.read_index)
    }

    pub fn first_flip(&self) -> Option<usize> {
        self.records.iter().find(|r| r.flip_detected).map(|r| r.read_index)
    }

    /// Relative capacitance change over the trace.
    pub fn relative_change(&self) -> f64 {
        match self.records.last() {
            Some(last) => (last.c_cell - self.initial_capacitance) / self.initial_capacitance,
            None => 0.0,
        }
    }
}

fn trajectory(
    config: &MacroConfig,
    v_read: f64,
    duration: f64,
    n_reads: usize,
    stop_at_crossing: bool,
) -> Result<DisturbTrace> {
    if n_reads == 0 {
        return Err(SimError::invalid("n_reads", "must be >= 1"));
    }
    config.validate()?;
    let mut state = config.nominal_macro()?;
    state.program_reference(v_read)?;
    state.write_bit(0, 1)?;
    let mut trace = DisturbTrace {
        v_read,
        reference_capacitance: reference_read_capacitance(&state.reference, v_read),
        initial_capacitance: cell_read_capacitance(state.cell(0)?, v_read),
        records: Vec::with_capacity(n_reads),
    };
    for read_index in 1..=n_reads {
        let read = state.read_bit(0, v_read, duration)?;
        let cell = state.cell(0)?;
        trace.records.push(DisturbRecord {
            read_index,
            v_read,
            c_cell: cell_read_capacitance(cell, v_read),
            p: cell.polarization(),
            v_bl: read.v_bl,
            decided_bit: read.bit,
            flip_detected: read.bit != 1,
        });
        if stop_at_crossing && trace.crossing_read().is_some() {
            break;
        }
    }
    Ok(trace)
}

/// Programs a nominal bit-1 cell and reads it `n_reads` times without
/// re-programming. The reference is trimmed once for `v_read` and the sense
/// amplifier is ideal.
pub fn disturb_trajectory(config: &MacroConfig, v_read: f64, duration: f64, n_reads: usize) -> Result<DisturbTrace> {
    trajectory(config, v_read, duration, n_reads, false)
}

/// Read index at which a nominal bit-1 cell crosses the reference value, or
/// `None` within `n_reads`. Stops at the crossing.
pub fn crossing_read(config: &MacroConfig, v_read: f64, duration: f64, n_reads: usize) -> Result<Option<usize>> {
    Ok(trajectory(config, v_read, duration, n_reads, true)?.crossing_read())
}

/// Lowest amplitude on a 10 mV grid in `[v_min, v_max]` whose nominal bit-1
/// trajectory crosses the reference within `n_reads`.
///
/// The search bisects the grid, which assumes crossing is monotone in the
/// amplitude.
pub fn disturb_onset(config: &MacroConfig, v_min: f64, v_max: f64, duration: f64, n_reads: usize) -> Result<Option<f64>> {
    if !(v_min < v_max) {
        return Err(SimError::invalid("v_range", format!("needs min < max, got ({v_min}, {v_max})")));
    }
    let steps = ((v_max - v_min) / ONSET_GRID_STEP).round() as usize;
    let grid = |i: usize| v_min + i as f64 * ONSET_GRID_STEP;
    let crosses = |i: usize| -> Result<bool> { Ok(crossing_read(config, grid(i), duration, n_reads)?.is_some()) };
    if !crosses(steps)? {
        return Ok(None);
    }
    if crosses(0)? {
        return Ok(Some(grid(0)));
    }
    let (mut lo, mut hi) = (0, steps);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if crosses(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(grid(hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub attacker_v_read: f64,
    /// Amplitude applied after the monitor, V.
    pub applied_v_read: f64,
    /// First read at which the median device decides wrongly.
    pub reads_to_first_bitflip: Option<usize>,
    pub detected: bool,
    pub detection_read: Option<usize>,
    /// Fraction of the population deciding wrongly at each read.
    pub yield_trajectory: Vec<f64>,
    /// First wrong read of every device.
    pub device_first_flips: Vec<Option<usize>>,
    /// Cell polarization of every device after the last read, µC/cm².
    pub final_polarizations: Vec<f64>,
}

struct DeviceRun {
    first_flip: Option<usize>,
    wrong: Vec<bool>,
    final_p: f64,
}

fn attack_macro(config: &MacroConfig, scenario: &AttackScenario, seed: u64, device: u64) -> Result<MacroState> {
    let cell_seed = derive_seed2(seed, Stream::AttackPopulation, 0, device);
    let reference_seed = derive_seed2(seed, Stream::AttackPopulation, 1, device);
    let sa_seed = derive_seed2(seed, Stream::AttackPopulation, 2, device);
    let (cell, reference) = if scenario.variability.device {
        (
            HysteronEnsemble::sample(&config.device, cell_seed)?,
            HysteronEnsemble::sample(&config.device, reference_seed)?,
        )
    } else {
        let nominal = HysteronEnsemble::nominal(&config.device)?;
        (nominal.clone(), nominal)
    };
    let sense_amp = if scenario.variability.sense_amp {
        SenseAmpInstance::sample(&config.circuit, sa_seed)
    } else {
        SenseAmpInstance::ideal(&config.circuit)
    };
    let mut state = config.build(cell, reference, sense_amp)?;
    state.program_reference(scenario.nominal_v_read)?;
    state.write_bit(0, 1)?;
    Ok(state)
}

/// Repeatedly reads a bit-1 population at the attacker's amplitude, with
/// the monitor evaluating every pulse.
pub fn run_attack(scenario: &AttackScenario, config: &MacroConfig, seed: u64) -> Result<AttackReport> {
    let mut problems = config.violations();
    problems.extend(scenario.violations("experiment"));
    if let Some(err) = problems.into_iter().next() {
        return Err(err);
    }
    let applied = scenario.effective_v_read();
    if applied.abs() > config.circuit.vdd {
        return Err(SimError::invalid("experiment.attacker_v_read", "must lie within +-vdd"));
    }
    let detection_read = match &scenario.monitor {
        Some(m) if !m.admits(scenario.attacker_v_read) => Some(1),
        _ => None,
    };
    let runs = map_trials(scenario.population, |i| -> Result<DeviceRun> {
        let mut state = attack_macro(config, scenario, seed, i as u64)?;
        let mut wrong = Vec::with_capacity(scenario.max_reads);
        for _ in 0..scenario.max_reads {
            wrong.push(state.read_bit(0, applied, scenario.pulse_duration)?.bit != 1);
        }
        Ok(DeviceRun {
            first_flip: wrong.iter().position(|&w| w).map(|k| k + 1),
            final_p: state.cell(0)?.polarization(),
            wrong,
        })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    let yield_trajectory = (0..scenario.max_reads)
        .map(|k| runs.iter().filter(|r| r.wrong[k]).count() as f64 / n)
        .collect();
    let device_first_flips: Vec<Option<usize>> = runs.iter().map(|r| r.first_flip).collect();
    let mut sorted: Vec<usize> = device_first_flips.iter().map(|f| f.unwrap_or(usize::MAX)).collect();
    sorted.sort_unstable();
    let median = sorted[(sorted.len() - 1) / 2];
    Ok(AttackReport {
        attacker_v_read: scenario.attacker_v_read,
        applied_v_read: applied,
        reads_to_first_bitflip: (median != usize::MAX).then_some(median),
        detected: detection_read.is_some(),
        detection_read,
        yield_trajectory,
        device_first_flips,
        final_polarizations: runs.iter().map(|r| r.final_p).collect(),
    })
}
