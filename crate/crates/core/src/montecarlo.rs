//! Monte Carlo yield experiments and the read-window sweep.
//!
//! Every trial draws its cell, reference and sense amplifier from seeds
//! derived from `(master seed, stream, bit, trial id)`, so a trial's outcome
//! does not depend on which thread runs it. Results are collected in trial
//! order before any reduction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::circuit::SenseAmpInstance;
use crate::device::{HysteronEnsemble, PulseSpec};
use crate::error::{Result, SimError};
use crate::protocol::{cell_read_capacitance, MacroConfig};
use crate::seeds::{derive_seed, derive_seed2, Stream};

/// Default number of trials per bit.
pub const DEFAULT_TRIALS: usize = 200;
/// Default read pulse width of the yield experiments, s.
pub const DEFAULT_READ_DURATION: f64 = 40e-9;
/// Default read pulse width of the read-window sweep, s.
pub const WINDOW_READ_DURATION: f64 = 4e-6;
/// Read voltage the window-sweep reference is trimmed at, V.
pub const WINDOW_REFERENCE_V_READ: f64 = 0.1;
/// Polarization change per read, as a fraction of `p_s`, that marks a disturb.
pub const DISTURB_FRACTION: f64 = 0.01;

/// Which populations are sampled. Disabled sources use nominal instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variability {
    pub device: bool,
    pub sense_amp: bool,
}

impl Default for Variability {
    fn default() -> Self {
        Self {
            device: true,
            sense_amp: true,
        }
    }
}

/// Inputs shared by the yield experiments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct YieldSetup {
    pub config: MacroConfig,
    pub variability: Variability,
    /// Read pulse width, s.
    pub read_duration: f64,
}

impl YieldSetup {
    pub fn new(config: MacroConfig) -> Self {
        Self {
            config,
            variability: Variability::default(),
            read_duration: DEFAULT_READ_DURATION,
        }
    }

    pub fn with_variability(mut self, variability: Variability) -> Self {
        self.variability = variability;
        self
    }
}

/// One write/read trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub written_bit: u8,
    /// `None` when the trial failed.
    pub read_bit: Option<u8>,
    pub v_bl: Option<f64>,
    pub sa_threshold: f64,
    pub device_seed: u64,
    pub sa_seed: u64,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn correct(&self) -> bool {
        self.read_bit == Some(self.written_bit)
    }
}

/// Count of bit-line voltages in `[lower_mv, lower_mv + 1)` mV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HistogramBin {
    pub lower_mv: i64,
    pub count: usize,
}

/// Per-bit statistics of one yield run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitStats {
    pub bit: u8,
    pub n_trials: usize,
    /// Trials that read back the written bit.
    pub n_correct: usize,
    /// Trials whose simulation failed.
    pub n_failed: usize,
    /// Fraction of trials that read back the written bit. Failed trials
    /// count as wrong reads.
    pub yield_fraction: f64,
    pub mean_v_bl: f64,
    pub sigma_v_bl: f64,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YieldReport {
    pub v_read: f64,
    pub n_trials: usize,
    pub bit0: BitStats,
    pub bit1: BitStats,
    pub trials: Vec<TrialRecord>,
}

impl YieldReport {
    pub fn yield_bit0(&self) -> f64 {
        self.bit0.yield_fraction
    }

    pub fn yield_bit1(&self) -> f64 {
        self.bit1.yield_fraction
    }
}

/// Maps `f` over `0..n`, in parallel when enabled, keeping index order.
pub(crate) fn map_trials<T: Send, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn run_trial(setup: &YieldSetup, v_read: f64, master: u64, bit: u8, trial_id: u64) -> TrialRecord {
    let outer = u64::from(bit);
    let device_seed = derive_seed2(master, Stream::CellDevice, outer, trial_id);
    let reference_seed = derive_seed2(master, Stream::ReferenceDevice, outer, trial_id);
    let sa_seed = derive_seed2(master, Stream::SenseAmp, outer, trial_id);
    let cfg = &setup.config;
    let sense_amp = if setup.variability.sense_amp {
        SenseAmpInstance::sample(&cfg.circuit, sa_seed)
    } else {
        SenseAmpInstance::ideal(&cfg.circuit)
    };
    let mut record = TrialRecord {
        trial_id,
        written_bit: bit,
        read_bit: None,
        v_bl: None,
        sa_threshold: sense_amp.threshold,
        device_seed,
        sa_seed,
        error: None,
    };
    let outcome = (|| -> Result<_> {
        let (cell, reference) = if setup.variability.device {
            (
                HysteronEnsemble::sample(&cfg.device, device_seed)?,
                HysteronEnsemble::sample(&cfg.device, reference_seed)?,
            )
        } else {
            let nominal = HysteronEnsemble::nominal(&cfg.device)?;
            (nominal.clone(), nominal)
        };
        let mut state = cfg.build(cell, reference, sense_amp)?;
        state.program_reference(v_read)?;
        state.write_bit(0, bit)?;
        state.read_bit(0, v_read, setup.read_duration)
    })();
    match outcome {
        Ok(read) => {
            record.read_bit = Some(read.bit);
            record.v_bl = Some(read.v_bl);
        }
        Err(err) => record.error = Some(err.to_string()),
    }
    record
}

fn bit_stats(bit: u8, trials: &[TrialRecord]) -> BitStats {
    let n = trials.len();
    let values: Vec<f64> = trials.iter().filter_map(|t| t.v_bl).collect();
    let n_ok = values.len();
    let n_correct = trials.iter().filter(|t| t.correct()).count();
    let mean = if n_ok > 0 { values.iter().sum::<f64>() / n_ok as f64 } else { f64::NAN };
    let sigma = if n_ok > 0 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_ok as f64).sqrt()
    } else {
        f64::NAN
    };
    let mut bins = std::collections::BTreeMap::<i64, usize>::new();
    for v in &values {
        *bins.entry((v * 1e3).floor() as i64).or_default() += 1;
    }
    BitStats {
        bit,
        n_trials: n,
        n_correct,
        n_failed: n - n_ok,
        yield_fraction: n_correct as f64 / n as f64,
        mean_v_bl: mean,
        sigma_v_bl: sigma,
        histogram: bins
            .into_iter()
            .map(|(lower_mv, count)| HistogramBin { lower_mv, count })
            .collect(),
    }
}

/// Writes and reads `n_trials` fresh macros per bit at `v_read`.
///
/// Trial failures are recorded in the report and do not abort the batch.
pub fn run_yield(setup: &YieldSetup, v_read: f64, n_trials: usize, seed: u64) -> Result<YieldReport> {
    if n_trials == 0 {
        return Err(SimError::invalid("n_trials", "must be >= 1"));
    }
    if !v_read.is_finite() || v_read.abs() > setup.config.circuit.vdd {
        return Err(SimError::invalid("v_read", format!("must lie within +-vdd, got {v_read}")));
    }
    setup.config.validate()?;
    PulseSpec::new(v_read, setup.read_duration).validate()?;
    let records = map_trials(2 * n_trials, |k| {
        let bit = (k / n_trials) as u8;
        run_trial(setup, v_read, seed, bit, (k % n_trials) as u64)
    });
    let (bit0, bit1) = records.split_at(n_trials);
    Ok(YieldReport {
        v_read,
        n_trials,
        bit0: bit_stats(0, bit0),
        bit1: bit_stats(1, bit1),
        trials: records.clone(),
    })
}

/// Seed used for point `index` of a yield sweep.
pub fn sweep_point_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, Stream::SweepPoint, index as u64)
}

/// Runs [`run_yield`] at each voltage with independent derived seeds.
pub fn sweep_yield(setup: &YieldSetup, v_reads: &[f64], n_trials: usize, seed: u64) -> Result<Vec<YieldReport>> {
    if v_reads.is_empty() {
        return Err(SimError::invalid("v_read_list", "must not be empty"));
    }
    v_reads
        .iter()
        .enumerate()
        .map(|(i, &v)| run_yield(setup, v, n_trials, sweep_point_seed(seed, i)))
        .collect()
}

/// One point of the read-window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowPoint {
    pub v_read: f64,
    /// Cell capacitance at the read voltage before the read, fF.
    pub c_bit0: f64,
    pub c_bit1: f64,
    /// Cell capacitance at the read voltage after the read, fF.
    pub c_bit0_after: f64,
    pub c_bit1_after: f64,
    pub v_bl_bit0: f64,
    pub v_bl_bit1: f64,
    /// Polarization change caused by the read, µC/cm².
    pub dp_bit0: f64,
    pub dp_bit1: f64,
    pub disturb_flag: bool,
}

/// Programs fresh nominal cells for every read voltage and applies one read
/// of `duration` to each state.
///
/// The reference is trimmed once at [`WINDOW_REFERENCE_V_READ`] and every
/// point starts from that trimmed reference.
pub fn read_window_sweep(config: &MacroConfig, v_reads: &[f64], duration: f64) -> Result<Vec<WindowPoint>> {
    config.validate()?;
    if v_reads.is_empty() {
        return Err(SimError::invalid("v_read_range", "must not be empty"));
    }
    for &v in v_reads {
        if !v.is_finite() || v.abs() > config.circuit.vdd {
            return Err(SimError::invalid("v_read_range", format!("{v} V lies outside +-vdd")));
        }
    }
    let mut base = config.nominal_macro()?;
    base.program_reference(WINDOW_REFERENCE_V_READ)?;
    let limit = DISTURB_FRACTION * config.device.p_s;
    let points = map_trials(v_reads.len(), |i| -> Result<WindowPoint> {
        let v = v_reads[i];
        let mut out = [(0.0, 0.0, 0.0, 0.0); 2];
        for bit in [0u8, 1] {
            let mut state = base.clone();
            state.write_bit(0, bit)?;
            let before = state.cell(0)?.clone();
            let read = state.read_bit(0, v, duration)?;
            let after = state.cell(0)?;
            out[bit as usize] = (
                cell_read_capacitance(&before, v),
                cell_read_capacitance(after, v),
                read.v_bl,
                after.polarization() - before.polarization(),
            );
        }
        let [b0, b1] = out;
        Ok(WindowPoint {
            v_read: v,
            c_bit0: b0.0,
            c_bit1: b1.0,
            c_bit0_after: b0.1,
            c_bit1_after: b1.1,
            v_bl_bit0: b0.2,
            v_bl_bit1: b1.2,
            dp_bit0: b0.3,
            dp_bit1: b1.3,
            disturb_flag: b0.3.abs() > limit || b1.3.abs() > limit,
        })
    });
    points.into_iter().collect()
}

/// Lowest read voltage of a window sweep with the disturb flag set.
pub fn disturb_onset(points: &[WindowPoint]) -> Option<f64> {
    points.iter().find(|p| p.disturb_flag).map(|p| p.v_read)
}

/// Expected bit-1 yield when the sense-amplifier offset is the only source
/// of variability: `Phi(margin / sigma)`.
pub fn analytic_offset_yield(v_bl: f64, threshold_mean: f64, sigma_offset: f64, bit: u8) -> f64 {
    let margin = if bit == 1 { v_bl - threshold_mean } else { threshold_mean - v_bl };
    if sigma_offset == 0.0 {
        return if margin > 0.0 { 1.0 } else { 0.0 };
    }
    Normal::standard().cdf(margin / sigma_offset)
}
