//! Experiment dispatch. Each experiment returns its result tables and a
//! summary record for the manifest.

use fecap_core::calibration::{calibrate, SearchOptions};
use fecap_core::device::{triangular_waveform, SweepSample};
use fecap_core::montecarlo::{read_window_sweep, run_yield, sweep_yield, WindowPoint, YieldReport, YieldSetup};
use fecap_core::protocol::program_cell;
use fecap_core::security::{disturb_trajectory, run_attack, AttackScenario, DisturbTrace};
use fecap_core::{HysteronEnsemble, MacroConfig, Result as SimResult};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    DisturbExperiment, Experiment, HysteresisExperiment, ReadWindowExperiment, RunConfig, SweepExperiment,
    YieldExperiment,
};
use crate::error::CliError;
use crate::output::{fmt_opt, fmt_f64, Artifact, Table};

pub struct ExperimentOutput {
    pub artifacts: Vec<Artifact>,
    pub summary: Value,
    /// Non-fatal problems worth reporting on stderr.
    pub warnings: Vec<String>,
}

pub fn run(config: &RunConfig) -> Result<ExperimentOutput, CliError> {
    let macro_config = config.macro_config();
    let seed = config.master_seed;
    match config.experiment.as_ref().expect("experiment resolved before dispatch") {
        Experiment::Hysteresis(h) => hysteresis(&macro_config, h),
        Experiment::ReadWindow(w) => read_window(&macro_config, w),
        Experiment::Yield(y) => yield_experiment(&macro_config, y, seed),
        Experiment::Sweep(s) => sweep(&macro_config, s, seed),
        Experiment::Disturb(d) => disturb(&macro_config, d),
        Experiment::Attack(a) => attack(&macro_config, a, seed),
        Experiment::Calibrate(c) => calibration(config, c),
    }
}

/// Features of the last period of a hysteresis sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopSummary {
    pub p_max: f64,
    pub p_min: f64,
    /// Voltage at which P changes sign on each branch, V.
    pub v_cross_pos: Option<f64>,
    pub v_cross_neg: Option<f64>,
    /// Voltage of the capacitance maximum on each branch, V.
    pub v_peak_pos: f64,
    pub v_peak_neg: f64,
    /// Whether the capacitance maximum comes before the polarization sign change.
    pub peak_leads_pos: bool,
    pub peak_leads_neg: bool,
    /// Bit-0 and bit-1 capacitance at the window probe voltage, fF.
    pub c_hcs: f64,
    pub c_lcs: f64,
    pub window_ratio: f64,
}

fn branch_features(samples: &[&SweepSample]) -> (f64, Option<f64>, bool) {
    let peak = samples
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.c.total_cmp(&b.1.c))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let cross = samples.windows(2).position(|w| w[0].p.signum() != w[1].p.signum());
    let v_peak = samples.get(peak).map(|s| s.v).unwrap_or(0.0);
    (v_peak, cross.map(|i| samples[i + 1].v), cross.is_some_and(|i| peak <= i))
}

/// Analyzes the last period of `trace` and probes the low-voltage window.
pub fn analyze_loop(
    config: &MacroConfig,
    trace: &[SweepSample],
    points_per_period: usize,
    probe_v: f64,
) -> SimResult<LoopSummary> {
    let last = &trace[trace.len().saturating_sub(points_per_period)..];
    let positive: Vec<&SweepSample> = last.iter().filter(|s| s.v > 0.0).collect();
    let negative: Vec<&SweepSample> = last.iter().filter(|s| s.v < 0.0).collect();
    let (v_peak_pos, v_cross_pos, peak_leads_pos) = branch_features(&positive);
    let (v_peak_neg, v_cross_neg, peak_leads_neg) = branch_features(&negative);
    let nominal = HysteronEnsemble::nominal(&config.device)?;
    let mut bit0 = nominal.clone();
    let mut bit1 = nominal;
    program_cell(&mut bit0, 0)?;
    program_cell(&mut bit1, 1)?;
    let c_hcs = bit0.small_signal_capacitance(probe_v);
    let c_lcs = bit1.small_signal_capacitance(probe_v);
    Ok(LoopSummary {
        p_max: last.iter().map(|s| s.p).fold(f64::MIN, f64::max),
        p_min: last.iter().map(|s| s.p).fold(f64::MAX, f64::min),
        v_cross_pos,
        v_cross_neg,
        v_peak_pos,
        v_peak_neg,
        peak_leads_pos,
        peak_leads_neg,
        c_hcs,
        c_lcs,
        window_ratio: c_hcs / c_lcs,
    })
}

/// Runs the sweep on the nominal device.
pub fn hysteresis_trace(config: &MacroConfig, h: &HysteresisExperiment) -> SimResult<Vec<SweepSample>> {
    let wave = triangular_waveform(h.amplitude, h.periods, h.points_per_period);
    let dt = 1.0 / (h.frequency_hz * h.points_per_period as f64);
    HysteronEnsemble::nominal(&config.device)?.quasi_static_sweep(&wave, dt)
}

fn hysteresis(config: &MacroConfig, h: &HysteresisExperiment) -> Result<ExperimentOutput, CliError> {
    let trace = hysteresis_trace(config, h)?;
    let summary = analyze_loop(config, &trace, h.points_per_period, h.window_probe_v)?;
    let rows = trace
        .iter()
        .map(|s| vec![fmt_f64(s.t), fmt_f64(s.v), fmt_f64(s.p), fmt_f64(s.c)])
        .collect();
    let s = &summary;
    Ok(ExperimentOutput {
        artifacts: vec![
            Artifact::Csv(Table::new("hysteresis.csv", &["t_s", "v_V", "P_uC_cm2", "C_fF"], rows)),
            Artifact::Csv(Table::new(
                "hysteresis_summary.csv",
                &[
                    "P_max_uC_cm2",
                    "P_min_uC_cm2",
                    "v_cross_pos_V",
                    "v_cross_neg_V",
                    "v_Cpeak_pos_V",
                    "v_Cpeak_neg_V",
                    "C_HCS_fF",
                    "C_LCS_fF",
                    "window_ratio_1",
                ],
                vec![vec![
                    fmt_f64(s.p_max),
                    fmt_f64(s.p_min),
                    fmt_opt(s.v_cross_pos),
                    fmt_opt(s.v_cross_neg),
                    fmt_f64(s.v_peak_pos),
                    fmt_f64(s.v_peak_neg),
                    fmt_f64(s.c_hcs),
                    fmt_f64(s.c_lcs),
                    fmt_f64(s.window_ratio),
                ]],
            )),
        ],
        summary: serde_json::to_value(summary).unwrap_or(Value::Null),
        warnings: Vec::new(),
    })
}

/// Onsets and slope change of a read-window sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSummary {
    /// Lowest positive amplitude from which every larger point is flagged, V.
    pub onset_pos: Option<f64>,
    /// Same on the negative side, as a negative voltage.
    pub onset_neg: Option<f64>,
    /// Whether any point with |v_read| at or below 100 mV is flagged.
    pub flagged_below_100mv: bool,
    /// Bit-1 bit-line slope over 0 to 100 mV, V/V.
    pub slope_low: f64,
    /// Largest bit-1 bit-line slope within 50 mV of the positive onset, V/V.
    pub slope_onset: Option<f64>,
    pub slope_ratio: Option<f64>,
}

fn onset(points: &[&WindowPoint]) -> Option<f64> {
    let last_clear = points.iter().rposition(|p| !p.disturb_flag);
    match last_clear {
        None => points.first().map(|p| p.v_read),
        Some(i) => points.get(i + 1).map(|p| p.v_read),
    }
}

pub fn analyze_window(points: &[WindowPoint]) -> WindowSummary {
    let mut positive: Vec<&WindowPoint> = points.iter().filter(|p| p.v_read > 0.0).collect();
    positive.sort_by(|a, b| a.v_read.total_cmp(&b.v_read));
    let mut negative: Vec<&WindowPoint> = points.iter().filter(|p| p.v_read < 0.0).collect();
    negative.sort_by(|a, b| b.v_read.total_cmp(&a.v_read));
    let onset_pos = onset(&positive);
    let onset_neg = onset(&negative);
    let mut sorted: Vec<&WindowPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.v_read.total_cmp(&b.v_read));
    let slope = |a: &WindowPoint, b: &WindowPoint| (b.v_bl_bit1 - a.v_bl_bit1) / (b.v_read - a.v_read);
    let near = |v: f64| {
        sorted
            .iter()
            .min_by(|a, b| (a.v_read - v).abs().total_cmp(&(b.v_read - v).abs()))
            .copied()
    };
    let slope_low = match (near(0.0), near(0.1)) {
        (Some(a), Some(b)) if b.v_read > a.v_read => slope(a, b),
        _ => f64::NAN,
    };
    let slope_onset = onset_pos.and_then(|v0| {
        sorted
            .windows(2)
            .filter(|w| w[0].v_read >= v0 - 0.05 - 1e-9 && w[1].v_read <= v0 + 0.05 + 1e-9)
            .map(|w| slope(w[0], w[1]))
            .reduce(f64::max)
    });
    WindowSummary {
        onset_pos,
        onset_neg,
        flagged_below_100mv: points.iter().any(|p| p.v_read.abs() <= 0.1 + 1e-9 && p.disturb_flag),
        slope_low,
        slope_onset,
        slope_ratio: slope_onset.map(|s| s / slope_low),
    }
}

fn read_window(config: &MacroConfig, w: &ReadWindowExperiment) -> Result<ExperimentOutput, CliError> {
    let points = read_window_sweep(config, &w.grid(), w.duration)?;
    let summary = analyze_window(&points);
    let rows = points
        .iter()
        .map(|p| {
            vec![
                fmt_f64(p.v_read),
                fmt_f64(p.c_bit0),
                fmt_f64(p.c_bit1),
                fmt_f64(p.c_bit0_after),
                fmt_f64(p.c_bit1_after),
                fmt_f64(p.v_bl_bit0),
                fmt_f64(p.v_bl_bit1),
                fmt_f64(p.dp_bit0),
                fmt_f64(p.dp_bit1),
                u8::from(p.disturb_flag).to_string(),
            ]
        })
        .collect();
    let s = &summary;
    Ok(ExperimentOutput {
        artifacts: vec![
            Artifact::Csv(Table::new(
                "read_window.csv",
                &[
                    "v_read_V",
                    "C_bit0_fF",
                    "C_bit1_fF",
                    "C_bit0_after_fF",
                    "C_bit1_after_fF",
                    "v_bl_bit0_V",
                    "v_bl_bit1_V",
                    "dP_bit0_uC_cm2",
                    "dP_bit1_uC_cm2",
                    "disturb_flag_bool",
                ],
                rows,
            )),
            Artifact::Csv(Table::new(
                "read_window_summary.csv",
                &["onset_pos_V", "onset_neg_V", "slope_low_V_per_V", "slope_onset_V_per_V", "slope_ratio_1"],
                vec![vec![
                    fmt_opt(s.onset_pos),
                    fmt_opt(s.onset_neg),
                    fmt_f64(s.slope_low),
                    fmt_opt(s.slope_onset),
                    fmt_opt(s.slope_ratio),
                ]],
            )),
        ],
        summary: serde_json::to_value(summary).unwrap_or(Value::Null),
        warnings: Vec::new(),
    })
}

fn yield_tables(reports: &[YieldReport]) -> (Vec<Artifact>, Value, Vec<String>) {
    let mut trials = Vec::new();
    let mut summary = Vec::new();
    let mut histogram = Vec::new();
    let mut warnings = Vec::new();
    for r in reports {
        let errored = r.trials.iter().filter(|t| t.error.is_some()).count();
        if errored > 0 {
            warnings.push(format!("{errored} trial(s) at {} V failed and count as wrong reads", r.v_read));
        }
        for t in &r.trials {
            trials.push(vec![
                fmt_f64(r.v_read),
                t.trial_id.to_string(),
                t.written_bit.to_string(),
                t.read_bit.map(|b| b.to_string()).unwrap_or_default(),
                fmt_opt(t.v_bl),
                fmt_f64(t.sa_threshold),
                t.device_seed.to_string(),
                t.sa_seed.to_string(),
                t.error.clone().unwrap_or_default(),
            ]);
        }
        for stats in [&r.bit0, &r.bit1] {
            summary.push(vec![
                fmt_f64(r.v_read),
                stats.bit.to_string(),
                stats.n_trials.to_string(),
                stats.n_correct.to_string(),
                stats.n_failed.to_string(),
                fmt_f64(stats.yield_fraction),
                fmt_f64(stats.mean_v_bl),
                fmt_f64(stats.sigma_v_bl),
            ]);
            for bin in &stats.histogram {
                histogram.push(vec![
                    fmt_f64(r.v_read),
                    stats.bit.to_string(),
                    bin.lower_mv.to_string(),
                    bin.count.to_string(),
                ]);
            }
        }
    }
    let json_summary = Value::Array(
        reports
            .iter()
            .map(|r| json!({"v_read": r.v_read, "yield_bit0": r.yield_bit0(), "yield_bit1": r.yield_bit1()}))
            .collect(),
    );
    (
        vec![
            Artifact::Csv(Table::new(
                "yield_trials.csv",
                &[
                    "v_read_V",
                    "trial_id",
                    "written_bit",
                    "read_bit",
                    "v_bl_V",
                    "sa_threshold_V",
                    "device_seed",
                    "sa_seed",
                    "error",
                ],
                trials,
            )),
            Artifact::Csv(Table::new(
                "yield_summary.csv",
                &["v_read_V", "bit", "n_trials", "n_correct", "n_failed", "yield_1", "mean_v_bl_V", "sigma_v_bl_V"],
                summary,
            )),
            Artifact::Csv(Table::new(
                "yield_histogram.csv",
                &["v_read_V", "bit", "bin_lower_mV", "count"],
                histogram,
            )),
        ],
        json_summary,
        warnings,
    )
}

fn yield_experiment(config: &MacroConfig, y: &YieldExperiment, seed: u64) -> Result<ExperimentOutput, CliError> {
    let setup = YieldSetup {
        config: config.clone(),
        variability: y.variability,
        read_duration: y.duration,
    };
    let report = run_yield(&setup, y.v_read, y.n_trials, seed)?;
    let (artifacts, summary, warnings) = yield_tables(std::slice::from_ref(&report));
    Ok(ExperimentOutput {
        artifacts,
        summary,
        warnings,
    })
}

fn sweep(config: &MacroConfig, s: &SweepExperiment, seed: u64) -> Result<ExperimentOutput, CliError> {
    let setup = YieldSetup {
        config: config.clone(),
        variability: s.variability,
        read_duration: s.duration,
    };
    let reports = sweep_yield(&setup, &s.v_reads, s.n_trials, seed)?;
    let (artifacts, summary, warnings) = yield_tables(&reports);
    Ok(ExperimentOutput {
        artifacts,
        summary,
        warnings,
    })
}

/// One trajectory per amplitude, computed in parallel and kept in input order.
pub fn disturb_traces(config: &MacroConfig, d: &DisturbExperiment) -> SimResult<Vec<DisturbTrace>> {
    d.v_reads
        .par_iter()
        .map(|&v| disturb_trajectory(config, v, d.duration, d.n_reads))
        .collect()
}

fn disturb(config: &MacroConfig, d: &DisturbExperiment) -> Result<ExperimentOutput, CliError> {
    let traces = disturb_traces(config, d)?;
    let mut rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut summary = Vec::new();
    for trace in &traces {
        for r in &trace.records {
            rows.push(vec![
                fmt_f64(r.v_read),
                r.read_index.to_string(),
                fmt_f64(r.c_cell),
                fmt_f64(r.p),
                fmt_f64(r.v_bl),
                r.decided_bit.to_string(),
                u8::from(r.flip_detected).to_string(),
            ]);
        }
        summary_rows.push(vec![
            fmt_f64(trace.v_read),
            fmt_f64(trace.reference_capacitance),
            fmt_f64(trace.initial_capacitance),
            fmt_f64(trace.relative_change()),
            trace.crossing_read().map(|n| n.to_string()).unwrap_or_default(),
            trace.first_flip().map(|n| n.to_string()).unwrap_or_default(),
        ]);
        summary.push(json!({
            "v_read": trace.v_read,
            "relative_change": trace.relative_change(),
            "crossing_read": trace.crossing_read(),
            "first_flip": trace.first_flip(),
        }));
    }
    Ok(ExperimentOutput {
        artifacts: vec![
            Artifact::Csv(Table::new(
                "disturb_trace.csv",
                &["v_read_V", "read_index", "C_cell_fF", "P_uC_cm2", "v_bl_V", "decided_bit", "flip_detected_bool"],
                rows,
            )),
            Artifact::Csv(Table::new(
                "disturb_summary.csv",
                &["v_read_V", "C_ref_fF", "C_initial_fF", "relative_change_1", "crossing_read", "first_flip_read"],
                summary_rows,
            )),
        ],
        summary: Value::Array(summary),
        warnings: Vec::new(),
    })
}

fn attack(config: &MacroConfig, a: &AttackScenario, seed: u64) -> Result<ExperimentOutput, CliError> {
    let report = run_attack(a, config, seed)?;
    let trajectory = report
        .yield_trajectory
        .iter()
        .enumerate()
        .map(|(k, e)| vec![(k + 1).to_string(), fmt_f64(*e)])
        .collect();
    let devices = report
        .device_first_flips
        .iter()
        .zip(&report.final_polarizations)
        .enumerate()
        .map(|(i, (f, p))| vec![i.to_string(), f.map(|n| n.to_string()).unwrap_or_default(), fmt_f64(*p)])
        .collect();
    let summary = json!({
        "attacker_v_read": report.attacker_v_read,
        "applied_v_read": report.applied_v_read,
        "reads_to_first_bitflip": report.reads_to_first_bitflip,
        "detected": report.detected,
        "detection_read": report.detection_read,
    });
    Ok(ExperimentOutput {
        artifacts: vec![
            Artifact::Csv(Table::new(
                "attack_report.csv",
                &[
                    "attacker_v_read_V",
                    "applied_v_read_V",
                    "reads_to_first_bitflip",
                    "detected",
                    "detection_read",
                ],
                vec![vec![
                    fmt_f64(report.attacker_v_read),
                    fmt_f64(report.applied_v_read),
                    report.reads_to_first_bitflip.map(|n| n.to_string()).unwrap_or_default(),
                    report.detected.to_string(),
                    report.detection_read.map(|n| n.to_string()).unwrap_or_default(),
                ]],
            )),
            Artifact::Csv(Table::new("attack_trajectory.csv", &["read_index", "error_fraction_1"], trajectory)),
            Artifact::Csv(Table::new(
                "attack_devices.csv",
                &["device", "first_flip_read", "final_P_uC_cm2"],
                devices,
            )),
        ],
        summary,
        warnings: Vec::new(),
    })
}

fn calibration(config: &RunConfig, options: &SearchOptions) -> Result<ExperimentOutput, CliError> {
    let result = calibrate(&config.macro_config(), options)?;
    let history = result
        .history
        .iter()
        .enumerate()
        .map(|(k, v)| vec![(k + 1).to_string(), fmt_f64(*v)])
        .collect();
    let metrics = match &result.metrics {
        Some(m) => vec![vec![
            fmt_f64(m.stable_read_loss),
            fmt_f64(m.drift_200mv),
            fmt_f64(m.drift_300mv),
            fmt_f64(m.drift_400mv),
            fmt_f64(m.margin_100mv),
            fmt_f64(result.objective),
        ]],
        None => Vec::new(),
    };
    let calibrated = RunConfig {
        device: result.device.clone(),
        experiment: None,
        ..config.clone()
    };
    let mut warnings = Vec::new();
    if result.objective > 0.0 {
        warnings.push(format!("search stopped with objective {} above zero", result.objective));
    }
    Ok(ExperimentOutput {
        artifacts: vec![
            Artifact::Json {
                file: "calibrated_config.json",
                value: serde_json::to_value(&calibrated).map_err(|e| CliError::Io(e.to_string()))?,
            },
            Artifact::Csv(Table::new("calibration_history.csv", &["round", "objective_1"], history)),
            Artifact::Csv(Table::new(
                "calibration_metrics.csv",
                &[
                    "stable_read_loss_1",
                    "drift_200mV_1",
                    "drift_300mV_1",
                    "drift_400mV_1",
                    "margin_100mV_mV",
                    "objective_1",
                ],
                metrics,
            )),
        ],
        summary: json!({"objective": result.objective, "evaluations": result.evaluations, "device": result.device}),
        warnings,
    })
}
