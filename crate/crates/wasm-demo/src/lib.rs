//! Browser bindings: each export runs one small experiment on the default
//! macro and returns JSON for the page to plot.

use fecap_core::device::triangular_waveform;
use fecap_core::montecarlo::read_window_sweep;
use fecap_core::security::{disturb_trajectory, DISTURB_DURATION};
use fecap_core::{HysteronEnsemble, MacroConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_READS: usize = 2000;
const MAX_POINTS: usize = 20_000;

#[derive(Serialize)]
struct Loop {
    v: Vec<f64>,
    p: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Serialize)]
struct Window {
    v_read: Vec<f64>,
    v_bl_bit0: Vec<f64>,
    v_bl_bit1: Vec<f64>,
    c_bit0: Vec<f64>,
    c_bit1: Vec<f64>,
    disturb: Vec<bool>,
}

#[derive(Serialize)]
struct Disturb {
    read: Vec<usize>,
    c_cell: Vec<f64>,
    p: Vec<f64>,
    c_ref: f64,
    crossing_read: Option<usize>,
    first_flip: Option<usize>,
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Second period of a 1 kHz triangular sweep of the nominal device.
pub fn hysteresis_json(amplitude: f64, points_per_period: usize) -> Result<String, String> {
    if !(amplitude > 0.0 && amplitude <= 3.0) {
        return Err(format!("amplitude must lie in (0, 3] V, got {amplitude}"));
    }
    let n = points_per_period.clamp(40, MAX_POINTS);
    let config = MacroConfig::default();
    let mut device = HysteronEnsemble::nominal(&config.device).map_err(|e| e.to_string())?;
    let trace = device
        .quasi_static_sweep(&triangular_waveform(amplitude, 2, n), 1e-3 / n as f64)
        .map_err(|e| e.to_string())?;
    let last = &trace[n..];
    to_json(&Loop {
        v: last.iter().map(|s| s.v).collect(),
        p: last.iter().map(|s| s.p).collect(),
        c: last.iter().map(|s| s.c).collect(),
    })
}

/// One read of fresh bit-0 and bit-1 cells per amplitude in `[-v_max, v_max]`.
pub fn read_window_json(v_max: f64, step: f64, duration_us: f64) -> Result<String, String> {
    if !(step > 0.0 && v_max > 0.0 && duration_us > 0.0) {
        return Err("v_max, step and duration must be positive".into());
    }
    let n = (2.0 * v_max / step).round() as usize;
    if n > 400 {
        return Err(format!("{n} points requested; use a coarser step"));
    }
    let grid: Vec<f64> = (0..=n).map(|i| ((-v_max + step * i as f64) * 1e9).round() / 1e9).collect();
    let points = read_window_sweep(&MacroConfig::default(), &grid, duration_us * 1e-6).map_err(|e| e.to_string())?;
    to_json(&Window {
        v_read: points.iter().map(|p| p.v_read).collect(),
        v_bl_bit0: points.iter().map(|p| p.v_bl_bit0).collect(),
        v_bl_bit1: points.iter().map(|p| p.v_bl_bit1).collect(),
        c_bit0: points.iter().map(|p| p.c_bit0).collect(),
        c_bit1: points.iter().map(|p| p.c_bit1).collect(),
        disturb: points.iter().map(|p| p.disturb_flag).collect(),
    })
}

/// Repeated 40 ns reads of a bit-1 cell.
pub fn disturb_json(v_read: f64, n_reads: usize) -> Result<String, String> {
    let trace = disturb_trajectory(&MacroConfig::default(), v_read, DISTURB_DURATION, n_reads.clamp(1, MAX_READS))
        .map_err(|e| e.to_string())?;
    to_json(&Disturb {
        read: trace.records.iter().map(|r| r.read_index).collect(),
        c_cell: trace.records.iter().map(|r| r.c_cell).collect(),
        p: trace.records.iter().map(|r| r.p).collect(),
        c_ref: trace.reference_capacitance,
        crossing_read: trace.crossing_read(),
        first_flip: trace.first_flip(),
    })
}

#[wasm_bindgen]
pub fn hysteresis(amplitude: f64, points_per_period: u32) -> Result<String, JsValue> {
    hysteresis_json(amplitude, points_per_period as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn read_window(v_max: f64, step: f64, duration_us: f64) -> Result<String, JsValue> {
    read_window_json(v_max, step, duration_us).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn disturb(v_read: f64, n_reads: u32) -> Result<String, JsValue> {
    disturb_json(v_read, n_reads as usize).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> serde_json::Value {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn hysteresis_returns_one_period() {
        let v = parse(&hysteresis_json(1.8, 200).unwrap());
        assert_eq!(v["v"].as_array().unwrap().len(), 200);
        assert_eq!(v["p"].as_array().unwrap().len(), 200);
    }

    #[test]
    fn read_window_is_symmetric_grid() {
        let v = parse(&read_window_json(0.2, 0.1, 4.0).unwrap());
        let grid: Vec<f64> = v["v_read"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(grid, [-0.2, -0.1, 0.0, 0.1, 0.2]);
    }

    #[test]
    fn disturb_caps_the_read_count() {
        let v = parse(&disturb_json(0.1, 3).unwrap());
        assert_eq!(v["read"].as_array().unwrap().len(), 3);
        assert!(v["crossing_read"].is_null());
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(hysteresis_json(-1.0, 100).is_err());
        assert!(read_window_json(1.0, 0.001, 4.0).is_err());
    }
}
