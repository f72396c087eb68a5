//! Hysteron-ensemble model of a ferroelectric capacitor.
//!
//! A device is a population of bistable switching units (hysterons), each with
//! its own coercive voltage and a continuous fraction `f_up` of its volume in
//! the positive-polarization state. Pulses move `f_up` with Merz-type
//! kinetics, so sub-coercive pulses switch partially and accumulate. The
//! small-signal capacitance is a background term plus a proximity bump from
//! every hysteron that can still switch in the probed polarity, peaking just
//! below each hysteron's coercive voltage.
//!
//! Voltages passed to the public operations are *applied* voltages across the
//! device terminals. A `flipped` device sees the negated voltage internally,
//! and the internal bias is subtracted after the orientation sign.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::{Result, SimError};
use crate::seeds::rng_from_seed;
use crate::units::{capacitance_ff, polarization_charge_fc};

/// Field floor used by the kinetics, V.
pub const KINETICS_FIELD_FLOOR: f64 = 1e-3;

/// Physical and empirical device parameters in configuration units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    /// Saturation polarization, µC/cm².
    pub p_s: f64,
    /// Device area, µm².
    pub area: f64,
    /// Mean coercive voltage, V.
    pub v_c_mean: f64,
    /// Spread of hysteron coercive voltages within one device, V.
    pub v_c_sigma_intra: f64,
    /// Device-to-device spread of the mean coercive voltage, V.
    pub v_c_sigma_inter: f64,
    /// Internal bias, V. Subtracted from the oriented applied voltage.
    pub v_bias: f64,
    /// Attempt time of the switching kinetics, s.
    pub tau_0: f64,
    /// Activation voltage of the kinetics, V.
    pub v_a: f64,
    /// Merz exponent.
    pub merz_alpha: f64,
    /// Background capacitance density, fF/µm².
    pub c_bg: f64,
    /// Peak switching-susceptibility capacitance density, fF/µm².
    pub c_sw_peak: f64,
    /// Width of the capacitance proximity bump, V.
    pub sigma_prox: f64,
    pub n_hysterons: usize,
}

impl Default for DeviceParams {
    fn default() -> Self {
        crate::calibration::CALIBRATED_DEVICE
    }
}

impl DeviceParams {
    /// Returns every violated parameter-domain constraint.
    pub fn violations(&self) -> Vec<SimError> {
        let mut out = Vec::new();
        let mut positive = |name: &str, value: f64| {
            if !(value.is_finite() && value > 0.0) {
                out.push(SimError::invalid(format!("device.{name}"), format!("must be > 0, got {value}")));
            }
        };
        positive("p_s", self.p_s);
        positive("area", self.area);
        positive("v_c_mean", self.v_c_mean);
        positive("tau_0", self.tau_0);
        positive("v_a", self.v_a);
        positive("merz_alpha", self.merz_alpha);
        positive("c_bg", self.c_bg);
        positive("sigma_prox", self.sigma_prox);
        let mut non_negative = |name: &str, value: f64| {
            if !(value.is_finite() && value >= 0.0) {
                out.push(SimError::invalid(format!("device.{name}"), format!("must be >= 0, got {value}")));
            }
        };
        non_negative("c_sw_peak", self.c_sw_peak);
        non_negative("v_c_sigma_intra", self.v_c_sigma_intra);
        non_negative("v_c_sigma_inter", self.v_c_sigma_inter);
        if !self.v_bias.is_finite() {
            out.push(SimError::invalid("device.v_bias", "must be finite"));
        }
        if self.n_hysterons < 2 {
            out.push(SimError::invalid(
                "device.n_hysterons",
                format!("must be >= 2, got {}", self.n_hysterons),
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(err) => Err(err),
            None => Ok(()),
        }
    }

    /// Maximum switchable charge between the two saturated states, fC.
    pub fn full_switch_charge_fc(&self) -> f64 {
        polarization_charge_fc(2.0 * self.p_s, self.area)
    }

    pub fn background_capacitance_ff(&self) -> f64 {
        capacitance_ff(self.c_bg, self.area)
    }
}

/// A voltage pulse applied across a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    /// Signed amplitude, V.
    pub amplitude: f64,
    /// Duration, s.
    pub duration: f64,
    pub n_substeps: usize,
}

impl PulseSpec {
    pub const DEFAULT_SUBSTEPS: usize = 16;

    pub fn new(amplitude: f64, duration: f64) -> Self {
        Self {
            amplitude,
            duration,
            n_substeps: Self::DEFAULT_SUBSTEPS,
        }
    }

    pub fn with_substeps(mut self, n_substeps: usize) -> Self {
        self.n_substeps = n_substeps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(SimError::invalid("pulse.duration", format!("must be > 0, got {}", self.duration)));
        }
        if self.n_substeps == 0 {
            return Err(SimError::invalid("pulse.n_substeps", "must be >= 1"));
        }
        if !self.amplitude.is_finite() {
            return Err(SimError::invalid("pulse.amplitude", "must be finite"));
        }
        Ok(())
    }
}

/// One sample of a quasi-static sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSample {
    pub t: f64,
    pub v: f64,
    /// Polarization, µC/cm².
    pub p: f64,
    /// Small-signal capacitance, fF.
    pub c: f64,
}

/// State of one ferroelectric capacitor.
#[derive(Debug, Clone, PartialEq)]
pub struct HysteronEnsemble {
    params: DeviceParams,
    v_c: Vec<f64>,
    ln_v_c: Vec<f64>,
    w: Vec<f64>,
    f_up: Vec<f64>,
    flipped: bool,
}

impl HysteronEnsemble {
    /// Draws a virgin device.
    ///
    /// The device-level shift of the mean coercive voltage is drawn first,
    /// then every hysteron's coercive voltage, rejecting non-positive draws.
    /// Hysterons are kept sorted by coercive voltage; with uniform weights the
    /// order carries no information.
    pub fn sample(params: &DeviceParams, rng_seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = rng_from_seed(rng_seed);
        let shift = gaussian(&mut rng, 0.0, params.v_c_sigma_inter);
        let mean = params.v_c_mean + shift;
        let v_c = (0..params.n_hysterons)
            .map(|_| truncated_positive(&mut rng, mean, params.v_c_sigma_intra))
            .collect();
        let mut resolved = params.clone();
        resolved.v_c_mean = mean;
        Ok(Self::from_coercive_voltages(resolved, v_c))
    }

    /// The typical device: no device-level shift, and coercive voltages placed
    /// at the mid-quantiles of the intra-device distribution.
    pub fn nominal(params: &DeviceParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_hysterons;
        let v_c = if params.v_c_sigma_intra > 0.0 {
            let dist = StatNormal::new(params.v_c_mean, params.v_c_sigma_intra)
                .map_err(|e| SimError::invalid("device.v_c_sigma_intra", e.to_string()))?;
            (0..n)
                .map(|i| dist.inverse_cdf((i as f64 + 0.5) / n as f64).max(KINETICS_FIELD_FLOOR))
                .collect()
        } else {
            vec![params.v_c_mean; n]
        };
        Ok(Self::from_coercive_voltages(params.clone(), v_c))
    }

    fn from_coercive_voltages(params: DeviceParams, mut v_c: Vec<f64>) -> Self {
        v_c.sort_by(f64::total_cmp);
        let n = v_c.len();
        let ln_v_c = v_c.iter().map(|v: &f64| v.ln()).collect();
        Self {
            params,
            v_c,
            ln_v_c,
            w: vec![1.0 / n as f64; n],
            f_up: vec![0.5; n],
            flipped: false,
        }
    }

    pub fn into_flipped(mut self) -> Self {
        self.flipped = !self.flipped;
        self
    }

    pub fn params(&self) -> &DeviceParams {
        &self.params
    }

    pub fn coercive_voltages(&self) -> &[f64] {
        &self.v_c
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn up_fractions(&self) -> &[f64] {
        &self.f_up
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    pub fn len(&self) -> usize {
        self.v_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_c.is_empty()
    }

    /// Sets every hysteron to the same up fraction (clamped to [0, 1]).
    pub fn set_uniform_state(&mut self, f_up: f64) {
        let f = f_up.clamp(0.0, 1.0);
        self.f_up.iter_mut().for_each(|x| *x = f);
    }

    /// Sets the per-hysteron up fractions. Values are clamped to [0, 1].
    pub fn set_up_fractions(&mut self, f_up: &[f64]) -> Result<()> {
        if f_up.len() != self.f_up.len() {
            return Err(SimError::invalid(
                "f_up",
                format!("expected {} values, got {}", self.f_up.len(), f_up.len()),
            ));
        }
        for (dst, src) in self.f_up.iter_mut().zip(f_up) {
            *dst = src.clamp(0.0, 1.0);
        }
        Ok(())
    }

    fn orientation(&self) -> f64 {
        if self.flipped {
            -1.0
        } else {
            1.0
        }
    }

    /// Voltage seen by the hysterons for an applied terminal voltage.
    pub fn effective_voltage(&self, v_applied: f64) -> f64 {
        self.orientation() * v_applied - self.params.v_bias
    }

    /// Net polarization in the device's own frame, µC/cm².
    pub fn polarization(&self) -> f64 {
        let net: f64 = self.w.iter().zip(&self.f_up).map(|(w, f)| w * (2.0 * f - 1.0)).sum();
        self.params.p_s * net
    }

    /// Applies a rectangular pulse and returns the switched charge
    /// `area * (P_after - P_before)` in fC, in the device's own frame.
    pub fn apply_pulse(&mut self, pulse: &PulseSpec) -> Result<f64> {
        pulse.validate()?;
        let before = self.polarization();
        let dt = pulse.duration / pulse.n_substeps as f64;
        let v_eff = self.effective_voltage(pulse.amplitude);
        for _ in 0..pulse.n_substeps {
            self.switch_step(v_eff, dt);
        }
        Ok(polarization_charge_fc(self.polarization() - before, self.params.area))
    }

    /// Expected-fraction update of every hysteron for `dt` seconds at `v_eff`.
    ///
    /// Hysterons are stored in ascending coercive voltage, so once one has a
    /// negligible switching probability every later one does too.
    fn switch_step(&mut self, v_eff: f64, dt: f64) -> bool {
        if v_eff == 0.0 || dt <= 0.0 {
            return false;
        }
        let p = &self.params;
        let field = v_eff.abs().max(KINETICS_FIELD_FLOOR);
        // ln of (v_a / |v|), shared by every hysteron.
        let ln_ratio = p.v_a.ln() - field.ln();
        let ln_dt_over_tau0 = dt.ln() - p.tau_0.ln();
        let up = v_eff > 0.0;
        let mut changed = false;
        for (f, ln_vc) in self.f_up.iter_mut().zip(&self.ln_v_c) {
            // ln(dt/tau) = ln(dt/tau_0) - (v_a * v_c / |v|)^alpha
            let ln_rate = ln_dt_over_tau0 - (p.merz_alpha * (ln_ratio + ln_vc)).exp();
            if ln_rate < NEGLIGIBLE_LN_RATE {
                break;
            }
            changed = true;
            let switched = -(-ln_rate.exp()).exp_m1();
            if up {
                *f = (*f + (1.0 - *f) * switched).min(1.0);
            } else {
                *f -= *f * switched;
            }
        }
        changed
    }

    /// True when a `dt` step at `v_eff` cannot switch any hysteron.
    fn quiescent(&self, v_eff: f64, dt: f64) -> bool {
        let p = &self.params;
        match self.ln_v_c.first() {
            Some(ln_vc) if v_eff != 0.0 && dt > 0.0 => {
                let ln_ratio = p.v_a.ln() - v_eff.abs().max(KINETICS_FIELD_FLOOR).ln();
                dt.ln() - p.tau_0.ln() - (p.merz_alpha * (ln_ratio + ln_vc)).exp() < NEGLIGIBLE_LN_RATE
            }
            _ => true,
        }
    }

    /// [`Self::ramp_segment`] without touching `self`. The advanced state is
    /// returned only when the segment switches.
    pub(crate) fn try_segment(&self, v0: f64, v1: f64, dt: f64, c_start: f64) -> (f64, f64, Option<Self>) {
        if self.quiescent(self.effective_voltage(0.5 * (v0 + v1)), dt) {
            let c1 = self.small_signal_capacitance(v1);
            (self.reversible_segment(v0, v1, c_start, c1), c1, None)
        } else {
            let mut next = self.clone();
            let (q, c1) = next.ramp_segment(v0, v1, dt, c_start);
            (q, c1, Some(next))
        }
    }

    /// Small-signal capacitance at an applied voltage, fF.
    pub fn small_signal_capacitance(&self, v_applied: f64) -> f64 {
        let v_eff = self.effective_voltage(v_applied);
        self.capacitance_at(v_eff.abs(), v_eff.partial_cmp(&0.0).unwrap_or(Ordering::Equal))
    }

    /// Capacitance at effective-voltage magnitude `mag` with the switchable
    /// population of `polarity`.
    fn capacitance_at(&self, mag: f64, polarity: Ordering) -> f64 {
        let p = &self.params;
        let base = capacitance_ff(p.c_bg, p.area);
        if p.c_sw_peak == 0.0 {
            return base;
        }
        let inv_two_var = 1.0 / (2.0 * p.sigma_prox * p.sigma_prox);
        let bump: f64 = self
            .w
            .iter()
            .zip(&self.f_up)
            .zip(&self.v_c)
            .map(|((w, f), vc)| {
                let switchable = match polarity {
                    Ordering::Greater => 1.0 - f,
                    Ordering::Less => *f,
                    Ordering::Equal => f.max(1.0 - f),
                };
                let d = mag - vc;
                w * switchable * (-d * d * inv_two_var).exp()
            })
            .sum();
        base + capacitance_ff(p.c_sw_peak, p.area) * bump
    }

    /// Reversible charge for a ramp segment on which the state is frozen.
    ///
    /// A segment through zero effective voltage is split there, because the
    /// switchable population changes sides at that point.
    fn reversible_segment(&self, v0: f64, v1: f64, c0: f64, c1: f64) -> f64 {
        let e0 = self.effective_voltage(v0);
        let e1 = self.effective_voltage(v1);
        if e0 * e1 < 0.0 {
            let v_z = v0 + (v1 - v0) * e0 / (e0 - e1);
            let c_left = self.capacitance_at(0.0, e0.partial_cmp(&0.0).unwrap_or(Ordering::Equal));
            let c_right = self.capacitance_at(0.0, e1.partial_cmp(&0.0).unwrap_or(Ordering::Equal));
            0.5 * (c0 + c_left) * (v_z - v0) + 0.5 * (c_right + c1) * (v1 - v_z)
        } else {
            0.5 * (c0 + c1) * (v1 - v0)
        }
    }

    /// Ramps the applied voltage from `v_from` to `v_to` over `duration` and
    /// returns the charge delivered to the positive terminal, fC.
    ///
    /// The reversible part integrates the small-signal capacitance along the
    /// ramp (trapezoidal rule); the switching part comes from the kinetics at
    /// each sub-step's midpoint voltage.
    pub fn charge_response(&mut self, v_from: f64, v_to: f64, duration: f64, n_substeps: usize) -> Result<f64> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SimError::invalid("duration", format!("must be > 0, got {duration}")));
        }
        let n = n_substeps.max(MIN_RAMP_SUBSTEPS);
        let dt = duration / n as f64;
        let dv = (v_to - v_from) / n as f64;
        let mut total = 0.0;
        let mut c_start = self.small_signal_capacitance(v_from);
        for k in 0..n {
            let v0 = v_from + dv * k as f64;
            let v1 = if k + 1 == n { v_to } else { v0 + dv };
            let (q, c_end) = self.ramp_segment(v0, v1, dt, c_start);
            total += q;
            c_start = c_end;
        }
        Ok(total)
    }

    /// One ramp segment from `v0` to `v1` lasting `dt`: switching at the
    /// midpoint voltage, then the trapezoidal reversible charge on the new
    /// state. `c_start` is the capacitance at `v0` before the segment.
    /// Returns the terminal charge in fC and the capacitance at `v1`.
    pub(crate) fn ramp_segment(&mut self, v0: f64, v1: f64, dt: f64, c_start: f64) -> (f64, f64) {
        let p_start = self.polarization();
        let changed = self.switch_step(self.effective_voltage(0.5 * (v0 + v1)), dt);
        let (c0, switched) = if changed {
            (
                self.small_signal_capacitance(v0),
                polarization_charge_fc(self.polarization() - p_start, self.params.area),
            )
        } else {
            (c_start, 0.0)
        };
        let c1 = self.small_signal_capacitance(v1);
        (self.reversible_segment(v0, v1, c0, c1) + self.orientation() * switched, c1)
    }

    /// Applies each waveform sample as a pulse of width `dt` and records the
    /// state after it.
    pub fn quasi_static_sweep(&mut self, waveform: &[f64], dt: f64) -> Result<Vec<SweepSample>> {
        if waveform.is_empty() {
            return Err(SimError::invalid("waveform", "must not be empty"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::invalid("dt", format!("must be > 0, got {dt}")));
        }
        let mut trace = Vec::with_capacity(waveform.len());
        for (k, &v) in waveform.iter().enumerate() {
            self.apply_pulse(&PulseSpec::new(v, dt))?;
            trace.push(SweepSample {
                t: (k + 1) as f64 * dt,
                v,
                p: self.polarization(),
                c: self.small_signal_capacitance(v),
            });
        }
        Ok(trace)
    }
}

/// Below this ln(dt/tau) a sub-step switches less than 1e-17 of a hysteron,
/// which does not change an f64 state in [0, 1].
const NEGLIGIBLE_LN_RATE: f64 = -40.0;

/// Sub-step floor for ramped charge integration.
pub const MIN_RAMP_SUBSTEPS: usize = 32;

/// Default sub-step count for ramped charge integration.
pub const DEFAULT_RAMP_SUBSTEPS: usize = 128;

fn gaussian<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mean;
    }
    Normal::new(mean, sigma).map(|d| d.sample(rng)).unwrap_or(mean)
}

fn truncated_positive<R: Rng>(rng: &mut R, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mean.max(KINETICS_FIELD_FLOOR);
    }
    for _ in 0..1000 {
        let v = gaussian(rng, mean, sigma);
        if v > 0.0 {
            return v;
        }
    }
    KINETICS_FIELD_FLOOR
}

/// Triangular waveform starting at 0 V, rising to `+amplitude` first.
pub fn triangular_waveform(amplitude: f64, periods: usize, points_per_period: usize) -> Vec<f64> {
    let n = periods * points_per_period;
    (1..=n)
        .map(|k| {
            let phase = (k as f64 / points_per_period as f64).fract();
            let x = 4.0 * phase;
            let shape = if x < 1.0 {
                x
            } else if x < 3.0 {
                2.0 - x
            } else {
                x - 4.0
            };
            amplitude * shape
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DeviceParams {
        DeviceParams::default()
    }

    #[test]
    fn degenerate_distribution_is_exact() {
        let mut p = params();
        p.v_c_sigma_inter = 0.0;
        p.v_c_sigma_intra = 0.0;
        let ens = HysteronEnsemble::sample(&p, 3).unwrap();
        assert!(ens.coercive_voltages().iter().all(|&v| v == p.v_c_mean));
    }

    #[test]
    fn virgin_device_is_unpolarized() {
        let ens = HysteronEnsemble::sample(&params(), 11).unwrap();
        assert_eq!(ens.polarization(), 0.0);
        let sum: f64 = ens.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = HysteronEnsemble::sample(&params(), 99).unwrap();
        let b = HysteronEnsemble::sample(&params(), 99).unwrap();
        assert_eq!(a, b);
        let c = HysteronEnsemble::sample(&params(), 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = params();
        p.p_s = -5.0;
        p.n_hysterons = 1;
        let errs = p.violations();
        assert_eq!(errs.len(), 2);
        assert!(HysteronEnsemble::sample(&p, 0).is_err());
        assert!(matches!(&errs[0], SimError::InvalidParameter { field, .. } if field == "device.p_s"));
    }

    #[test]
    fn effective_voltage_cases() {
        let mut p = params();
        p.v_bias = 0.0;
        let ens = HysteronEnsemble::sample(&p, 0).unwrap();
        assert_eq!(ens.effective_voltage(0.1), 0.1);
        let flipped = ens.clone().into_flipped();
        assert_eq!(flipped.effective_voltage(0.1), -0.1);
        p.v_bias = 0.05;
        let biased = HysteronEnsemble::sample(&p, 0).unwrap();
        assert!((biased.effective_voltage(0.1) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn polarization_extremes() {
        let mut ens = HysteronEnsemble::sample(&params(), 1).unwrap();
        ens.set_uniform_state(1.0);
        assert!((ens.polarization() - 27.0).abs() < 1e-12);
        ens.set_uniform_state(0.0);
        assert!((ens.polarization() + 27.0).abs() < 1e-12);
        ens.set_uniform_state(0.5);
        assert!(ens.polarization().abs() < 1e-12);
    }

    #[test]
    fn zero_amplitude_pulse_is_noop() {
        let mut ens = HysteronEnsemble::sample(&params(), 5).unwrap();
        ens.set_uniform_state(0.3);
        let before = ens.clone();
        let dq = ens.apply_pulse(&PulseSpec::new(0.0 + ens.params().v_bias, 1e-3)).unwrap();
        assert_eq!(dq, 0.0);
        assert_eq!(ens, before);
    }

    #[test]
    fn saturating_negative_pulse() {
        let mut ens = HysteronEnsemble::sample(&params(), 5).unwrap();
        let dq = ens.apply_pulse(&PulseSpec::new(-1.8, 1e-6)).unwrap();
        let p = ens.polarization();
        assert!((p + 27.0).abs() < 0.27, "P = {p}");
        // Switched charge is area * dP.
        assert!((dq - polarization_charge_fc(p, 25.0)).abs() < 1e-9);
    }

    #[test]
    fn pulse_composition() {
        let mut one = HysteronEnsemble::nominal(&params()).unwrap();
        one.set_uniform_state(0.0);
        let mut two = one.clone();
        one.apply_pulse(&PulseSpec::new(0.6, 2e-6).with_substeps(1)).unwrap();
        two.apply_pulse(&PulseSpec::new(0.6, 1e-6).with_substeps(1)).unwrap();
        two.apply_pulse(&PulseSpec::new(0.6, 1e-6).with_substeps(1)).unwrap();
        for (a, b) in one.up_fractions().iter().zip(two.up_fractions()) {
            let scale = a.abs().max(1e-300);
            assert!((a - b).abs() / scale < 1e-9, "{a} vs {b}");
        }
        assert!(one.polarization() > -27.0);
    }

    #[test]
    fn background_only_capacitance() {
        let mut p = params();
        p.c_sw_peak = 0.0;
        let mut ens = HysteronEnsemble::sample(&p, 2).unwrap();
        for f in [0.0, 0.3, 1.0] {
            ens.set_uniform_state(f);
            for v in [-1.0, -0.1, 0.0, 0.2, 1.5] {
                assert_eq!(ens.small_signal_capacitance(v), p.c_bg * p.area);
            }
        }
    }

    #[test]
    fn negatively_saturated_device_has_higher_positive_capacitance() {
        let mut bit0 = HysteronEnsemble::nominal(&params()).unwrap();
        let mut bit1 = bit0.clone();
        bit0.set_uniform_state(0.0);
        bit1.set_uniform_state(0.5);
        for v in [0.05, 0.1, 0.2] {
            assert!(bit0.small_signal_capacitance(v) > bit1.small_signal_capacitance(v));
        }
    }

    #[test]
    fn constant_zero_sweep_is_flat() {
        let mut p = params();
        p.v_bias = 0.0;
        let mut ens = HysteronEnsemble::nominal(&p).unwrap();
        ens.set_uniform_state(0.2);
        let trace = ens.quasi_static_sweep(&[0.0; 50], 1e-6).unwrap();
        assert!(trace.windows(2).all(|w| w[0].p == w[1].p && w[0].c == w[1].c));
    }

    #[test]
    fn sweep_rejects_bad_input() {
        let mut ens = HysteronEnsemble::nominal(&params()).unwrap();
        assert!(ens.quasi_static_sweep(&[], 1e-6).is_err());
        assert!(ens.quasi_static_sweep(&[0.1], 0.0).is_err());
    }

    #[test]
    fn flat_ramp_at_zero_is_noop() {
        let mut p = params();
        p.v_bias = 0.0;
        let mut ens = HysteronEnsemble::nominal(&p).unwrap();
        ens.set_uniform_state(0.0);
        let before = ens.clone();
        let dq = ens.charge_response(0.0, 0.0, 1e-6, 64).unwrap();
        assert_eq!(dq, 0.0);
        assert_eq!(ens, before);
    }

    #[test]
    fn triangle_shape() {
        let w = triangular_waveform(1.8, 1, 8);
        assert_eq!(w.len(), 8);
        let expect = [0.9, 1.8, 0.9, 0.0, -0.9, -1.8, -0.9, 0.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
