//! Unit system used throughout the crate.
//!
//! Voltages are in volts and times in seconds. Charges are carried in
//! femtocoulombs and capacitances in femtofarads so that `fC = fF * V` holds
//! without scale factors. Polarization is kept in µC/cm² and areas in µm², the
//! units the device parameters are specified in. Every conversion between
//! these lives here.

/// Charge in fC carried by 1 µC/cm² of polarization over 1 µm² of area.
///
/// 1 µC/cm² = 1e-2 C/m², 1 µm² = 1e-12 m², so the product is 1e-14 C = 10 fC.
pub const FC_PER_UC_CM2_UM2: f64 = 10.0;

pub const MV_PER_V: f64 = 1e3;
pub const NS_PER_S: f64 = 1e9;
pub const US_PER_S: f64 = 1e6;

/// Charge (fC) corresponding to a polarization change over an area.
pub fn polarization_charge_fc(delta_p_uc_cm2: f64, area_um2: f64) -> f64 {
    delta_p_uc_cm2 * area_um2 * FC_PER_UC_CM2_UM2
}

/// Capacitance (fF) of a per-area density (fF/µm²) over an area (µm²).
pub fn capacitance_ff(density_ff_um2: f64, area_um2: f64) -> f64 {
    density_ff_um2 * area_um2
}

pub fn volts_to_mv(v: f64) -> f64 {
    v * MV_PER_V
}

pub fn mv_to_volts(mv: f64) -> f64 {
    mv / MV_PER_V
}

pub fn seconds_to_ns(t: f64) -> f64 {
    t * NS_PER_S
}

pub fn seconds_to_us(t: f64) -> f64 {
    t * US_PER_S
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_device_charge() {
        // 27 µC/cm² over 25 µm² is 6.75 pC.
        assert!((polarization_charge_fc(27.0, 25.0) - 6750.0).abs() < 1e-9);
    }

    #[test]
    fn millivolt_round_trip() {
        assert_eq!(mv_to_volts(volts_to_mv(0.1)), 0.1);
    }
}
