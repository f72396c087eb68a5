//! Behavioral simulator of a ferroelectric-capacitor memory macro read out
//! through its small-signal capacitance.

pub mod calibration;
pub mod circuit;
pub mod device;
pub mod error;
pub mod montecarlo;
pub mod oracle;
pub mod protocol;
pub mod security;
pub mod seeds;
pub mod units;

pub use circuit::{BitLineState, CircuitParams, ReferenceCell, SenseAmpInstance};
pub use device::{DeviceParams, HysteronEnsemble, PulseSpec};
pub use error::{Result, SimError};
pub use protocol::{MacroConfig, MacroState, ProtocolParams};
