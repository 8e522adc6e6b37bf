//! Physical constants (CODATA 2018) and unit conversions.

pub const G: f64 = 6.674_30e-11;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const C: f64 = 299_792_458.0;
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Molar gas constant, J/(mol·K).
pub const R_GAS: f64 = 8.314_462_618;
/// Pascal per Torr.
pub const TORR: f64 = 133.322;

pub const TWO_PI: f64 = std::f64::consts::TAU;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const SECONDS_PER_YEAR: f64 = 365.25 * SECONDS_PER_DAY;
