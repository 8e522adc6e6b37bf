//! Physical parameter types and config ingestion.
//!
//! Configs are `key = value` files with `[section]` headers (a TOML subset).
//! Later files override earlier ones key by key. Keys carrying a unit suffix
//! (`_hz`, `_mhz`, `_mm`, `_um`, `_nm`, `_torr`, `_u`) are converted to
//! SI on load; everything downstream sees rad/s, m, Pa, rad and kg only.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use toml::{Table, Value};

use crate::consts::{AMU, C, G, HBAR, TORR, TWO_PI};
use crate::{ConfigError, Result};
#[cfg(test)]
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Moment of inertia about the torsion axis, kg·m².
    pub inertia_rz: f64,
    /// Bare angular eigenfrequency, rad/s.
    pub omega_m: f64,
    pub q_factor: f64,
    /// Lever arm L, m.
    pub arm_length: f64,
    /// Test mass M, kg.
    pub mass: f64,
    pub temperature: f64,
}

impl PendulumParams {
    pub fn new(inertia_rz: f64, omega_m: f64, q_factor: f64, arm_length: f64, mass: f64, temperature: f64) -> Result<Self> {
        let p = Self { inertia_rz, omega_m, q_factor, arm_length, mass, temperature };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("inertia_rz", self.inertia_rz),
            ("omega_m", self.omega_m),
            ("q_factor", self.q_factor),
            ("arm_length", self.arm_length),
            ("mass", self.mass),
            ("temperature", self.temperature),
        ] {
            positive(name, v)?;
        }
        Ok(())
    }

    /// Viscous damping rate γ_m = ω_m / Q.
    pub fn gamma_m(&self) -> f64 {
        self.omega_m / self.q_factor
    }

    pub fn f_m_hz(&self) -> f64 {
        self.omega_m / TWO_PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalParams {
    pub wavelength: f64,
    /// Input-mirror power transmissivity 𝒯.
    pub input_transmissivity: f64,
    pub round_trip_loss: f64,
    pub finesse: f64,
    /// Intracavity power, W.
    pub p_cav: f64,
    /// Power build-up factor B.
    pub buildup: f64,
    pub g_fss: f64,
    pub g_iss: f64,
    /// Round-trip detuning, rad.
    pub detuning: f64,
    /// Round-trip time, s.
    pub t_rt: f64,
}

impl OpticalParams {
    /// Build-up of a high-finesse two-mirror cavity, 2ℱ/π.
    pub fn default_buildup(finesse: f64) -> f64 {
        2.0 * finesse / std::f64::consts::PI
    }

    /// Laser angular frequency ω0 = 2πc/λ.
    pub fn omega_0(&self) -> f64 {
        TWO_PI * C / self.wavelength
    }

    /// Optomechanical coupling α = sqrt(8 ω0 P_cav / (ħ 𝒯 c²)).
    pub fn coupling_alpha(&self) -> f64 {
        (8.0 * self.omega_0() * self.p_cav / (HBAR * self.input_transmissivity * C * C)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaSnSource {
    Given,
    Computed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnModel {
    /// Atomic mass m, kg.
    pub atomic_mass: f64,
    /// Zero-point spread of an atom about its lattice site, m.
    pub delta_x_int: f64,
    /// Crystal lattice constant a, m.
    pub lattice_const: f64,
    /// SN frequency in use, rad/s.
    pub omega_sn: f64,
    pub omega_sn_source: OmegaSnSource,
    /// |given - computed| / computed when ω_SN was stated explicitly.
    pub omega_sn_discrepancy: Option<f64>,
    pub fit_a: f64,
    pub fit_b1: f64,
    /// Harmonic-mean radius r̃, m.
    pub r_tilde: f64,
    pub sigma_x: Option<f64>,
    pub sigma_y: Option<f64>,
    pub sigma_z: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    /// Angular spread σ_Θ used by the non-quadratic potential, rad.
    pub sigma_theta: Option<f64>,
}

/// ω_SN = G m / (6 √π Δx³).
pub fn sn_frequency_from(atomic_mass: f64, delta_x_int: f64) -> f64 {
    G * atomic_mass / (6.0 * std::f64::consts::PI.sqrt() * delta_x_int.powi(3))
}

impl SnModel {
    /// Model with ω_SN computed from the material inputs and default fit constants.
    pub fn from_material(atomic_mass: f64, delta_x_int: f64, lattice_const: f64) -> Result<Self> {
        positive("atomic_mass", atomic_mass)?;
        positive("delta_x_int", delta_x_int)?;
        Ok(Self {
            atomic_mass,
            delta_x_int,
            lattice_const,
            omega_sn: sn_frequency_from(atomic_mass, delta_x_int),
            omega_sn_source: OmegaSnSource::Computed,
            omega_sn_discrepancy: None,
            fit_a: DEFAULT_FIT_A,
            fit_b1: DEFAULT_FIT_B1,
            r_tilde: DEFAULT_R_TILDE,
            sigma_x: None,
            sigma_y: None,
            sigma_z: None,
            c1: DEFAULT_C,
            c2: DEFAULT_C,
            sigma_theta: None,
        })
    }

    /// Override ω_SN; records the discrepancy against the material value.
    pub fn with_omega_sn(mut self, omega_sn: f64) -> Self {
        let computed = sn_frequency_from(self.atomic_mass, self.delta_x_int);
        self.omega_sn = omega_sn;
        self.omega_sn_source = OmegaSnSource::Given;
        self.omega_sn_discrepancy = Some((omega_sn - computed).abs() / computed);
        self
    }
}

pub const DEFAULT_FIT_A: f64 = 3.298;
pub const DEFAULT_FIT_B1: f64 = 1.62;
pub const DEFAULT_R_TILDE: f64 = 0.176;
pub const DEFAULT_C: f64 = 547.0;
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnMode {
    Off,
    QuadraticPreselection,
    Nonquadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    Zero,
    /// Start at rest from `theta0`.
    Theta0,
    /// Draw from the off-mode closed-loop steady state.
    SteadyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuisanceMode {
    /// Average over unit-variance transverse offsets.
    Marginalize,
    /// Transverse offsets fixed at zero.
    Slice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Angle,
    Readout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub n_traj: usize,
    pub t_bw: f64,
    pub sn_mode: SnMode,
    pub record_decimation: usize,
    pub initial_state: InitialState,
    pub theta0: f64,
    pub allow_unstable: bool,
    pub band_center_hz: Option<f64>,
    pub band_width_hz: Option<f64>,
    /// Amplitude spectral density of the angle-readout noise floor, rad/√Hz.
    pub s_noise_asd: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub n_freq: usize,
    pub observable: Observable,
    pub include_dg: bool,
    /// One-sided PSD of the expectation-value forcing ⟨B⟩, N²m²/Hz.
    pub dg_forcing_psd: f64,
    pub quad_rel_tol: f64,
    pub nuisance_mode: NuisanceMode,
    pub n_nuisance: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            dt: 0.1,
            duration: 1000.0,
            n_traj: 1,
            t_bw: 32768.0,
            sn_mode: SnMode::Off,
            record_decimation: 1,
            initial_state: InitialState::SteadyState,
            theta0: 0.0,
            allow_unstable: false,
            band_center_hz: None,
            band_width_hz: None,
            s_noise_asd: 3e-7,
            freq_min_hz: 1e-4,
            freq_max_hz: 1e-1,
            n_freq: 2000,
            observable: Observable::Angle,
            include_dg: false,
            dg_forcing_psd: 0.0,
            quad_rel_tol: 1e-4,
            nuisance_mode: NuisanceMode::Marginalize,
            n_nuisance: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServoKind {
    None,
    /// A0 (s + 2π·1e-3)² / (s (s + 2π)).
    Catching,
    /// A0 (ε s² + 4π·1e-3 s + 4π²·1e-6) / (s (s + 2π)).
    QuadraticUpgrade,
    /// A0 (ε s² + 4π·1e-2 s + 4π²·1e-4) / (s (s + 20π)).
    NonquadraticUpgrade,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoSettings {
    pub kind: ServoKind,
    /// Gain; calibrated at `omega_ugf` when absent.
    pub a0: Option<f64>,
    pub omega_ugf: Option<f64>,
    pub epsilon: f64,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    /// Multiplies the whole servo; 0 < scale. Used for open-loop limits.
    pub gain_scale: f64,
}

impl Default for ServoSettings {
    fn default() -> Self {
        Self { kind: ServoKind::None, a0: None, omega_ugf: None, epsilon: 0.1, num: vec![], den: vec![], gain_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThermalModel {
    Off,
    Viscous,
    Structural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QrpnSource {
    Off,
    /// 2·L²·S_FF from the back-action force PSD.
    SFf,
    /// 2·ħ²α²L²·S_a1 from the coupling constant.
    Alpha,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSettings {
    pub thermal: ThermalModel,
    /// Share of the thermal torque treated as zero-point (quantum branch).
    pub thermal_zp_fraction: f64,
    pub qrpn: QrpnSource,
    /// Amplitude-quadrature PSD, dimensionless (1 = vacuum).
    pub s_a1: f64,
    /// White sensor noise, rad/√Hz.
    pub sensor_asd: f64,
    pub sensor_psd_file: Option<String>,
    pub sensor_zp_fraction: f64,
    pub actuator_psd_file: Option<String>,
    pub classical_radiation_psd_file: Option<String>,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            thermal: ThermalModel::Viscous,
            thermal_zp_fraction: 0.0,
            qrpn: QrpnSource::SFf,
            s_a1: 1.0,
            sensor_asd: 0.0,
            sensor_psd_file: None,
            sensor_zp_fraction: 0.0,
            actuator_psd_file: None,
            classical_radiation_psd_file: None,
        }
    }
}

/// Inputs for the Q-factor budget. Defaults are the apparatus values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetInputs {
    pub gas_mass: f64,
    pub gas_area: f64,
    pub gas_molar_mass: f64,
    pub gas_pressure: f64,
    pub gas_temperature: f64,
    pub gas_frequency_hz: f64,
    pub fiber_youngs_modulus: f64,
    pub fiber_heat_capacity: f64,
    pub fiber_conductivity: f64,
    pub fiber_density: f64,
    pub fiber_alpha_thermal: f64,
    pub fiber_static_stress: f64,
    pub fiber_beta_te: f64,
    pub fiber_diameter: f64,
    pub fiber_surface_loss_depth: f64,
    pub fiber_temperature: f64,
    pub eddy_damping: f64,
    pub eddy_lever_arm: f64,
    pub dac_rms_start: f64,
    pub dac_rms_end: f64,
    pub dac_frequency_hz: f64,
}

impl Default for BudgetInputs {
    fn default() -> Self {
        Self {
            gas_mass: 1.0,
            gas_area: 0.075,
            gas_molar_mass: 2e-3,
            gas_pressure: 2e-6 * TORR,
            gas_temperature: 300.0,
            gas_frequency_hz: 6e-4,
            fiber_youngs_modulus: 7.2e10,
            fiber_heat_capacity: 772.0,
            fiber_conductivity: 1.38,
            fiber_density: 2202.0,
            fiber_alpha_thermal: 3.9e-7,
            fiber_static_stress: 0.0,
            fiber_beta_te: 1.52e-4,
            fiber_diameter: 100e-6,
            fiber_surface_loss_depth: 6.15e-12,
            fiber_temperature: 300.0,
            eddy_damping: 5.3e-9,
            eddy_lever_arm: 0.5,
            dac_rms_start: 4e-6,
            dac_rms_end: 7e-6,
            dac_frequency_hz: 6e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub pendulum: PendulumParams,
    pub optics: OpticalParams,
    pub sn: SnModel,
    pub run: RunSettings,
    pub servo: ServoSettings,
    pub noise: NoiseSettings,
    pub budget: BudgetInputs,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NonPositive { key: name.to_string(), value: v }.into())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Unit {
    Plain,
    Length,
    AngFreq,
    Pressure,
    Mass,
}

impl Unit {
    fn suffixes(self) -> &'static [(&'static str, f64)] {
        const MHZ: f64 = TWO_PI * 1e-3;
        match self {
            Unit::Plain => &[],
            Unit::Length => &[("_mm", 1e-3), ("_um", 1e-6), ("_nm", 1e-9)],
            Unit::AngFreq => &[("_hz", TWO_PI), ("_mhz", MHZ)],
            Unit::Pressure => &[("_torr", TORR)],
            Unit::Mass => &[("_u", AMU)],
        }
    }
}

// Every key the loader knows, with its unit class; used for alias-aware
// merging and for rejecting unknown keys.
const SCHEMA: &[(&str, &[(&str, Unit)])] = &[
    (
        "pendulum",
        &[
            ("inertia_rz", Unit::Plain),
            ("omega_m", Unit::AngFreq),
            ("q", Unit::Plain),
            ("arm_length", Unit::Length),
            ("mass", Unit::Plain),
            ("temperature", Unit::Plain),
        ],
    ),
    (
        "optics",
        &[
            ("wavelength", Unit::Length),
            ("input_transmissivity", Unit::Plain),
            ("round_trip_loss", Unit::Plain),
            ("finesse", Unit::Plain),
            ("p_cav", Unit::Plain),
            ("buildup", Unit::Plain),
            ("g_fss", Unit::Plain),
            ("g_iss", Unit::Plain),
            ("detuning", Unit::Plain),
            ("detuning_unit", Unit::Plain),
            ("t_rt", Unit::Plain),
        ],
    ),
    (
        "sn",
        &[
            ("atomic_mass", Unit::Mass),
            ("delta_x_int", Unit::Length),
            ("lattice_const", Unit::Length),
            ("omega_sn", Unit::AngFreq),
            ("fit_a", Unit::Plain),
            ("fit_b1", Unit::Plain),
            ("r_tilde", Unit::Length),
            ("sigma_x", Unit::Length),
            ("sigma_y", Unit::Length),
            ("sigma_z", Unit::Length),
            ("c1", Unit::Plain),
            ("c2", Unit::Plain),
            ("sigma_theta", Unit::Plain),
        ],
    ),
    (
        "run",
        &[
            ("seed", Unit::Plain),
            ("dt", Unit::Plain),
            ("duration", Unit::Plain),
            ("n_traj", Unit::Plain),
            ("t_bw", Unit::Plain),
            ("sn_mode", Unit::Plain),
            ("record_decimation", Unit::Plain),
            ("initial_state", Unit::Plain),
            ("theta0", Unit::Plain),
            ("allow_unstable", Unit::Plain),
            ("band_center_hz", Unit::Plain),
            ("band_width_hz", Unit::Plain),
            ("s_noise_asd", Unit::Plain),
            ("freq_min_hz", Unit::Plain),
            ("freq_max_hz", Unit::Plain),
            ("n_freq", Unit::Plain),
            ("observable", Unit::Plain),
            ("include_dg", Unit::Plain),
            ("dg_forcing_psd", Unit::Plain),
            ("quad_rel_tol", Unit::Plain),
            ("nuisance_mode", Unit::Plain),
            ("n_nuisance", Unit::Plain),
        ],
    ),
    (
        "servo",
        &[
            ("kind", Unit::Plain),
            ("a0", Unit::Plain),
            ("omega_ugf", Unit::AngFreq),
            ("epsilon", Unit::Plain),
            ("num", Unit::Plain),
            ("den", Unit::Plain),
            ("gain_scale", Unit::Plain),
        ],
    ),
    (
        "noise",
        &[
            ("thermal", Unit::Plain),
            ("thermal_zp_fraction", Unit::Plain),
            ("qrpn", Unit::Plain),
            ("s_a1", Unit::Plain),
            ("sensor_asd", Unit::Plain),
            ("sensor_psd_file", Unit::Plain),
            ("sensor_zp_fraction", Unit::Plain),
            ("actuator_psd_file", Unit::Plain),
            ("classical_radiation_psd_file", Unit::Plain),
        ],
    ),
    (
        "budget",
        &[
            ("gas_mass", Unit::Plain),
            ("gas_area", Unit::Plain),
            ("gas_molar_mass", Unit::Plain),
            ("gas_pressure", Unit::Pressure),
            ("gas_temperature", Unit::Plain),
            ("gas_frequency_hz", Unit::Plain),
            ("fiber_youngs_modulus", Unit::Plain),
            ("fiber_heat_capacity", Unit::Plain),
            ("fiber_conductivity", Unit::Plain),
            ("fiber_density", Unit::Plain),
            ("fiber_alpha_thermal", Unit::Plain),
            ("fiber_static_stress", Unit::Plain),
            ("fiber_beta_te", Unit::Plain),
            ("fiber_diameter", Unit::Length),
            ("fiber_surface_loss_depth", Unit::Length),
            ("fiber_temperature", Unit::Plain),
            ("eddy_damping", Unit::Plain),
            ("eddy_lever_arm", Unit::Length),
            ("dac_rms_start", Unit::Length),
            ("dac_rms_end", Unit::Length),
            ("dac_frequency_hz", Unit::Plain),
        ],
    ),
];

fn section_schema(section: &str) -> Option<&'static [(&'static str, Unit)]> {
    SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k)
}

/// Canonical key and SI factor for a (possibly suffixed) key.
fn canonical(section: &str, key: &str) -> Option<(&'static str, f64)> {
    let keys = section_schema(section)?;
    for &(name, unit) in keys {
        if key == name {
            return Some((name, 1.0));
        }
        for &(suffix, factor) in unit.suffixes() {
            if key.strip_suffix(suffix) == Some(name) {
                return Some((name, factor));
            }
        }
    }
    None
}

fn parse_table(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>().map_err(|e| {
        ConfigError::Parse { path: origin.to_string(), reason: e.to_string().trim().replace('\n', " ") }.into()
    })
}

/// Merge `top` into `base`; a key replaces every unit-variant of itself.
fn merge(base: &mut Table, top: Table) {
    for (section, value) in top {
        match (base.get_mut(&section), value) {
            (Some(Value::Table(dst)), Value::Table(src)) => {
                for (k, v) in src {
                    if let Some((canon, _)) = canonical(&section, &k) {
                        dst.retain(|old, _| canonical(&section, old).map(|c| c.0) != Some(canon));
                    }
                    dst.insert(k, v);
                }
            }
            (_, v) => {
                base.insert(section, v);
            }
        }
    }
}

struct Reader<'a> {
    section: &'static str,
    table: Table,
    missing: &'a mut Vec<String>,
    errors: &'a mut Vec<ConfigError>,
}

impl<'a> Reader<'a> {
    fn new(root: &mut Table, section: &'static str, missing: &'a mut Vec<String>, errors: &'a mut Vec<ConfigError>) -> Self {
        let table = match root.remove(section) {
            Some(Value::Table(t)) => t,
            Some(_) => {
                errors.push(ConfigError::Invalid { key: section.into(), reason: "expected a [section]".into() });
                Table::new()
            }
            None => Table::new(),
        };
        Self { section, table, missing, errors }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{}", self.section, key)
    }

    /// Take the raw value for `key` or any unit variant, with its SI factor.
    fn take(&mut self, key: &str) -> Option<(String, Value, f64)> {
        let hits: Vec<String> = self
            .table
            .keys()
            .filter(|k| canonical(self.section, k).map(|c| c.0) == Some(key))
            .cloned()
            .collect();
        if hits.len() > 1 {
            self.errors.push(ConfigError::Invalid {
                key: self.path(key),
                reason: format!("given more than once ({})", hits.join(", ")),
            });
            for k in &hits[1..] {
                self.table.remove(k);
            }
        }
        let k = hits.into_iter().next()?;
        let v = self.table.remove(&k)?;
        let factor = canonical(self.section, &k).map(|c| c.1).unwrap_or(1.0);
        Some((k, v, factor))
    }

    fn num(&mut self, key: &str) -> Option<f64> {
        let (k, v, factor) = self.take(key)?;
        match v {
            Value::Float(x) => Some(x * factor),
            Value::Integer(i) => Some(i as f64 * factor),
            other => {
                self.errors.push(ConfigError::Invalid {
                    key: self.path(&k),
                    reason: format!("expected a number, got {}", other.type_str()),
                });
                None
            }
        }
    }

    fn req(&mut self, key: &str) -> f64 {
        self.req_with(key, false)
    }

    fn req_nonneg(&mut self, key: &str) -> f64 {
        self.req_with(key, true)
    }

    fn req_with(&mut self, key: &str, zero_ok: bool) -> f64 {
        match self.num(key) {
            Some(v) => {
                if !((v > 0.0 || (zero_ok && v == 0.0)) && v.is_finite()) {
                    self.errors.push(ConfigError::NonPositive { key: self.path(key), value: v });
                }
                v
            }
            None => {
                let p = self.path(key);
                if !self.errors.iter().any(|e| matches!(e, ConfigError::Invalid { key, .. } if key.starts_with(&p))) {
                    self.missing.push(p);
                }
                f64::NAN
            }
        }
    }

    fn pos_or(&mut self, key: &str, default: f64) -> f64 {
        let v = self.num(key).unwrap_or(default);
        if !(v > 0.0 && v.is_finite()) {
            self.errors.push(ConfigError::NonPositive { key: self.path(key), value: v });
        }
        v
    }

    fn nonneg_or(&mut self, key: &str, default: f64) -> f64 {
        let v = self.num(key).unwrap_or(default);
        if !(v >= 0.0 && v.is_finite()) {
            self.errors.push(ConfigError::Invalid { key: self.path(key), reason: format!("must be >= 0, got {v}") });
        }
        v
    }

    fn fraction_or(&mut self, key: &str, default: f64) -> f64 {
        let v = self.num(key).unwrap_or(default);
        if !(0.0..=1.0).contains(&v) {
            self.errors.push(ConfigError::Invalid { key: self.path(key), reason: format!("must lie in [0, 1], got {v}") });
        }
        v
    }

    fn opt_pos(&mut self, key: &str) -> Option<f64> {
        let v = self.num(key)?;
        if !(v > 0.0 && v.is_finite()) {
            self.errors.push(ConfigError::NonPositive { key: self.path(key), value: v });
        }
        Some(v)
    }

    fn count_or(&mut self, key: &str, default: u64) -> u64 {
        match self.take(key) {
            None => default,
            Some((_, Value::Integer(i), _)) if i >= 0 => i as u64,
            Some((k, Value::Float(x), _)) if x >= 0.0 && x.fract() == 0.0 && x < 9.007e15 => {
                let _ = k;
                x as u64
            }
            Some((k, other, _)) => {
                self.errors.push(ConfigError::Invalid {
                    key: self.path(&k),
                    reason: format!("expected a non-negative integer, got {other}"),
                });
                default
            }
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some((_, Value::Boolean(b), _)) => b,
            Some((k, other, _)) => {
                self.errors.push(ConfigError::Invalid { key: self.path(&k), reason: format!("expected true/false, got {other}") });
                default
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.take(key)? {
            (_, Value::String(s), _) => Some(s),
            (k, other, _) => {
                self.errors.push(ConfigError::Invalid {
                    key: self.path(&k),
                    reason: format!("expected a quoted string, got {other}"),
                });
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)], default: T) -> T {
        let Some(s) = self.string(key) else { return default };
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => *v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.errors.push(ConfigError::Invalid {
                    key: self.path(key),
                    reason: format!("expected one of {}, got {s:?}", names.join("|")),
                });
                default
            }
        }
    }

    fn array(&mut self, key: &str) -> Vec<f64> {
        match self.take(key) {
            None => vec![],
            Some((k, Value::Array(a), _)) => {
                let mut out = Vec::with_capacity(a.len());
                for v in a {
                    match v {
                        Value::Float(x) => out.push(x),
                        Value::Integer(i) => out.push(i as f64),
                        other => {
                            self.errors.push(ConfigError::Invalid {
                                key: self.path(&k),
                                reason: format!("expected numbers, got {other}"),
                            });
                        }
                    }
                }
                out
            }
            Some((k, other, _)) => {
                self.errors.push(ConfigError::Invalid { key: self.path(&k), reason: format!("expected an array, got {other}") });
                vec![]
            }
        }
    }

    fn finish(self, unknown: &mut Vec<String>) {
        for k in self.table.keys() {
            unknown.push(format!("{}.{}", self.section, k));
        }
    }
}

impl Config {
    /// Load and merge config files in order; later files win per key.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        let mut merged = Table::new();
        for p in paths {
            let p = p.as_ref();
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::Read { path: p.display().to_string(), reason: e.to_string() })?;
            merge(&mut merged, parse_table(&text, &p.display().to_string())?);
        }
        Self::from_table(merged)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_table(parse_table(text, "<string>")?)
    }

    /// Merge several config texts, later wins.
    pub fn parse_layers(texts: &[&str]) -> Result<Self> {
        let mut merged = Table::new();
        for (i, t) in texts.iter().enumerate() {
            merge(&mut merged, parse_table(t, &format!("<layer {i}>"))?);
        }
        Self::from_table(merged)
    }

    fn from_table(mut root: Table) -> Result<Self> {
        let mut missing = Vec::new();
        let mut errors = Vec::new();
        let mut unknown = Vec::new();

        let pendulum = {
            let mut r = Reader::new(&mut root, "pendulum", &mut missing, &mut errors);
            let p = PendulumParams {
                inertia_rz: r.req("inertia_rz"),
                omega_m: r.req("omega_m"),
                q_factor: r.req("q"),
                arm_length: r.req("arm_length"),
                mass: r.req("mass"),
                temperature: r.req("temperature"),
            };
            r.finish(&mut unknown);
            p
        };

        let optics = {
            let mut r = Reader::new(&mut root, "optics", &mut missing, &mut errors);
            let wavelength = r.req("wavelength");
            let input_transmissivity = r.req("input_transmissivity");
            let finesse = r.req("finesse");
            let p_cav = r.req_nonneg("p_cav");
            let buildup = r.pos_or("buildup", OpticalParams::default_buildup(finesse));
            let round_trip_loss = r.nonneg_or("round_trip_loss", 0.0);
            let g_fss = r.pos_or("g_fss", 1e11);
            let g_iss = r.pos_or("g_iss", 100.0);
            let raw_detuning = r.num("detuning").unwrap_or(0.0);
            let unit = r.choice("detuning_unit", &[("rad", 1.0), ("deg", std::f64::consts::PI / 180.0)], 1.0);
            let t_rt = r.nonneg_or("t_rt", 0.0);
            r.finish(&mut unknown);
            OpticalParams {
                wavelength,
                input_transmissivity,
                round_trip_loss,
                finesse,
                p_cav,
                buildup,
                g_fss,
                g_iss,
                detuning: raw_detuning * unit,
                t_rt,
            }
        };

        let sn = {
            let mut r = Reader::new(&mut root, "sn", &mut missing, &mut errors);
            let atomic_mass = r.req("atomic_mass");
            let delta_x_int = r.req("delta_x_int");
            let lattice_const = r.pos_or("lattice_const", 4.05e-10);
            let given = r.opt_pos("omega_sn");
            let fit_a = r.pos_or("fit_a", DEFAULT_FIT_A);
            let fit_b1 = r.pos_or("fit_b1", DEFAULT_FIT_B1);
            let r_tilde = r.pos_or("r_tilde", DEFAULT_R_TILDE);
            let sigma_x = r.opt_pos("sigma_x");
            let sigma_y = r.opt_pos("sigma_y");
            let sigma_z = r.opt_pos("sigma_z");
            let c1_default = match (sigma_x, sigma_y) {
                (Some(x), Some(y)) => x / y,
                _ => DEFAULT_C,
            };
            let c2_default = match (sigma_x, sigma_z) {
                (Some(x), Some(z)) => x / z,
                _ => DEFAULT_C,
            };
            let c1 = r.pos_or("c1", c1_default);
            let c2 = r.pos_or("c2", c2_default);
            let sigma_theta = r.opt_pos("sigma_theta");
            r.finish(&mut unknown);
            for (k, c) in [("sn.c1", c1), ("sn.c2", c2)] {
                if c < 1.0 {
                    errors.push(ConfigError::Invalid { key: k.into(), reason: format!("must be >= 1, got {c}") });
                }
            }
            let computed = sn_frequency_from(atomic_mass, delta_x_int);
            let (omega_sn, source, discrepancy) = match given {
                Some(w) => (w, OmegaSnSource::Given, Some((w - computed).abs() / computed)),
                None => (computed, OmegaSnSource::Computed, None),
            };
            SnModel {
                atomic_mass,
                delta_x_int,
                lattice_const,
                omega_sn,
                omega_sn_source: source,
                omega_sn_discrepancy: discrepancy,
                fit_a,
                fit_b1,
                r_tilde,
                sigma_x,
                sigma_y,
                sigma_z,
                c1,
                c2,
                sigma_theta,
            }
        };

        let run = {
            let d = RunSettings::default();
            let mut r = Reader::new(&mut root, "run", &mut missing, &mut errors);
            let run = RunSettings {
                seed: r.count_or("seed", d.seed),
                dt: r.pos_or("dt", d.dt),
                duration: r.pos_or("duration", d.duration),
                n_traj: r.count_or("n_traj", d.n_traj as u64) as usize,
                t_bw: r.pos_or("t_bw", d.t_bw),
                sn_mode: r.choice(
                    "sn_mode",
                    &[("off", SnMode::Off), ("quadratic_preselection", SnMode::QuadraticPreselection), ("nonquadratic", SnMode::Nonquadratic)],
                    d.sn_mode,
                ),
                record_decimation: r.count_or("record_decimation", d.record_decimation as u64) as usize,
                initial_state: r.choice(
                    "initial_state",
                    &[("zero", InitialState::Zero), ("theta0", InitialState::Theta0), ("steady_state", InitialState::SteadyState)],
                    d.initial_state,
                ),
                theta0: r.num("theta0").unwrap_or(d.theta0),
                allow_unstable: r.bool_or("allow_unstable", d.allow_unstable),
                band_center_hz: r.opt_pos("band_center_hz"),
                band_width_hz: r.opt_pos("band_width_hz"),
                s_noise_asd: r.nonneg_or("s_noise_asd", d.s_noise_asd),
                freq_min_hz: r.pos_or("freq_min_hz", d.freq_min_hz),
                freq_max_hz: r.pos_or("freq_max_hz", d.freq_max_hz),
                n_freq: r.count_or("n_freq", d.n_freq as u64) as usize,
                observable: r.choice("observable", &[("angle", Observable::Angle), ("readout", Observable::Readout)], d.observable),
                include_dg: r.bool_or("include_dg", d.include_dg),
                dg_forcing_psd: r.nonneg_or("dg_forcing_psd", d.dg_forcing_psd),
                quad_rel_tol: r.pos_or("quad_rel_tol", d.quad_rel_tol),
                nuisance_mode: r.choice(
                    "nuisance_mode",
                    &[("marginalize", NuisanceMode::Marginalize), ("slice", NuisanceMode::Slice)],
                    d.nuisance_mode,
                ),
                n_nuisance: r.count_or("n_nuisance", d.n_nuisance as u64) as usize,
            };
            r.finish(&mut unknown);
            if run.n_traj == 0 {
                errors.push(ConfigError::Invalid { key: "run.n_traj".into(), reason: "must be >= 1".into() });
            }
            if run.record_decimation == 0 {
                errors.push(ConfigError::Invalid { key: "run.record_decimation".into(), reason: "must be >= 1".into() });
            }
            if run.freq_max_hz <= run.freq_min_hz || run.n_freq < 2 {
                errors.push(ConfigError::Invalid {
                    key: "run.freq_max_hz".into(),
                    reason: "frequency grid needs freq_max_hz > freq_min_hz and n_freq >= 2".into(),
                });
            }
            run
        };

        let servo = {
            let d = ServoSettings::default();
            let mut r = Reader::new(&mut root, "servo", &mut missing, &mut errors);
            let s = ServoSettings {
                kind: r.choice(
                    "kind",
                    &[
                        ("none", ServoKind::None),
                        ("catching", ServoKind::Catching),
                        ("quadratic_upgrade", ServoKind::QuadraticUpgrade),
                        ("nonquadratic_upgrade", ServoKind::NonquadraticUpgrade),
                        ("custom", ServoKind::Custom),
                    ],
                    d.kind,
                ),
                a0: r.opt_pos("a0"),
                omega_ugf: r.opt_pos("omega_ugf"),
                epsilon: r.nonneg_or("epsilon", d.epsilon),
                num: r.array("num"),
                den: r.array("den"),
                gain_scale: r.pos_or("gain_scale", d.gain_scale),
            };
            r.finish(&mut unknown);
            if s.kind != ServoKind::None && s.a0.is_none() && s.omega_ugf.is_none() && s.kind != ServoKind::Custom {
                missing.push("servo.a0 (or servo.omega_ugf)".into());
            }
            if s.kind == ServoKind::Custom && (s.num.is_empty() || s.den.is_empty()) {
                missing.push("servo.num and servo.den".into());
            }
            s
        };

        let noise = {
            let d = NoiseSettings::default();
            let mut r = Reader::new(&mut root, "noise", &mut missing, &mut errors);
            let n = NoiseSettings {
                thermal: r.choice(
                    "thermal",
                    &[("off", ThermalModel::Off), ("viscous", ThermalModel::Viscous), ("structural", ThermalModel::Structural)],
                    d.thermal,
                ),
                thermal_zp_fraction: r.fraction_or("thermal_zp_fraction", d.thermal_zp_fraction),
                qrpn: r.choice("qrpn", &[("off", QrpnSource::Off), ("s_ff", QrpnSource::SFf), ("alpha", QrpnSource::Alpha)], d.qrpn),
                s_a1: r.nonneg_or("s_a1", d.s_a1),
                sensor_asd: r.nonneg_or("sensor_asd", d.sensor_asd),
                sensor_psd_file: r.string("sensor_psd_file"),
                sensor_zp_fraction: r.fraction_or("sensor_zp_fraction", d.sensor_zp_fraction),
                actuator_psd_file: r.string("actuator_psd_file"),
                classical_radiation_psd_file: r.string("classical_radiation_psd_file"),
            };
            r.finish(&mut unknown);
            n
        };

        let budget = {
            let d = BudgetInputs::default();
            let mut r = Reader::new(&mut root, "budget", &mut missing, &mut errors);
            let b = BudgetInputs {
                gas_mass: r.pos_or("gas_mass", d.gas_mass),
                gas_area: r.pos_or("gas_area", d.gas_area),
                gas_molar_mass: r.pos_or("gas_molar_mass", d.gas_molar_mass),
                gas_pressure: r.pos_or("gas_pressure", d.gas_pressure),
                gas_temperature: r.pos_or("gas_temperature", d.gas_temperature),
                gas_frequency_hz: r.pos_or("gas_frequency_hz", d.gas_frequency_hz),
                fiber_youngs_modulus: r.pos_or("fiber_youngs_modulus", d.fiber_youngs_modulus),
                fiber_heat_capacity: r.pos_or("fiber_heat_capacity", d.fiber_heat_capacity),
                fiber_conductivity: r.pos_or("fiber_conductivity", d.fiber_conductivity),
                fiber_density: r.pos_or("fiber_density", d.fiber_density),
                fiber_alpha_thermal: r.pos_or("fiber_alpha_thermal", d.fiber_alpha_thermal),
                fiber_static_stress: r.nonneg_or("fiber_static_stress", d.fiber_static_stress),
                fiber_beta_te: r.pos_or("fiber_beta_te", d.fiber_beta_te),
                fiber_diameter: r.pos_or("fiber_diameter", d.fiber_diameter),
                fiber_surface_loss_depth: r.pos_or("fiber_surface_loss_depth", d.fiber_surface_loss_depth),
                fiber_temperature: r.pos_or("fiber_temperature", d.fiber_temperature),
                eddy_damping: r.pos_or("eddy_damping", d.eddy_damping),
                eddy_lever_arm: r.pos_or("eddy_lever_arm", d.eddy_lever_arm),
                dac_rms_start: r.pos_or("dac_rms_start", d.dac_rms_start),
                dac_rms_end: r.pos_or("dac_rms_end", d.dac_rms_end),
                dac_frequency_hz: r.pos_or("dac_frequency_hz", d.dac_frequency_hz),
            };
            r.finish(&mut unknown);
            b
        };

        for k in root.keys() {
            unknown.push(k.clone());
        }
        if !missing.is_empty() {
            return Err(ConfigError::Missing(missing).into());
        }
        if !unknown.is_empty() {
            return Err(ConfigError::Unknown(unknown).into());
        }
        if let Some(e) = errors.into_iter().next() {
            return Err(e.into());
        }
        Ok(Config { pendulum, optics, sn, run, servo, noise, budget })
    }

    /// Canonical SI rendering; reloading it gives bit-identical values.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut sec = |name: &str, entries: Vec<(&str, Entry)>| {
            let _ = writeln!(s, "[{name}]");
            for (k, v) in entries {
                match v {
                    Entry::Num(x) => {
                        let _ = writeln!(s, "{k} = {x:?}");
                    }
                    Entry::Int(i) => {
                        let _ = writeln!(s, "{k} = {i}");
                    }
                    Entry::Bool(b) => {
                        let _ = writeln!(s, "{k} = {b}");
                    }
                    Entry::Str(t) => {
                        let _ = writeln!(s, "{k} = {t:?}");
                    }
                    Entry::Arr(a) => {
                        let items: Vec<String> = a.iter().map(|x| format!("{x:?}")).collect();
                        let _ = writeln!(s, "{k} = [{}]", items.join(", "));
                    }
                    Entry::Skip => {}
                }
            }
            s.push('\n');
        };
        use Entry::*;
        let p = &self.pendulum;
        sec(
            "pendulum",
            vec![
                ("inertia_rz", Num(p.inertia_rz)),
                ("omega_m", Num(p.omega_m)),
                ("q", Num(p.q_factor)),
                ("arm_length", Num(p.arm_length)),
                ("mass", Num(p.mass)),
                ("temperature", Num(p.temperature)),
            ],
        );
        let o = &self.optics;
        sec(
            "optics",
            vec![
                ("wavelength", Num(o.wavelength)),
                ("input_transmissivity", Num(o.input_transmissivity)),
                ("round_trip_loss", Num(o.round_trip_loss)),
                ("finesse", Num(o.finesse)),
                ("p_cav", Num(o.p_cav)),
                ("buildup", Num(o.buildup)),
                ("g_fss", Num(o.g_fss)),
                ("g_iss", Num(o.g_iss)),
                ("detuning", Num(o.detuning)),
                ("detuning_unit", Str("rad".into())),
                ("t_rt", Num(o.t_rt)),
            ],
        );
        let n = &self.sn;
        let opt = |v: Option<f64>| v.map(Num).unwrap_or(Skip);
        sec(
            "sn",
            vec![
                ("atomic_mass", Num(n.atomic_mass)),
                ("delta_x_int", Num(n.delta_x_int)),
                ("lattice_const", Num(n.lattice_const)),
                ("omega_sn", if n.omega_sn_source == OmegaSnSource::Given { Num(n.omega_sn) } else { Skip }),
                ("fit_a", Num(n.fit_a)),
                ("fit_b1", Num(n.fit_b1)),
                ("r_tilde", Num(n.r_tilde)),
                ("sigma_x", opt(n.sigma_x)),
                ("sigma_y", opt(n.sigma_y)),
                ("sigma_z", opt(n.sigma_z)),
                ("c1", Num(n.c1)),
                ("c2", Num(n.c2)),
                ("sigma_theta", opt(n.sigma_theta)),
            ],
        );
        let r = &self.run;
        sec(
            "run",
            vec![
                ("seed", Int(r.seed)),
                ("dt", Num(r.dt)),
                ("duration", Num(r.duration)),
                ("n_traj", Int(r.n_traj as u64)),
                ("t_bw", Num(r.t_bw)),
                (
                    "sn_mode",
                    Str(match r.sn_mode {
                        SnMode::Off => "off",
                        SnMode::QuadraticPreselection => "quadratic_preselection",
                        SnMode::Nonquadratic => "nonquadratic",
                    }
                    .into()),
                ),
                ("record_decimation", Int(r.record_decimation as u64)),
                (
                    "initial_state",
                    Str(match r.initial_state {
                        InitialState::Zero => "zero",
                        InitialState::Theta0 => "theta0",
                        InitialState::SteadyState => "steady_state",
                    }
                    .into()),
                ),
                ("theta0", Num(r.theta0)),
                ("allow_unstable", Bool(r.allow_unstable)),
                ("band_center_hz", opt(r.band_center_hz)),
                ("band_width_hz", opt(r.band_width_hz)),
                ("s_noise_asd", Num(r.s_noise_asd)),
                ("freq_min_hz", Num(r.freq_min_hz)),
                ("freq_max_hz", Num(r.freq_max_hz)),
                ("n_freq", Int(r.n_freq as u64)),
                ("observable", Str(if r.observable == Observable::Angle { "angle" } else { "readout" }.into())),
                ("include_dg", Bool(r.include_dg)),
                ("dg_forcing_psd", Num(r.dg_forcing_psd)),
                ("quad_rel_tol", Num(r.quad_rel_tol)),
                ("nuisance_mode", Str(if r.nuisance_mode == NuisanceMode::Marginalize { "marginalize" } else { "slice" }.into())),
                ("n_nuisance", Int(r.n_nuisance as u64)),
            ],
        );
        let v = &self.servo;
        sec(
            "servo",
            vec![
                (
                    "kind",
                    Str(match v.kind {
                        ServoKind::None => "none",
                        ServoKind::Catching => "catching",
                        ServoKind::QuadraticUpgrade => "quadratic_upgrade",
                        ServoKind::NonquadraticUpgrade => "nonquadratic_upgrade",
                        ServoKind::Custom => "custom",
                    }
                    .into()),
                ),
                ("a0", opt(v.a0)),
                ("omega_ugf", opt(v.omega_ugf)),
                ("epsilon", Num(v.epsilon)),
                ("num", if v.num.is_empty() { Skip } else { Arr(v.num.clone()) }),
                ("den", if v.den.is_empty() { Skip } else { Arr(v.den.clone()) }),
                ("gain_scale", Num(v.gain_scale)),
            ],
        );
        let z = &self.noise;
        let opt_s = |v: &Option<String>| v.clone().map(Str).unwrap_or(Skip);
        sec(
            "noise",
            vec![
                (
                    "thermal",
                    Str(match z.thermal {
                        ThermalModel::Off => "off",
                        ThermalModel::Viscous => "viscous",
                        ThermalModel::Structural => "structural",
                    }
                    .into()),
                ),
                ("thermal_zp_fraction", Num(z.thermal_zp_fraction)),
                (
                    "qrpn",
                    Str(match z.qrpn {
                        QrpnSource::Off => "off",
                        QrpnSource::SFf => "s_ff",
                        QrpnSource::Alpha => "alpha",
                    }
                    .into()),
                ),
                ("s_a1", Num(z.s_a1)),
                ("sensor_asd", Num(z.sensor_asd)),
                ("sensor_psd_file", opt_s(&z.sensor_psd_file)),
                ("sensor_zp_fraction", Num(z.sensor_zp_fraction)),
                ("actuator_psd_file", opt_s(&z.actuator_psd_file)),
                ("classical_radiation_psd_file", opt_s(&z.classical_radiation_psd_file)),
            ],
        );
        let b = &self.budget;
        sec(
            "budget",
            vec![
                ("gas_mass", Num(b.gas_mass)),
                ("gas_area", Num(b.gas_area)),
                ("gas_molar_mass", Num(b.gas_molar_mass)),
                ("gas_pressure", Num(b.gas_pressure)),
                ("gas_temperature", Num(b.gas_temperature)),
                ("gas_frequency_hz", Num(b.gas_frequency_hz)),
                ("fiber_youngs_modulus", Num(b.fiber_youngs_modulus)),
                ("fiber_heat_capacity", Num(b.fiber_heat_capacity)),
                ("fiber_conductivity", Num(b.fiber_conductivity)),
                ("fiber_density", Num(b.fiber_density)),
                ("fiber_alpha_thermal", Num(b.fiber_alpha_thermal)),
                ("fiber_static_stress", Num(b.fiber_static_stress)),
                ("fiber_beta_te", Num(b.fiber_beta_te)),
                ("fiber_diameter", Num(b.fiber_diameter)),
                ("fiber_surface_loss_depth", Num(b.fiber_surface_loss_depth)),
                ("fiber_temperature", Num(b.fiber_temperature)),
                ("eddy_damping", Num(b.eddy_damping)),
                ("eddy_lever_arm", Num(b.eddy_lever_arm)),
                ("dac_rms_start", Num(b.dac_rms_start)),
                ("dac_rms_end", Num(b.dac_rms_end)),
                ("dac_frequency_hz", Num(b.dac_frequency_hz)),
            ],
        );
        s
    }

    /// Every accepted key per section, including unit variants. For docs and `--help`.
    pub fn documented_keys() -> BTreeMap<&'static str, Vec<String>> {
        let mut out = BTreeMap::new();
        for (section, keys) in SCHEMA {
            let mut v = Vec::new();
            for (k, unit) in keys.iter() {
                v.push(k.to_string());
                for (suf, _) in unit.suffixes() {
                    v.push(format!("{k}{suf}"));
                }
            }
            out.insert(*section, v);
        }
        out
    }
}

enum Entry {
    Num(f64),
    Int(u64),
    Bool(bool),
    Str(String),
    Arr(Vec<f64>),
    Skip,
}

/// Keys every config must provide.
pub fn required_keys() -> BTreeSet<&'static str> {
    [
        "pendulum.inertia_rz",
        "pendulum.omega_m",
        "pendulum.q",
        "pendulum.arm_length",
        "pendulum.mass",
        "pendulum.temperature",
        "optics.wavelength",
        "optics.input_transmissivity",
        "optics.finesse",
        "optics.p_cav",
        "sn.atomic_mass",
        "sn.delta_x_int",
    ]
    .into_iter()
    .collect()
}
