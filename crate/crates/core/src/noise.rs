//! Noise sources and the Q-factor budget.

use std::path::{Path, PathBuf};

use crate::consts::{C, HBAR, K_B, R_GAS, TWO_PI};
use crate::params::{BudgetInputs, Config, OpticalParams, PendulumParams, QrpnSource, ThermalModel};
use crate::{Error, Result};

/// Quantum back-action force PSD, 8ħω0·P_cav·B/c² (N²/Hz).
pub fn s_ff_quantum(optics: &OpticalParams) -> f64 {
    8.0 * HBAR * optics.omega_0() * optics.p_cav * optics.buildup / (C * C)
}

/// DC radiation-pressure force 2P/c (N).
pub fn radiation_force(p_cav: f64) -> f64 {
    2.0 * p_cav / C
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QMechanism {
    Gas,
    Thermoelastic,
    Surface,
    Eddy,
    DacRms,
}

impl QMechanism {
    pub const ALL: [QMechanism; 5] = [Self::Gas, Self::Thermoelastic, Self::Surface, Self::Eddy, Self::DacRms];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gas => "gas",
            Self::Thermoelastic => "thermoelastic",
            Self::Surface => "surface",
            Self::Eddy => "eddy",
            Self::DacRms => "dac_rms",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QResult {
    pub mechanism: QMechanism,
    pub q: f64,
    pub loss_angle: f64,
    /// Named intermediate values.
    pub diagnostics: Vec<(&'static str, f64)>,
    pub note: Option<&'static str>,
}

impl QResult {
    fn from_q(mechanism: QMechanism, q: f64, diagnostics: Vec<(&'static str, f64)>) -> Self {
        Self { mechanism, q, loss_angle: 1.0 / q, diagnostics, note: None }
    }
}

fn pos(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    pub mass: f64,
    pub area: f64,
    pub molar_mass: f64,
    /// Pa
    pub pressure: f64,
    pub gas_temperature: f64,
    pub frequency_hz: f64,
}

/// Free-molecular gas damping, Q = (π/2)^{3/2} (M/A) f sqrt(RT/M_m) / P.
pub fn q_gas(g: &GasParams) -> Result<QResult> {
    for (n, v) in [
        ("mass", g.mass),
        ("area", g.area),
        ("molar_mass", g.molar_mass),
        ("pressure", g.pressure),
        ("gas_temperature", g.gas_temperature),
        ("frequency_hz", g.frequency_hz),
    ] {
        pos(n, v)?;
    }
    let thermal_speed = (R_GAS * g.gas_temperature / g.molar_mass).sqrt();
    let q = (std::f64::consts::PI / 2.0).powf(1.5) * (g.mass / g.area) * g.frequency_hz * thermal_speed / g.pressure;
    Ok(QResult::from_q(QMechanism::Gas, q, vec![("areal_density_kg_m2", g.mass / g.area), ("sqrt_rt_over_m", thermal_speed)]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberParams {
    pub youngs_modulus: f64,
    pub heat_capacity: f64,
    pub conductivity: f64,
    pub density: f64,
    pub alpha_thermal: f64,
    /// Static stress σ0, Pa (may be zero).
    pub static_stress: f64,
    /// dY/dT / Y, 1/K.
    pub beta_te: f64,
    pub diameter: f64,
    /// Surface loss depth times loss angle, hΦ_s (m).
    pub surface_loss_depth: f64,
    pub temperature: f64,
}

/// Thermoelastic loss angle of a fibre at angular frequency `omega`.
pub fn q_thermoelastic(f: &FiberParams, omega: f64) -> Result<QResult> {
    for (n, v) in [
        ("youngs_modulus", f.youngs_modulus),
        ("heat_capacity", f.heat_capacity),
        ("conductivity", f.conductivity),
        ("density", f.density),
        ("alpha_thermal", f.alpha_thermal),
        ("beta_te", f.beta_te),
        ("diameter", f.diameter),
        ("temperature", f.temperature),
        ("omega", omega),
    ] {
        pos(n, v)?;
    }
    if f.static_stress < 0.0 {
        return Err(Error::invalid("static_stress", "must be >= 0"));
    }
    let tau = f.density * f.heat_capacity * f.diameter * f.diameter / (4.32 * std::f64::consts::PI * f.conductivity);
    let delta = f.alpha_thermal - f.static_stress * f.beta_te / f.youngs_modulus;
    let wt = omega * tau;
    let phi = f.youngs_modulus * f.temperature / (f.density * f.heat_capacity) * delta * delta * wt / (1.0 + wt * wt);
    Ok(QResult {
        mechanism: QMechanism::Thermoelastic,
        q: 1.0 / phi,
        loss_angle: phi,
        diagnostics: vec![("tau_s", tau), ("omega_tau", wt), ("effective_expansion_per_k", delta)],
        note: None,
    })
}

/// Surface loss, Φ = 8hΦ_s/d.
pub fn q_surface(f: &FiberParams) -> Result<QResult> {
    pos("surface_loss_depth", f.surface_loss_depth)?;
    pos("diameter", f.diameter)?;
    let phi = 8.0 * f.surface_loss_depth / f.diameter;
    Ok(QResult { mechanism: QMechanism::Surface, q: 1.0 / phi, loss_angle: phi, diagnostics: vec![], note: None })
}

/// Eddy-current damping, Q = ω_m I / (γ a²).
pub fn q_eddy(damping: f64, lever_arm: f64, pendulum: &PendulumParams) -> Result<QResult> {
    pos("eddy_damping", damping)?;
    pos("eddy_lever_arm", lever_arm)?;
    let torque_damping = damping * lever_arm * lever_arm;
    let q = pendulum.omega_m * pendulum.inertia_rz / torque_damping;
    Ok(QResult::from_q(QMechanism::Eddy, q, vec![("rotational_damping_nms", torque_damping)]))
}

/// Q from the DAC-driven RMS growth, taken literally from RMS_end = RMS_start·sqrt(Q f).
pub fn q_dac_rms(rms_start: f64, rms_end: f64, frequency_hz: f64) -> Result<QResult> {
    pos("dac_rms_start", rms_start)?;
    pos("dac_rms_end", rms_end)?;
    pos("dac_frequency_hz", frequency_hz)?;
    let q = (rms_end / rms_start).powi(2) / frequency_hz;
    let mut r = QResult::from_q(QMechanism::DacRms, q, vec![("rms_ratio", rms_end / rms_start), ("claimed_q", 5e4), ("ratio_to_claimed", q / 5e4)]);
    r.note = Some("formula evaluated as printed; it does not give the quoted 5e4 from its own inputs");
    Ok(r)
}

impl BudgetInputs {
    pub fn gas(&self) -> GasParams {
        GasParams {
            mass: self.gas_mass,
            area: self.gas_area,
            molar_mass: self.gas_molar_mass,
            pressure: self.gas_pressure,
            gas_temperature: self.gas_temperature,
            frequency_hz: self.gas_frequency_hz,
        }
    }

    pub fn fiber(&self) -> FiberParams {
        FiberParams {
            youngs_modulus: self.fiber_youngs_modulus,
            heat_capacity: self.fiber_heat_capacity,
            conductivity: self.fiber_conductivity,
            density: self.fiber_density,
            alpha_thermal: self.fiber_alpha_thermal,
            static_stress: self.fiber_static_stress,
            beta_te: self.fiber_beta_te,
            diameter: self.fiber_diameter,
            surface_loss_depth: self.fiber_surface_loss_depth,
            temperature: self.fiber_temperature,
        }
    }
}

pub fn q_factor(mechanism: QMechanism, inputs: &BudgetInputs, pendulum: &PendulumParams) -> Result<QResult> {
    match mechanism {
        QMechanism::Gas => q_gas(&inputs.gas()),
        QMechanism::Thermoelastic => q_thermoelastic(&inputs.fiber(), pendulum.omega_m),
        QMechanism::Surface => q_surface(&inputs.fiber()),
        QMechanism::Eddy => q_eddy(inputs.eddy_damping, inputs.eddy_lever_arm, pendulum),
        QMechanism::DacRms => q_dac_rms(inputs.dac_rms_start, inputs.dac_rms_end, inputs.dac_frequency_hz),
    }
}

/// 1/Q_total = Σ 1/Q_i.
pub fn combined_q(qs: &[f64]) -> f64 {
    1.0 / qs.iter().map(|q| 1.0 / q).sum::<f64>()
}

/// One-sided thermal torque PSD (N²m²/Hz) from the fluctuation-dissipation theorem.
pub fn thermal_torque_psd(pendulum: &PendulumParams, model: ThermalModel, omega: f64) -> f64 {
    let base = 4.0 * K_B * pendulum.temperature * pendulum.inertia_rz;
    match model {
        ThermalModel::Off => 0.0,
        ThermalModel::Viscous => base * pendulum.gamma_m(),
        ThermalModel::Structural => base * pendulum.omega_m * pendulum.omega_m / (pendulum.q_factor * omega),
    }
}

/// Detuning-induced optical spring: (relative ω² shift, frequency shift in Hz).
pub fn optical_spring_shift(optics: &OpticalParams, pendulum: &PendulumParams) -> (f64, f64) {
    let t = optics.input_transmissivity;
    let rel = 16.0 * std::f64::consts::PI * optics.p_cav * pendulum.arm_length.powi(2) * optics.detuning
        / (pendulum.inertia_rz * optics.wavelength * t * t * C * optics.g_fss * optics.g_iss * pendulum.omega_m.powi(2));
    let df = pendulum.f_m_hz() * ((1.0 + rel).sqrt() - 1.0);
    (rel, df)
}

/// PSD sampled on a frequency grid; log-log interpolation, flat outside the table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPsd {
    pub freq_hz: Vec<f64>,
    pub psd: Vec<f64>,
}

impl TabulatedPsd {
    pub fn new(freq_hz: Vec<f64>, psd: Vec<f64>) -> Result<Self> {
        if freq_hz.len() != psd.len() || freq_hz.is_empty() {
            return Err(Error::invalid("psd table", "needs matching, non-empty columns"));
        }
        if freq_hz.windows(2).any(|w| !(w[1] > w[0])) || !(freq_hz[0] > 0.0) {
            return Err(Error::invalid("psd table", "frequencies must be positive and strictly increasing"));
        }
        if psd.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("psd table", "PSD values must be finite and >= 0"));
        }
        Ok(Self { freq_hz, psd })
    }

    /// Two-column CSV `freq_hz, psd`. A header row and `#` comment lines are allowed.
    pub fn from_csv_reader<R: std::io::Read>(rdr: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(rdr);
        let (mut f, mut p) = (Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::invalid("psd table", format!("row {} has fewer than 2 columns", i + 1)));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    f.push(a);
                    p.push(b);
                }
                _ if i == 0 => continue,
                _ => return Err(Error::invalid("psd table", format!("row {} is not numeric", i + 1))),
            }
        }
        Self::new(f, p)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::invalid("psd table", format!("cannot open {}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn eval_hz(&self, f: f64) -> f64 {
        let n = self.freq_hz.len();
        if f <= self.freq_hz[0] {
            return self.psd[0];
        }
        if f >= self.freq_hz[n - 1] {
            return self.psd[n - 1];
        }
        let i = self.freq_hz.partition_point(|x| *x <= f) - 1;
        let (f0, f1, p0, p1) = (self.freq_hz[i], self.freq_hz[i + 1], self.psd[i], self.psd[i + 1]);
        if p0 > 0.0 && p1 > 0.0 {
            let w = (f / f0).ln() / (f1 / f0).ln();
            (p0.ln() + w * (p1.ln() - p0.ln())).exp()
        } else {
            p0 + (p1 - p0) * (f - f0) / (f1 - f0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsdModel {
    White(f64),
    /// coef / Ω
    InverseOmega(f64),
    Tabulated(TabulatedPsd),
    Scaled(Box<PsdModel>, f64),
}

impl PsdModel {
    pub fn eval(&self, omega: f64) -> f64 {
        match self {
            PsdModel::White(v) => *v,
            PsdModel::InverseOmega(c) => c / omega,
            PsdModel::Tabulated(t) => t.eval_hz(omega / TWO_PI),
            PsdModel::Scaled(m, s) => s * m.eval(omega),
        }
    }

    pub fn is_white(&self) -> bool {
        match self {
            PsdModel::White(_) => true,
            PsdModel::Scaled(m, _) => m.is_white(),
            _ => false,
        }
    }

    pub fn scaled(self, s: f64) -> Self {
        match self {
            PsdModel::White(v) => PsdModel::White(v * s),
            PsdModel::InverseOmega(c) => PsdModel::InverseOmega(c * s),
            PsdModel::Scaled(m, k) => PsdModel::Scaled(m, k * s),
            other => PsdModel::Scaled(Box::new(other), s),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PsdModel::White(v) | PsdModel::InverseOmega(v) => *v == 0.0,
            PsdModel::Scaled(m, s) => *s == 0.0 || m.is_zero(),
            PsdModel::Tabulated(t) => t.psd.iter().all(|p| *p == 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    ThermalCl,
    ThermalZp,
    SensorCl,
    SensorZp,
    Qrpn,
    ActuatorDac,
    ClassicalRadiation,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::ThermalCl => "thermal_cl",
            Channel::ThermalZp => "thermal_zp",
            Channel::SensorCl => "sensor_cl",
            Channel::SensorZp => "sensor_zp",
            Channel::Qrpn => "qrpn",
            Channel::ActuatorDac => "actuator_dac",
            Channel::ClassicalRadiation => "classical_radiation",
        }
    }

    pub fn is_sensor(self) -> bool {
        matches!(self, Channel::SensorCl | Channel::SensorZp)
    }

    /// Drives the quantum (ω_q) branch under pre-selection.
    pub fn is_quantum(self) -> bool {
        matches!(self, Channel::ThermalZp | Channel::SensorZp | Channel::Qrpn)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePsd {
    pub channel: Channel,
    /// Torque channels in N²m²/Hz, sensor channels in rad²/Hz.
    pub model: PsdModel,
}

/// Ordered set of noise channels. The order is also the per-step draw order in
/// the time-domain simulation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseSet {
    pub channels: Vec<NoisePsd>,
}

/// One-sided QRPN torque PSD for the configured source.
pub fn qrpn_torque_psd(source: QrpnSource, optics: &OpticalParams, pendulum: &PendulumParams, s_a1: f64) -> f64 {
    let l2 = pendulum.arm_length.powi(2);
    match source {
        QrpnSource::Off => 0.0,
        QrpnSource::SFf => 2.0 * l2 * s_ff_quantum(optics),
        QrpnSource::Alpha => 2.0 * HBAR * HBAR * optics.coupling_alpha().powi(2) * l2 * s_a1,
    }
}

impl NoiseSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, channel: Channel, model: PsdModel) -> Self {
        self.channels.push(NoisePsd { channel, model });
        self
    }

    /// Channels from a loaded config; relative PSD file paths resolve against `base_dir`.
    pub fn from_config(cfg: &Config, base_dir: Option<&Path>) -> Result<Self> {
        let n = &cfg.noise;
        let p = &cfg.pendulum;
        let resolve = |f: &str| -> PathBuf {
            let path = PathBuf::from(f);
            match base_dir {
                Some(b) if path.is_relative() => b.join(path),
                _ => path,
            }
        };
        let mut set = NoiseSet::new();
        let thermal = match n.thermal {
            ThermalModel::Off => PsdModel::White(0.0),
            ThermalModel::Viscous => PsdModel::White(thermal_torque_psd(p, ThermalModel::Viscous, 1.0)),
            ThermalModel::Structural => PsdModel::InverseOmega(thermal_torque_psd(p, ThermalModel::Structural, 1.0)),
        };
        set = set
            .with(Channel::ThermalCl, thermal.clone().scaled(1.0 - n.thermal_zp_fraction))
            .with(Channel::ThermalZp, thermal.scaled(n.thermal_zp_fraction));
        set = set.with(Channel::Qrpn, PsdModel::White(qrpn_torque_psd(n.qrpn, &cfg.optics, p, n.s_a1)));
        let sensor = match &n.sensor_psd_file {
            Some(f) => PsdModel::Tabulated(TabulatedPsd::from_csv_path(&resolve(f))?),
            None => PsdModel::White(n.sensor_asd * n.sensor_asd),
        };
        set = set
            .with(Channel::SensorCl, sensor.clone().scaled(1.0 - n.sensor_zp_fraction))
            .with(Channel::SensorZp, sensor.scaled(n.sensor_zp_fraction));
        if let Some(f) = &n.actuator_psd_file {
            set = set.with(Channel::ActuatorDac, PsdModel::Tabulated(TabulatedPsd::from_csv_path(&resolve(f))?));
        }
        if let Some(f) = &n.classical_radiation_psd_file {
            set = set.with(Channel::ClassicalRadiation, PsdModel::Tabulated(TabulatedPsd::from_csv_path(&resolve(f))?));
        }
        Ok(set)
    }

    fn sum(&self, omega: f64, pick: impl Fn(Channel) -> bool) -> f64 {
        self.channels.iter().filter(|c| pick(c.channel)).map(|c| c.model.eval(omega)).sum()
    }

    /// Quantum-branch torque PSD (QRPN + zero-point thermal).
    pub fn torque_quantum(&self, omega: f64) -> f64 {
        self.sum(omega, |c| c.is_quantum() && !c.is_sensor())
    }

    /// Classical-branch torque PSD.
    pub fn torque_classical(&self, omega: f64) -> f64 {
        self.sum(omega, |c| !c.is_quantum() && !c.is_sensor())
    }

    pub fn sensor_cl(&self, omega: f64) -> f64 {
        self.sum(omega, |c| c == Channel::SensorCl)
    }

    pub fn sensor_zp(&self, omega: f64) -> f64 {
        self.sum(omega, |c| c == Channel::SensorZp)
    }

    pub fn channel(&self, ch: Channel) -> Option<&NoisePsd> {
        self.channels.iter().find(|c| c.channel == ch)
    }

    /// Copy with only the channels accepted by `keep`; the rest are zeroed but
    /// kept in place so random streams stay aligned.
    pub fn only(&self, keep: impl Fn(Channel) -> bool) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| NoisePsd { channel: c.channel, model: if keep(c.channel) { c.model.clone() } else { PsdModel::White(0.0) } })
                .collect(),
        }
    }

    /// Copy with one channel's PSD multiplied by `s`.
    pub fn scale_channel(&self, ch: Channel, s: f64) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| NoisePsd { channel: c.channel, model: if c.channel == ch { c.model.clone().scaled(s) } else { c.model.clone() } })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::TORR;

    fn optics() -> OpticalParams {
        OpticalParams {
            wavelength: 1550e-9,
            input_transmissivity: 8e-6,
            round_trip_loss: 1e-6,
            finesse: 3.5e5,
            p_cav: 80.0,
            buildup: OpticalParams::default_buildup(3.5e5),
            g_fss: 1e11,
            g_iss: 100.0,
            detuning: 8e-9,
            t_rt: 0.0,
        }
    }

    fn pendulum() -> PendulumParams {
        PendulumParams::new(0.14, TWO_PI * 6e-4, 5e4, 0.6, 1.0, 300.0).unwrap()
    }

    #[test]
    fn s_ff_linear_in_power_and_buildup() {
        let o = optics();
        let base = s_ff_quantum(&o);
        assert!((s_ff_quantum(&OpticalParams { p_cav: 160.0, ..o }) / base - 2.0).abs() < 1e-14);
        assert!((s_ff_quantum(&OpticalParams { buildup: 2.0 * o.buildup, ..o }) / base - 2.0).abs() < 1e-14);
        assert_eq!(s_ff_quantum(&OpticalParams { p_cav: 0.0, ..o }), 0.0);
    }

    #[test]
    fn radiation_force_values() {
        assert!((radiation_force(40.0) - 2.668_5e-7).abs() < 1e-10);
        assert_eq!(radiation_force(0.0), 0.0);
    }

    #[test]
    fn gas_q_inverse_in_pressure() {
        let g = BudgetInputs::default().gas();
        let a = q_gas(&g).unwrap().q;
        let b = q_gas(&GasParams { pressure: 2.0 * g.pressure, ..g }).unwrap().q;
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!((g.pressure - 2e-6 * TORR).abs() < 1e-20);
    }

    #[test]
    fn surface_q_linear_in_diameter_eddy_inverse_square() {
        let f = BudgetInputs::default().fiber();
        let a = q_surface(&f).unwrap().q;
        let b = q_surface(&FiberParams { diameter: 2.0 * f.diameter, ..f }).unwrap().q;
        assert!((b / a - 2.0).abs() < 1e-12);
        let p = pendulum();
        let e1 = q_eddy(5.3e-9, 0.5, &p).unwrap().q;
        let e2 = q_eddy(5.3e-9, 1.0, &p).unwrap().q;
        assert!((e1 / e2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn combined_q_never_increases() {
        let qs = [6.6e4, 2.0e6, 4.0e5];
        let c2 = combined_q(&qs[..2]);
        let c3 = combined_q(&qs);
        assert!(c3 <= c2 && c2 <= qs[0]);
    }

    #[test]
    fn thermal_psd_viscous_flat_and_zero_at_zero_temperature() {
        let p = pendulum();
        assert_eq!(thermal_torque_psd(&p, ThermalModel::Viscous, 1e-3), thermal_torque_psd(&p, ThermalModel::Viscous, 1e-2));
        let cold = PendulumParams { temperature: 0.0, ..p };
        assert_eq!(thermal_torque_psd(&cold, ThermalModel::Viscous, 1e-3), 0.0);
        // Structural equals viscous at resonance.
        let s = thermal_torque_psd(&p, ThermalModel::Structural, p.omega_m);
        assert!((s / thermal_torque_psd(&p, ThermalModel::Viscous, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optical_spring_linear_and_zero() {
        let (o, p) = (optics(), pendulum());
        let (r1, _) = optical_spring_shift(&o, &p);
        let (r2, _) = optical_spring_shift(&OpticalParams { detuning: 2.0 * o.detuning, ..o }, &p);
        let (r3, _) = optical_spring_shift(&OpticalParams { p_cav: 2.0 * o.p_cav, ..o }, &p);
        assert!((r2 / r1 - 2.0).abs() < 1e-12 && (r3 / r1 - 2.0).abs() < 1e-12);
        assert_eq!(optical_spring_shift(&OpticalParams { detuning: 0.0, ..o }, &p), (0.0, 0.0));
    }

    #[test]
    fn tabulated_interpolation() {
        let t = TabulatedPsd::from_csv_reader("freq_hz, psd\n# note\n1e-3, 1e-20\n1e-1, 1e-24\n".as_bytes()).unwrap();
        assert_eq!(t.eval_hz(1e-5), 1e-20);
        assert_eq!(t.eval_hz(10.0), 1e-24);
        assert!((t.eval_hz(1e-2) / 1e-22 - 1.0).abs() < 1e-12);
        assert!(TabulatedPsd::from_csv_reader("1, 2\n0.5, 1\n".as_bytes()).is_err());
    }
}
