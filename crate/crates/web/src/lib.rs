//! Browser bindings for three quick operations on the apparatus model:
//! the closed-loop spectrum, the self-gravity potential, and the Q budget
//! with the optical-spring shift. Results come back as flat `Float64Array`s.

use wasm_bindgen::prelude::*;

use torsion_sn::consts::{TORR, TWO_PI};
use torsion_sn::loops::{calibrate_gain, log_grid_hz, LoopModel, RationalTf};
use torsion_sn::noise::{combined_q, optical_spring_shift, q_factor, NoiseSet, QMechanism};
use torsion_sn::params::{Config, NuisanceMode, Observable};
use torsion_sn::snpotential::{fit_gaussian_potential, self_gravity_curve, symmetric_grid, QuadSettings};

const APPARATUS: &str = include_str!("../../cli/configs/apparatus.toml");

fn apparatus() -> Result<Config, JsError> {
    Config::parse(APPARATUS).map_err(|e| JsError::new(&e.to_string()))
}

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

/// Closed-loop spectrum of the apparatus with a catching servo at `f_ugf_hz`,
/// SN frequency `f_sn_hz` and white sensor noise `sensor_asd` (rad/√Hz).
///
/// Returns `[f, quantum, classical, total]` concatenated, each `n` long.
/// `readout` selects the readout observable instead of the angle.
#[wasm_bindgen]
pub fn closed_loop_spectrum(f_ugf_hz: f64, f_sn_hz: f64, sensor_asd: f64, readout: bool, n: usize) -> Result<Vec<f64>, JsError> {
    let mut cfg = apparatus()?;
    cfg.noise.sensor_asd = sensor_asd;
    let p = cfg.pendulum.clone();
    let t = RationalTf::catching();
    let servo = if f_ugf_hz > 0.0 { Some(t.scaled(calibrate_gain(&t, &p, TWO_PI * f_ugf_hz).map_err(js)?)) } else { None };
    let lm = LoopModel { pendulum: p, omega_sn: TWO_PI * f_sn_hz, servo, noise: NoiseSet::from_config(&cfg, None).map_err(js)?, dg_forcing_psd: 0.0 };
    let obs = if readout { Observable::Readout } else { Observable::Angle };
    let s = lm.spectrum(&log_grid_hz(1e-4, 1e-1, n.max(2)), obs, false).map_err(js)?;
    Ok([s.freq_hz(), s.quantum, s.classical, s.total].concat())
}

/// Self-gravity integral on `n` points of `[-half, half]` (units of σ_x)
/// for squeeze ratio `c`, followed by the Gaussian fit `[A, b1]`.
#[wasm_bindgen]
pub fn self_gravity(c: f64, half: f64, n: usize, slice: bool) -> Result<Vec<f64>, JsError> {
    let qs = QuadSettings { nuisance: if slice { NuisanceMode::Slice } else { NuisanceMode::Marginalize }, ..QuadSettings::default() };
    let x = symmetric_grid(half, n);
    let y: Vec<f64> = self_gravity_curve(&x, c, c, &qs).map_err(js)?.iter().map(|v| v.value).collect();
    let fit = fit_gaussian_potential(&x, &y, half).map_err(js)?;
    Ok([x, y, vec![fit.a, fit.b1]].concat())
}

/// Q per mechanism (gas, thermoelastic, surface, eddy, dac_rms), the
/// combined Q, then the optical-spring `[rel, δf_hz]`.
#[wasm_bindgen]
pub fn budget(pressure_torr: f64, p_cav: f64, detuning: f64) -> Result<Vec<f64>, JsError> {
    if !(pressure_torr > 0.0 && p_cav >= 0.0 && detuning.is_finite()) {
        return Err(JsError::new("need pressure > 0, p_cav >= 0 and a finite detuning"));
    }
    let mut cfg = apparatus()?;
    cfg.budget.gas_pressure = pressure_torr * TORR;
    cfg.optics.p_cav = p_cav;
    cfg.optics.detuning = detuning;
    let mut qs = Vec::new();
    for m in QMechanism::ALL {
        qs.push(q_factor(m, &cfg.budget, &cfg.pendulum).map_err(js)?.q);
    }
    let total = combined_q(&qs);
    let (rel, df) = optical_spring_shift(&cfg.optics, &cfg.pendulum);
    Ok([qs, vec![total, rel, df]].concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(closed_loop_spectrum(7e-3, 2.51e-3, 3e-7, false, 50).unwrap().len(), 200);
        assert_eq!(budget(2e-6, 80.0, 8e-9).unwrap().len(), 8);
        assert_eq!(self_gravity(20.0, 5.0, 41, true).unwrap().len(), 84);
    }
}
