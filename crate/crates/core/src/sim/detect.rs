//! Single-window SNR and integration time to unit SNR.

use super::welch::welch_psd;
use super::{map_ensemble, Experiment};
use crate::consts::{SECONDS_PER_YEAR, TWO_PI};
use crate::loops::{log_grid_hz, Branch, LoopModel};
use crate::noise::s_ff_quantum;
use crate::params::{Observable, OpticalParams, PendulumParams, SnMode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub s_ff: f64,
    /// Peak angle PSD at ω_q, rad²/Hz.
    pub s_thetatheta: f64,
    /// Peak as seen in one window of length t_bw, rad²/Hz.
    pub s_meas: f64,
    pub snr: f64,
}

/// `S_θθ = Q²L²S_FF/(I²ω_q⁴)`, `S_meas = ω_q T_bw S_θθ/(2πQ)`, `SNR = sqrt(S_meas/S_noise)`.
pub fn steady_state_stats(pendulum: &PendulumParams, optics: &OpticalParams, omega_q: f64, t_bw: f64, s_noise_asd: f64) -> SteadyState {
    let p = pendulum;
    let s_ff = s_ff_quantum(optics);
    let s_thetatheta = (p.q_factor * p.arm_length).powi(2) * s_ff / (p.inertia_rz.powi(2) * omega_q.powi(4));
    let s_meas = omega_q * t_bw * s_thetatheta / (TWO_PI * p.q_factor);
    let snr = (s_meas / (s_noise_asd * s_noise_asd)).sqrt();
    SteadyState { s_ff, s_thetatheta, s_meas, snr }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub seconds: f64,
    pub years: f64,
    /// `(f, Δf·(S_s/S_n)²)` per in-band bin; the contributions sum to `1/seconds`.
    pub per_bin: Vec<(f64, f64)>,
}

/// `T = 1/Σ Δf (S_signal/S_noise)²` over bins with `lo ≤ f ≤ hi`. Bin widths
/// come from the midpoints of the full (ascending) grid.
pub fn time_to_detect(freq_hz: &[f64], signal: &[f64], noise: &[f64], band: (f64, f64)) -> Result<Detection> {
    let n = freq_hz.len();
    if signal.len() != n || noise.len() != n {
        return Err(Error::invalid("time_to_detect", "signal, noise and frequency grids differ in length"));
    }
    if n < 2 {
        return Err(Error::invalid("time_to_detect", "need at least two grid points"));
    }
    if freq_hz.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("time_to_detect", "frequency grid must be ascending"));
    }
    let width = |i: usize| -> f64 {
        let l = if i == 0 { freq_hz[1] - freq_hz[0] } else { freq_hz[i] - freq_hz[i - 1] };
        let r = if i + 1 == n { freq_hz[n - 1] - freq_hz[n - 2] } else { freq_hz[i + 1] - freq_hz[i] };
        0.5 * (l + r)
    };
    let mut per_bin = Vec::new();
    for i in 0..n {
        let f = freq_hz[i];
        if f < band.0 || f > band.1 {
            continue;
        }
        if !(noise[i] > 0.0) {
            return Err(Error::invalid("noise", format!("must be positive in band, got {} at {f} Hz", noise[i])));
        }
        per_bin.push((f, width(i) * (signal[i] / noise[i]).powi(2)));
    }
    if per_bin.is_empty() {
        return Err(Error::EmptyBand { lo_hz: band.0, hi_hz: band.1 });
    }
    let rate: f64 = per_bin.iter().map(|b| b.1).sum();
    let seconds = 1.0 / rate;
    Ok(Detection { seconds, years: seconds / SECONDS_PER_YEAR, per_bin })
}

/// Closed-loop `ΔΘ` of the total angle without the quadratic SN spring, used
/// to freeze σ_Θ for the non-quadratic potential.
pub fn frozen_sigma_theta(lm: &LoopModel) -> Result<f64> {
    let lm = LoopModel { omega_sn: 0.0, ..lm.clone() };
    let f_q = lm.pendulum.omega_m / TWO_PI;
    let grid = log_grid_hz(f_q * 1e-6, f_q * 1e6, 2000);
    Ok(lm.residual_uncertainty(Branch::Total, &grid)?.delta_theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnDetection {
    pub freq_hz: Vec<f64>,
    /// Ensemble-mean Welch PSD of the SN torque, N²m²/Hz.
    pub signal: Vec<f64>,
    /// Analytic torque-referred total noise on the same grid, N²m²/Hz.
    pub noise: Vec<f64>,
    pub sigma_theta: f64,
    pub detection: Detection,
}

/// Time to unit SNR for the non-quadratic SN torque against the
/// torque-referred noise of `observable`, over `band` (Hz). The noise model
/// drops the quadratic SN spring; in this regime SN acts only through the
/// simulated torque.
pub fn sn_detection(exp: &Experiment, observable: Observable, band: (f64, f64)) -> Result<SnDetection> {
    if exp.sim.sn_mode != SnMode::Nonquadratic {
        return Err(Error::invalid("sn_mode", "detection time needs the nonquadratic mode"));
    }
    let sigma_theta = exp.sn.sigma_theta.ok_or_else(|| Error::invalid("sigma_theta", "required in nonquadratic mode"))?;
    let seg = exp.sim.segment_len().ok_or_else(|| Error::SimSettings("t_bw/(dt*decimation) must be a power of two".into()))?;
    let dt = exp.sim.dt * exp.sim.record_decimation as f64;
    let spectra = map_ensemble(exp, |rec| welch_psd(&rec.sn_torque, dt, seg, 0.5, "sn_torque"))?;
    let n = spectra.len() as f64;
    // Drop DC: the torque-referred noise is undefined there.
    let freq_hz: Vec<f64> = spectra[0].freq[1..].to_vec();
    let signal: Vec<f64> = (1..spectra[0].psd.len()).map(|k| spectra.iter().map(|s| s.psd[k]).sum::<f64>() / n).collect();
    let omega: Vec<f64> = freq_hz.iter().map(|f| TWO_PI * f).collect();
    let lm = LoopModel { omega_sn: 0.0, ..exp.loop_model.clone() };
    let noise = lm.spectrum(&omega, observable, false)?.total_torque;
    let detection = time_to_detect(&freq_hz, &signal, &noise, band)?;
    Ok(SnDetection { freq_hz, signal, noise, sigma_theta, detection })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_snr_in_one_window() {
        let t_bw = 32768.0;
        let f: Vec<f64> = (0..10).map(|i| i as f64 / t_bw).collect();
        let d = time_to_detect(&f, &[2.0; 10], &[2.0; 10], (4.5 / t_bw, 5.5 / t_bw)).unwrap();
        assert!((d.seconds / t_bw - 1.0).abs() < 1e-12);
        assert_eq!(d.per_bin.len(), 1);
    }

    #[test]
    fn empty_band_is_an_error() {
        let f = [1.0, 2.0, 3.0];
        assert!(matches!(time_to_detect(&f, &[1.0; 3], &[1.0; 3], (5.0, 6.0)), Err(Error::EmptyBand { .. })));
    }
}
