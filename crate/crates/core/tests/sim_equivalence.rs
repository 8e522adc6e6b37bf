//! Welch spectra of simulated closed-loop trajectories against the analytic
//! closed-loop PSD.

use torsion_sn::noise::{Channel, NoiseSet, PsdModel};
use torsion_sn::params::{Config, Observable, SnMode};
use torsion_sn::sim::{map_ensemble, welch_psd, Experiment};

const DESK: &str = r#"
[pendulum]
inertia_rz = 1e-6
omega_m_hz = 0.6
q = 50
arm_length = 0.01
mass = 0.01
temperature = 300
[optics]
wavelength = 1.064e-6
input_transmissivity = 0.01
finesse = 100
p_cav = 0.0
[sn]
atomic_mass_u = 27
delta_x_int = 1e-11
omega_sn_hz = 0.3
[run]
dt = 0.001953125
duration = 4096
t_bw = 64
n_traj = 8
initial_state = "steady_state"
[servo]
kind = "custom"
num = [0.0, 1.0]
den = [1.0, 0.05]
omega_ugf_hz = 3.0
"#;

struct Check {
    frac_within: f64,
    n_bins: usize,
}

fn compare(exp: &Experiment, observable: Observable, f_lo: f64, f_hi: f64) -> Check {
    let seg = exp.sim.segment_len().unwrap();
    let dt = exp.sim.dt * exp.sim.record_decimation as f64;
    let spectra = map_ensemble(exp, |r| {
        let series = match observable {
            Observable::Angle => r.theta,
            Observable::Readout => r.readout,
        };
        welch_psd(&series, dt, seg, 0.5, "sim")
    })
    .unwrap();
    let n = spectra.len() as f64;
    let rel = spectra[0].rel_std / n.sqrt();
    let freq = spectra[0].freq.clone();
    let mut within = 0;
    let mut total = 0;
    for (k, f) in freq.iter().enumerate() {
        if *f < f_lo || *f > f_hi {
            continue;
        }
        let sim = spectra.iter().map(|s| s.psd[k]).sum::<f64>() / n;
        let grid = [std::f64::consts::TAU * f];
        let a = exp.loop_model.spectrum(&grid, observable, false).unwrap().total[0];
        total += 1;
        if (sim / a - 1.0).abs() <= 3.0 * rel {
            within += 1;
        }
    }
    Check { frac_within: within as f64 / total as f64, n_bins: total }
}

fn desk() -> Experiment {
    Experiment::from_config(&Config::parse(DESK).unwrap(), None).unwrap()
}

fn keep(exp: &mut Experiment, ch: Channel, model: PsdModel) {
    exp.loop_model.noise = NoiseSet::new().with(ch, model);
}

#[test]
fn thermal_only() {
    let mut e = desk();
    keep(&mut e, Channel::ThermalCl, PsdModel::White(1.0e-27));
    let c = compare(&e, Observable::Angle, 0.1, 4.0);
    assert!(c.frac_within >= 0.9, "{:.3} of {} bins", c.frac_within, c.n_bins);
}

#[test]
fn quantum_only_quadratic() {
    let mut e = desk();
    e.sim.sn_mode = SnMode::QuadraticPreselection;
    keep(&mut e, Channel::Qrpn, PsdModel::White(1.0e-27));
    let c = compare(&e, Observable::Angle, 0.1, 4.0);
    assert!(c.frac_within >= 0.9, "{:.3} of {} bins", c.frac_within, c.n_bins);
}

#[test]
fn sensor_only_angle_and_readout() {
    let mut e = desk();
    keep(&mut e, Channel::SensorCl, PsdModel::White(1.0e-14));
    for obs in [Observable::Angle, Observable::Readout] {
        let c = compare(&e, obs, 0.1, 4.0);
        assert!(c.frac_within >= 0.9, "{obs:?}: {:.3} of {} bins", c.frac_within, c.n_bins);
    }
}

#[test]
fn quadratic_peak_sits_at_omega_q() {
    let mut e = desk();
    e.sim.sn_mode = SnMode::QuadraticPreselection;
    e.loop_model.servo = None;
    e.sim.n_traj = 2;
    keep(&mut e, Channel::Qrpn, PsdModel::White(1.0e-27));
    let seg = e.sim.segment_len().unwrap();
    let r = torsion_sn::sim::simulate_trajectory(&e, 0).unwrap();
    let fluct: Vec<f64> = r.theta.iter().zip(&r.theta_mean).map(|(a, b)| a - b).collect();
    let s = welch_psd(&fluct, e.sim.dt, seg, 0.5, "fluct").unwrap();
    let k = (1..s.psd.len()).max_by(|&i, &j| s.psd[i].total_cmp(&s.psd[j])).unwrap();
    let f_q = e.loop_model.omega_q() / std::f64::consts::TAU;
    let f_m = e.pendulum.omega_m / std::f64::consts::TAU;
    assert!((s.freq[k] - f_q).abs() < 0.02, "peak {} vs f_q {f_q}", s.freq[k]);
    assert!((s.freq[k] - f_m).abs() > 0.05);
}
