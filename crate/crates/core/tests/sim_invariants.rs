use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use torsion_sn::loops::log_grid_hz;
use torsion_sn::loops::Branch;
use torsion_sn::noise::{Channel, NoiseSet, PsdModel};
use torsion_sn::params::{Config, InitialState};
use torsion_sn::sim::{ringup_ensemble, simulate_ensemble, simulate_trajectory, welch_psd, Experiment};

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
[run]
dt = 0.00390625
duration = 64
t_bw = 8
n_traj = 6
[noise]
qrpn = "off"
[servo]
kind = "custom"
num = [0.0, 1.0]
den = [1.0, 0.05]
omega_ugf_hz = 3.0
"#;

fn desk() -> Experiment {
    Experiment::from_config(&Config::parse(DESK).unwrap(), None).unwrap()
}

fn free(dt: f64) -> Experiment {
    let mut e = desk();
    e.loop_model.servo = None;
    e.loop_model.noise = NoiseSet::new();
    e.sim.initial_state = InitialState::Theta0;
    e.sim.theta0 = 1e-6;
    e.sim.dt = dt;
    e.sim.duration = 10.0;
    e
}

#[test]
fn thread_count_does_not_change_results() {
    let e = desk();
    let run = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| simulate_ensemble(&e).unwrap());
    let (a, b) = (run(1), run(4));
    assert_eq!(a, b);
    assert_eq!(a[2], simulate_trajectory(&e, 2).unwrap());
}

#[test]
fn heun_is_second_order() {
    let w = desk().pendulum.omega_m;
    let end = |dt: f64| simulate_trajectory(&free(dt), 0).unwrap().final_state;
    // Phase-space distance, so a phase error counts at any end time.
    let dist = |x: (f64, f64), y: (f64, f64)| ((x.0 - y.0).powi(2) + ((x.1 - y.1) / w).powi(2)).sqrt();
    let (a, b, c) = (end(1.0 / 64.0), end(1.0 / 128.0), end(1.0 / 256.0));
    let ratio = dist(a, b) / dist(b, c);
    assert!((3.7..=4.3).contains(&ratio), "convergence ratio {ratio}");
}

#[test]
fn free_energy_decays_at_gamma() {
    let mut e = free(1.0 / 256.0);
    e.sim.duration = 60.0;
    let r = simulate_trajectory(&e, 0).unwrap();
    let w2 = e.pendulum.omega_m.powi(2);
    let en: Vec<f64> = r.theta.iter().zip(&r.rate).map(|(t, v)| 0.5 * (v * v + w2 * t * t)).collect();
    assert!(en.windows(2).all(|w| w[1] <= w[0]));
    // Least-squares slope of ln E against t.
    let n = en.len() as f64;
    let (mt, ml) = (r.time.iter().sum::<f64>() / n, en.iter().map(|x| x.ln()).sum::<f64>() / n);
    let num: f64 = r.time.iter().zip(&en).map(|(t, x)| (t - mt) * (x.ln() - ml)).sum();
    let den: f64 = r.time.iter().map(|t| (t - mt).powi(2)).sum();
    let slope = -num / den;
    assert!((slope / e.pendulum.gamma_m() - 1.0).abs() < 0.01, "{slope}");
}

#[test]
fn ensemble_variance_matches_closed_loop_integral() {
    let mut e = desk();
    e.loop_model.noise = NoiseSet::new().with(Channel::ThermalCl, PsdModel::White(1e-27));
    e.sim.n_traj = 256;
    e.sim.initial_state = InitialState::SteadyState;
    let grid = log_grid_hz(1e-9, 1e3, 1000);
    let expect = e.loop_model.residual_uncertainty(Branch::Total, &grid).unwrap().delta_theta.powi(2);
    let runs = simulate_ensemble(&e).unwrap();
    // 16 samples per trajectory, 4 s apart (many closed-loop decay times).
    let step = (4.0 / e.sim.dt) as usize;
    let samples: Vec<f64> = runs.iter().flat_map(|r| r.theta.iter().step_by(step).take(16).copied().collect::<Vec<_>>()).collect();
    let var = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
    assert!((var / expect - 1.0).abs() < 0.05, "sim {var:e} vs analytic {expect:e}");
}

#[test]
fn welch_parseval_and_ar1() {
    let dt = 1.0;
    let phi: f64 = 0.9;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut x = 0.0;
    let mut white = Vec::new();
    let ar: Vec<f64> = (0..1 << 18)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            white.push(z);
            x = phi * x + z;
            x
        })
        .collect();
    let w = welch_psd(&white, dt, 1024, 0.5, "white").unwrap();
    let ms = white.iter().map(|v| v * v).sum::<f64>() / white.len() as f64;
    let integral: f64 = w.psd.iter().sum::<f64>() * w.freq[1];
    assert!((integral / ms - 1.0).abs() < 0.02);
    let mean_level = w.psd[1..512].iter().sum::<f64>() / 511.0;
    assert!((mean_level / 2.0 - 1.0).abs() < 0.05);

    let s = welch_psd(&ar, dt, 1024, 0.5, "ar1").unwrap();
    let mut ok = 0;
    for k in 1..512 {
        let om = std::f64::consts::TAU * s.freq[k] * dt;
        let exact = 2.0 * dt / (1.0 + phi * phi - 2.0 * phi * om.cos());
        if (s.psd[k] / exact - 1.0).abs() <= 3.0 * s.rel_std {
            ok += 1;
        }
    }
    assert!(ok as f64 / 511.0 >= 0.9, "{ok}");
}

#[test]
fn zero_noise_ringup_is_zero() {
    let mut e = desk();
    e.loop_model.noise = NoiseSet::new();
    e.sim.initial_state = InitialState::Zero;
    let r = ringup_ensemble(&e, 0.6, 0.25, 4).unwrap();
    assert!(r.mean_asd.iter().all(|v| *v == 0.0));
}

#[test]
fn ringup_band_below_resolution_rejected() {
    let e = desk();
    assert!(ringup_ensemble(&e, 0.05, 0.01, 2).is_err());
}

#[test]
fn structural_thermal_noise_is_synthesized() {
    let mut e = desk();
    e.sim.duration = 1024.0;
    e.sim.n_traj = 4;
    e.sim.initial_state = InitialState::Zero;
    e.loop_model.noise = NoiseSet::new().with(Channel::ThermalCl, PsdModel::InverseOmega(1e-27));
    let runs = simulate_ensemble(&e).unwrap();
    assert!(runs[0].shaping_residual < 0.05, "{}", runs[0].shaping_residual);
    let seg = e.sim.segment_len().unwrap();
    let spectra: Vec<_> = runs.iter().map(|r| welch_psd(&r.theta, e.sim.dt, seg, 0.5, "t").unwrap()).collect();
    let mut ok = 0;
    let mut tot = 0;
    for k in 1..spectra[0].freq.len() {
        let f = spectra[0].freq[k];
        if !(0.2..=5.0).contains(&f) {
            continue;
        }
        let sim = spectra.iter().map(|s| s.psd[k]).sum::<f64>() / 4.0;
        let a = e.loop_model.branch_psd(std::f64::consts::TAU * f, Branch::Total).unwrap();
        tot += 1;
        if (sim / a - 1.0).abs() <= 0.25 {
            ok += 1;
        }
    }
    assert!(ok as f64 >= 0.9 * tot as f64, "{ok}/{tot}");
}
