use proptest::prelude::*;

use torsion_sn::consts::TWO_PI;
use torsion_sn::loops::{calibrate_gain, log_grid_hz, mech_response, LoopModel, RationalTf};
use torsion_sn::noise::{
    combined_q, optical_spring_shift, q_eddy, q_gas, q_surface, s_ff_quantum, Channel, NoiseSet, PsdModel,
};
use torsion_sn::params::{Config, NuisanceMode, Observable, PendulumParams};
use torsion_sn::snpotential::{
    effective_sn_torque, mutual_gravity_curve, omega_q, self_gravity_curve, self_gravity_integral, symmetric_grid,
    QuadSettings,
};

const BASE: &str = r#"
[pendulum]
inertia_rz = 0.14
omega_m_hz = 6e-4
q = 5e4
arm_length = 0.6
mass = 1.0
temperature = 300
[optics]
wavelength_nm = 1550
input_transmissivity = 8e-6
finesse = 3.5e5
p_cav = 80
[sn]
atomic_mass_u = 27
delta_x_int = 1.04e-11
"#;

fn base() -> Config {
    Config::parse(BASE).unwrap()
}

fn pendulum() -> PendulumParams {
    base().pendulum
}

fn qs(mode: NuisanceMode) -> QuadSettings {
    QuadSettings { nuisance: mode, ..QuadSettings::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_round_trip_bit_exact(i in 1e-3f64..10.0, f in 1e-4f64..1.0, q in 10.0f64..1e6, l in 0.01f64..2.0, p in 0.0f64..200.0) {
        let text = format!(
            "[pendulum]\ninertia_rz = {i:e}\nomega_m_hz = {f:e}\nq = {q:e}\narm_length_mm = {:e}\nmass = 1\ntemperature = 300\n\
             [optics]\nwavelength = 1.55e-6\ninput_transmissivity = 8e-6\nfinesse = 3.5e5\np_cav = {p:e}\n\
             [sn]\natomic_mass_u = 27\ndelta_x_int = 1e-11\n", l * 1e3);
        let a = Config::parse(&text).unwrap();
        let b = Config::parse(&a.to_config_string()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn unit_suffixes_match_si(f in 1e-4f64..1.0, lmm in 1.0f64..2000.0) {
        let hz = format!("{BASE}").replace("omega_m_hz = 6e-4", &format!("omega_m_hz = {f:?}"))
            .replace("arm_length = 0.6", &format!("arm_length_mm = {lmm:?}"));
        let si = format!("{BASE}").replace("omega_m_hz = 6e-4", &format!("omega_m = {:?}", f * TWO_PI))
            .replace("arm_length = 0.6", &format!("arm_length = {:?}", lmm * 1e-3));
        let (a, b) = (Config::parse(&hz).unwrap(), Config::parse(&si).unwrap());
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(optical_spring_shift(&a.optics, &a.pendulum), optical_spring_shift(&b.optics, &b.pendulum));
    }

    #[test]
    fn omega_q_symmetric(x in 0.0f64..1e3, y in 0.0f64..1e3) {
        prop_assert_eq!(omega_q(x, y), omega_q(y, x));
        prop_assert_eq!(omega_q(x, 0.0), x);
    }

    #[test]
    fn self_gravity_even_positive_decreasing(x in 0.05f64..6.0, c1 in 1.0f64..50.0, c2 in 1.0f64..50.0, slice in any::<bool>()) {
        let s = qs(if slice { NuisanceMode::Slice } else { NuisanceMode::Marginalize });
        let a = self_gravity_integral(x, c1, c2, &s).unwrap();
        let b = self_gravity_integral(-x, c1, c2, &s).unwrap();
        let c = self_gravity_integral(x * 1.1 + 0.01, c1, c2, &s).unwrap();
        prop_assert!(a.value > 0.0);
        prop_assert!((a.value - b.value).abs() <= a.error + b.error + 1e-14);
        prop_assert!(c.value < a.value);
    }

    #[test]
    fn torque_is_energy_gradient(theta in -5.0f64..5.0, sigma in 1e-9f64..1e-6) {
        let cfg = base();
        let th = theta * sigma;
        let (_, tau) = effective_sn_torque(th, sigma, &cfg.sn, &cfg.pendulum).unwrap();
        let h = 1e-5 * sigma;
        let (ep, _) = effective_sn_torque(th + h, sigma, &cfg.sn, &cfg.pendulum).unwrap();
        let (em, _) = effective_sn_torque(th - h, sigma, &cfg.sn, &cfg.pendulum).unwrap();
        let fd = -(ep - em) / (2.0 * h);
        let (e0, _) = effective_sn_torque(0.0, sigma, &cfg.sn, &cfg.pendulum).unwrap();
        let scale = e0.abs() / sigma;
        prop_assert!((fd - tau).abs() <= 1e-8 * scale, "fd {} tau {}", fd, tau);
    }

    #[test]
    fn calibrated_loop_has_unit_gain(f_ugf in 1e-3f64..1e-1, eps in 0.01f64..1.0) {
        let p = pendulum();
        let w = TWO_PI * f_ugf;
        let t = RationalTf::quadratic_upgrade(eps);
        let c = t.scaled(calibrate_gain(&t, &p, w).unwrap());
        let h = c.eval_s(num_complex::Complex64::new(0.0, w)) * mech_response(&p, p.omega_m, w);
        prop_assert!((h.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn branches_nonnegative_and_sum(a0 in 1e-3f64..1.0, th in 0.0f64..1e-20, sn in 0.0f64..1e-16, wsn in 0.0f64..0.02) {
        let p = pendulum();
        let m = LoopModel {
            pendulum: p.clone(),
            omega_sn: wsn,
            servo: Some(RationalTf::catching().scaled(a0)),
            noise: NoiseSet::new()
                .with(Channel::ThermalCl, PsdModel::White(th))
                .with(Channel::Qrpn, PsdModel::White(1e-26))
                .with(Channel::SensorCl, PsdModel::White(sn)),
            dg_forcing_psd: 1e-30,
        };
        let grid = log_grid_hz(1e-5, 1.0, 200);
        for obs in [Observable::Angle, Observable::Readout] {
            let s = m.spectrum(&grid, obs, true).unwrap();
            for k in 0..grid.len() {
                prop_assert!(s.quantum[k] >= 0.0 && s.classical[k] >= 0.0 && s.dg[k] >= 0.0);
                prop_assert_eq!(s.total[k], s.quantum[k] + s.classical[k] + s.dg[k]);
            }
        }
    }

    #[test]
    fn doubling_a_psd_doubles_its_branch(a0 in 1e-3f64..1.0, wsn in 0.0f64..0.02) {
        let m = LoopModel {
            pendulum: pendulum(),
            omega_sn: wsn,
            servo: Some(RationalTf::catching().scaled(a0)),
            noise: NoiseSet::new()
                .with(Channel::ThermalCl, PsdModel::White(1e-24))
                .with(Channel::Qrpn, PsdModel::White(1e-26)),
            dg_forcing_psd: 0.0,
        };
        let grid = log_grid_hz(1e-5, 1.0, 100);
        let a = m.spectrum(&grid, Observable::Angle, false).unwrap();
        let m2 = LoopModel { noise: m.noise.scale_channel(Channel::ThermalCl, 2.0), ..m.clone() };
        let b = m2.spectrum(&grid, Observable::Angle, false).unwrap();
        for k in 0..grid.len() {
            prop_assert!((b.classical[k] / a.classical[k] - 2.0).abs() < 1e-12);
            prop_assert_eq!(b.quantum[k], a.quantum[k]);
        }
    }

    #[test]
    fn q_mechanisms_scale(k in 1.1f64..10.0) {
        let cfg = base();
        let g = cfg.budget.gas();
        let g2 = torsion_sn::noise::GasParams { pressure: g.pressure * k, ..g.clone() };
        let r = q_gas(&g).unwrap().q / q_gas(&g2).unwrap().q;
        prop_assert!((r / k - 1.0).abs() < 1e-12);
        let f = cfg.budget.fiber();
        let f2 = torsion_sn::noise::FiberParams { diameter: f.diameter * k, ..f.clone() };
        let r = q_surface(&f2).unwrap().q / q_surface(&f).unwrap().q;
        prop_assert!((r / k - 1.0).abs() < 1e-12);
        let r = q_eddy(5.3e-9, 0.5, &cfg.pendulum).unwrap().q / q_eddy(5.3e-9, 0.5 * k, &cfg.pendulum).unwrap().q;
        prop_assert!((r / (k * k) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adding_a_mechanism_never_raises_q(qs in proptest::collection::vec(1.0f64..1e8, 1..6), extra in 1.0f64..1e8) {
        let a = combined_q(&qs);
        let mut more = qs.clone();
        more.push(extra);
        prop_assert!(combined_q(&more) <= a);
        let inv: f64 = qs.iter().map(|q| 1.0 / q).sum();
        prop_assert!((a * inv - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spring_and_sff_are_linear(k in 0.1f64..10.0) {
        let cfg = base();
        let mut o = cfg.optics.clone();
        o.detuning = 1.4e-10;
        let (r1, f1) = optical_spring_shift(&o, &cfg.pendulum);
        let o2 = torsion_sn::params::OpticalParams { detuning: o.detuning * k, ..o.clone() };
        let (r2, _) = optical_spring_shift(&o2, &cfg.pendulum);
        prop_assert!((r2 / r1 / k - 1.0).abs() < 1e-12);
        let o3 = torsion_sn::params::OpticalParams { p_cav: o.p_cav * k, ..o.clone() };
        let (r3, _) = optical_spring_shift(&o3, &cfg.pendulum);
        prop_assert!((r3 / r1 / k - 1.0).abs() < 1e-12);
        prop_assert!(f1 > 0.0);
        let s = s_ff_quantum(&cfg.optics);
        prop_assert!((s_ff_quantum(&o3) / s / k - 1.0).abs() < 1e-12);
        let o4 = torsion_sn::params::OpticalParams { buildup: cfg.optics.buildup * k, ..cfg.optics.clone() };
        prop_assert!((s_ff_quantum(&o4) / s / k - 1.0).abs() < 1e-12);
    }
}

#[test]
fn zero_neighbors_is_self_only_and_curves_are_even() {
    let mut cfg = base();
    cfg.sn.sigma_x = Some(1e-11);
    let s = qs(NuisanceMode::Slice);
    let grid = symmetric_grid(5e-11, 21);
    let m = mutual_gravity_curve(&grid, &cfg.sn, 0, &s).unwrap();
    let tilde: Vec<f64> = grid.iter().map(|x| x / 1e-11).collect();
    let own = self_gravity_curve(&tilde, cfg.sn.c1, cfg.sn.c2, &s).unwrap();
    let g = torsion_sn::consts::G;
    let ma = cfg.sn.atomic_mass;
    for (e, v) in m.potential.iter().zip(&own) {
        assert_eq!(*e, -g * ma * ma / 1e-11 * v.value);
    }
    let with = mutual_gravity_curve(&grid, &cfg.sn, 3, &s).unwrap();
    let n = grid.len();
    for k in 0..n / 2 {
        assert!((with.potential[k] - with.potential[n - 1 - k]).abs() <= 2.0 * with.max_quad_error + 1e-300);
        assert!((with.force[k] + with.force[n - 1 - k]).abs() <= 1e-4 * with.force.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    }
}

#[test]
fn non_factorizable_with_sn() {
    let p = pendulum();
    let open = LoopModel {
        pendulum: p.clone(),
        omega_sn: TWO_PI * 2.51e-3,
        servo: None,
        noise: NoiseSet::new().with(Channel::ThermalCl, PsdModel::White(1e-24)).with(Channel::Qrpn, PsdModel::White(4e-28)),
        dg_forcing_psd: 0.0,
    };
    let w = TWO_PI * 4.41e-3;
    let t = RationalTf::quadratic_upgrade(0.1);
    let closed = LoopModel { servo: Some(t.scaled(calibrate_gain(&t, &p, w).unwrap())), ..open.clone() };
    let grid = log_grid_hz(1e-4, 1e-2, 400);
    let a = closed.spectrum(&grid, Observable::Angle, false).unwrap();
    let b = open.spectrum(&grid, Observable::Angle, false).unwrap();
    let r: Vec<f64> = a.total.iter().zip(&b.total).map(|(x, y)| x / y).collect();
    let (lo, hi) = r.iter().fold((f64::MAX, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(hi / lo > 1.01);
}
