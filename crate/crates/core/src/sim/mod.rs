//! Stochastic time-domain simulation of the closed loop.
//!
//! Each step: draw one standard normal per noise channel (in [`NoiseSet`]
//! order), form the readout `y = Θ + n`, step the discretized servo, then
//! advance the pendulum with a Heun step holding noise and control fixed.
//! White channels with one-sided PSD `S` get variance `S/(2dt)`.
//!
//! In quadratic pre-selection mode the full angle obeys
//! `I Θ'' = -I ω_q² Θ + I ω_SN² ⟨Θ⟩ - Iγ Θ' + noise - u`, while the expectation
//! value `⟨Θ⟩` is integrated alongside with `ω_m`, classical noise only and its
//! own servo copy fed `⟨Θ⟩ + n_cl`. With `ω_SN = 0` this reproduces the `off`
//! trajectory bit for bit.

pub mod detect;
pub mod ringup;
pub mod shaping;
pub mod welch;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::consts::TWO_PI;
use crate::loops::{servo_from_settings, Branch, LoopModel, RationalTf};
use crate::noise::{Channel, NoiseSet, PsdModel};
use crate::params::{Config, InitialState, OpticalParams, PendulumParams, SnMode, SnModel};
use crate::quad::{self, Tolerance};
use crate::snpotential::effective_sn_torque;
use crate::{Error, Result};

pub use detect::{frozen_sigma_theta, sn_detection, steady_state_stats, time_to_detect, Detection, SnDetection, SteadyState};
pub use ringup::{fit_ringup, ringup_ensemble, RingupFit, RingupResult};
pub use shaping::ShapingFilter;
pub use welch::{welch_psd, SpectrumResult};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub t_bw: f64,
    pub sn_mode: SnMode,
    pub record_decimation: usize,
    pub initial_state: InitialState,
    pub theta0: f64,
    pub allow_unstable: bool,
}

impl SimConfig {
    pub fn from_config(cfg: &Config) -> Self {
        let r = &cfg.run;
        Self {
            dt: r.dt,
            duration: r.duration,
            n_traj: r.n_traj,
            seed: r.seed,
            t_bw: r.t_bw,
            sn_mode: r.sn_mode,
            record_decimation: r.record_decimation,
            initial_state: r.initial_state,
            theta0: r.theta0,
            allow_unstable: r.allow_unstable,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Recorded samples per spectral segment, if `t_bw/(dt·decimation)` is a power of two.
    pub fn segment_len(&self) -> Option<usize> {
        let n = self.t_bw / (self.dt * self.record_decimation as f64);
        let r = n.round();
        let ok = r >= 2.0 && (n - r).abs() <= 1e-9 * n && (r as u64).is_power_of_two();
        ok.then_some(r as usize)
    }

    /// Step-size and segment guards against the fastest loop frequency `omega_q`.
    pub fn validate(&self, omega_q: f64) -> Result<()> {
        let bad = |m: String| Err(Error::SimSettings(m));
        if !(self.dt > 0.0 && self.duration > 0.0) {
            return bad("dt and duration must be positive".into());
        }
        if self.n_traj == 0 || self.record_decimation == 0 {
            return bad("n_traj and record_decimation must be at least 1".into());
        }
        let f_q = omega_q / TWO_PI;
        if self.dt > 1.0 / (50.0 * f_q) {
            return bad(format!("dt = {} s exceeds 1/(50 f_q) = {:.4e} s", self.dt, 1.0 / (50.0 * f_q)));
        }
        if self.segment_len().is_none() {
            return bad(format!(
                "t_bw/(dt*record_decimation) = {} must be a power of two",
                self.t_bw / (self.dt * self.record_decimation as f64)
            ));
        }
        Ok(())
    }
}

/// Everything a run needs, resolved from a config.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub pendulum: PendulumParams,
    pub optics: OpticalParams,
    pub sn: SnModel,
    pub loop_model: LoopModel,
    pub sim: SimConfig,
}

impl Experiment {
    pub fn from_config(cfg: &Config, base_dir: Option<&Path>) -> Result<Self> {
        let servo = servo_from_settings(&cfg.servo, &cfg.pendulum)?;
        let noise = NoiseSet::from_config(cfg, base_dir)?;
        let loop_model = LoopModel {
            pendulum: cfg.pendulum.clone(),
            omega_sn: cfg.sn.omega_sn,
            servo,
            noise,
            dg_forcing_psd: cfg.run.dg_forcing_psd,
        };
        Ok(Self {
            pendulum: cfg.pendulum.clone(),
            optics: cfg.optics.clone(),
            sn: cfg.sn.clone(),
            loop_model,
            sim: SimConfig::from_config(cfg),
        })
    }
}

/// Servo discretized with the bilinear transform, run in direct form II transposed.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteServo {
    b: Vec<f64>,
    a: Vec<f64>,
    state: Vec<f64>,
}

fn binom_poly(k: usize, n: usize) -> Vec<f64> {
    // (1 - q)^k (1 + q)^(n-k), ascending in q = z⁻¹
    let mut p = vec![1.0];
    for _ in 0..k {
        p = crate::loops::poly_mul(&p, &[1.0, -1.0]);
    }
    for _ in k..n {
        p = crate::loops::poly_mul(&p, &[1.0, 1.0]);
    }
    p
}

impl DiscreteServo {
    pub fn new(tf: &RationalTf, dt: f64) -> Result<Self> {
        let n = tf.den.len() - 1;
        if tf.num.len() - 1 > n {
            return Err(Error::invalid("servo", "improper transfer function cannot be discretized"));
        }
        let k = 2.0 / dt;
        let map = |c: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n + 1];
            for (i, ci) in c.iter().enumerate() {
                let scale = ci * k.powi(i as i32);
                for (j, v) in binom_poly(i, n).iter().enumerate() {
                    out[j] += scale * v;
                }
            }
            out
        };
        let mut b = map(&tf.num);
        let mut a = map(&tf.den);
        let a0 = a[0];
        if a0 == 0.0 {
            return Err(Error::invalid("servo", "bilinear transform is singular at this dt"));
        }
        b.iter_mut().for_each(|v| *v /= a0);
        a.iter_mut().for_each(|v| *v /= a0);
        Ok(Self { state: vec![0.0; n], b, a })
    }

    pub fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.state.first().copied().unwrap_or(0.0);
        let n = self.state.len();
        for i in 0..n {
            let next = if i + 1 < n { self.state[i + 1] } else { 0.0 };
            self.state[i] = self.b[i + 1] * x - self.a[i + 1] * y + next;
        }
        y
    }
}

#[derive(Debug, Clone)]
enum Source {
    White(f64),
    Colored(Box<ShapingFilter>, f64),
}

impl Source {
    fn build(model: &PsdModel, cfg: &SimConfig) -> Result<(Self, f64)> {
        if model.is_white() || model.is_zero() {
            let s = model.eval(1.0);
            return Ok((Source::White((s / (2.0 * cfg.dt)).sqrt()), 0.0));
        }
        let f_lo = 0.5 / cfg.duration;
        let f_hi = 0.49 / cfg.dt;
        let filt = ShapingFilter::fit(model, f_lo, f_hi, cfg.dt)?;
        let r = filt.max_log10_residual;
        Ok((Source::Colored(Box::new(filt), (1.0 / (2.0 * cfg.dt)).sqrt()), r))
    }

    fn sample(&mut self, z: f64) -> f64 {
        match self {
            Source::White(s) => *s * z,
            Source::Colored(f, s) => f.step(*s * z),
        }
    }
}

/// Prepared per-run state shared by all trajectories.
#[derive(Debug, Clone)]
struct Plan {
    sources: Vec<(Channel, Source)>,
    servo: Option<DiscreteServo>,
    initial_sd: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub time: Vec<f64>,
    pub theta: Vec<f64>,
    /// Θ', rad/s.
    pub rate: Vec<f64>,
    /// `⟨Θ⟩` in quadratic mode, zero otherwise.
    pub theta_mean: Vec<f64>,
    pub readout: Vec<f64>,
    /// Applied control torque `-u`, N·m.
    pub control: Vec<f64>,
    /// SN torque along the trajectory (non-quadratic mode), N·m.
    pub sn_torque: Vec<f64>,
    /// Worst shaping-filter fit residual across colored channels, log10 units.
    pub shaping_residual: f64,
    /// `(Θ, Θ')` at `t = duration`, after the last step.
    pub final_state: (f64, f64),
}

/// `sqrt(∫ Ω^(2k) S dΩ/2π)` over a wide log span around `ω_q`. Used to seed
/// the steady-state initial condition; servo states start at zero.
fn stationary_sd(model: &LoopModel, k: i32) -> Result<f64> {
    let wq = model.omega_q();
    let q = model.pendulum.q_factor;
    let mut pts: Vec<f64> = vec![(wq * 1e-6).ln(), (wq * 1e4).ln()];
    for m in [-20.0, -5.0, -1.0, 0.0, 1.0, 5.0, 20.0] {
        let w = wq * (1.0 + m / q);
        if w > 0.0 {
            pts.push(w.ln());
        }
    }
    pts.sort_by(f64::total_cmp);
    let f = |u: f64| {
        let w = u.exp();
        model.branch_psd(w, Branch::Total).map(|v| v * w.powi(2 * k + 1)).unwrap_or(f64::NAN)
    };
    let est = quad::integrate_breakpoints(f, &pts, Tolerance { rel: 1e-6, abs: 0.0, max_intervals: 20000 })?;
    Ok((est.value / TWO_PI).max(0.0).sqrt())
}

fn plan(exp: &Experiment) -> Result<(Plan, f64)> {
    let cfg = &exp.sim;
    let lm = &exp.loop_model;
    cfg.validate(lm.omega_q().max(lm.pendulum.omega_m))?;
    if !cfg.allow_unstable && !lm.is_stable() {
        let worst = lm.stability().into_iter().map(|r| r.max_real_part).fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::UnstableLoop(format!("closed-loop pole with real part {worst:.3e} s⁻¹")));
    }
    if cfg.sn_mode == SnMode::Nonquadratic && exp.sn.sigma_theta.is_none() {
        return Err(Error::invalid("sn.sigma_theta", "required for non-quadratic simulation"));
    }
    let mut worst = 0.0f64;
    let mut sources = Vec::with_capacity(lm.noise.channels.len());
    for c in &lm.noise.channels {
        let (src, r) = Source::build(&c.model, cfg)?;
        worst = worst.max(r);
        sources.push((c.channel, src));
    }
    let servo = lm.servo.as_ref().map(|tf| DiscreteServo::new(tf, cfg.dt)).transpose()?;
    let initial_sd = match cfg.initial_state {
        InitialState::SteadyState => {
            let off = LoopModel { omega_sn: 0.0, ..lm.clone() };
            (stationary_sd(&off, 0)?, stationary_sd(&off, 1)?)
        }
        _ => (0.0, 0.0),
    };
    Ok((Plan { sources, servo, initial_sd }, worst))
}

#[derive(Debug, Clone, Copy)]
struct State {
    th: f64,
    v: f64,
}

/// One Heun step with constant external torque `tau_ext` and optional
/// state-dependent torque `extra(θ)`.
#[inline]
fn heun(s: State, w2: f64, gamma: f64, inv_i: f64, tau_ext: f64, dt: f64, extra: &dyn Fn(f64) -> f64) -> State {
    let acc = |th: f64, v: f64| -w2 * th - gamma * v + (tau_ext + extra(th)) * inv_i;
    let a0 = acc(s.th, s.v);
    let thp = s.th + dt * s.v;
    let vp = s.v + dt * a0;
    let a1 = acc(thp, vp);
    State { th: s.th + 0.5 * dt * (s.v + vp), v: s.v + 0.5 * dt * (a0 + a1) }
}

fn run_one(exp: &Experiment, plan: &Plan, index: u64) -> Result<TrajectoryRecord> {
    let cfg = &exp.sim;
    let p = &exp.pendulum;
    let lm = &exp.loop_model;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let mut sources = plan.sources.clone();
    let mut servo = plan.servo.clone();
    let mut servo_mean = plan.servo.clone();

    let quadratic = cfg.sn_mode == SnMode::QuadraticPreselection;
    let nonquad = cfg.sn_mode == SnMode::Nonquadratic;
    let w_sn = if quadratic { lm.omega_sn } else { 0.0 };
    let w_full = if quadratic { lm.omega_q() } else { p.omega_m };
    let (w2_full, w2_m, w2_sn) = (w_full * w_full, p.omega_m * p.omega_m, w_sn * w_sn);
    let gamma = p.gamma_m();
    let inv_i = 1.0 / p.inertia_rz;
    let sigma_theta = exp.sn.sigma_theta.unwrap_or(1.0);

    let z0: f64 = StandardNormal.sample(&mut rng);
    let z1: f64 = StandardNormal.sample(&mut rng);
    let mut s = match cfg.initial_state {
        InitialState::Zero => State { th: 0.0, v: 0.0 },
        InitialState::Theta0 => State { th: cfg.theta0, v: 0.0 },
        InitialState::SteadyState => State { th: plan.initial_sd.0 * z0, v: plan.initial_sd.1 * z1 },
    };
    let mut m = State { th: 0.0, v: 0.0 };

    let n_steps = cfg.n_steps();
    let dec = cfg.record_decimation;
    let n_rec = n_steps / dec;
    let mut rec = TrajectoryRecord {
        time: Vec::with_capacity(n_rec),
        theta: Vec::with_capacity(n_rec),
        rate: Vec::with_capacity(n_rec),
        theta_mean: Vec::with_capacity(n_rec),
        readout: Vec::with_capacity(n_rec),
        control: Vec::with_capacity(n_rec),
        sn_torque: if nonquad { Vec::with_capacity(n_rec) } else { Vec::new() },
        shaping_residual: 0.0,
        final_state: (0.0, 0.0),
    };
    let sn_torque = |th: f64| -> f64 {
        // sigma_theta > 0 was checked when the plan was built
        effective_sn_torque(th, sigma_theta, &exp.sn, p).map(|(_, t)| t).unwrap_or(f64::NAN)
    };
    let zero = |_: f64| 0.0;

    for k in 0..n_steps {
        let (mut tq_all, mut tq_cl, mut n_all, mut n_cl) = (0.0, 0.0, 0.0, 0.0);
        for (ch, src) in sources.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let x = src.sample(z);
            match (ch.is_sensor(), ch.is_quantum()) {
                (true, q) => {
                    n_all += x;
                    if !q {
                        n_cl += x;
                    }
                }
                (false, q) => {
                    tq_all += x;
                    if !q {
                        tq_cl += x;
                    }
                }
            }
        }
        let y = s.th + n_all;
        let u = servo.as_mut().map_or(0.0, |c| c.step(y));
        if k % dec == 0 {
            rec.time.push(k as f64 * cfg.dt);
            rec.theta.push(s.th);
            rec.rate.push(s.v);
            rec.theta_mean.push(m.th);
            rec.readout.push(y);
            rec.control.push(-u);
            if nonquad {
                rec.sn_torque.push(sn_torque(s.th));
            }
        }
        let coupling = w2_sn * m.th * p.inertia_rz;
        let next = if nonquad {
            heun(s, w2_full, gamma, inv_i, tq_all - u, cfg.dt, &sn_torque)
        } else {
            heun(s, w2_full, gamma, inv_i, tq_all - u + coupling, cfg.dt, &zero)
        };
        if quadratic {
            let um = servo_mean.as_mut().map_or(0.0, |c| c.step(m.th + n_cl));
            m = heun(m, w2_m, gamma, inv_i, tq_cl - um, cfg.dt, &zero);
        }
        if !(next.th.is_finite() && next.v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1, theta: next.th, rate: next.v });
        }
        s = next;
    }
    rec.final_state = (s.th, s.v);
    Ok(rec)
}

/// Simulate trajectory `index` (its own RNG stream under the run seed).
pub fn simulate_trajectory(exp: &Experiment, index: u64) -> Result<TrajectoryRecord> {
    let (plan, worst) = plan(exp)?;
    let mut r = run_one(exp, &plan, index)?;
    r.shaping_residual = worst;
    Ok(r)
}

/// All `n_traj` trajectories, in index order regardless of thread count.
pub fn simulate_ensemble(exp: &Experiment) -> Result<Vec<TrajectoryRecord>> {
    let (plan, worst) = plan(exp)?;
    let idx: Vec<u64> = (0..exp.sim.n_traj as u64).collect();
    let mut out = crate::snpotential::par_map(&idx, |&i| run_one(exp, &plan, i))?;
    out.iter_mut().for_each(|r| r.shaping_residual = worst);
    Ok(out)
}

/// Run `f` on each trajectory as it is produced, keeping only the results.
pub fn map_ensemble<U: Send, F>(exp: &Experiment, f: F) -> Result<Vec<U>>
where
    F: Fn(TrajectoryRecord) -> Result<U> + Sync + Send,
{
    let (plan, _) = plan(exp)?;
    let idx: Vec<u64> = (0..exp.sim.n_traj as u64).collect();
    crate::snpotential::par_map(&idx, |&i| f(run_one(exp, &plan, i)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Config;

    pub(crate) const DESK: &str = r#"
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
dt = 0.015625
duration = 64
t_bw = 8
[noise]
thermal = "viscous"
qrpn = "off"
"#;

    fn desk() -> Experiment {
        Experiment::from_config(&Config::parse(DESK).unwrap(), None).unwrap()
    }

    #[test]
    fn tustin_integrator_matches_trapezoid() {
        let tf = RationalTf::new(vec![1.0], vec![0.0, 1.0], "int").unwrap();
        let mut s = DiscreteServo::new(&tf, 0.5).unwrap();
        let ys: Vec<f64> = (0..4).map(|_| s.step(1.0)).collect();
        // y_k = y_{k-1} + dt/2 (x_k + x_{k-1})
        assert_eq!(ys, vec![0.25, 0.75, 1.25, 1.75]);
    }

    #[test]
    fn dt_guard_rejects_coarse_steps() {
        let mut e = desk();
        e.sim.dt = 0.1;
        assert!(matches!(simulate_trajectory(&e, 0), Err(Error::SimSettings(_))));
        e.sim.dt = 0.015625;
        e.sim.t_bw = 7.0;
        assert!(matches!(simulate_trajectory(&e, 0), Err(Error::SimSettings(_))));
    }

    #[test]
    fn same_seed_same_path() {
        let e = desk();
        assert_eq!(simulate_trajectory(&e, 3).unwrap(), simulate_trajectory(&e, 3).unwrap());
        assert_ne!(simulate_trajectory(&e, 3).unwrap().theta, simulate_trajectory(&e, 4).unwrap().theta);
    }

    #[test]
    fn quadratic_without_sn_equals_off() {
        let mut e = desk();
        e.loop_model.omega_sn = 0.0;
        let off = simulate_trajectory(&e, 1).unwrap();
        e.sim.sn_mode = SnMode::QuadraticPreselection;
        let quad = simulate_trajectory(&e, 1).unwrap();
        assert_eq!(off.theta, quad.theta);
    }

    #[test]
    fn free_decay_matches_damped_oscillator() {
        let mut e = desk();
        e.loop_model.noise = NoiseSet::new();
        e.sim.initial_state = InitialState::Theta0;
        e.sim.theta0 = 1e-3;
        e.sim.dt = 1.0 / 1024.0;
        e.sim.duration = 80.0;
        let r = simulate_trajectory(&e, 0).unwrap();
        let p = &e.pendulum;
        let g = p.gamma_m();
        let wd = (p.omega_m.powi(2) - g * g / 4.0).sqrt();
        // Three amplitude e-foldings fit in 80 s; compare against 1% of the envelope.
        assert!(g * 80.0 / 2.0 > 3.0);
        for (t, th) in r.time.iter().zip(&r.theta).step_by(97) {
            let env = 1e-3 * (-g * t / 2.0).exp();
            let exact = env * ((wd * t).cos() + g / (2.0 * wd) * (wd * t).sin());
            assert!((th - exact).abs() < 0.01 * env, "t={t}: {th} vs {exact}");
        }
    }

    #[test]
    fn nonquadratic_needs_sigma_theta() {
        let mut e = desk();
        e.sim.sn_mode = SnMode::Nonquadratic;
        e.sn.sigma_theta = None;
        assert!(simulate_trajectory(&e, 0).is_err());
    }
}
