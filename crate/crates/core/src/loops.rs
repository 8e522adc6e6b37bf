//! Servo transfer functions and closed-loop spectra under pre-selection.
//!
//! The response function uses the conventional sign,
//! `χ(Ω) = 1/(I(ω² - Ω² - iγΩ))`, which is the complex conjugate of the plant
//! `1/(I(s² + γs + ω²))` at `s = iΩ`. Servo transfer functions are rational in
//! the Laplace variable, so all loop algebra uses the plant at `s = iΩ`; the
//! two agree in every magnitude.

use num_complex::Complex64;

use crate::consts::TWO_PI;
use crate::noise::NoiseSet;
use crate::params::{Observable, PendulumParams, ServoKind, ServoSettings};
use crate::quad::{self, Tolerance};
use crate::snpotential::omega_q;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RationalTf {
    /// Ascending powers of s.
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub label: String,
}

fn trim(mut c: Vec<f64>) -> Vec<f64> {
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    c
}

fn horner(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * s + k)
}

impl RationalTf {
    pub fn new(num: Vec<f64>, den: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let den = trim(den);
        if den.iter().all(|c| *c == 0.0) {
            return Err(Error::invalid("den", "denominator coefficients are all zero"));
        }
        if num.is_empty() {
            return Err(Error::invalid("num", "empty numerator"));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::invalid("tf", "non-finite coefficient"));
        }
        Ok(Self { num: trim(num), den, label: label.into() })
    }

    /// `(s + 2π·1e-3)² / (s (s + 2π))`, unit gain.
    pub fn catching() -> Self {
        let z = TWO_PI * 1e-3;
        Self { num: vec![z * z, 2.0 * z, 1.0], den: vec![0.0, TWO_PI, 1.0], label: "catching".into() }
    }

    /// `(ε s² + 4π·1e-3 s + 4π²·1e-6) / (s (s + 2π))`, unit gain.
    pub fn quadratic_upgrade(epsilon: f64) -> Self {
        let pi = std::f64::consts::PI;
        Self {
            num: vec![4.0 * pi * pi * 1e-6, 4.0 * pi * 1e-3, epsilon],
            den: vec![0.0, TWO_PI, 1.0],
            label: format!("quadratic_upgrade(eps={epsilon})"),
        }
    }

    /// `(ε s² + 4π·1e-2 s + 4π²·1e-4) / (s (s + 20π))`, unit gain.
    pub fn nonquadratic_upgrade(epsilon: f64) -> Self {
        let pi = std::f64::consts::PI;
        Self {
            num: vec![4.0 * pi * pi * 1e-4, 4.0 * pi * 1e-2, epsilon],
            den: vec![0.0, 20.0 * pi, 1.0],
            label: format!("nonquadratic_upgrade(eps={epsilon})"),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { num: self.num.iter().map(|c| c * k).collect(), den: self.den.clone(), label: self.label.clone() }
    }

    pub fn eval_s(&self, s: Complex64) -> Complex64 {
        horner(&self.num, s) / horner(&self.den, s)
    }

    pub fn has_pole_at_origin(&self) -> bool {
        self.den[0] == 0.0
    }
}

/// `C(iΩ)`.
pub fn eval_tf(tf: &RationalTf, omega: f64) -> Result<Complex64> {
    if omega == 0.0 && tf.has_pole_at_origin() {
        return Err(Error::PoleAtOrigin(tf.label.clone()));
    }
    Ok(tf.eval_s(Complex64::new(0.0, omega)))
}

/// Mechanical response `1/(I(ω_eig² - Ω² - iγΩ))` with γ = ω_m/Q.
pub fn mech_response(p: &PendulumParams, omega_eig: f64, omega: f64) -> Complex64 {
    1.0 / (p.inertia_rz * Complex64::new(omega_eig * omega_eig - omega * omega, -p.gamma_m() * omega))
}

/// Plant at s = iΩ, the conjugate of [`mech_response`].
pub fn plant(p: &PendulumParams, omega_eig: f64, omega: f64) -> Complex64 {
    mech_response(p, omega_eig, omega).conj()
}

/// Gain making `|A0·C_template·χ_m| = 1` at `omega_ugf`.
pub fn calibrate_gain(template: &RationalTf, p: &PendulumParams, omega_ugf: f64) -> Result<f64> {
    let h = eval_tf(template, omega_ugf)? * mech_response(p, p.omega_m, omega_ugf);
    let m = h.norm();
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::invalid("servo", format!("template response at {omega_ugf} rad/s is {m}")));
    }
    Ok(1.0 / m)
}

/// Servo from config settings; calibrates A0 at Ω_ugf when no gain is given.
pub fn servo_from_settings(s: &ServoSettings, p: &PendulumParams) -> Result<Option<RationalTf>> {
    let template = match s.kind {
        ServoKind::None => return Ok(None),
        ServoKind::Catching => RationalTf::catching(),
        ServoKind::QuadraticUpgrade => RationalTf::quadratic_upgrade(s.epsilon),
        ServoKind::NonquadraticUpgrade => RationalTf::nonquadratic_upgrade(s.epsilon),
        ServoKind::Custom => RationalTf::new(s.num.clone(), s.den.clone(), "custom")?,
    };
    let a0 = match (s.a0, s.omega_ugf) {
        (Some(a), _) => a,
        (None, Some(w)) => calibrate_gain(&template, p, w)?,
        (None, None) if s.kind == ServoKind::Custom => 1.0,
        (None, None) => return Err(Error::invalid("servo", "needs a0 or omega_ugf")),
    };
    Ok(Some(template.scaled(a0 * s.gain_scale)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopModel {
    pub pendulum: PendulumParams,
    pub omega_sn: f64,
    pub servo: Option<RationalTf>,
    pub noise: NoiseSet,
    /// One-sided PSD of the expectation-value forcing ⟨B⟩ (N²m²/Hz).
    pub dg_forcing_psd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Quantum,
    Classical,
    Dg,
    Total,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub branch: &'static str,
    pub stable: bool,
    pub max_real_part: f64,
    pub poles: Vec<Complex64>,
}

/// Per-frequency branch PSDs, rad²/Hz, plus torque-referred copies.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpectrum {
    pub omega: Vec<f64>,
    pub quantum: Vec<f64>,
    pub classical: Vec<f64>,
    pub dg: Vec<f64>,
    pub total: Vec<f64>,
    /// Branch PSDs divided by the classical closed-loop torque-to-angle gain
    /// `|χ_m/(1+Cχ_m)|²` (N²m²/Hz).
    pub quantum_torque: Vec<f64>,
    pub classical_torque: Vec<f64>,
    pub dg_torque: Vec<f64>,
    pub total_torque: Vec<f64>,
    pub observable: Observable,
    pub include_dg: bool,
    pub stability: Vec<StabilityReport>,
}

impl LoopSpectrum {
    pub fn freq_hz(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w / TWO_PI).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    quantum: f64,
    classical: f64,
    dg: f64,
    torque_gain: f64,
}

impl LoopModel {
    pub fn omega_q(&self) -> f64 {
        omega_q(self.pendulum.omega_m, self.omega_sn)
    }

    pub fn chi_m(&self, omega: f64) -> Complex64 {
        mech_response(&self.pendulum, self.pendulum.omega_m, omega)
    }

    pub fn chi_q(&self, omega: f64) -> Complex64 {
        mech_response(&self.pendulum, self.omega_q(), omega)
    }

    fn servo_at(&self, omega: f64) -> Result<Complex64> {
        match &self.servo {
            Some(c) => eval_tf(c, omega),
            None => Ok(Complex64::new(0.0, 0.0)),
        }
    }

    fn point(&self, omega: f64, observable: Observable) -> Result<Point> {
        if !(omega > 0.0) {
            return Err(Error::invalid("grid", "frequencies must be positive"));
        }
        let c = self.servo_at(omega)?;
        let pm = plant(&self.pendulum, self.pendulum.omega_m, omega);
        let pq = plant(&self.pendulum, self.omega_q(), omega);
        let (hm, hq) = (c * pm, c * pq);
        let (dm, dq) = ((1.0 + hm).norm_sqr(), (1.0 + hq).norm_sqr());
        let n = &self.noise;
        let (sensor_q, sensor_m) = match observable {
            Observable::Angle => (hq.norm_sqr() * n.sensor_zp(omega), hm.norm_sqr() * n.sensor_cl(omega)),
            Observable::Readout => (n.sensor_zp(omega), n.sensor_cl(omega)),
        };
        let quantum = (pq.norm_sqr() * n.torque_quantum(omega) + sensor_q) / dq;
        let classical = (pm.norm_sqr() * n.torque_classical(omega) + sensor_m) / dm;
        let delta_g = pm / (1.0 + hm) - pq / (1.0 + hq);
        let dg = delta_g.norm_sqr() * self.dg_forcing_psd;
        Ok(Point { quantum, classical, dg, torque_gain: pm.norm_sqr() / dm })
    }

    /// Closed-loop PSD on `grid` (rad/s, ascending).
    pub fn spectrum(&self, grid: &[f64], observable: Observable, include_dg: bool) -> Result<LoopSpectrum> {
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid", "must be strictly ascending"));
        }
        let mut out = LoopSpectrum {
            omega: grid.to_vec(),
            quantum: Vec::with_capacity(grid.len()),
            classical: Vec::with_capacity(grid.len()),
            dg: Vec::with_capacity(grid.len()),
            total: Vec::with_capacity(grid.len()),
            quantum_torque: Vec::with_capacity(grid.len()),
            classical_torque: Vec::with_capacity(grid.len()),
            dg_torque: Vec::with_capacity(grid.len()),
            total_torque: Vec::with_capacity(grid.len()),
            observable,
            include_dg,
            stability: self.stability(),
        };
        for &w in grid {
            let p = self.point(w, observable)?;
            let total = p.quantum + p.classical + if include_dg { p.dg } else { 0.0 };
            out.quantum.push(p.quantum);
            out.classical.push(p.classical);
            out.dg.push(p.dg);
            out.total.push(total);
            out.quantum_torque.push(p.quantum / p.torque_gain);
            out.classical_torque.push(p.classical / p.torque_gain);
            out.dg_torque.push(p.dg / p.torque_gain);
            out.total_torque.push(total / p.torque_gain);
        }
        Ok(out)
    }

    /// Closed-loop poles of each branch: roots of `den_C·I(s² + γs + ω²) + num_C`.
    pub fn stability(&self) -> Vec<StabilityReport> {
        let p = &self.pendulum;
        let mut out = Vec::new();
        for (name, w) in [("classical", p.omega_m), ("quantum", self.omega_q())] {
            let mech = [p.inertia_rz * w * w, p.inertia_rz * p.gamma_m(), p.inertia_rz];
            let poly = match &self.servo {
                Some(c) => {
                    let mut prod = poly_mul(&c.den, &mech);
                    for (i, k) in c.num.iter().enumerate() {
                        if i >= prod.len() {
                            prod.resize(i + 1, 0.0);
                        }
                        prod[i] += k;
                    }
                    trim(prod)
                }
                None => mech.to_vec(),
            };
            let poles = poly_roots(&poly);
            let max_re = poles.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            out.push(StabilityReport { branch: name, stable: max_re < 0.0, max_real_part: max_re, poles });
        }
        out
    }

    pub fn is_stable(&self) -> bool {
        self.stability().iter().all(|r| r.stable)
    }

    /// Angle PSD of one branch at `omega`, rad²/Hz.
    pub fn branch_psd(&self, omega: f64, branch: Branch) -> Result<f64> {
        let p = self.point(omega, Observable::Angle)?;
        Ok(match branch {
            Branch::Quantum => p.quantum,
            Branch::Classical => p.classical,
            Branch::Dg => p.dg,
            Branch::Total => p.quantum + p.classical,
        })
    }

    /// `ΔΘ = sqrt(∫ S_ΘΘ dΩ/2π)` for one branch over the span of `grid`.
    ///
    /// Grid points, resonances and closed-loop pole frequencies are all used as
    /// quadrature breakpoints so narrow peaks cannot be stepped over.
    pub fn residual_uncertainty(&self, branch: Branch, grid: &[f64]) -> Result<Uncertainty> {
        let wq = self.omega_q();
        let (lo, hi) = match (grid.first(), grid.last()) {
            (Some(a), Some(b)) if grid.len() >= 2 => (*a, *b),
            _ => return Err(Error::GridTooNarrow("need at least two grid points".into())),
        };
        if lo > wq / 100.0 || hi < 100.0 * wq {
            return Err(Error::GridTooNarrow(format!(
                "grid [{lo:.3e}, {hi:.3e}] rad/s must cover [{:.3e}, {:.3e}]",
                wq / 100.0,
                100.0 * wq
            )));
        }
        let mut pts: Vec<f64> = grid.iter().map(|w| w.ln()).collect();
        let q = self.pendulum.q_factor;
        let mut marks = vec![self.pendulum.omega_m, wq];
        for r in self.stability() {
            marks.extend(r.poles.iter().filter(|z| z.im > 0.0).map(|z| z.im));
        }
        for m in marks {
            for k in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0, 1000.0] {
                for sgn in [-1.0, 1.0] {
                    let w = m * (1.0 + sgn * k / q);
                    if w > lo && w < hi {
                        pts.push(w.ln());
                    }
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();

        // Decay check on S·Ω, the integrand per unit ln Ω.
        let mut peak: f64 = 0.0;
        for &u in &pts {
            let w = u.exp();
            peak = peak.max(self.branch_psd(w, branch)? * w);
        }
        if peak == 0.0 {
            return Ok(Uncertainty { delta_theta: 0.0, delta_x: 0.0 });
        }
        let end_lo = self.branch_psd(lo, branch)? * lo;
        let end_hi = self.branch_psd(hi, branch)? * hi;
        if end_lo > 1e-6 * peak || end_hi > 1e-6 * peak {
            return Err(Error::GridTooNarrow(format!(
                "integrand not decayed: ends at {:.2e} and {:.2e} of peak",
                end_lo / peak,
                end_hi / peak
            )));
        }
        let f = |u: f64| {
            let w = u.exp();
            self.branch_psd(w, branch).map(|v| v * w).unwrap_or(f64::NAN)
        };
        let est = quad::integrate_breakpoints(f, &pts, Tolerance { rel: 1e-8, abs: 0.0, max_intervals: 20000 })?;
        let var = est.value / TWO_PI;
        let delta_theta = var.max(0.0).sqrt();
        Ok(Uncertainty { delta_theta, delta_x: delta_theta * self.pendulum.arm_length })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uncertainty {
    pub delta_theta: f64,
    pub delta_x: f64,
}

/// Log-spaced angular-frequency grid from Hz bounds.
pub fn log_grid_hz(f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (f_min.ln(), f_max.ln());
    (0..n).map(|i| TWO_PI * (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp()).collect()
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Roots of an ascending-coefficient polynomial (Durand–Kerner on a rescaled variable, Newton-polished).
pub fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    let c = trim(c.to_vec());
    let n = c.len() - 1;
    if n == 0 {
        return vec![];
    }
    // Factor out roots at the origin exactly.
    let zeros = c.iter().take_while(|x| **x == 0.0).count();
    let c = &c[zeros..];
    let m = c.len() - 1;
    let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
    if m == 0 {
        return roots;
    }
    // Scale s = k z so the monic polynomial in z has |constant| = 1.
    let lead = c[m];
    let k = (c[0] / lead).abs().powf(1.0 / m as f64);
    let a: Vec<f64> = (0..=m).map(|i| c[i] / lead * k.powi(i as i32 - m as i32)).collect();
    let eval = |z: Complex64| horner(&a, z);
    let mut z: Vec<Complex64> = (0..m).map(|i| Complex64::from_polar(1.0, 0.4 + TWO_PI * i as f64 / m as f64)).collect();
    for _ in 0..2000 {
        let mut delta: f64 = 0.0;
        for i in 0..m {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..m {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / den;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    let da: Vec<f64> = (1..=m).map(|i| a[i] * i as f64).collect();
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let d = horner(&da, *zi);
            if d.norm() > 0.0 {
                *zi -= eval(*zi) / d;
            }
        }
    }
    roots.extend(z.into_iter().map(|zi| zi * k));
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{Channel, PsdModel};

    fn table1() -> PendulumParams {
        PendulumParams::new(1.0, TWO_PI * 0.6e-3, 5e5, 1.0, 1.0, 300.0).unwrap()
    }

    #[test]
    fn integrator_at_unit_frequency() {
        let tf = RationalTf::new(vec![1.0], vec![0.0, 1.0], "1/s").unwrap();
        let v = eval_tf(&tf, 1.0).unwrap();
        assert!((v - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!(matches!(eval_tf(&tf, 0.0), Err(Error::PoleAtOrigin(_))));
    }

    #[test]
    fn rejects_zero_denominator() {
        assert!(RationalTf::new(vec![1.0], vec![0.0, 0.0], "bad").is_err());
    }

    #[test]
    fn response_limits() {
        let p = PendulumParams::new(0.14, TWO_PI * 6e-4, 5e4, 0.6, 1.0, 300.0).unwrap();
        let w = p.omega_m;
        let on = mech_response(&p, w, w);
        assert!(on.re.abs() < 1e-12 * on.im.abs());
        assert!((on.norm() - p.q_factor / (p.inertia_rz * w * w)).abs() < 1e-9 * on.norm());
        let far = mech_response(&p, w, 100.0 * w).norm();
        assert!((far * p.inertia_rz * (100.0 * w).powi(2) - 1.0).abs() < 0.01);
    }

    #[test]
    fn calibrated_gain_gives_unit_loop_gain_and_scales_with_inertia() {
        let p = PendulumParams::new(0.14, TWO_PI * 6e-4, 5e4, 0.6, 1.0, 300.0).unwrap();
        let wu = TWO_PI * 7e-3;
        let a0 = calibrate_gain(&RationalTf::catching(), &p, wu).unwrap();
        let h = eval_tf(&RationalTf::catching().scaled(a0), wu).unwrap() * mech_response(&p, p.omega_m, wu);
        assert!((h.norm() - 1.0).abs() < 1e-12);
        let p2 = PendulumParams { inertia_rz: 0.28, ..p };
        assert!((calibrate_gain(&RationalTf::catching(), &p2, wu).unwrap() / a0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn roots_of_known_polynomial() {
        // (s + 1)(s + 2)(s² + 0.002 s + 1e-6 + 4e-6)
        let p = poly_mul(&poly_mul(&[1.0, 1.0], &[2.0, 1.0]), &[5e-6, 0.002, 1.0]);
        let mut r = poly_roots(&p);
        r.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((r[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-9);
        assert!((r[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-9);
        assert!((r[2].re + 1e-3).abs() < 1e-9 && (r[2].im.abs() - 2e-3).abs() < 1e-9);
    }

    fn loop_with(noise: NoiseSet, servo: Option<RationalTf>, omega_sn: f64) -> LoopModel {
        LoopModel { pendulum: table1(), omega_sn, servo, noise, dg_forcing_psd: 0.0 }
    }

    #[test]
    fn sensor_only_loop_matches_loop_algebra() {
        let noise = NoiseSet::new().with(Channel::SensorCl, PsdModel::White(2.0));
        let servo = RationalTf::quadratic_upgrade(0.1).scaled(0.375);
        let l = loop_with(noise, Some(servo.clone()), 0.0);
        let grid = log_grid_hz(1e-4, 1e-1, 50);
        let angle = l.spectrum(&grid, Observable::Angle, false).unwrap();
        let readout = l.spectrum(&grid, Observable::Readout, false).unwrap();
        for (i, &w) in grid.iter().enumerate() {
            let h = eval_tf(&servo, w).unwrap() * plant(&l.pendulum, l.pendulum.omega_m, w);
            let d = (1.0 + h).norm_sqr();
            assert!((angle.total[i] - 2.0 * h.norm_sqr() / d).abs() < 1e-12 * angle.total[i]);
            assert!((readout.total[i] - 2.0 / d).abs() < 1e-12 * readout.total[i]);
        }
    }

    #[test]
    fn open_loop_limit() {
        let noise = NoiseSet::new().with(Channel::Qrpn, PsdModel::White(4e-28)).with(Channel::ThermalCl, PsdModel::White(1e-28));
        let weak = loop_with(noise.clone(), Some(RationalTf::quadratic_upgrade(0.1).scaled(0.375e-20)), TWO_PI * 2.53e-3);
        let open = loop_with(noise, None, TWO_PI * 2.53e-3);
        let grid = log_grid_hz(1e-5, 1e-1, 200);
        let a = weak.spectrum(&grid, Observable::Angle, false).unwrap();
        let b = open.spectrum(&grid, Observable::Angle, false).unwrap();
        for i in 0..grid.len() {
            assert!((a.total[i] / b.total[i] - 1.0).abs() < 1e-10);
        }
    }
}
