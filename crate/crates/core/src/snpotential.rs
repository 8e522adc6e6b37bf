//! Schrödinger-Newton potentials.
//!
//! The self-gravity integral of a Gaussian mass cloud against `1/r` is
//! evaluated through the identity `1/r = (2/√π) ∫₀^∞ exp(-t² r²) dt`. Averaging
//! `exp(-t² κ (x - ξ)²)` over a Gaussian `ξ` of variance `v` is closed form,
//! `(1 + 2vκt²)^(-1/2) · exp(-κ t² x² / (1 + 2vκt²))`, so the 3D integral
//! collapses to a smooth 1D integral in `t`. The `1/r` singularity is absorbed
//! analytically; the remaining integrand is bounded by `2/√π`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::consts::G;
use crate::params::{NuisanceMode, PendulumParams, SnModel};
use crate::quad::{self, Tolerance};
use crate::{Error, Result};

pub use crate::params::sn_frequency_from;

/// ω_SN from the material inputs of `model`.
pub fn sn_frequency(model: &SnModel) -> Result<f64> {
    if !(model.atomic_mass > 0.0) || !(model.delta_x_int > 0.0) {
        return Err(Error::invalid("sn", "atomic_mass and delta_x_int must be positive"));
    }
    Ok(sn_frequency_from(model.atomic_mass, model.delta_x_int))
}

/// Quantum-branch eigenfrequency sqrt(ω_m² + ω_SN²).
pub fn omega_q(omega_m: f64, omega_sn: f64) -> f64 {
    omega_m.hypot(omega_sn)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    pub rel_tol: f64,
    pub max_intervals: usize,
    pub nuisance: NuisanceMode,
    /// Draws for the sampled nuisance average (cross-check path).
    pub n_nuisance: usize,
    pub seed: u64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-4, max_intervals: 4000, nuisance: NuisanceMode::Marginalize, n_nuisance: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadValue {
    pub value: f64,
    /// Absolute error estimate.
    pub error: f64,
}

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Offsets and smearing variances along (x, y, z) in scaled units.
#[derive(Debug, Clone, Copy)]
struct Cloud {
    offset: [f64; 3],
    var: [f64; 3],
    kappa: [f64; 3],
}

impl Cloud {
    fn new(x: f64, y: f64, z: f64, c1: f64, c2: f64, transverse_var: f64) -> Self {
        Self { offset: [x, y, z], var: [1.0, transverse_var, transverse_var], kappa: [1.0, 1.0 / (c1 * c1), 1.0 / (c2 * c2)] }
    }

    fn kernel(&self, t: f64) -> f64 {
        let t2 = t * t;
        let mut pre = 1.0;
        let mut expo = 0.0;
        for k in 0..3 {
            let d = 1.0 + 2.0 * self.var[k] * self.kappa[k] * t2;
            pre *= d;
            expo += self.kappa[k] * t2 * self.offset[k] * self.offset[k] / d;
        }
        TWO_OVER_SQRT_PI * (-expo).exp() / pre.sqrt()
    }

    /// Derivative of `kernel` with respect to the x offset.
    fn kernel_dx(&self, t: f64) -> f64 {
        let t2 = t * t;
        let d = 1.0 + 2.0 * self.var[0] * self.kappa[0] * t2;
        self.kernel(t) * (-2.0 * self.kappa[0] * t2 * self.offset[0] / d)
    }

    /// Large-t tail: kernel ≈ K / t³.
    fn tail_coeff(&self) -> f64 {
        let p: f64 = (0..3).map(|k| 2.0 * self.var[k] * self.kappa[k]).product();
        TWO_OVER_SQRT_PI / p.sqrt()
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0];
        for k in 0..3 {
            let knee = 1.0 / (2.0 * self.var[k] * self.kappa[k]).sqrt();
            if knee > 1.0 {
                pts.push(knee.ln());
            }
            let o = self.offset[k].abs() * self.kappa[k].sqrt();
            if o > 0.0 && o < 1.0 {
                pts.push((1.0 / o).ln());
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    fn integrate(&self, deriv: bool, quad_settings: &QuadSettings) -> Result<QuadValue> {
        let tol = Tolerance { rel: quad_settings.rel_tol * 1e-2, abs: 1e-300, max_intervals: quad_settings.max_intervals };
        let f = |t: f64| if deriv { self.kernel_dx(t) } else { self.kernel(t) };
        let head = quad::integrate(f, 0.0, 1.0, tol)?;
        let max_scale = self.kappa.iter().map(|k| 1.0 / k.sqrt()).fold(1.0, f64::max);
        let t_max = 1e8 * max_scale;
        let mut pts = self.breakpoints();
        pts.push(t_max.ln());
        let body = quad::integrate_breakpoints(|s: f64| { let t = s.exp(); f(t) * t }, &pts, tol)?;
        let tail = if deriv {
            // d/dx of the t⁻³ tail vanishes at leading order.
            0.0
        } else {
            self.tail_coeff() / (2.0 * t_max * t_max)
        };
        let value = head.value + body.value + tail;
        let error = head.error + body.error + tail.abs() * 1e-3;
        if !value.is_finite() {
            return Err(Error::QuadratureNotConverged { achieved: f64::INFINITY, requested: quad_settings.rel_tol });
        }
        Ok(QuadValue { value, error })
    }
}

fn check_c(c1: f64, c2: f64) -> Result<()> {
    if !(c1 >= 1.0 && c2 >= 1.0) {
        return Err(Error::invalid("c1/c2", format!("must be >= 1, got ({c1}, {c2})")));
    }
    Ok(())
}

fn transverse_var(mode: NuisanceMode) -> f64 {
    match mode {
        // unit-variance nuisance offset plus unit-variance smearing
        NuisanceMode::Marginalize => 2.0,
        NuisanceMode::Slice => 1.0,
    }
}

/// Self-gravity integral `I(x̃)` for the configured nuisance treatment.
///
/// Marginalize averages exactly over unit-variance transverse offsets
/// (the Gaussian average is analytic in this representation); slice fixes
/// them at zero.
pub fn self_gravity_integral(x_tilde: f64, c1: f64, c2: f64, quad_settings: &QuadSettings) -> Result<QuadValue> {
    check_c(c1, c2)?;
    Cloud::new(x_tilde, 0.0, 0.0, c1, c2, transverse_var(quad_settings.nuisance)).integrate(false, quad_settings)
}

/// `dI/dx̃`, differentiated analytically under the integral.
pub fn self_gravity_gradient(x_tilde: f64, c1: f64, c2: f64, quad_settings: &QuadSettings) -> Result<QuadValue> {
    check_c(c1, c2)?;
    Cloud::new(x_tilde, 0.0, 0.0, c1, c2, transverse_var(quad_settings.nuisance)).integrate(true, quad_settings)
}

/// `I` at explicit transverse offsets (ŷ, ẑ) in their own scaled units.
pub fn self_gravity_at(x_tilde: f64, y_hat: f64, z_hat: f64, c1: f64, c2: f64, quad_settings: &QuadSettings) -> Result<QuadValue> {
    check_c(c1, c2)?;
    Cloud::new(x_tilde, y_hat, z_hat, c1, c2, 1.0).integrate(false, quad_settings)
}

/// Sampled nuisance average over `n` draws of (ŷ, ẑ); error is 3 standard errors.
///
/// Draw `i` comes from batch `i / 16` whose stream is seeded by (seed, batch),
/// so a run with `2n` draws extends the run with `n`.
pub fn self_gravity_sampled(x_tilde: f64, c1: f64, c2: f64, n: usize, seed: u64, quad_settings: &QuadSettings) -> Result<QuadValue> {
    check_c(c1, c2)?;
    if n < 2 {
        return Err(Error::invalid("n_nuisance", "need at least 2 draws"));
    }
    let mut values = Vec::with_capacity(n);
    let mut batch_rng = None;
    for i in 0..n {
        if i % 16 == 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((i / 16) as u64);
            batch_rng = Some(rng);
        }
        let rng = batch_rng.as_mut().expect("seeded above");
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        values.push(self_gravity_at(x_tilde, y, z, c1, c2, quad_settings)?.value);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(QuadValue { value: mean, error: 3.0 * (var / n as f64).sqrt() })
}

/// Evaluate `I` on a grid, in parallel when enabled. Order of results follows `grid`.
pub fn self_gravity_curve(grid: &[f64], c1: f64, c2: f64, quad_settings: &QuadSettings) -> Result<Vec<QuadValue>> {
    par_map(grid, |&x| self_gravity_integral(x, c1, c2, quad_settings))
}

pub(crate) fn par_map<T: Sync, U: Send, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub a: f64,
    pub b1: f64,
    /// max |fit - data| / max |data| over the fit window.
    pub max_rel_residual: f64,
    pub iterations: usize,
}

/// Least-squares fit of `A exp(-x²/(2 b1))` on the points with `|x| <= window`.
///
/// Plain (unweighted) residuals on linear values, minimized by damped
/// Gauss-Newton in (A, b1).
pub fn fit_gaussian_potential(x: &[f64], y: &[f64], window: f64) -> Result<GaussianFit> {
    if x.len() != y.len() {
        return Err(Error::invalid("curve", "abscissa and values differ in length"));
    }
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(xi, _)| xi.abs() <= window).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 21 {
        return Err(Error::invalid("curve", format!("need >= 21 points in the fit window, got {}", pts.len())));
    }
    let ymax = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let ymin = pts.iter().map(|p| p.1.abs()).fold(f64::INFINITY, f64::min);
    if ymax == 0.0 || (ymax - ymin) <= 1e-12 * ymax {
        return Err(Error::Fit("degenerate curve: all values equal".into()));
    }
    // Start from the peak and the second moment.
    let a0 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (m0, m2) = pts.iter().fold((0.0, 0.0), |(s0, s2), (xi, yi)| (s0 + yi, s2 + yi * xi * xi));
    let mut a = a0;
    let mut b = if m0 > 0.0 && m2 > 0.0 { m2 / m0 } else { window * window / 4.0 };

    let cost = |a: f64, b: f64| pts.iter().map(|(xi, yi)| (a * (-xi * xi / (2.0 * b)).exp() - yi).powi(2)).sum::<f64>();
    let mut c = cost(a, b);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 500 {
        iterations += 1;
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (xi, yi) in &pts {
            let e = (-xi * xi / (2.0 * b)).exp();
            let r = a * e - yi;
            let da = e;
            let db = a * e * xi * xi / (2.0 * b * b);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let m11 = jaa * (1.0 + lambda);
            let m22 = jbb * (1.0 + lambda);
            let det = m11 * m22 - jab * jab;
            if det == 0.0 {
                lambda *= 10.0;
                continue;
            }
            let sa = -(m22 * ga - jab * gb) / det;
            let sb = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + sa, b + sb);
            if nb > 0.0 {
                let nc = cost(na, nb);
                if nc <= c {
                    let small = sa.abs() <= 1e-14 * a.abs() && sb.abs() <= 1e-14 * b.abs();
                    a = na;
                    b = nb;
                    let improved = c - nc;
                    c = nc;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if small || improved <= 1e-30 * c.max(f64::MIN_POSITIVE) {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: at a minimum to working precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged || !a.is_finite() || !b.is_finite() {
        return Err(Error::Fit(format!("no convergence after {iterations} iterations")));
    }
    let max_rel_residual =
        pts.iter().map(|(xi, yi)| (a * (-xi * xi / (2.0 * b)).exp() - yi).abs()).fold(0.0, f64::max) / ymax;
    Ok(GaussianFit { a, b1: b, max_rel_residual, iterations })
}

/// Harmonic-mean radius `n / Σ 1/r_i`.
pub fn geometric_factor(radii: &[f64]) -> Result<f64> {
    if radii.is_empty() {
        return Err(Error::invalid("radii", "empty list"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::invalid("radii", format!("non-positive radius {r}")));
    }
    Ok(radii.len() as f64 / radii.iter().map(|r| 1.0 / r).sum::<f64>())
}

/// Distances from the rotation axis of points filling a rectangular bar
/// centred on the axis (lengths in m), on an `n`³ midpoint grid.
pub fn bar_radii(length: f64, width: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = -length / 2.0 + (i as f64 + 0.5) * length / n as f64;
        for j in 0..n {
            let y = -width / 2.0 + (j as f64 + 0.5) * width / n as f64;
            out.push(x.hypot(y));
        }
    }
    out
}

/// Non-quadratic SN energy and torque at angle `theta`.
pub fn effective_sn_torque(theta: f64, sigma_theta: f64, model: &SnModel, pendulum: &PendulumParams) -> Result<(f64, f64)> {
    if !(sigma_theta > 0.0) {
        return Err(Error::invalid("sigma_theta", "must be positive"));
    }
    let e0 = model.fit_a * G * pendulum.mass * model.atomic_mass / (model.r_tilde * sigma_theta);
    let s2 = model.fit_b1 * sigma_theta * sigma_theta;
    let g = (-theta * theta / (2.0 * s2)).exp();
    Ok((-e0 * g, -e0 * theta / s2 * g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    SelfOnly,
    WithMutual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMethod {
    AnalyticUnderIntegral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCurve {
    pub abscissa: Vec<f64>,
    /// J
    pub potential: Vec<f64>,
    /// N (or N·m for angle curves)
    pub force: Vec<f64>,
    pub regime: Regime,
    pub derivative: DerivativeMethod,
    pub nuisance: NuisanceMode,
    /// Largest absolute quadrature error estimate over the grid, in J.
    pub max_quad_error: f64,
}

/// Per-atom SN energy and force along a 1D chain of identical atoms.
///
/// `grid` holds displacements in metres; the chain has `neighbors` atoms on
/// each side at multiples of `model.lattice_const`. `sigma_x` is taken from
/// the model.
pub fn mutual_gravity_curve(grid: &[f64], model: &SnModel, neighbors: usize, quad_settings: &QuadSettings) -> Result<PotentialCurve> {
    let sigma_x = model.sigma_x.ok_or_else(|| Error::invalid("sigma_x", "required for mutual-gravity curves"))?;
    check_c(model.c1, model.c2)?;
    let a_tilde = model.lattice_const / sigma_x;
    let m = model.atomic_mass;
    let e_scale = G * m * m / sigma_x;
    let f_scale = G * m * m / (sigma_x * sigma_x);
    let tv = transverse_var(quad_settings.nuisance);
    let offsets: Vec<f64> = std::iter::once(0.0)
        .chain((1..=neighbors).flat_map(|k| [k as f64 * a_tilde, -(k as f64) * a_tilde]))
        .collect();
    let rows = par_map(grid, |&x| {
        let xt = x / sigma_x;
        let (mut e, mut f, mut err) = (0.0, 0.0, 0.0);
        for off in &offsets {
            let cloud = Cloud::new(xt - off, 0.0, 0.0, model.c1, model.c2, tv);
            let i = cloud.integrate(false, quad_settings)?;
            let d = cloud.integrate(true, quad_settings)?;
            e += i.value;
            f += d.value;
            err += i.error;
        }
        Ok((-e_scale * e, f_scale * f, e_scale * err))
    })?;
    Ok(PotentialCurve {
        abscissa: grid.to_vec(),
        potential: rows.iter().map(|r| r.0).collect(),
        force: rows.iter().map(|r| r.1).collect(),
        regime: if neighbors == 0 { Regime::SelfOnly } else { Regime::WithMutual },
        derivative: DerivativeMethod::AnalyticUnderIntegral,
        nuisance: quad_settings.nuisance,
        max_quad_error: rows.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// Symmetric grid of `n` points on `[-half, half]`.
pub fn symmetric_grid(half: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).map(|v| if v.abs() < 1e-15 * half { 0.0 } else { v }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consts::{AMU, TWO_PI};

    fn q() -> QuadSettings {
        QuadSettings { rel_tol: 1e-8, ..Default::default() }
    }

    #[test]
    fn isotropic_slice_at_origin_is_sqrt_two_over_pi() {
        let s = QuadSettings { nuisance: NuisanceMode::Slice, ..q() };
        let v = self_gravity_integral(0.0, 1.0, 1.0, &s).unwrap();
        assert!((v.value - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn isotropic_closed_form_off_origin() {
        // Mean of 1/|x - ξ| over a unit Gaussian ξ: erf(x/√2)/x.
        let s = QuadSettings { nuisance: NuisanceMode::Slice, ..q() };
        for x in [0.3, 1.0, 2.5, 7.0] {
            let v = self_gravity_integral(x, 1.0, 1.0, &s).unwrap().value;
            let exact = erf(x / std::f64::consts::SQRT_2) / x;
            assert!((v - exact).abs() < 1e-9 * exact, "x={x}: {v} vs {exact}");
        }
    }

    // Abramowitz-Stegun 7.1.26 is too coarse here; use a series/continued fraction.
    fn erf(x: f64) -> f64 {
        if x.abs() < 3.0 {
            let mut sum = x;
            let mut term = x;
            let x2 = x * x;
            for n in 1..200 {
                term *= -x2 / n as f64;
                sum += term / (2 * n + 1) as f64;
            }
            sum * std::f64::consts::FRAC_2_SQRT_PI
        } else {
            // erfc continued fraction
            let mut f = 0.0;
            for n in (1..80).rev() {
                f = (n as f64 / 2.0) / (x + f);
            }
            1.0 - (-x * x).exp() / (std::f64::consts::PI.sqrt() * (x + f))
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let s = q();
        for x in [0.2, 1.0, 3.0] {
            let h = 1e-4;
            let fd = (self_gravity_integral(x + h, 547.0, 547.0, &s).unwrap().value
                - self_gravity_integral(x - h, 547.0, 547.0, &s).unwrap().value)
                / (2.0 * h);
            let an = self_gravity_gradient(x, 547.0, 547.0, &s).unwrap().value;
            assert!((fd - an).abs() < 1e-6 * an.abs(), "{fd} {an}");
        }
    }

    #[test]
    fn sampled_average_agrees_with_exact_marginal() {
        let s = QuadSettings { rel_tol: 1e-6, ..Default::default() };
        let exact = self_gravity_integral(0.5, 20.0, 20.0, &s).unwrap();
        let sampled = self_gravity_sampled(0.5, 20.0, 20.0, 256, 7, &s).unwrap();
        assert!((exact.value - sampled.value).abs() < sampled.error, "{exact:?} {sampled:?}");
    }

    #[test]
    fn exact_gaussian_recovered() {
        let x = symmetric_grid(5.0, 41);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * (-v * v / 2.0).exp()).collect();
        let f = fit_gaussian_potential(&x, &y, 5.0).unwrap();
        assert!((f.a - 2.0).abs() < 1e-10 && (f.b1 - 1.0).abs() < 1e-10, "{f:?}");
    }

    #[test]
    fn fit_rejects_degenerate_and_short() {
        let x = symmetric_grid(5.0, 41);
        assert!(matches!(fit_gaussian_potential(&x, &vec![1.0; 41], 5.0), Err(Error::Fit(_))));
        let x = symmetric_grid(5.0, 11);
        assert!(fit_gaussian_potential(&x, &vec![1.0; 11], 5.0).is_err());
    }

    #[test]
    fn harmonic_mean() {
        assert!((geometric_factor(&[0.6; 5]).unwrap() - 0.6).abs() < 1e-15);
        assert!((geometric_factor(&[0.3, 0.6]).unwrap() - 0.4).abs() < 1e-15);
        assert!(geometric_factor(&[]).is_err());
        assert!(geometric_factor(&[0.3, 0.0]).is_err());
    }

    #[test]
    fn torque_is_minus_energy_gradient() {
        let model = SnModel::from_material(27.0 * AMU, 1.04e-11, 4.05e-10).unwrap();
        let p = PendulumParams::new(0.36, TWO_PI * 0.2, 5e4, 0.6, 1.0, 300.0).unwrap();
        let sigma = 1.8e-11;
        let (e0, t0) = effective_sn_torque(0.0, sigma, &model, &p).unwrap();
        assert_eq!(t0, 0.0);
        let (e2, _) = effective_sn_torque(0.0, 2.0 * sigma, &model, &p).unwrap();
        assert!((e2 / e0 - 0.5).abs() < 1e-15);
        let h = sigma * 1e-5;
        let (ep, _) = effective_sn_torque(sigma + h, sigma, &model, &p).unwrap();
        let (em, _) = effective_sn_torque(sigma - h, sigma, &model, &p).unwrap();
        let (_, t) = effective_sn_torque(sigma, sigma, &model, &p).unwrap();
        assert!(((-(ep - em) / (2.0 * h)) - t).abs() < 1e-8 * t.abs());
    }

    #[test]
    fn omega_q_identities() {
        let wm = TWO_PI * 0.6e-3;
        assert_eq!(omega_q(wm, 0.0), wm);
        assert_eq!(omega_q(0.0, wm), wm);
        let w = omega_q(wm, TWO_PI * 2.51e-3);
        assert!((w / TWO_PI - 2.580_716e-3).abs() < 1e-8);
    }

    #[test]
    fn sn_frequency_cubic_scaling() {
        let a = sn_frequency_from(27.0 * AMU, 1.04e-11);
        let b = sn_frequency_from(27.0 * AMU, 2.08e-11);
        assert!((a / b - 8.0).abs() < 1e-12);
    }
}
