//! Colored-noise synthesis: white noise through a cascade of first-order
//! sections fitted log-log to a target PSD, discretized with the bilinear
//! transform (frequencies pre-warped so the discrete response matches).

use crate::noise::PsdModel;
use crate::{Error, Result};

/// Up to 8 biquads, i.e. 16 first-order sections.
pub const MAX_SECTIONS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingFilter {
    /// Continuous gain, zeros and poles (rad/s, all positive: LHP).
    pub gain: f64,
    pub zeros: Vec<f64>,
    pub poles: Vec<f64>,
    /// max |log10(fit/target)| over the fit grid.
    pub max_log10_residual: f64,
    sections: Vec<Section>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Section {
    b0: f64,
    b1: f64,
    a1: f64,
    state: f64,
}

impl Section {
    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.state;
        self.state = self.b1 * x - self.a1 * y;
        y
    }
}

fn log_mag2(gain: f64, zeros: &[f64], poles: &[f64], w: f64) -> f64 {
    let mut v = 2.0 * gain.ln();
    for z in zeros {
        v += (w * w + z * z).ln();
    }
    for p in poles {
        v -= (w * w + p * p).ln();
    }
    v
}

impl ShapingFilter {
    /// Fit `|H(iΩ')|² ≈ psd(Ω)` where Ω' is the pre-warped frequency, over
    /// `[f_lo, f_hi]` Hz, for a simulation step `dt`.
    pub fn fit(psd: &PsdModel, f_lo: f64, f_hi: f64, dt: f64) -> Result<Self> {
        if !(f_lo > 0.0 && f_hi > f_lo) {
            return Err(Error::invalid("shaping band", format!("need 0 < f_lo < f_hi, got [{f_lo}, {f_hi}]")));
        }
        let n_grid = 200;
        let (a, b) = (f_lo.ln(), f_hi.ln());
        let mut w_target = Vec::with_capacity(n_grid);
        let mut w_fit = Vec::with_capacity(n_grid);
        let mut target = Vec::with_capacity(n_grid);
        for i in 0..n_grid {
            let f = (a + (b - a) * i as f64 / (n_grid - 1) as f64).exp();
            let w = std::f64::consts::TAU * f;
            let s = psd.eval(w);
            if !(s > 0.0) {
                return Err(Error::invalid("shaping", "target PSD must be positive over the band"));
            }
            w_target.push(w);
            w_fit.push(2.0 / dt * (w * dt / 2.0).tan());
            target.push(s.ln());
        }
        let decades = (f_hi / f_lo).log10();
        let k = ((2.0 * decades).ceil() as usize).clamp(1, MAX_SECTIONS / 2);
        // Parameters: ln gain, then (ln z, ln p) per section, starting flat.
        let mut theta = vec![0.5 * target.iter().sum::<f64>() / n_grid as f64];
        for i in 0..k {
            let f = (a + (b - a) * (i as f64 + 0.5) / k as f64).exp();
            let w = (std::f64::consts::TAU * f).ln();
            theta.push(w);
            theta.push(w);
        }
        let unpack = |t: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
            let g = t[0].exp();
            let z = (0..k).map(|i| t[1 + 2 * i].exp()).collect();
            let p = (0..k).map(|i| t[2 + 2 * i].exp()).collect();
            (g, z, p)
        };
        let residuals = |t: &[f64]| -> Vec<f64> {
            let (g, z, p) = unpack(t);
            w_fit.iter().zip(&target).map(|(w, s)| log_mag2(g, &z, &p, *w) - s).collect()
        };
        let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
        let np = theta.len();
        let mut r = residuals(&theta);
        let mut c = cost(&r);
        let mut lambda = 1e-2;
        for _ in 0..300 {
            // Numerical Jacobian.
            let mut jac = vec![vec![0.0; np]; n_grid];
            for j in 0..np {
                let h = 1e-6;
                let mut tp = theta.clone();
                tp[j] += h;
                let rp = residuals(&tp);
                for i in 0..n_grid {
                    jac[i][j] = (rp[i] - r[i]) / h;
                }
            }
            let mut jtj = vec![vec![0.0; np]; np];
            let mut jtr = vec![0.0; np];
            for i in 0..n_grid {
                for a_ in 0..np {
                    jtr[a_] += jac[i][a_] * r[i];
                    for b_ in 0..np {
                        jtj[a_][b_] += jac[i][a_] * jac[i][b_];
                    }
                }
            }
            let mut improved = false;
            for _ in 0..20 {
                let mut m = jtj.clone();
                for d in 0..np {
                    m[d][d] += lambda * (jtj[d][d] + 1e-12);
                }
                let Some(step) = solve(m, jtr.iter().map(|v| -v).collect()) else {
                    lambda *= 10.0;
                    continue;
                };
                let cand: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + s).collect();
                let rc = residuals(&cand);
                let cc = cost(&rc);
                if cc.is_finite() && cc < c {
                    let done = (c - cc) < 1e-12 * c;
                    theta = cand;
                    r = rc;
                    c = cc;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = !done;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let (gain, zeros, poles) = unpack(&theta);
        let max_log10_residual = r.iter().map(|x| x.abs() / std::f64::consts::LN_10).fold(0.0, f64::max);
        let sections = discretize(gain, &zeros, &poles, dt);
        let _ = w_target;
        Ok(Self { gain, zeros, poles, max_log10_residual, sections })
    }

    /// Filter one sample of unit-PSD white input (variance 1/(2dt)).
    pub fn step(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |acc, s| s.step(acc))
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.state = 0.0;
        }
    }
}

// Each section (s + z)/(s + p) via s = (2/dt)(1 - q)/(1 + q), q = z⁻¹.
fn discretize(gain: f64, zeros: &[f64], poles: &[f64], dt: f64) -> Vec<Section> {
    let k = 2.0 / dt;
    let mut out: Vec<Section> = zeros
        .iter()
        .zip(poles)
        .map(|(z, p)| {
            let norm = k + p;
            Section { b0: (k + z) / norm, b1: (z - k) / norm, a1: (p - k) / norm, state: 0.0 }
        })
        .collect();
    if let Some(first) = out.first_mut() {
        first.b0 *= gain;
        first.b1 *= gain;
    } else {
        out.push(Section { b0: gain, b1: 0.0, a1: 0.0, state: 0.0 });
    }
    out
}

/// Dense Gaussian elimination with partial pivoting.
pub(crate) fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_inverse_frequency_psd() {
        let f = ShapingFilter::fit(&PsdModel::InverseOmega(3.0), 1e-3, 5.0, 0.1).unwrap();
        assert!(f.max_log10_residual < 0.05, "{}", f.max_log10_residual);
    }

    #[test]
    fn fits_flat_psd_exactly() {
        let f = ShapingFilter::fit(&PsdModel::White(4.0), 1e-3, 1.0, 0.1).unwrap();
        assert!(f.max_log10_residual < 1e-6);
    }
}
