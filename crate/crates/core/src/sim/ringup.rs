//! Ensemble ring-up: per-segment band ASD of many trajectories, and a fit of
//! the exponential saturation time constant.

use rustfft::FftPlanner;

use super::welch::{hann, periodogram};
use super::{map_ensemble, Experiment};
use crate::consts::SECONDS_PER_DAY;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RingupResult {
    /// Segment centers, days.
    pub t_days: Vec<f64>,
    /// Ensemble mean of the band ASD, rad/√Hz.
    pub mean_asd: Vec<f64>,
    pub p16: Vec<f64>,
    pub p84: Vec<f64>,
    /// `per_traj[i][k]`: trajectory i, segment k.
    pub per_traj: Vec<Vec<f64>>,
    /// Segment start times, s.
    pub seg_start: Vec<f64>,
    pub seg_len: usize,
    pub dt: f64,
    pub band_bins: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingupFit {
    /// Amplitude time constant, s.
    pub tau: f64,
    /// Plateau of the mean ASD, rad/√Hz.
    pub plateau: f64,
    pub rms_residual: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// Band ASD per half-overlapping segment of `t_bw` for each of `n_traj`
/// trajectories of `exp` (the `n_traj` argument overrides the config).
pub fn ringup_ensemble(exp: &Experiment, band_center_hz: f64, band_width_hz: f64, n_traj: usize) -> Result<RingupResult> {
    let mut exp = exp.clone();
    exp.sim.n_traj = n_traj;
    let cfg = &exp.sim;
    let seg_len = cfg.segment_len().ok_or_else(|| Error::SimSettings("t_bw/(dt*decimation) must be a power of two".into()))?;
    let dt = cfg.dt * cfg.record_decimation as f64;
    let resolution = 1.0 / (seg_len as f64 * dt);
    if band_center_hz < resolution {
        return Err(Error::BandBelowResolution { center_hz: band_center_hz, resolution_hz: resolution });
    }
    let n_rec = cfg.n_steps() / cfg.record_decimation;
    if n_rec < 2 * seg_len {
        return Err(Error::SeriesTooShort { needed: 2 * seg_len, got: n_rec });
    }
    let n_bins = seg_len / 2 + 1;
    let (lo, hi) = (band_center_hz - band_width_hz / 2.0, band_center_hz + band_width_hz / 2.0);
    let mut bins: Vec<usize> = (0..n_bins).filter(|&k| (k as f64 * resolution) >= lo && (k as f64 * resolution) <= hi).collect();
    if bins.is_empty() {
        let k = (band_center_hz / resolution).round() as usize;
        if k >= n_bins {
            return Err(Error::EmptyBand { lo_hz: lo, hi_hz: hi });
        }
        bins.push(k);
    }
    let hop = seg_len / 2;
    let starts: Vec<usize> = (0..).map(|i| i * hop).take_while(|s| s + seg_len <= n_rec).collect();
    let window = hann(seg_len);
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let per_traj = map_ensemble(&exp, |rec| {
        Ok(starts
            .iter()
            .map(|&s| {
                let p = periodogram(&rec.theta[s..s + seg_len], &window, dt, fft.as_ref());
                (bins.iter().map(|&k| p[k]).sum::<f64>() / bins.len() as f64).sqrt()
            })
            .collect::<Vec<f64>>())
    })?;
    let n_seg = starts.len();
    let mut mean_asd = Vec::with_capacity(n_seg);
    let mut p16 = Vec::with_capacity(n_seg);
    let mut p84 = Vec::with_capacity(n_seg);
    for k in 0..n_seg {
        let mut col: Vec<f64> = per_traj.iter().map(|t| t[k]).collect();
        mean_asd.push(col.iter().sum::<f64>() / col.len() as f64);
        col.sort_by(f64::total_cmp);
        p16.push(percentile(&col, 0.16));
        p84.push(percentile(&col, 0.84));
    }
    let seg_start: Vec<f64> = starts.iter().map(|&s| s as f64 * dt).collect();
    let t_days = seg_start.iter().map(|s| (s + seg_len as f64 * dt / 2.0) / SECONDS_PER_DAY).collect();
    Ok(RingupResult {
        t_days,
        mean_asd,
        p16,
        p84,
        per_traj,
        seg_start,
        seg_len,
        dt,
        band_bins: bins.iter().map(|&k| k as f64 * resolution).collect(),
    })
}

/// Fraction of the plateau power still missing in a segment starting at `t0`,
/// for a line narrower than the bin width: the start-from-rest covariance term
/// `-e^{-(t+t')/τ}` projected on the window.
fn deficit(t0: f64, tau: f64, window: &[f64], dt: f64) -> f64 {
    let sw: f64 = window.iter().sum();
    let s: f64 = window.iter().enumerate().map(|(j, w)| w * (-(j as f64) * dt / tau).exp()).sum();
    (-2.0 * t0 / tau).exp() * (s / sw).powi(2)
}

/// Fit `mean_asd = A·sqrt(1 - deficit(t, τ))`; `A` is solved in closed form
/// for each τ, τ by a log-spaced scan refined with golden section.
pub fn fit_ringup(r: &RingupResult) -> Result<RingupFit> {
    if r.mean_asd.len() < 4 {
        return Err(Error::Fit("need at least 4 segments".into()));
    }
    if r.mean_asd.iter().all(|v| *v == 0.0) {
        return Err(Error::Fit("band amplitude is identically zero".into()));
    }
    let window = hann(r.seg_len);
    let eval = |tau: f64| -> (f64, f64) {
        let g: Vec<f64> = r.seg_start.iter().map(|&t| (1.0 - deficit(t, tau, &window, r.dt)).max(0.0).sqrt()).collect();
        let gg: f64 = g.iter().map(|x| x * x).sum();
        let a = g.iter().zip(&r.mean_asd).map(|(x, y)| x * y).sum::<f64>() / gg;
        let ss = g.iter().zip(&r.mean_asd).map(|(x, y)| (y - a * x).powi(2)).sum::<f64>();
        (ss, a)
    };
    let span = r.seg_start.last().copied().unwrap_or(0.0) + r.seg_len as f64 * r.dt;
    let (lo, hi) = ((r.seg_len as f64 * r.dt / 20.0).ln(), (span * 20.0).ln());
    let n = 200;
    let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let best = (0..=n).min_by(|&i, &j| eval(grid[i].exp()).0.total_cmp(&eval(grid[j].exp()).0)).unwrap_or(0);
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if eval(c.exp()).0 < eval(d.exp()).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let tau = (0.5 * (a + b)).exp();
    let (ss, plateau) = eval(tau);
    Ok(RingupFit { tau, plateau, rms_residual: (ss / r.mean_asd.len() as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_synthetic_tau() {
        let seg_len = 64;
        let dt = 0.25;
        let window = hann(seg_len);
        let seg_start: Vec<f64> = (0..60).map(|i| i as f64 * 8.0).collect();
        let mean_asd: Vec<f64> = seg_start.iter().map(|&t| 3.0 * (1.0 - deficit(t, 55.0, &window, dt)).sqrt()).collect();
        let r = RingupResult {
            t_days: vec![],
            mean_asd,
            p16: vec![],
            p84: vec![],
            per_traj: vec![],
            seg_start,
            seg_len,
            dt,
            band_bins: vec![],
        };
        let f = fit_ringup(&r).unwrap();
        assert!((f.tau / 55.0 - 1.0).abs() < 1e-6, "{}", f.tau);
        assert!((f.plateau - 3.0).abs() < 1e-6);
    }

    #[test]
    fn deficit_tends_to_exponential_for_short_windows() {
        let w = hann(32);
        let d = deficit(10.0, 100.0, &w, 1e-3);
        assert!((d / (-0.2f64).exp() - 1.0).abs() < 1e-3);
    }
}
