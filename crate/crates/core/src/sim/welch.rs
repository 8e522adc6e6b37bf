//! Welch periodogram: Hann window, mean-removed segments, one-sided PSD.

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub freq: Vec<f64>,
    pub psd: Vec<f64>,
    pub n_segments: usize,
    pub window: &'static str,
    pub branch: String,
    /// Expected relative standard deviation of each PSD bin.
    pub rel_std: f64,
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos()).collect()
}

/// One windowed, mean-removed, window-compensated periodogram of `seg`.
pub(crate) fn periodogram(seg: &[f64], window: &[f64], dt: f64, fft: &dyn rustfft::Fft<f64>) -> Vec<f64> {
    let n = seg.len();
    let mean = seg.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = seg.iter().zip(window).map(|(x, w)| Complex64::new((x - mean) * w, 0.0)).collect();
    fft.process(&mut buf);
    let norm = dt / window.iter().map(|w| w * w).sum::<f64>();
    (0..=n / 2)
        .map(|k| {
            let p = buf[k].norm_sqr() * norm;
            if k == 0 || 2 * k == n {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Welch PSD with segments of `seg_len` samples and fractional `overlap`.
pub fn welch_psd(series: &[f64], dt: f64, seg_len: usize, overlap: f64, branch: &str) -> Result<SpectrumResult> {
    if seg_len < 4 {
        return Err(Error::invalid("seg_len", "need at least 4 samples per segment"));
    }
    if series.len() < seg_len {
        return Err(Error::SeriesTooShort { needed: seg_len, got: series.len() });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap", "must be in [0, 1)"));
    }
    let hop = ((seg_len as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window = hann(seg_len);
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let mut psd = vec![0.0; seg_len / 2 + 1];
    let mut k = 0;
    let mut start = 0;
    while start + seg_len <= series.len() {
        for (acc, p) in psd.iter_mut().zip(periodogram(&series[start..start + seg_len], &window, dt, fft.as_ref())) {
            *acc += p;
        }
        k += 1;
        start += hop;
    }
    psd.iter_mut().for_each(|p| *p /= k as f64);
    let freq = (0..psd.len()).map(|i| i as f64 / (seg_len as f64 * dt)).collect();
    Ok(SpectrumResult { freq, psd, n_segments: k, window: "hann", branch: branch.into(), rel_std: rel_std(&window, hop, k) })
}

// Welch's variance formula for overlapping segments of a Gaussian process
// with a locally flat spectrum.
fn rel_std(w: &[f64], hop: usize, k: usize) -> f64 {
    let s2: f64 = w.iter().map(|x| x * x).sum();
    let mut acc = 1.0;
    for j in 1..k {
        let shift = j * hop;
        if shift >= w.len() {
            break;
        }
        let rho: f64 = (0..w.len() - shift).map(|i| w[i] * w[i + shift]).sum::<f64>() / s2;
        acc += 2.0 * (1.0 - j as f64 / k as f64) * rho * rho;
    }
    (acc / k as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn white_noise_level() {
        let dt = 0.01;
        let s: f64 = 3.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..1 << 16)
            .map(|_| (s / (2.0 * dt)).sqrt() * { let z: f64 = StandardNormal.sample(&mut rng); z })
            .collect();
        let r = welch_psd(&x, dt, 256, 0.5, "t").unwrap();
        let mean = r.psd[1..128].iter().sum::<f64>() / 127.0;
        assert!((mean / s - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn sine_power_preserved() {
        let dt = 0.01;
        let n = 1024;
        let f0 = 64.0 / (n as f64 * dt);
        let x: Vec<f64> = (0..8 * n).map(|i| (std::f64::consts::TAU * f0 * i as f64 * dt).sin()).collect();
        let r = welch_psd(&x, dt, n, 0.5, "t").unwrap();
        let df = r.freq[1];
        // Integrated power = 1/2 with the window's equivalent noise bandwidth.
        let total: f64 = r.psd.iter().sum::<f64>() * df;
        assert!((total - 0.5).abs() < 1e-6, "{total}");
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(welch_psd(&[0.0; 10], 1.0, 16, 0.5, "t"), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn no_overlap_rel_std_is_inverse_sqrt_k() {
        let w = hann(64);
        assert!((rel_std(&w, 64, 16) - 0.25).abs() < 1e-12);
    }
}
