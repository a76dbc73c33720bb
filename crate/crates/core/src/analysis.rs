//! Statistical validation of the designs and of the quantization-noise
//! model: coefficient-norm statistics for the zero-noise design, the
//! empirical-versus-predicted noise power comparison, and RNSR curve data.

use crate::designs::{self, rnsr};
use crate::error::Result;
use crate::modulator::{measure_noise_power, FilterDesign};
use crate::rng::{self, DOMAIN_NORM_STATS};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Moment statistics of `||g||_IQ1` for the zero-noise design at a given
/// user count.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormStats {
    pub k: usize,
    pub min: f64,
    pub mean: f64,
    pub rms: f64,
    pub max: f64,
    pub n_samples: usize,
    pub seed: u64,
}

const NORM_STATS_CHUNK: usize = 4096;

/// Draws `n_samples` frequency sets i.i.d. uniform on `(-pi, pi)^k`, builds
/// the zero-noise coefficients for each and accumulates norm statistics.
/// Chunks run in parallel on substreams; the merge order is fixed, so the
/// result is identical for any thread count.
pub fn norm_stats(k: usize, n_samples: usize, seed: u64) -> Result<NormStats> {
    assert!(k >= 1 && n_samples >= 1);
    let n_chunks = n_samples.div_ceil(NORM_STATS_CHUNK);
    let partials: Vec<(f64, f64, f64, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng::substream(seed, DOMAIN_NORM_STATS, chunk as u64);
            let lo = chunk * NORM_STATS_CHUNK;
            let hi = ((chunk + 1) * NORM_STATS_CHUNK).min(n_samples);
            let (mut mn, mut mx, mut sum, mut sum_sq) = (f64::INFINITY, 0.0f64, 0.0, 0.0);
            let mut omegas = vec![0.0f64; k];
            for _ in lo..hi {
                for w in omegas.iter_mut() {
                    *w = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                }
                let g = designs::zero_noise_coeffs(&omegas).expect("k >= 1");
                let norm = designs::iq_norm1(&g);
                mn = mn.min(norm);
                mx = mx.max(norm);
                sum += norm;
                sum_sq += norm * norm;
            }
            (mn, mx, sum, sum_sq)
        })
        .collect();

    let (mut mn, mut mx, mut sum, mut sum_sq) = (f64::INFINITY, 0.0f64, 0.0, 0.0);
    for (c_mn, c_mx, c_sum, c_sq) in partials {
        mn = mn.min(c_mn);
        mx = mx.max(c_mx);
        sum += c_sum;
        sum_sq += c_sq;
    }
    Ok(NormStats {
        k,
        min: mn,
        mean: sum / n_samples as f64,
        rms: (sum_sq / n_samples as f64).sqrt(),
        max: mx,
        n_samples,
        seed,
    })
}

/// One frequency point of the noise-model comparison. `ratio_db` is absent
/// at deep notches, where the prediction underflows to a meaningless ratio.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseModelRow {
    pub omega: f64,
    pub empirical: f64,
    pub predicted: f64,
    pub ratio_db: Option<f64>,
    pub overload_events: usize,
}

/// Threshold below which a shaped response counts as a deep notch.
pub const DEEP_NOTCH: f64 = 1e-3;

/// Empirical noise power at each frequency against the prediction
/// `(2N/3) |1+G(omega)|^2`.
pub fn validate_noise_model(
    design: &FilterDesign<f64>,
    omegas: &[f64],
    n_antennas: usize,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<NoiseModelRow>> {
    let flat = 2.0 * n_antennas as f64 / 3.0;
    omegas
        .iter()
        .map(|&omega| {
            let est = measure_noise_power(design, omega, n_antennas, n_trials, seed)?;
            let shaping = design.shaping_response(omega)?.norm();
            let predicted = flat * shaping * shaping;
            let ratio_db = if shaping < DEEP_NOTCH {
                None
            } else {
                Some(10.0 * (est.power / predicted).log10())
            };
            Ok(NoiseModelRow {
                omega,
                empirical: est.power,
                predicted,
                ratio_db,
                overload_events: est.overload_events,
            })
        })
        .collect()
}

/// Sentinel emitted for an exactly-zero RNSR so CSV stays numeric.
pub const RNSR_FLOOR_DB: f64 = -400.0;

/// RNSR curve in decibels over an angle grid (radians in, degrees out is
/// the CLI's business).
pub fn rnsr_sweep(
    design: &FilterDesign<f64>,
    thetas: &[f64],
    spacing_ratio: f64,
) -> Result<Vec<(f64, f64)>> {
    thetas
        .iter()
        .map(|&theta| {
            let linear = rnsr(design, theta, spacing_ratio)?;
            let db = if linear <= 0.0 {
                RNSR_FLOOR_DB
            } else {
                (10.0 * linear.log10()).max(RNSR_FLOOR_DB)
            };
            Ok((theta, db))
        })
        .collect()
}

/// Worst (largest) RNSR over a uniform sweep of the sector, in linear scale.
pub fn worst_rnsr_in_sector(
    design: &FilterDesign<f64>,
    theta_lo: f64,
    theta_hi: f64,
    points: usize,
    spacing_ratio: f64,
) -> Result<f64> {
    assert!(points >= 2);
    let mut worst = 0.0f64;
    for i in 0..points {
        let theta = theta_lo + (theta_hi - theta_lo) * i as f64 / (points - 1) as f64;
        worst = worst.max(rnsr(design, theta, spacing_ratio)?);
    }
    Ok(worst)
}
