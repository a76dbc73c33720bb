//! Multi-level error-feedback sigma-delta modulation.
//!
//! The modulator quantizes each component of a complex sequence to an
//! M-level alphabet while feeding past quantization errors back through a
//! filter `g`, so the error spectrum at the output is shaped by
//! `1 + G(omega)`. The spatial variant runs the same recursion across
//! antenna index. A 2D extension scans a planar array in raster order.
//!
//! No overload occurs (every quantization error stays within the half step)
//! whenever the input amplitude and the filter obey `A + ||g||_IQ1 <= M`;
//! the runtime counts violations instead of aborting.

use crate::designs;
use crate::error::{Error, Result};
use crate::mat::CMat;
use crate::rng::{self, DOMAIN_NOISE_POWER};
use crate::scalar::Scalar;
use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Slack absorbing floating-point noise at the exact `|q| = 1` boundary.
pub const OVERLOAD_TOL: f64 = 1e-12;

/// The M-level per-component alphabet: odd integers `{±1, ±3, ...}` for even
/// M, even integers `{0, ±2, ...}` for odd M, capped at `±(M-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalSet {
    m_levels: usize,
}

impl SignalSet {
    pub fn new(m_levels: usize) -> Result<Self> {
        if m_levels < 2 {
            return Err(Error::BadLevelCount(m_levels));
        }
        Ok(Self { m_levels })
    }

    pub fn m_levels(&self) -> usize {
        self.m_levels
    }

    pub fn max_level(&self) -> usize {
        self.m_levels - 1
    }

    /// The sorted alphabet.
    pub fn levels<T: Scalar>(&self) -> Vec<T> {
        let top = self.m_levels as i64 - 1;
        (0..self.m_levels)
            .map(|i| T::real((-top + 2 * i as i64) as f64))
            .collect()
    }

    /// Nearest alphabet element, ties rounding toward +infinity, saturating
    /// at `±(M-1)`.
    pub fn nearest<T: Scalar>(&self, y: T) -> T {
        let two = T::real(2.0);
        let raw = if self.m_levels.is_multiple_of(2) {
            two * (y / two).floor() + T::one()
        } else {
            two * (y / two + T::real(0.5)).floor()
        };
        let top = T::count(self.m_levels - 1);
        raw.max(-top).min(top)
    }
}

/// Quantizes a real value to the alphabet.
pub fn quantize<T: Scalar>(y: T, set: &SignalSet) -> Result<T> {
    if !y.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(set.nearest(y))
}

/// Component-wise complex quantizer `Q(Re) + j Q(Im)`.
pub fn quantize_complex<T: Scalar>(z: Complex<T>, set: &SignalSet) -> Result<Complex<T>> {
    Ok(Complex::new(quantize(z.re, set)?, quantize(z.im, set)?))
}

/// Error-feedback filter coefficients: a vector `g_1..g_L` for the 1D
/// modulator, or an `(L1+1) x (L2+1)` matrix with a zero origin entry for
/// the 2D modulator.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterCoeffs<T> {
    OneD(Vec<Complex<T>>),
    TwoD(CMat<T>),
}

/// A complete modulator design: feedback coefficients, the maximum input
/// amplitude `A` the driver promises to respect, and the level count `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDesign<T> {
    coeffs: FilterCoeffs<T>,
    amplitude: T,
    m_levels: usize,
}

impl<T: Scalar> FilterDesign<T> {
    pub fn new_1d(coeffs: Vec<Complex<T>>, amplitude: T, m_levels: usize) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::ZeroOrder);
        }
        Self::validate(&coeffs, amplitude, m_levels)?;
        Ok(Self {
            coeffs: FilterCoeffs::OneD(coeffs),
            amplitude,
            m_levels,
        })
    }

    pub fn new_2d(coeffs: CMat<T>, amplitude: T, m_levels: usize) -> Result<Self> {
        if coeffs.rows() * coeffs.cols() < 2 {
            return Err(Error::ZeroOrder);
        }
        if coeffs[(0, 0)].norm_sqr() != T::zero() {
            return Err(Error::NonZeroOrigin);
        }
        Self::validate(coeffs.data(), amplitude, m_levels)?;
        Ok(Self {
            coeffs: FilterCoeffs::TwoD(coeffs),
            amplitude,
            m_levels,
        })
    }

    fn validate(coeffs: &[Complex<T>], amplitude: T, m_levels: usize) -> Result<()> {
        if m_levels < 2 {
            return Err(Error::BadLevelCount(m_levels));
        }
        if !amplitude.is_finite() || amplitude <= T::zero() {
            return Err(Error::BadAmplitude(amplitude.widen()));
        }
        if coeffs
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    pub fn m_levels(&self) -> usize {
        self.m_levels
    }

    pub fn signal_set(&self) -> SignalSet {
        SignalSet {
            m_levels: self.m_levels,
        }
    }

    pub fn coeffs(&self) -> &FilterCoeffs<T> {
        &self.coeffs
    }

    pub fn coeffs_1d(&self) -> Result<&[Complex<T>]> {
        match &self.coeffs {
            FilterCoeffs::OneD(g) => Ok(g),
            FilterCoeffs::TwoD(_) => Err(Error::DesignKind { expected: "1D" }),
        }
    }

    pub fn coeffs_2d(&self) -> Result<&CMat<T>> {
        match &self.coeffs {
            FilterCoeffs::TwoD(g) => Ok(g),
            FilterCoeffs::OneD(_) => Err(Error::DesignKind { expected: "2D" }),
        }
    }

    pub fn is_one_d(&self) -> bool {
        matches!(self.coeffs, FilterCoeffs::OneD(_))
    }

    /// `||g||_IQ1`, the sum of absolute real and imaginary coefficient parts.
    pub fn iq_norm1(&self) -> T {
        match &self.coeffs {
            FilterCoeffs::OneD(g) => designs::iq_norm1(g),
            FilterCoeffs::TwoD(g) => g.iq_norm1(),
        }
    }

    /// Whether `A + ||g||_IQ1 <= M` holds (up to floating-point slack), i.e.
    /// whether the no-overload guarantee applies to amplitude-respecting
    /// inputs.
    pub fn is_overload_safe(&self) -> bool {
        let m = T::count(self.m_levels);
        self.amplitude + self.iq_norm1() <= m * (T::one() + T::real(1e-12)) + T::real(1e-12)
    }

    /// `1 + G(omega)` for a 1D design.
    pub fn shaping_response(&self, omega: T) -> Result<Complex<T>> {
        let g = self.coeffs_1d()?;
        let mut acc = Complex::new(T::one(), T::zero());
        for (l, gl) in g.iter().enumerate() {
            let phase = -T::count(l + 1) * omega;
            acc += gl * Complex::from_polar(T::one(), phase);
        }
        Ok(acc)
    }

    /// `1 + G(omega1, omega2)` for a 2D design.
    pub fn shaping_response_2d(&self, omega1: T, omega2: T) -> Result<Complex<T>> {
        let g = self.coeffs_2d()?;
        let mut acc = Complex::new(T::one(), T::zero());
        for l1 in 0..g.rows() {
            for l2 in 0..g.cols() {
                if l1 == 0 && l2 == 0 {
                    continue;
                }
                let phase = -(T::count(l1) * omega1 + T::count(l2) * omega2);
                acc += g[(l1, l2)] * Complex::from_polar(T::one(), phase);
            }
        }
        Ok(acc)
    }

    /// Serializable form (the JSON interchange format).
    pub fn to_file(&self) -> DesignFile {
        let (kind, order, order1, order2, coeffs) = match &self.coeffs {
            FilterCoeffs::OneD(g) => ("1d", Some(g.len()), None, None, g.clone()),
            FilterCoeffs::TwoD(g) => (
                "2d",
                None,
                Some(g.rows() - 1),
                Some(g.cols() - 1),
                g.data().to_vec(),
            ),
        };
        DesignFile {
            kind: kind.to_string(),
            order,
            order1,
            order2,
            coeffs_re: coeffs.iter().map(|c| c.re.widen()).collect(),
            coeffs_im: coeffs.iter().map(|c| c.im.widen()).collect(),
            amplitude: self.amplitude.widen(),
            m_levels: self.m_levels,
        }
    }

    pub fn from_file(file: &DesignFile) -> Result<Self> {
        if file.coeffs_re.len() != file.coeffs_im.len() {
            return Err(Error::Config(
                "coeffs_re and coeffs_im lengths differ".into(),
            ));
        }
        let coeffs: Vec<Complex<T>> = file
            .coeffs_re
            .iter()
            .zip(&file.coeffs_im)
            .map(|(&re, &im)| Complex::new(T::real(re), T::real(im)))
            .collect();
        let amplitude = T::real(file.amplitude);
        match file.kind.as_str() {
            "1d" => {
                if let Some(order) = file.order {
                    if order != coeffs.len() {
                        return Err(Error::Config(
                            "order does not match coefficient count".into(),
                        ));
                    }
                }
                Self::new_1d(coeffs, amplitude, file.m_levels)
            }
            "2d" => {
                let (l1, l2) = match (file.order1, file.order2) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(Error::Config("2d design needs order1 and order2".into())),
                };
                let grid = CMat::from_vec(l1 + 1, l2 + 1, coeffs)
                    .map_err(|_| Error::Config("coefficient count does not match orders".into()))?;
                Self::new_2d(grid, amplitude, file.m_levels)
            }
            other => Err(Error::Config(format!("unknown design kind {other:?}"))),
        }
    }
}

/// JSON-facing mirror of [`FilterDesign`]: the interchange format consumed by
/// the CLI and the simulator. 2D coefficients are flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignFile {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order2: Option<usize>,
    pub coeffs_re: Vec<f64>,
    pub coeffs_im: Vec<f64>,
    pub amplitude: f64,
    pub m_levels: usize,
}

/// Outcome of one modulation run. `output - input` is the shaped error
/// sequence `q + g (*) q`; `errors` holds the raw quantization errors `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationResult<T> {
    pub output: Vec<Complex<T>>,
    pub errors: Vec<Complex<T>>,
    pub overload_count: usize,
    pub max_error_iq: T,
}

fn czero<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

fn iq_inf_abs<T: Scalar>(z: Complex<T>) -> T {
    z.re.abs().max(z.im.abs())
}

/// Runs the 1D recursion `x_n = Q_c(xbar_n + sum_l g_l q_{n-l})` with zero
/// initial error memory.
pub fn modulate_1d<T: Scalar>(
    input: &[Complex<T>],
    design: &FilterDesign<T>,
) -> Result<ModulationResult<T>> {
    let g = design.coeffs_1d()?;
    if input.is_empty() {
        return Err(Error::ShapeMismatch { rows: 0, cols: 0 });
    }
    let set = design.signal_set();
    let overload_gate = T::one() + T::real(OVERLOAD_TOL);

    let mut output = Vec::with_capacity(input.len());
    let mut errors: Vec<Complex<T>> = Vec::with_capacity(input.len());
    let mut overload_count = 0usize;
    let mut max_error_iq = T::zero();

    for (n, &xbar) in input.iter().enumerate() {
        let mut feedback = czero::<T>();
        for (l, gl) in g.iter().enumerate() {
            let lag = l + 1;
            if lag > n {
                break;
            }
            feedback += gl * errors[n - lag];
        }
        let b = xbar + feedback;
        if !b.re.is_finite() || !b.im.is_finite() {
            return Err(Error::NonFinite);
        }
        let x = Complex::new(set.nearest(b.re), set.nearest(b.im));
        let q = x - b;
        debug_assert!(
            (x - (b + q)).norm() <= T::real(1e-9) * (T::one() + x.norm()),
            "step identity x = b + q violated"
        );
        let iq = iq_inf_abs(q);
        if iq > overload_gate {
            overload_count += 1;
        }
        if iq > max_error_iq {
            max_error_iq = iq;
        }
        output.push(x);
        errors.push(q);
    }

    Ok(ModulationResult {
        output,
        errors,
        overload_count,
        max_error_iq,
    })
}

/// Runs the 2D recursion in raster order (rows outer, columns inner), with
/// the feedback convolving the coefficient grid against past quantization
/// errors; errors at negative indices are zero.
pub fn modulate_2d<T: Scalar>(
    input: &CMat<T>,
    design: &FilterDesign<T>,
) -> Result<ModulationResult<T>> {
    let g = design.coeffs_2d()?;
    let (n1, n2) = input.shape();
    if n1 == 0 || n2 == 0 {
        return Err(Error::ShapeMismatch { rows: n1, cols: n2 });
    }
    let set = design.signal_set();
    let overload_gate = T::one() + T::real(OVERLOAD_TOL);

    let mut output = Vec::with_capacity(n1 * n2);
    let mut errors: Vec<Complex<T>> = Vec::with_capacity(n1 * n2);
    let mut overload_count = 0usize;
    let mut max_error_iq = T::zero();

    for r in 0..n1 {
        for c in 0..n2 {
            let mut feedback = czero::<T>();
            for l1 in 0..g.rows().min(r + 1) {
                for l2 in 0..g.cols().min(c + 1) {
                    if l1 == 0 && l2 == 0 {
                        continue;
                    }
                    feedback += g[(l1, l2)] * errors[(r - l1) * n2 + (c - l2)];
                }
            }
            let b = input[(r, c)] + feedback;
            if !b.re.is_finite() || !b.im.is_finite() {
                return Err(Error::NonFinite);
            }
            let x = Complex::new(set.nearest(b.re), set.nearest(b.im));
            let q = x - b;
            let iq = iq_inf_abs(q);
            if iq > overload_gate {
                overload_count += 1;
            }
            if iq > max_error_iq {
                max_error_iq = iq;
            }
            output.push(x);
            errors.push(q);
        }
    }

    Ok(ModulationResult {
        output,
        errors,
        overload_count,
        max_error_iq,
    })
}

/// Empirical estimate of the shaped quantization noise power at a spatial
/// frequency, the Monte-Carlo counterpart of `|1+G(omega)|^2 * 2N/3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePower<T> {
    /// Sample mean of `|sum_n (x_n - xbar_n) e^{-j n omega}|^2` over trials.
    pub power: T,
    /// Overload events encountered across all trials (reported, not fatal).
    pub overload_events: usize,
    pub trials: usize,
}

/// Draws inputs i.i.d. uniform per component on `[-A, A]`, modulates them and
/// averages the spectral noise power at `omega` over `n_trials` independent
/// trials. Trials run in parallel on deterministic substreams of `seed`.
pub fn measure_noise_power<T: Scalar>(
    design: &FilterDesign<T>,
    omega: T,
    n_antennas: usize,
    n_trials: usize,
    seed: u64,
) -> Result<NoisePower<T>> {
    design.coeffs_1d()?;
    if n_antennas == 0 {
        return Err(Error::EmptyArray);
    }
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    let a = design.amplitude().widen();

    let per_trial: Vec<Result<(T, usize)>> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::substream(seed, DOMAIN_NOISE_POWER, t as u64);
            let input: Vec<Complex<T>> = (0..n_antennas)
                .map(|_| {
                    let re = rng.gen_range(-a..=a);
                    let im = rng.gen_range(-a..=a);
                    Complex::new(T::real(re), T::real(im))
                })
                .collect();
            let result = modulate_1d(&input, design)?;
            let mut v = czero::<T>();
            for (n, (x, xbar)) in result.output.iter().zip(&input).enumerate() {
                let phase = -T::count(n) * omega;
                v += (x - xbar) * Complex::from_polar(T::one(), phase);
            }
            Ok((v.norm_sqr(), result.overload_count))
        })
        .collect();

    let mut acc = T::zero();
    let mut overload_events = 0usize;
    for r in per_trial {
        let (p, o) = r?;
        acc += p;
        overload_events += o;
    }
    Ok(NoisePower {
        power: acc / T::count(n_trials),
        overload_events,
        trials: n_trials,
    })
}
