//! Uniform linear and planar array geometry, spatial frequencies and
//! steering responses.
//!
//! Angles are radians everywhere in this module; degree conversion happens
//! once at the configuration boundary. A user at angle `theta` seen by a
//! uniform linear array with spacing ratio `d/lambda` maps to the spatial
//! frequency `omega = 2*pi*(d/lambda)*sin(theta)`.

use crate::error::{Error, Result};
use crate::mat::CMat;
use crate::scalar::Scalar;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Uniform linear array: `n_antennas` elements at spacing `d/lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry<T> {
    n_antennas: usize,
    spacing_ratio: T,
}

impl<T: Scalar> UlaGeometry<T> {
    pub fn new(n_antennas: usize, spacing_ratio: T) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::EmptyArray);
        }
        check_spacing(spacing_ratio)?;
        Ok(Self {
            n_antennas,
            spacing_ratio,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn spacing_ratio(&self) -> T {
        self.spacing_ratio
    }

    /// Spatial frequency of angle `theta` on this array.
    pub fn omega(&self, theta: T) -> Result<T> {
        spatial_frequency(theta, self.spacing_ratio)
    }
}

/// Uniform planar array: `n1 x n2` elements at spacings `d1/lambda`, `d2/lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry<T> {
    n1: usize,
    n2: usize,
    spacing_ratio_1: T,
    spacing_ratio_2: T,
}

impl<T: Scalar> UpaGeometry<T> {
    pub fn new(n1: usize, n2: usize, spacing_ratio_1: T, spacing_ratio_2: T) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::EmptyArray);
        }
        check_spacing(spacing_ratio_1)?;
        check_spacing(spacing_ratio_2)?;
        Ok(Self {
            n1,
            n2,
            spacing_ratio_1,
            spacing_ratio_2,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn n_total(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn spacing_ratio_1(&self) -> T {
        self.spacing_ratio_1
    }

    pub fn spacing_ratio_2(&self) -> T {
        self.spacing_ratio_2
    }
}

/// A single-path angular user channel `h = alpha * a(theta)`.
///
/// The steering vector is materialized on demand; designs that only need the
/// spatial frequency never pay for an N-length vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserChannel<T> {
    pub gain: Complex<T>,
    pub theta: T,
    pub phi: T,
}

impl<T: Scalar> UserChannel<T> {
    /// 1D channel; the elevation angle is fixed at zero and unused.
    pub fn new_1d(gain: Complex<T>, theta: T) -> Result<Self> {
        Self::new_2d(gain, theta, T::zero())
    }

    pub fn new_2d(gain: Complex<T>, theta: T, phi: T) -> Result<Self> {
        if gain.norm_sqr() == T::zero() {
            return Err(Error::ZeroGain);
        }
        check_angle(theta)?;
        check_angle(phi)?;
        Ok(Self { gain, theta, phi })
    }

    /// Materializes `alpha * a(theta)` on a linear array.
    pub fn vector(&self, geometry: &UlaGeometry<T>) -> Result<Vec<Complex<T>>> {
        let omega = geometry.omega(self.theta)?;
        let mut v = steering_vector(omega, geometry.n_antennas())?;
        for x in &mut v {
            *x *= self.gain;
        }
        Ok(v)
    }
}

fn check_angle<T: Scalar>(theta: T) -> Result<()> {
    let half_pi = T::FRAC_PI_2();
    if !(theta > -half_pi && theta < half_pi) {
        return Err(Error::AngleOutOfRange(theta.widen()));
    }
    Ok(())
}

fn check_spacing<T: Scalar>(ratio: T) -> Result<()> {
    if !(ratio > T::zero() && ratio <= T::real(0.5)) {
        return Err(Error::SpacingOutOfRange(ratio.widen()));
    }
    Ok(())
}

/// `omega = 2*pi*(d/lambda)*sin(theta)` for a linear array.
pub fn spatial_frequency<T: Scalar>(theta: T, spacing_ratio: T) -> Result<T> {
    check_angle(theta)?;
    check_spacing(spacing_ratio)?;
    Ok(T::real(2.0) * T::PI() * spacing_ratio * theta.sin())
}

/// Steering vector with elements `e^{-j k omega}`, `k = 0..n`.
pub fn steering_vector<T: Scalar>(omega: T, n: usize) -> Result<Vec<Complex<T>>> {
    if n == 0 {
        return Err(Error::EmptyArray);
    }
    Ok((0..n)
        .map(|k| Complex::from_polar(T::one(), -T::count(k) * omega))
        .collect())
}

/// Spatial frequency pair of a planar array:
/// `omega1 = 2*pi*(d1/lambda)*cos(phi)*sin(theta)`, `omega2 = 2*pi*(d2/lambda)*sin(phi)`.
pub fn spatial_frequency_2d<T: Scalar>(theta: T, phi: T, g: &UpaGeometry<T>) -> Result<(T, T)> {
    check_angle(theta)?;
    check_angle(phi)?;
    let two_pi = T::real(2.0) * T::PI();
    let w1 = two_pi * g.spacing_ratio_1 * phi.cos() * theta.sin();
    let w2 = two_pi * g.spacing_ratio_2 * phi.sin();
    Ok((w1, w2))
}

/// Rank-1 planar array response with entry `(k1, k2) = e^{-j(k1 w1 + k2 w2)}`.
pub fn upa_response<T: Scalar>(theta: T, phi: T, g: &UpaGeometry<T>) -> Result<CMat<T>> {
    let (w1, w2) = spatial_frequency_2d(theta, phi, g)?;
    Ok(CMat::from_fn(g.n1, g.n2, |k1, k2| {
        Complex::from_polar(T::one(), -(T::count(k1) * w1 + T::count(k2) * w2))
    }))
}
