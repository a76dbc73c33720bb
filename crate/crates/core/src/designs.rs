//! Closed-form noise-shaping designs, IQ norms, SQNR/RNSR evaluation and the
//! coefficient-norm bounds that limit how far closed-form designs scale.
//!
//! All constructors attach the largest amplitude compatible with the
//! no-overload budget, `A = M - ||g||_IQ1`, and reject level counts that
//! leave no budget.

use crate::array::{spatial_frequency, spatial_frequency_2d, UpaGeometry};
use crate::error::{Error, Result};
use crate::mat::CMat;
use crate::modulator::FilterDesign;
use crate::scalar::Scalar;
use num_complex::Complex;

/// `||g||_IQ1 = sum |Re g_i| + |Im g_i|`.
pub fn iq_norm1<T: Scalar>(g: &[Complex<T>]) -> T {
    g.iter()
        .map(|z| z.re.abs() + z.im.abs())
        .fold(T::zero(), |a, b| a + b)
}

/// `||g||_IQ-inf = max over components of |Re| and |Im|`.
pub fn iq_norm_inf<T: Scalar>(g: &[Complex<T>]) -> T {
    g.iter()
        .map(|z| z.re.abs().max(z.im.abs()))
        .fold(T::zero(), |a, b| a.max(b))
}

/// Largest overload-safe amplitude for a coefficient norm under `M` levels.
fn max_safe_amplitude<T: Scalar>(norm: T, m_levels: usize) -> Result<T> {
    if m_levels < 2 {
        return Err(Error::BadLevelCount(m_levels));
    }
    let a = T::count(m_levels) - norm;
    if a <= T::zero() {
        return Err(Error::InfeasibleAmplitude {
            m_levels,
            norm: norm.widen(),
        });
    }
    Ok(a)
}

fn design_from_coeffs<T: Scalar>(g: Vec<Complex<T>>, m_levels: usize) -> Result<FilterDesign<T>> {
    let a = max_safe_amplitude(iq_norm1(&g), m_levels)?;
    FilterDesign::new_1d(g, a, m_levels)
}

/// First-order modulator, `g = (-1)`; safe for `A <= M - 1`.
pub fn first_order<T: Scalar>(m_levels: usize) -> Result<FilterDesign<T>> {
    design_from_coeffs(vec![Complex::new(-T::one(), T::zero())], m_levels)
}

/// Second-order modulator, `g = (-2, 1)`; needs at least `M = 4`.
pub fn second_order<T: Scalar>(m_levels: usize) -> Result<FilterDesign<T>> {
    design_from_coeffs(
        vec![
            Complex::new(T::real(-2.0), T::zero()),
            Complex::new(T::one(), T::zero()),
        ],
        m_levels,
    )
}

/// Frequency-shifted first-order modulator with its notch at `omega_c`.
pub fn freq_shifted<T: Scalar>(omega_c: T, m_levels: usize) -> Result<FilterDesign<T>> {
    design_from_coeffs(vec![-Complex::from_polar(T::one(), omega_c)], m_levels)
}

/// Band-stop coefficients `g_l = C(L, l) (-e^{j omega_c})^l`, realizing the
/// shaping response `(1 - e^{-j(omega - omega_c)})^L`.
pub fn band_stop_coeffs<T: Scalar>(order: usize, omega_c: T) -> Result<Vec<Complex<T>>> {
    if order == 0 {
        return Err(Error::ZeroOrder);
    }
    let beta = -Complex::from_polar(T::one(), omega_c);
    let mut pow = Complex::new(T::one(), T::zero());
    Ok((1..=order)
        .map(|l| {
            pow *= beta;
            pow * T::real(binomial(order, l) as f64)
        })
        .collect())
}

/// Band-stop design of a given order with the maximal safe amplitude.
pub fn band_stop<T: Scalar>(order: usize, omega_c: T, m_levels: usize) -> Result<FilterDesign<T>> {
    design_from_coeffs(band_stop_coeffs(order, omega_c)?, m_levels)
}

/// Coefficients that place an exact notch at every listed frequency:
/// the elementary symmetric polynomials of `beta_i = -e^{j omega_i}`,
/// accumulated by iterative polynomial multiplication.
pub fn zero_noise_coeffs<T: Scalar>(omegas: &[T]) -> Result<Vec<Complex<T>>> {
    if omegas.is_empty() {
        return Err(Error::EmptyTargets);
    }
    let mut poly = vec![Complex::new(T::one(), T::zero())];
    for &w in omegas {
        let beta = -Complex::from_polar(T::one(), w);
        poly.push(Complex::new(T::zero(), T::zero()));
        for l in (1..poly.len()).rev() {
            let lower = poly[l - 1];
            poly[l] += beta * lower;
        }
    }
    Ok(poly.split_off(1))
}

/// Zero-quantization-noise design for the listed frequencies.
pub fn zero_noise_design<T: Scalar>(omegas: &[T], m_levels: usize) -> Result<FilterDesign<T>> {
    design_from_coeffs(zero_noise_coeffs(omegas)?, m_levels)
}

/// 2D first-order modulator with coefficients
/// `(g_{0,1}, g_{1,0}, g_{1,1}) = (-1, -1, 1)` and shaping response
/// `(1 - e^{-j w1})(1 - e^{-j w2})`; needs at least `M = 4`.
pub fn first_order_2d<T: Scalar>(m_levels: usize) -> Result<FilterDesign<T>> {
    let mut g = CMat::zeros(2, 2);
    g[(0, 1)] = Complex::new(-T::one(), T::zero());
    g[(1, 0)] = Complex::new(-T::one(), T::zero());
    g[(1, 1)] = Complex::new(T::one(), T::zero());
    let a = max_safe_amplitude(g.iq_norm1(), m_levels)?;
    FilterDesign::new_2d(g, a, m_levels)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Scale factors entering the SQNR: transmit power `rho`, background noise
/// variance, and the effective antenna count (`N`, or `N1*N2` for planar
/// arrays).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqnrContext<T> {
    pub rho: T,
    pub noise_var: T,
    pub n_effective: usize,
}

impl<T: Scalar> SqnrContext<T> {
    pub fn new(rho: T, noise_var: T, n_effective: usize) -> Result<Self> {
        if rho.is_nan() || rho <= T::zero() || noise_var < T::zero() || n_effective == 0 {
            return Err(Error::Config(format!(
                "invalid SQNR context: rho {}, noise_var {}, n {}",
                rho, noise_var, n_effective
            )));
        }
        Ok(Self {
            rho,
            noise_var,
            n_effective,
        })
    }

    /// Per-user noise weight `gamma = 3 sigma^2 / (2 N rho |alpha|^2)`.
    pub fn gamma(&self, alpha: Complex<T>) -> Result<T> {
        let a2 = alpha.norm_sqr();
        if a2 == T::zero() {
            return Err(Error::ZeroGain);
        }
        Ok(T::real(3.0) * self.noise_var
            / (T::real(2.0) * T::count(self.n_effective) * self.rho * a2))
    }
}

/// Signal-to-quantization-and-noise ratio on a linear scale. A perfect notch
/// under zero background noise has no finite value; `Unbounded` sorts above
/// every finite ratio so max-min designs treat it correctly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sqnr<T> {
    Finite(T),
    Unbounded,
}

impl<T: Scalar> Sqnr<T> {
    pub fn is_unbounded(&self) -> bool {
        matches!(self, Sqnr::Unbounded)
    }

    pub fn finite(&self) -> Option<T> {
        match self {
            Sqnr::Finite(v) => Some(*v),
            Sqnr::Unbounded => None,
        }
    }

    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (Sqnr::Unbounded, b) => b,
            (a, Sqnr::Unbounded) => a,
            (Sqnr::Finite(a), Sqnr::Finite(b)) => Sqnr::Finite(a.min(b)),
        }
    }

    /// Decibel value; `Unbounded` maps to `None`.
    pub fn to_db(&self) -> Option<T> {
        self.finite().map(|v| T::real(10.0) * v.log10())
    }
}

impl<T: Scalar> PartialOrd for Sqnr<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        use std::cmp::Ordering::*;
        match (self, other) {
            (Sqnr::Unbounded, Sqnr::Unbounded) => Some(Equal),
            (Sqnr::Unbounded, Sqnr::Finite(_)) => Some(Greater),
            (Sqnr::Finite(_), Sqnr::Unbounded) => Some(Less),
            (Sqnr::Finite(a), Sqnr::Finite(b)) => a.partial_cmp(b),
        }
    }
}

fn sqnr_from_shaping<T: Scalar>(
    shaping_sq: T,
    amplitude: T,
    ctx: &SqnrContext<T>,
    alpha: Complex<T>,
) -> Result<Sqnr<T>> {
    if amplitude.is_nan() || amplitude <= T::zero() {
        return Err(Error::BadAmplitude(amplitude.widen()));
    }
    let a2 = alpha.norm_sqr();
    if a2 == T::zero() {
        return Err(Error::ZeroGain);
    }
    let num = ctx.rho * a2 * amplitude * amplitude;
    let den = T::real(2.0) * T::count(ctx.n_effective) * ctx.rho * a2 / T::real(3.0) * shaping_sq
        + ctx.noise_var;
    if den == T::zero() {
        Ok(Sqnr::Unbounded)
    } else {
        Ok(Sqnr::Finite(num / den))
    }
}

/// SQNR of a user with gain `alpha` at spatial frequency `omega` under a 1D
/// design: `rho |alpha|^2 A^2 / ((2 N rho |alpha|^2 / 3)|1+G|^2 + sigma^2)`.
pub fn sqnr<T: Scalar>(
    design: &FilterDesign<T>,
    ctx: &SqnrContext<T>,
    alpha: Complex<T>,
    omega: T,
) -> Result<Sqnr<T>> {
    let shaping = design.shaping_response(omega)?.norm_sqr();
    sqnr_from_shaping(shaping, design.amplitude(), ctx, alpha)
}

/// 2D counterpart of [`sqnr`] with `N = N1 N2` carried by the context.
pub fn sqnr_2d<T: Scalar>(
    design: &FilterDesign<T>,
    ctx: &SqnrContext<T>,
    alpha: Complex<T>,
    omega: (T, T),
) -> Result<Sqnr<T>> {
    let shaping = design.shaping_response_2d(omega.0, omega.1)?.norm_sqr();
    sqnr_from_shaping(shaping, design.amplitude(), ctx, alpha)
}

/// Relative noise-shaping response `|1 + G(2 pi (d/lambda) sin theta)|^2 / A^2`
/// (linear scale; decibels happen at serialization).
pub fn rnsr<T: Scalar>(design: &FilterDesign<T>, theta: T, spacing_ratio: T) -> Result<T> {
    let omega = spatial_frequency(theta, spacing_ratio)?;
    let shaping = design.shaping_response(omega)?.norm_sqr();
    let a = design.amplitude();
    Ok(shaping / (a * a))
}

/// Planar-array RNSR at an (azimuth, elevation) pair.
pub fn rnsr_2d<T: Scalar>(
    design: &FilterDesign<T>,
    theta: T,
    phi: T,
    geometry: &UpaGeometry<T>,
) -> Result<T> {
    let (w1, w2) = spatial_frequency_2d(theta, phi, geometry)?;
    let shaping = design.shaping_response_2d(w1, w2)?.norm_sqr();
    let a = design.amplitude();
    Ok(shaping / (a * a))
}

/// Upper bound `sqrt(2) (2^K - 1)` on the IQ-1 norm of zero-noise
/// coefficients for `K` notch frequencies.
pub fn zero_noise_norm_bound<T: Scalar>(k: usize) -> T {
    T::SQRT_2() * (T::real(2.0).powi(k as i32) - T::one())
}

/// Bounds `2^L - 1 <= ||g||_IQ1 <= sqrt(2) (2^L - 1)` for the band-stop
/// coefficients of order `L`.
pub fn band_stop_norm_bounds<T: Scalar>(l: usize) -> (T, T) {
    let base = T::real(2.0).powi(l as i32) - T::one();
    (base, T::SQRT_2() * base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

    #[test]
    fn iq_norm_examples() {
        let g = [C64::new(-2.0, 0.0), C64::new(1.0, 0.0)];
        assert_eq!(iq_norm1(&g), 3.0);
        let g = [-C64::from_polar(1.0, FRAC_PI_4)];
        assert_abs_diff_eq!(iq_norm1(&g), SQRT_2, epsilon = 1e-15);
        assert_eq!(iq_norm1::<f64>(&[]), 0.0);
        assert_eq!(iq_norm_inf(&[C64::new(-2.0, 0.5)]), 2.0);
    }

    #[test]
    fn closed_form_amplitudes() {
        assert_eq!(first_order::<f64>(2).unwrap().amplitude(), 1.0);
        assert_eq!(second_order::<f64>(4).unwrap().amplitude(), 1.0);
        assert!(matches!(
            second_order::<f64>(3),
            Err(Error::InfeasibleAmplitude { .. })
        ));
        // Shifting to zero reduces to the first-order design.
        let d = freq_shifted::<f64>(0.0, 3).unwrap();
        assert_eq!(d.coeffs_1d().unwrap(), &[C64::new(-1.0, 0.0)]);
        assert_eq!(d.amplitude(), 2.0);
        assert!(first_order_2d::<f64>(3).is_err());
        assert_eq!(first_order_2d::<f64>(4).unwrap().amplitude(), 1.0);
    }

    #[test]
    fn band_stop_examples() {
        let g = band_stop_coeffs::<f64>(2, 0.0).unwrap();
        assert_eq!(g, vec![C64::new(-2.0, 0.0), C64::new(1.0, 0.0)]);

        let g = band_stop_coeffs::<f64>(1, PI / 2.0).unwrap();
        assert!((g[0] - C64::new(0.0, -1.0)).norm() < 1e-15);

        let g = band_stop_coeffs::<f64>(3, 0.0).unwrap();
        assert_eq!(
            g,
            vec![C64::new(-3.0, 0.0), C64::new(3.0, 0.0), C64::new(-1.0, 0.0)]
        );
        assert_eq!(iq_norm1(&g), 7.0);

        assert!(band_stop_coeffs::<f64>(0, 0.3).is_err());
    }

    #[test]
    fn band_stop_signed_binomials_at_zero_shift() {
        for l in 1..=8usize {
            let g = band_stop_coeffs::<f64>(l, 0.0).unwrap();
            for (idx, c) in g.iter().enumerate() {
                let k = idx + 1;
                let want = if k % 2 == 0 { 1.0 } else { -1.0 } * super::binomial(l, k) as f64;
                assert_eq!(*c, C64::new(want, 0.0), "L={l} k={k}");
            }
        }
    }

    #[test]
    fn band_stop_matches_shifted_power_response() {
        let (l, wc) = (4usize, 0.7);
        let d = band_stop::<f64>(l, wc, 24).unwrap();
        for &w in &[-2.0, -0.3, 0.7, 1.4, 3.0] {
            let got = d.shaping_response(w).unwrap();
            let base = C64::new(1.0, 0.0) - C64::from_polar(1.0, -(w - wc));
            let want = base.powu(l as u32);
            assert!((got - want).norm() < 1e-12 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn zero_noise_examples() {
        assert_eq!(
            zero_noise_coeffs::<f64>(&[0.0]).unwrap(),
            vec![C64::new(-1.0, 0.0)]
        );
        let g = zero_noise_coeffs::<f64>(&[0.0, 0.0]).unwrap();
        assert!((g[0] - C64::new(-2.0, 0.0)).norm() < 1e-15);
        assert!((g[1] - C64::new(1.0, 0.0)).norm() < 1e-15);

        let omegas = [PI / 3.0, -PI / 3.0];
        let d = zero_noise_design::<f64>(&omegas, 8).unwrap();
        for &w in &omegas {
            assert!(d.shaping_response(w).unwrap().norm() < 1e-12);
        }
        assert!(zero_noise_coeffs::<f64>(&[]).is_err());
    }

    #[test]
    fn zero_noise_places_roots_up_to_k8() {
        let mut rng = crate::rng::substream(21, 6, 0);
        for k in 1..=8usize {
            for _ in 0..50 {
                let omegas: Vec<f64> = (0..k).map(|_| rng.gen_range(-PI..PI)).collect();
                let g = zero_noise_coeffs(&omegas).unwrap();
                let d = crate::modulator::FilterDesign::new_1d(g, 1.0, 2).unwrap();
                for &w in &omegas {
                    assert!(
                        d.shaping_response(w).unwrap().norm() < 1e-9,
                        "k={k} residual too large"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_noise_norm_bound_holds_and_quarter_pi_norm_is_exact() {
        // At omega_i all pi/4 the coefficients are C(K,k) beta^k with beta on
        // the diagonal; odd powers keep the sqrt(2) IQ factor, even powers
        // land on an axis, so the norm is 2^{K-1} (sqrt(2) + 1) - 1 exactly.
        // (Only K = 1 attains the bound itself.)
        let mut rng = crate::rng::substream(22, 6, 0);
        for k in 1..=8usize {
            let bound = zero_noise_norm_bound::<f64>(k);
            for _ in 0..200 {
                let omegas: Vec<f64> = (0..k).map(|_| rng.gen_range(-PI..PI)).collect();
                let norm = iq_norm1(&zero_noise_coeffs(&omegas).unwrap());
                assert!(norm <= bound + 1e-9, "k={k} norm {norm} bound {bound}");
            }
            let equal = vec![FRAC_PI_4; k];
            let norm = iq_norm1(&zero_noise_coeffs(&equal).unwrap());
            let halves = 2f64.powi(k as i32 - 1);
            let want = halves * (SQRT_2 + 1.0) - 1.0;
            assert_abs_diff_eq!(norm, want, epsilon = 1e-9 * want.max(1.0));
        }
        assert_abs_diff_eq!(
            iq_norm1(&zero_noise_coeffs(&[FRAC_PI_4]).unwrap()),
            zero_noise_norm_bound::<f64>(1),
            epsilon = 1e-12
        );
    }

    #[test]
    fn prop_bound_values() {
        assert_abs_diff_eq!(
            zero_noise_norm_bound::<f64>(3),
            SQRT_2 * 7.0,
            epsilon = 1e-12
        );
        assert_eq!(band_stop_norm_bounds::<f64>(1), (1.0, SQRT_2));
        let (lo, hi) = band_stop_norm_bounds::<f64>(2);
        assert_eq!(lo, 3.0);
        assert_abs_diff_eq!(hi, 3.0 * SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn sqnr_examples() {
        // Perfect notch and zero background noise: unbounded.
        let d = first_order::<f64>(2).unwrap();
        let ctx = SqnrContext::new(1.0, 0.0, 64).unwrap();
        let s = sqnr(&d, &ctx, C64::new(1.0, 0.0), 0.0).unwrap();
        assert!(s.is_unbounded());

        // First order at the notch with noise: rho |alpha|^2 A^2 / sigma^2.
        let ctx = SqnrContext::new(2.0, 0.5, 64).unwrap();
        let s = sqnr(&d, &ctx, C64::new(0.0, 3.0), 0.0).unwrap();
        assert_abs_diff_eq!(s.finite().unwrap(), 2.0 * 9.0 * 1.0 / 0.5, epsilon = 1e-9);

        // Unshaped (|1+G| = 1), sigma = 0: 3 A^2 / (2N).
        let flat =
            crate::modulator::FilterDesign::new_1d(vec![C64::new(0.0, 0.0)], 2.0, 2).unwrap();
        let ctx = SqnrContext::new(1.0, 0.0, 128).unwrap();
        let s = sqnr(&flat, &ctx, C64::new(1.0, 0.0), 0.7).unwrap();
        assert_abs_diff_eq!(
            s.finite().unwrap(),
            3.0 * 4.0 / (2.0 * 128.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sqnr_ordering() {
        let a = Sqnr::Finite(3.0);
        let b = Sqnr::Finite(5.0);
        assert!(a < b);
        assert!(Sqnr::<f64>::Unbounded > b);
        assert_eq!(a.min(Sqnr::Unbounded), a);
        assert_eq!(b.to_db().unwrap(), 10.0 * 5.0f64.log10());
        assert_eq!(Sqnr::<f64>::Unbounded.to_db(), None);
    }

    #[test]
    fn rnsr_examples() {
        let first = first_order::<f64>(2).unwrap();
        assert_eq!(rnsr(&first, 0.0, 0.25).unwrap(), 0.0);
        // omega = pi at theta = 90 deg is out of the open domain; use the
        // shaping response directly for the |1 - (-1)|^2 / A^2 = 4 check.
        assert_abs_diff_eq!(
            first.shaping_response(PI).unwrap().norm_sqr() / 1.0,
            4.0,
            epsilon = 1e-12
        );
        let second = second_order::<f64>(4).unwrap();
        assert_abs_diff_eq!(
            second.shaping_response(PI).unwrap().norm_sqr() / 1.0,
            16.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn sqnr_monotone_in_amplitude_and_shaping() {
        let ctx = SqnrContext::new(1.0, 0.3, 32).unwrap();
        let alpha = C64::new(1.0, 0.0);
        let mut last = 0.0;
        for i in 1..=20 {
            let a = i as f64 * 0.1;
            let d =
                crate::modulator::FilterDesign::new_1d(vec![C64::new(-1.0, 0.0)], a, 64).unwrap();
            let s = sqnr(&d, &ctx, alpha, 0.9).unwrap().finite().unwrap();
            assert!(s > last);
            last = s;
        }
        // Larger |1+G| never helps.
        let mut last = f64::INFINITY;
        for i in 0..=20 {
            let w = 0.05 + i as f64 * (PI - 0.1) / 20.0;
            let d = first_order::<f64>(4).unwrap();
            let s = sqnr(&d, &ctx, alpha, w).unwrap().finite().unwrap();
            assert!(s <= last + 1e-15);
            last = s;
        }
    }

    proptest! {
        // Norm sandwich over random center frequencies.
        #[test]
        fn band_stop_norm_sandwich(l in 1usize..=8, wc in -PI..PI) {
            let g = band_stop_coeffs::<f64>(l, wc).unwrap();
            let norm = iq_norm1(&g);
            let (lo, hi) = band_stop_norm_bounds::<f64>(l);
            prop_assert!(norm >= lo - 1e-9);
            prop_assert!(norm <= hi + 1e-9);
        }

        // Appendix inequality ||x||_2 <= ||x||_IQ1 <= sqrt(2K) ||x||_2.
        #[test]
        fn iq1_between_l2_bounds(res in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..12)) {
            let g: Vec<C64> = res.iter().map(|&(a, b)| C64::new(a, b)).collect();
            let l2 = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let iq1 = iq_norm1(&g);
            prop_assert!(iq1 + 1e-12 >= l2);
            prop_assert!(iq1 <= (2.0 * g.len() as f64).sqrt() * l2 + 1e-12);
        }
    }
}
