//! Gray-mapped square 64-QAM with unit average symbol energy.
//!
//! Six bits per symbol, three per axis; each axis is an 8-PAM with levels
//! `(2i - 7) / sqrt(42)` and the bits arranged as the Gray code of the level
//! index, so neighbouring decision regions differ in exactly one bit.

use crate::scalar::Scalar;
use num_complex::Complex;

pub const BITS_PER_SYMBOL: usize = 6;

/// `1/sqrt(42)`: normalizes the mean constellation power to one.
fn axis_scale<T: Scalar>() -> T {
    T::real(42.0).sqrt().recip()
}

fn gray_to_index(gray: u8) -> u8 {
    // Prefix-xor inverts i ^ (i >> 1) on 3 bits.
    let mut i = gray;
    i ^= i >> 1;
    i ^= i >> 2;
    i
}

fn index_to_gray(i: u8) -> u8 {
    i ^ (i >> 1)
}

fn pam_level<T: Scalar>(index: u8) -> T {
    T::real(2.0 * index as f64 - 7.0) * axis_scale::<T>()
}

fn pam_slice<T: Scalar>(y: T) -> u8 {
    // Invert the level map and clamp to the outer regions.
    let idx = ((y / axis_scale::<T>() + T::real(7.0)) / T::real(2.0))
        .round()
        .max(T::zero())
        .min(T::real(7.0));
    idx.widen() as u8
}

/// Maps a 6-bit group (high three bits on the in-phase axis) to a symbol.
pub fn modulate<T: Scalar>(bits: u8) -> Complex<T> {
    debug_assert!(bits < 64);
    let i_idx = gray_to_index(bits >> 3);
    let q_idx = gray_to_index(bits & 0b111);
    Complex::new(pam_level(i_idx), pam_level(q_idx))
}

/// Nearest-symbol decision followed by the inverse Gray map.
pub fn demodulate<T: Scalar>(y: Complex<T>) -> u8 {
    let i_idx = pam_slice(y.re);
    let q_idx = pam_slice(y.im);
    (index_to_gray(i_idx) << 3) | index_to_gray(q_idx)
}
