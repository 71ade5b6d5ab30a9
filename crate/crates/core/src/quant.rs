//! Scalar XOR-friendly quantization.
//!
//! A real `x` is approximated by `B` sign digits `a_{B-1} … a_0 ∈ {+1, −1}`
//! with value `Σ a_i / 2^{B−i}`. Digits are chosen greedily from the most
//! significant one down, and each is stored as the bit `σ(a) = (1 − a) / 2`,
//! so `+1 ↦ 0` and `−1 ↦ 1`. Under that map the product of two digits is
//! `1 − 2·(ā ⊕ c̄)`, which turns a product of codes into XOR and shifts.

use std::fmt;

use crate::error::{Error, Result};

/// Number of sign digits per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWidth(u8);

impl BitWidth {
    pub const MAX: u8 = 8;

    pub fn new(bits: u8) -> Result<Self> {
        if (1..=Self::MAX).contains(&bits) {
            Ok(BitWidth(bits))
        } else {
            Err(Error::WidthOutOfRange(bits))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// `2^B − 1`, the largest stored code and the all-ones mask.
    pub fn max_code(self) -> u64 {
        (1u64 << self.0) - 1
    }
}

impl fmt::Display for BitWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl TryFrom<u8> for BitWidth {
    type Error = Error;

    fn try_from(bits: u8) -> Result<Self> {
        BitWidth::new(bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignDigit {
    Plus,
    Minus,
}

impl SignDigit {
    pub fn value(self) -> i8 {
        match self {
            SignDigit::Plus => 1,
            SignDigit::Minus => -1,
        }
    }
}

/// `σ(a) = (1 − a) / 2`.
pub fn sigma(a: SignDigit) -> u8 {
    ((1 - a.value()) / 2) as u8
}

/// Inverse of [`sigma`]. Only the low bit of `bit` is read.
pub fn sigma_inverse(bit: u8) -> SignDigit {
    if bit & 1 == 0 {
        SignDigit::Plus
    } else {
        SignDigit::Minus
    }
}

/// A quantized scalar: the post-σ bits with the most significant digit at
/// bit `width − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScalarCode {
    bits: u8,
    width: BitWidth,
}

impl ScalarCode {
    pub fn new(bits: u8, width: BitWidth) -> Result<Self> {
        if u64::from(bits) > width.max_code() {
            return Err(Error::invalid(format!(
                "code {bits:#b} does not fit in {width} bits"
            )));
        }
        Ok(ScalarCode { bits, width })
    }

    pub(crate) fn from_bits_unchecked(bits: u8, width: BitWidth) -> Self {
        debug_assert!(u64::from(bits) <= width.max_code());
        ScalarCode { bits, width }
    }

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn width(self) -> BitWidth {
        self.width
    }

    /// Sign digits from most to least significant.
    pub fn digits(self) -> Vec<SignDigit> {
        (0..self.width.get())
            .rev()
            .map(|i| sigma_inverse(self.bits >> i))
            .collect()
    }
}

/// Greedy quantizer `f_B`.
///
/// Starting from `x_0 = 0`, digit `a_{B−1−i}` is `+1` when `x ≥ x_i` and `−1`
/// otherwise, and `x_{i+1} = x_i + a_{B−1−i} / 2^{i+1}`. Inputs with
/// `|x| ≥ 1` run through the same recursion and saturate to the all-`+1` or
/// all-`−1` code.
pub fn quantize_scalar(x: f64, width: BitWidth) -> Result<ScalarCode> {
    if !x.is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(quantize_finite(x, width))
}

#[inline]
pub(crate) fn quantize_finite(x: f64, width: BitWidth) -> ScalarCode {
    let b = width.get();
    let mut approx = 0.0f64;
    let mut step = 0.5f64;
    let mut bits = 0u8;
    for i in 0..b {
        if x < approx {
            bits |= 1 << (b - 1 - i);
            approx -= step;
        } else {
            approx += step;
        }
        step *= 0.5;
    }
    ScalarCode::from_bits_unchecked(bits, width)
}

/// The dyadic value `Σ a_i / 2^{B−i}` of a code.
pub fn decode_scalar(code: ScalarCode) -> f64 {
    let b = i32::from(code.width.get());
    // Σ (1 − 2ā_i) 2^i = (2^B − 1) − 2·bits
    let signed = code.width.max_code() as i64 - 2 * i64::from(code.bits);
    signed as f64 * 2f64.powi(-b)
}

/// `x̄ ⊗ ȳ = Σ_{i,j} (ā_i ⊕ c̄_j) << (i + j)`.
pub fn xor_scalar_product(x: ScalarCode, y: ScalarCode) -> u64 {
    let mut acc = 0u64;
    for i in 0..x.width.get() {
        let xi = (x.bits >> i) & 1;
        for j in 0..y.width.get() {
            let yj = (y.bits >> j) & 1;
            acc += u64::from(xi ^ yj) << (i + j);
        }
    }
    acc
}

/// Largest value [`xor_scalar_product`] can return for the given widths.
pub fn scalar_product_upper_bound(x_width: BitWidth, y_width: BitWidth) -> u64 {
    x_width.max_code() * y_width.max_code()
}

/// Maps an ⊗ result back to the product of the decoded scalars:
/// `((2^{B_x} − 1)(2^{B_y} − 1) − 2d) / 2^{B_x + B_y}`.
pub fn decode_scalar_product(d: u64, x_width: BitWidth, y_width: BitWidth) -> Result<f64> {
    let max = scalar_product_upper_bound(x_width, y_width);
    if d > max {
        return Err(Error::DistanceOutOfRange { value: d, max });
    }
    let shift = i32::from(x_width.get()) + i32::from(y_width.get());
    Ok((max as i64 - 2 * d as i64) as f64 * 2f64.powi(-shift))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(b: u8) -> BitWidth {
        BitWidth::new(b).unwrap()
    }

    fn code(bits: u8, b: u8) -> ScalarCode {
        ScalarCode::new(bits, w(b)).unwrap()
    }

    #[test]
    fn sigma_maps_signs_to_bits() {
        assert_eq!(sigma(SignDigit::Plus), 0);
        assert_eq!(sigma(SignDigit::Minus), 1);
        assert_eq!(sigma_inverse(sigma(SignDigit::Minus)), SignDigit::Minus);
        assert_eq!(sigma_inverse(sigma(SignDigit::Plus)), SignDigit::Plus);
    }

    #[test]
    fn digit_product_is_xor() {
        for a in [SignDigit::Plus, SignDigit::Minus] {
            for c in [SignDigit::Plus, SignDigit::Minus] {
                let product = a.value() * c.value();
                assert_eq!(product, 1 - 2 * (sigma(a) ^ sigma(c)) as i8);
            }
        }
    }

    #[test]
    fn width_bounds() {
        assert!(BitWidth::new(0).is_err());
        assert!(BitWidth::new(9).is_err());
        assert_eq!(BitWidth::new(8).unwrap().max_code(), 255);
        assert!(ScalarCode::new(0b1000, w(3)).is_err());
    }

    #[test]
    fn quantize_known_values() {
        use SignDigit::*;
        let c = quantize_scalar(0.3, w(3)).unwrap();
        assert_eq!(c.digits(), vec![Plus, Minus, Plus]);
        assert_eq!(c.bits(), 0b010);
        assert_eq!(decode_scalar(c), 0.375);

        let c = quantize_scalar(0.0, w(3)).unwrap();
        assert_eq!(c.digits(), vec![Plus, Minus, Minus]);
        assert_eq!(c.bits(), 0b011);
        assert_eq!(decode_scalar(c), 0.125);

        let c = quantize_scalar(-0.999, w(3)).unwrap();
        assert_eq!(c.bits(), 0b111);
        assert_eq!(decode_scalar(c), -0.875);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        assert!(quantize_scalar(f64::NAN, w(3)).is_err());
        assert!(quantize_scalar(f64::INFINITY, w(3)).is_err());
    }

    #[test]
    fn saturation() {
        for b in 1..=8 {
            assert_eq!(quantize_scalar(1.0, w(b)).unwrap().bits(), 0);
            assert_eq!(quantize_scalar(7.5, w(b)).unwrap().bits(), 0);
            let all_minus = w(b).max_code() as u8;
            assert_eq!(quantize_scalar(-1.0, w(b)).unwrap().bits(), all_minus);
            assert_eq!(quantize_scalar(-3.0, w(b)).unwrap().bits(), all_minus);
        }
    }

    #[test]
    fn decode_extremes() {
        assert_eq!(decode_scalar(code(0b010, 3)), 0.375);
        assert_eq!(decode_scalar(code(0b000, 3)), 0.875);
        assert_eq!(decode_scalar(code(0b111, 3)), -0.875);
    }

    #[test]
    fn xor_products_by_hand() {
        assert_eq!(xor_scalar_product(code(0b010, 3), code(0b010, 3)), 20);
        assert_eq!(xor_scalar_product(code(0b010, 3), code(0b111, 3)), 35);
        assert_eq!(xor_scalar_product(code(0b000, 3), code(0b000, 3)), 0);
    }

    #[test]
    fn decode_products() {
        assert_eq!(decode_scalar_product(20, w(3), w(3)).unwrap(), 0.140625);
        assert_eq!(decode_scalar_product(0, w(3), w(3)).unwrap(), 0.765625);
        assert_eq!(decode_scalar_product(35, w(3), w(3)).unwrap(), -0.328125);
        assert!(matches!(
            decode_scalar_product(50, w(3), w(3)),
            Err(Error::DistanceOutOfRange { value: 50, max: 49 })
        ));
    }

    #[test]
    fn exhaustive_product_identity_small_widths() {
        for bx in 1..=4u8 {
            for by in 1..=4u8 {
                for xb in 0..=w(bx).max_code() as u8 {
                    for yb in 0..=w(by).max_code() as u8 {
                        let x = code(xb, bx);
                        let y = code(yb, by);
                        let d = xor_scalar_product(x, y);
                        assert!(d <= scalar_product_upper_bound(w(bx), w(by)));
                        assert_eq!(
                            decode_scalar_product(d, w(bx), w(by)).unwrap(),
                            decode_scalar(x) * decode_scalar(y)
                        );
                    }
                }
            }
        }
    }
}
