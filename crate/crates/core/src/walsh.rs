//! Walsh functions on `{0,1}^lambda` and their additive-character coefficients.
//!
//! For `x < 2^lambda`, `w_A(x) = sum_k what_A(k) e(kx / 2^lambda)` where the
//! coefficient factors as a product over bit positions:
//!
//! ```text
//! what_A(k) = prod_{j not in A} (1 + e(-k 2^{j-lambda})) / 2 * prod_{j in A} (1 - e(-k 2^{j-lambda})) / 2
//! |what_A(k)| = prod_{j not in A} |cos(pi k 2^{j-lambda})| * prod_{j in A} |sin(pi k 2^{j-lambda})|
//! ```
//!
//! Every angle `k 2^{j-lambda}` is reduced modulo one as an exact dyadic
//! rational before it is scaled by pi, so arguments stay exact up to lambda 52.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Largest bit-length a mask may live in (products in the bilinear sums use up to 63 bits).
pub const MAX_MASK_LAMBDA: u32 = 63;

/// A subset `A` of `{0, .., lambda-1}` stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WalshMask {
    bits: u64,
    lambda: u32,
}

impl WalshMask {
    pub fn new(bits: u64, lambda: u32) -> Result<Self> {
        if lambda > MAX_MASK_LAMBDA {
            return Err(LabError::arg(format!(
                "lambda {lambda} exceeds {MAX_MASK_LAMBDA}"
            )));
        }
        if bits >> lambda != 0 {
            return Err(LabError::arg(format!(
                "mask {bits:#b} has bits outside [0, {lambda})"
            )));
        }
        Ok(Self { bits, lambda })
    }

    pub fn empty(lambda: u32) -> Self {
        Self { bits: 0, lambda }
    }

    pub fn full(lambda: u32) -> Self {
        Self {
            bits: low_bits(lambda),
            lambda,
        }
    }

    pub fn from_positions(positions: &[u32], lambda: u32) -> Result<Self> {
        let mut bits = 0u64;
        for &j in positions {
            if j >= lambda {
                return Err(LabError::arg(format!("position {j} outside [0, {lambda})")));
            }
            bits |= 1 << j;
        }
        Self::new(bits, lambda)
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn lambda(self) -> u32 {
        self.lambda
    }

    /// `|A|`.
    pub fn weight(self) -> u32 {
        self.bits.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    pub fn contains(self, j: u32) -> bool {
        j < 64 && self.bits >> j & 1 == 1
    }

    pub fn positions(self) -> impl Iterator<Item = u32> {
        (0..self.lambda).filter(move |&j| self.bits >> j & 1 == 1)
    }

    /// `A` symmetric-difference `B`; the pointwise product of the two characters.
    pub fn symmetric_difference(self, other: Self) -> Self {
        Self {
            bits: self.bits ^ other.bits,
            lambda: self.lambda.max(other.lambda),
        }
    }

    /// Same subset viewed in a different ambient bit-length.
    pub fn with_lambda(self, lambda: u32) -> Result<Self> {
        Self::new(self.bits, lambda)
    }
}

impl fmt::Display for WalshMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, j) in self.positions().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str("}")
    }
}

pub(crate) fn low_bits(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// The 1-periodic square wave: `+1` on `[0, 1/2)`, `-1` on `[1/2, 1)`.
pub fn step_h(x: f64) -> i8 {
    let frac = x - x.floor();
    if frac < 0.5 {
        1
    } else {
        -1
    }
}

/// `(-1)^{popcount(bits & x)}` without range checks; bits are absolute positions.
#[inline]
pub fn walsh_sign(bits: u64, x: u64) -> i8 {
    1 - 2 * ((bits & x).count_ones() & 1) as i8
}

/// `w_A(x) = prod_{j in A} (1 - 2 x_j)` for `x < 2^lambda`.
pub fn walsh_eval(mask: WalshMask, x: u64) -> Result<i8> {
    if x >> mask.lambda != 0 {
        return Err(LabError::arg(format!(
            "x = {x} outside [0, 2^{})",
            mask.lambda
        )));
    }
    Ok(walsh_sign(mask.bits, x))
}

/// Coefficient of `e(kx / 2^lambda)` in the expansion of `w_A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigCoefficient {
    pub k: u64,
    pub value: Complex64,
    pub magnitude: f64,
}

/// Reduces a possibly negative frequency into `[0, 2^lambda)`.
pub fn normalize_frequency(k: i64, lambda: u32) -> u64 {
    (k as i128).rem_euclid(1i128 << lambda) as u64
}

/// Distance from `k` to the nearest multiple of `2^lambda`.
pub fn symmetric_abs(k: u64, lambda: u32) -> u64 {
    let k = k & low_bits(lambda);
    k.min((1u64 << lambda) - k)
}

/// `(|cos pi r / 2^s|, |sin pi r / 2^s|)` for `r < 2^s`.
///
/// The angle is folded into `[0, pi/4]` first, so the zeros at multiples of
/// `pi/2` come out exact and `r`, `2^s - r` give bit-identical values.
#[inline]
pub(crate) fn abs_cos_sin(r: u64, s: u32) -> (f64, f64) {
    if s == 0 {
        return (1.0, 0.0);
    }
    let full = 1u64 << s;
    let r = r.min(full - r);
    let scale = (s as f64).exp2();
    if r <= full >> 2 {
        let a = PI * (r as f64 / scale);
        (a.cos(), a.sin())
    } else {
        let a = PI * (((full >> 1) - r) as f64 / scale);
        (a.sin(), a.cos())
    }
}

fn check_frequency(mask: WalshMask, k: u64) -> Result<()> {
    if k >> mask.lambda != 0 {
        return Err(LabError::arg(format!(
            "frequency {k} outside [0, 2^{})",
            mask.lambda
        )));
    }
    Ok(())
}

/// Product-formula coefficient, O(lambda) per call.
pub fn trig_coefficient(mask: WalshMask, k: u64) -> Result<TrigCoefficient> {
    check_frequency(mask, k)?;
    let mut value = Complex64::new(1.0, 0.0);
    for j in 0..mask.lambda {
        // (1 +- e(-theta)) / 2 = e(-theta/2) cos(pi theta)  or  e(-theta/2) i sin(pi theta)
        let shift = mask.lambda - j;
        let r = k & low_bits(shift);
        let (c, s) = abs_cos_sin(r, shift);
        let half_turn = Complex64::from_polar(1.0, -PI * (r as f64 / (shift as f64).exp2()));
        let factor = if mask.contains(j) {
            Complex64::new(0.0, s)
        } else if r > 1u64 << (shift - 1) {
            Complex64::new(-c, 0.0)
        } else {
            Complex64::new(c, 0.0)
        };
        value *= half_turn * factor;
    }
    Ok(TrigCoefficient {
        k,
        value,
        magnitude: trig_magnitude(mask, k),
    })
}

/// `|what_A(k)|` via the cos/sin product; `k` is taken modulo `2^lambda`.
pub fn trig_magnitude(mask: WalshMask, k: u64) -> f64 {
    let mut m = 1.0;
    for j in 0..mask.lambda {
        let shift = mask.lambda - j;
        let (c, s) = abs_cos_sin(k & low_bits(shift), shift);
        m *= if mask.contains(j) { s } else { c };
        if m == 0.0 {
            break;
        }
    }
    m
}

/// `e(j / 2^lambda)` for `j < 2^lambda`, each angle formed from an exact dyadic ratio.
pub fn twiddle_table(lambda: u32) -> Vec<Complex64> {
    let scale = (lambda as f64).exp2();
    (0..1u64 << lambda)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * (j as f64 / scale)))
        .collect()
}

/// Which frequencies an l1 sum runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FrequencySelector {
    /// All of `[0, 2^lambda)`.
    Full,
    /// `k = a (mod 2^r)`.
    Residue { r: u32, a: u64 },
    /// The half-open interval `[start, end)`.
    Interval { start: u64, end: u64 },
}

impl FrequencySelector {
    pub fn validate(&self, lambda: u32) -> Result<()> {
        match *self {
            FrequencySelector::Full => Ok(()),
            FrequencySelector::Residue { r, a } => {
                if r >= lambda {
                    Err(LabError::arg(format!(
                        "residue modulus 2^{r} needs r < lambda = {lambda}"
                    )))
                } else if a >> r != 0 {
                    Err(LabError::arg(format!("residue a = {a} not below 2^{r}")))
                } else {
                    Ok(())
                }
            }
            FrequencySelector::Interval { start, end } => {
                if start >= end {
                    Err(LabError::arg(format!("empty interval [{start}, {end})")))
                } else if end > 1u64 << lambda {
                    Err(LabError::arg(format!(
                        "interval end {end} beyond 2^{lambda}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Frequencies selected, in increasing order.
    pub fn frequencies(&self, lambda: u32) -> Box<dyn Iterator<Item = u64>> {
        match *self {
            FrequencySelector::Full => Box::new(0..1u64 << lambda),
            FrequencySelector::Residue { r, a } => {
                Box::new((0..1u64 << (lambda - r)).map(move |k1| a + (k1 << r)))
            }
            FrequencySelector::Interval { start, end } => Box::new(start..end),
        }
    }

    pub fn count(&self, lambda: u32) -> u64 {
        match *self {
            FrequencySelector::Full => 1 << lambda,
            FrequencySelector::Residue { r, .. } => 1 << (lambda - r),
            FrequencySelector::Interval { start, end } => end - start,
        }
    }
}

/// Exact (streamed) sum of `|what_A(k)|` over the selected frequencies.
pub fn l1_accumulate(mask: WalshMask, selector: FrequencySelector) -> Result<f64> {
    selector.validate(mask.lambda)?;
    Ok(selector
        .frequencies(mask.lambda)
        .map(|k| trig_magnitude(mask, k))
        .sum())
}

/// Precomputed `|cos|`/`|sin|` tables at one bit-length, for exhaustive scans.
///
/// `|cos(pi k 2^{j-lambda})| = |cos(pi ((k << j) mod 2^lambda) / 2^lambda)|`, so one
/// table of length `2^lambda` serves every bit position. Values agree bit-for-bit
/// with [`trig_magnitude`] because both fold the same dyadic angle.
#[derive(Debug, Clone)]
pub struct MagnitudeKernel {
    lambda: u32,
    abs_cos: Vec<f64>,
    abs_sin: Vec<f64>,
}

impl MagnitudeKernel {
    pub fn new(lambda: u32) -> Result<Self> {
        if lambda == 0 || lambda > 26 {
            return Err(LabError::arg(format!(
                "kernel lambda {lambda} outside [1, 26]"
            )));
        }
        let n = 1usize << lambda;
        let (abs_cos, abs_sin) = (0..n as u64).map(|r| abs_cos_sin(r, lambda)).unzip();
        Ok(Self {
            lambda,
            abs_cos,
            abs_sin,
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    #[inline]
    pub fn magnitude(&self, bits: u64, k: u64) -> f64 {
        let lmask = low_bits(self.lambda);
        let mut m = 1.0;
        for j in 0..self.lambda {
            let idx = ((k << j) & lmask) as usize;
            m *= if bits >> j & 1 == 1 {
                self.abs_sin[idx]
            } else {
                self.abs_cos[idx]
            };
        }
        m
    }

    pub fn l1(&self, mask: WalshMask, selector: FrequencySelector) -> Result<f64> {
        if mask.lambda != self.lambda {
            return Err(LabError::arg("mask and kernel bit-lengths differ"));
        }
        selector.validate(self.lambda)?;
        Ok(selector
            .frequencies(self.lambda)
            .map(|k| self.magnitude(mask.bits, k))
            .sum())
    }

    /// `max_k |what_A(k)|` and the smallest maximizing frequency.
    pub fn sup(&self, mask: WalshMask) -> (u64, f64) {
        let mut best = (0u64, f64::NEG_INFINITY);
        for k in 0..1u64 << self.lambda {
            let m = self.magnitude(mask.bits, k);
            if m > best.1 {
                best = (k, m);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `2^{-lambda} sum_x w_A(x) e(-kx / 2^lambda)`, the coefficient by direct summation.
    fn dft_oracle(mask: WalshMask, k: u64) -> Complex64 {
        let n = 1u64 << mask.lambda();
        let mut acc = Complex64::new(0.0, 0.0);
        for x in 0..n {
            let phase = -2.0 * PI * ((k * x) % n) as f64 / n as f64;
            acc += Complex64::from_polar(f64::from(walsh_sign(mask.bits(), x)), phase);
        }
        acc / n as f64
    }

    #[test]
    fn step_h_values() {
        assert_eq!(step_h(0.25), 1);
        assert_eq!(step_h(0.5), -1);
        assert_eq!(step_h(1.75), -1);
        assert_eq!(step_h(-0.25), -1);
        assert_eq!(step_h(0.0), 1);
    }

    #[test]
    fn walsh_eval_examples() {
        assert_eq!(walsh_eval(WalshMask::empty(4), 13).unwrap(), 1);
        let a0 = WalshMask::from_positions(&[0], 2).unwrap();
        assert_eq!(walsh_eval(a0, 3).unwrap(), -1);
        let a01 = WalshMask::from_positions(&[0, 1], 2).unwrap();
        assert_eq!(walsh_eval(a01, 2).unwrap(), -1);
        assert!(walsh_eval(a01, 4).is_err());
    }

    #[test]
    fn mask_validation_and_display() {
        assert!(WalshMask::new(0b1000, 3).is_err());
        let m = WalshMask::from_positions(&[1, 4], 6).unwrap();
        assert_eq!(m.to_string(), "{1,4}");
        assert_eq!(m.weight(), 2);
        assert!(WalshMask::from_positions(&[6], 6).is_err());
    }

    #[test]
    fn trig_coefficient_examples() {
        let c = trig_coefficient(WalshMask::empty(5), 0).unwrap();
        assert!((c.magnitude - 1.0).abs() < 1e-15);
        let a = WalshMask::from_positions(&[3], 5).unwrap();
        assert_eq!(trig_coefficient(a, 0).unwrap().magnitude, 0.0);

        let a2 = WalshMask::from_positions(&[2], 3).unwrap();
        let c = trig_coefficient(a2, 1).unwrap();
        let expected = (PI / 2.0).sin() * (PI / 4.0).cos() * (PI / 8.0).cos();
        assert!((c.magnitude - expected).abs() < 1e-15);
        assert!((c.magnitude - 0.65328).abs() < 1e-5);
        assert!((dft_oracle(a2, 1).norm() - c.magnitude).abs() < 1e-12);
        assert!(trig_coefficient(a2, 8).is_err());
    }

    #[test]
    fn complex_value_matches_dft_sign_convention() {
        // w_A(x) = sum_k c_k e(kx/2^lambda) with c_k = 2^-lambda sum_x w_A(x) e(-kx/2^lambda).
        for lambda in 1..=6 {
            for bits in 0..1u64 << lambda {
                let mask = WalshMask::new(bits, lambda).unwrap();
                for k in 0..1u64 << lambda {
                    let c = trig_coefficient(mask, k).unwrap();
                    let d = dft_oracle(mask, k);
                    assert!((c.value - d).norm() < 1e-12, "{mask} k={k}");
                    assert!((c.value.norm() - c.magnitude).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn l1_examples_and_errors() {
        let full = FrequencySelector::Full;
        assert!((l1_accumulate(WalshMask::empty(1), full).unwrap() - 1.0).abs() < 1e-15);
        let a0 = WalshMask::from_positions(&[0], 1).unwrap();
        assert!((l1_accumulate(a0, full).unwrap() - 1.0).abs() < 1e-15);

        let a = WalshMask::from_positions(&[2], 5).unwrap();
        let single = FrequencySelector::Interval { start: 0, end: 1 };
        assert_eq!(l1_accumulate(a, single).unwrap(), 0.0);

        assert!(l1_accumulate(a, FrequencySelector::Residue { r: 2, a: 4 }).is_err());
        assert!(l1_accumulate(a, FrequencySelector::Residue { r: 5, a: 0 }).is_err());
        assert!(l1_accumulate(a, FrequencySelector::Interval { start: 3, end: 3 }).is_err());
        assert!(l1_accumulate(a, FrequencySelector::Interval { start: 3, end: 33 }).is_err());
    }

    #[test]
    fn kernel_agrees_with_direct_product() {
        for lambda in [1u32, 5, 9] {
            let kernel = MagnitudeKernel::new(lambda).unwrap();
            for bits in (0..1u64 << lambda).step_by(3) {
                let mask = WalshMask::new(bits, lambda).unwrap();
                for k in 0..1u64 << lambda {
                    assert_eq!(kernel.magnitude(bits, k), trig_magnitude(mask, k));
                }
            }
        }
    }

    #[test]
    fn step_function_product_matches_walsh() {
        for lambda in 1..=10u32 {
            for bits in (0..1u64 << lambda).step_by(7) {
                let mask = WalshMask::new(bits, lambda).unwrap();
                for x in 0..1u64 << lambda {
                    let via_h: i8 = mask
                        .positions()
                        .map(|j| step_h(x as f64 / (j as f64 + 1.0).exp2()))
                        .product();
                    assert_eq!(via_h, walsh_eval(mask, x).unwrap());
                }
            }
        }
    }

    #[test]
    fn negative_frequencies_wrap() {
        assert_eq!(normalize_frequency(-1, 4), 15);
        assert_eq!(normalize_frequency(17, 4), 1);
        assert_eq!(symmetric_abs(15, 4), 1);
        assert_eq!(symmetric_abs(8, 4), 8);
        assert_eq!(symmetric_abs(0, 4), 0);
    }
}
