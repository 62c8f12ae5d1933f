//! Fast Walsh-Hadamard transform and Walsh spectra of arithmetic sequences.
//!
//! After [`fwht_in_place`], entry `A` holds `sum_x f(x) (-1)^{popcount(A & x)}`,
//! i.e. the unnormalized correlation of `f` with `w_A`.

use std::ops::{Add, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::MemoryBudget;
use crate::error::{LabError, Result};
use crate::sieve::{ArithmeticSequence, Values};
use crate::walsh::WalshMask;

/// Default cache block, in entries.
pub const DEFAULT_BLOCK_LEN: usize = 1 << 14;

/// Blocks at least this large are transformed on the rayon pool.
const PARALLEL_MIN_LEN: usize = 1 << 16;

/// Entry type the butterfly can run on.
pub trait Butterfly: Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> {}

impl Butterfly for i64 {}
impl Butterfly for f64 {}

fn log2_len(len: usize) -> Result<u32> {
    if len == 0 || !len.is_power_of_two() {
        return Err(LabError::arg(format!(
            "buffer length {len} is not a power of two"
        )));
    }
    Ok(len.trailing_zeros())
}

/// Stages with half-width `h` in `[from, to)` on a slice whose length is a multiple of `2 to`.
fn stages<T: Butterfly>(data: &mut [T], mut h: usize, to: usize) {
    while h < to {
        for chunk in data.chunks_exact_mut(2 * h) {
            let (lo, hi) = chunk.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// In-place transform with a configurable cache block.
///
/// Stages narrower than the block run block-by-block so each block stays
/// cache resident; wider stages sweep the whole buffer.
pub fn fwht_blocked<T: Butterfly>(data: &mut [T], block_len: usize) -> Result<()> {
    let n = data.len();
    log2_len(n)?;
    let block = block_len.clamp(2, n.max(2)).next_power_of_two().min(n);
    if block >= 2 {
        if n >= PARALLEL_MIN_LEN {
            data.par_chunks_mut(block)
                .for_each(|b| stages(b, 1, block / 2 + 1));
        } else {
            data.chunks_mut(block)
                .for_each(|b| stages(b, 1, block / 2 + 1));
        }
    }
    let mut h = block.max(1);
    while h < n {
        if n >= PARALLEL_MIN_LEN {
            data.par_chunks_mut(2 * h).for_each(|chunk| {
                let (lo, hi) = chunk.split_at_mut(h);
                for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = x + y;
                    *b = x - y;
                }
            });
        } else {
            stages(data, h, h + 1);
        }
        h *= 2;
    }
    Ok(())
}

/// Checks that `|entries| <= n * max|f|` fits in an i64 before an exact transform.
pub fn check_integer_headroom(data: &[i64]) -> Result<()> {
    let max_abs = data.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as u128;
    let bound = max_abs * data.len() as u128;
    if bound > i64::MAX as u128 {
        return Err(LabError::Overflow { bound });
    }
    Ok(())
}

/// Exact integer transform; rejects inputs that could overflow.
pub fn fwht_in_place(data: &mut [i64]) -> Result<()> {
    log2_len(data.len())?;
    check_integer_headroom(data)?;
    fwht_blocked(data, DEFAULT_BLOCK_LEN)
}

pub fn fwht_in_place_f64(data: &mut [f64]) -> Result<()> {
    fwht_blocked(data, DEFAULT_BLOCK_LEN)
}

/// Spectrum entries: exact integers for sign-valued inputs, doubles otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "values", rename_all = "snake_case")]
pub enum SpectrumEntries {
    Exact(Vec<i64>),
    Real(Vec<f64>),
}

/// All `2^lambda` Walsh correlations (raw) or Fourier-Walsh coefficients (normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub lambda: u32,
    pub normalized: bool,
    pub entries: SpectrumEntries,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        match &self.entries {
            SpectrumEntries::Exact(v) => v.len(),
            SpectrumEntries::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, bits: u64) -> f64 {
        match &self.entries {
            SpectrumEntries::Exact(v) => v[bits as usize] as f64,
            SpectrumEntries::Real(v) => v[bits as usize],
        }
    }

    pub fn exact(&self) -> Option<&[i64]> {
        match &self.entries {
            SpectrumEntries::Exact(v) => Some(v),
            SpectrumEntries::Real(_) => None,
        }
    }
}

/// Transform of `seq` under the default memory budget.
pub fn spectrum(seq: &ArithmeticSequence, normalized: bool) -> Result<Spectrum> {
    spectrum_with_budget(seq, normalized, &MemoryBudget::default())
}

pub fn spectrum_with_budget(
    seq: &ArithmeticSequence,
    normalized: bool,
    budget: &MemoryBudget,
) -> Result<Spectrum> {
    let lambda = seq.lambda();
    budget.admit("spectrum", lambda, 8)?;
    let entries = match seq.values() {
        Values::Signed(v) if !normalized => {
            let mut buf: Vec<i64> = v.iter().map(|&e| i64::from(e)).collect();
            fwht_in_place(&mut buf)?;
            SpectrumEntries::Exact(buf)
        }
        values => {
            let mut buf: Vec<f64> = match values {
                Values::Signed(v) => v.iter().map(|&e| f64::from(e)).collect(),
                Values::Real(v) => v.clone(),
            };
            fwht_in_place_f64(&mut buf)?;
            if normalized {
                let scale = (-(lambda as f64)).exp2();
                buf.iter_mut().for_each(|e| *e *= scale);
            }
            SpectrumEntries::Real(buf)
        }
    };
    Ok(Spectrum {
        lambda,
        normalized,
        entries,
    })
}

/// Index of the largest `|entry|`, smallest index on ties.
pub fn argmax_abs(entries: &[i64]) -> (usize, i64) {
    let mut best = (0usize, entries.first().copied().unwrap_or(0));
    for (i, &v) in entries.iter().enumerate().skip(1) {
        if v.unsigned_abs() > best.1.unsigned_abs() {
            best = (i, v);
        }
    }
    best
}

/// `max_A |sum_n f(n) w_A(n)|` over all masks, with the maximizing mask.
///
/// Requires a sign-valued (`-1/0/+1`) table; ties go to the smallest mask.
pub fn max_correlation(seq: &ArithmeticSequence) -> Result<(WalshMask, i64)> {
    max_correlation_with_budget(seq, &MemoryBudget::default())
}

pub fn max_correlation_with_budget(
    seq: &ArithmeticSequence,
    budget: &MemoryBudget,
) -> Result<(WalshMask, i64)> {
    let table = seq
        .signed()
        .ok_or_else(|| LabError::arg("max_correlation needs a sign-valued table"))?;
    if table.iter().any(|&v| !(-1..=1).contains(&v)) {
        return Err(LabError::arg("max_correlation needs entries in {-1, 0, 1}"));
    }
    let spec = spectrum_with_budget(seq, false, budget)?;
    let entries = spec.exact().expect("signed input gives exact spectrum");
    let (idx, value) = argmax_abs(entries);
    Ok((WalshMask::new(idx as u64, seq.lambda())?, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::sieve_moebius;
    use crate::walsh::walsh_sign;

    fn naive(data: &[i64]) -> Vec<i64> {
        let n = data.len() as u64;
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|x| data[x as usize] * i64::from(walsh_sign(a, x)))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn delta_transforms_to_ones() {
        let mut d = vec![1i64, 0, 0, 0];
        fwht_in_place(&mut d).unwrap();
        assert_eq!(d, vec![1, 1, 1, 1]);
    }

    #[test]
    fn moebius_lambda3_mass() {
        let mut d = vec![0i64, 1, -1, -1, 0, -1, 1, -1];
        fwht_in_place(&mut d).unwrap();
        assert_eq!(d[0], -2);
        assert_eq!(d, naive(&[0, 1, -1, -1, 0, -1, 1, -1]));
    }

    #[test]
    fn errors() {
        let mut d = vec![1i64; 6];
        assert!(matches!(fwht_in_place(&mut d), Err(LabError::Argument(_))));
        let mut big = vec![i64::MAX / 2; 4];
        assert!(matches!(
            fwht_in_place(&mut big),
            Err(LabError::Overflow { .. })
        ));
        let mut empty: Vec<i64> = Vec::new();
        assert!(fwht_in_place(&mut empty).is_err());
    }

    #[test]
    fn block_size_is_invisible() {
        let data: Vec<i64> = (0..1 << 12).map(|i| (i * 7919 % 13) as i64 - 6).collect();
        let mut reference = data.clone();
        fwht_blocked(&mut reference, 1 << 20).unwrap();
        for block in [1usize, 2, 8, 64, 4096] {
            let mut d = data.clone();
            fwht_blocked(&mut d, block).unwrap();
            assert_eq!(d, reference, "block {block}");
        }
        assert_eq!(reference, naive(&data));
    }

    #[test]
    fn spectrum_examples() {
        let ones = ArithmeticSequence::custom_signed(3, vec![1; 8]).unwrap();
        let s = spectrum(&ones, false).unwrap();
        assert_eq!(s.exact().unwrap(), &[8, 0, 0, 0, 0, 0, 0, 0]);

        let mu = sieve_moebius(3).unwrap();
        assert_eq!(spectrum(&mu, false).unwrap().get(0), -2.0);
        assert_eq!(spectrum(&mu, true).unwrap().get(0), -0.25);

        let a0 = 0b101u64;
        let w: Vec<i8> = (0..16).map(|x| walsh_sign(a0, x)).collect();
        let seq = ArithmeticSequence::custom_signed(4, w).unwrap();
        let s = spectrum(&seq, true).unwrap();
        for a in 0..16 {
            assert_eq!(s.get(a), if a == a0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn max_correlation_examples() {
        let mu = ArithmeticSequence::custom_signed(2, vec![0, 1, -1, -1]).unwrap();
        let (mask, v) = max_correlation(&mu).unwrap();
        assert_eq!((mask.bits(), v), (0b10, 3));

        let zero = ArithmeticSequence::custom_signed(5, vec![0; 32]).unwrap();
        let (mask, v) = max_correlation(&zero).unwrap();
        assert_eq!((mask.bits(), v), (0, 0));

        for a0 in [0u64, 1, 37, 63] {
            let w: Vec<i8> = (0..64).map(|x| walsh_sign(a0, x)).collect();
            let seq = ArithmeticSequence::custom_signed(6, w).unwrap();
            let (mask, v) = max_correlation(&seq).unwrap();
            assert_eq!((mask.bits(), v), (a0, 64));
        }

        let bad = ArithmeticSequence::custom_signed(1, vec![0, 2]).unwrap();
        assert!(max_correlation(&bad).is_err());
        let real = ArithmeticSequence::custom_real(1, vec![0.0, 1.0]).unwrap();
        assert!(max_correlation(&real).is_err());
    }
}
