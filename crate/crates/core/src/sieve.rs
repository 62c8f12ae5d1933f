//! Segmented sieves for the Moebius, Liouville and von Mangoldt functions.
//!
//! Tables cover `0 <= n < 2^lambda` with a forced zero at index 0, so they can
//! be handed to the Walsh-Hadamard transform without reindexing.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::MemoryBudget;
use crate::error::{LabError, Result};

/// Default sieve segment, in table entries.
pub const DEFAULT_SEGMENT_LEN: usize = 1 << 20;

const DUMP_MAGIC: &[u8; 4] = b"AWS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Moebius,
    Liouville,
    VonMangoldt,
    Custom,
}

impl SequenceKind {
    pub fn name(self) -> &'static str {
        match self {
            SequenceKind::Moebius => "moebius",
            SequenceKind::Liouville => "liouville",
            SequenceKind::VonMangoldt => "von_mangoldt",
            SequenceKind::Custom => "custom",
        }
    }
}

/// Entry storage: small signed integers for the sign-valued functions,
/// doubles for logarithmic weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Signed(Vec<i8>),
    Real(Vec<f64>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::Signed(v) => v.len(),
            Values::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Values of an arithmetic function on `[0, 2^lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArithmeticSequence {
    lambda: u32,
    kind: SequenceKind,
    values: Values,
}

impl ArithmeticSequence {
    fn check_len(lambda: u32, len: usize) -> Result<()> {
        if lambda == 0 || lambda >= usize::BITS || len != 1usize << lambda {
            return Err(LabError::arg(format!(
                "table length {len} does not match 2^{lambda}"
            )));
        }
        Ok(())
    }

    /// Wraps a user-supplied signed table. Index 0 is not forced; the caller owns it.
    pub fn custom_signed(lambda: u32, values: Vec<i8>) -> Result<Self> {
        Self::check_len(lambda, values.len())?;
        Ok(Self {
            lambda,
            kind: SequenceKind::Custom,
            values: Values::Signed(values),
        })
    }

    pub fn custom_real(lambda: u32, values: Vec<f64>) -> Result<Self> {
        Self::check_len(lambda, values.len())?;
        Ok(Self {
            lambda,
            kind: SequenceKind::Custom,
            values: Values::Real(values),
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn signed(&self) -> Option<&[i8]> {
        match &self.values {
            Values::Signed(v) => Some(v),
            Values::Real(_) => None,
        }
    }

    pub fn real(&self) -> Option<&[f64]> {
        match &self.values {
            Values::Real(v) => Some(v),
            Values::Signed(_) => None,
        }
    }

    pub fn get(&self, n: usize) -> f64 {
        match &self.values {
            Values::Signed(v) => f64::from(v[n]),
            Values::Real(v) => v[n],
        }
    }

    /// `sum_{n <= x} f(n)` for signed tables (the Mertens function when `f = mu`).
    pub fn prefix_sum(&self, x: usize) -> Option<i64> {
        self.signed()
            .map(|v| v[..=x.min(v.len() - 1)].iter().map(|&e| i64::from(e)).sum())
    }

    /// Serializes as `AWS1`, lambda (u8), kind (u8), then raw little-endian entries.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        let lambda = u8::try_from(self.lambda)
            .map_err(|_| LabError::arg("lambda does not fit the dump header"))?;
        let code = match (self.kind, &self.values) {
            (SequenceKind::Moebius, _) => 0u8,
            (SequenceKind::Liouville, _) => 1,
            (SequenceKind::VonMangoldt, _) => 2,
            (SequenceKind::Custom, Values::Signed(_)) => 3,
            (SequenceKind::Custom, Values::Real(_)) => 4,
        };
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&[lambda, code])?;
        match &self.values {
            Values::Signed(v) => {
                let bytes: Vec<u8> = v.iter().map(|&e| e as u8).collect();
                out.write_all(&bytes)?;
            }
            Values::Real(v) => {
                let mut bytes = Vec::with_capacity(v.len() * 8);
                for e in v {
                    bytes.extend_from_slice(&e.to_le_bytes());
                }
                out.write_all(&bytes)?;
            }
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let mut header = [0u8; 6];
        input.read_exact(&mut header)?;
        if &header[..4] != DUMP_MAGIC {
            return Err(LabError::Format("bad magic".into()));
        }
        let lambda = u32::from(header[4]);
        if lambda == 0 || lambda >= usize::BITS {
            return Err(LabError::Format(format!("bad lambda {lambda}")));
        }
        let len = 1usize << lambda;
        let (kind, real) = match header[5] {
            0 => (SequenceKind::Moebius, false),
            1 => (SequenceKind::Liouville, false),
            2 => (SequenceKind::VonMangoldt, true),
            3 => (SequenceKind::Custom, false),
            4 => (SequenceKind::Custom, true),
            c => return Err(LabError::Format(format!("unknown kind code {c}"))),
        };
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        let width = if real { 8 } else { 1 };
        if body.len() != len * width {
            return Err(LabError::Format(format!(
                "expected {} payload bytes, found {}",
                len * width,
                body.len()
            )));
        }
        let values = if real {
            Values::Real(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect(),
            )
        } else {
            Values::Signed(body.into_iter().map(|b| b as i8).collect())
        };
        Ok(Self {
            lambda,
            kind,
            values,
        })
    }
}

/// Sieve driver carrying the segment length and memory budget.
#[derive(Debug, Clone, Copy)]
pub struct Sieve {
    pub segment_len: usize,
    pub budget: MemoryBudget,
}

impl Default for Sieve {
    fn default() -> Self {
        Self {
            segment_len: DEFAULT_SEGMENT_LEN,
            budget: MemoryBudget::default(),
        }
    }
}

impl Sieve {
    pub fn with_budget(budget: MemoryBudget) -> Self {
        Self {
            budget,
            ..Self::default()
        }
    }

    fn prepare(&self, lambda: u32, width: u128, kind: SequenceKind) -> Result<(usize, Vec<u64>)> {
        if lambda == 0 {
            return Err(LabError::arg("lambda must be at least 1"));
        }
        if self.segment_len == 0 {
            return Err(LabError::arg("segment length must be positive"));
        }
        self.budget
            .admit(&format!("{} table", kind.name()), lambda, width)?;
        let len = 1usize << lambda;
        Ok((len, base_primes(isqrt(len as u64 - 1))))
    }

    pub fn moebius(&self, lambda: u32) -> Result<ArithmeticSequence> {
        let (len, primes) = self.prepare(lambda, 1, SequenceKind::Moebius)?;
        let mut values = vec![0i8; len];
        values
            .par_chunks_mut(self.segment_len)
            .enumerate()
            .for_each(|(i, seg)| {
                sign_segment(
                    seg,
                    (i * self.segment_len) as u64,
                    &primes,
                    SignRule::Moebius,
                )
            });
        Ok(ArithmeticSequence {
            lambda,
            kind: SequenceKind::Moebius,
            values: Values::Signed(values),
        })
    }

    pub fn liouville(&self, lambda: u32) -> Result<ArithmeticSequence> {
        let (len, primes) = self.prepare(lambda, 1, SequenceKind::Liouville)?;
        let mut values = vec![0i8; len];
        values
            .par_chunks_mut(self.segment_len)
            .enumerate()
            .for_each(|(i, seg)| {
                sign_segment(
                    seg,
                    (i * self.segment_len) as u64,
                    &primes,
                    SignRule::Liouville,
                )
            });
        Ok(ArithmeticSequence {
            lambda,
            kind: SequenceKind::Liouville,
            values: Values::Signed(values),
        })
    }

    pub fn von_mangoldt(&self, lambda: u32) -> Result<ArithmeticSequence> {
        let (len, primes) = self.prepare(lambda, 8, SequenceKind::VonMangoldt)?;
        let mut values = vec![0f64; len];
        values
            .par_chunks_mut(self.segment_len)
            .enumerate()
            .for_each(|(i, seg)| mangoldt_segment(seg, (i * self.segment_len) as u64, &primes));
        Ok(ArithmeticSequence {
            lambda,
            kind: SequenceKind::VonMangoldt,
            values: Values::Real(values),
        })
    }

    pub fn sieve(&self, kind: SequenceKind, lambda: u32) -> Result<ArithmeticSequence> {
        match kind {
            SequenceKind::Moebius => self.moebius(lambda),
            SequenceKind::Liouville => self.liouville(lambda),
            SequenceKind::VonMangoldt => self.von_mangoldt(lambda),
            SequenceKind::Custom => Err(LabError::arg("custom sequences are not sieved")),
        }
    }
}

pub fn sieve_moebius(lambda: u32) -> Result<ArithmeticSequence> {
    Sieve::default().moebius(lambda)
}

pub fn sieve_liouville(lambda: u32) -> Result<ArithmeticSequence> {
    Sieve::default().liouville(lambda)
}

pub fn sieve_von_mangoldt(lambda: u32) -> Result<ArithmeticSequence> {
    Sieve::default().von_mangoldt(lambda)
}

fn isqrt(n: u64) -> u64 {
    let mut x = (n as f64).sqrt() as u64;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Primes `<= limit` by a plain Eratosthenes sieve.
fn base_primes(limit: u64) -> Vec<u64> {
    let limit = limit as usize;
    if limit < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::new();
    for p in 2..=limit {
        if composite[p] {
            continue;
        }
        primes.push(p as u64);
        let mut q = p * p;
        while q <= limit {
            composite[q] = true;
            q += p;
        }
    }
    primes
}

#[derive(Clone, Copy)]
enum SignRule {
    Moebius,
    Liouville,
}

/// Fills `seg[i] = f(lo + i)` for the sign-valued functions by dividing out
/// every prime up to `sqrt(n)`; a remaining cofactor above one is a single large prime.
fn sign_segment(seg: &mut [i8], lo: u64, primes: &[u64], rule: SignRule) {
    let hi = lo + seg.len() as u64;
    let mut rest: Vec<u64> = (lo..hi).collect();
    let mut sign = vec![1i8; seg.len()];
    for &p in primes {
        if p * p >= hi {
            break;
        }
        let first = lo.div_ceil(p).max(1) * p;
        let mut n = first;
        while n < hi {
            let i = (n - lo) as usize;
            let mut e = 0u32;
            while rest[i].is_multiple_of(p) {
                rest[i] /= p;
                e += 1;
            }
            match rule {
                SignRule::Moebius if e >= 2 => sign[i] = 0,
                _ if e % 2 == 1 => sign[i] = -sign[i],
                _ => {}
            }
            n += p;
        }
    }
    for (i, out) in seg.iter_mut().enumerate() {
        let n = lo + i as u64;
        *out = if n == 0 {
            0
        } else if rest[i] > 1 {
            -sign[i]
        } else {
            sign[i]
        };
    }
}

fn mangoldt_segment(seg: &mut [f64], lo: u64, primes: &[u64]) {
    let hi = lo + seg.len() as u64;
    let mut composite = vec![false; seg.len()];
    for &p in primes {
        if p * p >= hi {
            break;
        }
        let start = (lo.div_ceil(p) * p).max(p * p);
        let mut n = start;
        while n < hi {
            composite[(n - lo) as usize] = true;
            n += p;
        }
    }
    for (i, out) in seg.iter_mut().enumerate() {
        let n = lo + i as u64;
        *out = if n >= 2 && !composite[i] {
            (n as f64).ln()
        } else {
            0.0
        };
    }
    // Higher prime powers were marked composite above.
    for &p in primes {
        let mut q = p.saturating_mul(p);
        if q >= hi {
            break;
        }
        let lp = (p as f64).ln();
        while q < hi {
            if q >= lo {
                seg[(q - lo) as usize] = lp;
            }
            match q.checked_mul(p) {
                Some(next) => q = next,
                None => break,
            }
        }
    }
}
