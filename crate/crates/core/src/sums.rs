//! Exact desk-scale evaluation of the sums around `sum_n mu(n) w_S(n)`.
//!
//! Ranges are dyadic: `m ~ M` means `M <= m < 2M` with `M = 2^mu`, and likewise
//! for `n ~ N`. Products `mn` are evaluated against `w_S` in absolute bit
//! positions, so `S` may use any of the `mu + nu + 2` bits a product can carry.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::budget::MemoryBudget;
use crate::error::{LabError, Result};
use crate::fwht::max_correlation_with_budget;
use crate::lemmas::{Brackets, CheckReport, LemmaId};
use crate::params;
use crate::sieve::{ArithmeticSequence, SequenceKind, Sieve, Values};
use crate::walsh::{
    low_bits, symmetric_abs, trig_coefficient, twiddle_table, walsh_sign, MagnitudeKernel,
    WalshMask,
};

/// Dyadic exponents are capped so that products of shifted values stay below 2^62.
pub const MAX_PRODUCT_BITS: u32 = 58;

/// Theorem-1 right-hand side `2^{lambda - lambda^{1/10}}`.
pub fn theorem1_bound(lambda: u32) -> f64 {
    let l = f64::from(lambda);
    (l - l.powf(0.1)).exp2()
}

/// Per-lambda maximal Walsh correlation of mu or Liouville against the Theorem-1 bound.
pub fn theorem_scan(
    kind: SequenceKind,
    lambdas: &[u32],
    budget: &MemoryBudget,
) -> Result<Vec<CheckReport>> {
    if !matches!(kind, SequenceKind::Moebius | SequenceKind::Liouville) {
        return Err(LabError::arg("theorem scan runs on moebius or liouville"));
    }
    let Some(&top) = lambdas.iter().max() else {
        return Ok(Vec::new());
    };
    let table = Sieve::with_budget(*budget).sieve(kind, top)?;
    let full = table.signed().expect("sign-valued sieve");
    lambdas
        .iter()
        .map(|&lambda| {
            let seq = ArithmeticSequence::custom_signed(lambda, full[..1usize << lambda].to_vec())?;
            let mut report = correlation_report(&seq, budget)?;
            report.params.insert("kind".into(), json!(kind.name()));
            Ok(report)
        })
        .collect()
}

/// THM1 report for an arbitrary sign-valued table.
pub fn correlation_report(seq: &ArithmeticSequence, budget: &MemoryBudget) -> Result<CheckReport> {
    let lambda = seq.lambda();
    let (mask, value) = max_correlation_with_budget(seq, budget)?;
    let lhs = value.unsigned_abs() as f64;
    let rhs = theorem1_bound(lambda);
    let exponent = if value == 0 {
        None
    } else {
        Some(lhs.log2() / f64::from(lambda))
    };
    let params = params! {
        "kind" => seq.kind().name(),
        "lambda" => lambda,
        "mask" => mask.bits(),
        "mask_weight" => mask.weight(),
        "value" => value,
        "empirical_exponent" => exponent,
    };
    Ok(CheckReport::new(
        LemmaId::Thm1,
        lambda,
        params,
        lhs,
        rhs,
        exponent,
        lhs < rhs,
    ))
}

/// Coefficients `alpha_m` / `beta_n` on a dyadic range, `|c| <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficients {
    Ones,
    Zeros,
    /// Independent uniform signs from a seeded ChaCha8 stream.
    RandomSigns {
        seed: u64,
    },
    /// Explicit values, one per element of the range.
    Values {
        values: Vec<f64>,
    },
}

impl Coefficients {
    pub fn materialize(&self, exp: u32) -> Result<Vec<f64>> {
        let len = 1usize << exp;
        match self {
            Coefficients::Ones => Ok(vec![1.0; len]),
            Coefficients::Zeros => Ok(vec![0.0; len]),
            Coefficients::RandomSigns { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..len)
                    .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
                    .collect())
            }
            Coefficients::Values { values } => {
                if values.len() != len {
                    return Err(LabError::arg(format!(
                        "{} coefficients supplied for a range of {len}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| v.is_nan() || v.abs() > 1.0) {
                    return Err(LabError::arg("coefficients must satisfy |c| <= 1"));
                }
                Ok(values.clone())
            }
        }
    }
}

/// Type-II configuration: `M = 2^mu <= N = 2^nu`, `L = 2^rho` shifts of step `2^K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearConfig {
    /// `S` in absolute bit positions below `mu + nu + 2`.
    pub mask: u64,
    pub mu: u32,
    pub nu: u32,
    pub alpha: Coefficients,
    pub beta: Coefficients,
    pub rho: u32,
    pub k_shift: u32,
    pub epsilon: f64,
}

/// Conditions outside the asymptotic regime; reported, never fatal.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimeFlags {
    /// `rho >= mu / 100`.
    pub rho_large: bool,
    /// `K` is neither 0 nor in `[mu - rho, lambda - mu - rho)`.
    pub k_outside_window: bool,
    /// `eps * rho` is not a positive integer.
    pub eps_rho_not_integer: bool,
}

impl BilinearConfig {
    pub fn new(mask: u64, mu: u32, nu: u32) -> Self {
        Self {
            mask,
            mu,
            nu,
            alpha: Coefficients::Ones,
            beta: Coefficients::Ones,
            rho: 0,
            k_shift: 0,
            epsilon: 0.5,
        }
    }

    /// `lambda = mu + nu`.
    pub fn lambda(&self) -> u32 {
        self.mu + self.nu
    }

    /// Bits a product `mn` can occupy.
    pub fn product_bits(&self) -> u32 {
        self.mu + self.nu + 2
    }

    pub fn m_len(&self) -> u64 {
        1 << self.mu
    }

    pub fn n_len(&self) -> u64 {
        1 << self.nu
    }

    pub fn shifts(&self) -> u64 {
        1 << self.rho
    }

    pub fn eps_rho(&self) -> f64 {
        self.epsilon * f64::from(self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu > self.nu {
            return Err(LabError::arg(format!(
                "need M <= N, got mu = {} > nu = {}",
                self.mu, self.nu
            )));
        }
        if self.product_bits() + 1 > MAX_PRODUCT_BITS {
            return Err(LabError::arg(format!(
                "mu + nu = {} overflows the {MAX_PRODUCT_BITS}-bit product range",
                self.lambda()
            )));
        }
        if self.mask >> self.product_bits() != 0 {
            return Err(LabError::arg(format!(
                "mask {:#b} reaches beyond the {} product bits",
                self.mask,
                self.product_bits()
            )));
        }
        if self.rho + self.k_shift >= self.nu {
            return Err(LabError::arg(format!(
                "need L 2^K < N: rho + K = {} >= nu = {}",
                self.rho + self.k_shift,
                self.nu
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(LabError::arg("epsilon must be positive"));
        }
        Ok(())
    }

    pub fn flags(&self) -> RegimeFlags {
        let lambda = self.lambda();
        let k = self.k_shift;
        let in_window =
            self.mu >= self.rho && k >= self.mu - self.rho && k + self.mu + self.rho < lambda;
        let er = self.eps_rho();
        RegimeFlags {
            rho_large: 100 * self.rho >= self.mu,
            k_outside_window: k != 0 && !in_window,
            eps_rho_not_integer: !(er > 0.0 && er.fract() == 0.0),
        }
    }

    fn base_params(&self) -> BTreeMap<String, serde_json::Value> {
        params! {
            "mask" => self.mask,
            "mu" => self.mu,
            "nu" => self.nu,
            "rho" => self.rho,
            "K" => self.k_shift,
            "epsilon" => self.epsilon,
            "alpha" => self.alpha,
            "beta" => self.beta,
            "flags" => self.flags(),
        }
    }
}

fn inner_sum(mask: u64, m: u64, n0: u64, beta: &[f64]) -> f64 {
    beta.iter()
        .enumerate()
        .map(|(i, &b)| b * f64::from(walsh_sign(mask, m * (n0 + i as u64))))
        .sum()
}

/// `sum_{m ~ M} |sum_{n ~ N} beta_n w_S(mn)|`.
pub fn bilinear_sum(cfg: &BilinearConfig) -> Result<f64> {
    cfg.validate()?;
    let beta = cfg.beta.materialize(cfg.nu)?;
    let (m0, n0) = (cfg.m_len(), cfg.n_len());
    let parts: Vec<f64> = (m0..2 * m0)
        .into_par_iter()
        .map(|m| inner_sum(cfg.mask, m, n0, &beta).abs())
        .collect();
    Ok(parts.iter().sum())
}

/// Bilinear sum against the trivial bound `M sum |beta_n|`.
pub fn bilinear_report(cfg: &BilinearConfig) -> Result<CheckReport> {
    let value = bilinear_sum(cfg)?;
    let beta_mass: f64 = cfg.beta.materialize(cfg.nu)?.iter().map(|b| b.abs()).sum();
    let rhs = cfg.m_len() as f64 * beta_mass;
    let mut params = cfg.base_params();
    params.insert("bilinear_sum".into(), json!(value));
    params.insert("alpha_form".into(), json!(bilinear_form(cfg)?));
    let implied = if rhs > 0.0 { Some(value / rhs) } else { None };
    Ok(CheckReport::new(
        LemmaId::Type2,
        cfg.lambda(),
        params,
        value,
        rhs,
        implied,
        value <= rhs * (1.0 + 1e-12),
    ))
}

/// `|sum_{m ~ M, n ~ N} alpha_m beta_n w_S(mn)|` for concrete coefficients.
pub fn bilinear_form(cfg: &BilinearConfig) -> Result<f64> {
    cfg.validate()?;
    let alpha = cfg.alpha.materialize(cfg.mu)?;
    let beta = cfg.beta.materialize(cfg.nu)?;
    let (m0, n0) = (cfg.m_len(), cfg.n_len());
    let parts: Vec<f64> = (0..m0)
        .into_par_iter()
        .map(|i| alpha[i as usize] * inner_sum(cfg.mask, m0 + i, n0, &beta))
        .collect();
    Ok(parts.iter().sum::<f64>().abs())
}

/// `sum_{m ~ M} |sum_{n ~ N} w_S(mn)|`, exact.
pub fn type1_sum(mask: u64, mu: u32, nu: u32) -> Result<u64> {
    let cfg = BilinearConfig::new(mask, mu, nu);
    cfg.validate()?;
    let (m0, n0) = (cfg.m_len(), cfg.n_len());
    let parts: Vec<u64> = (m0..2 * m0)
        .into_par_iter()
        .map(|m| {
            (n0..2 * n0)
                .map(|n| i64::from(walsh_sign(mask, m * n)))
                .sum::<i64>()
                .unsigned_abs()
        })
        .collect();
    Ok(parts.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    /// `sum_{n ~ N, |l| < L} |sum_{m ~ M} w_S(mn) w_S(m(n + l 2^K))|`.
    pub value: u64,
    /// The `l = 0` part, always `M N`.
    pub diagonal: u64,
    /// `M N / L`, reported separately.
    pub prefactor: f64,
    /// Pairs `(n, l)` whose shifted point `n + l 2^K` leaves `[N, 2N)`; still summed.
    pub out_of_range_shifts: u64,
}

pub fn shifted_quadratic_form(cfg: &BilinearConfig) -> Result<QuadraticForm> {
    cfg.validate()?;
    let (m0, n0) = (cfg.m_len(), cfg.n_len());
    let l = cfg.shifts() as i64;
    let step = 1i64 << cfg.k_shift;
    let mask = cfg.mask;
    let rows: Vec<(u64, u64, u64)> = (n0..2 * n0)
        .into_par_iter()
        .map(|n| {
            let mut total = 0u64;
            let mut diag = 0u64;
            let mut outside = 0u64;
            for ell in -(l - 1)..l {
                // n + l 2^K > 0 because L 2^K < N.
                let shifted = (n as i64 + ell * step) as u64;
                if !(n0..2 * n0).contains(&shifted) {
                    outside += 1;
                }
                let s: i64 = (m0..2 * m0)
                    .map(|m| i64::from(walsh_sign(mask, m * n) * walsh_sign(mask, m * shifted)))
                    .sum();
                total += s.unsigned_abs();
                if ell == 0 {
                    diag += s.unsigned_abs();
                }
            }
            (total, diag, outside)
        })
        .collect();
    let (value, diagonal, out_of_range_shifts) = rows
        .iter()
        .fold((0, 0, 0), |acc, r| (acc.0 + r.0, acc.1 + r.1, acc.2 + r.2));
    Ok(QuadraticForm {
        value,
        diagonal,
        prefactor: (m0 * n0) as f64 / l as f64,
        out_of_range_shifts,
    })
}

/// Cauchy-Schwarz / van der Corput chain from the bilinear sum to the quadratic form:
/// `B^2 <= M (N + (L - 1) 2^K) / L * Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub bilinear: f64,
    pub quadratic: QuadraticForm,
    /// `M (N + (L - 1) 2^K) / L`.
    pub factor: f64,
    /// `B^2 / (M N / L * Q)`, the constant implied by the paper-style prefactor.
    pub implied_constant: f64,
    pub holds: bool,
}

pub fn cauchy_schwarz_chain(cfg: &BilinearConfig) -> Result<ChainCheck> {
    let bilinear = bilinear_sum(cfg)?;
    let quadratic = shifted_quadratic_form(cfg)?;
    let (m, n, l) = (cfg.m_len() as f64, cfg.n_len() as f64, cfg.shifts() as f64);
    let step = f64::from(cfg.k_shift).exp2();
    let factor = m * (n + (l - 1.0) * step) / l;
    let lhs = bilinear * bilinear;
    let q = quadratic.value as f64;
    let implied_constant = if q > 0.0 {
        lhs / (quadratic.prefactor * q)
    } else {
        0.0
    };
    Ok(ChainCheck {
        bilinear,
        quadratic,
        factor,
        implied_constant,
        holds: lhs <= factor * q * (1.0 + 1e-12),
    })
}

pub fn type2_report(cfg: &BilinearConfig) -> Result<CheckReport> {
    let chain = cauchy_schwarz_chain(cfg)?;
    let mut params = cfg.base_params();
    params.insert("bilinear_sum".into(), json!(chain.bilinear));
    params.insert("quadratic_form".into(), json!(chain.quadratic));
    params.insert("chain_factor".into(), json!(chain.factor));
    params.insert("trivial_bound".into(), json!(cfg.m_len() * cfg.n_len()));
    let lhs = chain.bilinear * chain.bilinear;
    let rhs = chain.factor * chain.quadratic.value as f64;
    Ok(CheckReport::new(
        LemmaId::Type2,
        cfg.lambda(),
        params,
        lhs,
        rhs,
        Some(chain.implied_constant),
        chain.holds,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarryRate {
    /// Fraction of triples whose products differ below `K` or above `K + mu + rho + eps rho`.
    pub rate: f64,
    /// Part of `rate` from positions `j < K`; zero by place value.
    pub low_rate: f64,
    pub high_rate: f64,
    pub triples: u64,
    /// `2^{-eps rho}`.
    pub predicted: f64,
}

pub fn carry_truncation_rate(cfg: &BilinearConfig) -> Result<CarryRate> {
    cfg.validate()?;
    let (m0, n0) = (cfg.m_len(), cfg.n_len());
    let l = cfg.shifts() as i64;
    let k = cfg.k_shift;
    let step = 1i64 << k;
    // Differences at j > T with T = K + mu + rho + eps rho, i.e. j >= floor(T) + 1.
    let threshold = f64::from(k + cfg.mu + cfg.rho) + cfg.eps_rho();
    let high_from = threshold.floor() as u32 + 1;
    let low_mask = low_bits(k);
    let counts: Vec<(u64, u64, u64)> = (m0..2 * m0)
        .into_par_iter()
        .map(|m| {
            let (mut bad, mut low, mut high) = (0u64, 0u64, 0u64);
            for n in n0..2 * n0 {
                let base = m * n;
                for ell in (-(l - 1)..l).filter(|&e| e != 0) {
                    let shifted = m * (n as i64 + ell * step) as u64;
                    let diff = base ^ shifted;
                    let lo = diff & low_mask != 0;
                    let hi = high_from < 64 && diff >> high_from != 0;
                    low += u64::from(lo);
                    high += u64::from(hi);
                    bad += u64::from(lo || hi);
                }
            }
            (bad, low, high)
        })
        .collect();
    let (bad, low, high) = counts
        .iter()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let triples = m0 * n0 * 2 * (cfg.shifts() - 1);
    let frac = |c: u64| {
        if triples == 0 {
            0.0
        } else {
            c as f64 / triples as f64
        }
    };
    Ok(CarryRate {
        rate: frac(bad),
        low_rate: frac(low),
        high_rate: frac(high),
        triples,
        predicted: (-cfg.eps_rho()).exp2(),
    })
}

pub fn carry_report(cfg: &BilinearConfig, brackets: &Brackets) -> Result<CheckReport> {
    let c = carry_truncation_rate(cfg)?;
    let rhs = brackets.carry_max * c.predicted;
    let mut params = cfg.base_params();
    params.insert("triples".into(), json!(c.triples));
    params.insert("low_rate".into(), json!(c.low_rate));
    params.insert("high_rate".into(), json!(c.high_rate));
    params.insert("predicted".into(), json!(c.predicted));
    params.insert("bracket".into(), json!(brackets.carry_max));
    let implied = c.rate / c.predicted;
    let pass = c.rate <= rhs && c.low_rate == 0.0;
    Ok(CheckReport::new(
        LemmaId::Carry,
        cfg.lambda(),
        params,
        c.rate,
        rhs,
        Some(implied),
        pass,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTest {
    /// `N sum_{m ~ M, k < 2^lambda} |what_S(k)| 1[||km / 2^lambda|| < threshold]`.
    pub value: f64,
    /// `N M^2 lambda^2 sup|what_S|`.
    pub bound: f64,
    pub threshold: f64,
    pub l1: f64,
    pub sup: f64,
}

/// Indicator-weighted coefficient sum; `N = 2^{lambda - mu}` and the default
/// threshold is `lambda^2 / N`. Thresholds of at least `1/2` make the test vacuous.
pub fn frequency_test_count(
    mask: WalshMask,
    mu: u32,
    threshold: Option<f64>,
) -> Result<FrequencyTest> {
    let lambda = mask.lambda();
    if lambda == 0 || lambda > crate::lemmas::LEMMA_MAX_LAMBDA {
        return Err(LabError::arg(format!(
            "frequency test needs 1 <= lambda <= 16, got {lambda}"
        )));
    }
    if mu >= lambda {
        return Err(LabError::arg(format!(
            "mu = {mu} must be below lambda = {lambda}"
        )));
    }
    let n = (f64::from(lambda - mu)).exp2();
    let threshold = threshold.unwrap_or(f64::from(lambda * lambda) / n);
    let kernel = MagnitudeKernel::new(lambda)?;
    let size = 1u64 << lambda;
    let mags: Vec<f64> = (0..size)
        .map(|k| kernel.magnitude(mask.bits(), k))
        .collect();
    let l1: f64 = mags.iter().sum();
    let sup = mags.iter().copied().fold(0.0, f64::max);
    let m0 = 1u64 << mu;
    let vacuous = threshold >= 0.5;
    let parts: Vec<f64> = (m0..2 * m0)
        .into_par_iter()
        .map(|m| {
            mags.iter()
                .enumerate()
                .filter(|&(k, _)| {
                    vacuous || {
                        let r = symmetric_abs((k as u64).wrapping_mul(m), lambda);
                        (r as f64 / size as f64) < threshold
                    }
                })
                .map(|(_, &v)| v)
                .sum()
        })
        .collect();
    let m = m0 as f64;
    let l = f64::from(lambda);
    Ok(FrequencyTest {
        value: n * parts.iter().sum::<f64>(),
        bound: n * m * m * l * l * sup,
        threshold,
        l1,
        sup,
    })
}

/// Type-I sum against the trivial bound `M N`, with the frequency test alongside.
pub fn type1_report(mask: u64, mu: u32, nu: u32, brackets: &Brackets) -> Result<CheckReport> {
    let value = type1_sum(mask, mu, nu)?;
    let lambda = mu + nu;
    let trivial = (1u64 << lambda) as f64;
    let mut params = params! {
        "mask" => mask,
        "mu" => mu,
        "nu" => nu,
    };
    if lambda <= crate::lemmas::LEMMA_MAX_LAMBDA && mask >> lambda == 0 {
        let ft = frequency_test_count(WalshMask::new(mask, lambda)?, mu, None)?;
        params.insert("frequency_test".into(), json!(ft));
        params.insert("frequency_ratio".into(), json!(ft.value / ft.bound));
        params.insert("frequency_bracket".into(), json!(brackets.frequency_max));
    }
    let lhs = value as f64;
    Ok(CheckReport::new(
        LemmaId::Type1,
        lambda,
        params,
        lhs,
        trivial,
        Some(lhs / trivial),
        lhs <= trivial,
    ))
}

/// Split of `S` at `lambda - 2 mu`, with the top part truncated to `2^H` modes per factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub mask: WalshMask,
    pub mu: u32,
    pub h: u32,
    /// `|S2|` limit.
    pub s2_cap: u32,
    /// Constant in the regime condition `|S2| < C H`.
    pub regime_constant: f64,
}

/// Largest truncated frequency set the split will build.
pub const SPLIT_MAX_CARDINALITY_BITS: u32 = 22;
/// Largest bit-length for the L1 error evaluation.
pub const SPLIT_MAX_LAMBDA: u32 = 16;

impl SplitConfig {
    pub fn new(mask: WalshMask, mu: u32, h: u32) -> Self {
        Self {
            mask,
            mu,
            h,
            s2_cap: 8,
            regime_constant: 1.0,
        }
    }

    /// `lambda - 2 mu`, clamped at zero.
    pub fn cut(&self) -> u32 {
        self.mask.lambda().saturating_sub(2 * self.mu)
    }

    /// `S1 = S & [0, lambda - 2mu)`.
    pub fn s1(&self) -> WalshMask {
        WalshMask::new(self.mask.bits() & low_bits(self.cut()), self.mask.lambda())
            .expect("submask")
    }

    /// `S2 = S & [lambda - 2mu, lambda)`.
    pub fn s2(&self) -> WalshMask {
        WalshMask::new(self.mask.bits() & !low_bits(self.cut()), self.mask.lambda())
            .expect("submask")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    /// `(k mod 2^lambda, coefficient)` sorted by `k`.
    pub frequencies: Vec<(u64, Complex64)>,
    /// `2^{-lambda} sum_x |sum_{k in A2} c_k e(kx / 2^lambda) - w_{S2}(x)|`.
    pub l1_error: f64,
    /// `2^{H |S2|}`.
    pub cardinality_bound: u64,
    pub s1: WalshMask,
    pub s2: WalshMask,
    pub in_regime: bool,
}

/// The `2^H` largest coefficients of one factor `h(x / 2^{j+1}) = w_{j}(x)`.
fn factor_modes(j: u32, lambda: u32, h: u32) -> Result<Vec<(u64, Complex64)>> {
    let single = WalshMask::new(1 << j, lambda)?;
    let spacing = lambda - j - 1;
    let mut modes: Vec<(i64, u64, u64, Complex64)> = Vec::new();
    for r in 0..1u64 << (j + 1) {
        let k = r << spacing;
        let c = trig_coefficient(single, k)?;
        if c.magnitude == 0.0 {
            continue;
        }
        // Rounded magnitude so that conjugate pairs tie and fall back to |k|.
        let key = -(c.magnitude * 1e12).round() as i64;
        modes.push((key, symmetric_abs(k, lambda), k, c.value));
    }
    modes.sort_by_key(|a| (a.0, a.1, a.2));
    modes.truncate(1usize << h.min(40));
    Ok(modes.into_iter().map(|(_, _, k, c)| (k, c)).collect())
}

pub fn spectral_split(cfg: &SplitConfig) -> Result<SplitResult> {
    let lambda = cfg.mask.lambda();
    let s2 = cfg.s2();
    let w2 = s2.weight();
    if w2 > cfg.s2_cap {
        return Err(LabError::arg(format!(
            "|S2| = {w2} exceeds the cap {}",
            cfg.s2_cap
        )));
    }
    if lambda == 0 || lambda > SPLIT_MAX_LAMBDA {
        return Err(LabError::arg(format!(
            "split evaluation needs 1 <= lambda <= {SPLIT_MAX_LAMBDA}"
        )));
    }
    let card_bits = u64::from(cfg.h) * u64::from(w2);
    if card_bits > u64::from(SPLIT_MAX_CARDINALITY_BITS) {
        return Err(LabError::Resource {
            what: format!("truncated set of up to 2^{card_bits} frequencies"),
            required_bytes: 24u128 << card_bits.min(100),
            limit_bytes: 24u128 << SPLIT_MAX_CARDINALITY_BITS,
        });
    }
    let lmask = low_bits(lambda);
    let mut acc: BTreeMap<u64, Complex64> = BTreeMap::from([(0, Complex64::new(1.0, 0.0))]);
    for j in s2.positions() {
        let modes = factor_modes(j, lambda, cfg.h)?;
        let mut next = BTreeMap::new();
        for (&k1, &c1) in &acc {
            for &(k2, c2) in &modes {
                *next
                    .entry((k1 + k2) & lmask)
                    .or_insert(Complex64::new(0.0, 0.0)) += c1 * c2;
            }
        }
        acc = next;
    }
    let frequencies: Vec<(u64, Complex64)> = acc.into_iter().collect();
    let twiddle = twiddle_table(lambda);
    let bits = s2.bits();
    let errs: Vec<f64> = (0..1u64 << lambda)
        .into_par_iter()
        .map(|x| {
            let v: Complex64 = frequencies
                .iter()
                .map(|&(k, c)| c * twiddle[(k.wrapping_mul(x) & lmask) as usize])
                .sum();
            (v - f64::from(walsh_sign(bits, x))).norm()
        })
        .collect();
    let l1_error = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok(SplitResult {
        frequencies,
        l1_error,
        cardinality_bound: 1u64 << card_bits,
        s1: cfg.s1(),
        s2,
        in_regime: f64::from(w2) < cfg.regime_constant * f64::from(cfg.h),
    })
}

pub fn split_report(cfg: &SplitConfig, brackets: &Brackets) -> Result<CheckReport> {
    let res = spectral_split(cfg)?;
    let lambda = cfg.mask.lambda();
    let rhs = (-f64::from(cfg.h)).exp2();
    let implied = res.l1_error / rhs;
    let card_ok = res.frequencies.len() as u64 <= res.cardinality_bound;
    let params = params! {
        "mask" => cfg.mask.bits(),
        "mu" => cfg.mu,
        "H" => cfg.h,
        "s1" => res.s1.bits(),
        "s2" => res.s2.bits(),
        "cardinality" => res.frequencies.len(),
        "cardinality_bound" => res.cardinality_bound,
        "cardinality_ok" => card_ok,
        "in_regime" => res.in_regime,
        "bracket" => brackets.split_max,
    };
    let pass = card_ok && implied <= brackets.split_max;
    Ok(CheckReport::new(
        LemmaId::Split,
        lambda,
        params,
        res.l1_error,
        rhs,
        Some(implied),
        pass,
    ))
}

/// Flattens a sequence table into doubles (for exports).
pub fn sequence_as_f64(seq: &ArithmeticSequence) -> Vec<f64> {
    match seq.values() {
        Values::Signed(v) => v.iter().map(|&e| f64::from(e)).collect(),
        Values::Real(v) => v.clone(),
    }
}
