//! Band-limited substitutes for tail Walsh functions.
//!
//! For a mask inside the top window `[lambda - sigma, lambda)` the approximant
//! keeps the coefficients of `w_A` below `K1 2^sigma`, tapers them linearly to
//! zero at `2 K1 2^sigma` and drops the rest:
//!
//! ```text
//! W_A(x) = sum_k eta(k) what_A(k) e(kx / 2^lambda),   K1 = 2^{t-1}
//! ```
//!
//! The taper is a de la Vallee Poussin kernel, so `sup |W_A| <= 3`, the
//! coefficients of `W_A` never exceed those of `w_A`, and they vanish for
//! `|k| >= 2^{sigma+t}`.
//!
//! The error bookkeeping shifts the mask down to `A - lambda + sigma`, a subset
//! of `[0, sigma)`; one printed form of the error estimate writes the shift as
//! `A - lambda - sigma`, which cannot lie in that window and is taken as a typo.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::walsh::{
    low_bits, symmetric_abs, trig_coefficient, twiddle_table, walsh_sign, WalshMask,
};

/// Largest bit-length synthesized densely unless overridden.
pub const DEFAULT_SYNTHESIS_CAP: u32 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximantConfig {
    pub lambda: u32,
    /// Tail width: masks live in `[lambda - sigma, lambda)`.
    pub sigma: u32,
    /// Cutoff parameter; the passband edge is `2^{t-1} 2^sigma`.
    pub t: u32,
    /// Constant in the admissible window `C (log lambda)^2 < t < (lambda - sigma) / 2`.
    pub regime_constant: f64,
}

impl ApproximantConfig {
    /// Validates the hard constraints; the admissible `t` window is only reported
    /// by [`Self::in_regime`] because desk-scale `lambda` leaves it empty.
    pub fn new(lambda: u32, sigma: u32, t: u32) -> Result<Self> {
        let cfg = Self {
            lambda,
            sigma,
            t,
            regime_constant: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda == 0 || self.lambda > 62 {
            return Err(LabError::arg(format!(
                "lambda {} outside [1, 62]",
                self.lambda
            )));
        }
        if self.sigma > self.lambda {
            return Err(LabError::arg(format!(
                "sigma {} exceeds lambda {}",
                self.sigma, self.lambda
            )));
        }
        if self.t == 0 {
            return Err(LabError::arg("t must be at least 1"));
        }
        if self.sigma + self.t >= self.lambda {
            return Err(LabError::arg(format!(
                "cutoff 2^(sigma+t) = 2^{} must stay below the Nyquist frequency 2^{}",
                self.sigma + self.t,
                self.lambda - 1
            )));
        }
        Ok(())
    }

    /// `K1 = 2^{t-1}`.
    pub fn k1(&self) -> u64 {
        1 << (self.t - 1)
    }

    /// `rho = (t - 1) / 2`, used only in error bookkeeping.
    pub fn rho(&self) -> f64 {
        (f64::from(self.t) - 1.0) / 2.0
    }

    /// `2 K1 2^sigma = 2^{sigma+t}`: coefficients at or beyond this vanish.
    pub fn support_bound(&self) -> u64 {
        1 << (self.sigma + self.t)
    }

    pub fn in_regime(&self) -> bool {
        let ln = f64::from(self.lambda).ln();
        let t = f64::from(self.t);
        self.regime_constant * ln * ln < t && 2.0 * t < f64::from(self.lambda - self.sigma)
    }
}

/// Trapezoid: 1 on `|z| < K1 2^sigma`, 0 on `|z| >= 2 K1 2^sigma`, linear between.
pub fn trapezoid_eta(z: f64, k1: u64, sigma: u32) -> f64 {
    let inner = k1 as f64 * f64::from(sigma).exp2();
    let outer = 2.0 * inner;
    let z = z.abs();
    if z < inner {
        1.0
    } else if z >= outer {
        0.0
    } else {
        (outer - z) / inner
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledApproximant {
    pub values: Vec<Complex64>,
    pub config: ApproximantConfig,
    pub mask: WalshMask,
}

/// Checks that the mask sits in `[lambda - sigma, lambda)`.
pub fn check_tail_mask(mask: WalshMask, config: &ApproximantConfig) -> Result<()> {
    if mask.lambda() != config.lambda {
        return Err(LabError::arg(format!(
            "mask lives in lambda={}, config has lambda={}",
            mask.lambda(),
            config.lambda
        )));
    }
    let window_low = config.lambda - config.sigma;
    if mask.bits() & low_bits(window_low) != 0 {
        return Err(LabError::arg(format!(
            "mask {mask} not inside the tail window [{window_low}, {})",
            config.lambda
        )));
    }
    Ok(())
}

/// Frequencies with nonzero taper, as `(k mod 2^lambda, eta(k) what_A(k))`.
pub fn mollified_coefficients(
    mask: WalshMask,
    config: &ApproximantConfig,
) -> Result<Vec<(u64, Complex64)>> {
    check_tail_mask(mask, config)?;
    config.validate()?;
    let n = 1u64 << config.lambda;
    let bound = config.support_bound();
    let mut out = Vec::with_capacity(2 * bound as usize);
    for k in (0..bound).chain(n - bound + 1..n) {
        let eta = trapezoid_eta(
            symmetric_abs(k, config.lambda) as f64,
            config.k1(),
            config.sigma,
        );
        if eta == 0.0 {
            continue;
        }
        let c = trig_coefficient(mask, k)?;
        if c.magnitude == 0.0 {
            continue;
        }
        out.push((k, c.value * eta));
    }
    Ok(out)
}

pub fn build_approximant(mask: WalshMask, config: ApproximantConfig) -> Result<SampledApproximant> {
    build_approximant_capped(mask, config, DEFAULT_SYNTHESIS_CAP)
}

/// Direct synthesis `W_A(x) = sum_k c_k e(kx / 2^lambda)` over the supported `k`.
pub fn build_approximant_capped(
    mask: WalshMask,
    config: ApproximantConfig,
    synthesis_cap: u32,
) -> Result<SampledApproximant> {
    if config.lambda > synthesis_cap {
        return Err(LabError::arg(format!(
            "lambda {} exceeds the synthesis cap {synthesis_cap}",
            config.lambda
        )));
    }
    let coeffs = mollified_coefficients(mask, &config)?;
    let n = 1usize << config.lambda;
    let twiddle = twiddle_table(config.lambda);
    let lmask = low_bits(config.lambda);
    let values = (0..n as u64)
        .into_par_iter()
        .map(|x| {
            coeffs
                .iter()
                .map(|&(k, c)| c * twiddle[(k.wrapping_mul(x) & lmask) as usize])
                .sum()
        })
        .collect();
    Ok(SampledApproximant {
        values,
        config,
        mask,
    })
}

/// `(2^{-lambda} sum_x |W_A(x) - w_A(x)|^2)^{1/2}`.
pub fn l2_error(approx: &SampledApproximant) -> f64 {
    let bits = approx.mask.bits();
    let sum: f64 = approx
        .values
        .iter()
        .enumerate()
        .map(|(x, v)| (v - f64::from(walsh_sign(bits, x as u64))).norm_sqr())
        .sum();
    (sum / approx.values.len() as f64).sqrt()
}

pub fn sup_norm(approx: &SampledApproximant) -> f64 {
    approx.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Coefficients of the sampled table, `2^{-lambda} sum_x W(x) e(-kx / 2^lambda)`, via FFT.
pub fn sampled_coefficients(values: &[Complex64]) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    let n = buf.len();
    if n == 0 {
        return buf;
    }
    FftPlanner::<f64>::new()
        .plan_fft_forward(n)
        .process(&mut buf);
    let inv = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= inv);
    buf
}

/// Outcome of the spectral checks on one synthesized approximant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralAudit {
    /// `max |c_k|` over `|k| > 2^{sigma+t}`.
    pub max_outside_support: f64,
    /// `max_k (|c_k| - |what_A(k)|)`; nonpositive up to rounding when dominated.
    pub max_domination_excess: f64,
    pub sup_norm: f64,
}

pub fn spectral_audit(approx: &SampledApproximant) -> Result<SpectralAudit> {
    let lambda = approx.config.lambda;
    let bound = approx.config.support_bound();
    let coeffs = sampled_coefficients(&approx.values);
    let mut outside = 0.0f64;
    let mut excess = f64::NEG_INFINITY;
    for (k, c) in coeffs.iter().enumerate() {
        let k = k as u64;
        let m = c.norm();
        if symmetric_abs(k, lambda) > bound {
            outside = outside.max(m);
        }
        let exact = trig_coefficient(approx.mask, k)?.magnitude;
        excess = excess.max(m - exact);
    }
    Ok(SpectralAudit {
        max_outside_support: outside,
        max_domination_excess: excess,
        sup_norm: sup_norm(approx),
    })
}

/// RMS error at each `t` of the grid, for one mask.
pub fn error_curve(
    mask: WalshMask,
    lambda: u32,
    sigma: u32,
    ts: &[u32],
) -> Result<Vec<(u32, f64)>> {
    ts.iter()
        .map(|&t| {
            let approx = build_approximant(mask, ApproximantConfig::new(lambda, sigma, t)?)?;
            Ok((t, l2_error(&approx)))
        })
        .collect()
}

/// Least-squares slope of `log2(error)` against `t`; `None` when some error is
/// zero (the empty mask is reproduced exactly) or fewer than two points exist.
pub fn log2_error_slope(curve: &[(u32, f64)]) -> Option<f64> {
    if curve.len() < 2 || curve.iter().any(|&(_, e)| e <= 0.0) {
        return None;
    }
    let n = curve.len() as f64;
    let xs: Vec<f64> = curve.iter().map(|&(t, _)| f64::from(t)).collect();
    let ys: Vec<f64> = curve.iter().map(|&(_, e)| e.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}
