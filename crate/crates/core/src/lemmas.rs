//! Numerical checks of the coefficient inequalities for Walsh functions.
//!
//! Two regimes:
//! * explicit-constant checks (L3, L6) compare against closed-form right-hand
//!   sides built from `(2 + sqrt 2)^{1/4}` per bit and must never fail;
//! * fitted-constant checks (L1, L2, L4, L5) report the implied constant and
//!   fail only when it leaves its configured bracket.
//!
//! The decay exponent in the bound on `prod |cos pi k_1 / 2^j|` is positive;
//! one printed statement has the sign reversed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::approximant::{
    build_approximant, check_tail_mask, error_curve, l2_error, log2_error_slope, spectral_audit,
    ApproximantConfig,
};
use crate::error::{LabError, Result};
use crate::walsh::{low_bits, FrequencySelector, MagnitudeKernel, WalshMask};

/// Largest bit-length for streamed lemma checks.
pub const LEMMA_MAX_LAMBDA: u32 = 16;
/// Largest bit-length for the exhaustive mask family.
pub const EXHAUSTIVE_MAX_LAMBDA: u32 = 14;

/// Slack added to explicit right-hand sides.
pub const EXPLICIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LemmaId {
    L1,
    L2,
    L3,
    L4,
    L5,
    L6,
    #[serde(rename = "THM1")]
    Thm1,
    #[serde(rename = "CARRY")]
    Carry,
    #[serde(rename = "TYPE1")]
    Type1,
    #[serde(rename = "TYPE2")]
    Type2,
    #[serde(rename = "SPLIT")]
    Split,
}

impl LemmaId {
    pub const ALL_LEMMAS: [LemmaId; 6] = [
        LemmaId::L1,
        LemmaId::L2,
        LemmaId::L3,
        LemmaId::L4,
        LemmaId::L5,
        LemmaId::L6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LemmaId::L1 => "L1",
            LemmaId::L2 => "L2",
            LemmaId::L3 => "L3",
            LemmaId::L4 => "L4",
            LemmaId::L5 => "L5",
            LemmaId::L6 => "L6",
            LemmaId::Thm1 => "THM1",
            LemmaId::Carry => "CARRY",
            LemmaId::Type1 => "TYPE1",
            LemmaId::Type2 => "TYPE2",
            LemmaId::Split => "SPLIT",
        }
    }

    pub fn from_number(n: u32) -> Option<Self> {
        Self::ALL_LEMMAS.get((n as usize).checked_sub(1)?).copied()
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LemmaId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        [
            LemmaId::L1,
            LemmaId::L2,
            LemmaId::L3,
            LemmaId::L4,
            LemmaId::L5,
            LemmaId::L6,
            LemmaId::Thm1,
            LemmaId::Carry,
            LemmaId::Type1,
            LemmaId::Type2,
            LemmaId::Split,
        ]
        .into_iter()
        .find(|id| id.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| LabError::arg(format!("unknown check id {s:?}")))
    }
}

/// One check outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub lemma_id: LemmaId,
    pub lambda: u32,
    pub params: BTreeMap<String, Value>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub fitted_constant: Option<f64>,
    pub pass: bool,
}

impl CheckReport {
    /// Builds a report; `ratio` is `lhs / rhs` (0 when both vanish) and
    /// non-finite fitted constants are dropped.
    pub fn new(
        lemma_id: LemmaId,
        lambda: u32,
        params: BTreeMap<String, Value>,
        lhs: f64,
        rhs: f64,
        fitted_constant: Option<f64>,
        pass: bool,
    ) -> Self {
        let ratio = if rhs != 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::MAX
        };
        Self {
            lemma_id,
            lambda,
            params,
            lhs,
            rhs,
            ratio,
            fitted_constant: fitted_constant.filter(|c| c.is_finite()),
            pass,
        }
    }
}

/// `key => value` params map.
#[macro_export]
macro_rules! params {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut m = ::std::collections::BTreeMap::<String, ::serde_json::Value>::new();
        $( m.insert(String::from($k), ::serde_json::json!($v)); )*
        m
    }};
}

/// Brackets for fitted constants and explicit-check slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Brackets {
    /// Lemma 1: `C` in `(C lambda)^{|A|}` must stay below this.
    pub l1_c_max: f64,
    /// Lemma 2: `-log2 sup|what_A| / |A|` must reach this.
    pub l2_floor: f64,
    /// Lemma 4: residue-class l1 over `(2 + sqrt 2)^{(lambda - r)/4}`.
    pub l4_max: f64,
    /// Lemma 5: `C` in `(2^sigma)^{1/4} C^{(ln lambda)^2}`.
    pub l5_c_max: f64,
    /// Carry truncation: rate over `2^{-eps rho}`.
    pub carry_max: f64,
    /// Spectral split: `L1 error * 2^H`.
    pub split_max: f64,
    /// Frequency test over `N M^2 lambda^2 sup|what_S|`.
    pub frequency_max: f64,
    pub tolerance: f64,
}

impl Default for Brackets {
    fn default() -> Self {
        Self {
            l1_c_max: 10.0,
            l2_floor: 0.2,
            l4_max: 4.0,
            l5_c_max: 10.0,
            carry_max: 8.0,
            split_max: 4.0,
            frequency_max: 4.0,
            tolerance: EXPLICIT_TOLERANCE,
        }
    }
}

/// `(2 + sqrt 2)^{m/4}`, the iterated per-bit bound on l1 norms over `2^m` frequencies.
pub fn l1_explicit_bound(m: u32) -> f64 {
    (2.0 + std::f64::consts::SQRT_2).powf(f64::from(m) / 4.0)
}

/// `ceil(log2 len)` for `len >= 1`.
pub fn ceil_log2(len: u64) -> u32 {
    assert!(len >= 1);
    64 - (len - 1).leading_zeros()
}

fn check_lambda(lambda: u32) -> Result<()> {
    if lambda == 0 || lambda > LEMMA_MAX_LAMBDA {
        return Err(LabError::arg(format!(
            "lemma checks stream 2^lambda frequencies; lambda {lambda} outside [1, {LEMMA_MAX_LAMBDA}]"
        )));
    }
    Ok(())
}

fn mask_params(mask: WalshMask) -> BTreeMap<String, Value> {
    params! {
        "lambda" => mask.lambda(),
        "mask" => mask.bits(),
        "mask_set" => mask.to_string(),
        "weight" => mask.weight(),
    }
}

/// Runs the lemma checks at one bit-length, sharing a magnitude kernel.
#[derive(Debug, Clone)]
pub struct LemmaLab {
    kernel: MagnitudeKernel,
    pub brackets: Brackets,
}

impl LemmaLab {
    pub fn new(lambda: u32, brackets: Brackets) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            kernel: MagnitudeKernel::new(lambda)?,
            brackets,
        })
    }

    pub fn lambda(&self) -> u32 {
        self.kernel.lambda()
    }

    fn own(&self, mask: WalshMask) -> Result<()> {
        if mask.lambda() != self.lambda() {
            return Err(LabError::arg(format!(
                "mask has lambda {}, lab has {}",
                mask.lambda(),
                self.lambda()
            )));
        }
        Ok(())
    }

    pub fn l1(&self, mask: WalshMask, selector: FrequencySelector) -> Result<f64> {
        self.kernel.l1(mask, selector)
    }

    /// `sum |what_A| < (C lambda)^{|A|}` with `C` fitted as `l1^{1/|A|} / lambda`.
    pub fn check_lemma1(&self, mask: WalshMask) -> Result<CheckReport> {
        self.own(mask)?;
        let lambda = self.lambda();
        let lhs = self.l1(mask, FrequencySelector::Full)?;
        let w = mask.weight();
        let mut params = mask_params(mask);
        if w == 0 {
            params.insert("informational".into(), json!(true));
            return Ok(CheckReport::new(
                LemmaId::L1,
                lambda,
                params,
                lhs,
                1.0,
                None,
                true,
            ));
        }
        let c = lhs.powf(1.0 / f64::from(w)) / f64::from(lambda);
        let rhs = (self.brackets.l1_c_max * f64::from(lambda)).powi(w as i32);
        params.insert("bracket".into(), json!(self.brackets.l1_c_max));
        let pass = c < self.brackets.l1_c_max;
        Ok(CheckReport::new(
            LemmaId::L1,
            lambda,
            params,
            lhs,
            rhs,
            Some(c),
            pass,
        ))
    }

    /// `sup_k |what_A(k)| <~ 2^{-c|A|}` with `c` fitted as `-log2(sup) / |A|`.
    pub fn check_lemma2(&self, mask: WalshMask) -> Result<CheckReport> {
        self.own(mask)?;
        let lambda = self.lambda();
        let (argmax, lhs) = self.kernel.sup(mask);
        let w = mask.weight();
        let mut params = mask_params(mask);
        params.insert("argmax_k".into(), json!(argmax));
        if w == 0 {
            params.insert("skip".into(), json!(true));
            return Ok(CheckReport::new(
                LemmaId::L2,
                lambda,
                params,
                lhs,
                1.0,
                None,
                true,
            ));
        }
        let floor = self.brackets.l2_floor;
        let c_emp = -lhs.log2() / f64::from(w);
        let rhs = (-floor * f64::from(w)).exp2();
        params.insert("floor".into(), json!(floor));
        Ok(CheckReport::new(
            LemmaId::L2,
            lambda,
            params,
            lhs,
            rhs,
            Some(c_emp),
            c_emp >= floor,
        ))
    }

    /// `sum_k |what_A(k)| <= (2 + sqrt 2)^{lambda/4}`.
    pub fn check_lemma3(&self, mask: WalshMask) -> Result<CheckReport> {
        self.own(mask)?;
        let lambda = self.lambda();
        let lhs = self.l1(mask, FrequencySelector::Full)?;
        let rhs = l1_explicit_bound(lambda);
        let pass = lhs <= rhs + self.brackets.tolerance;
        Ok(CheckReport::new(
            LemmaId::L3,
            lambda,
            mask_params(mask),
            lhs,
            rhs,
            None,
            pass,
        ))
    }

    /// Residue-class l1 against `(2 + sqrt 2)^{(lambda - r)/4}`, implied constant bracketed.
    pub fn check_lemma4(&self, r: u32, a: u64, mask: WalshMask) -> Result<CheckReport> {
        self.own(mask)?;
        let lambda = self.lambda();
        let lhs = self.l1(mask, FrequencySelector::Residue { r, a })?;
        let rhs = l1_explicit_bound(lambda - r);
        let implied = lhs / rhs;
        let mut params = mask_params(mask);
        params.insert("r".into(), json!(r));
        params.insert("a".into(), json!(a));
        params.insert("bracket".into(), json!(self.brackets.l4_max));
        let pass = implied <= self.brackets.l4_max;
        Ok(CheckReport::new(
            LemmaId::L4,
            lambda,
            params,
            lhs,
            rhs,
            Some(implied),
            pass,
        ))
    }

    /// Interval l1 against `(2 + sqrt 2)^{m/4}` with `m = ceil(log2 |J|)`.
    pub fn check_lemma6(&self, start: u64, end: u64, mask: WalshMask) -> Result<CheckReport> {
        self.own(mask)?;
        let lambda = self.lambda();
        if start == 0 {
            return Err(LabError::arg("interval must lie in [1, 2^lambda)"));
        }
        let lhs = self.l1(mask, FrequencySelector::Interval { start, end })?;
        let m = ceil_log2(end - start);
        let rhs = l1_explicit_bound(m);
        let mut params = mask_params(mask);
        params.insert("j_start".into(), json!(start));
        params.insert("j_end".into(), json!(end));
        params.insert("m".into(), json!(m));
        let pass = lhs <= rhs + self.brackets.tolerance;
        Ok(CheckReport::new(
            LemmaId::L6,
            lambda,
            params,
            lhs,
            rhs,
            None,
            pass,
        ))
    }

    /// Tail-mask l1 fit, spectral support, sup bound and RMS decay, in one report.
    pub fn check_lemma5(
        &self,
        config: ApproximantConfig,
        mask: WalshMask,
        t_grid: &[u32],
    ) -> Result<CheckReport> {
        self.own(mask)?;
        check_tail_mask(mask, &config)?;
        let lambda = self.lambda();
        let sigma = config.sigma;
        let tol = self.brackets.tolerance;

        let lhs = self.l1(mask, FrequencySelector::Full)?;
        let log_sq = f64::from(lambda).ln().powi(2);
        let base = f64::from(sigma).exp2().powf(0.25);
        let c_fit = if log_sq > 0.0 {
            (lhs / base).max(f64::MIN_POSITIVE).powf(1.0 / log_sq)
        } else {
            f64::NAN
        };
        let rhs = base * self.brackets.l5_c_max.powf(log_sq);
        let l1_ok = lhs <= rhs;

        let approx = build_approximant(mask, config)?;
        let audit = spectral_audit(&approx)?;
        let support_ok = audit.max_outside_support < tol;
        let sup_ok = audit.sup_norm <= 3.0 + tol;
        let dominated = audit.max_domination_excess <= tol;

        let valid_ts: Vec<u32> = t_grid
            .iter()
            .copied()
            .filter(|&t| ApproximantConfig::new(lambda, sigma, t).is_ok())
            .collect();
        let curve = error_curve(mask, lambda, sigma, &valid_ts)?;
        let slope = log2_error_slope(&curve);
        let exact = curve.iter().all(|&(_, e)| e < tol) && l2_error(&approx) < tol;
        let decay_ok = exact
            || match slope {
                Some(s) => s < 0.0,
                None => curve.len() < 2,
            };

        let mut params = mask_params(mask);
        params.insert("sigma".into(), json!(sigma));
        params.insert("t".into(), json!(config.t));
        params.insert("in_regime".into(), json!(config.in_regime()));
        params.insert("support_bound".into(), json!(config.support_bound()));
        params.insert(
            "max_outside_support".into(),
            json!(audit.max_outside_support),
        );
        params.insert(
            "max_domination_excess".into(),
            json!(audit.max_domination_excess),
        );
        params.insert("sup_norm".into(), json!(audit.sup_norm));
        params.insert("t_grid".into(), json!(valid_ts));
        params.insert(
            "rms_errors".into(),
            json!(curve.iter().map(|&(_, e)| e).collect::<Vec<_>>()),
        );
        params.insert("rms_log2_slope".into(), json!(slope));
        params.insert("l1_ok".into(), json!(l1_ok));
        params.insert("support_ok".into(), json!(support_ok));
        params.insert("sup_ok".into(), json!(sup_ok));
        params.insert("dominated".into(), json!(dominated));
        params.insert("decay_ok".into(), json!(decay_ok));
        let pass = l1_ok && support_ok && sup_ok && dominated && decay_ok;
        Ok(CheckReport::new(
            LemmaId::L5,
            lambda,
            params,
            lhs,
            rhs,
            Some(c_fit),
            pass,
        ))
    }
}

pub fn check_lemma1(lambda: u32, mask: WalshMask) -> Result<CheckReport> {
    LemmaLab::new(lambda, Brackets::default())?.check_lemma1(mask)
}

pub fn check_lemma2(lambda: u32, mask: WalshMask) -> Result<CheckReport> {
    LemmaLab::new(lambda, Brackets::default())?.check_lemma2(mask)
}

pub fn check_lemma3(lambda: u32, mask: WalshMask) -> Result<CheckReport> {
    LemmaLab::new(lambda, Brackets::default())?.check_lemma3(mask)
}

pub fn check_lemma4(lambda: u32, r: u32, a: u64, mask: WalshMask) -> Result<CheckReport> {
    LemmaLab::new(lambda, Brackets::default())?.check_lemma4(r, a, mask)
}

pub fn check_lemma5(
    config: ApproximantConfig,
    mask: WalshMask,
    t_grid: &[u32],
) -> Result<CheckReport> {
    LemmaLab::new(config.lambda, Brackets::default())?.check_lemma5(config, mask, t_grid)
}

pub fn check_lemma6(lambda: u32, start: u64, end: u64, mask: WalshMask) -> Result<CheckReport> {
    LemmaLab::new(lambda, Brackets::default())?.check_lemma6(start, end, mask)
}

/// Which masks a scan visits at each bit-length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MaskFamily {
    /// Every subset; only for `lambda <= 14`.
    All,
    /// `count` masks drawn uniformly, seeded by the scan seed and lambda.
    Random { count: u32 },
    /// Empty set, singletons, full set, arithmetic progressions and tail blocks.
    Structured,
    /// Structured masks followed by `count` random ones.
    Mixed { count: u32 },
}

fn lambda_rng(seed: u64, lambda: u32, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ (u64::from(lambda)).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.rotate_left(32),
    )
}

pub fn structured_masks(lambda: u32) -> Vec<u64> {
    let full = low_bits(lambda);
    let mut out = vec![0, full];
    out.extend((0..lambda).map(|j| 1u64 << j));
    for step in 2..=3u32 {
        for start in 0..step.min(lambda) {
            let bits = (start..lambda)
                .step_by(step as usize)
                .fold(0u64, |b, j| b | 1 << j);
            out.push(bits);
        }
    }
    for width in [2, lambda / 2, lambda.saturating_sub(1)] {
        if width >= 1 && width <= lambda {
            out.push(full & !low_bits(lambda - width));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|b| seen.insert(*b));
    out
}

impl MaskFamily {
    pub fn masks(&self, lambda: u32, seed: u64) -> Result<Vec<WalshMask>> {
        let bits: Vec<u64> = match *self {
            MaskFamily::All => {
                if lambda > EXHAUSTIVE_MAX_LAMBDA {
                    return Err(LabError::arg(format!(
                        "exhaustive masks only for lambda <= {EXHAUSTIVE_MAX_LAMBDA}"
                    )));
                }
                (0..1u64 << lambda).collect()
            }
            MaskFamily::Random { count } => {
                let mut rng = lambda_rng(seed, lambda, 1);
                (0..count)
                    .map(|_| rng.gen::<u64>() & low_bits(lambda))
                    .collect()
            }
            MaskFamily::Structured => structured_masks(lambda),
            MaskFamily::Mixed { count } => {
                let mut v = structured_masks(lambda);
                v.extend(
                    MaskFamily::Random { count }
                        .masks(lambda, seed)?
                        .iter()
                        .map(|m| m.bits()),
                );
                v
            }
        };
        bits.into_iter()
            .map(|b| WalshMask::new(b, lambda))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lemma5Grid {
    pub sigma: u32,
    pub t: u32,
    pub t_grid: Vec<u32>,
}

impl Default for Lemma5Grid {
    fn default() -> Self {
        Self {
            sigma: 4,
            t: 3,
            t_grid: vec![2, 3, 4, 5],
        }
    }
}

/// Parameter grid for a batch of lemma checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    /// Inclusive `[min, max]`; `min > max` is an empty grid.
    pub lambda_range: [u32; 2],
    pub mask_family: MaskFamily,
    pub lemmas: Vec<LemmaId>,
    /// Lemma 4 moduli `2^r` (values `r >= lambda` are skipped).
    pub residue_r: Vec<u32>,
    /// Lemma 4 random residues per `(r, mask)`.
    pub residues_per_mask: u32,
    /// Lemma 6 random intervals per mask.
    pub intervals_per_mask: u32,
    pub lemma5: Lemma5Grid,
    pub brackets: Brackets,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            lambda_range: [8, 14],
            mask_family: MaskFamily::Mixed { count: 16 },
            lemmas: LemmaId::ALL_LEMMAS.to_vec(),
            residue_r: vec![2, 4, 6],
            residues_per_mask: 2,
            intervals_per_mask: 2,
            lemma5: Lemma5Grid::default(),
            brackets: Brackets::default(),
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn empty() -> Self {
        Self {
            lambda_range: [1, 0],
            ..Self::default()
        }
    }

    pub fn lambdas(&self) -> std::ops::RangeInclusive<u32> {
        self.lambda_range[0]..=self.lambda_range[1]
    }

    pub fn validate(&self) -> Result<()> {
        for lambda in self.lambdas() {
            check_lambda(lambda)?;
            if self.mask_family == MaskFamily::All && lambda > EXHAUSTIVE_MAX_LAMBDA {
                return Err(LabError::arg(format!(
                    "exhaustive masks only for lambda <= {EXHAUSTIVE_MAX_LAMBDA}, grid reaches {lambda}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    pub count: usize,
    pub failures: usize,
    pub min_fitted: Option<f64>,
    pub max_fitted: Option<f64>,
    pub max_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub total: usize,
    pub failures: usize,
    pub per_lemma: BTreeMap<LemmaId, LemmaSummary>,
}

impl ScanSummary {
    pub fn from_reports(reports: &[CheckReport]) -> Self {
        let mut s = ScanSummary::default();
        for r in reports {
            s.total += 1;
            let e = s.per_lemma.entry(r.lemma_id).or_default();
            e.count += 1;
            if !r.pass {
                s.failures += 1;
                e.failures += 1;
            }
            if let Some(c) = r.fitted_constant {
                e.min_fitted = Some(e.min_fitted.map_or(c, |m| m.min(c)));
                e.max_fitted = Some(e.max_fitted.map_or(c, |m| m.max(c)));
            }
            e.max_ratio = Some(e.max_ratio.map_or(r.ratio, |m| m.max(r.ratio)));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutput {
    pub reports: Vec<CheckReport>,
    pub summary: ScanSummary,
}

/// One unit of scan work, expanded before the parallel map so output order is fixed.
#[derive(Debug, Clone, Copy)]
enum Task {
    L1(WalshMask),
    L2(WalshMask),
    L3(WalshMask),
    L4 {
        r: u32,
        a: u64,
        mask: WalshMask,
    },
    L5(WalshMask),
    L6 {
        start: u64,
        end: u64,
        mask: WalshMask,
    },
}

fn random_interval(rng: &mut ChaCha8Rng, lambda: u32) -> (u64, u64) {
    let n = 1u64 << lambda;
    let len = rng.gen_range(1..n);
    let start = rng.gen_range(1..=n - len);
    (start, start + len)
}

fn expand_tasks(cfg: &ScanConfig, lambda: u32) -> Result<Vec<Task>> {
    let masks = cfg.mask_family.masks(lambda, cfg.seed)?;
    let mut tasks = Vec::new();
    let mut rng = lambda_rng(cfg.seed, lambda, 2);
    for &id in &cfg.lemmas {
        match id {
            LemmaId::L1 => tasks.extend(masks.iter().map(|&m| Task::L1(m))),
            LemmaId::L2 => tasks.extend(masks.iter().map(|&m| Task::L2(m))),
            LemmaId::L3 => tasks.extend(masks.iter().map(|&m| Task::L3(m))),
            LemmaId::L4 => {
                for &mask in &masks {
                    for &r in cfg.residue_r.iter().filter(|&&r| r < lambda) {
                        for _ in 0..cfg.residues_per_mask {
                            let a = rng.gen::<u64>() & low_bits(r);
                            tasks.push(Task::L4 { r, a, mask });
                        }
                    }
                }
            }
            LemmaId::L5 => {
                let g = &cfg.lemma5;
                if ApproximantConfig::new(lambda, g.sigma, g.t).is_ok() {
                    let window = !low_bits(lambda - g.sigma);
                    let mut seen = std::collections::BTreeSet::new();
                    for &mask in &masks {
                        let tail = mask.bits() & window;
                        if seen.insert(tail) {
                            tasks.push(Task::L5(WalshMask::new(tail, lambda)?));
                        }
                    }
                }
            }
            LemmaId::L6 => {
                for &mask in &masks {
                    for _ in 0..cfg.intervals_per_mask {
                        let (start, end) = random_interval(&mut rng, lambda);
                        tasks.push(Task::L6 { start, end, mask });
                    }
                }
            }
            other => {
                return Err(LabError::arg(format!("{other} is not a coefficient lemma")));
            }
        }
    }
    Ok(tasks)
}

/// Deterministic batch of lemma checks over the configured grid.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanOutput> {
    cfg.validate()?;
    let mut reports = Vec::new();
    for lambda in cfg.lambdas() {
        let lab = LemmaLab::new(lambda, cfg.brackets)?;
        let tasks = expand_tasks(cfg, lambda)?;
        let l5cfg = ApproximantConfig::new(lambda, cfg.lemma5.sigma, cfg.lemma5.t).ok();
        let batch: Result<Vec<CheckReport>> = tasks
            .par_iter()
            .map(|task| match *task {
                Task::L1(m) => lab.check_lemma1(m),
                Task::L2(m) => lab.check_lemma2(m),
                Task::L3(m) => lab.check_lemma3(m),
                Task::L4 { r, a, mask } => lab.check_lemma4(r, a, mask),
                Task::L5(m) => lab.check_lemma5(
                    l5cfg.expect("L5 tasks only expand for valid configs"),
                    m,
                    &cfg.lemma5.t_grid,
                ),
                Task::L6 { start, end, mask } => lab.check_lemma6(start, end, mask),
            })
            .collect();
        reports.extend(batch?);
    }
    let summary = ScanSummary::from_reports(&reports);
    Ok(ScanOutput { reports, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(pos: &[u32], lambda: u32) -> WalshMask {
        WalshMask::from_positions(pos, lambda).unwrap()
    }

    #[test]
    fn lemma1_examples() {
        let r = check_lemma1(1, mask(&[0], 1)).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15);
        assert!((r.fitted_constant.unwrap() - 1.0).abs() < 1e-15);
        assert!(r.pass);
        let r = check_lemma1(7, WalshMask::empty(7)).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12);
        assert!(r.pass && r.fitted_constant.is_none());
        assert_eq!(r.params["informational"], json!(true));
    }

    #[test]
    fn lemma2_examples() {
        let r = check_lemma2(5, WalshMask::empty(5)).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_eq!(r.params["skip"], json!(true));
        assert!(r.pass);
        let r = check_lemma2(3, mask(&[2], 3)).unwrap();
        assert!((r.lhs - 0.653281482438188).abs() < 1e-12);
        // w_{0}(x) = (-1)^x is itself the character e(x/2), so its sup is 1.
        let r = check_lemma2(6, mask(&[0], 6)).unwrap();
        assert_eq!(r.lhs, 1.0);
        assert_eq!(r.fitted_constant, Some(0.0));
        assert!(!r.pass);
    }

    #[test]
    fn lemma3_small() {
        let rhs = l1_explicit_bound(1);
        assert!((rhs - 1.3593230171753046).abs() < 1e-15);
        for m in [mask(&[0], 1), WalshMask::empty(1)] {
            let r = check_lemma3(1, m).unwrap();
            assert!((r.lhs - 1.0).abs() < 1e-15);
            assert!(r.pass);
        }
    }

    #[test]
    fn lemma4_reduces_to_lemma3() {
        let lab = LemmaLab::new(9, Brackets::default()).unwrap();
        for bits in [0u64, 1, 77, 511] {
            let m = WalshMask::new(bits, 9).unwrap();
            let l3 = lab.check_lemma3(m).unwrap();
            let l4 = lab.check_lemma4(0, 0, m).unwrap();
            assert_eq!(l3.lhs, l4.lhs);
            assert_eq!(l3.rhs, l4.rhs);
        }
        assert!(check_lemma4(8, 3, 8, mask(&[0], 8)).is_err());
    }

    #[test]
    fn lemma4_two_term_class() {
        // r = 7 at lambda = 8 leaves k in {1, 129}.
        let m = mask(&[0], 8);
        let r = check_lemma4(8, 7, 1, m).unwrap();
        let direct = crate::walsh::trig_magnitude(m, 1) + crate::walsh::trig_magnitude(m, 129);
        assert!((r.lhs - direct).abs() < 1e-15);
        assert!((r.rhs - l1_explicit_bound(1)).abs() < 1e-15);
    }

    #[test]
    fn lemma6_edges() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(1024), 10);
        let m = mask(&[1, 3], 6);
        let r = check_lemma6(6, 5, 6, m).unwrap();
        assert!(r.lhs <= 1.0 && r.rhs == 1.0 && r.pass);
        let full = check_lemma6(6, 1, 64, m).unwrap();
        let l3 = check_lemma3(6, m).unwrap();
        assert_eq!(full.rhs, l3.rhs);
        assert!((full.lhs - l3.lhs).abs() < 1e-12);
        assert!(check_lemma6(6, 4, 4, m).is_err());
        assert!(check_lemma6(6, 0, 4, m).is_err());
    }

    #[test]
    fn lemma5_empty_mask_passes() {
        let cfg = ApproximantConfig::new(10, 3, 3).unwrap();
        let r = check_lemma5(cfg, WalshMask::empty(10), &[2, 3, 4]).unwrap();
        assert!(r.pass, "{:?}", r.params);
    }

    #[test]
    fn lemma_ids_parse() {
        assert_eq!("thm1".parse::<LemmaId>().unwrap(), LemmaId::Thm1);
        assert_eq!(LemmaId::from_number(3), Some(LemmaId::L3));
        assert_eq!(LemmaId::from_number(0), None);
        assert_eq!(LemmaId::from_number(7), None);
        assert_eq!(serde_json::to_string(&LemmaId::Carry).unwrap(), "\"CARRY\"");
    }

    #[test]
    fn structured_family_is_deduplicated() {
        let v = structured_masks(8);
        let set: std::collections::BTreeSet<_> = v.iter().collect();
        assert_eq!(set.len(), v.len());
        assert!(v.contains(&0) && v.contains(&255) && v.contains(&0b1000_0000));
    }

    #[test]
    fn scan_validation() {
        let cfg = ScanConfig {
            lambda_range: [15, 15],
            mask_family: MaskFamily::All,
            ..ScanConfig::default()
        };
        assert!(run_scan(&cfg).is_err());
        let cfg = ScanConfig {
            lambda_range: [17, 17],
            ..ScanConfig::default()
        };
        assert!(run_scan(&cfg).is_err());
    }

    #[test]
    fn empty_grid() {
        let out = run_scan(&ScanConfig::empty()).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.summary.total, 0);
    }
}
