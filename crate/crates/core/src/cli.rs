//! `wsl` command line: argument grammar, dispatch and exit codes.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::approximant::ApproximantConfig;
use crate::budget::{MemoryBudget, MAX_MEM_ENV};
use crate::error::{LabError, Result};
use crate::fwht::{spectrum_with_budget, SpectrumEntries};
use crate::lemmas::{
    run_scan, Brackets, CheckReport, LemmaId, LemmaLab, MaskFamily, ScanConfig, ScanSummary,
};
use crate::report::{unix_timestamp, write_csv, RunManifest};
use crate::sieve::{SequenceKind, Sieve};
use crate::sums::{
    bilinear_report, carry_report, split_report, theorem_scan, type1_report, type2_report,
    BilinearConfig, Coefficients, SplitConfig,
};
use crate::walsh::{low_bits, WalshMask};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "wsl",
    version,
    about = "Walsh correlations of arithmetic functions"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Bit-length of the index range.
    #[arg(long, global = true)]
    pub lambda: Option<u32>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output path; `.csv` selects CSV, anything else JSON. `sieve` writes a binary dump.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Memory ceiling in GiB.
    #[arg(long, global = true, env = MAX_MEM_ENV)]
    pub max_mem_gib: Option<f64>,
    /// Record start and finish times in the manifest.
    #[arg(long, global = true)]
    pub timestamps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Moebius,
    Liouville,
    VonMangoldt,
}

impl From<KindArg> for SequenceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Moebius => SequenceKind::Moebius,
            KindArg::Liouville => SequenceKind::Liouville,
            KindArg::VonMangoldt => SequenceKind::VonMangoldt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefArg {
    Ones,
    Zeros,
    Random,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sieve mu, Liouville or von Mangoldt on [0, 2^lambda).
    Sieve {
        #[arg(long, value_enum, default_value = "moebius")]
        kind: KindArg,
    },
    /// Walsh spectrum of a sieved sequence; reports the largest entries.
    Spectrum {
        #[arg(long, value_enum, default_value = "moebius")]
        kind: KindArg,
        #[arg(long)]
        normalized: bool,
        #[arg(long, default_value_t = 16)]
        top: usize,
    },
    /// Maximal Walsh correlation per lambda against 2^{lambda - lambda^0.1}.
    TheoremScan {
        #[arg(long, value_enum, default_value = "moebius")]
        kind: KindArg,
        #[arg(long)]
        lambda_min: Option<u32>,
        #[arg(long)]
        lambda_max: Option<u32>,
        #[arg(long, default_value_t = 1)]
        step: u32,
    },
    /// One coefficient lemma over a mask family.
    LemmaCheck(LemmaArgs),
    /// Type-II bilinear sum.
    Bilinear(SumArgs),
    /// Shifted quadratic form and the Cauchy-Schwarz chain.
    Quadform(SumArgs),
    /// Digit-truncation rate of shifted products.
    CarryRate(SumArgs),
    /// Type-I sum with the frequency test.
    Type1(SumArgs),
    /// Truncated spectral split of the top bits of a mask.
    Split {
        #[arg(long, value_parser = parse_mask_bits)]
        mask: u64,
        #[arg(long)]
        mu: u32,
        #[arg(long, default_value_t = 4)]
        h: u32,
        #[arg(long, default_value_t = 8)]
        s2_cap: u32,
    },
    /// Batch of lemma checks from a JSON grid.
    Scan {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LemmaArgs {
    /// Lemma number, 1 to 6.
    #[arg(long)]
    pub lemma: u32,
    /// `all`, `structured`, `random:N`, `mixed:N` or one mask (`0b101`, `{0,2}`, `5`).
    #[arg(long, default_value = "structured")]
    pub masks: String,
    /// Lemma 4 modulus exponent.
    #[arg(long, default_value_t = 2)]
    pub r: u32,
    /// Lemma 4 residue; every residue below 2^r when absent.
    #[arg(long)]
    pub a: Option<u64>,
    #[arg(long, default_value_t = 4)]
    pub sigma: u32,
    #[arg(long, default_value_t = 3)]
    pub t: u32,
    #[arg(long, value_delimiter = ',', default_values_t = [2u32, 3, 4, 5])]
    pub t_grid: Vec<u32>,
    /// Lemma 6 interval `[j_start, j_end)`; one seeded random interval per mask when absent.
    #[arg(long)]
    pub j_start: Option<u64>,
    #[arg(long)]
    pub j_end: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SumArgs {
    /// `S` in absolute bit positions: decimal, `0b..`, `0x..` or `{i,j,..}`.
    #[arg(long, value_parser = parse_mask_bits)]
    pub mask: u64,
    #[arg(long)]
    pub mu: u32,
    #[arg(long)]
    pub nu: u32,
    #[arg(long, default_value_t = 0)]
    pub rho: u32,
    #[arg(long = "k", default_value_t = 0)]
    pub k_shift: u32,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "ones")]
    pub alpha: CoefArg,
    #[arg(long, value_enum, default_value = "ones")]
    pub beta: CoefArg,
}

/// Parses `5`, `0b101`, `0x5` or `{0,2}`.
pub fn parse_mask_bits(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    let bad = || format!("cannot parse mask {s:?}");
    if let Some(inner) = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
        return inner
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .try_fold(0u64, |acc, p| {
                let j: u32 = p.parse().map_err(|_| bad())?;
                if j >= 64 {
                    return Err(bad());
                }
                Ok(acc | 1 << j)
            });
    }
    let parsed = if let Some(b) = s.strip_prefix("0b") {
        u64::from_str_radix(b, 2)
    } else if let Some(h) = s.strip_prefix("0x") {
        u64::from_str_radix(h, 16)
    } else {
        s.parse()
    };
    parsed.map_err(|_| bad())
}

enum MaskSpec {
    Family(MaskFamily),
    Single(u64),
}

fn parse_mask_spec(s: &str) -> Result<MaskSpec> {
    let count = |rest: &str| {
        rest.parse::<u32>()
            .map_err(|_| LabError::arg(format!("bad mask count in {s:?}")))
    };
    Ok(match s {
        "all" => MaskSpec::Family(MaskFamily::All),
        "structured" => MaskSpec::Family(MaskFamily::Structured),
        _ if s.starts_with("random:") => MaskSpec::Family(MaskFamily::Random {
            count: count(&s[7..])?,
        }),
        _ if s.starts_with("mixed:") => MaskSpec::Family(MaskFamily::Mixed {
            count: count(&s[6..])?,
        }),
        _ => MaskSpec::Single(parse_mask_bits(s).map_err(LabError::Argument)?),
    })
}

fn coefficients(c: CoefArg, seed: u64) -> Coefficients {
    match c {
        CoefArg::Ones => Coefficients::Ones,
        CoefArg::Zeros => Coefficients::Zeros,
        CoefArg::Random => Coefficients::RandomSigns { seed },
    }
}

impl SumArgs {
    fn config(&self, seed: u64) -> BilinearConfig {
        BilinearConfig {
            mask: self.mask,
            mu: self.mu,
            nu: self.nu,
            alpha: coefficients(self.alpha, seed),
            beta: coefficients(self.beta, seed.wrapping_add(1)),
            rho: self.rho,
            k_shift: self.k_shift,
            epsilon: self.epsilon,
        }
    }
}

fn require_lambda(g: &GlobalArgs, command: &str) -> Result<u32> {
    g.lambda
        .ok_or_else(|| LabError::arg(format!("{command} needs --lambda")))
}

fn budget(g: &GlobalArgs) -> MemoryBudget {
    match g.max_mem_gib {
        Some(gib) => MemoryBudget::with_gib(gib),
        None => MemoryBudget::default(),
    }
}

fn lemma_reports(
    args: &LemmaArgs,
    lambda: u32,
    seed: u64,
    b: &MemoryBudget,
) -> Result<Vec<CheckReport>> {
    b.admit("lemma check over 2^lambda frequencies", lambda, 16)?;
    let id = LemmaId::from_number(args.lemma)
        .ok_or_else(|| LabError::arg(format!("--lemma must be 1..6, got {}", args.lemma)))?;
    let lab = LemmaLab::new(lambda, Brackets::default())?;
    let masks = match parse_mask_spec(&args.masks)? {
        MaskSpec::Family(f) => f.masks(lambda, seed)?,
        MaskSpec::Single(bits) => vec![WalshMask::new(bits, lambda)?],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    match id {
        LemmaId::L1 => {
            for m in &masks {
                out.push(lab.check_lemma1(*m)?)
            }
        }
        LemmaId::L2 => {
            for m in &masks {
                out.push(lab.check_lemma2(*m)?)
            }
        }
        LemmaId::L3 => {
            use rayon::prelude::*;
            out = masks
                .par_iter()
                .map(|m| lab.check_lemma3(*m))
                .collect::<Result<_>>()?;
        }
        LemmaId::L4 => {
            if args.r >= lambda {
                return Err(LabError::arg(format!(
                    "--r {} must be below lambda",
                    args.r
                )));
            }
            let residues: Vec<u64> = match args.a {
                Some(a) => vec![a],
                None => (0..1u64 << args.r).collect(),
            };
            for m in &masks {
                for &a in &residues {
                    out.push(lab.check_lemma4(args.r, a, *m)?);
                }
            }
        }
        LemmaId::L5 => {
            let cfg = ApproximantConfig::new(lambda, args.sigma, args.t)?;
            let window = !low_bits(lambda - args.sigma);
            let mut seen = std::collections::BTreeSet::new();
            for m in &masks {
                let tail = m.bits() & window;
                if seen.insert(tail) {
                    out.push(lab.check_lemma5(cfg, WalshMask::new(tail, lambda)?, &args.t_grid)?);
                }
            }
        }
        LemmaId::L6 => {
            let n = 1u64 << lambda;
            for m in &masks {
                let (start, end) = match (args.j_start, args.j_end) {
                    (Some(s), Some(e)) => (s, e),
                    (None, None) => {
                        let len = rng.gen_range(1..n);
                        let start = rng.gen_range(1..=n - len);
                        (start, start + len)
                    }
                    _ => return Err(LabError::arg("--j-start and --j-end go together")),
                };
                out.push(lab.check_lemma6(start, end, *m)?);
            }
        }
        _ => unreachable!("from_number yields L1..L6"),
    }
    Ok(out)
}

fn sieve_payload(command: &Command, g: &GlobalArgs, b: &MemoryBudget) -> Result<serde_json::Value> {
    let Command::Sieve { kind } = command else {
        unreachable!()
    };
    let lambda = require_lambda(g, "sieve")?;
    let seq = Sieve::with_budget(*b).sieve((*kind).into(), lambda)?;
    if let Some(path) = &g.out {
        let mut w = BufWriter::new(File::create(path)?);
        seq.write_dump(&mut w)?;
        w.flush()?;
    }
    let n = seq.len();
    let (sum, nonzero) = match seq.signed() {
        Some(v) => (
            json!(v.iter().map(|&e| i64::from(e)).sum::<i64>()),
            v.iter().filter(|&&e| e != 0).count(),
        ),
        None => {
            let r = seq.real().expect("real table");
            (
                json!(r.iter().sum::<f64>()),
                r.iter().filter(|&&e| e != 0.0).count(),
            )
        }
    };
    let mut checkpoints = serde_json::Map::new();
    let mut x = 10usize;
    while x < n {
        if let Some(p) = seq.prefix_sum(x) {
            checkpoints.insert(x.to_string(), json!(p));
        }
        x *= 10;
    }
    Ok(json!({
        "kind": seq.kind().name(),
        "entries": n,
        "sum": sum,
        "nonzero": nonzero,
        "prefix_sums": checkpoints,
    }))
}

fn spectrum_payload(
    command: &Command,
    g: &GlobalArgs,
    b: &MemoryBudget,
) -> Result<serde_json::Value> {
    let Command::Spectrum {
        kind,
        normalized,
        top,
    } = command
    else {
        unreachable!()
    };
    let lambda = require_lambda(g, "spectrum")?;
    let seq = Sieve::with_budget(*b).sieve((*kind).into(), lambda)?;
    let spec = spectrum_with_budget(&seq, *normalized, b)?;
    let mut idx: Vec<usize> = (0..spec.len()).collect();
    let key = |i: usize| spec.get(i as u64).abs();
    idx.sort_by(|&a, &c| key(c).total_cmp(&key(a)).then(a.cmp(&c)));
    idx.truncate(*top);
    let peaks: Vec<_> = idx
        .iter()
        .map(|&i| {
            let m = WalshMask::new(i as u64, lambda).expect("index below 2^lambda");
            match &spec.entries {
                SpectrumEntries::Exact(v) => {
                    json!({"mask": i, "mask_set": m.to_string(), "value": v[i]})
                }
                SpectrumEntries::Real(v) => {
                    json!({"mask": i, "mask_set": m.to_string(), "value": v[i]})
                }
            }
        })
        .collect();
    Ok(json!({
        "kind": seq.kind().name(),
        "lambda": lambda,
        "normalized": normalized,
        "exact": spec.exact().is_some(),
        "peaks": peaks,
    }))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Sieve { .. } => "sieve",
        Command::Spectrum { .. } => "spectrum",
        Command::TheoremScan { .. } => "theorem-scan",
        Command::LemmaCheck(_) => "lemma-check",
        Command::Bilinear(_) => "bilinear",
        Command::Quadform(_) => "quadform",
        Command::CarryRate(_) => "carry-rate",
        Command::Type1(_) => "type1",
        Command::Split { .. } => "split",
        Command::Scan { .. } => "scan",
    }
}

fn command_config(c: &Command) -> serde_json::Value {
    match c {
        Command::Sieve { kind } => json!({"kind": kind}),
        Command::Spectrum {
            kind,
            normalized,
            top,
        } => {
            json!({"kind": kind, "normalized": normalized, "top": top})
        }
        Command::TheoremScan {
            kind,
            lambda_min,
            lambda_max,
            step,
        } => {
            json!({"kind": kind, "lambda_min": lambda_min, "lambda_max": lambda_max, "step": step})
        }
        Command::LemmaCheck(a) => json!(a),
        Command::Bilinear(a) | Command::Quadform(a) | Command::CarryRate(a) | Command::Type1(a) => {
            json!(a)
        }
        Command::Split {
            mask,
            mu,
            h,
            s2_cap,
        } => {
            json!({"mask": mask, "mu": mu, "h": h, "s2_cap": s2_cap})
        }
        Command::Scan { config } => json!({"config_path": config}),
    }
}

/// Runs a parsed command and returns its manifest.
pub fn execute(cli: &Cli) -> Result<RunManifest> {
    let g = &cli.global;
    let b = budget(g);
    let seed = g.seed;
    let started = g.timestamps.then(unix_timestamp);
    let mut config = command_config(&cli.command);
    if let Some(obj) = config.as_object_mut() {
        obj.insert("lambda".into(), json!(g.lambda));
    }
    let mut payload = None;
    let mut summary = None;
    let reports = match &cli.command {
        Command::Sieve { .. } => {
            payload = Some(sieve_payload(&cli.command, g, &b)?);
            Vec::new()
        }
        Command::Spectrum { .. } => {
            payload = Some(spectrum_payload(&cli.command, g, &b)?);
            Vec::new()
        }
        Command::TheoremScan {
            kind,
            lambda_min,
            lambda_max,
            step,
        } => {
            let (lo, hi) = match (lambda_min, lambda_max, g.lambda) {
                (Some(lo), Some(hi), _) => (*lo, *hi),
                (None, None, Some(l)) => (l, l),
                _ => {
                    return Err(LabError::arg(
                        "theorem-scan needs --lambda or both --lambda-min and --lambda-max",
                    ))
                }
            };
            if *step == 0 || lo == 0 || lo > hi {
                return Err(LabError::arg("empty or invalid lambda range"));
            }
            b.admit("theorem scan", hi, 9)?;
            let lambdas: Vec<u32> = (lo..=hi).step_by(*step as usize).collect();
            theorem_scan((*kind).into(), &lambdas, &b)?
        }
        Command::LemmaCheck(a) => {
            let lambda = require_lambda(g, "lemma-check")?;
            let reports = lemma_reports(a, lambda, seed, &b)?;
            summary = Some(ScanSummary::from_reports(&reports));
            reports
        }
        Command::Bilinear(a) => vec![bilinear_report(&a.config(seed))?],
        Command::Quadform(a) => vec![type2_report(&a.config(seed))?],
        Command::CarryRate(a) => vec![carry_report(&a.config(seed), &Brackets::default())?],
        Command::Type1(a) => vec![type1_report(a.mask, a.mu, a.nu, &Brackets::default())?],
        Command::Split {
            mask,
            mu,
            h,
            s2_cap,
        } => {
            let lambda = require_lambda(g, "split")?;
            b.admit("split evaluation", lambda, 16)?;
            let mut cfg = SplitConfig::new(WalshMask::new(*mask, lambda)?, *mu, *h);
            cfg.s2_cap = *s2_cap;
            vec![split_report(&cfg, &Brackets::default())?]
        }
        Command::Scan { config: path } => {
            let mut cfg: ScanConfig = match path {
                Some(p) => serde_json::from_reader(File::open(p)?)?,
                None => ScanConfig::default(),
            };
            if seed != 0 {
                cfg.seed = seed;
            }
            if let Some(l) = g.lambda {
                cfg.lambda_range = [l, l];
            }
            if let Some(&hi) = cfg.lambdas().last().as_ref() {
                b.admit("lemma scan", hi, 16)?;
            }
            config = json!(cfg);
            let out = run_scan(&cfg)?;
            summary = Some(out.summary);
            out.reports
        }
    };
    let mut m = RunManifest::new(command_name(&cli.command), config, seed, reports);
    m.summary = summary;
    m.payload = payload;
    m.started = started;
    m.finished = g.timestamps.then(unix_timestamp);
    Ok(m)
}

fn wants_csv(g: &GlobalArgs, path: Option<&Path>) -> bool {
    match g.format {
        Some(f) => f == Format::Csv,
        None => path
            .and_then(|p| p.extension())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    }
}

fn emit<W: Write>(m: &RunManifest, csv: bool, mut w: W) -> Result<()> {
    if csv {
        write_csv(&m.reports, &mut w)?;
    } else {
        w.write_all(m.to_json()?.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn exit_code_for(e: &LabError) -> i32 {
    if e.is_resource() {
        EXIT_RESOURCE
    } else {
        EXIT_USAGE
    }
}

/// Parses `argv`, runs the command, writes the manifest and returns the exit code.
pub fn dispatch<I, T, O, E>(argv: I, stdout: &mut O, stderr: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    O: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
            } else {
                let _ = stdout.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let manifest = match execute(&cli) {
        Ok(m) => m,
        Err(e) => {
            let _ = writeln!(stderr, "wsl: {e}");
            return exit_code_for(&e);
        }
    };
    let g = &cli.global;
    let to_file = g
        .out
        .as_deref()
        .filter(|_| !matches!(cli.command, Command::Sieve { .. }));
    let written = match to_file {
        Some(path) => File::create(path)
            .map_err(LabError::from)
            .and_then(|f| emit(&manifest, wants_csv(g, Some(path)), BufWriter::new(f))),
        None => emit(&manifest, wants_csv(g, None), &mut *stdout),
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "wsl: {e}");
        return exit_code_for(&e);
    }
    if manifest.all_pass() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("wsl").chain(args.iter().copied());
        let code = dispatch(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn mask_parsing() {
        assert_eq!(parse_mask_bits("5"), Ok(5));
        assert_eq!(parse_mask_bits("0b101"), Ok(5));
        assert_eq!(parse_mask_bits("0x5"), Ok(5));
        assert_eq!(parse_mask_bits("{0, 2}"), Ok(5));
        assert_eq!(parse_mask_bits("{}"), Ok(0));
        assert!(parse_mask_bits("{64}").is_err());
        assert!(parse_mask_bits("x").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            run(&[
                "lemma-check",
                "--lemma",
                "3",
                "--lambda",
                "6",
                "--masks",
                "all"
            ])
            .0,
            0
        );
        let (code, _, err) = run(&["lemma-check", "--lemma", "3", "--lambda", "99"]);
        assert_eq!(code, EXIT_RESOURCE);
        assert!(err.contains("bytes"), "{err}");
        assert_eq!(run(&["lemma-check", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run(&["theorem-scan", "--lambda", "2"]).0, EXIT_FAIL);
        assert_eq!(run(&["--help"]).0, EXIT_PASS);
    }
}
