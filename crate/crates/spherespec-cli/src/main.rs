//! Batch front-end for the spherespec toolkit.
//!
//! Every subcommand is a pure function of its flags: identical invocations (including
//! precision) produce byte-identical output files. Exit codes: 0 ok, 2 parse error,
//! 3 domain/parameter error, 4 numeric non-convergence.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spherespec::decay::{self, ExponentSpec};
use spherespec::harmonics::SphereDim;
use spherespec::kernels::{self, KernelSpec, LegendreExpansion};
use spherespec::oracle;
use spherespec::real::{Decimal, DEFAULT_PRECISION, MIN_PRECISION};
use spherespec::spectra::{self, Spectrum};
use spherespec::{Error, Result};

const PRECISION_ENV: &str = "SPHERESPEC_PRECISION_BITS";

#[derive(Parser)]
#[command(
    name = "spherespec",
    version,
    about = "Extended-precision spectra of zonal integral operators on the m-sphere",
    after_help = "Kernel grammar: gaussian(r=..), multiquadric(sigma=..,delta=..), \
                  moller(alpha=..,beta=..,tau=..,sigma=..), optimality, dotproduct(b0,b1,...), \
                  explicit(c0,c1,...), zonal-table:PATH (rows `t f(t)`, piecewise-linear)."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a kernel into condensed Legendre coefficients
    Expand(ExpandArgs),
    /// Eigenvalue blocks (level, value, multiplicity) of the expansion
    Spectrum(PipelineArgs),
    /// Apply the r-th Laplace-Beltrami derivative to the expansion
    Derivative(DerivativeArgs),
    /// Verify the exact-product singular-value chain up to order n-max
    DecayCheck(DecayArgs),
    /// Partial sums of the weighted eigenvalue series with a convergence verdict
    Series(SeriesArgs),
    /// Cross-check the analytic spectrum against a Nystrom discretization on S^2
    OracleCheck(OracleArgs),
    /// List kernel families and parameter ranges
    Catalog(OutputArgs),
}

#[derive(Args)]
struct KernelInput {
    /// Kernel specification string (see --help for the grammar)
    #[arg(long)]
    kernel: Option<String>,
    /// Expansion JSON produced by a previous command
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Sphere dimension m >= 2
    #[arg(long, default_value_t = 2)]
    m: u32,
    /// Truncation level N (coefficients c_0..c_N)
    #[arg(long, default_value_t = 40)]
    levels: usize,
    /// Working precision in bits (>= 64); defaults to $SPHERESPEC_PRECISION_BITS or 512
    #[arg(long)]
    precision: Option<usize>,
    /// Gauss-Jacobi rule order for projection paths (default 2*(levels+1))
    #[arg(long)]
    rule_order: Option<usize>,
}

impl KernelInput {
    fn precision(&self) -> Result<usize> {
        let p = match self.precision {
            Some(p) => p,
            None => match std::env::var(PRECISION_ENV) {
                Ok(s) => s.parse::<usize>().map_err(|_| {
                    Error::param(PRECISION_ENV, format!("`{s}` is not a bit count"))
                })?,
                Err(_) => DEFAULT_PRECISION,
            },
        };
        if p < MIN_PRECISION {
            return Err(Error::param(
                "precision",
                format!("must be >= {MIN_PRECISION} bits, got {p}"),
            ));
        }
        Ok(p)
    }

    fn resolve(&self) -> Result<LegendreExpansion> {
        match (&self.kernel, &self.input) {
            (Some(k), None) => {
                let spec: KernelSpec = k.parse()?;
                let m = SphereDim::new(self.m)?;
                kernels::expand(&spec, m, self.levels, self.precision()?, self.rule_order)
            }
            (None, Some(path)) => {
                let text = fs::read_to_string(path)?;
                Ok(serde_json::from_str(&text)?)
            }
            (Some(_), Some(_)) => Err(Error::param(
                "kernel",
                "--kernel and --input are mutually exclusive",
            )),
            (None, None) => Err(Error::param(
                "kernel",
                "one of --kernel or --input required",
            )),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct OutputArgs {
    /// Output path (stdout when omitted)
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct ExpandArgs {
    #[command(flatten)]
    kernel: KernelInput,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    kernel: KernelInput,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct DerivativeArgs {
    #[command(flatten)]
    kernel: KernelInput,
    /// Derivative order r >= 1
    #[arg(long)]
    r: u32,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct DecayArgs {
    #[command(flatten)]
    kernel: KernelInput,
    /// Largest derivative order n checked in the chain
    #[arg(long, value_name = "N")]
    n_max: u64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SeriesArgs {
    #[command(flatten)]
    kernel: KernelInput,
    /// Exponent: zero | power:P | root:KAPPA | root:auto-divergent | file:PATH
    #[arg(long, default_value = "zero")]
    alpha: String,
    /// Comma-separated flat-index checkpoints, e.g. 100,1000,10000
    #[arg(long, value_name = "LIST")]
    checkpoints: String,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    kernel: KernelInput,
    /// Grid resolution POLARxAZIMUTHAL, e.g. 40x80
    #[arg(long, value_name = "PxA", default_value = "40x80")]
    grid: String,
    /// Number of leading eigenvalues to compare
    #[arg(long, default_value_t = 16)]
    top_k: usize,
    #[command(flatten)]
    out: OutputArgs,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } => 2,
        Error::Domain(_) | Error::InvalidParameter { .. } | Error::Aliasing { .. } => 3,
        Error::NonConvergence { .. } => 4,
        Error::Io(_) | Error::Serde(_) => 3,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Command::Expand(a) => {
            if a.kernel.kernel.is_none() {
                return Err(Error::param("kernel", "expand requires --kernel"));
            }
            let e = a.kernel.resolve()?;
            emit(&a.out, &e, |w| expansion_csv(&e, w))
        }
        Command::Spectrum(a) => {
            let e = a.kernel.resolve()?;
            let s = spectra::eigenvalue_blocks(&e);
            emit(&a.out, &s, |w| spectrum_csv(&s, w))
        }
        Command::Derivative(a) => {
            if a.r < 1 {
                return Err(Error::param("r", "derivative order must be >= 1"));
            }
            let e = a.kernel.resolve()?;
            let d = spectra::lb_derivative(&e, a.r);
            emit(&a.out, &d, |w| expansion_csv(&d, w))
        }
        Command::DecayCheck(a) => {
            let e = a.kernel.resolve()?;
            let s = spectra::eigenvalue_blocks(&e);
            let report = decay::verify_lemma42(&s, &e, a.n_max)?;
            emit(&a.out, &report, |w| decay_csv(&report, w))
        }
        Command::Series(a) => {
            let e = a.kernel.resolve()?;
            let s = spectra::eigenvalue_blocks(&e);
            let exponent = parse_alpha(&a.alpha)?;
            let checkpoints = parse_checkpoints(&a.checkpoints)?;
            let eval = decay::series_eval(&s, &exponent, &checkpoints, e.precision())?;
            emit(&a.out, &eval, |w| series_csv(&eval, w))
        }
        Command::OracleCheck(a) => {
            let report = oracle_check(&a)?;
            emit(&a.out, &report, |w| oracle_csv(&report, w))
        }
        Command::Catalog(out) => {
            let listing = catalog_listing();
            emit(&out, &listing, |w| catalog_csv(&listing, w))
        }
    }
}

fn emit<T: Serialize>(
    out: &OutputArgs,
    value: &T,
    csv: impl FnOnce(&mut String) -> fmt::Result,
) -> Result<()> {
    let text = match out.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(value)?;
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::new();
            csv(&mut s).expect("string formatting");
            s
        }
    };
    match &out.output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn expansion_csv(e: &LegendreExpansion, w: &mut String) -> fmt::Result {
    use fmt::Write;
    writeln!(w, "level,coefficient")?;
    for (n, c) in e.coeffs().iter().enumerate() {
        writeln!(w, "{n},{}", c.to_decimal_string())?;
    }
    Ok(())
}

/// Flattened (index, level, value) rows in block order, capped at 100000 rows.
fn spectrum_csv(s: &Spectrum, w: &mut String) -> fmt::Result {
    use fmt::Write;
    writeln!(w, "index,level,value")?;
    let mut index: u64 = 0;
    'blocks: for b in s.blocks() {
        let mult = b.multiplicity.to_u64_digits();
        let mult = if mult.len() == 1 { mult[0] } else { u64::MAX };
        let value = b.value.to_decimal_string();
        for _ in 0..mult {
            index += 1;
            if index > 100_000 {
                break 'blocks;
            }
            writeln!(w, "{index},{},{value}", b.level)?;
        }
    }
    Ok(())
}

fn decay_csv(r: &decay::DecayReport, w: &mut String) -> fmt::Result {
    use fmt::Write;
    writeln!(
        w,
        "n,flat_index,lhs,rhs_exact_product,ratio,holds,envelope,rhs_stirling"
    )?;
    for row in &r.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.n,
            row.flat_index,
            row.lhs.to_decimal_string(),
            row.rhs_exact_product.to_decimal_string(),
            row.ratio
                .as_ref()
                .map(|x| x.to_decimal_string())
                .unwrap_or_default(),
            row.holds,
            row.envelope.to_decimal_string(),
            row.rhs_stirling.to_decimal_string(),
        )?;
    }
    Ok(())
}

fn series_csv(e: &decay::SeriesEvaluation, w: &mut String) -> fmt::Result {
    use fmt::Write;
    writeln!(w, "index,term,partial_sum")?;
    for row in &e.checkpoints {
        writeln!(
            w,
            "{},{},{}",
            row.index,
            row.term.to_decimal_string(),
            row.partial_sum.to_decimal_string()
        )?;
    }
    Ok(())
}

fn parse_alpha(s: &str) -> Result<ExponentSpec> {
    if s == "zero" {
        return Ok(ExponentSpec::Zero);
    }
    if let Some(p) = s.strip_prefix("power:") {
        return Ok(ExponentSpec::Power {
            p: Decimal::new(p)?,
        });
    }
    if let Some(k) = s.strip_prefix("root:") {
        if k == "auto-divergent" {
            return Ok(ExponentSpec::AutoDivergent {
                ell: Decimal::new("0.9").expect("literal"),
            });
        }
        return Ok(ExponentSpec::ScaledRoot {
            kappa: Decimal::new(k)?,
        });
    }
    if let Some(path) = s.strip_prefix("file:") {
        return parse_alpha_table(Path::new(path));
    }
    Err(Error::Parse {
        pos: 0,
        msg: format!("unknown exponent `{s}`; expected zero, power:P, root:K, root:auto-divergent or file:PATH"),
    })
}

fn parse_alpha_table(path: &Path) -> Result<ExponentSpec> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 2 {
            return Err(Error::Parse {
                pos: lineno + 1,
                msg: format!("expected `index alpha`, got `{line}`"),
            });
        }
        let idx: u64 = parts[0].parse().map_err(|_| Error::Parse {
            pos: lineno + 1,
            msg: format!("`{}` is not a flat index", parts[0]),
        })?;
        rows.push((idx, Decimal::new(parts[1])?));
    }
    Ok(ExponentSpec::Table(rows))
}

fn parse_checkpoints(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for piece in s.split(',') {
        let piece = piece.trim();
        out.push(piece.parse::<u64>().map_err(|_| Error::Parse {
            pos: 0,
            msg: format!("checkpoint `{piece}` is not a positive integer"),
        })?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct OracleReport {
    grid: oracle::SphereGrid,
    trace_numeric: f64,
    trace_analytic: f64,
    trace_relative_error: f64,
    frobenius_numeric: f64,
    hs_norm_analytic: f64,
    frobenius_relative_error: f64,
    min_eigenvalue: f64,
    comparison: oracle::SpectrumComparison,
}

fn oracle_check(a: &OracleArgs) -> Result<OracleReport> {
    let (np, na) = parse_grid(&a.grid)?;
    let kernel_str = a
        .kernel
        .kernel
        .as_ref()
        .ok_or_else(|| Error::param("kernel", "oracle-check requires --kernel"))?;
    let spec: KernelSpec = kernel_str.parse()?;
    let m = SphereDim::new(a.kernel.m)?;
    if m.get() != 2 {
        return Err(Error::param(
            "m",
            "the Nystrom oracle is fixed to m = 2 (S^2)",
        ));
    }

    let e = kernels::expand(
        &spec,
        m,
        a.kernel.levels,
        a.kernel.precision()?,
        a.kernel.rule_order,
    )?;
    let s = spectra::eigenvalue_blocks(&e);
    let profile = spec.pointwise_f64(m, a.kernel.levels)?;

    let grid = oracle::build_grid(np, na)?;
    let matrix = oracle::assemble(&profile, &grid);
    let eigenvalues = oracle::eigs_symmetric(&matrix, 1e-12)?;
    let comparison = oracle::compare_spectra(&eigenvalues, &s, a.top_k)?;

    let trace_analytic: f64 = e.coeffs().iter().map(|c| c.to_f64()).sum();
    let hs = spectra::hs_norm(&e).to_f64();
    let trace_numeric = matrix.trace();
    let frobenius_numeric = matrix.frobenius_norm();
    Ok(OracleReport {
        grid,
        trace_numeric,
        trace_analytic,
        trace_relative_error: ((trace_numeric - trace_analytic) / trace_analytic).abs(),
        frobenius_numeric,
        hs_norm_analytic: hs,
        frobenius_relative_error: ((frobenius_numeric - hs) / hs).abs(),
        min_eigenvalue: eigenvalues.last().copied().unwrap_or(0.0),
        comparison,
    })
}

fn oracle_csv(r: &OracleReport, w: &mut String) -> fmt::Result {
    use fmt::Write;
    writeln!(w, "flat_index,numeric,analytic,relative_error")?;
    for row in &r.comparison.rows {
        writeln!(
            w,
            "{},{:e},{:e},{:e}",
            row.flat_index, row.numeric, row.analytic, row.relative_error
        )?;
    }
    Ok(())
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let lower = s.to_ascii_lowercase();
    let (a, b) = lower.split_once('x').ok_or_else(|| Error::Parse {
        pos: 0,
        msg: format!("grid `{s}` must look like 40x80"),
    })?;
    let np = a.trim().parse::<usize>().map_err(|_| Error::Parse {
        pos: 0,
        msg: format!("`{a}` is not a polar count"),
    })?;
    let na = b.trim().parse::<usize>().map_err(|_| Error::Parse {
        pos: a.len() + 1,
        msg: format!("`{b}` is not an azimuthal count"),
    })?;
    Ok((np, na))
}

#[derive(Serialize)]
struct CatalogEntry {
    name: &'static str,
    parameters: &'static str,
    example: &'static str,
}

fn catalog_listing() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "gaussian",
            parameters: "r > 0",
            example: "gaussian(r=1)",
        },
        CatalogEntry {
            name: "multiquadric",
            parameters: "sigma > 0, 0 < delta < 1",
            example: "multiquadric(sigma=1,delta=0.5)",
        },
        CatalogEntry {
            name: "moller",
            parameters: "alpha > 0, beta > 0, tau > 0, sigma > 0",
            example: "moller(alpha=1,beta=1,tau=1.5,sigma=1)",
        },
        CatalogEntry {
            name: "optimality",
            parameters: "none",
            example: "optimality",
        },
        CatalogEntry {
            name: "dotproduct",
            parameters: "positive power-series coefficients b_0, b_1, ...",
            example: "dotproduct(1,0.5,0.25)",
        },
        CatalogEntry {
            name: "explicit",
            parameters: "condensed coefficients c_0, c_1, ...",
            example: "explicit(1,0.25)",
        },
        CatalogEntry {
            name: "zonal-table",
            parameters: "path to rows `t f(t)` covering [-1,1]",
            example: "zonal-table:profile.csv",
        },
    ]
}

fn catalog_csv(entries: &[CatalogEntry], w: &mut String) -> fmt::Result {
    use fmt::Write;
    writeln!(w, "name,parameters,example")?;
    for e in entries {
        writeln!(w, "{},\"{}\",{}", e.name, e.parameters, e.example)?;
    }
    Ok(())
}
