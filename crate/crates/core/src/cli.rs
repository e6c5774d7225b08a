//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime or resource failure,
//! 3 a `verify` check exceeded its tolerance.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::{
    random_case, random_rows_case, verify_permutation_invariance, verify_strong_comparison,
    verify_telescoping, TestFunction, WeightScheme,
};
use crate::rates::{
    coverage_bound_inflated, conservative_coverage_bound, eta_bar, exact_coverage_bound, RateConstants,
    RateInputs,
};
use crate::resample::{bootstrap_statistics_par, conservative_quantile, BootstrapScheme};
use crate::rng::{derive_seed, fresh_seed};
use crate::sim::copula::{estimate_true_quantile, simulate_dataset, CovarianceSpec, MarginalSpec};
use crate::sim::experiment::{run_coverage_experiment, ExperimentConfig};
use crate::sim::report::{
    read_dataset, write_dataset, write_records, write_report, write_report_to, DatasetProvenance,
    ReportFormat,
};
use crate::stats::{empirical_quantile, quantile_rank};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

const INVARIANCE_TOL: f64 = 1e-12;
const TELESCOPE_TOL: f64 = 1e-10;
const CONTROL_FLOOR: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "maxboot", version, about = "Bootstrap quantiles for maxima of high-dimensional sums")]
pub struct Cli {
    /// Worker threads for parallel sections (falls back to MAXBOOT_THREADS).
    #[arg(long, global = true, env = "MAXBOOT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one Gaussian-copula dataset and write it with a provenance sidecar.
    Gen {
        #[command(flatten)]
        design: DesignArgs,
        /// Output CSV path; provenance goes to `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap quantile of the max statistic for a dataset file.
    Quantile {
        /// Dataset in the `n,p` header CSV format.
        #[arg(long = "data")]
        data_path: PathBuf,
        /// empirical, gaussian, rademacher, mammen or two-point(w1,w2,p1).
        #[arg(long, default_value = "mammen")]
        scheme: BootstrapScheme,
        /// Number of bootstrap replicates.
        #[arg(long = "B", default_value_t = 500)]
        b: usize,
        /// Upper tail level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Inflation of the conservative quantile.
        #[arg(long, default_value_t = 0.01)]
        inflation: f64,
        /// Master seed; generated and printed when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo coverage study of exact and conservative bootstrap quantiles.
    Coverage {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        study: StudyArgs,
        /// Report format for stdout and `--out`.
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Write the coverage report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-replication `T_n` and bootstrap quantiles here (CSV).
        #[arg(long)]
        quantiles_out: Option<PathBuf>,
    },
    /// Evaluate the closed-form approximation rates (constants default to 1).
    Rates(RatesArgs),
    /// Monte Carlo estimate of the upper quantile of `T_n` under a design.
    TrueQuantile {
        #[command(flatten)]
        design: DesignArgs,
        /// Upper tail level.
        #[arg(long)]
        alpha: Option<f64>,
        /// Number of simulated datasets.
        #[arg(long = "R", default_value_t = 50_000)]
        r: usize,
    },
    /// Exhaustive numerical checks of the interpolation identities.
    Verify(VerifyArgs),
}

/// Data-generating design, from a config file, a preset or flags.
#[derive(Debug, Args)]
pub struct DesignArgs {
    /// TOML or JSON configuration file (`.json` selects JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named configuration, e.g. desk-table1-a or paper-table1-a.
    #[arg(long)]
    pub preset: Option<String>,
    /// Sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Dimension.
    #[arg(long)]
    pub p: Option<usize>,
    /// identity, ar1(rho) or cs(rho).
    #[arg(long)]
    pub covariance: Option<CovarianceSpec>,
    /// normal, exp or gamma(shape).
    #[arg(long)]
    pub marginal: Option<MarginalSpec>,
    /// Master seed; generated and printed when absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Replications.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Bootstrap replicates per replication.
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Upper tail level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated quantile inflations.
    #[arg(long, value_delimiter = ',')]
    pub inflations: Option<Vec<f64>>,
    /// Semicolon-separated bootstrap schemes.
    #[arg(long, value_delimiter = ';')]
    pub schemes: Option<Vec<BootstrapScheme>>,
    /// Worker threads for the replications (defaults to --threads).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run even when K*B*n*p exceeds the workload guard.
    #[arg(long)]
    pub allow_long: bool,
}

#[derive(Debug, Args)]
pub struct RatesArgs {
    /// Sample size.
    #[arg(long)]
    pub n: usize,
    /// Dimension.
    #[arg(long)]
    pub p: usize,
    /// Moment scale `M`.
    #[arg(long)]
    pub m: f64,
    /// Soft minimum of the coordinate standard deviations.
    #[arg(long)]
    pub sigma_bar: f64,
    /// Width `eps`, or the quantile `t` when `--inflation` is given.
    #[arg(long)]
    pub eps: f64,
    /// Inflation factor `eps_n`; switches to the inflated coverage bound.
    #[arg(long)]
    pub inflation: Option<f64>,
    /// Max-norm exceedance probability entering the coverage bound.
    #[arg(long, default_value_t = 0.0)]
    pub q0: f64,
    /// Tail probability entering the exact-bootstrap bound.
    #[arg(long, default_value_t = 0.0)]
    pub tail_prob: f64,
    /// Constant of the first rate piece.
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    /// Constant of the second rate piece.
    #[arg(long, default_value_t = 1.0)]
    pub c2: f64,
    /// Constant of the third rate piece.
    #[arg(long, default_value_t = 1.0)]
    pub c3: f64,
    /// Overall constant of the coverage and exact bounds.
    #[arg(long, default_value_t = 1.0)]
    pub c_overall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyKind {
    /// Permutation invariance of the weighted interpolation average.
    Pi,
    /// Telescoping of one-row swaps with unit weights.
    Telescope,
    /// Remainder of the averaged-moment expansion against its bound.
    Comparison,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Which identity to check.
    #[arg(value_enum)]
    pub which: VerifyKind,
    /// Rows per case (at most 5).
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Columns per case.
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    /// Random cases per weight scheme and test function.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// Expansion order for `comparison` (3 or 4).
    #[arg(long, default_value_t = 3)]
    pub mstar: u32,
    /// Master seed; generated and printed when absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ResourceGuard { .. } | Error::Io(_) => EXIT_RUNTIME,
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => EXIT_RUNTIME,
        Error::Json(j) if j.is_io() => EXIT_RUNTIME,
        _ => EXIT_INVALID,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match run(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if cli.threads == Some(0) {
        return Err(crate::error::invalid("threads", "must be at least 1"));
    }
    if let Some(t) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Gen { design, out: path } => gen(design, &path, out, err),
        Command::Quantile {
            data_path,
            scheme,
            b,
            alpha,
            inflation,
            seed,
            out: path,
        } => quantile(&data_path, scheme, b, alpha, inflation, seed, path.as_deref(), out, err),
        Command::Coverage {
            design,
            study,
            format,
            out: path,
            quantiles_out,
        } => {
            let mut config = resolve_config(&design, err)?;
            apply_study(&mut config, &study, cli.threads);
            coverage(config, format.into(), path.as_deref(), quantiles_out.as_deref(), out, err)
        }
        Command::Rates(args) => rates(&args, out),
        Command::TrueQuantile { design, alpha, r } => {
            let mut config = resolve_config(&design, err)?;
            if let Some(a) = alpha {
                config.alpha = a;
            }
            config.validate()?;
            let seed = config.seed.expect("resolved");
            echo(out, "config", &TrueQuantileEcho {
                design: config.design(),
                alpha: config.alpha,
                r,
                seed,
            })?;
            let q = estimate_true_quantile(&config.design(), config.alpha, r, seed)?;
            writeln!(out, "true_quantile={q}")?;
            Ok(EXIT_OK)
        }
        Command::Verify(args) => verify(&args, out, err),
    }
}

#[derive(Serialize)]
struct TrueQuantileEcho {
    #[serde(flatten)]
    design: crate::sim::copula::DesignSlice,
    alpha: f64,
    #[serde(rename = "R")]
    r: usize,
    seed: u64,
}

fn echo<T: Serialize>(out: &mut dyn Write, label: &str, value: &T) -> Result<()> {
    writeln!(out, "# {label} {}", serde_json::to_string(value)?)?;
    Ok(())
}

fn resolve_seed(seed: Option<u64>, err: &mut dyn Write) -> Result<u64> {
    Ok(match seed {
        Some(s) => s,
        None => {
            let s = fresh_seed();
            writeln!(err, "no --seed given; generated seed {s}")?;
            s
        }
    })
}

/// Reads an experiment configuration; `.json` files are JSON, anything else TOML.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Base config from file, preset or defaults, with flag overrides and a seed.
pub fn resolve_config(design: &DesignArgs, err: &mut dyn Write) -> Result<ExperimentConfig> {
    let mut config = match (&design.config, &design.preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name).ok_or_else(|| {
            Error::Parse(format!(
                "unknown preset `{name}`; known: {}",
                ExperimentConfig::PRESETS.join(", ")
            ))
        })?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(n) = design.n {
        config.n = n;
    }
    if let Some(p) = design.p {
        config.p = p;
    }
    if let Some(c) = design.covariance {
        config.covariance = c;
    }
    if let Some(m) = design.marginal {
        config.marginal = m;
    }
    if design.seed.is_some() {
        config.seed = design.seed;
    }
    config.seed = Some(resolve_seed(config.seed, err)?);
    Ok(config)
}

fn apply_study(config: &mut ExperimentConfig, study: &StudyArgs, threads: Option<usize>) {
    if let Some(k) = study.k {
        config.replications = k;
    }
    if let Some(b) = study.b {
        config.bootstrap_draws = b;
    }
    if let Some(a) = study.alpha {
        config.alpha = a;
    }
    if let Some(e) = &study.inflations {
        config.inflation = e.clone();
    }
    if let Some(s) = &study.schemes {
        config.schemes = s.clone();
    }
    if study.workers.is_some() {
        config.workers = study.workers;
    }
    if config.workers.is_none() {
        config.workers = threads;
    }
    config.allow_long |= study.allow_long;
}

fn gen(design: DesignArgs, path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let config = resolve_config(&design, err)?;
    config.validate()?;
    let seed = config.seed.expect("resolved");
    let d = config.design();
    echo(out, "config", &d)?;
    writeln!(out, "# seed {seed}")?;
    let data = simulate_dataset(d.n, d.p, &d.covariance, &d.marginal, seed)?;
    let provenance = DatasetProvenance {
        n: d.n,
        p: d.p,
        covariance: d.covariance.to_string(),
        marginal: d.marginal.to_string(),
        seed,
        true_mean: Some(d.marginal.mean()),
        generator: format!("maxboot {}", env!("CARGO_PKG_VERSION")),
    };
    write_dataset(&data, path, &provenance)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct QuantileResult {
    data: String,
    n: usize,
    p: usize,
    scheme: BootstrapScheme,
    #[serde(rename = "B")]
    b: usize,
    alpha: f64,
    inflation: f64,
    seed: u64,
    rank: usize,
    t_star: f64,
    conservative: f64,
    negative_base: bool,
}

#[allow(clippy::too_many_arguments)]
fn quantile(
    data_path: &Path,
    scheme: BootstrapScheme,
    b: usize,
    alpha: f64,
    inflation: f64,
    seed: Option<u64>,
    json_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(crate::error::invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let seed = resolve_seed(seed, err)?;
    let data = read_dataset(data_path)?;
    let draw = bootstrap_statistics_par(&data, &scheme, b, seed)?;
    let t_star = empirical_quantile(&draw.statistics, alpha)?;
    let cq = conservative_quantile(t_star, inflation)?;
    let result = QuantileResult {
        data: data_path.display().to_string(),
        n: data.nrows(),
        p: data.ncols(),
        scheme,
        b,
        alpha,
        inflation,
        seed,
        rank: quantile_rank(b, alpha),
        t_star,
        conservative: cq.value,
        negative_base: cq.negative_base,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
    if let Some(path) = json_out {
        std::fs::write(path, serde_json::to_string_pretty(&result)? + "\n")?;
    }
    Ok(EXIT_OK)
}

fn coverage(
    config: ExperimentConfig,
    format: ReportFormat,
    path: Option<&Path>,
    quantiles_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    config.validate()?;
    // echo without the worker count, which never changes the results
    let shown = ExperimentConfig {
        workers: None,
        ..config.clone()
    };
    echo(out, "config", &shown)?;
    let outcome = run_coverage_experiment(&config)?;
    writeln!(out, "# dominance_violations {}", outcome.dominance_violations)?;
    writeln!(out, "# negative_thresholds {}", outcome.negative_thresholds)?;
    write_report_to(&outcome.report, &mut *out, format)?;
    writeln!(err, "runtime {:.2}s", outcome.runtime.as_secs_f64())?;
    if let Some(p) = path {
        write_report(&outcome.report, p, format)?;
    }
    if let Some(p) = quantiles_out {
        let labels: Vec<String> = config.schemes.iter().map(BootstrapScheme::label).collect();
        write_records(p, &labels, &outcome.records)?;
    }
    Ok(EXIT_OK)
}

fn rates(args: &RatesArgs, out: &mut dyn Write) -> Result<i32> {
    let constants = RateConstants {
        piece1: args.c1,
        piece2: args.c2,
        piece3: args.c3,
        overall: args.c_overall,
    };
    let inputs = RateInputs::new(args.n, args.p, args.m, args.sigma_bar, args.eps)?
        .with_constants(constants)?;
    echo(out, "config", &inputs)?;
    let eta = eta_bar(&inputs)?;
    writeln!(out, "log_np={}", inputs.log_np())?;
    writeln!(out, "log_p={}", inputs.log_p())?;
    writeln!(out, "piece1={}", eta.piece1)?;
    writeln!(out, "piece2={}", eta.piece2)?;
    writeln!(out, "piece3={}", eta.piece3)?;
    writeln!(out, "active_piece={}", eta.active_piece)?;
    writeln!(out, "lower_breakpoint={}", eta.lower_breakpoint)?;
    writeln!(out, "upper_breakpoint={}", eta.upper_breakpoint)?;
    writeln!(out, "eta_bar={}", eta.value)?;
    let bound = match args.inflation {
        Some(e) => coverage_bound_inflated(&inputs, e, args.q0)?,
        None => conservative_coverage_bound(&inputs, args.q0)?,
    };
    writeln!(out, "coverage_bound={}", bound.value)?;
    writeln!(out, "coverage_bound_vacuous={}", bound.vacuous)?;
    writeln!(out, "exact_bound={}", exact_coverage_bound(&inputs, args.tail_prob)?)?;
    Ok(EXIT_OK)
}

fn function_label(f: &TestFunction) -> String {
    match f {
        TestFunction::Sum => "sum".into(),
        TestFunction::SumPower { degree } => format!("power{degree}"),
        TestFunction::SoftmaxOfSum { beta } => format!("softmax({beta})"),
    }
}

fn verify(args: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if args.cases == 0 {
        return Err(crate::error::invalid("cases", "need at least one case"));
    }
    if args.n == 0 || args.p == 0 {
        return Err(crate::error::invalid("n, p", "must be at least 1"));
    }
    let seed = resolve_seed(args.seed, err)?;
    writeln!(
        out,
        "# verify {:?} n={} p={} cases={} mstar={} seed={seed}",
        args.which, args.n, args.p, args.cases, args.mstar
    )?;
    let (n, p) = (args.n, args.p);
    let schemes = [("uniform", WeightScheme::uniform(n)), ("tapered", WeightScheme::tapered(n))];
    let mut failed = false;
    let mut line = |out: &mut dyn Write, ok: bool, text: String| -> Result<()> {
        failed |= !ok;
        writeln!(out, "{} {text}", if ok { "PASS" } else { "FAIL" })?;
        Ok(())
    };
    match args.which {
        VerifyKind::Pi => {
            let tags = [
                TestFunction::Sum,
                TestFunction::SumPower { degree: 3 },
                TestFunction::SoftmaxOfSum { beta: 5.0 },
            ];
            for (name, scheme) in &schemes {
                for (t, f) in tags.iter().enumerate() {
                    let mut worst = 0.0f64;
                    for c in 0..args.cases {
                        let case = random_case(n, p, *f, derive_seed(seed, &[t as u64, c as u64]))?;
                        worst = worst.max(verify_permutation_invariance(&case, scheme)?.max_spread);
                    }
                    line(
                        out,
                        worst <= INVARIANCE_TOL,
                        format!("weights={name} f={} max_spread={worst:.3e}", function_label(f)),
                    )?;
                }
            }
            if n >= 2 {
                let case = random_case(n, p, TestFunction::SumPower { degree: 3 }, seed)?;
                let bad = schemes[1].1.perturbed(1, 0.1);
                let spread = verify_permutation_invariance(&case, &bad)?.max_spread;
                line(
                    out,
                    spread > CONTROL_FLOOR,
                    format!("control perturbed_theta spread={spread:.3e}"),
                )?;
            }
        }
        VerifyKind::Telescope => {
            let tags = [
                TestFunction::Sum,
                TestFunction::SumPower { degree: 2 },
                TestFunction::SumPower { degree: 3 },
                TestFunction::SoftmaxOfSum { beta: 5.0 },
            ];
            for (t, f) in tags.iter().enumerate() {
                let mut worst = 0.0f64;
                for c in 0..args.cases {
                    let case = random_case(n, p, *f, derive_seed(seed, &[t as u64, c as u64]))?;
                    worst = worst.max(verify_telescoping(&case)?.abs_diff);
                }
                line(
                    out,
                    worst <= TELESCOPE_TOL,
                    format!("f={} max_abs_diff={worst:.3e}", function_label(f)),
                )?;
            }
        }
        VerifyKind::Comparison => {
            let f = TestFunction::SumPower { degree: 3 };
            for (name, scheme) in &schemes {
                let mut violations = 0;
                let mut worst_ratio = 0.0f64;
                for c in 0..args.cases {
                    let case = random_rows_case(n, p, f, derive_seed(seed, &[c as u64]))?;
                    let r = verify_strong_comparison(&case, scheme, args.mstar)?;
                    violations += usize::from(!r.holds);
                    if r.bound > 0.0 {
                        worst_ratio = worst_ratio.max(r.remainder.abs() / r.bound);
                    }
                }
                line(
                    out,
                    violations == 0,
                    format!(
                        "weights={name} f={} violations={violations} max_remainder_over_bound={worst_ratio:.3e}",
                        function_label(&f)
                    ),
                )?;
            }
        }
    }
    Ok(if failed { EXIT_VERIFY } else { EXIT_OK })
}
