//! `maxformer`: compile networks into Transformer weights, verify them, sweep
//! softmax temperatures, count linear regions and evaluate region bounds.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use maxformer::compiler::{compile_general, compile_maxout_token, CompileOptions, REPORT_SCHEMA_VERSION};
use maxformer::regions::{
    cells_to_csv, count_regions_1d, count_regions_2d_cells, maxout_region_lower_bound,
    transformer_region_lower_bound, Slice,
};
use maxformer::selftest::{run_criterion, CRITERIA};
use maxformer::transformer::NetFunction;
use maxformer::verify::{check_equivalence, measure_softmax_error};
use maxformer::{parse_spec, AttentionMode, DomainBox, Error, SpecDocument, TransformerNet, VectorFunction};

const PASS: u8 = 0;
const CHECK_FAILED: u8 = 1;
const IO_OR_PARSE: u8 = 2;
const SHAPE: u8 = 3;
const PRECONDITION: u8 = 4;

#[derive(Parser)]
#[command(name = "maxformer", version, about = "Compile maxout, ReLU and CPWL networks into Transformer weights and verify them")]
struct Cli {
    /// Worker threads for sampling and grid evaluation.
    #[arg(long, global = true, env = "MAXFORMER_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a network spec into Transformer weights.
    Compile(CompileArgs),
    /// Compare a compiled network with its spec on sampled inputs.
    Verify(VerifyArgs),
    /// Measure the softmax error over a range of temperatures.
    Sweep(SweepArgs),
    /// Count linear regions on a 1D or 2D slice.
    Regions(RegionsArgs),
    /// Evaluate a closed-form region lower bound.
    Bounds(BoundsArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Hardmax,
    Softmax,
}

#[derive(Args)]
struct ModeArgs {
    #[arg(long, value_enum, default_value = "hardmax")]
    mode: Mode,
    /// Softmax temperature; required with `--mode softmax`.
    #[arg(long)]
    lambda: Option<f64>,
}

impl ModeArgs {
    fn attention(&self) -> anyhow::Result<AttentionMode> {
        match self.mode {
            Mode::Hardmax => Ok(AttentionMode::Hardmax),
            Mode::Softmax => {
                let lambda = self
                    .lambda
                    .ok_or_else(|| Error::Precondition("--mode softmax needs --lambda".into()))?;
                Ok(AttentionMode::softmax(lambda)?)
            }
        }
    }
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    domain: PathBuf,
    /// Weight file to write.
    #[arg(long)]
    out: PathBuf,
    /// Compile report; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Tournament width for ranks above T (default T).
    #[arg(long)]
    s: Option<usize>,
    /// Single-token construction: only token K carries the layer output.
    #[arg(long, value_name = "K")]
    token: Option<usize>,
    /// Comma-separated token separation per layer.
    #[arg(long, value_delimiter = ',')]
    delta_schedule: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    alpha_margin: f64,
    #[command(flatten)]
    mode: ModeArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Input box; defaults to the one recorded in the weight file.
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Relative tolerance on `|net - oracle| / (1 + |oracle|)`.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    mode: ModeArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Input box; defaults to the one recorded in the weight file.
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1e2,1e3,1e4,1e5")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// The sweep passes when the fitted slope is at most this.
    #[arg(long, default_value_t = -0.9, allow_hyphen_values = true)]
    max_slope: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegionsArgs {
    /// Compiled network (counted under hardmax).
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    net: Option<PathBuf>,
    /// Network spec, counted through its reference evaluator.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    slice: PathBuf,
    /// Per-cell signatures of a 2D slice.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundKind {
    Maxout,
    Transformer,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_enum)]
    kind: BoundKind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long = "D")]
    d: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Maxout input dimension.
    #[arg(long)]
    n0: Option<usize>,
    /// Comma-separated maxout layer widths.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    /// Maxout rank.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Comma-separated criterion numbers (default all).
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<usize>>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_spec(path: &Path) -> anyhow::Result<SpecDocument> {
    parse_spec(&read(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_domain(path: &Path) -> anyhow::Result<DomainBox> {
    match load_spec(path)? {
        SpecDocument::DomainBox(b) => Ok(b),
        other => Err(anyhow!(Error::Parse {
            field: "kind".into(),
            message: format!("{} holds a {}, expected a DomainBox", path.display(), other.kind().as_str()),
        })),
    }
}

fn load_net(path: &Path) -> anyhow::Result<TransformerNet<f64>> {
    TransformerNet::from_json(&read(path)?).with_context(|| format!("reading {}", path.display()))
}

fn net_domain(net: &TransformerNet<f64>, path: Option<&Path>) -> anyhow::Result<DomainBox> {
    match (path, net.meta.domain) {
        (Some(path), _) => load_domain(path),
        (None, Some(domain)) => Ok(domain),
        (None, None) => bail!(Error::Precondition(
            "--domain is required: the weight file records no input box".into()
        )),
    }
}

fn oracle(spec: &SpecDocument) -> anyhow::Result<&(dyn VectorFunction<f64> + Sync)> {
    spec.as_function().ok_or_else(|| {
        anyhow!(Error::Parse {
            field: "kind".into(),
            message: "a DomainBox document is not a network".into(),
        })
    })
}

fn emit(out: Option<&Path>, json: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => write(path, &format!("{json}\n"))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{json}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(Error::Io { path: "<stdout>".into(), source: e }.into())
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn run_compile(args: &CompileArgs) -> anyhow::Result<u8> {
    let spec = load_spec(&args.spec)?;
    let domain = load_domain(&args.domain)?;
    let options = CompileOptions {
        s: args.s,
        mode: args.mode.attention()?,
        delta_schedule: args.delta_schedule.clone(),
        alpha_margin: args.alpha_margin,
        ..CompileOptions::default()
    };
    let compiled = match (args.token, &spec) {
        (Some(k), SpecDocument::MaxoutLayer(f)) => compile_maxout_token(f, &domain, k, &options)?,
        (Some(_), other) => bail!(Error::Precondition(format!(
            "--token applies to maxout layers, not {}",
            other.kind().as_str()
        ))),
        (None, spec) => compile_general(spec, &domain, &options)?,
    };
    write(&args.out, &compiled.net.to_json())?;
    emit(args.report.as_deref(), &to_json(&compiled.report))?;
    let audit = &compiled.report.audit;
    eprintln!(
        "{}: audit {} ({:?} within {:?})",
        audit.theorem_id,
        if audit.within_budget { "pass" } else { "FAIL" },
        audit.actual,
        audit.claimed
    );
    Ok(if audit.within_budget { PASS } else { CHECK_FAILED })
}

fn run_verify(args: &VerifyArgs) -> anyhow::Result<u8> {
    let net = load_net(&args.net)?;
    let spec = load_spec(&args.spec)?;
    let domain = net_domain(&net, args.domain.as_deref())?;
    let mode = args.mode.attention()?;
    let report = check_equivalence(&net, oracle(&spec)?, &domain, args.samples, args.tol, args.seed, mode)?;
    emit(args.out.as_deref(), &report.to_json())?;
    eprintln!(
        "{}: max scaled error {:.3e} (tol {:e}) over {} samples",
        if report.passed { "pass" } else { "FAIL" },
        report.max_scaled_error,
        report.tolerance,
        report.samples
    );
    Ok(if report.passed { PASS } else { CHECK_FAILED })
}

fn run_sweep(args: &SweepArgs) -> anyhow::Result<u8> {
    let net = load_net(&args.net)?;
    let spec = load_spec(&args.spec)?;
    let domain = net_domain(&net, args.domain.as_deref())?;
    let sweep = measure_softmax_error(&net, oracle(&spec)?, &domain, &args.lambdas, args.samples, args.seed)?;
    emit(args.out.as_deref(), &sweep.to_json())?;
    let passed = sweep.meets_rate(args.max_slope, args.lambdas.len());
    match sweep.fitted_slope {
        Some(s) => eprintln!("{}: fitted slope {s:.3}", if passed { "pass" } else { "FAIL" }),
        None => eprintln!("FAIL: slope undefined"),
    }
    Ok(if passed { PASS } else { CHECK_FAILED })
}

fn run_regions(args: &RegionsArgs) -> anyhow::Result<u8> {
    let slice: Slice = serde_json::from_str(&read(&args.slice)?).map_err(|e| Error::Parse {
        field: "slice".into(),
        message: e.to_string(),
    })?;
    let net;
    let spec;
    let f: &(dyn VectorFunction<f64> + Sync) = match (&args.net, &args.spec) {
        (Some(path), _) => {
            net = load_net(path)?;
            &NetFunction::new(&net, AttentionMode::Hardmax)
        }
        (None, Some(path)) => {
            spec = load_spec(path)?;
            oracle(&spec)?
        }
        (None, None) => unreachable!("clap requires --net or --spec"),
    };
    let count = if slice.dirs.len() == 2 {
        let (count, cells) = count_regions_2d_cells(f, &slice)?;
        if let Some(path) = &args.csv {
            write(path, &cells_to_csv(&cells)?)?;
        }
        count
    } else {
        if args.csv.is_some() {
            bail!(Error::Precondition("--csv needs a 2D slice".into()));
        }
        count_regions_1d(f, &slice)?
    };
    emit(args.out.as_deref(), &to_json(&count))?;
    eprintln!("{} region(s), {:?}", count.count, count.method);
    Ok(PASS)
}

#[derive(Serialize)]
struct BoundReport {
    schema_version: u32,
    kind: &'static str,
    inputs: serde_json::Value,
    /// Exact decimal value.
    value: String,
}

fn need(value: Option<usize>, flag: &str) -> anyhow::Result<usize> {
    value.ok_or_else(|| anyhow!(Error::Precondition(format!("--{flag} is required for this bound"))))
}

fn run_bounds(args: &BoundsArgs) -> anyhow::Result<u8> {
    let report = match args.kind {
        BoundKind::Transformer => {
            let (n, m, t, d, q) = (need(args.n, "n")?, need(args.m, "m")?, need(args.t, "T")?, need(args.d, "D")?, need(args.q, "q")?);
            BoundReport {
                schema_version: REPORT_SCHEMA_VERSION,
                kind: "transformer",
                inputs: serde_json::json!({ "n": n, "m": m, "T": t, "D": d, "q": q }),
                value: transformer_region_lower_bound(n, m, t, d, q)?.to_string(),
            }
        }
        BoundKind::Maxout => {
            let widths = args
                .widths
                .clone()
                .ok_or_else(|| Error::Precondition("--widths is required for this bound".into()))?;
            let (n0, k, n) = (need(args.n0, "n0")?, need(args.k, "k")?, need(args.n, "n")?);
            BoundReport {
                schema_version: REPORT_SCHEMA_VERSION,
                kind: "maxout",
                inputs: serde_json::json!({ "n0": n0, "widths": widths, "k": k, "n": n }),
                value: maxout_region_lower_bound(n0, &widths, k, n)?.to_string(),
            }
        }
    };
    emit(args.out.as_deref(), &to_json(&report))?;
    eprintln!("{}", report.value);
    Ok(PASS)
}

#[derive(Serialize)]
struct SelftestReport {
    schema_version: u32,
    seed: u64,
    results: Vec<maxformer::selftest::CriterionResult>,
    passed: bool,
}

fn run_selftest(args: &SelftestArgs) -> anyhow::Result<u8> {
    let ids = args.only.clone().unwrap_or_else(|| (1..=CRITERIA.len()).collect());
    if let Some(bad) = ids.iter().find(|&&id| id == 0 || id > CRITERIA.len()) {
        bail!(Error::Precondition(format!("no criterion {bad}; valid ids are 1..={}", CRITERIA.len())));
    }
    let results: Vec<_> = ids
        .iter()
        .map(|&id| {
            let r = run_criterion(id, args.seed);
            eprintln!("{}", r.line());
            r
        })
        .collect();
    let passed = results.iter().all(|r| r.passed);
    let report = SelftestReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: args.seed,
        results,
        passed,
    };
    if let Some(path) = &args.out {
        write(path, &format!("{}\n", to_json(&report)))?;
    }
    Ok(if passed { PASS } else { CHECK_FAILED })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parse { .. } | Error::Io { .. }) => IO_OR_PARSE,
        Some(Error::Shape(_)) => SHAPE,
        Some(Error::Precondition(_) | Error::Validation(_) | Error::NonConvex(_)) => PRECONDITION,
        Some(Error::NonFinite { .. }) => CHECK_FAILED,
        None => IO_OR_PARSE,
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(PRECONDITION);
        }
    }
    let result = match &cli.command {
        Command::Compile(a) => run_compile(a),
        Command::Verify(a) => run_verify(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Regions(a) => run_regions(a),
        Command::Bounds(a) => run_bounds(a),
        Command::Selftest(a) => run_selftest(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
