//! Command line front end: statistic grids, the example catalog, and the
//! certificate pipelines, emitted as reproducible JSON/CSV reports.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cubetype::catalog;
use cubetype::concentration::{
    build_concentration_params, extract_via_concentration, median_tail_report,
    ConcentrationInputs, ConcentrationReport,
};
use cubetype::cube::equal_blocks;
use cubetype::extraction::{build_ledger, extract_subcube, LedgerMode, LedgerOptions};
use cubetype::rigidity::{bmw_rigidity_check, flat_phi, flat_phi_grid};
use cubetype::spaces::{map_from_json, LpSpace, MapPair, NormExponent};
use cubetype::tree::build_tree;
use cubetype::type_stats::{a_statistic, b_statistic, e_statistic, TypeStatistic};

const TOOL: &str = "cubetype";
const VERSION: &str = env!("CARGO_PKG_VERSION");

const EXIT_PASS: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_FAIL_CERT: u8 = 2;

const FAMILIES: [&str; 5] =
    ["rademacher-l1", "rademacher-l2", "rademacher-lq", "diag-log", "random"];

#[derive(Parser)]
#[command(name = TOOL, version, about = "Subtype statistics and subcube extraction on Hamming cubes", disable_help_subcommand = true)]
#[command(after_help = "Results never depend on thread count; set RAYON_NUM_THREADS to bound \
                        the worker pool. Exit codes: 0 pass, 1 usage error, 2 fail certificate.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit statistic rows over a (kind, p, n) grid
    Ratio(RatioArgs),
    /// List or describe the built-in map families
    Catalog(CatalogArgs),
    /// Flat constant phi_star(p, n, Phi)
    Flat(FlatArgs),
    /// Antipodal-rigidity certificate for an l-cube map
    Rigidity(RigidityArgs),
    /// Deep-tree subcube extraction certificate
    Extract(ExtractArgs),
    /// Concentration-route subcube extraction certificate
    Extract5(Extract5Args),
    /// Concentration diagnostics: derived parameters and median tails
    Concentrate(ConcentrateArgs),
}

/// Map source shared by the statistic and certificate commands.
#[derive(Args, Serialize, Clone)]
struct SourceArgs {
    /// Built-in family (see `catalog list`)
    #[arg(long, conflicts_with = "map")]
    catalog: Option<String>,
    /// Path to a map JSON file
    #[arg(long)]
    map: Option<PathBuf>,
    /// Norm exponent for rademacher-lq
    #[arg(long)]
    q: Option<f64>,
    /// Target space for random: l1:<m>, l2:<m>, lq:<q>:<m>, or linf:<m>
    #[arg(long)]
    space: Option<String>,
    /// Seed for the random family; recorded in every report
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize, Clone)]
struct OutputArgs {
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest accepted cube dimension (pair construction is quadratic)
    #[arg(long, default_value_t = 13)]
    max_n: u32,
}

#[derive(Args, Serialize, Clone)]
struct RatioArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Statistic kinds: comma list from b, e, a
    #[arg(long, default_value = "b")]
    kind: String,
    /// Exponents: comma list, e.g. 1.5,2,3
    #[arg(long, default_value = "2")]
    p: String,
    /// Cube dimensions: N or A..B (inclusive)
    #[arg(long)]
    n: String,
    /// Output format: csv or json
    #[arg(long, default_value = "csv")]
    format: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize, Clone)]
struct CatalogArgs {
    /// `list` or `describe`
    action: String,
    /// Family name for describe
    name: Option<String>,
}

#[derive(Args, Serialize, Clone)]
struct FlatArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    n: f64,
    /// Flatness bound Phi
    #[arg(long = "Phi")]
    big_phi: f64,
    /// Also cross-check on a grid with this many steps per coordinate
    #[arg(long)]
    grid_steps: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize, Clone)]
struct RigidityArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Cube dimension of the checked map
    #[arg(long)]
    l: u32,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Near-extremality margin in E rho(e,-e)^p > (1-a) T^p
    #[arg(long)]
    a: f64,
    /// Distortion bound D for the pair-ratio band [1/D, D]
    #[arg(long = "D", default_value_t = 2.0)]
    big_d: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize, Clone)]
struct ExtractArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Interval tree branching, e.g. 2,2,2 (cube dimension is the product)
    #[arg(long)]
    tree: String,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Scale floor as a fraction of theta: vartheta = frac * theta
    #[arg(long, default_value_t = 0.5)]
    theta_frac: f64,
    #[arg(long = "D", default_value_t = 2.0)]
    big_d: f64,
    /// Ledger mode: empirical or paper-faithful
    #[arg(long, default_value = "empirical")]
    mode: String,
    /// Load a previously emitted parameter ledger instead of deriving one
    #[arg(long)]
    ledger: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize, Clone)]
struct Extract5Args {
    #[command(flatten)]
    source: SourceArgs,
    /// Blocks per level-one interval
    #[arg(long)]
    l: u32,
    /// Coordinates per block (cube dimension is l*k)
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "D", default_value_t = 2.0)]
    big_d: f64,
    /// Scale floor (default 0.9 * theta / D)
    #[arg(long)]
    vartheta: Option<f64>,
    /// Tail-bound constant alpha (recorded, never invented)
    #[arg(long)]
    alpha: Option<f64>,
    /// Tail-bound constant beta
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Serialize, Clone)]
struct ConcentrateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    l: u32,
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "D", default_value_t = 2.0)]
    big_d: f64,
    #[arg(long)]
    vartheta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

/// Resolved invocation recorded inside every report.
#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    command: &'a str,
    #[serde(flatten)]
    args: &'a T,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: RunConfig<'a, T>,
    report: R,
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: msg.into() }
}

impl From<cubetype::error::Error> for Failure {
    fn from(e: cubetype::error::Error) -> Self {
        usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::from(EXIT_PASS);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Ratio(args) => cmd_ratio(args),
        Command::Catalog(args) => cmd_catalog(args),
        Command::Flat(args) => cmd_flat(args),
        Command::Rigidity(args) => cmd_rigidity(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Extract5(args) => cmd_extract5(args),
        Command::Concentrate(args) => cmd_concentrate(args),
    }
}

fn parse_space(text: &str) -> Result<LpSpace, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let parse_m = |s: &str| -> Result<usize, Failure> {
        s.parse().map_err(|_| usage(format!("bad space dimension {s:?}")))
    };
    match parts.as_slice() {
        ["l1", m] => Ok(LpSpace::l1(parse_m(m)?)),
        ["l2", m] => Ok(LpSpace::l2(parse_m(m)?)),
        ["linf", m] => Ok(LpSpace::new(parse_m(m)?, NormExponent::Infinity)?),
        ["lq", q, m] => {
            let q: f64 = q.parse().map_err(|_| usage(format!("bad norm exponent {q:?}")))?;
            Ok(LpSpace::new(parse_m(m)?, NormExponent::new(q)?)?)
        }
        _ => Err(usage(format!(
            "space must be l1:<m>, l2:<m>, lq:<q>:<m>, or linf:<m>, got {text:?}"
        ))),
    }
}

/// Builds the (f, F o f) pair for one cube dimension from the source flags.
fn build_pair(source: &SourceArgs, n: u32) -> Result<MapPair, Failure> {
    if let Some(path) = &source.map {
        let text = std::fs::read_to_string(path)?;
        let f = map_from_json(&text)?;
        if f.dim() != n {
            return Err(usage(format!(
                "map file has cube dimension {}, the command asks for {n}",
                f.dim()
            )));
        }
        return Ok(MapPair::identity_pair(f)?);
    }
    let name = source.catalog.as_deref().ok_or_else(|| {
        usage("a map source is required: --catalog <family> or --map <file.json>")
    })?;
    match name {
        "rademacher-l1" => Ok(MapPair::identity_pair(catalog::canonical_l1(n)?)?),
        "rademacher-l2" => Ok(MapPair::identity_pair(catalog::canonical_l2(n)?)?),
        "rademacher-lq" => {
            let q = source
                .q
                .ok_or_else(|| usage("rademacher-lq needs a norm exponent: --q <q>"))?;
            Ok(MapPair::identity_pair(catalog::canonical_lq(n, q)?)?)
        }
        "diag-log" => {
            let (f, big_f) = catalog::diag_log_pair(n)?;
            Ok(MapPair::new(f, &big_f)?)
        }
        "random" => {
            let space = match &source.space {
                Some(text) => parse_space(text)?,
                None => LpSpace::l2(n as usize),
            };
            let f = catalog::random_lp_map(n, space, -1.0, 1.0, source.seed)?;
            Ok(MapPair::identity_pair(f)?)
        }
        other => Err(usage(format!(
            "unknown family {other:?}; valid families: {}",
            FAMILIES.join(", ")
        ))),
    }
}

fn check_cap(n: u32, max_n: u32) -> Result<(), Failure> {
    if n > max_n {
        return Err(usage(format!(
            "cube dimension {n} exceeds the cap {max_n}; raise it with --max-n"
        )));
    }
    Ok(())
}

fn parse_n_range(text: &str) -> Result<Vec<u32>, Failure> {
    let bad = || usage(format!("dimension must be N or an inclusive range A..B, got {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if a == 0 || a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        let v: u32 = text.trim().parse().map_err(|_| bad())?;
        if v == 0 {
            return Err(bad());
        }
        Ok(vec![v])
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("bad {what} {s:?}"))))
        .collect()
}

/// serde_json's float formatting: shortest round-trip, so reruns are
/// bit-identical.
fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).unwrap()
    } else {
        "inf".into()
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    let body = format!("{}\n", text.trim_end_matches('\n'));
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => print!("{body}"),
    }
    Ok(())
}

fn emit_json<T: Serialize, R: Serialize>(
    out: &Option<PathBuf>,
    command: &str,
    args: &T,
    seed: u64,
    report: R,
) -> Result<(), Failure> {
    let envelope = Envelope {
        tool: TOOL,
        version: VERSION,
        seed,
        config: RunConfig { command, args },
        report,
    };
    let text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| usage(format!("serialization failed: {e}")))?;
    emit(out, &text)
}

fn cmd_ratio(args: RatioArgs) -> Result<u8, Failure> {
    let kinds: Vec<String> = parse_list(&args.kind, "kind")?;
    for k in &kinds {
        if !matches!(k.as_str(), "b" | "e" | "a") {
            return Err(usage(format!("kind must be b, e, or a, got {k:?}")));
        }
    }
    let ps: Vec<f64> = parse_list(&args.p, "exponent")?;
    let ns = parse_n_range(&args.n)?;
    for &n in &ns {
        check_cap(n, args.output.max_n)?;
    }

    let mut rows: Vec<TypeStatistic> = Vec::new();
    for &n in &ns {
        let pair = build_pair(&args.source, n)?;
        for kind in &kinds {
            match kind.as_str() {
                "b" => {
                    for &p in &ps {
                        rows.push(with_seed(b_statistic(&pair, p)?, &args.source));
                    }
                }
                "e" => {
                    for &p in &ps {
                        rows.push(with_seed(e_statistic(&pair, p)?, &args.source));
                    }
                }
                // The a statistic has no exponent; one row per dimension.
                "a" => rows.push(with_seed(a_statistic(&pair), &args.source)),
                _ => unreachable!(),
            }
        }
    }

    match args.format.as_str() {
        "json" => emit_json(&args.output.out, "ratio", &args, args.source.seed, &rows)?,
        "csv" => {
            let config = serde_json::to_string(&RunConfig { command: "ratio", args: &args })
                .map_err(|e| usage(format!("serialization failed: {e}")))?;
            let mut text = String::new();
            let _ = writeln!(text, "# {TOOL} {VERSION}");
            let _ = writeln!(text, "# seed: {}", args.source.seed);
            let _ = writeln!(text, "# config: {config}");
            let _ = writeln!(text, "kind,p,n,lhs,rhs,ratio,ratio_root,lip_f,lip_F,seed");
            for r in &rows {
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{},{},{},{},{}",
                    kind_tag(r),
                    fmt_f64(r.p),
                    r.n,
                    fmt_f64(r.lhs),
                    fmt_f64(r.rhs),
                    fmt_f64(r.ratio.0),
                    fmt_f64(r.ratio_root.0),
                    fmt_f64(r.lip_f),
                    fmt_f64(r.lip_big_f),
                    r.seed.map(|s| s.to_string()).unwrap_or_default(),
                );
            }
            emit(&args.output.out, &text)?;
        }
        other => return Err(usage(format!("format must be csv or json, got {other:?}"))),
    }
    Ok(EXIT_PASS)
}

fn with_seed(mut stat: TypeStatistic, source: &SourceArgs) -> TypeStatistic {
    if source.catalog.as_deref() == Some("random") {
        stat.seed = Some(source.seed);
    }
    stat
}

fn kind_tag(stat: &TypeStatistic) -> &'static str {
    use cubetype::type_stats::TypeStatKind::*;
    match stat.kind {
        Bp => "b",
        Ep => "e",
        A => "a",
    }
}

fn cmd_catalog(args: CatalogArgs) -> Result<u8, Failure> {
    match args.action.as_str() {
        "list" => {
            for name in FAMILIES {
                println!("{name}");
            }
            Ok(EXIT_PASS)
        }
        "describe" => {
            let name = args
                .name
                .as_deref()
                .ok_or_else(|| usage("describe needs a family name"))?;
            let text = match name {
                "rademacher-l1" => {
                    "signs scaled by 1/n into l_1^n; the extremal pair for the type-1 \
                     statistic (b-ratio exactly 1)"
                }
                "rademacher-l2" => {
                    "signs scaled by 1/n into l_2^n; b-ratio decays as n^(-p/2)"
                }
                "rademacher-lq" => "signs scaled by 1/n into l_q^n; pass --q <q>",
                "diag-log" => {
                    "rademacher-l1 followed by the diagonal with weights 1/log(i+1) on \
                     l_1^m; pair-level ratios vanish but never reach zero"
                }
                "random" => {
                    "seeded uniform images in [-1,1]^m; --seed pins the map exactly and \
                     --space picks l1:<m>, l2:<m>, lq:<q>:<m>, or linf:<m> (default l2:<n>)"
                }
                other => {
                    return Err(usage(format!(
                        "unknown family {other:?}; valid families: {}",
                        FAMILIES.join(", ")
                    )))
                }
            };
            println!("{name}: {text}");
            Ok(EXIT_PASS)
        }
        other => Err(usage(format!("catalog action must be list or describe, got {other:?}"))),
    }
}

#[derive(Serialize)]
struct FlatReport {
    constant: cubetype::rigidity::FlatConstant,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_cross_check: Option<cubetype::rigidity::FlatConstant>,
}

fn cmd_flat(args: FlatArgs) -> Result<u8, Failure> {
    let constant = flat_phi(args.p, args.n, args.big_phi)?;
    let grid_cross_check = match args.grid_steps {
        Some(steps) => Some(flat_phi_grid(args.p, args.n, args.big_phi, steps)?),
        None => None,
    };
    let report = FlatReport { constant, grid_cross_check };
    emit_json(&args.output.out, "flat", &args, 0, &report)?;
    Ok(EXIT_PASS)
}

fn cmd_rigidity(args: RigidityArgs) -> Result<u8, Failure> {
    check_cap(args.l, args.output.max_n)?;
    let pair = build_pair(&args.source, args.l)?;
    let cert = bmw_rigidity_check(pair.inner(), args.p, args.a, args.big_d)?;
    let pass = cert.hypothesis_holds && cert.verdict;
    emit_json(&args.output.out, "rigidity", &args, args.source.seed, &cert)?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL_CERT })
}

fn cmd_extract(args: ExtractArgs) -> Result<u8, Failure> {
    let branching: Vec<u32> = parse_list(&args.tree, "branching factor")?;
    let tree = build_tree(&branching)?;
    check_cap(tree.big_l(), args.output.max_n)?;
    let pair = build_pair(&args.source, tree.big_l())?;

    let ledger = match &args.ledger {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad ledger file: {e}")))?
        }
        None => {
            let mode = match args.mode.as_str() {
                "empirical" => LedgerMode::Empirical,
                "paper-faithful" => LedgerMode::PaperFaithful,
                other => {
                    return Err(usage(format!(
                        "mode must be empirical or paper-faithful, got {other:?}"
                    )))
                }
            };
            build_ledger(
                args.p,
                args.lambda,
                args.theta,
                args.theta_frac * args.theta,
                args.big_d,
                mode,
                &LedgerOptions { branching: Some(branching), ..Default::default() },
            )?
        }
    };

    let cert = extract_subcube(&pair, &ledger, &tree)?;
    let pass = cert.verdict;
    emit_json(&args.output.out, "extract", &args, args.source.seed, &cert)?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL_CERT })
}

fn concentration_inputs(
    l: u32,
    k: u32,
    theta: f64,
    big_d: f64,
    lambda: f64,
    vartheta: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
) -> ConcentrationInputs {
    ConcentrationInputs { l, k, theta, big_d, lambda, vartheta, alpha, beta }
}

fn cmd_extract5(args: Extract5Args) -> Result<u8, Failure> {
    let n = args
        .l
        .checked_mul(args.k)
        .ok_or_else(|| usage("l*k overflows"))?;
    check_cap(n, args.output.max_n)?;
    let pair = build_pair(&args.source, n)?;
    let params = build_concentration_params(&concentration_inputs(
        args.l,
        args.k,
        args.theta,
        args.big_d,
        args.lambda,
        args.vartheta,
        args.alpha,
        args.beta,
    ))?;
    let cert = extract_via_concentration(&pair, &params)?;
    let pass = cert.verdict;
    emit_json(&args.output.out, "extract5", &args, args.source.seed, &cert)?;
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL_CERT })
}

#[derive(Serialize)]
struct ConcentrateReport {
    params: cubetype::concentration::ConcentrationParams,
    lip_f: f64,
    intervals: Vec<ConcentrationReport>,
    verdict: bool,
}

fn cmd_concentrate(args: ConcentrateArgs) -> Result<u8, Failure> {
    let n = args
        .l
        .checked_mul(args.k)
        .ok_or_else(|| usage("l*k overflows"))?;
    check_cap(n, args.output.max_n)?;
    let pair = build_pair(&args.source, n)?;
    let params = build_concentration_params(&concentration_inputs(
        args.l,
        args.k,
        args.theta,
        args.big_d,
        args.lambda,
        args.vartheta,
        args.alpha,
        args.beta,
    ))?;

    // Deviation profiles Phi_I(e) = rho_Y(e, Ie) for the root interval and
    // the level-one cover, reported with medians and tail masses.
    let lip_f = pair.lip_f();
    let bound = 2.0 * params.lambda * lip_f;
    let cube = pair.cube();
    let mut intervals = Vec::new();
    let mut blocks = equal_blocks(n, 1)?;
    blocks.extend(equal_blocks(n, args.l)?);
    for (idx, block) in blocks.iter().enumerate() {
        let bits = block.bits();
        let phi: Vec<f64> = (0..cube.vertex_count())
            .map(|m| pair.rho_y(&cube.point(m), &cube.point(m ^ bits)))
            .collect();
        let id = if idx == 0 {
            "root".to_string()
        } else {
            format!("level1_{}", idx - 1)
        };
        intervals.push(median_tail_report(&id, &phi, bound)?);
    }

    let verdict = params.checks.holds;
    let report = ConcentrateReport { params, lip_f, intervals, verdict };
    emit_json(&args.output.out, "concentrate", &args, args.source.seed, &report)?;
    Ok(if verdict { EXIT_PASS } else { EXIT_FAIL_CERT })
}
