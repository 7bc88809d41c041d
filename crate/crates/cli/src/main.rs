//! `fbx`: finite-blocklength bounds and feedback-scheme simulation from the
//! command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use fbx_core::antisym::{certify_antisymmetric, make_antisym_z, make_parallel_bsc};
use fbx_core::channel::{solve_caid, BroadcastPair, ChannelFile};
use fbx_core::converse::{converse_chebyshev, converse_with_law, increment_law, normal_approx_feedback, ConverseQuery, LambdaRule};
use fbx_core::curve::{parse_grid, run_fig4, BoundCurve, CurveKind, CurvePoint, Format, Metadata, TOOL_VERSION};
use fbx_core::exec::map_slice;
use fbx_core::flf_sim::{default_params_with, estimate_quantile_and_bound, DirectionRule, EpsStar, FlfOptions};
use fbx_core::rcu::{detect_parallel_bsc, rcu_max_log_m};
use fbx_core::vlf::{default_vlf_params_with, simulate_vlf, vlf_achievable_point, vlf_converse_log_m, VlfMode, VlfOptions, CI_ALPHA};
use fbx_core::{Error, ErrorCategory, Execution};

const DEFAULT_SEED: u64 = 1;
const SOLVER_TOL: f64 = 1e-10;
const LN2: f64 = std::f64::consts::LN_2;

#[derive(Parser)]
#[command(name = "fbx", version, about = "Finite-blocklength bounds for common-message broadcast channels with feedback")]
struct Cli {
    /// Master seed for every Monte Carlo stream.
    #[arg(long, env = "FBX_SEED", global = true)]
    seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long, env = "FBX_THREADS", global = true)]
    threads: Option<usize>,
    /// Run every workload on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Report message sizes in bits instead of nats in CSV output.
    #[arg(long, global = true)]
    bits: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, analyze or certify a channel pair.
    #[command(subcommand)]
    Channel(ChannelCmd),
    /// Evaluate a bound on a blocklength grid.
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Monte Carlo evaluation of the feedback schemes.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Converse, RCU and normal-approximation curves for the parallel-BSC pair.
    Fig4(Fig4Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    ParallelBsc,
    AntisymZ,
}

#[derive(Subcommand)]
enum ChannelCmd {
    Make {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        q1: Option<f64>,
        #[arg(long)]
        q2: Option<f64>,
        /// Crossover of the Z-type pair.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Capacity, CAID, eta and dispersions.
    Analyze {
        channel: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks antisymmetry and its closed-form consequences.
    Certify {
        channel: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GridOut {
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "100:2000:100")]
    n_grid: String,
    #[arg(long)]
    eps: f64,
    /// Output file; `.json` selects JSON, anything else CSV. Stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoundCmd {
    Converse {
        #[arg(long)]
        channel: PathBuf,
        /// `logn`, `grid`, or a positive number.
        #[arg(long, default_value = "logn")]
        lambda: String,
        #[command(flatten)]
        grid: GridOut,
    },
    Rcu {
        #[arg(long, required_unless_present = "channel")]
        q1: Option<f64>,
        #[arg(long, required_unless_present = "channel")]
        q2: Option<f64>,
        /// Parallel-BSC channel file, instead of `--q1/--q2`.
        #[arg(long, conflicts_with_all = ["q1", "q2"])]
        channel: Option<PathBuf>,
        #[command(flatten)]
        grid: GridOut,
    },
    Normal {
        #[arg(long)]
        channel: PathBuf,
        #[command(flatten)]
        grid: GridOut,
    },
    VlfConverse {
        #[arg(long)]
        channel: PathBuf,
        /// Average blocklengths.
        #[arg(long, default_value = "1000,2000,5000,10000")]
        ell_grid: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Canonical,
    OutputNeutral,
}

impl From<Direction> for DirectionRule {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Canonical => DirectionRule::Canonical,
            Direction::OutputNeutral => DirectionRule::OutputNeutral,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Union bound over wrong codewords plus the truncation probability.
    #[value(name = "remark5")]
    Analytic,
    Coupled,
}

#[derive(Subcommand)]
enum SimCmd {
    Flf {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        /// Uses per transmitted block-type symbol.
        #[arg(long)]
        kappa: Option<u64>,
        /// Slack `tau` (default `1/sqrt(n)`).
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, value_enum, default_value = "canonical")]
        direction: Direction,
        /// `parallel-bsc` or a number in [0, 1].
        #[arg(long, default_value = "parallel-bsc")]
        eps_star: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Vlf {
        #[arg(long)]
        channel: PathBuf,
        #[arg(long)]
        ellbar: u64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, value_enum, default_value = "remark5")]
        mode: Mode,
        /// Ablation: every first-phase block uses the CAID.
        #[arg(long)]
        no_balancing: bool,
        #[arg(long)]
        kappa: Option<u64>,
        #[arg(long, default_value = "parallel-bsc")]
        eps_star: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Fig4Args {
    #[arg(long, default_value_t = 0.05)]
    q1: f64,
    #[arg(long, default_value_t = 0.10)]
    q2: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value = "100:2000:100")]
    n_grid: String,
    /// Directory for `converse.csv`, `rcu.csv`, `normal.csv` and `fig4.json`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

struct Ctx {
    seed: u64,
    exec: Execution,
    bits: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err.category() {
                ErrorCategory::Validation => 2,
                ErrorCategory::Numerical => 3,
                ErrorCategory::Io => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 4;
        }
    }
    2
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::OutOfRange("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the worker pool")?;
    }
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(DEFAULT_SEED),
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
        bits: cli.bits,
    };
    match cli.command {
        Command::Channel(c) => channel(c),
        Command::Bound(b) => bound(b, &ctx),
        Command::Sim(s) => sim(s, &ctx),
        Command::Fig4(f) => fig4(f, &ctx),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn need(v: Option<f64>, name: &str) -> Result<f64> {
    v.ok_or_else(|| Error::OutOfRange(format!("--{name} is required for this kind")).into())
}

fn load(path: &Path) -> Result<(BroadcastPair, String)> {
    Ok(ChannelFile::load(path)?)
}

fn channel(cmd: ChannelCmd) -> Result<()> {
    match cmd {
        ChannelCmd::Make { kind, q1, q2, q, out } => {
            let pair = match kind {
                Kind::ParallelBsc => make_parallel_bsc(need(q1, "q1")?, need(q2, "q2")?)?,
                Kind::AntisymZ => make_antisym_z(need(q, "q")?)?,
            };
            write_out(out.as_deref(), &(ChannelFile::from_pair(&pair).to_json() + "\n"))
        }
        ChannelCmd::Analyze { channel, out } => {
            let (pair, digest) = load(&channel)?;
            let a = solve_caid(&pair, SOLVER_TOL)?;
            let v = json!({
                "tool_version": TOOL_VERSION,
                "channel_digest": digest,
                "capacity_bits": a.capacity_c / LN2,
                "analysis": a,
            });
            write_out(out.as_deref(), &pretty(&v)?)
        }
        ChannelCmd::Certify { channel, out } => {
            let (pair, digest) = load(&channel)?;
            let a = solve_caid(&pair, SOLVER_TOL)?;
            let report = certify_antisymmetric(&pair, &a)?;
            let passed = report.checks.iter().all(|c| c.passed);
            let v = json!({ "tool_version": TOOL_VERSION, "channel_digest": digest, "passed": passed, "report": report });
            write_out(out.as_deref(), &pretty(&v)?)?;
            if !passed {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(Error::CertificationRefused(format!("checks failed: {}", failed.join(", "))).into());
            }
            Ok(())
        }
    }
}

/// A bound table: the curve plus per-point extra columns.
struct Table {
    curve: BoundCurve,
    /// Header after the size column, and per-row values.
    extra_headers: Vec<&'static str>,
    extra: Vec<Vec<Value>>,
    /// Name of the rate column.
    rate_header: &'static str,
    /// Name of the blocklength column.
    n_header: &'static str,
}

impl Table {
    fn csv(&self, bits: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec![self.n_header, if bits { "logM_bits" } else { "logM_nats" }, self.rate_header];
        head.extend(&self.extra_headers);
        w.write_record(&head)?;
        for (p, ex) in self.curve.points.iter().zip(&self.extra) {
            let size = if bits { p.log_m_nats / LN2 } else { p.log_m_nats };
            let mut rec = vec![p.n.to_string(), size.to_string(), p.rate_bits().to_string()];
            rec.extend(ex.iter().map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
    }

    fn json(&self) -> Result<String> {
        let rows: Vec<Value> = self
            .extra
            .iter()
            .map(|ex| Value::Object(self.extra_headers.iter().map(|h| h.to_string()).zip(ex.iter().cloned()).collect()))
            .collect();
        pretty(&json!({ "curve": self.curve, "details": rows }))
    }

    fn emit(&self, out: Option<&Path>, bits: bool) -> Result<()> {
        let text = match format_for(out) {
            Format::Json => self.json()?,
            Format::Csv => self.csv(bits)?,
        };
        write_out(out, &text)
    }
}

fn format_for(out: Option<&Path>) -> Format {
    match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    }
}

fn grid(spec: &str) -> Result<Vec<u64>> {
    let g = parse_grid(spec)?;
    if g.contains(&0) {
        return Err(Error::OutOfRange("blocklengths must be positive".into()).into());
    }
    Ok(g)
}

fn parse_lambda(s: &str) -> Result<LambdaRule> {
    Ok(match s {
        "logn" => LambdaRule::LogN,
        "grid" => LambdaRule::Grid,
        v => LambdaRule::Fixed(v.parse::<f64>().map_err(|_| Error::Parse(format!("--lambda {v:?}: expected logn, grid or a number")))?),
    })
}

fn parse_eps_star(s: &str) -> Result<EpsStar> {
    Ok(match s {
        "parallel-bsc" => EpsStar::ParallelBsc,
        v => EpsStar::Supplied(v.parse::<f64>().map_err(|_| Error::Parse(format!("--eps-star {v:?}: expected parallel-bsc or a number")))?),
    })
}

fn table(
    kind: CurveKind,
    rows: Vec<(u64, f64, Vec<Value>)>,
    digest: String,
    seed: u64,
    eps: f64,
    meta: Metadata,
    extra_headers: Vec<&'static str>,
) -> Result<Table> {
    let extra = rows.iter().map(|r| r.2.clone()).collect();
    let pts = rows.iter().map(|r| CurvePoint { n: r.0 as f64, log_m_nats: r.1, kind }).collect();
    Ok(Table {
        curve: BoundCurve::new(pts, digest, seed, eps, meta)?,
        extra_headers,
        extra,
        rate_header: "rate_bits_per_use",
        n_header: "n",
    })
}

fn bound(cmd: BoundCmd, ctx: &Ctx) -> Result<()> {
    match cmd {
        BoundCmd::Converse { channel, lambda, grid: g } => {
            let (pair, digest) = load(&channel)?;
            let a = solve_caid(&pair, SOLVER_TOL)?;
            let rule = parse_lambda(&lambda)?;
            let ns = grid(&g.n_grid)?;
            for &n in &ns {
                ConverseQuery::new(n, g.eps, rule)?;
            }
            let law = match increment_law(&a, &pair) {
                Ok(l) => Some(l),
                Err(Error::NotInvariant) => None,
                Err(e) => return Err(e.into()),
            };
            let rows = map_slice(ctx.exec, &ns, |&n| -> fbx_core::Result<(u64, f64, Vec<Value>)> {
                match &law {
                    Some(law) => {
                        let r = converse_with_law(law, &ConverseQuery::new(n, g.eps, rule)?, Execution::Sequential)?;
                        Ok((n, r.log_m.or_infinity(), vec![json!(r.lambda_used), json!("exact")]))
                    }
                    None => Ok((n, converse_chebyshev(&a, n, g.eps).or_infinity(), vec![json!(Value::Null), json!("chebyshev")])),
                }
            });
            let rows = rows.into_iter().collect::<fbx_core::Result<Vec<_>>>()?;
            let meta = Metadata::new()
                .flag("lambda", &lambda)
                .flag("method", if law.is_some() { "exact" } else { "chebyshev" })
                .flag("increment_law", "per-input invariant weighted density");
            let mut t = table(CurveKind::Converse, rows, digest, ctx.seed, g.eps, meta, vec!["lambda_used", "method"])?;
            t.rate_header = "logM_bits_per_use";
            t.emit(g.out.as_deref(), ctx.bits)
        }
        BoundCmd::Rcu { q1, q2, channel, grid: g } => {
            let (q1, q2, digest) = match channel {
                Some(path) => {
                    let (pair, digest) = load(&path)?;
                    let (a, b) = detect_parallel_bsc(&pair)?;
                    (a, b, digest)
                }
                None => {
                    let (a, b) = (need(q1, "q1")?, need(q2, "q2")?);
                    let pair = make_parallel_bsc(a, b)?;
                    (a, b, fbx_core::channel::channel_digest((ChannelFile::from_pair(&pair).to_json() + "\n").as_bytes()))
                }
            };
            let ns = grid(&g.n_grid)?;
            let rows = map_slice(ctx.exec, &ns, |&n| -> fbx_core::Result<(u64, f64, Vec<Value>)> {
                let r = rcu_max_log_m(n, g.eps, q1, q2)?;
                Ok((n, r.log_m, vec![json!(r.epsilon_achieved), json!(r.truncation_mass)]))
            });
            let rows = rows.into_iter().collect::<fbx_core::Result<Vec<_>>>()?;
            let meta = Metadata::new().flag("q1", q1).flag("q2", q2).flag("decoder", "min-distance");
            table(CurveKind::Rcu, rows, digest, ctx.seed, g.eps, meta, vec!["epsilon_achieved", "truncation_mass"])?
                .emit(g.out.as_deref(), ctx.bits)
        }
        BoundCmd::Normal { channel, grid: g } => {
            let (pair, digest) = load(&channel)?;
            let a = solve_caid(&pair, SOLVER_TOL)?;
            let rows = grid(&g.n_grid)?
                .into_iter()
                .map(|n| Ok((n, normal_approx_feedback(&a, n, g.eps)?, vec![])))
                .collect::<fbx_core::Result<Vec<_>>>()?;
            table(CurveKind::NormalApprox, rows, digest, ctx.seed, g.eps, Metadata::new(), vec![])?.emit(g.out.as_deref(), ctx.bits)
        }
        BoundCmd::VlfConverse { channel, ell_grid, eps, out } => {
            let (pair, digest) = load(&channel)?;
            let a = solve_caid(&pair, SOLVER_TOL)?;
            let rows = parse_grid(&ell_grid)?
                .into_iter()
                .map(|l| Ok((l, vlf_converse_log_m(l as f64, eps, a.capacity_c)?, vec![])))
                .collect::<fbx_core::Result<Vec<_>>>()?;
            let mut t = table(CurveKind::VlfConverse, rows, digest, ctx.seed, eps, Metadata::new(), vec![])?;
            t.n_header = "ell";
            t.emit(out.as_deref(), ctx.bits)
        }
    }
}

fn sim(cmd: SimCmd, ctx: &Ctx) -> Result<()> {
    match cmd {
        SimCmd::Flf { channel, n, eps, trials, rho, kappa, tau, direction, eps_star, out } => {
            let (pair, digest) = load(&channel)?;
            let a = solve_caid(&pair, SOLVER_TOL)?;
            let opts = FlfOptions { rho, kappa, tau, direction: direction.into() };
            let params = default_params_with(n, eps, &a, &pair, &opts)?;
            let run = estimate_quantile_and_bound(&params, &pair, &a.p_star, trials, eps, parse_eps_star(&eps_star)?, ctx.seed, ctx.exec)?;
            let v = json!({
                "tool_version": TOOL_VERSION,
                "channel_digest": digest,
                "seed": ctx.seed,
                "epsilon": eps,
                "params": params,
                "penalties": run.point.penalties,
                "quantile": {
                    "gamma_hat": run.point.gamma_hat,
                    "empirical": run.point.quantile_empirical,
                    "upper": run.point.quantile_upper,
                    "confidence": 1.0 - run.point.alpha,
                    "target": run.point.target,
                },
                "point": run.point,
                "stats": run.stats,
            });
            write_out(out.as_deref(), &pretty(&v)?)
        }
        SimCmd::Vlf { channel, ellbar, eps, trials, mode, no_balancing, kappa, eps_star, out } => {
            if trials == 0 {
                bail!(Error::OutOfRange("--trials must be positive".into()));
            }
            let (pair, digest) = load(&channel)?;
            let a = solve_caid(&pair, SOLVER_TOL)?;
            let opts = VlfOptions { balancing: !no_balancing, kappa, eps_star: parse_eps_star(&eps_star)?, ..Default::default() };
            let params = default_vlf_params_with(ellbar, &a, &pair, &opts)?;
            let mode = match mode {
                Mode::Analytic => VlfMode::Analytic,
                Mode::Coupled => VlfMode::Coupled,
            };
            let stats = simulate_vlf(&params, &pair, trials, ctx.seed, mode, ctx.exec)?;
            let point = vlf_achievable_point(&params, &stats, eps, mode)?;
            let v = json!({
                "tool_version": TOOL_VERSION,
                "channel_digest": digest,
                "seed": ctx.seed,
                "epsilon": eps,
                "confidence": 1.0 - CI_ALPHA,
                "params": params,
                "stats": stats,
                "point": point,
                "normalized_gap": fbx_core::vlf::normalized_gap(&point, eps, a.capacity_c),
            });
            write_out(out.as_deref(), &pretty(&v)?)
        }
    }
}

fn fig4(args: Fig4Args, ctx: &Ctx) -> Result<()> {
    let ns = grid(&args.n_grid)?;
    let mut f = run_fig4(args.q1, args.q2, args.eps, &ns, ctx.exec)?;
    for c in [&mut f.converse, &mut f.rcu, &mut f.normal] {
        c.seed = ctx.seed;
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io(format!("{}: {e}", args.out_dir.display())))?;
    for (name, c) in [("converse.csv", &f.converse), ("rcu.csv", &f.rcu), ("normal.csv", &f.normal)] {
        c.emit(Format::Csv, &args.out_dir.join(name), ctx.bits)?;
    }
    write_out(Some(&args.out_dir.join("fig4.json")), &pretty(&f)?)?;
    let mut summary = String::new();
    for ((c, r), nm) in f.converse.points.iter().zip(&f.rcu.points).zip(&f.normal.points) {
        summary.push_str(&format!(
            "n = {:>6}: rcu {:.4}  normal {:.4}  converse {:.4} bits/use\n",
            c.n,
            r.rate_bits(),
            nm.rate_bits(),
            c.rate_bits()
        ));
    }
    eprint!("{summary}");
    Ok(())
}
