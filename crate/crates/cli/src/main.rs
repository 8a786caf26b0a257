use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use geodesic_cli::bench::{self, BenchConfig};
use geodesic_cli::commands::{self, parse_side, CuttingArgs};
use geodesic_cli::fuzz::{self, FuzzConfig};
use geodesic_cli::input::{load_sites, usage, Scene, UsageError};
use geodesic_cli::script::{format_answer, parse_schedule, parse_script, parse_variant, Backend, Runner};
use geodesic_core::dynamic_nn::Variant;
use geodesic_core::geom_core::Side;

#[derive(Parser)]
#[command(name = "geodesic", version, about = "Geodesic nearest-neighbor search among sites in a simple polygon")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Diagram {
    #[arg(long)]
    polygon: PathBuf,
    #[arg(long)]
    sites: PathBuf,
    /// Decomposition node whose diagonal is used
    #[arg(long, default_value_t = 0)]
    node: usize,
    /// Side holding the sites: left or right (default: side of the first site)
    #[arg(long)]
    side: Option<String>,
    #[arg(long)]
    emit_svg: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    polygon: PathBuf,
    #[arg(long)]
    script: PathBuf,
    /// insert-only, offline or sqrt-dynamic
    #[arg(long, default_value = "insert-only")]
    variant: String,
    /// Offline update schedule: `t insert id x y` / `t delete id`
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Shortest path length and vertices
    Dist {
        #[arg(long)]
        polygon: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Bisector of two sites beyond a node's diagonal
    Bisector {
        #[arg(long)]
        polygon: PathBuf,
        #[arg(long, default_value_t = 0)]
        node: usize,
        #[arg(long)]
        s: String,
        #[arg(long)]
        t: String,
        #[arg(long)]
        emit_svg: Option<PathBuf>,
    },
    /// Voronoi diagram of one side's sites beyond the diagonal
    Voronoi(Diagram),
    /// k-level subdivision and its trapezoids
    Klevel {
        #[command(flatten)]
        d: Diagram,
        #[arg(long)]
        k: usize,
    },
    /// Shallow cutting with conflict lists
    Cutting {
        #[command(flatten)]
        d: Diagram,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the conflict-size histogram
        #[arg(long)]
        stats: bool,
    },
    /// Replay an operation script against the index
    Run(RunArgs),
    /// Replay an operation script against the brute-force oracle
    Oracle(RunArgs),
    /// Differential testing of the index against the oracle
    Fuzz {
        #[arg(long, default_value_t = 16)]
        polygon_size: usize,
        #[arg(long, default_value_t = 32)]
        sites: usize,
        #[arg(long, default_value_t = 400)]
        ops: usize,
        #[arg(long, default_value_t = 10)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict to one variant (default: cycle through all)
        #[arg(long)]
        variant: Option<String>,
        /// Where reproducers are written
        #[arg(long, default_value = "fuzz-repro")]
        out: PathBuf,
        /// Self-test: break the index's tie rule
        #[arg(long, hide = true)]
        inject_fault: bool,
        /// Re-run a dumped reproducer directory
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Timing grid as CSV, trend slopes on stderr
    Bench {
        /// Comma-separated site counts
        #[arg(long, default_value = "16,32,64,128,256,512,1024")]
        ns: String,
        /// Comma-separated polygon sizes
        #[arg(long, default_value = "8,16,32,64")]
        ms: String,
        #[arg(long, default_value_t = 200)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn seed(flag: u64) -> Result<u64> {
    match std::env::var("GEODESIC_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("GEODESIC_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn side(s: &Option<String>) -> Result<Option<Side>> {
    s.as_deref().map(|v| parse_side(v).ok_or_else(|| usage(format!("--side must be left or right, not {v:?}")))).transpose()
}

fn list(s: &str, flag: &str) -> Result<Vec<usize>> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(|t| t.parse().map_err(|_| usage(format!("{flag}: bad number {t:?}")))).collect()
}

fn write_svg(path: &Option<PathBuf>, svg: Option<String>) -> Result<()> {
    if let (Some(p), Some(s)) = (path, svg) {
        std::fs::write(p, s).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn diagram(d: &Diagram) -> Result<(Scene, Vec<geodesic_core::Site>, Option<Side>)> {
    let side = side(&d.side)?;
    let scene = Scene::load(&d.polygon)?;
    let sites = load_sites(&d.sites, &scene)?;
    Ok((scene, sites, side))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run_script(a: &RunArgs, oracle: bool, out: &mut impl Write) -> Result<()> {
    seed(a.seed)?;
    let variant = parse_variant(&a.variant).ok_or_else(|| usage(format!("unknown variant {:?}", a.variant)))?;
    // the oracle answers any variant's script; only the index cares about the pairing
    match (variant, &a.schedule) {
        _ if oracle => {}
        (Variant::Offline, None) => return Err(usage("--variant offline needs --schedule")),
        (Variant::InsertOnly | Variant::SqrtDynamic, Some(_)) => return Err(usage("--schedule is only for --variant offline")),
        _ => {}
    }
    let scene = Scene::load(&a.polygon)?;
    let ops = parse_script(&read(&a.script)?).with_context(|| format!("script {}", a.script.display()))?;
    let schedule = match &a.schedule {
        Some(p) => Some(parse_schedule(&read(p)?).with_context(|| format!("schedule {}", p.display()))?),
        None => None,
    };
    let backend = if oracle { Backend::Oracle } else { Backend::Index(variant) };
    let mut r = Runner::new(&scene, backend, schedule.as_deref())?;
    for (i, &op) in ops.iter().enumerate() {
        match r.apply(op) {
            Ok(Some(ans)) => writeln!(out, "{}", format_answer(ans))?,
            Ok(None) => {}
            Err(e) => return Err(anyhow::anyhow!("script op {} ({op}): {e}", i + 1)),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.cmd {
        Cmd::Dist { polygon, from, to } => {
            let scene = Scene::load(&polygon)?;
            let (p, q) = (scene.point_arg(&from)?, scene.point_arg(&to)?);
            write!(out, "{}", commands::dist(&scene, p, q)?)?;
        }
        Cmd::Bisector { polygon, node, s, t, emit_svg } => {
            let scene = Scene::load(&polygon)?;
            let (s, t) = (scene.point_arg(&s)?, scene.point_arg(&t)?);
            let (text, svg) = commands::bisector(&scene, node, s, t, emit_svg.is_some())?;
            write!(out, "{text}")?;
            write_svg(&emit_svg, svg)?;
        }
        Cmd::Voronoi(d) => {
            let (scene, sites, side) = diagram(&d)?;
            let (text, svg) = commands::voronoi(&scene, &sites, d.node, side, d.emit_svg.is_some())?;
            write!(out, "{text}")?;
            write_svg(&d.emit_svg, svg)?;
        }
        Cmd::Klevel { d, k } => {
            let (scene, sites, side) = diagram(&d)?;
            let (text, svg) = commands::klevel(&scene, &sites, d.node, side, k, d.emit_svg.is_some())?;
            write!(out, "{text}")?;
            write_svg(&d.emit_svg, svg)?;
        }
        Cmd::Cutting { d, k, eps, seed: s, stats } => {
            let seed = seed(s)?;
            let (scene, sites, side) = diagram(&d)?;
            let args = CuttingArgs { node: d.node, side, k, eps, seed, stats };
            let (text, svg) = commands::cutting(&scene, &sites, &args, d.emit_svg.is_some())?;
            write!(out, "{text}")?;
            write_svg(&d.emit_svg, svg)?;
        }
        Cmd::Run(a) => run_script(&a, false, &mut out)?,
        Cmd::Oracle(a) => run_script(&a, true, &mut out)?,
        Cmd::Fuzz { polygon_size, sites, ops, cases, seed: s, variant, out: dir, inject_fault, replay } => {
            if let Some(r) = replay {
                return Ok(match fuzz::replay(&r)? {
                    Some(mm) => {
                        writeln!(out, "mismatch at query {}: got {} want {}", mm.query, mm.got, mm.want)?;
                        ExitCode::from(1)
                    }
                    None => {
                        writeln!(out, "no mismatch")?;
                        ExitCode::SUCCESS
                    }
                });
            }
            let variants = match variant {
                Some(v) => vec![parse_variant(&v).ok_or_else(|| usage(format!("unknown variant {v:?}")))?],
                None => vec![Variant::InsertOnly, Variant::SqrtDynamic, Variant::Offline],
            };
            let cfg = FuzzConfig { m: polygon_size, n: sites, ops, cases, seed: seed(s)?, variants, out: dir, fault: inject_fault };
            let report = fuzz::run(&cfg)?;
            write!(out, "{}", report.text)?;
            if report.failure.is_some() {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Bench { ns, ms, queries, seed: s } => {
            let cfg = BenchConfig { ns: list(&ns, "--ns")?, ms: list(&ms, "--ms")?, queries, seed: seed(s)? };
            if cfg.ms.iter().any(|&m| m < 3) {
                return Err(usage("--ms: polygons need at least 3 vertices"));
            }
            let rows = bench::run(&cfg)?;
            write!(out, "{}", bench::csv(&rows))?;
            eprint!("{}", bench::trends(&rows));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
