use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lastmile::bp::{branch_and_price, Limits};
use lastmile::dd::build_all;
use lastmile::instgen::{generate, read_instance, write_instance, GenConfig};
use lastmile::milp::{export_ip, export_nf};
use lastmile::oracle::{solve_contiguous, OracleError, DEFAULT_BUDGET};
use lastmile::report::{
    bp_status_code, exit_code, parse_schedule_json, schedule_from_json, write_sweep_csv,
    SolveReport, SweepRow,
};
use lastmile::{validate, Alpha, Instance};

const EXIT_USAGE: u8 = 64;
const EXIT_INTERNAL: u8 = 70;

#[derive(Parser)]
#[command(
    name = "lastmile",
    version,
    about = "Last-mile transit scheduling solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance, or a whole grid of them with --batch.
    Generate(GenerateArgs),
    /// Solve an instance or export it as an LP-format model.
    Solve(SolveArgs),
    /// Solve every instance over a grid of alpha (and optionally Tw) values.
    Sweep(SweepArgs),
    /// Check a schedule file against an instance.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Regular,
    Express,
}

#[derive(Args)]
struct GenerateArgs {
    /// Destinations; a comma list with --batch.
    #[arg(long = "K", value_delimiter = ',', default_value = "10")]
    k: Vec<usize>,
    /// Passengers per destination; a comma list with --batch.
    #[arg(long, value_delimiter = ',', default_value = "50")]
    per_dest: Vec<usize>,
    #[arg(long = "Tw", default_value_t = 5)]
    tw: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "regular")]
    variant: VariantArg,
    #[arg(long)]
    fleet_fraction: Option<f64>,
    #[arg(long)]
    capacity: Option<u32>,
    /// Output file, or directory with --batch. Single instances go to stdout without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the K x per-dest x replicate grid; seeds run from --seed upwards.
    #[arg(long)]
    batch: bool,
    #[arg(long, default_value_t = 5)]
    replicates: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Bp,
    Oracle,
    ExportIp,
    ExportNf,
}

#[derive(Args, Clone)]
struct SolveLimits {
    /// Seconds; 0 disables the limit.
    #[arg(long, env = "LASTMILE_TIME_LIMIT", default_value_t = 600.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<usize>,
    /// Stop after the root node.
    #[arg(long)]
    root_only: bool,
    /// Leave wall-clock fields empty so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl SolveLimits {
    fn limits(&self) -> Limits {
        Limits {
            time_limit: (self.time_limit > 0.0).then(|| Duration::from_secs_f64(self.time_limit)),
            node_limit: self.node_limit,
            root_only: self.root_only,
            ..Limits::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "bp")]
    engine: Engine,
    #[arg(long, default_value = "0.5")]
    alpha: Alpha,
    #[command(flatten)]
    limits: SolveLimits,
    /// Oracle option budget.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Result JSON (or model file for export engines); stdout by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(required = true)]
    instances: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<Alpha>>,
    /// Override each instance's window with every value listed.
    #[arg(long = "Tw", value_delimiter = ',')]
    tw: Option<Vec<i64>>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report trips multiplied by 100.
    #[arg(long)]
    trips_x100: bool,
    #[command(flatten)]
    limits: SolveLimits,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    instance: PathBuf,
    schedule: PathBuf,
}

/// Failures that map to the usage exit code.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

fn load(path: &Path) -> Result<Instance> {
    match read_instance(path) {
        Ok(i) => Ok(i),
        Err(e) => usage(format!("{}: {e}", path.display())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn gen_config(args: &GenerateArgs, k: usize, per: usize, seed: u64) -> GenConfig {
    let mut cfg = GenConfig::new(k, per, args.tw, seed);
    if let VariantArg::Express = args.variant {
        cfg = cfg.express();
    }
    cfg.fleet_fraction = args.fleet_fraction;
    if let Some(c) = args.capacity {
        cfg.cv_capacity = c;
    }
    cfg
}

fn cmd_generate(args: GenerateArgs) -> Result<u8> {
    if !args.batch {
        if args.k.len() != 1 || args.per_dest.len() != 1 {
            return usage("lists for --K/--per-dest need --batch");
        }
        let inst = generate(&gen_config(&args, args.k[0], args.per_dest[0], args.seed))?;
        match &args.out {
            Some(p) => write_instance(&inst, p)?,
            None => emit(None, &lastmile::instgen::instance_to_json(&inst))?,
        }
        eprintln!(
            "n={} K={} m={} horizon={}",
            inst.num_passengers(),
            inst.num_destinations(),
            inst.fleet_size,
            inst.horizon
        );
        return Ok(0);
    }
    let Some(dir) = &args.out else {
        return usage("--batch needs --out DIR");
    };
    fs::create_dir_all(dir)?;
    let tag = match args.variant {
        VariantArg::Regular => "reg",
        VariantArg::Express => "exp",
    };
    let mut count = 0;
    for &k in &args.k {
        for &per in &args.per_dest {
            for r in 0..args.replicates {
                let seed = args.seed + r;
                let inst = generate(&gen_config(&args, k, per, seed))?;
                let name = format!("{tag}_K{k}_n{per}_Tw{}_s{seed}.json", args.tw);
                write_instance(&inst, dir.join(name))?;
                count += 1;
            }
        }
    }
    eprintln!("wrote {count} instances to {}", dir.display());
    Ok(0)
}

fn solve_bp(inst: &Instance, alpha: Alpha, limits: &SolveLimits) -> Result<(SolveReport, u8)> {
    let res = branch_and_price(inst, alpha, &limits.limits())?;
    let report = SolveReport::from_bp(inst, alpha, &res, !limits.no_timing)?;
    let code = bp_status_code(res.status, res.schedule.is_some());
    Ok((report, code as u8))
}

fn cmd_solve(args: SolveArgs) -> Result<u8> {
    let inst = load(&args.instance)?;
    let alpha = args.alpha;
    match args.engine {
        Engine::Bp => {
            let (report, code) = solve_bp(&inst, alpha, &args.limits)?;
            emit(args.out.as_deref(), &report.to_json())?;
            Ok(code)
        }
        Engine::Oracle => {
            let start = Instant::now();
            let timing = !args.limits.no_timing;
            let report = match solve_contiguous(&inst, alpha, args.budget) {
                Ok(sol) => {
                    SolveReport::from_oracle(&inst, alpha, sol.as_ref(), start.elapsed(), timing)?
                }
                Err(OracleError::BudgetExceeded { count, budget }) => {
                    eprintln!("oracle refused: {count} options exceed the budget of {budget}");
                    SolveReport::limit_hit("oracle", alpha, start.elapsed(), timing)
                }
                Err(e) => return Err(e.into()),
            };
            emit(args.out.as_deref(), &report.to_json())?;
            Ok(exit_code(&report.status, report.travel.is_some()) as u8)
        }
        Engine::ExportIp | Engine::ExportNf => {
            let Some(out) = &args.out else {
                return usage("export engines need --out FILE");
            };
            let model = if args.engine == Engine::ExportIp {
                export_ip(&inst, alpha, out)?
            } else {
                let dds = build_all(&inst, alpha)?;
                export_nf(&dds, &inst, alpha, out)?
            };
            eprintln!(
                "wrote {} ({} variables, {} rows)",
                out.display(),
                model.num_variables(),
                model.rows.len()
            );
            Ok(0)
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    if args.workers == 0 {
        return usage("--workers must be at least 1");
    }
    let alphas = args
        .alphas
        .clone()
        .unwrap_or_else(|| (0..=10).map(|i| Alpha::new(i, 10).expect("grid")).collect());
    let mut cells = Vec::new();
    for path in &args.instances {
        let inst = load(path)?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into(),
        );
        let windows = args.tw.clone().unwrap_or_else(|| vec![inst.window]);
        for &tw in &windows {
            let mut inst = inst.clone();
            inst.window = tw;
            for &alpha in &alphas {
                cells.push((name.clone(), inst.clone(), alpha));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()?;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(
                |(name, inst, alpha)| match solve_bp(inst, *alpha, &args.limits) {
                    Ok((report, _)) => SweepRow::new(name, inst, &report),
                    Err(e) => SweepRow::failed(name, inst, *alpha, &e.to_string()),
                },
            )
            .collect()
    });
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf, args.trips_x100)?;
    emit(args.out.as_deref(), std::str::from_utf8(&buf)?)?;
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> Result<u8> {
    let inst = load(&args.instance)?;
    let text = fs::read_to_string(&args.schedule)
        .with_context(|| format!("reading {}", args.schedule.display()))?;
    let groups = match parse_schedule_json(&text) {
        Ok(g) => g,
        Err(e) => return usage(format!("{}: {e}", args.schedule.display())),
    };
    let schedule = schedule_from_json(&inst, &groups);
    let report = match validate(&inst, &schedule) {
        Ok(r) => r,
        Err(e) => return usage(format!("{}: {e}", args.schedule.display())),
    };
    if report.is_feasible() {
        println!(
            "valid: travel {} trips {}",
            schedule.objective_travel, schedule.objective_trips
        );
        return Ok(0);
    }
    for v in &report.violations {
        println!("{v}");
    }
    Ok(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_INTERNAL)
            }
        }
    }
}
