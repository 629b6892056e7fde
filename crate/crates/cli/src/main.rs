use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pdasgd_cli::bench::{self, format_float, image_pair, BenchPlan};
use pdasgd_cli::error::{CliError, Result};
use pdasgd_cli::image::{gen_synthetic_image, CostModel};
use pdasgd_cli::io::{load_images, parse_csv_matrix, write_csv_matrix};
use pdasgd_core::{
    approx_ot, exact_ot_oracle, ApproxConfig, CostMatrix, Distribution, Method, SolverProfile,
    StopTarget, DEFAULT_CAP_MULTIPLIER,
};

#[derive(Parser)]
#[command(
    name = "pdasgd",
    version,
    about = "Approximate optimal transport between images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic images as CSV matrices.
    Gen(GenArgs),
    /// Solve one instance and print key=value diagnostics.
    Solve(SolveArgs),
    /// Run the benchmark grid and write CSV and plot data.
    Bench(BenchArgs),
    /// Exact optimal transport value for a tiny instance (n <= 5).
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Pdasgd,
    Sinkhorn,
    Greenkhorn,
}

impl From<SolverArg> for Method {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Pdasgd => Method::Pdasgd,
            SolverArg::Sinkhorn => Method::Sinkhorn,
            SolverArg::Greenkhorn => Method::Greenkhorn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    /// m = n, plain step size.
    Theory,
    /// m = round(2 sqrt n), step size x15.
    Benchmark,
}

impl From<ProfileArg> for SolverProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Theory => SolverProfile::Theory,
            ProfileArg::Benchmark => SolverProfile::Benchmark,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Image side in pixels.
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Source image (IDX, PGM or CSV). Without it a synthetic pair is used.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target image; defaults to the second image of the source file.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    source_index: usize,
    #[arg(long)]
    target_index: Option<usize>,
    /// Side of the synthetic images.
    #[arg(long, default_value_t = 8)]
    size: usize,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Stop on L1 marginal distance of the unrounded iterate instead of the
    /// certified rule.
    #[arg(long)]
    accuracy: Option<f64>,
    #[arg(long, value_enum, default_value = "pdasgd")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "theory")]
    profile: ProfileArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier on the theoretical iteration cap.
    #[arg(long, default_value_t = DEFAULT_CAP_MULTIPLIER)]
    cap_multiplier: f64,
    /// Write the rounded plan here as a CSV matrix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Image sides, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_SIDES)]
    size: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = bench::DEFAULT_ACCURACIES)]
    accuracy_grid: Vec<f64>,
    #[arg(long, default_value_t = bench::DEFAULT_PAIRS)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["pdasgd", "sinkhorn", "greenkhorn"])]
    solver: Vec<SolverArg>,
    #[arg(long, value_enum, default_value = "benchmark")]
    profile: ProfileArg,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Also write every unrounded and rounded plan with its marginals.
    #[arg(long)]
    dump_plans: bool,
    /// Write wall_ms as zero so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    /// Cost matrix as CSV; defaults to the squared grid distance of the
    /// source's shape.
    #[arg(long)]
    cost: Option<PathBuf>,
    /// Source mass (any supported image format); normalized.
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
}

fn first_image(path: &Path, index: usize) -> Result<pdasgd_cli::ImageInstance> {
    let mut images = load_images(path)?;
    if index >= images.len() {
        return Err(CliError::Invalid(format!(
            "{} holds {} images, index {index} requested",
            path.display(),
            images.len()
        )));
    }
    Ok(images.swap_remove(index))
}

fn gen(args: GenArgs) -> Result<bool> {
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
        path: args.out.clone(),
        source,
    })?;
    for k in 0..args.count {
        let seed = args.seed.wrapping_add(k as u64);
        let img = gen_synthetic_image(args.size, seed)?;
        let path = args.out.join(format!("synthetic_{}_{seed}.csv", args.size));
        write_csv_matrix(&path, img.width(), img.pixels())?;
        println!("{}", path.display());
    }
    Ok(false)
}

fn solve(args: SolveArgs) -> Result<bool> {
    let (alpha, beta, cost) = match &args.source {
        Some(src) => {
            let target_path = args.target.as_deref().unwrap_or(src);
            let target_index = args.target_index.unwrap_or(if args.target.is_some() {
                0
            } else {
                args.source_index + 1
            });
            let a = first_image(src, args.source_index)?;
            let b = first_image(target_path, target_index)?;
            if (a.width(), a.height()) != (b.width(), b.height()) {
                return Err(CliError::Invalid("source and target shapes differ".into()));
            }
            let cost = CostModel::default().cost_matrix(a.width(), a.height())?;
            (a.to_distribution()?, b.to_distribution()?, cost)
        }
        None => {
            let (a, b) = image_pair(args.size, 0, args.seed)?;
            (
                a,
                b,
                CostModel::default().cost_matrix(args.size, args.size)?,
            )
        }
    };
    let config = ApproxConfig {
        method: args.solver.into(),
        profile: args.profile.into(),
        stop: args
            .accuracy
            .map_or(StopTarget::Certified, StopTarget::MarginalDistance),
        seed: args.seed,
        cap_multiplier: args.cap_multiplier,
        checkpoint_stride: 1,
        ..ApproxConfig::new(args.epsilon)
    };
    let start = Instant::now();
    let r = approx_ot(&cost, &alpha, &beta, &config)?;
    let wall = start.elapsed().as_secs_f64() * 1e3;

    println!("solver={}", config.method.name());
    println!("n={}", cost.n());
    println!("epsilon={}", format_float(args.epsilon));
    if let Some(p) = r.parameters {
        println!("eta={}", format_float(p.eta));
        println!("eps_prime={}", format_float(p.eps_prime));
    }
    println!("ot_value={}", format_float(r.ot_value));
    println!("d_unrounded={}", format_float(r.unrounded_distance));
    if let Some(rep) = r.rounding {
        println!("rounding_l1_change={}", format_float(rep.l1_change));
    }
    if let Some(last) = r.records.last() {
        println!("duality_gap={}", format_float(last.duality_gap));
        println!(
            "constraint_violation={}",
            format_float(last.constraint_violation_l1)
        );
    }
    println!("iterations={}", r.iterations);
    println!("cost_units={}", r.cost_units);
    println!("wall_ms={}", format_float(wall));
    println!("stop_reason={}", r.stop_reason.name());
    if let Some(out) = &args.out {
        write_csv_matrix(out, cost.n(), r.plan.entries())?;
        println!("plan={}", out.display());
    }
    Ok(r.flagged())
}

fn run_bench(args: BenchArgs) -> Result<bool> {
    let plan = BenchPlan {
        solvers: args.solver.into_iter().map(Method::from).collect(),
        sides: args.size,
        accuracies: args.accuracy_grid,
        pairs: args.pairs,
        seed: args.seed,
        profile: args.profile.into(),
        record_timing: !args.no_timing,
        dump_plans: args.dump_plans,
        threads: args.threads,
        ..BenchPlan::default()
    };
    let out = bench::run_benchmark(&plan, &args.out)?;
    println!("runs={}", out.rows.len());
    println!("flagged={}", out.flagged());
    println!("results={}", out.results_path.display());
    println!("aggregate={}", out.aggregate_path.display());
    println!("plot_data={}", out.plot_path.display());
    Ok(out.flagged() > 0)
}

fn read_mass(path: &Path) -> Result<Distribution> {
    first_image(path, 0)?.to_distribution()
}

fn oracle(args: OracleArgs) -> Result<bool> {
    let alpha = read_mass(&args.source)?;
    let beta = read_mass(&args.target)?;
    let cost = match &args.cost {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            let (w, h, entries) = parse_csv_matrix(&text)?;
            if w != h {
                return Err(CliError::Invalid(format!(
                    "cost matrix is {h}x{w}, not square"
                )));
            }
            CostMatrix::new(w, entries)?
        }
        None => {
            let img = first_image(&args.source, 0)?;
            CostModel::default().cost_matrix(img.width(), img.height())?
        }
    };
    let (plan, value) = exact_ot_oracle(&cost, &alpha, &beta)?;
    println!("n={}", cost.n());
    println!("ot_value={}", format_float(value));
    for (i, row) in plan.entries().chunks(cost.n()).enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        println!("plan_row_{i}={}", cells.join(","));
    }
    Ok(false)
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for flagged runs, so usage errors map to 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Oracle(a) => oracle(a),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
