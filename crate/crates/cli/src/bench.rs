//! Benchmark grid over solvers, image sizes, accuracies and image pairs.
//!
//! Every run solves one synthetic image pair with the approximation pipeline,
//! stopping once the unrounded iterate is within the target L1 marginal
//! distance, and reports deterministic cost units. Runs fan out over a rayon
//! pool; rows are sorted before anything is written, so output does not
//! depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pdasgd_core::{
    approx_ot, ApproxConfig, CostMatrix, Distribution, Method, SolverProfile, StopTarget,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{io_err, CliError, Result};
use crate::image::{foreground_side, gen_synthetic_image_with, CostModel};

pub const CSV_HEADER: &str =
    "solver,n,accuracy,pair,seed,cost_units,wall_ms,ot_value,d_final,stop_reason";
pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const PLOT_FILE: &str = "plot_data.dat";
pub const PLANS_DIR: &str = "plans";

pub const DEFAULT_SIDES: [usize; 4] = [8, 12, 16, 20];
pub const DEFAULT_ACCURACIES: [f64; 4] = [0.005, 0.01, 0.015, 0.02];
pub const DEFAULT_PAIRS: usize = 5;

/// 17 significant digits: enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub solvers: Vec<Method>,
    /// Image sides; each run has `n = side²`.
    pub sides: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub pairs: usize,
    pub seed: u64,
    pub profile: SolverProfile,
    pub cost_model: CostModel,
    /// When false, `wall_ms` is written as zero so output is byte-reproducible.
    pub record_timing: bool,
    pub dump_plans: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            solvers: vec![Method::Pdasgd, Method::Sinkhorn, Method::Greenkhorn],
            sides: DEFAULT_SIDES.to_vec(),
            accuracies: DEFAULT_ACCURACIES.to_vec(),
            pairs: DEFAULT_PAIRS,
            seed: 0,
            profile: SolverProfile::Benchmark,
            cost_model: CostModel::default(),
            record_timing: true,
            dump_plans: false,
            threads: None,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() || self.sides.is_empty() || self.accuracies.is_empty() {
            return Err(CliError::Invalid(
                "solver, size and accuracy grids must be nonempty".into(),
            ));
        }
        if self.pairs == 0 {
            return Err(CliError::Invalid("need at least one image pair".into()));
        }
        if let Some(a) = self
            .accuracies
            .iter()
            .find(|a| !(**a > 0.0 && a.is_finite()))
        {
            return Err(CliError::Invalid(format!(
                "accuracy must be positive, got {a}"
            )));
        }
        for &side in &self.sides {
            foreground_side(side)?;
        }
        Ok(())
    }
}

/// The generator seed for a run; pairs differ so PDASGD sampling differs.
pub fn run_seed(base: u64, pair: usize) -> u64 {
    base.wrapping_add(pair as u64)
}

/// Source and target images of one pair. Each (side, pair) reads its own
/// ChaCha stream, so pairs do not depend on which other sizes are in the grid.
pub fn image_pair(side: usize, pair: usize, seed: u64) -> Result<(Distribution, Distribution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((side as u64) << 32) | pair as u64);
    let a = gen_synthetic_image_with(side, &mut rng, seed)?;
    let b = gen_synthetic_image_with(side, &mut rng, seed)?;
    Ok((a.to_distribution()?, b.to_distribution()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub solver: Method,
    pub n: usize,
    pub accuracy: f64,
    pub pair: usize,
    pub seed: u64,
    pub cost_units: u64,
    pub wall_ms: f64,
    pub ot_value: f64,
    /// L1 marginal distance of the unrounded iterate.
    pub d_final: f64,
    pub stop_reason: &'static str,
    pub flagged: bool,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.solver.name(),
            self.n,
            format_float(self.accuracy),
            self.pair,
            self.seed,
            self.cost_units,
            format_float(self.wall_ms),
            format_float(self.ot_value),
            format_float(self.d_final),
            self.stop_reason,
        )
    }

    fn sort_key(&self, plan: &BenchPlan) -> (usize, usize, usize, usize) {
        let solver = plan
            .solvers
            .iter()
            .position(|m| *m == self.solver)
            .unwrap_or(usize::MAX);
        let acc = plan
            .accuracies
            .iter()
            .position(|a| *a == self.accuracy)
            .unwrap_or(usize::MAX);
        (solver, self.n, acc, self.pair)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub rows: Vec<BenchRow>,
    pub results_path: PathBuf,
    pub aggregate_path: PathBuf,
    pub plot_path: PathBuf,
}

impl BenchOutput {
    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.flagged).count()
    }
}

struct Job {
    solver: Method,
    side: usize,
    accuracy: f64,
    pair: usize,
}

fn plan_stem(row: &BenchRow) -> String {
    format!(
        "{}_n{}_acc{:e}_pair{}",
        row.solver.name(),
        row.n,
        row.accuracy,
        row.pair
    )
}

fn matrix_text(width: usize, values: &[f64]) -> String {
    let mut s = String::new();
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn run_job(
    plan: &BenchPlan,
    job: &Job,
    cost: &CostMatrix,
    marginals: &(Distribution, Distribution),
    plans_dir: Option<&Path>,
) -> Result<BenchRow> {
    let (alpha, beta) = marginals;
    let config = ApproxConfig {
        method: job.solver,
        profile: plan.profile,
        stop: StopTarget::MarginalDistance(job.accuracy),
        seed: run_seed(plan.seed, job.pair),
        ..ApproxConfig::new(job.accuracy)
    };
    let start = Instant::now();
    let result = approx_ot(cost, alpha, beta, &config)?;
    let elapsed = start.elapsed();
    let row = BenchRow {
        solver: job.solver,
        n: cost.n(),
        accuracy: job.accuracy,
        pair: job.pair,
        seed: config.seed,
        cost_units: result.cost_units,
        wall_ms: if plan.record_timing {
            elapsed.as_secs_f64() * 1e3
        } else {
            0.0
        },
        ot_value: result.ot_value,
        d_final: result.unrounded_distance,
        stop_reason: result.stop_reason.name(),
        flagged: result.flagged(),
    };
    if let Some(dir) = plans_dir {
        let n = cost.n();
        let stem = plan_stem(&row);
        write_file(
            &dir.join(format!("{stem}.unrounded.csv")),
            &matrix_text(n, result.unrounded.entries()),
        )?;
        write_file(
            &dir.join(format!("{stem}.rounded.csv")),
            &matrix_text(n, result.plan.entries()),
        )?;
        let mut both = alpha.weights().to_vec();
        both.extend_from_slice(beta.weights());
        write_file(
            &dir.join(format!("{stem}.marginals.csv")),
            &matrix_text(n, &both),
        )?;
    }
    Ok(row)
}

/// Mean and sample standard deviation (`n - 1` denominator; zero for a
/// single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rows grouped by (solver, n, accuracy) in the plan's order.
fn cells<'a>(
    plan: &BenchPlan,
    rows: &'a [BenchRow],
) -> BTreeMap<(usize, usize, usize), Vec<&'a BenchRow>> {
    let mut map: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for r in rows {
        let (s, n, a, _) = r.sort_key(plan);
        map.entry((s, n, a)).or_default().push(r);
    }
    map
}

pub fn aggregate_csv(plan: &BenchPlan, rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "solver,n,accuracy,runs,flagged,cost_units_mean,cost_units_std,ot_value_mean,ot_value_std,d_final_mean\n",
    );
    for group in cells(plan, rows).values() {
        let units: Vec<f64> = group.iter().map(|r| r.cost_units as f64).collect();
        let values: Vec<f64> = group.iter().map(|r| r.ot_value).collect();
        let dists: Vec<f64> = group.iter().map(|r| r.d_final).collect();
        let (um, us) = mean_std(&units);
        let (vm, vs) = mean_std(&values);
        let (dm, _) = mean_std(&dists);
        let first = group[0];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            first.solver.name(),
            first.n,
            format_float(first.accuracy),
            group.len(),
            group.iter().filter(|r| r.flagged).count(),
            format_float(um),
            format_float(us),
            format_float(vm),
            format_float(vs),
            format_float(dm),
        );
    }
    out
}

/// Whitespace-separated blocks, two blank lines apart, one per series:
/// cost units against accuracy for each (solver, n), then against n for
/// each (solver, accuracy). Columns: x, mean, sample std.
pub fn plot_data(plan: &BenchPlan, rows: &[BenchRow]) -> String {
    let stats: Vec<(Method, usize, f64, f64, f64)> = cells(plan, rows)
        .values()
        .map(|g| {
            let units: Vec<f64> = g.iter().map(|r| r.cost_units as f64).collect();
            let (m, s) = mean_std(&units);
            (g[0].solver, g[0].n, g[0].accuracy, m, s)
        })
        .collect();
    let mut out = String::new();
    let mut block = |title: String, points: Vec<(f64, f64, f64)>| {
        if points.is_empty() {
            return;
        }
        let _ = writeln!(out, "# {title}");
        for (x, m, s) in points {
            let _ = writeln!(
                out,
                "{} {} {}",
                format_float(x),
                format_float(m),
                format_float(s)
            );
        }
        out.push_str("\n\n");
    };
    let mut sizes: Vec<usize> = plan.sides.iter().map(|s| s * s).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for solver in &plan.solvers {
        for &n in &sizes {
            let pts = stats
                .iter()
                .filter(|t| t.0 == *solver && t.1 == n)
                .map(|t| (t.2, t.3, t.4))
                .collect();
            block(
                format!("solver={} n={n} x=accuracy y=cost_units", solver.name()),
                pts,
            );
        }
    }
    for solver in &plan.solvers {
        for &acc in &plan.accuracies {
            let pts = stats
                .iter()
                .filter(|t| t.0 == *solver && t.2 == acc)
                .map(|t| (t.1 as f64, t.3, t.4))
                .collect();
            block(
                format!(
                    "solver={} accuracy={} x=n y=cost_units",
                    solver.name(),
                    format_float(acc)
                ),
                pts,
            );
        }
    }
    out
}

pub fn results_csv(rows: &[BenchRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Runs the grid and writes `results.csv`, `aggregate.csv` and
/// `plot_data.dat` (plus `plans/` when requested) under `out_dir`.
pub fn run_benchmark(plan: &BenchPlan, out_dir: impl AsRef<Path>) -> Result<BenchOutput> {
    plan.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let plans_dir = out_dir.join(PLANS_DIR);
    if plan.dump_plans {
        fs::create_dir_all(&plans_dir).map_err(io_err(&plans_dir))?;
    }

    let mut sides = plan.sides.clone();
    sides.sort_unstable();
    sides.dedup();
    let mut costs = BTreeMap::new();
    let mut pairs = BTreeMap::new();
    for &side in &sides {
        costs.insert(side, plan.cost_model.cost_matrix(side, side)?);
        for pair in 0..plan.pairs {
            pairs.insert((side, pair), image_pair(side, pair, plan.seed)?);
        }
    }

    let mut jobs = Vec::new();
    for &solver in &plan.solvers {
        for &side in &sides {
            for &accuracy in &plan.accuracies {
                for pair in 0..plan.pairs {
                    jobs.push(Job {
                        solver,
                        side,
                        accuracy,
                        pair,
                    });
                }
            }
        }
    }

    let dump = plan.dump_plans.then_some(plans_dir.as_path());
    let execute = || {
        jobs.par_iter()
            .map(|job| {
                run_job(
                    plan,
                    job,
                    &costs[&job.side],
                    &pairs[&(job.side, job.pair)],
                    dump,
                )
            })
            .collect::<Result<Vec<_>>>()
    };
    let mut rows = match plan.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?
            .install(execute)?,
        None => execute()?,
    };
    rows.sort_by_key(|r| r.sort_key(plan));

    let results_path = out_dir.join(RESULTS_FILE);
    let aggregate_path = out_dir.join(AGGREGATE_FILE);
    let plot_path = out_dir.join(PLOT_FILE);
    write_file(&results_path, &results_csv(&rows))?;
    write_file(&aggregate_path, &aggregate_csv(plan, &rows))?;
    write_file(&plot_path, &plot_data(plan, &rows))?;
    Ok(BenchOutput {
        rows,
        results_path,
        aggregate_path,
        plot_path,
    })
}
