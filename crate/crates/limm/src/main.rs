//! Command-line driver for the linearly implicit multistep toolkit.
//!
//! Subcommands: `verify`, `stability`, `angle`, `matstab`, `converge`,
//! `solve`, `wpd`. Global flags: `--config <json>`, `--out <path>`,
//! `--seed <u64>`, `--threads <n>`. Every CSV artifact carries a header row
//! and prints floats with 17 significant digits.

use clap::{Parser, Subcommand};
use limm::coeffs::{error_constant, fixed_coefficients, Family, StepsizeFractions, K_MAX};
use limm::driver::{
    cached_reference, convergence_slopes, convergence_study, product_norm_sequence,
    verify_methods, work_precision_sweep, TraceStep,
};
use limm::exec::{configure_threads, ExecMode};
use limm::integrate::{integrate_adaptive, RunConfig, TraceRecord};
use limm::linalg::LinearSolveConfig;
use limm::stability::{boundary_locus, stability_angle_degrees, BOUNDARY_SAMPLES};
use serde_json::Value;
use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "limm",
    version,
    about = "Stiff-ODE integration with linearly implicit multistep methods"
)]
struct Cli {
    /// JSON run/sweep configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path for the command's CSV artifact (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Thread-pool size for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the order conditions of tabulated and variable-stepsize
    /// coefficients; exit 1 when any residual exceeds 1e-8.
    Verify {
        /// Restrict to one family (limm, limmw, bdf).
        family: Option<String>,
        /// Restrict to one step number (1-5).
        k: Option<usize>,
        /// Random admissible stepsize-fraction draws per method.
        #[arg(long, default_value_t = 100)]
        random: usize,
    },
    /// Emit the stability-region boundary locus of a method as CSV.
    Stability {
        /// Method family (limm, limmw, bdf).
        family: String,
        /// Step number (1-5).
        k: usize,
        /// Boundary sample count.
        #[arg(long, default_value_t = BOUNDARY_SAMPLES)]
        samples: usize,
    },
    /// Print the A(phi) stability angle and error constant of methods.
    Angle {
        /// Restrict to one family (limm, limmw, bdf).
        family: Option<String>,
        /// Restrict to one step number (1-5).
        k: Option<usize>,
    },
    /// Multiply per-step stability matrices along a recorded run for a
    /// scalar Jacobian J = lambda and report the running product norm.
    Matstab {
        /// Trace CSV produced by `solve` with "trace": true.
        #[arg(long)]
        trace: PathBuf,
        /// Scalar Jacobian value (typically <= 0).
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        /// Method family the trace was recorded with.
        #[arg(long, default_value = "limm")]
        family: String,
    },
    /// Fixed-stepsize convergence study: endpoint errors over a stepsize
    /// ladder plus least-squares order slopes.
    Converge {
        /// Problem name (overrides the config file).
        #[arg(long)]
        problem: Option<String>,
        /// Method family (overrides the config file).
        #[arg(long)]
        family: Option<String>,
        /// Comma-separated method orders, e.g. 1,2,3,4,5.
        #[arg(long)]
        orders: Option<String>,
        /// Stepsize ladder as negative powers of two, e.g. 5:11 for
        /// h = 2^-5 .. 2^-11.
        #[arg(long, value_name = "LO:HI")]
        h_pow2: Option<String>,
    },
    /// Run one adaptive integration described by --config and write its
    /// trace CSV.
    Solve,
    /// Work-precision sweep: integrate across families and tolerances and
    /// record errors against a cached reference solution.
    Wpd {
        /// Problem name (overrides the config file).
        #[arg(long)]
        problem: Option<String>,
        /// Comma-separated families, e.g. limm,limmw,bdf.
        #[arg(long)]
        families: Option<String>,
        /// Comma-separated tolerances, e.g. 1e-2,1e-3,1e-4.
        #[arg(long)]
        tols: Option<String>,
        /// Reference-solution cache directory.
        #[arg(long, default_value = ".limm-refcache")]
        cache_dir: PathBuf,
        /// Run sweep cells sequentially instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
}

/// Format one float with 17 significant digits.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `content` to `out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, content: &str) -> Result<(), Box<dyn Error>> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn parse_family(text: &str) -> Result<Family, Box<dyn Error>> {
    Family::from_str(text).map_err(|e| format!("bad family {text:?}: {e}").into())
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, Box<dyn Error>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|e| format!("bad {what} entry {item:?}: {e}").into())
        })
        .collect()
}

/// Optional fields of the config file used by sweep-style commands.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(default)]
struct BaseConfig {
    problem: Option<String>,
    params: Option<Value>,
    family: Option<Family>,
    rtol: Option<f64>,
    atol: Option<f64>,
    h0: Option<f64>,
    h_min: Option<f64>,
    h_max: Option<f64>,
    k_max: Option<usize>,
    linear: Option<LinearSolveConfig>,
    jacobian_reuse: Option<usize>,
    families: Option<Vec<Family>>,
    tolerances: Option<Vec<f64>>,
    orders: Option<Vec<usize>>,
    h_list: Option<Vec<f64>>,
}

impl BaseConfig {
    fn load(path: Option<&Path>) -> Result<Self, Box<dyn Error>> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                Ok(serde_json::from_str(&text)
                    .map_err(|e| format!("bad config {}: {e}", p.display()))?)
            }
            None => Ok(BaseConfig::default()),
        }
    }

    /// A run description with defaults filled in for sweep commands.
    fn run_config(&self, problem_override: Option<&str>) -> RunConfig {
        RunConfig {
            problem: problem_override
                .map(str::to_string)
                .or_else(|| self.problem.clone())
                .unwrap_or_else(|| "lorenz96".to_string()),
            params: self.params.clone().unwrap_or_else(|| Value::Object(Default::default())),
            family: self.family.unwrap_or(Family::Limm),
            rtol: self.rtol.unwrap_or(1e-6),
            atol: self.atol.unwrap_or(1e-8),
            h0: self.h0,
            h_min: self.h_min,
            h_max: self.h_max,
            k_max: self.k_max,
            linear: self.linear.unwrap_or_default(),
            jacobian_reuse: self.jacobian_reuse,
            trace: false,
        }
    }
}

fn cmd_verify(
    cli: &Cli,
    family: Option<&str>,
    k: Option<usize>,
    random: usize,
) -> Result<ExitCode, Box<dyn Error>> {
    let family = family.map(parse_family).transpose()?;
    let report = verify_methods(family, k, random, cli.seed)?;
    let mut csv = String::from("family,k,ell,rho_a,rho_b\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.family,
            row.k,
            row.ell,
            fmt(row.rho_a),
            fmt(row.rho_b)
        ));
    }
    emit(cli.out.as_deref(), &csv)?;
    if report.max_residual <= 1e-8 {
        eprintln!(
            "verify: OK, max residual {:.3e} over tabulated and {random} random stepsize draws per method",
            report.max_residual
        );
        Ok(ExitCode::SUCCESS)
    } else {
        let worst = report.worst.expect("failing report has a worst case");
        eprintln!(
            "verify: FAIL {},k={},ell={},c={:?}: residual {:.6e} > 1e-8",
            worst.family, worst.k, worst.ell, worst.fractions, worst.residual
        );
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_stability(cli: &Cli, family: &str, k: usize, samples: usize) -> Result<ExitCode, Box<dyn Error>> {
    let family = parse_family(family)?;
    let m = fixed_coefficients(family, k)?;
    let pts = boundary_locus(&m, samples);
    let mut csv = String::from("theta,re_z,im_z\n");
    for p in pts {
        csv.push_str(&format!("{},{},{}\n", fmt(p.theta), fmt(p.re_z), fmt(p.im_z)));
    }
    emit(cli.out.as_deref(), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_angle(cli: &Cli, family: Option<&str>, k: Option<usize>) -> Result<ExitCode, Box<dyn Error>> {
    let families = match family {
        Some(text) => vec![parse_family(text)?],
        None => vec![Family::Limm, Family::LimmW, Family::Bdf],
    };
    let ks: Vec<usize> = match k {
        Some(k) => vec![k],
        None => (1..=K_MAX).collect(),
    };
    let mut csv = String::from("family,k,phi_degrees,error_constant\n");
    for &family in &families {
        for &k in &ks {
            let m = fixed_coefficients(family, k)?;
            let phi = stability_angle_degrees(&m);
            let c = error_constant(&m, &StepsizeFractions::uniform(k));
            csv.push_str(&format!("{family},{k},{},{}\n", fmt(phi), fmt(c)));
        }
    }
    emit(cli.out.as_deref(), &csv)?;
    if cli.out.is_some() {
        print!("{csv}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Read the accepted steps out of a solve trace CSV (header
/// `t,h,k,err_norm,accepted`, numeric fields only).
fn read_trace_steps(path: &Path) -> Result<Vec<TraceStep>, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut steps = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(format!(
                "trace row {} has {} columns, need at least 5",
                idx + 1,
                fields.len()
            )
            .into());
        }
        if fields[4].trim() != "true" {
            continue;
        }
        steps.push(TraceStep {
            t: fields[0].trim().parse()?,
            h: fields[1].trim().parse()?,
            k: fields[2].trim().parse()?,
        });
    }
    Ok(steps)
}

fn cmd_matstab(cli: &Cli, trace: &Path, lambda: f64, family: &str) -> Result<ExitCode, Box<dyn Error>> {
    let family = parse_family(family)?;
    let steps = read_trace_steps(trace)?;
    if steps.is_empty() {
        return Err("trace contains no accepted steps".into());
    }
    let norms = product_norm_sequence(&steps, family, lambda)?;
    let mut csv = String::from("step,norm\n");
    for (j, n) in norms.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", j + 1, fmt(*n)));
    }
    emit(cli.out.as_deref(), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_converge(
    cli: &Cli,
    problem: Option<&str>,
    family: Option<&str>,
    orders: Option<&str>,
    h_pow2: Option<&str>,
) -> Result<ExitCode, Box<dyn Error>> {
    let base = BaseConfig::load(cli.config.as_deref())?;
    let run = base.run_config(problem);
    let family = match family {
        Some(text) => parse_family(text)?,
        None => run.family,
    };
    let orders: Vec<usize> = match orders {
        Some(text) => parse_list(text, "order")?,
        None => base.orders.clone().unwrap_or_else(|| (1..=K_MAX).collect()),
    };
    let hs: Vec<f64> = match h_pow2 {
        Some(text) => {
            let (lo, hi) = text
                .split_once(':')
                .ok_or_else(|| format!("bad --h-pow2 {text:?}, expected LO:HI"))?;
            let lo: i32 = lo.trim().parse()?;
            let hi: i32 = hi.trim().parse()?;
            (lo.min(hi)..=lo.max(hi)).map(|j| 2f64.powi(-j)).collect()
        }
        None => base
            .h_list
            .clone()
            .unwrap_or_else(|| (5..=11).map(|j| 2f64.powi(-j)).collect()),
    };
    let problem = limm::problems::by_name(&run.problem, &run.params)?;
    eprintln!(
        "converge: {} with {family}, orders {orders:?}, {} stepsizes",
        problem.name,
        hs.len()
    );
    let reference = cached_reference(
        Path::new(".limm-refcache"),
        &problem,
        &run.params,
        run.linear,
    )?;
    eprintln!(
        "converge: reference cross-check distance {:.3e}",
        reference.cross_check_error
    );
    let rows = convergence_study(&problem, family, &orders, &hs, &reference.y, ExecMode::default());
    let mut csv = String::from("h,order,error\n");
    for row in &rows {
        csv.push_str(&format!("{},{},{}\n", fmt(row.h), row.k, fmt(row.error)));
    }
    emit(cli.out.as_deref(), &csv)?;
    let slopes = convergence_slopes(&rows, &orders);
    let mut slope_text = String::from("order,slope\n");
    for (k, slope) in slopes {
        slope_text.push_str(&format!("{k},{}\n", fmt(slope)));
    }
    if cli.out.is_some() {
        print!("{slope_text}");
    } else {
        eprint!("{slope_text}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Render a trace as CSV: header `t,h,k,err_norm,accepted`, with the state
/// appended on accepted rows.
fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut csv = String::from("t,h,k,err_norm,accepted\n");
    for row in trace {
        csv.push_str(&format!(
            "{},{},{},{},{}",
            fmt(row.t),
            fmt(row.h),
            row.k,
            fmt(row.err_norm),
            row.accepted
        ));
        if let Some(y) = &row.y {
            for v in y {
                csv.push(',');
                csv.push_str(&fmt(*v));
            }
        }
        csv.push('\n');
    }
    csv
}

fn cmd_solve(cli: &Cli) -> Result<ExitCode, Box<dyn Error>> {
    let path = cli
        .config
        .as_deref()
        .ok_or("solve needs --config with a run description")?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let run: RunConfig =
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))?;
    let (problem, opts) = run.build()?;
    let result = integrate_adaptive(&problem, run.family, &opts)?;
    eprintln!(
        "solve: {} with {} reached t = {} | accepted {} rejected {} f_evals {} jac_evals {} linear_solves {} factorizations {}",
        problem.name,
        run.family,
        result.t_end,
        result.stats.n_accepted,
        result.stats.n_rejected,
        result.stats.n_f_evals,
        result.stats.n_jac_evals,
        result.stats.n_linear_solves,
        result.stats.n_factorizations
    );
    if opts.trace {
        emit(cli.out.as_deref(), &trace_csv(&result.trace))?;
    } else {
        let mut csv = String::from("t,h,k,err_norm,accepted\n");
        csv.push_str(&format!(
            "{},{},{},{},{}",
            fmt(result.t_end),
            fmt(f64::NAN),
            0,
            fmt(f64::NAN),
            true
        ));
        for v in &result.y {
            csv.push(',');
            csv.push_str(&fmt(*v));
        }
        csv.push('\n');
        emit(cli.out.as_deref(), &csv)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_wpd(
    cli: &Cli,
    problem: Option<&str>,
    families: Option<&str>,
    tols: Option<&str>,
    cache_dir: &Path,
    sequential: bool,
) -> Result<ExitCode, Box<dyn Error>> {
    let base = BaseConfig::load(cli.config.as_deref())?;
    let run = base.run_config(problem);
    let families: Vec<Family> = match families {
        Some(text) => text
            .split(',')
            .map(|f| parse_family(f.trim()))
            .collect::<Result<_, _>>()?,
        None => base
            .families
            .clone()
            .unwrap_or_else(|| vec![Family::Limm, Family::LimmW, Family::Bdf]),
    };
    let tolerances: Vec<f64> = match tols {
        Some(text) => parse_list(text, "tolerance")?,
        None => base
            .tolerances
            .clone()
            .unwrap_or_else(|| (2..=6).map(|e| 10f64.powi(-e)).collect()),
    };
    let problem = limm::problems::by_name(&run.problem, &run.params)?;
    eprintln!(
        "wpd: {} across {} families x {} tolerances",
        problem.name,
        families.len(),
        tolerances.len()
    );
    let reference = cached_reference(cache_dir, &problem, &run.params, run.linear)?;
    eprintln!(
        "wpd: reference cross-check distance {:.3e}",
        reference.cross_check_error
    );
    let mode = if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    };
    let records = work_precision_sweep(&run, &families, &tolerances, &reference.y, mode);
    let mut csv = String::from(
        "method,tolerance,final_error,n_accepted,n_rejected,n_f_evals,n_jac_evals,n_linear_solves,wall_seconds\n",
    );
    for r in &records {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method,
            fmt(r.tolerance),
            fmt(r.final_error),
            r.n_accepted,
            r.n_rejected,
            r.n_f_evals,
            r.n_jac_evals,
            r.n_linear_solves,
            fmt(r.wall_seconds)
        ));
    }
    emit(cli.out.as_deref(), &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode, Box<dyn Error>> {
    if let Some(n) = cli.threads {
        configure_threads(n);
    }
    match &cli.command {
        Command::Verify { family, k, random } => {
            cmd_verify(cli, family.as_deref(), *k, *random)
        }
        Command::Stability { family, k, samples } => cmd_stability(cli, family, *k, *samples),
        Command::Angle { family, k } => cmd_angle(cli, family.as_deref(), *k),
        Command::Matstab {
            trace,
            lambda,
            family,
        } => cmd_matstab(cli, trace, *lambda, family),
        Command::Converge {
            problem,
            family,
            orders,
            h_pow2,
        } => cmd_converge(
            cli,
            problem.as_deref(),
            family.as_deref(),
            orders.as_deref(),
            h_pow2.as_deref(),
        ),
        Command::Solve => cmd_solve(cli),
        Command::Wpd {
            problem,
            families,
            tols,
            cache_dir,
            sequential,
        } => cmd_wpd(
            cli,
            problem.as_deref(),
            families.as_deref(),
            tols.as_deref(),
            cache_dir,
            *sequential,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
