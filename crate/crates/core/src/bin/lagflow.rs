use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lagflow::analysis::{graph_export, write_fields};
use lagflow::conditions::{verify_all, ConditionsReport, ConeRegion};
use lagflow::config::{parse_angle, Angle, FlowConfig, SolveDocument};
use lagflow::operator::Negated;
use lagflow::solver::{FlowReport, FlowSetup};
use lagflow::{OperatorTau, SpectralOperator};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "lagflow",
    version,
    about = "Special Lagrangian operators and the second boundary value flow"
)]
struct Cli {
    /// Worker thread cap.
    #[arg(long, global = true, env = "LAGFLOW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural conditions of F_τ on sampled spectra.
    VerifyConditions(VerifyArgs),
    /// Run the flow for one configuration.
    Solve(SolveArgs),
    /// Run the flow for several angles on the same domain pair.
    SweepTau(SweepArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Angle in [0, π/2]; accepts numbers and forms such as `pi/4`.
    #[arg(long = "tau", required = true, value_parser = angle_arg)]
    taus: Vec<f64>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    mu1: f64,
    #[arg(long, default_value_t = 2.0)]
    mu2: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    directions: usize,
    /// Upper end of the sampled eigenvalue range.
    #[arg(long, default_value_t = 100.0)]
    lambda_cap: f64,
    /// Check −F_τ instead, which must fail.
    #[arg(long)]
    negate: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma separated angles.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    taus: Option<String>,
    /// Number of equally spaced angles in [0, π/2]; must be odd.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn domain(message: impl ToString) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: message.to_string(),
        }
    }
}

fn angle_arg(text: &str) -> Result<f64, String> {
    parse_angle(text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("lagflow: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(Failure::usage)?;
    }
    match cli.command {
        Command::VerifyConditions(args) => verify_conditions(args),
        Command::Solve(args) => solve(args),
        Command::SweepTau(args) => sweep_tau(args),
    }
}

#[derive(Serialize)]
struct VerifyDocument {
    version: &'static str,
    passed: bool,
    reports: Vec<ConditionsReport>,
}

fn verify_conditions(args: VerifyArgs) -> Result<u8, Failure> {
    let region = ConeRegion::new(args.mu1, args.mu2, args.n, args.lambda_cap).map_err(Failure::usage)?;
    let mut reports = Vec::with_capacity(args.taus.len());
    for &tau in &args.taus {
        let op = OperatorTau::new(tau).map_err(Failure::usage)?;
        let report = if args.negate {
            verify_all(&Negated(op), &region, args.samples, args.directions, args.seed)
        } else {
            verify_all(&op, &region, args.samples, args.directions, args.seed)
        };
        eprintln!(
            "tau = {tau:.6} ({}): {}",
            report.operator.branch,
            if report.passed { "pass" } else { "FAIL" }
        );
        reports.push(report);
    }
    let doc = VerifyDocument {
        version: lagflow::VERSION,
        passed: reports.iter().all(|r| r.passed),
        reports,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(Failure::domain)?;
    match &args.out {
        Some(out) => write_text(&args.out_dir.join(out), &json)?,
        None => println!("{json}"),
    }
    Ok(if doc.passed { 0 } else { EXIT_FAILURE })
}

fn load_config(path: &Path) -> Result<FlowConfig, Failure> {
    FlowConfig::load(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn solve(args: SolveArgs) -> Result<u8, Failure> {
    let config = load_config(&args.config)?;
    let setup = FlowSetup::from_config(&config).map_err(Failure::usage)?;
    fs::create_dir_all(&args.out_dir).map_err(Failure::usage)?;
    let mut state = setup.init().map_err(Failure::domain)?;

    let every = config.output.every;
    let dump_fields = config.output.fields;
    let out_dir = args.out_dir.clone();
    let mut report = state
        .run(&setup.params, |s| {
            if dump_fields && every > 0 && s.steps() % every == 0 {
                write_fields(s, &out_dir.join(format!("fields_{:07}.csv", s.steps())))?;
            }
            Ok(())
        })
        .map_err(Failure::domain)?;
    if !config.record_wall_time {
        report.wall_time = None;
    }
    if dump_fields {
        write_fields(&state, &args.out_dir.join("fields_final.csv")).map_err(Failure::domain)?;
        graph_export(&state, &args.out_dir.join("graph.csv"), setup.params.image_samples).map_err(Failure::domain)?;
    }

    let doc = SolveDocument::new(&config, state.operator().descriptor(), report.clone());
    write_text(&args.out_dir.join(&args.out), &doc.to_json().map_err(Failure::domain)?)?;
    println!(
        "converged={} steps={} C_inf={} osc_ut={:e} residual_sup={:e} image_hausdorff={:e} jacobian_min={}",
        report.converged,
        report.steps,
        report.C_inf,
        report.osc_ut,
        report.residual_sup,
        report.image_hausdorff,
        report.jacobian_min
    );
    Ok(if report.converged && report.jacobian_min > 0.0 {
        0
    } else {
        EXIT_FAILURE
    })
}

/// `k` equally spaced angles in [0, π/2] with the endpoints and the middle
/// set exactly.
fn tau_grid(k: usize) -> Result<Vec<f64>, Failure> {
    if k < 3 || k.is_multiple_of(2) {
        return Err(Failure::usage(format!(
            "--grid needs an odd count of at least 3, got {k}"
        )));
    }
    let half = std::f64::consts::FRAC_PI_2;
    Ok((0..k)
        .map(|i| match i {
            0 => 0.0,
            i if i == k - 1 => half,
            i if 2 * i == k - 1 => std::f64::consts::FRAC_PI_4,
            i => half * i as f64 / (k - 1) as f64,
        })
        .collect())
}

fn tau_list(text: &str) -> Result<Vec<f64>, Failure> {
    let taus: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| parse_angle(t).map_err(Failure::usage))
        .collect::<Result<_, _>>()?;
    if taus.is_empty() {
        return Err(Failure::usage("--taus is empty"));
    }
    Ok(taus)
}

fn sweep_tau(args: SweepArgs) -> Result<u8, Failure> {
    let taus = match (&args.taus, args.grid) {
        (Some(list), _) => tau_list(list)?,
        (None, Some(k)) => tau_grid(k)?,
        (None, None) => return Err(Failure::usage("one of --taus or --grid is required")),
    };
    let base = load_config(&args.config)?;
    let mut configs = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let mut config = base.clone();
        config.tau = Angle::Radians(tau);
        config.validate().map_err(Failure::usage)?;
        let setup = FlowSetup::from_config(&config).map_err(Failure::usage)?;
        configs.push(setup);
    }

    let mut csv = String::from("tau,C_inf,osc_ut,residual_sup,image_hausdorff,steps,converged,error\n");
    let mut all_ok = true;
    for (tau, setup) in taus.iter().zip(&configs) {
        let outcome: lagflow::Result<FlowReport> = setup.init().and_then(|mut s| s.run(&setup.params, |_| Ok(())));
        match outcome {
            Ok(r) => {
                let ok = r.converged && r.jacobian_min > 0.0;
                all_ok &= ok;
                eprintln!(
                    "tau = {tau:.6}: steps {} C_inf {} converged {}",
                    r.steps, r.C_inf, r.converged
                );
                csv.push_str(&format!(
                    "{tau},{},{},{},{},{},{},\n",
                    r.C_inf, r.osc_ut, r.residual_sup, r.image_hausdorff, r.steps, r.converged
                ));
            }
            Err(e) => {
                all_ok = false;
                eprintln!("tau = {tau:.6}: {e}");
                let message = e.to_string().replace([',', '\n'], ";");
                csv.push_str(&format!("{tau},NaN,NaN,NaN,NaN,0,false,{message}\n"));
            }
        }
    }
    fs::create_dir_all(&args.out_dir).map_err(Failure::usage)?;
    write_text(&args.out_dir.join(&args.out), &csv)?;
    Ok(if all_ok { 0 } else { EXIT_FAILURE })
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    let mut file = fs::File::create(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .and_then(|_| {
            if text.ends_with('\n') {
                Ok(())
            } else {
                file.write_all(b"\n")
            }
        })
        .map_err(|e| Failure::domain(format!("{}: {e}", path.display())))
}
