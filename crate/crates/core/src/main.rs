//! Command-line front end: estimate from CSV data, run Monte-Carlo sweeps,
//! grid-search the oracle shrinkage parameter, and run the built-in
//! self-tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use shrinkm::elliptical::{ar1_scatter, EllipticalModel, Family};
use shrinkm::error::{Error, Result};
use shrinkm::mestimator::DataSample;
use shrinkm::shrinkage::{estimate, EstimateOptions, Method};
use shrinkm::simharness::{
    oracle_beta_grid, read_matrix_csv, run_experiment, selftest, ExperimentConfig,
};
use shrinkm::weights::WeightSpec;

#[derive(Parser)]
#[command(
    name = "shrinkm",
    version,
    about = "Shrinkage M-estimation of scatter matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a regularized scatter matrix from a CSV data matrix
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo sweep and write a results CSV plus a run manifest
    Simulate(SimulateArgs),
    /// Grid-search the oracle shrinkage parameter for a configured model
    Oracle(OracleArgs),
    /// Run the moment-identity and oracle-equivalence checks
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV file, one observation per row, no header unless --skip-header
    #[arg(long)]
    input: PathBuf,
    /// Estimator: gauss, lw, huber, or t-mle
    #[arg(long, default_value = "huber")]
    method: String,
    /// Huber threshold quantile
    #[arg(long, default_value_t = 0.7)]
    huber_q: f64,
    /// Skip the first non-blank line of the input
    #[arg(long)]
    skip_header: bool,
    /// Also write the estimated matrix as CSV
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON experiment config; flags below override individual fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    /// Sampling family: mvn or t (t requires --nu)
    #[arg(long)]
    family: Option<String>,
    /// Degrees of freedom of the t family
    #[arg(long)]
    nu: Option<f64>,
    /// Comma-separated sample sizes, e.g. 60,120,180,240
    #[arg(long)]
    n_grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated estimator tags, e.g. gauss,lw,huber,t-mle
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    huber_q: Option<f64>,
    /// Root seed; identical config and seed reproduce the CSV bit for bit
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; the manifest lands next to it
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 0.6)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Sampling family: mvn or t (t requires --nu)
    #[arg(long, default_value = "mvn")]
    family: String,
    #[arg(long)]
    nu: Option<f64>,
    /// Weight function: gaussian, huber, or t
    #[arg(long, default_value = "gaussian")]
    weight: String,
    /// Degrees of freedom of the t weight
    #[arg(long)]
    weight_dof: Option<f64>,
    #[arg(long, default_value_t = 0.7)]
    huber_q: f64,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 20000)]
    trials: usize,
    #[arg(long, default_value_t = 0.02)]
    grid_step: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Optional CSV of the full MSE curve
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 20000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Selftest(args) => cmd_selftest(args),
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<ExitCode> {
    let method = Method::from_str(&args.method)?;
    let matrix = read_matrix_csv(&args.input, args.skip_header)?;
    let data = DataSample::new(matrix)?;
    let options = EstimateOptions {
        huber_q: args.huber_q,
        ..EstimateOptions::default()
    };
    let result = estimate(&data, method, &options)?;

    println!("method: {}", result.method);
    println!("n: {}", data.n());
    println!("p: {}", data.p());
    println!("beta: {}", result.beta);
    println!("gamma_hat: {}", result.diagnostics.gamma_hat);
    if let Some(v) = result.diagnostics.psi1_hat {
        println!("psi1_hat: {v}");
    }
    if let Some(v) = result.diagnostics.kappa_hat {
        println!("kappa_hat: {v}");
    }
    if let Some(v) = result.diagnostics.nu_hat {
        println!("nu_hat: {v}");
    }
    if let Some(r) = result.diagnostics.solve_report {
        println!("iterations: {}", r.iterations);
        println!("final_relative_change: {}", r.final_relative_change);
        println!("converged: {}", r.converged);
    }
    if let Some(path) = args.matrix_out {
        write_matrix_csv(&path, result.matrix.matrix())?;
        println!("matrix written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(p) = args.p {
        config.p = p;
    }
    if let Some(rho) = args.rho {
        config.rho = rho;
    }
    if let Some(eta) = args.eta {
        config.eta = eta;
    }
    if let Some(family) = &args.family {
        config.family = parse_family(family, args.nu)?;
    } else if let Some(nu) = args.nu {
        config.family = Family::T { dof: nu };
    }
    if let Some(grid) = &args.n_grid {
        config.n_grid = parse_usize_list(grid)?;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(tags) = &args.estimators {
        config.estimators = tags
            .split(',')
            .map(Method::from_str)
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(q) = args.huber_q {
        config.huber_q = q;
    }
    if let Some(seed) = args.seed {
        config.root_seed = seed;
    }

    let result = run_experiment(&config)?;
    fs::write(&args.out, result.csv())?;
    let manifest_path = args.out.with_extension("manifest.json");
    fs::write(&manifest_path, result.manifest_json()?)?;
    println!("results written to {}", args.out.display());
    println!("manifest written to {}", manifest_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: OracleArgs) -> Result<ExitCode> {
    let family = parse_family(&args.family, args.nu)?;
    let model = EllipticalModel::new(family, ar1_scatter(args.p, args.rho, args.eta)?)?;
    let weight = match args.weight.trim().to_ascii_lowercase().as_str() {
        "gaussian" | "gauss" => WeightSpec::gaussian(args.p),
        "huber" => WeightSpec::huber(args.p, args.huber_q)?,
        "t" | "t-mle" | "tmle" => {
            let dof = args.weight_dof.ok_or_else(|| {
                Error::InvalidConfig("--weight t requires --weight-dof".to_string())
            })?;
            WeightSpec::t_mle(args.p, dof)?
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown weight `{other}` (expected gaussian, huber, or t)"
            )))
        }
    };
    if !(args.grid_step > 0.0 && args.grid_step <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "grid step must lie in (0, 1], got {}",
            args.grid_step
        )));
    }
    let steps = (1.0 / args.grid_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| (i as f64 * args.grid_step).min(1.0)).collect();
    let curve = oracle_beta_grid(&model, &weight, args.n, args.trials, &grid, args.seed)?;

    println!("beta_star: {}", curve.beta_star);
    if let Some(path) = args.out {
        let mut text = String::from("beta,mse_mean,mse_se\n");
        for i in 0..curve.grid.len() {
            text.push_str(&format!(
                "{},{},{}\n",
                curve.grid[i], curve.mse_mean[i], curve.mse_se[i]
            ));
        }
        fs::write(&path, text)?;
        println!("curve written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest(args: SelftestArgs) -> Result<ExitCode> {
    let outcomes = selftest(args.trials, args.seed)?;
    let mut all_pass = true;
    for o in &outcomes {
        println!(
            "{} {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        all_pass &= o.pass;
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn parse_family(name: &str, nu: Option<f64>) -> Result<Family> {
    match name.trim().to_ascii_lowercase().as_str() {
        "mvn" | "normal" | "gaussian" => Ok(Family::Mvn),
        "t" | "tdist" | "student-t" => {
            let dof =
                nu.ok_or_else(|| Error::InvalidConfig("--family t requires --nu".to_string()))?;
            Ok(Family::T { dof })
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown family `{other}` (expected mvn or t)"
        ))),
    }
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("could not parse `{tok}` as an integer")))
        })
        .collect()
}

fn write_matrix_csv(path: &Path, matrix: &ndarray::Array2<f64>) -> Result<()> {
    let mut text = String::new();
    for row in matrix.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
