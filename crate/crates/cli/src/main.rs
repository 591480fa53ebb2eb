use clap::Parser;
use hth_cli::{run_fit, ContourRequest, RunConfig};
use hth_core::em::FitConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Fit mixtures of hidden truncation hyperbolic distributions to CSV data.
#[derive(Debug, Parser)]
#[command(name = "hth", version)]
struct Args {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated columns to model (default: all but the label column).
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    /// Column holding known classes; enables ARI reporting.
    #[arg(long)]
    label_column: Option<String>,
    /// Numbers of components to try.
    #[arg(long = "G", value_delimiter = ',', default_value = "1")]
    g: Vec<usize>,
    /// Skewness dimensions to try.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    q: Vec<usize>,
    /// k-means starts per fit.
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fit on the raw columns instead of standardized ones.
    #[arg(long)]
    no_scale: bool,
    /// Relative log-likelihood change that ends the iterations.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Output directory.
    #[arg(long, default_value = "hth_out")]
    out: PathBuf,
    /// Write density grids for each fitted component (two columns only).
    /// Optional value: `x1min,x1max,x2min,x2max[,resolution]`.
    #[arg(long, num_args = 0..=1, default_missing_value = "auto", allow_hyphen_values = true)]
    contour: Option<String>,
    /// Test upper-level sets of each contour grid for convexity at this many levels.
    #[arg(long, num_args = 0..=1, default_missing_value = "10")]
    check_convexity: Option<usize>,
}

fn parse_contour(arg: &str) -> Result<ContourRequest, String> {
    if arg == "auto" {
        return Ok(ContourRequest { bounds: None, resolution: 100 });
    }
    let v: Vec<f64> = arg.split(',').map(|s| s.trim().parse::<f64>().map_err(|e| format!("--contour: {e}"))).collect::<Result<_, _>>()?;
    match v.as_slice() {
        [a, b, c, d] => Ok(ContourRequest { bounds: Some([[*a, *b], [*c, *d]]), resolution: 100 }),
        [a, b, c, d, r] if r.fract() == 0.0 && *r > 0.0 => Ok(ContourRequest { bounds: Some([[*a, *b], [*c, *d]]), resolution: *r as usize }),
        _ => Err(format!("--contour expects x1min,x1max,x2min,x2max[,resolution], got `{arg}`")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let contour = match args.contour.as_deref().map(parse_contour).transpose() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let contour = match (contour, args.check_convexity) {
        (None, Some(_)) => Some(ContourRequest { bounds: None, resolution: 100 }),
        (c, _) => c,
    };
    let config = RunConfig {
        input: args.input,
        columns: args.columns,
        label_column: args.label_column,
        scale: !args.no_scale,
        g_values: args.g,
        q_values: args.q,
        fit: FitConfig { max_iter: args.max_iter, loglik_rel_tol: args.tol, n_starts: args.starts, seed: args.seed, ..FitConfig::default() },
        out: args.out,
        contour,
        check_convexity: args.check_convexity,
    };
    match run_fit(&config) {
        Ok(summary) => {
            print!("{}", summary.table());
            if summary.failures() > 0 {
                eprintln!("{} of {} fits failed", summary.failures(), summary.rows.len());
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
