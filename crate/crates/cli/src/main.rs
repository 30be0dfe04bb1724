use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decorrel::NoiseSpec;
use decorrel_cli::commands::{self, DensityFormat};
use decorrel_cli::config::{read_kv_file, resolve_seed, study_from_kv, SEED_ENV};
use decorrel_cli::dataset::ingest_csv;
use decorrel_cli::error::EXIT_USAGE;
use decorrel_cli::{AnalysisConfig, CliError, CliResult, Dataset};

#[derive(Parser)]
#[command(
    name = "decorrel",
    version,
    about = "Rank-correlation inference under additive measurement error"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed; overrides the config file and DECORREL_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bandwidth selection, estimate, bootstrap, interval and tests as one JSON report.
    Analyze(DataArgs),
    /// Point estimate only.
    Estimate(DataArgs),
    /// Relevant-hypothesis tests for every delta.
    Test(DataArgs),
    /// Bootstrap confidence interval.
    Ci(DataArgs),
    /// Successive-difference curve as `h,D` CSV.
    Bandwidth {
        #[command(flatten)]
        data: DataArgs,
        /// Also write the selection summary as JSON here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Density estimates at h and at h/2, h, 3h/2.
    Density {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "density")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Simulation study described by a key = value file.
    Simulate {
        study: PathBuf,
        /// Also write the table row as CSV here.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Spearman distortion caused by measurement error, as `rep,difference` CSV.
    Distortion {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        /// Latent correlation.
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 0.05)]
        v1: f64,
        #[arg(long, default_value_t = 0.05)]
        v2: f64,
        #[arg(long)]
        no_noise: bool,
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with the paired observations.
    input: PathBuf,
    /// key = value configuration file; flags override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// x column, by zero-based index or header name.
    #[arg(long)]
    x: Option<String>,
    /// y column, by zero-based index or header name.
    #[arg(long)]
    y: Option<String>,
    #[arg(long)]
    no_header: bool,
    /// laplace or none.
    #[arg(long)]
    noise: Option<String>,
    /// Error variance of x.
    #[arg(long)]
    v1: Option<f64>,
    /// Error variance of y.
    #[arg(long)]
    v2: Option<f64>,
    /// kendall or spearman.
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated thresholds.
    #[arg(long, allow_hyphen_values = true)]
    deltas: Option<String>,
    /// Bootstrap replicates.
    #[arg(long = "B", short = 'B')]
    b: Option<usize>,
    #[arg(long)]
    m_mc: Option<usize>,
    /// Grid side length (both axes).
    #[arg(long)]
    grid: Option<usize>,
    /// auto, mock, or a fixed positive bandwidth.
    #[arg(long)]
    bandwidth: Option<String>,
    /// Factor applied to the bandwidth, e.g. 2/3 or 1.5.
    #[arg(long)]
    bandwidth_scale: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl DataArgs {
    fn overrides(&self) -> Vec<(usize, String, String)> {
        let mut kv = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((0, k.to_string(), v));
            }
        };
        put("x_column", self.x.clone());
        put("y_column", self.y.clone());
        put("header", self.no_header.then(|| "false".to_string()));
        put("noise", self.noise.clone());
        put("noise_v1", self.v1.map(|v| v.to_string()));
        put("noise_v2", self.v2.map(|v| v.to_string()));
        put("measure", self.measure.clone());
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("deltas", self.deltas.clone());
        put("B", self.b.map(|v| v.to_string()));
        put("m_mc", self.m_mc.map(|v| v.to_string()));
        put("grid", self.grid.map(|v| v.to_string()));
        put("bandwidth", self.bandwidth.clone());
        put("bandwidth_scale", self.bandwidth_scale.clone());
        kv
    }

    fn load(&self, flag_seed: Option<u64>) -> CliResult<(Dataset, AnalysisConfig, u64)> {
        let mut cfg = AnalysisConfig::default();
        if let Some(path) = &self.config {
            cfg.apply(&read_kv_file(path)?)?;
        }
        cfg.apply(&self.overrides())?;
        cfg.validate()?;
        let env = std::env::var(SEED_ENV).ok();
        let seed = resolve_seed(flag_seed, cfg.seed, env.as_deref())?;
        let data = ingest_csv(&self.input, &cfg.ingest_options())?;
        for w in &data.warnings {
            eprintln!("{}", serde_json::json!({ "warning": w }));
        }
        Ok((data, cfg, seed))
    }
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn emit_with<F>(path: Option<&Path>, write: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| CliError::io("<buffer>", e))?;
    emit(path, &String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Analyze(a) => {
            let (d, c, s) = a.load(seed)?;
            emit(a.output.as_deref(), &commands::to_json(&commands::analyze(&d, &c, s)?))
        }
        Command::Estimate(a) => {
            let (d, c, s) = a.load(seed)?;
            emit(a.output.as_deref(), &commands::to_json(&commands::estimate(&d, &c, s)?))
        }
        Command::Test(a) => {
            let (d, c, s) = a.load(seed)?;
            emit(a.output.as_deref(), &commands::to_json(&commands::test(&d, &c, s)?))
        }
        Command::Ci(a) => {
            let (d, c, s) = a.load(seed)?;
            emit(a.output.as_deref(), &commands::to_json(&commands::ci(&d, &c, s)?))
        }
        Command::Bandwidth { data, summary } => {
            let (d, c, s) = data.load(seed)?;
            let sel = commands::bandwidth_curve(&d, &c, s)?;
            if let Some(p) = &summary {
                emit(Some(p), &commands::to_json(&sel))?;
            }
            emit_with(data.output.as_deref(), |w| sel.write_csv(w))
        }
        Command::Density { data, out_dir, format } => {
            let (d, c, s) = data.load(seed)?;
            let format = match format {
                Format::Csv => DensityFormat::Csv,
                Format::Bin => DensityFormat::Binary,
            };
            let paths = commands::density(&d, &c, s, &out_dir, format)?;
            let list: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            emit(
                data.output.as_deref(),
                &commands::to_json(&serde_json::json!({ "files": list })),
            )
        }
        Command::Simulate { study, table, output } => {
            let mut cfg = study_from_kv(&read_kv_file(&study)?)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let report = commands::simulate(&cfg)?;
            if let Some(p) = &table {
                emit_with(Some(p), |w| commands::study_table(w, &report))?;
            }
            emit(output.as_deref(), &commands::to_json(&report))
        }
        Command::Distortion {
            n,
            reps,
            rho,
            v1,
            v2,
            no_noise,
            summary,
            output,
        } => {
            let env = std::env::var(SEED_ENV).ok();
            let s = resolve_seed(seed, None, env.as_deref())?;
            let noise = if no_noise {
                NoiseSpec::none()
            } else {
                NoiseSpec::laplace(v1, v2)?
            };
            let r = commands::distortion(n, reps, &noise, rho, s)?;
            if let Some(p) = &summary {
                let sum =
                    serde_json::json!({ "n": n, "reps": reps, "rho": rho, "seed": s, "mean": r.mean, "std": r.std });
                emit(Some(p), &commands::to_json(&sum))?;
            }
            emit_with(output.as_deref(), |w| r.write_csv(w))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(if code == 0 { 0 } else { EXIT_USAGE as u8 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
