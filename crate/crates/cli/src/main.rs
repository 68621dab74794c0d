use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use onh_cli::commands::{self, GenerateArgs, Method};
use onh_cli::CliResult;

/// Synthetic optic-nerve-head robustness pipeline.
#[derive(Debug, Parser)]
#[command(name = "onh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic cohorts.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// Point clouds and structural parameters from a phantom directory.
    #[command(subcommand)]
    Extract(ExtractCmd),
    /// Robustness labels from displacement fields.
    #[command(subcommand)]
    Label(LabelCmd),
    /// Train one method on a single stratified split.
    Train(TrainArgs),
    /// Stratified k-fold comparison of every configured method.
    Eval(RunArgs),
    /// Critical-point density map of a finished run.
    CriticalPoints(CriticalArgs),
    /// AUC table and ROC curves of a finished run.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum PhantomCmd {
    Generate(GenerateCli),
}

#[derive(Debug, Args)]
struct GenerateCli {
    /// Cohort size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target share of fragile members.
    #[arg(long)]
    fragile_fraction: Option<f64>,
    /// Cohort config JSON; --n, --seed and --fragile-fraction override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Clinical 97x384x496 raster instead of the desk-scale default.
    #[arg(long)]
    full_resolution: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum ExtractCmd {
    Pointcloud {
        #[arg(long)]
        phantom: PathBuf,
        /// Member index or directory name.
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        /// Keep scan coordinates instead of the BMO-aligned frame.
        #[arg(long)]
        scan_frame: bool,
        /// Also write an ASCII PLY.
        #[arg(long)]
        ply: bool,
        #[arg(long)]
        out: PathBuf,
    },
    Params {
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum LabelCmd {
    Strain {
        #[arg(long)]
        phantom: PathBuf,
        #[arg(long, default_value_t = onh_strain::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Dgcnn,
    Rf,
    Ae,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's thread count.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(value_enum)]
    method: MethodArg,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct CriticalArgs {
    /// Directory written by `eval`.
    #[arg(long)]
    run: PathBuf,
    /// Restrict to one test fold; all folds are pooled by default.
    #[arg(long)]
    fold: Option<usize>,
    #[arg(long, default_value_t = commands::default_radius())]
    radius: f64,
    #[arg(long)]
    ply: bool,
    /// Defaults to <run>/critical_points.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    run: PathBuf,
    /// Defaults to <run>/report.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Phantom(PhantomCmd::Generate(g)) => commands::phantom_generate(&GenerateArgs {
            n: g.n,
            seed: g.seed,
            fragile_fraction: g.fragile_fraction,
            config: g.config,
            full_resolution: g.full_resolution,
            out: g.out,
            jobs: g.jobs,
        }),
        Command::Extract(ExtractCmd::Pointcloud {
            phantom,
            id,
            n,
            scan_frame,
            ply,
            out,
        }) => commands::extract_pointcloud(&phantom, &id, n, scan_frame, ply, &out),
        Command::Extract(ExtractCmd::Params { phantom, out }) => commands::extract_params(&phantom, &out),
        Command::Label(LabelCmd::Strain { phantom, threshold, out }) => {
            commands::label_strain(&phantom, threshold, &out)
        }
        Command::Train(t) => {
            let method = match t.method {
                MethodArg::Dgcnn => Method::Dgcnn,
                MethodArg::Rf => Method::Rf,
                MethodArg::Ae => Method::Ae,
            };
            let summary = commands::train(method, &t.run.config, t.run.out.as_deref(), t.run.jobs)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
            Ok(())
        }
        Command::Eval(r) => {
            let summary = commands::eval(&r.config, r.out.as_deref(), r.jobs)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
            Ok(())
        }
        Command::CriticalPoints(c) => {
            let s = commands::critical_points(&c.run, c.fold, c.radius, c.ply, c.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&s).map_err(anyhow::Error::from)?);
            Ok(())
        }
        Command::Report(r) => {
            print!("{}", commands::report(&r.run, r.out.as_deref())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                onh_cli::CliError::Runtime(inner) => eprintln!("error: {inner:#}"),
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
