use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pbh_cli::{execute, load_config};

#[derive(Parser)]
#[command(name = "pbh", version, about = "Boundary Harnack experiments for parabolic equations in graph domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random approximating-polynomial systems, checked exactly.
    VerifyApprox(Common),
    /// Basis of polynomials Q with x_n·Q caloric.
    CaloricBasis(Common),
    /// Finite-difference heat solve on a graph domain.
    Solve(Common),
    /// Boundary exponent of a solved quotient v/u.
    HarnackExponent(Common),
    /// Improvement-of-flatness iteration on the model pair.
    Iterate(Common),
    /// Quotient blow-up at the base of the cylinder.
    Counterexample(Common),
    /// Seminorm scaling under parabolic dilation.
    ScalingCheck(Common),
    /// Free-boundary slopes from derivative quotients.
    ObstacleDemo(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults for the experiment when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report and CSV tables.
    #[arg(long, default_value = "pbh-out")]
    out: PathBuf,
    /// Overrides the seed of randomized experiments.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::VerifyApprox(a) => ("verify-approx", a),
        Command::CaloricBasis(a) => ("caloric-basis", a),
        Command::Solve(a) => ("solve", a),
        Command::HarnackExponent(a) => ("harnack-exponent", a),
        Command::Iterate(a) => ("iterate", a),
        Command::Counterexample(a) => ("counterexample", a),
        Command::ScalingCheck(a) => ("scaling-check", a),
        Command::ObstacleDemo(a) => ("obstacle-demo", a),
    };
    let result = load_config(kind, args.config.as_deref(), args.seed).and_then(|config| {
        if args.print_config {
            print!("{}", config.emit());
            return Ok(None);
        }
        execute(&config, &args.out).map(Some)
    });
    match result {
        Ok(Some(path)) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pbh: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
