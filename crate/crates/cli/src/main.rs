use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use grey_soliton::io::DumpFormat;
use grey_soliton::{Error, Preset, Result, RunConfig, SignConvention};
use greysol::{exit_code, read_solution, write_presets, Command, Run};

#[derive(Parser)]
#[command(
    name = "greysol",
    version,
    about = "Grey-bright vector solitons in a Λ-doped two-mode fiber"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides outputs.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Built-in medium and angles, applied over the config.
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, global = true, value_enum)]
    signs: Option<SignsArg>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solution JSON written by `solve`, used instead of solving again.
    #[arg(long, global = true)]
    solution: Option<PathBuf>,
    /// Write the fig4/fig5/fig7 preset configs into the output directory.
    #[arg(long)]
    paper_figs: bool,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Solve the consistency conditions and write solution.json.
    Solve,
    /// Velocity against θ over theta_list, written to velocity.csv.
    SweepVelocity,
    /// PDE residuals, sign calibration and p₁ check.
    Verify,
    /// Split-step propagation with snapshots and diagnostics.
    Propagate,
    /// Linearized-operator checks.
    Stability,
    /// Dark and grey runs side by side.
    CompareDarkGrey,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Fig4,
    Fig5,
    Fig7,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignsArg {
    /// Every sign choice +1.
    Printed,
    /// The convention under which all five equations vanish.
    Calibrated,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = cli.preset {
        match p {
            PresetArg::Fig4 => Preset::Fig4,
            PresetArg::Fig5 => Preset::Fig5,
            PresetArg::Fig7 => Preset::Fig7,
        }
        .apply(&mut cfg);
    }
    if let Some(s) = cli.signs {
        cfg.solver.signs = signs(s);
    }
    if let Some(f) = cli.format {
        cfg.outputs.format = match f {
            FormatArg::Csv => DumpFormat::Csv,
            FormatArg::Binary => DumpFormat::Binary,
        };
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.outputs.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn signs(s: SignsArg) -> SignConvention {
    match s {
        SignsArg::Printed => SignConvention::ALL_PLUS,
        SignsArg::Calibrated => SignConvention::CALIBRATED,
    }
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = config(cli)?;
    if cli.paper_figs {
        for f in write_presets(&cfg.outputs.dir)? {
            say(&format!("wrote {}", f.display()));
        }
        if cli.command.is_none() {
            return Ok(0);
        }
    }
    let cmd = match cli.command {
        Some(Sub::Solve) => Command::Solve,
        Some(Sub::SweepVelocity) => Command::SweepVelocity,
        Some(Sub::Verify) => Command::Verify,
        Some(Sub::Propagate) => Command::Propagate,
        Some(Sub::Stability) => Command::Stability,
        Some(Sub::CompareDarkGrey) => Command::CompareDarkGrey,
        None => return Err(Error::Config("no subcommand given (see --help)".into())),
    };
    let solution = cli.solution.as_deref().map(read_solution).transpose()?;
    let outcome = Run {
        cfg: &cfg,
        solution,
        signs: cli.signs.map(signs),
    }
    .execute(cmd)?;
    say(&outcome.summary);
    for f in &outcome.files {
        say(&format!("wrote {}", f.display()));
    }
    if outcome.passed {
        Ok(0)
    } else {
        eprintln!("{}: checks failed", cmd.name());
        Ok(4)
    }
}

/// Print a line, ignoring a closed stdout.
fn say(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
