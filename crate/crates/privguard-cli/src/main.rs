mod commands;
mod inputs;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Checks that a small MPU kernel cannot be driven into privilege escalation
/// by the tasks it runs.
#[derive(Parser)]
#[command(name = "privguard", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate baseline annotations from layout declarations.
    GenAnnot {
        #[arg(long)]
        typedecls: PathBuf,
        /// Manual overlay; it is counted, and merged when a configuration
        /// gives values to its variables.
        #[arg(long)]
        annot: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Kernel the configuration is checked against.
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Compute the runtime invariant of a kernel.
    Analyze {
        #[command(flatten)]
        inputs: KernelInputs,
        #[command(flatten)]
        analysis: AnalysisFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Interpret boot on a user image and test it against an invariant.
    Check {
        #[command(flatten)]
        inputs: KernelInputs,
        #[arg(long)]
        invariant: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[command(flatten)]
        boot: BootFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Annotations, runtime analysis and image check in one run.
    Verify {
        /// TOML run manifest; explicit flags override its entries.
        manifest: Option<PathBuf>,
        #[command(flatten)]
        inputs: OptInputs,
        #[arg(long)]
        image: Option<PathBuf>,
        #[command(flatten)]
        analysis: AnalysisFlags,
        #[command(flatten)]
        boot: BootFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run kernel and image concretely from reset.
    Simulate {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        /// Seed for the choice among MMIO values.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Write a user image for the toy kernel.
    BuildImage {
        #[arg(long, default_value_t = 2)]
        tasks: u32,
        #[arg(long, default_value_t = 256)]
        stack_size: u32,
        #[arg(long, value_enum)]
        corrupt: Option<CorruptArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the two-structure labeling example.
    ReproFig6 {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct KernelInputs {
    #[arg(long)]
    kernel: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    typedecls: PathBuf,
    #[arg(long)]
    annot: Option<PathBuf>,
}

#[derive(Args)]
struct OptInputs {
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    typedecls: Option<PathBuf>,
    #[arg(long)]
    annot: Option<PathBuf>,
}

#[derive(Args, Clone, Copy, Default)]
struct AnalysisFlags {
    /// Visits of a location before widening.
    #[arg(long)]
    unroll: Option<u32>,
    #[arg(long)]
    call_depth: Option<usize>,
    /// Largest number of targets a computed jump may resolve to.
    #[arg(long)]
    jump_cap: Option<usize>,
}

#[derive(Args, Clone, Copy)]
struct BootFlags {
    #[arg(long, value_enum, default_value_t = BoundaryArg::NextEntry)]
    boundary: BoundaryArg,
    #[arg(long, default_value_t = 1024)]
    max_paths: usize,
}

#[derive(ValueEnum, Clone, Copy)]
enum BoundaryArg {
    NextEntry,
    FirstExit,
}

#[derive(ValueEnum, Clone, Copy)]
enum CorruptArg {
    Privileged,
    NextKstack,
    WritableTable,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("privguard: {e}");
            ExitCode::from(2)
        }
    }
}
