use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use peelkit::harness::{self, Command, ExperimentConfig, Variant};
use peelkit::{EdgeMode, Error};

#[derive(Parser)]
#[command(name = "peelkit", version, about = "Parallel peeling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Mean rounds (or subrounds) and failures for each (n, c)
    RoundsVsN(Opts),
    /// Recursion prediction vs observed survivors per round
    RecursionCheck(Opts),
    /// Subtable recursion vs observed survivors per subround
    SubtableCheck(Opts),
    /// Threshold densities for every (r, k)
    ThresholdTable(Opts),
    /// IBLT recovery rate and timing per table load
    IbltBench(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Uniform,
    Partitioned,
}

#[derive(Clone, Copy, ValueEnum)]
enum EdgesArg {
    WithReplacement,
    Distinct,
}

#[derive(Args)]
struct Opts {
    /// Vertex counts (comma separated)
    #[arg(long, value_delimiter = ',', default_value = "10000")]
    n: Vec<usize>,
    /// Edge densities (comma separated)
    #[arg(long, value_delimiter = ',', default_value = "0.7")]
    c: Vec<f64>,
    /// Edge arity; a list for threshold-table
    #[arg(long, value_delimiter = ',', default_value = "4")]
    r: Vec<usize>,
    /// Core parameter; a list for threshold-table
    #[arg(long, value_delimiter = ',', default_value = "2")]
    k: Vec<u32>,
    #[arg(long, default_value_t = harness::DEFAULT_TRIALS)]
    trials: usize,
    /// Base seed; trial t uses seed + t
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "with-replacement")]
    edges: EdgesArg,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Threshold tolerance
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// IBLT table loads (comma separated)
    #[arg(long, value_delimiter = ',', default_value = "0.75")]
    load: Vec<f64>,
    /// IBLT cell count
    #[arg(long, default_value_t = 1 << 16)]
    cells: usize,
    /// Write the first generated graph as an edge list
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    /// Peel a graph read from an edge list instead of generating
    #[arg(long)]
    load_graph: Option<PathBuf>,
}

impl Opts {
    fn into_config(self, command: Command) -> (ExperimentConfig, Option<PathBuf>) {
        let cfg = ExperimentConfig {
            command,
            n: self.n,
            c: self.c,
            r: self.r,
            k: self.k,
            trials: self.trials,
            seed: self.seed,
            variant: match self.variant {
                VariantArg::Uniform => Variant::Uniform,
                VariantArg::Partitioned => Variant::Partitioned,
            },
            edge_mode: match self.edges {
                EdgesArg::WithReplacement => EdgeMode::WithReplacement,
                EdgesArg::Distinct => EdgeMode::DistinctEdges,
            },
            tol: self.tol,
            load: self.load,
            cells: self.cells,
            dump_graph: self.dump_graph,
            load_graph: self.load_graph,
        };
        (cfg, self.out)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, out) = match cli.command {
        Cmd::RoundsVsN(o) => o.into_config(Command::RoundsVsN),
        Cmd::RecursionCheck(o) => o.into_config(Command::RecursionCheck),
        Cmd::SubtableCheck(o) => o.into_config(Command::SubtableCheck),
        Cmd::ThresholdTable(o) => o.into_config(Command::ThresholdTable),
        Cmd::IbltBench(o) => o.into_config(Command::IbltBench),
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}\n");
        let _ = Cli::command().print_help();
        return ExitCode::from(2);
    }
    let result = match &out {
        Some(path) => File::create(path).map_err(Error::from).and_then(|f| {
            let mut w = BufWriter::new(f);
            harness::run(&cfg, &mut w)?;
            w.flush().map_err(Error::from)
        }),
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            harness::run(&cfg, &mut w)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::InvalidParameter(_) | Error::NotDivisible { .. } | Error::InvalidArity { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
