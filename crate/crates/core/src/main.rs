use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use matryoshka::hamiltonian::GapDistribution;
use matryoshka::harness::config::{ExperimentConfig, ExperimentKind, HamiltonianConfig, OutputFormat};
use matryoshka::harness::{ratio_report, run_experiment, Report, TestVectorSpec};
use matryoshka::matryoshka::{DimensionSchedule, ScheduleSpec};
use matryoshka::urn::Protocol;
use matryoshka::Error;

#[derive(Parser)]
#[command(name = "matryoshka", version, about = "Nested random subspaces, coin-spending urns and renewal Hamiltonians")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print n_k, m_k, r_k, partial sums of r_k and the keep products.
    Ratios {
        #[command(flatten)]
        schedule: ScheduleArgs,
        #[arg(long, default_value_t = 12)]
        horizon: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Residual norms of test vectors under the nested subspace process.
    Quantum(ProcessArgs),
    /// Survival frequencies of coins under a spending protocol.
    Classical(ProcessArgs),
    /// Quantum and classical runs on the same schedule, with paired rows.
    Compare(ProcessArgs),
    /// Residual of e_1 on a divergent and a convergent schedule.
    Dichotomy(CommonArgs),
    /// Renewal-driven Hamiltonian ensembles: gap law, level density, matrix elements.
    Hamiltonian(HamiltonianArgs),
    /// Run the acceptance suite.
    Verify(CommonArgs),
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Base config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (default: $MATRYOSHKA_SEED or 42).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    z_threshold: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ScheduleArgs {
    /// Schedule spec such as `affine:m=1,n=2`, `geometric:base=2` or
    /// `explicit:n=[2,4],m=[1,2]`, or a file holding one (spec string or TOML table).
    #[arg(long)]
    schedule: Option<String>,
}

#[derive(Args)]
struct ProcessArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Basis vectors (quantum) or coins (classical), 1-based, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "superposition")]
    vectors: Option<Vec<u64>>,
    /// A single test vector: the normalized sum of these basis vectors.
    #[arg(long, value_delimiter = ',')]
    superposition: Option<Vec<u64>>,
    #[arg(long)]
    protocol: Option<Protocol>,
}

#[derive(Args)]
struct HamiltonianArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Gap law such as `geometric:q=0.5`, `geometric:mean=2`, `deterministic:gap=1`,
    /// `zeta:s=2.5` or `table:p=[0.5,0.5]`.
    #[arg(long)]
    gaps: Option<GapDistribution>,
    #[arg(long)]
    omega: Option<f64>,
    /// Density window width in energy units.
    #[arg(long)]
    window: Option<f64>,
    /// Draw the first gap from the stationary delay law.
    #[arg(long)]
    stationary_first_gap: bool,
    /// Build eigenframes and report matrix elements of the projector on e_1.
    #[arg(long)]
    matrix_elements: bool,
}

fn parse_schedule(arg: &str) -> Result<ScheduleSpec, Error> {
    if let Ok(spec) = arg.parse() {
        return Ok(spec);
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return arg.parse();
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: arg.into(), source })?;
    match toml::from_str::<ScheduleSpec>(&text) {
        Ok(spec) => Ok(spec),
        Err(_) => text.trim().parse(),
    }
}

fn base_config(kind: ExperimentKind, common: &CommonArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    config.kind = kind;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Some(horizon) = common.horizon {
        config.horizon = horizon;
    }
    if let Some(z) = common.z_threshold {
        config.z_threshold = z;
    }
    apply_output(&mut config, &common.output);
    Ok(config)
}

fn apply_output(config: &mut ExperimentConfig, output: &OutputArgs) {
    if let Some(format) = output.format {
        config.output.format = format.into();
    }
    if let Some(out) = &output.out {
        config.output.path = Some(out.clone());
    }
}

fn process_config(kind: ExperimentKind, args: &ProcessArgs) -> Result<ExperimentConfig, Error> {
    let mut config = base_config(kind, &args.common)?;
    if let Some(s) = &args.schedule.schedule {
        config.schedule = Some(parse_schedule(s)?);
    }
    if config.schedule.is_none() {
        config.schedule = Some(ScheduleSpec::doubling());
    }
    if let Some(v) = &args.vectors {
        config.test_vectors = TestVectorSpec::Basis { indices: v.clone() };
    }
    if let Some(v) = &args.superposition {
        config.test_vectors = TestVectorSpec::Superposition { indices: v.clone() };
    }
    if let Some(p) = args.protocol {
        config.protocol = p;
    }
    Ok(config)
}

fn hamiltonian_config(args: &HamiltonianArgs) -> Result<ExperimentConfig, Error> {
    let mut config = base_config(ExperimentKind::Hamiltonian, &args.common)?;
    let h = config.hamiltonian.get_or_insert(HamiltonianConfig {
        gaps: GapDistribution::Geometric { q: 0.5 },
        omega: 1.0,
        window: 100.0,
        stationary_first_gap: false,
        matrix_elements: false,
    });
    if let Some(g) = &args.gaps {
        h.gaps = g.clone();
    }
    if let Some(o) = args.omega {
        h.omega = o;
    }
    if let Some(w) = args.window {
        h.window = w;
    }
    h.stationary_first_gap |= args.stationary_first_gap;
    h.matrix_elements |= args.matrix_elements;
    Ok(config)
}

fn emit(report: &Report, format: OutputFormat, out: Option<&Path>) -> Result<(), Error> {
    let body = report.render(format)?;
    match out {
        Some(path) => fs::write(path, body).map_err(|source| Error::Io { path: path.display().to_string(), source })?,
        None => print!("{body}"),
    }
    eprint!("{}", report.summary());
    Ok(())
}

fn run_config(config: &ExperimentConfig, workers: Option<usize>, print_config: bool) -> Result<bool, Error> {
    if print_config {
        config.validate()?;
        print!("{}", config.to_toml()?);
        return Ok(true);
    }
    let report = run_experiment(config, workers)?;
    emit(&report, config.output.format, config.output.path.as_deref())?;
    Ok(report.passed)
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Ratios { schedule, horizon, output } => {
            let spec = match &schedule.schedule {
                Some(s) => parse_schedule(s)?,
                None => ScheduleSpec::doubling(),
            };
            let schedule = DimensionSchedule::new(spec, horizon)?;
            let format = output.format.map_or(OutputFormat::Csv, Into::into);
            emit(&ratio_report(&schedule), format, output.out.as_deref())?;
            Ok(true)
        }
        Command::Quantum(args) => {
            run_config(&process_config(ExperimentKind::Quantum, &args)?, args.common.workers, args.common.print_config)
        }
        Command::Classical(args) => {
            run_config(&process_config(ExperimentKind::Classical, &args)?, args.common.workers, args.common.print_config)
        }
        Command::Compare(args) => {
            run_config(&process_config(ExperimentKind::Compare, &args)?, args.common.workers, args.common.print_config)
        }
        Command::Dichotomy(args) => {
            run_config(&base_config(ExperimentKind::Dichotomy, &args)?, args.workers, args.print_config)
        }
        Command::Hamiltonian(args) => {
            run_config(&hamiltonian_config(&args)?, args.common.workers, args.common.print_config)
        }
        Command::Verify(args) => {
            run_config(&base_config(ExperimentKind::Verify, &args)?, args.workers, args.print_config)
        }
        Command::Run { config, workers, output } => {
            let mut config = ExperimentConfig::load(&config)?;
            apply_output(&mut config, &output);
            run_config(&config, workers, false)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
