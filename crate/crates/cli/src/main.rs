use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gencov::estimation::{
    estimate_graph, CombineMode, EstimatorConfig, Method, Penalty, PenaltyParams, PenaltyRule,
    SampleMoments,
};
use gencov::graph::{generate_graph, GraphFamily, GraphFamilySpec};
use gencov::harness::{
    emit_details, fresh_seed, named_graph, run_phase_transition_with, run_population_check,
    BasisSpec, ExperimentConfig, MethodSection, ResultsWriter,
};
use gencov::mrf::DiscreteMrf;
use gencov::sampling::{corrupt_missing, Dataset, Sampler, SamplerConfig, SamplerMode};
use gencov::Error;

/// Structure of generalized inverse covariance matrices for discrete
/// graphical models.
#[derive(Parser)]
#[command(name = "gencov", version)]
struct Cli {
    /// Master seed; a fresh one is drawn and logged when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print μ, Σ and Γ for a model and check Γ's block zeros.
    PopulationCheck(PopulationArgs),
    /// Monte-Carlo recovery rates over a grid of sample sizes.
    PhaseTransition(PhaseArgs),
    /// Graph utilities.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Draw samples from an Ising model or a model file.
    Sample(SampleArgs),
    /// Estimate a graph from a data CSV.
    Estimate(EstimateArgs),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Generate a member of a graph family.
    Gen(GenArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Named graph (chain4, cycle4, grid3x3, star5, dino) or graph file.
    #[arg(long, conflicts_with = "model")]
    graph: Option<String>,
    /// Model file in `p m` / `C:J:value` format.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ising node and edge weights.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3])]
    weights: Vec<f64>,
}

impl ModelArgs {
    fn build(&self) -> Result<DiscreteMrf, Error> {
        if self.weights.len() != 2 {
            return Err(Error::InvalidInput("--weights takes node,edge".into()));
        }
        match (&self.graph, &self.model) {
            (_, Some(path)) => DiscreteMrf::read_text(BufReader::new(File::open(path)?)),
            (Some(name), None) => Ok(DiscreteMrf::ising(
                &named_graph(name)?,
                self.weights[0],
                self.weights[1],
            )),
            (None, None) => Err(Error::InvalidInput("pass --graph or --model".into())),
        }
    }
}

#[derive(Args)]
struct PopulationArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Basis: `vertices`, `cliques`, `separators` or `sep:a,b`, joined by `+`.
    #[arg(long, default_value = "vertices")]
    basis: String,
    /// Decimals in the printed matrices.
    #[arg(long, default_value_t = 2)]
    precision: usize,
    /// Also write the block checks as CSV.
    #[arg(long)]
    checks_csv: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseArgs {
    /// Companion CSV with penalty constants and partial-recovery metrics.
    #[arg(long)]
    details: Option<PathBuf>,
    /// Override the configured trial count.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Chain,
    Cycle,
    Grid2d,
    ErdosRenyi,
    Star,
    Dino,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Vertex count; fixed at 13 for the dino graph.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long)]
    hub_degree: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Exact,
    Forest,
    Gibbs,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n: usize,
    /// Fraction of cells erased and recorded as 0.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Where to write the erasure mask (1 = erased).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    thinning: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Glasso,
    NodewiseTree,
    NodewiseGeneral,
    CorrDecay,
}

#[derive(Clone, Copy, ValueEnum)]
enum CombineArg {
    And,
    Or,
}

#[derive(Args)]
struct EstimateArgs {
    /// Integer data CSV, one row per sample.
    #[arg(long)]
    data: PathBuf,
    /// Erasure mask CSV (1 = erased); requires --rho.
    #[arg(long, requires = "rho")]
    mask: Option<PathBuf>,
    /// Erasure probability used for the correction.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value = "glasso")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "or")]
    combine: CombineArg,
    /// Degree bound for nodewise methods.
    #[arg(long, default_value_t = 2)]
    degree_bound: usize,
    /// Fixed λ; with --tau overrides the scaling rule.
    #[arg(long, requires = "tau")]
    lambda: Option<f64>,
    #[arg(long, requires = "lambda")]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    lambda_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    tau_scale: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or_else(|| {
        let s = fresh_seed();
        log::info!("seed {s}");
        s
    })
}

/// `Ok(false)` signals a verification failure.
fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::PopulationCheck(args) => population_check(cli, args),
        Command::PhaseTransition(args) => phase_transition(cli, args).map(|_| true),
        Command::Graph {
            command: GraphCommand::Gen(args),
        } => graph_gen(cli, args).map(|_| true),
        Command::Sample(args) => sample(cli, args).map(|_| true),
        Command::Estimate(args) => estimate(cli, args).map(|_| true),
    }
}

fn population_check(cli: &Cli, args: &PopulationArgs) -> Result<bool, Error> {
    let model = args.model.build()?;
    let basis: BasisSpec = args.basis.parse()?;
    let report = run_population_check(&model, &basis, args.precision)?;
    let mut out = output(&cli.out)?;
    writeln!(out, "{report}")?;
    out.flush()?;
    if let Some(path) = &args.checks_csv {
        report.structure.write_csv(File::create(path)?)?;
    }
    Ok(report.passed())
}

fn phase_transition(cli: &Cli, args: &PhaseArgs) -> Result<(), Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("phase-transition needs --config".into()))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.grid.trials = t;
    }
    let mut writer = ResultsWriter::new(output(&cli.out)?)?;
    let curve = run_phase_transition_with(&cfg, |row| writer.write(row))?;
    writer.finish()?;
    if let Some(path) = &args.details {
        emit_details(&curve, File::create(path)?)?;
    }
    Ok(())
}

fn graph_gen(cli: &Cli, args: &GenArgs) -> Result<(), Error> {
    let family = match args.family {
        FamilyArg::Chain => GraphFamily::Chain,
        FamilyArg::Cycle => GraphFamily::Cycle,
        FamilyArg::Grid2d => GraphFamily::Grid2d,
        FamilyArg::ErdosRenyi => GraphFamily::ErdosRenyi {
            edge_prob: args.edge_prob,
        },
        FamilyArg::Star => GraphFamily::Star {
            hub_degree: args.hub_degree,
        },
        FamilyArg::Dino => GraphFamily::Dino,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed(cli));
    let p = match (args.p, &family) {
        (Some(p), _) => p,
        (None, GraphFamily::Dino) => 13,
        (None, _) => {
            return Err(Error::InvalidInput(
                "--p is required for this family".into(),
            ))
        }
    };
    let graph = generate_graph(&GraphFamilySpec::new(family, p), &mut rng)?;
    let mut out = output(&cli.out)?;
    graph.write_text(&mut out)?;
    out.flush()?;
    Ok(())
}

fn sample(cli: &Cli, args: &SampleArgs) -> Result<(), Error> {
    let model = args.model.build()?;
    let config = SamplerConfig {
        mode: match args.mode {
            ModeArg::Auto => SamplerMode::Auto,
            ModeArg::Exact => SamplerMode::Exact,
            ModeArg::Forest => SamplerMode::Forest,
            ModeArg::Gibbs => SamplerMode::Gibbs,
        },
        burn_in: args.burn_in,
        thinning: args.thinning,
        seed: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed(cli));
    let mut data = Sampler::new(&model, &config)?.sample(args.n, &mut rng)?;
    if args.rho > 0.0 {
        data = corrupt_missing(&data, args.rho, &mut rng)?;
    } else if args.rho < 0.0 {
        return Err(Error::InvalidRho(args.rho));
    }
    let mut out = output(&cli.out)?;
    data.write_csv(&mut out)?;
    out.flush()?;
    if let Some(path) = &args.mask {
        data.write_mask_csv(File::create(path)?)?;
    }
    Ok(())
}

fn read_data(args: &EstimateArgs) -> Result<Dataset, Error> {
    let data = Dataset::read_csv(File::open(&args.data)?, Some(2))?;
    Ok(match (&args.mask, args.rho) {
        (Some(mask), Some(rho)) => data.read_mask_csv(File::open(mask)?, rho)?,
        (None, Some(rho)) if rho > 0.0 => {
            let mask = vec![false; data.n() * data.p()];
            log::warn!("no mask given; erased cells are assumed to be recorded as 0");
            data.with_corruption(rho, mask)?
        }
        _ => data,
    })
}

fn estimate(cli: &Cli, args: &EstimateArgs) -> Result<(), Error> {
    let data = read_data(args)?;
    let method = match args.method {
        MethodArg::Glasso => Method::Glasso,
        MethodArg::NodewiseTree => Method::NodewiseTree,
        MethodArg::NodewiseGeneral => Method::NodewiseGeneral,
        MethodArg::CorrDecay => Method::CorrDecay,
    };
    let mut section = MethodSection::new(method);
    section.degree_bound = Some(args.degree_bound);
    section.combine = match args.combine {
        CombineArg::And => CombineMode::And,
        CombineArg::Or => CombineMode::Or,
    };
    let mut cfg: EstimatorConfig = section.estimator(args.degree_bound);
    cfg.penalty = match (args.lambda, args.tau) {
        (Some(lambda), Some(tau)) => Penalty::Fixed(PenaltyParams::new(lambda, tau)),
        _ => Penalty::Rule(PenaltyRule {
            lambda_scale: args.lambda_scale,
            tau_scale: args.tau_scale,
        }),
    };
    let moments = SampleMoments::new(&data);
    let est = estimate_graph(&moments, &cfg)?;
    for w in &est.warnings {
        log::warn!("{w}");
    }
    let mut out = output(&cli.out)?;
    writeln!(out, "s,t,magnitude")?;
    for &(s, t) in &est.edges {
        let mag = est.magnitudes.get(&(s, t)).copied().unwrap_or(f64::NAN);
        writeln!(out, "{s},{t},{mag:e}")?;
    }
    out.flush()?;
    Ok(())
}
