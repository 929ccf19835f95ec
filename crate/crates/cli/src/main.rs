use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elbowsig::baselines::{gap_from_inertia, hard_inertia, index_curve, GapResult, IndexCurve, ValidityIndex};
use elbowsig::clustering::fit_path;
use elbowsig::inference::SeedBlock;
use elbowsig::simstudy::{run_scaling_experiment, run_table_experiment, ExperimentDesign, ScalingDesign};
use elbowsig::theory::prediction_table;
use elbowsig::{analyze, build_ensemble, AnalysisConfig, Dataset, Error, ErrorKind, Method, ReferenceType, RngSpec};

#[derive(Parser)]
#[command(
    name = "elbowsig",
    version,
    about = "Significance tests for elbows in cluster heterogeneity curves"
)]
struct Cli {
    /// Worker threads; 0 uses every available core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every k in 2..=k_max for significant structure.
    Analyze(AnalyzeArgs),
    /// Run a replicate study described by a TOML file.
    Simulate(SimulateArgs),
    /// Null variance of the elbow statistic against dimension.
    Scaling(ScalingArgs),
    /// Print asymptotic null expectations as CSV.
    Theory(TheoryArgs),
    /// Gap statistic and validity indices for a dataset.
    Baselines(BaselineArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Numeric CSV, one observation per row.
    #[arg(long)]
    data: PathBuf,
    /// The first line is data, not column names.
    #[arg(long)]
    no_header: bool,
    /// Scale every feature to zero mean and unit variance first.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "agglomerative", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 2.0)]
    fuzzifier: f64,
    /// Restarts for the iterative methods; the best objective wins.
    #[arg(long, default_value_t = 1)]
    n_init: usize,
    #[arg(long, default_value = "pca", value_parser = parse_reference)]
    reference: ReferenceType,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 200)]
    n_ref: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.05)]
    q1: f64,
    #[arg(long, default_value_t = 0.05)]
    q2: f64,
    #[arg(long, default_value_t = 50)]
    s_sig: usize,
    #[arg(long, default_value_t = 0.5)]
    f_sel: f64,
    /// Where to write the report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Validate the design and print the planned work without running it.
    #[arg(long)]
    dry_run: bool,
    /// Directory for `<name>.json` and `<name>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, default_value_t = 30)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_value = "agglomerative,kmeans,fcm", value_parser = parse_method)]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    n_ref: usize,
    #[arg(long, default_value_t = 2.0)]
    fuzzifier: f64,
    #[arg(long, default_value_t = 1)]
    n_init: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 2.0)]
    fuzzifier: f64,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_reference(s: &str) -> Result<ReferenceType, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// An error tagged with the stage that produced it.
struct Failure {
    stage: &'static str,
    error: Error,
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Parameter => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error [threads]: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { stage, error }) => {
            eprintln!("error [{stage}]: {error}");
            ExitCode::from(exit_code(error.kind()))
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Scaling(args) => cmd_scaling(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Baselines(args) => cmd_baselines(args),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
        .stage("writing output")
}

fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    let data = Dataset::load_csv(&args.data, !args.no_header).stage("loading data")?;
    Ok(if args.standardize { data.standardized() } else { data })
}

fn analysis_config(model: &ModelArgs) -> AnalysisConfig {
    let mut cfg = AnalysisConfig::new(model.method, model.reference);
    cfg.method.fuzzifier = model.fuzzifier;
    cfg.method.n_init = model.n_init;
    cfg.k_max = model.k_max;
    cfg.n_ref = model.n_ref;
    cfg.seed = model.seed;
    cfg
}

fn check_fits(data: &Dataset, k_max: usize) -> Result<(), Failure> {
    if k_max + 1 > data.n_rows() {
        return Err(Failure {
            stage: "validating flags",
            error: Error::InvalidParameter(format!(
                "k_max + 1 = {} exceeds the {} observations",
                k_max + 1,
                data.n_rows()
            )),
        });
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let mut config = analysis_config(&args.model);
    config.q1 = args.q1;
    config.q2 = args.q2;
    config.s_sig = args.s_sig;
    config.f_sel = args.f_sel;
    config.validate().stage("validating flags")?;
    let data = load(&args.data)?;
    check_fits(&data, config.k_max)?;
    let mut report = analyze(&data, &config).stage("analysis")?;
    report.standardized = args.data.standardize;
    print!("{}", report.summary_table());
    if let Some(out) = &args.out {
        let body = match args.format {
            Format::Json => report.to_json(),
            Format::Csv => report.to_tidy_csv(),
        };
        write_file(out, &body)?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Failure> {
    let mut design = ExperimentDesign::load(&args.config).stage("reading config")?;
    if design.name.is_empty() {
        design.name = args
            .config
            .file_stem()
            .map_or_else(|| "experiment".to_string(), |s| s.to_string_lossy().into_owned());
    }
    let fits_per_replicate = design.methods.len() * (1 + design.references.len() * design.n_ref);
    println!(
        "{}: {} replicates x {} method(s) x {} reference type(s), N_R = {} ({} path fits per replicate)",
        design.name,
        design.replicates,
        design.methods.len(),
        design.references.len(),
        design.n_ref,
        fits_per_replicate
    );
    if args.dry_run {
        return Ok(());
    }
    let result = run_table_experiment(&design).stage("simulation")?;
    print!("{}", result.counts_table());
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)
            .map_err(|source| Error::Io {
                path: dir.clone(),
                source,
            })
            .stage("writing output")?;
        write_file(&dir.join(format!("{}.json", design.name)), &result.to_json())?;
        write_file(&dir.join(format!("{}.csv", design.name)), &result.to_tidy_csv())?;
    }
    Ok(())
}

fn cmd_scaling(args: ScalingArgs) -> Result<(), Failure> {
    let design = ScalingDesign {
        n: args.n,
        k_probe: args.k,
        methods: args.methods,
        dims: args.dims,
        n_ref: args.n_ref,
        fuzzifier: args.fuzzifier,
        n_init: args.n_init,
        seed: args.seed,
    };
    let result = run_scaling_experiment(&design).stage("scaling")?;
    let csv = result.to_tidy_csv();
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    for (method, slope) in &result.slopes {
        eprintln!(
            "{method}: slope of ln Var(delta_{}) on ln D = {slope:.3}",
            design.k_probe
        );
    }
    Ok(())
}

fn cmd_theory(args: TheoryArgs) -> Result<(), Failure> {
    let table = prediction_table(args.k_max, args.d, args.fuzzifier).stage("validating flags")?;
    print!("{table}");
    Ok(())
}

fn cmd_baselines(args: BaselineArgs) -> Result<(), Failure> {
    let config = analysis_config(&args.model);
    config.validate().stage("validating flags")?;
    let data = load(&args.data)?;
    check_fits(&data, config.k_max)?;
    let seeds = SeedBlock::from_master(RngSpec::new(config.seed));
    let path = fit_path(&data, &config.method.with_rng(seeds.observed), config.k_max).stage("clustering")?;
    let ensemble = build_ensemble(
        &data,
        &config.method,
        config.k_max,
        config.n_ref,
        config.reference_type,
        seeds.references,
    )
    .stage("references")?;
    let gap = gap_from_inertia(&hard_inertia(&data, &path), &ensemble.inertia, config.k_max).stage("gap statistic")?;
    let indices = ValidityIndex::ALL
        .iter()
        .map(|&idx| index_curve(&data, &path, idx, config.k_max))
        .collect::<Result<Vec<_>, _>>()
        .stage("validity indices")?;
    print!("{}", baseline_table(&gap, &indices));
    if let Some(out) = &args.out {
        let doc = serde_json::json!({
            "schema_version": "elbowsig.baselines/1",
            "method": config.method.method,
            "reference_type": config.reference_type,
            "n_ref": config.n_ref,
            "k_max": config.k_max,
            "seeds": seeds,
            "gap": gap,
            "indices": indices,
        });
        let mut body = serde_json::to_string_pretty(&doc).expect("baseline results are serializable");
        body.push('\n');
        write_file(out, &body)?;
    }
    Ok(())
}

fn baseline_table(gap: &GapResult, indices: &[IndexCurve]) -> String {
    let mut out = format!("{:>4}  {:>10}  {:>8}", "k", "Gap", "s_k");
    for c in indices {
        out.push_str(&format!("  {:>10}", c.index.name()));
    }
    out.push('\n');
    for (i, &k) in gap.k_values.iter().enumerate() {
        out.push_str(&format!("{k:>4}  {:>10.4}  {:>8.4}", gap.gap[i], gap.s_k[i]));
        for c in indices {
            let cell = k
                .checked_sub(2)
                .and_then(|j| c.scores.get(j).copied().flatten())
                .map_or_else(|| "-".to_string(), |s| format!("{s:.4}"));
            out.push_str(&format!("  {cell:>10}"));
        }
        out.push('\n');
    }
    let fallback = if gap.rule_i_fallback {
        " (no k satisfied rule I)"
    } else {
        ""
    };
    out.push_str(&format!(
        "Gap (I): k = {}{fallback}\nGap (II): k = {}\n",
        gap.k_hat_i, gap.k_hat_ii
    ));
    for c in indices {
        out.push_str(&format!("{}: k = {}\n", c.index.name(), c.k_hat));
    }
    out
}
