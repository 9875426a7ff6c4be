use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dacel::dac::{dac_el_infer, Hypothesis, Outcome};
use dacel::datagen::{self, DesignSpec, Example};
use dacel::el::neg2_log_r_profile;
use dacel::harness::{self, ExperimentConfig, MethodName};
use dacel::ingest::{load_csv_files, CsvSchema, LoadReport};
use dacel::model::{Dataset, Estimator, ModelKind};
use dacel::{dac, rng};

#[derive(Parser)]
#[command(
    name = "dacel",
    version,
    about = "Divide-and-conquer empirical likelihood inference"
)]
struct Cli {
    /// Worker threads (defaults to $DACEL_THREADS, then the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo study on a simulation design and write reports.
    Simulate(SimulateArgs),
    /// DAC-EL inference on a CSV dataset.
    Analyze(AnalyzeArgs),
    /// Export the marginal -2 log R profile of one coefficient.
    Profile(ProfileArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Size,
    Length,
    All,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment config (TOML); flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    example: Option<Example>,
    #[arg(long)]
    case: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated block counts for DAC-EL.
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    /// Comma-separated subset exponents for BLB and SDB.
    #[arg(long, value_delimiter = ',')]
    gamma_list: Option<Vec<f64>>,
    /// Comma-separated methods: dacel, blb, sdb, tb.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodName>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Quantities to estimate.
    #[arg(long, value_enum, default_value = "all")]
    study: Study,
    /// Also time every method once on the replicate-0 dataset.
    #[arg(long)]
    timing: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataSource {
    /// Input CSV; repeat to stack several files.
    #[arg(long, requires = "schema")]
    data: Vec<PathBuf>,
    /// Schema (TOML) describing the CSV columns.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: DataSource,
    /// Overrides the model named in the schema.
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long, default_value_t = 20)]
    k: usize,
    /// Random re-partitions of the data.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    source: DataSource,
    /// Simulate the data instead of reading it.
    #[arg(long, conflicts_with = "data")]
    example: Option<Example>,
    #[arg(long, default_value_t = 1)]
    case: u8,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// One-based coefficient index.
    #[arg(long)]
    coordinate: usize,
    /// Grid as `lo:hi:steps`.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Files written so far; removed again if the command fails.
#[derive(Default)]
struct Outputs {
    files: Vec<PathBuf>,
    created_dir: Option<PathBuf>,
}

impl Outputs {
    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        self.files.push(path.clone());
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(dir) = self.created_dir {
            let _ = fs::remove_dir(dir);
        }
    }
}

fn with_outputs(f: impl FnOnce(&mut Outputs) -> Result<()>) -> Result<()> {
    let mut outputs = Outputs::default();
    let result = f(&mut outputs);
    if result.is_err() {
        outputs.discard();
    }
    result
}

fn simulate_config(args: &SimulateArgs, threads: Option<usize>) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<ExperimentConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let (Some(example), Some(case)) = (args.example, args.case) else {
                bail!("--example and --case are required without --config");
            };
            ExperimentConfig::new(example, case)
        }
    };
    if let Some(v) = args.example {
        config.example = v;
    }
    if let Some(v) = args.case {
        config.case = v;
    }
    if let Some(v) = args.n {
        config.n = v;
    }
    if let Some(v) = &args.k_list {
        config.k_list = v.clone();
    }
    if let Some(v) = &args.gamma_list {
        config.gamma_list = v.clone();
    }
    if let Some(v) = &args.methods {
        config.methods = v.clone();
    }
    if let Some(v) = args.reps {
        config.replications = v;
    }
    if let Some(v) = args.level {
        config.level = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if threads.is_some() {
        config.threads = threads;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_simulate(args: SimulateArgs, threads: Option<usize>) -> Result<()> {
    let config = simulate_config(&args, threads)?;
    with_outputs(|out| {
        if !args.out.exists() {
            fs::create_dir_all(&args.out)
                .with_context(|| format!("creating {}", args.out.display()))?;
            out.created_dir = Some(args.out.clone());
        }
        let report = match args.study {
            Study::Size => harness::run_size_power(&config)?,
            Study::Length => harness::run_ci_length(&config)?,
            Study::All => harness::run_all(&config)?,
        };
        let rendered = harness::summarize(std::slice::from_ref(&report))?;
        out.write(args.out.join("report.csv"), &rendered.csv)?;
        out.write(args.out.join("report.md"), &rendered.markdown)?;
        out.write(args.out.join("config.toml"), &config.to_toml())?;

        if args.timing {
            let timing = harness::run_timing(&config)?;
            out.write(
                args.out.join("timing.csv"),
                &harness::timing_to_csv(&timing.timing)?,
            )?;
            let md = harness::summarize(std::slice::from_ref(&timing))?.markdown;
            out.write(
                args.out.join("timing.md"),
                &format!("{md}Machine: {}\n", timing.machine),
            )?;
        }
        print!("{}", rendered.markdown);
        println!("Reports written to {}", args.out.display());
        Ok(())
    })
}

fn load(source: &DataSource, model: Option<ModelKind>) -> Result<LoadReport> {
    let Some(schema_path) = &source.schema else {
        bail!("--schema is required with --data");
    };
    if source.data.is_empty() {
        bail!("at least one --data file is required");
    }
    let mut schema = CsvSchema::from_file(schema_path)
        .with_context(|| format!("reading {}", schema_path.display()))?;
    if let Some(m) = model {
        schema.model = m;
    }
    let report = load_csv_files(&source.data, &schema)?;
    eprintln!(
        "loaded {} rows ({} read, {} dropped){}",
        report.dataset.nrows(),
        report.rows_read,
        report.dropped,
        report
            .event_rate()
            .map(|r| format!(", event rate {r:.5}"))
            .unwrap_or_default()
    );
    Ok(report)
}

fn partition_seed(seed: u64, rep: usize) -> u64 {
    rng::derive_seed(seed, &[rep as u64])
}

struct CoefficientRow {
    name: String,
    full: f64,
    dac_mean: f64,
    reject_share: f64,
    lo: f64,
    hi: f64,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    if args.reps < 1 {
        bail!("--reps must be at least 1");
    }
    let data = load(&args.source, args.model)?.dataset;
    let estimator = Estimator::for_kind(data.kind());
    let p = estimator.fit(&data, None).context("full-data fit")?;
    let dim = p.dim();

    let mut tests: Vec<Hypothesis> = (0..dim)
        .map(|j| Hypothesis::Coordinate { j, value: 0.0 })
        .collect();
    tests.extend((0..dim).map(|j| Hypothesis::Interval { j }));
    let mut sums = vec![0.0; dim];
    let mut rejections = vec![0usize; dim];
    let mut intervals = vec![(f64::NAN, f64::NAN); dim];
    for rep in 0..args.reps {
        let report = dac_el_infer(
            &data,
            args.k,
            estimator,
            &tests,
            args.level,
            partition_seed(args.seed, rep),
        )?;
        for (j, s) in sums.iter_mut().enumerate() {
            *s += report.estimate[j];
        }
        for outcome in report.outcomes {
            match outcome {
                Outcome::Test(t) => {
                    if let dacel::el::TestKind::Coordinate(j) = t.kind {
                        rejections[j] += t.reject as usize;
                    }
                }
                Outcome::Interval { j, lo, hi } if rep == 0 => intervals[j] = (lo, hi),
                Outcome::Interval { .. } => {}
            }
        }
    }

    let reps = args.reps as f64;
    let rows: Vec<CoefficientRow> = (0..dim)
        .map(|j| CoefficientRow {
            name: data.column_names()[j].clone(),
            full: p[j],
            dac_mean: sums[j] / reps,
            reject_share: rejections[j] as f64 / reps,
            lo: intervals[j].0,
            hi: intervals[j].1,
        })
        .collect();

    println!(
        "{} model, n = {}, K = {}, {} partition(s), level {}",
        data.kind(),
        data.nrows(),
        args.k,
        args.reps,
        args.level
    );
    println!(
        "{:<5} {:<16} {:>12} {:>12} {:>10} {:>26}",
        "j", "coefficient", "full MLE", "DAC-EL mean", "P(reject)", "interval (partition 1)"
    );
    for (j, r) in rows.iter().enumerate() {
        println!(
            "{:<5} {:<16} {:>12.6} {:>12.6} {:>10.3} {:>12.6} {:>12.6}",
            j + 1,
            r.name,
            r.full,
            r.dac_mean,
            r.reject_share,
            r.lo,
            r.hi
        );
    }

    if let Some(path) = &args.out {
        with_outputs(|out| {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "coordinate",
                "name",
                "full_estimate",
                "dac_mean",
                "reject_share",
                "ci_lo",
                "ci_hi",
            ])?;
            for (j, r) in rows.iter().enumerate() {
                w.write_record([
                    (j + 1).to_string(),
                    r.name.clone(),
                    r.full.to_string(),
                    r.dac_mean.to_string(),
                    r.reject_share.to_string(),
                    r.lo.to_string(),
                    r.hi.to_string(),
                ])?;
            }
            let text = String::from_utf8(w.into_inner()?)?;
            out.write(path.clone(), &text)
        })?;
    }
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        bail!("--grid must look like lo:hi:steps");
    };
    let lo: f64 = lo.trim().parse().context("grid lower bound")?;
    let hi: f64 = hi.trim().parse().context("grid upper bound")?;
    let steps: usize = steps.trim().parse().context("grid step count")?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || steps < 1 {
        bail!("--grid needs finite lo < hi and at least one step");
    }
    Ok((0..=steps)
        .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
        .collect())
}

fn profile_data(args: &ProfileArgs) -> Result<Dataset> {
    match args.example {
        Some(example) => Ok(datagen::generate(&DesignSpec::new(
            example, args.case, args.n, args.seed,
        )?)?),
        None => Ok(load(&args.source, None)?.dataset),
    }
}

fn cmd_profile(args: ProfileArgs) -> Result<()> {
    if args.example.is_none() && args.source.data.is_empty() {
        bail!("give either --data/--schema or --example");
    }
    let grid = parse_grid(&args.grid)?;
    let data = profile_data(&args)?;
    if args.coordinate < 1 || args.coordinate > data.ncols() {
        bail!("--coordinate must lie in 1..={}", data.ncols());
    }
    let estimator = Estimator::for_kind(data.kind());
    // Same split as the first partition of `analyze` under the same seed.
    let part = dac::Partition::new(data.nrows(), args.k, partition_seed(args.seed, 0))?;
    let points = dac::block_estimates(&data, &part, estimator)?.el_points()?;
    let profile = neg2_log_r_profile(&points, args.coordinate - 1, &grid)?;

    let mut text = String::from("c,statistic\n");
    for (c, s) in profile {
        text.push_str(&format!("{c},{s}\n"));
    }
    match &args.out {
        Some(path) => with_outputs(|out| out.write(path.clone(), &text)),
        None => io::stdout().write_all(text.as_bytes()).map_err(Into::into),
    }
}

fn configure_threads(threads: Option<usize>) -> Result<Option<usize>> {
    let threads = match threads {
        Some(0) => bail!("--threads must be positive"),
        Some(t) => Some(t),
        None => std::env::var(harness::THREADS_ENV)
            .ok()
            .and_then(|v| v.parse().ok()),
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()?;
    }
    Ok(threads)
}

fn run(cli: Cli) -> Result<()> {
    let threads = configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, threads),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Profile(args) => cmd_profile(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
