//! Command-line front end. `cli_main` parses arguments, runs one subcommand
//! and maps failures onto exit codes: 0 success, 1 usage, 2 data, 3 solver.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::classifier::{self, TrainConfig, DEFAULT_C0, DEFAULT_C0_GRID, DEFAULT_C_CONST};
use crate::error::{Error, ErrorKind, Result};
use crate::harness::{self, CvPlan, ExperimentResult, OneVsRestResult, DEFAULT_C_GRID};
use crate::io::{self, CsvOptions, LabelColumn};
use crate::metrics::Summary;
use crate::synth::{self, Setting, SimSpec, DEFAULT_BLOCK_RHO, DEFAULT_BLOCK_SIZE, DEFAULT_MAHALANOBIS};
use crate::types::{Dataset, Method};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "PGLMC_THREADS";

/// Version accepted in the `schema_version` field of config files.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "pglmc", version, about = "Population-guided large margin classification")]
struct Cli {
    /// Worker threads (defaults to $PGLMC_THREADS, then the number of CPUs).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic training set and write it with its Bayes rule.
    Simulate(SimulateArgs),
    /// Train a classifier on a labelled CSV and write the model as JSON.
    Train(TrainArgs),
    /// Score a CSV with a saved model.
    Predict(PredictArgs),
    /// Repeated outer k-fold CV with inner tuning on a CSV dataset.
    Cv(CvArgs),
    /// Simulation replications comparing methods on all four measures.
    SimExp(SimExpArgs),
    /// Pairwise-distance concentration report across dimensions.
    Diag(DiagArgs),
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    #[arg(long, default_value = "independent")]
    setting: Setting,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    n_plus: usize,
    #[arg(long, default_value_t = 50)]
    n_minus: usize,
    #[arg(long, default_value_t = DEFAULT_MAHALANOBIS)]
    mahalanobis: f64,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: usize,
    #[arg(long, default_value_t = DEFAULT_BLOCK_RHO)]
    block_rho: f64,
}

impl SimArgs {
    fn spec(&self, seed: u64) -> SimSpec {
        SimSpec {
            setting: self.setting,
            d: self.d,
            n_plus: self.n_plus,
            n_minus: self.n_minus,
            mahalanobis_target: self.mahalanobis,
            block_size: self.block_size,
            block_rho: self.block_rho,
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    seed: u64,
    /// Also write a balanced test set with this many points per class.
    #[arg(long, default_value_t = 0)]
    test_per_class: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct CsvArgs {
    #[arg(long, default_value = ",")]
    delimiter: String,
    #[arg(long)]
    no_header: bool,
    /// `last`, a zero-based index, or a header name.
    #[arg(long, default_value = "last")]
    label_column: String,
}

impl CsvArgs {
    fn options(&self) -> Result<CsvOptions> {
        let delimiter = match self.delimiter.as_str() {
            "\\t" | "tab" => b'\t',
            s if s.len() == 1 => s.as_bytes()[0],
            s => return Err(Error::InvalidConfig(format!("delimiter must be one byte, got '{s}'"))),
        };
        Ok(CsvOptions {
            delimiter,
            has_header: !self.no_header,
            label_column: self.label_column.parse::<LabelColumn>()?,
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    /// Raw class treated as +1; without it labels must already be ±1.
    #[arg(long)]
    positive_class: Option<String>,
    #[arg(long, default_value = "pglmc")]
    method: Method,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// JSON config with a `train` section.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    /// Every column is a feature (no label column).
    #[arg(long)]
    unlabeled: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct PlanArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    outer_folds: Option<usize>,
    #[arg(long)]
    inner_folds: Option<usize>,
    /// Comma-separated C₀ candidates.
    #[arg(long, value_delimiter = ',')]
    c0_grid: Option<Vec<f64>>,
    /// Comma-separated population-constant candidates.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    /// JSON config with a `plan` section.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    /// Raw class treated as +1, or `one-vs-rest-all`; without it labels must be ±1.
    #[arg(long)]
    positive_class: Option<String>,
    #[arg(long, default_value = "pglmc", value_delimiter = ',')]
    methods: Vec<Method>,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SimExpArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value = "pglmc,svm,bayes", value_delimiter = ',')]
    methods: Vec<Method>,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 2000)]
    test_per_class: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct DiagArgs {
    #[arg(long, default_value = "independent")]
    setting: Setting,
    #[arg(long, default_value_t = 20)]
    n_per_class: usize,
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    dims: Vec<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Experiment config file. Every section is optional; flags given on the
/// command line take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub plan: Option<PlanSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub replications: Option<usize>,
    pub outer_folds: Option<usize>,
    pub inner_folds: Option<usize>,
    pub c0_grid: Option<Vec<f64>>,
    pub c_grid: Option<Vec<f64>>,
    pub standardize: Option<bool>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let cfg: ConfigFile =
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config file: {e}")))?;
    if cfg.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

fn read_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile {
            schema_version: CONFIG_SCHEMA_VERSION,
            ..ConfigFile::default()
        }),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", p.display())))?;
            parse_config(&text)
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Solver => EXIT_SOLVER,
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a count, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    match thread_count(cli.threads)? {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        _ => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Cv(a) => cv(a),
        Command::SimExp(a) => sim_exp(a),
        Command::Diag(a) => diag(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let spec = a.sim.spec(a.seed);
    let (train, bayes) = synth::generate(&spec)?;
    fs::create_dir_all(&a.out_dir)?;
    io::write_dataset_csv(&train, create(&a.out_dir.join("train.csv"))?)?;
    io::write_json(&bayes, a.out_dir.join("bayes.json"))?;
    if a.test_per_class > 0 {
        let test = synth::generate_test(&spec, a.test_per_class)?;
        io::write_dataset_csv(&test, create(&a.out_dir.join("test.csv"))?)?;
    }
    Ok(())
}

fn load_binary(path: &Path, csv: &CsvArgs, positive: Option<&str>) -> Result<Dataset> {
    let opts = csv.options()?;
    match positive {
        None => io::load_dataset(path, &opts),
        Some(p) => io::binarize_class(&io::load_csv(path, &opts)?, p),
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = read_config(&a.config)?;
    let mut config = cfg.train.unwrap_or_default();
    if let Some(v) = a.c0 {
        config.c0 = v;
    }
    if let Some(v) = a.c {
        config.c_const = v;
    }
    if let Some(v) = a.tol {
        config.tol = v;
    }
    if a.max_iter.is_some() {
        config.max_iter = a.max_iter;
    }
    config.validate()?;
    let data = load_binary(&a.data, &a.csv, a.positive_class.as_deref())?;
    let model = classifier::train(a.method, &data, &config)?;
    io::save_model(&model, &a.out)
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = io::load_model(&a.model)?;
    let features = if a.unlabeled {
        read_unlabeled(&a.data, &a.csv.options()?)?
    } else {
        io::load_csv(&a.data, &a.csv.options()?)?.features
    };
    let scores = classifier::score_matrix(&model, features.view())?;
    let mut w = create(&a.out)?;
    io::write_scores_csv(scores.as_slice().expect("contiguous scores"), &mut w)?;
    w.flush()?;
    Ok(())
}

/// Feature-only CSV: parsed by appending a dummy label column.
fn read_unlabeled(path: &Path, opts: &CsvOptions) -> Result<ndarray::Array2<f64>> {
    let delim = opts.delimiter as char;
    let text = fs::read_to_string(path)?;
    let augmented: String = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| format!("{l}{delim}0\n"))
        .collect();
    let opts = CsvOptions {
        label_column: LabelColumn::Last,
        ..opts.clone()
    };
    Ok(io::parse_csv(augmented.as_bytes(), &opts)?.features)
}

fn build_plan(a: &PlanArgs, method: Method, default_standardize: bool) -> Result<CvPlan> {
    let section = read_config(&a.config)?.plan.unwrap_or_default();
    let c0s = a
        .c0_grid
        .clone()
        .or(section.c0_grid)
        .unwrap_or_else(|| DEFAULT_C0_GRID.to_vec());
    let cs = a
        .c_grid
        .clone()
        .or(section.c_grid)
        .unwrap_or_else(|| DEFAULT_C_GRID.to_vec());
    let plan = CvPlan {
        outer_folds: a.outer_folds.or(section.outer_folds).unwrap_or(5),
        inner_folds: a.inner_folds.or(section.inner_folds).unwrap_or(5),
        replications: a.reps.or(section.replications).unwrap_or(10),
        base_seed: a.seed,
        tuning_grid: harness::grid_from(method, &c0s, &cs),
        standardize: section.standardize.unwrap_or(default_standardize),
    };
    plan.validate()?;
    Ok(plan)
}

#[derive(Serialize)]
struct MethodReport<'a> {
    method: Method,
    plan: &'a CvPlan,
    summary: Option<Summary>,
    result: &'a ExperimentResult,
}

#[derive(Serialize)]
struct OneVsRestReport<'a> {
    plan: &'a CvPlan,
    result: &'a OneVsRestResult,
}

fn cv(a: CvArgs) -> Result<()> {
    let opts = a.csv.options()?;
    let standardize = !a.no_standardize;
    fs::create_dir_all(&a.out_dir)?;
    let one_vs_rest = a.positive_class.as_deref() == Some("one-vs-rest-all");

    let mut flat: Vec<ExperimentResult> = Vec::new();
    let mut reports = Vec::new();
    let mut ovr = Vec::new();
    let table = if one_vs_rest || a.positive_class.is_some() {
        Some(io::load_csv(&a.data, &opts)?)
    } else {
        None
    };
    let data = match (&table, a.positive_class.as_deref()) {
        (Some(_), _) if one_vs_rest => None,
        (Some(t), Some(p)) => Some(io::binarize_class(t, p)?),
        _ => Some(io::load_dataset(&a.data, &opts)?),
    };

    for &method in &a.methods {
        let plan = build_plan(&a.plan, method, standardize)?;
        match &data {
            Some(d) => {
                let result = harness::run_cv_experiment(d, &plan, method)?;
                reports.push((plan, result));
            }
            None => {
                let result = harness::one_vs_rest_runs(table.as_ref().unwrap(), &plan, method)?;
                ovr.push((plan, result));
            }
        }
    }

    if one_vs_rest {
        let json: Vec<OneVsRestReport> = ovr
            .iter()
            .map(|(plan, result)| OneVsRestReport { plan, result })
            .collect();
        for (_, r) in &ovr {
            flat.extend(r.runs.iter().map(|run| run.result.clone()));
        }
        write_json_file(&json, &a.out_dir.join("results.json"))?;
    } else {
        let json: Vec<MethodReport> = reports
            .iter()
            .map(|(plan, result)| MethodReport {
                method: result.method,
                plan,
                summary: result.summary().ok(),
                result,
            })
            .collect();
        write_json_file(&json, &a.out_dir.join("results.json"))?;
        flat.extend(reports.into_iter().map(|(_, r)| r));
    }
    let mut w = create(&a.out_dir.join("results.csv"))?;
    io::write_results_csv(&flat, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json_file<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    io::write_json(value, path)
}

fn sim_exp(a: SimExpArgs) -> Result<()> {
    if a.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods given".into()));
    }
    let spec = a.sim.spec(a.plan.seed);
    // One plan drives every method; the population constant grid only
    // applies to the population-guided method.
    let plan = build_plan(&a.plan, Method::Pglmc, false)?;
    let svm_plan = CvPlan {
        tuning_grid: dedup_c0(&plan.tuning_grid),
        ..plan.clone()
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut results = Vec::with_capacity(a.methods.len());
    for &method in &a.methods {
        let p = if method == Method::Pglmc { &plan } else { &svm_plan };
        results.extend(harness::run_sim_experiment(&spec, p, &[method], a.test_per_class)?);
    }
    let json: Vec<MethodReport> = results
        .iter()
        .map(|result| MethodReport {
            method: result.method,
            plan: if result.method == Method::Pglmc { &plan } else { &svm_plan },
            summary: result.summary().ok(),
            result,
        })
        .collect();
    write_json_file(&json, &a.out_dir.join("results.json"))?;
    let mut w = create(&a.out_dir.join("results.csv"))?;
    io::write_results_csv(&results, &mut w)?;
    w.flush()?;
    Ok(())
}

fn dedup_c0(grid: &[TrainConfig]) -> Vec<TrainConfig> {
    let mut out: Vec<TrainConfig> = Vec::new();
    for cfg in grid {
        if !out.iter().any(|c| c.c0 == cfg.c0) {
            out.push(TrainConfig::new(cfg.c0, DEFAULT_C_CONST));
        }
    }
    if out.is_empty() {
        out.push(TrainConfig::new(DEFAULT_C0, DEFAULT_C_CONST));
    }
    out
}

fn diag(a: DiagArgs) -> Result<()> {
    let spec = SimSpec::new(a.setting, a.dims.first().copied().unwrap_or(1), a.n_per_class, a.n_per_class, a.seed);
    let report = synth::hdlss_diagnostics(&spec, &a.dims)?;
    io::write_json(&report, &a.out)
}
