//! Command-line front end. Each subcommand maps to one `cmd_*` function that
//! tests and examples can call directly.
//!
//! Settings are layered as built-in defaults, then an optional JSON config
//! file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    l1_diameter, privacy_check, test_error, write_epsilon_csv, EpsilonObserver, PrivacyVerdict,
    RoundErrorReport,
};
use crate::dataset::{
    load_libsvm, partition, train_test_split, Dataset, DatasetError, IndexBase, ParseOptions,
    PartitionMode, PartitionSpec, PartyDataset,
};
use crate::federation::{
    closed_form, train_allin, train_simfl, train_solo, train_tfl, CommLedger, FederationError,
    ScheduleKind, TrainingSchedule,
};
use crate::gbdt::{GbdtError, GbdtModel, GbdtParams, LogisticLoss};
use crate::lsh::{default_num_functions, preprocess, LshConfig, LshError, Preprocessed};

pub const DATA_DIR_ENV: &str = "SIMFL_DATA_DIR";
pub const FAST_NUM_TREES: usize = 100;
pub const PREPROCESS_FILE: &str = "preprocess.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EPSILON_FILE: &str = "epsilon.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(#[from] DatasetError),
    #[error(
        "privacy violation: L = {num_functions} hash functions with d = {dimension} features \
         lets hash values be inverted; choose L < d or pass --allow-insecure-lsh"
    )]
    Privacy {
        num_functions: usize,
        dimension: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lsh(#[from] LshError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse(DatasetError::Io { .. }) => 1,
            CliError::Parse(_) => 3,
            CliError::Privacy { .. } => 4,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Simfl,
    Solo,
    Allin,
    Tfl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Simfl, Method::Solo, Method::Allin, Method::Tfl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Simfl => "simfl",
            Method::Solo => "solo",
            Method::Allin => "allin",
            Method::Tfl => "tfl",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub split: u64,
    pub partition: u64,
    pub lsh: u64,
    pub tie: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            split: 1,
            partition: 2,
            lsh: 3,
            tie: 4,
        }
    }
}

/// Everything a run depends on. Serialized verbatim into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Separate test file; when absent the dataset is split.
    pub test_dataset: Option<PathBuf>,
    pub train_fraction: f64,
    pub one_based_indices: bool,
    pub mode: PartitionMode,
    pub theta: f64,
    pub parties: usize,
    pub lsh_window: f64,
    /// `None` selects `min(40, d - 1)`.
    pub lsh_functions: Option<usize>,
    pub gbdt: GbdtParams,
    pub schedule: ScheduleKind,
    pub methods: Vec<Method>,
    pub seeds: Seeds,
    pub allow_insecure_lsh: bool,
    /// Evaluates the error bound per round; needs the quadratic-time
    /// diameter of the training set.
    pub report_bound: bool,
    pub bound_delta: f64,
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            test_dataset: None,
            train_fraction: 0.75,
            one_based_indices: true,
            mode: PartitionMode::Unbalanced,
            theta: 0.8,
            parties: 2,
            lsh_window: 4.0,
            lsh_functions: None,
            gbdt: GbdtParams::default(),
            schedule: ScheduleKind::RoundRobin,
            methods: Method::ALL.to_vec(),
            seeds: Seeds::default(),
            allow_insecure_lsh: false,
            report_bound: false,
            bound_delta: 0.05,
            out: PathBuf::from("simfl-out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.dataset.as_os_str().is_empty() {
            return bad("no dataset given".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            ));
        }
        if self.parties == 0 {
            return bad("at least one party is required".into());
        }
        if self.mode == PartitionMode::Unbalanced && !(self.theta >= 0.0 && self.theta <= 1.0) {
            return bad(format!("theta {} outside [0, 1]", self.theta));
        }
        if !(self.lsh_window > 0.0 && self.lsh_window.is_finite()) {
            return bad(format!("lsh window {} must be positive", self.lsh_window));
        }
        if self.lsh_functions == Some(0) {
            return bad("at least one hash function is required".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if !(self.bound_delta > 0.0 && self.bound_delta < 1.0) {
            return bad(format!("delta {} outside (0, 1)", self.bound_delta));
        }
        self.gbdt
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn partition_spec(&self) -> PartitionSpec {
        match self.mode {
            PartitionMode::Balanced => PartitionSpec::balanced(self.parties, self.seeds.partition),
            PartitionMode::Unbalanced => {
                PartitionSpec::unbalanced(self.theta, self.parties, self.seeds.partition)
            }
        }
    }

    pub fn lsh_config(&self, dimension: usize) -> LshConfig {
        LshConfig {
            window: self.lsh_window,
            num_functions: self
                .lsh_functions
                .unwrap_or_else(|| default_num_functions(dimension)),
            seed: self.seeds.lsh,
        }
    }

    fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            index_base: if self.one_based_indices {
                IndexBase::One
            } else {
                IndexBase::Zero
            },
            dimension: None,
        }
    }
}

/// Flags shared by `preprocess`, `train` and `sweep`. Every flag overrides
/// the corresponding config-file entry.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// JSON file with a (partial) run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// LIBSVM file; relative paths that do not exist are looked up in the data directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Separate LIBSVM test file instead of a random split.
    #[arg(long)]
    pub test_dataset: Option<PathBuf>,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub parties: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "lsh-r")]
    pub lsh_r: Option<f64>,
    #[arg(long = "lsh-l")]
    pub lsh_l: Option<usize>,
    #[arg(long)]
    pub seed_split: Option<u64>,
    #[arg(long)]
    pub seed_partition: Option<u64>,
    #[arg(long)]
    pub seed_lsh: Option<u64>,
    #[arg(long)]
    pub seed_tie: Option<u64>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub allow_insecure_lsh: bool,
    /// Evaluate the per-round error bound (quadratic in the training size).
    #[arg(long)]
    pub report_bound: bool,
    /// Use 100 trees unless --trees is given.
    #[arg(long)]
    pub fast: bool,
    /// Read feature indices as 0-based.
    #[arg(long)]
    pub zero_based: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Balanced,
    Unbalanced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    RoundRobin,
    Contiguous,
}

fn resolve_dataset(path: &Path, data_dir: Option<&Path>) -> PathBuf {
    match data_dir {
        Some(dir) if path.is_relative() && !path.exists() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

impl RunArgs {
    /// Merges the config file and flags over the defaults and validates the result.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            c.dataset = v.clone();
        }
        if let Some(v) = &self.test_dataset {
            c.test_dataset = Some(v.clone());
        }
        let dir = self.data_dir.as_deref();
        c.dataset = resolve_dataset(&c.dataset, dir);
        c.test_dataset = c.test_dataset.map(|p| resolve_dataset(&p, dir));

        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(c.train_fraction, self.train_fraction);
        set!(c.parties, self.parties);
        set!(c.theta, self.theta);
        set!(c.gbdt.max_depth, self.depth);
        set!(c.gbdt.learning_rate, self.learning_rate);
        set!(c.gbdt.lambda, self.lambda);
        set!(c.gbdt.gamma, self.gamma);
        set!(c.lsh_window, self.lsh_r);
        set!(c.seeds.split, self.seed_split);
        set!(c.seeds.partition, self.seed_partition);
        set!(c.seeds.lsh, self.seed_lsh);
        set!(c.seeds.tie, self.seed_tie);
        set!(c.out, self.out.clone());
        if let Some(mode) = self.mode {
            c.mode = match mode {
                ModeArg::Balanced => PartitionMode::Balanced,
                ModeArg::Unbalanced => PartitionMode::Unbalanced,
            };
        }
        if let Some(s) = self.schedule {
            c.schedule = match s {
                ScheduleArg::RoundRobin => ScheduleKind::RoundRobin,
                ScheduleArg::Contiguous => ScheduleKind::Contiguous,
            };
        }
        if self.fast {
            c.gbdt.num_trees = FAST_NUM_TREES;
        }
        set!(c.gbdt.num_trees, self.trees);
        if let Some(l) = self.lsh_l {
            c.lsh_functions = Some(l);
        }
        if let Some(m) = &self.methods {
            let mut m = m.clone();
            m.sort();
            m.dedup();
            c.methods = m;
        }
        c.allow_insecure_lsh |= self.allow_insecure_lsh;
        c.report_bound |= self.report_bound;
        if self.zero_based {
            c.one_based_indices = false;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Clone, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "test")]
    pub test: PathBuf,
    #[arg(long, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub zero_based: bool,
    /// Appends a `model,dataset,test_error` row to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Theta,
    Parties,
}

#[derive(Args, Clone, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// Comma-separated axis values; defaults to 0.6,0.7,0.8,0.9 for theta
    /// and 2..=5 for parties.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
}

#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Hash all parties and build the similarity matrices.
    Preprocess(RunArgs),
    /// Train the selected methods and write models plus a manifest.
    Train(RunArgs),
    /// Test error of a saved model on a LIBSVM file.
    Evaluate(EvaluateArgs),
    /// Repeat training over a range of theta or party counts.
    Sweep(SweepArgs),
}

#[derive(Parser, Clone, Debug)]
#[command(
    name = "simfl",
    version,
    about = "Federated GBDT simulator with LSH-based instance similarity"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Training and test data plus the party split of the training part.
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub parties: Vec<PartyDataset>,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    let opts = config.parse_options();
    let full = load_libsvm(&config.dataset, &opts)?;
    let (train, test) = match &config.test_dataset {
        Some(path) => {
            let test = load_libsvm(path, &opts)?;
            let d = full.dimension.max(test.dimension);
            let mut train = full;
            train.dimension = d;
            let mut test = test;
            test.dimension = d;
            (train, test)
        }
        None => train_test_split(&full, config.train_fraction, config.seeds.split)?,
    };
    let parties = partition(&train, &config.partition_spec())?;
    Ok(Prepared {
        train,
        test,
        parties,
    })
}

fn check_privacy(
    config: &RunConfig,
    lsh: &LshConfig,
    dimension: usize,
) -> Result<PrivacyVerdict, CliError> {
    let verdict = privacy_check(lsh.num_functions, dimension);
    if verdict == PrivacyVerdict::Inadmissible && !config.allow_insecure_lsh {
        return Err(CliError::Privacy {
            num_functions: lsh.num_functions,
            dimension,
        });
    }
    Ok(verdict)
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessSummary {
    pub num_parties: usize,
    pub num_instances: usize,
    pub num_functions: usize,
    pub dimension: usize,
    pub preprocessing_bytes: u64,
    pub privacy: PrivacyVerdict,
}

fn run_preprocess(
    config: &RunConfig,
    prepared: &Prepared,
) -> Result<(Preprocessed, CommLedger, PrivacyVerdict), CliError> {
    let lsh = config.lsh_config(prepared.train.dimension);
    let privacy = check_privacy(config, &lsh, prepared.train.dimension)?;
    let mut ledger = CommLedger::new();
    let pre = preprocess(&prepared.parties, &lsh, config.seeds.tie, &mut ledger)?;
    Ok((pre, ledger, privacy))
}

/// Writes the hash tables and similarity matrices to `<out>/preprocess.json`.
pub fn cmd_preprocess(config: &RunConfig) -> Result<PreprocessSummary, CliError> {
    let prepared = prepare(config)?;
    let (pre, ledger, privacy) = run_preprocess(config, &prepared)?;
    create_out(&config.out)?;
    pre.save_json(
        &config.out.join(PREPROCESS_FILE),
        ledger.preprocessing_bytes,
    )?;
    Ok(PreprocessSummary {
        num_parties: prepared.parties.len(),
        num_instances: prepared.train.len(),
        num_functions: pre.config.num_functions,
        dimension: pre.dimension,
        preprocessing_bytes: ledger.preprocessing_bytes,
        privacy,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub preprocessing_bytes: u64,
    pub per_tree_bytes: Vec<u64>,
    pub training_bytes: u64,
    /// Closed-form values the measured bytes are expected to equal.
    pub expected_preprocessing_bytes: u64,
    pub expected_per_tree_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    /// `simfl`, `allin`, `tfl` or `solo_p<party>`.
    pub name: String,
    pub test_error: f64,
    pub model_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ledger: Option<LedgerSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub name: String,
    pub dimension: usize,
    pub train_instances: usize,
    pub test_instances: usize,
    pub party_sizes: Vec<usize>,
    pub party_class_counts: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub data: DataSummary,
    pub lsh: LshConfig,
    pub privacy: PrivacyVerdict,
    pub schedule: Vec<usize>,
    pub results: Vec<MethodResult>,
    /// Per-round approximation error of the SimFL trees.
    pub epsilon: Vec<RoundErrorReport>,
}

impl Manifest {
    pub fn error_of(&self, name: &str) -> Option<f64> {
        self.results
            .iter()
            .find(|r| r.name == name)
            .map(|r| r.test_error)
    }
}

/// Trains every requested method, saves one model per method (one per party
/// for SOLO) and returns the manifest, which is also written to disk.
pub fn cmd_train(config: &RunConfig) -> Result<Manifest, CliError> {
    let prepared = prepare(config)?;
    train_prepared(config, &prepared)
}

fn train_prepared(config: &RunConfig, prepared: &Prepared) -> Result<Manifest, CliError> {
    let Prepared {
        train,
        test,
        parties,
    } = prepared;
    let lsh = config.lsh_config(train.dimension);
    let privacy = privacy_check(lsh.num_functions, train.dimension);
    if config.methods.contains(&Method::Simfl) {
        check_privacy(config, &lsh, train.dimension)?;
    }
    create_out(&config.out)?;

    let m = parties.len() as u64;
    let n = train.len() as u64;
    let depth = config.gbdt.max_depth as u32;
    let schedule = TrainingSchedule::new(config.schedule, config.gbdt.num_trees, parties.len());
    let mut results = Vec::new();
    let mut epsilon = Vec::new();

    let mut save =
        |name: String, model: &GbdtModel, ledger: Option<LedgerSummary>| -> Result<(), CliError> {
            let file = format!("model_{name}.json");
            write_file(&config.out.join(&file), model.to_json()?.as_bytes())?;
            results.push(MethodResult {
                test_error: test_error(model, test),
                name,
                model_file: file,
                ledger,
            });
            Ok(())
        };

    for method in &config.methods {
        match method {
            Method::Simfl => {
                let (pre, pre_ledger, _) = run_preprocess(config, prepared)?;
                pre.save_json(
                    &config.out.join(PREPROCESS_FILE),
                    pre_ledger.preprocessing_bytes,
                )?;
                let diameter = config.report_bound.then(|| l1_diameter(&train.instances));
                let mut observer = EpsilonObserver::new(diameter, config.bound_delta);
                let outcome = train_simfl(
                    parties,
                    &pre,
                    &config.gbdt,
                    &schedule,
                    &LogisticLoss,
                    &mut observer,
                )?;
                let ledger = LedgerSummary {
                    preprocessing_bytes: pre_ledger.preprocessing_bytes,
                    per_tree_bytes: outcome.ledger.per_tree_bytes(),
                    training_bytes: outcome.ledger.training_bytes(),
                    expected_preprocessing_bytes: closed_form::preprocessing_bytes(
                        m,
                        n,
                        lsh.num_functions as u64,
                    ),
                    expected_per_tree_bytes: closed_form::per_tree_bytes(n, depth, m),
                };
                epsilon = observer.reports;
                save("simfl".into(), &outcome.model, Some(ledger))?;
            }
            Method::Solo => {
                for party in parties {
                    let model = train_solo(party, &config.gbdt, &LogisticLoss)?;
                    save(format!("solo_p{}", party.party_id), &model, None)?;
                }
            }
            Method::Allin => {
                let model = train_allin(parties, &config.gbdt, &LogisticLoss)?;
                save("allin".into(), &model, None)?;
            }
            Method::Tfl => {
                let outcome = train_tfl(parties, &config.gbdt, &schedule, &LogisticLoss)?;
                let ledger = LedgerSummary {
                    preprocessing_bytes: 0,
                    per_tree_bytes: outcome.ledger.per_tree_bytes(),
                    training_bytes: outcome.ledger.training_bytes(),
                    expected_preprocessing_bytes: 0,
                    expected_per_tree_bytes: closed_form::tree_broadcast_bytes(depth, m),
                };
                save("tfl".into(), &outcome.model, Some(ledger))?;
            }
        }
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        data: DataSummary {
            name: train.name.clone(),
            dimension: train.dimension,
            train_instances: train.len(),
            test_instances: test.len(),
            party_sizes: parties.iter().map(PartyDataset::len).collect(),
            party_class_counts: parties
                .iter()
                .map(|p| {
                    let pos = p.instances.iter().filter(|x| x.label == 1).count();
                    [p.len() - pos, pos]
                })
                .collect(),
        },
        lsh,
        privacy,
        schedule: schedule.assignment.clone(),
        results,
        epsilon,
    };
    write_file(
        &config.out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    if !manifest.epsilon.is_empty() {
        let path = config.out.join(EPSILON_FILE);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        write_epsilon_csv(&manifest.epsilon, file)?;
    }
    Ok(manifest)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<f64, CliError> {
    let model = GbdtModel::load(&args.model)?;
    let opts = ParseOptions {
        index_base: if args.zero_based {
            IndexBase::Zero
        } else {
            IndexBase::One
        },
        dimension: None,
    };
    let test_path = resolve_dataset(&args.test, args.data_dir.as_deref());
    let test = load_libsvm(&test_path, &opts)?;
    let err = test_error(&model, &test);
    if let Some(path) = &args.csv {
        let fresh = !path.exists();
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        let mut w = csv::Writer::from_writer(file);
        if fresh {
            w.write_record(["model", "dataset", "test_error"])?;
        }
        w.write_record([
            args.model.display().to_string(),
            test_path.display().to_string(),
            err.to_string(),
        ])?;
        w.flush().map_err(io_err(path))?;
    }
    Ok(err)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub method: String,
    pub test_error: f64,
}

/// One training run per axis value, each in its own subdirectory of `out`;
/// the combined table goes to `<out>/sweep_<axis>.csv`.
pub fn cmd_sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    create_out(&config.out)?;
    let mut rows = Vec::new();
    for &value in values {
        let mut run = config.clone();
        let label = match axis {
            SweepAxis::Theta => {
                run.theta = value;
                run.mode = PartitionMode::Unbalanced;
                format!("theta_{value}")
            }
            SweepAxis::Parties => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(CliError::Config(format!(
                        "party count {value} is not a positive integer"
                    )));
                }
                run.parties = value as usize;
                format!("parties_{value}")
            }
        };
        run.out = config.out.join(label);
        run.validate()?;
        let manifest = cmd_train(&run)?;
        rows.extend(manifest.results.iter().map(|r| SweepRow {
            axis,
            value,
            method: r.name.clone(),
            test_error: r.test_error,
        }));
    }
    let name = match axis {
        SweepAxis::Theta => "sweep_theta.csv",
        SweepAxis::Parties => "sweep_parties.csv",
    };
    let path = config.out.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["axis", "value", "method", "test_error"])?;
    for r in &rows {
        w.write_record([
            format!("{:?}", r.axis).to_lowercase(),
            r.value.to_string(),
            r.method.clone(),
            r.test_error.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(rows)
}

fn default_sweep_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Theta => vec![0.6, 0.7, 0.8, 0.9],
        SweepAxis::Parties => vec![2.0, 3.0, 4.0, 5.0],
    }
}

fn print_results(manifest: &Manifest) {
    for r in &manifest.results {
        println!("{:<10} test_error {:.4}", r.name, r.test_error);
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Preprocess(args) => {
            let summary = cmd_preprocess(&args.resolve()?)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Train(args) => {
            let config = args.resolve()?;
            print_results(&cmd_train(&config)?);
            println!("manifest: {}", config.out.join(MANIFEST_FILE).display());
        }
        Command::Evaluate(args) => {
            println!("test_error {}", cmd_evaluate(args)?);
        }
        Command::Sweep(args) => {
            let config = args.run.resolve()?;
            let values = args
                .values
                .clone()
                .unwrap_or_else(|| default_sweep_values(args.axis));
            for r in cmd_sweep(&config, args.axis, &values)? {
                println!(
                    "{:?} {} {:<10} {:.4}",
                    r.axis, r.value, r.method, r.test_error
                );
            }
        }
    }
    Ok(())
}

/// Runs the command line in `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"dataset": "x.txt", "parties": 3, "theta": 0.7}"#).unwrap();
        let args = RunArgs {
            config: Some(cfg),
            theta: Some(0.9),
            fast: true,
            ..Default::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.parties, 3);
        assert_eq!(c.theta, 0.9);
        assert_eq!(c.gbdt.num_trees, FAST_NUM_TREES);
        assert_eq!(c.gbdt.max_depth, 8);
    }

    #[test]
    fn explicit_trees_beat_fast() {
        let args = RunArgs {
            dataset: Some("x".into()),
            fast: true,
            trees: Some(7),
            ..Default::default()
        };
        assert_eq!(args.resolve().unwrap().gbdt.num_trees, 7);
    }

    #[test]
    fn invalid_config_is_config_error() {
        let args = RunArgs {
            dataset: Some("x".into()),
            theta: Some(1.5),
            ..Default::default()
        };
        let err = args.resolve().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let no_data = RunArgs::default().resolve().unwrap_err();
        assert_eq!(no_data.exit_code(), 2);
    }

    #[test]
    fn data_dir_resolves_missing_relative_paths() {
        let p = resolve_dataset(Path::new("a9a"), Some(Path::new("/data")));
        assert_eq!(p, PathBuf::from("/data/a9a"));
        let abs = resolve_dataset(Path::new("/x/a9a"), Some(Path::new("/data")));
        assert_eq!(abs, PathBuf::from("/x/a9a"));
    }

    #[test]
    fn methods_flag_parses() {
        let cli = Cli::try_parse_from([
            "simfl",
            "train",
            "--dataset",
            "d",
            "--methods",
            "tfl,simfl",
            "--mode",
            "balanced",
        ])
        .unwrap();
        let Command::Train(args) = cli.command else {
            panic!("expected train");
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.methods, vec![Method::Simfl, Method::Tfl]);
        assert_eq!(c.mode, PartitionMode::Balanced);
    }
}
