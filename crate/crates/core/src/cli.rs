//! Operator entry points. Every run command echoes a TOML manifest of its
//! effective configuration before doing any work, so a finished experiment
//! can be rerun from its own output.

use crate::data::{DataError, Dataset};
use crate::determinism::PortableRng;
use crate::distribution::{
    run_in_process, run_worker, serve, MasterError, MasterOptions, MasterState,
    WorkerCheckpointing, WorkerError, WorkerOptions, DEFAULT_CHECKPOINT_EPOCHS,
    DEFAULT_CHECKPOINT_EVERY,
};
use crate::evolution::{SearchConfig, SearchState, SearchStateError};
use crate::genome::{
    deserialize_genome, genome_to_dot, serialize_genome, GenomeError, Provenance, WeightInitMode,
};
use crate::training::{
    evaluate, initialize_weights, modified_lenet, one_layer, train, two_layer, Hyperparameters,
    SigmaRule, TrainError, TrainOptions,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "convevo", version, about = "Evolves CNN topologies over a training budget")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a search with in-process training threads.
    Evolve(EvolveArgs),
    /// Serve work units to network workers.
    Master(MasterArgs),
    /// Train work units from a network master.
    Worker(WorkerArgs),
    /// Train one fixed benchmark network and report its accuracy.
    TrainBenchmark(BenchmarkArgs),
    /// Render a saved genome as Graphviz dot on stdout.
    ExportDot(ExportDotArgs),
    /// Summarize a search or master checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct DatasetFlags {
    /// IDX image file.
    #[arg(long)]
    images: PathBuf,
    /// IDX label file.
    #[arg(long)]
    labels: PathBuf,
    /// Zero-pixel border added around every image.
    #[arg(long, default_value_t = 0)]
    pad: usize,
    /// Keep only a deterministic sample of this many images.
    #[arg(long)]
    subset: Option<usize>,
    /// Seed for drawing --subset.
    #[arg(long, default_value_t = 1)]
    subset_seed: u64,
}

#[derive(Debug, Args)]
struct SearchFlags {
    #[arg(long, default_value_t = SearchConfig::default().population_size)]
    population_size: usize,
    /// Fraction of children bred by crossover once the population is full.
    #[arg(long, default_value_t = SearchConfig::default().crossover_rate)]
    crossover_rate: f64,
    /// Mutation operations applied per mutated child.
    #[arg(long, default_value_t = SearchConfig::default().mutations_per_genome)]
    mutations: u32,
    /// Training epochs per work unit.
    #[arg(long, default_value_t = SearchConfig::default().epochs)]
    epochs: u32,
    /// Matching result digests required to accept a unit.
    #[arg(long, default_value_t = SearchConfig::default().quorum)]
    quorum: u32,
    #[arg(long, default_value_t = SearchConfig::default().seed)]
    seed: u64,
    /// Child weight policy; epigenetic inherits trained parent filters.
    #[arg(long, value_enum, default_value_t = WeightInitFlag::Epigenetic)]
    weight_init: WeightInitFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightInitFlag {
    Epigenetic,
    Randomized,
}

impl WeightInitFlag {
    fn mode(self) -> WeightInitMode {
        match self {
            WeightInitFlag::Epigenetic => WeightInitMode::Epigenetic,
            WeightInitFlag::Randomized => WeightInitMode::Randomized,
        }
    }
}

#[derive(Debug, Args)]
struct HyperFlags {
    #[arg(long, default_value_t = Hyperparameters::default().momentum)]
    momentum: f64,
    #[arg(long, default_value_t = Hyperparameters::default().momentum_scale)]
    momentum_scale: f64,
    #[arg(long, default_value_t = Hyperparameters::default().momentum_limit)]
    momentum_limit: f64,
    #[arg(long, default_value_t = Hyperparameters::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = Hyperparameters::default().learning_rate_scale)]
    learning_rate_scale: f64,
    #[arg(long, default_value_t = Hyperparameters::default().learning_rate_limit)]
    learning_rate_limit: f64,
    #[arg(long, default_value_t = Hyperparameters::default().weight_decay)]
    weight_decay: f64,
    #[arg(long, default_value_t = Hyperparameters::default().weight_decay_scale)]
    weight_decay_scale: f64,
    #[arg(long, default_value_t = Hyperparameters::default().weight_decay_limit)]
    weight_decay_limit: f64,
}

impl HyperFlags {
    fn hyper(&self) -> Hyperparameters {
        Hyperparameters {
            momentum: self.momentum,
            momentum_scale: self.momentum_scale,
            momentum_limit: self.momentum_limit,
            learning_rate: self.learning_rate,
            learning_rate_scale: self.learning_rate_scale,
            learning_rate_limit: self.learning_rate_limit,
            weight_decay: self.weight_decay,
            weight_decay_scale: self.weight_decay_scale,
            weight_decay_limit: self.weight_decay_limit,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    dataset: DatasetFlags,
    #[command(flatten)]
    search: SearchFlags,
    #[command(flatten)]
    hyper: HyperFlags,
    /// In-process training threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Completed trainings to receive before stopping.
    #[arg(long, default_value_t = 100)]
    budget: u64,
    /// Master checkpoint file; resumed when it already exists.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Insertions between checkpoint saves.
    #[arg(long, default_value_t = DEFAULT_CHECKPOINT_EVERY)]
    checkpoint_every: u64,
    /// Insertion statistics CSV.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Where to write the best genome when the run ends.
    #[arg(long)]
    best_out: Option<PathBuf>,
    /// Where to write a copy of the echoed manifest.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MasterArgs {
    /// Address to listen on, e.g. 0.0.0.0:4878.
    #[arg(long)]
    listen: String,
    #[command(flatten)]
    search: SearchFlags,
    #[command(flatten)]
    hyper: HyperFlags,
    /// Width the workers' padded images will have.
    #[arg(long, default_value_t = 28)]
    input_x: u32,
    /// Height the workers' padded images will have.
    #[arg(long, default_value_t = 28)]
    input_y: u32,
    #[arg(long, default_value_t = 10)]
    classes: u32,
    /// Completed trainings to receive before stopping.
    #[arg(long, default_value_t = 100)]
    budget: u64,
    /// Master checkpoint file; resumed when it already exists.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Insertions between checkpoint saves.
    #[arg(long, default_value_t = DEFAULT_CHECKPOINT_EVERY)]
    checkpoint_every: u64,
    /// Insertion statistics CSV.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Where to write the best genome when the run ends.
    #[arg(long)]
    best_out: Option<PathBuf>,
    /// Where to write a copy of the echoed manifest.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    /// Master address, e.g. 127.0.0.1:4878.
    #[arg(long)]
    connect: String,
    #[command(flatten)]
    dataset: DatasetFlags,
    /// Local training checkpoint slot; survives a worker restart.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Epochs between local checkpoint saves.
    #[arg(long, default_value_t = DEFAULT_CHECKPOINT_EPOCHS)]
    checkpoint_epochs: u32,
    /// Leave cleanly after this many completed units.
    #[arg(long)]
    unit_limit: Option<u64>,
    /// Fault injection: corrupt every result by this much, for exercising
    /// quorum validation.
    #[arg(long)]
    perturb_first_weight: Option<f64>,
    /// Connection attempts before giving up (exponential backoff).
    #[arg(long, default_value_t = 6)]
    connect_attempts: u32,
    /// Where to write a copy of the echoed manifest.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Which fixed network to train.
    #[arg(long, value_enum)]
    which: BenchmarkKind,
    #[command(flatten)]
    dataset: DatasetFlags,
    /// IDX image file of the held-out test set.
    #[arg(long)]
    test_images: PathBuf,
    /// IDX label file of the held-out test set.
    #[arg(long)]
    test_labels: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    hyper: HyperFlags,
    /// Where to write a copy of the echoed manifest.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchmarkKind {
    #[value(alias = "one_layer")]
    OneLayer,
    #[value(alias = "two_layer")]
    TwoLayer,
    #[value(alias = "modified_lenet")]
    ModifiedLenet,
}

impl BenchmarkKind {
    fn name(self) -> &'static str {
        match self {
            BenchmarkKind::OneLayer => "one_layer",
            BenchmarkKind::TwoLayer => "two_layer",
            BenchmarkKind::ModifiedLenet => "modified_lenet",
        }
    }

    fn build(self, input_x: u32, input_y: u32, classes: u32) -> crate::genome::CnnGenome {
        match self {
            BenchmarkKind::OneLayer => one_layer(input_x, input_y, classes),
            BenchmarkKind::TwoLayer => two_layer(input_x, input_y, classes),
            BenchmarkKind::ModifiedLenet => modified_lenet(input_x, input_y, classes),
        }
    }
}

#[derive(Debug, Args)]
pub struct ExportDotArgs {
    /// Genome text file, as written by --best-out.
    genome: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Search or master checkpoint file.
    checkpoint: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid options:\n{}", .0.iter().map(|p| format!("  {p}")).collect::<Vec<_>>().join("\n"))]
    Options(Vec<String>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Search(#[from] SearchStateError),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Worker(#[from] WorkerError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("manifest: {0}")]
    Echo(#[from] toml::ser::Error),
}

/// The echoed configuration: with the dataset files, it fully determines a
/// single-worker run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    listen: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    connect: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    search: Option<SearchManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hyper: Option<Hyperparameters>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<DatasetManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    benchmark: Option<BenchmarkManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outputs: Option<OutputsManifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worker: Option<WorkerManifest>,
}

#[derive(Debug, Serialize)]
struct SearchManifest {
    population_size: usize,
    crossover_rate: f64,
    mutations: u32,
    epochs: u32,
    quorum: u32,
    seed: u64,
    weight_init: &'static str,
    input_x: u32,
    input_y: u32,
    classes: u32,
    operator_weights: [u32; 7],
    size_deltas: Vec<i64>,
    more_fit_crossover_rate: f64,
    less_fit_crossover_rate: f64,
    retry_budget: u32,
}

impl SearchManifest {
    fn from_config(config: &SearchConfig) -> SearchManifest {
        let w = &config.operator_weights;
        SearchManifest {
            population_size: config.population_size,
            crossover_rate: config.crossover_rate,
            mutations: config.mutations_per_genome,
            epochs: config.epochs,
            quorum: config.quorum,
            seed: config.seed,
            weight_init: config.weight_init.as_str(),
            input_x: config.input_x,
            input_y: config.input_y,
            classes: config.classes,
            operator_weights: [
                w.disable_edge,
                w.enable_edge,
                w.split_edge,
                w.add_edge,
                w.change_size,
                w.change_size_x,
                w.change_size_y,
            ],
            size_deltas: config.size_deltas.clone(),
            more_fit_crossover_rate: config.more_fit_crossover_rate,
            less_fit_crossover_rate: config.less_fit_crossover_rate,
            retry_budget: config.retry_budget,
        }
    }
}

#[derive(Debug, Serialize)]
struct DatasetManifest {
    images: String,
    labels: String,
    pad: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    subset: Option<usize>,
    subset_seed: u64,
}

impl DatasetManifest {
    fn from_flags(flags: &DatasetFlags) -> DatasetManifest {
        DatasetManifest {
            images: flags.images.display().to_string(),
            labels: flags.labels.display().to_string(),
            pad: flags.pad,
            subset: flags.subset,
            subset_seed: flags.subset_seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct BenchmarkManifest {
    which: &'static str,
    epochs: u32,
    seed: u64,
    test_images: String,
    test_labels: String,
}

#[derive(Debug, Serialize)]
struct OutputsManifest {
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<String>,
    checkpoint_every: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best: Option<String>,
}

#[derive(Debug, Serialize)]
struct WorkerManifest {
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<String>,
    checkpoint_epochs: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    unit_limit: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturb_first_weight: Option<f64>,
    connect_attempts: u32,
}

impl RunManifest {
    fn empty(command: &'static str) -> RunManifest {
        RunManifest {
            command,
            listen: None,
            connect: None,
            workers: None,
            budget: None,
            search: None,
            hyper: None,
            dataset: None,
            benchmark: None,
            outputs: None,
            worker: None,
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Evolve(args) => cmd_evolve(args, out),
        Command::Master(args) => cmd_master(args, out),
        Command::Worker(args) => cmd_worker(args, out),
        Command::TrainBenchmark(args) => cmd_train_benchmark(args, out),
        Command::ExportDot(args) => cmd_export_dot(args, out),
        Command::Inspect(args) => cmd_inspect(args, out),
    }
}

fn check_search(flags: &SearchFlags, problems: &mut Vec<String>) {
    if flags.population_size == 0 {
        problems.push("--population-size must be at least 1".into());
    }
    if !flags.crossover_rate.is_finite() || !(0.0..=1.0).contains(&flags.crossover_rate) {
        problems.push("--crossover-rate must lie in [0, 1]".into());
    }
    if flags.mutations == 0 {
        problems.push("--mutations must be at least 1".into());
    }
    if flags.epochs == 0 {
        problems.push("--epochs must be at least 1".into());
    }
    if flags.quorum == 0 {
        problems.push("--quorum must be at least 1".into());
    }
}

fn check_hyper(flags: &HyperFlags, problems: &mut Vec<String>) {
    let h = flags.hyper();
    let fields = [
        ("--momentum", h.momentum),
        ("--momentum-scale", h.momentum_scale),
        ("--momentum-limit", h.momentum_limit),
        ("--learning-rate", h.learning_rate),
        ("--learning-rate-scale", h.learning_rate_scale),
        ("--learning-rate-limit", h.learning_rate_limit),
        ("--weight-decay", h.weight_decay),
        ("--weight-decay-scale", h.weight_decay_scale),
        ("--weight-decay-limit", h.weight_decay_limit),
    ];
    for (name, value) in fields {
        if !value.is_finite() || value < 0.0 {
            problems.push(format!("{name} must be a finite non-negative number"));
        }
    }
    if h.learning_rate == 0.0 {
        problems.push("--learning-rate must be positive".into());
    }
}

fn check_dataset(flags: &DatasetFlags, problems: &mut Vec<String>) {
    if flags.subset == Some(0) {
        problems.push("--subset must keep at least 1 image".into());
    }
}

fn fail_on(problems: Vec<String>) -> Result<(), CliError> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Options(problems))
    }
}

fn load_dataset(flags: &DatasetFlags) -> Result<Dataset, CliError> {
    let data = Dataset::load(&flags.images, &flags.labels, flags.pad)?;
    Ok(match flags.subset {
        Some(count) => data.subset(count, flags.subset_seed),
        None => data,
    })
}

fn echo_manifest(
    manifest: &RunManifest,
    out: &mut dyn Write,
    copy: Option<&Path>,
) -> Result<(), CliError> {
    let text = toml::to_string(manifest)?;
    writeln!(out, "{text}")?;
    if let Some(path) = copy {
        fs::write(path, &text).map_err(|source| CliError::File { path: path.into(), source })?;
    }
    Ok(())
}

fn write_summary(out: &mut dyn Write, search: &SearchState) -> io::Result<()> {
    let pop = search.population();
    writeln!(out, "insertions {}", search.insertions())?;
    writeln!(out, "trainings {}", search.completed_trainings())?;
    writeln!(
        out,
        "population {}/{} evaluated {}",
        pop.len(),
        pop.capacity(),
        pop.evaluated().len()
    )?;
    let evaluated = pop.evaluated();
    match (evaluated.first(), evaluated.last()) {
        (Some(best), Some(worst)) => {
            let best_fit = best.fitness().value().expect("evaluated member");
            let worst_fit = worst.fitness().value().expect("evaluated member");
            writeln!(
                out,
                "fitness best {best_fit} (genome {}) worst {worst_fit}",
                best.genome_id()
            )?;
        }
        _ => writeln!(out, "fitness none")?,
    }
    for p in Provenance::ALL {
        writeln!(out, "inserted {} {}", p.as_str(), pop.inserted_count(p))?;
    }
    Ok(())
}

/// Builds the master, resuming when the checkpoint file already exists, and
/// says so on stdout because the resumed state overrides the search flags.
fn open_master(
    config: SearchConfig,
    options: MasterOptions,
    out: &mut dyn Write,
) -> Result<MasterState, CliError> {
    if let Some(path) = options.checkpoint_path.clone().filter(|p| p.exists()) {
        let master = MasterState::from_checkpoint_file(&path, options)?;
        writeln!(
            out,
            "resumed {} received {} insertions {}",
            path.display(),
            master.results_received(),
            master.search().insertions()
        )?;
        return Ok(master);
    }
    Ok(MasterState::new(config, options)?)
}

fn finish_master(
    master: MasterState,
    best_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    writeln!(out, "received {}", master.results_received())?;
    write_summary(out, master.search())?;
    if let Some(path) = best_out {
        match master.search().best() {
            Some(best) => fs::write(path, serialize_genome(best))
                .map_err(|source| CliError::File { path: path.into(), source })?,
            None => eprintln!("no evaluated genome yet; {} not written", path.display()),
        }
    }
    Ok(())
}

fn cmd_evolve(args: EvolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut problems = Vec::new();
    check_search(&args.search, &mut problems);
    check_hyper(&args.hyper, &mut problems);
    check_dataset(&args.dataset, &mut problems);
    if args.workers == 0 {
        problems.push("--workers must be at least 1".into());
    }
    if args.budget == 0 {
        problems.push("--budget must be at least 1".into());
    }
    if args.checkpoint_every == 0 {
        problems.push("--checkpoint-every must be at least 1".into());
    }
    if args.search.quorum > 1 && (args.search.quorum as usize) > args.workers {
        problems.push(format!(
            "--quorum {} needs at least that many --workers, got {}",
            args.search.quorum, args.workers
        ));
    }
    fail_on(problems)?;

    let data = load_dataset(&args.dataset)?;
    let config = SearchConfig {
        population_size: args.search.population_size,
        crossover_rate: args.search.crossover_rate,
        mutations_per_genome: args.search.mutations,
        epochs: args.search.epochs,
        hyper: args.hyper.hyper(),
        weight_init: args.search.weight_init.mode(),
        input_x: data.width() as u32,
        input_y: data.height() as u32,
        classes: data.classes() as u32,
        quorum: args.search.quorum,
        seed: args.search.seed,
        ..SearchConfig::default()
    };

    let manifest = RunManifest {
        workers: Some(args.workers),
        budget: Some(args.budget),
        search: Some(SearchManifest::from_config(&config)),
        hyper: Some(config.hyper),
        dataset: Some(DatasetManifest::from_flags(&args.dataset)),
        outputs: Some(OutputsManifest {
            checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
            checkpoint_every: args.checkpoint_every,
            stats: args.stats_out.as_ref().map(|p| p.display().to_string()),
            best: args.best_out.as_ref().map(|p| p.display().to_string()),
        }),
        ..RunManifest::empty("evolve")
    };
    echo_manifest(&manifest, out, args.manifest_out.as_deref())?;

    let options = MasterOptions {
        budget: args.budget,
        checkpoint_path: args.checkpoint.clone(),
        checkpoint_every: args.checkpoint_every,
        stats_path: args.stats_out.clone(),
    };
    let started = Instant::now();
    let master = Mutex::new(open_master(config, options, out)?);
    run_in_process(&master, &data, args.workers, None, DEFAULT_CHECKPOINT_EPOCHS)?;
    let master = master.into_inner().expect("worker threads joined");
    master.save_checkpoint()?;
    finish_master(master, args.best_out.as_deref(), out)?;
    eprintln!("evolve finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_master(args: MasterArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut problems = Vec::new();
    check_search(&args.search, &mut problems);
    check_hyper(&args.hyper, &mut problems);
    if args.budget == 0 {
        problems.push("--budget must be at least 1".into());
    }
    if args.checkpoint_every == 0 {
        problems.push("--checkpoint-every must be at least 1".into());
    }
    if args.input_x == 0 || args.input_y == 0 {
        problems.push("--input-x and --input-y must be at least 1".into());
    }
    if args.classes < 2 {
        problems.push("--classes must be at least 2".into());
    }
    fail_on(problems)?;

    let config = SearchConfig {
        population_size: args.search.population_size,
        crossover_rate: args.search.crossover_rate,
        mutations_per_genome: args.search.mutations,
        epochs: args.search.epochs,
        hyper: args.hyper.hyper(),
        weight_init: args.search.weight_init.mode(),
        input_x: args.input_x,
        input_y: args.input_y,
        classes: args.classes,
        quorum: args.search.quorum,
        seed: args.search.seed,
        ..SearchConfig::default()
    };

    let manifest = RunManifest {
        listen: Some(args.listen.clone()),
        budget: Some(args.budget),
        search: Some(SearchManifest::from_config(&config)),
        hyper: Some(config.hyper),
        outputs: Some(OutputsManifest {
            checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
            checkpoint_every: args.checkpoint_every,
            stats: args.stats_out.as_ref().map(|p| p.display().to_string()),
            best: args.best_out.as_ref().map(|p| p.display().to_string()),
        }),
        ..RunManifest::empty("master")
    };
    echo_manifest(&manifest, out, args.manifest_out.as_deref())?;

    let options = MasterOptions {
        budget: args.budget,
        checkpoint_path: args.checkpoint.clone(),
        checkpoint_every: args.checkpoint_every,
        stats_path: args.stats_out.clone(),
    };
    let started = Instant::now();
    let master = Arc::new(Mutex::new(open_master(config, options, out)?));
    let listener = TcpListener::bind(&args.listen)?;
    eprintln!("listening on {}", listener.local_addr()?);
    serve(listener, Arc::clone(&master))?;
    let master = Arc::try_unwrap(master)
        .ok()
        .expect("serve joined its connections")
        .into_inner()
        .expect("no poisoned lock");
    finish_master(master, args.best_out.as_deref(), out)?;
    eprintln!("master finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_worker(args: WorkerArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut problems = Vec::new();
    check_dataset(&args.dataset, &mut problems);
    if args.checkpoint_epochs == 0 {
        problems.push("--checkpoint-epochs must be at least 1".into());
    }
    if args.unit_limit == Some(0) {
        problems.push("--unit-limit must be at least 1".into());
    }
    if args.connect_attempts == 0 {
        problems.push("--connect-attempts must be at least 1".into());
    }
    if let Some(delta) = args.perturb_first_weight {
        if !delta.is_finite() {
            problems.push("--perturb-first-weight must be finite".into());
        }
    }
    fail_on(problems)?;

    let manifest = RunManifest {
        connect: Some(args.connect.clone()),
        dataset: Some(DatasetManifest::from_flags(&args.dataset)),
        worker: Some(WorkerManifest {
            checkpoint: args.checkpoint.as_ref().map(|p| p.display().to_string()),
            checkpoint_epochs: args.checkpoint_epochs,
            unit_limit: args.unit_limit,
            perturb_first_weight: args.perturb_first_weight,
            connect_attempts: args.connect_attempts,
        }),
        ..RunManifest::empty("worker")
    };
    echo_manifest(&manifest, out, args.manifest_out.as_deref())?;

    let data = load_dataset(&args.dataset)?;
    let options = WorkerOptions {
        checkpointing: args.checkpoint.map(|path| WorkerCheckpointing {
            path,
            every_epochs: args.checkpoint_epochs,
        }),
        perturb_first_weight: args.perturb_first_weight,
        unit_limit: args.unit_limit,
        max_connect_attempts: args.connect_attempts,
        ..WorkerOptions::default()
    };
    let started = Instant::now();
    let summary = run_worker(&args.connect, &data, &options)?;
    writeln!(out, "completed {} units", summary.units_completed)?;
    eprintln!("worker finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_train_benchmark(args: BenchmarkArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut problems = Vec::new();
    check_hyper(&args.hyper, &mut problems);
    check_dataset(&args.dataset, &mut problems);
    fail_on(problems)?;

    let manifest = RunManifest {
        dataset: Some(DatasetManifest::from_flags(&args.dataset)),
        benchmark: Some(BenchmarkManifest {
            which: args.which.name(),
            epochs: args.epochs,
            seed: args.seed,
            test_images: args.test_images.display().to_string(),
            test_labels: args.test_labels.display().to_string(),
        }),
        hyper: Some(args.hyper.hyper()),
        ..RunManifest::empty("train-benchmark")
    };
    echo_manifest(&manifest, out, args.manifest_out.as_deref())?;

    let train_data = load_dataset(&args.dataset)?;
    let test_data = Dataset::load(&args.test_images, &args.test_labels, args.dataset.pad)?;
    if (test_data.width(), test_data.height()) != (train_data.width(), train_data.height()) {
        return Err(CliError::Options(vec![format!(
            "test images are {}x{} but training images are {}x{}",
            test_data.width(),
            test_data.height(),
            train_data.width(),
            train_data.height()
        )]));
    }

    let classes = train_data.classes().max(test_data.classes()) as u32;
    let mut genome = args.which.build(
        train_data.width() as u32,
        train_data.height() as u32,
        classes,
    );
    initialize_weights(&mut genome, &mut PortableRng::new(args.seed), SigmaRule::Standard);

    let started = Instant::now();
    let report = train(
        &mut genome,
        &train_data,
        &TrainOptions {
            epochs: args.epochs,
            seed: args.seed,
            hyper: args.hyper.hyper(),
            checkpoint: None,
        },
    )?;
    let on_train = evaluate(&genome, &train_data);
    let on_test = evaluate(&genome, &test_data);
    writeln!(
        out,
        "network          train_error  train_predictions  test_error  test_predictions"
    )?;
    writeln!(
        out,
        "{:<16} {:<12.4} {:<18} {:<11.4} {}",
        args.which.name(),
        on_train.error_sum,
        format!("{:.2}%", 100.0 * on_train.accuracy()),
        on_test.error_sum,
        format!("{:.2}%", 100.0 * on_test.accuracy()),
    )?;
    writeln!(out, "best epoch {} of {}", report.best_epoch, args.epochs)?;
    eprintln!("benchmark finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_export_dot(args: ExportDotArgs, out: &mut dyn Write) -> Result<(), CliError> {
    eprintln!("export-dot {}", args.genome.display());
    let text = fs::read_to_string(&args.genome)
        .map_err(|source| CliError::File { path: args.genome.clone(), source })?;
    let genome = deserialize_genome(&text)?;
    write!(out, "{}", genome_to_dot(&genome))?;
    Ok(())
}

fn cmd_inspect(args: InspectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    eprintln!("inspect {}", args.checkpoint.display());
    let text = fs::read_to_string(&args.checkpoint)
        .map_err(|source| CliError::File { path: args.checkpoint.clone(), source })?;
    if text.starts_with("master_state") {
        let master = MasterState::from_checkpoint_text(&text, MasterOptions::default())?;
        writeln!(out, "master checkpoint")?;
        writeln!(out, "received {}", master.results_received())?;
        write_summary(out, master.search())?;
    } else {
        let search = SearchState::from_checkpoint_text(&text)?;
        writeln!(out, "search checkpoint")?;
        write_summary(out, &search)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_idx_images, write_idx_labels};
    use crate::evolution::InnovationRegistry;
    use clap::CommandFactory;
    use tempfile::tempdir;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    fn run_to_string(cli: Cli) -> Result<String, CliError> {
        let mut out = Vec::new();
        run(cli, &mut out)?;
        Ok(String::from_utf8(out).unwrap())
    }

    /// Reads the number following `key` in a summary line.
    fn reported(output: &str, key: &str) -> usize {
        output
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .unwrap()
            .parse()
            .unwrap()
    }

    /// Writes a learnable IDX pair: the label sets which half of the image
    /// is bright.
    fn idx_dataset(dir: &Path, count: usize, classes: u8) -> (String, String) {
        let (rows, cols) = (8usize, 8usize);
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for i in 0..count {
            let class = (i % classes as usize) as u8;
            labels.push(class);
            for y in 0..rows {
                for x in 0..cols {
                    let band = (y * classes as usize / rows) as u8;
                    let noise = ((i * 31 + x * 7 + y * 3) % 32) as u8;
                    pixels.push(if band == class { 200 + noise / 4 } else { noise });
                }
            }
        }
        let images_path = dir.join("images.idx");
        let labels_path = dir.join("labels.idx");
        fs::write(&images_path, write_idx_images(&pixels, count, rows, cols)).unwrap();
        fs::write(&labels_path, write_idx_labels(&labels)).unwrap();
        (
            images_path.display().to_string(),
            labels_path.display().to_string(),
        )
    }

    #[test]
    fn flags_are_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_bad_flag_is_reported_at_once() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 4, 2);
        let cli = parse(&[
            "convevo", "evolve", "--images", &images, "--labels", &labels,
            "--population-size", "0", "--crossover-rate", "1.5",
            "--epochs", "0", "--workers", "0", "--budget", "0",
        ]);
        let err = run_to_string(cli).unwrap_err();
        let text = err.to_string();
        for flag in [
            "--population-size", "--crossover-rate", "--epochs", "--workers", "--budget",
        ] {
            assert!(text.contains(flag), "missing {flag} in: {text}");
        }
    }

    #[test]
    fn in_process_quorum_needs_enough_workers() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 4, 2);
        let cli = parse(&[
            "convevo", "evolve", "--images", &images, "--labels", &labels,
            "--quorum", "2", "--workers", "1",
        ]);
        let err = run_to_string(cli).unwrap_err();
        assert!(err.to_string().contains("--quorum 2"));
    }

    #[test]
    fn crossover_rate_zero_inserts_no_crossover_children() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 12, 2);
        let stats = dir.path().join("stats.csv");
        let cli = parse(&[
            "convevo", "evolve", "--images", &images, "--labels", &labels,
            "--population-size", "4", "--epochs", "2", "--budget", "10",
            "--crossover-rate", "0", "--stats-out", stats.to_str().unwrap(),
        ]);
        let output = run_to_string(cli).unwrap();
        assert!(output.contains("command = \"evolve\""));
        assert!(output.contains("crossover_rate = 0.0"));
        assert!(output.contains("inserted crossover 0"));
        let csv = fs::read_to_string(&stats).unwrap();
        assert!(!csv.contains(",crossover,"), "stats hold no crossover rows:\n{csv}");
        // A row per insertion; results worse than the whole population are
        // rejected and leave no row, so read the count from the summary.
        assert_eq!(csv.lines().count(), 1 + reported(&output, "insertions "));
    }

    #[test]
    fn single_worker_runs_are_byte_identical() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 12, 2);
        let args = |stats: &Path| {
            vec![
                "convevo".to_string(), "evolve".to_string(),
                "--images".into(), images.clone(), "--labels".into(), labels.clone(),
                "--population-size".into(), "4".into(), "--epochs".into(), "2".into(),
                "--budget".into(), "8".into(),
                "--stats-out".into(), stats.display().to_string(),
            ]
        };
        let stats_a = dir.path().join("a.csv");
        let stats_b = dir.path().join("b.csv");
        let first = run_to_string(parse(
            &args(&stats_a).iter().map(String::as_str).collect::<Vec<_>>(),
        ))
        .unwrap();
        let second = run_to_string(parse(
            &args(&stats_b).iter().map(String::as_str).collect::<Vec<_>>(),
        ))
        .unwrap();
        // The stats path differs inside the manifest echo; everything after
        // the manifest block (and the CSV bytes themselves) must agree.
        let tail = |s: &str| s.split("\n\n").nth(1).unwrap().to_string();
        assert_eq!(tail(&first), tail(&second));
        assert_eq!(
            fs::read(&stats_a).unwrap(),
            fs::read(&stats_b).unwrap(),
            "same manifest, same insertion records"
        );
    }

    #[test]
    fn a_resumed_run_extends_the_stats_csv() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 12, 2);
        let stats = dir.path().join("stats.csv");
        let ckpt = dir.path().join("master.ckpt");
        let run_with_budget = |budget: &str| {
            run_to_string(parse(&[
                "convevo", "evolve", "--images", &images, "--labels", &labels,
                "--population-size", "4", "--epochs", "2", "--budget", budget,
                "--stats-out", stats.to_str().unwrap(),
                "--checkpoint", ckpt.to_str().unwrap(),
            ]))
            .unwrap()
        };
        run_with_budget("6");
        let second = run_with_budget("12");
        assert!(second.contains("resumed "), "second run picks up the checkpoint");
        let csv = fs::read_to_string(&stats).unwrap();
        let mut rows = csv.lines();
        assert!(rows.next().unwrap().starts_with("insertion,"));
        for (i, row) in rows.enumerate() {
            let (index, _) = row.split_once(',').unwrap();
            assert_eq!(index, (i + 1).to_string(), "gapless, duplicate-free numbering");
        }
        assert_eq!(csv.lines().count(), 1 + reported(&second, "insertions "));
    }

    #[test]
    fn benchmark_reports_are_deterministic() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 30, 2);
        let cli = || {
            parse(&[
                "convevo", "train-benchmark", "--which", "one-layer",
                "--images", &images, "--labels", &labels,
                "--test-images", &images, "--test-labels", &labels,
                "--epochs", "2",
            ])
        };
        let first = run_to_string(cli()).unwrap();
        let second = run_to_string(cli()).unwrap();
        assert_eq!(first, second);
        assert!(first.contains("one_layer"));
        assert!(first.contains("best epoch"));
    }

    #[test]
    fn an_untrained_benchmark_sits_near_chance() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 300, 10);
        let output = run_to_string(parse(&[
            "convevo", "train-benchmark", "--which", "one_layer",
            "--images", &images, "--labels", &labels,
            "--test-images", &images, "--test-labels", &labels,
            "--epochs", "0",
        ]))
        .unwrap();
        let row = output.lines().find(|l| l.starts_with("one_layer")).unwrap();
        let accuracy: f64 = row
            .split_whitespace()
            .last()
            .unwrap()
            .strip_suffix('%')
            .unwrap()
            .parse()
            .unwrap();
        assert!(accuracy < 35.0, "random weights predict near 10%: {row}");
    }

    #[test]
    fn export_dot_draws_the_whole_minimal_genome() {
        let dir = tempdir().unwrap();
        let mut registry = InnovationRegistry::new();
        let genome = crate::evolution::minimal_genome(&mut registry, 28, 28, 10);
        let path = dir.path().join("genome.txt");
        fs::write(&path, serialize_genome(&genome)).unwrap();
        let dot = run_to_string(parse(&["convevo", "export-dot", path.to_str().unwrap()])).unwrap();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches(" -> ").count(), 10);
        assert_eq!(dot.matches("[label=\"").count(), 21, "11 nodes plus 10 edges");
        assert!(!dot.contains("style=dashed"));
    }

    #[test]
    fn export_dot_dashes_disabled_edges() {
        let dir = tempdir().unwrap();
        let mut registry = InnovationRegistry::new();
        let mut genome = crate::evolution::minimal_genome(&mut registry, 6, 6, 3);
        genome.edges_mut()[0].enabled = false;
        let path = dir.path().join("genome.txt");
        fs::write(&path, serialize_genome(&genome)).unwrap();
        let dot = run_to_string(parse(&["convevo", "export-dot", path.to_str().unwrap()])).unwrap();
        assert!(dot.contains("style=dashed"));
    }

    #[test]
    fn inspect_sees_only_initial_insertions_on_a_fresh_search() {
        let dir = tempdir().unwrap();
        let mut state = SearchState::new(SearchConfig {
            population_size: 4,
            input_x: 6,
            input_y: 6,
            classes: 2,
            ..SearchConfig::default()
        });
        state.generate_work();
        let path = dir.path().join("search.ckpt");
        fs::write(&path, state.to_checkpoint_text()).unwrap();
        let output = run_to_string(parse(&["convevo", "inspect", path.to_str().unwrap()])).unwrap();
        assert!(output.starts_with("search checkpoint"));
        assert!(output.contains("inserted initial 1"));
        for p in Provenance::ALL {
            if p != Provenance::Initial {
                assert!(output.contains(&format!("inserted {} 0", p.as_str())));
            }
        }
        assert!(output.contains("fitness none"));
    }

    #[test]
    fn worker_fails_cleanly_on_a_dead_port() {
        let dir = tempdir().unwrap();
        let (images, labels) = idx_dataset(dir.path(), 4, 2);
        let addr = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap().to_string()
        };
        let cli = parse(&[
            "convevo", "worker", "--connect", &addr,
            "--images", &images, "--labels", &labels,
            "--connect-attempts", "2",
        ]);
        let err = run_to_string(cli).unwrap_err();
        assert!(matches!(err, CliError::Worker(WorkerError::Connect { attempts: 2, .. })));
        assert!(err.to_string().contains("after 2 attempts"));
    }
}
