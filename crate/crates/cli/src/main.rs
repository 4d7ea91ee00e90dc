use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hamnet::dataset::{load_mnist_subset, LabeledDataset};
use hamnet::persist::{load_model, save_model};
use hamnet::{Algorithm, Error, NetworkModel};
use hamnet_cli::config::ExperimentConfig;
use hamnet_cli::grid::{self, Cell, RunRecord};
use hamnet_cli::report;

/// Exit codes.
const EXIT_VERDICT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_MODEL: u8 = 5;

#[derive(Parser)]
#[command(name = "hamnet", version, about = "Hebbian associative network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory holding the four MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set bio.epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one (algorithm, M, seed) cell and write a model file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algo: Algorithm,
        #[arg(long)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Model path; defaults to `<algo>_M<hidden>_s<seed>.hamnet`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the stochastic encoder to a trained model and print one CSV row.
    Evaluate {
        #[command(flatten)]
        common: Common,
        model: PathBuf,
        #[arg(long)]
        eps_silent: Option<f64>,
    },
    /// Run the full algorithm × M × seed grid and write CSV and markdown.
    #[command(name = "reproduce-table2")]
    ReproduceTable2 {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        eps_silent: Option<f64>,
    },
    /// Print a model file's metadata.
    Inspect { model: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, err: impl ToString) -> Self {
        Self {
            code,
            message: err.to_string(),
        }
    }
}

/// Classifies errors raised while training or evaluating.
fn run_failure(err: Error) -> Failure {
    let code = match &err {
        Error::Config(_) | Error::OddHiddenSize(_) => EXIT_CONFIG,
        Error::BadMagic { .. }
        | Error::TruncatedPayload { .. }
        | Error::CountMismatch { .. }
        | Error::DatasetTooSmall(_)
        | Error::EmptyData
        | Error::Io { .. } => EXIT_DATA,
        Error::BadModelMagic
        | Error::VersionMismatch(_)
        | Error::TruncatedFile(_)
        | Error::Metadata(_) => EXIT_MODEL,
        Error::NonFiniteUpdate(_) | Error::ZeroSynapses | Error::ShapeMismatch { .. } => {
            EXIT_NUMERIC
        }
    };
    Failure::new(code, err)
}

fn build_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    }
    if let Some(dir) = &common.data_dir {
        cfg.data_dir = dir.clone();
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::new(EXIT_CONFIG, format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    }
    Ok(cfg)
}

fn validated(cfg: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    cfg.validate().map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    Ok(cfg)
}

fn load_data(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset), Failure> {
    load_mnist_subset(&cfg.data_dir, &cfg.digits).map_err(|e| {
        Failure::new(EXIT_DATA, format!("loading {}: {e}", cfg.data_dir.display()))
    })
}

fn read_model(path: &Path) -> Result<NetworkModel, Failure> {
    let model = load_model(path).map_err(|e| Failure::new(EXIT_MODEL, e))?;
    model
        .validate()
        .map_err(|e| Failure::new(EXIT_MODEL, e))?;
    Ok(model)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn cmd_train(
    common: &Common,
    algo: Algorithm,
    hidden: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg = build_config(common)?;
    cfg.algorithms = vec![algo];
    cfg.hidden_sizes = vec![hidden];
    cfg.seeds = vec![seed];
    let cfg = validated(cfg)?;
    let (train, test) = load_data(&cfg)?;
    let model = grid::train_cell(&cfg, &train, Cell { algorithm: algo, hidden, seed })
        .map_err(run_failure)?;
    let accuracy = model
        .accuracy(&test.inputs, &test.labels)
        .map_err(run_failure)?;
    let path = out.unwrap_or_else(|| PathBuf::from(format!("{algo}_M{hidden}_s{seed}.hamnet")));
    save_model(&model, &path).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    println!("{algo} M={hidden} seed={seed} test_accuracy={accuracy} model={}", path.display());
    Ok(())
}

fn cmd_evaluate(common: &Common, path: &Path, eps_silent: Option<f64>) -> Result<(), Failure> {
    let model = read_model(path)?;
    let mut cfg = build_config(common)?;
    if let Some(eps) = eps_silent {
        cfg.eps_silent = eps;
    }
    cfg.algorithms = vec![model.algorithm];
    cfg.hidden_sizes = vec![model.hidden_size()];
    cfg.seeds = vec![model.seed];
    let cfg = validated(cfg)?;
    let (train, test) = load_data(&cfg)?;
    if model.input_dim() != train.input_dim() || model.num_classes() != train.num_classes {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!(
                "model is {}→{} classes, data is {}→{} classes",
                model.input_dim(),
                model.num_classes(),
                train.input_dim(),
                train.num_classes
            ),
        ));
    }
    let started = std::time::Instant::now();
    let report = grid::evaluate_model(&cfg, &model, &train, &test).map_err(run_failure)?;
    let record = RunRecord {
        cell: Cell {
            algorithm: model.algorithm,
            hidden: model.hidden_size(),
            seed: model.seed,
        },
        config: cfg.to_text(),
        report: Ok(report),
        duration: started.elapsed(),
        version: grid::VERSION,
    };
    println!("{}", report::CSV_HEADER);
    println!("{}", report::csv_row(&record));
    Ok(())
}

fn cmd_reproduce(
    common: &Common,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    eps_silent: Option<f64>,
) -> Result<bool, Failure> {
    let mut cfg = build_config(common)?;
    if let Some(out) = out {
        cfg.out = out;
    }
    if let Some(jobs) = jobs {
        cfg.jobs = jobs;
    }
    if let Some(eps) = eps_silent {
        cfg.eps_silent = eps;
    }
    let cfg = validated(cfg)?;
    let (train, test) = load_data(&cfg)?;
    fs::create_dir_all(&cfg.out)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", cfg.out.display())))?;
    write(&cfg.out.join("config.txt"), &cfg.to_text())?;

    let total = grid::cells(&cfg).len();
    let mut done = 0;
    let records = grid::run_grid(&cfg, &train, &test, |r| {
        done += 1;
        let status = match &r.report {
            Ok(rep) => format!("accuracy {:.4}, nonsilent {}", rep.test_accuracy, rep.nonsilent),
            Err(e) => format!("FAILED: {e}"),
        };
        eprintln!(
            "[{done}/{total}] {} M={} seed={} {status} ({:.1}s)",
            r.cell.algorithm,
            r.cell.hidden,
            r.cell.seed,
            r.duration.as_secs_f64()
        );
    });

    let runs_dir = cfg.out.join("runs");
    fs::create_dir_all(&runs_dir)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", runs_dir.display())))?;
    for r in &records {
        let c = r.cell;
        let mut text = format!(
            "# hamnet {} run {} M={} seed={} ({:.1}s)\n",
            r.version,
            c.algorithm,
            c.hidden,
            c.seed,
            r.duration.as_secs_f64()
        );
        if let Err(e) = &r.report {
            text.push_str(&format!("# FAILED: {e}\n"));
        }
        text.push_str(&r.config);
        write(&runs_dir.join(format!("{}_M{}_s{}.txt", c.algorithm, c.hidden, c.seed)), &text)?;
    }

    let verdicts = report::verdicts(&records, train.input_dim());
    let csv = report::render_csv(&records);
    let md = report::render_markdown(&records, &verdicts);
    write(&cfg.out.join("table2.csv"), &csv)?;
    write(&cfg.out.join("table2.md"), &md)?;
    println!("{md}");
    Ok(verdicts.iter().all(|v| v.pass))
}

fn cmd_inspect(path: &Path) -> Result<(), Failure> {
    let model = read_model(path)?;
    println!("algo={}", model.algorithm);
    println!("inputs={}", model.input_dim());
    println!("hidden={}", model.hidden_size());
    println!("classes={}", model.num_classes());
    println!("seed={}", model.seed);
    println!("hidden_bias={}", u8::from(model.hidden_bias.is_some()));
    for (k, v) in &model.hyperparameters {
        println!("param.{k}={v}");
    }
    let zeros = model.w_hidden.as_slice().iter().filter(|&&w| w == 0.0).count();
    println!("w_hidden_zeros={zeros}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { common, algo, hidden, seed, out } => {
            cmd_train(&common, algo, hidden, seed, out)
        }
        Command::Evaluate { common, model, eps_silent } => cmd_evaluate(&common, &model, eps_silent),
        Command::ReproduceTable2 { common, out, jobs, eps_silent } => {
            match cmd_reproduce(&common, out, jobs, eps_silent) {
                Ok(true) => Ok(()),
                Ok(false) => return ExitCode::from(EXIT_VERDICT),
                Err(f) => Err(f),
            }
        }
        Command::Inspect { model } => cmd_inspect(&model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
