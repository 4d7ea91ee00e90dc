//! Runs (algorithm, M, seed) cells, optionally on several worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use hamnet::baselines::train_gradient;
use hamnet::bio::train_bio;
use hamnet::dataset::LabeledDataset;
use hamnet::metrics::{capacity_report, train_encoder, CapacityReport};
use hamnet::{Algorithm, NetworkModel, Result};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub hidden: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub cell: Cell,
    /// Full configuration the cell ran under; re-running the cell with it
    /// reproduces the report bit for bit.
    pub config: String,
    pub report: std::result::Result<CapacityReport, String>,
    pub duration: Duration,
    pub version: &'static str,
}

pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &algorithm in &cfg.algorithms {
        for &hidden in &cfg.hidden_sizes {
            for &seed in &cfg.seeds {
                out.push(Cell {
                    algorithm,
                    hidden,
                    seed,
                });
            }
        }
    }
    out
}

pub fn train_cell(cfg: &ExperimentConfig, train: &LabeledDataset, cell: Cell) -> Result<NetworkModel> {
    match cell.algorithm {
        Algorithm::Bio => train_bio(train, cell.hidden, &cfg.bio_for(cell.seed)),
        algo => train_gradient(train, cell.hidden, &cfg.baseline_for(algo, cell.seed), &mut ()),
    }
}

/// Encoder training and capacity evaluation for a trained model.
pub fn evaluate_model(
    cfg: &ExperimentConfig,
    model: &NetworkModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<CapacityReport> {
    let encoder = train_encoder(model, train, &cfg.encoder_for(model.seed))?;
    capacity_report(model, &encoder, test, cfg.mi_samples, model.seed, cfg.eps_silent)
}

pub fn run_cell(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cell: Cell,
) -> RunRecord {
    let start = Instant::now();
    let report = train_cell(cfg, train, cell)
        .and_then(|model| evaluate_model(cfg, &model, train, test))
        .map_err(|e| e.to_string());
    let mut snapshot = cfg.clone();
    snapshot.algorithms = vec![cell.algorithm];
    snapshot.hidden_sizes = vec![cell.hidden];
    snapshot.seeds = vec![cell.seed];
    snapshot.jobs = 1;
    RunRecord {
        cell,
        config: snapshot.to_text(),
        report,
        duration: start.elapsed(),
        version: VERSION,
    }
}

/// Runs every cell of the grid on `cfg.jobs` threads. Each cell is computed
/// sequentially and independently, so results do not depend on the thread
/// count; records come back in grid order.
pub fn run_grid(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    mut progress: impl FnMut(&RunRecord) + Send,
) -> Vec<RunRecord> {
    let cells = cells(cfg);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunRecord>>> = Mutex::new(vec![None; cells.len()]);
    let progress = Mutex::new(&mut progress);
    let workers = cfg.jobs.clamp(1, cells.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&cell) = cells.get(i) else { break };
                let record = run_cell(cfg, train, test, cell);
                (progress.lock().expect("progress lock"))(&record);
                slots.lock().expect("slot lock")[i] = Some(record);
            });
        }
    });
    slots
        .into_inner()
        .expect("slot lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}
