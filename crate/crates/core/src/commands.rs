//! Subcommand implementations behind the `tkgc` binary. Each one reads a
//! [`RunConfig`], writes its artifacts and returns a summary.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{
    load_checkpoint, save_checkpoint, write_toml, Checkpoint, CheckpointManifest, ConfigRecord,
    EpochLine, RunManifest, CHECKPOINT_MAGIC, PRECISION,
};
use crate::config::RunConfig;
use crate::data::{
    augment_reciprocal, build_dataset, load_dataset, load_raw, save_dataset, DatasetStats,
    FilterIndex, DATASET_MAGIC,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, DirectionMetrics, Metrics, Report, TiePolicy, FILTER_RULE};
use crate::grid::{grid_search, write_grid_csv, GridOutcome};
use crate::regularisers::norm_curves_csv;
use crate::train::{train_with, EpochRecord, TrainConfig};
use crate::types::DatasetSplits;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.json";
pub const GRID_FILE: &str = "grid.csv";
pub const GRID_MANIFEST_FILE: &str = "grid.toml";
pub const GRID_RESULTS_DIR: &str = "results";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(e).with_path(path)
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.require(&cfg.out_dir, "out_dir")?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir)
}

/// Loads an encoded dataset and adds reciprocal relations if missing.
pub fn load_training_data(path: &Path) -> Result<(DatasetSplits, String)> {
    let (splits, hash) = load_dataset(path)?;
    let splits = if splits.reciprocal { splits } else { augment_reciprocal(splits)? };
    Ok((splits, hash))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub stats: DatasetStats,
    pub dataset_hash: String,
    pub seconds: f64,
    pub output: PathBuf,
}

#[derive(Serialize)]
struct IngestManifest<'a> {
    dataset_hash: &'a str,
    seconds: f64,
    config: &'a RunConfig,
    stats: &'a DatasetStats,
}

/// Parses the raw splits, writes the encoded container and its manifest.
pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let started = Instant::now();
    let format = cfg.dataset_format()?;
    let opts = cfg.build_options()?;
    let read = |p: &Option<PathBuf>| -> Result<Vec<_>> {
        p.as_deref().map_or(Ok(Vec::new()), |p| load_raw(p, format))
    };
    let train = load_raw(cfg.require(&cfg.train, "train")?, format)?;
    let splits = build_dataset(&train, &read(&cfg.valid)?, &read(&cfg.test)?, opts)?;
    let output = cfg.require(&cfg.dataset, "dataset")?.clone();
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    save_dataset(&splits, &output)?;
    let dataset_hash = crate::data::dataset_hash(&splits);
    let stats = DatasetStats::of(&splits);
    let seconds = started.elapsed().as_secs_f64();
    let manifest = IngestManifest {
        dataset_hash: &dataset_hash,
        seconds,
        config: cfg,
        stats: &stats,
    };
    write_toml(&manifest, &sidecar(&output))?;
    Ok(IngestSummary {
        stats,
        dataset_hash,
        seconds,
        output,
    })
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
    pub best_epoch: Option<usize>,
    pub valid: Option<DirectionMetrics>,
    pub test: Option<DirectionMetrics>,
    pub history: Vec<EpochRecord>,
}

fn split_metrics(
    splits: &DatasetSplits,
    params: &crate::model::ModelParams,
    queries: &[crate::types::Quadruple],
    ties: TiePolicy,
) -> Result<Option<Metrics>> {
    if queries.is_empty() {
        return Ok(None);
    }
    let filter = FilterIndex::for_queries(splits, queries);
    evaluate(params, queries, &filter, ties).map(Some)
}

/// Trains one configuration and writes the best checkpoint, the run manifest
/// and the per-epoch history.
pub fn train(cfg: &RunConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainSummary> {
    let config: TrainConfig = cfg.train_config()?;
    let dataset = cfg.require(&cfg.dataset, "dataset")?;
    let dir = out_dir(cfg)?;
    let (splits, dataset_hash) = load_training_data(dataset)?;
    let outcome = train_with(&splits, &config, &mut on_epoch)?;
    let best = outcome.best_params().clone();
    let ties = cfg.tie_policy()?;
    let valid = split_metrics(&splits, &best.model, &splits.valid, ties)?;
    let test = split_metrics(&splits, &best.model, &splits.test, ties)?;

    let ckpt = Checkpoint {
        seed: config.seed,
        dataset_hash: dataset_hash.clone(),
        temporal: config.temporal,
        params: best,
    };
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let checkpoint_hash = save_checkpoint(&ckpt, &ckpt_path)?;
    write_history(&outcome.history, &dir.join(HISTORY_FILE))?;
    let best_epoch = outcome.best.as_ref().map(|b| b.epoch);
    let manifest = RunManifest {
        precision: PRECISION.into(),
        seed: config.seed,
        dataset_hash,
        threads: rayon::current_num_threads(),
        checkpoint_file: CHECKPOINT_FILE.into(),
        checkpoint_hash: checkpoint_hash.clone(),
        best_epoch,
        config: ConfigRecord::from(&config),
        checkpoint: CheckpointManifest::of(&ckpt),
        valid: valid.map(|m| m.overall),
        test: test.map(|m| m.overall),
        epochs: outcome.history.iter().map(EpochLine::from).collect(),
    };
    write_toml(&manifest, &dir.join(MANIFEST_FILE))?;
    Ok(TrainSummary {
        checkpoint: ckpt_path,
        checkpoint_hash,
        best_epoch,
        valid: manifest.valid,
        test: manifest.test,
        history: outcome.history,
    })
}

pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in history {
        w.serialize(EpochLine::from(r))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Evaluates a checkpoint on one split of the dataset it was trained on.
pub fn eval(cfg: &RunConfig) -> Result<Report> {
    let ckpt_path = cfg.require(&cfg.checkpoint, "checkpoint")?;
    let dataset = cfg.require(&cfg.dataset, "dataset")?;
    let (ckpt, checkpoint_hash) = load_checkpoint(ckpt_path)?;
    let (splits, dataset_hash) = load_training_data(dataset)?;
    if ckpt.dataset_hash != dataset_hash {
        return Err(Error::HashMismatch {
            expected: ckpt.dataset_hash,
            actual: dataset_hash,
        });
    }
    let split = cfg.split.as_deref().unwrap_or("test");
    let queries = match split {
        "test" => &splits.test,
        "valid" => &splits.valid,
        "train" => &splits.train,
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    let base: Vec<_> = queries
        .iter()
        .copied()
        .filter(|q| (q.relation as usize) < splits.num_base_relations())
        .collect();
    let ties = cfg.tie_policy()?;
    let filter = FilterIndex::for_queries(&splits, &base);
    let metrics = evaluate(&ckpt.params.model, &base, &filter, ties)?;
    let report = Report {
        split: split.to_string(),
        tie_policy: ties,
        filter: FILTER_RULE.into(),
        precision: PRECISION.into(),
        checkpoint_hash,
        dataset_hash,
        metrics,
    };
    let path = match &cfg.report {
        Some(p) => p.clone(),
        None => ckpt_path.with_file_name(REPORT_FILE),
    };
    fs::write(&path, serde_json::to_vec_pretty(&report)?).map_err(io_err(&path))?;
    Ok(report)
}

#[derive(Serialize)]
struct GridManifest<'a> {
    dataset_hash: &'a str,
    precision: &'a str,
    threads: usize,
    configurations: usize,
    computed: usize,
    resumed: usize,
    config: &'a RunConfig,
}

/// Runs a grid search, resuming from result files in `<out_dir>/results`.
pub fn grid(cfg: &RunConfig) -> Result<GridOutcome> {
    let (base, spec) = cfg.grid()?;
    let dataset = cfg.require(&cfg.dataset, "dataset")?;
    let dir = out_dir(cfg)?;
    let (splits, dataset_hash) = load_training_data(dataset)?;
    let outcome = grid_search(&splits, &base, &spec, Some(&dir.join(GRID_RESULTS_DIR)))?;
    let csv_path = dir.join(GRID_FILE);
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    write_grid_csv(&outcome.rows, file)?;
    write_toml(
        &GridManifest {
            dataset_hash: &dataset_hash,
            precision: PRECISION,
            threads: rayon::current_num_threads(),
            configurations: outcome.rows.len(),
            computed: outcome.computed,
            resumed: outcome.resumed,
            config: cfg,
        },
        &dir.join(GRID_MANIFEST_FILE),
    )?;
    Ok(outcome)
}

pub const DEFAULT_NORM_SAMPLES: usize = 401;

/// Norm-curve CSV; written to `output` when set.
pub fn plot_norms(cfg: &RunConfig) -> Result<String> {
    let curves = cfg.norm_curves()?;
    let (lo, hi) = (cfg.lo.unwrap_or(-2.0), cfg.hi.unwrap_or(2.0));
    let samples = cfg.samples.unwrap_or(DEFAULT_NORM_SAMPLES);
    if samples == 0 || lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::Config("need samples >= 1 and lo <= hi".into()));
    }
    let csv = norm_curves_csv(&curves, lo, hi, samples);
    if let Some(path) = &cfg.output {
        fs::write(path, &csv).map_err(io_err(path))?;
    }
    Ok(csv)
}

/// Human-readable description of a dataset container or checkpoint.
pub fn inspect(path: &Path) -> Result<String> {
    let mut magic = [0u8; 8];
    fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map_err(io_err(path))?;
    if &magic == DATASET_MAGIC {
        let (splits, hash) = load_dataset(path)?;
        Ok(format!(
            "kind\tdataset\nsha256\t{hash}\nreciprocal\t{}\nreserved_no_time\t{}\n{}\n",
            splits.reciprocal,
            splits.vocabulary.reserved_no_time(),
            DatasetStats::of(&splits)
        ))
    } else if &magic == CHECKPOINT_MAGIC {
        let (ckpt, hash) = load_checkpoint(path)?;
        Ok(format!(
            "# checkpoint sha256 {hash}\n{}",
            crate::checkpoint::to_toml(&CheckpointManifest::of(&ckpt))?
        ))
    } else {
        Err(Error::Format(format!(
            "{} is neither a dataset container nor a checkpoint",
            path.display()
        )))
    }
}
