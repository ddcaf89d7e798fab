//! Cartesian hyperparameter search with resumable per-configuration results.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::ConfigRecord;
use crate::data::FilterIndex;
use crate::error::{Error, Result};
use crate::eval::{evaluate, DirectionMetrics, TiePolicy};
use crate::model::{ModelKind, ModelSpec};
use crate::regularisers::TemporalRegSpec;
use crate::train::{train, TrainConfig};
use crate::types::DatasetSplits;

/// Axes of the search. An empty axis keeps the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSpec {
    pub model: Vec<ModelKind>,
    pub rank: Vec<usize>,
    pub temporal: Vec<TemporalRegSpec>,
    /// Overrides the exponent of the temporal regulariser.
    pub p: Vec<u32>,
    pub hidden: Vec<usize>,
    pub lambda_emb: Vec<f64>,
    pub lambda_time: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub seed: Vec<u64>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl GridSpec {
    /// Every configuration of the grid, in row-major order of the axes above.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = vec![*base];
        let mut expand = |f: &dyn Fn(&TrainConfig) -> Vec<TrainConfig>| {
            out = out.iter().flat_map(f).collect();
        };
        expand(&|c| {
            axis(&self.model, c.model.kind)
                .into_iter()
                .map(|kind| TrainConfig {
                    model: respec(c.model, kind, c.model.rank),
                    ..*c
                })
                .collect()
        });
        expand(&|c| {
            axis(&self.rank, c.model.rank)
                .into_iter()
                .map(|d| TrainConfig {
                    model: respec(c.model, c.model.kind, d),
                    ..*c
                })
                .collect()
        });
        expand(&|c| {
            axis(&self.temporal, c.temporal)
                .into_iter()
                .map(|t| TrainConfig {
                    temporal: TemporalRegSpec {
                        hidden: if t.is_recurrent() && t.hidden == 0 { c.temporal.hidden } else { t.hidden },
                        ..t
                    },
                    ..*c
                })
                .collect()
        });
        expand(&|c| {
            axis(&self.p, c.temporal.p)
                .into_iter()
                .map(|p| TrainConfig {
                    temporal: TemporalRegSpec { p, ..c.temporal },
                    ..*c
                })
                .collect()
        });
        expand(&|c| {
            axis(&self.hidden, c.temporal.hidden)
                .into_iter()
                .map(|hidden| TrainConfig {
                    temporal: TemporalRegSpec { hidden, ..c.temporal },
                    ..*c
                })
                .collect()
        });
        expand(&|c| {
            axis(&self.lambda_emb, c.lambda_emb)
                .into_iter()
                .map(|lambda_emb| TrainConfig { lambda_emb, ..*c })
                .collect()
        });
        expand(&|c| {
            axis(&self.lambda_time, c.lambda_time)
                .into_iter()
                .map(|lambda_time| TrainConfig { lambda_time, ..*c })
                .collect()
        });
        expand(&|c| {
            axis(&self.learning_rate, c.learning_rate)
                .into_iter()
                .map(|learning_rate| TrainConfig { learning_rate, ..*c })
                .collect()
        });
        expand(&|c| {
            axis(&self.batch_size, c.batch_size)
                .into_iter()
                .map(|batch_size| TrainConfig { batch_size, ..*c })
                .collect()
        });
        expand(&|c| {
            axis(&self.seed, c.seed)
                .into_iter()
                .map(|seed| TrainConfig { seed, ..*c })
                .collect()
        });
        out
    }
}

// Keeps explicit ChronoR splits when only the kind is unchanged.
fn respec(old: ModelSpec, kind: ModelKind, rank: usize) -> ModelSpec {
    if kind == old.kind && rank == old.rank {
        old
    } else if kind == ModelKind::ChronoR {
        ModelSpec {
            conj_tail: old.conj_tail,
            ..ModelSpec::new(kind, rank)
        }
    } else {
        ModelSpec::new(kind, rank)
    }
}

/// Result of one grid cell, persisted as JSON for resumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub id: String,
    pub config: ConfigRecord,
    pub valid: Option<DirectionMetrics>,
    pub test: Option<DirectionMetrics>,
    pub best_epoch: Option<usize>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl GridRow {
    pub fn valid_mrr(&self) -> Option<f64> {
        self.valid.map(|m| m.mrr)
    }
}

/// Stable identifier of a configuration.
pub fn config_id(config: &TrainConfig) -> String {
    let json = serde_json::to_vec(&ConfigRecord::from(config)).expect("config serializes");
    crate::data::hex_digest(&json)[..16].to_string()
}

/// Trains one configuration and evaluates the best-on-validation parameters
/// on the validation and test splits.
pub fn run_config(splits: &DatasetSplits, config: &TrainConfig) -> GridRow {
    let started = Instant::now();
    let mut row = GridRow {
        id: config_id(config),
        config: config.into(),
        valid: None,
        test: None,
        best_epoch: None,
        seconds: 0.0,
        error: None,
    };
    let result = (|| -> Result<_> {
        let out = train(splits, config)?;
        let params = &out.best_params().model;
        let split_metrics = |q: &[_]| -> Result<Option<DirectionMetrics>> {
            if q.is_empty() {
                return Ok(None);
            }
            let filter = FilterIndex::for_queries(splits, q);
            Ok(Some(evaluate(params, q, &filter, TiePolicy::Pessimistic)?.overall))
        };
        Ok((
            split_metrics(&splits.valid)?,
            split_metrics(&splits.test)?,
            out.best.as_ref().map(|b| b.epoch),
        ))
    })();
    match result {
        Ok((v, t, e)) => {
            row.valid = v;
            row.test = t;
            row.best_epoch = e;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row.seconds = started.elapsed().as_secs_f64();
    row
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Rows sorted by validation MRR, best first; failed rows last.
    pub rows: Vec<GridRow>,
    pub computed: usize,
    pub resumed: usize,
}

fn result_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

/// Runs every configuration not already present in `results_dir` (when
/// given), in parallel, and returns the ranked table.
pub fn grid_search(
    splits: &DatasetSplits,
    base: &TrainConfig,
    grid: &GridSpec,
    results_dir: Option<&Path>,
) -> Result<GridOutcome> {
    let configs = grid.configs(base);
    if let Some(dir) = results_dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io(e).with_path(dir))?;
    }
    let mut seen = std::collections::HashSet::new();
    let mut done = Vec::new();
    let mut pending = Vec::new();
    for c in configs {
        let id = config_id(&c);
        if !seen.insert(id.clone()) {
            continue;
        }
        let stored = results_dir
            .map(|d| result_path(d, &id))
            .filter(|p| p.exists())
            .and_then(|p| fs::read(p).ok())
            .and_then(|b| serde_json::from_slice::<GridRow>(&b).ok());
        match stored {
            Some(row) => done.push(row),
            None => pending.push(c),
        }
    }
    let resumed = done.len();
    let fresh: Vec<GridRow> = pending
        .par_iter()
        .map(|c| -> Result<GridRow> {
            let row = run_config(splits, c);
            if let Some(dir) = results_dir {
                let path = result_path(dir, &row.id);
                let tmp = path.with_extension("json.tmp");
                fs::write(&tmp, serde_json::to_vec_pretty(&row)?).map_err(|e| Error::Io(e).with_path(&tmp))?;
                fs::rename(&tmp, &path).map_err(|e| Error::Io(e).with_path(&path))?;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let computed = fresh.len();
    let mut rows: Vec<GridRow> = done.into_iter().chain(fresh).collect();
    rank_rows(&mut rows);
    Ok(GridOutcome {
        rows,
        computed,
        resumed,
    })
}

/// Sorts by validation MRR descending; rows without a score go last, and ties
/// keep a stable order by id.
pub fn rank_rows(rows: &mut [GridRow]) {
    rows.sort_by(|a, b| {
        let key = |r: &GridRow| r.valid_mrr().unwrap_or(f64::NEG_INFINITY);
        key(b).total_cmp(&key(a)).then_with(|| a.id.cmp(&b.id))
    });
}

#[derive(Serialize)]
struct CsvRow<'a> {
    rank: usize,
    id: &'a str,
    model: &'a str,
    d: usize,
    d_j: usize,
    d_t: usize,
    temporal_regulariser: &'a str,
    hidden: usize,
    lambda_emb: f64,
    lambda_time: f64,
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    valid_mrr: Option<f64>,
    valid_hits_at_1: Option<f64>,
    valid_hits_at_3: Option<f64>,
    valid_hits_at_10: Option<f64>,
    test_mrr: Option<f64>,
    test_hits_at_1: Option<f64>,
    test_hits_at_3: Option<f64>,
    test_hits_at_10: Option<f64>,
    best_epoch: Option<usize>,
    wall_seconds: f64,
    error: &'a str,
}

pub fn write_grid_csv<W: std::io::Write>(rows: &[GridRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, r) in rows.iter().enumerate() {
        let c = &r.config;
        w.serialize(CsvRow {
            rank: i + 1,
            id: &r.id,
            model: &c.model,
            d: c.rank,
            d_j: c.relation_rank,
            d_t: c.time_rank,
            temporal_regulariser: &c.temporal_regulariser,
            hidden: c.recurrent_hidden,
            lambda_emb: c.lambda_emb,
            lambda_time: c.lambda_time,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            epochs: c.epochs,
            seed: c.seed,
            valid_mrr: r.valid.map(|m| m.mrr),
            valid_hits_at_1: r.valid.map(|m| m.hits_at_1),
            valid_hits_at_3: r.valid.map(|m| m.hits_at_3),
            valid_hits_at_10: r.valid.map(|m| m.hits_at_10),
            test_mrr: r.test.map(|m| m.mrr),
            test_hits_at_1: r.test.map(|m| m.hits_at_1),
            test_hits_at_3: r.test.map(|m| m.hits_at_3),
            test_hits_at_10: r.test.map(|m| m.hits_at_10),
            best_epoch: r.best_epoch,
            wall_seconds: r.seconds,
            error: r.error.as_deref().unwrap_or(""),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> TrainConfig {
        TrainConfig::new(ModelSpec::new(ModelKind::TNTComplEx, 4))
    }

    #[test]
    fn empty_grid_is_the_base_config() {
        let c = GridSpec::default().configs(&base());
        assert_eq!(c, vec![base()]);
    }

    #[test]
    fn cartesian_product_size_and_order() {
        let g = GridSpec {
            lambda_time: vec![0.1, 1.0],
            p: vec![2, 3, 4],
            temporal: vec![TemporalRegSpec::np(1)],
            ..Default::default()
        };
        let c = g.configs(&base());
        assert_eq!(c.len(), 6);
        assert_eq!((c[0].temporal.p, c[0].lambda_time), (2, 0.1));
        assert_eq!((c[1].temporal.p, c[1].lambda_time), (2, 1.0));
        assert_eq!((c[5].temporal.p, c[5].lambda_time), (4, 1.0));
    }

    #[test]
    fn ids_distinguish_configs() {
        let a = base();
        let b = TrainConfig { lambda_time: 0.5, ..a };
        assert_ne!(config_id(&a), config_id(&b));
        assert_eq!(config_id(&a), config_id(&base()));
    }

    #[test]
    fn failed_rows_sort_last() {
        let row = |id: &str, mrr: Option<f64>| GridRow {
            id: id.into(),
            config: (&base()).into(),
            valid: mrr.map(|m| DirectionMetrics { mrr: m, ..Default::default() }),
            test: None,
            best_epoch: None,
            seconds: 0.0,
            error: None,
        };
        let mut rows = vec![row("a", None), row("b", Some(0.2)), row("c", Some(0.9))];
        rank_rows(&mut rows);
        let ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["c", "b", "a"]);
    }
}
