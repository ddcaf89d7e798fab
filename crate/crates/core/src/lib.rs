//! Temporal knowledge-graph completion with complex-valued tensor
//! factorisation (TComplEx, TNTComplEx, ChronoR), temporal smoothing
//! regularisers and filtered ranking evaluation.
//!
//! ```
//! use tkgc::{ModelKind, ModelSpec, Quadruple, init_params};
//!
//! let spec = ModelSpec::new(ModelKind::TNTComplEx, 8);
//! let params = init_params(spec, 10, 4, 5, 42, 0.1).unwrap();
//! let s = params.score(&Quadruple::new(0, 1, 2, 3)).unwrap();
//! assert!(s.is_finite());
//! ```

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod model;
pub mod recurrent;
pub mod regularisers;
pub mod synthetic;
pub mod train;
pub mod types;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use data::{augment_reciprocal, build_dataset, BuildOptions, DatasetFormat, FilterIndex};
pub use error::{Error, Result};
pub use eval::{evaluate, Metrics, TiePolicy};
pub use grid::{grid_search, GridSpec};
pub use model::{init_params, param_count, ModelKind, ModelParams, ModelSpec};
pub use recurrent::{RecurrentKind, RecurrentParams};
pub use regularisers::{NormCurve, TemporalRegSpec};
pub use train::{batch_loss, gradient_check, train, TrainConfig, TrainableParams};
pub use types::{ComplexTable, DatasetSplits, Quadruple, Vocabulary};
