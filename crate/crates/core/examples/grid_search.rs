//! Small weight sweep over two temporal regularisers, resumable from disk.

use tkgc::grid::{grid_search, write_grid_csv, GridSpec};
use tkgc::synthetic::SyntheticSpec;
use tkgc::{augment_reciprocal, ModelKind, ModelSpec, TemporalRegSpec, TrainConfig};

fn main() -> tkgc::Result<()> {
    let splits = augment_reciprocal(SyntheticSpec::default().dataset()?)?;
    let mut base = TrainConfig::new(ModelSpec::new(ModelKind::TNTComplEx, 8));
    base.epochs = 10;
    let grid = GridSpec {
        temporal: vec![TemporalRegSpec::np(3), TemporalRegSpec::linear3(3)],
        lambda_time: vec![0.0, 0.1, 1.0],
        ..GridSpec::default()
    };
    let results = std::env::temp_dir().join("tkgc-example-grid");
    let outcome = grid_search(&splits, &base, &grid, Some(&results))?;
    println!("computed {} resumed {}", outcome.computed, outcome.resumed);
    write_grid_csv(&outcome.rows, std::io::stdout())?;
    Ok(())
}
