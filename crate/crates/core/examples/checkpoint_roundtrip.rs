//! Saves a checkpoint, reads it back and prints the inspect view.

use tkgc::commands::inspect;
use tkgc::train::TrainableParams;
use tkgc::{load_checkpoint, save_checkpoint, Checkpoint, ModelKind, ModelSpec, TemporalRegSpec};

fn main() -> tkgc::Result<()> {
    let temporal = TemporalRegSpec::linear3(3);
    let spec = ModelSpec::new(ModelKind::TComplEx, 4);
    let ckpt = Checkpoint {
        seed: 3,
        dataset_hash: "0".repeat(64),
        temporal,
        params: TrainableParams::init(spec, &temporal, (5, 4, 3), 0, 3, 0.1)?,
    };
    let path = std::env::temp_dir().join("tkgc-example.ckpt");
    let written = save_checkpoint(&ckpt, &path)?;
    let (back, read) = load_checkpoint(&path)?;
    assert_eq!(written, read);
    assert_eq!(back.params.model.entity.data(), ckpt.params.model.entity.data());
    print!("{}", inspect(&path)?);
    Ok(())
}
