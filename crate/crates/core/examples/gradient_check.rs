//! Compares analytic and central-difference gradients of the batch loss.

use tkgc::model::{seeded_rng, streams};
use tkgc::train::TrainableParams;
use tkgc::{gradient_check, ModelKind, ModelSpec, Quadruple, RecurrentKind, TemporalRegSpec, TrainConfig};

fn main() -> tkgc::Result<()> {
    let spec = ModelSpec::new(ModelKind::TNTComplEx, 4);
    for temporal in [TemporalRegSpec::np(4), TemporalRegSpec::recurrent(RecurrentKind::Gru, 2)] {
        let params = TrainableParams::init(spec, &temporal, (6, 4, 5), 0, 1, 0.5)?;
        let batch = [Quadruple::new(0, 1, 2, 3), Quadruple::new(4, 3, 5, 0)];
        let mut config = TrainConfig::new(spec);
        config.temporal = temporal;
        config.lambda_emb = 0.1;
        config.lambda_time = 0.5;
        let mut rng = seeded_rng(1, streams::GRAD_CHECK);
        let r = gradient_check(&params, &batch, &config, 1e-5, 1e-5, 10, &mut rng)?;
        println!("{:?}: {} coords, max relative error {:.2e}", temporal.family, r.checked, r.max_rel_error);
    }
    Ok(())
}
