//! Trains TNTComplEx on the toy graph and reports filtered test metrics.

use tkgc::synthetic::SyntheticSpec;
use tkgc::train::train_with;
use tkgc::{augment_reciprocal, evaluate, FilterIndex, ModelKind, ModelSpec, TemporalRegSpec, TiePolicy, TrainConfig};

fn main() -> tkgc::Result<()> {
    let splits = augment_reciprocal(SyntheticSpec::default().dataset()?)?;
    let mut config = TrainConfig::new(ModelSpec::new(ModelKind::TNTComplEx, 25));
    config.temporal = TemporalRegSpec::np(3);
    config.lambda_emb = 1e-3;
    config.lambda_time = 1e-2;
    config.epochs = 100;
    config.valid_every = 20;

    let outcome = train_with(&splits, &config, |r| {
        if let Some(v) = &r.valid {
            println!("epoch {:>3}  loss {:.4}  valid MRR {:.3}", r.epoch, r.train_loss, v.mrr());
        }
    })?;
    let filter = FilterIndex::for_queries(&splits, &splits.test);
    let m = evaluate(&outcome.best_params().model, &splits.test, &filter, TiePolicy::Pessimistic)?;
    println!(
        "test MRR {:.3}  H@1 {:.3}  H@3 {:.3}  H@10 {:.3}",
        m.overall.mrr, m.overall.hits_at_1, m.overall.hits_at_3, m.overall.hits_at_10
    );
    Ok(())
}
