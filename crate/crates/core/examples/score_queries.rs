//! Scores one fact under each model and ranks every candidate object.

use tkgc::{init_params, ModelKind, ModelSpec, Quadruple};

fn main() -> tkgc::Result<()> {
    let specs = [
        ModelSpec::new(ModelKind::TComplEx, 16),
        ModelSpec::new(ModelKind::TNTComplEx, 16),
        ModelSpec::chronor(16, 12, 4, false),
    ];
    let fact = Quadruple::new(0, 1, 2, 3);
    for spec in specs {
        let params = init_params(spec, 10, 4, 6, 7, 0.5)?;
        let scores = params.score_all_objects(fact.subject, fact.relation, fact.timestamp)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        println!(
            "{:<10} score {:+.5}  floats {:>5}  top objects {:?}",
            spec.kind.to_string(),
            params.score(&fact)?,
            params.num_floats(),
            &order[..3]
        );
    }
    Ok(())
}
