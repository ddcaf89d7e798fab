//! Timestamp embeddings produced by each recurrent generator.

use tkgc::model::{seeded_rng, streams};
use tkgc::{RecurrentKind, RecurrentParams};

fn main() {
    let (hidden, out, steps) = (3, 8, 6);
    for kind in RecurrentKind::ALL {
        let mut rng = seeded_rng(11, streams::AUX_INIT);
        let gen = RecurrentParams::random(kind, hidden, out, &mut rng);
        let rows = gen.generate(steps);
        let norms: Vec<String> = rows
            .chunks(out)
            .map(|r| format!("{:.3}", r.iter().map(|x| x * x).sum::<f64>().sqrt()))
            .collect();
        println!("{:<11} row norms {}", kind.to_string(), norms.join(" "));
    }
}
