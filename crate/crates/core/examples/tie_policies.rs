//! Filtered rank of one target under the three tie policies.

use tkgc::eval::rank_from_scores;
use tkgc::TiePolicy;

fn main() -> tkgc::Result<()> {
    let scores = [0.9, 0.5, 0.5, 0.7, 0.5, 0.1];
    // known answers for the query; 3 is filtered out, 1 is the target
    let filter = [1, 3];
    for ties in [TiePolicy::Optimistic, TiePolicy::Mean, TiePolicy::Pessimistic] {
        println!("{ties:?}: rank {}", rank_from_scores(&scores, 1, &filter, ties)?);
    }
    Ok(())
}
