//! Scalar penalty curves and the temporal penalties of a small table.

use tkgc::regularisers::{linear3, norm_curves_csv, temporal_lp, temporal_np, NormCurve};

fn main() -> tkgc::Result<()> {
    print!("{}", norm_curves_csv(&NormCurve::defaults(), -1.0, 1.0, 5));

    // three timestamps, rank 2, split [re | im] rows
    let rows = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 2.0];
    let bias = [0.5, 0.0, 0.0, 0.5];
    for p in 1..=4 {
        println!(
            "p={p}  N {:.4}  L {:.4}  Linear3 {:.4}",
            temporal_np(&rows, 2, p).value,
            temporal_lp(&rows, 2, p).value,
            linear3(&rows, 2, &bias, p)?.value
        );
    }
    Ok(())
}
