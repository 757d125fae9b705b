//! Operation counts, dense and with balanced weight pruning.
//!
//!     cargo run --example ops_count

use raman::perf::{count_dense_ops, count_pruned_ops, dws_cost_ratio, millions};
use raman::prune::PruneRatio;
use raman::bundled;

fn main() {
    for g in [bundled::dscnn(), bundled::mobilenetv1()] {
        print!("{:<12} dense {:.3} M", g.name, millions(count_dense_ops(&g)));
        for r in [PruneRatio::Quarter, PruneRatio::Half, PruneRatio::ThreeQuarters] {
            print!("  {r}: {:.3} M", millions(count_pruned_ops(&g, r, None)));
        }
        println!();
    }
    // A 3x3 depthwise-separable block versus a standard convolution.
    println!("cost ratio k=3 n=64: {:.3}", dws_cost_ratio(3, 64));
}
