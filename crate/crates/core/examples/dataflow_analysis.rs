//! Buffer traffic of the pointwise layers under four dataflows.
//!
//!     cargo run --example dataflow_analysis

use raman::perf::{dataflow_access_analysis, Dataflow};
use raman::{bundled, LayerKind};

fn main() -> raman::Result<()> {
    for g in [bundled::dscnn(), bundled::mobilenetv1()] {
        let rd = dataflow_access_analysis(g.layers_of(LayerKind::Pw), Dataflow::Rd)?.total();
        println!("{}", g.name);
        for flow in Dataflow::ALL {
            let t = dataflow_access_analysis(g.layers_of(LayerKind::Pw), flow)?;
            println!(
                "  {flow}: ia {:>10} w {:>10} partials {:>10} out {:>8} total {:>11} ({:.2}x RD)",
                t.ia,
                t.weights,
                t.partials,
                t.outputs,
                t.total(),
                t.total() as f64 / rd as f64
            );
        }
    }
    Ok(())
}
