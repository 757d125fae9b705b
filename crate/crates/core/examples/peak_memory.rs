//! Activation memory with overlaid input/output buffers, and a byte-level
//! check that the overlay never destroys input still needed.
//!
//!     cargo run --example peak_memory

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use raman::plan::{check_model_overlay, peak_memory_raman, peak_memory_soa, plan_report, plan_table};
use raman::weights::ModelWeights;
use raman::{bundled, Constants, QTensor};

fn main() -> raman::Result<()> {
    let c = Constants::default();
    for g in [bundled::dscnn(), bundled::mobilenetv1()] {
        println!("{}", g.name);
        print!("{}", plan_table(&plan_report(&g, &c)));
        let (ours, soa) = (peak_memory_raman(&g, &c), peak_memory_soa(&g));
        println!("peak {ours} B overlaid vs {soa} B separate\n");

        let w = ModelWeights::synthesize(&g, 7);
        let input = QTensor::random(g.input, 0.3, 255, &mut ChaCha8Rng::seed_from_u64(2));
        let checks = check_model_overlay(&g, &w, &input, &c)?;
        let prefetched: usize = checks.iter().map(|r| r.prefetches).sum();
        assert!(checks.iter().all(|r| r.matches_disjoint));
        println!("overlay verified on {} layers, {prefetched} tile prefetches\n", checks.len());
    }
    Ok(())
}
