//! Compile DS-CNN with synthetic weights, execute it on the simulated
//! accelerator and check the result against the dense reference.
//!
//!     cargo run --example run_dscnn

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use raman::exec::{reference_run, run_model, RunOptions};
use raman::perf::{estimate_latency, ledger_table};
use raman::prune::PruneRatio;
use raman::weights::{compile, ModelWeights};
use raman::{bundled, Constants, QTensor};

fn main() -> raman::Result<()> {
    let c = Constants::default();
    let g = bundled::dscnn();
    let w = ModelWeights::synthesize(&g, 7);
    let compiled = compile(&g, &w, Some(PruneRatio::Half), &c)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = QTensor::random(g.input, 0.3, 255, &mut rng);
    let res = run_model(&g, &compiled, &input, &RunOptions::default(), &c)?;

    let pruned = w.pruned(&g, |_| PruneRatio::Half.keep(16))?;
    let want = reference_run(&g, &pruned, &input)?;
    assert_eq!(&res.output, want.last().unwrap());
    println!("scores {:?} (matches reference)", res.output.data());

    let lat = estimate_latency(&res.ledger, &c)?;
    print!("{}", ledger_table(&res.ledger, &lat));
    Ok(())
}
