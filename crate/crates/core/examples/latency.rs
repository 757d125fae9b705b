//! Cycle estimates for MobileNetV1 across activation-pruning thresholds,
//! with and without double-buffered output drains.
//!
//!     cargo run --example latency

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use raman::exec::{run_model, RunOptions, Theta};
use raman::perf::{estimate_latency, kind_summary};
use raman::weights::{compile, ModelWeights};
use raman::{bundled, Constants, LayerKind, QTensor};

fn main() -> raman::Result<()> {
    let mut c = Constants::default();
    let g = bundled::mobilenetv1();
    let compiled = compile(&g, &ModelWeights::synthesize(&g, 7), None, &c)?;
    let input = QTensor::random(g.input, 0.3, 255, &mut ChaCha8Rng::seed_from_u64(3));

    println!("theta  double-buffer  total cycles  pw cycles  pw util");
    for db in [false, true] {
        c.latency.double_buffer = db;
        for t in [0, 20, 40, 60] {
            let opts = RunOptions { theta: Theta::Uniform(t), ..RunOptions::default() };
            let res = run_model(&g, &compiled, &input, &opts, &c)?;
            let lat = estimate_latency(&res.ledger, &c)?;
            let total: u64 = lat.iter().map(|l| l.cycles).sum();
            let (pw, util) = kind_summary(&lat, LayerKind::Pw);
            println!("{t:>5}  {db:>13}  {total:>12}  {pw:>9}  {util:>7.3}");
        }
    }
    Ok(())
}
