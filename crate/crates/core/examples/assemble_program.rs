//! Assemble a model into 80-bit instructions, save it, and execute the
//! program through the instruction dispatcher.
//!
//!     cargo run --example assemble_program

use raman::exec::{run_model, RunOptions};
use raman::isa::{assemble, disassemble, dispatch, encode, program_from_bytes, program_to_bytes};
use raman::prune::PruneRatio;
use raman::weights::{compile, CompiledWeights, ModelWeights};
use raman::{bundled, Constants, Precision, QTensor};

fn main() -> raman::Result<()> {
    let c = Constants::default();
    let g = bundled::mobilenetv1();
    let w = ModelWeights::synthesize(&g, 7);
    let compiled = compile(&g, &w, Some(PruneRatio::Quarter), &c)?;
    let words: Vec<u128> = assemble(&g, &compiled)?.iter().map(encode).collect::<raman::Result<_>>()?;
    print!("{}", disassemble(&words));

    let program = program_from_bytes(&program_to_bytes(&words))?;
    let image = CompiledWeights::image_from_blob(&compiled.to_blob())?;
    let input = QTensor::zeros(g.input, Precision::B8, false);
    let via = dispatch(&program, &image, &input, &RunOptions::default(), &c)?;
    let direct = run_model(&g, &compiled, &input, &RunOptions::default(), &c)?;
    assert_eq!(via.output, direct.output);
    println!("dispatch output {:?}", via.output.data());
    Ok(())
}
