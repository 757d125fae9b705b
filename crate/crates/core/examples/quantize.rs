//! Requantization and sub-byte SIMD packing.
//!
//!     cargo run --example quantize

use raman::quant::{multiplier_cycles, pack_operands, requantize_to, simd_multiply};
use raman::Precision;

fn main() -> raman::Result<()> {
    // A 24-bit accumulator scaled by alpha / 2^beta, rounded half up, clamped.
    let (alpha, beta) = (57, 11);
    for acc in [-5_000i64, 0, 1_000, 9_000, 40_000] {
        println!(
            "acc {acc:>7} -> u8 {:>3}  i8 {:>4}  u4 {:>2}",
            requantize_to(acc, alpha, beta, false, Precision::B8),
            requantize_to(acc, alpha, beta, true, Precision::B8),
            requantize_to(acc, alpha, beta, false, Precision::B4),
        );
    }

    // One multiplier byte carries one 8-bit, two 4-bit or four 2-bit lanes.
    let w = [1, -2, 1, 0, -1, 1, -2, 1];
    let a = [1, 1, 0, 1, 1, 0, 1, 1];
    for p in [Precision::B8, Precision::B4, Precision::B2] {
        let pw = pack_operands(&w, p, true)?;
        let pa = pack_operands(&a, p, true)?;
        let prod = simd_multiply(&pw, &pa)?;
        println!(
            "{}b: {} packed bytes, {} multiplier cycles, products {:?}",
            p.bits(),
            pw.bytes.len(),
            multiplier_cycles(w.len(), p),
            prod
        );
    }
    Ok(())
}
