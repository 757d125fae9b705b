//! Zero detection, run-time activation pruning and compressed storage for
//! the pointwise engine's three-pixel blocks.
//!
//!     cargo run --example activation_sparsity

use raman::ase::{compress_store, scan_block};

fn main() -> raman::Result<()> {
    let rows: [&[i32]; 3] = [&[40, 0, 0, 33, 0, 7], &[25, 15, 0, 0, 0, 0], &[61, 0, 0, 70, 0, 9]];
    for theta in [0, 10, 20] {
        let b = scan_block(&rows, theta)?;
        let stored = compress_store(&b);
        println!(
            "theta {theta:>2}: non-zero {:>2}, channels to process {:?}, {} value bytes stored",
            b.popcount(),
            b.nz_channels,
            stored.stored_bytes()
        );
    }
    // A lone value in a column is dropped when below the threshold; values
    // sharing a column with another non-zero are always kept.
    let b = scan_block(&rows, 20)?;
    for (r, bits) in b.bits.iter().enumerate() {
        let s: String = bits.iter().map(|&x| if x { '1' } else { '.' }).collect();
        println!("row {r} bitmap {s}");
    }
    Ok(())
}
