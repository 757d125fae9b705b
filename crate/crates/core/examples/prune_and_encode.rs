//! Balanced weight pruning and the 12-bit (value, index) pair format.
//!
//!     cargo run --example prune_and_encode

use raman::prune::{balanced_prune, csr_encode, parameter_memory_size, CompressedWeightTile, DenseTile, PruneRatio};
use raman::{bundled, Constants};

fn main() -> raman::Result<()> {
    // Two input-channel rows of one 16-output tile.
    let data: Vec<i32> = (0..32).map(|i| ((i * 37 + 11) % 61) - 30).collect();
    let dense = DenseTile::new(2, 16, data);
    let keep = PruneRatio::ThreeQuarters.keep(16);
    let pruned = balanced_prune(&dense, keep)?;
    for r in 0..2 {
        println!("row {r} dense  {:?}", dense.row(r));
        println!("row {r} pruned {:?}", pruned.row(r));
    }

    let tile = csr_encode(&pruned)?;
    println!("pairs (value, index) row 0: {:?}", tile.row(0));
    let mut bytes = Vec::new();
    tile.write_bytes(&mut bytes);
    println!("{} bytes on disk ({} per row)", bytes.len(), tile.row_bytes());
    let (back, _) = CompressedWeightTile::read_bytes(&bytes)?;
    assert_eq!(back.decode(), pruned);

    let c = Constants::default();
    for g in [bundled::dscnn(), bundled::mobilenetv1()] {
        let sizes: Vec<String> = PruneRatio::ALL
            .iter()
            .map(|&r| format!("{r}: {:.3} KB", parameter_memory_size(&g, Some(r), &c).total_kb()))
            .collect();
        println!("{:<12} {}", g.name, sizes.join("  "));
    }
    Ok(())
}
