//! Pointwise engine.
//!
//! One run takes a block of three pixels (one `1 x M` activation row per PE
//! row) and a group of up to four compressed `M x 16` weight tiles (one per
//! PE column). Every PE keeps 16 partial sums in its register file, so
//! partials never leave the array; only requantized outputs are written
//! back. Input channels whose OR bit is clear are skipped outright, and
//! rows whose bitmap bit is clear are data-gated.

use crate::ase::{scan_pixels, BLOCK_ROWS};
use crate::config::Constants;
use crate::error::{Error, Result};
use crate::model::LayerSpec;
use crate::perf::ledger::{LayerCounters, RunTrace};
use crate::prune::TILE_WIDTH;
use crate::tensor::QTensor;
use crate::weights::CompiledLayer;

use super::PsumGuard;

/// Options that shape how the PW engine treats activations.
#[derive(Debug, Clone, Copy)]
pub struct PwMode {
    pub theta: u8,
    /// Skip zero columns, gate zero rows and store activations compressed.
    pub exploit_sparsity: bool,
}

pub fn pw_execute(
    spec: &LayerSpec,
    ia: &QTensor,
    params: &CompiledLayer,
    mode: PwMode,
    guard: PsumGuard,
    constants: &Constants,
    counters: &mut LayerCounters,
) -> Result<Vec<i64>> {
    let ia = if spec.stride > 1 { subsample(ia, spec)? } else { ia.clone() };
    let (m, n) = (spec.m, spec.n);
    let pixels = ia.shape().pixels();
    let tiles_per_group = constants.array.pe_cols;
    let tile_count = n.div_ceil(TILE_WIDTH);
    if params.tiles.len() != tile_count {
        return Err(Error::format(
            "PW weights",
            format!("{} tiles for {n} output channels", params.tiles.len()),
        ));
    }
    for t in &params.tiles {
        if t.m_rows != m {
            return Err(Error::format("PW weights", format!("tile has {} rows, layer has M={m}", t.m_rows)));
        }
    }
    let pack = spec.precision.lanes_per_byte() * constants.array.macs_per_pe;
    let record = constants.params.record_bytes() as u64;
    let ppm = constants.array.ppm_lanes as u64;
    let all_channels: Vec<usize> = (0..m).collect();
    let mut acc = vec![0i64; pixels * n];

    for g0 in (0..tile_count).step_by(tiles_per_group) {
        let group = &params.tiles[g0..tile_count.min(g0 + tiles_per_group)];
        let c0 = g0 * TILE_WIDTH;
        let group_cols = group.iter().map(|t| t.n_tile).sum::<usize>();
        let kmax = group.iter().map(|t| t.keep).max().unwrap_or(0);
        let cycles_per_channel = kmax.div_ceil(pack) as u64;
        let tile_bytes: u64 = group.iter().map(|t| t.storage_bytes() as u64).sum();

        for (b, start) in (0..pixels).step_by(BLOCK_ROWS).enumerate() {
            let mut trace = RunTrace::default();
            if b == 0 {
                // Tiles are cached once and reused by every block.
                let p = tile_bytes + group_cols as u64 * record;
                counters.glb_param.read += p;
                counters.cache_param.write += tile_bytes;
                trace.param_load_bytes = p;
            }
            let rows = BLOCK_ROWS.min(pixels - start);
            let dense_bytes = spec.precision.bytes_for((rows * m) as u64);
            counters.glb_act.read += dense_bytes;
            trace.act_load_bytes = dense_bytes;

            let block = scan_pixels(&ia, start, mode.theta);
            let values = block.rows();
            let (channels, stored) = if mode.exploit_sparsity {
                (&block.nz_channels, spec.precision.bytes_for(block.popcount() as u64))
            } else {
                (&all_channels, dense_bytes)
            };
            counters.cache_act.write += stored;
            counters.cache_act.read += stored;

            for &c in channels {
                for (ti, tile) in group.iter().enumerate() {
                    counters.cache_param.read += tile.row_bytes() as u64;
                    let col0 = c0 + ti * TILE_WIDTH;
                    let pairs = tile.row(c);
                    for (r, row) in values.iter().enumerate().take(rows) {
                        counters.macs_issued += pairs.len() as u64;
                        let a = row[c];
                        if mode.exploit_sparsity && !block.bits[r][c] {
                            counters.macs_gated += pairs.len() as u64;
                            continue;
                        }
                        let base = (start + r) * n + col0;
                        for &(v, col) in pairs {
                            let slot = &mut acc[base + col as usize];
                            *slot += a as i64 * v as i64;
                            guard.check(*slot)?;
                        }
                    }
                }
            }
            trace.compute_cycles = channels.len() as u64 * cycles_per_channel;
            trace.drain_cycles = ((rows * group_cols) as u64).div_ceil(ppm);
            counters.runs.push(trace);
        }
    }
    Ok(acc)
}

fn subsample(ia: &QTensor, spec: &LayerSpec) -> Result<QTensor> {
    let s = spec.stride;
    let mut data = Vec::with_capacity(spec.h_out * spec.w_out * spec.m);
    for y in 0..spec.h_out {
        for x in 0..spec.w_out {
            data.extend_from_slice(ia.pixel(y * s, x * s));
        }
    }
    QTensor::new(
        crate::model::Shape3::new(spec.h_out, spec.w_out, spec.m),
        ia.precision(),
        ia.is_signed(),
        data,
    )
}
