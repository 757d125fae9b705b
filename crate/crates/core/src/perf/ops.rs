//! Operation counts. One multiply-accumulate is two operations; pooling
//! adds or compares each window element once.

use std::collections::BTreeMap;

use crate::ase::{BitmapBlock, BLOCK_ROWS};
use crate::model::{LayerKind, LayerSpec, ModelGraph};
use crate::prune::{tile_keep, PruneRatio, TILE_WIDTH};

pub const OPS_PER_MAC: u64 = 2;

fn pool_ops(l: &LayerSpec) -> u64 {
    let (wh, ww) = l.window();
    (l.output_shape().len() * wh * ww) as u64
}

pub fn layer_dense_ops(l: &LayerSpec) -> u64 {
    if l.kind.is_pool() {
        pool_ops(l)
    } else {
        OPS_PER_MAC * l.macs()
    }
}

pub fn count_dense_ops(graph: &ModelGraph) -> u64 {
    graph.layers.iter().map(layer_dense_ops).sum()
}

/// Weights kept in one row of the `M x N` PW matrix, summed over tiles.
pub fn kept_per_row(n: usize, keep: usize) -> u64 {
    (0..n)
        .step_by(TILE_WIDTH)
        .map(|c0| tile_keep(keep, TILE_WIDTH.min(n - c0)) as u64)
        .sum()
}

/// Operation count after pruning every PW layer at `ratio`. When bitmaps
/// are given for a PW layer (keyed by layer index, one block per three
/// pixels), input channels with a clear OR bit are excluded.
pub fn count_pruned_ops(graph: &ModelGraph, ratio: PruneRatio, bitmaps: Option<&BTreeMap<usize, Vec<BitmapBlock>>>) -> u64 {
    let keep = ratio.keep(TILE_WIDTH);
    graph
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            if l.kind != LayerKind::Pw {
                return layer_dense_ops(l);
            }
            let per_row = kept_per_row(l.n, keep);
            let pixels = l.h_out * l.w_out;
            let row_pixels = match bitmaps.and_then(|b| b.get(&i)) {
                Some(blocks) => blocks
                    .iter()
                    .enumerate()
                    .map(|(b, blk)| {
                        let rows = BLOCK_ROWS.min(pixels.saturating_sub(b * BLOCK_ROWS));
                        (rows * blk.nz_channels.len()) as u64
                    })
                    .sum(),
                None => (pixels * l.m) as u64,
            };
            OPS_PER_MAC * row_pixels * per_row
        })
        .sum()
}

/// Cost of a depthwise-separable block relative to a standard convolution.
pub fn dws_cost_ratio(k: usize, n: usize) -> f64 {
    1.0 / n as f64 + 1.0 / (k * k) as f64
}

pub fn millions(ops: u64) -> f64 {
    ops as f64 / 1e6
}
