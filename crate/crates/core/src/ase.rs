//! Activation sparsity engine.
//!
//! The PW engine consumes activations in blocks of three `1 x M` rows (one
//! pixel per PE row). For each block the engine records which activations
//! are non-zero, optionally prunes lone small activations (run-time
//! activation pruning, RAP), ORs the three bits of each channel and lists
//! the channels that still need processing.

use crate::error::{Error, Result};
use crate::model::{LayerSpec, Shape3};
use crate::tensor::QTensor;

pub const BLOCK_ROWS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitmapBlock {
    pub m: usize,
    /// Post-RAP non-zero bits, one vector of length `m` per block row.
    pub bits: [Vec<bool>; BLOCK_ROWS],
    pub or_bits: Vec<bool>,
    /// Channels whose OR bit is set, ascending.
    pub nz_channels: Vec<usize>,
    /// Retained activations, row by row in channel order.
    pub values: Vec<i32>,
}

impl BitmapBlock {
    pub fn popcount(&self) -> usize {
        self.bits.iter().map(|r| r.iter().filter(|&&b| b).count()).sum()
    }

    /// Block rows reconstructed with pruned entries set to zero.
    pub fn rows(&self) -> [Vec<i32>; BLOCK_ROWS] {
        let mut it = self.values.iter();
        std::array::from_fn(|r| {
            self.bits[r]
                .iter()
                .map(|&b| if b { *it.next().unwrap() } else { 0 })
                .collect()
        })
    }
}

/// Applies the zero detector and RAP to one block.
pub fn scan_block(rows: &[&[i32]], theta: u8) -> Result<BitmapBlock> {
    if rows.len() != BLOCK_ROWS {
        return Err(Error::RowLengthMismatch(format!(
            "expected {BLOCK_ROWS} rows, got {}",
            rows.len()
        )));
    }
    let m = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::RowLengthMismatch(format!(
            "row of length {} in a block of width {m}",
            r.len()
        )));
    }
    let mut bits: [Vec<bool>; BLOCK_ROWS] =
        std::array::from_fn(|r| rows[r].iter().map(|&v| v != 0).collect());
    for c in 0..m {
        let set: Vec<usize> = (0..BLOCK_ROWS).filter(|&r| bits[r][c]).collect();
        if let [only] = set[..] {
            if rows[only][c].unsigned_abs() < theta as u32 {
                bits[only][c] = false;
            }
        }
    }
    let or_bits: Vec<bool> = (0..m).map(|c| bits.iter().any(|r| r[c])).collect();
    let nz_channels = (0..m).filter(|&c| or_bits[c]).collect();
    let mut values = Vec::new();
    for (r, row) in bits.iter().enumerate() {
        values.extend((0..m).filter(|&c| row[c]).map(|c| rows[r][c]));
    }
    Ok(BitmapBlock {
        m,
        bits,
        or_bits,
        nz_channels,
        values,
    })
}

/// Scans the block of pixels `start .. start+3` of a tensor in raster
/// order; pixels past the end read as zero rows.
pub fn scan_pixels(t: &QTensor, start: usize, theta: u8) -> BitmapBlock {
    let c = t.shape().c;
    let pixels = t.shape().pixels();
    let zero = vec![0; c];
    let rows: Vec<&[i32]> = (start..start + BLOCK_ROWS)
        .map(|p| {
            if p < pixels {
                &t.data()[p * c..(p + 1) * c]
            } else {
                &zero[..]
            }
        })
        .collect();
    scan_block(&rows, theta).expect("tensor rows share a width")
}

/// Activations as held in the cache: the bitmap plus only the kept values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredBlock {
    pub m: usize,
    pub bitmap: [Vec<bool>; BLOCK_ROWS],
    /// One byte per kept activation.
    pub values: Vec<i32>,
}

impl StoredBlock {
    pub fn stored_bytes(&self) -> usize {
        self.values.len()
    }

    pub fn decompress(&self) -> [Vec<i32>; BLOCK_ROWS] {
        let mut it = self.values.iter();
        std::array::from_fn(|r| {
            self.bitmap[r]
                .iter()
                .map(|&b| if b { *it.next().unwrap() } else { 0 })
                .collect()
        })
    }
}

pub fn compress_store(block: &BitmapBlock) -> StoredBlock {
    StoredBlock {
        m: block.m,
        bitmap: block.bits.clone(),
        values: block.values.clone(),
    }
}

/// Applies RAP block by block to a whole PW input tensor.
pub fn rap_filter(t: &QTensor, theta: u8) -> QTensor {
    if theta == 0 {
        return t.clone();
    }
    let c = t.shape().c;
    let pixels = t.shape().pixels();
    let mut data = t.data().to_vec();
    for start in (0..pixels).step_by(BLOCK_ROWS) {
        let block = scan_pixels(t, start, theta);
        for (r, row) in block.rows().iter().enumerate() {
            let p = start + r;
            if p < pixels {
                data[p * c..(p + 1) * c].copy_from_slice(row);
            }
        }
    }
    QTensor::new(t.shape(), t.precision(), t.is_signed(), data).expect("filtering only zeroes values")
}

/// RAP as seen by a PW layer: blocks are formed from the pixels the layer
/// reads, so a strided layer filters its subsampled stream. Pixels the layer
/// skips are left untouched.
pub fn rap_filter_for(spec: &LayerSpec, t: &QTensor, theta: u8) -> QTensor {
    if theta == 0 || spec.stride <= 1 {
        return rap_filter(t, theta);
    }
    let c = t.shape().c;
    let w = t.shape().w;
    let read: Vec<usize> = (0..spec.h_out)
        .flat_map(|y| (0..spec.w_out).map(move |x| y * spec.stride * w + x * spec.stride))
        .collect();
    let sub: Vec<i32> = read.iter().flat_map(|&p| t.data()[p * c..(p + 1) * c].iter().copied()).collect();
    let sub = QTensor::from_raw(Shape3::new(1, read.len(), c), t.precision(), t.is_signed(), sub);
    let filtered = rap_filter(&sub, theta);
    let mut data = t.data().to_vec();
    for (i, &p) in read.iter().enumerate() {
        data[p * c..(p + 1) * c].copy_from_slice(&filtered.data()[i * c..(i + 1) * c]);
    }
    QTensor::from_raw(t.shape(), t.precision(), t.is_signed(), data)
}
