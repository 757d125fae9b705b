//! Balanced weight pruning and the value/index pair codec.
//!
//! A PW weight matrix (`M` input rows by `N` output columns) is cut into
//! column tiles of width 16. Pruning keeps the same number of weights in
//! every row of a tile, so each row compresses to exactly `keep` pairs of an
//! 8-bit value and a 4-bit column index, with no row pointers.
//!
//! Blob layout of one tile (little-endian):
//!
//! ```text
//! m_rows u16 | n_tile u8 | keep u8 | rows...
//! ```
//!
//! Each row holds `keep` 12-bit pairs packed LSB-first (value in bits 0..8,
//! index in bits 8..12) and is padded to a whole byte.

use std::fmt;

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::model::{LayerKind, ModelGraph};

pub const TILE_WIDTH: usize = 16;
const PAIR_BITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PruneRatio {
    None,
    Quarter,
    Half,
    ThreeQuarters,
}

impl PruneRatio {
    pub const ALL: [PruneRatio; 4] = [
        PruneRatio::None,
        PruneRatio::Quarter,
        PruneRatio::Half,
        PruneRatio::ThreeQuarters,
    ];

    pub fn from_fraction(r: f64) -> Result<Self> {
        PruneRatio::ALL
            .into_iter()
            .find(|p| (p.fraction() - r).abs() < 1e-9)
            .ok_or(Error::InvalidPruneRatio(r))
    }

    pub fn fraction(self) -> f64 {
        match self {
            PruneRatio::None => 0.0,
            PruneRatio::Quarter => 0.25,
            PruneRatio::Half => 0.5,
            PruneRatio::ThreeQuarters => 0.75,
        }
    }

    /// Weights kept per row of a full-width tile.
    pub fn keep(self, n_tile: usize) -> usize {
        n_tile - (n_tile as f64 * self.fraction()).round() as usize
    }
}

impl fmt::Display for PruneRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}%", (self.fraction() * 100.0) as u32)
    }
}

/// Keep count for a tile narrower than the nominal width.
pub fn tile_keep(keep: usize, width: usize) -> usize {
    if width >= TILE_WIDTH {
        return keep.min(width);
    }
    let k = ((keep * width) as f64 / TILE_WIDTH as f64).round() as usize;
    if k == 0 && keep > 0 {
        1
    } else {
        k.min(width)
    }
}

/// Row-major dense tile of `rows` by `width` weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseTile {
    pub rows: usize,
    pub width: usize,
    pub data: Vec<i32>,
}

impl DenseTile {
    pub fn new(rows: usize, width: usize, data: Vec<i32>) -> Self {
        assert_eq!(data.len(), rows * width, "tile data length");
        DenseTile { rows, width, data }
    }

    pub fn row(&self, r: usize) -> &[i32] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn row_nonzeros(&self, r: usize) -> usize {
        self.row(r).iter().filter(|&&v| v != 0).count()
    }
}

/// Keeps the `keep` largest-magnitude weights of each row; ties go to the
/// lower column index.
pub fn balanced_prune(tile: &DenseTile, keep: usize) -> Result<DenseTile> {
    if keep > tile.width {
        return Err(Error::KeepOutOfRange {
            keep,
            width: tile.width,
        });
    }
    let mut out = vec![0; tile.data.len()];
    let mut order: Vec<usize> = Vec::with_capacity(tile.width);
    for r in 0..tile.rows {
        let row = tile.row(r);
        order.clear();
        order.extend(0..tile.width);
        order.sort_by(|&a, &b| row[b].abs().cmp(&row[a].abs()).then(a.cmp(&b)));
        for &c in &order[..keep] {
            out[r * tile.width + c] = row[c];
        }
    }
    Ok(DenseTile::new(tile.rows, tile.width, out))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedWeightTile {
    pub m_rows: usize,
    pub n_tile: usize,
    pub keep: usize,
    /// `m_rows * keep` pairs of (value, column index), row by row.
    pub pairs: Vec<(i8, u8)>,
}

impl CompressedWeightTile {
    pub fn row(&self, r: usize) -> &[(i8, u8)] {
        &self.pairs[r * self.keep..(r + 1) * self.keep]
    }

    pub fn row_bytes(&self) -> usize {
        (self.keep * PAIR_BITS).div_ceil(8)
    }

    pub fn storage_bytes(&self) -> usize {
        self.m_rows * self.row_bytes()
    }

    pub fn decode(&self) -> DenseTile {
        let mut data = vec![0; self.m_rows * self.n_tile];
        for r in 0..self.m_rows {
            for &(v, c) in self.row(r) {
                data[r * self.n_tile + c as usize] = v as i32;
            }
        }
        DenseTile::new(self.m_rows, self.n_tile, data)
    }

    pub fn check(&self) -> Result<()> {
        if self.n_tile > TILE_WIDTH || self.keep > self.n_tile {
            return Err(Error::KeepOutOfRange {
                keep: self.keep,
                width: self.n_tile,
            });
        }
        if self.pairs.len() != self.m_rows * self.keep {
            return Err(Error::format("weight tile", "pair count does not match rows*keep"));
        }
        for r in 0..self.m_rows {
            let row = self.row(r);
            let ok = row.iter().all(|&(_, c)| (c as usize) < self.n_tile)
                && row.windows(2).all(|w| w[0].1 < w[1].1);
            if !ok {
                return Err(Error::format(
                    "weight tile",
                    format!("row {r} indices not strictly increasing below {}", self.n_tile),
                ));
            }
        }
        Ok(())
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.m_rows as u16).to_le_bytes());
        out.push(self.n_tile as u8);
        out.push(self.keep as u8);
        for r in 0..self.m_rows {
            let start = out.len();
            out.resize(start + self.row_bytes(), 0);
            for (i, &(v, c)) in self.row(r).iter().enumerate() {
                let word = (v as u8 as u32) | ((c as u32) << 8);
                let bit = i * PAIR_BITS;
                for b in 0..PAIR_BITS {
                    if word >> b & 1 == 1 {
                        out[start + (bit + b) / 8] |= 1 << ((bit + b) % 8);
                    }
                }
            }
        }
    }

    /// Parses one tile and returns it with the number of bytes consumed.
    pub fn read_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 4 {
            return Err(Error::format("weight tile", "truncated header"));
        }
        let m_rows = u16::from_le_bytes([bytes[0], bytes[1]]) as usize;
        let n_tile = bytes[2] as usize;
        let keep = bytes[3] as usize;
        let row_bytes = (keep * PAIR_BITS).div_ceil(8);
        let need = 4 + m_rows * row_bytes;
        if bytes.len() < need {
            return Err(Error::format("weight tile", "truncated rows"));
        }
        let mut pairs = Vec::with_capacity(m_rows * keep);
        for r in 0..m_rows {
            let row = &bytes[4 + r * row_bytes..4 + (r + 1) * row_bytes];
            for i in 0..keep {
                let bit = i * PAIR_BITS;
                let mut word = 0u32;
                for b in 0..PAIR_BITS {
                    word |= ((row[(bit + b) / 8] >> ((bit + b) % 8)) as u32 & 1) << b;
                }
                pairs.push((word as u8 as i8, (word >> 8) as u8));
            }
        }
        let tile = CompressedWeightTile {
            m_rows,
            n_tile,
            keep,
            pairs,
        };
        tile.check()?;
        Ok((tile, need))
    }
}

/// Encodes a tile whose rows all have the same number of non-zeros.
pub fn csr_encode(tile: &DenseTile) -> Result<CompressedWeightTile> {
    let expected = if tile.rows == 0 { 0 } else { tile.row_nonzeros(0) };
    for r in 0..tile.rows {
        let found = tile.row_nonzeros(r);
        if found != expected {
            return Err(Error::UnbalancedTile { row: r, found, expected });
        }
    }
    csr_encode_with_keep(tile, expected)
}

/// Encodes with a fixed row length. Rows holding fewer than `keep`
/// non-zeros (weights that happened to be zero) are topped up with zero
/// pairs at their lowest unused columns.
pub fn csr_encode_with_keep(tile: &DenseTile, keep: usize) -> Result<CompressedWeightTile> {
    if keep > tile.width || tile.width > TILE_WIDTH {
        return Err(Error::KeepOutOfRange {
            keep,
            width: tile.width,
        });
    }
    let mut pairs = Vec::with_capacity(tile.rows * keep);
    let mut cols = Vec::with_capacity(tile.width);
    for r in 0..tile.rows {
        let row = tile.row(r);
        let found = tile.row_nonzeros(r);
        if found > keep {
            return Err(Error::UnbalancedTile {
                row: r,
                found,
                expected: keep,
            });
        }
        let mut fill = keep - found;
        cols.clear();
        for (c, &v) in row.iter().enumerate() {
            if v != 0 {
                cols.push(c);
            } else if fill > 0 {
                cols.push(c);
                fill -= 1;
            }
        }
        for &c in &cols {
            let v = row[c];
            if !(-128..=127).contains(&v) {
                return Err(Error::OutOfRange {
                    value: v as i64,
                    bits: 8,
                    signedness: "signed",
                });
            }
            pairs.push((v as i8, c as u8));
        }
    }
    Ok(CompressedWeightTile {
        m_rows: tile.rows,
        n_tile: tile.width,
        keep,
        pairs,
    })
}

pub fn csr_decode(tile: &CompressedWeightTile) -> DenseTile {
    tile.decode()
}

/// Splits a row-major `m x n` matrix into column tiles of width 16.
pub fn column_tiles(w: &[i32], m: usize, n: usize) -> Vec<DenseTile> {
    (0..n)
        .step_by(TILE_WIDTH)
        .map(|c0| {
            let width = TILE_WIDTH.min(n - c0);
            let mut data = Vec::with_capacity(m * width);
            for r in 0..m {
                data.extend_from_slice(&w[r * n + c0..r * n + c0 + width]);
            }
            DenseTile::new(m, width, data)
        })
        .collect()
}

/// Prunes a full PW matrix tile by tile and returns the masked matrix with
/// its compressed tiles.
pub fn prune_matrix(w: &[i32], m: usize, n: usize, keep: usize) -> Result<(Vec<i32>, Vec<CompressedWeightTile>)> {
    let mut masked = vec![0; m * n];
    let mut tiles = Vec::new();
    for (t, tile) in column_tiles(w, m, n).into_iter().enumerate() {
        let k = tile_keep(keep, tile.width);
        let pruned = balanced_prune(&tile, k)?;
        let c0 = t * TILE_WIDTH;
        for r in 0..m {
            masked[r * n + c0..r * n + c0 + tile.width].copy_from_slice(pruned.row(r));
        }
        tiles.push(csr_encode_with_keep(&pruned, k)?);
    }
    Ok((masked, tiles))
}

/// Bytes of compressed PW weights for an `m x n` matrix at `keep`.
pub fn pw_weight_bytes(m: usize, n: usize, keep: usize) -> usize {
    (0..n)
        .step_by(TILE_WIDTH)
        .map(|c0| {
            let k = tile_keep(keep, TILE_WIDTH.min(n - c0));
            m * (k * PAIR_BITS).div_ceil(8)
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParamMemory {
    pub layer: usize,
    pub kind: LayerKind,
    pub weight_bytes: usize,
    pub ppm_bytes: usize,
}

impl LayerParamMemory {
    pub fn total(&self) -> usize {
        self.weight_bytes + self.ppm_bytes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMemoryReport {
    pub layers: Vec<LayerParamMemory>,
}

impl ParamMemoryReport {
    pub fn total_bytes(&self) -> usize {
        self.layers.iter().map(LayerParamMemory::total).sum()
    }

    pub fn total_kb(&self) -> f64 {
        self.total_bytes() as f64 / 1000.0
    }
}

/// Parameter storage per layer. PW layers use the compressed pair format
/// with `ratio` (or their own `prune_keep` when `ratio` is `None`); other
/// weighted layers are stored densely at their precision. Every layer with
/// a post-processing stage also stores one bias/alpha/beta record per
/// output channel.
pub fn parameter_memory_size(graph: &ModelGraph, ratio: Option<PruneRatio>, constants: &Constants) -> ParamMemoryReport {
    let record = constants.params.record_bytes();
    let layers = graph
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let weight_bytes = match l.kind {
                LayerKind::Pw => {
                    let keep = ratio.map_or(l.prune_keep, |r| r.keep(TILE_WIDTH));
                    pw_weight_bytes(l.m, l.n, keep)
                }
                k if k.has_weights() => l.precision.bytes_for(l.weight_count() as u64) as usize,
                _ => 0,
            };
            let ppm_bytes = if l.kind.has_ppm_params() { l.n * record } else { 0 };
            LayerParamMemory {
                layer: i,
                kind: l.kind,
                weight_bytes,
                ppm_bytes,
            }
        })
        .collect();
    ParamMemoryReport { layers }
}
