//! Dense weights, their synthesis, and the compiled parameter image.
//!
//! Dense layouts (row-major, outermost first):
//!
//! | kind | layout |
//! |------|--------|
//! | CONV | `[n][ky][kx][m]` |
//! | DW   | `[ky][kx][c]` |
//! | PW, FC | `[m][n]` |
//!
//! The compiled parameter image holds one region per layer, each starting on
//! a parameter-word boundary. A region is the layer's per-channel
//! post-processing records (bias `i32`, alpha `u8`, beta `u8`, little-endian)
//! followed by its weights: dense `i8` bytes for CONV/DW/FC, or one
//! compressed tile per 16 output columns for PW (see [`crate::prune`]).

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec, ModelGraph};
use crate::prune::{self, CompressedWeightTile, PruneRatio, TILE_WIDTH};

const DENSE_MAGIC: &[u8; 4] = b"RDW1";
const BLOB_MAGIC: &[u8; 4] = b"RWT1";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayerWeights {
    /// Dense weights in the layout for the layer kind; empty for pools.
    pub weights: Vec<i32>,
    /// One bias per output channel; empty for max pooling.
    pub bias: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelWeights {
    pub layers: Vec<LayerWeights>,
}

impl ModelWeights {
    /// Zero weights and biases shaped for `graph`.
    pub fn zeros(graph: &ModelGraph) -> Self {
        ModelWeights {
            layers: graph
                .layers
                .iter()
                .map(|l| LayerWeights {
                    weights: vec![0; l.weight_count()],
                    bias: vec![0; if l.kind.has_ppm_params() { l.n } else { 0 }],
                })
                .collect(),
        }
    }

    /// Deterministic pseudo-random weights. Values are roughly bell-shaped
    /// around zero so about half of each layer's outputs are cut by ReLU.
    pub fn synthesize(graph: &ModelGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(graph);
        for (l, lw) in graph.layers.iter().zip(&mut w.layers) {
            let (lo, hi) = l.precision.range(true);
            let spread = (hi / 2).max(1);
            for v in &mut lw.weights {
                let s: i32 = (0..3).map(|_| rng.gen_range(-spread..=spread)).sum();
                *v = s.clamp(lo, hi);
            }
            for b in &mut lw.bias {
                *b = rng.gen_range(-256..=256);
            }
        }
        w
    }

    pub fn check(&self, graph: &ModelGraph) -> Result<()> {
        if self.layers.len() != graph.len() {
            return Err(Error::format(
                "weights",
                format!("{} layers of weights for a {}-layer model", self.layers.len(), graph.len()),
            ));
        }
        for (i, (l, lw)) in graph.layers.iter().zip(&self.layers).enumerate() {
            let bias = if l.kind.has_ppm_params() { l.n } else { 0 };
            if lw.weights.len() != l.weight_count() || lw.bias.len() != bias {
                return Err(Error::format(
                    "weights",
                    format!(
                        "layer {i} ({}) has {} weights / {} biases, expected {} / {bias}",
                        l.kind,
                        lw.weights.len(),
                        lw.bias.len(),
                        l.weight_count()
                    ),
                ));
            }
            let (lo, hi) = l.precision.range(true);
            if let Some(&v) = lw.weights.iter().find(|&&v| v < lo || v > hi) {
                return Err(Error::OutOfRange {
                    value: v as i64,
                    bits: l.precision.bits(),
                    signedness: "signed",
                });
            }
        }
        Ok(())
    }

    /// Applies balanced pruning at `keep` to every PW layer's weights.
    pub fn pruned(&self, graph: &ModelGraph, keep: impl Fn(&LayerSpec) -> usize) -> Result<Self> {
        let mut out = self.clone();
        for (l, lw) in graph.layers.iter().zip(&mut out.layers) {
            if l.kind == LayerKind::Pw {
                lw.weights = prune::prune_matrix(&lw.weights, l.m, l.n, keep(l))?.0;
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = DENSE_MAGIC.to_vec();
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.weights.len() as u32).to_le_bytes());
            out.extend(l.weights.iter().map(|&v| v as i8 as u8));
            out.extend_from_slice(&(l.bias.len() as u32).to_le_bytes());
            for b in &l.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dense weight file");
        if r.take(4)? != DENSE_MAGIC {
            return Err(Error::format("dense weight file", "missing RDW1 header"));
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let weights = r.take(n)?.iter().map(|&b| b as i8 as i32).collect();
            let nb = r.u32()? as usize;
            let bias = (0..nb).map(|_| r.i32()).collect::<Result<_>>()?;
            layers.push(LayerWeights { weights, bias });
        }
        r.finish()?;
        Ok(ModelWeights { layers })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

/// Parameters of one layer as the accelerator sees them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledLayer {
    pub bias: Vec<i32>,
    pub alpha: u8,
    pub beta: u8,
    /// Dense weights for CONV/DW/FC; empty otherwise.
    pub dense: Vec<i32>,
    /// Compressed column tiles for PW; empty otherwise.
    pub tiles: Vec<CompressedWeightTile>,
}

impl CompiledLayer {
    /// Region size in bytes, before word alignment.
    pub fn region_bytes(&self, constants: &Constants) -> usize {
        self.bias.len() * constants.params.record_bytes()
            + self.dense.len()
            + self.tiles.iter().map(|t| 4 + t.storage_bytes()).sum::<usize>()
    }

    /// PW weights expanded to a dense `[m][n]` matrix.
    pub fn pw_dense(&self, m: usize, n: usize) -> Vec<i32> {
        let mut w = vec![0; m * n];
        for (t, tile) in self.tiles.iter().enumerate() {
            let c0 = t * TILE_WIDTH;
            for r in 0..tile.m_rows {
                for &(v, c) in tile.row(r) {
                    w[r * n + c0 + c as usize] = v as i32;
                }
            }
        }
        w
    }

    /// Weights in the dense layout for `spec`, whatever their storage.
    pub fn dense_weights(&self, spec: &LayerSpec) -> Vec<i32> {
        if spec.kind == LayerKind::Pw {
            self.pw_dense(spec.m, spec.n)
        } else {
            self.dense.clone()
        }
    }

    fn write_region(&self, out: &mut Vec<u8>) {
        for &b in &self.bias {
            out.extend_from_slice(&b.to_le_bytes());
            out.push(self.alpha);
            out.push(self.beta);
        }
        out.extend(self.dense.iter().map(|&v| v as i8 as u8));
        for t in &self.tiles {
            t.write_bytes(out);
        }
    }

    /// Decodes a layer's region from a parameter image, as the controller
    /// does after reading an instruction's base address.
    pub fn from_image(image: &[u8], base_word: usize, spec: &LayerSpec, constants: &Constants) -> Result<Self> {
        let start = base_word * constants.params.param_word_bytes;
        let region = image
            .get(start..)
            .ok_or_else(|| Error::format("parameter image", format!("base word {base_word} past end")))?;
        let mut r = Reader::new(region, "parameter image");
        let records = if spec.kind.has_ppm_params() { spec.n } else { 0 };
        let mut bias = Vec::with_capacity(records);
        let (mut alpha, mut beta) = (spec.quant.alpha, spec.quant.beta);
        for _ in 0..records {
            bias.push(r.i32()?);
            alpha = r.u8()?;
            beta = r.u8()?;
        }
        let mut dense = Vec::new();
        let mut tiles = Vec::new();
        match spec.kind {
            LayerKind::Pw => {
                for _ in 0..spec.n.div_ceil(TILE_WIDTH) {
                    let (t, used) = CompressedWeightTile::read_bytes(r.rest())?;
                    r.take(used)?;
                    tiles.push(t);
                }
            }
            k if k.has_weights() => {
                dense = r.take(spec.weight_count())?.iter().map(|&b| b as i8 as i32).collect();
            }
            _ => {}
        }
        Ok(CompiledLayer {
            bias,
            alpha,
            beta,
            dense,
            tiles,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledWeights {
    pub layers: Vec<CompiledLayer>,
    /// Region start of each layer, in parameter words.
    pub bases: Vec<usize>,
    pub image: Vec<u8>,
}

impl CompiledWeights {
    pub fn image_bytes(&self) -> usize {
        self.image.len()
    }

    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = BLOB_MAGIC.to_vec();
        out.extend_from_slice(&(self.image.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.image);
        out
    }

    /// Raw parameter image from a `.rwt` blob.
    pub fn image_from_blob(bytes: &[u8]) -> Result<Vec<u8>> {
        let mut r = Reader::new(bytes, "weight blob");
        if r.take(4)? != BLOB_MAGIC {
            return Err(Error::format("weight blob", "missing RWT1 header"));
        }
        let n = r.u32()? as usize;
        let image = r.take(n)?.to_vec();
        r.finish()?;
        Ok(image)
    }

    pub fn save_blob(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_blob())
    }
}

/// Prunes PW layers (at `ratio`, or at each layer's own `prune_keep` when
/// `ratio` is `None`), encodes them, and lays every layer out in a
/// parameter image.
pub fn compile(graph: &ModelGraph, weights: &ModelWeights, ratio: Option<PruneRatio>, constants: &Constants) -> Result<CompiledWeights> {
    weights.check(graph)?;
    let word = constants.params.param_word_bytes;
    let mut layers = Vec::with_capacity(graph.len());
    let mut bases = Vec::with_capacity(graph.len());
    let mut image = Vec::new();
    for (l, lw) in graph.layers.iter().zip(&weights.layers) {
        let (dense, tiles) = match l.kind {
            LayerKind::Pw => {
                let keep = ratio.map_or(l.prune_keep, |r| r.keep(TILE_WIDTH));
                (Vec::new(), prune::prune_matrix(&lw.weights, l.m, l.n, keep)?.1)
            }
            _ => (lw.weights.clone(), Vec::new()),
        };
        let cl = CompiledLayer {
            bias: lw.bias.clone(),
            alpha: l.quant.alpha,
            beta: l.quant.beta,
            dense,
            tiles,
        };
        bases.push(image.len() / word);
        cl.write_region(&mut image);
        image.resize(image.len().div_ceil(word) * word, 0);
        layers.push(cl);
    }
    Ok(CompiledWeights {
        layers,
        bases,
        image,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Reader { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(self.what, format!("truncated at byte {}", self.pos))),
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::format(self.what, format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}
