//! 80-bit layer instructions, program assembly and the dispatch loop.
//!
//! Every layer becomes one instruction. Fields are packed from the most
//! significant bit down in the order of [`FIELDS`]:
//!
//! | field | bits | meaning |
//! |---|---|---|
//! | opcode | 3 | CONV=0, DW=1, PW=2, FC=3, POOL=4 |
//! | pool_mode | 1 | POOL only: 0 max, 1 average |
//! | kcode | 2 | kernel 1, 2, 3, or 3 = whole map (global pooling) |
//! | stride | 2 | stride |
//! | pad | 2 | zero padding |
//! | h_in, w_in | 8 each | input height and width |
//! | m, n | 9 each | input and output channels |
//! | precision | 2 | 0 = 8b, 1 = 4b, 2 = 2b |
//! | theta | 8 | activation-pruning threshold |
//! | keep | 5 | weights kept per 16-wide tile row |
//! | relu | 1 | apply ReLU |
//! | signed | 1 | signed output |
//! | residual | 5 | distance back to the residual source, 0 = none |
//! | param_base | 14 | start of the layer's parameter region, in parameter words |
//!
//! Bias, alpha and beta are not in the instruction; the controller fetches
//! them from the parameter region at `param_base`.
//!
//! A program file is a little-endian `u32` instruction count followed by one
//! 10-byte little-endian word per instruction.

use std::fmt;
use std::path::Path;

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::exec::{ExecState, RunOptions, RunResult};
use crate::model::{LayerKind, LayerSpec, Precision, QuantParams};
use crate::model::ModelGraph;
use crate::prune::TILE_WIDTH;
use crate::tensor::QTensor;
use crate::model::Shape3;
use crate::weights::{read_file, write_file, CompiledLayer, CompiledWeights, LayerWeights, ModelWeights};

pub const WORD_BITS: u32 = 80;
pub const WORD_BYTES: usize = 10;

/// Field names and widths, most significant first.
pub const FIELDS: [(&str, u32); 16] = [
    ("opcode", 3),
    ("pool_mode", 1),
    ("kcode", 2),
    ("stride", 2),
    ("pad", 2),
    ("h_in", 8),
    ("w_in", 8),
    ("m", 9),
    ("n", 9),
    ("precision", 2),
    ("theta", 8),
    ("keep", 5),
    ("relu", 1),
    ("signed", 1),
    ("residual", 5),
    ("param_base", 14),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Conv = 0,
    Dw = 1,
    Pw = 2,
    Fc = 3,
    Pool = 4,
}

impl Opcode {
    pub fn from_bits(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Opcode::Conv,
            1 => Opcode::Dw,
            2 => Opcode::Pw,
            3 => Opcode::Fc,
            4 => Opcode::Pool,
            other => return Err(Error::IllegalInstruction(other)),
        })
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Conv => "CONV",
            Opcode::Dw => "DW",
            Opcode::Pw => "PW",
            Opcode::Fc => "FC",
            Opcode::Pool => "POOL",
        }
    }
}

/// Decoded view of one instruction; every field holds its raw bit value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: Opcode,
    pub pool_mode: u8,
    pub kcode: u8,
    pub stride: u8,
    pub pad: u8,
    pub h_in: u16,
    pub w_in: u16,
    pub m: u16,
    pub n: u16,
    pub precision: u8,
    pub theta: u8,
    pub keep: u8,
    pub relu: u8,
    pub signed: u8,
    pub residual: u8,
    pub param_base: u16,
}

impl Instruction {
    /// An instruction with every field zero except the opcode.
    pub fn empty(opcode: Opcode) -> Self {
        Self::from_values(&[opcode as u64, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap()
    }

    pub fn values(&self) -> [u64; 16] {
        [
            self.opcode as u64,
            self.pool_mode as u64,
            self.kcode as u64,
            self.stride as u64,
            self.pad as u64,
            self.h_in as u64,
            self.w_in as u64,
            self.m as u64,
            self.n as u64,
            self.precision as u64,
            self.theta as u64,
            self.keep as u64,
            self.relu as u64,
            self.signed as u64,
            self.residual as u64,
            self.param_base as u64,
        ]
    }

    /// Builds an instruction from raw field values, checking widths.
    pub fn from_values(v: &[u64; 16]) -> Result<Self> {
        for (&(field, width), &value) in FIELDS.iter().zip(v) {
            if value >> width != 0 {
                return Err(Error::FieldOverflow { field, value, width });
            }
        }
        Ok(Instruction {
            opcode: Opcode::from_bits(v[0] as u8)?,
            pool_mode: v[1] as u8,
            kcode: v[2] as u8,
            stride: v[3] as u8,
            pad: v[4] as u8,
            h_in: v[5] as u16,
            w_in: v[6] as u16,
            m: v[7] as u16,
            n: v[8] as u16,
            precision: v[9] as u8,
            theta: v[10] as u8,
            keep: v[11] as u8,
            relu: v[12] as u8,
            signed: v[13] as u8,
            residual: v[14] as u8,
            param_base: v[15] as u16,
        })
    }
}

/// Packs an instruction into the low 80 bits of a `u128`.
pub fn encode(i: &Instruction) -> Result<u128> {
    let mut word = 0u128;
    for (&(field, width), value) in FIELDS.iter().zip(i.values()) {
        if value >> width != 0 {
            return Err(Error::FieldOverflow { field, value, width });
        }
        word = (word << width) | value as u128;
    }
    Ok(word)
}

pub fn decode(word: u128) -> Result<Instruction> {
    if word >> WORD_BITS != 0 {
        return Err(Error::format("instruction", "bits above bit 79 are set"));
    }
    let mut values = [0u64; 16];
    let mut shift = WORD_BITS;
    for (slot, &(_, width)) in values.iter_mut().zip(&FIELDS) {
        shift -= width;
        *slot = ((word >> shift) & ((1u128 << width) - 1)) as u64;
    }
    Instruction::from_values(&values)
}

pub fn word_to_bytes(word: u128) -> [u8; WORD_BYTES] {
    word.to_le_bytes()[..WORD_BYTES].try_into().unwrap()
}

pub fn word_from_bytes(b: &[u8; WORD_BYTES]) -> u128 {
    let mut full = [0u8; 16];
    full[..WORD_BYTES].copy_from_slice(b);
    u128::from_le_bytes(full)
}

fn precision_code(p: Precision) -> u8 {
    match p {
        Precision::B8 => 0,
        Precision::B4 => 1,
        Precision::B2 => 2,
    }
}

fn precision_from_code(c: u8) -> Result<Precision> {
    match c {
        0 => Ok(Precision::B8),
        1 => Ok(Precision::B4),
        2 => Ok(Precision::B2),
        other => Err(Error::Unsupported {
            what: "precision code",
            value: other.to_string(),
        }),
    }
}

fn check_width(field: &'static str, value: usize) -> Result<u64> {
    let width = FIELDS.iter().find(|f| f.0 == field).unwrap().1;
    let v = value as u64;
    if v >> width != 0 {
        Err(Error::FieldOverflow { field, value: v, width })
    } else {
        Ok(v)
    }
}

/// Encodes one layer. `keep` is the per-row keep of full-width PW tiles.
pub fn layer_instruction(index: usize, l: &LayerSpec, keep: usize, param_base: usize) -> Result<Instruction> {
    let (opcode, pool_mode) = match l.kind {
        LayerKind::Conv => (Opcode::Conv, 0),
        LayerKind::Dw => (Opcode::Dw, 0),
        LayerKind::Pw => (Opcode::Pw, 0),
        LayerKind::Fc => (Opcode::Fc, 0),
        LayerKind::MaxPool => (Opcode::Pool, 0),
        LayerKind::AvgPool | LayerKind::Gap => (Opcode::Pool, 1),
    };
    let kcode = if l.kind == LayerKind::Gap {
        3
    } else {
        match l.k {
            1 => 0,
            2 => 1,
            3 => 2,
            other => {
                return Err(Error::FieldOverflow {
                    field: "kcode",
                    value: other as u64,
                    width: 2,
                })
            }
        }
    };
    let residual = match l.residual_src {
        Some(src) => index.checked_sub(src).filter(|&d| d > 0).ok_or(Error::MissingResidual {
            layer: index,
            source_layer: src,
        })?,
        None => 0,
    };
    let values = [
        opcode as u64,
        pool_mode,
        kcode,
        check_width("stride", l.stride)?,
        check_width("pad", l.pad)?,
        check_width("h_in", l.h_in)?,
        check_width("w_in", l.w_in)?,
        check_width("m", l.m)?,
        check_width("n", l.n)?,
        precision_code(l.precision) as u64,
        l.rap_threshold as u64,
        check_width("keep", keep)?,
        l.relu as u64,
        l.quant.signed_output as u64,
        check_width("residual", residual)?,
        check_width("param_base", param_base)?,
    ];
    Instruction::from_values(&values)
}

/// One instruction per layer, in execution order.
pub fn assemble(graph: &ModelGraph, compiled: &CompiledWeights) -> Result<Vec<Instruction>> {
    graph
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let keep = match l.kind {
                LayerKind::Pw => compiled.layers[i]
                    .tiles
                    .iter()
                    .find(|t| t.n_tile == TILE_WIDTH)
                    .map_or(l.prune_keep, |t| t.keep),
                _ => l.prune_keep,
            };
            layer_instruction(i, l, keep, compiled.bases[i])
        })
        .collect()
}

/// Reconstructs the layer an instruction describes. Alpha and beta are left
/// at their defaults; the dispatcher fills them from the parameter region.
pub fn to_layer_spec(index: usize, i: &Instruction) -> Result<LayerSpec> {
    let kind = match (i.opcode, i.pool_mode, i.kcode) {
        (Opcode::Conv, ..) => LayerKind::Conv,
        (Opcode::Dw, ..) => LayerKind::Dw,
        (Opcode::Pw, ..) => LayerKind::Pw,
        (Opcode::Fc, ..) => LayerKind::Fc,
        (Opcode::Pool, 0, _) => LayerKind::MaxPool,
        (Opcode::Pool, _, 3) => LayerKind::Gap,
        (Opcode::Pool, _, _) => LayerKind::AvgPool,
    };
    let mut l = LayerSpec::new(kind);
    l.h_in = i.h_in as usize;
    l.w_in = i.w_in as usize;
    l.m = i.m as usize;
    l.n = i.n as usize;
    l.stride = i.stride as usize;
    l.pad = i.pad as usize;
    l.k = match i.kcode {
        0 => 1,
        1 => 2,
        2 => 3,
        _ => l.h_in,
    };
    l.precision = precision_from_code(i.precision)?;
    l.rap_threshold = i.theta;
    l.prune_keep = i.keep as usize;
    l.relu = i.relu == 1;
    l.quant = QuantParams {
        alpha: 1,
        beta: 1,
        signed_output: i.signed == 1,
    };
    l.residual_src = match i.residual {
        0 => None,
        d => Some(index.checked_sub(d as usize).ok_or(Error::MissingResidual {
            layer: index,
            source_layer: usize::MAX,
        })?),
    };
    let (h, w) = match kind {
        LayerKind::Fc | LayerKind::Gap => (1, 1),
        _ => {
            let dim = |x: usize| -> Result<usize> {
                let padded = x + 2 * l.pad;
                if x == 0 || padded < l.k || l.stride == 0 {
                    return Err(Error::InvalidDimension {
                        layer: index,
                        detail: format!("input {x} with pad {} and kernel {}", l.pad, l.k),
                    });
                }
                Ok((padded - l.k) / l.stride + 1)
            };
            (dim(l.h_in)?, dim(l.w_in)?)
        }
    };
    l.h_out = h;
    l.w_out = w;
    Ok(l)
}

/// Fetches, decodes and executes a program, one layer per instruction.
pub fn dispatch(program: &[u128], image: &[u8], input: &QTensor, opts: &RunOptions, constants: &Constants) -> Result<RunResult> {
    let decoded: Vec<Instruction> = program.iter().map(|&w| decode(w)).collect::<Result<_>>()?;
    let mut needed = vec![false; decoded.len()];
    for (i, ins) in decoded.iter().enumerate() {
        if ins.residual > 0 {
            if let Some(src) = i.checked_sub(ins.residual as usize) {
                needed[src] = true;
            }
        }
    }
    let mut state = ExecState::with_residuals(needed, input.clone(), opts.keep_activations);
    for (i, ins) in decoded.iter().enumerate() {
        let mut spec = to_layer_spec(i, ins)?;
        let params = CompiledLayer::from_image(image, ins.param_base as usize, &spec, constants)?;
        spec.quant.alpha = params.alpha;
        spec.quant.beta = params.beta;
        state.step(i, &spec, &params, opts, constants)?;
    }
    Ok(state.finish())
}

/// Rebuilds the model a program describes, with dense weights decoded from
/// the parameter image. Pruned weights come back as zeros.
pub fn program_model(program: &[u128], image: &[u8], constants: &Constants) -> Result<(ModelGraph, ModelWeights)> {
    let mut layers = Vec::with_capacity(program.len());
    let mut weights = Vec::with_capacity(program.len());
    for (i, &w) in program.iter().enumerate() {
        let ins = decode(w)?;
        let mut spec = to_layer_spec(i, &ins)?;
        let params = CompiledLayer::from_image(image, ins.param_base as usize, &spec, constants)?;
        spec.quant.alpha = params.alpha;
        spec.quant.beta = params.beta;
        weights.push(LayerWeights {
            weights: params.dense_weights(&spec),
            bias: params.bias.clone(),
        });
        layers.push(spec);
    }
    let input = layers.first().map_or(Shape3::new(0, 0, 0), LayerSpec::input_shape);
    let graph = ModelGraph::new("program", input, layers);
    graph.validate()?;
    Ok((graph, ModelWeights { layers: weights }))
}

pub fn program_to_bytes(program: &[u128]) -> Vec<u8> {
    let mut out = (program.len() as u32).to_le_bytes().to_vec();
    for &w in program {
        out.extend_from_slice(&word_to_bytes(w));
    }
    out
}

pub fn program_from_bytes(bytes: &[u8]) -> Result<Vec<u128>> {
    if bytes.len() < 4 {
        return Err(Error::format("program", "missing count header"));
    }
    let count = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    let body = &bytes[4..];
    if body.len() != count * WORD_BYTES {
        return Err(Error::format(
            "program",
            format!("{count} instructions need {} bytes, found {}", count * WORD_BYTES, body.len()),
        ));
    }
    Ok(body
        .chunks_exact(WORD_BYTES)
        .map(|c| word_from_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_program(path: impl AsRef<Path>, program: &[u128]) -> Result<()> {
    write_file(path.as_ref(), &program_to_bytes(program))
}

pub fn load_program(path: impl AsRef<Path>) -> Result<Vec<u128>> {
    program_from_bytes(&read_file(path.as_ref())?)
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.opcode, self.pool_mode) {
            (Opcode::Pool, 0) => "POOL.MAX",
            (Opcode::Pool, _) => "POOL.AVG",
            (op, _) => op.mnemonic(),
        };
        let k = match self.kcode {
            3 => "G".to_string(),
            c => (c + 1).to_string(),
        };
        let bits = precision_from_code(self.precision).map_or(0, |p| p.bits());
        write!(
            f,
            "{name:<8} in={}x{}x{} n={} k={k} s={} p={} {}b theta={} keep={} relu={} signed={} res={} base={}",
            self.h_in,
            self.w_in,
            self.m,
            self.n,
            self.stride,
            self.pad,
            bits,
            self.theta,
            self.keep,
            self.relu,
            self.signed,
            self.residual,
            self.param_base
        )
    }
}

/// Text listing: address, raw word and decoded fields, one per line.
pub fn disassemble(program: &[u128]) -> String {
    program
        .iter()
        .enumerate()
        .map(|(a, &w)| match decode(w) {
            Ok(i) => format!("{a:04}  {w:020x}  {i}\n"),
            Err(e) => format!("{a:04}  {w:020x}  ; {e}\n"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bundled;
    use crate::weights::{compile, ModelWeights};

    #[test]
    fn widths_fill_the_word() {
        assert_eq!(FIELDS.iter().map(|f| f.1).sum::<u32>(), WORD_BITS);
    }

    #[test]
    fn zero_fields_leave_only_opcode() {
        let w = encode(&Instruction::empty(Opcode::Pool)).unwrap();
        assert_eq!(w, 4u128 << 77);
        assert_eq!(encode(&Instruction::empty(Opcode::Conv)).unwrap(), 0);
    }

    #[test]
    fn overflow_names_field() {
        let mut v = Instruction::empty(Opcode::Pw).values();
        v[7] = 512;
        match Instruction::from_values(&v) {
            Err(Error::FieldOverflow { field, .. }) => assert_eq!(field, "m"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn illegal_opcode() {
        assert!(matches!(decode(7u128 << 77), Err(Error::IllegalInstruction(7))));
        assert!(decode(1u128 << 80).is_err());
    }

    #[test]
    fn bundled_programs_roundtrip() {
        let c = Constants::default();
        for (g, count) in [(bundled::dscnn(), 19), (bundled::mobilenetv1(), 29)] {
            let cw = compile(&g, &ModelWeights::zeros(&g), None, &c).unwrap();
            let prog = assemble(&g, &cw).unwrap();
            assert_eq!(prog.len(), count);
            let words: Vec<u128> = prog.iter().map(|i| encode(i).unwrap()).collect();
            let back = program_from_bytes(&program_to_bytes(&words)).unwrap();
            assert_eq!(back, words);
            for (i, (w, l)) in words.iter().zip(&g.layers).enumerate() {
                let ins = decode(*w).unwrap();
                assert_eq!(ins, prog[i]);
                let mut spec = to_layer_spec(i, &ins).unwrap();
                spec.quant.alpha = l.quant.alpha;
                spec.quant.beta = l.quant.beta;
                assert_eq!(&spec, l, "layer {i}");
            }
        }
    }

    #[test]
    fn empty_graph_assembles_to_nothing() {
        let g = ModelGraph::new("e", crate::Shape3::new(1, 1, 1), vec![]);
        let cw = compile(&g, &ModelWeights::zeros(&g), None, &Constants::default()).unwrap();
        assert!(assemble(&g, &cw).unwrap().is_empty());
    }

    #[test]
    fn disassembly_mentions_opcode() {
        let w = encode(&Instruction::empty(Opcode::Dw)).unwrap();
        assert!(disassemble(&[w]).contains("DW"));
    }
}
