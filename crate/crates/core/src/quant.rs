//! Dyadic requantization and sub-byte operand packing.

use crate::error::{Error, Result};
use crate::model::{Precision, QuantParams};

/// Scales an accumulator by `alpha / 2^beta` with round-half-up and clamps
/// the result to the 8-bit signed or unsigned range.
pub fn requantize(acc: i64, alpha: u8, beta: u8, signed_output: bool) -> i32 {
    requantize_to(acc, alpha, beta, signed_output, Precision::B8)
}

/// [`requantize`] with the clamp range taken from `precision`.
pub fn requantize_to(acc: i64, alpha: u8, beta: u8, signed_output: bool, precision: Precision) -> i32 {
    let (lo, hi) = precision.range(signed_output);
    let scaled = alpha as i64 * acc;
    let v = if beta == 0 {
        scaled
    } else if beta > 62 {
        // Shifts this wide leave only the sign; rounding makes it zero.
        0
    } else {
        (scaled + (1i64 << (beta - 1))) >> beta
    };
    v.clamp(lo as i64, hi as i64) as i32
}

pub fn requantize_q(acc: i64, q: &QuantParams, precision: Precision) -> i32 {
    requantize_to(acc, q.alpha, q.beta, q.signed_output, precision)
}

/// Sub-byte operands packed several to a byte, lane 0 in the low bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedOperands {
    pub bytes: Vec<u8>,
    pub precision: Precision,
    pub signed: bool,
    /// Number of valid lanes; the last byte may be partially filled.
    pub len: usize,
}

impl PackedOperands {
    pub fn lanes_per_byte(&self) -> usize {
        self.precision.lanes_per_byte()
    }

    pub fn unpack(&self) -> Vec<i32> {
        let bits = self.precision.bits();
        let mask = (1u32 << bits) - 1;
        (0..self.len)
            .map(|i| {
                let lanes = self.lanes_per_byte();
                let raw = (self.bytes[i / lanes] as u32 >> ((i % lanes) as u32 * bits)) & mask;
                if self.signed && raw >> (bits - 1) == 1 {
                    raw as i32 - (1 << bits)
                } else {
                    raw as i32
                }
            })
            .collect()
    }
}

pub fn pack_operands(values: &[i32], precision: Precision, signed: bool) -> Result<PackedOperands> {
    let bits = precision.bits();
    let (lo, hi) = precision.range(signed);
    let lanes = precision.lanes_per_byte();
    let mut bytes = vec![0u8; values.len().div_ceil(lanes)];
    for (i, &v) in values.iter().enumerate() {
        if v < lo || v > hi {
            return Err(Error::OutOfRange {
                value: v as i64,
                bits,
                signedness: if signed { "signed" } else { "unsigned" },
            });
        }
        let field = (v as u32) & ((1u32 << bits) - 1);
        bytes[i / lanes] |= (field << ((i % lanes) as u32 * bits)) as u8;
    }
    Ok(PackedOperands {
        bytes,
        precision,
        signed,
        len: values.len(),
    })
}

/// Lane-wise products of two packed operand vectors.
pub fn simd_multiply(w: &PackedOperands, ia: &PackedOperands) -> Result<Vec<i32>> {
    if w.precision != ia.precision || w.len != ia.len {
        return Err(Error::LaneMismatch(format!(
            "weights {} lanes at {}b, activations {} lanes at {}b",
            w.len,
            w.precision.bits(),
            ia.len,
            ia.precision.bits()
        )));
    }
    Ok(w
        .unpack()
        .into_iter()
        .zip(ia.unpack())
        .map(|(a, b)| a * b)
        .collect())
}

/// Multiplier cycles needed for `count` products at `precision`.
pub fn multiplier_cycles(count: usize, precision: Precision) -> usize {
    count.div_ceil(precision.lanes_per_byte())
}
