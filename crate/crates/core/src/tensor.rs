//! Quantized activation tensors and their file formats.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic  "RQT1"
//! h, w, c    u32 each
//! bits       u8   (2, 4 or 8)
//! signed     u8   (0 or 1)
//! payload    h*w*c bytes, HWC order, one element per byte (two's complement
//!            when signed)
//! ```

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Precision, Shape3};

const MAGIC: &[u8; 4] = b"RQT1";

/// Integer tensor stored in HWC order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTensor {
    shape: Shape3,
    precision: Precision,
    signed: bool,
    data: Vec<i32>,
}

impl QTensor {
    pub fn new(shape: Shape3, precision: Precision, signed: bool, data: Vec<i32>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::format(
                "tensor",
                format!("payload has {} elements, shape {shape} needs {}", data.len(), shape.len()),
            ));
        }
        let (lo, hi) = precision.range(signed);
        if let Some(&v) = data.iter().find(|&&v| v < lo || v > hi) {
            return Err(Error::OutOfRange {
                value: v as i64,
                bits: precision.bits(),
                signedness: if signed { "signed" } else { "unsigned" },
            });
        }
        Ok(QTensor {
            shape,
            precision,
            signed,
            data,
        })
    }

    /// Skips the range check; for scratch views that may hold mixed data.
    pub(crate) fn from_raw(shape: Shape3, precision: Precision, signed: bool, data: Vec<i32>) -> Self {
        debug_assert_eq!(data.len(), shape.len());
        QTensor {
            shape,
            precision,
            signed,
            data,
        }
    }

    pub fn zeros(shape: Shape3, precision: Precision, signed: bool) -> Self {
        QTensor {
            shape,
            precision,
            signed,
            data: vec![0; shape.len()],
        }
    }

    /// Unsigned 8-bit tensor where roughly `zero_fraction` of the elements
    /// are zero and the rest are drawn uniformly from `1..=max`.
    pub fn random<R: Rng>(shape: Shape3, zero_fraction: f64, max: i32, rng: &mut R) -> Self {
        let data = (0..shape.len())
            .map(|_| {
                if rng.gen_bool(zero_fraction.clamp(0.0, 1.0)) {
                    0
                } else {
                    rng.gen_range(1..=max.clamp(1, 255))
                }
            })
            .collect();
        QTensor {
            shape,
            precision: Precision::B8,
            signed: false,
            data,
        }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<i32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.shape.w + x) * self.shape.c + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> i32 {
        self.data[self.index(y, x, c)]
    }

    /// Value at a possibly out-of-bounds position; padding reads as zero.
    #[inline]
    pub fn get_padded(&self, y: isize, x: isize, c: usize) -> i32 {
        if y < 0 || x < 0 || y as usize >= self.shape.h || x as usize >= self.shape.w {
            0
        } else {
            self.get(y as usize, x as usize, c)
        }
    }

    /// All channels of one pixel.
    pub fn pixel(&self, y: usize, x: usize) -> &[i32] {
        let i = self.index(y, x, 0);
        &self.data[i..i + self.shape.c]
    }

    pub fn zero_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 0).count()
    }

    pub fn sparsity(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.zero_count() as f64 / self.data.len() as f64
        }
    }

    /// Same values under a different shape with equal element count.
    pub fn reshaped(&self, shape: Shape3) -> Result<Self> {
        QTensor::new(shape, self.precision, self.signed, self.data.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18 + self.data.len());
        out.extend_from_slice(MAGIC);
        for d in [self.shape.h, self.shape.w, self.shape.c] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(self.precision.bits() as u8);
        out.push(self.signed as u8);
        out.extend(self.data.iter().map(|&v| v as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 18 || &bytes[..4] != MAGIC {
            return Err(Error::format("tensor file", "missing RQT1 header"));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let shape = Shape3::new(dim(0), dim(1), dim(2));
        let precision = Precision::from_bits(bytes[16] as u32)?;
        let signed = match bytes[17] {
            0 => false,
            1 => true,
            b => return Err(Error::format("tensor file", format!("bad signed flag {b}"))),
        };
        let payload = &bytes[18..];
        if payload.len() != shape.len() {
            return Err(Error::format(
                "tensor file",
                format!("payload {} bytes, shape {shape} needs {}", payload.len(), shape.len()),
            ));
        }
        let data = payload
            .iter()
            .map(|&b| if signed { b as i8 as i32 } else { b as i32 })
            .collect();
        QTensor::new(shape, precision, signed, data)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::io("reading tensor", e))?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes =
            std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }

    /// Human-readable dump, one line per (row, column) pixel.
    pub fn text_dump(&self) -> String {
        let mut s = format!(
            "# {} {}b {}\n",
            self.shape,
            self.precision.bits(),
            if self.signed { "signed" } else { "unsigned" }
        );
        for y in 0..self.shape.h {
            for x in 0..self.shape.w {
                let vals: Vec<String> = self.pixel(y, x).iter().map(i32::to_string).collect();
                let _ = writeln!(s, "{y},{x}: {}", vals.join(" "));
            }
        }
        s
    }
}
