//! Network description: layer descriptors, shape inference and the
//! model-description text format.
//!
//! A model file is UTF-8 text with one record per line. Blank lines and `#`
//! comments are ignored. The first record is the header:
//!
//! ```text
//! model name=dscnn input=30x32x1
//! ```
//!
//! Every following record describes one layer, in execution order:
//!
//! ```text
//! conv k=3 stride=1 pad=0 n=64 alpha=3 beta=9 out=28x30x64
//! dw   k=3 stride=2 pad=1 alpha=5 beta=8
//! pw   n=64 keep=8 theta=20
//! gap  alpha=1 beta=4
//! fc   n=12 relu=0 signed=1
//! ```
//!
//! See `docs/model-format.md` for the full grammar.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result, TextPos};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Dw,
    Pw,
    Fc,
    MaxPool,
    AvgPool,
    /// Global average pooling: an average pool whose window is the whole map.
    Gap,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::Conv,
        LayerKind::Dw,
        LayerKind::Pw,
        LayerKind::Fc,
        LayerKind::MaxPool,
        LayerKind::AvgPool,
        LayerKind::Gap,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Dw => "dw",
            LayerKind::Pw => "pw",
            LayerKind::Fc => "fc",
            LayerKind::MaxPool => "maxpool",
            LayerKind::AvgPool => "avgpool",
            LayerKind::Gap => "gap",
        }
    }

    pub fn is_pool(self) -> bool {
        matches!(self, LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::Gap)
    }

    /// Layers that carry a weight tensor.
    pub fn has_weights(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::Dw | LayerKind::Pw | LayerKind::Fc
        )
    }

    /// Layers whose outputs pass through the post-processing scale stage and
    /// therefore own a per-channel parameter record.
    pub fn has_ppm_params(self) -> bool {
        !matches!(self, LayerKind::MaxPool)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.keyword().to_uppercase())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.keyword() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Unsupported {
                what: "layer kind",
                value: s.to_string(),
            })
    }
}

/// Operand precision of weights and activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    B2,
    B4,
    #[default]
    B8,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::B2 => 2,
            Precision::B4 => 4,
            Precision::B8 => 8,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            2 => Ok(Precision::B2),
            4 => Ok(Precision::B4),
            8 => Ok(Precision::B8),
            other => Err(Error::Unsupported {
                what: "precision",
                value: other.to_string(),
            }),
        }
    }

    /// Operands packed into one 8-bit multiplier.
    pub fn lanes_per_byte(self) -> usize {
        (8 / self.bits()) as usize
    }

    pub fn range(self, signed: bool) -> (i32, i32) {
        let b = self.bits();
        if signed {
            (-(1 << (b - 1)), (1 << (b - 1)) - 1)
        } else {
            (0, (1 << b) - 1)
        }
    }

    /// Bytes occupied by `elems` values stored densely.
    pub fn bytes_for(self, elems: u64) -> u64 {
        (elems * self.bits() as u64).div_ceil(8)
    }
}

/// Dyadic requantization scale `alpha / 2^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantParams {
    pub alpha: u8,
    pub beta: u8,
    pub signed_output: bool,
}

impl Default for QuantParams {
    fn default() -> Self {
        QuantParams {
            alpha: 1,
            beta: 1,
            signed_output: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape3 {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Shape3 { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

impl FromStr for Shape3 {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<_> = s.split('x').collect();
        if parts.len() != 3 {
            return Err(format!("expected HxWxC, got `{s}`"));
        }
        let p = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| format!("bad dimension `{t}` in `{s}`"))
        };
        Ok(Shape3::new(p(parts[0])?, p(parts[1])?, p(parts[2])?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub h_in: usize,
    pub w_in: usize,
    pub m: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub n: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub precision: Precision,
    /// Non-zeros kept per weight-tile row (PW only; 16 means dense).
    pub prune_keep: usize,
    /// Run-time activation pruning threshold applied to this layer's IA.
    pub rap_threshold: u8,
    pub quant: QuantParams,
    pub relu: bool,
    pub residual_src: Option<usize>,
}

impl LayerSpec {
    /// A layer with default attributes; shapes are filled by [`infer_shapes`].
    pub fn new(kind: LayerKind) -> Self {
        let k = match kind {
            LayerKind::Conv | LayerKind::Dw => 3,
            LayerKind::MaxPool | LayerKind::AvgPool => 2,
            _ => 1,
        };
        let stride = match kind {
            LayerKind::MaxPool | LayerKind::AvgPool => 2,
            _ => 1,
        };
        LayerSpec {
            kind,
            h_in: 0,
            w_in: 0,
            m: 0,
            h_out: 0,
            w_out: 0,
            n: 0,
            k,
            stride,
            pad: 0,
            precision: Precision::B8,
            prune_keep: 16,
            rap_threshold: 0,
            quant: QuantParams::default(),
            relu: !kind.is_pool(),
            residual_src: None,
        }
    }

    pub fn input_shape(&self) -> Shape3 {
        Shape3::new(self.h_in, self.w_in, self.m)
    }

    pub fn output_shape(&self) -> Shape3 {
        Shape3::new(self.h_out, self.w_out, self.n)
    }

    /// Pooling window as (height, width).
    pub fn window(&self) -> (usize, usize) {
        match self.kind {
            LayerKind::Gap => (self.h_in, self.w_in),
            _ => (self.k, self.k),
        }
    }

    /// Number of weights for this layer's dense weight tensor.
    pub fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.k * self.k * self.m * self.n,
            LayerKind::Dw => self.k * self.k * self.m,
            LayerKind::Pw | LayerKind::Fc => self.m * self.n,
            _ => 0,
        }
    }

    /// Dense multiply-accumulate count.
    pub fn macs(&self) -> u64 {
        let out_px = (self.h_out * self.w_out) as u64;
        let k2 = (self.k * self.k) as u64;
        match self.kind {
            LayerKind::Conv => k2 * self.m as u64 * self.n as u64 * out_px,
            LayerKind::Dw => k2 * self.m as u64 * out_px,
            LayerKind::Pw => self.m as u64 * self.n as u64 * out_px,
            LayerKind::Fc => self.m as u64 * self.n as u64,
            _ => 0,
        }
    }

    fn label(&self, index: usize) -> String {
        format!("#{index} {}", self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelGraph {
    pub name: String,
    pub input: Shape3,
    pub layers: Vec<LayerSpec>,
}

impl ModelGraph {
    pub fn new(name: impl Into<String>, input: Shape3, layers: Vec<LayerSpec>) -> Self {
        ModelGraph {
            name: name.into(),
            input,
            layers,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn output_shape(&self) -> Shape3 {
        self.layers
            .last()
            .map(LayerSpec::output_shape)
            .unwrap_or(self.input)
    }

    pub fn layers_of(&self, kind: LayerKind) -> impl Iterator<Item = (usize, &LayerSpec)> {
        self.layers
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.kind == kind)
    }

    /// Checks every structural invariant: chained shapes, per-kind shape
    /// rules, attribute ranges and residual sources.
    pub fn validate(&self) -> Result<()> {
        let mut prev = self.input;
        for (i, l) in self.layers.iter().enumerate() {
            if l.input_shape() != prev {
                let producer = if i == 0 {
                    "input".to_string()
                } else {
                    self.layers[i - 1].label(i - 1)
                };
                return Err(Error::ShapeMismatch {
                    producer,
                    consumer: l.label(i),
                    detail: format!("produces {prev}, consumer expects {}", l.input_shape()),
                });
            }
            let expect = output_shape_of(i, l)?;
            if expect != l.output_shape() {
                return Err(Error::InvalidDimension {
                    layer: i,
                    detail: format!("output {} but shape rule gives {expect}", l.output_shape()),
                });
            }
            validate_attrs(i, l)?;
            if let Some(src) = l.residual_src {
                if src >= i {
                    return Err(Error::MissingResidual {
                        layer: i,
                        source_layer: src,
                    });
                }
                let s = self.layers[src].output_shape();
                if s != l.output_shape() {
                    return Err(Error::ShapeMismatch {
                        producer: self.layers[src].label(src),
                        consumer: l.label(i),
                        detail: format!("residual {s} vs output {}", l.output_shape()),
                    });
                }
            }
            prev = l.output_shape();
        }
        Ok(())
    }
}

fn validate_attrs(i: usize, l: &LayerSpec) -> Result<()> {
    let bad = |detail: String| Err(Error::InvalidDimension { layer: i, detail });
    if !(1..=2).contains(&l.stride) {
        return bad(format!("stride {} not in {{1,2}}", l.stride));
    }
    if l.prune_keep > 16 {
        return bad(format!("keep {} exceeds tile width 16", l.prune_keep));
    }
    if l.quant.alpha == 0 || l.quant.beta == 0 {
        return bad("alpha and beta must be >= 1".into());
    }
    match l.kind {
        LayerKind::Pw | LayerKind::Fc if l.k != 1 => bad(format!("{} requires k=1", l.kind)),
        LayerKind::Dw if l.n != l.m => bad("DW requires n = m".into()),
        LayerKind::Gap if l.h_out != 1 || l.w_out != 1 || l.n != l.m => {
            bad("GAP output must be 1x1xM".into())
        }
        _ => Ok(()),
    }
}

fn conv_dim(layer: usize, name: &str, input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if input == 0 || padded < k {
        return Err(Error::InvalidDimension {
            layer,
            detail: format!("{name}: input {input} with pad {pad} smaller than kernel {k}"),
        });
    }
    Ok((padded - k) / stride + 1)
}

fn output_shape_of(i: usize, l: &LayerSpec) -> Result<Shape3> {
    if l.m == 0 {
        return Err(Error::InvalidDimension {
            layer: i,
            detail: "zero input channels".into(),
        });
    }
    let stride = l.stride.max(1);
    match l.kind {
        LayerKind::Conv | LayerKind::Dw | LayerKind::MaxPool | LayerKind::AvgPool => {
            let h = conv_dim(i, "height", l.h_in, l.k, stride, l.pad)?;
            let w = conv_dim(i, "width", l.w_in, l.k, stride, l.pad)?;
            let n = if l.kind == LayerKind::Conv { l.n } else { l.m };
            if n == 0 {
                return Err(Error::InvalidDimension {
                    layer: i,
                    detail: "zero output channels".into(),
                });
            }
            Ok(Shape3::new(h, w, n))
        }
        LayerKind::Pw => {
            if l.n == 0 || l.h_in == 0 || l.w_in == 0 {
                return Err(Error::InvalidDimension {
                    layer: i,
                    detail: "zero dimension".into(),
                });
            }
            let h = conv_dim(i, "height", l.h_in, 1, stride, 0)?;
            let w = conv_dim(i, "width", l.w_in, 1, stride, 0)?;
            Ok(Shape3::new(h, w, l.n))
        }
        LayerKind::Fc => {
            if l.h_in != 1 || l.w_in != 1 {
                return Err(Error::InvalidDimension {
                    layer: i,
                    detail: format!("FC expects a 1x1 input, got {}x{}", l.h_in, l.w_in),
                });
            }
            if l.n == 0 {
                return Err(Error::InvalidDimension {
                    layer: i,
                    detail: "zero output channels".into(),
                });
            }
            Ok(Shape3::new(1, 1, l.n))
        }
        LayerKind::Gap => {
            if l.h_in == 0 || l.w_in == 0 {
                return Err(Error::InvalidDimension {
                    layer: i,
                    detail: "zero dimension".into(),
                });
            }
            Ok(Shape3::new(1, 1, l.m))
        }
    }
}

/// Fills every layer's input and output dimensions from the graph input and
/// each layer's kernel, stride, pad and channel count.
pub fn infer_shapes(graph: &ModelGraph) -> Result<ModelGraph> {
    let mut out = graph.clone();
    let mut cur = graph.input;
    for (i, l) in out.layers.iter_mut().enumerate() {
        l.h_in = cur.h;
        l.w_in = cur.w;
        l.m = cur.c;
        match l.kind {
            LayerKind::Pw | LayerKind::Fc => l.k = 1,
            LayerKind::Gap => {
                l.k = cur.h;
                l.stride = 1;
                l.pad = 0;
            }
            _ => {}
        }
        let s = output_shape_of(i, l)?;
        l.h_out = s.h;
        l.w_out = s.w;
        l.n = s.c;
        cur = s;
    }
    Ok(out)
}

struct Record<'a> {
    line: usize,
    keyword: (&'a str, usize),
    pairs: Vec<(&'a str, &'a str, usize)>,
}

fn tokenize(text: &str) -> Result<Vec<Record<'_>>> {
    let mut records = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let mut tokens = Vec::new();
        let mut pos = 0;
        for tok in content.split_whitespace() {
            let col = content[pos..].find(tok).unwrap() + pos;
            pos = col + tok.len();
            tokens.push((tok, col + 1));
        }
        let Some((&first, rest)) = tokens.split_first() else {
            continue;
        };
        let mut pairs = Vec::new();
        for &(tok, col) in rest {
            let Some((k, v)) = tok.split_once('=') else {
                return Err(Error::Syntax {
                    pos: TextPos { line, column: col },
                    msg: format!("expected key=value, found `{tok}`"),
                });
            };
            if k.is_empty() || v.is_empty() {
                return Err(Error::Syntax {
                    pos: TextPos { line, column: col },
                    msg: format!("empty key or value in `{tok}`"),
                });
            }
            pairs.push((k, v, col));
        }
        records.push(Record {
            line,
            keyword: first,
            pairs,
        });
    }
    Ok(records)
}

fn parse_num<T: FromStr>(line: usize, col: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Syntax {
        pos: TextPos { line, column: col },
        msg: format!("invalid value `{v}` for `{key}`"),
    })
}

fn parse_flag(line: usize, col: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        _ => Err(Error::Syntax {
            pos: TextPos { line, column: col },
            msg: format!("invalid flag `{v}` for `{key}`"),
        }),
    }
}

/// Parses a model-description document, infers shapes and validates the
/// result. Any `out=` annotation must agree with the inferred output shape.
pub fn parse_model(text: &str) -> Result<ModelGraph> {
    let records = tokenize(text)?;
    let mut it = records.into_iter();
    let header = it.next().ok_or(Error::Syntax {
        pos: TextPos { line: 1, column: 1 },
        msg: "empty document; expected `model` header".into(),
    })?;
    if header.keyword.0 != "model" {
        return Err(Error::Syntax {
            pos: TextPos {
                line: header.line,
                column: header.keyword.1,
            },
            msg: format!("expected `model` header, found `{}`", header.keyword.0),
        });
    }
    let mut name = String::from("model");
    let mut input = None;
    for (k, v, col) in header.pairs {
        match k {
            "name" => name = v.to_string(),
            "input" => {
                input = Some(v.parse::<Shape3>().map_err(|msg| Error::Syntax {
                    pos: TextPos {
                        line: header.line,
                        column: col,
                    },
                    msg,
                })?)
            }
            _ => {
                return Err(Error::Syntax {
                    pos: TextPos {
                        line: header.line,
                        column: col,
                    },
                    msg: format!("unknown header key `{k}`"),
                })
            }
        }
    }
    let input = input.ok_or(Error::Syntax {
        pos: TextPos {
            line: header.line,
            column: 1,
        },
        msg: "header is missing `input=HxWxC`".into(),
    })?;

    let mut layers = Vec::new();
    let mut expected_out = Vec::new();
    for rec in it {
        let (kw, kcol) = rec.keyword;
        let kind: LayerKind = kw.parse().map_err(|_| Error::Syntax {
            pos: TextPos {
                line: rec.line,
                column: kcol,
            },
            msg: format!("unknown layer kind `{kw}`"),
        })?;
        let mut l = LayerSpec::new(kind);
        let mut out = None;
        let line = rec.line;
        for (k, v, col) in rec.pairs {
            match k {
                "k" => l.k = parse_num(line, col, k, v)?,
                "stride" => l.stride = parse_num(line, col, k, v)?,
                "pad" => l.pad = parse_num(line, col, k, v)?,
                "n" => l.n = parse_num(line, col, k, v)?,
                "precision" => {
                    let bits: u32 = parse_num(line, col, k, v)?;
                    l.precision = Precision::from_bits(bits)?;
                }
                "keep" => l.prune_keep = parse_num(line, col, k, v)?,
                "theta" => l.rap_threshold = parse_num(line, col, k, v)?,
                "alpha" => l.quant.alpha = parse_num(line, col, k, v)?,
                "beta" => l.quant.beta = parse_num(line, col, k, v)?,
                "signed" => l.quant.signed_output = parse_flag(line, col, k, v)?,
                "relu" => l.relu = parse_flag(line, col, k, v)?,
                "residual" => l.residual_src = Some(parse_num(line, col, k, v)?),
                "out" => {
                    out = Some(v.parse::<Shape3>().map_err(|msg| Error::Syntax {
                        pos: TextPos { line, column: col },
                        msg,
                    })?)
                }
                _ => {
                    return Err(Error::Syntax {
                        pos: TextPos { line, column: col },
                        msg: format!("unknown layer key `{k}`"),
                    })
                }
            }
        }
        if matches!(kind, LayerKind::Pw | LayerKind::Fc) && l.k != 1 {
            return Err(Error::Syntax {
                pos: TextPos { line, column: kcol },
                msg: format!("{kind} layers require k=1"),
            });
        }
        layers.push(l);
        expected_out.push(out);
    }

    let graph = infer_shapes(&ModelGraph::new(name, input, layers))?;
    for (i, exp) in expected_out.into_iter().enumerate() {
        if let Some(exp) = exp {
            let got = graph.layers[i].output_shape();
            if exp != got {
                let consumer = if i + 1 < graph.len() {
                    graph.layers[i + 1].label(i + 1)
                } else {
                    "output".into()
                };
                return Err(Error::ShapeMismatch {
                    producer: graph.layers[i].label(i),
                    consumer,
                    detail: format!("declared out={exp} but shape rule gives {got}"),
                });
            }
        }
    }
    graph.validate()?;
    Ok(graph)
}

/// Writes a graph in the model-description format. Every attribute is
/// spelled out so that `parse_model(serialize_model(g)) == g`.
pub fn serialize_model(graph: &ModelGraph) -> String {
    let mut s = format!("model name={} input={}\n", graph.name, graph.input);
    for l in &graph.layers {
        s.push_str(l.kind.keyword());
        if !matches!(l.kind, LayerKind::Pw | LayerKind::Fc | LayerKind::Gap) {
            s.push_str(&format!(" k={} stride={} pad={}", l.k, l.stride, l.pad));
        }
        if matches!(l.kind, LayerKind::Conv | LayerKind::Pw | LayerKind::Fc) {
            s.push_str(&format!(" n={}", l.n));
        }
        s.push_str(&format!(
            " precision={} keep={} theta={} alpha={} beta={} signed={} relu={}",
            l.precision.bits(),
            l.prune_keep,
            l.rap_threshold,
            l.quant.alpha,
            l.quant.beta,
            l.quant.signed_output as u8,
            l.relu as u8
        ));
        if let Some(r) = l.residual_src {
            s.push_str(&format!(" residual={r}"));
        }
        s.push_str(&format!(" out={}\n", l.output_shape()));
    }
    s
}

/// The two networks shipped with the crate.
pub mod bundled {
    use super::*;

    pub const DSCNN_TEXT: &str = include_str!("../models/dscnn.model");
    pub const MOBILENETV1_TEXT: &str = include_str!("../models/mobilenetv1.model");

    pub fn dscnn() -> ModelGraph {
        parse_model(DSCNN_TEXT).expect("bundled dscnn.model is valid")
    }

    pub fn mobilenetv1() -> ModelGraph {
        parse_model(MOBILENETV1_TEXT).expect("bundled mobilenetv1.model is valid")
    }

    /// Looks a bundled model up by file name (`dscnn.model`) or stem.
    pub fn by_name(name: &str) -> Option<ModelGraph> {
        let stem = name.trim_end_matches(".model");
        let stem = stem.rsplit('/').next().unwrap_or(stem);
        match stem {
            "dscnn" => Some(dscnn()),
            "mobilenetv1" => Some(mobilenetv1()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(l: &LayerSpec) -> (Shape3, Shape3) {
        (l.input_shape(), l.output_shape())
    }

    #[test]
    fn single_pw_identity() {
        let g = parse_model("model input=1x1x1\npw n=1\n").unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.layers[0].input_shape(), g.layers[0].output_shape());
    }

    #[test]
    fn dw_stride2_and_conv_shapes() {
        let g = parse_model("model input=28x30x64\ndw k=3 stride=2 pad=1\n").unwrap();
        assert_eq!(g.layers[0].output_shape(), Shape3::new(14, 15, 64));
        let g = parse_model("model input=96x96x1\nconv k=3 stride=2 pad=0 n=16\n").unwrap();
        assert_eq!(g.layers[0].output_shape(), Shape3::new(47, 47, 16));
        let g = parse_model("model input=7x9x8\npw n=4\n").unwrap();
        assert_eq!(g.layers[0].output_shape(), Shape3::new(7, 9, 4));
    }

    #[test]
    fn dscnn_matches_layer_table() {
        let g = bundled::dscnn();
        assert_eq!(g.len(), 19);
        assert_eq!(
            dims(&g.layers[0]),
            (Shape3::new(30, 32, 1), Shape3::new(28, 30, 64))
        );
        assert_eq!(g.layers[3].output_shape(), Shape3::new(14, 15, 64));
        assert_eq!(g.layers[5].output_shape(), Shape3::new(7, 8, 64));
        assert_eq!(g.layers[7].output_shape(), Shape3::new(4, 4, 64));
        assert_eq!(g.layers[17].kind, LayerKind::Gap);
        assert_eq!(g.output_shape(), Shape3::new(1, 1, 12));
    }

    #[test]
    fn mobilenet_matches_layer_table() {
        let g = bundled::mobilenetv1();
        assert_eq!(g.len(), 29);
        assert_eq!(g.layers[0].output_shape(), Shape3::new(47, 47, 16));
        assert_eq!(g.layers[3].output_shape(), Shape3::new(24, 24, 16));
        assert_eq!(g.layers[4].output_shape(), Shape3::new(24, 24, 32));
        assert_eq!(g.layers[24].output_shape(), Shape3::new(6, 6, 256));
        let last = g.layers.last().unwrap();
        assert_eq!(dims(last), (Shape3::new(1, 1, 256), Shape3::new(1, 1, 2)));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_model("model input=4x4x4\npw n=4 bogus\n").unwrap_err();
        match err {
            Error::Syntax { pos, .. } => assert_eq!((pos.line, pos.column), (2, 8)),
            e => panic!("unexpected {e}"),
        }
        let err = parse_model("model input=4x4x4\nsoftmax\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { .. }));
    }

    #[test]
    fn declared_shape_mismatch_names_layers() {
        let err = parse_model("model input=8x8x4\ndw k=3 stride=1 pad=1 out=4x4x4\npw n=8\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("#0 DW") && msg.contains("#1 PW"), "{msg}");
    }

    #[test]
    fn validate_rejects_broken_chain() {
        let mut g = parse_model("model input=8x8x4\npw n=8\npw n=8\n").unwrap();
        g.layers[1].m = 5;
        assert!(matches!(g.validate(), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn unsupported_precision() {
        assert!(matches!(
            parse_model("model input=1x1x1\npw n=1 precision=3\n"),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn zero_derived_dimension_errors() {
        assert!(parse_model("model input=2x2x1\nconv k=3 n=1\n").is_err());
    }

    #[test]
    fn serialize_roundtrip_bundled() {
        for g in [bundled::dscnn(), bundled::mobilenetv1()] {
            let again = parse_model(&serialize_model(&g)).unwrap();
            assert_eq!(again, g);
        }
    }

    #[test]
    fn infer_is_idempotent() {
        let g = bundled::mobilenetv1();
        let once = infer_shapes(&g).unwrap();
        assert_eq!(infer_shapes(&once).unwrap(), once);
        assert_eq!(once, g);
    }

    #[test]
    fn residual_source_checked() {
        let ok = parse_model("model input=4x4x8\npw n=8\npw n=8 residual=0\n").unwrap();
        assert_eq!(ok.layers[1].residual_src, Some(0));
        assert!(parse_model("model input=4x4x8\npw n=8\npw n=16 residual=0\n").is_err());
        assert!(parse_model("model input=4x4x8\npw n=8 residual=0\n").is_err());
    }
}
