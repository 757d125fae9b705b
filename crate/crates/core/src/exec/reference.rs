//! Dense loop-nest oracle. No tiling, no sparsity, no instrumentation.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec, ModelGraph};
use crate::quant::requantize_to;
use crate::tensor::QTensor;
use crate::weights::ModelWeights;

fn check_input(spec: &LayerSpec, ia: &QTensor, w: &[i32]) -> Result<()> {
    if ia.shape() != spec.input_shape() {
        return Err(Error::ShapeMismatch {
            producer: "input tensor".into(),
            consumer: spec.kind.to_string(),
            detail: format!("tensor is {}, layer expects {}", ia.shape(), spec.input_shape()),
        });
    }
    if w.len() != spec.weight_count() {
        return Err(Error::ShapeMismatch {
            producer: "weights".into(),
            consumer: spec.kind.to_string(),
            detail: format!("{} weights, layer needs {}", w.len(), spec.weight_count()),
        });
    }
    Ok(())
}

/// Raw accumulators (or window maxima for max pooling) in HWC order.
pub fn reference_execute(spec: &LayerSpec, ia: &QTensor, w: &[i32]) -> Result<Vec<i64>> {
    reference_execute_pixels(spec, ia, w, 0..spec.h_out * spec.w_out)
}

/// [`reference_execute`] restricted to a range of output pixels in raster
/// order.
pub fn reference_execute_pixels(spec: &LayerSpec, ia: &QTensor, w: &[i32], pixels: Range<usize>) -> Result<Vec<i64>> {
    check_input(spec, ia, w)?;
    let (k, s, p) = (spec.k as isize, spec.stride as isize, spec.pad as isize);
    let (m, n) = (spec.m, spec.n);
    let mut out = Vec::with_capacity(pixels.len() * n);
    for px in pixels {
        let (y, x) = ((px / spec.w_out) as isize, (px % spec.w_out) as isize);
        {
            for o in 0..n {
                let v: i64 = match spec.kind {
                    LayerKind::Conv => {
                        let mut acc = 0i64;
                        for ky in 0..k {
                            for kx in 0..k {
                                for c in 0..m {
                                    let a = ia.get_padded(y * s + ky - p, x * s + kx - p, c);
                                    let wi = ((o * spec.k + ky as usize) * spec.k + kx as usize) * m + c;
                                    acc += a as i64 * w[wi] as i64;
                                }
                            }
                        }
                        acc
                    }
                    LayerKind::Dw => {
                        let mut acc = 0i64;
                        for ky in 0..k {
                            for kx in 0..k {
                                let a = ia.get_padded(y * s + ky - p, x * s + kx - p, o);
                                acc += a as i64 * w[(ky as usize * spec.k + kx as usize) * m + o] as i64;
                            }
                        }
                        acc
                    }
                    LayerKind::Pw | LayerKind::Fc => (0..m)
                        .map(|c| ia.get((y * s) as usize, (x * s) as usize, c) as i64 * w[c * n + o] as i64)
                        .sum(),
                    LayerKind::MaxPool => {
                        let mut best = i64::MIN;
                        for ky in 0..k {
                            for kx in 0..k {
                                let (iy, ix) = (y * s + ky - p, x * s + kx - p);
                                if iy >= 0 && ix >= 0 && (iy as usize) < spec.h_in && (ix as usize) < spec.w_in {
                                    best = best.max(ia.get(iy as usize, ix as usize, o) as i64);
                                }
                            }
                        }
                        best
                    }
                    LayerKind::AvgPool | LayerKind::Gap => {
                        let (wh, ww) = spec.window();
                        let mut acc = 0i64;
                        for ky in 0..wh as isize {
                            for kx in 0..ww as isize {
                                acc += ia.get_padded(y * s + ky - p, x * s + kx - p, o) as i64;
                            }
                        }
                        acc
                    }
                };
                out.push(v);
            }
        }
    }
    Ok(out)
}

/// One layer end to end: accumulate, then bias, residual, ReLU and
/// requantization.
pub fn reference_layer(spec: &LayerSpec, ia: &QTensor, w: &[i32], bias: &[i32], residual: Option<&QTensor>) -> Result<QTensor> {
    let data = reference_layer_pixels(spec, ia, w, bias, residual, 0..spec.h_out * spec.w_out)?;
    QTensor::new(spec.output_shape(), spec.precision, spec.quant.signed_output, data)
}

/// Final output values for a range of output pixels.
pub fn reference_layer_pixels(
    spec: &LayerSpec,
    ia: &QTensor,
    w: &[i32],
    bias: &[i32],
    residual: Option<&QTensor>,
    pixels: Range<usize>,
) -> Result<Vec<i32>> {
    let n = spec.n;
    let offset = pixels.start * n;
    let acc = reference_execute_pixels(spec, ia, w, pixels)?;
    let signed = spec.quant.signed_output;
    let (lo, hi) = spec.precision.range(signed);
    Ok(acc
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let i = offset + j;
            if spec.kind == LayerKind::MaxPool {
                return a.clamp(lo as i64, hi as i64) as i32;
            }
            let mut v = a + bias.get(i % n).copied().unwrap_or(0) as i64;
            if let Some(r) = residual {
                v += r.data()[i] as i64;
            }
            if spec.relu && v < 0 {
                v = 0;
            }
            requantize_to(v, spec.quant.alpha, spec.quant.beta, signed, spec.precision)
        })
        .collect())
}

/// Runs a whole model through the oracle. `filter` sees each layer's input
/// before it is consumed, which lets callers apply activation pruning.
pub fn reference_run_with(
    graph: &ModelGraph,
    weights: &ModelWeights,
    input: &QTensor,
    mut filter: impl FnMut(usize, &LayerSpec, QTensor) -> QTensor,
) -> Result<Vec<QTensor>> {
    weights.check(graph)?;
    let mut outs: Vec<QTensor> = Vec::with_capacity(graph.len());
    let mut cur = input.clone();
    for (i, l) in graph.layers.iter().enumerate() {
        let ia = filter(i, l, cur);
        let residual = match l.residual_src {
            Some(src) => Some(outs.get(src).ok_or(Error::MissingResidual { layer: i, source_layer: src })?),
            None => None,
        };
        let lw = &weights.layers[i];
        cur = reference_layer(l, &ia, &lw.weights, &lw.bias, residual)?;
        outs.push(cur.clone());
    }
    Ok(outs)
}

pub fn reference_run(graph: &ModelGraph, weights: &ModelWeights, input: &QTensor) -> Result<Vec<QTensor>> {
    reference_run_with(graph, weights, input, |_, _, t| t)
}
