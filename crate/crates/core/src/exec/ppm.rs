//! Post-processing module: bias, residual addition, ReLU, requantization and
//! the pooling paths that bypass the PE array.

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec};
use crate::perf::ledger::{LayerCounters, RunTrace};
use crate::quant::requantize_to;
use crate::tensor::QTensor;
use crate::weights::CompiledLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpmMode {
    /// Output of a CONV/DW/PW/FC layer.
    ConvPath,
    AvgPool,
    MaxPool,
}

impl PpmMode {
    pub fn for_kind(kind: LayerKind) -> Self {
        match kind {
            LayerKind::MaxPool => PpmMode::MaxPool,
            LayerKind::AvgPool | LayerKind::Gap => PpmMode::AvgPool,
            _ => PpmMode::ConvPath,
        }
    }
}

/// Turns accumulators into an output tensor. Order per element: bias,
/// residual, ReLU, requantize, clamp. Max pooling passes the window
/// maximum through unchanged apart from the clamp.
pub fn ppm_process(
    acc: &[i64],
    spec: &LayerSpec,
    params: &CompiledLayer,
    residual: Option<&QTensor>,
    mode: PpmMode,
) -> Result<QTensor> {
    let shape = spec.output_shape();
    let signed = spec.quant.signed_output;
    let (lo, hi) = spec.precision.range(signed);
    if let Some(r) = residual {
        if r.shape() != shape {
            return Err(Error::ShapeMismatch {
                producer: "residual source".into(),
                consumer: spec.kind.to_string(),
                detail: format!("residual {} vs output {shape}", r.shape()),
            });
        }
    }
    let n = shape.c;
    let mut data = Vec::with_capacity(acc.len());
    for (i, &a) in acc.iter().enumerate() {
        let v = match mode {
            PpmMode::MaxPool => a.clamp(lo as i64, hi as i64) as i32,
            PpmMode::ConvPath | PpmMode::AvgPool => {
                let mut v = a + params.bias.get(i % n).copied().unwrap_or(0) as i64;
                if let Some(r) = residual {
                    v += r.data()[i] as i64;
                }
                if spec.relu {
                    v = v.max(0);
                }
                requantize_to(v, params.alpha, params.beta, signed, spec.precision)
            }
        };
        data.push(v);
    }
    QTensor::new(shape, spec.precision, signed, data)
}

/// Pooling layers run entirely in the post-processing unit; the PE array
/// stays idle and one pass over the input is charged.
pub fn pool_execute(spec: &LayerSpec, ia: &QTensor, params: &CompiledLayer, constants: &Constants, counters: &mut LayerCounters) -> Vec<i64> {
    let (wh, ww) = spec.window();
    let (s, p) = (spec.stride as isize, spec.pad as isize);
    let mut acc = Vec::with_capacity(spec.output_shape().len());
    for y in 0..spec.h_out as isize {
        for x in 0..spec.w_out as isize {
            for c in 0..spec.n {
                let mut sum = 0i64;
                let mut best = i64::MIN;
                for ky in 0..wh as isize {
                    for kx in 0..ww as isize {
                        let (iy, ix) = (y * s + ky - p, x * s + kx - p);
                        let inside = iy >= 0 && ix >= 0 && (iy as usize) < spec.h_in && (ix as usize) < spec.w_in;
                        let v = if inside { ia.get(iy as usize, ix as usize, c) as i64 } else { 0 };
                        sum += v;
                        if inside {
                            best = best.max(v);
                        }
                    }
                }
                acc.push(if spec.kind == LayerKind::MaxPool { best } else { sum });
            }
        }
    }
    let ia_bytes = spec.precision.bytes_for(spec.input_shape().len() as u64);
    let records = (params.bias.len() * constants.params.record_bytes()) as u64;
    counters.glb_act.read += ia_bytes;
    counters.glb_param.read += records;
    counters.pool_ops += (spec.output_shape().len() * wh * ww) as u64;
    counters.runs.push(RunTrace {
        compute_cycles: 0,
        act_load_bytes: ia_bytes,
        param_load_bytes: records,
        drain_cycles: (spec.input_shape().len() as u64).div_ceil(constants.array.ppm_lanes as u64),
    });
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_model, Precision, Shape3};

    fn params(bias: Vec<i32>, alpha: u8, beta: u8) -> CompiledLayer {
        CompiledLayer {
            bias,
            alpha,
            beta,
            dense: vec![],
            tiles: vec![],
        }
    }

    #[test]
    fn negative_is_clamped_by_relu() {
        let g = parse_model("model input=1x1x1\npw n=1 alpha=1 beta=1\n").unwrap();
        let out = ppm_process(&[-7], &g.layers[0], &params(vec![0], 1, 1), None, PpmMode::ConvPath).unwrap();
        assert_eq!(out.data(), &[0]);
    }

    #[test]
    fn bias_then_scale() {
        let g = parse_model("model input=1x1x1\npw n=1 alpha=3 beta=2\n").unwrap();
        let out = ppm_process(&[3], &g.layers[0], &params(vec![2], 3, 2), None, PpmMode::ConvPath).unwrap();
        assert_eq!(out.data(), &[4]);
    }

    #[test]
    fn residual_is_added_before_relu() {
        let g = parse_model("model input=1x1x2\npw n=2 alpha=1 beta=1\n").unwrap();
        let r = QTensor::new(Shape3::new(1, 1, 2), Precision::B8, false, vec![10, 2]).unwrap();
        let out = ppm_process(&[-4, -4], &g.layers[0], &params(vec![0, 0], 1, 1), Some(&r), PpmMode::ConvPath).unwrap();
        assert_eq!(out.data(), &[3, 0]);
    }

    #[test]
    fn gap_constant_map() {
        let g = parse_model("model input=4x4x1\ngap alpha=1 beta=4\n").unwrap();
        let l = &g.layers[0];
        let ia = QTensor::new(Shape3::new(4, 4, 1), Precision::B8, false, vec![8; 16]).unwrap();
        let p = params(vec![0], 1, 4);
        let mut c = LayerCounters::new(0, l.kind);
        let acc = pool_execute(l, &ia, &p, &Constants::default(), &mut c);
        let out = ppm_process(&acc, l, &p, None, PpmMode::AvgPool).unwrap();
        assert_eq!(out.data(), &[8]);
        assert_eq!(c.compute_cycles(), 0);
        assert_eq!(c.runs[0].drain_cycles, 4);
    }

    #[test]
    fn maxpool_window() {
        let g = parse_model("model input=2x2x1\nmaxpool k=2 stride=2\n").unwrap();
        let ia = QTensor::new(Shape3::new(2, 2, 1), Precision::B8, false, vec![3, 9, 1, 4]).unwrap();
        let p = params(vec![], 1, 1);
        let mut c = LayerCounters::new(0, LayerKind::MaxPool);
        let acc = pool_execute(&g.layers[0], &ia, &p, &Constants::default(), &mut c);
        assert_eq!(acc, vec![9]);
    }
}
