//! Weight-stationary systolic engines for standard and depthwise 3x3
//! convolution.
//!
//! A DW run produces one output row for four channels: the 3x3 kernels of
//! four channels sit in the PE array and an input row slides through. A
//! CONV run does the same for four filters and one input channel at a time.

use crate::config::Constants;
use crate::model::LayerSpec;
use crate::perf::ledger::{LayerCounters, RunTrace};
use crate::tensor::QTensor;
use crate::error::Result;

use super::PsumGuard;

/// Tracks which input rows have been brought into the cache, so GLB-MEM is
/// charged once per row.
struct RowLoads {
    loaded: Vec<bool>,
    row_bytes: u64,
}

impl RowLoads {
    fn new(rows: usize, row_bytes: u64) -> Self {
        RowLoads {
            loaded: vec![false; rows],
            row_bytes,
        }
    }

    /// Bytes newly fetched for the window starting at `top` (may be negative
    /// because of padding).
    fn fetch(&mut self, top: isize, k: usize) -> u64 {
        let mut bytes = 0;
        for r in top..top + k as isize {
            if r >= 0 && (r as usize) < self.loaded.len() && !self.loaded[r as usize] {
                self.loaded[r as usize] = true;
                bytes += self.row_bytes;
            }
        }
        bytes
    }

    /// Rows never touched by any window; the tensor is still streamed in.
    fn remainder(&self) -> u64 {
        self.loaded.iter().filter(|&&l| !l).count() as u64 * self.row_bytes
    }
}

fn charge_act(counters: &mut LayerCounters, trace: &mut RunTrace, bytes: u64) {
    counters.glb_act.read += bytes;
    counters.cache_act.write += bytes;
    trace.act_load_bytes += bytes;
}

pub fn dw_execute(
    spec: &LayerSpec,
    ia: &QTensor,
    w: &[i32],
    gating: bool,
    guard: PsumGuard,
    constants: &Constants,
    counters: &mut LayerCounters,
) -> Result<Vec<i64>> {
    let lanes = constants.array.pe_cols;
    let record = constants.params.record_bytes() as u64;
    let (k, s, p) = (spec.k, spec.stride as isize, spec.pad as isize);
    let (m, w_in, w_out) = (spec.m, spec.w_in, spec.w_out);
    let mut acc = vec![0i64; spec.output_shape().len()];
    for c0 in (0..m).step_by(lanes) {
        let width = lanes.min(m - c0);
        let mut rows = RowLoads::new(spec.h_in, spec.precision.bytes_for((w_in * width) as u64));
        for y in 0..spec.h_out {
            let mut trace = RunTrace::default();
            if y == 0 {
                let params = spec.precision.bytes_for((k * k * width) as u64) + width as u64 * record;
                counters.glb_param.read += params;
                trace.param_load_bytes = params;
            }
            let top = y as isize * s - p;
            let fetched = rows.fetch(top, k);
            charge_act(counters, &mut trace, fetched);
            counters.cache_act.read += (k * w_in * width) as u64;
            for x in 0..w_out {
                let left = x as isize * s - p;
                for c in c0..c0 + width {
                    let out = &mut acc[(y * w_out + x) * m + c];
                    for ky in 0..k {
                        for kx in 0..k {
                            let a = ia.get_padded(top + ky as isize, left + kx as isize, c);
                            counters.macs_issued += 1;
                            if gating && a == 0 {
                                counters.macs_gated += 1;
                                continue;
                            }
                            counters.rf_param_reads += 1;
                            *out += a as i64 * w[(ky * k + kx) * m + c] as i64;
                            guard.check(*out)?;
                        }
                    }
                }
            }
            trace.compute_cycles = w_out as u64 + constants.latency.systolic_fill_cycles;
            trace.drain_cycles = ((w_out * width) as u64).div_ceil(constants.array.ppm_lanes as u64);
            if y + 1 == spec.h_out {
                let rest = rows.remainder();
                charge_act(counters, &mut trace, rest);
            }
            counters.runs.push(trace);
        }
    }
    Ok(acc)
}

pub fn conv_execute(
    spec: &LayerSpec,
    ia: &QTensor,
    w: &[i32],
    gating: bool,
    guard: PsumGuard,
    constants: &Constants,
    counters: &mut LayerCounters,
) -> Result<Vec<i64>> {
    let lanes = constants.array.pe_cols;
    let record = constants.params.record_bytes() as u64;
    let (k, s, p) = (spec.k, spec.stride as isize, spec.pad as isize);
    let (m, n, w_in, w_out) = (spec.m, spec.n, spec.w_in, spec.w_out);
    let mut acc = vec![0i64; spec.output_shape().len()];
    let mut rows: Vec<RowLoads> = (0..m)
        .map(|_| RowLoads::new(spec.h_in, spec.precision.bytes_for(w_in as u64)))
        .collect();
    for y in 0..spec.h_out {
        let top = y as isize * s - p;
        for c in 0..m {
            for f0 in (0..n).step_by(lanes) {
                let width = lanes.min(n - f0);
                let mut trace = RunTrace::default();
                if y == 0 {
                    let mut params = spec.precision.bytes_for((k * k * width) as u64);
                    if c == 0 {
                        params += width as u64 * record;
                    }
                    counters.glb_param.read += params;
                    trace.param_load_bytes = params;
                }
                if f0 == 0 {
                    // The input rows are shared by every filter group.
                    let fetched = rows[c].fetch(top, k);
                    charge_act(counters, &mut trace, fetched);
                    counters.cache_act.read += (k * w_in) as u64;
                }
                for x in 0..w_out {
                    let left = x as isize * s - p;
                    for f in f0..f0 + width {
                        let out = &mut acc[(y * w_out + x) * n + f];
                        for ky in 0..k {
                            for kx in 0..k {
                                let a = ia.get_padded(top + ky as isize, left + kx as isize, c);
                                counters.macs_issued += 1;
                                if gating && a == 0 {
                                    counters.macs_gated += 1;
                                    continue;
                                }
                                counters.rf_param_reads += 1;
                                *out += a as i64 * w[((f * k + ky) * k + kx) * m + c] as i64;
                                guard.check(*out)?;
                            }
                        }
                    }
                }
                trace.compute_cycles = w_out as u64 + constants.latency.systolic_fill_cycles;
                if c + 1 == m {
                    trace.drain_cycles = ((w_out * width) as u64).div_ceil(constants.array.ppm_lanes as u64);
                }
                if y + 1 == spec.h_out && f0 == 0 {
                    let rest = rows[c].remainder();
                    charge_act(counters, &mut trace, rest);
                }
                counters.runs.push(trace);
            }
        }
    }
    Ok(acc)
}
