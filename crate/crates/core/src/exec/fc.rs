//! Fully connected layer: six outputs per run, two-level reduction.
//!
//! The input vector is split into four column slices. Each PE holds two
//! output neurons and accumulates its slice locally (first level); the four
//! columns are then summed (second level). Weights stream directly from
//! GLB-MEM, bypassing the cache.

use crate::config::Constants;
use crate::error::Result;
use crate::model::LayerSpec;
use crate::perf::ledger::{LayerCounters, RunTrace};
use crate::tensor::QTensor;

use super::PsumGuard;

pub fn fc_execute(
    spec: &LayerSpec,
    ia: &QTensor,
    w: &[i32],
    gating: bool,
    guard: PsumGuard,
    constants: &Constants,
    counters: &mut LayerCounters,
) -> Result<Vec<i64>> {
    let (m, n) = (spec.m, spec.n);
    let cols = constants.array.pe_cols;
    let per_run = constants.array.fc_outputs_per_run;
    let slice = m.div_ceil(cols);
    let record = constants.params.record_bytes() as u64;
    let ia_bytes = spec.precision.bytes_for(m as u64);
    let x = ia.data();
    let mut out = vec![0i64; n];
    for (r, o0) in (0..n).step_by(per_run).enumerate() {
        let outs = per_run.min(n - o0);
        let mut trace = RunTrace::default();
        if r == 0 {
            counters.glb_act.read += ia_bytes;
            counters.cache_act.write += ia_bytes;
            trace.act_load_bytes = ia_bytes;
        }
        counters.cache_act.read += ia_bytes;
        let params = spec.precision.bytes_for((m * outs) as u64) + outs as u64 * record;
        counters.glb_param.read += params;
        trace.param_load_bytes = params;
        for o in o0..o0 + outs {
            let mut total = 0i64;
            // Column slices beyond `m` are zero padding and issue nothing.
            for col in 0..cols {
                let mut local = 0i64;
                for i in (col * slice)..((col + 1) * slice).min(m) {
                    counters.macs_issued += 1;
                    if gating && x[i] == 0 {
                        counters.macs_gated += 1;
                        continue;
                    }
                    local += x[i] as i64 * w[i * n + o] as i64;
                    guard.check(local)?;
                }
                total += local;
                guard.check(total)?;
            }
            out[o] = total;
        }
        trace.compute_cycles = slice as u64 + constants.latency.fc_reduce_cycles;
        trace.drain_cycles = (outs as u64).div_ceil(constants.array.ppm_lanes as u64);
        counters.runs.push(trace);
    }
    Ok(out)
}
