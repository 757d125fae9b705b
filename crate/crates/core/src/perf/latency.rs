//! Coarse pipelined latency model.
//!
//! Each processing run loads its operands from GLB-MEM while the previous
//! run computes, so a run costs the larger of its load and compute time.
//! The register file is then drained through the post-processing unit.
//! Without double buffering the drain stalls the array; with it, the drain
//! overlaps the next run and only the final drain of a layer is exposed.

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::model::LayerKind;
use crate::perf::ledger::{AccessLedger, LayerCounters, RunTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerLatency {
    pub index: usize,
    pub kind: LayerKind,
    pub runs: usize,
    pub compute_cycles: u64,
    pub cycles: u64,
}

impl LayerLatency {
    /// Fraction of cycles in which the PE array issues MACs.
    pub fn utilization(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.compute_cycles as f64 / self.cycles as f64
        }
    }
}

fn load_cycles(r: &RunTrace, c: &Constants) -> u64 {
    let act = r.act_load_bytes.div_ceil(c.bandwidth.glb_act_bytes_per_cycle as u64);
    let param = r.param_load_bytes.div_ceil(c.bandwidth.glb_param_bytes_per_cycle as u64);
    act.max(param)
}

pub fn layer_latency(l: &LayerCounters, c: &Constants) -> LayerLatency {
    let db = c.latency.double_buffer;
    let mut cycles = 0;
    for r in &l.runs {
        let load = load_cycles(r, c);
        cycles += if db {
            load.max(r.compute_cycles).max(r.drain_cycles)
        } else {
            load.max(r.compute_cycles) + r.drain_cycles
        };
    }
    if db {
        if let Some(last) = l.runs.last() {
            cycles += last.drain_cycles;
        }
    }
    LayerLatency {
        index: l.index,
        kind: l.kind,
        runs: l.runs.len(),
        compute_cycles: l.compute_cycles(),
        cycles,
    }
}

pub fn estimate_latency(ledger: &AccessLedger, c: &Constants) -> Result<Vec<LayerLatency>> {
    if c.bandwidth.glb_act_bytes_per_cycle == 0 {
        return Err(Error::ZeroBandwidth("GLB activation port"));
    }
    if c.bandwidth.glb_param_bytes_per_cycle == 0 {
        return Err(Error::ZeroBandwidth("GLB parameter port"));
    }
    if c.array.ppm_lanes == 0 {
        return Err(Error::ZeroBandwidth("post-processing lanes"));
    }
    Ok(ledger.layers.iter().map(|l| layer_latency(l, c)).collect())
}

/// Cycles and utilization summed over the layers of one kind.
pub fn kind_summary(lat: &[LayerLatency], kind: LayerKind) -> (u64, f64) {
    let (mut compute, mut total) = (0, 0);
    for l in lat.iter().filter(|l| l.kind == kind) {
        compute += l.compute_cycles;
        total += l.cycles;
    }
    let util = if total == 0 { 0.0 } else { compute as f64 / total as f64 };
    (total, util)
}
