//! Byte-level access counters.

use std::ops::AddAssign;

use crate::model::LayerKind;

/// Bytes read from and written to one memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Traffic {
    pub read: u64,
    pub write: u64,
}

impl Traffic {
    pub fn total(&self) -> u64 {
        self.read + self.write
    }
}

impl AddAssign for Traffic {
    fn add_assign(&mut self, o: Traffic) {
        self.read += o.read;
        self.write += o.write;
    }
}

/// What one processing run moved and computed, used for latency estimates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunTrace {
    /// Cycles the PE array spends issuing MACs.
    pub compute_cycles: u64,
    /// Activation bytes fetched from GLB-MEM for this run.
    pub act_load_bytes: u64,
    /// Parameter bytes fetched from GLB-MEM for this run.
    pub param_load_bytes: u64,
    /// Post-processing cycles to drain the run's outputs.
    pub drain_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCounters {
    pub index: usize,
    pub kind: LayerKind,
    pub glb_act: Traffic,
    pub glb_param: Traffic,
    pub cache_act: Traffic,
    pub cache_param: Traffic,
    /// Weight reads from PE registers; data-gated MACs read nothing.
    pub rf_param_reads: u64,
    /// MAC slots issued to the array, gated or not.
    pub macs_issued: u64,
    /// Issued MACs suppressed because the activation was zero.
    pub macs_gated: u64,
    /// Additions or comparisons done in the post-processing pool path.
    pub pool_ops: u64,
    pub runs: Vec<RunTrace>,
}

impl LayerCounters {
    pub fn new(index: usize, kind: LayerKind) -> Self {
        LayerCounters {
            index,
            kind,
            glb_act: Traffic::default(),
            glb_param: Traffic::default(),
            cache_act: Traffic::default(),
            cache_param: Traffic::default(),
            rf_param_reads: 0,
            macs_issued: 0,
            macs_gated: 0,
            pool_ops: 0,
            runs: Vec::new(),
        }
    }

    /// Operations that did useful arithmetic (1 MAC = 2 OPs).
    pub fn effective_ops(&self) -> u64 {
        2 * (self.macs_issued - self.macs_gated) + self.pool_ops
    }

    pub fn run_count(&self) -> usize {
        self.runs.len()
    }

    pub fn compute_cycles(&self) -> u64 {
        self.runs.iter().map(|r| r.compute_cycles).sum()
    }
}

/// Per-layer counters for one model execution.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessLedger {
    pub layers: Vec<LayerCounters>,
}

impl AccessLedger {
    pub fn push(&mut self, c: LayerCounters) {
        self.layers.push(c);
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    fn sum(&self, f: impl Fn(&LayerCounters) -> Traffic) -> Traffic {
        let mut t = Traffic::default();
        for l in &self.layers {
            t += f(l);
        }
        t
    }

    pub fn glb_act(&self) -> Traffic {
        self.sum(|l| l.glb_act)
    }

    pub fn glb_param(&self) -> Traffic {
        self.sum(|l| l.glb_param)
    }

    pub fn cache_act(&self) -> Traffic {
        self.sum(|l| l.cache_act)
    }

    pub fn cache_param(&self) -> Traffic {
        self.sum(|l| l.cache_param)
    }

    pub fn effective_ops(&self) -> u64 {
        self.layers.iter().map(LayerCounters::effective_ops).sum()
    }

    /// Totals restricted to one layer kind.
    pub fn of_kind(&self, kind: LayerKind) -> impl Iterator<Item = &LayerCounters> {
        self.layers.iter().filter(move |l| l.kind == kind)
    }
}
