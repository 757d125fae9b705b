//! Performance accounting: access ledgers, operation counts, dataflow
//! traffic models, latency and report emitters.

pub mod dataflow;
pub mod latency;
pub mod ledger;
pub mod ops;
pub mod report;

pub use dataflow::{dataflow_access_analysis, Dataflow, DataflowTraffic};
pub use latency::{estimate_latency, kind_summary, layer_latency, LayerLatency};
pub use ledger::{AccessLedger, LayerCounters, RunTrace, Traffic};
pub use ops::{count_dense_ops, count_pruned_ops, dws_cost_ratio, millions};
pub use report::{ledger_csv, ledger_table, CSV_HEADER};

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::model::LayerKind;

/// Cache banks reserved for activations while a layer of `kind` runs.
pub fn cache_partition(kind: LayerKind, constants: &Constants) -> Result<usize> {
    let c = &constants.cache;
    match kind {
        LayerKind::Pw => Ok(c.pw_act_banks),
        LayerKind::Dw => Ok(c.dw_act_banks),
        LayerKind::Fc => Ok(c.fc_act_banks),
        LayerKind::Conv => Ok(c.conv_act_banks),
        other => Err(Error::NoCachePartition(other)),
    }
}
