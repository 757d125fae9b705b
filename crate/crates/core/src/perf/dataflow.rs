//! Closed-form memory traffic of a pointwise layer under four dataflows,
//! counted for a single PE with dense operands.
//!
//! For a layer with `P = H*W` pixels, `M` input and `N` output channels:
//!
//! | dataflow | IA | W | partial sums (24b, read + write) | final OA |
//! |---|---|---|---|---|
//! | OS | `P*N*M` | `P*N*M` | 0 | `P*N` |
//! | IS | `P*M` | `P*N*M` | `6*P*N*(M-1)` | `P*N` |
//! | WS | `P*N*M` | `M*N` | `6*P*N*(M-1)` | `P*N` |
//! | RD | `P*M*ceil(N/16)` | `P*N*M` | 0 | `P*N` |
//!
//! Output stationary streams both operands for every MAC. Input and weight
//! stationary keep one operand but spill partial sums after every input
//! channel. The RAMAN dataflow reuses one IA row across 16 register-file
//! partial sums and writes only final 8-bit outputs.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dataflow {
    Os,
    Is,
    Ws,
    Rd,
}

impl Dataflow {
    pub const ALL: [Dataflow; 4] = [Dataflow::Os, Dataflow::Is, Dataflow::Ws, Dataflow::Rd];
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataflow::Os => "OS",
            Dataflow::Is => "IS",
            Dataflow::Ws => "WS",
            Dataflow::Rd => "RD",
        })
    }
}

/// Bytes moved between a PE and the memories around it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DataflowTraffic {
    pub ia: u64,
    pub weights: u64,
    pub partials: u64,
    pub outputs: u64,
}

impl DataflowTraffic {
    pub fn total(&self) -> u64 {
        self.ia + self.weights + self.partials + self.outputs
    }
}

impl std::ops::AddAssign for DataflowTraffic {
    fn add_assign(&mut self, o: Self) {
        self.ia += o.ia;
        self.weights += o.weights;
        self.partials += o.partials;
        self.outputs += o.outputs;
    }
}

/// Bytes per partial-sum spill: a 24-bit value written and read back.
const PARTIAL_BYTES: u64 = 6;
/// Partial sums held per PE in the RAMAN dataflow.
const RF_DEPTH: u64 = 16;

pub fn layer_traffic(l: &LayerSpec, flow: Dataflow) -> DataflowTraffic {
    let p = (l.h_out * l.w_out) as u64;
    let (m, n) = (l.m as u64, l.n as u64);
    let macs = p * m * n;
    let spill = PARTIAL_BYTES * p * n * m.saturating_sub(1);
    let outputs = p * n;
    match flow {
        Dataflow::Os => DataflowTraffic { ia: macs, weights: macs, partials: 0, outputs },
        Dataflow::Is => DataflowTraffic { ia: p * m, weights: macs, partials: spill, outputs },
        Dataflow::Ws => DataflowTraffic { ia: macs, weights: m * n, partials: spill, outputs },
        Dataflow::Rd => DataflowTraffic { ia: p * m * n.div_ceil(RF_DEPTH), weights: macs, partials: 0, outputs },
    }
}

/// Summed traffic over a set of PW layers. `layers` pairs each spec with
/// its index for error reporting.
pub fn dataflow_access_analysis<'a>(layers: impl IntoIterator<Item = (usize, &'a LayerSpec)>, flow: Dataflow) -> Result<DataflowTraffic> {
    let mut total = DataflowTraffic::default();
    for (i, l) in layers {
        if l.kind != LayerKind::Pw {
            return Err(Error::NotPointwise(l.kind, i));
        }
        total += layer_traffic(l, flow);
    }
    Ok(total)
}
