//! Bit-exact layer execution.
//!
//! [`reference`] is a plain loop-nest oracle. The other engines follow the
//! accelerator's dataflows and record every memory access in an
//! [`AccessLedger`](crate::perf::ledger::AccessLedger).

pub mod conv_dw;
pub mod fc;
pub mod ppm;
pub mod pw;
pub mod reference;

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::model::{LayerKind, LayerSpec, ModelGraph};
use crate::perf::ledger::{AccessLedger, LayerCounters};
use crate::tensor::QTensor;
use crate::weights::{CompiledLayer, CompiledWeights};

pub use ppm::{ppm_process, PpmMode};
pub use reference::{reference_execute, reference_layer, reference_run, reference_run_with};

/// Signed range check applied to every partial sum held in a register file.
#[derive(Debug, Clone, Copy)]
pub struct PsumGuard {
    lo: i64,
    hi: i64,
    layer: usize,
}

impl PsumGuard {
    pub fn new(constants: &Constants, layer: usize) -> Self {
        let (lo, hi) = constants.psum_range();
        PsumGuard { lo, hi, layer }
    }

    /// A guard that accepts any value.
    pub fn unchecked() -> Self {
        PsumGuard {
            lo: i64::MIN,
            hi: i64::MAX,
            layer: 0,
        }
    }

    #[inline]
    pub fn check(&self, v: i64) -> Result<()> {
        if v < self.lo || v > self.hi {
            Err(Error::PsumOverflow {
                layer: self.layer,
                value: v,
            })
        } else {
            Ok(())
        }
    }
}

/// Source of the activation-pruning threshold for each PW layer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Theta {
    /// Use each layer's `theta` attribute.
    #[default]
    Model,
    /// Same threshold for every PW layer.
    Uniform(u8),
    /// One threshold per layer index; non-PW entries are ignored.
    PerLayer(Vec<u8>),
}

impl Theta {
    /// Threshold applied to the input of layer `index`. Only PW layers prune.
    pub fn for_layer(&self, index: usize, spec: &LayerSpec) -> u8 {
        if spec.kind != LayerKind::Pw {
            return 0;
        }
        match self {
            Theta::Model => spec.rap_threshold,
            Theta::Uniform(t) => *t,
            Theta::PerLayer(v) => v.get(index).copied().unwrap_or(spec.rap_threshold),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub theta: Theta,
    /// Zero skipping, data gating and compressed activation storage.
    pub exploit_sparsity: bool,
    /// Keep every layer's output in the result.
    pub keep_activations: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            theta: Theta::Model,
            exploit_sparsity: true,
            keep_activations: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub output: QTensor,
    pub ledger: AccessLedger,
    /// Per-layer outputs when requested through [`RunOptions::keep_activations`].
    pub activations: Vec<QTensor>,
}

/// Runs one layer on its engine and post-processes the result.
#[allow(clippy::too_many_arguments)]
pub fn execute_layer(
    index: usize,
    spec: &LayerSpec,
    params: &CompiledLayer,
    ia: &QTensor,
    residual: Option<&QTensor>,
    theta: u8,
    exploit_sparsity: bool,
    constants: &Constants,
) -> Result<(QTensor, LayerCounters)> {
    if ia.shape() != spec.input_shape() {
        return Err(Error::ShapeMismatch {
            producer: if index == 0 { "input".into() } else { format!("#{}", index - 1) },
            consumer: format!("#{index} {}", spec.kind),
            detail: format!("tensor is {}, layer expects {}", ia.shape(), spec.input_shape()),
        });
    }
    if let (Some(src), None) = (spec.residual_src, residual) {
        return Err(Error::MissingResidual {
            layer: index,
            source_layer: src,
        });
    }
    if params.bias.len() != if spec.kind.has_ppm_params() { spec.n } else { 0 } {
        return Err(Error::format(
            "layer parameters",
            format!("layer {index}: {} bias values for {} outputs", params.bias.len(), spec.n),
        ));
    }
    if spec.kind != LayerKind::Pw && spec.kind.has_weights() && params.dense.len() != spec.weight_count() {
        return Err(Error::format(
            "layer parameters",
            format!("layer {index}: {} weights, expected {}", params.dense.len(), spec.weight_count()),
        ));
    }
    let guard = PsumGuard::new(constants, index);
    let mut counters = LayerCounters::new(index, spec.kind);
    let acc = match spec.kind {
        LayerKind::Conv => conv_dw::conv_execute(spec, ia, &params.dense, exploit_sparsity, guard, constants, &mut counters)?,
        LayerKind::Dw => conv_dw::dw_execute(spec, ia, &params.dense, exploit_sparsity, guard, constants, &mut counters)?,
        LayerKind::Pw => {
            let mode = pw::PwMode { theta, exploit_sparsity };
            pw::pw_execute(spec, ia, params, mode, guard, constants, &mut counters)?
        }
        LayerKind::Fc => fc::fc_execute(spec, ia, &params.dense, exploit_sparsity, guard, constants, &mut counters)?,
        LayerKind::MaxPool | LayerKind::AvgPool | LayerKind::Gap => {
            ppm::pool_execute(spec, ia, params, constants, &mut counters)
        }
    };
    let out = ppm_process(&acc, spec, params, residual, PpmMode::for_kind(spec.kind))?;
    counters.glb_act.write += spec.precision.bytes_for(out.len() as u64);
    Ok((out, counters))
}

/// Executes a compiled model layer by layer.
pub fn run_model(
    graph: &ModelGraph,
    compiled: &CompiledWeights,
    input: &QTensor,
    opts: &RunOptions,
    constants: &Constants,
) -> Result<RunResult> {
    if compiled.layers.len() != graph.len() {
        return Err(Error::format(
            "compiled weights",
            format!("{} layers for a {}-layer model", compiled.layers.len(), graph.len()),
        ));
    }
    let mut state = ExecState::new(graph, input.clone(), opts.keep_activations);
    for (i, spec) in graph.layers.iter().enumerate() {
        state.step(i, spec, &compiled.layers[i], opts, constants)?;
    }
    Ok(state.finish())
}

/// Activation state carried between layers, shared by [`run_model`] and the
/// instruction dispatcher.
pub struct ExecState {
    current: QTensor,
    saved: Vec<Option<QTensor>>,
    needed: Vec<bool>,
    keep_all: bool,
    ledger: AccessLedger,
}

impl ExecState {
    pub fn new(graph: &ModelGraph, input: QTensor, keep_all: bool) -> Self {
        let mut needed = vec![false; graph.len()];
        for l in &graph.layers {
            if let Some(src) = l.residual_src {
                if src < needed.len() {
                    needed[src] = true;
                }
            }
        }
        Self::with_residuals(needed, input, keep_all)
    }

    /// State for a layer sequence where `needed[i]` marks outputs that a later
    /// layer adds back as a residual.
    pub fn with_residuals(needed: Vec<bool>, input: QTensor, keep_all: bool) -> Self {
        ExecState {
            current: input,
            saved: vec![None; needed.len()],
            needed,
            keep_all,
            ledger: AccessLedger::default(),
        }
    }

    pub fn step(&mut self, i: usize, spec: &LayerSpec, params: &CompiledLayer, opts: &RunOptions, constants: &Constants) -> Result<()> {
        let residual = match spec.residual_src {
            Some(src) => Some(
                self.saved
                    .get(src)
                    .and_then(Option::as_ref)
                    .ok_or(Error::MissingResidual { layer: i, source_layer: src })?,
            ),
            None => None,
        };
        let theta = opts.theta.for_layer(i, spec);
        let (out, counters) = execute_layer(i, spec, params, &self.current, residual, theta, opts.exploit_sparsity, constants)?;
        self.ledger.push(counters);
        if self.keep_all || self.needed.get(i).copied().unwrap_or(false) {
            if i >= self.saved.len() {
                self.saved.resize(i + 1, None);
            }
            self.saved[i] = Some(out.clone());
        }
        self.current = out;
        Ok(())
    }

    pub fn finish(self) -> RunResult {
        let activations = if self.keep_all {
            self.saved.into_iter().flatten().collect()
        } else {
            Vec::new()
        };
        RunResult {
            output: self.current,
            ledger: self.ledger,
            activations,
        }
    }
}
