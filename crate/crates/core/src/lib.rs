//! Compiler and functional/performance simulator for the RAMAN sparse
//! depthwise-separable CNN accelerator.
//!
//! The crate is organised as a pipeline:
//!
//! - [`model`] parses model descriptions and infers layer shapes.
//! - [`weights`] synthesizes or loads dense weights, prunes them with
//!   [`prune`] and lays them out for the accelerator.
//! - [`isa`] assembles a model into 80-bit instructions and dispatches them.
//! - [`exec`] executes layers bit-exactly, skipping zeros found by [`ase`].
//! - [`perf`] counts memory traffic, operations and cycles; [`plan`] sizes
//!   activation memory.
//!
//! Runnable walkthroughs live in the `examples/` directory.

pub mod ase;
pub mod config;
pub mod error;
pub mod exec;
pub mod isa;
pub mod model;
pub mod perf;
pub mod plan;
pub mod prune;
pub mod quant;
pub mod tensor;
pub mod weights;

pub use config::Constants;
pub use error::{Error, Result};
pub use model::{bundled, parse_model, LayerKind, LayerSpec, ModelGraph, Precision, QuantParams, Shape3};
pub use tensor::QTensor;
