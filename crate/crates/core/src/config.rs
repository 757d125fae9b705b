//! Architecture and accounting constants.
//!
//! Everything the simulator treats as a tunable hardware parameter lives here:
//! PE array geometry, memory port widths, cache banking, the per-channel
//! post-processing record layout, and a couple of planner switches. The
//! defaults describe the 3x4 PE array with 27 cache banks. A TOML file with
//! the same layout (see `constants.toml` next to the crate manifest) can
//! override any subset of fields; the CLI reads it from `RAMAN_CONSTANTS`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming a constants file.
pub const CONSTANTS_ENV: &str = "RAMAN_CONSTANTS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayConfig {
    pub pe_rows: usize,
    pub pe_cols: usize,
    /// SIMD MAC lanes per PE at 8-bit precision.
    pub macs_per_pe: usize,
    /// Register-file depth; equals the PW weight tile width.
    pub rf_depth: usize,
    /// Width of the balanced-pruning tile (`n`).
    pub n_tile: usize,
    /// MACs per PE used by the FC mapping (two weights, one activation).
    pub fc_macs_per_pe: usize,
    /// Outputs per FC processing run.
    pub fc_outputs_per_run: usize,
    /// Post-processing SIMD lanes.
    pub ppm_lanes: usize,
    /// Signed partial-sum width held in the register file.
    pub psum_bits: u32,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            pe_rows: 3,
            pe_cols: 4,
            macs_per_pe: 4,
            rf_depth: 16,
            n_tile: 16,
            fc_macs_per_pe: 2,
            fc_outputs_per_run: 6,
            ppm_lanes: 4,
            psum_bits: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandwidthConfig {
    /// GLB activation port, bytes per cycle (32b, dual address).
    pub glb_act_bytes_per_cycle: usize,
    /// GLB parameter port, bytes per cycle (192b).
    pub glb_param_bytes_per_cycle: usize,
    /// One cache bank, bytes per cycle (8b).
    pub cache_bank_bytes_per_cycle: usize,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        BandwidthConfig {
            glb_act_bytes_per_cycle: 4,
            glb_param_bytes_per_cycle: 24,
            cache_bank_bytes_per_cycle: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub total_banks: usize,
    pub pw_act_banks: usize,
    pub dw_act_banks: usize,
    pub fc_act_banks: usize,
    pub conv_act_banks: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            total_banks: 27,
            pw_act_banks: 3,
            dw_act_banks: 12,
            fc_act_banks: 4,
            conv_act_banks: 3,
        }
    }
}

/// Storage layout of one post-processing record (one per output channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamLayout {
    pub bias_bytes: usize,
    pub alpha_bytes: usize,
    pub beta_bytes: usize,
    /// Bits per compressed PW weight (8b value + 4b intra-tile index).
    pub pair_bits: usize,
    /// Width of one GLB parameter word in bytes; layer regions are aligned to it.
    pub param_word_bytes: usize,
}

impl ParamLayout {
    pub fn record_bytes(&self) -> usize {
        self.bias_bytes + self.alpha_bytes + self.beta_bytes
    }
}

impl Default for ParamLayout {
    fn default() -> Self {
        ParamLayout {
            bias_bytes: 4,
            alpha_bytes: 1,
            beta_bytes: 1,
            pair_bits: 12,
            param_word_bytes: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyConfig {
    /// Overlap the register-file drain of one run with the next run's MACs.
    pub double_buffer: bool,
    /// Extra cycles to fill the DW/CONV systolic pipeline per run.
    pub systolic_fill_cycles: u64,
    /// Cycles for the FC column reduction at the end of a run.
    pub fc_reduce_cycles: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            double_buffer: false,
            systolic_fill_cycles: 3,
            fc_reduce_cycles: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    /// Charge IA+OA for the first layer, since the network input must persist.
    pub first_layer_exception: bool,
    /// Cache IA tiles that an OA writeback would clobber before it lands.
    pub prefetch: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            first_layer_exception: true,
            prefetch: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    pub array: ArrayConfig,
    pub bandwidth: BandwidthConfig,
    pub cache: CacheConfig,
    pub params: ParamLayout,
    pub latency: LatencyConfig,
    pub plan: PlanConfig,
}

impl Constants {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("constants file", e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// Defaults, overridden by the file named in `RAMAN_CONSTANTS` if set.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(CONSTANTS_ENV) {
            Some(path) => Self::load(path),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("constants serialize")
    }

    pub fn num_pes(&self) -> usize {
        self.array.pe_rows * self.array.pe_cols
    }

    /// Output channels covered by one PW processing run (`4n`).
    pub fn pw_cols_per_run(&self) -> usize {
        self.array.pe_cols * self.array.n_tile
    }

    pub fn psum_range(&self) -> (i64, i64) {
        let b = self.array.psum_bits;
        (-(1i64 << (b - 1)), (1i64 << (b - 1)) - 1)
    }
}
