//! Activation memory planning.
//!
//! A conventional allocator gives every layer disjoint input and output
//! buffers, so peak memory is the largest `IA + OA`. RAMAN writes each
//! output over the input it consumes, so a layer needs only
//! `max(IA, OA)` bytes, provided no output byte lands on input data that is
//! still to be read. The engines hold their current input tile in the
//! cache, which covers most layers; when outputs outgrow inputs (a PW layer
//! with `N > M`) the planner emits prefetch directives that cache the
//! endangered input tiles early.
//!
//! Activations are counted at one byte per element.

use std::ops::Range;

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::exec::reference::{reference_layer, reference_layer_pixels};
use crate::model::{LayerKind, LayerSpec, ModelGraph};
use crate::tensor::QTensor;
use crate::weights::ModelWeights;

fn ia_bytes(l: &LayerSpec) -> usize {
    l.input_shape().len()
}

fn oa_bytes(l: &LayerSpec) -> usize {
    l.output_shape().len()
}

/// Peak activation bytes with separate input and output buffers.
pub fn peak_memory_soa(graph: &ModelGraph) -> usize {
    graph.layers.iter().map(|l| ia_bytes(l) + oa_bytes(l)).max().unwrap_or(0)
}

/// Bytes one layer needs when its output overlays its input.
pub fn overlaid_bytes(index: usize, l: &LayerSpec, constants: &Constants) -> usize {
    if index == 0 && constants.plan.first_layer_exception {
        // The network input stays resident while the first output is built.
        ia_bytes(l) + oa_bytes(l)
    } else {
        ia_bytes(l).max(oa_bytes(l))
    }
}

/// Peak activation bytes with overlaid input and output buffers.
pub fn peak_memory_raman(graph: &ModelGraph, constants: &Constants) -> usize {
    graph
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| overlaid_bytes(i, l, constants))
        .max()
        .unwrap_or(0)
}

/// Order in which a layer consumes input tiles and produces output tiles.
/// Tiles are byte ranges of the HWC tensors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub ia_tiles: Vec<Range<usize>>,
    pub oa_tiles: Vec<Range<usize>>,
    /// Input tiles read while producing each output tile.
    pub needs: Vec<Vec<usize>>,
    /// Output pixels covered by each output tile.
    pub oa_pixels: Vec<Range<usize>>,
}

impl TilePlan {
    /// Tiling that follows the engines: three-pixel blocks for PW, output
    /// rows for windowed layers, and a single tile for FC and global pooling.
    pub fn for_layer(l: &LayerSpec) -> Self {
        let (m, n) = (l.m, l.n);
        match l.kind {
            LayerKind::Pw if l.stride == 1 => {
                let pixels = l.h_in * l.w_in;
                let blocks: Vec<Range<usize>> = (0..pixels).step_by(3).map(|p| p..(p + 3).min(pixels)).collect();
                TilePlan {
                    ia_tiles: blocks.iter().map(|r| r.start * m..r.end * m).collect(),
                    oa_tiles: blocks.iter().map(|r| r.start * n..r.end * n).collect(),
                    needs: (0..blocks.len()).map(|b| vec![b]).collect(),
                    oa_pixels: blocks,
                }
            }
            LayerKind::Fc | LayerKind::Gap => TilePlan {
                ia_tiles: std::iter::once(0..ia_bytes(l)).collect(),
                oa_tiles: std::iter::once(0..oa_bytes(l)).collect(),
                needs: vec![vec![0]],
                oa_pixels: std::iter::once(0..l.h_out * l.w_out).collect(),
            },
            _ => {
                let row_in = l.w_in * m;
                let row_out = l.w_out * n;
                let (s, p) = (l.stride as isize, l.pad as isize);
                let needs = (0..l.h_out)
                    .map(|y| {
                        let top = y as isize * s - p;
                        (top..top + l.k as isize)
                            .filter(|&r| r >= 0 && (r as usize) < l.h_in)
                            .map(|r| r as usize)
                            .collect()
                    })
                    .collect();
                TilePlan {
                    ia_tiles: (0..l.h_in).map(|r| r * row_in..(r + 1) * row_in).collect(),
                    oa_tiles: (0..l.h_out).map(|y| y * row_out..(y + 1) * row_out).collect(),
                    needs,
                    oa_pixels: (0..l.h_out).map(|y| y * l.w_out..(y + 1) * l.w_out).collect(),
                }
            }
        }
    }

    /// Last step at which each input tile is read.
    fn last_use(&self) -> Vec<Option<usize>> {
        let mut last = vec![None; self.ia_tiles.len()];
        for (step, need) in self.needs.iter().enumerate() {
            for &t in need {
                last[t] = Some(step);
            }
        }
        last
    }
}

/// An output write that would destroy input still waiting to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Collision {
    pub step: usize,
    pub ia_tile: usize,
    /// Byte address written by the output tile.
    pub oa_addr: usize,
    /// Byte address of the input it overwrites (same physical location).
    pub ia_addr: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayVerdict {
    pub legal: bool,
    pub collision: Option<Collision>,
    /// Extra input tiles to cache before each step.
    pub prefetch: Vec<Vec<usize>>,
}

/// Checks an overlaid schedule. Every step caches the tiles it needs;
/// cached tiles stay until their last use. With `prefetch` the schedule
/// also caches any live, uncached input tile the step's output would
/// overwrite; without it such a write is reported as a collision.
pub fn overlay_schedule(plan: &TilePlan, prefetch: bool) -> OverlayVerdict {
    let last = plan.last_use();
    let mut cached = vec![false; plan.ia_tiles.len()];
    let mut directives = vec![Vec::new(); plan.oa_tiles.len()];
    for (step, oa) in plan.oa_tiles.iter().enumerate() {
        for &t in &plan.needs[step] {
            cached[t] = true;
        }
        for (t, ia) in plan.ia_tiles.iter().enumerate() {
            let live = last[t].is_some_and(|l| l >= step);
            let overlap = ia.start < oa.end && oa.start < ia.end;
            if !live || !overlap || cached[t] {
                continue;
            }
            if prefetch {
                cached[t] = true;
                directives[step].push(t);
            } else {
                let addr = ia.start.max(oa.start);
                return OverlayVerdict {
                    legal: false,
                    collision: Some(Collision {
                        step,
                        ia_tile: t,
                        oa_addr: addr,
                        ia_addr: addr,
                    }),
                    prefetch: directives,
                };
            }
        }
    }
    OverlayVerdict {
        legal: true,
        collision: None,
        prefetch: directives,
    }
}

/// Executes a layer against a single shared buffer, byte by byte, following
/// `verdict`'s prefetch directives. Inputs are taken from the cache copy
/// made when each tile was loaded, so any premature overwrite shows up in
/// the result.
pub fn simulate_overlay(
    spec: &LayerSpec,
    ia: &QTensor,
    weights: &[i32],
    bias: &[i32],
    plan: &TilePlan,
    verdict: &OverlayVerdict,
) -> Result<QTensor> {
    if spec.residual_src.is_some() {
        return Err(Error::Unsupported {
            what: "overlay simulation of",
            value: "residual layers".into(),
        });
    }
    let ia_len = ia.len();
    let oa_len = spec.output_shape().len();
    let mut memory = vec![0i32; ia_len.max(oa_len)];
    memory[..ia_len].copy_from_slice(ia.data());
    let mut view = vec![0i32; ia_len];
    let mut cached = vec![false; plan.ia_tiles.len()];
    for step in 0..plan.oa_tiles.len() {
        let extra = verdict.prefetch.get(step).map(Vec::as_slice).unwrap_or(&[]);
        for &t in plan.needs[step].iter().chain(extra) {
            if !cached[t] {
                let r = plan.ia_tiles[t].clone();
                view[r.clone()].copy_from_slice(&memory[r]);
                cached[t] = true;
            }
        }
        let cache = QTensor::from_raw(ia.shape(), ia.precision(), ia.is_signed(), view.clone());
        let vals = reference_layer_pixels(spec, &cache, weights, bias, None, plan.oa_pixels[step].clone())?;
        memory[plan.oa_tiles[step].clone()].copy_from_slice(&vals);
    }
    memory.truncate(oa_len);
    QTensor::new(spec.output_shape(), spec.precision, spec.quant.signed_output, memory)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub layer: usize,
    pub kind: LayerKind,
    pub ia_bytes: usize,
    pub oa_bytes: usize,
    pub conventional: usize,
    pub overlaid: usize,
    /// Naive schedule legal without prefetching.
    pub naive_legal: bool,
    pub prefetches: usize,
}

pub fn plan_report(graph: &ModelGraph, constants: &Constants) -> Vec<PlanRow> {
    graph
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let plan = TilePlan::for_layer(l);
            let naive = overlay_schedule(&plan, false);
            let fixed = overlay_schedule(&plan, constants.plan.prefetch);
            PlanRow {
                layer: i,
                kind: l.kind,
                ia_bytes: ia_bytes(l),
                oa_bytes: oa_bytes(l),
                conventional: ia_bytes(l) + oa_bytes(l),
                overlaid: overlaid_bytes(i, l, constants),
                naive_legal: naive.legal,
                prefetches: fixed.prefetch.iter().map(Vec::len).sum(),
            }
        })
        .collect()
}

pub fn plan_table(rows: &[PlanRow]) -> String {
    use std::fmt::Write;
    let mut s = format!(
        "{:>5} {:<7} {:>9} {:>9} {:>10} {:>9} {}\n",
        "layer", "kind", "IA KB", "OA KB", "IA+OA KB", "max KB", "verdict"
    );
    for r in rows {
        let verdict = if r.naive_legal {
            "legal".to_string()
        } else {
            format!("legal with {} prefetches", r.prefetches)
        };
        let _ = writeln!(
            s,
            "{:>5} {:<7} {:>9.3} {:>9.3} {:>10.3} {:>9.3} {}",
            r.layer,
            r.kind.to_string(),
            r.ia_bytes as f64 / 1000.0,
            r.oa_bytes as f64 / 1000.0,
            r.conventional as f64 / 1000.0,
            r.overlaid as f64 / 1000.0,
            verdict
        );
    }
    s
}

/// Outcome of checking one layer of a model under overlay execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerOverlayCheck {
    pub layer: usize,
    pub naive_legal: bool,
    pub prefetches: usize,
    pub matches_disjoint: bool,
}

/// Runs every layer of `graph` both with disjoint buffers and through the
/// overlay simulation (with prefetching), comparing outputs byte for byte.
/// The first layer is skipped when the first-layer exception keeps its
/// buffers apart.
pub fn check_model_overlay(graph: &ModelGraph, weights: &ModelWeights, input: &QTensor, constants: &Constants) -> Result<Vec<LayerOverlayCheck>> {
    weights.check(graph)?;
    let mut cur = input.clone();
    let mut out = Vec::new();
    for (i, l) in graph.layers.iter().enumerate() {
        let lw = &weights.layers[i];
        let disjoint = reference_layer(l, &cur, &lw.weights, &lw.bias, None)?;
        if !(i == 0 && constants.plan.first_layer_exception) {
            let plan = TilePlan::for_layer(l);
            let naive = overlay_schedule(&plan, false);
            let verdict = overlay_schedule(&plan, true);
            let overlaid = simulate_overlay(l, &cur, &lw.weights, &lw.bias, &plan, &verdict)?;
            out.push(LayerOverlayCheck {
                layer: i,
                naive_legal: naive.legal,
                prefetches: verdict.prefetch.iter().map(Vec::len).sum(),
                matches_disjoint: overlaid == disjoint,
            });
        }
        cur = disjoint;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{bundled, parse_model, Precision, Shape3};

    #[test]
    fn bundled_peaks() {
        let c = Constants::default();
        let d = bundled::dscnn();
        assert_eq!(peak_memory_soa(&d), 107_520);
        assert_eq!(peak_memory_raman(&d, &c), 54_720);
        let m = bundled::mobilenetv1();
        assert_eq!(peak_memory_soa(&m), 70_688);
        assert_eq!(peak_memory_raman(&m, &c), 44_560);
    }

    #[test]
    fn single_layer_cases() {
        let g = parse_model("model input=1x1x10\npw n=10\n").unwrap();
        assert_eq!(peak_memory_soa(&g), 20);
        let mut c = Constants::default();
        c.plan.first_layer_exception = false;
        assert_eq!(peak_memory_raman(&g, &c), 10);
    }

    #[test]
    fn dw_stride1_is_legal_without_prefetch() {
        let g = parse_model("model input=6x5x4\ndw k=3 stride=1 pad=1\n").unwrap();
        let v = overlay_schedule(&TilePlan::for_layer(&g.layers[0]), false);
        assert!(v.legal);
    }

    #[test]
    fn expanding_pw_needs_prefetch() {
        let g = parse_model("model input=3x4x4\npw n=8 alpha=1 beta=3\n").unwrap();
        let l = &g.layers[0];
        let plan = TilePlan::for_layer(l);
        let naive = overlay_schedule(&plan, false);
        assert!(!naive.legal);
        let c = naive.collision.unwrap();
        assert_eq!(c.step, 0);
        assert_eq!(c.ia_tile, 1);
        assert_eq!(c.oa_addr, 12);

        let fixed = overlay_schedule(&plan, true);
        assert!(fixed.legal);
        let ia = QTensor::new(Shape3::new(3, 4, 4), Precision::B8, false, (0..48).map(|v| v * 5 % 256).collect()).unwrap();
        let w: Vec<i32> = (0..32).map(|v| (v % 7) - 3).collect();
        let bias = vec![1; 8];
        let want = reference_layer(l, &ia, &w, &bias, None).unwrap();
        assert_eq!(simulate_overlay(l, &ia, &w, &bias, &plan, &fixed).unwrap(), want);
        assert_ne!(simulate_overlay(l, &ia, &w, &bias, &plan, &naive).unwrap(), want);
    }

    #[test]
    fn empty_plan_is_legal() {
        let plan = TilePlan { ia_tiles: vec![], oa_tiles: vec![], needs: vec![], oa_pixels: vec![] };
        assert!(overlay_schedule(&plan, false).legal);
    }
}
