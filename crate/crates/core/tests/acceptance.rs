//! Acceptance checks. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line even when all of them succeed.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use raman::exec::reference::{reference_execute, reference_run_with};
use raman::exec::{execute_layer, run_model, RunOptions, Theta};
use raman::isa::{self, assemble, decode, dispatch, encode, Instruction, FIELDS};
use raman::perf::{self, layer_latency, Dataflow};
use raman::plan::{check_model_overlay, overlay_schedule, peak_memory_raman, peak_memory_soa, simulate_overlay, TilePlan};
use raman::prune::{balanced_prune, csr_decode, csr_encode, parameter_memory_size, tile_keep, CompressedWeightTile, DenseTile, PruneRatio};
use raman::weights::{compile, ModelWeights};
use raman::{bundled, parse_model, Constants, Error, LayerKind, LayerSpec, ModelGraph, QTensor, Shape3};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want
}

fn models() -> [ModelGraph; 2] {
    [bundled::dscnn(), bundled::mobilenetv1()]
}

// Independent arithmetic on the layer table.

fn oracle_macs(l: &LayerSpec) -> u64 {
    let out = (l.h_out * l.w_out) as u64;
    match l.kind {
        LayerKind::Conv => out * (l.k * l.k * l.m * l.n) as u64,
        LayerKind::Dw => out * (l.k * l.k * l.m) as u64,
        LayerKind::Pw => out * (l.m * l.n) as u64,
        LayerKind::Fc => (l.m * l.n) as u64,
        _ => 0,
    }
}

fn oracle_pool_ops(l: &LayerSpec) -> u64 {
    match l.kind {
        LayerKind::Gap => (l.h_in * l.w_in * l.m) as u64,
        LayerKind::MaxPool | LayerKind::AvgPool => (l.h_out * l.w_out * l.n * l.k * l.k) as u64,
        _ => 0,
    }
}

fn oracle_ops(g: &ModelGraph, keep: usize) -> u64 {
    g.layers
        .iter()
        .map(|l| {
            let macs = if l.kind == LayerKind::Pw {
                let full = l.n / 16;
                let rest = l.n % 16;
                let per_row = full * keep + rest.min(keep);
                (l.h_out * l.w_out * l.m * per_row) as u64
            } else {
                oracle_macs(l)
            };
            2 * macs + oracle_pool_ops(l)
        })
        .sum()
}

fn act_bytes(s: Shape3) -> usize {
    s.h * s.w * s.c
}

/// Zeroes a lone non-zero activation of a 3-pixel block when its magnitude is
/// below `theta`. Blocks group the pixels the layer actually reads, in output
/// raster order, so strided layers see their subsampled stream. Written
/// without the engine's bitmap code.
fn oracle_rap(t: QTensor, l: &LayerSpec, theta: u8) -> QTensor {
    if theta == 0 {
        return t;
    }
    let c = t.shape().c;
    let w = t.shape().w;
    let mut data = t.data().to_vec();
    let read: Vec<usize> = (0..l.h_out)
        .flat_map(|y| (0..l.w_out).map(move |x| y * l.stride * w + x * l.stride))
        .collect();
    for block in read.chunks(3) {
        for ch in 0..c {
            let nz: Vec<usize> = block.iter().copied().filter(|&p| data[p * c + ch] != 0).collect();
            if nz.len() == 1 && data[nz[0] * c + ch].abs() < theta as i32 {
                data[nz[0] * c + ch] = 0;
            }
        }
    }
    QTensor::new(t.shape(), t.precision(), t.is_signed(), data).unwrap()
}

fn random_input<R: Rng>(shape: Shape3, hi: i32, zero: f64, rng: &mut R) -> QTensor {
    let data = (0..shape.len())
        .map(|_| if rng.gen_bool(zero) { 0 } else { rng.gen_range(1..=hi) })
        .collect();
    QTensor::new(shape, raman::Precision::B8, false, data).unwrap()
}

// 1
fn op_counts() -> Outcome {
    let t = Instant::now();
    let want_dense = [12.052, 41.802];
    let want_pruned = [[9.623, 7.194, 4.765], [32.378, 22.953, 13.528]];
    let mut detail = Vec::new();
    for (gi, g) in models().iter().enumerate() {
        let dense = perf::count_dense_ops(g);
        ensure(dense == oracle_ops(g, 16), || format!("{} dense {dense} != oracle {}", g.name, oracle_ops(g, 16)))?;
        let m = perf::millions(dense);
        ensure(within(m, want_dense[gi], 0.02), || format!("{} dense {m:.3} M", g.name))?;
        for (ri, r) in [PruneRatio::Quarter, PruneRatio::Half, PruneRatio::ThreeQuarters].into_iter().enumerate() {
            let ops = perf::count_pruned_ops(g, r, None);
            let keep = r.keep(16);
            ensure(ops == oracle_ops(g, keep), || format!("{} {r} {ops} != oracle", g.name))?;
            let m = perf::millions(ops);
            ensure(within(m, want_pruned[gi][ri], 0.03), || format!("{} {r} {m:.3} M vs {}", g.name, want_pruned[gi][ri]))?;
        }
        detail.push(format!("{} {:.3} M", g.name, m));
    }
    ensure(t.elapsed() < Duration::from_secs(1), || "slower than 1 s".into())?;
    Ok(detail.join(", "))
}

// 2
fn peak_memory() -> Outcome {
    let t = Instant::now();
    let c = Constants::default();
    let mut detail = Vec::new();
    for (g, want, reduction) in [(bundled::dscnn(), 54_720, 0.49), (bundled::mobilenetv1(), 44_560, 0.37)] {
        let soa_oracle = g.layers.iter().map(|l| act_bytes(l.input_shape()) + act_bytes(l.output_shape())).max().unwrap();
        let ours_oracle = g
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (ia, oa) = (act_bytes(l.input_shape()), act_bytes(l.output_shape()));
                if i == 0 { ia + oa } else { ia.max(oa) }
            })
            .max()
            .unwrap();
        let soa = peak_memory_soa(&g);
        let ours = peak_memory_raman(&g, &c);
        ensure(soa == soa_oracle && ours == ours_oracle, || format!("{}: {ours}/{soa} vs oracle {ours_oracle}/{soa_oracle}", g.name))?;
        ensure(ours == want, || format!("{}: {ours} B, expected {want}", g.name))?;
        let red = 1.0 - ours as f64 / soa as f64;
        ensure((red - reduction).abs() <= 0.01, || format!("{}: reduction {red:.3}", g.name))?;
        detail.push(format!("{} {:.2} KB ({:.0}% less)", g.name, ours as f64 / 1000.0, red * 100.0));
    }
    ensure(t.elapsed() < Duration::from_secs(1), || "slower than 1 s".into())?;
    Ok(detail.join(", "))
}

// 3
fn parameter_memory() -> Outcome {
    let c = Constants::default();
    let want = [[61.968, 49.656, 37.392, 25.104], [324.288, 251.328, 178.368, 105.384]];
    let mut worst: f64 = 0.0;
    for (gi, g) in models().iter().enumerate() {
        for (ri, r) in PruneRatio::ALL.into_iter().enumerate() {
            let kb = parameter_memory_size(g, Some(r), &c).total_kb();
            let err = (kb - want[gi][ri]).abs() / want[gi][ri];
            worst = worst.max(err);
            ensure(err <= 0.02, || format!("{} {r}: {kb:.3} KB vs {}", g.name, want[gi][ri]))?;
        }
    }
    Ok(format!("8 points, worst deviation {:.2}%", worst * 100.0))
}

// 4
/// Counts accesses by walking each dataflow's loop nest explicitly.
fn loop_nest_traffic(p: usize, m: usize, n: usize, flow: Dataflow) -> u64 {
    let mut count = 0u64;
    match flow {
        Dataflow::Os => {
            for _ in 0..p {
                for _ in 0..n {
                    for _ in 0..m {
                        count += 2;
                    }
                    count += 1;
                }
            }
        }
        Dataflow::Is => {
            for _ in 0..p {
                for mi in 0..m {
                    count += 1;
                    for _ in 0..n {
                        count += 1;
                        if mi > 0 {
                            count += 6;
                        }
                    }
                }
                count += n as u64;
            }
        }
        Dataflow::Ws => {
            for mi in 0..m {
                for _ in 0..n {
                    count += 1;
                    for _ in 0..p {
                        count += 1;
                        if mi > 0 {
                            count += 6;
                        }
                    }
                }
            }
            count += (p * n) as u64;
        }
        Dataflow::Rd => {
            for _ in 0..p {
                for g in (0..n).step_by(16) {
                    for _ in 0..m {
                        count += 1;
                        for _ in g..(g + 16).min(n) {
                            count += 1;
                        }
                    }
                }
                count += n as u64;
            }
        }
    }
    count
}

fn dataflow_ratios() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (h, w, m, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..40), rng.gen_range(1..40));
        let g = parse_model(&format!("model input={h}x{w}x{m}\npw n={n}\n")).unwrap();
        for flow in Dataflow::ALL {
            let got = perf::dataflow::layer_traffic(&g.layers[0], flow).total();
            let want = loop_nest_traffic(h * w, m, n, flow);
            ensure(got == want, || format!("{flow} on {h}x{w}x{m}->{n}: {got} vs loop nest {want}"))?;
        }
    }
    let g = bundled::mobilenetv1();
    let total = |f| perf::dataflow_access_analysis(g.layers_of(LayerKind::Pw), f).unwrap().total() as f64;
    let rd = total(Dataflow::Rd);
    let (os, is, ws) = (total(Dataflow::Os) / rd, total(Dataflow::Is) / rd, total(Dataflow::Ws) / rd);
    ensure(within(os, 1.9, 0.15), || format!("OS/RD {os:.2}"))?;
    ensure(within(is, 6.5, 0.15), || format!("IS/RD {is:.2}"))?;
    ensure(within(ws, 6.5, 0.15), || format!("WS/RD {ws:.2}"))?;
    Ok(format!("OS/RD {os:.2}x, IS/RD {is:.2}x, WS/RD {ws:.2}x"))
}

// 5
fn random_layer<R: Rng>(kind: LayerKind, rng: &mut R) -> ModelGraph {
    loop {
        let h = rng.gen_range(1..=32);
        let w = rng.gen_range(1..=32);
        let m = rng.gen_range(1..=32);
        let alpha = rng.gen_range(1..=255);
        let beta = rng.gen_range(6..=16);
        let signed = rng.gen_bool(0.3) as u8;
        let relu = rng.gen_bool(0.7) as u8;
        let q = format!("alpha={alpha} beta={beta} signed={signed} relu={relu}");
        let line = match kind {
            LayerKind::Conv => {
                let k = rng.gen_range(1..=3);
                format!("conv k={k} stride={} pad={} n={} {q}", rng.gen_range(1..=2), rng.gen_range(0..k), rng.gen_range(1..=32))
            }
            LayerKind::Dw => {
                let k = rng.gen_range(1..=3);
                format!("dw k={k} stride={} pad={} {q}", rng.gen_range(1..=2), rng.gen_range(0..k))
            }
            LayerKind::Pw => {
                let stride = if rng.gen_bool(0.2) { 2 } else { 1 };
                let theta = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(1..=80) };
                format!("pw n={} stride={stride} keep={} theta={theta} {q}", rng.gen_range(1..=32), rng.gen_range(1..=16))
            }
            LayerKind::Fc => format!("fc n={} {q}", rng.gen_range(1..=32)),
            LayerKind::MaxPool => format!("maxpool k={} stride={}", rng.gen_range(1..=3), rng.gen_range(1..=2)),
            LayerKind::AvgPool => format!("avgpool k={} stride={} alpha={alpha} beta={}", rng.gen_range(1..=3), rng.gen_range(1..=2), rng.gen_range(1..=4)),
            LayerKind::Gap => format!("gap alpha={alpha} beta={}", rng.gen_range(6..=14)),
        };
        let (h, w) = if kind == LayerKind::Fc { (1, 1) } else { (h, w) };
        if let Ok(g) = parse_model(&format!("model input={h}x{w}x{m}\n{line}\n")) {
            return g;
        }
    }
}

/// Sparse engine against the dense oracle on one graph. PW weights are
/// pruned to each layer's keep before the oracle sees them.
fn compare_graph(g: &ModelGraph, w: &ModelWeights, input: &QTensor, theta: &Theta, c: &Constants) -> Result<bool, String> {
    let compiled = compile(g, w, None, c).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        theta: theta.clone(),
        exploit_sparsity: true,
        keep_activations: true,
    };
    let pruned = w.pruned(g, |l| l.prune_keep).map_err(|e| e.to_string())?;
    let want = reference_run_with(g, &pruned, input, |i, l, t| oracle_rap(t, l, theta.for_layer(i, l))).map_err(|e| e.to_string())?;
    match run_model(g, &compiled, input, &opts, c) {
        Ok(res) => {
            for (i, (a, b)) in res.activations.iter().zip(&want).enumerate() {
                if a != b {
                    return Err(format!("layer {i} differs on {}", raman::model::serialize_model(g).replace('\n', " | ")));
                }
            }
            Ok(false)
        }
        Err(Error::PsumOverflow { layer, .. }) => {
            // Legitimate only if the true accumulator leaves the 24-bit range.
            let l = &g.layers[layer];
            let ia = if layer == 0 { input.clone() } else { want[layer - 1].clone() };
            let ia = oracle_rap(ia, l, theta.for_layer(layer, l));
            let acc = reference_execute(l, &ia, &pruned.layers[layer].weights).unwrap();
            let (lo, hi) = c.psum_range();
            ensure(acc.iter().any(|&v| v < lo || v > hi), || format!("spurious overflow in {}", g.name))?;
            Ok(true)
        }
        Err(e) => Err(format!("{}: {e}", g.name)),
    }
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let c = Constants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kinds = [
        LayerKind::Conv,
        LayerKind::Dw,
        LayerKind::Pw,
        LayerKind::Fc,
        LayerKind::MaxPool,
        LayerKind::AvgPool,
        LayerKind::Gap,
    ];
    let mut overflows = 0;
    let mut rap_cases = 0;
    for kind in kinds {
        for _ in 0..500 {
            let g = random_layer(kind, &mut rng);
            let w = ModelWeights::synthesize(&g, rng.gen());
            let zero = rng.gen_range(0.0..0.9);
            let input = random_input(g.input, 255, zero, &mut rng);
            rap_cases += (g.layers[0].rap_threshold > 0) as usize;
            overflows += compare_graph(&g, &w, &input, &Theta::Model, &c)? as usize;
        }
    }
    for g in models() {
        let w = ModelWeights::synthesize(&g, 7);
        let input = random_input(g.input, 255, 0.3, &mut rng);
        for theta in [Theta::Uniform(0), Theta::Uniform(24), Theta::Uniform(60)] {
            ensure(!compare_graph(&g, &w, &input, &theta, &c)?, || format!("{} overflowed", g.name))?;
        }
        for r in PruneRatio::ALL {
            let mut g = g.clone();
            for l in &mut g.layers {
                l.prune_keep = r.keep(16);
            }
            ensure(!compare_graph(&g, &w, &input, &Theta::Uniform(32), &c)?, || format!("{} overflowed", g.name))?;
        }
    }
    ensure(t.elapsed() < Duration::from_secs(120), || format!("took {:?}", t.elapsed()))?;
    Ok(format!(
        "3500 random layers ({rap_cases} PW with RAP, {overflows} detected overflows) + 2 models x 7 settings in {:.1} s",
        t.elapsed().as_secs_f64()
    ))
}

// 6
fn codec_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..10_000 {
        let rows = rng.gen_range(1..=64);
        let width = if rng.gen_bool(0.8) { 16 } else { rng.gen_range(1..16) };
        let keep = tile_keep(rng.gen_range(1..=16), width);
        let data: Vec<i32> = (0..rows * width)
            .map(|_| {
                let v = rng.gen_range(1..=127);
                if rng.gen() { v } else { -v - rng.gen_range(0..=1) }
            })
            .collect();
        let dense = DenseTile::new(rows, width, data);
        let pruned = balanced_prune(&dense, keep).map_err(|e| e.to_string())?;
        for r in 0..rows {
            ensure(pruned.row_nonzeros(r) == keep, || format!("case {case}: row {r} keeps {}", pruned.row_nonzeros(r)))?;
        }
        let enc = csr_encode(&pruned).map_err(|e| e.to_string())?;
        ensure(enc.pairs.iter().all(|&(_, idx)| (idx as usize) < 16 && (idx as usize) < width), || format!("case {case}: index out of tile"))?;
        ensure(csr_decode(&enc) == pruned, || format!("case {case}: decode differs"))?;
        let mut bytes = Vec::new();
        enc.write_bytes(&mut bytes);
        let (back, used) = CompressedWeightTile::read_bytes(&bytes).map_err(|e| e.to_string())?;
        ensure(back == enc && used == bytes.len(), || format!("case {case}: byte roundtrip"))?;
    }
    Ok("10000 tiles roundtrip, rows hold exactly keep non-zeros, indices < 16".into())
}

// 7
fn isa_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut illegal = 0;
    for _ in 0..100_000 {
        let mut v = [0u64; 16];
        for (slot, &(_, width)) in v.iter_mut().zip(&FIELDS) {
            *slot = rng.gen_range(0..1u64 << width);
        }
        v[0] = rng.gen_range(0..=4);
        let ins = Instruction::from_values(&v).map_err(|e| e.to_string())?;
        let word = encode(&ins).map_err(|e| e.to_string())?;
        ensure(word >> 80 == 0, || "word wider than 80 bits".into())?;
        ensure(decode(word).map_err(|e| e.to_string())? == ins, || format!("roundtrip failed for {ins:?}"))?;
        ensure(isa::word_from_bytes(&isa::word_to_bytes(word)) == word, || "byte roundtrip".into())?;
        let raw: u128 = rng.gen::<u128>() & ((1u128 << 80) - 1);
        match decode(raw) {
            Ok(i) => ensure(encode(&i).unwrap() == raw, || format!("{raw:x} re-encodes differently"))?,
            Err(Error::IllegalInstruction(op)) => {
                ensure(op > 4, || "legal opcode rejected".into())?;
                illegal += 1;
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    let c = Constants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for g in models() {
        let w = ModelWeights::synthesize(&g, 7);
        let input = random_input(g.input, 255, 0.3, &mut rng);
        for r in [PruneRatio::None, PruneRatio::Half] {
            let compiled = compile(&g, &w, Some(r), &c).map_err(|e| e.to_string())?;
            let program: Vec<u128> = assemble(&g, &compiled).unwrap().iter().map(|i| encode(i).unwrap()).collect();
            for theta in [Theta::Model, Theta::Uniform(30)] {
                let opts = RunOptions { theta, ..RunOptions::default() };
                let direct = run_model(&g, &compiled, &input, &opts, &c).map_err(|e| e.to_string())?;
                let via = dispatch(&program, &compiled.image, &input, &opts, &c).map_err(|e| e.to_string())?;
                ensure(direct.output == via.output && direct.ledger == via.ledger, || format!("{} dispatch differs", g.name))?;
            }
        }
    }
    Ok(format!("100000 encode/decode cases ({illegal} illegal opcodes rejected); dispatch matches run_model on both models"))
}

// 8
fn runs_formulas() -> Outcome {
    let c = Constants::default();
    let mut checked = 0;
    // Hand-worked spot values: (model, layer, runs).
    let spot = [("dscnn", 1, 28 * 16), ("dscnn", 2, 280), ("dscnn", 8, 6), ("dscnn", 18, 2), ("mobilenetv1", 2, 737), ("mobilenetv1", 26, 48), ("mobilenetv1", 28, 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for g in models() {
        let w = ModelWeights::synthesize(&g, 7);
        let compiled = compile(&g, &w, None, &c).unwrap();
        let input = random_input(g.input, 255, 0.3, &mut rng);
        let res = run_model(&g, &compiled, &input, &RunOptions::default(), &c).map_err(|e| e.to_string())?;
        for (i, (l, counters)) in g.layers.iter().zip(&res.ledger.layers).enumerate() {
            let want = match l.kind {
                LayerKind::Pw => (l.h_out * l.w_out).div_ceil(3) * l.n.div_ceil(4 * 16),
                LayerKind::Dw => l.h_out * l.m.div_ceil(4),
                LayerKind::Fc => l.n.div_ceil(6),
                LayerKind::Conv => l.h_out * l.m * l.n.div_ceil(4),
                _ => 1,
            };
            let got = counters.run_count();
            ensure(got == want, || format!("{} layer {i} {}: {got} runs, expected {want}", g.name, l.kind))?;
            if let Some(&(_, _, s)) = spot.iter().find(|(n, j, _)| *n == g.name && *j == i) {
                ensure(got == s, || format!("{} layer {i}: {got} runs vs hand value {s}", g.name))?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} layers match PW/DW/FC run formulas"))
}

// 9
fn nested_inputs<R: Rng>(shape: Shape3, levels: &[f64], rng: &mut R) -> Vec<QTensor> {
    let base: Vec<i32> = (0..shape.len()).map(|_| rng.gen_range(1..=255)).collect();
    let mut order: Vec<usize> = (0..shape.len()).collect();
    order.shuffle(rng);
    levels
        .iter()
        .map(|&s| {
            let mut d = base.clone();
            for &i in &order[..(s * shape.len() as f64).round() as usize] {
                d[i] = 0;
            }
            QTensor::new(shape, raman::Precision::B8, false, d).unwrap()
        })
        .collect()
}

fn sparsity_monotonicity() -> Outcome {
    let c = Constants::default();
    let levels = [0.0, 0.25, 0.5, 0.75];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut layers = 0;
    for g in models() {
        let w = ModelWeights::synthesize(&g, 7);
        let compiled = compile(&g, &w, Some(PruneRatio::Half), &c).unwrap();
        for (i, l) in g.layers_of(LayerKind::Pw) {
            let mut prev: Option<(u64, u64, u64, u64)> = None;
            for ia in nested_inputs(l.input_shape(), &levels, &mut rng) {
                let (_, counters) = execute_layer(i, l, &compiled.layers[i], &ia, None, 0, true, &c).map_err(|e| e.to_string())?;
                let cycles = layer_latency(&counters, &c).cycles;
                let act = counters.cache_act.read + counters.cache_act.write;
                ensure(counters.glb_act.write == act_bytes(l.output_shape()) as u64, || format!("{} layer {i} spills partial sums", g.name))?;
                let now = (act, cycles, counters.cache_param.read, counters.cache_param.write);
                if let Some(p) = prev {
                    ensure(now.0 <= p.0, || format!("{} layer {i}: cache bytes rose {} -> {}", g.name, p.0, now.0))?;
                    ensure(now.1 <= p.1, || format!("{} layer {i}: cycles rose {} -> {}", g.name, p.1, now.1))?;
                    ensure(now.2 <= p.2, || format!("{} layer {i}: weight-cache reads rose", g.name))?;
                    ensure(now.3 == p.3, || format!("{} layer {i}: weight-cache writes changed", g.name))?;
                }
                prev = Some(now);
            }
            layers += 1;
        }
        let rd = perf::dataflow_access_analysis(g.layers_of(LayerKind::Pw), Dataflow::Rd).unwrap();
        ensure(rd.partials == 0, || "RD spills partial sums".into())?;
    }
    // Skipping must actually cut weight-cache reads on a dense-to-sparse step.
    let g = bundled::mobilenetv1();
    let (i, l) = g.layers_of(LayerKind::Pw).next().unwrap();
    let compiled = compile(&g, &ModelWeights::synthesize(&g, 7), None, &c).unwrap();
    let ins = nested_inputs(l.input_shape(), &[0.0, 0.75], &mut rng);
    let reads: Vec<u64> = ins
        .iter()
        .map(|ia| execute_layer(i, l, &compiled.layers[i], ia, None, 0, true, &c).unwrap().1.cache_param.read)
        .collect();
    ensure(reads[1] < reads[0], || format!("weight-cache reads {reads:?}"))?;
    Ok(format!("{layers} PW layers non-increasing over s = 0/25/50/75%; RD partial traffic 0"))
}

// 10
fn overlay_legality() -> Outcome {
    let c = Constants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut checked = 0;
    for g in models() {
        let w = ModelWeights::synthesize(&g, 7);
        let input = random_input(g.input, 255, 0.3, &mut rng);
        for r in check_model_overlay(&g, &w, &input, &c).map_err(|e| e.to_string())? {
            ensure(r.matches_disjoint, || format!("{} layer {} differs under overlay", g.name, r.layer))?;
            checked += 1;
        }
    }
    let mut collisions = 0;
    for case in 0..200 {
        let m = rng.gen_range(1..=12);
        let n = rng.gen_range(m + 1..=4 * m + 4);
        let (h, wd) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let g = parse_model(&format!("model input={h}x{wd}x{m}\npw n={n} alpha=3 beta=6\n")).unwrap();
        let l = &g.layers[0];
        let w = ModelWeights::synthesize(&g, case);
        let ia = random_input(l.input_shape(), 255, 0.2, &mut rng);
        let want = raman::exec::reference_layer(l, &ia, &w.layers[0].weights, &w.layers[0].bias, None).unwrap();
        let plan = TilePlan::for_layer(l);
        let naive = overlay_schedule(&plan, false);
        let fixed = overlay_schedule(&plan, true);
        ensure(fixed.legal, || format!("case {case}: prefetch schedule illegal"))?;
        let got = simulate_overlay(l, &ia, &w.layers[0].weights, &w.layers[0].bias, &plan, &fixed).unwrap();
        ensure(got == want, || format!("case {case}: overlaid output differs"))?;
        if !naive.legal {
            collisions += 1;
        }
    }
    ensure(collisions > 0, || "no N>M case produced a collision".into())?;
    Ok(format!("{checked} model layers identical; 200 N>M layers identical with prefetch ({collisions} collisions caught without)"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("OP counts", op_counts),
        ("peak memory", peak_memory),
        ("parameter memory", parameter_memory),
        ("dataflow ratios", dataflow_ratios),
        ("oracle equivalence", oracle_equivalence),
        ("codec and pruning properties", codec_properties),
        ("instruction set", isa_checks),
        ("run counts", runs_formulas),
        ("sparsity monotonicity", sparsity_monotonicity),
        ("overlay legality", overlay_legality),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2}. {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2}. {name}: {why}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
