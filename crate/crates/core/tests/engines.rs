use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use raman::exec::reference::{reference_run, reference_run_with};
use raman::exec::{run_model, RunOptions, Theta};
use raman::weights::{compile, ModelWeights};
use raman::{bundled, parse_model, Constants, Error, ModelGraph, Precision, QTensor};

fn input_for(g: &ModelGraph, precision: Precision, zero: f64, rng: &mut ChaCha8Rng) -> QTensor {
    let (_, hi) = precision.range(false);
    let data = (0..g.input.len())
        .map(|_| if rng.gen_bool(zero) { 0 } else { rng.gen_range(1..=hi) })
        .collect();
    QTensor::new(g.input, precision, false, data).unwrap()
}

fn matches_reference(g: &ModelGraph, seed: u64, input: &QTensor) {
    let c = Constants::default();
    let w = ModelWeights::synthesize(g, seed);
    let compiled = compile(g, &w, None, &c).unwrap();
    let got = run_model(g, &compiled, input, &RunOptions::default(), &c).unwrap();
    let pruned = w.pruned(g, |l| l.prune_keep).unwrap();
    let want = reference_run(g, &pruned, input).unwrap();
    assert_eq!(&got.output, want.last().unwrap(), "{}", raman::model::serialize_model(g));
}

#[test]
fn low_precision_layers_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for bits in [4, 2] {
        let p = Precision::from_bits(bits).unwrap();
        for case in 0..60 {
            let (h, w, m) = (rng.gen_range(2..12), rng.gen_range(2..12), rng.gen_range(1..20));
            let n = rng.gen_range(1..24);
            let line = match case % 4 {
                0 => format!("conv k=3 stride=1 pad=1 n={n}"),
                1 => "dw k=3 stride=2 pad=1".to_string(),
                2 => format!("pw n={n} keep={}", rng.gen_range(1..=16)),
                _ => format!("fc n={n}"),
            };
            let shape = if case % 4 == 3 { format!("1x1x{m}") } else { format!("{h}x{w}x{m}") };
            let g = parse_model(&format!("model input={shape}\n{line} precision={bits} alpha=5 beta=4\n")).unwrap();
            let ia = input_for(&g, p, 0.3, &mut rng);
            matches_reference(&g, case, &ia);
        }
    }
}

#[test]
fn residual_chain_matches_reference() {
    let g = parse_model(
        "model input=6x6x8\n\
         pw n=8 alpha=3 beta=6\n\
         dw k=3 stride=1 pad=1 alpha=3 beta=5\n\
         pw n=8 alpha=3 beta=6 residual=0\n\
         maxpool k=2 stride=2\n\
         avgpool k=3 stride=1 alpha=57 beta=9\n",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ia = input_for(&g, Precision::B8, 0.4, &mut rng);
    matches_reference(&g, 3, &ia);
}

#[test]
fn zero_input_is_deterministic() {
    let c = Constants::default();
    let g = bundled::dscnn();
    let w = ModelWeights::synthesize(&g, 7);
    let zero = QTensor::zeros(g.input, Precision::B8, false);
    let compiled = compile(&g, &w, None, &c).unwrap();
    let a = run_model(&g, &compiled, &zero, &RunOptions::default(), &c).unwrap();
    let b = run_model(&g, &compiled, &zero, &RunOptions::default(), &c).unwrap();
    assert_eq!(a.output, b.output);
    assert_eq!(a.ledger, b.ledger);
    // Nothing to multiply in the first layer: every MAC is gated.
    let first = &a.ledger.layers[0];
    assert_eq!(first.macs_issued, first.macs_gated);
}

#[test]
fn dense_mode_gives_same_values_and_more_traffic() {
    let c = Constants::default();
    let g = bundled::mobilenetv1();
    let w = ModelWeights::synthesize(&g, 7);
    let compiled = compile(&g, &w, None, &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ia = input_for(&g, Precision::B8, 0.3, &mut rng);
    let sparse = run_model(&g, &compiled, &ia, &RunOptions::default(), &c).unwrap();
    let dense_opts = RunOptions { exploit_sparsity: false, ..RunOptions::default() };
    let dense = run_model(&g, &compiled, &ia, &dense_opts, &c).unwrap();
    assert_eq!(sparse.output, dense.output);
    assert!(dense.ledger.cache_act().total() > sparse.ledger.cache_act().total());
    assert!(dense.ledger.effective_ops() > sparse.ledger.effective_ops());
}

#[test]
fn rap_threshold_cuts_pw_cycles_on_mobilenet() {
    let c = Constants::default();
    let g = bundled::mobilenetv1();
    let w = ModelWeights::synthesize(&g, 7);
    let compiled = compile(&g, &w, None, &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let ia = input_for(&g, Precision::B8, 0.3, &mut rng);
    let pw_cycles = |t| {
        let opts = RunOptions { theta: Theta::Uniform(t), ..RunOptions::default() };
        let r = run_model(&g, &compiled, &ia, &opts, &c).unwrap();
        let lat = raman::perf::estimate_latency(&r.ledger, &c).unwrap();
        raman::perf::kind_summary(&lat, raman::LayerKind::Pw).0
    };
    let (c0, c40) = (pw_cycles(0), pw_cycles(40));
    assert!(c40 < c0, "{c40} vs {c0}");

    // The filtered run still equals the oracle on filtered inputs.
    let opts = RunOptions { theta: Theta::Uniform(40), ..RunOptions::default() };
    let got = run_model(&g, &compiled, &ia, &opts, &c).unwrap();
    let want = reference_run_with(&g, &w, &ia, |i, l, t| match opts.theta.for_layer(i, l) {
        0 => t,
        th => raman::ase::rap_filter_for(l, &t, th),
    })
    .unwrap();
    assert_eq!(&got.output, want.last().unwrap());
}

#[test]
fn psum_overflow_is_reported() {
    let c = Constants::default();
    let g = parse_model("model input=4x4x32\nconv k=3 stride=1 pad=1 n=1\n").unwrap();
    let mut w = ModelWeights::zeros(&g);
    w.layers[0].weights.iter_mut().for_each(|v| *v = 127);
    let ia = QTensor::new(g.input, Precision::B8, false, vec![255; g.input.len()]).unwrap();
    let compiled = compile(&g, &w, None, &c).unwrap();
    let err = run_model(&g, &compiled, &ia, &RunOptions::default(), &c).unwrap_err();
    assert!(matches!(err, Error::PsumOverflow { layer: 0, .. }), "{err}");
    assert!(err.is_invariant_violation());
}

#[test]
fn strided_pw_with_rap_matches_filtered_reference() {
    let c = Constants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for case in 0..40 {
        let (h, w, m, n) = (rng.gen_range(2..14), rng.gen_range(2..14), rng.gen_range(1..24), rng.gen_range(1..24));
        let g = parse_model(&format!("model input={h}x{w}x{m}\npw n={n} stride=2 theta=60 alpha=9 beta=8\n")).unwrap();
        let wts = ModelWeights::synthesize(&g, case);
        let ia = input_for(&g, Precision::B8, 0.6, &mut rng);
        let compiled = compile(&g, &wts, None, &c).unwrap();
        let got = run_model(&g, &compiled, &ia, &RunOptions::default(), &c).unwrap();
        let want = reference_run_with(&g, &wts, &ia, |_, l, t| raman::ase::rap_filter_for(l, &t, l.rap_threshold)).unwrap();
        assert_eq!(&got.output, want.last().unwrap());
    }
}
