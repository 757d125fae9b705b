use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use raman::ase::rap_filter_for;
use raman::exec::reference::reference_run_with;
use raman::exec::{RunOptions, Theta};
use raman::isa::{self, assemble, dispatch, encode};
use raman::perf::{self, Dataflow};
use raman::plan::{peak_memory_raman, peak_memory_soa, plan_report, plan_table};
use raman::prune::{parameter_memory_size, PruneRatio};
use raman::weights::{compile, CompiledWeights, ModelWeights};
use raman::{bundled, parse_model, Constants, Error, LayerKind, ModelGraph, QTensor};

#[derive(Parser)]
#[command(name = "raman", version, about = "Compile, simulate and analyze sparse DS-CNN accelerator programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a model and its weights into a program (.rmn) and weight blob (.rwt).
    Compile {
        /// Model file, or a bundled model name (dscnn, mobilenetv1).
        model: String,
        /// Dense weight file; synthetic weights are used when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Seed for synthetic weights.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Fraction of PW weights to prune: 0, 0.25, 0.5 or 0.75.
        #[arg(long, default_value = "0", value_parser = parse_ratio)]
        prune: PruneRatio,
        /// Activation-pruning threshold written into every PW instruction.
        #[arg(long)]
        theta: Option<u8>,
        /// Output path prefix; defaults to the model name.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute a compiled program and report scores, traffic and cycles.
    Run {
        program: PathBuf,
        weights: PathBuf,
        /// Input tensor file; a synthetic input is generated when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        input_seed: u64,
        /// Fraction of zeros in the synthetic input.
        #[arg(long, default_value_t = 0.3)]
        input_sparsity: f64,
        /// Comma-separated thresholds; each value is one sweep point.
        #[arg(long, value_delimiter = ',')]
        theta: Vec<u8>,
        #[arg(long)]
        double_buffer: bool,
        /// Also run the dense reference and require bit-identical outputs.
        #[arg(long)]
        dense_oracle: bool,
        /// Disable zero skipping and compressed activation storage.
        #[arg(long)]
        dense: bool,
        /// Write the per-layer ledger as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Print the per-layer ledger table.
        #[arg(long)]
        table: bool,
        /// Sweep points evaluated in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Static analyses of a model.
    Analyze {
        mode: AnalyzeMode,
        model: String,
    },
    /// Generate synthetic weights or inputs.
    Synth {
        what: SynthKind,
        model: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Fraction of zeros (inputs only).
        #[arg(long, default_value_t = 0.3)]
        sparsity: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print a program as text.
    Disasm { program: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalyzeMode {
    Dataflow,
    Peakmem,
    Ops,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Weights,
    Input,
}

fn parse_ratio(s: &str) -> Result<PruneRatio, String> {
    s.parse::<f64>()
        .ok()
        .and_then(|r| PruneRatio::from_fraction(r).ok())
        .ok_or_else(|| format!("'{s}' is not a supported ratio; choose one of {{0, 0.25, 0.5, 0.75}}"))
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_invariant_violation() { 3 } else { 2 },
            msg: e.to_string(),
        }
    }
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.msg = format!("{}: {}", path.display(), f.msg);
        f
    }
}

fn load_model(arg: &str) -> Result<ModelGraph, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Failure {
            code: 2,
            msg: format!("{arg}: {e}"),
        })?;
        return parse_model(&text).map_err(with_path(path));
    }
    bundled::by_name(arg).ok_or_else(|| Failure {
        code: 2,
        msg: format!("{arg}: no such file or bundled model"),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = Constants::from_env()
        .map_err(Failure::from)
        .and_then(|c| execute(cli.cmd, c));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn execute(cmd: Cmd, mut constants: Constants) -> Result<(), Failure> {
    match cmd {
        Cmd::Compile {
            model,
            weights,
            seed,
            prune,
            theta,
            output,
        } => {
            let mut graph = load_model(&model)?;
            if let Some(t) = theta {
                for l in graph.layers.iter_mut().filter(|l| l.kind == LayerKind::Pw) {
                    l.rap_threshold = t;
                }
            }
            let w = match &weights {
                Some(p) => ModelWeights::load(p).map_err(with_path(p))?,
                None => ModelWeights::synthesize(&graph, seed),
            };
            let compiled = compile(&graph, &w, Some(prune), &constants)?;
            let program: Vec<u128> = assemble(&graph, &compiled)?
                .iter()
                .map(encode)
                .collect::<raman::Result<_>>()?;
            let prefix = output.unwrap_or_else(|| PathBuf::from(&graph.name));
            let rmn = prefix.with_extension("rmn");
            let rwt = prefix.with_extension("rwt");
            isa::save_program(&rmn, &program)?;
            compiled.save_blob(&rwt)?;
            let report = parameter_memory_size(&graph, Some(prune), &constants);
            println!("model       {} ({} layers)", graph.name, graph.len());
            println!("pruning     {prune}");
            println!("parameters  {:.3} KB", report.total_kb());
            println!("image       {} bytes", compiled.image_bytes());
            println!("wrote       {} {}", rmn.display(), rwt.display());
            Ok(())
        }
        Cmd::Run {
            program,
            weights,
            input,
            input_seed,
            input_sparsity,
            theta,
            double_buffer,
            dense_oracle,
            dense,
            csv,
            table,
            jobs,
        } => {
            constants.latency.double_buffer |= double_buffer;
            let prog = isa::load_program(&program).map_err(with_path(&program))?;
            let image = std::fs::read(&weights)
                .map_err(|e| Failure {
                    code: 2,
                    msg: format!("{}: {e}", weights.display()),
                })
                .and_then(|b| CompiledWeights::image_from_blob(&b).map_err(with_path(&weights)))?;
            let (graph, dense_w) = isa::program_model(&prog, &image, &constants).map_err(with_path(&program))?;
            let ia = match &input {
                Some(p) => QTensor::load(p).map_err(with_path(p))?,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(input_seed);
                    QTensor::random(graph.input, input_sparsity, 255, &mut rng)
                }
            };
            if ia.shape() != graph.input {
                return Err(Error::ShapeMismatch {
                    producer: "input".into(),
                    consumer: "#0".into(),
                    detail: format!("tensor is {}, program expects {}", ia.shape(), graph.input),
                }
                .into());
            }
            let points: Vec<Theta> = if theta.is_empty() {
                vec![Theta::Model]
            } else {
                theta.iter().map(|&t| Theta::Uniform(t)).collect()
            };
            let run_point = |th: &Theta| -> Result<String, Failure> {
                let opts = RunOptions {
                    theta: th.clone(),
                    exploit_sparsity: !dense,
                    keep_activations: dense_oracle,
                };
                let res = dispatch(&prog, &image, &ia, &opts, &constants)?;
                if dense_oracle {
                    let refs = reference_run_with(&graph, &dense_w, &ia, |i, l, t| {
                        match opts.theta.for_layer(i, l) {
                            0 => t,
                            th => rap_filter_for(l, &t, th),
                        }
                    })?;
                    for (i, (got, want)) in res.activations.iter().zip(&refs).enumerate() {
                        if got != want {
                            let bad = got.data().iter().zip(want.data()).position(|(a, b)| a != b);
                            return Err(Error::OracleMismatch {
                                layer: i,
                                detail: format!("first differing element {bad:?}"),
                            }
                            .into());
                        }
                    }
                }
                let lat = perf::estimate_latency(&res.ledger, &constants)?;
                let label = match th {
                    Theta::Uniform(t) => format!("theta {t}"),
                    _ => "theta from program".to_string(),
                };
                let mut out = format!("== {label}\n");
                let scores: Vec<String> = res.output.data().iter().map(i32::to_string).collect();
                out += &format!("scores      {}\n", scores.join(" "));
                if let Some((best, _)) = res.output.data().iter().enumerate().rev().max_by_key(|(_, v)| **v) {
                    out += &format!("class       {best}\n");
                }
                let total: u64 = lat.iter().map(|l| l.cycles).sum();
                let (pw_cycles, pw_util) = perf::kind_summary(&lat, LayerKind::Pw);
                out += &format!("ops         {}\n", res.ledger.effective_ops());
                out += &format!("cycles      {total}\n");
                out += &format!("pw cycles   {pw_cycles} (utilization {pw_util:.3})\n");
                out += &format!("act cache   {} B read, {} B written\n", res.ledger.cache_act().read, res.ledger.cache_act().write);
                if dense_oracle {
                    out += "oracle      bit-identical\n";
                }
                if table {
                    out += &perf::ledger_table(&res.ledger, &lat);
                }
                if let Some(path) = &csv {
                    let path = match th {
                        Theta::Uniform(t) if points.len() > 1 => csv_point_path(path, *t),
                        _ => path.clone(),
                    };
                    std::fs::write(&path, perf::ledger_csv(&res.ledger, &lat)).map_err(|e| Failure {
                        code: 2,
                        msg: format!("{}: {e}", path.display()),
                    })?;
                }
                Ok(out)
            };
            let reports = sweep(&points, jobs.max(1), &run_point);
            for r in reports {
                print!("{}", r?);
            }
            Ok(())
        }
        Cmd::Analyze { mode, model } => {
            let graph = load_model(&model)?;
            match mode {
                AnalyzeMode::Ops => {
                    let dense_ops = perf::count_dense_ops(&graph);
                    println!("model      {}", graph.name);
                    for r in PruneRatio::ALL {
                        let ops = perf::count_pruned_ops(&graph, r, None);
                        println!("pruned {:>4}  {:.3} M OPs", r.to_string(), perf::millions(ops));
                    }
                    println!("dense       {dense_ops} OPs");
                }
                AnalyzeMode::Peakmem => {
                    print!("{}", plan_table(&plan_report(&graph, &constants)));
                    let soa = peak_memory_soa(&graph);
                    let ours = peak_memory_raman(&graph, &constants);
                    println!("peak (overlaid)  {:.2} KB", ours as f64 / 1000.0);
                    println!("peak (separate)  {:.2} KB", soa as f64 / 1000.0);
                    println!("reduction        {:.1}%", 100.0 * (1.0 - ours as f64 / soa as f64));
                }
                AnalyzeMode::Dataflow => {
                    let rd = perf::dataflow_access_analysis(graph.layers_of(LayerKind::Pw), Dataflow::Rd)?.total();
                    println!("{:<4} {:>14} {:>8}", "flow", "accesses", "vs RD");
                    for flow in [Dataflow::Os, Dataflow::Is, Dataflow::Ws, Dataflow::Rd] {
                        let t = perf::dataflow_access_analysis(graph.layers_of(LayerKind::Pw), flow)?;
                        println!("{:<4} {:>14} {:>7.2}x", flow.to_string(), t.total(), t.total() as f64 / rd as f64);
                    }
                }
            }
            Ok(())
        }
        Cmd::Synth {
            what,
            model,
            seed,
            sparsity,
            output,
        } => {
            let graph = load_model(&model)?;
            match what {
                SynthKind::Weights => ModelWeights::synthesize(&graph, seed).save(&output)?,
                SynthKind::Input => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    QTensor::random(graph.input, sparsity, 255, &mut rng).save(&output)?
                }
            }
            println!("wrote {}", output.display());
            Ok(())
        }
        Cmd::Disasm { program } => {
            let prog = isa::load_program(&program).map_err(with_path(&program))?;
            print!("{}", isa::disassemble(&prog));
            Ok(())
        }
    }
}

fn csv_point_path(path: &Path, theta: u8) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}-theta{theta}{ext}"))
}

/// Evaluates sweep points on up to `jobs` threads, keeping input order.
fn sweep<T: Sync, R: Send>(points: &[T], jobs: usize, f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R> {
    if jobs <= 1 || points.len() <= 1 {
        return points.iter().map(f).collect();
    }
    let chunk = points.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = points.chunks(chunk).map(|c| s.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}
