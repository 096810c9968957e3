//! Acceptance gate: one PASS/FAIL line per criterion. Set
//! `HAMLET_ACCEPTANCE_DIR` to keep the generated runs.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use hamlet_cli::{run, Cli};
use hamlet_core::colearn::{certainty, uncertainty_score, IterationReport, Run, Strategy, StrategyRow};
use hamlet_core::memory::{
    format_percentages, interpretability_scores, interpretability_scores_with, nearest_reference, select_references,
    similarity_scores, Candidate, Influence, MemoryEntry, ReferenceMemory, INTERPRETABILITY_TOP_K,
};
use hamlet_core::nn::gradcheck::{check, projection_loss};
use hamlet_core::nn::{
    mse, softmax_cross_entropy, ArchConfig, ConvBlock, Ctx, DenseHead, LayerSpec, PoolIndices, Sequential, Tensor,
};
use hamlet_core::signal::io::read_json;
use hamlet_core::signal::{
    compute_montages, flip_left_right, lowpass_filter, montage_name, segment, PipelineConfig, RawRecording, SosFilter,
    ELECTRODES,
};
use hamlet_core::{rng, ClassLabel, NUM_CLASSES};
use rand::Rng as _;

const GRAD_SEEDS: u64 = 20;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const GRAD_TIME: Duration = Duration::from_secs(120);

const LINEAR_SCAN_QUERIES: usize = 1000;
const SCALE_TOL: f64 = 1e-9;
const SCORE_TOL: f64 = 1e-12;

const REEVAL_MIN_GAIN: f64 = 0.30;
const FULL_MAX_DROP: f64 = 0.01;
const COLEARN_TIME: Duration = Duration::from_secs(30 * 60);

const STRATEGY_BUDGET: usize = 128;
const STRATEGY_MIN_AGREEMENT: f64 = 0.85;
const STRATEGY_MAX_SPREAD: f64 = 0.05;

const KNOWN_MIN_GAP: f64 = 0.10;
const INTERPRETABILITY_CHANCE: f64 = 1.0 / NUM_CLASSES as f64;

/// Training sizes for the benchmark runs on one core.
const BENCH_MODEL: &[&str] = &["--arch", "compact", "--head-hidden", "256", "--head-epochs", "30"];

type Outcome = Result<String, String>;

fn cli(args: &[&str]) -> String {
    let argv = std::iter::once("hamlet").chain(args.iter().copied());
    run(Cli::try_parse_from(argv).expect("arguments parse")).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- gradients

fn uniform(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::stream(seed, "data");
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap()
}

fn perturbed(specs: &[LayerSpec], seed: u64) -> Sequential {
    let mut net = Sequential::from_specs(specs, seed).unwrap();
    let mut r = rng::stream(seed, "perturb");
    for (p, _) in net.params_mut() {
        for v in p.iter_mut() {
            *v += r.random_range(-0.3..0.3);
        }
    }
    net
}

fn layer_error(specs: &[LayerSpec], input: &[usize], out: &[usize], seed: u64) -> f64 {
    let mut net = perturbed(specs, seed);
    let loss = projection_loss(uniform(out, seed ^ 2));
    let ctx = || Ctx::train(rng::stream(seed, "mask"));
    check(&mut net, &uniform(input, seed ^ 1), &loss, &ctx, GRAD_STEP)
        .unwrap()
        .max_rel_error
}

fn small_arch() -> ArchConfig {
    ArchConfig {
        input_channels: 4,
        input_len: 24,
        depthwise_width: 3,
        pointwise_channels: 3,
        blocks: vec![
            ConvBlock {
                channels: 4,
                width: 3,
                stride: 1,
            },
            ConvBlock {
                channels: 3,
                width: 3,
                stride: 1,
            },
        ],
        pool_width: 2,
        pool_stride: 2,
        bn_momentum: 0.9,
        input_scale: 1.0,
    }
}

fn gradient_cases(seed: u64) -> Vec<(&'static str, f64)> {
    let mut out = vec![
        (
            "depthwise",
            layer_error(
                &[LayerSpec::Depthwise {
                    channels: 3,
                    width: 5,
                    stride: 2,
                    pad: 2,
                }],
                &[2, 3, 9],
                &[2, 3, 5],
                seed,
            ),
        ),
        (
            "pointwise",
            layer_error(&[LayerSpec::pointwise(4, 3)], &[2, 4, 6], &[2, 3, 6], seed),
        ),
        (
            "conv",
            layer_error(
                &[LayerSpec::Conv {
                    in_channels: 3,
                    out_channels: 2,
                    width: 5,
                    stride: 2,
                    pad: 1,
                }],
                &[2, 3, 9],
                &[2, 2, 4],
                seed,
            ),
        ),
        (
            "conv_transpose",
            layer_error(
                &[LayerSpec::ConvTranspose {
                    in_channels: 2,
                    out_channels: 2,
                    width: 3,
                    stride: 2,
                    pad: 1,
                }],
                &[2, 2, 5],
                &[2, 2, 9],
                seed,
            ),
        ),
        (
            "batch_norm",
            layer_error(
                &[LayerSpec::BatchNorm {
                    channels: 3,
                    momentum: 0.9,
                }],
                &[3, 3, 5],
                &[3, 3, 5],
                seed,
            ),
        ),
        ("elu", layer_error(&[LayerSpec::Elu], &[2, 3, 7], &[2, 3, 7], seed)),
        (
            "max_pool",
            layer_error(
                &[LayerSpec::MaxPool { width: 3, stride: 2 }],
                &[2, 2, 9],
                &[2, 2, 4],
                seed,
            ),
        ),
        (
            "dropout",
            layer_error(&[LayerSpec::Dropout { p: 0.4 }], &[3, 10], &[3, 10], seed),
        ),
        (
            "dense",
            layer_error(
                &[LayerSpec::Flatten, LayerSpec::Dense { inputs: 6, outputs: 4 }],
                &[3, 2, 3],
                &[3, 4],
                seed,
            ),
        ),
        (
            "reshape",
            layer_error(
                &[LayerSpec::Reshape { channels: 2 }, LayerSpec::Elu],
                &[3, 6],
                &[3, 2, 3],
                seed,
            ),
        ),
    ];

    let mut net = Sequential::from_specs(&[LayerSpec::Unpool { width: 3, stride: 3 }], seed).unwrap();
    let mut r = rng::stream(seed, "idx");
    let positions = (0..12u32).map(|j| (j % 3) * 3 + r.random_range(0..3)).collect();
    let idx = PoolIndices {
        batch: 2,
        channels: 2,
        input_len: 10,
        output_len: 3,
        positions,
    };
    let ctx = || Ctx {
        rng: None,
        pools: vec![idx.clone()],
    };
    let loss = projection_loss(uniform(&[2, 2, 10], seed + 100));
    out.push((
        "unpool",
        check(&mut net, &uniform(&[2, 2, 3], seed), &loss, &ctx, GRAD_STEP)
            .unwrap()
            .max_rel_error,
    ));

    let arch = small_arch();
    let mut specs = arch.encoder_specs(Some(0.25));
    specs.extend(DenseHead::specs(arch.embedding_dim().unwrap(), 6, NUM_CLASSES, 0.25));
    let targets = [0usize, 3, 4];
    let ce = move |y: &Tensor| softmax_cross_entropy(y, &targets);
    let ctx = || Ctx::train(rng::stream(seed, "mask"));
    let mut net = Sequential::from_specs(&specs, seed).unwrap();
    out.push((
        "cnn model",
        check(&mut net, &uniform(&[3, 4, 24], seed), &ce, &ctx, GRAD_STEP)
            .unwrap()
            .max_rel_error,
    ));

    let mut specs = arch.encoder_specs(None);
    specs.extend(arch.decoder_specs());
    let target = uniform(&[2, 4, 24], seed + 7);
    let sq = move |y: &Tensor| mse(y, &target);
    let mut net = Sequential::from_specs(&specs, seed).unwrap();
    out.push((
        "autoencoder model",
        check(&mut net, &uniform(&[2, 4, 24], seed), &sq, &ctx, GRAD_STEP)
            .unwrap()
            .max_rel_error,
    ));
    out
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0, "", 0);
    let mut kinds = 0;
    for seed in 0..GRAD_SEEDS {
        let cases = gradient_cases(seed);
        kinds = cases.len();
        for (name, e) in cases {
            if e > worst.0 || worst.1.is_empty() {
                worst = (e, name, seed);
            }
        }
    }
    let took = start.elapsed();
    ensure(
        worst.0 < GRAD_REL_TOL && took < GRAD_TIME,
        format!(
            "{kinds} cases x {GRAD_SEEDS} seeds, worst rel error {:.2e} ({} seed {}), {:.1}s",
            worst.0,
            worst.1,
            worst.2,
            took.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- pipeline

fn recording(fs: f64, len: usize, value: impl Fn(usize, usize) -> f32) -> RawRecording {
    let chans = (0..ELECTRODES.len())
        .map(|c| (0..len).map(|t| value(c, t)).collect())
        .collect();
    RawRecording::new("P01", fs, chans).unwrap()
}

/// Amplitude of a tone by direct projection onto sine and cosine.
fn tone_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
    let (mut a, mut b) = (0.0, 0.0);
    for (t, v) in x.iter().enumerate() {
        let w = 2.0 * std::f64::consts::PI * freq * t as f64 / fs;
        a += v * w.cos();
        b += v * w.sin();
    }
    2.0 * (a * a + b * b).sqrt() / x.len() as f64
}

fn pipeline() -> Outcome {
    let mut checks = Vec::new();
    let mut note = |name: &str, ok: bool| checks.push((name.to_string(), ok));

    let zeros = compute_montages(&recording(64.0, 32, |_, _| 0.0)).unwrap();
    note(
        "zero montages",
        zeros.montages.len() == 16 && zeros.montages.iter().all(|m| m.iter().all(|v| *v == 0.0)),
    );

    let fp1 = ELECTRODES.iter().position(|e| *e == "Fp1").unwrap();
    let m = compute_montages(&recording(64.0, 8, |c, _| if c == fp1 { 1.0 } else { 0.0 })).unwrap();
    note(
        "Fp1 impulse",
        m.montages.iter().enumerate().all(|(i, ch)| {
            let want = if ["Fp1-F7", "Fp1-F3"].contains(&montage_name(i).as_str()) {
                1.0
            } else {
                0.0
            };
            ch.iter().all(|v| *v == want)
        }),
    );

    let cfg = PipelineConfig {
        cutoff_hz: 1.0,
        window_s: 16.0,
        context_s: 6.0,
        sample_rate_hz: None,
        ..PipelineConfig::default()
    };
    let mut r = rng::stream(11, "pipeline");
    let noise: Vec<f32> = (0..19 * 64).map(|_| r.random_range(-1.0..1.0)).collect();
    let rec64 = recording(4.0, 64 * 4, |c, t| noise[(c * 64 + t) % noise.len()]);
    let seqs = segment(&compute_montages(&rec64).unwrap(), &cfg).unwrap();
    note("64 s gives 4 windows", seqs.len() == 4);
    note(
        "left edge zero and flagged",
        !seqs[0].left_valid && seqs[0].left_context.iter().all(|v| *v == 0.0),
    );
    note(
        "right edge zero and flagged",
        !seqs[3].right_valid && seqs[3].right_context.iter().all(|v| *v == 0.0),
    );
    let rec30 = recording(4.0, 30 * 4, |_, t| t as f32);
    note(
        "30 s gives 1 window",
        segment(&compute_montages(&rec30).unwrap(), &cfg).unwrap().len() == 1,
    );

    note(
        "flip involution",
        seqs.iter().all(|q| flip_left_right(&flip_left_right(q)) == *q),
    );
    let mut block = seqs[1].clone();
    let w = block.window_samples;
    for (i, v) in block.core.iter_mut().enumerate() {
        *v = if i / w < 4 { 1.0 } else { 0.0 };
    }
    let flipped = flip_left_right(&block);
    note(
        "LL block lands in RL",
        flipped
            .core
            .iter()
            .enumerate()
            .all(|(i, v)| *v == if i / w >= 12 { 1.0 } else { 0.0 }),
    );

    let dc = lowpass_filter(&recording(200.0, 1600, |_, _| 37.5), &PipelineConfig::default()).unwrap();
    note(
        "DC passes",
        dc.channels()
            .iter()
            .all(|c| c.iter().all(|v| (*v as f64 - 37.5).abs() <= 1e-6 * 37.5)),
    );

    let sos = SosFilter::butterworth_lowpass(PipelineConfig::default().filter_order, 60.0, 200.0).unwrap();
    let tone = |f: f64| -> Vec<f64> {
        (0..1600)
            .map(|t| (2.0 * std::f64::consts::PI * f * t as f64 / 200.0).sin())
            .collect()
    };
    let gain = |f: f64| tone_amplitude(&sos.filtfilt(&tone(f)), f, 200.0) / tone_amplitude(&tone(f), f, 200.0);
    note("half-cutoff tone within 12%", (gain(30.0) - 1.0).abs() <= 0.12);
    note(
        "stopband at least 20 dB down",
        [75.0, 80.0, 90.0].iter().all(|f| 20.0 * gain(*f).log10() <= -20.0),
    );
    note(
        "passband ripple under 1 dB",
        [5.0, 20.0, 40.0, 48.0].iter().all(|f| 20.0 * gain(*f).log10() >= -1.0),
    );
    note(
        "60 Hz at 200 Hz accepted",
        PipelineConfig::default().validate_for(200.0).is_ok(),
    );

    let failed: Vec<_> = checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
    ensure(
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} oracles", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

// ---------------------------------------------------------------- memory

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

fn memory() -> Outcome {
    let dim = 12;
    let mut r = rng::stream(5, "pool");
    let mut embeddings = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for c in ClassLabel::ALL {
        for i in 0..60 {
            embeddings.push(
                (0..dim)
                    .map(|_| r.random_range(-1.0..1.0) + c.index() as f64 * 0.5)
                    .collect::<Vec<f64>>(),
            );
            labels.push(c);
            ids.push(format!("{c}-{i:02}"));
        }
    }
    let candidates: Vec<Candidate> = (0..ids.len())
        .map(|i| Candidate {
            embedding: &embeddings[i],
            label: labels[i],
            sequence_id: &ids[i],
            expert_id: "initial",
        })
        .collect();
    let mem = select_references(&candidates, 50, 9).unwrap();
    let balanced = mem.class_counts() == [10; NUM_CLASSES];
    let provenance = mem.entries.iter().all(|e| {
        ids.iter()
            .position(|id| *id == e.sequence_id)
            .is_some_and(|i| embeddings[i] == e.embedding && labels[i] == e.label)
    });

    let mut r = rng::stream(6, "queries");
    let mut scan_ok = 0;
    let mut scale_err: f64 = 0.0;
    for q in 0..LINEAR_SCAN_QUERIES {
        let e: Vec<f64> = (0..dim).map(|_| r.random_range(-2.0..2.0)).collect();
        let class = ClassLabel::ALL[q % NUM_CLASSES];
        let scores = similarity_scores(&e, &mem).unwrap();
        let hit = nearest_reference("q", &scores, &mem, class, 3).unwrap();
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in mem.entries.iter().enumerate() {
            let c = cosine(&e, &m.embedding);
            if m.label == class && best.is_none_or(|b| c > b.1) {
                best = Some((i, c));
            }
        }
        scan_ok += usize::from(hit.rstar.index == best.unwrap().0);
        let lambda = r.random_range(1e-3..1e3);
        let scaled: Vec<f64> = e.iter().map(|v| v * lambda).collect();
        for (a, b) in scores.iter().zip(similarity_scores(&scaled, &mem).unwrap()) {
            scale_err = scale_err.max((a - b).abs());
        }
    }
    ensure(
        balanced && provenance && scan_ok == LINEAR_SCAN_QUERIES && scale_err <= SCALE_TOL,
        format!(
            "counts {:?}, provenance {provenance}, linear scan {scan_ok}/{LINEAR_SCAN_QUERIES}, scale error {scale_err:.1e}",
            mem.class_counts()
        ),
    )
}

// ---------------------------------------------------------------- uncertainty

fn uncertainty() -> Outcome {
    let uniform = [0.2; NUM_CLASSES];
    let one_hot = [1.0, 0.0, 0.0, 0.0, 0.0];
    let expect = [
        (Strategy::Confidence, 0.2, 1.0),
        (Strategy::Margin, 0.0, 1.0),
        (Strategy::Entropy, 5f64.ln(), 0.0),
    ];
    let mut worst: f64 = 0.0;
    let mut ranked = true;
    for (st, u, o) in expect {
        worst = worst.max((uncertainty_score(&uniform, st).unwrap() - u).abs());
        worst = worst.max((uncertainty_score(&one_hot, st).unwrap() - o).abs());
        ranked &= certainty(&one_hot, st).unwrap() > certainty(&uniform, st).unwrap();
    }
    ensure(
        worst <= SCORE_TOL && ranked,
        format!("max deviation {worst:.1e}, one-hot ranked above uniform: {ranked}"),
    )
}

// ---------------------------------------------------------------- runs

struct Workspace {
    root: PathBuf,
    _tmp: Option<tempfile::TempDir>,
}

impl Workspace {
    fn new() -> Self {
        match std::env::var_os("HAMLET_ACCEPTANCE_DIR") {
            Some(d) => {
                let root = PathBuf::from(d);
                std::fs::create_dir_all(&root).unwrap();
                Workspace { root, _tmp: None }
            }
            None => {
                let tmp = tempfile::tempdir().unwrap();
                Workspace {
                    root: tmp.path().to_path_buf(),
                    _tmp: Some(tmp),
                }
            }
        }
    }

    /// A fresh path: leftovers from a kept directory are removed first.
    fn fresh(&self, name: &str) -> PathBuf {
        let p = self.root.join(name);
        if p.exists() {
            std::fs::remove_dir_all(&p).unwrap();
        }
        p
    }
}

fn benchmark_run(ws: &Workspace) -> PathBuf {
    let data = ws.fresh("benchmark-data");
    cli(&["cohort", "build", "--out", s(&data), "--rho", "0.2", "--seed", "42"]);
    let out = ws.fresh("benchmark");
    let mut args = vec!["colearn", "--data", s(&data), "--out", s(&out), "--model", "hamlet-cnn"];
    args.extend_from_slice(BENCH_MODEL);
    args.extend_from_slice(&[
        "--pretrain-epochs",
        "8",
        "--finetune-epochs",
        "3",
        "--alpha",
        "0.95",
        "--budget-fraction",
        "0.04",
        "--strategy",
        "high-confidence",
        "--rounds",
        "1",
        "--seed",
        "42",
    ]);
    cli(&args);
    out
}

fn colearning(run_dir: &Path, took: Duration) -> Outcome {
    let r: IterationReport = Run::open(run_dir).unwrap().report(1).unwrap();
    let after = r.after.as_ref().ok_or("round 1 has no after-relabel evaluation")?;
    let before_re = r.before.reeval_accuracy.ok_or("no re-evaluated test sequences")?;
    let after_re = after
        .reeval_accuracy
        .ok_or("no re-evaluated test sequences after relabeling")?;
    let gain = after_re - before_re;
    let drop = r.before.accuracy - after.accuracy;
    ensure(
        gain >= REEVAL_MIN_GAIN && drop <= FULL_MAX_DROP && took < COLEARN_TIME,
        format!(
            "re-eval {:.2}% -> {:.2}% on {} sequences, full {:.2}% -> {:.2}%, {:.0}s",
            100.0 * before_re,
            100.0 * after_re,
            after.reeval_count,
            100.0 * r.before.accuracy,
            100.0 * after.accuracy,
            took.as_secs_f64()
        ),
    )
}

fn strategies(run_dir: &Path) -> Outcome {
    let budget = STRATEGY_BUDGET.to_string();
    cli(&[
        "compare-strategies",
        "--run",
        s(run_dir),
        "--round",
        "1",
        "--budget",
        &budget,
        "--alpha",
        "1.0",
    ]);
    let rows: Vec<StrategyRow> = read_json(&run_dir.join(hamlet_cli::STRATEGIES_REPORT)).unwrap();
    let agreements: Vec<f64> = rows.iter().map(|r| r.agreement.unwrap_or(0.0)).collect();
    let lo = agreements.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = agreements.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let full = rows.iter().all(|r| r.suggestions == STRATEGY_BUDGET);
    let exact = rows
        .iter()
        .all(|r| matches!((r.agreement, r.precision), (Some(a), Some(p)) if (a - p).abs() < 1e-12));
    let table: Vec<String> = rows
        .iter()
        .zip(&agreements)
        .map(|(r, a)| format!("{} {:.2}%", r.strategy.title(), 100.0 * a))
        .collect();
    ensure(
        rows.len() == 3 && full && exact && lo >= STRATEGY_MIN_AGREEMENT && hi - lo <= STRATEGY_MAX_SPREAD,
        format!("{} (agreement equals precision: {exact})", table.join(", ")),
    )
}

fn known_vs_unseen(ws: &Workspace) -> Outcome {
    let data = ws.fresh("variation-data");
    cli(&[
        "cohort",
        "build",
        "--out",
        s(&data),
        "--rho",
        "0",
        "--variation",
        "2.0",
        "--seed",
        "42",
    ]);
    let mut acc = Vec::new();
    for mode in ["known", "unseen"] {
        let out = ws.fresh(&format!("patients-{mode}"));
        let mut args = vec![
            "colearn",
            "--data",
            s(&data),
            "--out",
            s(&out),
            "--model",
            "hamlet-cnn",
            "--patient-mode",
            mode,
        ];
        args.extend_from_slice(BENCH_MODEL);
        args.extend_from_slice(&["--pretrain-epochs", "12", "--rounds", "0", "--seed", "42"]);
        cli(&args);
        acc.push(Run::open(&out).unwrap().report(1).unwrap().before.accuracy);
    }
    ensure(
        acc[0] - acc[1] >= KNOWN_MIN_GAP,
        format!("known {:.2}%, unseen {:.2}%", 100.0 * acc[0], 100.0 * acc[1]),
    )
}

/// Head reading only the score inputs, with class `c` routed from references chosen by `routes`.
fn constructed_head(mem: &ReferenceMemory, routes: impl Fn(usize, usize) -> bool) -> DenseHead {
    let n = mem.len();
    let input = mem.dim + n;
    let mut head = DenseHead::new(input, n, 0.0, 1).unwrap();
    let (w1, b1, w2, b2) = head.weights_mut();
    w1.fill(0.0);
    b1.fill(0.0);
    b2.fill(0.0);
    for h in 0..n {
        w1[h * input + mem.dim + h] = 1.0;
        for c in 0..NUM_CLASSES {
            w2[c * n + h] = if routes(c, h) { 1.0 } else { 0.0 };
        }
    }
    head
}

fn interpretability(run_dir: &Path) -> Outcome {
    let mut r = rng::stream(13, "constructed");
    let entries = ClassLabel::ALL
        .iter()
        .flat_map(|&c| (0..16).map(move |i| (c, i)))
        .map(|(c, i)| MemoryEntry {
            embedding: (0..4).map(|_| r.random_range(-1.0..1.0)).collect(),
            label: c,
            sequence_id: format!("{c}-{i}"),
            expert_id: "initial".into(),
        })
        .collect();
    let mem = ReferenceMemory::new(4, entries).unwrap();
    let label = |h: usize| mem.entries[h].label.index();
    let pure = interpretability_scores(&constructed_head(&mem, |c, h| label(h) == c), &mem, 16).unwrap();
    let split = interpretability_scores(
        &constructed_head(&mem, |c, h| {
            h % 16 < 8 && (label(h) == c || label(h) == (c + 1) % NUM_CLASSES)
        }),
        &mem,
        16,
    )
    .unwrap();

    let run = Run::open(run_dir).unwrap();
    let trained = run
        .report(1)
        .unwrap()
        .interpretability
        .ok_or("run has no interpretability scores")?;
    let mean = trained.iter().sum::<f64>() / NUM_CLASSES as f64;
    let model = run.load_model(1).unwrap();
    let memory = model.memory.as_ref().ok_or("round 1 model has no memory")?;
    let magnitude =
        interpretability_scores_with(&model.head, memory, INTERPRETABILITY_TOP_K, Influence::Magnitude).unwrap();
    ensure(
        pure == [1.0; NUM_CLASSES] && split == [0.5; NUM_CLASSES] && mean > INTERPRETABILITY_CHANCE,
        format!(
            "constructed {:.0}%/{:.0}%, trained mean {:.2}% ({}); by magnitude {:.2}%",
            100.0 * pure[0],
            100.0 * split[0],
            100.0 * mean,
            format_percentages(&trained),
            100.0 * magnitude.iter().sum::<f64>() / NUM_CLASSES as f64
        ),
    )
}

fn determinism(ws: &Workspace) -> Outcome {
    let data = ws.fresh("replay-data");
    cli(&[
        "cohort",
        "build",
        "--out",
        s(&data),
        "--patients",
        "10",
        "--per-class",
        "60",
        "--window-s",
        "8",
        "--seed",
        "42",
    ]);
    let runs: Vec<PathBuf> = ["replay-a", "replay-b"]
        .iter()
        .map(|name| {
            let out = ws.fresh(name);
            cli(&[
                "colearn",
                "--data",
                s(&data),
                "--out",
                s(&out),
                "--arch",
                "compact",
                "--head-hidden",
                "64",
                "--pretrain-epochs",
                "3",
                "--finetune-epochs",
                "1",
                "--head-epochs",
                "8",
                "--memory-size",
                "60",
                "--alpha",
                "0.95",
                "--rounds",
                "2",
                "--seed",
                "42",
            ]);
            out
        })
        .collect();
    let mut files = vec!["summary.json".to_string(), "labels.json".to_string()];
    for t in 1..=3 {
        files.push(format!("round-{t:03}/report.json"));
        files.push(format!("round-{t:03}/model/params.f32"));
    }
    for t in 1..=2 {
        files.push(format!("round-{t:03}/suggestions.jsonl"));
        files.push(format!("round-{t:03}/decisions.jsonl"));
    }
    let differing: Vec<&String> = files
        .iter()
        .filter(|f| {
            std::fs::read(runs[0].join(f)).ok() != std::fs::read(runs[1].join(f)).ok() || !runs[0].join(f).exists()
        })
        .collect();
    ensure(
        differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", files.len()),
    )
}

// ---------------------------------------------------------------- driver

fn gate(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => {
            println!("PASS  {name:<26} {d}  [{secs:.1}s]");
            true
        }
        Err(d) => {
            println!("FAIL  {name:<26} {d}  [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    // libtest flags such as --list or --nocapture are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let ws = Workspace::new();
    let mut passed = vec![
        gate("gradient correctness", gradients),
        gate("pipeline oracles", pipeline),
        gate("memory invariants", memory),
        gate("uncertainty scores", uncertainty),
    ];

    let start = Instant::now();
    let bench = catch_unwind(AssertUnwindSafe(|| benchmark_run(&ws)));
    let took = start.elapsed();
    match &bench {
        Ok(dir) => {
            passed.push(gate("co-learning effect", || colearning(dir, took)));
            passed.push(gate("strategy comparison", || strategies(dir)));
        }
        Err(_) => {
            passed.push(gate("co-learning effect", || Err("benchmark run failed".into())));
            passed.push(gate("strategy comparison", || Err("benchmark run failed".into())));
        }
    }
    passed.push(gate("known vs unseen patients", || known_vs_unseen(&ws)));
    passed.push(gate("interpretability", || match &bench {
        Ok(dir) => interpretability(dir),
        Err(_) => Err("benchmark run failed".into()),
    }));
    passed.push(gate("determinism", || determinism(&ws)));

    let ok = passed.iter().filter(|p| **p).count();
    println!("acceptance: {ok}/{} criteria passed", passed.len());
    if ok != passed.len() {
        std::process::exit(1);
    }
}
