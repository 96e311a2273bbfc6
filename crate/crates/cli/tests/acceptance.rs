//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bi_ice::data::{generate_synthetic, save_annotations, save_dataset, Dataset, SynthConfig, SynthOutput};
use bi_ice::eval::{convergence_metrics, planted_recovery, CurveMode, MaskingContext};
use bi_ice::model::{
    compute_logits, decomposed_logits, forward, split_composition, BiIceConfig, BiIceParams, Sample,
};
use bi_ice::numerics::{glorot_init, Mat, RngState};
use bi_ice::objectives::{explanation_loss, sparsity_entropy, Annotation, LossWeights};
use bi_ice::training::{accuracy, fit, gradient_check, holdout_split, FitOutput, TrainConfig};
use rand::Rng;
use serde_json::json;

const GRAD_TOL: f64 = 1e-4;
const GRAD_EPS: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(10);
const DECOMPOSITION_TOL: f64 = 1e-10;
const DECOMPOSITION_BUDGET: Duration = Duration::from_secs(1);
const SIMPLEX_TOL: f64 = 1e-7;
const RANDOM_INSTANCES: usize = 100;
const MIN_TRAIN_ACCURACY: f64 = 0.90;
const MIN_PURITY: f64 = 0.8;
const RUN_BUDGET: Duration = Duration::from_secs(60);
const CURVE_MARGIN: f64 = 0.05;
const RANDOM_ORDERS: usize = 10;
const EXPLANATION_RATIO: f64 = 0.5;
const SEEDS: [u64; 3] = [0, 1, 2];
/// Rate for the regularizer comparisons, which leave it unspecified. At the
/// benchmark rate of 1e-4 the composition scores barely leave uniform in
/// 400 steps and neither regularizer has a measurable effect.
const REGULARIZER_LR: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_config(rng: &mut RngState) -> BiIceConfig {
    let k = rng.gen_range(1..=6);
    BiIceConfig::new(k, rng.gen_range(1..=8), rng.gen_range(1..=9), rng.gen_range(1..=5))
        .with_split(rng.gen_range(0..=k))
        .with_inner_steps(rng.gen_range(1..=3))
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_tensor = "";
    for t in [1, 2] {
        let cfg = BiIceConfig::new(4, 8, 6, 3).with_split(1).with_inner_steps(t);
        let mut rng = RngState::new(100 + t as u64);
        let params: BiIceParams = BiIceParams::init(&cfg, &mut rng).unwrap();
        let zs: Vec<Mat> = (0..3).map(|_| glorot_init(6, 8, &mut rng)).collect();
        let anns: Vec<Annotation<f64>> = (0..3)
            .map(|_| {
                let g = [rng.gen_range(0..=1u8)];
                let s: Vec<u8> = (0..18).map(|_| rng.gen_range(0..=1u8)).collect();
                Annotation::from_bytes(&g, &s, 6, 3).unwrap()
            })
            .collect();
        let batch: Vec<Sample> = zs
            .iter()
            .zip(&anns)
            .enumerate()
            .map(|(i, (z, a))| Sample { z, label: i % 3, annotation: Some(a) })
            .collect();
        let w = LossWeights { lambda_expl: 1.0, lambda_sparse: 0.5 };
        let report = gradient_check(&params, &cfg, &batch, &w, GRAD_EPS).unwrap();
        for (name, e) in report.per_tensor {
            if e >= worst {
                worst = e;
                worst_tensor = name;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < GRAD_TOL && elapsed < GRAD_BUDGET,
        format!(
            "gradient suite T_inner 1,2: max rel error {worst:.2e} ({worst_tensor}) < {GRAD_TOL:e}, {:.2}s < {}s",
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs()
        ),
    )
}

fn criterion_decomposition() -> Outcome {
    let start = Instant::now();
    let mut rng = RngState::new(200);
    let mut worst = 0.0f64;
    for _ in 0..RANDOM_INSTANCES {
        let cfg = random_config(&mut rng);
        let params: BiIceParams = BiIceParams::init(&cfg, &mut rng).unwrap();
        let z: Mat = glorot_init(cfg.patches, cfg.dim, &mut rng).scale(3.0);
        let trace = forward(&z, &params, &cfg).unwrap();
        let direct = compute_logits(&trace.z_bar, &params.head).unwrap();
        let split = decomposed_logits(&trace.phi, &trace.zeta_refined, &params.v_omega, &params.head).unwrap();
        for (a, b) in direct.iter().zip(&split) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < DECOMPOSITION_TOL && elapsed < DECOMPOSITION_BUDGET,
        format!(
            "decomposition identity, {RANDOM_INSTANCES} instances: max |difference| {worst:.2e} < {DECOMPOSITION_TOL:e}, {:.3}s < {}s",
            elapsed.as_secs_f64(),
            DECOMPOSITION_BUDGET.as_secs()
        ),
    )
}

fn criterion_simplex() -> Outcome {
    let mut rng = RngState::new(300);
    let mut worst = 0.0f64;
    for _ in 0..RANDOM_INSTANCES {
        let cfg = random_config(&mut rng);
        let params: BiIceParams = BiIceParams::init(&cfg, &mut rng).unwrap();
        let z: Mat = glorot_init(cfg.patches, cfg.dim, &mut rng).scale(3.0);
        let trace = forward(&z, &params, &cfg).unwrap();
        let sums = trace.phi.row_sums().into_iter().chain(trace.competition.col_sums());
        for s in sums {
            worst = worst.max((s - 1.0).abs());
        }
    }
    outcome(
        worst < SIMPLEX_TOL,
        format!("composition rows and binding columns, {RANDOM_INSTANCES} instances: max |sum - 1| {worst:.2e} < {SIMPLEX_TOL:e}"),
    )
}

fn benchmark_data(seed: u64) -> (SynthOutput, Dataset) {
    let sc = SynthConfig {
        classes: 4,
        concepts: 8,
        dim: 16,
        patches: 9,
        samples: 512,
        noise: 0.1,
        concepts_per_class: 2,
        k_global: 0,
        seed,
    };
    let out = generate_synthetic(&sc).unwrap();
    let ds = Dataset::from_files(&out.data, Some(&out.annotations)).unwrap();
    (out, ds)
}

fn benchmark_model() -> BiIceConfig {
    BiIceConfig::new(8, 16, 9, 4)
}

fn benchmark_train(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        epochs: 50,
        base_lr: 1e-4,
        lambda_expl: 0.0,
        lambda_sparse: 0.5,
        seed,
        ..TrainConfig::default()
    }
}

struct BenchmarkRun {
    seed: u64,
    data: Dataset,
    planted: Mat,
    fitted: FitOutput<f64>,
    elapsed: Duration,
}

fn benchmark_runs() -> Vec<BenchmarkRun> {
    SEEDS
        .iter()
        .map(|&seed| {
            let (out, data) = benchmark_data(seed);
            let start = Instant::now();
            let fitted = fit(&benchmark_model(), &data, None, &benchmark_train(seed), |_| {}).unwrap();
            BenchmarkRun {
                seed,
                data,
                planted: out.planted,
                fitted,
                elapsed: start.elapsed(),
            }
        })
        .collect()
}

fn criterion_benchmark(runs: &[BenchmarkRun]) -> Outcome {
    let model = benchmark_model();
    let mut accs = Vec::new();
    let mut purities = Vec::new();
    for r in runs {
        let (train, _) = holdout_split(&r.data, r.seed);
        accs.push(accuracy(&r.fitted.params, &model, &train).unwrap());
        purities.push(planted_recovery(&r.fitted.params.bank.zeta, &r.planted).unwrap());
    }
    let acc = mean(&accs);
    let purity = mean(&purities);
    let slowest = runs.iter().map(|r| r.elapsed).max().unwrap();
    outcome(
        acc >= MIN_TRAIN_ACCURACY && purity >= MIN_PURITY && slowest < RUN_BUDGET,
        format!(
            "synthetic benchmark lr 1e-4: train accuracy {acc:.3} {:?} >= {MIN_TRAIN_ACCURACY}, purity {purity:.3} {:?} >= {MIN_PURITY}, slowest run {:.1}s < {}s",
            rounded(&accs),
            rounded(&purities),
            slowest.as_secs_f64(),
            RUN_BUDGET.as_secs()
        ),
    )
}

fn criterion_faithfulness(runs: &[BenchmarkRun]) -> Outcome {
    let model = benchmark_model();
    let mut ins_gap = Vec::new();
    let mut del_gap = Vec::new();
    for r in runs {
        let ctx = MaskingContext::new(&r.fitted.params, &model, &r.data).unwrap();
        let order = ctx.importance_order();
        let ins = ctx.curve(CurveMode::Insertion, &order).unwrap().auc;
        let del = ctx.curve(CurveMode::Deletion, &order).unwrap().auc;
        let rins = ctx.random_baseline(CurveMode::Insertion, RANDOM_ORDERS, r.seed).unwrap().mean.auc;
        let rdel = ctx.random_baseline(CurveMode::Deletion, RANDOM_ORDERS, r.seed).unwrap().mean.auc;
        ins_gap.push(ins - rins);
        del_gap.push(rdel - del);
    }
    let (ins, del) = (mean(&ins_gap), mean(&del_gap));
    outcome(
        ins >= CURVE_MARGIN && del >= CURVE_MARGIN,
        format!(
            "faithfulness ordering, {RANDOM_ORDERS} random orders: insertion AUC - random {ins:+.3} {:?} >= {CURVE_MARGIN}, random - deletion AUC {del:+.3} {:?} >= {CURVE_MARGIN}",
            rounded(&ins_gap),
            rounded(&del_gap)
        ),
    )
}

fn regularized_run(lambda_expl: f64, lambda_sparse: f64) -> (Dataset, BiIceParams) {
    let seed = SEEDS[0];
    let (_, data) = benchmark_data(seed);
    let cfg = TrainConfig {
        base_lr: REGULARIZER_LR,
        lambda_expl,
        lambda_sparse,
        ..benchmark_train(seed)
    };
    let fitted = fit(&benchmark_model(), &data, None, &cfg, |_| {}).unwrap();
    (data, fitted.params)
}

fn criterion_sparsity() -> Outcome {
    let model = benchmark_model();
    let entropy = |ls: f64| {
        let (data, params) = regularized_run(0.0, ls);
        let total: f64 = data
            .samples
            .iter()
            .map(|z| sparsity_entropy(&forward(z, &params, &model).unwrap().phi).unwrap())
            .sum();
        total / data.len() as f64
    };
    let (dense, sparse) = (entropy(0.0), entropy(1.0));
    outcome(
        sparse < dense,
        format!("sparsity effect lr {REGULARIZER_LR:e}: entropy {sparse:.4} at lambda_sparse 1 < {dense:.4} at 0"),
    )
}

fn criterion_explanation() -> Outcome {
    let model = benchmark_model();
    let discrepancy = |le: f64| {
        let (data, params) = regularized_run(le, benchmark_train(0).lambda_sparse);
        let anns = data.annotations.as_ref().unwrap();
        let total: f64 = data
            .samples
            .iter()
            .zip(anns)
            .map(|(z, a)| {
                let phi = forward(z, &params, &model).unwrap().phi;
                let (g, s) = split_composition(&phi, model.global_concepts).unwrap();
                explanation_loss(&g, &s, Some(a)).unwrap()
            })
            .sum();
        total / data.len() as f64
    };
    let (without, with) = (discrepancy(0.0), discrepancy(1.0));
    outcome(
        with < EXPLANATION_RATIO * without,
        format!(
            "explanation-loss effect lr {REGULARIZER_LR:e}: |Phi - Q|^2 {with:.3} at lambda_expl 1 < {EXPLANATION_RATIO} x {without:.3} at 0 (ratio {:.3})",
            with / without
        ),
    )
}

fn criterion_convergence(runs: &[BenchmarkRun]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let zetas: Vec<Mat> = r.fitted.snapshots.iter().map(|s| s.zeta.clone()).collect();
        let series = convergence_metrics(&zetas).unwrap();
        let n = series.drift.len();
        let first = mean(&series.drift[..5]);
        let last = mean(&series.drift[n - 5..]);
        let (sep0, sep1) = (series.separation[0], *series.separation.last().unwrap());
        pass &= last < first && sep1 > sep0;
        parts.push(format!(
            "seed {}: drift {last:.2e} < {first:.2e}, separation {sep1:.3} > {sep0:.3}",
            r.seed
        ));
    }
    outcome(pass, format!("convergence on the benchmark runs: {}", parts.join("; ")))
}

fn bi_ice(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bi-ice")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let doc = json!({
        "model": {"k": 8, "k_spatial": 8, "d": 16, "l": 9, "n": 4},
        "train": {"epochs": 5, "batch_size": 32, "warmup_iters": 5, "base_lr": 1e-3,
                  "lambda_expl": 1.0, "lambda_sparse": 0.5, "seed": 7},
        "synth": {"classes": 4, "concepts": 8, "dim": 16, "patches": 9, "samples": 128, "seed": 7}
    });
    fs::write(&config, doc.to_string()).unwrap();
    let data = dir.path().join("data");
    assert!(bi_ice(&["synth", "--config", p(&config), "--out", p(&data)]).status.success());
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = bi_ice(&[
            "train",
            "--config",
            p(&config),
            "--data",
            p(&data.join("data.biem")),
            "--ann",
            p(&data.join("annotations.bian")),
            "--out",
            p(&out),
        ])
        .status;
        assert!(status.success());
        files.push(fs::read(out.join("params.json")).unwrap());
    }
    outcome(
        files[0] == files[1],
        format!("determinism: two train invocations give byte-identical params ({} bytes)", files[0].len()),
    )
}

fn criterion_format() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let sc = SynthConfig {
        classes: 2,
        concepts: 4,
        dim: 2,
        patches: 4,
        samples: 2,
        noise: 0.1,
        concepts_per_class: 2,
        k_global: 0,
        seed: 5,
    };
    let gen = generate_synthetic(&sc).unwrap();
    let data_path = dir.path().join("data.biem");
    let ann_path = dir.path().join("annotations.bian");
    save_dataset(&data_path, &gen.data).unwrap();
    save_annotations(&ann_path, &gen.annotations).unwrap();
    let config = dir.path().join("run.json");
    let doc = json!({
        "model": {"k": 4, "k_spatial": 4, "d": 2, "l": 4, "n": 2},
        "train": {"epochs": 2, "batch_size": 2, "warmup_iters": 0, "lambda_expl": 1.0}
    });
    fs::write(&config, doc.to_string()).unwrap();
    let bad = dir.path().join("bad");

    let mut cases = 0;
    let mut wrong = Vec::new();
    let mut check = |bytes: &[u8], target_is_data: bool, label: String| {
        fs::write(&bad, bytes).unwrap();
        let (d, a) = if target_is_data { (&bad, &ann_path) } else { (&data_path, &bad) };
        let out = bi_ice(&["train", "--config", p(&config), "--data", p(d), "--ann", p(a), "--out", p(&dir.path().join("o"))]);
        cases += 1;
        if out.status.code() != Some(2) {
            wrong.push(label);
        }
    };
    for (file, is_data, magic) in [(&data_path, true, "BIEM1"), (&ann_path, false, "BIAN1")] {
        let original = fs::read(file).unwrap();
        let at = original.windows(magic.len()).position(|w| w == magic.as_bytes()).unwrap();
        for i in at..at + magic.len() {
            for v in 0..=255u8 {
                if v == original[i] {
                    continue;
                }
                let mut bytes = original.clone();
                bytes[i] = v;
                check(&bytes, is_data, format!("{magic} byte {i} = {v}"));
            }
        }
        for len in 0..original.len() {
            check(&original[..len], is_data, format!("{magic} truncated to {len}"));
        }
    }
    outcome(
        wrong.is_empty(),
        format!(
            "format robustness: {} of {cases} magic corruptions and truncations exit 2{}",
            cases - wrong.len(),
            wrong.first().map(|w| format!(" (first miss: {w})")).unwrap_or_default()
        ),
    )
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn rounded(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}

fn main() -> ExitCode {
    let runs = benchmark_runs();
    let criteria: Vec<(usize, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion_gradients)),
        (2, Box::new(criterion_decomposition)),
        (3, Box::new(criterion_simplex)),
        (4, Box::new(|| criterion_benchmark(&runs))),
        (5, Box::new(|| criterion_faithfulness(&runs))),
        (6, Box::new(criterion_sparsity)),
        (7, Box::new(criterion_explanation)),
        (8, Box::new(|| criterion_convergence(&runs))),
        (9, Box::new(criterion_determinism)),
        (10, Box::new(criterion_format)),
    ];
    let mut failed = 0;
    for (id, run) in &criteria {
        let o = run();
        failed += usize::from(!o.pass);
        println!("criterion {id:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
