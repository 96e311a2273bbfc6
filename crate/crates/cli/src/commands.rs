use std::fs;
use std::path::{Path, PathBuf};

use bi_ice::data::{
    generate_synthetic, load_annotations, load_dataset, planted_as_dataset, save_annotations, save_dataset, Dataset,
};
use bi_ice::eval::{
    activated_patches, baseline_csv, concept_importance, concept_snapshots_dataset, convergence_csv,
    convergence_metrics, curve_csv, localization_grid, planted_recovery, write_json, write_text, ActivatedPatch,
    CurveMode, MaskingContext,
};
use bi_ice::model::{forward, split_composition, BiIceConfig, BiIceParams, Sample};
use bi_ice::numerics::{glorot_init, Mat, Real, RngState};
use bi_ice::objectives::Annotation;
use bi_ice::training::{fit, gradient_check, EpochSnapshot, Precision};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfigFile;
use crate::failure::Failure;

const GRADCHECK_TOLERANCE: f64 = 1e-4;
const GRADCHECK_SAMPLES: usize = 4;

pub struct EvalInputs {
    pub params: PathBuf,
    pub data: PathBuf,
    pub ann: Option<PathBuf>,
    pub out: PathBuf,
}

/// Trained parameters with the configuration they belong to.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
struct ParamsFile<T> {
    dtype: String,
    model: BiIceConfig,
    params: BiIceParams<T>,
}

enum AnyParams {
    F32(ParamsFile<f32>),
    F64(ParamsFile<f64>),
}

fn emit(value: &impl Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn event(name: &str, body: &impl Serialize) -> Value {
    let mut v = serde_json::to_value(body).expect("serializable");
    if let Value::Object(map) = &mut v {
        map.insert("event".into(), Value::from(name));
    }
    v
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Failure::usage("usage", format!("--{name} not given and `paths.{name}` not set")))
}

fn load_params(path: &Path) -> Result<AnyParams, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage("io", format!("params file {}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| Failure::usage("params", format!("{}: {e}", path.display()));
    let value: Value = serde_json::from_str(&text).map_err(bad)?;
    let params = match value.get("dtype").and_then(Value::as_str) {
        Some("f32") => AnyParams::F32(serde_json::from_value(value).map_err(bad)?),
        Some("f64") => AnyParams::F64(serde_json::from_value(value).map_err(bad)?),
        other => return Err(Failure::usage("params", format!("{}: unknown dtype {other:?}", path.display()))),
    };
    let check = |m: &BiIceConfig, ok: bool| {
        m.validate().map_err(Failure::input)?;
        if ok {
            Ok(())
        } else {
            Err(Failure::usage("params", format!("{}: tensors do not match the stored model", path.display())))
        }
    };
    match &params {
        AnyParams::F32(p) => check(&p.model, p.params.check(&p.model).is_ok())?,
        AnyParams::F64(p) => check(&p.model, p.params.check(&p.model).is_ok())?,
    }
    Ok(params)
}

fn load_data<T: Real>(data: &Path, ann: Option<&Path>, model: &BiIceConfig) -> Result<Dataset<T>, Failure> {
    let emb = load_dataset(data).map_err(Failure::input)?;
    if emb.patches != model.patches || emb.dim != model.dim || emb.classes > model.classes {
        return Err(Failure::usage(
            "shape",
            format!(
                "{}: L={} D={} N={} does not fit model L={} D={} N={}",
                data.display(),
                emb.patches,
                emb.dim,
                emb.classes,
                model.patches,
                model.dim,
                model.classes
            ),
        ));
    }
    let ann = ann.map(load_annotations).transpose().map_err(Failure::input)?;
    if let Some(a) = &ann {
        if a.k_global != model.global_concepts || a.k_spatial != model.spatial_concepts {
            return Err(Failure::usage(
                "shape",
                format!(
                    "annotations have K_global={} K_spatial={}, model has {} and {}",
                    a.k_global, a.k_spatial, model.global_concepts, model.spatial_concepts
                ),
            ));
        }
    }
    Dataset::from_files(&emb, ann.as_ref()).map_err(Failure::input)
}

pub fn synth(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = RunConfigFile::load(config)?;
    let out = required(out, &cfg.paths.out, "out")?;
    let sc = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Failure::usage("config", "missing `synth` section"))?;
    let gen = generate_synthetic(sc)?;
    save_dataset(out.join("data.biem"), &gen.data)?;
    save_annotations(out.join("annotations.bian"), &gen.annotations)?;
    save_dataset(out.join("planted.biem"), &planted_as_dataset(&gen.planted))?;
    emit(&json!({
        "event": "synth",
        "samples": gen.data.samples,
        "patches": gen.data.patches,
        "dim": gen.data.dim,
        "classes": gen.data.classes,
        "k_global": gen.annotations.k_global,
        "k_spatial": gen.annotations.k_spatial,
        "class_concepts": gen.subsets,
    }));
    Ok(())
}

pub fn train(config: &Path, data: Option<PathBuf>, ann: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = RunConfigFile::load(config)?;
    let model = cfg.model()?;
    let data = required(data, &cfg.paths.data, "data")?;
    let out = required(out, &cfg.paths.out, "out")?;
    let ann = ann.or_else(|| cfg.paths.annotations.clone());
    if cfg.train.lambda_expl > 0.0 && ann.is_none() {
        return Err(Failure::usage(
            "config",
            "lambda_expl > 0 requires annotations (--ann or paths.annotations)",
        ));
    }
    match cfg.train.precision {
        Precision::F32 => train_as::<f32>(&cfg, model, &data, ann.as_deref(), &out),
        Precision::F64 => train_as::<f64>(&cfg, model, &data, ann.as_deref(), &out),
    }
}

fn train_as<T: Real>(
    cfg: &RunConfigFile,
    model: &BiIceConfig,
    data: &Path,
    ann: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let train: Dataset<T> = load_data(data, ann, model)?;
    let val: Option<Dataset<T>> = match &cfg.paths.val_data {
        Some(v) => Some(load_data(v, cfg.paths.val_annotations.as_deref(), model)?),
        None => None,
    };
    let fitted = fit(model, &train, val.as_ref(), &cfg.train, |m| emit(&event("epoch", m)))?;

    let mut metrics = String::new();
    for m in &fitted.history {
        metrics.push_str(&serde_json::to_string(m).expect("serializable"));
        metrics.push('\n');
    }
    write_text(out.join("metrics.jsonl"), &metrics)?;
    let snapshots: Vec<EpochSnapshot<f64>> = fitted
        .snapshots
        .iter()
        .map(|s| EpochSnapshot {
            epoch: s.epoch,
            zeta: s.zeta.cast(),
            metrics: s.metrics.clone(),
        })
        .collect();
    write_json(out.join("snapshots.json"), &snapshots)?;
    let params_path = out.join("params.json");
    write_json(
        &params_path,
        &ParamsFile {
            dtype: T::DTYPE.to_string(),
            model: model.clone(),
            params: fitted.params,
        },
    )?;
    emit(&json!({ "event": "done", "epochs": fitted.history.len(), "params": params_path }));
    Ok(())
}

macro_rules! with_params {
    ($path:expr, |$pf:ident| $body:expr) => {
        match load_params($path)? {
            AnyParams::F32($pf) => $body,
            AnyParams::F64($pf) => $body,
        }
    };
}

pub fn importance(inputs: &EvalInputs, class: Option<usize>, threshold: f64) -> Result<(), Failure> {
    with_params!(&inputs.params, |pf| importance_as(&pf, inputs, class, threshold))
}

fn importance_as<T: Real>(
    pf: &ParamsFile<T>,
    inputs: &EvalInputs,
    class: Option<usize>,
    threshold: f64,
) -> Result<(), Failure> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Failure::usage("usage", format!("--threshold {threshold} outside (0, 1]")));
    }
    let data: Dataset<T> = load_data(&inputs.data, inputs.ann.as_deref(), &pf.model)?;
    let classes: Vec<usize> = match class {
        Some(c) if data.class_indices(c).is_empty() => {
            return Err(Failure::usage("usage", format!("class {c} has no samples")))
        }
        Some(c) => vec![c],
        None => (0..data.classes).filter(|&c| !data.class_indices(c).is_empty()).collect(),
    };
    let reports = classes
        .iter()
        .map(|&c| concept_importance(&pf.params, &pf.model, &data, c, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    write_json(inputs.out.join("importance.json"), &reports)?;
    emit(&json!({ "event": "importance", "classes": classes }));
    Ok(())
}

pub fn curves(inputs: &EvalInputs, modes: &[CurveMode], repeats: usize, seed: u64) -> Result<(), Failure> {
    if repeats == 0 {
        return Err(Failure::usage("usage", "--random-seeds must be at least 1"));
    }
    with_params!(&inputs.params, |pf| curves_as(&pf, inputs, modes, repeats, seed))
}

fn curves_as<T: Real>(
    pf: &ParamsFile<T>,
    inputs: &EvalInputs,
    modes: &[CurveMode],
    repeats: usize,
    seed: u64,
) -> Result<(), Failure> {
    let data: Dataset<T> = load_data(&inputs.data, inputs.ann.as_deref(), &pf.model)?;
    let ctx = MaskingContext::new(&pf.params, &pf.model, &data)?;
    let order = ctx.importance_order();
    let mut summary = serde_json::Map::new();
    summary.insert("order".into(), json!(order));
    summary.insert("full_accuracy".into(), json!(ctx.full_accuracy()));
    for &mode in modes {
        let name = match mode {
            CurveMode::Insertion => "insertion",
            CurveMode::Deletion => "deletion",
        };
        let curve = ctx.curve(mode, &order)?;
        let base = ctx.random_baseline(mode, repeats, seed)?;
        write_text(inputs.out.join(format!("{name}.csv")), &curve_csv(&curve))?;
        write_text(inputs.out.join(format!("{name}_random.csv")), &baseline_csv(&base))?;
        summary.insert(
            name.into(),
            json!({ "auc": curve.auc, "random_auc": base.mean.auc, "random_orders": repeats }),
        );
    }
    let summary = Value::Object(summary);
    write_json(inputs.out.join("curves.json"), &summary)?;
    emit(&event("curves", &summary));
    Ok(())
}

#[derive(Serialize)]
struct Localization {
    sample: usize,
    label: usize,
    predicted: usize,
    threshold: f64,
    grid: bi_ice::eval::LocalizationGrid,
    /// Patches above the threshold, with model-wide concept ids.
    activated: Vec<ActivatedPatch>,
}

pub fn localize(inputs: &EvalInputs, sample: usize, threshold: f64) -> Result<(), Failure> {
    with_params!(&inputs.params, |pf| localize_as(&pf, inputs, sample, threshold))
}

fn localize_as<T: Real>(pf: &ParamsFile<T>, inputs: &EvalInputs, sample: usize, threshold: f64) -> Result<(), Failure> {
    let data: Dataset<T> = load_data(&inputs.data, inputs.ann.as_deref(), &pf.model)?;
    if sample >= data.len() {
        return Err(Failure::usage(
            "usage",
            format!("--sample {sample} out of range for {} samples", data.len()),
        ));
    }
    let k_global = pf.model.global_concepts;
    let trace = forward(&data.samples[sample], &pf.params, &pf.model)?;
    let (_, spatial) = split_composition(&trace.phi, k_global)?;
    let activated = activated_patches(&spatial, threshold)
        .map_err(Failure::input)?
        .into_iter()
        .map(|a| ActivatedPatch {
            concept: a.concept + k_global,
            ..a
        })
        .collect();
    let report = Localization {
        sample,
        label: data.labels[sample],
        predicted: trace.predicted_class(),
        threshold,
        grid: localization_grid(&spatial, k_global)?,
        activated,
    };
    write_json(inputs.out.join("localize.json"), &report)?;
    emit(&json!({ "event": "localize", "sample": sample }));
    Ok(())
}

pub fn gradcheck(config: &Path, params: Option<&Path>, eps: f64) -> Result<(), Failure> {
    let cfg = RunConfigFile::load(config)?;
    let model = cfg.model()?.clone();
    let rng = RngState::new(cfg.train.seed);
    let params: BiIceParams<f64> = match params {
        None => BiIceParams::init(&model, &mut rng.split(1))?,
        Some(p) => {
            let (stored, params) = match load_params(p)? {
                AnyParams::F32(pf) => (pf.model, pf.params.cast()),
                AnyParams::F64(pf) => (pf.model, pf.params),
            };
            if stored != model {
                return Err(Failure::usage("params", "params were trained with a different model section"));
            }
            params
        }
    };
    let mut rng = rng.split(2);
    let inputs: Vec<Mat<f64>> = (0..GRADCHECK_SAMPLES)
        .map(|_| glorot_init(model.patches, model.dim, &mut rng))
        .collect();
    let annotations: Vec<Annotation<f64>> = (0..GRADCHECK_SAMPLES)
        .map(|i| {
            let global: Vec<u8> = (0..model.global_concepts).map(|k| ((i + k) % 2) as u8).collect();
            let spatial: Vec<u8> = (0..model.patches * model.spatial_concepts)
                .map(|j| u8::from((i + j) % 3 == 0))
                .collect();
            Annotation::from_bytes(&global, &spatial, model.patches, model.spatial_concepts)
        })
        .collect::<Result<_, _>>()?;
    let use_ann = cfg.train.lambda_expl > 0.0;
    let batch: Vec<Sample<f64>> = inputs
        .iter()
        .zip(&annotations)
        .enumerate()
        .map(|(i, (z, a))| Sample {
            z,
            label: i % model.classes,
            annotation: use_ann.then_some(a),
        })
        .collect();
    let report = gradient_check(&params, &model, &batch, &cfg.train.weights(), eps)?;
    let passed = report.max_rel_error < GRADCHECK_TOLERANCE;
    let mut line = event("gradcheck", &report);
    line["passed"] = json!(passed);
    line["tolerance"] = json!(GRADCHECK_TOLERANCE);
    emit(&line);
    if passed {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            error: "gradcheck",
            message: format!(
                "max relative error {:e} is not below {GRADCHECK_TOLERANCE:e}",
                report.max_rel_error
            ),
        })
    }
}

pub fn export_concepts(run: &Path, planted: Option<&Path>, out: Option<PathBuf>) -> Result<(), Failure> {
    let out = out.unwrap_or_else(|| run.to_path_buf());
    let path = run.join("snapshots.json");
    let text = fs::read_to_string(&path).map_err(|e| Failure::usage("io", format!("{}: {e}", path.display())))?;
    let snapshots: Vec<EpochSnapshot<f64>> = serde_json::from_str(&text)
        .map_err(|e| Failure::usage("json", format!("{}: {e}", path.display())))?;
    let zetas: Vec<Mat<f64>> = snapshots.iter().map(|s| s.zeta.clone()).collect();
    save_dataset(out.join("concepts.biem"), &concept_snapshots_dataset(&zetas)?)?;

    let mut summary = json!({
        "snapshots": snapshots.len(),
        "epochs": snapshots.iter().map(|s| s.epoch).collect::<Vec<_>>(),
    });
    if zetas.len() >= 2 {
        let series = convergence_metrics(&zetas)?;
        write_text(out.join("convergence.csv"), &convergence_csv(&series))?;
        summary["drift"] = json!(series.drift);
        summary["separation"] = json!(series.separation);
    }
    if let Some(p) = planted {
        let emb = load_dataset(p).map_err(Failure::input)?;
        let last = zetas.last().expect("nonempty after export");
        let planted = Mat::from_vec(emb.patches, emb.dim, emb.values.iter().map(|&v| v as f64).collect())
            .map_err(Failure::input)?;
        summary["purity"] = json!(planted_recovery(last, &planted).map_err(Failure::input)?);
    }
    write_json(out.join("convergence.json"), &summary)?;
    emit(&event("export", &summary));
    Ok(())
}
