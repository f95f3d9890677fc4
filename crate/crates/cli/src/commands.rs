use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sfconf::ensemble::{ensemble_confidence, EnsembleField};
use sfconf::io::{read_field, read_tensor, write_csv, write_field, write_report, write_tensor};
use sfconf::io::{ReportFile, Tensor};
use sfconf::metrics::{
    accumulate_confusion, calibration_inputs, miou, reliability_rows, render_reliability_svg,
    CalibrationReport,
};
use sfconf::toy::{
    comparison_estimators, comparison_splits, evaluate_predictions, predict_field, train_ensemble,
    train_gaussian_head, train_point_estimate, ComparisonConfig, GaussianHeadModel,
    MethodEvaluation, PointEstimateModel, Trained, UNCALIBRATED,
};
use sfconf::{field_confidence, EstimatorConfig, FieldConfidence, Method};

use crate::args::*;
use crate::bench::{run_bench, summary_table, BenchConfig};
use crate::compare::{compare_field, CompareConfig};
use crate::error::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Confidence(a) => confidence(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Compare(a) => compare(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Bench(a) => bench(a),
        Command::Toy(ToyCommand::Train(a)) => toy_train(a),
        Command::Toy(ToyCommand::Eval(a)) => toy_eval(a),
        Command::Toy(ToyCommand::Ensemble(a)) => toy_ensemble(a),
    }
}

fn estimator_config(a: &EstimatorArgs) -> EstimatorConfig {
    let mut cfg = EstimatorConfig::new(a.method)
        .with_samples(a.samples)
        .with_seed(a.seed)
        .with_shared_pool(a.shared_pool);
    cfg.quadrature_points = a.quad_points;
    cfg
}

fn recorded_samples(cfg: &EstimatorConfig) -> usize {
    if cfg.method.is_sampling() {
        cfg.sample_count
    } else {
        0
    }
}

fn write_maps(fc: &FieldConfidence, out: &MapOutputs) -> CliResult {
    let dims = vec![fc.height as u32, fc.width as u32];
    let f32s = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
    write_tensor(
        &out.out_pred,
        &Tensor::u32(dims.clone(), fc.prediction.clone())?,
    )?;
    write_tensor(
        &out.out_conf,
        &Tensor::f32(dims.clone(), f32s(&fc.confidence))?,
    )?;
    write_tensor(&out.out_unc, &Tensor::f32(dims, f32s(&fc.uncertainty))?)?;
    Ok(())
}

fn map_outputs(dir: &Path, prefix: &str) -> MapOutputs {
    MapOutputs {
        out_pred: dir.join(format!("{prefix}_pred.glf")),
        out_conf: dir.join(format!("{prefix}_conf.glf")),
        out_unc: dir.join(format!("{prefix}_unc.glf")),
    }
}

fn check_converged(fc: &FieldConfidence) -> CliResult {
    if fc.nonconverged > 0 {
        return Err(CliError::Numeric(format!(
            "quadrature did not converge on {} of {} pixels (outputs were written)",
            fc.nonconverged,
            fc.prediction.len()
        )));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut s = serde_json::to_string_pretty(value).map_err(sfconf::Error::from)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let s = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&s).map_err(sfconf::Error::from)?)
}

fn confidence(a: ConfidenceArgs) -> CliResult {
    let field = read_field(&a.means, &a.stds)?;
    let fc = field_confidence(&field, &estimator_config(&a.estimator))?;
    write_maps(&fc, &a.out)?;
    check_converged(&fc)
}

/// Calibration and segmentation scores of one labelled map.
struct Scored {
    calibration: CalibrationReport,
    miou: f64,
    per_class_iou: Vec<Option<f64>>,
}

fn score(
    conf: &[f64],
    pred: &[u32],
    labels: &[u32],
    ignore: Option<u32>,
    classes: usize,
    binning: &BinArgs,
) -> CliResult<Scored> {
    let (c, correct) = calibration_inputs(conf, pred, labels, ignore)?;
    let calibration = CalibrationReport::compute(&c, &correct, binning.bins, binning.scheme)?;
    let cm = accumulate_confusion(pred, labels, classes, ignore)?;
    let (per_class_iou, miou) = miou(&cm)?;
    Ok(Scored {
        calibration,
        miou,
        per_class_iou,
    })
}

fn calibrate(a: CalibrateArgs) -> CliResult {
    let start = Instant::now();
    let (cd, conf) = read_tensor(&a.conf)?.into_f32()?;
    let (pd, pred) = read_tensor(&a.pred)?.into_u32()?;
    let (ld, labels) = read_tensor(&a.labels)?.into_u32()?;
    if cd != pd || pd != ld {
        return Err(sfconf::Error::ShapeMismatch(format!(
            "confidence {cd:?}, prediction {pd:?}, labels {ld:?}"
        ))
        .into());
    }
    let classes = match a.classes {
        Some(c) => c,
        None => {
            let scored = labels.iter().filter(|&&l| Some(l) != a.ignore);
            scored.chain(&pred).max().map_or(1, |&m| m as usize + 1)
        }
    };
    let conf: Vec<f64> = conf.into_iter().map(f64::from).collect();
    let s = score(&conf, &pred, &labels, a.ignore, classes, &a.binning)?;
    let rows = reliability_rows(&s.calibration.bins);
    let report = ReportFile {
        calibration: s.calibration,
        miou: Some(s.miou),
        per_class_iou: Some(s.per_class_iou),
        method: a.method,
        sample_count: a.samples,
        seed: a.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_report(&a.out_json, &report)?;
    if let Some(p) = &a.out_csv {
        write_csv(p, &rows)?;
    }
    if let Some(p) = &a.out_svg {
        render_reliability_svg(&rows, p)?;
    }
    Ok(())
}

fn compare(a: CompareArgs) -> CliResult {
    let field = read_field(&a.means, &a.stds)?;
    let cfg = CompareConfig {
        mc_samples: a.mc_samples,
        softmax_samples: a.softmax_samples,
        seed: a.seed,
        quadrature_points: a.quad_points,
    };
    let cmp = compare_field(&field, &cfg)?;
    fs::write(&a.out_csv, cmp.to_csv()).map_err(|e| CliError::io(&a.out_csv, e))?;
    println!(
        "{} pixels, mean exact - lower_bound = {:.6}",
        cmp.rows.len(),
        cmp.mean_exact_minus_lower_bound()
    );
    if cmp.nonconverged > 0 {
        return Err(CliError::Numeric(format!(
            "quadrature did not converge on {} pixels (outputs were written)",
            cmp.nonconverged
        )));
    }
    let violations = cmp.bound_violations(1e-7);
    if violations > 0 {
        return Err(CliError::Numeric(format!(
            "lower bound exceeds the exact value on {violations} pixels (outputs were written)"
        )));
    }
    Ok(())
}

fn ensemble(a: EnsembleArgs) -> CliResult {
    let start = Instant::now();
    let members = a
        .members
        .iter()
        .map(|(m, s)| read_field(m, s))
        .collect::<sfconf::Result<Vec<_>>>()?;
    let classes = members[0].classes();
    let e = EnsembleField::new(members)?;
    let cfg = estimator_config(&a.estimator);
    let fc = ensemble_confidence(&e, &cfg)?;
    write_maps(&fc, &a.out)?;
    if let (Some(labels), Some(out_json)) = (&a.labels, &a.out_json) {
        let (ld, labels) = read_tensor(labels)?.into_u32()?;
        if ld.iter().map(|&d| d as usize).product::<usize>() != fc.prediction.len() {
            return Err(sfconf::Error::ShapeMismatch(format!(
                "labels {ld:?} for a {}x{} field",
                fc.height, fc.width
            ))
            .into());
        }
        let s = score(
            &fc.confidence,
            &fc.prediction,
            &labels,
            a.ignore,
            classes,
            &a.binning,
        )?;
        let report = ReportFile {
            calibration: s.calibration,
            miou: Some(s.miou),
            per_class_iou: Some(s.per_class_iou),
            method: cfg.method.as_str().to_string(),
            sample_count: recorded_samples(&cfg),
            seed: cfg.seed,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        };
        write_report(out_json, &report)?;
    }
    check_converged(&fc)
}

fn bench(a: BenchArgs) -> CliResult {
    let cfg = BenchConfig {
        classes: a.classes,
        pixels: a.pixels,
        methods: a.methods,
        samples: a.samples,
        repeats: a.repeats,
        warmup: a.warmup,
        seed: a.seed,
    };
    let results = match a.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot build a {n}-thread pool: {e}")))?;
            pool.install(|| run_bench(&cfg))?
        }
        None => run_bench(&cfg)?,
    };
    write_json(&a.out_json, &results)?;
    print!("{}", summary_table(&results));
    Ok(())
}

/// Settings and seed of a `toy train` run, stored as `run.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ToyRun {
    pub seed: u64,
    pub config: ComparisonConfig,
}

pub const RUN_FILE: &str = "run.json";
pub const GAUSSIAN_MODEL_FILE: &str = "gaussian_head.json";
pub const POINT_MODEL_FILE: &str = "point_estimate.json";
pub const EVAL_FILE: &str = "eval.json";

fn comparison_config(t: &ToyTrainingArgs) -> ComparisonConfig {
    let mut cfg = ComparisonConfig {
        train_size: t.train_size,
        test_size: t.test_size,
        ..ComparisonConfig::default()
    };
    cfg.train.epochs = t.epochs;
    cfg.train.learning_rate = t.learning_rate;
    cfg.train.batch_size = t.batch_size;
    cfg.train.loss_samples = t.loss_samples;
    if t.full_samples {
        cfg.train = cfg.train.full_samples();
    }
    cfg
}

fn write_labels(path: &Path, labels: &[u32]) -> CliResult {
    write_tensor(
        path,
        &Tensor::u32(vec![1, labels.len() as u32], labels.to_vec())?,
    )?;
    Ok(())
}

fn toy_train(a: ToyTrainArgs) -> CliResult {
    let cfg = comparison_config(&a.training);
    create_dir(&a.out_dir)?;
    let (train, test) = comparison_splits(&cfg, a.seed)?;
    let tcfg = cfg.train.clone().with_seed(a.seed);
    let (gaussian, point) = rayon::join(
        || train_gaussian_head(&train, &tcfg),
        || train_point_estimate(&train, &tcfg),
    );
    let (gaussian, point) = (gaussian?, point?);
    let field = predict_field(&gaussian.model, &test.inputs)?;

    let dir = &a.out_dir;
    write_json(
        &dir.join(RUN_FILE),
        &ToyRun {
            seed: a.seed,
            config: cfg,
        },
    )?;
    write_json(&dir.join(GAUSSIAN_MODEL_FILE), &gaussian)?;
    write_json(&dir.join(POINT_MODEL_FILE), &point)?;
    write_field(
        &field,
        &dir.join("test_means.glf"),
        &dir.join("test_stds.glf"),
    )?;
    write_labels(&dir.join("test_labels.glf"), &test.labels)?;
    println!(
        "final training loss: gaussian head {:.4}, point estimate {:.4}",
        gaussian.loss_curve.last().copied().unwrap_or(f64::NAN),
        point.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub ace: f64,
    pub ece: f64,
    pub miou: f64,
    pub accuracy: f64,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalSummary {
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    /// Mean over test points of quadrature minus lower-bound confidence.
    pub mean_exact_minus_lower_bound: f64,
}

fn method_outputs(
    dir: &Path,
    name: &str,
    fc: &FieldConfidence,
    eval: &MethodEvaluation,
    samples: usize,
    seed: u64,
    seconds: f64,
) -> CliResult {
    write_maps(fc, &map_outputs(dir, name))?;
    let rows = reliability_rows(&eval.calibration.bins);
    write_report(
        dir.join(format!("{name}_report.json")),
        &ReportFile {
            calibration: eval.calibration.clone(),
            miou: Some(eval.miou),
            per_class_iou: Some(eval.per_class_iou.clone()),
            method: name.to_string(),
            sample_count: samples,
            seed,
            wall_time_seconds: seconds,
        },
    )?;
    write_csv(dir.join(format!("{name}_reliability.csv")), &rows)?;
    render_reliability_svg(&rows, &dir.join(format!("{name}_reliability.svg")))?;
    Ok(())
}

fn toy_eval(a: ToyEvalArgs) -> CliResult {
    let run: ToyRun = read_json(&a.run_dir.join(RUN_FILE))?;
    let gaussian: Trained<GaussianHeadModel> = read_json(&a.run_dir.join(GAUSSIAN_MODEL_FILE))?;
    let point: Trained<PointEstimateModel> = read_json(&a.run_dir.join(POINT_MODEL_FILE))?;
    let out_dir: PathBuf = a.out_dir.unwrap_or_else(|| a.run_dir.clone());
    create_dir(&out_dir)?;

    let mut cfg = run.config;
    cfg.inference_samples = a.samples;
    cfg.bins = a.binning.bins;
    cfg.scheme = a.binning.scheme;
    let (_, test) = comparison_splits(&cfg, run.seed)?;
    let evaluate = |name: &str, fc: &FieldConfidence| {
        evaluate_predictions(
            name,
            &fc.prediction,
            &fc.confidence,
            &test.labels,
            test.classes,
            cfg.bins,
            cfg.scheme,
        )
    };

    let mut rows = Vec::new();
    let start = Instant::now();
    let (pred, conf) = point.model.predict(&test.inputs);
    let uncalibrated = FieldConfidence {
        height: 1,
        width: test.len(),
        uncertainty: conf.iter().map(|c| 1.0 - c).collect(),
        prediction: pred,
        confidence: conf,
        nonconverged: 0,
    };
    let seconds = start.elapsed().as_secs_f64();
    let eval = evaluate(UNCALIBRATED, &uncalibrated)?;
    method_outputs(
        &out_dir,
        UNCALIBRATED,
        &uncalibrated,
        &eval,
        0,
        run.seed,
        seconds,
    )?;
    rows.push(eval_row(&eval, seconds));

    let field = predict_field(&gaussian.model, &test.inputs)?;
    let mut lower_bound = None;
    for ecfg in comparison_estimators(&cfg, run.seed) {
        let start = Instant::now();
        let fc = field_confidence(&field, &ecfg)?;
        let seconds = start.elapsed().as_secs_f64();
        let name = ecfg.method.as_str();
        let eval = evaluate(name, &fc)?;
        method_outputs(
            &out_dir,
            name,
            &fc,
            &eval,
            recorded_samples(&ecfg),
            run.seed,
            seconds,
        )?;
        rows.push(eval_row(&eval, seconds));
        if ecfg.method == Method::LowerBound {
            lower_bound = Some(fc);
        }
    }
    let lower_bound = lower_bound.expect("lower bound is always evaluated");
    let exact = field_confidence(&field, &EstimatorConfig::new(Method::Quadrature))?;
    let gap = exact
        .confidence
        .iter()
        .zip(&lower_bound.confidence)
        .map(|(e, l)| e - l)
        .sum::<f64>()
        / exact.confidence.len() as f64;

    let summary = EvalSummary {
        seed: run.seed,
        rows,
        mean_exact_minus_lower_bound: gap,
    };
    write_json(&out_dir.join(EVAL_FILE), &summary)?;
    println!(
        "{:<14} {:>8} {:>8} {:>8} {:>10}",
        "method", "ACE %", "ECE %", "mIoU %", "time (s)"
    );
    for r in &summary.rows {
        println!(
            "{:<14} {:>8.2} {:>8.2} {:>8.2} {:>10.4}",
            r.method,
            100.0 * r.ace,
            100.0 * r.ece,
            100.0 * r.miou,
            r.wall_time_seconds
        );
    }
    println!("mean exact - lower bound: {gap:.6}");
    check_converged(&exact)
}

fn eval_row(e: &MethodEvaluation, seconds: f64) -> EvalRow {
    EvalRow {
        method: e.method.clone(),
        ace: e.calibration.ace,
        ece: e.calibration.ece,
        miou: e.miou,
        accuracy: e.accuracy,
        wall_time_seconds: seconds,
    }
}

fn toy_ensemble(a: ToyEnsembleArgs) -> CliResult {
    if a.seeds.is_empty() {
        return Err(CliError::Usage("--seeds needs at least one seed".into()));
    }
    let start = Instant::now();
    let cfg = comparison_config(&a.training);
    create_dir(&a.out_dir)?;
    let (train, test) = comparison_splits(&cfg, a.data_seed)?;
    let e = train_ensemble(&train, &test, &cfg.train, &a.seeds)?;
    for (seed, f) in a.seeds.iter().zip(e.members()) {
        write_field(
            f,
            &a.out_dir.join(format!("member{seed}_means.glf")),
            &a.out_dir.join(format!("member{seed}_stds.glf")),
        )?;
    }
    write_labels(&a.out_dir.join("test_labels.glf"), &test.labels)?;
    let ecfg = estimator_config(&a.estimator);
    let fc = ensemble_confidence(&e, &ecfg)?;
    let name = format!("ensemble_{}", ecfg.method.as_str());
    let eval = evaluate_predictions(
        &name,
        &fc.prediction,
        &fc.confidence,
        &test.labels,
        test.classes,
        a.binning.bins,
        a.binning.scheme,
    )?;
    let seconds = start.elapsed().as_secs_f64();
    method_outputs(
        &a.out_dir,
        &name,
        &fc,
        &eval,
        recorded_samples(&ecfg),
        ecfg.seed,
        seconds,
    )?;
    println!(
        "{} members: ACE {:.2}%, ECE {:.2}%, mIoU {:.2}%",
        e.len(),
        100.0 * eval.calibration.ace,
        100.0 * eval.calibration.ece,
        100.0 * eval.miou
    );
    check_converged(&fc)
}
