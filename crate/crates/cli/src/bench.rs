//! Timing of the confidence stage alone on a random field.
//!
//! No network inference is involved, so the speedups here are not comparable
//! to end-to-end segmentation timings.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sfconf::field::{field_confidence, EstimatorConfig, Method};
use sfconf::{DeterministicStream, Error, GaussianField, Result};

pub const REFERENCE: Method = Method::SoftmaxAvg;
pub const MIN_REPEATS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub method: Method,
    pub classes: usize,
    pub pixels: usize,
    /// Samples per pixel; 0 for methods that draw none.
    pub sample_count: usize,
    pub repeats: usize,
    pub warmup: usize,
    /// Wall time of each post-warmup repeat in seconds.
    pub times_seconds: Vec<f64>,
    pub median_seconds: f64,
    /// Median of the softmax-averaging reference divided by this median.
    pub speedup_vs_reference: f64,
    /// Mean confidence over the field; identical across runs with one seed.
    pub mean_confidence: f64,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub classes: usize,
    pub pixels: usize,
    pub methods: Vec<Method>,
    pub samples: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            classes: 20,
            pixels: 64 * 1024,
            methods: vec![Method::LowerBound, Method::SoftmaxAvg],
            samples: 50,
            repeats: 10,
            warmup: 2,
            seed: 0,
        }
    }
}

/// Random `1 × pixels × classes` field: means `N(0, 2²)`, stds uniform on
/// `[0.2, 2.2)`.
pub fn random_field(classes: usize, pixels: usize, seed: u64) -> Result<GaussianField> {
    let mut s = DeterministicStream::new(seed, 0);
    let n = classes * pixels;
    let means = (0..n).map(|_| 2.0 * s.next_normal()).collect();
    let stds = (0..n).map(|_| 0.2 + 2.0 * s.next_uniform()).collect();
    GaussianField::new(1, pixels, classes, means, stds)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times every requested method, plus the reference when it is missing.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchResult>> {
    if cfg.classes < 2 || cfg.pixels == 0 {
        return Err(Error::InvalidConfig(
            "bench needs classes >= 2 and pixels >= 1".into(),
        ));
    }
    if cfg.repeats < MIN_REPEATS {
        return Err(Error::InvalidConfig(format!(
            "bench needs at least {MIN_REPEATS} repeats"
        )));
    }
    let mut methods = Vec::new();
    for &m in cfg.methods.iter().chain([&REFERENCE]) {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let field = random_field(cfg.classes, cfg.pixels, cfg.seed)?;
    let mut results = Vec::with_capacity(methods.len());
    for method in methods {
        let ecfg = EstimatorConfig::new(method)
            .with_samples(cfg.samples)
            .with_seed(cfg.seed);
        let mut last = None;
        for _ in 0..cfg.warmup {
            last = Some(field_confidence(&field, &ecfg)?);
        }
        let mut times = Vec::with_capacity(cfg.repeats);
        for _ in 0..cfg.repeats {
            let start = Instant::now();
            let out = field_confidence(&field, &ecfg)?;
            times.push(start.elapsed().as_secs_f64());
            last = Some(out);
        }
        let out = last.expect("at least one run");
        let mean_confidence = out.confidence.iter().sum::<f64>() / out.confidence.len() as f64;
        results.push(BenchResult {
            method,
            classes: cfg.classes,
            pixels: cfg.pixels,
            sample_count: if method.is_sampling() { cfg.samples } else { 0 },
            repeats: cfg.repeats,
            warmup: cfg.warmup,
            median_seconds: median(&times),
            times_seconds: times,
            speedup_vs_reference: f64::NAN,
            mean_confidence,
        });
    }
    let reference = results
        .iter()
        .find(|r| r.method == REFERENCE)
        .map(|r| r.median_seconds)
        .expect("reference is always timed");
    for r in &mut results {
        r.speedup_vs_reference = reference / r.median_seconds;
    }
    Ok(results)
}

/// Plain-text table: one line per method with its median and speedup.
pub fn summary_table(results: &[BenchResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>8} {:>14} {:>10}",
        "method", "samples", "median (s)", "speedup"
    );
    for r in results {
        let samples = if r.sample_count == 0 {
            "-".to_string()
        } else {
            r.sample_count.to_string()
        };
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>14.6} {:>9.2}x",
            r.method.as_str(),
            samples,
            r.median_seconds,
            r.speedup_vs_reference
        );
    }
    let _ = writeln!(
        s,
        "confidence stage only, {} pixels x {} classes; speedups are relative to {} with {} samples",
        results.first().map_or(0, |r| r.pixels),
        results.first().map_or(0, |r| r.classes),
        REFERENCE.as_str(),
        results
            .iter()
            .find(|r| r.method == REFERENCE)
            .map_or(0, |r| r.sample_count)
    );
    s
}
