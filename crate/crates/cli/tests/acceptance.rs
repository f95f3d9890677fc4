//! One line per acceptance criterion, then a non-zero exit if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use sfconf::estimate::{confidence_joint_sampling, confidence_mc};
use sfconf::io::{Tensor, TensorData};
use sfconf::metrics::{miou, synthetic_calibrated, BinScheme, CalibrationReport, ConfusionMatrix};
use sfconf::toy::{
    cross_entropy_loss, logit_sampling_loss, run_comparison, ComparisonConfig, GaussianHeadModel,
    PointEstimateModel, TrainConfig, UNCALIBRATED,
};
use sfconf::{
    confidence_lower_bound, confidence_quadrature, pairwise_win_prob, select_winner,
    std_normal_cdf, win_prob_all_classes, ClassGaussians, DeterministicStream, Method,
};
use sfconf_cli::bench::{run_bench, BenchConfig};
use sfconf_cli::compare::{compare_field, CompareConfig};

const POINTS: usize = 101;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// Means `N(0, 2²)`, stds log-uniform on `[0.05, 5]`.
fn instance(s: &mut DeterministicStream, classes: usize) -> ClassGaussians {
    let (lo, hi) = (0.05f64.ln(), 5f64.ln());
    let means = (0..classes).map(|_| 2.0 * s.next_normal()).collect();
    let stds = (0..classes)
        .map(|_| (lo + (hi - lo) * s.next_uniform()).exp())
        .collect();
    ClassGaussians::new(means, stds).unwrap()
}

fn exact(g: &ClassGaussians, w: usize) -> f64 {
    confidence_quadrature(g.view(), w, POINTS).unwrap().value
}

fn two_class_exactness() -> Outcome {
    let start = Instant::now();
    let mut s = DeterministicStream::new(1, 0);
    let (mut not_bitwise, mut worst) = (0, 0.0f64);
    for _ in 0..10_000 {
        let g = instance(&mut s, 2);
        let (m, sd) = (g.means(), g.stds());
        for (w, j) in [(0, 1), (1, 0)] {
            let lb = confidence_lower_bound(g.view(), w);
            let closed = std_normal_cdf((m[w] - m[j]) / (sd[w] * sd[w] + sd[j] * sd[j]).sqrt());
            if lb.to_bits() != pairwise_win_prob(m[w], sd[w], m[j], sd[j]).to_bits() {
                not_bitwise += 1;
            }
            worst = worst
                .max((lb - closed).abs())
                .max((lb - exact(&g, w)).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        not_bitwise == 0 && worst <= 1e-8 && within(t, 5.0),
        format!("{not_bitwise} bitwise mismatches, max |lb - exact| {worst:.2e}, {t:.2?}"),
    )
}

fn bound_property() -> Outcome {
    let start = Instant::now();
    let violations: usize = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut s = DeterministicStream::new(2, i);
            let c = 2 + s.next_below(19) as usize;
            let g = instance(&mut s, c);
            let w = select_winner(g.view());
            usize::from(confidence_lower_bound(g.view(), w) > exact(&g, w) + 1e-7)
        })
        .sum();
    let t = start.elapsed();
    outcome(
        violations == 0 && within(t, 60.0),
        format!("{violations} violations over 10000 instances, {t:.2?}"),
    )
}

fn oracle_agreement() -> Outcome {
    let start = Instant::now();
    let n = 100_000;
    let worst = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut s = DeterministicStream::new(3, i);
            let c = 2 + s.next_below(19) as usize;
            let g = instance(&mut s, c);
            let w = select_winner(g.view());
            let q = exact(&g, w);
            let mc = confidence_mc(g.view(), w, n, &mut DeterministicStream::new(30, i));
            let joint =
                confidence_joint_sampling(g.view(), w, n, &mut DeterministicStream::new(31, i));
            (mc - q).abs().max((joint - q).abs())
        })
        .reduce(|| 0.0, f64::max);
    let t = start.elapsed();
    outcome(
        worst <= 0.0079 && within(t, 60.0),
        format!("max deviation from quadrature {worst:.4}, {t:.2?}"),
    )
}

fn sum_to_one() -> Outcome {
    let mut s = DeterministicStream::new(4, 0);
    let mut worst = 0.0f64;
    let mut nonconverged = 0;
    for _ in 0..1000 {
        let c = 2 + s.next_below(19) as usize;
        let g = instance(&mut s, c);
        let (p, converged) = win_prob_all_classes(g.view(), POINTS).unwrap();
        nonconverged += usize::from(!converged);
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    outcome(
        worst <= 1e-6 && nonconverged == 0,
        format!("max |sum - 1| {worst:.2e}, {nonconverged} non-converged"),
    )
}

fn toy_discrepancy(field: &sfconf::GaussianField) -> Outcome {
    let (mut total, n) = (0.0, field.pixels());
    for g in field.iter() {
        let w = select_winner(g);
        total += confidence_quadrature(g, w, POINTS).unwrap().value - confidence_lower_bound(g, w);
    }
    let mean = total / n as f64;
    let cfg = CompareConfig {
        mc_samples: 200,
        softmax_samples: 10,
        ..CompareConfig::default()
    };
    let cmp = compare_field(field, &cfg).unwrap();
    // the CSV carries every row that the bound check reads
    let csv = cmp.to_csv();
    let row_violations = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with("mean"))
        .filter(|l| {
            let v: Vec<f64> = l.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
            v[1] > v[0] + 1e-7
        })
        .count();
    outcome(
        (0.0..0.05).contains(&mean) && row_violations == 0,
        format!(
            "mean(exact - lb) {mean:.3e} over {n} test points, {row_violations} CSV row violations"
        ),
    )
}

fn gradient_check() -> Outcome {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let start = Instant::now();
    let (c, d, t, batch) = (4, 3, 6, 5);
    let mut worst = 0.0f64;
    for point in 0..20u64 {
        let cfg = TrainConfig {
            init_scale: 0.8,
            ..TrainConfig::default().with_seed(1000 + point)
        };
        let mut model = GaussianHeadModel::init(c, d, &cfg);
        let mut s = DeterministicStream::new(6, point);
        for b in model.b_mu.iter_mut().chain(model.b_s.iter_mut()) {
            *b = 0.5 * s.next_normal();
        }
        let inputs: Vec<f64> = (0..batch * d).map(|_| s.next_normal()).collect();
        let labels: Vec<u32> = (0..batch).map(|_| s.next_below(c as u64) as u32).collect();
        let noise: Vec<f64> = (0..batch * t * c).map(|_| s.next_normal()).collect();
        let loss = |m: &GaussianHeadModel| logit_sampling_loss(m, &inputs, &labels, &noise, t);

        let analytic = loss(&model).unwrap().1.flat();
        let base = model.params();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + H;
            model.set_params(&p);
            let up = loss(&model).unwrap().0;
            p[i] = base[i] - H;
            model.set_params(&p);
            let down = loss(&model).unwrap().0;
            model.set_params(&base);
            let numeric = (up - down) / (2.0 * H);
            let err =
                (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-4 && within(t, 30.0),
        format!("max relative error {worst:.2e} at 20 points, {t:.2?}"),
    )
}

fn degenerate_loss() -> Outcome {
    let (c, d, batch, t) = (5, 4, 16, 30);
    let cfg = TrainConfig {
        init_scale: 1.0,
        ..TrainConfig::default().with_seed(7)
    };
    let mut model = GaussianHeadModel::init(c, d, &cfg);
    model.log_std_min = -40.0;
    model.w_s.fill(0.0);
    model.b_s.fill(1e-8f64.ln());
    let mut s = DeterministicStream::new(7, 0);
    let inputs: Vec<f64> = (0..batch * d).map(|_| s.next_normal()).collect();
    let labels: Vec<u32> = (0..batch).map(|_| s.next_below(c as u64) as u32).collect();
    let noise: Vec<f64> = (0..batch * t * c).map(|_| s.next_normal()).collect();
    let sampled = logit_sampling_loss(&model, &inputs, &labels, &noise, t)
        .unwrap()
        .0;
    let point = PointEstimateModel {
        classes: c,
        dim: d,
        w: model.w_mu.clone(),
        b: model.b_mu.clone(),
    };
    let ce = cross_entropy_loss(&point, &inputs, &labels).unwrap().0;
    let diff = (sampled - ce).abs();
    outcome(diff <= 1e-6, format!("|loss - cross-entropy| {diff:.2e}"))
}

fn calibration_metrics() -> Outcome {
    let (conf, correct) = synthetic_calibrated(1_000_000, 8);
    let report = CalibrationReport::compute(&conf, &correct, 10, BinScheme::EqualWidth).unwrap();
    let cm = ConfusionMatrix::from_counts(2, vec![40, 10, 20, 30]).unwrap();
    let (_, m) = miou(&cm).unwrap();
    // IoU 40/70 and 30/60
    let expected = 15.0 / 28.0;
    let err = (m - expected).abs();
    outcome(
        report.ace < 0.01 && err <= 1e-12,
        format!("ACE {:.5}, mIoU {m:.12} (|err| {err:.1e})", report.ace),
    )
}

fn speed() -> Outcome {
    let start = Instant::now();
    let results = run_bench(&BenchConfig::default()).unwrap();
    let t = start.elapsed();
    let get = |m: Method| results.iter().find(|r| r.method == m).unwrap();
    let (lb, sm) = (get(Method::LowerBound), get(Method::SoftmaxAvg));
    outcome(
        lb.median_seconds < sm.median_seconds && lb.speedup_vs_reference > 1.0 && within(t, 120.0),
        format!(
            "lower bound {:.4} s vs softmax avg (50) {:.4} s, speedup {:.1}x, {t:.2?}",
            lb.median_seconds, sm.median_seconds, lb.speedup_vs_reference
        ),
    )
}

fn toy_direction(runs: &[(u64, [f64; 2])], t: Duration) -> Outcome {
    let wins = runs.iter().filter(|(_, [base, lb])| lb < base).count();
    let per_seed: Vec<String> = runs
        .iter()
        .map(|(seed, [base, lb])| format!("seed {seed} {:.2}%/{:.2}%", 100.0 * base, 100.0 * lb))
        .collect();
    outcome(
        wins >= 4 && within(t, 300.0),
        format!(
            "{wins}/5 seeds with lower-bound ACE below baseline ({}), {t:.2?}",
            per_seed.join(", ")
        ),
    )
}

fn reliability_parity(run: &sfconf::toy::ComparisonRun) -> Outcome {
    let bins = |name: &str| {
        &run.evaluations
            .iter()
            .find(|e| e.method == name)
            .unwrap()
            .calibration
            .bins
    };
    let (lb, sm) = (
        bins(Method::LowerBound.as_str()),
        bins(Method::SoftmaxAvg.as_str()),
    );
    let (mut shared, mut worst) = (0, 0.0f64);
    for a in lb {
        if let Some(b) = sm.iter().find(|b| b.lower == a.lower && b.upper == a.upper) {
            shared += 1;
            worst = worst.max((a.gap() - b.gap()).abs());
        }
    }
    outcome(
        shared > 0 && worst <= 0.05,
        format!("max gap difference {worst:.4} over {shared} shared bins"),
    )
}

fn random_tensor(s: &mut DeterministicStream) -> Tensor {
    let rank = 1 + s.next_below(4) as usize;
    let dims: Vec<u32> = (0..rank).map(|_| 1 + s.next_below(5) as u32).collect();
    let n: usize = dims.iter().map(|&d| d as usize).product();
    let data = if s.next_below(2) == 0 {
        TensorData::F32(
            (0..n)
                .map(|_| f32::from_bits(s.next_word() as u32))
                .collect(),
        )
    } else {
        TensorData::U32((0..n).map(|_| s.next_word() as u32).collect())
    };
    Tensor::new(dims, data).unwrap()
}

fn tensor_io() -> Outcome {
    let mut s = DeterministicStream::new(12, 0);
    let mut round_trip_failures = 0;
    let mut crashes = 0;
    let mut accepted_corruptions = 0;
    for _ in 0..1000 {
        let t = random_tensor(&mut s);
        let bytes = t.to_bytes();
        match Tensor::from_bytes(&bytes) {
            Ok(back) if back.to_bytes() == bytes => {}
            _ => round_trip_failures += 1,
        }

        let mut bad = bytes.clone();
        match s.next_below(3) {
            0 => {
                let i = s.next_below(bad.len() as u64) as usize;
                bad[i] ^= 1 << s.next_below(8);
            }
            1 => bad.truncate(s.next_below(bad.len() as u64) as usize),
            _ => bad.push(s.next_word() as u8),
        }
        match catch_unwind(AssertUnwindSafe(|| Tensor::from_bytes(&bad))) {
            Err(_) => crashes += 1,
            // a flipped payload bit is still a valid tensor
            Ok(Ok(_)) => accepted_corruptions += 1,
            Ok(Err(_)) => {}
        }
    }
    outcome(
        round_trip_failures == 0 && crashes == 0,
        format!(
            "{round_trip_failures} round-trip failures, {crashes} crashes over 1000 mutations \
             ({accepted_corruptions} payload-only mutations decoded)"
        ),
    )
}

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_default()
}

fn main() -> ExitCode {
    std::panic::set_hook(Box::new(|_| {}));
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |id: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let o = catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(&*e))));
        println!(
            "criterion {id:>2} {}: {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };

    record(1, "two-class exactness", &mut two_class_exactness);
    record(2, "lower bound never exceeds exact", &mut bound_property);
    record(
        3,
        "sampling oracles agree with quadrature",
        &mut oracle_agreement,
    );
    record(4, "win probabilities sum to one", &mut sum_to_one);

    let cfg = ComparisonConfig::default();
    let start = Instant::now();
    let runs: Vec<_> = (0..5u64)
        .into_par_iter()
        .map(|seed| run_comparison(&cfg, seed).map(|r| (seed, r)))
        .collect();
    let toy_time = start.elapsed();
    let runs: Result<Vec<_>, _> = runs.into_iter().collect();

    match &runs {
        Ok(runs) => record(5, "toy lower-bound discrepancy", &mut || {
            toy_discrepancy(&runs[0].1.field)
        }),
        Err(e) => record(5, "toy lower-bound discrepancy", &mut || {
            outcome(false, e.to_string())
        }),
    }
    record(6, "loss gradient check", &mut gradient_check);
    record(7, "tiny sigma loss is cross-entropy", &mut degenerate_loss);
    record(8, "calibration metrics", &mut calibration_metrics);
    record(9, "lower bound faster than softmax averaging", &mut speed);
    match &runs {
        Ok(runs) => {
            let aces: Vec<(u64, [f64; 2])> = runs
                .iter()
                .map(|(seed, r)| {
                    let ace = |name: &str| {
                        r.evaluations
                            .iter()
                            .find(|e| e.method == name)
                            .unwrap()
                            .calibration
                            .ace
                    };
                    (*seed, [ace(UNCALIBRATED), ace(Method::LowerBound.as_str())])
                })
                .collect();
            record(10, "toy calibration direction", &mut || {
                toy_direction(&aces, toy_time)
            });
            record(11, "reliability parity", &mut || {
                reliability_parity(&runs[0].1)
            });
        }
        Err(e) => {
            record(10, "toy calibration direction", &mut || {
                outcome(false, e.to_string())
            });
            record(11, "reliability parity", &mut || {
                outcome(false, e.to_string())
            });
        }
    }
    record(12, "tensor round trip and fuzzing", &mut tensor_io);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "{} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
