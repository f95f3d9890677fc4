//! Per-pixel side-by-side of every estimator for the argmax-mean class.

use std::fmt::Write as _;

use rayon::prelude::*;
use sfconf::field::{class_confidence, EstimatorConfig, Method};
use sfconf::{select_winner, GaussianField, Result};

#[derive(Clone, Debug)]
pub struct CompareConfig {
    pub mc_samples: usize,
    pub softmax_samples: usize,
    pub seed: u64,
    pub quadrature_points: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            mc_samples: 10_000,
            softmax_samples: 50,
            seed: 0,
            quadrature_points: 101,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub pixel: usize,
    pub winner: usize,
    pub exact: f64,
    pub lower_bound: f64,
    pub mc: f64,
    pub joint: f64,
    pub softmax_avg: f64,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Pixels whose quadrature did not converge.
    pub nonconverged: usize,
}

impl Comparison {
    pub fn mean_exact_minus_lower_bound(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.exact - r.lower_bound))
    }

    /// Rows where the lower bound exceeds the exact value by more than `slack`.
    pub fn bound_violations(&self, slack: f64) -> usize {
        self.rows
            .iter()
            .filter(|r| r.lower_bound > r.exact + slack)
            .count()
    }

    /// One row per pixel, then a `mean` row averaging every column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "pixel,winner,exact,lower_bound,mc,joint,softmax_avg,exact_minus_lower_bound\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.pixel,
                r.winner,
                r.exact,
                r.lower_bound,
                r.mc,
                r.joint,
                r.softmax_avg,
                r.exact - r.lower_bound
            );
        }
        let col = |f: fn(&CompareRow) -> f64| mean(self.rows.iter().map(f));
        let _ = writeln!(
            s,
            "mean,,{},{},{},{},{},{}",
            col(|r| r.exact),
            col(|r| r.lower_bound),
            col(|r| r.mc),
            col(|r| r.joint),
            col(|r| r.softmax_avg),
            self.mean_exact_minus_lower_bound()
        );
        s
    }
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sum::<f64>() / n as f64
}

/// Scores the argmax-mean class of every pixel with all five estimators.
/// The sampling estimators of pixel `p` draw from stream `(seed, p)`.
pub fn compare_field(f: &GaussianField, cfg: &CompareConfig) -> Result<Comparison> {
    let est = |method, samples| {
        let mut c = EstimatorConfig::new(method).with_seed(cfg.seed);
        c.sample_count = samples;
        c.quadrature_points = cfg.quadrature_points;
        c
    };
    let configs = [
        est(Method::Quadrature, 1),
        est(Method::LowerBound, 1),
        est(Method::McIntegration, cfg.mc_samples),
        est(Method::JointSampling, cfg.mc_samples),
        est(Method::SoftmaxAvg, cfg.softmax_samples),
    ];
    for c in &configs {
        c.validate()?;
    }
    let scored = (0..f.pixels())
        .into_par_iter()
        .map(|p| {
            let g = f.pixel(p);
            let w = select_winner(g);
            let mut v = [0.0; 5];
            let mut converged = true;
            for (slot, c) in v.iter_mut().zip(&configs) {
                let (value, ok) = class_confidence(g, w, c, p as u64, None)?;
                *slot = value;
                converged &= ok;
            }
            Ok((
                CompareRow {
                    pixel: p,
                    winner: w,
                    exact: v[0],
                    lower_bound: v[1],
                    mc: v[2],
                    joint: v[3],
                    softmax_avg: v[4],
                },
                converged,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let nonconverged = scored.iter().filter(|(_, ok)| !ok).count();
    Ok(Comparison {
        rows: scored.into_iter().map(|(r, _)| r).collect(),
        nonconverged,
    })
}
