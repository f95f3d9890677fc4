//! Per-pixel confidence over a whole [`GaussianField`].

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{
    confidence_joint_from_normals, confidence_joint_sampling, confidence_lower_bound,
    confidence_mc, confidence_mc_from_normals, confidence_quadrature, softmax_avg_from_normals,
    softmax_avg_probs, QUAD_MIN_POINTS,
};
use crate::gaussian::{argmax, select_winner, GaussianField, GaussianView};
use crate::rng::DeterministicStream;

/// Stream id reserved for the shared noise pool.
pub const POOL_STREAM_ID: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LowerBound,
    Quadrature,
    McIntegration,
    JointSampling,
    SoftmaxAvg,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::LowerBound,
        Method::Quadrature,
        Method::McIntegration,
        Method::JointSampling,
        Method::SoftmaxAvg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LowerBound => "lower-bound",
            Method::Quadrature => "quadrature",
            Method::McIntegration => "mc-integration",
            Method::JointSampling => "joint-sampling",
            Method::SoftmaxAvg => "softmax-avg",
        }
    }

    pub fn is_sampling(self) -> bool {
        matches!(
            self,
            Method::McIntegration | Method::JointSampling | Method::SoftmaxAvg
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method '{s}' (expected one of lower-bound, quadrature, mc-integration, joint-sampling, softmax-avg)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    /// N for mc-integration / joint-sampling, T for softmax-avg.
    pub sample_count: usize,
    pub seed: u64,
    pub quadrature_points: usize,
    /// Reuse one standard-normal pool for every pixel, shifted and scaled per
    /// pixel, instead of a fresh stream per pixel.
    pub shared_pool: bool,
}

impl EstimatorConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.sample_count = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_shared_pool(mut self, on: bool) -> Self {
        self.shared_pool = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.is_sampling() && self.sample_count == 0 {
            return Err(Error::InvalidConfig(format!(
                "{} needs sample_count >= 1",
                self.method
            )));
        }
        if self.method == Method::Quadrature && self.quadrature_points < QUAD_MIN_POINTS {
            return Err(Error::InvalidConfig(format!(
                "quadrature_points must be >= {QUAD_MIN_POINTS}"
            )));
        }
        Ok(())
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: Method::LowerBound,
            sample_count: 50,
            seed: 0,
            quadrature_points: 101,
            shared_pool: false,
        }
    }
}

/// Standard-normal draws shared by every pixel of a field.
#[derive(Clone, Debug)]
pub struct NoisePool(Vec<f64>);

impl NoisePool {
    /// Pool sized for `cfg` on a field with `classes` classes, or `None` when
    /// the method draws no noise or pooling is off.
    pub fn for_config(cfg: &EstimatorConfig, classes: usize) -> Option<Self> {
        if !cfg.shared_pool {
            return None;
        }
        let len = match cfg.method {
            Method::McIntegration => cfg.sample_count,
            Method::JointSampling | Method::SoftmaxAvg => cfg.sample_count * classes,
            Method::LowerBound | Method::Quadrature => return None,
        };
        let mut stream = DeterministicStream::new(cfg.seed, POOL_STREAM_ID);
        let mut v = vec![0.0; len];
        stream.fill_normal(&mut v);
        Some(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Confidence of one pixel for a fixed `class` under `cfg.method`.
///
/// The second value is false when a quadrature failed to converge.
pub fn class_confidence(
    g: GaussianView<'_>,
    class: usize,
    cfg: &EstimatorConfig,
    stream_id: u64,
    pool: Option<&NoisePool>,
) -> Result<(f64, bool)> {
    let stream = || DeterministicStream::new(cfg.seed, stream_id);
    let value = match cfg.method {
        Method::LowerBound => confidence_lower_bound(g, class),
        Method::Quadrature => {
            let q = confidence_quadrature(g, class, cfg.quadrature_points)?;
            return Ok((q.value, q.converged));
        }
        Method::McIntegration => match pool {
            Some(p) => confidence_mc_from_normals(g, class, p.as_slice().iter().copied()),
            None => confidence_mc(g, class, cfg.sample_count, &mut stream()),
        },
        Method::JointSampling => match pool {
            Some(p) => confidence_joint_from_normals(g, class, p.as_slice()),
            None => confidence_joint_sampling(g, class, cfg.sample_count, &mut stream()),
        },
        Method::SoftmaxAvg => softmax_probs(g, cfg, stream_id, pool)[class],
    };
    Ok((value, true))
}

fn softmax_probs(
    g: GaussianView<'_>,
    cfg: &EstimatorConfig,
    stream_id: u64,
    pool: Option<&NoisePool>,
) -> Vec<f64> {
    match pool {
        Some(p) => softmax_avg_from_normals(g, p.as_slice()),
        None => softmax_avg_probs(
            g,
            cfg.sample_count,
            &mut DeterministicStream::new(cfg.seed, stream_id),
        ),
    }
}

/// Prediction and confidence for one pixel. For `softmax-avg` the predicted
/// class is the argmax of the averaged softmax; every other method predicts
/// the argmax-mean class.
pub fn pixel_confidence(
    g: GaussianView<'_>,
    cfg: &EstimatorConfig,
    stream_id: u64,
    pool: Option<&NoisePool>,
) -> Result<(usize, f64, bool)> {
    if cfg.method == Method::SoftmaxAvg {
        let probs = softmax_probs(g, cfg, stream_id, pool);
        let k = argmax(&probs);
        return Ok((k, probs[k], true));
    }
    let w = select_winner(g);
    let (c, ok) = class_confidence(g, w, cfg, stream_id, pool)?;
    Ok((w, c, ok))
}

/// Prediction, confidence and uncertainty (`1 − confidence`) maps.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfidence {
    pub height: usize,
    pub width: usize,
    pub prediction: Vec<u32>,
    pub confidence: Vec<f64>,
    pub uncertainty: Vec<f64>,
    /// Pixels whose quadrature hit the node cap.
    pub nonconverged: usize,
}

impl FieldConfidence {
    pub(crate) fn from_pixels(
        height: usize,
        width: usize,
        pixels: Vec<(usize, f64, bool)>,
    ) -> Self {
        let mut prediction = Vec::with_capacity(pixels.len());
        let mut confidence = Vec::with_capacity(pixels.len());
        let mut uncertainty = Vec::with_capacity(pixels.len());
        let mut nonconverged = 0;
        for (k, c, ok) in pixels {
            prediction.push(k as u32);
            confidence.push(c);
            uncertainty.push(1.0 - c);
            nonconverged += usize::from(!ok);
        }
        Self {
            height,
            width,
            prediction,
            confidence,
            uncertainty,
            nonconverged,
        }
    }
}

/// Per-pixel confidence under `cfg`. Pixel `p` draws from stream id `p`, so
/// the output does not depend on how rayon splits the work; run inside a
/// `ThreadPool::install` to control the thread count.
pub fn field_confidence(f: &GaussianField, cfg: &EstimatorConfig) -> Result<FieldConfidence> {
    cfg.validate()?;
    let pool = NoisePool::for_config(cfg, f.classes());
    let pixels = (0..f.pixels())
        .into_par_iter()
        .map(|p| pixel_confidence(f.pixel(p), cfg, p as u64, pool.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldConfidence::from_pixels(f.height(), f.width(), pixels))
}
