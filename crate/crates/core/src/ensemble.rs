//! Deep-ensemble aggregation.
//!
//! The ensemble class at a pixel is the argmax of the member-averaged means.
//! Every member then scores that same class, even where its own argmax
//! differs, and the ensemble confidence is the plain mean of those scores.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{class_confidence, EstimatorConfig, FieldConfidence, NoisePool};
use crate::gaussian::{argmax, GaussianField};

#[derive(Clone, Debug)]
pub struct EnsembleField {
    members: Vec<GaussianField>,
}

impl EnsembleField {
    pub fn new(members: Vec<GaussianField>) -> Result<Self> {
        let first = members
            .first()
            .ok_or(Error::EmptyInput("ensemble has no members"))?;
        for (m, f) in members.iter().enumerate().skip(1) {
            if !f.same_shape(first) {
                return Err(Error::ShapeMismatch(format!(
                    "member {m} is {}x{}x{}, member 0 is {}x{}x{}",
                    f.height(),
                    f.width(),
                    f.classes(),
                    first.height(),
                    first.width(),
                    first.classes()
                )));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[GaussianField] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn shape(&self) -> &GaussianField {
        &self.members[0]
    }

    fn pixel_class(&self, p: usize) -> usize {
        let c = self.shape().classes();
        let mut mean = vec![0.0; c];
        for f in &self.members {
            for (acc, m) in mean.iter_mut().zip(f.pixel(p).means) {
                *acc += m;
            }
        }
        // the 1/E scale does not move the argmax
        argmax(&mean)
    }
}

/// Per-pixel argmax of the member-averaged means.
pub fn ensemble_predict(e: &EnsembleField) -> Vec<u32> {
    (0..e.shape().pixels())
        .into_par_iter()
        .map(|p| e.pixel_class(p) as u32)
        .collect()
}

/// Ensemble prediction, averaged fixed-class confidence, and uncertainty.
///
/// Member `m` at pixel `p` draws from stream `(cfg.seed, p)`, the same stream
/// for every member, so identical members yield identical scores.
pub fn ensemble_confidence(e: &EnsembleField, cfg: &EstimatorConfig) -> Result<FieldConfidence> {
    cfg.validate()?;
    let shape = e.shape();
    let pool = NoisePool::for_config(cfg, shape.classes());
    let count = e.len() as f64;
    let pixels = (0..shape.pixels())
        .into_par_iter()
        .map(|p| {
            let k = e.pixel_class(p);
            let mut total = 0.0;
            let mut converged = true;
            for f in &e.members {
                let (c, ok) = class_confidence(f.pixel(p), k, cfg, p as u64, pool.as_ref())?;
                total += c;
                converged &= ok;
            }
            Ok((k, total / count, converged))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldConfidence::from_pixels(
        shape.height(),
        shape.width(),
        pixels,
    ))
}
