//! Per-class Gaussian logit distributions for a single sample and for a
//! whole field of samples.

use crate::error::{Error, Result};

/// Logit means and standard deviations for one sample, one entry per class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGaussians {
    means: Vec<f64>,
    stds: Vec<f64>,
}

/// Borrowed, already-validated view of a [`ClassGaussians`].
#[derive(Clone, Copy, Debug)]
pub struct GaussianView<'a> {
    pub means: &'a [f64],
    pub stds: &'a [f64],
}

fn validate(means: &[f64], stds: &[f64]) -> Result<()> {
    if means.len() != stds.len() {
        return Err(Error::InvalidGaussians(format!(
            "{} means but {} stds",
            means.len(),
            stds.len()
        )));
    }
    if means.len() < 2 {
        return Err(Error::InvalidGaussians(format!(
            "need at least 2 classes, got {}",
            means.len()
        )));
    }
    if let Some(i) = means.iter().position(|m| !m.is_finite()) {
        return Err(Error::InvalidGaussians(format!(
            "mean {i} is not finite ({})",
            means[i]
        )));
    }
    if let Some(i) = stds.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidGaussians(format!(
            "std {i} must be finite and > 0 (got {})",
            stds[i]
        )));
    }
    Ok(())
}

impl ClassGaussians {
    pub fn new(means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        validate(&means, &stds)?;
        Ok(Self { means, stds })
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn view(&self) -> GaussianView<'_> {
        GaussianView {
            means: &self.means,
            stds: &self.stds,
        }
    }
}

impl<'a> GaussianView<'a> {
    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn to_owned(&self) -> ClassGaussians {
        ClassGaussians {
            means: self.means.to_vec(),
            stds: self.stds.to_vec(),
        }
    }
}

impl<'a> From<&'a ClassGaussians> for GaussianView<'a> {
    fn from(g: &'a ClassGaussians) -> Self {
        g.view()
    }
}

/// Index of the largest mean; exact ties go to the smallest index.
pub fn select_winner(g: GaussianView<'_>) -> usize {
    argmax(g.means)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-major `height × width × classes` field of per-pixel Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianField {
    height: usize,
    width: usize,
    classes: usize,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl GaussianField {
    pub fn new(
        height: usize,
        width: usize,
        classes: usize,
        means: Vec<f64>,
        stds: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "field must be non-empty, got {height}x{width}"
            )));
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(classes))
            .ok_or_else(|| Error::ShapeMismatch("field size overflows".into()))?;
        if means.len() != expected || stds.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{classes} field needs {expected} values, got {} means and {} stds",
                means.len(),
                stds.len()
            )));
        }
        for p in 0..height * width {
            let r = p * classes..(p + 1) * classes;
            validate(&means[r.clone()], &stds[r])
                .map_err(|e| Error::InvalidGaussians(format!("pixel {p}: {e}")))?;
        }
        Ok(Self {
            height,
            width,
            classes,
            means,
            stds,
        })
    }

    /// A `1 × n` field from a list of samples.
    pub fn from_samples(samples: &[ClassGaussians]) -> Result<Self> {
        let classes = samples
            .first()
            .ok_or(Error::EmptyInput("no samples"))?
            .classes();
        let mut means = Vec::with_capacity(samples.len() * classes);
        let mut stds = Vec::with_capacity(samples.len() * classes);
        for s in samples {
            if s.classes() != classes {
                return Err(Error::ShapeMismatch(format!(
                    "mixed class counts {classes} and {}",
                    s.classes()
                )));
            }
            means.extend_from_slice(s.means());
            stds.extend_from_slice(s.stds());
        }
        Self::new(1, samples.len(), classes, means, stds)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn pixel(&self, index: usize) -> GaussianView<'_> {
        let r = index * self.classes..(index + 1) * self.classes;
        GaussianView {
            means: &self.means[r.clone()],
            stds: &self.stds[r],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = GaussianView<'_>> + '_ {
        (0..self.pixels()).map(move |p| self.pixel(p))
    }

    pub fn same_shape(&self, other: &GaussianField) -> bool {
        self.height == other.height && self.width == other.width && self.classes == other.classes
    }
}
