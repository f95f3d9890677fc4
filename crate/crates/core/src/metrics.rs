//! Calibration and segmentation metrics: confidence binning, ACE, ECE,
//! reliability diagrams, confusion matrices and mIoU.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DeterministicStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinScheme {
    EqualWidth,
    EqualMass,
}

impl BinScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            BinScheme::EqualWidth => "equal-width",
            BinScheme::EqualMass => "equal-mass",
        }
    }
}

impl FromStr for BinScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-width" => Ok(BinScheme::EqualWidth),
            "equal-mass" => Ok(BinScheme::EqualMass),
            _ => Err(Error::InvalidConfig(format!(
                "unknown bin scheme '{s}' (expected equal-width or equal-mass)"
            ))),
        }
    }
}

/// Statistics of one non-empty confidence bin. Also the row type of the
/// reliability CSV, in column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

impl BinStats {
    pub fn gap(&self) -> f64 {
        (self.mean_confidence - self.accuracy).abs()
    }
}

/// Bin index for `v` among `m` right-closed equal-width bins; 0 goes to the
/// first bin and 1 to the last.
fn equal_width_index(v: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut k = ((v * mf).ceil() as isize - 1).clamp(0, m as isize - 1) as usize;
    while k > 0 && v <= k as f64 / mf {
        k -= 1;
    }
    while k + 1 < m && v > (k + 1) as f64 / mf {
        k += 1;
    }
    k
}

fn check_inputs(confidences: &[f64], correct: &[bool], requested: usize) -> Result<()> {
    if confidences.is_empty() {
        return Err(Error::EmptyInput("no confidences to bin"));
    }
    if confidences.len() != correct.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} confidences but {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    if requested == 0 {
        return Err(Error::InvalidConfig("bin count must be >= 1".into()));
    }
    if let Some(i) = confidences.iter().position(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::OutOfRange(format!(
            "confidence {i} = {} is outside [0, 1]",
            confidences[i]
        )));
    }
    Ok(())
}

/// Groups predictions into confidence bins and drops the empty ones.
///
/// Equal-width bins partition `[0, 1]` into `requested` right-closed
/// intervals. Equal-mass bins sort by confidence (ties by input order) and
/// cut into `requested` groups whose sizes differ by at most one; their
/// bounds are the smallest and largest confidence in the group.
pub fn bin_predictions(
    confidences: &[f64],
    correct: &[bool],
    requested: usize,
    scheme: BinScheme,
) -> Result<Vec<BinStats>> {
    check_inputs(confidences, correct, requested)?;
    let bins = match scheme {
        BinScheme::EqualWidth => {
            let mut sums = vec![(0u64, 0.0f64, 0u64); requested];
            for (&c, &ok) in confidences.iter().zip(correct) {
                let s = &mut sums[equal_width_index(c, requested)];
                s.0 += 1;
                s.1 += c;
                s.2 += u64::from(ok);
            }
            sums.into_iter()
                .enumerate()
                .filter(|(_, s)| s.0 > 0)
                .map(|(k, (count, conf, hits))| BinStats {
                    lower: k as f64 / requested as f64,
                    upper: (k + 1) as f64 / requested as f64,
                    count,
                    mean_confidence: conf / count as f64,
                    accuracy: hits as f64 / count as f64,
                })
                .collect()
        }
        BinScheme::EqualMass => {
            let n = confidences.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]).then(a.cmp(&b)));
            (0..requested)
                .map(|k| (k * n / requested, (k + 1) * n / requested))
                .filter(|(start, end)| end > start)
                .map(|(start, end)| {
                    let group = &order[start..end];
                    let count = group.len() as u64;
                    let conf: f64 = group.iter().map(|&i| confidences[i]).sum();
                    let hits = group.iter().filter(|&&i| correct[i]).count();
                    BinStats {
                        lower: confidences[group[0]],
                        upper: confidences[*group.last().unwrap()],
                        count,
                        mean_confidence: conf / count as f64,
                        accuracy: hits as f64 / count as f64,
                    }
                })
                .collect()
        }
    };
    Ok(bins)
}

/// Unweighted mean of `|c_m − Acc_m|` over the given non-empty bins.
pub fn ace(bins: &[BinStats]) -> f64 {
    if bins.is_empty() {
        return 0.0;
    }
    bins.iter().map(BinStats::gap).sum::<f64>() / bins.len() as f64
}

/// Count-weighted mean of `|c_m − Acc_m|`.
pub fn ece(bins: &[BinStats], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    bins.iter()
        .map(|b| b.count as f64 / total as f64 * b.gap())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub scheme: BinScheme,
    pub requested_bins: usize,
    pub bins: Vec<BinStats>,
    pub ace: f64,
    pub ece: f64,
    pub total_samples: u64,
}

impl CalibrationReport {
    pub fn compute(
        confidences: &[f64],
        correct: &[bool],
        requested: usize,
        scheme: BinScheme,
    ) -> Result<Self> {
        let bins = bin_predictions(confidences, correct, requested, scheme)?;
        let total = confidences.len() as u64;
        Ok(Self {
            scheme,
            requested_bins: requested,
            ace: ace(&bins),
            ece: ece(&bins, total),
            bins,
            total_samples: total,
        })
    }
}

/// Reliability-diagram rows: the non-empty bins ordered by lower bound.
pub fn reliability_rows(bins: &[BinStats]) -> Vec<BinStats> {
    let mut rows = bins.to_vec();
    rows.sort_by(|a, b| a.lower.total_cmp(&b.lower));
    rows
}

/// Confidences and correctness flags for scored pixels, skipping pixels whose
/// label is `ignore`.
pub fn calibration_inputs(
    confidence: &[f64],
    prediction: &[u32],
    labels: &[u32],
    ignore: Option<u32>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if confidence.len() != prediction.len() || prediction.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} confidences, {} predictions, {} labels",
            confidence.len(),
            prediction.len(),
            labels.len()
        )));
    }
    let mut conf = Vec::with_capacity(labels.len());
    let mut correct = Vec::with_capacity(labels.len());
    for ((&c, &p), &l) in confidence.iter().zip(prediction).zip(labels) {
        if Some(l) == ignore {
            continue;
        }
        conf.push(c);
        correct.push(p == l);
    }
    Ok((conf, correct))
}

/// Draws `n` predictions whose correctness is Bernoulli(confidence) with
/// confidence uniform on `[0, 1]`, so the stream is calibrated by
/// construction.
pub fn synthetic_calibrated(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut s = DeterministicStream::new(seed, 0);
    let mut conf = Vec::with_capacity(n);
    let mut correct = Vec::with_capacity(n);
    for _ in 0..n {
        let c = s.next_uniform();
        conf.push(c);
        correct.push(s.next_uniform() < c);
    }
    (conf, correct)
}

const SVG_SIZE: f64 = 400.0;
const SVG_MARGIN: f64 = 50.0;

/// Reliability diagram as SVG: accuracy bars over the confidence axis, the
/// mean-confidence marker of each bin, and the identity diagonal.
pub fn reliability_svg(rows: &[BinStats]) -> String {
    let plot = SVG_SIZE - 2.0 * SVG_MARGIN;
    let x = |v: f64| SVG_MARGIN + v * plot;
    let y = |v: f64| SVG_SIZE - SVG_MARGIN - v * plot;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        SVG_SIZE
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{0}" height="{0}" fill="white"/>"#,
        SVG_SIZE
    );
    for r in rows {
        let _ = writeln!(
            s,
            r##"<rect class="accuracy" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0" stroke="#1f3b66" stroke-width="1"/>"##,
            x(r.lower),
            y(r.accuracy),
            x(r.upper) - x(r.lower),
            y(0.0) - y(r.accuracy)
        );
        let _ = writeln!(
            s,
            r##"<line class="confidence" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c44e52" stroke-width="2"/>"##,
            x(r.lower),
            y(r.mean_confidence),
            x(r.upper),
            y(r.mean_confidence)
        );
    }
    let _ = writeln!(
        s,
        r##"<line class="diagonal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#555555" stroke-dasharray="6,4" stroke-width="1.5"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="black"/>"#,
        x(0.0),
        y(0.0),
        x(1.0)
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/>"#,
        x(0.0),
        y(0.0),
        y(1.0)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{:.1}</text>"#,
            x(v),
            y(0.0) + 16.0,
            v
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{:.1}</text>"#,
            x(0.0) - 6.0,
            y(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">Confidence</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{0:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {0:.2})">Accuracy</text>"#,
        SVG_SIZE / 2.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn render_reliability_svg(rows: &[BinStats], path: &Path) -> Result<()> {
    std::fs::write(path, reliability_svg(rows)).map_err(|e| Error::file(path, e))
}

/// Prediction-vs-label counts; rows are ground truth, columns prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
    ignore_label: Option<u32>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize, ignore_label: Option<u32>) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
            ignore_label,
        }
    }

    /// Builds a matrix from row-major counts.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::ShapeMismatch(format!(
                "{classes} classes need {} counts, got {}",
                classes * classes,
                counts.len()
            )));
        }
        Ok(Self {
            classes,
            counts,
            ignore_label: None,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ignore_label(&self) -> Option<u32> {
        self.ignore_label
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of scored samples on the diagonal.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0)
            .then(|| (0..self.classes).map(|c| self.get(c, c)).sum::<u64>() as f64 / total as f64)
    }

    fn merge(mut self, other: &ConfusionMatrix) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }
}

/// Counts `(label, prediction)` pairs, skipping pixels labelled `ignore`.
pub fn accumulate_confusion(
    prediction: &[u32],
    labels: &[u32],
    classes: usize,
    ignore: Option<u32>,
) -> Result<ConfusionMatrix> {
    if prediction.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions but {} labels",
            prediction.len(),
            labels.len()
        )));
    }
    let chunk = 1 << 16;
    prediction
        .par_chunks(chunk)
        .zip(labels.par_chunks(chunk))
        .map(|(preds, labs)| {
            let mut cm = ConfusionMatrix::zeros(classes, ignore);
            for (i, (&p, &l)) in preds.iter().zip(labs).enumerate() {
                if Some(l) == ignore {
                    continue;
                }
                if l as usize >= classes || p as usize >= classes {
                    return Err(Error::OutOfRange(format!(
                        "pixel {i} of chunk: label {l}, prediction {p}, classes {classes}"
                    )));
                }
                cm.counts[l as usize * classes + p as usize] += 1;
            }
            Ok(cm)
        })
        .try_reduce(
            || ConfusionMatrix::zeros(classes, ignore),
            |a, b| Ok(a.merge(&b)),
        )
}

/// Per-class IoU and their mean. Classes absent from both truth and
/// prediction get `None` and are left out of the mean.
pub fn miou(cm: &ConfusionMatrix) -> Result<(Vec<Option<f64>>, f64)> {
    let c = cm.classes;
    let per_class: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let fn_: u64 = (0..c).filter(|&j| j != k).map(|j| cm.get(k, j)).sum();
            let fp: u64 = (0..c).filter(|&j| j != k).map(|j| cm.get(j, k)).sum();
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::EmptyInput("no class present in truth or prediction"));
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok((per_class, mean))
}
