//! Confidence estimators for the argmax-mean class.
//!
//! With independent logits `X_i ~ N(μ_i, σ_i²)` and winner `w`, the confidence
//! is `P(X_w ≥ max_{i≠w} X_i) = ∫ φ_w(x) ∏_{i≠w} Φ_i(x) dx`. Everything here
//! estimates or bounds that integral, except [`softmax_avg_probs`], which is
//! the logit-sampling baseline.

use crate::error::{Error, Result};
use crate::gaussian::GaussianView;
use crate::normal::{std_normal_cdf, std_normal_pdf};
use crate::rng::DeterministicStream;

/// Half-width of the quadrature interval, in winner standard deviations.
pub const QUAD_HALF_WIDTH: f64 = 12.0;
/// Successive-refinement tolerance for the quadrature.
pub const QUAD_TOLERANCE: f64 = 1e-10;
/// Maximum number of quadrature subintervals.
pub const QUAD_MAX_INTERVALS: usize = 1 << 18;
/// Smallest accepted starting node count.
pub const QUAD_MIN_POINTS: usize = 51;

/// Products of two or more factors below this are reported as zero.
const PRODUCT_FLOOR: f64 = 1e-300;

/// `P(X_w ≥ X_j)` for two independent Gaussians.
#[inline]
pub fn pairwise_win_prob(mu_w: f64, sigma_w: f64, mu_j: f64, sigma_j: f64) -> f64 {
    std_normal_cdf((mu_w - mu_j) / (sigma_w * sigma_w + sigma_j * sigma_j).sqrt())
}

/// Sampling-free lower bound: the product of pairwise win probabilities of
/// `winner` against every other class. Exact for two classes.
pub fn confidence_lower_bound(g: GaussianView<'_>, winner: usize) -> f64 {
    let (mu_w, sigma_w) = (g.means[winner], g.stds[winner]);
    let mut product: f64 = 1.0;
    let mut log_sum = 0.0;
    let mut in_log_space = false;
    for (j, (&mu, &sigma)) in g.means.iter().zip(g.stds).enumerate() {
        if j == winner {
            continue;
        }
        let p = pairwise_win_prob(mu_w, sigma_w, mu, sigma);
        if !in_log_space && product < 1e-200 {
            // another factor could push the product into subnormals; a
            // single factor is returned untouched so two classes stay exact
            in_log_space = true;
            log_sum = product.ln();
        }
        if in_log_space {
            log_sum += p.ln();
        } else {
            product *= p;
        }
    }
    let value = if in_log_space { log_sum.exp() } else { product };
    if g.classes() > 2 && value < PRODUCT_FLOOR {
        0.0
    } else {
        value
    }
}

/// Result of the deterministic quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureEstimate {
    pub value: f64,
    /// Whether two successive refinements agreed to within [`QUAD_TOLERANCE`].
    pub converged: bool,
    /// Number of subintervals used by the final estimate.
    pub intervals: usize,
}

/// Deterministic evaluation of the confidence integral by the composite
/// trapezoid rule on `μ_w ± 12σ_w`, doubling the node count until successive
/// estimates agree to 1e-10 or `2^18` subintervals are reached.
///
/// The starting grid has at least `quadrature_points` nodes and a spacing no
/// coarser than half the narrowest class std, so sharp challenger CDFs are
/// resolved from the first pass.
pub fn confidence_quadrature(
    g: GaussianView<'_>,
    winner: usize,
    quadrature_points: usize,
) -> Result<QuadratureEstimate> {
    if quadrature_points < QUAD_MIN_POINTS {
        return Err(Error::InvalidConfig(format!(
            "quadrature_points must be >= {QUAD_MIN_POINTS}, got {quadrature_points}"
        )));
    }
    let (mu_w, sigma_w) = (g.means[winner], g.stds[winner]);
    // integrate over u with x = μ_w + σ_w u, so the weight is the standard density
    let narrowest = g
        .stds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != winner)
        .map(|(_, &s)| s / sigma_w)
        .fold(1.0_f64, f64::min);
    let span = 2.0 * QUAD_HALF_WIDTH;
    let by_resolution = (span / (0.5 * narrowest)).ceil() as usize;
    let mut intervals = (quadrature_points - 1)
        .max(by_resolution)
        .min(QUAD_MAX_INTERVALS);

    let integrand = |u: f64| -> f64 {
        let x = mu_w + sigma_w * u;
        let mut product = std_normal_pdf(u);
        for (j, (&mu, &sigma)) in g.means.iter().zip(g.stds).enumerate() {
            if j == winner {
                continue;
            }
            product *= std_normal_cdf((x - mu) / sigma);
            if product == 0.0 {
                break;
            }
        }
        product
    };

    let lo = -QUAD_HALF_WIDTH;
    let mut h = span / intervals as f64;
    let mut sum = 0.5 * (integrand(lo) + integrand(QUAD_HALF_WIDTH));
    for k in 1..intervals {
        sum += integrand(lo + k as f64 * h);
    }
    let mut estimate = sum * h;

    while intervals < QUAD_MAX_INTERVALS {
        // add the midpoints of the current grid
        let mut mid = 0.0;
        for k in 0..intervals {
            mid += integrand(lo + (k as f64 + 0.5) * h);
        }
        sum += mid;
        intervals *= 2;
        h *= 0.5;
        let refined = sum * h;
        let delta = (refined - estimate).abs();
        estimate = refined;
        if delta < QUAD_TOLERANCE {
            return Ok(QuadratureEstimate {
                value: estimate.clamp(0.0, 1.0),
                converged: true,
                intervals,
            });
        }
    }
    Ok(QuadratureEstimate {
        value: estimate.clamp(0.0, 1.0),
        converged: false,
        intervals,
    })
}

/// Monte-Carlo estimate of the confidence integral from standard-normal draws
/// `z_k`, each mapped to `x_k = μ_w + σ_w z_k`.
pub fn confidence_mc_from_normals<I>(g: GaussianView<'_>, winner: usize, normals: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let (mu_w, sigma_w) = (g.means[winner], g.stds[winner]);
    let mut total = 0.0;
    let mut n = 0usize;
    for z in normals {
        let x = mu_w + sigma_w * z;
        let mut product: f64 = 1.0;
        for (j, (&mu, &sigma)) in g.means.iter().zip(g.stds).enumerate() {
            if j != winner {
                product *= std_normal_cdf((x - mu) / sigma);
            }
        }
        total += product;
        n += 1;
    }
    total / n as f64
}

/// Monte-Carlo integration with `n` winner-distribution draws from `stream`.
pub fn confidence_mc(
    g: GaussianView<'_>,
    winner: usize,
    n: usize,
    stream: &mut DeterministicStream,
) -> f64 {
    assert!(n >= 1, "confidence_mc needs at least one sample");
    confidence_mc_from_normals(g, winner, (0..n).map(|_| stream.next_normal()))
}

/// Relative frequency of the winner's draw being the maximum, from
/// `normals.len() / C` full logit vectors laid out trial-major.
pub fn confidence_joint_from_normals(g: GaussianView<'_>, winner: usize, normals: &[f64]) -> f64 {
    let c = g.classes();
    let trials = normals.len() / c;
    let mut wins = 0usize;
    for eps in normals.chunks_exact(c) {
        if winner_draw_is_max(g, winner, eps) {
            wins += 1;
        }
    }
    wins as f64 / trials as f64
}

#[inline]
fn winner_draw_is_max(g: GaussianView<'_>, winner: usize, eps: &[f64]) -> bool {
    let xw = g.means[winner] + g.stds[winner] * eps[winner];
    g.means
        .iter()
        .zip(g.stds)
        .zip(eps)
        .enumerate()
        .all(|(j, ((&mu, &sigma), &e))| j == winner || xw >= mu + sigma * e)
}

/// Joint sampling: draw `n` full C-vectors and count how often the winner's
/// draw is at least every other draw.
pub fn confidence_joint_sampling(
    g: GaussianView<'_>,
    winner: usize,
    n: usize,
    stream: &mut DeterministicStream,
) -> f64 {
    assert!(n >= 1, "confidence_joint_sampling needs at least one trial");
    let c = g.classes();
    let mut eps = vec![0.0; c];
    let mut wins = 0usize;
    for _ in 0..n {
        stream.fill_normal(&mut eps);
        if winner_draw_is_max(g, winner, &eps) {
            wins += 1;
        }
    }
    wins as f64 / n as f64
}

/// Softmax in place, max-shifted.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Averaged softmax over logit samples `μ + σ ⊙ ε_t`, with `ε` laid out
/// sample-major (`T × C`).
pub fn softmax_avg_from_normals(g: GaussianView<'_>, normals: &[f64]) -> Vec<f64> {
    let c = g.classes();
    let t = normals.len() / c;
    let mut avg = vec![0.0; c];
    let mut z = vec![0.0; c];
    for eps in normals.chunks_exact(c) {
        for i in 0..c {
            z[i] = g.means[i] + g.stds[i] * eps[i];
        }
        softmax_in_place(&mut z);
        for (a, p) in avg.iter_mut().zip(&z) {
            *a += p;
        }
    }
    for a in avg.iter_mut() {
        *a /= t as f64;
    }
    avg
}

/// Logit-sampling baseline: the mean of `T` softmax vectors of reparameterised
/// logit samples.
pub fn softmax_avg_probs(
    g: GaussianView<'_>,
    t: usize,
    stream: &mut DeterministicStream,
) -> Vec<f64> {
    assert!(t >= 1, "softmax_avg_probs needs at least one sample");
    let c = g.classes();
    let mut avg = vec![0.0; c];
    let mut z = vec![0.0; c];
    for _ in 0..t {
        for i in 0..c {
            z[i] = g.means[i] + g.stds[i] * stream.next_normal();
        }
        softmax_in_place(&mut z);
        for (a, p) in avg.iter_mut().zip(&z) {
            *a += p;
        }
    }
    for a in avg.iter_mut() {
        *a /= t as f64;
    }
    avg
}

/// Probability that each class in turn has the largest draw, by quadrature.
/// The second value is false if any of the integrals failed to converge.
pub fn win_prob_all_classes(
    g: GaussianView<'_>,
    quadrature_points: usize,
) -> Result<(Vec<f64>, bool)> {
    let mut converged = true;
    let mut probs = Vec::with_capacity(g.classes());
    for i in 0..g.classes() {
        let q = confidence_quadrature(g, i, quadrature_points)?;
        converged &= q.converged;
        probs.push(q.value);
    }
    Ok((probs, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{select_winner, ClassGaussians};

    fn cg(means: &[f64], stds: &[f64]) -> ClassGaussians {
        ClassGaussians::new(means.to_vec(), stds.to_vec()).unwrap()
    }

    // Φ(1/√2), Φ(√2) from an independent 30-digit evaluation (frozen).
    const PHI_INV_SQRT2: f64 = 0.760_249_938_906_523_3;
    const PHI_SQRT2: f64 = 0.921_350_396_474_857_4;

    #[test]
    fn frozen_constants_match_cdf() {
        assert!((std_normal_cdf(std::f64::consts::FRAC_1_SQRT_2) - PHI_INV_SQRT2).abs() < 1e-12);
        assert!((std_normal_cdf(std::f64::consts::SQRT_2) - PHI_SQRT2).abs() < 1e-12);
    }

    #[test]
    fn pairwise_examples() {
        assert_eq!(pairwise_win_prob(0.3, 0.7, 0.3, 0.7), 0.5);
        assert!((pairwise_win_prob(1.0, 1.0, 0.0, 1.0) - PHI_INV_SQRT2).abs() < 1e-12);
        assert!((pairwise_win_prob(10.0, 0.1, 0.0, 0.1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_matches_joint_sampling() {
        let g = cg(&[1.0, 0.0], &[1.0, 1.0]);
        let mut s = DeterministicStream::new(11, 0);
        let joint = confidence_joint_sampling(g.view(), 0, 10_000_000, &mut s);
        assert!((joint - PHI_INV_SQRT2).abs() < 5e-4, "{joint}");
    }

    #[test]
    fn lower_bound_examples() {
        let sym = cg(&[0.0; 3], &[1.0; 3]);
        assert_eq!(confidence_lower_bound(sym.view(), 0), 0.25);
        let two = cg(&[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(
            confidence_lower_bound(two.view(), 0),
            pairwise_win_prob(1.0, 1.0, 0.0, 1.0)
        );
        let three = cg(&[2.0, 0.0, 0.0], &[1.0; 3]);
        let lb = confidence_lower_bound(three.view(), 0);
        assert!((lb - PHI_SQRT2 * PHI_SQRT2).abs() < 1e-12);
        assert!((lb - 0.84889).abs() < 1e-5);
    }

    #[test]
    fn two_class_bound_keeps_tiny_values() {
        // Φ(-37.7) sits between the floor and the subnormals
        let s = 0.5f64.sqrt();
        let g = cg(&[-37.7, 0.0], &[s, s]);
        let v = confidence_lower_bound(g.view(), 0);
        assert!(v > 0.0 && v < 1e-300);
        assert_eq!(v, pairwise_win_prob(-37.7, s, 0.0, s));
    }

    #[test]
    fn lower_bound_underflow_goes_to_zero() {
        // winner by index but far behind in each pairwise comparison is impossible;
        // force it by passing a non-argmax winner
        let mut means = vec![0.0; 60];
        means[0] = -30.0;
        let g = cg(&means, &vec![1.0; 60]);
        let v = confidence_lower_bound(g.view(), 0);
        assert_eq!(v, 0.0);
        // moderately small products survive the log-space switch
        let g = cg(&[-9.0, 0.0, 0.0, 0.0], &[1.0; 4]);
        let v = confidence_lower_bound(g.view(), 0);
        let direct = pairwise_win_prob(-9.0, 1.0, 0.0, 1.0).powi(3);
        assert!(((v - direct) / direct).abs() < 1e-12, "{v} {direct}");
    }

    #[test]
    fn quadrature_examples() {
        let sym = cg(&[0.0; 3], &[1.0; 3]);
        let q = confidence_quadrature(sym.view(), 0, 51).unwrap();
        assert!(q.converged);
        assert!((q.value - 1.0 / 3.0).abs() < 1e-8, "{}", q.value);

        let two = cg(&[1.0, 0.0], &[1.0, 1.0]);
        let q = confidence_quadrature(two.view(), 0, 51).unwrap();
        assert!((q.value - PHI_INV_SQRT2).abs() < 1e-8);

        let three = cg(&[2.0, 0.0, 0.0], &[1.0; 3]);
        let q = confidence_quadrature(three.view(), 0, 51).unwrap();
        assert!(q.value >= PHI_SQRT2 * PHI_SQRT2);
        let mut s = DeterministicStream::new(5, 0);
        let joint = confidence_joint_sampling(three.view(), 0, 10_000_000, &mut s);
        assert!((q.value - joint).abs() <= 1e-3, "{} vs {joint}", q.value);
    }

    #[test]
    fn quadrature_rejects_too_few_points() {
        let g = cg(&[0.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(
            confidence_quadrature(g.view(), 0, 50),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn quadrature_resolves_sharp_challengers() {
        let g = cg(&[0.3, 0.0, 0.1], &[5.0, 0.05, 0.05]);
        let q = confidence_quadrature(g.view(), 0, 51).unwrap();
        assert!(q.converged);
        let mut s = DeterministicStream::new(3, 0);
        let joint = confidence_joint_sampling(g.view(), 0, 4_000_000, &mut s);
        assert!((q.value - joint).abs() < 5.0 * (0.25f64 / 4e6).sqrt());
    }

    #[test]
    fn mc_examples() {
        let dom = cg(&[100.0, 0.0, 0.0], &[1.0; 3]);
        for n in [1, 10, 1000] {
            let mut s = DeterministicStream::new(1, 0);
            assert!((confidence_mc(dom.view(), 0, n, &mut s) - 1.0).abs() < 1e-9);
        }
        let sym = cg(&[0.0; 3], &[1.0; 3]);
        let n = 1_000_000;
        let mut s = DeterministicStream::new(2, 0);
        let v = confidence_mc(sym.view(), 0, n, &mut s);
        assert!((v - 1.0 / 3.0).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "{v}");

        let a = confidence_mc(sym.view(), 0, 1000, &mut DeterministicStream::new(3, 4));
        let b = confidence_mc(sym.view(), 0, 1000, &mut DeterministicStream::new(3, 4));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn joint_examples() {
        let dom = cg(&[100.0, 0.0], &[1.0; 2]);
        let mut s = DeterministicStream::new(1, 0);
        assert_eq!(confidence_joint_sampling(dom.view(), 0, 100, &mut s), 1.0);

        let two = cg(&[1.0, 0.0], &[1.0, 1.0]);
        let n = 1_000_000;
        let mut s = DeterministicStream::new(8, 0);
        let v = confidence_joint_sampling(two.view(), 0, n, &mut s);
        let p = PHI_INV_SQRT2;
        assert!(
            (v - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt(),
            "{v}"
        );

        for seed in 0..20 {
            let mut s = DeterministicStream::new(seed, 0);
            let v = confidence_joint_sampling(two.view(), 0, 1, &mut s);
            assert!(v == 0.0 || v == 1.0);
        }
    }

    #[test]
    fn softmax_avg_examples() {
        let g = cg(&[1.0, 2.0, -0.5], &[1e-8; 3]);
        let mut s = DeterministicStream::new(0, 0);
        let p = softmax_avg_probs(g.view(), 7, &mut s);
        let mut plain = vec![1.0, 2.0, -0.5];
        softmax_in_place(&mut plain);
        for (a, b) in p.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-6);
        }

        let sym = cg(&[0.5; 4], &[2.0; 4]);
        let mut s = DeterministicStream::new(1, 0);
        let p = softmax_avg_probs(sym.view(), 1_000_000, &mut s);
        for v in &p {
            assert!((v - 0.25).abs() < 0.003, "{v}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_class_win_probs() {
        let sym = cg(&[0.0; 3], &[1.0; 3]);
        let (p, ok) = win_prob_all_classes(sym.view(), 51).unwrap();
        assert!(ok);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
        let two = cg(&[1.0, 0.0], &[1.0, 1.0]);
        let (p, _) = win_prob_all_classes(two.view(), 51).unwrap();
        assert!((p[0] - PHI_INV_SQRT2).abs() < 1e-8);
        assert!((p[1] - (1.0 - PHI_INV_SQRT2)).abs() < 1e-8);
    }

    #[test]
    fn dominant_winner_is_certain() {
        let g = cg(&[50.0, 0.0, 1.0, -3.0], &[0.5, 1.0, 2.0, 0.3]);
        let w = select_winner(g.view());
        assert_eq!(confidence_lower_bound(g.view(), w), 1.0);
        assert!((confidence_quadrature(g.view(), w, 51).unwrap().value - 1.0).abs() < 1e-9);
    }
}
