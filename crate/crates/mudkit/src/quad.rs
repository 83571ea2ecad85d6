//! Adaptive Gauss-Kronrod quadrature on finite intervals.
//!
//! Globally adaptive 7/15-point rule: the interval list is kept in a heap
//! ordered by local error estimate and the worst segment is bisected until the
//! summed error meets the tolerance or the subdivision cap is hit.

use std::collections::BinaryHeap;

use thiserror::Error;

/// Default subdivision cap for all semi-infinite metric integrals.
pub(crate) const MAX_SEGMENTS: usize = 1_000_000;

#[derive(Debug, Clone, Error)]
pub enum QuadError {
    #[error(
        "quadrature did not converge: error estimate {error:.3e} on value {value:.6e} \
         after {segments} segments"
    )]
    NonConvergence {
        value: f64,
        error: f64,
        segments: usize,
    },
}

// 15-point Kronrod nodes (positive half, descending; last entry is the centre)
// and weights, with the embedded 7-point Gauss weights. QUADPACK qk15 values,
// kept at full published precision.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One evaluated segment: value, error estimate, bounds.
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// 15-point Kronrod estimate with embedded 7-point Gauss error estimate.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(centre);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    let mut fv = [[0.0_f64; 2]; 7];

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv[j] = [f1, f2];
        let fsum = f1 + f2;
        resk += WGK[j] * fsum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * fsum;
        }
    }

    let reskh = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j][0] - reskh).abs() + (fv[j][1] - reskh).abs());
    }

    let value = resk * half;
    resabs *= half.abs();
    resasc *= half.abs();

    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }

    Segment {
        a,
        b,
        value,
        error,
    }
}

/// Integrate `f` over the union of `[points[i], points[i+1]]`, refining
/// adaptively until the global error estimate drops below
/// `max(abs_tol, rel_tol * |result|)`.
pub(crate) fn integrate_segments<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<f64, QuadError> {
    debug_assert!(points.len() >= 2);
    let mut heap: BinaryHeap<Segment> = BinaryHeap::new();
    let mut value = 0.0;
    let mut error = 0.0;
    for w in points.windows(2) {
        let seg = gk15(&f, w[0], w[1]);
        value += seg.value;
        error += seg.error;
        heap.push(seg);
    }
    // Segments too narrow to bisect further; their error is already counted.
    let mut frozen_value = 0.0;
    let mut frozen_error = 0.0;
    let mut n_segments = points.len() - 1;

    loop {
        if error + frozen_error <= abs_tol.max(rel_tol * value.abs()) {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if n_segments >= max_segments {
            return Err(QuadError::NonConvergence {
                value,
                error: error + frozen_error,
                segments: n_segments,
            });
        }
        if !(worst.a < mid && mid < worst.b) {
            // Cannot split at f64 resolution; keep its contribution as-is.
            frozen_value += worst.value;
            frozen_error += worst.error;
            value = heap.iter().map(|s| s.value).sum::<f64>() + frozen_value;
            error = heap.iter().map(|s| s.error).sum();
            continue;
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        n_segments += 1;
    }

    // Recompute the total once without the incremental-update drift.
    let total: f64 = heap.iter().map(|s| s.value).sum::<f64>() + frozen_value;
    Ok(total)
}

#[cfg(test)]
pub(crate) fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<f64, QuadError> {
    integrate_segments(f, &[a, b], rel_tol, abs_tol, max_segments)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x, 0.0, 1.0, 1e-12, 0.0, 100).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_over_wide_interval() {
        let v = integrate(|x| (-x * x).exp(), -20.0, 20.0, 1e-12, 0.0, MAX_SEGMENTS).unwrap();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((v - sqrt_pi).abs() / sqrt_pi < 1e-12, "v = {v}");
    }

    #[test]
    fn narrow_peak_needs_refinement() {
        // unit-mass Gaussian of width 1e-3 centred off the panel midpoints
        let s = 1e-3;
        let norm = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
        let f = |x: f64| norm * (-0.5 * ((x - 0.3) / s).powi(2)).exp();
        let v = integrate(f, 0.0, 1.0, 1e-11, 0.0, MAX_SEGMENTS).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "v = {v}");
    }

    #[test]
    fn presplit_segments_agree_with_single_interval() {
        let f = |x: f64| (1.0 + x).ln() / (1.0 + x * x);
        let a = integrate(f, 0.0, 1.0, 1e-13, 0.0, MAX_SEGMENTS).unwrap();
        let b = integrate_segments(f, &[0.0, 0.1, 0.5, 1.0], 1e-13, 0.0, MAX_SEGMENTS).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn subdivision_cap_reports_nonconvergence() {
        let r = integrate(|x| (1e6 * x).sin(), 0.0, 1.0, 1e-14, 0.0, 8);
        assert!(matches!(r, Err(QuadError::NonConvergence { .. })));
    }
}
