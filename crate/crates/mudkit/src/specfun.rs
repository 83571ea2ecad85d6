//! Special-function kernel backing the closed-form metrics.
//!
//! Only what the closed forms need, over the domains they need it on:
//! log-gamma, beta, the lower non-regularized incomplete beta, Gauss's
//! hypergeometric 2F1 restricted to `z <= 0` (mapped into `[0, 1)` by the
//! Pfaff transformation), and the Gaussian Q-function. All routines are pure
//! and thread-safe.

use thiserror::Error;

/// Convergence control for the iterative kernels.
#[derive(Debug, Clone, Copy)]
pub struct Accuracy {
    /// Relative tolerance for series / continued-fraction truncation.
    pub rel_tol: f64,
    /// Iteration cap before reporting non-convergence.
    pub max_iter: usize,
}

impl Default for Accuracy {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

impl Accuracy {
    pub fn new(rel_tol: f64, max_iter: usize) -> Result<Self, SpecFunError> {
        if !(rel_tol > 0.0) {
            return Err(SpecFunError::Domain {
                what: format!("rel_tol must be positive, got {rel_tol}"),
            });
        }
        if max_iter == 0 {
            return Err(SpecFunError::Domain {
                what: "max_iter must be at least 1".into(),
            });
        }
        Ok(Self { rel_tol, max_iter })
    }
}

#[derive(Debug, Clone, Error)]
pub enum SpecFunError {
    #[error("domain error: {what}")]
    Domain { what: String },
    #[error("no convergence: {what}")]
    NoConvergence { what: String },
}

#[allow(clippy::excessive_precision)]
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_780_329_736_405_62;

// Stirling-series coefficients B_{2n} / (2n (2n-1)).
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

/// Natural log of the gamma function for `x > 0`.
///
/// Stirling's series for `x >= 12`, with the recurrence
/// `ln G(x) = ln G(x + k) - sum ln(x + j)` shifting smaller arguments up.
pub fn log_gamma(x: f64) -> Result<f64, SpecFunError> {
    if !(x > 0.0) {
        return Err(SpecFunError::Domain {
            what: format!("log_gamma requires x > 0, got {x}"),
        });
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut y = x;
    while y < 12.0 {
        shift += y.ln();
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut pow = inv;
    for c in STIRLING {
        series += c * pow;
        pow *= inv2;
    }
    (y - 0.5) * y.ln() - y + LN_SQRT_2PI + series - shift
}

/// Beta function `B(a, b) = G(a) G(b) / G(a + b)`, via `log_gamma` so large
/// arguments do not overflow.
pub fn beta(a: f64, b: f64) -> Result<f64, SpecFunError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(SpecFunError::Domain {
            what: format!("beta requires positive arguments, got a={a}, b={b}"),
        });
    }
    Ok((log_gamma_unchecked(a) + log_gamma_unchecked(b) - log_gamma_unchecked(a + b)).exp())
}

/// Lower non-regularized incomplete beta
/// `beta_inc(x, a, b) = integral_0^x y^(a-1) (1-y)^(b-1) dy` with default
/// [`Accuracy`].
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64, SpecFunError> {
    incomplete_beta_with(x, a, b, &Accuracy::default())
}

/// `incomplete_beta` with explicit convergence control.
///
/// Evaluated as the regularized function (continued fraction, switching to the
/// symmetric branch for `x > (a+1)/(a+b+2)`) scaled back by `B(a, b)`.
pub fn incomplete_beta_with(x: f64, a: f64, b: f64, acc: &Accuracy) -> Result<f64, SpecFunError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(SpecFunError::Domain {
            what: format!("incomplete_beta requires positive a, b; got a={a}, b={b}"),
        });
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(SpecFunError::Domain {
            what: format!("incomplete_beta requires 0 <= x <= 1, got {x}"),
        });
    }
    let full = beta(a, b)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(full);
    }
    let regularized = if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - regularized_beta_direct(1.0 - x, b, a, acc)?
    } else {
        regularized_beta_direct(x, a, b, acc)?
    };
    Ok(regularized * full)
}

/// Regularized I_x(a, b) on the branch where the continued fraction converges
/// quickly (`x <= (a+1)/(a+b+2)`). Lentz's algorithm.
fn regularized_beta_direct(x: f64, a: f64, b: f64, acc: &Accuracy) -> Result<f64, SpecFunError> {
    let ln_front = a * x.ln() + b * (-x).ln_1p()
        - (log_gamma_unchecked(a) + log_gamma_unchecked(b) - log_gamma_unchecked(a + b));
    let front = ln_front.exp() / a;

    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=acc.max_iter {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < acc.rel_tol {
            return Ok(front * h);
        }
    }
    Err(SpecFunError::NoConvergence {
        what: format!(
            "incomplete beta continued fraction (x={x}, a={a}, b={b}) after {} iterations",
            acc.max_iter
        ),
    })
}

/// Gauss hypergeometric 2F1(a, b; c; z) for `z <= 0` with default accuracy.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64, SpecFunError> {
    gauss_2f1_with(a, b, c, z, &Accuracy::default())
}

/// `gauss_2f1` with explicit convergence control.
///
/// For `z < 0` the argument is mapped into `[0, 1)` with the Pfaff
/// transformation `2F1(a,b;c;z) = (1-z)^(-b) 2F1(c-a, b; c; z/(z-1))` and the
/// transformed series is summed directly. Arguments `z > 0` are rejected:
/// nothing here needs them and the analytic continuation would be untested.
pub fn gauss_2f1_with(a: f64, b: f64, c: f64, z: f64, acc: &Accuracy) -> Result<f64, SpecFunError> {
    if !(c > 0.0) {
        return Err(SpecFunError::Domain {
            what: format!("gauss_2f1 requires c > 0, got {c}"),
        });
    }
    if !(b > 0.0) {
        return Err(SpecFunError::Domain {
            what: format!("gauss_2f1 requires b > 0, got {b}"),
        });
    }
    if z > 0.0 {
        return Err(SpecFunError::Domain {
            what: format!("gauss_2f1 supports only z <= 0, got {z}"),
        });
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let w = z / (z - 1.0);
    let prefactor = (-b * (-z).ln_1p()).exp(); // (1 - z)^(-b)
    Ok(prefactor * hyp2f1_series(c - a, b, c, w, acc)?)
}

/// Plain power series `sum_k (a)_k (b)_k / ((c)_k k!) w^k`, convergent for
/// `|w| < 1`. Shared by the Pfaff path; also usable directly on `(-1, 0]` as
/// the second computation route.
pub(crate) fn hyp2f1_series(
    a: f64,
    b: f64,
    c: f64,
    w: f64,
    acc: &Accuracy,
) -> Result<f64, SpecFunError> {
    debug_assert!(w.abs() < 1.0);
    // term ratios tend to w, so the truncated tail is about |term| w/(1-w);
    // scaling the cutoff by (1 - |w|) keeps the tail under rel_tol
    let cutoff_scale = 1.0 - w.abs();
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut small_streak = 0;
    for k in 0..acc.max_iter {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (1.0 + k)) * w;
        sum += term;
        if term == 0.0 {
            return Ok(sum); // terminating (polynomial) case
        }
        // two consecutive small terms, so alternating series cannot fool us
        if term.abs() <= acc.rel_tol * cutoff_scale * sum.abs() {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok(sum);
            }
        } else {
            small_streak = 0;
        }
    }
    Err(SpecFunError::NoConvergence {
        what: format!(
            "2F1 series (a={a}, b={b}, c={c}, w={w}) after {} terms",
            acc.max_iter
        ),
    })
}

/// Gaussian Q-function `Q(x) = P[Z > x]` for standard normal `Z`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Complementary error function, via the regularized incomplete gamma
/// `erfc(x) = Q(1/2, x^2)` for `x >= 0` and the reflection `erfc(-x) = 2 - erfc(x)`.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x == 0.0 {
        return 1.0;
    }
    let t = x * x;
    if t < 1.5 {
        1.0 - erf_series(x)
    } else {
        upper_gamma_q_half(t)
    }
}

/// erf by its Maclaurin series; used for |x| < sqrt(1.5) where it converges in
/// a handful of terms.
fn erf_series(x: f64) -> f64 {
    let t = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -t / k;
        let add = term / (2.0 * k + 1.0);
        sum += add;
        if add.abs() <= f64::EPSILON * sum.abs() {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// Regularized upper incomplete gamma Q(1/2, t) by Lentz's continued
/// fraction; equals erfc(sqrt(t)).
fn upper_gamma_q_half(t: f64) -> f64 {
    const A: f64 = 0.5;
    const TINY: f64 = 1e-300;
    let ln_prefix = -t + A * t.ln() - log_gamma_unchecked(A);
    if ln_prefix < -745.0 {
        return 0.0; // below f64 underflow; the true value is < 1e-323
    }
    let mut b = t + 1.0 - A;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..200 {
        let an = -(i as f64) * (i as f64 - A);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    ln_prefix.exp() * h
}
