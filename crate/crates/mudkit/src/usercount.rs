//! The active-user count `N`: distribution family, PGF machinery, stochastic
//! ordering and Poisson-approximation checks.
//!
//! Five variants cover the operating modes of the selection procedure: an
//! exhaustive interference scan over `L` users gives a binomial count, a scan
//! stopped at `r` failures gives a negative binomial (real-valued `r` is
//! allowed because `r` is derived from a target mean), non-homogeneous
//! per-user interference gives a Poisson-binomial, and Poisson/deterministic
//! close the family as the limiting and degenerate cases.
//!
//! Everything downstream consumes the probability generating function
//! `U(z) = E[z^N]` on `[0, 1]`, so alongside `pgf` this module provides the
//! numerically stable complements needed near `z = 1`:
//! `pgf_complement(y) = 1 - U(1-y)` and `pgf_prime_at_one_minus(y) = U'(1-y)`.

use rand::Rng;
use rand_distr::Distribution as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::log_gamma_unchecked;

/// Largest Poisson-binomial the exact O(L^2) PMF convolution accepts.
pub const PB_MAX_USERS: usize = 10_000;

/// Additive tolerance for PGF ordering comparisons (PGF values live in [0,1]).
pub const ORDERING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error)]
pub enum DistributionError {
    #[error("invalid `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("sum mismatch: {0}")]
    SumMismatch(String),
    #[error("mean {lambda} not representable: {message}")]
    UnrepresentableMean { lambda: f64, message: String },
}

fn invalid(field: &'static str, message: String) -> DistributionError {
    DistributionError::InvalidParameter { field, message }
}

/// Distribution of the number of active users `N = |S|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UserCountDistribution {
    Deterministic {
        n: u64,
    },
    Binomial {
        #[serde(rename = "L")]
        trials: u64,
        #[serde(rename = "p")]
        success: f64,
    },
    #[serde(rename = "negbinomial")]
    NegBinomial {
        #[serde(rename = "r")]
        failures: f64,
        #[serde(rename = "p")]
        success: f64,
    },
    Poisson {
        #[serde(rename = "lambda")]
        mean: f64,
    },
    #[serde(rename = "pb")]
    PoissonBinomial {
        probs: Vec<f64>,
    },
}

use UserCountDistribution::*;

impl UserCountDistribution {
    pub fn deterministic(n: u64) -> Self {
        Deterministic { n }
    }

    pub fn binomial(trials: u64, success: f64) -> Result<Self, DistributionError> {
        let d = Binomial { trials, success };
        d.validate()?;
        Ok(d)
    }

    pub fn neg_binomial(failures: f64, success: f64) -> Result<Self, DistributionError> {
        let d = NegBinomial { failures, success };
        d.validate()?;
        Ok(d)
    }

    pub fn poisson(mean: f64) -> Result<Self, DistributionError> {
        let d = Poisson { mean };
        d.validate()?;
        Ok(d)
    }

    pub fn poisson_binomial(probs: Vec<f64>) -> Result<Self, DistributionError> {
        let d = PoissonBinomial { probs };
        d.validate()?;
        Ok(d)
    }

    /// Parameter checks; call after deserializing from external input.
    pub fn validate(&self) -> Result<(), DistributionError> {
        match self {
            Deterministic { .. } => Ok(()),
            Binomial { trials, success } => {
                if *trials == 0 {
                    return Err(invalid("trials", "binomial needs at least one trial".into()));
                }
                if !(*success > 0.0 && *success <= 1.0) {
                    return Err(invalid(
                        "success",
                        format!("binomial success probability must be in (0, 1], got {success}"),
                    ));
                }
                Ok(())
            }
            NegBinomial { failures, success } => {
                if !(*failures > 0.0 && failures.is_finite()) {
                    return Err(invalid(
                        "failures",
                        format!("negative binomial failure count must be positive, got {failures}"),
                    ));
                }
                if !(*success > 0.0 && *success < 1.0) {
                    return Err(invalid(
                        "success",
                        format!(
                            "negative binomial success probability must be in (0, 1), got {success}"
                        ),
                    ));
                }
                Ok(())
            }
            Poisson { mean } => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return Err(invalid(
                        "mean",
                        format!("poisson mean must be positive, got {mean}"),
                    ));
                }
                Ok(())
            }
            PoissonBinomial { probs } => {
                if probs.is_empty() {
                    return Err(invalid("probs", "poisson-binomial needs at least one user".into()));
                }
                if probs.len() > PB_MAX_USERS {
                    return Err(invalid(
                        "probs",
                        format!(
                            "poisson-binomial exact PMF is limited to L <= {PB_MAX_USERS} users, got {}",
                            probs.len()
                        ),
                    ));
                }
                for (i, p) in probs.iter().enumerate() {
                    if !(*p > 0.0 && *p <= 1.0) {
                        return Err(invalid(
                            "probs",
                            format!("probs[{i}] must be in (0, 1], got {p}"),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Deterministic { n } => *n as f64,
            Binomial { trials, success } => *trials as f64 * success,
            NegBinomial { failures, success } => failures * success / (1.0 - success),
            Poisson { mean } => *mean,
            PoissonBinomial { probs } => probs.iter().sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Deterministic { .. } => 0.0,
            Binomial { trials, success } => *trials as f64 * success * (1.0 - success),
            NegBinomial { failures, success } => {
                failures * success / ((1.0 - success) * (1.0 - success))
            }
            Poisson { mean } => *mean,
            PoissonBinomial { probs } => probs.iter().map(|p| p * (1.0 - p)).sum(),
        }
    }

    /// `(mean, variance)` in closed form.
    pub fn moments(&self) -> (f64, f64) {
        (self.mean(), self.variance())
    }

    /// Probability mass at `k`.
    ///
    /// The negative binomial uses the gamma-generalized (Polya) coefficients so
    /// non-integer `failures` work; the Poisson-binomial runs the exact O(L^2)
    /// convolution on every call, so batch via [`poisson_binomial_pmf`] when
    /// the whole vector is needed.
    pub fn pmf(&self, k: u64) -> f64 {
        let kf = k as f64;
        match self {
            Deterministic { n } => {
                if k == *n {
                    1.0
                } else {
                    0.0
                }
            }
            Binomial { trials, success } => {
                if k > *trials {
                    return 0.0;
                }
                if *success == 1.0 {
                    return if k == *trials { 1.0 } else { 0.0 };
                }
                let lf = *trials as f64;
                let ln_choose = log_gamma_unchecked(lf + 1.0)
                    - log_gamma_unchecked(kf + 1.0)
                    - log_gamma_unchecked(lf - kf + 1.0);
                (ln_choose + kf * success.ln() + (lf - kf) * (-success).ln_1p()).exp()
            }
            NegBinomial { failures, success } => (log_gamma_unchecked(failures + kf)
                - log_gamma_unchecked(*failures)
                - log_gamma_unchecked(kf + 1.0)
                + kf * success.ln()
                + failures * (-success).ln_1p())
            .exp(),
            Poisson { mean } => (kf * mean.ln() - mean - log_gamma_unchecked(kf + 1.0)).exp(),
            PoissonBinomial { probs } => {
                let table = poisson_binomial_pmf(probs);
                table.get(k as usize).copied().unwrap_or(0.0)
            }
        }
    }

    /// Probability generating function `U(z) = E[z^N]` for `z` in `[0, 1]`.
    pub fn pgf(&self, z: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&z));
        match self {
            Deterministic { n } => z.powf(*n as f64),
            Binomial { trials, success } => {
                (1.0 - success + success * z).powf(*trials as f64)
            }
            NegBinomial { failures, success } => {
                ((1.0 - success) / (1.0 - success * z)).powf(*failures)
            }
            Poisson { mean } => (mean * (z - 1.0)).exp(),
            PoissonBinomial { probs } => probs.iter().map(|p| 1.0 - p + p * z).product(),
        }
    }

    /// `1 - U(1 - y)`, stable for small `y` where the direct form cancels.
    ///
    /// This is the survival side of the PGF that every capacity integrand
    /// needs: near `y = 0` it behaves like `mean * y` and the naive
    /// `1.0 - pgf(1.0 - y)` would lose most of its digits.
    pub fn pgf_complement(&self, y: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&y));
        match self {
            Deterministic { n } => real_power_complement(*n as f64, y),
            Binomial { trials, success } => {
                -((*trials as f64) * (-success * y).ln_1p()).exp_m1()
            }
            NegBinomial { failures, success } => {
                -(-failures * (success * y / (1.0 - success)).ln_1p()).exp_m1()
            }
            Poisson { mean } => -(-mean * y).exp_m1(),
            PoissonBinomial { probs } => {
                let ln_prod: f64 = probs.iter().map(|p| (-p * y).ln_1p()).sum();
                -ln_prod.exp_m1()
            }
        }
    }

    /// Derivative of the PGF, `U'(z) = sum_k k Pr[N=k] z^(k-1)`.
    pub fn pgf_prime(&self, z: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&z));
        self.pgf_prime_at_one_minus(1.0 - z)
    }

    /// `U'(1 - y)`; the argument convention matches [`Self::pgf_complement`]
    /// so density evaluations at gain `x` can pass `y = exp(-x)` exactly.
    pub fn pgf_prime_at_one_minus(&self, y: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&y));
        match self {
            Deterministic { n } => real_power_prime_at_one_minus(*n as f64, y),
            Binomial { trials, success } => {
                if *success == 1.0 {
                    return Deterministic { n: *trials }.pgf_prime_at_one_minus(y);
                }
                let lf = *trials as f64;
                lf * success * ((lf - 1.0) * (-success * y).ln_1p()).exp()
            }
            NegBinomial { failures, success } => {
                let base = 1.0 - success + success * y;
                failures * success / base
                    * (-failures * (success * y / (1.0 - success)).ln_1p()).exp()
            }
            Poisson { mean } => mean * (-mean * y).exp(),
            PoissonBinomial { probs } => {
                // U'(1-y) = sum_j p_j prod_{i != j} (1 - p_i y); factor out the
                // full product unless some factor vanished (p_i = 1, y = 1).
                let mut n_zero = 0usize;
                let mut zero_idx = 0usize;
                let mut ln_prod_nonzero = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    let v = 1.0 - p * y;
                    if v == 0.0 {
                        n_zero += 1;
                        zero_idx = i;
                    } else {
                        ln_prod_nonzero += v.ln();
                    }
                }
                match n_zero {
                    0 => {
                        let prod = ln_prod_nonzero.exp();
                        prod * probs.iter().map(|p| p / (1.0 - p * y)).sum::<f64>()
                    }
                    1 => probs[zero_idx] * ln_prod_nonzero.exp(),
                    _ => 0.0,
                }
            }
        }
    }

    /// Mean/variance PGF bracket: for every `z` in `[0, 1]`,
    /// `1 + (z-1) mean <= U(z) <= 1 + (z-1) mean + (z-1)^2/2 (var + mean^2 - mean)`.
    ///
    /// The quadratic coefficient replaces the bound's unspecified normalized
    /// PGF by its supremum `E[N(N-1)]`, which weakens the upper bound but
    /// keeps it closed-form.
    pub fn pgf_bounds(&self, z: f64) -> (f64, f64) {
        debug_assert!((0.0..=1.0).contains(&z));
        let (mean, var) = self.moments();
        let lower = 1.0 + (z - 1.0) * mean;
        let upper = lower + 0.5 * (z - 1.0) * (z - 1.0) * (var + mean * mean - mean);
        (lower, upper)
    }

    /// Draw one realization of `N`.
    ///
    /// The negative binomial samples through its gamma-Poisson mixture
    /// (`Gamma(failures, scale = p/(1-p))` feeding a Poisson), which is exact
    /// for non-integer `failures`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Deterministic { n } => *n,
            Binomial { trials, success } => rand_distr::Binomial::new(*trials, *success)
                .expect("validated parameters")
                .sample(rng),
            NegBinomial { failures, success } => {
                let scale = success / (1.0 - success);
                let g = rand_distr::Gamma::new(*failures, scale)
                    .expect("validated parameters")
                    .sample(rng);
                if g > 0.0 {
                    rand_distr::Poisson::new(g).expect("positive rate").sample(rng) as u64
                } else {
                    0
                }
            }
            Poisson { mean } => rand_distr::Poisson::new(*mean)
                .expect("validated parameters")
                .sample(rng) as u64,
            PoissonBinomial { probs } => {
                probs.iter().filter(|&&p| rng.random::<f64>() < p).count() as u64
            }
        }
    }

    /// Smallest `K` with `Pr[N <= K] >= 1 - tail_eps`; used to truncate
    /// brute-force sums over the support.
    pub fn support_cutoff(&self, tail_eps: f64) -> u64 {
        match self {
            Deterministic { n } => *n,
            Binomial { trials, .. } => *trials,
            PoissonBinomial { probs } => probs.len() as u64,
            _ => {
                let mut cum = 0.0;
                let mut k = 0u64;
                loop {
                    cum += self.pmf(k);
                    if cum >= 1.0 - tail_eps || k > 100_000_000 {
                        return k;
                    }
                    k += 1;
                }
            }
        }
    }

    /// Short canonical label, e.g. `binomial(L=8,p=0.5)`.
    pub fn label(&self) -> String {
        match self {
            Deterministic { n } => format!("deterministic(n={n})"),
            Binomial { trials, success } => format!("binomial(L={trials},p={success})"),
            NegBinomial { failures, success } => format!("negbinomial(r={failures},p={success})"),
            Poisson { mean } => format!("poisson(lambda={mean})"),
            PoissonBinomial { probs } => format!("pb(L={})", probs.len()),
        }
    }
}

/// `1 - (1 - y)^lam` for real `lam >= 0`, stable for small `y`.
///
/// This is the CDF complement of the max of `lam` unit-exponential gains
/// continued to real `lam`; the `Deterministic` PGF arms call it with
/// `lam = n` so real-valued and integer paths agree bit for bit.
pub(crate) fn real_power_complement(lam: f64, y: f64) -> f64 {
    -(lam * (-y).ln_1p()).exp_m1()
}

/// `d/dz z^lam` at `z = 1 - y` for real `lam >= 0`, finite on all of `[0, 1]`.
pub(crate) fn real_power_prime_at_one_minus(lam: f64, y: f64) -> f64 {
    if lam == 0.0 {
        return 0.0;
    }
    if y > 0.5 {
        lam * (1.0 - y).powf(lam - 1.0)
    } else {
        lam * ((lam - 1.0) * (-y).ln_1p()).exp()
    }
}

/// Exact Poisson-binomial PMF over `0..=L` by dynamic-programming convolution
/// of the Bernoulli components. O(L^2) time, O(L) space.
pub fn poisson_binomial_pmf(probs: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0_f64; probs.len() + 1];
    w[0] = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            w[k] = w[k] * (1.0 - p) + w[k - 1] * p;
        }
        w[0] *= 1.0 - p;
    }
    w
}

/// Right side of the Poisson-approximation bound: `2 sum p_i^2`.
pub fn lecam_bound(probs: &[f64]) -> f64 {
    2.0 * probs.iter().map(|p| p * p).sum::<f64>()
}

/// Exact L1 distance between the Poisson-binomial law of `probs` and the
/// Poisson law of equal mean, `sum_k |Pr[W=k] - e^-lam lam^k / k!|`.
///
/// The Poisson tail is truncated once its cumulative mass exceeds
/// `1 - 1e-12`; the result is always at most [`lecam_bound`].
pub fn pb_poisson_l1_distance(probs: &[f64]) -> Result<f64, DistributionError> {
    let dist = UserCountDistribution::poisson_binomial(probs.to_vec())?;
    let pb = poisson_binomial_pmf(probs);
    let lambda = dist.mean();
    let ln_lambda = lambda.ln();
    let mut total = 0.0;
    let mut cum_poisson = 0.0;
    let mut k = 0usize;
    loop {
        let pois = ((k as f64) * ln_lambda - lambda - log_gamma_unchecked(k as f64 + 1.0)).exp();
        cum_poisson += pois;
        let pbk = pb.get(k).copied().unwrap_or(0.0);
        total += (pbk - pois).abs();
        k += 1;
        if k > pb.len() && cum_poisson >= 1.0 - 1e-12 {
            break;
        }
    }
    Ok(total)
}

/// Result of a Laplace-transform order test between two counts.
///
/// `A <=_Lt B` for counting variables is the pointwise PGF ordering
/// `U_A(z) >= U_B(z)` on `[0, 1]`; `holds` is true when the minimum of
/// `U_A - U_B` over the grid stays above `-`[`ORDERING_TOL`], otherwise
/// `witness_z` points at the worst grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingVerdict {
    pub holds: bool,
    pub max_violation: f64,
    pub witness_z: Option<f64>,
}

/// Check `a <=_Lt b` on a uniform `grid_size`-point grid over `[0, 1]`.
pub fn lt_order_check(
    a: &UserCountDistribution,
    b: &UserCountDistribution,
    grid_size: usize,
) -> OrderingVerdict {
    let grid_size = grid_size.max(2);
    let mut min_diff = f64::INFINITY;
    let mut min_z = 0.0;
    for i in 0..grid_size {
        let z = i as f64 / (grid_size - 1) as f64;
        let diff = a.pgf(z) - b.pgf(z);
        if diff < min_diff {
            min_diff = diff;
            min_z = z;
        }
    }
    let holds = min_diff >= -ORDERING_TOL;
    OrderingVerdict {
        holds,
        max_violation: (-min_diff).max(0.0),
        witness_z: if holds { None } else { Some(min_z) },
    }
}

/// True iff `a` is majorized by `b`: equal sums and the sorted-descending
/// partial sums of `a` never exceed those of `b`.
pub fn majorization_less(a: &[f64], b: &[f64]) -> Result<bool, DistributionError> {
    if a.len() != b.len() {
        return Err(DistributionError::LengthMismatch(format!(
            "{} vs {}",
            a.len(),
            b.len()
        )));
    }
    let sum_a: f64 = a.iter().sum();
    let sum_b: f64 = b.iter().sum();
    if (sum_a - sum_b).abs() > 1e-12 * sum_a.abs().max(1.0) {
        return Err(DistributionError::SumMismatch(format!(
            "sum(a) = {sum_a}, sum(b) = {sum_b}"
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sb.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let mut pa = 0.0;
    let mut pb = 0.0;
    for i in 0..sa.len() {
        pa += sa[i];
        pb += sb[i];
        if pa > pb + ORDERING_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A one-parameter family of count distributions indexed by their mean; used
/// by the scaling-law and sweep machinery where the mean is the swept axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CountFamily {
    Deterministic,
    Binomial { p: f64 },
    #[serde(rename = "negbinomial")]
    NegBinomial { p: f64 },
    Poisson,
    /// Non-uniform base pattern of activity probabilities, replicated as many
    /// times as the target mean requires.
    #[serde(rename = "pb")]
    PoissonBinomial { pattern: Vec<f64> },
}

impl CountFamily {
    /// Instantiate the family member with mean `lambda`.
    ///
    /// Families with an integer structural parameter (trials, replications,
    /// deterministic count) require `lambda` to land on an integer multiple;
    /// a mean that misses by more than 1e-9 relative is rejected rather than
    /// silently rounded, since equal means across families is what the
    /// ordering theory needs.
    pub fn at_mean(&self, lambda: f64) -> Result<UserCountDistribution, DistributionError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(DistributionError::UnrepresentableMean {
                lambda,
                message: "mean must be positive and finite".into(),
            });
        }
        let round_to_integer = |value: f64, what: &str| -> Result<u64, DistributionError> {
            let rounded = value.round();
            if (value - rounded).abs() > 1e-9 * value.abs().max(1.0) || rounded < 1.0 {
                return Err(DistributionError::UnrepresentableMean {
                    lambda,
                    message: format!("{what} = {value} is not a positive integer"),
                });
            }
            Ok(rounded as u64)
        };
        match self {
            CountFamily::Deterministic => {
                Ok(UserCountDistribution::deterministic(round_to_integer(lambda, "n")?))
            }
            CountFamily::Binomial { p } => {
                let trials = round_to_integer(lambda / p, "lambda/p")?;
                UserCountDistribution::binomial(trials, *p)
            }
            CountFamily::NegBinomial { p } => {
                UserCountDistribution::neg_binomial(lambda * (1.0 - p) / p, *p)
            }
            CountFamily::Poisson => UserCountDistribution::poisson(lambda),
            CountFamily::PoissonBinomial { pattern } => {
                let pattern_sum: f64 = pattern.iter().sum();
                if !(pattern_sum > 0.0) {
                    return Err(invalid("pattern", "pattern must have positive sum".into()));
                }
                let copies = round_to_integer(lambda / pattern_sum, "lambda/sum(pattern)")?;
                let mut probs = Vec::with_capacity(pattern.len() * copies as usize);
                for _ in 0..copies {
                    probs.extend_from_slice(pattern);
                }
                UserCountDistribution::poisson_binomial(probs)
            }
        }
    }
}

/// One row of the scaling-law condition table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConditionRow {
    pub lambda: f64,
    /// `Pr[N = 0] * ln ln lambda`; must decay toward 0 along the grid.
    pub p0_loglog: f64,
    /// `var / mean^2`; must decay toward 0 along the grid.
    pub var_over_mean_sq: f64,
}

/// Evaluate the two scaling-law side conditions along an increasing grid of
/// means (`lambda >= 3` so `ln ln lambda > 0`).
pub fn scaling_conditions(
    family: &CountFamily,
    lambda_grid: &[f64],
) -> Result<Vec<ScalingConditionRow>, DistributionError> {
    if lambda_grid.is_empty() || lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("lambda_grid", "grid must be non-empty and increasing".into()));
    }
    if lambda_grid[0] < 3.0 {
        return Err(invalid("lambda_grid", "each mean must be >= 3".into()));
    }
    lambda_grid
        .iter()
        .map(|&lambda| {
            let dist = family.at_mean(lambda)?;
            let mean = dist.mean();
            Ok(ScalingConditionRow {
                lambda: mean,
                p0_loglog: dist.pmf(0) * mean.ln().ln(),
                var_over_mean_sq: dist.variance() / (mean * mean),
            })
        })
        .collect()
}
