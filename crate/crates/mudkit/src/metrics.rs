//! Analytic performance metrics and their diagnostics.
//!
//! Outage is an exact PGF evaluation; ergodic capacity and the numeric BER
//! are adaptive quadratures of PGF compositions after the `y = exp(-x)`
//! change of variables; the closed-form BERs go through the incomplete beta
//! (binomial counts) and Gauss 2F1 (negative binomial counts). The remaining
//! operations are desk-scale checks of the asymptotic claims: the capacity
//! scaling law, Jensen gaps and their large-mean tightness, the
//! Poisson-approximation capacity gap, and the regular-variation exponent of
//! the average error rate.
//!
//! Units: capacity is in nats (natural log). The transmit rate `R` enters
//! only through the outage threshold and is interpreted per
//! [`Scenario::rate_units`] — bits by default, matching the `2^R - 1`
//! threshold form; the natural-log reading is available as [`RateUnits::Nats`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{self, QuadError, MAX_SEGMENTS};
use crate::specfun::{self, SpecFunError};
use crate::usercount::{
    real_power_complement, real_power_prime_at_one_minus, CountFamily, DistributionError,
    UserCountDistribution,
};

#[derive(Debug, Clone, Error)]
pub enum MetricsError {
    #[error("invalid `{field}`: {message}")]
    InvalidArgument { field: &'static str, message: String },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

fn invalid(field: &'static str, message: String) -> MetricsError {
    MetricsError::InvalidArgument { field, message }
}

/// Instantaneous error-rate model `P_e(v)` at receive SNR `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BerModel {
    /// `alpha * exp(-eta v)`
    #[default]
    Exponential,
    /// `alpha * Q(sqrt(eta v))`
    #[serde(rename = "qform")]
    QForm,
}

/// Unit in which the transmit rate `R` is expressed for the outage threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateUnits {
    /// threshold `(2^R - 1) / rho`
    #[default]
    Bits,
    /// threshold `(e^R - 1) / rho`
    Nats,
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub count: UserCountDistribution,
    /// Linear average SNR.
    #[serde(rename = "rho")]
    pub snr_rho: f64,
    /// Transmit rate for the outage threshold; unit per `rate_units`.
    #[serde(rename = "rate")]
    pub rate_r: f64,
    #[serde(rename = "alpha")]
    pub ber_alpha: f64,
    #[serde(rename = "eta")]
    pub ber_eta: f64,
    #[serde(default)]
    pub ber_model: BerModel,
    #[serde(default)]
    pub rate_units: RateUnits,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), MetricsError> {
        self.count.validate()?;
        if !(self.snr_rho > 0.0 && self.snr_rho.is_finite()) {
            return Err(invalid("rho", format!("must be positive, got {}", self.snr_rho)));
        }
        if !(self.rate_r > 0.0 && self.rate_r.is_finite()) {
            return Err(invalid("rate", format!("must be positive, got {}", self.rate_r)));
        }
        if !(self.ber_alpha > 0.0 && self.ber_alpha <= 1.0) {
            return Err(invalid("alpha", format!("must be in (0, 1], got {}", self.ber_alpha)));
        }
        if !(self.ber_eta > 0.0 && self.ber_eta.is_finite()) {
            return Err(invalid("eta", format!("must be positive, got {}", self.ber_eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// A metric value with its computation route; `std_err` is present exactly
/// when the method is Monte-Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub value: f64,
    pub method: Method,
    pub std_err: Option<f64>,
}

impl MetricEstimate {
    pub fn quadrature(value: f64) -> Self {
        Self {
            value,
            method: Method::Quadrature,
            std_err: None,
        }
    }

    pub fn closed_form(value: f64) -> Self {
        Self {
            value,
            method: Method::ClosedForm,
            std_err: None,
        }
    }

    pub fn monte_carlo(value: f64, std_err: f64) -> Self {
        Self {
            value,
            method: Method::MonteCarlo,
            std_err: Some(std_err),
        }
    }
}

/// Default relative tolerance for all metric quadratures.
pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Outage probability `U_N(F(threshold))` with
/// `threshold = (2^R - 1)/rho` (bits) or `(e^R - 1)/rho` (nats).
pub fn outage_probability(s: &Scenario) -> f64 {
    let threshold = match s.rate_units {
        RateUnits::Bits => (s.rate_r * std::f64::consts::LN_2).exp_m1() / s.snr_rho,
        RateUnits::Nats => s.rate_r.exp_m1() / s.snr_rho,
    };
    s.count.pgf(-(-threshold).exp_m1())
}

/// Shared capacity quadrature: `rho * int_0^inf (1 - U(F(x))) / (1 + rho x) dx`
/// after `y = exp(-x)`, i.e. `int_0^1 omU(y) rho / (y (1 - rho ln y)) dy`,
/// where `omU(y) = 1 - U(1 - y)`.
///
/// The integrand tends to zero only logarithmically as `y -> 0`, so the lower
/// limit is cut where the remaining mass (bounded by `mean * y_min`) is three
/// decades below the requested tolerance.
fn capacity_integral(
    rho: f64,
    mean: f64,
    om_u: impl Fn(f64) -> f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    let y_min = (rel_tol * 1e-3 / mean.max(1.0)).clamp(1e-300, 1e-6);
    let mut points = vec![y_min];
    let mut exp10 = y_min.log10().floor() as i32 + 1;
    while exp10 <= -1 {
        points.push(10f64.powi(exp10));
        exp10 += 1;
    }
    points.push(0.5);
    points.push(1.0);
    quad::integrate_segments(
        |y| om_u(y) * rho / (y * (1.0 - rho * y.ln())),
        &points,
        rel_tol,
        0.0,
        MAX_SEGMENTS,
    )
}

/// Ergodic capacity (nats) averaged over fading and the user distribution.
pub fn ergodic_capacity(s: &Scenario, rel_tol: f64) -> Result<MetricEstimate, MetricsError> {
    check_tol(rel_tol)?;
    let value = capacity_integral(
        s.snr_rho,
        s.count.mean(),
        |y| s.count.pgf_complement(y),
        rel_tol,
    )?;
    Ok(MetricEstimate::quadrature(value))
}

/// `C(rho, lam)` at real-valued `lam`, defined by the continuous extension
/// `F^lam` of the selected-gain CDF. This is the deterministic-count capacity
/// when `lam` is an integer, bit for bit.
pub fn capacity_at_real_n(rho: f64, lambda: f64, rel_tol: f64) -> Result<f64, MetricsError> {
    check_tol(rel_tol)?;
    if !(lambda >= 0.0) {
        return Err(invalid("lambda", format!("must be non-negative, got {lambda}")));
    }
    Ok(capacity_integral(
        rho,
        lambda,
        |y| real_power_complement(lambda, y),
        rel_tol,
    )?)
}

/// One row of the capacity scaling-law table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingGapRow {
    pub lambda: f64,
    pub capacity: f64,
    /// `capacity - ln(1 + rho ln lambda)`
    pub gap: f64,
    /// `gap * sqrt(ln lambda)`; stays bounded when the scaling law holds.
    pub normalized: f64,
}

/// Capacity against the `ln(1 + rho ln lam)` asymptote along a mean grid.
pub fn capacity_scaling_gap(
    family: &CountFamily,
    rho: f64,
    lambda_grid: &[f64],
    rel_tol: f64,
) -> Result<Vec<ScalingGapRow>, MetricsError> {
    check_tol(rel_tol)?;
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
            let capacity =
                capacity_integral(rho, mean, |y| dist.pgf_complement(y), rel_tol)?;
            let gap = capacity - (1.0 + rho * mean.ln()).ln();
            Ok(ScalingGapRow {
                lambda: mean,
                capacity,
                gap,
                normalized: gap * mean.ln().sqrt(),
            })
        })
        .collect()
}

/// `P_e(0)` for the chosen model: `alpha` (exponential) or `alpha/2` (Q-form).
pub fn pe_at_zero(model: BerModel, alpha: f64) -> f64 {
    match model {
        BerModel::Exponential => alpha,
        BerModel::QForm => 0.5 * alpha,
    }
}

/// Average BER over the continuous part of the selected-gain law,
/// `int_0^inf P_e(rho x) U'(F(x)) f(x) dx`, with `u_prime(y) = U'(1 - y)`.
///
/// Exponential model: `y = exp(-x)` turns it into
/// `int_0^1 alpha y^(eta rho) u_prime(y) dy`, smooth on all of `[0, 1]`.
/// Q-form: `x = t^2` removes the square-root kink of `Q(sqrt(eta rho x))`
/// at the origin; the upper limit is cut where the density bound
/// `mean * exp(-x)` leaves only mass far below any achievable value.
fn ber_continuous(
    model: BerModel,
    alpha: f64,
    eta: f64,
    rho: f64,
    mean: f64,
    u_prime: impl Fn(f64) -> f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    match model {
        BerModel::Exponential => {
            let exponent = eta * rho;
            quad::integrate_segments(
                |y| alpha * y.powf(exponent) * u_prime(y),
                &[0.0, 1e-3, 1e-2, 0.1, 0.5, 1.0],
                rel_tol,
                0.0,
                MAX_SEGMENTS,
            )
        }
        BerModel::QForm => {
            let t_max = (60.0 + (1.0 + mean).ln()).sqrt();
            let points = [0.0, 0.1 * t_max, 0.3 * t_max, 0.6 * t_max, t_max];
            quad::integrate_segments(
                |t| {
                    let x = t * t;
                    let y = (-x).exp();
                    alpha * specfun::q_function((eta * rho * x).sqrt()) * u_prime(y) * y * 2.0 * t
                },
                &points,
                rel_tol,
                0.0,
                MAX_SEGMENTS,
            )
        }
    }
}

/// Average BER by quadrature against the selected-gain density.
///
/// `include_empty_atom` adds `P_e(0) * Pr[N = 0]`, the contribution of slots
/// with no active user. The closed forms integrate only the continuous
/// density (total mass `1 - Pr[N = 0]`), so cross-checks against
/// [`ber_closed_binomial`] / [`ber_closed_negbinomial`] use `false`.
pub fn ber_numeric(
    s: &Scenario,
    rel_tol: f64,
    include_empty_atom: bool,
) -> Result<MetricEstimate, MetricsError> {
    check_tol(rel_tol)?;
    let continuous = ber_continuous(
        s.ber_model,
        s.ber_alpha,
        s.ber_eta,
        s.snr_rho,
        s.count.mean(),
        |y| s.count.pgf_prime_at_one_minus(y),
        rel_tol,
    )?;
    let atom = if include_empty_atom {
        s.count.pgf(0.0) * pe_at_zero(s.ber_model, s.ber_alpha)
    } else {
        0.0
    };
    Ok(MetricEstimate::quadrature(continuous + atom))
}

/// `P_e-bar(rho, lam)` at real-valued `lam` (density `lam F^(lam-1) f`, no
/// atom); the deterministic-count BER when `lam` is an integer.
pub fn ber_at_real_n(
    lambda: f64,
    alpha: f64,
    eta: f64,
    rho: f64,
    model: BerModel,
    rel_tol: f64,
) -> Result<f64, MetricsError> {
    check_tol(rel_tol)?;
    if !(lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    Ok(ber_continuous(
        model,
        alpha,
        eta,
        rho,
        lambda,
        |y| real_power_prime_at_one_minus(lambda, y),
        rel_tol,
    )?)
}

/// Closed-form average BER for a binomial count under the exponential error
/// model: `alpha p^-(1+eta rho) lam beta_inc(p, 1 + eta rho, lam/p)`.
///
/// Continuous part only; the `N = 0` atom contributes `alpha Pr[N = 0]` on
/// top and is deliberately excluded here (see [`ber_numeric`]).
pub fn ber_closed_binomial(
    lambda: f64,
    p: f64,
    alpha: f64,
    eta: f64,
    rho: f64,
) -> Result<f64, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid("p", format!("must be in (0, 1], got {p}")));
    }
    if !(lambda > 0.0 && lambda / p >= 1.0 - 1e-9) {
        return Err(invalid(
            "lambda",
            format!("needs lambda/p >= 1 trial, got lambda={lambda}, p={p}"),
        ));
    }
    let a = 1.0 + eta * rho;
    let value = alpha * (-a * p.ln()).exp() * lambda * specfun::incomplete_beta(p, a, lambda / p)?;
    Ok(value)
}

/// Closed-form average BER for a negative binomial count under the
/// exponential error model:
/// `(r u alpha / (1 + eta rho)) 2F1(1 + r, 1 + eta rho; 2 + eta rho; -u)`
/// with `u = p / (1 - p)`. Continuous part only, as above.
pub fn ber_closed_negbinomial(
    r: f64,
    p: f64,
    alpha: f64,
    eta: f64,
    rho: f64,
) -> Result<f64, MetricsError> {
    if !(r > 0.0) {
        return Err(invalid("r", format!("must be positive, got {r}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("must be in (0, 1), got {p}")));
    }
    let u = p / (1.0 - p);
    let b = 1.0 + eta * rho;
    let f = specfun::gauss_2f1(1.0 + r, b, 1.0 + b, -u)?;
    Ok(r * u * alpha / b * f)
}

/// Jensen penalties of count randomization.
#[derive(Debug, Clone, PartialEq)]
pub struct JensenGaps {
    /// `C(rho, lam) - E_N[C(rho, N)] >= 0`
    pub cap_gap: f64,
    /// `E_N[P_e-bar(rho, N)] - P_e-bar(rho, lam) >= 0`
    pub ber_gap: f64,
}

/// Both Jensen gaps for a scenario. The BER expectation includes the `N = 0`
/// term `P_e(0) Pr[N = 0]` — Jensen's inequality is over all of the count's
/// support, and dropping the atom could flip the sign.
pub fn jensen_gaps(s: &Scenario, rel_tol: f64) -> Result<JensenGaps, MetricsError> {
    let lambda = s.count.mean();
    if !(lambda > 0.0) {
        return Err(invalid("count", "jensen gaps need a positive mean count".into()));
    }
    let cap_at_mean = capacity_at_real_n(s.snr_rho, lambda, rel_tol)?;
    let cap_mixed = ergodic_capacity(s, rel_tol)?.value;
    let ber_mixed = ber_numeric(s, rel_tol, true)?.value;
    let ber_at_mean =
        ber_at_real_n(lambda, s.ber_alpha, s.ber_eta, s.snr_rho, s.ber_model, rel_tol)?;
    Ok(JensenGaps {
        cap_gap: cap_at_mean - cap_mixed,
        ber_gap: ber_mixed - ber_at_mean,
    })
}

/// One row of the Jensen-tightness table.
#[derive(Debug, Clone, PartialEq)]
pub struct TightnessRow {
    pub lambda: f64,
    /// `(E_N[P_e-bar] - P_e-bar(rho, lam)) * lam / P_e-bar(rho, lam)`
    pub normalized_residual: f64,
}

/// Normalized Jensen residual of the average BER along a mean grid. For a
/// Poisson count the residual stays in a fixed band as the mean grows (the
/// Jensen penalty is `O(P_e-bar / lam)`); for the deterministic family it is
/// identically zero.
pub fn jensen_tightness_diagnostic(
    family: &CountFamily,
    rho: f64,
    alpha: f64,
    eta: f64,
    model: BerModel,
    lambda_grid: &[f64],
    rel_tol: f64,
) -> Result<Vec<TightnessRow>, MetricsError> {
    check_tol(rel_tol)?;
    if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| l < 1.0) {
        return Err(invalid("lambda_grid", "grid entries must be >= 1".into()));
    }
    lambda_grid
        .iter()
        .map(|&lambda| {
            let dist = family.at_mean(lambda)?;
            let mean = dist.mean();
            let expected = ber_continuous(
                model,
                alpha,
                eta,
                rho,
                mean,
                |y| dist.pgf_prime_at_one_minus(y),
                rel_tol,
            )? + dist.pgf(0.0) * pe_at_zero(model, alpha);
            let at_mean = ber_at_real_n(mean, alpha, eta, rho, model, rel_tol)?;
            Ok(TightnessRow {
                lambda: mean,
                normalized_residual: (expected - at_mean) * mean / at_mean,
            })
        })
        .collect()
}

/// Capacity gap between a Poisson-binomial count and its equal-mean Poisson
/// approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct PbPoissonGap {
    /// `|E_W[C] - E_N[C]|`, both by quadrature.
    pub gap: f64,
    /// Trend witness `ln(ln L) * sum p_i^2`; NaN for `L < 3` where the
    /// iterated log is undefined. Reported for trend comparison only — the
    /// theory hides the constant.
    pub bound_witness: f64,
}

pub fn capacity_gap_pb_poisson(
    probs: &[f64],
    rho: f64,
    rel_tol: f64,
) -> Result<PbPoissonGap, MetricsError> {
    check_tol(rel_tol)?;
    let pb = UserCountDistribution::poisson_binomial(probs.to_vec())?;
    let lambda = pb.mean();
    let poisson = UserCountDistribution::poisson(lambda)?;
    let cap_pb = capacity_integral(rho, lambda, |y| pb.pgf_complement(y), rel_tol)?;
    let cap_poisson = capacity_integral(rho, lambda, |y| poisson.pgf_complement(y), rel_tol)?;
    let l = probs.len() as f64;
    let bound_witness = if probs.len() >= 3 {
        l.ln().ln() * probs.iter().map(|p| p * p).sum::<f64>()
    } else {
        f64::NAN
    };
    Ok(PbPoissonGap {
        gap: (cap_pb - cap_poisson).abs(),
        bound_witness,
    })
}

/// One regular-variation estimate at scale `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegVarRow {
    pub u: f64,
    pub estimate: f64,
}

/// `ln t(u)` up to an additive constant, where
/// `t(u) = rho B(rho F^-1(e^-u)) e^-u / f(F^-1(e^-u))` is the
/// Laplace-transform density whose variation exponent at `u = 0` governs the
/// tail of the average BER in the user count. Evaluated entirely in log space
/// so small `u` (large exponents) cannot underflow.
fn ln_t(model: BerModel, eta_rho: f64, u: f64) -> f64 {
    let one_minus = -(-u).exp_m1(); // 1 - e^-u
    match model {
        BerModel::Exponential => (eta_rho - 1.0) * one_minus.ln() - u,
        BerModel::QForm => {
            (0.5 * eta_rho - 1.0) * one_minus.ln() - u - 0.5 * (-one_minus.ln()).ln()
        }
    }
}

/// Raw exponent estimates `log_kappa(t(kappa u) / t(u))` along the grid.
pub fn regvar_scan(
    model: BerModel,
    rho: f64,
    eta: f64,
    u_grid: &[f64],
    kappa: f64,
) -> Result<Vec<RegVarRow>, MetricsError> {
    if !(kappa > 0.0 && kappa.is_finite() && kappa != 1.0) {
        return Err(invalid("kappa", format!("must be positive and != 1, got {kappa}")));
    }
    if u_grid.is_empty()
        || u_grid.iter().any(|&u| !(u > 0.0 && u <= 0.1))
        || u_grid.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(invalid(
            "u_grid",
            "grid must be strictly decreasing within (0, 0.1]".into(),
        ));
    }
    let eta_rho = eta * rho;
    Ok(u_grid
        .iter()
        .map(|&u| RegVarRow {
            u,
            estimate: (ln_t(model, eta_rho, kappa * u) - ln_t(model, eta_rho, u)) / kappa.ln(),
        })
        .collect())
}

/// Variation exponent of `t(u)` at `u = 0`, extrapolated to the limit.
///
/// The raw estimate at scale `u` carries an `O(1 / ln(1/u))` bias from the
/// slowly varying factors (the Q-form model has one), so the two smallest
/// grid points are Richardson-extrapolated in `1 / ln(1/u)`. Converges to
/// `eta rho - 1` (exponential model) and `eta rho / 2 - 1` (Q-form).
pub fn regvar_exponent(
    model: BerModel,
    rho: f64,
    eta: f64,
    u_grid: &[f64],
    kappa: f64,
) -> Result<f64, MetricsError> {
    let rows = regvar_scan(model, rho, eta, u_grid, kappa)?;
    let n = rows.len();
    if n == 1 {
        return Ok(rows[0].estimate);
    }
    let x_last = 1.0 / (1.0 / rows[n - 1].u).ln();
    let x_prev = 1.0 / (1.0 / rows[n - 2].u).ln();
    let (e_last, e_prev) = (rows[n - 1].estimate, rows[n - 2].estimate);
    Ok(e_last - x_last * (e_last - e_prev) / (x_last - x_prev))
}

fn check_tol(rel_tol: f64) -> Result<(), MetricsError> {
    if !(rel_tol > 0.0 && rel_tol.is_finite()) {
        return Err(invalid("rel_tol", format!("must be positive, got {rel_tol}")));
    }
    Ok(())
}
