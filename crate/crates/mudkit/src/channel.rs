//! Fading laws and the selected-user gain law.
//!
//! The selected user's gain is the maximum over a random number of i.i.d.
//! unit-mean Rayleigh gains, so its CDF is the PGF composition
//! `F*(x) = U_N(F(x))`. When no user passes the interference test the slot
//! carries nothing; that is the atom `Pr[N = 0]` the law places at zero, and
//! it is surfaced explicitly rather than left buried in the CDF.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::usercount::UserCountDistribution;

#[derive(Debug, Clone, Error)]
pub enum ChannelError {
    #[error("domain error: {what}")]
    Domain { what: String },
}

/// Single-user channel gain law. Only the unit-mean Rayleigh gain (unit
/// exponential) is shipped: every closed form downstream assumes
/// `F(x) = 1 - exp(-x)`, and pretending otherwise would be dishonest. The
/// type exists so the quadrature paths stay generic over `cdf`/`pdf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingLaw {
    #[default]
    #[serde(rename = "rayleigh")]
    RayleighUnitMean,
}

impl FadingLaw {
    /// Gain CDF, `F(x) = 1 - exp(-x)` for `x >= 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        -(-x).exp_m1()
    }

    /// Gain density `f(x) = exp(-x)`.
    pub fn pdf(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        (-x).exp()
    }

    /// Quantile `F^-1(q) = -ln(1 - q)`.
    pub fn quantile(&self, q: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&q));
        -(-q).ln_1p()
    }
}

/// CDF of a single unit-mean Rayleigh channel gain.
pub fn rayleigh_gain_cdf(x: f64) -> Result<f64, ChannelError> {
    if !(x >= 0.0) {
        return Err(ChannelError::Domain {
            what: format!("gain must be non-negative, got {x}"),
        });
    }
    Ok(FadingLaw::RayleighUnitMean.cdf(x))
}

/// Per-user interference-test success probability for threshold `Q`:
/// `p = F(Q) = 1 - exp(-Q)` under the unit-mean Rayleigh interference channel.
pub fn success_prob(q_threshold: f64) -> Result<f64, ChannelError> {
    if !(q_threshold >= 0.0) {
        return Err(ChannelError::Domain {
            what: format!("interference threshold must be non-negative, got {q_threshold}"),
        });
    }
    Ok(FadingLaw::RayleighUnitMean.cdf(q_threshold))
}

/// Law of the selected (best active) user's gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedGainLaw {
    pub count: UserCountDistribution,
    #[serde(default)]
    pub fading: FadingLaw,
}

impl SelectedGainLaw {
    pub fn new(count: UserCountDistribution, fading: FadingLaw) -> Self {
        Self { count, fading }
    }

    /// `F*(x) = U_N(F(x))`; equals the atom `Pr[N = 0]` at `x = 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        self.count.pgf(self.fading.cdf(x))
    }

    /// Density of the continuous part of the selected gain,
    /// `U'_N(F(x)) f(x)`; the atom at zero is excluded and reported by
    /// [`Self::atom_at_zero`].
    ///
    /// The PGF derivative has a closed form for every variant, which for the
    /// binomial and negative binomial counts reduces to the familiar
    /// `lam e^-x (1 - p e^-x)^(lam/p - 1)` and
    /// `r u e^-x (1 + u e^-x)^(-1-r)` densities.
    pub fn pdf(&self, x: f64) -> f64 {
        debug_assert!(x > 0.0);
        let y = (-x).exp(); // 1 - F(x), exact
        self.count.pgf_prime_at_one_minus(y) * y
    }

    /// `Pr[selected gain = 0] = Pr[N = 0] = U_N(0)`.
    pub fn atom_at_zero(&self) -> f64 {
        self.count.pgf(0.0)
    }

    /// Quantile of the full law (atom included) by bisection on the CDF.
    /// For `q` at or below the atom the quantile is 0.
    pub fn quantile(&self, q: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&q));
        if q <= self.atom_at_zero() {
            return 0.0;
        }
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        while self.cdf(hi) < q {
            hi *= 2.0;
            if hi > 1e9 {
                return hi;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}
