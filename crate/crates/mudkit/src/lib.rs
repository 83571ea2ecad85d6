//! Performance analysis of a multi-user-diversity secondary link in which the
//! number of active users is itself random.
//!
//! A base station selects, per slot, the active user with the best Rayleigh
//! channel gain; a user is active only while its interference at the primary
//! receiver stays under a threshold, so the active-set size `N` follows a
//! counting distribution (deterministic, binomial, negative binomial, Poisson,
//! or Poisson-binomial). Everything downstream — outage, ergodic capacity,
//! average BER — is driven by the probability generating function of `N`
//! composed with the single-user gain CDF.
//!
//! The crate is organised as:
//!
//! * [`specfun`] — the special-function kernel (log-gamma, incomplete beta,
//!   Gauss 2F1 on `z <= 0`, Gaussian Q) behind the closed-form metrics;
//! * [`usercount`] — the user-count distribution family: PMF/PGF/moments,
//!   sampling, PGF bounds, Poisson-approximation distance, Laplace-transform
//!   ordering and majorization checks;
//! * [`channel`] — the unit-mean Rayleigh gain law and the selected-user gain
//!   law `F(x) = U_N(F_gain(x))`, atom at zero included;
//! * [`metrics`] — analytic outage/capacity/BER, scaling-law and
//!   Jensen-tightness diagnostics, Poisson-approximation capacity gaps,
//!   regular-variation exponent estimation;
//! * [`mcsim`] — a seeded, worker-count-independent Monte-Carlo engine that
//!   simulates the per-slot selection procedure and cross-checks everything.
//!
//! Capacities are natural-log (nats) throughout; the transmit rate used by the
//! outage threshold is in bits by default (see [`metrics::RateUnits`]).

// Validation sites use `!(x > 0.0)`-style predicates on purpose: they reject
// NaN along with the out-of-range values, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod mcsim;
pub mod metrics;
mod quad;
pub mod specfun;
pub mod usercount;

pub use channel::{FadingLaw, SelectedGainLaw};
pub use quad::QuadError;
pub use mcsim::{InterferenceTest, McReport, TrialConfig};
pub use metrics::{BerModel, MetricEstimate, Method, RateUnits, Scenario};
pub use usercount::{CountFamily, OrderingVerdict, UserCountDistribution};
