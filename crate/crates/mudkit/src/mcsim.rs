//! Seeded Monte-Carlo engine for the per-slot selection procedure.
//!
//! Each trial draws the active-user count (or runs the per-user interference
//! test), draws that many unit-mean Rayleigh gains, takes the max, and
//! records the instantaneous outage indicator, rate, and the analytic
//! conditional error rate `P_e(rho gain)` — averaging the analytic
//! conditional error instead of simulating bit decisions is what the average
//! BER is defined over, and it removes a large variance term.
//!
//! Reproducibility: trials are partitioned into fixed-size blocks and block
//! `b` draws from stream `b` of a counter-based generator seeded by the run
//! seed. Blocks are merged in index order, so the report is a deterministic
//! function of `(scenario, n_trials, seed)` no matter how many workers the
//! blocks were scheduled on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{FadingLaw, SelectedGainLaw};
use crate::metrics::{pe_at_zero, BerModel, MetricEstimate, RateUnits, Scenario};
use crate::usercount::UserCountDistribution;

const TRIALS_PER_BLOCK: u64 = 8192;
const GAIN_CDF_PROBES: usize = 20;

/// One Monte-Carlo run description. Results are a deterministic function of
/// `(scenario, n_trials, seed)` and independent of `workers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub scenario: Scenario,
    pub n_trials: u64,
    pub seed: u64,
    pub workers: usize,
    /// Mirror of the analytic `include_empty_atom` flag: when true, trials
    /// with no active user contribute `P_e(0)` to the BER average; when false
    /// they contribute zero, which estimates the continuous-part integral the
    /// closed forms compute.
    pub include_empty_atom: bool,
}

/// Point of the empirical selected-gain CDF at a fixed probe location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCdfPoint {
    pub x: f64,
    pub fraction: f64,
}

/// Monte-Carlo estimates with their sampling errors plus the empirical count
/// histogram (sums to `n_trials`) and a sampled gain CDF curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub outage: MetricEstimate,
    pub capacity: MetricEstimate,
    pub ber: MetricEstimate,
    pub count_histogram: Vec<u64>,
    pub gain_cdf: Vec<GainCdfPoint>,
    pub n_trials: u64,
    /// Per-user activation counts; present only in threshold mode.
    pub per_user_activity: Option<Vec<u64>>,
}

/// First-principles interference test for [`run_threshold_mode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InterferenceTest {
    /// Draw each user's interference gain and admit it while the gain is
    /// below `q_threshold` (success probability `1 - exp(-q)` per user).
    UniformThreshold { users: u64, q_threshold: f64 },
    /// Per-user activity probabilities; `0` and `1` entries are allowed here
    /// (unlike the PMF-backed distribution) since nothing is convolved.
    PerUserProbs { probs: Vec<f64> },
}

impl InterferenceTest {
    fn users(&self) -> usize {
        match self {
            InterferenceTest::UniformThreshold { users, .. } => *users as usize,
            InterferenceTest::PerUserProbs { probs } => probs.len(),
        }
    }

    /// The count distribution this mechanism induces, for probe placement.
    fn implied_count(&self) -> UserCountDistribution {
        match self {
            InterferenceTest::UniformThreshold { users, q_threshold } => {
                let p = -(-q_threshold).exp_m1();
                UserCountDistribution::Binomial {
                    trials: *users,
                    success: p,
                }
            }
            InterferenceTest::PerUserProbs { probs } => UserCountDistribution::PoissonBinomial {
                probs: probs.clone(),
            },
        }
    }
}

/// Prebuilt per-trial count draw.
enum CountDraw {
    Deterministic(u64),
    Binomial(rand_distr::Binomial),
    /// Gamma-Poisson mixture for real-valued failure counts.
    NegBinomial(rand_distr::Gamma<f64>),
    Poisson(rand_distr::Poisson<f64>),
    PoissonBinomial(Vec<f64>),
    Threshold(InterferenceTest),
}

impl CountDraw {
    fn from_dist(dist: &UserCountDistribution) -> Self {
        match dist {
            UserCountDistribution::Deterministic { n } => CountDraw::Deterministic(*n),
            UserCountDistribution::Binomial { trials, success } => CountDraw::Binomial(
                rand_distr::Binomial::new(*trials, *success).expect("validated parameters"),
            ),
            UserCountDistribution::NegBinomial { failures, success } => CountDraw::NegBinomial(
                rand_distr::Gamma::new(*failures, success / (1.0 - success))
                    .expect("validated parameters"),
            ),
            UserCountDistribution::Poisson { mean } => {
                CountDraw::Poisson(rand_distr::Poisson::new(*mean).expect("validated parameters"))
            }
            UserCountDistribution::PoissonBinomial { probs } => {
                CountDraw::PoissonBinomial(probs.clone())
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, activity: &mut Option<Vec<u64>>) -> u64 {
        match self {
            CountDraw::Deterministic(n) => *n,
            CountDraw::Binomial(d) => d.sample(rng),
            CountDraw::NegBinomial(gamma) => {
                let g = gamma.sample(rng);
                if g > 0.0 {
                    rand_distr::Poisson::new(g).expect("positive rate").sample(rng) as u64
                } else {
                    0
                }
            }
            CountDraw::Poisson(d) => d.sample(rng) as u64,
            CountDraw::PoissonBinomial(probs) => {
                probs.iter().filter(|&&p| rng.random::<f64>() < p).count() as u64
            }
            CountDraw::Threshold(test) => {
                let counts = activity.as_mut().expect("threshold mode tracks activity");
                let mut n = 0;
                match test {
                    InterferenceTest::UniformThreshold { users, q_threshold } => {
                        for slot in counts.iter_mut().take(*users as usize) {
                            let gain: f64 = rng.sample(rand_distr::Exp1);
                            if gain < *q_threshold {
                                *slot += 1;
                                n += 1;
                            }
                        }
                    }
                    InterferenceTest::PerUserProbs { probs } => {
                        for (slot, &p) in counts.iter_mut().zip(probs) {
                            if rng.random::<f64>() < p {
                                *slot += 1;
                                n += 1;
                            }
                        }
                    }
                }
                n
            }
        }
    }
}

struct BlockAccumulator {
    trials: u64,
    outage_count: u64,
    cap_sum: f64,
    cap_sq_sum: f64,
    ber_sum: f64,
    ber_sq_sum: f64,
    histogram: Vec<u64>,
    probe_counts: Vec<u64>,
    activity: Option<Vec<u64>>,
}

/// Run the selection simulation described by `config`.
pub fn run(config: &TrialConfig) -> McReport {
    let draw = CountDraw::from_dist(&config.scenario.count);
    run_with_draw(config, draw, &config.scenario.count, None)
}

/// Simulate the interference mechanism from first principles: per-user
/// activity draws each slot rather than sampling a precomputed count law.
/// `config.scenario.count` is ignored; the induced count is implied by `test`.
pub fn run_threshold_mode(test: &InterferenceTest, config: &TrialConfig) -> McReport {
    let implied = test.implied_count();
    run_with_draw(
        config,
        CountDraw::Threshold(test.clone()),
        &implied,
        Some(test.users()),
    )
}

fn run_with_draw(
    config: &TrialConfig,
    draw: CountDraw,
    count_for_probes: &UserCountDistribution,
    activity_slots: Option<usize>,
) -> McReport {
    assert!(config.n_trials >= 1, "n_trials must be at least 1");
    let s = &config.scenario;

    // Probe the empirical gain CDF at analytic quantiles of the selected law.
    let law = SelectedGainLaw::new(count_for_probes.clone(), FadingLaw::RayleighUnitMean);
    let probes: Vec<f64> = (1..=GAIN_CDF_PROBES)
        .map(|j| law.quantile(j as f64 / (GAIN_CDF_PROBES + 1) as f64))
        .collect();

    let rate_threshold_nats = match s.rate_units {
        RateUnits::Bits => s.rate_r * std::f64::consts::LN_2,
        RateUnits::Nats => s.rate_r,
    };
    let pe0 = if config.include_empty_atom {
        pe_at_zero(s.ber_model, s.ber_alpha)
    } else {
        0.0
    };

    let n_blocks = config.n_trials.div_ceil(TRIALS_PER_BLOCK);
    let run_block = |block: u64| -> BlockAccumulator {
        let start = block * TRIALS_PER_BLOCK;
        let trials = TRIALS_PER_BLOCK.min(config.n_trials - start);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(block);
        let mut acc = BlockAccumulator {
            trials,
            outage_count: 0,
            cap_sum: 0.0,
            cap_sq_sum: 0.0,
            ber_sum: 0.0,
            ber_sq_sum: 0.0,
            histogram: Vec::new(),
            probe_counts: vec![0; probes.len()],
            activity: activity_slots.map(|n| vec![0; n]),
        };
        for _ in 0..trials {
            let n = draw.draw(&mut rng, &mut acc.activity);
            if acc.histogram.len() <= n as usize {
                acc.histogram.resize(n as usize + 1, 0);
            }
            acc.histogram[n as usize] += 1;

            let mut best = 0.0_f64;
            for _ in 0..n {
                let gain: f64 = rng.sample(rand_distr::Exp1);
                if gain > best {
                    best = gain;
                }
            }

            let rate_nats = (s.snr_rho * best).ln_1p();
            if rate_nats < rate_threshold_nats {
                acc.outage_count += 1;
            }
            acc.cap_sum += rate_nats;
            acc.cap_sq_sum += rate_nats * rate_nats;

            let ber = if n == 0 {
                pe0
            } else {
                match s.ber_model {
                    BerModel::Exponential => s.ber_alpha * (-s.ber_eta * s.snr_rho * best).exp(),
                    BerModel::QForm => {
                        s.ber_alpha * crate::specfun::q_function((s.ber_eta * s.snr_rho * best).sqrt())
                    }
                }
            };
            acc.ber_sum += ber;
            acc.ber_sq_sum += ber * ber;

            for (count, &x) in acc.probe_counts.iter_mut().zip(&probes) {
                if best <= x {
                    *count += 1;
                }
            }
        }
        acc
    };

    let blocks: Vec<BlockAccumulator> = if config.workers.max(1) == 1 {
        (0..n_blocks).map(run_block).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .expect("thread pool");
        pool.install(|| (0..n_blocks).into_par_iter().map(run_block).collect())
    };

    // Merge in block order: the reduction is identical for any worker count.
    let n = config.n_trials;
    let nf = n as f64;
    let mut outage_count = 0u64;
    let mut cap_sum = 0.0;
    let mut cap_sq_sum = 0.0;
    let mut ber_sum = 0.0;
    let mut ber_sq_sum = 0.0;
    let mut histogram: Vec<u64> = Vec::new();
    let mut probe_counts = vec![0u64; probes.len()];
    let mut activity = activity_slots.map(|slots| vec![0u64; slots]);
    let mut merged_trials = 0u64;
    for b in &blocks {
        merged_trials += b.trials;
        outage_count += b.outage_count;
        cap_sum += b.cap_sum;
        cap_sq_sum += b.cap_sq_sum;
        ber_sum += b.ber_sum;
        ber_sq_sum += b.ber_sq_sum;
        if histogram.len() < b.histogram.len() {
            histogram.resize(b.histogram.len(), 0);
        }
        for (h, v) in histogram.iter_mut().zip(&b.histogram) {
            *h += v;
        }
        for (total, v) in probe_counts.iter_mut().zip(&b.probe_counts) {
            *total += v;
        }
        if let (Some(total), Some(part)) = (activity.as_mut(), b.activity.as_ref()) {
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
        }
    }
    debug_assert_eq!(merged_trials, n);

    let sample_std = |sum: f64, sq_sum: f64| -> f64 {
        if n < 2 {
            return 0.0;
        }
        ((sq_sum - sum * sum / nf).max(0.0) / (nf - 1.0)).sqrt()
    };
    let outage_hat = outage_count as f64 / nf;
    let outage_std = sample_std(outage_count as f64, outage_count as f64);

    McReport {
        outage: MetricEstimate::monte_carlo(outage_hat, outage_std / nf.sqrt()),
        capacity: MetricEstimate::monte_carlo(
            cap_sum / nf,
            sample_std(cap_sum, cap_sq_sum) / nf.sqrt(),
        ),
        ber: MetricEstimate::monte_carlo(
            ber_sum / nf,
            sample_std(ber_sum, ber_sq_sum) / nf.sqrt(),
        ),
        count_histogram: histogram,
        gain_cdf: probes
            .iter()
            .zip(&probe_counts)
            .map(|(&x, &c)| GainCdfPoint {
                x,
                fraction: c as f64 / nf,
            })
            .collect(),
        n_trials: n,
        per_user_activity: activity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    fn config(count: UserCountDistribution, n_trials: u64, seed: u64) -> TrialConfig {
        TrialConfig {
            scenario: Scenario {
                count,
                snr_rho: 10.0,
                rate_r: 1.0,
                ber_alpha: 0.5,
                ber_eta: 1.0,
                ber_model: BerModel::Exponential,
                rate_units: RateUnits::Bits,
            },
            n_trials,
            seed,
            workers: 1,
            include_empty_atom: false,
        }
    }

    fn bin(l: u64, p: f64) -> UserCountDistribution {
        UserCountDistribution::binomial(l, p).unwrap()
    }

    #[test]
    fn report_is_independent_of_worker_count() {
        let mut cfg = config(bin(8, 0.5), 50_000, 99);
        let one = run(&cfg);
        cfg.workers = 4;
        let four = run(&cfg);
        assert_eq!(one, four);
        cfg.workers = 7;
        assert_eq!(one, run(&cfg));
    }

    #[test]
    fn single_user_ber_matches_closed_value() {
        let cfg = config(UserCountDistribution::deterministic(1), 400_000, 5);
        let report = run(&cfg);
        let want = 0.5 / (1.0 + 10.0);
        let se = report.ber.std_err.unwrap();
        assert!(
            (report.ber.value - want).abs() < 4.0 * se,
            "{} vs {want} (se {se})",
            report.ber.value
        );
    }

    #[test]
    fn count_histogram_matches_pmf_within_four_sigma() {
        let count = bin(8, 0.5);
        let cfg = config(count.clone(), 300_000, 17);
        let report = run(&cfg);
        let n = cfg.n_trials as f64;
        for (k, &observed) in report.count_histogram.iter().enumerate() {
            let p = count.pmf(k as u64);
            let se = (p * (1.0 - p) / n).sqrt();
            assert!(
                (observed as f64 / n - p).abs() <= 4.0 * se + 1e-9,
                "k={k}: {observed} of {n}"
            );
        }
        assert_eq!(report.count_histogram.iter().sum::<u64>(), cfg.n_trials);
    }

    #[test]
    fn empirical_gain_cdf_tracks_the_analytic_law() {
        let count = bin(8, 0.5);
        let cfg = config(count.clone(), 1_000_000, 23);
        let report = run(&cfg);
        let law = SelectedGainLaw::new(count, FadingLaw::RayleighUnitMean);
        let n = cfg.n_trials as f64;
        let mut ks = 0.0_f64;
        for point in &report.gain_cdf {
            let want = law.cdf(point.x);
            let se = (want * (1.0 - want) / n).sqrt();
            assert!(
                (point.fraction - want).abs() <= 4.0 * se,
                "x={}: {} vs {want}",
                point.x,
                point.fraction
            );
            ks = ks.max((point.fraction - want).abs());
        }
        assert!(ks < 0.002, "KS distance {ks}");
    }

    #[test]
    fn outage_and_capacity_track_analytic_values() {
        let cfg = config(UserCountDistribution::poisson(4.0).unwrap(), 400_000, 31);
        let report = run(&cfg);
        let outage = metrics::outage_probability(&cfg.scenario);
        assert!(
            (report.outage.value - outage).abs() <= 4.0 * report.outage.std_err.unwrap(),
            "outage {} vs {outage}",
            report.outage.value
        );
        let cap = metrics::ergodic_capacity(&cfg.scenario, 1e-10).unwrap().value;
        assert!(
            (report.capacity.value - cap).abs() <= 4.0 * report.capacity.std_err.unwrap(),
            "capacity {} vs {cap}",
            report.capacity.value
        );
    }

    #[test]
    fn threshold_mode_matches_binomial_sampling_statistically() {
        let q = std::f64::consts::LN_2; // success probability 1/2
        let test = InterferenceTest::UniformThreshold {
            users: 8,
            q_threshold: q,
        };
        let cfg = config(bin(8, 0.5), 300_000, 41);
        let threshold = run_threshold_mode(&test, &cfg);
        let direct = run(&cfg);

        // per-user activity near 1/2
        let n = cfg.n_trials as f64;
        let se = (0.25 / n).sqrt();
        for &hits in threshold.per_user_activity.as_ref().unwrap() {
            assert!((hits as f64 / n - 0.5).abs() < 4.0 * se, "activity {hits}");
        }

        // two-sample agreement on the scalar metrics
        for (a, b) in [
            (&threshold.outage, &direct.outage),
            (&threshold.capacity, &direct.capacity),
            (&threshold.ber, &direct.ber),
        ] {
            let combined = (a.std_err.unwrap().powi(2) + b.std_err.unwrap().powi(2)).sqrt();
            assert!((a.value - b.value).abs() <= 4.0 * combined);
        }
    }

    #[test]
    fn threshold_mode_with_degenerate_probs_is_deterministic() {
        let test = InterferenceTest::PerUserProbs {
            probs: vec![1.0, 0.0, 1.0],
        };
        let cfg = config(bin(2, 0.5), 10_000, 3);
        let report = run_threshold_mode(&test, &cfg);
        assert_eq!(report.count_histogram.len(), 3);
        assert_eq!(report.count_histogram[2], cfg.n_trials);
        let activity = report.per_user_activity.unwrap();
        assert_eq!(activity, vec![cfg.n_trials, 0, cfg.n_trials]);
    }

    #[test]
    fn threshold_mode_per_user_probs_match_dp_pmf() {
        let probs = vec![0.9, 0.1];
        let test = InterferenceTest::PerUserProbs { probs: probs.clone() };
        let cfg = config(bin(2, 0.5), 300_000, 53);
        let report = run_threshold_mode(&test, &cfg);
        let pmf = crate::usercount::poisson_binomial_pmf(&probs);
        let n = cfg.n_trials as f64;
        for (k, &want) in pmf.iter().enumerate() {
            let got = report.count_histogram.get(k).copied().unwrap_or(0) as f64 / n;
            let se = (want * (1.0 - want) / n).sqrt();
            assert!((got - want).abs() <= 4.0 * se, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn empty_atom_flag_shifts_ber_by_the_atom_mass() {
        let count = UserCountDistribution::poisson(0.5).unwrap();
        let mut cfg = config(count, 200_000, 61);
        let without = run(&cfg);
        cfg.include_empty_atom = true;
        let with = run(&cfg);
        // same seed: identical trials, so the difference is exactly the atom
        // mass times P_e(0) = alpha
        let zero_trials = without.count_histogram[0] as f64;
        let shift = zero_trials / cfg.n_trials as f64 * cfg.scenario.ber_alpha;
        assert!((with.ber.value - without.ber.value - shift).abs() < 1e-12);
    }
}
