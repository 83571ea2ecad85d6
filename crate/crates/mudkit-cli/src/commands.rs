//! Subcommand implementations. Every computation here goes through the
//! library API; the CLI only resolves inputs, schedules grid points, and
//! formats CSV.

use std::path::Path;

use rayon::prelude::*;

use mudkit::mcsim::{self, InterferenceTest, TrialConfig};
use mudkit::metrics::{
    ber_closed_binomial, ber_closed_negbinomial, ber_numeric, capacity_gap_pb_poisson,
    capacity_scaling_gap, ergodic_capacity, jensen_gaps, jensen_tightness_diagnostic,
    outage_probability, regvar_exponent, regvar_scan, BerModel, MetricsError, Scenario,
};
use mudkit::usercount::{
    lecam_bound, lt_order_check, pb_poisson_l1_distance, scaling_conditions, CountFamily,
    UserCountDistribution,
};
use mudkit::QuadError;

use crate::output::{int, num, CsvTable};
use crate::scenario::{MethodSel, MetricKind, ScenarioDoc, SweepSpec, SweepVar};
use crate::CliError;

/// Map a library error to the CLI exit classes, tagging the offending grid
/// point so non-convergence reports say where it happened.
fn numeric_context(err: MetricsError, at: &str) -> CliError {
    match err {
        MetricsError::Quadrature(QuadError::NonConvergence { .. }) => {
            CliError::Numeric(format!("{at}: {err}"))
        }
        MetricsError::SpecFun(mudkit::specfun::SpecFunError::NoConvergence { .. }) => {
            CliError::Numeric(format!("{at}: {err}"))
        }
        other => CliError::Spec(format!("{at}: {other}")),
    }
}

pub struct SweepOptions {
    pub metric: Option<MetricKind>,
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub include_empty_atom: bool,
    pub tol: f64,
}

pub fn sweep(doc: &ScenarioDoc, opts: &SweepOptions, out: &Path) -> Result<(), CliError> {
    let mut spec: SweepSpec = doc.require_sweep()?;
    if let Some(metric) = opts.metric {
        spec.metric = metric;
    }
    let base = doc.require_scenario()?;
    validate_method_combination(&spec, &base)?;
    let grid = spec.grid.points()?;

    // one task per (distribution, grid point), emitted in this order
    let tasks: Vec<(usize, usize)> = (0..spec.distributions.len())
        .flat_map(|d| (0..grid.len()).map(move |g| (d, g)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let results: Vec<Result<Vec<String>, CliError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(d, g)| sweep_row(&spec, &base, opts, d, &grid, g))
            .collect()
    });

    let mut table = CsvTable::new(vec![
        "distribution",
        spec.sweep_var.column(),
        "closed_form",
        "quadrature",
        "monte_carlo",
        "mc_std_err",
    ]);
    for row in results {
        table.push(row?);
    }
    table.write(out)
}

fn validate_method_combination(spec: &SweepSpec, base: &Scenario) -> Result<(), CliError> {
    match (spec.metric, spec.method) {
        (MetricKind::Outage, MethodSel::Quadrature) => Err(CliError::Spec(
            "metric `outage` is exact; method `quadrature` does not apply".into(),
        )),
        (MetricKind::Capacity, MethodSel::ClosedForm) => Err(CliError::Spec(
            "metric `capacity` has no closed form; use `quadrature` or `monte_carlo`".into(),
        )),
        (MetricKind::Ber, MethodSel::ClosedForm) if base.ber_model == BerModel::QForm => {
            Err(CliError::Spec(
                "the qform error model has no closed-form BER; use `quadrature`".into(),
            ))
        }
        _ => Ok(()),
    }
}

fn sweep_row(
    spec: &SweepSpec,
    base: &Scenario,
    opts: &SweepOptions,
    dist_idx: usize,
    grid: &[f64],
    grid_idx: usize,
) -> Result<Vec<String>, CliError> {
    let template = &spec.distributions[dist_idx];
    let value = grid[grid_idx];
    let label = template.label(spec.sweep_var);
    let at = format!("{label} at {}={value}", spec.sweep_var.column());

    let mut s = base.clone();
    match spec.sweep_var {
        SweepVar::Rho => s.snr_rho = value,
        SweepVar::Rate => s.rate_r = value,
        _ => {}
    }
    s.count = template.at_sweep_point(spec.sweep_var, value)?;
    s.validate().map_err(|e| CliError::Spec(format!("{at}: {e}")))?;

    let mut closed = String::new();
    let mut quadrature = String::new();
    let mut monte_carlo = String::new();
    let mut mc_std_err = String::new();

    if spec.method.wants_closed() {
        if let Some(v) = closed_form_value(spec.metric, &s).map_err(|e| numeric_context(e, &at))? {
            closed = num(v);
        }
    }
    if spec.method.wants_quadrature() {
        match spec.metric {
            MetricKind::Outage => {}
            MetricKind::Capacity => {
                quadrature = num(
                    ergodic_capacity(&s, opts.tol)
                        .map_err(|e| numeric_context(e, &at))?
                        .value,
                );
            }
            MetricKind::Ber => {
                quadrature = num(
                    ber_numeric(&s, opts.tol, opts.include_empty_atom)
                        .map_err(|e| numeric_context(e, &at))?
                        .value,
                );
            }
        }
    }
    if spec.method.wants_monte_carlo() {
        let config = TrialConfig {
            scenario: s.clone(),
            n_trials: opts.trials,
            seed: opts.seed.wrapping_add((dist_idx * grid.len() + grid_idx) as u64),
            workers: 1, // grid points are already parallel
            include_empty_atom: opts.include_empty_atom,
        };
        let report = mcsim::run(&config);
        let est = match spec.metric {
            MetricKind::Outage => report.outage,
            MetricKind::Capacity => report.capacity,
            MetricKind::Ber => report.ber,
        };
        monte_carlo = num(est.value);
        mc_std_err = num(est.std_err.unwrap_or(0.0));
    }

    Ok(vec![
        label,
        num(value),
        closed,
        quadrature,
        monte_carlo,
        mc_std_err,
    ])
}

/// Closed-form value where one exists for this metric/count pair.
fn closed_form_value(metric: MetricKind, s: &Scenario) -> Result<Option<f64>, MetricsError> {
    match metric {
        MetricKind::Outage => Ok(Some(outage_probability(s))),
        MetricKind::Capacity => Ok(None),
        MetricKind::Ber => {
            if s.ber_model == BerModel::QForm {
                return Ok(None);
            }
            match &s.count {
                UserCountDistribution::Binomial { trials, success } => Ok(Some(
                    ber_closed_binomial(
                        *trials as f64 * success,
                        *success,
                        s.ber_alpha,
                        s.ber_eta,
                        s.snr_rho,
                    )?,
                )),
                UserCountDistribution::NegBinomial { failures, success } => Ok(Some(
                    ber_closed_negbinomial(
                        *failures,
                        *success,
                        s.ber_alpha,
                        s.ber_eta,
                        s.snr_rho,
                    )?,
                )),
                UserCountDistribution::Deterministic { n } if *n >= 1 => Ok(Some(
                    ber_closed_binomial(*n as f64, 1.0, s.ber_alpha, s.ber_eta, s.snr_rho)?,
                )),
                _ => Ok(None),
            }
        }
    }
}

pub fn validate(path: &Path) -> Result<(), CliError> {
    let doc = ScenarioDoc::load(path)?;
    let s = doc.require_scenario()?;
    let (mean, variance) = s.count.moments();
    println!("scenario: {}", serde_json::to_string(&s).expect("serializable"));
    println!("count:    {}", s.count.label());
    println!("mean:     {}", num(mean));
    println!("variance: {}", num(variance));
    println!("Pr[N=0]:  {}", num(s.count.pgf(0.0)));
    if mean >= 3.0 {
        println!(
            "scaling conditions at lambda={}: Pr[N=0]*loglog={} var/mean^2={}",
            num(mean),
            num(s.count.pgf(0.0) * mean.ln().ln()),
            num(variance / (mean * mean)),
        );
    } else {
        println!("scaling conditions: n/a (mean < 3)");
    }
    if let Some(sweep) = &doc.sweep {
        let grid = sweep.grid.points()?;
        println!(
            "sweep:    {:?} over {} points of {}",
            sweep.metric,
            grid.len(),
            sweep.sweep_var.column()
        );
        for d in &sweep.distributions {
            // surface resolution errors (e.g. non-integer trial counts) now
            d.at_sweep_point(sweep.sweep_var, grid[0])?;
        }
    }
    println!("ok");
    Ok(())
}

pub fn ordering(doc: &ScenarioDoc, grid_size: usize, out: &Path) -> Result<(), CliError> {
    let specs = doc
        .distributions
        .as_ref()
        .ok_or_else(|| CliError::Spec("missing `distributions` section".into()))?;
    if specs.len() < 2 {
        return Err(CliError::Spec("ordering needs at least two distributions".into()));
    }
    let dists: Vec<UserCountDistribution> = specs
        .iter()
        .map(|d| d.concrete())
        .collect::<Result<_, _>>()?;
    let mut table = CsvTable::new(vec![
        "smaller",
        "larger",
        "mean_smaller",
        "mean_larger",
        "holds",
        "max_violation",
        "witness_z",
    ]);
    for pair in dists.windows(2) {
        let verdict = lt_order_check(&pair[0], &pair[1], grid_size);
        table.push(vec![
            pair[0].label(),
            pair[1].label(),
            num(pair[0].mean()),
            num(pair[1].mean()),
            verdict.holds.to_string(),
            num(verdict.max_violation),
            verdict.witness_z.map(num).unwrap_or_default(),
        ]);
    }
    table.write(out)
}

pub fn lecam(doc: &ScenarioDoc, capacity_gap_rho: Option<f64>, tol: f64, out: &Path) -> Result<(), CliError> {
    let probs = doc.lecam_probs()?;
    let distance = pb_poisson_l1_distance(&probs).map_err(|e| CliError::Spec(e.to_string()))?;
    let bound = lecam_bound(&probs);
    let lambda: f64 = probs.iter().sum();
    let mut header = vec!["L", "lambda", "l1_distance", "lecam_bound", "ratio"];
    let mut row = vec![
        int(probs.len() as u64),
        num(lambda),
        num(distance),
        num(bound),
        num(distance / bound),
    ];
    if let Some(rho) = capacity_gap_rho {
        let gap = capacity_gap_pb_poisson(&probs, rho, tol)
            .map_err(|e| numeric_context(e, "capacity gap"))?;
        header.extend(["capacity_gap", "gap_witness"]);
        row.push(num(gap.gap));
        row.push(num(gap.bound_witness));
    }
    let mut table = CsvTable::new(header);
    table.push(row);
    table.write(out)
}

pub struct McOptions {
    pub trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub include_empty_atom: bool,
    pub threshold_q: Option<f64>,
    pub threshold_users: Option<u64>,
}

pub fn mc(doc: &ScenarioDoc, opts: &McOptions, out: &Path) -> Result<(), CliError> {
    let scenario = doc.require_scenario()?;
    let config = TrialConfig {
        scenario,
        n_trials: opts.trials,
        seed: opts.seed,
        workers: opts.workers.max(1),
        include_empty_atom: opts.include_empty_atom,
    };
    let report = match (opts.threshold_q, opts.threshold_users) {
        (Some(q), users) => {
            if q < 0.0 {
                return Err(CliError::Spec(format!(
                    "`--threshold-q` must be non-negative, got {q}"
                )));
            }
            let users = users.ok_or_else(|| {
                CliError::Spec("`--threshold-q` requires `--threshold-users`".into())
            })?;
            let test = InterferenceTest::UniformThreshold {
                users,
                q_threshold: q,
            };
            mcsim::run_threshold_mode(&test, &config)
        }
        (None, Some(_)) => {
            // per-user mode: the scenario's pb probabilities drive the test
            match &config.scenario.count {
                UserCountDistribution::PoissonBinomial { probs } => {
                    let test = InterferenceTest::PerUserProbs {
                        probs: probs.clone(),
                    };
                    mcsim::run_threshold_mode(&test, &config)
                }
                _ => {
                    return Err(CliError::Spec(
                        "`--threshold-users` without `--threshold-q` needs a pb count".into(),
                    ))
                }
            }
        }
        (None, None) => mcsim::run(&config),
    };

    let mut table = CsvTable::new(vec!["record", "key", "value", "std_err"]);
    for (name, est) in [
        ("outage", &report.outage),
        ("capacity", &report.capacity),
        ("ber", &report.ber),
    ] {
        table.push(vec![
            "metric".into(),
            name.into(),
            num(est.value),
            num(est.std_err.unwrap_or(0.0)),
        ]);
    }
    for (k, &count) in report.count_histogram.iter().enumerate() {
        table.push(vec![
            "count_pmf".into(),
            int(k as u64),
            int(count),
            String::new(),
        ]);
    }
    for point in &report.gain_cdf {
        table.push(vec![
            "gain_cdf".into(),
            num(point.x),
            num(point.fraction),
            String::new(),
        ]);
    }
    if let Some(activity) = &report.per_user_activity {
        for (i, &hits) in activity.iter().enumerate() {
            table.push(vec![
                "activity".into(),
                int(i as u64),
                int(hits),
                String::new(),
            ]);
        }
    }
    table.write(out)
}

pub fn diag_scaling(
    family: &CountFamily,
    rho: f64,
    lambdas: &[f64],
    tol: f64,
    out: &Path,
) -> Result<(), CliError> {
    let conditions = scaling_conditions(family, lambdas).map_err(|e| CliError::Spec(e.to_string()))?;
    let gaps = capacity_scaling_gap(family, rho, lambdas, tol)
        .map_err(|e| numeric_context(e, "scaling sweep"))?;
    let mut table = CsvTable::new(vec![
        "lambda",
        "p0_loglog",
        "var_over_mean_sq",
        "capacity",
        "gap",
        "normalized",
    ]);
    for (c, g) in conditions.iter().zip(&gaps) {
        table.push(vec![
            num(c.lambda),
            num(c.p0_loglog),
            num(c.var_over_mean_sq),
            num(g.capacity),
            num(g.gap),
            num(g.normalized),
        ]);
    }
    table.write(out)
}

pub fn diag_jensen(
    doc: &ScenarioDoc,
    tightness_lambdas: &[f64],
    tol: f64,
    out: &Path,
) -> Result<(), CliError> {
    let s = doc.require_scenario()?;
    let mut table = CsvTable::new(vec!["record", "model", "lambda", "cap_gap_or_residual", "ber_gap"]);
    let gaps = jensen_gaps(&s, tol).map_err(|e| numeric_context(e, "jensen gaps"))?;
    table.push(vec![
        "gaps".into(),
        format!("{:?}", s.ber_model).to_lowercase(),
        num(s.count.mean()),
        num(gaps.cap_gap),
        num(gaps.ber_gap),
    ]);
    if !tightness_lambdas.is_empty() {
        for model in [BerModel::Exponential, BerModel::QForm] {
            let rows = jensen_tightness_diagnostic(
                &CountFamily::Poisson,
                s.snr_rho,
                s.ber_alpha,
                s.ber_eta,
                model,
                tightness_lambdas,
                tol,
            )
            .map_err(|e| numeric_context(e, "tightness grid"))?;
            for r in rows {
                table.push(vec![
                    "tightness".into(),
                    format!("{model:?}").to_lowercase(),
                    num(r.lambda),
                    num(r.normalized_residual),
                    String::new(),
                ]);
            }
        }
    }
    table.write(out)
}

pub fn diag_regvar(
    model: BerModel,
    rho: f64,
    eta: f64,
    kappa: f64,
    u_grid: &[f64],
    out: &Path,
) -> Result<(), CliError> {
    let rows =
        regvar_scan(model, rho, eta, u_grid, kappa).map_err(|e| CliError::Spec(e.to_string()))?;
    let exponent = regvar_exponent(model, rho, eta, u_grid, kappa)
        .map_err(|e| CliError::Spec(e.to_string()))?;
    let mut table = CsvTable::new(vec!["u", "estimate"]);
    for r in rows {
        table.push(vec![num(r.u), num(r.estimate)]);
    }
    table.push(vec!["extrapolated".into(), num(exponent)]);
    table.write(out)
}
