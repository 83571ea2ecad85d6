//! The declarative scenario file: one JSON document holding the experiment
//! description plus whatever the invoked subcommand needs (a sweep spec, a
//! distribution list for ordering checks, a probability vector for the
//! Poisson-approximation commands). Command-line flags override file fields.

use serde::Deserialize;

use mudkit::metrics::Scenario;
use mudkit::usercount::{CountFamily, UserCountDistribution};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub scenario: Option<Scenario>,
    pub sweep: Option<SweepSpec>,
    /// Concrete distributions for the `ordering` command.
    pub distributions: Option<Vec<DistSpec>>,
    /// Explicit activity probabilities for `lecam`.
    pub probs: Option<Vec<f64>>,
    /// Convenience generator for the homogeneous `lecam` case.
    pub iid: Option<IidSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IidSpec {
    #[serde(rename = "L")]
    pub users: usize,
    pub lambda: f64,
}

impl ScenarioDoc {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        let doc: ScenarioDoc = serde_json::from_str(&text)
            .map_err(|e| CliError::Spec(format!("{}: {e}", path.display())))?;
        if let Some(s) = &doc.scenario {
            s.validate().map_err(|e| CliError::Spec(e.to_string()))?;
        }
        Ok(doc)
    }

    pub fn require_scenario(&self) -> Result<Scenario, CliError> {
        self.scenario
            .clone()
            .ok_or_else(|| CliError::Spec("missing `scenario` section".into()))
    }

    pub fn require_sweep(&self) -> Result<SweepSpec, CliError> {
        self.sweep
            .clone()
            .ok_or_else(|| CliError::Spec("missing `sweep` section".into()))
    }

    /// Probability vector for the Le Cam commands, from `probs` or `iid`.
    pub fn lecam_probs(&self) -> Result<Vec<f64>, CliError> {
        match (&self.probs, &self.iid) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(iid)) => {
                if iid.users == 0 {
                    return Err(CliError::Spec("`iid.L` must be positive".into()));
                }
                Ok(vec![iid.lambda / iid.users as f64; iid.users])
            }
            (None, None) => Err(CliError::Spec("missing `probs` or `iid` section".into())),
        }
    }
}

/// A distribution template: fields that the sweep variable determines may be
/// omitted, e.g. `{"kind":"binomial","p":0.5}` inside a lambda sweep.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistSpec {
    Deterministic {
        n: Option<u64>,
    },
    Binomial {
        #[serde(rename = "L")]
        trials: Option<u64>,
        p: f64,
    },
    #[serde(rename = "negbinomial")]
    NegBinomial {
        r: Option<f64>,
        p: f64,
    },
    Poisson {
        lambda: Option<f64>,
    },
    #[serde(rename = "pb")]
    Pb {
        probs: Option<Vec<f64>>,
        pattern: Option<Vec<f64>>,
    },
}

impl DistSpec {
    /// Fully specified distribution (no sweep variable to fill in).
    pub fn concrete(&self) -> Result<UserCountDistribution, CliError> {
        let missing = |field: &str| CliError::Spec(format!("distribution field `{field}` required here"));
        let dist = match self {
            DistSpec::Deterministic { n } => {
                UserCountDistribution::deterministic(n.ok_or_else(|| missing("n"))?)
            }
            DistSpec::Binomial { trials, p } => {
                UserCountDistribution::binomial(trials.ok_or_else(|| missing("L"))?, *p)
                    .map_err(|e| CliError::Spec(e.to_string()))?
            }
            DistSpec::NegBinomial { r, p } => {
                UserCountDistribution::neg_binomial(r.ok_or_else(|| missing("r"))?, *p)
                    .map_err(|e| CliError::Spec(e.to_string()))?
            }
            DistSpec::Poisson { lambda } => {
                UserCountDistribution::poisson(lambda.ok_or_else(|| missing("lambda"))?)
                    .map_err(|e| CliError::Spec(e.to_string()))?
            }
            DistSpec::Pb { probs, pattern: _ } => UserCountDistribution::poisson_binomial(
                probs.clone().ok_or_else(|| missing("probs"))?,
            )
            .map_err(|e| CliError::Spec(e.to_string()))?,
        };
        Ok(dist)
    }

    /// Mean-indexed family for lambda sweeps.
    pub fn family(&self) -> Result<CountFamily, CliError> {
        Ok(match self {
            DistSpec::Deterministic { .. } => CountFamily::Deterministic,
            DistSpec::Binomial { p, .. } => CountFamily::Binomial { p: *p },
            DistSpec::NegBinomial { p, .. } => CountFamily::NegBinomial { p: *p },
            DistSpec::Poisson { .. } => CountFamily::Poisson,
            DistSpec::Pb { pattern, probs } => {
                let pattern = pattern
                    .clone()
                    .or_else(|| probs.clone())
                    .ok_or_else(|| {
                        CliError::Spec("pb distribution needs `pattern` for a lambda sweep".into())
                    })?;
                CountFamily::PoissonBinomial { pattern }
            }
        })
    }

    /// Instantiate at a sweep point.
    pub fn at_sweep_point(
        &self,
        var: SweepVar,
        value: f64,
    ) -> Result<UserCountDistribution, CliError> {
        match var {
            SweepVar::Lambda => self
                .family()?
                .at_mean(value)
                .map_err(|e| CliError::Spec(e.to_string())),
            SweepVar::Rho | SweepVar::Rate => self.concrete(),
            SweepVar::R => match self {
                DistSpec::NegBinomial { p, .. } => {
                    UserCountDistribution::neg_binomial(value, *p)
                        .map_err(|e| CliError::Spec(e.to_string()))
                }
                _ => Err(CliError::Spec(
                    "sweep_var `r` applies only to negbinomial distributions".into(),
                )),
            },
            SweepVar::L => match self {
                DistSpec::Binomial { p, .. } => {
                    let trials = value.round();
                    if (value - trials).abs() > 1e-9 || trials < 1.0 {
                        return Err(CliError::Spec(format!(
                            "grid value L={value} is not a positive integer"
                        )));
                    }
                    UserCountDistribution::binomial(trials as u64, *p)
                        .map_err(|e| CliError::Spec(e.to_string()))
                }
                DistSpec::Deterministic { .. } => {
                    let n = value.round();
                    if (value - n).abs() > 1e-9 || n < 0.0 {
                        return Err(CliError::Spec(format!(
                            "grid value L={value} is not a non-negative integer"
                        )));
                    }
                    Ok(UserCountDistribution::deterministic(n as u64))
                }
                _ => Err(CliError::Spec(
                    "sweep_var `L` applies only to binomial or deterministic distributions".into(),
                )),
            },
        }
    }

    pub fn label(&self, var: SweepVar) -> String {
        match self {
            DistSpec::Deterministic { .. } => "deterministic".into(),
            DistSpec::Binomial { p, .. } => format!("binomial(p={p})"),
            DistSpec::NegBinomial { r, p } => match (var, r) {
                (SweepVar::R, _) | (_, None) => format!("negbinomial(p={p})"),
                (_, Some(r)) => format!("negbinomial(r={r},p={p})"),
            },
            DistSpec::Poisson { .. } => "poisson".into(),
            DistSpec::Pb { .. } => "pb".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lower")]
pub enum MetricKind {
    Outage,
    Capacity,
    Ber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lower")]
pub enum SweepVar {
    Lambda,
    Rho,
    R,
    L,
    #[serde(alias = "R", alias = "rate")]
    Rate,
}

impl SweepVar {
    pub fn column(&self) -> &'static str {
        match self {
            SweepVar::Lambda => "lambda",
            SweepVar::Rho => "rho",
            SweepVar::R => "r",
            SweepVar::L => "L",
            SweepVar::Rate => "rate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum MethodSel {
    ClosedForm,
    Quadrature,
    MonteCarlo,
    #[default]
    All,
}

impl MethodSel {
    pub fn wants_closed(&self) -> bool {
        matches!(self, MethodSel::ClosedForm | MethodSel::All)
    }
    pub fn wants_quadrature(&self) -> bool {
        matches!(self, MethodSel::Quadrature | MethodSel::All)
    }
    pub fn wants_monte_carlo(&self) -> bool {
        matches!(self, MethodSel::MonteCarlo | MethodSel::All)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Explicit(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default)]
        scale: GridScale,
    },
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    #[default]
    Linear,
    Log,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let pts = match self {
            GridSpec::Explicit(v) => v.clone(),
            GridSpec::Range {
                start,
                stop,
                count,
                scale,
            } => {
                if *count < 2 {
                    return Err(CliError::Spec("grid `count` must be at least 2".into()));
                }
                (0..*count)
                    .map(|i| {
                        let f = i as f64 / (*count - 1) as f64;
                        match scale {
                            GridScale::Linear => start + f * (stop - start),
                            GridScale::Log => (start.ln() + f * (stop.ln() - start.ln())).exp(),
                        }
                    })
                    .collect()
            }
        };
        if pts.is_empty() {
            return Err(CliError::Spec("grid must be non-empty".into()));
        }
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Spec("grid must be strictly increasing".into()));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub metric: MetricKind,
    pub sweep_var: SweepVar,
    pub grid: GridSpec,
    pub distributions: Vec<DistSpec>,
    #[serde(default)]
    pub method: MethodSel,
}
