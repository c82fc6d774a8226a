use crate::dataset::{count_states, CsdDataset, JoinedCase};
use crate::mtheory::{Aggregate, Cld, Csd, LinearGaussianCsd, LinearTerm};
use crate::relational::Value;

use super::estimate::{dirichlet_predictive, mean_sd, mle_categorical, ols_fit, RegressionDesign};
use super::{DirichletPrior, LearnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    Mle,
    #[default]
    Dirichlet,
}

impl std::str::FromStr for Estimator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mle" => Ok(Estimator::Mle),
            "dirichlet" => Ok(Estimator::Dirichlet),
            _ => Err(format!("unknown estimator {s} (expected mle or dirichlet)")),
        }
    }
}

/// A continuous rule parent: its position among the joined parents and its name.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousParent {
    pub index: usize,
    pub name: String,
}

/// Collects fallbacks when learning is lenient; strict learning has none.
pub(crate) type Warnings<'a> = Option<&'a mut Vec<String>>;

fn warn(w: &mut Warnings, msg: String) -> bool {
    match w {
        Some(v) => {
            v.push(msg);
            true
        }
        None => false,
    }
}

fn categorical(states: &[String], probs: Vec<f64>) -> Csd {
    Csd::categorical(states.iter().cloned().zip(probs))
}

fn estimate(counts: &[u64], alpha: &[f64], estimator: Estimator) -> Result<Vec<f64>, LearnError> {
    match estimator {
        Estimator::Mle => mle_categorical(counts),
        Estimator::Dirichlet => Ok(dirichlet_predictive(counts, alpha)),
    }
}

pub(crate) fn categorical_cld(
    csd: &CsdDataset,
    states: &[String],
    prior: &DirichletPrior,
    estimator: Estimator,
    mut w: Warnings,
) -> Result<Cld, LearnError> {
    let uniform = vec![1.0 / states.len() as f64; states.len()];
    let mut branches = Vec::new();
    for (cpc, cases) in &csd.groups {
        let counts = count_states(cases.iter().map(|c| &c.child), states);
        let probs = match estimate(&counts, &prior.row(&cpc.label()), estimator) {
            Err(LearnError::EmptyData) if warn(&mut w, format!("no cases for {}; using a uniform distribution", cpc.label())) => {
                uniform.clone()
            }
            r => r?,
        };
        branches.push((cpc.clone(), categorical(states, probs)));
    }
    let counts = count_states(csd.default_cases.iter().map(|c| &c.child), states);
    let default = match estimate(&counts, &prior.row("default"), estimator) {
        Ok(p) => p,
        Err(LearnError::EmptyData) => {
            warn(&mut w, "no default cases; default distribution is uniform".into());
            uniform
        }
        Err(e) => return Err(e),
    };
    Ok(Cld {
        branches,
        default: categorical(states, default),
    })
}

/// One categorical distribution per parent condition from its group's counts, and a
/// default from the default cases (prior only when there are none).
pub fn learn_categorical_cld(
    csd: &CsdDataset,
    states: &[String],
    prior: &DirichletPrior,
    estimator: Estimator,
) -> Result<Cld, LearnError> {
    categorical_cld(csd, states, prior, estimator, None)
}

/// Boolean children learn like categorical ones over `True`/`False`.
pub fn learn_boolean_cld(csd: &CsdDataset, prior: &DirichletPrior, estimator: Estimator) -> Result<Cld, LearnError> {
    categorical_cld(csd, &["True".into(), "False".into()], prior, estimator, None)
}

fn real(v: &Value) -> Result<f64, LearnError> {
    v.as_real()
        .ok_or_else(|| LearnError::Invalid(format!("child value {v} is not numeric")))
}

fn design(cases: &[JoinedCase], continuous: &[ContinuousParent], aggregate: Aggregate) -> Result<RegressionDesign, LearnError> {
    let mut d = RegressionDesign::default();
    for c in cases {
        let x = continuous.iter().map(|p| aggregate.apply(&c.reals(p.index))).collect();
        d.push(x, real(&c.child)?);
    }
    Ok(d)
}

fn regression(cases: &[JoinedCase], continuous: &[ContinuousParent], aggregate: Option<Aggregate>) -> Result<Csd, LearnError> {
    let fit = ols_fit(&design(cases, continuous, aggregate.unwrap_or(Aggregate::Average))?)?;
    Ok(Csd::LinearGaussian(LinearGaussianCsd {
        intercept: fit.intercept,
        terms: continuous
            .iter()
            .zip(&fit.coefficients)
            .map(|(p, &b)| LinearTerm {
                parent: p.name.clone(),
                coefficient: b,
                aggregate,
            })
            .collect(),
        variance: fit.variance(),
    }))
}

fn intercept_only(values: &[f64]) -> Result<Csd, LearnError> {
    let (m, sd) = mean_sd(values)?;
    Ok(Csd::gaussian(m, sd * sd))
}

pub(crate) fn clg_cld(
    csd: &CsdDataset,
    continuous: &[ContinuousParent],
    aggregate: Option<Aggregate>,
    mut w: Warnings,
) -> Result<Cld, LearnError> {
    let all: Vec<f64> = csd
        .groups
        .iter()
        .flat_map(|(_, c)| c.iter())
        .chain(csd.pooled.iter())
        .map(|c| &c.child)
        .chain(csd.default_cases.iter().map(|d| &d.child))
        .map(real)
        .collect::<Result<_, _>>()?;
    let defaults: Vec<f64> = csd.default_cases.iter().map(|d| real(&d.child)).collect::<Result<_, _>>()?;

    let default = if csd.groups.is_empty() {
        let cases = &csd.pooled;
        match regression(cases, continuous, aggregate) {
            Ok(c) => c,
            Err(e) if warn(&mut w, format!("default regression failed ({e}); using the child's marginal")) => intercept_only(&all)?,
            Err(e) => return Err(e),
        }
    } else {
        match intercept_only(&defaults) {
            Ok(c) => c,
            Err(e) if warn(&mut w, format!("default distribution from the whole column ({} default cases: {e})", defaults.len())) => {
                intercept_only(&all)?
            }
            Err(e) => return Err(e),
        }
    };

    let mut branches = Vec::new();
    for (cpc, cases) in &csd.groups {
        let csd = match regression(cases, continuous, aggregate) {
            Ok(c) => c,
            Err(e) if w.is_some() => {
                let values: Vec<f64> = cases.iter().map(|c| real(&c.child)).collect::<Result<_, _>>()?;
                match intercept_only(&values) {
                    Ok(c) if !continuous.is_empty() => {
                        warn(&mut w, format!("{}: regression failed ({e}); fitted an intercept only", cpc.label()));
                        c
                    }
                    Ok(c) => c,
                    Err(_) => {
                        warn(&mut w, format!("{}: {} cases ({e}); using the default distribution", cpc.label(), cases.len()));
                        default.clone()
                    }
                }
            }
            Err(e) => return Err(e),
        };
        branches.push((cpc.clone(), csd));
    }
    Ok(Cld { branches, default })
}

/// One regression per parent condition; the default is intercept-only over the
/// default cases, or a regression over every case when there are no conditions.
/// Bags of continuous parent values are reduced by `aggregate` (average if unset).
pub fn learn_clg_cld(csd: &CsdDataset, continuous: &[ContinuousParent], aggregate: Option<Aggregate>) -> Result<Cld, LearnError> {
    clg_cld(csd, continuous, aggregate, None)
}
