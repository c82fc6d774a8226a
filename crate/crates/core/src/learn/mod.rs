//! Parameter learning: counts with Dirichlet priors for discrete children, least
//! squares for conditional linear Gaussian children.

mod cld;
mod estimate;
mod priors;

use std::fmt;

use crate::dataset::{default_cases, execute_join, partition_by_cpc, CsdDataset, DatasetError};
use crate::mapper::{plan_join, prepare_rule_database, CausalRule, Family, MapperError};
use crate::mtheory::{Cld, CldSpec, Csd, MTheory, ModelError, ValueSpace};
use crate::relational::{complete_boolean_relation, Database, RelationalError};
use crate::script::format_number;

pub use cld::{learn_boolean_cld, learn_categorical_cld, learn_clg_cld, ContinuousParent, Estimator};
pub use estimate::{dirichlet_predictive, mean_sd, mle_categorical, ols_fit, OlsFit, RegressionDesign};
pub use priors::{DirichletPrior, Priors};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("no data to estimate from")]
    EmptyData,
    #[error("{rows} rows cannot fit an intercept, {regressors} coefficients and a standard deviation")]
    InsufficientRows { rows: usize, regressors: usize },
    #[error("design matrix is rank deficient")]
    SingularDesign,
    #[error("priors line {line}: {message}")]
    Priors { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl LearnError {
    pub fn code(&self) -> &'static str {
        match self {
            LearnError::EmptyData => "E_EMPTY_DATA",
            LearnError::InsufficientRows { .. } => "E_INSUFFICIENT_ROWS",
            LearnError::SingularDesign => "E_SINGULAR_DESIGN",
            LearnError::Priors { .. } => "E_PRIORS",
            LearnError::Invalid(_) => "E_LEARN",
            LearnError::Dataset(e) => e.code(),
            LearnError::Mapper(e) => e.code(),
            LearnError::Relational(e) => e.code(),
            LearnError::Model(_) => "E_MODEL",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LearnOptions {
    pub estimator: Estimator,
    pub priors: Priors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub resident: String,
    /// `categorical`, `clg`, `boolean`, or `marginal`.
    pub family: String,
    /// Parent-condition label, case count and parameters for each clause.
    pub clauses: Vec<(String, usize, String)>,
    pub default_cases: usize,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearnedReport {
    pub nodes: Vec<NodeReport>,
}

impl LearnedReport {
    pub fn node(&self, resident: &str) -> Option<&NodeReport> {
        self.nodes.iter().find(|n| n.resident == resident)
    }

    pub fn has_errors(&self) -> bool {
        self.nodes.iter().any(|n| n.error.is_some())
    }
}

impl fmt::Display for LearnedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:<12} {:<28} {:>6}  parameters", "node", "family", "condition", "cases")?;
        for n in &self.nodes {
            for (label, count, params) in &n.clauses {
                writeln!(f, "{:<20} {:<12} {:<28} {:>6}  {}", n.resident, n.family, label, count, params)?;
            }
            if let Some(e) = &n.error {
                writeln!(f, "{:<20} {:<12} error: {e}", n.resident, n.family)?;
            }
            for w in &n.warnings {
                writeln!(f, "{:<20} {:<12} warning: {w}", n.resident, n.family)?;
            }
        }
        Ok(())
    }
}

fn describe(csd: &Csd) -> String {
    match csd {
        Csd::Categorical(c) => c
            .entries
            .iter()
            .map(|(s, p)| format!("{s}={}", format_number(*p)))
            .collect::<Vec<_>>()
            .join(" "),
        Csd::LinearGaussian(l) => {
            let mut s = format!("intercept={}", format_number(l.intercept));
            for t in &l.terms {
                s.push_str(&format!(" {}={}", t.parent, format_number(t.coefficient)));
            }
            s.push_str(&format!(" variance={}", format_number(l.variance)));
            s
        }
        Csd::Formula(_) => "(formula)".into(),
    }
}

fn clauses(cld: &Cld, csd: &CsdDataset) -> Vec<(String, usize, String)> {
    let mut out: Vec<(String, usize, String)> = cld
        .branches
        .iter()
        .zip(&csd.groups)
        .map(|((cpc, c), (_, cases))| (cpc.label(), cases.len(), describe(c)))
        .collect();
    let n = if csd.groups.is_empty() {
        csd.pooled.len() + csd.default_cases.len()
    } else {
        csd.default_cases.len()
    };
    out.push(("default".into(), n, describe(&cld.default)));
    out
}

fn learn_rule(
    m: &MTheory,
    db: &Database,
    rule: &CausalRule,
    opts: &LearnOptions,
    warnings: &mut Vec<String>,
) -> Result<(Cld, CsdDataset), LearnError> {
    let child = &rule.child.attribute;
    let resident = m
        .resident(child)
        .ok_or_else(|| MapperError::UnknownChild(child.clone()))?;
    let skeleton = resident
        .inline_cld()
        .ok_or_else(|| LearnError::Invalid(format!("{child} has no distribution skeleton; apply its rule first")))?;
    let cpcs: Vec<_> = skeleton.branches.iter().map(|(c, _)| c.clone()).collect();
    let plan = plan_join(rule, db)?;
    let joined = execute_join(&plan, db)?;
    let mut csd = partition_by_cpc(&joined, &cpcs)?;
    csd.default_cases = default_cases(db, &plan, &joined)?;
    let cld = match rule.family {
        Family::Categorical | Family::Boolean => {
            let states = resident
                .value_space
                .as_ref()
                .and_then(|v| v.states())
                .ok_or_else(|| LearnError::Invalid(format!("{child} is not discrete")))?;
            let mut prior = DirichletPrior::from_spec(&states, rule.prior.as_ref());
            opts.priors.apply(child, &mut prior);
            cld::categorical_cld(&csd, &states, &prior, opts.estimator, Some(warnings))?
        }
        Family::Clg => {
            let continuous: Vec<ContinuousParent> = joined
                .parents
                .iter()
                .enumerate()
                .filter(|(_, p)| !p.discrete)
                .map(|(i, p)| ContinuousParent {
                    index: i,
                    name: p.name.clone(),
                })
                .collect();
            cld::clg_cld(&csd, &continuous, rule.aggregate, Some(warnings))?
        }
    };
    Ok((cld, csd))
}

fn learn_marginal(
    db: &Database,
    name: &str,
    vs: &ValueSpace,
    opts: &LearnOptions,
    warnings: &mut Vec<String>,
) -> Result<Option<(Cld, CsdDataset)>, LearnError> {
    let mut owners = db.locate_attribute(name);
    if owners.len() != 1 {
        warnings.push(format!("no unique relation holds {name}; left without a distribution"));
        return Ok(None);
    }
    let mut rel = owners.remove(0).clone();
    if rel.column(name).is_none() {
        match complete_boolean_relation(db, name, name) {
            Ok(r) => rel = r,
            Err(e) => {
                warnings.push(format!("cannot complete {name} ({e}); left without a distribution"));
                return Ok(None);
            }
        }
    }
    let col = rel.column(name).expect("located column");
    let csd = CsdDataset {
        groups: vec![],
        pooled: vec![],
        default_cases: rel
            .rows
            .iter()
            .map(|r| crate::dataset::DefaultCase {
                child_key: rel.key_of(r),
                child: r[col].clone(),
            })
            .collect(),
    };
    let cld = match vs {
        ValueSpace::Continuous => cld::clg_cld(&csd, &[], None, Some(warnings))?,
        _ => {
            let states = vs.states().expect("discrete");
            let mut prior = DirichletPrior::uniform(&states, 1.0);
            opts.priors.apply(name, &mut prior);
            cld::categorical_cld(&csd, &states, &prior, opts.estimator, Some(warnings))?
        }
    };
    Ok(Some((cld, csd)))
}

/// Learns every rule child's distribution from its joined data and gives residents
/// without rules a marginal from their own column. Failures are recorded per node and
/// learning carries on.
pub fn learn_mtheory(
    m: &MTheory,
    db: &Database,
    rules: &[CausalRule],
    opts: &LearnOptions,
) -> Result<(MTheory, LearnedReport), LearnError> {
    let db = prepare_rule_database(db, rules)?;
    let mut out = m.clone();
    let mut report = LearnedReport::default();
    let set = |out: &mut MTheory, name: &str, cld: Cld| {
        let (i, _) = out.home_of(name).expect("resident exists");
        out.mfrags[i].resident_mut(name).expect("resident").cld = Some(CldSpec::Inline(cld));
    };

    for rule in rules {
        let name = rule.child.attribute.clone();
        let mut node = NodeReport {
            resident: name.clone(),
            family: rule.family.name().to_string(),
            clauses: vec![],
            default_cases: 0,
            warnings: vec![],
            error: None,
        };
        match learn_rule(m, &db, rule, opts, &mut node.warnings) {
            Ok((cld, csd)) => {
                node.clauses = clauses(&cld, &csd);
                node.default_cases = csd.default_cases.len();
                set(&mut out, &name, cld);
            }
            Err(e) => node.error = Some(format!("{}: {e}", e.code())),
        }
        report.nodes.push(node);
    }

    let ruled: Vec<&str> = rules.iter().map(|r| r.child.attribute.as_str()).collect();
    let others: Vec<(String, ValueSpace)> = m
        .residents()
        .filter(|(_, r)| !ruled.contains(&r.name.as_str()) && r.parents.is_empty())
        .filter_map(|(_, r)| match &r.value_space {
            Some(ValueSpace::Entity(_)) | None => None,
            Some(vs) => Some((r.name.clone(), vs.clone())),
        })
        .collect();
    for (name, vs) in others {
        let mut node = NodeReport {
            resident: name.clone(),
            family: "marginal".into(),
            clauses: vec![],
            default_cases: 0,
            warnings: vec![],
            error: None,
        };
        match learn_marginal(&db, &name, &vs, opts, &mut node.warnings) {
            Ok(Some((cld, csd))) => {
                node.clauses = clauses(&cld, &csd);
                node.default_cases = csd.default_cases.len();
                set(&mut out, &name, cld);
            }
            Ok(None) => {}
            Err(e) => node.error = Some(format!("{}: {e}", e.code())),
        }
        report.nodes.push(node);
    }
    out.check_references()?;
    Ok((out, report))
}
