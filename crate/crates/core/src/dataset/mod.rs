//! Executes join plans and splits the joined data into one dataset per parent
//! condition, plus the default (anti-join) dataset.

mod dump;
mod join;

use std::collections::BTreeMap;

use crate::mapper::{JoinPlan, MapperError};
use crate::mtheory::{Cpc, ParentAssignment, ParentValue};
use crate::relational::{Database, RelationalError, Value};

pub use dump::write_dump;
pub use join::brute_force_matches;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Relational(#[from] RelationalError),
    #[error(transparent)]
    Mapper(#[from] MapperError),
    #[error("case {0} matches no parent condition")]
    UnmatchedCase(usize),
    #[error("plan refers to unknown alias {0}")]
    UnknownAlias(String),
    #[error("plan refers to unknown attribute {0}")]
    UnknownAttribute(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::Relational(e) => e.code(),
            DatasetError::Mapper(e) => e.code(),
            DatasetError::UnmatchedCase(_) => "E_UNMATCHED_CASE",
            DatasetError::UnknownAlias(_) | DatasetError::UnknownAttribute(_) => "E_PLAN",
            DatasetError::Io(_) => "E_IO",
        }
    }
}

/// A rule parent as it appears in the joined data.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentColumn {
    /// Resident (attribute) name.
    pub name: String,
    pub key_names: Vec<String>,
    pub discrete: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParentInstance {
    pub key: Vec<String>,
    pub value: Value,
}

impl ParentInstance {
    fn parent_value(&self) -> ParentValue {
        match &self.value {
            Value::Real(x) => ParentValue::Real(*x),
            v => ParentValue::State(v.to_string()),
        }
    }
}

/// One training case: a child row together with one instance of every discrete
/// parent. Continuous parents may contribute several instances.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedCase {
    pub id: usize,
    pub child_key: Vec<String>,
    pub child: Value,
    /// Distinct full matches, one instance per rule parent in rule order.
    pub matches: Vec<Vec<ParentInstance>>,
}

impl JoinedCase {
    /// Distinct instances of one parent across the case's matches.
    pub fn bag(&self, parent: usize) -> Vec<&ParentInstance> {
        let mut out: Vec<&ParentInstance> = Vec::new();
        for m in &self.matches {
            if !out.iter().any(|p| p.key == m[parent].key) {
                out.push(&m[parent]);
            }
        }
        out
    }

    pub fn assignment(&self, parents: &[ParentColumn]) -> ParentAssignment {
        let mut a = ParentAssignment::new();
        for (i, p) in parents.iter().enumerate() {
            a.set(p.name.clone(), self.bag(i).iter().map(|x| x.parent_value()).collect());
        }
        a
    }

    pub fn reals(&self, parent: usize) -> Vec<f64> {
        self.bag(parent).iter().filter_map(|p| p.value.as_real()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedDataset {
    pub child: String,
    pub child_key_names: Vec<String>,
    pub parents: Vec<ParentColumn>,
    pub cases: Vec<JoinedCase>,
}

/// A flattened joined row: one match of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatRow<'a> {
    pub case: usize,
    pub child_key: &'a [String],
    pub child: &'a Value,
    pub parents: &'a [ParentInstance],
}

impl JoinedDataset {
    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    /// The printed-table view: one row per match.
    pub fn flatten(&self) -> Vec<FlatRow<'_>> {
        self.cases
            .iter()
            .flat_map(|c| {
                c.matches.iter().map(move |m| FlatRow {
                    case: c.id,
                    child_key: &c.child_key,
                    child: &c.child,
                    parents: m,
                })
            })
            .collect()
    }

    /// Regroups the cases by child key alone, pooling their matches.
    pub fn by_child_key(&self) -> Vec<JoinedCase> {
        let mut groups: BTreeMap<Vec<String>, JoinedCase> = BTreeMap::new();
        for c in &self.cases {
            let g = groups.entry(c.child_key.clone()).or_insert_with(|| JoinedCase {
                id: 0,
                child_key: c.child_key.clone(),
                child: c.child.clone(),
                matches: vec![],
            });
            g.matches.extend(c.matches.iter().cloned());
        }
        groups
            .into_values()
            .enumerate()
            .map(|(i, mut c)| {
                c.id = i + 1;
                c
            })
            .collect()
    }

    pub fn child_keys(&self) -> std::collections::BTreeSet<&[String]> {
        self.cases.iter().map(|c| c.child_key.as_slice()).collect()
    }
}

/// A child row that takes part in no match.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultCase {
    pub child_key: Vec<String>,
    pub child: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsdDataset {
    pub groups: Vec<(Cpc, Vec<JoinedCase>)>,
    /// Every joined case, when there are no parent conditions to split on.
    pub pooled: Vec<JoinedCase>,
    pub default_cases: Vec<DefaultCase>,
}

/// Runs a plan as an inner join and groups the matches into cases, ordered by child key.
pub fn execute_join(plan: &JoinPlan, db: &Database) -> Result<JoinedDataset, DatasetError> {
    join::execute(plan, db)
}

/// Child rows whose key appears in no match.
pub fn build_default_dataset(db: &Database, plan: &JoinPlan) -> Result<Vec<DefaultCase>, DatasetError> {
    let joined = execute_join(plan, db)?;
    default_cases(db, plan, &joined)
}

pub(crate) fn default_cases(db: &Database, plan: &JoinPlan, joined: &JoinedDataset) -> Result<Vec<DefaultCase>, DatasetError> {
    let step = plan.step(&plan.child.alias).ok_or_else(|| DatasetError::UnknownAlias(plan.child.alias.clone()))?;
    let rel = db.require(&step.relation)?;
    let col = rel
        .column(&plan.child.attribute)
        .ok_or_else(|| DatasetError::UnknownAttribute(plan.child.to_string()))?;
    let matched = joined.child_keys();
    let mut out: Vec<DefaultCase> = rel
        .rows
        .iter()
        .map(|r| DefaultCase {
            child_key: rel.key_of(r),
            child: r[col].clone(),
        })
        .filter(|c| !matched.contains(c.child_key.as_slice()))
        .collect();
    out.sort_by(|a, b| a.child_key.cmp(&b.child_key));
    Ok(out)
}

/// Puts each case in the group of the first parent condition it satisfies.
pub fn partition_by_cpc(j: &JoinedDataset, cpcs: &[Cpc]) -> Result<CsdDataset, DatasetError> {
    let mut groups: Vec<(Cpc, Vec<JoinedCase>)> = cpcs.iter().map(|c| (c.clone(), vec![])).collect();
    if !cpcs.is_empty() {
        for case in &j.cases {
            let a = case.assignment(&j.parents);
            let mut placed = false;
            for (cpc, g) in groups.iter_mut() {
                if cpc.evaluate(&a).unwrap_or(false) {
                    g.push(case.clone());
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(DatasetError::UnmatchedCase(case.id));
            }
        }
    }
    let pooled = if cpcs.is_empty() { j.cases.clone() } else { vec![] };
    Ok(CsdDataset {
        groups,
        pooled,
        default_cases: vec![],
    })
}

/// Child-state counts per parent condition. Each case counts once.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub states: Vec<String>,
    pub rows: Vec<(String, Vec<u64>)>,
}

impl CountTable {
    pub fn get(&self, state: &str, config: &str) -> Option<u64> {
        let i = self.states.iter().position(|s| s == state)?;
        self.rows.iter().find(|(c, _)| c == config).map(|(_, v)| v[i])
    }
}

pub fn count_states<'a>(values: impl IntoIterator<Item = &'a Value>, states: &[String]) -> Vec<u64> {
    let mut counts = vec![0; states.len()];
    for v in values {
        let s = v.to_string();
        if let Some(i) = states.iter().position(|x| *x == s) {
            counts[i] += 1;
        }
    }
    counts
}

pub fn count_table(csd: &CsdDataset, states: &[String]) -> CountTable {
    CountTable {
        states: states.to_vec(),
        rows: csd
            .groups
            .iter()
            .map(|(cpc, cases)| (cpc.label(), count_states(cases.iter().map(|c| &c.child), states)))
            .collect(),
    }
}
