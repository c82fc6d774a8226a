use std::collections::BTreeMap;

use super::cld::{Cld, CldError, Cpc, Csd, Distribution, ParentAssignment, ParentValue};

/// Instance-level local distribution of one ground node.
#[derive(Debug, Clone, PartialEq)]
pub struct Ild {
    pub owner: String,
    /// Ground parent ids, grouped by the resident they instantiate.
    pub parents: BTreeMap<String, Vec<String>>,
    pub branches: Vec<(Cpc, Csd)>,
    pub default: Csd,
}

/// Instantiates a class-level distribution for a node with the given parent instances.
/// When some parent resident has no instances at all, only the default applies.
pub fn derive_ild(owner: &str, cld: &Cld, parents: &BTreeMap<String, Vec<String>>) -> Ild {
    let missing = cld
        .parent_names()
        .iter()
        .chain(parents.keys().map(|k| k.as_str()).collect::<Vec<_>>().iter())
        .any(|p| parents.get(*p).is_none_or(|v| v.is_empty()));
    Ild {
        owner: owner.to_string(),
        parents: parents.clone(),
        branches: if missing { vec![] } else { cld.branches.clone() },
        default: cld.default.clone(),
    }
}

impl Ild {
    pub fn assignment(&self, values: &BTreeMap<String, ParentValue>) -> Result<ParentAssignment, CldError> {
        let mut a = ParentAssignment::new();
        for (name, ids) in &self.parents {
            let mut vs = Vec::with_capacity(ids.len());
            for id in ids {
                vs.push(values.get(id).cloned().ok_or_else(|| CldError::UnknownParentRef(id.clone()))?);
            }
            a.set(name.clone(), vs);
        }
        Ok(a)
    }

    /// Index of the firing clause (`None` for the default).
    pub fn select(&self, a: &ParentAssignment) -> Result<Option<usize>, CldError> {
        for (i, (cpc, _)) in self.branches.iter().enumerate() {
            if cpc.evaluate(a)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn resolve(&self, values: &BTreeMap<String, ParentValue>) -> Result<Distribution, CldError> {
        let a = self.assignment(values)?;
        self.resolve_assignment(&a)
    }

    pub fn resolve_assignment(&self, a: &ParentAssignment) -> Result<Distribution, CldError> {
        match self.select(a)? {
            Some(i) => self.branches[i].1.evaluate(a, Some(&self.branches[i].0)),
            None => self.default.evaluate(a, None),
        }
    }
}
