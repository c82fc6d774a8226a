//! The MTheory data model: MFrags, context/input/resident nodes and local distributions.

mod check;
mod cld;
mod ild;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use check::{check_acyclic, check_unique_home};
pub use cld::{
    Aggregate, BinOp, CategoricalCsd, Cld, CldError, Cpc, Csd, Distribution, Expr, FormulaCsd, LinearGaussianCsd,
    LinearTerm, ParentAssignment, ParentValue,
};
pub use ild::{derive_ild, Ild};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("MFrag {mfrag}: ordinary variable {ov} is used without an IsA declaration")]
    UndeclaredOrdinaryVariable { mfrag: String, ov: String },
    #[error("MFrag {mfrag}: ordinary variable {ov} is declared as both {first} and {second}")]
    ConflictingType {
        mfrag: String,
        ov: String,
        first: String,
        second: String,
    },
    #[error("resident {name} has two home MFrags ({first} and {second})")]
    DuplicateResident { name: String, first: String, second: String },
    #[error("MFrag {0} is declared twice")]
    DuplicateMFrag(String),
    #[error("cycle through {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("no home MFrag for {0}")]
    UnknownResident(String),
    #[error("{name} takes {expected} arguments, found {found}")]
    ArityMismatch { name: String, expected: usize, found: usize },
    #[error("resident {resident}: {message}")]
    InvalidCld { resident: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityType {
    pub name: String,
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrdinaryVariable {
    pub name: String,
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextNode {
    IsA { ov: String, entity_type: String },
    Equality { left: String, right: String },
    /// `ov = function(args)`
    Relational { ov: String, function: String, args: Vec<String> },
    /// A boolean function asserted true.
    Predicate { function: String, args: Vec<String> },
}

impl ContextNode {
    pub fn ovs(&self) -> Vec<&str> {
        match self {
            ContextNode::IsA { ov, .. } => vec![ov],
            ContextNode::Equality { left, right } => vec![left, right],
            ContextNode::Relational { ov, args, .. } => std::iter::once(ov.as_str()).chain(args.iter().map(|s| s.as_str())).collect(),
            ContextNode::Predicate { args, .. } => args.iter().map(|s| s.as_str()).collect(),
        }
    }

    pub(crate) fn rename(&mut self, f: &impl Fn(&str) -> String) {
        match self {
            ContextNode::IsA { ov, .. } => *ov = f(ov),
            ContextNode::Equality { left, right } => {
                *left = f(left);
                *right = f(right);
            }
            ContextNode::Relational { ov, args, .. } => {
                *ov = f(ov);
                args.iter_mut().for_each(|a| *a = f(a));
            }
            ContextNode::Predicate { args, .. } => args.iter_mut().for_each(|a| *a = f(a)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueSpace {
    Categorical(Vec<String>),
    Continuous,
    Boolean,
    Entity(String),
}

impl ValueSpace {
    pub fn states(&self) -> Option<Vec<String>> {
        match self {
            ValueSpace::Categorical(s) => Some(s.clone()),
            ValueSpace::Boolean => Some(vec!["True".into(), "False".into()]),
            _ => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ValueSpace::Categorical(_) | ValueSpace::Boolean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentKind {
    Input,
    Resident,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentRef {
    pub kind: ParentKind,
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CldSpec {
    Inline(Cld),
    Named(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidentNode {
    pub name: String,
    pub args: Vec<String>,
    pub value_space: Option<ValueSpace>,
    pub parents: Vec<ParentRef>,
    pub cld: Option<CldSpec>,
}

impl ResidentNode {
    pub fn new(name: impl Into<String>, args: Vec<String>) -> Self {
        ResidentNode {
            name: name.into(),
            args,
            value_space: None,
            parents: vec![],
            cld: None,
        }
    }

    pub fn inline_cld(&self) -> Option<&Cld> {
        match &self.cld {
            Some(CldSpec::Inline(c)) => Some(c),
            _ => None,
        }
    }
}

/// An input node seen from its MFrag: the home resident plus the mapping from the
/// home arguments to the local ordinary variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputNode {
    pub resident: String,
    pub home_mfrag: String,
    pub substitution: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MFrag {
    pub name: String,
    pub contexts: Vec<ContextNode>,
    pub residents: Vec<ResidentNode>,
}

impl MFrag {
    pub fn new(name: impl Into<String>) -> Self {
        MFrag {
            name: name.into(),
            contexts: vec![],
            residents: vec![],
        }
    }

    /// Ordinary variables in IsA declaration order.
    pub fn ordinary_variables(&self) -> Vec<OrdinaryVariable> {
        let mut out: Vec<OrdinaryVariable> = Vec::new();
        for c in &self.contexts {
            if let ContextNode::IsA { ov, entity_type } = c {
                if !out.iter().any(|o| &o.name == ov) {
                    out.push(OrdinaryVariable {
                        name: ov.clone(),
                        entity_type: entity_type.clone(),
                    });
                }
            }
        }
        out
    }

    pub fn type_of(&self, ov: &str) -> Option<&str> {
        self.contexts.iter().find_map(|c| match c {
            ContextNode::IsA { ov: o, entity_type } if o == ov => Some(entity_type.as_str()),
            _ => None,
        })
    }

    pub fn resident(&self, name: &str) -> Option<&ResidentNode> {
        self.residents.iter().find(|r| r.name == name)
    }

    pub fn resident_mut(&mut self, name: &str) -> Option<&mut ResidentNode> {
        self.residents.iter_mut().find(|r| r.name == name)
    }

    /// Distinct input-node references of the MFrag, in first-use order.
    pub fn input_refs(&self) -> Vec<&ParentRef> {
        let mut out: Vec<&ParentRef> = Vec::new();
        for r in &self.residents {
            for p in &r.parents {
                if p.kind == ParentKind::Input && !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<(), ModelError> {
        let mut types: BTreeMap<&str, &str> = BTreeMap::new();
        for c in &self.contexts {
            if let ContextNode::IsA { ov, entity_type } = c {
                if let Some(prev) = types.insert(ov, entity_type) {
                    if prev != entity_type {
                        return Err(ModelError::ConflictingType {
                            mfrag: self.name.clone(),
                            ov: ov.clone(),
                            first: prev.to_string(),
                            second: entity_type.clone(),
                        });
                    }
                }
            }
        }
        let declared = |ov: &str| -> Result<(), ModelError> {
            if types.contains_key(ov) {
                Ok(())
            } else {
                Err(ModelError::UndeclaredOrdinaryVariable {
                    mfrag: self.name.clone(),
                    ov: ov.to_string(),
                })
            }
        };
        for c in &self.contexts {
            for ov in c.ovs() {
                declared(ov)?;
            }
        }
        let mut names = BTreeSet::new();
        for r in &self.residents {
            if !names.insert(r.name.as_str()) {
                return Err(ModelError::DuplicateResident {
                    name: r.name.clone(),
                    first: self.name.clone(),
                    second: self.name.clone(),
                });
            }
            r.args.iter().try_for_each(|a| declared(a))?;
            for p in &r.parents {
                p.args.iter().try_for_each(|a| declared(a))?;
            }
            if let Some(cld) = r.inline_cld() {
                cld.validate().map_err(|e| ModelError::InvalidCld {
                    resident: r.name.clone(),
                    message: e.to_string(),
                })?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MTheory {
    pub mfrags: Vec<MFrag>,
}

/// The entity type ordered by a `Predecessor`-style relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    pub relation: String,
    pub entity_type: String,
}

/// Name of the boolean relation that orders an entity type.
pub const ORDERING_RELATION: &str = "Predecessor";

impl MTheory {
    pub fn new(mfrags: Vec<MFrag>) -> Self {
        MTheory { mfrags }
    }

    pub fn mfrag(&self, name: &str) -> Option<&MFrag> {
        self.mfrags.iter().find(|m| m.name == name)
    }

    /// Index of the home MFrag of a resident and the resident itself.
    pub fn home_of(&self, resident: &str) -> Option<(usize, &ResidentNode)> {
        self.mfrags
            .iter()
            .enumerate()
            .find_map(|(i, m)| m.resident(resident).map(|r| (i, r)))
    }

    pub fn resident(&self, name: &str) -> Option<&ResidentNode> {
        self.home_of(name).map(|(_, r)| r)
    }

    pub fn residents(&self) -> impl Iterator<Item = (&MFrag, &ResidentNode)> {
        self.mfrags.iter().flat_map(|m| m.residents.iter().map(move |r| (m, r)))
    }

    pub fn ordering(&self) -> Option<Ordering> {
        let (i, r) = self.home_of(ORDERING_RELATION)?;
        let m = &self.mfrags[i];
        match r.args.as_slice() {
            [a, b] => {
                let (ta, tb) = (m.type_of(a)?, m.type_of(b)?);
                (ta == tb).then(|| Ordering {
                    relation: ORDERING_RELATION.into(),
                    entity_type: ta.to_string(),
                })
            }
            _ => None,
        }
    }

    /// Entity types named by IsA nodes, sorted by name.
    pub fn entity_types(&self) -> Vec<EntityType> {
        let ordered = self.ordering().map(|o| o.entity_type);
        let names: BTreeSet<&str> = self
            .mfrags
            .iter()
            .flat_map(|m| m.contexts.iter())
            .filter_map(|c| match c {
                ContextNode::IsA { entity_type, .. } => Some(entity_type.as_str()),
                _ => None,
            })
            .collect();
        names
            .into_iter()
            .map(|n| EntityType {
                name: n.to_string(),
                ordered: ordered.as_deref() == Some(n),
            })
            .collect()
    }

    pub fn input_nodes(&self, mfrag: &MFrag) -> Vec<InputNode> {
        mfrag
            .input_refs()
            .into_iter()
            .filter_map(|p| {
                let (h, home) = self.home_of(&p.name)?;
                Some(InputNode {
                    resident: p.name.clone(),
                    home_mfrag: self.mfrags[h].name.clone(),
                    substitution: home.args.iter().cloned().zip(p.args.iter().cloned()).collect(),
                })
            })
            .collect()
    }

    /// Local well-formedness of every MFrag: declared ordinary variables, consistent
    /// types, unique names and well-formed local distributions.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = BTreeSet::new();
        for m in &self.mfrags {
            if !names.insert(m.name.as_str()) {
                return Err(ModelError::DuplicateMFrag(m.name.clone()));
            }
            m.validate()?;
        }
        check_unique_home(self)
    }

    /// Cross-MFrag checks: every input node and relational context names a resident with
    /// a home MFrag and the right arity, discrete residents have no continuous parents,
    /// and the resident graph is acyclic.
    pub fn check_references(&self) -> Result<(), ModelError> {
        self.validate()?;
        for m in &self.mfrags {
            let mut uses: Vec<(&str, usize)> = Vec::new();
            for c in &m.contexts {
                match c {
                    ContextNode::Relational { function, args, .. } | ContextNode::Predicate { function, args } => {
                        uses.push((function, args.len()))
                    }
                    _ => {}
                }
            }
            for r in &m.residents {
                for p in &r.parents {
                    uses.push((&p.name, p.args.len()));
                    let parent = self.resident(&p.name);
                    if let (Some(ValueSpace::Categorical(_) | ValueSpace::Boolean), Some(Some(ValueSpace::Continuous))) =
                        (&r.value_space, parent.map(|p| &p.value_space))
                    {
                        return Err(ModelError::InvalidCld {
                            resident: r.name.clone(),
                            message: format!("discrete node with continuous parent {}", p.name),
                        });
                    }
                }
            }
            for (name, arity) in uses {
                let home = self.resident(name).ok_or_else(|| ModelError::UnknownResident(name.to_string()))?;
                if home.args.len() != arity {
                    return Err(ModelError::ArityMismatch {
                        name: name.to_string(),
                        expected: home.args.len(),
                        found: arity,
                    });
                }
            }
        }
        check_acyclic(self)
    }
}

impl fmt::Display for ValueSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueSpace::Categorical(s) => write!(f, "cat {}", s.join(" | ")),
            ValueSpace::Continuous => write!(f, "cont"),
            ValueSpace::Boolean => write!(f, "bool"),
            ValueSpace::Entity(t) => write!(f, "entity {t}"),
        }
    }
}
