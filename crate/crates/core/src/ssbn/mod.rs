//! Situation-specific Bayesian networks: grounding an MTheory over concrete entities
//! and evidence, and exact inference on the result.

mod clg;
mod ground;
mod network;
mod ve;

use std::collections::BTreeMap;
use std::fmt;

use crate::mtheory::{CldError, Ild, MTheory, ValueSpace};

pub use clg::infer_clg;
pub use ground::ground;
pub use network::{Cpd, LinearRow, NetNode, Network, NodeKind};
pub use ve::infer_discrete;

#[derive(Debug, thiserror::Error)]
pub enum InferError {
    #[error("malformed node id {0}")]
    BadNodeId(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("entity id {0} contains '_'")]
    BadEntityId(String),
    #[error("{node}: value {value} is outside its value space")]
    BadEvidence { node: String, value: String },
    #[error("{0} has no local distribution")]
    MissingDistribution(String),
    #[error("{0} is entity-valued and cannot be a network node")]
    EntityValued(String),
    #[error("{0} is not conditional linear Gaussian")]
    NotClg(String),
    #[error("query {0} depends on continuous nodes; use CLG inference")]
    ContinuousInDiscreteQuery(String),
    #[error("{node}: {source}")]
    Cld {
        node: String,
        #[source]
        source: CldError,
    },
    #[error("ground network has a cycle through {}", .0.join(" -> "))]
    CycleAtGroundLevel(Vec<String>),
    #[error("{0} discrete configurations are too many to enumerate")]
    TooManyConfigurations(u128),
    #[error("evidence has probability zero")]
    ImpossibleEvidence,
    #[error("evidence line {line}: {message}")]
    EvidenceFile { line: usize, message: String },
}

impl InferError {
    pub fn code(&self) -> &'static str {
        match self {
            InferError::BadNodeId(_) | InferError::BadEntityId(_) => "E_NODE_ID",
            InferError::UnknownNode(_) => "E_UNKNOWN_NODE",
            InferError::BadEvidence { .. } | InferError::EvidenceFile { .. } => "E_EVIDENCE",
            InferError::MissingDistribution(_) => "E_MISSING_CLD",
            InferError::EntityValued(_) => "E_ENTITY_VALUED",
            InferError::NotClg(_) => "E_NOT_CLG",
            InferError::ContinuousInDiscreteQuery(_) => "E_CONTINUOUS_IN_DISCRETE",
            InferError::Cld { .. } => "E_CLD",
            InferError::CycleAtGroundLevel(_) => "E_CYCLE",
            InferError::TooManyConfigurations(_) => "E_TOO_LARGE",
            InferError::ImpossibleEvidence => "E_IMPOSSIBLE_EVIDENCE",
        }
    }
}

/// `Name_e1_e2` for a resident applied to entity ids.
pub fn node_id(resident: &str, args: &[String]) -> String {
    let mut s = resident.to_string();
    for a in args {
        s.push('_');
        s.push_str(a);
    }
    s
}

/// Splits a node id into resident name and entity ids, matching the longest resident
/// name that is a prefix of the id.
pub fn parse_node_id(m: &MTheory, id: &str) -> Result<(String, Vec<String>), InferError> {
    let mut best: Option<(&str, usize)> = None;
    for (_, r) in m.residents() {
        let n = r.name.as_str();
        let fits = id == n || (id.starts_with(n) && id[n.len()..].starts_with('_'));
        if fits && best.is_none_or(|(b, _)| n.len() > b.len()) {
            best = Some((n, r.args.len()));
        }
    }
    let (name, arity) = best.ok_or_else(|| InferError::UnknownNode(id.to_string()))?;
    let rest = &id[name.len()..];
    let args: Vec<String> = if rest.is_empty() {
        vec![]
    } else {
        rest[1..].split('_').map(str::to_string).collect()
    };
    if args.len() != arity || args.iter().any(|a| a.is_empty()) {
        return Err(InferError::BadNodeId(id.to_string()));
    }
    Ok((name.to_string(), args))
}

/// Entity instances per type, and the total order of the ordered type if any.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntityInstanceSet {
    types: BTreeMap<String, Vec<String>>,
    order: Option<(String, Vec<String>)>,
}

impl EntityInstanceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, entity_type: &str, id: &str) -> Result<(), InferError> {
        if id.contains('_') || id.is_empty() {
            return Err(InferError::BadEntityId(id.to_string()));
        }
        let v = self.types.entry(entity_type.to_string()).or_default();
        if !v.iter().any(|x| x == id) {
            v.push(id.to_string());
        }
        Ok(())
    }

    pub fn with(mut self, entity_type: &str, ids: &[&str]) -> Result<Self, InferError> {
        for id in ids {
            self.add(entity_type, id)?;
        }
        Ok(self)
    }

    /// Orders an entity type; instances not yet listed are added.
    pub fn set_order(&mut self, entity_type: &str, ids: Vec<String>) -> Result<(), InferError> {
        for id in &ids {
            self.add(entity_type, id)?;
        }
        self.order = Some((entity_type.to_string(), ids));
        Ok(())
    }

    pub fn instances(&self, entity_type: &str) -> &[String] {
        self.types.get(entity_type).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// True when `b` immediately follows `a` in the ordered type.
    pub fn precedes(&self, a: &str, b: &str) -> bool {
        self.order.as_ref().is_some_and(|(_, ids)| ids.windows(2).any(|w| w[0] == a && w[1] == b))
    }

    /// Collects the entities named by node ids and by entity-valued evidence. The ordered
    /// type is sorted naturally (`T2` before `T10`).
    pub fn from_ids(m: &MTheory, ids: &[&str], evidence: &Evidence) -> Result<Self, InferError> {
        let mut set = EntityInstanceSet::new();
        let all = ids.iter().copied().chain(evidence.values.keys().map(|s| s.as_str()));
        for id in all {
            let (name, args) = parse_node_id(m, id)?;
            let (h, r) = m.home_of(&name).expect("parsed resident");
            for (ov, a) in r.args.iter().zip(&args) {
                if let Some(t) = m.mfrags[h].type_of(ov) {
                    set.add(t, a)?;
                }
            }
            if let (Some(ValueSpace::Entity(t)), Some(v)) = (&r.value_space, evidence.values.get(id)) {
                set.add(t, v)?;
            }
        }
        if let Some(o) = m.ordering() {
            let mut ids = set.instances(&o.entity_type).to_vec();
            ids.sort_by_key(|a| natural_key(a));
            set.set_order(&o.entity_type, ids)?;
        }
        Ok(set)
    }
}

fn natural_key(s: &str) -> (String, u64, String) {
    let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    let (head, tail) = s.split_at(s.len() - digits);
    (head.to_string(), tail.parse().unwrap_or(0), s.to_string())
}

/// Observed values by node id, as written (`High`, `True`, `31.5`, `r1`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evidence {
    pub values: BTreeMap<String, String>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, node: impl Into<String>, value: impl Into<String>) {
        self.values.insert(node.into(), value.into());
    }

    pub fn with(mut self, node: &str, value: &str) -> Self {
        self.set(node, value);
        self
    }

    pub fn get(&self, node: &str) -> Option<&str> {
        self.values.get(node).map(|s| s.as_str())
    }

    /// Reads `node_id,value` rows; a header row is optional.
    pub fn parse_csv(text: &str) -> Result<Evidence, InferError> {
        let mut ev = Evidence::new();
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| InferError::EvidenceFile {
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.len() != 2 {
                return Err(InferError::EvidenceFile {
                    line: i + 1,
                    message: format!("expected node_id,value; found {} fields", rec.len()),
                });
            }
            if i == 0 && &rec[0] == "node_id" {
                continue;
            }
            ev.set(&rec[0], &rec[1]);
        }
        Ok(ev)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundNode {
    pub id: String,
    pub resident: String,
    pub args: Vec<String>,
    pub value_space: ValueSpace,
    pub ild: Ild,
}

impl GroundNode {
    pub fn parent_ids(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for ids in self.ild.parents.values() {
            for id in ids {
                if !out.contains(&id.as_str()) {
                    out.push(id);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ssbn {
    /// Nodes in topological order.
    pub nodes: Vec<GroundNode>,
    pub evidence: Evidence,
    /// Context constraints that could not be decided, one line each.
    pub reports: Vec<String>,
}

impl Ssbn {
    pub fn node(&self, id: &str) -> Option<&GroundNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edges(&self) -> Vec<(&str, &str)> {
        self.nodes
            .iter()
            .flat_map(|n| n.parent_ids().into_iter().map(move |p| (p, n.id.as_str())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryResult {
    Discrete(Vec<(String, f64)>),
    Continuous {
        components: Vec<Component>,
        mean: f64,
        variance: f64,
    },
}

impl QueryResult {
    pub fn probability(&self, state: &str) -> Option<f64> {
        match self {
            QueryResult::Discrete(p) => p.iter().find(|(s, _)| s == state).map(|(_, x)| *x),
            QueryResult::Continuous { .. } => None,
        }
    }

    pub fn moments(&self) -> Option<(f64, f64)> {
        match self {
            QueryResult::Continuous { mean, variance, .. } => Some((*mean, *variance)),
            QueryResult::Discrete(_) => None,
        }
    }

    pub(crate) fn mixture(components: Vec<Component>) -> QueryResult {
        let mean: f64 = components.iter().map(|c| c.weight * c.mean).sum();
        let second: f64 = components.iter().map(|c| c.weight * (c.variance + c.mean * c.mean)).sum();
        QueryResult::Continuous {
            components,
            mean,
            variance: (second - mean * mean).max(0.0),
        }
    }
}

impl fmt::Display for QueryResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use crate::script::format_number as n;
        match self {
            QueryResult::Discrete(p) => {
                for (s, x) in p {
                    writeln!(f, "{s:<16} {}", n(*x))?;
                }
                Ok(())
            }
            QueryResult::Continuous {
                components,
                mean,
                variance,
            } => {
                writeln!(f, "mean     {}", n(*mean))?;
                writeln!(f, "variance {}", n(*variance))?;
                for c in components {
                    writeln!(f, "  weight {} mean {} variance {}", n(c.weight), n(c.mean), n(c.variance))?;
                }
                Ok(())
            }
        }
    }
}

/// Posterior of one node: variable elimination when everything it depends on is
/// discrete, Gaussian mixtures otherwise.
pub fn infer(net: &Network, query: &str, evidence: &Evidence) -> Result<QueryResult, InferError> {
    match infer_discrete(net, query, evidence) {
        Err(InferError::ContinuousInDiscreteQuery(_)) => infer_clg(net, query, evidence),
        r => r,
    }
}
