use std::collections::{BTreeMap, HashMap};

use crate::mtheory::{Distribution, ParentAssignment, ParentValue, ValueSpace};

use super::{InferError, Ssbn};

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Discrete(Vec<String>),
    Continuous,
}

/// Mean `intercept + Σ weights·parents`, fixed variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub variance: f64,
}

/// Conditional distributions with one row per configuration of the discrete parents,
/// the first parent varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub enum Cpd {
    Table(Vec<Vec<f64>>),
    Linear(Vec<LinearRow>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetNode {
    pub id: String,
    pub kind: NodeKind,
    pub discrete_parents: Vec<usize>,
    pub continuous_parents: Vec<usize>,
    pub cpd: Cpd,
}

impl NetNode {
    pub fn card(&self) -> usize {
        match &self.kind {
            NodeKind::Discrete(s) => s.len(),
            NodeKind::Continuous => 0,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, NodeKind::Discrete(_))
    }

    pub fn parents(&self) -> impl Iterator<Item = usize> + '_ {
        self.discrete_parents.iter().chain(&self.continuous_parents).copied()
    }
}

/// A hybrid Bayesian network whose nodes are stored in topological order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    pub nodes: Vec<NetNode>,
    index: HashMap<String, usize>,
}

const LINEAR_TOL: f64 = 1e-7;

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node(&self, id: &str) -> Option<&NetNode> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn resolve(&self, parents: &[&str]) -> Result<Vec<usize>, InferError> {
        parents
            .iter()
            .map(|p| self.index_of(p).ok_or_else(|| InferError::UnknownNode(p.to_string())))
            .collect()
    }

    /// Number of configurations of the given discrete nodes.
    pub fn configurations(&self, nodes: &[usize]) -> usize {
        nodes.iter().map(|&i| self.nodes[i].card()).product()
    }

    /// State index of each node in configuration `c`.
    pub fn decode(&self, nodes: &[usize], mut c: usize) -> Vec<usize> {
        let mut out = vec![0; nodes.len()];
        for (k, &i) in nodes.iter().enumerate().rev() {
            let card = self.nodes[i].card();
            out[k] = c % card;
            c /= card;
        }
        out
    }

    pub fn encode(&self, nodes: &[usize], states: &[usize]) -> usize {
        nodes.iter().zip(states).fold(0, |acc, (&i, &s)| acc * self.nodes[i].card() + s)
    }

    fn push(&mut self, node: NetNode) -> Result<usize, InferError> {
        if self.index.contains_key(&node.id) {
            return Err(InferError::BadNodeId(format!("{} (duplicate)", node.id)));
        }
        let rows = self.configurations(&node.discrete_parents);
        let ok = match &node.cpd {
            Cpd::Table(t) => t.len() == rows && t.iter().all(|r| r.len() == node.card()),
            Cpd::Linear(t) => t.len() == rows && t.iter().all(|r| r.weights.len() == node.continuous_parents.len()),
        };
        if !ok || node.discrete_parents.iter().any(|&p| !self.nodes[p].is_discrete()) {
            return Err(InferError::NotClg(node.id));
        }
        let i = self.nodes.len();
        self.index.insert(node.id.clone(), i);
        self.nodes.push(node);
        Ok(i)
    }

    /// Adds a discrete node; parents must already be present and discrete.
    pub fn add_discrete(&mut self, id: &str, states: &[&str], parents: &[&str], table: Vec<Vec<f64>>) -> Result<usize, InferError> {
        let discrete_parents = self.resolve(parents)?;
        self.push(NetNode {
            id: id.to_string(),
            kind: NodeKind::Discrete(states.iter().map(|s| s.to_string()).collect()),
            discrete_parents,
            continuous_parents: vec![],
            cpd: Cpd::Table(table),
        })
    }

    /// Adds a conditional linear Gaussian node.
    pub fn add_continuous(
        &mut self,
        id: &str,
        discrete_parents: &[&str],
        continuous_parents: &[&str],
        rows: Vec<LinearRow>,
    ) -> Result<usize, InferError> {
        let discrete_parents = self.resolve(discrete_parents)?;
        let continuous_parents = self.resolve(continuous_parents)?;
        if continuous_parents.iter().any(|&p| self.nodes[p].is_discrete()) {
            return Err(InferError::NotClg(id.to_string()));
        }
        self.push(NetNode {
            id: id.to_string(),
            kind: NodeKind::Continuous,
            discrete_parents,
            continuous_parents,
            cpd: Cpd::Linear(rows),
        })
    }

    /// Tabulates every instance-level distribution per configuration of its discrete
    /// parents. Continuous children get the linear form of their mean, read off by
    /// probing the distribution with unit parent values.
    pub fn from_ssbn(ssbn: &Ssbn) -> Result<Network, InferError> {
        let mut net = Network::new();
        for g in &ssbn.nodes {
            let parents = net.resolve(&g.parent_ids())?;
            let (discrete_parents, continuous_parents): (Vec<usize>, Vec<usize>) =
                parents.iter().partition(|&&p| net.nodes[p].is_discrete());
            let cld_err = |source| InferError::Cld {
                node: g.id.clone(),
                source,
            };
            let assignment = |config: &[usize], reals: &[f64]| -> ParentAssignment {
                let mut values: BTreeMap<String, ParentValue> = BTreeMap::new();
                for (&p, &s) in discrete_parents.iter().zip(config) {
                    let NodeKind::Discrete(states) = &net.nodes[p].kind else { unreachable!() };
                    values.insert(net.nodes[p].id.clone(), ParentValue::State(states[s].clone()));
                }
                for (&p, &x) in continuous_parents.iter().zip(reals) {
                    values.insert(net.nodes[p].id.clone(), ParentValue::Real(x));
                }
                g.ild.assignment(&values).expect("all parents valued")
            };
            let rows = net.configurations(&discrete_parents);
            let node = match &g.value_space {
                ValueSpace::Categorical(_) | ValueSpace::Boolean => {
                    if !continuous_parents.is_empty() {
                        return Err(InferError::NotClg(g.id.clone()));
                    }
                    let states = g.value_space.states().expect("discrete");
                    let mut table = Vec::with_capacity(rows);
                    for c in 0..rows {
                        let config = net.decode(&discrete_parents, c);
                        let d = g.ild.resolve_assignment(&assignment(&config, &[])).map_err(cld_err)?;
                        let Distribution::Categorical(entries) = d else {
                            return Err(InferError::NotClg(g.id.clone()));
                        };
                        table.push(
                            states
                                .iter()
                                .map(|s| entries.iter().find(|(x, _)| x == s).map_or(0.0, |(_, p)| *p))
                                .collect(),
                        );
                    }
                    NetNode {
                        id: g.id.clone(),
                        kind: NodeKind::Discrete(states),
                        discrete_parents,
                        continuous_parents,
                        cpd: Cpd::Table(table),
                    }
                }
                ValueSpace::Continuous => {
                    let n = continuous_parents.len();
                    let mut table = Vec::with_capacity(rows);
                    for c in 0..rows {
                        let config = net.decode(&discrete_parents, c);
                        let gauss = |x: &[f64]| -> Result<(f64, f64), InferError> {
                            match g.ild.resolve_assignment(&assignment(&config, x)).map_err(cld_err)? {
                                Distribution::Gaussian { mean, variance } => Ok((mean, variance)),
                                Distribution::Categorical(_) => Err(InferError::NotClg(g.id.clone())),
                            }
                        };
                        let (m0, v0) = gauss(&vec![0.0; n])?;
                        let mut weights = Vec::with_capacity(n);
                        for j in 0..n {
                            let mut x = vec![0.0; n];
                            x[j] = 1.0;
                            let (m1, v1) = gauss(&x)?;
                            x[j] = 2.0;
                            let (m2, _) = gauss(&x)?;
                            let w = m1 - m0;
                            let scale = 1.0 + w.abs() + m0.abs();
                            if (v1 - v0).abs() > LINEAR_TOL * (1.0 + v0) || (m2 - m0 - 2.0 * w).abs() > LINEAR_TOL * scale {
                                return Err(InferError::NotClg(g.id.clone()));
                            }
                            weights.push(w);
                        }
                        if n > 1 {
                            let (m, _) = gauss(&vec![1.0; n])?;
                            let total: f64 = weights.iter().sum();
                            if (m - m0 - total).abs() > LINEAR_TOL * (1.0 + total.abs() + m0.abs()) {
                                return Err(InferError::NotClg(g.id.clone()));
                            }
                        }
                        table.push(LinearRow {
                            intercept: m0,
                            weights,
                            variance: v0,
                        });
                    }
                    NetNode {
                        id: g.id.clone(),
                        kind: NodeKind::Continuous,
                        discrete_parents,
                        continuous_parents,
                        cpd: Cpd::Linear(table),
                    }
                }
                ValueSpace::Entity(_) => return Err(InferError::EntityValued(g.id.clone())),
            };
            net.push(node)?;
        }
        Ok(net)
    }

    /// The nodes together with all their ancestors.
    pub fn ancestral_closure(&self, seeds: &[usize]) -> Vec<usize> {
        let mut keep = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = seeds.to_vec();
        while let Some(i) = stack.pop() {
            if !keep[i] {
                keep[i] = true;
                stack.extend(self.nodes[i].parents());
            }
        }
        (0..self.nodes.len()).filter(|&i| keep[i]).collect()
    }

    /// Evidence split into discrete state indices and continuous values. Ids that are not
    /// nodes are ignored.
    pub(crate) fn split_evidence(
        &self,
        evidence: &super::Evidence,
    ) -> Result<(BTreeMap<usize, usize>, BTreeMap<usize, f64>), InferError> {
        let mut d = BTreeMap::new();
        let mut c = BTreeMap::new();
        for (id, v) in &evidence.values {
            let Some(i) = self.index_of(id) else { continue };
            let bad = || InferError::BadEvidence {
                node: id.clone(),
                value: v.clone(),
            };
            match &self.nodes[i].kind {
                NodeKind::Discrete(states) => {
                    d.insert(i, states.iter().position(|s| s == v).ok_or_else(bad)?);
                }
                NodeKind::Continuous => {
                    let x: f64 = v.parse().map_err(|_| bad())?;
                    if !x.is_finite() {
                        return Err(bad());
                    }
                    c.insert(i, x);
                }
            }
        }
        Ok((d, c))
    }
}
