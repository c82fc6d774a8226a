use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::mtheory::{derive_ild, CldSpec, ContextNode, MFrag, MTheory, ValueSpace, ORDERING_RELATION};

use super::{node_id, parse_node_id, EntityInstanceSet, Evidence, GroundNode, InferError, Ssbn};

type Binding = BTreeMap<String, String>;

struct Grounder<'a> {
    entities: &'a EntityInstanceSet,
    evidence: &'a Evidence,
    reports: BTreeSet<String>,
}

impl Grounder<'_> {
    /// `None` while some variable of the node is unbound.
    fn holds(&mut self, c: &ContextNode, b: &Binding) -> Option<bool> {
        let vals = |args: &[String]| args.iter().map(|a| b.get(a).cloned()).collect::<Option<Vec<String>>>();
        Some(match c {
            ContextNode::IsA { ov, entity_type } => {
                let v = b.get(ov)?;
                self.entities.instances(entity_type).contains(v)
            }
            ContextNode::Equality { left, right } => b.get(left)? == b.get(right)?,
            ContextNode::Relational { ov, function, args } => {
                let target = b.get(ov)?;
                let id = node_id(function, &vals(args)?);
                match self.evidence.get(&id) {
                    Some(v) => v == target,
                    None => {
                        self.reports.insert(format!("unbound context: {id} has no evidence"));
                        false
                    }
                }
            }
            ContextNode::Predicate { function, args } => {
                let vals = vals(args)?;
                match self.evidence.get(&node_id(function, &vals)) {
                    Some(v) => v == "True",
                    None if function == ORDERING_RELATION && vals.len() == 2 => self.entities.precedes(&vals[0], &vals[1]),
                    None => false,
                }
            }
        })
    }

    /// Every type-correct binding of the MFrag's variables that extends `fixed` and
    /// satisfies all context nodes.
    fn bindings(&mut self, frag: &MFrag, fixed: Binding) -> Vec<Binding> {
        let free: Vec<(String, String)> = frag
            .contexts
            .iter()
            .filter_map(|c| match c {
                ContextNode::IsA { ov, entity_type } if !fixed.contains_key(ov) => Some((ov.clone(), entity_type.clone())),
                _ => None,
            })
            .collect();
        let mut out = Vec::new();
        let mut b = fixed;
        self.extend(frag, &free, &mut b, 0, &mut out);
        out
    }

    fn extend(&mut self, frag: &MFrag, free: &[(String, String)], b: &mut Binding, i: usize, out: &mut Vec<Binding>) {
        // Only nodes that became decidable with the latest variable need checking.
        let latest = if i == 0 { None } else { Some(free[i - 1].0.as_str()) };
        for c in &frag.contexts {
            if latest.is_some_and(|l| !c.ovs().contains(&l)) {
                continue;
            }
            if self.holds(c, b) == Some(false) {
                return;
            }
        }
        if i == free.len() {
            out.push(b.clone());
            return;
        }
        let (ov, ty) = &free[i];
        for e in self.entities.instances(ty).to_vec() {
            b.insert(ov.clone(), e);
            self.extend(frag, free, b, i + 1, out);
        }
        b.remove(ov);
    }
}

fn context_only(m: &MTheory) -> BTreeSet<String> {
    let mut ctx = BTreeSet::new();
    let mut parents = BTreeSet::new();
    for f in &m.mfrags {
        for c in &f.contexts {
            if let ContextNode::Relational { function, .. } | ContextNode::Predicate { function, .. } = c {
                ctx.insert(function.clone());
            }
        }
        for r in &f.residents {
            parents.extend(r.parents.iter().map(|p| p.name.clone()));
        }
    }
    ctx.difference(&parents).cloned().collect()
}

/// Builds the network for the query nodes and evidence: each node's parents are the
/// instances allowed by its home MFrag's context under the given entities and evidence.
/// Evidence on relations used only as context constraints does not become a node.
pub fn ground(m: &MTheory, entities: &EntityInstanceSet, evidence: &Evidence, queries: &[&str]) -> Result<Ssbn, InferError> {
    let skip = context_only(m);
    let mut queue: VecDeque<String> = queries.iter().map(|q| q.to_string()).collect();
    for id in evidence.values.keys() {
        let (name, _) = parse_node_id(m, id)?;
        let r = m.resident(&name).expect("parsed resident");
        if !skip.contains(&name) && !matches!(r.value_space, Some(ValueSpace::Entity(_))) {
            queue.push_back(id.clone());
        }
    }
    let mut g = Grounder {
        entities,
        evidence,
        reports: BTreeSet::new(),
    };
    let mut nodes: BTreeMap<String, GroundNode> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    while let Some(id) = queue.pop_front() {
        if nodes.contains_key(&id) {
            continue;
        }
        let (name, args) = parse_node_id(m, &id)?;
        let (h, r) = m.home_of(&name).expect("parsed resident");
        let frag = &m.mfrags[h];
        let value_space = match &r.value_space {
            Some(ValueSpace::Entity(_)) => return Err(InferError::EntityValued(id)),
            Some(vs) => vs.clone(),
            None => return Err(InferError::MissingDistribution(id)),
        };
        let cld = match &r.cld {
            Some(CldSpec::Inline(c)) if !c.has_theta() => c,
            _ => return Err(InferError::MissingDistribution(id)),
        };
        let mut parents: BTreeMap<String, Vec<String>> = r.parents.iter().map(|p| (p.name.clone(), vec![])).collect();
        if !r.parents.is_empty() {
            let fixed: Binding = r.args.iter().cloned().zip(args.iter().cloned()).collect();
            for b in g.bindings(frag, fixed) {
                for p in &r.parents {
                    let vals: Vec<String> = p.args.iter().map(|a| b[a].clone()).collect();
                    let pid = node_id(&p.name, &vals);
                    let list = parents.get_mut(&p.name).expect("declared parent");
                    if !list.contains(&pid) {
                        list.push(pid.clone());
                        queue.push_back(pid);
                    }
                }
            }
        }
        let ild = derive_ild(&id, cld, &parents);
        order.push(id.clone());
        nodes.insert(
            id.clone(),
            GroundNode {
                id,
                resident: name,
                args,
                value_space,
                ild,
            },
        );
    }
    let nodes = topological(nodes, &order)?;
    Ok(Ssbn {
        nodes,
        evidence: evidence.clone(),
        reports: g.reports.into_iter().collect(),
    })
}

fn topological(mut nodes: BTreeMap<String, GroundNode>, discovery: &[String]) -> Result<Vec<GroundNode>, InferError> {
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for n in nodes.values() {
        indegree.entry(&n.id).or_insert(0);
        for p in n.parent_ids() {
            *indegree.entry(&n.id).or_insert(0) += 1;
            children.entry(p).or_default().push(&n.id);
        }
    }
    // Discovery order reversed puts ancestors of the first query early and keeps ties stable.
    let mut ready: VecDeque<&str> = discovery.iter().rev().map(|s| s.as_str()).filter(|id| indegree[id] == 0).collect();
    let mut sorted: Vec<String> = Vec::new();
    while let Some(id) = ready.pop_front() {
        sorted.push(id.to_string());
        for c in children.get(id).cloned().unwrap_or_default() {
            let d = indegree.get_mut(c).expect("known node");
            *d -= 1;
            if *d == 0 {
                ready.push_back(c);
            }
        }
    }
    if sorted.len() != nodes.len() {
        let stuck: Vec<String> = indegree.iter().filter(|(_, d)| **d > 0).map(|(k, _)| k.to_string()).collect();
        return Err(InferError::CycleAtGroundLevel(stuck));
    }
    Ok(sorted.into_iter().map(|id| nodes.remove(&id).expect("node")).collect())
}
