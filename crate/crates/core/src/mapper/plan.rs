use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::mtheory::ORDERING_RELATION;
use crate::relational::{AttrKind, Database, RelationClass, RelationSchema};

use super::{CausalRule, MapperError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRole {
    Child,
    Link,
    Ordering,
    Parent,
}

/// `alias.attribute`
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlanAttr {
    pub alias: String,
    pub attribute: String,
}

impl PlanAttr {
    fn new(alias: &str, attribute: &str) -> Self {
        PlanAttr {
            alias: alias.to_string(),
            attribute: attribute.to_string(),
        }
    }
}

impl fmt::Display for PlanAttr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.alias, self.attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinCondition {
    pub left: PlanAttr,
    pub right: PlanAttr,
}

impl fmt::Display for JoinCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinStep {
    pub alias: String,
    pub relation: String,
    pub role: StepRole,
    /// Key attributes and the entity relation each one ranges over.
    pub keys: Vec<(String, String)>,
    /// True for a relationship without non-key attributes (a bare predicate).
    pub attribute_free: bool,
    /// Equalities with attributes of earlier steps.
    pub conditions: Vec<JoinCondition>,
}

impl JoinStep {
    pub fn is_key(&self, attribute: &str) -> bool {
        self.keys.iter().any(|(k, _)| k == attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinPlan {
    pub steps: Vec<JoinStep>,
    pub child: PlanAttr,
    /// One entry per rule parent, in rule order.
    pub parents: Vec<PlanAttr>,
}

impl JoinPlan {
    pub fn step(&self, alias: &str) -> Option<&JoinStep> {
        self.steps.iter().find(|s| s.alias == alias)
    }

    pub fn is_identity(&self) -> bool {
        self.steps.len() == 1
    }
}

impl fmt::Display for JoinPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            if i == 0 {
                write!(f, "{}", s.alias)?;
            } else {
                let conds: Vec<String> = s.conditions.iter().map(|c| c.to_string()).collect();
                write!(f, " JOIN {}", s.relation)?;
                if s.alias != s.relation {
                    write!(f, " AS {}", s.alias)?;
                }
                write!(f, " ON {}", conds.join(" AND "))?;
            }
        }
        Ok(())
    }
}

fn step_for(schema: &RelationSchema, alias: String, role: StepRole) -> JoinStep {
    let keys = schema
        .key_attributes()
        .map(|a| {
            let target = match &a.kind {
                AttrKind::ForeignKey(t) => t.clone(),
                _ => schema.name.clone(),
            };
            (a.name.clone(), target)
        })
        .collect();
    JoinStep {
        alias,
        relation: schema.name.clone(),
        role,
        keys,
        attribute_free: schema.classify() == RelationClass::Relationship && schema.non_key_attributes().next().is_none(),
        conditions: vec![],
    }
}

/// Attributes that range over an entity relation: keys and foreign keys.
fn typed_attrs(schema: &RelationSchema) -> Vec<(&str, &str, bool)> {
    schema
        .attributes
        .iter()
        .filter_map(|a| {
            let is_key = schema.is_key(&a.name);
            match &a.kind {
                AttrKind::ForeignKey(t) => Some((a.name.as_str(), t.as_str(), is_key)),
                AttrKind::Key => Some((a.name.as_str(), schema.name.as_str(), true)),
                _ => None,
            }
        })
        .collect()
}

/// Equalities between an earlier alias and a new one over every shared entity type.
/// Attributes of one type are paired when unique, otherwise by equal names.
fn pair_conditions(
    db: &Database,
    earlier: &JoinStep,
    new: &JoinStep,
    skip_type: Option<&str>,
) -> Result<Vec<JoinCondition>, MapperError> {
    let es = &db.require(&earlier.relation)?.schema;
    let ns = &db.require(&new.relation)?.schema;
    let (ea, na) = (typed_attrs(es), typed_attrs(ns));
    let mut types: Vec<&str> = Vec::new();
    for (_, t, _) in &ea {
        if !types.contains(t) && Some(*t) != skip_type {
            types.push(t);
        }
    }
    let mut out = Vec::new();
    for ty in types {
        let mut left: Vec<(&str, bool)> = ea.iter().filter(|a| a.1 == ty).map(|a| (a.0, a.2)).collect();
        let mut right: Vec<(&str, bool)> = na.iter().filter(|a| a.1 == ty).map(|a| (a.0, a.2)).collect();
        if right.is_empty() {
            continue;
        }
        let mut pairs = Vec::new();
        if left.len() == 1 && right.len() == 1 {
            pairs.push((left[0], right[0]));
        } else {
            left.retain(|l| match right.iter().position(|r| r.0 == l.0) {
                Some(i) => {
                    pairs.push((*l, right.remove(i)));
                    false
                }
                None => true,
            });
            match (left.len(), right.len()) {
                (0, _) | (_, 0) => {}
                (1, 1) => pairs.push((left[0], right[0])),
                _ => {
                    return Err(MapperError::AmbiguousHint(format!(
                        "{} and {} share several {ty} attributes that cannot be paired by name",
                        earlier.alias, new.alias
                    )))
                }
            }
        }
        pairs.sort_by_key(|(l, _)| ea.iter().position(|a| a.0 == l.0));
        for ((l, lkey), (r, rkey)) in pairs {
            if !lkey && !rkey {
                continue;
            }
            let (l, r) = (PlanAttr::new(&earlier.alias, l), PlanAttr::new(&new.alias, r));
            let new_is_entity_key = rkey && ns.classify() == RelationClass::Entity;
            out.push(if new_is_entity_key {
                JoinCondition { left: r, right: l }
            } else {
                JoinCondition { left: l, right: r }
            });
        }
    }
    Ok(out)
}

/// Undirected relation graph: foreign-key edges plus edges between relations that
/// reference a common entity relation.
fn relation_graph(db: &Database) -> BTreeMap<String, BTreeSet<String>> {
    let mut g: BTreeMap<String, BTreeSet<String>> = db.relation_names().iter().map(|n| (n.to_string(), BTreeSet::new())).collect();
    let mut referencing: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for e in db.fk_edges() {
        if e.from != e.to {
            g.get_mut(&e.from).expect("known").insert(e.to.clone());
            g.get_mut(&e.to).expect("known").insert(e.from.clone());
        }
        referencing.entry(e.to).or_default().insert(e.from);
    }
    for users in referencing.values() {
        for a in users {
            for b in users {
                if a != b {
                    g.get_mut(a).expect("known").insert(b.clone());
                }
            }
        }
    }
    g
}

/// Shortest path by relation count; among equally short paths the lexicographically
/// smallest relation-name sequence.
fn shortest_path(db: &Database, from: &str, to: &str) -> Option<Vec<String>> {
    let g = relation_graph(db);
    let mut prev: HashMap<String, String> = HashMap::new();
    let mut queue = VecDeque::from([from.to_string()]);
    let mut seen = BTreeSet::from([from.to_string()]);
    while let Some(n) = queue.pop_front() {
        if n == to {
            let mut path = vec![n.clone()];
            let mut cur = n;
            while let Some(p) = prev.get(&cur) {
                path.push(p.clone());
                cur = p.clone();
            }
            path.reverse();
            return Some(path);
        }
        for m in g.get(&n)? {
            if seen.insert(m.clone()) {
                prev.insert(m.clone(), n.clone());
                queue.push_back(m.clone());
            }
        }
    }
    None
}

struct Builder<'a> {
    db: &'a Database,
    steps: Vec<JoinStep>,
    by_prefix: HashMap<Vec<String>, String>,
    /// Aliases at another position of the ordered type; later steps do not join them.
    shifted: BTreeSet<String>,
}

impl Builder<'_> {
    fn fresh_alias(&self, base: &str) -> String {
        if !self.steps.iter().any(|s| s.alias == base) {
            return base.to_string();
        }
        (2..)
            .map(|i| format!("{base}_{i}"))
            .find(|a| !self.steps.iter().any(|s| &s.alias == a))
            .expect("unbounded")
    }

    fn push(&mut self, relation: &str, alias: String, role: StepRole, conditions: Vec<JoinCondition>) -> Result<String, MapperError> {
        let schema = &self.db.require(relation)?.schema;
        let mut step = step_for(schema, alias.clone(), role);
        step.conditions = conditions;
        self.steps.push(step);
        Ok(alias)
    }

    /// Adds a relation joined against every earlier step.
    fn push_joined(&mut self, relation: &str, role: StepRole) -> Result<String, MapperError> {
        let alias = self.fresh_alias(relation);
        let schema = &self.db.require(relation)?.schema;
        let probe = step_for(schema, alias.clone(), role);
        let mut conditions = Vec::new();
        for e in self.steps.iter().filter(|e| !self.shifted.contains(&e.alias)) {
            conditions.extend(pair_conditions(self.db, e, &probe, None)?);
        }
        if conditions.is_empty() {
            return Err(MapperError::AmbiguousHint(format!(
                "{relation} shares no entity with the relations joined before it"
            )));
        }
        self.push(relation, alias, role, conditions)
    }

    fn follow(&mut self, path: &[String]) -> Result<String, MapperError> {
        let mut alias = self.steps[0].alias.clone();
        for i in 1..path.len() {
            let prefix = path[..=i].to_vec();
            if let Some(a) = self.by_prefix.get(&prefix) {
                alias = a.clone();
                continue;
            }
            let role = if i + 1 == path.len() { StepRole::Parent } else { StepRole::Link };
            alias = self.push_joined(&path[i], role)?;
            self.by_prefix.insert(prefix, alias.clone());
        }
        Ok(alias)
    }
}

fn ordering_relation(db: &Database) -> Option<(String, String, String, String)> {
    let r = db.relation(ORDERING_RELATION)?;
    let keys: Vec<_> = r.schema.key_attributes().collect();
    match keys.as_slice() {
        [a, b] => match (&a.kind, &b.kind) {
            (AttrKind::ForeignKey(x), AttrKind::ForeignKey(y)) if x == y => {
                Some((r.schema.name.clone(), a.name.clone(), b.name.clone(), x.clone()))
            }
            _ => None,
        },
        _ => None,
    }
}

fn ordered_key(schema: &RelationSchema, ty: &str) -> Option<String> {
    let ks: Vec<_> = schema
        .key_attributes()
        .filter(|a| matches!(&a.kind, AttrKind::ForeignKey(t) if t == ty))
        .collect();
    match ks.as_slice() {
        [k] => Some(k.name.clone()),
        _ => None,
    }
}

/// Plans the joins that bring every parent of a rule next to its child.
pub fn plan_join(rule: &CausalRule, db: &Database) -> Result<JoinPlan, MapperError> {
    let child_rel = db.require(&rule.child.relation)?;
    let mut b = Builder {
        db,
        steps: vec![],
        by_prefix: HashMap::new(),
        shifted: BTreeSet::new(),
    };
    let child_alias = b.push(child_rel.name(), child_rel.name().to_string(), StepRole::Child, vec![])?;
    let mut parents = Vec::new();
    let mut ordering_alias: Option<String> = None;
    for p in &rule.parents {
        if p.prev {
            let (ord, before, after, ty) = ordering_relation(db).ok_or_else(|| MapperError::NoOrdering(p.attr.to_string()))?;
            let child_t = ordered_key(&child_rel.schema, &ty).ok_or_else(|| MapperError::NoOrdering(p.attr.to_string()))?;
            let parent_schema = &db.require(&p.attr.relation)?.schema;
            let parent_t = ordered_key(parent_schema, &ty).ok_or_else(|| MapperError::NoOrdering(p.attr.to_string()))?;
            let oa = match &ordering_alias {
                Some(a) => a.clone(),
                None => {
                    let alias = b.fresh_alias(&ord);
                    let cond = JoinCondition {
                        left: PlanAttr::new(&child_alias, &child_t),
                        right: PlanAttr::new(&alias, &after),
                    };
                    let a = b.push(&ord, alias, StepRole::Ordering, vec![cond])?;
                    b.shifted.insert(a.clone());
                    ordering_alias = Some(a.clone());
                    a
                }
            };
            let alias = b.fresh_alias(&format!("{}_prev", p.attr.relation));
            let probe = step_for(parent_schema, alias.clone(), StepRole::Parent);
            let mut conds = vec![JoinCondition {
                left: PlanAttr::new(&oa, &before),
                right: PlanAttr::new(&alias, &parent_t),
            }];
            conds.extend(pair_conditions(db, &b.steps[0], &probe, Some(&ty))?);
            b.push(&p.attr.relation, alias.clone(), StepRole::Parent, conds)?;
            b.shifted.insert(alias.clone());
            parents.push(PlanAttr::new(&alias, &p.attr.attribute));
            continue;
        }
        if p.attr.relation == child_rel.name() {
            parents.push(PlanAttr::new(&child_alias, &p.attr.attribute));
            continue;
        }
        let path = if rule.via.is_empty() {
            shortest_path(db, child_rel.name(), &p.attr.relation).ok_or_else(|| MapperError::NoPath {
                child: rule.child.to_string(),
                parent: p.attr.to_string(),
            })?
        } else {
            let mut path = vec![child_rel.name().to_string()];
            path.extend(rule.via.iter().cloned());
            if path.last() != Some(&p.attr.relation) {
                path.push(p.attr.relation.clone());
            }
            let mut seen = BTreeSet::new();
            if !path.iter().all(|r| seen.insert(r)) {
                return Err(MapperError::AmbiguousHint(format!("via path {} repeats a relation", path.join(" -> "))));
            }
            path
        };
        let alias = b.follow(&path)?;
        parents.push(PlanAttr::new(&alias, &p.attr.attribute));
    }
    Ok(JoinPlan {
        steps: b.steps,
        child: PlanAttr::new(&child_alias, &rule.child.attribute),
        parents,
    })
}
