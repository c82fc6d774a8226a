use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::mtheory::{
    Aggregate, BinOp, Cld, CldSpec, ContextNode, Cpc, Csd, Expr, FormulaCsd, MFrag, MTheory, ModelError, ParentKind,
    ParentRef, ResidentNode, ValueSpace,
};

use super::{entity_type_name, CausalRule, Family, JoinCondition, JoinPlan, MapperError, StepRole};

/// The child's MFrag after each rewriting stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleStages {
    /// Input and resident parents added, with IsA nodes for their fresh variables.
    pub with_inputs: MFrag,
    /// Join conditions added as context nodes.
    pub with_contexts: MFrag,
    /// Equal variables merged; carries the skeleton distribution.
    pub refined: MFrag,
}

fn all_ovs(frag: &MFrag) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = frag.contexts.iter().flat_map(|c| c.ovs()).map(str::to_string).collect();
    for r in &frag.residents {
        out.extend(r.args.iter().cloned());
        for p in &r.parents {
            out.extend(p.args.iter().cloned());
        }
    }
    out
}

fn fresh(used: &mut BTreeSet<String>, base: &str) -> String {
    let name = if used.contains(base) {
        (1..).map(|i| format!("{base}{i}")).find(|n| !used.contains(n)).expect("unbounded")
    } else {
        base.to_string()
    };
    used.insert(name.clone());
    name
}

fn push_unique(contexts: &mut Vec<ContextNode>, c: ContextNode) {
    if !contexts.contains(&c) {
        contexts.push(c);
    }
}

/// Ordinary variables a parent-condition quantifies over: the parents' arguments that
/// are not arguments of the child, or all of them when every one is bound by the child.
pub fn cpc_ovs(child: &ResidentNode, parents: &[&ParentRef]) -> Vec<String> {
    let mut free = Vec::new();
    let mut all = Vec::new();
    for p in parents {
        for a in &p.args {
            if !all.contains(a) {
                all.push(a.clone());
            }
            if !child.args.contains(a) && !free.contains(a) {
                free.push(a.clone());
            }
        }
    }
    if free.is_empty() {
        all
    } else {
        free
    }
}

fn theta(i: usize, j: usize) -> Expr {
    Expr::Theta(i as u32, j as u32)
}

fn regression_expr(i: usize, continuous: &[&ParentRef], aggregate: Option<Aggregate>) -> Expr {
    let mut e = theta(i, 0);
    for (j, p) in continuous.iter().enumerate() {
        let x = match aggregate {
            Some(a) => Expr::Aggregate(a, p.name.clone()),
            None => Expr::Name(p.name.clone()),
        };
        e = Expr::binary(BinOp::Add, e, Expr::binary(BinOp::Mul, theta(i, j + 1), x));
    }
    let noise = Expr::Normal(Box::new(Expr::Number(0.0)), Box::new(theta(i, continuous.len() + 1)));
    Expr::binary(BinOp::Add, e, noise)
}

/// The to-learn distribution of a rule child: one clause per state of a single discrete
/// parent (or per joint configuration of several), parameters written as `theta(i, j)`.
pub(crate) fn skeleton_cld(
    child: &ResidentNode,
    parents: &[(&ParentRef, ValueSpace)],
    family: Family,
    aggregate: Option<Aggregate>,
) -> Result<Cld, MapperError> {
    let conflict = |message: String| MapperError::RuleConflict {
        child: child.name.clone(),
        message,
    };
    let discrete: Vec<(&ParentRef, Vec<String>)> = parents
        .iter()
        .filter_map(|(p, vs)| vs.states().map(|s| (*p, s)))
        .collect();
    let continuous: Vec<&ParentRef> = parents
        .iter()
        .filter(|(_, vs)| *vs == ValueSpace::Continuous)
        .map(|(p, _)| *p)
        .collect();
    if let Some((p, vs)) = parents.iter().find(|(_, vs)| matches!(vs, ValueSpace::Entity(_))) {
        return Err(conflict(format!("parent {} is entity-valued ({vs})", p.name)));
    }
    let child_states = match (&child.value_space, family) {
        (Some(vs @ (ValueSpace::Categorical(_) | ValueSpace::Boolean)), Family::Categorical | Family::Boolean) => {
            if !continuous.is_empty() {
                return Err(conflict("a discrete child cannot have continuous parents".into()));
            }
            Some(vs.states().expect("discrete"))
        }
        (Some(ValueSpace::Continuous), Family::Clg) => None,
        (vs, f) => {
            return Err(conflict(format!(
                "family {} does not fit value space {}",
                f.name(),
                vs.as_ref().map(|v| v.to_string()).unwrap_or_else(|| "(none)".into())
            )))
        }
    };

    let mut configs: Vec<Vec<(String, String)>> = vec![vec![]];
    for (p, states) in &discrete {
        configs = configs
            .into_iter()
            .flat_map(|c| {
                states.iter().map(move |s| {
                    let mut c = c.clone();
                    c.push((p.name.clone(), s.clone()));
                    c
                })
            })
            .collect();
    }
    let refs: Vec<&ParentRef> = discrete.iter().map(|(p, _)| *p).collect();
    let ovs = cpc_ovs(child, &refs);
    let csd = |i: usize, default: bool| -> Csd {
        match &child_states {
            Some(states) => Csd::Formula(FormulaCsd::Categorical(
                states.iter().enumerate().map(|(j, s)| (s.clone(), theta(i, j + 1))).collect(),
            )),
            None if default && !discrete.is_empty() => Csd::Formula(FormulaCsd::Continuous(Expr::Normal(
                Box::new(theta(i, 0)),
                Box::new(theta(i, 1)),
            ))),
            None => Csd::Formula(FormulaCsd::Continuous(regression_expr(i, &continuous, aggregate))),
        }
    };
    let branches: Vec<(Cpc, Csd)> = if discrete.is_empty() {
        vec![]
    } else {
        configs
            .into_iter()
            .enumerate()
            .map(|(i, c)| (Cpc::from_parts(ovs.clone(), c), csd(i + 1, false)))
            .collect()
    };
    let default = csd(branches.len() + 1, true);
    Ok(Cld { branches, default })
}

fn ov_of<'a>(plan: &JoinPlan, ovs: &'a HashMap<String, Vec<String>>, alias: &str, attribute: &str) -> Option<&'a String> {
    let step = plan.step(alias)?;
    let i = step.keys.iter().position(|(k, _)| k == attribute)?;
    ovs.get(alias)?.get(i)
}

fn condition_context(
    plan: &JoinPlan,
    ovs: &HashMap<String, Vec<String>>,
    c: &JoinCondition,
) -> Result<Option<ContextNode>, MapperError> {
    let l = ov_of(plan, ovs, &c.left.alias, &c.left.attribute);
    let r = ov_of(plan, ovs, &c.right.alias, &c.right.attribute);
    Ok(match (l, r) {
        (Some(l), Some(r)) if l == r => None,
        (Some(l), Some(r)) => Some(ContextNode::Equality {
            left: l.clone(),
            right: r.clone(),
        }),
        (Some(key), None) => Some(ContextNode::Relational {
            ov: key.clone(),
            function: c.right.attribute.clone(),
            args: ovs[&c.right.alias].clone(),
        }),
        (None, Some(key)) => Some(ContextNode::Relational {
            ov: key.clone(),
            function: c.left.attribute.clone(),
            args: ovs[&c.left.alias].clone(),
        }),
        (None, None) => return Err(MapperError::AmbiguousHint(format!("condition {c} equates two non-key attributes"))),
    })
}

/// Rewrites the child's MFrag for one rule: parents become input (or resident) parent
/// nodes, join conditions become context nodes, and variables known to be equal are
/// merged. The child gets a to-learn distribution.
pub fn apply_rule(m: &MTheory, rule: &CausalRule, plan: &JoinPlan) -> Result<MTheory, MapperError> {
    apply_rule_staged(m, rule, plan).map(|(m, _)| m)
}

pub fn apply_rule_staged(m: &MTheory, rule: &CausalRule, plan: &JoinPlan) -> Result<(MTheory, RuleStages), MapperError> {
    let child_name = &rule.child.attribute;
    let (mi, child) = m.home_of(child_name).ok_or_else(|| MapperError::UnknownChild(child_name.clone()))?;
    if child.cld.is_some() || !child.parents.is_empty() {
        return Err(MapperError::RuleConflict {
            child: child_name.clone(),
            message: "it already has parents or a distribution".into(),
        });
    }
    let child_args = child.args.clone();
    let mut frag = m.mfrags[mi].clone();
    let mut used = all_ovs(&frag);
    let mut ovs: HashMap<String, Vec<String>> = HashMap::new();
    ovs.insert(plan.steps[0].alias.clone(), child_args.clone());

    let mut new_parents: Vec<ParentRef> = Vec::new();
    for (p, pa) in rule.parents.iter().zip(&plan.parents) {
        let name = &p.attr.attribute;
        if new_parents.iter().any(|q| &q.name == name) {
            return Err(MapperError::RuleConflict {
                child: child_name.clone(),
                message: format!("parent {name} appears twice"),
            });
        }
        let (hi, home) = m.home_of(name).ok_or_else(|| MapperError::UnknownParent(name.clone()))?;
        let args = match ovs.get(&pa.alias) {
            Some(a) => a.clone(),
            None => {
                let mut args = Vec::new();
                for a in &home.args {
                    let ty = m.mfrags[hi].type_of(a).unwrap_or_default().to_string();
                    let ov = fresh(&mut used, a);
                    push_unique(&mut frag.contexts, ContextNode::IsA { ov: ov.clone(), entity_type: ty });
                    args.push(ov);
                }
                ovs.insert(pa.alias.clone(), args.clone());
                args
            }
        };
        let kind = if hi == mi { ParentKind::Resident } else { ParentKind::Input };
        new_parents.push(ParentRef {
            kind,
            name: name.clone(),
            args,
        });
    }
    frag.resident_mut(child_name).expect("home").parents.extend(new_parents.iter().cloned());
    let with_inputs = frag.clone();

    for step in &plan.steps {
        if ovs.contains_key(&step.alias) {
            continue;
        }
        let mut args = Vec::new();
        for (k, target) in &step.keys {
            let ov = fresh(&mut used, k);
            push_unique(&mut frag.contexts, ContextNode::IsA {
                ov: ov.clone(),
                entity_type: entity_type_name(target),
            });
            args.push(ov);
        }
        ovs.insert(step.alias.clone(), args);
    }
    for step in &plan.steps {
        if step.attribute_free && matches!(step.role, StepRole::Link | StepRole::Ordering) {
            push_unique(&mut frag.contexts, ContextNode::Predicate {
                function: step.relation.clone(),
                args: ovs[&step.alias].clone(),
            });
        }
    }
    for step in &plan.steps {
        for c in &step.conditions {
            if let Some(ctx) = condition_context(plan, &ovs, c)? {
                push_unique(&mut frag.contexts, ctx);
            }
        }
    }
    let with_contexts = frag.clone();

    let mut frag = refine_context(&frag)?;
    let resident = frag.resident(child_name).expect("home").clone();
    let start = resident.parents.len() - new_parents.len();
    let mut typed = Vec::new();
    for p in &resident.parents[start..] {
        let vs = m
            .resident(&p.name)
            .and_then(|r| r.value_space.clone())
            .ok_or_else(|| MapperError::RuleConflict {
                child: child_name.clone(),
                message: format!("parent {} has no value space", p.name),
            })?;
        typed.push((p, vs));
    }
    let cld = skeleton_cld(&resident, &typed, rule.family, rule.aggregate)?;
    frag.resident_mut(child_name).expect("home").cld = Some(CldSpec::Inline(cld));
    let refined = frag.clone();

    let mut out = m.clone();
    out.mfrags[mi] = frag;
    out.check_references().map_err(|e| match e {
        ModelError::CycleDetected(c) => MapperError::CycleIntroduced(c),
        e => MapperError::Model(e),
    })?;
    Ok((
        out,
        RuleStages {
            with_inputs,
            with_contexts,
            refined,
        },
    ))
}

fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
    let p = parent.get(x).cloned().unwrap_or_else(|| x.to_string());
    if p == x {
        return p;
    }
    let root = find(parent, &p);
    parent.insert(x.to_string(), root.clone());
    root
}

fn rename_cpc(cpc: &mut Cpc, f: &impl Fn(&str) -> String) {
    let ovs = match cpc {
        Cpc::Some { ovs, .. } | Cpc::Config { ovs, .. } => ovs,
    };
    let mut renamed: Vec<String> = Vec::new();
    for o in ovs.iter() {
        let n = f(o);
        if !renamed.contains(&n) {
            renamed.push(n);
        }
    }
    *ovs = renamed;
}

/// Merges ordinary variables equated by context nodes. Each group keeps a name used as
/// a resident argument if there is one, otherwise its alphabetically first name
/// (ignoring case). Equality nodes disappear and duplicate nodes are dropped.
pub fn refine_context(frag: &MFrag) -> Result<MFrag, MapperError> {
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    for c in &frag.contexts {
        if let ContextNode::Equality { left, right } = c {
            for x in [left, right] {
                parent.entry(x.clone()).or_insert_with(|| x.clone());
            }
            let (a, b) = (find(&mut parent, left), find(&mut parent, right));
            if a != b {
                let (ta, tb) = (frag.type_of(left), frag.type_of(right));
                if let (Some(ta), Some(tb)) = (ta, tb) {
                    if ta != tb {
                        return Err(MapperError::TypeMismatch {
                            left: left.clone(),
                            left_type: ta.to_string(),
                            right: right.clone(),
                            right_type: tb.to_string(),
                        });
                    }
                }
                parent.insert(a, b);
            }
        }
    }
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for ov in parent.keys().cloned().collect::<Vec<_>>() {
        let root = find(&mut parent, &ov);
        groups.entry(root).or_default().push(ov);
    }
    let resident_args: BTreeSet<&str> = frag.residents.iter().flat_map(|r| r.args.iter().map(|s| s.as_str())).collect();
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    for members in groups.values() {
        let key = |s: &&String| (!resident_args.contains(s.as_str()), s.to_lowercase(), (*s).clone());
        let rep = members.iter().min_by_key(key).expect("non-empty group").clone();
        for m in members {
            rename.insert(m.clone(), rep.clone());
        }
    }
    let f = |s: &str| rename.get(s).cloned().unwrap_or_else(|| s.to_string());

    let mut out = MFrag::new(frag.name.clone());
    for c in &frag.contexts {
        if matches!(c, ContextNode::Equality { .. }) {
            continue;
        }
        let mut c = c.clone();
        c.rename(&f);
        push_unique(&mut out.contexts, c);
    }
    for r in &frag.residents {
        let mut r = r.clone();
        r.args.iter_mut().for_each(|a| *a = f(a));
        for p in &mut r.parents {
            p.args.iter_mut().for_each(|a| *a = f(a));
        }
        if let Some(CldSpec::Inline(cld)) = &mut r.cld {
            for (cpc, _) in &mut cld.branches {
                rename_cpc(cpc, &f);
            }
        }
        out.residents.push(r);
    }
    Ok(out)
}
