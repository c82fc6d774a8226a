use std::collections::{BTreeMap, BTreeSet};

use super::{ContextNode, MFrag, MTheory, ModelError, ParentRef, ResidentNode};

pub fn check_unique_home(m: &MTheory) -> Result<(), ModelError> {
    let mut home: BTreeMap<&str, &str> = BTreeMap::new();
    for f in &m.mfrags {
        for r in &f.residents {
            if let Some(first) = home.insert(&r.name, &f.name) {
                return Err(ModelError::DuplicateResident {
                    name: r.name.clone(),
                    first: first.to_string(),
                    second: f.name.clone(),
                });
            }
        }
    }
    Ok(())
}

/// A parent edge that steps back along the ordered entity type: some argument
/// position holds `p` in the parent and `c` in the child with `Predecessor(p, c)`
/// asserted in the context.
fn is_ordered_step(frag: &MFrag, ordering: Option<&str>, parent: &ParentRef, child: &ResidentNode) -> bool {
    let Some(ord) = ordering else { return false };
    parent.args.iter().zip(&child.args).any(|(p, c)| {
        p != c
            && frag.contexts.iter().any(|ctx| {
                matches!(ctx, ContextNode::Predicate { function, args }
                    if function == ord && args.len() == 2 && &args[0] == p && &args[1] == c)
            })
    })
}

/// Checks that the graph of resident dependencies has no cycles, ignoring edges that
/// recurse backwards along an ordered entity type.
pub fn check_acyclic(m: &MTheory) -> Result<(), ModelError> {
    let ordering = m.ordering().map(|o| o.relation);
    let mut edges: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for f in &m.mfrags {
        for r in &f.residents {
            edges.entry(&r.name).or_default();
            for p in &r.parents {
                if is_ordered_step(f, ordering.as_deref(), p, r) {
                    continue;
                }
                edges.entry(&p.name).or_default().insert(&r.name);
            }
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        n: &'a str,
        edges: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
    ) -> Result<(), ModelError> {
        match marks.get(n) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::Open) => {
                let start = path.iter().position(|p| *p == n).unwrap_or(0);
                let mut cycle: Vec<String> = path[start..].iter().map(|s| s.to_string()).collect();
                cycle.push(n.to_string());
                return Err(ModelError::CycleDetected(cycle));
            }
            None => {}
        }
        marks.insert(n, Mark::Open);
        path.push(n);
        if let Some(next) = edges.get(n) {
            for c in next {
                visit(c, edges, marks, path)?;
            }
        }
        path.pop();
        marks.insert(n, Mark::Done);
        Ok(())
    }
    let mut marks = BTreeMap::new();
    for n in edges.keys() {
        visit(n, &edges, &mut marks, &mut vec![])?;
    }
    Ok(())
}
