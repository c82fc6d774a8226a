use std::collections::{BTreeMap, HashMap};

use crate::mapper::{JoinPlan, PlanAttr};
use crate::relational::{Database, RelationInstance};

use super::{DatasetError, JoinedCase, JoinedDataset, ParentColumn, ParentInstance};

/// Row index per plan step.
type Tuple = Vec<usize>;

struct Resolved<'a> {
    rels: Vec<&'a RelationInstance>,
    alias_index: HashMap<&'a str, usize>,
}

impl<'a> Resolved<'a> {
    fn new(plan: &'a JoinPlan, db: &'a Database) -> Result<Self, DatasetError> {
        let rels = plan
            .steps
            .iter()
            .map(|s| db.require(&s.relation))
            .collect::<Result<Vec<_>, _>>()?;
        let alias_index = plan.steps.iter().enumerate().map(|(i, s)| (s.alias.as_str(), i)).collect();
        Ok(Resolved { rels, alias_index })
    }

    /// Step index and column of an aliased attribute.
    fn locate(&self, a: &PlanAttr) -> Result<(usize, usize), DatasetError> {
        let i = *self
            .alias_index
            .get(a.alias.as_str())
            .ok_or_else(|| DatasetError::UnknownAlias(a.alias.clone()))?;
        let c = self.rels[i]
            .column(&a.attribute)
            .ok_or_else(|| DatasetError::UnknownAttribute(a.to_string()))?;
        Ok((i, c))
    }

    fn text(&self, t: &Tuple, (i, c): (usize, usize)) -> String {
        self.rels[i].rows[t[i]][c].to_string()
    }
}

/// All full matches of a plan as row-index tuples, by hash join in step order.
fn matches(plan: &JoinPlan, r: &Resolved) -> Result<Vec<Tuple>, DatasetError> {
    let mut tuples: Vec<Tuple> = (0..r.rels[0].rows.len()).map(|i| vec![i]).collect();
    for (si, step) in plan.steps.iter().enumerate().skip(1) {
        // (column in the new step, located attribute in an earlier step)
        let mut probe: Vec<(usize, (usize, usize))> = Vec::new();
        let mut late: Vec<((usize, usize), (usize, usize))> = Vec::new();
        for c in &step.conditions {
            let (l, rr) = (r.locate(&c.left)?, r.locate(&c.right)?);
            match (l.0 == si, rr.0 == si) {
                (true, false) if rr.0 < si => probe.push((l.1, rr)),
                (false, true) if l.0 < si => probe.push((rr.1, l)),
                _ => late.push((l, rr)),
            }
        }
        let rel = r.rels[si];
        let mut index: HashMap<Vec<String>, Vec<usize>> = HashMap::new();
        for (ri, row) in rel.rows.iter().enumerate() {
            let k = probe.iter().map(|(c, _)| row[*c].to_string()).collect();
            index.entry(k).or_default().push(ri);
        }
        let mut next = Vec::new();
        for t in &tuples {
            let k: Vec<String> = probe.iter().map(|(_, src)| r.text(t, *src)).collect();
            if let Some(rows) = index.get(&k) {
                for &ri in rows {
                    let mut t2 = t.clone();
                    t2.push(ri);
                    if late.iter().all(|(a, b)| r.text(&t2, *a) == r.text(&t2, *b)) {
                        next.push(t2);
                    }
                }
            }
        }
        tuples = next;
    }
    Ok(tuples)
}

/// Nested-loop evaluation of the same plan, for cross-checking the hash join.
pub fn brute_force_matches(plan: &JoinPlan, db: &Database) -> Result<Vec<Vec<usize>>, DatasetError> {
    let r = Resolved::new(plan, db)?;
    let mut conds = Vec::new();
    for s in &plan.steps {
        for c in &s.conditions {
            conds.push((r.locate(&c.left)?, r.locate(&c.right)?));
        }
    }
    let sizes: Vec<usize> = r.rels.iter().map(|x| x.rows.len()).collect();
    let mut out = Vec::new();
    if sizes.contains(&0) {
        return Ok(out);
    }
    let mut t = vec![0; sizes.len()];
    loop {
        if conds.iter().all(|(a, b)| r.text(&t, *a) == r.text(&t, *b)) {
            out.push(t.clone());
        }
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            t[i] += 1;
            if t[i] < sizes[i] {
                break;
            }
            t[i] = 0;
        }
    }
}

pub(super) fn execute(plan: &JoinPlan, db: &Database) -> Result<JoinedDataset, DatasetError> {
    let r = Resolved::new(plan, db)?;
    let child_step = r.locate(&plan.child)?;
    let child_rel = r.rels[child_step.0];
    let child_key_names = child_rel.schema.primary_key.clone();

    let mut parents = Vec::new();
    let mut parent_cols = Vec::new();
    for p in &plan.parents {
        let (si, col) = r.locate(p)?;
        let rel = r.rels[si];
        let key_cols: Vec<usize> = rel.schema.primary_key.iter().map(|k| rel.column(k).expect("key column")).collect();
        parents.push(ParentColumn {
            name: p.attribute.clone(),
            key_names: rel.schema.primary_key.clone(),
            discrete: rel.schema.attributes[col].kind.is_discrete(),
        });
        parent_cols.push((si, col, key_cols));
    }

    // (child key, discrete parent keys) -> case
    let mut cases: BTreeMap<(Vec<String>, Vec<Vec<String>>), JoinedCase> = BTreeMap::new();
    for t in matches(plan, &r)? {
        let child_row = &child_rel.rows[t[child_step.0]];
        let child_key = child_rel.key_of(child_row);
        let inst: Vec<ParentInstance> = parent_cols
            .iter()
            .map(|(si, col, keys)| {
                let row = &r.rels[*si].rows[t[*si]];
                ParentInstance {
                    key: keys.iter().map(|&k| row[k].to_string()).collect(),
                    value: row[*col].clone(),
                }
            })
            .collect();
        let discrete_keys: Vec<Vec<String>> = inst
            .iter()
            .zip(&parents)
            .filter(|(_, p)| p.discrete)
            .map(|(i, _)| i.key.clone())
            .collect();
        let case = cases.entry((child_key.clone(), discrete_keys)).or_insert_with(|| JoinedCase {
            id: 0,
            child_key,
            child: child_row[child_step.1].clone(),
            matches: vec![],
        });
        let seen = case
            .matches
            .iter()
            .any(|m| m.iter().zip(&inst).all(|(a, b)| a.key == b.key));
        if !seen {
            case.matches.push(inst);
        }
    }
    let cases = cases
        .into_values()
        .enumerate()
        .map(|(i, mut c)| {
            c.id = i + 1;
            c
        })
        .collect();
    Ok(JoinedDataset {
        child: plan.child.attribute.clone(),
        child_key_names,
        parents,
        cases,
    })
}
