use std::collections::{BTreeMap, BTreeSet};

use super::network::{Cpd, Network};
use super::{Evidence, InferError, QueryResult};

/// A table over discrete variables, the last variable varying fastest.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub vars: Vec<usize>,
    pub card: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    fn scalar(x: f64) -> Factor {
        Factor {
            vars: vec![],
            card: vec![],
            values: vec![x],
        }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.card[i + 1];
        }
        s
    }

    fn product(&self, other: &Factor) -> Factor {
        let mut vars = self.vars.clone();
        let mut card = self.card.clone();
        for (v, c) in other.vars.iter().zip(&other.card) {
            if !vars.contains(v) {
                vars.push(*v);
                card.push(*c);
            }
        }
        let total: usize = card.iter().product();
        let (sa, sb) = (self.strides(), other.strides());
        let map = |f: &Factor, s: &[usize]| -> Vec<usize> {
            vars.iter()
                .map(|v| f.vars.iter().position(|x| x == v).map_or(0, |k| s[k]))
                .collect()
        };
        let (ma, mb) = (map(self, &sa), map(other, &sb));
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..total {
            values.push(self.values[ia] * other.values[ib]);
            for k in (0..vars.len()).rev() {
                idx[k] += 1;
                ia += ma[k];
                ib += mb[k];
                if idx[k] < card[k] {
                    break;
                }
                ia -= ma[k] * card[k];
                ib -= mb[k] * card[k];
                idx[k] = 0;
            }
        }
        Factor { vars, card, values }
    }

    fn sum_out(&self, v: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&x| x == v) else { return self.clone() };
        let strides = self.strides();
        let (outer, inner) = (self.values.len() / (self.card[k] * strides[k]), strides[k]);
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for s in 0..self.card[k] {
                for i in 0..inner {
                    values[o * inner + i] += self.values[(o * self.card[k] + s) * inner + i];
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut card = self.card.clone();
        vars.remove(k);
        card.remove(k);
        Factor { vars, card, values }
    }

    /// Keeps only entries where `v` takes `state`, dropping `v`.
    fn reduce(&self, v: usize, state: usize) -> Factor {
        let Some(k) = self.vars.iter().position(|&x| x == v) else { return self.clone() };
        let strides = self.strides();
        let (outer, inner) = (self.values.len() / (self.card[k] * strides[k]), strides[k]);
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                values.push(self.values[(o * self.card[k] + state) * inner + i]);
            }
        }
        let mut vars = self.vars.clone();
        let mut card = self.card.clone();
        vars.remove(k);
        card.remove(k);
        Factor { vars, card, values }
    }

    /// Values listed in the order of `order`, which must hold exactly this factor's variables.
    fn arranged(&self, net: &Network, order: &[usize]) -> Vec<f64> {
        let strides = self.strides();
        let total = net.configurations(order);
        (0..total)
            .map(|c| {
                let states = net.decode(order, c);
                let idx: usize = order
                    .iter()
                    .zip(&states)
                    .map(|(v, s)| strides[self.vars.iter().position(|x| x == v).expect("variable")] * s)
                    .sum();
                self.values[idx]
            })
            .collect()
    }
}

fn cpt_factor(net: &Network, i: usize) -> Factor {
    let n = &net.nodes[i];
    let Cpd::Table(rows) = &n.cpd else { unreachable!("discrete node") };
    let mut vars = n.discrete_parents.clone();
    vars.push(i);
    let card = vars.iter().map(|&v| net.nodes[v].card()).collect();
    Factor {
        vars,
        card,
        values: rows.iter().flatten().copied().collect(),
    }
}

/// Unnormalized joint of `targets` and the discrete evidence, summing out every other
/// node in `nodes` in min-degree order. Values follow `targets` order.
pub(crate) fn joint(
    net: &Network,
    nodes: &[usize],
    targets: &[usize],
    evidence: &BTreeMap<usize, usize>,
) -> Vec<f64> {
    let mut factors: Vec<Factor> = nodes
        .iter()
        .map(|&i| {
            let mut f = cpt_factor(net, i);
            for (&v, &s) in evidence {
                if !targets.contains(&v) {
                    f = f.reduce(v, s);
                }
            }
            f
        })
        .collect();
    let mut target_evidence = Factor::scalar(1.0);
    for (&v, &s) in evidence {
        if targets.contains(&v) {
            let card = net.nodes[v].card();
            let mut values = vec![0.0; card];
            values[s] = 1.0;
            target_evidence = target_evidence.product(&Factor {
                vars: vec![v],
                card: vec![card],
                values,
            });
        }
    }
    factors.push(target_evidence);

    let mut remaining: BTreeSet<usize> = nodes
        .iter()
        .copied()
        .filter(|v| !targets.contains(v) && !evidence.contains_key(v))
        .collect();
    while !remaining.is_empty() {
        let degree = |v: usize| -> usize {
            let mut nb = BTreeSet::new();
            for f in factors.iter().filter(|f| f.vars.contains(&v)) {
                nb.extend(f.vars.iter().copied());
            }
            nb.len()
        };
        let v = *remaining.iter().min_by_key(|&&v| (degree(v), v)).expect("non-empty");
        remaining.remove(&v);
        let (with, without): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&v));
        factors = without;
        let mut prod = Factor::scalar(1.0);
        for f in &with {
            prod = prod.product(f);
        }
        factors.push(prod.sum_out(v));
    }
    let mut prod = Factor::scalar(1.0);
    for f in &factors {
        prod = prod.product(f);
    }
    for &t in targets {
        if !prod.vars.contains(&t) {
            let card = net.nodes[t].card();
            prod = prod.product(&Factor {
                vars: vec![t],
                card: vec![card],
                values: vec![1.0; card],
            });
        }
    }
    prod.arranged(net, targets)
}

/// Exact posterior of a discrete node by variable elimination over the ancestors of the
/// query and the evidence.
pub fn infer_discrete(net: &Network, query: &str, evidence: &Evidence) -> Result<QueryResult, InferError> {
    let q = net.index_of(query).ok_or_else(|| InferError::UnknownNode(query.to_string()))?;
    let (d, c) = net.split_evidence(evidence)?;
    let mut seeds: Vec<usize> = d.keys().chain(c.keys()).copied().collect();
    seeds.push(q);
    let nodes = net.ancestral_closure(&seeds);
    if nodes.iter().any(|&i| !net.nodes[i].is_discrete()) {
        return Err(InferError::ContinuousInDiscreteQuery(query.to_string()));
    }
    let values = joint(net, &nodes, &[q], &d);
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(InferError::ImpossibleEvidence);
    }
    let super::NodeKind::Discrete(states) = &net.nodes[q].kind else { unreachable!() };
    Ok(QueryResult::Discrete(
        states.iter().cloned().zip(values.iter().map(|v| v / total)).collect(),
    ))
}
