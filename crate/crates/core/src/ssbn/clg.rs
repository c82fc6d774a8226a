use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::network::{Cpd, Network, NodeKind};
use super::ve::joint;
use super::{Component, Evidence, InferError, QueryResult};

const MAX_CONFIGURATIONS: u128 = 1 << 20;

/// Exact posterior in a conditional linear Gaussian network. Each configuration of the
/// discrete parents of continuous nodes fixes a joint Gaussian; its weight combines the
/// discrete probability with the density of the continuous evidence.
pub fn infer_clg(net: &Network, query: &str, evidence: &Evidence) -> Result<QueryResult, InferError> {
    let q = net.index_of(query).ok_or_else(|| InferError::UnknownNode(query.to_string()))?;
    let (ev_d, ev_c) = net.split_evidence(evidence)?;
    let mut seeds: Vec<usize> = ev_d.keys().chain(ev_c.keys()).copied().collect();
    seeds.push(q);
    let relevant = net.ancestral_closure(&seeds);
    let discrete: Vec<usize> = relevant.iter().copied().filter(|&i| net.nodes[i].is_discrete()).collect();
    let continuous: Vec<usize> = relevant.iter().copied().filter(|&i| !net.nodes[i].is_discrete()).collect();

    let mut dstar: Vec<usize> = continuous.iter().flat_map(|&i| net.nodes[i].discrete_parents.clone()).collect();
    if net.nodes[q].is_discrete() {
        dstar.push(q);
    }
    dstar.sort_unstable();
    dstar.dedup();
    let count: u128 = dstar.iter().map(|&i| net.nodes[i].card() as u128).product();
    if count > MAX_CONFIGURATIONS {
        return Err(InferError::TooManyConfigurations(count));
    }
    let prior = joint(net, &discrete, &dstar, &ev_d);

    let pos: BTreeMap<usize, usize> = continuous.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let observed: Vec<usize> = continuous.iter().copied().filter(|i| ev_c.contains_key(i)).collect();
    let mut log_weights = Vec::new();
    let mut gaussians = Vec::new();
    let mut states = Vec::new();
    for (c, &p) in prior.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let config = net.decode(&dstar, c);
        let state_of = |i: usize| config[dstar.iter().position(|&x| x == i).expect("in D*")];
        let (mean, cov) = joint_gaussian(net, &continuous, &pos, &state_of);
        let (loglik, post) = condition(&mean, &cov, &observed.iter().map(|i| (pos[i], ev_c[i])).collect::<Vec<_>>(), pos.get(&q).copied());
        let Some(loglik) = loglik else { continue };
        log_weights.push(p.ln() + loglik);
        gaussians.push(post);
        states.push(if net.nodes[q].is_discrete() { state_of(q) } else { 0 });
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(InferError::ImpossibleEvidence);
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();

    match &net.nodes[q].kind {
        NodeKind::Discrete(names) => {
            let mut probs = vec![0.0; names.len()];
            for (s, x) in states.iter().zip(&w) {
                probs[*s] += x / total;
            }
            Ok(QueryResult::Discrete(names.iter().cloned().zip(probs).collect()))
        }
        NodeKind::Continuous => {
            let components = w
                .iter()
                .zip(&gaussians)
                .map(|(x, &(mean, variance))| Component {
                    weight: x / total,
                    mean,
                    variance,
                })
                .collect();
            Ok(QueryResult::mixture(components))
        }
    }
}

/// Mean and covariance of the continuous nodes, in `continuous` order, under fixed
/// discrete states.
fn joint_gaussian(
    net: &Network,
    continuous: &[usize],
    pos: &BTreeMap<usize, usize>,
    state_of: &dyn Fn(usize) -> usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = continuous.len();
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for (k, &i) in continuous.iter().enumerate() {
        let node = &net.nodes[i];
        let Cpd::Linear(rows) = &node.cpd else { unreachable!("continuous node") };
        let states: Vec<usize> = node.discrete_parents.iter().map(|&p| state_of(p)).collect();
        let row = &rows[net.encode(&node.discrete_parents, &states)];
        let parents: Vec<usize> = node.continuous_parents.iter().map(|p| pos[p]).collect();
        mean[k] = row.intercept + parents.iter().zip(&row.weights).map(|(&j, w)| w * mean[j]).sum::<f64>();
        // Cov(X_k, X_l) for earlier l follows from linearity in the parents.
        for l in 0..k {
            let c: f64 = parents.iter().zip(&row.weights).map(|(&j, w)| w * cov[(j, l)]).sum();
            cov[(k, l)] = c;
            cov[(l, k)] = c;
        }
        let var: f64 = parents
            .iter()
            .zip(&row.weights)
            .map(|(&j, w)| w * cov[(j, k)])
            .sum::<f64>()
            + row.variance;
        cov[(k, k)] = var;
    }
    (mean, cov)
}

/// Log density of the observations and the conditional moments of the query position.
/// `None` when the observations are impossible under a degenerate covariance.
fn condition(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    observed: &[(usize, f64)],
    query: Option<usize>,
) -> (Option<f64>, (f64, f64)) {
    let moments = |q: usize| (mean[q], cov[(q, q)]);
    if observed.is_empty() {
        return (Some(0.0), query.map_or((0.0, 0.0), moments));
    }
    if let Some(q) = query {
        if let Some(&(_, v)) = observed.iter().find(|(k, _)| *k == q) {
            let (ll, _) = condition(mean, cov, observed, None);
            return (ll, (v, 0.0));
        }
    }
    let m = observed.len();
    let see = DMatrix::from_fn(m, m, |a, b| cov[(observed[a].0, observed[b].0)]);
    let r = DVector::from_fn(m, |a, _| observed[a].1 - mean[observed[a].0]);
    let scale = see.diagonal().max().max(1.0);
    let mut jitter = 0.0;
    let chol = loop {
        let mut s = see.clone();
        for a in 0..m {
            s[(a, a)] += jitter;
        }
        if let Some(c) = s.cholesky() {
            break c;
        }
        if jitter > 1e-6 * scale {
            return (None, (0.0, 0.0));
        }
        jitter = if jitter == 0.0 { 1e-12 * scale } else { jitter * 10.0 };
    };
    let alpha = chol.solve(&r);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let ll = -0.5 * (r.dot(&alpha) + log_det + m as f64 * (2.0 * std::f64::consts::PI).ln());
    let post = match query {
        Some(q) => {
            let sqe = DVector::from_fn(m, |a, _| cov[(q, observed[a].0)]);
            let gain = chol.solve(&sqe);
            (mean[q] + gain.dot(&r), (cov[(q, q)] - gain.dot(&sqe)).max(0.0))
        }
        None => (0.0, 0.0),
    };
    (Some(ll), post)
}
