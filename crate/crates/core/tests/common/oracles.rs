use mebn::ssbn::{Cpd, LinearRow, Network};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn row(intercept: f64, weights: &[f64], variance: f64) -> LinearRow {
    LinearRow {
        intercept,
        weights: weights.to_vec(),
        variance,
    }
}

pub fn random_discrete(rng: &mut ChaCha8Rng, size: usize) -> Network {
    let mut net = Network::new();
    for i in 0..size {
        let parents: Vec<String> = (0..i).filter(|_| rng.random_bool(0.3)).take(3).map(|j| format!("N{j}")).collect();
        let refs: Vec<&str> = parents.iter().map(|s| s.as_str()).collect();
        let table = (0..1usize << refs.len())
            .map(|_| {
                let p: f64 = rng.random_range(0.05..0.95);
                vec![p, 1.0 - p]
            })
            .collect();
        net.add_discrete(&format!("N{i}"), &["0", "1"], &refs, table).unwrap();
    }
    net
}

/// Exact marginal of a binary network by summing the full joint.
pub fn enumerate(net: &Network, query: usize, evidence: &[(usize, usize)]) -> Vec<f64> {
    let n = net.len();
    let mut out = vec![0.0; 2];
    for x in 0..1usize << n {
        let state = |i: usize| (x >> i) & 1;
        if evidence.iter().any(|&(i, s)| state(i) != s) {
            continue;
        }
        let mut p = 1.0;
        for (i, node) in net.nodes.iter().enumerate() {
            let config = node.discrete_parents.iter().fold(0, |acc, &j| acc * 2 + state(j));
            let Cpd::Table(t) = &node.cpd else { unreachable!() };
            p *= t[config][state(i)];
        }
        out[state(query)] += p;
    }
    let z: f64 = out.iter().sum();
    out.iter().map(|x| x / z).collect()
}

/// Random CLG network: discrete roots first, then continuous nodes with discrete and
/// earlier continuous parents.
pub fn random_clg(rng: &mut ChaCha8Rng) -> (Network, usize) {
    let mut net = Network::new();
    let d = rng.random_range(1..=3);
    for i in 0..d {
        let p: f64 = rng.random_range(0.2..0.8);
        net.add_discrete(&format!("D{i}"), &["a", "b"], &[], vec![vec![p, 1.0 - p]]).unwrap();
    }
    let c = rng.random_range(2..=8 - d);
    for i in 0..c {
        let dp: Vec<String> = (0..d).filter(|_| rng.random_bool(0.5)).map(|j| format!("D{j}")).collect();
        let cp: Vec<String> = (0..i).filter(|_| rng.random_bool(0.5)).map(|j| format!("C{j}")).collect();
        let rows = (0..1usize << dp.len())
            .map(|_| {
                let w: Vec<f64> = cp.iter().map(|_| rng.random_range(-1.5..1.5)).collect();
                row(rng.random_range(-5.0..5.0), &w, rng.random_range(0.2..3.0))
            })
            .collect();
        let dr: Vec<&str> = dp.iter().map(|s| s.as_str()).collect();
        let cr: Vec<&str> = cp.iter().map(|s| s.as_str()).collect();
        net.add_continuous(&format!("C{i}"), &dr, &cr, rows).unwrap();
    }
    (net, d)
}

/// Ancestral sample; `fixed` clamps one discrete node to a state.
pub fn sample(net: &Network, rng: &mut ChaCha8Rng, fixed: Option<(usize, usize)>) -> Vec<f64> {
    let mut x = vec![0.0; net.len()];
    for (i, node) in net.nodes.iter().enumerate() {
        let config = node.discrete_parents.iter().fold(0, |acc, &j| acc * 2 + x[j] as usize);
        x[i] = match &node.cpd {
            Cpd::Table(t) => match fixed {
                Some((f, s)) if f == i => s as f64,
                _ => (rng.random::<f64>() >= t[config][0]) as usize as f64,
            },
            Cpd::Linear(rows) => {
                let r = &rows[config];
                let m = r.intercept + node.continuous_parents.iter().zip(&r.weights).map(|(&j, w)| w * x[j]).sum::<f64>();
                Normal::new(m, r.variance.sqrt()).unwrap().sample(rng)
            }
        };
    }
    x
}

/// Sample mean and variance of node `q` with their standard errors.
pub struct McMoments {
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
}

pub fn monte_carlo(net: &Network, q: usize, fixed: Option<(usize, usize)>, rng: &mut ChaCha8Rng, n: usize) -> McMoments {
    let xs: Vec<f64> = (0..n).map(|_| sample(net, rng, fixed)[q]).collect();
    let nf = n as f64;
    let m = xs.iter().sum::<f64>() / nf;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / nf;
    McMoments {
        mean: m,
        variance: v,
        se_mean: (v / nf).sqrt(),
        se_variance: ((m4 - v * v) / nf).sqrt(),
    }
}
