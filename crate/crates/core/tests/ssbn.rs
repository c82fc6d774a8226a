mod common;

use common::oracles::*;
use common::*;
use mebn::learn::{learn_mtheory, LearnOptions};
use mebn::mapper::*;
use mebn::mtheory::{check_acyclic, MTheory};
use mebn::ssbn::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn learned(name: &str) -> MTheory {
    let (db, rules) = with_rules(name);
    let mut m = build_initial_mtheory(&db).unwrap();
    for r in &rules {
        m = apply_rule(&m, r, &plan_join(r, &db).unwrap()).unwrap();
    }
    learn_mtheory(&m, &db, &rules, &LearnOptions::default()).unwrap().0
}

fn entities(pairs: &[(&str, &[&str])]) -> EntityInstanceSet {
    let mut e = EntityInstanceSet::new();
    for (t, ids) in pairs {
        e = e.with(t, ids).unwrap();
    }
    e
}

#[test]
fn located_vehicle_becomes_the_threat_parent() {
    let m = learned("threat");
    let ev = Evidence::new().with("Location_v1_t1", "r1");
    let e = entities(&[("VEHICLE", &["v1"]), ("REGION", &["r1"]), ("TIME", &["t1"])]);
    let s = ground(&m, &e, &ev, &["ThreatLevel_r1_t1"]).unwrap();
    let ids: Vec<&str> = s.nodes.iter().map(|n| n.id.as_str()).collect();
    assert_eq!(ids, ["VehicleType_v1", "ThreatLevel_r1_t1"]);
    let ild = &s.node("ThreatLevel_r1_t1").unwrap().ild;
    assert_eq!(ild.parents["VehicleType"], ["VehicleType_v1"]);
    let cld = m.resident("ThreatLevel").unwrap().inline_cld().unwrap();
    assert_eq!(ild.branches, cld.branches);
    assert_eq!(s.edges(), [("VehicleType_v1", "ThreatLevel_r1_t1")]);

    let net = Network::from_ssbn(&s).unwrap();
    let p = infer(&net, "ThreatLevel_r1_t1", &ev.clone().with("VehicleType_v1", "Tracked")).unwrap();
    assert!((p.probability("High").unwrap() - 9.0 / 14.0).abs() < 1e-9);
}

#[test]
fn region_without_vehicles_uses_the_default() {
    let m = learned("threat");
    let ev = Evidence::new().with("Location_v1_t1", "r2");
    let e = entities(&[("VEHICLE", &["v1"]), ("REGION", &["r1", "r2"]), ("TIME", &["t1"])]);
    let s = ground(&m, &e, &ev, &["ThreatLevel_r1_t1"]).unwrap();
    assert_eq!(s.nodes.len(), 1);
    let ild = &s.nodes[0].ild;
    assert!(ild.parents["VehicleType"].is_empty());
    assert!(ild.branches.is_empty());
    let cld = m.resident("ThreatLevel").unwrap().inline_cld().unwrap();
    assert_eq!(ild.default, cld.default);
}

#[test]
fn context_filter_drops_vehicles_elsewhere() {
    let m = learned("threat");
    let ev = Evidence::new().with("Location_v1_t1", "r1").with("Location_v2_t1", "r2");
    let e = entities(&[("VEHICLE", &["v1", "v2"]), ("REGION", &["r1", "r2"]), ("TIME", &["t1"])]);
    let s = ground(&m, &e, &ev, &["ThreatLevel_r1_t1"]).unwrap();
    assert_eq!(s.node("ThreatLevel_r1_t1").unwrap().ild.parents["VehicleType"], ["VehicleType_v1"]);
    assert!(s.node("VehicleType_v2").is_none());
    assert!(s.reports.is_empty());
}

#[test]
fn missing_location_is_reported_and_dropped() {
    let m = learned("threat");
    let ev = Evidence::new().with("Location_v1_t1", "r1");
    let e = entities(&[("VEHICLE", &["v1", "v2"]), ("REGION", &["r1"]), ("TIME", &["t1"])]);
    let s = ground(&m, &e, &ev, &["ThreatLevel_r1_t1"]).unwrap();
    assert_eq!(s.node("ThreatLevel_r1_t1").unwrap().ild.parents["VehicleType"], ["VehicleType_v1"]);
    assert_eq!(s.reports, ["unbound context: Location_v2_t1 has no evidence"]);
}

#[test]
fn temporal_recursion_unrolls_along_the_order() {
    let m = learned("threat_schema");
    check_acyclic(&m).unwrap();
    let mut e = entities(&[("VEHICLE", &["v1"])]);
    e.set_order("TIME", (1..=5).map(|i| format!("T{i}")).collect()).unwrap();
    let s = ground(&m, &e, &Evidence::new(), &["Speed_v1_T5"]).unwrap();
    let pos = |id: &str| s.nodes.iter().position(|n| n.id == id).unwrap();
    for (p, c) in s.edges() {
        assert!(pos(p) < pos(c), "{p} -> {c}");
    }
    for i in 2..=5 {
        let n = s.node(&format!("Speed_v1_T{i}")).unwrap();
        assert_eq!(n.ild.parents["Speed"], [format!("Speed_v1_T{}", i - 1)]);
    }
    assert!(s.node("Speed_v1_T1").unwrap().ild.parents["Speed"].is_empty());
    let net = Network::from_ssbn(&s).unwrap();
    let r = infer(&net, "Speed_v1_T5", &Evidence::new().with("VehicleType_v1", "Tracked")).unwrap();
    let (_, var) = r.moments().unwrap();
    assert!(var > 0.0);
}

#[test]
fn speed_reports_are_clg_evidence() {
    let m = learned("threat_schema");
    let ev = Evidence::new()
        .with("ActualObject_rv1", "v1")
        .with("ObserverOf_m1_v1", "True")
        .with("Speed_RPT_rv1_t1", "60");
    let e = EntityInstanceSet::from_ids(&m, &["Speed_v1_t1"], &ev).unwrap();
    let s = ground(&m, &e, &ev, &["Speed_v1_t1"]).unwrap();
    let rpt = s.node("Speed_RPT_rv1_t1").unwrap();
    assert_eq!(rpt.ild.parents["Speed"], ["Speed_v1_t1"]);
    assert_eq!(rpt.ild.parents["MTI_Condition"], ["MTI_Condition_v1_m1_t1"]);
    let net = Network::from_ssbn(&s).unwrap();
    let prior = infer(&net, "Speed_v1_t1", &Evidence::new()).unwrap().moments().unwrap();
    let post = infer(&net, "Speed_v1_t1", &ev).unwrap().moments().unwrap();
    assert!(post.0 > prior.0);
    assert!(post.1 < prior.1);
}

#[test]
fn node_ids_and_evidence_files() {
    let m = learned("threat_schema");
    assert_eq!(parse_node_id(&m, "Speed_RPT_rv1_t1").unwrap(), ("Speed_RPT".to_string(), vec!["rv1".into(), "t1".into()]));
    assert_eq!(parse_node_id(&m, "Speed_v1").unwrap_err().code(), "E_NODE_ID");
    assert_eq!(parse_node_id(&m, "Nope_v1").unwrap_err().code(), "E_UNKNOWN_NODE");
    let ev = Evidence::parse_csv("node_id,value\n# observed\nVehicleType_v1, Tracked\nSpeed_v1_t1,31.5\n").unwrap();
    assert_eq!(ev.get("VehicleType_v1"), Some("Tracked"));
    assert_eq!(ev.get("Speed_v1_t1"), Some("31.5"));
    assert_eq!(Evidence::parse_csv("a,b,c\n").unwrap_err().code(), "E_EVIDENCE");
    assert_eq!(EntityInstanceSet::new().with("T", &["a_b"]).unwrap_err().code(), "E_NODE_ID");
}

fn chain() -> Network {
    let mut n = Network::new();
    n.add_discrete("A", &["t", "f"], &[], vec![vec![0.6, 0.4]]).unwrap();
    n.add_discrete("B", &["t", "f"], &["A"], vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
    n
}

#[test]
fn bayes_rule_on_a_chain() {
    let n = chain();
    let p = infer_discrete(&n, "A", &Evidence::new().with("B", "t")).unwrap();
    assert!((p.probability("t").unwrap() - 0.54 / 0.62).abs() < 1e-9);
    assert!((p.probability("t").unwrap() - 0.870968).abs() < 1e-6);
    let prior = infer_discrete(&n, "A", &Evidence::new()).unwrap();
    assert!((prior.probability("t").unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn inference_errors() {
    let n = chain();
    let bad = infer_discrete(&n, "A", &Evidence::new().with("B", "maybe")).unwrap_err();
    assert_eq!(bad.code(), "E_EVIDENCE");
    assert_eq!(infer_discrete(&n, "C", &Evidence::new()).unwrap_err().code(), "E_UNKNOWN_NODE");

    let mut h = Network::new();
    h.add_continuous("X", &[], &[], vec![row(0.0, &[], 1.0)]).unwrap();
    h.add_discrete("D", &["a", "b"], &[], vec![vec![0.5, 0.5]]).unwrap();
    h.add_continuous("Y", &["D"], &["X"], vec![row(0.0, &[1.0], 1.0), row(1.0, &[1.0], 1.0)]).unwrap();
    let e = Evidence::new().with("Y", "1");
    assert_eq!(infer_discrete(&h, "D", &e).unwrap_err().code(), "E_CONTINUOUS_IN_DISCRETE");
    assert!(infer(&h, "D", &e).is_ok());
    assert_eq!(h.add_discrete("Z", &["a"], &["X"], vec![vec![1.0]]).unwrap_err().code(), "E_NOT_CLG");

    let mut z = Network::new();
    z.add_discrete("A", &["t", "f"], &[], vec![vec![1.0, 0.0]]).unwrap();
    assert_eq!(infer(&z, "A", &Evidence::new().with("A", "f")).unwrap_err().code(), "E_IMPOSSIBLE_EVIDENCE");
}

#[test]
fn conjugate_gaussian_update() {
    let mut n = Network::new();
    n.add_continuous("X", &[], &[], vec![row(0.0, &[], 1.0)]).unwrap();
    n.add_continuous("Y", &[], &["X"], vec![row(0.0, &[1.0], 1.0)]).unwrap();
    let r = infer_clg(&n, "X", &Evidence::new().with("Y", "2")).unwrap();
    let (m, v) = r.moments().unwrap();
    assert!((m - 1.0).abs() < 1e-9 && (v - 0.5).abs() < 1e-9);
    let QueryResult::Continuous { components, .. } = r else { panic!() };
    assert_eq!(components.len(), 1);
    assert!((components[0].weight - 1.0).abs() < 1e-12);
    assert!((components[0].mean - m).abs() < 1e-12);
}

#[test]
fn linear_chain_moments() {
    let (mu, tau2, s2) = (3.0, 2.0, 0.7);
    let mut n = Network::new();
    n.add_continuous("X", &[], &[], vec![row(mu, &[], tau2)]).unwrap();
    n.add_continuous("Y", &[], &["X"], vec![row(0.0, &[2.0], s2)]).unwrap();
    let (m, v) = infer(&n, "Y", &Evidence::new()).unwrap().moments().unwrap();
    assert!((m - 2.0 * mu).abs() < 1e-12);
    assert!((v - (4.0 * tau2 + s2)).abs() < 1e-12);
}

#[test]
fn observed_query_is_a_point_mass() {
    let mut n = Network::new();
    n.add_continuous("X", &[], &[], vec![row(0.0, &[], 1.0)]).unwrap();
    let (m, v) = infer(&n, "X", &Evidence::new().with("X", "1.5")).unwrap().moments().unwrap();
    assert_eq!((m, v), (1.5, 0.0));
}

#[test]
fn variable_elimination_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let size = rng.random_range(2..=12);
        let net = random_discrete(&mut rng, size);
        let query = rng.random_range(0..size);
        let mut ev = Evidence::new();
        let mut pairs = vec![];
        for i in 0..size {
            if i != query && rng.random_bool(0.25) {
                let s = rng.random_range(0..2usize);
                ev.set(format!("N{i}"), s.to_string());
                pairs.push((i, s));
            }
        }
        let got = infer_discrete(&net, &format!("N{query}"), &ev).unwrap();
        let want = enumerate(&net, query, &pairs);
        let QueryResult::Discrete(p) = got else { panic!() };
        let tv: f64 = p.iter().zip(&want).map(|((_, a), b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 1e-9, "tv {tv}");
    }
}

#[test]
fn clg_moments_match_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    const N: usize = 100_000;
    for _ in 0..10 {
        let (net, d) = random_clg(&mut rng);
        let q = net.len() - 1;
        let fixed = rng.random_bool(0.5).then(|| (rng.random_range(0..d), rng.random_range(0..2usize)));
        let ev = match fixed {
            Some((i, s)) => Evidence::new().with(&format!("D{i}"), ["a", "b"][s]),
            None => Evidence::new(),
        };
        let (mean, var) = infer_clg(&net, &net.nodes[q].id, &ev).unwrap().moments().unwrap();
        let mc = monte_carlo(&net, q, fixed, &mut rng, N);
        let (m, v, se_mean, se_var) = (mc.mean, mc.variance, mc.se_mean, mc.se_variance);
        assert!((mean - m).abs() < 3.0 * se_mean, "mean {mean} vs {m} (se {se_mean})");
        assert!((var - v).abs() < 3.0 * se_var, "variance {var} vs {v} (se {se_var})");
    }
}

#[test]
fn mixture_moments_follow_the_components() {
    let mut n = Network::new();
    n.add_discrete("D", &["a", "b"], &[], vec![vec![0.3, 0.7]]).unwrap();
    n.add_continuous("X", &["D"], &[], vec![row(-1.0, &[], 1.0), row(2.0, &[], 0.5)]).unwrap();
    let r = infer(&n, "X", &Evidence::new()).unwrap();
    let QueryResult::Continuous { components, mean, variance } = r else { panic!() };
    assert_eq!(components.len(), 2);
    let w: f64 = components.iter().map(|c| c.weight).sum();
    assert!((w - 1.0).abs() < 1e-12);
    let m = 0.3 * -1.0 + 0.7 * 2.0;
    assert!((mean - m).abs() < 1e-12);
    assert!((variance - (0.3 * 2.0 + 0.7 * 4.5 - m * m)).abs() < 1e-12);
    let post = infer(&n, "D", &Evidence::new().with("X", "2")).unwrap();
    assert!(post.probability("b").unwrap() > 0.7);
}

proptest! {
    #[test]
    fn conditioning_on_the_map_state_keeps_it_possible(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = rng.random_range(2..=8);
        let net = random_discrete(&mut rng, size);
        let q = format!("N{}", rng.random_range(0..size));
        let QueryResult::Discrete(p) = infer_discrete(&net, &q, &Evidence::new()).unwrap() else { unreachable!() };
        let (map, _) = p.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let other = format!("N{}", (net.index_of(&q).unwrap() + 1) % size);
        let r = infer_discrete(&net, &other, &Evidence::new().with(&q, map)).unwrap();
        let QueryResult::Discrete(r) = r else { unreachable!() };
        prop_assert!((r.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
        let again = infer_discrete(&net, &q, &Evidence::new().with(&q, map)).unwrap();
        prop_assert!((again.probability(map).unwrap() - 1.0).abs() < 1e-12);
    }
}
