mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::*;
use mebn::relational::*;
use proptest::prelude::*;

fn by_name(db: &Database) -> BTreeMap<String, RelationInstance> {
    db.relations().map(|r| (r.name().to_string(), r.clone())).collect()
}

fn schema(text: &str) -> RelationSchema {
    parse_manifest(text).unwrap().remove(0)
}

fn rows(r: &RelationInstance) -> Vec<Vec<String>> {
    r.rows.iter().map(|row| row.iter().map(|v| v.to_string()).collect()).collect()
}

#[test]
fn normalization_folds_vehicle_type() {
    let start = Instant::now();
    let raw = load("vehicles_raw");
    let got = er_normalize(&raw).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
    let want = load("vehicles_normalized");
    assert_eq!(by_name(&got), by_name(&want));
    assert!(got.relation("VehicleType").is_none());
    let vehicle = got.relation("Vehicle").unwrap();
    assert_eq!(rows(vehicle), [["v1", "Wheeled"], ["v2", "Tracked"]]);
    got.check_normalized().unwrap();
    assert_eq!(raw.check_normalized().unwrap_err().code(), "E_NOT_NORMALIZED");
}

#[test]
fn normalization_is_idempotent_on_the_full_schema() {
    let once = er_normalize(&load("threat_schema")).unwrap();
    let twice = er_normalize(&once).unwrap();
    assert_eq!(by_name(&once), by_name(&twice));
}

#[test]
fn relation_classes() {
    let db = load("vehicles_raw");
    let class = |n: &str| db.relation(n).unwrap().schema.classify();
    assert_eq!(class("Vehicle"), RelationClass::Entity);
    assert_eq!(class("VehicleType"), RelationClass::Attribute);
    assert_eq!(class("Location"), RelationClass::Relationship);
    assert_eq!(class("Situation"), RelationClass::Relationship);
}

#[test]
fn closed_world_completion_of_predicates() {
    let db = load("contacts");
    let communicate = complete_boolean_relation(&db, "Communicate", "Communicate").unwrap();
    let meet = complete_boolean_relation(&db, "Meet", "Meet").unwrap();
    let pairs = [("v1", "v2"), ("v1", "v3"), ("v1", "v4"), ("v2", "v3"), ("v2", "v4"), ("v3", "v4")];
    let expect = |truth: [&str; 6]| -> Vec<Vec<String>> {
        pairs.iter().zip(truth).map(|((a, b), t)| vec![a.to_string(), b.to_string(), t.to_string()]).collect()
    };
    let sorted = |r: &RelationInstance| {
        let mut v = rows(r);
        v.sort();
        v
    };
    assert_eq!(sorted(&communicate), expect(["True", "False", "False", "True", "False", "True"]));
    assert_eq!(sorted(&meet), expect(["True", "False", "True", "True", "False", "False"]));
    assert_eq!(communicate.schema.attribute("Communicate").unwrap().kind, AttrKind::Boolean);
    let e = complete_boolean_relation(&db, "Vehicle", "x").unwrap_err();
    assert_eq!(e.code(), "E_CWA");
}

#[test]
fn loading_enforces_the_assumptions() {
    let s = schema("relation R\n  attr id key\n  attr c cat:A|B\n  attr x cont:m\n  pk id\nend\n");
    let read = |csv: &str| read_relation(&s, csv.as_bytes(), "R.csv");
    assert_eq!(read("id,c,x\na,A,1.5\nb,B,2\n").unwrap().rows.len(), 2);
    assert_eq!(read("id,c,x\na,,1.5\n").unwrap_err().code(), "E_ASSUMPTION1");
    let unknown = read("id,c,x\na,C,1.5\n").unwrap();
    assert_eq!(Database::new(vec![unknown]).unwrap_err().code(), "E_VALUE");
    assert_eq!(read("id,c,x\na,A,fast\n").unwrap_err().code(), "E_VALUE");
    assert_eq!(read("id,c\na,A\n").unwrap_err().code(), "E_CSV");
    let dup = RelationInstance::new(s.clone(), read("id,c,x\na,A,1\na,B,2\n").unwrap().rows);
    assert_eq!(Database::new(vec![dup]).unwrap_err().code(), "E_PK");
}

#[test]
fn dangling_foreign_keys_are_rejected() {
    let schemas = parse_manifest("relation E\n  attr id key\n  pk id\nend\nrelation A\n  attr e fk:E\n  attr a bool\n  pk e\nend\n").unwrap();
    let e = read_relation(&schemas[0], "id\ne1\n".as_bytes(), "E.csv").unwrap();
    let a = read_relation(&schemas[1], "e,a\ne2,True\n".as_bytes(), "A.csv").unwrap();
    assert_eq!(Database::new(vec![e, a]).unwrap_err().code(), "E_FK");
}

#[test]
fn manifest_errors_carry_line_numbers() {
    let e = parse_manifest("relation R\n  attr id key\n  attr c colour\n  pk id\nend\n").unwrap_err();
    assert_eq!(e.code(), "E_MANIFEST");
    assert!(e.to_string().contains("line 3"), "{e}");
}

#[test]
fn written_databases_load_back() {
    let db = er_normalize(&load("threat_schema")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_database(&db, dir.path()).unwrap();
    let back = load_database(&dir.path().join("manifest.txt"), dir.path()).unwrap();
    assert_eq!(by_name(&db), by_name(&back));
}

fn kind() -> impl Strategy<Value = AttrKind> {
    prop_oneof![
        Just(AttrKind::Boolean),
        "[a-z]{1,4}".prop_map(AttrKind::Continuous),
        proptest::collection::btree_set("[A-Z][a-z]{0,4}", 1..4).prop_map(|s| AttrKind::Categorical(s.into_iter().collect())),
    ]
}

proptest! {
    #[test]
    fn manifests_round_trip(kinds in proptest::collection::vec(kind(), 0..5)) {
        let mut attrs = vec![AttributeSpec::new("id", AttrKind::Key)];
        attrs.extend(kinds.into_iter().enumerate().map(|(i, k)| AttributeSpec::new(format!("a{i}"), k)));
        let s = RelationSchema::new("R", attrs, vec!["id".into()]);
        let text = write_manifest([&s]);
        prop_assert_eq!(parse_manifest(&text).unwrap(), vec![s]);
    }
}
