use std::collections::HashSet;

use super::{AttrKind, AttributeSpec, Database, RelationClass, RelationInstance, RelationSchema, RelationalError, Value};

/// Closed-world completion of an attribute-free binary relationship.
///
/// The result has the same key attributes plus a boolean attribute `truth`. Listed pairs
/// are `True`, every other candidate pair is `False`. When both keys reference the same
/// entity relation the relationship is treated as symmetric: candidates are the pairs
/// `(a, b)` with `a < b` in key order and listed pairs are put in that orientation.
pub fn complete_boolean_relation(db: &Database, relation: &str, truth: &str) -> Result<RelationInstance, RelationalError> {
    let rel = db.require(relation)?;
    let schema = &rel.schema;
    if schema.classify() != RelationClass::Relationship {
        return Err(RelationalError::NotRelationship {
            relation: relation.into(),
        });
    }
    if schema.non_key_attributes().next().is_some() {
        return Err(RelationalError::NonKeyAttributesPresent {
            relation: relation.into(),
        });
    }
    if schema.primary_key.len() != 2 {
        return Err(RelationalError::UnsupportedArity {
            relation: relation.into(),
            arity: schema.primary_key.len(),
        });
    }
    let targets: Vec<String> = schema
        .key_attributes()
        .map(|a| match &a.kind {
            AttrKind::ForeignKey(t) => t.clone(),
            _ => unreachable!("relationship keys are foreign keys"),
        })
        .collect();
    let cols: Vec<usize> = schema.primary_key.iter().map(|k| rel.column(k).expect("validated")).collect();
    let symmetric = targets[0] == targets[1];

    let mut listed = HashSet::new();
    for row in &rel.rows {
        let (a, b) = (row[cols[0]].to_string(), row[cols[1]].to_string());
        if symmetric {
            if a == b {
                return Err(RelationalError::ReflexivePair {
                    relation: relation.into(),
                    key: format!("{a},{b}"),
                });
            }
            listed.insert(if a < b { (a, b) } else { (b, a) });
        } else {
            listed.insert((a, b));
        }
    }

    let left = db.require(&targets[0])?.entity_keys();
    let right = db.require(&targets[1])?.entity_keys();
    let mut pairs = Vec::new();
    if symmetric {
        let mut keys = left;
        keys.sort();
        keys.dedup();
        for i in 0..keys.len() {
            for j in i + 1..keys.len() {
                pairs.push((keys[i].clone(), keys[j].clone()));
            }
        }
    } else {
        for a in &left {
            for b in &right {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }

    let mut attributes: Vec<AttributeSpec> = schema.key_attributes().cloned().collect();
    attributes.push(AttributeSpec::new(truth, AttrKind::Boolean));
    let out_schema = RelationSchema::new(schema.name.clone(), attributes, schema.primary_key.clone());
    let rows = pairs
        .into_iter()
        .map(|(a, b)| {
            let t = listed.contains(&(a.clone(), b.clone()));
            vec![Value::Text(a), Value::Text(b), Value::Bool(t)]
        })
        .collect();
    Ok(RelationInstance::new(out_schema, rows))
}
