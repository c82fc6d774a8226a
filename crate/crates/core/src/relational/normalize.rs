use std::collections::HashMap;

use super::{AttrKind, Database, RelationClass, RelationInstance, RelationalError};

/// Folds every relation keyed by a single foreign key into the relation it references,
/// repeating until no such relation remains. References to a folded relation are
/// redirected to the relation it was merged into.
pub fn er_normalize(db: &Database) -> Result<Database, RelationalError> {
    let mut db = db.clone();
    loop {
        let mut candidates: Vec<&RelationInstance> = db
            .relations()
            .filter(|r| r.schema.classify() == RelationClass::Attribute)
            .collect();
        candidates.sort_by(|a, b| a.schema.name.cmp(&b.schema.name));
        let Some(folded) = candidates.first().map(|r| (*r).clone()) else {
            break;
        };
        merge(&mut db, &folded)?;
    }
    db.validate()?;
    Ok(db)
}

fn merge(db: &mut Database, folded: &RelationInstance) -> Result<(), RelationalError> {
    let key = &folded.schema.primary_key[0];
    let target_name = match &folded.schema.attribute(key).expect("validated").kind {
        AttrKind::ForeignKey(t) => t.clone(),
        _ => unreachable!("attribute relations are keyed by a foreign key"),
    };
    let extra: Vec<usize> = folded
        .schema
        .attributes
        .iter()
        .enumerate()
        .filter(|(_, a)| &a.name != key)
        .map(|(i, _)| i)
        .collect();
    let key_col = folded.column(key).expect("validated");
    let by_key: HashMap<String, &Vec<_>> = folded.rows.iter().map(|r| (r[key_col].to_string(), r)).collect();

    let target = db.require(&target_name)?.clone();
    let mut schema = target.schema.clone();
    for &i in &extra {
        let attr = &folded.schema.attributes[i];
        if schema.attribute(&attr.name).is_some() {
            return Err(RelationalError::MergeNameClash {
                relation: folded.schema.name.clone(),
                target: target_name.clone(),
                attribute: attr.name.clone(),
            });
        }
        schema.attributes.push(attr.clone());
    }
    let mut rows = Vec::with_capacity(target.rows.len());
    for row in &target.rows {
        let k = target.key_of(row).join(",");
        let Some(src) = by_key.get(&k) else {
            return Err(RelationalError::MergeCardinality {
                relation: folded.schema.name.clone(),
                target: target_name.clone(),
                key: k,
            });
        };
        let mut merged = row.clone();
        merged.extend(extra.iter().map(|&i| src[i].clone()));
        rows.push(merged);
    }

    let relations = db.relations_mut();
    relations.shift_remove(&folded.schema.name);
    relations.insert(target_name.clone(), RelationInstance::new(schema, rows));
    for r in relations.values_mut() {
        for a in &mut r.schema.attributes {
            if a.kind == AttrKind::ForeignKey(folded.schema.name.clone()) {
                a.kind = AttrKind::ForeignKey(target_name.clone());
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relational::{AttributeSpec, RelationSchema, Value};

    fn text(s: &str) -> Value {
        Value::Text(s.into())
    }

    #[test]
    fn partial_attribute_relation_is_rejected() {
        let e = RelationSchema::new("E", vec![AttributeSpec::new("id", AttrKind::Key)], vec!["id".into()]);
        let a = RelationSchema::new(
            "Colour",
            vec![
                AttributeSpec::new("e", AttrKind::ForeignKey("E".into())),
                AttributeSpec::new("Colour", AttrKind::Categorical(vec!["Red".into(), "Blue".into()])),
            ],
            vec!["e".into()],
        );
        let db = Database::new(vec![
            RelationInstance::new(e, vec![vec![text("e1")], vec![text("e2")]]),
            RelationInstance::new(a, vec![vec![text("e1"), text("Red")]]),
        ])
        .unwrap();
        assert!(matches!(er_normalize(&db), Err(RelationalError::MergeCardinality { .. })));
    }
}
