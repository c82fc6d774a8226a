use crate::mtheory::{ContextNode, MFrag, MTheory, ResidentNode, ValueSpace};
use crate::relational::{AttrKind, Database, RelationClass};

use super::MapperError;

/// Entity types are the upper-cased names of entity relations.
pub fn entity_type_name(relation: &str) -> String {
    relation.to_uppercase()
}

pub(crate) fn value_space(kind: &AttrKind) -> Option<ValueSpace> {
    match kind {
        AttrKind::Categorical(s) => Some(ValueSpace::Categorical(s.clone())),
        AttrKind::Continuous(_) => Some(ValueSpace::Continuous),
        AttrKind::Boolean => Some(ValueSpace::Boolean),
        AttrKind::ForeignKey(t) => Some(ValueSpace::Entity(entity_type_name(t))),
        AttrKind::Key => None,
    }
}

/// One MFrag per relation with something to say: every non-key attribute becomes a
/// resident node over the key's ordinary variables, and an attribute-free relationship
/// becomes a boolean resident named after the relation. Key-only entity relations only
/// contribute their entity type.
pub fn build_initial_mtheory(db: &Database) -> Result<MTheory, MapperError> {
    db.check_normalized()?;
    let mut mfrags = Vec::new();
    for rel in db.relations() {
        let schema = &rel.schema;
        let mut frag = MFrag::new(entity_type_name(&schema.name));
        let mut ovs = Vec::new();
        for a in schema.key_attributes() {
            let ty = match (&a.kind, schema.classify()) {
                (AttrKind::Key, RelationClass::Entity) => entity_type_name(&schema.name),
                (AttrKind::ForeignKey(t), _) => entity_type_name(t),
                _ => unreachable!("normalized relations have entity or foreign keys"),
            };
            frag.contexts.push(ContextNode::IsA {
                ov: a.name.clone(),
                entity_type: ty,
            });
            ovs.push(a.name.clone());
        }
        let attrs: Vec<_> = schema.non_key_attributes().collect();
        if attrs.is_empty() {
            if schema.classify() == RelationClass::Entity {
                continue;
            }
            let mut r = ResidentNode::new(schema.name.clone(), ovs.clone());
            r.value_space = Some(ValueSpace::Boolean);
            frag.residents.push(r);
        }
        for a in attrs {
            let mut r = ResidentNode::new(a.name.clone(), ovs.clone());
            r.value_space = value_space(&a.kind);
            frag.residents.push(r);
        }
        mfrags.push(frag);
    }
    let m = MTheory::new(mfrags);
    m.validate()?;
    Ok(m)
}
