//! Relational schemas, instances, manifest/CSV ingestion and ER normalization.

mod cwa;
mod load;
mod manifest;
mod normalize;

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;

pub use cwa::complete_boolean_relation;
pub use load::{load_database, read_relation, write_csv, write_database};
pub use manifest::{parse_manifest, write_manifest};
pub use normalize::er_normalize;

#[derive(Debug, thiserror::Error)]
pub enum RelationalError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("relation {relation}: {message}")]
    InvalidSchema { relation: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("relation {relation}: missing data file {path}")]
    MissingDataFile { relation: String, path: String },
    #[error("relation {relation}: header {message}")]
    HeaderMismatch { relation: String, message: String },
    #[error("relation {relation} row {row}: missing value for {attribute}")]
    MissingValue {
        relation: String,
        row: usize,
        attribute: String,
    },
    #[error("relation {relation} row {row}: {attribute}={value} is not one of the declared states")]
    UnknownState {
        relation: String,
        row: usize,
        attribute: String,
        value: String,
    },
    #[error("relation {relation} row {row}: {attribute}={value} is not a valid {expected}")]
    BadValue {
        relation: String,
        row: usize,
        attribute: String,
        value: String,
        expected: &'static str,
    },
    #[error("relation {relation} row {row}: {attribute}={value} has no match in {target}")]
    DanglingForeignKey {
        relation: String,
        row: usize,
        attribute: String,
        value: String,
        target: String,
    },
    #[error("relation {relation}: duplicate primary key ({key})")]
    DuplicatePrimaryKey { relation: String, key: String },
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("relation {relation} is not normalized: {reason}")]
    NotNormalized { relation: String, reason: String },
    #[error("cannot merge {relation} into {target}: no row for key {key}")]
    MergeCardinality {
        relation: String,
        target: String,
        key: String,
    },
    #[error("cannot merge {relation} into {target}: attribute {attribute} exists in both")]
    MergeNameClash {
        relation: String,
        target: String,
        attribute: String,
    },
    #[error("relation {relation} is not a relationship")]
    NotRelationship { relation: String },
    #[error("relation {relation} carries non-key attributes")]
    NonKeyAttributesPresent { relation: String },
    #[error("relation {relation} has arity {arity}; only binary relationships can be completed")]
    UnsupportedArity { relation: String, arity: usize },
    #[error("relation {relation}: reflexive pair ({key}) in a self-relationship")]
    ReflexivePair { relation: String, key: String },
}

impl RelationalError {
    /// Stable error code used on the command line.
    pub fn code(&self) -> &'static str {
        match self {
            RelationalError::Manifest { .. } => "E_MANIFEST",
            RelationalError::InvalidSchema { .. } => "E_SCHEMA",
            RelationalError::Io { .. } => "E_IO",
            RelationalError::Csv { .. } | RelationalError::HeaderMismatch { .. } => "E_CSV",
            RelationalError::MissingDataFile { .. } => "E_IO",
            RelationalError::MissingValue { .. } => "E_ASSUMPTION1",
            RelationalError::UnknownState { .. } | RelationalError::BadValue { .. } => "E_VALUE",
            RelationalError::DanglingForeignKey { .. } => "E_FK",
            RelationalError::DuplicatePrimaryKey { .. } => "E_PK",
            RelationalError::UnknownRelation(_) => "E_UNKNOWN_RELATION",
            RelationalError::NotNormalized { .. } => "E_NOT_NORMALIZED",
            RelationalError::MergeCardinality { .. } => "E_MERGE",
            RelationalError::MergeNameClash { .. } => "E_MERGE",
            RelationalError::NotRelationship { .. } => "E_CWA",
            RelationalError::NonKeyAttributesPresent { .. } => "E_CWA",
            RelationalError::UnsupportedArity { .. } => "E_CWA_ARITY",
            RelationalError::ReflexivePair { .. } => "E_CWA",
        }
    }
}

/// Attribute kinds as written in a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrKind {
    Key,
    ForeignKey(String),
    Categorical(Vec<String>),
    Continuous(String),
    Boolean,
}

impl AttrKind {
    pub fn is_discrete(&self) -> bool {
        matches!(self, AttrKind::Categorical(_) | AttrKind::Boolean)
    }

    /// Declared states of a discrete kind, `True`/`False` for booleans.
    pub fn states(&self) -> Option<Vec<String>> {
        match self {
            AttrKind::Categorical(s) => Some(s.clone()),
            AttrKind::Boolean => Some(vec!["True".into(), "False".into()]),
            _ => None,
        }
    }
}

impl fmt::Display for AttrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrKind::Key => write!(f, "key"),
            AttrKind::ForeignKey(r) => write!(f, "fk:{r}"),
            AttrKind::Categorical(s) => write!(f, "cat:{}", s.join("|")),
            AttrKind::Continuous(u) => write!(f, "cont:{u}"),
            AttrKind::Boolean => write!(f, "bool"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttrKind,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, kind: AttrKind) -> Self {
        AttributeSpec {
            name: name.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: String,
    pub attributes: Vec<AttributeSpec>,
    pub primary_key: Vec<String>,
}

/// Role of a relation in an ER-normalized database.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationClass {
    /// Single-attribute key that is not a foreign key.
    Entity,
    /// Primary key made of two or more foreign keys.
    Relationship,
    /// Single-attribute key that is itself a foreign key: gets folded by normalization.
    Attribute,
    Other,
}

impl RelationSchema {
    pub fn new(name: impl Into<String>, attributes: Vec<AttributeSpec>, primary_key: Vec<String>) -> Self {
        RelationSchema {
            name: name.into(),
            attributes,
            primary_key,
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn is_key(&self, name: &str) -> bool {
        self.primary_key.iter().any(|k| k == name)
    }

    pub fn non_key_attributes(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.attributes.iter().filter(move |a| !self.is_key(&a.name))
    }

    pub fn key_attributes(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.primary_key.iter().filter_map(move |k| self.attribute(k))
    }

    pub fn classify(&self) -> RelationClass {
        let keys: Vec<&AttributeSpec> = self.key_attributes().collect();
        match keys.as_slice() {
            [k] => match k.kind {
                AttrKind::ForeignKey(_) => RelationClass::Attribute,
                AttrKind::Key => RelationClass::Entity,
                _ => RelationClass::Other,
            },
            ks if ks.len() >= 2 && ks.iter().all(|k| matches!(k.kind, AttrKind::ForeignKey(_))) => {
                RelationClass::Relationship
            }
            _ => RelationClass::Other,
        }
    }

    fn invalid(&self, message: impl Into<String>) -> RelationalError {
        RelationalError::InvalidSchema {
            relation: self.name.clone(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<(), RelationalError> {
        let mut seen = HashSet::new();
        for a in &self.attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(self.invalid(format!("attribute {} declared twice", a.name)));
            }
            if let AttrKind::Categorical(states) = &a.kind {
                let unique: HashSet<_> = states.iter().collect();
                if states.is_empty() || unique.len() != states.len() {
                    return Err(self.invalid(format!("attribute {} needs distinct states", a.name)));
                }
            }
        }
        if self.primary_key.is_empty() {
            return Err(self.invalid("empty primary key"));
        }
        for k in &self.primary_key {
            match self.attribute(k) {
                None => return Err(self.invalid(format!("primary key names unknown attribute {k}"))),
                Some(a) if !matches!(a.kind, AttrKind::Key | AttrKind::ForeignKey(_)) => {
                    return Err(self.invalid(format!("primary key attribute {k} must be key or fk")))
                }
                _ => {}
            }
        }
        for a in &self.attributes {
            if a.kind == AttrKind::Key && !self.is_key(&a.name) {
                return Err(self.invalid(format!("key attribute {} is not part of the primary key", a.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Real(f64),
    Bool(bool),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Real(x) => write!(f, "{x}"),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
        }
    }
}

pub type Row = Vec<Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct RelationInstance {
    pub schema: RelationSchema,
    pub rows: Vec<Row>,
}

impl RelationInstance {
    pub fn new(schema: RelationSchema, rows: Vec<Row>) -> Self {
        RelationInstance { schema, rows }
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn column(&self, attribute: &str) -> Option<usize> {
        self.schema.index_of(attribute)
    }

    pub fn key_of(&self, row: &Row) -> Vec<String> {
        self.schema
            .primary_key
            .iter()
            .map(|k| row[self.schema.index_of(k).expect("validated key")].to_string())
            .collect()
    }

    /// Rows of an entity relation listed as key strings, in row order.
    pub fn entity_keys(&self) -> Vec<String> {
        self.rows.iter().map(|r| self.key_of(r).join(",")).collect()
    }

    /// Projection onto the named attributes, duplicates kept.
    pub fn project(&self, attributes: &[&str]) -> Option<Vec<Vec<Value>>> {
        let idx: Option<Vec<usize>> = attributes.iter().map(|a| self.column(a)).collect();
        let idx = idx?;
        Some(self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect())
    }
}

/// A set of named relations. Equality ignores relation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Database {
    relations: IndexMap<String, RelationInstance>,
}

/// A foreign-key attribute and the relation it references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FkEdge {
    pub from: String,
    pub attribute: String,
    pub to: String,
}

impl Database {
    /// Builds a database and checks every schema and data invariant.
    pub fn new(relations: Vec<RelationInstance>) -> Result<Self, RelationalError> {
        let db = Self::new_unchecked(relations)?;
        db.validate()?;
        Ok(db)
    }

    pub(crate) fn new_unchecked(relations: Vec<RelationInstance>) -> Result<Self, RelationalError> {
        let mut map = IndexMap::new();
        for r in relations {
            if map.contains_key(&r.schema.name) {
                return Err(RelationalError::InvalidSchema {
                    relation: r.schema.name.clone(),
                    message: "relation declared twice".into(),
                });
            }
            map.insert(r.schema.name.clone(), r);
        }
        Ok(Database { relations: map })
    }

    pub fn relation(&self, name: &str) -> Option<&RelationInstance> {
        self.relations.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&RelationInstance, RelationalError> {
        self.relation(name)
            .ok_or_else(|| RelationalError::UnknownRelation(name.to_string()))
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationInstance> {
        self.relations.values()
    }

    pub fn relation_names(&self) -> Vec<&str> {
        self.relations.keys().map(|s| s.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn fk_edges(&self) -> Vec<FkEdge> {
        let mut out = Vec::new();
        for r in self.relations.values() {
            for a in &r.schema.attributes {
                if let AttrKind::ForeignKey(t) = &a.kind {
                    out.push(FkEdge {
                        from: r.schema.name.clone(),
                        attribute: a.name.clone(),
                        to: t.clone(),
                    });
                }
            }
        }
        out
    }

    /// Replaces (or adds) a relation, keeping its position.
    pub fn with_relation(&self, relation: RelationInstance) -> Result<Database, RelationalError> {
        let mut db = self.clone();
        db.relations.insert(relation.schema.name.clone(), relation);
        db.validate()?;
        Ok(db)
    }

    /// Finds the relation owning a non-key attribute, or an attribute-free relationship
    /// named `attribute`.
    pub fn locate_attribute(&self, attribute: &str) -> Vec<&RelationInstance> {
        self.relations
            .values()
            .filter(|r| {
                r.schema.non_key_attributes().any(|a| a.name == attribute)
                    || (r.schema.name == attribute && r.schema.non_key_attributes().next().is_none())
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), RelationalError> {
        for r in self.relations.values() {
            r.schema.validate()?;
            for a in &r.schema.attributes {
                if let AttrKind::ForeignKey(target) = &a.kind {
                    let t = self.relations.get(target).ok_or_else(|| RelationalError::InvalidSchema {
                        relation: r.schema.name.clone(),
                        message: format!("foreign key {} references unknown relation {target}", a.name),
                    })?;
                    if t.schema.primary_key.len() != 1 {
                        return Err(RelationalError::InvalidSchema {
                            relation: r.schema.name.clone(),
                            message: format!("foreign key {} must reference a single-attribute key", a.name),
                        });
                    }
                }
            }
        }
        for r in self.relations.values() {
            self.validate_rows(r)?;
        }
        Ok(())
    }

    fn validate_rows(&self, r: &RelationInstance) -> Result<(), RelationalError> {
        let name = &r.schema.name;
        let mut keys = HashSet::new();
        let mut targets: IndexMap<&str, HashSet<String>> = IndexMap::new();
        for a in &r.schema.attributes {
            if let AttrKind::ForeignKey(t) = &a.kind {
                if !targets.contains_key(t.as_str()) {
                    let target = &self.relations[t.as_str()];
                    targets.insert(t.as_str(), target.rows.iter().map(|row| target.key_of(row).join(",")).collect());
                }
            }
        }
        for (i, row) in r.rows.iter().enumerate() {
            if row.len() != r.schema.attributes.len() {
                return Err(RelationalError::InvalidSchema {
                    relation: name.clone(),
                    message: format!("row {} has {} values", i + 1, row.len()),
                });
            }
            for (a, v) in r.schema.attributes.iter().zip(row) {
                let ok = match (&a.kind, v) {
                    (AttrKind::Categorical(states), Value::Text(s)) => {
                        if !states.contains(s) {
                            return Err(RelationalError::UnknownState {
                                relation: name.clone(),
                                row: i + 1,
                                attribute: a.name.clone(),
                                value: s.clone(),
                            });
                        }
                        true
                    }
                    (AttrKind::Key | AttrKind::ForeignKey(_), Value::Text(s)) => !s.is_empty(),
                    (AttrKind::Continuous(_), Value::Real(x)) => x.is_finite(),
                    (AttrKind::Boolean, Value::Bool(_)) => true,
                    _ => false,
                };
                if !ok {
                    return Err(RelationalError::BadValue {
                        relation: name.clone(),
                        row: i + 1,
                        attribute: a.name.clone(),
                        value: v.to_string(),
                        expected: "value for the declared kind",
                    });
                }
                if let (AttrKind::ForeignKey(t), Value::Text(s)) = (&a.kind, v) {
                    if !targets[t.as_str()].contains(s) {
                        return Err(RelationalError::DanglingForeignKey {
                            relation: name.clone(),
                            row: i + 1,
                            attribute: a.name.clone(),
                            value: s.clone(),
                            target: t.clone(),
                        });
                    }
                }
            }
            if !keys.insert(r.key_of(row)) {
                return Err(RelationalError::DuplicatePrimaryKey {
                    relation: name.clone(),
                    key: r.key_of(row).join(","),
                });
            }
        }
        Ok(())
    }

    /// Checks that every relation is an entity or relationship relation.
    pub fn check_normalized(&self) -> Result<(), RelationalError> {
        for r in self.relations.values() {
            match r.schema.classify() {
                RelationClass::Entity | RelationClass::Relationship => {}
                RelationClass::Attribute => {
                    return Err(RelationalError::NotNormalized {
                        relation: r.schema.name.clone(),
                        reason: "its key is a single foreign key; run normalization first".into(),
                    })
                }
                RelationClass::Other => {
                    return Err(RelationalError::NotNormalized {
                        relation: r.schema.name.clone(),
                        reason: "it is neither an entity nor a relationship relation".into(),
                    })
                }
            }
        }
        Ok(())
    }

    pub(crate) fn relations_mut(&mut self) -> &mut IndexMap<String, RelationInstance> {
        &mut self.relations
    }
}
