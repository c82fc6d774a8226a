use std::fmt;

use crate::mtheory::Aggregate;
use crate::relational::{complete_boolean_relation, AttrKind, Database, RelationInstance};

use super::MapperError;

/// `Relation.Attribute`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttrRef {
    pub relation: String,
    pub attribute: String,
}

impl AttrRef {
    pub fn new(relation: impl Into<String>, attribute: impl Into<String>) -> Self {
        AttrRef {
            relation: relation.into(),
            attribute: attribute.into(),
        }
    }
}

impl fmt::Display for AttrRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.relation, self.attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleParent {
    pub attr: AttrRef,
    /// Value at the preceding step of the ordered entity type.
    pub prev: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Categorical,
    Clg,
    Boolean,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Categorical => "categorical",
            Family::Clg => "clg",
            Family::Boolean => "boolean",
        }
    }
}

/// Dirichlet pseudo-counts attached to a rule.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSpec {
    /// The same count for every state.
    Uniform(f64),
    PerState(Vec<(String, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalRule {
    pub parents: Vec<RuleParent>,
    pub child: AttrRef,
    pub family: Family,
    pub via: Vec<String>,
    pub prior: Option<PriorSpec>,
    pub aggregate: Option<Aggregate>,
}

impl CausalRule {
    pub fn new(parents: Vec<RuleParent>, child: AttrRef, family: Family) -> Self {
        CausalRule {
            parents,
            child,
            family,
            via: vec![],
            prior: None,
            aggregate: None,
        }
    }
}

impl fmt::Display for CausalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parents: Vec<String> = self
            .parents
            .iter()
            .map(|p| if p.prev { format!("{}@prev", p.attr) } else { p.attr.to_string() })
            .collect();
        write!(f, "causal({} -> {}) family={}", parents.join(", "), self.child, self.family.name())?;
        if !self.via.is_empty() {
            write!(f, " via={}", self.via.join(","))?;
        }
        match &self.prior {
            Some(PriorSpec::Uniform(a)) => write!(f, " prior={a}")?,
            Some(PriorSpec::PerState(s)) => {
                let s: Vec<String> = s.iter().map(|(k, a)| format!("{k}:{a}")).collect();
                write!(f, " prior={}", s.join("|"))?
            }
            None => {}
        }
        if let Some(a) = self.aggregate {
            write!(f, " agg={}", a.name())?;
        }
        Ok(())
    }
}

fn rule_err(line: usize, message: impl Into<String>) -> MapperError {
    MapperError::Rule {
        line,
        message: message.into(),
    }
}

/// Splits `a, {b, c}, d` at top-level commas.
fn split_top(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let (mut depth, mut start) = (0, 0);
    for (i, c) in s.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out
}

fn resolve(db: &Database, line: usize, text: &str) -> Result<AttrRef, MapperError> {
    if let Some((rel, attr)) = text.split_once('.') {
        let r = db.require(rel).map_err(|_| rule_err(line, format!("unknown relation {rel}")))?;
        let ok = r.schema.non_key_attributes().any(|a| a.name == attr)
            || (r.schema.name == attr && r.schema.non_key_attributes().all(|a| a.name == attr));
        if !ok {
            return Err(rule_err(line, format!("relation {rel} has no attribute {attr}")));
        }
        return Ok(AttrRef::new(rel, attr));
    }
    match db.locate_attribute(text).as_slice() {
        [] => Err(MapperError::UnknownAttribute(text.to_string())),
        [r] => Ok(AttrRef::new(r.name(), text)),
        many => Err(MapperError::AmbiguousAttribute {
            attribute: text.to_string(),
            candidates: many.iter().map(|r| r.name().to_string()).collect(),
        }),
    }
}

fn attr_kind(db: &Database, a: &AttrRef) -> Option<AttrKind> {
    let r = db.relation(&a.relation)?;
    match r.schema.attribute(&a.attribute) {
        Some(s) => Some(s.kind.clone()),
        None if r.schema.name == a.attribute => Some(AttrKind::Boolean),
        None => None,
    }
}

fn parse_prior(line: usize, v: &str) -> Result<PriorSpec, MapperError> {
    let num = |s: &str| -> Result<f64, MapperError> {
        match s.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
            _ => Err(rule_err(line, format!("pseudo-count '{s}' must be a positive number"))),
        }
    };
    if !v.contains(':') {
        return Ok(PriorSpec::Uniform(num(v)?));
    }
    v.split('|')
        .map(|part| {
            let (s, a) = part
                .split_once(':')
                .ok_or_else(|| rule_err(line, format!("expected State:count, found '{part}'")))?;
            Ok((s.to_string(), num(a)?))
        })
        .collect::<Result<_, _>>()
        .map(PriorSpec::PerState)
}

/// Parses a rule file against the database the rules talk about.
///
/// ```text
/// causal(Vehicle.VehicleType, Speed.Speed@prev -> Speed.Speed) family=clg
/// causal({VehicleType, PreviousSpeed}, Speed)      # set form, family inferred
/// ```
///
/// Unqualified attribute names are resolved when exactly one relation owns them. A
/// missing `family=` is inferred from the child attribute's kind.
pub fn parse_rules(text: &str, db: &Database) -> Result<Vec<CausalRule>, MapperError> {
    let mut rules = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let body = content
            .strip_prefix("causal")
            .map(str::trim_start)
            .and_then(|s| s.strip_prefix('('))
            .ok_or_else(|| rule_err(line, "expected 'causal('"))?;
        let close = body.rfind(')').ok_or_else(|| rule_err(line, "missing ')'"))?;
        let (inner, opts) = (&body[..close], &body[close + 1..]);

        let (parent_texts, child_text): (Vec<&str>, &str) = if let Some((ps, c)) = inner.split_once("->") {
            (split_top(ps), c.trim())
        } else {
            let mut parts = split_top(inner);
            if parts.len() < 2 {
                return Err(rule_err(line, "a rule needs at least one parent and a child"));
            }
            let child = parts.pop().expect("two parts");
            let parents = parts
                .into_iter()
                .flat_map(|p| split_top(p.trim_start_matches('{').trim_end_matches('}')))
                .collect();
            (parents, child)
        };
        if parent_texts.iter().any(|p| p.is_empty()) || child_text.is_empty() {
            return Err(rule_err(line, "empty attribute reference"));
        }
        let mut parents = Vec::new();
        for p in parent_texts {
            let (name, prev) = match p.strip_suffix("@prev") {
                Some(n) => (n.trim(), true),
                None => (p, false),
            };
            parents.push(RuleParent {
                attr: resolve(db, line, name)?,
                prev,
            });
        }
        let child = resolve(db, line, child_text)?;

        let (mut family, mut via, mut prior, mut aggregate) = (None, vec![], None, None);
        for opt in opts.split_whitespace() {
            let (k, v) = opt
                .split_once('=')
                .ok_or_else(|| rule_err(line, format!("expected key=value, found '{opt}'")))?;
            match k {
                "family" => {
                    family = Some(match v {
                        "categorical" => Family::Categorical,
                        "clg" => Family::Clg,
                        "boolean" => Family::Boolean,
                        _ => return Err(rule_err(line, format!("unknown family '{v}'"))),
                    })
                }
                "via" => via = v.split(',').map(str::to_string).collect(),
                "prior" => prior = Some(parse_prior(line, v)?),
                "agg" => {
                    aggregate = Some(
                        Aggregate::from_name(v).ok_or_else(|| rule_err(line, format!("unknown aggregate '{v}'")))?,
                    )
                }
                _ => return Err(rule_err(line, format!("unknown option '{k}'"))),
            }
        }
        for r in &via {
            db.require(r).map_err(|_| rule_err(line, format!("via names unknown relation {r}")))?;
        }
        let kind = attr_kind(db, &child).expect("resolved");
        let family = match family {
            Some(f) => f,
            None => match kind {
                AttrKind::Categorical(_) => Family::Categorical,
                AttrKind::Continuous(_) => Family::Clg,
                AttrKind::Boolean => Family::Boolean,
                _ => return Err(rule_err(line, format!("{child} cannot be a rule child"))),
            },
        };
        let fits = matches!(
            (family, &kind),
            (Family::Categorical, AttrKind::Categorical(_))
                | (Family::Clg, AttrKind::Continuous(_))
                | (Family::Boolean, AttrKind::Boolean)
        );
        if !fits {
            return Err(rule_err(line, format!("family {} does not fit {child} ({kind})", family.name())));
        }
        for p in &parents {
            let pk = attr_kind(db, &p.attr).expect("resolved");
            if matches!(pk, AttrKind::ForeignKey(_) | AttrKind::Key) {
                return Err(rule_err(line, format!("{} is entity-valued and cannot be a parent", p.attr)));
            }
            if family != Family::Clg && matches!(pk, AttrKind::Continuous(_)) {
                return Err(rule_err(line, format!("discrete child {child} cannot have continuous parent {}", p.attr)));
            }
        }
        rules.push(CausalRule {
            parents,
            child,
            family,
            via,
            prior,
            aggregate,
        });
    }
    Ok(rules)
}

/// Completes, under the closed-world assumption, every attribute-free relationship a rule
/// refers to. The completed relation carries a boolean attribute named after itself.
/// Relations that already carry that attribute are left alone.
pub fn prepare_rule_database(db: &Database, rules: &[CausalRule]) -> Result<Database, MapperError> {
    let mut out = db.clone();
    for a in rules.iter().flat_map(|r| std::iter::once(&r.child).chain(r.parents.iter().map(|p| &p.attr))) {
        let rel = out.require(&a.relation)?;
        if rel.schema.name == a.attribute && rel.schema.non_key_attributes().next().is_none() {
            let completed: RelationInstance = complete_boolean_relation(&out, &a.relation, &a.attribute)?;
            out = out.with_relation(completed)?;
        }
    }
    Ok(out)
}
