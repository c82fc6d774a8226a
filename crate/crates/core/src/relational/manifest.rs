use super::{AttrKind, AttributeSpec, RelationSchema, RelationalError};

fn err(line: usize, message: impl Into<String>) -> RelationalError {
    RelationalError::Manifest {
        line,
        message: message.into(),
    }
}

fn parse_kind(line: usize, text: &str) -> Result<AttrKind, RelationalError> {
    let (head, rest) = match text.split_once(':') {
        Some((h, r)) => (h, Some(r)),
        None => (text, None),
    };
    match (head, rest) {
        ("key", None) => Ok(AttrKind::Key),
        ("bool", None) => Ok(AttrKind::Boolean),
        ("fk", Some(r)) if !r.is_empty() => Ok(AttrKind::ForeignKey(r.to_string())),
        ("cont", Some(u)) => Ok(AttrKind::Continuous(u.to_string())),
        ("cat", Some(s)) if !s.is_empty() => Ok(AttrKind::Categorical(s.split('|').map(str::to_string).collect())),
        _ => Err(err(line, format!("unknown attribute kind '{text}'"))),
    }
}

/// Parses the schema manifest format:
///
/// ```text
/// relation Vehicle
///   attr VID key
///   attr VehicleType cat:Tracked|Wheeled
///   pk VID
/// end
/// ```
pub fn parse_manifest(text: &str) -> Result<Vec<RelationSchema>, RelationalError> {
    let mut out = Vec::new();
    let mut current: Option<(RelationSchema, bool)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        match (words[0], current.as_mut()) {
            ("relation", None) => {
                if words.len() != 2 {
                    return Err(err(line, "expected 'relation <Name>'"));
                }
                current = Some((RelationSchema::new(words[1], vec![], vec![]), false));
            }
            ("relation", Some(_)) => return Err(err(line, "missing 'end' before next relation")),
            ("attr", Some((schema, _))) => {
                if words.len() != 3 {
                    return Err(err(line, "expected 'attr <name> <kind>'"));
                }
                schema.attributes.push(AttributeSpec::new(words[1], parse_kind(line, words[2])?));
            }
            ("pk", Some((schema, seen))) => {
                if *seen {
                    return Err(err(line, "duplicate 'pk' line"));
                }
                if words.len() < 2 {
                    return Err(err(line, "expected 'pk <names...>'"));
                }
                schema.primary_key = words[1..].iter().map(|s| s.to_string()).collect();
                *seen = true;
            }
            ("end", Some(_)) => {
                let (schema, seen) = current.take().expect("matched Some");
                if !seen {
                    return Err(err(line, format!("relation {} has no 'pk' line", schema.name)));
                }
                schema.validate()?;
                out.push(schema);
            }
            (w, None) => return Err(err(line, format!("'{w}' outside a relation block"))),
            (w, Some(_)) => return Err(err(line, format!("unknown directive '{w}'"))),
        }
    }
    if let Some((schema, _)) = current {
        return Err(err(text.lines().count(), format!("relation {} is missing 'end'", schema.name)));
    }
    Ok(out)
}

pub fn write_manifest<'a>(schemas: impl IntoIterator<Item = &'a RelationSchema>) -> String {
    let mut out = String::new();
    for s in schemas {
        out.push_str(&format!("relation {}\n", s.name));
        for a in &s.attributes {
            out.push_str(&format!("  attr {} {}\n", a.name, a.kind));
        }
        out.push_str(&format!("  pk {}\nend\n\n", s.primary_key.join(" ")));
    }
    out
}
