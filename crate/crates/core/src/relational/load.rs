use std::path::Path;

use super::{parse_manifest, AttrKind, Database, RelationInstance, RelationSchema, RelationalError, Row, Value};

fn parse_cell(schema: &RelationSchema, row: usize, col: usize, raw: &str) -> Result<Value, RelationalError> {
    let attr = &schema.attributes[col];
    let cell = raw.trim();
    if cell.is_empty() {
        return Err(RelationalError::MissingValue {
            relation: schema.name.clone(),
            row,
            attribute: attr.name.clone(),
        });
    }
    let bad = |expected| RelationalError::BadValue {
        relation: schema.name.clone(),
        row,
        attribute: attr.name.clone(),
        value: cell.to_string(),
        expected,
    };
    match &attr.kind {
        AttrKind::Key | AttrKind::ForeignKey(_) | AttrKind::Categorical(_) => Ok(Value::Text(cell.to_string())),
        AttrKind::Continuous(_) => match cell.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Real(x)),
            _ => Err(bad("number")),
        },
        AttrKind::Boolean => match cell.to_ascii_lowercase().as_str() {
            "true" | "t" | "1" => Ok(Value::Bool(true)),
            "false" | "f" | "0" => Ok(Value::Bool(false)),
            _ => Err(bad("boolean")),
        },
    }
}

/// Reads one relation from CSV text with a header row.
pub fn read_relation(schema: &RelationSchema, reader: impl std::io::Read, path: &str) -> Result<RelationInstance, RelationalError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let csv_err = |e: csv::Error| RelationalError::Csv {
        path: path.to_string(),
        message: e.to_string(),
    };
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let mut order = Vec::with_capacity(schema.attributes.len());
    for a in &schema.attributes {
        let pos = header.iter().position(|h| *h == a.name).ok_or_else(|| RelationalError::HeaderMismatch {
            relation: schema.name.clone(),
            message: format!("has no column {}", a.name),
        })?;
        order.push(pos);
    }
    if header.len() != schema.attributes.len() {
        return Err(RelationalError::HeaderMismatch {
            relation: schema.name.clone(),
            message: format!("has {} columns, manifest declares {}", header.len(), schema.attributes.len()),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row_no = i + 1;
        let mut row: Row = Vec::with_capacity(order.len());
        for (col, &pos) in order.iter().enumerate() {
            row.push(parse_cell(schema, row_no, col, rec.get(pos).unwrap_or(""))?);
        }
        rows.push(row);
    }
    Ok(RelationInstance::new(schema.clone(), rows))
}

/// Loads `manifest` and one `<Relation>.csv` per relation from `data_dir`.
pub fn load_database(manifest: &Path, data_dir: &Path) -> Result<Database, RelationalError> {
    let text = std::fs::read_to_string(manifest).map_err(|source| RelationalError::Io {
        path: manifest.display().to_string(),
        source,
    })?;
    let schemas = parse_manifest(&text)?;
    let mut relations = Vec::new();
    for schema in &schemas {
        let path = data_dir.join(format!("{}.csv", schema.name));
        let file = std::fs::File::open(&path).map_err(|_| RelationalError::MissingDataFile {
            relation: schema.name.clone(),
            path: path.display().to_string(),
        })?;
        relations.push(read_relation(schema, file, &path.display().to_string())?);
    }
    Database::new(relations)
}

pub fn write_csv(relation: &RelationInstance, out: impl std::io::Write) -> Result<(), RelationalError> {
    let path = format!("{}.csv", relation.schema.name);
    let err = |e: csv::Error| RelationalError::Csv {
        path: path.clone(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(relation.schema.attributes.iter().map(|a| a.name.as_str())).map_err(err)?;
    for row in &relation.rows {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(err)?;
    }
    w.flush().map_err(|source| RelationalError::Io { path: path.clone(), source })?;
    Ok(())
}

/// Writes `manifest.txt` and one CSV per relation into `dir`.
pub fn write_database(db: &Database, dir: &Path) -> Result<(), RelationalError> {
    let io = |path: &Path, source| RelationalError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let manifest = dir.join("manifest.txt");
    std::fs::write(&manifest, super::write_manifest(db.relations().map(|r| &r.schema))).map_err(|e| io(&manifest, e))?;
    for r in db.relations() {
        let path = dir.join(format!("{}.csv", r.schema.name));
        let file = std::fs::File::create(&path).map_err(|e| io(&path, e))?;
        write_csv(r, file)?;
    }
    Ok(())
}
