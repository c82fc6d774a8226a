use std::io::Write;

use super::{CsdDataset, DatasetError, DefaultCase, JoinedDataset};

/// Writes the joined, grouped and default datasets as one CSV: case id, parent
/// condition label, child key parts, child value, then each parent's key parts and
/// value. Joined rows carry an empty label, default rows the label `default`.
pub fn write_dump(
    out: impl Write,
    joined: &JoinedDataset,
    csd: Option<&CsdDataset>,
    default: &[DefaultCase],
) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["case".to_string(), "cpc".to_string()];
    header.extend(joined.child_key_names.iter().cloned());
    header.push(joined.child.clone());
    for p in &joined.parents {
        header.extend(p.key_names.iter().map(|k| format!("{}.{k}", p.name)));
        header.push(p.name.clone());
    }
    let width = header.len();
    w.write_record(&header).map_err(csv_err)?;

    let mut write_cases = |label: &str, cases: &mut dyn Iterator<Item = &super::JoinedCase>| -> Result<(), DatasetError> {
        for c in cases {
            for m in &c.matches {
                let mut rec = vec![c.id.to_string(), label.to_string()];
                rec.extend(c.child_key.iter().cloned());
                rec.push(c.child.to_string());
                for inst in m {
                    rec.extend(inst.key.iter().cloned());
                    rec.push(inst.value.to_string());
                }
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
        Ok(())
    };
    write_cases("", &mut joined.cases.iter())?;
    if let Some(csd) = csd {
        for (cpc, cases) in &csd.groups {
            write_cases(&cpc.label(), &mut cases.iter())?;
        }
    }
    for (i, d) in default.iter().enumerate() {
        let mut rec = vec![format!("d{}", i + 1), "default".to_string()];
        rec.extend(d.child_key.iter().cloned());
        rec.push(d.child.to_string());
        rec.resize(width, String::new());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> DatasetError {
    DatasetError::Io(std::io::Error::other(e.to_string()))
}
