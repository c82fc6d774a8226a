use mebn::dataset::FlatRow;

use super::fixture_dir;

/// (VehicleType, v, t, rgn, ThreatLevel) per printed case number.
pub fn printed_rows() -> Vec<(usize, [String; 5])> {
    let mut r = csv::Reader::from_path(fixture_dir("threat").join("joined.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let f = |i: usize| rec[i].to_string();
            (rec[0].parse().unwrap(), [f(1), f(2), f(3), f(4), f(5)])
        })
        .collect()
}

pub fn flat_tuple(row: &FlatRow) -> [String; 5] {
    [
        row.parents[0].value.to_string(),
        row.parents[0].key[0].clone(),
        row.child_key[1].clone(),
        row.child_key[0].clone(),
        row.child.to_string(),
    ]
}
