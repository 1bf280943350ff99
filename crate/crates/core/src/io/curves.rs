use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{atomic_write, format_float, read_file};
use crate::model::{Curve, CurveSet};
use crate::synth::LatentRecord;

/// Reads a long-format table with columns `curve_id`, `step`, `d0`..`d{D-1}`.
/// Rows may come in any order; curves keep the order of their first row.
pub fn load_curves_csv(path: &Path) -> Result<CurveSet> {
    parse_curves_csv(&read_file(path)?, path)
}

struct Row {
    line: u64,
    step: usize,
    values: Vec<f64>,
}

/// Parses curve-table bytes; `path` only labels error messages.
pub fn parse_curves_csv(bytes: &[u8], path: &Path) -> Result<CurveSet> {
    let fail = |msg: String| Error::format(path, msg);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let id_col = find("curve_id").ok_or_else(|| fail("missing column curve_id".into()))?;
    let step_col = find("step").ok_or_else(|| fail("missing column step".into()))?;
    let mut value_cols = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if i == id_col || i == step_col {
            continue;
        }
        match name.strip_prefix('d').and_then(|n| n.parse::<usize>().ok()) {
            Some(d) => value_cols.push((d, i)),
            None => return Err(fail(format!("unexpected column {name:?}"))),
        }
    }
    value_cols.sort_unstable();
    for (expected, &(d, _)) in value_cols.iter().enumerate() {
        if d != expected {
            return Err(fail(format!("missing column d{expected}")));
        }
    }
    if value_cols.is_empty() {
        return Err(fail("missing column d0".into()));
    }
    let dims = value_cols.len();

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |col: usize| format!("row {line}, column {}", &header[col]);
        let id = record[id_col].to_string();
        if id.is_empty() {
            return Err(fail(format!("{}: empty curve id", at(id_col))));
        }
        let step = record[step_col].parse::<usize>().map_err(|_| {
            fail(format!(
                "{}: {:?} is not a non-negative integer",
                at(step_col),
                &record[step_col]
            ))
        })?;
        let mut values = Vec::with_capacity(dims);
        for &(_, col) in &value_cols {
            let raw = &record[col];
            let v = raw
                .parse::<f64>()
                .map_err(|_| fail(format!("{}: {raw:?} is not a number", at(col))))?;
            if !v.is_finite() {
                return Err(fail(format!("{}: non-finite value {raw:?}", at(col))));
            }
            values.push(v);
        }
        let rows = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        rows.push(Row { line, step, values });
    }

    let mut curves = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).expect("grouped id");
        rows.sort_by_key(|r| (r.step, r.line));
        for (expected, r) in rows.iter().enumerate() {
            if r.step != expected {
                let what = if r.step < expected {
                    format!("duplicate step {}", r.step)
                } else {
                    format!("gap at step {expected}")
                };
                return Err(fail(format!(
                    "row {}, column step: curve {id:?} has a {what}",
                    r.line
                )));
            }
        }
        let values = rows.into_iter().flat_map(|r| r.values).collect();
        curves.push(Curve::from_flat(id, dims, values)?);
    }
    Ok(CurveSet::with_dims(dims, curves)?)
}

pub(crate) fn finish_csv(writer: csv::Writer<Vec<u8>>, path: &Path) -> Result<()> {
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    atomic_write(path, &bytes)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Writes `data` in the layout read by [`load_curves_csv`].
pub fn write_curves_csv(data: &CurveSet, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["curve_id".to_string(), "step".to_string()];
    header.extend((0..data.dims()).map(|d| format!("d{d}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for c in data.curves() {
        for (j, y) in c.points().enumerate() {
            let mut rec = vec![c.id().to_string(), j.to_string()];
            rec.extend(y.iter().map(|&v| format_float(v)));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    finish_csv(w, path)
}

/// One row per curve: `curve_id, component, start, path, offset_d*`, with the
/// path as space-separated grid positions.
pub fn write_latents_csv(data: &CurveSet, latents: &[LatentRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "curve_id".to_string(),
        "component".into(),
        "start".into(),
        "path".into(),
    ];
    header.extend((0..data.dims()).map(|d| format!("offset_d{d}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (c, l) in data.curves().iter().zip(latents) {
        let steps: Vec<String> = l.path.iter().map(usize::to_string).collect();
        let mut rec = vec![
            c.id().to_string(),
            l.component.to_string(),
            l.start.to_string(),
            steps.join(" "),
        ];
        rec.extend(l.offset.iter().map(|&v| format_float(v)));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    finish_csv(w, path)
}
