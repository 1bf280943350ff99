use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{check_curve, Prepared};
use crate::io::curves::{csv_error, finish_csv};
use crate::io::{format_float, read_file};
use crate::model::{Alignment, CurveSet, WarpMixtureModel};

/// Writes one row per observation: `curve_id, step, component, grid_position,
/// offset_d*, residual_d*`, where the residual is the observation minus the
/// offset and the aligned mean. Returns the alignments.
pub fn export_alignments(
    model: &WarpMixtureModel,
    data: &CurveSet,
    path: &Path,
) -> Result<Vec<Alignment>> {
    for c in data.curves() {
        check_curve(c, model.topology())?;
    }
    let prep = Prepared::new(model);
    let alignments: Vec<Alignment> = data.curves().par_iter().map(|c| prep.align(c)).collect();
    let dims = model.dims();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "curve_id".to_string(),
        "step".into(),
        "component".into(),
        "grid_position".into(),
    ];
    header.extend((0..dims).map(|d| format!("offset_d{d}")));
    header.extend((0..dims).map(|d| format!("residual_d{d}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (c, a) in data.curves().iter().zip(&alignments) {
        for (j, (y, &t)) in c.points().zip(&a.path).enumerate() {
            let mut rec = vec![
                c.id().to_string(),
                j.to_string(),
                a.component.to_string(),
                t.to_string(),
            ];
            rec.extend(a.offset.iter().map(|&v| format_float(v)));
            let mu = model.mean(a.component, t);
            rec.extend((0..dims).map(|d| format_float(y[d] - a.offset[d] - mu[d])));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    finish_csv(w, path)?;
    Ok(alignments)
}

/// One cell of a cluster-band table: the mean and a two-standard-deviation band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub component: usize,
    pub grid_position: usize,
    pub dim: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn export_cluster_bands(model: &WarpMixtureModel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "component",
        "grid_position",
        "dim",
        "mean",
        "lower",
        "upper",
    ])
    .map_err(|e| csv_error(path, e))?;
    for k in 0..model.components() {
        for t in 0..model.grid_len() {
            for (d, (&mu, &var)) in model
                .mean(k, t)
                .iter()
                .zip(model.variance(k, t))
                .enumerate()
            {
                let half = 2.0 * var.sqrt();
                w.write_record([
                    k.to_string(),
                    t.to_string(),
                    d.to_string(),
                    format_float(mu),
                    format_float(mu - half),
                    format_float(mu + half),
                ])
                .map_err(|e| csv_error(path, e))?;
            }
        }
    }
    finish_csv(w, path)
}

pub fn load_cluster_bands(path: &Path) -> Result<Vec<BandRow>> {
    let bytes = read_file(path)?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    reader
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::format(path, e.to_string())))
        .collect()
}
