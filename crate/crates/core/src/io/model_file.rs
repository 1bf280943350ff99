use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelError, Result};
use crate::io::{atomic_write, read_file};
use crate::model::{ModelParts, Topology, WarpMixtureModel};

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk JSON layout. Means and variances are nested `[component][position][dim]`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    schema_version: u32,
    components: usize,
    dims: usize,
    grid_len: usize,
    max_shift: usize,
    max_skip: usize,
    allow_stay: bool,
    offsets_enabled: bool,
    tie_transitions: bool,
    weights: Vec<f64>,
    init: Vec<Vec<f64>>,
    steps: Vec<Vec<f64>>,
    means: Vec<Vec<Vec<f64>>>,
    variances: Vec<Vec<Vec<f64>>>,
    variance_floor: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

fn nest(flat: &[f64], t: usize, d: usize) -> Vec<Vec<Vec<f64>>> {
    flat.chunks(t * d)
        .map(|block| block.chunks(d).map(<[f64]>::to_vec).collect())
        .collect()
}

fn flatten(
    table: &'static str,
    nested: Vec<Vec<Vec<f64>>>,
    k: usize,
    t: usize,
    d: usize,
) -> Result<Vec<f64>, ModelError> {
    let shape_ok = nested.len() == k
        && nested
            .iter()
            .all(|c| c.len() == t && c.iter().all(|p| p.len() == d));
    if !shape_ok {
        let found = match nested.first() {
            Some(c) => format!(
                "{} x {} x {}",
                nested.len(),
                c.len(),
                c.first().map_or(0, Vec::len)
            ),
            None => "0".into(),
        };
        return Err(ModelError::Shape {
            table,
            expected: format!("{k} x {t} x {d}"),
            found,
        });
    }
    Ok(nested.into_iter().flatten().flatten().collect())
}

/// Serializes with shortest round-trip float formatting.
pub fn model_to_json(model: &WarpMixtureModel) -> String {
    let p = model.parts();
    let t = &p.topology;
    let doc = ModelDocument {
        schema_version: SCHEMA_VERSION,
        components: t.components,
        dims: t.dims,
        grid_len: t.grid_len,
        max_shift: t.max_shift,
        max_skip: t.max_skip,
        allow_stay: t.allow_stay,
        offsets_enabled: t.offsets_enabled,
        tie_transitions: t.tie_transitions,
        weights: p.weights.clone(),
        init: p.init.clone(),
        steps: p.steps.clone(),
        means: nest(&p.means, t.grid_len, t.dims),
        variances: nest(&p.variances, t.grid_len, t.dims),
        variance_floor: p.variance_floor.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("model document serializes");
    s.push('\n');
    s
}

/// Parses and validates a model document; `path` only labels error messages.
pub fn model_from_json(text: &str, path: &Path) -> Result<WarpMixtureModel> {
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(ModelError::SchemaVersion {
            expected: SCHEMA_VERSION,
            found: probe.schema_version,
        }
        .into());
    }
    let doc: ModelDocument =
        serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    let topology = Topology {
        components: doc.components,
        dims: doc.dims,
        grid_len: doc.grid_len,
        max_shift: doc.max_shift,
        max_skip: doc.max_skip,
        allow_stay: doc.allow_stay,
        offsets_enabled: doc.offsets_enabled,
        tie_transitions: doc.tie_transitions,
    };
    let (k, t, d) = (doc.components, doc.grid_len, doc.dims);
    let parts = ModelParts {
        topology,
        weights: doc.weights,
        init: doc.init,
        steps: doc.steps,
        means: flatten("means", doc.means, k, t, d)?,
        variances: flatten("variances", doc.variances, k, t, d)?,
        variance_floor: doc.variance_floor,
    };
    Ok(WarpMixtureModel::from_parts(parts)?)
}

pub fn save_model(model: &WarpMixtureModel, path: &Path) -> Result<()> {
    atomic_write(path, model_to_json(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<WarpMixtureModel> {
    let bytes = read_file(path)?;
    let text =
        String::from_utf8(bytes).map_err(|_| Error::format(path, "model file is not UTF-8"))?;
    model_from_json(&text, path)
}
