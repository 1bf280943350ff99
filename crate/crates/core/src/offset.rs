//! Closed-form measurement-axis offsets.
//!
//! The offset for a (curve, component, start) triple is the translation that
//! best aligns the curve, in squared Euclidean distance, with the component
//! mean read linearly from the start position. Skips and repeats are ignored
//! when solving for it, which is what keeps exact inference tractable.

use crate::error::InferenceError;
use crate::model::{Curve, WarpMixtureModel};

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetResult {
    pub delta: Vec<f64>,
    /// Residual sum of squares of the translated curve against the linear mean segment.
    pub residual_ss: f64,
}

/// Optimal offset of `curve` against component `k`'s mean read from start `g1`.
///
/// Returns the zero vector when the model has offsets disabled.
pub fn optimal_offset(
    curve: &Curve,
    model: &WarpMixtureModel,
    k: usize,
    g1: usize,
) -> Result<OffsetResult, InferenceError> {
    let topo = model.topology();
    if curve.dims() != topo.dims {
        return Err(InferenceError::DimensionMismatch {
            id: curve.id().to_string(),
            expected: topo.dims,
            found: curve.dims(),
        });
    }
    if k >= topo.components || g1 >= topo.max_shift {
        return Err(InferenceError::CutsetOutOfRange {
            component: k,
            start: g1,
        });
    }
    if g1 + curve.len() > topo.grid_len {
        return Err(InferenceError::CurveTooLong {
            id: curve.id().to_string(),
            len: curve.len(),
            required: g1 + curve.len(),
            grid_len: topo.grid_len,
        });
    }
    let delta = if topo.offsets_enabled {
        segment_offset(curve, |j| model.mean(k, g1 + j))
    } else {
        vec![0.0; topo.dims]
    };
    let residual_ss = curve
        .points()
        .enumerate()
        .map(|(j, y)| {
            let mu = model.mean(k, g1 + j);
            y.iter()
                .zip(mu)
                .zip(&delta)
                .map(|((y, m), dl)| (y - dl - m).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(OffsetResult { delta, residual_ss })
}

/// Mean of `y(j) - segment(j)` per dimension: the unique least-squares translation.
pub(crate) fn segment_offset<'a>(curve: &Curve, segment: impl Fn(usize) -> &'a [f64]) -> Vec<f64> {
    let mut delta = vec![0.0; curve.dims()];
    for (j, y) in curve.points().enumerate() {
        for ((acc, y), m) in delta.iter_mut().zip(y).zip(segment(j)) {
            *acc += y - m;
        }
    }
    let n = curve.len() as f64;
    delta.iter_mut().for_each(|v| *v /= n);
    delta
}
