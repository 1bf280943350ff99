//! Sampling curves, with their latent alignments, from a known model.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{InferenceError, ModelError, Result};
use crate::model::{Curve, CurveSet, ModelParts, Topology, WarpMixtureModel};

/// Ground-truth latents behind one sampled curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub component: usize,
    pub start: usize,
    pub path: Vec<usize>,
    pub offset: Vec<f64>,
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

const MAX_PATH_ATTEMPTS: usize = 10_000;

/// Draws one curve of length `len`. Paths that dead-end before `len`
/// observations (possible only on grids shorter than the default) are
/// redrawn, so the path is a sample conditioned on reaching the full length.
pub fn sample_curve<R: Rng + ?Sized>(
    model: &WarpMixtureModel,
    len: usize,
    rng: &mut R,
    offset_sigma: f64,
) -> Result<(Curve, LatentRecord)> {
    let topo = *model.topology();
    if len == 0 || len > topo.max_curve_len() {
        return Err(InferenceError::CurveTooLong {
            id: "sample".into(),
            len,
            required: topo.max_shift - 1 + len,
            grid_len: topo.grid_len,
        }
        .into());
    }
    let k = categorical(model.weights(), rng);
    let start = categorical(model.init_row(k), rng);
    let mut path = Vec::with_capacity(len);
    for attempt in 0.. {
        if attempt == MAX_PATH_ATTEMPTS {
            return Err(ModelError::Topology(format!(
                "no path of length {len} found from start {start} in component {k}"
            ))
            .into());
        }
        path.clear();
        path.push(start);
        while path.len() < len {
            let t = *path.last().unwrap();
            let row = model.renormalized_step_row(k, t);
            if row.iter().all(|&p| p == 0.0) {
                break;
            }
            path.push(t + categorical(&row, rng));
        }
        if path.len() == len {
            break;
        }
    }
    let d = topo.dims;
    let offset: Vec<f64> = if offset_sigma > 0.0 {
        let n = Normal::new(0.0, offset_sigma).expect("positive sigma");
        (0..d).map(|_| n.sample(rng)).collect()
    } else {
        vec![0.0; d]
    };
    let mut values = Vec::with_capacity(len * d);
    for &t in &path {
        for (dd, (mu, var)) in model
            .mean(k, t)
            .iter()
            .zip(model.variance(k, t))
            .enumerate()
        {
            let noise = Normal::new(0.0, var.sqrt())
                .expect("finite variance")
                .sample(rng);
            values.push(mu + noise + offset[dd]);
        }
    }
    let curve = Curve::from_flat("sample", d, values)?;
    Ok((
        curve,
        LatentRecord {
            component: k,
            start,
            path,
            offset,
        },
    ))
}

/// `n` independent curves with lengths uniform on `lengths`; ids are `c00000`, `c00001`, ...
pub fn sample_dataset<R: Rng + ?Sized>(
    model: &WarpMixtureModel,
    n: usize,
    lengths: RangeInclusive<usize>,
    rng: &mut R,
    offset_sigma: f64,
) -> Result<(CurveSet, Vec<LatentRecord>)> {
    let mut curves = Vec::with_capacity(n);
    let mut latents = Vec::with_capacity(n);
    for i in 0..n {
        let len = rng.random_range(lengths.clone());
        let (c, l) = sample_curve(model, len, rng, offset_sigma)?;
        curves.push(c.with_id(format!("c{i:05}")));
        latents.push(l);
    }
    Ok((CurveSet::with_dims(model.dims(), curves)?, latents))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Bump,
    Ramp,
    Sine,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Bump => "bump",
            Shape::Ramp => "ramp",
            Shape::Sine => "sine",
        })
    }
}

impl FromStr for Shape {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bump" => Ok(Shape::Bump),
            "ramp" => Ok(Shape::Ramp),
            "sine" => Ok(Shape::Sine),
            other => Err(format!(
                "unknown shape {other:?} (expected bump, ramp or sine)"
            )),
        }
    }
}

/// Fixture description for [`make_template_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub components: usize,
    pub dims: usize,
    pub max_shift: usize,
    pub max_skip: usize,
    pub allow_stay: bool,
    pub grid_len: usize,
    pub shape: Shape,
    /// Amplitude multiplying every template; 0 makes all components identical.
    pub separation: f64,
    pub noise_var: f64,
}

/// Unit-amplitude template for component `k` of `count`, dimension `d`, at grid position `t`.
fn template_value(
    shape: Shape,
    k: usize,
    count: usize,
    d: usize,
    t: usize,
    grid_len: usize,
) -> f64 {
    let (k, count, d, t, len) = (k as f64, count as f64, d as f64, t as f64, grid_len as f64);
    let sign = if (d as usize).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };
    match shape {
        Shape::Bump => {
            let width = (len / (2.0 * (count + 1.0))).max(1.0);
            let center = (k + 1.0) * len / (count + 1.0) + 0.5 * d * width;
            sign * (-(t - center).powi(2) / (2.0 * width * width)).exp()
        }
        Shape::Ramp => sign * (k + 1.0) / count * (t / (len - 1.0).max(1.0) - 0.5),
        Shape::Sine => (2.0 * std::f64::consts::PI * (k + 1.0) * t / len
            + d * std::f64::consts::FRAC_PI_4)
            .sin(),
    }
}

/// Smooth, well-separated cluster means with constant variance and uniform tables.
pub fn make_template_model(spec: &TemplateSpec) -> Result<WarpMixtureModel> {
    let topology = Topology {
        components: spec.components,
        dims: spec.dims,
        grid_len: spec.grid_len,
        max_shift: spec.max_shift,
        max_skip: spec.max_skip,
        allow_stay: spec.allow_stay,
        offsets_enabled: false,
        tie_transitions: true,
    };
    let (k, t_len, d) = (spec.components, spec.grid_len, spec.dims);
    let mut means = Vec::with_capacity(k * t_len * d);
    for c in 0..k {
        for t in 0..t_len {
            for dd in 0..d {
                means.push(spec.separation * template_value(spec.shape, c, k, dd, t, t_len));
            }
        }
    }
    let allowed = (0..topology.n_offsets())
        .filter(|&o| topology.offset_allowed(o))
        .count() as f64;
    let step: Vec<f64> = (0..topology.n_offsets())
        .map(|o| {
            if topology.offset_allowed(o) {
                1.0 / allowed
            } else {
                0.0
            }
        })
        .collect();
    Ok(WarpMixtureModel::from_parts(ModelParts {
        topology,
        weights: vec![1.0 / k as f64; k],
        init: vec![vec![1.0 / spec.max_shift as f64; spec.max_shift]; k],
        steps: vec![step; k],
        means,
        variances: vec![spec.noise_var; k * t_len * d],
        variance_floor: vec![(spec.noise_var * 1e-3).max(crate::model::MIN_VARIANCE); d],
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> TemplateSpec {
        TemplateSpec {
            components: 3,
            dims: 2,
            max_shift: 3,
            max_skip: 1,
            allow_stay: true,
            grid_len: 20,
            shape: Shape::Bump,
            separation: 2.0,
            noise_var: 0.05,
        }
    }

    fn pairwise_distances(m: &WarpMixtureModel) -> Vec<f64> {
        let k = m.components();
        let block = m.grid_len() * m.dims();
        let means = &m.parts().means;
        let mut out = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let d: f64 = (0..block)
                    .map(|i| (means[a * block + i] - means[b * block + i]).powi(2))
                    .sum();
                out.push(d.sqrt());
            }
        }
        out
    }

    #[test]
    fn zero_separation_collapses_components() {
        for shape in [Shape::Bump, Shape::Ramp, Shape::Sine] {
            let m = make_template_model(&TemplateSpec {
                separation: 0.0,
                shape,
                ..spec()
            })
            .unwrap();
            assert!(pairwise_distances(&m).iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn distances_scale_linearly() {
        for shape in [Shape::Bump, Shape::Ramp, Shape::Sine] {
            let one = pairwise_distances(
                &make_template_model(&TemplateSpec {
                    separation: 1.0,
                    shape,
                    ..spec()
                })
                .unwrap(),
            );
            let three = pairwise_distances(
                &make_template_model(&TemplateSpec {
                    separation: 3.0,
                    shape,
                    ..spec()
                })
                .unwrap(),
            );
            for (a, b) in one.iter().zip(&three) {
                assert!(*a > 0.0);
                assert!((b - 3.0 * a).abs() < 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn single_template() {
        let m = make_template_model(&TemplateSpec {
            components: 1,
            ..spec()
        })
        .unwrap();
        assert_eq!(m.components(), 1);
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn noise_free_linear_sample_is_mean_segment() {
        let m = make_template_model(&TemplateSpec {
            max_shift: 2,
            max_skip: 0,
            allow_stay: false,
            noise_var: 1e-9,
            ..spec()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (c, lat) = sample_curve(&m, 6, &mut rng, 0.0).unwrap();
        for (j, y) in c.points().enumerate() {
            assert_eq!(lat.path[j], lat.start + j);
            for (v, mu) in y.iter().zip(m.mean(lat.component, lat.start + j)) {
                assert!((v - mu).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn single_start() {
        let m = make_template_model(&TemplateSpec {
            max_shift: 1,
            ..spec()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            assert_eq!(sample_curve(&m, 5, &mut rng, 1.0).unwrap().1.start, 0);
        }
    }

    #[test]
    fn sampled_paths_are_legal() {
        let m = make_template_model(&spec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (set, lats) = sample_dataset(&m, 200, 1..=8, &mut rng, 0.5).unwrap();
        for (c, l) in set.curves().iter().zip(&lats) {
            assert_eq!(l.path.len(), c.len());
            assert_eq!(l.path[0], l.start);
            assert!(l.start < 3);
            for w in l.path.windows(2) {
                assert!(w[1] >= w[0] && w[1] - w[0] <= 2);
            }
            assert!(*l.path.last().unwrap() < 20);
        }
    }

    #[test]
    fn dataset_is_seeded() {
        let m = make_template_model(&spec()).unwrap();
        let a = sample_dataset(&m, 10, 3..=6, &mut ChaCha8Rng::seed_from_u64(7), 1.0).unwrap();
        let b = sample_dataset(&m, 10, 3..=6, &mut ChaCha8Rng::seed_from_u64(7), 1.0).unwrap();
        assert_eq!(a, b);
        let (single, _) =
            sample_dataset(&m, 1, 4..=4, &mut ChaCha8Rng::seed_from_u64(7), 1.0).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.curves()[0].len(), 4);
    }

    #[test]
    fn rejects_curves_longer_than_grid() {
        let m = make_template_model(&spec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(sample_curve(&m, 19, &mut rng, 0.0).is_err());
    }
}
