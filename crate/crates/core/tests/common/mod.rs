#![allow(dead_code)]

use curvewarp::model::{Curve, ModelParts, Topology, WarpMixtureModel};
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct Instance {
    pub components: usize,
    pub dims: usize,
    pub max_shift: usize,
    pub max_skip: usize,
    pub allow_stay: bool,
    pub grid_len: usize,
    pub offsets: bool,
    pub tied: bool,
}

impl Instance {
    pub fn topology(&self) -> Topology {
        Topology {
            components: self.components,
            dims: self.dims,
            grid_len: self.grid_len,
            max_shift: self.max_shift,
            max_skip: self.max_skip,
            allow_stay: self.allow_stay,
            offsets_enabled: self.offsets,
            tie_transitions: self.tied,
        }
    }
}

fn simplex<R: Rng>(rng: &mut R, support: &[bool]) -> Vec<f64> {
    let raw: Vec<f64> = support
        .iter()
        .map(|&on| if on { rng.random_range(0.05..1.0) } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return raw;
    }
    raw.iter().map(|v| v / total).collect()
}

/// Random parameters on `inst`, with every legal table entry positive.
pub fn random_model<R: Rng>(rng: &mut R, inst: Instance) -> WarpMixtureModel {
    let topo = inst.topology();
    let (k, t_len, d) = (inst.components, inst.grid_len, inst.dims);
    let n_off = topo.n_offsets();
    let steps = (0..topo.step_rows())
        .map(|row| {
            let support: Vec<bool> = (0..n_off)
                .map(|o| {
                    topo.offset_allowed(o) && (inst.tied || topo.step_feasible(row % t_len, o))
                })
                .collect();
            simplex(rng, &support)
        })
        .collect();
    WarpMixtureModel::from_parts(ModelParts {
        topology: topo,
        weights: simplex(rng, &vec![true; k]),
        init: (0..k)
            .map(|_| simplex(rng, &vec![true; inst.max_shift]))
            .collect(),
        steps,
        means: (0..k * t_len * d)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
        variances: (0..k * t_len * d)
            .map(|_| rng.random_range(0.3..2.0))
            .collect(),
        variance_floor: vec![0.1; d],
    })
    .expect("random model is valid")
}

pub fn random_curve<R: Rng>(rng: &mut R, len: usize, dims: usize) -> Curve {
    let values = (0..len * dims)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    Curve::from_flat("r", dims, values).unwrap()
}

/// Small random instance; the grid is anywhere from the shortest legal
/// length up to the full default length.
pub fn random_instance<R: Rng>(rng: &mut R, max_len: usize) -> (Instance, usize) {
    let components = rng.random_range(1..=3);
    let dims = rng.random_range(1..=2);
    let max_shift = rng.random_range(1..=3);
    let max_skip = rng.random_range(0..=1);
    let allow_stay = rng.random_bool(0.5);
    let len = rng.random_range(1..=max_len);
    let shortest = max_shift - 1 + len;
    let full = max_shift + (len - 1) * (max_skip + 1);
    let grid_len = rng.random_range(shortest..=full);
    let inst = Instance {
        components,
        dims,
        max_shift,
        max_skip,
        allow_stay,
        grid_len,
        offsets: rng.random_bool(0.5),
        tied: rng.random_bool(0.5),
    };
    (inst, len)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
