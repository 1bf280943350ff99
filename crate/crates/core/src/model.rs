//! Curve data, model configuration and mixture parameters.
//!
//! Grid positions, start positions and observation indices are 0-based in
//! the Rust API. A start `g1` ranges over `0..max_shift`; step offsets are
//! indexed `0` (stay), `1` (advance) and `2..=max_skip + 1` (skips).

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ConfigIssue, DataError, ModelError};

/// Tolerance used when checking that stored probability rows are normalized.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Absolute lower bound on any variance floor.
pub const MIN_VARIANCE: f64 = 1e-10;

/// A variable-length sequence of `dims`-dimensional measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    id: String,
    dims: usize,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(id: impl Into<String>, points: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let id = id.into();
        let dims = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| DataError::EmptyCurve { id: id.clone() })?;
        let mut values = Vec::with_capacity(points.len() * dims);
        for (index, p) in points.iter().enumerate() {
            if p.len() != dims {
                return Err(DataError::RaggedPoint {
                    id,
                    index,
                    expected: dims,
                    found: p.len(),
                });
            }
            values.extend_from_slice(p);
        }
        Self::from_flat(id, dims, values)
    }

    /// Builds a curve from row-major values (`len * dims` entries).
    pub fn from_flat(
        id: impl Into<String>,
        dims: usize,
        values: Vec<f64>,
    ) -> Result<Self, DataError> {
        let id = id.into();
        if dims == 0 {
            return Err(DataError::ZeroDimension);
        }
        if values.is_empty() {
            return Err(DataError::EmptyCurve { id });
        }
        if !values.len().is_multiple_of(dims) {
            return Err(DataError::RaggedPoint {
                id,
                index: values.len() / dims,
                expected: dims,
                found: values.len() % dims,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                id,
                index: pos / dims,
                dim: pos % dims,
            });
        }
        Ok(Curve { id, dims, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.values.len() / self.dims
    }

    /// Always false; curves hold at least one point.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.values[j * self.dims..(j + 1) * self.dims]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dims)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-dimension mean of the observations.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dims];
        for p in self.points() {
            for (acc, v) in m.iter_mut().zip(p) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// The curve with `shift` added to every point.
    pub fn translated(&self, shift: &[f64]) -> Curve {
        assert_eq!(shift.len(), self.dims, "shift dimension mismatch");
        let values = self
            .values
            .chunks_exact(self.dims)
            .flat_map(|p| p.iter().zip(shift).map(|(v, c)| v + c))
            .collect();
        Curve {
            id: self.id.clone(),
            dims: self.dims,
            values,
        }
    }
}

/// A collection of curves sharing one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    curves: Vec<Curve>,
    dims: usize,
    l_max: usize,
}

impl CurveSet {
    pub fn new(curves: Vec<Curve>) -> Result<Self, DataError> {
        let dims = curves.first().map(Curve::dims).ok_or(DataError::Empty)?;
        Self::with_dims(dims, curves)
    }

    /// Like [`CurveSet::new`] but accepts an empty collection.
    pub fn with_dims(dims: usize, curves: Vec<Curve>) -> Result<Self, DataError> {
        if dims == 0 {
            return Err(DataError::ZeroDimension);
        }
        for c in &curves {
            if c.dims() != dims {
                return Err(DataError::DimensionMismatch {
                    id: c.id().to_string(),
                    expected: dims,
                    found: c.dims(),
                });
            }
        }
        let l_max = curves.iter().map(Curve::len).max().unwrap_or(0);
        Ok(CurveSet {
            curves,
            dims,
            l_max,
        })
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn into_curves(self) -> Vec<Curve> {
        self.curves
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// Total number of scalar measurements, `sum(L_n * D)`.
    pub fn measurement_count(&self) -> usize {
        self.curves.iter().map(|c| c.values.len()).sum()
    }

    pub fn subset(&self, indices: &[usize]) -> CurveSet {
        let curves = indices.iter().map(|&i| self.curves[i].clone()).collect();
        CurveSet::with_dims(self.dims, curves).expect("subset of a valid set")
    }

    pub fn translated(&self, shift: &[f64]) -> CurveSet {
        let curves = self.curves.iter().map(|c| c.translated(shift)).collect();
        CurveSet::with_dims(self.dims, curves).expect("translation keeps dimensions")
    }
}

/// Smallest grid on which a maximally skipping path from the last start fits.
pub fn default_grid_length(max_shift: usize, max_skip: usize, l_max: usize) -> usize {
    max_shift + l_max.saturating_sub(1) * (max_skip + 1)
}

/// User-facing fitting configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub components: usize,
    pub max_shift: usize,
    pub max_skip: usize,
    pub allow_stay: bool,
    /// `None` selects [`default_grid_length`].
    pub grid_len: Option<usize>,
    pub offsets_enabled: bool,
    pub dirichlet_alpha: f64,
    pub variance_floor_frac: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub tie_transitions: bool,
    /// After multi-start EM, try moving each component's template along the
    /// grid and keep any move that raises the objective.
    #[serde(default)]
    pub translation_search: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            components: 1,
            max_shift: 1,
            max_skip: 0,
            allow_stay: false,
            grid_len: None,
            offsets_enabled: false,
            dirichlet_alpha: 1.0,
            variance_floor_frac: 1e-3,
            tol: 1e-6,
            max_iters: 200,
            tie_transitions: true,
            translation_search: false,
        }
    }
}

impl ModelConfig {
    /// Plain Gaussian mixture: one start, linear paths, no offsets.
    pub fn gaussian_mixture(components: usize) -> Self {
        ModelConfig {
            components,
            ..Default::default()
        }
    }
}

/// A configuration that passed [`validate_config`]; its grid length is resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidConfig(ModelConfig);

impl ValidConfig {
    pub fn grid_len(&self) -> usize {
        self.0.grid_len.expect("validated config has a grid length")
    }

    /// Same configuration with a different iteration cap.
    pub fn with_max_iters(&self, max_iters: usize) -> ValidConfig {
        ValidConfig(ModelConfig {
            max_iters,
            ..self.0.clone()
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.0
    }

    pub fn topology(&self, dims: usize) -> Topology {
        Topology {
            components: self.0.components,
            dims,
            grid_len: self.grid_len(),
            max_shift: self.0.max_shift,
            max_skip: self.0.max_skip,
            allow_stay: self.0.allow_stay,
            offsets_enabled: self.0.offsets_enabled,
            tie_transitions: self.0.tie_transitions,
        }
    }
}

impl Deref for ValidConfig {
    type Target = ModelConfig;
    fn deref(&self) -> &ModelConfig {
        &self.0
    }
}

/// Checks `cfg` against `data`, defaulting the grid length when unset.
pub fn validate_config(cfg: &ModelConfig, data: &CurveSet) -> Result<ValidConfig, ConfigError> {
    let mut issues = Vec::new();
    if cfg.components < 1 {
        issues.push(ConfigIssue::NoComponents);
    }
    if cfg.max_shift < 1 {
        issues.push(ConfigIssue::NoShift);
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        issues.push(ConfigIssue::BadTolerance(cfg.tol));
    }
    if cfg.max_iters < 1 {
        issues.push(ConfigIssue::NoIterations);
    }
    if !(cfg.dirichlet_alpha.is_finite() && cfg.dirichlet_alpha >= 0.0) {
        issues.push(ConfigIssue::BadAlpha(cfg.dirichlet_alpha));
    }
    if !(cfg.variance_floor_frac.is_finite() && cfg.variance_floor_frac >= 0.0) {
        issues.push(ConfigIssue::BadFloor(cfg.variance_floor_frac));
    }
    if data.is_empty() {
        issues.push(ConfigIssue::EmptyData);
    } else if data.len() < cfg.components {
        issues.push(ConfigIssue::TooFewCurves {
            components: cfg.components,
            curves: data.len(),
        });
    }
    let l_max = data.l_max().max(1);
    let grid_len = cfg
        .grid_len
        .unwrap_or_else(|| default_grid_length(cfg.max_shift.max(1), cfg.max_skip, l_max));
    let required = cfg.max_shift.max(1) - 1 + l_max;
    if grid_len < required {
        issues.push(ConfigIssue::GridTooShort { grid_len, required });
    }
    if issues.is_empty() {
        Ok(ValidConfig(ModelConfig {
            grid_len: Some(grid_len),
            ..cfg.clone()
        }))
    } else {
        Err(ConfigError { issues })
    }
}

/// Structural (non-learned) settings of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub components: usize,
    pub dims: usize,
    pub grid_len: usize,
    pub max_shift: usize,
    pub max_skip: usize,
    pub allow_stay: bool,
    pub offsets_enabled: bool,
    pub tie_transitions: bool,
}

impl Topology {
    /// Number of step offsets, `max_skip + 2` (stay, advance, skips).
    pub fn n_offsets(&self) -> usize {
        self.max_skip + 2
    }

    /// Whether offset `o` is part of the transition structure at all.
    pub fn offset_allowed(&self, o: usize) -> bool {
        match o {
            0 => self.allow_stay,
            _ => o <= self.max_skip + 1,
        }
    }

    /// Whether offset `o` is allowed and stays on the grid from position `t`.
    pub fn step_feasible(&self, t: usize, o: usize) -> bool {
        self.offset_allowed(o) && t + o < self.grid_len
    }

    /// Smallest per-step advance.
    pub fn min_step(&self) -> usize {
        usize::from(!self.allow_stay)
    }

    /// Rows stored in the step table: one per component, or one per
    /// (component, grid position) when transitions are untied.
    pub fn step_rows(&self) -> usize {
        if self.tie_transitions {
            self.components
        } else {
            self.components * self.grid_len
        }
    }

    pub fn step_row_index(&self, k: usize, t: usize) -> usize {
        if self.tie_transitions {
            k
        } else {
            k * self.grid_len + t
        }
    }

    /// Returns the longest curve this topology can score.
    pub fn max_curve_len(&self) -> usize {
        self.grid_len + 1 - self.max_shift
    }

    fn check(&self) -> Result<(), ModelError> {
        let fail = |m: &str| Err(ModelError::Topology(m.to_string()));
        if self.components == 0 {
            return fail("components must be at least 1");
        }
        if self.dims == 0 {
            return fail("dims must be at least 1");
        }
        if self.max_shift == 0 {
            return fail("max_shift must be at least 1");
        }
        if self.grid_len < self.max_shift {
            return fail("grid_len must be at least max_shift");
        }
        Ok(())
    }
}

/// Owned parameter arrays, the unchecked input to [`WarpMixtureModel::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub topology: Topology,
    /// Mixture weights, length K.
    pub weights: Vec<f64>,
    /// Start distributions, K rows of length M.
    pub init: Vec<Vec<f64>>,
    /// Step-offset distributions, [`Topology::step_rows`] rows of length S + 2.
    pub steps: Vec<Vec<f64>>,
    /// Means, flat `K * T * D`, index `(k * T + t) * D + d`.
    pub means: Vec<f64>,
    /// Diagonal variances, same layout as `means`.
    pub variances: Vec<f64>,
    /// Per-dimension variance floor.
    pub variance_floor: Vec<f64>,
}

/// Mixture of grid-path models with per-position diagonal Gaussian emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpMixtureModel {
    parts: ModelParts,
}

fn check_row(table: &'static str, row: usize, values: &[f64]) -> Result<f64, ModelError> {
    let mut sum = 0.0;
    for &v in values {
        if !(v.is_finite() && v >= 0.0) {
            return Err(ModelError::BadProbability {
                table,
                row,
                value: v,
            });
        }
        sum += v;
    }
    Ok(sum)
}

fn shape_err(table: &'static str, expected: impl ToString, found: impl ToString) -> ModelError {
    ModelError::Shape {
        table,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

impl WarpMixtureModel {
    /// Validates every invariant and wraps the parameters.
    pub fn from_parts(parts: ModelParts) -> Result<Self, ModelError> {
        let topo = parts.topology;
        topo.check()?;
        let (k, m, t, d) = (topo.components, topo.max_shift, topo.grid_len, topo.dims);
        let n_off = topo.n_offsets();

        if parts.weights.len() != k {
            return Err(shape_err("weights", k, parts.weights.len()));
        }
        let sum = check_row("weights", 0, &parts.weights)?;
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(ModelError::NotNormalized {
                table: "weights",
                row: 0,
                sum,
            });
        }

        if parts.init.len() != k {
            return Err(shape_err("init", k, parts.init.len()));
        }
        for (row, r) in parts.init.iter().enumerate() {
            if r.len() != m {
                return Err(shape_err("init", m, r.len()));
            }
            let sum = check_row("init", row, r)?;
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(ModelError::NotNormalized {
                    table: "init",
                    row,
                    sum,
                });
            }
        }

        if parts.steps.len() != topo.step_rows() {
            return Err(shape_err("steps", topo.step_rows(), parts.steps.len()));
        }
        for (row, r) in parts.steps.iter().enumerate() {
            if r.len() != n_off {
                return Err(shape_err("steps", n_off, r.len()));
            }
            let sum = check_row("steps", row, r)?;
            let pos = if topo.tie_transitions {
                None
            } else {
                Some(row % t)
            };
            let mut any_support = false;
            for (o, &p) in r.iter().enumerate() {
                let supported = match pos {
                    None => topo.offset_allowed(o),
                    Some(pos) => topo.step_feasible(pos, o),
                };
                any_support |= supported;
                if !supported && p != 0.0 {
                    return Err(ModelError::DisallowedStep {
                        row,
                        offset: o,
                        value: p,
                    });
                }
            }
            // Untied rows at the end of the grid may have no feasible step.
            let expected = if any_support { 1.0 } else { 0.0 };
            if (sum - expected).abs() > SIMPLEX_TOLERANCE {
                return Err(ModelError::NotNormalized {
                    table: "steps",
                    row,
                    sum,
                });
            }
        }

        if parts.variance_floor.len() != d {
            return Err(shape_err("variance_floor", d, parts.variance_floor.len()));
        }
        for &f in &parts.variance_floor {
            if !(f.is_finite() && f > 0.0) {
                return Err(ModelError::BadFloor(f));
            }
        }
        if parts.means.len() != k * t * d {
            return Err(shape_err("means", k * t * d, parts.means.len()));
        }
        if parts.variances.len() != k * t * d {
            return Err(shape_err("variances", k * t * d, parts.variances.len()));
        }
        for (i, (&mu, &var)) in parts.means.iter().zip(&parts.variances).enumerate() {
            let (component, position) = (i / (t * d), (i / d) % t);
            if !mu.is_finite() {
                return Err(ModelError::NonFiniteMean {
                    component,
                    position,
                });
            }
            let floor = parts.variance_floor[i % d];
            if !(var.is_finite() && var >= floor) {
                return Err(ModelError::VarianceBelowFloor {
                    component,
                    position,
                    value: var,
                    floor,
                });
            }
        }
        Ok(WarpMixtureModel { parts })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn into_parts(self) -> ModelParts {
        self.parts
    }

    pub fn topology(&self) -> &Topology {
        &self.parts.topology
    }

    pub fn components(&self) -> usize {
        self.parts.topology.components
    }

    pub fn dims(&self) -> usize {
        self.parts.topology.dims
    }

    pub fn grid_len(&self) -> usize {
        self.parts.topology.grid_len
    }

    pub fn weights(&self) -> &[f64] {
        &self.parts.weights
    }

    pub fn init_row(&self, k: usize) -> &[f64] {
        &self.parts.init[k]
    }

    /// Stored step distribution governing moves out of position `t` in component `k`.
    pub fn step_row(&self, k: usize, t: usize) -> &[f64] {
        &self.parts.steps[self.parts.topology.step_row_index(k, t)]
    }

    /// Step distribution at `t` renormalized over the feasible offsets.
    /// All zeros when no step is feasible.
    pub fn renormalized_step_row(&self, k: usize, t: usize) -> Vec<f64> {
        let topo = self.topology();
        let row = self.step_row(k, t);
        let total: f64 = row
            .iter()
            .enumerate()
            .filter(|&(o, _)| topo.step_feasible(t, o))
            .map(|(_, p)| p)
            .sum();
        row.iter()
            .enumerate()
            .map(|(o, &p)| {
                if total > 0.0 && topo.step_feasible(t, o) {
                    p / total
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn mean(&self, k: usize, t: usize) -> &[f64] {
        let d = self.dims();
        let i = (k * self.grid_len() + t) * d;
        &self.parts.means[i..i + d]
    }

    pub fn variance(&self, k: usize, t: usize) -> &[f64] {
        let d = self.dims();
        let i = (k * self.grid_len() + t) * d;
        &self.parts.variances[i..i + d]
    }

    pub fn variance_floor(&self) -> &[f64] {
        &self.parts.variance_floor
    }

    /// Returns a copy with components reordered so that new component `i`
    /// is old component `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> WarpMixtureModel {
        let topo = *self.topology();
        assert_eq!(perm.len(), topo.components);
        let block = topo.grid_len * topo.dims;
        let mut parts = self.parts.clone();
        for (new, &old) in perm.iter().enumerate() {
            parts.weights[new] = self.parts.weights[old];
            parts.init[new] = self.parts.init[old].clone();
            parts.means[new * block..(new + 1) * block]
                .copy_from_slice(&self.parts.means[old * block..(old + 1) * block]);
            parts.variances[new * block..(new + 1) * block]
                .copy_from_slice(&self.parts.variances[old * block..(old + 1) * block]);
            for t in 0..topo.grid_len {
                let (src, dst) = (topo.step_row_index(old, t), topo.step_row_index(new, t));
                parts.steps[dst] = self.parts.steps[src].clone();
                if topo.tie_transitions {
                    break;
                }
            }
        }
        WarpMixtureModel { parts }
    }
}

/// Most probable component, start and grid path for one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub curve_id: String,
    pub component: usize,
    pub start: usize,
    pub path: Vec<usize>,
    pub offset: Vec<f64>,
    pub log_joint: f64,
}
