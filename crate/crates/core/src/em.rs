//! MAP-EM estimation.
//!
//! Probability tables (mixture weights, start distributions, step
//! distributions) get symmetric Dirichlet priors, so each M-step row is
//! proportional to expected counts plus `dirichlet_alpha`. Means and
//! variances are maximum likelihood, with a per-dimension variance floor.
//!
//! With offsets enabled the emission term depends on the current means
//! through the offset heuristic, so the objective is not guaranteed to be
//! monotone; decreases are reported as [`FitWarning`]s.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ConfigError, ConfigIssue, Result};
use crate::inference::{check_curve, log_sum_exp, Prepared};
use crate::model::{
    validate_config, CurveSet, ModelConfig, ModelParts, Topology, ValidConfig, WarpMixtureModel,
    MIN_VARIANCE,
};

/// Grid positions with less posterior mass than this keep their previous mean.
pub const OCCUPANCY_THRESHOLD: f64 = 1e-6;

/// Objective decreases larger than this are reported.
pub const DECREASE_WARNING: f64 = 1e-6;

const CHUNK: usize = 8;

/// Per-dimension statistics of the training data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Lower bound for every emission variance.
    pub floor: Vec<f64>,
}

impl DataSummary {
    /// Pooled mean and variance over all observations. When offsets are
    /// enabled each curve is centered on its own mean first, so the summary
    /// describes shape rather than level.
    pub fn new(data: &CurveSet, cfg: &ModelConfig) -> Self {
        let d = data.dims();
        let mut sum = vec![0.0; d];
        let mut count = 0usize;
        let centers: Vec<Vec<f64>> = data
            .curves()
            .iter()
            .map(|c| {
                if cfg.offsets_enabled {
                    c.mean()
                } else {
                    vec![0.0; d]
                }
            })
            .collect();
        for (c, center) in data.curves().iter().zip(&centers) {
            for p in c.points() {
                for i in 0..d {
                    sum[i] += p[i] - center[i];
                }
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut ss = vec![0.0; d];
        for (c, center) in data.curves().iter().zip(&centers) {
            for p in c.points() {
                for i in 0..d {
                    ss[i] += (p[i] - center[i] - mean[i]).powi(2);
                }
            }
        }
        let variance: Vec<f64> = ss.iter().map(|s| s / n).collect();
        let floor = variance
            .iter()
            .map(|v| (v * cfg.variance_floor_frac).max(MIN_VARIANCE))
            .collect();
        DataSummary {
            mean,
            variance,
            floor,
        }
    }
}

/// Expected complete-data statistics from one E-step.
///
/// `var_num` holds squared residuals about the means of the model the
/// E-step ran under, which [`m_step`] corrects to the updated means.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub topology: Topology,
    /// Number of curves that contributed.
    pub curves: usize,
    pub log_lik: f64,
    /// `K`.
    pub comp_weight: Vec<f64>,
    /// `K x M`.
    pub init_counts: Vec<f64>,
    /// [`Topology::step_rows`] `x (S + 2)`.
    pub step_counts: Vec<f64>,
    /// `K x T x D`.
    pub mean_num: Vec<f64>,
    /// `K x T`.
    pub mean_den: Vec<f64>,
    /// `K x T x D`.
    pub var_num: Vec<f64>,
}

impl SufficientStats {
    pub fn zeros(topology: Topology) -> Self {
        let (k, m, t, d) = (
            topology.components,
            topology.max_shift,
            topology.grid_len,
            topology.dims,
        );
        SufficientStats {
            topology,
            curves: 0,
            log_lik: 0.0,
            comp_weight: vec![0.0; k],
            init_counts: vec![0.0; k * m],
            step_counts: vec![0.0; topology.step_rows() * topology.n_offsets()],
            mean_num: vec![0.0; k * t * d],
            mean_den: vec![0.0; k * t],
            var_num: vec![0.0; k * t * d],
        }
    }

    /// Adds `other` into `self`. Both must come from the same model.
    pub fn merge(&mut self, other: &SufficientStats) {
        fn add(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        assert_eq!(
            self.topology, other.topology,
            "merging incompatible statistics"
        );
        self.curves += other.curves;
        self.log_lik += other.log_lik;
        add(&mut self.comp_weight, &other.comp_weight);
        add(&mut self.init_counts, &other.init_counts);
        add(&mut self.step_counts, &other.step_counts);
        add(&mut self.mean_num, &other.mean_num);
        add(&mut self.mean_den, &other.mean_den);
        add(&mut self.var_num, &other.var_num);
    }

    fn accumulate(&mut self, prep: &Prepared<'_>, curve: &crate::model::Curve) {
        let topo = prep.topo;
        let (m, t_len, d, n_off) = (topo.max_shift, topo.grid_len, topo.dims, topo.n_offsets());
        let mut terms = Vec::with_capacity(topo.components * m);
        for k in 0..topo.components {
            for g1 in 0..m {
                let prior = prep.log_weight(k) + prep.log_init(k, g1);
                terms.push(if prior == f64::NEG_INFINITY {
                    prior
                } else {
                    prior + prep.loglik(curve, k, g1)
                });
            }
        }
        let log_evidence = log_sum_exp(&terms);
        self.curves += 1;
        self.log_lik += log_evidence;
        if log_evidence == f64::NEG_INFINITY {
            return;
        }
        let step_len = topo.step_rows() / topo.components * n_off;
        for (i, term) in terms.iter().enumerate() {
            let w = (term - log_evidence).exp();
            if w == 0.0 {
                continue;
            }
            let (k, g1) = (i / m, i % m);
            self.comp_weight[k] += w;
            self.init_counts[k * m + g1] += w;
            let lat = prep.lattice(curve, k, g1);
            let base = topo.step_row_index(k, 0) * n_off;
            let xi = &mut self.step_counts[base..base + step_len];
            let (mean_den, mean_num, var_num) =
                (&mut self.mean_den, &mut self.mean_num, &mut self.var_num);
            prep.stream_posteriors(&lat, w, xi, |j, t, g| {
                let y = &lat.translated[j * d..(j + 1) * d];
                let cell = k * t_len + t;
                mean_den[cell] += g;
                let mu = prep.model.mean(k, t);
                for dd in 0..d {
                    mean_num[cell * d + dd] += g * y[dd];
                    let r = y[dd] - mu[dd];
                    var_num[cell * d + dd] += g * r * r;
                }
            });
        }
    }
}

/// Log Dirichlet prior density (up to a constant) of the model's tables.
pub fn log_prior(model: &WarpMixtureModel, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let topo = model.topology();
    let mut total = model.weights().iter().map(|w| w.ln()).sum::<f64>();
    for k in 0..topo.components {
        total += model.init_row(k).iter().map(|p| p.ln()).sum::<f64>();
    }
    for (row, probs) in model.parts().steps.iter().enumerate() {
        let pos = row % topo.grid_len;
        for (o, p) in probs.iter().enumerate() {
            let supported = if topo.tie_transitions {
                topo.offset_allowed(o)
            } else {
                topo.step_feasible(pos, o)
            };
            if supported {
                total += p.ln();
            }
        }
    }
    alpha * total
}

/// Accumulates posterior statistics over all curves and returns them with the
/// MAP objective (data log-likelihood plus table log prior) of `model`.
pub fn e_step(
    data: &CurveSet,
    model: &WarpMixtureModel,
    cfg: &ModelConfig,
) -> Result<(SufficientStats, f64)> {
    let topo = *model.topology();
    for c in data.curves() {
        check_curve(c, &topo)?;
    }
    let prep = Prepared::new(model);
    let partial: Vec<SufficientStats> = data
        .curves()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = SufficientStats::zeros(topo);
            for c in chunk {
                s.accumulate(&prep, c);
            }
            s
        })
        .collect();
    let mut stats = SufficientStats::zeros(topo);
    for p in &partial {
        stats.merge(p);
    }
    let objective = stats.log_lik + log_prior(model, cfg.dirichlet_alpha);
    Ok((stats, objective))
}

fn normalize_over(counts: &[f64], support: impl Fn(usize) -> bool, alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(o, c)| if support(o) { c + alpha } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        let n = (0..counts.len()).filter(|&o| support(o)).count();
        (0..counts.len())
            .map(|o| if support(o) { 1.0 / n as f64 } else { 0.0 })
            .collect()
    }
}

/// MAP update of all parameters from `stats`. `prev` is the model the
/// statistics were computed under.
pub fn m_step(
    stats: &SufficientStats,
    prev: &WarpMixtureModel,
    cfg: &ModelConfig,
    summary: &DataSummary,
) -> WarpMixtureModel {
    let topo = stats.topology;
    assert_eq!(&topo, prev.topology(), "statistics do not match the model");
    let (k_count, m, t_len, d, n_off) = (
        topo.components,
        topo.max_shift,
        topo.grid_len,
        topo.dims,
        topo.n_offsets(),
    );
    let alpha = cfg.dirichlet_alpha;
    let weights = normalize_over(&stats.comp_weight, |_| true, alpha);
    let init = stats
        .init_counts
        .chunks(m)
        .map(|row| normalize_over(row, |_| true, alpha))
        .collect();
    let steps = stats
        .step_counts
        .chunks(n_off)
        .enumerate()
        .map(|(row, counts)| {
            if topo.tie_transitions {
                normalize_over(counts, |o| topo.offset_allowed(o), alpha)
            } else {
                let pos = row % t_len;
                if (0..n_off).any(|o| topo.step_feasible(pos, o)) {
                    normalize_over(counts, |o| topo.step_feasible(pos, o), alpha)
                } else {
                    vec![0.0; n_off]
                }
            }
        })
        .collect();

    let mut means = prev.parts().means.clone();
    let mut variances = vec![0.0; k_count * t_len * d];
    for cell in 0..k_count * t_len {
        let den = stats.mean_den[cell];
        for dd in 0..d {
            let i = cell * d + dd;
            let floor = summary.floor[dd];
            let var = if den > OCCUPANCY_THRESHOLD {
                let mu = stats.mean_num[i] / den;
                let shift = mu - means[i];
                means[i] = mu;
                stats.var_num[i] / den - shift * shift
            } else if den > 0.0 {
                stats.var_num[i] / den
            } else {
                floor
            };
            variances[i] = if var.is_finite() {
                var.max(floor)
            } else {
                floor
            };
        }
    }
    WarpMixtureModel::from_parts(ModelParts {
        topology: topo,
        weights,
        init,
        steps,
        means,
        variances,
        variance_floor: summary.floor.clone(),
    })
    .expect("m-step output satisfies model invariants")
}

/// Initial step distribution: 0.8 advance, 0.1 stay when allowed, the
/// remainder split across skips, renormalized over the support.
fn initial_step_row(topo: &Topology, support: impl Fn(usize) -> bool) -> Vec<f64> {
    let n_off = topo.n_offsets();
    let skips = topo.max_skip as f64;
    let stay = if topo.allow_stay { 0.1 } else { 0.0 };
    let raw: Vec<f64> = (0..n_off)
        .map(|o| match o {
            _ if !support(o) => 0.0,
            0 => stay,
            1 => 0.8,
            _ => (1.0 - 0.8 - stay) / skips,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; n_off]
    }
}

/// Seeds each component's mean with a distinct randomly chosen curve, placed
/// on the grid from the middle start position.
pub fn init_from_random_curves<R: Rng + ?Sized>(
    data: &CurveSet,
    cfg: &ValidConfig,
    rng: &mut R,
) -> Result<WarpMixtureModel> {
    let topo = cfg.topology(data.dims());
    if data.len() < topo.components {
        let issue = ConfigIssue::TooFewCurves {
            components: topo.components,
            curves: data.len(),
        };
        return Err(ConfigError::from(issue).into());
    }
    let summary = DataSummary::new(data, cfg);
    let (k_count, m, t_len, d) = (topo.components, topo.max_shift, topo.grid_len, topo.dims);
    let chosen = index::sample(rng, data.len(), k_count);
    let first = m.div_ceil(2) - 1;
    let mut means = Vec::with_capacity(k_count * t_len * d);
    for _ in 0..k_count * t_len {
        means.extend_from_slice(&summary.mean);
    }
    for (k, idx) in chosen.iter().enumerate() {
        let curve = &data.curves()[idx];
        let center = if topo.offsets_enabled {
            curve.mean()
        } else {
            vec![0.0; d]
        };
        for (j, p) in curve.points().enumerate() {
            let base = (k * t_len + first + j) * d;
            for dd in 0..d {
                means[base + dd] = p[dd] - center[dd];
            }
        }
    }
    let variances = (0..k_count * t_len)
        .flat_map(|_| {
            summary
                .variance
                .iter()
                .zip(&summary.floor)
                .map(|(v, f)| v.max(*f))
        })
        .collect();
    let steps = (0..topo.step_rows())
        .map(|row| {
            if topo.tie_transitions {
                initial_step_row(&topo, |o| topo.offset_allowed(o))
            } else {
                let pos = row % t_len;
                initial_step_row(&topo, |o| topo.step_feasible(pos, o))
            }
        })
        .collect();
    Ok(WarpMixtureModel::from_parts(ModelParts {
        topology: topo,
        weights: vec![1.0 / k_count as f64; k_count],
        init: vec![vec![1.0 / m as f64; m]; k_count],
        steps,
        means,
        variances,
        variance_floor: summary.floor,
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitWarning {
    /// Iteration whose M-step lowered the objective.
    pub iteration: usize,
    pub decrease: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: WarpMixtureModel,
    /// Objective of the initial model followed by the objective after each iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
    pub warnings: Vec<FitWarning>,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the initial objective")
    }
}

/// Runs EM from a random initialization drawn with `seed`.
pub fn fit(data: &CurveSet, cfg: &ModelConfig, seed: u64) -> Result<FitResult> {
    let valid = validate_config(cfg, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = init_from_random_curves(data, &valid, &mut rng)?;
    fit_from(data, &valid, init, seed)
}

/// Runs EM from `init` until the relative objective change drops below
/// `cfg.tol` or `cfg.max_iters` iterations have run.
pub fn fit_from(
    data: &CurveSet,
    cfg: &ValidConfig,
    init: WarpMixtureModel,
    seed: u64,
) -> Result<FitResult> {
    let summary = DataSummary::new(data, cfg);
    let mut model = init;
    let (mut stats, mut objective) = e_step(data, &model, cfg)?;
    let mut trace = vec![objective];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        let next = m_step(&stats, &model, cfg, &summary);
        let (next_stats, next_objective) = e_step(data, &next, cfg)?;
        iterations = it;
        trace.push(next_objective);
        if next_objective < objective - DECREASE_WARNING {
            warnings.push(FitWarning {
                iteration: it,
                decrease: objective - next_objective,
            });
        }
        let change = (next_objective - objective).abs() / objective.abs().max(f64::MIN_POSITIVE);
        model = next;
        stats = next_stats;
        objective = next_objective;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model,
        objective_trace: trace,
        iterations,
        converged,
        seed,
        warnings,
    })
}

/// Seed for restart `i`; restart 0 uses `seed` itself.
pub fn derive_seed(seed: u64, i: u64) -> u64 {
    seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// EM iterations a translated candidate gets before candidates are compared.
pub const SCREEN_ITERS: usize = 20;

const SEARCH_ROUNDS: usize = 4;

/// Copy of `model` with component `k`'s means and variances moved `by` grid
/// positions (edge cells are repeated past either end) and its start
/// distribution reset to uniform.
pub fn translate_component(model: &WarpMixtureModel, k: usize, by: isize) -> WarpMixtureModel {
    let mut parts = model.parts().clone();
    let topo = parts.topology;
    let (t_len, d) = (topo.grid_len, topo.dims);
    let block = k * t_len * d..(k + 1) * t_len * d;
    let means = parts.means[block.clone()].to_vec();
    let variances = parts.variances[block.clone()].to_vec();
    for t in 0..t_len {
        let src = (t as isize - by).clamp(0, t_len as isize - 1) as usize;
        let (dst, from) = (block.start + t * d, src * d);
        parts.means[dst..dst + d].copy_from_slice(&means[from..from + d]);
        parts.variances[dst..dst + d].copy_from_slice(&variances[from..from + d]);
    }
    parts.init[k] = vec![1.0 / topo.max_shift as f64; topo.max_shift];
    WarpMixtureModel::from_parts(parts).expect("translation preserves model invariants")
}

/// Local search over template placements. Each round moves every component
/// by every nonzero shift up to `max_shift - 1` either way, runs
/// [`SCREEN_ITERS`] EM iterations from each candidate, and continues full EM
/// from the best one. Stops when a round does not raise the objective.
pub fn translation_search(
    data: &CurveSet,
    cfg: &ValidConfig,
    start: FitResult,
) -> Result<FitResult> {
    let reach = start.model.topology().max_shift as isize - 1;
    let components = start.model.components();
    if reach == 0 {
        return Ok(start);
    }
    let screen = cfg.with_max_iters(cfg.max_iters.min(SCREEN_ITERS));
    let moves: Vec<(usize, isize)> = (0..components)
        .flat_map(|k| {
            (-reach..=reach)
                .filter(|&by| by != 0)
                .map(move |by| (k, by))
        })
        .collect();
    let mut best = start;
    for _ in 0..SEARCH_ROUNDS {
        let screened: Vec<Result<FitResult>> = moves
            .par_iter()
            .map(|&(k, by)| {
                fit_from(
                    data,
                    &screen,
                    translate_component(&best.model, k, by),
                    best.seed,
                )
            })
            .collect();
        let mut top: Option<FitResult> = None;
        for r in screened {
            let r = r?;
            if top
                .as_ref()
                .is_none_or(|t| r.final_objective() > t.final_objective())
            {
                top = Some(r);
            }
        }
        let Some(top) = top.filter(|t| t.final_objective() > best.final_objective()) else {
            break;
        };
        let full = fit_from(data, cfg, top.model, best.seed)?;
        if full.final_objective() <= best.final_objective() {
            break;
        }
        best = full;
    }
    Ok(best)
}

/// Best of `n_starts` independent fits by final objective (earliest start
/// wins ties), refined by [`translation_search`] when the config asks for it.
pub fn fit_multi_start(
    data: &CurveSet,
    cfg: &ModelConfig,
    n_starts: usize,
    seed: u64,
) -> Result<FitResult> {
    let n = n_starts.max(1) as u64;
    let results: Vec<Result<FitResult>> = (0..n)
        .into_par_iter()
        .map(|i| fit(data, cfg, derive_seed(seed, i)))
        .collect();
    let mut best: Option<FitResult> = None;
    for r in results {
        let r = r?;
        if best
            .as_ref()
            .is_none_or(|b| r.final_objective() > b.final_objective())
        {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");
    if cfg.translation_search {
        translation_search(data, &validate_config(cfg, data)?, best)
    } else {
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Curve;

    fn data(curves: &[&[f64]]) -> CurveSet {
        CurveSet::new(
            curves
                .iter()
                .enumerate()
                .map(|(i, v)| Curve::from_flat(format!("c{i}"), 1, v.to_vec()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_curve_single_cutset() {
        let ds = data(&[&[1.0, 2.0, 3.0]]);
        let cfg = validate_config(&ModelConfig::gaussian_mixture(1), &ds).unwrap();
        let model = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (stats, _) = e_step(&ds, &model, &cfg).unwrap();
        assert_eq!(stats.comp_weight, vec![1.0]);
        assert_eq!(stats.init_counts, vec![1.0]);
        assert_eq!(stats.mean_den, vec![1.0; 3]);
    }

    /// Statistics rebuilt from the stored-occupancy inference API.
    #[allow(clippy::needless_range_loop)]
    fn reference_stats(data: &CurveSet, model: &WarpMixtureModel) -> SufficientStats {
        use crate::inference::{cutset_posterior, forward_backward};
        let topo = *model.topology();
        let (m, t_len, d, n_off) = (topo.max_shift, topo.grid_len, topo.dims, topo.n_offsets());
        let prep = Prepared::new(model);
        let mut s = SufficientStats::zeros(topo);
        for c in data.curves() {
            let post = cutset_posterior(c, model).unwrap();
            s.curves += 1;
            s.log_lik += post.log_evidence;
            for k in 0..topo.components {
                for g1 in 0..m {
                    let w = post.table[k][g1];
                    if w == 0.0 {
                        continue;
                    }
                    s.comp_weight[k] += w;
                    s.init_counts[k * m + g1] += w;
                    let (occ, _) = forward_backward(c, model, k, g1).unwrap();
                    for (r, row) in occ.step_counts().iter().enumerate() {
                        for (o, x) in row.iter().enumerate() {
                            s.step_counts[(topo.step_row_index(k, 0) + r) * n_off + o] += w * x;
                        }
                    }
                    let delta = prep.offset(c, k, g1);
                    for j in 0..c.len() {
                        for t in 0..t_len {
                            let g = w * occ.gamma(j, t);
                            let cell = k * t_len + t;
                            s.mean_den[cell] += g;
                            for dd in 0..d {
                                let y = c.point(j)[dd] - delta[dd];
                                s.mean_num[cell * d + dd] += g * y;
                                s.var_num[cell * d + dd] += g * (y - model.mean(k, t)[dd]).powi(2);
                            }
                        }
                    }
                }
            }
        }
        s
    }

    #[test]
    fn streamed_statistics_match_stored_occupancies() {
        use crate::synth::{make_template_model, sample_dataset, Shape, TemplateSpec};
        for (tied, offsets) in [(true, false), (false, true)] {
            let mut parts = make_template_model(&TemplateSpec {
                components: 2,
                dims: 2,
                max_shift: 3,
                max_skip: 1,
                allow_stay: true,
                grid_len: 14,
                shape: Shape::Bump,
                separation: 1.0,
                noise_var: 0.3,
            })
            .unwrap()
            .into_parts();
            parts.topology.offsets_enabled = offsets;
            parts.steps = vec![vec![0.2, 0.5, 0.3]; 2];
            if !tied {
                parts.topology.tie_transitions = false;
                let topo = parts.topology;
                parts.steps = (0..2 * 14)
                    .map(|row| {
                        let raw: Vec<f64> = (0..3)
                            .map(|o| {
                                if topo.step_feasible(row % 14, o) {
                                    1.0 + o as f64
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        let total: f64 = raw.iter().sum();
                        raw.iter()
                            .map(|v| if total > 0.0 { v / total } else { 0.0 })
                            .collect()
                    })
                    .collect();
            }
            let model = WarpMixtureModel::from_parts(parts).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let (ds, _) = sample_dataset(&model, 12, 2..=6, &mut rng, 0.5).unwrap();
            let cfg = ModelConfig {
                tie_transitions: tied,
                offsets_enabled: offsets,
                ..Default::default()
            };
            let (fast, _) = e_step(&ds, &model, &cfg).unwrap();
            let slow = reference_stats(&ds, &model);
            assert_eq!(fast.curves, slow.curves);
            assert!((fast.log_lik - slow.log_lik).abs() < 1e-10);
            let pairs = [
                (&fast.comp_weight, &slow.comp_weight),
                (&fast.init_counts, &slow.init_counts),
                (&fast.step_counts, &slow.step_counts),
                (&fast.mean_num, &slow.mean_num),
                (&fast.mean_den, &slow.mean_den),
                (&fast.var_num, &slow.var_num),
            ];
            for (a, b) in pairs {
                assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(b.iter()) {
                    assert!((x - y).abs() < 1e-10 * y.abs().max(1.0), "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn translation_repeats_edge_cells() {
        let ds = data(&[&[0.0, 1.0], &[2.0, 3.0]]);
        let cfg = ModelConfig {
            max_shift: 3,
            ..ModelConfig::gaussian_mixture(1)
        };
        let valid = validate_config(&cfg, &ds).unwrap();
        let mut parts = init_from_random_curves(&ds, &valid, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
            .into_parts();
        parts.means = vec![0.0, 1.0, 2.0, 3.0];
        parts.init = vec![vec![0.6, 0.3, 0.1]];
        let model = WarpMixtureModel::from_parts(parts).unwrap();
        assert_eq!(
            translate_component(&model, 0, 1).parts().means,
            vec![0.0, 0.0, 1.0, 2.0]
        );
        let left = translate_component(&model, 0, -2);
        assert_eq!(left.parts().means, vec![2.0, 3.0, 3.0, 3.0]);
        assert_eq!(left.init_row(0), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn translation_search_realigns_a_shifted_template() {
        use crate::synth::{make_template_model, sample_dataset, Shape, TemplateSpec};
        let truth = make_template_model(&TemplateSpec {
            components: 1,
            dims: 1,
            max_shift: 4,
            max_skip: 0,
            allow_stay: false,
            grid_len: 13,
            shape: Shape::Sine,
            separation: 2.0,
            noise_var: 0.05,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (ds, _) = sample_dataset(&truth, 40, 10..=10, &mut rng, 0.0).unwrap();
        let cfg = ModelConfig {
            max_shift: 4,
            grid_len: Some(13),
            ..ModelConfig::gaussian_mixture(1)
        };
        let valid = validate_config(&cfg, &ds).unwrap();
        let reference = fit_from(&ds, &valid, truth.clone(), 0)
            .unwrap()
            .final_objective();
        let stuck = fit_from(&ds, &valid, translate_component(&truth, 0, 2), 0).unwrap();
        assert!(stuck.final_objective() < reference - 1.0);
        let found = translation_search(&ds, &valid, stuck).unwrap();
        assert!(found.final_objective() >= reference - 1e-6 * reference.abs());
    }

    #[test]
    fn init_copies_curve_into_grid() {
        let ds = data(&[&[1.0, 2.0, 4.0]]);
        let cfg = validate_config(&ModelConfig::gaussian_mixture(1), &ds).unwrap();
        let m = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(m.parts().means, vec![1.0, 2.0, 4.0]);

        let centered = ModelConfig {
            offsets_enabled: true,
            ..ModelConfig::gaussian_mixture(1)
        };
        let cfg = validate_config(&centered, &ds).unwrap();
        let m = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mean = 7.0 / 3.0;
        assert_eq!(m.parts().means, vec![1.0 - mean, 2.0 - mean, 4.0 - mean]);
    }

    #[test]
    fn init_uses_each_curve_when_k_equals_n() {
        let ds = data(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]);
        let cfg = validate_config(&ModelConfig::gaussian_mixture(3), &ds).unwrap();
        let m = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut firsts: Vec<f64> = (0..3).map(|k| m.mean(k, 0)[0]).collect();
        firsts.sort_by(f64::total_cmp);
        assert_eq!(firsts, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn init_places_seed_at_middle_start_and_sets_steps() {
        let ds = data(&[&[5.0, 6.0], &[0.0]]);
        let cfg = ModelConfig {
            components: 1,
            max_shift: 3,
            max_skip: 2,
            allow_stay: true,
            ..Default::default()
        };
        let cfg = validate_config(&cfg, &ds).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = (0..20)
            .map(|_| init_from_random_curves(&ds, &cfg, &mut rng).unwrap())
            .find(|m| m.mean(0, 1)[0] == 5.0)
            .expect("some draw picks the long curve");
        assert_eq!(m.mean(0, 2), &[6.0]);
        let row = m.step_row(0, 0);
        assert!((row[0] - 0.1).abs() < 1e-15);
        assert!((row[1] - 0.8).abs() < 1e-15);
        assert!((row[2] - 0.05).abs() < 1e-15 && (row[3] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn init_needs_enough_curves() {
        let one = data(&[&[1.0]]);
        assert!(validate_config(&ModelConfig::gaussian_mixture(2), &one).is_err());
        let two = data(&[&[1.0], &[2.0]]);
        let cfg = validate_config(&ModelConfig::gaussian_mixture(2), &two).unwrap();
        assert!(init_from_random_curves(&one, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let ds = data(&[&[1.0, 2.0], &[3.0, 1.0], &[0.0, 0.5], &[2.0, 2.0]]);
        let cfg = validate_config(&ModelConfig::gaussian_mixture(2), &ds).unwrap();
        let a = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hard_assignment_weight_closed_form() {
        let ds = data(&[&[1.0], &[1.1], &[0.9], &[1.05]]);
        let cfg = validate_config(&ModelConfig::gaussian_mixture(2), &ds).unwrap();
        let prev = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let summary = DataSummary::new(&ds, &cfg);
        let mut stats = SufficientStats::zeros(*prev.topology());
        stats.curves = 4;
        stats.comp_weight = vec![4.0, 0.0];
        stats.init_counts = vec![4.0, 0.0];
        stats.step_counts = vec![0.0; 4];
        stats.mean_den = vec![4.0, 0.0];
        stats.mean_num = vec![4.05, 0.0];
        stats.var_num = vec![0.1, 0.0];
        let next = m_step(&stats, &prev, &cfg, &summary);
        let alpha = cfg.dirichlet_alpha;
        assert!((next.weights()[0] - (4.0 + alpha) / (4.0 + 2.0 * alpha)).abs() < 1e-15);
        // Component 1 saw nothing: mean kept, variance floored.
        assert_eq!(next.mean(1, 0), prev.mean(1, 0));
        assert_eq!(next.variance(1, 0), &summary.floor[..]);
    }

    #[test]
    fn linear_means_are_pointwise_averages() {
        let ds = data(&[&[1.0, 2.0, 3.0], &[3.0, 4.0], &[2.0]]);
        let cfg = validate_config(&ModelConfig::gaussian_mixture(1), &ds).unwrap();
        let prev = init_from_random_curves(&ds, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let (stats, _) = e_step(&ds, &prev, &cfg).unwrap();
        let next = m_step(&stats, &prev, &cfg, &DataSummary::new(&ds, &cfg));
        // Direct averaging of the curves covering each position.
        let expected = [(1.0 + 3.0 + 2.0) / 3.0, (2.0 + 4.0) / 2.0, 3.0];
        for (t, e) in expected.iter().enumerate() {
            assert!((next.mean(0, t)[0] - e).abs() < 1e-12);
        }
        let v0 = [1.0f64, 3.0, 2.0]
            .iter()
            .map(|y| (y - 2.0).powi(2))
            .sum::<f64>()
            / 3.0;
        assert!((next.variance(0, 0)[0] - v0).abs() < 1e-12);
    }

    #[test]
    fn stats_are_additive() {
        let ds = data(&[&[1.0, 2.0, 3.0], &[3.0, 4.0], &[2.0, 0.0, 1.0], &[0.5]]);
        let cfg = ModelConfig {
            components: 2,
            max_shift: 2,
            max_skip: 1,
            allow_stay: true,
            offsets_enabled: true,
            ..Default::default()
        };
        let valid = validate_config(&cfg, &ds).unwrap();
        let model =
            init_from_random_curves(&ds, &valid, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (all, _) = e_step(&ds, &model, &cfg).unwrap();
        let (mut a, _) = e_step(&ds.subset(&[0, 2]), &model, &cfg).unwrap();
        let (b, _) = e_step(&ds.subset(&[1, 3]), &model, &cfg).unwrap();
        a.merge(&b);
        assert_eq!(a.curves, all.curves);
        let close = |x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .all(|(p, q)| (p - q).abs() <= 1e-12 * (1.0 + q.abs()))
        };
        assert!(close(&a.comp_weight, &all.comp_weight));
        assert!(close(&a.step_counts, &all.step_counts));
        assert!(close(&a.mean_num, &all.mean_num));
        assert!(close(&a.var_num, &all.var_num));
        let total: f64 = all.comp_weight.iter().sum();
        assert!((total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_tolerance_runs_one_iteration() {
        let ds = data(&[&[1.0, 2.0], &[3.0, 1.0], &[0.0, 0.5]]);
        let cfg = ModelConfig {
            tol: f64::INFINITY,
            ..ModelConfig::gaussian_mixture(2)
        };
        let r = fit(&ds, &cfg, 0).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert_eq!(r.objective_trace.len(), 2);
    }

    #[test]
    fn single_start_matches_fit() {
        let ds = data(&[&[1.0, 2.0], &[3.0, 1.0], &[0.0, 0.5], &[2.0, 2.5]]);
        let cfg = ModelConfig::gaussian_mixture(2);
        assert_eq!(
            fit_multi_start(&ds, &cfg, 1, 11).unwrap(),
            fit(&ds, &cfg, 11).unwrap()
        );
    }
}
