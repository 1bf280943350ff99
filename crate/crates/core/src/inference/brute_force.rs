//! Exhaustive enumeration of every (component, start, path) triple.
//!
//! Intended as a testing oracle: it shares no code with the recursions in
//! the parent module beyond reading raw model parameters.

use crate::error::InferenceError;
use crate::model::{Alignment, Curve, WarpMixtureModel};

/// Largest number of paths [`brute_force_loglik`] will enumerate.
pub const DEFAULT_PATH_GUARD: f64 = 1e7;

/// Exact posteriors for one cut-set value.
#[derive(Debug, Clone, PartialEq)]
pub struct CutsetEnumeration {
    pub component: usize,
    pub start: usize,
    /// `log P(Y | k, g1)`.
    pub log_lik: f64,
    /// `L x T` posterior occupancy given `(k, g1)`.
    pub gamma: Vec<Vec<f64>>,
    /// Posterior expected step counts given `(k, g1)`; one row when tied,
    /// one per grid position otherwise.
    pub step_counts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    pub log_evidence: f64,
    /// `posterior[k][g1] = P(Z = k, G1 = g1 | Y)`.
    pub posterior: Vec<Vec<f64>>,
    pub cutsets: Vec<CutsetEnumeration>,
    pub best: Alignment,
}

pub fn brute_force_loglik(curve: &Curve, model: &WarpMixtureModel) -> Result<f64, InferenceError> {
    enumerate_paths(curve, model, DEFAULT_PATH_GUARD).map(|e| e.log_evidence)
}

fn log_normal(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - r * r / (2.0 * var)
}

fn lse(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

struct PathScore {
    path: Vec<usize>,
    log_path: f64,
    log_lik: f64,
}

/// Log joint, component, start, path and offset of the best path so far.
type BestPath = (f64, usize, usize, Vec<usize>, Vec<f64>);

/// Enumerates all legal paths, refusing when more than `guard` would be visited.
pub fn enumerate_paths(
    curve: &Curve,
    model: &WarpMixtureModel,
    guard: f64,
) -> Result<Enumeration, InferenceError> {
    let topo = *model.topology();
    crate::inference::check_curve(curve, &topo)?;
    let (k_count, m, t_len, s, d) = (
        topo.components,
        topo.max_shift,
        topo.grid_len,
        topo.max_skip,
        topo.dims,
    );
    let len = curve.len();
    let paths = (k_count * m) as f64 * ((s + 2) as f64).powi(len as i32 - 1);
    if paths > guard {
        return Err(InferenceError::TooManyPaths {
            paths,
            limit: guard,
        });
    }

    // Step log-probability out of `t` by `o`, renormalized over on-grid moves.
    let step_logp = |k: usize, t: usize, o: usize| -> f64 {
        let row = model.step_row(k, t);
        let legal = |o: usize| (o > 0 || topo.allow_stay) && o <= s + 1 && t + o < t_len;
        if !legal(o) {
            return f64::NEG_INFINITY;
        }
        let total: f64 = (0..row.len()).filter(|&o| legal(o)).map(|o| row[o]).sum();
        if total > 0.0 {
            (row[o] / total).ln()
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut cutsets = Vec::with_capacity(k_count * m);
    let mut joint_terms = Vec::with_capacity(k_count * m);
    let mut best: Option<BestPath> = None;
    for k in 0..k_count {
        for g1 in 0..m {
            let mut delta = vec![0.0; d];
            if topo.offsets_enabled {
                for j in 0..len {
                    for (dd, acc) in delta.iter_mut().enumerate() {
                        *acc += curve.point(j)[dd] - model.mean(k, g1 + j)[dd];
                    }
                }
                delta.iter_mut().for_each(|v| *v /= len as f64);
            }
            let emit = |j: usize, t: usize| -> f64 {
                (0..d)
                    .map(|dd| {
                        log_normal(
                            curve.point(j)[dd] - delta[dd],
                            model.mean(k, t)[dd],
                            model.variance(k, t)[dd],
                        )
                    })
                    .sum()
            };

            let mut scored = Vec::new();
            let mut stack = vec![(vec![g1], 0.0f64)];
            while let Some((path, log_path)) = stack.pop() {
                if path.len() == len {
                    let log_lik = path.iter().enumerate().map(|(j, &t)| emit(j, t)).sum();
                    scored.push(PathScore {
                        path,
                        log_path,
                        log_lik,
                    });
                    continue;
                }
                let t = *path.last().unwrap();
                // Push in reverse so paths pop in lexicographic order.
                for o in (0..s + 2).rev() {
                    let lp = step_logp(k, t, o);
                    if lp == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut next = path.clone();
                    next.push(t + o);
                    stack.push((next, log_path + lp));
                }
            }

            let log_lik = lse(scored.iter().map(|p| p.log_path + p.log_lik));
            let prior = model.weights()[k].ln() + model.init_row(k)[g1].ln();
            joint_terms.push(prior + log_lik);

            let mut gamma = vec![vec![0.0; t_len]; len];
            let rows = if topo.tie_transitions { 1 } else { t_len };
            let mut step_counts = vec![vec![0.0; s + 2]; rows];
            for p in &scored {
                let joint = prior + p.log_path + p.log_lik;
                if best.as_ref().is_none_or(|b| joint > b.0) {
                    best = Some((joint, k, g1, p.path.clone(), delta.clone()));
                }
                if log_lik == f64::NEG_INFINITY {
                    continue;
                }
                let w = (p.log_path + p.log_lik - log_lik).exp();
                for (j, &t) in p.path.iter().enumerate() {
                    gamma[j][t] += w;
                }
                for pair in p.path.windows(2) {
                    let row = if topo.tie_transitions { 0 } else { pair[0] };
                    step_counts[row][pair[1] - pair[0]] += w;
                }
            }
            if scored.is_empty() && best.is_none() {
                best = Some((f64::NEG_INFINITY, k, g1, vec![g1], delta.clone()));
            }
            cutsets.push(CutsetEnumeration {
                component: k,
                start: g1,
                log_lik,
                gamma,
                step_counts,
            });
        }
    }
    let log_evidence = lse(joint_terms.iter().copied());
    let posterior = joint_terms
        .chunks(m)
        .map(|row| row.iter().map(|v| (v - log_evidence).exp()).collect())
        .collect();
    let (log_joint, component, start, path, offset) = best.expect("at least one cut-set value");
    Ok(Enumeration {
        log_evidence,
        posterior,
        cutsets,
        best: Alignment {
            curve_id: curve.id().to_string(),
            component,
            start,
            path,
            offset,
            log_joint,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{curve_loglik, emission_logdensity};
    use crate::model::{ModelParts, Topology};

    #[test]
    fn guard_refuses_large_instances() {
        let topo = Topology {
            components: 1,
            dims: 1,
            grid_len: 60,
            max_shift: 1,
            max_skip: 1,
            allow_stay: true,
            offsets_enabled: false,
            tie_transitions: true,
        };
        let model = WarpMixtureModel::from_parts(ModelParts {
            topology: topo,
            weights: vec![1.0],
            init: vec![vec![1.0]],
            steps: vec![vec![0.2, 0.6, 0.2]],
            means: vec![0.0; 60],
            variances: vec![1.0; 60],
            variance_floor: vec![0.5],
        })
        .unwrap();
        let c = Curve::from_flat("y", 1, vec![0.0; 30]).unwrap();
        assert!(matches!(
            brute_force_loglik(&c, &model),
            Err(InferenceError::TooManyPaths { .. })
        ));
    }

    #[test]
    fn hand_summed_two_paths() {
        // L = 2, S = 1, stay off, grid of 3: paths (0,1) and (0,2).
        let topo = Topology {
            components: 1,
            dims: 1,
            grid_len: 3,
            max_shift: 1,
            max_skip: 1,
            allow_stay: false,
            offsets_enabled: false,
            tie_transitions: true,
        };
        let means = vec![0.0, 1.0, 3.0];
        let model = WarpMixtureModel::from_parts(ModelParts {
            topology: topo,
            weights: vec![1.0],
            init: vec![vec![1.0]],
            steps: vec![vec![0.0, 0.7, 0.3]],
            means: means.clone(),
            variances: vec![1.0; 3],
            variance_floor: vec![0.5],
        })
        .unwrap();
        let c = Curve::from_flat("y", 1, vec![0.2, 2.0]).unwrap();
        let e = |y: f64, t: usize| emission_logdensity(&[y], &[means[t]], &[1.0]).unwrap();
        let by_hand =
            (0.7 * (e(0.2, 0) + e(2.0, 1)).exp() + 0.3 * (e(0.2, 0) + e(2.0, 2)).exp()).ln();
        let enumerated = brute_force_loglik(&c, &model).unwrap();
        assert!((enumerated - by_hand).abs() < 1e-12);
        let recursive = curve_loglik(&c, &model).unwrap();
        assert!((recursive - by_hand).abs() < 1e-12);
    }
}
