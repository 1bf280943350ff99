//! Held-out scoring and model-variant comparison.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{derive_seed, fit_multi_start};
use crate::error::{ConfigError, ConfigIssue, Result};
use crate::inference::{check_curve, Prepared};
use crate::model::{validate_config, CurveSet, ModelConfig, WarpMixtureModel};

/// Mean held-out log density per scalar measurement, `sum log P(Y_n) / sum L_n D`.
pub fn heldout_logp(model: &WarpMixtureModel, data: &CurveSet) -> Result<f64> {
    let prep = Prepared::new(model);
    for c in data.curves() {
        check_curve(c, model.topology())?;
    }
    let per_curve: Vec<f64> = data
        .curves()
        .par_iter()
        .map(|c| prep.curve_loglik(c))
        .collect();
    Ok(per_curve.iter().sum::<f64>() / data.measurement_count() as f64)
}

/// Pooled residual standard deviation along each curve's Viterbi alignment,
/// after removing the alignment's offset.
pub fn within_cluster_stdev(model: &WarpMixtureModel, data: &CurveSet) -> Result<f64> {
    let prep = Prepared::new(model);
    for c in data.curves() {
        check_curve(c, model.topology())?;
    }
    let sums: Vec<f64> = data
        .curves()
        .par_iter()
        .map(|c| {
            let a = prep.align(c);
            c.points()
                .zip(&a.path)
                .map(|(y, &t)| {
                    let mu = model.mean(a.component, t);
                    y.iter()
                        .zip(mu)
                        .zip(&a.offset)
                        .map(|((y, m), dl)| (y - dl - m).powi(2))
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    Ok((sums.iter().sum::<f64>() / data.measurement_count() as f64).sqrt())
}

/// Which time transformations a configuration allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    None,
    Shift,
    Warp,
    Both,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::None, Variant::Shift, Variant::Warp, Variant::Both];

    /// Derives this variant from `base`: shifting keeps `base.max_shift`
    /// (otherwise 1), warping keeps `base.max_skip` and `base.allow_stay`
    /// (otherwise linear paths). Everything else is inherited.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let (shift, warp) = match self {
            Variant::None => (false, false),
            Variant::Shift => (true, false),
            Variant::Warp => (false, true),
            Variant::Both => (true, true),
        };
        ModelConfig {
            max_shift: if shift { base.max_shift } else { 1 },
            max_skip: if warp { base.max_skip } else { 0 },
            allow_stay: warp && base.allow_stay,
            ..base.clone()
        }
    }

    pub fn classify(cfg: &ModelConfig) -> Variant {
        let shift = cfg.max_shift > 1;
        let warp = cfg.max_skip > 0 || cfg.allow_stay;
        match (shift, warp) {
            (false, false) => Variant::None,
            (true, false) => Variant::Shift,
            (false, true) => Variant::Warp,
            (true, true) => Variant::Both,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::None => "none",
            Variant::Shift => "shift",
            Variant::Warp => "warp",
            Variant::Both => "both",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Variant::None),
            "shift" => Ok(Variant::Shift),
            "warp" => Ok(Variant::Warp),
            "both" => Ok(Variant::Both),
            other => Err(format!(
                "unknown variant {other:?} (expected none, shift, warp or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub per_fold_logp: Vec<f64>,
    pub mean_logp: f64,
    pub config_label: String,
}

/// Seeded shuffle of `0..n` cut into `folds` contiguous blocks; returns the
/// test indices of each fold. Block sizes differ by at most one.
pub fn fold_assignments(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut block = order[start..start + size].to_vec();
        block.sort_unstable();
        out.push(block);
        start += size;
    }
    out
}

fn check_folds(data: &CurveSet, folds: usize) -> Result<()> {
    if folds < 2 || data.len() < folds {
        return Err(ConfigError::from(ConfigIssue::BadFolds {
            folds,
            curves: data.len(),
        })
        .into());
    }
    Ok(())
}

/// K-fold cross-validated held-out logP. The grid is sized from the full
/// dataset so every fold shares one configuration.
pub fn cross_validate(
    data: &CurveSet,
    cfg: &ModelConfig,
    folds: usize,
    n_starts: usize,
    seed: u64,
) -> Result<CvReport> {
    check_folds(data, folds)?;
    let valid = validate_config(cfg, data)?;
    let splits = fold_assignments(data.len(), folds, seed);
    run_folds(data, valid.config(), &splits, n_starts, seed)
}

fn run_folds(
    data: &CurveSet,
    cfg: &ModelConfig,
    splits: &[Vec<usize>],
    n_starts: usize,
    seed: u64,
) -> Result<CvReport> {
    let per_fold: Vec<Result<f64>> = splits
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let train: Vec<usize> = (0..data.len())
                .filter(|i| test.binary_search(i).is_err())
                .collect();
            let train = data.subset(&train);
            let test = data.subset(test);
            let fit = fit_multi_start(&train, cfg, n_starts, derive_seed(seed, 1000 + f as u64))?;
            heldout_logp(&fit.model, &test)
        })
        .collect();
    let per_fold_logp = per_fold.into_iter().collect::<Result<Vec<f64>>>()?;
    let mean_logp = per_fold_logp.iter().sum::<f64>() / per_fold_logp.len() as f64;
    Ok(CvReport {
        folds: splits.len(),
        per_fold_logp,
        mean_logp,
        config_label: Variant::classify(cfg).label().to_string(),
    })
}

/// Cross-validates each variant of `base` on identical fold splits and fit seeds.
pub fn compare_variants(
    data: &CurveSet,
    base: &ModelConfig,
    variants: &[Variant],
    folds: usize,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<CvReport>> {
    check_folds(data, folds)?;
    let splits = fold_assignments(data.len(), folds, seed);
    variants
        .iter()
        .map(|v| {
            let cfg = v.apply(base);
            let valid = validate_config(&cfg, data)?;
            let mut report = run_folds(data, valid.config(), &splits, n_starts, seed)?;
            report.config_label = v.label().to_string();
            Ok(report)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::emission_logdensity;
    use crate::model::{Curve, ModelParts, Topology};

    fn unit_model(mean: f64, var: f64) -> WarpMixtureModel {
        let topology = Topology {
            components: 1,
            dims: 1,
            grid_len: 1,
            max_shift: 1,
            max_skip: 0,
            allow_stay: false,
            offsets_enabled: false,
            tie_transitions: true,
        };
        WarpMixtureModel::from_parts(ModelParts {
            topology,
            weights: vec![1.0],
            init: vec![vec![1.0]],
            steps: vec![vec![0.0, 1.0]],
            means: vec![mean],
            variances: vec![var],
            variance_floor: vec![1e-6],
        })
        .unwrap()
    }

    #[test]
    fn single_point_score() {
        let m = unit_model(0.5, 2.0);
        let ds = CurveSet::new(vec![Curve::from_flat("a", 1, vec![1.0]).unwrap()]).unwrap();
        let expected = emission_logdensity(&[1.0], &[0.5], &[2.0]).unwrap();
        assert!((heldout_logp(&m, &ds).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn single_point_stdev() {
        let m = unit_model(0.5, 2.0);
        let ds = CurveSet::new(vec![Curve::from_flat("a", 1, vec![1.0]).unwrap()]).unwrap();
        assert_eq!(within_cluster_stdev(&m, &ds).unwrap(), 0.5);
        let exact = CurveSet::new(vec![Curve::from_flat("a", 1, vec![0.5]).unwrap()]).unwrap();
        assert_eq!(within_cluster_stdev(&m, &exact).unwrap(), 0.0);
    }

    #[test]
    fn duplicated_data_scores_the_same() {
        let m = unit_model(0.0, 1.0);
        let curves = vec![
            Curve::from_flat("a", 1, vec![0.3]).unwrap(),
            Curve::from_flat("b", 1, vec![-1.2]).unwrap(),
        ];
        let once = CurveSet::new(curves.clone()).unwrap();
        let twice = CurveSet::new(curves.iter().chain(&curves).cloned().collect()).unwrap();
        let a = heldout_logp(&m, &once).unwrap();
        let b = heldout_logp(&m, &twice).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn folds_partition_the_curves() {
        for (n, folds) in [(10, 10), (23, 5), (7, 2)] {
            let splits = fold_assignments(n, folds, 42);
            assert_eq!(splits.len(), folds);
            let mut all: Vec<usize> = splits.concat();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = splits.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        assert!(fold_assignments(10, 10, 1).iter().all(|f| f.len() == 1));
        assert_eq!(fold_assignments(20, 4, 9), fold_assignments(20, 4, 9));
    }

    #[test]
    fn variant_mapping() {
        let base = ModelConfig {
            max_shift: 4,
            max_skip: 2,
            allow_stay: true,
            offsets_enabled: true,
            ..Default::default()
        };
        let none = Variant::None.apply(&base);
        assert_eq!(
            (none.max_shift, none.max_skip, none.allow_stay),
            (1, 0, false)
        );
        assert!(none.offsets_enabled);
        let shift = Variant::Shift.apply(&base);
        assert_eq!(
            (shift.max_shift, shift.max_skip, shift.allow_stay),
            (4, 0, false)
        );
        let warp = Variant::Warp.apply(&base);
        assert_eq!(
            (warp.max_shift, warp.max_skip, warp.allow_stay),
            (1, 2, true)
        );
        assert_eq!(Variant::Both.apply(&base), base);
        for v in Variant::ALL {
            assert_eq!(Variant::classify(&v.apply(&base)), v);
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
    }
}
