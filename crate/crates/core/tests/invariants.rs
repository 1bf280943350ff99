mod common;

use common::{random_instance, random_model, Instance};
use curvewarp::em::{
    e_step, fit, fit_from, init_from_random_curves, log_prior, m_step, DataSummary,
};
use curvewarp::synth::{make_template_model, sample_curve, sample_dataset, Shape, TemplateSpec};
use curvewarp::{heldout_logp, validate_config, viterbi_align, CurveSet, ModelConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(components: usize) -> TemplateSpec {
    TemplateSpec {
        components,
        dims: 2,
        max_shift: 4,
        max_skip: 1,
        allow_stay: true,
        grid_len: 24,
        shape: Shape::Bump,
        separation: 2.0,
        noise_var: 0.1,
    }
}

/// Half-width of a 3-sigma binomial interval on a frequency estimated from `n` draws.
fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn start_frequencies_match_init_rows() {
    let mut parts = make_template_model(&spec(1)).unwrap().into_parts();
    parts.init = vec![vec![0.1, 0.2, 0.3, 0.4]];
    let model = curvewarp::WarpMixtureModel::from_parts(parts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[sample_curve(&model, 1, &mut rng, 0.0).unwrap().1.start] += 1;
    }
    for (c, p) in counts.iter().zip([0.1, 0.2, 0.3, 0.4]) {
        let freq = *c as f64 / n as f64;
        assert!((freq - p).abs() < three_sigma(p, n), "{freq} vs {p}");
    }
}

#[test]
fn component_frequencies_match_weights() {
    let mut parts = make_template_model(&spec(3)).unwrap().into_parts();
    parts.weights = vec![0.5, 0.3, 0.2];
    let model = curvewarp::WarpMixtureModel::from_parts(parts).unwrap();
    let n = 20_000;
    let (_, latents) =
        sample_dataset(&model, n, 1..=3, &mut ChaCha8Rng::seed_from_u64(12), 0.0).unwrap();
    for (k, p) in [0.5, 0.3, 0.2].into_iter().enumerate() {
        let freq = latents.iter().filter(|l| l.component == k).count() as f64 / n as f64;
        assert!((freq - p).abs() < three_sigma(p, n), "{freq} vs {p}");
    }
}

#[test]
fn step_frequencies_match_table() {
    let mut parts = make_template_model(&spec(1)).unwrap().into_parts();
    parts.steps = vec![vec![0.2, 0.5, 0.3]];
    let model = curvewarp::WarpMixtureModel::from_parts(parts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut counts = [0usize; 3];
    let n = 50_000;
    for _ in 0..n {
        let (_, l) = sample_curve(&model, 2, &mut rng, 0.0).unwrap();
        counts[l.path[1] - l.path[0]] += 1;
    }
    for (c, p) in counts.iter().zip([0.2, 0.5, 0.3]) {
        let freq = *c as f64 / n as f64;
        assert!((freq - p).abs() < three_sigma(p, n), "{freq} vs {p}");
    }
}

#[test]
fn true_model_beats_single_component_collapse() {
    let model = make_template_model(&TemplateSpec {
        separation: 3.0,
        ..spec(3)
    })
    .unwrap();
    let (data, _) =
        sample_dataset(&model, 300, 6..=12, &mut ChaCha8Rng::seed_from_u64(14), 0.0).unwrap();
    let truth = heldout_logp(&model, &data).unwrap();
    for k in 0..3 {
        let mut parts = model.clone().into_parts();
        let block = parts.topology.grid_len * parts.topology.dims;
        let means = parts.means[k * block..(k + 1) * block].to_vec();
        let vars = parts.variances[k * block..(k + 1) * block].to_vec();
        for c in 0..3 {
            parts.means[c * block..(c + 1) * block].copy_from_slice(&means);
            parts.variances[c * block..(c + 1) * block].copy_from_slice(&vars);
        }
        let collapsed = curvewarp::WarpMixtureModel::from_parts(parts).unwrap();
        assert!(truth > heldout_logp(&collapsed, &data).unwrap());
    }
}

fn small_config(inst: &Instance) -> ModelConfig {
    ModelConfig {
        components: inst.components,
        max_shift: inst.max_shift,
        max_skip: inst.max_skip,
        allow_stay: inst.allow_stay,
        offsets_enabled: false,
        tie_transitions: inst.tied,
        max_iters: 15,
        tol: 1e-12,
        ..Default::default()
    }
}

fn sampled_data(seed: u64, n: usize) -> (Instance, CurveSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inst, _) = random_instance(&mut rng, 5);
    inst.offsets = false;
    inst.grid_len = inst.max_shift + 4 * (inst.max_skip + 1);
    let model = random_model(&mut rng, inst);
    let (data, _) = sample_dataset(&model, n, 1..=5, &mut rng, 0.0).unwrap();
    (inst, data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn sampled_paths_obey_the_topology(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inst, _) = random_instance(&mut rng, 6);
        let model = random_model(&mut rng, inst);
        let len = rng.random_range(1..=inst.grid_len + 1 - inst.max_shift);
        let (curve, l) = sample_curve(&model, len, &mut rng, 1.0).unwrap();
        prop_assert_eq!(curve.len(), len);
        prop_assert_eq!(l.path[0], l.start);
        prop_assert!(l.start < inst.max_shift && l.component < inst.components);
        prop_assert!(*l.path.last().unwrap() < inst.grid_len);
        for w in l.path.windows(2) {
            let step = w[1] - w[0];
            prop_assert!(step <= inst.max_skip + 1 && (step > 0 || inst.allow_stay));
        }
    }

    #[test]
    fn em_objective_never_decreases_without_offsets(seed in any::<u64>()) {
        let (inst, data) = sampled_data(seed, 12);
        prop_assume!(data.len() >= inst.components);
        let cfg = small_config(&inst);
        let result = fit(&data, &cfg, seed).unwrap();
        for w in result.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn m_step_does_not_lower_the_objective(seed in any::<u64>()) {
        let (inst, data) = sampled_data(seed, 10);
        prop_assume!(data.len() >= inst.components);
        let valid = validate_config(&small_config(&inst), &data).unwrap();
        let init = init_from_random_curves(&data, &valid, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let summary = DataSummary::new(&data, &valid);
        let (stats, before) = e_step(&data, &init, &valid).unwrap();
        prop_assert!((before - (stats.log_lik + log_prior(&init, valid.dirichlet_alpha))).abs() < 1e-9 * before.abs().max(1.0));
        let next = m_step(&stats, &init, &valid, &summary);
        let (_, after) = e_step(&data, &next, &valid).unwrap();
        prop_assert!(after >= before - 1e-8);
        let again = fit_from(&data, &valid, init, seed).unwrap();
        prop_assert_eq!(again.objective_trace[0], before);
    }

    #[test]
    fn offsets_make_scores_translation_invariant(seed in any::<u64>(), shift in -100.0f64..100.0) {
        let model = make_template_model(&spec(2)).unwrap();
        let mut parts = model.into_parts();
        parts.topology.offsets_enabled = true;
        let model = curvewarp::WarpMixtureModel::from_parts(parts).unwrap();
        let (data, _) = sample_dataset(&model, 5, 3..=8, &mut ChaCha8Rng::seed_from_u64(seed), 2.0).unwrap();
        let moved = data.translated(&[shift, -0.5 * shift]);
        let a = heldout_logp(&model, &data).unwrap();
        let b = heldout_logp(&model, &moved).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
        for (c, m) in data.curves().iter().zip(moved.curves()) {
            let (x, y) = (viterbi_align(c, &model).unwrap(), viterbi_align(m, &model).unwrap());
            prop_assert_eq!((x.component, x.start, &x.path), (y.component, y.start, &y.path));
        }
    }
}
