use proptest::prelude::*;

use egd_core::analysis::{finite_difference_check, rate_study, Aggregation, BetaRule, Method, RateStudyConfig};
use egd_core::objectives::power_norm_objective;
use egd_core::rng::{self, streams};
use egd_core::stat_models::{
    generate_glm, generate_gmm, glm_population_gradient_low_snr, glm_population_loss_low_snr, GlmSpec,
    GmmSpec, ModelSpec,
};
use egd_core::{run_optimizer, Objective, OptimizerConfig, ParamVector, StepSchedule};

fn small_study(threads: usize) -> String {
    let spec = ModelSpec::Glm(GlmSpec::new(2, ParamVector::zeros(3), 1.0, 64).unwrap());
    let methods = vec![
        Method::egd(0.01, BetaRule::Fixed { beta: 0.9 }, 400),
        Method::gd(0.01, 400),
    ];
    let mut cfg = RateStudyConfig::new(spec, vec![64, 128, 256, 512], 5, methods);
    cfg.base_seed = 7;
    cfg.aggregation = Aggregation::GeometricMean;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let result = pool.install(|| rate_study(&cfg)).unwrap();
    result.to_csv() + &result.summary_json().unwrap()
}

#[test]
fn rate_study_output_is_independent_of_thread_count() {
    assert_eq!(small_study(1), small_study(3));
}

#[test]
fn datasets_are_reproducible_and_nested() {
    let spec = GmmSpec::new(ParamVector::axis(2, 0, 1.0), 1.0, 300).unwrap();
    let a = generate_gmm(&spec, 11).unwrap();
    let b = generate_gmm(&spec, 11).unwrap();
    assert_eq!(a, b);
    let small = generate_gmm(&spec.with_n(100), 11).unwrap();
    assert_eq!(&a.x[..200], &small.x[..]);
}

#[test]
fn sample_gradients_match_finite_differences() {
    let mut prng = rng::seeded(5, streams::PROBE);
    let points: Vec<ParamVector> = (0..100)
        .map(|i| {
            let r = 1e-3 * 2000f64.powf(i as f64 / 99.0);
            rng::on_sphere(&mut prng, &ParamVector::zeros(4), r)
        })
        .collect();
    let glm = generate_glm(&GlmSpec::new(2, ParamVector::zeros(4), 1.0, 400).unwrap(), 3).unwrap();
    let r = finite_difference_check(|t| glm.value(t), |t| glm.gradient(t), &points, 1e-6).unwrap();
    assert!(r.max_rel_err <= 1e-5, "glm {}", r.max_rel_err);
    let gmm = generate_gmm(&GmmSpec::new(ParamVector::zeros(4), 1.0, 400).unwrap(), 3).unwrap();
    let r = finite_difference_check(|t| gmm.value(t), |t| gmm.gradient(t), &points, 1e-6).unwrap();
    assert!(r.max_rel_err <= 1e-5, "gmm {}", r.max_rel_err);
}

#[test]
fn glm_sample_loss_and_gradient_average_to_population() {
    // Replicate means of the sample loss and gradient, compared with the
    // closed forms in units of their Monte Carlo standard error.
    let theta = ParamVector::from([0.3, -0.2, 0.1, 0.4]);
    let reps = 2000;
    let spec = GlmSpec::new(2, ParamVector::zeros(4), 1.0, 500).unwrap();
    let mut losses = vec![];
    let mut grads = vec![];
    for seed in 0..reps {
        let data = generate_glm(&spec, seed).unwrap();
        let (l, g) = data.value_and_gradient(&theta).unwrap();
        losses.push(l);
        grads.push(g);
    }
    let mean_se = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, (v / xs.len() as f64).sqrt())
    };
    let (m, se) = mean_se(&losses);
    let truth = glm_population_loss_low_snr(&theta, 2, 1.0).unwrap();
    assert!((m - truth).abs() <= 3.0 * se, "loss {m} vs {truth} (se {se})");
    let truth = glm_population_gradient_low_snr(&theta, 2).unwrap();
    for j in 0..4 {
        let comp: Vec<f64> = grads.iter().map(|g| g[j]).collect();
        let (m, se) = mean_se(&comp);
        assert!((m - truth[j]).abs() <= 3.0 * se, "grad[{j}] {m} vs {} (se {se})", truth[j]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unit_beta_schedule_matches_fixed_step_bitwise(
        eta in 1e-4f64..0.2,
        x0 in -1.5f64..1.5,
        p in 1u32..4,
    ) {
        prop_assume!(x0.abs() > 1e-3);
        let f = power_norm_objective(p, 1).unwrap();
        let theta0 = ParamVector::from([x0]);
        let run = |s| run_optimizer(&f, &theta0, &OptimizerConfig::new(s, 200), f.optimum()).unwrap();
        let a = run(StepSchedule::fixed(eta).unwrap());
        let b = run(StepSchedule::exponential(eta, 1.0).unwrap());
        prop_assert_eq!(a.len(), b.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            prop_assert_eq!(ra.theta[0].to_bits(), rb.theta[0].to_bits());
            prop_assert_eq!(ra.effective_step.to_bits(), rb.effective_step.to_bits());
        }
    }

    #[test]
    fn egd_step_sizes_grow_geometrically(eta in 1e-4f64..1.0, beta in 0.5f64..1.0, t in 0usize..50) {
        let s = StepSchedule::exponential(eta, beta).unwrap();
        let ratio = s.step_at(t + 1) / s.step_at(t);
        prop_assert!((ratio * beta - 1.0).abs() < 1e-12);
    }
}
