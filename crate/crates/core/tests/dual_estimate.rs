use std::sync::Arc;

use phidiv::divergence::Divergence;
use phidiv::dual::DualObjective;
use phidiv::estimate::{
    beta_star, composite_alternative_covariance, composite_estimate, dual_estimate, min_dual_estimate,
    sigma2_simple, ConstraintSpec, EstimateMode, EstimateOptions, VarianceSource,
};
use phidiv::model::{Exponential, GaussianMean, GaussianMeanVector, ParametricModel};
use phidiv::numerics::{maximize, FnObjective, OptimizeOptions, Region};
use proptest::prelude::*;

const GAMMAS: [f64; 5] = [-1.0, 0.0, 0.5, 1.0, 2.0];

type Case = (Arc<dyn ParametricModel>, Vec<(f64, f64)>);

#[test]
fn population_optimum_sits_at_the_truth() {
    let cases: Vec<Case> = vec![
        (
            Arc::new(GaussianMean::unbounded()),
            vec![(0.0, 0.3), (-1.0, -0.6), (0.8, 0.4), (1.5, 1.2), (-0.2, 0.1)],
        ),
        (
            Arc::new(Exponential::default()),
            vec![(1.0, 1.2), (2.0, 1.7), (0.5, 0.6), (1.5, 1.3), (3.0, 2.8)],
        ),
    ];
    for (m, pairs) in cases {
        for g in GAMMAS {
            let dual = DualObjective::new(m.clone(), Divergence::power(g)).unwrap();
            for &(theta, theta_t) in &pairs {
                let mut obj = FnObjective(|a: &[f64]| {
                    dual.population_objective(&[theta], a, &[theta_t])
                        .unwrap_or(f64::NEG_INFINITY)
                });
                let r = maximize(
                    &mut obj,
                    &Region::Box(m.param_box().clone()),
                    &[theta_t * 0.9 + theta * 0.1],
                    &OptimizeOptions::default(),
                );
                assert!(
                    (r.argopt[0] - theta_t).abs() < 1e-5,
                    "{} gamma={g} ({theta}, {theta_t}): {}",
                    m.name(),
                    r.argopt[0]
                );
                let at_truth = dual.population_objective(&[theta], &[theta_t], &[theta_t]).unwrap();
                assert!(at_truth > 0.0);
                let d = dual.divergence_quadrature(&[theta], &[theta_t]).unwrap();
                assert!((at_truth - d).abs() < 1e-6, "gamma={g}: {at_truth} vs {d}");
            }
            let zero = dual.population_objective(&[pairs[0].1], &[pairs[0].1], &[pairs[0].1]).unwrap();
            assert_eq!(zero, 0.0);
        }
    }
}

#[test]
fn exponential_modified_kl_closed_form() {
    // P_θT h(θ,α) = −log θ + θ/θ_T + log α − α/θ_T.
    let dual = DualObjective::new(Arc::new(Exponential::default()), Divergence::modified_kullback_leibler()).unwrap();
    for (t, a, tt) in [(1.0, 2.0, 2.0), (0.5, 1.5, 1.0), (3.0, 0.7, 2.0)] {
        let exact = -f64::ln(t) + t / tt + f64::ln(a) - a / tt;
        let v = dual.population_objective(&[t], &[a], &[tt]).unwrap();
        assert!((v - exact).abs() < 1e-8);
    }
}

#[test]
fn empirical_objective_approaches_the_population_one() {
    let m = Arc::new(GaussianMean::unbounded());
    let dual = DualObjective::new(m.clone(), Divergence::modified_kullback_leibler()).unwrap();
    let n = 100_000;
    let s = m.sample(&[0.0], n, 77).unwrap();
    let grid: Vec<f64> = (0..10).map(|i| -1.0 + i as f64 * 2.0 / 9.0).collect();
    for &t in &grid {
        for &a in &grid {
            let emp = dual.empirical_objective(&[t], &[a], &s);
            let pop = 0.5 * t * t - 0.5 * a * a;
            assert!((emp - pop).abs() < 5.0 / (n as f64).sqrt(), "({t}, {a}): {emp} vs {pop}");
        }
    }
}

#[test]
fn first_order_condition_at_interior_estimates() {
    let m = Arc::new(Exponential::default());
    for g in GAMMAS {
        let dual = DualObjective::new(m.clone(), Divergence::power(g)).unwrap();
        let s = m.sample(&[1.5], 400, 3).unwrap();
        let r = dual_estimate(&dual, &[1.2], &s, None, &EstimateMode::Global, &EstimateOptions::default()).unwrap();
        let mut grad = [0.0];
        dual.empirical_objective_grad(&[1.2], &r.estimate, &s, Some(&mut grad));
        assert!(grad[0].abs() < 1e-8, "gamma={g}: {}", grad[0]);
        let cov = r.covariance.unwrap();
        assert!(cov[(0, 0)] > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn local_ball_never_leaves_its_radius(seed in 0u64..10_000, shift in -1.0f64..1.0, gi in 0usize..5) {
        let m = Arc::new(GaussianMean::unbounded());
        let dual = DualObjective::new(m.clone(), Divergence::power(GAMMAS[gi])).unwrap();
        let n = 125;
        let s = m.sample(&[shift], n, seed).unwrap();
        let mode = EstimateMode::LocalBall { center: vec![0.0], radius: None };
        let r = min_dual_estimate(&dual, &s, None, &mode, &EstimateOptions::fast()).unwrap();
        prop_assert!(r.estimate[0].abs() <= 0.2 + 1e-12);
        prop_assert!(r.companion.as_ref().unwrap()[0].abs() <= 0.2 + 1e-12);
    }
}

#[test]
fn composite_pieces() {
    let m = Arc::new(GaussianMeanVector::unbounded(2));
    let dual = DualObjective::new(m.clone(), Divergence::chi2()).unwrap();
    let c = ConstraintSpec::fix_coordinates(m.param_box(), &[(1, 0.0)]).unwrap();

    // The projection of (0.4, 0.3) onto {θ₂ = 0} is (0.4, 0).
    let (b, d) = beta_star(&dual, &c, &[0.4, 0.3]).unwrap();
    assert!((b[0] - 0.4).abs() < 1e-5);
    assert!((d - ((0.09f64).exp() - 1.0) / 2.0).abs() < 1e-7);

    let s = m.sample(&[0.4, 0.3], 500, 12).unwrap();
    let r = composite_estimate(&dual, &c, &s, None, &EstimateMode::Global, &EstimateOptions::default()).unwrap();
    assert_eq!(r.estimate[1], 0.0);
    assert_eq!(r.covariance.as_ref().unwrap().shape(), (1, 1));
    let v = composite_alternative_covariance(&dual, &c, r.beta.as_ref().unwrap(), r.companion.as_ref().unwrap(), &s)
        .unwrap();
    assert_eq!(v.shape(), (3, 3));
    assert!((0..3).all(|i| v[(i, i)] > 0.0));
}

#[test]
fn empirical_sigma2_approaches_the_population_value() {
    let m = Arc::new(Exponential::default());
    let dual = DualObjective::new(m.clone(), Divergence::modified_kullback_leibler()).unwrap();
    // Var_θT log(p_1/p_θT)(X) = (θ_T − 1)²/θ_T².
    let pop = sigma2_simple(&dual, &[1.0], VarianceSource::Population(&[2.0])).unwrap();
    assert!((pop - 0.25).abs() < 1e-7);
    let s = m.sample(&[2.0], 20_000, 4).unwrap();
    let emp = sigma2_simple(&dual, &[1.0], VarianceSource::Sample(&s)).unwrap();
    assert!((emp - 0.25).abs() < 0.02, "{emp}");
}
