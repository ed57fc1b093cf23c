use std::sync::Arc;

use phidiv::model::{
    integrate_against, Component, Exponential, GaussianMean, GaussianMeanVector, Mixture, ModelConfig,
    ParametricModel, Regime,
};
use phidiv::numerics::Ecdf;
use statrs::distribution::{ContinuousCDF, Normal};

type Case = (Arc<dyn ParametricModel>, Vec<Vec<f64>>);

fn builtins() -> Vec<Case> {
    let mix = Mixture::two_known(Component::normal(0.0, 1.0), Component::normal(0.5, 1.0), Regime::Probability, None)
        .unwrap();
    let free = Mixture::new(
        vec![Component::normal(0.0, 1.0), Component::free(phidiv::model::ComponentFamily::NormalMean { sd: 1.0 }, vec![2.0])],
        Regime::Probability,
        None,
    )
    .unwrap();
    vec![
        (
            Arc::new(GaussianMean::unbounded()),
            vec![vec![-2.0], vec![-0.5], vec![0.0], vec![0.7], vec![3.0]],
        ),
        (
            Arc::new(Exponential::default()),
            vec![vec![0.3], vec![0.8], vec![1.0], vec![2.5], vec![6.0]],
        ),
        (
            Arc::new(GaussianMeanVector::unbounded(2)),
            vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![0.3, 0.2], vec![-2.0, 0.5], vec![0.1, 3.0]],
        ),
        (
            Arc::new(mix),
            vec![vec![0.1], vec![0.3], vec![0.5], vec![0.7], vec![0.9]],
        ),
        (
            Arc::new(free),
            vec![vec![0.2, 1.5], vec![0.5, 2.0], vec![0.7, 3.0], vec![0.4, -1.0], vec![0.6, 1.0]],
        ),
    ]
}

#[test]
fn score_has_zero_mean_and_fisher_matches() {
    for (m, thetas) in builtins() {
        let d = m.dim();
        for theta in thetas {
            let mut s = vec![0.0; d];
            let e = m
                .integrate_against(
                    &theta,
                    &mut |x, out| {
                        m.score(&theta, x, &mut s);
                        out[..d].copy_from_slice(&s);
                        for i in 0..d {
                            for j in 0..d {
                                out[d + i * d + j] = s[i] * s[j];
                            }
                        }
                    },
                    d + d * d,
                )
                .unwrap();
            let info = m.fisher_information(&theta).unwrap();
            for i in 0..d {
                assert!(e[i].abs() < 1e-6, "{} at {theta:?}: mean score {}", m.name(), e[i]);
                for j in 0..d {
                    assert!(
                        (e[d + i * d + j] - info[(i, j)]).abs() < 1e-5,
                        "{} at {theta:?}: I[{i},{j}]",
                        m.name()
                    );
                }
            }
        }
    }
}

#[test]
fn mixture_fisher_information_by_independent_sum() {
    let m = Mixture::two_known(Component::normal(0.0, 1.0), Component::normal(0.5, 1.0), Regime::Probability, None)
        .unwrap();
    let n0 = Normal::new(0.0, 1.0).unwrap();
    let n1 = Normal::new(0.5, 1.0).unwrap();
    use statrs::distribution::Continuous;
    for theta in [0.0, 0.25, 0.8] {
        // ∫ (p₁ − p₀)² / p_θ by the midpoint rule on [−12, 12].
        let h = 1e-3;
        let mut acc = 0.0;
        let mut x = -12.0 + 0.5 * h;
        while x < 12.0 {
            let (a, b) = (n0.pdf(x), n1.pdf(x));
            acc += (b - a) * (b - a) / ((1.0 - theta) * a + theta * b) * h;
            x += h;
        }
        let info = m.fisher_information(&[theta]).unwrap()[(0, 0)];
        assert!((info - acc).abs() < 1e-7, "theta={theta}: {info} vs {acc}");
    }
    // At θ = 0 the information is e^{1/4} − 1.
    let i0 = m.fisher_information(&[0.0]).unwrap()[(0, 0)];
    assert!((i0 - (0.25f64.exp() - 1.0)).abs() < 1e-8, "{i0}");
}

#[test]
fn samplers_follow_their_distributions() {
    let tol = 1.95 / 100.0 * 1.2;
    let std = Normal::new(0.0, 1.0).unwrap();
    let g = GaussianMean::unbounded();
    let s = g.sample(&[1.3], 10_000, 5).unwrap();
    let ks = Ecdf::new(s.values()).ks_distance(&|x: f64| std.cdf(x - 1.3));
    assert!(ks < tol, "gaussian KS {ks}");

    let e = Exponential::default();
    let s = e.sample(&[2.0], 10_000, 6).unwrap();
    let ks = Ecdf::new(s.values()).ks_distance(&|x: f64| if x < 0.0 { 0.0 } else { 1.0 - (-2.0 * x).exp() });
    assert!(ks < tol, "exponential KS {ks}");

    let v = GaussianMeanVector::unbounded(2);
    let s = v.sample(&[0.5, -1.0], 10_000, 7).unwrap();
    let second: Vec<f64> = s.iter().map(|x| x[1]).collect();
    let ks = Ecdf::new(&second).ks_distance(&|x: f64| std.cdf(x + 1.0));
    assert!(ks < tol, "vector KS {ks}");

    let m = Mixture::two_known(Component::normal(0.0, 1.0), Component::normal(0.5, 1.0), Regime::Probability, None)
        .unwrap();
    let s = m.sample(&[0.3], 10_000, 8).unwrap();
    let ks = Ecdf::new(s.values()).ks_distance(&|x: f64| 0.7 * std.cdf(x) + 0.3 * std.cdf(x - 0.5));
    assert!(ks < tol, "mixture KS {ks}");
}

#[test]
fn signed_mixture_keeps_unit_mass() {
    let m = Mixture::two_known(
        Component::normal(0.0, 1.0),
        Component::normal(0.5, 1.0),
        Regime::Signed,
        Some((-0.5, 1.5)),
    )
    .unwrap();
    for theta in [-0.4, -0.1, 1.2, 1.45] {
        let mass = integrate_against(&m, &[theta], |_| 1.0).unwrap();
        assert!((mass - 1.0).abs() < 1e-8, "theta={theta}: {mass}");
        assert!(m.sample(&[theta], 10, 1).is_err());
    }
}

#[test]
fn config_round_trip() {
    let text = r#"
        name = "two_mixture"
        regime = "extended"
        p0 = { family = "normal", mean = 0.0, sd = 1.0 }
        p1 = { family = "normal", mean = 0.5, sd = 1.0 }
    "#;
    let cfg: ModelConfig = toml::from_str(text).unwrap();
    let m = cfg.build().unwrap();
    assert_eq!(m.regime(), Regime::Signed);
    assert_eq!(m.param_box().lower, vec![-0.5]);
}
