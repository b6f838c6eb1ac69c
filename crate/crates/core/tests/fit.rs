use std::sync::Arc;

use dsm_geom::dataset::{DataSet, Distribution, Statistic};
use dsm_geom::error::NoConvergenceReason;
use dsm_geom::fit::{closed_form_fit, fit, FitOptions};
use dsm_geom::models::{by_name, GaussianKl, GrandCanonical, Gumbel, RegressionDLambda, RegressionLs, VmfSphere, MODEL_NAMES};
use dsm_geom::reparam::{ChartMap, GaussianCanonicalMap, Reparametrised};
use dsm_geom::{divergence_gradient, Derivatives, GeomError, ModelDefinition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn gaussian_kl_moment_fit() {
    let x = DataSet::moments(&[(Statistic::Mean, 1.5), (Statistic::SecondMoment, 4.0 + 1.5 * 1.5)]);
    let r = fit(&GaussianKl::default(), &x, &[0.0, 1.0], &FitOptions::default()).unwrap();
    assert!(r.converged);
    let t = &r.theta_star.coords;
    assert!((t[0] - 1.5).abs() < 1e-6 && (t[1] - 2.0).abs() < 1e-6, "{t:?}");
}

#[test]
fn least_squares_fit() {
    let x = DataSet::regression(vec![(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]).unwrap();
    let r = fit(&RegressionLs::default(), &x, &[0.0, 0.0], &FitOptions::default()).unwrap();
    let t = &r.theta_star.coords;
    assert!((t[0] - 2.0).abs() < 1e-8 && (t[1] - 1.0).abs() < 1e-8, "{t:?}");
}

/// N(β, μ) and E(β, μ) for Bose occupations.
fn gce_totals(levels: &[f64], beta: f64, mu: f64) -> (f64, f64) {
    levels.iter().fold((0.0, 0.0), |(n, e), &eps| {
        let occ = 1.0 / ((beta * (eps - mu)).exp() - 1.0);
        (n + occ, e + occ * eps)
    })
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn gce_fit_satisfies_fibre_conditions() {
    let levels = [1.0, 2.0, 3.0];
    let (n_target, e_target) = (1.5, 2.8);
    let x = DataSet::moments(&[(Statistic::OccupationTotal, n_target), (Statistic::EnergyTotal, e_target)]);
    let m = GrandCanonical::new(&levels).unwrap();
    let r = fit(&m, &x, &[1.0, 0.0], &FitOptions::default()).unwrap();
    let (beta, mu) = (r.theta_star.coords[0], r.theta_star.coords[1]);
    let (n, e) = gce_totals(&levels, beta, mu);
    assert!((n - n_target).abs() < 1e-8 && (e - e_target).abs() < 1e-8, "N = {n}, E = {e}");

    // Brute force: for each β the μ with N = 1.5, then the β with E = 2.8.
    let mu_of = |b: f64| bisect(-50.0, 1.0 - 1e-12, |mu| gce_totals(&levels, b, mu).0 - n_target);
    let b_ref = bisect(0.05, 20.0, |b| gce_totals(&levels, b, mu_of(b)).1 - e_target);
    let mu_ref = mu_of(b_ref);
    assert!((beta - b_ref).abs() < 1e-7 && (mu - mu_ref).abs() < 1e-7, "{beta},{mu} vs {b_ref},{mu_ref}");
}

#[test]
fn closed_form_regression_two_points() {
    let x = DataSet::regression(vec![(0.0, 0.0), (1.0, 2.0)]).unwrap();
    let p = closed_form_fit(&RegressionLs::default(), &x).unwrap();
    assert!((p.coords[0] - 2.0).abs() < 1e-12 && p.coords[1].abs() < 1e-12, "{p:?}");
}

#[test]
fn closed_form_gumbel_on_exponential_data() {
    let x = DataSet::analytic(Distribution::Exponential { rate: 1.0 });
    let p = closed_form_fit(&Gumbel::default(), &x).unwrap();
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let mu = (2.0 / (1.0 + 5f64.sqrt())) * ((3.0 + 5f64.sqrt()) / 2.0).ln();
    assert!((p.coords[0] - golden).abs() < 1e-12, "{p:?}");
    assert!((p.coords[1] - mu).abs() < 1e-12, "{p:?}");
    // The formula evaluates to 0.59481; a rounded 0.5945 is an arithmetic slip.
    assert!((p.coords[0] - 1.6180).abs() < 1e-4 && (p.coords[1] - 0.5948).abs() < 1e-4);
}

#[test]
fn closed_form_gaussian_self() {
    let x = DataSet::analytic(Distribution::Gaussian { mean: -0.7, sd: 2.5 });
    let p = closed_form_fit(&GaussianKl::default(), &x).unwrap();
    assert_eq!(p.coords, vec![-0.7, 2.5]);
}

#[test]
fn closed_form_unsupported_is_reported() {
    let x = DataSet::moments(&[(Statistic::OccupationTotal, 1.0), (Statistic::EnergyTotal, 2.0)]);
    let err = closed_form_fit(&GrandCanonical::new(&[1.0, 2.0, 3.0]).unwrap(), &x).unwrap_err();
    assert!(matches!(err, GeomError::Unsupported(_)), "{err}");
}

#[test]
fn start_outside_chart_is_rejected() {
    let x = DataSet::analytic(Distribution::Gaussian { mean: 0.0, sd: 1.0 });
    let err = fit(&GaussianKl::default(), &x, &[0.0, -1.0], &FitOptions::default()).unwrap_err();
    assert!(matches!(err, GeomError::Domain { .. }), "{err}");
}

#[test]
fn fit_from_closed_form_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for name in MODEL_NAMES {
        let m = by_name(name, &Default::default()).unwrap().model;
        for _ in 0..5 {
            let theta = m.sample_point(&mut rng);
            let x = m.fibre(&theta, 1).unwrap().remove(0);
            let start = match m.closed_form_fit(&x) {
                Ok(s) => s,
                Err(GeomError::Unsupported(_)) => theta.clone(),
                Err(e) => panic!("{name}: {e}"),
            };
            let r = fit(m.as_ref(), &x, &start, &FitOptions::default()).unwrap();
            assert!(r.converged && r.iterations <= 2, "{name}: {} iterations", r.iterations);
        }
    }
}

#[test]
fn fit_is_fibre_consistent() {
    let opts = FitOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for name in MODEL_NAMES {
        let m = by_name(name, &Default::default()).unwrap().model;
        let theta = m.sample_point(&mut rng);
        let x = m.fibre(&theta, 1).unwrap().remove(0);
        let r = fit(m.as_ref(), &x, &theta, &opts).unwrap();
        let star = &r.theta_star.coords;
        let members = match m.fibre(star, 3) {
            Ok(v) => v,
            // Gumbel fibres exist only on a curve; θ* lies on it only up to rounding.
            Err(GeomError::FibreUnavailable(_)) if name == "gumbel" => m.fibre(&theta, 3).unwrap(),
            Err(e) => panic!("{name}: {e}"),
        };
        for member in members {
            let g = divergence_gradient(m.as_ref(), &member, star, &Derivatives::default()).unwrap();
            assert!(g.amax() <= 10.0 * opts.grad_tol, "{name}: {g}");
        }
    }
}

#[test]
fn fit_converges_from_the_chart_centre() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for name in ["gaussian-kl", "gaussian-sumsq", "regression-ls", "regression-dlambda", "gce", "vmf-cylinder"] {
        let m = by_name(name, &Default::default()).unwrap().model;
        for _ in 0..5 {
            let theta = m.sample_point(&mut rng);
            let x = m.fibre(&theta, 1).unwrap().remove(0);
            let r = fit(m.as_ref(), &x, &m.chart().sample_centre(), &FitOptions::default()).unwrap();
            let gap = r.theta_star.coords.iter().zip(&theta).fold(0.0_f64, |a, (p, q)| a.max((p - q).abs()));
            assert!(gap < 1e-6, "{name}: {:?} vs {theta:?}", r.theta_star.coords);
        }
    }
}

#[test]
fn canonical_chart_fit_agrees() {
    let inner: Arc<dyn ModelDefinition> = Arc::new(GaussianKl::default());
    let map = Arc::new(GaussianCanonicalMap::default());
    let canonical = Reparametrised::new(inner.clone(), map.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let mean = rng.random_range(-1.5..1.5);
        let sd = rng.random_range(0.5..2.5);
        let x = DataSet::analytic(Distribution::TwoPoint { center: mean, half_width: sd });
        let a = fit(inner.as_ref(), &x, &[0.0, 1.0], &FitOptions::default()).unwrap();
        let b = fit(&canonical, &x, &map.forward(&[0.0, 1.0]), &FitOptions::default()).unwrap();
        let z = map.forward(&a.theta_star.coords);
        for (p, q) in z.iter().zip(&b.theta_star.coords) {
            assert!((p - q).abs() < 1e-6, "{z:?} vs {:?}", b.theta_star.coords);
        }
    }
}

#[test]
fn dlambda_and_least_squares_share_the_model_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ls = RegressionLs::default();
    let dl = RegressionDLambda::new(2.5).unwrap();
    for _ in 0..10 {
        let couples: Vec<(f64, f64)> = (0..5)
            .map(|i| (i as f64 + rng.random_range(-0.3..0.3), rng.random_range(-3.0..3.0)))
            .collect();
        let x = DataSet::regression(couples).unwrap();
        let a = fit(&ls, &x, &[0.0, 0.0], &FitOptions::default()).unwrap();
        let b = fit(&dl, &x, &[0.0, 0.0], &FitOptions::default()).unwrap();
        for (p, q) in a.theta_star.coords.iter().zip(&b.theta_star.coords) {
            assert!((p - q).abs() < 1e-8);
        }
    }
}

#[test]
fn vmf_antipode_is_a_maximum() {
    let m = VmfSphere::new(2.0).unwrap();
    let (t, p) = (1.0_f64, 0.5_f64);
    let dir = [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()];
    let x = DataSet::moments(&[(Statistic::X1, dir[0]), (Statistic::X2, dir[1]), (Statistic::X3, dir[2])]);
    let antipode = [std::f64::consts::PI - t, p + std::f64::consts::PI];
    let opts = FitOptions {
        grad_tol: 1e-8,
        ..FitOptions::default()
    };
    match fit(&m, &x, &antipode, &opts) {
        Err(GeomError::NoConvergence { reason, .. }) => assert_eq!(reason, NoConvergenceReason::SaddleOrMax),
        other => panic!("expected SaddleOrMax, got {other:?}"),
    }
    // From nearby the minimum is found.
    let r = fit(&m, &x, &[1.3, 0.2], &FitOptions::default()).unwrap();
    assert!((r.theta_star.coords[0] - t).abs() < 1e-7 && (r.theta_star.coords[1] - p).abs() < 1e-7);
}
