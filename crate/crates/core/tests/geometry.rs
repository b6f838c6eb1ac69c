use std::f64::consts::PI;
use std::sync::Arc;

use dsm_geom::geometry::{
    cauchy_schwarz_margins, codazzi, codazzi_residual, connection_at, cramer_rao_check, curvature, curvature_at,
    dual_connection, dual_connection_at, metric_at, metric_transform_check, ConnectionField, GeometryConfig,
    MetricField,
};
use dsm_geom::models::{
    by_name, GaussianKl, GaussianSumSq, GrandCanonical, Gumbel, RegressionDLambda, VmfCylinder, VmfSphere,
};
use dsm_geom::reparam::{GaussianCanonicalMap, GceCanonicalMap, IdentityMap};
use dsm_geom::tensor::Connection;
use dsm_geom::{GeomError, ModelDefinition};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Models whose fibre Hessians are constant; least-squares and Gumbel are not.
const CONDITION4: [&str; 6] = ["gaussian-kl", "gaussian-sumsq", "regression-dlambda", "gce", "vmf-sphere", "vmf-cylinder"];

fn cfg() -> GeometryConfig {
    GeometryConfig::default()
}

fn model(name: &str) -> Arc<dyn ModelDefinition> {
    by_name(name, &Default::default()).unwrap().model
}

fn near(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() < tol
}

#[test]
fn gaussian_metric_at_unit() {
    let m = metric_at(&GaussianKl::default(), &[0.0, 1.0], &cfg()).unwrap();
    assert!(near(&m.metric, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]), 1e-6), "{}", m.metric);
    assert!(m.deviation < 1e-6 && m.members == 3, "{}", m.deviation);
}

#[test]
fn sphere_metric() {
    let m = metric_at(&VmfSphere::new(4.0).unwrap(), &[PI / 3.0, 0.2], &cfg()).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 3.0]);
    assert!(near(&m.metric, &expected, 1e-5), "{}", m.metric);
}

#[test]
fn gumbel_violates_condition4() {
    let theta = Gumbel::point_for_rate(1.0);
    match metric_at(&Gumbel::default(), &theta, &cfg()) {
        Err(GeomError::Condition4Violated(ev)) => {
            // α²Tilt2 is ≈ 0.82 on the exponential member and 0.5 on the Gumbel member.
            let terms: Vec<f64> = ev.varying_terms.iter().map(|t| t[0].1).collect();
            assert!(terms.iter().any(|v| (v - 0.82).abs() < 0.01), "{terms:?}");
            assert!(terms.iter().any(|v| (v - 0.5).abs() < 0.01), "{terms:?}");
            let hi = ev.member_values.iter().copied().fold(f64::MIN, f64::max);
            let lo = ev.member_values.iter().copied().fold(f64::MAX, f64::min);
            assert!((hi / lo - 1.82 / 1.5).abs() < 0.01, "{:?}", ev.member_values);
        }
        other => panic!("expected Condition4Violated, got {other:?}"),
    }
}

#[test]
fn gaussian_connection() {
    let c = connection_at(&GaussianKl::default(), &[0.0, 2.0], &cfg()).unwrap().connection;
    // indices: 0 = μ, 1 = σ
    let expected = Connection::from_fn(2, |k, i, j| match (k, i, j) {
        (0, 0, 1) | (0, 1, 0) => -1.0,
        (1, 1, 1) => -1.5,
        _ => 0.0,
    });
    assert!(c.max_abs_diff(&expected) < 1e-4, "{:?}", c.nested());
}

#[test]
fn dlambda_connection_vanishes() {
    let m = RegressionDLambda::new(2.0).unwrap();
    for theta in [[0.0, 0.0], [1.5, -3.0]] {
        let c = connection_at(&m, &theta, &cfg()).unwrap().connection;
        assert!(c.max_abs() < 1e-8, "{:?}", c.nested());
    }
}

#[test]
fn sum_of_squares_connection() {
    let c = connection_at(&GaussianSumSq::new(1.0, 1.0).unwrap(), &[1.0, 2.0], &cfg()).unwrap().connection;
    let expected = Connection::from_fn(2, |k, i, j| if k == 1 && i == j { 0.5 } else { 0.0 });
    assert!(c.max_abs_diff(&expected) < 1e-4, "{:?}", c.nested());
}

#[test]
fn dlambda_dual_vanishes() {
    let d = dual_connection_at(&RegressionDLambda::new(2.0).unwrap(), &[0.3, 0.1], &cfg()).unwrap();
    assert!(d.max_abs() < 1e-6);
}

#[test]
fn gaussian_dual_is_torsionless() {
    let d = dual_connection_at(&GaussianKl::default(), &[0.0, 1.0], &cfg()).unwrap();
    assert!(d.torsion() < 1e-4, "{:?}", d.nested());
}

#[test]
fn cylinder_dual_by_hand() {
    let kappa = 1.0;
    let theta = [0.3, 2.0];
    let d = dual_connection_at(&VmfCylinder::new(kappa).unwrap(), &theta, &cfg()).unwrap();
    // g = diag(κ, λ⁻²), ω = 0: ϖ^d_ac = g^{dd} ∂_a g_dc, nonzero only for d = a = c = λ.
    let lambda = theta[1];
    let by_hand = lambda * lambda * (-2.0 / lambda.powi(3));
    assert!((d.get(1, 1, 1) - by_hand).abs() < 1e-4 && (by_hand + 1.0).abs() < 1e-12);
    let mut rest = d.clone();
    rest.set(1, 1, 1, 0.0);
    assert!(rest.max_abs() < 1e-4, "{:?}", d.nested());
}

#[test]
fn gce_is_flat() {
    let m = GrandCanonical::new(&[1.0, 2.0, 3.0]).unwrap();
    let r = curvature_at(&m, &[1.0, 0.2], &cfg()).unwrap();
    assert!(r.max_abs() < 1e-4, "{}", r.max_abs());
}

/// Levi-Civita symbols of the round sphere, written out independently.
fn sphere_levi_civita(theta: &[f64]) -> Connection {
    let (s, c) = (theta[0].sin(), theta[0].cos());
    Connection::from_fn(2, |k, i, j| match (k, i, j) {
        (0, 1, 1) => -s * c,
        (1, 0, 1) | (1, 1, 0) => c / s,
        _ => 0.0,
    })
}

#[test]
fn sphere_curvature() {
    let m = VmfSphere::new(1.0).unwrap();
    let theta = [PI / 3.0, 0.0];
    let r = curvature_at(&m, &theta, &cfg()).unwrap();
    assert!((r.get(0, 1, 0, 1) - 0.75).abs() < 1e-3, "{}", r.get(0, 1, 0, 1));
    // Brute force from the Levi-Civita symbols with a plain central difference.
    let h = 1e-5;
    let w = sphere_levi_civita(&theta);
    let dw = |a: usize| {
        let (mut p, mut q) = (theta.to_vec(), theta.to_vec());
        p[a] += h;
        q[a] -= h;
        let (wp, wq) = (sphere_levi_civita(&p), sphere_levi_civita(&q));
        Connection::from_fn(2, |k, i, j| (wp.get(k, i, j) - wq.get(k, i, j)) / (2.0 * h))
    };
    let d = [dw(0), dw(1)];
    let (l, k, i, j) = (0, 1, 0, 1);
    let mut omega = d[i].get(l, j, k) - d[j].get(l, i, k);
    for s in 0..2 {
        omega += w.get(l, i, s) * w.get(s, j, k) - w.get(l, j, s) * w.get(s, i, k);
    }
    assert!((omega - 0.75).abs() < 1e-8);
    assert!((r.get(l, k, i, j) - omega).abs() < 1e-3);
    // Antisymmetric in the last pair.
    assert!((r.get(0, 1, 0, 1) + r.get(0, 1, 1, 0)).abs() < 1e-9);
}

#[test]
fn dlambda_curvature_is_zero() {
    let r = curvature_at(&RegressionDLambda::new(0.5).unwrap(), &[1.0, 2.0], &cfg()).unwrap();
    assert!(r.max_abs() < 1e-10, "{}", r.max_abs());
}

#[test]
fn codazzi_examples() {
    let c = codazzi_residual(&VmfCylinder::new(2.0).unwrap(), &[0.3, 1.2], &cfg()).unwrap();
    assert!(c.max_abs < 1e-6, "{}", c.max_abs);
    let c = codazzi_residual(&GaussianKl::default(), &[0.0, 1.0], &cfg()).unwrap();
    assert!(c.max_abs < 1e-4, "{}", c.max_abs);
    let chart = VmfCylinder::new(2.0).unwrap().chart().clone();
    let g = MetricField::from_fn(&chart, |_| Ok(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])));
    let w = ConnectionField::from_fn(&chart, |_| Ok(Connection::zeros(2)));
    let c = codazzi(&g, &w, &[0.1, 1.0], &cfg().derivatives.diff).unwrap();
    assert!(c.max_abs < 1e-12, "{}", c.max_abs);
}

#[test]
fn metric_transforms_as_a_tensor() {
    let r = metric_transform_check(
        Arc::new(GaussianKl::default()),
        Arc::new(GaussianCanonicalMap::default()),
        &[0.0, 1.0],
        &cfg(),
    )
    .unwrap();
    assert!(r < 1e-4, "{r}");
    let gce: Arc<dyn ModelDefinition> = Arc::new(GrandCanonical::new(&[1.0, 2.0, 3.0]).unwrap());
    let r = metric_transform_check(gce.clone(), Arc::new(GceCanonicalMap::default()), &[1.0, 0.5], &cfg()).unwrap();
    assert!(r < 1e-4, "{r}");
    let r = metric_transform_check(gce.clone(), Arc::new(IdentityMap::new(gce.chart())), &[1.0, 0.5], &cfg()).unwrap();
    assert!(r < 1e-12, "{r}");
}

#[test]
fn cauchy_schwarz_equality_case() {
    // One trial with v = w is the equality case; with n = 1 every pair is parallel.
    let g = DMatrix::from_row_slice(1, 1, &[3.0]);
    let r = cauchy_schwarz_margins(&g, 50, 1).unwrap();
    assert!(r.worst_margin.abs() < 1e-12 && r.worst_normalised_margin.abs() < 1e-12);
}

#[test]
fn cramer_rao_margins() {
    let r = cramer_rao_check(&GaussianKl::default(), &[0.0, 1.0], 1000, 7, &cfg()).unwrap();
    assert!(r.worst_margin >= -1e-10 && r.worst_normalised_margin >= -1e-10);
    let gce = GrandCanonical::new(&[1.0, 2.0, 3.0]).unwrap();
    let r = cramer_rao_check(&gce, &[1.0, 0.5], 1000, 7, &cfg()).unwrap();
    assert!(r.worst_margin >= -1e-10 && r.worst_normalised_margin >= -1e-10);
}

#[test]
fn metric_is_symmetric_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for name in CONDITION4 {
        let m = model(name);
        for _ in 0..25 {
            let theta = m.sample_point(&mut rng);
            let g = metric_at(m.as_ref(), &theta, &cfg()).unwrap().metric;
            assert!((&g - g.transpose()).amax() < 1e-12, "{name}: {g}");
            let eig = g.clone().symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "{name} at {theta:?}: {eig}");
        }
    }
}

#[test]
fn condition4_failures_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for name in ["regression-ls", "gumbel"] {
        let m = model(name);
        for _ in 0..25 {
            let theta = m.sample_point(&mut rng);
            let err = metric_at(m.as_ref(), &theta, &cfg()).unwrap_err();
            assert!(matches!(err, GeomError::Condition4Violated(_)), "{name}: {err}");
        }
    }
}

#[test]
fn probe_families_agree_and_connection_is_torsionless() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for name in CONDITION4 {
        let m = model(name);
        for _ in 0..25 {
            let theta = m.sample_point(&mut rng);
            let c = connection_at(m.as_ref(), &theta, &cfg()).unwrap();
            assert!(c.probe_consistency < 1e-3, "{name}: {}", c.probe_consistency);
            let scale = c.connection.max_abs().max(1.0);
            assert!(c.torsion / scale < 1e-3, "{name} at {theta:?}: {}", c.torsion);
        }
    }
}

#[test]
fn numeric_fields_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for name in CONDITION4 {
        let m = model(name);
        let Some(oracle) = m.oracle() else { continue };
        for _ in 0..10 {
            let theta = m.sample_point(&mut rng);
            if let Some(o) = oracle.metric(&theta) {
                let g = metric_at(m.as_ref(), &theta, &cfg()).unwrap().metric;
                assert!((&g - &o).amax() / o.amax() < 1e-4, "{name}: {g} vs {o}");
            }
            if let Some(o) = oracle.connection(&theta) {
                let c = connection_at(m.as_ref(), &theta, &cfg()).unwrap().connection;
                assert!(c.max_abs_diff(&o) / o.max_abs().max(1.0) < 1e-4, "{name} at {theta:?}");
            }
        }
    }
}

#[test]
fn hessian_structure_chain() {
    // Probe consistency implies Codazzi everywhere and flatness everywhere
    // except on the sphere, whose metric is not Hessian in (θ, φ).
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let tol = cfg().tolerances;
    for name in CONDITION4 {
        let m = model(name);
        for _ in 0..5 {
            let theta = m.sample_point(&mut rng);
            let c = connection_at(m.as_ref(), &theta, &cfg()).unwrap();
            assert!(c.probe_consistency <= tol.hess);
            let cod = codazzi_residual(m.as_ref(), &theta, &cfg()).unwrap();
            assert!(cod.max_abs <= tol.codazzi, "{name}: codazzi {}", cod.max_abs);
            let r = curvature_at(m.as_ref(), &theta, &cfg()).unwrap().max_abs();
            if name == "vmf-sphere" {
                assert!(r > 100.0 * tol.flat, "sphere curvature {r}");
            } else {
                assert!(r <= tol.flat, "{name}: curvature {r}");
            }
        }
    }
}

#[test]
fn oracle_sphere_curvature_matches_numeric() {
    let m = VmfSphere::new(2.0).unwrap();
    let oracle = ConnectionField::oracle(&m).unwrap();
    let theta = [1.1, 0.4];
    let a = curvature(&oracle, &theta, &cfg().derivatives.diff).unwrap();
    let b = curvature_at(&m, &theta, &cfg()).unwrap();
    assert!((a.get(0, 1, 0, 1) - theta[0].sin().powi(2)).abs() < 1e-6);
    assert!((a.get(0, 1, 0, 1) - b.get(0, 1, 0, 1)).abs() < 1e-3);
}

#[test]
fn dual_of_dual_is_primal() {
    let m = GaussianKl::default();
    let c = cfg();
    let g = MetricField::numeric(&m, &c);
    let w = ConnectionField::numeric(&m, &c);
    let chart = m.chart().clone();
    let dual = ConnectionField::from_fn(&chart, |t| dual_connection(&g, &w, t, &c.derivatives.diff));
    let back = dual_connection(&g, &dual, &[0.2, 1.3], &c.derivatives.diff).unwrap();
    let w0 = w.at(&[0.2, 1.3]).unwrap();
    assert!(back.max_abs_diff(&w0) < 1e-4, "{:?} vs {:?}", back.nested(), w0.nested());
}
