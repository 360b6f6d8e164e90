mod common;

use common::{max_abs_diff, simulate};
use nalgebra::{DMatrix, DVector};
use sabre_core::smle::Design;
use sabre_core::{
    beta_covariance, fit_smle, u_gamma, u_phi, CovarianceFactors, Dataset, Family, FitError,
    FitInit, FitOptions, Model, SplineBasis,
};

fn fit(data: &Dataset, basis: &SplineBasis, model: &Model) -> sabre_core::FitResult {
    fit_smle(
        data,
        basis,
        model,
        &FitInit::default(),
        &FitOptions::default(),
    )
    .unwrap()
}

fn design(data: &Dataset, basis: &SplineBasis) -> DMatrix<f64> {
    Design::new(basis, &data.x, &data.z)
        .unwrap()
        .matrix()
        .clone()
}

#[test]
fn gaussian_fit_is_least_squares() {
    let model = Model::plain(Family::Gaussian);
    for seed in 0..10 {
        let data = simulate(
            &model,
            &[1.0, -2.0, 0.5, 0.0, 3.0],
            |z| z.cos(),
            0.8,
            100,
            seed,
        );
        let basis = SplineBasis::from_quantiles(&data.z, 2, 4).unwrap();
        let r = fit(&data, &basis, &model);
        let w = design(&data, &basis);
        let y = DVector::from_vec(data.y.clone());
        let coef = w.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let rss = (&y - &w * &coef).norm_squared();
        assert!(max_abs_diff(&r.gamma(), coef.as_slice()) < 1e-8);
        assert!((r.phi - rss / 100.0).abs() < 1e-10);
    }
}

/// Plain iteratively reweighted least squares for the Poisson log link.
fn poisson_irls(w: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let n = w.nrows();
    let mut eta = DVector::from_iterator(n, y.iter().map(|&v| (v + 0.5).ln()));
    let mut coef = DVector::zeros(w.ncols());
    for _ in 0..100 {
        let mu = eta.map(f64::exp);
        let mut ww = w.clone();
        let mut work = DVector::zeros(n);
        for i in 0..n {
            work[i] = (eta[i] + (y[i] - mu[i]) / mu[i]) * mu[i].sqrt();
            ww.row_mut(i).scale_mut(mu[i].sqrt());
        }
        let next = (ww.transpose() * &ww)
            .cholesky()
            .unwrap()
            .solve(&(ww.transpose() * work));
        let done = (&next - &coef).amax() < 1e-13;
        coef = next;
        eta = w * &coef;
        if done {
            break;
        }
    }
    coef
}

#[test]
fn poisson_fit_matches_reweighted_least_squares() {
    let model = Model::plain(Family::Poisson);
    for seed in 0..5 {
        let data = simulate(
            &model,
            &[0.4, -0.3, 0.2],
            |z| 1.0 + (4.0 * z).sin(),
            1.0,
            300,
            seed,
        );
        let basis = SplineBasis::from_quantiles(&data.z, 3, 4).unwrap();
        let r = fit(&data, &basis, &model);
        assert_eq!(r.phi, 1.0);
        let oracle = poisson_irls(&design(&data, &basis), &data.y);
        assert!(max_abs_diff(&r.gamma(), oracle.as_slice()) < 1e-8);
    }
}

#[test]
fn row_order_does_not_matter() {
    let model = Model::plain(Family::InverseGaussian);
    let data = simulate(&model, &[0.5, -0.5], |z| 4.0 + z, 0.3, 200, 3);
    let basis = SplineBasis::from_quantiles(&data.z, 2, 4).unwrap();
    let r = fit(&data, &basis, &model);

    let order: Vec<usize> = (0..200).map(|i| (i * 37 + 11) % 200).collect();
    let x = DMatrix::from_fn(200, 2, |i, j| data.x[(order[i], j)]);
    let z = order.iter().map(|&i| data.z[i]).collect();
    let y = order.iter().map(|&i| data.y[i]).collect();
    let shuffled = Dataset::new(x, z, y).unwrap();
    let basis2 = SplineBasis::from_quantiles(&shuffled.z, 2, 4).unwrap();
    assert_eq!(basis, basis2);
    let s = fit(&shuffled, &basis2, &model);
    assert!(max_abs_diff(&r.gamma(), &s.gamma()) < 1e-9);
    assert!((r.phi - s.phi).abs() < 1e-9);
}

#[test]
fn column_order_permutes_coefficients() {
    let model = Model::plain(Family::Bernoulli);
    let data = simulate(&model, &[1.0, -0.5, 0.25], |z| z - 0.5, 1.0, 400, 5);
    let basis = SplineBasis::from_quantiles(&data.z, 2, 4).unwrap();
    let r = fit(&data, &basis, &model);
    let perm = [2, 0, 1];
    let x = DMatrix::from_fn(400, 3, |i, j| data.x[(i, perm[j])]);
    let swapped = Dataset::new(x, data.z.clone(), data.y.clone()).unwrap();
    let s = fit(&swapped, &basis, &model);
    for (j, &k) in perm.iter().enumerate() {
        assert!((s.beta[j] - r.beta[k]).abs() < 1e-9);
    }
    assert!(max_abs_diff(&r.alpha, &s.alpha) < 1e-9);
}

#[test]
fn logistic_estimates_are_consistent() {
    let model = Model::plain(Family::Bernoulli);
    let beta = [1.0, -0.5, 0.25];
    let data = simulate(&model, &beta, |z| (2.0 * z).sin() - 0.5, 1.0, 6000, 9);
    let basis = SplineBasis::from_quantiles(&data.z, 5, 4).unwrap();
    let r = fit(&data, &basis, &model);
    let d = Design::new(&basis, &data.x, &data.z).unwrap();
    let factors = CovarianceFactors::new(&d, &model, &r.gamma(), r.phi).unwrap();
    let cov = beta_covariance(&factors).unwrap();
    for j in 0..3 {
        let se = cov[(j, j)].sqrt();
        assert!(se < 0.05);
        assert!(
            (r.beta[j] - beta[j]).abs() < 4.0 * se,
            "β{j}: {} ± {se}",
            r.beta[j]
        );
    }
}

#[test]
fn estimating_equations_vanish_at_the_solution() {
    let cases = [
        (Model::plain(Family::InverseGaussian), 0.5, 5.0),
        (Model::plain(Family::NegativeBinomial), 0.7, 0.5),
        (Model::misclassified(0.05, 0.02).unwrap(), 1.0, 0.0),
    ];
    for (model, phi, offset) in cases {
        let data = simulate(&model, &[0.6, -0.4], move |z| offset + z * z, phi, 500, 21);
        let basis = SplineBasis::from_quantiles(&data.z, 3, 4).unwrap();
        let r = fit(&data, &basis, &model);
        let g = r.gamma();
        let score = u_gamma(&data, &basis, &model, &g, r.phi).unwrap();
        assert!(
            score.iter().all(|s| s.abs() < 1e-6 * 500.0),
            "{model:?} {score:?}"
        );
        if !model.dispersion_known() {
            assert!(u_phi(&data, &basis, &model, &g, r.phi).unwrap().abs() < 1e-6 * 500.0);
            assert!(r.phi > 0.0);
        }
    }
}

#[test]
fn duplicated_feature_is_reported() {
    let model = Model::plain(Family::Gaussian);
    let mut data = simulate(&model, &[1.0, 1.0, 1.0], |z| z, 1.0, 60, 2);
    for i in 0..60 {
        data.x[(i, 2)] = 2.0 * data.x[(i, 0)];
    }
    let basis = SplineBasis::from_quantiles(&data.z, 1, 4).unwrap();
    let err = fit_smle(
        &data,
        &basis,
        &model,
        &FitInit::default(),
        &FitOptions::default(),
    )
    .unwrap_err();
    match err {
        FitError::SingularHessian { columns } => assert!(columns.contains(&2), "{columns:?}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn starting_values_do_not_change_the_answer() {
    let model = Model::plain(Family::Poisson);
    let data = simulate(&model, &[0.3, 0.3], |z| z, 1.0, 200, 4);
    let basis = SplineBasis::from_quantiles(&data.z, 2, 4).unwrap();
    let cold = fit(&data, &basis, &model);
    let init = FitInit {
        gamma: Some(vec![1.0; 2 + basis.len()]),
        phi: None,
    };
    let warm = fit_smle(&data, &basis, &model, &init, &FitOptions::default()).unwrap();
    assert!(max_abs_diff(&cold.gamma(), &warm.gamma()) < 1e-8);
}
