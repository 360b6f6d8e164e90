mod common;

use common::{max_abs_diff, simulate};
use sabre_core::sabre::simulate_responses;
use sabre_core::smle::Design;
use sabre_core::{
    fit_sabre, fit_smle, simulate_and_refit, Family, FitInit, FitOptions, Model, SabreConfig,
    SabreError, SplineBasis,
};

fn cfg(h: usize, seed: u64, threads: usize) -> SabreConfig {
    SabreConfig {
        h,
        master_seed: seed,
        threads,
        ..SabreConfig::default()
    }
}

/// In the Gaussian model the refitted β̃* is unbiased and the refitted φ̃*
/// has mean φ (n - d) / n, so the fixed point inflates φ̃ by n / (n - d).
#[test]
fn gaussian_dispersion_is_inflated_by_the_degrees_of_freedom() {
    let model = Model::plain(Family::Gaussian);
    let data = simulate(&model, &[1.0, -1.0, 0.5], |z| (3.0 * z).sin(), 2.0, 50, 8);
    let basis = SplineBasis::with_interior_knots(vec![], 4).unwrap();
    let r = fit_sabre(&data, &basis, &model, &cfg(2000, 1, 0)).unwrap();
    assert!(r.converged);
    let ratio = r.phi / r.smle.phi;
    let expected = 50.0 / (50.0 - 3.0 - 4.0);
    assert!(
        (ratio / expected - 1.0).abs() < 0.02,
        "{ratio} vs {expected}"
    );
    assert!(max_abs_diff(&r.beta, &r.smle.beta) < 0.05);
}

#[test]
fn thread_count_does_not_change_the_result() {
    let model = Model::plain(Family::Bernoulli);
    let data = simulate(&model, &[1.5, -1.0], |z| z - 0.5, 1.0, 150, 2);
    let basis = SplineBasis::from_quantiles(&data.z, 2, 4).unwrap();
    let a = fit_sabre(&data, &basis, &model, &cfg(30, 7, 1)).unwrap();
    let b = fit_sabre(&data, &basis, &model, &cfg(30, 7, 4)).unwrap();
    assert_eq!(a, b);
    let c = fit_sabre(&data, &basis, &model, &cfg(30, 8, 4)).unwrap();
    assert_ne!(a.beta, c.beta);
}

#[test]
fn zero_rates_reproduce_plain_logistic_bitwise() {
    let plain = Model::plain(Family::Bernoulli);
    let data = simulate(&plain, &[1.0, 1.0], |z| z, 1.0, 120, 6);
    let basis = SplineBasis::from_quantiles(&data.z, 1, 4).unwrap();
    let zero = Model::misclassified(0.0, 0.0).unwrap();
    let a = fit_sabre(&data, &basis, &plain, &cfg(20, 3, 0)).unwrap();
    let b = fit_sabre(&data, &basis, &zero, &cfg(20, 3, 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reported_residual_matches_an_independent_average() {
    let model = Model::plain(Family::InverseGaussian);
    let data = simulate(&model, &[0.5, -0.5], |z| 5.0 + z, 0.5, 150, 4);
    let basis = SplineBasis::from_quantiles(&data.z, 2, 4).unwrap();
    let c = cfg(25, 11, 0);
    let r = fit_sabre(&data, &basis, &model, &c).unwrap();
    assert!(r.converged);
    assert_eq!(r.trajectory.len(), r.iterations);

    let design = Design::new(&basis, &data.x, &data.z).unwrap();
    let gamma = r.gamma();
    let d = gamma.len();
    let mut sum = vec![0.0; d + 1];
    for h in 0..c.h {
        let f = simulate_and_refit(
            &design,
            &model,
            &gamma,
            r.phi,
            h,
            c.master_seed,
            &FitInit::default(),
            &FitOptions::default(),
        )
        .unwrap();
        for (s, v) in sum.iter_mut().zip(f.gamma().iter().chain([&f.phi])) {
            *s += v / c.h as f64;
        }
    }
    let mut target = r.smle.gamma();
    target.push(r.smle.phi);
    let residual = max_abs_diff(&target, &sum);
    assert!(
        (residual - r.residual).abs() < 1e-6,
        "{residual} vs {}",
        r.residual
    );
    let scale = 1.0
        + gamma
            .iter()
            .chain([&r.phi])
            .fold(0.0f64, |m, v| m.max(v.abs()));
    // Stopping rule: the last update moved less than the relative tolerance.
    assert!(*r.trajectory.last().unwrap() <= c.tol * scale);
}

#[test]
fn simulated_responses_depend_only_on_their_key() {
    let model = Model::plain(Family::Poisson);
    let data = simulate(&model, &[0.2], |z| z, 1.0, 40, 1);
    let basis = SplineBasis::from_quantiles(&data.z, 1, 4).unwrap();
    let design = Design::new(&basis, &data.x, &data.z).unwrap();
    let gamma = vec![0.1; design.dim()];
    let a = simulate_responses(&design, &model, &gamma, 1.0, 3, 9).unwrap();
    let b = simulate_responses(&design, &model, &gamma, 1.0, 3, 9).unwrap();
    let c = simulate_responses(&design, &model, &gamma, 1.0, 4, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn corrected_inverse_gaussian_stays_admissible() {
    let model = Model::plain(Family::InverseGaussian);
    let data = simulate(
        &model,
        &[0.5, -0.5],
        |z| 10.0 + (5.0 * z).sin(),
        3.0,
        200,
        12,
    );
    let basis = SplineBasis::from_quantiles(&data.z, 3, 4).unwrap();
    let smle = fit_smle(
        &data,
        &basis,
        &model,
        &FitInit::default(),
        &FitOptions::default(),
    );
    if smle.is_err() {
        return;
    }
    match fit_sabre(&data, &basis, &model, &cfg(30, 2, 0)) {
        Ok(r) => {
            let design = Design::new(&basis, &data.x, &data.z).unwrap();
            let nu = design.linear_predictor(&r.gamma());
            assert!(nu.iter().all(|&v| v > 0.0));
            assert!(r.phi > 0.0);
        }
        Err(SabreError::NonConvergence(r)) => panic!("no convergence: {:?}", r.trajectory),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let model = Model::plain(Family::Gaussian);
    let data = simulate(&model, &[1.0], |z| z, 1.0, 30, 1);
    let basis = SplineBasis::from_quantiles(&data.z, 0, 4).unwrap();
    for bad in [
        SabreConfig {
            h: 0,
            ..SabreConfig::default()
        },
        SabreConfig {
            step: 0.0,
            ..SabreConfig::default()
        },
        SabreConfig {
            tol: -1.0,
            ..SabreConfig::default()
        },
        SabreConfig {
            max_failure_fraction: 1.0,
            ..SabreConfig::default()
        },
    ] {
        assert!(matches!(
            fit_sabre(&data, &basis, &model, &bad),
            Err(SabreError::InvalidConfig(_))
        ));
    }
}
