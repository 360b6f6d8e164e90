use sabre_core::rng::{Purpose, StreamKey};
use sabre_core::{Family, Model};
use statrs::distribution::{Continuous, Discrete, NegativeBinomial, Normal, Poisson};

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn ig_log_density(y: f64, mu: f64, phi: f64) -> f64 {
    let lambda = 1.0 / phi;
    0.5 * (lambda / (2.0 * std::f64::consts::PI * y.powi(3))).ln()
        - lambda * (y - mu).powi(2) / (2.0 * mu * mu * y)
}

/// Reference log density from first principles or statrs.
fn oracle(model: &Model, rates: Option<(f64, f64)>, y: f64, nu: f64, phi: f64) -> f64 {
    match (model.family(), rates) {
        (Family::Bernoulli, Some((fpr, fnr))) => {
            let q = fpr + (1.0 - fpr - fnr) * logistic(nu);
            if y == 1.0 {
                q.ln()
            } else {
                (1.0 - q).ln()
            }
        }
        (Family::Gaussian, _) => Normal::new(nu, phi.sqrt()).unwrap().ln_pdf(y),
        (Family::Bernoulli, None) => {
            let q = logistic(nu);
            if y == 1.0 {
                q.ln()
            } else {
                (1.0 - q).ln()
            }
        }
        (Family::Poisson, _) => Poisson::new(nu.exp()).unwrap().ln_pmf(y as u64),
        (Family::InverseGaussian, _) => ig_log_density(y, nu.powf(-0.5), phi),
        (Family::NegativeBinomial, _) => {
            let size = 1.0 / phi;
            let mu = nu.exp();
            NegativeBinomial::new(size, size / (size + mu))
                .unwrap()
                .ln_pmf(y as u64)
        }
    }
}

struct Case {
    model: Model,
    rates: Option<(f64, f64)>,
    nus: Vec<f64>,
    phi: f64,
}

fn cases() -> Vec<Case> {
    let plain = |f| Model::plain(f);
    vec![
        Case {
            model: plain(Family::Gaussian),
            rates: None,
            nus: vec![-2.0, 0.3, 5.0],
            phi: 0.7,
        },
        Case {
            model: plain(Family::Bernoulli),
            rates: None,
            nus: vec![-3.0, 0.0, 1.2],
            phi: 1.0,
        },
        Case {
            model: plain(Family::Poisson),
            rates: None,
            nus: vec![-1.0, 0.5, 2.0],
            phi: 1.0,
        },
        Case {
            model: plain(Family::InverseGaussian),
            rates: None,
            nus: vec![0.2, 1.0, 9.0],
            phi: 0.5,
        },
        Case {
            model: plain(Family::NegativeBinomial),
            rates: None,
            nus: vec![-0.5, 0.8, 1.5],
            phi: 0.6,
        },
        Case {
            model: Model::misclassified(0.06, 0.03).unwrap(),
            rates: Some((0.06, 0.03)),
            nus: vec![-2.5, 0.1, 3.0],
            phi: 1.0,
        },
    ]
}

fn support(case: &Case) -> Vec<f64> {
    match case.model.family() {
        Family::Gaussian => vec![-3.0, 0.1, 2.5, 7.0],
        Family::Bernoulli => vec![0.0, 1.0],
        Family::Poisson | Family::NegativeBinomial => vec![0.0, 1.0, 4.0, 17.0],
        Family::InverseGaussian => vec![0.05, 0.4, 1.0, 3.2],
    }
}

#[test]
fn log_density_matches_reference_forms() {
    for case in cases() {
        for &nu in &case.nus {
            for y in support(&case) {
                let got = case.model.log_density(y, nu, case.phi).unwrap();
                let want = oracle(&case.model, case.rates, y, nu, case.phi);
                assert!(
                    (got - want).abs() < 1e-10 * want.abs().max(1.0),
                    "{:?} y={y} nu={nu}: {got} vs {want}",
                    case.model
                );
            }
        }
    }
}

#[test]
fn score_is_derivative_of_log_density() {
    for case in cases() {
        for &nu in &case.nus {
            for y in support(&case) {
                let h = 1e-5 * nu.abs().max(1.0);
                let f = |v: f64| oracle(&case.model, case.rates, y, v, case.phi);
                let fd = (f(nu + h) - f(nu - h)) / (2.0 * h);
                let s = case.model.score_nu(y, nu, case.phi).unwrap();
                assert!(
                    (s - fd).abs() < 1e-6 * fd.abs().max(1.0),
                    "{:?} {s} {fd}",
                    case.model
                );
            }
        }
    }
}

/// `E[y]`, `E[y²]`, `E[score²]` by summation or quadrature.
fn expectations(case: &Case, nu: f64) -> (f64, f64, f64) {
    let m = &case.model;
    let phi = case.phi;
    let mut acc = (0.0, 0.0, 0.0);
    let mut add = |y: f64, w: f64| {
        let s = m.score_nu(y, nu, phi).unwrap();
        acc.0 += w * y;
        acc.1 += w * y * y;
        acc.2 += w * s * s;
    };
    match m.family() {
        Family::Bernoulli | Family::Poisson | Family::NegativeBinomial => {
            for k in 0..2000 {
                let y = k as f64;
                let lp = m.log_density(y, nu, phi);
                if let Ok(lp) = lp {
                    add(y, lp.exp());
                }
                if m.family() == Family::Bernoulli && k == 1 {
                    break;
                }
            }
        }
        Family::Gaussian | Family::InverseGaussian => {
            // Simpson's rule in u, with y = nu + 12 sd · u or y = μ e^u.
            let steps = 40_000;
            let (lo, hi) = (-1.0, 1.0);
            let h = (hi - lo) / steps as f64;
            for i in 0..=steps {
                let u = lo + i as f64 * h;
                let (y, jac) = if m.family() == Family::Gaussian {
                    let span = 12.0 * phi.sqrt();
                    (nu + span * u, span)
                } else {
                    let mu = nu.powf(-0.5);
                    let y = mu * (14.0 * u).exp();
                    (y, 14.0 * y)
                };
                let w = if i == 0 || i == steps {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let dens = m.log_density(y, nu, phi).unwrap().exp();
                add(y, w * h / 3.0 * dens * jac);
            }
        }
    }
    acc
}

#[test]
fn moments_and_fisher_information_agree_with_the_density() {
    for case in cases() {
        for &nu in &case.nus {
            let (ey, ey2, es2) = expectations(&case, nu);
            let mean = case.model.mean(nu).unwrap();
            let var = case.model.variance(nu, case.phi).unwrap();
            let fisher = case.model.fisher_nu(nu, case.phi).unwrap();
            let tag = format!("{:?} nu={nu}", case.model);
            assert!(
                (ey - mean).abs() < 1e-8 * mean.abs().max(1.0),
                "{tag}: {ey} {mean}"
            );
            assert!(
                (ey2 - ey * ey - var).abs() < 1e-7 * var.max(1.0),
                "{tag}: var {var}"
            );
            assert!(
                (es2 - fisher).abs() < 1e-7 * fisher.max(1.0),
                "{tag}: {es2} {fisher}"
            );
        }
    }
}

#[test]
fn sampler_reproduces_mean_and_variance() {
    let draws = 40_000;
    for (c, case) in cases().iter().enumerate() {
        for (v, &nu) in case.nus.iter().enumerate() {
            let ys: Vec<f64> = (0..draws)
                .map(|i| {
                    let key = StreamKey::new(17, Purpose::MonteCarlo, (c * 10 + v) as u64, i);
                    case.model.sample(nu, case.phi, &mut key.stream()).unwrap()
                })
                .collect();
            let n = draws as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let m4 = ys.iter().map(|y| (y - mean).powi(4)).sum::<f64>() / n;
            let true_mean = case.model.mean(nu).unwrap();
            let true_var = case.model.variance(nu, case.phi).unwrap();
            let tag = format!("{:?} nu={nu}", case.model);
            assert!(
                (mean - true_mean).abs() < 5.0 * (true_var / n).sqrt(),
                "{tag}: {mean}"
            );
            // The O(1/n) term covers Bernoulli at q = 1/2, where m4 = var².
            let var_se = ((m4 - var * var).max(0.0) / n).sqrt() + true_var / n;
            assert!(
                (var - true_var).abs() < 6.0 * var_se,
                "{tag}: {var} vs {true_var}"
            );
            for &y in &ys {
                case.model.check_y(y).unwrap();
            }
        }
    }
}

#[test]
fn domain_and_support_are_enforced() {
    let ig = Model::plain(Family::InverseGaussian);
    assert!(ig.log_density(1.0, -0.1, 1.0).is_err());
    assert!(ig.log_density(-1.0, 1.0, 1.0).is_err());
    let pois = Model::plain(Family::Poisson);
    assert!(pois.log_density(1.5, 0.0, 1.0).is_err());
    let bern = Model::plain(Family::Bernoulli);
    assert!(bern.log_density(2.0, 0.0, 1.0).is_err());
    assert!(Model::plain(Family::Gaussian)
        .log_density(0.0, 0.0, 0.0)
        .is_err());
    assert!(Model::misclassified(0.5, 0.5).is_err());
}
