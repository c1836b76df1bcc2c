mod common;

use asynclc::data::{LongitudinalDataset, SubjectRecord};
use asynclc::estimators::{
    center, fit_centering, fit_gamma_second_step, fit_one_step, fit_vcm, ConstantCurve, FnCurve,
};
use asynclc::kernels::KernelFamily::Epanechnikov as E;
use asynclc::scb::{kernel_weighted_residuals, q_hat, Target};
use common::*;
use rand::Rng;

const TOL: f64 = 1e-8;

fn run_oracle(fit: Fit) {
    let mut done = 0;
    let mut seed = 0;
    while done < 20 {
        seed += 1;
        assert!(seed < 200, "{fit:?}: too many singular instances");
        if let Some((sol, cov)) = oracle_instance(fit, seed) {
            assert!(sol <= TOL, "{fit:?} seed {seed}: solution off by {sol:e}");
            assert!(cov <= TOL, "{fit:?} seed {seed}: covariance off by {cov:e}");
            done += 1;
        }
    }
}

#[test]
fn one_step_matches_generic_least_squares() {
    run_oracle(Fit::OneStep);
}

#[test]
fn centering_matches_generic_least_squares() {
    run_oracle(Fit::Centering);
}

#[test]
fn vcm_matches_generic_least_squares() {
    run_oracle(Fit::Vcm);
}

#[test]
fn second_step_matches_generic_least_squares() {
    run_oracle(Fit::SecondStep);
}

/// Noiseless data `Y = X c` with an inert asynchronous covariate.
fn linear_dataset(
    seed: u64,
    c: &[f64],
    intercept: f64,
    z_const: Option<&[f64]>,
) -> LongitudinalDataset<f64> {
    let mut r = rng(seed);
    let p = c.len();
    let q = z_const.map_or(1, <[f64]>::len);
    let subjects = (0..12)
        .map(|i| {
            let st: Vec<f64> = (0..5).map(|_| r.gen()).collect();
            let xr: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..p).map(|_| r.gen_range(-1.0..1.0)).collect())
                .collect();
            let zi: Vec<f64> = (0..q).map(|_| r.gen_range(-1.0..1.0)).collect();
            let at: Vec<f64> = (0..4).map(|_| r.gen()).collect();
            let zr: Vec<Vec<f64>> = match z_const {
                Some(_) => vec![zi.clone(); 4],
                None => (0..4).map(|_| vec![r.gen_range(-1.0..1.0)]).collect(),
            };
            let y: Vec<f64> = xr
                .iter()
                .map(|x| {
                    let lin: f64 = x.iter().zip(c).map(|(a, b)| a * b).sum();
                    let zz: f64 =
                        z_const.map_or(0.0, |g| zi.iter().zip(g).map(|(a, b)| a * b).sum());
                    intercept + lin + zz
                })
                .collect();
            SubjectRecord::new(format!("s{i}"), st, y, xr, at, zr)
        })
        .collect();
    LongitudinalDataset::new(subjects, p, q).unwrap()
}

#[test]
fn exact_recovery_one_step() {
    let c = [1.5, -0.75];
    let ds = linear_dataset(1, &c, 0.0, None);
    for t in [0.3, 0.5, 0.7] {
        let est = fit_one_step(&ds, t, E, 0.5, 0.5).unwrap();
        assert_close(&est.beta(), &c, TOL, "beta");
        assert_close(&est.gamma(), &[0.0], TOL, "gamma");
        assert!(est.deriv.iter().all(|d| d.abs() < TOL));
        let res = kernel_weighted_residuals(&ds, &est.solution, t, E, 0.5, 0.5).unwrap();
        assert!(res.iter().flatten().all(|r| r.abs() < 1e-10));
    }
}

#[test]
fn exact_recovery_centering() {
    let c = [0.8, 2.0];
    let ds = linear_dataset(2, &c, 3.0, None);
    let centered = center(&ds, E, 0.3).unwrap();
    for t in [0.25, 0.5, 0.75] {
        let est = fit_centering(&centered, t, E, 0.3).unwrap();
        assert_close(&est.coef, &c, TOL, "beta_c");
    }
}

#[test]
fn exact_recovery_vcm() {
    let c = [-1.25];
    let ds = linear_dataset(3, &c, 0.5, None);
    let est = fit_vcm(&ds, 0.5, E, 0.4).unwrap();
    assert_close(&est.coef, &[0.5, -1.25], TOL, "alpha, beta");
}

#[test]
fn exact_recovery_second_step() {
    let c = [1.0];
    let g = [0.5, -2.0];
    let ds = linear_dataset(4, &c, 0.0, Some(&g));
    let truth = ConstantCurve(c.to_vec());
    for t in [0.3, 0.6] {
        let est = fit_gamma_second_step(&ds, &truth, t, E, 0.4, 0.4).unwrap();
        assert_close(&est.coef, &g, TOL, "gamma");
    }
}

#[test]
fn zero_residuals_give_zero_q_hat_and_doubling_is_linear() {
    let mut r = rng(11);
    let ds = random_dataset(&mut r, 10, 1, 1, 3..=5, 3..=5);
    let (t, h) = (0.5, 0.6);
    let zeros: Vec<Vec<f64>> = ds
        .subjects()
        .iter()
        .map(|s| vec![0.0; s.n_sync() * s.n_async()])
        .collect();
    for target in [Target::Beta, Target::Gamma] {
        let q0 = q_hat(&ds, &zeros, t, target, E, h, h).unwrap();
        assert!(q0.iter().all(|v| *v == 0.0));
        let est = fit_one_step(&ds, t, E, h, h).unwrap();
        let res = kernel_weighted_residuals(&ds, &est.solution, t, E, h, h).unwrap();
        let doubled: Vec<Vec<f64>> = res
            .iter()
            .map(|v| v.iter().map(|x| 2.0 * x).collect())
            .collect();
        let a = q_hat(&ds, &res, t, target, E, h, h).unwrap();
        let b = q_hat(&ds, &doubled, t, target, E, h, h).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
    }
}

#[test]
fn residual_outside_support_is_zero() {
    let mut r = rng(5);
    let ds = random_dataset(&mut r, 4, 1, 1, 3..=4, 3..=4);
    let rho = vec![0.3, 0.1, -0.2, 0.05];
    let res = kernel_weighted_residuals(&ds, &rho, 0.5, E, 0.1, 0.1).unwrap();
    for (s, rs) in ds.subjects().iter().zip(&res) {
        for (pr, v) in s.pairs().zip(rs) {
            if (pr.t1 - 0.5).abs() > 0.1 || (pr.t2 - 0.5).abs() > 0.1 {
                assert_eq!(*v, 0.0);
            }
        }
    }
}

#[test]
fn second_step_uses_beta_only_inside_window() {
    // β that differs far from t must not matter
    let mut r = rng(9);
    let ds = random_dataset(&mut r, 8, 1, 1, 4..=5, 4..=5);
    let a = ConstantCurve(vec![0.7]);
    let b = FnCurve {
        dim: 1,
        f: |s: f64| {
            vec![if (s - 0.5f64).abs() <= 0.2 {
                0.7
            } else {
                100.0
            }]
        },
    };
    let ea = fit_gamma_second_step(&ds, &a, 0.5, E, 0.2, 0.3).unwrap();
    let eb = fit_gamma_second_step(&ds, &b, 0.5, E, 0.2, 0.3).unwrap();
    assert_eq!(ea.solution, eb.solution);
}
