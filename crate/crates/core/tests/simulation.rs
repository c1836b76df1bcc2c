use asynclc::estimators::{
    normalize_longitudinal, nw_mean, CoefName, ColumnSelector, MeanTarget, NormalizeMode,
};
use asynclc::kernels::BandwidthSpec as B;
use asynclc::kernels::KernelFamily::Epanechnikov as E;
use asynclc::simulation::*;

fn spec() -> EstimatorSpec {
    EstimatorSpec::two_step(B::rule(0.6), B::rule(0.5), B::rule(0.5))
}

#[test]
fn truth_hook_gives_zero_error_and_full_coverage() {
    let est = vec![spec()
        .with_hook(EstimatorHook::Truth)
        .with_scb()
        .with_label("truth")];
    let mut mc = McConfig::new(6, est, 2);
    mc.scb.replicates = 100;
    let r = run_monte_carlo(&mc, &DgpConfig::new(100, Setting::I)).unwrap();
    for p in &r.points {
        assert_eq!(p.bias, 0.0);
        assert_eq!(p.cp, 100.0);
    }
    for c in &r.curves {
        assert_eq!(c.rase_mean, 0.0);
        assert_eq!(c.ci_coverage, 100.0);
        assert_eq!(c.scb_coverage, Some(100.0));
    }
}

#[test]
fn halving_standard_errors_lowers_coverage() {
    let est = vec![
        spec().with_label("plain"),
        spec()
            .with_hook(EstimatorHook::SeScale(0.5))
            .with_label("half"),
    ];
    let r = run_monte_carlo(&McConfig::new(40, est, 3), &DgpConfig::new(200, Setting::I)).unwrap();
    let mut plain = 0.0;
    let mut half = 0.0;
    for c in [CoefName::Beta(0), CoefName::Gamma(0)] {
        for t in [0.3, 0.6, 0.9] {
            let a = r.point("plain", c, t).unwrap();
            let b = r.point("half", c, t).unwrap();
            assert!(b.cp <= a.cp);
            assert_eq!(a.sd, b.sd);
            plain += a.cp;
            half += b.cp;
        }
    }
    assert!(half < plain);
}

#[test]
fn same_seed_same_report() {
    let mc = McConfig::new(5, vec![spec()], 11);
    let dgp = DgpConfig::new(80, Setting::II);
    let a = run_monte_carlo(&mc, &dgp).unwrap();
    let b = run_monte_carlo(&mc, &dgp).unwrap();
    assert_eq!(a, b);
    let d1: asynclc::Dataset = generate_dataset(&dgp, &mut replicate_rng(4, 2)).unwrap();
    let d2: asynclc::Dataset = generate_dataset(&dgp, &mut replicate_rng(4, 2)).unwrap();
    assert_eq!(d1.subjects(), d2.subjects());
}

#[test]
fn gp_marginal_at_half_is_standard_normal() {
    let mut rng = replicate_rng(1, 0);
    let draws: Vec<f64> = (0..20_000)
        .map(|_| sample_gp(&[0.5], z_mean, covariate_cov, &mut rng).unwrap()[0])
        .collect();
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!(m.abs() < 0.03, "{m}");
    assert!((v - 1.0).abs() < 0.04, "{v}");
}

#[test]
fn gp_covariance_between_two_times() {
    let mut rng = replicate_rng(2, 0);
    let (t, s) = (0.2, 0.7);
    let n = 20_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let v = sample_gp(&[t, s], x_mean, covariate_cov, &mut rng).unwrap();
        acc += v[0] * v[1];
    }
    let c = acc / n as f64;
    assert!((c - covariate_cov(t, s)).abs() < 0.04, "{c}");
}

#[test]
fn normalized_column_has_zero_mean_unit_second_moment() {
    let data: asynclc::Dataset =
        generate_dataset(&DgpConfig::new(500, Setting::I), &mut replicate_rng(8, 0)).unwrap();
    // shift X so the raw column is visibly off-centre
    let data = data.map_subjects(|s| {
        let mut s = s.clone();
        s.sync_covariates
            .iter_mut()
            .for_each(|x| *x = 3.0 + 2.0 * *x);
        s
    });
    let h = 0.1;
    let out = normalize_longitudinal(
        &data,
        E,
        h,
        ColumnSelector::parse("x1").unwrap(),
        NormalizeMode::parse("longitudinal").unwrap(),
    )
    .unwrap();
    let sq = out.map_subjects(|s| {
        let mut s = s.clone();
        s.sync_covariates.iter_mut().for_each(|x| *x = *x * *x);
        s
    });
    for t in [0.3, 0.5, 0.7] {
        let m = nw_mean(&out, t, E, h, MeanTarget::Covariates).unwrap()[0];
        let m2 = nw_mean(&sq, t, E, h, MeanTarget::Covariates).unwrap()[0];
        assert!(m.abs() < 0.05, "mean {m} at {t}");
        assert!((m2 - 1.0).abs() < 0.05, "second moment {m2} at {t}");
    }
}

#[test]
fn noiseless_dgp_has_tiny_rase() {
    let mut dgp = DgpConfig::new(300, Setting::I);
    dgp.noise_scale = 0.0;
    let r = run_monte_carlo(&McConfig::new(3, vec![spec()], 5), &dgp).unwrap();
    let noisy = run_monte_carlo(
        &McConfig::new(3, vec![spec()], 5),
        &DgpConfig::new(300, Setting::I),
    )
    .unwrap();
    for (a, b) in r.curves.iter().zip(&noisy.curves) {
        assert!(a.rase_mean < b.rase_mean);
    }
}
