//! Data-generating process and Monte Carlo harness.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::auto_smoothing;
use crate::data::{LongitudinalDataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimators::{
    default_grid, CoefName, CurveEstimate, Method, Smoothing, TwoStepPipeline, Z_95,
};
use crate::kernels::{BandwidthSpec, KernelFamily};
use crate::linalg::{cholesky, Matrix};
use crate::scalar::Scalar;
use crate::scb::{BootstrapProcess, Contrast, ScbConfig, Target};

/// Diagonal jitter added when a covariance matrix fails to factor.
pub const GP_JITTER: f64 = 1e-12;

pub type CoefFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Coefficient functions of the simulation model.
#[derive(Clone)]
pub enum Setting {
    /// `β = 3(t-0.4)^2`, `γ = sin(2πt)`
    I,
    /// `β = 0.4t + 0.5`, `γ = √t`
    II,
    Custom {
        beta: CoefFn,
        gamma: CoefFn,
    },
}

impl fmt::Debug for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Setting {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "i" | "1" | "I" => Ok(Setting::I),
            "ii" | "2" | "II" => Ok(Setting::II),
            other => Err(Error::InvalidParameter(format!(
                "unknown setting '{other}'"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Setting::I => "i".into(),
            Setting::II => "ii".into(),
            Setting::Custom { .. } => "custom".into(),
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        match self {
            Setting::I => 3.0 * (t - 0.4) * (t - 0.4),
            Setting::II => 0.4 * t + 0.5,
            Setting::Custom { beta, .. } => beta(t),
        }
    }

    pub fn gamma(&self, t: f64) -> f64 {
        match self {
            Setting::I => (2.0 * std::f64::consts::PI * t).sin(),
            Setting::II => t.sqrt(),
            Setting::Custom { gamma, .. } => gamma(t),
        }
    }

    /// True value of a reported coefficient (`None` for the intercept).
    pub fn truth(&self, name: CoefName, t: f64) -> Option<f64> {
        match name {
            CoefName::Beta(0) => Some(self.beta(t)),
            CoefName::Gamma(0) => Some(self.gamma(t)),
            _ => None,
        }
    }
}

/// How the asynchronous covariate is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateLaw {
    /// Gaussian process with mean `2(t-0.5)^2` and covariance `exp(-|t-s|)`.
    #[default]
    GaussianProcess,
    /// One standard normal value per subject, constant in time.
    TimeConstant,
}

#[derive(Debug, Clone)]
pub struct DgpConfig {
    pub n: usize,
    /// Observation counts are `Poisson(rate) + 1`.
    pub sync_rate: f64,
    pub async_rate: f64,
    pub setting: Setting,
    /// Multiplies the error process (0 gives noiseless responses).
    pub noise_scale: f64,
    pub z_law: CovariateLaw,
}

impl DgpConfig {
    pub fn new(n: usize, setting: Setting) -> Self {
        Self {
            n,
            sync_rate: 5.0,
            async_rate: 5.0,
            setting,
            noise_scale: 1.0,
            z_law: CovariateLaw::GaussianProcess,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSampleSize);
        }
        for rate in [self.sync_rate, self.async_rate] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "observation rate must be positive, got {rate}"
                )));
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise scale must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

pub fn x_mean(_t: f64) -> f64 {
    0.0
}

pub fn z_mean(t: f64) -> f64 {
    2.0 * (t - 0.5) * (t - 0.5)
}

/// `exp(-|t-s|)`
pub fn covariate_cov(t: f64, s: f64) -> f64 {
    (-(t - s).abs()).exp()
}

/// `2^(-|t-s|)`
pub fn noise_cov(t: f64, s: f64) -> f64 {
    (-(t - s).abs()).exp2()
}

/// Draw of a Gaussian process at `times`, with a flag telling whether the
/// diagonal jitter was needed.
pub fn sample_gp_with_jitter<R: Rng + ?Sized>(
    times: &[f64],
    mean: impl Fn(f64) -> f64,
    cov: impl Fn(f64, f64) -> f64,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    let m = times.len();
    let mut c = Matrix::from_fn(m, m, |i, j| cov(times[i], times[j]));
    let mut jittered = false;
    let l = match cholesky(&c) {
        Some(l) => l,
        None => {
            jittered = true;
            for i in 0..m {
                c[(i, i)] += GP_JITTER;
            }
            cholesky(&c).ok_or(Error::CovarianceNotPD)?
        }
    };
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let values = (0..m)
        .map(|i| {
            let row = l.row(i);
            mean(times[i]) + (0..=i).map(|k| row[k] * z[k]).sum::<f64>()
        })
        .collect();
    Ok((values, jittered))
}

/// `mean(times) + L z` with `L L^T` the covariance matrix at `times`.
pub fn sample_gp<R: Rng + ?Sized>(
    times: &[f64],
    mean: impl Fn(f64) -> f64,
    cov: impl Fn(f64, f64) -> f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    sample_gp_with_jitter(times, mean, cov, rng).map(|(v, _)| v)
}

fn sorted_uniforms<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    let mut t: Vec<f64> = (0..count).map(|_| rng.gen::<f64>()).collect();
    t.sort_by(|a, b| a.partial_cmp(b).expect("uniform draws are finite"));
    t
}

/// Simulated dataset plus the number of subjects whose covariance needed
/// jitter.
pub fn generate_dataset_with_stats<T: Scalar, R: Rng + ?Sized>(
    cfg: &DgpConfig,
    rng: &mut R,
) -> Result<(LongitudinalDataset<T>, usize)> {
    cfg.validate()?;
    let sync_law =
        Poisson::new(cfg.sync_rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let async_law =
        Poisson::new(cfg.async_rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut jitter = 0;
    let mut subjects = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let l = sync_law.sample(rng) as usize + 1;
        let m = async_law.sample(rng) as usize + 1;
        let t_sync = sorted_uniforms(l, rng);
        let t_async = sorted_uniforms(m, rng);

        let (x, jx) = sample_gp_with_jitter(&t_sync, x_mean, covariate_cov, rng)?;
        let mut union = t_sync.clone();
        union.extend_from_slice(&t_async);
        let (z, jz) = match cfg.z_law {
            CovariateLaw::GaussianProcess => {
                sample_gp_with_jitter(&union, z_mean, covariate_cov, rng)?
            }
            CovariateLaw::TimeConstant => {
                let v: f64 = rng.sample(StandardNormal);
                (vec![v; union.len()], false)
            }
        };
        let (eps, je) = sample_gp_with_jitter(&t_sync, |_| 0.0, noise_cov, rng)?;
        jitter += usize::from(jx || jz || je);

        let y: Vec<f64> = (0..l)
            .map(|j| {
                let t = t_sync[j];
                x[j] * cfg.setting.beta(t) + z[j] * cfg.setting.gamma(t) + cfg.noise_scale * eps[j]
            })
            .collect();
        let lit = |v: &[f64]| v.iter().map(|&a| T::lit(a)).collect::<Vec<T>>();
        subjects.push(SubjectRecord::from_flat(
            format!("{}", i + 1),
            lit(&t_sync),
            lit(&y),
            lit(&x),
            1,
            lit(&t_async),
            lit(&z[l..]),
            1,
        ));
    }
    Ok((LongitudinalDataset::new_unchecked(subjects, 1, 1), jitter))
}

/// One simulated dataset: `p = q = 1`, only the asynchronous-time values of
/// `Z` are kept.
pub fn generate_dataset<T: Scalar, R: Rng + ?Sized>(
    cfg: &DgpConfig,
    rng: &mut R,
) -> Result<LongitudinalDataset<T>> {
    generate_dataset_with_stats(cfg, rng).map(|(d, _)| d)
}

/// Generator for replicate `rep`: stream `rep` of ChaCha8 keyed by `seed`.
pub fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Root average squared error over paired values.
pub fn rase_values<T: Scalar>(estimate: &[T], truth: &[T]) -> T {
    assert_eq!(estimate.len(), truth.len());
    if estimate.is_empty() {
        return T::zero();
    }
    let ss: T = estimate
        .iter()
        .zip(truth)
        .map(|(&e, &t)| (e - t) * (e - t))
        .sum();
    (ss / T::from_usize_lossy(estimate.len())).sqrt()
}

/// RASE of one coefficient of `curve` over its grid.
pub fn rase<T: Scalar>(
    curve: &CurveEstimate<T>,
    name: CoefName,
    truth: impl Fn(T) -> T,
) -> Result<T> {
    let mut est = Vec::with_capacity(curve.grid.len());
    let mut tru = Vec::with_capacity(curve.grid.len());
    for (i, &t) in curve.grid.iter().enumerate() {
        let (e, _) = curve.estimate(i, name).ok_or(Error::CurveUnavailable {
            t: t.to_f64_lossy(),
        })?;
        est.push(e);
        tru.push(truth(t));
    }
    Ok(rase_values(&est, &tru))
}

/// Test hooks replacing or perturbing an estimator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EstimatorHook {
    #[default]
    None,
    /// Report the true curve with zero standard error and zero band width.
    Truth,
    /// Multiply every standard error by this factor.
    SeScale(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub label: String,
    pub method: Method,
    pub kernel: KernelFamily,
    pub h: Option<BandwidthSpec>,
    pub h1: BandwidthSpec,
    pub h2: BandwidthSpec,
    /// Build wild-bootstrap bands for `β` and `γ`.
    pub scb: bool,
    pub hook: EstimatorHook,
}

impl EstimatorSpec {
    pub fn one_step(h1: BandwidthSpec, h2: BandwidthSpec) -> Self {
        Self {
            label: format!("one-step h1={} h2={}", h1.label(), h2.label()),
            method: Method::OneStep,
            kernel: KernelFamily::Epanechnikov,
            h: None,
            h1,
            h2,
            scb: false,
            hook: EstimatorHook::None,
        }
    }

    pub fn two_step(h: BandwidthSpec, h1: BandwidthSpec, h2: BandwidthSpec) -> Self {
        Self {
            label: format!(
                "two-step h={} h1={} h2={}",
                h.label(),
                h1.label(),
                h2.label()
            ),
            method: Method::TwoStepCentering,
            kernel: KernelFamily::Epanechnikov,
            h: Some(h),
            h1,
            h2,
            scb: false,
            hook: EstimatorHook::None,
        }
    }

    pub fn with_scb(mut self) -> Self {
        self.scb = true;
        self
    }

    pub fn with_hook(mut self, hook: EstimatorHook) -> Self {
        self.hook = hook;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Resolves the bandwidths for `data`, running cross-validation for
    /// any that are [`BandwidthSpec::Auto`].
    fn smoothing(&self, data: &LongitudinalDataset<f64>, seed: u64) -> Result<Smoothing<f64>> {
        let n = data.n();
        let h = match self.h {
            Some(h) => h.resolve(n)?,
            None => None,
        };
        let (h1, h2) = (self.h1.resolve(n)?, self.h2.resolve(n)?);
        let h_auto = self.method.is_two_step() && h.is_none();
        if h_auto || h1.is_none() || h2.is_none() {
            return auto_smoothing(data, self.method, self.kernel, h, h1, h2, seed).map(|(s, _)| s);
        }
        Ok(Smoothing {
            kernel: self.kernel,
            h,
            h1: h1.expect("checked"),
            h2: h2.expect("checked"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub replicates: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub eval_times: Vec<f64>,
    pub grid: Vec<f64>,
    pub scb: ScbConfig,
    pub seed: u64,
}

impl McConfig {
    pub fn new(replicates: usize, estimators: Vec<EstimatorSpec>, seed: u64) -> Self {
        Self {
            replicates,
            estimators,
            eval_times: vec![0.3, 0.6, 0.9],
            grid: default_grid(),
            scb: ScbConfig {
                replicates: 500,
                ..ScbConfig::default()
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter(
                "need at least one replicate".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators configured".into()));
        }
        crate::estimators::validate_grid(&self.grid)?;
        if self.eval_times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParameter(
                "evaluation times must lie in [0, 1]".into(),
            ));
        }
        if self.estimators.iter().any(|e| e.scb) {
            if self.scb.replicates < 100 {
                return Err(Error::InvalidParameter(
                    "need at least 100 bootstrap replicates".into(),
                ));
            }
            if !(self.scb.alpha > 0.0 && self.scb.alpha < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "alpha must be in (0,1), got {}",
                    self.scb.alpha
                )));
            }
        }
        Ok(())
    }
}

/// Reported coefficients of the simulation model.
pub const REPORTED: [CoefName; 2] = [CoefName::Beta(0), CoefName::Gamma(0)];

/// Outcome of one estimator on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    /// `[time][coefficient]` of `(estimate, se)`.
    pub points: Vec<[(f64, f64); 2]>,
    pub rase: [f64; 2],
    pub ci_cover: [bool; 2],
    pub scb_cover: Option<[bool; 2]>,
}

fn evaluate_replicate(
    spec: &EstimatorSpec,
    data: &LongitudinalDataset<f64>,
    setting: &Setting,
    mc: &McConfig,
    scb_seed: u64,
) -> Result<ReplicateOutcome> {
    let truth = |name: CoefName, t: f64| {
        setting
            .truth(name, t)
            .expect("reported coefficients have a truth")
    };
    if spec.hook == EstimatorHook::Truth {
        return Ok(ReplicateOutcome {
            points: mc
                .eval_times
                .iter()
                .map(|&t| REPORTED.map(|c| (truth(c, t), 0.0)))
                .collect(),
            rase: [0.0; 2],
            ci_cover: [true; 2],
            scb_cover: spec.scb.then_some([true; 2]),
        });
    }
    let se_scale = match spec.hook {
        EstimatorHook::SeScale(f) => f,
        _ => 1.0,
    };
    let pipeline = TwoStepPipeline::new(data, spec.method, spec.smoothing(data, scb_seed)?)?;
    let mut points = Vec::with_capacity(mc.eval_times.len());
    for &t in &mc.eval_times {
        let pt = pipeline.fit_point(t);
        let mut row = [(0.0, 0.0); 2];
        for (slot, &c) in row.iter_mut().zip(&REPORTED) {
            let (e, se) = pt.get(c).ok_or_else(|| first_error(&pt.errors(), t))?;
            *slot = (e, se * se_scale);
        }
        points.push(row);
    }
    let curve = pipeline.fit_grid(&mc.grid)?;
    if let Some(pt) = curve.points.iter().find(|p| !p.is_ok()) {
        return Err(first_error(&pt.errors(), pt.t));
    }
    let mut rase_out = [0.0; 2];
    let mut ci_cover = [true; 2];
    for (c_idx, &c) in REPORTED.iter().enumerate() {
        rase_out[c_idx] = rase(&curve, c, |t| truth(c, t))?;
        ci_cover[c_idx] = curve.grid.iter().enumerate().all(|(i, &t)| {
            let (e, se) = curve.estimate(i, c).expect("checked above");
            let half = Z_95 * se * se_scale;
            (e - truth(c, t)).abs() <= half
        });
    }
    let scb_cover = if spec.scb {
        let cfg = ScbConfig {
            seed: scb_seed,
            ..mc.scb
        };
        let mut cover = [false; 2];
        for (slot, (target, c)) in cover.iter_mut().zip([
            (Target::Beta, CoefName::Beta(0)),
            (Target::Gamma, CoefName::Gamma(0)),
        ]) {
            let band = BootstrapProcess::new(data, &curve, target)?
                .band(&Contrast::Coordinate(0), &cfg)?;
            *slot = band.covers(|t| truth(c, t));
        }
        Some(cover)
    } else {
        None
    };
    Ok(ReplicateOutcome {
        points,
        rase: rase_out,
        ci_cover,
        scb_cover,
    })
}

fn first_error(errors: &[&Error], t: f64) -> Error {
    errors
        .first()
        .map(|e| (*e).clone())
        .unwrap_or(Error::CurveUnavailable { t })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub estimator: String,
    pub coefficient: String,
    pub t: f64,
    /// Signed mean of `estimate - truth`.
    pub bias: f64,
    pub sd: f64,
    pub se: f64,
    /// Percent of replicates whose 95% pointwise interval contains the truth.
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub estimator: String,
    pub coefficient: String,
    pub rase_mean: f64,
    pub rase_sd: f64,
    /// Percent of replicates whose pointwise intervals contain the truth at
    /// every grid point.
    pub ci_coverage: f64,
    pub scb_coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub setting: String,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub points: Vec<PointSummary>,
    pub curves: Vec<CurveSummary>,
    /// `(estimator, failed replicates)`
    pub failures: Vec<(String, usize)>,
    pub jitter_events: usize,
    pub warnings: Vec<String>,
}

impl SimulationReport {
    pub fn point(&self, estimator: &str, coefficient: CoefName, t: f64) -> Option<&PointSummary> {
        let name = coefficient.to_string();
        self.points
            .iter()
            .find(|p| p.estimator == estimator && p.coefficient == name && (p.t - t).abs() < 1e-12)
    }

    pub fn curve(&self, estimator: &str, coefficient: CoefName) -> Option<&CurveSummary> {
        let name = coefficient.to_string();
        self.curves
            .iter()
            .find(|c| c.estimator == estimator && c.coefficient == name)
    }
}

pub(crate) fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn percent(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        hit += usize::from(f);
        total += 1;
    }
    if total == 0 {
        f64::NAN
    } else {
        100.0 * hit as f64 / total as f64
    }
}

/// Per-replicate outcomes of every estimator, `[replicate][estimator]`.
pub fn run_replicates(
    mc: &McConfig,
    dgp: &DgpConfig,
) -> Result<(Vec<Vec<Result<ReplicateOutcome>>>, usize)> {
    mc.validate()?;
    dgp.validate()?;
    let per_rep: Vec<Result<(Vec<Result<ReplicateOutcome>>, usize)>> = (0..mc.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(mc.seed, rep);
            let (data, jitter) = generate_dataset_with_stats::<f64, _>(dgp, &mut rng)?;
            let scb_seed: u64 = rng.gen();
            let outcomes = mc
                .estimators
                .iter()
                .map(|spec| evaluate_replicate(spec, &data, &dgp.setting, mc, scb_seed))
                .collect();
            Ok((outcomes, jitter))
        })
        .collect();
    let mut all = Vec::with_capacity(mc.replicates);
    let mut jitter = 0;
    for r in per_rep {
        let (o, j) = r?;
        all.push(o);
        jitter += j;
    }
    Ok((all, jitter))
}

/// Runs the study and aggregates bias, SD, mean SE and coverage per
/// estimator, coefficient and evaluation time, plus curve-level RASE and
/// simultaneous coverage. Failed replicates are excluded and counted.
pub fn run_monte_carlo(mc: &McConfig, dgp: &DgpConfig) -> Result<SimulationReport> {
    let (outcomes, jitter_events) = run_replicates(mc, dgp)?;
    let mut points = Vec::new();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for (e, spec) in mc.estimators.iter().enumerate() {
        let ok: Vec<&ReplicateOutcome> =
            outcomes.iter().filter_map(|r| r[e].as_ref().ok()).collect();
        let failed = mc.replicates - ok.len();
        failures.push((spec.label.clone(), failed));
        if failed * 10 > mc.replicates {
            warnings.push(format!(
                "DEGENERATE_STUDY: {} failed in {failed} of {} replicates",
                spec.label, mc.replicates
            ));
        }
        for (ti, &t) in mc.eval_times.iter().enumerate() {
            for (ci, &c) in REPORTED.iter().enumerate() {
                let truth = dgp
                    .setting
                    .truth(c, t)
                    .expect("reported coefficients have a truth");
                let est: Vec<f64> = ok.iter().map(|o| o.points[ti][ci].0).collect();
                let se: Vec<f64> = ok.iter().map(|o| o.points[ti][ci].1).collect();
                let err: Vec<f64> = est.iter().map(|e| e - truth).collect();
                let (bias, sd) = mean_sd(&err);
                let (mean_se, _) = mean_sd(&se);
                let cp = percent(
                    ok.iter()
                        .map(|o| (o.points[ti][ci].0 - truth).abs() <= Z_95 * o.points[ti][ci].1),
                );
                points.push(PointSummary {
                    estimator: spec.label.clone(),
                    coefficient: c.to_string(),
                    t,
                    bias,
                    sd,
                    se: mean_se,
                    cp,
                });
            }
        }
        for (ci, &c) in REPORTED.iter().enumerate() {
            let r: Vec<f64> = ok.iter().map(|o| o.rase[ci]).collect();
            let (rase_mean, rase_sd) = mean_sd(&r);
            curves.push(CurveSummary {
                estimator: spec.label.clone(),
                coefficient: c.to_string(),
                rase_mean,
                rase_sd,
                ci_coverage: percent(ok.iter().map(|o| o.ci_cover[ci])),
                scb_coverage: spec
                    .scb
                    .then(|| percent(ok.iter().filter_map(|o| o.scb_cover.map(|s| s[ci])))),
            });
        }
    }
    Ok(SimulationReport {
        setting: dgp.setting.label(),
        n: dgp.n,
        replicates: mc.replicates,
        seed: mc.seed,
        points,
        curves,
        failures,
        jitter_events,
        warnings,
    })
}
