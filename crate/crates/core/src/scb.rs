//! Wild-bootstrap simultaneous confidence bands.
//!
//! For every grid point the kernel-weighted residuals and the weight matrix
//! are formed once; each subject's contribution `f_n(t)^-1 Σ W r̂ / n` is
//! stored, and a bootstrap replicate is then a multiplier-weighted sum of
//! those contributions. No local fit is repeated.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::estimators::curve::{CurveEstimate, Method};
use crate::estimators::engine::{checked_lu, Rows};
use crate::estimators::local::{
    centering_rows, level_deriv_unscale, one_step_rows, one_step_unscale, second_step_rows,
    vcm_rows,
};
use crate::estimators::CoefficientEstimate;
use crate::kernels::{KernelFamily, ProductKernel, ScaledKernel};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

pub const DEFAULT_REPLICATES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierLaw {
    #[default]
    Rademacher,
    StandardNormal,
}

impl MultiplierLaw {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rademacher" => Ok(MultiplierLaw::Rademacher),
            "normal" | "standard-normal" => Ok(MultiplierLaw::StandardNormal),
            other => Err(Error::InvalidParameter(format!(
                "unknown multiplier law '{other}'"
            ))),
        }
    }

    pub fn draw<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            MultiplierLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            MultiplierLaw::StandardNormal => rng.sample(StandardNormal),
        }
    }
}

/// Multipliers `u_1..u_n` of replicate `b`: stream `b` of a ChaCha8
/// generator keyed by `seed`, so every replicate is reproducible on its own.
pub fn replicate_multipliers<T: Scalar>(
    law: MultiplierLaw,
    seed: u64,
    b: usize,
    n: usize,
) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| T::lit(law.draw(&mut rng))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Gamma,
    Beta,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Gamma => "gamma",
            Target::Beta => "beta",
        })
    }
}

/// Linear functional `a(t)` applied to the target coefficient vector.
#[derive(Clone)]
pub enum Contrast<T> {
    /// Zero-based coordinate of `β` or `γ`.
    Coordinate(usize),
    Constant(Vec<T>),
    Function(Arc<dyn Fn(T) -> Vec<T> + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for Contrast<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Contrast::Coordinate(k) => f.debug_tuple("Coordinate").field(k).finish(),
            Contrast::Constant(a) => f.debug_tuple("Constant").field(a).finish(),
            Contrast::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl<T: Scalar> Contrast<T> {
    fn at(&self, t: T, dim: usize) -> Result<Vec<T>> {
        let a = match self {
            Contrast::Coordinate(k) => {
                if *k >= dim {
                    return Err(Error::InvalidParameter(format!(
                        "contrast coordinate {} out of range (dimension {dim})",
                        k + 1
                    )));
                }
                let mut a = vec![T::zero(); dim];
                a[*k] = T::one();
                a
            }
            Contrast::Constant(a) => a.clone(),
            Contrast::Function(f) => f(t),
        };
        if a.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "contrast has length {} but the target has dimension {dim}",
                a.len()
            )));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScbConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub law: MultiplierLaw,
    pub seed: u64,
}

impl Default for ScbConfig {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            alpha: 0.05,
            law: MultiplierLaw::Rademacher,
            seed: 0,
        }
    }
}

impl ScbConfig {
    fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::InvalidParameter(format!(
                "need at least 100 bootstrap replicates, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScbResult<T> {
    pub target: Target,
    pub grid: Vec<T>,
    /// `a(t)^T` times the estimate at each grid point.
    pub center: Vec<T>,
    pub c_alpha: T,
    pub alpha: f64,
    pub replicates: usize,
    pub law: MultiplierLaw,
    pub sup_stats: Vec<T>,
    pub seed: u64,
}

impl<T: Scalar> ScbResult<T> {
    pub fn lower(&self, i: usize) -> T {
        self.center[i] - self.c_alpha
    }

    pub fn upper(&self, i: usize) -> T {
        self.center[i] + self.c_alpha
    }

    /// Whether `truth(t)` lies inside the band at every grid point.
    pub fn covers(&self, truth: impl Fn(T) -> T) -> bool {
        self.grid.iter().enumerate().all(|(i, &t)| {
            let v = truth(t);
            self.lower(i) <= v && v <= self.upper(i)
        })
    }

    /// Critical value at another level from the same draws.
    pub fn critical_value(&self, alpha: f64) -> T {
        percentile(&self.sup_stats, alpha)
    }
}

/// `⌈(1-α)B⌉`-th order statistic (one-based).
pub fn percentile<T: Scalar>(stats: &[T], alpha: f64) -> T {
    let mut sorted = stats.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let b = sorted.len();
    let k = (((1.0 - alpha) * b as f64) - 1e-9).ceil() as usize;
    sorted[k.clamp(1, b) - 1]
}

/// Per-pair kernel-weighted residuals `K_{h1,h2}(t1-t, t2-t) (Y - R^T ρ̂)`
/// of a one-step solution `rho` (layout `(β, β̇, γ, γ̇)` on the original time
/// scale), per subject in `(j, k)` order.
pub fn kernel_weighted_residuals<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    rho: &[T],
    t: T,
    kernel: KernelFamily,
    h1: T,
    h2: T,
) -> Result<Vec<Vec<T>>> {
    let (p, q) = (dataset.p(), dataset.q());
    if rho.len() != 2 * (p + q) {
        return Err(Error::InvalidParameter(format!(
            "solution has length {} but expected {}",
            rho.len(),
            2 * (p + q)
        )));
    }
    let pk = ProductKernel::new(kernel, h1, h2)?;
    Ok(dataset
        .subjects()
        .iter()
        .map(|s| {
            s.pairs()
                .map(|pr| {
                    let w = pk.weight(pr.t1 - t, pr.t2 - t);
                    if w == T::zero() {
                        return T::zero();
                    }
                    let (d1, d2) = (pr.t1 - t, pr.t2 - t);
                    let mut fit = T::zero();
                    for c in 0..p {
                        fit += pr.x[c] * (rho[c] + rho[p + c] * d1);
                    }
                    for c in 0..q {
                        fit += pr.z[c] * (rho[2 * p + c] + rho[2 * p + q + c] * d2);
                    }
                    w * (pr.y - fit)
                })
                .collect()
        })
        .collect())
}

/// `n^-1 Σ_i f_n(t)^-1 ΣΣ W r̂` with `W = Z(t2)` (`Gamma`) or `X(t1)`
/// (`Beta`), from per-pair residuals as returned by
/// [`kernel_weighted_residuals`].
pub fn q_hat<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    residuals: &[Vec<T>],
    t: T,
    target: Target,
    kernel: KernelFamily,
    h1: T,
    h2: T,
) -> Result<Vec<T>> {
    let pk = ProductKernel::new(kernel, h1, h2)?;
    let dim = match target {
        Target::Gamma => dataset.q(),
        Target::Beta => dataset.p(),
    };
    let n = T::from_usize_lossy(dataset.n());
    let mut f = Matrix::zeros(dim, dim);
    let mut score = vec![T::zero(); dim];
    for (s, res) in dataset.subjects().iter().zip(residuals) {
        for (pr, &r) in s.pairs().zip(res) {
            let w = pk.weight(pr.t1 - t, pr.t2 - t);
            let v = match target {
                Target::Gamma => pr.z,
                Target::Beta => pr.x,
            };
            if w != T::zero() {
                f.add_outer(w / n, v);
            }
            for (acc, &x) in score.iter_mut().zip(v) {
                *acc += x * r;
            }
        }
    }
    let lu = checked_lu(&f, t)?;
    Ok(lu.solve(&score).into_iter().map(|v| v / n).collect())
}

/// Subject contributions to the linearized error process on a grid.
#[derive(Debug, Clone)]
pub struct BootstrapProcess<T> {
    pub target: Target,
    pub grid: Vec<T>,
    /// Target coefficient vector at each grid point (for VCM β this is
    /// `(α, β)`).
    pub estimate: Vec<Vec<T>>,
    /// `[grid point][subject]` contribution vectors.
    pub contributions: Vec<Vec<Vec<T>>>,
    /// Leading coordinates that contrasts skip (the VCM intercept).
    pub offset: usize,
    pub n: usize,
}

/// Rows, unscaled solution and weighted-regressor columns for one point.
fn point_rows<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    curve: &CurveEstimate<T>,
    i: usize,
    target: Target,
) -> Result<(Rows<T>, Vec<T>, Vec<usize>)> {
    let pt = &curve.points[i];
    let t = pt.t;
    let s = &curve.smoothing;
    let (p, q) = (dataset.p(), dataset.q());
    let unavailable = || Error::CurveUnavailable {
        t: t.to_f64_lossy(),
    };
    let raw = |est: &CoefficientEstimate<T>, d: &[T]| -> Vec<T> {
        est.solution.iter().zip(d).map(|(&v, &d)| v / d).collect()
    };
    match (curve.method, target) {
        (Method::OneStep, _) => {
            let est = pt.primary.as_ref().map_err(Clone::clone)?;
            let pk = ProductKernel::new(s.kernel, s.h1, s.h2)?;
            let rows = one_step_rows(dataset, t, &pk);
            let theta = raw(est, &one_step_unscale(p, q, s.h1, s.h2));
            let cols = match target {
                Target::Beta => (0..p).collect(),
                Target::Gamma => (2 * p..2 * p + q).collect(),
            };
            Ok((rows, theta, cols))
        }
        (method, Target::Beta) => {
            let est = pt.primary.as_ref().map_err(Clone::clone)?;
            let h = s.h.ok_or_else(unavailable)?;
            let k = ScaledKernel::new(s.kernel, h)?;
            let first = curve.first_stage.as_ref().ok_or_else(unavailable)?;
            let (rows, width) = match (&first.centered, method) {
                (Some(c), Method::TwoStepCentering) => (centering_rows(c, t, &k), p),
                _ => (vcm_rows(dataset, t, &k), p + 1),
            };
            let theta = raw(est, &level_deriv_unscale(width, h));
            Ok((rows, theta, (0..width).collect()))
        }
        (_, Target::Gamma) => {
            if q == 0 {
                return Err(Error::InvalidParameter(
                    "no asynchronous covariates to band".into(),
                ));
            }
            let est = pt.secondary.as_ref().ok_or_else(unavailable)?;
            let est = est.as_ref().map_err(Clone::clone)?;
            let first = curve.first_stage.as_ref().ok_or_else(unavailable)?;
            let pk = ProductKernel::new(s.kernel, s.h1, s.h2)?;
            let rows = second_step_rows(dataset, &first.partial_residuals, t, &pk)?;
            let theta = raw(est, &level_deriv_unscale(q, s.h2));
            Ok((rows, theta, (0..q).collect()))
        }
    }
}

/// Per-subject `f_n^-1 Σ w (y - row·θ) W / n`, zero for subjects without rows.
fn subject_contributions<T: Scalar>(
    rows: &Rows<T>,
    theta: &[T],
    cols: &[usize],
    n: usize,
    t: T,
) -> Result<Vec<Vec<T>>> {
    let m = cols.len();
    let nn = T::from_usize_lossy(n);
    let mut f = Matrix::zeros(m, m);
    let mut scores = vec![vec![T::zero(); m]; n];
    let mut w_vec = vec![T::zero(); m];
    for r in 0..rows.len() {
        let row = rows.row(r);
        let w = rows.weight(r);
        for (dst, &c) in w_vec.iter_mut().zip(cols) {
            *dst = row[c];
        }
        f.add_outer(w / nn, &w_vec);
        let resid = w * (rows.response(r) - dot(row, theta));
        for (acc, &x) in scores[rows.subject(r)].iter_mut().zip(&w_vec) {
            *acc += x * resid;
        }
    }
    if rows.len() == 0 {
        return Err(Error::SingularLocalFit {
            t: t.to_f64_lossy(),
        });
    }
    let lu = checked_lu(&f, t)?;
    Ok(scores
        .into_iter()
        .map(|sc| lu.solve(&sc).into_iter().map(|v| v / nn).collect())
        .collect())
}

impl<T: Scalar> BootstrapProcess<T> {
    pub fn new(
        dataset: &LongitudinalDataset<T>,
        curve: &CurveEstimate<T>,
        target: Target,
    ) -> Result<Self> {
        let n = dataset.n();
        let per_point: Vec<Result<(Vec<T>, Vec<Vec<T>>)>> = (0..curve.points.len())
            .into_par_iter()
            .map(|i| {
                let (rows, theta, cols) = point_rows(dataset, curve, i, target)?;
                let t = curve.points[i].t;
                let contrib = subject_contributions(&rows, &theta, &cols, n, t)?;
                let est = cols.iter().map(|&c| theta[c]).collect();
                Ok((est, contrib))
            })
            .collect();
        let mut estimate = Vec::with_capacity(per_point.len());
        let mut contributions = Vec::with_capacity(per_point.len());
        for r in per_point {
            let (e, c) = r?;
            estimate.push(e);
            contributions.push(c);
        }
        let offset = usize::from(curve.method == Method::TwoStepVcm && target == Target::Beta);
        Ok(Self {
            target,
            grid: curve.grid.clone(),
            estimate,
            contributions,
            offset,
            n,
        })
    }

    /// `Q̂_n^u(t)` at every grid point for multipliers `u`.
    pub fn replicate(&self, u: &[T]) -> Vec<Vec<T>> {
        self.contributions
            .iter()
            .map(|per_subject| {
                let m = per_subject.first().map_or(0, Vec::len);
                let mut acc = vec![T::zero(); m];
                for (c, &ui) in per_subject.iter().zip(u) {
                    for (a, &v) in acc.iter_mut().zip(c) {
                        *a += ui * v;
                    }
                }
                acc
            })
            .collect()
    }

    /// `Q̂_n(t)` (or `Ĵ_n(t)`) at every grid point.
    pub fn q_hat(&self) -> Vec<Vec<T>> {
        self.replicate(&vec![T::one(); self.n])
    }

    fn contrast_vectors(&self, contrast: &Contrast<T>) -> Result<Vec<Vec<T>>> {
        self.grid
            .iter()
            .zip(&self.estimate)
            .map(|(&t, est)| {
                let a = contrast.at(t, est.len() - self.offset)?;
                let mut full = vec![T::zero(); self.offset];
                full.extend(a);
                Ok(full)
            })
            .collect()
    }

    /// Wild-bootstrap band for `a(t)^T θ(t)`.
    pub fn band(&self, contrast: &Contrast<T>, config: &ScbConfig) -> Result<ScbResult<T>> {
        config.validate()?;
        let a = self.contrast_vectors(contrast)?;
        let center: Vec<T> = a
            .iter()
            .zip(&self.estimate)
            .map(|(a, e)| dot(a, e))
            .collect();
        // a(t)^T contribution, [grid point][subject]
        let table: Vec<Vec<T>> = a
            .iter()
            .zip(&self.contributions)
            .map(|(a, per)| per.iter().map(|c| dot(a, c)).collect())
            .collect();
        let sup_stats: Vec<T> = (0..config.replicates)
            .into_par_iter()
            .map(|b| {
                let u: Vec<T> = replicate_multipliers(config.law, config.seed, b, self.n);
                table
                    .iter()
                    .map(|row| dot(row, &u).abs())
                    .fold(T::zero(), |m, v| if v > m { v } else { m })
            })
            .collect();
        let c_alpha = percentile(&sup_stats, config.alpha);
        Ok(ScbResult {
            target: self.target,
            grid: self.grid.clone(),
            center,
            c_alpha,
            alpha: config.alpha,
            replicates: config.replicates,
            law: config.law,
            sup_stats,
            seed: config.seed,
        })
    }
}

/// Builds the bootstrap process for `target` and returns its band.
pub fn bootstrap_band<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    curve: &CurveEstimate<T>,
    target: Target,
    contrast: &Contrast<T>,
    config: &ScbConfig,
) -> Result<ScbResult<T>> {
    config.validate()?;
    BootstrapProcess::new(dataset, curve, target)?.band(contrast, config)
}
