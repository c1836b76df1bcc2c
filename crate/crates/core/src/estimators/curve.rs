//! Grid-level fitting for the one-step and two-step methods.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::kernels::{check_bandwidth, KernelFamily, ProductKernel};
use crate::scalar::Scalar;

use super::local::{
    fit_centering, fit_one_step, fit_vcm, second_step_with, CoefficientCurve, InterpolatedCurve,
    PartialResiduals,
};
use super::nw::{center, CenteredDataset};
use super::{CoefName, CoefficientEstimate, Z_95};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OneStep,
    TwoStepCentering,
    TwoStepVcm,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "one-step" => Ok(Method::OneStep),
            "two-step" | "two-step-centering" => Ok(Method::TwoStepCentering),
            "two-step-vcm" => Ok(Method::TwoStepVcm),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }

    pub fn is_two_step(self) -> bool {
        !matches!(self, Method::OneStep)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::OneStep => "one-step",
            Method::TwoStepCentering => "two-step-centering",
            Method::TwoStepVcm => "two-step-vcm",
        })
    }
}

/// Kernel and bandwidths: `h` for the first stage of the two-step methods,
/// `(h1, h2)` for the bivariate kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing<T> {
    pub kernel: KernelFamily,
    pub h: Option<T>,
    pub h1: T,
    pub h2: T,
}

impl<T: Scalar> Smoothing<T> {
    pub fn one_step(h1: T, h2: T) -> Self {
        Self {
            kernel: KernelFamily::Epanechnikov,
            h: None,
            h1,
            h2,
        }
    }

    pub fn two_step(h: T, h1: T, h2: T) -> Self {
        Self {
            kernel: KernelFamily::Epanechnikov,
            h: Some(h),
            h1,
            h2,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelFamily) -> Self {
        self.kernel = kernel;
        self
    }

    fn first_stage_h(&self) -> Result<T> {
        let h = self.h.ok_or_else(|| {
            Error::InvalidParameter("two-step methods need a first-stage bandwidth h".into())
        })?;
        check_bandwidth(h)
    }
}

/// Reporting grid: 181 equally spaced points on `[0.05, 0.95]`.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    equally_spaced(0.05, 0.95, 181)
}

/// Grid used to tabulate the first-stage curve for interpolation: 201 points
/// on `[0, 1]` with the same spacing as [`default_grid`].
pub fn first_stage_grid<T: Scalar>() -> Vec<T> {
    equally_spaced(0.0, 1.0, 201)
}

pub(crate) fn equally_spaced<T: Scalar>(a: f64, b: f64, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::lit(a)];
    }
    (0..n)
        .map(|k| T::lit(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect()
}

/// Nonempty, strictly increasing, inside `[0, 1]`.
pub fn validate_grid<T: Scalar>(grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    if grid.iter().any(|&t| !(t >= T::zero() && t <= T::one())) {
        return Err(Error::InvalidParameter(
            "grid points must lie in [0, 1]".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Fits at one grid time. For the one-step method `primary` holds the joint
/// fit; for two-step methods `primary` is the first stage and `secondary`
/// the second stage (absent when `q = 0`).
#[derive(Debug, Clone)]
pub struct CurvePoint<T> {
    pub t: T,
    pub primary: Result<CoefficientEstimate<T>>,
    pub secondary: Option<Result<CoefficientEstimate<T>>>,
}

impl<T: Scalar> CurvePoint<T> {
    pub fn get(&self, name: CoefName) -> Option<(T, T)> {
        let from = |r: &Result<CoefficientEstimate<T>>| r.as_ref().ok().and_then(|e| e.get(name));
        from(&self.primary).or_else(|| self.secondary.as_ref().and_then(from))
    }

    pub fn errors(&self) -> Vec<&Error> {
        let mut out = Vec::new();
        if let Err(e) = &self.primary {
            out.push(e);
        }
        if let Some(Err(e)) = &self.secondary {
            out.push(e);
        }
        out
    }

    pub fn is_ok(&self) -> bool {
        self.errors().is_empty()
    }
}

/// Precomputed first stage of a two-step fit.
#[derive(Debug, Clone)]
pub struct FirstStage<T> {
    pub centered: Option<CenteredDataset<T>>,
    pub beta_curve: InterpolatedCurve<T>,
    pub partial_residuals: PartialResiduals<T>,
}

#[derive(Debug, Clone)]
pub struct CurveEstimate<T> {
    pub method: Method,
    pub smoothing: Smoothing<T>,
    pub grid: Vec<T>,
    pub points: Vec<CurvePoint<T>>,
    pub p: usize,
    pub q: usize,
    pub first_stage: Option<Arc<FirstStage<T>>>,
}

impl<T: Scalar> CurveEstimate<T> {
    /// Coefficients reported on the grid, in output order.
    pub fn coefficient_names(&self) -> Vec<CoefName> {
        let mut names = Vec::new();
        if self.method == Method::TwoStepVcm {
            names.push(CoefName::Alpha);
        }
        names.extend((0..self.p).map(CoefName::Beta));
        names.extend((0..self.q).map(CoefName::Gamma));
        names
    }

    pub fn estimate(&self, i: usize, name: CoefName) -> Option<(T, T)> {
        self.points[i].get(name)
    }

    /// Pointwise 95% interval `estimate ± 1.96 SE`.
    pub fn ci(&self, i: usize, name: CoefName) -> Option<(T, T)> {
        self.estimate(i, name).map(|(e, se)| {
            let half = T::lit(Z_95) * se;
            (e - half, e + half)
        })
    }

    pub fn n_failed(&self) -> usize {
        self.points.iter().filter(|p| !p.is_ok()).count()
    }

    pub fn all_ok(&self) -> bool {
        self.n_failed() == 0
    }
}

/// A fitted first stage (for two-step methods) that can be evaluated at any
/// set of grid points.
#[derive(Debug, Clone)]
pub struct TwoStepPipeline<T> {
    dataset: LongitudinalDataset<T>,
    method: Method,
    smoothing: Smoothing<T>,
    first: Option<Arc<FirstStage<T>>>,
}

impl<T: Scalar> TwoStepPipeline<T> {
    pub fn new(
        dataset: &LongitudinalDataset<T>,
        method: Method,
        smoothing: Smoothing<T>,
    ) -> Result<Self> {
        check_bandwidth(smoothing.h1)?;
        check_bandwidth(smoothing.h2)?;
        if method == Method::OneStep && dataset.q() == 0 {
            return Err(Error::InvalidParameter(
                "the one-step method needs asynchronous covariates (q >= 1)".into(),
            ));
        }
        let first = if method.is_two_step() {
            let h = smoothing.first_stage_h()?;
            let centered = match method {
                Method::TwoStepCentering => Some(center(dataset, smoothing.kernel, h)?),
                _ => None,
            };
            let grid = first_stage_grid::<T>();
            let fits: Vec<Option<Vec<T>>> = grid
                .par_iter()
                .map(|&t| {
                    let fit = match &centered {
                        Some(c) => fit_centering(c, t, smoothing.kernel, h),
                        None => fit_vcm(dataset, t, smoothing.kernel, h),
                    };
                    fit.ok().map(|e| e.beta())
                })
                .collect();
            let beta_curve = InterpolatedCurve::new(grid, fits, dataset.p());
            let partial_residuals = PartialResiduals::new(dataset, &beta_curve)?;
            Some(Arc::new(FirstStage {
                centered,
                beta_curve,
                partial_residuals,
            }))
        } else {
            None
        };
        Ok(Self {
            dataset: dataset.clone(),
            method,
            smoothing,
            first,
        })
    }

    pub fn dataset(&self) -> &LongitudinalDataset<T> {
        &self.dataset
    }

    pub fn first_stage(&self) -> Option<&Arc<FirstStage<T>>> {
        self.first.as_ref()
    }

    pub fn beta_curve(&self) -> Option<&dyn CoefficientCurve<T>> {
        self.first
            .as_ref()
            .map(|f| &f.beta_curve as &dyn CoefficientCurve<T>)
    }

    pub fn fit_point(&self, t: T) -> CurvePoint<T> {
        let s = &self.smoothing;
        match (&self.first, self.method) {
            (None, _) => CurvePoint {
                t,
                primary: fit_one_step(&self.dataset, t, s.kernel, s.h1, s.h2),
                secondary: None,
            },
            (Some(first), method) => {
                let h = s.h.expect("validated in new");
                let primary = match (&first.centered, method) {
                    (Some(c), _) => fit_centering(c, t, s.kernel, h),
                    _ => fit_vcm(&self.dataset, t, s.kernel, h),
                };
                let secondary = (self.dataset.q() > 0).then(|| {
                    ProductKernel::new(s.kernel, s.h1, s.h2).and_then(|pk| {
                        second_step_with(&self.dataset, &first.partial_residuals, t, &pk)
                    })
                });
                CurvePoint {
                    t,
                    primary,
                    secondary,
                }
            }
        }
    }

    pub fn fit_grid(&self, grid: &[T]) -> Result<CurveEstimate<T>> {
        validate_grid(grid)?;
        let points: Vec<CurvePoint<T>> = grid.par_iter().map(|&t| self.fit_point(t)).collect();
        let curve = CurveEstimate {
            method: self.method,
            smoothing: self.smoothing,
            grid: grid.to_vec(),
            points,
            p: self.dataset.p(),
            q: self.dataset.q(),
            first_stage: self.first.clone(),
        };
        let any = curve
            .points
            .iter()
            .any(|pt| pt.primary.is_ok() || matches!(pt.secondary, Some(Ok(_))));
        if !any {
            return Err(Error::EstimationFailed);
        }
        Ok(curve)
    }
}

/// Fits `method` at every grid point. Points whose fit fails are kept and
/// carry the error.
pub fn fit_curve<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    method: Method,
    grid: &[T],
    smoothing: Smoothing<T>,
) -> Result<CurveEstimate<T>> {
    validate_grid(grid)?;
    TwoStepPipeline::new(dataset, method, smoothing)?.fit_grid(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_181_points() {
        let g: Vec<f64> = default_grid();
        assert_eq!(g.len(), 181);
        assert_eq!(g[0], 0.05);
        assert!((g[180] - 0.95).abs() < 1e-15);
        assert!((g[1] - g[0] - 0.005).abs() < 1e-12);
        let f: Vec<f64> = first_stage_grid();
        assert_eq!(f.len(), 201);
        assert!((f[10] - g[0]).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid::<f64>(&[]).is_err());
        assert!(validate_grid(&[0.2, 0.2]).is_err());
        assert!(validate_grid(&[0.3, 0.2]).is_err());
        assert!(validate_grid(&[0.2, 1.2]).is_err());
        assert!(validate_grid(&[0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("one-step").unwrap(), Method::OneStep);
        assert_eq!(Method::parse("two-step").unwrap(), Method::TwoStepCentering);
        assert_eq!(Method::parse("two-step-vcm").unwrap(), Method::TwoStepVcm);
        assert!(Method::parse("three-step").is_err());
    }
}
