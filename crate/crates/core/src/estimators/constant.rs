//! Time-invariant coefficients.
//!
//! A constant `β` is the pooled least-squares slope of the centered response
//! on the centered covariates. A constant `γ` is the pooled least-squares fit
//! of the partial residuals on `Z`, over all pairs, weighted by
//! `K_h(T_ij - S_ik)`.

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, ScaledKernel};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::curve::first_stage_grid;
use super::engine::{solve_weighted, Rows};
use super::local::{
    fit_centering, CoefficientCurve, ConstantCurve, InterpolatedCurve, PartialResiduals,
};
use super::nw::{center, CenteredDataset};
use super::CoefName;

/// Which blocks are constant, with the bandwidths used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSpec<T> {
    pub beta: bool,
    pub gamma: bool,
    pub kernel: KernelFamily,
    /// Centering (and varying-β first stage) bandwidth.
    pub h: T,
    /// Bandwidth on the time mismatch `T_ij - S_ik` for constant `γ`.
    pub h_gamma: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimate<T> {
    pub names: Vec<CoefName>,
    pub coef: Vec<T>,
    pub cov: Matrix<T>,
    pub n_rows: usize,
}

impl<T: Scalar> ConstantEstimate<T> {
    pub fn se(&self) -> Vec<T> {
        self.cov
            .diagonal()
            .into_iter()
            .map(|v| v.max(T::zero()).sqrt())
            .collect()
    }

    pub fn get(&self, name: CoefName) -> Option<(T, T)> {
        let i = self.names.iter().position(|&n| n == name)?;
        Some((self.coef[i], self.cov[(i, i)].max(T::zero()).sqrt()))
    }
}

#[derive(Debug, Clone)]
pub struct ConstantFit<T> {
    pub beta: Option<ConstantEstimate<T>>,
    pub gamma: Option<ConstantEstimate<T>>,
}

fn pooled<T: Scalar>(rows: &Rows<T>) -> Result<(Vec<T>, Matrix<T>)> {
    let sol = solve_weighted(rows, T::zero(), T::one()).map_err(|e| match e {
        Error::SingularLocalFit { .. } | Error::NoLocalData { .. } => Error::SingularFit,
        other => other,
    })?;
    Ok((sol.theta, sol.cov))
}

/// Pooled unweighted least squares of `Ŷ` on `X̂`.
pub fn fit_constant_beta<T: Scalar>(centered: &CenteredDataset<T>) -> Result<ConstantEstimate<T>> {
    let ds = centered.centered();
    let p = ds.p();
    let mut rows = Rows::new(p);
    for (i, s) in ds.subjects().iter().enumerate() {
        for j in 0..s.n_sync() {
            rows.push(i, T::one(), s.responses[j])
                .copy_from_slice(s.x(j));
        }
    }
    let (coef, cov) = pooled(&rows)?;
    Ok(ConstantEstimate {
        names: (0..p).map(CoefName::Beta).collect(),
        coef,
        cov,
        n_rows: rows.len(),
    })
}

/// Pooled least squares of the partial residuals on `Z` over all pairs,
/// weighted by `K_h(T_ij - S_ik)`.
pub fn fit_constant_gamma<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    resid: &PartialResiduals<T>,
    kernel: KernelFamily,
    h: T,
) -> Result<ConstantEstimate<T>> {
    let q = dataset.q();
    if q == 0 {
        return Err(Error::InvalidParameter(
            "a constant gamma needs asynchronous covariates (q >= 1)".into(),
        ));
    }
    let k = ScaledKernel::new(kernel, h)?;
    let mut rows = Rows::new(q);
    for (i, s) in dataset.subjects().iter().enumerate() {
        for pair in s.pairs() {
            let w = k.weight(pair.t1 - pair.t2);
            if w == T::zero() {
                continue;
            }
            let r = resid.get(i, pair.j).ok_or(Error::CurveUnavailable {
                t: pair.t1.to_f64_lossy(),
            })?;
            rows.push(i, w, r).copy_from_slice(pair.z);
        }
    }
    let (coef, cov) = pooled(&rows)?;
    Ok(ConstantEstimate {
        names: (0..q).map(CoefName::Gamma).collect(),
        coef,
        cov,
        n_rows: rows.len(),
    })
}

/// Fits the blocks flagged in `spec` as constant. When `β` is constant but
/// `γ` is requested, the partial residuals use the constant `β̂`; otherwise
/// they use the interpolated centering first stage.
pub fn fit_constant_coefficients<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    spec: &ConstantSpec<T>,
) -> Result<ConstantFit<T>> {
    let centered = center(dataset, spec.kernel, spec.h)?;
    let beta = if spec.beta {
        Some(fit_constant_beta(&centered)?)
    } else {
        None
    };
    let gamma = if spec.gamma {
        let curve: Box<dyn CoefficientCurve<T>> = match &beta {
            Some(b) => Box::new(ConstantCurve(b.coef.clone())),
            None => {
                let grid = first_stage_grid::<T>();
                let values = grid
                    .iter()
                    .map(|&t| {
                        fit_centering(&centered, t, spec.kernel, spec.h)
                            .ok()
                            .map(|e| e.coef)
                    })
                    .collect();
                Box::new(InterpolatedCurve::new(grid, values, dataset.p()))
            }
        };
        let resid = PartialResiduals::new(dataset, curve.as_ref())?;
        Some(fit_constant_gamma(
            dataset,
            &resid,
            spec.kernel,
            spec.h_gamma,
        )?)
    } else {
        None
    };
    Ok(ConstantFit { beta, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;

    #[test]
    fn exact_constant_beta_is_recovered() {
        // Y = 2.5 X exactly, so the centered data satisfy Ŷ = 2.5 X̂ too
        let subjects = (0..6)
            .map(|i| {
                let times = vec![0.1 + 0.1 * i as f64, 0.5, 0.85 - 0.05 * i as f64];
                let xs: Vec<f64> = times.iter().map(|t| (7.0 * t + i as f64).sin()).collect();
                let ys = xs.iter().map(|x| 2.5 * x).collect();
                SubjectRecord::new(
                    format!("s{i}"),
                    times,
                    ys,
                    xs.into_iter().map(|x| vec![x]).collect(),
                    vec![],
                    vec![],
                )
            })
            .collect();
        let ds = LongitudinalDataset::new(subjects, 1, 0).unwrap();
        let c = center(&ds, KernelFamily::Epanechnikov, 0.3).unwrap();
        let est = fit_constant_beta(&c).unwrap();
        assert!((est.coef[0] - 2.5).abs() < 1e-12);
        assert!(est.cov.max_abs() < 1e-20);
    }

    #[test]
    fn all_zero_covariates_are_singular() {
        let subjects = (0..3)
            .map(|i| {
                SubjectRecord::new(
                    format!("s{i}"),
                    vec![0.5],
                    vec![i as f64],
                    vec![vec![0.0]],
                    vec![],
                    vec![],
                )
            })
            .collect();
        let ds = LongitudinalDataset::new(subjects, 1, 0).unwrap();
        let c = center(&ds, KernelFamily::Epanechnikov, 0.3).unwrap();
        assert_eq!(fit_constant_beta(&c).unwrap_err(), Error::SingularFit);
    }
}
