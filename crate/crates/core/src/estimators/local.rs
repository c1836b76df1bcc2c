//! Pointwise local-linear fits.
//!
//! Derivative columns are built as `x (t1 - t) / h` rather than `x (t1 - t)`
//! to keep the normal matrix well conditioned; the solution and covariance
//! are mapped back to the `(t1 - t)` parametrization before returning.

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, ProductKernel, ScaledKernel};
use crate::linalg::dot;
use crate::scalar::Scalar;

use super::engine::{solve_weighted, Rows};
use super::nw::CenteredDataset;
use super::{CoefficientEstimate, DesignLayout};

/// A coefficient curve that can be evaluated at arbitrary times.
pub trait CoefficientCurve<T>: Send + Sync {
    fn dim(&self) -> usize;
    /// `None` where the curve is not available.
    fn eval(&self, t: T) -> Option<Vec<T>>;
}

/// Curve backed by a closure.
pub struct FnCurve<F> {
    pub dim: usize,
    pub f: F,
}

impl<T, F> CoefficientCurve<T> for FnCurve<F>
where
    F: Fn(T) -> Vec<T> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: T) -> Option<Vec<T>> {
        Some((self.f)(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCurve<T>(pub Vec<T>);

impl<T: Scalar> CoefficientCurve<T> for ConstantCurve<T> {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, _t: T) -> Option<Vec<T>> {
        Some(self.0.clone())
    }
}

/// Piecewise-linear interpolation of pointwise estimates on a sorted grid.
/// Failed grid points are skipped; outside the span of successful points the
/// curve is unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedCurve<T> {
    grid: Vec<T>,
    values: Vec<Option<Vec<T>>>,
    dim: usize,
    ok: Vec<usize>,
}

impl<T: Scalar> InterpolatedCurve<T> {
    pub fn new(grid: Vec<T>, values: Vec<Option<Vec<T>>>, dim: usize) -> Self {
        assert_eq!(grid.len(), values.len());
        let ok = (0..grid.len()).filter(|&i| values[i].is_some()).collect();
        Self {
            grid,
            values,
            dim,
            ok,
        }
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn values(&self) -> &[Option<Vec<T>>] {
        &self.values
    }
}

impl<T: Scalar> CoefficientCurve<T> for InterpolatedCurve<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: T) -> Option<Vec<T>> {
        let first = *self.ok.first()?;
        let last = *self.ok.last()?;
        if t < self.grid[first] || t > self.grid[last] {
            return None;
        }
        // first successful point with grid time >= t
        let pos = self.ok.partition_point(|&i| self.grid[i] < t);
        let right = self.ok[pos];
        if self.grid[right] == t || pos == 0 {
            return self.values[right].clone();
        }
        let left = self.ok[pos - 1];
        let (tl, tr) = (self.grid[left], self.grid[right]);
        let lam = (t - tl) / (tr - tl);
        let vl = self.values[left].as_ref()?;
        let vr = self.values[right].as_ref()?;
        Some(
            vl.iter()
                .zip(vr)
                .map(|(&a, &b)| a + lam * (b - a))
                .collect(),
        )
    }
}

/// `Y_i(T_ij) - X_i(T_ij)^T β̂(T_ij)` for every synchronous observation;
/// `None` where the curve is unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialResiduals<T> {
    values: Vec<Vec<Option<T>>>,
}

impl<T: Scalar> PartialResiduals<T> {
    pub fn new(dataset: &LongitudinalDataset<T>, beta: &dyn CoefficientCurve<T>) -> Result<Self> {
        if beta.dim() != dataset.p() {
            return Err(Error::InvalidParameter(format!(
                "coefficient curve has dimension {} but p = {}",
                beta.dim(),
                dataset.p()
            )));
        }
        let values = dataset
            .subjects()
            .iter()
            .map(|s| {
                (0..s.n_sync())
                    .map(|j| {
                        beta.eval(s.sync_times[j])
                            .map(|b| s.responses[j] - dot(s.x(j), &b))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { values })
    }

    pub fn get(&self, subject: usize, j: usize) -> Option<T> {
        self.values[subject][j]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            values: indices.iter().map(|&i| self.values[i].clone()).collect(),
        }
    }
}

fn require_async<T: Scalar>(dataset: &LongitudinalDataset<T>) -> Result<()> {
    if dataset.q() == 0 {
        return Err(Error::InvalidParameter(
            "this estimator needs asynchronous covariates (q >= 1)".into(),
        ));
    }
    Ok(())
}

/// Marginal kernel factors of one subject for a product kernel at `t`.
#[inline]
pub(crate) fn marginal_factors<T: Scalar>(
    kernel: &ProductKernel<T>,
    sync_times: &[T],
    async_times: &[T],
    t: T,
    k1: &mut Vec<T>,
    k2: &mut Vec<T>,
) {
    k1.clear();
    k1.extend(sync_times.iter().map(|&t1| kernel.raw_first(t1 - t)));
    k2.clear();
    k2.extend(async_times.iter().map(|&t2| kernel.raw_second(t2 - t)));
}

pub(crate) fn one_step_rows<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    t: T,
    kernel: &ProductKernel<T>,
) -> Rows<T> {
    let (p, q) = (dataset.p(), dataset.q());
    let (h1, h2) = (kernel.h1(), kernel.h2());
    let mut rows = Rows::new(2 * (p + q));
    let (mut k1, mut k2) = (Vec::new(), Vec::new());
    for (i, s) in dataset.subjects().iter().enumerate() {
        marginal_factors(kernel, &s.sync_times, &s.async_times, t, &mut k1, &mut k2);
        for j in 0..s.n_sync() {
            if k1[j] == T::zero() {
                continue;
            }
            let u1 = (s.sync_times[j] - t) / h1;
            let x = s.x(j);
            for k in 0..s.n_async() {
                if k2[k] == T::zero() {
                    continue;
                }
                let u2 = (s.async_times[k] - t) / h2;
                let z = s.z(k);
                let w = kernel.raw_pair(k1[j], k2[k]);
                let slot = rows.push(i, w, s.responses[j]);
                for c in 0..p {
                    slot[c] = x[c];
                    slot[p + c] = x[c] * u1;
                }
                for c in 0..q {
                    slot[2 * p + c] = z[c];
                    slot[2 * p + q + c] = z[c] * u2;
                }
            }
        }
    }
    rows
}

pub(crate) fn one_step_unscale<T: Scalar>(p: usize, q: usize, h1: T, h2: T) -> Vec<T> {
    let mut d = vec![T::one(); 2 * (p + q)];
    d[p..2 * p].iter_mut().for_each(|v| *v = T::one() / h1);
    d[2 * p + q..].iter_mut().for_each(|v| *v = T::one() / h2);
    d
}

/// Joint local-linear fit of `(β, β̇, γ, γ̇)` at `t`, weighting every
/// `(T_ij, S_ik)` pair by `K_{h1,h2}(T_ij - t, S_ik - t)`.
pub fn fit_one_step<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    t: T,
    kernel: KernelFamily,
    h1: T,
    h2: T,
) -> Result<CoefficientEstimate<T>> {
    require_async(dataset)?;
    let pk = ProductKernel::new(kernel, h1, h2)?;
    let rows = one_step_rows(dataset, t, &pk);
    let sol = solve_weighted(&rows, t, h1.min(h2))?;
    let (p, q) = (dataset.p(), dataset.q());
    Ok(CoefficientEstimate::from_solution(
        DesignLayout::OneStep { p, q },
        t,
        sol,
        &one_step_unscale(p, q, h1, h2),
    ))
}

/// Rows `(x, x u)` with `u = (t1 - t)/h`, univariate weights, response `y`.
fn local_linear_rows<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    t: T,
    kernel: &ScaledKernel<T>,
    intercept: bool,
) -> Rows<T> {
    let p = dataset.p();
    let width = p + usize::from(intercept);
    let h = kernel.bandwidth();
    let mut rows = Rows::new(2 * width);
    for (i, s) in dataset.subjects().iter().enumerate() {
        for j in 0..s.n_sync() {
            let d = s.sync_times[j] - t;
            let w = kernel.weight(d);
            if w == T::zero() {
                continue;
            }
            let u = d / h;
            let x = s.x(j);
            let slot = rows.push(i, w, s.responses[j]);
            let (lvl, der) = slot.split_at_mut(width);
            let off = usize::from(intercept);
            if intercept {
                lvl[0] = T::one();
                der[0] = u;
            }
            for c in 0..p {
                lvl[off + c] = x[c];
                der[off + c] = x[c] * u;
            }
        }
    }
    rows
}

pub(crate) fn centering_rows<T: Scalar>(
    centered: &CenteredDataset<T>,
    t: T,
    kernel: &ScaledKernel<T>,
) -> Rows<T> {
    local_linear_rows(centered.centered(), t, kernel, false)
}

pub(crate) fn vcm_rows<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    t: T,
    kernel: &ScaledKernel<T>,
) -> Rows<T> {
    local_linear_rows(dataset, t, kernel, true)
}

pub(crate) fn level_deriv_unscale<T: Scalar>(width: usize, h: T) -> Vec<T> {
    let mut d = vec![T::one(); 2 * width];
    d[width..].iter_mut().for_each(|v| *v = T::one() / h);
    d
}

/// Local-linear fit of the centered response on the centered synchronous
/// covariates. The normal matrix is `n h [[S0, S1], [S1, S2]]` and the raw
/// solution is `(β̂_c, h β̂̇_c)`; the derivative is returned divided by `h`.
pub fn fit_centering<T: Scalar>(
    centered: &CenteredDataset<T>,
    t: T,
    kernel: KernelFamily,
    h: T,
) -> Result<CoefficientEstimate<T>> {
    let k = ScaledKernel::new(kernel, h)?;
    let rows = centering_rows(centered, t, &k);
    let sol = solve_weighted(&rows, t, h)?;
    let p = centered.original().p();
    Ok(CoefficientEstimate::from_solution(
        DesignLayout::Centering { p },
        t,
        sol,
        &level_deriv_unscale(p, h),
    ))
}

/// Local-linear fit of `Y` on `(1, X)` with a nonparametric intercept `α(t)`.
pub fn fit_vcm<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    t: T,
    kernel: KernelFamily,
    h: T,
) -> Result<CoefficientEstimate<T>> {
    let k = ScaledKernel::new(kernel, h)?;
    let rows = vcm_rows(dataset, t, &k);
    let sol = solve_weighted(&rows, t, h)?;
    let p = dataset.p();
    Ok(CoefficientEstimate::from_solution(
        DesignLayout::Vcm { p },
        t,
        sol,
        &level_deriv_unscale(p + 1, h),
    ))
}

pub(crate) fn second_step_rows<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    resid: &PartialResiduals<T>,
    t: T,
    kernel: &ProductKernel<T>,
) -> Result<Rows<T>> {
    let q = dataset.q();
    let h2 = kernel.h2();
    let mut rows = Rows::new(2 * q);
    let (mut k1, mut k2) = (Vec::new(), Vec::new());
    for (i, s) in dataset.subjects().iter().enumerate() {
        marginal_factors(kernel, &s.sync_times, &s.async_times, t, &mut k1, &mut k2);
        if k2.iter().all(|&v| v == T::zero()) {
            continue;
        }
        for j in 0..s.n_sync() {
            if k1[j] == T::zero() {
                continue;
            }
            let r = resid.get(i, j).ok_or(Error::CurveUnavailable {
                t: s.sync_times[j].to_f64_lossy(),
            })?;
            for k in 0..s.n_async() {
                if k2[k] == T::zero() {
                    continue;
                }
                let u2 = (s.async_times[k] - t) / h2;
                let z = s.z(k);
                let w = kernel.raw_pair(k1[j], k2[k]);
                let slot = rows.push(i, w, r);
                for c in 0..q {
                    slot[c] = z[c];
                    slot[q + c] = z[c] * u2;
                }
            }
        }
    }
    Ok(rows)
}

pub(crate) fn second_step_with<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    resid: &PartialResiduals<T>,
    t: T,
    kernel: &ProductKernel<T>,
) -> Result<CoefficientEstimate<T>> {
    require_async(dataset)?;
    let rows = second_step_rows(dataset, resid, t, kernel)?;
    let sol = solve_weighted(&rows, t, kernel.h1().min(kernel.h2()))?;
    let q = dataset.q();
    Ok(CoefficientEstimate::from_solution(
        DesignLayout::SecondStep { q },
        t,
        sol,
        &level_deriv_unscale(q, kernel.h2()),
    ))
}

/// Second stage: regresses `Y(T_ij) - X(T_ij)^T β̂(T_ij)` on
/// `(Z(S_ik), Z(S_ik)(S_ik - t))` with bivariate kernel weights.
pub fn fit_gamma_second_step<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    beta: &dyn CoefficientCurve<T>,
    t: T,
    kernel: KernelFamily,
    h1: T,
    h2: T,
) -> Result<CoefficientEstimate<T>> {
    require_async(dataset)?;
    let pk = ProductKernel::new(kernel, h1, h2)?;
    // only observations inside the window need β̂
    let sk = ScaledKernel::new(kernel, h1)?;
    let windowed = WindowedCurve {
        inner: beta,
        t,
        kernel: sk,
    };
    let resid = PartialResiduals::new(dataset, &windowed)?;
    second_step_with(dataset, &resid, t, &pk)
}

struct WindowedCurve<'a, T> {
    inner: &'a dyn CoefficientCurve<T>,
    t: T,
    kernel: ScaledKernel<T>,
}

impl<T: Scalar> CoefficientCurve<T> for WindowedCurve<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, t1: T) -> Option<Vec<T>> {
        if self.kernel.raw(t1 - self.t) == T::zero() {
            // outside the window the value is never used
            Some(vec![T::zero(); self.inner.dim()])
        } else {
            self.inner.eval(t1)
        }
    }
}
