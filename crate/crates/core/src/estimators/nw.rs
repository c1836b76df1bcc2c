//! Nadaraya–Watson mean curves and the centering transform.

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, ScaledKernel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanTarget {
    Response,
    Covariates,
}

/// Observations from all subjects pooled and sorted by time, so a kernel
/// window is found by binary search. Ties keep subject-major input order.
#[derive(Debug, Clone)]
pub(crate) struct PooledSeries<T> {
    times: Vec<T>,
    values: Vec<T>,
    dim: usize,
}

impl<T: Scalar> PooledSeries<T> {
    pub fn new(dim: usize, obs: impl Iterator<Item = (T, Vec<T>)>) -> Self {
        let mut items: Vec<(T, Vec<T>)> = obs.collect();
        items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut times = Vec::with_capacity(items.len());
        let mut values = Vec::with_capacity(items.len() * dim);
        for (t, v) in items {
            debug_assert_eq!(v.len(), dim);
            times.push(t);
            values.extend(v);
        }
        Self { times, values, dim }
    }

    pub fn sync_response_and_covariates(ds: &LongitudinalDataset<T>) -> Self {
        let obs = ds.subjects().iter().flat_map(|s| {
            (0..s.n_sync()).map(move |j| {
                let mut v = Vec::with_capacity(1 + s.p());
                v.push(s.responses[j]);
                v.extend_from_slice(s.x(j));
                (s.sync_times[j], v)
            })
        });
        Self::new(1 + ds.p(), obs)
    }

    /// Kernel-weighted mean of every value column at `t0`; `None` when the
    /// total weight is zero.
    pub fn mean_at(&self, kernel: &ScaledKernel<T>, t0: T) -> Option<Vec<T>> {
        self.moments_at(kernel, t0, false).map(|(m, _)| m)
    }

    /// Weighted first and (optionally) second moments at `t0`.
    pub fn moments_at(
        &self,
        kernel: &ScaledKernel<T>,
        t0: T,
        second: bool,
    ) -> Option<(Vec<T>, Vec<T>)> {
        let h = kernel.bandwidth();
        let lo = self.times.partition_point(|&t| t < t0 - h);
        let hi = self.times.partition_point(|&t| t <= t0 + h);
        let mut denom = T::zero();
        let mut num = vec![T::zero(); self.dim];
        let mut num2 = vec![T::zero(); if second { self.dim } else { 0 }];
        for r in lo..hi {
            let w = kernel.weight(self.times[r] - t0);
            if w == T::zero() {
                continue;
            }
            denom += w;
            let vals = &self.values[r * self.dim..(r + 1) * self.dim];
            for (acc, &v) in num.iter_mut().zip(vals) {
                *acc += w * v;
            }
            for (acc, &v) in num2.iter_mut().zip(vals) {
                *acc += w * v * v;
            }
        }
        if !(denom > T::zero()) {
            return None;
        }
        num.iter_mut().for_each(|v| *v /= denom);
        num2.iter_mut().for_each(|v| *v /= denom);
        Some((num, num2))
    }
}

/// Kernel-weighted average of the response (length 1) or of each synchronous
/// covariate column (length `p`) over all subjects' synchronous observations.
pub fn nw_mean<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    t: T,
    kernel: KernelFamily,
    h: T,
    target: MeanTarget,
) -> Result<Vec<T>> {
    let k = ScaledKernel::new(kernel, h)?;
    let pool = PooledSeries::sync_response_and_covariates(dataset);
    let m = pool.mean_at(&k, t).ok_or(Error::NoLocalData {
        t: t.to_f64_lossy(),
        h: h.to_f64_lossy(),
    })?;
    Ok(match target {
        MeanTarget::Response => m[..1].to_vec(),
        MeanTarget::Covariates => m[1..].to_vec(),
    })
}

/// Mean curve evaluated on a set of times.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve<T> {
    pub times: Vec<T>,
    /// `None` where the kernel window is empty.
    pub values: Vec<Option<Vec<T>>>,
    pub h: T,
}

pub fn nw_curve<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    times: &[T],
    kernel: KernelFamily,
    h: T,
    target: MeanTarget,
) -> Result<MeanCurve<T>> {
    let k = ScaledKernel::new(kernel, h)?;
    let pool = PooledSeries::sync_response_and_covariates(dataset);
    let values = times
        .iter()
        .map(|&t| {
            pool.mean_at(&k, t).map(|m| match target {
                MeanTarget::Response => m[..1].to_vec(),
                MeanTarget::Covariates => m[1..].to_vec(),
            })
        })
        .collect();
    Ok(MeanCurve {
        times: times.to_vec(),
        values,
        h,
    })
}

/// Dataset with Nadaraya–Watson means removed from the response and the
/// synchronous covariates. Asynchronous covariates are untouched.
#[derive(Debug, Clone)]
pub struct CenteredDataset<T> {
    original: LongitudinalDataset<T>,
    centered: LongitudinalDataset<T>,
    mean_y: Vec<Vec<T>>,
    mean_x: Vec<Vec<T>>,
    kernel: KernelFamily,
    h: T,
}

impl<T: Scalar> CenteredDataset<T> {
    pub fn original(&self) -> &LongitudinalDataset<T> {
        &self.original
    }

    /// Centered values `Ŷ`, `X̂` in dataset form.
    pub fn centered(&self) -> &LongitudinalDataset<T> {
        &self.centered
    }

    /// `m̂_Y(T_ij)` per subject.
    pub fn mean_y(&self) -> &[Vec<T>] {
        &self.mean_y
    }

    /// `m̂_X(T_ij)` per subject, row-major `L_i x p`.
    pub fn mean_x(&self) -> &[Vec<T>] {
        &self.mean_x
    }

    pub fn bandwidth(&self) -> T {
        self.h
    }

    pub fn kernel(&self) -> KernelFamily {
        self.kernel
    }

    pub fn n(&self) -> usize {
        self.original.n()
    }

    /// Restriction to some subjects; the means stay those of the full data.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            original: self.original.subset(indices),
            centered: self.centered.subset(indices),
            mean_y: indices.iter().map(|&i| self.mean_y[i].clone()).collect(),
            mean_x: indices.iter().map(|&i| self.mean_x[i].clone()).collect(),
            kernel: self.kernel,
            h: self.h,
        }
    }
}

/// Subtracts `m̂_Y(T_ij)` and `m̂_X(T_ij)` from every synchronous observation.
pub fn center<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    kernel: KernelFamily,
    h: T,
) -> Result<CenteredDataset<T>> {
    let k = ScaledKernel::new(kernel, h)?;
    let pool = PooledSeries::sync_response_and_covariates(dataset);
    let p = dataset.p();
    let mut mean_y = Vec::with_capacity(dataset.n());
    let mut mean_x = Vec::with_capacity(dataset.n());
    for s in dataset.subjects() {
        let mut my = Vec::with_capacity(s.n_sync());
        let mut mx = Vec::with_capacity(s.n_sync() * p);
        for &t in &s.sync_times {
            let m = pool.mean_at(&k, t).ok_or(Error::NoLocalData {
                t: t.to_f64_lossy(),
                h: h.to_f64_lossy(),
            })?;
            my.push(m[0]);
            mx.extend_from_slice(&m[1..]);
        }
        mean_y.push(my);
        mean_x.push(mx);
    }
    let mut i = 0;
    let centered = dataset.map_subjects(|s| {
        let mut c = s.clone();
        for (y, m) in c.responses.iter_mut().zip(&mean_y[i]) {
            *y -= *m;
        }
        for (x, m) in c.sync_covariates.iter_mut().zip(&mean_x[i]) {
            *x -= *m;
        }
        i += 1;
        c
    });
    Ok(CenteredDataset {
        original: dataset.clone(),
        centered,
        mean_y,
        mean_x,
        kernel,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;

    fn toy() -> LongitudinalDataset<f64> {
        let subs = vec![
            SubjectRecord::new(
                "a",
                vec![0.3, 0.45, 0.8],
                vec![1.0, 2.5, -1.0],
                vec![vec![0.5, 1.0], vec![1.5, -1.0], vec![0.0, 2.0]],
                vec![0.2],
                vec![vec![1.0]],
            ),
            SubjectRecord::new(
                "b",
                vec![0.35, 0.5],
                vec![3.0, 0.25],
                vec![vec![-0.5, 0.0], vec![2.0, 1.0]],
                vec![0.4],
                vec![vec![0.0]],
            ),
            SubjectRecord::new(
                "c",
                vec![0.42],
                vec![-2.0],
                vec![vec![1.0, 1.0]],
                vec![0.9],
                vec![vec![2.0]],
            ),
        ];
        LongitudinalDataset::new(subs, 2, 1).unwrap()
    }

    #[test]
    fn constant_response_gives_constant_mean() {
        let ds = toy().map_subjects(|s| {
            let mut c = s.clone();
            c.responses.iter_mut().for_each(|y| *y = 2.0);
            c
        });
        for t in [0.3, 0.4, 0.5] {
            let m = nw_mean(
                &ds,
                t,
                KernelFamily::Epanechnikov,
                0.2,
                MeanTarget::Response,
            )
            .unwrap();
            assert!((m[0] - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_point_reproduces_value() {
        let a = SubjectRecord::new(
            "a",
            vec![0.5],
            vec![3.0],
            vec![vec![1.0]],
            vec![0.5],
            vec![vec![0.0]],
        );
        let b = SubjectRecord::new(
            "b",
            vec![0.95],
            vec![9.0],
            vec![vec![1.0]],
            vec![0.5],
            vec![vec![0.0]],
        );
        let ds = LongitudinalDataset::new(vec![a, b], 1, 1).unwrap();
        let m = nw_mean(
            &ds,
            0.5,
            KernelFamily::Epanechnikov,
            0.1,
            MeanTarget::Response,
        )
        .unwrap();
        assert_eq!(m, vec![3.0]);
    }

    #[test]
    fn matches_two_loop_oracle() {
        let ds = toy();
        let (t, h) = (0.4, 0.2);
        let mut num_y = 0.0;
        let mut num_x = [0.0, 0.0];
        let mut den = 0.0;
        for s in ds.subjects() {
            for j in 0..s.n_sync() {
                let u = (s.sync_times[j] - t) / h;
                let w = if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u) / h
                } else {
                    0.0
                };
                den += w;
                num_y += w * s.responses[j];
                num_x[0] += w * s.x(j)[0];
                num_x[1] += w * s.x(j)[1];
            }
        }
        let my = nw_mean(&ds, t, KernelFamily::Epanechnikov, h, MeanTarget::Response).unwrap();
        let mx = nw_mean(
            &ds,
            t,
            KernelFamily::Epanechnikov,
            h,
            MeanTarget::Covariates,
        )
        .unwrap();
        assert!((my[0] - num_y / den).abs() < 1e-12);
        assert!((mx[0] - num_x[0] / den).abs() < 1e-12);
        assert!((mx[1] - num_x[1] / den).abs() < 1e-12);
    }

    #[test]
    fn empty_window_is_an_error() {
        let ds = toy();
        let err = nw_mean(
            &ds,
            0.05,
            KernelFamily::Epanechnikov,
            0.1,
            MeanTarget::Response,
        );
        assert!(matches!(err, Err(Error::NoLocalData { .. })));
    }

    #[test]
    fn centering_identity_is_exact() {
        let ds = toy();
        let c = center(&ds, KernelFamily::Epanechnikov, 0.2).unwrap();
        for (i, s) in ds.subjects().iter().enumerate() {
            let cs = &c.centered().subjects()[i];
            for j in 0..s.n_sync() {
                assert_eq!(cs.responses[j], s.responses[j] - c.mean_y()[i][j]);
                for col in 0..2 {
                    assert_eq!(cs.x(j)[col], s.x(j)[col] - c.mean_x()[i][j * 2 + col]);
                }
            }
            assert_eq!(cs.async_covariates, s.async_covariates);
        }
    }

    #[test]
    fn constant_response_centers_to_zero() {
        let ds = toy().map_subjects(|s| {
            let mut c = s.clone();
            c.responses.iter_mut().for_each(|y| *y = 7.0);
            c
        });
        let c = center(&ds, KernelFamily::Epanechnikov, 0.3).unwrap();
        for s in c.centered().subjects() {
            for &y in &s.responses {
                assert!(y.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn lone_contributor_centers_to_zero() {
        // observations are farther apart than the bandwidth, so each is its
        // own only weight contributor
        let a = SubjectRecord::new(
            "a",
            vec![0.1, 0.6],
            vec![4.0, -3.0],
            vec![vec![2.0], vec![1.0]],
            vec![0.5],
            vec![vec![0.0]],
        );
        let b = SubjectRecord::new(
            "b",
            vec![0.9],
            vec![1.5],
            vec![vec![-1.0]],
            vec![0.5],
            vec![vec![0.0]],
        );
        let ds = LongitudinalDataset::new(vec![a, b], 1, 1).unwrap();
        let c = center(&ds, KernelFamily::Epanechnikov, 0.1).unwrap();
        for s in c.centered().subjects() {
            assert!(s.responses.iter().all(|&y| y == 0.0));
            assert!(s.sync_covariates.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn recentering_uniform_grid_gives_zero_means() {
        // every subject observed on the same grid: NW means are cross-subject
        // averages at each time, so centered data average to zero exactly
        let grid: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
        let subs: Vec<_> = (0..4)
            .map(|i| {
                let fi = i as f64;
                SubjectRecord::new(
                    format!("s{i}"),
                    grid.clone(),
                    grid.iter().map(|t| (fi + 1.0) * t + fi * fi).collect(),
                    grid.iter().map(|t| vec![t * t - fi]).collect(),
                    vec![0.5],
                    vec![vec![1.0]],
                )
            })
            .collect();
        let ds = LongitudinalDataset::new(subs, 1, 1).unwrap();
        let h = 0.049; // window holds a single grid time
        let once = center(&ds, KernelFamily::Epanechnikov, h).unwrap();
        let twice = center(once.centered(), KernelFamily::Epanechnikov, h).unwrap();
        for my in twice.mean_y() {
            for m in my {
                assert!(m.abs() < 1e-8, "{m}");
            }
        }
        for t in [0.25, 0.5, 0.75] {
            let m = nw_mean(
                once.centered(),
                t,
                KernelFamily::Epanechnikov,
                h,
                MeanTarget::Response,
            )
            .unwrap();
            assert!(m[0].abs() < 1e-8);
        }
    }

    #[test]
    fn nw_curve_flags_empty_windows() {
        let ds = toy();
        let curve = nw_curve(
            &ds,
            &[0.02, 0.4],
            KernelFamily::Epanechnikov,
            0.1,
            MeanTarget::Response,
        )
        .unwrap();
        assert!(curve.values[0].is_none());
        assert!(curve.values[1].is_some());
    }
}
