//! Standardization of one covariate column.

use serde::{Deserialize, Serialize};

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, ScaledKernel};
use crate::scalar::Scalar;

use super::nw::PooledSeries;

const SCALE_EPS: f64 = 1e-10;

/// Zero-based column of the synchronous (`X`) or asynchronous (`Z`) covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnSelector {
    Sync(usize),
    Async(usize),
}

impl ColumnSelector {
    /// `x1`, `z2`, ... (one-based).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bad column selector '{s}'"));
        let (kind, rest) = s.split_at(s.len().min(1));
        let idx: usize = rest.parse().map_err(|_| bad())?;
        if idx == 0 {
            return Err(bad());
        }
        match kind {
            "x" | "X" => Ok(ColumnSelector::Sync(idx - 1)),
            "z" | "Z" => Ok(ColumnSelector::Async(idx - 1)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    /// Kernel-smoothed mean and SD at each observation time.
    Longitudinal,
    /// One value per subject; cross-subject mean and SD.
    Baseline,
    /// Baseline when the column never changes within a subject.
    #[default]
    Auto,
}

impl NormalizeMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "longitudinal" => Ok(NormalizeMode::Longitudinal),
            "baseline" => Ok(NormalizeMode::Baseline),
            "auto" => Ok(NormalizeMode::Auto),
            other => Err(Error::InvalidParameter(format!(
                "unknown normalize mode '{other}'"
            ))),
        }
    }
}

/// (time, value) observations of a column, grouped by subject.
fn column_values<T: Scalar>(ds: &LongitudinalDataset<T>, col: ColumnSelector) -> Vec<Vec<(T, T)>> {
    ds.subjects()
        .iter()
        .map(|s| match col {
            ColumnSelector::Sync(c) => (0..s.n_sync())
                .map(|j| (s.sync_times[j], s.x(j)[c]))
                .collect(),
            ColumnSelector::Async(c) => (0..s.n_async())
                .map(|k| (s.async_times[k], s.z(k)[c]))
                .collect(),
        })
        .collect()
}

/// Replaces the selected column by `(X(t) - mean(t)) / sd(t)`.
///
/// In longitudinal mode the mean and second moment are Nadaraya–Watson
/// averages over the pooled observations of that column; in baseline mode
/// each subject contributes its first value and the population mean and SD
/// across subjects are used.
pub fn normalize_longitudinal<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    kernel: KernelFamily,
    h: T,
    column: ColumnSelector,
    mode: NormalizeMode,
) -> Result<LongitudinalDataset<T>> {
    let width = match column {
        ColumnSelector::Sync(_) => dataset.p(),
        ColumnSelector::Async(_) => dataset.q(),
    };
    let c = match column {
        ColumnSelector::Sync(c) | ColumnSelector::Async(c) => c,
    };
    if c >= width {
        return Err(Error::InvalidParameter(format!(
            "column {} out of range ({} available)",
            c + 1,
            width
        )));
    }
    let values = column_values(dataset, column);
    let baseline = match mode {
        NormalizeMode::Baseline => true,
        NormalizeMode::Longitudinal => false,
        NormalizeMode::Auto => values
            .iter()
            .all(|obs| obs.windows(2).all(|w| w[0].1 == w[1].1)),
    };

    let eps = T::lit(SCALE_EPS);
    let new_values: Vec<Vec<T>> = if baseline {
        let firsts: Vec<(T, T)> = values
            .iter()
            .filter_map(|obs| obs.first().copied())
            .collect();
        let t0 = firsts.first().map_or(0.0, |f| f.0.to_f64_lossy());
        if firsts.is_empty() {
            return Err(Error::DegenerateScale { t: t0 });
        }
        let n = T::from_usize_lossy(firsts.len());
        let mean = firsts.iter().map(|f| f.1).sum::<T>() / n;
        let var = firsts
            .iter()
            .map(|f| (f.1 - mean) * (f.1 - mean))
            .sum::<T>()
            / n;
        let sd = var.sqrt();
        if !(sd > eps) {
            return Err(Error::DegenerateScale { t: t0 });
        }
        values
            .iter()
            .map(|obs| obs.iter().map(|&(_, v)| (v - mean) / sd).collect())
            .collect()
    } else {
        let k = ScaledKernel::new(kernel, h)?;
        let pool = PooledSeries::new(1, values.iter().flatten().map(|&(t, v)| (t, vec![v])));
        let mut out = Vec::with_capacity(values.len());
        for obs in &values {
            let mut row = Vec::with_capacity(obs.len());
            for &(t, v) in obs {
                let (m1, m2) = pool.moments_at(&k, t, true).ok_or(Error::NoLocalData {
                    t: t.to_f64_lossy(),
                    h: h.to_f64_lossy(),
                })?;
                let var = m2[0] - m1[0] * m1[0];
                if !(var > eps * eps) {
                    return Err(Error::DegenerateScale {
                        t: t.to_f64_lossy(),
                    });
                }
                row.push((v - m1[0]) / var.sqrt());
            }
            out.push(row);
        }
        out
    };

    let mut idx = 0;
    Ok(dataset.map_subjects(|s| {
        let mut s = s.clone();
        let vals = &new_values[idx];
        idx += 1;
        match column {
            ColumnSelector::Sync(c) => {
                let p = s.p();
                for (j, &v) in vals.iter().enumerate() {
                    s.sync_covariates[j * p + c] = v;
                }
            }
            ColumnSelector::Async(c) => {
                let q = s.q();
                for (k, &v) in vals.iter().enumerate() {
                    s.async_covariates[k * q + c] = v;
                }
            }
        }
        s
    }))
}
