//! Mixed synchronous/asynchronous longitudinal data.
//!
//! Each subject carries two observation processes: the response process
//! (times `T_ij` with the response and the synchronous covariates) and the
//! covariate process (times `S_ik` with the asynchronous covariates).
//! Integrating against the bivariate counting process of a subject is a sum
//! over all `L_i * M_i` pairs, exposed by [`SubjectRecord::pairs`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord<T> {
    pub id: String,
    pub sync_times: Vec<T>,
    pub responses: Vec<T>,
    /// Row-major `L_i x p`.
    pub sync_covariates: Vec<T>,
    pub async_times: Vec<T>,
    /// Row-major `M_i x q`.
    pub async_covariates: Vec<T>,
    p: usize,
    q: usize,
}

/// One `(T_ij, S_ik)` pair of a subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationPair<'a, T> {
    pub j: usize,
    pub k: usize,
    pub t1: T,
    pub t2: T,
    pub y: T,
    pub x: &'a [T],
    pub z: &'a [T],
}

impl<T: Scalar> SubjectRecord<T> {
    /// Builds a record from per-observation covariate rows. Shape problems are
    /// reported by [`LongitudinalDataset::validate`], not here.
    pub fn new(
        id: impl Into<String>,
        sync_times: Vec<T>,
        responses: Vec<T>,
        sync_rows: Vec<Vec<T>>,
        async_times: Vec<T>,
        async_rows: Vec<Vec<T>>,
    ) -> Self {
        let p = sync_rows.first().map_or(0, Vec::len);
        let q = async_rows.first().map_or(0, Vec::len);
        Self::from_flat(
            id,
            sync_times,
            responses,
            sync_rows.concat(),
            p,
            async_times,
            async_rows.concat(),
            q,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_flat(
        id: impl Into<String>,
        sync_times: Vec<T>,
        responses: Vec<T>,
        sync_covariates: Vec<T>,
        p: usize,
        async_times: Vec<T>,
        async_covariates: Vec<T>,
        q: usize,
    ) -> Self {
        Self {
            id: id.into(),
            sync_times,
            responses,
            sync_covariates,
            async_times,
            async_covariates,
            p,
            q,
        }
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    /// `L_i`
    #[inline]
    pub fn n_sync(&self) -> usize {
        self.sync_times.len()
    }

    /// `M_i`
    #[inline]
    pub fn n_async(&self) -> usize {
        self.async_times.len()
    }

    #[inline]
    pub fn x(&self, j: usize) -> &[T] {
        &self.sync_covariates[j * self.p..(j + 1) * self.p]
    }

    #[inline]
    pub fn z(&self, k: usize) -> &[T] {
        &self.async_covariates[k * self.q..(k + 1) * self.q]
    }

    /// All `L_i * M_i` pairs in lexicographic `(j, k)` order.
    pub fn pairs(&self) -> impl Iterator<Item = ObservationPair<'_, T>> + '_ {
        (0..self.n_sync()).flat_map(move |j| {
            (0..self.n_async()).map(move |k| ObservationPair {
                j,
                k,
                t1: self.sync_times[j],
                t2: self.async_times[k],
                y: self.responses[j],
                x: self.x(j),
                z: self.z(k),
            })
        })
    }
}

/// Affine map from original study time to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub min: f64,
    pub max: f64,
}

impl TimeMap {
    pub fn to_unit(&self, t: f64) -> f64 {
        (t - self.min) / (self.max - self.min)
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset<T> {
    subjects: Vec<SubjectRecord<T>>,
    p: usize,
    q: usize,
    time_map: Option<TimeMap>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyResponseProcess,
    EmptyCovariateProcess,
    UnexpectedCovariateProcess,
    LengthMismatch(String),
    DimensionMismatch(String),
    TimeOutOfRange,
    NonFinite(String),
    TooFewSubjects(usize),
    ZeroSyncDimension,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::EmptyResponseProcess => write!(f, "empty response process"),
            ViolationKind::EmptyCovariateProcess => write!(f, "empty covariate process"),
            ViolationKind::UnexpectedCovariateProcess => {
                write!(f, "asynchronous observations present but q = 0")
            }
            ViolationKind::LengthMismatch(what) => write!(f, "length mismatch: {what}"),
            ViolationKind::DimensionMismatch(what) => write!(f, "dimension mismatch: {what}"),
            ViolationKind::TimeOutOfRange => write!(f, "time outside [0,1]"),
            ViolationKind::NonFinite(what) => write!(f, "non-finite value in {what}"),
            ViolationKind::TooFewSubjects(n) => write!(f, "need at least 2 subjects, got {n}"),
            ViolationKind::ZeroSyncDimension => write!(f, "p must be at least 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject: Option<String>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.subject {
            Some(id) => write!(f, "subject {id}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, kind: &ViolationKind) -> bool {
        self.violations.iter().any(|v| &v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl<T: Scalar> LongitudinalDataset<T> {
    /// Validated construction.
    pub fn new(subjects: Vec<SubjectRecord<T>>, p: usize, q: usize) -> Result<Self> {
        let ds = Self::new_unchecked(subjects, p, q);
        let report = ds.validate();
        if report.is_valid() {
            Ok(ds)
        } else {
            Err(Error::InvalidData(report.to_string()))
        }
    }

    /// Construction without validation; call [`validate`](Self::validate) to inspect.
    pub fn new_unchecked(mut subjects: Vec<SubjectRecord<T>>, p: usize, q: usize) -> Self {
        // Records built from empty row lists cannot infer their own widths.
        for s in &mut subjects {
            if s.n_sync() == 0 && s.p == 0 {
                s.p = p;
            }
            if s.n_async() == 0 && s.q == 0 {
                s.q = q;
            }
        }
        Self {
            subjects,
            p,
            q,
            time_map: None,
        }
    }

    pub fn with_time_map(mut self, map: TimeMap) -> Self {
        self.time_map = Some(map);
        self
    }

    pub fn time_map(&self) -> Option<TimeMap> {
        self.time_map
    }

    #[inline]
    pub fn subjects(&self) -> &[SubjectRecord<T>] {
        &self.subjects
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn total_sync(&self) -> usize {
        self.subjects.iter().map(SubjectRecord::n_sync).sum()
    }

    pub fn total_async(&self) -> usize {
        self.subjects.iter().map(SubjectRecord::n_async).sum()
    }

    /// Dataset restricted to the given subjects, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            p: self.p,
            q: self.q,
            time_map: self.time_map,
        }
    }

    /// Same dataset with every record transformed.
    pub fn map_subjects(&self, mut f: impl FnMut(&SubjectRecord<T>) -> SubjectRecord<T>) -> Self {
        Self {
            subjects: self.subjects.iter().map(&mut f).collect(),
            p: self.p,
            q: self.q,
            time_map: self.time_map,
        }
    }

    /// Lists every invariant violation; empty iff the dataset is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        let mut push = |subject: Option<&str>, kind| {
            out.push(Violation {
                subject: subject.map(str::to_owned),
                kind,
            })
        };
        if self.subjects.len() < 2 {
            push(None, ViolationKind::TooFewSubjects(self.subjects.len()));
        }
        if self.p == 0 {
            push(None, ViolationKind::ZeroSyncDimension);
        }
        let unit = |t: T| t >= T::zero() && t <= T::one();
        for s in &self.subjects {
            let id = Some(s.id.as_str());
            if s.p != self.p {
                push(
                    id,
                    ViolationKind::DimensionMismatch(format!("p = {} (expected {})", s.p, self.p)),
                );
            }
            if s.q != self.q {
                push(
                    id,
                    ViolationKind::DimensionMismatch(format!("q = {} (expected {})", s.q, self.q)),
                );
            }
            if s.sync_times.is_empty() {
                push(id, ViolationKind::EmptyResponseProcess);
            }
            if self.q > 0 && s.async_times.is_empty() {
                push(id, ViolationKind::EmptyCovariateProcess);
            }
            if self.q == 0 && !s.async_times.is_empty() {
                push(id, ViolationKind::UnexpectedCovariateProcess);
            }
            if s.responses.len() != s.sync_times.len() {
                push(
                    id,
                    ViolationKind::LengthMismatch(format!(
                        "{} responses for {} sync times",
                        s.responses.len(),
                        s.sync_times.len()
                    )),
                );
            }
            if s.sync_covariates.len() != s.sync_times.len() * s.p {
                push(
                    id,
                    ViolationKind::LengthMismatch("synchronous covariate rows".into()),
                );
            }
            if s.async_covariates.len() != s.async_times.len() * s.q {
                push(
                    id,
                    ViolationKind::LengthMismatch("asynchronous covariate rows".into()),
                );
            }
            let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
            for (what, vals) in [
                ("sync_times", &s.sync_times),
                ("responses", &s.responses),
                ("sync_covariates", &s.sync_covariates),
                ("async_times", &s.async_times),
                ("async_covariates", &s.async_covariates),
            ] {
                if !finite(vals) {
                    push(id, ViolationKind::NonFinite(what.into()));
                }
            }
            if !s
                .sync_times
                .iter()
                .chain(&s.async_times)
                .all(|&t| !t.is_finite() || unit(t))
            {
                push(id, ViolationKind::TimeOutOfRange);
            }
        }
        ValidationReport { violations: out }
    }
}

/// Rescales raw times to `[0, 1]` using the study-wide observed range.
pub fn rescale_times<T: Scalar>(subjects: &mut [SubjectRecord<T>]) -> Result<TimeMap> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in subjects.iter() {
        for &t in s.sync_times.iter().chain(&s.async_times) {
            let t = t.to_f64_lossy();
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidData(
            "observation times must span a nondegenerate finite range".into(),
        ));
    }
    let map = TimeMap { min: lo, max: hi };
    for s in subjects.iter_mut() {
        for t in s.sync_times.iter_mut().chain(s.async_times.iter_mut()) {
            let u = map.to_unit(t.to_f64_lossy()).clamp(0.0, 1.0);
            *t = T::lit(u);
        }
    }
    Ok(map)
}
