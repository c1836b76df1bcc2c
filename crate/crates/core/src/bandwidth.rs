//! Kernel-smoothed D-fold cross-validation over subjects.
//!
//! For a candidate bandwidth the prediction error at `t` is the average
//! over folds of a kernel-weighted mean squared residual of the held-out
//! subjects, where the coefficients are refitted without that fold:
//!
//! * first stage: residual `Ŷ(T_ij) - X̂(T_ij)^T β̂⁽⁻ᵏ⁾(T_ij)`, weight `K_h(T_ij - t)`;
//! * second stage: residual `Y(T_ij) - X(T_ij)^T β̂(T_ij) - Z(S_ik)^T γ̂⁽⁻ᵏ⁾(S_ik)`,
//!   weight `K_{h1,h2}(T_ij - t, S_ik - t)`, with `β̂` from a completed first stage;
//! * one-step: as the second stage, with `β̂⁽⁻ᵏ⁾(T_ij)` and `γ̂⁽⁻ᵏ⁾(S_ik)`
//!   both taken from joint fits on the training subjects.
//!
//! Each fold contributes `Σ w r² / Σ w`; the error is the plain mean of those
//! ratios, summed in a fixed fold order that does not depend on the labels.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::LongitudinalDataset;
use crate::error::{Error, Result};
use crate::estimators::local::second_step_with;
use crate::estimators::{
    center, fit_centering, fit_one_step, CenteredDataset, CoefficientCurve, Method,
    PartialResiduals, Smoothing, TwoStepPipeline,
};
use crate::kernels::{KernelFamily, ProductKernel, ScaledKernel};
use crate::linalg::dot;
use crate::scalar::Scalar;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_CANDIDATES: usize = 8;

/// A bandwidth for the first stage, or an `(h1, h2)` pair.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub enum Candidate<T> {
    Single(T),
    Pair(T, T),
}

impl<T: Scalar> Candidate<T> {
    pub fn h1(&self) -> T {
        match *self {
            Candidate::Single(h) | Candidate::Pair(h, _) => h,
        }
    }

    /// Equal to `h1` for a single bandwidth.
    pub fn h2(&self) -> T {
        match *self {
            Candidate::Single(h) | Candidate::Pair(_, h) => h,
        }
    }

    fn is_valid(&self) -> bool {
        let ok = |h: T| h > T::zero() && h.is_finite();
        ok(self.h1()) && ok(self.h2())
    }
}

/// Where the prediction error is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Evaluation<T> {
    Pointwise(T),
    /// Mean of the pointwise errors over the grid.
    Integrated(Vec<T>),
}

impl<T: Scalar> Evaluation<T> {
    fn times(&self) -> &[T] {
        match self {
            Evaluation::Pointwise(t) => std::slice::from_ref(t),
            Evaluation::Integrated(g) => g,
        }
    }

    /// Integrated over `0.1, 0.15, ..., 0.9`.
    pub fn default_integrated() -> Self {
        Evaluation::Integrated(
            (0..17)
                .map(|i| T::lit(0.1) + T::lit(0.05) * T::from_usize_lossy(i))
                .collect(),
        )
    }
}

/// Which fit the bandwidth is selected for.
#[derive(Clone, Copy)]
pub enum Stage<'a, T> {
    FirstStage,
    /// Needs the first-stage `β̂` curve, so `h` is chosen before `(h1, h2)`.
    SecondStage(&'a dyn CoefficientCurve<T>),
    OneStep,
}

impl<T> Stage<'_, T> {
    pub fn label(&self) -> &'static str {
        match self {
            Stage::FirstStage => "first-stage",
            Stage::SecondStage(_) => "second-stage",
            Stage::OneStep => "one-step",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan<T> {
    folds: usize,
    seed: u64,
    assignment: Vec<usize>,
    candidates: Vec<Candidate<T>>,
    evaluation: Evaluation<T>,
    kernel: KernelFamily,
}

impl<T: Scalar> CvPlan<T> {
    /// Shuffles subjects with `seed` and deals them round-robin into `folds` folds.
    pub fn new(
        n_subjects: usize,
        folds: usize,
        seed: u64,
        candidates: Vec<Candidate<T>>,
        evaluation: Evaluation<T>,
        kernel: KernelFamily,
    ) -> Result<Self> {
        if folds < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 folds, got {folds}"
            )));
        }
        if n_subjects < folds {
            return Err(Error::InvalidParameter(format!(
                "{n_subjects} subjects cannot fill {folds} folds"
            )));
        }
        let mut order: Vec<usize> = (0..n_subjects).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![0; n_subjects];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % folds;
        }
        Self::with_assignment(assignment, seed, candidates, evaluation, kernel)
    }

    /// Uses a given fold label per subject.
    pub fn with_assignment(
        assignment: Vec<usize>,
        seed: u64,
        candidates: Vec<Candidate<T>>,
        evaluation: Evaluation<T>,
        kernel: KernelFamily,
    ) -> Result<Self> {
        let folds = assignment.iter().max().map_or(0, |&m| m + 1);
        if folds < 2 {
            return Err(Error::InvalidParameter("need at least 2 folds".into()));
        }
        let mut sizes = vec![0usize; folds];
        for &f in &assignment {
            sizes[f] += 1;
        }
        if let Some(k) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidParameter(format!("fold {k} is empty")));
        }
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("no candidate bandwidths".into()));
        }
        if let Some(c) = candidates.iter().find(|c| !c.is_valid()) {
            return Err(Error::InvalidBandwidth(c.h1().min(c.h2()).to_f64_lossy()));
        }
        let mut candidates = candidates;
        candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite candidates"));
        candidates.dedup();
        let times = evaluation.times();
        if times.is_empty() || times.iter().any(|&t| !(t >= T::zero() && t <= T::one())) {
            return Err(Error::InvalidParameter(
                "evaluation times must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            folds,
            seed,
            assignment,
            candidates,
            evaluation,
            kernel,
        })
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fold label of each subject.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn candidates(&self) -> &[Candidate<T>] {
        &self.candidates
    }

    pub fn evaluation(&self) -> &Evaluation<T> {
        &self.evaluation
    }

    pub fn kernel(&self) -> KernelFamily {
        self.kernel
    }

    pub fn with_evaluation(self, evaluation: Evaluation<T>) -> Result<Self> {
        Self::with_assignment(
            self.assignment,
            self.seed,
            self.candidates,
            evaluation,
            self.kernel,
        )
    }

    /// `(held-out, training)` subject indices, folds ordered by their
    /// smallest subject index so relabelling does not change the sums.
    fn splits(&self) -> Vec<(usize, Vec<usize>, Vec<usize>)> {
        let mut first = vec![usize::MAX; self.folds];
        for (i, &f) in self.assignment.iter().enumerate() {
            first[f] = first[f].min(i);
        }
        let mut labels: Vec<usize> = (0..self.folds).collect();
        labels.sort_by_key(|&f| first[f]);
        labels
            .into_iter()
            .map(|f| {
                let (held, train) =
                    (0..self.assignment.len()).partition(|&i| self.assignment[i] == f);
                (f, held, train)
            })
            .collect()
    }
}

/// `n^(-a)` for `a` log-spaced from `hi` down to `lo`: 8 values from
/// `n^(-hi)` to `n^(-lo)`, ascending.
fn log_spaced<T: Scalar>(n: usize, lo: f64, hi: f64) -> Vec<T> {
    let nf = n.max(2) as f64;
    let m = DEFAULT_CANDIDATES;
    (0..m)
        .map(|i| {
            let a = hi + (lo - hi) * i as f64 / (m - 1) as f64;
            T::lit(nf.powf(-a))
        })
        .collect()
}

/// Default candidates: `(n^-0.8, n^-0.6)` for the first stage and
/// `h1 = h2` over `(n^-0.5, n^-0.4)` otherwise.
pub fn default_candidates<T: Scalar>(n: usize, stage: &Stage<'_, T>) -> Vec<Candidate<T>> {
    match stage {
        Stage::FirstStage => log_spaced(n, 0.6, 0.8)
            .into_iter()
            .map(Candidate::Single)
            .collect(),
        _ => log_spaced(n, 0.4, 0.5)
            .into_iter()
            .map(|h| Candidate::Pair(h, h))
            .collect(),
    }
}

impl<T: Scalar> CvPlan<T> {
    /// 5 folds, default candidates, integrated error.
    pub fn default_for(
        ds: &LongitudinalDataset<T>,
        stage: &Stage<'_, T>,
        kernel: KernelFamily,
        seed: u64,
    ) -> Result<Self> {
        Self::new(
            ds.n(),
            DEFAULT_FOLDS,
            seed,
            default_candidates(ds.n(), stage),
            Evaluation::default_integrated(),
            kernel,
        )
    }
}

/// Weighted squared residuals of one held-out fold, accumulated per time.
struct FoldSums<T> {
    num: Vec<T>,
    den: Vec<T>,
}

impl<T: Scalar> FoldSums<T> {
    fn new(m: usize) -> Self {
        Self {
            num: vec![T::zero(); m],
            den: vec![T::zero(); m],
        }
    }

    fn ratios(&self, fold: usize, times: &[T]) -> Result<Vec<T>> {
        self.num
            .iter()
            .zip(&self.den)
            .zip(times)
            .map(|((&a, &b), &t)| {
                if b > T::zero() {
                    Ok(a / b)
                } else {
                    Err(Error::FoldDegenerate {
                        fold,
                        t: t.to_f64_lossy(),
                    })
                }
            })
            .collect()
    }
}

/// Caches fits by evaluation time (bit pattern) within one fold.
struct FitCache<T> {
    map: HashMap<u64, Vec<T>>,
}

impl<T: Scalar> FitCache<T> {
    fn new() -> Self {
        Self {
            map: HashMap::new(),
        }
    }

    fn get(&mut self, t: T, fit: impl FnOnce(T) -> Result<Vec<T>>) -> Result<&Vec<T>> {
        let key = t.to_f64_lossy().to_bits();
        if let std::collections::hash_map::Entry::Vacant(e) = self.map.entry(key) {
            let v = fit(t)?;
            e.insert(v);
        }
        Ok(&self.map[&key])
    }
}

/// Per-time prediction errors of the first stage, averaged over folds.
fn first_stage_errors<T: Scalar>(
    plan: &CvPlan<T>,
    centered: &CenteredDataset<T>,
    times: &[T],
    h: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let k = ScaledKernel::new(plan.kernel, h)?;
    let ds = centered.centered();
    let mut total = vec![T::zero(); times.len()];
    let mut per_fold = Vec::with_capacity(plan.folds);
    for (fold, held, train) in plan.splits() {
        let cen_train = centered.subset(&train);
        let mut cache = FitCache::new();
        let mut sums = FoldSums::new(times.len());
        for &i in &held {
            let s = &ds.subjects()[i];
            for j in 0..s.n_sync() {
                let t1 = s.sync_times[j];
                let mut resid2 = None;
                for (m, &t) in times.iter().enumerate() {
                    let w = k.weight(t1 - t);
                    if w == T::zero() {
                        continue;
                    }
                    let r2 = match resid2 {
                        Some(v) => v,
                        None => {
                            let beta = cache.get(t1, |t1| {
                                fit_centering(&cen_train, t1, plan.kernel, h).map(|e| e.coef)
                            })?;
                            let r = s.responses[j] - dot(s.x(j), beta);
                            *resid2.insert(r * r)
                        }
                    };
                    sums.num[m] += w * r2;
                    sums.den[m] += w;
                }
            }
        }
        let ratios = sums.ratios(fold, times)?;
        for (acc, r) in total.iter_mut().zip(&ratios) {
            *acc += *r;
        }
        per_fold.push(mean(&ratios));
    }
    let d = T::from_usize_lossy(plan.folds);
    Ok((total.into_iter().map(|v| v / d).collect(), per_fold))
}

/// Training-side predictions for the pair-weighted objective.
enum PairModel<'a, T> {
    /// Fixed `β̂` curve, `γ̂` refitted by the second stage.
    Second {
        beta: &'a dyn CoefficientCurve<T>,
        resid: PartialResiduals<T>,
    },
    /// Both from joint fits.
    OneStep,
}

struct FoldModel<'a, T> {
    model: &'a PairModel<'a, T>,
    train: LongitudinalDataset<T>,
    train_resid: Option<PartialResiduals<T>>,
    kernel: ProductKernel<T>,
    cache: FitCache<T>,
}

impl<'a, T: Scalar> FoldModel<'a, T> {
    fn new(
        model: &'a PairModel<'a, T>,
        ds: &LongitudinalDataset<T>,
        train: &[usize],
        kernel: ProductKernel<T>,
    ) -> Self {
        let train_resid = match model {
            PairModel::Second { resid, .. } => Some(resid.subset(train)),
            PairModel::OneStep => None,
        };
        Self {
            model,
            train: ds.subset(train),
            train_resid,
            kernel,
            cache: FitCache::new(),
        }
    }

    fn one_step(&mut self, t: T) -> Result<&Vec<T>> {
        let (train, pk) = (&self.train, &self.kernel);
        self.cache.get(t, |t| {
            fit_one_step(train, t, pk.family(), pk.h1(), pk.h2()).map(|e| e.coef)
        })
    }

    fn beta(&mut self, t1: T) -> Result<Vec<T>> {
        match self.model {
            PairModel::Second { beta, .. } => beta.eval(t1).ok_or(Error::CurveUnavailable {
                t: t1.to_f64_lossy(),
            }),
            PairModel::OneStep => {
                let p = self.train.p();
                Ok(self.one_step(t1)?[..p].to_vec())
            }
        }
    }

    fn gamma(&mut self, t2: T) -> Result<Vec<T>> {
        match self.model {
            PairModel::Second { .. } => {
                let (train, pk) = (&self.train, &self.kernel);
                let resid = self.train_resid.as_ref().expect("second-stage residuals");
                self.cache
                    .get(t2, |t2| {
                        second_step_with(train, resid, t2, pk).map(|e| e.coef)
                    })
                    .cloned()
            }
            PairModel::OneStep => {
                let p = self.train.p();
                Ok(self.one_step(t2)?[p..].to_vec())
            }
        }
    }
}

/// Per-time errors of the pair-weighted objective, averaged over folds.
fn pair_errors<T: Scalar>(
    plan: &CvPlan<T>,
    ds: &LongitudinalDataset<T>,
    model: &PairModel<'_, T>,
    times: &[T],
    h1: T,
    h2: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let pk = ProductKernel::new(plan.kernel, h1, h2)?;
    let mut total = vec![T::zero(); times.len()];
    let mut per_fold = Vec::with_capacity(plan.folds);
    let (mut k1, mut k2) = (vec![T::zero(); times.len()], vec![T::zero(); times.len()]);
    for (fold, held, train) in plan.splits() {
        let mut fm = FoldModel::new(model, ds, &train, pk);
        let mut sums = FoldSums::new(times.len());
        for &i in &held {
            let s = &ds.subjects()[i];
            for j in 0..s.n_sync() {
                let t1 = s.sync_times[j];
                for (m, &t) in times.iter().enumerate() {
                    k1[m] = pk.raw_first(t1 - t);
                }
                if k1.iter().all(|&v| v == T::zero()) {
                    continue;
                }
                let mut xb = None;
                for k in 0..s.n_async() {
                    let t2 = s.async_times[k];
                    for (m, &t) in times.iter().enumerate() {
                        k2[m] = pk.raw_second(t2 - t);
                    }
                    let mut resid2 = None;
                    for m in 0..times.len() {
                        let w = pk.raw_pair(k1[m], k2[m]);
                        if w == T::zero() {
                            continue;
                        }
                        let r2 = match resid2 {
                            Some(v) => v,
                            None => {
                                let fx = match xb {
                                    Some(v) => v,
                                    None => *xb.insert(dot(s.x(j), &fm.beta(t1)?)),
                                };
                                let r = s.responses[j] - fx - dot(s.z(k), &fm.gamma(t2)?);
                                *resid2.insert(r * r)
                            }
                        };
                        sums.num[m] += w * r2;
                        sums.den[m] += w;
                    }
                }
            }
        }
        let ratios = sums.ratios(fold, times)?;
        for (acc, r) in total.iter_mut().zip(&ratios) {
            *acc += *r;
        }
        per_fold.push(mean(&ratios));
    }
    let d = T::from_usize_lossy(plan.folds);
    Ok((total.into_iter().map(|v| v / d).collect(), per_fold))
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len().max(1))
}

/// First-stage prediction error at `t` for bandwidth `h`.
pub fn aspe_beta<T: Scalar>(
    plan: &CvPlan<T>,
    dataset: &LongitudinalDataset<T>,
    t: T,
    h: T,
) -> Result<T> {
    let centered = center(dataset, plan.kernel, h)?;
    Ok(first_stage_errors(plan, &centered, &[t], h)?.0[0])
}

/// Second-stage prediction error at `t`, holding the first-stage `β̂` fixed.
pub fn aspe_gamma<T: Scalar>(
    plan: &CvPlan<T>,
    dataset: &LongitudinalDataset<T>,
    beta_curve: &dyn CoefficientCurve<T>,
    t: T,
    h1: T,
    h2: T,
) -> Result<T> {
    let model = PairModel::Second {
        beta: beta_curve,
        resid: PartialResiduals::new(dataset, beta_curve)?,
    };
    Ok(pair_errors(plan, dataset, &model, &[t], h1, h2)?.0[0])
}

/// Pair-weighted prediction error at `t` with both coefficients from the joint fit.
pub fn aspe_one_step<T: Scalar>(
    plan: &CvPlan<T>,
    dataset: &LongitudinalDataset<T>,
    t: T,
    h1: T,
    h2: T,
) -> Result<T> {
    Ok(pair_errors(plan, dataset, &PairModel::OneStep, &[t], h1, h2)?.0[0])
}

/// Outcome for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateScore<T> {
    pub candidate: Candidate<T>,
    /// `None` when the candidate was degenerate.
    pub aspe: Option<T>,
    /// Per-fold error (averaged over evaluation times), in fold-label order.
    pub fold_aspe: Vec<T>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult<T> {
    pub stage: &'static str,
    pub scores: Vec<CandidateScore<T>>,
    pub chosen: Candidate<T>,
    pub chosen_aspe: T,
    pub warnings: Vec<String>,
}

/// Errors that only disqualify the candidate.
fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::FoldDegenerate { .. }
            | Error::NoLocalData { .. }
            | Error::SingularLocalFit { .. }
            | Error::SingularFit
            | Error::CurveUnavailable { .. }
    )
}

fn score<T: Scalar>(
    plan: &CvPlan<T>,
    dataset: &LongitudinalDataset<T>,
    stage: &Stage<'_, T>,
    model: Option<&PairModel<'_, T>>,
    c: Candidate<T>,
) -> Result<(T, Vec<T>)> {
    let times = plan.evaluation.times();
    let (per_time, per_fold_sorted) = match stage {
        Stage::FirstStage => {
            let centered = center(dataset, plan.kernel, c.h1())?;
            first_stage_errors(plan, &centered, times, c.h1())?
        }
        _ => pair_errors(
            plan,
            dataset,
            model.expect("pair model"),
            times,
            c.h1(),
            c.h2(),
        )?,
    };
    // back to label order for reporting
    let mut per_fold = vec![T::zero(); plan.folds];
    for ((f, _, _), v) in plan.splits().into_iter().zip(per_fold_sorted) {
        per_fold[f] = v;
    }
    Ok((mean(&per_time), per_fold))
}

/// Evaluates every candidate and picks the smallest error; exact ties go to
/// the earlier (smaller) candidate. Degenerate candidates are skipped with a
/// warning.
pub fn select<T: Scalar>(
    plan: &CvPlan<T>,
    dataset: &LongitudinalDataset<T>,
    stage: Stage<'_, T>,
) -> Result<CvResult<T>> {
    if dataset.n() != plan.assignment.len() {
        return Err(Error::InvalidParameter(format!(
            "plan has {} subjects but the dataset has {}",
            plan.assignment.len(),
            dataset.n()
        )));
    }
    if !matches!(stage, Stage::FirstStage) && dataset.q() == 0 {
        return Err(Error::InvalidParameter(
            "second-stage and one-step selection need asynchronous covariates".into(),
        ));
    }
    let model = match stage {
        Stage::FirstStage => None,
        Stage::SecondStage(beta) => Some(PairModel::Second {
            beta,
            resid: PartialResiduals::new(dataset, beta)?,
        }),
        Stage::OneStep => Some(PairModel::OneStep),
    };
    let outcomes: Vec<Result<(T, Vec<T>)>> = plan
        .candidates
        .par_iter()
        .map(|&c| score(plan, dataset, &stage, model.as_ref(), c))
        .collect();

    let mut scores = Vec::with_capacity(outcomes.len());
    let mut warnings = Vec::new();
    let mut best: Option<(usize, T)> = None;
    for (idx, (&c, out)) in plan.candidates.iter().zip(outcomes).enumerate() {
        match out {
            Ok((aspe, fold_aspe)) => {
                if best.is_none_or(|(_, b)| aspe < b) {
                    best = Some((idx, aspe));
                }
                scores.push(CandidateScore {
                    candidate: c,
                    aspe: Some(aspe),
                    fold_aspe,
                    error: None,
                });
            }
            Err(e) if is_degenerate(&e) => {
                warnings.push(format!(
                    "candidate ({}, {}) excluded: {e}",
                    c.h1().to_f64_lossy(),
                    c.h2().to_f64_lossy()
                ));
                scores.push(CandidateScore {
                    candidate: c,
                    aspe: None,
                    fold_aspe: Vec::new(),
                    error: Some(e.code().to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let (idx, chosen_aspe) = best.ok_or(Error::SelectionFailed)?;
    Ok(CvResult {
        stage: stage.label(),
        chosen: plan.candidates[idx],
        chosen_aspe,
        scores,
        warnings,
    })
}

/// Bandwidths with the unset ones chosen by cross-validation under the
/// default plan: `h` first (first-stage objective), then `(h1, h2)` given the
/// resulting `β̂` (second-stage objective), or `(h1, h2)` directly with the
/// one-step objective. A fixed `h1` or `h2` pins that coordinate of every
/// candidate pair.
pub fn auto_smoothing<T: Scalar>(
    dataset: &LongitudinalDataset<T>,
    method: Method,
    kernel: KernelFamily,
    h: Option<T>,
    h1: Option<T>,
    h2: Option<T>,
    seed: u64,
) -> Result<(Smoothing<T>, Vec<CvResult<T>>)> {
    let mut runs = Vec::new();
    let h = if method.is_two_step() {
        Some(match h {
            Some(h) => h,
            None => {
                let stage = Stage::FirstStage;
                let plan = CvPlan::default_for(dataset, &stage, kernel, seed)?;
                let res = select(&plan, dataset, stage)?;
                let h = res.chosen.h1();
                runs.push(res);
                h
            }
        })
    } else {
        None
    };
    let (h1, h2) = match (h1, h2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let pipeline;
            let stage = match h {
                Some(h) => {
                    // the pair bandwidths are irrelevant to the first stage
                    let placeholder = T::lit(0.1);
                    pipeline = TwoStepPipeline::new(
                        dataset,
                        method,
                        Smoothing::two_step(h, placeholder, placeholder).with_kernel(kernel),
                    )?;
                    Stage::SecondStage(pipeline.beta_curve().expect("two-step pipeline"))
                }
                None => Stage::OneStep,
            };
            let candidates = default_candidates(dataset.n(), &stage)
                .into_iter()
                .map(|c| Candidate::Pair(h1.unwrap_or(c.h1()), h2.unwrap_or(c.h2())))
                .collect();
            let plan = CvPlan::new(
                dataset.n(),
                DEFAULT_FOLDS,
                seed,
                candidates,
                Evaluation::default_integrated(),
                kernel,
            )?;
            let res = select(&plan, dataset, stage)?;
            let chosen = (res.chosen.h1(), res.chosen.h2());
            runs.push(res);
            chosen
        }
    };
    let smoothing = Smoothing { kernel, h, h1, h2 };
    Ok((smoothing, runs))
}
