#![allow(dead_code)]

use asynclc::data::{LongitudinalDataset, SubjectRecord};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn epan(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

pub fn kh(h: f64, d: f64) -> f64 {
    epan(d / h) / h
}

/// Dense weighted regression problem with subject labels.
#[derive(Default)]
pub struct Design {
    pub rows: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub subject: Vec<usize>,
}

impl Design {
    pub fn push(&mut self, subject: usize, w: f64, y: f64, row: Vec<f64>) {
        if w != 0.0 {
            self.rows.push(row);
            self.w.push(w);
            self.y.push(y);
            self.subject.push(subject);
        }
    }

    fn x(&self) -> DMatrix<f64> {
        let d = self.rows[0].len();
        DMatrix::from_fn(self.rows.len(), d, |r, c| self.rows[r][c])
    }

    /// Minimizer of the weighted squared error by SVD of the sqrt-weighted
    /// system, plus the subject-clustered sandwich covariance.
    pub fn solve(&self) -> (Vec<f64>, DMatrix<f64>) {
        let x = self.x();
        let sw = DVector::from_iterator(self.w.len(), self.w.iter().map(|w| w.sqrt()));
        let mut xs = x.clone();
        for (r, s) in sw.iter().enumerate() {
            xs.row_mut(r).scale_mut(*s);
        }
        let ys = DVector::from_iterator(
            self.y.len(),
            self.y.iter().zip(sw.iter()).map(|(y, s)| y * s),
        );
        let theta = xs.svd(true, true).solve(&ys, 1e-14).expect("svd solve");
        let d = x.ncols();
        let mut a = DMatrix::zeros(d, d);
        for r in 0..x.nrows() {
            let row = x.row(r).transpose();
            a += &row * row.transpose() * self.w[r];
        }
        let a_inv = a.try_inverse().expect("invertible");
        let n_sub = self.subject.iter().max().map_or(0, |m| m + 1);
        let mut scores = vec![DVector::zeros(d); n_sub];
        for r in 0..x.nrows() {
            let row = x.row(r).transpose();
            let e = self.y[r] - row.dot(&theta);
            scores[self.subject[r]] += row * (self.w[r] * e);
        }
        let mut b = DMatrix::zeros(d, d);
        for s in &scores {
            b += s * s.transpose();
        }
        (theta.iter().copied().collect(), &a_inv * b * &a_inv)
    }

    /// Max-abs component of the weighted score at `theta`.
    pub fn score_norm(&self, theta: &[f64]) -> f64 {
        let d = theta.len();
        let mut g = vec![0.0; d];
        for ((row, w), y) in self.rows.iter().zip(&self.w).zip(&self.y) {
            let fit: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
            for c in 0..d {
                g[c] += w * row[c] * (y - fit);
            }
        }
        g.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Size of the sandwich that residuals of order `|y|` would give; a
    /// covariance far below this is determined only up to rounding.
    pub fn rounding_cov_scale(&self) -> f64 {
        let x = self.x();
        let d = x.ncols();
        let mut a = DMatrix::zeros(d, d);
        for r in 0..x.nrows() {
            let row = x.row(r).transpose();
            a += &row * row.transpose() * self.w[r];
        }
        let a_inv = a.try_inverse().expect("invertible").amax();
        let n_sub = self.subject.iter().max().map_or(0, |m| m + 1);
        let mut per = vec![0.0; n_sub];
        for r in 0..x.nrows() {
            let rmax = self.rows[r].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            per[self.subject[r]] += self.w[r] * rmax * self.y[r].abs();
        }
        let meat: f64 = per.iter().map(|v| v * v).sum();
        a_inv * a_inv * meat * f64::EPSILON
    }

    /// Mean diagonal of the normal matrix.
    pub fn scale(&self) -> f64 {
        let d = self.rows[0].len();
        let mut s = 0.0;
        for (row, w) in self.rows.iter().zip(&self.w) {
            s += row.iter().map(|v| w * v * v).sum::<f64>();
        }
        s / d as f64
    }
}

pub fn one_step_design(ds: &LongitudinalDataset<f64>, t: f64, h1: f64, h2: f64) -> Design {
    let mut d = Design::default();
    for (i, s) in ds.subjects().iter().enumerate() {
        for j in 0..s.n_sync() {
            for k in 0..s.n_async() {
                let (d1, d2) = (s.sync_times[j] - t, s.async_times[k] - t);
                let w = kh(h1, d1) * kh(h2, d2);
                let x = s.x(j);
                let z = s.z(k);
                let mut row: Vec<f64> = x.to_vec();
                row.extend(x.iter().map(|v| v * d1));
                row.extend_from_slice(z);
                row.extend(z.iter().map(|v| v * d2));
                d.push(i, w, s.responses[j], row);
            }
        }
    }
    d
}

/// Pooled kernel average of `(y, x)` at `t0`.
pub fn nw(ds: &LongitudinalDataset<f64>, t0: f64, h: f64) -> Vec<f64> {
    let p = ds.p();
    let mut num = vec![0.0; 1 + p];
    let mut den = 0.0;
    for s in ds.subjects() {
        for j in 0..s.n_sync() {
            let w = kh(h, s.sync_times[j] - t0);
            den += w;
            num[0] += w * s.responses[j];
            for c in 0..p {
                num[1 + c] += w * s.x(j)[c];
            }
        }
    }
    num.iter().map(|v| v / den).collect()
}

pub fn centering_design(ds: &LongitudinalDataset<f64>, t: f64, h: f64) -> Design {
    let mut d = Design::default();
    for (i, s) in ds.subjects().iter().enumerate() {
        for j in 0..s.n_sync() {
            let tj = s.sync_times[j];
            let m = nw(ds, tj, h);
            let xc: Vec<f64> = s.x(j).iter().zip(&m[1..]).map(|(a, b)| a - b).collect();
            let mut row = xc.clone();
            row.extend(xc.iter().map(|v| v * (tj - t)));
            d.push(i, kh(h, tj - t), s.responses[j] - m[0], row);
        }
    }
    d
}

pub fn vcm_design(ds: &LongitudinalDataset<f64>, t: f64, h: f64) -> Design {
    let mut d = Design::default();
    for (i, s) in ds.subjects().iter().enumerate() {
        for j in 0..s.n_sync() {
            let dt = s.sync_times[j] - t;
            let mut row = vec![1.0];
            row.extend_from_slice(s.x(j));
            row.push(dt);
            row.extend(s.x(j).iter().map(|v| v * dt));
            d.push(i, kh(h, dt), s.responses[j], row);
        }
    }
    d
}

pub fn second_step_design(
    ds: &LongitudinalDataset<f64>,
    beta: &dyn Fn(f64) -> Vec<f64>,
    t: f64,
    h1: f64,
    h2: f64,
) -> Design {
    let mut d = Design::default();
    for (i, s) in ds.subjects().iter().enumerate() {
        for j in 0..s.n_sync() {
            let b = beta(s.sync_times[j]);
            let r = s.responses[j] - s.x(j).iter().zip(&b).map(|(x, b)| x * b).sum::<f64>();
            for k in 0..s.n_async() {
                let (d1, d2) = (s.sync_times[j] - t, s.async_times[k] - t);
                let z = s.z(k);
                let mut row = z.to_vec();
                row.extend(z.iter().map(|v| v * d2));
                d.push(i, kh(h1, d1) * kh(h2, d2), r, row);
            }
        }
    }
    d
}

/// Random dataset with `n` subjects, `p`/`q` covariates and times in [0, 1].
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    q: usize,
    l: std::ops::RangeInclusive<usize>,
    m: std::ops::RangeInclusive<usize>,
) -> LongitudinalDataset<f64> {
    let subjects = (0..n)
        .map(|i| {
            let li = rng.gen_range(l.clone());
            let mi = rng.gen_range(m.clone());
            let st: Vec<f64> = (0..li).map(|_| rng.gen()).collect();
            let y: Vec<f64> = (0..li).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let xr: Vec<Vec<f64>> = (0..li)
                .map(|_| (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let at: Vec<f64> = (0..mi).map(|_| rng.gen()).collect();
            let zr: Vec<Vec<f64>> = (0..mi)
                .map(|_| (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            SubjectRecord::new(format!("s{i}"), st, y, xr, at, zr)
        })
        .collect();
    LongitudinalDataset::new(subjects, p, q).expect("valid")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn assert_close(got: &[f64], want: &[f64], tol: f64, what: &str) {
    assert_eq!(got.len(), want.len(), "{what}: length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!(close(*g, *w, tol), "{what}[{i}]: {g} vs {w}");
    }
}

pub fn cov_close(got: &asynclc::linalg::Matrix<f64>, want: &DMatrix<f64>, tol: f64, what: &str) {
    let scale = want.amax().max(1e-300);
    for r in 0..want.nrows() {
        for c in 0..want.ncols() {
            let (g, w) = (got[(r, c)], want[(r, c)]);
            assert!(
                (g - w).abs() <= tol * scale,
                "{what} cov[{r},{c}]: {g} vs {w}"
            );
        }
    }
}

/// Which local fit an oracle instance exercises.
#[derive(Debug, Clone, Copy)]
pub enum Fit {
    OneStep,
    Centering,
    Vcm,
    SecondStep,
}

/// Runs one random tiny instance of `fit`; returns the largest relative
/// discrepancy of the solution and of the covariance, or `None` when the
/// local design is singular (both sides must then agree it is degenerate).
pub fn oracle_instance(fit: Fit, seed: u64) -> Option<(f64, f64)> {
    use asynclc::estimators::{
        center, fit_centering, fit_gamma_second_step, fit_one_step, fit_vcm, FnCurve,
    };
    use asynclc::kernels::KernelFamily::Epanechnikov as E;
    let mut r = rng(seed);
    let n = r.gen_range(2..=3);
    let p = r.gen_range(1..=2);
    let q = r.gen_range(1..=2);
    let ds = random_dataset(&mut r, n, p, q, 4..=5, 3..=4);
    let t = r.gen_range(0.2..0.8);
    let h = r.gen_range(1.2..2.0);
    let h2 = r.gen_range(1.2..2.0);
    let (est, design) = match fit {
        Fit::OneStep => (
            fit_one_step(&ds, t, E, h, h2),
            one_step_design(&ds, t, h, h2),
        ),
        Fit::Centering => {
            let c = center(&ds, E, h).ok()?;
            (fit_centering(&c, t, E, h), centering_design(&ds, t, h))
        }
        Fit::Vcm => (fit_vcm(&ds, t, E, h), vcm_design(&ds, t, h)),
        Fit::SecondStep => {
            let a: Vec<f64> = (0..p).map(|_| r.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..p).map(|_| r.gen_range(-1.0..1.0)).collect();
            let (a2, b2) = (a.clone(), b.clone());
            let f = move |s: f64| -> Vec<f64> {
                a2.iter().zip(&b2).map(|(a, b)| a + b * s * s).collect()
            };
            let curve = FnCurve {
                dim: p,
                f: f.clone(),
            };
            let beta = move |s: f64| -> Vec<f64> {
                a.iter().zip(&b).map(|(a, b)| a + b * s * s).collect()
            };
            (
                fit_gamma_second_step(&ds, &curve, t, E, h, h2),
                second_step_design(&ds, &beta, t, h, h2),
            )
        }
    };
    let est = est.ok()?;
    let (theta, cov) = design.solve();
    let sol_err = est
        .solution
        .iter()
        .zip(&theta)
        .map(|(g, w)| (g - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max);
    // rounding in the residuals bounds how well a near-zero sandwich is defined
    let scale = cov.amax().max(1e-6 * design.rounding_cov_scale());
    let mut cov_err: f64 = 0.0;
    for i in 0..cov.nrows() {
        for j in 0..cov.ncols() {
            cov_err = cov_err.max((est.full_cov[(i, j)] - cov[(i, j)]).abs() / scale);
        }
    }
    Some((sol_err, cov_err))
}
