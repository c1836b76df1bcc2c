//! Point estimators and sandwich variances.
//!
//! * [`fit_one_step`]: joint kernel-weighted local-linear fit of `β` and `γ`
//!   over all response/covariate time pairs.
//! * [`center`] + [`fit_centering`]: first stage on Nadaraya–Watson centered data.
//! * [`fit_vcm`]: first stage with a nonparametric intercept.
//! * [`fit_gamma_second_step`]: second stage regressing partial residuals on
//!   the asynchronous covariates.
//! * [`fit_curve`]: batches the pointwise fits over a time grid.

mod constant;
pub(crate) mod curve;
pub(crate) mod engine;
pub(crate) mod local;
mod normalize;
pub(crate) mod nw;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub use constant::{
    fit_constant_beta, fit_constant_coefficients, fit_constant_gamma, ConstantEstimate,
    ConstantFit, ConstantSpec,
};
pub use curve::{
    default_grid, first_stage_grid, fit_curve, validate_grid, CurveEstimate, CurvePoint, Method,
    Smoothing, TwoStepPipeline,
};
pub use engine::SINGULARITY_TOL;
pub use local::{
    fit_centering, fit_gamma_second_step, fit_one_step, fit_vcm, CoefficientCurve, ConstantCurve,
    FnCurve, InterpolatedCurve, PartialResiduals,
};
pub use normalize::{normalize_longitudinal, ColumnSelector, NormalizeMode};
pub use nw::{center, nw_curve, nw_mean, CenteredDataset, MeanCurve, MeanTarget};

/// Named scalar coefficient. Indices are zero-based; labels are one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoefName {
    Alpha,
    Beta(usize),
    Gamma(usize),
}

impl fmt::Display for CoefName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefName::Alpha => write!(f, "alpha"),
            CoefName::Beta(j) => write!(f, "beta{}", j + 1),
            CoefName::Gamma(k) => write!(f, "gamma{}", k + 1),
        }
    }
}

impl CoefName {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "alpha" {
            return Some(CoefName::Alpha);
        }
        let idx = |rest: &str| {
            rest.parse::<usize>()
                .ok()
                .filter(|&i| i >= 1)
                .map(|i| i - 1)
        };
        if let Some(rest) = s.strip_prefix("beta") {
            return idx(rest).map(CoefName::Beta);
        }
        if let Some(rest) = s.strip_prefix("gamma") {
            return idx(rest).map(CoefName::Gamma);
        }
        None
    }
}

/// Block structure of a local solution vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignLayout {
    /// `(β, β̇, γ, γ̇)`
    OneStep { p: usize, q: usize },
    /// `(β, β̇)`
    Centering { p: usize },
    /// `(α, β, α̇, β̇)`
    Vcm { p: usize },
    /// `(γ, γ̇)`
    SecondStep { q: usize },
}

impl DesignLayout {
    pub fn dim(&self) -> usize {
        match *self {
            DesignLayout::OneStep { p, q } => 2 * (p + q),
            DesignLayout::Centering { p } => 2 * p,
            DesignLayout::Vcm { p } => 2 * (p + 1),
            DesignLayout::SecondStep { q } => 2 * q,
        }
    }

    /// Positions of the level coefficients in the solution vector.
    pub fn coef_indices(&self) -> Vec<usize> {
        match *self {
            DesignLayout::OneStep { p, q } => (0..p).chain(2 * p..2 * p + q).collect(),
            DesignLayout::Centering { p } => (0..p).collect(),
            DesignLayout::Vcm { p } => (0..=p).collect(),
            DesignLayout::SecondStep { q } => (0..q).collect(),
        }
    }

    /// Positions of the derivative coefficients in the solution vector.
    pub fn deriv_indices(&self) -> Vec<usize> {
        match *self {
            DesignLayout::OneStep { p, q } => (p..2 * p).chain(2 * p + q..2 * (p + q)).collect(),
            DesignLayout::Centering { p } => (p..2 * p).collect(),
            DesignLayout::Vcm { p } => (p + 1..2 * (p + 1)).collect(),
            DesignLayout::SecondStep { q } => (q..2 * q).collect(),
        }
    }

    /// Names of the level coefficients, in `coef` order.
    pub fn coef_names(&self) -> Vec<CoefName> {
        match *self {
            DesignLayout::OneStep { p, q } => (0..p)
                .map(CoefName::Beta)
                .chain((0..q).map(CoefName::Gamma))
                .collect(),
            DesignLayout::Centering { p } => (0..p).map(CoefName::Beta).collect(),
            DesignLayout::Vcm { p } => std::iter::once(CoefName::Alpha)
                .chain((0..p).map(CoefName::Beta))
                .collect(),
            DesignLayout::SecondStep { q } => (0..q).map(CoefName::Gamma).collect(),
        }
    }
}

/// Local estimate at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientEstimate<T> {
    pub t: T,
    pub layout: DesignLayout,
    /// Full solution vector in layout order.
    pub solution: Vec<T>,
    pub coef: Vec<T>,
    pub deriv: Vec<T>,
    /// Sandwich covariance of `coef`.
    pub cov: Matrix<T>,
    /// Sandwich covariance of the full solution vector.
    pub full_cov: Matrix<T>,
    /// Observations (or pairs) with nonzero kernel weight.
    pub n_effective: usize,
}

impl<T: Scalar> CoefficientEstimate<T> {
    pub(crate) fn from_solution(
        layout: DesignLayout,
        t: T,
        sol: engine::LocalSolution<T>,
        unscale: &[T],
    ) -> Self {
        let solution: Vec<T> = sol
            .theta
            .iter()
            .zip(unscale)
            .map(|(&v, &d)| v * d)
            .collect();
        let full_cov = sol.cov.scale_sym(unscale);
        let ci = layout.coef_indices();
        let di = layout.deriv_indices();
        Self {
            t,
            layout,
            coef: ci.iter().map(|&i| solution[i]).collect(),
            deriv: di.iter().map(|&i| solution[i]).collect(),
            cov: full_cov.select(&ci, &ci),
            full_cov,
            solution,
            n_effective: sol.n_rows,
        }
    }

    pub fn names(&self) -> Vec<CoefName> {
        self.layout.coef_names()
    }

    pub fn se(&self) -> Vec<T> {
        self.cov
            .diagonal()
            .into_iter()
            .map(|v| v.max(T::zero()).sqrt())
            .collect()
    }

    /// `(estimate, standard error)` of a named coefficient, if this fit has it.
    pub fn get(&self, name: CoefName) -> Option<(T, T)> {
        let pos = self.names().iter().position(|&n| n == name)?;
        let var = self.cov[(pos, pos)].max(T::zero());
        Some((self.coef[pos], var.sqrt()))
    }

    pub fn beta(&self) -> Vec<T> {
        self.names()
            .iter()
            .zip(&self.coef)
            .filter(|(n, _)| matches!(n, CoefName::Beta(_)))
            .map(|(_, &v)| v)
            .collect()
    }

    pub fn gamma(&self) -> Vec<T> {
        self.names()
            .iter()
            .zip(&self.coef)
            .filter(|(n, _)| matches!(n, CoefName::Gamma(_)))
            .map(|(_, &v)| v)
            .collect()
    }
}

/// Fixed 95% pointwise normal multiplier.
pub const Z_95: f64 = 1.96;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_dimensions_and_blocks() {
        let one = DesignLayout::OneStep { p: 2, q: 1 };
        assert_eq!(one.dim(), 6);
        assert_eq!(one.coef_indices(), vec![0, 1, 4]);
        assert_eq!(one.deriv_indices(), vec![2, 3, 5]);
        let vcm = DesignLayout::Vcm { p: 2 };
        assert_eq!(vcm.dim(), 6);
        assert_eq!(vcm.coef_indices(), vec![0, 1, 2]);
        assert_eq!(
            vcm.coef_names(),
            vec![CoefName::Alpha, CoefName::Beta(0), CoefName::Beta(1)]
        );
        for layout in [
            one,
            vcm,
            DesignLayout::Centering { p: 3 },
            DesignLayout::SecondStep { q: 2 },
        ] {
            let mut all = layout.coef_indices();
            all.extend(layout.deriv_indices());
            all.sort_unstable();
            assert_eq!(all, (0..layout.dim()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn coefficient_names_round_trip() {
        for name in [CoefName::Alpha, CoefName::Beta(0), CoefName::Gamma(3)] {
            assert_eq!(CoefName::parse(&name.to_string()), Some(name));
        }
        assert_eq!(CoefName::parse("beta0"), None);
        assert_eq!(CoefName::parse("delta1"), None);
    }
}
