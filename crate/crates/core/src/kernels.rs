//! Kernel functions, scaled evaluation and bandwidth rules.
//!
//! Bivariate kernels are always products of the univariate family, and every
//! kernel has closed support: the weight at exactly `|u| = 1` is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `K(u) = 0.75 (1 - u^2)_+`
    #[default]
    Epanechnikov,
    /// `K(u) = 0.5` on `(-1, 1)`
    Uniform,
}

impl KernelFamily {
    /// Univariate kernel `K(u)`.
    #[inline]
    pub fn eval<T: Scalar>(self, u: T) -> T {
        let a = u.abs();
        if !(a < T::one()) {
            return T::zero();
        }
        match self {
            KernelFamily::Epanechnikov => T::lit(0.75) * (T::one() - u * u),
            KernelFamily::Uniform => T::lit(0.5),
        }
    }

    /// Product kernel `K(u) K(v)`.
    #[inline]
    pub fn eval_bi<T: Scalar>(self, u: T, v: T) -> T {
        self.eval(u) * self.eval(v)
    }

    /// `K_h(t) = K(t / h) / h`.
    pub fn eval_scaled<T: Scalar>(self, h: T, t: T) -> Result<T> {
        Ok(ScaledKernel::new(self, h)?.weight(t))
    }

    /// `K_{h1,h2}(t, s) = K(t / h1, s / h2) / (h1 h2)`.
    pub fn eval_scaled_bi<T: Scalar>(self, h1: T, h2: T, t: T, s: T) -> Result<T> {
        Ok(ProductKernel::new(self, h1, h2)?.weight(t, s))
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(KernelFamily::Epanechnikov),
            "uniform" => Ok(KernelFamily::Uniform),
            other => Err(Error::InvalidParameter(format!("unknown kernel '{other}'"))),
        }
    }
}

pub(crate) fn check_bandwidth<T: Scalar>(h: T) -> Result<T> {
    if h > T::zero() && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::InvalidBandwidth(h.to_f64_lossy()))
    }
}

/// Univariate kernel with a validated bandwidth.
#[derive(Debug, Clone, Copy)]
pub struct ScaledKernel<T> {
    family: KernelFamily,
    h: T,
}

impl<T: Scalar> ScaledKernel<T> {
    pub fn new(family: KernelFamily, h: T) -> Result<Self> {
        Ok(Self {
            family,
            h: check_bandwidth(h)?,
        })
    }

    #[inline]
    pub fn bandwidth(&self) -> T {
        self.h
    }

    #[inline]
    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Unscaled `K((t) / h)`.
    #[inline]
    pub fn raw(&self, t: T) -> T {
        self.family.eval(t / self.h)
    }

    #[inline]
    pub fn weight(&self, t: T) -> T {
        self.raw(t) / self.h
    }
}

/// Product kernel with validated bandwidths. `weight(t, s)` is computed as
/// `K(t/h1) K(s/h2) / (h1 h2)` so pairwise sums built from [`ProductKernel::raw_pair`]
/// reproduce it bit-for-bit.
#[derive(Debug, Clone, Copy)]
pub struct ProductKernel<T> {
    family: KernelFamily,
    h1: T,
    h2: T,
    denom: T,
}

impl<T: Scalar> ProductKernel<T> {
    pub fn new(family: KernelFamily, h1: T, h2: T) -> Result<Self> {
        let h1 = check_bandwidth(h1)?;
        let h2 = check_bandwidth(h2)?;
        Ok(Self {
            family,
            h1,
            h2,
            denom: h1 * h2,
        })
    }

    #[inline]
    pub fn h1(&self) -> T {
        self.h1
    }

    #[inline]
    pub fn h2(&self) -> T {
        self.h2
    }

    #[inline]
    pub fn family(&self) -> KernelFamily {
        self.family
    }

    #[inline]
    pub fn raw_first(&self, t: T) -> T {
        self.family.eval(t / self.h1)
    }

    #[inline]
    pub fn raw_second(&self, s: T) -> T {
        self.family.eval(s / self.h2)
    }

    /// Combines precomputed marginal factors into the scaled weight.
    #[inline]
    pub fn raw_pair(&self, k1: T, k2: T) -> T {
        k1 * k2 / self.denom
    }

    #[inline]
    pub fn weight(&self, t: T, s: T) -> T {
        self.raw_pair(self.raw_first(t), self.raw_second(s))
    }
}

/// `scale * n^(-exponent)`.
pub fn bandwidth_rule(n: usize, exponent: f64, scale: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    if !(scale > 0.0) || !scale.is_finite() || !exponent.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bandwidth rule needs finite exponent and positive scale (got {exponent}, {scale})"
        )));
    }
    check_bandwidth(scale * (n as f64).powf(-exponent))
}

/// A bandwidth given directly, as a rule `scale * n^(-exponent)`, or chosen
/// by cross-validation on the data at hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSpec {
    Value(f64),
    Rule { exponent: f64, scale: f64 },
    Auto,
}

impl BandwidthSpec {
    pub fn rule(exponent: f64) -> Self {
        BandwidthSpec::Rule {
            exponent,
            scale: 1.0,
        }
    }

    /// `None` for [`BandwidthSpec::Auto`], which needs the data.
    pub fn resolve(&self, n: usize) -> Result<Option<f64>> {
        match *self {
            BandwidthSpec::Value(h) => check_bandwidth(h).map(Some),
            BandwidthSpec::Rule { exponent, scale } => bandwidth_rule(n, exponent, scale).map(Some),
            BandwidthSpec::Auto => Ok(None),
        }
    }

    /// Short label such as `n^-0.6` or `0.144`.
    pub fn label(&self) -> String {
        match *self {
            BandwidthSpec::Value(h) => format!("{h}"),
            BandwidthSpec::Rule { exponent, scale } if scale == 1.0 => format!("n^-{exponent}"),
            BandwidthSpec::Rule { exponent, scale } => format!("{scale}n^-{exponent}"),
            BandwidthSpec::Auto => "auto".into(),
        }
    }

    /// Parses `0.1`, `n^-0.6`, `4n^-0.6`, `4*n^-0.6` or `auto`.
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim().replace(' ', "");
        if s == "auto" {
            return Ok(BandwidthSpec::Auto);
        }
        let bad = || Error::InvalidParameter(format!("cannot parse bandwidth '{text}'"));
        if let Some(pos) = s.find("n^") {
            let (scale_part, rest) = s.split_at(pos);
            let scale_part = scale_part.trim_end_matches('*');
            let scale = if scale_part.is_empty() {
                1.0
            } else {
                scale_part.parse::<f64>().map_err(|_| bad())?
            };
            let exp_text = &rest[2..];
            let exponent = exp_text
                .strip_prefix('-')
                .ok_or_else(bad)?
                .parse::<f64>()
                .map_err(|_| bad())?;
            if !(scale > 0.0) {
                return Err(bad());
            }
            Ok(BandwidthSpec::Rule { exponent, scale })
        } else {
            let h = s.parse::<f64>().map_err(|_| bad())?;
            check_bandwidth(h)?;
            Ok(BandwidthSpec::Value(h))
        }
    }
}
