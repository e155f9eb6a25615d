use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Element-wise activation applied after each affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn value(self, t: f64) -> f64 {
        match self {
            Activation::Softplus => softplus(t),
            Activation::Tanh => t.tanh(),
            Activation::Identity => t,
        }
    }

    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Softplus => logistic(t),
            Activation::Tanh => {
                let th = t.tanh();
                1.0 - th * th
            }
            Activation::Identity => 1.0,
        }
    }

    /// Value and derivative of every entry of `v`.
    pub fn eval(self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        v.iter().map(|&t| (self.value(t), self.derivative(t))).unzip()
    }
}

/// `ln(1 + e^t)` without overflow for large `t`.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "softplus" => Ok(Activation::Softplus),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unsupported activation `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softplus_at_zero() {
        let (v, d) = Activation::Softplus.eval(&[0.0]);
        assert!((v[0] - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(d[0], 0.5);
    }

    #[test]
    fn identity_passthrough() {
        let (v, d) = Activation::Identity.eval(&[3.0, -1.0]);
        assert_eq!(v, vec![3.0, -1.0]);
        assert_eq!(d, vec![1.0, 1.0]);
    }

    #[test]
    fn softplus_large_argument() {
        let (v, d) = Activation::Softplus.eval(&[100.0, 800.0]);
        assert!((v[0] - 100.0).abs() < 1e-12);
        assert!((d[0] - 1.0).abs() < 1e-12);
        assert!(v[1].is_finite() && (v[1] - 800.0).abs() < 1e-12);
        // naive formula overflows here
        assert!(!(800.0f64.exp().ln_1p()).is_finite());
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("relu".parse::<Activation>(), Err(Error::Config(_))));
        assert_eq!("Softplus".parse::<Activation>().unwrap(), Activation::Softplus);
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(t in -50.0f64..50.0) {
            let h = 1e-6;
            for act in [Activation::Softplus, Activation::Tanh, Activation::Identity] {
                let fd = (act.value(t + h) - act.value(t - h)) / (2.0 * h);
                prop_assert!((fd - act.derivative(t)).abs() < 1e-6);
            }
        }
    }
}
