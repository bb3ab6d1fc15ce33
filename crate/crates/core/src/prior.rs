use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Hyperprior settings.
///
/// * `mu0 ~ N(a_mu, b_mu)` (mean, variance)
/// * `sigma2 ~ Gamma(a_sigma, b_sigma)` (shape, rate)
/// * `rho ~ Unif(a_rho, b_rho)`
/// * `nu ~ Unif(a_nu, b_nu)` with `a_nu > 3`
/// * `noise_var ~ IG(a_eps, b_eps)` (shape, scale)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig<T> {
    pub a_mu: T,
    pub b_mu: T,
    pub a_sigma: T,
    pub b_sigma: T,
    pub a_rho: T,
    pub b_rho: T,
    pub a_nu: T,
    pub b_nu: T,
    pub a_eps: T,
    pub b_eps: T,
}

impl<T: Real> Default for PriorConfig<T> {
    /// `N(0,100)` mean level, `Gamma(2,1)` scale, `Unif(3,12)` range,
    /// `Unif(4,30)` shape and `IG(5,0.001)` noise variance.
    fn default() -> Self {
        Self {
            a_mu: T::lit(0.0),
            b_mu: T::lit(100.0),
            a_sigma: T::lit(2.0),
            b_sigma: T::lit(1.0),
            a_rho: T::lit(3.0),
            b_rho: T::lit(12.0),
            a_nu: T::lit(4.0),
            b_nu: T::lit(30.0),
            a_eps: T::lit(5.0),
            b_eps: T::lit(0.001),
        }
    }
}

impl<T: Real> PriorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let three = T::lit(3.0);
        let checks = [
            (self.b_mu > T::zero(), "b_mu > 0"),
            (self.a_sigma > T::zero(), "a_sigma > 0"),
            (self.b_sigma > T::zero(), "b_sigma > 0"),
            (self.a_rho < self.b_rho, "a_rho < b_rho"),
            (self.a_rho >= T::zero(), "a_rho >= 0"),
            (three < self.a_nu, "a_nu > 3"),
            (self.a_nu < self.b_nu, "a_nu < b_nu"),
            (self.a_eps > T::zero(), "a_eps > 0"),
            (self.b_eps > T::zero(), "b_eps > 0"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!("prior requires {what}")));
            }
        }
        let all = [
            self.a_mu, self.b_mu, self.a_sigma, self.b_sigma, self.a_rho, self.b_rho, self.a_nu,
            self.b_nu, self.a_eps, self.b_eps,
        ];
        if all.iter().any(|v| !v.is_finite_real()) {
            return Err(Error::InvalidParameter("prior values must be finite".into()));
        }
        Ok(())
    }

    /// Prior mean of the noise variance (prior mode when `a_eps <= 1`).
    pub fn noise_var_center(&self) -> T {
        if self.a_eps > T::one() {
            self.b_eps / (self.a_eps - T::one())
        } else {
            self.b_eps / (self.a_eps + T::one())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        PriorConfig::<f64>::default().validate().unwrap();
    }

    #[test]
    fn nu_lower_bound_must_exceed_three() {
        let p = PriorConfig::<f64> {
            a_nu: 3.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn json_roundtrip_rejects_unknown_keys() {
        let p = PriorConfig::<f64>::default();
        let s = serde_json::to_string(&p).unwrap();
        let back: PriorConfig<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        let bad = s.replace("\"a_mu\"", "\"a_mux\"");
        assert!(serde_json::from_str::<PriorConfig<f64>>(&bad).is_err());
    }
}
