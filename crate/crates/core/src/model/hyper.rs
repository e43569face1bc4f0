use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::variant::Family;

/// Prior hyperparameters.
///
/// `lambda^2 ~ Gamma(a, b)` (shape, rate) and `pi ~ Beta(r, w)` per family;
/// `sigma^2 ~ InverseGamma(s, h)`; independent normal priors with the given
/// variances on the unpenalized blocks (`eta`, `alpha`, `zeta0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub a_v: f64,
    pub b_v: f64,
    pub a_c: f64,
    pub b_c: f64,
    pub a_e: f64,
    pub b_e: f64,
    pub r_v: f64,
    pub w_v: f64,
    pub r_c: f64,
    pub w_c: f64,
    pub r_e: f64,
    pub w_e: f64,
    pub s: f64,
    pub h: f64,
    pub prior_var_eta: f64,
    pub prior_var_alpha: f64,
    pub prior_var_zeta0: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            a_v: 1.0,
            b_v: 1.0,
            a_c: 1.0,
            b_c: 1.0,
            a_e: 1.0,
            b_e: 1.0,
            r_v: 1.0,
            w_v: 1.0,
            r_c: 1.0,
            w_c: 1.0,
            r_e: 1.0,
            w_e: 1.0,
            s: 1.0,
            h: 1.0,
            prior_var_eta: 1e4,
            prior_var_alpha: 1e4,
            prior_var_zeta0: 1e4,
        }
    }
}

impl Hyperparameters {
    /// `(shape, rate)` of the Gamma prior on the family's `lambda^2`.
    pub fn gamma_prior(&self, f: Family) -> (f64, f64) {
        match f {
            Family::Constant => (self.a_c, self.b_c),
            Family::Varying => (self.a_v, self.b_v),
            Family::LinearE => (self.a_e, self.b_e),
        }
    }

    /// `(r, w)` of the Beta prior on the family's inclusion rate.
    pub fn beta_prior(&self, f: Family) -> (f64, f64) {
        match f {
            Family::Constant => (self.r_c, self.w_c),
            Family::Varying => (self.r_v, self.w_v),
            Family::LinearE => (self.r_e, self.w_e),
        }
    }

    pub fn set_gamma_all(&mut self, a: f64, b: f64) {
        (self.a_c, self.a_v, self.a_e) = (a, a, a);
        (self.b_c, self.b_v, self.b_e) = (b, b, b);
    }

    pub fn set_beta_all(&mut self, r: f64, w: f64) {
        (self.r_c, self.r_v, self.r_e) = (r, r, r);
        (self.w_c, self.w_v, self.w_e) = (w, w, w);
    }

    /// True for the improper `1 / sigma^2` prior (`s = h = 0`).
    pub fn improper_sigma(&self) -> bool {
        self.s == 0.0 && self.h == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a_v", self.a_v),
            ("b_v", self.b_v),
            ("a_c", self.a_c),
            ("b_c", self.b_c),
            ("a_e", self.a_e),
            ("b_e", self.b_e),
            ("r_v", self.r_v),
            ("w_v", self.w_v),
            ("r_c", self.r_c),
            ("w_c", self.w_c),
            ("r_e", self.r_e),
            ("w_e", self.w_e),
            ("prior_var_eta", self.prior_var_eta),
            ("prior_var_alpha", self.prior_var_alpha),
            ("prior_var_zeta0", self.prior_var_zeta0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("hyperparameter {name} = {v} must be positive")));
            }
        }
        if !self.improper_sigma() && !(self.s > 0.0 && self.h > 0.0 && self.s.is_finite() && self.h.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma^2 prior needs s, h > 0 (or s = h = 0 for 1/sigma^2); got s = {}, h = {}",
                self.s, self.h
            )));
        }
        Ok(())
    }
}
