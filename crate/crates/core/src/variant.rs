use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The five fitted models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodVariant {
    /// Spike-and-slab on the constant part, the varying part and the E interaction.
    #[serde(rename = "BSSVC-SI")]
    BssvcSi,
    /// Spike-and-slab on the whole spline group and the E interaction.
    #[serde(rename = "BSSVC")]
    Bssvc,
    /// Constant/varying split with Laplace shrinkage only.
    #[serde(rename = "BVC-SI")]
    BvcSi,
    /// Whole spline group with group-Laplace shrinkage only.
    #[serde(rename = "BVC")]
    Bvc,
    /// Linear model in Z with Laplace shrinkage on every genetic term.
    #[serde(rename = "BL")]
    Bl,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 5] =
        [MethodVariant::BssvcSi, MethodVariant::Bssvc, MethodVariant::BvcSi, MethodVariant::Bvc, MethodVariant::Bl];

    /// Point mass at zero in the coefficient priors.
    pub fn spike(self) -> bool {
        matches!(self, MethodVariant::BssvcSi | MethodVariant::Bssvc)
    }

    /// Constant and varying parts carry separate priors.
    pub fn split(self) -> bool {
        matches!(self, MethodVariant::BssvcSi | MethodVariant::BvcSi | MethodVariant::Bl)
    }

    /// Coefficient functions are linear in Z rather than spline-expanded.
    pub fn linear(self) -> bool {
        matches!(self, MethodVariant::Bl)
    }

    pub fn name(self) -> &'static str {
        match self {
            MethodVariant::BssvcSi => "BSSVC-SI",
            MethodVariant::Bssvc => "BSSVC",
            MethodVariant::BvcSi => "BVC-SI",
            MethodVariant::Bvc => "BVC",
            MethodVariant::Bl => "BL",
        }
    }

    /// Families whose shrinkage hyperparameters this variant samples.
    pub fn families(self) -> &'static [Family] {
        if self.split() {
            &[Family::Constant, Family::Varying, Family::LinearE]
        } else {
            &[Family::Varying, Family::LinearE]
        }
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        match norm.as_str() {
            "BSSVCSI" => Ok(MethodVariant::BssvcSi),
            "BSSVC" => Ok(MethodVariant::Bssvc),
            "BVCSI" => Ok(MethodVariant::BvcSi),
            "BVC" => Ok(MethodVariant::Bvc),
            "BL" => Ok(MethodVariant::Bl),
            _ => Err(Error::InvalidConfig(format!("unknown method `{s}`"))),
        }
    }
}

/// Shrinkage family; each owns one `lambda^2` and one inclusion rate `pi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    /// Constant genetic effect (`c`).
    Constant,
    /// Varying genetic effect (`v`); the whole spline group for non-split variants.
    Varying,
    /// Linear interaction with the discrete environment factor (`e`).
    LinearE,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Constant, Family::Varying, Family::LinearE];

    pub fn index(self) -> usize {
        match self {
            Family::Constant => 0,
            Family::Varying => 1,
            Family::LinearE => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Family::Constant => "c",
            Family::Varying => "v",
            Family::LinearE => "e",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        for v in MethodVariant::ALL {
            assert_eq!(v.name().parse::<MethodVariant>().unwrap(), v);
        }
        assert_eq!("bssvc_si".parse::<MethodVariant>().unwrap(), MethodVariant::BssvcSi);
        assert!("lasso".parse::<MethodVariant>().is_err());
    }

    #[test]
    fn variant_flags() {
        assert!(MethodVariant::BssvcSi.spike() && MethodVariant::BssvcSi.split());
        assert!(MethodVariant::Bssvc.spike() && !MethodVariant::Bssvc.split());
        assert!(!MethodVariant::BvcSi.spike() && MethodVariant::BvcSi.split());
        assert!(!MethodVariant::Bvc.spike() && !MethodVariant::Bvc.split());
        assert!(!MethodVariant::Bl.spike() && MethodVariant::Bl.linear());
        assert_eq!(MethodVariant::Bssvc.families().len(), 2);
    }
}
