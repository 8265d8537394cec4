//! Initial density profiles.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    /// `mean + amp * cos(pi x)`.
    Cosine { mean: f64, amp: f64 },
    /// Linear interpolation between `left` at 0 and `right` at 1.
    Linear { left: f64, right: f64 },
}

impl Profile {
    pub fn eval<R: Real>(&self, x: R) -> R {
        match *self {
            Profile::Constant { value } => R::lit(value),
            Profile::Cosine { mean, amp } => R::lit(mean) + R::lit(amp) * (R::lit(std::f64::consts::PI) * x).cos(),
            Profile::Linear { left, right } => R::lit(left) + (R::lit(right) - R::lit(left)) * x,
        }
    }

    /// Range of the profile on `[0, 1]`.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Profile::Constant { value } => (value, value),
            Profile::Cosine { mean, amp } => (mean - amp.abs(), mean + amp.abs()),
            Profile::Linear { left, right } => (left.min(right), left.max(right)),
        }
    }

    pub fn is_admissible(&self) -> bool {
        let (lo, hi) = self.range();
        lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi <= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_and_checks_range() {
        let p = Profile::Cosine { mean: 0.5, amp: 0.3 };
        assert!((p.eval(0.0f64) - 0.8).abs() < 1e-15);
        assert!((p.eval(1.0f64) - 0.2).abs() < 1e-15);
        assert!(p.is_admissible());
        assert!(!Profile::Linear { left: -0.1, right: 0.5 }.is_admissible());
        let j: Profile = serde_json::from_str(r#"{"kind":"constant","value":0.3}"#).unwrap();
        assert_eq!(j, Profile::Constant { value: 0.3 });
    }
}
