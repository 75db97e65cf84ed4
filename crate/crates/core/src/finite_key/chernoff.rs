use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A quantity with a two-sided confidence interval and the failure
/// probability spent on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundedValue {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
}

impl BoundedValue {
    /// A value known exactly; no failure probability.
    pub fn exact(value: f64) -> Self {
        BoundedValue {
            value,
            lower: value,
            upper: value,
            epsilon: 0.0,
        }
    }

    /// All three numbers divided by `d`, as when turning counts into rates.
    pub fn scaled(&self, d: f64) -> Self {
        BoundedValue {
            value: self.value / d,
            lower: self.lower / d,
            upper: self.upper / d,
            epsilon: self.epsilon,
        }
    }
}

/// `g₂(x) = ln(1+x) − x/(1+x)`.
pub fn g2(x: f64) -> Result<f64> {
    if !(x > -1.0) || !x.is_finite() {
        return Err(Error::invalid(format!("g2 argument {x} must exceed -1")));
    }
    Ok((x.ln_1p() - x / (1.0 + x)).max(0.0))
}

fn check_n_alpha(n_alpha: f64) -> Result<()> {
    if n_alpha == 0.0 {
        return Err(Error::VacuousBound { n_alpha, epsilon: 2.0 });
    }
    if !(n_alpha > 0.0) || !n_alpha.is_finite() {
        return Err(Error::invalid(format!("n_alpha = {n_alpha} must be positive")));
    }
    Ok(())
}

/// Bounds on the expectation behind an observed count `chi`.
///
/// The interval is the preset `χ ∓ n_α√χ`; the failure probability follows
/// from `E^L = χ/(1+δ^L)`, `E^U = χ/(1−δ^U)` and
/// `ε = e^{−χ g₂(δ^L)} + e^{−χ g₂(−δ^U)}`.
///
/// The upper tail is the Chernoff lower-tail bound at mean `E^U`, whose
/// exponent is `χ g₂(−δ^U)`.
///
/// When `χ − n_α√χ ≤ 0` this returns [`Error::DegenerateBound`] carrying the
/// interval with its lower end clamped to zero; the lower tail then spends no
/// failure probability.
pub fn chernoff_inverse(chi: f64, n_alpha: f64) -> Result<BoundedValue> {
    check_n_alpha(n_alpha)?;
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(Error::invalid(format!("observed count {chi} must be nonnegative")));
    }
    let w = n_alpha * chi.sqrt();
    let (lower, upper) = (chi - w, chi + w);
    let eps_upper = if upper > 0.0 {
        let d_u = 1.0 - chi / upper;
        (-chi * g2(-d_u)?).exp()
    } else {
        1.0
    };
    if lower <= 0.0 {
        return Err(Error::DegenerateBound {
            observed: chi,
            clamped: BoundedValue {
                value: chi,
                lower: 0.0,
                upper,
                epsilon: eps_upper,
            },
        });
    }
    let d_l = chi / lower - 1.0;
    let eps_lower = (-chi * g2(d_l)?).exp();
    Ok(BoundedValue {
        value: chi,
        lower,
        upper,
        epsilon: eps_lower + eps_upper,
    })
}

/// Like [`chernoff_inverse`] but accepts the clamped interval of a degenerate
/// bound.
pub fn chernoff_inverse_clamped(chi: f64, n_alpha: f64) -> Result<BoundedValue> {
    match chernoff_inverse(chi, n_alpha) {
        Err(Error::DegenerateBound { clamped, .. }) => Ok(clamped),
        other => other,
    }
}

/// Bounds on the observation given its expectation `expect`: presets
/// `E ∓ n_α√E`, `δ̄ = n_α/√E`, `ε = 2 e^{−δ̄² E/(2+δ̄)}`. A negative lower end
/// is clamped to zero.
pub fn chernoff_direct(expect: f64, n_alpha: f64) -> Result<BoundedValue> {
    check_n_alpha(n_alpha)?;
    if !(expect > 0.0) || !expect.is_finite() {
        return Err(Error::invalid(format!("expectation {expect} must be positive")));
    }
    let s = expect.sqrt();
    let delta = n_alpha / s;
    let tail = (-delta * delta * expect / (2.0 + delta)).exp();
    Ok(BoundedValue {
        value: expect,
        lower: (expect - n_alpha * s).max(0.0),
        upper: expect + n_alpha * s,
        epsilon: 2.0 * tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g2_examples() {
        assert_eq!(g2(0.0).unwrap(), 0.0);
        assert!((g2(1.0).unwrap() - 0.193_147_180_56).abs() < 1e-10);
        // log1p-based evaluation against the 40-digit value
        assert!((g2(1e-3).unwrap() - 4.993_340_825e-7).abs() < 1e-15);
        assert!(g2(-1.0).is_err());
        assert!(g2(-2.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        let b = chernoff_inverse(1e6, 7.0).unwrap();
        assert_eq!(b.lower, 993_000.0);
        assert_eq!(b.upper, 1_007_000.0);
        assert!(b.epsilon > 1e-11 && b.epsilon < 1e-10, "{}", b.epsilon);
        // mpmath at 40 digits
        assert!((b.epsilon / 4.606_67e-11 - 1.0).abs() < 1e-4, "{}", b.epsilon);
    }

    #[test]
    fn inverse_vacuous_and_degenerate() {
        assert!(matches!(chernoff_inverse(1e6, 0.0), Err(Error::VacuousBound { epsilon, .. }) if epsilon == 2.0));
        match chernoff_inverse(20.0, 7.0) {
            Err(Error::DegenerateBound { clamped, .. }) => {
                assert_eq!(clamped.lower, 0.0);
                assert!(clamped.upper > 20.0);
                assert!(clamped.epsilon > 0.0 && clamped.epsilon < 1.0);
            }
            other => panic!("expected degenerate bound, got {other:?}"),
        }
        let c = chernoff_inverse_clamped(20.0, 7.0).unwrap();
        assert_eq!(c.lower, 0.0);
        assert!(chernoff_inverse(-1.0, 7.0).is_err());
    }

    #[test]
    fn direct_examples() {
        let b = chernoff_direct(1e6, 7.0).unwrap();
        assert_eq!(b.lower, 993_000.0);
        assert_eq!(b.upper, 1_007_000.0);
        assert!((b.epsilon / 4.988_00e-11 - 1.0).abs() < 1e-4, "{}", b.epsilon);
        assert!(chernoff_direct(0.0, 7.0).is_err());
        assert!(chernoff_direct(-3.0, 7.0).is_err());
        assert_eq!(chernoff_direct(10.0, 7.0).unwrap().lower, 0.0);
    }

    proptest! {
        #[test]
        fn g2_nonnegative(x in -0.999f64..100.0) {
            prop_assert!(g2(x).unwrap() >= 0.0);
        }

        #[test]
        fn inverse_epsilon_decreases_in_chi(chi in 1e3f64..1e9, k in 1.01f64..10.0) {
            let a = chernoff_inverse(chi, 7.0).unwrap().epsilon;
            let b = chernoff_inverse(chi * k, 7.0).unwrap().epsilon;
            prop_assert!(b <= a * (1.0 + 1e-9));
        }

        #[test]
        fn direct_epsilon_decreases_at_fixed_delta(e in 1.0f64..1e8, k in 1.01f64..10.0, delta in 0.001f64..0.5) {
            // fixed relative deviation: n_α scales with √E
            let a = chernoff_direct(e, delta * e.sqrt()).unwrap().epsilon;
            let b = chernoff_direct(e * k, delta * (e * k).sqrt()).unwrap().epsilon;
            prop_assert!(b < a || a == 0.0);
        }

        #[test]
        fn intervals_contain_value(chi in 1.0f64..1e12, n in 0.1f64..10.0) {
            let b = chernoff_inverse_clamped(chi, n).unwrap();
            prop_assert!(b.lower <= b.value && b.value <= b.upper);
            let d = chernoff_direct(chi, n).unwrap();
            prop_assert!(d.lower <= d.value && d.value <= d.upper);
        }
    }
}
