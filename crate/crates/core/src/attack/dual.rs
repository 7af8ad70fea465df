//! Dual variable of the distance-constrained attack problem.

use crate::error::{Error, Result};

/// Direction of the projected sub-gradient step on λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualSign {
    /// `λ ← [λ + ε(d − d_T)]⁺`: λ grows while the constraint is violated.
    #[default]
    Standard,
    /// `λ ← [λ − ε(d − d_T)]⁺`, the literal published update.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualState {
    pub lambda: f64,
    /// Stealth radius `d_T`.
    pub d_t: f64,
    /// Sub-gradient step size ε.
    pub epsilon: f64,
    pub sign: DualSign,
}

impl DualState {
    pub fn new(lambda: f64, d_t: f64, epsilon: f64, sign: DualSign) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("initial lambda {lambda} must be >= 0")));
        }
        if !(d_t > 0.0 && d_t.is_finite()) {
            return Err(Error::Config(format!("d_T {d_t} must be > 0")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("dual step {epsilon} must be > 0")));
        }
        Ok(Self {
            lambda,
            d_t,
            epsilon,
            sign,
        })
    }
}

/// One projected sub-gradient step given the achieved distance.
pub fn dual_update(dual: &DualState, achieved_d: f64) -> DualState {
    let violation = achieved_d - dual.d_t;
    let raw = match dual.sign {
        DualSign::Standard => dual.lambda + dual.epsilon * violation,
        DualSign::Paper => dual.lambda - dual.epsilon * violation,
    };
    DualState {
        lambda: raw.max(0.0),
        ..*dual
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dual(lambda: f64) -> DualState {
        DualState::new(lambda, 1.0, 0.1, DualSign::Standard).unwrap()
    }

    #[test]
    fn boundary_leaves_lambda() {
        assert_eq!(dual_update(&dual(0.7), 1.0).lambda, 0.7);
        let p = DualState {
            sign: DualSign::Paper,
            ..dual(0.7)
        };
        assert_eq!(dual_update(&p, 1.0).lambda, 0.7);
    }

    #[test]
    fn violation_raises_lambda() {
        assert!((dual_update(&dual(1.0), 2.0).lambda - 1.1).abs() < 1e-15);
    }

    #[test]
    fn projection_at_zero() {
        assert_eq!(dual_update(&dual(0.05), 0.0).lambda, 0.0);
    }

    #[test]
    fn paper_sign_is_reversed() {
        let p = DualState {
            sign: DualSign::Paper,
            ..dual(1.0)
        };
        assert!((dual_update(&p, 2.0).lambda - 0.9).abs() < 1e-15);
    }

    #[test]
    fn invalid_states() {
        assert!(DualState::new(-1.0, 1.0, 0.1, DualSign::Standard).is_err());
        assert!(DualState::new(0.0, 0.0, 0.1, DualSign::Standard).is_err());
        assert!(DualState::new(0.0, 1.0, 0.0, DualSign::Standard).is_err());
    }
}
