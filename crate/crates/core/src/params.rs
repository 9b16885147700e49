//! Model coefficients and the hypothesis checks that gate every solver.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Coefficients of the two-species drift-diffusion system with steric
/// cross-diffusion, in dimensionless form.
///
/// Species `u` carries a positive drift coupling and valence, species `v`
/// a negative one. `c1`, `c2` are the constant chemical potentials of the
/// stationary problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub d1: f64,
    pub d2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub g11: f64,
    pub g12: f64,
    pub g21: f64,
    pub g22: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ModelParams {
    /// Checks the sign conventions of every coefficient.
    pub fn check_signs(&self) -> Result<()> {
        let positive = [
            ("d1", self.d1),
            ("d2", self.d2),
            ("theta1", self.theta1),
            ("g11", self.g11),
            ("g12", self.g12),
            ("g21", self.g21),
            ("g22", self.g22),
            ("gamma1", self.gamma1),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::SignViolation {
                    name,
                    value,
                    expected: "> 0",
                });
            }
        }
        for (name, value) in [("theta2", self.theta2), ("gamma2", self.gamma2)] {
            if !(value < 0.0 && value.is_finite()) {
                return Err(Error::SignViolation {
                    name,
                    value,
                    expected: "< 0",
                });
            }
        }
        for (name, value) in [("c1", self.c1), ("c2", self.c2)] {
            if !value.is_finite() {
                return Err(Error::SignViolation {
                    name,
                    value,
                    expected: "finite",
                });
            }
        }
        Ok(())
    }

    /// `g11 g22 - g12 g21`; nonnegative means the algebraic system has a
    /// unique solution branch.
    pub fn steric_determinant(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g21
    }

    /// True when the determinant condition for a unique branch holds.
    /// The boundary case of a vanishing determinant counts as unique.
    pub fn is_unique_branch(&self) -> bool {
        self.steric_determinant() >= 0.0
    }

    /// Default tolerance used to classify the sign of the fold function.
    pub fn sigma_tolerance(&self) -> f64 {
        1e-9 * (1.0 + self.c1.abs() + self.c2.abs())
    }
}

/// Outcome of the hypothesis checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisReport {
    /// `g11 g22 - g12 g21 >= 0`.
    pub h1_holds: bool,
    /// `g11 g22 - g12 g21 < 0`.
    pub h2_holds: bool,
    /// Coefficient condition for entropy decay of species `u`.
    pub script_h1_holds: bool,
    /// Mirrored condition for species `v`.
    pub script_h2_holds: bool,
    /// Initial relative entropy, when initial data were supplied.
    pub script_h3_value: Option<f64>,
    pub poincare_constant: f64,
}

impl HypothesisReport {
    /// Attaches the initial relative entropy `H0`.
    pub fn with_initial_entropy(mut self, h0: f64) -> Self {
        self.script_h3_value = Some(h0);
        self
    }

    /// `0 < H0 < inf`; false when no initial data were supplied.
    pub fn script_h3_holds(&self) -> bool {
        matches!(self.script_h3_value, Some(h) if h > 0.0 && h.is_finite())
    }
}

/// Sharp Poincaré constant `(L/pi)^2` of a 1D interval of length `L`.
pub fn poincare_constant(domain_length: f64) -> Result<f64> {
    if !(domain_length > 0.0 && domain_length.is_finite()) {
        return Err(Error::NonpositiveLength(domain_length));
    }
    Ok((domain_length / PI).powi(2))
}

/// Left and right sides of the species-`u` decay condition.
pub fn script_h1_sides(params: &ModelParams, poincare: f64) -> (f64, f64) {
    let p = params;
    let lhs = 0.5 / poincare * (2.0 * p.g11 - p.g12 - p.g21);
    let rhs = (-0.5 * (p.gamma2 * p.theta1 + p.gamma1 * (2.0 * p.theta1 + p.theta2))).max(0.0);
    (lhs, rhs)
}

/// Left and right sides of the species-`v` decay condition.
pub fn script_h2_sides(params: &ModelParams, poincare: f64) -> (f64, f64) {
    let p = params;
    let lhs = 0.5 / poincare * (2.0 * p.g22 - p.g12 - p.g21);
    let rhs = (-0.5 * (p.gamma1 * p.theta2 + p.gamma2 * (2.0 * p.theta2 + p.theta1))).max(0.0);
    (lhs, rhs)
}

/// Evaluates the branch hypotheses and the entropy-decay coefficient
/// conditions for a given Poincaré constant.
pub fn validate(params: &ModelParams, poincare: f64) -> Result<HypothesisReport> {
    params.check_signs()?;
    if !(poincare > 0.0 && poincare.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Poincaré constant must be positive, got {poincare}"
        )));
    }
    let h1_holds = params.is_unique_branch();
    let (l1, r1) = script_h1_sides(params, poincare);
    let (l2, r2) = script_h2_sides(params, poincare);
    Ok(HypothesisReport {
        h1_holds,
        h2_holds: !h1_holds,
        script_h1_holds: l1 > r1,
        script_h2_holds: l2 > r2,
        script_h3_value: None,
        poincare_constant: poincare,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn symmetric() -> ModelParams {
        ModelParams {
            d1: 1.0,
            d2: 1.0,
            theta1: 1.0,
            theta2: -1.0,
            g11: 2.0,
            g12: 1.0,
            g21: 1.0,
            g22: 2.0,
            gamma1: 1.0,
            gamma2: -1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }

    #[test]
    fn determinant_classification() {
        let p = symmetric();
        let r = validate(&p, 1.0).unwrap();
        assert!(r.h1_holds && !r.h2_holds);

        let q = ModelParams {
            g11: 1.0,
            g12: 2.0,
            g21: 2.0,
            g22: 1.0,
            ..p
        };
        let r = validate(&q, 1.0).unwrap();
        assert!(r.h2_holds && !r.h1_holds);
    }

    #[test]
    fn zero_determinant_is_unique_branch() {
        let p = ModelParams {
            g11: 2.0,
            g12: 4.0,
            g21: 1.0,
            g22: 2.0,
            ..symmetric()
        };
        assert_eq!(p.steric_determinant(), 0.0);
        assert!(validate(&p, 1.0).unwrap().h1_holds);
    }

    #[test]
    fn decay_condition_on_symmetric_interval() {
        let p = symmetric();
        let cp = poincare_constant(2.0).unwrap();
        let (lhs, rhs) = script_h1_sides(&p, cp);
        assert!((lhs - PI * PI / 4.0).abs() < 1e-12);
        assert!((lhs - 2.467).abs() < 1e-3);
        assert_eq!(rhs, 0.0);
        let r = validate(&p, cp).unwrap();
        assert!(r.script_h1_holds && r.script_h2_holds);
        assert!(!r.script_h3_holds());
        assert!(r.with_initial_entropy(0.3).script_h3_holds());
    }

    #[test]
    fn poincare_values() {
        assert!((poincare_constant(PI).unwrap() - 1.0).abs() < 1e-15);
        assert!((poincare_constant(2.0).unwrap() - 4.0 / (PI * PI)).abs() < 1e-15);
        assert!((poincare_constant(2.0).unwrap() - 0.4053).abs() < 1e-4);
        assert!((poincare_constant(2.0 * PI).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(poincare_constant(0.0), Err(Error::NonpositiveLength(0.0)));
        assert!(poincare_constant(-1.0).is_err());
    }

    #[test]
    fn sign_violations_are_reported() {
        let p = ModelParams {
            theta2: 1.0,
            ..symmetric()
        };
        match validate(&p, 1.0) {
            Err(Error::SignViolation { name, .. }) => assert_eq!(name, "theta2"),
            other => panic!("unexpected {other:?}"),
        }
        let p = ModelParams {
            g12: 0.0,
            ..symmetric()
        };
        assert!(matches!(
            validate(&p, 1.0),
            Err(Error::SignViolation { name: "g12", .. })
        ));
    }

    #[test]
    fn validate_is_deterministic() {
        let p = symmetric();
        assert_eq!(validate(&p, 0.3).unwrap(), validate(&p, 0.3).unwrap());
    }
}
