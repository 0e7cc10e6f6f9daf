//! Numeric checks of the stand-in derivative analysis.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::defense::{
    approx_standin_jacobian, approximation_alpha, exact_standin_jacobian, MomentState,
    DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS,
};
use crate::error::Result;
use crate::nn::{Activation, GradientSet, MlpSpec, Params};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: measured {:.6e}, expected {:.6e} (tolerance {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.expected,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn within(name: &'static str, measured: f64, expected: f64, tolerance: f64) -> Check {
    Check {
        name,
        measured,
        expected,
        tolerance,
        passed: (measured - expected).abs() <= tolerance,
    }
}

fn below(name: &'static str, measured: f64, bound: f64) -> Check {
    Check { name, measured, expected: 0.0, tolerance: bound, passed: measured < bound }
}

/// Flat container of `n` coordinates (a single `[n-1 -> 1]` layer).
fn flat_set(values: &[f64]) -> GradientSet {
    let spec = MlpSpec::new(vec![values.len() - 1, 1], Activation::Tanh).expect("n >= 2");
    Params::zeros(&spec).with_flat(values).expect("matching length")
}

fn random_gradient(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.random_range(0.1..2.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

pub const COORDINATES: usize = 1000;
pub const BETA2_POW_EXPECTED: f64 = 0.36770;
pub const ALPHA_LATE_EXPECTED: f64 = 1.258;
pub const APPROX_REL_TOLERANCE: f64 = 0.15;
pub const JACOBIAN_REL_TOLERANCE: f64 = 1e-5;

/// Runs every check. Deterministic.
pub fn verify_derivatives() -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checks = Vec::new();

    checks.push(within(
        "beta2^1000",
        DEFAULT_BETA2.powi(1000),
        BETA2_POW_EXPECTED,
        5e-4,
    ));

    // α at r = 1000 with v_{r-1} = g².
    let g = flat_set(&random_gradient(&mut rng, COORDINATES));
    let late = MomentState::from_parts(
        g.map(|_| 0.0),
        g.map(|x| x * x),
        999,
        DEFAULT_BETA1,
        DEFAULT_BETA2,
        DEFAULT_EPS,
    )?;
    checks.push(within("alpha(r=1000, v=g^2)", approximation_alpha(&late, &g)?, ALPHA_LATE_EXPECTED, 0.01));

    // α at r = 1 from a fresh state.
    checks.push(within("alpha(r=1)", approximation_alpha(&MomentState::new(&g), &g)?, 1.0, 1e-6));

    // Exact derivative against central differences on random states.
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..COORDINATES {
        let m = rng.random_range(-1.0..1.0);
        let v = rng.random_range(0.01..1.0);
        let round = rng.random_range(1..1000);
        let gv = random_gradient(&mut rng, 1)[0];
        let st = MomentState::from_parts(
            flat_set(&[m, m]),
            flat_set(&[v, v]),
            round,
            DEFAULT_BETA1,
            DEFAULT_BETA2,
            DEFAULT_EPS,
        )?;
        let exact = exact_standin_jacobian(&st, &flat_set(&[gv, gv]))?.flatten()[0];
        let up = st.peek_standin(&flat_set(&[gv + h, gv + h]))?.flatten()[0];
        let down = st.peek_standin(&flat_set(&[gv - h, gv - h]))?.flatten()[0];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((exact - fd).abs() / exact.abs());
    }
    checks.push(below("exact jacobian vs finite differences (max rel err)", worst, JACOBIAN_REL_TOLERANCE));

    // Simplified derivative under the large-r assumptions: v_{r-1} = g²,
    // r = 1000, and a constant-sign gradient stream so m_{r-1} = (1-β₁^{r-1}) g.
    let m_prev = g.map(|x| (1.0 - DEFAULT_BETA1.powi(999)) * x);
    let steady = MomentState::from_parts(
        m_prev,
        g.map(|x| x * x),
        999,
        DEFAULT_BETA1,
        DEFAULT_BETA2,
        DEFAULT_EPS,
    )?;
    let exact = exact_standin_jacobian(&steady, &g)?.flatten();
    let approx = approx_standin_jacobian(&steady, &g, ALPHA_LATE_EXPECTED)?;
    let worst = exact
        .iter()
        .zip(&approx)
        .filter_map(|(e, a)| a.map(|a| (a - e).abs() / e.abs()))
        .fold(0.0, f64::max);
    checks.push(below("simplified derivative vs exact (max rel err)", worst, APPROX_REL_TOLERANCE));

    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_is_deterministic() {
        assert_eq!(verify_derivatives().unwrap(), verify_derivatives().unwrap());
    }

    #[test]
    fn closed_form_checks_pass() {
        let report = verify_derivatives().unwrap();
        for name in [
            "beta2^1000",
            "alpha(r=1000, v=g^2)",
            "alpha(r=1)",
            "exact jacobian vs finite differences (max rel err)",
        ] {
            let c = report.get(name).unwrap();
            assert!(c.passed, "{c}");
        }
        let beta = report.get("beta2^1000").unwrap().measured;
        assert!((beta - (-1.0f64).exp()).abs() < 2e-4);
    }
}
