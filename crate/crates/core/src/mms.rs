//! Manufactured solutions with closed-form forcing, and discrete error norms.
//!
//! Both cases derive their velocity from a stream function, so they are
//! divergence free and vanish on the boundary of the unit square. Exact
//! pressures are returned with zero mean over the square, the same
//! representative the solver computes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::quadrature::QuadratureRule;
use crate::space::{ElementTable, PressureField, VelocityField};
use crate::twogrid::FlowProblem;

/// Quadrature degree for error norms against non-polynomial exact fields.
pub const NORM_DEGREE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    /// Polynomial velocity with exponential growth, `p = y e^t`.
    Polynomial,
    /// Oscillatory trigonometric velocity and pressure vanishing at `t = 0`.
    Trigonometric,
}

impl Example {
    pub fn id(self) -> u8 {
        match self {
            Example::Polynomial => 1,
            Example::Trigonometric => 2,
        }
    }
}

impl FromStr for Example {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1" => Ok(Example::Polynomial),
            "2" => Ok(Example::Trigonometric),
            other => Err(format!("unknown example '{other}' (expected 1 or 2)")),
        }
    }
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// Every exact quantity at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactFields {
    pub velocity: [f64; 2],
    /// `gradient[i][j] = d u_i / d x_j`
    pub gradient: [[f64; 2]; 2],
    pub laplacian: [f64; 2],
    pub time_derivative: [f64; 2],
    /// Zero-mean representative.
    pub pressure: f64,
    pub pressure_gradient: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    pub example: Example,
    pub nu: f64,
}

// x^2 (x-1)^2 and its derivatives
fn g0(x: f64) -> f64 {
    x * x * (x - 1.0) * (x - 1.0)
}
fn g1(x: f64) -> f64 {
    2.0 * x * (x - 1.0) * (2.0 * x - 1.0)
}
fn g2(x: f64) -> f64 {
    12.0 * x * x - 12.0 * x + 2.0
}
fn g3(x: f64) -> f64 {
    24.0 * x - 12.0
}

impl ManufacturedCase {
    pub fn new(example: Example, nu: f64) -> Self {
        Self { example, nu }
    }

    pub fn fields(&self, t: f64, p: [f64; 2]) -> ExactFields {
        let [x, y] = p;
        match self.example {
            Example::Polynomial => {
                // psi = e^t g(x) g(y), u = (psi_y, -psi_x)
                let e = t.exp();
                let velocity = [e * g0(x) * g1(y), -e * g1(x) * g0(y)];
                ExactFields {
                    velocity,
                    gradient: [[e * g1(x) * g1(y), e * g0(x) * g2(y)], [-e * g2(x) * g0(y), -e * g1(x) * g1(y)]],
                    laplacian: [e * (g2(x) * g1(y) + g0(x) * g3(y)), -e * (g3(x) * g0(y) + g1(x) * g2(y))],
                    time_derivative: velocity,
                    pressure: e * (y - 0.5),
                    pressure_gradient: [0.0, e],
                }
            }
            Example::Trigonometric => {
                let s = t * (-t * t).exp();
                let ds = (1.0 - 2.0 * t * t) * (-t * t).exp();
                // a(z) = sin^2(3 pi z), c(z) = sin(6 pi z)
                let a = |z: f64| (3.0 * PI * z).sin().powi(2);
                let da = |z: f64| 3.0 * PI * (6.0 * PI * z).sin();
                let dda = |z: f64| 18.0 * PI * PI * (6.0 * PI * z).cos();
                let c = |z: f64| (6.0 * PI * z).sin();
                let dc = |z: f64| 6.0 * PI * (6.0 * PI * z).cos();
                let ddc = |z: f64| -36.0 * PI * PI * (6.0 * PI * z).sin();
                let shape = [a(x) * c(y), -a(y) * c(x)];
                let q = t * (-t).exp();
                let (sx, cx) = (2.0 * PI * x).sin_cos();
                let (sy, cy) = (2.0 * PI * y).sin_cos();
                ExactFields {
                    velocity: [s * shape[0], s * shape[1]],
                    gradient: [[s * da(x) * c(y), s * a(x) * dc(y)], [-s * a(y) * dc(x), -s * da(y) * c(x)]],
                    laplacian: [s * (dda(x) * c(y) + a(x) * ddc(y)), -s * (dda(y) * c(x) + a(y) * ddc(x))],
                    time_derivative: [ds * shape[0], ds * shape[1]],
                    pressure: q * sx * sy,
                    pressure_gradient: [2.0 * PI * q * cx * sy, 2.0 * PI * q * sx * cy],
                }
            }
        }
    }

    pub fn velocity(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        self.fields(t, p).velocity
    }

    pub fn pressure(&self, t: f64, p: [f64; 2]) -> f64 {
        self.fields(t, p).pressure
    }

    /// `f = u_t - nu lap u + (u . grad) u + grad p`.
    pub fn forcing(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        let e = self.fields(t, p);
        let u = e.velocity;
        std::array::from_fn(|i| {
            let conv = u[0] * e.gradient[i][0] + u[1] * e.gradient[i][1];
            e.time_derivative[i] - self.nu * e.laplacian[i] + conv + e.pressure_gradient[i]
        })
    }
}

impl FlowProblem for ManufacturedCase {
    fn initial_velocity(&self, p: [f64; 2]) -> [f64; 2] {
        self.velocity(0.0, p)
    }

    fn forcing(&self, t: f64, p: [f64; 2]) -> [f64; 2] {
        ManufacturedCase::forcing(self, t, p)
    }
}

/// `L2` velocity error, `H1` seminorm velocity error and `L2` pressure error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2_velocity: f64,
    pub h1_velocity: f64,
    pub l2_pressure: f64,
}

/// Errors of a discrete velocity/pressure pair against `case` at time `t`,
/// integrated cell by cell with the degree-7 rule. The discrete pressure is
/// shifted to zero mean first.
pub fn error_norms(u: &VelocityField, p: &PressureField, case: &ManufacturedCase, t: f64) -> ErrorNorms {
    let space = u.space();
    let mesh = space.mesh();
    let table = ElementTable::new(QuadratureRule::new(NORM_DEGREE).expect("degree 7 rule exists"));
    let p_mean = p.mean();
    let per_cell = space.exec().map(mesh.n_cells(), |c| {
        let area2 = 2.0 * space.geometry()[c].area;
        let ph = p.coeffs()[c] - p_mean;
        let mut acc = [0.0; 3];
        for (q, &l) in table.rule.points.iter().enumerate() {
            let w = area2 * table.rule.weights[q];
            let exact = case.fields(t, mesh.to_physical(c, l));
            let num = u.eval_in_cell(c, l);
            for i in 0..2 {
                acc[0] += w * (exact.velocity[i] - num.value[i]).powi(2);
                for j in 0..2 {
                    acc[1] += w * (exact.gradient[i][j] - num.gradient[i][j]).powi(2);
                }
            }
            acc[2] += w * (exact.pressure - ph).powi(2);
        }
        acc
    });
    let sum = per_cell.iter().fold([0.0; 3], |s, a| [s[0] + a[0], s[1] + a[1], s[2] + a[2]]);
    ErrorNorms { l2_velocity: sum[0].sqrt(), h1_velocity: sum[1].sqrt(), l2_pressure: sum[2].sqrt() }
}

/// Observed convergence order between two levels:
/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn convergence_rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Execution;
    use crate::space::FeSpace;
    use rand::{Rng, SeedableRng};

    fn cases() -> [ManufacturedCase; 2] {
        [ManufacturedCase::new(Example::Polynomial, 1.0), ManufacturedCase::new(Example::Trigonometric, 1.0)]
    }

    #[test]
    fn boundary_values_vanish() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for case in cases() {
            for _ in 0..50 {
                let t = rng.random::<f64>();
                let s = rng.random::<f64>();
                for p in [[0.0, s], [1.0, s], [s, 0.0], [s, 1.0]] {
                    let u = case.velocity(t, p);
                    assert!(u[0].abs() < 1e-14 && u[1].abs() < 1e-14, "{case:?} {p:?}");
                }
            }
        }
        assert_eq!(cases()[0].velocity(0.3, [0.0, 0.5]), [0.0, 0.0]);
    }

    #[test]
    fn divergence_free() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for case in cases() {
            for _ in 0..100 {
                let t = rng.random::<f64>();
                let p = [rng.random::<f64>(), rng.random::<f64>()];
                let g = case.fields(t, p).gradient;
                assert!((g[0][0] + g[1][1]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trigonometric_case_starts_at_rest() {
        let case = cases()[1];
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let p = [rng.random::<f64>(), rng.random::<f64>()];
            let e = case.fields(0.0, p);
            assert_eq!(e.velocity, [0.0, 0.0]);
            let f = case.forcing(0.0, p);
            for i in 0..2 {
                assert!((f[i] - e.time_derivative[i] - e.pressure_gradient[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn polynomial_pressure_gradient_in_forcing() {
        let case = cases()[0];
        let (t, p) = (0.4, [0.3, 0.6]);
        let e = case.fields(t, p);
        let u = e.velocity;
        let conv = u[0] * e.gradient[1][0] + u[1] * e.gradient[1][1];
        let without_p = e.time_derivative[1] - e.laplacian[1] + conv;
        assert!((case.forcing(t, p)[1] - without_p - t.exp()).abs() < 1e-14);
    }

    #[test]
    fn exact_pressures_have_zero_mean() {
        let rule = QuadratureRule::new(7).unwrap();
        let space = FeSpace::structured(8, Execution::Sequential).unwrap();
        for case in cases() {
            let mut mean = 0.0;
            for c in 0..space.mesh().n_cells() {
                let a2 = 2.0 * space.geometry()[c].area;
                for (q, &l) in rule.points.iter().enumerate() {
                    mean += a2 * rule.weights[q] * case.pressure(0.7, space.mesh().to_physical(c, l));
                }
            }
            assert!(mean.abs() < 1e-12, "{case:?}: {mean}");
        }
    }

    #[test]
    fn interpolation_errors_and_rates() {
        let case = cases()[0];
        let mut prev: Option<ErrorNorms> = None;
        for n in [4usize, 8, 16, 32] {
            let space = FeSpace::structured(n, Execution::Parallel).unwrap();
            let u = VelocityField::interpolate(&space, |p| case.velocity(1.0, p));
            let p = PressureField::zeros(&space);
            let e = error_norms(&u, &p, &case, 1.0);
            if n == 8 {
                assert!(e.l2_velocity <= 1e-3);
            }
            if let Some(c) = prev {
                let r0 = convergence_rate(c.l2_velocity, e.l2_velocity, 2.0, 1.0);
                let r1 = convergence_rate(c.h1_velocity, e.h1_velocity, 2.0, 1.0);
                if n >= 16 {
                    assert!((r0 - 3.0).abs() < 0.15, "L2 interpolation rate {r0}");
                    assert!((r1 - 2.0).abs() < 0.15, "H1 interpolation rate {r1}");
                }
            }
            prev = Some(e);
        }
    }

    #[test]
    fn zero_field_against_resting_solution() {
        let case = cases()[1];
        let space = FeSpace::structured(4, Execution::Sequential).unwrap();
        let e = error_norms(&VelocityField::zeros(&space), &PressureField::zeros(&space), &case, 0.0);
        assert_eq!(e.l2_velocity, 0.0);
        assert_eq!(e.h1_velocity, 0.0);
        assert_eq!(e.l2_pressure, 0.0);
    }

    #[test]
    fn pressure_error_ignores_constant_shift() {
        let case = cases()[0];
        let space = FeSpace::structured(4, Execution::Sequential).unwrap();
        let u = VelocityField::zeros(&space);
        let mut p = PressureField::from_coeffs(&space, (0..32).map(|c| (c as f64 * 0.37).sin()).collect()).unwrap();
        let base = error_norms(&u, &p, &case, 0.5).l2_pressure;
        p.coeffs_mut().iter_mut().for_each(|v| *v += 12.5);
        let shifted = error_norms(&u, &p, &case, 0.5).l2_pressure;
        assert!((base - shifted).abs() < 1e-12);
    }

    #[test]
    fn rate_formula() {
        assert!((convergence_rate(8.0, 1.0, 0.5, 0.25) - 3.0).abs() < 1e-15);
        assert!((convergence_rate(0.139927, 0.075081, 0.25, 0.125) - 0.898156).abs() < 5e-5);
        assert!((convergence_rate(1.0, 0.25, 1.0 / 3.0, 1.0 / 6.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn example_parsing() {
        assert_eq!("1".parse::<Example>().unwrap(), Example::Polynomial);
        assert_eq!("2".parse::<Example>().unwrap(), Example::Trigonometric);
        assert!("3".parse::<Example>().is_err());
    }
}
