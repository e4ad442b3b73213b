//! Symmetric quadrature rules on the reference triangle `(0,0), (1,0), (0,1)`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("no quadrature rule for degree {0} (supported: 2, 5, 7)")]
pub struct UnsupportedDegree(pub usize);

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates of the points.
    pub points: Vec<[f64; 3]>,
    /// Weights; they sum to the reference area 1/2.
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    /// Returns a rule exact for polynomials of at least `degree`.
    ///
    /// Degree 2 is the 3-point interior rule, degree 5 the 7-point Radon rule,
    /// and degree 7 is served by the 16-point Dunavant rule (exact to degree 8,
    /// all weights positive).
    pub fn new(degree: usize) -> Result<Self, UnsupportedDegree> {
        let mut rule = RuleBuilder::default();
        let exactness_degree = match degree {
            2 => {
                rule.orbit3(1.0 / 6.0, 1.0 / 3.0);
                2
            }
            5 => {
                let r = 15f64.sqrt();
                rule.centroid(9.0 / 40.0);
                rule.orbit3((6.0 - r) / 21.0, (155.0 - r) / 1200.0);
                rule.orbit3((6.0 + r) / 21.0, (155.0 + r) / 1200.0);
                5
            }
            7 => {
                rule.centroid(0.144_315_607_677_787);
                rule.orbit3(0.459_292_588_292_723, 0.095_091_634_267_285);
                rule.orbit3(0.170_569_307_751_760, 0.103_217_370_534_718);
                rule.orbit3(0.050_547_228_317_031, 0.032_458_497_623_198);
                rule.orbit6(0.008_394_777_409_958, 0.263_112_829_634_638, 0.027_230_314_174_435);
                8
            }
            d => return Err(UnsupportedDegree(d)),
        };
        Ok(rule.finish(exactness_degree))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f(xi, eta)` over the reference triangle.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(l, w)| w * f(l[1], l[2])).sum()
    }
}

/// Accumulates symmetric orbits with weights normalised to a unit-area
/// triangle; `finish` rescales them to the reference area.
#[derive(Default)]
struct RuleBuilder {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl RuleBuilder {
    fn centroid(&mut self, w: f64) {
        let third = 1.0 / 3.0;
        self.points.push([third, third, third]);
        self.weights.push(w);
    }

    /// The three permutations of `(a, a, 1 - 2a)`.
    fn orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    /// The six permutations of `(a, b, 1 - a - b)`.
    fn orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            self.points.push(p);
            self.weights.push(w);
        }
    }

    fn finish(self, exactness_degree: usize) -> QuadratureRule {
        let total: f64 = self.weights.iter().sum();
        QuadratureRule {
            points: self.points,
            weights: self.weights.into_iter().map(|w| 0.5 * w / total).collect(),
            exactness_degree,
        }
    }
}
