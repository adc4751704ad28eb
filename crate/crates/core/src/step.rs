//! Piecewise-constant functions on a partition of a subinterval of `(0, 1]`,
//! extended by zero outside it.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mesh::Mesh;
use crate::sum;

#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    mesh: Mesh,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(mesh: Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::Parameter(format!(
                "{} values for {} pieces",
                values.len(),
                mesh.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("step function values must be finite".into()));
        }
        Ok(Self { mesh, values })
    }

    pub fn zero(mesh: Mesh) -> Self {
        let values = vec![0.0; mesh.len()];
        Self { mesh, values }
    }

    pub fn constant(mesh: Mesh, c: f64) -> Self {
        let values = vec![c; mesh.len()];
        Self { mesh, values }
    }

    /// Cell averages of `1_A`; exact for `A` aligned with the mesh.
    pub fn indicator(mesh: Mesh, a: &Interval) -> Self {
        let mut values = vec![0.0; mesh.len()];
        for (i, o) in mesh.overlaps(a.lo(), a.hi()) {
            values[i] = o / mesh.width(i);
        }
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.mesh.locate(x).map_or(0.0, |i| self.values[i])
    }

    pub fn integral(&self) -> f64 {
        sum::sum(
            self.values
                .iter()
                .enumerate()
                .map(|(i, v)| v * self.mesh.width(i)),
        )
    }

    pub fn l1_norm(&self) -> f64 {
        sum::sum(
            self.values
                .iter()
                .enumerate()
                .map(|(i, v)| v.abs() * self.mesh.width(i)),
        )
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Total variation on the real line.
    ///
    /// The supremum over partitions is attained on the breakpoints, so it is
    /// the entry jump from 0, the interior jumps and the exit jump back to 0.
    pub fn var_norm(&self) -> f64 {
        let (Some(first), Some(last)) = (self.values.first(), self.values.last()) else {
            return 0.0;
        };
        let jumps = sum::sum(self.values.windows(2).map(|w| (w[1] - w[0]).abs()));
        first.abs() + jumps + last.abs()
    }

    /// Cell averages on another mesh (L1-orthogonal projection onto step
    /// functions on `target`).
    pub fn project(&self, target: &Mesh) -> StepFunction {
        let values = (0..target.len())
            .map(|k| {
                let (lo, hi) = (target.lo(k), target.hi(k));
                let s = sum::sum(self.mesh.overlaps(lo, hi).map(|(i, o)| self.values[i] * o));
                s / target.width(k)
            })
            .collect();
        StepFunction {
            mesh: target.clone(),
            values,
        }
    }

    pub fn scale(&self, c: f64) -> StepFunction {
        StepFunction {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    fn zip_with(&self, other: &StepFunction, f: impl Fn(f64, f64) -> f64) -> StepFunction {
        assert_eq!(self.mesh, other.mesh, "step functions live on different meshes");
        StepFunction {
            mesh: self.mesh.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// L1 distance on a shared mesh.
    pub fn l1_distance(&self, other: &StepFunction) -> f64 {
        (self - other).l1_norm()
    }
}

impl Add for &StepFunction {
    type Output = StepFunction;
    fn add(self, rhs: &StepFunction) -> StepFunction {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &StepFunction {
    type Output = StepFunction;
    fn sub(self, rhs: &StepFunction) -> StepFunction {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &StepFunction {
    type Output = StepFunction;
    fn mul(self, rhs: &StepFunction) -> StepFunction {
        self.zip_with(rhs, |a, b| a * b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn y_mesh(n: usize) -> Mesh {
        Mesh::uniform(0.5, 1.0, n).unwrap()
    }

    #[test]
    fn variation_examples() {
        let m = y_mesh(8);
        let ind = StepFunction::indicator(m.clone(), &Interval::new(0.625, 0.875).unwrap());
        assert_eq!(ind.var_norm(), 2.0);
        assert_eq!(StepFunction::zero(m.clone()).var_norm(), 0.0);
        let two = StepFunction::new(y_mesh(2), vec![1.0, 3.0]).unwrap();
        assert_eq!(two.var_norm(), 6.0);
        // An unaligned indicator still has variation 2.
        let ind = StepFunction::indicator(m, &Interval::new(0.6, 0.81).unwrap());
        assert!((ind.var_norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constructor_checks() {
        assert!(StepFunction::new(y_mesh(2), vec![1.0]).is_err());
        assert!(StepFunction::new(y_mesh(1), vec![f64::NAN]).is_err());
    }

    #[test]
    fn projection_preserves_integral() {
        let f = StepFunction::new(y_mesh(3), vec![1.0, -2.0, 5.0]).unwrap();
        let g = f.project(&y_mesh(7));
        assert!((f.integral() - g.integral()).abs() < 1e-14);
        let back = f.project(&y_mesh(6)).project(&y_mesh(3));
        assert!(back.l1_distance(&f) < 1e-14);
    }

    fn arb_step() -> impl Strategy<Value = StepFunction> {
        prop::collection::vec(-10.0f64..10.0, 1..40)
            .prop_map(|v| StepFunction::new(y_mesh(v.len()), v).unwrap())
    }

    proptest! {
        #[test]
        fn sup_bounded_by_half_variation(f in arb_step()) {
            prop_assert!(f.sup_norm() <= f.var_norm() / 2.0 + 1e-12);
        }

        #[test]
        fn variation_is_subadditive(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30)) {
            let m = y_mesh(v.len());
            let f = StepFunction::new(m.clone(), v.iter().map(|p| p.0).collect()).unwrap();
            let g = StepFunction::new(m, v.iter().map(|p| p.1).collect()).unwrap();
            prop_assert!((&f + &g).var_norm() <= f.var_norm() + g.var_norm() + 1e-12);
        }
    }
}
