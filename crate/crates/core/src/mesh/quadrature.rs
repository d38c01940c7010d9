use crate::error::{Error, Result};
use crate::scalar::Real;

/// Barycentric points with weights summing to one (multiply by the element measure).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule<T> {
    pub points: Vec<Vec<T>>,
    pub weights: Vec<T>,
}

/// Degree-1 (barycenter) or degree-2 symmetric rule on the reference `n`-simplex.
pub fn quadrature<T: Real>(order: usize, dim: usize) -> Result<QuadratureRule<T>> {
    match (order, dim) {
        (1, n) if n >= 1 => {
            let c = T::one() / T::from_usize_lossy(n + 1);
            Ok(QuadratureRule {
                points: vec![vec![c; n + 1]],
                weights: vec![T::one()],
            })
        }
        (2, 2) => {
            let h = T::lit(0.5);
            let z = T::zero();
            let w = T::one() / T::lit(3.0);
            Ok(QuadratureRule {
                points: vec![vec![h, h, z], vec![z, h, h], vec![h, z, h]],
                weights: vec![w; 3],
            })
        }
        (2, 3) => {
            let a = T::lit((5.0 - 5f64.sqrt()) / 20.0);
            let b = T::one() - T::lit(3.0) * a;
            let points = (0..4)
                .map(|k| (0..4).map(|j| if j == k { b } else { a }).collect())
                .collect();
            Ok(QuadratureRule {
                points,
                weights: vec![T::lit(0.25); 4],
            })
        }
        _ => Err(Error::Unsupported(format!(
            "no quadrature rule of order {order} on the {dim}-simplex"
        ))),
    }
}
