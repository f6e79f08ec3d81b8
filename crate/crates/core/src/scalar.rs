//! Scalar abstraction: all real-valued math in this crate is generic over
//! [`Real`], instantiated as `f32` or `f64`.

use std::fmt::{Display, LowerExp};
use std::iter::Sum;

use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar type usable for every computation in this crate.
pub trait Real:
    nalgebra::RealField
    + FromPrimitive
    + ToPrimitive
    + Copy
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Display
    + LowerExp
{
    /// `true` unless the value is NaN or infinite.
    fn is_finite_real(self) -> bool;
}

impl Real for f32 {
    fn is_finite_real(self) -> bool {
        self.is_finite()
    }
}

impl Real for f64 {
    fn is_finite_real(self) -> bool {
        self.is_finite()
    }
}

/// Shorthand conversion from an `f64` literal into any [`Real`] type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Lossy conversion back to `f64`, for diagnostics and error payloads.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Cholesky, Complex, DMatrix, SymmetricEigen};

    #[test]
    fn generic_math_compiles_for_both_scalars() {
        fn probe<T: Real>() -> T {
            let x: T = real(2.0);
            x.sqrt() + x.ln().abs()
        }
        assert!((probe::<f64>() - (2.0f64.sqrt() + 2.0f64.ln())).abs() < 1e-12);
        assert!((probe::<f32>() - (2.0f32.sqrt() + 2.0f32.ln())).abs() < 1e-6);
    }

    #[test]
    fn complex_hermitian_eigen_and_cholesky() {
        let m = DMatrix::<Complex<f64>>::from_row_slice(
            2,
            2,
            &[
                Complex::new(2.0, 0.0),
                Complex::new(0.0, 1.0),
                Complex::new(0.0, -1.0),
                Complex::new(2.0, 0.0),
            ],
        );
        let eig = SymmetricEigen::new(m.clone());
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);

        let chol = Cholesky::new(m).expect("HPD");
        let ld = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|c| c.re.ln())
                .sum::<f64>();
        assert!((ld - 3.0f64.ln()).abs() < 1e-12);
    }
}
