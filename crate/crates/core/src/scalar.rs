//! Scalar abstraction for the tensor-network core.
//!
//! Every state and gate container is generic over a complex field element
//! backed by LAPACK: `Complex<f64>` for production runs and `Complex<f32>`
//! when memory matters more than accuracy. Model construction and the dense
//! oracle always work in double precision and cast on the way in.

use ndarray::Array2;
use ndarray_linalg::{Lapack, Scalar};
use num_complex::Complex64;
use num_traits::{Float, ToPrimitive};

/// Complex LAPACK scalar (`c32` or `c64`).
pub trait ComplexScalar: Scalar<Complex = Self, Real: Send + Sync> + Lapack + Send + Sync {}

impl<T> ComplexScalar for T where T: Scalar<Complex = T, Real: Send + Sync> + Lapack + Send + Sync {}

/// Real part type of a [`ComplexScalar`].
pub type RealOf<C> = <C as Scalar>::Real;

pub fn from_c64<C: ComplexScalar>(z: Complex64) -> C {
    C::complex(z.re, z.im)
}

pub fn to_c64<C: ComplexScalar>(z: C) -> Complex64 {
    let re = z.re().to_f64().unwrap_or(f64::NAN);
    let im = z.im().to_f64().unwrap_or(f64::NAN);
    Complex64::new(re, im)
}

pub fn real<C: ComplexScalar>(x: f64) -> RealOf<C> {
    C::real(x)
}

pub fn real_to_f64<R: Float>(x: R) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn cast_matrix<C: ComplexScalar>(m: &Array2<Complex64>) -> Array2<C> {
    m.mapv(from_c64::<C>)
}

/// Machine epsilon of the real part type, as `f64`.
pub fn epsilon<C: ComplexScalar>() -> f64 {
    real_to_f64(<RealOf<C> as Float>::epsilon())
}
