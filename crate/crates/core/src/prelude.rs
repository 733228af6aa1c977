// Float methods resolve to libm in no_std builds and to std inherently otherwise.
#[allow(unused_imports)]
pub(crate) use num_traits::Float;

pub(crate) use alloc::format;
pub(crate) use alloc::string::String;
pub(crate) use alloc::vec;
pub(crate) use alloc::vec::Vec;

pub(crate) use num_complex::Complex64;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);
pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
