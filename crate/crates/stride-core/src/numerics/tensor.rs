//! Dense row-major tensors over `f32` (model math) or `f64` (statistics and
//! gradient checks), plus the portable scalar trait they share.

use std::fmt;

use thiserror::Error;

/// Shape or data-length violations raised by tensor kernels.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("data length {got} does not match shape {shape:?} (expected {expected})")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("shape extents must be >= 1, got {shape:?}")]
    ZeroExtent { shape: Vec<usize> },
    #[error("{op}: expected shape {expected:?}, got {got:?}")]
    Mismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

/// Floating-point element type for tensors.
///
/// `exp` and `tanh` route through a hand-rolled f64 kernel so canonical model
/// math does not depend on the platform libm.
pub trait Real:
    Copy
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    fn tanh_portable(self) -> Self {
        Self::from_f64(tanh_portable_f64(self.to_f64()))
    }
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

// Cody-Waite split of ln(2) for the range reduction in `exp_portable_f64`.
const LN2_HI: f64 = 6.931_471_803_691_238_16e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_70e-10;
const LOG2_E: f64 = 1.442_695_040_888_963_4;

/// exp(x) from range reduction plus a degree-15 Taylor kernel.
///
/// Accuracy is a few ulps, which is enough for model math; the point is that
/// the result is identical on every platform.
pub fn exp_portable_f64(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    if x > 709.8 {
        return f64::INFINITY;
    }
    if x < -745.0 {
        return 0.0;
    }
    let k = (x * LOG2_E).round();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Horner evaluation of sum r^n / n! for n = 0..=15; |r| <= ln(2)/2.
    let mut p = 1.0 / 1_307_674_368_000.0; // 1/15!
    const INV_FACT: [f64; 15] = [
        1.0 / 87_178_291_200.0, // 1/14!
        1.0 / 6_227_020_800.0,
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];
    for inv in INV_FACT {
        p = p * r + inv;
    }
    // Scale by 2^k through the exponent bits.
    let ik = k as i64;
    if ik >= -1022 {
        let bits = ((ik + 1023) as u64) << 52;
        p * f64::from_bits(bits)
    } else {
        // Subnormal range: split the scaling to stay in range.
        let bits = ((ik + 1023 + 64) as u64) << 52;
        p * f64::from_bits(bits) * f64::from_bits((1023u64 - 64) << 52)
    }
}

/// tanh(x) derived from the portable exp; smooth everywhere, so central
/// finite differences of the tape match its analytic adjoint.
pub fn tanh_portable_f64(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax > 20.0 {
        return if x > 0.0 { 1.0 } else { -1.0 };
    }
    let e = exp_portable_f64(2.0 * ax);
    let t = 1.0 - 2.0 / (e + 1.0);
    if x >= 0.0 {
        t
    } else {
        -t
    }
}

/// Dense n-dimensional array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R: Real> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![R::ZERO; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<R>) -> Result<Self, ShapeError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(ShapeError::ZeroExtent {
                shape: shape.to_vec(),
            });
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(ShapeError::DataLength {
                shape: shape.to_vec(),
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn filled(shape: &[usize], value: R) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, value: R) {
        for x in &mut self.data {
            *x = value;
        }
    }

    /// Convert element type (used to lift f32 weights into f64 checks).
    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| T::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn expect_shape(&self, op: &'static str, shape: &[usize]) -> Result<(), ShapeError> {
        if self.shape != shape {
            return Err(ShapeError::Mismatch {
                op,
                expected: shape.to_vec(),
                got: self.shape.clone(),
            });
        }
        Ok(())
    }
}
