use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub};

use crate::error::{Error, Result};

/// Storage type for activations and parameters.
///
/// Training runs on `f32`; gradient verification runs the same code on `f64`.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;

            #[inline(always)]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline(always)]
            fn to_f64(self) -> f64 {
                self as f64
            }

            #[inline(always)]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// A `(channels, length)` feature map stored row-major, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2<T> {
    channels: usize,
    length: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor2<T> {
    pub fn zeros(channels: usize, length: usize) -> Self {
        Tensor2 {
            channels,
            length,
            data: vec![T::ZERO; channels * length],
        }
    }

    pub fn from_vec(channels: usize, length: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * length {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {channels}x{length} tensor",
                data.len()
            )));
        }
        Ok(Tensor2 { channels, length, data })
    }

    /// Builds a tensor from equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let length = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * length);
        for (c, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != length {
                return Err(Error::Shape(format!(
                    "row {c} has length {} (expected {length})",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor2 {
            channels: rows.len(),
            length,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[T] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.length..(c + 1) * self.length]
    }

    pub fn get(&self, c: usize, i: usize) -> T {
        self.data[c * self.length + i]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.channels).map(|c| self.row(c).to_vec()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor2<U> {
        Tensor2 {
            channels: self.channels,
            length: self.length,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
