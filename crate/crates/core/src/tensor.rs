//! Dense row-major `f32` tensors.
//!
//! Tensors carry a shape (every extent at least one) and a flat buffer whose
//! length is the product of the extents. Only the operations needed by the
//! layers, the clustering code and the surgery routines are provided; there is
//! no broadcasting.

use std::fmt;
use std::ops::Range;

use crate::error::{arg_err, dim_err, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= PREVIEW {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..PREVIEW])
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return dim_err("tensor shape must have at least one extent");
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return dim_err(format!("extent {pos} of shape {shape:?} is zero"));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let numel = check_shape(shape)?;
        if numel != data.len() {
            return dim_err(format!(
                "shape {shape:?} needs {numel} elements, buffer has {}",
                data.len()
            ));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Self> {
        let numel = check_shape(shape)?;
        Ok(Self { shape: shape.to_vec(), data: vec![value; numel] })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Result<Self> {
        let numel = check_shape(shape)?;
        Ok(Self { shape: shape.to_vec(), data: (0..numel).map(&mut f).collect() })
    }

    /// Builds a rank-2 tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return dim_err("rows have unequal lengths");
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self { shape: other.shape.clone(), data: vec![0.0; other.data.len()] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Row-major strides, innermost stride 1.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.shape.len()];
        for d in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.shape[d + 1];
        }
        strides
    }

    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return dim_err(format!("index {index:?} has wrong rank for shape {:?}", self.shape));
        }
        let mut off = 0;
        for (d, (&i, &e)) in index.iter().zip(&self.shape).enumerate() {
            if i >= e {
                return dim_err(format!("index {i} out of bounds for axis {d} of extent {e}"));
            }
            off = off * e + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<f32> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f32) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(mut self, shape: &[usize]) -> Result<Tensor> {
        let numel = check_shape(shape)?;
        if numel != self.data.len() {
            return dim_err(format!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return dim_err(format!("shapes {:?} and {:?} differ", self.shape, other.shape));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        self.map(|v| v * factor)
    }

    /// Sum of all elements, accumulated in `f64`.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.shape != other.shape {
            return dim_err(format!("shapes {:?} and {:?} differ", self.shape, other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || rhs.rank() != 2 || self.shape[1] != rhs.shape[0] {
            return dim_err(format!(
                "matmul needs [m x k] x [k x n], got {:?} x {:?}",
                self.shape, rhs.shape
            ));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], rhs.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, Layout::Normal, &rhs.data, Layout::Normal, &mut out, false);
        Tensor::new(&[m, n], out)
    }

    /// Extracts `range` along `axis`.
    pub fn slice_axis(&self, axis: usize, range: Range<usize>) -> Result<Tensor> {
        if axis >= self.rank() {
            return dim_err(format!("axis {axis} out of range for shape {:?}", self.shape));
        }
        if range.start >= range.end || range.end > self.shape[axis] {
            return dim_err(format!(
                "slice {range:?} invalid for axis {axis} of extent {}",
                self.shape[axis]
            ));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let extent = self.shape[axis];
        let mut data = Vec::with_capacity(outer * range.len() * inner);
        for o in 0..outer {
            let base = o * extent * inner;
            data.extend_from_slice(&self.data[base + range.start * inner..base + range.end * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = range.len();
        Tensor::new(&shape, data)
    }

    /// Alias of [`Tensor::slice_axis`] on axis 1, the channel axis of `[B x C x H x W]`.
    pub fn slice_channels(&self, range: Range<usize>) -> Result<Tensor> {
        self.slice_axis(1, range)
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(tensors: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = match tensors.first() {
            Some(t) => *t,
            None => return arg_err("concat of zero tensors"),
        };
        if axis >= first.rank() {
            return dim_err(format!("axis {axis} out of range for shape {:?}", first.shape));
        }
        for t in &tensors[1..] {
            let compatible = t.rank() == first.rank()
                && t.shape.iter().zip(&first.shape).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return dim_err(format!(
                    "cannot concat {:?} with {:?} along axis {axis}",
                    first.shape, t.shape
                ));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let total: usize = tensors.iter().map(|t| t.shape[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for t in tensors {
                let block = t.shape[axis] * inner;
                data.extend_from_slice(&t.data[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Tensor::new(&shape, data)
    }
}

/// How a row-major operand buffer is read by [`gemm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Layout {
    Normal,
    Transposed,
}

/// `c = a * b` (or `c += a * b` when `accumulate`), with `c` row-major `[m x n]`.
///
/// `a` is `[m x k]` as stored, or a stored `[k x m]` read transposed; same for `b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_layout: Layout,
    b: &[f32],
    b_layout: Layout,
    c: &mut [f32],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = match a_layout {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match b_layout {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
