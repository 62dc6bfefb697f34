//! Dense row-major tensors over `f32` or `f64`.
//!
//! Only scalar-tensor broadcasting is supported. 4-D feature volumes use the
//! `[N, C, H, W]` layout throughout the crate.

use std::fmt;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point element type. Implemented for `f32` (training) and `f64`
/// (gradient checking and deterministic reference runs).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    const NAME: &'static str;

    fn of(v: f64) -> Self;

    fn f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` on strided row/column layouts.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping `m×k`, `k×n`
    /// and `m×n` matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row-major matrix product helpers. Each matrix is a contiguous slice with
/// the stated logical shape; `trans_*` reads the operand transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<T: Real>(
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    c: &mut [T],
    m: usize,
    k: usize,
    n: usize,
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "lhs size");
    assert_eq!(b.len(), k * n, "rhs size");
    assert_eq!(c.len(), m * n, "out size");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: sizes asserted above; `c` is a unique borrow so it cannot alias a or b.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
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

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::Shape {
                dims,
                reason: "rank must be at least 1".into(),
            });
        }
        if dims.contains(&0) {
            return Err(Error::Shape {
                dims,
                reason: "every extent must be >= 1".into(),
            });
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    /// Row-major offset of a multi-index, or `None` when out of bounds.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.0.len() {
            return None;
        }
        let mut off = 0;
        for (&i, &d) in index.iter().zip(&self.0) {
            if i >= d {
                return None;
            }
            off = off * d + i;
        }
        Some(off)
    }

    /// Inverse of [`Shape::offset`].
    pub fn unravel(&self, mut offset: usize) -> Option<Vec<usize>> {
        if offset >= self.numel() {
            return None;
        }
        let mut index = vec![0; self.0.len()];
        for (slot, &d) in index.iter_mut().zip(&self.0).rev() {
            *slot = offset % d;
            offset /= d;
        }
        Some(index)
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Real> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Ok(Tensor { shape, data })
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::Shape {
                dims: dims.to_vec(),
                reason: format!("expected {} elements, got {}", shape.numel(), data.len()),
            });
        }
        let t = Tensor { shape, data };
        t.debug_check_finite();
        Ok(t)
    }

    /// Builds a tensor whose shape is already known to be valid.
    pub(crate) fn from_parts(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        let t = Tensor { shape, data };
        t.debug_check_finite();
        t
    }

    pub fn from_f64(dims: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(dims, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// Always false: a tensor holds at least one element.
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

    pub fn get(&self, index: &[usize]) -> Option<T> {
        self.shape.offset(index).map(|o| self.data[o])
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::Shape {
                dims: dims.to_vec(),
                reason: format!("cannot reshape {:?} into it", self.shape),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        for x in &mut self.data {
            *x = f(*x);
        }
    }

    /// Element-wise combination of two same-shaped tensors.
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Tensor::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// Sum of the elements selected by `mask` (all elements when `None`),
    /// accumulated in 64-bit with pairwise summation.
    pub fn reduce_sum(&self, mask: Option<&dyn Fn(T) -> bool>) -> f64 {
        match mask {
            None => pairwise_sum(&self.data, &|x: T| x.f64()),
            Some(m) => pairwise_sum(&self.data, &|x: T| if m(x) { x.f64() } else { 0.0 }),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.f64().abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&x| U::of(x.f64())).collect(),
        )
    }

    pub fn expect_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::contract(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    #[inline]
    fn debug_check_finite(&self) {
        #[cfg(feature = "finite-checks")]
        assert!(
            self.is_finite(),
            "non-finite value in tensor of shape {:?}",
            self.shape
        );
    }
}

fn pairwise_sum<T: Copy>(xs: &[T], f: &dyn Fn(T) -> f64) -> f64 {
    const LEAF: usize = 128;
    if xs.len() <= LEAF {
        return xs.iter().map(|&x| f(x)).sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid], f) + pairwise_sum(&xs[mid..], f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_has_requested_shape() {
        let t = Tensor::<f32>::zeros(&[2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        assert_eq!(Tensor::<f64>::zeros(&[1]).unwrap().data(), &[0.0]);
    }

    #[test]
    fn zero_extent_is_rejected() {
        assert!(matches!(
            Tensor::<f32>::zeros(&[0]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            Tensor::<f32>::zeros(&[3, 0, 2]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            Tensor::<f32>::from_vec(&[], vec![]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(&[2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn map_examples() {
        let t = Tensor::<f64>::from_f64(&[2], &[-1.0, 2.0]).unwrap();
        assert_eq!(t.map(|x| -x).data(), &[1.0, -2.0]);
        let t = Tensor::<f64>::from_f64(&[1], &[3.0]).unwrap();
        assert_eq!(t.map(|x| x).data(), &[3.0]);
        let t = Tensor::<f64>::from_f64(&[2], &[0.5, -0.5]).unwrap();
        assert_eq!(t.map(|x| x * 2.0).data(), &[1.0, -1.0]);
    }

    #[test]
    fn reduce_sum_examples() {
        let t = Tensor::<f64>::from_f64(&[3], &[-2.0, -3.0, 1.0]).unwrap();
        assert_eq!(t.reduce_sum(Some(&|x| x < 0.0)), -5.0);
        let t = Tensor::<f32>::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.reduce_sum(None), 6.0);
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::<f32>::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4]).is_err());
    }

    #[test]
    fn matmul_matches_naive() {
        let a: Vec<f64> = (0..6).map(|v| v as f64).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| v as f64 * 0.5).collect(); // 3x4
        let mut c = vec![0.0; 8];
        matmul(&a, false, &b, false, &mut c, 2, 3, 4, false);
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], want);
            }
        }
        // aᵀ stored as 3x2, bᵀ stored as 4x3
        let at: Vec<f64> = (0..6).map(|idx| a[(idx % 2) * 3 + idx / 2]).collect();
        let bt: Vec<f64> = (0..12).map(|idx| b[(idx % 3) * 4 + idx / 3]).collect();
        let mut c2 = vec![0.0; 8];
        matmul(&at, true, &bt, true, &mut c2, 2, 3, 4, false);
        assert_eq!(c, c2);
    }

    fn kahan(xs: &[f64]) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for &x in xs {
            let y = x - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    #[test]
    fn reduce_sum_agrees_with_kahan_on_a_million_values() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| rng.random_range(-1e3..1e3))
            .collect();
        let t = Tensor::<f64>::from_vec(&[xs.len()], xs.clone()).unwrap();
        let want = kahan(&xs);
        let got = t.reduce_sum(None);
        assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
    }

    proptest! {
        #[test]
        fn map_identity_is_identity(xs in prop::collection::vec(-1e6f64..1e6, 1..200)) {
            let t = Tensor::<f64>::from_vec(&[xs.len()], xs).unwrap();
            prop_assert_eq!(t.map(|x| x), t);
        }

        #[test]
        fn offset_unravel_round_trip(dims in prop::collection::vec(1usize..6, 1..=4)) {
            let shape = Shape::new(dims).unwrap();
            for off in 0..shape.numel() {
                let idx = shape.unravel(off).unwrap();
                prop_assert_eq!(shape.offset(&idx), Some(off));
            }
            prop_assert!(shape.unravel(shape.numel()).is_none());
        }

        #[test]
        fn reduce_sum_matches_kahan(xs in prop::collection::vec(-1e3f64..1e3, 1..5000)) {
            let want = kahan(&xs);
            let got = Tensor::<f64>::from_vec(&[xs.len()], xs).unwrap().reduce_sum(None);
            prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-300) + 1e-9);
        }
    }
}
