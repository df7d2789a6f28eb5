use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Operand layout for [`Scalar::gemm`]: a row-major buffer viewed with
/// arbitrary row and column strides, which makes transposition free.
#[derive(Clone, Copy, Debug)]
pub struct StridedRef<'a, S> {
    pub data: &'a [S],
    pub row_stride: usize,
    pub col_stride: usize,
}

/// Real scalar the whole engine is generic over.
///
/// `f64` is the working precision of the harness; `f32` is supported for
/// inference and experimentation. Implementors only have to provide the
/// float algebra; `gemm` has a portable fallback that f32/f64 override with a
/// blocked kernel.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// `c = alpha * a * b + beta * c` where `a` is `m x k`, `b` is `k x n`
    /// and `c` is a contiguous row-major `m x n` buffer.
    ///
    /// Callers guarantee that every strided index stays inside its slice.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: StridedRef<'_, Self>,
        b: StridedRef<'_, Self>,
        beta: Self,
        c: &mut [Self],
    ) {
        for i in 0..m {
            for j in 0..n {
                let mut acc = Self::zero();
                for p in 0..k {
                    acc = acc
                        + a.data[i * a.row_stride + p * a.col_stride]
                            * b.data[p * b.row_stride + j * b.col_stride];
                }
                let out = &mut c[i * n + j];
                *out = if beta == Self::zero() {
                    alpha * acc
                } else {
                    alpha * acc + beta * *out
                };
            }
        }
    }

    /// Lossless-enough conversion used by literals and configuration values.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

fn check_strided<S>(m: usize, k: usize, n: usize, a: &StridedRef<'_, S>, b: &StridedRef<'_, S>, c: &[S]) {
    let last = |rows: usize, cols: usize, r: &StridedRef<'_, S>| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * r.row_stride + (cols - 1) * r.col_stride + 1
        }
    };
    assert!(last(m, k, a) <= a.data.len(), "gemm: lhs out of bounds");
    assert!(last(k, n, b) <= b.data.len(), "gemm: rhs out of bounds");
    assert!(m * n <= c.len(), "gemm: output out of bounds");
}

macro_rules! blocked_gemm {
    ($ty:ty, $kernel:path) => {
        impl Scalar for $ty {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: StridedRef<'_, Self>,
                b: StridedRef<'_, Self>,
                beta: Self,
                c: &mut [Self],
            ) {
                check_strided(m, k, n, &a, &b, c);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: bounds of every operand were checked above and the
                // output does not alias the inputs (distinct borrows).
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.data.as_ptr(),
                        a.row_stride as isize,
                        a.col_stride as isize,
                        b.data.as_ptr(),
                        b.row_stride as isize,
                        b.col_stride as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

blocked_gemm!(f64, matrixmultiply::dgemm);
blocked_gemm!(f32, matrixmultiply::sgemm);
