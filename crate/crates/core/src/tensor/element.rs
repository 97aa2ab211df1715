use std::cell::Cell;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

thread_local! {
    static MAC_COUNTER: Cell<u64> = const { Cell::new(0) };
}

/// Number of multiply-accumulates issued through [`Element::gemm`] on this
/// thread since the last [`reset_mac_counter`].
pub fn mac_count() -> u64 {
    MAC_COUNTER.with(|c| c.get())
}

pub fn reset_mac_counter() {
    MAC_COUNTER.with(|c| c.set(0));
}

/// A strided read-only matrix view into a flat buffer.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a, T> MatRef<'a, T> {
    /// Row-major contiguous `rows x cols` matrix starting at `offset`.
    pub fn dense(data: &'a [T], offset: usize, rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset,
            rows,
            cols,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }

    fn check_bounds(&self) {
        if self.rows == 0 || self.cols == 0 {
            return;
        }
        let last = self.offset as isize
            + (self.rows as isize - 1) * self.row_stride
            + (self.cols as isize - 1) * self.col_stride;
        assert!(
            last >= 0 && (last as usize) < self.data.len(),
            "matrix view out of bounds"
        );
    }
}

/// Floating point scalar usable as tensor storage.
pub trait Element:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    /// Raw GEMM kernel: `c = alpha * a * b + beta * c`.
    ///
    /// # Safety
    /// All pointers must be valid for the given dimensions and strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
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

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    /// `c[c_offset..] = alpha * a * b + beta * c` where `c` is row-major with
    /// row stride `c_row_stride`.
    fn gemm(
        alpha: Self,
        a: MatRef<'_, Self>,
        b: MatRef<'_, Self>,
        beta: Self,
        c: &mut [Self],
        c_offset: usize,
        c_row_stride: usize,
    ) {
        assert_eq!(a.cols, b.rows, "gemm inner dimension");
        let (m, k, n) = (a.rows, a.cols, b.cols);
        if m == 0 || n == 0 {
            return;
        }
        assert!(c_offset + (m - 1) * c_row_stride + n <= c.len(), "gemm output out of bounds");
        if k == 0 {
            for i in 0..m {
                for v in &mut c[c_offset + i * c_row_stride..c_offset + i * c_row_stride + n] {
                    *v = if beta == Self::zero() { Self::zero() } else { *v * beta };
                }
            }
            return;
        }
        a.check_bounds();
        b.check_bounds();
        MAC_COUNTER.with(|cnt| cnt.set(cnt.get() + (m * k * n) as u64));
        if m == 1 {
            // vector-matrix products skip the packing done by the blocked kernel
            gemv(alpha, a, b, beta, &mut c[c_offset..c_offset + n]);
            return;
        }
        // SAFETY: bounds of every view were checked above.
        unsafe {
            Self::raw_gemm(
                m,
                k,
                n,
                alpha,
                a.data.as_ptr().add(a.offset),
                a.row_stride,
                a.col_stride,
                b.data.as_ptr().add(b.offset),
                b.row_stride,
                b.col_stride,
                beta,
                c.as_mut_ptr().add(c_offset),
                c_row_stride as isize,
                1,
            );
        }
    }
}

/// `c = alpha * a * b + beta * c` for a single-row `a`.
fn gemv<T: Element>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: &mut [T]) {
    let a_row: Vec<T> = (0..a.cols)
        .map(|kk| a.data[(a.offset as isize + kk as isize * a.col_stride) as usize])
        .collect();
    let at_b = |kk: usize, j: usize| (b.offset as isize + kk as isize * b.row_stride + j as isize * b.col_stride) as usize;
    if b.row_stride == 1 && b.col_stride != 1 {
        // columns of b are contiguous: one dot product per output
        for (j, out) in c.iter_mut().enumerate() {
            let start = at_b(0, j);
            let d = dot(&a_row, &b.data[start..start + b.rows]);
            *out = if beta == T::zero() { alpha * d } else { beta * *out + alpha * d };
        }
        return;
    }
    if beta == T::zero() {
        c.fill(T::zero());
    } else if beta != T::one() {
        c.iter_mut().for_each(|v| *v *= beta);
    }
    for (kk, &av) in a_row.iter().enumerate() {
        let s = alpha * av;
        if b.col_stride == 1 {
            let start = at_b(kk, 0);
            c.iter_mut().zip(&b.data[start..start + b.cols]).for_each(|(o, &v)| *o += s * v);
        } else {
            for (j, o) in c.iter_mut().enumerate() {
                *o += s * b.data[at_b(kk, j)];
            }
        }
    }
}

/// Dot product with eight independent accumulators so it vectorizes.
fn dot<T: Element>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let tail: T = xc.remainder().iter().zip(yc.remainder()).map(|(&a, &b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

impl Element for f32 {
    const NAME: &'static str = "f32";

    unsafe fn raw_gemm(
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

impl Element for f64 {
    const NAME: &'static str = "f64";

    unsafe fn raw_gemm(
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
