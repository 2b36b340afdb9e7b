//! Strided dense matrix product on borrowed slices.

/// Read-only strided matrix view over a slice.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> View<'a> {
    /// Column-major `rows × cols`.
    pub fn col_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        View { data, rows, cols, row_stride: 1, col_stride: rows }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn max_offset(&self) -> usize {
        (self.rows.saturating_sub(1)) * self.row_stride + (self.cols.saturating_sub(1)) * self.col_stride
    }
}

/// `c ← alpha·a·b + beta·c` where `c` is a row-major or column-major block
/// described by its strides.
pub(crate) fn gemm(
    alpha: f64,
    a: View<'_>,
    b: View<'_>,
    beta: f64,
    c: &mut [f64],
    c_row_stride: usize,
    c_col_stride: usize,
) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(b.rows, k, "inner dimensions differ");
    if m == 0 || n == 0 {
        return;
    }
    let c_max = (m - 1) * c_row_stride + (n - 1) * c_col_stride;
    assert!(c_max < c.len(), "output block exceeds its slice");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c[i * c_row_stride + j * c_col_stride];
                *v *= beta;
            }
        }
        return;
    }
    assert!(a.max_offset() < a.data.len() && b.max_offset() < b.data.len());
    // SAFETY: every index touched by dgemm is bounded by the asserted
    // maximal offsets of the three views.
    unsafe {
        matrixmultiply::dgemm(
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
            c_row_stride as isize,
            c_col_stride as isize,
        );
    }
}
