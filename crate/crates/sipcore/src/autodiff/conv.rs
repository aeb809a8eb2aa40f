//! im2col-based 2D convolution kernels over `[B, C, H, W]` buffers.

use alloc::vec;

/// Geometry of one convolution, seen from the "input" side of a forward conv.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        assert!(
            height + 2 * pad >= kernel && width + 2 * pad >= kernel,
            "kernel {kernel} larger than padded input {height}x{width} (pad {pad})"
        );
        Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_height: (height + 2 * pad - kernel) / stride + 1,
            out_width: (width + 2 * pad - kernel) / stride + 1,
        }
    }

    #[inline]
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    #[inline]
    pub fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }
}

pub(crate) fn im2col(g: &ConvGeom, image: &[f64], cols: &mut [f64]) {
    let n_cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let dst = &mut cols[row * n_cols..(row + 1) * n_cols];
                for oh in 0..g.out_height {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oh * g.out_width..(oh + 1) * g.out_width];
                    if ih < 0 || ih >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.width..(ih as usize + 1) * g.width];
                    for (ow, v) in line.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        *v = if iw < 0 || iw >= g.width as isize {
                            0.0
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` into `image`.
pub(crate) fn col2im(g: &ConvGeom, cols: &[f64], image: &mut [f64]) {
    let n_cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = (c * g.kernel + ki) * g.kernel + kj;
                let src = &cols[row * n_cols..(row + 1) * n_cols];
                for oh in 0..g.out_height {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.width..(ih as usize + 1) * g.width];
                    for ow in 0..g.out_width {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.width as isize {
                            dst[iw as usize] += src[oh * g.out_width + ow];
                        }
                    }
                }
            }
        }
    }
}

/// `C = A B + beta C` with row-major storage; `ta`/`tb` read the stored
/// matrix transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold at least the addressed m*k, k*n and m*n elements
    // for the given strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
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

/// Forward conv of a batch: `x [B, Ci, H, W]`, `w [Co, Ci, k, k]`.
pub(crate) fn conv_forward(g: &ConvGeom, batch: usize, x: &[f64], w: &[f64], bias: &[f64], out_c: usize, y: &mut [f64]) {
    let in_len = g.channels * g.height * g.width;
    let out_len = out_c * g.col_cols();
    let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
    for b in 0..batch {
        im2col(g, &x[b * in_len..(b + 1) * in_len], &mut cols);
        let yb = &mut y[b * out_len..(b + 1) * out_len];
        for (co, chunk) in yb.chunks_mut(g.col_cols()).enumerate() {
            chunk.fill(bias[co]);
        }
        gemm(out_c, g.col_rows(), g.col_cols(), w, false, &cols, false, 1.0, yb);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    g: &ConvGeom,
    batch: usize,
    x: &[f64],
    w: &[f64],
    out_c: usize,
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let in_len = g.channels * g.height * g.width;
    let out_len = out_c * g.col_cols();
    let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
    if let Some(db) = db {
        for b in 0..batch {
            for (co, chunk) in dy[b * out_len..(b + 1) * out_len].chunks(g.col_cols()).enumerate() {
                db[co] += chunk.iter().sum::<f64>();
            }
        }
    }
    if let Some(dw) = dw {
        for b in 0..batch {
            im2col(g, &x[b * in_len..(b + 1) * in_len], &mut cols);
            gemm(out_c, g.col_cols(), g.col_rows(), &dy[b * out_len..(b + 1) * out_len], false, &cols, true, 1.0, dw);
        }
    }
    if let Some(dx) = dx {
        for b in 0..batch {
            gemm(g.col_rows(), out_c, g.col_cols(), w, true, &dy[b * out_len..(b + 1) * out_len], false, 0.0, &mut cols);
            col2im(g, &cols, &mut dx[b * in_len..(b + 1) * in_len]);
        }
    }
}

/// Transposed conv: `x [B, Ci, h, w]` lives on the output grid of `g`, the
/// result `[B, Co, H, W]` on its input grid; `w [Ci, Co, k, k]`.
pub(crate) fn conv_t_forward(g: &ConvGeom, batch: usize, in_c: usize, x: &[f64], w: &[f64], bias: &[f64], y: &mut [f64]) {
    let x_len = in_c * g.col_cols();
    let y_len = g.channels * g.height * g.width;
    let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
    for b in 0..batch {
        gemm(g.col_rows(), in_c, g.col_cols(), w, true, &x[b * x_len..(b + 1) * x_len], false, 0.0, &mut cols);
        let yb = &mut y[b * y_len..(b + 1) * y_len];
        for (co, chunk) in yb.chunks_mut(g.height * g.width).enumerate() {
            chunk.fill(bias[co]);
        }
        col2im(g, &cols, yb);
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_t_backward(
    g: &ConvGeom,
    batch: usize,
    in_c: usize,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let x_len = in_c * g.col_cols();
    let y_len = g.channels * g.height * g.width;
    if let Some(db) = db {
        for b in 0..batch {
            for (co, chunk) in dy[b * y_len..(b + 1) * y_len].chunks(g.height * g.width).enumerate() {
                db[co] += chunk.iter().sum::<f64>();
            }
        }
    }
    if dx.is_none() && dw.is_none() {
        return;
    }
    let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
    let mut dx = dx;
    let mut dw = dw;
    for b in 0..batch {
        im2col(g, &dy[b * y_len..(b + 1) * y_len], &mut cols);
        if let Some(dx) = dx.as_deref_mut() {
            gemm(in_c, g.col_rows(), g.col_cols(), w, false, &cols, false, 1.0, &mut dx[b * x_len..(b + 1) * x_len]);
        }
        if let Some(dw) = dw.as_deref_mut() {
            gemm(in_c, g.col_cols(), g.col_rows(), &x[b * x_len..(b + 1) * x_len], false, &cols, true, 1.0, dw);
        }
    }
}
