//! Dense CPU kernels: GEMM wrapper, im2col convolution, pooling and
//! resampling, each with its adjoint.

/// Row-major `c = op(a) · op(b) + beta · c` where `op(a)` is `m × k` and
/// `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
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
    // SAFETY: bounds checked above; strides describe the row-major layouts.
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

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_height() * self.out_width()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            line[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward convolution of a batch. `x` is `n × C × H × W`, `w` is
/// `O × C × k × k`; returns `n × O × H' × W'`.
pub(crate) fn conv2d_forward(
    x: &[f64],
    n: usize,
    g: &ConvGeom,
    w: &[f64],
    out_channels: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let in_len = g.channels * g.height * g.width;
    let p = g.col_cols();
    let rows = g.col_rows();
    let mut out = vec![0.0; n * out_channels * p];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; rows * p]
    };
    for s in 0..n {
        let xs = &x[s * in_len..(s + 1) * in_len];
        let b_mat: &[f64] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, g, &mut cols);
            &cols
        };
        let os = &mut out[s * out_channels * p..(s + 1) * out_channels * p];
        gemm(out_channels, rows, p, w, false, b_mat, false, 0.0, os);
        if let Some(b) = bias {
            for (o, chunk) in os.chunks_mut(p).enumerate() {
                let bo = b[o];
                chunk.iter_mut().for_each(|v| *v += bo);
            }
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub input: Option<Vec<f64>>,
    pub weight: Option<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

/// Adjoint of [`conv2d_forward`] for upstream gradient `dy`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    x: &[f64],
    n: usize,
    g: &ConvGeom,
    w: &[f64],
    out_channels: usize,
    dy: &[f64],
    want_input: bool,
    want_weight: bool,
    want_bias: bool,
) -> ConvGrads {
    let in_len = g.channels * g.height * g.width;
    let p = g.col_cols();
    let rows = g.col_rows();
    let mut dx = want_input.then(|| vec![0.0; n * in_len]);
    let mut dw = want_weight.then(|| vec![0.0; out_channels * rows]);
    let mut db = want_bias.then(|| vec![0.0; out_channels]);
    let mut cols = vec![0.0; rows * p];
    let mut dcols = vec![0.0; rows * p];
    for s in 0..n {
        let dys = &dy[s * out_channels * p..(s + 1) * out_channels * p];
        if let Some(db) = db.as_mut() {
            for (o, chunk) in dys.chunks(p).enumerate() {
                db[o] += chunk.iter().sum::<f64>();
            }
        }
        let xs = &x[s * in_len..(s + 1) * in_len];
        if let Some(dw) = dw.as_mut() {
            let b_mat: &[f64] = if g.is_pointwise() {
                xs
            } else {
                im2col(xs, g, &mut cols);
                &cols
            };
            gemm(out_channels, p, rows, dys, false, b_mat, true, 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[s * in_len..(s + 1) * in_len];
            if g.is_pointwise() {
                gemm(rows, out_channels, p, w, true, dys, false, 0.0, dxs);
            } else {
                gemm(rows, out_channels, p, w, true, dys, false, 0.0, &mut dcols);
                col2im(&dcols, g, dxs);
            }
        }
    }
    ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    }
}

/// 2×2 max pooling with stride 2; ties resolve to the first element in
/// row-major window order.
pub(crate) fn max_pool2(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let i = 2 * oy * w + 2 * ox;
                dst[oy * ow + ox] = src[i].max(src[i + 1]).max(src[i + w]).max(src[i + w + 1]);
            }
        }
    }
    out
}

pub(crate) fn max_pool2_backward(
    x: &[f64],
    dy: &[f64],
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dsrc = &mut dx[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let i = 2 * oy * w + 2 * ox;
                let mut best = i;
                for j in [i + 1, i + w, i + w + 1] {
                    if src[j] > src[best] {
                        best = j;
                    }
                }
                dsrc[best] += dy[p * oh * ow + oy * ow + ox];
            }
        }
    }
    dx
}

pub(crate) fn upsample_nearest2(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            let line = &src[(oy / 2) * w..(oy / 2 + 1) * w];
            for (ox, v) in dst[oy * ow..(oy + 1) * ow].iter_mut().enumerate() {
                *v = line[ox / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample_nearest2_backward(
    dy: &[f64],
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &dy[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                dst[(oy / 2) * w + ox / 2] += src[oy * ow + ox];
            }
        }
    }
    dx
}
