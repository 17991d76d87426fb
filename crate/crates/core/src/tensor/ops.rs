//! Slice-level kernels shared by the tape's forward and backward passes.

/// `c += a · b` for row-major `a: m×k`, `b: k×n`.
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm(a, (k, 1), b, (n, 1), c, m, k, n);
}

/// `c += a · bᵀ` for `a: m×k`, `b: n×k`.
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm(a, (k, 1), b, (1, k), c, m, k, n);
}

/// `c += aᵀ · b` for `a: k×m`, `b: k×n`.
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    gemm(a, (1, m), b, (n, 1), c, m, k, n);
}

/// `c += A · B` where `A` (m×k) and `B` (k×n) are read through
/// (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), c: &mut [f64], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand sizes");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the asserts above bound every index reachable through the
    // given dimensions and strides, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits `shape` around `axis` into (outer, axis length, inner).
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Output shape and data of permuting `data` (with `shape`) by `axes`;
/// output axis `i` is input axis `axes[i]`.
pub(crate) fn permute(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..data.len() {
        out.push(data[src]);
        for d in (0..rank).rev() {
            idx[d] += 1;
            src += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            src -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

pub(crate) fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Reverses index order along the middle axis of an (outer, len, inner) view.
pub(crate) fn flip(data: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for t in 0..len {
            let src = (o * len + t) * inner;
            let dst = (o * len + (len - 1 - t)) * inner;
            out[dst..dst + inner].copy_from_slice(&data[src..src + inner]);
        }
    }
    out
}

/// Geometry of a dilated 1-D convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub t_in: usize,
    pub t_out: usize,
    /// Zeros conceptually prepended to the time axis.
    pub pad: usize,
}

impl ConvGeom {
    /// Input time index read by output step `t` through tap `j`, if inside
    /// the unpadded input.
    #[inline]
    fn shift(&self, j: usize) -> isize {
        (self.kernel - 1 - j) as isize * self.dilation as isize - self.pad as isize
    }
}

/// Unfolds `x: [B, C_in, T_in]` into `[C_in·K, B·T_out]`, row `c·K + j`
/// holding the input seen by tap `j` (zero where it falls in the padding).
fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols = g.batch * g.t_out;
    let mut out = vec![0.0; g.c_in * g.kernel * cols];
    for c in 0..g.c_in {
        for j in 0..g.kernel {
            let row = &mut out[(c * g.kernel + j) * cols..(c * g.kernel + j + 1) * cols];
            let (t0, t1, s) = tap_range(g, j);
            if t0 == t1 {
                continue;
            }
            for b in 0..g.batch {
                let xrow = &x[(b * g.c_in + c) * g.t_in..(b * g.c_in + c + 1) * g.t_in];
                let dst = &mut row[b * g.t_out..(b + 1) * g.t_out];
                let lo = (t0 as isize + s) as usize;
                dst[t0..t1].copy_from_slice(&xrow[lo..lo + (t1 - t0)]);
            }
        }
    }
    out
}

/// y[b,o,t] = bias[o] + Σ_{c,j} w[o,c,j] · x[b,c, t + (K−1)·d − d·j − pad].
pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols = g.batch * g.t_out;
    let xcol = im2col(x, g);
    let mut ycol = vec![0.0; g.c_out * cols];
    gemm_nn(w, &xcol, &mut ycol, g.c_out, g.c_in * g.kernel, cols);
    let mut y = vec![0.0; g.batch * g.c_out * g.t_out];
    for o in 0..g.c_out {
        for b in 0..g.batch {
            let src = &ycol[o * cols + b * g.t_out..o * cols + (b + 1) * g.t_out];
            let dst = &mut y[(b * g.c_out + o) * g.t_out..(b * g.c_out + o + 1) * g.t_out];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bias[o];
            }
        }
    }
    y
}

/// Valid output steps `[t0, t1)` for tap `j` and the input offset.
#[inline]
fn tap_range(g: &ConvGeom, j: usize) -> (usize, usize, isize) {
    let s = g.shift(j);
    let t0 = if s < 0 { (-s) as usize } else { 0 };
    let t1 = ((g.t_in as isize - s).max(0) as usize).min(g.t_out);
    (t0.min(t1), t1, s)
}

/// Accumulates input, weight, and bias gradients of [`conv1d_forward`].
pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    g: &ConvGeom,
    gx: Option<&mut [f64]>,
    gw: Option<&mut [f64]>,
    gb: Option<&mut [f64]>,
) {
    let cols = g.batch * g.t_out;
    // gy as [C_out, B·T_out].
    let mut gcol = vec![0.0; g.c_out * cols];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let src = &gy[(b * g.c_out + o) * g.t_out..(b * g.c_out + o + 1) * g.t_out];
            gcol[o * cols + b * g.t_out..o * cols + (b + 1) * g.t_out].copy_from_slice(src);
        }
    }
    if let Some(gb) = gb {
        for o in 0..g.c_out {
            gb[o] += gcol[o * cols..(o + 1) * cols].iter().sum::<f64>();
        }
    }
    if let Some(gw) = gw {
        let xcol = im2col(x, g);
        gemm_nt(&gcol, &xcol, gw, g.c_out, cols, g.c_in * g.kernel);
    }
    if let Some(gx) = gx {
        let rows = g.c_in * g.kernel;
        let mut gxcol = vec![0.0; rows * cols];
        gemm_tn(w, &gcol, &mut gxcol, rows, g.c_out, cols);
        for c in 0..g.c_in {
            for j in 0..g.kernel {
                let row = &gxcol[(c * g.kernel + j) * cols..(c * g.kernel + j + 1) * cols];
                let (t0, t1, s) = tap_range(g, j);
                if t0 == t1 {
                    continue;
                }
                for b in 0..g.batch {
                    let xrow = &mut gx[(b * g.c_in + c) * g.t_in..(b * g.c_in + c + 1) * g.t_in];
                    let src = &row[b * g.t_out + t0..b * g.t_out + t1];
                    let lo = (t0 as isize + s) as usize;
                    for (d, v) in xrow[lo..lo + (t1 - t0)].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_transposes_matrix() {
        let (shape, data) = permute(&[1., 2., 3., 4., 5., 6.], &[2, 3], &[1, 0]);
        assert_eq!(shape, vec![3, 2]);
        assert_eq!(data, vec![1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn permute_round_trips_through_inverse() {
        let shape = [2, 3, 4];
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let axes = [2, 0, 1];
        let (s1, d1) = permute(&data, &shape, &axes);
        let (s2, d2) = permute(&d1, &s1, &inverse_axes(&axes));
        assert_eq!(s2, shape);
        assert_eq!(d2, data);
    }

    #[test]
    fn gemm_variants_agree() {
        let a = [1., 2., 3., 4., 5., 6.]; // 2x3
        let b = [7., 8., 9., 10., 11., 12.]; // 3x2
        let mut c = [0.0; 4];
        gemm_nn(&a, &b, &mut c, 2, 3, 2);
        assert_eq!(c, [58., 64., 139., 154.]);
        // bᵀ stored explicitly
        let bt = [7., 9., 11., 8., 10., 12.];
        let mut c2 = [0.0; 4];
        gemm_nt(&a, &bt, &mut c2, 2, 3, 2);
        assert_eq!(c2, c);
        let at = [1., 4., 2., 5., 3., 6.];
        let mut c3 = [0.0; 4];
        gemm_tn(&at, &b, &mut c3, 2, 3, 2);
        assert_eq!(c3, c);
    }
}
