//! Dense kernels shared by the forward and backward passes.

use super::Real;

/// `c = alpha * op(a) * op(b) + beta * c` for row-major operands where
/// `op(a)` is `[m, k]` and `op(b)` is `[k, n]`. A transposed operand is
/// stored with its dimensions swapped.
#[allow(clippy::too_many_arguments)]
pub fn gemm<F: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: F,
    a: &[F],
    a_trans: bool,
    b: &[F],
    b_trans: bool,
    beta: F,
    c: &mut [F],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        F::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Gathers `cols[(c*K + j), t] = src[c, t*stride + j - padding]` (zero outside).
pub fn im2col_1d<F: Real>(
    src: &[F],
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
    cols: &mut [F],
) {
    debug_assert_eq!(cols.len(), channels * kernel * out_len);
    for c in 0..channels {
        let row_src = &src[c * len..(c + 1) * len];
        for j in 0..kernel {
            let dst = &mut cols[(c * kernel + j) * out_len..(c * kernel + j + 1) * out_len];
            for (t, d) in dst.iter_mut().enumerate() {
                let pos = (t * stride + j) as isize - padding as isize;
                *d = if pos >= 0 && (pos as usize) < len {
                    row_src[pos as usize]
                } else {
                    F::zero()
                };
            }
        }
    }
}

/// Adjoint of [`im2col_1d`]: scatter-adds columns back into `dst`.
pub fn col2im_1d<F: Real>(
    cols: &[F],
    channels: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_len: usize,
    dst: &mut [F],
) {
    for c in 0..channels {
        let row_dst = &mut dst[c * len..(c + 1) * len];
        for j in 0..kernel {
            let src = &cols[(c * kernel + j) * out_len..(c * kernel + j + 1) * out_len];
            for (t, &s) in src.iter().enumerate() {
                let pos = (t * stride + j) as isize - padding as isize;
                if pos >= 0 && (pos as usize) < len {
                    row_dst[pos as usize] += s;
                }
            }
        }
    }
}

/// Valid (unpadded, stride 1) 2-D patch gather: `[C*Kh*Kw, Ho*Wo]`.
pub fn im2col_2d<F: Real>(
    src: &[F],
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    cols: &mut [F],
) {
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    for c in 0..channels {
        for i in 0..kh {
            for j in 0..kw {
                let row = (c * kh + i) * kw + j;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for y in 0..ho {
                    let s = &src[c * h * w + (y + i) * w + j..][..wo];
                    dst[y * wo..(y + 1) * wo].copy_from_slice(s);
                }
            }
        }
    }
}

pub fn col2im_2d<F: Real>(
    cols: &[F],
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    dst: &mut [F],
) {
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    for c in 0..channels {
        for i in 0..kh {
            for j in 0..kw {
                let row = (c * kh + i) * kw + j;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for y in 0..ho {
                    let d = &mut dst[c * h * w + (y + i) * w + j..][..wo];
                    for (dv, &sv) in d.iter_mut().zip(&src[y * wo..(y + 1) * wo]) {
                        *dv += sv;
                    }
                }
            }
        }
    }
}
