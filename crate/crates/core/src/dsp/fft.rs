//! In-place iterative radix-2 FFT and FFT-based linear convolution.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Forward (`inverse == false`) or unnormalized inverse transform of a
/// power-of-two length complex buffer stored as separate real/imaginary parts.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n <= 1 {
        return;
    }

    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        let (w_re, w_im): (Vec<f64>, Vec<f64>) = (0..half)
            .map(|k| (libm::cos(step * k as f64), libm::sin(step * k as f64)))
            .unzip();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = start + k;
                let b = a + half;
                let tr = re[b] * w_re[k] - im[b] * w_im[k];
                let ti = re[b] * w_im[k] + im[b] * w_re[k];
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Power spectrum |X[k]|² for k in 0..=n_fft/2 of a real frame zero-padded to `n_fft`.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    assert!(frame.len() <= n_fft);
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    re[..frame.len()].copy_from_slice(frame);
    fft_in_place(&mut re, &mut im, false);
    (0..=n_fft / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
}

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut ar = vec![0.0; n];
    let mut ai = vec![0.0; n];
    let mut br = vec![0.0; n];
    let mut bi = vec![0.0; n];
    ar[..a.len()].copy_from_slice(a);
    br[..b.len()].copy_from_slice(b);
    fft_in_place(&mut ar, &mut ai, false);
    fft_in_place(&mut br, &mut bi, false);
    for k in 0..n {
        let r = ar[k] * br[k] - ai[k] * bi[k];
        let i = ar[k] * bi[k] + ai[k] * br[k];
        ar[k] = r;
        ai[k] = i;
    }
    fft_in_place(&mut ar, &mut ai, true);
    let scale = 1.0 / n as f64;
    ar.truncate(out_len);
    ar.iter_mut().for_each(|v| *v *= scale);
    ar
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold((0.0, 0.0), |(r, i), (t, &v)| {
                    let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                    (r + v * libm::cos(ang), i + v * libm::sin(ang))
                })
            })
            .unzip()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<f64> = (0..64).map(|i| libm::sin(i as f64 * 0.37) + (i % 5) as f64 * 0.1).collect();
        let mut re = x.clone();
        let mut im = vec![0.0; 64];
        fft_in_place(&mut re, &mut im, false);
        let (er, ei) = naive_dft(&x);
        for k in 0..64 {
            assert!((re[k] - er[k]).abs() < 1e-9);
            assert!((im[k] - ei[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let a: Vec<f64> = (0..37).map(|i| libm::sin(i as f64 * 0.3)).collect();
        let b = [0.5, -0.25, 0.0, 1.0];
        let got = convolve(&a, &b);
        assert_eq!(got.len(), 40);
        for (n, g) in got.iter().enumerate() {
            let mut want = 0.0;
            for (k, bk) in b.iter().enumerate() {
                if n >= k && n - k < a.len() {
                    want += a[n - k] * bk;
                }
            }
            assert!((g - want).abs() < 1e-10);
        }
    }
}
